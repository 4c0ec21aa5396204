#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fsrir/dsp.hpp"
#include "fsrir/geometry.hpp"
#include "fsrir/ism.hpp"
#include "fsrir/model.hpp"

namespace fsrir {

struct ObservationRecord {
    Pose pose;
    std::vector<double> depth;  // ray ranges, inlined in the manifest
    std::string echo_path;      // WAV relative to the manifest root
};

struct QueryRecord {
    std::string id;
    std::string split;  // "train" | "test"
    std::array<double, 2> source{};
    Pose receiver;
    std::string rir_path;
};

struct ContextRecord {
    std::string id;
    std::vector<ObservationRecord> observations;
    std::vector<QueryRecord> queries;
};

struct RoomRecord {
    std::string id;
    std::string split;  // "seen" | "unseen"
    RoomSpec spec;
    std::vector<ContextRecord> contexts;
};

struct AmbientNoiseCfg {
    NoiseKind kind = NoiseKind::white;
    double snr_db = 20.0;
};

struct DatasetManifest {
    uint64_t seed = 0;
    StftCfg stft;
    SimCfg sim;
    int n_rays = 32;
    double fov = 1.5707963267948966;
    double min_wall_clearance = 0.3;
    std::optional<AmbientNoiseCfg> ambient;
    std::vector<RoomRecord> rooms;
    std::filesystem::path root;  // directory the relative paths resolve against

    std::filesystem::path resolve(const std::string& rel) const { return root / rel; }
};

struct RenderCfg {
    int n_seen_rooms = 6;
    int n_unseen_rooms = 2;
    int contexts_per_room = 4;
    int queries_per_context = 50;
    int context_size = 20;  // observations per context (the paper's N)
    double query_train_fraction = 0.8;
    int n_rays = 32;
    double fov = 1.5707963267948966;
    double min_wall_clearance = 0.3;
    std::optional<AmbientNoiseCfg> ambient;  // applied to echoes only
    RoomGenCfg room_gen;

    void validate() const;
};

// Simulates every context (poses, depth scans, echoes) and query RIR and
// writes WAVs plus the manifest JSON under out_dir. Deterministic from
// the seed.
DatasetManifest render_dataset(const RenderCfg& cfg, const SimCfg& sim,
                               const StftCfg& stft, uint64_t seed,
                               const std::filesystem::path& out_dir);

void save_manifest(const DatasetManifest& manifest,
                   const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Ensures files exist, splits are disjoint, and ids are unique.
void validate_manifest(const DatasetManifest& manifest);

BinauralRir load_rir(const DatasetManifest& manifest, const std::string& rel_path);

// Materializes the observation triples of one context.
std::vector<Observation> load_observations(const DatasetManifest& manifest,
                                           const ContextRecord& context);

}  // namespace fsrir
