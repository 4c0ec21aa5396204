#include "fsrir/dataset.hpp"

#include "fsrir/config_json.hpp"

#include <cmath>
#include <set>

#include "fsrir/errors.hpp"
#include "fsrir/io.hpp"
#include "fsrir/rng.hpp"

namespace fsrir {

using json = nlohmann::ordered_json;

namespace {

json pose_to_json(const Pose& p) { return json::array({p.x, p.y, p.theta}); }

Pose pose_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3) throw DatasetError("pose must be [x, y, theta]");
    return Pose{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json room_spec_to_json(const RoomSpec& r) {
    return json{{"width", r.width},
                {"depth", r.depth},
                {"height", r.height},
                {"wall_absorption", r.wall_absorption},
                {"agent_height", r.agent_height},
                {"rng_seed", r.rng_seed}};
}

RoomSpec room_spec_from_json(const json& j) {
    RoomSpec r;
    r.width = j.at("width").get<double>();
    r.depth = j.at("depth").get<double>();
    r.height = j.at("height").get<double>();
    const auto& a = j.at("wall_absorption");
    if (!a.is_array() || a.size() != 6) throw DatasetError("wall_absorption must have 6 entries");
    for (size_t i = 0; i < 6; ++i) r.wall_absorption[i] = a[i].get<double>();
    r.agent_height = j.at("agent_height").get<double>();
    r.rng_seed = j.at("rng_seed").get<uint64_t>();
    return r;
}

std::string zero_pad(int value, int width) {
    std::string s = std::to_string(value);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

void write_rir_wav(const std::filesystem::path& path, const BinauralRir& rir) {
    WavData wav;
    wav.sample_rate = rir.sample_rate;
    wav.channels.resize(2);
    wav.channels[0].assign(rir.left.begin(), rir.left.end());
    wav.channels[1].assign(rir.right.begin(), rir.right.end());
    write_wav(path, wav);
}

}  // namespace

void RenderCfg::validate() const {
    if (n_seen_rooms < 1 || n_unseen_rooms < 0) {
        throw ConfigError("render: need at least one seen room");
    }
    if (contexts_per_room < 1 || queries_per_context < 1 || context_size < 1) {
        throw ConfigError("render: counts must be >= 1");
    }
    if (query_train_fraction < 0.0 || query_train_fraction > 1.0) {
        throw ConfigError("render: train fraction must lie in [0, 1]");
    }
    room_gen.validate();
}

DatasetManifest render_dataset(const RenderCfg& cfg, const SimCfg& sim,
                               const StftCfg& stft, uint64_t seed,
                               const std::filesystem::path& out_dir) {
    cfg.validate();
    sim.validate();
    stft.validate();
    std::filesystem::create_directories(out_dir);

    DatasetManifest manifest;
    manifest.seed = seed;
    manifest.stft = stft;
    manifest.sim = sim;
    manifest.n_rays = cfg.n_rays;
    manifest.fov = cfg.fov;
    manifest.min_wall_clearance = cfg.min_wall_clearance;
    manifest.ambient = cfg.ambient;
    manifest.root = out_dir;

    const int n_rooms = cfg.n_seen_rooms + cfg.n_unseen_rooms;
    for (int ri = 0; ri < n_rooms; ++ri) {
        RoomRecord room;
        room.id = "room_" + zero_pad(ri, 3);
        room.split = ri < cfg.n_seen_rooms ? "seen" : "unseen";
        room.spec = sample_room(cfg.room_gen, derive_seed(seed, {1, static_cast<uint64_t>(ri)}));
        const auto room_dir = out_dir / "wav" / room.id;
        std::filesystem::create_directories(room_dir);

        for (int ci = 0; ci < cfg.contexts_per_room; ++ci) {
            ContextRecord ctx;
            ctx.id = "ctx_" + zero_pad(ci, 3);
            const auto ctx_dir = room_dir / ctx.id;
            std::filesystem::create_directories(ctx_dir);
            const uint64_t ctx_seed =
                derive_seed(seed, {2, static_cast<uint64_t>(ri), static_cast<uint64_t>(ci)});

            const auto poses =
                sample_poses(room.spec, cfg.context_size, cfg.min_wall_clearance, ctx_seed);
            for (int oi = 0; oi < cfg.context_size; ++oi) {
                ObservationRecord obs;
                obs.pose = poses[static_cast<size_t>(oi)];
                obs.depth = depth_scan(room.spec, obs.pose, cfg.n_rays, cfg.fov).ranges;
                BinauralRir echo = simulate_echo(room.spec, obs.pose, sim);
                if (cfg.ambient) {
                    echo = add_ambient_noise(
                        echo, cfg.ambient->kind, cfg.ambient->snr_db,
                        derive_seed(ctx_seed, {3, static_cast<uint64_t>(oi)}));
                }
                obs.echo_path = "wav/" + room.id + "/" + ctx.id + "/echo_" +
                                zero_pad(oi, 3) + ".wav";
                write_rir_wav(manifest.resolve(obs.echo_path), echo);
                ctx.observations.push_back(std::move(obs));
            }

            Rng qrng(derive_seed(ctx_seed, {4}));
            const int n_train = static_cast<int>(
                std::floor(cfg.query_train_fraction * cfg.queries_per_context));
            for (int qi = 0; qi < cfg.queries_per_context; ++qi) {
                QueryRecord q;
                q.id = "q_" + zero_pad(qi, 4);
                const double c = cfg.min_wall_clearance;
                q.source = {qrng.uniform(c, room.spec.width - c),
                            qrng.uniform(c, room.spec.depth - c)};
                q.receiver = Pose{qrng.uniform(c, room.spec.width - c),
                                  qrng.uniform(c, room.spec.depth - c),
                                  qrng.uniform(0.0, 2.0 * 3.14159265358979323846)};
                q.split = room.split == "unseen" ? "test"
                          : (qi < n_train ? "train" : "test");
                const BinauralRir rir =
                    simulate_rir(room.spec, q.source, q.receiver, sim);
                q.rir_path = "wav/" + room.id + "/" + ctx.id + "/" + q.id + ".wav";
                write_rir_wav(manifest.resolve(q.rir_path), rir);
                ctx.queries.push_back(std::move(q));
            }
            room.contexts.push_back(std::move(ctx));
        }
        manifest.rooms.push_back(std::move(room));
    }
    return manifest;
}

void save_manifest(const DatasetManifest& manifest,
                   const std::filesystem::path& path) {
    json j;
    j["format"] = "fsrir-dataset-v1";
    j["seed"] = manifest.seed;
    j["stft"] = stft_cfg_to_json(manifest.stft);
    j["sim"] = sim_cfg_to_json(manifest.sim);
    j["scan"] = json{{"n_rays", manifest.n_rays}, {"fov", manifest.fov}};
    j["min_wall_clearance"] = manifest.min_wall_clearance;
    if (manifest.ambient) {
        j["ambient"] = json{
            {"kind", manifest.ambient->kind == NoiseKind::white ? "white" : "band_burst"},
            {"snr_db", manifest.ambient->snr_db}};
    } else {
        j["ambient"] = nullptr;
    }
    json rooms = json::array();
    for (const RoomRecord& room : manifest.rooms) {
        json jr;
        jr["id"] = room.id;
        jr["split"] = room.split;
        jr["spec"] = room_spec_to_json(room.spec);
        json contexts = json::array();
        for (const ContextRecord& ctx : room.contexts) {
            json jc;
            jc["id"] = ctx.id;
            json observations = json::array();
            for (const ObservationRecord& obs : ctx.observations) {
                observations.push_back(json{{"pose", pose_to_json(obs.pose)},
                                            {"depth", obs.depth},
                                            {"echo", obs.echo_path}});
            }
            jc["observations"] = std::move(observations);
            json queries = json::array();
            for (const QueryRecord& q : ctx.queries) {
                queries.push_back(json{{"id", q.id},
                                       {"split", q.split},
                                       {"source", q.source},
                                       {"receiver", pose_to_json(q.receiver)},
                                       {"rir", q.rir_path}});
            }
            jc["queries"] = std::move(queries);
            contexts.push_back(std::move(jc));
        }
        jr["contexts"] = std::move(contexts);
        rooms.push_back(std::move(jr));
    }
    j["rooms"] = std::move(rooms);
    write_text_file(path, j.dump(2) + "\n");
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw DatasetError("manifest parse failure at " + path.string() + ": " + e.what());
    }
    if (j.value("format", "") != "fsrir-dataset-v1") {
        throw DatasetError("unknown manifest format in " + path.string());
    }
    DatasetManifest manifest;
    manifest.root = path.parent_path();
    manifest.seed = j.at("seed").get<uint64_t>();
    manifest.stft = stft_cfg_from_json(j.at("stft"));
    manifest.sim = sim_cfg_from_json(j.at("sim"));
    manifest.n_rays = j.at("scan").at("n_rays").get<int>();
    manifest.fov = j.at("scan").at("fov").get<double>();
    manifest.min_wall_clearance = j.at("min_wall_clearance").get<double>();
    if (!j.at("ambient").is_null()) {
        AmbientNoiseCfg ambient;
        ambient.kind = j.at("ambient").at("kind").get<std::string>() == "white"
                           ? NoiseKind::white
                           : NoiseKind::band_burst;
        ambient.snr_db = j.at("ambient").at("snr_db").get<double>();
        manifest.ambient = ambient;
    }
    for (const json& jr : j.at("rooms")) {
        RoomRecord room;
        room.id = jr.at("id").get<std::string>();
        room.split = jr.at("split").get<std::string>();
        room.spec = room_spec_from_json(jr.at("spec"));
        for (const json& jc : jr.at("contexts")) {
            ContextRecord ctx;
            ctx.id = jc.at("id").get<std::string>();
            for (const json& jo : jc.at("observations")) {
                ObservationRecord obs;
                obs.pose = pose_from_json(jo.at("pose"));
                obs.depth = jo.at("depth").get<std::vector<double>>();
                obs.echo_path = jo.at("echo").get<std::string>();
                ctx.observations.push_back(std::move(obs));
            }
            for (const json& jq : jc.at("queries")) {
                QueryRecord q;
                q.id = jq.at("id").get<std::string>();
                q.split = jq.at("split").get<std::string>();
                q.source = jq.at("source").get<std::array<double, 2>>();
                q.receiver = pose_from_json(jq.at("receiver"));
                q.rir_path = jq.at("rir").get<std::string>();
                ctx.queries.push_back(std::move(q));
            }
            room.contexts.push_back(std::move(ctx));
        }
        manifest.rooms.push_back(std::move(room));
    }
    return manifest;
}

void validate_manifest(const DatasetManifest& manifest) {
    std::set<std::string> room_ids;
    std::set<std::string> seen_rooms, unseen_rooms;
    for (const RoomRecord& room : manifest.rooms) {
        if (!room_ids.insert(room.id).second) {
            throw DatasetError("duplicate room id " + room.id);
        }
        (room.split == "seen" ? seen_rooms : unseen_rooms).insert(room.id);
        room.spec.validate();
        for (const ContextRecord& ctx : room.contexts) {
            for (const ObservationRecord& obs : ctx.observations) {
                if (!std::filesystem::exists(manifest.resolve(obs.echo_path))) {
                    throw DatasetError("missing echo file " + obs.echo_path);
                }
            }
            std::set<std::string> qids;
            for (const QueryRecord& q : ctx.queries) {
                if (!qids.insert(q.id).second) {
                    throw DatasetError("duplicate query id " + q.id + " in " + ctx.id);
                }
                if (q.split != "train" && q.split != "test") {
                    throw DatasetError("bad query split " + q.split);
                }
                if (!std::filesystem::exists(manifest.resolve(q.rir_path))) {
                    throw DatasetError("missing rir file " + q.rir_path);
                }
            }
        }
    }
    for (const std::string& id : seen_rooms) {
        if (unseen_rooms.count(id)) throw DatasetError("room in both splits: " + id);
    }
}

BinauralRir load_rir(const DatasetManifest& manifest, const std::string& rel_path) {
    const WavData wav = read_wav(manifest.resolve(rel_path));
    if (wav.channels.size() != 2) {
        throw DatasetError("expected 2-channel RIR wav: " + rel_path);
    }
    BinauralRir rir;
    rir.sample_rate = wav.sample_rate;
    rir.left.assign(wav.channels[0].begin(), wav.channels[0].end());
    rir.right.assign(wav.channels[1].begin(), wav.channels[1].end());
    return rir;
}

std::vector<Observation> load_observations(const DatasetManifest& manifest,
                                           const ContextRecord& context) {
    std::vector<Observation> observations;
    observations.reserve(context.observations.size());
    for (const ObservationRecord& rec : context.observations) {
        Observation obs;
        obs.pose = rec.pose;
        obs.depth.ranges = rec.depth;
        obs.depth.fov = manifest.fov;
        obs.echo = load_rir(manifest, rec.echo_path);
        observations.push_back(std::move(obs));
    }
    return observations;
}

}  // namespace fsrir
