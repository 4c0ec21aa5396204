#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace fsrir {

// --- WAV -------------------------------------------------------------
// RIRs are stored as 2-channel IEEE-float WAV (format tag 3).

struct WavData {
    std::vector<std::vector<float>> channels;
    int sample_rate = 0;
};

void write_wav(const std::filesystem::path& path, const WavData& wav);
WavData read_wav(const std::filesystem::path& path);

// --- Flat binary tensor container -------------------------------------
// One tensor: 16-byte header (8-byte magic "FSTENSR1", u32 dtype code,
// u32 rank), then rank u32 dims, then the little-endian payload.
// dtype 0 = f32, 1 = f64.

struct TensorBlob {
    std::vector<uint32_t> dims;
    std::vector<float> f32;    // used when dtype == 0
    std::vector<double> f64;   // used when dtype == 1
    int dtype = 0;

    size_t numel() const;
};

void write_tensor_blob(std::ostream& out, const TensorBlob& blob);
TensorBlob read_tensor_blob(std::istream& in);

void save_tensor(const std::filesystem::path& path, const TensorBlob& blob);
TensorBlob load_tensor(const std::filesystem::path& path);

// --- Named tensor checkpoints ------------------------------------------
// A checkpoint is a sequence of named tensor blobs: 8-byte magic
// "FSCKPT01", u32 count, then per entry a u32 name length, the name
// bytes, and a tensor blob. Hyperparameters live in a JSON sidecar next
// to the file.

using NamedTensors = std::vector<std::pair<std::string, TensorBlob>>;

void save_checkpoint(const std::filesystem::path& path,
                     const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::filesystem::path& path);

// FNV-1a over a file's bytes; used to stamp eval reports with the
// checkpoint they came from.
uint64_t file_hash(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path,
                     const std::string& text);

}  // namespace fsrir
