#include "fsrir/io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fsrir/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

namespace fsrir {

namespace {

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DatasetError("unexpected end of stream");
    return v;
}

constexpr std::array<char, 8> kTensorMagic{'F', 'S', 'T', 'E', 'N', 'S', 'R', '1'};
constexpr std::array<char, 8> kCkptMagic{'F', 'S', 'C', 'K', 'P', 'T', '0', '1'};

}  // namespace

// --- WAV -------------------------------------------------------------

void write_wav(const std::filesystem::path& path, const WavData& wav) {
    if (wav.channels.empty()) throw ConfigError("write_wav: no channels");
    const size_t len = wav.channels[0].size();
    for (const auto& ch : wav.channels) {
        if (ch.size() != len) throw ShapeError("write_wav: channel length mismatch");
    }
    const uint16_t n_ch = static_cast<uint16_t>(wav.channels.size());
    const uint32_t sr = static_cast<uint32_t>(wav.sample_rate);
    const uint32_t data_bytes = static_cast<uint32_t>(len * n_ch * 4);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DatasetError("write_wav: cannot open " + path.string());
    out.write("RIFF", 4);
    put<uint32_t>(out, 36 + data_bytes);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put<uint32_t>(out, 16);
    put<uint16_t>(out, 3);  // IEEE float
    put<uint16_t>(out, n_ch);
    put<uint32_t>(out, sr);
    put<uint32_t>(out, sr * n_ch * 4);
    put<uint16_t>(out, static_cast<uint16_t>(n_ch * 4));
    put<uint16_t>(out, 32);
    out.write("data", 4);
    put<uint32_t>(out, data_bytes);
    for (size_t i = 0; i < len; ++i) {
        for (uint16_t c = 0; c < n_ch; ++c) {
            put<float>(out, wav.channels[c][i]);
        }
    }
    if (!out) throw DatasetError("write_wav: write failed for " + path.string());
}

WavData read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("read_wav: cannot open " + path.string());
    char tag[5] = {0};
    in.read(tag, 4);
    if (std::strncmp(tag, "RIFF", 4) != 0) throw DatasetError("read_wav: not a RIFF file: " + path.string());
    get<uint32_t>(in);
    in.read(tag, 4);
    if (std::strncmp(tag, "WAVE", 4) != 0) throw DatasetError("read_wav: not a WAVE file: " + path.string());

    WavData wav;
    uint16_t n_ch = 0;
    uint16_t format = 0;
    while (in.read(tag, 4)) {
        const uint32_t chunk_size = get<uint32_t>(in);
        if (std::strncmp(tag, "fmt ", 4) == 0) {
            format = get<uint16_t>(in);
            n_ch = get<uint16_t>(in);
            wav.sample_rate = static_cast<int>(get<uint32_t>(in));
            get<uint32_t>(in);
            get<uint16_t>(in);
            const uint16_t bits = get<uint16_t>(in);
            if (format != 3 || bits != 32) {
                throw DatasetError("read_wav: expected 32-bit float WAV: " + path.string());
            }
            if (chunk_size > 16) in.ignore(chunk_size - 16);
        } else if (std::strncmp(tag, "data", 4) == 0) {
            if (n_ch == 0) throw DatasetError("read_wav: data before fmt: " + path.string());
            const size_t n_frames = chunk_size / (4u * n_ch);
            wav.channels.assign(n_ch, std::vector<float>(n_frames));
            for (size_t i = 0; i < n_frames; ++i) {
                for (uint16_t c = 0; c < n_ch; ++c) {
                    wav.channels[c][i] = get<float>(in);
                }
            }
            return wav;
        } else {
            in.ignore(chunk_size);
        }
    }
    throw DatasetError("read_wav: no data chunk in " + path.string());
}

// --- Tensor container --------------------------------------------------

size_t TensorBlob::numel() const {
    size_t n = 1;
    for (uint32_t d : dims) n *= d;
    return dims.empty() ? 0 : n;
}

void write_tensor_blob(std::ostream& out, const TensorBlob& blob) {
    out.write(kTensorMagic.data(), 8);
    put<uint32_t>(out, static_cast<uint32_t>(blob.dtype));
    put<uint32_t>(out, static_cast<uint32_t>(blob.dims.size()));
    for (uint32_t d : blob.dims) put<uint32_t>(out, d);
    const size_t n = blob.numel();
    if (blob.dtype == 0) {
        if (blob.f32.size() != n) throw ShapeError("tensor blob f32 payload size mismatch");
        out.write(reinterpret_cast<const char*>(blob.f32.data()),
                  static_cast<std::streamsize>(n * sizeof(float)));
    } else if (blob.dtype == 1) {
        if (blob.f64.size() != n) throw ShapeError("tensor blob f64 payload size mismatch");
        out.write(reinterpret_cast<const char*>(blob.f64.data()),
                  static_cast<std::streamsize>(n * sizeof(double)));
    } else {
        throw ConfigError("unknown tensor dtype code");
    }
}

TensorBlob read_tensor_blob(std::istream& in) {
    std::array<char, 8> magic{};
    in.read(magic.data(), 8);
    if (!in || magic != kTensorMagic) throw DatasetError("bad tensor magic");
    TensorBlob blob;
    blob.dtype = static_cast<int>(get<uint32_t>(in));
    const uint32_t rank = get<uint32_t>(in);
    if (rank > 8) throw DatasetError("tensor rank out of range");
    blob.dims.resize(rank);
    for (uint32_t i = 0; i < rank; ++i) blob.dims[i] = get<uint32_t>(in);
    const size_t n = blob.numel();
    if (blob.dtype == 0) {
        blob.f32.resize(n);
        in.read(reinterpret_cast<char*>(blob.f32.data()),
                static_cast<std::streamsize>(n * sizeof(float)));
    } else if (blob.dtype == 1) {
        blob.f64.resize(n);
        in.read(reinterpret_cast<char*>(blob.f64.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
    } else {
        throw DatasetError("unknown tensor dtype code");
    }
    if (!in) throw DatasetError("truncated tensor payload");
    return blob;
}

void save_tensor(const std::filesystem::path& path, const TensorBlob& blob) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DatasetError("save_tensor: cannot open " + path.string());
    write_tensor_blob(out, blob);
}

TensorBlob load_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("load_tensor: cannot open " + path.string());
    return read_tensor_blob(in);
}

void save_checkpoint(const std::filesystem::path& path,
                     const NamedTensors& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DatasetError("save_checkpoint: cannot open " + path.string());
    out.write(kCkptMagic.data(), 8);
    put<uint32_t>(out, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, blob] : tensors) {
        put<uint32_t>(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_tensor_blob(out, blob);
    }
    if (!out) throw DatasetError("save_checkpoint: write failed for " + path.string());
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("load_checkpoint: cannot open " + path.string());
    std::array<char, 8> magic{};
    in.read(magic.data(), 8);
    if (!in || magic != kCkptMagic) {
        throw DatasetError("load_checkpoint: bad magic in " + path.string());
    }
    const uint32_t count = get<uint32_t>(in);
    NamedTensors tensors;
    tensors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t len = get<uint32_t>(in);
        if (len > 4096) throw DatasetError("load_checkpoint: tensor name too long");
        std::string name(len, '\0');
        in.read(name.data(), len);
        if (!in) throw DatasetError("load_checkpoint: truncated name");
        tensors.emplace_back(std::move(name), read_tensor_blob(in));
    }
    return tensors;
}

uint64_t file_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("file_hash: cannot open " + path.string());
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (!in) break;
    }
    return h;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DatasetError("cannot open " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw DatasetError("write failed for " + path.string());
}

}  // namespace fsrir
