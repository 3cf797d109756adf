#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pauselab/errors.hpp"
#include "pauselab/model.hpp"

namespace pauselab {

/// Checkpoint file layout (all integers little-endian):
///   magic "PAUSECKPT" (9 bytes)
///   u32 format version
///   u32 config block length, then that many UTF-8 bytes ("key = value" lines
///     carrying the model config, vocab hash, train-config digest and step)
///   repeated tensor records in a fixed parameter order:
///     u32 name length, name bytes, u32 rank, u32 extents..., f32 data
/// Tensors are stored as 32-bit floats (the training precision), so a save/
/// load round trip of f32 parameters is bit-exact.
struct CheckpointMeta {
    ModelConfig config;
    uint64_t vocab_hash = 0;
    std::string train_digest; // hex digest of the resolved training config
    long long step = 0;
};

namespace ckpt_detail {

constexpr char kMagic[9] = {'P', 'A', 'U', 'S', 'E', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

inline void put_u32(std::ostream& out, uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

inline uint32_t get_u32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw CorruptionError("checkpoint truncated while reading " + what);
    }
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline std::string serialize_meta(const CheckpointMeta& m) {
    std::ostringstream os;
    const ModelConfig& c = m.config;
    os << "model.n_layers = " << c.n_layers << "\n";
    os << "model.n_heads = " << c.n_heads << "\n";
    os << "model.d_model = " << c.d_model << "\n";
    os << "model.d_attn = " << c.d_attn << "\n";
    os << "model.d_ff = " << c.d_ff << "\n";
    os << "model.max_positions = " << c.max_positions << "\n";
    os << "model.vocab_size = " << c.vocab_size << "\n";
    os << "model.activation = " << activation_name(c.activation) << "\n";
    os << "model.tied_unembed = " << (c.tied_unembed ? "true" : "false") << "\n";
    os << "vocab_hash = " << m.vocab_hash << "\n";
    os << "train_digest = " << m.train_digest << "\n";
    os << "step = " << m.step << "\n";
    return os.str();
}

inline CheckpointMeta parse_meta(const std::string& text) {
    CheckpointMeta m;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const size_t eq = line.find(" = ");
        if (eq == std::string::npos) {
            continue;
        }
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 3);
        ModelConfig& c = m.config;
        if (key == "model.n_layers") {
            c.n_layers = std::stoi(val);
        } else if (key == "model.n_heads") {
            c.n_heads = std::stoi(val);
        } else if (key == "model.d_model") {
            c.d_model = std::stoi(val);
        } else if (key == "model.d_attn") {
            c.d_attn = std::stoi(val);
        } else if (key == "model.d_ff") {
            c.d_ff = std::stoi(val);
        } else if (key == "model.max_positions") {
            c.max_positions = std::stoi(val);
        } else if (key == "model.vocab_size") {
            c.vocab_size = std::stoi(val);
        } else if (key == "model.activation") {
            c.activation = val == "relu" ? Activation::relu : Activation::gelu;
        } else if (key == "model.tied_unembed") {
            c.tied_unembed = val == "true";
        } else if (key == "vocab_hash") {
            m.vocab_hash = std::stoull(val);
        } else if (key == "train_digest") {
            m.train_digest = val;
        } else if (key == "step") {
            m.step = std::stoll(val);
        }
    }
    return m;
}

} // namespace ckpt_detail

template <typename T>
void save_checkpoint(const std::string& path, ModelParams<T>& params, const CheckpointMeta& meta) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot open " + path + " for writing");
    }
    out.write(ckpt_detail::kMagic, sizeof(ckpt_detail::kMagic));
    ckpt_detail::put_u32(out, ckpt_detail::kVersion);
    CheckpointMeta m = meta;
    m.config = params.config;
    const std::string block = ckpt_detail::serialize_meta(m);
    ckpt_detail::put_u32(out, static_cast<uint32_t>(block.size()));
    out.write(block.data(), static_cast<std::streamsize>(block.size()));

    params.for_each_param([&](const std::string& name, Tensor<T>& t) {
        ckpt_detail::put_u32(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        ckpt_detail::put_u32(out, static_cast<uint32_t>(t.shape.size()));
        for (int e : t.shape) {
            ckpt_detail::put_u32(out, static_cast<uint32_t>(e));
        }
        for (T x : t.data) {
            const float f = static_cast<float>(x);
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            ckpt_detail::put_u32(out, bits);
        }
    });
    if (!out) {
        throw FormatError("write failure on " + path);
    }
}

/// Reads only the header block (cheap config/hash inspection).
CheckpointMeta read_checkpoint_meta(const std::string& path);

template <typename T>
struct LoadedCheckpoint {
    ModelParams<T> params;
    CheckpointMeta meta;
};

/// Loads a checkpoint. When `expected` is given, its shape fields must match
/// the stored config (CompatibilityError otherwise); same for the vocab hash
/// when nonzero.
template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path,
                                    const ModelConfig* expected = nullptr,
                                    uint64_t expected_vocab_hash = 0) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open checkpoint " + path);
    }
    char magic[sizeof(ckpt_detail::kMagic)];
    if (!in.read(magic, sizeof(magic))) {
        throw CorruptionError("checkpoint shorter than its magic: " + path);
    }
    if (std::memcmp(magic, ckpt_detail::kMagic, sizeof(magic)) != 0) {
        throw FormatError("bad checkpoint magic in " + path);
    }
    const uint32_t version = ckpt_detail::get_u32(in, "version");
    if (version != ckpt_detail::kVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    const uint32_t block_len = ckpt_detail::get_u32(in, "config block length");
    std::string block(block_len, '\0');
    if (!in.read(block.data(), block_len)) {
        throw CorruptionError("checkpoint truncated inside config block: " + path);
    }

    LoadedCheckpoint<T> loaded;
    loaded.meta = ckpt_detail::parse_meta(block);
    if (expected != nullptr && !expected->same_shape(loaded.meta.config)) {
        throw CompatibilityError("checkpoint " + path + " was written for a different model shape");
    }
    if (expected_vocab_hash != 0 && loaded.meta.vocab_hash != 0 &&
        loaded.meta.vocab_hash != expected_vocab_hash) {
        throw CompatibilityError("checkpoint " + path + " vocab hash mismatch");
    }

    // Build the parameter skeleton, then fill records in the same fixed order.
    loaded.params = ModelParams<T>::init(loaded.meta.config, 0);
    loaded.params.for_each_param([&](const std::string& name, Tensor<T>& t) {
        const uint32_t name_len = ckpt_detail::get_u32(in, "record name length");
        std::string rec_name(name_len, '\0');
        if (!in.read(rec_name.data(), name_len)) {
            throw CorruptionError("checkpoint truncated inside record name: " + path);
        }
        if (rec_name != name) {
            throw FormatError("checkpoint record order mismatch: expected '" + name + "', found '" +
                              rec_name + "'");
        }
        const uint32_t rank = ckpt_detail::get_u32(in, "record rank");
        if (rank != t.shape.size()) {
            throw CompatibilityError("checkpoint tensor '" + name + "' rank mismatch");
        }
        for (size_t d = 0; d < rank; ++d) {
            const uint32_t e = ckpt_detail::get_u32(in, "record extent");
            if (static_cast<int>(e) != t.shape[d]) {
                throw CompatibilityError("checkpoint tensor '" + name + "' extent mismatch");
            }
        }
        for (size_t i = 0; i < t.data.size(); ++i) {
            const uint32_t bits = ckpt_detail::get_u32(in, "tensor data");
            float f;
            std::memcpy(&f, &bits, 4);
            t.data[i] = static_cast<T>(f);
        }
    });
    return loaded;
}

} // namespace pauselab
