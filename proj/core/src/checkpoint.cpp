#include "pauselab/checkpoint.hpp"

namespace pauselab {

CheckpointMeta read_checkpoint_meta(const std::string& path) {
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
    return ckpt_detail::parse_meta(block);
}

} // namespace pauselab
