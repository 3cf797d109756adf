#pragma once

#include <cstdint>
#include <vector>

namespace pauselab {

/// Boolean attention-allow matrix: rows are query positions, columns are key
/// positions. allow(i, j) == true means query i may attend to key j.
struct AttentionMask {
    int n_query = 0;
    int n_key = 0;
    std::vector<uint8_t> allow; // row-major n_query x n_key

    bool at(int i, int j) const { return allow[static_cast<size_t>(i) * n_key + j] != 0; }
    void set(int i, int j, bool v) { allow[static_cast<size_t>(i) * n_key + j] = v ? 1 : 0; }

    /// Every row must keep at least one allowed key; throws MaskError otherwise.
    void validate() const;
};

/// Lower-triangular mask: allow(i, j) iff j <= i. K must be >= 1.
AttentionMask build_causal_mask(int k);

/// Bidirectional over the first `prefix_len` positions, causal elsewhere:
/// allow(i, j) iff j < prefix_len or j <= i. Requires 0 <= prefix_len <= k.
AttentionMask build_prefix_mask(int prefix_len, int k);

} // namespace pauselab
