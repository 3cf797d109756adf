#include "pauselab/mask.hpp"

#include <string>

#include "pauselab/errors.hpp"

namespace pauselab {

void AttentionMask::validate() const {
    for (int i = 0; i < n_query; ++i) {
        bool any = false;
        for (int j = 0; j < n_key; ++j) {
            if (at(i, j)) {
                any = true;
                break;
            }
        }
        if (!any) {
            throw MaskError("attention mask row " + std::to_string(i) + " allows no keys");
        }
    }
}

AttentionMask build_causal_mask(int k) {
    if (k < 1) {
        throw MaskError("causal mask needs at least one position, got K=" + std::to_string(k));
    }
    AttentionMask m;
    m.n_query = k;
    m.n_key = k;
    m.allow.assign(static_cast<size_t>(k) * k, 0);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j <= i; ++j) {
            m.set(i, j, true);
        }
    }
    return m;
}

AttentionMask build_prefix_mask(int prefix_len, int k) {
    if (k < 1) {
        throw MaskError("prefix mask needs at least one position, got K=" + std::to_string(k));
    }
    if (prefix_len < 0 || prefix_len > k) {
        throw RangeError("prefix length " + std::to_string(prefix_len) +
                         " outside [0, " + std::to_string(k) + "]");
    }
    AttentionMask m;
    m.n_query = k;
    m.n_key = k;
    m.allow.assign(static_cast<size_t>(k) * k, 0);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            if (j < prefix_len || j <= i) {
                m.set(i, j, true);
            }
        }
    }
    return m;
}

} // namespace pauselab
