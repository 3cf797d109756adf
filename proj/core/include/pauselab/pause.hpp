#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pauselab/graph.hpp"
#include "pauselab/mask.hpp"
#include "pauselab/model.hpp"

namespace pauselab {

enum class Placement : uint8_t { append, prepend };

const char* placement_name(Placement p);
Placement parse_placement(const std::string& s);

/// A token sequence with delay tokens inserted. Positions are 0-indexed:
/// ignore_set = { k : tokens[k+1] == pause_id }, i.e. the positions whose
/// next-token prediction target is a pause and whose loss term is skipped.
struct PausedSequence {
    std::vector<int> tokens;
    std::vector<int> ignore_set; // sorted, strictly increasing
    int n_original = 0;
    int n_pauses = 0;
};

/// Recomputes the ignore set for a given token vector.
std::vector<int> compute_ignore_set(const std::vector<int>& tokens, int pause_id);

/// Removes every pause id, preserving order.
std::vector<int> strip_pauses(const std::vector<int>& tokens, int pause_id);

/// Inserts m_pt pauses at gap indices drawn i.i.d. uniform over the N+1
/// inter-token gaps (adjacent pauses allowed), deterministically per seed.
/// Throws ContaminationError if the input already contains pause_id.
PausedSequence random_insert(const std::vector<int>& tokens, int m_pt, int pause_id, uint64_t seed);

struct InjectConfig {
    double fraction = 0.1; // in [0, 1)
    int window = 256;
    bool trim = true; // cut the injected sequence back to `window` (tail dropped)
    int pause_id = -1;
    uint64_t seed = 0;
};

/// Splits `stream` into fixed windows and pause-injects each one with
/// m_pt = round(fraction * window). Only complete windows are emitted.
std::vector<PausedSequence> inject_corpus(std::span<const uint16_t> stream, const InjectConfig& cfg);

/// Single-window form used by the streaming trainer; window_index picks the
/// per-window insertion seed.
PausedSequence inject_window(std::span<const uint16_t> window, const InjectConfig& cfg,
                             uint64_t window_index);

/// Inspection format: comma-separated token ids with pauses rendered as the
/// literal string "<pause>", a tab, then comma-separated ignore positions.
std::string paused_sequence_record(const PausedSequence& seq, int pause_id);
void write_paused_sequences(const std::string& path, const std::vector<PausedSequence>& seqs,
                            int pause_id);

/// A downstream example: clean prefix and target (no pauses in either; the
/// target conventionally ends with <eos> so generation learns to stop).
struct FinetuneExample {
    std::vector<int> prefix;
    std::vector<int> target;
};

/// [p, pause x m] (append) or [pause x m, p] (prepend); prefix_len is
/// p.size() + m in both placements.
struct DelayedPrefix {
    std::vector<int> tokens;
    int prefix_len = 0;
};
DelayedPrefix append_pauses(const std::vector<int>& prefix, int m, int pause_id,
                            Placement placement);

// ---------------------------------------------------------------------------
// Losses. Both return the loss sum plus the term count so callers can report
// the sum and optimize the per-predicted-token mean.
// ---------------------------------------------------------------------------

template <typename T>
struct LossNodes {
    NodeId sum = -1; // scalar node (value 0 constant when n_terms == 0)
    int n_terms = 0;
    bool zero_term_warning = false;
};

/// Next-token cross-entropy summed over every position not in the ignore set,
/// under a causal mask. A sequence whose every position is ignored yields a
/// zero loss with the warning flag set.
template <typename T>
LossNodes<T> pause_pretrain_loss(const ModelParams<T>& model, Graph<T>& g,
                                 const PausedSequence& seq) {
    const int len = static_cast<int>(seq.tokens.size());
    if (len < 2) {
        throw LengthError("pretraining sequence needs at least 2 tokens");
    }
    const AttentionMask mask = build_causal_mask(len);
    const NodeId logits = model.forward(g, seq.tokens, mask);

    std::vector<int> targets(static_cast<size_t>(len), 0);
    std::vector<uint8_t> active(static_cast<size_t>(len), 0);
    for (int k = 0; k + 1 < len; ++k) {
        targets[k] = seq.tokens[k + 1];
        active[k] = 1;
    }
    for (int k : seq.ignore_set) {
        if (k >= 0 && k < len) {
            active[k] = 0;
        }
    }
    LossNodes<T> out;
    for (uint8_t a : active) {
        out.n_terms += a;
    }
    if (out.n_terms == 0) {
        out.zero_term_warning = true;
        out.sum = g.constant({1}, {T(0)});
        return out;
    }
    out.sum = g.masked_ce_sum(logits, std::move(targets), std::move(active));
    return out;
}

/// Standard pretraining loss: full next-token cross-entropy over a raw
/// window. Kept as its own code path so the zero-pause equivalence checks
/// compare genuinely distinct pipelines.
template <typename T>
LossNodes<T> standard_pretrain_loss(const ModelParams<T>& model, Graph<T>& g,
                                    const std::vector<int>& tokens) {
    const int len = static_cast<int>(tokens.size());
    if (len < 2) {
        throw LengthError("pretraining sequence needs at least 2 tokens");
    }
    const AttentionMask mask = build_causal_mask(len);
    const NodeId logits = model.forward(g, tokens, mask);
    std::vector<int> targets(static_cast<size_t>(len), 0);
    std::vector<uint8_t> active(static_cast<size_t>(len), 0);
    for (int k = 0; k + 1 < len; ++k) {
        targets[k] = tokens[k + 1];
        active[k] = 1;
    }
    LossNodes<T> out;
    out.n_terms = len - 1;
    out.sum = g.masked_ce_sum(logits, std::move(targets), std::move(active));
    return out;
}

/// Delay-finetuning loss: builds [prefix, pauses] (placement-dependent),
/// concatenates the target, applies a prefix mask that is bidirectional over
/// prefix+pauses and causal over the target, and sums cross-entropy over the
/// T target predictions only.
template <typename T>
LossNodes<T> pause_finetune_loss(const ModelParams<T>& model, Graph<T>& g,
                                 const FinetuneExample& ex, int m_ft, int pause_id,
                                 Placement placement) {
    if (ex.target.empty()) {
        throw LengthError("finetune example needs at least one target token");
    }
    const DelayedPrefix dp = append_pauses(ex.prefix, m_ft, pause_id, placement);
    std::vector<int> tokens = dp.tokens;
    tokens.insert(tokens.end(), ex.target.begin(), ex.target.end());
    const int len = static_cast<int>(tokens.size());
    if (len > model.config.max_positions) {
        throw LengthError("finetune sequence length " + std::to_string(len) +
                          " exceeds max_positions " + std::to_string(model.config.max_positions));
    }
    const AttentionMask mask = build_prefix_mask(dp.prefix_len, len);
    const NodeId logits = model.forward(g, tokens, mask);

    std::vector<int> targets(static_cast<size_t>(len), 0);
    std::vector<uint8_t> active(static_cast<size_t>(len), 0);
    const int t_count = static_cast<int>(ex.target.size());
    for (int i = 0; i < t_count; ++i) {
        targets[dp.prefix_len - 1 + i] = ex.target[static_cast<size_t>(i)];
        active[dp.prefix_len - 1 + i] = 1;
    }
    LossNodes<T> out;
    out.n_terms = t_count;
    out.sum = g.masked_ce_sum(logits, std::move(targets), std::move(active));
    return out;
}

/// Standard finetuning loss (no delay machinery touched): prefix mask of the
/// bare prefix, cross-entropy over the target predictions.
template <typename T>
LossNodes<T> standard_finetune_loss(const ModelParams<T>& model, Graph<T>& g,
                                    const FinetuneExample& ex) {
    if (ex.target.empty()) {
        throw LengthError("finetune example needs at least one target token");
    }
    std::vector<int> tokens = ex.prefix;
    tokens.insert(tokens.end(), ex.target.begin(), ex.target.end());
    const int len = static_cast<int>(tokens.size());
    if (len > model.config.max_positions) {
        throw LengthError("finetune sequence length " + std::to_string(len) +
                          " exceeds max_positions " + std::to_string(model.config.max_positions));
    }
    const int p = static_cast<int>(ex.prefix.size());
    const AttentionMask mask = build_prefix_mask(p, len);
    const NodeId logits = model.forward(g, tokens, mask);
    std::vector<int> targets(static_cast<size_t>(len), 0);
    std::vector<uint8_t> active(static_cast<size_t>(len), 0);
    for (size_t i = 0; i < ex.target.size(); ++i) {
        targets[static_cast<size_t>(p) - 1 + i] = ex.target[i];
        active[static_cast<size_t>(p) - 1 + i] = 1;
    }
    LossNodes<T> out;
    out.n_terms = static_cast<int>(ex.target.size());
    out.sum = g.masked_ce_sum(logits, std::move(targets), std::move(active));
    return out;
}

struct GenerateOptions {
    int m_inf = 0;
    Placement placement = Placement::append;
    int max_new = 16;
    int eos_id = -1;
    int pause_id = -1;
    int delay_token_id = -1; // defaults to pause_id; filler evaluation overrides
    bool mask_pause_logit = true;
};

/// Delayed greedy decoding: appends (or prepends) m_inf delay tokens, decodes
/// under the prefix mask, never reads outputs at delay positions, optionally
/// forces the pause logit to -inf, stops at eos or max_new. Returns answer
/// tokens only (no delays, no eos). Deterministic: argmax ties break low.
template <typename T>
std::vector<int> pause_generate(const ModelParams<T>& model, const std::vector<int>& prefix,
                                const GenerateOptions& opt) {
    if (prefix.empty()) {
        throw LengthError("generation prefix must be nonempty");
    }
    if (opt.m_inf < 0) {
        throw RangeError("m_inf must be >= 0");
    }
    const int delay_id = opt.delay_token_id >= 0 ? opt.delay_token_id : opt.pause_id;
    const DelayedPrefix dp = append_pauses(prefix, opt.m_inf, delay_id, opt.placement);

    std::vector<int> tokens = dp.tokens;
    std::vector<int> answer;
    const int vocab = model.config.vocab_size;
    for (int step = 0; step < opt.max_new; ++step) {
        if (static_cast<int>(tokens.size()) + 1 > model.config.max_positions) {
            throw LengthError("generation would exceed max_positions " +
                              std::to_string(model.config.max_positions));
        }
        const AttentionMask mask = build_prefix_mask(dp.prefix_len,
                                                     static_cast<int>(tokens.size()));
        const std::vector<T> logits = model.forward_values(tokens, mask);
        const T* last = logits.data() + (tokens.size() - 1) * static_cast<size_t>(vocab);
        int best = -1;
        T best_v = T(0);
        for (int j = 0; j < vocab; ++j) {
            if (opt.mask_pause_logit && j == opt.pause_id) {
                continue;
            }
            if (best < 0 || last[j] > best_v) {
                best = j;
                best_v = last[j];
            }
        }
        if (best == opt.eos_id) {
            break;
        }
        answer.push_back(best);
        tokens.push_back(best);
    }
    return answer;
}

} // namespace pauselab
