#include "pauselab/pause.hpp"

#include <algorithm>
#include <fstream>

#include "pauselab/errors.hpp"
#include "pauselab/rng.hpp"

namespace pauselab {

const char* placement_name(Placement p) {
    return p == Placement::append ? "append" : "prepend";
}

Placement parse_placement(const std::string& s) {
    if (s == "append") {
        return Placement::append;
    }
    if (s == "prepend") {
        return Placement::prepend;
    }
    throw ConfigError("unknown placement '" + s + "' (expected append|prepend)");
}

std::vector<int> compute_ignore_set(const std::vector<int>& tokens, int pause_id) {
    std::vector<int> out;
    for (size_t k = 0; k + 1 < tokens.size(); ++k) {
        if (tokens[k + 1] == pause_id) {
            out.push_back(static_cast<int>(k));
        }
    }
    return out;
}

std::vector<int> strip_pauses(const std::vector<int>& tokens, int pause_id) {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (int t : tokens) {
        if (t != pause_id) {
            out.push_back(t);
        }
    }
    return out;
}

PausedSequence random_insert(const std::vector<int>& tokens, int m_pt, int pause_id,
                             uint64_t seed) {
    if (m_pt < 0) {
        throw RangeError("m_pt must be >= 0");
    }
    for (int t : tokens) {
        if (t == pause_id) {
            throw ContaminationError("input sequence already contains the pause id");
        }
    }
    const int n = static_cast<int>(tokens.size());
    std::vector<int> gap_count(static_cast<size_t>(n) + 1, 0);
    Rng rng(seed);
    for (int i = 0; i < m_pt; ++i) {
        gap_count[rng.below(static_cast<uint64_t>(n) + 1)] += 1;
    }

    PausedSequence seq;
    seq.n_original = n;
    seq.n_pauses = m_pt;
    seq.tokens.reserve(static_cast<size_t>(n + m_pt));
    for (int i = 0; i <= n; ++i) {
        for (int c = 0; c < gap_count[static_cast<size_t>(i)]; ++c) {
            seq.tokens.push_back(pause_id);
        }
        if (i < n) {
            seq.tokens.push_back(tokens[static_cast<size_t>(i)]);
        }
    }
    seq.ignore_set = compute_ignore_set(seq.tokens, pause_id);
    return seq;
}

PausedSequence inject_window(std::span<const uint16_t> window, const InjectConfig& cfg,
                             uint64_t window_index) {
    if (cfg.fraction < 0.0 || cfg.fraction >= 1.0) {
        throw RangeError("inject fraction must lie in [0, 1)");
    }
    std::vector<int> raw(window.begin(), window.end());
    const int m_pt = static_cast<int>(std::llround(cfg.fraction * static_cast<double>(window.size())));
    PausedSequence seq =
        random_insert(raw, m_pt, cfg.pause_id, derive_seed(cfg.seed, "inject", window_index));
    if (cfg.trim && static_cast<int>(seq.tokens.size()) > static_cast<int>(window.size())) {
        seq.tokens.resize(window.size()); // drop the tail, keep left context
        seq.n_pauses = static_cast<int>(std::count(seq.tokens.begin(), seq.tokens.end(),
                                                   cfg.pause_id));
        seq.n_original = static_cast<int>(seq.tokens.size()) - seq.n_pauses;
        seq.ignore_set = compute_ignore_set(seq.tokens, cfg.pause_id);
    }
    return seq;
}

std::vector<PausedSequence> inject_corpus(std::span<const uint16_t> stream,
                                          const InjectConfig& cfg) {
    if (cfg.window <= 0) {
        throw RangeError("inject window must be positive");
    }
    std::vector<PausedSequence> out;
    const size_t w = static_cast<size_t>(cfg.window);
    for (size_t start = 0, idx = 0; start + w <= stream.size(); start += w, ++idx) {
        out.push_back(inject_window(stream.subspan(start, w), cfg, idx));
    }
    return out;
}

std::string paused_sequence_record(const PausedSequence& seq, int pause_id) {
    std::string line;
    for (size_t i = 0; i < seq.tokens.size(); ++i) {
        if (i) {
            line += ',';
        }
        if (seq.tokens[i] == pause_id) {
            line += "<pause>";
        } else {
            line += std::to_string(seq.tokens[i]);
        }
    }
    line += '\t';
    for (size_t i = 0; i < seq.ignore_set.size(); ++i) {
        if (i) {
            line += ',';
        }
        line += std::to_string(seq.ignore_set[i]);
    }
    return line;
}

void write_paused_sequences(const std::string& path, const std::vector<PausedSequence>& seqs,
                            int pause_id) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot open " + path + " for writing");
    }
    for (const auto& s : seqs) {
        out << paused_sequence_record(s, pause_id) << '\n';
    }
}

DelayedPrefix append_pauses(const std::vector<int>& prefix, int m, int pause_id,
                            Placement placement) {
    if (m < 0) {
        throw RangeError("delay count must be >= 0");
    }
    DelayedPrefix out;
    out.tokens.reserve(prefix.size() + static_cast<size_t>(m));
    if (placement == Placement::prepend) {
        out.tokens.assign(static_cast<size_t>(m), pause_id);
        out.tokens.insert(out.tokens.end(), prefix.begin(), prefix.end());
    } else {
        out.tokens = prefix;
        out.tokens.insert(out.tokens.end(), static_cast<size_t>(m), pause_id);
    }
    out.prefix_len = static_cast<int>(prefix.size()) + m;
    return out;
}

} // namespace pauselab
