#include "pauselab/tasks.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "pauselab/errors.hpp"
#include "pauselab/rng.hpp"

namespace pauselab {

TaskSpec parse_task_spec(const std::string& s) {
    const size_t colon = s.find(':');
    TaskSpec spec;
    if (colon == std::string::npos) {
        spec.kind = parse_task_kind(s);
        return spec;
    }
    spec.kind = parse_task_kind(s.substr(0, colon));
    try {
        spec.size = std::stoi(s.substr(colon + 1));
    } catch (const std::exception&) {
        throw ConfigError("bad task size in spec '" + s + "'");
    }
    return spec;
}

Split split_of(const std::string& prefix, const std::string& target) {
    const uint64_t h = fnv1a64(target, fnv1a64("\t", fnv1a64(prefix)));
    return (h & 1u) == 0 ? Split::train : Split::test;
}

namespace {

StringExample draw_lookup(Rng& rng, int n_keys) {
    std::vector<int> keys(10);
    std::iota(keys.begin(), keys.end(), 0);
    rng.shuffle(keys);
    keys.resize(static_cast<size_t>(n_keys));

    std::string prefix;
    std::vector<int> values(static_cast<size_t>(n_keys));
    for (int i = 0; i < n_keys; ++i) {
        values[i] = static_cast<int>(rng.below(10));
        if (i > 0) {
            prefix += ';';
        }
        prefix += 'k';
        prefix += static_cast<char>('0' + keys[i]);
        prefix += ":v";
        prefix += static_cast<char>('0' + values[i]);
    }
    const int q = static_cast<int>(rng.below(static_cast<uint64_t>(n_keys)));
    prefix += "|k";
    prefix += static_cast<char>('0' + keys[q]);
    prefix += '=';
    std::string target = "v";
    target += static_cast<char>('0' + values[q]);
    return {prefix, target};
}

StringExample draw_addition(Rng& rng, int digits) {
    long long hi = 1;
    for (int i = 0; i < digits; ++i) {
        hi *= 10;
    }
    const long long a = static_cast<long long>(rng.below(static_cast<uint64_t>(hi)));
    const long long b = static_cast<long long>(rng.below(static_cast<uint64_t>(hi)));
    return {std::to_string(a) + "+" + std::to_string(b) + "=", std::to_string(a + b)};
}

StringExample draw_chain(Rng& rng, int length) {
    std::string prefix;
    long long value = static_cast<long long>(rng.below(10));
    prefix += 'a';
    prefix += '=';
    prefix += static_cast<char>('0' + value);
    for (int i = 1; i < length; ++i) {
        const int add = static_cast<int>(rng.below(10));
        value += add;
        prefix += ';';
        prefix += static_cast<char>('a' + i);
        prefix += '=';
        prefix += static_cast<char>('a' + i - 1);
        prefix += '+';
        prefix += static_cast<char>('0' + add);
    }
    prefix += ';';
    prefix += static_cast<char>('a' + length - 1);
    prefix += '?';
    return {prefix, std::to_string(value)};
}

StringExample draw_instance(TaskKind kind, int size, Rng& rng) {
    switch (kind) {
    case TaskKind::lookup:
        return draw_lookup(rng, size);
    case TaskKind::addition:
        return draw_addition(rng, size);
    case TaskKind::chain:
        return draw_chain(rng, size);
    }
    throw GenerationError("unreachable task kind");
}

void validate_size(TaskKind kind, int size) {
    switch (kind) {
    case TaskKind::lookup:
        if (size < 1 || size > 10) {
            throw GenerationError("lookup supports 1..10 keys, got " + std::to_string(size));
        }
        break;
    case TaskKind::addition:
        if (size < 1 || size > 9) {
            throw GenerationError("addition supports 1..9 operand digits, got " +
                                  std::to_string(size));
        }
        break;
    case TaskKind::chain:
        if (size < 1 || size > 10) {
            throw GenerationError("chain supports length 1..10, got " + std::to_string(size));
        }
        break;
    }
}

} // namespace

std::vector<StringExample> gen_task_examples(const TaskSpec& spec, int n) {
    if (n <= 0) {
        throw GenerationError("requested example count must be positive");
    }
    validate_size(spec.kind, spec.size);
    Rng rng(derive_seed(spec.seed, "task_examples", static_cast<uint64_t>(spec.kind) * 100 +
                                                        static_cast<uint64_t>(spec.size)));
    std::vector<StringExample> out;
    std::set<std::string> seen;
    // Distinct-instance spaces here are small-ish (e.g. 1-digit addition has
    // 100 instances); cap the draw budget so unsatisfiable requests fail
    // instead of spinning.
    const long long budget = 2000LL * n + 100000;
    for (long long attempt = 0; attempt < budget && static_cast<int>(out.size()) < n; ++attempt) {
        StringExample ex = draw_instance(spec.kind, spec.size, rng);
        if (split_of(ex.prefix, ex.target) != spec.split) {
            continue;
        }
        const std::string key = ex.prefix + "\t" + ex.target;
        if (!seen.insert(key).second) {
            continue;
        }
        out.push_back(std::move(ex));
    }
    if (static_cast<int>(out.size()) < n) {
        throw GenerationError("task " + spec.name() + " cannot produce " + std::to_string(n) +
                              " distinct " +
                              (spec.split == Split::train ? std::string("train") : std::string("test")) +
                              " examples (got " + std::to_string(out.size()) + ")");
    }
    return out;
}

std::string solve_instance(TaskKind kind, const std::string& prefix) {
    switch (kind) {
    case TaskKind::lookup: {
        const size_t bar = prefix.find('|');
        if (bar == std::string::npos || bar + 3 >= prefix.size()) {
            throw GenerationError("malformed lookup instance: " + prefix);
        }
        const std::string query = prefix.substr(bar + 1, 2); // "kD"
        size_t at = 0;
        std::string found;
        while (at < bar) {
            const size_t end = std::min(prefix.find(';', at), bar);
            // entry "kD:vD"
            if (prefix.compare(at, 2, query) == 0) {
                found = prefix.substr(at + 3, 2);
            }
            at = end + 1;
        }
        if (found.empty()) {
            throw GenerationError("lookup query names an absent key: " + prefix);
        }
        return found;
    }
    case TaskKind::addition: {
        const size_t plus = prefix.find('+');
        const size_t eq = prefix.find('=');
        if (plus == std::string::npos || eq == std::string::npos || eq < plus) {
            throw GenerationError("malformed addition instance: " + prefix);
        }
        const long long a = std::stoll(prefix.substr(0, plus));
        const long long b = std::stoll(prefix.substr(plus + 1, eq - plus - 1));
        return std::to_string(a + b);
    }
    case TaskKind::chain: {
        long long values[26] = {0};
        size_t at = 0;
        while (at < prefix.size()) {
            size_t end = prefix.find(';', at);
            if (end == std::string::npos) {
                end = prefix.size();
            }
            const std::string stmt = prefix.substr(at, end - at);
            if (stmt.size() == 2 && stmt[1] == '?') {
                return std::to_string(values[stmt[0] - 'a']);
            }
            // "x=3" or "x=y+4"
            const char var = stmt[0];
            if (stmt.size() == 3) {
                values[var - 'a'] = stmt[2] - '0';
            } else if (stmt.size() == 5 && stmt[3] == '+') {
                values[var - 'a'] = values[stmt[2] - 'a'] + (stmt[4] - '0');
            } else {
                throw GenerationError("malformed chain statement: " + stmt);
            }
            at = end + 1;
        }
        throw GenerationError("chain instance has no query: " + prefix);
    }
    }
    throw GenerationError("unreachable task kind");
}

std::vector<uint16_t> gen_pretrain_corpus(const std::vector<TaskSpec>& specs, const Vocab& vocab,
                                          long long total_tokens, uint64_t seed) {
    if (total_tokens <= 0) {
        throw GenerationError("corpus token count must be positive");
    }
    if (specs.empty()) {
        throw GenerationError("corpus needs at least one task spec");
    }
    Rng rng(derive_seed(seed, "corpus"));
    std::vector<uint16_t> out;
    out.reserve(static_cast<size_t>(total_tokens));
    while (static_cast<long long>(out.size()) < total_tokens) {
        const TaskSpec& spec = specs[rng.below(specs.size())];
        // Documents come from the train side only so held-out test instances
        // never leak into pretraining.
        StringExample ex = draw_instance(spec.kind, spec.size, rng);
        if (split_of(ex.prefix, ex.target) != Split::train) {
            continue;
        }
        for (int id : vocab.encode(ex.prefix + ex.target)) {
            out.push_back(static_cast<uint16_t>(id));
        }
        out.push_back(static_cast<uint16_t>(vocab.sep_id()));
    }
    out.resize(static_cast<size_t>(total_tokens));
    return out;
}

namespace {

std::string trim_ws(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) {
        ++b;
    }
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) {
        --e;
    }
    return s.substr(b, e - b);
}

} // namespace

int exact_match(const std::string& pred, const std::string& gold) {
    return trim_ws(pred) == trim_ws(gold) ? 1 : 0;
}

double batch_exact_match(const std::vector<std::string>& preds,
                         const std::vector<std::string>& golds) {
    if (preds.size() != golds.size()) {
        throw ShapeError("batch_exact_match: prediction/gold counts differ");
    }
    if (preds.empty()) {
        return 0.0;
    }
    long long hits = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        hits += exact_match(preds[i], golds[i]);
    }
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

void write_examples_tsv(const std::string& path, const std::vector<StringExample>& examples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot open " + path + " for writing");
    }
    for (const auto& ex : examples) {
        out << ex.prefix << '\t' << ex.target << '\n';
    }
}

std::vector<StringExample> read_examples_tsv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path);
    }
    std::vector<StringExample> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            throw FormatError("missing tab in dataset line: " + line);
        }
        out.push_back({line.substr(0, tab), line.substr(tab + 1)});
    }
    return out;
}

static constexpr char kCorpusMagic[9] = {'P', 'A', 'U', 'S', 'E', 'C', 'O', 'R', 'P'};
static constexpr uint8_t kCorpusVersion = 1;

void write_corpus(const std::string& path, const std::vector<uint16_t>& corpus, const Vocab& vocab) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot open " + path + " for writing");
    }
    char header[16] = {0};
    std::memcpy(header, kCorpusMagic, sizeof(kCorpusMagic));
    header[9] = static_cast<char>(kCorpusVersion);
    const uint32_t h = static_cast<uint32_t>(vocab.hash());
    header[10] = static_cast<char>(h & 0xff);
    header[11] = static_cast<char>((h >> 8) & 0xff);
    header[12] = static_cast<char>((h >> 16) & 0xff);
    header[13] = static_cast<char>((h >> 24) & 0xff);
    out.write(header, sizeof(header));
    for (uint16_t id : corpus) {
        const char le[2] = {static_cast<char>(id & 0xff), static_cast<char>(id >> 8)};
        out.write(le, 2);
    }
}

std::vector<uint16_t> read_corpus(const std::string& path, const Vocab& vocab) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path);
    }
    char header[16];
    if (!in.read(header, sizeof(header))) {
        throw CorruptionError("corpus file shorter than its header: " + path);
    }
    if (std::memcmp(header, kCorpusMagic, sizeof(kCorpusMagic)) != 0) {
        throw FormatError("bad corpus magic in " + path);
    }
    if (static_cast<uint8_t>(header[9]) != kCorpusVersion) {
        throw FormatError("unsupported corpus version in " + path);
    }
    const uint32_t h = static_cast<uint32_t>(static_cast<uint8_t>(header[10])) |
                       (static_cast<uint32_t>(static_cast<uint8_t>(header[11])) << 8) |
                       (static_cast<uint32_t>(static_cast<uint8_t>(header[12])) << 16) |
                       (static_cast<uint32_t>(static_cast<uint8_t>(header[13])) << 24);
    if (h != static_cast<uint32_t>(vocab.hash())) {
        throw CompatibilityError("corpus vocab hash does not match the active vocabulary");
    }
    std::vector<uint16_t> out;
    char le[2];
    while (in.read(le, 2)) {
        out.push_back(static_cast<uint16_t>(static_cast<uint8_t>(le[0])) |
                      (static_cast<uint16_t>(static_cast<uint8_t>(le[1])) << 8));
    }
    if (in.gcount() == 1) {
        throw CorruptionError("corpus file ends mid-token: " + path);
    }
    return out;
}

} // namespace pauselab
