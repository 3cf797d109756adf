#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pauselab/vocab.hpp"

namespace pauselab {

enum class Split : uint8_t { train, test };

/// One synthetic task family at a fixed size:
///   lookup   — "k3:v7;k1:v2|k1=" -> "v2"   (size = number of keys, <= 10)
///   addition — "23+45="          -> "68"   (size = max operand digits)
///   chain    — "a=3;b=a+2;b?"    -> "5"    (size = chain length, <= 10)
/// Train/test splits partition the instance space by hash parity of the
/// canonical "prefix\ttarget" encoding, so the two splits are disjoint by
/// construction.
struct TaskSpec {
    TaskKind kind = TaskKind::lookup;
    int size = 8;
    Split split = Split::train;
    uint64_t seed = 0;

    std::string name() const {
        return std::string(task_kind_name(kind)) + ":" + std::to_string(size);
    }
};

/// "lookup:8" -> {lookup, 8}. Split/seed are left at defaults.
TaskSpec parse_task_spec(const std::string& s);

struct StringExample {
    std::string prefix;
    std::string target;
};

/// Which split a given instance belongs to (even hash parity -> train).
Split split_of(const std::string& prefix, const std::string& target);

/// Deterministic per (spec, n): draws instances from the task grammar,
/// keeps those in spec.split, de-duplicates, and returns exactly n of them.
/// Throws GenerationError when the size parameters cannot yield n distinct
/// instances in the split.
std::vector<StringExample> gen_task_examples(const TaskSpec& spec, int n);

/// Re-solves an instance prefix with the task's own evaluator. Used by the
/// self-consistency tests.
std::string solve_instance(TaskKind kind, const std::string& prefix);

/// Concatenated solved instances rendered as text ("prefix" + "target"),
/// separated by <sep>, drawn from the train side of the given specs only,
/// truncated to exactly total_tokens ids. Contains no <pause>.
std::vector<uint16_t> gen_pretrain_corpus(const std::vector<TaskSpec>& specs, const Vocab& vocab,
                                          long long total_tokens, uint64_t seed);

/// 1 iff the strings match after trimming leading/trailing whitespace.
int exact_match(const std::string& pred, const std::string& gold);
double batch_exact_match(const std::vector<std::string>& preds,
                         const std::vector<std::string>& golds);

// -- file formats -----------------------------------------------------------

/// UTF-8 lines "prefix<TAB>target".
void write_examples_tsv(const std::string& path, const std::vector<StringExample>& examples);
std::vector<StringExample> read_examples_tsv(const std::string& path);

/// Binary id stream: 16-byte header (magic "PAUSECORP", u8 version, u32 LE
/// vocab hash (truncated), 2 zero bytes), then little-endian u16 ids.
void write_corpus(const std::string& path, const std::vector<uint16_t>& corpus, const Vocab& vocab);
std::vector<uint16_t> read_corpus(const std::string& path, const Vocab& vocab);

} // namespace pauselab
