#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pauselab {

enum class TaskKind : uint8_t { lookup, addition, chain };

const char* task_kind_name(TaskKind k);
TaskKind parse_task_kind(const std::string& s);

/// Character-level symbol table plus reserved specials. The specials live
/// above every standard symbol id; in particular <pause> is outside the
/// standard range, so no task string can ever encode to it.
class Vocab {
public:
    /// Union of the named tasks' alphabets (plus '.', kept for filler-delay
    /// evaluation), sorted by character code, then <pause>, <eos>, <sep>.
    static Vocab build(const std::vector<TaskKind>& kinds);

    int size() const { return static_cast<int>(symbols_.size()) + 3; }
    int n_standard() const { return static_cast<int>(symbols_.size()); }

    int pause_id() const { return n_standard(); }
    int eos_id() const { return n_standard() + 1; }
    int sep_id() const { return n_standard() + 2; }

    bool is_special(int id) const { return id >= n_standard() && id < size(); }
    bool contains_char(char c) const;

    /// Throws VocabError on characters outside the table.
    std::vector<int> encode(const std::string& s) const;

    /// Standard ids map back to their characters; specials render as
    /// "<pause>", "<eos>", "<sep>". Throws VocabError on out-of-range ids.
    std::string decode(const std::vector<int>& ids) const;
    std::string decode_token(int id) const;

    int char_id(char c) const; // VocabError if absent

    /// FNV-1a digest over the symbol list and specials; embedded in corpus
    /// dumps and checkpoints to catch table mismatches.
    uint64_t hash() const;

    const std::string& symbols() const { return symbols_; }

private:
    std::string symbols_; // sorted standard characters
    int char_to_id_[256];
};

} // namespace pauselab
