#include "pauselab/vocab.hpp"

#include <algorithm>
#include <set>

#include "pauselab/errors.hpp"
#include "pauselab/rng.hpp"

namespace pauselab {

const char* task_kind_name(TaskKind k) {
    switch (k) {
    case TaskKind::lookup:
        return "lookup";
    case TaskKind::addition:
        return "addition";
    case TaskKind::chain:
        return "chain";
    }
    return "?";
}

TaskKind parse_task_kind(const std::string& s) {
    if (s == "lookup") {
        return TaskKind::lookup;
    }
    if (s == "addition") {
        return TaskKind::addition;
    }
    if (s == "chain") {
        return TaskKind::chain;
    }
    throw ConfigError("unknown task kind '" + s + "' (expected lookup|addition|chain)");
}

namespace {

void add_task_alphabet(TaskKind kind, std::set<char>& out) {
    const auto add = [&](const std::string& s) { out.insert(s.begin(), s.end()); };
    add("0123456789");
    switch (kind) {
    case TaskKind::lookup:
        add("kv:;|=");
        break;
    case TaskKind::addition:
        add("+=");
        break;
    case TaskKind::chain:
        add("abcdefghij=;+?");
        break;
    }
}

} // namespace

Vocab Vocab::build(const std::vector<TaskKind>& kinds) {
    std::set<char> chars;
    for (TaskKind k : kinds) {
        add_task_alphabet(k, chars);
    }
    chars.insert('.');

    Vocab v;
    v.symbols_.assign(chars.begin(), chars.end()); // std::set iterates sorted
    std::fill(std::begin(v.char_to_id_), std::end(v.char_to_id_), -1);
    for (int i = 0; i < static_cast<int>(v.symbols_.size()); ++i) {
        v.char_to_id_[static_cast<unsigned char>(v.symbols_[i])] = i;
    }
    return v;
}

bool Vocab::contains_char(char c) const {
    return char_to_id_[static_cast<unsigned char>(c)] >= 0;
}

int Vocab::char_id(char c) const {
    const int id = char_to_id_[static_cast<unsigned char>(c)];
    if (id < 0) {
        throw VocabError(std::string("character '") + c + "' not in vocabulary");
    }
    return id;
}

std::vector<int> Vocab::encode(const std::string& s) const {
    std::vector<int> out;
    out.reserve(s.size());
    for (char c : s) {
        out.push_back(char_id(c));
    }
    return out;
}

std::string Vocab::decode_token(int id) const {
    if (id < 0 || id >= size()) {
        throw VocabError("token id " + std::to_string(id) + " outside vocabulary of size " +
                         std::to_string(size()));
    }
    if (id < n_standard()) {
        return std::string(1, symbols_[static_cast<size_t>(id)]);
    }
    if (id == pause_id()) {
        return "<pause>";
    }
    if (id == eos_id()) {
        return "<eos>";
    }
    return "<sep>";
}

std::string Vocab::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        out += decode_token(id);
    }
    return out;
}

uint64_t Vocab::hash() const {
    uint64_t h = fnv1a64(symbols_);
    h = fnv1a64("<pause><eos><sep>", h);
    return h;
}

} // namespace pauselab
