#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pauselab/model.hpp"
#include "pauselab/pause.hpp"
#include "pauselab/tasks.hpp"
#include "pauselab/trainer.hpp"

namespace pauselab {

struct ConfigKey {
    const char* key;
    const char* def;
    const char* help;
};

/// Every recognized key with its default. CLI flags mirror these keys
/// (underscores become dashes: `pause.m_ft` -> `--pause.m-ft`).
const std::vector<ConfigKey>& config_schema();

/// Resolved key/value configuration: defaults, then file, then explicit sets
/// (CLI flags), then the PAUSE_LAB_SEED environment override.
class RunConfig {
public:
    RunConfig(); // schema defaults

    /// UTF-8 "key = value" lines; '#' starts a comment; blank lines ignored.
    void load_file(const std::string& path);
    void set(const std::string& key, const std::string& value); // ConfigError on unknown key
    void apply_env();

    bool has(const std::string& key) const;
    const std::string& get(const std::string& key) const;
    int get_int(const std::string& key) const;
    long long get_ll(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    uint64_t get_u64(const std::string& key) const;
    bool is_auto(const std::string& key) const { return get(key) == "auto"; }

    /// Sorted "key = value" lines; written to <run.dir>/config.resolved.
    std::string resolved_text() const;

    // -- typed views ----------------------------------------------------------
    ModelConfig model_config(int vocab_size) const;
    /// `finetune` picks train.finetune_steps over train.steps.
    TrainConfig train_config(bool finetune) const;
    std::vector<TaskSpec> parse_task_list(const std::string& key) const;
    std::vector<uint64_t> seeds() const;                  // run.seeds
    std::vector<int> int_list(const std::string& key) const;
    Precision precision() const;

private:
    std::map<std::string, std::string> values_;
};

/// "a,b,c" -> trimmed pieces; empty string -> empty list.
std::vector<std::string> split_list(const std::string& s, char sep = ',');

/// Hex FNV-1a digest of a file's bytes; used to prove evaluation-only
/// commands leave checkpoints untouched.
std::string file_digest(const std::string& path);

} // namespace pauselab
