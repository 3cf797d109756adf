#include "pauselab/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pauselab/errors.hpp"
#include "pauselab/rng.hpp"

namespace pauselab {

const std::vector<ConfigKey>& config_schema() {
    static const std::vector<ConfigKey> schema = {
        {"model.n_layers", "4", "transformer layers"},
        {"model.n_heads", "4", "attention heads per layer"},
        {"model.d_model", "128", "embedding dimension"},
        {"model.d_attn", "auto", "per-head dimension (auto = d_model / n_heads)"},
        {"model.d_ff", "512", "feedforward hidden dimension"},
        {"model.max_positions", "512", "maximum sequence length"},
        {"model.activation", "gelu", "feedforward activation: gelu|relu"},
        {"model.tied_unembed", "false", "tie unembedding to the token embedding"},

        {"train.lr", "0.001", "peak learning rate"},
        {"train.warmup_steps", "100", "linear warmup steps"},
        {"train.steps", "20000", "pretraining steps"},
        {"train.finetune_steps", "3000", "finetuning steps"},
        {"train.batch_size", "8", "sequences per step"},
        {"train.seed", "0", "master seed"},
        {"train.beta1", "0.9", "Adam beta1"},
        {"train.beta2", "0.999", "Adam beta2"},
        {"train.eps", "1e-8", "Adam epsilon"},
        {"train.grad_clip", "1.0", "global grad-norm clip (0 disables)"},
        {"train.precision", "f32", "f32|f64"},
        {"train.schedule", "constant", "post-warmup schedule: constant|cosine"},
        {"train.window", "256", "pretraining window length"},
        {"train.threads", "2", "batch-element worker threads"},

        {"pause.fraction", "0.1", "pause insertion fraction for pause-pretraining"},
        {"pause.trim", "true", "trim injected windows back to window length"},
        {"pause.m_ft", "10", "delay tokens during finetuning"},
        {"pause.m_inf", "auto", "delay tokens during inference (auto = m_ft)"},
        {"pause.placement", "append", "append|prepend"},
        {"pause.mask_logit", "true", "forbid emitting <pause> during decoding"},

        {"task.spec", "lookup:8", "task kind:size"},
        {"task.train_n", "2048", "finetuning examples"},
        {"task.test_n", "256", "held-out evaluation examples"},
        {"task.seed", "7", "task generator seed"},

        {"corpus.tokens", "auto", "pretraining corpus length (auto = steps*batch*window)"},
        {"corpus.seed", "42", "corpus generator seed"},
        {"corpus.dump", "", "optional path to dump the corpus id stream"},

        {"eval.max_new", "16", "generation cap per answer"},
        {"eval.checkpoint", "", "checkpoint evaluated by `eval` / swept by `sweep-minf`"},

        {"pretrain.mode", "standard", "standard|pause"},
        {"pretrain.out", "auto", "checkpoint path (auto = checkpoints/<mode>.ckpt)"},

        {"finetune.mode", "pause", "standard|pause"},
        {"finetune.init", "", "checkpoint to start from (empty = random init)"},
        {"finetune.out", "auto", "checkpoint path (auto = checkpoints/finetuned.ckpt)"},

        {"matrix.tasks", "lookup:8,addition:2", "comma-separated task specs"},
        {"matrix.train_missing", "false", "pretrain missing checkpoints on demand"},
        {"matrix.stdpt", "auto", "standard-pretrained checkpoint (auto = checkpoints/stdpt.ckpt)"},
        {"matrix.pausept", "auto", "pause-pretrained checkpoint (auto = checkpoints/pausept.ckpt)"},

        {"sweep.variant", "PausePT_PauseFT", "variant swept by sweep-mft"},
        {"sweep.mft_grid", "0,2,5,10,20,50", "m_ft grid"},
        {"sweep.minf_grid", "auto", "m_inf grid (auto = 0,2,5,m_ft,15,20,25 band)"},

        {"placement.m", "10", "delay count compared by `placement`"},
        {"placement.variant", "PausePT_PauseFT", "variant compared by `placement`"},

        {"filler.n", "10", "filler tokens appended at inference"},
        {"filler.token", ".", "in-vocabulary filler character"},

        {"run.dir", "runs/out", "output directory"},
        {"run.seeds", "0,1,2,3,4", "finetuning seeds"},

        {"report.timing", "fixed", "metrics.csv wall_seconds column: fixed|real"},
    };
    return schema;
}

RunConfig::RunConfig() {
    for (const ConfigKey& k : config_schema()) {
        values_[k.key] = k.def;
    }
}

namespace {

std::string trim(const std::string& s) {
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

void RunConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path);
    }
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) {
        throw ConfigError("unknown config key '" + key + "'");
    }
    it->second = value;
}

void RunConfig::apply_env() {
    if (const char* s = std::getenv("PAUSE_LAB_SEED")) {
        set("train.seed", s);
    }
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) != 0; }

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) {
        throw ConfigError("unknown config key '" + key + "'");
    }
    return it->second;
}

int RunConfig::get_int(const std::string& key) const {
    try {
        return std::stoi(get(key));
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' expects an integer, got '" + get(key) + "'");
    }
}

long long RunConfig::get_ll(const std::string& key) const {
    try {
        return std::stoll(get(key));
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' expects an integer, got '" + get(key) + "'");
    }
}

double RunConfig::get_double(const std::string& key) const {
    try {
        return std::stod(get(key));
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' expects a number, got '" + get(key) + "'");
    }
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no" || v == "off") {
        return false;
    }
    throw ConfigError("key '" + key + "' expects a boolean, got '" + v + "'");
}

uint64_t RunConfig::get_u64(const std::string& key) const {
    try {
        return std::stoull(get(key));
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' expects an unsigned integer, got '" + get(key) + "'");
    }
}

std::string RunConfig::resolved_text() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) { // std::map iterates sorted
        os << k << " = " << v << "\n";
    }
    return os.str();
}

ModelConfig RunConfig::model_config(int vocab_size) const {
    ModelConfig c;
    c.n_layers = get_int("model.n_layers");
    c.n_heads = get_int("model.n_heads");
    c.d_model = get_int("model.d_model");
    c.d_attn = is_auto("model.d_attn") ? c.d_model / c.n_heads : get_int("model.d_attn");
    c.d_ff = get_int("model.d_ff");
    c.max_positions = get_int("model.max_positions");
    c.vocab_size = vocab_size;
    const std::string& act = get("model.activation");
    if (act == "gelu") {
        c.activation = Activation::gelu;
    } else if (act == "relu") {
        c.activation = Activation::relu;
    } else {
        throw ConfigError("model.activation must be gelu or relu, got '" + act + "'");
    }
    c.tied_unembed = get_bool("model.tied_unembed");
    c.validate();
    return c;
}

TrainConfig RunConfig::train_config(bool finetune) const {
    TrainConfig t;
    t.learning_rate = get_double("train.lr");
    t.warmup_steps = get_int("train.warmup_steps");
    t.total_steps = finetune ? get_int("train.finetune_steps") : get_int("train.steps");
    t.batch_size = get_int("train.batch_size");
    t.seed = get_u64("train.seed");
    t.beta1 = get_double("train.beta1");
    t.beta2 = get_double("train.beta2");
    t.adam_eps = get_double("train.eps");
    const double clip = get_double("train.grad_clip");
    t.grad_clip_norm = clip > 0 ? std::optional<double>(clip) : std::nullopt;
    t.precision = precision();
    const std::string& sched = get("train.schedule");
    if (sched == "constant") {
        t.schedule = Schedule::constant;
    } else if (sched == "cosine") {
        t.schedule = Schedule::cosine;
    } else {
        throw ConfigError("train.schedule must be constant or cosine, got '" + sched + "'");
    }
    t.window = get_int("train.window");
    t.threads = get_int("train.threads");
    t.validate();
    return t;
}

Precision RunConfig::precision() const {
    const std::string& p = get("train.precision");
    if (p == "f32") {
        return Precision::f32;
    }
    if (p == "f64") {
        return Precision::f64;
    }
    throw ConfigError("train.precision must be f32 or f64, got '" + p + "'");
}

std::vector<TaskSpec> RunConfig::parse_task_list(const std::string& key) const {
    std::vector<TaskSpec> out;
    for (const std::string& piece : split_list(get(key))) {
        TaskSpec spec = parse_task_spec(piece);
        spec.seed = get_u64("task.seed");
        out.push_back(spec);
    }
    if (out.empty()) {
        throw ConfigError("key '" + key + "' names no tasks");
    }
    return out;
}

std::vector<uint64_t> RunConfig::seeds() const {
    std::vector<uint64_t> out;
    for (const std::string& piece : split_list(get("run.seeds"))) {
        out.push_back(std::stoull(piece));
    }
    if (out.empty()) {
        throw ConfigError("run.seeds names no seeds");
    }
    return out;
}

std::vector<int> RunConfig::int_list(const std::string& key) const {
    std::vector<int> out;
    for (const std::string& piece : split_list(get(key))) {
        out.push_back(std::stoi(piece));
    }
    return out;
}

std::vector<std::string> split_list(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            const std::string t = trim(cur);
            if (!t.empty()) {
                out.push_back(t);
            }
            cur.clear();
        } else {
            cur += c;
        }
    }
    const std::string t = trim(cur);
    if (!t.empty()) {
        out.push_back(t);
    }
    return out;
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path + " for digest");
    }
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        h = fnv1a64(std::string_view(buf, static_cast<size_t>(in.gcount())), h);
        if (in.eof()) {
            break;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
    return std::string(hex);
}

} // namespace pauselab
