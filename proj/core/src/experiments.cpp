#include "pauselab/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "pauselab/checkpoint.hpp"
#include "pauselab/errors.hpp"
#include "pauselab/pause.hpp"
#include "pauselab/rng.hpp"
#include "pauselab/trainer.hpp"

namespace fs = std::filesystem;

namespace pauselab {

const char* variant_name(Variant v) {
    switch (v) {
    case Variant::StdPT_StdFT:
        return "StdPT_StdFT";
    case Variant::StdPT_PauseFT:
        return "StdPT_PauseFT";
    case Variant::PausePT_StdFT:
        return "PausePT_StdFT";
    case Variant::PausePT_PauseFT:
        return "PausePT_PauseFT";
    }
    return "?";
}

Variant parse_variant(const std::string& s) {
    for (Variant v : {Variant::StdPT_StdFT, Variant::StdPT_PauseFT, Variant::PausePT_StdFT,
                      Variant::PausePT_PauseFT}) {
        if (s == variant_name(v)) {
            return v;
        }
    }
    throw ConfigError("unknown variant '" + s +
                      "' (expected StdPT_StdFT|StdPT_PauseFT|PausePT_StdFT|PausePT_PauseFT)");
}

bool variant_uses_pause_pt(Variant v) {
    return v == Variant::PausePT_StdFT || v == Variant::PausePT_PauseFT;
}

bool variant_uses_pause_ft(Variant v) {
    return v == Variant::StdPT_PauseFT || v == Variant::PausePT_PauseFT;
}

void validate_variant(Variant v, int m_ft) {
    if (!variant_uses_pause_ft(v) && m_ft != 0) {
        throw ConfigError(std::string(variant_name(v)) + " uses standard finetuning; m_ft must be 0, got " +
                          std::to_string(m_ft));
    }
}

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

std::string metrics_csv_text(const std::vector<MetricsRow>& rows) {
    std::ostringstream os;
    os << "variant,task,M_ft,M_inf,placement,seed,EM,token_accuracy,steps,wall_seconds\n";
    char buf[256];
    for (const MetricsRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%d,%d,%s,%llu,%.6f,%.6f,%lld,%.3f\n",
                      r.variant.c_str(), r.task.c_str(), r.m_ft, r.m_inf, r.placement.c_str(),
                      static_cast<unsigned long long>(r.seed), r.em, r.token_accuracy, r.steps,
                      r.wall_seconds);
        os << buf;
    }
    return os.str();
}

namespace {

struct CellStats {
    std::vector<double> em;
    std::vector<double> token_acc;
    std::vector<double> wall;
};

double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) {
        s += x;
    }
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Population standard deviation (divides by n).
double pstd_of(const std::vector<double>& v) {
    if (v.empty()) {
        return 0.0;
    }
    const double m = mean_of(v);
    double s = 0;
    for (double x : v) {
        s += (x - m) * (x - m);
    }
    return std::sqrt(s / static_cast<double>(v.size()));
}

} // namespace

std::string summary_text(const std::vector<MetricsRow>& rows) {
    std::map<std::string, CellStats> cells;
    for (const MetricsRow& r : rows) {
        char key[256];
        std::snprintf(key, sizeof(key), "%-16s %-12s %4d %5d %-8s", r.variant.c_str(),
                      r.task.c_str(), r.m_ft, r.m_inf, r.placement.c_str());
        CellStats& c = cells[key];
        c.em.push_back(r.em);
        c.token_acc.push_back(r.token_accuracy);
        c.wall.push_back(r.wall_seconds);
    }
    std::ostringstream os;
    os << "variant          task         M_ft M_inf place    seeds  EM mean+/-std   tok_acc   wall_s\n";
    os << "------------------------------------------------------------------------------------------\n";
    char buf[256];
    for (const auto& [key, c] : cells) {
        std::snprintf(buf, sizeof(buf), "%s %5zu  %.2f +/- %.2f  %8.4f %8.1f\n", key.c_str(),
                      c.em.size(), mean_of(c.em), pstd_of(c.em), mean_of(c.token_acc),
                      mean_of(c.wall));
        os << buf;
    }
    return os.str();
}

void emit_report(const std::vector<MetricsRow>& rows, const std::string& csv_path,
                 const std::string& summary_path) {
    if (rows.empty()) {
        throw ConfigError("emit_report: no rows to report (nothing ran?)");
    }
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) {
        throw FormatError("cannot open " + csv_path + " for writing");
    }
    csv << metrics_csv_text(rows);
    std::ofstream sum(summary_path, std::ios::binary);
    if (!sum) {
        throw FormatError("cannot open " + summary_path + " for writing");
    }
    sum << summary_text(rows);
}

// ---------------------------------------------------------------------------
// shared run machinery
// ---------------------------------------------------------------------------

Vocab shared_vocab() {
    return Vocab::build({TaskKind::lookup, TaskKind::addition, TaskKind::chain});
}

namespace {

struct RunPaths {
    fs::path dir;
    fs::path checkpoints;
    fs::path curves;
};

RunPaths prepare_run_dir(const RunConfig& cfg) {
    RunPaths p;
    p.dir = cfg.get("run.dir");
    p.checkpoints = p.dir / "checkpoints";
    p.curves = p.dir / "curves";
    fs::create_directories(p.checkpoints);
    fs::create_directories(p.curves);
    std::ofstream resolved(p.dir / "config.resolved", std::ios::binary);
    resolved << cfg.resolved_text();
    return p;
}

std::string config_digest(const RunConfig& cfg) {
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(cfg.resolved_text())));
    return std::string(hex);
}

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string sanitize(const std::string& s) {
    std::string out = s;
    for (char& c : out) {
        if (c == ':' || c == ',' || c == '/') {
            c = '-';
        }
    }
    return out;
}

int resolve_m_inf(const RunConfig& cfg, int m_ft) {
    return cfg.is_auto("pause.m_inf") ? m_ft : cfg.get_int("pause.m_inf");
}

/// Finetuning dataset: train-split examples with <eos> appended to targets.
std::vector<FinetuneExample> build_dataset(const Vocab& vocab, TaskSpec spec, int n) {
    spec.split = Split::train;
    std::vector<FinetuneExample> out;
    for (const StringExample& ex : gen_task_examples(spec, n)) {
        FinetuneExample fe;
        fe.prefix = vocab.encode(ex.prefix);
        fe.target = vocab.encode(ex.target);
        fe.target.push_back(vocab.eos_id());
        out.push_back(std::move(fe));
    }
    return out;
}

struct EvalOutcome {
    double em = 0.0;
    double token_accuracy = 0.0;
};

template <typename T>
EvalOutcome evaluate_model(const ModelParams<T>& model, const Vocab& vocab,
                           const std::vector<StringExample>& test, int m_inf, Placement placement,
                           int delay_token_id, bool mask_pause, int max_new, int threads) {
    const size_t n = test.size();
    std::vector<int> hits(n, 0);
    std::vector<long long> tok_hits(n, 0), tok_total(n, 0);

    std::atomic<size_t> cursor{0};
    std::exception_ptr first_error = nullptr;
    std::mutex error_mutex;
    auto worker = [&]() {
        while (true) {
            const size_t i = cursor.fetch_add(1);
            if (i >= n) {
                return;
            }
            try {
                const std::vector<int> prefix = vocab.encode(test[i].prefix);
                GenerateOptions opt;
                opt.m_inf = m_inf;
                opt.placement = placement;
                opt.max_new = max_new;
                opt.eos_id = vocab.eos_id();
                opt.pause_id = vocab.pause_id();
                opt.delay_token_id = delay_token_id;
                opt.mask_pause_logit = mask_pause;
                const std::vector<int> answer = pause_generate(model, prefix, opt);
                hits[i] = exact_match(vocab.decode(answer), test[i].target);

                // Teacher-forced next-token accuracy over the target (+eos).
                std::vector<int> target = vocab.encode(test[i].target);
                target.push_back(vocab.eos_id());
                const DelayedPrefix dp = append_pauses(prefix, m_inf, delay_token_id, placement);
                std::vector<int> tokens = dp.tokens;
                tokens.insert(tokens.end(), target.begin(), target.end());
                const AttentionMask mask =
                    build_prefix_mask(dp.prefix_len, static_cast<int>(tokens.size()));
                const std::vector<T> logits = model.forward_values(tokens, mask);
                const int vsize = model.config.vocab_size;
                for (size_t t = 0; t < target.size(); ++t) {
                    const T* row =
                        logits.data() + (static_cast<size_t>(dp.prefix_len) - 1 + t) * vsize;
                    int best = -1;
                    T best_v = T(0);
                    for (int j = 0; j < vsize; ++j) {
                        if (mask_pause && j == vocab.pause_id()) {
                            continue;
                        }
                        if (best < 0 || row[j] > best_v) {
                            best = j;
                            best_v = row[j];
                        }
                    }
                    tok_total[i] += 1;
                    tok_hits[i] += best == target[t] ? 1 : 0;
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) {
                    first_error = std::current_exception();
                }
                cursor.store(n);
                return;
            }
        }
    };

    const int n_workers = std::max(1, std::min<int>(threads, static_cast<int>(n)));
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < n_workers; ++w) {
            pool.emplace_back(worker);
        }
        for (auto& th : pool) {
            th.join();
        }
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }

    EvalOutcome out;
    long long em_hits = 0, th = 0, tt = 0;
    for (size_t i = 0; i < n; ++i) {
        em_hits += hits[i];
        th += tok_hits[i];
        tt += tok_total[i];
    }
    out.em = n == 0 ? 0.0 : static_cast<double>(em_hits) / static_cast<double>(n);
    out.token_accuracy = tt == 0 ? 0.0 : static_cast<double>(th) / static_cast<double>(tt);
    return out;
}

template <typename T>
PretrainSummary pretrain_impl(const RunConfig& cfg, const RunPaths& paths) {
    const Vocab vocab = shared_vocab();
    const ModelConfig mc = cfg.model_config(vocab.size());
    TrainConfig tc = cfg.train_config(false);

    const std::string mode_s = cfg.get("pretrain.mode");
    const PretrainMode mode =
        mode_s == "pause" ? PretrainMode::pause : PretrainMode::standard;
    if (mode_s != "pause" && mode_s != "standard") {
        throw ConfigError("pretrain.mode must be standard or pause, got '" + mode_s + "'");
    }

    const long long corpus_tokens =
        cfg.is_auto("corpus.tokens")
            ? static_cast<long long>(tc.total_steps) * tc.batch_size * tc.window
            : cfg.get_ll("corpus.tokens");
    const std::vector<uint16_t> corpus = gen_pretrain_corpus(
        cfg.parse_task_list("matrix.tasks"), vocab, corpus_tokens, cfg.get_u64("corpus.seed"));
    if (!cfg.get("corpus.dump").empty()) {
        write_corpus(cfg.get("corpus.dump"), corpus, vocab);
    }

    ModelParams<T> model = ModelParams<T>::init(mc, derive_seed(tc.seed, "init"));

    InjectConfig inject;
    inject.fraction = mode == PretrainMode::pause ? cfg.get_double("pause.fraction") : 0.0;
    inject.trim = cfg.get_bool("pause.trim");
    inject.pause_id = vocab.pause_id();

    const PretrainResult res = train_pretrain(model, corpus, tc, mode, inject);

    PretrainSummary out;
    out.tokens_seen = res.tokens_seen;
    out.meaningful_tokens = res.meaningful_tokens;
    out.final_loss = res.final_loss;

    const std::string name = mode == PretrainMode::pause ? "pausept" : "stdpt";
    fs::path ckpt = cfg.is_auto("pretrain.out") ? paths.checkpoints / (name + ".ckpt")
                                                : fs::path(cfg.get("pretrain.out"));
    fs::create_directories(ckpt.parent_path().empty() ? "." : ckpt.parent_path());
    CheckpointMeta meta;
    meta.vocab_hash = vocab.hash();
    meta.train_digest = config_digest(cfg);
    meta.step = tc.total_steps;
    save_checkpoint(ckpt.string(), model, meta);
    out.checkpoint = ckpt.string();

    const fs::path curve = paths.curves / ("pretrain_" + name + ".csv");
    write_curve_csv(curve.string(), res.curve);
    out.curve = curve.string();
    return out;
}

template <typename T>
ModelParams<T> load_or_init(const RunConfig& cfg, const Vocab& vocab, const std::string& init_path,
                            uint64_t init_seed) {
    const ModelConfig mc = cfg.model_config(vocab.size());
    if (init_path.empty()) {
        return ModelParams<T>::init(mc, init_seed);
    }
    return load_checkpoint<T>(init_path, &mc, vocab.hash()).params;
}

struct CellSpec {
    FinetuneMode mode = FinetuneMode::pause;
    int m_ft = 0;
    int m_inf = 0;
    Placement placement = Placement::append;
    uint64_t seed = 0;
    std::string init_checkpoint; // empty = random init
    std::string out_checkpoint;  // empty = do not save
    std::string curve_path;      // empty = do not write
};

/// One finetune + one evaluation; the shared building block of matrix cells,
/// sweeps and the placement comparison.
template <typename T>
MetricsRow run_cell(const RunConfig& cfg, const Vocab& vocab, const TaskSpec& task,
                    const CellSpec& cell) {
    const double t0 = now_seconds();

    TrainConfig tc = cfg.train_config(true);
    tc.seed = cell.seed;

    ModelParams<T> model =
        load_or_init<T>(cfg, vocab, cell.init_checkpoint, derive_seed(cell.seed, "init"));

    const std::vector<FinetuneExample> dataset =
        build_dataset(vocab, task, cfg.get_int("task.train_n"));
    const FinetuneResult ft = train_finetune(model, dataset, tc, cell.mode, cell.m_ft,
                                             vocab.pause_id(), cell.placement);
    if (!cell.curve_path.empty()) {
        write_curve_csv(cell.curve_path, ft.curve);
    }
    if (!cell.out_checkpoint.empty()) {
        CheckpointMeta meta;
        meta.vocab_hash = vocab.hash();
        meta.train_digest = config_digest(cfg);
        meta.step = tc.total_steps;
        save_checkpoint(cell.out_checkpoint, model, meta);
    }

    TaskSpec test_spec = task;
    test_spec.split = Split::test;
    const std::vector<StringExample> test =
        gen_task_examples(test_spec, cfg.get_int("task.test_n"));
    const EvalOutcome ev = evaluate_model(model, vocab, test, cell.m_inf, cell.placement,
                                          vocab.pause_id(), cfg.get_bool("pause.mask_logit"),
                                          cfg.get_int("eval.max_new"), tc.threads);

    MetricsRow row;
    row.task = task.name();
    row.m_ft = cell.m_ft;
    row.m_inf = cell.m_inf;
    row.placement = placement_name(cell.placement);
    row.seed = cell.seed;
    row.em = ev.em;
    row.token_accuracy = ev.token_accuracy;
    row.steps = tc.total_steps;
    row.wall_seconds = cfg.get("report.timing") == "real" ? now_seconds() - t0 : 0.0;
    return row;
}

std::string resolve_matrix_ckpt(const RunConfig& cfg, const RunPaths& paths, bool pause_pt) {
    const std::string key = pause_pt ? "matrix.pausept" : "matrix.stdpt";
    if (!cfg.is_auto(key)) {
        return cfg.get(key);
    }
    return (paths.checkpoints / (pause_pt ? "pausept.ckpt" : "stdpt.ckpt")).string();
}

/// Makes sure the named pretraining checkpoint exists; trains it on demand
/// when allowed, otherwise points at the command that would create it.
std::string ensure_pretrained(const RunConfig& cfg, const RunPaths& paths, bool pause_pt) {
    const std::string path = resolve_matrix_ckpt(cfg, paths, pause_pt);
    if (fs::exists(path)) {
        return path;
    }
    if (!cfg.get_bool("matrix.train_missing")) {
        const std::string mode = pause_pt ? "pause" : "standard";
        throw ConfigError("missing " + mode + "-pretrained checkpoint '" + path +
                          "'; run `pause-lab pretrain --pretrain.mode " + mode +
                          " --pretrain.out " + path +
                          "` first, or pass --matrix.train-missing true");
    }
    RunConfig sub = cfg;
    sub.set("pretrain.mode", pause_pt ? "pause" : "standard");
    sub.set("pretrain.out", path);
    const PretrainSummary s = cfg.precision() == Precision::f64 ? pretrain_impl<double>(sub, paths)
                                                                : pretrain_impl<float>(sub, paths);
    return s.checkpoint;
}

template <typename T>
std::vector<MetricsRow> matrix_impl(const RunConfig& cfg, const RunPaths& paths) {
    const Vocab vocab = shared_vocab();
    const std::vector<TaskSpec> tasks = cfg.parse_task_list("matrix.tasks");
    const std::vector<uint64_t> seeds = cfg.seeds();
    const int m_ft = cfg.get_int("pause.m_ft");
    const int m_inf = resolve_m_inf(cfg, m_ft);
    const Placement placement = parse_placement(cfg.get("pause.placement"));

    const std::string stdpt = ensure_pretrained(cfg, paths, false);
    const std::string pausept = ensure_pretrained(cfg, paths, true);

    std::vector<MetricsRow> rows;
    for (Variant v : {Variant::StdPT_StdFT, Variant::StdPT_PauseFT, Variant::PausePT_StdFT,
                      Variant::PausePT_PauseFT}) {
        for (const TaskSpec& task : tasks) {
            for (uint64_t seed : seeds) {
                CellSpec cell;
                cell.mode =
                    variant_uses_pause_ft(v) ? FinetuneMode::pause : FinetuneMode::standard;
                cell.m_ft = variant_uses_pause_ft(v) ? m_ft : 0;
                cell.m_inf = variant_uses_pause_ft(v) ? m_inf : 0;
                cell.placement = placement;
                cell.seed = seed;
                cell.init_checkpoint = variant_uses_pause_pt(v) ? pausept : stdpt;
                cell.curve_path =
                    (paths.curves / ("matrix_" + std::string(variant_name(v)) + "_" +
                                     sanitize(task.name()) + "_s" + std::to_string(seed) + ".csv"))
                        .string();
                MetricsRow row = run_cell<T>(cfg, vocab, task, cell);
                row.variant = variant_name(v);
                rows.push_back(std::move(row));
                std::cout << "[matrix] " << rows.back().variant << " " << rows.back().task
                          << " seed=" << seed << " EM=" << rows.back().em << "\n";
            }
        }
    }
    return rows;
}

template <typename T>
std::vector<SweepMftRow> sweep_mft_impl(const RunConfig& cfg, const RunPaths& paths) {
    const Vocab vocab = shared_vocab();
    const Variant variant = parse_variant(cfg.get("sweep.variant"));
    const std::vector<TaskSpec> tasks = cfg.parse_task_list("task.spec");
    const TaskSpec task = tasks.front();
    const std::vector<int> grid = cfg.int_list("sweep.mft_grid");
    if (grid.empty()) {
        throw ConfigError("sweep.mft_grid is empty");
    }
    for (int m : grid) {
        if (m < 0) {
            throw RangeError("sweep.mft_grid values must be >= 0");
        }
    }
    const std::string init = ensure_pretrained(cfg, paths, variant_uses_pause_pt(variant));
    const Placement placement = parse_placement(cfg.get("pause.placement"));
    const int max_positions = cfg.get_int("model.max_positions");

    // Longest train/test sequence must still fit after m_ft pauses.
    TaskSpec probe = task;
    probe.split = Split::train;
    long long longest = 0;
    for (const StringExample& ex : gen_task_examples(probe, cfg.get_int("task.train_n"))) {
        longest = std::max(longest,
                           static_cast<long long>(ex.prefix.size() + ex.target.size()) + 1);
    }

    std::vector<SweepMftRow> rows;
    std::ofstream csv(paths.dir / "sweep_mft.csv", std::ios::binary);
    csv << "M_ft,seed,EM\n";
    for (int m : grid) {
        if (!variant_uses_pause_ft(variant) && m != 0) {
            throw ConfigError(std::string(variant_name(variant)) +
                              " cannot sweep nonzero m_ft (standard finetuning)");
        }
        if (longest + m > max_positions) {
            csv << "# warning: M_ft=" << m << " skipped (sequences exceed max_positions "
                << max_positions << ")\n";
            rows.push_back({m, 0, 0.0, true});
            continue;
        }
        for (uint64_t seed : cfg.seeds()) {
            CellSpec cell;
            cell.mode = m == 0 && !variant_uses_pause_ft(variant) ? FinetuneMode::standard
                                                                  : FinetuneMode::pause;
            cell.m_ft = m;
            cell.m_inf = m; // matched inference delay per grid point
            cell.placement = placement;
            cell.seed = seed;
            cell.init_checkpoint = init;
            const MetricsRow row = run_cell<T>(cfg, vocab, task, cell);
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%d,%llu,%.6f\n", m,
                          static_cast<unsigned long long>(seed), row.em);
            csv << buf;
            rows.push_back({m, seed, row.em, false});
            std::cout << "[sweep-mft] M_ft=" << m << " seed=" << seed << " EM=" << row.em << "\n";
        }
    }

    // Per-point mean and the labeled best, rather than silently selecting one.
    std::map<int, std::vector<double>> by_m;
    for (const SweepMftRow& r : rows) {
        if (!r.skipped) {
            by_m[r.m_ft].push_back(r.em);
        }
    }
    double best = -1.0;
    int best_m = -1;
    for (const auto& [m, ems] : by_m) {
        const double mu = mean_of(ems);
        std::cout << "[sweep-mft] M_ft=" << m << " mean EM=" << mu << " +/- " << pstd_of(ems)
                  << "\n";
        if (mu > best) {
            best = mu;
            best_m = m;
        }
    }
    if (best_m >= 0) {
        std::cout << "[sweep-mft] best-of-grid (max mean EM, reported not selected): M_ft="
                  << best_m << " EM=" << best << "\n";
    }
    return rows;
}

template <typename T>
std::vector<SweepMinfRow> sweep_minf_impl(const RunConfig& cfg, const RunPaths& paths) {
    const Vocab vocab = shared_vocab();
    const std::string ckpt = cfg.get("eval.checkpoint");
    if (ckpt.empty()) {
        throw ConfigError("sweep-minf needs eval.checkpoint (a finetuned model)");
    }
    const int m_ft = cfg.get_int("pause.m_ft");
    std::vector<int> grid;
    if (cfg.is_auto("sweep.minf_grid")) {
        grid = {0, 2, 5, 10, 15, 20, 25};
    } else {
        grid = cfg.int_list("sweep.minf_grid");
    }
    // The zero-delay probe and the matched delay are always part of the sweep.
    for (int required : {0, m_ft}) {
        if (std::find(grid.begin(), grid.end(), required) == grid.end()) {
            grid.push_back(required);
        }
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    const std::vector<TaskSpec> tasks = cfg.parse_task_list("task.spec");
    TaskSpec test_spec = tasks.front();
    test_spec.split = Split::test;
    const std::vector<StringExample> test =
        gen_task_examples(test_spec, cfg.get_int("task.test_n"));

    ModelParams<T> model = load_or_init<T>(cfg, vocab, ckpt, 0);
    const Placement placement = parse_placement(cfg.get("pause.placement"));
    const int max_positions = cfg.get_int("model.max_positions");

    std::vector<SweepMinfRow> rows;
    std::ofstream csv(paths.dir / "sweep_minf.csv", std::ios::binary);
    csv << "M_inf,EM\n";
    for (int m : grid) {
        long long longest = 0;
        for (const StringExample& ex : test) {
            longest = std::max(longest, static_cast<long long>(ex.prefix.size()) + m +
                                            cfg.get_int("eval.max_new"));
        }
        if (longest > max_positions) {
            csv << "# warning: M_inf=" << m << " skipped (sequences exceed max_positions "
                << max_positions << ")\n";
            continue;
        }
        const EvalOutcome ev = evaluate_model(model, vocab, test, m, placement, vocab.pause_id(),
                                              cfg.get_bool("pause.mask_logit"),
                                              cfg.get_int("eval.max_new"),
                                              cfg.get_int("train.threads"));
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%d,%.6f\n", m, ev.em);
        csv << buf;
        rows.push_back({m, ev.em});
        std::cout << "[sweep-minf] M_inf=" << m << " EM=" << ev.em << "\n";
    }
    return rows;
}

template <typename T>
std::vector<PlacementRow> placement_impl(const RunConfig& cfg, const RunPaths& paths) {
    const Vocab vocab = shared_vocab();
    const Variant variant = parse_variant(cfg.get("placement.variant"));
    const int m = cfg.get_int("placement.m");
    validate_variant(variant, m);
    if (m < 1) {
        throw RangeError("placement comparison needs m >= 1");
    }
    const std::vector<TaskSpec> tasks = cfg.parse_task_list("task.spec");
    const TaskSpec task = tasks.front();
    const std::string init = ensure_pretrained(cfg, paths, variant_uses_pause_pt(variant));

    std::vector<PlacementRow> rows;
    for (uint64_t seed : cfg.seeds()) {
        PlacementRow pr;
        pr.seed = seed;
        for (Placement placement : {Placement::append, Placement::prepend}) {
            CellSpec cell;
            cell.mode = FinetuneMode::pause;
            cell.m_ft = m;
            cell.m_inf = m;
            cell.placement = placement;
            cell.seed = seed;
            cell.init_checkpoint = init;
            const MetricsRow row = run_cell<T>(cfg, vocab, task, cell);
            (placement == Placement::append ? pr.em_append : pr.em_prepend) = row.em;
        }
        rows.push_back(pr);
        std::cout << "[placement] seed=" << seed << " append=" << pr.em_append
                  << " prepend=" << pr.em_prepend << " delta=" << pr.delta() << "\n";
    }

    std::ofstream report(paths.dir / "placement_report.txt", std::ios::binary);
    report << "seed  append  prepend  delta(append-prepend)\n";
    std::vector<double> deltas;
    char buf[128];
    for (const PlacementRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-5llu %.4f  %.4f   %+.4f\n",
                      static_cast<unsigned long long>(r.seed), r.em_append, r.em_prepend,
                      r.delta());
        report << buf;
        deltas.push_back(r.delta());
    }
    std::snprintf(buf, sizeof(buf), "mean delta %+.4f +/- %.4f (paired over %zu seeds)\n",
                  mean_of(deltas), pstd_of(deltas), deltas.size());
    report << buf;
    return rows;
}

template <typename T>
MetricsRow filler_impl(const RunConfig& cfg, const RunPaths& paths) {
    const Vocab vocab = shared_vocab();
    const std::string ckpt = cfg.get("eval.checkpoint");
    if (ckpt.empty()) {
        throw ConfigError("filler needs eval.checkpoint (a StdPT_StdFT-finetuned model)");
    }
    const std::string filler = cfg.get("filler.token");
    if (filler == "<pause>") {
        throw ConfigError("the filler must be an in-vocabulary token, not <pause>");
    }
    if (filler.size() != 1 || !vocab.contains_char(filler[0])) {
        throw ConfigError("filler.token '" + filler + "' is not a vocabulary character");
    }
    const int filler_id = vocab.char_id(filler[0]);
    if (filler_id == vocab.pause_id()) {
        throw ConfigError("the filler must differ from the pause token");
    }
    const int n = cfg.get_int("filler.n");
    if (n < 0) {
        throw RangeError("filler.n must be >= 0");
    }

    const std::vector<TaskSpec> tasks = cfg.parse_task_list("task.spec");
    TaskSpec test_spec = tasks.front();
    test_spec.split = Split::test;
    const std::vector<StringExample> test =
        gen_task_examples(test_spec, cfg.get_int("task.test_n"));

    ModelParams<T> model = load_or_init<T>(cfg, vocab, ckpt, 0);
    const double t0 = now_seconds();
    const EvalOutcome ev =
        evaluate_model(model, vocab, test, n, Placement::append, filler_id,
                       cfg.get_bool("pause.mask_logit"), cfg.get_int("eval.max_new"),
                       cfg.get_int("train.threads"));

    MetricsRow row;
    row.variant = "StdPT_StdFT";
    row.task = test_spec.name();
    row.m_ft = 0;
    row.m_inf = n;
    row.placement = "append";
    row.seed = cfg.get_u64("train.seed");
    row.em = ev.em;
    row.token_accuracy = ev.token_accuracy;
    row.steps = 0; // inference only
    row.wall_seconds = cfg.get("report.timing") == "real" ? now_seconds() - t0 : 0.0;

    std::ofstream csv(paths.dir / "filler.csv", std::ios::binary);
    csv << metrics_csv_text({row});
    std::cout << "[filler] n=" << n << " token='" << filler << "' EM=" << ev.em << "\n";
    return row;
}

} // namespace

// ---------------------------------------------------------------------------
// public command entry points (precision dispatch)
// ---------------------------------------------------------------------------

PretrainSummary cmd_pretrain(const RunConfig& cfg) {
    const RunPaths paths = prepare_run_dir(cfg);
    return cfg.precision() == Precision::f64 ? pretrain_impl<double>(cfg, paths)
                                             : pretrain_impl<float>(cfg, paths);
}

namespace {

template <typename T>
FinetuneSummary finetune_impl(const RunConfig& cfg, const RunPaths& paths) {
    const Vocab vocab = shared_vocab();
    const std::string mode_s = cfg.get("finetune.mode");
    if (mode_s != "standard" && mode_s != "pause") {
        throw ConfigError("finetune.mode must be standard or pause, got '" + mode_s + "'");
    }
    const FinetuneMode mode =
        mode_s == "pause" ? FinetuneMode::pause : FinetuneMode::standard;
    const int m_ft = mode == FinetuneMode::pause ? cfg.get_int("pause.m_ft") : 0;
    if (mode == FinetuneMode::standard && cfg.get_int("pause.m_ft") != 0) {
        throw ConfigError("standard finetuning requires pause.m_ft = 0 (got " +
                          cfg.get("pause.m_ft") + ")");
    }

    const std::vector<TaskSpec> tasks = cfg.parse_task_list("task.spec");
    const TaskSpec task = tasks.front();

    CellSpec cell;
    cell.mode = mode;
    cell.m_ft = m_ft;
    cell.m_inf = resolve_m_inf(cfg, m_ft);
    cell.placement = parse_placement(cfg.get("pause.placement"));
    cell.seed = cfg.get_u64("train.seed");
    cell.init_checkpoint = cfg.get("finetune.init");
    cell.out_checkpoint = cfg.is_auto("finetune.out")
                              ? (paths.checkpoints / "finetuned.ckpt").string()
                              : cfg.get("finetune.out");
    cell.curve_path = (paths.curves / "finetune.csv").string();

    MetricsRow row = run_cell<T>(cfg, vocab, task, cell);
    row.variant = mode == FinetuneMode::pause ? "PauseFT" : "StdFT";
    std::cout << "[finetune] " << task.name() << " EM=" << row.em << " -> "
              << cell.out_checkpoint << "\n";

    FinetuneSummary out;
    out.checkpoint = cell.out_checkpoint;
    out.curve = cell.curve_path;
    out.em = row.em; // loss history lives in the curve CSV
    return out;
}

template <typename T>
MetricsRow eval_impl(const RunConfig& cfg, const RunPaths& paths) {
    const Vocab vocab = shared_vocab();
    const std::string ckpt = cfg.get("eval.checkpoint");
    if (ckpt.empty()) {
        throw ConfigError("eval needs eval.checkpoint");
    }
    ModelParams<T> model = load_or_init<T>(cfg, vocab, ckpt, 0);
    const std::vector<TaskSpec> tasks = cfg.parse_task_list("task.spec");
    TaskSpec test_spec = tasks.front();
    test_spec.split = Split::test;
    const std::vector<StringExample> test =
        gen_task_examples(test_spec, cfg.get_int("task.test_n"));

    const int m_ft = cfg.get_int("pause.m_ft");
    const int m_inf = resolve_m_inf(cfg, m_ft);
    const double t0 = now_seconds();
    const EvalOutcome ev = evaluate_model(
        model, vocab, test, m_inf, parse_placement(cfg.get("pause.placement")), vocab.pause_id(),
        cfg.get_bool("pause.mask_logit"), cfg.get_int("eval.max_new"),
        cfg.get_int("train.threads"));

    MetricsRow row;
    row.variant = "eval";
    row.task = test_spec.name();
    row.m_ft = m_ft;
    row.m_inf = m_inf;
    row.placement = cfg.get("pause.placement");
    row.seed = cfg.get_u64("train.seed");
    row.em = ev.em;
    row.token_accuracy = ev.token_accuracy;
    row.steps = 0;
    row.wall_seconds = cfg.get("report.timing") == "real" ? now_seconds() - t0 : 0.0;

    std::ofstream csv(paths.dir / "metrics.csv", std::ios::binary);
    csv << metrics_csv_text({row});
    std::cout << "[eval] " << row.task << " M_inf=" << m_inf << " EM=" << ev.em
              << " token_acc=" << ev.token_accuracy << "\n";
    return row;
}

} // namespace

FinetuneSummary cmd_finetune(const RunConfig& cfg) {
    const RunPaths paths = prepare_run_dir(cfg);
    return cfg.precision() == Precision::f64 ? finetune_impl<double>(cfg, paths)
                                             : finetune_impl<float>(cfg, paths);
}

MetricsRow cmd_eval(const RunConfig& cfg) {
    const RunPaths paths = prepare_run_dir(cfg);
    return cfg.precision() == Precision::f64 ? eval_impl<double>(cfg, paths)
                                             : eval_impl<float>(cfg, paths);
}

std::vector<MetricsRow> cmd_matrix(const RunConfig& cfg) {
    const RunPaths paths = prepare_run_dir(cfg);
    std::vector<MetricsRow> rows = cfg.precision() == Precision::f64
                                       ? matrix_impl<double>(cfg, paths)
                                       : matrix_impl<float>(cfg, paths);
    emit_report(rows, (paths.dir / "metrics.csv").string(), (paths.dir / "summary.txt").string());
    std::cout << summary_text(rows);
    return rows;
}

std::vector<SweepMftRow> cmd_sweep_mft(const RunConfig& cfg) {
    const RunPaths paths = prepare_run_dir(cfg);
    return cfg.precision() == Precision::f64 ? sweep_mft_impl<double>(cfg, paths)
                                             : sweep_mft_impl<float>(cfg, paths);
}

std::vector<SweepMinfRow> cmd_sweep_minf(const RunConfig& cfg) {
    const RunPaths paths = prepare_run_dir(cfg);
    return cfg.precision() == Precision::f64 ? sweep_minf_impl<double>(cfg, paths)
                                             : sweep_minf_impl<float>(cfg, paths);
}

std::vector<PlacementRow> cmd_placement(const RunConfig& cfg) {
    const RunPaths paths = prepare_run_dir(cfg);
    return cfg.precision() == Precision::f64 ? placement_impl<double>(cfg, paths)
                                             : placement_impl<float>(cfg, paths);
}

MetricsRow cmd_filler(const RunConfig& cfg) {
    const RunPaths paths = prepare_run_dir(cfg);
    return cfg.precision() == Precision::f64 ? filler_impl<double>(cfg, paths)
                                             : filler_impl<float>(cfg, paths);
}

} // namespace pauselab
