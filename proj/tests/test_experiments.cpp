// Config resolution, variant constraints, report formatting, and micro-scale
// end-to-end runs of the experiment drivers.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "pauselab/config.hpp"
#include "pauselab/errors.hpp"
#include "pauselab/experiments.hpp"

using namespace pauselab;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("pauselab_exp_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

/// Config small enough that a full matrix run takes seconds.
RunConfig micro_config(const fs::path& run_dir) {
    RunConfig cfg;
    cfg.set("model.n_layers", "1");
    cfg.set("model.n_heads", "2");
    cfg.set("model.d_model", "16");
    cfg.set("model.d_ff", "32");
    cfg.set("model.max_positions", "64");
    cfg.set("train.steps", "12");
    cfg.set("train.finetune_steps", "12");
    cfg.set("train.batch_size", "2");
    cfg.set("train.window", "32");
    cfg.set("train.warmup_steps", "2");
    cfg.set("task.spec", "addition:2");
    cfg.set("task.train_n", "32");
    cfg.set("task.test_n", "16");
    cfg.set("matrix.tasks", "addition:2");
    cfg.set("matrix.train_missing", "true");
    cfg.set("pause.m_ft", "3");
    cfg.set("run.seeds", "0,1");
    cfg.set("run.dir", run_dir.string());
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

} // namespace

TEST_CASE("config files parse with comments and unknown keys are rejected") {
    const fs::path dir = fresh_dir("config");
    const fs::path file = dir / "run.conf";
    std::ofstream(file) << "# a comment\n"
                        << "model.d_model = 64   # trailing comment\n"
                        << "\n"
                        << "pause.m_ft = 5\n";
    RunConfig cfg;
    cfg.load_file(file.string());
    CHECK(cfg.get_int("model.d_model") == 64);
    CHECK(cfg.get_int("pause.m_ft") == 5);

    CHECK_THROWS_AS(cfg.set("model.bogus", "1"), ConfigError);
    std::ofstream(file) << "model.d_model 64\n";
    RunConfig cfg2;
    CHECK_THROWS_AS(cfg2.load_file(file.string()), ConfigError);
    CHECK_THROWS_AS(cfg2.get_int("model.activation"), ConfigError);
    CHECK_THROWS_AS(cfg2.get_bool("model.d_model"), ConfigError);
}

TEST_CASE("environment seed override wins") {
    RunConfig cfg;
    cfg.set("train.seed", "5");
    setenv("PAUSE_LAB_SEED", "99", 1);
    cfg.apply_env();
    unsetenv("PAUSE_LAB_SEED");
    CHECK(cfg.get_u64("train.seed") == 99);
}

TEST_CASE("resolved config text is sorted and stable") {
    RunConfig cfg;
    const std::string text = cfg.resolved_text();
    CHECK(text == RunConfig().resolved_text());
    // every schema key appears
    for (const ConfigKey& k : config_schema()) {
        CHECK(text.find(std::string(k.key) + " = ") != std::string::npos);
    }
    std::string prev;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const std::string key = line.substr(0, line.find(" = "));
        CHECK(prev < key);
        prev = key;
    }
}

TEST_CASE("d_attn defaults to d_model over n_heads") {
    RunConfig cfg;
    cfg.set("model.d_model", "128");
    cfg.set("model.n_heads", "4");
    CHECK(cfg.model_config(10).d_attn == 32);
    cfg.set("model.d_attn", "16");
    CHECK(cfg.model_config(10).d_attn == 16);
}

TEST_CASE("variant parsing and the StdFT zero-delay constraint") {
    CHECK(parse_variant("PausePT_PauseFT") == Variant::PausePT_PauseFT);
    CHECK_THROWS_AS(parse_variant("PausePT"), ConfigError);
    CHECK(variant_uses_pause_pt(Variant::PausePT_StdFT));
    CHECK_FALSE(variant_uses_pause_ft(Variant::PausePT_StdFT));

    CHECK_NOTHROW(validate_variant(Variant::StdPT_StdFT, 0));
    CHECK_THROWS_AS(validate_variant(Variant::StdPT_StdFT, 10), ConfigError);
    CHECK_THROWS_AS(validate_variant(Variant::PausePT_StdFT, 10), ConfigError);
    CHECK_NOTHROW(validate_variant(Variant::PausePT_PauseFT, 10));
}

TEST_CASE("metrics CSV header and formatting are pinned") {
    MetricsRow row;
    row.variant = "StdPT_StdFT";
    row.task = "lookup:8";
    row.m_ft = 10;
    row.m_inf = 10;
    row.placement = "append";
    row.seed = 3;
    row.em = 0.75;
    row.token_accuracy = 0.9;
    row.steps = 100;
    row.wall_seconds = 0.0;
    const std::string text = metrics_csv_text({row});
    CHECK(text ==
          "variant,task,M_ft,M_inf,placement,seed,EM,token_accuracy,steps,wall_seconds\n"
          "StdPT_StdFT,lookup:8,10,10,append,3,0.750000,0.900000,100,0.000\n");
}

TEST_CASE("summary reports population mean and std") {
    std::vector<MetricsRow> rows(2);
    for (int i = 0; i < 2; ++i) {
        rows[static_cast<size_t>(i)].variant = "StdPT_StdFT";
        rows[static_cast<size_t>(i)].task = "lookup:8";
        rows[static_cast<size_t>(i)].placement = "append";
        rows[static_cast<size_t>(i)].seed = static_cast<uint64_t>(i);
    }
    rows[0].em = 0.2;
    rows[1].em = 0.4;
    const std::string text = summary_text(rows);
    CHECK(text.find("0.30 +/- 0.10") != std::string::npos);
}

TEST_CASE("emit_report writes byte-identical files on rerun and rejects empties") {
    const fs::path dir = fresh_dir("emit");
    std::vector<MetricsRow> rows(1);
    rows[0].variant = "StdPT_StdFT";
    rows[0].task = "addition:2";
    rows[0].em = 0.5;

    const std::string csv = (dir / "metrics.csv").string();
    const std::string sum = (dir / "summary.txt").string();
    emit_report(rows, csv, sum);
    const std::string csv1 = slurp(csv), sum1 = slurp(sum);
    emit_report(rows, csv, sum);
    CHECK(slurp(csv) == csv1);
    CHECK(slurp(sum) == sum1);

    CHECK_THROWS_AS(emit_report({}, csv, sum), ConfigError);
}

TEST_CASE("file digest distinguishes contents") {
    const fs::path dir = fresh_dir("digest");
    std::ofstream(dir / "a") << "hello";
    std::ofstream(dir / "b") << "hello";
    std::ofstream(dir / "c") << "world";
    CHECK(file_digest((dir / "a").string()) == file_digest((dir / "b").string()));
    CHECK(file_digest((dir / "a").string()) != file_digest((dir / "c").string()));
}

TEST_CASE("pretrain command trains both modes and writes artifacts") {
    const fs::path dir = fresh_dir("pretrain");
    RunConfig cfg = micro_config(dir);

    cfg.set("pretrain.mode", "standard");
    const PretrainSummary std_sum = cmd_pretrain(cfg);
    CHECK(fs::exists(std_sum.checkpoint));
    CHECK(fs::exists(std_sum.curve));
    CHECK(fs::exists(dir / "config.resolved"));
    CHECK(std_sum.tokens_seen == 12LL * 2 * 32);
    CHECK(std_sum.meaningful_tokens == std_sum.tokens_seen);

    cfg.set("pretrain.mode", "pause");
    const PretrainSummary pause_sum = cmd_pretrain(cfg);
    CHECK(pause_sum.tokens_seen == std_sum.tokens_seen); // equal budgets
    CHECK(pause_sum.meaningful_tokens < pause_sum.tokens_seen);

    // Reruns reproduce the checkpoint byte-for-byte.
    const std::string digest = file_digest(pause_sum.checkpoint);
    cmd_pretrain(cfg);
    CHECK(file_digest(pause_sum.checkpoint) == digest);
}

TEST_CASE("matrix covers all four variants and reruns byte-identically") {
    const fs::path dir = fresh_dir("matrix");
    RunConfig cfg = micro_config(dir);
    const std::vector<MetricsRow> rows = cmd_matrix(cfg);

    // 4 variants x 1 task x 2 seeds
    CHECK(rows.size() == 8);
    std::set<std::string> variants;
    for (const MetricsRow& r : rows) {
        variants.insert(r.variant);
        CHECK(r.task == "addition:2");
        CHECK(r.em >= 0.0);
        CHECK(r.em <= 1.0);
        if (r.variant == "StdPT_StdFT" || r.variant == "PausePT_StdFT") {
            CHECK(r.m_ft == 0);
            CHECK(r.m_inf == 0);
        } else {
            CHECK(r.m_ft == 3);
            CHECK(r.m_inf == 3);
        }
    }
    CHECK(variants.size() == 4);
    CHECK(fs::exists(dir / "metrics.csv"));
    CHECK(fs::exists(dir / "summary.txt"));

    const std::string csv1 = slurp(dir / "metrics.csv");
    cmd_matrix(cfg);
    CHECK(slurp(dir / "metrics.csv") == csv1);
}

TEST_CASE("matrix without checkpoints names the pretrain command") {
    const fs::path dir = fresh_dir("matrix_missing");
    RunConfig cfg = micro_config(dir);
    cfg.set("matrix.train_missing", "false");
    try {
        cmd_matrix(cfg);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        CHECK(what.find("pause-lab pretrain") != std::string::npos);
        CHECK(what.find("--pretrain.mode") != std::string::npos);
    }
}

TEST_CASE("sweep-minf always contains the zero and matched delays") {
    const fs::path dir = fresh_dir("sweep_minf");
    RunConfig cfg = micro_config(dir);

    // Build a finetuned checkpoint first.
    cfg.set("pretrain.mode", "standard");
    const PretrainSummary pre = cmd_pretrain(cfg);
    cfg.set("finetune.mode", "pause");
    cfg.set("finetune.init", pre.checkpoint);
    const FinetuneSummary fin = cmd_finetune(cfg);

    cfg.set("eval.checkpoint", fin.checkpoint);
    cfg.set("sweep.minf_grid", "5");
    const auto rows = cmd_sweep_minf(cfg);
    std::set<int> ms;
    for (const auto& r : rows) {
        ms.insert(r.m_inf);
    }
    CHECK(ms.count(0) == 1);
    CHECK(ms.count(3) == 1); // m_ft
    CHECK(ms.count(5) == 1);

    // Evaluation-only: the checkpoint digest is untouched.
    const std::string digest = file_digest(fin.checkpoint);
    cmd_sweep_minf(cfg);
    CHECK(file_digest(fin.checkpoint) == digest);
}

TEST_CASE("sweep-mft skips oversize grid points with a warning row") {
    const fs::path dir = fresh_dir("sweep_mft");
    RunConfig cfg = micro_config(dir);
    cfg.set("sweep.variant", "StdPT_PauseFT");
    cfg.set("sweep.mft_grid", "0,2,60"); // 60 overflows max_positions 64
    cfg.set("run.seeds", "0");
    const auto rows = cmd_sweep_mft(cfg);

    int skipped = 0, ran = 0;
    for (const auto& r : rows) {
        if (r.skipped) {
            ++skipped;
            CHECK(r.m_ft == 60);
        } else {
            ++ran;
        }
    }
    CHECK(skipped == 1);
    CHECK(ran == 2);
    const std::string csv = slurp(dir / "sweep_mft.csv");
    CHECK(csv.find("M_ft,seed,EM") == 0);
    CHECK(csv.find("# warning: M_ft=60 skipped") != std::string::npos);
}

TEST_CASE("placement compares append and prepend per seed") {
    const fs::path dir = fresh_dir("placement");
    RunConfig cfg = micro_config(dir);
    cfg.set("placement.m", "2");
    cfg.set("run.seeds", "0,1");
    const auto rows = cmd_placement(cfg);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].seed == 0);
    CHECK(rows[1].seed == 1);
    CHECK(fs::exists(dir / "placement_report.txt"));
    const std::string report = slurp(dir / "placement_report.txt");
    CHECK(report.find("append") != std::string::npos);
    CHECK(report.find("prepend") != std::string::npos);
    CHECK(report.find("delta") != std::string::npos);
}

TEST_CASE("filler baseline is inference-only and rejects bad fillers") {
    const fs::path dir = fresh_dir("filler");
    RunConfig cfg = micro_config(dir);
    cfg.set("pretrain.mode", "standard");
    const PretrainSummary pre = cmd_pretrain(cfg);
    cfg.set("finetune.mode", "standard");
    cfg.set("pause.m_ft", "0");
    cfg.set("finetune.init", pre.checkpoint);
    const FinetuneSummary fin = cmd_finetune(cfg);

    cfg.set("eval.checkpoint", fin.checkpoint);
    cfg.set("filler.n", "10");
    const std::string digest = file_digest(fin.checkpoint);
    const MetricsRow row = cmd_filler(cfg);
    CHECK(row.m_inf == 10);
    CHECK(row.steps == 0);
    CHECK(file_digest(fin.checkpoint) == digest);
    CHECK(fs::exists(dir / "filler.csv"));

    cfg.set("filler.token", "<pause>");
    CHECK_THROWS_AS(cmd_filler(cfg), ConfigError);
    cfg.set("filler.token", "@");
    CHECK_THROWS_AS(cmd_filler(cfg), ConfigError);
}

TEST_CASE("zero-delay filler equals plain evaluation") {
    const fs::path dir = fresh_dir("filler0");
    RunConfig cfg = micro_config(dir);
    cfg.set("pretrain.mode", "standard");
    const PretrainSummary pre = cmd_pretrain(cfg);
    cfg.set("finetune.mode", "standard");
    cfg.set("pause.m_ft", "0");
    cfg.set("finetune.init", pre.checkpoint);
    const FinetuneSummary fin = cmd_finetune(cfg);

    cfg.set("eval.checkpoint", fin.checkpoint);
    cfg.set("filler.n", "0");
    const MetricsRow filler = cmd_filler(cfg);
    cfg.set("pause.m_inf", "0");
    const MetricsRow plain = cmd_eval(cfg);
    CHECK(filler.em == plain.em);
    CHECK(filler.token_accuracy == plain.token_accuracy);
}
