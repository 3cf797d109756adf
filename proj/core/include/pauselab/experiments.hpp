#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pauselab/config.hpp"
#include "pauselab/tasks.hpp"

namespace pauselab {

/// The four training techniques: {standard, pause}-pretraining crossed with
/// {standard, pause}-finetuning.
enum class Variant : uint8_t { StdPT_StdFT, StdPT_PauseFT, PausePT_StdFT, PausePT_PauseFT };

const char* variant_name(Variant v);
Variant parse_variant(const std::string& s);
bool variant_uses_pause_pt(Variant v);
bool variant_uses_pause_ft(Variant v);

/// Parse-time constraint: StdFT variants force m_ft == 0.
void validate_variant(Variant v, int m_ft);

/// One evaluated result record.
struct MetricsRow {
    std::string variant;
    std::string task;
    int m_ft = 0;
    int m_inf = 0;
    std::string placement = "append";
    uint64_t seed = 0;
    double em = 0.0;
    double token_accuracy = 0.0;
    long long steps = 0;
    double wall_seconds = 0.0;
};

/// Exact CSV schema: variant,task,M_ft,M_inf,placement,seed,EM,token_accuracy,steps,wall_seconds
std::string metrics_csv_text(const std::vector<MetricsRow>& rows);

/// Aligned text table grouped by (variant, task, M_ft, M_inf, placement) with
/// population mean +/- std over seeds.
std::string summary_text(const std::vector<MetricsRow>& rows);

/// Writes both files; empty rows is a usage error.
void emit_report(const std::vector<MetricsRow>& rows, const std::string& csv_path,
                 const std::string& summary_path);

// -- command drivers (shared by the CLI and the test suites) -----------------

struct PretrainSummary {
    std::string checkpoint;
    std::string curve;
    long long tokens_seen = 0;
    long long meaningful_tokens = 0;
    double final_loss = 0.0;
};

struct FinetuneSummary {
    std::string checkpoint;
    std::string curve;
    double em = 0.0;
};

struct SweepMftRow {
    int m_ft = 0;
    uint64_t seed = 0;
    double em = 0.0;
    bool skipped = false;
};

struct SweepMinfRow {
    int m_inf = 0;
    double em = 0.0;
};

struct PlacementRow {
    uint64_t seed = 0;
    double em_append = 0.0;
    double em_prepend = 0.0;
    double delta() const { return em_append - em_prepend; }
};

PretrainSummary cmd_pretrain(const RunConfig& cfg);
FinetuneSummary cmd_finetune(const RunConfig& cfg);
MetricsRow cmd_eval(const RunConfig& cfg);
std::vector<MetricsRow> cmd_matrix(const RunConfig& cfg);
std::vector<SweepMftRow> cmd_sweep_mft(const RunConfig& cfg);
std::vector<SweepMinfRow> cmd_sweep_minf(const RunConfig& cfg);
std::vector<PlacementRow> cmd_placement(const RunConfig& cfg);
MetricsRow cmd_filler(const RunConfig& cfg);

/// The vocabulary every run shares: union of all task alphabets, so
/// checkpoints stay interchangeable across task choices.
Vocab shared_vocab();

} // namespace pauselab
