// pause-lab: train and probe decoder-only models with inference-time delays.
//
// Subcommands map one-to-one onto the experiment drivers:
//   pretrain    train a base model (standard or pause-injected)
//   finetune    finetune on a synthetic task (standard or delayed)
//   eval        exact-match evaluation of a finetuned checkpoint
//   matrix      the 2x2 {Std,Pause}PT x {Std,Pause}FT grid over tasks and seeds
//   sweep-mft   finetuning-delay sweep (one finetune+eval per grid point/seed)
//   sweep-minf  inference-delay robustness sweep (evaluation only)
//   placement   paired append-vs-prepend comparison
//   filler      in-vocabulary filler-delay baseline (evaluation only)
//
// Every config key doubles as a CLI flag (underscores become dashes):
// `pause.m_ft = 10` in a config file equals `--pause.m-ft 10`.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pauselab/config.hpp"
#include "pauselab/errors.hpp"
#include "pauselab/experiments.hpp"

namespace {

std::string flag_for_key(const std::string& key) {
    std::string flag = "--" + key;
    for (char& c : flag) {
        if (c == '_') {
            c = '-';
        }
    }
    return flag;
}

struct SubcommandState {
    CLI::App* app = nullptr;
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides; // key, raw value
};

void register_common(SubcommandState& st) {
    st.app->add_option("-c,--config", st.config_path, "key = value config file");
    for (const pauselab::ConfigKey& k : pauselab::config_schema()) {
        const std::string key = k.key;
        st.app
            ->add_option_function<std::string>(
                flag_for_key(key),
                [&st, key](const std::string& value) { st.overrides.emplace_back(key, value); },
                k.help)
            ->expected(1);
    }
}

pauselab::RunConfig resolve(const SubcommandState& st) {
    pauselab::RunConfig cfg;
    if (!st.config_path.empty()) {
        cfg.load_file(st.config_path);
    }
    for (const auto& [key, value] : st.overrides) {
        cfg.set(key, value);
    }
    cfg.apply_env();
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pause-lab: delayed next-token prediction laboratory"};
    app.require_subcommand(1);

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"pretrain", "train a base model on the synthetic corpus"},
        {"finetune", "finetune a checkpoint on one task"},
        {"eval", "evaluate a checkpoint (exact match + token accuracy)"},
        {"matrix", "run the four-variant training matrix"},
        {"sweep-mft", "sweep the finetuning delay count"},
        {"sweep-minf", "sweep the inference delay count (no training)"},
        {"placement", "compare appended vs prepended delays"},
        {"filler", "filler-character delay baseline (no training)"},
    };

    std::vector<SubcommandState> states(commands.size());
    for (size_t i = 0; i < commands.size(); ++i) {
        states[i].app = app.add_subcommand(commands[i].first, commands[i].second);
        register_common(states[i]);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        for (size_t i = 0; i < commands.size(); ++i) {
            if (!states[i].app->parsed()) {
                continue;
            }
            const pauselab::RunConfig cfg = resolve(states[i]);
            const std::string& name = commands[i].first;
            if (name == "pretrain") {
                const auto s = pauselab::cmd_pretrain(cfg);
                std::cout << "[pretrain] tokens_seen=" << s.tokens_seen
                          << " meaningful=" << s.meaningful_tokens
                          << " final_loss=" << s.final_loss << " -> " << s.checkpoint << "\n";
            } else if (name == "finetune") {
                pauselab::cmd_finetune(cfg);
            } else if (name == "eval") {
                pauselab::cmd_eval(cfg);
            } else if (name == "matrix") {
                pauselab::cmd_matrix(cfg);
            } else if (name == "sweep-mft") {
                pauselab::cmd_sweep_mft(cfg);
            } else if (name == "sweep-minf") {
                pauselab::cmd_sweep_minf(cfg);
            } else if (name == "placement") {
                pauselab::cmd_placement(cfg);
            } else if (name == "filler") {
                pauselab::cmd_filler(cfg);
            }
        }
    } catch (const pauselab::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "fatal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
