#ifndef BOOSTLORA_EXPERIMENT_HPP
#define BOOSTLORA_EXPERIMENT_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "boostlora/config.hpp"

namespace boostlora {

struct ArmResult {
    std::string name;
    std::string dir;
    BoostRun run;
};

/// Executes every arm sequentially on bit-identical splits and one shared
/// pretrained base model. Each arm's directory receives rounds.jsonl,
/// curves.csv, checkpoint.bstl, margins.bin and summary.json.
std::vector<ArmResult> run_experiment(const ExperimentConfig& cfg, int threads,
                                      std::ostream* log = nullptr);

/// Per-arm output directory: <out_root>/<experiment>-<arm>.
std::string arm_dir(const ExperimentConfig& cfg, const std::string& arm_name);

/// Margin snapshots container (same BSTL framing as checkpoints).
void write_margins(const std::string& path, const std::vector<double>& initial,
                   const std::vector<std::vector<double>>& per_round);
struct MarginSnapshots {
    std::vector<double> initial;
    std::vector<std::vector<double>> per_round;
};
MarginSnapshots read_margins(const std::string& path);

void write_summary(const std::string& path, const ExperimentConfig& cfg,
                   const std::string& arm_name, const BoostRun& run, Index n_train,
                   Index n_test);

} // namespace boostlora

#endif // BOOSTLORA_EXPERIMENT_HPP
