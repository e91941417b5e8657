#ifndef BOOSTLORA_BOOSTING_HPP
#define BOOSTLORA_BOOSTING_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "boostlora/adapter.hpp"
#include "boostlora/bounds.hpp"
#include "boostlora/dataset.hpp"
#include "boostlora/model.hpp"

namespace boostlora {

struct BoostConfig {
    Index rounds = 20;
    AdapterConfig adapter; ///< rank, proj_dim, groups, basis; seed is overwritten by `seed`
    double lr_base = 5e-4;
    bool lr_scaling = true; ///< lr = lr_base * sqrt(12/p) when p = groups*proj_dim > 12
    int epochs_per_round = 3;
    Index early_stop_threshold = -1; ///< <0 selects max(1, ceil(0.5% of n))
    bool two_phase = false;
    std::uint64_t seed = 0;

    Index batch_size = 32;
    double weight_decay = 0.0;
    double warmup_ratio = 0.1;
    double grad_clip = 1.0;
    double head_lr = 1e-3;
    int head_epochs = 1;
    bool top_recompute = false; ///< recompute the top window from W_{t-1} each round
    bool store_deltas = true;
    bool bound_metrics = true; ///< measure per-round feature norms for the bound
    int threads = 1;

    double effective_lr() const;
    Index resolve_threshold(Index n_train) const;
};

/// Across-module means of the accumulator's rank diagnostics.
struct AggregateRankMeasures {
    double participation_ratio = 0.0;
    double eps_rank = 0.0;
    double epsilon = 0.01;
    double frobenius_norm = 0.0; ///< sqrt of summed squared per-module norms
};

struct RoundReport {
    Index round = 0;
    Index failure_count = 0;      ///< before this round's training
    double train_accuracy = 0.0;  ///< after merge
    double test_accuracy = 0.0;
    double v_norm = 0.0;          ///< l2 norm of the round's trained v (all groups)
    double cumulative_v_norm = 0.0;
    double delta_frobenius = 0.0; ///< aggregate over adapted modules
    AggregateRankMeasures rank_measures; ///< of the 64-bit cumulative delta
    Index optimizer_steps = 0;
    Index regressions = 0; ///< correct -> incorrect flips at merge
};

struct BoostRun {
    BoostConfig cfg;
    std::vector<RoundReport> reports;
    bool early_stopped = false;
    std::uint64_t split_hash = 0;

    FrozenModel final_model;
    std::vector<Matrix> cumulative_deltas;          ///< per adapted module, 64-bit accumulator
    std::vector<std::vector<Matrix>> round_deltas;  ///< [round][module] when store_deltas
    std::vector<std::vector<SvdFactors>> round_windows; ///< [round][module]
    std::vector<Vector> round_v;                    ///< concatenated trained v per round
    std::vector<double> initial_margins;            ///< train margins before round 1
    double initial_train_accuracy = 0.0;
    double initial_test_accuracy = 0.0;
    std::vector<std::vector<double>> round_margins; ///< train margins after each merge
    std::vector<double> round_regression_rates;
    std::vector<Index> round_audit_violations;
    std::vector<double> x_rounds;  ///< per-round round-frozen feature-norm max
    double x_round_frozen = 0.0;   ///< max over rounds
    double x_final = 0.0;          ///< recomputed against the final weights
    double max_hidden = 0.0;       ///< largest H seen across rounds

    double b_total() const;
};

/// Streams per-round reports into runs/<name>/: one JSON object per line in
/// rounds.jsonl and one row in curves.csv. Both files are append-only while
/// the run progresses.
class RunWriter {
  public:
    explicit RunWriter(const std::string& dir);
    void append(const RoundReport& r);
    const std::string& dir() const { return dir_; }

  private:
    std::string dir_;
    std::string rounds_path_;
    std::string curves_path_;
};

/// One line of rounds.jsonl (snake_case, field order fixed).
std::string report_to_json(const RoundReport& r);
std::string curves_csv_header();
std::string report_to_csv_row(const RoundReport& r);

/// Failure set under the current merged weights.
std::vector<Index> extract_failures(const FrozenModel& model, const LabeledDataset& data,
                                    int threads = 1);

struct TrainResult {
    Index steps = 0;
    std::vector<double> loss_curve; ///< per optimizer step
};

/// Trains the adapter's v on the failure rows only: decoupled-weight-decay
/// Adam, cosine schedule with warmup (floored at one step), global gradient
/// clipping. The head never changes here. `seen` (when given) records every
/// row index the optimizer consumed, for audit.
TrainResult train_round(const FrozenModel& model, const LabeledDataset& train,
                        const std::vector<Index>& failures, AdapterState& adapter,
                        const BoostConfig& cfg, Index round, std::vector<Index>* seen = nullptr);

/// Phase 1 of the two-phase schedule: the classification head trains on the
/// full dataset while the adapter stays frozen (v untouched).
void train_head(FrozenModel& model, const LabeledDataset& train, const AdapterState& adapter,
                const BoostConfig& cfg, Index round);

/// Phase 1 trains the head on the full dataset with the adapter frozen;
/// phase 2 delegates to train_round with the head frozen.
TrainResult two_phase_round(FrozenModel& model, const LabeledDataset& train,
                            const std::vector<Index>& failures, AdapterState& adapter,
                            const BoostConfig& cfg, Index round,
                            std::vector<Index>* seen = nullptr);

/// The full boosting loop: evaluate -> failures -> fresh adapter -> train on
/// failures -> merge -> accumulate -> report, stopping early when the
/// failure set drops under the threshold. `writer` (when given) receives
/// each report as soon as the round finishes.
BoostRun run(FrozenModel model, const LabeledDataset& train, const LabeledDataset& test,
             BoostConfig cfg, RunWriter* writer = nullptr, std::uint64_t split_hash = 0);

/// Versioned binary container ("BSTL" magic, checksum). Round-trips the run
/// bit-exactly.
void checkpoint(const BoostRun& run, const std::string& path);
BoostRun restore(const std::string& path);

} // namespace boostlora

#endif // BOOSTLORA_BOOSTING_HPP
