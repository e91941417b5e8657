#ifndef BOOSTLORA_BOUNDS_HPP
#define BOOSTLORA_BOUNDS_HPP

#include <vector>

#include "boostlora/model.hpp"

namespace boostlora {

/// Everything the margin bound needs from a finished run.
struct BoundInputs {
    std::vector<double> margins; ///< training margins after the last round
    double b_total = 0.0;        ///< sum over rounds of the trained v norm
    double x = 0.0;              ///< max feature-map norm over rounds and examples
    Index n = 0;                 ///< training set size
    double delta = 0.05;
};

/// The bound evaluated over a margin-threshold grid, with its decomposition.
struct BoundReport {
    std::vector<double> theta_grid;
    std::vector<double> margin_terms;
    std::vector<double> complexity_terms;
    double confidence_term = 0.0;
    std::vector<double> bounds; ///< pointwise sum of the three terms
    double theta_star = 0.0;
    double bound_at_star = 0.0;
    bool vacuous = false; ///< bound_at_star >= 1
};

/// 2 X B_total / (theta sqrt(n)).
double complexity_term(double x, double b_total, double theta, Index n);

/// Fraction of margins strictly below theta.
double margin_term(const std::vector<double>& margins, double theta);

/// sqrt(log(2/delta) / (2n)).
double confidence_term(double delta, Index n);

/// Evaluates all three terms on the grid. Ties in the argmin go to the
/// smaller theta.
BoundReport evaluate_bound(const BoundInputs& inputs, const std::vector<double>& grid);

/// 64 log-spaced thresholds spanning [0.01 * max margin, max margin].
std::vector<double> default_theta_grid(const std::vector<double>& margins);

/// Max over examples of the concatenated per-group feature-map norm for one
/// round's windows, with h and readout taken from the model's current
/// weights. The probed scalar is the margin gap, so <v, phi> is exactly the
/// first-order margin perturbation of this round's adapter.
double max_feature_norm(const FrozenModel& model, const LabeledDataset& data,
                        const AdapterState& adapter, int threads = 1);

/// X = max over rounds of max_feature_norm.
double estimate_x(const FrozenModel& model, const LabeledDataset& data,
                  const std::vector<AdapterState>& rounds, int threads = 1);

/// Correct -> incorrect flips across one merge, audited against the
/// regression condition margin < M * eps * H.
struct RegressionAudit {
    std::vector<Index> flips;      ///< examples correct before, incorrect after
    std::vector<Index> violations; ///< flips whose pre-merge margin >= M*eps*H
    double margin_budget = 0.0;    ///< M * eps * H
    double regression_rate = 0.0;  ///< flips / correct-before
};

RegressionAudit regression_audit(const EvalResult& before, const EvalResult& after, Index m,
                                 double eps, double h);

} // namespace boostlora

#endif // BOOSTLORA_BOUNDS_HPP
