#ifndef BOOSTLORA_GRPO_HPP
#define BOOSTLORA_GRPO_HPP

#include <optional>
#include <string>
#include <vector>

#include "boostlora/errors.hpp"

namespace boostlora::grpo {

/// One sampled group of rewards (binary in practice, any reals accepted).
struct RewardGroup {
    std::vector<double> rewards;
    double epsilon = 1e-4; ///< std smoothing; keeps constant groups finite
};

struct SurrogateInputs {
    std::vector<double> advantages;
    std::vector<double> logprob_ratios; ///< new/old probability ratios, > 0
    double clip_eps = 0.2;
    double kl_coef = 0.0;
    std::optional<std::vector<double>> kl_estimates;
};

/// Within-group advantage normalization: (r_i - mean) / (pop_std + epsilon).
/// Population standard deviation, so G = 2 is well defined. Constant groups
/// come out as exact zeros.
std::vector<double> group_advantages(const RewardGroup& g);

/// Mean over i of -min(rho_i * A_i, clip(rho_i, 1-eps, 1+eps) * A_i), plus
/// kl_coef * mean(kl_estimates) when estimates are supplied.
double clipped_surrogate(const SurrogateInputs& s);

/// Exact-match indicator.
int binary_reward(long long pred, long long target);
int binary_reward(const std::string& pred, const std::string& target);

} // namespace boostlora::grpo

#endif // BOOSTLORA_GRPO_HPP
