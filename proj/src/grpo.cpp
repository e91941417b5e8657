#include "boostlora/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace boostlora::grpo {

std::vector<double> group_advantages(const RewardGroup& g) {
    const std::size_t n = g.rewards.size();
    if (n < 2) {
        throw InvalidInputError("group_advantages: need a group of at least 2 rewards");
    }
    for (double r : g.rewards) {
        if (!std::isfinite(r)) {
            throw InvalidInputError("group_advantages: non-finite reward");
        }
    }
    double mean = 0.0;
    for (double r : g.rewards) mean += r;
    mean /= static_cast<double>(n);

    double var = 0.0;
    for (double r : g.rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(n);
    const double denom = std::sqrt(var) + g.epsilon;

    std::vector<double> adv(n);
    for (std::size_t i = 0; i < n; ++i) {
        adv[i] = (g.rewards[i] - mean) / denom;
    }
    return adv;
}

double clipped_surrogate(const SurrogateInputs& s) {
    const std::size_t n = s.advantages.size();
    if (n == 0 || s.logprob_ratios.size() != n) {
        throw InvalidInputError("clipped_surrogate: advantages and ratios must be nonempty and "
                                "the same length");
    }
    if (s.kl_estimates && s.kl_estimates->size() != n) {
        throw InvalidInputError("clipped_surrogate: kl_estimates length mismatch");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double rho = s.logprob_ratios[i];
        if (!(rho > 0.0)) {
            throw InvalidInputError("clipped_surrogate: nonpositive probability ratio " +
                                    std::to_string(rho));
        }
        const double a = s.advantages[i];
        const double clipped = std::clamp(rho, 1.0 - s.clip_eps, 1.0 + s.clip_eps);
        total += -std::min(rho * a, clipped * a);
    }
    double loss = total / static_cast<double>(n);
    if (s.kl_coef != 0.0 && s.kl_estimates) {
        double kl = 0.0;
        for (double k : *s.kl_estimates) kl += k;
        loss += s.kl_coef * kl / static_cast<double>(n);
    }
    return loss;
}

int binary_reward(long long pred, long long target) { return pred == target ? 1 : 0; }

int binary_reward(const std::string& pred, const std::string& target) {
    return pred == target ? 1 : 0;
}

} // namespace boostlora::grpo
