#ifndef BOOSTLORA_OPTIM_HPP
#define BOOSTLORA_OPTIM_HPP

#include <cmath>

#include "boostlora/linalg.hpp"

namespace boostlora {

/// Plain Adam moments for one parameter tensor.
template <typename T>
struct AdamState {
    T m, v;
    explicit AdamState(const T& like)
        : m(T::Zero(like.rows(), like.cols())), v(T::Zero(like.rows(), like.cols())) {}

    void step(T& param, const T& grad, double lr, int t) {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        m = b1 * m + (1.0 - b1) * grad;
        v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(b1, t);
        const double c2 = 1.0 - std::pow(b2, t);
        param -= (lr / c1) * (m.array() / ((v.array() / c2).sqrt() + eps)).matrix();
    }
};

/// Adam with decoupled weight decay on a flat parameter vector.
struct AdamW {
    Vector m, v;
    int t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamW(Index dim) : m(Vector::Zero(dim)), v(Vector::Zero(dim)) {}

    void step(Vector& param, const Vector& grad, double lr, double weight_decay) {
        ++t;
        m = beta1 * m + (1.0 - beta1) * grad;
        v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(beta1, t);
        const double c2 = 1.0 - std::pow(beta2, t);
        param -= (lr / c1) * (m.array() / ((v.array() / c2).sqrt() + eps)).matrix();
        if (weight_decay != 0.0) {
            param -= lr * weight_decay * param;
        }
    }
};

/// Cosine schedule with a linear warmup ramp. `step` is the 0-based index of
/// the upcoming update; warmup is floored at one step by the caller.
inline double cosine_lr(double base, Index step, Index total_steps, Index warmup_steps) {
    if (step < warmup_steps) {
        return base * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    }
    const Index tail = total_steps > warmup_steps ? total_steps - warmup_steps : Index{1};
    const double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(tail);
    return base * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

} // namespace boostlora

#endif // BOOSTLORA_OPTIM_HPP
