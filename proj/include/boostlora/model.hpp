#ifndef BOOSTLORA_MODEL_HPP
#define BOOSTLORA_MODEL_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "boostlora/adapter.hpp"
#include "boostlora/linalg.hpp"

namespace boostlora {

/// One labeled classification dataset; features are one row per example.
struct LabeledDataset {
    Matrix features;
    std::vector<int> labels;
    int num_classes = 0;

    Index size() const { return features.rows(); }
    Index dim() const { return features.cols(); }
};

struct Prediction {
    Vector logits;
    double margin = 0.0; ///< correct logit minus best other; ties break incorrect
    bool correct = false;
};

struct EvalResult {
    double accuracy = 0.0;
    std::vector<Index> failures; ///< ascending indices of misclassified examples
    std::vector<double> margins; ///< one margin per example, dataset order
};

/// A frozen-base network whose linear layers carry adapters.
///
/// Two architectures:
///   Linear: features -> classes, the single linear adapted, no head.
///   Mlp:    input -> [linear -> layernorm -> relu] x2 -> pre-head linear
///           -> trainable head; the three frozen linears are adapted.
struct FrozenModel {
    enum class Arch { Linear, Mlp };

    struct Linear {
        Matrix w; ///< out_dim x in_dim
        Vector b;
    };
    struct LayerNorm {
        Vector gamma;
        Vector beta;
        double eps = 1e-5;
    };

    Arch arch = Arch::Linear;
    std::vector<Linear> linears;  ///< frozen base linears, in forward order
    std::vector<LayerNorm> norms; ///< norms[i] follows linears[i] when present
    std::optional<Linear> head;   ///< trainable classification head

    std::vector<Index> adapted; ///< indices into linears
    int num_classes = 0;

    Index adapted_count() const { return static_cast<Index>(adapted.size()); }
    bool has_head() const { return head.has_value(); }

    /// Full SVD of every adapted module's current weights, in adapted order.
    std::vector<SvdFactors> adapted_factors() const;

    /// Smallest spectrum length among adapted modules (rotate capacity).
    Index min_adapted_p() const;
};

FrozenModel make_linear_model(Index input_dim, int num_classes, std::uint64_t seed);
FrozenModel make_mlp_model(Index input_dim, Index hidden_dim, int num_classes,
                           std::uint64_t seed);

/// Forward pass with the adapter applied live at each adapted layer.
Prediction forward(const FrozenModel& model, const Vector& x, int label,
                   const AdapterState* adapter = nullptr);

/// Per-module tap recorded during a traced forward/backward pass.
struct ModuleTap {
    Vector h;       ///< input activation of the adapted module
    Vector readout; ///< gradient of the probed scalar w.r.t. the module output
};

/// Accuracy, failure set and margins over a dataset. Runs as a deterministic
/// chunked parallel map; results are identical for any thread count.
EvalResult evaluate(const FrozenModel& model, const LabeledDataset& data,
                    const AdapterState* adapter = nullptr, int threads = 1);

struct LossAndGrads {
    double loss = 0.0;
    std::vector<Vector> grad_v;          ///< per tying group, empty when no adapter
    std::optional<Matrix> grad_head_w;   ///< present only when train_head
    std::optional<Vector> grad_head_b;
};

/// Mean cross-entropy over the chosen batch rows plus the analytic gradients.
/// grad_v chains through the frozen layers; the head gradient is produced
/// only when train_head is set. Accumulation over examples uses a fixed-chunk
/// tree sum, so the result is bit-stable for any thread count.
LossAndGrads xent_loss_and_grads(const FrozenModel& model, const LabeledDataset& data,
                                 const std::vector<Index>& batch, const AdapterState* adapter,
                                 bool train_head, int threads = 1);

/// max over examples and adapted layers of the input-activation 2-norm.
double max_hidden_norm(const FrozenModel& model, const LabeledDataset& data, int threads = 1);

/// h and d(margin gap)/d(module output) at every adapted module for one
/// example; the probed scalar is logit[label] - logit[runner-up].
std::vector<ModuleTap> margin_taps(const FrozenModel& model, const Vector& x, int label,
                                   const AdapterState* adapter = nullptr);

/// Full (non-frozen) training of base weights and head for a few epochs;
/// used to give the base a meaningful spectrum and failure set before
/// freezing. Plain minibatch Adam on all parameters.
void pretrain(FrozenModel& model, const LabeledDataset& data, int epochs, double lr,
              std::uint64_t seed, Index batch_size = 64);

} // namespace boostlora

#endif // BOOSTLORA_MODEL_HPP
