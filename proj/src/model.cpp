#include "boostlora/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "boostlora/optim.hpp"
#include "boostlora/parallel.hpp"

namespace boostlora {

namespace {

Matrix gaussian_matrix(Index rows, Index cols, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, stddev);
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) {
            m(i, j) = gauss(rng);
        }
    }
    return m;
}

struct LnCache {
    Vector xhat;
    double inv_std = 0.0;
};

Vector layer_norm_fwd(const FrozenModel::LayerNorm& ln, const Vector& z, LnCache* cache) {
    const double mean = z.mean();
    const Vector centered = z.array() - mean;
    const double var = centered.squaredNorm() / static_cast<double>(z.size());
    const double inv_std = 1.0 / std::sqrt(var + ln.eps);
    Vector xhat = centered * inv_std;
    Vector out = (ln.gamma.array() * xhat.array()).matrix() + ln.beta;
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = inv_std;
    }
    return out;
}

// d(loss)/d(z) given d(loss)/d(out); optionally accumulates gamma/beta grads.
Vector layer_norm_bwd(const FrozenModel::LayerNorm& ln, const LnCache& cache,
                      const Vector& g_out, Vector* g_gamma, Vector* g_beta) {
    if (g_gamma) {
        *g_gamma += (g_out.array() * cache.xhat.array()).matrix();
    }
    if (g_beta) {
        *g_beta += g_out;
    }
    const Vector g_xhat = (g_out.array() * ln.gamma.array()).matrix();
    const double m1 = g_xhat.mean();
    const double m2 = (g_xhat.array() * cache.xhat.array()).mean();
    return cache.inv_std * (g_xhat.array() - m1 - cache.xhat.array() * m2).matrix();
}

Vector relu(const Vector& a) { return a.cwiseMax(0.0); }

Vector relu_bwd(const Vector& a, const Vector& g_out) {
    return (a.array() > 0.0).select(g_out, Vector::Zero(g_out.size()));
}

struct Trace {
    std::vector<Vector> lin_in;  ///< input of each frozen linear
    std::vector<Vector> lin_out; ///< its output including the live adapter
    std::vector<LnCache> ln;
    std::vector<Vector> relu_in; ///< layernorm outputs feeding each relu
    Vector head_in;
    Vector logits;
};

// Position of linear index `li` within model.adapted, or -1.
Index adapted_pos(const FrozenModel& model, Index li) {
    for (std::size_t i = 0; i < model.adapted.size(); ++i) {
        if (model.adapted[i] == li) {
            return static_cast<Index>(i);
        }
    }
    return -1;
}

Vector linear_fwd(const FrozenModel& model, Index li, const Vector& x,
                  const AdapterState* adapter) {
    const FrozenModel::Linear& lin = model.linears[static_cast<std::size_t>(li)];
    Vector z = lin.w * x + lin.b;
    if (adapter) {
        const Index pos = adapted_pos(model, li);
        if (pos >= 0) {
            z += adapter->apply(pos, x);
        }
    }
    return z;
}

// g at the linear's input, given g at its output, through W + DeltaW.
Vector linear_bwd_input(const FrozenModel& model, Index li, const Vector& g_out,
                        const AdapterState* adapter) {
    const FrozenModel::Linear& lin = model.linears[static_cast<std::size_t>(li)];
    Vector g_in = lin.w.transpose() * g_out;
    if (adapter) {
        const Index pos = adapted_pos(model, li);
        if (pos >= 0) {
            g_in += adapter->apply_transpose(pos, g_out);
        }
    }
    return g_in;
}

Vector forward_trace(const FrozenModel& model, const Vector& x, const AdapterState* adapter,
                     Trace* trace) {
    if (x.size() != model.linears[0].w.cols()) {
        throw ShapeError("forward: input has dimension " + std::to_string(x.size()) +
                         ", model expects " + std::to_string(model.linears[0].w.cols()));
    }
    auto record = [&](std::vector<Vector>* dst, const Vector& v) {
        if (trace) dst->push_back(v);
    };
    if (model.arch == FrozenModel::Arch::Linear) {
        Vector logits = linear_fwd(model, 0, x, adapter);
        if (trace) {
            record(&trace->lin_in, x);
            record(&trace->lin_out, logits);
            trace->logits = logits;
        }
        return logits;
    }
    // Mlp: [linear -> layernorm -> relu] x2 -> pre-head linear -> head
    Vector cur = x;
    if (trace) {
        trace->ln.resize(2);
    }
    for (Index block = 0; block < 2; ++block) {
        record(&trace->lin_in, cur);
        Vector z = linear_fwd(model, block, cur, adapter);
        record(&trace->lin_out, z);
        LnCache cache;
        Vector a = layer_norm_fwd(model.norms[static_cast<std::size_t>(block)], z,
                                  trace ? &cache : nullptr);
        if (trace) {
            trace->ln[static_cast<std::size_t>(block)] = std::move(cache);
            trace->relu_in.push_back(a);
        }
        cur = relu(a);
    }
    record(&trace->lin_in, cur);
    Vector z3 = linear_fwd(model, 2, cur, adapter);
    record(&trace->lin_out, z3);
    Vector logits = model.head->w * z3 + model.head->b;
    if (trace) {
        trace->head_in = std::move(z3);
        trace->logits = logits;
    }
    return logits;
}

/// What a backward pass should produce.
struct GradSink {
    // upstream gradient at each adapted module's output, adapted order
    std::vector<Vector>* upstreams = nullptr;
    // head gradients
    Matrix* g_head_w = nullptr;
    Vector* g_head_b = nullptr;
    // full base gradients (pretraining only), indexed like model.linears/norms
    std::vector<Matrix>* g_lin_w = nullptr;
    std::vector<Vector>* g_lin_b = nullptr;
    std::vector<Vector>* g_gamma = nullptr;
    std::vector<Vector>* g_beta = nullptr;
};

void backward_from_logits(const FrozenModel& model, const Trace& trace, const Vector& g_logits,
                          const AdapterState* adapter, const GradSink& sink) {
    auto take_upstream = [&](Index li, const Vector& g) {
        if (sink.g_lin_w) {
            (*sink.g_lin_w)[static_cast<std::size_t>(li)] +=
                g * trace.lin_in[static_cast<std::size_t>(li)].transpose();
            (*sink.g_lin_b)[static_cast<std::size_t>(li)] += g;
        }
        if (sink.upstreams) {
            const Index pos = adapted_pos(model, li);
            if (pos >= 0) {
                (*sink.upstreams)[static_cast<std::size_t>(pos)] += g;
            }
        }
    };

    if (model.arch == FrozenModel::Arch::Linear) {
        take_upstream(0, g_logits);
        return;
    }

    Vector cur = g_logits;
    if (model.has_head()) {
        if (sink.g_head_w) {
            *sink.g_head_w += cur * trace.head_in.transpose();
            *sink.g_head_b += cur;
        }
        cur = model.head->w.transpose() * cur;
    }
    take_upstream(2, cur);
    for (Index block = 1; block >= 0; --block) {
        // into the relu output of this block
        cur = linear_bwd_input(model, block + 1, cur, adapter);
        cur = relu_bwd(trace.relu_in[static_cast<std::size_t>(block)], cur);
        cur = layer_norm_bwd(
            model.norms[static_cast<std::size_t>(block)], trace.ln[static_cast<std::size_t>(block)],
            cur, sink.g_gamma ? &(*sink.g_gamma)[static_cast<std::size_t>(block)] : nullptr,
            sink.g_beta ? &(*sink.g_beta)[static_cast<std::size_t>(block)] : nullptr);
        take_upstream(block, cur);
    }
}

Prediction prediction_from_logits(const Vector& logits, int label) {
    Prediction p;
    p.logits = logits;
    double best_other = -std::numeric_limits<double>::infinity();
    for (Index c = 0; c < logits.size(); ++c) {
        if (static_cast<int>(c) != label) {
            best_other = std::max(best_other, logits(c));
        }
    }
    p.margin = logits(label) - best_other;
    p.correct = p.margin > 0.0; // exact ties count as incorrect
    return p;
}

Vector softmax(const Vector& logits) {
    const double m = logits.maxCoeff();
    Vector e = (logits.array() - m).exp();
    return e / e.sum();
}

} // namespace

std::vector<SvdFactors> FrozenModel::adapted_factors() const {
    std::vector<SvdFactors> out;
    out.reserve(adapted.size());
    for (Index li : adapted) {
        out.push_back(svd(linears[static_cast<std::size_t>(li)].w));
    }
    return out;
}

Index FrozenModel::min_adapted_p() const {
    Index p = std::numeric_limits<Index>::max();
    for (Index li : adapted) {
        const auto& w = linears[static_cast<std::size_t>(li)].w;
        p = std::min(p, std::min(w.rows(), w.cols()));
    }
    return p;
}

FrozenModel make_linear_model(Index input_dim, int num_classes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    FrozenModel m;
    m.arch = FrozenModel::Arch::Linear;
    m.num_classes = num_classes;
    const double stddev = 1.0 / std::sqrt(static_cast<double>(input_dim));
    m.linears.push_back({gaussian_matrix(num_classes, input_dim, stddev, rng),
                         Vector::Zero(num_classes)});
    m.adapted = {0};
    return m;
}

FrozenModel make_mlp_model(Index input_dim, Index hidden_dim, int num_classes,
                           std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    FrozenModel m;
    m.arch = FrozenModel::Arch::Mlp;
    m.num_classes = num_classes;
    auto lin = [&](Index out, Index in) {
        return FrozenModel::Linear{
            gaussian_matrix(out, in, 1.0 / std::sqrt(static_cast<double>(in)), rng),
            Vector::Zero(out)};
    };
    m.linears.push_back(lin(hidden_dim, input_dim));
    m.linears.push_back(lin(hidden_dim, hidden_dim));
    m.linears.push_back(lin(hidden_dim, hidden_dim));
    m.norms.push_back({Vector::Ones(hidden_dim), Vector::Zero(hidden_dim), 1e-5});
    m.norms.push_back({Vector::Ones(hidden_dim), Vector::Zero(hidden_dim), 1e-5});
    m.head = lin(num_classes, hidden_dim);
    m.adapted = {0, 1, 2};
    return m;
}

Prediction forward(const FrozenModel& model, const Vector& x, int label,
                   const AdapterState* adapter) {
    if (label < 0 || label >= model.num_classes) {
        throw InvalidInputError("forward: label " + std::to_string(label) + " outside [0, " +
                                std::to_string(model.num_classes) + ")");
    }
    return prediction_from_logits(forward_trace(model, x, adapter, nullptr), label);
}

EvalResult evaluate(const FrozenModel& model, const LabeledDataset& data,
                    const AdapterState* adapter, int threads) {
    const Index n = data.size();
    if (n == 0) {
        throw InvalidInputError("evaluate: empty dataset");
    }
    std::vector<double> margins(static_cast<std::size_t>(n));
    std::vector<char> wrong(static_cast<std::size_t>(n), 0);
    parallel_chunks(n, threads, [&](Index, Index begin, Index end) {
        for (Index i = begin; i < end; ++i) {
            const Prediction p = forward(model, data.features.row(i).transpose(),
                                         data.labels[static_cast<std::size_t>(i)], adapter);
            margins[static_cast<std::size_t>(i)] = p.margin;
            wrong[static_cast<std::size_t>(i)] = p.correct ? 0 : 1;
        }
    });
    EvalResult out;
    out.margins = std::move(margins);
    for (Index i = 0; i < n; ++i) {
        if (wrong[static_cast<std::size_t>(i)]) {
            out.failures.push_back(i);
        }
    }
    out.accuracy = 1.0 - static_cast<double>(out.failures.size()) / static_cast<double>(n);
    return out;
}

LossAndGrads xent_loss_and_grads(const FrozenModel& model, const LabeledDataset& data,
                                 const std::vector<Index>& batch, const AdapterState* adapter,
                                 bool train_head, int threads) {
    if (batch.empty()) {
        throw InvalidInputError("xent_loss_and_grads: empty batch");
    }
    if (train_head && !model.has_head()) {
        throw ConfigError("xent_loss_and_grads: model has no trainable head");
    }
    const Index nb = static_cast<Index>(batch.size());
    const double inv_n = 1.0 / static_cast<double>(nb);
    const Index groups = adapter ? adapter->cfg.groups : 0;
    const Index chunks = chunk_count(nb);

    struct Partial {
        double loss = 0.0;
        std::vector<Vector> grad_v;
        Matrix g_head_w;
        Vector g_head_b;
    };
    std::vector<Partial> partials(static_cast<std::size_t>(chunks));

    parallel_chunks(nb, threads, [&](Index c, Index begin, Index end) {
        Partial& part = partials[static_cast<std::size_t>(c)];
        if (adapter) {
            part.grad_v.assign(static_cast<std::size_t>(groups),
                               Vector::Zero(adapter->cfg.proj_dim));
        }
        if (train_head) {
            part.g_head_w = Matrix::Zero(model.head->w.rows(), model.head->w.cols());
            part.g_head_b = Vector::Zero(model.head->b.size());
        }
        std::vector<Vector> upstreams;
        for (Index bi = begin; bi < end; ++bi) {
            const Index row = batch[static_cast<std::size_t>(bi)];
            const int label = data.labels[static_cast<std::size_t>(row)];
            Trace trace;
            const Vector logits =
                forward_trace(model, data.features.row(row).transpose(), adapter, &trace);
            const Vector probs = softmax(logits);
            part.loss += -std::log(std::max(probs(label), 1e-300)) * inv_n;

            Vector g_logits = probs * inv_n;
            g_logits(label) -= inv_n;

            GradSink sink;
            if (adapter) {
                upstreams.assign(static_cast<std::size_t>(model.adapted_count()), Vector());
                for (std::size_t m = 0; m < upstreams.size(); ++m) {
                    upstreams[m] = Vector::Zero(
                        model.linears[static_cast<std::size_t>(model.adapted[m])].w.rows());
                }
                sink.upstreams = &upstreams;
            }
            if (train_head) {
                sink.g_head_w = &part.g_head_w;
                sink.g_head_b = &part.g_head_b;
            }
            backward_from_logits(model, trace, g_logits, adapter, sink);
            if (adapter) {
                for (Index m = 0; m < model.adapted_count(); ++m) {
                    const Index g = adapter->tying.group_of_module[static_cast<std::size_t>(m)];
                    part.grad_v[static_cast<std::size_t>(g)] += feature_map(
                        adapter->windows[static_cast<std::size_t>(m)],
                        adapter->projections[static_cast<std::size_t>(g)],
                        trace.lin_in[static_cast<std::size_t>(m)],
                        upstreams[static_cast<std::size_t>(m)]);
                }
            }
        }
    });

    // fixed-order fold over chunks keeps the sums bit-stable
    LossAndGrads out;
    if (adapter) {
        out.grad_v.assign(static_cast<std::size_t>(groups), Vector::Zero(adapter->cfg.proj_dim));
    }
    if (train_head) {
        out.grad_head_w = Matrix::Zero(model.head->w.rows(), model.head->w.cols());
        out.grad_head_b = Vector::Zero(model.head->b.size());
    }
    for (const Partial& part : partials) {
        out.loss += part.loss;
        for (std::size_t g = 0; g < part.grad_v.size(); ++g) {
            out.grad_v[g] += part.grad_v[g];
        }
        if (train_head) {
            *out.grad_head_w += part.g_head_w;
            *out.grad_head_b += part.g_head_b;
        }
    }
    return out;
}

double max_hidden_norm(const FrozenModel& model, const LabeledDataset& data, int threads) {
    const Index n = data.size();
    if (n == 0) {
        throw InvalidInputError("max_hidden_norm: empty dataset");
    }
    const Index chunks = chunk_count(n);
    std::vector<double> partial(static_cast<std::size_t>(chunks), 0.0);
    parallel_chunks(n, threads, [&](Index c, Index begin, Index end) {
        double& best = partial[static_cast<std::size_t>(c)];
        for (Index i = begin; i < end; ++i) {
            Trace trace;
            forward_trace(model, data.features.row(i).transpose(), nullptr, &trace);
            for (Index m : model.adapted) {
                const Index pos = adapted_pos(model, m);
                best = std::max(best, trace.lin_in[static_cast<std::size_t>(pos)].norm());
            }
        }
    });
    double best = 0.0;
    for (double b : partial) {
        best = std::max(best, b);
    }
    return best;
}

std::vector<ModuleTap> margin_taps(const FrozenModel& model, const Vector& x, int label,
                                   const AdapterState* adapter) {
    Trace trace;
    const Vector logits = forward_trace(model, x, adapter, &trace);
    Index runner_up = label == 0 ? 1 : 0;
    for (Index c = 0; c < logits.size(); ++c) {
        if (static_cast<int>(c) != label && logits(c) > logits(runner_up)) {
            runner_up = c;
        }
    }
    Vector g_logits = Vector::Zero(logits.size());
    g_logits(label) = 1.0;
    g_logits(runner_up) -= 1.0;

    std::vector<Vector> upstreams(static_cast<std::size_t>(model.adapted_count()));
    for (std::size_t m = 0; m < upstreams.size(); ++m) {
        upstreams[m] =
            Vector::Zero(model.linears[static_cast<std::size_t>(model.adapted[m])].w.rows());
    }
    GradSink sink;
    sink.upstreams = &upstreams;
    backward_from_logits(model, trace, g_logits, adapter, sink);

    std::vector<ModuleTap> taps(upstreams.size());
    for (std::size_t m = 0; m < upstreams.size(); ++m) {
        taps[m].h = trace.lin_in[m];
        taps[m].readout = std::move(upstreams[m]);
    }
    return taps;
}

void pretrain(FrozenModel& model, const LabeledDataset& data, int epochs, double lr,
              std::uint64_t seed, Index batch_size) {
    if (epochs <= 0) {
        return;
    }
    const Index n = data.size();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});

    std::vector<AdamState<Matrix>> opt_w;
    std::vector<AdamState<Vector>> opt_b, opt_g, opt_beta;
    for (const auto& lin : model.linears) {
        opt_w.emplace_back(lin.w);
        opt_b.emplace_back(lin.b);
    }
    for (const auto& nrm : model.norms) {
        opt_g.emplace_back(nrm.gamma);
        opt_beta.emplace_back(nrm.beta);
    }
    std::optional<AdamState<Matrix>> opt_hw;
    std::optional<AdamState<Vector>> opt_hb;
    if (model.has_head()) {
        opt_hw.emplace(model.head->w);
        opt_hb.emplace(model.head->b);
    }

    int t = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::mt19937_64 rng(seed + static_cast<std::uint64_t>(epoch) * 0x9e3779b9ULL);
        std::shuffle(order.begin(), order.end(), rng);
        for (Index start = 0; start < n; start += batch_size) {
            const Index stop = std::min(n, start + batch_size);
            const double inv_b = 1.0 / static_cast<double>(stop - start);

            std::vector<Matrix> g_w;
            std::vector<Vector> g_b, g_gamma, g_beta;
            for (const auto& lin : model.linears) {
                g_w.push_back(Matrix::Zero(lin.w.rows(), lin.w.cols()));
                g_b.push_back(Vector::Zero(lin.b.size()));
            }
            for (const auto& nrm : model.norms) {
                g_gamma.push_back(Vector::Zero(nrm.gamma.size()));
                g_beta.push_back(Vector::Zero(nrm.beta.size()));
            }
            Matrix g_hw;
            Vector g_hb;
            if (model.has_head()) {
                g_hw = Matrix::Zero(model.head->w.rows(), model.head->w.cols());
                g_hb = Vector::Zero(model.head->b.size());
            }

            for (Index bi = start; bi < stop; ++bi) {
                const Index row = order[static_cast<std::size_t>(bi)];
                const int label = data.labels[static_cast<std::size_t>(row)];
                Trace trace;
                const Vector logits =
                    forward_trace(model, data.features.row(row).transpose(), nullptr, &trace);
                Vector g_logits = softmax(logits) * inv_b;
                g_logits(label) -= inv_b;

                GradSink sink;
                sink.g_lin_w = &g_w;
                sink.g_lin_b = &g_b;
                sink.g_gamma = &g_gamma;
                sink.g_beta = &g_beta;
                if (model.has_head()) {
                    sink.g_head_w = &g_hw;
                    sink.g_head_b = &g_hb;
                }
                backward_from_logits(model, trace, g_logits, nullptr, sink);
            }

            ++t;
            for (std::size_t li = 0; li < model.linears.size(); ++li) {
                opt_w[li].step(model.linears[li].w, g_w[li], lr, t);
                opt_b[li].step(model.linears[li].b, g_b[li], lr, t);
            }
            for (std::size_t ni = 0; ni < model.norms.size(); ++ni) {
                opt_g[ni].step(model.norms[ni].gamma, g_gamma[ni], lr, t);
                opt_beta[ni].step(model.norms[ni].beta, g_beta[ni], lr, t);
            }
            if (model.has_head()) {
                opt_hw->step(model.head->w, g_hw, lr, t);
                opt_hb->step(model.head->b, g_hb, lr, t);
            }
        }
    }
}

} // namespace boostlora
