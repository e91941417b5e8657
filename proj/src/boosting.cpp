#include "boostlora/boosting.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "boostlora/optim.hpp"
#include "boostlora/parallel.hpp"
#include "boostlora/serialize.hpp"

namespace boostlora {

namespace {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t key(std::uint64_t seed, std::uint64_t tag, std::uint64_t round,
                  std::uint64_t epoch) {
    return mix64(mix64(mix64(seed) ^ tag) ^ (round * 1315423911ULL + epoch));
}

std::string fmt(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace

double BoostConfig::effective_lr() const {
    const Index p = adapter.trainable_params();
    if (lr_scaling && p > 12) {
        return lr_base * std::sqrt(12.0 / static_cast<double>(p));
    }
    return lr_base;
}

Index BoostConfig::resolve_threshold(Index n_train) const {
    if (early_stop_threshold >= 0) {
        return early_stop_threshold;
    }
    return std::max<Index>(1, static_cast<Index>(
                                  std::ceil(0.005 * static_cast<double>(n_train))));
}

double BoostRun::b_total() const {
    double total = 0.0;
    for (const auto& rep : reports) {
        total += rep.v_norm;
    }
    return total;
}

std::string report_to_json(const RoundReport& r) {
    nlohmann::ordered_json j;
    j["round"] = r.round;
    j["failure_count"] = r.failure_count;
    j["train_accuracy"] = r.train_accuracy;
    j["test_accuracy"] = r.test_accuracy;
    j["v_norm"] = r.v_norm;
    j["cumulative_v_norm"] = r.cumulative_v_norm;
    j["delta_frobenius"] = r.delta_frobenius;
    j["rank_measures"] = nlohmann::ordered_json{
        {"participation_ratio", r.rank_measures.participation_ratio},
        {"eps_rank", r.rank_measures.eps_rank},
        {"epsilon", r.rank_measures.epsilon},
        {"frobenius_norm", r.rank_measures.frobenius_norm}};
    j["optimizer_steps"] = r.optimizer_steps;
    j["regressions"] = r.regressions;
    return j.dump();
}

std::string curves_csv_header() {
    return "round,train_acc,test_acc,failures,v_norm,cum_v_norm,part_ratio,eps_rank";
}

std::string report_to_csv_row(const RoundReport& r) {
    std::string row = std::to_string(r.round);
    row += ',' + fmt(r.train_accuracy);
    row += ',' + fmt(r.test_accuracy);
    row += ',' + std::to_string(r.failure_count);
    row += ',' + fmt(r.v_norm);
    row += ',' + fmt(r.cumulative_v_norm);
    row += ',' + fmt(r.rank_measures.participation_ratio);
    row += ',' + fmt(r.rank_measures.eps_rank);
    return row;
}

RunWriter::RunWriter(const std::string& dir) : dir_(dir) {
    std::filesystem::create_directories(dir);
    rounds_path_ = (std::filesystem::path(dir) / "rounds.jsonl").string();
    curves_path_ = (std::filesystem::path(dir) / "curves.csv").string();
    std::ofstream rounds(rounds_path_, std::ios::binary | std::ios::trunc);
    std::ofstream curves(curves_path_, std::ios::binary | std::ios::trunc);
    curves << curves_csv_header() << "\n";
}

void RunWriter::append(const RoundReport& r) {
    std::ofstream rounds(rounds_path_, std::ios::binary | std::ios::app);
    rounds << report_to_json(r) << "\n";
    std::ofstream curves(curves_path_, std::ios::binary | std::ios::app);
    curves << report_to_csv_row(r) << "\n";
}

std::vector<Index> extract_failures(const FrozenModel& model, const LabeledDataset& data,
                                    int threads) {
    return evaluate(model, data, nullptr, threads).failures;
}

TrainResult train_round(const FrozenModel& model, const LabeledDataset& train,
                        const std::vector<Index>& failures, AdapterState& adapter,
                        const BoostConfig& cfg, Index round, std::vector<Index>* seen) {
    if (failures.empty()) {
        throw InvalidInputError("train_round: empty failure set at round " +
                                std::to_string(round));
    }
    const Index n_fail = static_cast<Index>(failures.size());
    const Index batches_per_epoch = (n_fail + cfg.batch_size - 1) / cfg.batch_size;
    const Index total_steps = static_cast<Index>(cfg.epochs_per_round) * batches_per_epoch;
    const Index warmup = std::max<Index>(
        1, static_cast<Index>(std::floor(cfg.warmup_ratio * static_cast<double>(total_steps))));
    const double lr = cfg.effective_lr();

    Vector flat = adapter.v_concat();
    AdamW opt(flat.size());
    TrainResult out;
    out.loss_curve.reserve(static_cast<std::size_t>(total_steps));

    std::vector<Index> order = failures;
    for (int epoch = 0; epoch < cfg.epochs_per_round; ++epoch) {
        std::mt19937_64 rng(key(cfg.seed, 0xFA17, static_cast<std::uint64_t>(round),
                               static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng);
        for (Index start = 0; start < n_fail; start += cfg.batch_size) {
            const Index stop = std::min(n_fail, start + cfg.batch_size);
            const std::vector<Index> batch(order.begin() + start, order.begin() + stop);
            if (seen) {
                seen->insert(seen->end(), batch.begin(), batch.end());
            }
            const LossAndGrads lg =
                xent_loss_and_grads(model, train, batch, &adapter, false, cfg.threads);
            if (!std::isfinite(lg.loss)) {
                throw NumericalError("train_round: non-finite loss at round " +
                                     std::to_string(round));
            }
            Vector grad(flat.size());
            Index at = 0;
            for (const auto& g : lg.grad_v) {
                grad.segment(at, g.size()) = g;
                at += g.size();
            }
            if (!grad.allFinite()) {
                throw NumericalError("train_round: non-finite gradient at round " +
                                     std::to_string(round));
            }
            if (cfg.grad_clip > 0.0) {
                const double norm = grad.norm();
                if (norm > cfg.grad_clip) {
                    grad *= cfg.grad_clip / norm;
                }
            }
            const double lr_t = cosine_lr(lr, out.steps, total_steps, warmup);
            opt.step(flat, grad, lr_t, cfg.weight_decay);
            adapter.set_v_concat(flat);
            out.loss_curve.push_back(lg.loss);
            ++out.steps;
        }
    }
    return out;
}

void train_head(FrozenModel& model, const LabeledDataset& train, const AdapterState& adapter,
                const BoostConfig& cfg, Index round) {
    if (!model.has_head()) {
        throw ConfigError("train_head: model has no trainable head");
    }
    const Index n = train.size();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    AdamState<Matrix> opt_w(model.head->w);
    AdamState<Vector> opt_b(model.head->b);
    int t = 0;
    for (int epoch = 0; epoch < cfg.head_epochs; ++epoch) {
        std::mt19937_64 rng(key(cfg.seed, 0x4EAD, static_cast<std::uint64_t>(round),
                               static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng);
        for (Index start = 0; start < n; start += cfg.batch_size) {
            const Index stop = std::min(n, start + cfg.batch_size);
            const std::vector<Index> batch(order.begin() + start, order.begin() + stop);
            const LossAndGrads lg =
                xent_loss_and_grads(model, train, batch, &adapter, true, cfg.threads);
            if (!std::isfinite(lg.loss)) {
                throw NumericalError("train_head: non-finite head loss at round " +
                                     std::to_string(round));
            }
            ++t;
            opt_w.step(model.head->w, *lg.grad_head_w, cfg.head_lr, t);
            opt_b.step(model.head->b, *lg.grad_head_b, cfg.head_lr, t);
        }
    }
}

TrainResult two_phase_round(FrozenModel& model, const LabeledDataset& train,
                            const std::vector<Index>& failures, AdapterState& adapter,
                            const BoostConfig& cfg, Index round, std::vector<Index>* seen) {
    if (!model.has_head()) {
        throw ConfigError("two_phase_round: model has no trainable head");
    }
    train_head(model, train, adapter, cfg, round);
    return train_round(model, train, failures, adapter, cfg, round, seen);
}

namespace {

// Final-weights X: one pass collecting taps at W_T, then phi against every
// stored round's windows.
double final_weights_x(const FrozenModel& model, const LabeledDataset& train,
                       const BoostRun& out, const BoostConfig& cfg) {
    std::vector<ProjectionSet> projections;
    for (Index g = 0; g < cfg.adapter.groups; ++g) {
        projections.push_back(make_projections(cfg.adapter, g));
    }
    const TyingAssignment tying =
        tie_modules(static_cast<Index>(out.cumulative_deltas.size()), cfg.adapter.groups);
    const Index n = train.size();
    const Index chunks = chunk_count(n);
    std::vector<double> partial(static_cast<std::size_t>(chunks), 0.0);
    parallel_chunks(n, cfg.threads, [&](Index c, Index begin, Index end) {
        double& best = partial[static_cast<std::size_t>(c)];
        for (Index i = begin; i < end; ++i) {
            const auto taps = margin_taps(model, train.features.row(i).transpose(),
                                          train.labels[static_cast<std::size_t>(i)]);
            for (const auto& windows : out.round_windows) {
                double sq = 0.0;
                for (Index g = 0; g < cfg.adapter.groups; ++g) {
                    Vector phi = Vector::Zero(cfg.adapter.proj_dim);
                    for (Index m = 0; m < tying.modules(); ++m) {
                        if (tying.group_of_module[static_cast<std::size_t>(m)] != g) {
                            continue;
                        }
                        phi += feature_map(windows[static_cast<std::size_t>(m)],
                                           projections[static_cast<std::size_t>(g)],
                                           taps[static_cast<std::size_t>(m)].h,
                                           taps[static_cast<std::size_t>(m)].readout);
                    }
                    sq += phi.squaredNorm();
                }
                best = std::max(best, std::sqrt(sq));
            }
        }
    });
    double best = 0.0;
    for (double b : partial) {
        best = std::max(best, b);
    }
    return best;
}

AggregateRankMeasures aggregate_rank(const std::vector<Matrix>& cumulative, double epsilon) {
    AggregateRankMeasures agg;
    agg.epsilon = epsilon;
    if (cumulative.empty()) {
        return agg;
    }
    const double inv_m = 1.0 / static_cast<double>(cumulative.size());
    double fro2 = 0.0;
    for (const auto& d : cumulative) {
        const RankMeasures rm = rank_measures(d, epsilon);
        agg.participation_ratio += rm.participation_ratio * inv_m;
        agg.eps_rank += static_cast<double>(rm.eps_rank) * inv_m;
        fro2 += rm.frobenius_norm * rm.frobenius_norm;
    }
    agg.frobenius_norm = std::sqrt(fro2);
    return agg;
}

} // namespace

BoostRun run(FrozenModel model, const LabeledDataset& train, const LabeledDataset& test,
             BoostConfig cfg, RunWriter* writer, std::uint64_t split_hash) {
    if (train.size() == 0 || test.size() == 0) {
        throw InvalidInputError("run: train and test sets must be nonempty");
    }
    cfg.adapter.seed = cfg.seed;
    if (cfg.two_phase && !model.has_head()) {
        throw ConfigError("run: two_phase requires a model with a trainable head");
    }
    const Index min_p = model.min_adapted_p();
    if (cfg.adapter.basis == Basis::Rotate && cfg.adapter.rank * cfg.rounds > min_p) {
        throw CapacityError("run: rotate basis needs rank*rounds = " +
                            std::to_string(cfg.adapter.rank * cfg.rounds) +
                            " singular vectors but the smallest adapted module has " +
                            std::to_string(min_p));
    }
    if (cfg.adapter.rank > min_p) {
        throw CapacityError("run: rank " + std::to_string(cfg.adapter.rank) +
                            " exceeds the smallest adapted module dimension " +
                            std::to_string(min_p));
    }
    const Index threshold = cfg.resolve_threshold(train.size());

    BoostRun out;
    out.cfg = cfg;
    out.split_hash = split_hash;

    std::vector<SvdFactors> factors = model.adapted_factors();
    const Index num_modules = model.adapted_count();
    out.cumulative_deltas.reserve(static_cast<std::size_t>(num_modules));
    for (Index m = 0; m < num_modules; ++m) {
        const auto& w = model.linears[static_cast<std::size_t>(model.adapted[m])].w;
        out.cumulative_deltas.push_back(Matrix::Zero(w.rows(), w.cols()));
    }

    EvalResult ev_train = evaluate(model, train, nullptr, cfg.threads);
    EvalResult ev_test = evaluate(model, test, nullptr, cfg.threads);
    out.initial_margins = ev_train.margins;
    out.initial_train_accuracy = ev_train.accuracy;
    out.initial_test_accuracy = ev_test.accuracy;

    double cum_v = 0.0;
    for (Index t = 1; t <= cfg.rounds; ++t) {
        const std::vector<Index> failures = ev_train.failures;
        // Alg: break when |F_t| < threshold; an empty failure set always
        // stops since there is nothing left to fit.
        if (static_cast<Index>(failures.size()) < threshold || failures.empty()) {
            out.early_stopped = true;
            break;
        }
        if (cfg.top_recompute && cfg.adapter.basis == Basis::Top && t > 1) {
            factors = model.adapted_factors();
        }
        AdapterState adapter = make_adapter_state(cfg.adapter, factors, t);

        TrainResult tr;
        if (cfg.two_phase) {
            tr = two_phase_round(model, train, failures, adapter, cfg, t);
        } else {
            tr = train_round(model, train, failures, adapter, cfg, t);
        }

        // Pre-merge snapshots. The bare model ignores v, so this equals the
        // state the merge is about to perturb even though v is trained.
        const EvalResult before =
            cfg.two_phase ? evaluate(model, train, nullptr, cfg.threads) : ev_train;
        if (cfg.bound_metrics) {
            const double xt = max_feature_norm(model, train, adapter, cfg.threads);
            out.x_rounds.push_back(xt);
            out.x_round_frozen = std::max(out.x_round_frozen, xt);
        }
        const double h_max = max_hidden_norm(model, train, cfg.threads);
        out.max_hidden = std::max(out.max_hidden, h_max);

        double delta_fro2 = 0.0;
        double eps_spectral = 0.0;
        std::vector<Matrix> deltas;
        deltas.reserve(static_cast<std::size_t>(num_modules));
        for (Index m = 0; m < num_modules; ++m) {
            Matrix d = adapter.delta_for_module(m);
            auto& w = model.linears[static_cast<std::size_t>(model.adapted[m])].w;
            w = merge(w, d);
            out.cumulative_deltas[static_cast<std::size_t>(m)] += d;
            delta_fro2 += d.squaredNorm();
            eps_spectral = std::max(eps_spectral, spectral_norm(d));
            deltas.push_back(std::move(d));
        }
        out.round_windows.push_back(adapter.windows);
        if (cfg.store_deltas) {
            out.round_deltas.push_back(std::move(deltas));
        }
        out.round_v.push_back(adapter.v_concat());

        ev_train = evaluate(model, train, nullptr, cfg.threads);
        ev_test = evaluate(model, test, nullptr, cfg.threads);
        const RegressionAudit audit =
            regression_audit(before, ev_train, num_modules, eps_spectral, h_max);

        cum_v += adapter.v_norm();
        RoundReport rep;
        rep.round = t;
        rep.failure_count = static_cast<Index>(failures.size());
        rep.train_accuracy = ev_train.accuracy;
        rep.test_accuracy = ev_test.accuracy;
        rep.v_norm = adapter.v_norm();
        rep.cumulative_v_norm = cum_v;
        rep.delta_frobenius = std::sqrt(delta_fro2);
        rep.rank_measures = aggregate_rank(out.cumulative_deltas, cfg.adapter.epsilon_rank_eps);
        rep.optimizer_steps = tr.steps;
        rep.regressions = static_cast<Index>(audit.flips.size());
        out.reports.push_back(rep);
        out.round_margins.push_back(ev_train.margins);
        out.round_regression_rates.push_back(audit.regression_rate);
        out.round_audit_violations.push_back(static_cast<Index>(audit.violations.size()));
        if (writer) {
            writer->append(rep);
        }
    }

    if (cfg.bound_metrics && !out.round_windows.empty()) {
        out.x_final = final_weights_x(model, train, out, cfg);
    }
    out.final_model = std::move(model);
    return out;
}

namespace {

void write_model(BinaryWriter& w, const FrozenModel& model) {
    w.u8(model.arch == FrozenModel::Arch::Linear ? 0 : 1);
    w.i64(model.num_classes);
    w.u64(model.linears.size());
    for (const auto& lin : model.linears) {
        w.mat(lin.w);
        w.vec(lin.b);
    }
    w.u64(model.norms.size());
    for (const auto& nrm : model.norms) {
        w.vec(nrm.gamma);
        w.vec(nrm.beta);
        w.f64(nrm.eps);
    }
    w.u8(model.has_head() ? 1 : 0);
    if (model.has_head()) {
        w.mat(model.head->w);
        w.vec(model.head->b);
    }
    w.u64(model.adapted.size());
    for (Index a : model.adapted) {
        w.i64(a);
    }
}

FrozenModel read_model(BinaryReader& r) {
    FrozenModel model;
    model.arch = r.u8() == 0 ? FrozenModel::Arch::Linear : FrozenModel::Arch::Mlp;
    model.num_classes = static_cast<int>(r.i64());
    const std::uint64_t n_lin = r.u64();
    for (std::uint64_t i = 0; i < n_lin; ++i) {
        FrozenModel::Linear lin;
        lin.w = r.mat();
        lin.b = r.vec();
        model.linears.push_back(std::move(lin));
    }
    const std::uint64_t n_norm = r.u64();
    for (std::uint64_t i = 0; i < n_norm; ++i) {
        FrozenModel::LayerNorm nrm;
        nrm.gamma = r.vec();
        nrm.beta = r.vec();
        nrm.eps = r.f64();
        model.norms.push_back(std::move(nrm));
    }
    if (r.u8()) {
        FrozenModel::Linear head;
        head.w = r.mat();
        head.b = r.vec();
        model.head = std::move(head);
    }
    const std::uint64_t n_adapted = r.u64();
    for (std::uint64_t i = 0; i < n_adapted; ++i) {
        model.adapted.push_back(r.i64());
    }
    return model;
}

void write_factors(BinaryWriter& w, const SvdFactors& f) {
    w.mat(f.u);
    w.vec(f.sigma);
    w.mat(f.v);
}

SvdFactors read_factors(BinaryReader& r) {
    SvdFactors f;
    f.u = r.mat();
    f.sigma = r.vec();
    f.v = r.mat();
    return f;
}

void write_doubles(BinaryWriter& w, const std::vector<double>& xs) {
    w.u64(xs.size());
    for (double x : xs) {
        w.f64(x);
    }
}

std::vector<double> read_doubles(BinaryReader& r) {
    const std::uint64_t n = r.u64();
    std::vector<double> xs(n);
    for (auto& x : xs) {
        x = r.f64();
    }
    return xs;
}

void write_config(BinaryWriter& w, const BoostConfig& cfg) {
    w.i64(cfg.rounds);
    w.i64(cfg.adapter.rank);
    w.i64(cfg.adapter.proj_dim);
    w.i64(cfg.adapter.groups);
    w.u8(cfg.adapter.basis == Basis::Top ? 0 : 1);
    w.u64(cfg.adapter.seed);
    w.f64(cfg.adapter.epsilon_rank_eps);
    w.f64(cfg.lr_base);
    w.u8(cfg.lr_scaling ? 1 : 0);
    w.i64(cfg.epochs_per_round);
    w.i64(cfg.early_stop_threshold);
    w.u8(cfg.two_phase ? 1 : 0);
    w.u64(cfg.seed);
    w.i64(cfg.batch_size);
    w.f64(cfg.weight_decay);
    w.f64(cfg.warmup_ratio);
    w.f64(cfg.grad_clip);
    w.f64(cfg.head_lr);
    w.i64(cfg.head_epochs);
    w.u8(cfg.top_recompute ? 1 : 0);
    w.u8(cfg.store_deltas ? 1 : 0);
    w.u8(cfg.bound_metrics ? 1 : 0);
    w.i64(cfg.threads);
}

BoostConfig read_config(BinaryReader& r) {
    BoostConfig cfg;
    cfg.rounds = r.i64();
    cfg.adapter.rank = r.i64();
    cfg.adapter.proj_dim = r.i64();
    cfg.adapter.groups = r.i64();
    cfg.adapter.basis = r.u8() == 0 ? Basis::Top : Basis::Rotate;
    cfg.adapter.seed = r.u64();
    cfg.adapter.epsilon_rank_eps = r.f64();
    cfg.lr_base = r.f64();
    cfg.lr_scaling = r.u8() != 0;
    cfg.epochs_per_round = static_cast<int>(r.i64());
    cfg.early_stop_threshold = r.i64();
    cfg.two_phase = r.u8() != 0;
    cfg.seed = r.u64();
    cfg.batch_size = r.i64();
    cfg.weight_decay = r.f64();
    cfg.warmup_ratio = r.f64();
    cfg.grad_clip = r.f64();
    cfg.head_lr = r.f64();
    cfg.head_epochs = static_cast<int>(r.i64());
    cfg.top_recompute = r.u8() != 0;
    cfg.store_deltas = r.u8() != 0;
    cfg.bound_metrics = r.u8() != 0;
    cfg.threads = static_cast<int>(r.i64());
    return cfg;
}

} // namespace

void checkpoint(const BoostRun& run, const std::string& path) {
    BinaryWriter w;
    write_config(w, run.cfg);
    w.u64(run.split_hash);
    w.u8(run.early_stopped ? 1 : 0);

    w.u64(run.reports.size());
    for (const auto& rep : run.reports) {
        w.i64(rep.round);
        w.i64(rep.failure_count);
        w.f64(rep.train_accuracy);
        w.f64(rep.test_accuracy);
        w.f64(rep.v_norm);
        w.f64(rep.cumulative_v_norm);
        w.f64(rep.delta_frobenius);
        w.f64(rep.rank_measures.participation_ratio);
        w.f64(rep.rank_measures.eps_rank);
        w.f64(rep.rank_measures.epsilon);
        w.f64(rep.rank_measures.frobenius_norm);
        w.i64(rep.optimizer_steps);
        w.i64(rep.regressions);
    }

    write_model(w, run.final_model);

    w.u64(run.cumulative_deltas.size());
    for (const auto& d : run.cumulative_deltas) {
        w.mat(d);
    }
    w.u64(run.round_deltas.size());
    for (const auto& round : run.round_deltas) {
        w.u64(round.size());
        for (const auto& d : round) {
            w.mat(d);
        }
    }
    w.u64(run.round_windows.size());
    for (const auto& round : run.round_windows) {
        w.u64(round.size());
        for (const auto& f : round) {
            write_factors(w, f);
        }
    }
    w.u64(run.round_v.size());
    for (const auto& v : run.round_v) {
        w.vec(v);
    }
    write_doubles(w, run.initial_margins);
    w.f64(run.initial_train_accuracy);
    w.f64(run.initial_test_accuracy);
    w.u64(run.round_margins.size());
    for (const auto& m : run.round_margins) {
        write_doubles(w, m);
    }
    write_doubles(w, run.round_regression_rates);
    w.u64(run.round_audit_violations.size());
    for (Index v : run.round_audit_violations) {
        w.i64(v);
    }
    write_doubles(w, run.x_rounds);
    w.f64(run.x_round_frozen);
    w.f64(run.x_final);
    w.f64(run.max_hidden);

    w.write_file(path);
}

BoostRun restore(const std::string& path) {
    BinaryReader r(path);
    BoostRun run;
    run.cfg = read_config(r);
    run.split_hash = r.u64();
    run.early_stopped = r.u8() != 0;

    const std::uint64_t n_reports = r.u64();
    for (std::uint64_t i = 0; i < n_reports; ++i) {
        RoundReport rep;
        rep.round = r.i64();
        rep.failure_count = r.i64();
        rep.train_accuracy = r.f64();
        rep.test_accuracy = r.f64();
        rep.v_norm = r.f64();
        rep.cumulative_v_norm = r.f64();
        rep.delta_frobenius = r.f64();
        rep.rank_measures.participation_ratio = r.f64();
        rep.rank_measures.eps_rank = r.f64();
        rep.rank_measures.epsilon = r.f64();
        rep.rank_measures.frobenius_norm = r.f64();
        rep.optimizer_steps = r.i64();
        rep.regressions = r.i64();
        run.reports.push_back(rep);
    }

    run.final_model = read_model(r);

    const std::uint64_t n_cum = r.u64();
    for (std::uint64_t i = 0; i < n_cum; ++i) {
        run.cumulative_deltas.push_back(r.mat());
    }
    const std::uint64_t n_rd = r.u64();
    for (std::uint64_t i = 0; i < n_rd; ++i) {
        const std::uint64_t n_mod = r.u64();
        std::vector<Matrix> round;
        for (std::uint64_t m = 0; m < n_mod; ++m) {
            round.push_back(r.mat());
        }
        run.round_deltas.push_back(std::move(round));
    }
    const std::uint64_t n_rw = r.u64();
    for (std::uint64_t i = 0; i < n_rw; ++i) {
        const std::uint64_t n_mod = r.u64();
        std::vector<SvdFactors> round;
        for (std::uint64_t m = 0; m < n_mod; ++m) {
            round.push_back(read_factors(r));
        }
        run.round_windows.push_back(std::move(round));
    }
    const std::uint64_t n_rv = r.u64();
    for (std::uint64_t i = 0; i < n_rv; ++i) {
        run.round_v.push_back(r.vec());
    }
    run.initial_margins = read_doubles(r);
    run.initial_train_accuracy = r.f64();
    run.initial_test_accuracy = r.f64();
    const std::uint64_t n_rm = r.u64();
    for (std::uint64_t i = 0; i < n_rm; ++i) {
        run.round_margins.push_back(read_doubles(r));
    }
    run.round_regression_rates = read_doubles(r);
    const std::uint64_t n_av = r.u64();
    for (std::uint64_t i = 0; i < n_av; ++i) {
        run.round_audit_violations.push_back(r.i64());
    }
    run.x_rounds = read_doubles(r);
    run.x_round_frozen = r.f64();
    run.x_final = r.f64();
    run.max_hidden = r.f64();
    if (!r.at_end()) {
        throw IntegrityError("checkpoint: trailing bytes after payload");
    }
    return run;
}

} // namespace boostlora
