#include "boostlora/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "boostlora/serialize.hpp"

namespace boostlora {

namespace {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

double mean_tail(const std::vector<double>& xs) {
    if (xs.empty()) {
        return 0.0;
    }
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

} // namespace

std::string arm_dir(const ExperimentConfig& cfg, const std::string& arm_name) {
    return (std::filesystem::path(cfg.out_root) / (cfg.name + "-" + arm_name)).string();
}

void write_margins(const std::string& path, const std::vector<double>& initial,
                   const std::vector<std::vector<double>>& per_round) {
    BinaryWriter w;
    w.u64(initial.size());
    for (double m : initial) {
        w.f64(m);
    }
    w.u64(per_round.size());
    for (const auto& round : per_round) {
        w.u64(round.size());
        for (double m : round) {
            w.f64(m);
        }
    }
    w.write_file(path);
}

MarginSnapshots read_margins(const std::string& path) {
    BinaryReader r(path);
    MarginSnapshots out;
    const std::uint64_t n0 = r.u64();
    out.initial.resize(n0);
    for (auto& m : out.initial) {
        m = r.f64();
    }
    const std::uint64_t rounds = r.u64();
    out.per_round.resize(rounds);
    for (auto& round : out.per_round) {
        const std::uint64_t n = r.u64();
        round.resize(n);
        for (auto& m : round) {
            m = r.f64();
        }
    }
    return out;
}

void write_summary(const std::string& path, const ExperimentConfig& cfg,
                   const std::string& arm_name, const BoostRun& run, Index n_train,
                   Index n_test) {
    nlohmann::ordered_json j;
    j["experiment"] = cfg.name;
    j["arm"] = arm_name;
    j["seed"] = cfg.seed;
    j["split_hash"] = hex64(run.split_hash);
    j["n_train"] = n_train;
    j["n_test"] = n_test;
    j["params_per_round"] = run.cfg.adapter.trainable_params();
    j["effective_lr"] = run.cfg.effective_lr();
    j["rounds_completed"] = run.reports.size();
    j["early_stopped"] = run.early_stopped;
    j["initial_train_accuracy"] = run.initial_train_accuracy;
    j["initial_test_accuracy"] = run.initial_test_accuracy;
    j["final_train_accuracy"] =
        run.reports.empty() ? run.initial_train_accuracy : run.reports.back().train_accuracy;
    j["final_test_accuracy"] =
        run.reports.empty() ? run.initial_test_accuracy : run.reports.back().test_accuracy;
    j["b_total"] = run.b_total();
    j["x_round_frozen"] = run.x_round_frozen;
    j["x_final"] = run.x_final;
    j["x_rounds"] = run.x_rounds;
    j["max_hidden_norm"] = run.max_hidden;
    j["mean_regression_rate"] = mean_tail(run.round_regression_rates);
    // self-limiting dynamics: late-round adapter norms against early rounds
    std::vector<double> head_norms, tail_norms;
    for (std::size_t t = 0; t < run.reports.size(); ++t) {
        if (t < 5) {
            head_norms.push_back(run.reports[t].v_norm);
        }
        if (t + 5 >= run.reports.size()) {
            tail_norms.push_back(run.reports[t].v_norm);
        }
    }
    j["v_norm_mean_first5"] = mean_tail(head_norms);
    j["v_norm_mean_last5"] = mean_tail(tail_norms);
    Index violations = 0;
    for (Index v : run.round_audit_violations) {
        violations += v;
    }
    j["audit_violations"] = violations;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << j.dump(2) << "\n";
}

std::vector<ArmResult> run_experiment(const ExperimentConfig& cfg, int threads,
                                      std::ostream* log) {
    LabeledDataset data;
    if (cfg.dataset.csv_path) {
        data = load_csv(*cfg.dataset.csv_path);
    } else {
        data = make_gaussian_mixture(*cfg.dataset.synthetic);
    }
    const SplitIndices split = split_dataset(data.size(), cfg.dataset.test_fraction, cfg.seed);
    const LabeledDataset train = subset(data, split.train);
    const LabeledDataset test = subset(data, split.test);
    if (log) {
        *log << "dataset: n=" << data.size() << " dim=" << data.dim()
             << " classes=" << data.num_classes << " train=" << train.size()
             << " test=" << test.size() << " split=" << hex64(split.hash) << "\n";
    }

    FrozenModel base;
    const std::uint64_t model_seed = mix64(cfg.seed ^ 0x5EEDB05EULL);
    if (cfg.model.type == ModelSpec::Type::Linear) {
        base = make_linear_model(data.dim(), data.num_classes, model_seed);
    } else {
        base = make_mlp_model(data.dim(), cfg.model.hidden_dim, data.num_classes, model_seed);
    }
    if (cfg.model.pretrain_epochs > 0) {
        pretrain(base, train, cfg.model.pretrain_epochs, cfg.model.pretrain_lr,
                 mix64(cfg.seed ^ 0x9A3E77ULL));
        if (log) {
            const EvalResult ev = evaluate(base, train, nullptr, threads);
            *log << "pretrained base: train accuracy " << ev.accuracy << "\n";
        }
    }

    std::vector<ArmResult> results;
    for (const ArmSpec& arm : cfg.arms) {
        BoostConfig bc = arm.boost;
        bc.seed = cfg.seed;
        bc.threads = threads;
        const std::string dir = arm_dir(cfg, arm.name);
        RunWriter writer(dir);
        if (log) {
            *log << "arm " << arm.name << ": rounds=" << bc.rounds << " r=" << bc.adapter.rank
                 << " basis=" << (bc.adapter.basis == Basis::Top ? "top" : "rotate") << " -> "
                 << dir << "\n";
        }
        BoostRun run_out = run(base, train, test, bc, &writer, split.hash);
        checkpoint(run_out, (std::filesystem::path(dir) / "checkpoint.bstl").string());
        write_margins((std::filesystem::path(dir) / "margins.bin").string(),
                      run_out.initial_margins, run_out.round_margins);
        write_summary((std::filesystem::path(dir) / "summary.json").string(), cfg, arm.name,
                      run_out, train.size(), test.size());
        if (log) {
            *log << "arm " << arm.name << ": rounds=" << run_out.reports.size()
                 << " final train=" << (run_out.reports.empty()
                                            ? run_out.initial_train_accuracy
                                            : run_out.reports.back().train_accuracy)
                 << " test=" << (run_out.reports.empty() ? run_out.initial_test_accuracy
                                                         : run_out.reports.back().test_accuracy)
                 << "\n";
        }
        results.push_back({arm.name, dir, std::move(run_out)});
    }
    return results;
}

} // namespace boostlora
