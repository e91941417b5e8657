#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "boostlora/boosting.hpp"
#include "boostlora/bounds.hpp"
#include "boostlora/config.hpp"
#include "boostlora/experiment.hpp"
#include "boostlora/grpo.hpp"

namespace fs = std::filesystem;
using namespace boostlora;

namespace {

std::string fmt9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::string fmt_shortest(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

int cmd_gen_data(const SyntheticSpec& spec, const std::string& out_path) {
    const LabeledDataset data = make_gaussian_mixture(spec);
    save_csv(data, out_path);
    std::cout << "wrote " << out_path << ": n=" << data.size() << " dim=" << data.dim()
              << " classes=" << data.num_classes << "\n";
    return 0;
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed_override,
            std::optional<std::string> out_override, int threads, bool verbose) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    if (seed_override) {
        cfg.seed = *seed_override;
        if (cfg.dataset.synthetic) {
            cfg.dataset.synthetic->seed = *seed_override;
        }
    }
    if (out_override && !out_override->empty()) {
        cfg.out_root = *out_override;
    }
    run_experiment(cfg, threads, verbose ? &std::cerr : nullptr);
    std::cout << "run complete: " << cfg.arms.size() << " arm(s) under " << cfg.out_root << "\n";
    return 0;
}

int cmd_advantage() {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(std::cin, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string tok;
        grpo::RewardGroup group;
        while (ss >> tok) {
            double v = 0.0;
            const char* first = tok.data();
            const char* last = tok.data() + tok.size();
            const auto res = std::from_chars(first, last, v);
            if (res.ec != std::errc{} || res.ptr != last) {
                std::cerr << "advantage: line " << lineno << ": bad token '" << tok << "'\n";
                return 2;
            }
            group.rewards.push_back(v);
        }
        if (group.rewards.empty()) {
            continue;
        }
        if (group.rewards.size() < 2) {
            std::cerr << "advantage: line " << lineno << ": need at least 2 rewards per group\n";
            return 2;
        }
        const std::vector<double> adv = grpo::group_advantages(group);
        std::string out;
        for (std::size_t i = 0; i < adv.size(); ++i) {
            if (i) {
                out += ' ';
            }
            out += fmt9(adv[i]);
        }
        std::cout << out << "\n";
    }
    return 0;
}

std::string checkpoint_path_of(const std::string& target) {
    fs::path p(target);
    if (fs::is_directory(p)) {
        return (p / "checkpoint.bstl").string();
    }
    return target;
}

int cmd_rank_audit(const std::string& target) {
    const std::string ckpt = checkpoint_path_of(target);
    const BoostRun run = restore(ckpt);
    const double eps = run.cfg.adapter.epsilon_rank_eps;

    if (run.reports.empty()) {
        std::cout << "rank-audit: no completed rounds; all measures zero\n";
        std::cout << "aggregate: participation_ratio=0 eps_rank=0 frobenius=0\n";
        return 0;
    }
    if (run.round_deltas.empty()) {
        std::cerr << "rank-audit: checkpoint has no stored per-round deltas; re-run with "
                     "store_deltas enabled\n";
        return 1;
    }

    const std::size_t modules = run.cumulative_deltas.size();
    std::vector<Matrix> recomputed;
    for (std::size_t m = 0; m < modules; ++m) {
        recomputed.push_back(Matrix::Zero(run.cumulative_deltas[m].rows(),
                                          run.cumulative_deltas[m].cols()));
    }

    bool ok = true;
    for (std::size_t t = 0; t < run.round_deltas.size(); ++t) {
        double agg_rho = 0.0, agg_eps = 0.0, fro2 = 0.0;
        for (std::size_t m = 0; m < modules; ++m) {
            recomputed[m] += run.round_deltas[t][m];
            const RankMeasures rm = rank_measures(recomputed[m], eps);
            agg_rho += rm.participation_ratio / static_cast<double>(modules);
            agg_eps += static_cast<double>(rm.eps_rank) / static_cast<double>(modules);
            fro2 += rm.frobenius_norm * rm.frobenius_norm;
        }
        const auto& stored = run.reports[t].rank_measures;
        const double tol = 1e-9;
        if (std::abs(agg_rho - stored.participation_ratio) > tol ||
            std::abs(agg_eps - stored.eps_rank) > tol ||
            std::abs(std::sqrt(fro2) - stored.frobenius_norm) > tol) {
            std::cerr << "rank-audit: round " << run.reports[t].round
                      << ": recomputed measures disagree with the stored report\n";
            ok = false;
        }
    }

    std::cout << "rank-audit: " << run.round_deltas.size() << " round(s), " << modules
              << " adapted module(s)\n";
    double agg_rho = 0.0, agg_eps = 0.0;
    for (std::size_t m = 0; m < modules; ++m) {
        const double drift =
            (recomputed[m] - run.cumulative_deltas[m]).cwiseAbs().maxCoeff();
        if (drift > 1e-12) {
            std::cerr << "rank-audit: module " << m << ": accumulator drift " << drift << "\n";
            ok = false;
        }
        const RankMeasures rm = rank_measures(recomputed[m], eps);
        const Index nrank = numerical_rank(recomputed[m]);
        std::cout << "module " << m << ": participation_ratio=" << fmt_shortest(rm.participation_ratio)
                  << " eps_rank=" << rm.eps_rank << " numerical_rank=" << nrank
                  << " frobenius=" << fmt_shortest(rm.frobenius_norm) << "\n";
        agg_rho += rm.participation_ratio / static_cast<double>(modules);
        agg_eps += static_cast<double>(rm.eps_rank) / static_cast<double>(modules);
    }
    std::cout << "aggregate: participation_ratio=" << fmt_shortest(agg_rho)
              << " eps_rank=" << fmt_shortest(agg_eps) << "\n";

    // cross-check rounds.jsonl when auditing a run directory
    fs::path dir(target);
    if (fs::is_directory(dir) && fs::exists(dir / "rounds.jsonl")) {
        std::ifstream in((dir / "rounds.jsonl").string());
        std::string line;
        std::size_t t = 0;
        while (std::getline(in, line)) {
            if (line.empty()) {
                continue;
            }
            if (t >= run.reports.size()) {
                std::cerr << "rank-audit: rounds.jsonl has more rows than the checkpoint\n";
                ok = false;
                break;
            }
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception&) {
                std::cerr << "rank-audit: rounds.jsonl line " << (t + 1) << " is not valid JSON\n";
                ok = false;
                break;
            }
            const auto& rep = run.reports[t];
            const double tol = 1e-9;
            auto field = [&](const char* name) { return j.value(name, -1.0); };
            const auto rm = j.value("rank_measures", nlohmann::json::object());
            if (j.value("round", Index{-1}) != rep.round ||
                j.value("failure_count", Index{-1}) != rep.failure_count ||
                std::abs(field("v_norm") - rep.v_norm) > tol ||
                std::abs(rm.value("participation_ratio", -1.0) -
                         rep.rank_measures.participation_ratio) > tol ||
                std::abs(rm.value("eps_rank", -1.0) - rep.rank_measures.eps_rank) > tol) {
                std::cerr << "rank-audit: rounds.jsonl line " << (t + 1)
                          << " disagrees with the checkpoint\n";
                ok = false;
            }
            ++t;
        }
        if (ok && t != run.reports.size()) {
            std::cerr << "rank-audit: rounds.jsonl is missing rows\n";
            ok = false;
        }
    }

    if (!ok) {
        std::cerr << "rank-audit: FAILED cross-checks\n";
        return 1;
    }
    std::cout << "rank-audit: all cross-checks passed\n";
    return 0;
}

struct RoundRow {
    Index round = 0;
    double v_norm = 0.0;
};

std::vector<RoundRow> read_rounds_jsonl(const fs::path& path) {
    std::ifstream in(path.string());
    if (!in) {
        throw InvalidInputError("bound-eval: cannot open " + path.string());
    }
    std::vector<RoundRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const nlohmann::json j = nlohmann::json::parse(line);
        rows.push_back({j.at("round").get<Index>(), j.at("v_norm").get<double>()});
    }
    return rows;
}

int cmd_bound_eval(const std::string& run_dir, double delta, const std::string& x_source) {
    const fs::path dir(run_dir);
    const auto rows = read_rounds_jsonl(dir / "rounds.jsonl");
    const MarginSnapshots margins = read_margins((dir / "margins.bin").string());

    std::ifstream sin((dir / "summary.json").string());
    if (!sin) {
        throw InvalidInputError("bound-eval: cannot open summary.json in " + run_dir);
    }
    nlohmann::json summary;
    sin >> summary;
    const Index n = summary.at("n_train").get<Index>();
    const double x_frozen = summary.at("x_round_frozen").get<double>();
    const double x_final = summary.at("x_final").get<double>();
    const std::vector<double> x_rounds =
        summary.value("x_rounds", std::vector<double>(rows.size(), x_frozen));

    const bool use_final = x_source == "final";
    const std::vector<double>& final_margins =
        margins.per_round.empty() ? margins.initial : margins.per_round.back();

    double b_total = 0.0;
    for (const auto& r : rows) {
        b_total += r.v_norm;
    }
    BoundInputs inputs;
    inputs.margins = final_margins;
    inputs.b_total = b_total;
    inputs.x = use_final ? x_final : x_frozen;
    inputs.n = n;
    inputs.delta = delta;
    const std::vector<double> grid = default_theta_grid(final_margins);
    const BoundReport rep = evaluate_bound(inputs, grid);

    {
        std::ofstream out((dir / "bound.csv").string(), std::ios::binary | std::ios::trunc);
        out << "theta,margin_term,complexity_term,confidence_term,bound\n";
        for (std::size_t i = 0; i < rep.theta_grid.size(); ++i) {
            out << fmt_shortest(rep.theta_grid[i]) << ',' << fmt_shortest(rep.margin_terms[i])
                << ',' << fmt_shortest(rep.complexity_terms[i]) << ','
                << fmt_shortest(rep.confidence_term) << ',' << fmt_shortest(rep.bounds[i])
                << "\n";
        }
    }
    {
        std::ofstream out((dir / "bound_rounds.csv").string(),
                          std::ios::binary | std::ios::trunc);
        out << "round,b_total,x,theta_star,bound_at_star,vacuous\n";
        double b_t = 0.0;
        double x_t = 0.0;
        for (std::size_t t = 0; t < rows.size() && t < margins.per_round.size(); ++t) {
            b_t += rows[t].v_norm;
            if (t < x_rounds.size()) {
                x_t = std::max(x_t, x_rounds[t]);
            }
            BoundInputs bi;
            bi.margins = margins.per_round[t];
            bi.b_total = b_t;
            bi.x = use_final ? x_final : x_t;
            bi.n = n;
            bi.delta = delta;
            const BoundReport br = evaluate_bound(bi, default_theta_grid(bi.margins));
            out << rows[t].round << ',' << fmt_shortest(b_t) << ',' << fmt_shortest(bi.x) << ','
                << fmt_shortest(br.theta_star) << ',' << fmt_shortest(br.bound_at_star) << ','
                << (br.vacuous ? 1 : 0) << "\n";
        }
    }

    std::size_t star = 0;
    for (std::size_t i = 0; i < rep.theta_grid.size(); ++i) {
        if (rep.theta_grid[i] == rep.theta_star) {
            star = i;
        }
    }
    std::cout << "bound: theta_star=" << fmt9(rep.theta_star)
              << " bound_at_star=" << fmt9(rep.bound_at_star)
              << " vacuous=" << (rep.vacuous ? "true" : "false")
              << " margin_term=" << fmt9(rep.margin_terms[star])
              << " complexity_term=" << fmt9(rep.complexity_terms[star])
              << " confidence_term=" << fmt9(rep.confidence_term) << " b_total=" << fmt9(b_total)
              << " x=" << fmt9(inputs.x) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"gradient-boosted ultra-low-parameter adapters"};
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<std::uint64_t> seed;
    std::string out_root;
    int threads = 1;
    bool verbose = false;
    app.add_option("--seed", seed, "override the experiment seed");
    app.add_option("--out", out_root, "output root directory")->envname("BOOSTLORA_OUT");
    app.add_option("--threads", threads, "worker threads for evaluation passes");
    app.add_flag("--verbose", verbose, "log progress to stderr");

    auto* run_cmd = app.add_subcommand("run", "execute an experiment config");
    std::string config_path;
    run_cmd->add_option("config", config_path, "experiment config file")->required();

    auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic classification CSV");
    SyntheticSpec spec;
    std::string gen_out;
    gen_cmd->add_option("--classes", spec.classes, "number of classes")->required();
    gen_cmd->add_option("--dim", spec.dim, "feature dimension")->required();
    gen_cmd->add_option("--n", spec.n, "number of examples")->required();
    gen_cmd->add_option("--separation", spec.separation, "class-mean radius");
    gen_cmd->add_option("--noise", spec.noise, "feature noise stddev");
    gen_cmd->add_option("--file", gen_out, "output CSV path")->required();

    auto* audit_cmd = app.add_subcommand("rank-audit", "recompute rank measures from a run");
    std::string audit_target;
    audit_cmd->add_option("target", audit_target, "run directory or checkpoint file")
        ->required();

    auto* bound_cmd = app.add_subcommand("bound-eval", "evaluate the margin bound for a run");
    std::string bound_dir;
    double delta = 0.05;
    std::string x_source = "round_frozen";
    bound_cmd->add_option("run_dir", bound_dir, "run directory")->required();
    bound_cmd->add_option("--delta", delta, "failure probability");
    bound_cmd->add_option("--x-source", x_source, "round_frozen or final")
        ->check(CLI::IsMember({"round_frozen", "final"}));

    auto* adv_cmd =
        app.add_subcommand("advantage", "group advantages: one reward group per stdin line");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (run_cmd->parsed()) {
            return cmd_run(config_path, seed,
                           out_root.empty() ? std::nullopt : std::make_optional(out_root),
                           threads, verbose);
        }
        if (gen_cmd->parsed()) {
            if (seed) {
                spec.seed = *seed;
            }
            return cmd_gen_data(spec, gen_out);
        }
        if (audit_cmd->parsed()) {
            return cmd_rank_audit(audit_target);
        }
        if (bound_cmd->parsed()) {
            return cmd_bound_eval(bound_dir, delta, x_source);
        }
        if (adv_cmd->parsed()) {
            return cmd_advantage();
        }
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
