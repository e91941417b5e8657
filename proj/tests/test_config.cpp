#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "boostlora/config.hpp"
#include "boostlora/experiment.hpp"
#include "test_util.hpp"

using namespace boostlora;
namespace fs = std::filesystem;

namespace {

const char* kValidConfig = R"({
  "name": "toy",
  "seed": 7,
  "model": {"type": "mlp", "hidden_dim": 10, "pretrain_epochs": 1, "pretrain_lr": 0.003},
  "dataset": {"synthetic": {"classes": 3, "dim": 8, "n": 240, "separation": 2.5, "noise": 1.0},
              "test_fraction": 0.25},
  "boost": {"rounds": 2, "rank": 2, "proj_dim": 3, "groups": 3, "basis": "rotate",
            "epochs_per_round": 1, "two_phase": true, "batch_size": 32,
            "early_stop_threshold": 0},
  "arms": [{"name": "rotate"}, {"name": "top", "basis": "top"}]
})";

fs::path temp_dir() {
    const fs::path dir = fs::temp_directory_path() / "bstl_config_test";
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("a valid config parses with resolved arms") {
    const ExperimentConfig cfg = parse_experiment_config(kValidConfig, "cfg");
    CHECK(cfg.name == "toy");
    CHECK(cfg.seed == 7);
    CHECK(cfg.model.type == ModelSpec::Type::Mlp);
    CHECK(cfg.dataset.synthetic.has_value());
    CHECK(cfg.dataset.synthetic->n == 240);
    REQUIRE(cfg.arms.size() == 2);
    CHECK(cfg.arms[0].boost.adapter.basis == Basis::Rotate);
    CHECK(cfg.arms[1].boost.adapter.basis == Basis::Top);
    // arm overrides start from the base boost section
    CHECK(cfg.arms[1].boost.rounds == 2);
    CHECK(cfg.arms[1].boost.two_phase);
}

TEST_CASE("unknown keys are fail-closed errors naming the path") {
    const std::string bad = R"({"name": "x", "dataset": {"synthetic":
        {"classes": 2, "dim": 4, "n": 10}}, "boost": {"rnak": 2}})";
    CHECK_THROWS_WITH_AS(parse_experiment_config(bad, "cfg"),
                         "config: cfg.boost.rnak: unknown key", ConfigError);

    const std::string bad_arm = R"({"name": "x", "dataset": {"synthetic":
        {"classes": 2, "dim": 4, "n": 10}}, "arms": [{"name": "a", "color": "red"}]})";
    CHECK_THROWS_WITH_AS(parse_experiment_config(bad_arm, "cfg"),
                         "config: cfg.arms[0].color: unknown key", ConfigError);
}

TEST_CASE("config validation catches structural mistakes") {
    CHECK_THROWS_AS(parse_experiment_config(R"({"dataset": {}})", "cfg"), ConfigError);
    CHECK_THROWS_AS(parse_experiment_config(R"({"name": "x"})", "cfg"), ConfigError);
    CHECK_THROWS_AS(
        parse_experiment_config(
            R"({"name": "x", "dataset": {"csv": "a.csv", "synthetic": {"classes":2,"dim":2,"n":4}}})",
            "cfg"),
        ConfigError);
    CHECK_THROWS_AS(
        parse_experiment_config(
            R"({"name": "x", "dataset": {"synthetic": {"classes":2,"dim":2,"n":4}}, "boost": {"basis": "sideways"}})",
            "cfg"),
        ConfigError);
    CHECK_THROWS_AS(parse_experiment_config("{not json", "cfg"), ConfigError);
}

TEST_CASE("a missing csv path is rejected at load time") {
    const fs::path dir = temp_dir();
    const fs::path cfg_path = dir / "missing_csv.json";
    std::ofstream(cfg_path.string())
        << R"({"name": "x", "dataset": {"csv": "/nonexistent/data.csv"}})";
    CHECK_THROWS_AS(load_experiment_config(cfg_path.string()), ConfigError);
}

TEST_CASE("gaussian mixture generation is balanced and deterministic") {
    SyntheticSpec spec;
    spec.classes = 10;
    spec.dim = 16;
    spec.n = 1005;
    spec.seed = 3;
    const LabeledDataset a = make_gaussian_mixture(spec);
    const LabeledDataset b = make_gaussian_mixture(spec);
    CHECK(testutil::bit_identical(a.features, b.features));
    CHECK(a.labels == b.labels);

    std::vector<int> counts(10, 0);
    for (int label : a.labels) counts[std::size_t(label)]++;
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    CHECK(*hi - *lo <= 1); // well within the 1% balance contract

    CHECK_THROWS_AS(make_gaussian_mixture(SyntheticSpec{2, 4, 1}), ConfigError);
}

TEST_CASE("csv round-trips exactly") {
    SyntheticSpec spec;
    spec.classes = 3;
    spec.dim = 5;
    spec.n = 64;
    spec.seed = 17;
    const LabeledDataset data = make_gaussian_mixture(spec);
    const fs::path path = temp_dir() / "roundtrip.csv";
    save_csv(data, path.string());
    const LabeledDataset back = load_csv(path.string());
    CHECK(back.num_classes == 3);
    CHECK(back.labels == data.labels);
    CHECK(testutil::bit_identical(back.features, data.features)); // shortest-round-trip floats

    // identical bytes when regenerated
    const fs::path path2 = temp_dir() / "roundtrip2.csv";
    save_csv(make_gaussian_mixture(spec), path2.string());
    std::ifstream f1(path.string()), f2(path2.string());
    const std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
}

TEST_CASE("csv loader rejects malformed input") {
    const fs::path dir = temp_dir();
    auto write = [&](const char* name, const char* body) {
        const fs::path p = dir / name;
        std::ofstream(p.string()) << body;
        return p.string();
    };
    CHECK_THROWS_AS(load_csv(write("nolabel.csv", "a,b\n1,2\n")), InvalidInputError);
    CHECK_THROWS_AS(load_csv(write("badnum.csv", "label,f0\n0,abc\n")), InvalidInputError);
    CHECK_THROWS_AS(load_csv(write("shortrow.csv", "label,f0,f1\n0,1\n")), InvalidInputError);
    CHECK_THROWS_AS(load_csv(write("empty.csv", "")), InvalidInputError);
}

TEST_CASE("a wide-separation binary task supports a near-perfect linear probe") {
    SyntheticSpec spec;
    spec.classes = 2;
    spec.dim = 8;
    spec.n = 600;
    spec.separation = 6.0;
    spec.seed = 23;
    const LabeledDataset data = make_gaussian_mixture(spec);
    FrozenModel probe = make_linear_model(8, 2, 29);
    pretrain(probe, data, 10, 1e-2, 31);
    CHECK(evaluate(probe, data).accuracy >= 0.99);
}

TEST_CASE("split is a disjoint seeded partition with a stable hash") {
    const SplitIndices s = split_dataset(100, 0.2, 5);
    CHECK(s.test.size() == 20);
    CHECK(s.train.size() == 80);
    std::set<Index> all(s.train.begin(), s.train.end());
    all.insert(s.test.begin(), s.test.end());
    CHECK(all.size() == 100);

    const SplitIndices again = split_dataset(100, 0.2, 5);
    CHECK(again.hash == s.hash);
    CHECK(again.train == s.train);
    const SplitIndices other = split_dataset(100, 0.2, 6);
    CHECK(other.hash != s.hash);
}

TEST_CASE("margins container round-trips") {
    const fs::path path = temp_dir() / "margins.bin";
    const std::vector<double> initial{0.5, -0.25, 1.75};
    const std::vector<std::vector<double>> rounds{{1.0, 2.0, 3.0}, {0.1, 0.2, 0.3}};
    write_margins(path.string(), initial, rounds);
    const MarginSnapshots back = read_margins(path.string());
    CHECK(back.initial == initial);
    CHECK(back.per_round == rounds);
}

TEST_CASE("run_experiment writes every artifact with shared splits") {
    ExperimentConfig cfg = parse_experiment_config(kValidConfig, "cfg");
    const fs::path out = temp_dir() / "exp_out";
    fs::remove_all(out);
    cfg.out_root = out.string();

    std::ostringstream log;
    const auto results = run_experiment(cfg, 1, &log);
    REQUIRE(results.size() == 2);
    CHECK(results[0].run.split_hash == results[1].run.split_hash);

    for (const auto& arm : results) {
        const fs::path dir(arm.dir);
        for (const char* leaf :
             {"rounds.jsonl", "curves.csv", "checkpoint.bstl", "margins.bin", "summary.json"}) {
            CHECK(fs::exists(dir / leaf));
        }
        const BoostRun back = restore((dir / "checkpoint.bstl").string());
        CHECK(back.split_hash == arm.run.split_hash);
        CHECK(back.reports.size() == arm.run.reports.size());
    }

    // rotate/top share round-1 reports (windows coincide at t = 1)
    REQUIRE(!results[0].run.reports.empty());
    REQUIRE(!results[1].run.reports.empty());
    CHECK(results[0].run.reports[0].v_norm == results[1].run.reports[0].v_norm);

    SUBCASE("re-running the experiment reproduces the files byte for byte") {
        ExperimentConfig cfg2 = cfg;
        const fs::path out2 = temp_dir() / "exp_out2";
        fs::remove_all(out2);
        cfg2.out_root = out2.string();
        run_experiment(cfg2, 1, nullptr);
        for (const auto& arm : cfg.arms) {
            for (const char* leaf : {"rounds.jsonl", "curves.csv", "summary.json",
                                     "checkpoint.bstl", "margins.bin"}) {
                std::ifstream f1((fs::path(arm_dir(cfg, arm.name)) / leaf).string(),
                                 std::ios::binary);
                std::ifstream f2((fs::path(arm_dir(cfg2, arm.name)) / leaf).string(),
                                 std::ios::binary);
                const std::string b1((std::istreambuf_iterator<char>(f1)),
                                     std::istreambuf_iterator<char>());
                const std::string b2((std::istreambuf_iterator<char>(f2)),
                                     std::istreambuf_iterator<char>());
                CHECK(b1 == b2);
                CHECK(!b1.empty());
            }
        }
    }
}
