#include "boostlora/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace boostlora {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& why) {
    throw ConfigError("config: " + path + ": " + why);
}

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.count(key)) {
            fail(path + "." + key, "unknown key");
        }
    }
}

template <typename T>
T get(const json& obj, const std::string& path, const std::string& key, T fallback) {
    if (!obj.contains(key)) {
        return fallback;
    }
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        fail(path + "." + key, "wrong type");
    }
}

template <typename T>
T require(const json& obj, const std::string& path, const std::string& key) {
    if (!obj.contains(key)) {
        fail(path + "." + key, "missing required key");
    }
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        fail(path + "." + key, "wrong type");
    }
}

Basis parse_basis(const std::string& s, const std::string& path) {
    if (s == "top") {
        return Basis::Top;
    }
    if (s == "rotate") {
        return Basis::Rotate;
    }
    fail(path, "basis must be 'top' or 'rotate', got '" + s + "'");
}

const std::set<std::string> kBoostKeys = {
    "rounds",     "rank",          "proj_dim",     "groups",       "basis",
    "lr",         "lr_scaling",    "epochs_per_round", "early_stop_threshold",
    "two_phase",  "batch_size",    "weight_decay", "warmup_ratio", "grad_clip",
    "head_lr",    "head_epochs",   "top_recompute", "store_deltas", "bound_metrics",
    "epsilon_rank_eps"};

void apply_boost_keys(const json& obj, const std::string& path, BoostConfig& bc) {
    bc.rounds = get<Index>(obj, path, "rounds", bc.rounds);
    bc.adapter.rank = get<Index>(obj, path, "rank", bc.adapter.rank);
    bc.adapter.proj_dim = get<Index>(obj, path, "proj_dim", bc.adapter.proj_dim);
    bc.adapter.groups = get<Index>(obj, path, "groups", bc.adapter.groups);
    if (obj.contains("basis")) {
        bc.adapter.basis =
            parse_basis(require<std::string>(obj, path, "basis"), path + ".basis");
    }
    bc.adapter.epsilon_rank_eps =
        get<double>(obj, path, "epsilon_rank_eps", bc.adapter.epsilon_rank_eps);
    bc.lr_base = get<double>(obj, path, "lr", bc.lr_base);
    bc.lr_scaling = get<bool>(obj, path, "lr_scaling", bc.lr_scaling);
    bc.epochs_per_round = get<int>(obj, path, "epochs_per_round", bc.epochs_per_round);
    bc.early_stop_threshold =
        get<Index>(obj, path, "early_stop_threshold", bc.early_stop_threshold);
    bc.two_phase = get<bool>(obj, path, "two_phase", bc.two_phase);
    bc.batch_size = get<Index>(obj, path, "batch_size", bc.batch_size);
    bc.weight_decay = get<double>(obj, path, "weight_decay", bc.weight_decay);
    bc.warmup_ratio = get<double>(obj, path, "warmup_ratio", bc.warmup_ratio);
    bc.grad_clip = get<double>(obj, path, "grad_clip", bc.grad_clip);
    bc.head_lr = get<double>(obj, path, "head_lr", bc.head_lr);
    bc.head_epochs = get<int>(obj, path, "head_epochs", bc.head_epochs);
    bc.top_recompute = get<bool>(obj, path, "top_recompute", bc.top_recompute);
    bc.store_deltas = get<bool>(obj, path, "store_deltas", bc.store_deltas);
    bc.bound_metrics = get<bool>(obj, path, "bound_metrics", bc.bound_metrics);

    if (bc.rounds < 1) {
        fail(path + ".rounds", "must be >= 1");
    }
    if (bc.adapter.rank < 1 || bc.adapter.proj_dim < 1 || bc.adapter.groups < 1) {
        fail(path, "rank, proj_dim and groups must all be >= 1");
    }
    if (!(bc.lr_base > 0.0) && bc.lr_base != 0.0) {
        fail(path + ".lr", "must be >= 0");
    }
    if (bc.batch_size < 1) {
        fail(path + ".batch_size", "must be >= 1");
    }
    if (bc.epochs_per_round < 1) {
        fail(path + ".epochs_per_round", "must be >= 1");
    }
}

} // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         const std::string& origin) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError("config: " + origin + ": not valid JSON: " + e.what());
    }
    if (!root.is_object()) {
        fail(origin, "top level must be an object");
    }
    check_keys(root, origin, {"name", "seed", "out", "model", "dataset", "boost", "arms"});

    ExperimentConfig cfg;
    cfg.name = require<std::string>(root, origin, "name");
    if (cfg.name.empty()) {
        fail(origin + ".name", "must be nonempty");
    }
    cfg.seed = get<std::uint64_t>(root, origin, "seed", 0);
    cfg.out_root = get<std::string>(root, origin, "out", cfg.out_root);

    if (root.contains("model")) {
        const json& m = root.at("model");
        const std::string path = origin + ".model";
        check_keys(m, path, {"type", "hidden_dim", "pretrain_epochs", "pretrain_lr"});
        const std::string type = get<std::string>(m, path, "type", "mlp");
        if (type == "linear") {
            cfg.model.type = ModelSpec::Type::Linear;
        } else if (type == "mlp") {
            cfg.model.type = ModelSpec::Type::Mlp;
        } else {
            fail(path + ".type", "must be 'linear' or 'mlp', got '" + type + "'");
        }
        cfg.model.hidden_dim = get<Index>(m, path, "hidden_dim", cfg.model.hidden_dim);
        cfg.model.pretrain_epochs = get<int>(m, path, "pretrain_epochs", cfg.model.pretrain_epochs);
        cfg.model.pretrain_lr = get<double>(m, path, "pretrain_lr", cfg.model.pretrain_lr);
        if (cfg.model.hidden_dim < 1) {
            fail(path + ".hidden_dim", "must be >= 1");
        }
    }

    {
        if (!root.contains("dataset")) {
            fail(origin + ".dataset", "missing required key");
        }
        const json& d = root.at("dataset");
        const std::string path = origin + ".dataset";
        check_keys(d, path, {"csv", "synthetic", "test_fraction"});
        cfg.dataset.test_fraction = get<double>(d, path, "test_fraction", 0.2);
        if (!(cfg.dataset.test_fraction > 0.0 && cfg.dataset.test_fraction < 1.0)) {
            fail(path + ".test_fraction", "must lie in (0,1)");
        }
        const bool has_csv = d.contains("csv");
        const bool has_syn = d.contains("synthetic");
        if (has_csv == has_syn) {
            fail(path, "exactly one of 'csv' or 'synthetic' must be given");
        }
        if (has_csv) {
            cfg.dataset.csv_path = require<std::string>(d, path, "csv");
        } else {
            const json& s = d.at("synthetic");
            const std::string spath = path + ".synthetic";
            check_keys(s, spath, {"classes", "dim", "n", "separation", "noise", "seed"});
            SyntheticSpec spec;
            spec.classes = require<int>(s, spath, "classes");
            spec.dim = require<Index>(s, spath, "dim");
            spec.n = require<Index>(s, spath, "n");
            spec.separation = get<double>(s, spath, "separation", spec.separation);
            spec.noise = get<double>(s, spath, "noise", spec.noise);
            spec.seed = get<std::uint64_t>(s, spath, "seed", cfg.seed);
            cfg.dataset.synthetic = spec;
        }
    }

    if (root.contains("boost")) {
        const json& b = root.at("boost");
        check_keys(b, origin + ".boost", kBoostKeys);
        apply_boost_keys(b, origin + ".boost", cfg.boost);
    }

    if (root.contains("arms")) {
        const json& arms = root.at("arms");
        if (!arms.is_array() || arms.empty()) {
            fail(origin + ".arms", "must be a nonempty array");
        }
        std::set<std::string> names;
        for (std::size_t i = 0; i < arms.size(); ++i) {
            const std::string path = origin + ".arms[" + std::to_string(i) + "]";
            const json& a = arms.at(i);
            if (!a.is_object()) {
                fail(path, "must be an object");
            }
            std::set<std::string> allowed = kBoostKeys;
            allowed.insert("name");
            check_keys(a, path, allowed);
            ArmSpec arm;
            arm.name = require<std::string>(a, path, "name");
            if (arm.name.empty() || !names.insert(arm.name).second) {
                fail(path + ".name", "must be nonempty and unique");
            }
            arm.boost = cfg.boost;
            apply_boost_keys(a, path, arm.boost);
            cfg.arms.push_back(std::move(arm));
        }
    } else {
        cfg.arms.push_back({"default", cfg.boost});
    }
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("config: cannot open " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    ExperimentConfig cfg = parse_experiment_config(ss.str(), path);
    if (cfg.dataset.csv_path &&
        !std::filesystem::exists(std::filesystem::path(*cfg.dataset.csv_path))) {
        throw ConfigError("config: " + path + ".dataset.csv: file does not exist: " +
                          *cfg.dataset.csv_path);
    }
    return cfg;
}

} // namespace boostlora
