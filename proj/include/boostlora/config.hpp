#ifndef BOOSTLORA_CONFIG_HPP
#define BOOSTLORA_CONFIG_HPP

#include <optional>
#include <string>
#include <vector>

#include "boostlora/boosting.hpp"
#include "boostlora/dataset.hpp"

namespace boostlora {

struct ModelSpec {
    enum class Type { Linear, Mlp };
    Type type = Type::Mlp;
    Index hidden_dim = 64;
    int pretrain_epochs = 0;
    double pretrain_lr = 1e-3;
};

struct DatasetSpec {
    std::optional<std::string> csv_path;
    std::optional<SyntheticSpec> synthetic;
    double test_fraction = 0.2;
};

/// One named variant of the base boost config (e.g. top-vs-rotate, or the
/// monolithic rank r*T single round).
struct ArmSpec {
    std::string name;
    BoostConfig boost;
};

struct ExperimentConfig {
    std::string name;
    std::uint64_t seed = 0;
    std::string out_root = "runs";
    ModelSpec model;
    DatasetSpec dataset;
    BoostConfig boost;
    std::vector<ArmSpec> arms; ///< resolved; defaults to one arm named "default"
};

/// Parses the declarative JSON experiment file. Unknown keys anywhere are
/// errors (fail-closed); messages name the offending field path.
ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         const std::string& origin);

} // namespace boostlora

#endif // BOOSTLORA_CONFIG_HPP
