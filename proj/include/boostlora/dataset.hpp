#ifndef BOOSTLORA_DATASET_HPP
#define BOOSTLORA_DATASET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "boostlora/model.hpp"

namespace boostlora {

/// Synthetic Gaussian-mixture classification task. Class means sit on random
/// unit directions scaled by `separation`; features add isotropic noise.
struct SyntheticSpec {
    int classes = 2;
    Index dim = 8;
    Index n = 1000;
    double separation = 3.0;
    double noise = 1.0;
    std::uint64_t seed = 0;
};

/// Exactly-balanced draw (class counts differ by at most one).
LabeledDataset make_gaussian_mixture(const SyntheticSpec& spec);

/// CSV with a header; one column named "label", the rest numeric features.
LabeledDataset load_csv(const std::string& path);
void save_csv(const LabeledDataset& data, const std::string& path);

struct SplitIndices {
    std::vector<Index> train;
    std::vector<Index> test;
    std::uint64_t hash = 0; ///< order-sensitive digest of both index sets
};

/// Seeded shuffle split. The hash lets runs assert they share splits.
SplitIndices split_dataset(Index n, double test_fraction, std::uint64_t seed);

LabeledDataset subset(const LabeledDataset& data, const std::vector<Index>& rows);

} // namespace boostlora

#endif // BOOSTLORA_DATASET_HPP
