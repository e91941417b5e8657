#include "boostlora/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace boostlora {

namespace {

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& tok, const std::string& context) {
    double out = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    const auto res = std::from_chars(first, last, out);
    if (res.ec != std::errc{} || res.ptr != last) {
        throw InvalidInputError("csv: bad numeric value '" + tok + "' in " + context);
    }
    return out;
}

} // namespace

LabeledDataset make_gaussian_mixture(const SyntheticSpec& spec) {
    if (spec.classes < 2) {
        throw ConfigError("gen-data: need at least 2 classes");
    }
    if (spec.n < spec.classes) {
        throw ConfigError("gen-data: n=" + std::to_string(spec.n) + " is below the class count");
    }
    if (spec.dim < 1 || spec.noise < 0.0) {
        throw ConfigError("gen-data: dim must be >= 1 and noise >= 0");
    }

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Matrix means(spec.classes, spec.dim);
    for (int c = 0; c < spec.classes; ++c) {
        Vector dir(spec.dim);
        for (Index j = 0; j < spec.dim; ++j) {
            dir(j) = gauss(rng);
        }
        means.row(c) = (spec.separation / dir.norm()) * dir.transpose();
    }

    LabeledDataset data;
    data.num_classes = spec.classes;
    data.features = Matrix(spec.n, spec.dim);
    data.labels.resize(static_cast<std::size_t>(spec.n));

    // round-robin labels keep the balance exact, then shuffle the order
    std::vector<int> labels(static_cast<std::size_t>(spec.n));
    for (Index i = 0; i < spec.n; ++i) {
        labels[static_cast<std::size_t>(i)] = static_cast<int>(i % spec.classes);
    }
    std::shuffle(labels.begin(), labels.end(), rng);

    for (Index i = 0; i < spec.n; ++i) {
        const int c = labels[static_cast<std::size_t>(i)];
        data.labels[static_cast<std::size_t>(i)] = c;
        for (Index j = 0; j < spec.dim; ++j) {
            data.features(i, j) = means(c, j) + spec.noise * gauss(rng);
        }
    }
    return data;
}

LabeledDataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw InvalidInputError("csv: cannot open " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw InvalidInputError("csv: " + path + " is empty");
    }

    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            header.push_back(tok);
        }
    }
    Index label_col = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "label") {
            label_col = static_cast<Index>(i);
        }
    }
    if (label_col < 0) {
        throw InvalidInputError("csv: " + path + " has no 'label' column");
    }
    const Index dim = static_cast<Index>(header.size()) - 1;
    if (dim < 1) {
        throw InvalidInputError("csv: " + path + " has no feature columns");
    }

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    int max_label = 0;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        std::stringstream ss(line);
        std::string tok;
        std::vector<double> feats;
        feats.reserve(static_cast<std::size_t>(dim));
        Index col = 0;
        int label = 0;
        while (std::getline(ss, tok, ',')) {
            const double v = parse_double(tok, path + ":" + std::to_string(lineno));
            if (col == label_col) {
                label = static_cast<int>(v);
                if (static_cast<double>(label) != v || label < 0) {
                    throw InvalidInputError("csv: non-integer or negative label at " + path + ":" +
                                            std::to_string(lineno));
                }
            } else {
                feats.push_back(v);
            }
            ++col;
        }
        if (col != static_cast<Index>(header.size())) {
            throw InvalidInputError("csv: wrong column count at " + path + ":" +
                                    std::to_string(lineno));
        }
        max_label = std::max(max_label, label);
        labels.push_back(label);
        rows.push_back(std::move(feats));
    }
    if (rows.empty()) {
        throw InvalidInputError("csv: " + path + " has no data rows");
    }

    LabeledDataset data;
    data.num_classes = max_label + 1;
    data.labels = std::move(labels);
    data.features = Matrix(static_cast<Index>(rows.size()), dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (Index j = 0; j < dim; ++j) {
            data.features(static_cast<Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
        }
    }
    return data;
}

void save_csv(const LabeledDataset& data, const std::string& path) {
    std::ofstream out(path, std::ios::binary); // binary: byte-identical across runs
    if (!out) {
        throw InvalidInputError("csv: cannot write " + path);
    }
    out << "label";
    for (Index j = 0; j < data.dim(); ++j) {
        out << ",f" << j;
    }
    out << "\n";
    for (Index i = 0; i < data.size(); ++i) {
        out << data.labels[static_cast<std::size_t>(i)];
        for (Index j = 0; j < data.dim(); ++j) {
            out << ',' << format_double(data.features(i, j));
        }
        out << "\n";
    }
}

SplitIndices split_dataset(Index n, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
        throw ConfigError("split: test_fraction must lie in [0,1)");
    }
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(seed ^ 0xD1CEB00CULL);
    std::shuffle(order.begin(), order.end(), rng);

    const Index n_test = static_cast<Index>(std::llround(test_fraction * static_cast<double>(n)));
    SplitIndices out;
    out.test.assign(order.begin(), order.begin() + n_test);
    out.train.assign(order.begin() + n_test, order.end());
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());

    std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a over both index lists
    auto eat = [&h](std::uint64_t x) {
        for (int b = 0; b < 8; ++b) {
            h ^= (x >> (8 * b)) & 0xffULL;
            h *= 0x100000001b3ULL;
        }
    };
    eat(static_cast<std::uint64_t>(out.train.size()));
    for (Index i : out.train) eat(static_cast<std::uint64_t>(i));
    eat(static_cast<std::uint64_t>(out.test.size()));
    for (Index i : out.test) eat(static_cast<std::uint64_t>(i));
    out.hash = h;
    return out;
}

LabeledDataset subset(const LabeledDataset& data, const std::vector<Index>& rows) {
    LabeledDataset out;
    out.num_classes = data.num_classes;
    out.features = Matrix(static_cast<Index>(rows.size()), data.dim());
    out.labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.features.row(static_cast<Index>(i)) = data.features.row(rows[i]);
        out.labels[i] = data.labels[static_cast<std::size_t>(rows[i])];
    }
    return out;
}

} // namespace boostlora
