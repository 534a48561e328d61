#include "fedsim/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim::data {

namespace {

std::vector<std::vector<int>> indices_by_class(const Dataset& ds) {
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(ds.n_classes));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        by_class[static_cast<std::size_t>(ds.labels[i])].push_back(static_cast<int>(i));
    }
    return by_class;
}

Dataset take(const Dataset& src, const std::vector<int>& indices) {
    Dataset out;
    out.inputs = gather_rows(src.inputs, indices);
    out.labels.reserve(indices.size());
    for (int i : indices) out.labels.push_back(src.labels[static_cast<std::size_t>(i)]);
    out.n_classes = src.n_classes;
    return out;
}

double parse_double(std::string_view field, std::size_t line_no) {
    double value = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
        throw ParseError("line " + std::to_string(line_no) + ": non-numeric feature '" +
                         std::string(field) + "'");
    }
    return value;
}

}  // namespace

Dataset synth_generate(int n_classes, int per_class, int input_dim, double spread,
                       std::uint64_t seed) {
    if (n_classes <= 0 || per_class <= 0 || input_dim <= 0) {
        throw ConfigError("synth_generate: counts must be positive");
    }
    if (spread < 0.0) throw ConfigError("synth_generate: spread must be nonnegative");
    Rng rng(seed);

    Matrix centers(static_cast<std::size_t>(n_classes), static_cast<std::size_t>(input_dim));
    for (double& x : centers.data) x = rng.normal();
    if (n_classes > 1) {
        double min_dist = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < centers.rows; ++a) {
            for (std::size_t b = a + 1; b < centers.rows; ++b) {
                double sq = 0.0;
                for (std::size_t j = 0; j < centers.cols; ++j) {
                    const double diff = centers(a, j) - centers(b, j);
                    sq += diff * diff;
                }
                min_dist = std::min(min_dist, std::sqrt(sq));
            }
        }
        if (min_dist == 0.0) throw NumericError("synth_generate: coincident class centers");
        for (double& x : centers.data) x /= min_dist;
    }

    Dataset ds;
    ds.n_classes = n_classes;
    ds.inputs = Matrix(static_cast<std::size_t>(n_classes) * static_cast<std::size_t>(per_class),
                       static_cast<std::size_t>(input_dim));
    ds.labels.resize(ds.inputs.rows);
    std::size_t row = 0;
    for (int c = 0; c < n_classes; ++c) {
        for (int k = 0; k < per_class; ++k, ++row) {
            ds.labels[row] = c;
            for (std::size_t j = 0; j < ds.inputs.cols; ++j) {
                ds.inputs(row, j) = centers(static_cast<std::size_t>(c), j) + spread * rng.normal();
            }
        }
    }
    return ds;
}

SplitResult split(const Dataset& dataset, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0) || !(test_fraction < 1.0)) {
        throw ConfigError("split: test_fraction must lie in (0, 1)");
    }
    Rng rng(seed);
    SplitResult result;
    auto by_class = indices_by_class(dataset);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& idx = by_class[c];
        if (idx.size() < 2) {
            throw ConfigError("split: class " + std::to_string(c) +
                              " has fewer than 2 samples, cannot stratify");
        }
        rng.shuffle(idx);
        const auto n_val = static_cast<std::size_t>(
            std::lround(static_cast<double>(idx.size()) * test_fraction));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            (i < n_val ? result.val_indices : result.train_indices).push_back(idx[i]);
        }
    }
    std::sort(result.train_indices.begin(), result.train_indices.end());
    std::sort(result.val_indices.begin(), result.val_indices.end());
    result.train = take(dataset, result.train_indices);
    result.val = take(dataset, result.val_indices);
    return result;
}

Partition dirichlet_partition(const Dataset& train, int n_clients, double alpha,
                              std::uint64_t seed) {
    if (n_clients < 1) throw ConfigError("dirichlet_partition: need at least one client");
    if (!(alpha > 0.0)) throw ConfigError("dirichlet_partition: alpha must be positive");
    Rng rng(seed);
    Partition partition;
    partition.shards.assign(static_cast<std::size_t>(n_clients), {});

    auto by_class = indices_by_class(train);
    for (const auto& idx : by_class) {
        Vector p(static_cast<std::size_t>(n_clients));
        double sum = 0.0;
        for (double& g : p) {
            g = rng.gamma(alpha);
            sum += g;
        }
        if (sum > 0.0) {
            for (double& g : p) g /= sum;
        } else {
            // All gamma draws underflowed; fall back to a uniform draw.
            std::fill(p.begin(), p.end(), 1.0 / n_clients);
        }
        for (int sample : idx) {
            const double u = rng.next_double();
            double acc = 0.0;
            std::size_t client = p.size() - 1;
            for (std::size_t j = 0; j < p.size(); ++j) {
                acc += p[j];
                if (u < acc) {
                    client = j;
                    break;
                }
            }
            partition.shards[client].push_back(sample);
        }
    }
    for (auto& shard : partition.shards) std::sort(shard.begin(), shard.end());
    return partition;
}

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::size_t n_features = 0;
    {
        std::stringstream header(line);
        std::string col;
        std::vector<std::string> cols;
        while (std::getline(header, col, ',')) cols.push_back(col);
        if (cols.size() < 2 || cols.back() != "label") {
            throw ParseError(path + ": header must be f0,...,f{k-1},label");
        }
        for (std::size_t i = 0; i + 1 < cols.size(); ++i) {
            if (cols[i] != "f" + std::to_string(i)) {
                throw ParseError(path + ": header must be f0,...,f{k-1},label");
            }
        }
        n_features = cols.size() - 1;
    }

    std::vector<double> values;
    std::vector<long> raw_labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(row, field, ',')) fields.push_back(field);
        if (fields.size() != n_features + 1) {
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(n_features + 1) + " fields, got " +
                             std::to_string(fields.size()));
        }
        for (std::size_t i = 0; i < n_features; ++i) {
            values.push_back(parse_double(fields[i], line_no));
        }
        long label = 0;
        const std::string& ls = fields.back();
        auto [ptr, ec] = std::from_chars(ls.data(), ls.data() + ls.size(), label);
        if (ec != std::errc{} || ptr != ls.data() + ls.size()) {
            throw ParseError("line " + std::to_string(line_no) + ": non-integer label '" + ls +
                             "'");
        }
        raw_labels.push_back(label);
    }
    if (raw_labels.empty()) throw ParseError(path + ": no data rows");

    // Dense re-indexing in ascending raw-label order.
    std::map<long, int> remap;
    for (long l : raw_labels) remap.emplace(l, 0);
    int next = 0;
    for (auto& [raw, dense] : remap) dense = next++;

    Dataset ds;
    ds.n_classes = next;
    ds.inputs = Matrix(raw_labels.size(), n_features);
    ds.inputs.data = std::move(values);
    ds.labels.reserve(raw_labels.size());
    for (long l : raw_labels) ds.labels.push_back(remap.at(l));
    return ds;
}

void save_csv(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    for (std::size_t j = 0; j < dataset.inputs.cols; ++j) out << "f" << j << ",";
    out << "label\n";
    char buf[64];
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        for (std::size_t j = 0; j < dataset.inputs.cols; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", dataset.inputs(i, j));
            out << buf << ",";
        }
        out << dataset.labels[i] << "\n";
    }
    if (!out) throw Error("write failed for " + path);
}

Matrix gather_rows(const Matrix& m, std::span<const int> indices) {
    Matrix out(indices.size(), m.cols);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto src = static_cast<std::size_t>(indices[r]);
        for (std::size_t c = 0; c < m.cols; ++c) out(r, c) = m(src, c);
    }
    return out;
}

}  // namespace fedsim::data
