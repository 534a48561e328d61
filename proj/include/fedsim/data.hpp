#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedsim/linalg.hpp"

namespace fedsim::data {

struct Dataset {
    Matrix inputs;            // [n_samples x d_in]
    std::vector<int> labels;  // values in [0, n_classes)
    int n_classes = 0;

    std::size_t size() const { return labels.size(); }
};

// Disjoint per-client index lists over a training set. A shard may be empty
// or miss classes entirely; that is the point of non-IID splits.
struct Partition {
    std::vector<std::vector<int>> shards;
};

struct SplitResult {
    Dataset train;
    Dataset val;
    std::vector<int> train_indices;  // into the source dataset, ascending
    std::vector<int> val_indices;
};

// Gaussian clusters with unit-separated class centers: centers are drawn
// i.i.d. standard normal and rescaled so the minimum pairwise distance is
// exactly 1, then isotropic noise of the given spread is added.
Dataset synth_generate(int n_classes, int per_class, int input_dim, double spread,
                       std::uint64_t seed);

// Stratified split; per class, round(count * test_fraction) samples go to the
// validation set. Classes with fewer than 2 samples cannot be stratified.
SplitResult split(const Dataset& dataset, double test_fraction, std::uint64_t seed);

// Label-skew construction: per class, p ~ Dirichlet(alpha * 1) over clients,
// then each sample of that class is assigned multinomially by p.
Partition dirichlet_partition(const Dataset& train, int n_clients, double alpha,
                              std::uint64_t seed);

// CSV with header f0,...,f{k-1},label. Labels are re-indexed densely to
// 0..K-1 in ascending raw-label order.
Dataset load_csv(const std::string& path);

// Inverse of load_csv for datasets that are already densely labeled.
void save_csv(const Dataset& dataset, const std::string& path);

Matrix gather_rows(const Matrix& m, std::span<const int> indices);

}  // namespace fedsim::data
