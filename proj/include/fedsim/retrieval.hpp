#pragma once

#include <span>
#include <string>
#include <vector>

#include "fedsim/linalg.hpp"

namespace fedsim::retrieval {

enum class Metric {
    Cosine,     // distance = 1 - cos(query, vector)
    Euclidean,  // distance = ||query - vector||
};

Metric metric_from_string(const std::string& name);
std::string to_string(Metric metric);

// Exact-search feature bank; vectors are stored verbatim, no index.
struct FeatureBank {
    Matrix vectors;           // [M x d]
    std::vector<int> labels;  // [M]
    Metric metric = Metric::Cosine;
};

FeatureBank knn_fit(Matrix vectors, std::vector<int> labels, Metric metric);

// Majority label among the k nearest bank vectors. Neighbor order is
// (distance, bank index); label ties break by smallest summed distance, then
// smallest class id. Total order, so predictions are deterministic.
int knn_predict(const FeatureBank& bank, std::span<const double> query, int k);

}  // namespace fedsim::retrieval
