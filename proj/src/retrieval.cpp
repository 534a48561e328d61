#include "fedsim/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "fedsim/errors.hpp"

namespace fedsim::retrieval {

Metric metric_from_string(const std::string& name) {
    if (name == "cosine") return Metric::Cosine;
    if (name == "euclidean") return Metric::Euclidean;
    throw ConfigError("unknown knn metric '" + name + "'");
}

std::string to_string(Metric metric) {
    return metric == Metric::Cosine ? "cosine" : "euclidean";
}

FeatureBank knn_fit(Matrix vectors, std::vector<int> labels, Metric metric) {
    if (vectors.rows == 0) throw ConfigError("knn_fit: empty bank");
    if (vectors.rows != labels.size()) throw ShapeError("knn_fit: vectors/labels size mismatch");
    return FeatureBank{std::move(vectors), std::move(labels), metric};
}

namespace {

double distance(Metric metric, std::span<const double> a, std::span<const double> b) {
    if (metric == Metric::Euclidean) {
        double sq = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double diff = a[i] - b[i];
            sq += diff * diff;
        }
        return std::sqrt(sq);
    }
    // Cosine distance; a zero vector has no direction, its similarity term
    // is taken as 0 so the distance is 1.
    const double denom = norm2(a) * norm2(b);
    if (denom == 0.0) return 1.0;
    return 1.0 - dot(a, b) / denom;
}

}  // namespace

int knn_predict(const FeatureBank& bank, std::span<const double> query, int k) {
    const std::size_t m = bank.vectors.rows;
    if (k < 1 || static_cast<std::size_t>(k) > m) {
        throw ConfigError("knn_predict: k must lie in [1, bank size]");
    }
    if (query.size() != bank.vectors.cols) throw ShapeError("knn_predict: query dim mismatch");

    std::vector<std::pair<double, std::size_t>> order(m);
    for (std::size_t i = 0; i < m; ++i) {
        order[i] = {distance(bank.metric, query, bank.vectors.row(i)), i};
    }
    std::partial_sort(order.begin(), order.begin() + k, order.end());

    // (votes, summed distance) per label over the k nearest.
    std::map<int, std::pair<int, double>> tally;
    for (int i = 0; i < k; ++i) {
        auto& [votes, sum_dist] = tally[bank.labels[order[static_cast<std::size_t>(i)].second]];
        votes += 1;
        sum_dist += order[static_cast<std::size_t>(i)].first;
    }
    int best_label = -1;
    int best_votes = -1;
    double best_sum = 0.0;
    for (const auto& [label, entry] : tally) {
        const auto [votes, sum_dist] = entry;
        if (votes > best_votes || (votes == best_votes && sum_dist < best_sum)) {
            best_label = label;
            best_votes = votes;
            best_sum = sum_dist;
        }
    }
    return best_label;
}

}  // namespace fedsim::retrieval
