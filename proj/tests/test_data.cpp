#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "fedsim/data.hpp"
#include "fedsim/errors.hpp"

using namespace fedsim;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

// Nearest-centroid classifier fitted on the data itself; linear decision
// boundaries, written independently of the library.
int nearest_centroid_errors(const data::Dataset& ds) {
    Matrix centroids(static_cast<std::size_t>(ds.n_classes), ds.inputs.cols);
    std::vector<int> counts(static_cast<std::size_t>(ds.n_classes), 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto c = static_cast<std::size_t>(ds.labels[i]);
        counts[c] += 1;
        for (std::size_t j = 0; j < ds.inputs.cols; ++j) centroids(c, j) += ds.inputs(i, j);
    }
    for (std::size_t c = 0; c < centroids.rows; ++c) {
        for (std::size_t j = 0; j < centroids.cols; ++j) {
            centroids(c, j) /= static_cast<double>(counts[c]);
        }
    }
    int errors = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centroids.rows; ++c) {
            double d = 0.0;
            for (std::size_t j = 0; j < ds.inputs.cols; ++j) {
                const double diff = ds.inputs(i, j) - centroids(c, j);
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        if (best != static_cast<std::size_t>(ds.labels[i])) ++errors;
    }
    return errors;
}

double shard_label_entropy(const data::Dataset& train, const std::vector<int>& shard,
                           int n_classes) {
    std::vector<double> counts(static_cast<std::size_t>(n_classes), 0.0);
    for (int idx : shard) counts[static_cast<std::size_t>(train.labels[idx])] += 1.0;
    const double total = static_cast<double>(shard.size());
    if (total == 0.0) return 0.0;
    double h = 0.0;
    for (double c : counts) {
        if (c > 0.0) {
            const double p = c / total;
            h -= p * std::log(p);
        }
    }
    return h;
}

}  // namespace

TEST_CASE("synth_generate: zero spread puts every sample on its class center") {
    const auto ds = data::synth_generate(3, 10, 4, 0.0, 7);
    REQUIRE(ds.size() == 30);
    std::vector<int> counts(3, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) counts[static_cast<std::size_t>(ds.labels[i])]++;
    CHECK(counts == std::vector<int>{10, 10, 10});

    // All samples of one class coincide.
    for (int c = 0; c < 3; ++c) {
        std::size_t first = static_cast<std::size_t>(-1);
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (ds.labels[i] != c) continue;
            if (first == static_cast<std::size_t>(-1)) {
                first = i;
                continue;
            }
            for (std::size_t j = 0; j < ds.inputs.cols; ++j) {
                CHECK(ds.inputs(i, j) == ds.inputs(first, j));
            }
        }
    }
}

TEST_CASE("synth_generate: centers are unit separated and clusters separable") {
    const auto ds = data::synth_generate(3, 10, 4, 0.0, 11);
    // Minimum pairwise center distance is exactly 1 after rescaling.
    double min_dist = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < ds.size(); ++a) {
        for (std::size_t b = 0; b < ds.size(); ++b) {
            if (ds.labels[a] == ds.labels[b]) continue;
            double d = 0.0;
            for (std::size_t j = 0; j < ds.inputs.cols; ++j) {
                const double diff = ds.inputs(a, j) - ds.inputs(b, j);
                d += diff * diff;
            }
            min_dist = std::min(min_dist, std::sqrt(d));
        }
    }
    CHECK(min_dist == doctest::Approx(1.0).epsilon(1e-9));

    // An offline linear classifier separates spread=0.1 clusters perfectly.
    const auto noisy = data::synth_generate(3, 10, 4, 0.1, 11);
    CHECK(nearest_centroid_errors(noisy) == 0);
}

TEST_CASE("synth_generate is deterministic and validates inputs") {
    const auto a = data::synth_generate(4, 5, 3, 0.2, 9);
    const auto b = data::synth_generate(4, 5, 3, 0.2, 9);
    CHECK(a.inputs == b.inputs);
    CHECK(a.labels == b.labels);
    const auto c = data::synth_generate(4, 5, 3, 0.2, 10);
    CHECK(a.inputs != c.inputs);

    CHECK_THROWS_AS(data::synth_generate(0, 5, 3, 0.2, 1), ConfigError);
    CHECK_THROWS_AS(data::synth_generate(4, 5, 3, -0.1, 1), ConfigError);
}

TEST_CASE("split: 100 per class at 0.3 gives 70/30 per class") {
    const auto ds = data::synth_generate(3, 100, 4, 0.5, 13);
    const auto result = data::split(ds, 0.3, 17);
    CHECK(result.train.size() == 210);
    CHECK(result.val.size() == 90);
    std::vector<int> train_counts(3, 0), val_counts(3, 0);
    for (int y : result.train.labels) train_counts[static_cast<std::size_t>(y)]++;
    for (int y : result.val.labels) val_counts[static_cast<std::size_t>(y)]++;
    for (int c = 0; c < 3; ++c) {
        CHECK(train_counts[static_cast<std::size_t>(c)] == 70);
        CHECK(val_counts[static_cast<std::size_t>(c)] == 30);
    }
}

TEST_CASE("split: 2-sample class at 0.5 gives 1/1; union reconstructs the index set") {
    data::Dataset ds;
    ds.n_classes = 2;
    ds.inputs = Matrix(4, 2);
    for (std::size_t i = 0; i < 4; ++i) ds.inputs(i, 0) = static_cast<double>(i);
    ds.labels = {0, 0, 1, 1};
    const auto result = data::split(ds, 0.5, 3);
    CHECK(result.train.size() == 2);
    CHECK(result.val.size() == 2);

    std::set<int> all(result.train_indices.begin(), result.train_indices.end());
    all.insert(result.val_indices.begin(), result.val_indices.end());
    CHECK(all == std::set<int>{0, 1, 2, 3});
}

TEST_CASE("split: stratification within one sample of the requested fraction") {
    const auto ds = data::synth_generate(5, 37, 3, 0.4, 19);
    const double fraction = 0.3;
    const auto result = data::split(ds, fraction, 23);
    std::vector<int> val_counts(5, 0);
    for (int y : result.val.labels) val_counts[static_cast<std::size_t>(y)]++;
    for (int c = 0; c < 5; ++c) {
        CHECK(std::fabs(val_counts[static_cast<std::size_t>(c)] - 37.0 * fraction) < 1.0);
    }
}

TEST_CASE("split rejects tiny classes and bad fractions") {
    data::Dataset ds;
    ds.n_classes = 2;
    ds.inputs = Matrix(3, 1);
    ds.labels = {0, 0, 1};  // class 1 has a single sample
    CHECK_THROWS_AS(data::split(ds, 0.3, 1), ConfigError);

    const auto ok = data::synth_generate(2, 4, 2, 0.1, 1);
    CHECK_THROWS_AS(data::split(ok, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(data::split(ok, 1.0, 1), ConfigError);
}

TEST_CASE("dirichlet_partition: single client gets everything") {
    const auto ds = data::synth_generate(3, 10, 2, 0.1, 5);
    const auto partition = data::dirichlet_partition(ds, 1, 0.5, 7);
    REQUIRE(partition.shards.size() == 1);
    CHECK(partition.shards[0].size() == ds.size());
}

TEST_CASE("dirichlet_partition: shards are disjoint and exhaustive") {
    const auto ds = data::synth_generate(4, 25, 3, 0.3, 29);
    for (double alpha : {0.1, 0.5, 10.0}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto partition = data::dirichlet_partition(ds, 7, alpha, seed);
            std::set<int> seen;
            std::size_t total = 0;
            for (const auto& shard : partition.shards) {
                total += shard.size();
                seen.insert(shard.begin(), shard.end());
                CHECK(std::is_sorted(shard.begin(), shard.end()));
            }
            CHECK(total == ds.size());
            CHECK(seen.size() == ds.size());
        }
    }
}

TEST_CASE("dirichlet_partition: huge alpha approaches uniform per-class counts") {
    const int n_clients = 5;
    const int per_class = 100;
    const int n_classes = 4;
    const auto ds = data::synth_generate(n_classes, per_class, 3, 0.3, 31);
    // Mean per (client, class) cell over 20 seeds vs the binomial 3-sigma
    // band around per_class / n_clients.
    const double p = 1.0 / n_clients;
    const double sigma_mean = std::sqrt(per_class * p * (1.0 - p)) / std::sqrt(20.0);
    std::vector<double> cell(static_cast<std::size_t>(n_clients * n_classes), 0.0);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto partition = data::dirichlet_partition(ds, n_clients, 1e6, seed);
        for (int client = 0; client < n_clients; ++client) {
            for (int idx : partition.shards[static_cast<std::size_t>(client)]) {
                cell[static_cast<std::size_t>(client * n_classes + ds.labels[idx])] += 1.0 / 20.0;
            }
        }
    }
    for (double mean_count : cell) {
        CHECK(std::fabs(mean_count - per_class * p) <= 3.0 * sigma_mean);
    }
}

TEST_CASE("dirichlet_partition: small alpha is more skewed than large alpha") {
    const auto ds = data::synth_generate(10, 100, 3, 0.3, 37);
    std::vector<double> skewed_entropies, uniform_entropies;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto skewed = data::dirichlet_partition(ds, 10, 0.1, seed);
        const auto uniform = data::dirichlet_partition(ds, 10, 1e6, seed);
        for (int c = 0; c < 10; ++c) {
            skewed_entropies.push_back(
                shard_label_entropy(ds, skewed.shards[static_cast<std::size_t>(c)], 10));
            uniform_entropies.push_back(
                shard_label_entropy(ds, uniform.shards[static_cast<std::size_t>(c)], 10));
        }
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    CHECK(median(skewed_entropies) < median(uniform_entropies));
}

TEST_CASE("dirichlet_partition validates inputs") {
    const auto ds = data::synth_generate(2, 5, 2, 0.1, 1);
    CHECK_THROWS_AS(data::dirichlet_partition(ds, 0, 0.5, 1), ConfigError);
    CHECK_THROWS_AS(data::dirichlet_partition(ds, 2, 0.0, 1), ConfigError);
}

TEST_CASE("load_csv: well-formed file and dense relabeling") {
    const auto path = temp_file("fedsim_test_basic.csv");
    {
        std::ofstream out(path);
        out << "f0,f1,label\n";
        out << "1.5,-2.0,5\n";
        out << "0.25,3.0,9\n";
    }
    const auto ds = data::load_csv(path.string());
    REQUIRE(ds.size() == 2);
    CHECK(ds.n_classes == 2);
    CHECK(ds.labels == std::vector<int>{0, 1});  // {5, 9} -> {0, 1}
    CHECK(ds.inputs(0, 0) == doctest::Approx(1.5));
    CHECK(ds.inputs(1, 1) == doctest::Approx(3.0));
    std::filesystem::remove(path);
}

TEST_CASE("load_csv: parse errors carry line numbers") {
    const auto path = temp_file("fedsim_test_bad.csv");
    {
        std::ofstream out(path);
        out << "f0,f1,label\n";
        out << "1.0,2.0,0\n";
        out << "1.0,oops,1\n";
    }
    try {
        data::load_csv(path.string());
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    {
        std::ofstream out(path);
        out << "f0,f1,label\n";
        out << "1.0,0\n";
    }
    CHECK_THROWS_AS(data::load_csv(path.string()), ParseError);
    {
        std::ofstream out(path);
        out << "a,b,c\n";
    }
    CHECK_THROWS_AS(data::load_csv(path.string()), ParseError);
    std::filesystem::remove(path);
}

TEST_CASE("save_csv then load_csv round trips a synthetic dataset") {
    const auto ds = data::synth_generate(3, 8, 5, 0.7, 43);
    const auto path = temp_file("fedsim_test_roundtrip.csv");
    data::save_csv(ds, path.string());
    const auto back = data::load_csv(path.string());
    REQUIRE(back.size() == ds.size());
    CHECK(back.n_classes == ds.n_classes);
    CHECK(back.labels == ds.labels);
    for (std::size_t i = 0; i < ds.inputs.data.size(); ++i) {
        CHECK(std::fabs(back.inputs.data[i] - ds.inputs.data[i]) < 1e-9);
    }
    std::filesystem::remove(path);
}
