#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <variant>
#include <vector>

#include "fedsim/nn.hpp"

namespace fedsim::fed {

// Everything that crosses the client <-> server boundary is one of these
// three payloads.

// Full model parameters ("the updated model"). The head and its bias travel
// only when the strategy trains them.
struct WeightSnapshot {
    nn::BackboneParams backbone;
    std::optional<nn::HeadParams> head;
    std::optional<Vector> head_bias;
};

struct ClassMeanEntry {
    Vector mean;
    std::uint32_t count = 0;  // samples behind the mean (clients, after aggregation)
};

// Per-class average feature vectors; only classes with count >= 1 appear.
// Keyed map keeps class ids ascending, which fixes the wire and aggregation
// order.
struct ClassMeanFeatures {
    std::uint16_t dim = 0;
    std::map<int, ClassMeanEntry> by_class;
};

struct LabeledFeature {
    Vector feature;
    int label = 0;
};

// Every feature vector with its label ("all feature vectors and labels").
struct LabeledFeatureSet {
    std::uint16_t dim = 0;
    std::vector<LabeledFeature> items;
};

using RoundMessage = std::variant<WeightSnapshot, ClassMeanFeatures, LabeledFeatureSet>;

}  // namespace fedsim::fed
