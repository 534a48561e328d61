#pragma once

#include <cstdint>
#include <string>

namespace fedsim::cost {

// Inputs of the per-round byte formulas. w_bytes is the serialized model size
// in bytes (already bytes, not scalars); everything else is a count. Scalars
// on the wire are float32.
struct CostModel {
    std::uint64_t w_bytes = 0;
    std::uint64_t d = 0;
    std::uint64_t n_clients = 0;
    std::uint64_t n_classes = 0;
    std::uint64_t n_samples = 0;

    static constexpr std::uint64_t bytes_per_scalar = 4;

    void validate() const;
};

// Bytes crossing the wire in one communication round:
//   1: A = 2 * w * n_clients
//   2, 3: B = 2 * d * n_classes * n_clients * 4
//   4: A + B
//   5: A + n_samples * (2 + d * n_clients^2) * 4
//   6: A + n_clients * B
std::uint64_t round_cost(int strategy, const CostModel& model);

// The formula column as printed in the cost table.
std::string formula(int strategy);

}  // namespace fedsim::cost
