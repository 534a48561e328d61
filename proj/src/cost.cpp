#include "fedsim/cost.hpp"

#include "fedsim/errors.hpp"

namespace fedsim::cost {

void CostModel::validate() const {
    if (w_bytes == 0 || d == 0 || n_clients == 0 || n_classes == 0 || n_samples == 0) {
        throw ConfigError("cost model fields must all be positive");
    }
}

std::uint64_t round_cost(int strategy, const CostModel& model) {
    model.validate();
    const std::uint64_t a = 2 * model.w_bytes * model.n_clients;
    const std::uint64_t b =
        2 * model.d * model.n_classes * model.n_clients * CostModel::bytes_per_scalar;
    switch (strategy) {
        case 1:
            return a;
        case 2:
        case 3:
            return b;
        case 4:
            return a + b;
        case 5:
            return a + model.n_samples * (2 + model.d * model.n_clients * model.n_clients) *
                           CostModel::bytes_per_scalar;
        case 6:
            return a + model.n_clients * b;
        default:
            throw ConfigError("unknown strategy " + std::to_string(strategy));
    }
}

std::string formula(int strategy) {
    switch (strategy) {
        case 1:
            return "A = 2*w*n_clients";
        case 2:
            return "B = 2*d*n_classes*n_clients*4";
        case 3:
            return "B";
        case 4:
            return "A+B";
        case 5:
            return "A+n_samples*(2+d*n_clients^2)*4";
        case 6:
            return "A+n_clients*B";
        default:
            throw ConfigError("unknown strategy " + std::to_string(strategy));
    }
}

}  // namespace fedsim::cost
