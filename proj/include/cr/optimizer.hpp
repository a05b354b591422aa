#ifndef CR_OPTIMIZER_HPP
#define CR_OPTIMIZER_HPP

#include <cstdint>
#include <map>
#include <string>

#include "cr/types.hpp"

namespace cr {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/**
 * Adam with bias correction. Moment state is keyed by tensor name and
 * created on first touch, so each tensor's step count advances only when
 * that tensor is stepped.
 */
class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamConfig config = {});

    // In-place update of a flattened parameter tensor.
    void step(const std::string& name, double lr, const Vector& grad,
              Eigen::Ref<Vector> param);

private:
    struct Slot {
        Vector m, v;
        std::uint64_t t = 0;
    };

    AdamConfig config_;
    std::map<std::string, Slot> slots_;
};

// lr0 * (1 - 0.9 * t / (T - 1)) for 0-based step t of T total: starts at lr0
// and ends at 10% of it.
double linear_decay_lr(double lr0, std::int64_t step, std::int64_t total_steps);

}  // namespace cr

#endif
