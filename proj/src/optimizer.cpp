#include "cr/optimizer.hpp"

#include <cmath>

#include "cr/error.hpp"

namespace cr {

AdamOptimizer::AdamOptimizer(AdamConfig config) : config_(config) {
    if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0) ||
        !(config_.beta2 >= 0.0 && config_.beta2 < 1.0) || !(config_.eps > 0.0))
        throw ValidationError("adam: betas must lie in [0, 1) and eps must be positive");
}

void AdamOptimizer::step(const std::string& name, double lr, const Vector& grad,
                         Eigen::Ref<Vector> param) {
    if (grad.size() != param.size())
        throw ShapeError("adam: gradient length " + std::to_string(grad.size()) +
                         " against parameter length " + std::to_string(param.size()) +
                         " for '" + name + "'");
    if (!(lr >= 0.0)) throw ValidationError("adam: negative learning rate");
    Slot& slot = slots_[name];
    if (slot.t == 0) {
        slot.m = Vector::Zero(grad.size());
        slot.v = Vector::Zero(grad.size());
    } else if (slot.m.size() != grad.size()) {
        throw ShapeError("adam: tensor '" + name + "' changed size");
    }
    slot.t += 1;
    slot.m = config_.beta1 * slot.m + (1.0 - config_.beta1) * grad;
    slot.v = config_.beta2 * slot.v.array().matrix() +
             (1.0 - config_.beta2) * grad.array().square().matrix();
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(slot.t));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(slot.t));
    param.array() -= lr * (slot.m.array() / bc1) /
                     ((slot.v.array() / bc2).sqrt() + config_.eps);
}

double linear_decay_lr(double lr0, std::int64_t step, std::int64_t total_steps) {
    if (!(lr0 > 0.0)) throw ValidationError("lr schedule: initial rate must be positive");
    if (total_steps < 1 || step < 0 || step >= total_steps)
        throw ValidationError("lr schedule: step outside [0, total)");
    if (total_steps == 1) return lr0;
    const double progress = static_cast<double>(step) / static_cast<double>(total_steps - 1);
    return lr0 * (1.0 - 0.9 * progress);
}

}  // namespace cr
