#ifndef CR_GRADCHECK_HPP
#define CR_GRADCHECK_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "cr/types.hpp"

namespace cr {

/**
 * Randomized end-to-end gradient verification. Each trial draws a fresh
 * small model (both encoders, attribute head, adaptive composer, both
 * temperatures) plus a synthetic batch, then compares the taped gradient of
 * every training loss against central finite differences over all
 * parameters at once.
 */
struct GradSuiteConfig {
    int trials = 20;
    int batch_size = 4;
    Index feature_dim = 6;
    Index hidden_dim = 8;
    Index joint_dim = 6;
    Index num_attributes = 5;
    double eps = 1e-5;
    double lambda = 0.5;
    std::uint64_t seed = 7;
};

struct GradSuiteRow {
    std::string loss_name;
    // max over trials of max_i |g_analytic - g_fd| / max(1, |g_fd|).
    double max_rel_error = 0.0;
};

struct GradSuiteReport {
    std::vector<GradSuiteRow> rows;
    double worst = 0.0;

    bool all_below(double bound) const;
    std::string to_text() const;
};

GradSuiteReport run_gradient_suite(const GradSuiteConfig& config);

}  // namespace cr

#endif
