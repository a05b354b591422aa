#include "cr/vecmath.hpp"

#include <algorithm>
#include <cmath>

namespace cr {

double grad_check(const std::function<double(const Vector&)>& f,
                  const std::function<Vector(const Vector&)>& analytic_gradient,
                  const Vector& theta, double eps) {
    if (!(eps >= 1e-7 && eps <= 1e-3))
        throw ValidationError("grad_check: eps must lie in [1e-7, 1e-3]");
    if (theta.size() < 1) throw ShapeError("grad_check: empty parameter vector");
    const double f0 = f(theta);
    if (!std::isfinite(f0)) throw ValidationError("grad_check: f(theta) is not finite");

    const Vector ga = analytic_gradient(theta);
    if (ga.size() != theta.size())
        throw ShapeError("grad_check: analytic gradient length mismatch");

    double worst = 0.0;
    Vector probe = theta;
    for (Index i = 0; i < theta.size(); ++i) {
        probe(i) = theta(i) + eps;
        const double fp = f(probe);
        probe(i) = theta(i) - eps;
        const double fm = f(probe);
        probe(i) = theta(i);
        const double gfd = (fp - fm) / (2.0 * eps);
        const double err = std::abs(ga(i) - gfd) / std::max(1.0, std::abs(gfd));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace cr
