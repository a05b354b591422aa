#ifndef CR_VECMATH_HPP
#define CR_VECMATH_HPP

#include <cmath>
#include <functional>

#include "cr/error.hpp"
#include "cr/types.hpp"

namespace cr {

namespace detail {
template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& v, const char* who) {
    if (!v.allFinite()) throw ValidationError(std::string(who) + ": non-finite input");
}
}  // namespace detail

// y = W x + b.
template <typename DX, typename DW, typename DB>
Vector affine(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DW>& W,
              const Eigen::MatrixBase<DB>& b) {
    if (W.cols() != x.size() || W.rows() != b.size())
        throw ShapeError("affine: W is " + std::to_string(W.rows()) + "x" +
                         std::to_string(W.cols()) + " against x of length " +
                         std::to_string(x.size()) + " and b of length " +
                         std::to_string(b.size()));
    return W * x + b;
}

// softmax(temperature * v) with max subtraction. The temperature multiplies
// the inputs, so values above 1 sharpen the distribution.
template <typename Derived>
Vector softmax(const Eigen::MatrixBase<Derived>& v, double temperature = 1.0) {
    if (v.size() < 1) throw ShapeError("softmax: empty input");
    if (!(temperature > 0.0)) throw ValidationError("softmax: temperature must be positive");
    detail::require_finite(v, "softmax");
    Vector scaled = temperature * v;
    const double m = scaled.maxCoeff();
    Vector e = (scaled.array() - m).exp();
    return e / e.sum();
}

template <typename Derived>
Vector l2_normalize(const Eigen::MatrixBase<Derived>& v) {
    detail::require_finite(v, "l2_normalize");
    const double n = v.norm();
    if (n == 0.0) throw DegenerateInputError("l2_normalize: zero vector");
    return v / n;
}

template <typename DA, typename DB>
double cosine_sim(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
    if (a.size() != b.size())
        throw ShapeError("cosine_sim: lengths " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) throw DegenerateInputError("cosine_sim: zero vector");
    return a.dot(b) / (na * nb);
}

// log(sum(exp(v))) with max subtraction.
template <typename Derived>
double logsumexp(const Eigen::MatrixBase<Derived>& v) {
    if (v.size() < 1) throw ShapeError("logsumexp: empty input");
    const double m = v.maxCoeff();
    return m + std::log((v.array() - m).exp().sum());
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Compares an analytic gradient against central finite differences around
// theta. Returns max_i |g_a[i] - g_fd[i]| / max(1, |g_fd[i]|).
double grad_check(const std::function<double(const Vector&)>& f,
                  const std::function<Vector(const Vector&)>& analytic_gradient,
                  const Vector& theta, double eps);

}  // namespace cr

#endif
