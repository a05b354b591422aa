#ifndef CR_TAPE_HPP
#define CR_TAPE_HPP

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "cr/error.hpp"
#include "cr/types.hpp"

namespace cr {

struct NodeId {
    std::size_t index;
};

/**
 * Reverse-mode differentiation over a linear tape.
 *
 * Every node stores a column vector; scalars are vectors of length 1 and
 * matrix leaves are stored flattened in column-major order together with
 * their shape. Operations append a node plus a closure that scatters the
 * node's gradient back to its inputs. backward() may run once per tape and
 * walks the closures in reverse creation order.
 */
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = delete;
    Tape& operator=(Tape&&) = delete;

    std::size_t size() const { return values_.size(); }

    // Leaves and constants. Both get gradient slots; constants are inputs
    // whose gradients no caller consumes.
    NodeId constant(const Vector& v);
    NodeId constant_scalar(double x);
    NodeId leaf(const Vector& v);
    NodeId leaf(const Matrix& m);

    // y = W x + b with W a matrix leaf.
    NodeId affine(NodeId x, NodeId W, NodeId b);
    NodeId relu(NodeId x);
    NodeId sigmoid(NodeId x);
    NodeId l2_normalize(NodeId x);
    NodeId concat(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId hadamard(NodeId a, NodeId b);
    // y = c * x for a fixed constant c.
    NodeId scale(NodeId x, double c);
    // Elementwise clamp to [lo, hi]; gradient passes where the input lies
    // inside the closed interval.
    NodeId clamp(NodeId x, double lo, double hi);
    NodeId exp(NodeId x);
    NodeId log(NodeId x);
    NodeId dot(NodeId a, NodeId b);
    NodeId cosine(NodeId a, NodeId b);
    // softmax(temperature * v), max-subtracted.
    NodeId softmax(NodeId v, double temperature = 1.0);
    NodeId logsumexp(NodeId v);
    NodeId entry(NodeId v, Index i);
    // Gathers scalar nodes into one vector node.
    NodeId pack(std::span<const NodeId> parts);
    // y = s * v for a scalar node s.
    NodeId scalar_mul(NodeId s, NodeId v);
    // y = w(0) * a + w(1) * b for a length-2 weight node.
    NodeId weighted_pair_sum(NodeId w, NodeId a, NodeId b);
    // Scalar factor * sum of scalar nodes.
    NodeId scaled_sum(std::span<const NodeId> parts, double factor);
    // Scalar 1 / clamp(exp(t), lo, hi). The clamp passes gradient through on
    // the closed interval and blocks it outside.
    NodeId inv_clamped_exp(NodeId t, double lo, double hi);
    // Scalar -sum_j [l_j ln p_j + (1 - l_j) ln(1 - p_j)] for fixed labels.
    NodeId bce_with_labels(NodeId p, const Vector& labels);
    // Scalar sum_j w_j ln(w_j / p_j) for a fixed distribution w.
    NodeId kl_from_label(const Vector& w, NodeId p);

    const Vector& value(NodeId id) const;
    double scalar(NodeId id) const;
    const Vector& grad(NodeId id) const;
    std::pair<Index, Index> shape(NodeId id) const;

    // Seeds d(root)/d(root) = 1 for a scalar root and accumulates gradients
    // into every node. Callable once.
    void backward(NodeId root);

private:
    NodeId push(Vector v, Index rows, Index cols);
    void check(NodeId id, const char* who) const;
    void check_same_length(NodeId a, NodeId b, const char* who) const;
    void check_scalar(NodeId id, const char* who) const;

    std::vector<Vector> values_;
    std::vector<Vector> grads_;
    std::vector<std::pair<Index, Index>> shapes_;
    std::vector<std::function<void()>> backward_steps_;
    bool backward_done_ = false;
};

}  // namespace cr

#endif
