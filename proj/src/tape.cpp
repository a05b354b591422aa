#include "cr/tape.hpp"

#include <cmath>
#include <string>

#include "cr/vecmath.hpp"

namespace cr {

NodeId Tape::push(Vector v, Index rows, Index cols) {
    values_.push_back(std::move(v));
    shapes_.emplace_back(rows, cols);
    backward_steps_.emplace_back();
    return NodeId{values_.size() - 1};
}

void Tape::check(NodeId id, const char* who) const {
    if (id.index >= values_.size())
        throw ShapeError(std::string(who) + ": node id out of range");
}

void Tape::check_same_length(NodeId a, NodeId b, const char* who) const {
    check(a, who);
    check(b, who);
    if (values_[a.index].size() != values_[b.index].size())
        throw ShapeError(std::string(who) + ": lengths " +
                         std::to_string(values_[a.index].size()) + " vs " +
                         std::to_string(values_[b.index].size()));
}

void Tape::check_scalar(NodeId id, const char* who) const {
    check(id, who);
    if (values_[id.index].size() != 1)
        throw ShapeError(std::string(who) + ": expected a scalar node");
}

NodeId Tape::constant(const Vector& v) { return push(v, v.size(), 1); }

NodeId Tape::constant_scalar(double x) { return push(Vector::Constant(1, x), 1, 1); }

NodeId Tape::leaf(const Vector& v) {
    if (v.size() < 1) throw ShapeError("leaf: empty vector");
    return push(v, v.size(), 1);
}

NodeId Tape::leaf(const Matrix& m) {
    if (m.size() < 1) throw ShapeError("leaf: empty matrix");
    return push(Eigen::Map<const Vector>(m.data(), m.size()), m.rows(), m.cols());
}

NodeId Tape::affine(NodeId x, NodeId W, NodeId b) {
    check(x, "affine");
    check(W, "affine");
    check(b, "affine");
    const auto [r, c] = shapes_[W.index];
    if (c != values_[x.index].size() || r != values_[b.index].size())
        throw ShapeError("affine: W is " + std::to_string(r) + "x" + std::to_string(c) +
                         " against x of length " + std::to_string(values_[x.index].size()) +
                         " and b of length " + std::to_string(values_[b.index].size()));
    Eigen::Map<const Matrix> Wm(values_[W.index].data(), r, c);
    NodeId y = push(Wm * values_[x.index] + values_[b.index], r, 1);
    backward_steps_[y.index] = [this, x, W, b, y, r, c] {
        const Vector& g = grads_[y.index];
        Eigen::Map<const Matrix> Wv(values_[W.index].data(), r, c);
        grads_[x.index].noalias() += Wv.transpose() * g;
        Eigen::Map<Matrix> Wg(grads_[W.index].data(), r, c);
        Wg.noalias() += g * values_[x.index].transpose();
        grads_[b.index] += g;
    };
    return y;
}

NodeId Tape::relu(NodeId x) {
    check(x, "relu");
    NodeId y = push(values_[x.index].cwiseMax(0.0), values_[x.index].size(), 1);
    backward_steps_[y.index] = [this, x, y] {
        grads_[x.index].array() +=
            (values_[x.index].array() > 0.0).select(grads_[y.index].array(), 0.0);
    };
    return y;
}

NodeId Tape::sigmoid(NodeId x) {
    check(x, "sigmoid");
    Vector s = (1.0 + (-values_[x.index].array()).exp()).inverse();
    NodeId y = push(std::move(s), values_[x.index].size(), 1);
    backward_steps_[y.index] = [this, x, y] {
        const Vector& v = values_[y.index];
        grads_[x.index].array() += grads_[y.index].array() * v.array() * (1.0 - v.array());
    };
    return y;
}

NodeId Tape::l2_normalize(NodeId x) {
    check(x, "l2_normalize");
    const double n = values_[x.index].norm();
    if (n == 0.0) throw DegenerateInputError("l2_normalize: zero vector");
    NodeId y = push(values_[x.index] / n, values_[x.index].size(), 1);
    backward_steps_[y.index] = [this, x, y, n] {
        const Vector& g = grads_[y.index];
        const Vector& v = values_[y.index];
        grads_[x.index].noalias() += (g - v * v.dot(g)) / n;
    };
    return y;
}

NodeId Tape::concat(NodeId a, NodeId b) {
    check(a, "concat");
    check(b, "concat");
    const Index na = values_[a.index].size();
    const Index nb = values_[b.index].size();
    Vector v(na + nb);
    v << values_[a.index], values_[b.index];
    NodeId y = push(std::move(v), na + nb, 1);
    backward_steps_[y.index] = [this, a, b, y, na, nb] {
        grads_[a.index] += grads_[y.index].head(na);
        grads_[b.index] += grads_[y.index].tail(nb);
    };
    return y;
}

NodeId Tape::add(NodeId a, NodeId b) {
    check_same_length(a, b, "add");
    NodeId y = push(values_[a.index] + values_[b.index], values_[a.index].size(), 1);
    backward_steps_[y.index] = [this, a, b, y] {
        grads_[a.index] += grads_[y.index];
        grads_[b.index] += grads_[y.index];
    };
    return y;
}

NodeId Tape::sub(NodeId a, NodeId b) {
    check_same_length(a, b, "sub");
    NodeId y = push(values_[a.index] - values_[b.index], values_[a.index].size(), 1);
    backward_steps_[y.index] = [this, a, b, y] {
        grads_[a.index] += grads_[y.index];
        grads_[b.index] -= grads_[y.index];
    };
    return y;
}

NodeId Tape::hadamard(NodeId a, NodeId b) {
    check_same_length(a, b, "hadamard");
    NodeId y = push(values_[a.index].cwiseProduct(values_[b.index]),
                    values_[a.index].size(), 1);
    backward_steps_[y.index] = [this, a, b, y] {
        grads_[a.index].array() += grads_[y.index].array() * values_[b.index].array();
        grads_[b.index].array() += grads_[y.index].array() * values_[a.index].array();
    };
    return y;
}

NodeId Tape::scale(NodeId x, double c) {
    check(x, "scale");
    NodeId y = push(c * values_[x.index], values_[x.index].size(), 1);
    backward_steps_[y.index] = [this, x, y, c] { grads_[x.index] += c * grads_[y.index]; };
    return y;
}

NodeId Tape::clamp(NodeId x, double lo, double hi) {
    check(x, "clamp");
    if (!(hi > lo)) throw ValidationError("clamp: need lo < hi");
    NodeId y = push(values_[x.index].cwiseMax(lo).cwiseMin(hi), values_[x.index].size(), 1);
    backward_steps_[y.index] = [this, x, y, lo, hi] {
        const auto xa = values_[x.index].array();
        grads_[x.index].array() +=
            ((xa >= lo) && (xa <= hi)).select(grads_[y.index].array(), 0.0);
    };
    return y;
}

NodeId Tape::exp(NodeId x) {
    check(x, "exp");
    NodeId y = push(values_[x.index].array().exp().matrix(), values_[x.index].size(), 1);
    backward_steps_[y.index] = [this, x, y] {
        grads_[x.index].array() += grads_[y.index].array() * values_[y.index].array();
    };
    return y;
}

NodeId Tape::log(NodeId x) {
    check(x, "log");
    if ((values_[x.index].array() <= 0.0).any())
        throw DegenerateInputError("log: non-positive input");
    NodeId y = push(values_[x.index].array().log().matrix(), values_[x.index].size(), 1);
    backward_steps_[y.index] = [this, x, y] {
        grads_[x.index].array() += grads_[y.index].array() / values_[x.index].array();
    };
    return y;
}

NodeId Tape::dot(NodeId a, NodeId b) {
    check_same_length(a, b, "dot");
    NodeId y = push(Vector::Constant(1, values_[a.index].dot(values_[b.index])), 1, 1);
    backward_steps_[y.index] = [this, a, b, y] {
        const double g = grads_[y.index](0);
        grads_[a.index] += g * values_[b.index];
        grads_[b.index] += g * values_[a.index];
    };
    return y;
}

NodeId Tape::cosine(NodeId a, NodeId b) {
    check_same_length(a, b, "cosine");
    const double na = values_[a.index].norm();
    const double nb = values_[b.index].norm();
    if (na == 0.0 || nb == 0.0) throw DegenerateInputError("cosine: zero vector");
    const double c = values_[a.index].dot(values_[b.index]) / (na * nb);
    NodeId y = push(Vector::Constant(1, c), 1, 1);
    backward_steps_[y.index] = [this, a, b, y, na, nb, c] {
        const double g = grads_[y.index](0);
        const Vector& va = values_[a.index];
        const Vector& vb = values_[b.index];
        grads_[a.index].noalias() += g * (vb / (na * nb) - c * va / (na * na));
        grads_[b.index].noalias() += g * (va / (na * nb) - c * vb / (nb * nb));
    };
    return y;
}

NodeId Tape::softmax(NodeId v, double temperature) {
    check(v, "softmax");
    if (!(temperature > 0.0)) throw ValidationError("softmax: temperature must be positive");
    NodeId y = push(cr::softmax(values_[v.index], temperature), values_[v.index].size(), 1);
    backward_steps_[y.index] = [this, v, y, temperature] {
        const Vector& s = values_[y.index];
        const Vector& g = grads_[y.index];
        const double inner = s.dot(g);
        grads_[v.index].array() += temperature * s.array() * (g.array() - inner);
    };
    return y;
}

NodeId Tape::logsumexp(NodeId v) {
    check(v, "logsumexp");
    NodeId y = push(Vector::Constant(1, cr::logsumexp(values_[v.index])), 1, 1);
    backward_steps_[y.index] = [this, v, y] {
        grads_[v.index].noalias() +=
            grads_[y.index](0) * cr::softmax(values_[v.index], 1.0);
    };
    return y;
}

NodeId Tape::entry(NodeId v, Index i) {
    check(v, "entry");
    if (i < 0 || i >= values_[v.index].size())
        throw ShapeError("entry: index " + std::to_string(i) + " out of range for length " +
                         std::to_string(values_[v.index].size()));
    NodeId y = push(Vector::Constant(1, values_[v.index](i)), 1, 1);
    backward_steps_[y.index] = [this, v, y, i] { grads_[v.index](i) += grads_[y.index](0); };
    return y;
}

NodeId Tape::pack(std::span<const NodeId> parts) {
    if (parts.empty()) throw ShapeError("pack: no parts");
    Vector v(static_cast<Index>(parts.size()));
    for (std::size_t j = 0; j < parts.size(); ++j) {
        check_scalar(parts[j], "pack");
        v(static_cast<Index>(j)) = values_[parts[j].index](0);
    }
    std::vector<NodeId> owned(parts.begin(), parts.end());
    NodeId y = push(std::move(v), static_cast<Index>(parts.size()), 1);
    backward_steps_[y.index] = [this, owned = std::move(owned), y] {
        for (std::size_t j = 0; j < owned.size(); ++j)
            grads_[owned[j].index](0) += grads_[y.index](static_cast<Index>(j));
    };
    return y;
}

NodeId Tape::scalar_mul(NodeId s, NodeId v) {
    check_scalar(s, "scalar_mul");
    check(v, "scalar_mul");
    NodeId y = push(values_[s.index](0) * values_[v.index], values_[v.index].size(), 1);
    backward_steps_[y.index] = [this, s, v, y] {
        grads_[s.index](0) += grads_[y.index].dot(values_[v.index]);
        grads_[v.index] += values_[s.index](0) * grads_[y.index];
    };
    return y;
}

NodeId Tape::weighted_pair_sum(NodeId w, NodeId a, NodeId b) {
    check(w, "weighted_pair_sum");
    if (values_[w.index].size() != 2)
        throw ShapeError("weighted_pair_sum: weight node must have length 2");
    check_same_length(a, b, "weighted_pair_sum");
    const Vector& wv = values_[w.index];
    NodeId y = push(wv(0) * values_[a.index] + wv(1) * values_[b.index],
                    values_[a.index].size(), 1);
    backward_steps_[y.index] = [this, w, a, b, y] {
        const Vector& g = grads_[y.index];
        grads_[w.index](0) += g.dot(values_[a.index]);
        grads_[w.index](1) += g.dot(values_[b.index]);
        grads_[a.index] += values_[w.index](0) * g;
        grads_[b.index] += values_[w.index](1) * g;
    };
    return y;
}

NodeId Tape::scaled_sum(std::span<const NodeId> parts, double factor) {
    if (parts.empty()) throw ShapeError("scaled_sum: no parts");
    double total = 0.0;
    for (NodeId p : parts) {
        check_scalar(p, "scaled_sum");
        total += values_[p.index](0);
    }
    std::vector<NodeId> owned(parts.begin(), parts.end());
    NodeId y = push(Vector::Constant(1, factor * total), 1, 1);
    backward_steps_[y.index] = [this, owned = std::move(owned), y, factor] {
        const double g = factor * grads_[y.index](0);
        for (NodeId p : owned) grads_[p.index](0) += g;
    };
    return y;
}

NodeId Tape::inv_clamped_exp(NodeId t, double lo, double hi) {
    check_scalar(t, "inv_clamped_exp");
    if (!(lo > 0.0 && hi > lo)) throw ValidationError("inv_clamped_exp: need 0 < lo < hi");
    const double u = std::exp(values_[t.index](0));
    const double c = std::clamp(u, lo, hi);
    NodeId y = push(Vector::Constant(1, 1.0 / c), 1, 1);
    backward_steps_[y.index] = [this, t, y, u, c, lo, hi] {
        if (u >= lo && u <= hi)
            grads_[t.index](0) += grads_[y.index](0) * (-u / (c * c));
    };
    return y;
}

NodeId Tape::bce_with_labels(NodeId p, const Vector& labels) {
    check(p, "bce_with_labels");
    const Vector& pv = values_[p.index];
    if (pv.size() != labels.size())
        throw ShapeError("bce_with_labels: probability and label lengths differ");
    if ((pv.array() <= 0.0).any() || (pv.array() >= 1.0).any())
        throw DegenerateInputError("bce_with_labels: probabilities must lie in (0, 1)");
    if (((labels.array() != 0.0) && (labels.array() != 1.0)).any())
        throw ValidationError("bce_with_labels: labels must be 0 or 1");
    const double v = -(labels.array() * pv.array().log() +
                       (1.0 - labels.array()) * (1.0 - pv.array()).log())
                          .sum();
    NodeId y = push(Vector::Constant(1, v), 1, 1);
    backward_steps_[y.index] = [this, p, y, labels] {
        const double g = grads_[y.index](0);
        const auto pa = values_[p.index].array();
        grads_[p.index].array() += g * (pa - labels.array()) / (pa * (1.0 - pa));
    };
    return y;
}

NodeId Tape::kl_from_label(const Vector& w, NodeId p) {
    check(p, "kl_from_label");
    const Vector& pv = values_[p.index];
    if (pv.size() != w.size())
        throw ShapeError("kl_from_label: label and prediction lengths differ");
    if ((w.array() < 0.0).any())
        throw ValidationError("kl_from_label: label weights must be non-negative");
    if ((pv.array() <= 0.0).any())
        throw DegenerateInputError("kl_from_label: predictions must be positive");
    double v = 0.0;
    for (Index j = 0; j < w.size(); ++j)
        if (w(j) > 0.0) v += w(j) * std::log(w(j) / pv(j));
    NodeId y = push(Vector::Constant(1, v), 1, 1);
    backward_steps_[y.index] = [this, p, y, w] {
        grads_[p.index].array() +=
            grads_[y.index](0) * (-w.array() / values_[p.index].array());
    };
    return y;
}

const Vector& Tape::value(NodeId id) const {
    check(id, "value");
    return values_[id.index];
}

double Tape::scalar(NodeId id) const {
    check_scalar(id, "scalar");
    return values_[id.index](0);
}

const Vector& Tape::grad(NodeId id) const {
    check(id, "grad");
    if (!backward_done_) throw Error("grad: backward has not run");
    return grads_[id.index];
}

std::pair<Index, Index> Tape::shape(NodeId id) const {
    check(id, "shape");
    return shapes_[id.index];
}

void Tape::backward(NodeId root) {
    check_scalar(root, "backward");
    if (backward_done_) throw Error("backward: already run on this tape");
    backward_done_ = true;
    grads_.resize(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i)
        grads_[i] = Vector::Zero(values_[i].size());
    grads_[root.index](0) = 1.0;
    for (std::size_t i = values_.size(); i-- > 0;)
        if (backward_steps_[i]) backward_steps_[i]();
    backward_steps_.assign(backward_steps_.size(), nullptr);
}

}  // namespace cr
