#include "cr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "cr/error.hpp"

namespace cr {

Reduction reduction_from_string(const std::string& name) {
    if (name == "sum") return Reduction::sum;
    if (name == "mean") return Reduction::mean;
    throw ValidationError("reduction: unknown mode '" + name + "'");
}

std::string to_string(Reduction r) {
    return r == Reduction::sum ? "sum" : "mean";
}

namespace {

double reduction_factor(Reduction r, std::size_t batch) {
    return r == Reduction::sum ? 1.0 : 1.0 / static_cast<double>(batch);
}

void check_batch_sizes(std::size_t a, std::size_t b, const char* who) {
    if (a != b)
        throw ShapeError(std::string(who) + ": batch sizes " + std::to_string(a) + " vs " +
                         std::to_string(b));
    if (a == 0) throw ShapeError(std::string(who) + ": empty batch");
}

Vector simplex2(const PseudoWeight& w, const char* who) {
    if (w.w_image < 0.0 || w.w_text < 0.0 || w.w_image > 1.0 || w.w_text > 1.0)
        throw ValidationError(std::string(who) + ": weights outside [0, 1]");
    if (std::abs(w.w_image + w.w_text - 1.0) > 1e-9)
        throw ValidationError(std::string(who) + ": weights do not sum to 1");
    Vector v(2);
    v << w.w_image, w.w_text;
    return v;
}

}  // namespace

NodeId inverse_temperature_node(Tape& tape, NodeId tau_log) {
    return tape.inv_clamped_exp(tau_log, kMinTemperature, kMaxTemperature);
}

NodeId bi_infonce_node(Tape& tape, std::span<const NodeId> z_img,
                       std::span<const NodeId> z_txt, NodeId tau_log) {
    check_batch_sizes(z_img.size(), z_txt.size(), "bi_infonce");
    const std::size_t B = z_img.size();
    NodeId inv_tau = inverse_temperature_node(tape, tau_log);
    std::vector<std::vector<NodeId>> sims(B, std::vector<NodeId>(B, NodeId{0}));
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < B; ++j) sims[i][j] = tape.cosine(z_img[i], z_txt[j]);
    std::vector<NodeId> row_terms, col_terms, lane(B, NodeId{0});
    for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t j = 0; j < B; ++j) lane[j] = sims[i][j];
        NodeId logits = tape.scalar_mul(inv_tau, tape.pack(lane));
        row_terms.push_back(
            tape.sub(tape.logsumexp(logits), tape.entry(logits, static_cast<Index>(i))));
    }
    for (std::size_t j = 0; j < B; ++j) {
        for (std::size_t i = 0; i < B; ++i) lane[i] = sims[i][j];
        NodeId logits = tape.scalar_mul(inv_tau, tape.pack(lane));
        col_terms.push_back(
            tape.sub(tape.logsumexp(logits), tape.entry(logits, static_cast<Index>(j))));
    }
    const double inv_b = 1.0 / static_cast<double>(B);
    return tape.add(tape.scaled_sum(row_terms, inv_b), tape.scaled_sum(col_terms, inv_b));
}

NodeId infonce_node(Tape& tape, std::span<const NodeId> z_q,
                    std::span<const NodeId> z_tgt, NodeId tau_log) {
    check_batch_sizes(z_q.size(), z_tgt.size(), "infonce");
    const std::size_t B = z_q.size();
    NodeId inv_tau = inverse_temperature_node(tape, tau_log);
    std::vector<NodeId> terms, lane(B, NodeId{0});
    for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t j = 0; j < B; ++j) lane[j] = tape.cosine(z_q[i], z_tgt[j]);
        NodeId logits = tape.scalar_mul(inv_tau, tape.pack(lane));
        terms.push_back(
            tape.sub(tape.logsumexp(logits), tape.entry(logits, static_cast<Index>(i))));
    }
    return tape.scaled_sum(terms, 1.0 / static_cast<double>(B));
}

NodeId attribute_bce_node(Tape& tape, std::span<const NodeId> probs,
                          std::span<const Vector> labels, Reduction reduction) {
    check_batch_sizes(probs.size(), labels.size(), "attribute_bce");
    std::vector<NodeId> terms;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        NodeId clamped = tape.clamp(probs[i], kProbFloor, 1.0 - kProbFloor);
        terms.push_back(tape.bce_with_labels(clamped, labels[i]));
    }
    return tape.scaled_sum(terms, reduction_factor(reduction, probs.size()));
}

NodeId weight_kl_node(Tape& tape, std::span<const PseudoWeight> labels,
                      std::span<const NodeId> w_pred, Reduction reduction) {
    check_batch_sizes(labels.size(), w_pred.size(), "weight_kl");
    std::vector<NodeId> terms;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const Vector w = simplex2(labels[i], "weight_kl label");
        const Vector& pred = tape.value(w_pred[i]);
        if (pred.size() != 2) throw ShapeError("weight_kl: predictions must have length 2");
        if (std::abs(pred.sum() - 1.0) > 1e-9)
            throw ValidationError("weight_kl: prediction does not sum to 1");
        NodeId clamped = tape.clamp(w_pred[i], kProbFloor, 1.0);
        terms.push_back(tape.kl_from_label(w, clamped));
    }
    return tape.scaled_sum(terms, reduction_factor(reduction, labels.size()));
}

NodeId total_loss_node(Tape& tape, NodeId l_contrastive, NodeId l_kl, double lambda) {
    if (!(lambda >= 0.0)) throw ValidationError("total_loss: lambda must be non-negative");
    return tape.add(l_contrastive, tape.scale(l_kl, lambda));
}

namespace {

double infonce_value(std::span<const Vector> a, std::span<const Vector> b, double tau,
                     bool bidirectional) {
    if (!(tau > 0.0)) throw ValidationError("infonce: tau must be positive");
    Tape tape;
    std::vector<NodeId> na, nb;
    na.reserve(a.size());
    nb.reserve(b.size());
    for (const Vector& v : a) na.push_back(tape.constant(v));
    for (const Vector& v : b) nb.push_back(tape.constant(v));
    NodeId tau_log = tape.constant_scalar(std::log(tau));
    NodeId loss = bidirectional ? bi_infonce_node(tape, na, nb, tau_log)
                                : infonce_node(tape, na, nb, tau_log);
    return tape.scalar(loss);
}

}  // namespace

double bi_infonce_loss(std::span<const Vector> z_img, std::span<const Vector> z_txt,
                       double tau) {
    return infonce_value(z_img, z_txt, tau, true);
}

double infonce_loss(std::span<const Vector> z_q, std::span<const Vector> z_tgt,
                    double tau) {
    return infonce_value(z_q, z_tgt, tau, false);
}

double attribute_bce_loss(const Vector& p, const Vector& labels) {
    if (p.size() != labels.size())
        throw ShapeError("attribute_bce: probability and label lengths differ");
    if (p.size() < 1) throw ShapeError("attribute_bce: empty example");
    if (((labels.array() != 0.0) && (labels.array() != 1.0)).any())
        throw ValidationError("attribute_bce: labels must be 0 or 1");
    if ((p.array() < 0.0).any() || (p.array() > 1.0).any())
        throw ValidationError("attribute_bce: probabilities outside [0, 1]");
    const auto q = p.array().cwiseMax(kProbFloor).cwiseMin(1.0 - kProbFloor);
    return -(labels.array() * q.log() + (1.0 - labels.array()) * (1.0 - q).log()).sum();
}

double attribute_bce_loss(std::span<const Vector> p, std::span<const Vector> labels,
                          Reduction reduction) {
    check_batch_sizes(p.size(), labels.size(), "attribute_bce");
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) total += attribute_bce_loss(p[i], labels[i]);
    return total * reduction_factor(reduction, p.size());
}

double weight_kl_loss(const PseudoWeight& w, const PseudoWeight& w_pred) {
    const Vector wv = simplex2(w, "weight_kl label");
    const Vector pv = simplex2(w_pred, "weight_kl prediction");
    double total = 0.0;
    for (Index c = 0; c < 2; ++c)
        if (wv(c) > 0.0) total += wv(c) * (std::log(wv(c)) - std::log(std::max(pv(c), kProbFloor)));
    return total;
}

double weight_kl_loss(std::span<const PseudoWeight> w,
                      std::span<const PseudoWeight> w_pred, Reduction reduction) {
    check_batch_sizes(w.size(), w_pred.size(), "weight_kl");
    double total = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) total += weight_kl_loss(w[i], w_pred[i]);
    return total * reduction_factor(reduction, w.size());
}

double total_loss(double l_contrastive, double l_kl, double lambda) {
    if (!std::isfinite(l_contrastive) || !std::isfinite(l_kl))
        throw ValidationError("total_loss: non-finite inputs");
    if (!(lambda >= 0.0)) throw ValidationError("total_loss: lambda must be non-negative");
    return l_contrastive + lambda * l_kl;
}

}  // namespace cr
