#ifndef CR_LOSSES_HPP
#define CR_LOSSES_HPP

#include <cmath>
#include <span>

#include "cr/pseudo_weights.hpp"
#include "cr/tape.hpp"
#include "cr/types.hpp"

namespace cr {

// exp(tau_log) is clamped to this range before use.
inline constexpr double kMinTemperature = 0.01;
inline constexpr double kMaxTemperature = 1.0;
// Probabilities entering a log are clamped to [kProbFloor, 1 - kProbFloor].
inline constexpr double kProbFloor = 1e-12;

enum class Reduction { sum, mean };

Reduction reduction_from_string(const std::string& name);
std::string to_string(Reduction r);

struct LossConfig {
    double tau1_log = std::log(0.07);
    double tau2_log = std::log(0.07);
    double lambda = 0.5;
    Reduction kl_reduction = Reduction::mean;
    // Attribute BCE sums over the batch by default; mean is available.
    Reduction bce_reduction = Reduction::sum;
    int batch_size = 32;
};

// Value-level losses (no gradients). All losses are natural-log based.

// Bi-directional InfoNCE over index-paired unit embeddings: mean over rows
// plus mean over columns of -log softmax(cosine / tau) at the diagonal.
double bi_infonce_loss(std::span<const Vector> z_img, std::span<const Vector> z_txt,
                       double tau);
// Single direction (query -> target), mean over the batch.
double infonce_loss(std::span<const Vector> z_q, std::span<const Vector> z_tgt,
                    double tau);
// -sum_k [a_k ln p_k + (1 - a_k) ln(1 - p_k)] for one example.
double attribute_bce_loss(const Vector& p, const Vector& labels);
double attribute_bce_loss(std::span<const Vector> p, std::span<const Vector> labels,
                          Reduction reduction);
// KL(w || w_pred) over the 2-simplex; 0 ln 0 is 0.
double weight_kl_loss(const PseudoWeight& w, const PseudoWeight& w_pred);
double weight_kl_loss(std::span<const PseudoWeight> w,
                      std::span<const PseudoWeight> w_pred, Reduction reduction);
double total_loss(double l_contrastive, double l_kl, double lambda);

// Tape-level builders used by training. Embedding arguments must already be
// unit-norm nodes; tau_log is a scalar leaf so the temperature trains.

// 1 / clamp(exp(tau_log), kMinTemperature, kMaxTemperature).
NodeId inverse_temperature_node(Tape& tape, NodeId tau_log);
NodeId bi_infonce_node(Tape& tape, std::span<const NodeId> z_img,
                       std::span<const NodeId> z_txt, NodeId tau_log);
NodeId infonce_node(Tape& tape, std::span<const NodeId> z_q,
                    std::span<const NodeId> z_tgt, NodeId tau_log);
NodeId attribute_bce_node(Tape& tape, std::span<const NodeId> probs,
                          std::span<const Vector> labels, Reduction reduction);
// labels are fixed targets; w_pred are predicted 2-component distributions.
NodeId weight_kl_node(Tape& tape, std::span<const PseudoWeight> labels,
                      std::span<const NodeId> w_pred, Reduction reduction);
NodeId total_loss_node(Tape& tape, NodeId l_contrastive, NodeId l_kl, double lambda);

}  // namespace cr

#endif
