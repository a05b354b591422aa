#include "cr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cr/composers.hpp"
#include "cr/encoders.hpp"
#include "cr/error.hpp"
#include "cr/losses.hpp"
#include "cr/pseudo_weights.hpp"
#include "cr/rng.hpp"
#include "cr/tape.hpp"
#include "cr/vecmath.hpp"

namespace cr {
namespace {

struct Scenario {
    EncoderParams image_enc;
    EncoderParams text_enc;
    AttributeHead head;
    Composer composer;
    double tau1_log = 0.0;
    double tau2_log = 0.0;
    std::vector<Vector> image_feats, text_feats, target_feats;
    std::vector<Vector> attr_labels;
    std::vector<PseudoWeight> weight_labels;
};

Scenario make_scenario(const GradSuiteConfig& cfg, Rng& rng) {
    Scenario s;
    Rng image_rng = rng.fork("image_encoder");
    Rng text_rng = rng.fork("text_encoder");
    Rng head_rng = rng.fork("attr_head");
    Rng composer_rng = rng.fork("composer");
    Rng data_rng = rng.fork("data");
    s.image_enc = make_mlp(cfg.feature_dim, cfg.hidden_dim, cfg.joint_dim, image_rng);
    s.text_enc = make_mlp(cfg.feature_dim, cfg.hidden_dim, cfg.joint_dim, text_rng);
    s.head = make_attribute_head(cfg.num_attributes, cfg.joint_dim, head_rng);
    s.composer = make_composer(ComposerKind::adaptive, cfg.joint_dim, composer_rng);
    // Temperatures drawn strictly inside the clamp range so the check probes
    // the differentiable region, not the flat clamped ends.
    s.tau1_log = std::log(data_rng.uniform(0.05, 0.5));
    s.tau2_log = std::log(data_rng.uniform(0.05, 0.5));
    for (int i = 0; i < cfg.batch_size; ++i) {
        Vector img(cfg.feature_dim), txt(cfg.feature_dim), tgt(cfg.feature_dim);
        for (Index j = 0; j < cfg.feature_dim; ++j) img[j] = data_rng.normal();
        for (Index j = 0; j < cfg.feature_dim; ++j) txt[j] = data_rng.normal();
        for (Index j = 0; j < cfg.feature_dim; ++j) tgt[j] = data_rng.normal();
        s.image_feats.push_back(std::move(img));
        s.text_feats.push_back(std::move(txt));
        s.target_feats.push_back(std::move(tgt));
        Vector labels(cfg.num_attributes);
        for (Index j = 0; j < cfg.num_attributes; ++j)
            labels[j] = data_rng.bernoulli(0.5) ? 1.0 : 0.0;
        s.attr_labels.push_back(std::move(labels));
        const double u = data_rng.uniform(0.05, 0.95);
        s.weight_labels.push_back({u, 1.0 - u});
    }
    return s;
}

struct TensorRef {
    double* data;
    Index size;
};

std::vector<TensorRef> all_refs(Scenario& s) {
    std::vector<TensorRef> refs;
    const auto add_encoder = [&refs](EncoderParams& enc) {
        for (Layer& layer : enc.layers) {
            refs.push_back({layer.W.data(), layer.W.size()});
            refs.push_back({layer.b.data(), layer.b.size()});
        }
    };
    add_encoder(s.image_enc);
    add_encoder(s.text_enc);
    refs.push_back({s.head.W.data(), s.head.W.size()});
    refs.push_back({s.head.b.data(), s.head.b.size()});
    AdaptiveComposerParams& a = *s.composer.adaptive;
    refs.push_back({a.W.data(), a.W.size()});
    refs.push_back({a.b.data(), a.b.size()});
    refs.push_back({&s.tau1_log, 1});
    refs.push_back({&s.tau2_log, 1});
    return refs;
}

Vector gather(const std::vector<TensorRef>& refs) {
    Index total = 0;
    for (const TensorRef& r : refs) total += r.size;
    Vector theta(total);
    Index off = 0;
    for (const TensorRef& r : refs) {
        theta.segment(off, r.size) = Eigen::Map<const Vector>(r.data, r.size);
        off += r.size;
    }
    return theta;
}

void scatter(const Vector& theta, const std::vector<TensorRef>& refs) {
    Index off = 0;
    for (const TensorRef& r : refs) {
        Eigen::Map<Vector>(r.data, r.size) = theta.segment(off, r.size);
        off += r.size;
    }
}

struct BoundScenario {
    BoundEncoder image_enc;
    BoundEncoder text_enc;
    BoundAttributeHead head;
    BoundComposer composer;
    NodeId tau1{};
    NodeId tau2{};
    // Leaf per TensorRef, matching all_refs order.
    std::vector<NodeId> leaves;
};

BoundScenario bind_scenario(Tape& tape, const Scenario& s) {
    BoundScenario b;
    const auto add_encoder = [&](const EncoderParams& enc) {
        BoundEncoder bound;
        for (const Layer& layer : enc.layers) {
            BoundLayer bl{tape.leaf(layer.W), tape.leaf(layer.b), layer.act};
            b.leaves.push_back(bl.W);
            b.leaves.push_back(bl.b);
            bound.layers.push_back(bl);
        }
        return bound;
    };
    b.image_enc = add_encoder(s.image_enc);
    b.text_enc = add_encoder(s.text_enc);
    b.head = BoundAttributeHead{tape.leaf(s.head.W), tape.leaf(s.head.b)};
    b.leaves.push_back(b.head.W);
    b.leaves.push_back(b.head.b);
    b.composer.kind = ComposerKind::adaptive;
    b.composer.adaptive_W = tape.leaf(s.composer.adaptive->W);
    b.composer.adaptive_b = tape.leaf(s.composer.adaptive->b);
    b.leaves.push_back(*b.composer.adaptive_W);
    b.leaves.push_back(*b.composer.adaptive_b);
    b.tau1 = tape.leaf(Vector{Vector::Constant(1, s.tau1_log)});
    b.tau2 = tape.leaf(Vector{Vector::Constant(1, s.tau2_log)});
    b.leaves.push_back(b.tau1);
    b.leaves.push_back(b.tau2);
    return b;
}

enum class LossKind { pair_alignment, attribute_bce, composed_contrastive, weight_kl, total };

const char* loss_name(LossKind kind) {
    switch (kind) {
        case LossKind::pair_alignment: return "pair_alignment";
        case LossKind::attribute_bce: return "attribute_bce";
        case LossKind::composed_contrastive: return "composed_contrastive";
        case LossKind::weight_kl: return "weight_kl";
        case LossKind::total: return "total";
    }
    throw Error("loss_name: bad kind");
}

NodeId build_loss(Tape& tape, const BoundScenario& b, const Scenario& s, LossKind kind,
                  double lambda) {
    const std::size_t B = s.image_feats.size();
    switch (kind) {
        case LossKind::pair_alignment: {
            std::vector<NodeId> z_img, z_txt;
            for (std::size_t i = 0; i < B; ++i) {
                z_img.push_back(
                    encoder_forward(tape, b.image_enc, tape.constant(s.image_feats[i])));
                z_txt.push_back(
                    encoder_forward(tape, b.text_enc, tape.constant(s.text_feats[i])));
            }
            return bi_infonce_node(tape, z_img, z_txt, b.tau1);
        }
        case LossKind::attribute_bce: {
            std::vector<NodeId> probs;
            for (std::size_t i = 0; i < B; ++i) {
                const NodeId z =
                    encoder_forward(tape, b.image_enc, tape.constant(s.image_feats[i]));
                probs.push_back(attribute_head_forward(tape, b.head, z));
            }
            return attribute_bce_node(tape, probs, s.attr_labels, Reduction::sum);
        }
        case LossKind::composed_contrastive:
        case LossKind::weight_kl:
        case LossKind::total: {
            std::vector<NodeId> z_q, z_tgt, w_pred;
            for (std::size_t i = 0; i < B; ++i) {
                const NodeId z_ir =
                    encoder_forward(tape, b.image_enc, tape.constant(s.image_feats[i]));
                const NodeId z_t =
                    encoder_forward(tape, b.text_enc, tape.constant(s.text_feats[i]));
                const ComposeNodes q = compose_forward(tape, b.composer, z_ir, z_t);
                z_q.push_back(q.z);
                w_pred.push_back(*q.w);
                z_tgt.push_back(
                    encoder_forward(tape, b.image_enc, tape.constant(s.target_feats[i])));
            }
            if (kind == LossKind::weight_kl)
                return weight_kl_node(tape, s.weight_labels, w_pred, Reduction::mean);
            const NodeId l_cl = infonce_node(tape, z_q, z_tgt, b.tau2);
            if (kind == LossKind::composed_contrastive) return l_cl;
            const NodeId l_kl = weight_kl_node(tape, s.weight_labels, w_pred, Reduction::mean);
            return total_loss_node(tape, l_cl, l_kl, lambda);
        }
    }
    throw Error("build_loss: bad kind");
}

double check_loss(const GradSuiteConfig& cfg, const Scenario& base, LossKind kind) {
    Scenario work = base;
    const std::vector<TensorRef> refs = all_refs(work);
    const Vector theta0 = gather(refs);
    const auto value_fn = [&](const Vector& theta) {
        scatter(theta, refs);
        Tape tape;
        const BoundScenario b = bind_scenario(tape, work);
        return tape.scalar(build_loss(tape, b, work, kind, cfg.lambda));
    };
    const auto grad_fn = [&](const Vector& theta) {
        scatter(theta, refs);
        Tape tape;
        const BoundScenario b = bind_scenario(tape, work);
        tape.backward(build_loss(tape, b, work, kind, cfg.lambda));
        Vector g(theta.size());
        Index off = 0;
        for (std::size_t i = 0; i < refs.size(); ++i) {
            g.segment(off, refs[i].size) = tape.grad(b.leaves[i]);
            off += refs[i].size;
        }
        return g;
    };
    return grad_check(value_fn, grad_fn, theta0, cfg.eps);
}

}  // namespace

bool GradSuiteReport::all_below(double bound) const {
    if (rows.empty()) return false;
    for (const GradSuiteRow& row : rows)
        if (!(row.max_rel_error < bound)) return false;
    return true;
}

std::string GradSuiteReport::to_text() const {
    std::string out = "# gradcheck v1\n";
    for (const GradSuiteRow& row : rows)
        out += row.loss_name + "\t" + format_sig9(row.max_rel_error) + "\n";
    out += "worst\t" + format_sig9(worst) + "\n";
    return out;
}

GradSuiteReport run_gradient_suite(const GradSuiteConfig& config) {
    if (config.trials < 1) throw ValidationError("gradcheck: trials must be >= 1");
    if (config.batch_size < 2)
        throw ValidationError("gradcheck: batch_size must be >= 2 for contrastive terms");
    if (config.feature_dim < 1 || config.hidden_dim < 1 || config.joint_dim < 1 ||
        config.num_attributes < 1)
        throw ValidationError("gradcheck: dimensions must be positive");

    constexpr LossKind kKinds[] = {LossKind::pair_alignment, LossKind::attribute_bce,
                                   LossKind::composed_contrastive, LossKind::weight_kl,
                                   LossKind::total};
    GradSuiteReport report;
    for (LossKind kind : kKinds) report.rows.push_back({loss_name(kind), 0.0});

    Rng rng(config.seed);
    for (int trial = 0; trial < config.trials; ++trial) {
        Rng trial_rng = rng.fork("trial" + std::to_string(trial));
        const Scenario scenario = make_scenario(config, trial_rng);
        for (std::size_t k = 0; k < report.rows.size(); ++k) {
            const double err = check_loss(config, scenario, kKinds[k]);
            report.rows[k].max_rel_error = std::max(report.rows[k].max_rel_error, err);
        }
    }
    for (const GradSuiteRow& row : report.rows)
        report.worst = std::max(report.worst, row.max_rel_error);
    return report;
}

}  // namespace cr
