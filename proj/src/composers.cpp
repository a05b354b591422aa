#include "cr/composers.hpp"

#include <cmath>

#include "cr/error.hpp"
#include "cr/vecmath.hpp"

namespace cr {

std::string to_string(ComposerKind kind) {
    switch (kind) {
        case ComposerKind::image_only: return "image_only";
        case ComposerKind::text_only: return "text_only";
        case ComposerKind::mean: return "mean";
        case ComposerKind::concat_mlp: return "concat_mlp";
        case ComposerKind::residual_gating: return "residual_gating";
        case ComposerKind::adaptive: return "adaptive";
    }
    throw ValidationError("composer: unknown kind tag");
}

ComposerKind composer_kind_from_string(const std::string& name) {
    for (ComposerKind k : {ComposerKind::image_only, ComposerKind::text_only,
                           ComposerKind::mean, ComposerKind::concat_mlp,
                           ComposerKind::residual_gating, ComposerKind::adaptive})
        if (to_string(k) == name) return k;
    throw ValidationError("composer: unknown kind '" + name + "'");
}

void Composer::validate() const {
    const bool needs_mlp = kind == ComposerKind::concat_mlp;
    const bool needs_gating = kind == ComposerKind::residual_gating;
    const bool needs_adaptive = kind == ComposerKind::adaptive;
    if (needs_mlp != mlp.has_value() || needs_gating != gating.has_value() ||
        needs_adaptive != adaptive.has_value())
        throw ValidationError("composer: parameter blocks do not match kind " +
                              to_string(kind));
    if (mlp) mlp->validate();
}

Composer make_composer(ComposerKind kind, Index joint_dim, Rng& rng) {
    if (joint_dim < 1) throw ShapeError("make_composer: joint_dim must be positive");
    Composer c;
    c.kind = kind;
    switch (kind) {
        case ComposerKind::image_only:
        case ComposerKind::text_only:
        case ComposerKind::mean:
            break;
        case ComposerKind::concat_mlp:
            c.mlp = make_mlp(2 * joint_dim, joint_dim, joint_dim, rng);
            break;
        case ComposerKind::residual_gating: {
            const double bound = 1.0 / std::sqrt(static_cast<double>(2 * joint_dim));
            ResidualGatingParams g;
            g.gate_W = uniform_init_matrix(joint_dim, 2 * joint_dim, bound, rng);
            g.gate_b = uniform_init_vector(joint_dim, bound, rng);
            g.res_W = uniform_init_matrix(joint_dim, 2 * joint_dim, bound, rng);
            g.res_b = uniform_init_vector(joint_dim, bound, rng);
            c.gating = std::move(g);
            break;
        }
        case ComposerKind::adaptive: {
            const double bound = 1.0 / std::sqrt(static_cast<double>(2 * joint_dim));
            AdaptiveComposerParams a;
            a.W = uniform_init_matrix(2, 2 * joint_dim, bound, rng);
            a.b = uniform_init_vector(2, bound, rng);
            c.adaptive = std::move(a);
            break;
        }
    }
    return c;
}

namespace {

void check_pair(const Vector& z_ir, const Vector& z_t, const char* who) {
    if (z_ir.size() != z_t.size())
        throw ShapeError(std::string(who) + ": embedding lengths " +
                         std::to_string(z_ir.size()) + " vs " + std::to_string(z_t.size()));
    if (z_ir.size() < 1) throw ShapeError(std::string(who) + ": empty embeddings");
}

Vector concat2(const Vector& a, const Vector& b) {
    Vector v(a.size() + b.size());
    v << a, b;
    return v;
}

}  // namespace

Vector compose_mean(const Vector& z_ir, const Vector& z_t) {
    check_pair(z_ir, z_t, "compose_mean");
    return l2_normalize(Vector(0.5 * (z_ir + z_t)));
}

Vector compose_concat_mlp(const Vector& z_ir, const Vector& z_t, const EncoderParams& mlp) {
    check_pair(z_ir, z_t, "compose_concat_mlp");
    if (mlp.input_dim() != 2 * z_ir.size() || mlp.output_dim() != z_ir.size())
        throw ShapeError("compose_concat_mlp: mlp must map 2*joint_dim to joint_dim");
    return l2_normalize(forward_raw(concat2(z_ir, z_t), mlp));
}

Vector compose_residual_gating(const Vector& z_ir, const Vector& z_t,
                               const ResidualGatingParams& params) {
    check_pair(z_ir, z_t, "compose_residual_gating");
    const Index d = z_ir.size();
    if (params.gate_W.rows() != d || params.gate_W.cols() != 2 * d ||
        params.res_W.rows() != d || params.res_W.cols() != 2 * d ||
        params.gate_b.size() != d || params.res_b.size() != d)
        throw ShapeError("compose_residual_gating: gate and residual must map 2*joint_dim to joint_dim");
    const Vector cat = concat2(z_ir, z_t);
    const Vector gate_logits = affine(cat, params.gate_W, params.gate_b);
    const Vector gate = (1.0 + (-gate_logits.array()).exp()).inverse();
    const Vector residual = affine(cat, params.res_W, params.res_b);
    return l2_normalize(Vector(gate.cwiseProduct(z_ir) + residual));
}

ComposeResult compose_adaptive(const Vector& z_ir, const Vector& z_t,
                               const AdaptiveComposerParams& params) {
    check_pair(z_ir, z_t, "compose_adaptive");
    const Index d = z_ir.size();
    if (params.W.rows() != 2 || params.W.cols() != 2 * d || params.b.size() != 2)
        throw ShapeError("compose_adaptive: weight head must map 2*joint_dim to 2");
    const Vector w = softmax(affine(concat2(z_ir, z_t), params.W, params.b), 1.0);
    ComposeResult out;
    out.z = l2_normalize(Vector(w(0) * z_ir + w(1) * z_t));
    out.predicted = PseudoWeight{w(0), w(1)};
    return out;
}

ComposeResult compose(const Composer& composer, const Vector& z_ir, const Vector& z_t) {
    composer.validate();
    check_pair(z_ir, z_t, "compose");
    switch (composer.kind) {
        case ComposerKind::image_only: return {z_ir, std::nullopt};
        case ComposerKind::text_only: return {z_t, std::nullopt};
        case ComposerKind::mean: return {compose_mean(z_ir, z_t), std::nullopt};
        case ComposerKind::concat_mlp:
            return {compose_concat_mlp(z_ir, z_t, *composer.mlp), std::nullopt};
        case ComposerKind::residual_gating:
            return {compose_residual_gating(z_ir, z_t, *composer.gating), std::nullopt};
        case ComposerKind::adaptive: return compose_adaptive(z_ir, z_t, *composer.adaptive);
    }
    throw ValidationError("compose: unknown kind tag");
}

BoundComposer bind_composer(Tape& tape, const Composer& composer) {
    composer.validate();
    BoundComposer b;
    b.kind = composer.kind;
    switch (composer.kind) {
        case ComposerKind::image_only:
        case ComposerKind::text_only:
        case ComposerKind::mean:
            break;
        case ComposerKind::concat_mlp:
            b.mlp = bind_encoder(tape, *composer.mlp);
            break;
        case ComposerKind::residual_gating:
            b.gate_W = tape.leaf(composer.gating->gate_W);
            b.gate_b = tape.leaf(composer.gating->gate_b);
            b.res_W = tape.leaf(composer.gating->res_W);
            b.res_b = tape.leaf(composer.gating->res_b);
            break;
        case ComposerKind::adaptive:
            b.adaptive_W = tape.leaf(composer.adaptive->W);
            b.adaptive_b = tape.leaf(composer.adaptive->b);
            break;
    }
    return b;
}

ComposeNodes compose_forward(Tape& tape, const BoundComposer& bound, NodeId z_ir,
                             NodeId z_t) {
    switch (bound.kind) {
        case ComposerKind::image_only: return {z_ir, std::nullopt};
        case ComposerKind::text_only: return {z_t, std::nullopt};
        case ComposerKind::mean:
            return {tape.l2_normalize(tape.scale(tape.add(z_ir, z_t), 0.5)), std::nullopt};
        case ComposerKind::concat_mlp:
            return {tape.l2_normalize(
                        encoder_forward_raw(tape, *bound.mlp, tape.concat(z_ir, z_t))),
                    std::nullopt};
        case ComposerKind::residual_gating: {
            NodeId cat = tape.concat(z_ir, z_t);
            NodeId gate = tape.sigmoid(tape.affine(cat, *bound.gate_W, *bound.gate_b));
            NodeId residual = tape.affine(cat, *bound.res_W, *bound.res_b);
            return {tape.l2_normalize(tape.add(tape.hadamard(gate, z_ir), residual)),
                    std::nullopt};
        }
        case ComposerKind::adaptive: {
            NodeId cat = tape.concat(z_ir, z_t);
            NodeId w = tape.softmax(tape.affine(cat, *bound.adaptive_W, *bound.adaptive_b), 1.0);
            NodeId z = tape.l2_normalize(tape.weighted_pair_sum(w, z_ir, z_t));
            return {z, w};
        }
    }
    throw ValidationError("compose_forward: unknown kind tag");
}

}  // namespace cr
