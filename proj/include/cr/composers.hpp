#ifndef CR_COMPOSERS_HPP
#define CR_COMPOSERS_HPP

#include <optional>
#include <string>

#include "cr/encoders.hpp"
#include "cr/pseudo_weights.hpp"
#include "cr/tape.hpp"
#include "cr/types.hpp"

namespace cr {

enum class ComposerKind {
    image_only,
    text_only,
    mean,
    concat_mlp,
    residual_gating,
    adaptive,
};

std::string to_string(ComposerKind kind);
ComposerKind composer_kind_from_string(const std::string& name);

// One affine layer 2*joint_dim -> 2; softmax over its output yields the
// predicted importance weights.
struct AdaptiveComposerParams {
    Matrix W;
    Vector b;
};

struct ResidualGatingParams {
    Matrix gate_W;
    Vector gate_b;
    Matrix res_W;
    Vector res_b;
};

// Tagged composer; exactly the parameter block matching the tag is engaged.
struct Composer {
    ComposerKind kind = ComposerKind::mean;
    std::optional<EncoderParams> mlp;
    std::optional<ResidualGatingParams> gating;
    std::optional<AdaptiveComposerParams> adaptive;

    void validate() const;
};

Composer make_composer(ComposerKind kind, Index joint_dim, Rng& rng);

struct ComposeResult {
    Vector z;
    // Present only for the adaptive composer.
    std::optional<PseudoWeight> predicted;
};

Vector compose_mean(const Vector& z_ir, const Vector& z_t);
Vector compose_concat_mlp(const Vector& z_ir, const Vector& z_t, const EncoderParams& mlp);
Vector compose_residual_gating(const Vector& z_ir, const Vector& z_t,
                               const ResidualGatingParams& params);
ComposeResult compose_adaptive(const Vector& z_ir, const Vector& z_t,
                               const AdaptiveComposerParams& params);
ComposeResult compose(const Composer& composer, const Vector& z_ir, const Vector& z_t);

// Tape-bound counterparts for stage-3 training.
struct BoundComposer {
    ComposerKind kind = ComposerKind::mean;
    std::optional<BoundEncoder> mlp;
    std::optional<NodeId> gate_W, gate_b, res_W, res_b;
    std::optional<NodeId> adaptive_W, adaptive_b;
};

struct ComposeNodes {
    NodeId z;
    // Predicted weight distribution node (length 2), adaptive only.
    std::optional<NodeId> w;
};

BoundComposer bind_composer(Tape& tape, const Composer& composer);
ComposeNodes compose_forward(Tape& tape, const BoundComposer& bound, NodeId z_ir, NodeId z_t);

}  // namespace cr

#endif
