#ifndef CR_ENCODERS_HPP
#define CR_ENCODERS_HPP

#include <vector>

#include "cr/rng.hpp"
#include "cr/tape.hpp"
#include "cr/types.hpp"

namespace cr {

enum class Activation { relu, identity };

struct Layer {
    Matrix W;
    Vector b;
    Activation act = Activation::identity;
};

/**
 * Feed-forward encoder parameters. The same object serves the image encoder
 * (used unchanged for both the reference and the target role), the text
 * encoder, and the concatenation composer's MLP.
 */
struct EncoderParams {
    std::vector<Layer> layers;

    Index input_dim() const;
    Index output_dim() const;
    // Throws ShapeError unless consecutive layer dims chain.
    void validate() const;
};

struct AttributeHead {
    Matrix W;
    Vector b;
};

// Row-by-row draws so the rng consumption order is pinned.
Matrix uniform_init_matrix(Index rows, Index cols, double bound, Rng& rng);
Vector uniform_init_vector(Index n, double bound, Rng& rng);

// input -> hidden (relu) -> out (identity), uniform init in
// [-1/sqrt(fan_in), +1/sqrt(fan_in)].
EncoderParams make_mlp(Index input_dim, Index hidden_dim, Index output_dim, Rng& rng);
AttributeHead make_attribute_head(Index num_attributes, Index joint_dim, Rng& rng);

// Forward through all layers without the final normalization.
Vector forward_raw(const Vector& features, const EncoderParams& params);
// Forward then l2_normalize; the unit-norm embedding used everywhere.
Vector encode(const Vector& features, const EncoderParams& params);
// sigmoid(W z + b), every output strictly inside (0, 1) for finite inputs.
Vector predict_attributes(const Vector& z, const AttributeHead& head);

// Tape-bound counterparts for training. bind_* registers every parameter
// tensor as a leaf; the *_forward functions reuse those leaves so one tape
// accumulates gradients across a whole batch.
struct BoundLayer {
    NodeId W;
    NodeId b;
    Activation act;
};

struct BoundEncoder {
    std::vector<BoundLayer> layers;
};

struct BoundAttributeHead {
    NodeId W;
    NodeId b;
};

BoundEncoder bind_encoder(Tape& tape, const EncoderParams& params);
BoundAttributeHead bind_attribute_head(Tape& tape, const AttributeHead& head);
NodeId encoder_forward_raw(Tape& tape, const BoundEncoder& enc, NodeId x);
NodeId encoder_forward(Tape& tape, const BoundEncoder& enc, NodeId x);
NodeId attribute_head_forward(Tape& tape, const BoundAttributeHead& head, NodeId z);

}  // namespace cr

#endif
