#include "cr/encoders.hpp"

#include <cmath>
#include <string>

#include "cr/error.hpp"
#include "cr/vecmath.hpp"

namespace cr {

Matrix uniform_init_matrix(Index rows, Index cols, double bound, Rng& rng) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
    return m;
}

Vector uniform_init_vector(Index n, double bound, Rng& rng) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = rng.uniform(-bound, bound);
    return v;
}

Index EncoderParams::input_dim() const {
    if (layers.empty()) throw ShapeError("encoder: no layers");
    return layers.front().W.cols();
}

Index EncoderParams::output_dim() const {
    if (layers.empty()) throw ShapeError("encoder: no layers");
    return layers.back().W.rows();
}

void EncoderParams::validate() const {
    if (layers.empty()) throw ShapeError("encoder: no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Layer& l = layers[i];
        if (l.W.rows() < 1 || l.W.cols() < 1)
            throw ShapeError("encoder: empty weight matrix in layer " + std::to_string(i));
        if (l.b.size() != l.W.rows())
            throw ShapeError("encoder: bias length mismatch in layer " + std::to_string(i));
        if (i > 0 && l.W.cols() != layers[i - 1].W.rows())
            throw ShapeError("encoder: layer " + std::to_string(i) + " expects input " +
                             std::to_string(l.W.cols()) + " but layer " +
                             std::to_string(i - 1) + " emits " +
                             std::to_string(layers[i - 1].W.rows()));
    }
}

EncoderParams make_mlp(Index input_dim, Index hidden_dim, Index output_dim, Rng& rng) {
    if (input_dim < 1 || hidden_dim < 1 || output_dim < 1)
        throw ShapeError("make_mlp: dimensions must be positive");
    EncoderParams p;
    const double b1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
    p.layers.push_back({uniform_init_matrix(hidden_dim, input_dim, b1, rng),
                        uniform_init_vector(hidden_dim, b1, rng), Activation::relu});
    const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    p.layers.push_back({uniform_init_matrix(output_dim, hidden_dim, b2, rng),
                        uniform_init_vector(output_dim, b2, rng), Activation::identity});
    return p;
}

AttributeHead make_attribute_head(Index num_attributes, Index joint_dim, Rng& rng) {
    if (num_attributes < 1 || joint_dim < 1)
        throw ShapeError("make_attribute_head: dimensions must be positive");
    const double b = 1.0 / std::sqrt(static_cast<double>(joint_dim));
    return {uniform_init_matrix(num_attributes, joint_dim, b, rng),
            uniform_init_vector(num_attributes, b, rng)};
}

Vector forward_raw(const Vector& features, const EncoderParams& params) {
    params.validate();
    if (features.size() != params.input_dim())
        throw ShapeError("encode: feature length " + std::to_string(features.size()) +
                         " does not match encoder input " +
                         std::to_string(params.input_dim()));
    Vector h = features;
    for (const Layer& l : params.layers) {
        h = affine(h, l.W, l.b);
        if (l.act == Activation::relu) h = h.cwiseMax(0.0);
    }
    return h;
}

Vector encode(const Vector& features, const EncoderParams& params) {
    return l2_normalize(forward_raw(features, params));
}

Vector predict_attributes(const Vector& z, const AttributeHead& head) {
    Vector logits = affine(z, head.W, head.b);
    return (1.0 + (-logits.array()).exp()).inverse();
}

BoundEncoder bind_encoder(Tape& tape, const EncoderParams& params) {
    params.validate();
    BoundEncoder enc;
    for (const Layer& l : params.layers)
        enc.layers.push_back({tape.leaf(l.W), tape.leaf(l.b), l.act});
    return enc;
}

BoundAttributeHead bind_attribute_head(Tape& tape, const AttributeHead& head) {
    if (head.b.size() != head.W.rows())
        throw ShapeError("attribute head: bias length mismatch");
    return {tape.leaf(head.W), tape.leaf(head.b)};
}

NodeId encoder_forward_raw(Tape& tape, const BoundEncoder& enc, NodeId x) {
    NodeId h = x;
    for (const BoundLayer& l : enc.layers) {
        h = tape.affine(h, l.W, l.b);
        if (l.act == Activation::relu) h = tape.relu(h);
    }
    return h;
}

NodeId encoder_forward(Tape& tape, const BoundEncoder& enc, NodeId x) {
    return tape.l2_normalize(encoder_forward_raw(tape, enc, x));
}

NodeId attribute_head_forward(Tape& tape, const BoundAttributeHead& head, NodeId z) {
    return tape.sigmoid(tape.affine(z, head.W, head.b));
}

}  // namespace cr
