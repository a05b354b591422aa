#include "doctest.h"

#include <cmath>

#include "cr/encoders.hpp"
#include "cr/error.hpp"
#include "cr/rng.hpp"
#include "cr/tape.hpp"
#include "cr/vecmath.hpp"

using namespace cr;

namespace {

Vector rand_vec(Index n, Rng& rng) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = rng.normal();
    return v;
}

}  // namespace

TEST_CASE("make_mlp is deterministic and respects init bounds") {
    Rng a(42);
    Rng b(42);
    const EncoderParams ea = make_mlp(6, 8, 4, a);
    const EncoderParams eb = make_mlp(6, 8, 4, b);
    REQUIRE(ea.layers.size() == 2);
    CHECK(ea.layers[0].act == Activation::relu);
    CHECK(ea.layers[1].act == Activation::identity);
    CHECK(ea.input_dim() == 6);
    CHECK(ea.output_dim() == 4);
    for (std::size_t i = 0; i < ea.layers.size(); ++i) {
        CHECK(ea.layers[i].W == eb.layers[i].W);
        CHECK(ea.layers[i].b == eb.layers[i].b);
        const double bound = 1.0 / std::sqrt(static_cast<double>(ea.layers[i].W.cols()));
        CHECK(ea.layers[i].W.cwiseAbs().maxCoeff() <= bound);
        CHECK(ea.layers[i].b.cwiseAbs().maxCoeff() <= bound);
    }

    Rng c(43);
    const EncoderParams ec = make_mlp(6, 8, 4, c);
    CHECK(ea.layers[0].W != ec.layers[0].W);
}

TEST_CASE("encode returns unit-norm embeddings") {
    Rng rng(3);
    const EncoderParams enc = make_mlp(10, 16, 8, rng);
    for (int trial = 0; trial < 20; ++trial) {
        const Vector z = encode(rand_vec(10, rng), enc);
        CHECK(std::abs(z.norm() - 1.0) < 1e-12);
    }
}

TEST_CASE("tape forward matches the eager forward") {
    Rng rng(5);
    const EncoderParams enc = make_mlp(7, 12, 5, rng);
    const AttributeHead head = make_attribute_head(4, 5, rng);
    for (int trial = 0; trial < 10; ++trial) {
        const Vector x = rand_vec(7, rng);
        Tape tape;
        const BoundEncoder bound = bind_encoder(tape, enc);
        const BoundAttributeHead bhead = bind_attribute_head(tape, head);
        const NodeId z = encoder_forward(tape, bound, tape.constant(x));
        const NodeId raw = encoder_forward_raw(tape, bound, tape.constant(x));
        const NodeId attrs = attribute_head_forward(tape, bhead, z);
        CHECK((tape.value(z) - encode(x, enc)).cwiseAbs().maxCoeff() < 1e-14);
        CHECK((tape.value(raw) - forward_raw(x, enc)).cwiseAbs().maxCoeff() < 1e-14);
        CHECK((tape.value(attrs) - predict_attributes(encode(x, enc), head))
                  .cwiseAbs()
                  .maxCoeff() < 1e-14);
    }
}

TEST_CASE("predict_attributes stays strictly inside (0, 1)") {
    Rng rng(9);
    const AttributeHead head = make_attribute_head(6, 4, rng);
    for (int trial = 0; trial < 20; ++trial) {
        const Vector p = predict_attributes(rand_vec(4, rng), head);
        CHECK((p.array() > 0.0).all());
        CHECK((p.array() < 1.0).all());
    }
}

TEST_CASE("validate rejects broken layer chains") {
    Rng rng(1);
    EncoderParams enc = make_mlp(6, 8, 4, rng);
    enc.validate();
    enc.layers[1].W = Matrix::Zero(4, 9);
    CHECK_THROWS_AS(enc.validate(), ShapeError);

    EncoderParams bad = make_mlp(6, 8, 4, rng);
    bad.layers[0].b = Vector::Zero(3);
    CHECK_THROWS_AS(bad.validate(), ShapeError);

    EncoderParams empty;
    CHECK_THROWS_AS(empty.validate(), ShapeError);
}

TEST_CASE("forward_raw rejects inputs of the wrong dimension") {
    Rng rng(2);
    const EncoderParams enc = make_mlp(6, 8, 4, rng);
    CHECK_THROWS_AS(forward_raw(Vector::Zero(5), enc), ShapeError);
}
