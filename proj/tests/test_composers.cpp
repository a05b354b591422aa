#include "doctest.h"

#include <cmath>

#include "cr/composers.hpp"
#include "cr/error.hpp"
#include "cr/rng.hpp"
#include "cr/vecmath.hpp"

using namespace cr;

namespace {

Vector unit_vec(Index n, Rng& rng) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = rng.normal();
    return l2_normalize(v);
}

constexpr ComposerKind kAllKinds[] = {
    ComposerKind::image_only,  ComposerKind::text_only,       ComposerKind::mean,
    ComposerKind::concat_mlp,  ComposerKind::residual_gating, ComposerKind::adaptive,
};

}  // namespace

TEST_CASE("composer kind names round-trip") {
    for (const ComposerKind kind : kAllKinds)
        CHECK(composer_kind_from_string(to_string(kind)) == kind);
    CHECK_THROWS_AS(composer_kind_from_string("bogus"), ValidationError);
}

TEST_CASE("passthrough composers return their input unchanged") {
    Rng rng(11);
    const Vector zi = unit_vec(6, rng);
    const Vector zt = unit_vec(6, rng);
    Composer img;
    img.kind = ComposerKind::image_only;
    Composer txt;
    txt.kind = ComposerKind::text_only;
    CHECK(compose(img, zi, zt).z == zi);
    CHECK(compose(txt, zi, zt).z == zt);
    CHECK(!compose(img, zi, zt).predicted.has_value());
}

TEST_CASE("mean composition is symmetric and unit norm") {
    Rng rng(12);
    for (int trial = 0; trial < 25; ++trial) {
        const Vector zi = unit_vec(5, rng);
        const Vector zt = unit_vec(5, rng);
        const Vector z = compose_mean(zi, zt);
        CHECK(std::abs(z.norm() - 1.0) < 1e-12);
        CHECK((z - compose_mean(zt, zi)).cwiseAbs().maxCoeff() < 1e-15);
    }
    const Vector zi = unit_vec(5, rng);
    CHECK((compose_mean(zi, zi) - zi).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("adaptive composer emits simplex weights") {
    Rng rng(13);
    const Composer comp = make_composer(ComposerKind::adaptive, 6, rng);
    for (int trial = 0; trial < 25; ++trial) {
        const ComposeResult r = compose(comp, unit_vec(6, rng), unit_vec(6, rng));
        REQUIRE(r.predicted.has_value());
        const double wi = r.predicted->w_image;
        const double wt = r.predicted->w_text;
        CHECK(wi > 0.0);
        CHECK(wt > 0.0);
        CHECK(std::abs(wi + wt - 1.0) < 1e-12);
        CHECK(std::abs(r.z.norm() - 1.0) < 1e-12);
    }
}

TEST_CASE("make_composer is deterministic per seed") {
    for (const ComposerKind kind : kAllKinds) {
        Rng a(77);
        Rng b(77);
        const Composer ca = make_composer(kind, 5, a);
        const Composer cb = make_composer(kind, 5, b);
        Rng probe(78);
        const Vector zi = unit_vec(5, probe);
        const Vector zt = unit_vec(5, probe);
        CHECK(compose(ca, zi, zt).z == compose(cb, zi, zt).z);
    }
}

TEST_CASE("tape composition matches the eager path for every kind") {
    Rng rng(14);
    for (const ComposerKind kind : kAllKinds) {
        const Composer comp = make_composer(kind, 6, rng);
        for (int trial = 0; trial < 8; ++trial) {
            const Vector zi = unit_vec(6, rng);
            const Vector zt = unit_vec(6, rng);
            const ComposeResult eager = compose(comp, zi, zt);
            Tape tape;
            const BoundComposer bound = bind_composer(tape, comp);
            const ComposeNodes nodes =
                compose_forward(tape, bound, tape.constant(zi), tape.constant(zt));
            CHECK((tape.value(nodes.z) - eager.z).cwiseAbs().maxCoeff() < 1e-13);
            if (kind == ComposerKind::adaptive) {
                REQUIRE(nodes.w.has_value());
                const Vector& w = tape.value(*nodes.w);
                CHECK(w[0] == doctest::Approx(eager.predicted->w_image).epsilon(1e-13));
                CHECK(w[1] == doctest::Approx(eager.predicted->w_text).epsilon(1e-13));
            } else {
                CHECK(!nodes.w.has_value());
            }
        }
    }
}

TEST_CASE("compose validates embedding dimensions") {
    Rng rng(15);
    const Composer comp = make_composer(ComposerKind::mean, 6, rng);
    CHECK_THROWS_AS(compose(comp, Vector::Ones(6), Vector::Ones(5)), ShapeError);

    const Composer mlp = make_composer(ComposerKind::concat_mlp, 6, rng);
    CHECK_THROWS_AS(compose(mlp, Vector::Ones(4), Vector::Ones(4)), ShapeError);
}

TEST_CASE("validate rejects a composer missing its parameter block") {
    Composer c;
    c.kind = ComposerKind::adaptive;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c.kind = ComposerKind::concat_mlp;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c.kind = ComposerKind::mean;
    c.validate();

    Rng rng(16);
    Composer stray = make_composer(ComposerKind::mean, 6, rng);
    stray.adaptive = AdaptiveComposerParams{Matrix::Zero(2, 12), Vector::Zero(2)};
    CHECK_THROWS_AS(stray.validate(), ValidationError);
}
