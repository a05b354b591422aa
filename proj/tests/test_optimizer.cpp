#include "doctest.h"

#include <cmath>

#include "cr/error.hpp"
#include "cr/optimizer.hpp"

using namespace cr;

TEST_CASE("first step matches the closed form") {
    // With m_hat = g and v_hat = g^2 after bias correction, step one moves by
    // lr * g / (|g| + eps) regardless of the gradient magnitude.
    AdamOptimizer adam;
    Vector p(1);
    p << 1.0;
    Vector g(1);
    g << 1.0;
    adam.step("w", 0.1, g, p);
    CHECK(p[0] == doctest::Approx(0.9000000009999999).epsilon(1e-15));

    Vector q(1);
    q << 1.0;
    Vector big(1);
    big << 500.0;
    AdamOptimizer other;
    other.step("w", 0.1, big, q);
    CHECK(q[0] == doctest::Approx(0.9).epsilon(1e-8));
}

TEST_CASE("zero gradient leaves the parameter bitwise unchanged") {
    AdamOptimizer adam;
    Vector p(3);
    p << 0.5, -1.25, 3.0;
    const Vector before = p;
    for (int s = 0; s < 5; ++s) adam.step("w", 0.01, Vector::Zero(3), p);
    CHECK(p == before);

    // Even after real gradients built up moment state, a zero gradient decays
    // the moments but must never be amplified above the learning rate.
    Vector g(3);
    g << 1.0, 1.0, 1.0;
    adam.step("w", 0.01, g, p);
    const Vector after_real = p;
    adam.step("w", 0.01, Vector::Zero(3), p);
    CHECK((p - after_real).cwiseAbs().maxCoeff() <= 0.01 + 1e-12);
}

TEST_CASE("per-name state is isolated") {
    AdamOptimizer adam;
    Vector a(1), b(1), g(1);
    a << 1.0;
    b << 1.0;
    g << 1.0;
    // Warm up 'a' only; 'b' must still behave like a first step afterwards.
    for (int s = 0; s < 10; ++s) adam.step("a", 0.1, g, a);
    adam.step("b", 0.1, g, b);
    CHECK(b[0] == doctest::Approx(0.9000000009999999).epsilon(1e-15));
}

TEST_CASE("descent on a quadratic reaches the minimum") {
    AdamOptimizer adam;
    Vector p(2);
    p << 4.0, -3.0;
    for (int s = 0; s < 2000; ++s) {
        const Vector g = 2.0 * p;
        adam.step("theta", 0.01, g, p);
    }
    CHECK(p.cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("step rejects bad input") {
    AdamOptimizer adam;
    Vector p(2);
    p << 1.0, 2.0;
    CHECK_THROWS_AS(adam.step("w", 0.1, Vector::Zero(3), p), ShapeError);
    CHECK_THROWS_AS(adam.step("w", -0.1, Vector::Zero(2), p), ValidationError);
    adam.step("w", 0.1, Vector::Zero(2), p);
    Vector p3(3);
    p3 << 1.0, 2.0, 3.0;
    CHECK_THROWS_AS(adam.step("w", 0.1, Vector::Zero(3), p3), ShapeError);

    CHECK_THROWS_AS(AdamOptimizer({1.0, 0.999, 1e-8}), ValidationError);
    CHECK_THROWS_AS(AdamOptimizer({0.9, 0.999, 0.0}), ValidationError);
}

TEST_CASE("learning rate decays linearly to 10 percent") {
    CHECK(linear_decay_lr(0.5, 0, 100) == 0.5);
    CHECK(linear_decay_lr(0.5, 99, 100) == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(linear_decay_lr(0.5, 0, 1) == 0.5);
    // Midpoint sits halfway between the endpoints.
    CHECK(linear_decay_lr(1.0, 50, 101) == doctest::Approx(0.55).epsilon(1e-12));
    CHECK_THROWS_AS(linear_decay_lr(0.5, 100, 100), ValidationError);
    CHECK_THROWS_AS(linear_decay_lr(0.5, -1, 100), ValidationError);
    CHECK_THROWS_AS(linear_decay_lr(0.0, 0, 100), ValidationError);
}
