#include <cmath>

#include "doctest.h"
#include "sense/rng.hpp"
#include "sense/toy_model.hpp"

using namespace sense;

namespace {

ToyImage constant_image(Index n, double r, double g, double b) {
    ToyImage img = ToyImage::zeros(n, n);
    img.r.setConstant(r);
    img.g.setConstant(g);
    img.b.setConstant(b);
    return img;
}

}  // namespace

TEST_CASE("features of a constant image are color, coordinates and zero std") {
    const ToyImage img = constant_image(16, 0.2, 0.5, 0.8);
    const Matrix f = compute_features(img);
    REQUIRE(f.rows() == 16 * 16);
    REQUIRE(f.cols() == kToyFeatureDim);
    for (Index row = 0; row < f.rows(); ++row) {
        CHECK(f(row, 0) == 0.2);
        CHECK(f(row, 1) == 0.5);
        CHECK(f(row, 2) == 0.8);
        // Box means equal the constant exactly up to summation rounding.
        CHECK(f(row, 5) == doctest::Approx(0.2).epsilon(1e-12));
        CHECK(f(row, 6) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(f(row, 7) == doctest::Approx(0.8).epsilon(1e-12));
        CHECK(f(row, 8) == doctest::Approx(0.0).epsilon(1e-7));
        CHECK(f(row, 9) == doctest::Approx(0.0).epsilon(1e-7));
        CHECK(f(row, 10) == doctest::Approx(0.0).epsilon(1e-7));
    }
    // Coordinates span [0,1] corner to corner.
    CHECK(f(0, 3) == 0.0);
    CHECK(f(0, 4) == 0.0);
    CHECK(f(16 * 16 - 1, 3) == 1.0);
    CHECK(f(16 * 16 - 1, 4) == 1.0);
}

TEST_CASE("box statistics replicate edges") {
    ToyImage img = constant_image(8, 0.0, 0.0, 0.0);
    img.r(0, 0) = 0.9;  // lone bright corner
    const Matrix f = compute_features(img);
    // At the corner the 3x3 window replicates the corner pixel 4 times.
    CHECK(f(0, 5) == doctest::Approx(4.0 * 0.9 / 9.0).epsilon(1e-12));
    // Two steps away the window no longer sees it.
    CHECK(f(2 * 8 + 2, 5) == doctest::Approx(0.0));
}

TEST_CASE("features are finite on generated scenes") {
    const ShapesSample s = generate_shapes(WorldConfig::synthetic_stream(), 5);
    const Matrix f = compute_features(s.image);
    CHECK(f.allFinite());
    CHECK(f.col(3).minCoeff() >= 0.0);
    CHECK(f.col(3).maxCoeff() <= 1.0);
    CHECK(f.col(4).minCoeff() >= 0.0);
    CHECK(f.col(4).maxCoeff() <= 1.0);
}

TEST_CASE("zero-initialized model predicts the uniform distribution") {
    const LinearSoftmaxModel model(5);
    const Matrix f = compute_features(constant_image(8, 0.3, 0.3, 0.3));
    const Matrix p = model.predict(f);
    for (Index i = 0; i < p.rows(); ++i)
        for (Index j = 0; j < p.cols(); ++j) CHECK(p(i, j) == doctest::Approx(0.2).epsilon(1e-12));
    const Matrix pt = model.predict_teacher(f);
    CHECK(pt == p);
}

TEST_CASE("softmax rows are simplex points even for extreme weights") {
    LinearSoftmaxModel model(4);
    Rng rng = Rng::stream(81, 1);
    for (Index i = 0; i < model.weights.rows(); ++i)
        for (Index j = 0; j < model.weights.cols(); ++j)
            model.weights(i, j) = rng.uniform(-200.0, 200.0);
    const Matrix f = compute_features(constant_image(8, 0.9, 0.1, 0.5));
    const Matrix p = model.predict(f);
    CHECK(p.allFinite());
    CHECK(p.minCoeff() >= 0.0);
    for (Index i = 0; i < p.rows(); ++i) CHECK(p.row(i).sum() == doctest::Approx(1.0));
}

TEST_CASE("gradient step moves parameters and ema lags") {
    LinearSoftmaxModel model(3);
    Matrix gw = Matrix::Constant(kToyFeatureDim, 3, 0.1);
    Vector gb = Vector::Constant(3, 0.2);
    model.apply_gradient(gw, gb, 1.0);
    CHECK(model.weights(0, 0) == doctest::Approx(-0.1));
    CHECK(model.bias[0] == doctest::Approx(-0.2));
    CHECK(model.ema_weights(0, 0) == 0.0);
    model.ema_update(0.9);
    CHECK(model.ema_weights(0, 0) == doctest::Approx(-0.01));
}

TEST_CASE("ema converges geometrically to constant parameters") {
    LinearSoftmaxModel model(3);
    model.weights.setConstant(1.0);
    model.bias.setConstant(1.0);
    const double momentum = 0.95;
    double expected_gap = 1.0;
    for (int t = 0; t < 40; ++t) {
        model.ema_update(momentum);
        expected_gap *= momentum;
        CHECK(std::abs(model.ema_weights(3, 1) - 1.0) ==
              doctest::Approx(expected_gap).epsilon(1e-12));
        CHECK(std::abs(model.ema_bias[2] - 1.0) ==
              doctest::Approx(expected_gap).epsilon(1e-12));
    }
    CHECK_THROWS_AS(model.ema_update(1.0), std::invalid_argument);
}

TEST_CASE("poly schedule hits its endpoints and never increases") {
    CHECK(poly_lr(4.0, 0, 2000, 0.9) == 4.0);
    CHECK(poly_lr(4.0, 2000, 2000, 0.9) == 0.0);
    double prev = poly_lr(4.0, 0, 2000, 0.9);
    for (int step = 1; step <= 2000; step += 7) {
        const double lr = poly_lr(4.0, step, 2000, 0.9);
        CHECK(lr <= prev);
        CHECK(lr >= 0.0);
        prev = lr;
    }
    // power 0 keeps the rate constant
    CHECK(poly_lr(2.0, 1234, 2000, 0.0) == 2.0);
}
