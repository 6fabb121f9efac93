#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "fedfm/errors.hpp"
#include "fedfm/gradcheck.hpp"
#include "fedfm/losses.hpp"
#include "fedfm/mlp.hpp"
#include "fedfm/rng.hpp"

using namespace fedfm;

namespace {

// Straight-line re-implementation of the forward pass, one sample at a time.
// Kept deliberately independent of the Matrix helpers.
std::vector<double> naive_forward(const MlpParams& p, const double* x) {
    std::vector<double> cur(x, x + p.input_dim());
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
        std::vector<double> next(p.layer_dims[l + 1], 0.0);
        for (std::size_t j = 0; j < next.size(); ++j) {
            double acc = p.biases[l][j];
            for (std::size_t i = 0; i < cur.size(); ++i) {
                acc += cur[i] * p.weights[l](i, j);
            }
            next[j] = acc;
        }
        if (l + 1 < p.num_layers()) {
            for (double& v : next) {
                if (v < 0.0) v = 0.0;
            }
        }
        cur = std::move(next);
    }
    return cur;
}

Matrix random_batch(std::size_t n, std::size_t d, std::uint64_t seed) {
    auto rng = make_rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix m(n, d);
    for (double& v : m.values) v = g(rng);
    return m;
}

}  // namespace

TEST_SUITE("tensor-nn") {

TEST_CASE("forward: identity single-layer net maps identity batch to itself") {
    MlpParams p = MlpParams::zeros({2, 2});
    p.weights[0](0, 0) = 1.0;
    p.weights[0](1, 1) = 1.0;
    Matrix eye(2, 2);
    eye(0, 0) = 1.0;
    eye(1, 1) = 1.0;
    const ForwardCache cache = mlp_forward(p, eye);
    CHECK(max_abs_diff(cache.logits(), eye) == 0.0);
    // Single-layer net: the feature is the input itself.
    CHECK(max_abs_diff(cache.feature(), eye) == 0.0);
}

TEST_CASE("forward: all-zero parameters give all-zero logits") {
    MlpParams p = MlpParams::zeros({3, 5, 4});
    const Matrix batch = random_batch(6, 3, 42);
    const ForwardCache cache = mlp_forward(p, batch);
    for (double v : cache.logits().values) CHECK(v == 0.0);
}

TEST_CASE("forward: matches the straight-line re-implementation to 1e-12") {
    const MlpParams p = MlpParams::init({2, 16, 8, 3}, 7);
    const Matrix batch = random_batch(9, 2, 99);
    const ForwardCache cache = mlp_forward(p, batch);
    REQUIRE(cache.logits().rows == 9);
    REQUIRE(cache.logits().cols == 3);
    REQUIRE(cache.feature().cols == 8);
    for (std::size_t i = 0; i < batch.rows; ++i) {
        const std::vector<double> expect = naive_forward(p, batch.row(i));
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(std::abs(cache.logits()(i, j) - expect[j]) < 1e-12);
        }
    }
}

TEST_CASE("forward: shape mismatch is a dimension error") {
    const MlpParams p = MlpParams::init({4, 3}, 1);
    CHECK_THROWS_AS(mlp_forward(p, Matrix(2, 5)), DimensionError);
}

TEST_CASE("backward: zero sensitivities give zero gradients") {
    const MlpParams p = MlpParams::init({3, 6, 4}, 11);
    const Matrix batch = random_batch(5, 3, 12);
    const ForwardCache cache = mlp_forward(p, batch);
    const ParamGrads g = mlp_backward(p, cache, Matrix(5, 4), Matrix(5, 6));
    for (const auto& w : g.weights) {
        for (double v : w.values) CHECK(v == 0.0);
    }
    for (const auto& b : g.biases) {
        for (double v : b) CHECK(v == 0.0);
    }
}

TEST_CASE("backward: cross-entropy gradient matches finite differences") {
    const MlpParams p = MlpParams::init({3, 10, 6, 4}, 21);
    const Matrix batch = random_batch(5, 3, 22);
    const std::vector<int> labels = {0, 3, 1, 2, 0};
    const ForwardCache cache = mlp_forward(p, batch);
    const auto [loss, d_logits] = cross_entropy(cache.logits(), labels);
    CHECK(loss > 0.0);
    const ParamGrads grads =
        mlp_backward(p, cache, d_logits, Matrix(cache.feature().rows, cache.feature().cols));
    auto loss_of = [&](const MlpParams& q) {
        return cross_entropy(mlp_forward(q, batch).logits(), labels).first;
    };
    CHECK(fd_check_params(loss_of, p, grads) < 1e-4);
}

TEST_CASE("backward: feature-matching gradient matches finite differences") {
    const MlpParams p = MlpParams::init({3, 10, 6, 4}, 31);
    const Matrix batch = random_batch(5, 3, 32);
    const std::vector<int> labels = {1, 1, 0, 2, 3};
    AnchorSet anchors = AnchorSet::undefined(4, 6);
    anchors.anchors = normalize_features(random_batch(4, 6, 33));
    std::fill(anchors.present.begin(), anchors.present.end(), 1);

    const ForwardCache cache = mlp_forward(p, batch);
    const Matrix norm = normalize_features(cache.feature());
    const auto [mloss, d_norm] = l2_match_loss(norm, labels, anchors);
    CHECK(mloss > 0.0);
    const Matrix d_feature = normalize_backward(cache.feature(), d_norm);
    const ParamGrads grads =
        mlp_backward(p, cache, Matrix(cache.logits().rows, cache.logits().cols), d_feature);
    auto loss_of = [&](const MlpParams& q) {
        const Matrix f = normalize_features(mlp_forward(q, batch).feature());
        return l2_match_loss(f, labels, anchors).first;
    };
    CHECK(fd_check_params(loss_of, p, grads) < 1e-4);
}

TEST_CASE("backward: shape mismatches are rejected") {
    const MlpParams p = MlpParams::init({3, 6, 4}, 41);
    const Matrix batch = random_batch(5, 3, 42);
    const ForwardCache cache = mlp_forward(p, batch);
    CHECK_THROWS_AS(mlp_backward(p, cache, Matrix(5, 3), Matrix(5, 6)), DimensionError);
    CHECK_THROWS_AS(mlp_backward(p, cache, Matrix(5, 4), Matrix(4, 6)), DimensionError);
}

TEST_CASE("sgd: plain step moves each parameter by exactly lr*g") {
    MlpParams p = MlpParams::init({2, 2}, 51);
    const MlpParams before = p;
    ParamGrads g = ParamGrads::zeros_like(p);
    for (double& v : g.weights[0].values) v = 0.5;
    auto [after, vel] = sgd_step(std::move(p), g, ParamGrads::zeros_like(before), 0.1, 0.0, 0.0);
    for (std::size_t i = 0; i < after.weights[0].values.size(); ++i) {
        CHECK(after.weights[0].values[i] ==
              doctest::Approx(before.weights[0].values[i] - 0.05).epsilon(1e-15));
    }
    CHECK(vel.weights[0].values[0] == 0.5);
}

TEST_CASE("sgd: zero gradients and zero momentum leave parameters untouched") {
    MlpParams p = MlpParams::init({3, 4, 2}, 61);
    const MlpParams before = p;
    auto [after, vel] = sgd_step(std::move(p), ParamGrads::zeros_like(before),
                                 ParamGrads::zeros_like(before), 0.01, 0.9, 0.0);
    CHECK(param_distance(after, before) == 0.0);
    (void)vel;
}

TEST_CASE("sgd: two momentum steps match the hand-unrolled recurrence") {
    // Scalar parameter w0, gradients g1 then g2, momentum m, weight decay wd:
    //   v1 = g1 + wd*w0;           w1 = w0 - lr*v1
    //   v2 = m*v1 + g2 + wd*w1;    w2 = w1 - lr*v2
    const double w0 = 0.7, g1 = 0.3, g2 = -0.2, lr = 0.05, m = 0.9, wd = 0.01;
    MlpParams p = MlpParams::zeros({1, 1});
    p.weights[0](0, 0) = w0;
    ParamGrads grad = ParamGrads::zeros_like(p);
    ParamGrads vel = ParamGrads::zeros_like(p);

    grad.weights[0](0, 0) = g1;
    std::tie(p, vel) = sgd_step(std::move(p), grad, std::move(vel), lr, m, wd);
    grad.weights[0](0, 0) = g2;
    std::tie(p, vel) = sgd_step(std::move(p), grad, std::move(vel), lr, m, wd);

    const double v1 = g1 + wd * w0;
    const double w1 = w0 - lr * v1;
    const double v2 = m * v1 + g2 + wd * w1;
    const double w2 = w1 - lr * v2;
    CHECK(std::abs(p.weights[0](0, 0) - w2) < 1e-12);
    CHECK(std::abs(vel.weights[0](0, 0) - v2) < 1e-12);
}

TEST_CASE("sgd: non-finite gradients raise a numeric error naming the layer") {
    MlpParams p = MlpParams::init({2, 3, 2}, 71);
    ParamGrads g = ParamGrads::zeros_like(p);
    g.weights[1](0, 0) = std::numeric_limits<double>::quiet_NaN();
    ParamGrads vel = ParamGrads::zeros_like(p);
    CHECK_THROWS_WITH_AS(sgd_step(std::move(p), g, std::move(vel), 0.1, 0.0, 0.0),
                         "sgd_step: non-finite gradient in layer 1", NumericError);
}

TEST_CASE("weighted_param_sum: identical models reproduce themselves") {
    const MlpParams m = MlpParams::init({2, 4, 3}, 81);
    const MlpParams out = weighted_param_sum({m, m, m}, {0.2, 0.5, 0.3});
    CHECK(param_distance(out, m) < 1e-15);
}

TEST_CASE("weighted_param_sum: degenerate weight picks one model exactly") {
    const MlpParams a = MlpParams::init({2, 4, 3}, 91);
    const MlpParams b = MlpParams::init({2, 4, 3}, 92);
    const MlpParams out = weighted_param_sum({a, b}, {1.0, 0.0});
    CHECK(param_distance(out, a) == 0.0);
}

TEST_CASE("weighted_param_sum: scalar hand arithmetic") {
    MlpParams a = MlpParams::zeros({1, 1});
    MlpParams b = MlpParams::zeros({1, 1});
    a.weights[0](0, 0) = 4.0;
    b.weights[0](0, 0) = 8.0;
    const MlpParams out = weighted_param_sum({a, b}, {0.25, 0.75});
    CHECK(out.weights[0](0, 0) == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("weighted_param_sum: contract violations") {
    const MlpParams a = MlpParams::init({2, 3}, 1);
    const MlpParams b = MlpParams::init({2, 4}, 1);
    CHECK_THROWS_AS(weighted_param_sum({a, a}, {0.6, 0.6}), ContractError);
    CHECK_THROWS_AS(weighted_param_sum({a, b}, {0.5, 0.5}), DimensionError);
}

TEST_CASE("weighted_param_sum: jointly permuting pairs leaves the result unchanged") {
    const MlpParams a = MlpParams::init({2, 4, 3}, 101);
    const MlpParams b = MlpParams::init({2, 4, 3}, 102);
    const MlpParams c = MlpParams::init({2, 4, 3}, 103);
    const MlpParams out1 = weighted_param_sum({a, b, c}, {0.2, 0.3, 0.5});
    const MlpParams out2 = weighted_param_sum({c, a, b}, {0.5, 0.2, 0.3});
    CHECK(param_distance(out1, out2) < 1e-15);
}

TEST_CASE("param_count: hand arithmetic") {
    CHECK(param_count(MlpParams::zeros({2, 3})) == 2 * 3 + 3);
    CHECK(param_count(MlpParams::zeros({7, 5})) == 7 * 5 + 5);
    CHECK(param_count(MlpParams::zeros({10, 32, 10})) == 10 * 32 + 32 + 32 * 10 + 10);
}

TEST_CASE("init: seeded and deterministic, bounded by the fan rule") {
    const MlpParams a = MlpParams::init({5, 8, 3}, 1234);
    const MlpParams b = MlpParams::init({5, 8, 3}, 1234);
    const MlpParams c = MlpParams::init({5, 8, 3}, 1235);
    CHECK(param_distance(a, b) == 0.0);
    CHECK(param_distance(a, c) > 0.0);
    const double bound0 = std::sqrt(6.0 / (5 + 8));
    for (double v : a.weights[0].values) CHECK(std::abs(v) <= bound0);
    for (double v : a.biases[0]) CHECK(v == 0.0);
}

TEST_CASE("combined gradient through the full net matches finite differences") {
    const MlpParams p = MlpParams::init({4, 12, 6, 3}, 111);
    const Matrix batch = random_batch(6, 4, 112);
    const std::vector<int> labels = {0, 1, 2, 0, 1, 2};
    AnchorSet anchors = AnchorSet::undefined(3, 6);
    anchors.anchors = normalize_features(random_batch(3, 6, 113));
    std::fill(anchors.present.begin(), anchors.present.end(), 1);
    const double lambda = 3.0, alpha = 0.8;

    for (MatchVariant variant : {MatchVariant::l2, MatchVariant::cg}) {
        const ForwardCache cache = mlp_forward(p, batch);
        const CombinedLoss loss =
            combined_local_loss(cache, labels, &anchors, lambda, variant, alpha);
        const ParamGrads grads = mlp_backward(p, cache, loss.d_logits, loss.d_features);
        auto loss_of = [&](const MlpParams& q) {
            const ForwardCache c2 = mlp_forward(q, batch);
            const double task = cross_entropy(c2.logits(), labels).first;
            const Matrix f = normalize_features(c2.feature());
            const double match = variant == MatchVariant::l2
                                     ? l2_match_loss(f, labels, anchors).first
                                     : cg_loss(f, labels, anchors, alpha).first;
            return task + lambda * match;
        };
        CHECK(fd_check_params(loss_of, p, grads) < 1e-4);
    }
}

}  // TEST_SUITE
