#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "fedfm/anchors.hpp"
#include "fedfm/checks.hpp"
#include "fedfm/errors.hpp"
#include "fedfm/losses.hpp"
#include "fedfm/metrics.hpp"
#include "fedfm/rng.hpp"

using namespace fedfm;

namespace {

Matrix random_matrix(std::size_t n, std::size_t d, std::uint64_t seed, double scale = 1.0) {
    auto rng = make_rng(seed);
    std::normal_distribution<double> g(0.0, scale);
    Matrix m(n, d);
    for (double& v : m.values) v = g(rng);
    return m;
}

LabeledDataset make_ds(const Matrix& inputs, std::vector<int> labels, std::size_t C) {
    LabeledDataset ds;
    ds.inputs = inputs;
    ds.labels = std::move(labels);
    ds.num_classes = C;
    return ds;
}

// Two tight blobs far apart along the first axis.
Matrix two_blobs(std::size_t per_blob, double gap, std::uint64_t seed) {
    Matrix pts = random_matrix(2 * per_blob, 3, seed, 0.05);
    for (std::size_t i = 0; i < per_blob; ++i) pts(i, 0) += gap;
    return pts;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("accuracy: perfect, constant and partial predictors") {
    // Identity single-layer net: logits equal the inputs.
    MlpParams ident = MlpParams::zeros({2, 2});
    ident.weights[0](0, 0) = 1.0;
    ident.weights[0](1, 1) = 1.0;
    Matrix onehot(4, 2, 0.0);
    onehot(0, 0) = 1.0;
    onehot(1, 1) = 1.0;
    onehot(2, 0) = 1.0;
    onehot(3, 1) = 1.0;
    CHECK(accuracy(ident, make_ds(onehot, {0, 1, 0, 1}, 2)) == 1.0);

    // All-zero net predicts category 0 everywhere (lowest-index tie break).
    const MlpParams zero = MlpParams::zeros({2, 10});
    LabeledDataset balanced;
    balanced.num_classes = 10;
    balanced.inputs = Matrix(20, 2, 1.0);
    for (int i = 0; i < 20; ++i) balanced.labels.push_back(i % 10);
    CHECK(accuracy(zero, balanced) == doctest::Approx(0.1).epsilon(1e-15));

    // Hand-built: two of three correct.
    CHECK(accuracy(ident, make_ds(onehot, {0, 1, 1, 1}, 2)) == doctest::Approx(0.75));
    CHECK_THROWS_AS(accuracy(ident, make_ds(Matrix(0, 2), {}, 2)), ContractError);
}

TEST_CASE("global_objective: lambda 0 is the weighted mean task loss") {
    const MlpParams p = MlpParams::init({3, 6, 4, 2}, 3);
    std::vector<LabeledDataset> clients;
    clients.push_back(make_ds(random_matrix(6, 3, 30), {0, 1, 0, 1, 0, 1}, 2));
    clients.push_back(make_ds(random_matrix(2, 3, 31), {1, 0}, 2));
    const AnchorSet anchors = AnchorSet::undefined(2, 4);
    const double phi = global_objective(p, anchors, clients, 0.0, MatchVariant::l2);
    double expect = 0.0;
    const double total = 8.0;
    for (const auto& c : clients) {
        const double task = cross_entropy(mlp_forward(p, c.inputs).logits(), c.labels).first;
        expect += static_cast<double>(c.size()) / total * task;
    }
    CHECK(phi == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("global_objective: anchors at pooled means give the within-class variance") {
    const MlpParams p = MlpParams::init({3, 8, 5, 3}, 5);
    std::vector<LabeledDataset> clients;
    clients.push_back(make_ds(random_matrix(7, 3, 50), {0, 1, 2, 0, 1, 2, 0}, 3));
    clients.push_back(make_ds(random_matrix(5, 3, 51), {2, 1, 0, 2, 1}, 3));
    const AnchorSet means = direct_global_anchors(p, clients);
    const double lambda = 4.0;
    const double phi = global_objective(p, means, clients, lambda, MatchVariant::l2);
    const double phi_task = global_objective(p, means, clients, 0.0, MatchVariant::l2);

    // Direct pooled within-class variance of the normalized features.
    double var = 0.0;
    std::size_t n = 0;
    for (const auto& c : clients) {
        const Matrix f = normalize_features(mlp_forward(p, c.inputs).feature());
        for (std::size_t i = 0; i < c.size(); ++i) {
            const std::size_t cls = static_cast<std::size_t>(c.labels[i]);
            for (std::size_t j = 0; j < f.cols; ++j) {
                const double d = f(i, j) - means.anchors(cls, j);
                var += d * d;
            }
            ++n;
        }
    }
    var /= static_cast<double>(n);
    CHECK(phi - phi_task == doctest::Approx(lambda * var).epsilon(1e-10));
}

TEST_CASE("global_objective: single client equals its own breakdown total") {
    const MlpParams p = MlpParams::init({3, 6, 4, 2}, 7);
    const LabeledDataset ds = make_ds(random_matrix(5, 3, 70), {0, 1, 1, 0, 1}, 2);
    AnchorSet anchors = AnchorSet::undefined(2, 4);
    anchors.anchors = normalize_features(random_matrix(2, 4, 71));
    std::fill(anchors.present.begin(), anchors.present.end(), 1);
    const double phi = global_objective(p, anchors, {ds}, 2.0, MatchVariant::cg, 0.8);
    const ForwardCache cache = mlp_forward(p, ds.inputs);
    const CombinedLoss c =
        combined_local_loss(cache, ds.labels, &anchors, 2.0, MatchVariant::cg, 0.8);
    CHECK(phi == doctest::Approx(c.breakdown.total).epsilon(1e-12));
}

TEST_CASE("lemma2_monitor: fixed point and strict improvement") {
    const MlpParams p = MlpParams::init({3, 8, 5, 3}, 9);
    std::vector<LabeledDataset> clients;
    clients.push_back(make_ds(random_matrix(9, 3, 90), {0, 1, 2, 0, 1, 2, 0, 1, 2}, 3));
    const AnchorSet best = direct_global_anchors(p, clients);

    const auto [same_old, same_new] = lemma2_monitor(p, best, best, clients, 3.0);
    CHECK(same_old == same_new);

    AnchorSet perturbed = best;
    auto rng = make_rng(91);
    std::normal_distribution<double> g(0.0, 0.2);
    for (double& v : perturbed.anchors.values) v += g(rng);
    const auto [phi_old, phi_new] = lemma2_monitor(p, perturbed, best, clients, 3.0);
    CHECK(phi_new < phi_old);
}

TEST_CASE("kmeans: separated blobs recover the labels up to permutation") {
    const std::size_t per = 30;
    Matrix pts(3 * per, 2);
    auto rng = make_rng(101);
    std::normal_distribution<double> g(0.0, 0.1);
    for (std::size_t i = 0; i < 3 * per; ++i) {
        const std::size_t c = i / per;
        pts(i, 0) = static_cast<double>(c) * 10.0 + g(rng);
        pts(i, 1) = g(rng);
    }
    const std::vector<int> got = kmeans(pts, 3, 7);
    std::map<int, int> mapping;
    for (std::size_t i = 0; i < 3 * per; ++i) {
        const int truth = static_cast<int>(i / per);
        auto it = mapping.find(got[i]);
        if (it == mapping.end()) {
            mapping[got[i]] = truth;
        } else {
            CHECK(it->second == truth);
        }
    }
    CHECK(mapping.size() == 3);
}

TEST_CASE("kmeans: single cluster, and SSE is monotone") {
    const Matrix pts = random_matrix(40, 3, 11);
    const std::vector<int> one = kmeans(pts, 1, 3);
    for (int v : one) CHECK(v == 0);

    const KmeansResult km = kmeans_run(pts, 4, 13);
    for (std::size_t i = 1; i < km.sse_per_iter.size(); ++i) {
        CHECK(km.sse_per_iter[i] <= km.sse_per_iter[i - 1] + 1e-9);
    }
    CHECK_THROWS_AS(kmeans(Matrix(2, 3), 4, 1), ContractError);
}

TEST_CASE("kmeans: deterministic under seed") {
    const Matrix pts = random_matrix(60, 4, 17);
    CHECK(kmeans(pts, 5, 23) == kmeans(pts, 5, 23));
}

TEST_CASE("nmi: hand contingency tables") {
    CHECK(nmi({0, 0, 1, 1}, {0, 0, 1, 1}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(nmi({0, 1, 0, 1}, {0, 0, 1, 1}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(nmi({0, 0, 0, 0}, {0, 0, 1, 1}) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("nmi: invariant to relabeling and bounded") {
    auto rng = make_rng(19);
    std::uniform_int_distribution<int> lab(0, 3);
    std::vector<int> a(80), b(80);
    for (int& v : a) v = lab(rng);
    for (int& v : b) v = lab(rng);
    const double base = nmi(a, b);
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);
    std::vector<int> a_perm = a;
    for (int& v : a_perm) v = (v + 2) % 4;  // relabel categories
    CHECK(nmi(a_perm, b) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("silhouette: well-separated tight blobs score high") {
    const Matrix pts = two_blobs(20, 50.0, 23);
    std::vector<int> labels(40, 0);
    std::fill(labels.begin() + 20, labels.end(), 1);
    CHECK(silhouette(pts, labels) > 0.9);
}

TEST_CASE("silhouette: coincident points across two labels score zero") {
    const Matrix pts(10, 2, 1.0);
    std::vector<int> labels(10, 0);
    std::fill(labels.begin() + 5, labels.end(), 1);
    CHECK(silhouette(pts, labels) == 0.0);
}

TEST_CASE("silhouette: matches the brute-force reference on random points") {
    auto rng = make_rng(29);
    std::uniform_int_distribution<int> lab(0, 3);
    const Matrix pts = random_matrix(50, 3, 31);
    std::vector<int> labels(50);
    for (int& v : labels) v = lab(rng);
    labels[0] = 0;
    labels[1] = 1;
    const double got = silhouette(pts, labels);
    const double ref = silhouette_bruteforce_reference(pts, labels);
    CHECK(std::abs(got - ref) < 1e-12);
    CHECK(got >= -1.0);
    CHECK(got <= 1.0);
}

TEST_CASE("silhouette: relabeling invariance and contract error") {
    const Matrix pts = random_matrix(30, 2, 37);
    std::vector<int> labels(30);
    auto rng = make_rng(38);
    std::uniform_int_distribution<int> lab(0, 2);
    for (int& v : labels) v = lab(rng);
    labels[0] = 0;
    labels[1] = 1;
    labels[2] = 2;
    const double base = silhouette(pts, labels);
    std::vector<int> relabeled = labels;
    for (int& v : relabeled) v = (v + 1) % 3;
    CHECK(silhouette(pts, relabeled) == doctest::Approx(base).epsilon(1e-12));
    CHECK_THROWS_AS(silhouette(pts, std::vector<int>(30, 0)), ContractError);
}

TEST_CASE("dump_features: normalized rows, consistent predictions, seeded cap") {
    const MlpParams p = MlpParams::init({3, 8, 5, 3}, 41);
    const LabeledDataset ds = make_ds(random_matrix(40, 3, 42), std::vector<int>(40, 1), 3);
    const FeatureDump dump = dump_features(p, ds, 16, 43);
    CHECK(dump.features.rows == 16);
    CHECK(dump.labels.size() == 16);
    CHECK(dump.predicted.size() == 16);
    for (std::size_t i = 0; i < dump.features.rows; ++i) {
        double norm2 = 0.0;
        for (std::size_t j = 0; j < dump.features.cols; ++j) {
            norm2 += dump.features(i, j) * dump.features(i, j);
        }
        CHECK(std::abs(std::sqrt(norm2) - 1.0) < 1e-9);
    }
    const FeatureDump again = dump_features(p, ds, 16, 43);
    CHECK(again.features.values == dump.features.values);
}

}  // TEST_SUITE
