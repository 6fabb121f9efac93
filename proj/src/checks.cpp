#include "fedfm/checks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "fedfm/anchors.hpp"
#include "fedfm/dataset.hpp"
#include "fedfm/gradcheck.hpp"
#include "fedfm/losses.hpp"
#include "fedfm/metrics.hpp"
#include "fedfm/mlp.hpp"
#include "fedfm/protocol.hpp"
#include "fedfm/rng.hpp"

namespace fedfm {

namespace {

std::uint64_t fnv_of(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    Matrix m(r, c);
    for (double& v : m.values) v = g(rng);
    return m;
}

std::vector<int> random_labels(std::size_t n, std::size_t C, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> d(0, static_cast<int>(C) - 1);
    std::vector<int> out(n);
    for (int& v : out) v = d(rng);
    return out;
}

// A small random net plus batch for the gradient checks. Inputs are kept
// away from ReLU kinks by the continuous distribution; biases get a small
// positive shift so features are rarely all-zero.
struct GradInstance {
    MlpParams params;
    Matrix batch;
    std::vector<int> labels;
};

GradInstance make_grad_instance(std::uint64_t seed, std::size_t batch = 5) {
    auto rng = make_rng(seed);
    GradInstance inst;
    inst.params = MlpParams::init({4, 12, 6, 3}, splitmix64(seed));
    for (auto& b : inst.params.biases) {
        for (double& v : b) v = 0.05;
    }
    inst.batch = random_matrix(batch, 4, rng);
    inst.labels = random_labels(batch, 3, rng);
    return inst;
}

AnchorSet random_anchors(std::size_t C, std::size_t d, std::mt19937_64& rng) {
    AnchorSet a = AnchorSet::undefined(C, d);
    Matrix m = random_matrix(C, d, rng);
    a.anchors = normalize_features(m);
    std::fill(a.present.begin(), a.present.end(), 1);
    return a;
}

double check_grad(const std::string& which, std::uint64_t seed, bool fault, double& worst) {
    const GradInstance inst = make_grad_instance(seed);
    auto rng = make_rng(splitmix64(seed ^ 0xfeed));
    const AnchorSet anchors = random_anchors(3, inst.params.feature_dim(), rng);
    const double lambda = 2.5;
    const double alpha = 0.7;

    MatchVariant variant = MatchVariant::none;
    bool use_task = true;
    if (which == "grad_check.l2_match") {
        variant = MatchVariant::l2;
        use_task = false;
    } else if (which == "grad_check.cg_loss") {
        variant = MatchVariant::cg;
        use_task = false;
    } else if (which == "grad_check.combined") {
        variant = MatchVariant::cg;
    }

    auto loss_of = [&](const MlpParams& p) {
        const ForwardCache cache = mlp_forward(p, inst.batch);
        double loss = 0.0;
        if (use_task) loss += cross_entropy(cache.logits(), inst.labels).first;
        if (variant != MatchVariant::none) {
            const Matrix norm = normalize_features(cache.feature());
            const double m = variant == MatchVariant::l2
                                 ? l2_match_loss(norm, inst.labels, anchors).first
                                 : cg_loss(norm, inst.labels, anchors, alpha).first;
            loss += lambda * m;
        }
        return loss;
    };

    const ForwardCache cache = mlp_forward(inst.params, inst.batch);
    Matrix d_logits(cache.logits().rows, cache.logits().cols);
    Matrix d_feature(cache.feature().rows, cache.feature().cols);
    if (use_task) d_logits = cross_entropy(cache.logits(), inst.labels).second;
    if (variant != MatchVariant::none) {
        const Matrix norm = normalize_features(cache.feature());
        Matrix d_norm = variant == MatchVariant::l2
                            ? l2_match_loss(norm, inst.labels, anchors).second
                            : cg_loss(norm, inst.labels, anchors, alpha).second;
        for (double& v : d_norm.values) v *= lambda;
        d_feature = normalize_backward(cache.feature(), d_norm);
    }
    ParamGrads grads = mlp_backward(inst.params, cache, d_logits, d_feature);
    if (fault) grads.weights[0].values[0] += 1e-2;
    const double err = fd_check_params(loss_of, inst.params, grads);
    worst = std::max(worst, err);
    return err;
}

CheckResult grad_check(const std::string& name, const CheckOptions& opts) {
    CheckResult res;
    res.name = name;
    double worst = 0.0;
    const bool fault = opts.fault == name;
    const std::uint64_t tag = fnv_of(name);
    for (std::uint64_t i = 0; i < 5; ++i) {
        check_grad(name, derive_seed(opts.seed, {tag, i}), fault, worst);
    }
    res.pass = worst < 1e-4;
    std::ostringstream ss;
    ss << "max relative error " << worst;
    res.detail = ss.str();
    return res;
}

CheckResult anchor_equivalence_check(const CheckOptions& opts) {
    CheckResult res;
    res.name = "anchor_equivalence";
    auto rng = make_rng(derive_seed(opts.seed, {0xA1}));
    std::uniform_int_distribution<std::size_t> nclients(1, 5);
    std::uniform_int_distribution<std::size_t> nsamples(1, 12);
    std::uniform_real_distribution<double> missing(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t C = 4;
        MlpParams params = MlpParams::init({3, 8, 5, C}, rng());
        const std::size_t K = nclients(rng);
        std::vector<LabeledDataset> clients;
        for (std::size_t k = 0; k < K; ++k) {
            LabeledDataset ds;
            ds.num_classes = C;
            std::vector<int> allowed;
            for (std::size_t c = 0; c < C; ++c) {
                if (missing(rng) > 0.3) allowed.push_back(static_cast<int>(c));
            }
            if (allowed.empty()) allowed.push_back(0);
            const std::size_t n = nsamples(rng);
            ds.inputs = random_matrix(n, 3, rng);
            std::uniform_int_distribution<std::size_t> pick(0, allowed.size() - 1);
            for (std::size_t i = 0; i < n; ++i) ds.labels.push_back(allowed[pick(rng)]);
            clients.push_back(std::move(ds));
        }
        std::vector<LocalAnchorReport> reports;
        for (std::size_t k = 0; k < K; ++k) {
            reports.push_back(local_anchors(params, clients[k], static_cast<int>(k)));
        }
        const AnchorSet agg = aggregate_weighted(reports);
        const AnchorSet direct = direct_global_anchors(params, clients);
        for (std::size_t c = 0; c < C; ++c) {
            if (agg.present[c] != direct.present[c]) {
                res.pass = false;
                res.detail = "presence flags disagree";
                return res;
            }
            if (!agg.present[c]) continue;
            for (std::size_t j = 0; j < agg.feature_dim(); ++j) {
                worst = std::max(worst, std::abs(agg.anchors(c, j) - direct.anchors(c, j)));
            }
        }
    }
    if (opts.fault == res.name) worst += 1.0;
    res.pass = worst < 1e-12;
    std::ostringstream ss;
    ss << "max deviation " << worst;
    res.detail = ss.str();
    return res;
}

CheckResult anchor_optimality_check(const CheckOptions& opts) {
    CheckResult res;
    res.name = "anchor_optimality";
    auto rng = make_rng(derive_seed(opts.seed, {0xA2}));
    MlpParams params = MlpParams::init({3, 10, 6, 4}, rng());
    std::vector<LabeledDataset> clients;
    for (int k = 0; k < 3; ++k) {
        LabeledDataset ds;
        ds.num_classes = 4;
        ds.inputs = random_matrix(15, 3, rng);
        ds.labels = random_labels(15, 4, rng);
        clients.push_back(std::move(ds));
    }
    const AnchorSet best = direct_global_anchors(params, clients);
    const double phi_star = global_objective(params, best, clients, 1.0, MatchVariant::l2);
    double min_gap = std::numeric_limits<double>::infinity();
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        AnchorSet perturbed = best;
        for (double& v : perturbed.anchors.values) v += 0.05 * g(rng);
        const double phi = global_objective(params, perturbed, clients, 1.0, MatchVariant::l2);
        min_gap = std::min(min_gap, phi - phi_star);
    }
    if (opts.fault == res.name) min_gap = -1.0;
    res.pass = min_gap >= -1e-12;
    std::ostringstream ss;
    ss << "min objective gap under perturbation " << min_gap;
    res.detail = ss.str();
    return res;
}

CheckResult lemma2_check(const CheckOptions& opts) {
    CheckResult res;
    res.name = "lemma2_monotonicity";
    LabeledDataset ds = gen_gaussian_mixture(4, 8, 40, 3.0, derive_seed(opts.seed, {0xA3}));
    ClientSplit split = partition_dirichlet(ds, 4, 0.5, derive_seed(opts.seed, {0xA4}));
    FedConfig cfg;
    cfg.algorithm = Algorithm::fedfm_l2;
    cfg.clients = 4;
    cfg.rounds = 8;
    cfg.launch_round = 2;
    cfg.local_epochs = 1;
    cfg.batch_size = 16;
    cfg.lambda = 5.0;
    cfg.hidden_dims = {16, 8};
    cfg.seed = derive_seed(opts.seed, {0xA5});
    cfg.val_frac = 0.0;
    LabeledDataset empty_test;
    ExperimentResult result = run_experiment(cfg, split, empty_test);
    double worst = -std::numeric_limits<double>::infinity();
    std::size_t monitored = 0;
    for (const auto& rec : result.rounds) {
        if (std::isnan(rec.lemma2_before)) continue;
        worst = std::max(worst, rec.lemma2_after - rec.lemma2_before);
        ++monitored;
    }
    if (opts.fault == res.name) worst = 1.0;
    res.pass = monitored > 0 && worst <= 1e-9;
    std::ostringstream ss;
    ss << monitored << " monitored rounds, max increase " << worst;
    res.detail = ss.str();
    return res;
}

CheckResult kmeans_check(const CheckOptions& opts) {
    CheckResult res;
    res.name = "kmeans_sse_monotone";
    auto rng = make_rng(derive_seed(opts.seed, {0xA6}));
    Matrix pts = random_matrix(120, 4, rng);
    const KmeansResult km = kmeans_run(pts, 5, rng());
    double worst = 0.0;
    for (std::size_t i = 1; i < km.sse_per_iter.size(); ++i) {
        worst = std::max(worst, km.sse_per_iter[i] - km.sse_per_iter[i - 1]);
    }
    if (opts.fault == res.name) worst = 1.0;
    res.pass = worst <= 1e-9;
    std::ostringstream ss;
    ss << km.sse_per_iter.size() << " iterations, max SSE increase " << worst;
    res.detail = ss.str();
    return res;
}

CheckResult nmi_check(const CheckOptions& opts) {
    CheckResult res;
    res.name = "nmi_hand_cases";
    const double perfect = nmi({0, 0, 1, 1}, {0, 0, 1, 1});
    const double independent = nmi({0, 1, 0, 1}, {0, 0, 1, 1});
    const double single = nmi({0, 0, 0, 0}, {0, 0, 1, 1});
    double err = std::max({std::abs(perfect - 1.0), std::abs(independent), std::abs(single)});
    if (opts.fault == res.name) err = 1.0;
    res.pass = err < 1e-12;
    std::ostringstream ss;
    ss << "perfect=" << perfect << " independent=" << independent << " single=" << single;
    res.detail = ss.str();
    return res;
}

CheckResult silhouette_check(const CheckOptions& opts) {
    CheckResult res;
    res.name = "silhouette_bruteforce";
    auto rng = make_rng(derive_seed(opts.seed, {0xA7}));
    Matrix pts = random_matrix(50, 3, rng);
    std::vector<int> labels = random_labels(50, 4, rng);
    labels[0] = 0;
    labels[1] = 1;  // at least two categories
    double got = silhouette(pts, labels);
    const double ref = silhouette_bruteforce_reference(pts, labels);
    if (opts.fault == res.name) got += 1e-3;
    const double err = std::abs(got - ref);
    res.pass = err < 1e-12;
    std::ostringstream ss;
    ss << "deviation from reference " << err;
    res.detail = ss.str();
    return res;
}

}  // namespace

double silhouette_bruteforce_reference(const Matrix& features, const std::vector<int>& labels) {
    const std::size_t n = features.rows;
    const int C = *std::max_element(labels.begin(), labels.end()) + 1;
    auto dist = [&](std::size_t i, std::size_t j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < features.cols; ++t) {
            const double d = features(i, t) - features(j, t);
            acc += d * d;
        }
        return std::sqrt(acc);
    };
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t own_count = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (labels[j] == labels[i]) ++own_count;
        }
        if (own_count == 1) continue;
        double a = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i && labels[j] == labels[i]) a += dist(i, j);
        }
        a /= static_cast<double>(own_count - 1);
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < C; ++c) {
            if (c == labels[i]) continue;
            double s = 0.0;
            std::size_t cnt = 0;
            for (std::size_t j = 0; j < n; ++j) {
                if (labels[j] == c) {
                    s += dist(i, j);
                    ++cnt;
                }
            }
            if (cnt > 0) b = std::min(b, s / static_cast<double>(cnt));
        }
        const double m = std::max(a, b);
        if (m > 0.0) total += (b - a) / m;
    }
    return total / static_cast<double>(n);
}

std::vector<std::string> check_names() {
    return {"grad_check.cross_entropy", "grad_check.l2_match",   "grad_check.cg_loss",
            "grad_check.combined",      "anchor_equivalence",    "anchor_optimality",
            "lemma2_monotonicity",      "kmeans_sse_monotone",   "nmi_hand_cases",
            "silhouette_bruteforce"};
}

std::vector<CheckResult> run_all_checks(const CheckOptions& opts) {
    std::vector<CheckResult> out;
    out.push_back(grad_check("grad_check.cross_entropy", opts));
    out.push_back(grad_check("grad_check.l2_match", opts));
    out.push_back(grad_check("grad_check.cg_loss", opts));
    out.push_back(grad_check("grad_check.combined", opts));
    out.push_back(anchor_equivalence_check(opts));
    out.push_back(anchor_optimality_check(opts));
    out.push_back(lemma2_check(opts));
    out.push_back(kmeans_check(opts));
    out.push_back(nmi_check(opts));
    out.push_back(silhouette_check(opts));
    return out;
}

}  // namespace fedfm
