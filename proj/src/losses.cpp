#include "fedfm/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedfm/errors.hpp"

namespace fedfm {

namespace {

constexpr double kNormEps = 1e-12;

void check_labels(const std::vector<int>& labels, std::size_t n, std::size_t C,
                  const char* who) {
    if (labels.size() != n) {
        throw DimensionError(std::string(who) + ": " + std::to_string(labels.size()) +
                             " labels for " + std::to_string(n) + " rows");
    }
    for (int l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= C) {
            throw ContractError(std::string(who) + ": label " + std::to_string(l) +
                                " outside [0, " + std::to_string(C) + ")");
        }
    }
}

}  // namespace

AnchorSet AnchorSet::undefined(std::size_t C, std::size_t d) {
    AnchorSet a;
    a.anchors = Matrix(C, d);
    a.present.assign(C, 0);
    return a;
}

bool AnchorSet::any_present() const {
    return std::any_of(present.begin(), present.end(), [](std::uint8_t p) { return p != 0; });
}

std::pair<double, Matrix> cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
    const std::size_t n = logits.rows;
    const std::size_t C = logits.cols;
    check_labels(labels, n, C, "cross_entropy");
    if (n == 0) throw ContractError("cross_entropy: empty batch");

    Matrix grad(n, C);
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* z = logits.row(i);
        double zmax = z[0];
        for (std::size_t j = 1; j < C; ++j) zmax = std::max(zmax, z[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < C; ++j) denom += std::exp(z[j] - zmax);
        const std::size_t y = static_cast<std::size_t>(labels[i]);
        loss += (std::log(denom) - (z[y] - zmax)) * inv_n;
        double* g = grad.row(i);
        for (std::size_t j = 0; j < C; ++j) {
            g[j] = std::exp(z[j] - zmax) / denom * inv_n;
        }
        g[y] -= inv_n;
    }
    return {loss, std::move(grad)};
}

Matrix normalize_features(const Matrix& features) {
    Matrix out = features;
    for (std::size_t i = 0; i < out.rows; ++i) {
        double* r = out.row(i);
        double norm2 = 0.0;
        for (std::size_t j = 0; j < out.cols; ++j) norm2 += r[j] * r[j];
        const double norm = std::sqrt(norm2);
        if (norm < kNormEps) continue;
        for (std::size_t j = 0; j < out.cols; ++j) r[j] /= norm;
    }
    return out;
}

Matrix normalize_backward(const Matrix& raw, const Matrix& d_normalized) {
    if (!raw.same_shape(d_normalized)) {
        throw DimensionError("normalize_backward: shape mismatch");
    }
    Matrix out(raw.rows, raw.cols);
    for (std::size_t i = 0; i < raw.rows; ++i) {
        const double* x = raw.row(i);
        const double* g = d_normalized.row(i);
        double* o = out.row(i);
        double norm2 = 0.0;
        for (std::size_t j = 0; j < raw.cols; ++j) norm2 += x[j] * x[j];
        const double norm = std::sqrt(norm2);
        if (norm < kNormEps) {
            std::copy(g, g + raw.cols, o);
            continue;
        }
        // d/dx of x/||x|| applied to g: (g - y (y.g)) / ||x||, y = x/||x||.
        double dot = 0.0;
        for (std::size_t j = 0; j < raw.cols; ++j) dot += x[j] * g[j];
        dot /= norm2;
        for (std::size_t j = 0; j < raw.cols; ++j) {
            o[j] = (g[j] - x[j] * dot) / norm;
        }
    }
    return out;
}

std::pair<double, Matrix> l2_match_loss(const Matrix& features, const std::vector<int>& labels,
                                        const AnchorSet& anchors) {
    const std::size_t n = features.rows;
    const std::size_t d = features.cols;
    check_labels(labels, n, anchors.num_categories(), "l2_match_loss");
    if (anchors.feature_dim() != d) {
        throw DimensionError("l2_match_loss: anchor dim " + std::to_string(anchors.feature_dim()) +
                             " vs feature dim " + std::to_string(d));
    }
    if (n == 0) throw ContractError("l2_match_loss: empty batch");

    Matrix grad(n, d);
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = static_cast<std::size_t>(labels[i]);
        if (!anchors.present[c]) continue;
        const double* f = features.row(i);
        const double* a = anchors.anchors.row(c);
        double* g = grad.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = f[j] - a[j];
            loss += diff * diff * inv_n;
            g[j] = 2.0 * diff * inv_n;
        }
    }
    return {loss, std::move(grad)};
}

std::pair<double, Matrix> cg_loss(const Matrix& features, const std::vector<int>& labels,
                                  const AnchorSet& anchors, double alpha) {
    const std::size_t n = features.rows;
    const std::size_t d = features.cols;
    const std::size_t C = anchors.num_categories();
    check_labels(labels, n, C, "cg_loss");
    if (anchors.feature_dim() != d) {
        throw DimensionError("cg_loss: anchor dim mismatch");
    }
    if (alpha <= 0.0) throw ContractError("cg_loss: alpha must be positive");
    if (n == 0) throw ContractError("cg_loss: empty batch");

    std::vector<std::size_t> defined;
    for (std::size_t c = 0; c < C; ++c) {
        if (anchors.present[c]) defined.push_back(c);
    }
    Matrix grad(n, d);
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    if (defined.empty()) return {0.0, std::move(grad)};

    std::vector<double> sims(defined.size());
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t y = static_cast<std::size_t>(labels[i]);
        if (!anchors.present[y]) continue;
        const double* f = features.row(i);
        double smax = -1e300;
        for (std::size_t u = 0; u < defined.size(); ++u) {
            const double* a = anchors.anchors.row(defined[u]);
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += a[j] * f[j];
            sims[u] = dot / alpha;
            smax = std::max(smax, sims[u]);
        }
        double denom = 0.0;
        for (double& s : sims) {
            s = std::exp(s - smax);
            denom += s;
        }
        double target_p = 0.0;
        double* g = grad.row(i);
        for (std::size_t u = 0; u < defined.size(); ++u) {
            const double p = sims[u] / denom;
            const std::size_t c = defined[u];
            if (c == y) target_p = p;
            // d/df of -log s_y: sum_i p_i a_i / alpha - a_y / alpha.
            const double* a = anchors.anchors.row(c);
            const double coef = (p - (c == y ? 1.0 : 0.0)) * inv_n / alpha;
            for (std::size_t j = 0; j < d; ++j) g[j] += coef * a[j];
        }
        loss -= std::log(std::max(target_p, 1e-300)) * inv_n;
    }
    return {loss, std::move(grad)};
}

CombinedLoss combined_local_loss(const ForwardCache& cache, const std::vector<int>& labels,
                                 const AnchorSet* anchors, double lambda, MatchVariant variant,
                                 double alpha) {
    if (lambda < 0.0) throw ConfigError("combined_local_loss: negative lambda");
    CombinedLoss out;
    auto [task, d_logits] = cross_entropy(cache.logits(), labels);
    out.d_logits = std::move(d_logits);
    out.breakdown.task_loss = task;
    out.breakdown.lambda = lambda;

    if (variant == MatchVariant::none || anchors == nullptr || anchors->all_absent()) {
        out.d_features = Matrix(cache.feature().rows, cache.feature().cols);
        out.breakdown.match_loss = 0.0;
        out.breakdown.total = task;
        return out;
    }

    const Matrix normalized = normalize_features(cache.feature());
    double match = 0.0;
    Matrix d_norm;
    if (variant == MatchVariant::l2) {
        std::tie(match, d_norm) = l2_match_loss(normalized, labels, *anchors);
    } else {
        std::tie(match, d_norm) = cg_loss(normalized, labels, *anchors, alpha);
    }
    for (double& v : d_norm.values) v *= lambda;
    out.d_features = normalize_backward(cache.feature(), d_norm);
    out.breakdown.match_loss = match;
    out.breakdown.total = task + lambda * match;
    return out;
}

}  // namespace fedfm
