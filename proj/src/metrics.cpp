#include "fedfm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "fedfm/errors.hpp"
#include "fedfm/rng.hpp"

namespace fedfm {

double accuracy(const MlpParams& params, const LabeledDataset& ds) {
    if (ds.size() == 0) throw ContractError("accuracy: empty dataset");
    const ForwardCache cache = mlp_forward(params, ds.inputs);
    const Matrix& logits = cache.logits();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double* r = logits.row(i);
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols; ++j) {
            if (r[j] > r[best]) best = j;
        }
        if (static_cast<int>(best) == ds.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(logits.rows);
}

double global_objective(const MlpParams& params, const AnchorSet& anchors,
                        const std::vector<LabeledDataset>& clients, double lambda,
                        MatchVariant variant, double alpha) {
    std::size_t total = 0;
    for (const auto& c : clients) total += c.size();
    if (total == 0) throw ContractError("global_objective: no data");
    double phi = 0.0;
    for (const auto& client : clients) {
        if (client.size() == 0) continue;
        const double p_k = static_cast<double>(client.size()) / static_cast<double>(total);
        const ForwardCache cache = mlp_forward(params, client.inputs);
        const CombinedLoss loss =
            combined_local_loss(cache, client.labels, &anchors, lambda, variant, alpha);
        phi += p_k * loss.breakdown.total;
    }
    return phi;
}

std::pair<double, double> lemma2_monitor(const MlpParams& params, const AnchorSet& old_anchors,
                                         const AnchorSet& new_anchors,
                                         const std::vector<LabeledDataset>& clients,
                                         double lambda) {
    const double phi_old =
        global_objective(params, old_anchors, clients, lambda, MatchVariant::l2);
    const double phi_new =
        global_objective(params, new_anchors, clients, lambda, MatchVariant::l2);
    return {phi_old, phi_new};
}

namespace {

double sq_dist(const double* a, const double* b, std::size_t d) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double diff = a[j] - b[j];
        acc += diff * diff;
    }
    return acc;
}

}  // namespace

KmeansResult kmeans_run(const Matrix& features, std::size_t C, std::uint64_t seed,
                        std::size_t max_iter) {
    const std::size_t n = features.rows;
    const std::size_t d = features.cols;
    if (C == 0) throw ContractError("kmeans: C must be positive");
    if (n < C) throw ContractError("kmeans: fewer samples than clusters");

    auto rng = make_rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // k-means++ seeding.
    Matrix centroids(C, d);
    std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
    {
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        const std::size_t first = pick(rng);
        std::copy(features.row(first), features.row(first) + d, centroids.row(0));
    }
    for (std::size_t c = 1; c < C; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d2 = sq_dist(features.row(i), centroids.row(c - 1), d);
            min_d2[i] = std::min(min_d2[i], d2);
            total += min_d2[i];
        }
        std::size_t chosen = 0;
        if (total > 0.0) {
            const double u = unit(rng) * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += min_d2[i];
                if (acc >= u) {
                    chosen = i;
                    break;
                }
            }
        } else {
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            chosen = pick(rng);
        }
        std::copy(features.row(chosen), features.row(chosen) + d, centroids.row(c));
    }

    KmeansResult res;
    res.assignments.assign(n, 0);
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        // Assign each point to the nearest centroid (ties to the lowest index).
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d2 = sq_dist(features.row(i), centroids.row(0), d);
            for (std::size_t c = 1; c < C; ++c) {
                const double d2 = sq_dist(features.row(i), centroids.row(c), d);
                if (d2 < best_d2) {
                    best_d2 = d2;
                    best = c;
                }
            }
            res.assignments[i] = static_cast<int>(best);
        }
        Matrix next(C, d);
        std::vector<std::size_t> counts(C, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = static_cast<std::size_t>(res.assignments[i]);
            const double* f = features.row(i);
            double* ctr = next.row(c);
            for (std::size_t j = 0; j < d; ++j) ctr[j] += f[j];
            ++counts[c];
        }
        for (std::size_t c = 0; c < C; ++c) {
            if (counts[c] == 0) {
                // Reseed an empty cluster at the point farthest from its centroid.
                std::size_t far = 0;
                double far_d2 = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t a = static_cast<std::size_t>(res.assignments[i]);
                    const double d2 = sq_dist(features.row(i), centroids.row(a), d);
                    if (d2 > far_d2) {
                        far_d2 = d2;
                        far = i;
                    }
                }
                std::copy(features.row(far), features.row(far) + d, next.row(c));
                continue;
            }
            double* ctr = next.row(c);
            const double inv = 1.0 / static_cast<double>(counts[c]);
            for (std::size_t j = 0; j < d; ++j) ctr[j] *= inv;
        }
        double sse = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sse += sq_dist(features.row(i),
                           next.row(static_cast<std::size_t>(res.assignments[i])), d);
        }
        res.sse_per_iter.push_back(sse);
        double moved = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            moved = std::max(moved, std::sqrt(sq_dist(centroids.row(c), next.row(c), d)));
        }
        centroids = std::move(next);
        if (moved < 1e-8) break;
    }
    // Final assignment against the settled centroids.
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        double best_d2 = sq_dist(features.row(i), centroids.row(0), d);
        for (std::size_t c = 1; c < C; ++c) {
            const double d2 = sq_dist(features.row(i), centroids.row(c), d);
            if (d2 < best_d2) {
                best_d2 = d2;
                best = c;
            }
        }
        res.assignments[i] = static_cast<int>(best);
    }
    res.centroids = std::move(centroids);
    return res;
}

std::vector<int> kmeans(const Matrix& features, std::size_t C, std::uint64_t seed,
                        std::size_t max_iter) {
    return kmeans_run(features, C, seed, max_iter).assignments;
}

double nmi(const std::vector<int>& assignments, const std::vector<int>& labels) {
    if (assignments.size() != labels.size()) {
        throw DimensionError("nmi: length mismatch");
    }
    const std::size_t n = assignments.size();
    if (n == 0) throw ContractError("nmi: empty input");
    const int ka = *std::max_element(assignments.begin(), assignments.end()) + 1;
    const int kb = *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<std::vector<std::size_t>> table(static_cast<std::size_t>(ka),
                                                std::vector<std::size_t>(static_cast<std::size_t>(kb), 0));
    std::vector<std::size_t> ra(static_cast<std::size_t>(ka), 0);
    std::vector<std::size_t> rb(static_cast<std::size_t>(kb), 0);
    for (std::size_t i = 0; i < n; ++i) {
        ++table[static_cast<std::size_t>(assignments[i])][static_cast<std::size_t>(labels[i])];
        ++ra[static_cast<std::size_t>(assignments[i])];
        ++rb[static_cast<std::size_t>(labels[i])];
    }
    const double dn = static_cast<double>(n);
    double mi = 0.0;
    for (std::size_t a = 0; a < ra.size(); ++a) {
        for (std::size_t b = 0; b < rb.size(); ++b) {
            if (table[a][b] == 0) continue;
            const double pab = static_cast<double>(table[a][b]) / dn;
            const double pa = static_cast<double>(ra[a]) / dn;
            const double pb = static_cast<double>(rb[b]) / dn;
            mi += pab * std::log(pab / (pa * pb));
        }
    }
    auto entropy = [&](const std::vector<std::size_t>& r) {
        double h = 0.0;
        for (std::size_t c : r) {
            if (c == 0) continue;
            const double p = static_cast<double>(c) / dn;
            h -= p * std::log(p);
        }
        return h;
    };
    const double denom = 0.5 * (entropy(ra) + entropy(rb));
    if (denom <= 0.0) return 0.0;
    const double v = mi / denom;
    return std::clamp(v, 0.0, 1.0);
}

double silhouette(const Matrix& features, const std::vector<int>& labels) {
    const std::size_t n = features.rows;
    if (labels.size() != n) throw DimensionError("silhouette: length mismatch");
    if (n == 0) throw ContractError("silhouette: empty input");
    const int C = *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<std::size_t> sizes(static_cast<std::size_t>(C), 0);
    for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
    std::size_t nonempty = 0;
    for (std::size_t s : sizes) nonempty += (s > 0);
    if (nonempty < 2) throw ContractError("silhouette: need at least 2 categories");

    double total = 0.0;
    std::vector<double> mean_to(static_cast<std::size_t>(C));
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t own = static_cast<std::size_t>(labels[i]);
        if (sizes[own] == 1) continue;  // singleton scores 0
        std::fill(mean_to.begin(), mean_to.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dist = std::sqrt(sq_dist(features.row(i), features.row(j), features.cols));
            mean_to[static_cast<std::size_t>(labels[j])] += dist;
        }
        const double a = mean_to[own] / static_cast<double>(sizes[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < static_cast<std::size_t>(C); ++c) {
            if (c == own || sizes[c] == 0) continue;
            b = std::min(b, mean_to[c] / static_cast<double>(sizes[c]));
        }
        const double m = std::max(a, b);
        total += m > 0.0 ? (b - a) / m : 0.0;
    }
    return total / static_cast<double>(n);
}

FeatureDump dump_features(const MlpParams& params, const LabeledDataset& ds,
                          std::size_t max_samples, std::uint64_t seed) {
    if (ds.size() == 0) throw ContractError("dump_features: empty dataset");
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (max_samples > 0 && ds.size() > max_samples) {
        auto rng = make_rng(seed);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(max_samples);
        std::sort(idx.begin(), idx.end());
    }
    const LabeledDataset sub = ds.select(idx);
    const ForwardCache cache = mlp_forward(params, sub.inputs);
    FeatureDump dump;
    dump.features = normalize_features(cache.feature());
    dump.labels = sub.labels;
    const Matrix& logits = cache.logits();
    dump.predicted.reserve(logits.rows);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double* r = logits.row(i);
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols; ++j) {
            if (r[j] > r[best]) best = j;
        }
        dump.predicted.push_back(static_cast<int>(best));
    }
    return dump;
}

}  // namespace fedfm
