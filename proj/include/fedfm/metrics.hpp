#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fedfm/anchors.hpp"
#include "fedfm/dataset.hpp"
#include "fedfm/losses.hpp"
#include "fedfm/mlp.hpp"

namespace fedfm {

/// Fraction of argmax-correct predictions; ties go to the lowest category.
double accuracy(const MlpParams& params, const LabeledDataset& ds);

/// Global objective: the client-size-weighted sum of each client's task loss
/// plus lambda times its matching loss.
double global_objective(const MlpParams& params, const AnchorSet& anchors,
                        const std::vector<LabeledDataset>& clients, double lambda,
                        MatchVariant variant, double alpha = 1.0);

/// Evaluates the global objective (l2 variant) under the old and the new
/// anchor set; recomputing anchors from the current model must not increase
/// it, which the caller asserts.
std::pair<double, double> lemma2_monitor(const MlpParams& params, const AnchorSet& old_anchors,
                                         const AnchorSet& new_anchors,
                                         const std::vector<LabeledDataset>& clients,
                                         double lambda);

struct KmeansResult {
    std::vector<int> assignments;
    Matrix centroids;
    std::vector<double> sse_per_iter;  // within-cluster SSE after each Lloyd pass
};

/// Lloyd's algorithm with k-means++ seeding; stops after max_iter passes or
/// when no centroid moves more than 1e-8. Empty clusters are reseeded to the
/// point farthest from its centroid.
KmeansResult kmeans_run(const Matrix& features, std::size_t C, std::uint64_t seed,
                        std::size_t max_iter = 100);
std::vector<int> kmeans(const Matrix& features, std::size_t C, std::uint64_t seed,
                        std::size_t max_iter = 100);

/// Mutual information normalized by the arithmetic mean of the entropies
/// (nats); degenerate 0/0 cases return 0.
double nmi(const std::vector<int>& assignments, const std::vector<int>& labels);

/// Mean silhouette over samples, Euclidean distance; singleton-cluster
/// samples score 0.
double silhouette(const Matrix& features, const std::vector<int>& labels);

/// Normalized features plus predictions of one model on one dataset,
/// optionally capped to max_samples by seeded subsampling.
struct FeatureDump {
    Matrix features;
    std::vector<int> labels;
    std::vector<int> predicted;
};

FeatureDump dump_features(const MlpParams& params, const LabeledDataset& ds,
                          std::size_t max_samples, std::uint64_t seed);

}  // namespace fedfm
