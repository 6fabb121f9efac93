#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fedfm/matrix.hpp"
#include "fedfm/mlp.hpp"

namespace fedfm {

/// Category-wise anchor vectors (C x d). Categories without data carry an
/// all-zero row with present=false; such rows never enter any arithmetic.
struct AnchorSet {
    Matrix anchors;                     // C x d
    std::vector<std::uint8_t> present;  // per category
    long round_tag = -1;

    static AnchorSet undefined(std::size_t C, std::size_t d);
    std::size_t num_categories() const { return anchors.rows; }
    std::size_t feature_dim() const { return anchors.cols; }
    bool any_present() const;
    bool all_absent() const { return !any_present(); }
};

struct LossBreakdown {
    double task_loss = 0.0;
    double match_loss = 0.0;
    double total = 0.0;
    double lambda = 0.0;
};

enum class MatchVariant { none, l2, cg };

/// Mean softmax cross-entropy over the batch and its gradient,
/// (softmax - onehot) / batch.
std::pair<double, Matrix> cross_entropy(const Matrix& logits, const std::vector<int>& labels);

/// Rows scaled to unit l2 norm; rows with norm below 1e-12 pass through.
Matrix normalize_features(const Matrix& features);

/// Pulls a gradient w.r.t. normalized rows back through x -> x / ||x||.
/// Rows that passed through normalization untouched use the identity.
Matrix normalize_backward(const Matrix& raw, const Matrix& d_normalized);

/// Mean squared distance between each (already normalized) feature row and
/// the anchor of its label; samples whose anchor is undefined contribute
/// zero loss and zero gradient. Anchors are constants.
std::pair<double, Matrix> l2_match_loss(const Matrix& features, const std::vector<int>& labels,
                                        const AnchorSet& anchors);

/// Contrastive guiding: softmax over anchor inner products scaled by 1/alpha,
/// cross-entropy against the true category. Undefined-anchor categories are
/// excluded from the softmax; samples with an undefined target contribute zero.
std::pair<double, Matrix> cg_loss(const Matrix& features, const std::vector<int>& labels,
                                  const AnchorSet& anchors, double alpha);

struct CombinedLoss {
    LossBreakdown breakdown;
    Matrix d_logits;    // gradient for the output layer
    Matrix d_features;  // gradient for the raw (pre-normalization) features
};

/// Task loss plus lambda times the matching loss of the chosen variant.
/// The matching gradient is propagated through the normalization map; with
/// variant none the feature gradient is all-zero and anchors may be null.
CombinedLoss combined_local_loss(const ForwardCache& cache, const std::vector<int>& labels,
                                 const AnchorSet* anchors, double lambda, MatchVariant variant,
                                 double alpha);

}  // namespace fedfm
