#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedfm/matrix.hpp"

namespace fedfm {

/// Labeled samples: inputs is n x d_in, labels are category indices in [0, C).
struct LabeledDataset {
    Matrix inputs;
    std::vector<int> labels;
    std::size_t num_classes = 0;

    std::size_t size() const { return labels.size(); }
    std::vector<std::size_t> label_histogram() const;
    LabeledDataset select(const std::vector<std::size_t>& indices) const;
};

/// One dataset split across K clients, with the per-client per-category
/// sample counts alongside.
struct ClientSplit {
    std::vector<LabeledDataset> clients;
    std::vector<std::vector<std::size_t>> counts;  // K x C

    std::size_t num_clients() const { return clients.size(); }
};

/// n_per_class samples per category from unit-variance Gaussians whose means
/// are placed (seeded, random directions) at pairwise distance >= separation.
/// The result is deterministically shuffled.
LabeledDataset gen_gaussian_mixture(std::size_t C, std::size_t d_in, std::size_t n_per_class,
                                    double separation, std::uint64_t seed);

/// Rows are `label,feat_1,...,feat_m`. Inputs are standardized per column
/// (zero mean, unit variance on the file); columns with variance below 1e-12
/// map to zero.
LabeledDataset load_csv_dataset(const std::string& path, std::size_t C);

/// Per-category Dirichlet(beta) client proportions (label-skew partition).
ClientSplit partition_dirichlet(const LabeledDataset& ds, std::size_t K, double beta,
                                std::uint64_t seed);

/// Equal-size clients, each with one dominant category (client k -> category
/// k mod C) holding a dominant_frac share; the remainder is spread evenly
/// over the other categories. Uses floor(n/K) samples per client; leftovers
/// stay unassigned when the arithmetic does not come out even.
ClientSplit partition_dominant(const LabeledDataset& ds, std::size_t K, double dominant_frac,
                               std::uint64_t seed);

/// Each client misses x categories: permitted categories are assigned by a
/// seeded rotation that keeps every category held by at least one client,
/// and each category's samples are divided evenly among its holders.
ClientSplit partition_missing(const LabeledDataset& ds, std::size_t K, std::size_t x,
                              std::uint64_t seed);

/// Stratified split; returns (rest, holdout) where holdout holds ~frac of
/// each category (within 1 sample).
std::pair<LabeledDataset, LabeledDataset> holdout_split(const LabeledDataset& ds, double frac,
                                                        std::uint64_t seed);

}  // namespace fedfm
