#pragma once

#include <cstdint>
#include <vector>

#include "fedfm/dataset.hpp"
#include "fedfm/losses.hpp"
#include "fedfm/mlp.hpp"

namespace fedfm {

/// One client's category-wise anchors with the sample counts behind them.
/// Rows with present=false are the all-zero sentinel and never hold data.
struct LocalAnchorReport {
    int client_id = 0;
    Matrix anchors;                     // C x d
    std::vector<std::size_t> counts;    // per category
    std::vector<std::uint8_t> present;  // count > 0
};

/// Per-category mean of the normalized features of one client's samples,
/// evaluated with the given (frozen) model. Inference only.
LocalAnchorReport local_anchors(const MlpParams& params, const LabeledDataset& client_ds,
                                int client_id = 0);

/// Count-weighted aggregation across clients. Categories with zero total
/// count inherit the previous global anchor when one exists, else stay
/// undefined.
AnchorSet aggregate_weighted(const std::vector<LocalAnchorReport>& reports,
                             const AnchorSet* previous = nullptr);

/// Arithmetic mean over all clients, where a client missing a category
/// contributes the previous global anchor; when that is undefined too, only
/// present clients are averaged.
AnchorSet aggregate_uniform(const std::vector<LocalAnchorReport>& reports,
                            const AnchorSet& previous);

/// Oracle path: per-category mean of normalized features over the pooled
/// data of every client. Not used by the federated engine.
AnchorSet direct_global_anchors(const MlpParams& params,
                                const std::vector<LabeledDataset>& all_data);

}  // namespace fedfm
