#include "fedfm/anchors.hpp"

#include <string>

#include "fedfm/errors.hpp"

namespace fedfm {

LocalAnchorReport local_anchors(const MlpParams& params, const LabeledDataset& client_ds,
                                int client_id) {
    if (client_ds.size() == 0) {
        throw ContractError("local_anchors: empty client dataset");
    }
    const std::size_t C = client_ds.num_classes;
    const std::size_t d = params.feature_dim();
    LocalAnchorReport rep;
    rep.client_id = client_id;
    rep.anchors = Matrix(C, d);
    rep.counts.assign(C, 0);
    rep.present.assign(C, 0);

    const ForwardCache cache = mlp_forward(params, client_ds.inputs);
    const Matrix feats = normalize_features(cache.feature());
    for (std::size_t i = 0; i < client_ds.size(); ++i) {
        const std::size_t c = static_cast<std::size_t>(client_ds.labels[i]);
        const double* f = feats.row(i);
        double* a = rep.anchors.row(c);
        for (std::size_t j = 0; j < d; ++j) a[j] += f[j];
        ++rep.counts[c];
    }
    for (std::size_t c = 0; c < C; ++c) {
        if (rep.counts[c] == 0) continue;
        rep.present[c] = 1;
        double* a = rep.anchors.row(c);
        const double inv = 1.0 / static_cast<double>(rep.counts[c]);
        for (std::size_t j = 0; j < d; ++j) a[j] *= inv;
    }
    return rep;
}

namespace {

void check_reports(const std::vector<LocalAnchorReport>& reports) {
    if (reports.empty()) throw ContractError("anchor aggregation: no reports");
    const std::size_t C = reports.front().anchors.rows;
    const std::size_t d = reports.front().anchors.cols;
    for (const auto& r : reports) {
        if (r.anchors.rows != C || r.anchors.cols != d) {
            throw DimensionError("anchor aggregation: report shapes differ");
        }
        if (r.counts.size() != C || r.present.size() != C) {
            throw DimensionError("anchor aggregation: malformed report");
        }
    }
}

}  // namespace

AnchorSet aggregate_weighted(const std::vector<LocalAnchorReport>& reports,
                             const AnchorSet* previous) {
    check_reports(reports);
    const std::size_t C = reports.front().anchors.rows;
    const std::size_t d = reports.front().anchors.cols;
    AnchorSet out = AnchorSet::undefined(C, d);
    for (std::size_t c = 0; c < C; ++c) {
        std::size_t total = 0;
        for (const auto& r : reports) total += r.counts[c];
        if (total == 0) {
            if (previous != nullptr && c < previous->present.size() && previous->present[c]) {
                const double* p = previous->anchors.row(c);
                double* a = out.anchors.row(c);
                for (std::size_t j = 0; j < d; ++j) a[j] = p[j];
                out.present[c] = 1;
            }
            continue;
        }
        double* a = out.anchors.row(c);
        for (const auto& r : reports) {
            if (!r.present[c]) continue;
            const double w = static_cast<double>(r.counts[c]);
            const double* la = r.anchors.row(c);
            for (std::size_t j = 0; j < d; ++j) a[j] += w * la[j];
        }
        const double inv = 1.0 / static_cast<double>(total);
        for (std::size_t j = 0; j < d; ++j) a[j] *= inv;
        out.present[c] = 1;
    }
    return out;
}

AnchorSet aggregate_uniform(const std::vector<LocalAnchorReport>& reports,
                            const AnchorSet& previous) {
    check_reports(reports);
    const std::size_t C = reports.front().anchors.rows;
    const std::size_t d = reports.front().anchors.cols;
    if (previous.num_categories() != C || previous.feature_dim() != d) {
        throw DimensionError("aggregate_uniform: previous anchor shape mismatch");
    }
    AnchorSet out = AnchorSet::undefined(C, d);
    for (std::size_t c = 0; c < C; ++c) {
        double* a = out.anchors.row(c);
        std::size_t contributors = 0;
        for (const auto& r : reports) {
            const double* src = nullptr;
            if (r.present[c]) {
                src = r.anchors.row(c);
            } else if (previous.present[c]) {
                // Absent clients stand in the previous global anchor.
                src = previous.anchors.row(c);
            } else {
                continue;
            }
            for (std::size_t j = 0; j < d; ++j) a[j] += src[j];
            ++contributors;
        }
        if (contributors == 0) continue;
        const double inv = 1.0 / static_cast<double>(contributors);
        for (std::size_t j = 0; j < d; ++j) a[j] *= inv;
        out.present[c] = 1;
    }
    return out;
}

AnchorSet direct_global_anchors(const MlpParams& params,
                                const std::vector<LabeledDataset>& all_data) {
    if (all_data.empty()) throw ContractError("direct_global_anchors: no datasets");
    const std::size_t C = all_data.front().num_classes;
    const std::size_t d = params.feature_dim();
    AnchorSet out = AnchorSet::undefined(C, d);
    std::vector<std::size_t> counts(C, 0);
    for (const auto& ds : all_data) {
        if (ds.num_classes != C) {
            throw DimensionError("direct_global_anchors: category counts differ across datasets");
        }
        if (ds.size() == 0) continue;
        const ForwardCache cache = mlp_forward(params, ds.inputs);
        const Matrix feats = normalize_features(cache.feature());
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const std::size_t c = static_cast<std::size_t>(ds.labels[i]);
            const double* f = feats.row(i);
            double* a = out.anchors.row(c);
            for (std::size_t j = 0; j < d; ++j) a[j] += f[j];
            ++counts[c];
        }
    }
    for (std::size_t c = 0; c < C; ++c) {
        if (counts[c] == 0) continue;
        out.present[c] = 1;
        double* a = out.anchors.row(c);
        const double inv = 1.0 / static_cast<double>(counts[c]);
        for (std::size_t j = 0; j < d; ++j) a[j] *= inv;
    }
    return out;
}

}  // namespace fedfm
