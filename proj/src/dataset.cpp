#include "fedfm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "fedfm/errors.hpp"
#include "fedfm/rng.hpp"

namespace fedfm {

namespace {

std::vector<std::vector<std::size_t>> indices_by_category(const LabeledDataset& ds) {
    std::vector<std::vector<std::size_t>> buckets(ds.num_classes);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        buckets[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    }
    return buckets;
}

// Integer counts matching real-valued targets, largest remainder first
// (ties broken by lower index). Targets must be nonnegative and sum to total.
std::vector<std::size_t> largest_remainder_counts(const std::vector<double>& targets,
                                                  std::size_t total) {
    const std::size_t n = targets.size();
    std::vector<std::size_t> counts(n, 0);
    std::vector<double> remainders(n, 0.0);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = std::max(0.0, targets[i]);
        counts[i] = static_cast<std::size_t>(std::floor(t));
        if (counts[i] > total) counts[i] = total;
        remainders[i] = t - std::floor(t);
        assigned += counts[i];
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (remainders[a] != remainders[b]) return remainders[a] > remainders[b];
        return a < b;
    });
    std::size_t leftover = total - std::min(total, assigned);
    for (std::size_t i = 0; leftover > 0; i = (i + 1) % n) {
        ++counts[order[i]];
        --leftover;
    }
    return counts;
}

ClientSplit materialize(const LabeledDataset& ds,
                        std::vector<std::vector<std::vector<std::size_t>>>& assignment) {
    const std::size_t K = assignment.size();
    const std::size_t C = ds.num_classes;
    ClientSplit split;
    split.counts.assign(K, std::vector<std::size_t>(C, 0));
    split.clients.reserve(K);
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<std::size_t> idx;
        for (std::size_t c = 0; c < C; ++c) {
            split.counts[k][c] = assignment[k][c].size();
            idx.insert(idx.end(), assignment[k][c].begin(), assignment[k][c].end());
        }
        std::sort(idx.begin(), idx.end());
        split.clients.push_back(ds.select(idx));
    }
    return split;
}

}  // namespace

std::vector<std::size_t> LabeledDataset::label_histogram() const {
    std::vector<std::size_t> h(num_classes, 0);
    for (int l : labels) ++h[static_cast<std::size_t>(l)];
    return h;
}

LabeledDataset LabeledDataset::select(const std::vector<std::size_t>& indices) const {
    LabeledDataset out;
    out.num_classes = num_classes;
    out.inputs = Matrix(indices.size(), inputs.cols);
    out.labels.reserve(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const std::size_t i = indices[r];
        std::copy(inputs.row(i), inputs.row(i) + inputs.cols, out.inputs.row(r));
        out.labels.push_back(labels[i]);
    }
    return out;
}

LabeledDataset gen_gaussian_mixture(std::size_t C, std::size_t d_in, std::size_t n_per_class,
                                    double separation, std::uint64_t seed) {
    if (C < 2) throw ConfigError("gen_gaussian_mixture: need at least 2 categories");
    if (separation <= 0.0) throw ConfigError("gen_gaussian_mixture: separation must be positive");
    if (d_in == 0 || n_per_class == 0) {
        throw ConfigError("gen_gaussian_mixture: d_in and n_per_class must be positive");
    }
    auto rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Means sit on a sphere of radius `separation`; random unit directions
    // are rejected until all pairwise distances reach the separation.
    std::vector<std::vector<double>> means;
    means.reserve(C);
    for (std::size_t c = 0; c < C; ++c) {
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            std::vector<double> dir(d_in);
            double norm2 = 0.0;
            for (double& v : dir) {
                v = gauss(rng);
                norm2 += v * v;
            }
            if (norm2 < 1e-24) continue;
            const double scale = separation / std::sqrt(norm2);
            for (double& v : dir) v *= scale;
            bool ok = true;
            for (const auto& m : means) {
                double d2 = 0.0;
                for (std::size_t j = 0; j < d_in; ++j) {
                    const double d = dir[j] - m[j];
                    d2 += d * d;
                }
                if (d2 < separation * separation) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                means.push_back(std::move(dir));
                placed = true;
            }
        }
        if (!placed) {
            throw ConfigError("gen_gaussian_mixture: cannot place " + std::to_string(C) +
                              " means at separation " + std::to_string(separation) +
                              " in dimension " + std::to_string(d_in));
        }
    }

    const std::size_t n = C * n_per_class;
    LabeledDataset ds;
    ds.num_classes = C;
    ds.inputs = Matrix(n, d_in);
    ds.labels.assign(n, 0);
    std::size_t row = 0;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
            double* r = ds.inputs.row(row);
            for (std::size_t j = 0; j < d_in; ++j) {
                r[j] = means[c][j] + gauss(rng);
            }
            ds.labels[row] = static_cast<int>(c);
        }
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    return ds.select(perm);
}

LabeledDataset load_csv_dataset(const std::string& path, std::size_t C) {
    std::ifstream in(path);
    if (!in) throw ConfigError("load_csv_dataset: cannot open " + path);

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.push_back("");
        if (cells.size() < 2) {
            throw ParseError("line " + std::to_string(line_no) + ": expected label,feat_1,...");
        }
        char* end = nullptr;
        const long lbl = std::strtol(cells[0].c_str(), &end, 10);
        if (end == cells[0].c_str() || *end != '\0') {
            throw ParseError("line " + std::to_string(line_no) + ": non-integer label '" +
                             cells[0] + "'");
        }
        if (lbl < 0 || static_cast<std::size_t>(lbl) >= C) {
            throw ParseError("line " + std::to_string(line_no) + ": label " +
                             std::to_string(lbl) + " outside [0, " + std::to_string(C) + ")");
        }
        std::vector<double> feats;
        feats.reserve(cells.size() - 1);
        for (std::size_t i = 1; i < cells.size(); ++i) {
            const double v = std::strtod(cells[i].c_str(), &end);
            if (end == cells[i].c_str() || *end != '\0' || !std::isfinite(v)) {
                throw ParseError("line " + std::to_string(line_no) + ": non-numeric field '" +
                                 cells[i] + "'");
            }
            feats.push_back(v);
        }
        if (width == 0) {
            width = feats.size();
        } else if (feats.size() != width) {
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(width) + " features, got " +
                             std::to_string(feats.size()));
        }
        rows.push_back(std::move(feats));
        labels.push_back(static_cast<int>(lbl));
    }
    if (rows.empty()) throw ParseError("load_csv_dataset: no data rows in " + path);

    const std::size_t n = rows.size();
    LabeledDataset ds;
    ds.num_classes = C;
    ds.labels = std::move(labels);
    ds.inputs = Matrix(n, width);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(rows[i].begin(), rows[i].end(), ds.inputs.row(i));
    }
    // Column-wise standardization; near-constant columns map to zero.
    for (std::size_t j = 0; j < width; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += ds.inputs(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = ds.inputs(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        if (var < 1e-12) {
            for (std::size_t i = 0; i < n; ++i) ds.inputs(i, j) = 0.0;
        } else {
            const double inv = 1.0 / std::sqrt(var);
            for (std::size_t i = 0; i < n; ++i) ds.inputs(i, j) = (ds.inputs(i, j) - mean) * inv;
        }
    }
    return ds;
}

ClientSplit partition_dirichlet(const LabeledDataset& ds, std::size_t K, double beta,
                                std::uint64_t seed) {
    if (K < 1) throw ConfigError("partition_dirichlet: K must be at least 1");
    if (beta <= 0.0) throw ConfigError("partition_dirichlet: beta must be positive");
    if (K > ds.size()) {
        throw ConfigError("partition_dirichlet: K=" + std::to_string(K) + " exceeds " +
                          std::to_string(ds.size()) + " samples");
    }
    const std::size_t C = ds.num_classes;
    auto rng = make_rng(seed);
    auto buckets = indices_by_category(ds);
    std::vector<std::vector<std::vector<std::size_t>>> assign(
        K, std::vector<std::vector<std::size_t>>(C));

    std::gamma_distribution<double> gamma(beta, 1.0);
    for (std::size_t c = 0; c < C; ++c) {
        auto& idx = buckets[c];
        if (idx.empty()) continue;
        std::shuffle(idx.begin(), idx.end(), rng);
        std::vector<double> props(K, 0.0);
        double total = 0.0;
        for (int attempt = 0; attempt < 100 && total <= 0.0; ++attempt) {
            total = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                props[k] = gamma(rng);
                total += props[k];
            }
        }
        if (total <= 0.0) {
            std::fill(props.begin(), props.end(), 1.0);
            total = static_cast<double>(K);
        }
        std::vector<double> targets(K);
        for (std::size_t k = 0; k < K; ++k) {
            targets[k] = props[k] / total * static_cast<double>(idx.size());
        }
        auto counts = largest_remainder_counts(targets, idx.size());
        std::size_t pos = 0;
        for (std::size_t k = 0; k < K; ++k) {
            auto& dst = assign[k][c];
            dst.insert(dst.end(), idx.begin() + pos, idx.begin() + pos + counts[k]);
            pos += counts[k];
        }
    }

    // Repair: every client must end up nonempty. Move one sample from the
    // largest client's largest category bucket into each empty client.
    auto client_size = [&](std::size_t k) {
        std::size_t s = 0;
        for (std::size_t c = 0; c < C; ++c) s += assign[k][c].size();
        return s;
    };
    for (std::size_t k = 0; k < K; ++k) {
        while (client_size(k) == 0) {
            std::size_t donor = 0;
            std::size_t best = 0;
            for (std::size_t j = 0; j < K; ++j) {
                const std::size_t s = client_size(j);
                if (s > best) {
                    best = s;
                    donor = j;
                }
            }
            if (best < 2) throw ConfigError("partition_dirichlet: cannot repair empty client");
            std::size_t cat = 0;
            std::size_t cat_best = 0;
            for (std::size_t c = 0; c < C; ++c) {
                if (assign[donor][c].size() > cat_best) {
                    cat_best = assign[donor][c].size();
                    cat = c;
                }
            }
            assign[k][cat].push_back(assign[donor][cat].back());
            assign[donor][cat].pop_back();
        }
    }
    return materialize(ds, assign);
}

ClientSplit partition_dominant(const LabeledDataset& ds, std::size_t K, double dominant_frac,
                               std::uint64_t seed) {
    if (dominant_frac <= 0.0 || dominant_frac >= 1.0) {
        throw ConfigError("partition_dominant: dominant_frac must be in (0,1)");
    }
    const std::size_t C = ds.num_classes;
    if (K < 1 || K > C) {
        throw ConfigError("partition_dominant: need 1 <= K <= C (one dominant category each)");
    }
    const std::size_t S = ds.size() / K;  // equal client size
    if (S == 0) throw ConfigError("partition_dominant: fewer samples than clients");

    // Per-client demand: dominant_frac of S from the dominant category, the
    // rest spread evenly over the other C-1 categories (extras rotate away
    // from the dominant category so totals stay deterministic).
    std::vector<std::vector<std::size_t>> demand(K, std::vector<std::size_t>(C, 0));
    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t dom = k % C;
        const std::size_t n_dom =
            std::min(S, static_cast<std::size_t>(std::llround(dominant_frac * static_cast<double>(S))));
        const std::size_t rest = S - n_dom;
        const std::size_t base = rest / (C - 1);
        std::size_t extra = rest % (C - 1);
        demand[k][dom] = n_dom;
        for (std::size_t j = 1; j < C; ++j) {
            const std::size_t c = (dom + j) % C;
            demand[k][c] = base + (extra > 0 ? 1 : 0);
            if (extra > 0) --extra;
        }
    }

    auto hist = ds.label_histogram();
    std::string shortfall;
    for (std::size_t c = 0; c < C; ++c) {
        std::size_t need = 0;
        for (std::size_t k = 0; k < K; ++k) need += demand[k][c];
        if (need > hist[c]) {
            if (!shortfall.empty()) shortfall += "; ";
            shortfall += "category " + std::to_string(c) + ": need " + std::to_string(need) +
                         ", have " + std::to_string(hist[c]);
        }
    }
    if (!shortfall.empty()) {
        throw ConfigError("partition_dominant: insufficient samples (" + shortfall + ")");
    }

    auto rng = make_rng(seed);
    auto buckets = indices_by_category(ds);
    for (auto& b : buckets) std::shuffle(b.begin(), b.end(), rng);
    std::vector<std::vector<std::vector<std::size_t>>> assign(
        K, std::vector<std::vector<std::size_t>>(C));
    for (std::size_t c = 0; c < C; ++c) {
        std::size_t pos = 0;
        for (std::size_t k = 0; k < K; ++k) {
            auto& dst = assign[k][c];
            dst.insert(dst.end(), buckets[c].begin() + pos, buckets[c].begin() + pos + demand[k][c]);
            pos += demand[k][c];
        }
    }
    return materialize(ds, assign);
}

ClientSplit partition_missing(const LabeledDataset& ds, std::size_t K, std::size_t x,
                              std::uint64_t seed) {
    const std::size_t C = ds.num_classes;
    if (x < 1 || x >= C) {
        throw ConfigError("partition_missing: x must satisfy 1 <= x < C");
    }
    if (K < 1) throw ConfigError("partition_missing: K must be at least 1");
    const std::size_t kept = C - x;
    if (K * kept < C) {
        throw ConfigError("partition_missing: K*(C-x) < C, some category would have no holder");
    }
    auto rng = make_rng(seed);
    std::vector<std::size_t> perm(C);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    // Client k keeps `kept` consecutive slots starting at floor(k*C/K) of the
    // permuted category ring; the stagger guarantees full coverage.
    std::vector<std::vector<std::size_t>> holders(C);
    std::vector<std::vector<bool>> permitted(K, std::vector<bool>(C, false));
    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t start = k * C / K;
        for (std::size_t j = 0; j < kept; ++j) {
            const std::size_t c = perm[(start + j) % C];
            if (!permitted[k][c]) {
                permitted[k][c] = true;
                holders[c].push_back(k);
            }
        }
    }
    auto buckets = indices_by_category(ds);
    std::vector<std::vector<std::vector<std::size_t>>> assign(
        K, std::vector<std::vector<std::size_t>>(C));
    for (std::size_t c = 0; c < C; ++c) {
        auto& idx = buckets[c];
        if (idx.empty()) continue;
        std::shuffle(idx.begin(), idx.end(), rng);
        auto& h = holders[c];
        std::sort(h.begin(), h.end());
        std::vector<double> targets(h.size(),
                                    static_cast<double>(idx.size()) / static_cast<double>(h.size()));
        auto counts = largest_remainder_counts(targets, idx.size());
        std::size_t pos = 0;
        for (std::size_t i = 0; i < h.size(); ++i) {
            auto& dst = assign[h[i]][c];
            dst.insert(dst.end(), idx.begin() + pos, idx.begin() + pos + counts[i]);
            pos += counts[i];
        }
    }
    return materialize(ds, assign);
}

std::pair<LabeledDataset, LabeledDataset> holdout_split(const LabeledDataset& ds, double frac,
                                                        std::uint64_t seed) {
    if (frac <= 0.0 || frac >= 1.0) throw ConfigError("holdout_split: frac must be in (0,1)");
    auto rng = make_rng(seed);
    auto buckets = indices_by_category(ds);
    std::vector<std::size_t> rest_idx;
    std::vector<std::size_t> hold_idx;
    for (std::size_t c = 0; c < buckets.size(); ++c) {
        auto& idx = buckets[c];
        if (idx.empty()) continue;
        if (idx.size() < 2) {
            throw ConfigError("holdout_split: category " + std::to_string(c) +
                              " has fewer than 2 samples");
        }
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t take =
            static_cast<std::size_t>(std::llround(frac * static_cast<double>(idx.size())));
        hold_idx.insert(hold_idx.end(), idx.begin(), idx.begin() + take);
        rest_idx.insert(rest_idx.end(), idx.begin() + take, idx.end());
    }
    std::sort(rest_idx.begin(), rest_idx.end());
    std::sort(hold_idx.begin(), hold_idx.end());
    return {ds.select(rest_idx), ds.select(hold_idx)};
}

}  // namespace fedfm
