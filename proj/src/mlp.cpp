#include "fedfm/mlp.hpp"

#include <cmath>
#include <random>
#include <string>

#include "fedfm/errors.hpp"
#include "fedfm/rng.hpp"

namespace fedfm {

namespace {

void check_dims(const std::vector<std::size_t>& dims) {
    if (dims.size() < 2) {
        throw DimensionError("MlpParams: need at least [d_in, C] layer dims");
    }
    for (std::size_t d : dims) {
        if (d == 0) throw DimensionError("MlpParams: zero-width layer");
    }
}

}  // namespace

MlpParams MlpParams::init(const std::vector<std::size_t>& dims, std::uint64_t seed) {
    check_dims(dims);
    MlpParams p;
    p.layer_dims = dims;
    auto rng = make_rng(seed);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::size_t fan_in = dims[l];
        const std::size_t fan_out = dims[l + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Matrix w(fan_in, fan_out);
        for (double& v : w.values) v = dist(rng);
        p.weights.push_back(std::move(w));
        p.biases.emplace_back(fan_out, 0.0);
    }
    return p;
}

MlpParams MlpParams::zeros(const std::vector<std::size_t>& dims) {
    check_dims(dims);
    MlpParams p;
    p.layer_dims = dims;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        p.weights.emplace_back(dims[l], dims[l + 1]);
        p.biases.emplace_back(dims[l + 1], 0.0);
    }
    return p;
}

bool MlpParams::same_shape(const MlpParams& o) const {
    return layer_dims == o.layer_dims;
}

ParamGrads ParamGrads::zeros_like(const MlpParams& p) {
    ParamGrads g;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        g.weights.emplace_back(p.weights[l].rows, p.weights[l].cols);
        g.biases.emplace_back(p.biases[l].size(), 0.0);
    }
    return g;
}

ForwardCache mlp_forward(const MlpParams& params, const Matrix& batch) {
    if (batch.cols != params.input_dim()) {
        throw DimensionError("mlp_forward: batch has " + std::to_string(batch.cols) +
                             " columns, layer 0 expects " + std::to_string(params.input_dim()));
    }
    const std::size_t layers = params.num_layers();
    ForwardCache cache;
    cache.activations.reserve(layers + 1);
    cache.pre_activations.reserve(layers);
    cache.activations.push_back(batch);
    for (std::size_t l = 0; l < layers; ++l) {
        Matrix z = matmul(cache.activations[l], params.weights[l]);
        const std::vector<double>& b = params.biases[l];
        for (std::size_t i = 0; i < z.rows; ++i) {
            double* zr = z.row(i);
            for (std::size_t j = 0; j < z.cols; ++j) zr[j] += b[j];
        }
        ensure_finite(z, "mlp_forward layer " + std::to_string(l));
        if (l + 1 < layers) {
            Matrix a = z;
            for (double& v : a.values) v = v > 0.0 ? v : 0.0;
            cache.pre_activations.push_back(std::move(z));
            cache.activations.push_back(std::move(a));
        } else {
            cache.pre_activations.push_back(z);
            cache.activations.push_back(std::move(z));
        }
    }
    return cache;
}

ParamGrads mlp_backward(const MlpParams& params, const ForwardCache& cache,
                        const Matrix& d_logits, const Matrix& d_feature) {
    const std::size_t layers = params.num_layers();
    if (cache.activations.size() != layers + 1) {
        throw DimensionError("mlp_backward: cache does not match params");
    }
    if (!d_logits.same_shape(cache.logits())) {
        throw DimensionError("mlp_backward: d_logits shape mismatch");
    }
    if (!d_feature.same_shape(cache.feature())) {
        throw DimensionError("mlp_backward: d_feature shape mismatch");
    }

    ParamGrads grads = ParamGrads::zeros_like(params);
    Matrix d_act = d_logits;  // gradient w.r.t. activations[l + 1]
    for (std::size_t l = layers; l-- > 0;) {
        Matrix d_z;
        if (l + 1 == layers) {
            d_z = std::move(d_act);
        } else {
            // ReLU mask from the stored pre-activation (derivative 0 at 0).
            d_z = std::move(d_act);
            const Matrix& z = cache.pre_activations[l];
            for (std::size_t i = 0; i < d_z.values.size(); ++i) {
                if (z.values[i] <= 0.0) d_z.values[i] = 0.0;
            }
        }
        grads.weights[l] = matmul_tn(cache.activations[l], d_z);
        std::vector<double>& db = grads.biases[l];
        for (std::size_t i = 0; i < d_z.rows; ++i) {
            const double* r = d_z.row(i);
            for (std::size_t j = 0; j < d_z.cols; ++j) db[j] += r[j];
        }
        if (l == 0) break;
        d_act = matmul_nt(d_z, params.weights[l]);
        if (l == layers - 1) {
            // The feature sensitivity enters at the penultimate activation.
            for (std::size_t i = 0; i < d_act.values.size(); ++i) {
                d_act.values[i] += d_feature.values[i];
            }
        }
    }
    return grads;
}

std::pair<MlpParams, ParamGrads> sgd_step(MlpParams params, const ParamGrads& grads,
                                          ParamGrads momentum_state, double lr,
                                          double momentum, double weight_decay) {
    if (lr <= 0.0) throw ContractError("sgd_step: lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ContractError("sgd_step: momentum out of [0,1)");
    if (weight_decay < 0.0) throw ContractError("sgd_step: negative weight decay");
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        for (double g : grads.weights[l].values) {
            if (!std::isfinite(g)) {
                throw NumericError("sgd_step: non-finite gradient in layer " + std::to_string(l));
            }
        }
        for (double g : grads.biases[l]) {
            if (!std::isfinite(g)) {
                throw NumericError("sgd_step: non-finite gradient in layer " + std::to_string(l));
            }
        }
        Matrix& w = params.weights[l];
        Matrix& vw = momentum_state.weights[l];
        const Matrix& gw = grads.weights[l];
        for (std::size_t i = 0; i < w.values.size(); ++i) {
            vw.values[i] = momentum * vw.values[i] + (gw.values[i] + weight_decay * w.values[i]);
            w.values[i] -= lr * vw.values[i];
        }
        std::vector<double>& b = params.biases[l];
        std::vector<double>& vb = momentum_state.biases[l];
        const std::vector<double>& gb = grads.biases[l];
        for (std::size_t i = 0; i < b.size(); ++i) {
            vb[i] = momentum * vb[i] + (gb[i] + weight_decay * b[i]);
            b[i] -= lr * vb[i];
        }
    }
    return {std::move(params), std::move(momentum_state)};
}

MlpParams weighted_param_sum(const std::vector<MlpParams>& params_list,
                             const std::vector<double>& weights) {
    if (params_list.empty() || params_list.size() != weights.size()) {
        throw ContractError("weighted_param_sum: need one weight per parameter set");
    }
    double wsum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw ContractError("weighted_param_sum: negative weight");
        wsum += w;
    }
    if (std::abs(wsum - 1.0) > 1e-9) {
        throw ContractError("weighted_param_sum: weights sum to " + std::to_string(wsum));
    }
    const MlpParams& first = params_list.front();
    for (const MlpParams& p : params_list) {
        if (!p.same_shape(first)) {
            throw DimensionError("weighted_param_sum: incongruent parameter shapes");
        }
    }
    MlpParams out = MlpParams::zeros(first.layer_dims);
    for (std::size_t k = 0; k < params_list.size(); ++k) {
        const double w = weights[k];
        const MlpParams& p = params_list[k];
        for (std::size_t l = 0; l < out.weights.size(); ++l) {
            for (std::size_t i = 0; i < out.weights[l].values.size(); ++i) {
                out.weights[l].values[i] += w * p.weights[l].values[i];
            }
            for (std::size_t i = 0; i < out.biases[l].size(); ++i) {
                out.biases[l][i] += w * p.biases[l][i];
            }
        }
    }
    return out;
}

std::size_t param_count(const MlpParams& params) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < params.layer_dims.size(); ++l) {
        n += params.layer_dims[l] * params.layer_dims[l + 1] + params.layer_dims[l + 1];
    }
    return n;
}

double param_distance(const MlpParams& a, const MlpParams& b) {
    if (!a.same_shape(b)) throw DimensionError("param_distance: shape mismatch");
    double acc = 0.0;
    for (std::size_t l = 0; l < a.weights.size(); ++l) {
        for (std::size_t i = 0; i < a.weights[l].values.size(); ++i) {
            const double d = a.weights[l].values[i] - b.weights[l].values[i];
            acc += d * d;
        }
        for (std::size_t i = 0; i < a.biases[l].size(); ++i) {
            const double d = a.biases[l][i] - b.biases[l][i];
            acc += d * d;
        }
    }
    return std::sqrt(acc);
}

}  // namespace fedfm
