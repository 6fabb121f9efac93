#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fedfm/matrix.hpp"

namespace fedfm {

/// All trainable parameters of a fully-connected classifier.
/// layer_dims = [d_in, h_1, ..., h_L, C]; weights[l] has shape
/// layer_dims[l] x layer_dims[l+1]. Hidden layers use ReLU, the output
/// layer is linear. The feature vector of a sample is the post-activation
/// output of the penultimate layer (the input itself for a single-layer net).
struct MlpParams {
    std::vector<std::size_t> layer_dims;
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;

    std::size_t num_layers() const { return weights.size(); }
    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t num_classes() const { return layer_dims.back(); }
    std::size_t feature_dim() const { return layer_dims[layer_dims.size() - 2]; }

    // Uniform init in +-sqrt(6/(fan_in+fan_out)), biases zero.
    static MlpParams init(const std::vector<std::size_t>& dims, std::uint64_t seed);
    static MlpParams zeros(const std::vector<std::size_t>& dims);

    bool same_shape(const MlpParams& o) const;
};

/// Per-layer gradients (or a momentum buffer): shape-congruent with the
/// MlpParams they were computed from.
struct ParamGrads {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;

    static ParamGrads zeros_like(const MlpParams& p);
};

/// Pre-activations and activations of one forward pass.
/// activations[0] is the input batch, activations[L] the logits.
struct ForwardCache {
    std::vector<Matrix> pre_activations;  // one per layer
    std::vector<Matrix> activations;      // layer count + 1

    const Matrix& logits() const { return activations.back(); }
    const Matrix& feature() const { return activations[activations.size() - 2]; }
};

ForwardCache mlp_forward(const MlpParams& params, const Matrix& batch);

/// Exact analytic gradients of the scalar whose per-output sensitivities are
/// d_logits (at the output layer) and d_feature (at the penultimate
/// activation). Either sensitivity may be all-zero.
ParamGrads mlp_backward(const MlpParams& params, const ForwardCache& cache,
                        const Matrix& d_logits, const Matrix& d_feature);

/// SGD with momentum and decoupled-from-nothing weight decay:
///   v <- momentum * v + (g + weight_decay * p);  p <- p - lr * v
/// Returns the updated parameters and momentum buffer.
std::pair<MlpParams, ParamGrads> sgd_step(MlpParams params, const ParamGrads& grads,
                                          ParamGrads momentum_state, double lr,
                                          double momentum, double weight_decay);

/// Elementwise convex combination of shape-congruent parameter sets.
/// Weights must be nonnegative and sum to 1 within 1e-9.
MlpParams weighted_param_sum(const std::vector<MlpParams>& params_list,
                             const std::vector<double>& weights);

std::size_t param_count(const MlpParams& params);

// Euclidean norm of the elementwise difference between two parameter sets.
double param_distance(const MlpParams& a, const MlpParams& b);

}  // namespace fedfm
