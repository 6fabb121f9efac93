#include "fedfm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace fedfm {

double relative_error(double analytic, double numeric) {
    const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / denom;
}

double fd_check_matrix(const std::function<double(const Matrix&)>& loss_of, const Matrix& point,
                       const Matrix& analytic_grad) {
    Matrix probe = point;
    double worst = 0.0;
    for (std::size_t i = 0; i < probe.values.size(); ++i) {
        const double keep = probe.values[i];
        probe.values[i] = keep + kFdEps;
        const double up = loss_of(probe);
        probe.values[i] = keep - kFdEps;
        const double down = loss_of(probe);
        probe.values[i] = keep;
        const double numeric = (up - down) / (2.0 * kFdEps);
        worst = std::max(worst, relative_error(analytic_grad.values[i], numeric));
    }
    return worst;
}

double fd_check_params(const std::function<double(const MlpParams&)>& loss_of,
                       const MlpParams& point, const ParamGrads& analytic_grad) {
    MlpParams probe = point;
    double worst = 0.0;
    auto probe_one = [&](double& slot, double analytic) {
        const double keep = slot;
        slot = keep + kFdEps;
        const double up = loss_of(probe);
        slot = keep - kFdEps;
        const double down = loss_of(probe);
        slot = keep;
        const double numeric = (up - down) / (2.0 * kFdEps);
        worst = std::max(worst, relative_error(analytic, numeric));
    };
    for (std::size_t l = 0; l < probe.weights.size(); ++l) {
        for (std::size_t i = 0; i < probe.weights[l].values.size(); ++i) {
            probe_one(probe.weights[l].values[i], analytic_grad.weights[l].values[i]);
        }
        for (std::size_t i = 0; i < probe.biases[l].size(); ++i) {
            probe_one(probe.biases[l][i], analytic_grad.biases[l][i]);
        }
    }
    return worst;
}

}  // namespace fedfm
