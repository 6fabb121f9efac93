#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fedfm/anchors.hpp"
#include "fedfm/dataset.hpp"
#include "fedfm/losses.hpp"
#include "fedfm/metrics.hpp"
#include "fedfm/mlp.hpp"

namespace fedfm {

enum class Algorithm { fedavg, fedprox, fedfm_l2, fedfm_cg, fedfm_lite };
enum class AnchorAggregation { weighted, uniform };

std::string algorithm_name(Algorithm a);
Algorithm algorithm_from_name(const std::string& name);
std::string aggregation_name(AnchorAggregation a);
AnchorAggregation aggregation_from_name(const std::string& name);

struct FedConfig {
    Algorithm algorithm = Algorithm::fedavg;
    std::size_t clients = 10;        // K
    std::size_t rounds = 40;         // T
    std::size_t local_epochs = 2;    // tau in epochs
    std::size_t batch_size = 32;
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-5;
    double lambda = 50.0;
    double alpha = 1.0;              // CG temperature
    std::size_t launch_round = 8;    // T_s: plain FedAvg before it
    double mu_prox = 0.0;
    std::size_t model_period = 1;    // a: FedFM-Lite model communication period
    AnchorAggregation aggregation = AnchorAggregation::weighted;
    std::uint64_t seed = 1;
    double val_frac = 0.2;           // per-client validation holdout; 0 validates on train
    std::vector<std::size_t> hidden_dims = {64, 32};

    MatchVariant variant() const;
    bool uses_anchors() const;
    void validate() const;
};

struct LedgerRow {
    std::size_t round = 0;
    std::size_t handshakes = 0;
    unsigned long long model_up = 0;
    unsigned long long model_down = 0;
    unsigned long long anchor_up = 0;
    unsigned long long anchor_down = 0;
    unsigned long long count_ints_up = 0;  // category counts, weighted aggregation only

    unsigned long long up_floats() const { return model_up + anchor_up; }
    unsigned long long down_floats() const { return model_down + anchor_down; }
};

struct CommLedger {
    std::vector<LedgerRow> rows;

    std::size_t total_handshakes() const;
    unsigned long long total_up_floats() const;
    unsigned long long total_down_floats() const;
    unsigned long long total_model_floats() const;
    unsigned long long total_anchor_floats() const;
};

struct RoundRecord {
    std::size_t round = 0;
    LossBreakdown mean_loss;  // mean over clients of their local training loss
    double val_accuracy = 0.0;
    double test_accuracy = 0.0;
    double lemma2_before = std::numeric_limits<double>::quiet_NaN();
    double lemma2_after = std::numeric_limits<double>::quiet_NaN();
    double anchor_displacement = std::numeric_limits<double>::quiet_NaN();
    double grad_norm_est = std::numeric_limits<double>::quiet_NaN();
};

struct ExperimentResult {
    std::vector<RoundRecord> rounds;
    CommLedger ledger;
    MlpParams final_model;
    MlpParams best_model;
    double best_val_accuracy = 0.0;
    double best_test_accuracy = 0.0;
};

/// One client's local pass: local_epochs epochs of seeded mini-batch SGD with
/// momentum starting from init_params. anchors may be null; it must be set
/// when a feature-matching variant is active for this round. With fedprox, a
/// proximal pull toward init_params is added to every gradient.
/// mean_loss_out, when non-null, receives the running mean LossBreakdown over
/// the pass's batches.
MlpParams local_train(const LabeledDataset& client_ds, MlpParams init_params,
                      const AnchorSet* anchors, const FedConfig& cfg, std::size_t round,
                      std::size_t client_id, LossBreakdown* mean_loss_out = nullptr);

/// Round-level engine. Owns the per-client train/validation splits, the
/// global model and anchor state, the ledger and the record history.
class FedEngine {
  public:
    FedEngine(FedConfig cfg, const ClientSplit& data, LabeledDataset test);

    RoundRecord run_round();  // dispatches on algorithm and round index
    ExperimentResult run();

    const MlpParams& global_model() const { return global_model_; }
    const AnchorSet& global_anchors() const { return anchors_; }
    const CommLedger& ledger() const { return ledger_; }
    const std::vector<LabeledDataset>& train_sets() const { return train_; }
    std::size_t current_round() const { return round_; }

  private:
    RoundRecord run_round_fedavg();
    RoundRecord run_round_fedfm();
    RoundRecord run_round_fedfm_lite();

    AnchorSet aggregate_reports(const std::vector<LocalAnchorReport>& reports) const;
    double mean_validation_accuracy(const MlpParams& model) const;
    void finish_record(RoundRecord& rec, const std::vector<LossBreakdown>& losses,
                       const MlpParams& before);
    double local_iterations_mean() const;

    FedConfig cfg_;
    std::vector<LabeledDataset> train_;
    std::vector<LabeledDataset> val_;
    LabeledDataset test_;
    std::vector<double> p_;  // aggregation weights, relative train sizes

    MlpParams global_model_;
    std::vector<MlpParams> client_models_;  // FedFM-Lite local state
    AnchorSet anchors_;
    std::size_t round_ = 0;
    CommLedger ledger_;

    MlpParams best_model_;
    double best_val_ = -1.0;
};

ExperimentResult run_experiment(const FedConfig& cfg, const ClientSplit& data,
                                const LabeledDataset& test);

}  // namespace fedfm
