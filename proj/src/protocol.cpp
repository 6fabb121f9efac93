#include "fedfm/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fedfm/errors.hpp"
#include "fedfm/rng.hpp"

namespace fedfm {

namespace {

// Seed-stream tags so independent random decisions never share a stream.
constexpr std::uint64_t kTagInit = 0x11;
constexpr std::uint64_t kTagBatch = 0x22;
constexpr std::uint64_t kTagValSplit = 0x33;

double row_distance(const Matrix& a, const Matrix& b, std::size_t r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) {
        const double d = a(r, j) - b(r, j);
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace

std::string algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::fedavg: return "fedavg";
        case Algorithm::fedprox: return "fedprox";
        case Algorithm::fedfm_l2: return "fedfm_l2";
        case Algorithm::fedfm_cg: return "fedfm_cg";
        case Algorithm::fedfm_lite: return "fedfm_lite";
    }
    return "?";
}

Algorithm algorithm_from_name(const std::string& name) {
    if (name == "fedavg") return Algorithm::fedavg;
    if (name == "fedprox") return Algorithm::fedprox;
    if (name == "fedfm_l2") return Algorithm::fedfm_l2;
    if (name == "fedfm_cg") return Algorithm::fedfm_cg;
    if (name == "fedfm_lite") return Algorithm::fedfm_lite;
    throw ConfigError("unknown algorithm '" + name + "'");
}

std::string aggregation_name(AnchorAggregation a) {
    return a == AnchorAggregation::weighted ? "weighted" : "uniform";
}

AnchorAggregation aggregation_from_name(const std::string& name) {
    if (name == "weighted") return AnchorAggregation::weighted;
    if (name == "uniform") return AnchorAggregation::uniform;
    throw ConfigError("unknown aggregation '" + name + "'");
}

MatchVariant FedConfig::variant() const {
    switch (algorithm) {
        case Algorithm::fedfm_l2: return MatchVariant::l2;
        case Algorithm::fedfm_cg: return MatchVariant::cg;
        case Algorithm::fedfm_lite: return MatchVariant::cg;
        default: return MatchVariant::none;
    }
}

bool FedConfig::uses_anchors() const { return variant() != MatchVariant::none; }

void FedConfig::validate() const {
    if (clients < 1) throw ConfigError("config: clients must be at least 1");
    if (local_epochs < 1) throw ConfigError("config: local_epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("config: batch_size must be at least 1");
    if (lr <= 0.0) throw ConfigError("config: lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("config: momentum outside [0,1)");
    if (weight_decay < 0.0) throw ConfigError("config: negative weight_decay");
    if (lambda < 0.0) throw ConfigError("config: negative lambda");
    if (alpha <= 0.0) throw ConfigError("config: alpha must be positive");
    if (mu_prox < 0.0) throw ConfigError("config: negative mu_prox");
    if (model_period < 1) throw ConfigError("config: model_period must be at least 1");
    if (val_frac < 0.0 || val_frac >= 1.0) throw ConfigError("config: val_frac outside [0,1)");
    if (uses_anchors() && rounds > 0 && launch_round >= rounds) {
        throw ConfigError("config: launch_round must be below rounds");
    }
    if (hidden_dims.empty()) {
        throw ConfigError("config: need at least one hidden layer (the feature layer)");
    }
}

std::size_t CommLedger::total_handshakes() const {
    std::size_t t = 0;
    for (const auto& r : rows) t += r.handshakes;
    return t;
}

unsigned long long CommLedger::total_up_floats() const {
    unsigned long long t = 0;
    for (const auto& r : rows) t += r.up_floats();
    return t;
}

unsigned long long CommLedger::total_down_floats() const {
    unsigned long long t = 0;
    for (const auto& r : rows) t += r.down_floats();
    return t;
}

unsigned long long CommLedger::total_model_floats() const {
    unsigned long long t = 0;
    for (const auto& r : rows) t += r.model_up + r.model_down;
    return t;
}

unsigned long long CommLedger::total_anchor_floats() const {
    unsigned long long t = 0;
    for (const auto& r : rows) t += r.anchor_up + r.anchor_down;
    return t;
}

MlpParams local_train(const LabeledDataset& client_ds, MlpParams init_params,
                      const AnchorSet* anchors, const FedConfig& cfg, std::size_t round,
                      std::size_t client_id, LossBreakdown* mean_loss_out) {
    if (client_ds.size() == 0) throw ContractError("local_train: empty client dataset");

    MatchVariant variant = cfg.variant();
    if (variant != MatchVariant::none && round < cfg.launch_round) {
        variant = MatchVariant::none;  // FedAvg warmup before the launch round
    }
    if (variant != MatchVariant::none && anchors == nullptr) {
        if (cfg.algorithm == Algorithm::fedfm_lite) {
            // Lite anchors arrive one round late; nothing to match yet.
            variant = MatchVariant::none;
        } else {
            throw ProtocolError("local_train: matching active but no anchors for round " +
                                std::to_string(round));
        }
    }

    const bool prox = cfg.algorithm == Algorithm::fedprox && cfg.mu_prox != 0.0;
    const MlpParams reference = prox ? init_params : MlpParams{};

    MlpParams w = std::move(init_params);
    ParamGrads momentum = ParamGrads::zeros_like(w);
    const std::size_t n = client_ds.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    LossBreakdown running;
    running.lambda = cfg.lambda;
    double seen = 0.0;

    for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        auto rng = make_rng(derive_seed(cfg.seed, {kTagBatch, client_id, round, epoch}));
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            const std::vector<std::size_t> batch_idx(order.begin() + start, order.begin() + stop);
            const LabeledDataset batch = client_ds.select(batch_idx);

            const ForwardCache cache = mlp_forward(w, batch.inputs);
            CombinedLoss loss = combined_local_loss(cache, batch.labels, anchors, cfg.lambda,
                                                    variant, cfg.alpha);
            ParamGrads grads = mlp_backward(w, cache, loss.d_logits, loss.d_features);
            if (prox) {
                for (std::size_t l = 0; l < grads.weights.size(); ++l) {
                    for (std::size_t i = 0; i < grads.weights[l].values.size(); ++i) {
                        grads.weights[l].values[i] +=
                            cfg.mu_prox * (w.weights[l].values[i] - reference.weights[l].values[i]);
                    }
                    for (std::size_t i = 0; i < grads.biases[l].size(); ++i) {
                        grads.biases[l][i] +=
                            cfg.mu_prox * (w.biases[l][i] - reference.biases[l][i]);
                    }
                }
            }
            std::tie(w, momentum) = sgd_step(std::move(w), grads, std::move(momentum), cfg.lr,
                                             cfg.momentum, cfg.weight_decay);

            const double bn = static_cast<double>(batch.size());
            running.task_loss += bn * loss.breakdown.task_loss;
            running.match_loss += bn * loss.breakdown.match_loss;
            running.total += bn * loss.breakdown.total;
            seen += bn;
        }
    }
    if (mean_loss_out != nullptr) {
        running.task_loss /= seen;
        running.match_loss /= seen;
        running.total /= seen;
        *mean_loss_out = running;
    }
    return w;
}

FedEngine::FedEngine(FedConfig cfg, const ClientSplit& data, LabeledDataset test)
    : cfg_(std::move(cfg)), test_(std::move(test)) {
    cfg_.validate();
    if (data.clients.size() != cfg_.clients) {
        throw ConfigError("engine: split has " + std::to_string(data.clients.size()) +
                          " clients, config says " + std::to_string(cfg_.clients));
    }
    for (const auto& c : data.clients) {
        if (c.size() == 0) throw ConfigError("engine: empty client dataset");
    }

    // Per-client validation holdout. Stratified where a category has at
    // least 2 samples; singleton categories stay on the training side.
    for (std::size_t k = 0; k < data.clients.size(); ++k) {
        const LabeledDataset& ds = data.clients[k];
        if (cfg_.val_frac == 0.0) {
            train_.push_back(ds);
            val_.push_back(ds);
            continue;
        }
        auto rng = make_rng(derive_seed(cfg_.seed, {kTagValSplit, k}));
        std::vector<std::vector<std::size_t>> buckets(ds.num_classes);
        for (std::size_t i = 0; i < ds.size(); ++i) {
            buckets[static_cast<std::size_t>(ds.labels[i])].push_back(i);
        }
        std::vector<std::size_t> tr, va;
        for (auto& idx : buckets) {
            if (idx.size() < 2) {
                tr.insert(tr.end(), idx.begin(), idx.end());
                continue;
            }
            std::shuffle(idx.begin(), idx.end(), rng);
            std::size_t take = static_cast<std::size_t>(
                std::llround(cfg_.val_frac * static_cast<double>(idx.size())));
            take = std::min(take, idx.size() - 1);
            va.insert(va.end(), idx.begin(), idx.begin() + take);
            tr.insert(tr.end(), idx.begin() + take, idx.end());
        }
        std::sort(tr.begin(), tr.end());
        std::sort(va.begin(), va.end());
        train_.push_back(ds.select(tr));
        val_.push_back(va.empty() ? train_.back() : ds.select(va));
    }

    std::size_t total = 0;
    for (const auto& t : train_) total += t.size();
    for (const auto& t : train_) {
        p_.push_back(static_cast<double>(t.size()) / static_cast<double>(total));
    }

    std::vector<std::size_t> dims;
    dims.push_back(train_.front().inputs.cols);
    dims.insert(dims.end(), cfg_.hidden_dims.begin(), cfg_.hidden_dims.end());
    dims.push_back(train_.front().num_classes);
    global_model_ = MlpParams::init(dims, derive_seed(cfg_.seed, {kTagInit}));
    client_models_.assign(cfg_.clients, global_model_);
    anchors_ = AnchorSet::undefined(train_.front().num_classes, global_model_.feature_dim());
    best_model_ = global_model_;
}

double FedEngine::local_iterations_mean() const {
    double acc = 0.0;
    for (const auto& t : train_) {
        const auto batches = (t.size() + cfg_.batch_size - 1) / cfg_.batch_size;
        acc += static_cast<double>(cfg_.local_epochs * batches);
    }
    return acc / static_cast<double>(train_.size());
}

double FedEngine::mean_validation_accuracy(const MlpParams& model) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < val_.size(); ++k) {
        acc += accuracy(model, val_[k]);
    }
    return acc / static_cast<double>(val_.size());
}

void FedEngine::finish_record(RoundRecord& rec, const std::vector<LossBreakdown>& losses,
                              const MlpParams& before) {
    rec.round = round_;
    for (const auto& l : losses) {
        rec.mean_loss.task_loss += l.task_loss;
        rec.mean_loss.match_loss += l.match_loss;
        rec.mean_loss.total += l.total;
    }
    const double inv = 1.0 / static_cast<double>(losses.size());
    rec.mean_loss.task_loss *= inv;
    rec.mean_loss.match_loss *= inv;
    rec.mean_loss.total *= inv;
    rec.mean_loss.lambda = cfg_.lambda;

    rec.val_accuracy = mean_validation_accuracy(global_model_);
    rec.test_accuracy = test_.size() > 0 ? accuracy(global_model_, test_)
                                         : std::numeric_limits<double>::quiet_NaN();
    rec.grad_norm_est =
        param_distance(global_model_, before) / (cfg_.lr * local_iterations_mean());
    if (rec.val_accuracy > best_val_) {
        best_val_ = rec.val_accuracy;
        best_model_ = global_model_;
    }
}

AnchorSet FedEngine::aggregate_reports(const std::vector<LocalAnchorReport>& reports) const {
    if (cfg_.aggregation == AnchorAggregation::weighted) {
        return aggregate_weighted(reports, &anchors_);
    }
    return aggregate_uniform(reports, anchors_);
}

RoundRecord FedEngine::run_round_fedavg() {
    const MlpParams before = global_model_;
    std::vector<MlpParams> trained;
    std::vector<LossBreakdown> losses(cfg_.clients);
    trained.reserve(cfg_.clients);
    for (std::size_t k = 0; k < cfg_.clients; ++k) {
        trained.push_back(
            local_train(train_[k], global_model_, nullptr, cfg_, round_, k, &losses[k]));
    }
    global_model_ = weighted_param_sum(trained, p_);

    LedgerRow row;
    row.round = round_;
    row.handshakes = 1;
    const unsigned long long model_floats =
        static_cast<unsigned long long>(cfg_.clients) * param_count(global_model_);
    row.model_up = model_floats;
    row.model_down = model_floats;
    ledger_.rows.push_back(row);

    RoundRecord rec;
    finish_record(rec, losses, before);
    ++round_;
    return rec;
}

RoundRecord FedEngine::run_round_fedfm() {
    if (round_ < cfg_.launch_round) {
        throw ProtocolError("run_round_fedfm before the launch round");
    }
    const MlpParams before = global_model_;
    RoundRecord rec;

    // Anchor update on the current global model, before any local training.
    std::vector<LocalAnchorReport> reports;
    reports.reserve(cfg_.clients);
    for (std::size_t k = 0; k < cfg_.clients; ++k) {
        reports.push_back(local_anchors(global_model_, train_[k], static_cast<int>(k)));
    }
    const AnchorSet prev = anchors_;
    AnchorSet fresh = aggregate_reports(reports);
    fresh.round_tag = static_cast<long>(round_);

    if (prev.any_present()) {
        double disp = 0.0;
        std::size_t both = 0;
        for (std::size_t c = 0; c < fresh.num_categories(); ++c) {
            if (prev.present[c] && fresh.present[c]) {
                disp += row_distance(fresh.anchors, prev.anchors, c);
                ++both;
            }
        }
        if (both > 0) rec.anchor_displacement = disp / static_cast<double>(both);
        if (cfg_.algorithm == Algorithm::fedfm_l2 &&
            cfg_.aggregation == AnchorAggregation::weighted) {
            auto [phi_old, phi_new] =
                lemma2_monitor(global_model_, prev, fresh, train_, cfg_.lambda);
            rec.lemma2_before = phi_old;
            rec.lemma2_after = phi_new;
            if (phi_new > phi_old + 1e-9) {
                throw ProtocolError("anchor update increased the global objective at round " +
                                    std::to_string(round_));
            }
        }
    }
    anchors_ = std::move(fresh);

    std::vector<MlpParams> trained;
    std::vector<LossBreakdown> losses(cfg_.clients);
    trained.reserve(cfg_.clients);
    for (std::size_t k = 0; k < cfg_.clients; ++k) {
        trained.push_back(
            local_train(train_[k], global_model_, &anchors_, cfg_, round_, k, &losses[k]));
    }
    global_model_ = weighted_param_sum(trained, p_);

    LedgerRow row;
    row.round = round_;
    row.handshakes = 2;
    const unsigned long long K = cfg_.clients;
    row.model_up = K * param_count(global_model_);
    row.model_down = row.model_up;
    row.anchor_up = K * anchors_.num_categories() * anchors_.feature_dim();
    row.anchor_down = row.anchor_up;
    if (cfg_.aggregation == AnchorAggregation::weighted) {
        row.count_ints_up = K * anchors_.num_categories();
    }
    ledger_.rows.push_back(row);

    finish_record(rec, losses, before);
    ++round_;
    return rec;
}

RoundRecord FedEngine::run_round_fedfm_lite() {
    RoundRecord rec;
    rec.round = round_;

    // Train from each client's own model with the anchors received last round.
    const AnchorSet* train_anchors =
        (round_ >= cfg_.launch_round && anchors_.any_present()) ? &anchors_ : nullptr;
    std::vector<MlpParams> trained;
    std::vector<LossBreakdown> losses(cfg_.clients);
    trained.reserve(cfg_.clients);
    for (std::size_t k = 0; k < cfg_.clients; ++k) {
        trained.push_back(
            local_train(train_[k], client_models_[k], train_anchors, cfg_, round_, k, &losses[k]));
    }

    // Anchors come from the post-training local models.
    std::vector<LocalAnchorReport> reports;
    reports.reserve(cfg_.clients);
    for (std::size_t k = 0; k < cfg_.clients; ++k) {
        reports.push_back(local_anchors(trained[k], train_[k], static_cast<int>(k)));
    }
    const AnchorSet prev = anchors_;
    AnchorSet fresh = aggregate_reports(reports);
    fresh.round_tag = static_cast<long>(round_);
    if (prev.any_present()) {
        double disp = 0.0;
        std::size_t both = 0;
        for (std::size_t c = 0; c < fresh.num_categories(); ++c) {
            if (prev.present[c] && fresh.present[c]) {
                disp += row_distance(fresh.anchors, prev.anchors, c);
                ++both;
            }
        }
        if (both > 0) rec.anchor_displacement = disp / static_cast<double>(both);
    }
    anchors_ = std::move(fresh);

    const bool model_round = round_ % cfg_.model_period == 0;
    LedgerRow row;
    row.round = round_;
    row.handshakes = 1;
    const unsigned long long K = cfg_.clients;
    row.anchor_up = K * anchors_.num_categories() * anchors_.feature_dim();
    row.anchor_down = row.anchor_up;
    if (cfg_.aggregation == AnchorAggregation::weighted) {
        row.count_ints_up = K * anchors_.num_categories();
    }
    if (model_round) {
        global_model_ = weighted_param_sum(trained, p_);
        for (std::size_t k = 0; k < cfg_.clients; ++k) client_models_[k] = global_model_;
        row.model_up = K * param_count(global_model_);
        row.model_down = row.model_up;
    } else {
        // Clients carry their own models into the next round.
        for (std::size_t k = 0; k < cfg_.clients; ++k) client_models_[k] = std::move(trained[k]);
    }
    ledger_.rows.push_back(row);

    for (const auto& l : losses) {
        rec.mean_loss.task_loss += l.task_loss;
        rec.mean_loss.match_loss += l.match_loss;
        rec.mean_loss.total += l.total;
    }
    const double inv = 1.0 / static_cast<double>(losses.size());
    rec.mean_loss.task_loss *= inv;
    rec.mean_loss.match_loss *= inv;
    rec.mean_loss.total *= inv;
    rec.mean_loss.lambda = cfg_.lambda;

    if (model_round) {
        rec.val_accuracy = mean_validation_accuracy(global_model_);
        if (rec.val_accuracy > best_val_) {
            best_val_ = rec.val_accuracy;
            best_model_ = global_model_;
        }
    } else {
        double acc = 0.0;
        for (std::size_t k = 0; k < cfg_.clients; ++k) {
            acc += accuracy(client_models_[k], val_[k]);
        }
        rec.val_accuracy = acc / static_cast<double>(cfg_.clients);
    }
    rec.test_accuracy = test_.size() > 0 ? accuracy(global_model_, test_)
                                         : std::numeric_limits<double>::quiet_NaN();
    ++round_;
    return rec;
}

RoundRecord FedEngine::run_round() {
    switch (cfg_.algorithm) {
        case Algorithm::fedfm_lite:
            return run_round_fedfm_lite();
        case Algorithm::fedfm_l2:
        case Algorithm::fedfm_cg:
            return round_ < cfg_.launch_round ? run_round_fedavg() : run_round_fedfm();
        default:
            return run_round_fedavg();
    }
}

ExperimentResult FedEngine::run() {
    ExperimentResult result;
    result.rounds.reserve(cfg_.rounds);
    while (round_ < cfg_.rounds) {
        result.rounds.push_back(run_round());
    }
    result.ledger = ledger_;
    result.final_model = global_model_;
    result.best_model = best_val_ >= 0.0 ? best_model_ : global_model_;
    result.best_val_accuracy = std::max(best_val_, 0.0);
    result.best_test_accuracy = test_.size() > 0
                                    ? accuracy(result.best_model, test_)
                                    : std::numeric_limits<double>::quiet_NaN();
    return result;
}

ExperimentResult run_experiment(const FedConfig& cfg, const ClientSplit& data,
                                const LabeledDataset& test) {
    FedEngine engine(cfg, data, test);
    return engine.run();
}

}  // namespace fedfm
