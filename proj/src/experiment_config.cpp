#include "fedfm/experiment_config.hpp"

#include <filesystem>
#include <set>

#include <json.hpp>

#include "fedfm/errors.hpp"
#include "fedfm/io_util.hpp"
#include "fedfm/rng.hpp"

using nlohmann::json;

namespace fedfm {

namespace {

constexpr std::uint64_t kTagTestSplit = 0x51;
constexpr std::uint64_t kTagPartition = 0x52;

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& prefix) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (allowed.count(it.key()) == 0) {
            throw ConfigError("unknown key '" + prefix + it.key() + "'");
        }
    }
}

template <typename T>
T require(const json& obj, const std::string& key, const std::string& prefix) {
    if (!obj.contains(key)) {
        throw ConfigError("missing required key '" + prefix + key + "'");
    }
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad value for key '" + prefix + key + "'");
    }
}

template <typename T>
T optional(const json& obj, const std::string& key, const std::string& prefix, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad value for key '" + prefix + key + "'");
    }
}

}  // namespace

BuiltData build_data(const DataSpec& spec, std::size_t clients) {
    LabeledDataset pool;
    LabeledDataset test;
    if (spec.source == DataSpec::Source::synthetic) {
        const std::size_t total_per_class = spec.per_class + spec.test_per_class;
        LabeledDataset full = gen_gaussian_mixture(spec.classes, spec.input_dim, total_per_class,
                                                   spec.separation, spec.data_seed);
        if (spec.test_per_class == 0) {
            pool = std::move(full);
        } else {
            const double frac = static_cast<double>(spec.test_per_class) /
                                static_cast<double>(total_per_class);
            std::tie(pool, test) =
                holdout_split(full, frac, derive_seed(spec.data_seed, {kTagTestSplit}));
        }
    } else {
        LabeledDataset full = load_csv_dataset(spec.path, spec.classes);
        if (spec.test_frac == 0.0) {
            pool = std::move(full);
        } else {
            std::tie(pool, test) =
                holdout_split(full, spec.test_frac, derive_seed(spec.data_seed, {kTagTestSplit}));
        }
    }

    BuiltData out;
    const std::uint64_t pseed = derive_seed(spec.data_seed, {kTagPartition});
    switch (spec.partition) {
        case DataSpec::Partition::dirichlet:
            out.split = partition_dirichlet(pool, clients, spec.beta, pseed);
            break;
        case DataSpec::Partition::dominant:
            out.split = partition_dominant(pool, clients, spec.dominant_frac, pseed);
            break;
        case DataSpec::Partition::missing:
            out.split = partition_missing(pool, clients, spec.missing, pseed);
            break;
    }
    out.test = std::move(test);
    return out;
}

ExperimentFile load_experiment_file(const std::string& path) {
    const std::string raw = read_file(path);
    json doc;
    try {
        doc = json::parse(raw);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": not valid JSON: " + e.what());
    }
    if (!doc.is_object()) throw ConfigError(path + ": top level must be an object");

    static const std::set<std::string> top_keys = {
        "name",      "algorithm",    "rounds",     "clients",     "local_epochs",
        "batch_size", "lr",          "momentum",   "weight_decay", "lambda",
        "alpha",     "launch_round", "mu_prox",    "model_period", "aggregation",
        "seed",      "val_frac",     "hidden_dims", "data",        "out_dir"};
    reject_unknown_keys(doc, top_keys, "");

    ExperimentFile exp;
    exp.config_hash = fnv1a_hex(raw);
    exp.name = optional<std::string>(doc, "name", "",
                                     std::filesystem::path(path).stem().string());

    FedConfig& fed = exp.fed;
    fed.algorithm = algorithm_from_name(require<std::string>(doc, "algorithm", ""));
    fed.rounds = optional<std::size_t>(doc, "rounds", "", 40);
    fed.clients = optional<std::size_t>(doc, "clients", "", 10);
    fed.local_epochs = optional<std::size_t>(doc, "local_epochs", "", 2);
    fed.batch_size = optional<std::size_t>(doc, "batch_size", "", 32);
    fed.lr = optional<double>(doc, "lr", "", 0.01);
    fed.momentum = optional<double>(doc, "momentum", "", 0.9);
    fed.weight_decay = optional<double>(doc, "weight_decay", "", 1e-5);
    fed.aggregation =
        aggregation_from_name(optional<std::string>(doc, "aggregation", "", "weighted"));
    fed.seed = optional<std::uint64_t>(doc, "seed", "", 1);
    fed.val_frac = optional<double>(doc, "val_frac", "", 0.2);
    fed.hidden_dims =
        optional<std::vector<std::size_t>>(doc, "hidden_dims", "", {64, 32});

    // Algorithm-critical knobs never default silently: an algorithm that
    // reads one requires it in the file.
    const bool fm = fed.uses_anchors();
    if (fm) {
        fed.lambda = require<double>(doc, "lambda", "");
        fed.launch_round = require<std::size_t>(doc, "launch_round", "");
    } else {
        fed.lambda = optional<double>(doc, "lambda", "", 0.0);
        fed.launch_round = optional<std::size_t>(doc, "launch_round", "", 0);
    }
    if (fed.algorithm == Algorithm::fedfm_cg || fed.algorithm == Algorithm::fedfm_lite) {
        fed.alpha = require<double>(doc, "alpha", "");
    } else {
        fed.alpha = optional<double>(doc, "alpha", "", 1.0);
    }
    if (fed.algorithm == Algorithm::fedprox) {
        fed.mu_prox = require<double>(doc, "mu_prox", "");
    } else {
        fed.mu_prox = optional<double>(doc, "mu_prox", "", 0.0);
    }
    if (fed.algorithm == Algorithm::fedfm_lite) {
        fed.model_period = require<std::size_t>(doc, "model_period", "");
    } else {
        fed.model_period = optional<std::size_t>(doc, "model_period", "", 1);
    }

    DataSpec& data = exp.data;
    if (doc.contains("data")) {
        const json& d = doc.at("data");
        if (!d.is_object()) throw ConfigError("'data' must be an object");
        static const std::set<std::string> data_keys = {
            "source",   "classes",       "input_dim",    "per_class", "separation",
            "test_per_class", "path",    "test_frac",    "partition", "beta",
            "dominant_frac", "missing",  "data_seed"};
        reject_unknown_keys(d, data_keys, "data.");
        const std::string source = optional<std::string>(d, "source", "data.", "synthetic");
        if (source == "synthetic") {
            data.source = DataSpec::Source::synthetic;
        } else if (source == "csv") {
            data.source = DataSpec::Source::csv;
        } else {
            throw ConfigError("data.source must be 'synthetic' or 'csv'");
        }
        data.classes = optional<std::size_t>(d, "classes", "data.", 10);
        data.input_dim = optional<std::size_t>(d, "input_dim", "data.", 32);
        data.per_class = optional<std::size_t>(d, "per_class", "data.", 100);
        data.separation = optional<double>(d, "separation", "data.", 3.0);
        data.test_per_class = optional<std::size_t>(d, "test_per_class", "data.", 50);
        if (data.source == DataSpec::Source::csv) {
            data.path = require<std::string>(d, "path", "data.");
        }
        data.test_frac = optional<double>(d, "test_frac", "data.", 0.2);
        const std::string part = optional<std::string>(d, "partition", "data.", "dirichlet");
        if (part == "dirichlet") {
            data.partition = DataSpec::Partition::dirichlet;
        } else if (part == "dominant") {
            data.partition = DataSpec::Partition::dominant;
        } else if (part == "missing") {
            data.partition = DataSpec::Partition::missing;
        } else {
            throw ConfigError("data.partition must be dirichlet, dominant or missing");
        }
        data.beta = optional<double>(d, "beta", "data.", 0.5);
        data.dominant_frac = optional<double>(d, "dominant_frac", "data.", 0.5);
        data.missing = optional<std::size_t>(d, "missing", "data.", 1);
        data.data_seed = optional<std::uint64_t>(d, "data_seed", "data.", 1234);
    }

    exp.out_dir = optional<std::string>(doc, "out_dir", "", "out/" + exp.name);

    try {
        fed.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return exp;
}

std::string effective_config_json(const ExperimentFile& exp) {
    json d;
    d["name"] = exp.name;
    d["algorithm"] = algorithm_name(exp.fed.algorithm);
    d["rounds"] = exp.fed.rounds;
    d["clients"] = exp.fed.clients;
    d["local_epochs"] = exp.fed.local_epochs;
    d["batch_size"] = exp.fed.batch_size;
    d["lr"] = exp.fed.lr;
    d["momentum"] = exp.fed.momentum;
    d["weight_decay"] = exp.fed.weight_decay;
    d["lambda"] = exp.fed.lambda;
    d["alpha"] = exp.fed.alpha;
    d["launch_round"] = exp.fed.launch_round;
    d["mu_prox"] = exp.fed.mu_prox;
    d["model_period"] = exp.fed.model_period;
    d["aggregation"] = aggregation_name(exp.fed.aggregation);
    d["seed"] = exp.fed.seed;
    d["val_frac"] = exp.fed.val_frac;
    d["hidden_dims"] = exp.fed.hidden_dims;
    json data;
    data["source"] = exp.data.source == DataSpec::Source::synthetic ? "synthetic" : "csv";
    data["classes"] = exp.data.classes;
    if (exp.data.source == DataSpec::Source::synthetic) {
        data["input_dim"] = exp.data.input_dim;
        data["per_class"] = exp.data.per_class;
        data["separation"] = exp.data.separation;
        data["test_per_class"] = exp.data.test_per_class;
    } else {
        data["path"] = exp.data.path;
        data["test_frac"] = exp.data.test_frac;
    }
    switch (exp.data.partition) {
        case DataSpec::Partition::dirichlet:
            data["partition"] = "dirichlet";
            data["beta"] = exp.data.beta;
            break;
        case DataSpec::Partition::dominant:
            data["partition"] = "dominant";
            data["dominant_frac"] = exp.data.dominant_frac;
            break;
        case DataSpec::Partition::missing:
            data["partition"] = "missing";
            data["missing"] = exp.data.missing;
            break;
    }
    data["data_seed"] = exp.data.data_seed;
    d["data"] = data;
    d["out_dir"] = exp.out_dir;
    d["config_hash"] = exp.config_hash;
    return d.dump(2);
}

}  // namespace fedfm
