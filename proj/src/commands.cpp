#include "fedfm/commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "fedfm/checks.hpp"
#include "fedfm/errors.hpp"
#include "fedfm/experiment_config.hpp"
#include "fedfm/io_util.hpp"
#include "fedfm/metrics.hpp"
#include "fedfm/protocol.hpp"
#include "fedfm/rng.hpp"

using nlohmann::json;

namespace fedfm {

namespace {

constexpr std::size_t kFeatureSampleCap = 2000;
constexpr std::uint64_t kTagFeatureSample = 0x71;

struct RunOutput {
    ExperimentResult result;
    double final_test_accuracy = std::numeric_limits<double>::quiet_NaN();
    double nmi_score = std::numeric_limits<double>::quiet_NaN();
    double silhouette_score = std::numeric_limits<double>::quiet_NaN();
    FeatureDump dump;
    bool has_dump = false;
};

RunOutput execute(const ExperimentFile& exp) {
    const BuiltData data = build_data(exp.data, exp.fed.clients);
    RunOutput out;
    out.result = run_experiment(exp.fed, data.split, data.test);
    if (data.test.size() > 0) {
        out.final_test_accuracy = accuracy(out.result.final_model, data.test);
        out.dump = dump_features(out.result.final_model, data.test, kFeatureSampleCap,
                                 derive_seed(exp.fed.seed, {kTagFeatureSample}));
        out.has_dump = true;
        const std::vector<int> assignments =
            kmeans(out.dump.features, data.test.num_classes,
                   derive_seed(exp.fed.seed, {kTagFeatureSample, 1}));
        out.nmi_score = nmi(assignments, out.dump.labels);
        out.silhouette_score = silhouette(out.dump.features, out.dump.labels);
    }
    return out;
}

std::string rounds_csv(const std::vector<RoundRecord>& rounds) {
    std::ostringstream ss;
    ss << "round,task_loss,match_loss,total_loss,val_accuracy,test_accuracy,"
          "lemma2_before,lemma2_after,anchor_displacement,grad_norm_est\n";
    for (const auto& r : rounds) {
        ss << r.round << ',' << format_double(r.mean_loss.task_loss) << ','
           << format_double(r.mean_loss.match_loss) << ',' << format_double(r.mean_loss.total)
           << ',' << format_double(r.val_accuracy) << ',' << format_double(r.test_accuracy) << ','
           << format_double(r.lemma2_before) << ',' << format_double(r.lemma2_after) << ','
           << format_double(r.anchor_displacement) << ',' << format_double(r.grad_norm_est)
           << '\n';
    }
    return ss.str();
}

std::string ledger_csv(const CommLedger& ledger) {
    std::ostringstream ss;
    ss << "round,handshakes,up_floats,down_floats,model_up,model_down,anchor_up,anchor_down,"
          "count_ints_up\n";
    for (const auto& r : ledger.rows) {
        ss << r.round << ',' << r.handshakes << ',' << r.up_floats() << ',' << r.down_floats()
           << ',' << r.model_up << ',' << r.model_down << ',' << r.anchor_up << ','
           << r.anchor_down << ',' << r.count_ints_up << '\n';
    }
    return ss.str();
}

std::string features_csv(const FeatureDump& dump) {
    std::ostringstream ss;
    ss << "label,pred";
    for (std::size_t j = 0; j < dump.features.cols; ++j) ss << ",f_" << (j + 1);
    ss << '\n';
    for (std::size_t i = 0; i < dump.features.rows; ++i) {
        ss << dump.labels[i] << ',' << dump.predicted[i];
        for (std::size_t j = 0; j < dump.features.cols; ++j) {
            ss << ',' << format_double(dump.features(i, j));
        }
        ss << '\n';
    }
    return ss.str();
}

std::string schema_json() {
    json s;
    s["rounds.csv"] = {
        {"round", "0-based communication round index"},
        {"task_loss", "mean over clients of the running-mean task loss"},
        {"match_loss", "mean over clients of the running-mean feature-matching loss"},
        {"total_loss", "task_loss + lambda * match_loss, averaged the same way"},
        {"val_accuracy", "mean accuracy over the per-client validation sets"},
        {"test_accuracy", "accuracy of the current global model on the test set"},
        {"lemma2_before", "global objective under the previous anchors (l2 runs)"},
        {"lemma2_after", "global objective under the recomputed anchors (l2 runs)"},
        {"anchor_displacement", "mean l2 movement of the global anchors"},
        {"grad_norm_est", "global parameter displacement / (lr * mean local iterations)"}};
    s["ledger.csv"] = {
        {"round", "0-based communication round index"},
        {"handshakes", "client-server synchronization points this round"},
        {"up_floats", "model_up + anchor_up"},
        {"down_floats", "model_down + anchor_down"},
        {"model_up", "model floats uploaded by all clients"},
        {"model_down", "model floats broadcast to all clients"},
        {"anchor_up", "anchor floats uploaded by all clients"},
        {"anchor_down", "anchor floats broadcast to all clients"},
        {"count_ints_up", "category-count integers uploaded (weighted aggregation)"}};
    s["features.csv"] = {
        {"label", "true category"},
        {"pred", "argmax prediction of the final global model"},
        {"f_i", "normalized feature coordinates"}};
    s["compare.csv"] = {
        {"name", "experiment name"},
        {"algorithm", "algorithm identifier"},
        {"best_test_accuracy", "test accuracy of the best-validation model"},
        {"nmi", "clustering quality of final-model test features"},
        {"silhouette", "silhouette score of final-model test features"},
        {"total_floats", "total up+down floating point units"},
        {"handshakes", "total synchronization points"}};
    return s.dump(2);
}

std::string summary_json(const ExperimentFile& exp, const RunOutput& out) {
    json s;
    s["name"] = exp.name;
    s["algorithm"] = algorithm_name(exp.fed.algorithm);
    s["config_hash"] = exp.config_hash;
    s["seed"] = exp.fed.seed;
    s["rounds"] = exp.fed.rounds;
    s["best_val_accuracy"] = out.result.best_val_accuracy;
    s["best_test_accuracy"] = out.result.best_test_accuracy;
    s["final_test_accuracy"] = out.final_test_accuracy;
    s["nmi"] = out.nmi_score;
    s["silhouette"] = out.silhouette_score;
    s["total_handshakes"] = out.result.ledger.total_handshakes();
    s["total_up_floats"] = out.result.ledger.total_up_floats();
    s["total_down_floats"] = out.result.ledger.total_down_floats();
    s["total_model_floats"] = out.result.ledger.total_model_floats();
    s["total_anchor_floats"] = out.result.ledger.total_anchor_floats();
    return s.dump(2);
}

void write_outputs(const ExperimentFile& exp, const RunOutput& out) {
    const std::string dir = resolve_output_path(exp.out_dir);
    ensure_dir(dir);
    namespace fs = std::filesystem;
    atomic_write_file((fs::path(dir) / "rounds.csv").string(), rounds_csv(out.result.rounds));
    atomic_write_file((fs::path(dir) / "ledger.csv").string(), ledger_csv(out.result.ledger));
    atomic_write_file((fs::path(dir) / "summary.json").string(), summary_json(exp, out));
    atomic_write_file((fs::path(dir) / "schema.json").string(), schema_json());
    if (out.has_dump) {
        atomic_write_file((fs::path(dir) / "features.csv").string(), features_csv(out.dump));
    }
}

}  // namespace

int cmd_run(const std::string& config_path) {
    ExperimentFile exp;
    try {
        exp = load_experiment_file(config_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    std::cout << "effective config:\n" << effective_config_json(exp) << "\n";
    try {
        const RunOutput out = execute(exp);
        write_outputs(exp, out);
        std::printf(
            "%s: best test accuracy %.4f (val %.4f), NMI %.4f, SS %.4f, "
            "%zu handshakes, %llu up / %llu down floats -> %s\n",
            exp.name.c_str(), out.result.best_test_accuracy, out.result.best_val_accuracy,
            out.nmi_score, out.silhouette_score, out.result.ledger.total_handshakes(),
            out.result.ledger.total_up_floats(), out.result.ledger.total_down_floats(),
            resolve_output_path(exp.out_dir).c_str());
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << "\n";
        return 1;
    }
}

int cmd_compare(const std::vector<std::string>& config_paths, const std::string& out_dir) {
    if (config_paths.size() < 2) {
        std::cerr << "config error: compare needs at least 2 configs\n";
        return 2;
    }
    std::vector<ExperimentFile> exps;
    try {
        for (const auto& p : config_paths) exps.push_back(load_experiment_file(p));
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    for (std::size_t i = 1; i < exps.size(); ++i) {
        if (exps[i].data.data_seed != exps[0].data.data_seed) {
            std::cerr << "warning: " << exps[i].name << " uses data_seed "
                      << exps[i].data.data_seed << " but " << exps[0].name << " uses "
                      << exps[0].data.data_seed << "; comparison is across datasets\n";
        }
    }

    std::ostringstream csv;
    csv << "name,algorithm,best_test_accuracy,nmi,silhouette,total_floats,handshakes\n";
    std::printf("%-24s %-10s %9s %8s %8s %14s %10s\n", "name", "algorithm", "accuracy", "nmi",
                "silh", "total_floats", "handshakes");
    try {
        for (const auto& exp : exps) {
            const RunOutput out = execute(exp);
            const unsigned long long floats =
                out.result.ledger.total_up_floats() + out.result.ledger.total_down_floats();
            csv << exp.name << ',' << algorithm_name(exp.fed.algorithm) << ','
                << format_double(out.result.best_test_accuracy) << ','
                << format_double(out.nmi_score) << ',' << format_double(out.silhouette_score)
                << ',' << floats << ',' << out.result.ledger.total_handshakes() << '\n';
            std::printf("%-24s %-10s %9.4f %8.4f %8.4f %14llu %10zu\n", exp.name.c_str(),
                        algorithm_name(exp.fed.algorithm).c_str(), out.result.best_test_accuracy,
                        out.nmi_score, out.silhouette_score, floats,
                        out.result.ledger.total_handshakes());
        }
    } catch (const std::exception& e) {
        std::cerr << "compare failed: " << e.what() << "\n";
        return 1;
    }
    if (!out_dir.empty()) {
        const std::string dir = resolve_output_path(out_dir);
        ensure_dir(dir);
        atomic_write_file((std::filesystem::path(dir) / "compare.csv").string(), csv.str());
        atomic_write_file((std::filesystem::path(dir) / "schema.json").string(), schema_json());
    }
    return 0;
}

int cmd_check(const std::string& config_path, const std::string& fault) {
    CheckOptions opts;
    opts.fault = fault;
    if (!config_path.empty()) {
        try {
            const ExperimentFile exp = load_experiment_file(config_path);
            opts.seed = exp.fed.seed;
        } catch (const ConfigError& e) {
            std::cerr << "config error: " << e.what() << "\n";
            return 2;
        }
    }
    const std::vector<CheckResult> results = run_all_checks(opts);
    bool all_pass = true;
    for (const auto& r : results) {
        std::printf("[%s] %-26s %s\n", r.pass ? " ok " : "FAIL", r.name.c_str(),
                    r.detail.c_str());
        all_pass = all_pass && r.pass;
    }
    std::printf("%zu checks, %s\n", results.size(), all_pass ? "all passed" : "FAILURES present");
    return all_pass ? 0 : 1;
}

}  // namespace fedfm
