#pragma once

#include <cstdint>
#include <string>

#include "fedfm/dataset.hpp"
#include "fedfm/protocol.hpp"

namespace fedfm {

/// Data-source block of an experiment file: either a synthetic Gaussian
/// mixture or a CSV file, plus the client partition scheme.
struct DataSpec {
    enum class Source { synthetic, csv };
    enum class Partition { dirichlet, dominant, missing };

    Source source = Source::synthetic;
    std::size_t classes = 10;
    // synthetic
    std::size_t input_dim = 32;
    std::size_t per_class = 100;
    double separation = 3.0;
    std::size_t test_per_class = 50;
    // csv
    std::string path;
    double test_frac = 0.2;

    Partition partition = Partition::dirichlet;
    double beta = 0.5;
    double dominant_frac = 0.5;
    std::size_t missing = 1;
    std::uint64_t data_seed = 1234;
};

struct BuiltData {
    ClientSplit split;
    LabeledDataset test;
};

BuiltData build_data(const DataSpec& spec, std::size_t clients);

struct ExperimentFile {
    std::string name;
    FedConfig fed;
    DataSpec data;
    std::string out_dir;
    std::string config_hash;  // FNV-1a of the raw file bytes
};

/// Parses and validates an experiment file (strict JSON: unknown keys are
/// rejected, algorithm-critical fields have no silent defaults). Throws
/// ConfigError with the offending key path.
ExperimentFile load_experiment_file(const std::string& path);

/// The fully-resolved configuration as JSON text, defaults included.
std::string effective_config_json(const ExperimentFile& exp);

}  // namespace fedfm
