#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedfm/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"fedfm: anchor-based feature-matching federated learning simulator"};
    app.require_subcommand(1);

    std::string run_config;
    CLI::App* run = app.add_subcommand("run", "run one experiment from a config file");
    run->add_option("config", run_config, "experiment config (JSON)")->required();

    std::vector<std::string> compare_configs;
    std::string compare_out;
    CLI::App* compare = app.add_subcommand("compare", "run several configs and tabulate them");
    compare->add_option("configs", compare_configs, "experiment configs (JSON)")->expected(-2);
    compare->add_option("--out", compare_out, "directory for compare.csv");

    std::string check_config;
    std::string check_fault;
    CLI::App* check = app.add_subcommand("check", "run the verification suite");
    check->add_option("config", check_config, "optional config; its seed drives the checks");
    check->add_option("--break", check_fault, "test hook: perturb the named check")
        ->group("");  // hidden

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return fedfm::cmd_run(run_config);
    if (compare->parsed()) return fedfm::cmd_compare(compare_configs, compare_out);
    if (check->parsed()) return fedfm::cmd_check(check_config, check_fault);
    return 2;
}
