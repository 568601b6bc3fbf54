#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "cldet/errors.hpp"
#include "cldet/experiment.hpp"

namespace {

// 0 success, 2 config error, 3 data error, 4 numeric error
int code_for(const cldet::Error& e) {
    using namespace cldet;
    if (dynamic_cast<const NumericError*>(&e)) return 4;
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const HyperError*>(&e) ||
        dynamic_cast<const SpecError*>(&e)) {
        return 2;
    }
    if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
        dynamic_cast<const SchemaError*>(&e) || dynamic_cast<const LabelError*>(&e) ||
        dynamic_cast<const EmptyInputError*>(&e) || dynamic_cast<const IoError*>(&e) ||
        dynamic_cast<const MetricError*>(&e) || dynamic_cast<const ReportError*>(&e)) {
        return 3;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"continual-learning trainer and evaluator for binary detectors"};
    app.require_subcommand(1);

    std::string config_path;
    std::string profile = "desk";
    std::string out;
    std::uint64_t seed = 0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON experiment config file");
        cmd->add_option("--profile", profile, "hyperparameter profile")
            ->check(CLI::IsMember({"desk", "paper"}));
        cmd->add_option("--seed", seed, "seed override");
        cmd->add_option("--out", out, "output directory override");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic drifted-task CSVs");
    CLI::App* run = app.add_subcommand("run", "train every configured (strategy, seed) sequence");
    CLI::App* rep = app.add_subcommand("report", "evaluate checkpoints and write metric CSVs");
    CLI::App* chk =
        app.add_subcommand("grad-check", "compare tape gradients to finite differences");
    for (CLI::App* cmd : {gen, run, rep, chk}) add_common(cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (chk->parsed()) return cldet::cmd_grad_check(seed);

        cldet::ExperimentConfig config = config_path.empty()
                                             ? cldet::default_config(profile)
                                             : cldet::load_config(config_path, profile);
        if (gen->parsed()) {
            if (gen->count("--seed") > 0) config.generator.data_seed = seed;
            if (gen->count("--out") > 0) config.data_dir = out;
            return cldet::cmd_gen_data(config);
        }
        CLI::App* cmd = run->parsed() ? run : rep;
        if (cmd->count("--seed") > 0) config.seeds = {seed};
        if (cmd->count("--out") > 0) config.out_dir = out;
        return run->parsed() ? cldet::cmd_run(config) : cldet::cmd_report(config);
    } catch (const cldet::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
}
