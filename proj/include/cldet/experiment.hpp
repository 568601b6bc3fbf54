#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "cldet/dataio.hpp"
#include "cldet/metrics.hpp"
#include "cldet/strategies.hpp"
#include "cldet/trainer.hpp"

namespace cldet {

using Json = nlohmann::json;

// Synthetic benchmark source: n_tasks drifted tasks from one generator spec.
// data_seed drives the sampling noise; the drift geometry comes from the
// spec's own direction_seed.
struct GeneratorConfig {
    DriftSpec drift;
    std::size_t n_tasks = 4;
    std::uint64_t data_seed = 0;
};

// Fully determines an experiment: two executions of the same config produce
// value-identical runs and byte-identical reports.
struct ExperimentConfig {
    ModelSpec model = ModelSpec::default_spec();
    Hyper hyper;
    RunOptions options;
    std::vector<Strategy> strategies{Strategy::TrainOnAll, Strategy::FineTune, Strategy::ClAll,
                                     Strategy::ClEncoder, Strategy::ClClassifier};
    std::vector<std::uint64_t> seeds{0};
    GeneratorConfig generator;
    std::vector<std::filesystem::path> csv_tasks;  // nonempty: load these instead of data_dir
    std::filesystem::path data_dir = "data";
    std::filesystem::path out_dir = "runs";
};

// Profile defaults: "desk" (laptop-scale) or "paper" (full-length schedule).
ExperimentConfig default_config(const std::string& profile);
// File values override the profile defaults field by field; unknown keys are
// config errors.
ExperimentConfig load_config(const std::filesystem::path& path, const std::string& profile);
ExperimentConfig config_from_json(const Json& j, const std::string& profile);

Json to_json(const ModelSpec& spec);
Json to_json(const Hyper& hyper);
Json to_json(const RunOptions& options);  // identity fields only, not max_stages
Json to_json(const GeneratorConfig& gen);

// Loads the config's task list: explicit CSV paths when given, otherwise
// data_dir/task{k}.csv. Missing files are a config error raised before any
// training.
TaskSequence load_tasks(const ExperimentConfig& config);

std::filesystem::path run_dir_for(const ExperimentConfig& config, Strategy strategy,
                                  std::uint64_t seed);

// Disk-backed sequence run: checkpoints, per-stage histories, and a manifest
// land in `dir` as each stage completes; an existing manifest resumes the run
// at its first missing stage. The manifest must describe the same experiment
// or the call fails with a config error.
SequenceRun run_persistent(Strategy strategy, const TaskSequence& tasks,
                           const ExperimentConfig& config, std::uint64_t seed,
                           const std::filesystem::path& dir);

// Rebuilds a SequenceRun (checkpoint parameters only, no histories) from a
// run directory; incomplete runs raise a report error listing the missing
// stages.
SequenceRun load_run(const std::filesystem::path& dir);

// Max relative error of the tape gradients of the full combined loss
// (cross-entropy + distillation + alignment, teacher different from student)
// against central finite differences on a 32-parameter model.
double grad_check_combined(std::uint64_t seed, double eps = 1e-6);

int cmd_gen_data(const ExperimentConfig& config);
int cmd_run(const ExperimentConfig& config);
int cmd_report(const ExperimentConfig& config);
int cmd_grad_check(std::uint64_t seed);

}  // namespace cldet
