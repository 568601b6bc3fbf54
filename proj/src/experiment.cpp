#include "cldet/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <string>

#include "cldet/errors.hpp"
#include "cldet/losses.hpp"
#include "cldet/rng.hpp"
#include "cldet/tape.hpp"

namespace cldet {

namespace fs = std::filesystem;

namespace {

constexpr const char* kRunFormat = "cldet-run v1";
constexpr const char* kDataFormat = "cldet-data v1";

void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& ctx) {
    if (!j.is_object()) throw ConfigError("config: " + ctx + " must be an object");
    for (const auto& item : j.items()) {
        if (!allowed.count(item.key())) {
            throw ConfigError("config: unknown key '" + item.key() + "' in " + ctx);
        }
    }
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback, const std::string& ctx) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception&) {
        throw ConfigError("config: " + ctx + "." + key + " has the wrong type");
    }
}

void atomic_write(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out << content;
        if (!out) throw IoError("write to '" + tmp.string() + "' failed");
    }
    fs::rename(tmp, path);
}

void write_json_file(const fs::path& path, const Json& j) {
    atomic_write(path, j.dump(2) + "\n");
}

Json read_json_file(const fs::path& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw IoError(std::string("cannot open ") + what + " '" + path.string() + "'");
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

fs::path stage_ckpt(const fs::path& dir, std::size_t k) {
    return dir / ("stage" + std::to_string(k) + ".ckpt");
}

fs::path stage_history(const fs::path& dir, std::size_t k) {
    return dir / ("stage" + std::to_string(k) + "_history.csv");
}

std::string csv_num(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace

Json to_json(const ModelSpec& spec) {
    Json layers = Json::array();
    for (const LayerSpec& l : spec.layers) {
        layers.push_back({{"in", l.in}, {"out", l.out}, {"act", activation_name(l.act)}});
    }
    return Json{{"layers", layers}, {"split_index", spec.split_index}};
}

Json to_json(const Hyper& h) {
    return Json{{"epochs", h.epochs},
                {"batch_size", h.batch_size},
                {"patience", h.patience},
                {"lr0", h.lr0},
                {"lr_min", h.lr_min},
                {"weight_decay", h.weight_decay},
                {"beta1", h.beta1},
                {"beta2", h.beta2},
                {"eps", h.eps},
                {"temperature", h.loss.temperature},
                {"lambda_ce", h.loss.weights.ce},
                {"lambda_lwf", h.loss.weights.lwf},
                {"lambda_psa", h.loss.weights.psa},
                {"psa_normalize", h.loss.psa_normalize}};
}

Json to_json(const RunOptions& o) {
    // max_stages is an execution control (deliberate interruption), not part
    // of the run's identity, so it stays out of manifests
    return Json{{"anchor_teacher", o.anchor_teacher}, {"cosine_per_stage", o.cosine_per_stage}};
}

Json to_json(const GeneratorConfig& g) {
    return Json{{"n_tasks", g.n_tasks},
                {"data_seed", g.data_seed},
                {"dim", g.drift.dim},
                {"train_rows", g.drift.train_rows},
                {"val_rows", g.drift.val_rows},
                {"eval_rows", g.drift.eval_rows},
                {"noise", g.drift.noise},
                {"shift", g.drift.shift},
                {"angle_step_deg", g.drift.angle_step_deg},
                {"line_step", g.drift.line_step},
                {"real_spread", g.drift.real_spread},
                {"direction_seed", g.drift.direction_seed}};
}

namespace {

ModelSpec model_from_json(const Json& j, const ModelSpec& base) {
    check_keys(j, {"layers", "split_index"}, "model");
    ModelSpec spec = base;
    if (j.contains("layers")) {
        if (!j.at("layers").is_array() || j.at("layers").empty()) {
            throw ConfigError("config: model.layers must be a non-empty array");
        }
        spec.layers.clear();
        for (const Json& lj : j.at("layers")) {
            check_keys(lj, {"in", "out", "act"}, "model.layers[]");
            LayerSpec l;
            l.in = get_or<std::size_t>(lj, "in", 0, "model.layers[]");
            l.out = get_or<std::size_t>(lj, "out", 0, "model.layers[]");
            std::string act = get_or<std::string>(lj, "act", "relu", "model.layers[]");
            try {
                l.act = activation_from_name(act);
            } catch (const Error&) {
                throw ConfigError("config: model.layers[].act '" + act + "' is not relu or none");
            }
            spec.layers.push_back(l);
        }
    }
    spec.split_index = get_or<std::size_t>(j, "split_index", spec.split_index, "model");
    return spec;
}

Hyper hyper_from_json(const Json& j, Hyper h) {
    check_keys(j,
               {"epochs", "batch_size", "patience", "lr0", "lr_min", "weight_decay", "beta1",
                "beta2", "eps", "temperature", "lambda_ce", "lambda_lwf", "lambda_psa",
                "psa_normalize"},
               "hyper");
    h.epochs = get_or<std::size_t>(j, "epochs", h.epochs, "hyper");
    h.batch_size = get_or<std::size_t>(j, "batch_size", h.batch_size, "hyper");
    h.patience = get_or<std::size_t>(j, "patience", h.patience, "hyper");
    h.lr0 = get_or<double>(j, "lr0", h.lr0, "hyper");
    h.lr_min = get_or<double>(j, "lr_min", h.lr_min, "hyper");
    h.weight_decay = get_or<double>(j, "weight_decay", h.weight_decay, "hyper");
    h.beta1 = get_or<double>(j, "beta1", h.beta1, "hyper");
    h.beta2 = get_or<double>(j, "beta2", h.beta2, "hyper");
    h.eps = get_or<double>(j, "eps", h.eps, "hyper");
    h.loss.temperature = get_or<double>(j, "temperature", h.loss.temperature, "hyper");
    h.loss.weights.ce = get_or<double>(j, "lambda_ce", h.loss.weights.ce, "hyper");
    h.loss.weights.lwf = get_or<double>(j, "lambda_lwf", h.loss.weights.lwf, "hyper");
    h.loss.weights.psa = get_or<double>(j, "lambda_psa", h.loss.weights.psa, "hyper");
    h.loss.psa_normalize = get_or<bool>(j, "psa_normalize", h.loss.psa_normalize, "hyper");
    return h;
}

RunOptions options_from_json(const Json& j, RunOptions o) {
    check_keys(j, {"anchor_teacher", "cosine_per_stage", "max_stages"}, "options");
    o.anchor_teacher = get_or<bool>(j, "anchor_teacher", o.anchor_teacher, "options");
    o.cosine_per_stage = get_or<bool>(j, "cosine_per_stage", o.cosine_per_stage, "options");
    o.max_stages = get_or<std::size_t>(j, "max_stages", o.max_stages, "options");
    return o;
}

GeneratorConfig generator_from_json(const Json& j, GeneratorConfig g) {
    check_keys(j,
               {"n_tasks", "data_seed", "dim", "train_rows", "val_rows", "eval_rows", "noise",
                "shift", "angle_step_deg", "line_step", "real_spread", "direction_seed"},
               "tasks");
    g.n_tasks = get_or<std::size_t>(j, "n_tasks", g.n_tasks, "tasks");
    g.data_seed = get_or<std::uint64_t>(j, "data_seed", g.data_seed, "tasks");
    g.drift.dim = get_or<std::size_t>(j, "dim", g.drift.dim, "tasks");
    g.drift.train_rows = get_or<std::size_t>(j, "train_rows", g.drift.train_rows, "tasks");
    g.drift.val_rows = get_or<std::size_t>(j, "val_rows", g.drift.val_rows, "tasks");
    g.drift.eval_rows = get_or<std::size_t>(j, "eval_rows", g.drift.eval_rows, "tasks");
    g.drift.noise = get_or<double>(j, "noise", g.drift.noise, "tasks");
    g.drift.shift = get_or<double>(j, "shift", g.drift.shift, "tasks");
    g.drift.angle_step_deg =
        get_or<double>(j, "angle_step_deg", g.drift.angle_step_deg, "tasks");
    g.drift.line_step = get_or<double>(j, "line_step", g.drift.line_step, "tasks");
    g.drift.real_spread = get_or<double>(j, "real_spread", g.drift.real_spread, "tasks");
    g.drift.direction_seed =
        get_or<std::uint64_t>(j, "direction_seed", g.drift.direction_seed, "tasks");
    return g;
}

}  // namespace

ExperimentConfig default_config(const std::string& profile) {
    ExperimentConfig config;
    if (profile == "desk") {
        config.hyper = Hyper::desk();
    } else if (profile == "paper") {
        config.hyper = Hyper::paper();
    } else {
        throw ConfigError("unknown profile '" + profile + "' (expected desk or paper)");
    }
    return config;
}

ExperimentConfig config_from_json(const Json& j, const std::string& profile) {
    ExperimentConfig config = default_config(profile);
    check_keys(j,
               {"model", "hyper", "options", "strategies", "seeds", "tasks", "csv_tasks",
                "data_dir", "out_dir"},
               "top level");
    if (j.contains("model")) config.model = model_from_json(j.at("model"), config.model);
    if (j.contains("hyper")) config.hyper = hyper_from_json(j.at("hyper"), config.hyper);
    if (j.contains("options")) {
        config.options = options_from_json(j.at("options"), config.options);
    }
    if (j.contains("strategies")) {
        if (!j.at("strategies").is_array() || j.at("strategies").empty()) {
            throw ConfigError("config: strategies must be a non-empty array");
        }
        config.strategies.clear();
        for (const Json& sj : j.at("strategies")) {
            if (!sj.is_string()) throw ConfigError("config: strategies entries must be strings");
            config.strategies.push_back(strategy_from_name(sj.get<std::string>()));
        }
    }
    if (j.contains("seeds")) {
        if (!j.at("seeds").is_array() || j.at("seeds").empty()) {
            throw ConfigError("config: seeds must be a non-empty array");
        }
        config.seeds.clear();
        for (const Json& sj : j.at("seeds")) {
            if (!sj.is_number_unsigned() && !sj.is_number_integer()) {
                throw ConfigError("config: seeds entries must be non-negative integers");
            }
            config.seeds.push_back(sj.get<std::uint64_t>());
        }
    }
    if (j.contains("tasks")) {
        config.generator = generator_from_json(j.at("tasks"), config.generator);
    }
    if (j.contains("csv_tasks")) {
        if (!j.at("csv_tasks").is_array()) {
            throw ConfigError("config: csv_tasks must be an array of paths");
        }
        config.csv_tasks.clear();
        for (const Json& pj : j.at("csv_tasks")) {
            if (!pj.is_string()) throw ConfigError("config: csv_tasks entries must be strings");
            config.csv_tasks.emplace_back(pj.get<std::string>());
        }
    }
    config.data_dir = get_or<std::string>(j, "data_dir", config.data_dir.string(), "top level");
    config.out_dir = get_or<std::string>(j, "out_dir", config.out_dir.string(), "top level");
    return config;
}

ExperimentConfig load_config(const fs::path& path, const std::string& profile) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError("config file '" + path.string() + "': " + e.what());
    }
    return config_from_json(j, profile);
}

TaskSequence load_tasks(const ExperimentConfig& config) {
    std::vector<fs::path> paths = config.csv_tasks;
    if (paths.empty()) {
        if (config.generator.n_tasks == 0) throw ConfigError("config: tasks.n_tasks is zero");
        for (std::size_t k = 0; k < config.generator.n_tasks; ++k) {
            paths.push_back(config.data_dir / ("task" + std::to_string(k) + ".csv"));
        }
    }
    std::string missing;
    for (const fs::path& p : paths) {
        if (!fs::exists(p)) missing += (missing.empty() ? "" : ", ") + p.string();
    }
    if (!missing.empty()) {
        throw ConfigError("missing dataset files (run gen-data first): " + missing);
    }
    std::vector<TaskDataset> tasks;
    for (const fs::path& p : paths) tasks.push_back(load_csv(p));
    return TaskSequence(std::move(tasks));
}

std::filesystem::path run_dir_for(const ExperimentConfig& config, Strategy strategy,
                                  std::uint64_t seed) {
    return config.out_dir / (strategy_name(strategy) + "_seed" + std::to_string(seed));
}

namespace {

Json run_identity(const ExperimentConfig& config, Strategy strategy, std::uint64_t seed,
                  const std::vector<std::string>& task_ids) {
    return Json{{"strategy", strategy_name(strategy)},
                {"seed", seed},
                {"task_ids", task_ids},
                {"model", to_json(config.model)},
                {"hyper", to_json(config.hyper)},
                {"options", to_json(config.options)}};
}

void write_manifest(const fs::path& dir, const Json& identity, std::size_t n_stages,
                    std::size_t completed) {
    Json m = identity;
    m["format"] = kRunFormat;
    m["n_stages"] = n_stages;
    m["completed_stages"] = completed;
    write_json_file(dir / "manifest.json", m);
}

// stages [0, count) reloaded from disk; histories stay on disk
std::vector<StageOutcome> load_stage_prefix(const fs::path& dir, const Json& manifest,
                                            std::size_t count) {
    std::vector<StageOutcome> stages;
    std::string strategy = manifest.at("strategy").get<std::string>();
    auto task_ids = manifest.at("task_ids").get<std::vector<std::string>>();
    for (std::size_t k = 0; k < count; ++k) {
        fs::path ckpt = stage_ckpt(dir, k);
        if (!fs::exists(ckpt)) {
            throw ReportError("run '" + dir.string() + "' is missing checkpoint for stage " +
                              std::to_string(k));
        }
        SplitModel m = load_checkpoint(ckpt);
        StageOutcome out;
        out.stage = k;
        out.task_id = strategy == "train_on_all" ? "all" : task_ids.at(k);
        out.params = m.params();
        stages.push_back(std::move(out));
    }
    return stages;
}

}  // namespace

SequenceRun run_persistent(Strategy strategy, const TaskSequence& tasks,
                           const ExperimentConfig& config, std::uint64_t seed,
                           const fs::path& dir) {
    if (tasks.size() == 0) throw ConfigError("run_persistent: empty task sequence");
    fs::create_directories(dir);

    std::vector<std::string> task_ids;
    for (std::size_t t = 0; t < tasks.size(); ++t) task_ids.push_back(tasks.task_id(t));
    Json identity = run_identity(config, strategy, seed, task_ids);

    std::size_t total_stages = strategy == Strategy::TrainOnAll ? 1 : tasks.size();
    std::size_t completed = 0;
    Json manifest;
    fs::path manifest_path = dir / "manifest.json";
    if (fs::exists(manifest_path)) {
        manifest = read_json_file(manifest_path, "run manifest");
        if (get_or<std::string>(manifest, "format", "", "manifest") != kRunFormat) {
            throw ConfigError("'" + manifest_path.string() + "' is not a run manifest");
        }
        for (const char* key : {"strategy", "seed", "task_ids", "model", "hyper", "options"}) {
            if (!manifest.contains(key) || manifest.at(key) != identity.at(key)) {
                throw ConfigError("run directory '" + dir.string() +
                                  "' was produced by a different configuration (field '" +
                                  key + "' differs)");
            }
        }
        completed = get_or<std::size_t>(manifest, "completed_stages", 0, "manifest");
        if (completed > total_stages) {
            throw ConfigError("run directory '" + dir.string() + "' claims " +
                              std::to_string(completed) + " of " +
                              std::to_string(total_stages) + " stages");
        }
    } else {
        write_manifest(dir, identity, total_stages, 0);
        manifest = read_json_file(manifest_path, "run manifest");
    }

    std::size_t target = total_stages;
    if (config.options.max_stages > 0) target = std::min(target, config.options.max_stages);

    SequenceRun run;
    run.strategy = strategy;
    run.spec = config.model;
    run.seed = seed;
    run.task_ids = task_ids;
    run.stages = load_stage_prefix(dir, manifest, completed);

    if (completed >= target) return run;

    WarmStart warm;
    warm.start_stage = completed;
    if (completed > 0) {
        warm.params = load_checkpoint(stage_ckpt(dir, completed - 1)).params();
        if (config.options.anchor_teacher) {
            warm.anchor_params = load_checkpoint(stage_ckpt(dir, 0)).params();
        }
    }
    RunOptions opts = config.options;
    opts.max_stages = target;

    SequenceRun fresh = run_sequence(strategy, tasks, config.model, config.hyper, seed, opts,
                                     completed > 0 ? &warm : nullptr);

    for (StageOutcome& out : fresh.stages) {
        save_checkpoint(stage_ckpt(dir, out.stage), config.model, out.params);
        out.train.history.save_csv(stage_history(dir, out.stage));
        write_manifest(dir, identity, total_stages, out.stage + 1);
        run.stages.push_back(std::move(out));
    }
    return run;
}

SequenceRun load_run(const fs::path& dir) {
    fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) {
        throw ReportError("run '" + dir.string() + "' has no manifest");
    }
    Json manifest = read_json_file(manifest_path, "run manifest");
    if (get_or<std::string>(manifest, "format", "", "manifest") != kRunFormat) {
        throw ReportError("'" + manifest_path.string() + "' is not a run manifest");
    }
    std::size_t n_stages = get_or<std::size_t>(manifest, "n_stages", 0, "manifest");
    std::size_t completed = get_or<std::size_t>(manifest, "completed_stages", 0, "manifest");
    if (completed < n_stages) {
        std::string missing;
        for (std::size_t k = completed; k < n_stages; ++k) {
            missing += (missing.empty() ? "" : ", ") + std::to_string(k);
        }
        throw ReportError("run '" + dir.string() + "' is incomplete, missing stages: " +
                          missing);
    }

    SequenceRun run;
    run.strategy = strategy_from_name(manifest.at("strategy").get<std::string>());
    run.spec = model_from_json(manifest.at("model"), ModelSpec{});
    run.seed = manifest.at("seed").get<std::uint64_t>();
    run.task_ids = manifest.at("task_ids").get<std::vector<std::string>>();
    run.stages = load_stage_prefix(dir, manifest, n_stages);
    return run;
}

double grad_check_combined(std::uint64_t seed, double eps) {
    ModelSpec spec;
    spec.layers = {{3, 5, Activation::Relu}, {5, 2, Activation::None}};
    spec.split_index = 1;

    SplitModel model = SplitModel::init(spec, mix_seed(seed, 2));
    SplitModel teacher_model = SplitModel::init(spec, mix_seed(seed, 3));
    ModelSnapshot teacher(teacher_model);

    Rng rng(mix_seed(seed, 1));
    Tensor x({6, 3});
    for (double& v : x.values) v = rng.normal();
    std::vector<int> labels = {0, 1, 0, 1, 0, 1};
    LossConfig cfg;

    auto loss = [&](bool with_grad) {
        Tape tape;
        TapeForward tf = forward(tape, model, x);
        ForwardResult old = forward(teacher, x);
        DfwfVars v = dfwf_loss(tape, tf.logits, tf.embedding, &old, labels, cfg);
        if (with_grad) {
            model.zero_grads();
            tape.backward(v.total);
        }
        return v.breakdown.total;
    };
    std::vector<Tensor*> params;
    for (Tensor& p : model.params()) params.push_back(&p);
    return grad_check(loss, params, eps);
}

int cmd_gen_data(const ExperimentConfig& config) {
    const GeneratorConfig& gen = config.generator;
    if (gen.n_tasks == 0) throw ConfigError("config: tasks.n_tasks is zero");
    gen.drift.validate();
    fs::create_directories(config.data_dir);

    Json files = Json::array();
    for (std::size_t k = 0; k < gen.n_tasks; ++k) {
        TaskDataset task = synth_task(k, gen.drift, gen.data_seed);
        std::string name = "task" + std::to_string(k) + ".csv";
        save_csv(task, config.data_dir / name);
        files.push_back(name);
        std::cout << "wrote " << (config.data_dir / name).string() << " (" << task.rows()
                  << " rows)\n";
    }
    Json manifest{{"format", kDataFormat}, {"generator", to_json(gen)}, {"files", files}};
    write_json_file(config.data_dir / "manifest.json", manifest);
    std::cout << "wrote " << (config.data_dir / "manifest.json").string() << "\n";
    return 0;
}

namespace {

void check_model_matches_tasks(const ExperimentConfig& config, const TaskSequence& tasks) {
    config.model.validate();
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        std::size_t dim = tasks.task(t).dim;
        if (dim != config.model.input_dim()) {
            throw ConfigError("task '" + tasks.task_id(t) + "' has dim " + std::to_string(dim) +
                              " but the model expects " +
                              std::to_string(config.model.input_dim()));
        }
    }
    tasks.reset_access_counts();
}

}  // namespace

int cmd_run(const ExperimentConfig& config) {
    TaskSequence tasks = load_tasks(config);
    check_model_matches_tasks(config, tasks);
    for (Strategy strategy : config.strategies) {
        for (std::uint64_t seed : config.seeds) {
            fs::path dir = run_dir_for(config, strategy, seed);
            SequenceRun run = run_persistent(strategy, tasks, config, seed, dir);
            std::cout << strategy_name(strategy) << " seed " << seed << ": "
                      << run.stages.size() << " stage(s) in " << dir.string() << "\n";
        }
    }
    return 0;
}

int cmd_report(const ExperimentConfig& config) {
    TaskSequence tasks = load_tasks(config);
    check_model_matches_tasks(config, tasks);
    std::size_t n_tasks = tasks.size();

    std::string table = "strategy,seed";
    for (std::size_t j = 0; j < n_tasks; ++j) table += ",task" + std::to_string(j);
    table += ",avg\n";

    std::string summary = "strategy,seeds,mean_avg_bal_acc,mean_union_auc\n";

    for (Strategy strategy : config.strategies) {
        double sum_avg_ba = 0.0;
        double sum_union_auc = 0.0;
        for (std::uint64_t seed : config.seeds) {
            fs::path dir = run_dir_for(config, strategy, seed);
            SequenceRun run = load_run(dir);
            ForgettingReport report = forgetting_analysis(run, tasks);

            save_forgetting_csv(report, dir / "forgetting.csv");
            save_stage_eval_csv(report, dir / "eval.csv");
            for (const StageEval& ev : report.stages) {
                save_roc_csv(ev.union_roc,
                             dir / ("roc_stage" + std::to_string(ev.stage) + ".csv"));
            }

            const StageEval& last = report.stages.back();
            double avg = 0.0;
            table += strategy_name(strategy) + "," + std::to_string(seed);
            for (std::size_t j = 0; j < n_tasks; ++j) {
                table += "," + csv_num(last.task_ba[j]);
                avg += last.task_ba[j];
            }
            avg /= static_cast<double>(n_tasks);
            table += "," + csv_num(avg) + "\n";

            sum_avg_ba += avg;
            sum_union_auc += last.union_auc;
        }
        double n = static_cast<double>(config.seeds.size());
        summary += strategy_name(strategy) + "," + std::to_string(config.seeds.size()) + "," +
                   csv_num(sum_avg_ba / n) + "," + csv_num(sum_union_auc / n) + "\n";
    }

    fs::create_directories(config.out_dir);
    atomic_write(config.out_dir / "table.csv", table);
    atomic_write(config.out_dir / "summary.csv", summary);
    std::cout << "wrote " << (config.out_dir / "table.csv").string() << "\n";
    std::cout << "wrote " << (config.out_dir / "summary.csv").string() << "\n";
    std::cout << summary;
    return 0;
}

int cmd_grad_check(std::uint64_t seed) {
    double err = grad_check_combined(seed);
    std::printf("max_rel_err=%.6g\n", err);
    if (!(err < 1e-4)) {
        throw NumericError("gradient check failed: max relative error " + std::to_string(err));
    }
    std::printf("gradient check passed (tolerance 1e-4)\n");
    return 0;
}

}  // namespace cldet
