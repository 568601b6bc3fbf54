#include "cldet/strategies.hpp"

#include <algorithm>

#include "cldet/errors.hpp"
#include "cldet/rng.hpp"

namespace cldet {

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::TrainOnAll: return "train_on_all";
        case Strategy::FineTune: return "fine_tune";
        case Strategy::ClAll: return "cl_all";
        case Strategy::ClEncoder: return "cl_encoder";
        case Strategy::ClClassifier: return "cl_classifier";
    }
    throw ContractError("unreachable strategy value");
}

Strategy strategy_from_name(const std::string& name) {
    for (Strategy s : kAllStrategies) {
        if (strategy_name(s) == name) return s;
    }
    throw ConfigError("unknown strategy '" + name +
                      "' (expected train_on_all, fine_tune, cl_all, cl_encoder, cl_classifier)");
}

FreezeMask freeze_mask_for(Strategy s, const SplitModel& model) {
    FreezeMask mask(model.n_params(), false);
    if (s != Strategy::ClEncoder && s != Strategy::ClClassifier) return mask;
    ParamPartition part = param_partition(model.spec());
    const std::vector<std::size_t>& frozen =
        s == Strategy::ClEncoder ? part.classifier : part.encoder;
    for (std::size_t id : frozen) mask[id] = true;
    return mask;
}

std::uint64_t stage_seed(std::uint64_t run_seed, std::size_t stage) {
    return mix_seed(run_seed, stage);
}

std::uint64_t init_seed(std::uint64_t run_seed) {
    // distinct stream from every stage_seed
    return mix_seed(run_seed, ~std::uint64_t{0});
}

SequenceRun run_sequence(Strategy strategy, const TaskSequence& tasks, const ModelSpec& spec,
                         const Hyper& hyper, std::uint64_t seed, const RunOptions& options,
                         const WarmStart* warm) {
    if (tasks.size() == 0) throw ConfigError("run_sequence: empty task sequence");
    spec.validate();
    hyper.validate();

    std::size_t total_stages = strategy == Strategy::TrainOnAll ? 1 : tasks.size();
    std::size_t start = warm == nullptr ? 0 : warm->start_stage;
    if (start > total_stages) {
        throw ContractError("run_sequence: warm start at stage " + std::to_string(start) +
                            " beyond " + std::to_string(total_stages) + " stages");
    }

    SequenceRun run;
    run.strategy = strategy;
    run.spec = spec;
    run.seed = seed;
    for (std::size_t t = 0; t < tasks.size(); ++t) run.task_ids.push_back(tasks.task_id(t));

    SplitModel model = start == 0 ? SplitModel::init(spec, init_seed(seed))
                                  : SplitModel(spec, warm->params);

    if (strategy == Strategy::TrainOnAll) {
        if (start >= 1) return run;
        TaskDataset all = concat_train_val(tasks);
        StageOutcome out;
        out.stage = 0;
        out.task_id = all.id;
        out.train = train_task(model, all, hyper, nullptr, freeze_nothing(model),
                               stage_seed(seed, 0));
        out.params = model.params();
        run.stages.push_back(std::move(out));
        return run;
    }

    bool uses_teacher = strategy != Strategy::FineTune;
    FreezeMask cl_mask = freeze_mask_for(strategy, model);
    std::size_t end = total_stages;
    if (options.max_stages > 0) end = std::min(end, std::max(start, options.max_stages));

    ModelSnapshot anchor(model);
    if (uses_teacher && options.anchor_teacher && start >= 1) {
        if (warm->anchor_params.empty()) {
            throw ContractError("run_sequence: anchor teacher resume needs the stage-0 params");
        }
        anchor = ModelSnapshot(SplitModel(spec, warm->anchor_params));
    }

    for (std::size_t k = start; k < end; ++k) {
        const TaskDataset& dk = tasks.task(k);
        dk.validate();

        ModelSnapshot rolling(model);
        const ModelSnapshot* teacher = nullptr;
        FreezeMask freeze = freeze_nothing(model);
        if (k > 0) {
            if (uses_teacher) teacher = options.anchor_teacher ? &anchor : &rolling;
            freeze = cl_mask;
        }

        StageSchedule sched;
        if (!options.cosine_per_stage) {
            sched.offset = k * hyper.epochs;
            sched.horizon = tasks.size() * hyper.epochs;
        }

        StageOutcome out;
        out.stage = k;
        out.task_id = dk.id;
        out.train = train_task(model, dk, hyper, teacher, freeze, stage_seed(seed, k), nullptr,
                               sched);
        out.params = model.params();
        run.stages.push_back(std::move(out));

        if (k == 0 && uses_teacher && options.anchor_teacher) {
            anchor = ModelSnapshot(model);
        }
    }
    return run;
}

}  // namespace cldet
