#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cldet/dataio.hpp"
#include "cldet/model.hpp"
#include "cldet/trainer.hpp"

namespace cldet {

// TrainOnAll: joint upper bound, one stage over every task's train+val rows.
// FineTune: sequential lower bound, no retention mechanism.
// ClAll / ClEncoder / ClClassifier: sequential with the distillation and
// alignment penalties against the previous-stage snapshot. ClEncoder keeps
// only the encoder trainable (classifier frozen), ClClassifier the reverse,
// ClAll trains everything.
enum class Strategy { TrainOnAll, FineTune, ClAll, ClEncoder, ClClassifier };

constexpr Strategy kAllStrategies[] = {Strategy::TrainOnAll, Strategy::FineTune, Strategy::ClAll,
                                       Strategy::ClEncoder, Strategy::ClClassifier};

std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);  // ConfigError on unknown names

// ClEncoder freezes exactly the classifier partition, ClClassifier exactly
// the encoder partition, everything else freezes nothing.
FreezeMask freeze_mask_for(Strategy s, const SplitModel& model);

struct RunOptions {
    bool anchor_teacher = false;   // teacher stays the stage-0 snapshot instead of rolling
    bool cosine_per_stage = true;  // false: one cosine horizon spanning all stages
    std::size_t max_stages = 0;    // 0 = all stages; used to interrupt runs deliberately
};

struct StageOutcome {
    std::size_t stage = 0;
    std::string task_id;
    TrainResult train;
    std::vector<Tensor> params;  // checkpoint after this stage (best-val epoch)
};

struct SequenceRun {
    Strategy strategy = Strategy::FineTune;
    ModelSpec spec;
    std::uint64_t seed = 0;
    std::vector<std::string> task_ids;
    std::vector<StageOutcome> stages;
};

// Stage seeds derive statelessly from (run seed, stage index) so adding or
// resuming a stage never perturbs earlier ones.
std::uint64_t stage_seed(std::uint64_t run_seed, std::size_t stage);
std::uint64_t init_seed(std::uint64_t run_seed);

// Resume point for a partially completed sequence: training continues at
// start_stage from `params` (the checkpoint after stage start_stage - 1).
// anchor_params must hold the stage-0 checkpoint when the anchor-teacher
// option is on. Because stage seeds are stateless and checkpoints round-trip
// value-exactly, a resumed run reproduces the uninterrupted one bit for bit.
struct WarmStart {
    std::size_t start_stage = 0;
    std::vector<Tensor> params;
    std::vector<Tensor> anchor_params;
};

// Runs the full protocol; with `warm`, only stages [warm->start_stage, end)
// are executed and returned. Sequential strategies touch task k's data only
// during stage k; stage 0 always trains the whole model plain (no teacher,
// no freezing), retention kicks in from stage 1 on.
SequenceRun run_sequence(Strategy strategy, const TaskSequence& tasks, const ModelSpec& spec,
                         const Hyper& hyper, std::uint64_t seed, const RunOptions& options = {},
                         const WarmStart* warm = nullptr);

}  // namespace cldet
