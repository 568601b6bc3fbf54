#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "cldet/dataio.hpp"
#include "cldet/losses.hpp"
#include "cldet/model.hpp"

namespace cldet {

// Optimization settings plus the loss composition. `epochs` is the cosine
// schedule horizon; early stopping may end a stage sooner but never reshapes
// the schedule.
struct Hyper {
    std::size_t epochs = 150;
    std::size_t batch_size = 128;
    std::size_t patience = 10;
    double lr0 = 1e-4;
    double lr_min = 0.0;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    LossConfig loss;

    void validate() const;

    // full-length run from the reference setup
    static Hyper paper();
    // shortened run for laptop-scale experiments
    static Hyper desk();
};

// lr_min + 0.5 * (lr0 - lr_min) * (1 + cos(pi * epoch / total_epochs));
// epoch == total_epochs is a valid query and returns lr_min.
double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr0, double lr_min);

// Per-parameter first/second moment buffers plus the shared step counter.
struct OptimState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::size_t t = 0;

    explicit OptimState(const SplitModel& model);
};

// true = parameter tensor is frozen (skipped entirely by the optimizer)
using FreezeMask = std::vector<bool>;

FreezeMask freeze_nothing(const SplitModel& model);

// Decoupled-decay Adam step over the unfrozen parameters:
//   w <- w - lr*wd*w - lr * mhat / (sqrt(vhat) + eps)
// Gradients are read from each tensor's grad buffer.
void adamw_step(SplitModel& model, OptimState& opt, double lr, const Hyper& hyper,
                const FreezeMask& freeze);

struct HistoryRow {
    std::size_t epoch = 0;
    double ce = 0.0;
    double lwf = 0.0;
    double psa = 0.0;
    double total = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
};

struct TrainHistory {
    std::vector<HistoryRow> rows;

    // header: epoch,ce,lwf,psa,total,val_loss,lr
    void save_csv(const std::filesystem::path& path) const;
};

struct BatchEvent {
    std::size_t epoch = 0;
    std::size_t batch = 0;
    double lr = 0.0;
    LossBreakdown losses;
};

using BatchHook = std::function<void(const BatchEvent&)>;

// Window into a longer cosine horizon, used when the schedule runs across
// stages instead of restarting. Defaults reproduce a per-stage restart.
struct StageSchedule {
    std::size_t offset = 0;
    std::size_t horizon = 0;  // 0 means hyper.epochs
};

struct TrainResult {
    TrainHistory history;
    std::size_t best_epoch = 0;
    double best_val = 0.0;
    std::size_t epochs_run = 0;
};

// One training stage. Balanced batches over the train split, plain
// cross-entropy on the val split for early stopping, and the model restored
// to its best-val epoch at the end. `teacher`, when given, supplies the
// distillation and alignment targets; zero-weight terms skip the teacher
// entirely so the stage matches plain fine-tuning step for step. Frozen
// parameters still receive gradients (backprop passes through them) but the
// optimizer never touches them.
TrainResult train_task(SplitModel& model, const TaskDataset& data, const Hyper& hyper,
                       const ModelSnapshot* teacher, const FreezeMask& freeze,
                       std::uint64_t stage_seed, const BatchHook& hook = nullptr,
                       StageSchedule sched = {});

}  // namespace cldet
