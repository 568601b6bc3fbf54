#include "cldet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>

#include "cldet/errors.hpp"
#include "cldet/rng.hpp"
#include "cldet/tape.hpp"

namespace cldet {

void Hyper::validate() const {
    if (epochs == 0) throw HyperError("epochs must be >= 1");
    if (patience == 0) throw HyperError("patience must be >= 1");
    if (batch_size < 2 || batch_size % 2 != 0) {
        throw HyperError("batch_size must be even and >= 2, got " + std::to_string(batch_size));
    }
    if (!(lr0 > 0.0)) throw HyperError("lr0 must be positive");
    if (lr_min < 0.0 || lr_min > lr0) throw HyperError("lr_min must lie in [0, lr0]");
    if (weight_decay < 0.0) throw HyperError("weight_decay must be non-negative");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw HyperError("betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw HyperError("eps must be positive");
    if (!(loss.temperature > 0.0)) throw HyperError("temperature must be positive");
    if (loss.weights.ce < 0.0 || loss.weights.lwf < 0.0 || loss.weights.psa < 0.0) {
        throw HyperError("loss weights must be non-negative");
    }
}

Hyper Hyper::paper() {
    return Hyper{};
}

Hyper Hyper::desk() {
    Hyper h;
    h.epochs = 40;
    h.batch_size = 32;
    h.patience = 5;
    return h;
}

double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr0, double lr_min) {
    if (total_epochs == 0) throw HyperError("cosine_lr: total_epochs must be >= 1");
    if (epoch > total_epochs) {
        throw ContractError("cosine_lr: epoch " + std::to_string(epoch) +
                            " beyond horizon " + std::to_string(total_epochs));
    }
    double phase =
        std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(total_epochs);
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(phase));
}

OptimState::OptimState(const SplitModel& model) {
    m.reserve(model.n_params());
    v.reserve(model.n_params());
    for (const Tensor& p : model.params()) {
        m.emplace_back(p.values.size(), 0.0);
        v.emplace_back(p.values.size(), 0.0);
    }
}

FreezeMask freeze_nothing(const SplitModel& model) {
    return FreezeMask(model.n_params(), false);
}

void adamw_step(SplitModel& model, OptimState& opt, double lr, const Hyper& hyper,
                const FreezeMask& freeze) {
    if (freeze.size() != model.n_params()) {
        throw ContractError("adamw_step: freeze mask covers " + std::to_string(freeze.size()) +
                            " of " + std::to_string(model.n_params()) + " parameters");
    }
    if (opt.m.size() != model.n_params()) {
        throw ContractError("adamw_step: optimizer state built for a different model");
    }
    ++opt.t;
    double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(opt.t));
    double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(opt.t));
    for (std::size_t i = 0; i < model.n_params(); ++i) {
        if (freeze[i]) continue;
        Tensor& p = model.param(i);
        if (p.grad.size() != p.values.size()) {
            throw ContractError("adamw_step: parameter " + std::to_string(i) +
                                " has no gradient; run backward first");
        }
        auto& m = opt.m[i];
        auto& v = opt.v[i];
        for (std::size_t k = 0; k < p.values.size(); ++k) {
            double g = p.grad[k];
            if (!std::isfinite(g)) {
                throw NumericError("adamw_step: non-finite gradient in parameter " +
                                   std::to_string(i));
            }
            m[k] = hyper.beta1 * m[k] + (1.0 - hyper.beta1) * g;
            v[k] = hyper.beta2 * v[k] + (1.0 - hyper.beta2) * g * g;
            double mhat = m[k] / bc1;
            double vhat = v[k] / bc2;
            double& w = p.values[k];
            w -= lr * hyper.weight_decay * w;
            w -= lr * mhat / (std::sqrt(vhat) + hyper.eps);
        }
    }
}

void TrainHistory::save_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << "epoch,ce,lwf,psa,total,val_loss,lr\n";
    char buf[64];
    for (const HistoryRow& r : rows) {
        out << r.epoch;
        for (double x : {r.ce, r.lwf, r.psa, r.total, r.val_loss, r.lr}) {
            std::snprintf(buf, sizeof(buf), "%.17g", x);
            out << ',' << buf;
        }
        out << '\n';
    }
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

TrainResult train_task(SplitModel& model, const TaskDataset& data, const Hyper& hyper,
                       const ModelSnapshot* teacher, const FreezeMask& freeze,
                       std::uint64_t stage_seed, const BatchHook& hook, StageSchedule sched) {
    hyper.validate();
    std::size_t horizon = sched.horizon == 0 ? hyper.epochs : sched.horizon;
    if (sched.offset + hyper.epochs > horizon) {
        throw ContractError("train_task: schedule window exceeds its horizon");
    }
    if (freeze.size() != model.n_params()) {
        throw ContractError("train_task: freeze mask covers " + std::to_string(freeze.size()) +
                            " of " + std::to_string(model.n_params()) + " parameters");
    }
    if (data.dim != model.spec().input_dim()) {
        throw DimensionError("train_task: data dim " + std::to_string(data.dim) +
                             " != model input dim " +
                             std::to_string(model.spec().input_dim()));
    }

    const LossConfig& loss_cfg = hyper.loss;
    bool need_teacher =
        teacher != nullptr && (loss_cfg.weights.lwf > 0.0 || loss_cfg.weights.psa > 0.0);
    if (need_teacher) {
        if (teacher->spec().input_dim() != model.spec().input_dim() ||
            teacher->spec().embedding_dim() != model.spec().embedding_dim()) {
            throw DimensionError("train_task: teacher and student dimensions disagree");
        }
    }

    std::vector<std::size_t> val_ids = data.split_indices(Split::Val);
    if (val_ids.empty()) {
        throw DataError("train_task: dataset '" + data.id + "' has no val rows");
    }
    bool train_has0 = false;
    bool train_has1 = false;
    for (std::size_t i = 0; i < data.rows(); ++i) {
        if (data.splits[i] != Split::Train) continue;
        (data.labels[i] == 0 ? train_has0 : train_has1) = true;
    }
    if (!train_has0 || !train_has1) {
        throw DataError("train_task: train split of '" + data.id + "' is missing class " +
                        (train_has0 ? "1" : "0"));
    }
    Tensor val_x = data.gather_features(val_ids);
    std::vector<int> val_y = data.gather_labels(val_ids);

    OptimState opt(model);
    TrainResult result;
    result.best_val = std::numeric_limits<double>::infinity();
    std::vector<Tensor> best_params = model.params();
    std::size_t since_best = 0;

    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        double lr = cosine_lr(sched.offset + epoch, horizon, hyper.lr0, hyper.lr_min);
        auto batches =
            balanced_batches(data, Split::Train, hyper.batch_size, mix_seed(stage_seed, epoch));
        if (batches.empty()) {
            throw DataError("train_task: train split of '" + data.id +
                            "' is smaller than half a batch");
        }

        HistoryRow row;
        row.epoch = epoch;
        row.lr = lr;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            Tensor x = data.gather_features(batches[b]);
            std::vector<int> y = data.gather_labels(batches[b]);

            Tape tape;
            TapeForward tf = forward(tape, model, x);
            ForwardResult teach;
            const ForwardResult* teach_ptr = nullptr;
            if (need_teacher) {
                teach = forward(*teacher, x);
                teach_ptr = &teach;
            }
            DfwfVars loss = dfwf_loss(tape, tf.logits, tf.embedding, teach_ptr, y, loss_cfg);
            if (!std::isfinite(loss.breakdown.total)) {
                throw NumericError("train_task: non-finite loss at epoch " +
                                   std::to_string(epoch) + " batch " + std::to_string(b));
            }

            model.zero_grads();
            tape.backward(loss.total);
            adamw_step(model, opt, lr, hyper, freeze);

            row.ce += loss.breakdown.ce;
            row.lwf += loss.breakdown.lwf;
            row.psa += loss.breakdown.psa;
            row.total += loss.breakdown.total;
            if (hook) hook(BatchEvent{epoch, b, lr, loss.breakdown});
        }
        double nb = static_cast<double>(batches.size());
        row.ce /= nb;
        row.lwf /= nb;
        row.psa /= nb;
        row.total /= nb;
        row.val_loss = cross_entropy_value(forward(model, val_x).logits, val_y);
        if (!std::isfinite(row.val_loss)) {
            throw NumericError("train_task: non-finite validation loss at epoch " +
                               std::to_string(epoch));
        }
        result.history.rows.push_back(row);

        if (row.val_loss < result.best_val) {
            result.best_val = row.val_loss;
            result.best_epoch = epoch;
            best_params = model.params();
            since_best = 0;
        } else {
            ++since_best;
            if (since_best >= hyper.patience) break;
        }
    }

    model.set_params(best_params);
    result.epochs_run = result.history.rows.size();
    return result;
}

}  // namespace cldet
