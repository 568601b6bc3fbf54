#include "cldet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "cldet/errors.hpp"

namespace cldet {

namespace {

struct ClassCounts {
    std::size_t pos = 0;
    std::size_t neg = 0;
};

ClassCounts check_scored_input(const std::vector<double>& scores,
                               const std::vector<int>& labels) {
    if (scores.size() != labels.size()) {
        throw MetricError("scores and labels sizes disagree (" + std::to_string(scores.size()) +
                          " vs " + std::to_string(labels.size()) + ")");
    }
    if (scores.empty()) throw MetricError("empty score list");
    ClassCounts c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i])) {
            throw MetricError("non-finite score at index " + std::to_string(i));
        }
        if (labels[i] == 1) {
            ++c.pos;
        } else if (labels[i] == 0) {
            ++c.neg;
        } else {
            throw LabelError("label " + std::to_string(labels[i]) + " at index " +
                             std::to_string(i) + " is not 0 or 1");
        }
    }
    if (c.pos == 0 || c.neg == 0) {
        throw MetricError("single-class input: " + std::to_string(c.pos) + " fake / " +
                          std::to_string(c.neg) + " real");
    }
    return c;
}

}  // namespace

RocCurve roc(const std::vector<double>& scores, const std::vector<int>& labels) {
    ClassCounts counts = check_scored_input(scores, labels);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double inf = std::numeric_limits<double>::infinity();
    RocCurve curve;
    curve.points.push_back({0.0, 0.0, inf});

    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            (labels[order[i]] == 1 ? tp : fp) += 1;
            ++i;
        }
        curve.points.push_back({static_cast<double>(fp) / static_cast<double>(counts.neg),
                                static_cast<double>(tp) / static_cast<double>(counts.pos), s});
    }
    curve.points.push_back({1.0, 1.0, -inf});
    return curve;
}

double auc(const RocCurve& curve) {
    if (curve.points.size() < 2) throw MetricError("curve has fewer than 2 points");
    double area = 0.0;
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const RocPoint& a = curve.points[i - 1];
        const RocPoint& b = curve.points[i];
        area += 0.5 * (a.tpr + b.tpr) * (b.fpr - a.fpr);
    }
    return area;
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    return auc(roc(scores, labels));
}

RocPoint youden_point(const RocCurve& curve) {
    if (curve.points.empty()) throw MetricError("empty curve");
    RocPoint best = curve.points.front();
    double best_j = best.tpr - best.fpr;
    for (const RocPoint& p : curve.points) {
        double j = p.tpr - p.fpr;
        if (j > best_j || (j == best_j && (p.fpr < best.fpr ||
                                           (p.fpr == best.fpr && p.threshold < best.threshold)))) {
            best = p;
            best_j = j;
        }
    }
    return best;
}

double youden_threshold(const RocCurve& curve) {
    return youden_point(curve).threshold;
}

double balanced_accuracy(const std::vector<double>& scores, const std::vector<int>& labels,
                         double threshold) {
    ClassCounts counts = check_scored_input(scores, labels);
    std::size_t tp = 0;
    std::size_t tn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        bool fake = scores[i] >= threshold;
        if (labels[i] == 1 && fake) ++tp;
        if (labels[i] == 0 && !fake) ++tn;
    }
    return 0.5 * (static_cast<double>(tp) / static_cast<double>(counts.pos) +
                  static_cast<double>(tn) / static_cast<double>(counts.neg));
}

std::vector<double> eval_scores(const SplitModel& model, const TaskDataset& task,
                                std::vector<int>* labels_out) {
    std::vector<std::size_t> ids = task.split_indices(Split::Eval);
    if (ids.empty()) throw DataError("dataset '" + task.id + "' has no eval rows");
    Tensor x = task.gather_features(ids);
    if (labels_out) *labels_out = task.gather_labels(ids);
    return fake_scores(forward(model, x).logits);
}

double ForgettingReport::auc_at(std::size_t stage, std::size_t task) const {
    if (stage >= stages.size() || task >= stages[stage].task_auc.size()) {
        throw MetricError("forgetting matrix has no cell (" + std::to_string(stage) + ", " +
                          std::to_string(task) + ")");
    }
    return stages[stage].task_auc[task];
}

double ForgettingReport::ba_at(std::size_t stage, std::size_t task) const {
    if (stage >= stages.size() || task >= stages[stage].task_ba.size()) {
        throw MetricError("forgetting matrix has no cell (" + std::to_string(stage) + ", " +
                          std::to_string(task) + ")");
    }
    return stages[stage].task_ba[task];
}

ForgettingReport forgetting_analysis(const SequenceRun& run, const TaskSequence& tasks) {
    if (run.stages.empty()) throw ReportError("run has no checkpoints");
    if (tasks.size() == 0) throw ReportError("no tasks to evaluate");

    std::vector<Tensor> eval_x;
    std::vector<std::vector<int>> eval_y(tasks.size());
    for (std::size_t j = 0; j < tasks.size(); ++j) {
        const TaskDataset& t = tasks.task(j);
        std::vector<std::size_t> ids = t.split_indices(Split::Eval);
        if (ids.empty()) throw DataError("dataset '" + t.id + "' has no eval rows");
        eval_x.push_back(t.gather_features(ids));
        eval_y[j] = t.gather_labels(ids);
    }

    ForgettingReport report;
    for (const StageOutcome& stage : run.stages) {
        if (stage.params.empty()) {
            throw ReportError("missing checkpoint for stage " + std::to_string(stage.stage));
        }
        SplitModel model(run.spec, stage.params);

        StageEval ev;
        ev.stage = stage.stage;
        std::vector<double> union_scores;
        std::vector<int> union_labels;
        std::vector<std::vector<double>> task_scores(tasks.size());
        for (std::size_t j = 0; j < tasks.size(); ++j) {
            task_scores[j] = fake_scores(forward(model, eval_x[j]).logits);
            ev.task_auc.push_back(auc(task_scores[j], eval_y[j]));
            union_scores.insert(union_scores.end(), task_scores[j].begin(),
                                task_scores[j].end());
            union_labels.insert(union_labels.end(), eval_y[j].begin(), eval_y[j].end());
        }
        ev.union_roc = roc(union_scores, union_labels);
        ev.union_auc = auc(ev.union_roc);
        ev.threshold = youden_threshold(ev.union_roc);
        ev.union_ba = balanced_accuracy(union_scores, union_labels, ev.threshold);
        for (std::size_t j = 0; j < tasks.size(); ++j) {
            ev.task_ba.push_back(balanced_accuracy(task_scores[j], eval_y[j], ev.threshold));
        }
        report.stages.push_back(std::move(ev));
    }
    return report;
}

namespace {

void write_num(std::ofstream& out, double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    out << buf;
}

}  // namespace

void save_roc_csv(const RocCurve& curve, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << "fpr,tpr,threshold\n";
    for (const RocPoint& p : curve.points) {
        write_num(out, p.fpr);
        out << ',';
        write_num(out, p.tpr);
        out << ',';
        write_num(out, p.threshold);
        out << '\n';
    }
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void save_forgetting_csv(const ForgettingReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << "stage,task,auc,bal_acc\n";
    for (const StageEval& ev : report.stages) {
        for (std::size_t j = 0; j < ev.task_auc.size(); ++j) {
            out << ev.stage << ',' << j << ',';
            write_num(out, ev.task_auc[j]);
            out << ',';
            write_num(out, ev.task_ba[j]);
            out << '\n';
        }
    }
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void save_stage_eval_csv(const ForgettingReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << "stage,threshold,union_auc,union_bal_acc\n";
    for (const StageEval& ev : report.stages) {
        out << ev.stage << ',';
        write_num(out, ev.threshold);
        out << ',';
        write_num(out, ev.union_auc);
        out << ',';
        write_num(out, ev.union_ba);
        out << '\n';
    }
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace cldet
