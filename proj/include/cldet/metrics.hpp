#pragma once

#include <filesystem>
#include <vector>

#include "cldet/dataio.hpp"
#include "cldet/model.hpp"
#include "cldet/strategies.hpp"

namespace cldet {

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;
};

// Threshold sweep over distinct scores, descending, ties grouped into one
// point. Anchored at (0,0,+inf) and (1,1,-inf); fpr and tpr are
// non-decreasing along the curve.
struct RocCurve {
    std::vector<RocPoint> points;
};

RocCurve roc(const std::vector<double>& scores, const std::vector<int>& labels);

// trapezoidal area; equals the pairwise Mann-Whitney statistic with ties
// counted 1/2
double auc(const RocCurve& curve);
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Point maximizing tpr - fpr; ties broken toward lower fpr, then lower
// threshold.
RocPoint youden_point(const RocCurve& curve);
double youden_threshold(const RocCurve& curve);

// (TPR + TNR) / 2 with prediction "fake iff score >= threshold"
double balanced_accuracy(const std::vector<double>& scores, const std::vector<int>& labels,
                         double threshold);

// fake-class probabilities on one dataset's eval split
std::vector<double> eval_scores(const SplitModel& model, const TaskDataset& task,
                                std::vector<int>* labels_out = nullptr);

// Evaluation of one checkpoint on every task's eval split plus their union.
// The operating threshold is the Youden point of the union ROC, applied to
// every per-task balanced accuracy so all tasks share one operating point.
struct StageEval {
    std::size_t stage = 0;
    double threshold = 0.0;
    double union_auc = 0.0;
    double union_ba = 0.0;
    RocCurve union_roc;
    std::vector<double> task_auc;
    std::vector<double> task_ba;
};

// Full checkpoint x task metric matrix: stages[k].task_auc[j] is task j's
// eval AUC under the checkpoint after stage k (j > k included for
// completeness).
struct ForgettingReport {
    std::vector<StageEval> stages;

    double auc_at(std::size_t stage, std::size_t task) const;
    double ba_at(std::size_t stage, std::size_t task) const;
};

ForgettingReport forgetting_analysis(const SequenceRun& run, const TaskSequence& tasks);

// fpr,tpr,threshold rows
void save_roc_csv(const RocCurve& curve, const std::filesystem::path& path);
// stage,task,auc,bal_acc rows in stage-major order
void save_forgetting_csv(const ForgettingReport& report, const std::filesystem::path& path);
// stage,threshold,union_auc,union_bal_acc rows
void save_stage_eval_csv(const ForgettingReport& report, const std::filesystem::path& path);

}  // namespace cldet
