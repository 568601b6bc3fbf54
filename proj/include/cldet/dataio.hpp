#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cldet/tensor.hpp"

namespace cldet {

enum class Split { Train, Val, Eval };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

// Labeled feature matrix with per-row split tags. Label 0 is the authentic
// class, 1 the fake class.
struct TaskDataset {
    std::string id;
    std::size_t dim = 0;
    std::vector<double> features;  // row-major, rows() x dim
    std::vector<int> labels;
    std::vector<Split> splits;

    std::size_t rows() const { return labels.size(); }
    std::vector<std::size_t> split_indices(Split s) const;
    Tensor gather_features(const std::vector<std::size_t>& row_ids) const;
    std::vector<int> gather_labels(const std::vector<std::size_t>& row_ids) const;

    // both classes present in every split, eval split nonempty
    void validate() const;
};

// Ordered task list D_0..D_{K-1}. Task fetches are counted so tests can check
// which stages touched which datasets.
class TaskSequence {
public:
    TaskSequence() = default;
    explicit TaskSequence(std::vector<TaskDataset> tasks) : tasks_(std::move(tasks)) {
        access_counts_.assign(tasks_.size(), 0);
    }

    std::size_t size() const { return tasks_.size(); }
    const TaskDataset& task(std::size_t i) const {
        ++access_counts_[i];
        return tasks_[i];
    }
    // metadata lookup, not counted as a data access
    const std::string& task_id(std::size_t i) const { return tasks_[i].id; }
    const std::vector<std::size_t>& access_counts() const { return access_counts_; }
    void reset_access_counts() const {
        access_counts_.assign(tasks_.size(), 0);
    }

private:
    std::vector<TaskDataset> tasks_;
    mutable std::vector<std::size_t> access_counts_;
};

// Synthetic drifting-task generator. The authentic class is a fixed two
// component Gaussian mixture shared by every task; the fake class is a
// Gaussian whose mean sits at radius `shift` in a seeded 2-plane and rotates
// by `angle_step_deg` per task index (a straight-line drift is the
// angle_step_deg = 0 case with `line_step` != 0).
struct DriftSpec {
    std::size_t dim = 32;
    std::size_t train_rows = 2000;
    std::size_t val_rows = 400;
    std::size_t eval_rows = 600;
    double noise = 1.0;          // class-conditional standard deviation
    double shift = 2.5;          // fake mean magnitude
    double angle_step_deg = 50.0;
    double line_step = 0.0;      // additional per-task offset along the first plane axis
    double real_spread = 1.5;    // mixture component offset for the authentic class
    std::uint64_t direction_seed = 7;

    void validate() const;
};

TaskDataset synth_task(std::size_t task_index, const DriftSpec& drift, std::uint64_t seed);

// CSV with header f0,...,f{d-1},label,split. Features are printed with 17
// significant digits so a save -> load round-trip is value-exact. Loading
// enforces the dataset invariants: malformed numbers or field counts raise a
// parse error with the line number, out-of-range labels or split tags raise a
// schema error, and a split missing a class raises a data error.
void save_csv(const TaskDataset& task, const std::filesystem::path& path);
TaskDataset load_csv(const std::filesystem::path& path);

// Every batch holds exactly batch_size/2 rows of each class; the minority
// class is resampled with replacement to fill the majority-driven epoch, and
// the trailing partial batch is dropped.
std::vector<std::vector<std::size_t>> balanced_batches(const TaskDataset& task, Split split,
                                                       std::size_t batch_size,
                                                       std::uint64_t epoch_seed);

// Concatenation used by the joint-training baseline; eval rows are kept out.
TaskDataset concat_train_val(const TaskSequence& tasks);

}  // namespace cldet
