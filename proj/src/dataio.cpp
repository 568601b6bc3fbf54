#include "cldet/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#include "cldet/errors.hpp"
#include "cldet/rng.hpp"

namespace cldet {

std::string split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Eval: return "eval";
    }
    throw ContractError("unreachable split value");
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "eval") return Split::Eval;
    throw SchemaError("unknown split name '" + name + "' (expected train, val or eval)");
}

std::vector<std::size_t> TaskDataset::split_indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < splits.size(); ++i) {
        if (splits[i] == s) out.push_back(i);
    }
    return out;
}

Tensor TaskDataset::gather_features(const std::vector<std::size_t>& row_ids) const {
    if (row_ids.empty()) throw EmptyInputError("gather_features: no rows requested");
    Tensor out({row_ids.size(), dim});
    for (std::size_t r = 0; r < row_ids.size(); ++r) {
        if (row_ids[r] >= rows()) {
            throw ContractError("gather_features: row id " + std::to_string(row_ids[r]) +
                                " out of range for " + std::to_string(rows()) + " rows");
        }
        std::copy_n(features.begin() + static_cast<std::ptrdiff_t>(row_ids[r] * dim), dim,
                    out.values.begin() + static_cast<std::ptrdiff_t>(r * dim));
    }
    return out;
}

std::vector<int> TaskDataset::gather_labels(const std::vector<std::size_t>& row_ids) const {
    std::vector<int> out;
    out.reserve(row_ids.size());
    for (std::size_t id : row_ids) {
        if (id >= rows()) {
            throw ContractError("gather_labels: row id " + std::to_string(id) + " out of range");
        }
        out.push_back(labels[id]);
    }
    return out;
}

void TaskDataset::validate() const {
    if (dim == 0) throw DataError("dataset '" + id + "': feature dimension is zero");
    if (labels.size() != splits.size() || features.size() != labels.size() * dim) {
        throw DataError("dataset '" + id + "': features/labels/splits sizes disagree");
    }
    if (rows() == 0) throw DataError("dataset '" + id + "': no rows");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) {
            throw LabelError("dataset '" + id + "': row " + std::to_string(i) + " has label " +
                             std::to_string(labels[i]) + ", expected 0 or 1");
        }
    }
    for (Split s : {Split::Train, Split::Val, Split::Eval}) {
        bool has0 = false;
        bool has1 = false;
        for (std::size_t i = 0; i < rows(); ++i) {
            if (splits[i] != s) continue;
            (labels[i] == 0 ? has0 : has1) = true;
        }
        if (!has0 || !has1) {
            throw DataError("dataset '" + id + "': split '" + split_name(s) +
                            "' is missing class " + (has0 ? "1" : "0"));
        }
    }
}

void DriftSpec::validate() const {
    if (dim < 3) throw ConfigError("drift: dim must be >= 3, got " + std::to_string(dim));
    if (train_rows < 2 || val_rows < 2 || eval_rows < 2) {
        throw ConfigError("drift: every split needs at least 2 rows");
    }
    if (!(noise >= 0.0)) throw ConfigError("drift: noise must be non-negative");
    if (shift < 0.0 || real_spread < 0.0) {
        throw ConfigError("drift: shift and real_spread must be non-negative");
    }
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void axpy(double c, const std::vector<double>& x, std::vector<double>& y) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += c * x[i];
}

void normalize(std::vector<double>& v) {
    double n = std::sqrt(dot(v, v));
    if (!(n > 0.0)) throw NumericError("drift basis vector has zero norm");
    for (double& x : v) x /= n;
}

// Three orthonormal directions: drift plane (u, v) and the authentic-class
// mixture axis w.
struct DriftBasis {
    std::vector<double> u, v, w;
};

DriftBasis drift_basis(std::size_t dim, std::uint64_t direction_seed) {
    Rng rng(direction_seed);
    DriftBasis b;
    for (auto* vec : {&b.u, &b.v, &b.w}) {
        vec->resize(dim);
        for (double& x : *vec) x = rng.normal();
    }
    normalize(b.u);
    axpy(-dot(b.v, b.u), b.u, b.v);
    normalize(b.v);
    axpy(-dot(b.w, b.u), b.u, b.w);
    axpy(-dot(b.w, b.v), b.v, b.w);
    normalize(b.w);
    return b;
}

}  // namespace

TaskDataset synth_task(std::size_t task_index, const DriftSpec& drift, std::uint64_t seed) {
    drift.validate();
    DriftBasis basis = drift_basis(drift.dim, drift.direction_seed);

    double theta = static_cast<double>(task_index) * drift.angle_step_deg *
                   std::numbers::pi / 180.0;
    std::vector<double> fake_mean(drift.dim, 0.0);
    axpy(drift.shift * std::cos(theta) + drift.line_step * static_cast<double>(task_index),
         basis.u, fake_mean);
    axpy(drift.shift * std::sin(theta), basis.v, fake_mean);

    TaskDataset task;
    task.id = "task" + std::to_string(task_index);
    task.dim = drift.dim;

    Rng rng(mix_seed(seed, task_index));
    auto emit_split = [&](Split s, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            int label = static_cast<int>(i % 2);
            std::vector<double> row(drift.dim, 0.0);
            if (label == 1) {
                row = fake_mean;
            } else {
                double side = rng.uniform01() < 0.5 ? 1.0 : -1.0;
                axpy(side * drift.real_spread, basis.w, row);
            }
            for (double& x : row) x += drift.noise * rng.normal();
            task.features.insert(task.features.end(), row.begin(), row.end());
            task.labels.push_back(label);
            task.splits.push_back(s);
        }
    };
    emit_split(Split::Train, drift.train_rows);
    emit_split(Split::Val, drift.val_rows);
    emit_split(Split::Eval, drift.eval_rows);

    task.validate();
    return task;
}

void save_csv(const TaskDataset& task, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    for (std::size_t j = 0; j < task.dim; ++j) out << 'f' << j << ',';
    out << "label,split\n";
    char buf[64];
    for (std::size_t i = 0; i < task.rows(); ++i) {
        for (std::size_t j = 0; j < task.dim; ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", task.features[i * task.dim + j]);
            out << buf << ',';
        }
        out << task.labels[i] << ',' << split_name(task.splits[i]) << '\n';
    }
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

[[noreturn]] void parse_fail(const std::filesystem::path& path, std::size_t line_no,
                             const std::string& what) {
    throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + what);
}

}  // namespace

TaskDataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");

    std::string line;
    if (!std::getline(in, line)) parse_fail(path, 1, "missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header = split_fields(line);
    if (header.size() < 3) parse_fail(path, 1, "header needs f0..f{d-1},label,split");
    std::size_t dim = header.size() - 2;
    for (std::size_t j = 0; j < dim; ++j) {
        if (header[j] != "f" + std::to_string(j)) {
            parse_fail(path, 1, "expected column 'f" + std::to_string(j) + "', got '" +
                                    header[j] + "'");
        }
    }
    if (header[dim] != "label" || header[dim + 1] != "split") {
        parse_fail(path, 1, "trailing columns must be 'label,split'");
    }

    TaskDataset task;
    task.id = path.stem().string();
    task.dim = dim;

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields = split_fields(line);
        if (fields.size() != dim + 2) {
            parse_fail(path, line_no,
                       "expected " + std::to_string(dim + 2) + " fields, got " +
                           std::to_string(fields.size()));
        }
        for (std::size_t j = 0; j < dim; ++j) {
            const char* s = fields[j].c_str();
            char* end = nullptr;
            double v = std::strtod(s, &end);
            if (end == s || *end != '\0') {
                parse_fail(path, line_no, "bad number '" + fields[j] + "'");
            }
            task.features.push_back(v);
        }
        const std::string& lab = fields[dim];
        if (lab != "0" && lab != "1") {
            throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": label '" + lab +
                              "' is not 0 or 1");
        }
        task.labels.push_back(lab == "1" ? 1 : 0);
        const std::string& sp = fields[dim + 1];
        if (sp == "train") {
            task.splits.push_back(Split::Train);
        } else if (sp == "val") {
            task.splits.push_back(Split::Val);
        } else if (sp == "eval") {
            task.splits.push_back(Split::Eval);
        } else {
            throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": split '" + sp +
                              "' is not train/val/eval");
        }
    }
    if (task.rows() == 0) parse_fail(path, line_no, "no data rows");
    task.validate();
    return task;
}

std::vector<std::vector<std::size_t>> balanced_batches(const TaskDataset& task, Split split,
                                                       std::size_t batch_size,
                                                       std::uint64_t epoch_seed) {
    if (batch_size < 2 || batch_size % 2 != 0) {
        throw HyperError("balanced_batches: batch_size must be even and >= 2, got " +
                         std::to_string(batch_size));
    }
    std::vector<std::size_t> ids0;
    std::vector<std::size_t> ids1;
    for (std::size_t i = 0; i < task.rows(); ++i) {
        if (task.splits[i] != split) continue;
        (task.labels[i] == 0 ? ids0 : ids1).push_back(i);
    }
    if (ids0.empty() || ids1.empty()) {
        throw EmptyInputError("balanced_batches: split '" + split_name(split) +
                              "' lacks one of the classes");
    }

    std::size_t half = batch_size / 2;
    std::size_t majority = std::max(ids0.size(), ids1.size());
    std::size_t n_batches = majority / half;

    Rng rng(epoch_seed);
    rng.shuffle(ids0);
    rng.shuffle(ids1);

    std::vector<std::vector<std::size_t>> batches(n_batches);
    for (std::size_t b = 0; b < n_batches; ++b) {
        auto& batch = batches[b];
        batch.reserve(batch_size);
        for (const auto* ids : {&ids0, &ids1}) {
            if (ids->size() == majority) {
                // majority class walks its shuffled order without reuse
                for (std::size_t k = 0; k < half; ++k) batch.push_back((*ids)[b * half + k]);
            } else {
                // minority class is resampled with replacement
                for (std::size_t k = 0; k < half; ++k) {
                    batch.push_back((*ids)[rng.index(ids->size())]);
                }
            }
        }
    }
    return batches;
}

TaskDataset concat_train_val(const TaskSequence& tasks) {
    if (tasks.size() == 0) throw EmptyInputError("concat_train_val: empty task sequence");
    TaskDataset all;
    all.id = "all";
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const TaskDataset& task = tasks.task(t);
        if (t == 0) {
            all.dim = task.dim;
        } else if (task.dim != all.dim) {
            throw DataError("concat_train_val: task dims disagree (" + std::to_string(all.dim) +
                            " vs " + std::to_string(task.dim) + ")");
        }
        for (std::size_t i = 0; i < task.rows(); ++i) {
            if (task.splits[i] == Split::Eval) continue;
            all.features.insert(all.features.end(),
                                task.features.begin() + static_cast<std::ptrdiff_t>(i * task.dim),
                                task.features.begin() +
                                    static_cast<std::ptrdiff_t>((i + 1) * task.dim));
            all.labels.push_back(task.labels[i]);
            all.splits.push_back(task.splits[i]);
        }
    }
    return all;
}

}  // namespace cldet
