// End-to-end acceptance gate. Each numbered criterion prints one PASS/FAIL
// line; the exit code is the number of failed criteria.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "cldet/dataio.hpp"
#include "cldet/errors.hpp"
#include "cldet/experiment.hpp"
#include "cldet/losses.hpp"
#include "cldet/metrics.hpp"
#include "cldet/model.hpp"
#include "cldet/rng.hpp"
#include "cldet/strategies.hpp"
#include "cldet/trainer.hpp"

using namespace cldet;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int id, const std::string& name, bool ok, double elapsed,
            const std::string& detail) {
    std::printf("[%s] criterion %d: %s (%.1fs) %s\n", ok ? "PASS" : "FAIL", id, name.c_str(),
                elapsed, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

template <typename Fn>
void criterion(int id, const std::string& name, double budget_s, Fn body) {
    Clock::time_point t0 = Clock::now();
    bool ok = false;
    std::string detail;
    try {
        ok = body(detail);
    } catch (const std::exception& e) {
        ok = false;
        detail += std::string(" threw: ") + e.what();
    }
    double elapsed = seconds_since(t0);
    if (elapsed > budget_s) {
        ok = false;
        detail += " over time budget of " + std::to_string(budget_s) + "s";
    }
    report(id, name, ok, elapsed, detail);
}

bool params_bitwise_equal(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].shape != b[i].shape || a[i].values != b[i].values) return false;
    }
    return true;
}

// O(n^2) reference statistic, ties counted one half
double mann_whitney(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

struct Benchmark {
    TaskSequence tasks;
    ModelSpec spec;
    Hyper hyper;
};

Benchmark default_benchmark() {
    ExperimentConfig cfg = default_config("desk");
    std::vector<TaskDataset> tasks;
    for (std::size_t k = 0; k < cfg.generator.n_tasks; ++k) {
        tasks.push_back(synth_task(k, cfg.generator.drift, cfg.generator.data_seed));
    }
    return Benchmark{TaskSequence(std::move(tasks)), cfg.model, cfg.hyper};
}

// shared across criteria 3, 5 and 6: one run per (strategy, seed)
struct DeskRuns {
    std::map<Strategy, std::map<std::uint64_t, SequenceRun>> runs;
    std::map<Strategy, std::map<std::uint64_t, ForgettingReport>> reports;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    Benchmark bench;
};

DeskRuns run_desk_protocol() {
    DeskRuns d;
    d.bench = default_benchmark();
    for (Strategy s : kAllStrategies) {
        for (std::uint64_t seed : d.seeds) {
            SequenceRun run = run_sequence(s, d.bench.tasks, d.bench.spec, d.bench.hyper, seed);
            d.reports[s][seed] = forgetting_analysis(run, d.bench.tasks);
            d.runs[s][seed] = std::move(run);
        }
    }
    return d;
}

double avg_final_ba(const ForgettingReport& rep) {
    const StageEval& last = rep.stages.back();
    double sum = 0.0;
    for (double ba : last.task_ba) sum += ba;
    return sum / static_cast<double>(last.task_ba.size());
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() /
               ("cldet_accept_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

char fmtbuf[256];

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
    std::snprintf(fmtbuf, sizeof(fmtbuf), format, a, b, c);
    return fmtbuf;
}

}  // namespace

int main() {
    std::printf("acceptance suite: %zu criteria\n", std::size_t{8});

    criterion(1, "gradient oracle on the 32-parameter combined loss", 10.0,
              [&](std::string& detail) {
                  double worst = 0.0;
                  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
                      worst = std::max(worst, grad_check_combined(seed, 1e-6));
                  }
                  detail = fmt("max_rel_err=%.3g bound=1e-4", worst);
                  return worst < 1e-4;
              });

    criterion(2, "trapezoid AUC equals Mann-Whitney on 100 tied instances", 30.0,
              [&](std::string& detail) {
                  Rng rng(2024);
                  double worst = 0.0;
                  for (int rep = 0; rep < 100; ++rep) {
                      std::size_t n = 20 + rng.index(481);  // up to 500
                      std::vector<double> scores(n);
                      std::vector<int> labels(n);
                      for (std::size_t i = 0; i < n; ++i) {
                          labels[i] = rng.uniform01() < 0.5 ? 0 : 1;
                          double s = rng.uniform01();
                          if (rng.uniform01() < 0.6) s = std::floor(s * 16.0) / 16.0;
                          scores[i] = s;
                      }
                      labels[0] = 0;
                      labels[n - 1] = 1;
                      worst = std::max(worst,
                                       std::abs(auc(scores, labels) - mann_whitney(scores, labels)));
                  }
                  detail = fmt("max |trapezoid - pairwise| = %.3g bound=1e-9", worst);
                  return worst < 1e-9;
              });

    // Criteria 3, 5 and 6 share one 5-strategy x 5-seed protocol on the
    // default 4-task benchmark. The clock for criterion 5's 10-minute budget
    // starts here.
    Clock::time_point protocol_t0 = Clock::now();
    DeskRuns desk = run_desk_protocol();
    double protocol_elapsed = seconds_since(protocol_t0);

    criterion(3, "frozen partition is bitwise constant after stage 0", 60.0,
              [&](std::string& detail) {
                  ParamPartition part = param_partition(desk.bench.spec);
                  std::size_t checked = 0;
                  for (Strategy s : {Strategy::ClEncoder, Strategy::ClClassifier}) {
                      const std::vector<std::size_t>& frozen =
                          s == Strategy::ClEncoder ? part.classifier : part.encoder;
                      for (std::uint64_t seed : desk.seeds) {
                          const SequenceRun& run = desk.runs[s][seed];
                          if (run.stages.size() != 4) {
                              detail = "expected 4 stages";
                              return false;
                          }
                          for (std::size_t k = 1; k < run.stages.size(); ++k) {
                              for (std::size_t id : frozen) {
                                  ++checked;
                                  if (run.stages[k].params[id].values !=
                                      run.stages[0].params[id].values) {
                                      detail = "strategy " + strategy_name(s) + " seed " +
                                               std::to_string(seed) + " stage " +
                                               std::to_string(k) + " moved frozen tensor " +
                                               std::to_string(id);
                                      return false;
                                  }
                              }
                          }
                      }
                  }
                  detail = std::to_string(checked) + " frozen tensors bitwise identical";
                  return checked > 0;
              });

    criterion(4, "degeneration identities (zero-weight, LwF=0, PSA=0)", 120.0,
              [&](std::string& detail) {
                  // (a) zero distillation weights reproduce fine-tuning bitwise
                  DriftSpec drift;
                  drift.dim = 8;
                  drift.train_rows = 64;
                  drift.val_rows = 16;
                  drift.eval_rows = 16;
                  TaskSequence tasks({synth_task(0, drift, 7), synth_task(1, drift, 7),
                                      synth_task(2, drift, 7)});
                  ModelSpec spec{
                      {{8, 12, Activation::Relu}, {12, 8, Activation::Relu},
                       {8, 2, Activation::None}},
                      2};
                  Hyper h;
                  h.epochs = 5;
                  h.batch_size = 8;
                  h.patience = 5;
                  h.lr0 = 1e-3;

                  Hyper zero = h;
                  zero.loss.weights.lwf = 0.0;
                  zero.loss.weights.psa = 0.0;
                  SequenceRun cl = run_sequence(Strategy::ClAll, tasks, spec, zero, 11);
                  SequenceRun ft = run_sequence(Strategy::FineTune, tasks, spec, zero, 11);
                  bool a_ok = cl.stages.size() == ft.stages.size();
                  for (std::size_t k = 0; a_ok && k < cl.stages.size(); ++k) {
                      a_ok = params_bitwise_equal(cl.stages[k].params, ft.stages[k].params);
                  }

                  // (b) LwF is exactly zero when teacher and student agree
                  bool b_ok = true;
                  {
                      Rng rng(5);
                      Tensor logits({6, 2});
                      for (double& v : logits.values) v = 3.0 * rng.normal();
                      Tape tape;
                      double v =
                          tape.value(lwf_loss(tape, tape.constant(logits), logits, 2.0)).item();
                      b_ok = v == 0.0;
                  }

                  // (b)+(c) on live training: at the first batch of every
                  // retraining stage the student still equals the teacher, so
                  // both penalties must be exactly zero
                  bool c_ok = true;
                  std::size_t retrain_stages_seen = 0;
                  for (Strategy s : {Strategy::ClAll, Strategy::ClEncoder,
                                     Strategy::ClClassifier}) {
                      std::vector<TaskDataset> copy;
                      for (std::size_t i = 0; i < tasks.size(); ++i) copy.push_back(tasks.task(i));
                      TaskSequence seq(std::move(copy));

                      // rebuild the sequence manually to place the hook
                      SplitModel model = SplitModel::init(spec, init_seed(31));
                      FreezeMask mask = freeze_mask_for(s, model);
                      for (std::size_t k = 0; k < seq.size(); ++k) {
                          ModelSnapshot teacher(model);
                          bool first_seen = false;
                          double first_lwf = -1.0, first_psa = -1.0;
                          BatchHook hook = [&](const BatchEvent& e) {
                              if (!first_seen && e.epoch == 0 && e.batch == 0) {
                                  first_seen = true;
                                  first_lwf = e.losses.lwf;
                                  first_psa = e.losses.psa;
                              }
                          };
                          train_task(model, seq.task(k), h, k > 0 ? &teacher : nullptr,
                                     k > 0 ? mask : freeze_nothing(model), stage_seed(31, k),
                                     hook);
                          if (k > 0) {
                              ++retrain_stages_seen;
                              if (!(first_seen && first_lwf == 0.0 && first_psa == 0.0)) {
                                  c_ok = false;
                                  detail += " stage " + std::to_string(k) + " of " +
                                            strategy_name(s) + " started with lwf=" +
                                            std::to_string(first_lwf) + " psa=" +
                                            std::to_string(first_psa);
                              }
                          }
                      }
                  }
                  c_ok = c_ok && retrain_stages_seen == 6;

                  detail = std::string("(a) trajectory ") + (a_ok ? "bitwise equal" : "DIFFERS") +
                           ", (b) lwf zero " + (b_ok ? "exact" : "VIOLATED") +
                           ", (c) first-step zeros " + (c_ok ? "exact" : "VIOLATED") + detail;
                  return a_ok && b_ok && c_ok;
              });

    criterion(5, "strategy ordering on the default benchmark (5 seeds)", 600.0 - protocol_elapsed,
              [&](std::string& detail) {
                  int order_ok = 0;
                  int best_cl_ok = 0;
                  std::map<Strategy, double> mean_ba;
                  for (std::uint64_t seed : desk.seeds) {
                      double all = avg_final_ba(desk.reports[Strategy::TrainOnAll][seed]);
                      double ft = avg_final_ba(desk.reports[Strategy::FineTune][seed]);
                      double cl_all = avg_final_ba(desk.reports[Strategy::ClAll][seed]);
                      double cl_enc = avg_final_ba(desk.reports[Strategy::ClEncoder][seed]);
                      double cl_cls = avg_final_ba(desk.reports[Strategy::ClClassifier][seed]);
                      if (all >= cl_enc && cl_enc > ft) ++order_ok;
                      if (cl_enc >= std::max(cl_all, cl_cls)) ++best_cl_ok;
                      mean_ba[Strategy::TrainOnAll] += all / 5.0;
                      mean_ba[Strategy::FineTune] += ft / 5.0;
                      mean_ba[Strategy::ClAll] += cl_all / 5.0;
                      mean_ba[Strategy::ClEncoder] += cl_enc / 5.0;
                      mean_ba[Strategy::ClClassifier] += cl_cls / 5.0;
                  }
                  detail = fmt("protocol %.1fs;", protocol_elapsed) +
                           fmt(" train_on_all>=cl_encoder>fine_tune in %g/5 (need 4), "
                               "cl_encoder best CL in %g/5 (need 3);",
                               double(order_ok), double(best_cl_ok)) +
                           fmt(" mean BA all=%.3f enc=%.3f ft=%.3f",
                               mean_ba[Strategy::TrainOnAll], mean_ba[Strategy::ClEncoder],
                               mean_ba[Strategy::FineTune]) +
                           fmt(" cl_all=%.3f cl_cls=%.3f", mean_ba[Strategy::ClAll],
                               mean_ba[Strategy::ClClassifier]);
                  return order_ok >= 4 && best_cl_ok >= 3;
              });

    criterion(6, "task-0 forgetting curve: fine_tune decays, cl_encoder retains", 60.0,
              [&](std::string& detail) {
                  int ft_decays = 0;
                  int enc_smaller = 0;
                  double mean_ft_drop = 0.0, mean_enc_drop = 0.0;
                  for (std::uint64_t seed : desk.seeds) {
                      const ForgettingReport& ft = desk.reports[Strategy::FineTune][seed];
                      const ForgettingReport& enc = desk.reports[Strategy::ClEncoder][seed];
                      bool monotone = true;
                      for (std::size_t k = 1; k < ft.stages.size(); ++k) {
                          if (ft.auc_at(k, 0) > ft.auc_at(k - 1, 0)) monotone = false;
                      }
                      double ft_drop = ft.auc_at(0, 0) - ft.auc_at(ft.stages.size() - 1, 0);
                      double enc_drop = enc.auc_at(0, 0) - enc.auc_at(enc.stages.size() - 1, 0);
                      if (monotone && ft_drop > 0.05) ++ft_decays;
                      if (enc_drop < ft_drop) ++enc_smaller;
                      mean_ft_drop += ft_drop / 5.0;
                      mean_enc_drop += enc_drop / 5.0;
                  }
                  detail = fmt("fine_tune monotone drop>0.05 in %g/5 (need 4), "
                               "cl_encoder drop smaller in %g/5 (need 4);",
                               double(ft_decays), double(enc_smaller)) +
                           fmt(" mean drop ft=%.3f enc=%.3f", mean_ft_drop, mean_enc_drop);
                  return ft_decays >= 4 && enc_smaller >= 4;
              });

    criterion(7, "byte-identical reports and bitwise resume", 120.0,
              [&](std::string& detail) {
                  ExperimentConfig cfg;
                  cfg.model = ModelSpec{
                      {{6, 10, Activation::Relu}, {10, 2, Activation::None}}, 1};
                  cfg.hyper.epochs = 4;
                  cfg.hyper.batch_size = 8;
                  cfg.hyper.patience = 4;
                  cfg.hyper.lr0 = 5e-3;
                  cfg.generator.n_tasks = 3;
                  cfg.generator.drift.dim = 6;
                  cfg.generator.drift.train_rows = 48;
                  cfg.generator.drift.val_rows = 12;
                  cfg.generator.drift.eval_rows = 12;
                  cfg.strategies = {Strategy::FineTune, Strategy::ClEncoder};
                  cfg.seeds = {0, 1};

                  TempDir a("repa"), b("repb");
                  auto run_all = [&](const fs::path& root) {
                      ExperimentConfig c = cfg;
                      c.data_dir = root / "data";
                      c.out_dir = root / "runs";
                      cmd_gen_data(c);
                      cmd_run(c);
                      cmd_report(c);
                      return c;
                  };
                  run_all(a.path);
                  run_all(b.path);

                  bool bytes_ok = true;
                  std::vector<std::string> rel = {"table.csv", "summary.csv",
                                                  "fine_tune_seed0/forgetting.csv",
                                                  "fine_tune_seed0/eval.csv",
                                                  "fine_tune_seed0/roc_stage2.csv",
                                                  "cl_encoder_seed1/forgetting.csv",
                                                  "cl_encoder_seed1/stage2.ckpt"};
                  for (const std::string& r : rel) {
                      std::string ca = slurp(a.path / "runs" / r);
                      std::string cb = slurp(b.path / "runs" / r);
                      if (ca.empty() || ca != cb) {
                          bytes_ok = false;
                          detail += " mismatch in " + r;
                      }
                  }

                  // interrupt after stage 1, then resume and compare with the
                  // uninterrupted directory parameter for parameter
                  ExperimentConfig ic = cfg;
                  ic.data_dir = a.path / "data";
                  ic.out_dir = a.path / "resumed";
                  TaskSequence tasks = load_tasks(ic);

                  ExperimentConfig truncated = ic;
                  truncated.options.max_stages = 2;
                  fs::path dir = run_dir_for(ic, Strategy::ClEncoder, 0);
                  SequenceRun partial =
                      run_persistent(Strategy::ClEncoder, tasks, truncated, 0, dir);
                  bool truncated_ok = partial.stages.size() == 2;

                  SequenceRun resumed = run_persistent(Strategy::ClEncoder, tasks, ic, 0, dir);
                  SequenceRun full = load_run(dir);

                  SequenceRun reference =
                      run_sequence(Strategy::ClEncoder, tasks, ic.model, ic.hyper, 0);
                  bool resume_ok = truncated_ok && full.stages.size() == 3 &&
                                   resumed.stages.size() == 3;
                  for (std::size_t k = 0; resume_ok && k < 3; ++k) {
                      resume_ok = params_bitwise_equal(full.stages[k].params,
                                                       reference.stages[k].params);
                  }
                  detail = std::string("reports ") + (bytes_ok ? "byte-identical" : "DIFFER") +
                           ", resume " + (resume_ok ? "bitwise equal" : "DIVERGED") + detail;
                  return bytes_ok && resume_ok;
              });

    criterion(8, "balanced batches on a 1:3 imbalanced split", 30.0,
              [&](std::string& detail) {
                  TaskDataset t;
                  t.id = "imbalanced";
                  t.dim = 3;
                  Rng rng(88);
                  auto push = [&](int label, Split split) {
                      for (int j = 0; j < 3; ++j) t.features.push_back(rng.normal());
                      t.labels.push_back(label);
                      t.splits.push_back(split);
                  };
                  for (int i = 0; i < 150; ++i) push(0, Split::Train);
                  for (int i = 0; i < 450; ++i) push(1, Split::Train);
                  push(0, Split::Val);
                  push(1, Split::Val);
                  push(0, Split::Eval);
                  push(1, Split::Eval);

                  std::size_t bs = 32;
                  std::size_t violations = 0;
                  std::size_t n_batches = 0;
                  for (std::uint64_t epoch_seed : {1ull, 2ull, 3ull}) {
                      auto batches = balanced_batches(t, Split::Train, bs, epoch_seed);
                      n_batches += batches.size();
                      for (const auto& batch : batches) {
                          std::size_t n0 = 0, n1 = 0;
                          for (std::size_t row : batch) {
                              (t.labels[row] == 0 ? n0 : n1)++;
                          }
                          if (batch.size() != bs || n0 != bs / 2 || n1 != bs / 2) ++violations;
                      }
                  }
                  detail = fmt("%g batches across 3 epochs, %g violations", double(n_batches),
                               double(violations));
                  return n_batches == 3 * (450 / (bs / 2)) && violations == 0;
              });

    std::printf("%d of 8 criteria failed\n", g_failures);
    return g_failures;
}
