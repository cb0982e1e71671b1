#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "diu/backbone.hpp"
#include "diu/eval.hpp"
#include "diu/losses.hpp"
#include "diu/synthdata.hpp"

namespace diu {

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 50;
  int batch_size = 48;
  int diu_cutoff = 4;
  LossConfig loss;
  OptimizerConfig optimizer;
  uint64_t seed = 0;
  // 0 derives the natural epoch length: ceil(train images / batch) for the
  // teacher, ceil(available genuine pairs / batch) for the DIU stage.
  int steps_per_epoch = 0;
  double genuine_fraction = 0.5;

  void validate(int k_total) const;
};

struct StepRecord {
  int step = 0;
  double l_c = 0.0;
  double l_dl = 0.0;
  double total = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double mean_l_c = 0.0;
  double mean_l_dl = 0.0;
  double mean_total = 0.0;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  double wall_clock_seconds = 0.0;
  std::string checkpoint_path;
};

// One JSON object per step; epoch summaries and wall clock stay in memory.
void write_train_log_jsonl(const TrainLog& log, const std::filesystem::path& path);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  int64_t t = 0;
};

// Standard bias-corrected Adam over one tensor; moments are kept in double,
// parameters are written back as float32.
void adam_step(ParamTensor& param, std::span<const double> grad, AdamState& state,
               double lr, const OptimizerConfig& opt);

// Seed plan: every stream hangs off the root seed by label so adding a
// consumer never perturbs another one.
uint64_t dataset_seed(uint64_t root);
uint64_t teacher_init_seed(uint64_t root, int fold);
uint64_t teacher_train_seed(uint64_t root, int fold);
uint64_t diu_train_seed(uint64_t root, int fold);

// Softmax cross-entropy on the fold's train identities, source modality only.
// A temporary classification head is attached and discarded; the embedding
// head stays frozen. Non-finite loss aborts with the step index.
EmbeddingNetwork train_teacher(const Dataset& dataset, const FoldSpec& fold,
                               const NetworkConfig& net_config, const TrainConfig& config,
                               TrainLog* log = nullptr);

struct DiuResult {
  EmbeddingNetwork student;
  ParameterPartition partition;
  TrainLog log;
};

// Student initialized from the teacher; Adam touches blocks 1..diu_cutoff
// only. Gradients for frozen blocks are never materialized, and for
// diu_cutoff = 0 the backward pass is skipped entirely.
DiuResult train_diu(const EmbeddingNetwork& teacher, const Dataset& dataset,
                    const FoldSpec& fold, const TrainConfig& config);

struct AblationRow {
  double value = 0.0;  // diu_cutoff or gamma
  std::map<std::string, MetricStats> stats;
  std::vector<EvalReport> fold_reports;
};

// axis "layers" varies diu_cutoff, axis "gamma" varies loss.gamma; every
// value trains against the same per-fold teachers and per-fold seeds, so the
// axis value is the only thing that changes between rows.
std::vector<AblationRow> run_ablation(const std::string& axis,
                                      const std::vector<double>& values,
                                      const Dataset& dataset,
                                      const std::vector<EmbeddingNetwork>& fold_teachers,
                                      const TrainConfig& diu_base, uint64_t root_seed);

// Columns: value, then mean/std for auc, eer, rank1, vr@far=0.1%, vr@far=1%.
void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::filesystem::path& path);

}  // namespace diu
