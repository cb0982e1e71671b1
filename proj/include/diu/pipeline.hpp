#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "diu/config.hpp"
#include "diu/eval.hpp"
#include "diu/synthdata.hpp"
#include "diu/trainer.hpp"

namespace diu {

// Run directory layout:
//   <out>/dataset/                  index.json, protocol.json, images/
//   <out>/fold<N>/teacher/          checkpoint + log.jsonl + run.json
//   <out>/fold<N>/student/          checkpoint + log.jsonl + run.json
//   <out>/reports/                  per-fold EvalReport JSON, ROC CSV, aggregate CSV
//   <out>/ablation-<axis>/          table.csv, summary.txt, run.json
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path dataset_dir() const { return root / "dataset"; }
  std::filesystem::path fold_dir(int fold) const {
    return root / ("fold" + std::to_string(fold));
  }
  std::filesystem::path teacher_dir(int fold) const { return fold_dir(fold) / "teacher"; }
  std::filesystem::path student_dir(int fold) const { return fold_dir(fold) / "student"; }
  std::filesystem::path reports_dir() const { return root / "reports"; }
  std::filesystem::path ablation_dir(const std::string& axis) const {
    return root / ("ablation-" + axis);
  }
};

RunPaths run_paths(const ExperimentConfig& cfg);

// resolved config + sha256 of every consumed input, no timestamps, so a
// rerun writes identical bytes
void write_run_json(const std::filesystem::path& dir, const std::string& command,
                    const ExperimentConfig& cfg,
                    const std::vector<std::pair<std::string, std::string>>& input_hashes);

Dataset generate_and_write_dataset(const ExperimentConfig& cfg);

// DataError with a gen-data hint when the dataset directory is missing.
Dataset load_run_dataset(const ExperimentConfig& cfg);

EmbeddingNetwork train_and_save_teacher(const ExperimentConfig& cfg, const Dataset& dataset,
                                        int fold);

// Requires the fold's teacher checkpoint; errors name the missing fold.
DiuResult train_and_save_student(const ExperimentConfig& cfg, const Dataset& dataset,
                                 int fold);

EmbeddingNetwork load_teacher(const ExperimentConfig& cfg, int fold);

// Evaluates one checkpoint on one fold and writes <label>-fold<N>.json plus
// the ROC CSV; label is the checkpoint directory's last path component.
EvalReport eval_checkpoint_fold(const ExperimentConfig& cfg,
                                const std::filesystem::path& checkpoint, int fold);

// `pattern` may contain "{fold}"; writes per-fold reports and the aggregate
// one-row CSV mirroring the ablation column layout.
std::vector<EvalReport> eval_checkpoint_all_folds(const ExperimentConfig& cfg,
                                                  const std::string& pattern);

// Loads (or trains and saves) every fold teacher, then delegates to
// run_ablation and writes table.csv + summary.txt.
std::vector<AblationRow> ablate_and_write(const ExperimentConfig& cfg, const std::string& axis,
                                          const std::vector<double>& values);

}  // namespace diu
