#include "diu/pipeline.hpp"

#include <cstdio>

#include "diu/checkpoint.hpp"
#include "diu/errors.hpp"
#include "diu/fileio.hpp"
#include "diu/hash.hpp"

namespace diu {

namespace {

using ordered_json = nlohmann::ordered_json;

void check_fold(const ExperimentConfig& cfg, int fold) {
  if (fold < 0 || fold >= cfg.n_folds) {
    throw ConfigError("fold " + std::to_string(fold) + " out of range [0, " +
                      std::to_string(cfg.n_folds - 1) + "]");
  }
}

std::string checkpoint_label(const std::filesystem::path& checkpoint) {
  const std::filesystem::path norm = checkpoint.lexically_normal();
  std::string label = norm.filename().string();
  if (label.empty() || label == ".") label = norm.parent_path().filename().string();
  if (label.empty()) label = "checkpoint";
  return label;
}

std::vector<std::pair<std::string, std::string>> dataset_hashes(const RunPaths& paths) {
  return {{"dataset/index.json", sha256_file(paths.dataset_dir() / "index.json")},
          {"dataset/protocol.json", sha256_file(paths.dataset_dir() / "protocol.json")}};
}

void write_run_json_named(const std::filesystem::path& dir, const std::string& filename,
                          const std::string& command, const ExperimentConfig& cfg,
                          const std::vector<std::pair<std::string, std::string>>& input_hashes) {
  std::filesystem::create_directories(dir);
  ordered_json j;
  j["command"] = command;
  j["config"] = cfg.resolved_json();
  j["inputs"] = ordered_json::object();
  j["inputs"]["resolved_config"] = sha256_hex(cfg.resolved_json().dump(2) + "\n");
  for (const auto& [name, hash] : input_hashes) j["inputs"][name] = hash;
  write_text_file(dir / filename, j.dump(2) + "\n");
}

std::string fmt6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void write_aggregate_csv(const std::map<std::string, MetricStats>& stats,
                         const std::filesystem::path& path) {
  static const char* kMetrics[] = {"auc", "eer", "rank1", "vr_far_0p1", "vr_far_1"};
  std::string text =
      "auc_mean,auc_std,eer_mean,eer_std,rank1_mean,rank1_std,"
      "vr_far_0p1_mean,vr_far_0p1_std,vr_far_1_mean,vr_far_1_std\n";
  bool first = true;
  for (const char* metric : kMetrics) {
    const MetricStats& s = stats.at(metric);
    if (!first) text += ",";
    text += fmt6(s.mean) + "," + fmt6(s.stddev);
    first = false;
  }
  text += "\n";
  write_text_file(path, text);
}

EmbeddingNetwork load_architecture_checked(const ExperimentConfig& cfg,
                                           const std::filesystem::path& dir) {
  LoadedCheckpoint loaded = load_checkpoint(dir);
  if (!loaded.net.config.same_architecture(cfg.network)) {
    throw ConfigError("checkpoint at " + dir.string() +
                      " does not match the configured network architecture");
  }
  return std::move(loaded.net);
}

}  // namespace

RunPaths run_paths(const ExperimentConfig& cfg) { return RunPaths{cfg.resolved_out_dir()}; }

void write_run_json(const std::filesystem::path& dir, const std::string& command,
                    const ExperimentConfig& cfg,
                    const std::vector<std::pair<std::string, std::string>>& input_hashes) {
  write_run_json_named(dir, "run.json", command, cfg, input_hashes);
}

Dataset generate_and_write_dataset(const ExperimentConfig& cfg) {
  const RunPaths paths = run_paths(cfg);
  Dataset ds = generate_dataset(cfg.dataset_config());
  write_dataset(ds, paths.dataset_dir());
  write_run_json(paths.dataset_dir(), "gen-data", cfg, {});
  return ds;
}

Dataset load_run_dataset(const ExperimentConfig& cfg) {
  const RunPaths paths = run_paths(cfg);
  if (!std::filesystem::exists(paths.dataset_dir() / "index.json")) {
    throw DataError("dataset not found at " + paths.dataset_dir().string() +
                    "; run `diu gen-data` first");
  }
  return load_dataset(paths.dataset_dir());
}

EmbeddingNetwork train_and_save_teacher(const ExperimentConfig& cfg, const Dataset& dataset,
                                        int fold) {
  check_fold(cfg, fold);
  const RunPaths paths = run_paths(cfg);

  NetworkConfig nc = cfg.network;
  nc.seed = teacher_init_seed(cfg.seed, fold);
  TrainConfig tc = cfg.teacher;
  tc.seed = teacher_train_seed(cfg.seed, fold);

  TrainLog log;
  EmbeddingNetwork net =
      train_teacher(dataset, dataset.protocol.folds[static_cast<size_t>(fold)], nc, tc, &log);

  const std::filesystem::path dir = paths.teacher_dir(fold);
  ordered_json meta;
  meta["role"] = "teacher";
  meta["fold"] = fold;
  meta["root_seed"] = cfg.seed;
  meta["train_seed"] = tc.seed;
  meta["learning_rate"] = tc.learning_rate;
  meta["epochs"] = tc.epochs;
  meta["batch_size"] = tc.batch_size;
  meta["steps_per_epoch"] = tc.steps_per_epoch;
  save_checkpoint(net, dir, meta, -1);
  log.checkpoint_path = dir.string();
  write_train_log_jsonl(log, dir / "log.jsonl");

  ordered_json summary;
  summary["wall_clock_seconds"] = log.wall_clock_seconds;
  summary["steps"] = log.steps.size();
  if (!log.epochs.empty()) summary["final_epoch_mean_loss"] = log.epochs.back().mean_total;
  write_text_file(dir / "train_summary.json", summary.dump(2) + "\n");

  write_run_json(dir, "train --stage teacher --fold " + std::to_string(fold), cfg,
                 dataset_hashes(paths));
  return net;
}

EmbeddingNetwork load_teacher(const ExperimentConfig& cfg, int fold) {
  check_fold(cfg, fold);
  const RunPaths paths = run_paths(cfg);
  const std::filesystem::path dir = paths.teacher_dir(fold);
  if (!std::filesystem::exists(dir / "meta.json")) {
    throw DataError("teacher checkpoint not found for fold " + std::to_string(fold) + " at " +
                    dir.string() + "; run `diu train --stage teacher --fold " +
                    std::to_string(fold) + "` first");
  }
  return load_architecture_checked(cfg, dir);
}

DiuResult train_and_save_student(const ExperimentConfig& cfg, const Dataset& dataset,
                                 int fold) {
  check_fold(cfg, fold);
  const RunPaths paths = run_paths(cfg);
  const EmbeddingNetwork teacher = load_teacher(cfg, fold);

  TrainConfig tc = cfg.diu;
  tc.seed = diu_train_seed(cfg.seed, fold);
  DiuResult res =
      train_diu(teacher, dataset, dataset.protocol.folds[static_cast<size_t>(fold)], tc);

  const std::filesystem::path dir = paths.student_dir(fold);
  ordered_json meta;
  meta["role"] = "student";
  meta["fold"] = fold;
  meta["root_seed"] = cfg.seed;
  meta["train_seed"] = tc.seed;
  meta["learning_rate"] = tc.learning_rate;
  meta["epochs"] = tc.epochs;
  meta["batch_size"] = tc.batch_size;
  meta["steps_per_epoch"] = tc.steps_per_epoch;
  meta["gamma"] = tc.loss.gamma;
  meta["margin"] = tc.loss.margin;
  meta["genuine_fraction"] = tc.genuine_fraction;
  save_checkpoint(res.student, dir, meta, tc.diu_cutoff);
  res.log.checkpoint_path = dir.string();
  write_train_log_jsonl(res.log, dir / "log.jsonl");

  ordered_json summary;
  summary["wall_clock_seconds"] = res.log.wall_clock_seconds;
  summary["steps"] = res.log.steps.size();
  if (!res.log.epochs.empty()) summary["final_epoch_mean_loss"] = res.log.epochs.back().mean_total;
  write_text_file(dir / "train_summary.json", summary.dump(2) + "\n");

  auto hashes = dataset_hashes(paths);
  hashes.emplace_back("teacher/params.bin",
                      sha256_file(paths.teacher_dir(fold) / "params.bin"));
  write_run_json(dir, "train --stage diu --fold " + std::to_string(fold), cfg, hashes);
  return res;
}

EvalReport eval_checkpoint_fold(const ExperimentConfig& cfg,
                                const std::filesystem::path& checkpoint, int fold) {
  check_fold(cfg, fold);
  const RunPaths paths = run_paths(cfg);
  const Dataset dataset = load_run_dataset(cfg);
  if (!std::filesystem::exists(checkpoint / "meta.json")) {
    throw DataError("checkpoint not found at " + checkpoint.string());
  }
  const EmbeddingNetwork net = load_architecture_checked(cfg, checkpoint);

  const EvalReport report =
      evaluate_fold(net, dataset, dataset.protocol.folds[static_cast<size_t>(fold)]);

  const std::string label = checkpoint_label(checkpoint);
  const std::string stem = label + "-fold" + std::to_string(fold);
  std::filesystem::create_directories(paths.reports_dir());
  write_text_file(paths.reports_dir() / (stem + ".json"), report_to_json_text(report));
  write_roc_csv(report.roc, (paths.reports_dir() / (stem + "-roc.csv")).string());

  auto hashes = dataset_hashes(paths);
  hashes.emplace_back("checkpoint/params.bin", sha256_file(checkpoint / "params.bin"));
  write_run_json_named(paths.reports_dir(), stem + "-run.json",
                       "eval --checkpoint " + checkpoint.string() + " --fold " +
                           std::to_string(fold),
                       cfg, hashes);
  return report;
}

std::vector<EvalReport> eval_checkpoint_all_folds(const ExperimentConfig& cfg,
                                                  const std::string& pattern) {
  const RunPaths paths = run_paths(cfg);
  if (cfg.n_folds > 1 && pattern.find("{fold}") == std::string::npos) {
    throw ConfigError("--all-folds needs a checkpoint path containing {fold}");
  }
  std::vector<EvalReport> reports;
  std::string label;
  for (int f = 0; f < cfg.n_folds; ++f) {
    std::string path = pattern;
    if (const size_t at = path.find("{fold}"); at != std::string::npos)
      path.replace(at, 6, std::to_string(f));
    if (label.empty()) label = checkpoint_label(path);
    reports.push_back(eval_checkpoint_fold(cfg, path, f));
  }
  write_aggregate_csv(aggregate_folds(reports),
                      paths.reports_dir() / (label + "-aggregate.csv"));
  return reports;
}

std::vector<AblationRow> ablate_and_write(const ExperimentConfig& cfg, const std::string& axis,
                                          const std::vector<double>& values) {
  const RunPaths paths = run_paths(cfg);
  const Dataset dataset = load_run_dataset(cfg);

  std::vector<EmbeddingNetwork> teachers;
  std::vector<std::pair<std::string, std::string>> hashes = dataset_hashes(paths);
  for (int f = 0; f < cfg.n_folds; ++f) {
    if (std::filesystem::exists(paths.teacher_dir(f) / "meta.json")) {
      teachers.push_back(load_teacher(cfg, f));
    } else {
      teachers.push_back(train_and_save_teacher(cfg, dataset, f));
    }
    hashes.emplace_back("fold" + std::to_string(f) + "/teacher/params.bin",
                        sha256_file(paths.teacher_dir(f) / "params.bin"));
  }

  const std::vector<AblationRow> rows =
      run_ablation(axis, values, dataset, teachers, cfg.diu, cfg.seed);

  const std::filesystem::path dir = paths.ablation_dir(axis);
  std::filesystem::create_directories(dir);
  write_ablation_csv(rows, dir / "table.csv");

  std::string text = "axis: " + axis + " (" + std::to_string(cfg.n_folds) +
                     " folds, mean +/- population std)\n\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-8s %-19s %-19s %-19s %-19s %-19s\n", "value", "auc",
                "eer", "rank1", "vr@far=0.1%", "vr@far=1%");
  text += buf;
  for (const AblationRow& row : rows) {
    std::snprintf(buf, sizeof(buf), "%-8g", row.value);
    text += buf;
    for (const char* metric : {"auc", "eer", "rank1", "vr_far_0p1", "vr_far_1"}) {
      const MetricStats& s = row.stats.at(metric);
      std::snprintf(buf, sizeof(buf), " %8.4f +- %6.4f ", s.mean, s.stddev);
      text += buf;
    }
    text += "\n";
  }
  write_text_file(dir / "summary.txt", text);

  std::string values_str;
  for (double v : values) {
    if (!values_str.empty()) values_str += ",";
    char vb[32];
    std::snprintf(vb, sizeof(vb), "%g", v);
    values_str += vb;
  }
  write_run_json(dir, "ablate --axis " + axis + " --values " + values_str, cfg, hashes);
  return rows;
}

}  // namespace diu
