#include "diu/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "diu/errors.hpp"
#include "diu/fileio.hpp"

namespace diu {

namespace {

using ordered_json = nlohmann::ordered_json;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

EpochRecord summarize_epoch(int epoch, const std::vector<StepRecord>& steps, size_t first) {
  EpochRecord rec;
  rec.epoch = epoch;
  const size_t n = steps.size() - first;
  for (size_t i = first; i < steps.size(); ++i) {
    rec.mean_l_c += steps[i].l_c;
    rec.mean_l_dl += steps[i].l_dl;
    rec.mean_total += steps[i].total;
  }
  if (n > 0) {
    rec.mean_l_c /= static_cast<double>(n);
    rec.mean_l_dl /= static_cast<double>(n);
    rec.mean_total /= static_cast<double>(n);
  }
  return rec;
}

}  // namespace

void TrainConfig::validate(int k_total) const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (steps_per_epoch < 0) throw ConfigError("steps_per_epoch cannot be negative");
  if (diu_cutoff < 0 || diu_cutoff > k_total) {
    throw ConfigError("diu_cutoff " + std::to_string(diu_cutoff) + " outside [0, " +
                      std::to_string(k_total) + "]");
  }
  if (!(genuine_fraction > 0.0 && genuine_fraction < 1.0))
    throw ConfigError("genuine_fraction must be inside (0, 1)");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0))
    throw ConfigError("optimizer.beta1 must be in [0, 1)");
  if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0))
    throw ConfigError("optimizer.beta2 must be in [0, 1)");
  if (!(optimizer.adam_eps > 0.0)) throw ConfigError("optimizer.adam_eps must be positive");
  loss.validate();
}

void write_train_log_jsonl(const TrainLog& log, const std::filesystem::path& path) {
  std::string text;
  for (const StepRecord& s : log.steps) {
    ordered_json j;
    j["step"] = s.step;
    j["l_c"] = s.l_c;
    j["l_dl"] = s.l_dl;
    j["total"] = s.total;
    text += j.dump() + "\n";
  }
  write_text_file(path, text);
}

void adam_step(ParamTensor& param, std::span<const double> grad, AdamState& state,
               double lr, const OptimizerConfig& opt) {
  const size_t n = param.size();
  if (grad.size() != n) {
    throw ShapeError("adam_step: gradient size " + std::to_string(grad.size()) +
                     " does not match parameter " + param.name + " (" + std::to_string(n) +
                     ")");
  }
  if (state.m.empty()) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  } else if (state.m.size() != n || state.v.size() != n) {
    throw ShapeError("adam_step: stale state for parameter " + param.name);
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    state.m[i] = opt.beta1 * state.m[i] + (1.0 - opt.beta1) * g;
    state.v[i] = opt.beta2 * state.v[i] + (1.0 - opt.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    param.data[i] = static_cast<float>(static_cast<double>(param.data[i]) -
                                       lr * mhat / (std::sqrt(vhat) + opt.adam_eps));
  }
}

uint64_t dataset_seed(uint64_t root) { return derive_seed(root, "dataset"); }

uint64_t teacher_init_seed(uint64_t root, int fold) {
  return derive_seed(root, "teacher-init", static_cast<uint64_t>(fold));
}

uint64_t teacher_train_seed(uint64_t root, int fold) {
  return derive_seed(root, "teacher-train", static_cast<uint64_t>(fold));
}

uint64_t diu_train_seed(uint64_t root, int fold) {
  return derive_seed(root, "diu-train", static_cast<uint64_t>(fold));
}

EmbeddingNetwork train_teacher(const Dataset& dataset, const FoldSpec& fold,
                               const NetworkConfig& net_config, const TrainConfig& config,
                               TrainLog* log) {
  const auto start = std::chrono::steady_clock::now();
  net_config.validate();
  config.validate(net_config.num_blocks);

  const int n_classes = static_cast<int>(fold.train_ids.size());
  if (n_classes < 2) {
    throw ConfigError("teacher training needs at least 2 identities (cross-entropy), got " +
                      std::to_string(n_classes));
  }

  // flat list of source-modality training samples, label = index in train_ids
  std::vector<const SampleRef*> samples;
  std::vector<int> classes;
  for (int cls = 0; cls < n_classes; ++cls) {
    const int id = fold.train_ids[static_cast<size_t>(cls)];
    for (int s = 0; s < dataset.config.n_samples; ++s) {
      samples.push_back(&dataset.sample(id, 0, s));
      classes.push_back(cls);
    }
  }
  const int total = static_cast<int>(samples.size());
  const int batch = std::min(config.batch_size, total);
  const int steps_per_epoch =
      config.steps_per_epoch > 0 ? config.steps_per_epoch : (total + batch - 1) / batch;

  EmbeddingNetwork net = build_network(net_config);
  const int emb_dim = net_config.embedding_dim;

  CounterRng rng(config.seed);

  // temporary classification head, discarded after training
  ParamTensor cls_w, cls_b;
  cls_w.name = "cls.weight";
  cls_w.shape = {n_classes, emb_dim};
  cls_w.data.resize(static_cast<size_t>(n_classes) * emb_dim);
  const double cls_bound = 1.0 / std::sqrt(static_cast<double>(emb_dim));
  for (float& v : cls_w.data)
    v = static_cast<float>(cls_bound * (2.0 * rng.next_double() - 1.0));
  cls_b.name = "cls.bias";
  cls_b.shape = {n_classes};
  cls_b.data.assign(static_cast<size_t>(n_classes), 0.0f);

  const int k_total = net_config.num_blocks;
  std::vector<AdamState> w_states(static_cast<size_t>(k_total));
  std::vector<AdamState> b_states(static_cast<size_t>(k_total));
  AdamState cls_w_state, cls_b_state;

  const size_t px = static_cast<size_t>(net_config.input_height) * net_config.input_width * 3;
  std::vector<int> order(static_cast<size_t>(total));
  TrainLog local_log;
  TrainLog& tl = log ? *log : local_log;

  int step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffled_indices(total, rng, order.data());
    const size_t epoch_first = tl.steps.size();
    for (int s = 0; s < steps_per_epoch; ++s) {
      std::vector<float> images(static_cast<size_t>(batch) * px);
      std::vector<int> targets(static_cast<size_t>(batch));
      for (int i = 0; i < batch; ++i) {
        const int idx = order[static_cast<size_t>((s * batch + i) % total)];
        const auto img = dataset.image_by_path(samples[static_cast<size_t>(idx)]->path);
        std::copy(img.begin(), img.end(), images.begin() + static_cast<size_t>(i) * px);
        targets[static_cast<size_t>(i)] = classes[static_cast<size_t>(idx)];
      }

      ForwardTrace trace;
      const DMat emb = forward_with_trace(net, images, batch, trace);

      // logits (n_classes, batch), numerically stable softmax
      DMat logits(n_classes, batch);
      for (int c = 0; c < n_classes; ++c)
        for (int b = 0; b < batch; ++b) {
          double v = static_cast<double>(cls_b.data[static_cast<size_t>(c)]);
          for (int d = 0; d < emb_dim; ++d)
            v += static_cast<double>(cls_w.data[static_cast<size_t>(c) * emb_dim + d]) *
                 emb.at(b, d);
          logits.at(c, b) = v;
        }

      double ce = 0.0;
      DMat probs(n_classes, batch);
      for (int b = 0; b < batch; ++b) {
        double mx = logits.at(0, b);
        for (int c = 1; c < n_classes; ++c) mx = std::max(mx, logits.at(c, b));
        double z = 0.0;
        for (int c = 0; c < n_classes; ++c) {
          probs.at(c, b) = std::exp(logits.at(c, b) - mx);
          z += probs.at(c, b);
        }
        for (int c = 0; c < n_classes; ++c) probs.at(c, b) /= z;
        ce -= std::log(probs.at(targets[static_cast<size_t>(b)], b));
      }
      ce /= batch;

      ++step;
      if (!std::isfinite(ce)) {
        throw DataError("teacher training diverged (non-finite loss) at step " +
                        std::to_string(step));
      }
      tl.steps.push_back({step, 0.0, 0.0, ce});

      // d_logits = (softmax - onehot) / batch
      DMat dlogits(n_classes, batch);
      for (int c = 0; c < n_classes; ++c)
        for (int b = 0; b < batch; ++b)
          dlogits.at(c, b) =
              (probs.at(c, b) - (targets[static_cast<size_t>(b)] == c ? 1.0 : 0.0)) / batch;

      std::vector<double> d_cls_w(cls_w.size(), 0.0);
      std::vector<double> d_cls_b(cls_b.size(), 0.0);
      DMat demb(batch, emb_dim);
      for (int c = 0; c < n_classes; ++c)
        for (int b = 0; b < batch; ++b) {
          const double dl = dlogits.at(c, b);
          d_cls_b[static_cast<size_t>(c)] += dl;
          for (int d = 0; d < emb_dim; ++d) {
            d_cls_w[static_cast<size_t>(c) * emb_dim + d] += dl * emb.at(b, d);
            demb.at(b, d) +=
                dl * static_cast<double>(cls_w.data[static_cast<size_t>(c) * emb_dim + d]);
          }
        }

      const NetworkGrads grads = backward(net, trace, demb, k_total);
      for (int i = 0; i < k_total; ++i) {
        adam_step(net.blocks[static_cast<size_t>(i)].weight, grads.weight[static_cast<size_t>(i)],
                  w_states[static_cast<size_t>(i)], config.learning_rate, config.optimizer);
        adam_step(net.blocks[static_cast<size_t>(i)].bias, grads.bias[static_cast<size_t>(i)],
                  b_states[static_cast<size_t>(i)], config.learning_rate, config.optimizer);
      }
      adam_step(cls_w, d_cls_w, cls_w_state, config.learning_rate, config.optimizer);
      adam_step(cls_b, d_cls_b, cls_b_state, config.learning_rate, config.optimizer);
    }
    tl.epochs.push_back(summarize_epoch(epoch + 1, tl.steps, epoch_first));
  }

  tl.wall_clock_seconds = seconds_since(start);
  return net;
}

DiuResult train_diu(const EmbeddingNetwork& teacher, const Dataset& dataset,
                    const FoldSpec& fold, const TrainConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  config.validate(teacher.config.num_blocks);

  DiuResult result;
  auto [student, partition] = clone_as_student(teacher, config.diu_cutoff);
  result.partition = std::move(partition);

  const int n_train = static_cast<int>(fold.train_ids.size());
  const long long genuine_available = static_cast<long long>(n_train) *
                                      dataset.config.n_samples * dataset.config.n_samples;
  const int steps_per_epoch =
      config.steps_per_epoch > 0
          ? config.steps_per_epoch
          : static_cast<int>((genuine_available + config.batch_size - 1) / config.batch_size);

  CounterRng rng(config.seed);
  const int k = config.diu_cutoff;
  const bool trainable = k > 0;
  std::vector<AdamState> w_states(static_cast<size_t>(k));
  std::vector<AdamState> b_states(static_cast<size_t>(k));

  const int batch = config.batch_size;
  const int emb_dim = teacher.config.embedding_dim;
  const size_t px =
      static_cast<size_t>(teacher.config.input_height) * teacher.config.input_width * 3;

  int step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const size_t epoch_first = result.log.steps.size();
    for (int s = 0; s < steps_per_epoch; ++s) {
      const PairBatch pb =
          sample_pairs(dataset, fold, batch, config.genuine_fraction, rng);

      // source and target halves share one student pass, so one backward
      // accumulates both contributions
      DMat e_s(batch, emb_dim), e_t(batch, emb_dim);
      ForwardTrace trace;
      if (trainable) {
        std::vector<float> both(pb.source_images.size() + pb.target_images.size());
        std::copy(pb.source_images.begin(), pb.source_images.end(), both.begin());
        std::copy(pb.target_images.begin(), pb.target_images.end(),
                  both.begin() + static_cast<std::ptrdiff_t>(pb.source_images.size()));
        const DMat emb2 = forward_with_trace(student, both, 2 * batch, trace);
        for (int b = 0; b < batch; ++b)
          for (int d = 0; d < emb_dim; ++d) {
            e_s.at(b, d) = emb2.at(b, d);
            e_t.at(b, d) = emb2.at(batch + b, d);
          }
      } else {
        e_s = forward_double(student, pb.source_images, batch);
        e_t = forward_double(student, pb.target_images, batch);
      }
      const DMat e_s_teacher = forward_double(teacher, pb.source_images, batch);

      const LossBreakdown breakdown =
          total_loss(e_s, e_t, e_s_teacher, pb.labels, config.loss);
      ++step;
      if (!std::isfinite(breakdown.total)) {
        throw DataError("diu training diverged (non-finite loss) at step " +
                        std::to_string(step));
      }
      result.log.steps.push_back(
          {step, breakdown.contrastive, breakdown.distillation, breakdown.total});

      if (trainable) {
        const LossGrads lg = loss_gradients(e_s, e_t, e_s_teacher, pb.labels, config.loss);
        DMat demb(2 * batch, emb_dim);
        for (int b = 0; b < batch; ++b)
          for (int d = 0; d < emb_dim; ++d) {
            demb.at(b, d) = lg.d_e_s.at(b, d);
            demb.at(batch + b, d) = lg.d_e_t.at(b, d);
          }
        const NetworkGrads grads = backward(student, trace, demb, k);
        for (int i = 0; i < k; ++i) {
          adam_step(student.blocks[static_cast<size_t>(i)].weight,
                    grads.weight[static_cast<size_t>(i)], w_states[static_cast<size_t>(i)],
                    config.learning_rate, config.optimizer);
          adam_step(student.blocks[static_cast<size_t>(i)].bias,
                    grads.bias[static_cast<size_t>(i)], b_states[static_cast<size_t>(i)],
                    config.learning_rate, config.optimizer);
        }
      }
    }
    result.log.epochs.push_back(
        summarize_epoch(epoch + 1, result.log.steps, epoch_first));
  }

  result.log.wall_clock_seconds = seconds_since(start);
  result.student = std::move(student);
  return result;
}

std::vector<AblationRow> run_ablation(const std::string& axis,
                                      const std::vector<double>& values,
                                      const Dataset& dataset,
                                      const std::vector<EmbeddingNetwork>& fold_teachers,
                                      const TrainConfig& diu_base, uint64_t root_seed) {
  if (axis != "layers" && axis != "gamma")
    throw ConfigError("ablation axis must be 'layers' or 'gamma', got '" + axis + "'");
  if (values.empty()) throw ConfigError("ablation needs at least one value");
  if (fold_teachers.size() != dataset.protocol.folds.size())
    throw ConfigError("need one teacher per fold");

  const int k_total = fold_teachers.front().config.num_blocks;
  for (double v : values) {
    if (axis == "gamma" && !(v >= 0.0 && v <= 1.0))
      throw ConfigError("gamma value " + std::to_string(v) + " outside [0, 1]");
    if (axis == "layers" &&
        (v != std::floor(v) || v < 0.0 || v > static_cast<double>(k_total)))
      throw ConfigError("layers value " + std::to_string(v) + " must be an integer in [0, " +
                        std::to_string(k_total) + "]");
  }

  std::vector<AblationRow> rows;
  for (double v : values) {
    TrainConfig cfg = diu_base;
    if (axis == "gamma") {
      cfg.loss.gamma = v;
    } else {
      cfg.diu_cutoff = static_cast<int>(v);
    }
    AblationRow row;
    row.value = v;
    for (size_t f = 0; f < dataset.protocol.folds.size(); ++f) {
      cfg.seed = diu_train_seed(root_seed, static_cast<int>(f));
      const DiuResult res =
          train_diu(fold_teachers[f], dataset, dataset.protocol.folds[f], cfg);
      row.fold_reports.push_back(
          evaluate_fold(res.student, dataset, dataset.protocol.folds[f]));
    }
    row.stats = aggregate_folds(row.fold_reports);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::filesystem::path& path) {
  static const char* kMetrics[] = {"auc", "eer", "rank1", "vr_far_0p1", "vr_far_1"};
  std::string text =
      "value,auc_mean,auc_std,eer_mean,eer_std,rank1_mean,rank1_std,"
      "vr_far_0p1_mean,vr_far_0p1_std,vr_far_1_mean,vr_far_1_std\n";
  char buf[64];
  for (const AblationRow& row : rows) {
    std::snprintf(buf, sizeof(buf), "%g", row.value);
    text += buf;
    for (const char* metric : kMetrics) {
      const MetricStats& s = row.stats.at(metric);
      std::snprintf(buf, sizeof(buf), ",%.6f,%.6f", s.mean, s.stddev);
      text += buf;
    }
    text += "\n";
  }
  write_text_file(path, text);
}

}  // namespace diu
