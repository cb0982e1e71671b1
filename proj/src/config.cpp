#include "diu/config.hpp"

#include <set>

#include "diu/errors.hpp"
#include "diu/fileio.hpp"
#include "diu/toml.hpp"

namespace diu {

namespace {

using ordered_json = nlohmann::ordered_json;

const std::set<std::string> kKnownKeys = {
    "name",
    "seed",
    "out_dir",
    "network.input_height",
    "network.input_width",
    "network.num_blocks",
    "network.channels_per_block",
    "network.embedding_dim",
    "dataset.n_identities",
    "dataset.n_samples_per_identity",
    "dataset.noise_sigma",
    "dataset.target.channel_mix_angle",
    "dataset.target.invert",
    "dataset.target.blur_sigma",
    "dataset.target.noise_sigma",
    "protocol.n_folds",
    "loss.margin",
    "loss.gamma",
    "loss.eps",
    "loss.squared_distillation",
    "optimizer.beta1",
    "optimizer.beta2",
    "optimizer.adam_eps",
    "teacher.learning_rate",
    "teacher.epochs",
    "teacher.batch_size",
    "teacher.steps_per_epoch",
    "diu.learning_rate",
    "diu.epochs",
    "diu.batch_size",
    "diu.steps_per_epoch",
    "diu.diu_cutoff",
    "diu.genuine_fraction",
};

int get_int(const TomlTable& t, const std::string& key, int def) {
  if (!t.contains(key)) return def;
  const int64_t v = t.at(key).as_int(key);
  return static_cast<int>(v);
}

double get_double(const TomlTable& t, const std::string& key, double def) {
  return t.contains(key) ? t.at(key).as_double(key) : def;
}

bool get_bool(const TomlTable& t, const std::string& key, bool def) {
  return t.contains(key) ? t.at(key).as_bool(key) : def;
}

std::string get_string(const TomlTable& t, const std::string& key, const std::string& def) {
  return t.contains(key) ? t.at(key).as_string(key) : def;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_toml_text(const std::string& text) {
  const TomlTable t = TomlTable::parse(text);

  for (const auto& [key, value] : t.entries()) {
    if (!kKnownKeys.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }

  ExperimentConfig c;
  c.name = get_string(t, "name", c.name);
  if (t.contains("seed")) c.seed = static_cast<uint64_t>(t.at("seed").as_int("seed"));
  c.out_dir = get_string(t, "out_dir", c.out_dir);

  c.network.input_height = get_int(t, "network.input_height", c.network.input_height);
  c.network.input_width = get_int(t, "network.input_width", c.network.input_width);
  c.network.num_blocks = get_int(t, "network.num_blocks", c.network.num_blocks);
  if (t.contains("network.channels_per_block")) {
    c.network.channels_per_block.clear();
    for (int64_t v :
         t.at("network.channels_per_block").as_int_array("network.channels_per_block"))
      c.network.channels_per_block.push_back(static_cast<int>(v));
  }
  c.network.embedding_dim = get_int(t, "network.embedding_dim", c.network.embedding_dim);

  c.n_identities = get_int(t, "dataset.n_identities", c.n_identities);
  c.n_samples = get_int(t, "dataset.n_samples_per_identity", c.n_samples);
  c.source_noise_sigma = get_double(t, "dataset.noise_sigma", c.source_noise_sigma);
  c.target_mix_angle = get_double(t, "dataset.target.channel_mix_angle", c.target_mix_angle);
  c.target_invert = get_bool(t, "dataset.target.invert", c.target_invert);
  c.target_blur_sigma = get_double(t, "dataset.target.blur_sigma", c.target_blur_sigma);
  c.target_noise_sigma = get_double(t, "dataset.target.noise_sigma", c.target_noise_sigma);
  c.n_folds = get_int(t, "protocol.n_folds", c.n_folds);

  c.loss.margin = get_double(t, "loss.margin", c.loss.margin);
  c.loss.gamma = get_double(t, "loss.gamma", c.loss.gamma);
  c.loss.eps = get_double(t, "loss.eps", c.loss.eps);
  c.loss.squared_distillation =
      get_bool(t, "loss.squared_distillation", c.loss.squared_distillation);

  c.optimizer.beta1 = get_double(t, "optimizer.beta1", c.optimizer.beta1);
  c.optimizer.beta2 = get_double(t, "optimizer.beta2", c.optimizer.beta2);
  c.optimizer.adam_eps = get_double(t, "optimizer.adam_eps", c.optimizer.adam_eps);

  // teacher defaults: higher learning rate, shorter run than the DIU stage
  c.teacher.learning_rate = 1e-3;
  c.teacher.epochs = 30;
  c.teacher.learning_rate = get_double(t, "teacher.learning_rate", c.teacher.learning_rate);
  c.teacher.epochs = get_int(t, "teacher.epochs", c.teacher.epochs);
  c.teacher.batch_size = get_int(t, "teacher.batch_size", c.teacher.batch_size);
  c.teacher.steps_per_epoch = get_int(t, "teacher.steps_per_epoch", c.teacher.steps_per_epoch);

  c.diu.learning_rate = get_double(t, "diu.learning_rate", c.diu.learning_rate);
  c.diu.epochs = get_int(t, "diu.epochs", c.diu.epochs);
  c.diu.batch_size = get_int(t, "diu.batch_size", c.diu.batch_size);
  c.diu.steps_per_epoch = get_int(t, "diu.steps_per_epoch", c.diu.steps_per_epoch);
  c.diu.diu_cutoff = get_int(t, "diu.diu_cutoff", c.diu.diu_cutoff);
  c.diu.genuine_fraction = get_double(t, "diu.genuine_fraction", c.diu.genuine_fraction);

  c.teacher.optimizer = c.optimizer;
  c.diu.optimizer = c.optimizer;
  c.diu.loss = c.loss;

  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::from_toml_file(const std::filesystem::path& path) {
  return from_toml_text(read_text_file(path));
}

void ExperimentConfig::validate() const {
  network.validate();
  if (name.empty()) throw ConfigError("name must not be empty");
  dataset_config().validate();
  teacher.validate(network.num_blocks);
  diu.validate(network.num_blocks);
}

DatasetConfig ExperimentConfig::dataset_config() const {
  DatasetConfig d;
  d.n_identities = n_identities;
  d.n_samples = n_samples;
  d.n_folds = n_folds;
  d.height = network.input_height;
  d.width = network.input_width;
  d.seed = dataset_seed(seed);
  d.source = source_modality(source_noise_sigma);
  d.target = target_modality(target_mix_angle, target_invert, target_blur_sigma,
                             target_noise_sigma);
  return d;
}

std::filesystem::path ExperimentConfig::resolved_out_dir() const {
  if (!out_dir.empty()) return out_dir;
  return std::filesystem::path("runs") / name;
}

nlohmann::ordered_json ExperimentConfig::resolved_json() const {
  ordered_json j;
  j["name"] = name;
  j["seed"] = seed;
  j["out_dir"] = resolved_out_dir().string();
  j["network"] = {{"input_height", network.input_height},
                  {"input_width", network.input_width},
                  {"num_blocks", network.num_blocks},
                  {"channels_per_block", network.channels_per_block},
                  {"embedding_dim", network.embedding_dim}};
  j["dataset"] = {{"n_identities", n_identities},
                  {"n_samples_per_identity", n_samples},
                  {"noise_sigma", source_noise_sigma},
                  {"target",
                   {{"channel_mix_angle", target_mix_angle},
                    {"invert", target_invert},
                    {"blur_sigma", target_blur_sigma},
                    {"noise_sigma", target_noise_sigma}}}};
  j["protocol"] = {{"n_folds", n_folds}};
  j["loss"] = {{"margin", loss.margin},
               {"gamma", loss.gamma},
               {"eps", loss.eps},
               {"squared_distillation", loss.squared_distillation}};
  j["optimizer"] = {{"beta1", optimizer.beta1},
                    {"beta2", optimizer.beta2},
                    {"adam_eps", optimizer.adam_eps}};
  j["teacher"] = {{"learning_rate", teacher.learning_rate},
                  {"epochs", teacher.epochs},
                  {"batch_size", teacher.batch_size},
                  {"steps_per_epoch", teacher.steps_per_epoch}};
  j["diu"] = {{"learning_rate", diu.learning_rate},
              {"epochs", diu.epochs},
              {"batch_size", diu.batch_size},
              {"steps_per_epoch", diu.steps_per_epoch},
              {"diu_cutoff", diu.diu_cutoff},
              {"genuine_fraction", diu.genuine_fraction}};
  return j;
}

}  // namespace diu
