#include "diu/synthdata.hpp"

#include <algorithm>
#include <cmath>

#include "diu/errors.hpp"
#include "diu/fileio.hpp"

namespace diu {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::array<double, 9> kIdentityMix = {1, 0, 0, 0, 1, 0, 0, 0, 1};

// background gradient slopes per channel
constexpr std::array<double, 3> kBgSlopeY = {0.10, 0.16, 0.22};

int modality_index(const std::string& name) {
  if (name == "source") return 0;
  if (name == "target") return 1;
  throw DataError("unknown modality name: " + name);
}

std::string modality_name(int index) { return index == 0 ? "source" : "target"; }

// Fixed coefficients shared by every dataset: the blob family is part of the
// generator, not of any particular seed.
struct BlobCoeffs {
  std::array<double, 16> pos_x{};
  std::array<double, 16> pos_y{};
  std::array<double, 16> amp{};
  std::array<double, 3> color{};
  double radius = 0.1;
};

const std::array<BlobCoeffs, 8>& blob_coeffs() {
  static const std::array<BlobCoeffs, 8> coeffs = [] {
    std::array<BlobCoeffs, 8> cs;
    CounterRng rng(0xD10B10B5C0FFEEull);
    for (BlobCoeffs& c : cs) {
      for (double& v : c.pos_x) v = rng.next_normal() / 4.0;  // dot(z) ~ N(0,1)
      for (double& v : c.pos_y) v = rng.next_normal() / 4.0;
      for (double& v : c.amp) v = rng.next_normal() / 4.0;
      for (double& v : c.color) v = 0.35 + 0.6 * rng.next_double();
      c.radius = 0.10 + 0.12 * rng.next_double();
    }
    return cs;
  }();
  return coeffs;
}

double dot16(const std::array<double, 16>& a, const std::array<double, 16>& z) {
  double s = 0.0;
  for (size_t i = 0; i < 16; ++i) s += a[i] * z[i];
  return s;
}

void gaussian_blur_inplace(std::vector<double>& img, int h, int w, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<size_t>(i + radius)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += kernel[static_cast<size_t>(i + radius)];
  }
  for (double& k : kernel) k /= sum;

  std::vector<double> tmp(img.size());
  auto at = [&](std::vector<double>& buf, int y, int x, int c) -> double& {
    return buf[(static_cast<size_t>(y) * w + x) * 3 + c];
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int xi = std::clamp(x + i, 0, w - 1);
          v += kernel[static_cast<size_t>(i + radius)] * at(img, y, xi, c);
        }
        at(tmp, y, x, c) = v;
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int yi = std::clamp(y + i, 0, h - 1);
          v += kernel[static_cast<size_t>(i + radius)] * at(tmp, yi, x, c);
        }
        at(img, y, x, c) = v;
      }
}

std::string sample_path(int id, const std::string& modality, uint64_t nuisance_seed) {
  return "images/" + std::to_string(id) + "_" + modality + "_" +
         std::to_string(nuisance_seed) + ".f32";
}

SampleRef make_ref(uint64_t dataset_seed, int id, int mindex, int sample_index) {
  SampleRef ref;
  ref.identity = id;
  ref.modality = modality_name(mindex);
  ref.sample_index = sample_index;
  ref.nuisance_seed = nuisance_seed_for(dataset_seed, id, mindex, sample_index);
  ref.path = sample_path(id, ref.modality, ref.nuisance_seed);
  return ref;
}

ordered_json modality_to_json(const ModalitySpec& m) {
  ordered_json j;
  j["name"] = m.name;
  j["channel_mix"] = m.channel_mix;
  j["invert"] = m.invert;
  j["blur_sigma"] = m.blur_sigma;
  j["noise_sigma"] = m.noise_sigma;
  return j;
}

ModalitySpec modality_from_json(const nlohmann::json& j) {
  ModalitySpec m;
  m.name = j.at("name").get<std::string>();
  const auto mix = j.at("channel_mix").get<std::vector<double>>();
  if (mix.size() != 9) throw DataError("channel_mix must have 9 entries");
  std::copy(mix.begin(), mix.end(), m.channel_mix.begin());
  m.invert = j.at("invert").get<bool>();
  m.blur_sigma = j.at("blur_sigma").get<double>();
  m.noise_sigma = j.at("noise_sigma").get<double>();
  return m;
}

ordered_json ref_to_json(const SampleRef& r) {
  ordered_json j;
  j["path"] = r.path;
  j["identity"] = r.identity;
  j["modality"] = r.modality;
  j["sample_index"] = r.sample_index;
  j["nuisance_seed"] = r.nuisance_seed;
  return j;
}

SampleRef ref_from_json(const nlohmann::json& j) {
  SampleRef r;
  r.path = j.at("path").get<std::string>();
  r.identity = j.at("identity").get<int>();
  r.modality = j.at("modality").get<std::string>();
  r.sample_index = j.at("sample_index").get<int>();
  r.nuisance_seed = j.at("nuisance_seed").get<uint64_t>();
  return r;
}

std::string ref_key(int id, int mindex, int sample_index) {
  return std::to_string(id) + "|" + std::to_string(mindex) + "|" +
         std::to_string(sample_index);
}

}  // namespace

std::array<double, 9> rotation_channel_mix(double angle) {
  const double u = 1.0 / std::sqrt(3.0);
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double t = 1.0 - c;
  // Rodrigues rotation about (u, u, u)
  return {c + t * u * u, t * u * u - s * u, t * u * u + s * u,
          t * u * u + s * u, c + t * u * u, t * u * u - s * u,
          t * u * u - s * u, t * u * u + s * u, c + t * u * u};
}

ModalitySpec source_modality(double noise_sigma) {
  ModalitySpec m;
  m.name = "source";
  m.noise_sigma = noise_sigma;
  return m;
}

ModalitySpec target_modality(double mix_angle, bool invert, double blur_sigma,
                             double noise_sigma) {
  ModalitySpec m;
  m.name = "target";
  m.channel_mix = rotation_channel_mix(mix_angle);
  m.invert = invert;
  m.blur_sigma = blur_sigma;
  m.noise_sigma = noise_sigma;
  return m;
}

IdentityLatent make_latent(uint64_t dataset_seed, int id) {
  IdentityLatent latent;
  latent.id = id;
  CounterRng rng(derive_seed(dataset_seed, "identity", static_cast<uint64_t>(id)));
  for (double& v : latent.z) v = rng.next_normal();
  return latent;
}

uint64_t nuisance_seed_for(uint64_t dataset_seed, int id, int modality_index,
                           int sample_index) {
  return derive_seed(dataset_seed, "nuisance", static_cast<uint64_t>(id),
                     static_cast<uint64_t>(modality_index) * 1000003ull +
                         static_cast<uint64_t>(sample_index));
}

std::vector<float> render(const IdentityLatent& latent, const ModalitySpec& modality,
                          uint64_t nuisance_seed, int height, int width) {
  if (height < 4 || width < 4) throw ConfigError("render needs at least 4x4 images");

  CounterRng rng(nuisance_seed);
  const int dx = static_cast<int>(rng.next_int(-2, 2));
  const int dy = static_cast<int>(rng.next_int(-2, 2));

  const auto& coeffs = blob_coeffs();
  std::array<double, 8> cx, cy, amp;
  for (size_t j = 0; j < 8; ++j) {
    cx[j] = 0.5 + 0.16 * dot16(coeffs[j].pos_x, latent.z) + static_cast<double>(dx) / width;
    cy[j] = 0.5 + 0.16 * dot16(coeffs[j].pos_y, latent.z) + static_cast<double>(dy) / height;
    amp[j] = 0.55 + 0.25 * dot16(coeffs[j].amp, latent.z);
  }

  std::vector<double> img(static_cast<size_t>(height) * width * 3);
  for (int y = 0; y < height; ++y) {
    const double yn = (y + 0.5) / height;
    for (int x = 0; x < width; ++x) {
      const double xn = (x + 0.5) / width;
      const size_t p = (static_cast<size_t>(y) * width + x) * 3;
      for (int c = 0; c < 3; ++c) img[p + c] = 0.18 + 0.22 * xn + kBgSlopeY[c] * yn;
      for (size_t j = 0; j < 8; ++j) {
        const double ddx = xn - cx[j];
        const double ddy = yn - cy[j];
        const double g =
            std::exp(-(ddx * ddx + ddy * ddy) / (2.0 * coeffs[j].radius * coeffs[j].radius));
        const double a = amp[j] * g;
        for (int c = 0; c < 3; ++c) img[p + c] += a * coeffs[j].color[c];
      }
    }
  }

  // additive sensor noise, then the declarative modality transform
  if (modality.noise_sigma > 0.0)
    for (double& v : img) v += modality.noise_sigma * rng.next_normal();

  const std::array<double, 9>& m = modality.channel_mix;
  if (m != kIdentityMix) {
    for (size_t p = 0; p < img.size(); p += 3) {
      const double r = img[p], g = img[p + 1], b = img[p + 2];
      img[p] = m[0] * r + m[1] * g + m[2] * b;
      img[p + 1] = m[3] * r + m[4] * g + m[5] * b;
      img[p + 2] = m[6] * r + m[7] * g + m[8] * b;
    }
  }
  if (modality.invert)
    for (double& v : img) v = 1.0 - v;
  if (modality.blur_sigma > 0.0) gaussian_blur_inplace(img, height, width, modality.blur_sigma);

  std::vector<float> out(img.size());
  for (size_t i = 0; i < img.size(); ++i)
    out[i] = static_cast<float>(std::clamp(img[i], 0.0, 1.0));
  return out;
}

SyntheticProtocol build_protocol(uint64_t seed, int n_identities, int n_samples,
                                 int n_folds) {
  if (n_folds < 1) throw ConfigError("n_folds must be at least 1");
  if (n_identities < 2 * n_folds) {
    throw ConfigError("n_identities must be at least 2 * n_folds (" +
                      std::to_string(2 * n_folds) + "), got " +
                      std::to_string(n_identities));
  }
  if (n_samples < 2) throw ConfigError("n_samples must be at least 2");

  SyntheticProtocol protocol;
  protocol.seed = seed;
  protocol.n_identities = n_identities;
  protocol.n_samples = n_samples;
  for (int f = 0; f < n_folds; ++f) {
    FoldSpec fold;
    for (int id = 0; id < n_identities; ++id)
      (id % n_folds == f ? fold.eval_ids : fold.train_ids).push_back(id);
    for (int id : fold.eval_ids) fold.enrollment.push_back(make_ref(seed, id, 0, 0));
    for (int id : fold.eval_ids)
      for (int s = 0; s < n_samples; ++s) fold.probes.push_back(make_ref(seed, id, 1, s));
    protocol.folds.push_back(std::move(fold));
  }
  return protocol;
}

void DatasetConfig::validate() const {
  if (n_folds < 1) throw ConfigError("n_folds must be at least 1");
  if (n_identities < 2 * n_folds) {
    throw ConfigError("n_identities must be at least 2 * n_folds, got " +
                      std::to_string(n_identities));
  }
  if (n_samples < 2) throw ConfigError("n_samples must be at least 2");
  if (height < 4 || width < 4) throw ConfigError("image size must be at least 4x4");
  if (source.name != "source" || target.name != "target")
    throw ConfigError("modality specs must be named source/target");
  if (source.channel_mix != kIdentityMix || source.invert || source.blur_sigma != 0.0)
    throw ConfigError("the source modality must be the identity transform");
}

void Dataset::add_image(const SampleRef& ref, std::vector<float> image) {
  ref_by_key_[ref_key(ref.identity, modality_index(ref.modality), ref.sample_index)] =
      index.size();
  index.push_back(ref);
  images_[ref.path] = std::move(image);
}

std::span<const float> Dataset::image_by_path(const std::string& path) const {
  const auto it = images_.find(path);
  if (it == images_.end()) throw DataError("unknown sample path: " + path);
  return it->second;
}

const SampleRef& Dataset::sample(int identity, int mindex, int sample_index) const {
  const auto it = ref_by_key_.find(ref_key(identity, mindex, sample_index));
  if (it == ref_by_key_.end()) {
    throw DataError("no sample for identity " + std::to_string(identity) + ", modality " +
                    modality_name(mindex) + ", index " + std::to_string(sample_index));
  }
  return index[it->second];
}

Dataset generate_dataset(const DatasetConfig& config) {
  config.validate();
  Dataset ds;
  ds.config = config;
  for (int id = 0; id < config.n_identities; ++id) {
    const IdentityLatent latent = make_latent(config.seed, id);
    for (int m = 0; m < 2; ++m) {
      const ModalitySpec& spec = (m == 0) ? config.source : config.target;
      for (int s = 0; s < config.n_samples; ++s) {
        const SampleRef ref = make_ref(config.seed, id, m, s);
        ds.add_image(ref,
                     render(latent, spec, ref.nuisance_seed, config.height, config.width));
      }
    }
  }
  ds.protocol =
      build_protocol(config.seed, config.n_identities, config.n_samples, config.n_folds);
  return ds;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");

  ordered_json index;
  index["seed"] = dataset.config.seed;
  index["n_identities"] = dataset.config.n_identities;
  index["n_samples_per_identity"] = dataset.config.n_samples;
  index["n_folds"] = dataset.config.n_folds;
  index["height"] = dataset.config.height;
  index["width"] = dataset.config.width;
  index["source"] = modality_to_json(dataset.config.source);
  index["target"] = modality_to_json(dataset.config.target);
  index["entries"] = ordered_json::array();
  for (const SampleRef& r : dataset.index) index["entries"].push_back(ref_to_json(r));
  write_text_file(dir / "index.json", index.dump(2) + "\n");

  ordered_json protocol;
  protocol["seed"] = dataset.protocol.seed;
  protocol["n_identities"] = dataset.protocol.n_identities;
  protocol["n_samples"] = dataset.protocol.n_samples;
  protocol["n_folds"] = dataset.protocol.folds.size();
  protocol["folds"] = ordered_json::array();
  for (const FoldSpec& fold : dataset.protocol.folds) {
    ordered_json f;
    f["train_ids"] = fold.train_ids;
    f["eval_ids"] = fold.eval_ids;
    f["enrollment"] = ordered_json::array();
    for (const SampleRef& r : fold.enrollment) f["enrollment"].push_back(ref_to_json(r));
    f["probes"] = ordered_json::array();
    for (const SampleRef& r : fold.probes) f["probes"].push_back(ref_to_json(r));
    protocol["folds"].push_back(std::move(f));
  }
  write_text_file(dir / "protocol.json", protocol.dump(2) + "\n");

  for (const SampleRef& r : dataset.index)
    write_f32_file(dir / r.path, dataset.image_by_path(r.path));
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const ordered_json index = parse_json_file(dir / "index.json");
  Dataset ds;
  try {
    ds.config.seed = index.at("seed").get<uint64_t>();
    ds.config.n_identities = index.at("n_identities").get<int>();
    ds.config.n_samples = index.at("n_samples_per_identity").get<int>();
    ds.config.n_folds = index.at("n_folds").get<int>();
    ds.config.height = index.at("height").get<int>();
    ds.config.width = index.at("width").get<int>();
    ds.config.source = modality_from_json(index.at("source"));
    ds.config.target = modality_from_json(index.at("target"));

    const size_t expected = static_cast<size_t>(ds.config.height) * ds.config.width * 3;
    for (const auto& e : index.at("entries")) {
      const SampleRef ref = ref_from_json(e);
      std::vector<float> img = read_f32_file(dir / ref.path);
      if (img.size() != expected) {
        throw DataError(ref.path + ": has " + std::to_string(img.size()) +
                        " floats, expected " + std::to_string(expected));
      }
      ds.add_image(ref, std::move(img));
    }

    const ordered_json protocol = parse_json_file(dir / "protocol.json");
    ds.protocol.seed = protocol.at("seed").get<uint64_t>();
    ds.protocol.n_identities = protocol.at("n_identities").get<int>();
    ds.protocol.n_samples = protocol.at("n_samples").get<int>();
    for (const auto& f : protocol.at("folds")) {
      FoldSpec fold;
      fold.train_ids = f.at("train_ids").get<std::vector<int>>();
      fold.eval_ids = f.at("eval_ids").get<std::vector<int>>();
      for (const auto& r : f.at("enrollment")) fold.enrollment.push_back(ref_from_json(r));
      for (const auto& r : f.at("probes")) fold.probes.push_back(ref_from_json(r));
      ds.protocol.folds.push_back(std::move(fold));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(dir.string() + ": malformed dataset: " + e.what());
  }
  return ds;
}

PairBatch sample_pairs(const Dataset& dataset, const FoldSpec& fold, int batch_size,
                       double genuine_fraction, CounterRng& rng) {
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (!(genuine_fraction > 0.0 && genuine_fraction < 1.0))
    throw ConfigError("genuine_fraction must be inside (0, 1)");
  const int n_train = static_cast<int>(fold.train_ids.size());
  if (n_train < 2) throw ConfigError("fold needs at least 2 training identities");

  const int n_samples = dataset.config.n_samples;
  const int n_genuine =
      static_cast<int>(std::lround(batch_size * genuine_fraction));

  PairBatch batch;
  batch.batch = batch_size;
  const size_t px = static_cast<size_t>(dataset.config.height) * dataset.config.width * 3;
  batch.source_images.reserve(static_cast<size_t>(batch_size) * px);
  batch.target_images.reserve(static_cast<size_t>(batch_size) * px);

  auto push = [&](int source_id, int target_id) {
    const SampleRef& sref =
        dataset.sample(source_id, 0, static_cast<int>(rng.next_int(0, n_samples - 1)));
    const SampleRef& tref =
        dataset.sample(target_id, 1, static_cast<int>(rng.next_int(0, n_samples - 1)));
    const auto simg = dataset.image_by_path(sref.path);
    const auto timg = dataset.image_by_path(tref.path);
    batch.source_images.insert(batch.source_images.end(), simg.begin(), simg.end());
    batch.target_images.insert(batch.target_images.end(), timg.begin(), timg.end());
    batch.source_ids.push_back(source_id);
    batch.target_ids.push_back(target_id);
  };

  for (int i = 0; i < n_genuine && i < batch_size; ++i) {
    const int id = fold.train_ids[static_cast<size_t>(rng.next_int(0, n_train - 1))];
    push(id, id);
    batch.labels.push_back(1);
  }
  while (static_cast<int>(batch.labels.size()) < batch_size) {
    const int a = fold.train_ids[static_cast<size_t>(rng.next_int(0, n_train - 1))];
    int b = a;
    while (b == a) b = fold.train_ids[static_cast<size_t>(rng.next_int(0, n_train - 1))];
    push(a, b);
    batch.labels.push_back(0);
  }
  return batch;
}

}  // namespace diu
