#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "diu/rng.hpp"

namespace diu {

struct ModalitySpec {
  std::string name = "source";                              // "source" | "target"
  std::array<double, 9> channel_mix = {1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major 3x3
  bool invert = false;
  double blur_sigma = 0.0;   // pixels; 0 disables
  double noise_sigma = 0.05;
};

// Rotation about the (1,1,1)/sqrt(3) axis: orthogonal, nonsingular,
// condition number 1, so the target transform stays invertible up to
// blur and noise.
std::array<double, 9> rotation_channel_mix(double angle);

ModalitySpec source_modality(double noise_sigma = 0.05);
ModalitySpec target_modality(double mix_angle = 2.0, bool invert = true,
                             double blur_sigma = 1.0, double noise_sigma = 0.05);

struct IdentityLatent {
  int id = 0;
  std::array<double, 16> z{};  // standard normal draws
};

IdentityLatent make_latent(uint64_t dataset_seed, int id);

// Deterministic function of (z, modality, nuisance_seed): 8 Gaussian blobs —
// positions and amplitudes affine in z — over a gradient background, then
// +/-2px translation and additive noise, then the modality transform
// (channel mix, optional inversion, blur), final clamp to [0,1].
// Returns H*W*3 floats, HWC.
std::vector<float> render(const IdentityLatent& latent, const ModalitySpec& modality,
                          uint64_t nuisance_seed, int height, int width);

// One stream per sample; every image in a dataset is reproducible from the
// dataset seed alone.
uint64_t nuisance_seed_for(uint64_t dataset_seed, int id, int modality_index,
                           int sample_index);

struct SampleRef {
  std::string path;  // images/<id>_<modality>_<nuisance_seed>.f32
  int identity = 0;
  std::string modality;
  int sample_index = 0;
  uint64_t nuisance_seed = 0;
};

struct FoldSpec {
  std::vector<int> train_ids;
  std::vector<int> eval_ids;
  std::vector<SampleRef> enrollment;  // one source sample per eval identity
  std::vector<SampleRef> probes;      // every target sample of every eval identity
};

struct SyntheticProtocol {
  uint64_t seed = 0;
  int n_identities = 0;
  int n_samples = 0;
  std::vector<FoldSpec> folds;
};

// Round-robin identity-to-fold assignment; fold f evaluates its identities
// and trains on all others, so train and eval sets are identity-disjoint.
SyntheticProtocol build_protocol(uint64_t seed, int n_identities, int n_samples,
                                 int n_folds);

struct DatasetConfig {
  int n_identities = 40;
  int n_samples = 20;  // per identity per modality
  int n_folds = 5;
  int height = 32;
  int width = 32;
  uint64_t seed = 0;
  ModalitySpec source = source_modality();
  ModalitySpec target = target_modality();

  void validate() const;
};

class Dataset {
 public:
  DatasetConfig config;
  std::vector<SampleRef> index;  // generation order: identity, modality, sample
  SyntheticProtocol protocol;

  void add_image(const SampleRef& ref, std::vector<float> image);
  std::span<const float> image_by_path(const std::string& path) const;
  const SampleRef& sample(int identity, int modality_index, int sample_index) const;

 private:
  std::unordered_map<std::string, std::vector<float>> images_;
  std::unordered_map<std::string, size_t> ref_by_key_;
};

Dataset generate_dataset(const DatasetConfig& config);

// Layout: index.json, protocol.json, images/*.f32. Re-running with the same
// config overwrites with identical bytes.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

struct PairBatch {
  std::vector<float> source_images;  // batch * H * W * 3
  std::vector<float> target_images;
  std::vector<int> labels;  // 1 genuine, 0 impostor
  std::vector<int> source_ids;
  std::vector<int> target_ids;
  int batch = 0;
};

// round(batch_size * genuine_fraction) genuine pairs first, impostors after;
// all draws advance rng deterministically.
PairBatch sample_pairs(const Dataset& dataset, const FoldSpec& fold, int batch_size,
                       double genuine_fraction, CounterRng& rng);

}  // namespace diu
