#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "diu/mat.hpp"

namespace diu {

struct NetworkConfig {
  int input_height = 32;
  int input_width = 32;
  int input_channels = 3;  // the network always sees 3 channels
  int num_blocks = 8;
  std::vector<int> channels_per_block = {8, 8, 16, 16, 32, 32, 32, 64};
  int embedding_dim = 64;
  uint64_t seed = 0;

  void validate() const;  // throws ConfigError naming the offending field
  bool same_architecture(const NetworkConfig& other) const;
};

struct ParamTensor {
  std::string name;        // e.g. "block3.weight", "head.bias"
  std::vector<int> shape;  // conv weight (Cout, Cin, 3, 3), bias (C), head (D, C_last)
  std::vector<float> data;  // row-major

  size_t size() const { return data.size(); }
};

// One block: 3x3 convolution (pad 1) + bias + ReLU. Even-numbered blocks
// convolve with stride 2, halving the spatial resolution.
struct ConvBlock {
  int in_channels = 0;
  int out_channels = 0;
  int stride = 1;
  ParamTensor weight;
  ParamTensor bias;
};

// Global average pool followed by an affine map to the embedding dim.
// The head is frozen everywhere: it never joins the trainable partition.
struct HeadParams {
  ParamTensor weight;  // (D, C_last)
  ParamTensor bias;    // (D)
};

struct EmbeddingNetwork {
  NetworkConfig config;
  std::vector<ConvBlock> blocks;  // index i holds block i+1
  HeadParams head;

  // Canonical parameter order: block1.weight, block1.bias, ..., blockK.bias,
  // head.weight, head.bias. Checkpoints and partitions index this order.
  std::vector<ParamTensor*> parameters();
  std::vector<const ParamTensor*> parameters() const;
  size_t parameter_count() const;
};

struct ParameterPartition {
  int diu_cutoff = 0;                       // k: blocks 1..k are trainable
  std::vector<std::string> trainable_ids;   // parameter names in blocks 1..k
  std::vector<std::string> frozen_ids;      // blocks k+1..K plus the head
};

// Deterministic fan-in-scaled uniform init: tensor t draws from a counter
// stream seeded by derive_seed(config.seed, "init", t).
EmbeddingNetwork build_network(const NetworkConfig& config);

// images: batch * H * W * 3 floats in [0,1], HWC per image. Returns (batch, D).
FMat forward(const EmbeddingNetwork& net, std::span<const float> images, int batch);

// Double-precision forward used by the training path (losses run in 64-bit).
DMat forward_double(const EmbeddingNetwork& net, std::span<const float> images, int batch);

// Per-block intermediates kept for the backward pass: im2col patches and
// post-ReLU activations, both in the (channels, batch * spatial) layout.
struct BlockTrace {
  Eigen::MatrixXd patches;  // (Cin*9, batch * Sout), row order (ky, kx, cin)
  Eigen::MatrixXd output;   // (Cout, batch * Sout)
  int out_height = 0;
  int out_width = 0;
};

struct ForwardTrace {
  std::vector<BlockTrace> blocks;
  int batch = 0;
};

DMat forward_with_trace(const EmbeddingNetwork& net, std::span<const float> images,
                        int batch, ForwardTrace& trace);

// Gradients for blocks 1..weight_grad_cutoff, laid out exactly like the
// corresponding ParamTensor data. Entries above the cutoff stay empty:
// frozen-block weight gradients are never materialized.
struct NetworkGrads {
  std::vector<std::vector<double>> weight;
  std::vector<std::vector<double>> bias;
};

// d_embedding: (batch, D) gradient of the loss w.r.t. the embeddings.
NetworkGrads backward(const EmbeddingNetwork& net, const ForwardTrace& trace,
                      const DMat& d_embedding, int weight_grad_cutoff);

// Deep copy with partition: blocks 1..k trainable, the rest and the head
// frozen. The teacher is left untouched.
std::pair<EmbeddingNetwork, ParameterPartition> clone_as_student(
    const EmbeddingNetwork& teacher, int diu_cutoff);

// (H,W,1) -> (H,W,3) by duplicating the channel; (H,W,3) passes through.
std::vector<float> replicate_channels(std::span<const float> image, int height, int width,
                                      int channels);

}  // namespace diu
