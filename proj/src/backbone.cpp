#include "diu/backbone.hpp"

#include <cmath>
#include <utility>

#include "diu/errors.hpp"
#include "diu/rng.hpp"

namespace diu {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// (Cout, Cin, 3, 3) row-major storage -> GEMM layout (Cout, 9*Cin) with
// columns ordered (ky, kx, cin), matching the patch-row order of im2col.
MatrixXd weight_as_gemm(const ParamTensor& w, int cout, int cin) {
  MatrixXd m(cout, 9 * cin);
  const float* d = w.data.data();
  for (int co = 0; co < cout; ++co)
    for (int ci = 0; ci < cin; ++ci)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx)
          m(co, (ky * 3 + kx) * cin + ci) =
              static_cast<double>(d[((co * cin + ci) * 3 + ky) * 3 + kx]);
  return m;
}

VectorXd bias_as_vector(const ParamTensor& b) {
  VectorXd v(static_cast<Eigen::Index>(b.data.size()));
  for (size_t i = 0; i < b.data.size(); ++i) v[static_cast<Eigen::Index>(i)] = b.data[i];
  return v;
}

// 3x3, pad 1. Activations live as (channels, batch*spatial) with column
// index (b*H + y)*W + x; out-of-frame taps stay zero.
void im2col(const MatrixXd& act, int batch, int h, int w, int stride,
            MatrixXd& patches, int& out_h, int& out_w) {
  const int cin = static_cast<int>(act.rows());
  out_h = (h - 1) / stride + 1;
  out_w = (w - 1) / stride + 1;
  patches.setZero(9 * cin, static_cast<Eigen::Index>(batch) * out_h * out_w);
  for (int b = 0; b < batch; ++b) {
    for (int yo = 0; yo < out_h; ++yo) {
      for (int ky = 0; ky < 3; ++ky) {
        const int yi = yo * stride - 1 + ky;
        if (yi < 0 || yi >= h) continue;
        for (int xo = 0; xo < out_w; ++xo) {
          const int n = (b * out_h + yo) * out_w + xo;
          for (int kx = 0; kx < 3; ++kx) {
            const int xi = xo * stride - 1 + kx;
            if (xi < 0 || xi >= w) continue;
            patches.block((ky * 3 + kx) * cin, n, cin, 1) = act.col((b * h + yi) * w + xi);
          }
        }
      }
    }
  }
}

// scatter-add adjoint of im2col
void col2im(const MatrixXd& dpatches, int batch, int h, int w, int stride, int out_h,
            int out_w, MatrixXd& dact) {
  const int cin = static_cast<int>(dpatches.rows()) / 9;
  dact.setZero(cin, static_cast<Eigen::Index>(batch) * h * w);
  for (int b = 0; b < batch; ++b) {
    for (int yo = 0; yo < out_h; ++yo) {
      for (int ky = 0; ky < 3; ++ky) {
        const int yi = yo * stride - 1 + ky;
        if (yi < 0 || yi >= h) continue;
        for (int xo = 0; xo < out_w; ++xo) {
          const int n = (b * out_h + yo) * out_w + xo;
          for (int kx = 0; kx < 3; ++kx) {
            const int xi = xo * stride - 1 + kx;
            if (xi < 0 || xi >= w) continue;
            dact.col((b * h + yi) * w + xi) += dpatches.block((ky * 3 + kx) * cin, n, cin, 1);
          }
        }
      }
    }
  }
}

DMat run_forward(const EmbeddingNetwork& net, std::span<const float> images, int batch,
                 ForwardTrace* trace) {
  const NetworkConfig& cfg = net.config;
  if (batch < 1) throw ShapeError("forward needs a batch of at least 1");
  const size_t expected =
      static_cast<size_t>(batch) * cfg.input_height * cfg.input_width * 3;
  if (images.size() != expected) {
    throw ShapeError("forward input has " + std::to_string(images.size()) +
                     " floats, expected " + std::to_string(expected) + " for batch " +
                     std::to_string(batch));
  }
  for (float v : images)
    if (!std::isfinite(v)) throw DataError("forward input contains a non-finite value");

  int h = cfg.input_height;
  int w = cfg.input_width;
  MatrixXd act(3, static_cast<Eigen::Index>(batch) * h * w);
  for (int b = 0; b < batch; ++b)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const size_t p = (static_cast<size_t>(b) * h + y) * w + x;
        for (int c = 0; c < 3; ++c)
          act(c, static_cast<Eigen::Index>(p)) = static_cast<double>(images[p * 3 + c]);
      }

  if (trace) {
    trace->blocks.assign(static_cast<size_t>(cfg.num_blocks), BlockTrace{});
    trace->batch = batch;
  }

  for (int i = 0; i < cfg.num_blocks; ++i) {
    const ConvBlock& blk = net.blocks[static_cast<size_t>(i)];
    MatrixXd local_patches;
    MatrixXd& patches = trace ? trace->blocks[static_cast<size_t>(i)].patches : local_patches;
    int oh = 0, ow = 0;
    im2col(act, batch, h, w, blk.stride, patches, oh, ow);
    const MatrixXd wmat = weight_as_gemm(blk.weight, blk.out_channels, blk.in_channels);
    MatrixXd out = wmat * patches;
    out.colwise() += bias_as_vector(blk.bias);
    out = out.cwiseMax(0.0);
    if (trace) {
      BlockTrace& bt = trace->blocks[static_cast<size_t>(i)];
      bt.output = out;
      bt.out_height = oh;
      bt.out_width = ow;
    }
    act = std::move(out);
    h = oh;
    w = ow;
  }

  const int spatial = h * w;
  const int clast = static_cast<int>(act.rows());
  MatrixXd pooled(clast, batch);
  for (int b = 0; b < batch; ++b)
    pooled.col(b) = act.middleCols(static_cast<Eigen::Index>(b) * spatial, spatial)
                        .rowwise()
                        .mean();

  MatrixXd whead(cfg.embedding_dim, clast);
  for (int d = 0; d < cfg.embedding_dim; ++d)
    for (int c = 0; c < clast; ++c)
      whead(d, c) = static_cast<double>(net.head.weight.data[static_cast<size_t>(d) * clast + c]);
  MatrixXd emb = whead * pooled;
  emb.colwise() += bias_as_vector(net.head.bias);

  DMat out(batch, cfg.embedding_dim);
  for (int b = 0; b < batch; ++b)
    for (int d = 0; d < cfg.embedding_dim; ++d) out.at(b, d) = emb(d, b);
  return out;
}

}  // namespace

void NetworkConfig::validate() const {
  if (num_blocks < 1) throw ConfigError("num_blocks must be at least 1");
  if (embedding_dim < 1) throw ConfigError("embedding_dim must be at least 1");
  if (input_height < 1) throw ConfigError("input_height must be at least 1");
  if (input_width < 1) throw ConfigError("input_width must be at least 1");
  if (input_channels != 3) {
    throw ConfigError(
        "input_channels must be 3 (route single-channel data through replicate_channels)");
  }
  if (static_cast<int>(channels_per_block.size()) != num_blocks) {
    throw ConfigError("channels_per_block has " + std::to_string(channels_per_block.size()) +
                      " entries, expected num_blocks = " + std::to_string(num_blocks));
  }
  for (int c : channels_per_block)
    if (c < 1) throw ConfigError("channels_per_block entries must be at least 1");
}

bool NetworkConfig::same_architecture(const NetworkConfig& other) const {
  return input_height == other.input_height && input_width == other.input_width &&
         input_channels == other.input_channels && num_blocks == other.num_blocks &&
         channels_per_block == other.channels_per_block &&
         embedding_dim == other.embedding_dim;
}

std::vector<ParamTensor*> EmbeddingNetwork::parameters() {
  std::vector<ParamTensor*> out;
  for (ConvBlock& b : blocks) {
    out.push_back(&b.weight);
    out.push_back(&b.bias);
  }
  out.push_back(&head.weight);
  out.push_back(&head.bias);
  return out;
}

std::vector<const ParamTensor*> EmbeddingNetwork::parameters() const {
  std::vector<const ParamTensor*> out;
  for (const ConvBlock& b : blocks) {
    out.push_back(&b.weight);
    out.push_back(&b.bias);
  }
  out.push_back(&head.weight);
  out.push_back(&head.bias);
  return out;
}

size_t EmbeddingNetwork::parameter_count() const {
  size_t n = 0;
  for (const ParamTensor* t : parameters()) n += t->size();
  return n;
}

EmbeddingNetwork build_network(const NetworkConfig& config) {
  config.validate();
  EmbeddingNetwork net;
  net.config = config;

  uint64_t tensor_idx = 0;
  auto fill = [&](ParamTensor& t, double bound) {
    CounterRng rng(derive_seed(config.seed, "init", tensor_idx++));
    for (float& v : t.data) v = static_cast<float>(bound * (2.0 * rng.next_double() - 1.0));
  };

  int cin = 3;
  for (int i = 0; i < config.num_blocks; ++i) {
    const int cout = config.channels_per_block[static_cast<size_t>(i)];
    ConvBlock blk;
    blk.in_channels = cin;
    blk.out_channels = cout;
    blk.stride = (i % 2 == 1) ? 2 : 1;  // every second block halves the grid
    const std::string prefix = "block" + std::to_string(i + 1);
    blk.weight.name = prefix + ".weight";
    blk.weight.shape = {cout, cin, 3, 3};
    blk.weight.data.resize(static_cast<size_t>(cout) * cin * 9);
    blk.bias.name = prefix + ".bias";
    blk.bias.shape = {cout};
    blk.bias.data.resize(static_cast<size_t>(cout));
    const double bound = 1.0 / std::sqrt(9.0 * cin);
    fill(blk.weight, bound);
    fill(blk.bias, bound);
    net.blocks.push_back(std::move(blk));
    cin = cout;
  }

  net.head.weight.name = "head.weight";
  net.head.weight.shape = {config.embedding_dim, cin};
  net.head.weight.data.resize(static_cast<size_t>(config.embedding_dim) * cin);
  net.head.bias.name = "head.bias";
  net.head.bias.shape = {config.embedding_dim};
  net.head.bias.data.resize(static_cast<size_t>(config.embedding_dim));
  const double head_bound = 1.0 / std::sqrt(static_cast<double>(cin));
  fill(net.head.weight, head_bound);
  fill(net.head.bias, head_bound);
  return net;
}

FMat forward(const EmbeddingNetwork& net, std::span<const float> images, int batch) {
  const DMat emb = run_forward(net, images, batch, nullptr);
  FMat out(emb.rows, emb.cols);
  for (size_t i = 0; i < emb.data.size(); ++i) out.data[i] = static_cast<float>(emb.data[i]);
  return out;
}

DMat forward_double(const EmbeddingNetwork& net, std::span<const float> images, int batch) {
  return run_forward(net, images, batch, nullptr);
}

DMat forward_with_trace(const EmbeddingNetwork& net, std::span<const float> images, int batch,
                        ForwardTrace& trace) {
  return run_forward(net, images, batch, &trace);
}

NetworkGrads backward(const EmbeddingNetwork& net, const ForwardTrace& trace,
                      const DMat& d_embedding, int weight_grad_cutoff) {
  const NetworkConfig& cfg = net.config;
  const int k_total = cfg.num_blocks;
  if (weight_grad_cutoff < 0 || weight_grad_cutoff > k_total) {
    throw ConfigError("weight_grad_cutoff " + std::to_string(weight_grad_cutoff) +
                      " outside [0, " + std::to_string(k_total) + "]");
  }
  if (static_cast<int>(trace.blocks.size()) != k_total) {
    throw ShapeError("forward trace does not match the network's block count");
  }
  const int batch = trace.batch;
  if (d_embedding.rows != batch || d_embedding.cols != cfg.embedding_dim) {
    throw ShapeError("d_embedding shape does not match (batch, embedding_dim)");
  }

  NetworkGrads grads;
  grads.weight.resize(static_cast<size_t>(k_total));
  grads.bias.resize(static_cast<size_t>(k_total));

  const int clast = cfg.channels_per_block.back();
  MatrixXd demb(cfg.embedding_dim, batch);
  for (int b = 0; b < batch; ++b)
    for (int d = 0; d < cfg.embedding_dim; ++d) demb(d, b) = d_embedding.at(b, d);

  MatrixXd whead(cfg.embedding_dim, clast);
  for (int d = 0; d < cfg.embedding_dim; ++d)
    for (int c = 0; c < clast; ++c)
      whead(d, c) = static_cast<double>(net.head.weight.data[static_cast<size_t>(d) * clast + c]);
  const MatrixXd dpool = whead.transpose() * demb;  // (clast, batch)

  const BlockTrace& last = trace.blocks.back();
  const int spatial = last.out_height * last.out_width;
  MatrixXd dact(clast, static_cast<Eigen::Index>(batch) * spatial);
  for (int b = 0; b < batch; ++b)
    dact.middleCols(static_cast<Eigen::Index>(b) * spatial, spatial).colwise() =
        dpool.col(b) / static_cast<double>(spatial);

  for (int i = k_total - 1; i >= 0; --i) {
    const BlockTrace& bt = trace.blocks[static_cast<size_t>(i)];
    const ConvBlock& blk = net.blocks[static_cast<size_t>(i)];
    const MatrixXd dout =
        (bt.output.array() > 0.0).select(dact.array(), 0.0).matrix();

    if (i < weight_grad_cutoff) {
      const MatrixXd dw = dout * bt.patches.transpose();  // (Cout, 9*Cin)
      std::vector<double>& wg = grads.weight[static_cast<size_t>(i)];
      wg.resize(blk.weight.size());
      const int cin = blk.in_channels;
      for (int co = 0; co < blk.out_channels; ++co)
        for (int ci = 0; ci < cin; ++ci)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx)
              wg[((static_cast<size_t>(co) * cin + ci) * 3 + ky) * 3 + kx] =
                  dw(co, (ky * 3 + kx) * cin + ci);
      std::vector<double>& bg = grads.bias[static_cast<size_t>(i)];
      bg.resize(blk.bias.size());
      const VectorXd db = dout.rowwise().sum();
      for (int co = 0; co < blk.out_channels; ++co) bg[static_cast<size_t>(co)] = db[co];
    }

    if (i > 0) {
      const MatrixXd wmat = weight_as_gemm(blk.weight, blk.out_channels, blk.in_channels);
      const MatrixXd dpatch = wmat.transpose() * dout;
      const BlockTrace& prev = trace.blocks[static_cast<size_t>(i - 1)];
      col2im(dpatch, batch, prev.out_height, prev.out_width, blk.stride, bt.out_height,
             bt.out_width, dact);
    }
  }
  return grads;
}

std::pair<EmbeddingNetwork, ParameterPartition> clone_as_student(
    const EmbeddingNetwork& teacher, int diu_cutoff) {
  const int k_total = teacher.config.num_blocks;
  if (diu_cutoff < 0 || diu_cutoff > k_total) {
    throw ConfigError("diu_cutoff " + std::to_string(diu_cutoff) + " outside [0, " +
                      std::to_string(k_total) + "]");
  }
  EmbeddingNetwork student = teacher;
  ParameterPartition part;
  part.diu_cutoff = diu_cutoff;
  for (int i = 0; i < k_total; ++i) {
    const ConvBlock& blk = teacher.blocks[static_cast<size_t>(i)];
    auto& dest = (i < diu_cutoff) ? part.trainable_ids : part.frozen_ids;
    dest.push_back(blk.weight.name);
    dest.push_back(blk.bias.name);
  }
  part.frozen_ids.push_back(teacher.head.weight.name);
  part.frozen_ids.push_back(teacher.head.bias.name);
  return {std::move(student), std::move(part)};
}

std::vector<float> replicate_channels(std::span<const float> image, int height, int width,
                                      int channels) {
  const size_t pixels = static_cast<size_t>(height) * width;
  if (image.size() != pixels * static_cast<size_t>(channels)) {
    throw ShapeError("image buffer size does not match (height, width, channels)");
  }
  if (channels == 3) return std::vector<float>(image.begin(), image.end());
  if (channels != 1) {
    throw DataError("replicate_channels expects 1 or 3 channels, got " +
                    std::to_string(channels));
  }
  std::vector<float> out(pixels * 3);
  for (size_t p = 0; p < pixels; ++p) {
    out[p * 3] = image[p];
    out[p * 3 + 1] = image[p];
    out[p * 3 + 2] = image[p];
  }
  return out;
}

}  // namespace diu
