#pragma once

#include <span>
#include <vector>

#include "diu/mat.hpp"

namespace diu {

struct LossConfig {
  double margin = 0.0;   // impostor pairs below this cosine are free
  double gamma = 0.75;   // convex weight: (1-gamma)*contrastive + gamma*distillation
  double eps = 1e-12;    // cosine denominator guard
  bool squared_distillation = false;  // ||r||^2 instead of ||r||

  void validate() const;  // throws ConfigError naming the offending field
};

// (a.b) / (||a|| * ||b|| + eps). Throws DegenerateEmbeddingError when either
// norm falls below eps. Clamping to [-1, 1] is for score reporting only;
// the loss path uses the raw value so gradients stay exact.
double cosine_similarity(std::span<const double> a, std::span<const double> b,
                         double eps = 1e-12, bool clamp = false);

struct ContrastiveResult {
  double mean = 0.0;
  std::vector<double> per_pair;
};

// Per pair: (1-y) * max(0, cos - m) + y * (1 - cos), averaged over the batch.
ContrastiveResult contrastive_loss(const DMat& e_s, const DMat& e_t,
                                   std::span<const int> labels, const LossConfig& cfg);

// Mean over the batch of ||e_teacher_i - e_student_i||_2.
double distillation_loss(const DMat& e_teacher, const DMat& e_student, bool squared = false);

struct LossBreakdown {
  double contrastive = 0.0;
  double distillation = 0.0;
  double total = 0.0;
  std::vector<double> per_pair_contrastive;
};

// total = (1-gamma) * L_C(e_s_student, e_t_student, y) + gamma * L_DL(e_s_teacher, e_s_student).
// Distillation sees only source-modality embeddings. The gamma endpoints
// reproduce the single components bit-for-bit.
LossBreakdown total_loss(const DMat& e_s_student, const DMat& e_t_student,
                         const DMat& e_s_teacher, std::span<const int> labels,
                         const LossConfig& cfg);

struct LossGrads {
  DMat d_e_s;  // w.r.t. student source embeddings
  DMat d_e_t;  // w.r.t. student target embeddings
};

// Analytic gradients of total_loss w.r.t. both student batches. Teacher
// embeddings are constants. At the impostor kink (cos == m) and at a zero
// distillation residual the inactive subgradient (zero) is used.
LossGrads loss_gradients(const DMat& e_s_student, const DMat& e_t_student,
                         const DMat& e_s_teacher, std::span<const int> labels,
                         const LossConfig& cfg);

}  // namespace diu
