#include "diu/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "diu/errors.hpp"

namespace diu {

namespace {

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw DataError(std::string("non-finite value in ") + what);
  }
}

void check_aligned(const DMat& a, const DMat& b, const char* x, const char* y) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw ShapeError(std::string("batch shape mismatch: ") + x + " is (" + std::to_string(a.rows) +
                     "," + std::to_string(a.cols) + "), " + y + " is (" + std::to_string(b.rows) +
                     "," + std::to_string(b.cols) + ")");
  }
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_labels(std::span<const int> labels, int rows) {
  if (static_cast<int>(labels.size()) != rows) {
    throw ShapeError("label count " + std::to_string(labels.size()) + " does not match batch size " +
                     std::to_string(rows));
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw DataError("pair label must be 0 or 1, got " + std::to_string(y));
  }
}

}  // namespace

void LossConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("loss.gamma must be in [0, 1]");
  if (!(margin >= -1.0 && margin <= 1.0)) throw ConfigError("loss.margin must be in [-1, 1]");
  if (!(eps > 0.0)) throw ConfigError("loss.eps must be > 0");
}

double cosine_similarity(std::span<const double> a, std::span<const double> b, double eps,
                         bool clamp) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine_similarity: dimension mismatch " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  check_finite(a, "cosine_similarity input");
  check_finite(b, "cosine_similarity input");
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na < eps || nb < eps) {
    throw DegenerateEmbeddingError("embedding norm below eps (" + std::to_string(na < eps ? na : nb) +
                                   "): the network is producing near-zero embeddings");
  }
  const double c = dot(a, b) / (na * nb + eps);
  if (clamp) return std::min(1.0, std::max(-1.0, c));
  return c;
}

ContrastiveResult contrastive_loss(const DMat& e_s, const DMat& e_t, std::span<const int> labels,
                                   const LossConfig& cfg) {
  check_aligned(e_s, e_t, "e_s", "e_t");
  if (e_s.rows < 1) throw ShapeError("contrastive_loss: empty batch");
  check_labels(labels, e_s.rows);

  ContrastiveResult out;
  out.per_pair.resize(e_s.rows);
  for (int i = 0; i < e_s.rows; ++i) {
    const double c = cosine_similarity({e_s.row(i), static_cast<size_t>(e_s.cols)},
                                       {e_t.row(i), static_cast<size_t>(e_t.cols)}, cfg.eps);
    const double loss = labels[i] ? (1.0 - c) : std::max(0.0, c - cfg.margin);
    out.per_pair[i] = loss;
    out.mean += loss;
  }
  out.mean /= e_s.rows;
  return out;
}

double distillation_loss(const DMat& e_teacher, const DMat& e_student, bool squared) {
  check_aligned(e_teacher, e_student, "e_teacher", "e_student");
  if (e_teacher.rows < 1) throw ShapeError("distillation_loss: empty batch");
  double sum = 0.0;
  for (int i = 0; i < e_teacher.rows; ++i) {
    double d2 = 0.0;
    const double* t = e_teacher.row(i);
    const double* s = e_student.row(i);
    for (int j = 0; j < e_teacher.cols; ++j) {
      const double r = t[j] - s[j];
      d2 += r * r;
    }
    sum += squared ? d2 : std::sqrt(d2);
  }
  return sum / e_teacher.rows;
}

LossBreakdown total_loss(const DMat& e_s_student, const DMat& e_t_student,
                         const DMat& e_s_teacher, std::span<const int> labels,
                         const LossConfig& cfg) {
  cfg.validate();
  check_aligned(e_s_student, e_s_teacher, "e_s_student", "e_s_teacher");

  LossBreakdown out;
  ContrastiveResult c = contrastive_loss(e_s_student, e_t_student, labels, cfg);
  out.contrastive = c.mean;
  out.per_pair_contrastive = std::move(c.per_pair);
  out.distillation = distillation_loss(e_s_teacher, e_s_student, cfg.squared_distillation);
  // explicit branches so the endpoints recover the components bit-for-bit
  if (cfg.gamma == 0.0) {
    out.total = out.contrastive;
  } else if (cfg.gamma == 1.0) {
    out.total = out.distillation;
  } else {
    out.total = (1.0 - cfg.gamma) * out.contrastive + cfg.gamma * out.distillation;
  }
  return out;
}

LossGrads loss_gradients(const DMat& e_s_student, const DMat& e_t_student,
                         const DMat& e_s_teacher, std::span<const int> labels,
                         const LossConfig& cfg) {
  cfg.validate();
  check_aligned(e_s_student, e_t_student, "e_s_student", "e_t_student");
  check_aligned(e_s_student, e_s_teacher, "e_s_student", "e_s_teacher");
  if (e_s_student.rows < 1) throw ShapeError("loss_gradients: empty batch");
  check_labels(labels, e_s_student.rows);

  const int n = e_s_student.rows;
  const int d = e_s_student.cols;
  LossGrads g;
  g.d_e_s = DMat(n, d);
  g.d_e_t = DMat(n, d);

  const double w_c = (1.0 - cfg.gamma) / n;
  const double w_d = cfg.gamma / n;

  for (int i = 0; i < n; ++i) {
    const double* a = e_s_student.row(i);
    const double* b = e_t_student.row(i);
    double* ga = g.d_e_s.row(i);
    double* gb = g.d_e_t.row(i);

    if (w_c != 0.0) {
      std::span<const double> sa{a, static_cast<size_t>(d)};
      std::span<const double> sb{b, static_cast<size_t>(d)};
      const double na = norm2(sa);
      const double nb = norm2(sb);
      if (na < cfg.eps || nb < cfg.eps) {
        throw DegenerateEmbeddingError("embedding norm below eps in loss_gradients");
      }
      const double denom = na * nb + cfg.eps;
      const double c = dot(sa, sb) / denom;
      // dL/dcos: genuine -1; impostor +1 on the active branch, 0 past the margin
      double dl_dc = 0.0;
      if (labels[i]) {
        dl_dc = -1.0;
      } else if (c > cfg.margin) {
        dl_dc = 1.0;
      }
      if (dl_dc != 0.0) {
        // dcos/da = b/denom - cos * (nb/na) * a / denom, symmetrically for b
        const double coef = w_c * dl_dc;
        const double ca = c * nb / na / denom;
        const double cb = c * na / nb / denom;
        for (int j = 0; j < d; ++j) {
          ga[j] += coef * (b[j] / denom - ca * a[j]);
          gb[j] += coef * (a[j] / denom - cb * b[j]);
        }
      }
    }

    if (w_d != 0.0) {
      const double* t = e_s_teacher.row(i);
      if (cfg.squared_distillation) {
        for (int j = 0; j < d; ++j) ga[j] += w_d * 2.0 * (a[j] - t[j]);
      } else {
        double d2 = 0.0;
        for (int j = 0; j < d; ++j) {
          const double r = a[j] - t[j];
          d2 += r * r;
        }
        const double nr = std::sqrt(d2);
        if (nr > 0.0) {
          for (int j = 0; j < d; ++j) ga[j] += w_d * (a[j] - t[j]) / nr;
        }
        // nr == 0: subgradient 0 (exactly the state right after cloning)
      }
    }
  }
  return g;
}

}  // namespace diu
