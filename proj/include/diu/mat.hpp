#pragma once

#include <cstddef>
#include <vector>

namespace diu {

// Minimal row-major matrix; rows are embeddings or score rows.
template <typename T>
struct Mat {
  std::vector<T> data;
  int rows = 0;
  int cols = 0;

  Mat() = default;
  Mat(int r, int c) : data(static_cast<size_t>(r) * static_cast<size_t>(c)), rows(r), cols(c) {}

  T* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const T* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

  T& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  T at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  size_t size() const { return data.size(); }
};

using FMat = Mat<float>;
using DMat = Mat<double>;

inline DMat to_double(const FMat& m) {
  DMat out(m.rows, m.cols);
  for (size_t i = 0; i < m.data.size(); ++i) out.data[i] = static_cast<double>(m.data[i]);
  return out;
}

}  // namespace diu
