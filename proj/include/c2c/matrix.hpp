#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace c2c {

// Dense row-major matrix. Rows index tokens/positions throughout the library;
// every kernel that consumes a Matrix computes each output row independently of
// the other rows, so single-row and batched evaluation agree bit-for-bit.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(int rows, int cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {}
  Matrix(int rows, int cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    assert(data_.size() == static_cast<size_t>(rows) * cols);
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator()(int r, int c) noexcept { return data_[static_cast<size_t>(r) * cols_ + c]; }
  T operator()(int r, int c) const noexcept { return data_[static_cast<size_t>(r) * cols_ + c]; }

  std::span<T> row(int r) noexcept {
    return {data_.data() + static_cast<size_t>(r) * cols_, static_cast<size_t>(cols_)};
  }
  std::span<const T> row(int r) const noexcept {
    return {data_.data() + static_cast<size_t>(r) * cols_, static_cast<size_t>(cols_)};
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }
  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  template <typename U>
  Matrix<U> cast() const {
    Matrix<U> out(rows_, cols_);
    for (size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
    return out;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

// Appends the rows of `tail` to `head`.
template <typename T>
Matrix<T> concat_rows(const Matrix<T>& head, const Matrix<T>& tail) {
  if (head.empty()) return tail;
  if (tail.empty()) return head;
  assert(head.cols() == tail.cols());
  std::vector<T> data;
  data.reserve(head.size() + tail.size());
  data.insert(data.end(), head.storage().begin(), head.storage().end());
  data.insert(data.end(), tail.storage().begin(), tail.storage().end());
  return Matrix<T>(head.rows() + tail.rows(), head.cols(), std::move(data));
}

template <typename T>
Matrix<T> slice_rows(const Matrix<T>& m, int begin, int end) {
  assert(0 <= begin && begin <= end && end <= m.rows());
  std::vector<T> data(m.storage().begin() + static_cast<size_t>(begin) * m.cols(),
                      m.storage().begin() + static_cast<size_t>(end) * m.cols());
  return Matrix<T>(end - begin, m.cols(), std::move(data));
}

}  // namespace c2c
