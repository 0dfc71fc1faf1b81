#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace relcp {

/// Dense row-major matrix. The only storage type used by the numeric code.
template <typename S>
class Matrix {
 public:
  using value_type = S;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, S fill = S(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<S> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw std::invalid_argument("Matrix: data size does not match shape");
    }
  }
  Matrix(std::initializer_list<std::initializer_list<S>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw std::invalid_argument("Matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  S& operator()(std::size_t r, std::size_t c) noexcept {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  const S& operator()(std::size_t r, std::size_t c) const noexcept {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  S* data() noexcept { return data_.data(); }
  const S* data() const noexcept { return data_.data(); }
  std::span<S> flat() noexcept { return data_; }
  std::span<const S> flat() const noexcept { return data_; }
  std::span<S> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const S> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  void fill(S v) { std::fill(data_.begin(), data_.end(), v); }
  void resize(std::size_t rows, std::size_t cols, S v = S(0)) {
    rows_ = rows;
    cols_ = cols;
    data_.assign(rows * cols, v);
  }

  [[nodiscard]] bool same_shape(const Matrix& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  template <typename T>
  [[nodiscard]] Matrix<T> cast() const {
    Matrix<T> out(rows_, cols_);
    std::transform(data_.begin(), data_.end(), out.data(), [](S v) { return static_cast<T>(v); });
    return out;
  }

  [[nodiscard]] Matrix transposed() const {
    Matrix out(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
    return out;
  }

  bool operator==(const Matrix& o) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<S> data_;
};

inline std::string shape_str(std::size_t r, std::size_t c) {
  return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

template <typename S>
std::string shape_str(const Matrix<S>& m) {
  return shape_str(m.rows(), m.cols());
}

}  // namespace relcp
