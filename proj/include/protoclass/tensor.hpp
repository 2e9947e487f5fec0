#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace protoclass {

/// Dense row-major matrix. Rows are exposed as spans.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    assert(data_.size() == rows_ * cols_);
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> row(std::size_t i) noexcept {
    return {data_.data() + i * cols_, cols_};
  }
  std::span<const T> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  T& operator()(std::size_t i, std::size_t j) noexcept {
    return data_[i * cols_ + j];
  }
  const T& operator()(std::size_t i, std::size_t j) const noexcept {
    return data_[i * cols_ + j];
  }

  std::span<T> flat() noexcept { return data_; }
  std::span<const T> flat() const noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  void append_row(std::span<const T> values) {
    assert(rows_ == 0 || values.size() == cols_);
    if (rows_ == 0) cols_ = values.size();
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// Dense (classes x slots x dim) tensor, e.g. a prototype bank.
template <typename T>
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t classes, std::size_t slots, std::size_t dim,
          T fill = T{})
      : classes_(classes),
        slots_(slots),
        dim_(dim),
        data_(classes * slots * dim, fill) {}

  std::size_t classes() const noexcept { return classes_; }
  std::size_t slots() const noexcept { return slots_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> at(std::size_t m, std::size_t s) noexcept {
    return {data_.data() + (m * slots_ + s) * dim_, dim_};
  }
  std::span<const T> at(std::size_t m, std::size_t s) const noexcept {
    return {data_.data() + (m * slots_ + s) * dim_, dim_};
  }

  std::span<T> flat() noexcept { return data_; }
  std::span<const T> flat() const noexcept { return data_; }

  bool operator==(const Tensor3&) const = default;

 private:
  std::size_t classes_ = 0;
  std::size_t slots_ = 0;
  std::size_t dim_ = 0;
  std::vector<T> data_;
};

template <typename To, typename From>
Tensor3<To> tensor_cast(const Tensor3<From>& src) {
  Tensor3<To> out(src.classes(), src.slots(), src.dim());
  auto dst = out.flat();
  auto in = src.flat();
  for (std::size_t i = 0; i < in.size(); ++i) dst[i] = static_cast<To>(in[i]);
  return out;
}

}  // namespace protoclass
