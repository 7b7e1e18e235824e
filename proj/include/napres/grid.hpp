// Copyright NAPReS contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <napres/error.hpp>

#include <span>
#include <vector>

namespace napres {

/// Dense row-major [frames x bins] array.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t frames, std::size_t bins, T fill = T{})
      : frames_(frames), bins_(bins), data_(frames * bins, fill) {}

  std::size_t frames() const { return frames_; }
  std::size_t bins() const { return bins_; }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t frame, std::size_t bin) { return data_[frame * bins_ + bin]; }
  const T& operator()(std::size_t frame, std::size_t bin) const {
    return data_[frame * bins_ + bin];
  }

  std::span<T> row(std::size_t frame) { return {data_.data() + frame * bins_, bins_}; }
  std::span<const T> row(std::size_t frame) const {
    return {data_.data() + frame * bins_, bins_};
  }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  bool same_shape(const Grid& other) const {
    return frames_ == other.frames_ && bins_ == other.bins_;
  }

  /// Copies frames [first, first + count).
  Grid slice(std::size_t first, std::size_t count) const {
    if (first + count > frames_) throw Error("Grid::slice out of range");
    Grid out(count, bins_);
    std::copy(data_.begin() + static_cast<std::ptrdiff_t>(first * bins_),
              data_.begin() + static_cast<std::ptrdiff_t>((first + count) * bins_),
              out.data_.begin());
    return out;
  }

 private:
  std::size_t frames_ = 0;
  std::size_t bins_ = 0;
  std::vector<T> data_;
};

}  // namespace napres
