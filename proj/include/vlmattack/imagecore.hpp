// Copyright 2026 The vlmattack Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Pixel-space value types and the L-infinity feasible set.
//
// Pixels are stored as doubles in [0, 255], row-major with interleaved RGB
// channels (index = (row * width + col) * 3 + channel). Quantization to
// 8 bits happens only when an image is written to disk.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace vlmattack {

// Base error for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kPixelMin = 0.0;
inline constexpr double kPixelMax = 255.0;
inline constexpr int kChannels = 3;

struct ImageShape {
  int height = 0;
  int width = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           kChannels;
  }
  bool operator==(const ImageShape&) const = default;

  std::string ToString() const {
    std::ostringstream os;
    os << height << "x" << width << "x" << kChannels;
    return os.str();
  }
};

// H x W x 3 image with every value in [0, 255]. Shape never changes after
// construction; the only mutating path is through the constructors.
class PixelImage {
 public:
  PixelImage() = default;

  // Filled with `value`, which must lie in the pixel range.
  PixelImage(ImageShape shape, double value = 0.0)
      : shape_(shape), pixels_(CheckedSize(shape), value) {
    Validate();
  }

  PixelImage(ImageShape shape, std::vector<double> pixels)
      : shape_(shape), pixels_(std::move(pixels)) {
    if (pixels_.size() != CheckedSize(shape)) {
      throw Error("PixelImage: expected " + std::to_string(shape.size()) +
                  " values for shape " + shape.ToString() + ", got " +
                  std::to_string(pixels_.size()));
    }
    Validate();
  }

  // Builds an image from arbitrary finite values, clamping into [0, 255].
  static PixelImage Clamped(ImageShape shape, std::vector<double> values) {
    for (double& v : values) {
      if (!std::isfinite(v)) throw Error("PixelImage: non-finite pixel value");
      v = std::clamp(v, kPixelMin, kPixelMax);
    }
    return PixelImage(shape, std::move(values));
  }

  const ImageShape& shape() const { return shape_; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  std::size_t size() const { return pixels_.size(); }
  bool empty() const { return pixels_.empty(); }

  std::span<const double> pixels() const { return pixels_; }
  double operator[](std::size_t i) const { return pixels_[i]; }
  double at(int row, int col, int channel) const {
    return pixels_[(static_cast<std::size_t>(row) * shape_.width + col) *
                       kChannels +
                   channel];
  }

  bool operator==(const PixelImage&) const = default;

 private:
  static std::size_t CheckedSize(ImageShape shape) {
    if (shape.height <= 0 || shape.width <= 0) {
      throw Error("PixelImage: height and width must be positive, got " +
                  shape.ToString());
    }
    return shape.size();
  }

  void Validate() const {
    for (double v : pixels_) {
      if (!(v >= kPixelMin && v <= kPixelMax)) {
        std::ostringstream os;
        os << "PixelImage: value " << v << " outside [0, 255]";
        throw Error(os.str());
      }
    }
  }

  ImageShape shape_;
  std::vector<double> pixels_;
};

// L-infinity ball radius in pixel units.
class LinfBudget {
 public:
  static constexpr double kDefaultEpsilon = 8.0;

  constexpr LinfBudget() = default;
  explicit LinfBudget(double epsilon) : epsilon_(epsilon) {
    if (!(epsilon >= 0.0 && epsilon <= kPixelMax)) {
      std::ostringstream os;
      os << "LinfBudget: epsilon must be in [0, 255], got " << epsilon;
      throw Error(os.str());
    }
  }

  double epsilon() const { return epsilon_; }
  bool operator==(const LinfBudget&) const = default;

 private:
  double epsilon_ = kDefaultEpsilon;
};

// Additive noise with every entry inside [-epsilon, epsilon].
class Perturbation {
 public:
  Perturbation() = default;

  // All-zero perturbation.
  Perturbation(ImageShape shape, LinfBudget budget)
      : shape_(shape), budget_(budget), deltas_(shape.size(), 0.0) {}

  const ImageShape& shape() const { return shape_; }
  const LinfBudget& budget() const { return budget_; }
  std::span<const double> deltas() const { return deltas_; }
  double operator[](std::size_t i) const { return deltas_[i]; }
  std::size_t size() const { return deltas_.size(); }

  double MaxAbs() const {
    double m = 0.0;
    for (double d : deltas_) m = std::max(m, std::abs(d));
    return m;
  }

  bool operator==(const Perturbation&) const = default;

 private:
  friend Perturbation project_delta(ImageShape, std::span<const double>,
                                    LinfBudget);
  ImageShape shape_;
  LinfBudget budget_;
  std::vector<double> deltas_;
};

// Clamps every entry of `raw` into [-eps, eps].
inline Perturbation project_delta(ImageShape shape, std::span<const double> raw,
                                  LinfBudget budget) {
  if (raw.size() != shape.size()) {
    throw Error("project_delta: expected " + std::to_string(shape.size()) +
                " entries, got " + std::to_string(raw.size()));
  }
  const double eps = budget.epsilon();
  Perturbation out;
  out.shape_ = shape;
  out.budget_ = budget;
  out.deltas_.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(raw[i])) {
      throw Error("project_delta: non-finite entry at index " +
                  std::to_string(i));
    }
    out.deltas_[i] = std::clamp(raw[i], -eps, eps);
  }
  return out;
}

// Re-projects an existing perturbation onto a (possibly smaller) ball.
inline Perturbation project_delta(const Perturbation& delta,
                                  LinfBudget budget) {
  return project_delta(delta.shape(), delta.deltas(), budget);
}

// clamp(x_cle + delta, 0, 255). Inputs are not modified.
inline PixelImage apply_perturbation(const PixelImage& x_cle,
                                     const Perturbation& delta) {
  if (x_cle.shape() != delta.shape()) {
    throw Error("apply_perturbation: shape mismatch, image " +
                x_cle.shape().ToString() + " vs perturbation " +
                delta.shape().ToString());
  }
  std::vector<double> out(x_cle.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(x_cle[i] + delta[i], kPixelMin, kPixelMax);
  }
  return PixelImage(x_cle.shape(), std::move(out));
}

// The perturbation actually realized by `x` relative to `x_cle`, i.e.
// x - x_cle, projected onto `budget`. Used to resume optimization from an
// image instead of from a stored delta.
inline Perturbation delta_between(const PixelImage& x, const PixelImage& x_cle,
                                  LinfBudget budget) {
  if (x.shape() != x_cle.shape()) {
    throw Error("delta_between: shape mismatch");
  }
  std::vector<double> raw(x.size());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = x[i] - x_cle[i];
  return project_delta(x.shape(), raw, budget);
}

// max_i |a_i - b_i|.
inline double linf_distance(const PixelImage& a, const PixelImage& b) {
  if (a.shape() != b.shape()) throw Error("linf_distance: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

// Round half away from zero, the quantization rule used on save.
inline double round_half_away(double v) { return std::round(v); }

}  // namespace vlmattack
