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

// White-box surrogate encoders.
//
// ImageEncoder and TextEncoder are the two interfaces every surrogate or
// evaluation model implements. Adapters for pretrained models live outside
// this library and own their preprocessing; the reference encoders here are
// small analytic models so that the attack pipeline can be exercised and
// verified without checkpoints:
//
//   * ReferenceLinearImageEncoder: e = W * flatten(x), W ~ N(0, 1) from the
//     counter-based stream in rng.hpp (entry (i, j) is normal index
//     i * input_size + j), optionally L2-normalized.
//   * HashingTextEncoder: lowercase, split on whitespace, FNV-1a-64 hash
//     each token into one of d buckets, count, L2-normalize.

#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vlmattack/imagecore.hpp"
#include "vlmattack/rng.hpp"

namespace vlmattack {

inline constexpr double kMinNormalizableNorm = 1e-12;

class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  EmbeddingVector(std::vector<double> values, bool normalized)
      : values_(std::move(values)), normalized_(normalized) {
    if (values_.empty()) throw Error("EmbeddingVector: dimension must be > 0");
  }

  std::span<const double> values() const { return values_; }
  int dim() const { return static_cast<int>(values_.size()); }
  bool normalized() const { return normalized_; }
  double operator[](std::size_t i) const { return values_[i]; }

  double Norm() const {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return std::sqrt(s);
  }

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<double> values_;
  bool normalized_ = false;
};

// Returns v / ||v||_2. Rejects vectors with norm below 1e-12.
inline EmbeddingVector normalize(const EmbeddingVector& v) {
  const double n = v.Norm();
  if (!(n >= kMinNormalizableNorm)) {
    throw Error("normalize: embedding norm " + std::to_string(n) +
                " is too small to normalize");
  }
  std::vector<double> out(v.values().begin(), v.values().end());
  for (double& x : out) x /= n;
  return EmbeddingVector(std::move(out), true);
}

inline double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw Error("dot: embedding dimension mismatch (" + std::to_string(a.dim()) +
                " vs " + std::to_string(b.dim()) + ")");
  }
  double s = 0.0;
  for (int i = 0; i < a.dim(); ++i) s += a[i] * b[i];
  return s;
}

// Cosine similarity of the normalized embeddings.
inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  const EmbeddingVector na = a.normalized() ? a : normalize(a);
  const EmbeddingVector nb = b.normalized() ? b : normalize(b);
  return dot(na, nb);
}

class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;

  virtual const std::string& name() const = 0;
  virtual int embed_dim() const = 0;
  virtual bool normalizes() const = 0;

  virtual EmbeddingVector encode(const PixelImage& x) const = 0;

  // Gradient of s(x) = encode(x)^T target with respect to the pixels.
  virtual std::vector<double> similarity_vjp(
      const PixelImage& x, const EmbeddingVector& target) const = 0;
};

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;

  virtual const std::string& name() const = 0;
  virtual int embed_dim() const = 0;

  virtual EmbeddingVector encode(std::string_view text) const = 0;
};

// e = W * (flatten(x) - offset) with a dense, row-major d x (H*W*3) weight
// matrix and a scalar input offset (0 unless set).
class LinearImageEncoder : public ImageEncoder {
 public:
  LinearImageEncoder(std::string name, ImageShape input_shape, int embed_dim,
                     std::vector<double> weights, bool normalize_output,
                     double input_offset = 0.0)
      : name_(std::move(name)),
        input_shape_(input_shape),
        embed_dim_(embed_dim),
        weights_(std::move(weights)),
        normalize_output_(normalize_output),
        input_offset_(input_offset) {
    if (embed_dim_ <= 0) throw Error(name_ + ": embed_dim must be positive");
    if (weights_.size() !=
        static_cast<std::size_t>(embed_dim_) * input_shape_.size()) {
      throw Error(name_ + ": weight matrix has wrong size");
    }
  }

  const std::string& name() const override { return name_; }
  int embed_dim() const override { return embed_dim_; }
  bool normalizes() const override { return normalize_output_; }
  const ImageShape& input_shape() const { return input_shape_; }
  double input_offset() const { return input_offset_; }
  std::span<const double> weights() const { return weights_; }

  EmbeddingVector encode(const PixelImage& x) const override {
    EmbeddingVector raw(Project(x), false);
    return normalize_output_ ? normalize(raw) : raw;
  }

  std::vector<double> similarity_vjp(
      const PixelImage& x, const EmbeddingVector& target) const override {
    if (target.dim() != embed_dim_) {
      throw Error(name_ + ": target dimension " + std::to_string(target.dim()) +
                  " does not match embed_dim " + std::to_string(embed_dim_));
    }
    std::vector<double> upstream(target.values().begin(),
                                 target.values().end());
    if (normalize_output_) {
      // d/dz (z/|z|)^T t = (t - (u^T t) u) / |z| with u = z/|z|.
      std::vector<double> z = Project(x);
      double norm = 0.0;
      for (double v : z) norm += v * v;
      norm = std::sqrt(norm);
      if (!(norm >= kMinNormalizableNorm)) {
        throw Error(name_ + ": embedding norm too small to differentiate");
      }
      double ut = 0.0;
      for (int i = 0; i < embed_dim_; ++i) ut += z[i] / norm * target[i];
      for (int i = 0; i < embed_dim_; ++i) {
        upstream[i] = (target[i] - ut * z[i] / norm) / norm;
      }
    }
    const std::size_t cols = input_shape_.size();
    std::vector<double> grad(cols, 0.0);
    for (int i = 0; i < embed_dim_; ++i) {
      const double u = upstream[i];
      const double* row = weights_.data() + static_cast<std::size_t>(i) * cols;
      for (std::size_t j = 0; j < cols; ++j) grad[j] += row[j] * u;
    }
    return grad;
  }

 private:
  std::vector<double> Project(const PixelImage& x) const {
    if (x.shape() != input_shape_) {
      throw Error(name_ + ": expected image of shape " +
                  input_shape_.ToString() + ", got " + x.shape().ToString());
    }
    const std::size_t cols = input_shape_.size();
    std::span<const double> px = x.pixels();
    std::vector<double> z(embed_dim_, 0.0);
    for (int i = 0; i < embed_dim_; ++i) {
      const double* row = weights_.data() + static_cast<std::size_t>(i) * cols;
      double s = 0.0;
      for (std::size_t j = 0; j < cols; ++j) s += row[j] * (px[j] - input_offset_);
      z[i] = s;
    }
    return z;
  }

  std::string name_;
  ImageShape input_shape_;
  int embed_dim_;
  std::vector<double> weights_;
  bool normalize_output_;
  double input_offset_;
};

struct ReferenceLinearOptions {
  ImageShape input_shape;
  int embed_dim = 32;
  std::uint64_t seed = 0;
  bool normalize_output = true;
  // W = N(seed) + noise_scale * N(noise_seed). A nonzero scale gives a
  // related-but-different model, e.g. a victim correlated with a surrogate.
  std::uint64_t noise_seed = 0;
  double noise_scale = 0.0;
  double input_offset = 0.0;
};

class ReferenceLinearImageEncoder : public LinearImageEncoder {
 public:
  ReferenceLinearImageEncoder(std::string name, const ReferenceLinearOptions& opt)
      : LinearImageEncoder(std::move(name), opt.input_shape, opt.embed_dim,
                           MakeWeights(opt), opt.normalize_output,
                           opt.input_offset),
        options_(opt) {}

  explicit ReferenceLinearImageEncoder(const ReferenceLinearOptions& opt)
      : ReferenceLinearImageEncoder(
            (opt.normalize_output ? "ref-linear-" : "ref-linear-raw-") +
                std::to_string(opt.embed_dim),
            opt) {}

  const ReferenceLinearOptions& options() const { return options_; }

  static std::vector<double> MakeWeights(const ReferenceLinearOptions& opt) {
    if (opt.embed_dim <= 0) throw Error("reference encoder: embed_dim <= 0");
    if (opt.input_shape.height <= 0 || opt.input_shape.width <= 0) {
      throw Error("reference encoder: input shape must be positive");
    }
    std::vector<double> w(static_cast<std::size_t>(opt.embed_dim) *
                          opt.input_shape.size());
    CounterRng(opt.seed).FillNormal(w);
    if (opt.noise_scale != 0.0) {
      std::vector<double> noise(w.size());
      CounterRng(opt.noise_seed).FillNormal(noise);
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] += opt.noise_scale * noise[i];
      }
    }
    return w;
  }

 private:
  ReferenceLinearOptions options_;
};

// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Lowercases ASCII letters and splits on whitespace.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isspace(uc)) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(uc)));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

class HashingTextEncoder : public TextEncoder {
 public:
  explicit HashingTextEncoder(int buckets)
      : HashingTextEncoder("ref-hash-" + std::to_string(buckets), buckets) {}
  HashingTextEncoder(std::string name, int buckets)
      : name_(std::move(name)), buckets_(buckets) {
    if (buckets_ <= 0) throw Error(name_ + ": bucket count must be positive");
  }

  const std::string& name() const override { return name_; }
  int embed_dim() const override { return buckets_; }

  int Bucket(std::string_view token) const {
    return static_cast<int>(fnv1a64(token) %
                            static_cast<std::uint64_t>(buckets_));
  }

  EmbeddingVector encode(std::string_view text) const override {
    const auto tokens = tokenize(text);
    if (tokens.empty()) throw Error(name_ + ": text is empty");
    std::vector<double> counts(buckets_, 0.0);
    for (const auto& t : tokens) counts[Bucket(t)] += 1.0;
    return normalize(EmbeddingVector(std::move(counts), false));
  }

 private:
  std::string name_;
  int buckets_;
};

// Configuration for constructing an image encoder by registry name.
struct ImageEncoderSpec {
  std::string name;
  ImageShape input_shape;
  std::uint64_t seed = 0;
  std::uint64_t noise_seed = 0;
  double noise_scale = 0.0;
  double input_offset = 0.0;
};

using ImageEncoderFactory =
    std::function<std::shared_ptr<const ImageEncoder>(const ImageEncoderSpec&)>;
using TextEncoderFactory =
    std::function<std::shared_ptr<const TextEncoder>(const std::string& name)>;

// Name -> factory map. Built-in names are pattern-matched:
//   ref-linear-<d>      normalized ReferenceLinearImageEncoder
//   ref-linear-raw-<d>  unnormalized ReferenceLinearImageEncoder
//   ref-hash-<d>        HashingTextEncoder with d buckets
// Adapters register exact names, which take precedence.
class EncoderRegistry {
 public:
  static EncoderRegistry& Global() {
    static EncoderRegistry registry;
    return registry;
  }

  void RegisterImageEncoder(const std::string& name, ImageEncoderFactory f) {
    std::lock_guard<std::mutex> lock(mu_);
    image_factories_[name] = std::move(f);
  }
  void RegisterTextEncoder(const std::string& name, TextEncoderFactory f) {
    std::lock_guard<std::mutex> lock(mu_);
    text_factories_[name] = std::move(f);
  }

  std::shared_ptr<const ImageEncoder> MakeImageEncoder(
      const ImageEncoderSpec& spec) const {
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (auto it = image_factories_.find(spec.name);
          it != image_factories_.end()) {
        return it->second(spec);
      }
    }
    ReferenceLinearOptions opt;
    opt.input_shape = spec.input_shape;
    opt.seed = spec.seed;
    opt.noise_seed = spec.noise_seed;
    opt.noise_scale = spec.noise_scale;
    opt.input_offset = spec.input_offset;
    if (auto d = ParseSuffix(spec.name, "ref-linear-raw-")) {
      opt.embed_dim = *d;
      opt.normalize_output = false;
    } else if (auto d2 = ParseSuffix(spec.name, "ref-linear-")) {
      opt.embed_dim = *d2;
      opt.normalize_output = true;
    } else {
      throw Error("unknown image encoder '" + spec.name + "'");
    }
    return std::make_shared<ReferenceLinearImageEncoder>(spec.name, opt);
  }

  std::shared_ptr<const TextEncoder> MakeTextEncoder(
      const std::string& name) const {
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (auto it = text_factories_.find(name); it != text_factories_.end()) {
        return it->second(name);
      }
    }
    if (auto d = ParseSuffix(name, "ref-hash-")) {
      return std::make_shared<HashingTextEncoder>(name, *d);
    }
    throw Error("unknown text encoder '" + name + "'");
  }

  bool KnowsImageEncoder(const std::string& name) const {
    std::lock_guard<std::mutex> lock(mu_);
    return image_factories_.contains(name) ||
           ParseSuffix(name, "ref-linear-raw-") ||
           ParseSuffix(name, "ref-linear-");
  }
  bool KnowsTextEncoder(const std::string& name) const {
    std::lock_guard<std::mutex> lock(mu_);
    return text_factories_.contains(name) ||
           ParseSuffix(name, "ref-hash-").has_value();
  }

 private:
  static std::optional<int> ParseSuffix(std::string_view name,
                                        std::string_view prefix) {
    if (!name.starts_with(prefix)) return std::nullopt;
    std::string_view rest = name.substr(prefix.size());
    if (rest.empty() || rest.size() > 6) return std::nullopt;
    int v = 0;
    for (char c : rest) {
      if (c < '0' || c > '9') return std::nullopt;
      v = v * 10 + (c - '0');
    }
    if (v <= 0) return std::nullopt;
    return v;
  }

  mutable std::mutex mu_;
  std::map<std::string, ImageEncoderFactory> image_factories_;
  std::map<std::string, TextEncoderFactory> text_factories_;
};

inline EmbeddingVector encode_image(const ImageEncoder& enc,
                                    const PixelImage& x) {
  return enc.encode(x);
}

inline EmbeddingVector encode_text(const TextEncoder& enc,
                                   std::string_view text) {
  return enc.encode(text);
}

inline std::vector<double> similarity_vjp(const ImageEncoder& enc,
                                          const PixelImage& x,
                                          const EmbeddingVector& target) {
  return enc.similarity_vjp(x, target);
}

}  // namespace vlmattack
