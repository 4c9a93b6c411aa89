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

// A desk-scale world for end-to-end runs without pretrained models.
//
// All models share a hidden "world" projection W (a reference linear
// encoder). The surrogate and the victim each see a noisy copy of it,
// W + k * N(own seed), so transfer from surrogate to victim is good but not
// perfect. The victim is a ToyRetrievalVictim over a bank of short captions.
// The text-to-image generator renders a caption t as
//   127.5 + amplitude * sign(W^T g(t)),
// an image the world (and hence both models) associates with t.
//
// The defaults (8x16 images, 32-d embeddings, model noise 0.3, low-contrast
// clean images) were chosen so that, at eps = 8 with 10 query steps, the
// combined attack clearly beats both single-stage attacks over 100 seeded
// cases (tools/toy_calibrate reports 98 / 78 / 81 successes).

#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "vlmattack/attack.hpp"
#include "vlmattack/datasets.hpp"
#include "vlmattack/encoders.hpp"
#include "vlmattack/rng.hpp"
#include "vlmattack/victims.hpp"

namespace vlmattack {

inline std::vector<std::string> default_toy_captions() {
  static const char* kColors[] = {"red", "blue", "yellow", "black"};
  static const char* kThings[] = {"cat", "bird", "horse", "cow"};
  std::vector<std::string> out;
  for (const char* c : kColors) {
    for (const char* t : kThings) {
      out.push_back(std::string("a photo of a ") + c + " " + t);
    }
  }
  return out;
}

struct ToyWorldOptions {
  ImageShape shape{8, 16};
  int embed_dim = 32;
  std::uint64_t world_seed = 1;
  std::uint64_t surrogate_seed = 2;
  std::uint64_t victim_seed = 3;
  double surrogate_noise = 0.3;
  double victim_noise = 0.3;
  double target_amplitude = 100.0;
  // Input offset of the surrogate and victim vision models.
  double surrogate_offset = 0.0;
  double victim_offset = 127.5;
  // Clean pixels are uniform integers in [clean_low, clean_high].
  int clean_low = 104;
  int clean_high = 151;
  std::vector<std::string> captions = default_toy_captions();
};

class ToyWorld {
 public:
  explicit ToyWorld(ToyWorldOptions opt = {}) : options_(std::move(opt)) {
    ReferenceLinearOptions base;
    base.input_shape = options_.shape;
    base.embed_dim = options_.embed_dim;
    base.seed = options_.world_seed;

    ReferenceLinearOptions world = base;
    world.normalize_output = false;
    world_ = std::make_shared<ReferenceLinearImageEncoder>("toy-world", world);

    ReferenceLinearOptions surrogate = base;
    surrogate.noise_seed = options_.surrogate_seed;
    surrogate.noise_scale = options_.surrogate_noise;
    surrogate.input_offset = options_.surrogate_offset;
    surrogate_image_ = std::make_shared<ReferenceLinearImageEncoder>(
        "ref-linear-" + std::to_string(options_.embed_dim), surrogate);

    ReferenceLinearOptions victim = base;
    victim.noise_seed = options_.victim_seed;
    victim.noise_scale = options_.victim_noise;
    victim.normalize_output = false;
    victim.input_offset = options_.victim_offset;
    victim_image_ =
        std::make_shared<ReferenceLinearImageEncoder>("toy-victim-vision", victim);

    text_ = std::make_shared<HashingTextEncoder>(options_.embed_dim);
  }

  const ToyWorldOptions& options() const { return options_; }
  const ImageShape& shape() const { return options_.shape; }
  const std::vector<std::string>& captions() const { return options_.captions; }

  std::shared_ptr<const ImageEncoder> surrogate_image() const {
    return surrogate_image_;
  }
  std::shared_ptr<const TextEncoder> text_encoder() const { return text_; }
  std::shared_ptr<const ImageEncoder> victim_image() const {
    return victim_image_;
  }

  std::unique_ptr<ToyRetrievalVictim> MakeVictim(int max_concurrency = 64) const {
    return std::make_unique<ToyRetrievalVictim>(
        options_.captions, victim_image_, text_, "toy-retrieval",
        max_concurrency);
  }

  // The toy text-to-image generator.
  PixelImage RenderTarget(const std::string& text) const {
    const EmbeddingVector t = text_->encode(text);
    const std::vector<double> dir = world_->similarity_vjp(
        PixelImage(options_.shape, 127.5), t);
    std::vector<double> px(dir.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
      px[i] = 127.5 + options_.target_amplitude * sign0(dir[i]);
    }
    return PixelImage::Clamped(options_.shape, std::move(px));
  }

  std::unique_ptr<CallbackTargetProvider> MakeTargetProvider() const {
    return std::make_unique<CallbackTargetProvider>(
        "toy-renderer", [this](const std::string& t) { return RenderTarget(t); });
  }

  // Integer-valued clean image with i.i.d. uniform pixels.
  PixelImage CleanImage(std::uint64_t seed) const {
    CounterRng rng(derive_seed(seed, {0x636c65616eULL}));
    const auto span = static_cast<std::uint64_t>(options_.clean_high -
                                                 options_.clean_low + 1);
    std::vector<double> px(options_.shape.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
      px[i] = options_.clean_low + static_cast<double>(rng.Below(i, span));
    }
    return PixelImage(options_.shape, std::move(px));
  }

  // Bank index of the caption closest to `text` under the text encoder.
  std::size_t NearestCaption(const std::string& text) const {
    const EmbeddingVector e = text_->encode(text);
    std::size_t best = 0;
    double best_score = -2.0;
    for (std::size_t k = 0; k < options_.captions.size(); ++k) {
      const double s = dot(e, text_->encode(options_.captions[k]));
      if (s > best_score) {
        best_score = s;
        best = k;
      }
    }
    return best;
  }

 private:
  ToyWorldOptions options_;
  std::shared_ptr<ReferenceLinearImageEncoder> world_;
  std::shared_ptr<ReferenceLinearImageEncoder> surrogate_image_;
  std::shared_ptr<ReferenceLinearImageEncoder> victim_image_;
  std::shared_ptr<HashingTextEncoder> text_;
};

// One seeded toy case: clean image plus a targeted caption from the bank
// that differs from the victim's clean response.
struct ToyCase {
  AttackCase attack_case;
  PixelImage clean;
  std::size_t target_index = 0;
};

inline ToyCase make_toy_case(const ToyWorld& world,
                             const ToyRetrievalVictim& victim,
                             std::uint64_t seed) {
  ToyCase tc;
  tc.clean = world.CleanImage(seed);
  const std::size_t clean_index = victim.Retrieve(tc.clean);
  const std::size_t bank = world.captions().size();
  CounterRng rng(derive_seed(seed, {0x746172676574ULL}));
  std::size_t pick = rng.Below(0, bank - 1);
  if (pick >= clean_index) ++pick;
  tc.target_index = pick;
  tc.attack_case.id = "toy-" + std::to_string(seed);
  tc.attack_case.targeted_text = world.captions()[pick];
  return tc;
}

}  // namespace vlmattack
