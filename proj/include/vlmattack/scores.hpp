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

// Embedding-similarity scores: text-text (CLIP-style score of a generated
// response against the targeted text, per encoder plus their mean) and
// image-text.

#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vlmattack/encoders.hpp"

namespace vlmattack {

struct ClipScoreReport {
  // Ordered as the encoders were given.
  std::vector<std::pair<std::string, double>> per_encoder;
  double ensemble = 0.0;

  double ScoreFor(const std::string& encoder) const {
    for (const auto& [name, score] : per_encoder) {
      if (name == encoder) return score;
    }
    throw Error("no score for encoder '" + encoder + "'");
  }
};

inline ClipScoreReport clip_score(
    std::string_view text_a, std::string_view text_b,
    const std::vector<std::shared_ptr<const TextEncoder>>& encoders) {
  if (encoders.empty()) throw Error("clip_score: no encoders given");
  if (tokenize(text_a).empty() || tokenize(text_b).empty()) {
    throw Error("clip_score: texts must be non-empty");
  }
  ClipScoreReport report;
  double sum = 0.0;
  for (const auto& enc : encoders) {
    const double s = cosine(enc->encode(text_a), enc->encode(text_b));
    report.per_encoder.emplace_back(enc->name(), s);
    sum += s;
  }
  report.ensemble = sum / static_cast<double>(encoders.size());
  return report;
}

// Like clip_score, but an empty response scores 0 under every encoder
// instead of being rejected. Used for victim outputs, which may be empty
// (refusals, filters).
inline ClipScoreReport response_score(
    std::string_view response, std::string_view targeted_text,
    const std::vector<std::shared_ptr<const TextEncoder>>& encoders) {
  if (!tokenize(response).empty()) {
    return clip_score(response, targeted_text, encoders);
  }
  if (encoders.empty()) throw Error("response_score: no encoders given");
  ClipScoreReport report;
  for (const auto& enc : encoders) report.per_encoder.emplace_back(enc->name(), 0.0);
  return report;
}

inline double image_text_score(const PixelImage& x, std::string_view text,
                               const ImageEncoder& f, const TextEncoder& g) {
  if (f.embed_dim() != g.embed_dim()) {
    throw Error("image_text_score: encoder dimension mismatch (" +
                std::to_string(f.embed_dim()) + " vs " +
                std::to_string(g.embed_dim()) + ")");
  }
  return cosine(f.encode(x), g.encode(text));
}

}  // namespace vlmattack
