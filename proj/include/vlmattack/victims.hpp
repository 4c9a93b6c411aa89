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

// Black-box victims: (image, prompt) -> text, with exact query accounting.
//
// Every call to VictimOracle::generate costs one query, whether it succeeds
// or not. Concrete victims implement DoGenerate(); the base class owns the
// ledger. Remote and subprocess adapters live in remote_victim.hpp.

#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vlmattack/encoders.hpp"
#include "vlmattack/imagecore.hpp"

namespace vlmattack {

inline constexpr std::string_view kDefaultPrompt =
    "what is the content of this image?";

// Fixed input text given to the victim alongside the image.
class Prompt {
 public:
  Prompt() : text_(kDefaultPrompt) {}
  explicit Prompt(std::string text) : text_(std::move(text)) {
    if (text_.empty()) throw Error("Prompt: text must be non-empty");
  }
  const std::string& text() const { return text_; }
  bool operator==(const Prompt&) const = default;

 private:
  std::string text_;
};

struct QueryLedger {
  std::int64_t total_queries = 0;
  std::map<std::string, std::int64_t> per_case_queries;

  std::int64_t QueriesFor(const std::string& case_id) const {
    auto it = per_case_queries.find(case_id);
    return it == per_case_queries.end() ? 0 : it->second;
  }
};

class VictimOracle {
 public:
  explicit VictimOracle(std::string name, int max_concurrency = 1)
      : name_(std::move(name)), max_concurrency_(max_concurrency) {
    if (max_concurrency_ < 1) {
      throw Error(name_ + ": max_concurrency must be >= 1");
    }
  }
  virtual ~VictimOracle() = default;

  VictimOracle(const VictimOracle&) = delete;
  VictimOracle& operator=(const VictimOracle&) = delete;

  const std::string& name() const { return name_; }
  int max_concurrency() const { return max_concurrency_; }

  // One query. `case_id` only attributes the query in the ledger.
  std::string generate(const PixelImage& x, const Prompt& prompt,
                       const std::string& case_id = {}) {
    if (x.empty()) throw Error(name_ + ": empty image");
    {
      std::lock_guard<std::mutex> lock(ledger_mu_);
      ++ledger_.total_queries;
      ++ledger_.per_case_queries[case_id];
    }
    return DoGenerate(x, prompt);
  }

  void reset_ledger() {
    std::lock_guard<std::mutex> lock(ledger_mu_);
    ledger_ = QueryLedger{};
  }

  QueryLedger read_ledger() const {
    std::lock_guard<std::mutex> lock(ledger_mu_);
    return ledger_;
  }

 protected:
  virtual std::string DoGenerate(const PixelImage& x, const Prompt& prompt) = 0;

 private:
  std::string name_;
  int max_concurrency_;
  mutable std::mutex ledger_mu_;
  QueryLedger ledger_;
};

// Retrieval "captioner": returns the bank caption whose text embedding has
// the largest inner product with the image embedding (lowest index on ties).
// Pure, so any number of concurrent callers is fine.
class ToyRetrievalVictim : public VictimOracle {
 public:
  ToyRetrievalVictim(std::vector<std::string> caption_bank,
                     std::shared_ptr<const ImageEncoder> image_encoder,
                     std::shared_ptr<const TextEncoder> text_encoder,
                     std::string name = "toy-retrieval",
                     int max_concurrency = 64)
      : VictimOracle(std::move(name), max_concurrency),
        captions_(std::move(caption_bank)),
        image_encoder_(std::move(image_encoder)),
        text_encoder_(std::move(text_encoder)) {
    if (captions_.size() < 2) {
      throw Error("ToyRetrievalVictim: caption bank needs at least 2 entries");
    }
    if (!image_encoder_ || !text_encoder_) {
      throw Error("ToyRetrievalVictim: encoders must be set");
    }
    if (image_encoder_->embed_dim() != text_encoder_->embed_dim()) {
      throw Error("ToyRetrievalVictim: image/text embed_dim mismatch");
    }
    bank_embeddings_.reserve(captions_.size());
    for (const auto& c : captions_) {
      bank_embeddings_.push_back(text_encoder_->encode(c));
    }
  }

  const std::vector<std::string>& captions() const { return captions_; }
  const std::vector<EmbeddingVector>& bank_embeddings() const {
    return bank_embeddings_;
  }
  const ImageEncoder& image_encoder() const { return *image_encoder_; }
  const TextEncoder& text_encoder() const { return *text_encoder_; }

  // Index of the caption generate() would return, without a query.
  std::size_t Retrieve(const PixelImage& x) const {
    const EmbeddingVector e = image_encoder_->encode(x);
    std::size_t best = 0;
    double best_score = dot(e, bank_embeddings_[0]);
    for (std::size_t k = 1; k < bank_embeddings_.size(); ++k) {
      const double s = dot(e, bank_embeddings_[k]);
      if (s > best_score) {
        best_score = s;
        best = k;
      }
    }
    return best;
  }

 protected:
  std::string DoGenerate(const PixelImage& x, const Prompt&) override {
    return captions_[Retrieve(x)];
  }

 private:
  std::vector<std::string> captions_;
  std::shared_ptr<const ImageEncoder> image_encoder_;
  std::shared_ptr<const TextEncoder> text_encoder_;
  std::vector<EmbeddingVector> bank_embeddings_;
};

// Victim backed by an arbitrary function. Useful for stubs and in-process
// adapters.
class CallbackVictim : public VictimOracle {
 public:
  using Fn = std::function<std::string(const PixelImage&, const Prompt&)>;

  CallbackVictim(std::string name, Fn fn, int max_concurrency = 1)
      : VictimOracle(std::move(name), max_concurrency), fn_(std::move(fn)) {}

 protected:
  std::string DoGenerate(const PixelImage& x, const Prompt& prompt) override {
    return fn_(x, prompt);
  }

 private:
  Fn fn_;
};

inline std::string generate(VictimOracle& v, const PixelImage& x,
                            const Prompt& prompt,
                            const std::string& case_id = {}) {
  return v.generate(x, prompt, case_id);
}

inline void reset_ledger(VictimOracle& v) { v.reset_ledger(); }
inline QueryLedger read_ledger(const VictimOracle& v) { return v.read_ledger(); }

}  // namespace vlmattack
