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

// Run configuration and the command implementations behind the vlmattack
// binary. Commands return process exit codes:
//   0  every case completed (attack success is not required)
//   1  at least one case failed; see errors.log in the command directory
//   2  configuration error, reported before any victim query
//
// Configuration is a JSON file (schema in README.md). Relative paths inside
// it resolve against the file's directory. Command-line flags override file
// fields, which override defaults.

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vlmattack/attack.hpp"
#include "vlmattack/datasets.hpp"
#include "vlmattack/encoders.hpp"
#include "vlmattack/eval.hpp"
#include "vlmattack/outputs.hpp"
#include "vlmattack/png_io.hpp"
#include "vlmattack/remote_victim.hpp"
#include "vlmattack/toy.hpp"
#include "vlmattack/victims.hpp"

namespace vlmattack {

class ConfigError : public Error {
 public:
  using Error::Error;
};

inline constexpr const char* kVictimEndpointEnv = "VLMATTACK_VICTIM_ENDPOINT";

struct EncoderConfig {
  std::string name;
  std::uint64_t seed = 0;
  std::uint64_t noise_seed = 0;
  double noise_scale = 0.0;
  double input_offset = 0.0;

  ImageEncoderSpec Spec(ImageShape shape) const {
    return {name, shape, seed, noise_seed, noise_scale, input_offset};
  }
};

struct VictimConfig {
  std::string type = "toy";  // toy | http | subprocess
  std::string name;
  int max_concurrency = 1;
  // toy
  std::vector<std::string> captions;
  EncoderConfig image_encoder{"ref-linear-raw-32", 0, 0, 0.0, 0.0};
  std::string text_encoder = "ref-hash-32";
  // http
  std::string endpoint;
  int retries = 3;
  int backoff_ms = 200;
  int timeout_seconds = 120;
  // subprocess
  std::string command;
};

struct RunConfig {
  std::filesystem::path manifest;
  std::filesystem::path output_dir = "vlmattack-out";
  std::uint64_t seed = 0;
  int workers = 1;
  std::optional<std::int64_t> query_cap;

  EncoderConfig surrogate_image{"ref-linear-32", 0, 0, 0.0, 0.0};
  std::string surrogate_text = "ref-hash-32";
  std::vector<std::string> eval_encoders{"ref-hash-32"};
  VictimConfig victim;
  std::optional<std::filesystem::path> target_images;

  TransferConfig transfer;
  QueryConfig query;

  std::vector<double> sweep_epsilons{2, 4, 8, 16, 64};
  double split_total_epsilon = 8.0;
  std::vector<std::pair<double, double>> splits{{8, 0}, {4, 4}, {0, 8}};
  std::vector<double> sensitivity_sigmas{0, 2, 4, 8, 16, 32};
  int sensitivity_trials = 20;
  // Where eval/sensitivity read x_adv.png; defaults to <output_dir>/attack.
  std::optional<std::filesystem::path> adv_dir;

  std::filesystem::path AdvDir() const {
    return adv_dir ? *adv_dir : output_dir / "attack";
  }
};

struct CliOverrides {
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> manifest;
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::int64_t> query_cap;
};

// ---------------------------------------------------------------------------
// Parsing.

namespace config_detail {

using Json = nlohmann::json;

inline void CheckKeys(const Json& j, const std::string& where,
                      std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; })) {
      throw ConfigError(where + ": unknown field '" + key + "'");
    }
  }
}

template <typename T>
void Read(const Json& j, const char* key, T* out, const std::string& where) {
  if (!j.contains(key) || j[key].is_null()) return;
  try {
    *out = j[key].get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

inline std::filesystem::path Resolve(const std::filesystem::path& base,
                                     const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline EncoderConfig ParseEncoder(const Json& j, EncoderConfig def,
                                  const std::string& where) {
  if (j.is_string()) {
    def.name = j.get<std::string>();
    return def;
  }
  CheckKeys(j, where,
            {"name", "seed", "noise_seed", "noise_scale", "input_offset"});
  Read(j, "name", &def.name, where);
  Read(j, "seed", &def.seed, where);
  Read(j, "noise_seed", &def.noise_seed, where);
  Read(j, "noise_scale", &def.noise_scale, where);
  Read(j, "input_offset", &def.input_offset, where);
  return def;
}

inline double ReadEpsilon(const Json& j, double def, const std::string& where) {
  double eps = def;
  Read(j, "epsilon", &eps, where);
  try {
    LinfBudget check(eps);
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return eps;
}

}  // namespace config_detail

inline RunConfig parse_run_config(const nlohmann::json& j,
                                  const std::filesystem::path& base_dir) {
  using namespace config_detail;
  RunConfig c;
  CheckKeys(j, "config",
            {"manifest", "output_dir", "seed", "workers", "query_cap",
             "surrogate", "eval_encoders", "victim", "target_images",
             "transfer", "query", "sweep_eps", "split_budget", "sensitivity",
             "adv_dir"});
  std::string s;
  if (j.contains("manifest")) {
    Read(j, "manifest", &s, "config");
    if (!s.empty()) c.manifest = Resolve(base_dir, s);
  }
  if (j.contains("output_dir")) {
    Read(j, "output_dir", &s, "config");
    if (!s.empty()) c.output_dir = Resolve(base_dir, s);
  }
  Read(j, "seed", &c.seed, "config");
  Read(j, "workers", &c.workers, "config");
  if (j.contains("query_cap") && !j["query_cap"].is_null()) {
    std::int64_t cap = 0;
    Read(j, "query_cap", &cap, "config");
    c.query_cap = cap;
  }
  if (j.contains("target_images") && !j["target_images"].is_null()) {
    Read(j, "target_images", &s, "config");
    c.target_images = Resolve(base_dir, s);
  }
  if (j.contains("adv_dir") && !j["adv_dir"].is_null()) {
    Read(j, "adv_dir", &s, "config");
    c.adv_dir = Resolve(base_dir, s);
  }

  if (j.contains("surrogate")) {
    const Json& sj = j["surrogate"];
    CheckKeys(sj, "surrogate", {"image_encoder", "text_encoder"});
    if (sj.contains("image_encoder")) {
      c.surrogate_image = ParseEncoder(sj["image_encoder"], c.surrogate_image,
                                       "surrogate.image_encoder");
    }
    Read(sj, "text_encoder", &c.surrogate_text, "surrogate");
  }
  Read(j, "eval_encoders", &c.eval_encoders, "config");

  if (j.contains("victim")) {
    const Json& vj = j["victim"];
    CheckKeys(vj, "victim",
              {"type", "name", "max_concurrency", "captions", "image_encoder",
               "text_encoder", "endpoint", "retries", "backoff_ms",
               "timeout_seconds", "command"});
    VictimConfig& v = c.victim;
    Read(vj, "type", &v.type, "victim");
    Read(vj, "name", &v.name, "victim");
    Read(vj, "max_concurrency", &v.max_concurrency, "victim");
    Read(vj, "captions", &v.captions, "victim");
    if (vj.contains("image_encoder")) {
      v.image_encoder =
          ParseEncoder(vj["image_encoder"], v.image_encoder, "victim.image_encoder");
    }
    Read(vj, "text_encoder", &v.text_encoder, "victim");
    Read(vj, "endpoint", &v.endpoint, "victim");
    Read(vj, "retries", &v.retries, "victim");
    Read(vj, "backoff_ms", &v.backoff_ms, "victim");
    Read(vj, "timeout_seconds", &v.timeout_seconds, "victim");
    Read(vj, "command", &v.command, "victim");
  }

  if (j.contains("transfer")) {
    const Json& tj = j["transfer"];
    CheckKeys(tj, "transfer", {"steps", "step_size", "epsilon", "objective"});
    Read(tj, "steps", &c.transfer.steps, "transfer");
    Read(tj, "step_size", &c.transfer.step_size, "transfer");
    c.transfer.budget = LinfBudget(ReadEpsilon(tj, 8.0, "transfer"));
    if (tj.contains("objective")) {
      Read(tj, "objective", &s, "transfer");
      try {
        c.transfer.objective = parse_transfer_objective(s);
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
    }
  }
  if (j.contains("query")) {
    const Json& qj = j["query"];
    CheckKeys(qj, "query",
              {"steps", "queries", "sigma", "inner_pgd_steps", "step_size",
               "epsilon", "distribution", "workers"});
    Read(qj, "steps", &c.query.steps, "query");
    Read(qj, "queries", &c.query.queries, "query");
    Read(qj, "sigma", &c.query.sigma, "query");
    Read(qj, "inner_pgd_steps", &c.query.inner_pgd_steps, "query");
    Read(qj, "step_size", &c.query.step_size, "query");
    Read(qj, "workers", &c.query.workers, "query");
    c.query.budget = LinfBudget(ReadEpsilon(qj, 8.0, "query"));
    if (qj.contains("distribution")) {
      Read(qj, "distribution", &s, "query");
      try {
        c.query.distribution = parse_direction_distribution(s);
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
    }
  }
  if (j.contains("sweep_eps")) {
    const Json& ej = j["sweep_eps"];
    CheckKeys(ej, "sweep_eps", {"epsilons"});
    Read(ej, "epsilons", &c.sweep_epsilons, "sweep_eps");
  }
  if (j.contains("split_budget")) {
    const Json& bj = j["split_budget"];
    CheckKeys(bj, "split_budget", {"total_epsilon", "splits"});
    Read(bj, "total_epsilon", &c.split_total_epsilon, "split_budget");
    if (bj.contains("splits")) {
      c.splits.clear();
      for (const auto& sp : bj["splits"]) {
        if (!sp.is_array() || sp.size() != 2 || !sp[0].is_number() ||
            !sp[1].is_number()) {
          throw ConfigError(
              "split_budget.splits: each split must be [transfer_eps, query_eps]");
        }
        c.splits.emplace_back(sp[0].get<double>(), sp[1].get<double>());
      }
    }
  }
  if (j.contains("sensitivity")) {
    const Json& sj = j["sensitivity"];
    CheckKeys(sj, "sensitivity", {"sigmas", "trials"});
    Read(sj, "sigmas", &c.sensitivity_sigmas, "sensitivity");
    Read(sj, "trials", &c.sensitivity_trials, "sensitivity");
  }
  return c;
}

inline RunConfig load_run_config(const CliOverrides& o) {
  RunConfig c;
  if (o.config) {
    std::ifstream in(*o.config);
    if (!in) throw ConfigError("cannot open config " + o.config->string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config " + o.config->string() +
                        " is not valid JSON: " + e.what());
    }
    c = parse_run_config(j, o.config->parent_path());
  }
  if (o.manifest) c.manifest = *o.manifest;
  if (o.output_dir) c.output_dir = *o.output_dir;
  if (o.seed) c.seed = *o.seed;
  if (o.workers) c.workers = *o.workers;
  if (o.query_cap) c.query_cap = *o.query_cap;
  if (const char* env = std::getenv(kVictimEndpointEnv);
      env != nullptr && *env != '\0') {
    c.victim.endpoint = env;
  }
  c.query.query_cap = c.query_cap;
  c.query.seed = c.seed;
  return c;
}

// Fully resolved configuration, defaults included.
inline nlohmann::ordered_json config_to_json(const RunConfig& c) {
  using OJ = nlohmann::ordered_json;
  auto enc = [](const EncoderConfig& e) {
    OJ j;
    j["name"] = e.name;
    j["seed"] = e.seed;
    j["noise_seed"] = e.noise_seed;
    j["noise_scale"] = e.noise_scale;
    j["input_offset"] = e.input_offset;
    return j;
  };
  OJ j;
  j["manifest"] = c.manifest.string();
  j["output_dir"] = c.output_dir.string();
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["query_cap"] = c.query_cap ? OJ(*c.query_cap) : OJ(nullptr);
  j["surrogate"] = {{"image_encoder", enc(c.surrogate_image)},
                    {"text_encoder", c.surrogate_text}};
  j["eval_encoders"] = c.eval_encoders;
  OJ v;
  v["type"] = c.victim.type;
  v["name"] = c.victim.name;
  v["max_concurrency"] = c.victim.max_concurrency;
  if (c.victim.type == "toy") {
    v["captions"] = c.victim.captions;
    v["image_encoder"] = enc(c.victim.image_encoder);
    v["text_encoder"] = c.victim.text_encoder;
  } else if (c.victim.type == "http") {
    v["endpoint"] = c.victim.endpoint;
    v["retries"] = c.victim.retries;
    v["backoff_ms"] = c.victim.backoff_ms;
    v["timeout_seconds"] = c.victim.timeout_seconds;
  } else {
    v["command"] = c.victim.command;
  }
  j["victim"] = v;
  j["target_images"] =
      c.target_images ? OJ(c.target_images->string()) : OJ(nullptr);
  j["transfer"] = {{"steps", c.transfer.steps},
                   {"step_size", c.transfer.step_size},
                   {"epsilon", c.transfer.budget.epsilon()},
                   {"objective", to_string(c.transfer.objective)}};
  j["query"] = {{"steps", c.query.steps},
                {"queries", c.query.queries},
                {"sigma", c.query.sigma},
                {"inner_pgd_steps", c.query.inner_pgd_steps},
                {"step_size", c.query.step_size},
                {"epsilon", c.query.budget.epsilon()},
                {"distribution", to_string(c.query.distribution)},
                {"workers", c.query.workers}};
  j["sweep_eps"] = {{"epsilons", c.sweep_epsilons}};
  OJ splits = OJ::array();
  for (const auto& [t, q] : c.splits) splits.push_back({t, q});
  j["split_budget"] = {{"total_epsilon", c.split_total_epsilon},
                       {"splits", splits}};
  j["sensitivity"] = {{"sigmas", c.sensitivity_sigmas},
                      {"trials", c.sensitivity_trials}};
  j["adv_dir"] = c.adv_dir ? OJ(c.adv_dir->string()) : OJ(nullptr);
  return j;
}

// Run configuration whose surrogate and toy victim reproduce `world`.
// Target images are expected in <base>/targets (see the vlmattack-toy tool).
inline RunConfig toy_run_config(const ToyWorldOptions& w) {
  RunConfig c;
  const std::string d = std::to_string(w.embed_dim);
  c.surrogate_image = {"ref-linear-" + d, w.world_seed, w.surrogate_seed,
                       w.surrogate_noise, w.surrogate_offset};
  c.surrogate_text = "ref-hash-" + d;
  c.eval_encoders = {"ref-hash-" + d};
  c.victim.type = "toy";
  c.victim.name = "toy-retrieval";
  c.victim.max_concurrency = 64;
  c.victim.captions = w.captions;
  c.victim.image_encoder = {"ref-linear-raw-" + d, w.world_seed, w.victim_seed,
                            w.victim_noise, w.victim_offset};
  c.victim.text_encoder = "ref-hash-" + d;
  c.query.steps = 10;
  return c;
}

// ---------------------------------------------------------------------------
// Component construction.

inline std::unique_ptr<VictimOracle> make_toy_victim(const VictimConfig& v,
                                                     ImageShape shape) {
  auto& reg = EncoderRegistry::Global();
  return std::make_unique<ToyRetrievalVictim>(
      v.captions, reg.MakeImageEncoder(v.image_encoder.Spec(shape)),
      reg.MakeTextEncoder(v.text_encoder), v.name.empty() ? "toy" : v.name,
      v.max_concurrency);
}

// Owns the encoders, victims and target provider of one command run.
// Reference image encoders are bound to an input shape, so shape-dependent
// components are built lazily per shape.
class RunContext {
 public:
  explicit RunContext(RunConfig cfg) : cfg_(std::move(cfg)) { Validate(); }

  const RunConfig& config() const { return cfg_; }
  const std::vector<std::shared_ptr<const TextEncoder>>& eval_encoders() const {
    return eval_encoders_;
  }
  const TextEncoder& surrogate_text() const { return *surrogate_text_; }
  TargetImageProvider* target_provider() const { return provider_.get(); }

  // Effective case-level parallelism.
  int CaseWorkers() const {
    return std::max(1, std::min(cfg_.workers, cfg_.victim.max_concurrency));
  }

  AttackComponents ComponentsFor(ImageShape shape) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = per_shape_.find(Key(shape));
    if (it == per_shape_.end()) {
      PerShape ps;
      ps.surrogate_image = EncoderRegistry::Global().MakeImageEncoder(
          cfg_.surrogate_image.Spec(shape));
      if (cfg_.victim.type == "toy") {
        ps.victim = make_toy_victim(cfg_.victim, shape);
      }
      it = per_shape_.emplace(Key(shape), std::move(ps)).first;
    }
    VictimOracle* victim =
        shared_victim_ ? shared_victim_.get() : it->second.victim.get();
    return {it->second.surrogate_image.get(), surrogate_text_.get(), victim,
            provider_.get()};
  }

  std::uint64_t CaseSeed(const AttackCase& c) const {
    return derive_seed(cfg_.seed, {fnv1a64(c.id)});
  }

 private:
  struct PerShape {
    std::shared_ptr<const ImageEncoder> surrogate_image;
    std::unique_ptr<VictimOracle> victim;
  };

  static std::pair<int, int> Key(ImageShape s) { return {s.height, s.width}; }

  void Validate() {
    auto& reg = EncoderRegistry::Global();
    const ImageShape probe{1, 1};
    if (!reg.KnowsImageEncoder(cfg_.surrogate_image.name)) {
      throw ConfigError("unknown surrogate image encoder '" +
                        cfg_.surrogate_image.name + "'");
    }
    if (!reg.KnowsTextEncoder(cfg_.surrogate_text)) {
      throw ConfigError("unknown surrogate text encoder '" +
                        cfg_.surrogate_text + "'");
    }
    surrogate_text_ = reg.MakeTextEncoder(cfg_.surrogate_text);
    const int image_dim =
        reg.MakeImageEncoder(cfg_.surrogate_image.Spec(probe))->embed_dim();
    if (cfg_.transfer.objective == TransferObjective::kMfIt &&
        cfg_.transfer.steps > 0 && image_dim != surrogate_text_->embed_dim()) {
      throw ConfigError("MF-it needs surrogate image and text encoders of equal "
                        "embed_dim");
    }
    if (cfg_.eval_encoders.empty()) {
      throw ConfigError("eval_encoders must name at least one text encoder");
    }
    for (const auto& name : cfg_.eval_encoders) {
      if (!reg.KnowsTextEncoder(name)) {
        throw ConfigError("unknown evaluation encoder '" + name + "'");
      }
      eval_encoders_.push_back(reg.MakeTextEncoder(name));
    }
    if (cfg_.workers < 1) throw ConfigError("workers must be >= 1");
    try {
      cfg_.transfer.Validate();
      cfg_.query.Validate();
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }

    const VictimConfig& v = cfg_.victim;
    if (v.max_concurrency < 1) {
      throw ConfigError("victim.max_concurrency must be >= 1");
    }
    if (v.type == "toy") {
      if (v.captions.size() < 2) {
        throw ConfigError("toy victim needs at least 2 captions");
      }
      if (!reg.KnowsImageEncoder(v.image_encoder.name) ||
          !reg.KnowsTextEncoder(v.text_encoder)) {
        throw ConfigError("toy victim: unknown encoder");
      }
      const int vd =
          reg.MakeImageEncoder(v.image_encoder.Spec(probe))->embed_dim();
      if (vd != reg.MakeTextEncoder(v.text_encoder)->embed_dim()) {
        throw ConfigError("toy victim: image/text embed_dim mismatch");
      }
    } else if (v.type == "http") {
      if (v.endpoint.empty()) {
        throw ConfigError(std::string("http victim needs victim.endpoint or ") +
                          kVictimEndpointEnv);
      }
      HttpVictimOptions opt;
      opt.endpoint = v.endpoint;
      opt.max_concurrency = v.max_concurrency;
      opt.retries = v.retries;
      opt.initial_backoff = std::chrono::milliseconds(v.backoff_ms);
      opt.timeout = std::chrono::seconds(v.timeout_seconds);
      try {
        shared_victim_ = std::make_unique<HttpVictim>(
            opt, v.name.empty() ? "http" : v.name);
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
    } else if (v.type == "subprocess") {
      if (v.command.empty()) {
        throw ConfigError("subprocess victim needs victim.command");
      }
      if (v.max_concurrency != 1) {
        throw ConfigError("subprocess victim supports max_concurrency 1 only");
      }
      shared_victim_ = std::make_unique<SubprocessVictim>(
          v.command, v.name.empty() ? "subprocess" : v.name);
    } else {
      throw ConfigError("unknown victim type '" + v.type +
                        "' (expected toy, http or subprocess)");
    }
    if (cfg_.target_images) {
      provider_ = std::make_unique<DirectoryTargetProvider>(*cfg_.target_images);
    }
  }

  RunConfig cfg_;
  std::shared_ptr<const TextEncoder> surrogate_text_;
  std::vector<std::shared_ptr<const TextEncoder>> eval_encoders_;
  std::unique_ptr<VictimOracle> shared_victim_;
  std::unique_ptr<TargetImageProvider> provider_;
  std::mutex mu_;
  std::map<std::pair<int, int>, PerShape> per_shape_;
};

// ---------------------------------------------------------------------------
// Commands.

namespace cmd_detail {

inline std::vector<AttackCase> LoadCases(const RunConfig& c) {
  if (c.manifest.empty()) throw ConfigError("no manifest given");
  try {
    return load_manifest(c.manifest);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

// MF-ii needs a targeted image for every case before any query is spent.
inline void CheckTargets(const RunConfig& c, RunContext& ctx,
                         const std::vector<AttackCase>& cases) {
  if (c.transfer.steps == 0 ||
      c.transfer.objective != TransferObjective::kMfIi) {
    return;
  }
  for (const auto& k : cases) {
    if (k.targeted_image) continue;
    auto* dir = dynamic_cast<DirectoryTargetProvider*>(ctx.target_provider());
    if (dir == nullptr) {
      throw ConfigError("case '" + k.id +
                        "' has no targeted_image and no target_images "
                        "directory is configured");
    }
    if (!std::filesystem::exists(dir->PathFor(k.targeted_text))) {
      throw ConfigError("case '" + k.id + "': expected targeted image " +
                        dir->PathFor(k.targeted_text).string());
    }
  }
}

inline void WriteErrors(const std::filesystem::path& dir,
                        std::vector<std::pair<std::string, std::string>> errors) {
  std::sort(errors.begin(), errors.end());
  std::string text;
  for (const auto& [id, msg] : errors) text += id + ": " + msg + "\n";
  write_text_file(dir / "errors.log", text);
}

inline void WriteEmptyReport(const std::filesystem::path& dir,
                             const std::vector<std::string>& encoders) {
  std::string header = "case_id,status";
  for (const auto& e : encoders) header += ",score:" + e;
  header += ",ensemble,query_count,wall_time_seconds\n";
  write_text_file(dir / "report.csv", header);
  write_text_file(dir / "report_summary.json", "{\n  \"cases\": 0\n}\n");
}

inline std::filesystem::path PrepareDir(const RunConfig& c,
                                        const std::string& command) {
  const auto dir = c.output_dir / command;
  std::filesystem::create_directories(dir);
  write_text_file(dir / "config.json", config_to_json(c).dump(2) + "\n");
  return dir;
}

inline std::string CsvText(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace cmd_detail

// `validate`: config, registries, manifest and targeted images.
inline int cmd_validate(const RunConfig& c, std::ostream& out) {
  RunContext ctx(c);
  const auto cases = cmd_detail::LoadCases(c);
  cmd_detail::CheckTargets(c, ctx, cases);
  out << cases.size() << " cases\n";
  return 0;
}

// `attack`: two-stage pipeline over every case.
inline int cmd_attack(const RunConfig& c, std::ostream& out) {
  RunContext ctx(c);
  const auto cases = cmd_detail::LoadCases(c);
  cmd_detail::CheckTargets(c, ctx, cases);
  const auto dir = cmd_detail::PrepareDir(c, "attack");
  const auto echo = config_to_json(c);
  if (cases.empty()) {
    cmd_detail::WriteEmptyReport(dir, c.eval_encoders);
    cmd_detail::WriteErrors(dir, {});
    out << "0 cases\n";
    return 0;
  }

  std::vector<CaseReport> reports(cases.size());
  parallel_for(static_cast<int>(cases.size()), ctx.CaseWorkers(), [&](int i) {
    const AttackCase& k = cases[i];
    CaseReport& rep = reports[i];
    rep.case_id = k.id;
    try {
      const PixelImage x_cle = load_png(k.clean_image);
      AttackComponents comp = ctx.ComponentsFor(x_cle.shape());
      QueryConfig q = c.query;
      q.seed = ctx.CaseSeed(k);
      AttackResult r = attack_pipeline(k, x_cle, c.transfer, q, comp);
      rep.scores = response_score(r.final_text, k.targeted_text,
                                  ctx.eval_encoders());
      rep.query_count = r.total_queries;
      rep.wall_time_seconds = r.wall_time_seconds;
      write_attack_outputs(r, k, rep.scores, echo, dir / k.id);
    } catch (const std::exception& e) {
      rep.error = e.what();
    }
  });

  std::vector<std::pair<std::string, std::string>> errors;
  for (const auto& r : reports) {
    if (!r.error.empty()) errors.emplace_back(r.case_id, r.error);
  }
  emit_report(reports, dir, "report");
  cmd_detail::WriteErrors(dir, errors);
  out << cases.size() << " cases, " << errors.size() << " failed\n";
  return errors.empty() ? 0 : 1;
}

// `eval`: victim responses on clean and adversarial images, scored against
// the targeted text by the evaluation ensemble.
inline int cmd_eval(const RunConfig& c, std::ostream& out) {
  RunContext ctx(c);
  const auto cases = cmd_detail::LoadCases(c);
  const auto dir = cmd_detail::PrepareDir(c, "eval");
  if (cases.empty()) {
    cmd_detail::WriteEmptyReport(dir, c.eval_encoders);
    out << "0 cases\n";
    return 0;
  }
  std::vector<CaseReport> clean(cases.size()), adv(cases.size());
  parallel_for(static_cast<int>(cases.size()), ctx.CaseWorkers(), [&](int i) {
    const AttackCase& k = cases[i];
    clean[i].case_id = adv[i].case_id = k.id;
    try {
      const PixelImage x_cle = load_png(k.clean_image);
      const PixelImage x_adv = load_png(c.AdvDir() / k.id / "x_adv.png");
      AttackComponents comp = ctx.ComponentsFor(x_cle.shape());
      const std::string clean_text =
          comp.victim->generate(x_cle, k.prompt(), k.id);
      const std::string adv_text = comp.victim->generate(x_adv, k.prompt(), k.id);
      clean[i].scores =
          response_score(clean_text, k.targeted_text, ctx.eval_encoders());
      adv[i].scores = response_score(adv_text, k.targeted_text, ctx.eval_encoders());
      clean[i].query_count = adv[i].query_count = 1;
    } catch (const std::exception& e) {
      clean[i].error = adv[i].error = e.what();
    }
  });
  std::vector<std::pair<std::string, std::string>> errors;
  for (const auto& r : adv) {
    if (!r.error.empty()) errors.emplace_back(r.case_id, r.error);
  }
  emit_report(clean, dir, "clean");
  emit_report(adv, dir, "adversarial");
  cmd_detail::WriteErrors(dir, errors);
  out << cases.size() << " cases, " << errors.size() << " failed\n";
  return errors.empty() ? 0 : 1;
}

// `sweep-eps`: pipeline per case and epsilon, with perceptual distance.
inline int cmd_sweep_eps(const RunConfig& c, std::ostream& out) {
  RunContext ctx(c);
  for (std::size_t i = 0; i < c.sweep_epsilons.size(); ++i) {
    if (c.sweep_epsilons[i] < 0.0 || c.sweep_epsilons[i] > kPixelMax ||
        (i > 0 && c.sweep_epsilons[i] < c.sweep_epsilons[i - 1])) {
      throw ConfigError("sweep_eps.epsilons must be sorted values in [0, 255]");
    }
  }
  const auto cases = cmd_detail::LoadCases(c);
  cmd_detail::CheckTargets(c, ctx, cases);
  const auto dir = cmd_detail::PrepareDir(c, "sweep-eps");
  const MeanAbsPixelDistance metric;
  std::vector<std::vector<EpsSweepRow>> rows(cases.size());
  std::vector<std::string> case_errors(cases.size());
  parallel_for(static_cast<int>(cases.size()), ctx.CaseWorkers(), [&](int i) {
    const AttackCase& k = cases[i];
    try {
      const PixelImage x_cle = load_png(k.clean_image);
      AttackComponents comp = ctx.ComponentsFor(x_cle.shape());
      QueryConfig q = c.query;
      q.seed = ctx.CaseSeed(k);
      rows[i] = eps_sweep(k, x_cle, c.sweep_epsilons, c.transfer, q, comp,
                          metric, ctx.eval_encoders());
    } catch (const std::exception& e) {
      case_errors[i] = e.what();
    }
  });
  std::ostringstream csv;
  csv << "case_id,epsilon,status,ensemble,distance,linf,final_text\n";
  std::vector<std::pair<std::string, std::string>> errors;
  std::size_t n_rows = 0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (!case_errors[i].empty()) {
      errors.emplace_back(cases[i].id, case_errors[i]);
      continue;
    }
    for (const auto& r : rows[i]) {
      const bool ok = r.error.empty();
      if (!ok) {
        errors.emplace_back(cases[i].id + "@eps=" + format_number(r.epsilon, 3),
                            r.error);
      }
      csv << cmd_detail::CsvText(cases[i].id) << ","
          << format_number(r.epsilon, 3) << "," << (ok ? "ok" : "error") << ","
          << (ok ? format_number(r.scores.ensemble) : "") << ","
          << (ok ? format_number(r.distance) : "") << ","
          << (ok ? format_number(r.linf, 3) : "") << ","
          << cmd_detail::CsvText(r.final_text) << "\n";
      ++n_rows;
    }
  }
  write_text_file(dir / "sweep.csv", csv.str());
  cmd_detail::WriteErrors(dir, errors);
  out << n_rows << " rows, " << errors.size() << " failed\n";
  return errors.empty() ? 0 : 1;
}

// `split-budget`: fixed total budget divided between transfer and query.
inline int cmd_split_budget(const RunConfig& c, std::ostream& out) {
  std::vector<BudgetSplit> splits;
  for (const auto& [t, q] : c.splits) {
    BudgetSplit s{t, q, c.split_total_epsilon};
    try {
      s.Validate();
      LinfBudget check(c.split_total_epsilon);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
    splits.push_back(s);
  }
  RunContext ctx(c);
  const auto cases = cmd_detail::LoadCases(c);
  cmd_detail::CheckTargets(c, ctx, cases);
  const auto dir = cmd_detail::PrepareDir(c, "split-budget");

  std::ostringstream csv;
  csv << "split,case_id,status,ensemble,linf,query_count,final_text\n";
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
  std::vector<std::pair<std::string, std::string>> errors;
  for (const BudgetSplit& s : splits) {
    const auto [t, q] = split_configs(s, c.transfer, c.query);
    std::vector<SplitRow> rows(cases.size());
    parallel_for(static_cast<int>(cases.size()), ctx.CaseWorkers(), [&](int i) {
      const AttackCase& k = cases[i];
      SplitRow& row = rows[i];
      row.case_id = k.id;
      try {
        const PixelImage x_cle = load_png(k.clean_image);
        AttackComponents comp = ctx.ComponentsFor(x_cle.shape());
        QueryConfig qc = q;
        qc.seed = ctx.CaseSeed(k);
        AttackResult r = attack_pipeline(k, x_cle, t, qc, comp);
        row.final_text = r.final_text;
        row.scores =
            response_score(r.final_text, k.targeted_text, ctx.eval_encoders());
        row.linf = linf_distance(r.x_adv, x_cle);
        row.queries = r.total_queries;
      } catch (const std::exception& e) {
        row.error = e.what();
      }
    });
    SplitReport report{s, std::move(rows)};
    for (const auto& r : report.rows) {
      const bool ok = r.error.empty();
      if (!ok) errors.emplace_back(s.Label() + "/" + r.case_id, r.error);
      csv << s.Label() << "," << cmd_detail::CsvText(r.case_id) << ","
          << (ok ? "ok" : "error") << ","
          << (ok ? format_number(r.scores.ensemble) : "") << ","
          << (ok ? format_number(r.linf, 3) : "") << "," << r.queries << ","
          << cmd_detail::CsvText(r.final_text) << "\n";
    }
    summary[s.Label()] = {{"transfer_epsilon", s.transfer_eps},
                          {"query_epsilon", s.query_eps},
                          {"mean_ensemble", report.MeanEnsemble()}};
  }
  write_text_file(dir / "splits.csv", csv.str());
  write_text_file(dir / "summary.json", summary.dump(2) + "\n");
  cmd_detail::WriteErrors(dir, errors);
  out << splits.size() << " splits x " << cases.size() << " cases, "
      << errors.size() << " failed\n";
  return errors.empty() ? 0 : 1;
}

// `sensitivity`: Gaussian noise on x_adv. Reads <adv_dir>/<id>/x_adv.png,
// running the attack first for cases without one.
inline int cmd_sensitivity(const RunConfig& c, std::ostream& out) {
  if (c.sensitivity_trials < 1) {
    throw ConfigError("sensitivity.trials must be >= 1");
  }
  for (double s : c.sensitivity_sigmas) {
    if (s < 0.0) throw ConfigError("sensitivity.sigmas must be >= 0");
  }
  RunContext ctx(c);
  const auto cases = cmd_detail::LoadCases(c);
  const auto dir = cmd_detail::PrepareDir(c, "sensitivity");
  std::vector<SensitivityCurve> curves(cases.size());
  std::vector<std::string> case_errors(cases.size());
  parallel_for(static_cast<int>(cases.size()), ctx.CaseWorkers(), [&](int i) {
    const AttackCase& k = cases[i];
    try {
      const PixelImage x_cle = load_png(k.clean_image);
      AttackComponents comp = ctx.ComponentsFor(x_cle.shape());
      const auto adv_path = c.AdvDir() / k.id / "x_adv.png";
      PixelImage x_adv;
      if (std::filesystem::exists(adv_path)) {
        x_adv = load_png(adv_path);
      } else {
        QueryConfig q = c.query;
        q.seed = ctx.CaseSeed(k);
        x_adv = attack_pipeline(k, x_cle, c.transfer, q, comp).x_adv;
      }
      const auto& encoders = ctx.eval_encoders();
      auto scorer = [&](const std::string& text) {
        return response_score(text, k.targeted_text, encoders).ensemble;
      };
      curves[i] = sensitivity_sweep(x_adv, *comp.victim, scorer,
                                    c.sensitivity_sigmas, c.sensitivity_trials,
                                    ctx.CaseSeed(k), k.prompt(), k.id);
    } catch (const std::exception& e) {
      case_errors[i] = e.what();
    }
  });
  std::ostringstream csv;
  csv << "case_id,noise_sigma,status,mean_score,trials\n";
  std::vector<std::pair<std::string, std::string>> errors;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (!case_errors[i].empty()) {
      errors.emplace_back(cases[i].id, case_errors[i]);
      continue;
    }
    const auto& cv = curves[i];
    for (std::size_t p = 0; p < cv.noise_sigmas.size(); ++p) {
      const bool ok = cv.errors[p].empty();
      if (!ok) errors.emplace_back(cases[i].id, cv.errors[p]);
      csv << cmd_detail::CsvText(cases[i].id) << ","
          << format_number(cv.noise_sigmas[p], 3) << ","
          << (ok ? "ok" : "error") << ","
          << (ok ? format_number(cv.mean_scores[p]) : "") << ","
          << cv.trials_per_point << "\n";
    }
  }
  write_text_file(dir / "sensitivity.csv", csv.str());
  cmd_detail::WriteErrors(dir, errors);
  out << cases.size() << " cases, " << errors.size() << " failed\n";
  return errors.empty() ? 0 : 1;
}

}  // namespace vlmattack
