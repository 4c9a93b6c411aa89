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

// Targeted attacks against image-to-text victims.
//
// Stage 1 (transfer): sign-gradient PGD on a white-box surrogate, matching
// the adversarial image's embedding either to the targeted text's embedding
// (MF-it) or to the embedding of an image generated from the targeted text
// (MF-ii).
//
// Stage 2 (query): the victim is a black box, so the gradient of
//   L(x) = g(victim(x; prompt))^T g(c_tar)
// is estimated with random gradient-free sampling
//   grad ~= 1/(N sigma) * sum_n [L(x + sigma d_n) - L(x)] d_n
// and followed by a few sign-PGD steps. One outer step costs exactly N + 1
// victim queries: the baseline L(x) once, plus N perturbed samples.
//
// Every iterate is kept inside the L-infinity ball around the clean image
// and inside the pixel range: delta is clamped to [-eps, eps] first, then
// x_cle + delta to [0, 255].

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "vlmattack/datasets.hpp"
#include "vlmattack/encoders.hpp"
#include "vlmattack/imagecore.hpp"
#include "vlmattack/rng.hpp"
#include "vlmattack/scores.hpp"
#include "vlmattack/victims.hpp"

namespace vlmattack {

enum class TransferObjective { kMfIt, kMfIi };

inline std::string to_string(TransferObjective o) {
  return o == TransferObjective::kMfIt ? "mf-it" : "mf-ii";
}

inline TransferObjective parse_transfer_objective(const std::string& s) {
  if (s == "mf-it" || s == "MF-it") return TransferObjective::kMfIt;
  if (s == "mf-ii" || s == "MF-ii") return TransferObjective::kMfIi;
  throw Error("unknown transfer objective '" + s + "' (expected mf-it or mf-ii)");
}

struct TransferConfig {
  int steps = 100;
  double step_size = 1.0;
  LinfBudget budget{8.0};
  TransferObjective objective = TransferObjective::kMfIi;

  void Validate() const {
    if (steps < 0) throw Error("transfer: steps must be >= 0");
    if (!(step_size > 0.0)) throw Error("transfer: step_size must be > 0");
  }
};

// P(delta) for RGF directions. Both satisfy E[d d^T] = I.
enum class DirectionDistribution {
  kGaussian,  // i.i.d. N(0, 1) per pixel
  kSphere,    // uniform on the sphere of radius sqrt(dim)
};

inline std::string to_string(DirectionDistribution d) {
  return d == DirectionDistribution::kGaussian ? "gaussian" : "sphere";
}

inline DirectionDistribution parse_direction_distribution(const std::string& s) {
  if (s == "gaussian") return DirectionDistribution::kGaussian;
  if (s == "sphere") return DirectionDistribution::kSphere;
  throw Error("unknown perturbation distribution '" + s + "'");
}

struct QueryConfig {
  int steps = 0;  // outer steps; no default is implied
  int queries = 100;
  double sigma = 8.0;
  int inner_pgd_steps = 8;
  double step_size = 1.0;
  LinfBudget budget{8.0};
  DirectionDistribution distribution = DirectionDistribution::kGaussian;
  std::uint64_t seed = 0;
  // Maximum victim queries for one pgd_query call.
  std::optional<std::int64_t> query_cap;
  // Concurrent RGF evaluations; further capped by the victim.
  int workers = 1;

  void Validate() const {
    if (steps < 0) throw Error("query: steps must be >= 0");
    if (queries < 1) throw Error("query: queries (N) must be >= 1");
    if (!(sigma > 0.0)) throw Error("query: sigma must be > 0");
    if (inner_pgd_steps < 0) throw Error("query: inner_pgd_steps must be >= 0");
    if (!(step_size > 0.0)) throw Error("query: step_size must be > 0");
    if (workers < 1) throw Error("query: workers must be >= 1");
    if (query_cap && *query_cap < 0) throw Error("query: query_cap must be >= 0");
  }
};

struct AttackTrace {
  std::vector<double> objective;
  std::vector<double> best_so_far;
  std::int64_t query_count = 0;
  double wall_time_seconds = 0.0;
  bool truncated = false;
  std::int64_t empty_responses = 0;

  void Record(double value) {
    objective.push_back(value);
    const double prev = best_so_far.empty()
                            ? -std::numeric_limits<double>::infinity()
                            : best_so_far.back();
    best_so_far.push_back(std::max(prev, value));
  }
};

// sign with sign(0) = 0.
inline double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// ---------------------------------------------------------------------------
// Transfer objectives.

// f(x)^T g(c_tar), both normalized.
inline double mf_it_objective(const PixelImage& x, const std::string& c_tar,
                              const ImageEncoder& f, const TextEncoder& g) {
  if (f.embed_dim() != g.embed_dim()) {
    throw Error("mf_it_objective: encoder dimension mismatch");
  }
  return dot(normalize(f.encode(x)), normalize(g.encode(c_tar)));
}

// f(x)^T f(target), both normalized.
inline double mf_ii_objective(const PixelImage& x, const PixelImage& target,
                              const ImageEncoder& f) {
  return dot(normalize(f.encode(x)), normalize(f.encode(target)));
}

// What pgd_transfer maximizes: encoder(x)^T target, where `target` is a unit
// embedding and encoder applies its own output normalization.
struct TransferTarget {
  const ImageEncoder* encoder = nullptr;
  EmbeddingVector target;
};

inline TransferTarget make_mf_it_target(const ImageEncoder& f,
                                        const TextEncoder& g,
                                        const std::string& c_tar) {
  if (f.embed_dim() != g.embed_dim()) {
    throw Error("MF-it: image encoder '" + f.name() + "' and text encoder '" +
                g.name() + "' have different embed_dim");
  }
  return {&f, normalize(g.encode(c_tar))};
}

inline TransferTarget make_mf_ii_target(const ImageEncoder& f,
                                        const PixelImage& target_image) {
  return {&f, normalize(f.encode(target_image))};
}

// Sign-gradient ascent on delta, starting from zero. Returns the final
// iterate. Pixels whose unclamped value x_cle + delta lies outside [0, 255]
// get zero gradient, as clamp() has zero derivative there.
inline std::pair<PixelImage, AttackTrace> pgd_transfer(
    const PixelImage& x_cle, const TransferConfig& cfg,
    const TransferTarget& objective) {
  cfg.Validate();
  if (objective.encoder == nullptr) throw Error("pgd_transfer: no encoder");
  if (objective.target.dim() != objective.encoder->embed_dim()) {
    throw Error("pgd_transfer: target dimension mismatch");
  }
  const auto start = std::chrono::steady_clock::now();
  AttackTrace trace;
  const ImageEncoder& f = *objective.encoder;
  Perturbation delta(x_cle.shape(), cfg.budget);
  std::vector<double> raw(x_cle.size());
  PixelImage x_adv = x_cle;
  for (int step = 0; step < cfg.steps; ++step) {
    x_adv = apply_perturbation(x_cle, delta);
    trace.Record(dot(f.encode(x_adv), objective.target));
    const std::vector<double> grad = f.similarity_vjp(x_adv, objective.target);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (!std::isfinite(grad[i])) {
        throw Error("pgd_transfer: non-finite gradient at step " +
                    std::to_string(step) + ", pixel " + std::to_string(i));
      }
      const double unclamped = x_cle[i] + delta[i];
      const bool active = unclamped < kPixelMin || unclamped > kPixelMax;
      raw[i] = delta[i] + (active ? 0.0 : cfg.step_size * sign0(grad[i]));
    }
    delta = project_delta(x_cle.shape(), raw, cfg.budget);
  }
  x_adv = apply_perturbation(x_cle, delta);
  if (cfg.steps > 0) trace.Record(dot(f.encode(x_adv), objective.target));
  trace.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return {std::move(x_adv), std::move(trace)};
}

// ---------------------------------------------------------------------------
// Query objective.

struct MfTtEvaluation {
  double loss = 0.0;
  std::string text;
};

// L(x) = g(victim(x; prompt))^T g(c_tar), normalized. An empty response
// scores 0. Each evaluation is one victim query.
class MfTtLoss {
 public:
  MfTtLoss(VictimOracle& victim, const TextEncoder& g, std::string c_tar,
           Prompt prompt = Prompt(), std::string case_id = {})
      : victim_(&victim),
        g_(&g),
        c_tar_(std::move(c_tar)),
        target_(normalize(g.encode(c_tar_))),
        prompt_(std::move(prompt)),
        case_id_(std::move(case_id)) {}

  MfTtEvaluation Evaluate(const PixelImage& x) const {
    MfTtEvaluation out;
    out.text = victim_->generate(x, prompt_, case_id_);
    if (tokenize(out.text).empty()) {
      empty_responses_.fetch_add(1, std::memory_order_relaxed);
      out.loss = 0.0;
    } else {
      out.loss = dot(normalize(g_->encode(out.text)), target_);
    }
    return out;
  }

  double operator()(const PixelImage& x) const { return Evaluate(x).loss; }

  VictimOracle& victim() const { return *victim_; }
  const std::string& targeted_text() const { return c_tar_; }
  std::int64_t empty_responses() const { return empty_responses_.load(); }

 private:
  VictimOracle* victim_;
  const TextEncoder* g_;
  std::string c_tar_;
  EmbeddingVector target_;
  Prompt prompt_;
  std::string case_id_;
  mutable std::atomic<std::int64_t> empty_responses_{0};
};

inline double mf_tt_loss(const PixelImage& x, VictimOracle& v,
                         const TextEncoder& g, const std::string& c_tar,
                         const Prompt& prompt) {
  return MfTtLoss(v, g, c_tar, prompt)(x);
}

// ---------------------------------------------------------------------------
// Random gradient-free estimation.

using LossFn = std::function<double(const PixelImage&)>;

// Direction d_n for outer step `step`, sample `n`. Depends only on
// (seed, step, n), so estimates do not depend on evaluation order.
inline void rgf_direction(const QueryConfig& cfg, std::uint64_t step,
                          std::uint64_t n, std::span<double> out) {
  CounterRng(derive_seed(cfg.seed, {step, n})).FillNormal(out);
  if (cfg.distribution == DirectionDistribution::kSphere) {
    double norm = 0.0;
    for (double v : out) norm += v * v;
    norm = std::sqrt(norm);
    const double scale = std::sqrt(static_cast<double>(out.size())) / norm;
    for (double& v : out) v *= scale;
  }
}

inline PixelImage rgf_sample_point(const PixelImage& x, double sigma,
                                   std::span<const double> direction) {
  std::vector<double> px(x.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    px[i] = std::clamp(x[i] + sigma * direction[i], kPixelMin, kPixelMax);
  }
  return PixelImage(x.shape(), std::move(px));
}

// Runs fn(n) for n in [0, count) on up to `workers` threads.
inline void parallel_for(int count, int workers,
                         const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int n = 0; n < count; ++n) fn(n);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (int n = next++; n < count; n = next++) {
        try {
          fn(n);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

// (1 / (N sigma)) * sum_n [loss(x + sigma d_n) - loss(x)] d_n.
//
// Perturbed points are clamped to the pixel range before evaluation. When
// `baseline` is given it is used as loss(x), otherwise loss(x) is evaluated
// once, for N + 1 evaluations in total. Samples are summed in index order
// whatever the number of workers.
inline std::vector<double> rgf_estimate(const LossFn& loss, const PixelImage& x,
                                        const QueryConfig& cfg,
                                        std::uint64_t step = 0,
                                        std::optional<double> baseline = {},
                                        int workers = 1) {
  if (!(cfg.sigma > 0.0)) throw Error("rgf_estimate: sigma must be > 0");
  if (cfg.queries < 1) throw Error("rgf_estimate: N must be >= 1");
  const double l0 = baseline ? *baseline : loss(x);
  const int n_samples = cfg.queries;
  const double scale = 1.0 / (static_cast<double>(n_samples) * cfg.sigma);
  std::vector<double> grad(x.size(), 0.0);
  std::vector<double> direction(x.size());

  if (workers <= 1) {
    for (int n = 0; n < n_samples; ++n) {
      rgf_direction(cfg, step, static_cast<std::uint64_t>(n), direction);
      const double diff = loss(rgf_sample_point(x, cfg.sigma, direction)) - l0;
      if (diff == 0.0) continue;
      const double w = diff * scale;
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += w * direction[i];
    }
    return grad;
  }

  std::vector<double> diffs(n_samples);
  parallel_for(n_samples, workers, [&](int n) {
    std::vector<double> d(x.size());
    rgf_direction(cfg, step, static_cast<std::uint64_t>(n), d);
    diffs[n] = loss(rgf_sample_point(x, cfg.sigma, d)) - l0;
  });
  for (int n = 0; n < n_samples; ++n) {
    if (diffs[n] == 0.0) continue;
    rgf_direction(cfg, step, static_cast<std::uint64_t>(n), direction);
    const double w = diffs[n] * scale;
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += w * direction[i];
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Query attack.

struct QueryOutcome {
  PixelImage x_adv;
  AttackTrace trace;
  // Victim response at x_adv; empty when no query was made.
  std::optional<std::string> final_text;
  double final_loss = 0.0;
};

// Zero-order PGD starting at x_init. Each outer step queries the baseline,
// estimates the gradient from N samples, then takes inner_pgd_steps sign
// steps. Returns the evaluated iterate with the highest loss (earliest on
// ties). Feasibility is with respect to cfg.budget around x_cle.
inline QueryOutcome pgd_query(const PixelImage& x_init, const PixelImage& x_cle,
                              const QueryConfig& cfg, const MfTtLoss& loss) {
  cfg.Validate();
  if (x_init.shape() != x_cle.shape()) {
    throw Error("pgd_query: x_init and x_cle shapes differ");
  }
  const double eps = cfg.budget.epsilon();
  if (linf_distance(x_init, x_cle) > eps + 1e-9) {
    throw Error("pgd_query: x_init lies outside the budget around x_cle");
  }
  const auto start = std::chrono::steady_clock::now();
  const std::int64_t per_step = static_cast<std::int64_t>(cfg.queries) + 1;
  const int workers = std::min(cfg.workers, loss.victim().max_concurrency());
  const LossFn loss_fn = [&loss](const PixelImage& x) { return loss(x); };
  const std::int64_t empty_before = loss.empty_responses();

  QueryOutcome out;
  out.x_adv = x_init;
  Perturbation delta = delta_between(x_init, x_cle, cfg.budget);
  PixelImage x = x_init;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> raw(x.size());

  for (int step = 0; step < cfg.steps; ++step) {
    if (cfg.query_cap && out.trace.query_count + per_step > *cfg.query_cap) {
      out.trace.truncated = true;
      break;
    }
    const MfTtEvaluation base = loss.Evaluate(x);
    out.trace.Record(base.loss);
    if (base.loss > best) {
      best = base.loss;
      out.x_adv = x;
      out.final_text = base.text;
      out.final_loss = base.loss;
    }
    const std::vector<double> grad =
        rgf_estimate(loss_fn, x, cfg, static_cast<std::uint64_t>(step),
                     base.loss, workers);
    out.trace.query_count += per_step;
    for (int k = 0; k < cfg.inner_pgd_steps; ++k) {
      for (std::size_t i = 0; i < raw.size(); ++i) {
        raw[i] = delta[i] + cfg.step_size * sign0(grad[i]);
      }
      delta = project_delta(x.shape(), raw, cfg.budget);
    }
    x = apply_perturbation(x_cle, delta);
  }
  out.trace.empty_responses = loss.empty_responses() - empty_before;
  out.trace.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return out;
}

// ---------------------------------------------------------------------------
// Two-stage pipeline.

// Models and services one attack run needs. Non-owning.
struct AttackComponents {
  const ImageEncoder* surrogate_image = nullptr;
  const TextEncoder* surrogate_text = nullptr;
  VictimOracle* victim = nullptr;
  TargetImageProvider* target_provider = nullptr;
};

struct AttackResult {
  std::string case_id;
  PixelImage x_cle;
  PixelImage x_trans;
  PixelImage x_adv;
  AttackTrace transfer_trace;
  AttackTrace query_trace;
  std::string final_text;
  // g(final_text)^T g(c_tar) under the surrogate text encoder.
  double final_mf_tt = 0.0;
  std::uint64_t query_seed = 0;
  std::int64_t total_queries = 0;
  double wall_time_seconds = 0.0;
};

// Transfer stage then query stage initialized at the transfer output.
// When the query stage is disabled (steps == 0) one extra query fetches the
// final response; otherwise the response recorded for the returned iterate
// is reused and the case costs exactly steps * (N + 1) queries.
inline AttackResult attack_pipeline(const AttackCase& c, const PixelImage& x_cle,
                                    const TransferConfig& tcfg,
                                    const QueryConfig& qcfg,
                                    const AttackComponents& comp) {
  tcfg.Validate();
  qcfg.Validate();
  if (comp.victim == nullptr) throw Error("attack_pipeline: no victim");
  if (comp.surrogate_text == nullptr) {
    throw Error("attack_pipeline: no surrogate text encoder");
  }
  const auto start = std::chrono::steady_clock::now();
  AttackResult result;
  result.case_id = c.id;
  result.x_cle = x_cle;
  result.query_seed = qcfg.seed;
  const std::int64_t queries_before =
      comp.victim->read_ledger().QueriesFor(c.id);

  if (tcfg.steps > 0) {
    if (comp.surrogate_image == nullptr) {
      throw Error("attack_pipeline: no surrogate image encoder");
    }
    TransferTarget target;
    if (tcfg.objective == TransferObjective::kMfIi) {
      const PixelImage target_image =
          resolve_target_image(comp.target_provider, c);
      target = make_mf_ii_target(*comp.surrogate_image, target_image);
    } else {
      target = make_mf_it_target(*comp.surrogate_image, *comp.surrogate_text,
                                 c.targeted_text);
    }
    auto [x_trans, trace] = pgd_transfer(x_cle, tcfg, target);
    result.x_trans = std::move(x_trans);
    result.transfer_trace = std::move(trace);
  } else {
    result.x_trans = x_cle;
  }

  const MfTtLoss loss(*comp.victim, *comp.surrogate_text, c.targeted_text,
                      c.prompt(), c.id);
  QueryOutcome q = pgd_query(result.x_trans, x_cle, qcfg, loss);
  result.x_adv = std::move(q.x_adv);
  result.query_trace = std::move(q.trace);
  if (q.final_text) {
    result.final_text = *q.final_text;
    result.final_mf_tt = q.final_loss;
  } else {
    const MfTtEvaluation e = loss.Evaluate(result.x_adv);
    result.final_text = e.text;
    result.final_mf_tt = e.loss;
  }
  result.total_queries =
      comp.victim->read_ledger().QueriesFor(c.id) - queries_before;
  result.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return result;
}

// ---------------------------------------------------------------------------
// Fixed total budget split between the stages ("t<eps_t>-q<eps_q>").

struct BudgetSplit {
  double transfer_eps = 0.0;
  double query_eps = 0.0;
  double total_eps = 8.0;

  std::string Label() const {
    auto fmt = [](double v) {
      std::string s = std::to_string(v);
      s.erase(s.find_last_not_of('0') + 1);
      if (!s.empty() && s.back() == '.') s.pop_back();
      return s;
    };
    return "t" + fmt(transfer_eps) + "-q" + fmt(query_eps);
  }

  void Validate() const {
    if (transfer_eps < 0.0 || query_eps < 0.0) {
      throw Error("budget split: sub-budgets must be non-negative");
    }
    if (std::abs(transfer_eps + query_eps - total_eps) > 1e-9) {
      throw Error("budget split " + Label() + " does not sum to total epsilon " +
                  std::to_string(total_eps));
    }
  }
};

// Stage configs for one split: the transfer stage clamps delta to eps_t; the
// query stage clamps the cumulative delta to min(eps_t + eps_q, total). A
// zero sub-budget disables its stage.
inline std::pair<TransferConfig, QueryConfig> split_configs(
    const BudgetSplit& split, TransferConfig tcfg, QueryConfig qcfg) {
  split.Validate();
  tcfg.budget = LinfBudget(split.transfer_eps);
  qcfg.budget = LinfBudget(
      std::min(split.transfer_eps + split.query_eps, split.total_eps));
  if (split.transfer_eps == 0.0) tcfg.steps = 0;
  if (split.query_eps == 0.0) qcfg.steps = 0;
  return {tcfg, qcfg};
}

struct SplitRow {
  std::string case_id;
  std::string final_text;
  ClipScoreReport scores;
  double linf = 0.0;
  std::int64_t queries = 0;
  std::string error;
};

struct SplitReport {
  BudgetSplit split;
  std::vector<SplitRow> rows;

  double MeanEnsemble() const {
    double s = 0.0;
    int n = 0;
    for (const auto& r : rows) {
      if (!r.error.empty()) continue;
      s += r.scores.ensemble;
      ++n;
    }
    return n == 0 ? 0.0 : s / n;
  }
};

// Runs the pipeline under one split for every case. Per-case failures are
// recorded and the run continues.
inline SplitReport budget_split_run(
    const BudgetSplit& split, const std::vector<AttackCase>& cases,
    const std::function<PixelImage(const AttackCase&)>& load_clean,
    const TransferConfig& tcfg, const QueryConfig& qcfg,
    const AttackComponents& comp,
    const std::vector<std::shared_ptr<const TextEncoder>>& eval_encoders,
    const std::function<std::uint64_t(const AttackCase&)>& case_seed = {}) {
  const auto [t, q] = split_configs(split, tcfg, qcfg);
  SplitReport report;
  report.split = split;
  for (const auto& c : cases) {
    SplitRow row;
    row.case_id = c.id;
    try {
      QueryConfig qc = q;
      if (case_seed) qc.seed = case_seed(c);
      const PixelImage x_cle = load_clean(c);
      AttackResult r = attack_pipeline(c, x_cle, t, qc, comp);
      row.final_text = r.final_text;
      row.scores = response_score(r.final_text, c.targeted_text, eval_encoders);
      row.linf = linf_distance(r.x_adv, x_cle);
      row.queries = r.total_queries;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace vlmattack
