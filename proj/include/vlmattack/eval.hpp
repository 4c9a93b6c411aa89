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

// Experiment harnesses: epsilon sweeps with a perceptual distance, Gaussian
// noise sensitivity of adversarial images, and CSV/JSON run reports.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vlmattack/attack.hpp"
#include "vlmattack/imagecore.hpp"
#include "vlmattack/rng.hpp"
#include "vlmattack/scores.hpp"
#include "vlmattack/victims.hpp"

namespace vlmattack {

// Distance between a clean and an adversarial image. Learned metrics
// (LPIPS and friends) plug in by implementing this.
class PerceptualDistance {
 public:
  virtual ~PerceptualDistance() = default;
  virtual std::string name() const = 0;
  virtual double distance(const PixelImage& a, const PixelImage& b) const = 0;
};

// mean |a - b| / 255, in [0, 1].
class MeanAbsPixelDistance : public PerceptualDistance {
 public:
  std::string name() const override { return "mean-abs-pixel"; }
  double distance(const PixelImage& a, const PixelImage& b) const override {
    if (a.shape() != b.shape()) throw Error("distance: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / (static_cast<double>(a.size()) * kPixelMax);
  }
};

// ---------------------------------------------------------------------------
// Epsilon sweep.

struct EpsSweepRow {
  double epsilon = 0.0;
  std::string final_text;
  ClipScoreReport scores;
  double distance = 0.0;
  double linf = 0.0;
  std::string error;
};

// Runs the pipeline once per epsilon (both stages use that epsilon) and
// records the score against the targeted text and the distance between the
// clean and adversarial images. A failing epsilon is recorded and skipped.
inline std::vector<EpsSweepRow> eps_sweep(
    const AttackCase& c, const PixelImage& x_cle,
    const std::vector<double>& eps_list, const TransferConfig& tcfg,
    const QueryConfig& qcfg, const AttackComponents& comp,
    const PerceptualDistance& metric,
    const std::vector<std::shared_ptr<const TextEncoder>>& eval_encoders) {
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    if (eps_list[i] < 0.0) throw Error("eps_sweep: epsilon must be >= 0");
    if (i > 0 && eps_list[i] < eps_list[i - 1]) {
      throw Error("eps_sweep: epsilon list must be sorted ascending");
    }
  }
  std::vector<EpsSweepRow> rows;
  for (double eps : eps_list) {
    EpsSweepRow row;
    row.epsilon = eps;
    try {
      TransferConfig t = tcfg;
      QueryConfig q = qcfg;
      t.budget = LinfBudget(eps);
      q.budget = LinfBudget(eps);
      AttackResult r = attack_pipeline(c, x_cle, t, q, comp);
      row.final_text = r.final_text;
      row.scores = response_score(r.final_text, c.targeted_text, eval_encoders);
      row.distance = metric.distance(x_cle, r.x_adv);
      row.linf = linf_distance(x_cle, r.x_adv);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Noise sensitivity.

struct SensitivityCurve {
  std::vector<double> noise_sigmas;
  std::vector<double> mean_scores;
  // Empty when the point succeeded.
  std::vector<std::string> errors;
  int trials_per_point = 0;
  std::uint64_t seed = 0;
};

// x_adv + sigma * N(0, I), clamped to the pixel range. The noise for
// (point, trial) comes from its own counter stream.
inline PixelImage add_gaussian_noise(const PixelImage& x, double sigma,
                                     std::uint64_t stream_seed) {
  if (sigma == 0.0) return x;
  std::vector<double> noise(x.size());
  CounterRng(stream_seed).FillNormal(noise);
  std::vector<double> px(x.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    px[i] = std::clamp(x[i] + sigma * noise[i], kPixelMin, kPixelMax);
  }
  return PixelImage(x.shape(), std::move(px));
}

// For each sigma, averages scorer(victim(noisy x_adv)) over `trials` noisy
// copies. Costs sigmas.size() * trials queries. A victim failure aborts that
// point only; its mean is NaN and the error is recorded.
inline SensitivityCurve sensitivity_sweep(
    const PixelImage& x_adv, VictimOracle& victim,
    const std::function<double(const std::string&)>& scorer,
    const std::vector<double>& sigmas, int trials, std::uint64_t seed,
    const Prompt& prompt = Prompt(), const std::string& case_id = {}) {
  if (trials < 1) throw Error("sensitivity_sweep: trials must be >= 1");
  for (double s : sigmas) {
    if (s < 0.0) throw Error("sensitivity_sweep: noise sigma must be >= 0");
  }
  SensitivityCurve curve;
  curve.noise_sigmas = sigmas;
  curve.trials_per_point = trials;
  curve.seed = seed;
  for (std::size_t p = 0; p < sigmas.size(); ++p) {
    double sum = 0.0;
    std::string error;
    try {
      for (int t = 0; t < trials; ++t) {
        const PixelImage noisy = add_gaussian_noise(
            x_adv, sigmas[p],
            derive_seed(seed, {p, static_cast<std::uint64_t>(t)}));
        sum += scorer(victim.generate(noisy, prompt, case_id));
      }
    } catch (const std::exception& e) {
      error = e.what();
    }
    curve.mean_scores.push_back(error.empty() ? sum / trials
                                              : std::nan(""));
    curve.errors.push_back(std::move(error));
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Reports.

struct CaseReport {
  std::string case_id;
  ClipScoreReport scores;
  std::int64_t query_count = 0;
  double wall_time_seconds = 0.0;
  // Non-empty when the case failed; scores are then meaningless.
  std::string error;
};

inline std::string format_number(double v, int precision = 6) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

namespace report_detail {

inline double Median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double Mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace report_detail

// Writes <dir>/<stem>.csv and <dir>/<stem>_summary.json.
//
// CSV columns: case_id, status (ok|error), one score:<encoder> column per
// evaluation encoder in configuration order, ensemble, query_count,
// wall_time_seconds. Rows are sorted by case id. Failed cases keep their row
// with empty score cells and are excluded from the summary statistics.
inline void emit_report(std::vector<CaseReport> rows,
                        const std::filesystem::path& dir,
                        const std::string& stem = "report") {
  using report_detail::CsvField;
  if (rows.empty()) throw Error("emit_report: no results");
  std::sort(rows.begin(), rows.end(),
            [](const CaseReport& a, const CaseReport& b) {
              return a.case_id < b.case_id;
            });
  std::vector<std::string> encoders;
  for (const auto& r : rows) {
    if (!r.error.empty()) continue;
    for (const auto& [name, _] : r.scores.per_encoder) {
      if (std::find(encoders.begin(), encoders.end(), name) == encoders.end()) {
        encoders.push_back(name);
      }
    }
  }

  std::filesystem::create_directories(dir);
  const auto csv_path = dir / (stem + ".csv");
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw Error("emit_report: cannot write " + csv_path.string());
  csv << "case_id,status";
  for (const auto& e : encoders) csv << "," << CsvField("score:" + e);
  csv << ",ensemble,query_count,wall_time_seconds\n";

  std::map<std::string, std::vector<double>> per_encoder;
  std::vector<double> ensemble, queries;
  int failed = 0;
  for (const auto& r : rows) {
    const bool ok = r.error.empty();
    csv << CsvField(r.case_id) << "," << (ok ? "ok" : "error");
    for (const auto& e : encoders) {
      csv << ",";
      if (ok) {
        const double s = r.scores.ScoreFor(e);
        csv << format_number(s);
        per_encoder[e].push_back(s);
      }
    }
    csv << "," << (ok ? format_number(r.scores.ensemble) : "") << ","
        << r.query_count << "," << format_number(r.wall_time_seconds, 3)
        << "\n";
    if (ok) {
      ensemble.push_back(r.scores.ensemble);
      queries.push_back(static_cast<double>(r.query_count));
    } else {
      ++failed;
    }
  }
  csv.close();
  if (!csv) throw Error("emit_report: failed writing " + csv_path.string());

  nlohmann::ordered_json summary;
  summary["cases"] = rows.size();
  summary["failed"] = failed;
  summary["ensemble"] = {{"mean", report_detail::Mean(ensemble)},
                         {"median", report_detail::Median(ensemble)}};
  nlohmann::ordered_json enc = nlohmann::ordered_json::object();
  for (const auto& e : encoders) {
    enc[e] = {{"mean", report_detail::Mean(per_encoder[e])},
              {"median", report_detail::Median(per_encoder[e])}};
  }
  summary["per_encoder"] = enc;
  summary["query_count"] = {{"mean", report_detail::Mean(queries)},
                            {"median", report_detail::Median(queries)}};
  const auto json_path = dir / (stem + "_summary.json");
  std::ofstream js(json_path, std::ios::binary);
  if (!js) throw Error("emit_report: cannot write " + json_path.string());
  js << summary.dump(2) << "\n";
  js.close();
  if (!js) throw Error("emit_report: failed writing " + json_path.string());
}

}  // namespace vlmattack
