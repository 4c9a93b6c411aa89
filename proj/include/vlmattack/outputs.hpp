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

// Per-case output directory of an attack run:
//
//   x_adv.png     final adversarial image
//   x_trans.png   transfer-stage output
//   trace.json    per-step objective values, query counts, timings
//   result.json   final response, scores, config echo, seeds
//
// result.json holds no timings, so identical runs write identical bytes.

#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "vlmattack/attack.hpp"
#include "vlmattack/png_io.hpp"
#include "vlmattack/scores.hpp"

namespace vlmattack {

inline nlohmann::ordered_json trace_to_json(const AttackTrace& t) {
  nlohmann::ordered_json j;
  j["objective"] = t.objective;
  j["best_so_far"] = t.best_so_far;
  j["query_count"] = t.query_count;
  j["truncated"] = t.truncated;
  j["empty_responses"] = t.empty_responses;
  j["wall_time_seconds"] = t.wall_time_seconds;
  return j;
}

inline nlohmann::ordered_json scores_to_json(const ClipScoreReport& s) {
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& [name, v] : s.per_encoder) per[name] = v;
  nlohmann::ordered_json j;
  j["per_encoder"] = per;
  j["ensemble"] = s.ensemble;
  return j;
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  out.close();
  if (!out) throw Error("failed writing " + path.string());
}

inline void write_attack_outputs(const AttackResult& r,
                                 const AttackCase& c,
                                 const ClipScoreReport& scores,
                                 const nlohmann::ordered_json& config_echo,
                                 const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_png(r.x_adv, dir / "x_adv.png");
  save_png(r.x_trans, dir / "x_trans.png");

  nlohmann::ordered_json trace;
  trace["case_id"] = r.case_id;
  trace["transfer"] = trace_to_json(r.transfer_trace);
  trace["query"] = trace_to_json(r.query_trace);
  trace["total_queries"] = r.total_queries;
  trace["wall_time_seconds"] = r.wall_time_seconds;
  write_text_file(dir / "trace.json", trace.dump(2) + "\n");

  nlohmann::ordered_json result;
  result["case_id"] = r.case_id;
  result["targeted_text"] = c.targeted_text;
  result["prompt"] = c.prompt().text();
  result["final_text"] = r.final_text;
  result["final_mf_tt"] = r.final_mf_tt;
  result["scores"] = scores_to_json(scores);
  result["linf"] = linf_distance(r.x_adv, r.x_cle);
  result["total_queries"] = r.total_queries;
  result["query_truncated"] = r.query_trace.truncated;
  result["seeds"] = {{"query", r.query_seed}};
  result["config"] = config_echo;
  write_text_file(dir / "result.json", result.dump(2) + "\n");
}

}  // namespace vlmattack
