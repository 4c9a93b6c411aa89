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

// Success rates of transfer-only, query-only and combined attacks on the
// toy world. Used to pick the frozen thresholds of the end-to-end test.

#include <chrono>
#include <cstdio>

#include "CLI11.hpp"
#include "vlmattack/attack.hpp"
#include "vlmattack/toy.hpp"

using namespace vlmattack;

int main(int argc, char** argv) {
  CLI::App app{"toy-world attack calibration"};
  int cases = 100;
  int query_steps = 10;
  int queries = 100;
  ToyWorldOptions opt;
  app.add_option("--cases", cases);
  app.add_option("--query-steps", query_steps);
  app.add_option("--queries", queries);
  app.add_option("--embed-dim", opt.embed_dim);
  app.add_option("--height", opt.shape.height);
  app.add_option("--width", opt.shape.width);
  app.add_option("--surrogate-noise", opt.surrogate_noise);
  app.add_option("--victim-noise", opt.victim_noise);
  app.add_option("--amplitude", opt.target_amplitude);
  app.add_option("--surrogate-offset", opt.surrogate_offset);
  app.add_option("--victim-offset", opt.victim_offset);
  app.add_option("--clean-low", opt.clean_low);
  app.add_option("--clean-high", opt.clean_high);
  CLI11_PARSE(app, argc, argv);

  ToyWorld world(opt);
  auto victim = world.MakeVictim();
  auto provider = world.MakeTargetProvider();
  AttackComponents comp{world.surrogate_image().get(),
                        world.text_encoder().get(), victim.get(),
                        provider.get()};

  TransferConfig transfer;
  QueryConfig query;
  query.steps = query_steps;
  query.queries = queries;

  int ok_combined = 0, ok_transfer = 0, ok_query = 0;
  double mf_combined = 0, mf_transfer = 0, mf_query = 0;
  const auto start = std::chrono::steady_clock::now();
  for (int s = 0; s < cases; ++s) {
    ToyCase tc = make_toy_case(world, *victim, static_cast<std::uint64_t>(s));
    const std::string& want = world.captions()[tc.target_index];
    query.seed = derive_seed(1234, {static_cast<std::uint64_t>(s)});

    AttackResult both = attack_pipeline(tc.attack_case, tc.clean, transfer,
                                        query, comp);
    TransferConfig t0 = transfer;
    t0.steps = 0;
    AttackResult qonly = attack_pipeline(tc.attack_case, tc.clean, t0, query, comp);
    QueryConfig q0 = query;
    q0.steps = 0;
    AttackResult tonly = attack_pipeline(tc.attack_case, tc.clean, transfer, q0, comp);

    ok_combined += both.final_text == want;
    ok_transfer += tonly.final_text == want;
    ok_query += qonly.final_text == want;
    mf_combined += both.final_mf_tt;
    mf_transfer += tonly.final_mf_tt;
    mf_query += qonly.final_mf_tt;
  }
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start)
                          .count();
  std::printf("cases=%d combined=%d transfer=%d query=%d\n", cases, ok_combined,
              ok_transfer, ok_query);
  std::printf("mean mf-tt combined=%.4f transfer=%.4f query=%.4f\n",
              mf_combined / cases, mf_transfer / cases, mf_query / cases);
  std::printf("elapsed %.1fs\n", secs);
  return 0;
}
