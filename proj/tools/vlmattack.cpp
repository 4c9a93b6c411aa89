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

#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "vlmattack/cli.hpp"

using namespace vlmattack;

namespace {

struct Flags {
  std::string config, manifest, out;
  std::uint64_t seed = 0;
  int workers = 0;
  std::int64_t query_cap = 0;
};

void AddCommonFlags(CLI::App* cmd, Flags* f) {
  cmd->add_option("--config", f->config, "run configuration (JSON)");
  cmd->add_option("--manifest", f->manifest, "attack-case manifest (JSON lines)");
  cmd->add_option("--out", f->out, "output directory");
  cmd->add_option("--seed", f->seed, "run seed");
  cmd->add_option("--workers", f->workers, "parallel cases")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--query-cap", f->query_cap, "per-case victim query cap")
      ->check(CLI::PositiveNumber);
}

CliOverrides ToOverrides(const CLI::App& cmd, const Flags& f) {
  CliOverrides o;
  if (cmd.count("--config")) o.config = f.config;
  if (cmd.count("--manifest")) o.manifest = f.manifest;
  if (cmd.count("--out")) o.output_dir = f.out;
  if (cmd.count("--seed")) o.seed = f.seed;
  if (cmd.count("--workers")) o.workers = f.workers;
  if (cmd.count("--query-cap")) o.query_cap = f.query_cap;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Targeted attacks on black-box vision-language models"};
  app.require_subcommand(1);

  using Command = std::function<int(const RunConfig&, std::ostream&)>;
  const std::map<std::string, std::pair<std::string, Command>> commands = {
      {"attack", {"run the two-stage attack on every case", cmd_attack}},
      {"eval", {"score clean and adversarial victim responses", cmd_eval}},
      {"sweep-eps", {"attack at several perturbation budgets", cmd_sweep_eps}},
      {"split-budget",
       {"divide a fixed budget between transfer and query stages",
        cmd_split_budget}},
      {"sensitivity",
       {"score adversarial images under Gaussian noise", cmd_sensitivity}},
      {"validate", {"check configuration and manifest", cmd_validate}},
  };
  std::map<std::string, Flags> flags;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, entry] : commands) {
    subs[name] = app.add_subcommand(name, entry.first);
    AddCommonFlags(subs[name], &flags[name]);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  for (const auto& [name, entry] : commands) {
    if (!subs[name]->parsed()) continue;
    try {
      const RunConfig cfg = load_run_config(ToOverrides(*subs[name], flags[name]));
      return entry.second(cfg, std::cout);
    } catch (const ConfigError& e) {
      std::cerr << "configuration error: " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 2;
}
