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

// Toy-world helper.
//
//   vlmattack-toy make-data --out DIR [--cases N]
//       clean images, rendered target images, manifest.jsonl and config.json
//   vlmattack-toy serve-stdio --config CONFIG
//       toy victim over the line protocol on stdin/stdout
//   vlmattack-toy serve-http --config CONFIG --port PORT
//       toy victim over HTTP at POST /generate

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "CLI11.hpp"
#include "httplib.h"
#include "vlmattack/cli.hpp"
#include "vlmattack/toy.hpp"

using namespace vlmattack;

namespace {

// Builds one toy victim per image shape on first use.
class ShapeDispatchVictim : public VictimOracle {
 public:
  explicit ShapeDispatchVictim(VictimConfig cfg)
      : VictimOracle("toy-server", 64), cfg_(std::move(cfg)) {}

 protected:
  std::string DoGenerate(const PixelImage& x, const Prompt& prompt) override {
    VictimOracle* v;
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto& slot = victims_[{x.shape().height, x.shape().width}];
      if (!slot) slot = make_toy_victim(cfg_, x.shape());
      v = slot.get();
    }
    return v->generate(x, prompt);
  }

 private:
  VictimConfig cfg_;
  std::mutex mu_;
  std::map<std::pair<int, int>, std::unique_ptr<VictimOracle>> victims_;
};

VictimConfig LoadToyVictim(const std::string& path) {
  CliOverrides o;
  o.config = path;
  RunConfig c = load_run_config(o);
  if (c.victim.type != "toy") {
    throw ConfigError("config victim.type must be 'toy' to serve it");
  }
  RunContext check(c);
  return c.victim;
}

int MakeData(const std::filesystem::path& out, int cases) {
  const ToyWorld world;
  auto victim = world.MakeVictim();
  std::filesystem::create_directories(out / "clean");
  std::filesystem::create_directories(out / "targets");
  for (const auto& caption : world.captions()) {
    save_png(world.RenderTarget(caption), out / "targets" / (slug(caption) + ".png"));
  }
  std::vector<AttackCase> manifest;
  for (int i = 0; i < cases; ++i) {
    ToyCase tc = make_toy_case(world, *victim, static_cast<std::uint64_t>(i));
    AttackCase c = tc.attack_case;
    c.clean_image_ref = "clean/" + c.id + ".png";
    save_png(tc.clean, out / c.clean_image_ref);
    manifest.push_back(std::move(c));
  }
  write_text_file(out / "manifest.jsonl", serialize_manifest(manifest));

  nlohmann::ordered_json j = config_to_json(toy_run_config(world.options()));
  j.erase("adv_dir");
  j.erase("query_cap");
  j["manifest"] = "manifest.jsonl";
  j["output_dir"] = "runs";
  j["target_images"] = "targets";
  write_text_file(out / "config.json", j.dump(2) + "\n");
  std::cout << "wrote " << cases << " cases to " << out.string() << "\n";
  return 0;
}

int ServeStdio(const VictimConfig& cfg) {
  ShapeDispatchVictim victim(cfg);
  std::string line;
  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    std::string response;
    try {
      response = handle_victim_request(line, victim);
    } catch (const std::exception& e) {
      nlohmann::json err;
      err["error"] = e.what();
      response = err.dump();
    }
    std::cout << response << "\n" << std::flush;
  }
  return 0;
}

int ServeHttp(const VictimConfig& cfg, const std::string& host, int port) {
  ShapeDispatchVictim victim(cfg);
  httplib::Server server;
  server.Post("/generate", [&](const httplib::Request& req,
                               httplib::Response& res) {
    try {
      res.set_content(handle_victim_request(req.body, victim),
                      "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      nlohmann::json err;
      err["error"] = e.what();
      res.set_content(err.dump(), "application/json");
    }
  });
  std::cerr << "serving toy victim on http://" << host << ":" << port
            << "/generate\n";
  return server.listen(host, port) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"toy world data and victim servers"};
  app.require_subcommand(1);

  std::string out;
  int cases = 20;
  auto* make = app.add_subcommand("make-data", "write a toy dataset");
  make->add_option("--out", out)->required();
  make->add_option("--cases", cases)->check(CLI::NonNegativeNumber);

  std::string config;
  auto* stdio = app.add_subcommand("serve-stdio", "serve the toy victim on stdio");
  stdio->add_option("--config", config)->required();

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* http = app.add_subcommand("serve-http", "serve the toy victim over HTTP");
  http->add_option("--config", config)->required();
  http->add_option("--host", host);
  http->add_option("--port", port);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    if (make->parsed()) return MakeData(out, cases);
    if (stdio->parsed()) return ServeStdio(LoadToyVictim(config));
    if (http->parsed()) return ServeHttp(LoadToyVictim(config), host, port);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
