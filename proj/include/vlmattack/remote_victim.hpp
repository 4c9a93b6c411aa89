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

// Out-of-process victims speaking the JSON victim protocol:
//
//   request:  {"image": "<base64 PNG bytes>", "prompt": "<text>"}
//   response: {"text": "<generated text>"}
//
// HttpVictim POSTs the request to an endpoint URL; transport failures and
// non-2xx responses are retried 3 times with exponential backoff before an
// error is raised. SubprocessVictim writes one request per line to a child
// process's stdin and reads one response per line from its stdout.
//
// The served model is expected to decode deterministically (greedy or
// fixed-seed sampling); otherwise query attacks see a noisy objective.

#pragma once

#include <fcntl.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <utility>

#include "httplib.h"
#include "json.hpp"
#include "vlmattack/base64.hpp"
#include "vlmattack/png_io.hpp"
#include "vlmattack/victims.hpp"

namespace vlmattack {

inline std::string make_victim_request(const PixelImage& x,
                                       const Prompt& prompt) {
  const auto png = encode_png(x);
  nlohmann::json j;
  j["image"] = base64_encode(png);
  j["prompt"] = prompt.text();
  return j.dump();
}

inline std::string parse_victim_response(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("victim response is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
    throw Error("victim response lacks a string 'text' field");
  }
  return j["text"].get<std::string>();
}

// Server side of the protocol: decodes a request body, runs `victim`, and
// returns the response body.
inline std::string handle_victim_request(std::string_view body,
                                         VictimOracle& victim) {
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("victim request is not JSON: ") + e.what());
  }
  if (!req.is_object() || !req.contains("image") || !req["image"].is_string()) {
    throw Error("victim request lacks a string 'image' field");
  }
  if (!req.contains("prompt") || !req["prompt"].is_string()) {
    throw Error("victim request lacks a string 'prompt' field");
  }
  const PixelImage x =
      decode_png(base64_decode(req["image"].get<std::string>()));
  nlohmann::json resp;
  resp["text"] = victim.generate(x, Prompt(req["prompt"].get<std::string>()));
  return resp.dump();
}

struct HttpVictimOptions {
  std::string endpoint;  // e.g. http://127.0.0.1:8080/generate
  int max_concurrency = 1;
  int retries = 3;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::seconds timeout{120};
};

class HttpVictim : public VictimOracle {
 public:
  explicit HttpVictim(HttpVictimOptions opt, std::string name = "http")
      : VictimOracle(std::move(name), opt.max_concurrency),
        options_(std::move(opt)) {
    SplitEndpoint(options_.endpoint, &base_, &path_);
  }

  const HttpVictimOptions& options() const { return options_; }

 protected:
  std::string DoGenerate(const PixelImage& x, const Prompt& prompt) override {
    const std::string body = make_victim_request(x, prompt);
    std::string last_error;
    auto backoff = options_.initial_backoff;
    for (int attempt = 0; attempt <= options_.retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
      httplib::Client client(base_);
      client.set_connection_timeout(options_.timeout);
      client.set_read_timeout(options_.timeout);
      client.set_write_timeout(options_.timeout);
      auto res = client.Post(path_, body, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status < 200 || res->status >= 300) {
        last_error = "HTTP status " + std::to_string(res->status);
        continue;
      }
      return parse_victim_response(res->body);
    }
    throw Error(name() + ": request to " + options_.endpoint + " failed after " +
                std::to_string(options_.retries) + " retries: " + last_error);
  }

 private:
  static void SplitEndpoint(const std::string& url, std::string* base,
                            std::string* path) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) {
      throw Error("victim endpoint '" + url + "' must include a scheme");
    }
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) {
      *base = url;
      *path = "/";
    } else {
      *base = url.substr(0, slash);
      *path = url.substr(slash);
    }
  }

  HttpVictimOptions options_;
  std::string base_;
  std::string path_;
};

// Child process running `/bin/sh -c command`, one JSON request per line.
class SubprocessVictim : public VictimOracle {
 public:
  explicit SubprocessVictim(const std::string& command,
                            std::string name = "subprocess")
      : VictimOracle(std::move(name), 1) {
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0) {
      throw Error(this->name() + ": pipe() failed");
    }
    pid_ = fork();
    if (pid_ < 0) throw Error(this->name() + ": fork() failed");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    in_ = fdopen(to_child[1], "w");
    out_ = fdopen(from_child[0], "r");
    if (in_ == nullptr || out_ == nullptr) {
      throw Error(this->name() + ": fdopen() failed");
    }
  }

  ~SubprocessVictim() override {
    if (in_ != nullptr) std::fclose(in_);
    if (out_ != nullptr) std::fclose(out_);
    if (pid_ > 0) {
      int status = 0;
      waitpid(pid_, &status, 0);
    }
  }

 protected:
  std::string DoGenerate(const PixelImage& x, const Prompt& prompt) override {
    const std::string line = make_victim_request(x, prompt) + "\n";
    std::lock_guard<std::mutex> lock(mu_);
    // A dead child must not kill us with SIGPIPE.
    struct sigaction ignore {};
    struct sigaction previous {};
    ignore.sa_handler = SIG_IGN;
    sigaction(SIGPIPE, &ignore, &previous);
    const bool wrote =
        std::fwrite(line.data(), 1, line.size(), in_) == line.size() &&
        std::fflush(in_) == 0;
    sigaction(SIGPIPE, &previous, nullptr);
    if (!wrote) throw Error(name() + ": failed to write request to child");
    std::string response;
    int c;
    while ((c = std::fgetc(out_)) != EOF && c != '\n') {
      response.push_back(static_cast<char>(c));
    }
    if (c == EOF && response.empty()) {
      throw Error(name() + ": child process closed its output");
    }
    return parse_victim_response(response);
  }

 private:
  std::mutex mu_;
  pid_t pid_ = -1;
  FILE* in_ = nullptr;
  FILE* out_ = nullptr;
};

}  // namespace vlmattack
