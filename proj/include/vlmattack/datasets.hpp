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

// Attack-case manifests and targeted-image providers.
//
// A manifest is JSON lines, one case per line:
//
//   {"id": "case-0", "clean_image": "clean/0.png",
//    "targeted_text": "a photo of a dog",
//    "targeted_image": "targets/dog.png",        (optional)
//    "prompt": "what is the content of this image?"}  (optional)
//
// Paths are relative to the manifest's directory. Blank lines are ignored.

#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vlmattack/imagecore.hpp"
#include "vlmattack/png_io.hpp"
#include "vlmattack/victims.hpp"

namespace vlmattack {

struct AttackCase {
  std::string id;
  // As written in the manifest, and resolved against the manifest directory.
  std::string clean_image_ref;
  std::filesystem::path clean_image;
  std::string targeted_text;
  std::optional<std::string> targeted_image_ref;
  std::optional<std::filesystem::path> targeted_image;
  // Only set when the manifest line carries a prompt.
  std::optional<std::string> prompt_text;

  Prompt prompt() const { return prompt_text ? Prompt(*prompt_text) : Prompt(); }

  bool operator==(const AttackCase&) const = default;
};

namespace manifest_detail {

inline std::string RequireString(const nlohmann::json& j, const char* field,
                                 std::size_t line_no) {
  if (!j.contains(field)) {
    throw Error("manifest line " + std::to_string(line_no) +
                ": missing field '" + field + "'");
  }
  if (!j[field].is_string() || j[field].get<std::string>().empty()) {
    throw Error("manifest line " + std::to_string(line_no) + ": field '" +
                field + "' must be a non-empty string");
  }
  return j[field].get<std::string>();
}

inline bool IsBlank(const std::string& s) {
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

}  // namespace manifest_detail

// Parses manifest text. `base_dir` resolves relative paths; when
// `check_files` is set, every referenced file must exist.
inline std::vector<AttackCase> parse_manifest(std::istream& in,
                                              const std::filesystem::path& base_dir,
                                              bool check_files = true) {
  using manifest_detail::RequireString;
  std::vector<AttackCase> cases;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (manifest_detail::IsBlank(line)) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error("manifest line " + std::to_string(line_no) +
                  ": malformed JSON: " + e.what());
    }
    if (!j.is_object()) {
      throw Error("manifest line " + std::to_string(line_no) +
                  ": expected a JSON object");
    }
    AttackCase c;
    c.id = RequireString(j, "id", line_no);
    c.clean_image_ref = RequireString(j, "clean_image", line_no);
    c.targeted_text = RequireString(j, "targeted_text", line_no);
    if (j.contains("targeted_image") && !j["targeted_image"].is_null()) {
      c.targeted_image_ref = RequireString(j, "targeted_image", line_no);
    }
    if (j.contains("prompt") && !j["prompt"].is_null()) {
      c.prompt_text = RequireString(j, "prompt", line_no);
    }
    if (!seen.insert(c.id).second) {
      throw Error("manifest line " + std::to_string(line_no) +
                  ": duplicate case id '" + c.id + "'");
    }
    c.clean_image = base_dir / c.clean_image_ref;
    if (c.targeted_image_ref) c.targeted_image = base_dir / *c.targeted_image_ref;
    if (check_files) {
      if (!std::filesystem::exists(c.clean_image)) {
        throw Error("case '" + c.id + "': clean image not found: " +
                    c.clean_image.string());
      }
      if (c.targeted_image && !std::filesystem::exists(*c.targeted_image)) {
        throw Error("case '" + c.id + "': targeted image not found: " +
                    c.targeted_image->string());
      }
    }
    cases.push_back(std::move(c));
  }
  return cases;
}

inline std::vector<AttackCase> load_manifest(const std::filesystem::path& path,
                                             bool check_files = true) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  return parse_manifest(in, path.parent_path(), check_files);
}

// One JSON line per case, using the paths as originally written.
inline std::string serialize_manifest(const std::vector<AttackCase>& cases) {
  std::string out;
  for (const auto& c : cases) {
    nlohmann::ordered_json j;
    j["id"] = c.id;
    j["clean_image"] = c.clean_image_ref;
    j["targeted_text"] = c.targeted_text;
    if (c.targeted_image_ref) j["targeted_image"] = *c.targeted_image_ref;
    if (c.prompt_text) j["prompt"] = *c.prompt_text;
    out += j.dump();
    out += '\n';
  }
  return out;
}

// Lowercase; runs of non-alphanumerics become one '-'; leading and trailing
// '-' removed. "A photo of a dog" -> "a-photo-of-a-dog".
inline std::string slug(std::string_view text) {
  std::string out;
  bool pending_dash = false;
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc)) {
      if (pending_dash && !out.empty()) out.push_back('-');
      pending_dash = false;
      out.push_back(static_cast<char>(std::tolower(uc)));
    } else {
      pending_dash = true;
    }
  }
  return out;
}

// Black-box text -> image source for MF-ii anchors.
class TargetImageProvider {
 public:
  virtual ~TargetImageProvider() = default;
  virtual const std::string& name() const = 0;
  virtual PixelImage image_for(const std::string& targeted_text) = 0;
};

// Looks up <dir>/<slug(text)>.png; results are cached per text.
class DirectoryTargetProvider : public TargetImageProvider {
 public:
  explicit DirectoryTargetProvider(std::filesystem::path dir)
      : name_("directory:" + dir.string()), dir_(std::move(dir)) {}

  const std::string& name() const override { return name_; }

  std::filesystem::path PathFor(const std::string& text) const {
    return dir_ / (slug(text) + ".png");
  }

  PixelImage image_for(const std::string& targeted_text) override {
    std::lock_guard<std::mutex> lock(mu_);
    if (auto it = cache_.find(targeted_text); it != cache_.end()) {
      return it->second;
    }
    const auto path = PathFor(targeted_text);
    if (!std::filesystem::exists(path)) {
      throw Error("no targeted image for '" + targeted_text +
                  "': expected file " + path.string());
    }
    PixelImage img = load_png(path);
    cache_.emplace(targeted_text, img);
    return img;
  }

 private:
  std::string name_;
  std::filesystem::path dir_;
  std::mutex mu_;
  std::map<std::string, PixelImage> cache_;
};

// Wraps a text -> image function (e.g. an in-process generator stub).
class CallbackTargetProvider : public TargetImageProvider {
 public:
  using Fn = std::function<PixelImage(const std::string&)>;
  CallbackTargetProvider(std::string name, Fn fn)
      : name_(std::move(name)), fn_(std::move(fn)) {}

  const std::string& name() const override { return name_; }
  PixelImage image_for(const std::string& targeted_text) override {
    std::lock_guard<std::mutex> lock(mu_);
    if (auto it = cache_.find(targeted_text); it != cache_.end()) {
      return it->second;
    }
    PixelImage img = fn_(targeted_text);
    cache_.emplace(targeted_text, img);
    return img;
  }

 private:
  std::string name_;
  Fn fn_;
  std::mutex mu_;
  std::map<std::string, PixelImage> cache_;
};

// An explicit targeted_image on the case wins over the provider.
inline PixelImage resolve_target_image(TargetImageProvider* provider,
                                       const AttackCase& c) {
  if (c.targeted_image) return load_png(*c.targeted_image);
  if (provider == nullptr) {
    throw Error("case '" + c.id +
                "': no targeted_image and no target-image provider configured");
  }
  return provider->image_for(c.targeted_text);
}

}  // namespace vlmattack
