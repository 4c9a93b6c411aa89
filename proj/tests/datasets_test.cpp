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

#include <random>
#include <set>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "vlmattack/datasets.hpp"

namespace vlmattack {
namespace {

class ManifestTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = testing::TempDir("manifest");
    std::filesystem::create_directories(dir_ / "clean");
    std::filesystem::create_directories(dir_ / "targets");
    save_png(PixelImage(ImageShape{2, 2}, 10.0), dir_ / "clean" / "a.png");
    save_png(PixelImage(ImageShape{2, 2}, 200.0), dir_ / "targets" / "t.png");
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::filesystem::path Write(const std::string& text) {
    const auto p = dir_ / "m.jsonl";
    testing::WriteFile(p, text);
    return p;
  }

  std::string ErrorOf(const std::string& text) {
    try {
      load_manifest(Write(text));
    } catch (const Error& e) {
      return e.what();
    }
    return "";
  }

  std::filesystem::path dir_;
};

TEST_F(ManifestTest, EmptyFileGivesNoCases) {
  EXPECT_TRUE(load_manifest(Write("")).empty());
  EXPECT_TRUE(load_manifest(Write("\n  \n")).empty());
}

TEST_F(ManifestTest, MissingFieldNamed) {
  const std::string err =
      ErrorOf(R"({"id": "x", "clean_image": "clean/a.png"})" "\n");
  EXPECT_NE(err.find("targeted_text"), std::string::npos) << err;
  EXPECT_NE(err.find("line 1"), std::string::npos) << err;
}

TEST_F(ManifestTest, MalformedLineReportsLineNumber) {
  const std::string err = ErrorOf(
      R"({"id": "x", "clean_image": "clean/a.png", "targeted_text": "t"})"
      "\n{not json\n");
  EXPECT_NE(err.find("line 2"), std::string::npos) << err;
}

TEST_F(ManifestTest, DuplicateIdRejected) {
  const std::string line =
      R"({"id": "x", "clean_image": "clean/a.png", "targeted_text": "t"})";
  EXPECT_NE(ErrorOf(line + "\n" + line + "\n").find("duplicate"),
            std::string::npos);
}

TEST_F(ManifestTest, MissingFileNamesCase) {
  const std::string err = ErrorOf(
      R"({"id": "case-7", "clean_image": "clean/none.png", "targeted_text": "t"})");
  EXPECT_NE(err.find("case-7"), std::string::npos) << err;
  const std::string err2 = ErrorOf(
      R"({"id": "case-8", "clean_image": "clean/a.png", "targeted_text": "t", "targeted_image": "targets/none.png"})");
  EXPECT_NE(err2.find("case-8"), std::string::npos) << err2;
}

TEST_F(ManifestTest, FiftyLinesFiftyDistinctCases) {
  std::string text;
  for (int i = 0; i < 50; ++i) {
    text += R"({"id": "c)" + std::to_string(i) +
            R"(", "clean_image": "clean/a.png", "targeted_text": "text )" +
            std::to_string(i) + "\"}\n";
  }
  const auto cases = load_manifest(Write(text));
  ASSERT_EQ(cases.size(), 50u);
  std::set<std::string> ids;
  for (const auto& c : cases) {
    ids.insert(c.id);
    EXPECT_EQ(c.clean_image, dir_ / "clean" / "a.png");
    EXPECT_EQ(c.prompt().text(), Prompt().text());
  }
  EXPECT_EQ(ids.size(), 50u);
}

TEST_F(ManifestTest, RoundTripIsIdentity) {
  const std::string text =
      R"({"id": "a", "clean_image": "clean/a.png", "targeted_text": "a dog", "targeted_image": "targets/t.png", "prompt": "what is this?"})"
      "\n"
      R"({"id": "b", "clean_image": "clean/a.png", "targeted_text": "a cat"})"
      "\n";
  const auto first = load_manifest(Write(text));
  ASSERT_EQ(first.size(), 2u);
  EXPECT_EQ(first[0].prompt().text(), "what is this?");
  const auto second = load_manifest(Write(serialize_manifest(first)));
  EXPECT_EQ(first, second);
}

TEST(SlugTest, DocumentedRule) {
  EXPECT_EQ(slug("A photo of a dog"), "a-photo-of-a-dog");
  EXPECT_EQ(slug("  Hello,   World!! "), "hello-world");
  EXPECT_EQ(slug("x--y__z"), "x-y-z");
  EXPECT_EQ(slug("MiXeD 42"), "mixed-42");
}

TEST_F(ManifestTest, ExplicitTargetImageBypassesProvider) {
  const auto cases = load_manifest(Write(
      R"({"id": "a", "clean_image": "clean/a.png", "targeted_text": "a dog", "targeted_image": "targets/t.png"})"));
  int calls = 0;
  CallbackTargetProvider provider("p", [&](const std::string&) {
    ++calls;
    return PixelImage(ImageShape{2, 2}, 0.0);
  });
  EXPECT_EQ(resolve_target_image(&provider, cases[0]),
            PixelImage(ImageShape{2, 2}, 200.0));
  EXPECT_EQ(calls, 0);
}

TEST_F(ManifestTest, DirectoryProviderUsesSlugAndCaches) {
  save_png(PixelImage(ImageShape{2, 2}, 77.0),
           dir_ / "targets" / "a-photo-of-a-dog.png");
  DirectoryTargetProvider provider(dir_ / "targets");
  AttackCase c;
  c.id = "x";
  c.targeted_text = "A photo of a dog";
  const PixelImage first = resolve_target_image(&provider, c);
  EXPECT_EQ(first, PixelImage(ImageShape{2, 2}, 77.0));
  // Cached: removing the file does not change the answer.
  std::filesystem::remove(dir_ / "targets" / "a-photo-of-a-dog.png");
  EXPECT_EQ(resolve_target_image(&provider, c), first);
}

TEST_F(ManifestTest, DirectoryProviderMissingKeyNamesFile) {
  DirectoryTargetProvider provider(dir_ / "targets");
  AttackCase c;
  c.id = "x";
  c.targeted_text = "A red bird";
  try {
    resolve_target_image(&provider, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("a-red-bird.png"), std::string::npos);
  }
  EXPECT_THROW(resolve_target_image(nullptr, c), Error);
}

}  // namespace
}  // namespace vlmattack
