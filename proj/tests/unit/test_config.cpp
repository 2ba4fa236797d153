// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>

#include "tcb/config.hpp"
#include "toy.hpp"

namespace tcb::config {
namespace {

using testing::TempDir;

TEST(Config, DefaultsMatchTheProtocol) {
  const auto c = parse_config("");
  EXPECT_EQ(c.constants.fps, 8.0);
  EXPECT_EQ(c.constants.frames, 16);
  EXPECT_EQ(c.constants.replicates, 5);
  EXPECT_DOUBLE_EQ(c.constants.w1, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(c.constants.similarity_lo, 0.90);
  EXPECT_DOUBLE_EQ(c.constants.similarity_hi, 0.98);
  EXPECT_DOUBLE_EQ(c.constants.completion_threshold, 3.66);
  EXPECT_EQ(c.llm.model, "gpt-4");
  EXPECT_EQ(c.vlm.model, "gpt-4o");
  EXPECT_EQ(c.embedding.kind, "histogram");
}

TEST(Config, OverridesAndTypeChecks) {
  const auto c = parse_config(R"(
[providers.vlm]
kind = "openai"
model = "local-vlm"
base_url = "http://localhost:9000/v1"
max_in_flight = 8

[constants]
fps = 4
frames = 8
w1 = 0.5
w2 = 0.5
)");
  EXPECT_EQ(c.vlm.model, "local-vlm");
  EXPECT_EQ(c.vlm.max_in_flight, 8);
  EXPECT_EQ(c.constants.fps, 4.0);
  EXPECT_EQ(c.constants.frames, 8);
  EXPECT_THROW(parse_config("[constants]\nframes = \"x\"\n"), ValidationError);
  EXPECT_THROW(parse_config("[constants]\nframez = 3\n"), ValidationError);
  EXPECT_THROW(parse_config("[surprise]\n"), ValidationError);
  EXPECT_THROW(parse_config("[providers.llm\n"), ValidationError);
}

TEST(Config, LoadResolvesRelativeScriptsAndEchoes) {
  TempDir dir;
  write_file_atomic(dir / "sub" / "tcb.toml",
                    "[providers.llm]\nkind = \"scripted\"\nscript = \"llm.json\"\n"
                    "[paths]\ncache_dir = \"/tmp/tcb-cache-x\"\n");
  ::unsetenv("TCB_CACHE_DIR");
  const auto c = load_config(dir / "sub" / "tcb.toml");
  EXPECT_EQ(std::filesystem::path(c.llm.script), (dir / "sub" / "llm.json").lexically_normal());
  const auto echo = to_json(c);
  EXPECT_EQ(echo["source"], (dir / "sub" / "tcb.toml").string());
  EXPECT_EQ(echo["cache_dir"], "/tmp/tcb-cache-x");
  EXPECT_EQ(echo["providers"]["llm"]["script"], c.llm.script);
  EXPECT_EQ(echo["constants"]["frames"], 16);

  ::setenv("TCB_CACHE_DIR", "/tmp/override", 1);
  EXPECT_EQ(load_config(dir / "sub" / "tcb.toml").cache_dir, "/tmp/override");
  ::unsetenv("TCB_CACHE_DIR");
  EXPECT_EQ(to_json(load_config(std::nullopt))["source"], "<defaults>");
  EXPECT_THROW(load_config(dir / "missing.toml"), ValidationError);
}

TEST(Config, ProviderFactories) {
  ProviderConfig scripted{.kind = "scripted"};
  EXPECT_THROW(make_text_generator(scripted), ValidationError);
  EXPECT_THROW(make_judge(ProviderConfig{.kind = "carrier-pigeon"}), ValidationError);
  EXPECT_EQ(make_embedder(ProviderConfig{.kind = "histogram", .bins = 3})->fingerprint(),
            "histogram:3");
  EXPECT_THROW(make_embedder(ProviderConfig{.kind = "onnx", .model_path = "/nope.onnx"}),
               ValidationError);
  EXPECT_EQ(make_judge(Config{}.vlm)->model_name(), "gpt-4o");
}

TEST(Config, RetryPolicyFromConstants) {
  Constants k;
  k.retries = 5;
  k.retry_base_ms = 20;
  const auto p = retry_policy(k);
  EXPECT_EQ(p.attempts, 5);
  EXPECT_EQ(p.base_delay.count(), 20);
}

}  // namespace
}  // namespace tcb::config
