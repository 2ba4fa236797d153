// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

// TOML run configuration: provider endpoints and the tunable constants.
// Precedence is command-line flags, then the config file, then the defaults
// below.

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "tcb/io.hpp"
#include "tcb/providers.hpp"

namespace tcb::config {

struct ProviderConfig {
  // openai | scripted | http | onnx | histogram
  std::string kind{};
  std::string base_url{};
  std::string model{};
  std::string api_key_env{};  // name of the variable holding the key
  int timeout_seconds = 120;
  int max_tokens = 1024;
  std::string script{};      // scripted: response file
  std::string model_path{};  // onnx
  int input_size = 336;      // onnx
  int bins = 4;              // histogram
  int requests_per_minute = 0;
  int max_in_flight = 4;
};

struct Constants {
  double fps = 8.0;
  int frames = 16;
  int replicates = 5;
  double w1 = 2.0 / 3.0;
  double w2 = 1.0 / 3.0;
  double similarity_lo = 0.90;
  double similarity_hi = 0.98;
  int divisive_spread = 3;
  double completion_threshold = 3.66;
  double consistency_floor = 3.6;
  double static_threshold = 1.0;
  int retries = 3;
  int retry_base_ms = 500;
  std::string judge_preamble = "The image shows {n} video frames in temporal order, left to right.";
  std::string judge_suffix = "Answer with Yes or No only.";
};

struct Config {
  ProviderConfig llm{.kind = "openai",
                     .base_url = "https://api.openai.com/v1",
                     .model = "gpt-4",
                     .api_key_env = "TCB_LLM_API_KEY"};
  ProviderConfig vlm{.kind = "openai",
                     .base_url = "https://api.openai.com/v1",
                     .model = "gpt-4o",
                     .api_key_env = "TCB_VLM_API_KEY"};
  ProviderConfig embedding{.kind = "histogram", .api_key_env = "TCB_EMBED_API_KEY"};
  Constants constants;
  std::filesystem::path cache_dir = ".tcb-cache";
  std::optional<std::filesystem::path> source;
};

// Defaults overlaid with `path` when given; TCB_CACHE_DIR overrides the cache
// directory from the file. Throws ValidationError on unknown keys, wrong
// types, or TOML syntax errors (with line and column).
Config load_config(const std::optional<std::filesystem::path>& path);
Config parse_config(std::string_view toml_text, std::string_view source_name = "<string>");

// Effective configuration as JSON; API keys are never included.
Json to_json(const Config& config);

RetryPolicy retry_policy(const Constants& constants);

std::unique_ptr<TextGenerator> make_text_generator(const ProviderConfig& config);
std::unique_ptr<VisionJudge> make_judge(const ProviderConfig& config);
std::unique_ptr<EmbeddingProvider> make_embedder(const ProviderConfig& config);

}  // namespace tcb::config
