// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

// Model clients: text generation, vision-language judging, and embeddings.
// Each has an HTTP implementation and a scripted implementation for offline
// runs and tests.

#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "tcb/error.hpp"
#include "tcb/io.hpp"
#include "tcb/video_io.hpp"

namespace tcb {

struct ChatRequest {
  std::string system;
  std::string user;
  std::vector<std::vector<std::uint8_t>> png_images;
  double temperature = 0.0;
};

class TextGenerator {
 public:
  virtual ~TextGenerator() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
  virtual std::string model_name() const = 0;
};

class VisionJudge {
 public:
  virtual ~VisionJudge() = default;
  virtual std::string ask(std::span<const std::uint8_t> png, const std::string& prompt) = 0;
  virtual std::string model_name() const = 0;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<float> embed_image(const video::Image& image) = 0;
  virtual std::vector<float> embed_text(const std::string& text) = 0;
  // Identifies model + preprocessing; embeddings are only comparable within
  // one fingerprint.
  virtual std::string fingerprint() const = 0;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds base_delay{500};
};

// Runs `fn`, retrying on any exception with exponential backoff. Throws
// ProviderError carrying the attempt count once attempts are exhausted.
template <typename Fn>
auto with_retries(const RetryPolicy& policy, std::string_view what, Fn&& fn) -> decltype(fn()) {
  std::string last_error;
  const int attempts = policy.attempts < 1 ? 1 : policy.attempts;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    try {
      return fn();
    } catch (const std::exception& e) {
      last_error = e.what();
    }
    if (attempt < attempts && policy.base_delay.count() > 0) {
      std::this_thread::sleep_for(policy.base_delay * (1 << (attempt - 1)));
    }
  }
  throw ProviderError(std::string(what) + " failed: " + last_error, attempts);
}

// Spaces out calls so that at most `per_minute` start in any minute.
// per_minute = 0 disables limiting.
class RateLimiter {
 public:
  explicit RateLimiter(int per_minute = 0);
  void acquire();

 private:
  std::chrono::steady_clock::duration interval_{};
  std::chrono::steady_clock::time_point next_{};
  std::mutex mutex_;
};

struct EndpointConfig {
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string model;
  std::string api_key;
  int timeout_seconds = 120;
  int max_tokens = 1024;
};

// Reads `env_var` if set, otherwise returns `fallback`.
std::string api_key_from_env(const char* env_var, std::string fallback = {});

// OpenAI-compatible chat completion endpoint (POST {base_url}/chat/completions).
// Images are sent as base64 PNG data URLs in content parts.
class OpenAIChatClient final : public TextGenerator, public VisionJudge {
 public:
  explicit OpenAIChatClient(EndpointConfig config);

  std::string complete(const ChatRequest& request) override;
  std::string ask(std::span<const std::uint8_t> png, const std::string& prompt) override;
  std::string model_name() const override { return config_.model; }

  static Json build_body(const EndpointConfig& config, const ChatRequest& request);
  static std::string extract_content(const Json& response);

 private:
  EndpointConfig config_;
};

// Embedding endpoint (POST {base_url}/embeddings). Text inputs are sent as
// strings, images as "data:image/png;base64,..." strings; the response uses
// the {"data": [{"embedding": [...]}]} shape.
class HttpEmbeddingClient final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingClient(EndpointConfig config);

  std::vector<float> embed_image(const video::Image& image) override;
  std::vector<float> embed_text(const std::string& text) override;
  std::string fingerprint() const override { return "http:" + config_.model; }

 private:
  std::vector<float> post(const std::string& input);
  EndpointConfig config_;
};

// Local image encoder: an ONNX export of a vision tower run through the
// OpenCV DNN runtime, with CLIP-style preprocessing (shortest-side bicubic
// resize, center crop, per-channel normalization).
struct OnnxEncoderConfig {
  std::filesystem::path model_path;
  int input_size = 336;
  std::array<float, 3> mean{0.48145466F, 0.4578275F, 0.40821073F};
  std::array<float, 3> stddev{0.26862954F, 0.26130258F, 0.27577711F};
};

class OnnxImageEncoder final : public EmbeddingProvider {
 public:
  explicit OnnxImageEncoder(OnnxEncoderConfig config);
  ~OnnxImageEncoder() override;

  std::vector<float> embed_image(const video::Image& image) override;
  // Text encoding needs a separate text tower; always throws ProviderError.
  std::vector<float> embed_text(const std::string& text) override;
  std::string fingerprint() const override { return fingerprint_; }

 private:
  struct Impl;
  OnnxEncoderConfig config_;
  std::string fingerprint_;
  std::unique_ptr<Impl> impl_;
  std::mutex mutex_;
};

// Replays canned completions keyed by the exact user message. Unknown
// messages raise ProviderError.
class ScriptedTextGenerator final : public TextGenerator {
 public:
  explicit ScriptedTextGenerator(std::map<std::string, std::string> responses,
                                 std::string model = "scripted-llm");
  static std::unique_ptr<ScriptedTextGenerator> from_file(const std::filesystem::path& path);

  std::string complete(const ChatRequest& request) override;
  std::string model_name() const override { return model_; }
  std::size_t calls() const;

 private:
  std::map<std::string, std::string> responses_;
  std::string model_;
  mutable std::mutex mutex_;
  std::size_t calls_ = 0;
};

// Answers judge prompts by rules: the first rule whose `contains` is a
// substring of the prompt wins; otherwise `default_answer`.
class ScriptedJudge final : public VisionJudge {
 public:
  struct Rule {
    std::string contains;
    std::string answer;
  };

  ScriptedJudge(std::vector<Rule> rules, std::string default_answer = "No",
                std::string model = "scripted-vlm");
  static std::unique_ptr<ScriptedJudge> from_file(const std::filesystem::path& path);

  std::string ask(std::span<const std::uint8_t> png, const std::string& prompt) override;
  std::string model_name() const override { return model_; }
  std::size_t calls() const;

 private:
  std::vector<Rule> rules_;
  std::string default_answer_;
  std::string model_;
  mutable std::mutex mutex_;
  std::size_t calls_ = 0;
};

// Deterministic embedding from a coarse color histogram. Text maps color
// words ("brown", "green", ...) to their histogram bin and falls back to a
// hashed bag of words. Used for offline runs and tests only.
class HistogramEmbedder final : public EmbeddingProvider {
 public:
  explicit HistogramEmbedder(int bins_per_channel = 4);

  std::vector<float> embed_image(const video::Image& image) override;
  std::vector<float> embed_text(const std::string& text) override;
  std::string fingerprint() const override;

 private:
  int bins_;
};

// Runs fn(i) for i in [0, count) on up to `max_in_flight` threads. The first
// exception thrown by any call is rethrown after all workers finish.
void parallel_for(std::size_t count, std::size_t max_in_flight,
                  const std::function<void(std::size_t)>& fn);

}  // namespace tcb
