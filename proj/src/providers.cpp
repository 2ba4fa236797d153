// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

#include "tcb/providers.hpp"

#include <httplib.h>

#include <opencv2/dnn.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>

namespace tcb {
namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // prefix without trailing slash
};

ParsedUrl parse_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ValidationError("endpoint base URL needs a scheme: '" + url + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl parsed;
  parsed.origin = url.substr(0, path_start);
  if (path_start != std::string::npos) parsed.path = url.substr(path_start);
  while (!parsed.path.empty() && parsed.path.back() == '/') parsed.path.pop_back();
  return parsed;
}

Json post_json(const EndpointConfig& config, const std::string& route, const Json& body) {
  const auto url = parse_base_url(config.base_url);
  httplib::Client client(url.origin);
  client.set_connection_timeout(config.timeout_seconds, 0);
  client.set_read_timeout(config.timeout_seconds, 0);
  client.set_write_timeout(config.timeout_seconds, 0);
  httplib::Headers headers;
  if (!config.api_key.empty()) headers.emplace("Authorization", "Bearer " + config.api_key);

  auto result = client.Post(url.path + route, headers, body.dump(), "application/json");
  if (!result) {
    throw std::runtime_error("request to " + config.base_url + route +
                             " failed: " + httplib::to_string(result.error()));
  }
  if (result->status != 200) {
    throw std::runtime_error("HTTP " + std::to_string(result->status) + " from " +
                             config.base_url + route + ": " + result->body.substr(0, 300));
  }
  try {
    return Json::parse(result->body);
  } catch (const Json::parse_error& e) {
    throw std::runtime_error("malformed JSON from " + config.base_url + route + ": " + e.what());
  }
}

std::string png_data_url(std::span<const std::uint8_t> png) {
  return "data:image/png;base64," + base64_encode(png);
}

std::vector<float> normalized_copy(std::vector<float> v) {
  double norm = 0.0;
  for (const float x : v) norm += static_cast<double>(x) * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) return v;
  for (auto& x : v) x = static_cast<float>(x / norm);
  return v;
}

struct ColorWord {
  const char* word;
  std::uint8_t r, g, b;
};

constexpr ColorWord kColorWords[] = {
    {"black", 0, 0, 0},        {"white", 255, 255, 255}, {"gray", 128, 128, 128},
    {"grey", 128, 128, 128},   {"red", 220, 20, 20},     {"green", 30, 200, 30},
    {"blue", 30, 30, 220},     {"yellow", 240, 230, 20}, {"orange", 250, 140, 10},
    {"purple", 130, 30, 160},  {"pink", 250, 160, 190},  {"brown", 130, 80, 30},
};

}  // namespace

RateLimiter::RateLimiter(int per_minute) {
  if (per_minute > 0) {
    interval_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::minutes(1)) / per_minute;
  }
}

void RateLimiter::acquire() {
  if (interval_.count() == 0) return;
  std::lock_guard lock(mutex_);
  const auto now = std::chrono::steady_clock::now();
  if (next_ > now) std::this_thread::sleep_until(next_);
  next_ = std::max(now, next_) + interval_;
}

std::string api_key_from_env(const char* env_var, std::string fallback) {
  if (const char* value = std::getenv(env_var); value != nullptr && *value != '\0') return value;
  return fallback;
}

OpenAIChatClient::OpenAIChatClient(EndpointConfig config) : config_(std::move(config)) {
  parse_base_url(config_.base_url);
  if (config_.model.empty()) throw ValidationError("chat endpoint needs a model name");
}

Json OpenAIChatClient::build_body(const EndpointConfig& config, const ChatRequest& request) {
  Json messages = Json::array();
  if (!request.system.empty()) {
    messages.push_back({{"role", "system"}, {"content", request.system}});
  }
  if (request.png_images.empty()) {
    messages.push_back({{"role", "user"}, {"content", request.user}});
  } else {
    Json parts = Json::array();
    parts.push_back({{"type", "text"}, {"text", request.user}});
    for (const auto& png : request.png_images) {
      parts.push_back({{"type", "image_url"}, {"image_url", {{"url", png_data_url(png)}}}});
    }
    messages.push_back({{"role", "user"}, {"content", parts}});
  }
  return {{"model", config.model},
          {"messages", messages},
          {"temperature", request.temperature},
          {"max_tokens", config.max_tokens}};
}

std::string OpenAIChatClient::extract_content(const Json& response) {
  if (response.contains("error")) {
    const auto& error = response["error"];
    throw std::runtime_error("endpoint error: " +
                             (error.is_object() ? error.value("message", error.dump()) : error.dump()));
  }
  const auto choices = response.find("choices");
  if (choices == response.end() || !choices->is_array() || choices->empty()) {
    throw std::runtime_error("response has no choices");
  }
  const auto& content = (*choices)[0].at("message").at("content");
  if (content.is_string()) return content.get<std::string>();
  if (content.is_array()) {
    std::string text;
    for (const auto& part : content) {
      if (part.value("type", "") == "text") text += part.value("text", "");
    }
    return text;
  }
  throw std::runtime_error("response content is neither text nor parts");
}

std::string OpenAIChatClient::complete(const ChatRequest& request) {
  return extract_content(post_json(config_, "/chat/completions", build_body(config_, request)));
}

std::string OpenAIChatClient::ask(std::span<const std::uint8_t> png, const std::string& prompt) {
  ChatRequest request;
  request.user = prompt;
  request.png_images.emplace_back(png.begin(), png.end());
  return complete(request);
}

HttpEmbeddingClient::HttpEmbeddingClient(EndpointConfig config) : config_(std::move(config)) {
  parse_base_url(config_.base_url);
  if (config_.model.empty()) throw ValidationError("embedding endpoint needs a model name");
}

std::vector<float> HttpEmbeddingClient::post(const std::string& input) {
  const auto response =
      post_json(config_, "/embeddings", {{"model", config_.model}, {"input", input}});
  try {
    return response.at("data").at(0).at("embedding").get<std::vector<float>>();
  } catch (const Json::exception& e) {
    throw std::runtime_error(std::string("unexpected embedding response: ") + e.what());
  }
}

std::vector<float> HttpEmbeddingClient::embed_image(const video::Image& image) {
  const auto png = video::encode_png(image);
  return post(png_data_url(png));
}

std::vector<float> HttpEmbeddingClient::embed_text(const std::string& text) { return post(text); }

struct OnnxImageEncoder::Impl {
  cv::dnn::Net net;
};

OnnxImageEncoder::OnnxImageEncoder(OnnxEncoderConfig config)
    : config_(std::move(config)), impl_(std::make_unique<Impl>()) {
  if (!std::filesystem::exists(config_.model_path)) {
    throw ValidationError("image encoder model not found: " + config_.model_path.string());
  }
  if (config_.input_size < 1) throw ValidationError("encoder input size must be positive");
  try {
    impl_->net = cv::dnn::readNetFromONNX(config_.model_path.string());
  } catch (const cv::Exception& e) {
    throw ProviderError("cannot load image encoder " + config_.model_path.string() + ": " + e.what());
  }
  fingerprint_ = "onnx:" + sha256_file(config_.model_path).substr(0, 16) + ":" +
                 std::to_string(config_.input_size);
}

OnnxImageEncoder::~OnnxImageEncoder() = default;

std::vector<float> OnnxImageEncoder::embed_image(const video::Image& image) {
  if (image.empty()) throw ValidationError("cannot embed an empty image");
  const int size = config_.input_size;
  const cv::Mat rgb(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.rgb.data()));

  // Shortest side to `size`, then center crop.
  const double scale = static_cast<double>(size) / std::min(image.width, image.height);
  const int w = std::max(size, static_cast<int>(std::lround(image.width * scale)));
  const int h = std::max(size, static_cast<int>(std::lround(image.height * scale)));
  cv::Mat resized;
  cv::resize(rgb, resized, cv::Size(w, h), 0, 0, cv::INTER_CUBIC);
  const cv::Mat cropped = resized(cv::Rect((w - size) / 2, (h - size) / 2, size, size));

  cv::Mat input;
  cropped.convertTo(input, CV_32FC3, 1.0 / 255.0);
  cv::subtract(input, cv::Scalar(config_.mean[0], config_.mean[1], config_.mean[2]), input);
  cv::divide(input, cv::Scalar(config_.stddev[0], config_.stddev[1], config_.stddev[2]), input);
  const cv::Mat blob = cv::dnn::blobFromImage(input);

  cv::Mat output;
  {
    std::lock_guard lock(mutex_);
    try {
      impl_->net.setInput(blob);
      output = impl_->net.forward().clone();
    } catch (const cv::Exception& e) {
      throw ProviderError(std::string("image encoder inference failed: ") + e.what());
    }
  }
  const auto* data = output.ptr<float>();
  return std::vector<float>(data, data + output.total());
}

std::vector<float> OnnxImageEncoder::embed_text(const std::string&) {
  throw ProviderError("the local image encoder has no text tower; configure an http embedding "
                      "provider for caption curves");
}

ScriptedTextGenerator::ScriptedTextGenerator(std::map<std::string, std::string> responses,
                                             std::string model)
    : responses_(std::move(responses)), model_(std::move(model)) {}

std::unique_ptr<ScriptedTextGenerator> ScriptedTextGenerator::from_file(
    const std::filesystem::path& path) {
  try {
    const auto json = Json::parse(read_text_file(path));
    return std::make_unique<ScriptedTextGenerator>(
        json.at("responses").get<std::map<std::string, std::string>>(),
        json.value("model", std::string("scripted-llm")));
  } catch (const Json::exception& e) {
    throw ValidationError("bad scripted LLM file " + path.string() + ": " + e.what());
  }
}

std::string ScriptedTextGenerator::complete(const ChatRequest& request) {
  {
    std::lock_guard lock(mutex_);
    ++calls_;
  }
  if (const auto it = responses_.find(request.user); it != responses_.end()) return it->second;
  throw ProviderError("no scripted response for: " + request.user.substr(0, 80));
}

std::size_t ScriptedTextGenerator::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

ScriptedJudge::ScriptedJudge(std::vector<Rule> rules, std::string default_answer, std::string model)
    : rules_(std::move(rules)), default_answer_(std::move(default_answer)), model_(std::move(model)) {}

std::unique_ptr<ScriptedJudge> ScriptedJudge::from_file(const std::filesystem::path& path) {
  try {
    const auto json = Json::parse(read_text_file(path));
    std::vector<Rule> rules;
    for (const auto& rule : json.value("rules", Json::array())) {
      rules.push_back({rule.at("contains").get<std::string>(), rule.at("answer").get<std::string>()});
    }
    return std::make_unique<ScriptedJudge>(std::move(rules),
                                           json.value("default", std::string("No")),
                                           json.value("model", std::string("scripted-vlm")));
  } catch (const Json::exception& e) {
    throw ValidationError("bad scripted judge file " + path.string() + ": " + e.what());
  }
}

std::string ScriptedJudge::ask(std::span<const std::uint8_t>, const std::string& prompt) {
  {
    std::lock_guard lock(mutex_);
    ++calls_;
  }
  for (const auto& rule : rules_) {
    if (prompt.find(rule.contains) != std::string::npos) return rule.answer;
  }
  return default_answer_;
}

std::size_t ScriptedJudge::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

HistogramEmbedder::HistogramEmbedder(int bins_per_channel) : bins_(bins_per_channel) {
  if (bins_ < 1 || bins_ > 16) throw ValidationError("histogram bins must be in 1..16");
}

namespace {

std::size_t color_bin(int bins, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const auto q = [bins](std::uint8_t c) { return static_cast<std::size_t>(c * bins / 256); };
  return (q(r) * bins + q(g)) * bins + q(b);
}

}  // namespace

std::vector<float> HistogramEmbedder::embed_image(const video::Image& image) {
  if (image.empty()) throw ValidationError("cannot embed an empty image");
  std::vector<float> hist(static_cast<std::size_t>(bins_ * bins_ * bins_), 0.0F);
  for (std::size_t i = 0; i < image.rgb.size(); i += 3) {
    hist[color_bin(bins_, image.rgb[i], image.rgb[i + 1], image.rgb[i + 2])] += 1.0F;
  }
  return normalized_copy(std::move(hist));
}

std::vector<float> HistogramEmbedder::embed_text(const std::string& text) {
  std::vector<float> v(static_cast<std::size_t>(bins_ * bins_ * bins_), 0.0F);
  bool any_color = false;
  std::string word;
  const auto flush = [&] {
    if (word.empty()) return;
    for (const auto& c : kColorWords) {
      if (word == c.word) {
        v[color_bin(bins_, c.r, c.g, c.b)] += 1.0F;
        any_color = true;
      }
    }
    word.clear();
  };
  for (const char ch : to_lower(text)) {
    if (std::isalpha(static_cast<unsigned char>(ch))) {
      word += ch;
    } else {
      flush();
    }
  }
  flush();
  if (!any_color) {
    // No color vocabulary: fall back to a hashed bag of words.
    for (const auto& token : split(to_lower(text), ' ')) {
      if (token.empty()) continue;
      const auto digest = sha256_hex(token);
      v[std::stoul(digest.substr(0, 8), nullptr, 16) % v.size()] += 1.0F;
    }
  }
  return normalized_copy(std::move(v));
}

std::string HistogramEmbedder::fingerprint() const {
  return "histogram:" + std::to_string(bins_);
}

void parallel_for(std::size_t count, std::size_t max_in_flight,
                  const std::function<void(std::size_t)>& fn) {
  if (count == 0) return;
  const std::size_t workers = std::clamp<std::size_t>(max_in_flight, 1, count);
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace tcb
