// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

#include "tcb/config.hpp"

#include <toml.hpp>

#include <cstdlib>
#include <set>
#include <sstream>

#include "tcb/error.hpp"

namespace tcb::config {
namespace {

void reject_unknown(const toml::table& table, const std::set<std::string>& known,
                    const std::string& where) {
  for (const auto& [key, node] : table) {
    if (!known.contains(std::string(key.str()))) {
      throw ValidationError("unknown config key '" + std::string(key.str()) + "' in " + where);
    }
  }
}

template <typename T>
void read(const toml::table& table, const char* key, T& out, const std::string& where) {
  const auto* node = table.get(key);
  if (node == nullptr) return;
  if constexpr (std::is_same_v<T, double>) {
    if (const auto v = node->value<double>()) {
      out = *v;
      return;
    }
  } else if constexpr (std::is_same_v<T, int>) {
    if (const auto v = node->value<std::int64_t>()) {
      out = static_cast<int>(*v);
      return;
    }
  } else {
    if (const auto v = node->value<std::string>()) {
      out = *v;
      return;
    }
  }
  throw ValidationError("config key '" + where + "." + key + "' has the wrong type");
}

void read_provider(const toml::table& providers, const char* name, ProviderConfig& out) {
  const auto* node = providers.get(name);
  if (node == nullptr) return;
  const auto* table = node->as_table();
  const std::string where = std::string("providers.") + name;
  if (table == nullptr) throw ValidationError("config '" + where + "' must be a table");
  reject_unknown(*table,
                 {"kind", "base_url", "model", "api_key_env", "timeout_seconds", "max_tokens",
                  "script", "model_path", "input_size", "bins", "requests_per_minute",
                  "max_in_flight"},
                 where);
  read(*table, "kind", out.kind, where);
  read(*table, "base_url", out.base_url, where);
  read(*table, "model", out.model, where);
  read(*table, "api_key_env", out.api_key_env, where);
  read(*table, "timeout_seconds", out.timeout_seconds, where);
  read(*table, "max_tokens", out.max_tokens, where);
  read(*table, "script", out.script, where);
  read(*table, "model_path", out.model_path, where);
  read(*table, "input_size", out.input_size, where);
  read(*table, "bins", out.bins, where);
  read(*table, "requests_per_minute", out.requests_per_minute, where);
  read(*table, "max_in_flight", out.max_in_flight, where);
}

Json provider_json(const ProviderConfig& p) {
  Json j = {{"kind", p.kind}};
  if (p.kind == "openai" || p.kind == "http") {
    j["base_url"] = p.base_url;
    j["model"] = p.model;
    j["api_key_env"] = p.api_key_env;
    j["timeout_seconds"] = p.timeout_seconds;
  }
  if (p.kind == "openai") j["max_tokens"] = p.max_tokens;
  if (p.kind == "scripted") j["script"] = p.script;
  if (p.kind == "onnx") {
    j["model_path"] = p.model_path;
    j["input_size"] = p.input_size;
  }
  if (p.kind == "histogram") j["bins"] = p.bins;
  j["requests_per_minute"] = p.requests_per_minute;
  j["max_in_flight"] = p.max_in_flight;
  return j;
}

EndpointConfig endpoint(const ProviderConfig& p) {
  return {p.base_url, p.model, api_key_from_env(p.api_key_env.c_str()), p.timeout_seconds,
          p.max_tokens};
}

void require_script(const ProviderConfig& p, const char* role) {
  if (p.script.empty()) {
    throw ValidationError(std::string("scripted ") + role + " provider needs a 'script' file");
  }
}

}  // namespace

Config parse_config(std::string_view toml_text, std::string_view source_name) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source_name);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config " << source_name << ":" << e.source().begin.line << ":"
        << e.source().begin.column << ": " << e.description();
    throw ValidationError(msg.str());
  }
  reject_unknown(root, {"providers", "constants", "paths"}, "top level");

  Config config;
  if (const auto* providers = root["providers"].as_table()) {
    reject_unknown(*providers, {"llm", "vlm", "embedding"}, "providers");
    read_provider(*providers, "llm", config.llm);
    read_provider(*providers, "vlm", config.vlm);
    read_provider(*providers, "embedding", config.embedding);
  }
  if (const auto* c = root["constants"].as_table()) {
    const std::string where = "constants";
    reject_unknown(*c,
                   {"fps", "frames", "replicates", "w1", "w2", "similarity_lo", "similarity_hi",
                    "divisive_spread", "completion_threshold", "consistency_floor",
                    "static_threshold", "retries", "retry_base_ms", "judge_preamble",
                    "judge_suffix"},
                   where);
    auto& k = config.constants;
    read(*c, "fps", k.fps, where);
    read(*c, "frames", k.frames, where);
    read(*c, "replicates", k.replicates, where);
    read(*c, "w1", k.w1, where);
    read(*c, "w2", k.w2, where);
    read(*c, "similarity_lo", k.similarity_lo, where);
    read(*c, "similarity_hi", k.similarity_hi, where);
    read(*c, "divisive_spread", k.divisive_spread, where);
    read(*c, "completion_threshold", k.completion_threshold, where);
    read(*c, "consistency_floor", k.consistency_floor, where);
    read(*c, "static_threshold", k.static_threshold, where);
    read(*c, "retries", k.retries, where);
    read(*c, "retry_base_ms", k.retry_base_ms, where);
    read(*c, "judge_preamble", k.judge_preamble, where);
    read(*c, "judge_suffix", k.judge_suffix, where);
  }
  if (const auto* paths = root["paths"].as_table()) {
    reject_unknown(*paths, {"cache_dir"}, "paths");
    std::string cache_dir;
    read(*paths, "cache_dir", cache_dir, "paths");
    if (!cache_dir.empty()) config.cache_dir = cache_dir;
  }
  return config;
}

Config load_config(const std::optional<std::filesystem::path>& path) {
  Config config;
  if (path) {
    if (!std::filesystem::exists(*path)) {
      throw ValidationError("config file " + path->string() + " does not exist");
    }
    config = parse_config(read_text_file(*path), path->string());
    config.source = *path;
    // File references inside the config are relative to the config itself.
    const auto base = path->parent_path();
    for (auto* p : {&config.llm, &config.vlm, &config.embedding}) {
      for (auto* file : {&p->script, &p->model_path}) {
        if (!file->empty() && std::filesystem::path(*file).is_relative()) {
          *file = (base / *file).lexically_normal().string();
        }
      }
    }
  }
  if (const char* dir = std::getenv("TCB_CACHE_DIR"); dir != nullptr && *dir != '\0') {
    config.cache_dir = dir;
  }
  return config;
}

Json to_json(const Config& config) {
  const auto& k = config.constants;
  return {{"source", config.source ? config.source->string() : std::string("<defaults>")},
          {"cache_dir", config.cache_dir.string()},
          {"providers",
           {{"llm", provider_json(config.llm)},
            {"vlm", provider_json(config.vlm)},
            {"embedding", provider_json(config.embedding)}}},
          {"constants",
           {{"fps", k.fps},
            {"frames", k.frames},
            {"replicates", k.replicates},
            {"w1", k.w1},
            {"w2", k.w2},
            {"similarity_lo", k.similarity_lo},
            {"similarity_hi", k.similarity_hi},
            {"divisive_spread", k.divisive_spread},
            {"completion_threshold", k.completion_threshold},
            {"consistency_floor", k.consistency_floor},
            {"static_threshold", k.static_threshold},
            {"retries", k.retries},
            {"retry_base_ms", k.retry_base_ms},
            {"judge_preamble", k.judge_preamble},
            {"judge_suffix", k.judge_suffix}}}};
}

RetryPolicy retry_policy(const Constants& constants) {
  return {constants.retries, std::chrono::milliseconds(constants.retry_base_ms)};
}

std::unique_ptr<TextGenerator> make_text_generator(const ProviderConfig& config) {
  if (config.kind == "openai") return std::make_unique<OpenAIChatClient>(endpoint(config));
  if (config.kind == "scripted") {
    require_script(config, "llm");
    return ScriptedTextGenerator::from_file(config.script);
  }
  throw ValidationError("llm provider kind must be openai or scripted, got '" + config.kind + "'");
}

std::unique_ptr<VisionJudge> make_judge(const ProviderConfig& config) {
  if (config.kind == "openai") return std::make_unique<OpenAIChatClient>(endpoint(config));
  if (config.kind == "scripted") {
    require_script(config, "vlm");
    return ScriptedJudge::from_file(config.script);
  }
  throw ValidationError("vlm provider kind must be openai or scripted, got '" + config.kind + "'");
}

std::unique_ptr<EmbeddingProvider> make_embedder(const ProviderConfig& config) {
  if (config.kind == "http") return std::make_unique<HttpEmbeddingClient>(endpoint(config));
  if (config.kind == "onnx") {
    OnnxEncoderConfig onnx;
    onnx.model_path = config.model_path;
    onnx.input_size = config.input_size;
    return std::make_unique<OnnxImageEncoder>(onnx);
  }
  if (config.kind == "histogram") return std::make_unique<HistogramEmbedder>(config.bins);
  throw ValidationError("embedding provider kind must be http, onnx or histogram, got '" +
                        config.kind + "'");
}

}  // namespace tcb::config
