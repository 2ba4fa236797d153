// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

// Index-assertion pairs: each is a yes/no question about up to five frames of
// a 16-frame video, tagged with the dimension it checks.

#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tcb/corpus.hpp"
#include "tcb/error.hpp"
#include "tcb/io.hpp"
#include "tcb/providers.hpp"

namespace tcb::assertion {

enum class Dimension { kCompletion, kConsistency, kOther };

std::string_view to_string(Dimension dimension);
Dimension parse_dimension(std::string_view text);

struct Assertion {
  std::string id;
  Dimension dimension = Dimension::kCompletion;
  std::vector<int> frame_indices;  // 1-based, ascending, canonical 16-frame space
  std::string question;

  bool operator==(const Assertion&) const = default;
};

struct AssertionSet {
  std::string prompt_id;
  std::vector<Assertion> assertions;
  std::string generator_fingerprint;

  bool operator==(const AssertionSet&) const = default;

  std::size_t count(Dimension dimension) const;
  const Assertion* find(std::string_view id) const;
};

// Parse failure; carries the offending raw text for audit.
class AssertionParseError : public ValidationError {
 public:
  AssertionParseError(std::size_t line, const std::string& message, std::string raw)
      : ValidationError("assertion text line " + std::to_string(line) + ": " + message),
        line_(line),
        raw_(std::move(raw)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& raw_text() const noexcept { return raw_; }

 private:
  std::size_t line_;
  std::string raw_;
};

// Parses the exemplar layout: `- Check "<dimension>"` headers followed by
// `Input: Frame i, j, ...` / `Q: ...` pairs; a `None` body leaves a section
// empty. Lines before the first header (description, transition summary) are
// ignored. Assertion ids are a1, a2, ... in text order.
AssertionSet parse_assertion_text(std::string_view raw);

// Emits the same layout; parse_assertion_text(render_assertion_text(s))
// reproduces s up to prompt id and fingerprint.
std::string render_assertion_text(const AssertionSet& set);

// Throws ValidationError on the first violated invariant. `category` enables
// the background exemption for empty consistency checks.
void validate_assertion_set(const AssertionSet& set, corpus::Category category);

// Template for the generator: instruction, three worked exemplars, and the
// per-prompt request.
inline constexpr std::string_view kTemplateVersion = "assertions-v1";
std::string assertion_system_prompt();
std::string assertion_user_prompt(const corpus::TransitionPrompt& prompt);

Json to_json(const AssertionSet& set);
AssertionSet assertion_set_from_json(const Json& json);

struct GeneratedAssertions {
  AssertionSet set;
  std::string raw_text;
  bool cache_hit = false;
};

// Generated sets cached on disk under `dir`, keyed by
// (prompt text hash, template version, model name). Concurrent readers,
// serialized writers.
class AssertionCache {
 public:
  explicit AssertionCache(std::filesystem::path dir);

  static std::string key(std::string_view prompt_text, std::string_view model);
  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& record);

 private:
  std::filesystem::path dir_;
  mutable std::mutex mutex_;
};

struct GenerationOptions {
  RetryPolicy retry{};
  AssertionCache* cache = nullptr;
};

// Asks `llm` for assertions at temperature 0, parses and validates them.
// Client failure surfaces as ProviderError; unusable output as
// AssertionParseError carrying the raw text.
GeneratedAssertions generate_assertions(const corpus::TransitionPrompt& prompt, TextGenerator& llm,
                                        const GenerationOptions& options = {});

// Assertion store: one AssertionSet per line (with the raw text archived
// under "raw_text").
std::vector<AssertionSet> load_assertion_store(const std::filesystem::path& path);
void save_assertion_store(const std::vector<GeneratedAssertions>& sets,
                          const std::filesystem::path& path);

}  // namespace tcb::assertion
