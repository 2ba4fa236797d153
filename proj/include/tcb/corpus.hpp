// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

// Benchmark corpus: transition prompts with start/end scene graphs, optional
// ground-truth video metadata, and LLM-assisted prompt drafting.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tcb/io.hpp"

namespace tcb {
class TextGenerator;
}

namespace tcb::corpus {

enum class Category { kAttribute, kObjectRelation, kBackground };

std::string_view to_string(Category category);
Category parse_category(std::string_view text);

struct AttributeBinding {
  std::string object;
  std::string attribute;

  auto operator<=>(const AttributeBinding&) const = default;
};

// Undirected interaction edge between two objects.
struct RelationEdge {
  std::string from;
  std::string to;

  auto operator<=>(const RelationEdge&) const = default;
  bool touches(std::string_view object) const { return from == object || to == object; }
};

struct SceneState {
  std::vector<std::string> objects;
  std::vector<AttributeBinding> attributes;
  std::vector<RelationEdge> relations;

  bool operator==(const SceneState&) const = default;
};

struct TransitionPrompt {
  std::string id;
  Category category = Category::kAttribute;
  std::string text;
  SceneState start_state;
  SceneState end_state;
  std::string transition_object;
  std::string start_value;
  std::string end_value;
  std::vector<std::string> distractors;

  bool operator==(const TransitionPrompt&) const = default;
};

struct GroundTruthMeta {
  std::string prompt_id;
  std::string video_source_id;
  double start_time = 0.0;
  double end_time = 0.0;

  bool operator==(const GroundTruthMeta&) const = default;
};

enum class ManifestKind { kT2V, kI2V };

std::string_view to_string(ManifestKind kind);
ManifestKind parse_manifest_kind(std::string_view text);

struct CorpusManifest {
  ManifestKind kind = ManifestKind::kT2V;
  std::string version = "1";
  std::vector<TransitionPrompt> prompts;
  std::vector<GroundTruthMeta> ground_truth;

  bool operator==(const CorpusManifest&) const = default;

  const TransitionPrompt* find(std::string_view id) const;
  const GroundTruthMeta* ground_truth_for(std::string_view id) const;
  std::map<Category, std::size_t> category_counts() const;
};

// Which of the three category predicates the scene-state difference of a
// prompt satisfies. Returns nullopt when none or more than one hold.
std::optional<Category> classify_transition(const TransitionPrompt& prompt);

// Throws ValidationError naming the prompt id on the first violated invariant.
void validate_scene_state(const SceneState& state, std::string_view prompt_id);
void validate_prompt(const TransitionPrompt& prompt);
void validate_ground_truth(const GroundTruthMeta& meta);
void validate_manifest(const CorpusManifest& manifest);

Json to_json(const SceneState& state);
Json to_json(const TransitionPrompt& prompt);
SceneState scene_state_from_json(const Json& json);
TransitionPrompt prompt_from_json(const Json& json);

// Line-delimited corpus with a `<path>.meta.json` sidecar carrying the
// manifest name and version.
CorpusManifest load_corpus(const std::filesystem::path& path, ManifestKind kind);
void save_corpus(const CorpusManifest& manifest, const std::filesystem::path& path);
std::filesystem::path sidecar_path(const std::filesystem::path& corpus_path);

// --- prompt drafting -------------------------------------------------------

struct PromptDraft {
  TransitionPrompt prompt;
  bool reviewed = false;
};

struct RejectedDraft {
  std::string line;
  std::string reason;
};

struct SynthesisResult {
  std::vector<PromptDraft> drafts;
  std::vector<RejectedDraft> rejected;
};

// Instruction sent to the text generator for a category, followed by the
// seed exemplars and the structured output format.
std::string synthesis_instruction(Category category);
std::vector<std::string> default_exemplars(Category category);
std::string build_synthesis_request(Category category, std::size_t count,
                                    const std::vector<std::string>& exemplars);

// Parses one structured draft line:
//   <prompt text> | object: <o>; start: <s>; end: <e>; others: <d1>, <d2>
// Returns the rejection reason on failure.
std::variant<PromptDraft, std::string> parse_draft_line(std::string_view line, Category category,
                                                        std::string id);

// Builds start/end scene graphs from the flat draft fields.
TransitionPrompt make_prompt(std::string id, Category category, std::string text,
                             std::string transition_object, std::string start_value,
                             std::string end_value, std::vector<std::string> distractors);

SynthesisResult synthesize_prompts(Category category, TextGenerator& llm, std::size_t count,
                                   const std::vector<std::string>& exemplars,
                                   std::string_view id_prefix = "draft");

Json to_json(const PromptDraft& draft);
PromptDraft draft_from_json(const Json& json);

}  // namespace tcb::corpus
