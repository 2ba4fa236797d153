// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

#include "tcb/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "tcb/error.hpp"
#include "tcb/providers.hpp"

namespace tcb::corpus {
namespace {

constexpr double kMaxClipSeconds = 20.0;

std::pair<std::string, std::string> undirected(const RelationEdge& edge) {
  return edge.from < edge.to ? std::pair{edge.from, edge.to} : std::pair{edge.to, edge.from};
}

template <typename T>
std::vector<T> set_difference_of(const std::vector<T>& a, const std::vector<T>& b) {
  std::set<T> sa(a.begin(), a.end());
  std::set<T> sb(b.begin(), b.end());
  std::vector<T> out;
  std::set_difference(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(out));
  return out;
}

std::vector<std::pair<std::string, std::string>> normalized_edges(const SceneState& state) {
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(state.relations.size());
  for (const auto& edge : state.relations) out.push_back(undirected(edge));
  return out;
}

struct StateDiff {
  std::vector<AttributeBinding> attributes_removed;
  std::vector<AttributeBinding> attributes_added;
  std::vector<std::pair<std::string, std::string>> relations_removed;
  std::vector<std::pair<std::string, std::string>> relations_added;
};

StateDiff diff_states(const SceneState& start, const SceneState& end) {
  StateDiff diff;
  diff.attributes_removed = set_difference_of(start.attributes, end.attributes);
  diff.attributes_added = set_difference_of(end.attributes, start.attributes);
  const auto start_edges = normalized_edges(start);
  const auto end_edges = normalized_edges(end);
  diff.relations_removed = set_difference_of(start_edges, end_edges);
  diff.relations_added = set_difference_of(end_edges, start_edges);
  return diff;
}

std::string partner(const std::pair<std::string, std::string>& edge, std::string_view object) {
  return edge.first == object ? edge.second : edge.first;
}

bool contains_ci(std::string_view haystack, std::string_view needle) {
  return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

[[noreturn]] void fail(std::string_view prompt_id, const std::string& message) {
  throw ValidationError("prompt '" + std::string(prompt_id) + "': " + message);
}

const Json& require(const Json& json, const char* key) {
  if (!json.contains(key)) throw ValidationError(std::string("missing field '") + key + "'");
  return json.at(key);
}

std::vector<std::string> string_list(const Json& json) {
  if (!json.is_array()) throw ValidationError("expected a list of strings");
  std::vector<std::string> out;
  for (const auto& item : json) out.push_back(item.get<std::string>());
  return out;
}

}  // namespace

std::string_view to_string(Category category) {
  switch (category) {
    case Category::kAttribute:
      return "attribute";
    case Category::kObjectRelation:
      return "object_relation";
    case Category::kBackground:
      return "background";
  }
  return "unknown";
}

Category parse_category(std::string_view text) {
  const auto lower = to_lower(trim(text));
  if (lower == "attribute") return Category::kAttribute;
  if (lower == "object_relation" || lower == "object" || lower == "relation") {
    return Category::kObjectRelation;
  }
  if (lower == "background") return Category::kBackground;
  throw ValidationError("unknown category '" + std::string(text) + "'");
}

std::string_view to_string(ManifestKind kind) { return kind == ManifestKind::kT2V ? "T2V" : "I2V"; }

ManifestKind parse_manifest_kind(std::string_view text) {
  const auto lower = to_lower(trim(text));
  if (lower == "t2v") return ManifestKind::kT2V;
  if (lower == "i2v") return ManifestKind::kI2V;
  throw ValidationError("unknown manifest kind '" + std::string(text) + "'");
}

const TransitionPrompt* CorpusManifest::find(std::string_view id) const {
  for (const auto& prompt : prompts) {
    if (prompt.id == id) return &prompt;
  }
  return nullptr;
}

const GroundTruthMeta* CorpusManifest::ground_truth_for(std::string_view id) const {
  for (const auto& meta : ground_truth) {
    if (meta.prompt_id == id) return &meta;
  }
  return nullptr;
}

std::map<Category, std::size_t> CorpusManifest::category_counts() const {
  std::map<Category, std::size_t> counts{
      {Category::kAttribute, 0}, {Category::kObjectRelation, 0}, {Category::kBackground, 0}};
  for (const auto& prompt : prompts) ++counts[prompt.category];
  return counts;
}

std::optional<Category> classify_transition(const TransitionPrompt& prompt) {
  const auto diff = diff_states(prompt.start_state, prompt.end_state);
  const auto& object = prompt.transition_object;

  const bool attribute_change =
      diff.attributes_removed.size() == 1 && diff.attributes_added.size() == 1 &&
      diff.attributes_removed[0].object == object && diff.attributes_added[0].object == object &&
      diff.relations_removed.empty() && diff.relations_added.empty();
  const bool relation_change =
      diff.relations_removed.size() == 1 && diff.relations_added.size() == 1 &&
      (diff.relations_removed[0].first == object || diff.relations_removed[0].second == object) &&
      (diff.relations_added[0].first == object || diff.relations_added[0].second == object) &&
      diff.attributes_removed.empty() && diff.attributes_added.empty();

  // Attribute and background transitions share the binding-change shape;
  // only background prompts name foreground distractors.
  const bool is_attribute = attribute_change && prompt.distractors.empty();
  const bool is_background = attribute_change && !prompt.distractors.empty();
  const int holding = int{is_attribute} + int{relation_change} + int{is_background};
  if (holding != 1) return std::nullopt;
  if (is_attribute) return Category::kAttribute;
  if (relation_change) return Category::kObjectRelation;
  return Category::kBackground;
}

void validate_scene_state(const SceneState& state, std::string_view prompt_id) {
  if (state.objects.empty()) fail(prompt_id, "scene state has no objects");
  if (state.attributes.empty() && state.relations.empty()) {
    fail(prompt_id, "scene state has neither attribute bindings nor relations");
  }
  std::set<std::string> objects;
  for (const auto& object : state.objects) {
    if (trim(object).empty()) fail(prompt_id, "empty object label");
    if (!objects.insert(object).second) fail(prompt_id, "duplicate object '" + object + "'");
  }
  std::set<AttributeBinding> bindings;
  for (const auto& binding : state.attributes) {
    if (!objects.contains(binding.object)) {
      fail(prompt_id, "attribute bound to unknown object '" + binding.object + "'");
    }
    if (!bindings.insert(binding).second) {
      fail(prompt_id, "duplicate binding " + binding.object + " -> " + binding.attribute);
    }
  }
  std::set<std::pair<std::string, std::string>> edges;
  for (const auto& edge : state.relations) {
    if (!objects.contains(edge.from) || !objects.contains(edge.to)) {
      fail(prompt_id, "relation endpoint not in objects: " + edge.from + " - " + edge.to);
    }
    if (!edges.insert(undirected(edge)).second) {
      fail(prompt_id, "duplicate relation " + edge.from + " - " + edge.to);
    }
  }
}

void validate_prompt(const TransitionPrompt& prompt) {
  if (trim(prompt.id).empty()) throw ValidationError("prompt with empty id");
  const auto& id = prompt.id;
  if (trim(prompt.text).empty()) fail(id, "empty prompt text");
  validate_scene_state(prompt.start_state, id);
  validate_scene_state(prompt.end_state, id);

  const auto start_objects = std::set<std::string>(prompt.start_state.objects.begin(),
                                                   prompt.start_state.objects.end());
  if (!start_objects.contains(prompt.transition_object)) {
    fail(id, "transition object '" + prompt.transition_object + "' not in start state");
  }
  for (const auto& distractor : prompt.distractors) {
    if (!start_objects.contains(distractor)) {
      fail(id, "distractor '" + distractor + "' not in start state");
    }
  }
  if (prompt.category == Category::kBackground && prompt.distractors.empty()) {
    fail(id, "background prompt without a foreground distractor");
  }

  const auto classified = classify_transition(prompt);
  if (!classified || *classified != prompt.category) {
    fail(id, "scene-state difference does not match category '" +
                 std::string(to_string(prompt.category)) + "'");
  }

  const auto diff = diff_states(prompt.start_state, prompt.end_state);
  std::string from;
  std::string to;
  if (prompt.category == Category::kObjectRelation) {
    from = partner(diff.relations_removed[0], prompt.transition_object);
    to = partner(diff.relations_added[0], prompt.transition_object);
  } else {
    from = diff.attributes_removed[0].attribute;
    to = diff.attributes_added[0].attribute;
  }
  if (from != prompt.start_value || to != prompt.end_value) {
    fail(id, "start/end values (" + prompt.start_value + " -> " + prompt.end_value +
                 ") disagree with the scene-state change (" + from + " -> " + to + ")");
  }
  if (!contains_ci(prompt.text, prompt.start_value)) {
    fail(id, "text does not mention start value '" + prompt.start_value + "'");
  }
  if (!contains_ci(prompt.text, prompt.end_value)) {
    fail(id, "text does not mention end value '" + prompt.end_value + "'");
  }
}

void validate_ground_truth(const GroundTruthMeta& meta) {
  if (meta.video_source_id.empty()) fail(meta.prompt_id, "ground truth without video id");
  if (!(meta.start_time >= 0.0) || !(meta.start_time < meta.end_time)) {
    fail(meta.prompt_id, "ground truth needs 0 <= start_time < end_time");
  }
  if (meta.end_time - meta.start_time >= kMaxClipSeconds) {
    fail(meta.prompt_id, "ground-truth clip must be shorter than 20 s");
  }
}

void validate_manifest(const CorpusManifest& manifest) {
  if (manifest.prompts.empty()) throw ValidationError("empty corpus");
  std::set<std::string> ids;
  for (const auto& prompt : manifest.prompts) {
    validate_prompt(prompt);
    if (!ids.insert(prompt.id).second) fail(prompt.id, "duplicate prompt id");
  }
  std::set<std::string> covered;
  for (const auto& meta : manifest.ground_truth) {
    if (!ids.contains(meta.prompt_id)) fail(meta.prompt_id, "ground truth for unknown prompt");
    if (!covered.insert(meta.prompt_id).second) fail(meta.prompt_id, "duplicate ground truth");
    validate_ground_truth(meta);
  }
  if (manifest.kind == ManifestKind::kI2V) {
    for (const auto& prompt : manifest.prompts) {
      if (!covered.contains(prompt.id)) fail(prompt.id, "missing ground truth for I2V manifest");
    }
  }
}

Json to_json(const SceneState& state) {
  Json attributes = Json::array();
  for (const auto& b : state.attributes) {
    attributes.push_back({{"object", b.object}, {"attribute", b.attribute}});
  }
  Json relations = Json::array();
  for (const auto& r : state.relations) relations.push_back({{"from", r.from}, {"to", r.to}});
  return {{"objects", state.objects}, {"attributes", attributes}, {"relations", relations}};
}

Json to_json(const TransitionPrompt& prompt) {
  return {{"id", prompt.id},
          {"category", to_string(prompt.category)},
          {"text", prompt.text},
          {"start_state", to_json(prompt.start_state)},
          {"end_state", to_json(prompt.end_state)},
          {"transition_object", prompt.transition_object},
          {"start_value", prompt.start_value},
          {"end_value", prompt.end_value},
          {"distractors", prompt.distractors}};
}

SceneState scene_state_from_json(const Json& json) {
  SceneState state;
  state.objects = string_list(require(json, "objects"));
  for (const auto& b : json.value("attributes", Json::array())) {
    state.attributes.push_back(
        {require(b, "object").get<std::string>(), require(b, "attribute").get<std::string>()});
  }
  for (const auto& r : json.value("relations", Json::array())) {
    state.relations.push_back(
        {require(r, "from").get<std::string>(), require(r, "to").get<std::string>()});
  }
  return state;
}

TransitionPrompt prompt_from_json(const Json& json) {
  TransitionPrompt prompt;
  prompt.id = require(json, "id").get<std::string>();
  prompt.category = parse_category(require(json, "category").get<std::string>());
  prompt.text = require(json, "text").get<std::string>();
  prompt.start_state = scene_state_from_json(require(json, "start_state"));
  prompt.end_state = scene_state_from_json(require(json, "end_state"));
  prompt.transition_object = require(json, "transition_object").get<std::string>();
  prompt.start_value = require(json, "start_value").get<std::string>();
  prompt.end_value = require(json, "end_value").get<std::string>();
  prompt.distractors = string_list(json.value("distractors", Json::array()));
  return prompt;
}

std::filesystem::path sidecar_path(const std::filesystem::path& corpus_path) {
  auto path = corpus_path;
  path += ".meta.json";
  return path;
}

CorpusManifest load_corpus(const std::filesystem::path& path, ManifestKind kind) {
  CorpusManifest manifest;
  manifest.kind = kind;

  const auto sidecar = sidecar_path(path);
  if (std::filesystem::exists(sidecar)) {
    const auto meta = Json::parse(read_text_file(sidecar), nullptr, false);
    if (meta.is_discarded() || !meta.is_object()) {
      throw ValidationError("malformed sidecar " + sidecar.string());
    }
    const auto name = meta.value("name", std::string(to_string(kind)));
    if (parse_manifest_kind(name) != kind) {
      throw ValidationError("corpus " + path.string() + " is a " + name + " manifest, expected " +
                            std::string(to_string(kind)));
    }
    manifest.version = meta.value("version", manifest.version);
  }

  std::map<std::string, Json> seen;
  for_each_jsonl(path, [&](std::size_t line, const Json& record) {
    TransitionPrompt prompt;
    try {
      prompt = prompt_from_json(record);
    } catch (const ValidationError& e) {
      throw ParseError(line, e.what());
    } catch (const Json::exception& e) {
      throw ParseError(line, e.what());
    }
    if (record.contains("reviewed") && !record.at("reviewed").get<bool>()) {
      fail(prompt.id, "unreviewed draft in corpus (line " + std::to_string(line) + ")");
    }
    Json canonical = record;
    canonical.erase("reviewed");
    if (auto it = seen.find(prompt.id); it != seen.end()) {
      if (it->second == canonical) return;  // exact duplicate record
      fail(prompt.id, "conflicting records share this id (line " + std::to_string(line) + ")");
    }
    seen.emplace(prompt.id, canonical);

    if (record.contains("ground_truth") && !record.at("ground_truth").is_null()) {
      const auto& gt = record.at("ground_truth");
      try {
        manifest.ground_truth.push_back({prompt.id, require(gt, "video_source_id").get<std::string>(),
                                         require(gt, "start_time").get<double>(),
                                         require(gt, "end_time").get<double>()});
      } catch (const Json::exception& e) {
        throw ParseError(line, e.what());
      } catch (const ValidationError& e) {
        throw ParseError(line, e.what());
      }
    }
    manifest.prompts.push_back(std::move(prompt));
  });

  validate_manifest(manifest);
  return manifest;
}

void save_corpus(const CorpusManifest& manifest, const std::filesystem::path& path) {
  std::vector<Json> records;
  records.reserve(manifest.prompts.size());
  for (const auto& prompt : manifest.prompts) {
    Json record = to_json(prompt);
    if (const auto* gt = manifest.ground_truth_for(prompt.id)) {
      record["ground_truth"] = {{"video_source_id", gt->video_source_id},
                                {"start_time", gt->start_time},
                                {"end_time", gt->end_time}};
    }
    records.push_back(std::move(record));
  }
  write_file_atomic(path, to_jsonl(records));
  const Json meta = {{"name", to_string(manifest.kind)}, {"version", manifest.version}};
  write_file_atomic(sidecar_path(path), meta.dump(2) + "\n");
}

// --- prompt drafting -------------------------------------------------------

std::string synthesis_instruction(Category category) {
  switch (category) {
    case Category::kAttribute:
      return "Generate some concise prompts that describe scenarios where an object's attribute, "
             "such as lighting, color, material, shape, or texture, changes as time proceeds. "
             "The prompt should describe transitions that could happen within a few seconds in a "
             "video. The described transition should also be realistic and could happen in the "
             "real world. Here are some examples:";
    case Category::kObjectRelation:
      return "Generate some concise prompts that describe scenarios where objects' binding "
             "relations change due to some actions or motions. Two objects are bound to each "
             "other if they are physically interacting with each other. For example, in \"a man "
             "passes a ball from left hand to right hand\" the ball is bound to the man's left "
             "hand at first. Then, the binding relation changes from ball and left hand to ball "
             "and right hand. The prompt should describe motions that could happen within a few "
             "seconds in a video. Consider a wide range of subjects not limited to humans or "
             "one's occupation, such as animals or common objects. Here are more examples:";
    case Category::kBackground:
      return "Generate some concise prompts that describe scenarios where a foreground object "
             "remains relatively static and the background changes as time proceeds. The prompt "
             "should describe transitions that could happen within a few seconds in a video, "
             "whether it is a normal-speed video or a timelapse video. Here are some examples:";
  }
  return {};
}

std::vector<std::string> default_exemplars(Category category) {
  switch (category) {
    case Category::kAttribute:
      return {"A chameleon's skin changes from brown to bright green.",
              "A leaf changing color from vibrant green to rich autumn red.",
              "A car transitioning from silver to matte black."};
    case Category::kObjectRelation:
      return {"A man picking an apple from a tree and placing it in a basket.",
              "A bird picking up a twig and placing it in its nest.",
              "A child placing a toy car on a toy track."};
    case Category::kBackground:
      return {"A cityscape transitioning from day to night.",
              "A forest changing from summer greenery to autumn foliage.",
              "A bench by a lake from foggy morning to sunny afternoon."};
  }
  return {};
}

std::string build_synthesis_request(Category category, std::size_t count,
                                    const std::vector<std::string>& exemplars) {
  std::ostringstream out;
  out << synthesis_instruction(category) << "\n\n";
  for (const auto& exemplar : exemplars) out << exemplar << "\n";
  out << "\nWrite " << count << " new prompts, one per line, each followed by its structure:\n"
      << "<prompt> | object: <transition object>; start: <start state>; end: <end state>; "
         "others: <other objects, comma separated, or none>\n";
  if (category == Category::kBackground) {
    out << "Use \"background\" as the transition object and name at least one foreground "
           "object under others.\n";
  } else if (category == Category::kObjectRelation) {
    out << "Start and end are the objects the transition object is bound to before and after.\n";
  }
  return out.str();
}

TransitionPrompt make_prompt(std::string id, Category category, std::string text,
                             std::string transition_object, std::string start_value,
                             std::string end_value, std::vector<std::string> distractors) {
  TransitionPrompt prompt;
  prompt.id = std::move(id);
  prompt.category = category;
  prompt.text = std::move(text);
  prompt.transition_object = transition_object;
  prompt.start_value = start_value;
  prompt.end_value = end_value;

  std::vector<std::string> objects{transition_object};
  const auto add_object = [&objects](const std::string& label) {
    if (std::find(objects.begin(), objects.end(), label) == objects.end()) objects.push_back(label);
  };
  if (category == Category::kObjectRelation) {
    add_object(start_value);
    add_object(end_value);
  }
  for (const auto& d : distractors) add_object(d);
  prompt.start_state.objects = objects;
  prompt.end_state.objects = objects;

  if (category == Category::kObjectRelation) {
    prompt.start_state.relations = {{transition_object, start_value}};
    prompt.end_state.relations = {{transition_object, end_value}};
  } else {
    prompt.start_state.attributes = {{transition_object, start_value}};
    prompt.end_state.attributes = {{transition_object, end_value}};
  }
  prompt.distractors = category == Category::kBackground ? std::move(distractors)
                                                        : std::vector<std::string>{};
  return prompt;
}

std::variant<PromptDraft, std::string> parse_draft_line(std::string_view line, Category category,
                                                        std::string id) {
  const auto bar = line.find('|');
  if (bar == std::string_view::npos) return std::string("missing '|' structure separator");
  const std::string text(trim(line.substr(0, bar)));
  if (text.empty()) return std::string("empty prompt text");

  std::map<std::string, std::string> fields;
  for (const auto& part : split(line.substr(bar + 1), ';')) {
    const auto colon = part.find(':');
    if (colon == std::string::npos) continue;
    fields[to_lower(trim(std::string_view(part).substr(0, colon)))] =
        std::string(trim(std::string_view(part).substr(colon + 1)));
  }
  for (const char* key : {"object", "start", "end"}) {
    if (fields[key].empty()) return std::string("missing '") + key + "' field";
  }
  std::vector<std::string> others;
  for (const auto& other : split(fields["others"], ',')) {
    const auto label = std::string(trim(other));
    if (!label.empty() && to_lower(label) != "none") others.push_back(label);
  }

  // Lexical check: the prompt names both states (and, for background
  // shifts, a foreground object besides the scene).
  if (!contains_ci(text, fields["start"])) return "start state '" + fields["start"] + "' not in text";
  if (!contains_ci(text, fields["end"])) return "end state '" + fields["end"] + "' not in text";
  if (category == Category::kBackground) {
    const bool named = std::any_of(others.begin(), others.end(),
                                   [&](const std::string& o) { return contains_ci(text, o); });
    if (!named) return std::string("background draft names no foreground object");
  } else if (!contains_ci(text, fields["object"])) {
    return "transition object '" + fields["object"] + "' not in text";
  }

  PromptDraft draft;
  draft.prompt = make_prompt(std::move(id), category, text, fields["object"], fields["start"],
                             fields["end"], std::move(others));
  try {
    validate_prompt(draft.prompt);
  } catch (const ValidationError& e) {
    return std::string(e.what());
  }
  return draft;
}

SynthesisResult synthesize_prompts(Category category, TextGenerator& llm, std::size_t count,
                                   const std::vector<std::string>& exemplars,
                                   std::string_view id_prefix) {
  SynthesisResult result;
  if (count == 0) return result;
  if (exemplars.empty()) throw ValidationError("prompt synthesis needs at least one exemplar");

  ChatRequest request;
  request.user = build_synthesis_request(category, count, exemplars);
  const auto text = with_retries(RetryPolicy{}, "prompt synthesis",
                                 [&] { return llm.complete(request); });

  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line) && result.drafts.size() < count) {
    auto body = trim(line);
    // Drop list decorations such as "1." or "-".
    while (!body.empty() && (std::isdigit(static_cast<unsigned char>(body.front())) ||
                             body.front() == '.' || body.front() == '-' || body.front() == ')' ||
                             body.front() == '*')) {
      body.remove_prefix(1);
    }
    body = trim(body);
    if (body.empty()) continue;
    std::ostringstream id;
    id << id_prefix << '_' << to_string(category) << '_' << (result.drafts.size() + 1);
    auto parsed = parse_draft_line(body, category, id.str());
    if (auto* draft = std::get_if<PromptDraft>(&parsed)) {
      result.drafts.push_back(std::move(*draft));
    } else {
      result.rejected.push_back({std::string(body), std::get<std::string>(parsed)});
    }
  }
  return result;
}

Json to_json(const PromptDraft& draft) {
  Json json = to_json(draft.prompt);
  json["reviewed"] = draft.reviewed;
  return json;
}

PromptDraft draft_from_json(const Json& json) {
  return {prompt_from_json(json), json.value("reviewed", false)};
}

}  // namespace tcb::corpus
