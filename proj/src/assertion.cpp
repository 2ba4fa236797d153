// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

#include "tcb/assertion.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>

#include "tcb/video_io.hpp"

namespace tcb::assertion {
namespace {

constexpr std::string_view kSystemInstruction =
    "Given a video description, generate assertion questions and paired frames to verify "
    "important components in the description. Each description describes a "
    "transformation/transition of an object's attribute, or an object's position or background. "
    "Identify the transition object, its start and end status/place, and other objects, and ask "
    "questions to verify them. Below are three examples showing three different types of "
    "transitions. Follow these examples and generate questions for the given descriptions.";

constexpr std::string_view kExemplarAttribute = R"(A chameleon changing from brown to bright green.
Transition object: chameleon, start: brown, end: bright green
other objects: None
- Check "Transition Completion"
Input: Frame 1
Q: Is there a brown chameleon?
Input: Frame 16
Q: Is there a bright green chameleon?
Input: Frame 9
Q: Is there a chameleon with its color in between brown and bright green?
Input: Frame 1, 5, 9, 13, 16
Q: Has the chameleon changed color from brown to bright green?
- Check "Transition object consistency"
Input: Frame 1, 6
Q: Aside from color difference, do Frame 1 and Frame 6 show the same chameleon?
Input: Frame 1, 11
Q: Aside from color difference, do Frame 1 and Frame 11 show the same chameleon?
- Check "Other objects"
None)";

constexpr std::string_view kExemplarRelation = R"(A man passing a ball from his left hand to his right hand.
Transition object: ball, start: left hand, end: right hand
other objects: man
- Check "Transition Completion"
Input: Frame 1
Q: Is there a ball on the man's left hand?
Input: Frame 16
Q: Is there a ball on the man's right hand?
Input: Frame 9
Q: Is the ball between the man's left hand and right hand?
Input: Frame 1, 5, 9, 13, 16
Q: Has the ball been passed from left hand to right hand?
- Check "Transition object consistency"
Input: Frame 1, 6
Q: Aside from position difference, do Frame 1 and Frame 6 show the same ball?
Input: Frame 1, 11
Q: Aside from position difference, do Frame 1 and Frame 11 show the same ball?
- Check "Other objects"
Input: Frame 1
Q: Is there a man with a ball in his hand in the image?
Input: Frame 1, 6, 11
Q: Do all the frames show the same man?)";

constexpr std::string_view kExemplarBackground = R"(A bench by a lake from foggy morning to sunny afternoon.
Transition object: background, start: foggy morning, end: sunny afternoon
Other objects: bench, lake
- Check "Transition Completion"
Input: Frame 1
Q: Is the image showing a foggy morning?
Input: Frame 16
Q: Is the image showing a sunny afternoon?
Input: Frame 9
Q: Is the image showing a mix of foggy morning and sunny afternoon?
Input: Frame 1, 5, 9, 13, 16
Q: Has the background changed from foggy morning to sunny afternoon?
- Check "Transition object consistency"
None: background is an abstract concept without a physical form
- Check "Other objects"
Input: Frame 1
Q: Is there a bench by a lake in the image?
Input: Frame 1, 6, 11
Q: Do all the frames show the same bench and a lake?)";

std::string_view header_title(Dimension dimension) {
  switch (dimension) {
    case Dimension::kCompletion:
      return "Transition Completion";
    case Dimension::kConsistency:
      return "Transition object consistency";
    case Dimension::kOther:
      return "Other objects";
  }
  return {};
}

bool starts_with_ci(std::string_view text, std::string_view prefix) {
  return text.size() >= prefix.size() && to_lower(text.substr(0, prefix.size())) == prefix;
}

// Returns the quoted (or bare) title of a `- Check "..."` header line.
std::optional<std::string> header_of(std::string_view line) {
  if (line.empty() || line.front() != '-') return std::nullopt;
  auto rest = trim(line.substr(1));
  if (!starts_with_ci(rest, "check")) return std::nullopt;
  rest = trim(rest.substr(5));
  if (!rest.empty() && rest.front() == '"') {
    const auto close = rest.find('"', 1);
    if (close == std::string_view::npos) return std::string(trim(rest.substr(1)));
    return std::string(rest.substr(1, close - 1));
  }
  return std::string(rest);
}

std::vector<int> parse_indices(std::string_view list_text, std::size_t line, std::string_view raw) {
  std::string cleaned(list_text);
  std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
  std::istringstream tokens(cleaned);
  std::vector<int> indices;
  std::string token;
  while (tokens >> token) {
    const auto lower = to_lower(token);
    if (lower == "frame" || lower == "frames" || lower == "and" || lower == "&") continue;
    int value = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || ptr != token.data() + token.size()) {
      throw AssertionParseError(line, "unparsable frame index '" + token + "'", std::string(raw));
    }
    indices.push_back(value);
  }
  if (indices.empty()) {
    throw AssertionParseError(line, "Input line lists no frame indices", std::string(raw));
  }
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  return indices;
}

}  // namespace

std::string_view to_string(Dimension dimension) {
  switch (dimension) {
    case Dimension::kCompletion:
      return "completion";
    case Dimension::kConsistency:
      return "consistency";
    case Dimension::kOther:
      return "other";
  }
  return "unknown";
}

Dimension parse_dimension(std::string_view text) {
  const auto lower = to_lower(text);
  if (lower.find("completion") != std::string::npos) return Dimension::kCompletion;
  if (lower.find("consistency") != std::string::npos) return Dimension::kConsistency;
  if (lower.find("other") != std::string::npos) return Dimension::kOther;
  throw ValidationError("unknown assertion dimension '" + std::string(text) + "'");
}

std::size_t AssertionSet::count(Dimension dimension) const {
  return static_cast<std::size_t>(std::count_if(
      assertions.begin(), assertions.end(),
      [dimension](const Assertion& a) { return a.dimension == dimension; }));
}

const Assertion* AssertionSet::find(std::string_view id) const {
  for (const auto& a : assertions) {
    if (a.id == id) return &a;
  }
  return nullptr;
}

AssertionSet parse_assertion_text(std::string_view raw) {
  AssertionSet set;
  std::optional<Dimension> section;
  std::optional<std::vector<int>> pending;
  std::size_t pending_line = 0;
  bool saw_header = false;

  std::size_t number = 0;
  std::size_t start = 0;
  while (start <= raw.size()) {
    const auto end = std::min(raw.find('\n', start), raw.size());
    const auto line = trim(raw.substr(start, end - start));
    ++number;
    start = end + 1;
    if (line.empty()) continue;

    if (const auto title = header_of(line)) {
      if (pending) {
        throw AssertionParseError(pending_line, "Input line without a question", std::string(raw));
      }
      try {
        section = parse_dimension(*title);
      } catch (const ValidationError&) {
        throw AssertionParseError(number, "unknown check header \"" + *title + "\"",
                                  std::string(raw));
      }
      saw_header = true;
      continue;
    }

    const bool is_input = starts_with_ci(line, "input:");
    const bool is_question = starts_with_ci(line, "q:");
    if (!section) {
      if (is_input || is_question) {
        throw AssertionParseError(number, "assertion before any \"- Check\" header",
                                  std::string(raw));
      }
      continue;  // description and transition summary
    }

    if (is_input) {
      if (pending) {
        throw AssertionParseError(pending_line, "Input line without a question", std::string(raw));
      }
      pending = parse_indices(line.substr(6), number, raw);
      pending_line = number;
    } else if (is_question) {
      if (!pending) {
        throw AssertionParseError(number, "question without a preceding Input line",
                                  std::string(raw));
      }
      Assertion assertion;
      assertion.id = "a" + std::to_string(set.assertions.size() + 1);
      assertion.dimension = *section;
      assertion.frame_indices = std::move(*pending);
      assertion.question = std::string(trim(line.substr(2)));
      set.assertions.push_back(std::move(assertion));
      pending.reset();
    } else if (starts_with_ci(line, "none")) {
      continue;
    } else {
      throw AssertionParseError(number, "unrecognized line '" + std::string(line) + "'",
                                std::string(raw));
    }
  }
  if (pending) {
    throw AssertionParseError(pending_line, "Input line without a question", std::string(raw));
  }
  if (!saw_header) throw AssertionParseError(number, "no \"- Check\" header found", std::string(raw));
  return set;
}

std::string render_assertion_text(const AssertionSet& set) {
  std::ostringstream out;
  for (const auto dimension : {Dimension::kCompletion, Dimension::kConsistency, Dimension::kOther}) {
    out << "- Check \"" << header_title(dimension) << "\"\n";
    bool any = false;
    for (const auto& a : set.assertions) {
      if (a.dimension != dimension) continue;
      any = true;
      out << "Input: Frame ";
      for (std::size_t i = 0; i < a.frame_indices.size(); ++i) {
        out << (i ? ", " : "") << a.frame_indices[i];
      }
      out << "\nQ: " << a.question << "\n";
    }
    if (!any) out << "None\n";
  }
  return out.str();
}

void validate_assertion_set(const AssertionSet& set, corpus::Category category) {
  const auto fail = [&](const std::string& message) {
    throw ValidationError("assertions for '" + set.prompt_id + "': " + message);
  };
  if (set.count(Dimension::kCompletion) == 0) fail("no transition-completion assertion");
  if (set.count(Dimension::kConsistency) == 0 && category != corpus::Category::kBackground) {
    fail("no consistency assertion (only background prompts are exempt)");
  }
  std::set<std::string> ids;
  bool first_frame_check = false;
  bool last_frame_check = false;
  for (const auto& a : set.assertions) {
    if (!ids.insert(a.id).second) fail("duplicate assertion id " + a.id);
    const auto n = a.frame_indices.size();
    if (n < 1 || n > video::kMaxCompositeMembers) fail(a.id + ": needs 1 to 5 frame indices");
    if (!std::is_sorted(a.frame_indices.begin(), a.frame_indices.end()) ||
        std::adjacent_find(a.frame_indices.begin(), a.frame_indices.end()) !=
            a.frame_indices.end()) {
      fail(a.id + ": frame indices must be strictly ascending");
    }
    if (a.frame_indices.front() < 1 || a.frame_indices.back() > video::kCanonicalFrameCount) {
      fail(a.id + ": frame index outside 1..16");
    }
    if (trim(a.question).empty() || a.question.back() != '?') {
      fail(a.id + ": question must be non-empty and end with '?'");
    }
    if (a.dimension == Dimension::kConsistency && n != 2) {
      fail(a.id + ": consistency checks compare exactly two frames");
    }
    if (a.dimension == Dimension::kCompletion && n == 1) {
      first_frame_check |= a.frame_indices.front() == 1;
      last_frame_check |= a.frame_indices.front() == video::kCanonicalFrameCount;
    }
  }
  if (!first_frame_check || !last_frame_check) {
    fail("completion checks must include single-frame checks of frames 1 and 16");
  }
}

std::string assertion_system_prompt() {
  std::ostringstream out;
  out << kSystemInstruction << "\n\n"
      << "Example 1:\n" << kExemplarAttribute << "\n\n"
      << "Example 2:\n" << kExemplarRelation << "\n\n"
      << "Example 3:\n" << kExemplarBackground << "\n";
  return out.str();
}

std::string assertion_user_prompt(const corpus::TransitionPrompt& prompt) { return prompt.text; }

Json to_json(const AssertionSet& set) {
  Json assertions = Json::array();
  for (const auto& a : set.assertions) {
    assertions.push_back({{"id", a.id},
                          {"dimension", to_string(a.dimension)},
                          {"frame_indices", a.frame_indices},
                          {"question", a.question}});
  }
  return {{"prompt_id", set.prompt_id},
          {"generator_fingerprint", set.generator_fingerprint},
          {"n", set.assertions.size()},
          {"assertions", assertions}};
}

AssertionSet assertion_set_from_json(const Json& json) {
  AssertionSet set;
  set.prompt_id = json.at("prompt_id").get<std::string>();
  set.generator_fingerprint = json.value("generator_fingerprint", std::string{});
  for (const auto& a : json.at("assertions")) {
    set.assertions.push_back({a.at("id").get<std::string>(),
                              parse_dimension(a.at("dimension").get<std::string>()),
                              a.at("frame_indices").get<std::vector<int>>(),
                              a.at("question").get<std::string>()});
  }
  return set;
}

AssertionCache::AssertionCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::string AssertionCache::key(std::string_view prompt_text, std::string_view model) {
  return sha256_hex(sha256_hex(prompt_text) + "|" + std::string(kTemplateVersion) + "|" +
                    std::string(model));
}

std::optional<std::string> AssertionCache::get(const std::string& key) const {
  const auto path = dir_ / (key + ".json");
  std::lock_guard lock(mutex_);
  if (!std::filesystem::exists(path)) return std::nullopt;
  return read_text_file(path);
}

void AssertionCache::put(const std::string& key, const std::string& record) {
  std::lock_guard lock(mutex_);
  write_file_atomic(dir_ / (key + ".json"), record);
}

GeneratedAssertions generate_assertions(const corpus::TransitionPrompt& prompt, TextGenerator& llm,
                                        const GenerationOptions& options) {
  const auto key = AssertionCache::key(prompt.text, llm.model_name());
  if (options.cache) {
    if (const auto cached = options.cache->get(key)) {
      const auto record = Json::parse(*cached);
      GeneratedAssertions out;
      out.set = assertion_set_from_json(record);
      out.set.prompt_id = prompt.id;
      out.raw_text = record.value("raw_text", std::string{});
      out.cache_hit = true;
      return out;
    }
  }

  ChatRequest request;
  request.system = assertion_system_prompt();
  request.user = assertion_user_prompt(prompt);
  request.temperature = 0.0;
  const auto raw = with_retries(options.retry, "assertion generation for '" + prompt.id + "'",
                                [&] { return llm.complete(request); });

  GeneratedAssertions out;
  out.raw_text = raw;
  out.set = parse_assertion_text(raw);
  out.set.prompt_id = prompt.id;
  out.set.generator_fingerprint = llm.model_name() + "/" + std::string(kTemplateVersion);
  try {
    validate_assertion_set(out.set, prompt.category);
  } catch (const ValidationError& e) {
    throw AssertionParseError(0, e.what(), raw);
  }

  if (options.cache) {
    Json record = to_json(out.set);
    record["raw_text"] = raw;
    options.cache->put(key, record.dump());
  }
  return out;
}

std::vector<AssertionSet> load_assertion_store(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ValidationError("missing assertion store " + path.string() + " (run `tcb assert`)");
  }
  std::vector<AssertionSet> sets;
  for_each_jsonl(path, [&](std::size_t line, const Json& record) {
    try {
      sets.push_back(assertion_set_from_json(record));
    } catch (const Json::exception& e) {
      throw ParseError(line, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(line, e.what());
    }
  });
  return sets;
}

void save_assertion_store(const std::vector<GeneratedAssertions>& sets,
                          const std::filesystem::path& path) {
  std::vector<Json> records;
  for (const auto& generated : sets) {
    Json record = to_json(generated.set);
    record["raw_text"] = generated.raw_text;
    records.push_back(std::move(record));
  }
  write_file_atomic(path, to_jsonl(records));
}

}  // namespace tcb::assertion
