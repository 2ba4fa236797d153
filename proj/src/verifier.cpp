// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

#include "tcb/verifier.hpp"

#include <algorithm>
#include <cctype>
#include <iomanip>
#include <set>
#include <sstream>

#include "tcb/error.hpp"

namespace tcb::verifier {

using assertion::Assertion;
using assertion::AssertionSet;
using assertion::Dimension;

namespace {

constexpr std::string_view kReprompt = "Reply with exactly one word: Yes or No.";

bool in_scope(Dimension dimension) {
  return dimension == Dimension::kCompletion || dimension == Dimension::kConsistency;
}

// assertion id -> verdict, rejecting duplicates.
std::map<std::string, const Verdict*> index_verdicts(std::span<const Verdict> verdicts) {
  std::map<std::string, const Verdict*> by_id;
  for (const auto& v : verdicts) {
    if (!by_id.emplace(v.assertion_id, &v).second) {
      throw ValidationError("more than one verdict for assertion " + v.assertion_id);
    }
  }
  return by_id;
}

std::string format_fixed(double value, int digits) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << value;
  return out.str();
}

}  // namespace

std::string_view to_string(Answer answer) { return answer == Answer::kYes ? "Yes" : "No"; }

std::optional<Answer> parse_answer(std::string_view response) {
  auto text = trim(response);
  std::size_t end = 0;
  while (end < text.size() && std::isalpha(static_cast<unsigned char>(text[end]))) ++end;
  // Skip leading punctuation such as quotes or markdown emphasis.
  if (end == 0) {
    std::size_t begin = 0;
    while (begin < text.size() && !std::isalpha(static_cast<unsigned char>(text[begin]))) ++begin;
    if (begin == 0 || begin == text.size()) return std::nullopt;
    return parse_answer(text.substr(begin));
  }
  const auto token = to_lower(text.substr(0, end));
  if (token == "yes") return Answer::kYes;
  if (token == "no") return Answer::kNo;
  return std::nullopt;
}

std::string JudgePromptConfig::render(std::size_t frame_count, std::string_view question) const {
  std::string head = preamble;
  if (const auto pos = head.find("{n}"); pos != std::string::npos) {
    head.replace(pos, 3, std::to_string(frame_count));
    if (frame_count == 1) {
      if (const auto plural = head.find("frames"); plural != std::string::npos) {
        head.erase(plural + 5, 1);
      }
    }
  }
  std::string out = head;
  out += ' ';
  out += question;
  out += ' ';
  out += suffix;
  return out;
}

std::string JudgePromptConfig::fingerprint() const {
  return sha256_hex(preamble + "\x1f" + suffix).substr(0, 16);
}

JudgeCache::JudgeCache(std::filesystem::path path) {
  if (std::filesystem::exists(path)) {
    for_each_jsonl(path, [this](std::size_t, const Json& record) {
      entries_[record.at("key").get<std::string>()] = record.at("response").get<std::string>();
    });
  }
  journal_.emplace(std::move(path));
}

std::string JudgeCache::key(std::string_view image_hash, std::string_view prompt,
                            std::string_view model) {
  return std::string(image_hash) + ":" + sha256_hex(prompt) + ":" + std::string(model);
}

std::optional<std::string> JudgeCache::get(const std::string& key) const {
  std::lock_guard lock(mutex_);
  if (const auto it = entries_.find(key); it != entries_.end()) return it->second;
  return std::nullopt;
}

void JudgeCache::put(const std::string& key, const std::string& response) {
  std::lock_guard lock(mutex_);
  if (!entries_.emplace(key, response).second) return;
  if (journal_) journal_->append({{"key", key}, {"response", response}});
}

std::size_t JudgeCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

Verdict verify_assertion(const Assertion& assertion, const video::FrameSequence& seq,
                         VisionJudge& vlm, const VerifyOptions& options) {
  const auto composite = video::compose_horizontal(seq, assertion.frame_indices);
  const auto png = video::encode_png(composite.image);
  const auto prompt = options.prompt.render(composite.member_indices.size(), assertion.question);
  const auto key = JudgeCache::key(sha256_hex(std::span<const std::uint8_t>(png)), prompt,
                                   vlm.model_name());

  Verdict verdict;
  verdict.assertion_id = assertion.id;

  if (options.cache) {
    if (const auto cached = options.cache->get(key)) {
      if (const auto answer = parse_answer(*cached)) {
        verdict.answer = *answer;
        verdict.raw_response = *cached;
        return verdict;
      }
    }
  }

  const auto ask = [&](const std::string& text) {
    return with_retries(options.retry, "judge call for " + assertion.id,
                        [&] { return vlm.ask(png, text); });
  };

  try {
    auto response = ask(prompt);
    auto answer = parse_answer(response);
    if (!answer) {
      response = ask(prompt + " " + std::string(kReprompt));
      answer = parse_answer(response);
    }
    verdict.raw_response = response;
    if (!answer) {
      verdict.answer = Answer::kNo;
      verdict.degraded = true;
      return verdict;
    }
    verdict.answer = *answer;
    if (options.cache) options.cache->put(key, response);
  } catch (const ProviderError& e) {
    verdict.answer = Answer::kNo;
    verdict.degraded = true;
    verdict.raw_response = e.what();
  }
  return verdict;
}

int compute_tc(std::span<const Verdict> verdicts, const AssertionSet& assertions) {
  const auto by_id = index_verdicts(verdicts);
  bool all_yes = true;
  for (const auto& a : assertions.assertions) {
    if (!in_scope(a.dimension)) continue;
    const auto it = by_id.find(a.id);
    if (it == by_id.end()) {
      throw ValidationError("missing verdict for assertion " + a.id + " of '" +
                            assertions.prompt_id + "'");
    }
    all_yes = all_yes && it->second->answer == Answer::kYes;
  }
  return all_yes ? 1 : 0;
}

double compute_tcr(std::span<const int> tcs) {
  if (tcs.empty()) throw ValidationError("TCR of an empty video list");
  long long completed = 0;
  for (const int tc : tcs) {
    if (tc != 0 && tc != 1) throw ValidationError("TC values must be 0 or 1");
    completed += tc;
  }
  return static_cast<double>(completed) * 100.0 / static_cast<double>(tcs.size());
}

double compute_tc_score_t2v(std::span<const Verdict> verdicts, const AssertionSet& assertions) {
  if (assertions.assertions.empty()) throw ValidationError("TC-Score with N = 0 assertions");
  const auto by_id = index_verdicts(verdicts);
  std::size_t passed = 0;
  for (const auto& a : assertions.assertions) {
    const auto it = by_id.find(a.id);
    if (it == by_id.end()) throw ValidationError("missing verdict for assertion " + a.id);
    if (it->second->answer == Answer::kYes) ++passed;
  }
  return static_cast<double>(passed) / static_cast<double>(assertions.assertions.size());
}

std::size_t VideoEvaluation::degraded_count() const {
  return static_cast<std::size_t>(
      std::count_if(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.degraded; }));
}

VideoEvaluation evaluate_video(const AssertionSet& set, corpus::Category category,
                               const video::FrameSequence& seq, std::string video_id,
                               VisionJudge& vlm, const VideoVerifyOptions& options) {
  video::validate_sequence(seq);
  const video::FrameSequence* frames = &seq;
  video::FrameSequence resampled;
  if (options.mode == IndexMode::kResampleFirst && seq.size() != video::kCanonicalFrameCount) {
    resampled = video::resample_equal_gaps(seq, video::kCanonicalFrameCount);
    frames = &resampled;
  }

  std::vector<Assertion> targets = set.assertions;
  if (frames->size() != video::kCanonicalFrameCount) {
    for (auto& a : targets) {
      a.frame_indices = video::remap_indices(a.frame_indices, frames->size());
      a.frame_indices.erase(std::unique(a.frame_indices.begin(), a.frame_indices.end()),
                            a.frame_indices.end());
    }
  }

  VideoEvaluation eval;
  eval.prompt_id = set.prompt_id;
  eval.video_id = std::move(video_id);
  eval.category = category;
  eval.verdicts.resize(targets.size());
  parallel_for(targets.size(), options.max_in_flight, [&](std::size_t i) {
    if (options.limiter) options.limiter->acquire();
    eval.verdicts[i] = verify_assertion(targets[i], *frames, vlm, options.verify);
  });
  eval.tc = compute_tc(eval.verdicts, set);
  eval.tc_score = compute_tc_score_t2v(eval.verdicts, set);
  return eval;
}

ModelReport aggregate_report(std::span<const VideoEvaluation> evals,
                             const std::map<std::string, corpus::Category>& categories,
                             std::string model, ReplicatePolicy policy) {
  if (evals.empty()) throw ValidationError("cannot aggregate an empty evaluation list");

  std::vector<const VideoEvaluation*> selected;
  if (policy == ReplicatePolicy::kAllVideos) {
    for (const auto& e : evals) selected.push_back(&e);
  } else {
    std::map<std::string, const VideoEvaluation*> best;
    for (const auto& e : evals) {
      auto& slot = best[e.prompt_id];
      const auto better = [&](const VideoEvaluation* current) {
        if (e.tc != current->tc) return e.tc > current->tc;
        if (e.tc_score != current->tc_score) return e.tc_score > current->tc_score;
        return e.video_id < current->video_id;
      };
      if (slot == nullptr || better(slot)) slot = &e;
    }
    for (const auto& [id, e] : best) selected.push_back(e);
  }

  ModelReport report;
  report.model = std::move(model);
  std::map<corpus::Category, std::vector<int>> tcs;
  std::map<corpus::Category, double> score_sums;
  std::vector<int> all_tcs;
  double all_scores = 0.0;
  for (const auto* e : selected) {
    const auto it = categories.find(e->prompt_id);
    if (it == categories.end()) {
      throw ValidationError("evaluation refers to unknown prompt '" + e->prompt_id + "'");
    }
    tcs[it->second].push_back(e->tc);
    score_sums[it->second] += e->tc_score;
    all_tcs.push_back(e->tc);
    all_scores += e->tc_score;
    report.degraded_verdicts += e->degraded_count();
    report.total_verdicts += e->verdicts.size();
  }
  for (const auto& [category, values] : tcs) {
    report.per_category[category] = {compute_tcr(values),
                                     score_sums[category] / static_cast<double>(values.size()),
                                     values.size()};
  }
  report.overall = {compute_tcr(all_tcs), all_scores / static_cast<double>(all_tcs.size()),
                    all_tcs.size()};
  return report;
}

Json to_json(const ModelReport& report) {
  Json categories = Json::object();
  for (const auto& [category, stats] : report.per_category) {
    categories[std::string(corpus::to_string(category))] = {
        {"tcr", stats.tcr}, {"tc_score", stats.mean_tc_score}, {"videos", stats.videos}};
  }
  const double degraded_fraction =
      report.total_verdicts == 0
          ? 0.0
          : static_cast<double>(report.degraded_verdicts) / static_cast<double>(report.total_verdicts);
  return {{"model", report.model},
          {"categories", categories},
          {"overall",
           {{"tcr", report.overall.tcr},
            {"tc_score", report.overall.mean_tc_score},
            {"videos", report.overall.videos}}},
          {"degraded_verdicts", report.degraded_verdicts},
          {"total_verdicts", report.total_verdicts},
          {"degraded_fraction", degraded_fraction}};
}

std::string report_csv(std::span<const ModelReport> reports) {
  std::ostringstream out;
  out << "model";
  for (const auto* name : {"attribute", "object_relation", "background", "overall"}) {
    out << ',' << name << "_tcr," << name << "_tc_score";
  }
  out << ",videos\n";
  for (const auto& r : reports) {
    out << r.model;
    for (const auto category : {corpus::Category::kAttribute, corpus::Category::kObjectRelation,
                                corpus::Category::kBackground}) {
      const auto it = r.per_category.find(category);
      if (it == r.per_category.end()) {
        out << ",,";
      } else {
        out << ',' << format_fixed(it->second.tcr, 2) << ','
            << format_fixed(it->second.mean_tc_score, 4);
      }
    }
    out << ',' << format_fixed(r.overall.tcr, 2) << ',' << format_fixed(r.overall.mean_tc_score, 4)
        << ',' << r.overall.videos << '\n';
  }
  return out.str();
}

Json to_json(const VerdictRecord& record) {
  return {{"prompt_id", record.prompt_id},
          {"video_id", record.video_id},
          {"category", corpus::to_string(record.category)},
          {"assertion_id", record.assertion.id},
          {"dimension", assertion::to_string(record.assertion.dimension)},
          {"frame_indices", record.assertion.frame_indices},
          {"question", record.assertion.question},
          {"answer", to_string(record.verdict.answer)},
          {"raw_response", record.verdict.raw_response},
          {"degraded", record.verdict.degraded}};
}

VerdictRecord verdict_record_from_json(const Json& json) {
  VerdictRecord record;
  record.prompt_id = json.at("prompt_id").get<std::string>();
  record.video_id = json.at("video_id").get<std::string>();
  record.category = corpus::parse_category(json.at("category").get<std::string>());
  record.assertion.id = json.at("assertion_id").get<std::string>();
  record.assertion.dimension = assertion::parse_dimension(json.at("dimension").get<std::string>());
  record.assertion.frame_indices = json.value("frame_indices", std::vector<int>{});
  record.assertion.question = json.value("question", std::string{});
  const auto answer = to_lower(json.at("answer").get<std::string>());
  if (answer != "yes" && answer != "no") throw ValidationError("answer must be Yes or No");
  record.verdict.assertion_id = record.assertion.id;
  record.verdict.answer = answer == "yes" ? Answer::kYes : Answer::kNo;
  record.verdict.raw_response = json.value("raw_response", std::string{});
  record.verdict.degraded = json.value("degraded", false);
  return record;
}

std::vector<VerdictRecord> records_of(const VideoEvaluation& eval, const AssertionSet& set) {
  std::vector<VerdictRecord> out;
  for (const auto& verdict : eval.verdicts) {
    const auto* a = set.find(verdict.assertion_id);
    if (a == nullptr) throw ValidationError("verdict for unknown assertion " + verdict.assertion_id);
    out.push_back({eval.prompt_id, eval.video_id, eval.category, *a, verdict});
  }
  return out;
}

std::vector<VerdictRecord> load_verdicts(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ValidationError("missing verdict store " + path.string() + " (run `tcb verify`)");
  }
  std::vector<VerdictRecord> records;
  for_each_jsonl(path, [&](std::size_t line, const Json& json) {
    try {
      records.push_back(verdict_record_from_json(json));
    } catch (const Json::exception& e) {
      throw ParseError(line, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(line, e.what());
    }
  });
  return records;
}

std::vector<VideoEvaluation> evaluations_from_records(std::span<const VerdictRecord> records) {
  struct Group {
    AssertionSet set;
    VideoEvaluation eval;
  };
  std::map<std::string, Group> groups;
  for (const auto& r : records) {
    auto& g = groups[r.video_id];
    if (g.eval.video_id.empty()) {
      g.eval.video_id = r.video_id;
      g.eval.prompt_id = r.prompt_id;
      g.eval.category = r.category;
      g.set.prompt_id = r.prompt_id;
    } else if (g.eval.prompt_id != r.prompt_id) {
      throw ValidationError("video '" + r.video_id + "' has verdicts for two prompts");
    }
    g.set.assertions.push_back(r.assertion);
    g.eval.verdicts.push_back(r.verdict);
  }
  std::vector<VideoEvaluation> out;
  out.reserve(groups.size());
  for (auto& [id, g] : groups) {
    g.eval.tc = compute_tc(g.eval.verdicts, g.set);
    g.eval.tc_score = compute_tc_score_t2v(g.eval.verdicts, g.set);
    out.push_back(std::move(g.eval));
  }
  return out;
}

}  // namespace tcb::verifier
