// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

#include "tcb/pipeline.hpp"

#include <algorithm>
#include <set>

#include "tcb/error.hpp"

namespace tcb::pipeline {
namespace {

constexpr const char* kSourceRecord = ".source.json";

std::vector<consistency::EmbeddingVector> resample(
    const std::vector<consistency::EmbeddingVector>& v, int count) {
  if (static_cast<int>(v.size()) == count) return v;
  std::vector<consistency::EmbeddingVector> out;
  for (const int i : video::equal_gap_indices(static_cast<int>(v.size()), count)) {
    out.push_back(v[static_cast<std::size_t>(i - 1)]);
  }
  return out;
}

}  // namespace

std::string prompt_id_of(std::string_view video_id) {
  const auto pos = video_id.find("__");
  return std::string(pos == std::string_view::npos ? video_id : video_id.substr(0, pos));
}

std::vector<std::filesystem::path> frame_dirs(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) {
    throw ValidationError("missing frame directory " + root.string() + " (run `tcb extract`)");
  }
  if (std::filesystem::exists(root / "frame_0001.png")) return {root};
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "frame_0001.png")) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) {
    throw ValidationError("no frame directories under " + root.string() + " (run `tcb extract`)");
  }
  return dirs;
}

std::vector<std::filesystem::path> video_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ValidationError("no video directory " + dir.string());
  static const std::set<std::string> kExtensions = {".mp4", ".avi", ".mov", ".mkv", ".webm", ".gif"};
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && kExtensions.contains(to_lower(entry.path().extension().string()))) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

ExtractResult extract_stage(const std::filesystem::path& videos, const std::filesystem::path& out,
                            double fps, int count) {
  ExtractResult result;
  const auto files = video_files(videos);
  if (files.empty()) throw ValidationError("no video files in " + videos.string());
  for (const auto& file : files) {
    const auto dir = out / file.stem();
    try {
      const auto key = video::frame_cache_key(file, fps, count);
      const auto record = dir / kSourceRecord;
      if (std::filesystem::exists(record)) {
        const auto existing = Json::parse(read_text_file(record));
        if (existing.value("key", "") == key) {
          ++result.reused;
          continue;
        }
      }
      const auto seq = video::extract_frames(file, fps, count);
      std::filesystem::remove_all(dir);
      video::save_frames(seq, dir);
      write_file_atomic(record, Json{{"key", key},
                                     {"video", file.filename().string()},
                                     {"fps", fps},
                                     {"frames", count}}
                                    .dump(2) +
                                    "\n");
      ++result.extracted;
    } catch (const ValidationError& e) {
      result.failures.emplace_back(file.filename().string(), e.what());
    }
  }
  return result;
}

VerifyStageResult verify_stage(const std::vector<assertion::AssertionSet>& sets,
                               const corpus::CorpusManifest& corpus,
                               const std::filesystem::path& frames_root, VisionJudge& vlm,
                               const VerifyStageOptions& options) {
  std::map<std::string, const assertion::AssertionSet*> by_prompt;
  for (const auto& s : sets) by_prompt[s.prompt_id] = &s;

  VerifyStageResult result;
  for (const auto& dir : frame_dirs(frames_root)) {
    const auto video_id = dir.filename().string();
    const auto prompt_id = prompt_id_of(video_id);
    const auto it = by_prompt.find(prompt_id);
    const auto* prompt = corpus.find(prompt_id);
    if (it == by_prompt.end() || prompt == nullptr) {
      result.skipped.push_back(video_id);
      continue;
    }
    const auto seq = video::load_frames(dir, options.fps);
    auto eval = verifier::evaluate_video(*it->second, prompt->category, seq, video_id, vlm,
                                         options.video);
    auto records = verifier::records_of(eval, *it->second);
    result.records.insert(result.records.end(), records.begin(), records.end());
    result.evaluations.push_back(std::move(eval));
  }
  return result;
}

void write_verdicts(const std::vector<verifier::VerdictRecord>& records,
                    const std::filesystem::path& path) {
  std::vector<Json> lines;
  lines.reserve(records.size());
  for (const auto& r : records) lines.push_back(verifier::to_json(r));
  write_file_atomic(path, to_jsonl(lines));
}

void save_embeddings(const std::vector<consistency::EmbeddingVector>& vectors,
                     const std::filesystem::path& path) {
  if (vectors.empty()) throw ValidationError("no embeddings to save");
  Json values = Json::array();
  for (const auto& v : vectors) values.push_back(v.values);
  write_file_atomic(path,
                    Json{{"fingerprint", vectors.front().model_fingerprint}, {"vectors", values}}
                            .dump() +
                        "\n");
}

std::vector<consistency::EmbeddingVector> load_embeddings(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ValidationError("missing embeddings " + path.string() + " (run `tcb embed`)");
  }
  try {
    const auto json = Json::parse(read_text_file(path));
    const auto fingerprint = json.at("fingerprint").get<std::string>();
    std::vector<consistency::EmbeddingVector> out;
    for (const auto& v : json.at("vectors")) {
      const auto raw = v.get<std::vector<float>>();
      out.push_back(consistency::make_embedding(raw, fingerprint));
    }
    return out;
  } catch (const Json::exception& e) {
    throw ValidationError("malformed embeddings " + path.string() + ": " + e.what());
  }
}

Json score_stage(const std::vector<verifier::VerdictRecord>& records, const ScoreOptions& options) {
  if (records.empty()) throw ValidationError("verdict store is empty");
  auto evals = verifier::evaluations_from_records(records);

  if (options.mode == ScoreMode::kI2V) {
    if (!options.embeddings_dir) {
      throw ValidationError(
          "--mode i2v needs frame embeddings: run `tcb embed --frames FRAMES --out EMB` and pass "
          "`--embeddings EMB`");
    }
    if (options.reference == ReferenceMode::kGroundTruth && !options.ground_truth_dir) {
      throw ValidationError(
          "--ref groundtruth needs ground-truth embeddings: pass `--gt-embeddings DIR` with one "
          "<prompt_id>.json per prompt");
    }
    consistency::validate_weights(options.weights);
    for (auto& e : evals) {
      const auto embeds = load_embeddings(*options.embeddings_dir / (e.video_id + ".json"));
      consistency::ConsistencyScore score;
      if (options.reference == ReferenceMode::kConsecutive) {
        score = consistency::consecutive_consistency(embeds, options.range);
      } else {
        const auto ref = load_embeddings(*options.ground_truth_dir / (e.prompt_id + ".json"));
        score = consistency::framewise_consistency(resample(embeds, options.frames),
                                                   resample(ref, options.frames), options.range);
      }
      e.pass_rate = e.tc_score;
      e.consistency = score.mean_mapped;
      e.tc_score = consistency::tc_score_i2v(*e.pass_rate, score, options.weights);
    }
  }

  std::map<std::string, corpus::Category> categories;
  for (const auto& e : evals) categories[e.prompt_id] = e.category;
  const auto report = verifier::aggregate_report(evals, categories, options.model, options.policy);

  Json videos = Json::array();
  for (const auto& e : evals) {
    Json v = {{"video_id", e.video_id},
              {"prompt_id", e.prompt_id},
              {"category", corpus::to_string(e.category)},
              {"n", e.verdicts.size()},
              {"tc", e.tc},
              {"tc_score", e.tc_score},
              {"degraded", e.degraded_count()}};
    if (e.pass_rate) v["pass_rate"] = *e.pass_rate;
    if (e.consistency) v["consistency"] = *e.consistency;
    videos.push_back(std::move(v));
  }
  Json out = {{"mode", options.mode == ScoreMode::kT2V ? "t2v" : "i2v"},
              {"replicate_policy", options.policy == verifier::ReplicatePolicy::kAllVideos
                                       ? "all-videos"
                                       : "per-prompt-best"},
              {"report", verifier::to_json(report)},
              {"videos", videos}};
  if (options.mode == ScoreMode::kI2V) {
    out["reference"] = options.reference == ReferenceMode::kConsecutive ? "consecutive" : "groundtruth";
    out["weights"] = {options.weights.w1, options.weights.w2};
    out["similarity_range"] = {options.range.lo, options.range.hi};
  }
  return out;
}

}  // namespace tcb::pipeline
