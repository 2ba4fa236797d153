// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

// Shared fixtures: a three-prompt toy corpus built from the worked exemplars,
// scripted providers for it, and synthetic frame directories.

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tcb/corpus.hpp"
#include "tcb/io.hpp"
#include "tcb/providers.hpp"

namespace tcb::testing {

std::filesystem::path data_dir();
std::string read_exemplar(std::string_view category);

// Removed on destruction.
class TempDir {
 public:
  explicit TempDir(std::string_view tag = "tcb");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(std::string_view name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// attr-chameleon, rel-ball, bg-bench.
corpus::CorpusManifest toy_corpus();

// Prompt text -> verbatim exemplar layout.
std::map<std::string, std::string> toy_llm_responses();

// "No" to questions about the right hand or the bench; pair with a "Yes"
// default answer.
std::vector<ScriptedJudge::Rule> toy_judge_rules();

// Writes <root>/<prompt_id>__<r>/frame_0001.png ... for every toy prompt.
// Frames are small solid-color images that drift over time.
void write_toy_frames(const std::filesystem::path& root, int replicates = 2, int frames = 16);

// Script files for the scripted providers, in the format the config loader
// reads.
void write_llm_script(const std::filesystem::path& path);
void write_judge_script(const std::filesystem::path& path);

// A config file selecting the scripted providers and the histogram embedder.
void write_offline_config(const std::filesystem::path& path, const std::filesystem::path& llm_script,
                          const std::filesystem::path& judge_script,
                          const std::filesystem::path& cache_dir);

}  // namespace tcb::testing
