// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

// Annotation task pool, rating journal and the HTTP service in front of them.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "tcb/analysis.hpp"
#include "tcb/error.hpp"
#include "tcb/io.hpp"

namespace tcb::annotation {

inline constexpr int kAnnotatorsPerVideo = 3;
inline constexpr int kDefaultPort = 8787;

struct PoolVideo {
  std::string video_id;
  std::string prompt;
  std::string video;  // path relative to the video root, or an http(s) URL
};

// Pool file (JSON): {"annotators": [...], "videos": [{"video_id", "prompt",
// "video"}], "instructions": [...]}.
struct Pool {
  std::vector<std::string> annotators;
  std::vector<PoolVideo> videos;
  Json instructions = Json::array();
};

Pool load_pool(const std::filesystem::path& path);
Pool pool_from_json(const Json& json);

struct AnnotationTask {
  std::string task_id;
  std::string video_id;
  std::string prompt;
  std::string video_url;
  std::string assigned_annotator;
};

Json to_json(const AnnotationTask& task);

class AnnotationError : public ValidationError {
 public:
  enum class Kind { kInvalid, kNotFound, kConflict };
  AnnotationError(Kind kind, const std::string& message) : ValidationError(message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// Tasks are assigned round-robin when the service is built: slot s of video v
// goes to annotator (v * 3 + s) mod A, so each video gets 3 distinct
// annotators when A >= 3. Ratings are journaled before they become visible.
class AnnotationService {
 public:
  // Replays `journal` if it exists. Throws ValidationError for fewer than 3
  // annotators, duplicate ids, or a journal inconsistent with the pool.
  AnnotationService(Pool pool, std::filesystem::path journal);

  // Sticky: returns the same task until it is rated or released.
  std::optional<AnnotationTask> next_task(const std::string& annotator_id);
  // Moves the task to the back of the annotator's queue.
  void release(const std::string& annotator_id, const std::string& task_id);
  analysis::HumanRating submit_rating(const std::string& annotator_id, const std::string& task_id,
                                      int q1, int q2);

  std::vector<analysis::HumanRating> ratings() const;
  std::string export_csv() const;
  std::size_t remaining(const std::string& annotator_id) const;
  std::vector<AnnotationTask> assignments(const std::string& annotator_id) const;
  const Pool& pool() const { return pool_; }

 private:
  struct TaskState {
    AnnotationTask task;
    bool rated = false;
  };

  void require_annotator(const std::string& annotator_id) const;
  void apply(const analysis::HumanRating& rating, const std::string& task_id);

  Pool pool_;
  std::map<std::string, TaskState> tasks_;
  std::map<std::string, std::vector<std::string>> queues_;  // annotator -> task ids
  std::map<std::string, std::string> current_;              // sticky assignment
  std::vector<analysis::HumanRating> ratings_;
  std::unique_ptr<JsonlAppender> journal_;
  mutable std::shared_mutex mutex_;
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = kDefaultPort;  // 0 picks a free port
  std::optional<std::filesystem::path> static_dir;  // UI bundle, mounted at /
  std::optional<std::filesystem::path> video_dir;   // mounted at /videos
};

// HTTP front end:
//   GET  /api/health
//   GET  /api/config
//   GET  /api/annotator/{id}/next       -> {"task": task|null, "remaining": n}
//   POST /api/annotator/{id}/release    {task_id}
//   POST /api/ratings                   {annotator_id, task_id, q1, q2}
//   GET  /api/export.csv
class AnnotationServer {
 public:
  AnnotationServer(AnnotationService& service, ServerOptions options);
  ~AnnotationServer();

  // Binds and returns the bound port. Throws ValidationError when binding fails.
  int bind();
  // Blocks until stop() is called.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tcb::annotation
