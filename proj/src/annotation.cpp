// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

#include "tcb/annotation.hpp"

#include <httplib.h>

#include <algorithm>
#include <mutex>
#include <set>

namespace tcb::annotation {
namespace {

using Kind = AnnotationError::Kind;

std::string video_url(const std::string& video) {
  if (video.starts_with("http://") || video.starts_with("https://") || video.starts_with("/")) {
    return video;
  }
  return "/videos/" + video;
}

}  // namespace

Pool pool_from_json(const Json& json) {
  Pool pool;
  try {
    pool.annotators = json.at("annotators").get<std::vector<std::string>>();
    for (const auto& v : json.at("videos")) {
      pool.videos.push_back({v.at("video_id").get<std::string>(), v.value("prompt", std::string{}),
                             v.value("video", std::string{})});
    }
    pool.instructions = json.value("instructions", Json::array());
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed annotation pool: ") + e.what());
  }
  return pool;
}

Pool load_pool(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ValidationError("no pool file " + path.string());
  try {
    return pool_from_json(Json::parse(read_text_file(path)));
  } catch (const Json::parse_error& e) {
    throw ValidationError("pool file " + path.string() + " is not JSON: " + e.what());
  }
}

Json to_json(const AnnotationTask& task) {
  return {{"task_id", task.task_id},
          {"video_id", task.video_id},
          {"prompt", task.prompt},
          {"video_url", task.video_url},
          {"assigned_annotator", task.assigned_annotator}};
}

AnnotationService::AnnotationService(Pool pool, std::filesystem::path journal)
    : pool_(std::move(pool)) {
  const auto annotator_count = pool_.annotators.size();
  if (annotator_count < static_cast<std::size_t>(kAnnotatorsPerVideo)) {
    throw ValidationError("the pool needs at least 3 annotators, got " +
                          std::to_string(annotator_count));
  }
  std::set<std::string> seen;
  for (const auto& a : pool_.annotators) {
    if (a.empty() || !seen.insert(a).second) {
      throw ValidationError("annotator ids must be non-empty and unique ('" + a + "')");
    }
    queues_[a];
  }
  seen.clear();
  for (std::size_t v = 0; v < pool_.videos.size(); ++v) {
    const auto& video = pool_.videos[v];
    if (video.video_id.empty() || !seen.insert(video.video_id).second) {
      throw ValidationError("video ids must be non-empty and unique ('" + video.video_id + "')");
    }
    for (int slot = 0; slot < kAnnotatorsPerVideo; ++slot) {
      const auto& annotator = pool_.annotators[(v * kAnnotatorsPerVideo + slot) % annotator_count];
      AnnotationTask task{video.video_id + ":" + std::to_string(slot + 1), video.video_id,
                          video.prompt, video_url(video.video), annotator};
      queues_[annotator].push_back(task.task_id);
      auto id = task.task_id;
      tasks_.emplace(std::move(id), TaskState{std::move(task), false});
    }
  }

  if (std::filesystem::exists(journal)) {
    for_each_jsonl(journal, [this](std::size_t line, const Json& record) {
      try {
        analysis::HumanRating r{record.at("video_id").get<std::string>(),
                                record.at("annotator_id").get<std::string>(),
                                record.at("q1").get<int>(), record.at("q2").get<int>()};
        apply(r, record.at("task_id").get<std::string>());
      } catch (const Json::exception& e) {
        throw ParseError(line, e.what());
      } catch (const ValidationError& e) {
        throw ParseError(line, std::string("journal disagrees with pool: ") + e.what());
      }
    });
  }
  journal_ = std::make_unique<JsonlAppender>(std::move(journal));
}

void AnnotationService::require_annotator(const std::string& annotator_id) const {
  if (!queues_.contains(annotator_id)) {
    throw AnnotationError(Kind::kNotFound, "unknown annotator '" + annotator_id + "'");
  }
}

void AnnotationService::apply(const analysis::HumanRating& rating, const std::string& task_id) {
  require_annotator(rating.annotator_id);
  const auto it = tasks_.find(task_id);
  if (it == tasks_.end()) throw AnnotationError(Kind::kNotFound, "unknown task '" + task_id + "'");
  auto& state = it->second;
  if (state.task.assigned_annotator != rating.annotator_id) {
    throw AnnotationError(Kind::kConflict,
                          "task '" + task_id + "' is not assigned to '" + rating.annotator_id + "'");
  }
  if (state.rated) {
    throw AnnotationError(Kind::kConflict, "task '" + task_id + "' has already been rated");
  }
  if (state.task.video_id != rating.video_id) {
    throw AnnotationError(Kind::kInvalid, "task '" + task_id + "' is for another video");
  }
  try {
    analysis::validate_rating(rating);
  } catch (const ValidationError& e) {
    throw AnnotationError(Kind::kInvalid, e.what());
  }
  state.rated = true;
  ratings_.push_back(rating);
  if (const auto cur = current_.find(rating.annotator_id);
      cur != current_.end() && cur->second == task_id) {
    current_.erase(cur);
  }
}

std::optional<AnnotationTask> AnnotationService::next_task(const std::string& annotator_id) {
  std::unique_lock lock(mutex_);
  require_annotator(annotator_id);
  if (const auto cur = current_.find(annotator_id); cur != current_.end()) {
    return tasks_.at(cur->second).task;
  }
  for (const auto& id : queues_.at(annotator_id)) {
    const auto& state = tasks_.at(id);
    if (!state.rated) {
      current_[annotator_id] = id;
      return state.task;
    }
  }
  return std::nullopt;
}

void AnnotationService::release(const std::string& annotator_id, const std::string& task_id) {
  std::unique_lock lock(mutex_);
  require_annotator(annotator_id);
  auto& queue = queues_.at(annotator_id);
  const auto it = std::find(queue.begin(), queue.end(), task_id);
  if (it == queue.end()) {
    throw AnnotationError(Kind::kNotFound,
                          "task '" + task_id + "' is not assigned to '" + annotator_id + "'");
  }
  std::rotate(it, it + 1, queue.end());
  if (const auto cur = current_.find(annotator_id); cur != current_.end() && cur->second == task_id) {
    current_.erase(cur);
  }
}

analysis::HumanRating AnnotationService::submit_rating(const std::string& annotator_id,
                                                       const std::string& task_id, int q1, int q2) {
  std::unique_lock lock(mutex_);
  require_annotator(annotator_id);
  const auto it = tasks_.find(task_id);
  if (it == tasks_.end()) throw AnnotationError(Kind::kNotFound, "unknown task '" + task_id + "'");
  const analysis::HumanRating rating{it->second.task.video_id, annotator_id, q1, q2};

  // Checked before journaling so that a rejected rating never reaches disk.
  const auto& state = it->second;
  if (state.task.assigned_annotator != annotator_id) {
    throw AnnotationError(Kind::kConflict,
                          "task '" + task_id + "' is not assigned to '" + annotator_id + "'");
  }
  if (state.rated) throw AnnotationError(Kind::kConflict, "task '" + task_id + "' has already been rated");
  try {
    analysis::validate_rating(rating);
  } catch (const ValidationError& e) {
    throw AnnotationError(Kind::kInvalid, e.what());
  }

  journal_->append({{"task_id", task_id},
                    {"video_id", rating.video_id},
                    {"annotator_id", annotator_id},
                    {"q1", q1},
                    {"q2", q2}});
  apply(rating, task_id);
  return rating;
}

std::vector<analysis::HumanRating> AnnotationService::ratings() const {
  std::shared_lock lock(mutex_);
  return ratings_;
}

std::string AnnotationService::export_csv() const { return analysis::ratings_csv(ratings()); }

std::size_t AnnotationService::remaining(const std::string& annotator_id) const {
  std::shared_lock lock(mutex_);
  require_annotator(annotator_id);
  const auto& queue = queues_.at(annotator_id);
  return static_cast<std::size_t>(std::count_if(
      queue.begin(), queue.end(), [&](const std::string& id) { return !tasks_.at(id).rated; }));
}

std::vector<AnnotationTask> AnnotationService::assignments(const std::string& annotator_id) const {
  std::shared_lock lock(mutex_);
  require_annotator(annotator_id);
  std::vector<AnnotationTask> out;
  for (const auto& id : queues_.at(annotator_id)) out.push_back(tasks_.at(id).task);
  return out;
}

struct AnnotationServer::Impl {
  Impl(AnnotationService& s, ServerOptions o) : service(s), options(std::move(o)) {}

  AnnotationService& service;
  ServerOptions options;
  httplib::Server server;
  int port = 0;
};

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const AnnotationError& e) {
  const int status = e.kind() == Kind::kNotFound ? 404 : e.kind() == Kind::kConflict ? 409 : 400;
  send_json(res, status, {{"error", e.what()}});
}

}  // namespace

AnnotationServer::AnnotationServer(AnnotationService& service, ServerOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {
  auto& server = impl_->server;
  auto& svc = impl_->service;

  server.Get("/api/health", [&svc](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200,
              {{"status", "ok"},
               {"videos", svc.pool().videos.size()},
               {"ratings", svc.ratings().size()}});
  });

  server.Get("/api/config", [&svc](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"instructions", svc.pool().instructions}});
  });

  server.Get(R"(/api/annotator/([^/]+)/next)",
             [&svc](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1];
               try {
                 const auto task = svc.next_task(id);
                 send_json(res, 200,
                           {{"task", task ? to_json(*task) : Json(nullptr)},
                            {"remaining", svc.remaining(id)}});
               } catch (const AnnotationError& e) {
                 send_error(res, e);
               }
             });

  server.Post(R"(/api/annotator/([^/]+)/release)",
              [&svc](const httplib::Request& req, httplib::Response& res) {
                try {
                  const auto body = Json::parse(req.body);
                  svc.release(req.matches[1], body.at("task_id").get<std::string>());
                  send_json(res, 200, {{"status", "released"}});
                } catch (const AnnotationError& e) {
                  send_error(res, e);
                } catch (const Json::exception& e) {
                  send_json(res, 400, {{"error", std::string("bad request body: ") + e.what()}});
                }
              });

  server.Post("/api/ratings", [&svc](const httplib::Request& req, httplib::Response& res) {
    Json body;
    try {
      body = Json::parse(req.body);
      const auto annotator = body.at("annotator_id").get<std::string>();
      const auto task = body.at("task_id").get<std::string>();
      if (!body.at("q1").is_number_integer() || !body.at("q2").is_number_integer()) {
        send_json(res, 400, {{"error", "q1 and q2 must be integers in 1..5"}});
        return;
      }
      const auto rating =
          svc.submit_rating(annotator, task, body.at("q1").get<int>(), body.at("q2").get<int>());
      send_json(res, 201,
                {{"status", "ok"},
                 {"rating",
                  {{"video_id", rating.video_id},
                   {"annotator_id", rating.annotator_id},
                   {"q1", rating.q1},
                   {"q2", rating.q2}}}});
    } catch (const AnnotationError& e) {
      send_error(res, e);
    } catch (const Json::exception& e) {
      send_json(res, 400, {{"error", std::string("bad request body: ") + e.what()}});
    }
  });

  server.Get("/api/export.csv", [&svc](const httplib::Request&, httplib::Response& res) {
    res.status = 200;
    res.set_content(svc.export_csv(), "text/csv");
  });

  if (impl_->options.video_dir) {
    if (!server.set_mount_point("/videos", impl_->options.video_dir->string())) {
      throw ValidationError("cannot serve videos from " + impl_->options.video_dir->string());
    }
  }
  if (impl_->options.static_dir) {
    if (!server.set_mount_point("/", impl_->options.static_dir->string())) {
      throw ValidationError("cannot serve UI bundle from " + impl_->options.static_dir->string());
    }
  }
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind() {
  auto& o = impl_->options;
  if (o.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(o.host);
    if (impl_->port < 0) throw ValidationError("cannot bind " + o.host);
  } else {
    if (!impl_->server.bind_to_port(o.host, o.port)) {
      throw ValidationError("cannot bind " + o.host + ":" + std::to_string(o.port));
    }
    impl_->port = o.port;
  }
  return impl_->port;
}

void AnnotationServer::listen() { impl_->server.listen_after_bind(); }

void AnnotationServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace tcb::annotation
