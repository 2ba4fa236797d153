// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <httplib.h>

#include <set>
#include <thread>

#include "tcb/annotation.hpp"
#include "toy.hpp"

namespace tcb::annotation {
namespace {

using testing::TempDir;

Pool make_pool(int videos, std::vector<std::string> annotators = {"ann1", "ann2", "ann3", "ann4"}) {
  Pool pool;
  pool.annotators = std::move(annotators);
  for (int i = 1; i <= videos; ++i) {
    pool.videos.push_back({"v" + std::to_string(i), "prompt " + std::to_string(i),
                           "v" + std::to_string(i) + ".mp4"});
  }
  pool.instructions = Json::array({"Rate each question from 1 to 5."});
  return pool;
}

TEST(Pool, ParsesJsonAndRejectsMalformed) {
  const auto pool = pool_from_json(Json::parse(
      R"({"annotators":["a","b","c"],"videos":[{"video_id":"x","prompt":"p","video":"https://h/x.mp4"}]})"));
  EXPECT_EQ(pool.videos[0].video, "https://h/x.mp4");
  EXPECT_THROW(pool_from_json(Json::parse(R"({"videos":[]})")), ValidationError);
  TempDir dir;
  EXPECT_THROW(load_pool(dir / "none.json"), ValidationError);
}

TEST(Service, AssignsEachVideoToThreeDistinctAnnotators) {
  TempDir dir;
  AnnotationService svc(make_pool(5), dir / "j.jsonl");
  std::map<std::string, std::set<std::string>> by_video;
  std::size_t total = 0;
  for (const auto& a : svc.pool().annotators) {
    for (const auto& t : svc.assignments(a)) {
      by_video[t.video_id].insert(a);
      ++total;
    }
  }
  EXPECT_EQ(total, 15U);
  for (const auto& [video, annotators] : by_video) EXPECT_EQ(annotators.size(), 3U) << video;
  EXPECT_EQ(svc.assignments("ann1").front().video_url, "/videos/v1.mp4");
}

TEST(Service, RejectsSmallOrDuplicatePools) {
  TempDir dir;
  EXPECT_THROW(AnnotationService(make_pool(1, {"a", "b"}), dir / "j"), ValidationError);
  EXPECT_THROW(AnnotationService(make_pool(1, {"a", "b", "a"}), dir / "j"), ValidationError);
  auto dup = make_pool(2);
  dup.videos[1].video_id = "v1";
  EXPECT_THROW(AnnotationService(dup, dir / "j"), ValidationError);
}

TEST(Service, NextIsStickyUntilRatedOrReleased) {
  TempDir dir;
  AnnotationService svc(make_pool(3), dir / "j.jsonl");
  const auto first = svc.next_task("ann1");
  ASSERT_TRUE(first);
  EXPECT_EQ(svc.next_task("ann1")->task_id, first->task_id);
  svc.release("ann1", first->task_id);
  const auto second = svc.next_task("ann1");
  ASSERT_TRUE(second);
  EXPECT_NE(second->task_id, first->task_id);
  svc.submit_rating("ann1", second->task_id, 4, 5);
  EXPECT_NE(svc.next_task("ann1")->task_id, second->task_id);
}

TEST(Service, SubmissionErrorsAreClassified) {
  TempDir dir;
  AnnotationService svc(make_pool(2), dir / "j.jsonl");
  const auto task = *svc.next_task("ann1");
  const auto kind_of = [&](const std::string& annotator, const std::string& id, int q1) {
    try {
      svc.submit_rating(annotator, id, q1, 3);
    } catch (const AnnotationError& e) {
      return static_cast<int>(e.kind());
    }
    return -1;
  };
  EXPECT_EQ(kind_of("nobody", task.task_id, 3), static_cast<int>(AnnotationError::Kind::kNotFound));
  EXPECT_EQ(kind_of("ann1", "zz:1", 3), static_cast<int>(AnnotationError::Kind::kNotFound));
  EXPECT_EQ(kind_of("ann1", task.task_id, 6), static_cast<int>(AnnotationError::Kind::kInvalid));
  const auto other = svc.assignments("ann2").front().task_id;
  EXPECT_EQ(kind_of("ann1", other, 3), static_cast<int>(AnnotationError::Kind::kConflict));
  EXPECT_EQ(kind_of("ann1", task.task_id, 3), -1);
  EXPECT_EQ(kind_of("ann1", task.task_id, 3), static_cast<int>(AnnotationError::Kind::kConflict));
  // Rejected submissions never reach the journal.
  std::size_t lines = 0;
  for_each_jsonl(dir / "j.jsonl", [&](std::size_t, const Json&) { ++lines; });
  EXPECT_EQ(lines, 1U);
}

TEST(Service, JournalReplayRestoresState) {
  TempDir dir;
  std::string csv;
  {
    AnnotationService svc(make_pool(2), dir / "j.jsonl");
    for (const auto& a : svc.pool().annotators) {
      while (const auto t = svc.next_task(a)) svc.submit_rating(a, t->task_id, 3, 4);
    }
    csv = svc.export_csv();
  }
  AnnotationService replayed(make_pool(2), dir / "j.jsonl");
  EXPECT_EQ(replayed.export_csv(), csv);
  EXPECT_EQ(replayed.ratings().size(), 6U);
  for (const auto& a : replayed.pool().annotators) {
    EXPECT_EQ(replayed.remaining(a), 0U);
    EXPECT_FALSE(replayed.next_task(a));
  }
  // A journal that names an unknown task cannot be replayed.
  EXPECT_THROW(AnnotationService(make_pool(1), dir / "j.jsonl"), ParseError);
}

class ServerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    service_ = std::make_unique<AnnotationService>(make_pool(6), dir_ / "journal.jsonl");
    std::filesystem::create_directories(dir_ / "videos");
    write_file_atomic(dir_ / "videos" / "v1.mp4", "fake-video");
    server_ = std::make_unique<AnnotationServer>(
        *service_, ServerOptions{"127.0.0.1", 0, std::nullopt, dir_ / "videos"});
    port_ = server_->bind();
    thread_ = std::thread([this] { server_->listen(); });
  }

  void TearDown() override {
    server_->stop();
    thread_.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_connection_timeout(5);
    return c;
  }

  static Json rating_body(const std::string& annotator, const std::string& task, Json q1, Json q2) {
    return {{"annotator_id", annotator}, {"task_id", task}, {"q1", q1}, {"q2", q2}};
  }

  TempDir dir_;
  std::unique_ptr<AnnotationService> service_;
  std::unique_ptr<AnnotationServer> server_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(ServerTest, HealthConfigAndVideos) {
  auto c = client();
  auto res = c.Get("/api/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(Json::parse(res->body)["videos"], 6);
  res = c.Get("/api/config");
  ASSERT_TRUE(res);
  EXPECT_EQ(Json::parse(res->body)["instructions"][0], "Rate each question from 1 to 5.");
  res = c.Get("/videos/v1.mp4");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->body, "fake-video");
}

TEST_F(ServerTest, StatusCodes) {
  auto c = client();
  auto res = c.Get("/api/annotator/nobody/next");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);

  res = c.Get("/api/annotator/ann1/next");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  const auto body = Json::parse(res->body);
  const auto task = body["task"]["task_id"].get<std::string>();
  EXPECT_EQ(body["task"]["assigned_annotator"], "ann1");

  const auto post = [&](const Json& j) {
    return c.Post("/api/ratings", j.dump(), "application/json");
  };
  EXPECT_EQ(post(rating_body("ann1", task, 2.5, 3))->status, 400);
  EXPECT_EQ(post(rating_body("ann1", task, 0, 3))->status, 400);
  EXPECT_EQ(c.Post("/api/ratings", "not json", "application/json")->status, 400);
  EXPECT_EQ(post(rating_body("ann2", task, 3, 3))->status, 409);
  EXPECT_EQ(post(rating_body("ann1", "v9:1", 3, 3))->status, 404);
  res = post(rating_body("ann1", task, 4, 2));
  EXPECT_EQ(res->status, 201);
  EXPECT_EQ(Json::parse(res->body)["rating"]["q1"], 4);
  EXPECT_EQ(post(rating_body("ann1", task, 4, 2))->status, 409);

  const auto next = Json::parse(c.Get("/api/annotator/ann1/next")->body)["task"]["task_id"];
  EXPECT_EQ(c.Post("/api/annotator/ann1/release", Json{{"task_id", next}}.dump(), "application/json")
                ->status,
            200);
  EXPECT_EQ(c.Post("/api/annotator/ann1/release", Json{{"task_id", "v9:1"}}.dump(),
                   "application/json")
                ->status,
            404);
}

TEST_F(ServerTest, ConcurrentAnnotatorsCompleteThePool) {
  std::vector<std::thread> workers;
  for (const auto& a : service_->pool().annotators) {
    workers.emplace_back([this, a] {
      auto c = client();
      for (int guard = 0; guard < 100; ++guard) {
        const auto res = c.Get("/api/annotator/" + a + "/next");
        ASSERT_TRUE(res);
        const auto body = Json::parse(res->body);
        if (body["task"].is_null()) return;
        const auto task = body["task"]["task_id"].get<std::string>();
        const auto post = c.Post("/api/ratings", rating_body(a, task, 4, 3).dump(), "application/json");
        ASSERT_TRUE(post);
        EXPECT_EQ(post->status, 201);
      }
    });
  }
  for (auto& w : workers) w.join();

  const auto csv = client().Get("/api/export.csv");
  ASSERT_TRUE(csv);
  const auto ratings = analysis::parse_ratings_csv(csv->body);
  EXPECT_EQ(ratings.size(), 18U);
  const auto agg = analysis::aggregate_ratings(ratings);
  EXPECT_EQ(agg.videos.size(), 6U);
  for (const auto& v : agg.videos) EXPECT_EQ(v.annotators, 3U);
}

}  // namespace
}  // namespace tcb::annotation
