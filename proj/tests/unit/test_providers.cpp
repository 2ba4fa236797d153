// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <httplib.h>

#include <atomic>
#include <thread>

#include "tcb/consistency.hpp"
#include "tcb/providers.hpp"
#include "toy.hpp"

namespace tcb {
namespace {

using testing::TempDir;

// Serves a fake chat/embeddings API on a free local port.
class MockEndpoint {
 public:
  MockEndpoint() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      last_auth = req.get_header_value("Authorization");
      last_body = Json::parse(req.body);
      if (fail_first > 0) {
        --fail_first;
        res.status = 503;
        res.set_content("busy", "text/plain");
        return;
      }
      res.set_content(Json{{"choices", {{{"message", {{"content", reply}}}}}}}.dump(),
                      "application/json");
    });
    server_.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      last_body = Json::parse(req.body);
      res.set_content(Json{{"data", {{{"embedding", {1.0, 2.0, 2.0}}}}}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockEndpoint() {
    server_.stop();
    thread_.join();
  }

  EndpointConfig config(std::string model = "m") const {
    return {"http://127.0.0.1:" + std::to_string(port_) + "/v1/", std::move(model), "sk-test", 5, 16};
  }

  std::atomic<int> hits{0};
  int fail_first = 0;
  std::string reply = "Yes.";
  std::string last_auth;
  Json last_body;

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

TEST(OpenAI, BuildsMultimodalBody) {
  ChatRequest req{"sys", "user text", {{1, 2, 3}}, 0.0};
  const auto body = OpenAIChatClient::build_body({"http://x", "gpt-4o", "", 1, 32}, req);
  EXPECT_EQ(body["model"], "gpt-4o");
  EXPECT_EQ(body["temperature"], 0.0);
  EXPECT_EQ(body["max_tokens"], 32);
  EXPECT_EQ(body["messages"][0]["role"], "system");
  const auto& parts = body["messages"][1]["content"];
  EXPECT_EQ(parts[0]["text"], "user text");
  EXPECT_EQ(parts[1]["image_url"]["url"], "data:image/png;base64,AQID");
}

TEST(OpenAI, ExtractsContent) {
  EXPECT_EQ(OpenAIChatClient::extract_content(
                Json::parse(R"({"choices":[{"message":{"content":"No"}}]})")),
            "No");
  EXPECT_EQ(OpenAIChatClient::extract_content(Json::parse(
                R"({"choices":[{"message":{"content":[{"type":"text","text":"Ye"},{"type":"text","text":"s"}]}}]})")),
            "Yes");
  EXPECT_THROW(OpenAIChatClient::extract_content(Json::parse(R"({"error":{"message":"quota"}})")),
               std::runtime_error);
  EXPECT_THROW(OpenAIChatClient::extract_content(Json::parse(R"({"choices":[]})")),
               std::runtime_error);
}

TEST(OpenAI, RejectsBadConfig) {
  EXPECT_THROW(OpenAIChatClient({"localhost:1", "m", "", 1, 1}), ValidationError);
  EXPECT_THROW(OpenAIChatClient({"http://localhost:1", "", "", 1, 1}), ValidationError);
}

TEST(OpenAI, TalksToLocalEndpoint) {
  MockEndpoint mock;
  OpenAIChatClient client(mock.config("judge"));
  const std::vector<std::uint8_t> png = video::encode_png(video::solid_image(2, 2, 1, 2, 3));
  EXPECT_EQ(client.ask(png, "Is it red?"), "Yes.");
  EXPECT_EQ(mock.last_auth, "Bearer sk-test");
  EXPECT_EQ(mock.last_body["model"], "judge");
  EXPECT_EQ(mock.last_body["messages"][0]["content"][0]["text"], "Is it red?");
}

TEST(OpenAI, RetriesTransientFailures) {
  MockEndpoint mock;
  mock.fail_first = 2;
  OpenAIChatClient client(mock.config());
  const RetryPolicy policy{3, std::chrono::milliseconds(0)};
  const auto text = with_retries(policy, "chat", [&] { return client.complete({"", "hi", {}, 0.0}); });
  EXPECT_EQ(text, "Yes.");
  EXPECT_EQ(mock.hits, 3);

  mock.fail_first = 5;
  try {
    with_retries(policy, "chat", [&] { return client.complete({"", "hi", {}, 0.0}); });
    FAIL() << "expected ProviderError";
  } catch (const ProviderError& e) {
    EXPECT_NE(std::string(e.what()).find("HTTP 503"), std::string::npos);
  }
}

TEST(OpenAI, UnreachableEndpointFails) {
  OpenAIChatClient client({"http://127.0.0.1:1/v1", "m", "", 1, 1});
  EXPECT_THROW(client.complete({"", "hi", {}, 0.0}), std::runtime_error);
}

TEST(HttpEmbedding, PostsInputAndReturnsVector) {
  MockEndpoint mock;
  HttpEmbeddingClient client(mock.config("clip"));
  EXPECT_EQ(client.embed_text("a red cup"), (std::vector<float>{1, 2, 2}));
  EXPECT_EQ(mock.last_body["input"], "a red cup");
  client.embed_image(video::solid_image(2, 2, 0, 0, 0));
  EXPECT_TRUE(mock.last_body["input"].get<std::string>().starts_with("data:image/png;base64,"));
  EXPECT_EQ(client.fingerprint(), "http:clip");
}

TEST(Scripted, TextGeneratorFromFile) {
  TempDir dir;
  write_file_atomic(dir / "llm.json", R"({"model":"fake","responses":{"q":"a"}})");
  auto llm = ScriptedTextGenerator::from_file(dir / "llm.json");
  EXPECT_EQ(llm->model_name(), "fake");
  EXPECT_EQ(llm->complete({"", "q", {}, 0.0}), "a");
  EXPECT_THROW(llm->complete({"", "other", {}, 0.0}), ProviderError);
  EXPECT_EQ(llm->calls(), 2U);
  write_file_atomic(dir / "bad.json", R"({"model":"fake"})");
  EXPECT_THROW(ScriptedTextGenerator::from_file(dir / "bad.json"), ValidationError);
}

TEST(Scripted, JudgeRulesInOrder) {
  TempDir dir;
  write_file_atomic(dir / "vlm.json",
                    R"({"default":"Yes","rules":[{"contains":"red","answer":"No"},{"contains":"re","answer":"Maybe"}]})");
  auto judge = ScriptedJudge::from_file(dir / "vlm.json");
  EXPECT_EQ(judge->ask({}, "is it red"), "No");
  EXPECT_EQ(judge->ask({}, "is it real"), "Maybe");
  EXPECT_EQ(judge->ask({}, "is it blue"), "Yes");
  EXPECT_EQ(judge->model_name(), "scripted-vlm");
}

TEST(Histogram, ImageAndTextShareColorBins) {
  HistogramEmbedder h(2);
  const auto img = h.embed_image(video::solid_image(3, 3, 250, 10, 10));
  ASSERT_EQ(img.size(), 8U);
  EXPECT_FLOAT_EQ(img[4], 1.0F);
  EXPECT_EQ(h.embed_text("a red apple"), img);
  EXPECT_EQ(h.embed_text("no colours here").size(), 8U);
  EXPECT_EQ(h.fingerprint(), "histogram:2");
  EXPECT_THROW(HistogramEmbedder(0), ValidationError);
  EXPECT_THROW(h.embed_image(video::Image{}), ValidationError);
}

TEST(Onnx, TinyEncoderPoolsNormalizedChannels) {
  OnnxEncoderConfig cfg;
  cfg.model_path = testing::data_dir() / "tiny_encoder.onnx";
  cfg.input_size = 4;
  OnnxImageEncoder enc(cfg);
  EXPECT_TRUE(enc.fingerprint().starts_with("onnx:"));
  EXPECT_TRUE(enc.fingerprint().ends_with(":4"));
  const auto out = enc.embed_image(video::solid_image(8, 6, 255, 0, 51));
  ASSERT_EQ(out.size(), 3U);
  EXPECT_NEAR(out[0], (1.0 - cfg.mean[0]) / cfg.stddev[0], 1e-3);
  EXPECT_NEAR(out[1], (0.0 - cfg.mean[1]) / cfg.stddev[1], 1e-3);
  EXPECT_NEAR(out[2], (0.2 - cfg.mean[2]) / cfg.stddev[2], 1e-3);
  EXPECT_THROW(enc.embed_text("x"), ProviderError);
}

TEST(Onnx, BlackVersusWhitePin) {
  OnnxEncoderConfig cfg;
  cfg.model_path = testing::data_dir() / "tiny_encoder.onnx";
  cfg.input_size = 4;
  OnnxImageEncoder enc(cfg);
  const auto black = consistency::make_embedding(enc.embed_image(video::solid_image(8, 8, 0, 0, 0)), "t");
  const auto white =
      consistency::make_embedding(enc.embed_image(video::solid_image(8, 8, 255, 255, 255)), "t");
  const double s = consistency::cosine_similarity(black, white);
  EXPECT_LT(s, 1.0);
  // Recorded from the fixture encoder.
  EXPECT_NEAR(s, -0.99266518, 1e-5);

  HistogramEmbedder h(4);
  const auto hb = consistency::make_embedding(h.embed_image(video::solid_image(4, 4, 0, 0, 0)), "h");
  const auto hw = consistency::make_embedding(h.embed_image(video::solid_image(4, 4, 255, 255, 255)), "h");
  EXPECT_DOUBLE_EQ(consistency::cosine_similarity(hb, hw), 0.0);
}

TEST(Onnx, MissingModelIsAValidationError) {
  EXPECT_THROW(OnnxImageEncoder({"/nonexistent/model.onnx"}), ValidationError);
}

TEST(ParallelFor, RunsEveryIndexAndRethrows) {
  std::vector<std::atomic<int>> seen(50);
  parallel_for(50, 4, [&](std::size_t i) { ++seen[i]; });
  for (const auto& s : seen) EXPECT_EQ(s.load(), 1);
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 7) throw ValidationError("boom");
                            }),
               ValidationError);
}

TEST(Retry, AttemptCountInError) {
  int calls = 0;
  try {
    with_retries(RetryPolicy{2, std::chrono::milliseconds(0)}, "thing", [&]() -> int {
      ++calls;
      throw std::runtime_error("nope");
    });
  } catch (const ProviderError& e) {
    EXPECT_EQ(e.attempts(), 2);
  }
  EXPECT_EQ(calls, 2);
}

}  // namespace
}  // namespace tcb
