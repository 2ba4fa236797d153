// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

// tcb: command-line driver for the evaluation pipeline.
//
// Exit codes: 0 success, 2 validation error, 3 provider failure, 4 partial
// result (degraded verdicts present).

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "tcb/analysis.hpp"
#include "tcb/annotation.hpp"
#include "tcb/assertion.hpp"
#include "tcb/config.hpp"
#include "tcb/consistency.hpp"
#include "tcb/corpus.hpp"
#include "tcb/error.hpp"
#include "tcb/io.hpp"
#include "tcb/pipeline.hpp"
#include "tcb/verifier.hpp"
#include "tcb/video_io.hpp"

namespace fs = std::filesystem;
using tcb::Json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitProvider = 3;
constexpr int kExitPartial = 4;

struct Globals {
  std::optional<fs::path> config_path;
  tcb::config::Config config;
};

void write_output(const std::optional<fs::path>& out, const std::string& text) {
  if (out) {
    if (out->has_parent_path()) fs::create_directories(out->parent_path());
    tcb::write_file_atomic(*out, text);
  } else {
    std::cout << text;
  }
}

// Sidecar next to a JSON-lines artifact recording how it was produced.
void write_provenance(const fs::path& artifact, const std::string& command, const Globals& g,
                      Json extra = Json::object()) {
  extra["command"] = command;
  extra["config"] = tcb::config::to_json(g.config);
  tcb::write_file_atomic(fs::path(artifact.string() + ".meta.json"), extra.dump(2) + "\n");
}

tcb::corpus::ManifestKind kind_of(const std::string& text) {
  return tcb::corpus::parse_manifest_kind(text);
}

fs::path cache_path(const Globals& g, const std::string& name) {
  fs::create_directories(g.config.cache_dir);
  return g.config.cache_dir / name;
}

// --- extract ---------------------------------------------------------------

struct ExtractArgs {
  fs::path videos;
  fs::path out;
  std::optional<double> fps;
  std::optional<int> frames;
};

int run_extract(const ExtractArgs& a, const Globals& g) {
  const double fps = a.fps.value_or(g.config.constants.fps);
  const int frames = a.frames.value_or(g.config.constants.frames);
  const auto result = tcb::pipeline::extract_stage(a.videos, a.out, fps, frames);
  std::cerr << "extracted " << result.extracted << ", reused " << result.reused << ", failed "
            << result.failures.size() << "\n";
  for (const auto& [file, reason] : result.failures) std::cerr << "  " << file << ": " << reason << "\n";
  return result.failures.empty() ? kExitOk : kExitValidation;
}

// --- synthesize / corpus ---------------------------------------------------

struct SynthesizeArgs {
  std::string category;
  std::size_t count = 10;
  std::optional<fs::path> exemplars;
  fs::path out;
  std::string id_prefix = "draft";
};

int run_synthesize(const SynthesizeArgs& a, const Globals& g) {
  const auto category = tcb::corpus::parse_category(a.category);
  std::vector<std::string> exemplars = tcb::corpus::default_exemplars(category);
  if (a.exemplars) {
    exemplars.clear();
    for (const auto& line : tcb::split(tcb::read_text_file(*a.exemplars), '\n')) {
      if (!tcb::trim(line).empty()) exemplars.emplace_back(tcb::trim(line));
    }
  }
  auto llm = tcb::config::make_text_generator(g.config.llm);
  const auto result = tcb::corpus::synthesize_prompts(category, *llm, a.count, exemplars, a.id_prefix);
  std::vector<Json> lines;
  for (const auto& d : result.drafts) lines.push_back(tcb::corpus::to_json(d));
  write_output(a.out, tcb::to_jsonl(lines));
  write_provenance(a.out, "synthesize", g, {{"category", a.category}, {"count", a.count}});
  std::cerr << result.drafts.size() << " drafts written (unreviewed), " << result.rejected.size()
            << " rejected\n";
  for (const auto& r : result.rejected) std::cerr << "  rejected: " << r.reason << ": " << r.line << "\n";
  return kExitOk;
}

struct AdmitArgs {
  fs::path drafts;
  fs::path corpus;
  std::string kind = "t2v";
  bool review = false;
};

int run_admit(const AdmitArgs& a, const Globals&) {
  if (!a.review) {
    throw tcb::ValidationError(
        "drafts are only admitted after manual review; re-run with --review once checked");
  }
  tcb::corpus::CorpusManifest manifest;
  manifest.kind = kind_of(a.kind);
  if (fs::exists(a.corpus)) manifest = tcb::corpus::load_corpus(a.corpus, manifest.kind);
  std::size_t admitted = 0;
  tcb::for_each_jsonl(a.drafts, [&](std::size_t line, const Json& json) {
    tcb::corpus::PromptDraft draft;
    try {
      draft = tcb::corpus::draft_from_json(json);
    } catch (const Json::exception& e) {
      throw tcb::ParseError(line, e.what());
    }
    tcb::corpus::validate_prompt(draft.prompt);
    if (manifest.find(draft.prompt.id) != nullptr) {
      throw tcb::ValidationError("prompt id '" + draft.prompt.id + "' already in the corpus");
    }
    manifest.prompts.push_back(draft.prompt);
    ++admitted;
  });
  tcb::corpus::validate_manifest(manifest);
  tcb::corpus::save_corpus(manifest, a.corpus);
  std::cerr << "admitted " << admitted << " prompts; corpus now has " << manifest.prompts.size()
            << "\n";
  return kExitOk;
}

struct StatsArgs {
  fs::path corpus;
  std::string kind = "t2v";
};

int run_stats(const StatsArgs& a, const Globals&) {
  const auto manifest = tcb::corpus::load_corpus(a.corpus, kind_of(a.kind));
  Json counts = Json::object();
  for (const auto& [category, n] : manifest.category_counts()) {
    counts[std::string(tcb::corpus::to_string(category))] = n;
  }
  std::cout << Json{{"kind", tcb::corpus::to_string(manifest.kind)},
                    {"version", manifest.version},
                    {"prompts", manifest.prompts.size()},
                    {"ground_truth", manifest.ground_truth.size()},
                    {"categories", counts}}
                   .dump(2)
            << "\n";
  return kExitOk;
}

// --- assert ----------------------------------------------------------------

struct AssertArgs {
  fs::path corpus;
  std::string kind = "t2v";
  fs::path out;
};

int run_assert(const AssertArgs& a, const Globals& g) {
  const auto manifest = tcb::corpus::load_corpus(a.corpus, kind_of(a.kind));
  auto llm = tcb::config::make_text_generator(g.config.llm);
  tcb::assertion::AssertionCache cache(cache_path(g, "assertions"));
  tcb::assertion::GenerationOptions options{tcb::config::retry_policy(g.config.constants), &cache};

  std::vector<tcb::assertion::GeneratedAssertions> generated(manifest.prompts.size());
  std::vector<std::string> errors(manifest.prompts.size());
  std::atomic<bool> provider_failed{false};
  tcb::RateLimiter limiter(g.config.llm.requests_per_minute);
  tcb::parallel_for(manifest.prompts.size(), static_cast<std::size_t>(g.config.llm.max_in_flight),
                    [&](std::size_t i) {
                      const auto& prompt = manifest.prompts[i];
                      try {
                        limiter.acquire();
                        generated[i] = tcb::assertion::generate_assertions(prompt, *llm, options);
                      } catch (const tcb::assertion::AssertionParseError& e) {
                        errors[i] = std::string(e.what()) + "\n--- raw text ---\n" + e.raw_text();
                      } catch (const tcb::ProviderError& e) {
                        provider_failed = true;
                        errors[i] = e.what();
                      } catch (const tcb::ValidationError& e) {
                        errors[i] = e.what();
                      }
                    });

  std::vector<tcb::assertion::GeneratedAssertions> ok;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    if (!errors[i].empty()) {
      std::cerr << "prompt '" << manifest.prompts[i].id << "': " << errors[i] << "\n";
      continue;
    }
    hits += generated[i].cache_hit ? 1 : 0;
    ok.push_back(std::move(generated[i]));
  }
  tcb::assertion::save_assertion_store(ok, a.out);
  write_provenance(a.out, "assert", g, {{"corpus", a.corpus.string()}});
  std::cerr << ok.size() << " assertion sets written (" << hits << " from cache), "
            << manifest.prompts.size() - ok.size() << " failed\n";
  if (ok.size() == manifest.prompts.size()) return kExitOk;
  return provider_failed ? kExitProvider : kExitValidation;
}

// --- verify ----------------------------------------------------------------

struct VerifyArgs {
  fs::path assertions;
  fs::path corpus;
  std::string kind = "t2v";
  fs::path frames;
  fs::path out;
  bool remap = false;
  bool resample_first = false;
  std::optional<int> jobs;
};

int run_verify(const VerifyArgs& a, const Globals& g) {
  if (a.remap && a.resample_first) {
    throw tcb::ValidationError("--remap and --resample-first are mutually exclusive");
  }
  const auto sets = tcb::assertion::load_assertion_store(a.assertions);
  const auto manifest = tcb::corpus::load_corpus(a.corpus, kind_of(a.kind));
  auto vlm = tcb::config::make_judge(g.config.vlm);
  tcb::verifier::JudgeCache cache(cache_path(g, "judge.jsonl"));
  tcb::RateLimiter limiter(g.config.vlm.requests_per_minute);

  tcb::pipeline::VerifyStageOptions options;
  options.fps = g.config.constants.fps;
  options.video.mode =
      a.resample_first ? tcb::verifier::IndexMode::kResampleFirst : tcb::verifier::IndexMode::kRemap;
  options.video.max_in_flight =
      static_cast<std::size_t>(a.jobs.value_or(g.config.vlm.max_in_flight));
  options.video.limiter = &limiter;
  options.video.verify.cache = &cache;
  options.video.verify.retry = tcb::config::retry_policy(g.config.constants);
  options.video.verify.prompt.preamble = g.config.constants.judge_preamble;
  options.video.verify.prompt.suffix = g.config.constants.judge_suffix;

  const auto result = tcb::pipeline::verify_stage(sets, manifest, a.frames, *vlm, options);
  tcb::pipeline::write_verdicts(result.records, a.out);
  std::size_t degraded = 0;
  for (const auto& e : result.evaluations) degraded += e.degraded_count();
  write_provenance(a.out, "verify", g,
                   {{"index_mode", a.resample_first ? "resample-first" : "remap"},
                    {"judge_prompt_fingerprint", options.video.verify.prompt.fingerprint()},
                    {"judge_model", vlm->model_name()}});
  for (const auto& s : result.skipped) std::cerr << "skipped '" << s << "': no assertion set\n";
  std::cerr << result.evaluations.size() << " videos verified, " << result.records.size()
            << " verdicts, " << degraded << " degraded\n";
  if (result.evaluations.empty()) throw tcb::ValidationError("no video matched an assertion set");
  return degraded > 0 ? kExitPartial : kExitOk;
}

// --- embed / score ---------------------------------------------------------

struct EmbedArgs {
  fs::path frames;
  fs::path out;
};

int run_embed(const EmbedArgs& a, const Globals& g) {
  auto embedder = tcb::config::make_embedder(g.config.embedding);
  tcb::consistency::EmbeddingCache cache(cache_path(g, "embeddings.bin"));
  fs::create_directories(a.out);
  std::size_t videos = 0;
  for (const auto& dir : tcb::pipeline::frame_dirs(a.frames)) {
    const auto seq = tcb::video::load_frames(dir, g.config.constants.fps);
    const auto vectors = tcb::consistency::embed_frames(seq, *embedder, &cache);
    tcb::pipeline::save_embeddings(vectors, a.out / (dir.filename().string() + ".json"));
    ++videos;
  }
  std::cerr << "embedded " << videos << " videos with " << embedder->fingerprint() << " ("
            << cache.hits() << " cache hits)\n";
  return kExitOk;
}

struct ScoreArgs {
  fs::path verdicts;
  std::string mode = "t2v";
  std::optional<fs::path> embeddings;
  std::string ref = "consecutive";
  std::optional<fs::path> gt_embeddings;
  bool per_prompt_best = false;
  std::string model;
  std::optional<fs::path> out;
};

int run_score(const ScoreArgs& a, const Globals& g) {
  const auto records = tcb::verifier::load_verdicts(a.verdicts);
  tcb::pipeline::ScoreOptions options;
  options.mode = a.mode == "i2v" ? tcb::pipeline::ScoreMode::kI2V : tcb::pipeline::ScoreMode::kT2V;
  options.policy = a.per_prompt_best ? tcb::verifier::ReplicatePolicy::kPerPromptBest
                                     : tcb::verifier::ReplicatePolicy::kAllVideos;
  options.model = a.model.empty() ? a.verdicts.stem().string() : a.model;
  options.embeddings_dir = a.embeddings;
  options.reference = a.ref == "groundtruth" ? tcb::pipeline::ReferenceMode::kGroundTruth
                                             : tcb::pipeline::ReferenceMode::kConsecutive;
  options.ground_truth_dir = a.gt_embeddings;
  options.range = {g.config.constants.similarity_lo, g.config.constants.similarity_hi};
  options.weights = {g.config.constants.w1, g.config.constants.w2};
  options.frames = g.config.constants.frames;

  auto report = tcb::pipeline::score_stage(records, options);
  report["config"] = tcb::config::to_json(g.config);
  write_output(a.out, report.dump(2) + "\n");
  const auto degraded = report["report"]["degraded_verdicts"].get<std::size_t>();
  const auto& overall = report["report"]["overall"];
  std::cerr << "TCR " << overall["tcr"].get<double>() << ", TC-Score "
            << overall["tc_score"].get<double>() << " over " << overall["videos"].get<std::size_t>()
            << " videos\n";
  return degraded > 0 ? kExitPartial : kExitOk;
}

// --- consistency -----------------------------------------------------------

struct ConsistencyArgs {
  std::string metric;
  std::optional<fs::path> frames;
  std::optional<fs::path> flows;
  std::optional<fs::path> tracks;
  std::optional<fs::path> ref;
  bool resize_reference = false;
  std::optional<fs::path> out;
};

int run_consistency(const ConsistencyArgs& a, const Globals& g) {
  const auto& k = g.config.constants;
  const tcb::consistency::SimilarityRange range{k.similarity_lo, k.similarity_hi};
  Json out;
  out["metric"] = a.metric;

  const auto require = [](const std::optional<fs::path>& p, const char* flag, const char* metric) {
    if (!p) throw tcb::ValidationError(std::string("--metric ") + metric + " needs " + flag);
    return *p;
  };

  if (a.metric == "consecutive" || a.metric == "framewise") {
    const auto frames = require(a.frames, "--frames DIR", a.metric.c_str());
    auto embedder = tcb::config::make_embedder(g.config.embedding);
    tcb::consistency::EmbeddingCache cache(cache_path(g, "embeddings.bin"));
    const auto embed = [&](const fs::path& dir) {
      auto seq = tcb::video::load_frames(dir, k.fps);
      if (seq.size() != k.frames) seq = tcb::video::resample_equal_gaps(seq, k.frames);
      return tcb::consistency::embed_frames(seq, *embedder, &cache);
    };
    const auto dirs = tcb::pipeline::frame_dirs(frames);
    Json videos = Json::array();
    double sum = 0.0;
    for (const auto& dir : dirs) {
      const auto embeds = embed(dir);
      tcb::consistency::ConsistencyScore score;
      if (a.metric == "consecutive") {
        score = tcb::consistency::consecutive_consistency(embeds, range);
      } else {
        const auto ref_root = require(a.ref, "--ref DIR", "framewise");
        // A single reference directory, or one per prompt id.
        const auto ref_dir = fs::exists(ref_root / "frame_0001.png")
                                 ? ref_root
                                 : ref_root / tcb::pipeline::prompt_id_of(dir.filename().string());
        score = tcb::consistency::framewise_consistency(embeds, embed(ref_dir), range);
      }
      sum += score.mean_mapped;
      videos.push_back({{"video_id", dir.filename().string()},
                        {"raw", score.raw_similarities},
                        {"mapped", score.mapped},
                        {"mean_mapped", score.mean_mapped}});
    }
    out["fingerprint"] = embedder->fingerprint();
    out["videos"] = videos;
    out["mean_mapped"] = sum / static_cast<double>(dirs.size());
  } else if (a.metric == "epe") {
    const auto flows = tcb::consistency::read_flow_dir(require(a.flows, "--flows DIR", "epe"));
    const auto ref = tcb::consistency::read_flow_dir(require(a.ref, "--ref DIR", "epe"));
    out["epe"] = tcb::consistency::epe(flows, ref, a.resize_reference);
    out["frames"] = flows.size();
  } else if (a.metric == "ate") {
    const auto traj = tcb::consistency::read_trajectory_csv(require(a.tracks, "--tracks CSV", "ate"));
    const auto ref = tcb::consistency::read_trajectory_csv(require(a.ref, "--ref CSV", "ate"));
    out["ate"] = tcb::consistency::ate(traj, ref);
    out["points"] = traj.points();
    out["frames"] = traj.frames();
  } else {
    throw tcb::ValidationError("unknown metric '" + a.metric + "'");
  }
  out["config"] = tcb::config::to_json(g.config);
  write_output(a.out, out.dump(2) + "\n");
  return kExitOk;
}

// --- analyze ---------------------------------------------------------------

struct CurvesArgs {
  fs::path corpus;
  std::string kind = "t2v";
  fs::path frames;
  std::optional<fs::path> out;
};

int run_curves(const CurvesArgs& a, const Globals& g) {
  const auto manifest = tcb::corpus::load_corpus(a.corpus, kind_of(a.kind));
  auto embedder = tcb::config::make_embedder(g.config.embedding);
  tcb::consistency::EmbeddingCache cache(cache_path(g, "embeddings.bin"));
  std::vector<tcb::analysis::CurveSeries> starts, ends, consecutive;
  for (const auto& dir : tcb::pipeline::frame_dirs(a.frames)) {
    const auto* prompt = manifest.find(tcb::pipeline::prompt_id_of(dir.filename().string()));
    if (prompt == nullptr || prompt->category != tcb::corpus::Category::kAttribute) continue;
    auto seq = tcb::video::load_frames(dir, g.config.constants.fps);
    if (seq.size() != g.config.constants.frames) {
      seq = tcb::video::resample_equal_gaps(seq, g.config.constants.frames);
    }
    const auto embeds = tcb::consistency::embed_frames(seq, *embedder, &cache);
    auto [start, end] = tcb::analysis::attribute_curves(*prompt, embeds, *embedder);
    starts.push_back(std::move(start));
    ends.push_back(std::move(end));
    consecutive.push_back(tcb::analysis::consecutive_curve(embeds));
  }
  if (starts.empty()) throw tcb::ValidationError("no attribute-prompt videos under " + a.frames.string());
  const std::vector<tcb::analysis::CurveSeries> curves = {
      tcb::analysis::mean_curve(starts, "start_caption"),
      tcb::analysis::mean_curve(ends, "end_caption"),
      tcb::analysis::mean_curve(consecutive, "consecutive")};
  write_output(a.out, tcb::analysis::curves_csv(curves));
  std::cerr << starts.size() << " videos; trend start " << tcb::analysis::trend_sign(curves[0])
            << ", end " << tcb::analysis::trend_sign(curves[1]) << "\n";
  return kExitOk;
}

struct DynamicsArgs {
  fs::path flows;
  std::optional<double> threshold;
  std::optional<fs::path> out;
};

int run_dynamics(const DynamicsArgs& a, const Globals& g) {
  const double threshold = a.threshold.value_or(g.config.constants.static_threshold);
  std::vector<fs::path> dirs;
  bool has_files = false;
  for (const auto& entry : fs::directory_iterator(a.flows)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
    if (entry.is_regular_file()) has_files = true;
  }
  if (has_files || dirs.empty()) dirs = {a.flows};
  std::sort(dirs.begin(), dirs.end());
  Json videos = Json::array();
  for (const auto& dir : dirs) {
    const auto flows = tcb::consistency::read_flow_dir(dir);
    const auto r = tcb::analysis::dynamics_degree(flows, threshold);
    videos.push_back({{"video_id", dir.filename().string()},
                      {"dynamics_degree", r.degree},
                      {"all_masked_frames", r.all_masked_frames}});
  }
  write_output(a.out, Json{{"static_threshold", threshold}, {"videos", videos}}.dump(2) + "\n");
  return kExitOk;
}

tcb::analysis::AggregationRule aggregation_rule(const Globals& g) {
  const auto& k = g.config.constants;
  return {k.divisive_spread, k.completion_threshold, k.consistency_floor};
}

struct AggregateArgs {
  fs::path ratings;
  std::optional<fs::path> out;
};

int run_aggregate(const AggregateArgs& a, const Globals& g) {
  const auto ratings = tcb::analysis::read_ratings_csv(a.ratings);
  const auto agg = tcb::analysis::aggregate_ratings(ratings, aggregation_rule(g));
  Json videos = Json::array();
  for (const auto& v : agg.videos) {
    videos.push_back({{"video_id", v.video_id},
                      {"annotators", v.annotators},
                      {"mean_q1", v.mean_q1},
                      {"mean_q2", v.mean_q2},
                      {"completed", v.completed},
                      {"consistency_eligible", v.consistency_eligible}});
  }
  Json discarded = Json::array();
  for (const auto& d : agg.discarded) discarded.push_back({{"video_id", d.video_id}, {"reason", d.reason}});
  write_output(a.out, Json{{"videos", videos}, {"discarded", discarded}}.dump(2) + "\n");
  return kExitOk;
}

// Metric scores from a score report (videos[].tc_score) or a video_id,score CSV.
std::map<std::string, double> load_metric_scores(const fs::path& path) {
  std::map<std::string, double> scores;
  const auto text = tcb::read_text_file(path);
  if (path.extension() == ".json") {
    const auto json = Json::parse(text);
    for (const auto& v : json.at("videos")) scores[v.at("video_id")] = v.at("tc_score").get<double>();
    return scores;
  }
  bool header = true;
  for (const auto& line : tcb::split(text, '\n')) {
    if (tcb::trim(line).empty()) continue;
    const auto cells = tcb::split(tcb::trim(line), ',');
    if (header) {
      header = false;
      continue;
    }
    if (cells.size() != 2) throw tcb::ValidationError("metric CSV rows need video_id,score");
    scores[std::string(tcb::trim(cells[0]))] = std::stod(cells[1]);
  }
  return scores;
}

struct CorrelateArgs {
  fs::path ratings;
  std::optional<fs::path> metric;
  std::string metric_name;
  bool inter_annotator = false;
  std::optional<fs::path> out;
};

int run_correlate(const CorrelateArgs& a, const Globals& g) {
  const auto ratings = tcb::analysis::read_ratings_csv(a.ratings);
  Json out = Json::object();
  if (a.metric) {
    const auto agg = tcb::analysis::aggregate_ratings(ratings, aggregation_rule(g));
    out = tcb::analysis::correlation_report(
        load_metric_scores(*a.metric), agg,
        a.metric_name.empty() ? a.metric->stem().string() : a.metric_name);
  }
  if (a.inter_annotator) {
    Json human = Json::object();
    for (const auto& [name, q] : {std::pair{"q1", tcb::analysis::Question::kQ1},
                                 std::pair{"q2", tcb::analysis::Question::kQ2}}) {
      try {
        const auto r = tcb::analysis::inter_annotator_correlation(ratings, q);
        human[name] = {{"spearman", r.mean.spearman_rho},
                       {"kendall", r.mean.kendall_tau},
                       {"n", r.mean.n},
                       {"pairs", r.pairs},
                       {"skipped_pairs", r.skipped_pairs}};
      } catch (const tcb::ValidationError& e) {
        human[name] = {{"spearman", nullptr}, {"kendall", nullptr}, {"error", e.what()}};
      }
    }
    out["human_upper_bound"] = human;
  }
  if (out.empty()) throw tcb::ValidationError("nothing to correlate: pass --metric and/or --inter-annotator");
  write_output(a.out, out.dump(2) + "\n");
  return kExitOk;
}

// --- annotate --------------------------------------------------------------

std::atomic<tcb::annotation::AnnotationServer*> g_server{nullptr};

extern "C" void handle_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

struct ServeArgs {
  fs::path pool;
  fs::path journal = "ratings.jsonl";
  std::string host = "127.0.0.1";
  int port = tcb::annotation::kDefaultPort;
  std::optional<fs::path> static_dir;
  std::optional<fs::path> video_dir;
};

int run_serve(const ServeArgs& a, const Globals&) {
  tcb::annotation::AnnotationService service(tcb::annotation::load_pool(a.pool), a.journal);
  tcb::annotation::AnnotationServer server(service, {a.host, a.port, a.static_dir, a.video_dir});
  const int port = server.bind();
  g_server = &server;
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  std::cerr << "annotation service on http://" << a.host << ":" << port << " (journal "
            << a.journal.string() << ")\n";
  server.listen();
  g_server = nullptr;
  return kExitOk;
}

struct ExportArgs {
  fs::path pool;
  fs::path journal = "ratings.jsonl";
  std::optional<fs::path> out;
};

int run_export(const ExportArgs& a, const Globals&) {
  if (!fs::exists(a.journal)) {
    throw tcb::ValidationError("missing journal " + a.journal.string() + " (run `tcb annotate serve`)");
  }
  // Replays the journal into a read-only view; nothing is appended.
  const auto scratch = fs::temp_directory_path() / ("tcb-export-" + tcb::sha256_hex(a.journal.string()).substr(0, 12));
  fs::create_directories(scratch);
  fs::copy_file(a.journal, scratch / "journal.jsonl", fs::copy_options::overwrite_existing);
  tcb::annotation::AnnotationService service(tcb::annotation::load_pool(a.pool),
                                            scratch / "journal.jsonl");
  write_output(a.out, service.export_csv());
  fs::remove_all(scratch);
  return kExitOk;
}

// --- report ----------------------------------------------------------------

struct ReportArgs {
  std::vector<fs::path> inputs;
  std::string format = "csv";
  std::optional<fs::path> out;
};

tcb::verifier::ModelReport model_report_from_json(const Json& json) {
  tcb::verifier::ModelReport r;
  const auto& report = json.at("report");
  r.model = report.at("model").get<std::string>();
  for (const auto& [name, stats] : report.at("categories").items()) {
    r.per_category[tcb::corpus::parse_category(name)] = {stats.at("tcr").get<double>(),
                                                         stats.at("tc_score").get<double>(),
                                                         stats.at("videos").get<std::size_t>()};
  }
  const auto& o = report.at("overall");
  r.overall = {o.at("tcr").get<double>(), o.at("tc_score").get<double>(),
               o.at("videos").get<std::size_t>()};
  r.degraded_verdicts = report.value("degraded_verdicts", std::size_t{0});
  r.total_verdicts = report.value("total_verdicts", std::size_t{0});
  return r;
}

int run_report(const ReportArgs& a, const Globals&) {
  if (a.inputs.empty()) throw tcb::ValidationError("report needs --inputs");
  std::vector<tcb::verifier::ModelReport> reports;
  Json combined = Json::array();
  for (const auto& path : a.inputs) {
    if (!fs::exists(path)) throw tcb::ValidationError("missing score report " + path.string() + " (run `tcb score`)");
    const auto json = Json::parse(tcb::read_text_file(path));
    try {
      reports.push_back(model_report_from_json(json));
    } catch (const Json::exception& e) {
      throw tcb::ValidationError("not a score report: " + path.string() + ": " + e.what());
    }
    combined.push_back(json.at("report"));
  }
  if (a.format == "csv") {
    write_output(a.out, tcb::verifier::report_csv(reports));
  } else {
    write_output(a.out, combined.dump(2) + "\n");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tcb: temporal compositionality benchmark harness"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "TOML configuration file")->check(CLI::ExistingFile);
  std::function<int()> action;

  ExtractArgs extract;
  auto* cmd = app.add_subcommand("extract", "Decode videos into canonical frame directories");
  cmd->add_option("--videos", extract.videos, "Directory of video files")->required();
  cmd->add_option("--out", extract.out, "Output root for frame directories")->required();
  cmd->add_option("--fps", extract.fps, "Sampling rate (default 8)");
  cmd->add_option("--frames", extract.frames, "Frames per video (default 16)");
  cmd->callback([&] { action = [&] { return run_extract(extract, g); }; });

  SynthesizeArgs synth;
  cmd = app.add_subcommand("synthesize", "Draft transition prompts with the text generator");
  cmd->add_option("--category", synth.category, "attribute | object_relation | background")->required();
  cmd->add_option("--count", synth.count, "Number of drafts");
  cmd->add_option("--exemplars", synth.exemplars, "Seed prompts, one per line")->check(CLI::ExistingFile);
  cmd->add_option("--id-prefix", synth.id_prefix, "Prefix for draft ids");
  cmd->add_option("--out", synth.out, "Draft JSONL file")->required();
  cmd->callback([&] { action = [&] { return run_synthesize(synth, g); }; });

  auto* corpus_cmd = app.add_subcommand("corpus", "Corpus maintenance");
  corpus_cmd->require_subcommand(1);
  AdmitArgs admit;
  cmd = corpus_cmd->add_subcommand("admit", "Admit reviewed drafts into a corpus");
  cmd->add_option("--drafts", admit.drafts, "Draft JSONL file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--corpus", admit.corpus, "Corpus JSONL file (created if missing)")->required();
  cmd->add_option("--kind", admit.kind, "t2v | i2v");
  cmd->add_flag("--review", admit.review, "Confirm the drafts were reviewed by hand");
  cmd->callback([&] { action = [&] { return run_admit(admit, g); }; });
  StatsArgs stats;
  cmd = corpus_cmd->add_subcommand("stats", "Validate a corpus and print category counts");
  cmd->add_option("--corpus", stats.corpus, "Corpus JSONL file")->required();
  cmd->add_option("--kind", stats.kind, "t2v | i2v");
  cmd->callback([&] { action = [&] { return run_stats(stats, g); }; });

  AssertArgs assert_args;
  cmd = app.add_subcommand("assert", "Generate assertion sets for every corpus prompt");
  cmd->add_option("--corpus", assert_args.corpus, "Corpus JSONL file")->required();
  cmd->add_option("--kind", assert_args.kind, "t2v | i2v");
  cmd->add_option("--out", assert_args.out, "Assertion store (JSONL)")->required();
  cmd->callback([&] { action = [&] { return run_assert(assert_args, g); }; });

  VerifyArgs verify;
  cmd = app.add_subcommand("verify", "Judge every assertion against its frames");
  cmd->add_option("--assertions", verify.assertions, "Assertion store")->required();
  cmd->add_option("--corpus", verify.corpus, "Corpus JSONL file")->required();
  cmd->add_option("--kind", verify.kind, "t2v | i2v");
  cmd->add_option("--frames", verify.frames, "Root of frame directories")->required();
  cmd->add_option("--out", verify.out, "Verdict store (JSONL)")->required();
  cmd->add_flag("--remap", verify.remap, "Remap 16-frame indices onto K frames (default)");
  cmd->add_flag("--resample-first", verify.resample_first, "Resample videos to 16 frames first");
  cmd->add_option("--jobs", verify.jobs, "Concurrent judge calls");
  cmd->callback([&] { action = [&] { return run_verify(verify, g); }; });

  EmbedArgs embed;
  cmd = app.add_subcommand("embed", "Compute per-frame embeddings");
  cmd->add_option("--frames", embed.frames, "Root of frame directories")->required();
  cmd->add_option("--out", embed.out, "Output directory of <video_id>.json files")->required();
  cmd->callback([&] { action = [&] { return run_embed(embed, g); }; });

  ScoreArgs score;
  cmd = app.add_subcommand("score", "Compute TC, TCR and TC-Score from verdicts");
  cmd->add_option("--verdicts", score.verdicts, "Verdict store")->required();
  cmd->add_option("--mode", score.mode, "t2v | i2v")->check(CLI::IsMember({"t2v", "i2v"}));
  cmd->add_option("--embeddings", score.embeddings, "Embedding directory (i2v)");
  cmd->add_option("--ref", score.ref, "consecutive | groundtruth")
      ->check(CLI::IsMember({"consecutive", "groundtruth"}));
  cmd->add_option("--gt-embeddings", score.gt_embeddings, "Ground-truth embeddings by prompt id");
  cmd->add_flag("--per-prompt-best", score.per_prompt_best, "Keep the best replicate per prompt");
  cmd->add_option("--model", score.model, "Model name for the report");
  cmd->add_option("--out", score.out, "Report JSON (stdout when omitted)");
  cmd->callback([&] { action = [&] { return run_score(score, g); }; });

  ConsistencyArgs cons;
  cmd = app.add_subcommand("consistency", "Frame consistency, EPE and ATE");
  cmd->add_option("--metric", cons.metric, "consecutive | framewise | epe | ate")
      ->required()
      ->check(CLI::IsMember({"consecutive", "framewise", "epe", "ate"}));
  cmd->add_option("--frames", cons.frames, "Frame directory or root");
  cmd->add_option("--flows", cons.flows, "Flow directory (epe)");
  cmd->add_option("--tracks", cons.tracks, "Trajectory CSV (ate)");
  cmd->add_option("--ref", cons.ref, "Reference frames, flows or trajectory");
  cmd->add_flag("--resize-reference", cons.resize_reference, "Resize reference flows to match");
  cmd->add_option("--out", cons.out, "Output JSON (stdout when omitted)");
  cmd->callback([&] { action = [&] { return run_consistency(cons, g); }; });

  auto* analyze = app.add_subcommand("analyze", "Curves, dynamics, rating aggregation, correlation");
  analyze->require_subcommand(1);
  CurvesArgs curves;
  cmd = analyze->add_subcommand("curves", "Caption-similarity and consecutive-frame curves");
  cmd->add_option("--corpus", curves.corpus, "Corpus JSONL file")->required();
  cmd->add_option("--kind", curves.kind, "t2v | i2v");
  cmd->add_option("--frames", curves.frames, "Root of frame directories")->required();
  cmd->add_option("--out", curves.out, "Curve CSV (stdout when omitted)");
  cmd->callback([&] { action = [&] { return run_curves(curves, g); }; });
  DynamicsArgs dyn;
  cmd = analyze->add_subcommand("dynamics", "Dynamics degree from flow files");
  cmd->add_option("--flows", dyn.flows, "Flow directory, or a root of per-video directories")
      ->required()
      ->check(CLI::ExistingDirectory);
  cmd->add_option("--threshold", dyn.threshold, "Static threshold in pixels per frame (default 1.0)");
  cmd->add_option("--out", dyn.out, "Output JSON (stdout when omitted)");
  cmd->callback([&] { action = [&] { return run_dynamics(dyn, g); }; });
  AggregateArgs agg;
  cmd = analyze->add_subcommand("aggregate", "Per-video rating means, flags and discards");
  cmd->add_option("--ratings", agg.ratings, "Ratings CSV")->required();
  cmd->add_option("--out", agg.out, "Output JSON (stdout when omitted)");
  cmd->callback([&] { action = [&] { return run_aggregate(agg, g); }; });
  CorrelateArgs corr;
  cmd = analyze->add_subcommand("correlate", "Rank correlation of a metric with human ratings");
  cmd->add_option("--ratings", corr.ratings, "Ratings CSV")->required();
  cmd->add_option("--metric", corr.metric, "Score report JSON or video_id,score CSV");
  cmd->add_option("--metric-name", corr.metric_name, "Name for the metric row");
  cmd->add_flag("--inter-annotator", corr.inter_annotator, "Add the annotator-agreement row");
  cmd->add_option("--out", corr.out, "Output JSON (stdout when omitted)");
  cmd->callback([&] { action = [&] { return run_correlate(corr, g); }; });

  auto* annotate = app.add_subcommand("annotate", "Human rating collection");
  annotate->require_subcommand(1);
  ServeArgs serve;
  cmd = annotate->add_subcommand("serve", "Run the annotation HTTP service");
  cmd->add_option("--pool", serve.pool, "Pool JSON file")->required();
  cmd->add_option("--journal", serve.journal, "Rating journal (JSONL)");
  cmd->add_option("--host", serve.host, "Bind address");
  cmd->add_option("--port", serve.port, "Port (default 8787)");
  cmd->add_option("--static", serve.static_dir, "UI bundle directory")->check(CLI::ExistingDirectory);
  cmd->add_option("--videos", serve.video_dir, "Video asset directory")->check(CLI::ExistingDirectory);
  cmd->callback([&] { action = [&] { return run_serve(serve, g); }; });
  ExportArgs exp;
  cmd = annotate->add_subcommand("export", "Export the journal as a ratings CSV");
  cmd->add_option("--pool", exp.pool, "Pool JSON file")->required();
  cmd->add_option("--journal", exp.journal, "Rating journal (JSONL)");
  cmd->add_option("--out", exp.out, "Ratings CSV (stdout when omitted)");
  cmd->callback([&] { action = [&] { return run_export(exp, g); }; });

  ReportArgs report;
  cmd = app.add_subcommand("report", "Combine score reports into a table");
  cmd->add_option("--inputs", report.inputs, "Score report JSON files")->required();
  cmd->add_option("--format", report.format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
  cmd->add_option("--out", report.out, "Output file (stdout when omitted)");
  cmd->callback([&] { action = [&] { return run_report(report, g); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    g.config = tcb::config::load_config(g.config_path);
    return action();
  } catch (const tcb::ProviderError& e) {
    std::cerr << "provider error: " << e.what() << "\n";
    return kExitProvider;
  } catch (const tcb::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const Json::exception& e) {
    std::cerr << "error: malformed JSON input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}
