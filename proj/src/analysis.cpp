// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

#include "tcb/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "tcb/error.hpp"

namespace tcb::analysis {
namespace {

int parse_score(std::string_view cell, std::size_t line, const char* column) {
  const auto text = std::string(trim(cell));
  std::size_t used = 0;
  int value = 0;
  try {
    value = std::stoi(text, &used);
  } catch (const std::logic_error&) {
    throw ParseError(line, std::string(column) + " is not an integer: '" + text + "'");
  }
  if (used != text.size()) {
    throw ParseError(line, std::string(column) + " is not an integer: '" + text + "'");
  }
  return value;
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

int sign(double d) { return (d > 0.0) - (d < 0.0); }

}  // namespace

void validate_rating(const HumanRating& rating) {
  if (rating.video_id.empty() || rating.annotator_id.empty()) {
    throw ValidationError("rating needs a video_id and an annotator_id");
  }
  for (const auto* id : {&rating.video_id, &rating.annotator_id}) {
    if (id->find_first_of(",\"\r\n") != std::string::npos) {
      throw ValidationError("ids must not contain commas, quotes or line breaks: '" + *id + "'");
    }
  }
  if (rating.q1 < 1 || rating.q1 > 5) {
    throw ValidationError("q1 must be in 1..5, got " + std::to_string(rating.q1));
  }
  if (rating.q2 < 1 || rating.q2 > 5) {
    throw ValidationError("q2 must be in 1..5, got " + std::to_string(rating.q2));
  }
}

std::vector<HumanRating> parse_ratings_csv(std::string_view text) {
  std::vector<HumanRating> ratings;
  std::set<std::pair<std::string, std::string>> seen;
  bool header_seen = false;
  std::size_t line_no = 0;
  std::size_t start = 0;
  if (text.starts_with("\xEF\xBB\xBF")) start = 3;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (!header_seen) {
      if (cells.size() != 4 || trim(cells[0]) != "video_id" || trim(cells[1]) != "annotator_id" ||
          trim(cells[2]) != "q1" || trim(cells[3]) != "q2") {
        throw ParseError(line_no, "ratings header must be video_id,annotator_id,q1,q2");
      }
      header_seen = true;
      continue;
    }
    if (cells.size() != 4) throw ParseError(line_no, "expected 4 columns");
    HumanRating r{std::string(trim(cells[0])), std::string(trim(cells[1])),
                  parse_score(cells[2], line_no, "q1"), parse_score(cells[3], line_no, "q2")};
    try {
      validate_rating(r);
    } catch (const ValidationError& e) {
      throw ParseError(line_no, e.what());
    }
    if (!seen.emplace(r.video_id, r.annotator_id).second) {
      throw ParseError(line_no, "duplicate rating for video '" + r.video_id + "' by annotator '" +
                                    r.annotator_id + "'");
    }
    ratings.push_back(std::move(r));
  }
  if (!header_seen) throw ParseError(1, "ratings file has no header");
  return ratings;
}

std::vector<HumanRating> read_ratings_csv(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ValidationError("missing ratings file " + path.string() + " (run `tcb annotate export`)");
  }
  return parse_ratings_csv(read_text_file(path));
}

std::string ratings_csv(std::vector<HumanRating> ratings) {
  std::sort(ratings.begin(), ratings.end(), [](const HumanRating& a, const HumanRating& b) {
    return std::tie(a.video_id, a.annotator_id) < std::tie(b.video_id, b.annotator_id);
  });
  std::string out = "video_id,annotator_id,q1,q2\n";
  for (const auto& r : ratings) {
    out += r.video_id + "," + r.annotator_id + "," + std::to_string(r.q1) + "," +
           std::to_string(r.q2) + "\n";
  }
  return out;
}

const VideoRatings* AggregatedRatings::find(std::string_view video_id) const {
  const auto it = std::lower_bound(
      videos.begin(), videos.end(), video_id,
      [](const VideoRatings& v, std::string_view id) { return v.video_id < id; });
  return it != videos.end() && it->video_id == video_id ? &*it : nullptr;
}

AggregatedRatings aggregate_ratings(std::span<const HumanRating> ratings,
                                    const AggregationRule& rule) {
  std::map<std::string, std::vector<const HumanRating*>> by_video;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : ratings) {
    validate_rating(r);
    if (!seen.emplace(r.video_id, r.annotator_id).second) {
      throw ValidationError("duplicate rating for video '" + r.video_id + "' by annotator '" +
                            r.annotator_id + "'");
    }
    by_video[r.video_id].push_back(&r);
  }

  AggregatedRatings out;
  for (const auto& [video_id, group] : by_video) {
    int q1_min = 5, q1_max = 1, q2_min = 5, q2_max = 1;
    double q1_sum = 0.0, q2_sum = 0.0;
    for (const auto* r : group) {
      q1_min = std::min(q1_min, r->q1);
      q1_max = std::max(q1_max, r->q1);
      q2_min = std::min(q2_min, r->q2);
      q2_max = std::max(q2_max, r->q2);
      q1_sum += r->q1;
      q2_sum += r->q2;
    }
    if (q1_max - q1_min >= rule.divisive_spread || q2_max - q2_min >= rule.divisive_spread) {
      out.discarded.push_back(
          {video_id, "divisive: q1 spread " + std::to_string(q1_max - q1_min) + ", q2 spread " +
                         std::to_string(q2_max - q2_min)});
      continue;
    }
    VideoRatings v;
    v.video_id = video_id;
    v.annotators = group.size();
    v.mean_q1 = q1_sum / static_cast<double>(group.size());
    v.mean_q2 = q2_sum / static_cast<double>(group.size());
    v.completed = v.mean_q1 > rule.completion_threshold;
    v.consistency_eligible = v.mean_q1 >= rule.consistency_floor;
    out.videos.push_back(std::move(v));
  }
  return out;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    // Positions i..j (0-based) share rank mean(i+1 .. j+1).
    const double rank = static_cast<double>(i + j + 2) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("correlation inputs differ in length");
  if (x.size() < 2) throw ValidationError("correlation needs at least 2 samples");
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw ValidationError("correlation undefined for constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrelationResult rank_correlation(std::span<const double> metric, std::span<const double> human) {
  if (metric.size() != human.size()) {
    throw ValidationError("paired lists differ in length: " + std::to_string(metric.size()) +
                          " vs " + std::to_string(human.size()));
  }
  const std::size_t n = metric.size();
  if (n < 2) throw ValidationError("rank correlation needs at least 2 pairs");

  const auto rx = average_ranks(metric);
  const auto ry = average_ranks(human);

  long long concordant = 0, discordant = 0, tied_x = 0, tied_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const int sx = sign(metric[i] - metric[j]);
      const int sy = sign(human[i] - human[j]);
      if (sx == 0) ++tied_x;
      if (sy == 0) ++tied_y;
      if (sx * sy > 0) ++concordant;
      if (sx * sy < 0) ++discordant;
    }
  }
  const auto n0 = static_cast<long long>(n * (n - 1) / 2);
  if (tied_x == n0 || tied_y == n0) {
    throw ValidationError("rank correlation undefined: one list has zero variance");
  }

  CorrelationResult result;
  result.n = n;
  result.spearman_rho = pearson(rx, ry);
  result.kendall_tau =
      static_cast<double>(concordant - discordant) /
      std::sqrt(static_cast<double>(n0 - tied_x) * static_cast<double>(n0 - tied_y));
  result.kendall_tau = std::clamp(result.kendall_tau, -1.0, 1.0);
  return result;
}

CorrelationResult mean_correlation(std::span<const CorrelationResult> results) {
  if (results.empty()) throw ValidationError("no correlations to average");
  CorrelationResult out;
  for (const auto& r : results) {
    out.spearman_rho += r.spearman_rho;
    out.kendall_tau += r.kendall_tau;
    out.n += r.n;
  }
  out.spearman_rho /= static_cast<double>(results.size());
  out.kendall_tau /= static_cast<double>(results.size());
  return out;
}

InterAnnotatorResult inter_annotator_correlation(std::span<const HumanRating> ratings,
                                                 Question question) {
  std::map<std::string, std::map<std::string, int>> by_annotator;
  for (const auto& r : ratings) {
    validate_rating(r);
    const int score = question == Question::kQ1 ? r.q1 : r.q2;
    if (!by_annotator[r.annotator_id].emplace(r.video_id, score).second) {
      throw ValidationError("duplicate rating for video '" + r.video_id + "' by annotator '" +
                            r.annotator_id + "'");
    }
  }

  InterAnnotatorResult out;
  std::vector<CorrelationResult> pairwise;
  for (auto a = by_annotator.begin(); a != by_annotator.end(); ++a) {
    for (auto b = std::next(a); b != by_annotator.end(); ++b) {
      std::vector<double> x, y;
      for (const auto& [video, score] : a->second) {
        if (const auto it = b->second.find(video); it != b->second.end()) {
          x.push_back(score);
          y.push_back(it->second);
        }
      }
      if (x.size() < 2) {
        if (!x.empty()) ++out.skipped_pairs;
        continue;
      }
      try {
        pairwise.push_back(rank_correlation(x, y));
      } catch (const ValidationError&) {
        ++out.skipped_pairs;
      }
    }
  }
  if (pairwise.empty()) {
    throw ValidationError("no annotator pair shares at least 2 videos with varying ratings");
  }
  out.pairs = pairwise.size();
  out.mean = mean_correlation(pairwise);
  return out;
}

Json correlation_report(const std::map<std::string, double>& metric_scores,
                        const AggregatedRatings& human, std::string_view metric_name) {
  std::vector<double> metric, q1, q2;
  for (const auto& v : human.videos) {
    if (const auto it = metric_scores.find(v.video_id); it != metric_scores.end()) {
      metric.push_back(it->second);
      q1.push_back(v.mean_q1);
      q2.push_back(v.mean_q2);
    }
  }
  const auto cell = [&](const std::vector<double>& h) -> Json {
    try {
      const auto r = rank_correlation(metric, h);
      return {{"spearman", r.spearman_rho}, {"kendall", r.kendall_tau}, {"n", r.n}};
    } catch (const ValidationError& e) {
      return {{"spearman", nullptr}, {"kendall", nullptr}, {"n", metric.size()}, {"error", e.what()}};
    }
  };
  return {{"metric", metric_name},
          {"videos_matched", metric.size()},
          {"videos_discarded", human.discarded.size()},
          {"q1", cell(q1)},
          {"q2", cell(q2)}};
}

std::pair<std::string, std::string> attribute_captions(const corpus::TransitionPrompt& prompt) {
  return {"a " + prompt.start_value + " " + prompt.transition_object,
          "a " + prompt.end_value + " " + prompt.transition_object};
}

std::pair<CurveSeries, CurveSeries> attribute_curves(
    const corpus::TransitionPrompt& prompt, std::span<const consistency::EmbeddingVector> embeds,
    EmbeddingProvider& provider) {
  if (prompt.category != corpus::Category::kAttribute) {
    throw ValidationError("caption curves need an attribute prompt; '" + prompt.id + "' is " +
                          std::string(corpus::to_string(prompt.category)));
  }
  if (embeds.empty()) throw ValidationError("caption curves need frame embeddings");
  const auto [start_caption, end_caption] = attribute_captions(prompt);
  const auto fingerprint = provider.fingerprint();
  const auto embed_caption = [&](const std::string& caption) {
    try {
      return consistency::make_embedding(provider.embed_text(caption), fingerprint);
    } catch (const ValidationError&) {
      throw;
    } catch (const ProviderError&) {
      throw;
    } catch (const std::exception& e) {
      throw ProviderError(std::string("caption embedding failed: ") + e.what());
    }
  };
  const auto start = embed_caption(start_caption);
  const auto end = embed_caption(end_caption);

  std::pair<CurveSeries, CurveSeries> curves{{"start", {}}, {"end", {}}};
  for (const auto& e : embeds) {
    curves.first.values.push_back(consistency::cosine_similarity(e, start));
    curves.second.values.push_back(consistency::cosine_similarity(e, end));
  }
  return curves;
}

CurveSeries consecutive_curve(std::span<const consistency::EmbeddingVector> embeds,
                              std::string name) {
  if (embeds.size() < 2) throw ValidationError("consecutive curve needs at least 2 frames");
  CurveSeries curve{std::move(name), {}};
  for (std::size_t k = 0; k + 1 < embeds.size(); ++k) {
    curve.values.push_back(consistency::cosine_similarity(embeds[k], embeds[k + 1]));
  }
  return curve;
}

CurveSeries mean_curve(std::span<const CurveSeries> curves, std::string name) {
  if (curves.empty()) throw ValidationError("no curves to average");
  const auto length = curves.front().values.size();
  CurveSeries out{std::move(name), std::vector<double>(length, 0.0)};
  for (const auto& c : curves) {
    if (c.values.size() != length) throw ValidationError("curves differ in length");
    for (std::size_t i = 0; i < length; ++i) out.values[i] += c.values[i];
  }
  for (auto& v : out.values) v /= static_cast<double>(curves.size());
  return out;
}

int trend_sign(const CurveSeries& curve) {
  if (curve.values.empty()) throw ValidationError("trend of an empty curve");
  return sign(curve.values.back() - curve.values.front());
}

std::string curves_csv(std::span<const CurveSeries> curves) {
  std::ostringstream out;
  out.precision(17);
  out << "index";
  std::size_t rows = 0;
  for (const auto& c : curves) {
    out << ',' << c.name;
    rows = std::max(rows, c.values.size());
  }
  out << '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    out << i + 1;
    for (const auto& c : curves) {
      out << ',';
      if (i < c.values.size()) out << c.values[i];
    }
    out << '\n';
  }
  return out.str();
}

DynamicsResult dynamics_degree(std::span<const consistency::FlowField> flows,
                               double static_threshold) {
  if (flows.empty()) throw ValidationError("dynamics degree needs at least one flow field");
  if (!(static_threshold >= 0.0)) throw ValidationError("static threshold must be >= 0");
  DynamicsResult result;
  double total = 0.0;
  for (std::size_t k = 0; k < flows.size(); ++k) {
    const auto& f = flows[k];
    double sum = 0.0;
    std::size_t moving = 0;
    for (std::size_t p = 0; p < f.pixels(); ++p) {
      const double magnitude = std::hypot(static_cast<double>(f.u[p]), static_cast<double>(f.v[p]));
      if (magnitude > static_threshold) {
        sum += magnitude;
        ++moving;
      }
    }
    if (moving == 0) {
      result.all_masked_frames.push_back(k + 1);
    } else {
      total += sum / static_cast<double>(moving);
    }
  }
  result.degree = total / static_cast<double>(flows.size());
  return result;
}

}  // namespace tcb::analysis
