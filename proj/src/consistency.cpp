// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

#include "tcb/consistency.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "tcb/error.hpp"
#include "tcb/io.hpp"

namespace tcb::consistency {
namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume little-endian");

template <typename T>
void write_raw(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
bool read_raw(std::istream& in, T& value) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&value), sizeof(T)));
}

std::string frame_hash(const video::Image& image) {
  const std::string dims = std::to_string(image.width) + "x" + std::to_string(image.height) + ":";
  return sha256_hex(dims + sha256_hex(std::span<const std::uint8_t>(image.rgb)));
}

}  // namespace

EmbeddingVector make_embedding(std::span<const float> raw, std::string fingerprint) {
  if (raw.empty()) throw ValidationError("empty embedding");
  double norm = 0.0;
  for (const float x : raw) {
    if (!std::isfinite(x)) throw ValidationError("embedding has non-finite values");
    norm += static_cast<double>(x) * x;
  }
  norm = std::sqrt(norm);
  if (norm == 0.0) throw ValidationError("zero embedding cannot be normalized");
  EmbeddingVector out;
  out.model_fingerprint = std::move(fingerprint);
  out.values.reserve(raw.size());
  for (const float x : raw) out.values.push_back(static_cast<double>(x) / norm);
  return out;
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.model_fingerprint != b.model_fingerprint) {
    throw ValidationError("embedding fingerprints differ: '" + a.model_fingerprint + "' vs '" +
                          b.model_fingerprint + "'");
  }
  if (a.values.size() != b.values.size()) {
    throw ValidationError("embedding lengths differ: " + std::to_string(a.values.size()) + " vs " +
                          std::to_string(b.values.size()));
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) dot += a.values[i] * b.values[i];
  return std::clamp(dot, -1.0, 1.0);
}

double map_similarity(double s, const SimilarityRange& range) {
  if (!(range.lo < range.hi)) throw ValidationError("similarity range needs lo < hi");
  if (s <= range.lo) return 0.0;
  if (s >= range.hi) return 1.0;
  // Measured from the midpoint so that the midpoint maps to exactly 0.5.
  const double mid = (range.lo + range.hi) / 2.0;
  return std::clamp(0.5 + (s - mid) / (range.hi - range.lo), 0.0, 1.0);
}

ConsistencyScore score_similarities(std::vector<double> raw, const SimilarityRange& range) {
  if (raw.empty()) throw ValidationError("no similarities to score");
  ConsistencyScore score;
  double sum = 0.0;
  for (const double s : raw) {
    score.mapped.push_back(map_similarity(s, range));
    sum += score.mapped.back();
  }
  score.mean_mapped = sum / static_cast<double>(raw.size());
  score.raw_similarities = std::move(raw);
  return score;
}

ConsistencyScore consecutive_consistency(std::span<const EmbeddingVector> embeds,
                                         const SimilarityRange& range) {
  if (embeds.size() < 2) {
    throw ValidationError("consecutive consistency needs at least 2 frames, got " +
                          std::to_string(embeds.size()));
  }
  std::vector<double> raw;
  raw.reserve(embeds.size() - 1);
  for (std::size_t k = 0; k + 1 < embeds.size(); ++k) {
    raw.push_back(cosine_similarity(embeds[k], embeds[k + 1]));
  }
  return score_similarities(std::move(raw), range);
}

ConsistencyScore framewise_consistency(std::span<const EmbeddingVector> embeds,
                                       std::span<const EmbeddingVector> ref_embeds,
                                       const SimilarityRange& range) {
  if (embeds.size() != ref_embeds.size()) {
    throw ValidationError("frame-wise consistency needs equal frame counts, got " +
                          std::to_string(embeds.size()) + " vs " +
                          std::to_string(ref_embeds.size()));
  }
  if (embeds.empty()) throw ValidationError("frame-wise consistency of an empty video");
  std::vector<double> raw;
  raw.reserve(embeds.size());
  for (std::size_t k = 0; k < embeds.size(); ++k) {
    raw.push_back(cosine_similarity(embeds[k], ref_embeds[k]));
  }
  return score_similarities(std::move(raw), range);
}

void validate_weights(const Weights& weights) {
  if (!(weights.w1 >= 0.0) || !(weights.w2 >= 0.0)) {
    throw ValidationError("weights must be non-negative");
  }
  if (std::abs(weights.w1 + weights.w2 - 1.0) > 1e-9) {
    throw ValidationError("weights must sum to 1, got " + std::to_string(weights.w1 + weights.w2));
  }
}

double tc_score_i2v(double pass_rate, double mean_mapped, const Weights& weights) {
  validate_weights(weights);
  if (pass_rate < 0.0 || pass_rate > 1.0) throw ValidationError("pass rate outside [0, 1]");
  if (mean_mapped < 0.0 || mean_mapped > 1.0) throw ValidationError("consistency outside [0, 1]");
  return weights.w1 * pass_rate + weights.w2 * mean_mapped;
}

double tc_score_i2v(double pass_rate, const ConsistencyScore& consistency, const Weights& weights) {
  return tc_score_i2v(pass_rate, consistency.mean_mapped, weights);
}

EmbeddingCache::EmbeddingCache(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(*path_)) return;
  std::ifstream in(*path_, std::ios::binary);
  if (!in) throw ValidationError("cannot open embedding cache " + path_->string());
  while (true) {
    std::string key(64, '\0');
    if (!in.read(key.data(), 64)) break;
    std::uint32_t dim = 0;
    if (!read_raw(in, dim)) throw ValidationError("truncated embedding cache " + path_->string());
    std::vector<float> values(dim);
    if (!in.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(dim * sizeof(float)))) {
      throw ValidationError("truncated embedding cache " + path_->string());
    }
    entries_[key] = std::move(values);
  }
}

std::string EmbeddingCache::key(const std::string& frame_hash, const std::string& fingerprint) {
  return sha256_hex(frame_hash + "|" + fingerprint);
}

std::optional<std::vector<float>> EmbeddingCache::get(const std::string& frame_hash,
                                                      const std::string& fingerprint) const {
  std::lock_guard lock(mutex_);
  if (const auto it = entries_.find(key(frame_hash, fingerprint)); it != entries_.end()) {
    ++hits_;
    return it->second;
  }
  return std::nullopt;
}

void EmbeddingCache::put(const std::string& frame_hash, const std::string& fingerprint,
                         const std::vector<float>& values) {
  std::lock_guard lock(mutex_);
  const auto k = key(frame_hash, fingerprint);
  if (!entries_.emplace(k, values).second) return;
  if (!path_) return;
  // One buffered write per record keeps records whole.
  std::ostringstream record;
  record.write(k.data(), 64);
  write_raw(record, static_cast<std::uint32_t>(values.size()));
  record.write(reinterpret_cast<const char*>(values.data()),
               static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
  std::ofstream out(*path_, std::ios::binary | std::ios::app);
  out << record.str();
  out.flush();
  if (!out) throw ValidationError("cannot append to embedding cache " + path_->string());
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::size_t EmbeddingCache::hits() const {
  std::lock_guard lock(mutex_);
  return hits_;
}

std::vector<EmbeddingVector> embed_frames(const video::FrameSequence& seq,
                                          EmbeddingProvider& provider, EmbeddingCache* cache) {
  video::validate_sequence(seq);
  const auto fingerprint = provider.fingerprint();
  std::vector<EmbeddingVector> out;
  out.reserve(seq.frames.size());
  for (const auto& frame : seq.frames) {
    const auto hash = frame_hash(frame);
    std::optional<std::vector<float>> raw;
    if (cache) raw = cache->get(hash, fingerprint);
    if (!raw) {
      try {
        raw = provider.embed_image(frame);
      } catch (const ProviderError&) {
        throw;
      } catch (const ValidationError&) {
        throw;
      } catch (const std::exception& e) {
        throw ProviderError(std::string("embedding failed: ") + e.what());
      }
      if (cache) cache->put(hash, fingerprint, *raw);
    }
    if (!out.empty() && raw->size() != out.front().values.size()) {
      throw ValidationError("embedding dimension " + std::to_string(raw->size()) +
                            " differs from " + std::to_string(out.front().values.size()) +
                            " for fingerprint " + fingerprint);
    }
    out.push_back(make_embedding(*raw, fingerprint));
  }
  return out;
}

FlowField::FlowField(int w, int h)
    : width(w),
      height(h),
      u(static_cast<std::size_t>(w) * h, 0.0F),
      v(static_cast<std::size_t>(w) * h, 0.0F) {}

FlowField read_flow(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open flow file " + path.string());
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  if (!read_raw(in, width) || !read_raw(in, height)) {
    throw ValidationError("flow file " + path.string() + " has a truncated header");
  }
  if (width == 0 || height == 0 || width > 1u << 15 || height > 1u << 15) {
    throw ValidationError("flow file " + path.string() + " has implausible dimensions");
  }
  FlowField flow(static_cast<int>(width), static_cast<int>(height));
  const auto bytes = static_cast<std::streamsize>(flow.pixels() * sizeof(float));
  if (!in.read(reinterpret_cast<char*>(flow.u.data()), bytes) ||
      !in.read(reinterpret_cast<char*>(flow.v.data()), bytes)) {
    throw ValidationError("flow file " + path.string() + " is truncated");
  }
  return flow;
}

void write_flow(const FlowField& flow, const std::filesystem::path& path) {
  std::ostringstream out;
  write_raw(out, static_cast<std::uint32_t>(flow.width));
  write_raw(out, static_cast<std::uint32_t>(flow.height));
  out.write(reinterpret_cast<const char*>(flow.u.data()),
            static_cast<std::streamsize>(flow.pixels() * sizeof(float)));
  out.write(reinterpret_cast<const char*>(flow.v.data()),
            static_cast<std::streamsize>(flow.pixels() * sizeof(float)));
  write_file_atomic(path, out.str());
}

std::vector<FlowField> read_flow_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ValidationError("no flow directory " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".flo" || ext == ".bin")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValidationError("no flow files in " + dir.string());
  std::vector<FlowField> flows;
  for (const auto& f : files) flows.push_back(read_flow(f));
  return flows;
}

FlowField resize_flow(const FlowField& flow, int width, int height) {
  if (width < 1 || height < 1) throw ValidationError("flow resize target must be positive");
  if (width == flow.width && height == flow.height) return flow;
  const cv::Mat u(flow.height, flow.width, CV_32F, const_cast<float*>(flow.u.data()));
  const cv::Mat v(flow.height, flow.width, CV_32F, const_cast<float*>(flow.v.data()));
  cv::Mat ru;
  cv::Mat rv;
  cv::resize(u, ru, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  cv::resize(v, rv, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  const double sx = static_cast<double>(width) / flow.width;
  const double sy = static_cast<double>(height) / flow.height;
  FlowField out(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const auto i = static_cast<std::size_t>(y) * width + x;
      out.u[i] = static_cast<float>(ru.at<float>(y, x) * sx);
      out.v[i] = static_cast<float>(rv.at<float>(y, x) * sy);
    }
  }
  return out;
}

Trajectory parse_trajectory_csv(std::string_view text) {
  std::map<long long, std::map<long long, std::array<double, 2>>> points;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (!header_seen) {
      header_seen = true;
      if (cells.size() != 4 || trim(cells[0]) != "point_id" || trim(cells[1]) != "frame" ||
          trim(cells[2]) != "x" || trim(cells[3]) != "y") {
        throw ParseError(line_no, "trajectory header must be point_id,frame,x,y");
      }
      continue;
    }
    if (cells.size() != 4) throw ParseError(line_no, "expected 4 columns");
    try {
      const long long id = std::stoll(std::string(trim(cells[0])));
      const long long frame = std::stoll(std::string(trim(cells[1])));
      const double x = std::stod(std::string(trim(cells[2])));
      const double y = std::stod(std::string(trim(cells[3])));
      if (!points[id].emplace(frame, std::array<double, 2>{x, y}).second) {
        throw ParseError(line_no, "duplicate (point_id, frame)");
      }
    } catch (const std::logic_error&) {
      throw ParseError(line_no, "non-numeric trajectory value");
    }
  }
  if (points.empty()) throw ValidationError("trajectory has no points");

  const auto& first_frames = points.begin()->second;
  Trajectory traj;
  for (const auto& [id, frames] : points) {
    if (frames.size() != first_frames.size() ||
        !std::equal(frames.begin(), frames.end(), first_frames.begin(),
                    [](const auto& a, const auto& b) { return a.first == b.first; })) {
      throw ValidationError("point " + std::to_string(id) + " is not tracked through every frame");
    }
    std::vector<std::array<double, 2>> row;
    for (const auto& [frame, pos] : frames) row.push_back(pos);
    traj.positions.push_back(std::move(row));
  }
  return traj;
}

Trajectory read_trajectory_csv(const std::filesystem::path& path) {
  return parse_trajectory_csv(read_text_file(path));
}

double epe(std::span<const FlowField> flows, std::span<const FlowField> ref_flows,
           bool resize_reference) {
  if (flows.empty()) throw ValidationError("EPE needs at least one flow field");
  if (flows.size() != ref_flows.size()) {
    throw ValidationError("EPE frame counts differ: " + std::to_string(flows.size()) + " vs " +
                          std::to_string(ref_flows.size()));
  }
  double total = 0.0;
  for (std::size_t k = 0; k < flows.size(); ++k) {
    const auto& f = flows[k];
    const FlowField* r = &ref_flows[k];
    FlowField resized;
    if (r->width != f.width || r->height != f.height) {
      if (!resize_reference) {
        throw ValidationError("flow " + std::to_string(k + 1) + " shape " +
                              std::to_string(f.width) + "x" + std::to_string(f.height) +
                              " differs from reference " + std::to_string(r->width) + "x" +
                              std::to_string(r->height));
      }
      resized = resize_flow(*r, f.width, f.height);
      r = &resized;
    }
    if (f.pixels() == 0) throw ValidationError("empty flow field");
    double frame_sum = 0.0;
    for (std::size_t p = 0; p < f.pixels(); ++p) {
      const double du = static_cast<double>(f.u[p]) - r->u[p];
      const double dv = static_cast<double>(f.v[p]) - r->v[p];
      frame_sum += std::sqrt(du * du + dv * dv);
    }
    total += frame_sum / static_cast<double>(f.pixels());
  }
  return total / static_cast<double>(flows.size());
}

double ate(const Trajectory& traj, const Trajectory& ref_traj) {
  if (traj.points() == 0 || traj.frames() == 0) throw ValidationError("ATE of an empty trajectory");
  if (traj.points() != ref_traj.points() || traj.frames() != ref_traj.frames()) {
    throw ValidationError("trajectory shapes differ: " + std::to_string(traj.points()) + "x" +
                          std::to_string(traj.frames()) + " vs " +
                          std::to_string(ref_traj.points()) + "x" +
                          std::to_string(ref_traj.frames()));
  }
  double total = 0.0;
  for (std::size_t k = 0; k < traj.frames(); ++k) {
    double frame_sum = 0.0;
    for (std::size_t p = 0; p < traj.points(); ++p) {
      if (traj.positions[p].size() != traj.frames() ||
          ref_traj.positions[p].size() != traj.frames()) {
        throw ValidationError("ragged trajectory");
      }
      const auto& a = traj.positions[p][k];
      const auto& b = ref_traj.positions[p][k];
      frame_sum += std::hypot(a[0] - b[0], a[1] - b[1]);
    }
    total += frame_sum / static_cast<double>(traj.points());
  }
  return total / static_cast<double>(traj.frames());
}

}  // namespace tcb::consistency
