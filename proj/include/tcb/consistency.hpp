// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

// Frame-consistency measurements: embedding similarity with a clamped linear
// map, the I2V TC-Score, and endpoint / trajectory errors.

#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tcb/providers.hpp"
#include "tcb/video_io.hpp"

namespace tcb::consistency {

struct EmbeddingVector {
  std::vector<double> values;  // unit L2 norm
  std::string model_fingerprint;
};

// L2-normalizes `raw`. Throws ValidationError for empty or zero vectors.
EmbeddingVector make_embedding(std::span<const float> raw, std::string fingerprint);

// Throws ValidationError on fingerprint or length mismatch.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

struct SimilarityRange {
  double lo = 0.90;
  double hi = 0.98;
};

// 0 at or below lo, 1 at or above hi, linear in between.
double map_similarity(double s, const SimilarityRange& range = {});

struct ConsistencyScore {
  std::vector<double> raw_similarities;
  std::vector<double> mapped;
  double mean_mapped = 0.0;
};

ConsistencyScore score_similarities(std::vector<double> raw, const SimilarityRange& range = {});

// cos(e_k, e_{k+1}) for k = 1..K-1. Throws for K < 2.
ConsistencyScore consecutive_consistency(std::span<const EmbeddingVector> embeds,
                                         const SimilarityRange& range = {});

// cos(e_k, e_k^ref) for k = 1..K. Throws on length mismatch.
ConsistencyScore framewise_consistency(std::span<const EmbeddingVector> embeds,
                                       std::span<const EmbeddingVector> ref_embeds,
                                       const SimilarityRange& range = {});

struct Weights {
  double w1 = 2.0 / 3.0;  // assertion pass rate
  double w2 = 1.0 / 3.0;  // mapped frame consistency
};

// Throws ValidationError unless both weights are >= 0 and sum to 1.
void validate_weights(const Weights& weights);

double tc_score_i2v(double pass_rate, double mean_mapped, const Weights& weights = {});
double tc_score_i2v(double pass_rate, const ConsistencyScore& consistency,
                    const Weights& weights = {});

// Per-frame embedding cache keyed by (frame content hash, fingerprint).
// Optional binary backing file: records of 64 hex chars of key hash, u32
// dimension, then float32 values, all little-endian.
class EmbeddingCache {
 public:
  EmbeddingCache() = default;
  explicit EmbeddingCache(std::filesystem::path path);

  std::optional<std::vector<float>> get(const std::string& frame_hash,
                                        const std::string& fingerprint) const;
  void put(const std::string& frame_hash, const std::string& fingerprint,
           const std::vector<float>& values);
  std::size_t size() const;
  std::size_t hits() const;

 private:
  static std::string key(const std::string& frame_hash, const std::string& fingerprint);
  std::map<std::string, std::vector<float>> entries_;
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mutex_;
  mutable std::size_t hits_ = 0;
};

// One normalized vector per frame. Throws ProviderError on provider failure and
// ValidationError when the dimension differs from earlier vectors of the same
// fingerprint.
std::vector<EmbeddingVector> embed_frames(const video::FrameSequence& seq,
                                          EmbeddingProvider& provider,
                                          EmbeddingCache* cache = nullptr);

struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> u;  // row-major, width * height
  std::vector<float> v;

  FlowField() = default;
  FlowField(int w, int h);
  std::size_t pixels() const { return u.size(); }
};

// Binary flow file: u32 width, u32 height (little-endian), then the u plane
// and the v plane as float32.
FlowField read_flow(const std::filesystem::path& path);
void write_flow(const FlowField& flow, const std::filesystem::path& path);
// Sorted *.flo / *.bin files of a directory.
std::vector<FlowField> read_flow_dir(const std::filesystem::path& dir);

// Bilinear resize; vectors scaled by the per-axis resize ratio.
FlowField resize_flow(const FlowField& flow, int width, int height);

struct Trajectory {
  // positions[p][k] = (x, y) of point p at frame k.
  std::vector<std::vector<std::array<double, 2>>> positions;

  std::size_t points() const { return positions.size(); }
  std::size_t frames() const { return positions.empty() ? 0 : positions.front().size(); }
};

// CSV with header point_id,frame,x,y. Every point must appear in every frame.
Trajectory read_trajectory_csv(const std::filesystem::path& path);
Trajectory parse_trajectory_csv(std::string_view text);

// Mean over frames and pixels of the endpoint distance. `ref_flows` of a
// different resolution are resized to the generated flows first when
// `resize_reference` is set; otherwise shapes must match.
double epe(std::span<const FlowField> flows, std::span<const FlowField> ref_flows,
           bool resize_reference = false);

// Mean over points and frames of the Euclidean position error.
double ate(const Trajectory& traj, const Trajectory& ref_traj);

}  // namespace tcb::consistency
