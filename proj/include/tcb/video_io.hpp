// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tcb::video {

// Frame count every assertion index is authored against.
inline constexpr int kCanonicalFrameCount = 16;
inline constexpr double kDefaultFps = 8.0;
inline constexpr std::size_t kMaxCompositeMembers = 5;

// Row-major interleaved RGB, 8 bits per channel.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h);

  bool empty() const noexcept { return width == 0 || height == 0; }
  std::uint8_t* pixel(int x, int y) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* pixel(int x, int y) const {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }

  bool operator==(const Image&) const = default;
};

Image solid_image(int width, int height, std::uint8_t r, std::uint8_t g, std::uint8_t b);

std::vector<std::uint8_t> encode_png(const Image& image);
Image decode_png(std::span<const std::uint8_t> bytes);
Image read_png(const std::filesystem::path& path);
void write_png(const Image& image, const std::filesystem::path& path);

// Bilinear (downscale: area) resize.
Image resize(const Image& image, int width, int height);

// Decoded video. Indices in every external reference are 1-based.
struct FrameSequence {
  std::vector<Image> frames;
  double fps = kDefaultFps;
  std::string source_id;

  int size() const noexcept { return static_cast<int>(frames.size()); }
  // 1-based access.
  const Image& frame(int index) const;
};

// Throws ValidationError if frames are empty or resolutions differ.
void validate_sequence(const FrameSequence& seq);

// 1-based indices idx_j = round(1 + (j-1)(K-1)/(n-1)), j = 1..n, computed in
// exact integer arithmetic (halves round up). n = 1 selects frame 1.
std::vector<int> equal_gap_indices(int frame_count, int target_count);

FrameSequence resample_equal_gaps(const FrameSequence& seq, int target_count);

// Maps an index authored against `canonical` frames onto a K-frame video.
int remap_index(int index, int frame_count, int canonical = kCanonicalFrameCount);
std::vector<int> remap_indices(std::span<const int> indices, int frame_count,
                               int canonical = kCanonicalFrameCount);

struct FrameComposite {
  Image image;
  std::vector<int> member_indices;
};

// Height-normalizes the selected frames to the smallest member height
// (aspect preserved) and concatenates them left to right in ascending index
// order. Nothing is drawn on the composite.
FrameComposite compose_horizontal(const FrameSequence& seq, std::vector<int> indices);

// Decodes `path`, samples it at `fps`, and resamples to exactly `count`
// frames. count = 1 returns the middle sampled frame.
FrameSequence extract_frames(const std::filesystem::path& path, double fps = kDefaultFps,
                             int count = kCanonicalFrameCount);

// Frame cache layout: <dir>/frame_0001.png, frame_0002.png, ...
void save_frames(const FrameSequence& seq, const std::filesystem::path& dir);
FrameSequence load_frames(const std::filesystem::path& dir, double fps = kDefaultFps);

// Content hash of a video file combined with the extraction settings; names
// the cache directory of its frames.
std::string frame_cache_key(const std::filesystem::path& video, double fps, int count);

}  // namespace tcb::video
