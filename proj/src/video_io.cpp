// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

#include "tcb/video_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "tcb/error.hpp"
#include "tcb/io.hpp"

namespace tcb::video {
namespace {

// Views an Image as a BGR cv::Mat copy (OpenCV's native channel order).
cv::Mat to_bgr(const Image& image) {
  cv::Mat rgb(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.rgb.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

Image from_bgr(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  if (!rgb.isContinuous()) rgb = rgb.clone();
  Image image(rgb.cols, rgb.rows);
  std::copy(rgb.data, rgb.data + image.rgb.size(), image.rgb.begin());
  return image;
}

std::string frame_name(int index) {
  char name[32];
  std::snprintf(name, sizeof(name), "frame_%04d.png", index);
  return name;
}

}  // namespace

Image::Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}

Image solid_image(int width, int height, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  Image image(width, height);
  for (std::size_t i = 0; i < image.rgb.size(); i += 3) {
    image.rgb[i] = r;
    image.rgb[i + 1] = g;
    image.rgb[i + 2] = b;
  }
  return image;
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  if (image.empty()) throw ValidationError("cannot encode an empty image");
  std::vector<std::uint8_t> bytes;
  if (!cv::imencode(".png", to_bgr(image), bytes)) throw ValidationError("PNG encoding failed");
  return bytes;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  const cv::Mat buffer(1, static_cast<int>(bytes.size()), CV_8UC1,
                       const_cast<std::uint8_t*>(bytes.data()));
  const cv::Mat bgr = cv::imdecode(buffer, cv::IMREAD_COLOR);
  if (bgr.empty()) throw ValidationError("PNG decoding failed");
  return from_bgr(bgr);
}

Image read_png(const std::filesystem::path& path) {
  const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw ValidationError("cannot read image " + path.string());
  return from_bgr(bgr);
}

void write_png(const Image& image, const std::filesystem::path& path) {
  const auto bytes = encode_png(image);
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

Image resize(const Image& image, int width, int height) {
  if (width == image.width && height == image.height) return image;
  cv::Mat out;
  const bool shrinking = width < image.width || height < image.height;
  cv::resize(to_bgr(image), out, cv::Size(width, height), 0, 0,
             shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
  return from_bgr(out);
}

const Image& FrameSequence::frame(int index) const {
  if (index < 1 || index > size()) {
    throw ValidationError("frame index " + std::to_string(index) + " out of range 1.." +
                          std::to_string(size()));
  }
  return frames[static_cast<std::size_t>(index - 1)];
}

void validate_sequence(const FrameSequence& seq) {
  if (seq.frames.empty()) throw ValidationError("frame sequence '" + seq.source_id + "' is empty");
  const auto& first = seq.frames.front();
  for (const auto& f : seq.frames) {
    if (f.width != first.width || f.height != first.height) {
      throw ValidationError("frame sequence '" + seq.source_id + "' mixes resolutions");
    }
  }
}

std::vector<int> equal_gap_indices(int frame_count, int target_count) {
  if (frame_count < 1) throw ValidationError("resampling needs at least one frame");
  if (target_count < 1) throw ValidationError("resampling target must be positive");
  std::vector<int> indices;
  indices.reserve(static_cast<std::size_t>(target_count));
  if (target_count == 1) {
    indices.push_back(1);
    return indices;
  }
  const long long span = frame_count - 1;
  const long long steps = target_count - 1;
  for (long long j = 0; j < target_count; ++j) {
    // round(j * span / steps), halves up, without floating point.
    const long long offset = (2 * j * span + steps) / (2 * steps);
    indices.push_back(static_cast<int>(1 + offset));
  }
  return indices;
}

FrameSequence resample_equal_gaps(const FrameSequence& seq, int target_count) {
  FrameSequence out;
  out.fps = seq.fps;
  out.source_id = seq.source_id;
  for (const int index : equal_gap_indices(seq.size(), target_count)) {
    out.frames.push_back(seq.frame(index));
  }
  return out;
}

int remap_index(int index, int frame_count, int canonical) {
  if (index < 1 || index > canonical) {
    throw ValidationError("index " + std::to_string(index) + " outside canonical range 1.." +
                          std::to_string(canonical));
  }
  if (frame_count < 1) throw ValidationError("remapping onto an empty video");
  if (canonical == 1) return 1;
  const long long numerator = 2LL * (index - 1) * (frame_count - 1) + (canonical - 1);
  return static_cast<int>(1 + numerator / (2LL * (canonical - 1)));
}

std::vector<int> remap_indices(std::span<const int> indices, int frame_count, int canonical) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (const int i : indices) out.push_back(remap_index(i, frame_count, canonical));
  return out;
}

FrameComposite compose_horizontal(const FrameSequence& seq, std::vector<int> indices) {
  if (indices.empty() || indices.size() > kMaxCompositeMembers) {
    throw ValidationError("a composite takes 1 to 5 frame indices, got " +
                          std::to_string(indices.size()));
  }
  std::sort(indices.begin(), indices.end());
  if (std::adjacent_find(indices.begin(), indices.end()) != indices.end()) {
    throw ValidationError("duplicate frame index in composite");
  }
  for (const int index : indices) {
    if (index < 1 || index > seq.size()) {
      throw ValidationError("frame index " + std::to_string(index) + " out of range (K = " +
                            std::to_string(seq.size()) + ")");
    }
  }

  int min_height = seq.frame(indices.front()).height;
  for (const int index : indices) min_height = std::min(min_height, seq.frame(index).height);

  std::vector<Image> members;
  int total_width = 0;
  for (const int index : indices) {
    const auto& frame = seq.frame(index);
    const int width = frame.height == min_height
                          ? frame.width
                          : std::max(1, static_cast<int>(std::lround(
                                            static_cast<double>(frame.width) * min_height /
                                            frame.height)));
    members.push_back(resize(frame, width, min_height));
    total_width += width;
  }

  FrameComposite composite;
  composite.member_indices = indices;
  composite.image = Image(total_width, min_height);
  int x0 = 0;
  for (const auto& member : members) {
    const std::size_t row_bytes = static_cast<std::size_t>(member.width) * 3;
    for (int y = 0; y < min_height; ++y) {
      std::copy_n(member.pixel(0, y), row_bytes, composite.image.pixel(x0, y));
    }
    x0 += member.width;
  }
  return composite;
}

FrameSequence extract_frames(const std::filesystem::path& path, double fps, int count) {
  if (!(fps > 0.0)) throw ValidationError("target fps must be positive");
  if (count < 1) throw ValidationError("target frame count must be positive");
  if (!std::filesystem::exists(path)) throw ValidationError("no such video: " + path.string());

  cv::VideoCapture capture(path.string());
  if (!capture.isOpened()) throw ValidationError("cannot decode video " + path.string());
  double native_fps = capture.get(cv::CAP_PROP_FPS);
  if (!(native_fps > 0.0)) native_fps = fps;

  std::vector<Image> decoded;
  cv::Mat bgr;
  while (capture.read(bgr)) {
    if (bgr.empty()) break;
    decoded.push_back(from_bgr(bgr));
  }
  if (decoded.empty()) throw ValidationError("no frames decoded from " + path.string());

  const double duration = static_cast<double>(decoded.size()) / native_fps;
  // Tolerate rounding in container-reported frame rates.
  if (duration + 1e-9 < 1.0 / fps) {
    throw ValidationError("video " + path.string() + " is shorter than one frame interval at " +
                          std::to_string(fps) + " fps");
  }

  // Sample at the target rate: the frame displayed at time m / fps.
  FrameSequence sampled;
  sampled.fps = fps;
  sampled.source_id = path.stem().string();
  const auto sample_count = static_cast<std::size_t>(std::floor(duration * fps + 1e-9));
  for (std::size_t m = 0; m < std::max<std::size_t>(sample_count, 1); ++m) {
    const auto source = std::min(decoded.size() - 1,
                                 static_cast<std::size_t>(std::floor(m * native_fps / fps + 1e-9)));
    sampled.frames.push_back(decoded[source]);
  }
  validate_sequence(sampled);

  if (count == 1) {
    FrameSequence middle;
    middle.fps = fps;
    middle.source_id = sampled.source_id;
    middle.frames.push_back(sampled.frame((sampled.size() + 1) / 2));
    return middle;
  }
  return resample_equal_gaps(sampled, count);
}

void save_frames(const FrameSequence& seq, const std::filesystem::path& dir) {
  validate_sequence(seq);
  std::filesystem::create_directories(dir);
  for (int i = 1; i <= seq.size(); ++i) write_png(seq.frame(i), dir / frame_name(i));
}

FrameSequence load_frames(const std::filesystem::path& dir, double fps) {
  if (!std::filesystem::is_directory(dir)) {
    throw ValidationError("missing frame directory " + dir.string() + " (run `tcb extract`)");
  }
  FrameSequence seq;
  seq.fps = fps;
  seq.source_id = dir.filename().string();
  for (int i = 1;; ++i) {
    const auto path = dir / frame_name(i);
    if (!std::filesystem::exists(path)) break;
    seq.frames.push_back(read_png(path));
  }
  validate_sequence(seq);
  return seq;
}

std::string frame_cache_key(const std::filesystem::path& video, double fps, int count) {
  std::ostringstream settings;
  settings << sha256_file(video) << ":fps=" << fps << ":count=" << count;
  return sha256_hex(settings.str()).substr(0, 32);
}

}  // namespace tcb::video
