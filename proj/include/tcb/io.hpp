// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace tcb {

using Json = nlohmann::json;

std::string sha256_hex(std::string_view data);
std::string sha256_hex(std::span<const std::uint8_t> data);
std::string sha256_file(const std::filesystem::path& path);

std::string base64_encode(std::span<const std::uint8_t> data);

std::string read_text_file(const std::filesystem::path& path);

// Writes to a sibling temporary and renames over `path`, so readers never
// observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// Calls `fn(line_number, parsed_record)` for every non-blank line. Lines are
// 1-based. Throws ParseError on malformed JSON.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const Json&)>& fn);

std::string to_jsonl(const std::vector<Json>& records);

// Append-only JSON-lines sink. Each record is written with a single write
// call followed by a flush; concurrent appends are serialized.
class JsonlAppender {
 public:
  explicit JsonlAppender(std::filesystem::path path);

  void append(const Json& record);
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mutex_;
};

// Splits on a single-character delimiter without quote handling.
std::vector<std::string> split(std::string_view text, char delimiter);
std::string_view trim(std::string_view text);
std::string to_lower(std::string_view text);

}  // namespace tcb
