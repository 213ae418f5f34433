#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <ostream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace cqed::io {

// Shortest text that round-trips the double exactly.
std::string fmt_double(double v);

// Comma-separated row writer; the header is written by the constructor.
class CsvWriter {
 public:
  CsvWriter(std::ostream& os, std::initializer_list<std::string_view> header);
  CsvWriter& operator<<(double v);
  CsvWriter& operator<<(long long v);
  CsvWriter& operator<<(bool v);
  void end_row();

 private:
  void sep();
  std::ostream& os_;
  bool first_ = true;
};

// 64-bit FNV-1a over the canonical (sorted-key) dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

// Write to a sibling temporary file, then rename over the target.
void atomic_write(const std::filesystem::path& path, std::string_view content);

}  // namespace cqed::io
