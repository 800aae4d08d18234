/*
 Copyright 2026 The qfreg Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

 http://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#ifndef QFREG_CSV_HPP
#define QFREG_CSV_HPP

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qfreg {

/// A comma-separated file held as strings. Quoted fields may contain commas,
/// doubled quotes and newlines.
struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  // 1-based file line where each row starts

  std::optional<std::size_t> find_column(std::string_view name) const;
  /// Index of `name`; throws a schema error naming the file and column.
  std::size_t column(std::string_view name) const;
  /// "path, line N, column C" for error messages.
  std::string where(std::size_t row, std::string_view column) const;
};

CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(std::string_view text, std::string path = "<memory>");

/// Shortest decimal string that parses back to the same double.
std::string format_real(double value);
/// Parses a whole field as a real number; std::nullopt if it is not one.
std::optional<double> parse_real(std::string_view field);

std::string csv_escape(std::string_view field);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& fields);
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t width_;
};

}  // namespace qfreg

#endif  // QFREG_CSV_HPP
