#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgnn/stats.hpp"

namespace cgnn {

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;  // one row per data line
};

// Numeric CSV with a single header line. Values are written with 17
// significant digits so a write/read round trip is exact.
CsvTable ReadCsv(const std::filesystem::path& path);
void WriteCsv(const std::filesystem::path& path, const CsvTable& table);
// Same layout with a leading string column (row labels).
void WriteLabeledCsv(const std::filesystem::path& path, const std::vector<std::string>& header,
                     const std::vector<std::string>& row_labels, const Matrix& values);

nlohmann::json ReadJson(const std::filesystem::path& path);
// Pretty-printed with sorted keys, newline terminated.
void WriteJson(const std::filesystem::path& path, const nlohmann::json& json);
void WriteText(const std::filesystem::path& path, const std::string& text);
std::string ReadText(const std::filesystem::path& path);

// Shortest decimal string that parses back to the same double.
std::string FormatDouble(double value);

}  // namespace cgnn
