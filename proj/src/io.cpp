#include "cgnn/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "cgnn/error.hpp"

namespace cgnn {

namespace {

std::vector<std::string> SplitLine(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

void EnsureParent(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

std::ofstream OpenOut(const std::filesystem::path& path) {
  EnsureParent(path);
  std::ofstream os(path, std::ios::binary);
  CGNN_CHECK(os.good(), ErrorKind::kIo, "cannot write " + path.string());
  return os;
}

}  // namespace

std::string FormatDouble(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

CsvTable ReadCsv(const std::filesystem::path& path) {
  std::ifstream is(path);
  CGNN_CHECK(is.good(), ErrorKind::kIo, "cannot read " + path.string());
  CsvTable table;
  std::string line;
  CGNN_CHECK(static_cast<bool>(std::getline(is, line)), ErrorKind::kIo, "empty CSV " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  table.header = SplitLine(line);
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = SplitLine(line);
    CGNN_CHECK(cells.size() == table.header.size(), ErrorKind::kIo,
               path.string() + ":" + std::to_string(line_no) + ": wrong number of fields");
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto& s = cells[c];
      const auto res = std::from_chars(s.data(), s.data() + s.size(), row[c]);
      CGNN_CHECK(res.ec == std::errc() && res.ptr == s.data() + s.size(), ErrorKind::kIo,
                 path.string() + ":" + std::to_string(line_no) + ": not a number: '" + s + "'");
    }
    rows.push_back(std::move(row));
  }
  table.values.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(table.header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return table;
}

void WriteCsv(const std::filesystem::path& path, const CsvTable& table) {
  CGNN_CHECK(table.values.cols() == static_cast<Eigen::Index>(table.header.size()),
             ErrorKind::kDimension, "CSV header and value widths differ");
  auto os = OpenOut(path);
  for (std::size_t c = 0; c < table.header.size(); ++c) os << (c ? "," : "") << table.header[c];
  os << '\n';
  for (Eigen::Index r = 0; r < table.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < table.values.cols(); ++c)
      os << (c ? "," : "") << FormatDouble(table.values(r, c));
    os << '\n';
  }
}

void WriteLabeledCsv(const std::filesystem::path& path, const std::vector<std::string>& header,
                     const std::vector<std::string>& row_labels, const Matrix& values) {
  CGNN_CHECK(values.rows() == static_cast<Eigen::Index>(row_labels.size()) &&
                 values.cols() + 1 == static_cast<Eigen::Index>(header.size()),
             ErrorKind::kDimension, "labeled CSV dimensions disagree");
  auto os = OpenOut(path);
  for (std::size_t c = 0; c < header.size(); ++c) os << (c ? "," : "") << header[c];
  os << '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    os << row_labels[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < values.cols(); ++c) os << ',' << FormatDouble(values(r, c));
    os << '\n';
  }
}

nlohmann::json ReadJson(const std::filesystem::path& path) {
  std::ifstream is(path);
  CGNN_CHECK(is.good(), ErrorKind::kIo, "cannot read " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, path.string() + ": " + e.what());
  }
}

void WriteJson(const std::filesystem::path& path, const nlohmann::json& json) {
  auto os = OpenOut(path);
  os << json.dump(2) << '\n';
}

void WriteText(const std::filesystem::path& path, const std::string& text) {
  auto os = OpenOut(path);
  os << text;
}

std::string ReadText(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  CGNN_CHECK(is.good(), ErrorKind::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace cgnn
