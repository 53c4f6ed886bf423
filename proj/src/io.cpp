#include "levitate/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "levitate/error.hpp"

namespace levitate::io {

namespace fs = std::filesystem;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

namespace {

void ensure_parent(const fs::path &path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

std::ofstream open_out(const fs::path &path, std::ios::openmode mode = std::ios::out) {
  ensure_parent(path);
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

} // namespace

void write_csv(const fs::path &path, const std::vector<std::string> &header,
               const std::vector<Eigen::VectorXd> &columns) {
  if (header.size() != columns.size()) throw std::invalid_argument("write_csv: header and column counts differ");
  const Eigen::Index rows = columns.empty() ? 0 : columns.front().size();
  for (const auto &c : columns)
    if (c.size() != rows) throw std::invalid_argument("write_csv: columns differ in length");
  auto out = open_out(path);
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  std::string line;
  for (Eigen::Index i = 0; i < rows; ++i) {
    line.clear();
    for (std::size_t j = 0; j < columns.size(); ++j) {
      if (j) line += ',';
      line += format_double(columns[j](i));
    }
    line += '\n';
    out << line;
  }
}

bool CsvTable::has(const std::string &name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

Eigen::VectorXd CsvTable::column(const std::string &name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ConfigError("CSV has no column '" + name + "'", "column");
  return values.col(it - header.begin());
}

CsvTable read_csv(const fs::path &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open input '" + path.string() + "'", "input");
  CsvTable t;
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (t.header.empty()) {
      t.header = cells;
      continue;
    }
    if (cells.size() != t.header.size())
      throw NumericalError("read_csv", path.string() + " line " + std::to_string(line_no) + ": expected " +
                                           std::to_string(t.header.size()) + " fields");
    std::vector<double> row;
    for (const auto &c : cells) {
      try {
        row.push_back(std::stod(c));
      } catch (const std::exception &) {
        throw NumericalError("read_csv", path.string() + " line " + std::to_string(line_no) + ": '" + c +
                                             "' is not a number");
      }
    }
    rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw NumericalError("read_csv", path.string() + " has no header");
  t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return t;
}

void write_json(const fs::path &path, const nlohmann::json &doc) {
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  return nlohmann::json::parse(in);
}

void write_matrix(const fs::path &base, const Eigen::MatrixXd &values, nlohmann::json header) {
  static_assert(std::endian::native == std::endian::little, "float64 payload is written little-endian");
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = values;
  fs::path bin = base;
  bin += ".bin";
  fs::path meta = base;
  meta += ".json";
  {
    auto out = open_out(bin, std::ios::out | std::ios::binary);
    out.write(reinterpret_cast<const char *>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
  }
  header["rows"] = values.rows();
  header["cols"] = values.cols();
  header["dtype"] = "float64";
  header["layout"] = "row-major, little-endian";
  header["payload"] = bin.filename().string();
  write_json(meta, header);
}

Eigen::MatrixXd read_matrix(const fs::path &base) {
  fs::path meta = base;
  meta += ".json";
  fs::path bin = base;
  bin += ".bin";
  const auto header = read_json(meta);
  const auto rows = header.at("rows").get<Eigen::Index>();
  const auto cols = header.at("cols").get<Eigen::Index>();
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  std::ifstream in(bin, std::ios::binary);
  in.read(reinterpret_cast<char *>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated matrix payload '" + bin.string() + "'");
  return rm;
}

nlohmann::json to_json(const Eigen::VectorXd &v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

} // namespace levitate::io
