#pragma once

// File emission: CSV with shortest round-trip decimals, JSON documents,
// and raw float64 matrices paired with a JSON header.

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace levitate::io {

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);

/// One column per header entry; all columns the same length.
void write_csv(const std::filesystem::path &path, const std::vector<std::string> &header,
               const std::vector<Eigen::VectorXd> &columns);

struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd values; // rows x header.size()

  /// Column by header name; throws if absent.
  Eigen::VectorXd column(const std::string &name) const;
  bool has(const std::string &name) const;
};

/// Numeric CSV with a single header line; blank lines and '#' comments skipped.
CsvTable read_csv(const std::filesystem::path &path);

void write_json(const std::filesystem::path &path, const nlohmann::json &doc);
nlohmann::json read_json(const std::filesystem::path &path);

/// `<base>.bin` holds the values row-major as little-endian float64;
/// `<base>.json` holds `header` plus rows, cols and layout.
void write_matrix(const std::filesystem::path &base, const Eigen::MatrixXd &values, nlohmann::json header);
Eigen::MatrixXd read_matrix(const std::filesystem::path &base);

nlohmann::json to_json(const Eigen::VectorXd &v);

} // namespace levitate::io
