#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpgd/common.hpp"

namespace dpgd {

using json = nlohmann::json;

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

/// Reads a numeric CSV with a mandatory header row.
inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open CSV file: " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw config_error("empty CSV file: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) table.header.push_back(cell);
  }
  if (table.header.empty()) throw config_error("CSV header row is empty");
  std::size_t row_index = 1;
  while (std::getline(in, line)) {
    ++row_index;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      double v = 0;
      auto begin = cell.data();
      auto end = cell.data() + cell.size();
      while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
      auto [ptr, ec] = std::from_chars(begin, end, v);
      while (ptr != end && (*ptr == ' ' || *ptr == '\t')) ++ptr;
      if (ec != std::errc() || ptr != end)
        throw config_error("non-numeric CSV field '" + cell + "' at row " +
                           std::to_string(row_index) + " of " + path.string());
      row.push_back(v);
    }
    if (row.size() != table.header.size())
      throw config_error("CSV row " + std::to_string(row_index) +
                         " has wrong field count in " + path.string());
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline void write_csv(const std::filesystem::path& path,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot write CSV file: " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i)
    out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      out << (i ? "," : "") << format_double(row[i]);
    out << "\n";
  }
}

/// One-column eigenvalue file (header optional).
inline std::vector<double> read_eigenvalue_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open spectrum file: " + path.string());
  std::vector<double> values;
  std::string line;
  std::size_t row_index = 0;
  while (std::getline(in, line)) {
    ++row_index;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    double v = 0;
    auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
    if (ec != std::errc() || ptr != line.data() + line.size()) {
      if (row_index == 1) continue;  // header line
      throw config_error("non-numeric eigenvalue at row " +
                         std::to_string(row_index) + " of " + path.string());
    }
    values.push_back(v);
  }
  if (values.empty()) throw config_error("no eigenvalues in " + path.string());
  return values;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Stable 16-hex-digit hash of a canonically serialized config.
inline std::string config_hash(const json& config) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(config.dump())));
  return buf;
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot write JSON file: " + path.string());
  out << j.dump(2) << "\n";
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open JSON file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw config_error("invalid JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

}  // namespace dpgd
