#pragma once

#include "mrrce/numerics.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace mrrce {

/// Configuration or input-format violation; maps to CLI exit code 2.
class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

using Json = nlohmann::json;

namespace io {

/// Full-precision scientific format: 17 significant digits round-trips
/// doubles exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.16e", v);
  return buf;
}

inline void write_csv(const std::filesystem::path& path, const Matrix& m,
                      const std::vector<std::string>& header = {}) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path.string());
  if (!header.empty()) {
    if (static_cast<Index>(header.size()) != m.cols())
      throw std::invalid_argument("write_csv: header width mismatch");
    for (std::size_t j = 0; j < header.size(); ++j)
      out << (j ? "," : "") << header[j];
    out << "\n";
  } else {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << "c" << j;
    out << "\n";
  }
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << "\n";
  }
}

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;

  Index column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return static_cast<Index>(j);
    throw SchemaError("csv: column '" + name + "' not found");
  }
};

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("read_csv: cannot open " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("read_csv: empty file " + path.string());
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) table.header.push_back(cell);
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw SchemaError("read_csv: non-numeric cell '" + cell + "' in " + path.string());
      }
    }
    if (row.size() != table.header.size())
      throw SchemaError("read_csv: ragged row in " + path.string());
    rows.push_back(std::move(row));
  }
  table.values = Matrix(static_cast<Index>(rows.size()), static_cast<Index>(table.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      table.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return table;
}

inline Matrix read_csv_matrix(const std::filesystem::path& path) { return read_csv(path).values; }

/// CSV with arbitrary cell contents (report files mix text and numbers).
struct CsvTextTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return j;
    throw SchemaError("csv: column '" + name + "' not found");
  }
};

inline CsvTextTable read_csv_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("read_csv_text: cannot open " + path.string());
  CsvTextTable table;
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("read_csv_text: empty file " + path.string());
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) table.header.push_back(cell);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    table.rows.push_back(std::move(row));
  }
  return table;
}

// --- strict JSON schema helpers ---

inline Json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open config file " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw SchemaError("config parse error in " + path.string() + ": " + e.what());
  }
}

/// Reject unknown keys so typos fail loudly.
inline void check_keys(const Json& j, std::initializer_list<const char*> allowed,
                       const std::string& context) {
  if (!j.is_object()) throw SchemaError(context + ": expected an object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* key : allowed)
      if (item.key() == key) {
        ok = true;
        break;
      }
    if (!ok) throw SchemaError(context + ": unknown field '" + item.key() + "'");
  }
}

template <typename T>
T get_required(const Json& j, const std::string& key, const std::string& context) {
  if (!j.contains(key)) throw SchemaError(context + ": missing required field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw SchemaError(context + ": field '" + key + "' has the wrong type");
  }
}

template <typename T>
T get_or(const Json& j, const std::string& key, T fallback, const std::string& context) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw SchemaError(context + ": field '" + key + "' has the wrong type");
  }
}

inline void check_range(double value, double lo, double hi, const std::string& field,
                        const std::string& context) {
  if (!(value >= lo && value <= hi))
    throw SchemaError(context + ": field '" + field + "' = " + std::to_string(value) +
                      " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

/// FNV-1a hash of the canonical config dump; stamped into every report row.
inline std::string config_hash(const Json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const Json& j, const std::string& context) {
  if (!j.is_array() || j.empty()) throw SchemaError(context + ": expected a matrix");
  const Index rows = static_cast<Index>(j.size());
  const Index cols = static_cast<Index>(j.at(0).size());
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    if (static_cast<Index>(j.at(i).size()) != cols)
      throw SchemaError(context + ": ragged matrix");
    for (Index jj = 0; jj < cols; ++jj) m(i, jj) = j.at(i).at(jj).get<double>();
  }
  return m;
}

}  // namespace io
}  // namespace mrrce
