#pragma once

#include <fmt/format.h>
#include <json.hpp>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"

namespace fh {

using ojson = nlohmann::ordered_json;

// Non-finite values become null so the file stays valid JSON.
inline ojson num(double x) { return std::isfinite(x) ? ojson(x) : ojson(nullptr); }

inline ojson to_json(const cplx& z) { return ojson{{"re", num(z.real())}, {"im", num(z.imag())}}; }

inline ojson to_json(const Vec3& v) { return ojson::array({num(v(0)), num(v(1)), num(v(2))}); }

inline ojson to_json(const std::vector<double>& v) {
  ojson a = ojson::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

template <int R, int C>
ojson to_json(const Eigen::Matrix<double, R, C>& m) {
  ojson rows = ojson::array();
  for (int i = 0; i < m.rows(); ++i) {
    ojson row = ojson::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(num(m(i, j)));
    rows.push_back(row);
  }
  return rows;
}

inline std::vector<double> vec_from_json(const ojson& j) {
  std::vector<double> v;
  for (const auto& x : j) v.push_back(x.get<double>());
  return v;
}

inline Vec3 vec3_from_json(const ojson& j) { return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()); }

inline Mat3 mat3_from_json(const ojson& j) {
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) m(i, k) = j.at(i).at(k).get<double>();
  return m;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  out << text;
  if (!out) throw Error("write failed for '" + p.string() + "'");
}

inline void write_json(const std::filesystem::path& p, const ojson& j) { write_text(p, j.dump(2) + "\n"); }

inline ojson read_json(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read '" + p.string() + "'");
  try {
    return ojson::parse(in);
  } catch (const ojson::exception& e) {
    throw Error("malformed JSON in '" + p.string() + "': " + e.what());
  }
}

// Header row, comma separated, LF line ends, doubles with 17 significant digits.
class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header) {
    for (std::size_t i = 0; i < header.size(); ++i) buf_ += (i ? "," : "") + header[i];
    buf_ += '\n';
  }
  void row(std::initializer_list<double> values) {
    bool first = true;
    for (double v : values) {
      if (!first) buf_ += ',';
      first = false;
      fmt::format_to(std::back_inserter(buf_), "{:.17g}", v);
    }
    buf_ += '\n';
  }
  void save(const std::filesystem::path& p) const { write_text(p, buf_); }

 private:
  std::string buf_;
};

inline std::vector<std::vector<double>> read_csv(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read '" + p.string() + "'");
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> r;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw Error("bad CSV cell '" + cell + "' in '" + p.string() + "'");
      r.push_back(v);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace fh
