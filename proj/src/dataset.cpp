#include "iwiv/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace iwiv {

Eigen::VectorXd Dataset::w_row(Eigen::Index i) const {
  Eigen::VectorXd w(1 + x.cols());
  w(0) = y(i);
  w.tail(x.cols()) = x.row(i);
  return w;
}

Eigen::MatrixXd Dataset::w_matrix() const {
  Eigen::MatrixXd w(n(), 1 + x.cols());
  w.col(0) = y;
  w.rightCols(x.cols()) = x;
  return w;
}

Dataset Dataset::select(const std::vector<int>& rows) const {
  Dataset out;
  const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
  out.y.resize(m);
  out.x.resize(m, x.cols());
  out.z.resize(m, z.cols());
  if (f_true) out.f_true = Eigen::VectorXd(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const int i = rows[static_cast<std::size_t>(k)];
    out.y(k) = y(i);
    out.x.row(k) = x.row(i);
    out.z.row(k) = z.row(i);
    if (f_true) (*out.f_true)(k) = (*f_true)(i);
  }
  out.seed = seed;
  return out;
}

void Dataset::validate() const {
  const Eigen::Index rows = n();
  if (rows < 2) throw std::invalid_argument("Dataset: n must be >= 2");
  if (x.rows() != rows || z.rows() != rows)
    throw std::invalid_argument("Dataset: y, x, z row counts differ");
  if (f_true && f_true->size() != rows)
    throw std::invalid_argument("Dataset: f_true row count differs");
  if (!y.allFinite() || !x.allFinite() || !z.allFinite() ||
      (f_true && !f_true->allFinite()))
    throw std::invalid_argument("Dataset: non-finite entries");
}

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{})
    throw std::runtime_error("CSV: bad numeric field '" + std::string(s) + "'");
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

}  // namespace

void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  std::string line = "y";
  for (int d = 0; d < data.dx(); ++d) line += ",x" + std::to_string(d + 1);
  for (int d = 0; d < data.dz(); ++d) line += ",z" + std::to_string(d + 1);
  if (data.f_true) line += ",f_true";
  out << line << '\n';
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    line.clear();
    append_double(line, data.y(i));
    for (int d = 0; d < data.dx(); ++d) {
      line += ',';
      append_double(line, data.x(i, d));
    }
    for (int d = 0; d < data.dz(); ++d) {
      line += ',';
      append_double(line, data.z(i, d));
    }
    if (data.f_true) {
      line += ',';
      append_double(line, (*data.f_true)(i));
    }
    out << line << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Dataset read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty CSV: " + path);
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "y")
    throw std::runtime_error("CSV header must start with 'y': " + path);
  int dx = 0, dz = 0;
  bool has_f = false;
  for (std::size_t k = 1; k < header.size(); ++k) {
    const std::string& h = header[k];
    if (h.rfind("x", 0) == 0 && h != "f_true" && dz == 0 && !has_f)
      ++dx;
    else if (h.rfind("z", 0) == 0 && !has_f)
      ++dz;
    else if (h == "f_true")
      has_f = true;
    else
      throw std::runtime_error("CSV: unexpected column '" + h + "'");
  }
  std::vector<double> ys, fs;
  std::vector<double> xs, zs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != 1 + dx + dz + (has_f ? 1 : 0))
      throw std::runtime_error("CSV: ragged row in " + path);
    std::size_t k = 0;
    ys.push_back(parse_double(fields[k++]));
    for (int d = 0; d < dx; ++d) xs.push_back(parse_double(fields[k++]));
    for (int d = 0; d < dz; ++d) zs.push_back(parse_double(fields[k++]));
    if (has_f) fs.push_back(parse_double(fields[k++]));
  }
  const Eigen::Index n = static_cast<Eigen::Index>(ys.size());
  Dataset data;
  data.y = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
  data.x.resize(n, dx);
  data.z.resize(n, dz);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int d = 0; d < dx; ++d) data.x(i, d) = xs[static_cast<std::size_t>(i) * dx + d];
    for (int d = 0; d < dz; ++d) data.z(i, d) = zs[static_cast<std::size_t>(i) * dz + d];
  }
  if (has_f) data.f_true = Eigen::Map<Eigen::VectorXd>(fs.data(), n);
  data.validate();
  return data;
}

}  // namespace iwiv
