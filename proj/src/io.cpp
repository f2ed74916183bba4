#include "krr/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "krr/errors.hpp"

namespace krr {

namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume little-endian");

constexpr std::uint64_t kMaxGramSide = std::uint64_t{1} << 20;

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

std::uint64_t read_header(std::ifstream& in, const char* magic, const std::filesystem::path& path) {
  std::array<char, 4> m{};
  std::uint64_t n = 0;
  in.read(m.data(), 4);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || std::memcmp(m.data(), magic, 4) != 0)
    throw DomainError(path.string() + ": bad magic, expected " + std::string(magic, 4));
  if (n == 0 || n > kMaxGramSide) throw DomainError(path.string() + ": implausible size");
  return n;
}

void read_payload(std::ifstream& in, double* data, std::uint64_t count,
                  const std::filesystem::path& path) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw DomainError(path.string() + ": truncated payload");
  if (in.peek() != std::ifstream::traits_type::eof())
    throw DomainError(path.string() + ": trailing bytes after payload");
}

void write_file(const std::filesystem::path& path, const char* magic, std::uint64_t n,
                const double* data, std::uint64_t count) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<std::vector<double>> read_csv_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    bool ok = true;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t end = line.find(',', pos);
      if (end == std::string::npos) end = line.size();
      std::size_t a = pos, b = end;
      while (a < b && line[a] == ' ') ++a;
      while (b > a && line[b - 1] == ' ') --b;
      double v = 0.0;
      const auto res = std::from_chars(line.data() + a, line.data() + b, v);
      if (res.ec != std::errc() || res.ptr != line.data() + b) {
        ok = false;
        break;
      }
      row.push_back(v);
      pos = end + 1;
    }
    if (!ok) {
      if (first) {
        first = false;
        continue;
      }
      throw DomainError(path.string() + ": unparsable line: " + line);
    }
    first = false;
    rows.push_back(std::move(row));
  }
  return rows;
}

bool is_csv(const std::filesystem::path& path) { return path.extension() == ".csv"; }

}  // namespace

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), res.ptr);
}

Eigen::MatrixXd read_gram_binary(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  const std::uint64_t n = read_header(in, "KRRG", path);
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor k(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  read_payload(in, k.data(), n * n, path);
  return k;
}

void write_gram_binary(const std::filesystem::path& path, const Eigen::MatrixXd& k) {
  if (k.rows() != k.cols()) throw DomainError("write_gram_binary: matrix must be square");
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor rm = k;
  const auto n = static_cast<std::uint64_t>(k.rows());
  write_file(path, "KRRG", n, rm.data(), n * n);
}

Eigen::VectorXd read_labels_binary(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  const std::uint64_t n = read_header(in, "KRRY", path);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  read_payload(in, y.data(), n, path);
  return y;
}

void write_labels_binary(const std::filesystem::path& path, const Eigen::VectorXd& y) {
  const auto n = static_cast<std::uint64_t>(y.size());
  write_file(path, "KRRY", n, y.data(), n);
}

Eigen::MatrixXd read_gram_csv(const std::filesystem::path& path) {
  const auto rows = read_csv_rows(path);
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (n == 0) throw DomainError(path.string() + ": empty Gram matrix");
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != n)
      throw DomainError(path.string() + ": Gram CSV must be square");
    for (Eigen::Index j = 0; j < n; ++j) k(i, j) = rows[i][j];
  }
  return k;
}

Eigen::VectorXd read_labels_csv(const std::filesystem::path& path) {
  const auto rows = read_csv_rows(path);
  std::vector<double> v;
  for (const auto& r : rows) v.insert(v.end(), r.begin(), r.end());
  if (v.empty()) throw DomainError(path.string() + ": no labels");
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd read_gram(const std::filesystem::path& path) {
  return is_csv(path) ? read_gram_csv(path) : read_gram_binary(path);
}

Eigen::VectorXd read_labels(const std::filesystem::path& path) {
  return is_csv(path) ? read_labels_csv(path) : read_labels_binary(path);
}

}  // namespace krr
