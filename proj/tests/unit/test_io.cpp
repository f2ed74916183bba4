#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "krr/errors.hpp"
#include "krr/io.hpp"

using namespace krr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "krr_io_test";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST_CASE("format_double round trips") {
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(1e-300) == "1e-300");
  CHECK(format_double(std::nan("")) == "nan");
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
  for (double x : {0.1, 1.0 / 3.0, -2.5e17, 6.02214076e23, 2.2250738585072014e-308})
    CHECK(std::stod(format_double(x)) == x);
}

TEST_CASE("binary gram and labels round trip") {
  Eigen::MatrixXd k(3, 3);
  k << 1, 0.5, 0.25, 0.5, 2, -1e-17, 0.25, -1e-17, 3;
  const fs::path gp = scratch("k.bin"), yp = scratch("y.bin");
  write_gram_binary(gp, k);
  CHECK(read_gram_binary(gp) == k);
  CHECK(read_gram(gp) == k);
  CHECK(fs::file_size(gp) == 4 + 8 + 9 * 8);
  const Eigen::Vector3d y(1.0 / 3.0, -2, 1e300);
  write_labels_binary(yp, y);
  CHECK(read_labels(yp) == y);
  CHECK_THROWS_AS(read_gram_binary(yp), DomainError);
  CHECK_THROWS_AS(read_labels_binary(gp), DomainError);
  CHECK_THROWS_AS(write_gram_binary(gp, Eigen::MatrixXd::Zero(2, 3)), DomainError);
}

TEST_CASE("binary corruption") {
  const fs::path p = scratch("bad.bin");
  write_labels_binary(p, Eigen::Vector3d(1, 2, 3));
  fs::resize_file(p, fs::file_size(p) - 1);
  CHECK_THROWS_AS(read_labels_binary(p), DomainError);
  write_labels_binary(p, Eigen::Vector3d(1, 2, 3));
  std::ofstream(p, std::ios::app | std::ios::binary) << 'x';
  CHECK_THROWS_AS(read_labels_binary(p), DomainError);
  CHECK_THROWS_AS(read_labels_binary(scratch("does_not_exist.bin")), std::exception);
}

TEST_CASE("csv readers") {
  const fs::path g = scratch("k.csv"), y = scratch("y.csv");
  write_text(g, "a,b\n1,0.5\n0.5,2\n");
  const Eigen::MatrixXd k = read_gram(g);
  REQUIRE(k.rows() == 2);
  CHECK(k(0, 1) == 0.5);
  CHECK(k(1, 1) == 2.0);
  write_text(g, "1,2\n3\n");
  CHECK_THROWS_AS(read_gram_csv(g), DomainError);
  write_text(g, "1,2\n3,4\n5,6\n");
  CHECK_THROWS_AS(read_gram_csv(g), DomainError);
  write_text(y, "y\n1\n-2.5\n3e-3\n");
  const Eigen::VectorXd v = read_labels(y);
  REQUIRE(v.size() == 3);
  CHECK(v[2] == 3e-3);
  write_text(y, "1\nfoo\n");
  CHECK_THROWS_AS(read_labels_csv(y), DomainError);
}
