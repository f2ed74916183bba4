#pragma once

// Gram-matrix and label files, and the shortest round-trip text form of a
// double used by every emitter.
//
// Binary layout, little-endian:
//   Gram:   "KRRG" u64 n, then n*n f64 row-major
//   labels: "KRRY" u64 n, then n f64
// CSV: one row per line, comma separated; a first line that does not parse
// as numbers is skipped as a header.

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace krr {

/// Shortest representation that round-trips ("nan", "inf", "-inf" for non-finite).
std::string format_double(double x);

Eigen::MatrixXd read_gram_binary(const std::filesystem::path& path);
void write_gram_binary(const std::filesystem::path& path, const Eigen::MatrixXd& k);
Eigen::VectorXd read_labels_binary(const std::filesystem::path& path);
void write_labels_binary(const std::filesystem::path& path, const Eigen::VectorXd& y);

Eigen::MatrixXd read_gram_csv(const std::filesystem::path& path);
Eigen::VectorXd read_labels_csv(const std::filesystem::path& path);

/// Dispatch on extension: ".csv" reads text, anything else the binary form.
Eigen::MatrixXd read_gram(const std::filesystem::path& path);
Eigen::VectorXd read_labels(const std::filesystem::path& path);

}  // namespace krr
