#pragma once

// "DDMX" matrix container (magic, u64 rows, u64 cols, little-endian float32
// payload, row-major) plus a CSV fallback for interop.

#include <Eigen/Dense>
#include <string>

namespace dnadiff {

void save_matrix(const std::string& path, const Eigen::MatrixXf& m);
Eigen::MatrixXf load_matrix(const std::string& path);

void save_matrix_csv(const std::string& path, const Eigen::MatrixXf& m);
Eigen::MatrixXf load_matrix_csv(const std::string& path);

// Dispatch on extension: ".csv" -> CSV, anything else -> DDMX.
Eigen::MatrixXf load_matrix_any(const std::string& path);

}  // namespace dnadiff
