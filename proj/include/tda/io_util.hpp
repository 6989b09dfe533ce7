#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tda::io {

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

// Shortest round-trip decimal representation (std::to_chars), so text output
// is deterministic and re-parses to the same double.
std::string format_double(double v);

// Row-major little-endian float64 matrix with no framing; shape lives in a
// JSON sidecar. All supported platforms here are little-endian; big-endian
// hosts are rejected at startup by a static check in io_util.cpp.
void write_matrix_f64(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_f64(const std::filesystem::path& path, Eigen::Index rows,
                                Eigen::Index cols);

void write_matrix_f32(const std::filesystem::path& path, const Eigen::MatrixXf& m);
Eigen::MatrixXf read_matrix_f32(const std::filesystem::path& path, Eigen::Index rows,
                                Eigen::Index cols);

// SHA-256 hex digest; used for content-addressing run inputs.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace tda::io
