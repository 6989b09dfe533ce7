#include "tda/io_util.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>

#include "tda/types.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary artifact formats are little-endian");

namespace tda::io {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open file: " + path.string());
  std::string out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write file: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw UsageError("short write: " + path.string());
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw NumericError("format_double failed");
  return std::string(buf.data(), ptr);
}

namespace {

template <typename Scalar>
void write_matrix(const std::filesystem::path& path,
                  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& m) {
  using RowMajor =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor rm = m;
  std::string bytes(reinterpret_cast<const char*>(rm.data()),
                    sizeof(Scalar) * static_cast<std::size_t>(rm.size()));
  write_file(path, bytes);
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> read_matrix(
    const std::filesystem::path& path, Eigen::Index rows, Eigen::Index cols) {
  const std::string bytes = read_file(path);
  const std::size_t expect = sizeof(Scalar) * static_cast<std::size_t>(rows * cols);
  if (bytes.size() != expect) {
    throw UsageError("matrix file " + path.string() + " has " + std::to_string(bytes.size()) +
                     " bytes, expected " + std::to_string(expect));
  }
  using RowMajor =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor rm(rows, cols);
  std::memcpy(rm.data(), bytes.data(), bytes.size());
  return rm;
}

}  // namespace

void write_matrix_f64(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  write_matrix<double>(path, m);
}

Eigen::MatrixXd read_matrix_f64(const std::filesystem::path& path, Eigen::Index rows,
                                Eigen::Index cols) {
  return read_matrix<double>(path, rows, cols);
}

void write_matrix_f32(const std::filesystem::path& path, const Eigen::MatrixXf& m) {
  write_matrix<float>(path, m);
}

Eigen::MatrixXf read_matrix_f32(const std::filesystem::path& path, Eigen::Index rows,
                                Eigen::Index cols) {
  return read_matrix<float>(path, rows, cols);
}

// ---------------------------------------------------------------------------
// SHA-256 (FIPS 180-4), self-contained to keep artifact hashing dependency-free.

namespace {

constexpr std::array<std::uint32_t, 64> kK = {
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4,
    0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe,
    0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f,
    0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7,
    0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
    0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
    0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116,
    0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
    0xc67178f2};

inline std::uint32_t rotr(std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

void sha256_block(std::array<std::uint32_t, 8>& h, const unsigned char* p) {
  std::array<std::uint32_t, 64> w{};
  for (int i = 0; i < 16; ++i) {
    w[i] = (std::uint32_t(p[4 * i]) << 24) | (std::uint32_t(p[4 * i + 1]) << 16) |
           (std::uint32_t(p[4 * i + 2]) << 8) | std::uint32_t(p[4 * i + 3]);
  }
  for (int i = 16; i < 64; ++i) {
    const std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
    const std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
    w[i] = w[i - 16] + s0 + w[i - 7] + s1;
  }
  auto [a, b, c, d, e, f, g, hh] = h;
  for (int i = 0; i < 64; ++i) {
    const std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
    const std::uint32_t ch = (e & f) ^ (~e & g);
    const std::uint32_t t1 = hh + s1 + ch + kK[i] + w[i];
    const std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
    const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
    const std::uint32_t t2 = s0 + maj;
    hh = g; g = f; f = e; e = d + t1;
    d = c; c = b; b = a; a = t1 + t2;
  }
  h[0] += a; h[1] += b; h[2] += c; h[3] += d;
  h[4] += e; h[5] += f; h[6] += g; h[7] += hh;
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  std::array<std::uint32_t, 8> h = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
                                    0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t n = bytes.size();
  std::uint64_t i = 0;
  for (; i + 64 <= n; i += 64) sha256_block(h, data + i);

  std::array<unsigned char, 128> tail{};
  const std::size_t rem = static_cast<std::size_t>(n - i);
  std::memcpy(tail.data(), data + i, rem);
  tail[rem] = 0x80;
  const std::size_t total = rem + 1 + 8 <= 64 ? 64 : 128;
  const std::uint64_t bits = n * 8;
  for (int b = 0; b < 8; ++b) tail[total - 1 - b] = static_cast<unsigned char>(bits >> (8 * b));
  sha256_block(h, tail.data());
  if (total == 128) sha256_block(h, tail.data() + 64);

  static const char* hexd = "0123456789abcdef";
  std::string out(64, '0');
  for (int k = 0; k < 8; ++k) {
    for (int b = 0; b < 4; ++b) {
      const unsigned byte = (h[k] >> (24 - 8 * b)) & 0xff;
      out[8 * k + 2 * b] = hexd[byte >> 4];
      out[8 * k + 2 * b + 1] = hexd[byte & 0xf];
    }
  }
  return out;
}

std::string sha256_file_hex(const std::filesystem::path& path) {
  return sha256_hex(read_file(path));
}

}  // namespace tda::io
