#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vcfl {

/// Row-major grid of 0/1 pixels.
class BinaryImage {
public:
  BinaryImage() = default;
  BinaryImage(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), pixels_(rows * cols, 0) {}
  explicit BinaryImage(std::size_t side) : BinaryImage(side, side) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  /// Side length of a square image; throws for rectangular grids.
  std::size_t side() const;
  std::size_t size() const { return pixels_.size(); }

  std::uint8_t at(std::size_t r, std::size_t c) const { return pixels_[r * cols_ + c]; }
  void set(std::size_t r, std::size_t c, bool on) { pixels_[r * cols_ + c] = on ? 1 : 0; }
  std::uint8_t operator[](std::size_t k) const { return pixels_[k]; }
  void set(std::size_t k, bool on) { pixels_[k] = on ? 1 : 0; }

  std::span<const std::uint8_t> pixels() const { return pixels_; }
  std::size_t count_on() const;

  /// 0/1 as doubles, the learner's input layout.
  std::vector<double> to_real() const;
  /// Thresholds a relaxed image: pixel is on iff value >= 0.5.
  static BinaryImage from_real(std::span<const double> values, std::size_t rows, std::size_t cols);

  /// Row-major, most significant bit first, last byte zero-padded.
  std::vector<std::uint8_t> pack() const;
  static BinaryImage unpack(std::span<const std::uint8_t> bytes, std::size_t rows, std::size_t cols);

  std::string to_base64() const;
  static BinaryImage from_base64(std::string_view text, std::size_t rows, std::size_t cols);

  bool operator==(const BinaryImage&) const = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> pixels_;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Plain L2 distance between two images of the same shape.
double l2_distance(const BinaryImage& a, const BinaryImage& b);

/// True iff some row is entirely on (horizontal bar).
bool detect_hbar(const BinaryImage& image);
/// True iff some column is entirely on (vertical bar).
bool detect_vbar(const BinaryImage& image);
std::size_t count_full_rows(const BinaryImage& image);
std::size_t count_full_cols(const BinaryImage& image);

/// ASCII PBM (P1) rendering.
std::string to_pbm(const BinaryImage& image);

}  // namespace vcfl
