#include "vcfl/image.hpp"

#include <array>
#include <cmath>
#include <sstream>

#include "vcfl/error.hpp"

namespace vcfl {

std::size_t BinaryImage::side() const {
  if (rows_ != cols_) throw Error(ErrorCode::DimensionMismatch, "image is not square");
  return rows_;
}

std::size_t BinaryImage::count_on() const {
  std::size_t n = 0;
  for (auto p : pixels_) n += p;
  return n;
}

std::vector<double> BinaryImage::to_real() const {
  return std::vector<double>(pixels_.begin(), pixels_.end());
}

BinaryImage BinaryImage::from_real(std::span<const double> values, std::size_t rows, std::size_t cols) {
  if (values.size() != rows * cols)
    throw Error(ErrorCode::DimensionMismatch, "relaxed image has the wrong number of pixels");
  BinaryImage img(rows, cols);
  for (std::size_t k = 0; k < values.size(); ++k) img.pixels_[k] = values[k] >= 0.5 ? 1 : 0;
  return img;
}

std::vector<std::uint8_t> BinaryImage::pack() const {
  std::vector<std::uint8_t> bytes((pixels_.size() + 7) / 8, 0);
  for (std::size_t k = 0; k < pixels_.size(); ++k)
    if (pixels_[k]) bytes[k / 8] |= static_cast<std::uint8_t>(0x80u >> (k % 8));
  return bytes;
}

BinaryImage BinaryImage::unpack(std::span<const std::uint8_t> bytes, std::size_t rows, std::size_t cols) {
  BinaryImage img(rows, cols);
  if (bytes.size() != (img.size() + 7) / 8)
    throw Error(ErrorCode::DimensionMismatch, "packed image has " + std::to_string(bytes.size()) +
                                                  " bytes, expected " +
                                                  std::to_string((img.size() + 7) / 8));
  for (std::size_t k = 0; k < img.size(); ++k)
    img.pixels_[k] = (bytes[k / 8] >> (7 - k % 8)) & 1u;
  return img;
}

std::string BinaryImage::to_base64() const { return base64_encode(pack()); }

BinaryImage BinaryImage::from_base64(std::string_view text, std::size_t rows, std::size_t cols) {
  return unpack(base64_decode(text), rows, cols);
}

namespace {
constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t k = 0;
  for (; k + 2 < bytes.size(); k += 3) {
    const std::uint32_t v = (bytes[k] << 16) | (bytes[k + 1] << 8) | bytes[k + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (k < bytes.size()) {
    std::uint32_t v = bytes[k] << 16;
    if (k + 1 < bytes.size()) v |= bytes[k + 1] << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += k + 1 < bytes.size() ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  std::array<int, 256> lookup;
  lookup.fill(-1);
  for (int c = 0; c < 64; ++c) lookup[static_cast<unsigned char>(kAlphabet[c])] = c;

  std::vector<std::uint8_t> out;
  std::uint32_t buffer = 0;
  int bits = 0;
  std::size_t pad = 0;
  for (char ch : text) {
    if (ch == '=') {
      ++pad;
      continue;
    }
    const int v = lookup[static_cast<unsigned char>(ch)];
    if (v < 0 || pad > 0) throw Error(ErrorCode::Parse, "invalid base64 input");
    buffer = (buffer << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((buffer >> bits) & 0xFFu));
    }
  }
  if ((text.size() % 4) != 0 || pad > 2) throw Error(ErrorCode::Parse, "invalid base64 length");
  return out;
}

double l2_distance(const BinaryImage& a, const BinaryImage& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorCode::DimensionMismatch, "images differ in shape");
  std::size_t differing = 0;
  for (std::size_t k = 0; k < a.size(); ++k) differing += a[k] != b[k];
  return std::sqrt(static_cast<double>(differing));
}

std::size_t count_full_rows(const BinaryImage& image) {
  std::size_t n = 0;
  for (std::size_t r = 0; r < image.rows(); ++r) {
    bool full = image.cols() > 0;
    for (std::size_t c = 0; c < image.cols() && full; ++c) full = image.at(r, c) != 0;
    n += full;
  }
  return n;
}

std::size_t count_full_cols(const BinaryImage& image) {
  std::size_t n = 0;
  for (std::size_t c = 0; c < image.cols(); ++c) {
    bool full = image.rows() > 0;
    for (std::size_t r = 0; r < image.rows() && full; ++r) full = image.at(r, c) != 0;
    n += full;
  }
  return n;
}

bool detect_hbar(const BinaryImage& image) { return count_full_rows(image) > 0; }
bool detect_vbar(const BinaryImage& image) { return count_full_cols(image) > 0; }

std::string to_pbm(const BinaryImage& image) {
  std::ostringstream out;
  out << "P1\n" << image.cols() << ' ' << image.rows() << '\n';
  for (std::size_t r = 0; r < image.rows(); ++r) {
    for (std::size_t c = 0; c < image.cols(); ++c) out << (c ? " " : "") << int(image.at(r, c));
    out << '\n';
  }
  return out.str();
}

}  // namespace vcfl
