#include "vcfl/idx.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>

#include "vcfl/error.hpp"

namespace vcfl {

namespace {

std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

IdxHeader read_idx_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw Error(ErrorCode::TruncatedFile, "IDX header shorter than 8 bytes");
  IdxHeader h;
  h.magic = be32(bytes, 0);
  h.count = be32(bytes, 4);
  if (h.magic == kIdxImageMagic) {
    if (bytes.size() < 16) throw Error(ErrorCode::TruncatedFile, "IDX image header shorter than 16 bytes");
    h.rows = be32(bytes, 8);
    h.cols = be32(bytes, 12);
  } else if (h.magic != kIdxLabelMagic) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08x", h.magic);
    throw Error(ErrorCode::BadMagic, std::string("unexpected IDX magic ") + buf);
  }
  return h;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

IdxHeader read_idx_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> head(16);
  in.read(reinterpret_cast<char*>(head.data()), 16);
  head.resize(static_cast<std::size_t>(in.gcount()));
  return read_idx_header(head);
}

std::vector<BinaryImage> parse_idx_images(std::span<const std::uint8_t> bytes) {
  const auto h = read_idx_header(bytes);
  if (h.magic != kIdxImageMagic) throw Error(ErrorCode::BadMagic, "not an IDX image file");
  if (h.rows == 0 || h.cols == 0) throw Error(ErrorCode::InvalidArgument, "IDX images with a zero dimension");
  const std::size_t per = std::size_t{h.rows} * h.cols;
  const std::size_t need = 16 + per * h.count;
  if (bytes.size() < need) {
    throw Error(ErrorCode::TruncatedFile, "IDX image file holds " + std::to_string(bytes.size()) +
                                              " bytes, header needs " + std::to_string(need));
  }
  std::vector<BinaryImage> out;
  out.reserve(h.count);
  for (std::size_t k = 0; k < h.count; ++k) {
    BinaryImage img(h.rows, h.cols);
    const std::size_t base = 16 + k * per;
    for (std::size_t p = 0; p < per; ++p) img.set(p, bytes[base + p] / 255.0 >= 0.5);
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  const auto h = read_idx_header(bytes);
  if (h.magic != kIdxLabelMagic) throw Error(ErrorCode::BadMagic, "not an IDX label file");
  if (bytes.size() < 8 + std::size_t{h.count})
    throw Error(ErrorCode::TruncatedFile, "IDX label file shorter than its header count");
  return {bytes.begin() + 8, bytes.begin() + 8 + h.count};
}

IdxDataset ingest_idx_images(const std::filesystem::path& images,
                             const std::optional<std::filesystem::path>& labels) {
  const auto image_bytes = read_file_bytes(images);
  auto imgs = parse_idx_images(image_bytes);
  const auto h = read_idx_header(image_bytes);
  std::vector<std::uint8_t> labs;
  if (labels) {
    labs = parse_idx_labels(read_file_bytes(*labels));
    if (labs.size() != imgs.size()) {
      throw Error(ErrorCode::CountMismatch, std::to_string(imgs.size()) + " images but " +
                                                std::to_string(labs.size()) + " labels");
    }
  }
  IdxDataset out;
  out.rows = h.rows;
  out.cols = h.cols;
  out.records.reserve(imgs.size());
  for (std::size_t k = 0; k < imgs.size(); ++k) {
    LabeledImage rec{std::move(imgs[k]), std::nullopt};
    if (labels) rec.label = labs[k];
    out.records.push_back(std::move(rec));
  }
  return out;
}

std::vector<std::uint8_t> encode_idx_images(std::span<const BinaryImage> images) {
  std::vector<std::uint8_t> out;
  const std::size_t rows = images.empty() ? 0 : images[0].rows();
  const std::size_t cols = images.empty() ? 0 : images[0].cols();
  put_be32(out, kIdxImageMagic);
  put_be32(out, static_cast<std::uint32_t>(images.size()));
  put_be32(out, static_cast<std::uint32_t>(rows));
  put_be32(out, static_cast<std::uint32_t>(cols));
  for (const auto& img : images) {
    if (img.rows() != rows || img.cols() != cols)
      throw Error(ErrorCode::DimensionMismatch, "IDX images must share one shape");
    for (auto p : img.pixels()) out.push_back(p ? 255 : 0);
  }
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

}  // namespace vcfl
