#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "vcfl/image.hpp"

namespace vcfl {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct IdxHeader {
  std::uint32_t magic = 0;
  std::uint32_t count = 0;
  std::uint32_t rows = 0;  // zero for label files
  std::uint32_t cols = 0;
};

struct LabeledImage {
  BinaryImage image;
  std::optional<std::uint8_t> label;
};

struct IdxDataset {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<LabeledImage> records;
};

/// Parses only the header. Throws BadMagic or TruncatedFile.
IdxHeader read_idx_header(std::span<const std::uint8_t> bytes);
IdxHeader read_idx_header(const std::filesystem::path& path);

/// Pixels are gray bytes; a pixel is on iff value / 255 >= 0.5.
std::vector<BinaryImage> parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);

/// Reads images and, if given, labels paired by index. CountMismatch when the
/// two headers disagree.
IdxDataset ingest_idx_images(const std::filesystem::path& images,
                             const std::optional<std::filesystem::path>& labels = std::nullopt);

/// Writers, used for fixtures and round trips. Binary pixels become 0 / 255.
std::vector<std::uint8_t> encode_idx_images(std::span<const BinaryImage> images);
std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace vcfl
