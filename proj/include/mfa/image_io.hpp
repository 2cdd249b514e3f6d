#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mfa/preprocessing.hpp"

namespace mfa {

/// Raw PNG contents; samples are 8- or 16-bit, interleaved when channels == 3 (RGB, write only).
struct PngGray {
  int width = 0;
  int height = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;
  int channels = 1;
};

std::vector<std::uint8_t> encode_png(const PngGray& img);
PngGray decode_png(const std::vector<std::uint8_t>& bytes, const std::string& what = "png");
void write_png(const std::filesystem::path& path, const PngGray& img);
PngGray read_png(const std::filesystem::path& path);

inline constexpr double kHuOffset = 1024.0;

/// Normalized [0,1] image as 8-bit, round(v * 255).
PngGray to_png8(const GrayImage& img);
/// HU image as 16-bit, v + 1024.
PngGray to_png16_hu(const GrayImage& img);
/// Mask as 8-bit 0/255.
PngGray to_png_mask(const SegmentationMask& mask);

/// Normalized image with true positives tinted green, false positives red and false negatives blue.
PngGray overlay_png(const GrayImage& img, const SegmentationMask& pred, const SegmentationMask& gt);

GrayImage normalized_from_png(const PngGray& png);
GrayImage hu_from_png(const PngGray& png);
/// Rejects samples other than 0 and 255.
SegmentationMask mask_from_png(const PngGray& png, const std::string& what = "mask");

}  // namespace mfa
