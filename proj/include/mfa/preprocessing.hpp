#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mfa/metrics.hpp"

namespace mfa {

/// Grayscale grid, row-major. Holds either HU values or normalized [0,1] intensities.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, double fill = 0.0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool empty() const { return pixels.empty(); }
  void validate() const;
  void validate_normalized() const;

  bool operator==(const GrayImage&) const = default;
};

struct WindowParams {
  double center = 40.0;  // HU, liver preset
  double width = 400.0;
  void validate() const;
};

/// clamp((v - (center - width/2)) / width, 0, 1)
GrayImage ct_window(const GrayImage& img, const WindowParams& p);

struct ClaheParams {
  int tiles_x = 4;
  int tiles_y = 4;
  double clip_limit = 2.0;  // multiple of the uniform bin height
  int bins = 256;
  void validate() const;
};

/// Intensity mapping of one tile. `lut` is indexed by bin; identity tiles map v to v.
struct TileMapping {
  bool identity = false;
  std::vector<double> lut;

  double operator()(double v) const;
};

int clahe_bin(double v, int bins);

/// Clipped-histogram equalization of one tile's pixels.
TileMapping make_tile_mapping(std::span<const double> pixels, const ClaheParams& p);

/// Tile-wise equalization blended bilinearly between tile centers. Input must be normalized.
GrayImage clahe(const GrayImage& img, const ClaheParams& p);

struct PhantomSpec {
  int count = 8;
  int size = 64;
  double organ_radius_min = 18.0, organ_radius_max = 26.0;
  double lesion_radius_min = 3.0, lesion_radius_max = 7.0;
  double lesion_contrast = -60.0;  // HU relative to the organ
  double noise_sigma = 12.0;       // HU
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr double kBackgroundHu = -1000.0;
inline constexpr double kOrganHu = 60.0;
/// Scanner floor; phantom values are clamped here so they fit the 16-bit +1024 encoding.
inline constexpr double kMinHu = -1024.0;

struct Phantom {
  GrayImage image;  // HU, integer-valued
  SegmentationMask mask;
};

/// Sample `index` draws from its own stream seeded with spec.seed + index.
Phantom generate_phantom(const PhantomSpec& spec, int index);
std::vector<Phantom> generate_phantoms(const PhantomSpec& spec);

}  // namespace mfa
