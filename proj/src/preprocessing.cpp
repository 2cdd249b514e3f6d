#include "mfa/preprocessing.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mfa/error.hpp"
#include "mfa/random.hpp"

namespace mfa {

void GrayImage::validate() const {
  if (width <= 0 || height <= 0) {
    throw ValidationError("image must be non-empty, got " + std::to_string(width) + "x" + std::to_string(height));
  }
  if (pixels.size() != static_cast<std::size_t>(width) * height) {
    throw ValidationError("image storage does not match " + std::to_string(width) + "x" + std::to_string(height));
  }
}

void GrayImage::validate_normalized() const {
  validate();
  for (double v : pixels)
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("normalized image value " + std::to_string(v) + " outside [0,1]");
}

void WindowParams::validate() const {
  if (!(width > 0.0)) throw ValidationError("window width must be positive, got " + std::to_string(width));
  if (!std::isfinite(center)) throw ValidationError("window center must be finite");
}

GrayImage ct_window(const GrayImage& img, const WindowParams& p) {
  p.validate();
  img.validate();
  const double lo = p.center - p.width / 2.0;
  GrayImage out(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    out.pixels[i] = std::clamp((img.pixels[i] - lo) / p.width, 0.0, 1.0);
  return out;
}

void ClaheParams::validate() const {
  if (tiles_x < 1 || tiles_y < 1) throw ValidationError("clahe tiles must be >= 1");
  if (!(clip_limit > 0.0)) throw ValidationError("clahe clip_limit must be positive");
  if (bins < 2) throw ValidationError("clahe bins must be >= 2");
}

double TileMapping::operator()(double v) const {
  if (identity) return v;
  return lut[static_cast<std::size_t>(clahe_bin(v, static_cast<int>(lut.size())))];
}

int clahe_bin(double v, int bins) {
  return std::min(bins - 1, static_cast<int>(std::floor(v * bins)));
}

TileMapping make_tile_mapping(std::span<const double> pixels, const ClaheParams& p) {
  const auto bins = static_cast<std::size_t>(p.bins);
  std::vector<double> hist(bins, 0.0);
  for (double v : pixels) hist[static_cast<std::size_t>(clahe_bin(v, p.bins))] += 1.0;

  std::size_t lowest = 0;
  while (lowest < bins && hist[lowest] == 0.0) ++lowest;
  TileMapping m;
  // All pixels in one bin (including empty tiles): nothing to equalize.
  if (lowest == bins || hist[lowest] == static_cast<double>(pixels.size())) {
    m.identity = true;
    return m;
  }

  const double n = static_cast<double>(pixels.size());
  const double limit = p.clip_limit * n / static_cast<double>(bins);
  double excess = 0.0;
  for (double& h : hist) {
    if (h > limit) {
      excess += h - limit;
      h = limit;
    }
  }
  const double share = excess / static_cast<double>(bins);
  m.lut.resize(bins);
  double cdf = 0.0;
  double cdf_min = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    cdf += hist[b] + share;
    if (b == lowest) cdf_min = cdf;
    m.lut[b] = cdf;
  }
  const double denom = n - cdf_min;
  for (double& v : m.lut) v = std::clamp((v - cdf_min) / denom, 0.0, 1.0);
  return m;
}

namespace {

// Reflect-101 index into [0, n); clamps when the overhang exceeds the image.
int reflect101(int i, int n) {
  if (n == 1) return 0;
  if (i < 0) i = -i;
  if (i >= n) i = 2 * (n - 1) - i;
  return std::clamp(i, 0, n - 1);
}

}  // namespace

GrayImage clahe(const GrayImage& img, const ClaheParams& p) {
  p.validate();
  img.validate_normalized();
  const int tw = (img.width + p.tiles_x - 1) / p.tiles_x;
  const int th = (img.height + p.tiles_y - 1) / p.tiles_y;

  std::vector<TileMapping> maps;
  maps.reserve(static_cast<std::size_t>(p.tiles_x) * p.tiles_y);
  std::vector<double> tile(static_cast<std::size_t>(tw) * th);
  for (int ty = 0; ty < p.tiles_y; ++ty) {
    for (int tx = 0; tx < p.tiles_x; ++tx) {
      std::size_t k = 0;
      for (int y = ty * th; y < (ty + 1) * th; ++y)
        for (int x = tx * tw; x < (tx + 1) * tw; ++x)
          tile[k++] = img.at(reflect101(x, img.width), reflect101(y, img.height));
      maps.push_back(make_tile_mapping(tile, p));
    }
  }
  auto map_at = [&](int tx, int ty) -> const TileMapping& {
    return maps[static_cast<std::size_t>(ty) * p.tiles_x + tx];
  };

  GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    const double gy = (y + 0.5) / th - 0.5;
    const int y0 = static_cast<int>(std::floor(gy));
    const double ay = gy - y0;
    const int ty0 = std::clamp(y0, 0, p.tiles_y - 1);
    const int ty1 = std::clamp(y0 + 1, 0, p.tiles_y - 1);
    for (int x = 0; x < img.width; ++x) {
      const double gx = (x + 0.5) / tw - 0.5;
      const int x0 = static_cast<int>(std::floor(gx));
      const double ax = gx - x0;
      const int tx0 = std::clamp(x0, 0, p.tiles_x - 1);
      const int tx1 = std::clamp(x0 + 1, 0, p.tiles_x - 1);
      const double v = img.at(x, y);
      const double m00 = map_at(tx0, ty0)(v), m01 = map_at(tx1, ty0)(v);
      const double m10 = map_at(tx0, ty1)(v), m11 = map_at(tx1, ty1)(v);
      const double top = m00 + ax * (m01 - m00);
      const double bottom = m10 + ax * (m11 - m10);
      out.at(x, y) = std::clamp(top + ay * (bottom - top), 0.0, 1.0);
    }
  }
  return out;
}

void PhantomSpec::validate() const {
  if (count < 0) throw ValidationError("phantom count must be >= 0");
  if (!(organ_radius_min > 0 && organ_radius_min <= organ_radius_max)) {
    throw ValidationError("phantom organ radius range is invalid");
  }
  if (!(lesion_radius_min > 0 && lesion_radius_min <= lesion_radius_max)) {
    throw ValidationError("phantom lesion radius range is invalid");
  }
  if (lesion_radius_max + 1.0 > organ_radius_min) {
    throw ValidationError("lesion cannot fit: lesion_radius_max + 1 exceeds organ_radius_min");
  }
  if (size < 2 * organ_radius_max + 3) {
    throw ValidationError("phantom size " + std::to_string(size) + " cannot hold an organ of radius " +
                          std::to_string(organ_radius_max));
  }
  if (!(noise_sigma >= 0) || !std::isfinite(lesion_contrast)) throw ValidationError("phantom intensities are invalid");
}

Phantom generate_phantom(const PhantomSpec& spec, int index) {
  spec.validate();
  Rng rng(spec.seed + static_cast<std::uint64_t>(index));
  const int s = spec.size;
  const double r_organ = rng.uniform(spec.organ_radius_min, spec.organ_radius_max);
  const double cx = rng.uniform(r_organ + 1, s - r_organ - 2);
  const double cy = rng.uniform(r_organ + 1, s - r_organ - 2);
  const auto lesions = rng.uniform_int(1, 3);

  struct Disk {
    double x, y, r;
    bool contains(int px, int py) const { return (px - x) * (px - x) + (py - y) * (py - y) <= r * r; }
  };
  std::vector<Disk> disks;
  for (std::int64_t k = 0; k < lesions; ++k) {
    const double r = rng.uniform(spec.lesion_radius_min, spec.lesion_radius_max);
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double dist = (r_organ - r - 1.0) * std::sqrt(rng.uniform());
    disks.push_back({cx + dist * std::cos(angle), cy + dist * std::sin(angle), r});
  }
  const Disk organ{cx, cy, r_organ};

  Phantom ph{GrayImage(s, s), SegmentationMask(s, s)};
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      double hu = kBackgroundHu;
      if (organ.contains(x, y)) {
        hu = kOrganHu;
        if (std::any_of(disks.begin(), disks.end(), [&](const Disk& d) { return d.contains(x, y); })) {
          hu += spec.lesion_contrast;
          ph.mask.at(x, y) = 1;
        }
      }
      ph.image.at(x, y) = std::max(kMinHu, std::round(hu + spec.noise_sigma * rng.normal()));
    }
  }
  return ph;
}

std::vector<Phantom> generate_phantoms(const PhantomSpec& spec) {
  spec.validate();
  std::vector<Phantom> out;
  out.reserve(static_cast<std::size_t>(spec.count));
  for (int i = 0; i < spec.count; ++i) out.push_back(generate_phantom(spec, i));
  return out;
}

}  // namespace mfa
