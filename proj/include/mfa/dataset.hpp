#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mfa/preprocessing.hpp"

namespace mfa {

enum class ImageKind { hu, normalized };

std::string to_string(ImageKind k);
ImageKind parse_image_kind(const std::string& s);

struct ManifestEntry {
  std::string image;  // relative to the dataset root
  std::string mask;
};

/// manifest.txt: key=value header lines, then one "images/NNNN.png masks/NNNN.png" pair per line.
struct Manifest {
  ImageKind kind = ImageKind::hu;
  std::vector<std::pair<std::string, std::string>> header;  // extra keys, in file order
  std::vector<ManifestEntry> entries;

  std::string to_text() const;
  static Manifest from_text(const std::string& text);
};

Manifest read_manifest(const std::filesystem::path& dir);

/// Writes images (16-bit HU), masks and manifest under dir.
void write_phantom_dataset(const std::filesystem::path& dir, const PhantomSpec& spec);

/// Windows then CLAHE-enhances every image into an 8-bit normalized dataset; masks are copied byte for byte.
void preprocess_dataset(const std::filesystem::path& in, const std::filesystem::path& out, const WindowParams& window,
                        const ClaheParams& clahe_params);

/// Default enhancement applied to HU input before it reaches the network.
GrayImage enhance(const GrayImage& hu, const WindowParams& window = {}, const ClaheParams& clahe_params = {});

struct Sample {
  std::string id;
  GrayImage image;  // normalized
  SegmentationMask mask;
};

/// Loads a dataset as network input: HU data is enhanced with the given settings, 8-bit data is scaled to [0,1].
std::vector<Sample> load_samples(const std::filesystem::path& dir, const WindowParams& window = {},
                                 const ClaheParams& clahe_params = {});

}  // namespace mfa
