#include "mfa/dataset.hpp"

#include <cstdio>
#include <set>
#include <sstream>

#include "mfa/error.hpp"
#include "mfa/image_io.hpp"
#include "mfa/tensor_io.hpp"

namespace mfa {

namespace fs = std::filesystem;

std::string to_string(ImageKind k) { return k == ImageKind::hu ? "hu" : "normalized"; }

ImageKind parse_image_kind(const std::string& s) {
  if (s == "hu") return ImageKind::hu;
  if (s == "normalized") return ImageKind::normalized;
  throw ValidationError("unknown image kind '" + s + "' (expected hu or normalized)");
}

std::string Manifest::to_text() const {
  std::ostringstream os;
  os << "format=mfa-dataset\nversion=1\nkind=" << to_string(kind) << "\ncount=" << entries.size() << "\n";
  for (const auto& [k, v] : header) os << k << "=" << v << "\n";
  for (const auto& e : entries) os << e.image << " " << e.mask << "\n";
  return os.str();
}

Manifest Manifest::from_text(const std::string& text) {
  Manifest m;
  std::istringstream is(text);
  std::string line;
  std::set<std::string> seen;
  long long count = -1;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    const auto sp = line.find(' ');
    if (eq != std::string::npos && sp == std::string::npos) {
      if (!m.entries.empty()) throw ValidationError("manifest line " + std::to_string(lineno) + ": header after entries");
      const std::string key = line.substr(0, eq);
      const std::string value = line.substr(eq + 1);
      if (!seen.insert(key).second) throw ValidationError("manifest: duplicate key '" + key + "'");
      if (key == "format") {
        if (value != "mfa-dataset") throw ValidationError("manifest: unknown format '" + value + "'");
      } else if (key == "version") {
        if (value != "1") throw ValidationError("manifest: unsupported version " + value);
      } else if (key == "kind") {
        m.kind = parse_image_kind(value);
      } else if (key == "count") {
        try {
          count = std::stoll(value);
        } catch (const std::exception&) {
          throw ValidationError("manifest: count '" + value + "' is not an integer");
        }
      } else {
        m.header.emplace_back(key, value);
      }
      continue;
    }
    if (sp == std::string::npos || line.find(' ', sp + 1) != std::string::npos) {
      throw ValidationError("manifest line " + std::to_string(lineno) + ": expected '<image> <mask>'");
    }
    m.entries.push_back({line.substr(0, sp), line.substr(sp + 1)});
  }
  if (!seen.count("kind")) throw ValidationError("manifest: missing 'kind'");
  if (count >= 0 && static_cast<std::size_t>(count) != m.entries.size()) {
    throw ValidationError("manifest: count " + std::to_string(count) + " but " + std::to_string(m.entries.size()) +
                          " entries");
  }
  return m;
}

Manifest read_manifest(const fs::path& dir) {
  const auto path = dir / "manifest.txt";
  if (!fs::exists(path)) throw ValidationError("no manifest.txt in " + dir.string());
  const auto bytes = read_file(path);
  return Manifest::from_text(std::string(bytes.begin(), bytes.end()));
}

namespace {

std::string index_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04zu.png", i);
  return buf;
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (!ec) fs::create_directories(dir / "masks", ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

fs::path partner_path(const fs::path& dir, const std::string& rel) {
  const auto p = dir / rel;
  if (!fs::exists(p)) throw ValidationError("missing file " + p.string());
  return p;
}

}  // namespace

void write_phantom_dataset(const fs::path& dir, const PhantomSpec& spec) {
  spec.validate();
  make_dirs(dir);
  Manifest m;
  m.kind = ImageKind::hu;
  m.header = {{"size", std::to_string(spec.size)}, {"seed", std::to_string(spec.seed)}};
  for (int i = 0; i < spec.count; ++i) {
    const Phantom ph = generate_phantom(spec, i);
    const std::string name = index_name(static_cast<std::size_t>(i));
    write_png(dir / "images" / name, to_png16_hu(ph.image));
    write_png(dir / "masks" / name, to_png_mask(ph.mask));
    m.entries.push_back({"images/" + name, "masks/" + name});
  }
  write_file_atomic(dir / "manifest.txt", m.to_text());
}

GrayImage enhance(const GrayImage& hu, const WindowParams& window, const ClaheParams& clahe_params) {
  return clahe(ct_window(hu, window), clahe_params);
}

void preprocess_dataset(const fs::path& in, const fs::path& out, const WindowParams& window,
                        const ClaheParams& clahe_params) {
  window.validate();
  clahe_params.validate();
  const Manifest src = read_manifest(in);
  if (src.kind != ImageKind::hu) throw ValidationError("preprocess expects an HU dataset, got kind=" + to_string(src.kind));
  for (const auto& e : src.entries) {
    partner_path(in, e.image);
    partner_path(in, e.mask);
  }
  make_dirs(out);
  Manifest dst;
  dst.kind = ImageKind::normalized;
  dst.header = src.header;
  dst.header.emplace_back("window_center", std::to_string(window.center));
  dst.header.emplace_back("window_width", std::to_string(window.width));
  dst.header.emplace_back("clahe_clip", std::to_string(clahe_params.clip_limit));
  dst.header.emplace_back("clahe_tiles", std::to_string(clahe_params.tiles_x));
  for (std::size_t i = 0; i < src.entries.size(); ++i) {
    const auto& e = src.entries[i];
    const std::string name = index_name(i);
    const GrayImage hu = hu_from_png(read_png(in / e.image));
    write_png(out / "images" / name, to_png8(enhance(hu, window, clahe_params)));
    write_file_atomic(out / "masks" / name, read_file(in / e.mask));
    dst.entries.push_back({"images/" + name, "masks/" + name});
  }
  write_file_atomic(out / "manifest.txt", dst.to_text());
}

std::vector<Sample> load_samples(const fs::path& dir, const WindowParams& window, const ClaheParams& clahe_params) {
  const Manifest m = read_manifest(dir);
  std::vector<Sample> out;
  for (const auto& e : m.entries) {
    const auto image_path = partner_path(dir, e.image);
    const auto mask_path = partner_path(dir, e.mask);
    const PngGray png = read_png(image_path);
    Sample s;
    s.id = fs::path(e.image).stem().string();
    s.image = m.kind == ImageKind::hu ? enhance(hu_from_png(png), window, clahe_params) : normalized_from_png(png);
    s.mask = mask_from_png(read_png(mask_path), mask_path.string());
    if (s.mask.width != s.image.width || s.mask.height != s.image.height) {
      throw ValidationError("mask " + mask_path.string() + " does not match its image size");
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace mfa
