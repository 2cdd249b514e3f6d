#include "doctest.h"

#include <algorithm>
#include <filesystem>

#include "mfa/dataset.hpp"
#include "mfa/error.hpp"
#include "mfa/image_io.hpp"
#include "mfa/preprocessing.hpp"
#include "mfa/random.hpp"
#include "mfa/tensor_io.hpp"
#include "oracles/clahe_reference.hpp"

using namespace mfa;
namespace fs = std::filesystem;

namespace {

GrayImage random_image(int w, int h, std::uint64_t seed, int levels = 0) {
  Rng rng(seed);
  GrayImage img(w, h);
  for (auto& v : img.pixels) v = levels ? static_cast<double>(rng.uniform_int(0, levels)) / levels : rng.uniform();
  return img;
}

GrayImage hu_row(std::vector<double> values) {
  GrayImage img(static_cast<int>(values.size()), 1);
  img.pixels = std::move(values);
  return img;
}

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), a));
  std::size_t count_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) count_b += e.is_regular_file();
  if (files.size() != count_b) return false;
  for (const auto& f : files)
    if (!fs::exists(b / f) || read_file(a / f) != read_file(b / f)) return false;
  return true;
}

}  // namespace

TEST_CASE("ct_window: edges, midpoint and affine map") {
  auto out = ct_window(hu_row({-160, 240, 40, -1000, 3000}), WindowParams{40, 400});
  CHECK(out.pixels[0] == 0.0);
  CHECK(out.pixels[1] == 1.0);
  CHECK(out.pixels[2] == 0.5);
  CHECK(out.pixels[3] == 0.0);
  CHECK(out.pixels[4] == 1.0);
  CHECK(ct_window(hu_row({0.5}), WindowParams{0, 2}).pixels[0] == 0.75);
  CHECK_THROWS_AS(ct_window(hu_row({0}), WindowParams{40, 0}), ValidationError);
  CHECK_THROWS_AS(ct_window(hu_row({0}), WindowParams{40, -5}), ValidationError);
}

TEST_CASE("ct_window is monotone and idempotent under the unit window") {
  Rng rng(3);
  std::vector<double> v(200);
  for (auto& x : v) x = rng.uniform(-1200, 1200);
  std::sort(v.begin(), v.end());
  auto w = ct_window(hu_row(v), WindowParams{});
  CHECK(std::is_sorted(w.pixels.begin(), w.pixels.end()));
  CHECK(ct_window(w, WindowParams{0.5, 1.0}) == w);
}

TEST_CASE("clahe: constant images are unchanged") {
  for (double c : {0.0, 0.25, 0.5, 1.0}) {
    GrayImage img(16, 12, c);
    CHECK(clahe(img, ClaheParams{}) == img);
    CHECK(clahe(img, ClaheParams{3, 5, 1.5, 64}) == img);
  }
}

TEST_CASE("clahe: one tile with no clipping is global equalization") {
  GrayImage img(2, 2);
  img.pixels = {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
  CHECK(clahe(img, ClaheParams{1, 1, 1e9, 4}) == img);
}

TEST_CASE("clahe: tile mappings are monotone") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto img = random_image(8, 8, seed, seed % 2 ? 10 : 0);
    ClaheParams p{1, 1, 0.5 + static_cast<double>(seed % 4), 32};
    auto m = make_tile_mapping(img.pixels, p);
    double prev = -1;
    for (int k = 0; k <= 100; ++k) {
      const double y = m(k / 100.0);
      CHECK(y >= prev);
      prev = y;
    }
  }
}

TEST_CASE("clahe: range is preserved and a single tile never reorders pixels") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto img = random_image(16, 16, seed + 100, 12);
    auto out = clahe(img, ClaheParams{4, 4, 2.0, 256});
    for (double v : out.pixels) CHECK((v >= 0.0 && v <= 1.0));
    auto global = clahe(img, ClaheParams{1, 1, 2.0, 256});
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
      for (std::size_t j = 0; j < img.pixels.size(); ++j)
        if (img.pixels[i] <= img.pixels[j]) REQUIRE(global.pixels[i] <= global.pixels[j]);
  }
}

TEST_CASE("clahe matches the scalar reference exactly") {
  const oracle::ClaheSetting settings[] = {{2, 2, 2.0, 256}, {4, 4, 3.0, 64}, {3, 5, 1.5, 32}, {1, 1, 1.0, 16}};
  for (const auto& s : settings) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto img = random_image(16, 16, seed, seed % 2 ? 7 : 0);
      auto out = clahe(img, ClaheParams{s.tiles_x, s.tiles_y, s.clip, s.bins});
      CHECK(out.pixels == oracle::clahe(img.pixels, 16, 16, s));
    }
  }
}

TEST_CASE("clahe rejects bad parameters and unnormalized input") {
  GrayImage img(4, 4, 0.5);
  CHECK_THROWS_AS(clahe(img, ClaheParams{0, 1, 2.0, 256}), ValidationError);
  CHECK_THROWS_AS(clahe(img, ClaheParams{1, 1, 0.0, 256}), ValidationError);
  img.pixels[0] = 1.5;
  CHECK_THROWS_AS(clahe(img, ClaheParams{}), ValidationError);
  CHECK_THROWS_AS(clahe(GrayImage(), ClaheParams{}), ValidationError);
}

TEST_CASE("phantoms are deterministic per seed") {
  PhantomSpec spec;
  spec.count = 4;
  spec.seed = 7;
  auto a = generate_phantoms(spec);
  auto b = generate_phantoms(spec);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image == b[i].image);
    CHECK(a[i].mask == b[i].mask);
  }
  spec.seed = 8;
  CHECK_FALSE(generate_phantoms(spec)[0].image == a[0].image);
  // Sample i uses stream seed + i, so shifting the seed shifts the sequence.
  CHECK(generate_phantoms(spec)[0].image == a[1].image);
}

TEST_CASE("phantom lesions lie inside the organ") {
  PhantomSpec spec;
  spec.count = 50;
  spec.noise_sigma = 0;
  for (const auto& ph : generate_phantoms(spec)) {
    CHECK(ph.mask.count() > 0);
    for (std::size_t i = 0; i < ph.mask.labels.size(); ++i) {
      if (ph.image.pixels[i] == kBackgroundHu) CHECK(ph.mask.labels[i] == 0);
      if (ph.mask.labels[i]) CHECK(ph.image.pixels[i] == kOrganHu + spec.lesion_contrast);
    }
  }
}

TEST_CASE("phantom lesion fraction lies in the Monte-Carlo band") {
  // tests/oracles/phantom_band.py
  PhantomSpec spec;
  spec.count = 1000;
  spec.seed = 12345;
  double total = 0;
  for (const auto& ph : generate_phantoms(spec))
    total += static_cast<double>(ph.mask.count()) / static_cast<double>(ph.mask.labels.size());
  const double mean = total / 1000.0;
  MESSAGE("mean lesion fraction " << mean);
  CHECK(mean >= 0.034972);
  CHECK(mean <= 0.040860);
}

TEST_CASE("phantom spec validation") {
  PhantomSpec spec;
  spec.lesion_radius_max = 18;
  CHECK_THROWS_AS(generate_phantoms(spec), ValidationError);
  spec = PhantomSpec{};
  spec.size = 32;
  CHECK_THROWS_AS(generate_phantoms(spec), ValidationError);
  spec = PhantomSpec{};
  spec.count = -1;
  CHECK_THROWS_AS(generate_phantoms(spec), ValidationError);
}

TEST_CASE("png round trips and rejects bad input") {
  PngGray p8{5, 3, 8, {}};
  for (int i = 0; i < 15; ++i) p8.samples.push_back(static_cast<std::uint16_t>(i * 17));
  auto back = decode_png(encode_png(p8));
  CHECK(back.samples == p8.samples);
  CHECK(back.bit_depth == 8);
  PngGray p16{3, 2, 16, {0, 1, 1024, 4000, 65535, 300}};
  CHECK(decode_png(encode_png(p16)).samples == p16.samples);
  CHECK(encode_png(p16) == encode_png(p16));

  PhantomSpec spec;
  spec.count = 1;
  auto ph = generate_phantoms(spec)[0];
  CHECK(hu_from_png(to_png16_hu(ph.image)) == ph.image);
  CHECK(mask_from_png(to_png_mask(ph.mask)) == ph.mask);

  auto bytes = encode_png(p8);
  bytes.resize(bytes.size() / 2);
  CHECK_THROWS_AS(decode_png(bytes), ValidationError);
  CHECK_THROWS_AS(decode_png(std::vector<std::uint8_t>{1, 2, 3}), ValidationError);
  PngGray gray_mask{2, 1, 8, {0, 128}};
  CHECK_THROWS_AS(mask_from_png(gray_mask), ValidationError);
}

TEST_CASE("synthetic dataset layout and determinism") {
  const auto a = fresh_dir("mfa_test_synth_a");
  const auto b = fresh_dir("mfa_test_synth_b");
  PhantomSpec spec;
  spec.count = 3;
  spec.seed = 1;
  write_phantom_dataset(a, spec);
  write_phantom_dataset(b, spec);
  CHECK(same_tree(a, b));
  CHECK(fs::exists(a / "images" / "0002.png"));
  CHECK(fs::exists(a / "masks" / "0000.png"));
  auto m = read_manifest(a);
  CHECK(m.kind == ImageKind::hu);
  REQUIRE(m.entries.size() == 3);
  CHECK(m.entries[1].image == "images/0001.png");
  CHECK(m.entries[1].mask == "masks/0001.png");

  auto samples = load_samples(a);
  auto phantoms = generate_phantoms(spec);
  REQUIRE(samples.size() == 3);
  CHECK(samples[2].id == "0002");
  CHECK(samples[2].mask == phantoms[2].mask);
  CHECK(samples[2].image == enhance(phantoms[2].image));

  const auto empty = fresh_dir("mfa_test_synth_empty");
  spec.count = 0;
  write_phantom_dataset(empty, spec);
  CHECK(read_manifest(empty).entries.empty());
  for (const auto& d : {a, b, empty}) fs::remove_all(d);
}

TEST_CASE("preprocess equals composing window and clahe directly") {
  const auto in = fresh_dir("mfa_test_pre_in");
  const auto out = fresh_dir("mfa_test_pre_out");
  PhantomSpec spec;
  spec.count = 2;
  write_phantom_dataset(in, spec);
  WindowParams w{50, 350};
  ClaheParams c{2, 2, 3.0, 256};
  preprocess_dataset(in, out, w, c);
  auto m = read_manifest(out);
  CHECK(m.kind == ImageKind::normalized);
  auto phantoms = generate_phantoms(spec);
  for (int i = 0; i < 2; ++i) {
    const std::string name = i == 0 ? "0000.png" : "0001.png";
    CHECK(read_png(out / "images" / name).samples == to_png8(clahe(ct_window(phantoms[i].image, w), c)).samples);
    CHECK(read_file(out / "masks" / name) == read_file(in / "masks" / name));
  }
  auto samples = load_samples(out);
  CHECK(samples[0].mask == phantoms[0].mask);

  fs::remove(in / "masks" / "0001.png");
  const auto out2 = fresh_dir("mfa_test_pre_out2");
  try {
    preprocess_dataset(in, out2, w, c);
    FAIL("expected rejection");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("0001.png") != std::string::npos);
  }
  CHECK_FALSE(fs::exists(out2));
  for (const auto& d : {in, out, out2}) fs::remove_all(d);
}

TEST_CASE("manifest parsing rejects malformed text") {
  CHECK_THROWS_AS(Manifest::from_text("kind=ct\n"), ValidationError);
  CHECK_THROWS_AS(Manifest::from_text("images/0.png masks/0.png\n"), ValidationError);
  CHECK_THROWS_AS(Manifest::from_text("kind=hu\ncount=2\na b\n"), ValidationError);
  CHECK_THROWS_AS(Manifest::from_text("kind=hu\nkind=hu\n"), ValidationError);
  auto m = Manifest::from_text("# comment\nkind=normalized\nseed=4\na.png b.png\n");
  CHECK(m.kind == ImageKind::normalized);
  CHECK(m.header.size() == 1);
  CHECK(Manifest::from_text(m.to_text()).entries.size() == 1);
}
