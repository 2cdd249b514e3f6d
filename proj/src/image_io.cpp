#include "mfa/image_io.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstring>

#include "mfa/error.hpp"
#include "mfa/tensor_io.hpp"

namespace mfa {

namespace {

// libpng reports errors by longjmp; the contexts below live in the caller's frame so nothing
// with a destructor is skipped.
struct ErrorSink {
  char message[256] = {0};
};

void on_error(png_structp png, png_const_charp msg) {
  auto* sink = static_cast<ErrorSink*>(png_get_error_ptr(png));
  std::strncpy(sink->message, msg, sizeof(sink->message) - 1);
  png_longjmp(png, 1);
}

void on_warning(png_structp, png_const_charp) {}

struct WriteCtx {
  const PngGray* img;
  std::vector<std::uint8_t>* out;
  std::vector<std::uint8_t>* rows;
  ErrorSink sink;
};

void write_cb(png_structp png, png_bytep data, png_size_t n) {
  auto* ctx = static_cast<WriteCtx*>(png_get_io_ptr(png));
  ctx->out->insert(ctx->out->end(), data, data + n);
}

void flush_cb(png_structp) {}

bool encode_impl(WriteCtx* ctx) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &ctx->sink, on_error, on_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  const PngGray& img = *ctx->img;
  png_set_write_fn(png, ctx, write_cb, flush_cb);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), img.bit_depth,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels * (img.bit_depth / 8);
  for (int y = 0; y < img.height; ++y) png_write_row(png, ctx->rows->data() + static_cast<std::size_t>(y) * stride);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

struct ReadCtx {
  const std::vector<std::uint8_t>* in;
  std::size_t pos = 0;
  PngGray* img;
  std::vector<std::uint8_t>* rows;
  ErrorSink sink;
};

void read_cb(png_structp png, png_bytep out, png_size_t n) {
  auto* ctx = static_cast<ReadCtx*>(png_get_io_ptr(png));
  if (ctx->pos + n > ctx->in->size()) png_error(png, "truncated data");
  std::memcpy(out, ctx->in->data() + ctx->pos, n);
  ctx->pos += n;
}

bool decode_impl(ReadCtx* ctx) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &ctx->sink, on_error, on_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, ctx, read_cb);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY || (depth != 8 && depth != 16)) {
    std::strncpy(ctx->sink.message, "only 8/16-bit grayscale PNG is supported", sizeof(ctx->sink.message) - 1);
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  ctx->img->width = static_cast<int>(png_get_image_width(png, info));
  ctx->img->height = static_cast<int>(png_get_image_height(png, info));
  ctx->img->bit_depth = depth;
  const std::size_t stride = png_get_rowbytes(png, info);
  ctx->rows->resize(stride * static_cast<std::size_t>(ctx->img->height));
  for (int y = 0; y < ctx->img->height; ++y)
    png_read_row(png, ctx->rows->data() + static_cast<std::size_t>(y) * stride, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

void check_png(const PngGray& img) {
  if (img.width <= 0 || img.height <= 0) throw ValidationError("png dimensions must be positive");
  if (img.bit_depth != 8 && img.bit_depth != 16) throw ValidationError("png bit depth must be 8 or 16");
  if (img.channels != 1 && img.channels != 3) throw ValidationError("png must have 1 or 3 channels");
  if (img.samples.size() != static_cast<std::size_t>(img.width) * img.height * img.channels) {
    throw ValidationError("png sample count does not match dimensions");
  }
}

}  // namespace

std::vector<std::uint8_t> encode_png(const PngGray& img) {
  check_png(img);
  std::vector<std::uint8_t> rows;
  rows.reserve(img.samples.size() * (img.bit_depth / 8));
  for (auto s : img.samples) {
    if (img.bit_depth == 16) {
      rows.push_back(static_cast<std::uint8_t>(s >> 8));  // PNG is big-endian
      rows.push_back(static_cast<std::uint8_t>(s & 0xff));
    } else {
      if (s > 255) throw ValidationError("8-bit png sample out of range");
      rows.push_back(static_cast<std::uint8_t>(s));
    }
  }
  std::vector<std::uint8_t> out;
  WriteCtx ctx{&img, &out, &rows, {}};
  if (!encode_impl(&ctx)) throw std::runtime_error(std::string("png encode failed: ") + ctx.sink.message);
  return out;
}

PngGray decode_png(const std::vector<std::uint8_t>& bytes, const std::string& what) {
  PngGray img;
  std::vector<std::uint8_t> rows;
  ReadCtx ctx{&bytes, 0, &img, &rows, {}};
  if (!decode_impl(&ctx)) throw ValidationError(what + ": invalid png (" + ctx.sink.message + ")");
  img.samples.resize(static_cast<std::size_t>(img.width) * img.height);
  for (std::size_t i = 0; i < img.samples.size(); ++i) {
    img.samples[i] = img.bit_depth == 16 ? static_cast<std::uint16_t>(rows[2 * i] << 8 | rows[2 * i + 1]) : rows[i];
  }
  return img;
}

void write_png(const std::filesystem::path& path, const PngGray& img) { write_file_atomic(path, encode_png(img)); }

PngGray read_png(const std::filesystem::path& path) { return decode_png(read_file(path), path.string()); }

PngGray to_png8(const GrayImage& img) {
  img.validate_normalized();
  PngGray png{img.width, img.height, 8, {}};
  png.samples.reserve(img.pixels.size());
  for (double v : img.pixels) png.samples.push_back(static_cast<std::uint16_t>(std::lround(v * 255.0)));
  return png;
}

PngGray to_png16_hu(const GrayImage& img) {
  img.validate();
  PngGray png{img.width, img.height, 16, {}};
  png.samples.reserve(img.pixels.size());
  for (double v : img.pixels) {
    const double s = std::round(v + kHuOffset);
    if (!(s >= 0 && s <= 65535)) throw ValidationError("HU value " + std::to_string(v) + " not representable");
    png.samples.push_back(static_cast<std::uint16_t>(s));
  }
  return png;
}

PngGray to_png_mask(const SegmentationMask& mask) {
  mask.validate();
  PngGray png{mask.width, mask.height, 8, {}};
  png.samples.reserve(mask.labels.size());
  for (auto v : mask.labels) png.samples.push_back(v ? 255 : 0);
  return png;
}

PngGray overlay_png(const GrayImage& img, const SegmentationMask& pred, const SegmentationMask& gt) {
  img.validate_normalized();
  (void)confusion(pred, gt);  // size and label validation
  if (pred.width != img.width || pred.height != img.height) throw ValidationError("overlay: mask and image sizes differ");
  PngGray png{img.width, img.height, 8, {}, 3};
  png.samples.reserve(img.pixels.size() * 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double v = img.pixels[i] * 255.0;
    double rgb[3] = {v, v, v};
    const int tint = pred.labels[i] && gt.labels[i] ? 1 : pred.labels[i] ? 0 : gt.labels[i] ? 2 : -1;
    if (tint >= 0) {
      for (int k = 0; k < 3; ++k) rgb[k] *= 0.5;
      rgb[tint] += 127.5;
    }
    for (double c : rgb) png.samples.push_back(static_cast<std::uint16_t>(std::lround(c)));
  }
  return png;
}

GrayImage normalized_from_png(const PngGray& png) {
  const double scale = png.bit_depth == 16 ? 65535.0 : 255.0;
  GrayImage img(png.width, png.height);
  for (std::size_t i = 0; i < png.samples.size(); ++i) img.pixels[i] = png.samples[i] / scale;
  return img;
}

GrayImage hu_from_png(const PngGray& png) {
  if (png.bit_depth != 16) throw ValidationError("HU images must be 16-bit png");
  GrayImage img(png.width, png.height);
  for (std::size_t i = 0; i < png.samples.size(); ++i) img.pixels[i] = png.samples[i] - kHuOffset;
  return img;
}

SegmentationMask mask_from_png(const PngGray& png, const std::string& what) {
  if (png.bit_depth != 8) throw ValidationError(what + ": masks must be 8-bit png");
  SegmentationMask m(png.width, png.height);
  for (std::size_t i = 0; i < png.samples.size(); ++i) {
    if (png.samples[i] != 0 && png.samples[i] != 255) {
      throw ValidationError(what + ": mask value " + std::to_string(png.samples[i]) + " is not 0 or 255");
    }
    m.labels[i] = png.samples[i] == 255;
  }
  return m;
}

}  // namespace mfa
