#include "hierprobe/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>

#include <png.h>

#include "hierprobe/error.hpp"
#include "json.hpp"

namespace hierprobe {

ImageBuffer::ImageBuffer(std::size_t width, std::size_t height, Rgb fill)
    : width_(width), height_(height), pixels_(width * height, fill) {
  if (width == 0 || height == 0) throw Error(ErrorCode::InvalidArgument, "image dimensions must be positive");
}

ImageBuffer::ImageBuffer(std::size_t width, std::size_t height, std::vector<Rgb> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width == 0 || height == 0) throw Error(ErrorCode::InvalidArgument, "image dimensions must be positive");
  if (pixels_.size() != width * height) {
    throw Error(ErrorCode::ShapeMismatch, "pixel count does not equal width * height");
  }
}

SegmentationMask::SegmentationMask(std::size_t width, std::size_t height,
                                   std::vector<std::uint32_t> labels,
                                   std::map<std::uint32_t, std::string> label_names)
    : width_(width), height_(height), labels_(std::move(labels)), names_(std::move(label_names)) {
  if (labels_.size() != width * height) {
    throw Error(ErrorCode::ShapeMismatch, "label count does not equal width * height");
  }
  for (const auto l : labels_) {
    if (!names_.contains(l)) {
      throw Error(ErrorCode::InvalidArgument, "label " + std::to_string(l) + " has no name");
    }
  }
}

// --- Color ----------------------------------------------------------------

Hsv rgb_to_hsv(Rgb rgb) noexcept {
  const double r = rgb.r / 255.0, g = rgb.g / 255.0, b = rgb.b / 255.0;
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  Hsv out;
  out.v = mx;
  out.s = mx > 0.0 ? delta / mx : 0.0;
  if (delta <= 0.0) return out;
  double h;
  if (mx == r) {
    h = 60.0 * std::fmod((g - b) / delta, 6.0);
  } else if (mx == g) {
    h = 60.0 * ((b - r) / delta + 2.0);
  } else {
    h = 60.0 * ((r - g) / delta + 4.0);
  }
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  out.h = h;
  return out;
}

Rgb hsv_to_rgb(const Hsv& hsv) noexcept {
  const double h = std::fmod(std::fmod(hsv.h, 360.0) + 360.0, 360.0);
  const double c = hsv.v * hsv.s;
  const double x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0));
  const double m = hsv.v - c;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h / 60.0)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const auto to8 = [](double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
  };
  return {to8(r + m), to8(g + m), to8(b + m)};
}

bool is_chromatic(const Hsv& hsv) noexcept {
  return hsv.s >= kAchromaticSaturation && hsv.v >= kAchromaticValue;
}

std::vector<double> hue_histogram(const ImageBuffer& image, std::size_t bins) {
  if (bins < 2) throw Error(ErrorCode::InvalidArgument, "hue histogram needs at least 2 bins");
  std::vector<std::size_t> counts(bins, 0);
  std::size_t total = 0;
  for (const auto& px : image.pixels()) {
    const Hsv hsv = rgb_to_hsv(px);
    if (!is_chromatic(hsv)) continue;
    auto k = static_cast<std::size_t>(hsv.h * static_cast<double>(bins) / 360.0);
    counts[std::min(k, bins - 1)] += 1;
    ++total;
  }
  std::vector<double> hist(bins, 0.0);
  if (total == 0) return hist;
  for (std::size_t k = 0; k < bins; ++k) {
    hist[k] = static_cast<double>(counts[k]) / static_cast<double>(total);
  }
  return hist;
}

std::size_t chromatic_pixel_count(const ImageBuffer& image) {
  return static_cast<std::size_t>(std::count_if(image.pixels().begin(), image.pixels().end(),
                                                [](Rgb px) { return is_chromatic(rgb_to_hsv(px)); }));
}

// --- Layout ---------------------------------------------------------------

double layout_scalar(const WallIntersection& estimate) {
  if (!estimate.center_x) throw Error(ErrorCode::MissingEstimate, "no wall-intersection line");
  if (estimate.image_width == 0) throw Error(ErrorCode::InvalidArgument, "image width is zero");
  const double half = static_cast<double>(estimate.image_width) / 2.0;
  return std::clamp((*estimate.center_x - half) / half, -1.0, 1.0);
}

WallIntersection estimate_wall_intersection(const ImageBuffer& image) {
  WallIntersection out{image.width(), std::nullopt};
  std::size_t best = 0;
  std::size_t best_col = 0;
  for (std::size_t x = 0; x < image.width(); ++x) {
    std::size_t achromatic = 0;
    for (std::size_t y = 0; y < image.height(); ++y) {
      if (!is_chromatic(rgb_to_hsv(image.at(x, y)))) ++achromatic;
    }
    if (achromatic > best) {
      best = achromatic;
      best_col = x;
    }
  }
  if (2 * best > image.height()) out.center_x = static_cast<double>(best_col);
  return out;
}

// --- PNG ------------------------------------------------------------------

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return f;
}

[[noreturn]] void png_fail(const std::filesystem::path& path, const char* what) {
  throw Error(ErrorCode::Io, std::string(what) + ": " + path.string());
}

// Writes rows of `bit_depth`-bit samples; `rows` holds big-endian packed data.
void write_png_rows(const std::filesystem::path& path, std::size_t width, std::size_t height,
                    int bit_depth, int color_type, const std::vector<std::vector<png_byte>>& rows) {
  auto file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) png_fail(path, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    png_fail(path, "png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    png_fail(path, "PNG encoding failed");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (const auto& row : rows) png_write_row(png, row.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct DecodedPng {
  std::size_t width = 0, height = 0;
  int bit_depth = 0, color_type = 0, channels = 0;
  std::vector<std::vector<png_byte>> rows;
};

DecodedPng read_png_rows(const std::filesystem::path& path) {
  auto file = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    png_fail(path, "not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) png_fail(path, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    png_fail(path, "png_create_info_struct failed");
  }
  DecodedPng out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    png_fail(path, "PNG decoding failed");
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  out.width = png_get_image_width(png, info);
  out.height = png_get_image_height(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  out.color_type = png_get_color_type(png, info);
  if (out.color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (out.bit_depth < 8) png_set_packing(png);
  png_read_update_info(png, info);
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  out.color_type = png_get_color_type(png, info);
  const auto rowbytes = png_get_rowbytes(png, info);
  out.rows.assign(out.height, std::vector<png_byte>(rowbytes));
  for (auto& row : out.rows) png_read_row(png, row.data(), nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace

void write_png(const std::filesystem::path& path, const ImageBuffer& image) {
  std::vector<std::vector<png_byte>> rows(image.height(), std::vector<png_byte>(image.width() * 3));
  for (std::size_t y = 0; y < image.height(); ++y) {
    for (std::size_t x = 0; x < image.width(); ++x) {
      const auto& px = image.at(x, y);
      rows[y][3 * x] = px.r;
      rows[y][3 * x + 1] = px.g;
      rows[y][3 * x + 2] = px.b;
    }
  }
  write_png_rows(path, image.width(), image.height(), 8, PNG_COLOR_TYPE_RGB, rows);
}

ImageBuffer read_png(const std::filesystem::path& path) {
  const auto png = read_png_rows(path);
  if (png.bit_depth != 8 || (png.color_type != PNG_COLOR_TYPE_RGB &&
                             png.color_type != PNG_COLOR_TYPE_RGB_ALPHA)) {
    png_fail(path, "expected an 8-bit RGB PNG");
  }
  std::vector<Rgb> pixels;
  pixels.reserve(png.width * png.height);
  for (const auto& row : png.rows) {
    for (std::size_t x = 0; x < png.width; ++x) {
      const auto* p = &row[x * static_cast<std::size_t>(png.channels)];
      pixels.push_back({p[0], p[1], p[2]});
    }
  }
  return ImageBuffer(png.width, png.height, std::move(pixels));
}

std::filesystem::path mask_sidecar_path(const std::filesystem::path& mask_path) {
  return std::filesystem::path(mask_path.string() + ".labels.json");
}

void write_mask_png(const std::filesystem::path& path, const SegmentationMask& mask) {
  std::vector<std::vector<png_byte>> rows(mask.height(), std::vector<png_byte>(mask.width() * 2));
  for (std::size_t y = 0; y < mask.height(); ++y) {
    for (std::size_t x = 0; x < mask.width(); ++x) {
      const auto label = mask.labels()[y * mask.width() + x];
      if (label > 0xffff) throw Error(ErrorCode::InvalidArgument, "label does not fit in 16 bits");
      rows[y][2 * x] = static_cast<png_byte>(label >> 8);
      rows[y][2 * x + 1] = static_cast<png_byte>(label & 0xff);
    }
  }
  write_png_rows(path, mask.width(), mask.height(), 16, PNG_COLOR_TYPE_GRAY, rows);
  nlohmann::json names = nlohmann::json::object();
  for (const auto& [label, name] : mask.label_names()) names[std::to_string(label)] = name;
  std::ofstream side(mask_sidecar_path(path));
  if (!side) throw Error(ErrorCode::Io, "cannot write " + mask_sidecar_path(path).string());
  side << names.dump(2) << '\n';
}

SegmentationMask read_mask_png(const std::filesystem::path& path) {
  const auto png = read_png_rows(path);
  if (png.channels != 1 || (png.bit_depth != 16 && png.bit_depth != 8)) {
    png_fail(path, "expected a single-channel label PNG");
  }
  std::vector<std::uint32_t> labels;
  labels.reserve(png.width * png.height);
  for (const auto& row : png.rows) {
    for (std::size_t x = 0; x < png.width; ++x) {
      if (png.bit_depth == 16) {
        labels.push_back(static_cast<std::uint32_t>(row[2 * x]) << 8 | row[2 * x + 1]);
      } else {
        labels.push_back(row[x]);
      }
    }
  }
  std::ifstream side(mask_sidecar_path(path));
  if (!side) throw Error(ErrorCode::Io, "missing label sidecar " + mask_sidecar_path(path).string());
  std::map<std::uint32_t, std::string> names;
  try {
    const auto j = nlohmann::json::parse(side);
    for (const auto& [key, value] : j.items()) {
      names[static_cast<std::uint32_t>(std::stoul(key))] = value.get<std::string>();
    }
  } catch (const std::exception& e) {
    throw Error(ErrorCode::Io, "bad label sidecar " + mask_sidecar_path(path).string() + ": " + e.what());
  }
  return SegmentationMask(png.width, png.height, std::move(labels), std::move(names));
}

}  // namespace hierprobe
