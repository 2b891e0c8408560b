#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hierprobe {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// Row-major 8-bit RGB raster.
class ImageBuffer {
public:
  ImageBuffer() = default;
  ImageBuffer(std::size_t width, std::size_t height, Rgb fill = {});
  ImageBuffer(std::size_t width, std::size_t height, std::vector<Rgb> pixels);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  const std::vector<Rgb>& pixels() const noexcept { return pixels_; }
  Rgb& at(std::size_t x, std::size_t y) { return pixels_[y * width_ + x]; }
  const Rgb& at(std::size_t x, std::size_t y) const { return pixels_[y * width_ + x]; }

  bool operator==(const ImageBuffer&) const = default;

private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<Rgb> pixels_;
};

/// Row-major per-pixel object labels with their names.
class SegmentationMask {
public:
  SegmentationMask() = default;
  SegmentationMask(std::size_t width, std::size_t height, std::vector<std::uint32_t> labels,
                   std::map<std::uint32_t, std::string> label_names);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  const std::vector<std::uint32_t>& labels() const noexcept { return labels_; }
  const std::map<std::uint32_t, std::string>& label_names() const noexcept { return names_; }

private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint32_t> labels_;
  std::map<std::uint32_t, std::string> names_;
};

struct Hsv {
  double h = 0.0;  // degrees in [0, 360)
  double s = 0.0;  // [0, 1]
  double v = 0.0;  // [0, 1]
};

Hsv rgb_to_hsv(Rgb rgb) noexcept;
Rgb hsv_to_rgb(const Hsv& hsv) noexcept;

/// Pixels below these saturation/value levels have no meaningful hue and are
/// left out of the hue histogram.
inline constexpr double kAchromaticSaturation = 0.05;
inline constexpr double kAchromaticValue = 0.05;
inline constexpr std::size_t kDefaultHueBins = 12;

bool is_chromatic(const Hsv& hsv) noexcept;

/// Normalized hue histogram over chromatic pixels; bin k covers
/// [k*360/bins, (k+1)*360/bins) degrees. All-zero when no pixel is chromatic.
std::vector<double> hue_histogram(const ImageBuffer& image, std::size_t bins = kDefaultHueBins);

/// Number of chromatic pixels, the weight of an image's hue histogram.
std::size_t chromatic_pixel_count(const ImageBuffer& image);

/// Horizontal position of the wall-intersection line, as produced by a layout
/// estimator. `center_x` is empty when no line was found.
struct WallIntersection {
  std::size_t image_width = 0;
  std::optional<double> center_x;
};

/// (center_x - width/2) / (width/2), clamped to [-1, 1].
double layout_scalar(const WallIntersection& estimate);

/// Finds the image column with the most achromatic pixels (the planted
/// renderer draws the wall intersection as a gray vertical line). Columns
/// that are less than half achromatic do not count as a line.
WallIntersection estimate_wall_intersection(const ImageBuffer& image);

// PNG I/O. Images are 8-bit RGB; label masks are single-channel 16-bit with a
// "<path>.labels.json" sidecar mapping label values to names.
void write_png(const std::filesystem::path& path, const ImageBuffer& image);
ImageBuffer read_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const SegmentationMask& mask);
SegmentationMask read_mask_png(const std::filesystem::path& path);
std::filesystem::path mask_sidecar_path(const std::filesystem::path& mask_path);

}  // namespace hierprobe
