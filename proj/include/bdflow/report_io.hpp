#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace bdflow {

/// Shortest round-trip style formatting ("%.17g"); inf/nan spelled "inf", "-inf", "nan".
std::string format_double(double v, int digits = 17);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

/// Writes text to a file, creating parent directories.
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

struct SvgSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct SvgPlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = true;
  bool log_y = false;
  std::vector<SvgSeries> series;
};

/// Minimal line plot; nonfinite points break the polyline.
std::string render_svg(const SvgPlot& plot, int width = 720, int height = 440);

}  // namespace bdflow
