#include "pvr/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "pvr/error.hpp"

namespace pvr {

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

void put_chunk(std::vector<unsigned char>& out, const char* type, const std::vector<unsigned char>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

// black -> red -> yellow -> white
void ramp(double t, unsigned char rgb[3]) {
  t = std::clamp(t, 0.0, 1.0) * 3.0;
  const double r = std::min(1.0, t);
  const double g = std::clamp(t - 1.0, 0.0, 1.0);
  const double b = std::clamp(t - 2.0, 0.0, 1.0);
  rgb[0] = static_cast<unsigned char>(std::lround(255.0 * r));
  rgb[1] = static_cast<unsigned char>(std::lround(255.0 * g));
  rgb[2] = static_cast<unsigned char>(std::lround(255.0 * b));
}

}  // namespace

void write_heat_png(const std::filesystem::path& path, const Image2D& image, double lo, double hi) {
  if (image.nx < 1 || image.ny < 1) throw ParameterError("heat map image is empty");
  const double span = hi > lo ? hi - lo : 1.0;
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<std::size_t>(image.ny) * (1 + 3 * static_cast<std::size_t>(image.nx)));
  for (int y = 0; y < image.ny; ++y) {
    raw.push_back(0);  // filter: none
    for (int x = 0; x < image.nx; ++x) {
      unsigned char rgb[3];
      ramp((image.at(x, y) - lo) / span, rgb);
      raw.insert(raw.end(), rgb, rgb + 3);
    }
  }
  uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> packed(packed_size);
  if (compress2(packed.data(), &packed_size, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw IoError("PNG compression failed");
  }
  packed.resize(packed_size);

  std::vector<unsigned char> png{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<unsigned char> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(image.nx));
  put_u32(ihdr, static_cast<std::uint32_t>(image.ny));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit RGB
  put_chunk(png, "IHDR", ihdr);
  put_chunk(png, "IDAT", packed);
  put_chunk(png, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) f << (i ? "," : "") << cells[i];
    f << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  if (!f) throw IoError("write failed: " + path.string());
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                               std::vector<std::string>* header) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string text;
  bool first = true;
  while (std::getline(f, text)) {
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (first) {
      first = false;
      if (header != nullptr) *header = cells;
      continue;
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace pvr
