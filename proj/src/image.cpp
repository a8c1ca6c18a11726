#include "figret/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "figret/error.hpp"

namespace figret {

Image::Image(int w, int h, float fill) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw ParameterError("image extents must be positive");
  pixels.assign(static_cast<std::size_t>(w) * h, fill);
}

void Image::validate() const {
  if (width <= 0 || height <= 0) throw ParameterError("image extents must be positive");
  if (pixels.size() != static_cast<std::size_t>(width) * height)
    throw StructuralError("pixel count does not match width x height");
  for (float p : pixels)
    if (!(p >= 0.0f && p <= 1.0f)) throw ParameterError("pixel value outside [0,1]");
}

std::string encode_pgm(const Image& img) {
  img.validate();
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    out[header + i] = static_cast<char>(static_cast<unsigned char>(std::lround(img.pixels[i] * 255.0f)));
  return out;
}

namespace {

class PgmHeaderReader {
 public:
  explicit PgmHeaderReader(std::string_view b) : bytes_(b) {}

  int next_int() {
    skip_space_and_comments();
    std::size_t start = pos_;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    if (start == pos_) throw FormatError("pgm: expected integer in header");
    if (pos_ - start > 9) throw FormatError("pgm: header value too large");
    return std::stoi(std::string(bytes_.substr(start, pos_ - start)));
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 2;
};

}  // namespace

Image decode_pgm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError("pgm: missing P5 magic");
  PgmHeaderReader r(bytes);
  const int w = r.next_int();
  const int h = r.next_int();
  const int maxval = r.next_int();
  if (w <= 0 || h <= 0) throw FormatError("pgm: non-positive extents");
  if (maxval <= 0 || maxval > 255) throw FormatError("pgm: only 8-bit maxval is supported");
  if (r.pos() >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[r.pos()])))
    throw FormatError("pgm: malformed header");
  r.advance();
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (bytes.size() - r.pos() < n) throw FormatError("pgm: truncated pixel data");
  Image img(w, h);
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = static_cast<unsigned char>(bytes[r.pos() + i]);
    img.pixels[i] = std::min(1.0f, static_cast<float>(v) / static_cast<float>(maxval));
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const Image& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  const std::string bytes = encode_pgm(img);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_pgm(ss.str());
}

Image resize_area(const Image& img, int width, int height) {
  img.validate();
  if (width <= 0 || height <= 0) throw ParameterError("resize: target extents must be positive");
  if (width == img.width && height == img.height) return img;
  Image out(width, height, 0.0f);
  const double sx = static_cast<double>(img.width) / width;
  const double sy = static_cast<double>(img.height) / height;
  for (int oy = 0; oy < height; ++oy) {
    const double y0 = oy * sy, y1 = (oy + 1) * sy;
    for (int ox = 0; ox < width; ++ox) {
      const double x0 = ox * sx, x1 = (ox + 1) * sx;
      double acc = 0.0, area = 0.0;
      for (int iy = static_cast<int>(std::floor(y0)); iy < static_cast<int>(std::ceil(y1)) && iy < img.height; ++iy) {
        const double wy = std::min<double>(y1, iy + 1) - std::max<double>(y0, iy);
        if (wy <= 0) continue;
        for (int ix = static_cast<int>(std::floor(x0)); ix < static_cast<int>(std::ceil(x1)) && ix < img.width; ++ix) {
          const double wx = std::min<double>(x1, ix + 1) - std::max<double>(x0, ix);
          if (wx <= 0) continue;
          acc += wx * wy * img.at(ix, iy);
          area += wx * wy;
        }
      }
      out.at(ox, oy) = static_cast<float>(std::clamp(acc / area, 0.0, 1.0));
    }
  }
  return out;
}

void quantize_to_8bit(Image& img) {
  for (float& p : img.pixels) p = static_cast<float>(std::lround(std::clamp(p, 0.0f, 1.0f) * 255.0f)) / 255.0f;
}

Image crop(const Image& img, int x0, int y0, int w, int h) {
  if (w <= 0 || h <= 0 || x0 < 0 || y0 < 0 || x0 + w > img.width || y0 + h > img.height)
    throw ParameterError("crop rectangle outside image");
  Image out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(x, y) = img.at(x0 + x, y0 + y);
  return out;
}

}  // namespace figret
