#include "slk/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "slk/error.hpp"
#include "slk/serialize.hpp"

namespace slk {

namespace {

bool is_slk1(const std::filesystem::path& p) { return p.extension() == ".slk1"; }

struct Netpbm {
  int channels = 0, h = 0, w = 0;
  std::vector<std::uint8_t> pixels;
};

Netpbm parse_netpbm(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  std::size_t pos = 0;
  auto token = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') t += static_cast<char>(bytes[pos++]);
    if (t.empty()) throw ValidationError(name + ": truncated header");
    return t;
  };
  auto number = [&]() {
    const std::string t = token();
    if (!std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      throw ValidationError(name + ": bad header field '" + t + "'");
    }
    return std::stoi(t);
  };
  Netpbm img;
  const std::string magic = token();
  if (magic == "P6") img.channels = 3;
  else if (magic == "P5") img.channels = 1;
  else throw ValidationError(name + ": only binary PPM (P6) and PGM (P5) are supported");
  img.w = number();
  img.h = number();
  const int maxval = number();
  if (img.w < 1 || img.h < 1) throw ValidationError(name + ": empty image");
  if (maxval < 1 || maxval > 255) throw ValidationError(name + ": maxval must be in 1..255");
  ++pos;  // single whitespace after maxval
  const std::size_t n = static_cast<std::size_t>(img.channels) * img.h * img.w;
  if (bytes.size() < pos + n) throw ValidationError(name + ": truncated pixel data");
  img.pixels.assign(bytes.begin() + pos, bytes.begin() + pos + n);
  if (maxval != 255)
    for (auto& v : img.pixels) v = static_cast<std::uint8_t>(std::lround(v * 255.0 / maxval));
  return img;
}

}  // namespace

NdArray read_image(const std::filesystem::path& path) {
  if (is_slk1(path)) {
    NdArray a = load_array(path);
    if (a.ndim() == 3) a = a.reshaped({1, a.dim(0), a.dim(1), a.dim(2)});
    if (a.ndim() != 4 || a.dim(0) != 1) throw ValidationError(path.string() + ": image must be [C,H,W] or [1,C,H,W]");
    return a;
  }
  const Netpbm img = parse_netpbm(read_file(path), path.string());
  NdArray out({1, img.channels, img.h, img.w});
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < img.channels; ++c)
        out[(static_cast<std::size_t>(c) * img.h + y) * img.w + x] =
            img.pixels[(static_cast<std::size_t>(y) * img.w + x) * img.channels + c] / 127.5 - 1.0;
  return out;
}

void write_image(const std::filesystem::path& path, const NdArray& image) {
  if (is_slk1(path)) {
    save_array(path, image);
    return;
  }
  NdArray a = image;
  if (a.ndim() == 4 && a.dim(0) == 1) a = a.reshaped({a.dim(1), a.dim(2), a.dim(3)});
  if (a.ndim() != 3 || (a.dim(0) != 1 && a.dim(0) != 3)) {
    throw ValidationError("write_image expects [C,H,W] with C in {1,3}, got " + shape_str(image.shape()));
  }
  const int c = a.dim(0), h = a.dim(1), w = a.dim(2);
  const std::string header = std::string(c == 3 ? "P6" : "P5") + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double v = a[(static_cast<std::size_t>(ch) * h + y) * w + x];
        if (!std::isfinite(v)) throw NumericalError("non-finite pixel in image");
        v = std::clamp(v, -1.0, 1.0);
        bytes.push_back(static_cast<std::uint8_t>(std::lround((v + 1.0) * 127.5)));
      }
  write_file(path, bytes);
}

NdArray read_mask(const std::filesystem::path& path) {
  if (is_slk1(path)) {
    NdArray a = load_array(path);
    while (a.ndim() > 2 && a.dim(0) == 1) {
      Shape s(a.shape().begin() + 1, a.shape().end());
      a = a.reshaped(s);
    }
    if (a.ndim() != 2) throw ValidationError(path.string() + ": mask must be [H,W]");
    return a;
  }
  const Netpbm img = parse_netpbm(read_file(path), path.string());
  NdArray out({img.h, img.w});
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = 0;
    for (int c = 0; c < img.channels; ++c) s += img.pixels[i * img.channels + c];
    out[i] = s / (255.0 * img.channels);
  }
  return out;
}

}  // namespace slk
