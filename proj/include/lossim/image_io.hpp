#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "lossim/image.hpp"

namespace lossim {

enum class ImageFormat { PGM, PPM, PFM };

namespace detail {

inline void skip_netpbm_whitespace(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      in.get();
    } else {
      return;
    }
  }
}

inline long read_netpbm_int(std::istream& in) {
  skip_netpbm_whitespace(in);
  long v = 0;
  if (!(in >> v)) throw std::runtime_error("image load: malformed header integer");
  return v;
}

inline bool host_is_little_endian() {
  const uint16_t probe = 1;
  uint8_t byte;
  std::memcpy(&byte, &probe, 1);
  return byte == 1;
}

}  // namespace detail

/// Binary PGM (P5), PPM (P6), or PFM (Pf/PF). Integer samples map to [0,1]
/// by dividing by maxval; PFM floats pass through untouched.
inline ImageBuffer load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image: " + path);

  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  const std::string magic{m0, m1};

  if (magic == "P5" || magic == "P6") {
    const int channels = (magic == "P6") ? 3 : 1;
    const long width = detail::read_netpbm_int(in);
    const long height = detail::read_netpbm_int(in);
    const long maxval = detail::read_netpbm_int(in);
    if (maxval <= 0 || maxval > 65535) {
      throw std::runtime_error("image load: unsupported maxval " + std::to_string(maxval));
    }
    in.get();  // single whitespace byte after maxval
    const int bytes_per_sample = maxval > 255 ? 2 : 1;
    ImageBuffer img(static_cast<int>(height), static_cast<int>(width), channels);
    std::vector<uint8_t> raw(img.size() * bytes_per_sample);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size()) {
      throw std::runtime_error("image load: truncated payload in " + path);
    }
    for (size_t i = 0; i < img.size(); ++i) {
      const unsigned v = bytes_per_sample == 1
                             ? raw[i]
                             : (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1];
      img[i] = static_cast<double>(v) / static_cast<double>(maxval);
    }
    return img;
  }

  if (magic == "Pf" || magic == "PF") {
    const int channels = (magic == "PF") ? 3 : 1;
    const long width = detail::read_netpbm_int(in);
    const long height = detail::read_netpbm_int(in);
    double scale = 0.0;
    detail::skip_netpbm_whitespace(in);
    if (!(in >> scale) || scale == 0.0) throw std::runtime_error("image load: bad PFM scale");
    in.get();
    const bool file_little = scale < 0.0;
    ImageBuffer img(static_cast<int>(height), static_cast<int>(width), channels);
    std::vector<float> raw(img.size());
    in.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * sizeof(float)));
    if (static_cast<size_t>(in.gcount()) != raw.size() * sizeof(float)) {
      throw std::runtime_error("image load: truncated PFM payload in " + path);
    }
    if (file_little != detail::host_is_little_endian()) {
      for (float& f : raw) {
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        bits = __builtin_bswap32(bits);
        std::memcpy(&f, &bits, 4);
      }
    }
    // PFM rows are stored bottom-up.
    const long w = width;
    for (long r = 0; r < height; ++r)
      for (long c = 0; c < w; ++c)
        for (int ch = 0; ch < channels; ++ch)
          img.at(static_cast<int>(height - 1 - r), static_cast<int>(c), ch) =
              raw[(static_cast<size_t>(r) * w + c) * channels + ch];
    return img;
  }

  throw std::runtime_error("image load: unsupported magic number '" + magic + "' in " + path);
}

/// Integer formats clamp to [0,1] then round half-up to maxval 255; PFM writes
/// the samples as little-endian floats unmodified.
inline void save_image(const ImageBuffer& img, const std::string& path, ImageFormat format) {
  if (format == ImageFormat::PPM && img.channels() != 3) {
    throw std::invalid_argument("save_image: PPM requires 3 channels");
  }
  if (format == ImageFormat::PGM && img.channels() != 1) {
    throw std::invalid_argument("save_image: PGM requires 1 channel");
  }
  if (format == ImageFormat::PFM && img.channels() != 1 && img.channels() != 3) {
    throw std::invalid_argument("save_image: PFM requires 1 or 3 channels");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write image: " + path);

  if (format == ImageFormat::PFM) {
    out << (img.channels() == 3 ? "PF" : "Pf") << "\n"
        << img.width() << " " << img.height() << "\n"
        << "-1.0\n";
    std::vector<float> raw(img.size());
    for (int r = 0; r < img.height(); ++r)
      for (int c = 0; c < img.width(); ++c)
        for (int ch = 0; ch < img.channels(); ++ch)
          raw[(static_cast<size_t>(img.height() - 1 - r) * img.width() + c) * img.channels() + ch] =
              static_cast<float>(img.at(r, c, ch));
    if (!detail::host_is_little_endian()) {
      for (float& f : raw) {
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        bits = __builtin_bswap32(bits);
        std::memcpy(&f, &bits, 4);
      }
    }
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size() * sizeof(float)));
  } else {
    out << (format == ImageFormat::PPM ? "P6" : "P5") << "\n"
        << img.width() << " " << img.height() << "\n255\n";
    std::vector<uint8_t> raw(img.size());
    for (size_t i = 0; i < img.size(); ++i) {
      double v = img[i];
      v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
      raw[i] = static_cast<uint8_t>(std::floor(v * 255.0 + 0.5));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

/// Picks the format from the extension: .pgm, .ppm, .pfm.
inline void save_image(const ImageBuffer& img, const std::string& path) {
  auto dot = path.find_last_of('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  if (ext == ".pgm") return save_image(img, path, ImageFormat::PGM);
  if (ext == ".ppm") return save_image(img, path, ImageFormat::PPM);
  if (ext == ".pfm") return save_image(img, path, ImageFormat::PFM);
  throw std::invalid_argument("save_image: cannot infer format from '" + path + "'");
}

}  // namespace lossim
