#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "lossim/image.hpp"
#include "lossim/image_io.hpp"
#include "test_util.hpp"

using namespace lossim;

namespace {

std::string temp_path(const std::string& name) { return "/tmp/lossim_test_" + name; }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("load P6 maps bytes through maxval") {
  const std::string path = temp_path("pixel.ppm");
  {
    std::ofstream out(path, std::ios::binary);
    out << "P6\n1 1\n255\n";
    const unsigned char px[3] = {255, 0, 128};
    out.write(reinterpret_cast<const char*>(px), 3);
  }
  const ImageBuffer img = load_image(path);
  CHECK(img.height() == 1);
  CHECK(img.width() == 1);
  CHECK(img.channels() == 3);
  CHECK(img.at(0, 0, 0) == doctest::Approx(1.0));
  CHECK(img.at(0, 0, 1) == doctest::Approx(0.0));
  CHECK(img.at(0, 0, 2) == doctest::Approx(128.0 / 255.0));
  std::remove(path.c_str());
}

TEST_CASE("load all-zero P5") {
  const std::string path = temp_path("zeros.pgm");
  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n3 2\n255\n";
    const char zeros[6] = {};
    out.write(zeros, 6);
  }
  const ImageBuffer img = load_image(path);
  CHECK(img.channels() == 1);
  for (size_t i = 0; i < img.size(); ++i) CHECK(img[i] == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("PFM round trip is byte identical") {
  // Samples drawn as floats so double->float on save is lossless.
  ImageBuffer img = test::random_image(4, 4, 3, 42);
  for (size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(img[i]);
  const std::string a = temp_path("rt_a.pfm"), b = temp_path("rt_b.pfm");
  save_image(img, a, ImageFormat::PFM);
  const ImageBuffer loaded = load_image(a);
  for (size_t i = 0; i < img.size(); ++i) CHECK(loaded[i] == img[i]);
  save_image(loaded, b, ImageFormat::PFM);
  CHECK(slurp(a) == slurp(b));
  std::remove(a.c_str());
  std::remove(b.c_str());
}

TEST_CASE("integer save clamps and rounds half-up") {
  ImageBuffer img(1, 3, 1);
  img.at(0, 0) = 1.0;
  img.at(0, 1) = -0.2;
  img.at(0, 2) = 0.5;  // 127.5 rounds up to 128
  const std::string path = temp_path("round.pgm");
  save_image(img, path, ImageFormat::PGM);
  const std::string bytes = slurp(path);
  const size_t payload = bytes.size() - 3;
  CHECK(static_cast<unsigned char>(bytes[payload + 0]) == 255);
  CHECK(static_cast<unsigned char>(bytes[payload + 1]) == 0);
  CHECK(static_cast<unsigned char>(bytes[payload + 2]) == 128);
  std::remove(path.c_str());
}

TEST_CASE("format/channel mismatch rejected") {
  ImageBuffer gray(2, 2, 1);
  CHECK_THROWS_AS(save_image(gray, temp_path("x.ppm"), ImageFormat::PPM), std::invalid_argument);
  ImageBuffer rgb(2, 2, 3);
  CHECK_THROWS_AS(save_image(rgb, temp_path("x.pgm"), ImageFormat::PGM), std::invalid_argument);
}

TEST_CASE("unsupported magic and truncated payload rejected") {
  const std::string path = temp_path("bad.ppm");
  {
    std::ofstream out(path, std::ios::binary);
    out << "P3\n1 1\n255\n255 0 0\n";
  }
  CHECK_THROWS(load_image(path));
  {
    std::ofstream out(path, std::ios::binary);
    out << "P6\n2 2\n255\n";
    out << "xy";  // 12 bytes expected
  }
  CHECK_THROWS(load_image(path));
  std::remove(path.c_str());
}

TEST_CASE("extract_patches identity and counting") {
  const ImageBuffer img = test::random_image(31, 31, 3, 7);
  const auto one = extract_patches(img, 31, 1);
  REQUIRE(one.size() == 1);
  for (size_t i = 0; i < img.size(); ++i) CHECK(one[0][i] == img[i]);

  const ImageBuffer big = test::random_image(64, 64, 1, 8);
  const auto nine = extract_patches(big, 31, 16);
  CHECK(nine.size() == 9);  // offsets {0,16,32} per axis

  CHECK_THROWS_AS(extract_patches(test::random_image(30, 30, 1, 9), 31, 1), std::invalid_argument);
  CHECK_THROWS_AS(extract_patches(big, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(extract_patches(big, 8, 0), std::invalid_argument);
}

TEST_CASE("patch count formula and verbatim windows") {
  const ImageBuffer img = test::random_image(37, 41, 3, 11);
  for (int size : {5, 9}) {
    for (int stride : {1, 3, 7}) {
      const auto grid = PatchGrid::make(img.height(), img.width(), size, stride);
      const size_t expected = ((img.height() - size) / stride + 1) *
                              ((img.width() - size) / stride + 1);
      CHECK(grid.count() == expected);
    }
  }
  const auto patches = extract_patches(img, 9, 7);
  const auto grid = PatchGrid::make(37, 41, 9, 7);
  size_t idx = 0;
  for (int r : grid.row_offsets)
    for (int c : grid.col_offsets) {
      for (int pr = 0; pr < 9; ++pr)
        for (int pc = 0; pc < 9; ++pc)
          for (int ch = 0; ch < 3; ++ch)
            REQUIRE(patches[idx].at(pr, pc, ch) == img.at(r + pr, c + pc, ch));
      ++idx;
    }
}
