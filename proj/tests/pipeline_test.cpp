#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "lossim/metrics.hpp"
#include "lossim/pipeline.hpp"
#include "test_util.hpp"

using namespace lossim;

TEST_CASE("apply_noise: zero params, determinism, bounds") {
  const ImageBuffer img = test::random_image(16, 16, 3, 1);
  const ImageBuffer same = apply_noise(img, 0.0, 0.0, 7);
  for (size_t i = 0; i < img.size(); ++i) CHECK(same[i] == img[i]);

  const ImageBuffer a = apply_noise(img, 0.005, 0.0001, 7);
  const ImageBuffer b = apply_noise(img, 0.005, 0.0001, 7);
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  const ImageBuffer c = apply_noise(img, 0.005, 0.0001, 8);
  bool any_diff = false;
  for (size_t i = 0; i < a.size(); ++i) any_diff |= (a[i] != c[i]);
  CHECK(any_diff);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] >= 0.0);
    CHECK(a[i] <= 1.0);
  }
  CHECK_THROWS_AS(apply_noise(img, -0.1, 0.0, 1), std::invalid_argument);
}

TEST_CASE("noise matches analytic variance on a constant image") {
  const ImageBuffer flat(256, 256, 3, 0.5);
  const ImageBuffer noisy = apply_noise(flat, 0.005, 0.0001, 11);
  // variance 0.005*0.5 + 0.0001 = 0.0026 -> PSNR ~ 25.85 dB
  CHECK(psnr(noisy, flat) == doctest::Approx(25.85).epsilon(0.006));
}

TEST_CASE("noise variance fits a*y+b on an intensity wedge") {
  const double a = 0.005, b = 0.0001;
  for (int step = 0; step < 10; ++step) {
    const double y = 0.05 + 0.09 * step;  // keep clipping negligible
    const ImageBuffer flat(500, 500, 1, y);
    const ImageBuffer noisy = apply_noise(flat, a, b, 100 + step);
    double var = 0.0;
    for (size_t i = 0; i < flat.size(); ++i) {
      const double d = noisy[i] - flat[i];
      var += d * d;
    }
    var /= static_cast<double>(flat.size());
    CHECK(std::abs(var - (a * y + b)) / (a * y + b) < 0.05);
  }
}

TEST_CASE("poisson noise model keeps the same second moments") {
  const ImageBuffer flat(300, 300, 1, 0.4);
  const ImageBuffer noisy = apply_noise(flat, 0.005, 0.0001, 13, NoiseModel::Poisson);
  double mean = 0.0, var = 0.0;
  for (size_t i = 0; i < flat.size(); ++i) mean += noisy[i];
  mean /= static_cast<double>(flat.size());
  for (size_t i = 0; i < flat.size(); ++i) var += (noisy[i] - mean) * (noisy[i] - mean);
  var /= static_cast<double>(flat.size());
  CHECK(mean == doctest::Approx(0.4).epsilon(0.01));
  CHECK(var == doctest::Approx(0.005 * 0.4 + 0.0001).epsilon(0.05));
}

TEST_CASE("bayer mosaic: gray fixed point and pattern phase") {
  const ImageBuffer gray(4, 4, 3, 0.3);
  const ImageBuffer mosaic = mosaic_bayer(gray);
  for (size_t i = 0; i < mosaic.size(); ++i) CHECK(mosaic[i] == doctest::Approx(0.3));

  ImageBuffer red(4, 4, 3);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) red.at(r, c, 0) = 0.9;
  const ImageBuffer rm = mosaic_bayer(red, BayerPattern::RGGB);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      if (r % 2 == 0 && c % 2 == 0) {
        CHECK(rm.at(r, c) == doctest::Approx(0.9));
      } else {
        CHECK(rm.at(r, c) == 0.0);
      }
    }

  CHECK_THROWS_AS(mosaic_bayer(ImageBuffer(4, 4, 1)), std::invalid_argument);
  CHECK_THROWS_AS(mosaic_bayer(ImageBuffer(3, 4, 3)), std::invalid_argument);
}

TEST_CASE("bayer mosaic of a ramp matches per-site enumeration") {
  ImageBuffer img(4, 4, 3);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = (r * 4 + c + ch * 0.1) / 20.0;
  const ImageBuffer mosaic = mosaic_bayer(img, BayerPattern::RGGB);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      const int ch = (r % 2 == 0) ? (c % 2 == 0 ? 0 : 1) : (c % 2 == 0 ? 1 : 2);
      CHECK(mosaic.at(r, c) == doctest::Approx(img.at(r, c, ch)));
    }
}

TEST_CASE("demosaic: constants round trip, known samples preserved") {
  ImageBuffer tint(6, 6, 3);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) {
      tint.at(r, c, 0) = 0.2;
      tint.at(r, c, 1) = 0.5;
      tint.at(r, c, 2) = 0.8;
    }
  for (BayerPattern p : {BayerPattern::RGGB, BayerPattern::BGGR, BayerPattern::GRBG,
                         BayerPattern::GBRG}) {
    const ImageBuffer rgb = demosaic_bilinear(mosaic_bayer(tint, p), p);
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 6; ++c) {
        CHECK(rgb.at(r, c, 0) == doctest::Approx(0.2));
        CHECK(rgb.at(r, c, 1) == doctest::Approx(0.5));
        CHECK(rgb.at(r, c, 2) == doctest::Approx(0.8));
      }
  }

  const ImageBuffer img = test::random_image(8, 8, 3, 21);
  const ImageBuffer mosaic = mosaic_bayer(img);
  const ImageBuffer rgb = demosaic_bilinear(mosaic);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) CHECK(rgb.at(r, c, bayer_channel(BayerPattern::RGGB, r, c)) ==
                                      mosaic.at(r, c));
  CHECK_THROWS_AS(demosaic_bilinear(img), std::invalid_argument);
}

TEST_CASE("demosaic interpolation matches neighbor-average enumeration on a 4x4 ramp") {
  ImageBuffer mosaic(4, 4, 1);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) mosaic.at(r, c) = (r * 4 + c) / 16.0;
  const ImageBuffer rgb = demosaic_bilinear(mosaic, BayerPattern::RGGB);

  auto avg_of = [&](std::vector<std::pair<int, int>> sites) {
    double sum = 0.0;
    for (auto [r, c] : sites) sum += mosaic.at(r, c);
    return sum / sites.size();
  };
  // green at the R site (0,0): in-bounds cross neighbors (0,1) and (1,0)
  CHECK(rgb.at(0, 0, 1) == doctest::Approx(avg_of({{0, 1}, {1, 0}})));
  // blue at (0,0): only in-bounds diagonal is (1,1)
  CHECK(rgb.at(0, 0, 2) == doctest::Approx(mosaic.at(1, 1)));
  // red at the B site (1,1): four diagonals
  CHECK(rgb.at(1, 1, 0) == doctest::Approx(avg_of({{0, 0}, {0, 2}, {2, 0}, {2, 2}})));
  // red at the G site (1,2): vertical same-color neighbors
  CHECK(rgb.at(1, 2, 0) == doctest::Approx(avg_of({{0, 2}, {2, 2}})));
  // blue at the G site (1,2): horizontal same-color neighbors
  CHECK(rgb.at(1, 2, 2) == doctest::Approx(avg_of({{1, 1}, {1, 3}})));
  // green at the B site (1,1): full cross
  CHECK(rgb.at(1, 1, 1) == doctest::Approx(avg_of({{0, 1}, {2, 1}, {1, 0}, {1, 2}})));
}

TEST_CASE("resample: constants, block mean, affine reproduction") {
  const ImageBuffer flat(8, 8, 3, 0.6);
  const ImageBuffer down = resample_bilinear(flat, 2, ResampleDirection::Down);
  CHECK(down.height() == 4);
  for (size_t i = 0; i < down.size(); ++i) CHECK(down[i] == doctest::Approx(0.6));
  const ImageBuffer up = resample_bilinear(down, 2, ResampleDirection::Up);
  CHECK(up.height() == 8);
  for (size_t i = 0; i < up.size(); ++i) CHECK(up[i] == doctest::Approx(0.6));

  ImageBuffer blocks(2, 2, 1);
  blocks.at(0, 0) = 0.0;
  blocks.at(0, 1) = 0.0;
  blocks.at(1, 0) = 1.0;
  blocks.at(1, 1) = 1.0;
  CHECK(resample_bilinear(blocks, 2, ResampleDirection::Down).at(0, 0) == doctest::Approx(0.5));

  ImageBuffer ramp(16, 16, 1);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) ramp.at(r, c) = c / 15.0;
  const ImageBuffer rt = resample_bilinear(resample_bilinear(ramp, 2, ResampleDirection::Down), 2,
                                           ResampleDirection::Up);
  for (int r = 0; r < 16; ++r)
    for (int c = 2; c < 14; ++c) CHECK(rt.at(r, c) == doctest::Approx(ramp.at(r, c)).epsilon(1e-12));

  CHECK_THROWS_AS(resample_bilinear(ImageBuffer(9, 8, 1), 2, ResampleDirection::Down),
                  std::invalid_argument);
  CHECK_THROWS_AS(resample_bilinear(flat, 1, ResampleDirection::Down), std::invalid_argument);
}

TEST_CASE("make_dataset: counts, target passthrough, determinism") {
  std::vector<ImageBuffer> cleans;
  cleans.push_back(test::random_image(64, 64, 3, 31));
  CorruptionSpec spec;
  spec.seed = 5;

  const auto pairs = make_dataset(cleans, spec, 31, 16);
  REQUIRE(pairs.size() == 9);
  const auto clean_patches = extract_patches(cleans[0], 31, 16);
  for (size_t i = 0; i < pairs.size(); ++i)
    for (size_t s = 0; s < pairs[i].target.size(); ++s)
      CHECK(pairs[i].target[s] == clean_patches[i][s]);

  const auto again = make_dataset(cleans, spec, 31, 16);
  for (size_t i = 0; i < pairs.size(); ++i)
    for (size_t s = 0; s < pairs[i].input.size(); ++s)
      CHECK(pairs[i].input[s] == again[i].input[s]);

  // zero-noise spec on a constant image: only rounding in the demosaic averages
  CorruptionSpec clean_spec;
  clean_spec.a = 0.0;
  clean_spec.b = 0.0;
  std::vector<ImageBuffer> gray{ImageBuffer(40, 40, 3, 0.4)};
  const auto lossless = make_dataset(gray, clean_spec, 31, 9);
  for (const auto& pair : lossless)
    for (size_t s = 0; s < pair.input.size(); ++s)
      CHECK(pair.input[s] == doctest::Approx(pair.target[s]).epsilon(1e-15));
}

TEST_CASE("superres corruption is down-then-up") {
  std::vector<ImageBuffer> cleans{test::random_image(32, 32, 3, 41)};
  CorruptionSpec spec;
  spec.kind = CorruptionKind::SuperRes;
  spec.scale = 2;
  const auto pairs = make_dataset(cleans, spec, 31, 31);
  REQUIRE(pairs.size() == 1);
  const ImageBuffer expected = resample_bilinear(
      resample_bilinear(cleans[0], 2, ResampleDirection::Down), 2, ResampleDirection::Up);
  for (int r = 0; r < 31; ++r)
    for (int c = 0; c < 31; ++c)
      for (int ch = 0; ch < 3; ++ch) CHECK(pairs[0].input.at(r, c, ch) == expected.at(r, c, ch));
}

TEST_CASE("external pairs dataset and manifest round trip") {
  const ImageBuffer in = test::random_image(40, 40, 3, 51);
  const ImageBuffer tg = test::random_image(40, 40, 3, 52);
  const auto pairs = make_dataset_external({in}, {tg}, 31, 9);
  CHECK(pairs.size() == 4);
  CHECK_THROWS_AS(make_dataset_external({in}, {tg, in}, 31, 9), std::invalid_argument);
  CHECK_THROWS_AS(make_dataset_external({in}, {test::random_image(20, 40, 3, 53)}, 15, 5),
                  std::invalid_argument);

  const std::string path = "/tmp/lossim_test_manifest.txt";
  write_manifest(path, {{"a.ppm", "b.ppm"}, {"c.pfm", "d.pfm"}});
  const auto entries = read_manifest(path);
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].first == "a.ppm");
  CHECK(entries[1].second == "d.pfm");
  std::remove(path.c_str());
}
