#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "ocumap/errors.hpp"
#include "ocumap/imaging.hpp"

using namespace ocumap;
using namespace ocumap::testing;

TEST_CASE("image layout is row-major interleaved") {
  Image im(3, 2, 2);
  im.at(2, 1, 1) = 5.0;
  CHECK(im.data()[(1 * 3 + 2) * 2 + 1] == 5.0);
  CHECK(im.pixel(2, 1)[1] == 5.0);
  const Image s = im.channel_slice(1, 1);
  CHECK(s.channels() == 1);
  CHECK(s.at(2, 1) == 5.0);
  CHECK_THROWS_AS(im.channel_slice(1, 2), DomainError);
}

TEST_CASE("frame and depth wrappers check the channel count") {
  CHECK_THROWS_AS(Frame(Image(2, 2, 1)), DomainError);
  CHECK_THROWS_AS(DepthMap(Image(2, 2, 3)), DomainError);
  Frame f(2, 2, 0.5);
  CHECK(f.in_range());
  f.at(0, 0, 0) = 1.5;
  CHECK_FALSE(f.in_range());
}

TEST_CASE("bilinear sampling of an affine field is exact") {
  Image im(7, 5, 2);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) {
      im.at(x, y, 0) = 2.0 * x - 3.0 * y + 1.0;
      im.at(x, y, 1) = 0.5 * x + y;
    }
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 6), v(0, 4);
  double out[2];
  for (int i = 0; i < 200; ++i) {
    const double a = u(rng), b = v(rng);
    REQUIRE(bilinear_sample(im, a, b, out));
    CHECK(out[0] == doctest::Approx(2.0 * a - 3.0 * b + 1.0).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(0.5 * a + b).epsilon(1e-12));
  }
}

TEST_CASE("bilinear sampling at the borders") {
  Image im(4, 3, 1);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x) im.at(x, y) = 10 * y + x;
  bool in = false;
  CHECK(bilinear_sample(im, 3.0, 2.0, &in) == 23.0);
  CHECK(in);
  CHECK(bilinear_sample(im, 0.0, 0.0, &in) == 0.0);
  CHECK(bilinear_sample(im, 3.0 + 1e-9, 1.0, &in) == 0.0);
  CHECK_FALSE(in);
  CHECK(bilinear_sample(im, -1e-12, 1.0, &in) == 0.0);
  CHECK_FALSE(in);
  CHECK_THROWS_AS(bilinear_sample(Image(2, 2, 3), 0.5, 0.5), DomainError);
}

TEST_CASE("forward-difference gradients") {
  std::mt19937_64 rng(2);
  const Image im = random_image(rng, 6, 5, 3);
  const Gradients g = gradients(im);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 6; ++x)
      for (int c = 0; c < 3; ++c) {
        const double dx = x + 1 < 6 ? im.at(x + 1, y, c) - im.at(x, y, c) : 0.0;
        const double dy = y + 1 < 5 ? im.at(x, y + 1, c) - im.at(x, y, c) : 0.0;
        CHECK(g.dx.at(x, y, c) == dx);
        CHECK(g.dy.at(x, y, c) == dy);
      }
  CHECK_THROWS_AS(gradients(Image(1, 5, 1)), DomainError);
}

TEST_CASE("gaussian blur keeps constants and mass") {
  Image flat(9, 7, 3, 0.4);
  const Image b = gaussian_blur(flat, 1.3);
  for (const double v : b.data()) CHECK(v == doctest::Approx(0.4).epsilon(1e-12));

  Image impulse(31, 31, 1, 0.0);
  impulse.at(15, 15) = 1.0;
  const Image spread = gaussian_blur(impulse, 2.0);
  double sum = 0.0;
  for (const double v : spread.data()) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(spread.at(15, 15) > spread.at(16, 15));
  CHECK(spread.at(16, 15) == doctest::Approx(spread.at(15, 16)).epsilon(1e-14));

  CHECK(gaussian_blur(impulse, 0.0).data()[15 * 31 + 15] == 1.0);
  CHECK_THROWS_AS(gaussian_blur(impulse, -1.0), DomainError);
}

TEST_CASE("segmentation masks and one-hot encoding") {
  SegMap seg(3, 1);
  seg.set(0, 0, Label::eyelid);
  seg.set(1, 0, Label::sclera);
  seg.set(2, 0, Label::cornea);
  const PixelMask m = eyelid_mask(seg);
  CHECK_FALSE(m(0, 0));
  CHECK(m(1, 0));
  CHECK(m(2, 0));
  CHECK(label_mask(seg, Label::cornea).count() == 1);
  const Image oh = seg.onehot();
  CHECK(oh.channels() == 3);
  CHECK(oh.at(0, 0, 0) == 1.0);
  CHECK(oh.at(1, 0, 1) == 1.0);
  CHECK(oh.at(2, 0, 2) == 1.0);
  CHECK(oh.at(2, 0, 0) == 0.0);
  CHECK(seg.count(Label::sclera) == 1);
  CHECK(std::string(label_name(Label::cornea)) == "cornea");
}

TEST_CASE("mask algebra") {
  std::mt19937_64 rng(3);
  const PixelMask a = random_mask(rng, 8, 8, 0.5), b = random_mask(rng, 8, 8, 0.5);
  const PixelMask both = a & b, either = a | b;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      CHECK(both(x, y) == (a(x, y) && b(x, y)));
      CHECK(either(x, y) == (a(x, y) || b(x, y)));
    }
  CHECK(PixelMask(4, 4, true).count() == 16);
}
