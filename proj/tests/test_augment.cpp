#include <gtest/gtest.h>

#include <deque>
#include <random>

#include "gground/augment.hpp"

using namespace gground;

namespace {

// Replays fixed draws in call order.
struct StubDraws {
  std::deque<double> u;
  std::deque<long> ints;
  double uniform() {
    const double v = u.front();
    u.pop_front();
    return v;
  }
  long uniform_int(long, long) {
    const long v = ints.front();
    ints.pop_front();
    return v;
  }
};

Raster solid_box_image(PixelDims d, const NormBox& b, Rgb c) {
  Raster img(d.w, d.h, Rgb{20, 20, 20});
  fill_rect(img, to_pixel_rect(b, d), c);
  return img;
}

}  // namespace

TEST(RandomCrop, WorkedExample) {
  const auto p = plan_crop({1000, 800}, {0.2, 0.25, 0.4, 0.5}, 0.7, 0.5);
  EXPECT_NEAR(p.raw_x1, 60, 1e-9);
  EXPECT_NEAR(p.raw_x2, 820, 1e-9);
  EXPECT_NEAR(p.raw_y1, 100, 1e-9);
  EXPECT_NEAR(p.raw_y2, 600, 1e-9);
  EXPECT_EQ(p.window.x0, 60);
  EXPECT_EQ(p.window.x1, 820);
  EXPECT_EQ(p.window.y0, 100);
  EXPECT_EQ(p.window.y1, 600);
  EXPECT_NEAR(p.box.x1, 140.0 / 760, 1e-12);
  EXPECT_NEAR(p.box.y1, 100.0 / 500, 1e-12);
  EXPECT_NEAR(p.box.x2, 340.0 / 760, 1e-12);
  EXPECT_NEAR(p.box.y2, 300.0 / 500, 1e-12);
}

TEST(RandomCrop, StubbedDrawsMatchPlan) {
  AugConfig cfg;
  cfg.random_crop = 1.0;
  cfg.min_crop = 0.5;
  // factor = 0.5 + u * 0.5 -> u = 0.4 gives 0.7, u = 0 gives 0.5
  StubDraws d{{0.0, 0.4, 0.0}, {}};
  Raster img(1000, 800);
  const auto r = random_crop(img, {0.2, 0.25, 0.4, 0.5}, cfg, d);
  EXPECT_EQ(r.image.width(), 760);
  EXPECT_EQ(r.image.height(), 500);
  EXPECT_NEAR(r.box.x1, 140.0 / 760, 1e-9);
  EXPECT_TRUE(r.trace.crop->applied);
}

TEST(RandomCrop, GateFailureIsIdentity) {
  AugConfig cfg;  // random_crop 0.3
  StubDraws d{{0.3}, {}};
  Raster img(40, 30, Rgb{1, 2, 3});
  const NormBox b{0.1, 0.2, 0.3, 0.4};
  const auto r = random_crop(img, b, cfg, d);
  EXPECT_EQ(r.image, img);
  EXPECT_EQ(r.box, b);
  EXPECT_FALSE(r.trace.crop->applied);
}

TEST(RandomCrop, MinCropOneIsIdentity) {
  AugConfig cfg;
  cfg.random_crop = 1.0;
  cfg.min_crop = 1.0;
  RngStream rng(1, "min-crop");
  Raster img(64, 48);
  const NormBox b{0.25, 0.25, 0.5, 0.75};
  const auto r = random_crop(img, b, cfg, rng);
  EXPECT_EQ(r.image.width(), 64);
  EXPECT_EQ(r.image.height(), 48);
  EXPECT_EQ(r.box, b);
}

TEST(RandomCrop, ContainmentSideAndColor) {
  AugConfig cfg;
  cfg.random_crop = 1.0;
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Rgb mark{250, 10, 10};
  for (int n = 0; n < 1000; ++n) {
    const PixelDims dims{static_cast<int>(40 + u(g) * 400), static_cast<int>(40 + u(g) * 300)};
    double a = u(g), b = u(g), c = u(g), e = u(g);
    const NormBox box = {std::min(a, b), std::min(c, e), std::max(a, b), std::max(c, e)};
    RngStream rng(n, "crop");
    const Raster img = n < 50 ? solid_box_image(dims, box, mark) : Raster(dims.w, dims.h);
    const auto r = random_crop(img, box, cfg, rng);
    const auto& t = *r.trace.crop;
    ASSERT_TRUE(is_valid(r.box));
    ASSERT_LE(t.window.x0, dims.w * box.x1 + 1e-9);
    ASSERT_GE(t.window.x1, dims.w * box.x2 - 1e-9);
    ASSERT_LE(t.window.y0, dims.h * box.y1 + 1e-9);
    ASSERT_GE(t.window.y1, dims.h * box.y2 - 1e-9);
    const double cx = (box.x1 + box.x2) / 2;
    const double ncx = (r.box.x1 + r.box.x2) / 2;
    if (cx < 0.5 - 1e-6) {
      ASSERT_LT(ncx, 0.5) << n;
    }
    if (n < 50) {
      const auto rect = to_pixel_rect(box, dims);
      if (rect.width() >= 3 && rect.height() >= 3) {
        const auto c2 = box_center(r.box);
        const int px = std::min(r.image.width() - 1, static_cast<int>(c2.x * r.image.width()));
        const int py = std::min(r.image.height() - 1, static_cast<int>(c2.y * r.image.height()));
        EXPECT_EQ(r.image.at(px, py), mark) << n;
      }
    }
  }
}

TEST(RandomCrop, EmptyCropIsReported) {
  EXPECT_THROW(
      {
        try {
          plan_crop({1, 1}, {0, 0, 0, 0}, 0.0, 0.0);
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), Errc::EmptyCrop);
          throw;
        }
      },
      Error);
}

TEST(RandomResize, BoundsOfWorkedExample) {
  AugConfig cfg;
  const double s_max = 0.5;
  const double s_min = 2000.0 / 4096 * s_max;
  EXPECT_EQ(s_min, 0.244140625);
  const double u_scale = (0.3 - s_min) / (s_max - s_min);
  StubDraws d{{0.0, u_scale}, {100, 200}};
  Raster img(4000, 1000);
  const auto r = random_resize_pad(img, {0.5, 0.5, 0.75, 0.8}, {2000, 1000}, cfg, d);
  const auto& t = *r.trace.resize;
  EXPECT_EQ(t.s_max, 0.5);
  EXPECT_EQ(t.s_min, 0.244140625);
  EXPECT_NEAR(t.scale, 0.3, 1e-12);
  EXPECT_EQ(t.pasted, (PixelDims{1200, 300}));
  EXPECT_EQ(r.box, (NormBox{0.35, 0.35, 0.5, 0.44}));
  EXPECT_EQ(r.image.width(), 2000);
  EXPECT_EQ(r.image.height(), 1000);
}

TEST(RandomResize, GateFailureOnSameSizeIsIdentityBox) {
  AugConfig cfg;
  cfg.random_resize = 0.0;
  RngStream rng(4, "resize");
  const NormBox b{0.13, 0.27, 0.61, 0.88};
  const auto r = random_resize_pad(Raster(300, 200), b, {300, 200}, cfg, rng);
  EXPECT_EQ(r.box, b);
  EXPECT_EQ(r.trace.resize->pos_x, 0);
  EXPECT_EQ(r.trace.resize->scale, 1.0);
}

TEST(RandomResize, InvalidConfigWhenScreenSizeTooSmall) {
  AugConfig cfg;
  cfg.max_screen_size = 1000;
  RngStream rng(4, "x");
  try {
    random_resize_pad(Raster(10, 10), {0, 0, 1, 1}, {2000, 1000}, cfg, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InvalidConfig);
  }
}

TEST(RandomResize, ScaleBoundsAndContentFidelity) {
  AugConfig cfg;
  std::mt19937_64 g(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Rgb mark{10, 240, 10};
  for (int n = 0; n < 200; ++n) {
    const PixelDims dims{static_cast<int>(50 + u(g) * 500), static_cast<int>(50 + u(g) * 500)};
    const PixelDims canvas{static_cast<int>(100 + u(g) * 300), static_cast<int>(100 + u(g) * 300)};
    const double x = u(g) * 0.6, y = u(g) * 0.6;
    const NormBox box{x, y, x + 0.3, y + 0.3};
    RngStream rng(n, "resize");
    const auto r = random_resize_pad(solid_box_image(dims, box, mark), box, canvas, cfg, rng);
    const auto& t = *r.trace.resize;
    ASSERT_LE(t.s_min, t.s_max);
    ASSERT_GE(t.scale, t.s_min);
    ASSERT_LE(t.scale, t.s_max);
    ASSERT_TRUE(is_valid(r.box));
    const auto c = box_center(r.box);
    const int px = std::min(canvas.w - 1, static_cast<int>(c.x * canvas.w));
    const int py = std::min(canvas.h - 1, static_cast<int>(c.y * canvas.h));
    if (r.box.width() * canvas.w >= 4 && r.box.height() * canvas.h >= 4) {
      EXPECT_EQ(r.image.at(px, py), mark) << n;
    }
  }
}

TEST(Augment, DeterministicForSameSeedAndItem) {
  AugConfig cfg;
  cfg.random_crop = 0.9;
  Raster img(120, 90);
  for (int y = 0; y < 90; ++y)
    for (int x = 0; x < 120; ++x) img.set(x, y, {std::uint8_t(x), std::uint8_t(y), 9});
  auto run = [&] {
    RngStream rng(77, "screen-1:e3");
    auto c = random_crop(img, {0.3, 0.3, 0.5, 0.6}, cfg, rng);
    return random_resize_pad(c.image, c.box, {100, 100}, cfg, rng);
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.box, b.box);
  EXPECT_EQ(to_json(a.trace).dump(), to_json(b.trace).dump());
}

TEST(AugConfig, Validation) {
  AugConfig c;
  c.min_crop = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.random_crop = 1.5;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_NO_THROW(AugConfig{}.validate());
}
