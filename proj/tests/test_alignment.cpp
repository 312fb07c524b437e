#include "facecloak/alignment.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "facecloak/rng.hpp"

namespace fc = facecloak;

namespace {

// Independent similarity fit: solve the 4x4 normal equations of
// min sum || [a -b; b a] p + t - q ||^2 directly.
fc::Similarity fit_oracle(const fc::Landmarks& src, const fc::Landmarks& dst) {
  double spp = 0, spx = 0, spy = 0;
  double rhs_a = 0, rhs_b = 0, rhs_x = 0, rhs_y = 0;
  for (int i = 0; i < 5; ++i) {
    const double px = src[i][0], py = src[i][1];
    const double qx = dst[i][0], qy = dst[i][1];
    spp += px * px + py * py;
    spx += px;
    spy += py;
    rhs_a += px * qx + py * qy;
    rhs_b += px * qy - py * qx;
    rhs_x += qx;
    rhs_y += qy;
  }
  Eigen::Matrix4d m;
  m << spp, 0, spx, spy,
       0, spp, -spy, spx,
       spx, -spy, 5, 0,
       spy, spx, 0, 5;
  Eigen::Vector4d rhs(rhs_a, rhs_b, rhs_x, rhs_y);
  Eigen::Vector4d sol = m.fullPivLu().solve(rhs);
  fc::Similarity s;
  s.a = static_cast<float>(sol[0]);
  s.b = static_cast<float>(sol[1]);
  s.tx = static_cast<float>(sol[2]);
  s.ty = static_cast<float>(sol[3]);
  return s;
}

fc::FaceImage gradient_image(int h, int w) {
  fc::FaceImage img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float* p = img.px(y, x);
      p[0] = 0.2f + 0.6f * x / w;
      p[1] = 0.2f + 0.6f * y / h;
      p[2] = 0.5f;
    }
  return img;
}

TEST(Alignment, FitMatchesOracleOnRandomConfigurations) {
  fc::Rng rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    fc::Landmarks src, dst;
    for (int i = 0; i < 5; ++i) {
      src[i] = {static_cast<float>(rng.uniform() * 100),
                static_cast<float>(rng.uniform() * 100)};
      dst[i] = {static_cast<float>(rng.uniform() * 100),
                static_cast<float>(rng.uniform() * 100)};
    }
    auto got = fc::fit_similarity(src, dst);
    auto want = fit_oracle(src, dst);
    EXPECT_NEAR(got.a, want.a, 1e-4);
    EXPECT_NEAR(got.b, want.b, 1e-4);
    EXPECT_NEAR(got.tx, want.tx, 1e-3);
    EXPECT_NEAR(got.ty, want.ty, 1e-3);
  }
}

TEST(Alignment, FitRecoversExactSimilarity) {
  const fc::Similarity truth{0.9f, 0.3f, 12.f, -5.f};
  fc::Landmarks src = fc::canonical_landmarks(112);
  fc::Landmarks dst;
  for (int i = 0; i < 5; ++i) {
    auto q = truth.apply(src[i][0], src[i][1]);
    dst[i] = {q[0], q[1]};
  }
  auto got = fc::fit_similarity(src, dst);
  EXPECT_NEAR(got.a, truth.a, 1e-5);
  EXPECT_NEAR(got.b, truth.b, 1e-5);
  EXPECT_NEAR(got.tx, truth.tx, 1e-3);
  EXPECT_NEAR(got.ty, truth.ty, 1e-3);
}

TEST(Alignment, InverseComposesToIdentity) {
  const fc::Similarity s{1.3f, -0.4f, 7.f, 3.f};
  const auto inv = s.inverse();
  for (float x : {0.f, 10.f, -4.f})
    for (float y : {0.f, 5.f, 20.f}) {
      auto fwd = s.apply(x, y);
      auto back = inv.apply(fwd[0], fwd[1]);
      EXPECT_NEAR(back[0], x, 1e-4);
      EXPECT_NEAR(back[1], y, 1e-4);
    }
}

TEST(Alignment, LandmarksAtTemplateGiveIdentityCopy) {
  auto img = gradient_image(112, 112);
  fc::stamp_landmarks(img, fc::canonical_landmarks(112), 1);
  auto aligned = fc::align_face_with_landmarks(img, fc::canonical_landmarks(112), 112);
  EXPECT_EQ(aligned.image.data, img.data);
  EXPECT_FLOAT_EQ(aligned.record.similarity[0], 1.f);
  EXPECT_FLOAT_EQ(aligned.record.similarity[1], 0.f);
}

TEST(Alignment, TranslatedLandmarksRecoverNegativeTranslation) {
  auto img = gradient_image(160, 160);
  auto lm = fc::canonical_landmarks(112);
  for (auto& p : lm) {
    p[0] += 10.f;
    p[1] += 10.f;
  }
  auto aligned = fc::align_face_with_landmarks(img, lm, 112);
  auto oracle = fit_oracle(lm, fc::canonical_landmarks(112));
  EXPECT_NEAR(aligned.record.similarity[2], oracle.tx, 1e-3);
  EXPECT_NEAR(aligned.record.similarity[3], oracle.ty, 1e-3);
  EXPECT_NEAR(aligned.record.similarity[2], -10.f, 0.5f);
  EXPECT_NEAR(aligned.record.similarity[3], -10.f, 0.5f);
  EXPECT_NEAR(aligned.record.similarity[0], 1.f, 1e-4f);
  EXPECT_NEAR(aligned.record.similarity[1], 0.f, 1e-4f);
}

TEST(Alignment, MarkerPathRecoversTranslationWithinPixelQuantization) {
  auto img = gradient_image(160, 160);
  auto lm = fc::canonical_landmarks(112);
  for (auto& p : lm) {
    p[0] += 10.f;
    p[1] += 10.f;
  }
  fc::stamp_landmarks(img, lm, 1);
  auto faces = fc::detect_marker_faces(img);
  ASSERT_EQ(faces.size(), 1u);
  auto aligned = fc::align_face(img, 112);
  // the fit must match the independent oracle on the detected (pixel-grid)
  // landmarks; the absolute translation carries the stamping quantization
  auto oracle = fit_oracle(faces[0], fc::canonical_landmarks(112));
  EXPECT_NEAR(aligned.record.similarity[2], oracle.tx, 1e-3);
  EXPECT_NEAR(aligned.record.similarity[3], oracle.ty, 1e-3);
  EXPECT_NEAR(aligned.record.similarity[2], -10.f, 1.f);
  EXPECT_NEAR(aligned.record.similarity[3], -10.f, 1.f);
  EXPECT_NEAR(aligned.record.similarity[0], 1.f, 0.02f);
  EXPECT_NEAR(aligned.record.similarity[1], 0.f, 0.02f);
}

TEST(Alignment, AllBlackImageRejected) {
  fc::FaceImage img(64, 64);
  try {
    fc::align_face(img, 112);
    FAIL() << "expected rejection";
  } catch (const fc::Error& e) {
    EXPECT_EQ(e.code(), fc::Errc::no_face_detected);
  }
}

TEST(Alignment, MarkerCountNotMultipleOfFiveRejected) {
  auto img = gradient_image(64, 64);
  for (int i = 0; i < 7; ++i) fc::stamp_marker(img, 5.f + 7.f * i, 30.f, 0);
  EXPECT_THROW(fc::detect_marker_faces(img), fc::Error);
}

TEST(Alignment, DetectorOrdersLandmarksByGeometry) {
  auto img = gradient_image(200, 200);
  auto lm = fc::canonical_landmarks(112);
  for (auto& p : lm) {
    p[0] += 30.f;
    p[1] += 50.f;
  }
  fc::stamp_landmarks(img, lm, 1);
  auto faces = fc::detect_marker_faces(img);
  ASSERT_EQ(faces.size(), 1u);
  for (int i = 0; i < 5; ++i) {
    EXPECT_NEAR(faces[0][i][0], std::round(lm[i][0]), 0.6f) << "landmark " << i;
    EXPECT_NEAR(faces[0][i][1], std::round(lm[i][1]), 0.6f) << "landmark " << i;
  }
}

TEST(Alignment, LargestFaceWinsWhenSeveralPresent) {
  auto img = gradient_image(300, 300);
  // small face, upper left
  fc::Landmarks small;
  auto canon = fc::canonical_landmarks(112);
  for (int i = 0; i < 5; ++i) small[i] = {canon[i][0] * 0.5f + 10.f, canon[i][1] * 0.5f + 10.f};
  // big face, lower right
  fc::Landmarks big;
  for (int i = 0; i < 5; ++i) big[i] = {canon[i][0] * 1.5f + 120.f, canon[i][1] * 1.5f + 120.f};
  fc::stamp_landmarks(img, small, 1);
  fc::stamp_landmarks(img, big, 1);
  auto faces = fc::detect_marker_faces(img);
  ASSERT_EQ(faces.size(), 2u);
  auto aligned = fc::align_face(img, 112);
  // the 1.5x face maps onto the template with scale ~ 1/1.5
  fc::Similarity s;
  s.a = aligned.record.similarity[0];
  s.b = aligned.record.similarity[1];
  EXPECT_NEAR(s.scale(), 1.f / 1.5f, 0.03f);
}

TEST(Alignment, IdempotentAfterRealWarp) {
  auto img = gradient_image(160, 160);
  auto lm = fc::canonical_landmarks(112);
  for (auto& p : lm) {
    p[0] += 13.f;
    p[1] += 21.f;
  }
  fc::stamp_landmarks(img, lm, 2);
  auto once = fc::align_face(img, 112);
  auto twice = fc::align_face(once.image, 112);
  ASSERT_EQ(once.image.data.size(), twice.image.data.size());
  float worst = 0.f;
  for (size_t i = 0; i < once.image.data.size(); ++i) {
    worst = std::max(worst, std::abs(once.image.data[i] - twice.image.data[i]));
  }
  EXPECT_LE(worst, 1.f / 255.f);
}

TEST(Alignment, WarpClampsAtBorders) {
  auto img = gradient_image(20, 20);
  fc::Similarity s;
  s.tx = 30.f;  // shifts sampling far outside the source
  auto out = fc::warp_similarity(img, s, 20, 20);
  for (float v : out.data) EXPECT_TRUE(std::isfinite(v));
}

// Direct (non-separated) evaluation of the antialiased triangle filter. The
// production path applies it one axis at a time; for a linear filter the two
// must agree exactly up to round-off.
float triangle_resample_oracle(const fc::FaceImage& img, int oh, int ow, int y, int x, int c) {
  const double sy = static_cast<double>(img.height) / oh;
  const double sx = static_cast<double>(img.width) / ow;
  const double fy = std::max(sy, 1.0), fx = std::max(sx, 1.0);
  const double cy = (y + 0.5) * sy, cx = (x + 0.5) * sx;
  double acc = 0, wsum = 0;
  for (int iy = 0; iy < img.height; ++iy)
    for (int ix = 0; ix < img.width; ++ix) {
      const double wy = std::max(0.0, 1.0 - std::abs((iy + 0.5 - cy) / fy));
      const double wx = std::max(0.0, 1.0 - std::abs((ix + 0.5 - cx) / fx));
      acc += wy * wx * img.px(iy, ix)[c];
      wsum += wy * wx;
    }
  return static_cast<float>(acc / wsum);
}

TEST(Alignment, ResizeMatchesDirectTriangleFilter) {
  fc::Rng rng(5);
  for (auto [ih, iw, oh, ow] : {std::array<int, 4>{4, 4, 2, 2},
                                std::array<int, 4>{9, 7, 4, 3},
                                std::array<int, 4>{5, 5, 8, 8}}) {
    fc::FaceImage img(ih, iw);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());
    auto out = fc::resize_image(img, oh, ow);
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x)
        for (int c = 0; c < 3; ++c) {
          EXPECT_NEAR(out.px(y, x)[c], triangle_resample_oracle(img, oh, ow, y, x, c), 1e-5)
              << ih << "x" << iw << " -> " << oh << "x" << ow;
        }
  }
}

TEST(Alignment, ResizeLeavesConstantImagesConstant) {
  fc::FaceImage img(6, 11);
  for (auto& v : img.data) v = 0.37f;
  auto out = fc::resize_image(img, 5, 9);
  for (float v : out.data) EXPECT_NEAR(v, 0.37f, 1e-6);
}

TEST(Alignment, ResizeIdentityIsExact) {
  auto img = gradient_image(9, 7);
  auto same = fc::resize_image(img, 9, 7);
  EXPECT_EQ(same.data, img.data);
}

}  // namespace
