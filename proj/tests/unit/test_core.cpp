#include <gtest/gtest.h>

#include <random>

#include "gimt/core/codec.hpp"
#include "gimt/core/error.hpp"
#include "gimt/core/image.hpp"
#include "gimt/core/mask_ops.hpp"
#include "gimt/core/polygon.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace gimt {
namespace {

template <typename Fn>
Errc CodeOf(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no gimt::Error thrown";
  return Errc::kIo;
}

TEST(ImageFrame, RejectsWrongBufferLength) {
  EXPECT_EQ(CodeOf([] { ImageFrame(2, 2, std::vector<std::uint8_t>(11)); }), Errc::kShape);
  EXPECT_EQ(CodeOf([] { ImageFrame(0, 2, {}); }), Errc::kShape);
}

TEST(ImageFrame, CaptureSizeConstants) {
  EXPECT_EQ(kCaptureWidth, 640);
  EXPECT_EQ(kCaptureHeight, 480);
}

TEST(BinaryMask, RejectsNonBinaryValues) {
  EXPECT_EQ(CodeOf([] { BinaryMask(2, 1, {0, 2}); }), Errc::kArgument);
}

TEST(SoftMask, RejectsOutOfRange) {
  EXPECT_THROW(SoftMask(2, 1, std::vector<float>{0.0f, 1.5f}), Error);
  EXPECT_THROW(SoftMask(1, 1, std::vector<float>{-0.1f}), Error);
}

TEST(Rasterize, EmptyRingListIsAllZero) {
  EXPECT_EQ(RasterizePolygons({}, 5, 4).popcount(), 0u);
}

TEST(Rasterize, AxisAlignedSquareCoversNinePixels) {
  PolygonAnnotation square{{{{1, 1}, {4, 1}, {4, 4}, {1, 4}}}};
  const auto m = RasterizePolygons(square, 6, 6);
  EXPECT_EQ(m.popcount(), 9u);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 6; ++x) {
      EXPECT_EQ(m.at(x, y), (x >= 1 && x <= 3 && y >= 1 && y <= 3) ? 1 : 0);
    }
  }
}

TEST(Rasterize, DisjointSquaresUnionCountsAdd) {
  Ring a{{0, 0}, {3, 0}, {3, 3}, {0, 3}};
  Ring b{{5, 5}, {8, 5}, {8, 7}, {5, 7}};
  const auto ma = RasterizePolygons({{a}}, 10, 10);
  const auto mb = RasterizePolygons({{b}}, 10, 10);
  const auto both = RasterizePolygons({{a, b}}, 10, 10);
  EXPECT_EQ(both.popcount(), ma.popcount() + mb.popcount());
}

TEST(Rasterize, OrientationDoesNotMatter) {
  Ring ccw{{1, 1}, {4, 1}, {4, 4}, {1, 4}};
  Ring cw(ccw.rbegin(), ccw.rend());
  EXPECT_EQ(RasterizePolygons({{ccw}}, 6, 6), RasterizePolygons({{cw}}, 6, 6));
}

TEST(Rasterize, SelfOverlappingRingUsesNonzeroWinding) {
  // A pentagram: the centre has winding number 2 and stays filled.
  Ring star{{8, 0.5}, {12.7, 15}, {0.5, 5.5}, {15.5, 5.5}, {3.3, 15}};
  const auto m = RasterizePolygons({{star}}, 16, 16);
  EXPECT_EQ(m.at(7, 8), 1);
}

TEST(Rasterize, MatchesPointInPolygonOracle) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 100; ++i) {
    const int w = 1 + static_cast<int>(rng() % 16);
    const int h = 1 + static_cast<int>(rng() % 16);
    const Ring ring = testing::RandomConvexPolygon(rng, w, h);
    ASSERT_EQ(RasterizePolygons({{ring}}, w, h), testing::PointInPolygonRaster(ring, w, h));
  }
}

TEST(Rasterize, MalformedRingsNameTheRecord) {
  PolygonAnnotation two{{{{0, 0}, {1, 1}}}};
  try {
    RasterizePolygons(two, 4, 4, "p001/pointing_0");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kMalformedAnnotation);
    EXPECT_NE(std::string(e.what()).find("p001/pointing_0"), std::string::npos);
  }
  PolygonAnnotation outside{{{{0, 0}, {5, 0}, {0, 3}}}};
  EXPECT_EQ(CodeOf([&] { ValidatePolygons(outside, 4, 4); }), Errc::kMalformedAnnotation);
  PolygonAnnotation edge{{{{0, 0}, {4, 0}, {4, 4}}}};
  EXPECT_NO_THROW(ValidatePolygons(edge, 4, 4));
}

TEST(Binarize, Examples) {
  EXPECT_EQ(Binarize(SoftMask(3, 2, 0.0f)).popcount(), 0u);
  EXPECT_EQ(Binarize(SoftMask(3, 2, 1.0f)).popcount(), 6u);
  const auto m = Binarize(SoftMask(3, 1, std::vector<float>{0.49f, 0.5f, 0.51f}), 0.5);
  EXPECT_EQ(m.at(0, 0), 0);
  EXPECT_EQ(m.at(1, 0), 1);
  EXPECT_EQ(m.at(2, 0), 1);
}

TEST(Binarize, ThresholdOutsideUnitIntervalIsConfigError) {
  EXPECT_EQ(CodeOf([] { Binarize(SoftMask(1, 1), 1.5); }), Errc::kConfig);
  EXPECT_EQ(CodeOf([] { Binarize(SoftMask(1, 1), -0.1); }), Errc::kConfig);
}

TEST(Binarize, MonotoneInThreshold) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> v(64);
  for (auto& x : v) x = u(rng);
  const SoftMask s(8, 8, v);
  BinaryMask prev = Binarize(s, 0.0);
  for (int t = 1; t <= 20; ++t) {
    const BinaryMask cur = Binarize(s, t / 20.0);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_LE(cur.values()[i], prev.values()[i]);
    prev = cur;
  }
}

TEST(Overlay, Examples) {
  const auto frame = ImageFrame::Filled(4, 3, {100, 20, 250});
  EXPECT_EQ(OverlayHighlight(frame, SoftMask(4, 3, 0.0f), {255, 0, 0}, 0.45), frame);
  EXPECT_EQ(OverlayHighlight(frame, SoftMask(4, 3, 1.0f), {7, 8, 9}, 1.0),
            ImageFrame::Filled(4, 3, {7, 8, 9}));
  const auto half = OverlayHighlight(ImageFrame::Filled(1, 1, {100, 100, 100}),
                                     SoftMask(1, 1, 0.5f), {200, 200, 200}, 1.0);
  EXPECT_EQ(half.at(0, 0), (Rgb{150, 150, 150}));
}

TEST(Overlay, RoundsHalfUpAndChecksShape) {
  // 0.5 * 0 + 0.5 * 1 = 0.5 -> 1
  const auto out = OverlayHighlight(ImageFrame::Filled(1, 1, {0, 0, 0}), SoftMask(1, 1, 0.5f),
                                    {1, 1, 1}, 1.0);
  EXPECT_EQ(out.at(0, 0), (Rgb{1, 1, 1}));
  EXPECT_EQ(CodeOf([] {
              OverlayHighlight(ImageFrame::Filled(2, 2, {}), SoftMask(2, 3), {}, 1.0);
            }),
            Errc::kShape);
}

TEST(Codec, BinaryMaskPngUses0And255) {
  BinaryMask m(3, 1, {0, 1, 1});
  const auto grey = DecodeGrey(EncodePng(m));
  EXPECT_EQ(grey.values, (std::vector<std::uint8_t>{0, 255, 255}));
  EXPECT_EQ(DecodeBinaryMask(EncodePng(m)), m);
}

TEST(Codec, SoftMaskRoundTripOnGridIsExact) {
  std::vector<float> v;
  for (int k = 0; k < 256; ++k) v.push_back(static_cast<float>(k) / 255.0f);
  const SoftMask s(16, 16, v);
  EXPECT_EQ(DecodeSoftMask(EncodePng(s)), s);
  const SoftMask off(1, 1, std::vector<float>{0.3f});
  EXPECT_EQ(DecodeSoftMask(EncodePng(off)), QuantizeToU8Grid(off));
  EXPECT_EQ(DecodeGrey(EncodePng(off)).values[0], 77);  // round(0.3 * 255)
}

TEST(Codec, FramePngIsLosslessJpegIsClose) {
  std::mt19937_64 rng(5);
  std::vector<std::uint8_t> px(32 * 16 * 3);
  for (auto& p : px) p = static_cast<std::uint8_t>(rng());
  const ImageFrame f(32, 16, px);
  EXPECT_EQ(DecodeImage(EncodePng(f)), f);
  const auto smooth = ImageFrame::Filled(32, 16, {200, 40, 90});
  const auto j = DecodeImage(EncodeJpeg(smooth, 80));
  ASSERT_EQ(j.shape(), smooth.shape());
  EXPECT_NEAR(j.at(5, 5).r, 200, 4);
  EXPECT_NEAR(j.at(5, 5).g, 40, 4);
}

TEST(Codec, UndecodableBytesAreIoErrors) {
  EXPECT_THROW(DecodeImage(Bytes{1, 2, 3}), Error);
}

TEST(Codec, AtomicWriteLeavesNoTemporary) {
  testing::TempDir dir;
  WriteFileAtomic(dir / "a/b.txt", std::string("hello"));
  EXPECT_EQ(ReadFileBytes(dir / "a/b.txt").size(), 5u);
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "a")) {
    (void)e;
    ++files;
  }
  EXPECT_EQ(files, 1u);
}

TEST(MaskOps, ResizeNearestAndConcat) {
  BinaryMask m(2, 2, {1, 0, 0, 1});
  const auto up = ResizeNearest(m, 4, 4);
  EXPECT_EQ(up.popcount(), 8u);
  EXPECT_EQ(up.at(0, 0), 1);
  EXPECT_EQ(up.at(3, 0), 0);
  const auto cat = ConcatHorizontal({ImageFrame::Filled(2, 3, {1, 1, 1}),
                                     ImageFrame::Filled(3, 3, {2, 2, 2})});
  EXPECT_EQ(cat.width(), 5);
  EXPECT_EQ(cat.at(4, 2), (Rgb{2, 2, 2}));
  EXPECT_THROW(ConcatHorizontal({ImageFrame::Filled(2, 3, {}), ImageFrame::Filled(2, 2, {})}),
               Error);
}

}  // namespace
}  // namespace gimt
