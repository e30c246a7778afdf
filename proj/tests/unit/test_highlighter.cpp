#include <gtest/gtest.h>

#include <cmath>

#include "gimt/core/error.hpp"
#include "gimt/datamgmt/synthetic.hpp"
#include "gimt/highlighter/highlighter.hpp"
#include "test_support.hpp"

namespace gimt::highlight {
namespace {

HighlighterOptions TinyOptions(const std::string& decoder = "unet") {
  HighlighterOptions o;
  o.spec = {"tiny-cnn", decoder};
  o.input_width = 32;
  o.input_height = 32;
  return o;
}

std::vector<HighlightExample> SceneExamples(int scenes, int size, std::uint64_t seed) {
  std::vector<HighlightExample> out;
  for (const auto& s : data::synth::MakeTwoObjectScenes(scenes, size, size, seed)) {
    for (int k = 0; k < 2; ++k) {
      out.push_back({s.id + "_" + std::to_string(k), s.frame, s.hands[k], s.objects[k]});
    }
  }
  return out;
}

using testing::CodeOf;

TEST(PrepareInput, Examples) {
  const auto zero = PrepareInput(ImageFrame::Filled(3, 2, {0, 0, 0}), BinaryMask(3, 2));
  EXPECT_EQ(zero.values.size(), 4u * 6u);
  for (float v : zero.values) EXPECT_EQ(v, 0.0f);

  BinaryMask hand(3, 2);
  hand.set(2, 1, true);
  const auto in = PrepareInput(ImageFrame::Filled(3, 2, {255, 128, 0}), hand);
  EXPECT_FLOAT_EQ(in.at(0, 0, 0), 1.0f);
  EXPECT_NEAR(in.at(1, 1, 1), 128.0 / 255.0, 1e-7);
  EXPECT_NEAR(in.at(1, 1, 1), 0.50196, 1e-5);
  EXPECT_EQ(in.at(2, 0, 0), 0.0f);
  EXPECT_EQ(in.at(3, 2, 1), 1.0f);
  EXPECT_EQ(in.at(3, 0, 0), 0.0f);

  EXPECT_EQ(CodeOf([] { PrepareInput(ImageFrame::Filled(3, 2, {}), BinaryMask(2, 3)); }),
            Errc::kShape);
}

TEST(LrSchedule, Examples) {
  HighlighterTrainConfig c;
  EXPECT_EQ(LrAtEpoch(c, 0), 1e-4);
  EXPECT_EQ(LrAtEpoch(c, 24), 1e-4);
  EXPECT_EQ(LrAtEpoch(c, 75), 1e-5);
  EXPECT_EQ(LrAtEpoch(c, 99), 1e-5);
  EXPECT_NEAR(LrAtEpoch(c, 50) / std::pow(10.0, -4.5), 1.0, 1e-12);
  EXPECT_NEAR(LrAtEpoch(c, 50), 3.1623e-5, 1e-9);
}

TEST(LrSchedule, MonotoneAndContinuousAtHolds) {
  for (int head : {0, 10, 25}) {
    for (int tail : {0, 5, 25}) {
      HighlighterTrainConfig c;
      c.lr_hold_head = head;
      c.lr_hold_tail = tail;
      for (int e = 1; e < c.epochs; ++e) EXPECT_LE(LrAtEpoch(c, e), LrAtEpoch(c, e - 1));
      // The geometric segment starts exactly at lr_initial.
      EXPECT_NEAR(LrAtEpoch(c, head) / c.lr_initial, 1.0, 1e-12);
    }
  }
}

TEST(LrSchedule, Errors) {
  HighlighterTrainConfig c;
  EXPECT_EQ(CodeOf([&] { LrAtEpoch(c, -1); }), Errc::kArgument);
  EXPECT_EQ(CodeOf([&] { LrAtEpoch(c, 100); }), Errc::kArgument);
  c.lr_hold_head = 60;
  c.lr_hold_tail = 40;
  EXPECT_EQ(CodeOf([&] { c.Validate(); }), Errc::kConfig);
  c = {};
  c.lr_final = 1e-3;
  EXPECT_EQ(CodeOf([&] { c.Validate(); }), Errc::kConfig);
  c = {};
  c.optimizer = "sgd";
  EXPECT_EQ(CodeOf([&] { c.Validate(); }), Errc::kConfig);
}

TEST(Model, CatalogValidation) {
  EXPECT_NO_THROW((ModelSpec{"efficientnet-b3", "deeplabv3plus"}.Validate()));
  EXPECT_EQ(CodeOf([] { ModelSpec{"resnet50", "unet"}.Validate(); }), Errc::kCatalog);
  EXPECT_EQ(CodeOf([] { ModelSpec{"tiny-cnn", "fpn"}.Validate(); }), Errc::kCatalog);
  EXPECT_EQ(HighlighterModel::Create(TinyOptions(), 0).input_channels(), 4);
}

TEST(Model, UnloadedIsStateError) {
  HighlighterModel m;
  EXPECT_FALSE(m.loaded());
  EXPECT_EQ(CodeOf([&] {
              PredictHighlight(m, ImageFrame::Filled(4, 4, {}), BinaryMask(4, 4));
            }),
            Errc::kState);
}

TEST(Model, ZeroLogitLayerGivesHalfEverywhere) {
  for (const char* dec : {"unet", "unetpp", "deeplabv3", "deeplabv3plus"}) {
    auto m = HighlighterModel::Create(TinyOptions(dec), 3);
    m.ZeroLogitLayer();
    const auto out = PredictHighlight(m, ImageFrame::Filled(40, 30, {90, 20, 200}),
                                      BinaryMask(40, 30));
    EXPECT_EQ(out.shape(), (Shape{40, 30}));
    for (float v : out.values()) ASSERT_EQ(v, 0.5f) << dec;
  }
}

TEST(Model, OutputInUnitRangeAndShapePreserved) {
  const auto ex = SceneExamples(2, 48, 5);
  for (const char* dec : {"unet", "deeplabv3plus"}) {
    const auto m = HighlighterModel::Create(TinyOptions(dec), 11);
    for (const auto& e : ex) {
      const auto out = PredictHighlight(m, e.frame, e.hand);
      EXPECT_EQ(out.shape(), e.frame.shape());
      for (float v : out.values()) {
        ASSERT_GE(v, 0.0f);
        ASSERT_LE(v, 1.0f);
      }
    }
  }
}

TEST(Model, SaveLoadRoundTrip) {
  testing::TempDir dir;
  auto m = HighlighterModel::Create(TinyOptions("unetpp"), 21);
  m.set_trained_miou(0.625);
  m.Save(dir / "model.bin");
  const auto back = HighlighterModel::Load(dir / "model.bin");
  EXPECT_EQ(back.spec(), m.spec());
  EXPECT_EQ(back.trained_miou(), 0.625);
  EXPECT_EQ(back.options().input_width, 32);
  const auto ex = SceneExamples(1, 40, 2);
  EXPECT_EQ(PredictHighlight(back, ex[0].frame, ex[0].hand),
            PredictHighlight(m, ex[0].frame, ex[0].hand));
  EXPECT_EQ(CodeOf([&] { HighlighterModel::Load(dir / "missing.bin"); }), Errc::kIo);
}

TEST(Model, CreateIsDeterministicForSeed) {
  const auto ex = SceneExamples(1, 32, 9);
  const auto a = HighlighterModel::Create(TinyOptions(), 4);
  const auto b = HighlighterModel::Create(TinyOptions(), 4);
  EXPECT_EQ(PredictHighlight(a, ex[0].frame, ex[0].hand),
            PredictHighlight(b, ex[0].frame, ex[0].hand));
}

TEST(Model, PretrainedEfficientNetNeedsWeights) {
  HighlighterOptions o;
  o.spec = {"efficientnet-b0", "unet"};
  o.input_width = 32;
  o.input_height = 32;
  o.encoder_weights = "/nonexistent/encoder.pt";
  EXPECT_EQ(CodeOf([&] { HighlighterModel::Create(o, 0); }), Errc::kInitialization);
}

TEST(Training, EmptyAndMissingMaskErrors) {
  data::DatasetSplit split;
  EXPECT_EQ(CodeOf([&] { TrainHighlighter(split, TinyOptions(), {}, {}); }), Errc::kDataset);

  data::HuTicsRecord r;
  r.record_id = "p1/pointing_4";
  r.participant_id = "p1";
  r.image_path = "/nonexistent.png";
  r.mask = std::filesystem::path("/nonexistent-mask.png");
  split.train.push_back(r);
  try {
    TrainHighlighter(split, TinyOptions(), {}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kValidation);
    EXPECT_NE(std::string(e.what()).find("p1/pointing_4"), std::string::npos);
  }
  VectorExampleSource none({});
  EXPECT_EQ(CodeOf([&] { HighlighterTrainer t(HighlighterModel::Create(TinyOptions(), 0), {}, none); }),
            Errc::kDataset);
}

TEST(Training, FixedBatchLossDecreases) {
  VectorExampleSource train(SceneExamples(2, 32, 13));
  HighlighterTrainConfig cfg;
  cfg.epochs = 10;
  cfg.lr_hold_head = 2;
  cfg.lr_hold_tail = 2;
  cfg.lr_initial = 3e-3;
  cfg.lr_final = 3e-4;
  HighlighterTrainer trainer(HighlighterModel::Create(TinyOptions(), 1), cfg, train);
  double prev = trainer.Step({0, 1, 2, 3}, 3e-3);
  for (int i = 0; i < 4; ++i) {
    const double loss = trainer.Step({0, 1, 2, 3}, 3e-3);
    EXPECT_LT(loss, prev);
    prev = loss;
  }
}

TEST(Training, ShortRunReportsValidEvaluation) {
  VectorExampleSource train(SceneExamples(2, 32, 13));
  VectorExampleSource test(SceneExamples(1, 32, 14));
  HighlighterTrainConfig cfg;
  cfg.epochs = 4;
  cfg.lr_hold_head = 1;
  cfg.lr_hold_tail = 1;
  cfg.lr_initial = 3e-3;
  cfg.lr_final = 3e-4;
  std::vector<EpochStats> stats;
  auto res = TrainHighlighterOn(train, test, TinyOptions(), cfg,
                                [&](const EpochStats& s) { stats.push_back(s); });
  ASSERT_EQ(stats.size(), 4u);
  for (int e = 0; e < 4; ++e) {
    EXPECT_EQ(stats[e].epoch, e);
    EXPECT_EQ(stats[e].lr, LrAtEpoch(cfg, e));
  }
  EXPECT_NO_THROW(res.report.Validate());
  EXPECT_EQ(res.report.per_image_iou.size(), 2u);
  EXPECT_EQ(res.model.trained_miou(), res.report.miou);
}

}  // namespace
}  // namespace gimt::highlight
