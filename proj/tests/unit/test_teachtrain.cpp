#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gimt/core/error.hpp"
#include "gimt/datamgmt/synthetic.hpp"
#include "gimt/teachtrain/joint_loss.hpp"
#include "gimt/teachtrain/user_model.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace gimt::teach {
namespace {
using testing::CodeOf;

BinaryMask Ones(int w, int h) {
  BinaryMask m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.set(x, y, true);
  return m;
}

TEST(JointLoss, ClosedForms) {
  const std::vector<double> cls{0.0, 0.0};
  const std::vector<double> seg{0.0};
  const auto gt = Ones(1, 1);
  EXPECT_NEAR(JointLoss(cls, 0, SegTerm{seg, gt}, 1.0), 2.0 * std::log(2.0), 1e-12);
  EXPECT_NEAR(JointLoss(cls, 0, SegTerm{seg, gt}, 1.0), 1.38629, 1e-5);
  EXPECT_EQ(JointLoss(cls, 0, SegTerm{seg, gt}, 0.0), ClassificationLoss(cls, 0));
  EXPECT_EQ(JointLoss(cls, 1, std::nullopt, 1.0), ClassificationLoss(cls, 1));

  const std::vector<double> good{20.0, 0.0};
  const std::vector<double> sure{20.0};
  EXPECT_LT(JointLoss(good, 0, SegTerm{sure, gt}, 1.0), 1e-6);
}

TEST(JointLoss, Errors) {
  const std::vector<double> cls{0.0, 1.0};
  const std::vector<double> seg{0.0, 0.0};
  const auto gt = Ones(3, 1);
  EXPECT_EQ(CodeOf([&] { JointLoss(cls, 0, SegTerm{seg, gt}, 1.0); }), Errc::kShape);
  EXPECT_EQ(CodeOf([&] { JointLoss(cls, 2, std::nullopt, 1.0); }), Errc::kArgument);
  EXPECT_EQ(CodeOf([&] { JointLoss(cls, -1, std::nullopt, 1.0); }), Errc::kArgument);
}

struct Instance {
  std::vector<double> cls;
  int y = 0;
  std::vector<double> seg;
  BinaryMask target;
  std::vector<int> target_ints;
};

Instance RandomInstance(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  Instance in;
  const int k = 2 + static_cast<int>(rng() % 4);
  for (int i = 0; i < k; ++i) in.cls.push_back(u(rng));
  in.y = static_cast<int>(rng() % k);
  const int w = 1 + static_cast<int>(rng() % 4), h = 1 + static_cast<int>(rng() % 4);
  in.target = testing::RandomMask(rng, w, h, 0.5);
  for (int i = 0; i < w * h; ++i) {
    in.seg.push_back(u(rng));
    in.target_ints.push_back(in.target.values()[static_cast<std::size_t>(i)] ? 1 : 0);
  }
  return in;
}

TEST(JointLoss, MatchesReferenceAndIsLinearInLambda) {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 100; ++t) {
    const auto in = RandomInstance(rng);
    const SegTerm seg{in.seg, in.target};
    const double lam = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
    EXPECT_NEAR(JointLoss(in.cls, in.y, seg, lam),
                testing::ReferenceJointLoss(in.cls, in.y, in.seg, in.target_ints, lam), 1e-10);
    const double l1 = 0.3, l2 = 1.7;
    EXPECT_NEAR(JointLoss(in.cls, in.y, seg, l1) + JointLoss(in.cls, in.y, seg, l2) -
                    JointLoss(in.cls, in.y, seg, 0.0),
                JointLoss(in.cls, in.y, seg, l1 + l2), 1e-10);
  }
}

TEST(JointLoss, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(32);
  const double h = 1e-5;
  for (int t = 0; t < 100; ++t) {
    auto in = RandomInstance(rng);
    const double lam = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
    const auto grad = JointLossGrad(in.cls, in.y, SegTerm{in.seg, in.target}, lam);
    auto f = [&] {
      return testing::ReferenceJointLoss(in.cls, in.y, in.seg, in.target_ints, lam);
    };
    auto check = [&](std::vector<double>& v, const std::vector<double>& g) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double x = v[i];
        v[i] = x + h;
        const double up = f();
        v[i] = x - h;
        const double down = f();
        v[i] = x;
        const double numeric = (up - down) / (2 * h);
        const double denom = std::max({std::abs(numeric), std::abs(g[i]), 1e-8});
        EXPECT_LT(std::abs(numeric - g[i]) / denom, 1e-4);
      }
    };
    check(in.cls, grad.cls);
    check(in.seg, grad.seg);
  }
}

TEST(Softmax, Examples) {
  const std::vector<double> l{2.0, 0.0, 0.0};
  const auto p = Softmax(l);
  EXPECT_NEAR(p[0], 0.78699, 1e-5);
  EXPECT_NEAR(p[1], 0.10651, 1e-5);
  EXPECT_NEAR(p[2], 0.10651, 1e-5);
  EXPECT_EQ(ArgmaxLowestTie(p), 0);
  const auto eq = Softmax(std::vector<double>{1.5, 1.5, 1.5});
  for (double v : eq) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  EXPECT_EQ(ArgmaxLowestTie(eq), 0);
  EXPECT_EQ(ArgmaxLowestTie(std::vector<double>{0.1, 0.7, 0.7}), 1);
}

TEST(Softmax, StableAndShiftInvariant) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> l(2 + rng() % 8);
    for (auto& v : l) v = u(rng);
    const auto p = Softmax(l);
    double sum = 0.0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
    const double c = u(rng);
    auto shifted = l;
    for (auto& v : shifted) v += c;
    const auto q = Softmax(shifted);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-9);
  }
}

TEST(Cam, Examples) {
  FeatureMaps constant{1, 2, 3, std::vector<double>(6, 1.0)};
  const auto zero = CamFromFeatures(constant, std::vector<double>{2.0}, {3, 2});
  for (float v : zero.values()) EXPECT_EQ(v, 0.0f);

  FeatureMaps two{2, 1, 2, {1, 0, 0, 1}};
  const auto cam = CamFromFeatures(two, std::vector<double>{1.0, 3.0}, {2, 1});
  EXPECT_EQ(cam.at(0, 0), 0.0f);
  EXPECT_EQ(cam.at(1, 0), 1.0f);

  const auto up = CamFromFeatures(two, std::vector<double>{1.0, 3.0}, {8, 4});
  EXPECT_EQ(up.shape(), (Shape{8, 4}));
  for (float v : up.values()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Cam, MatchesExplicitOracleOnRandomFeatures) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n;
  for (int t = 0; t < 50; ++t) {
    FeatureMaps f{1 + static_cast<int>(rng() % 6), 1 + static_cast<int>(rng() % 5),
                  1 + static_cast<int>(rng() % 5), {}};
    f.values.resize(static_cast<std::size_t>(f.channels * f.height * f.width));
    for (auto& v : f.values) v = n(rng);
    std::vector<double> w(static_cast<std::size_t>(f.channels));
    for (auto& v : w) v = n(rng);
    const auto cam = CamFromFeatures(f, w, {f.width, f.height});
    const auto ref = testing::ExplicitCam(f.values, f.channels, f.height, f.width, w);
    for (std::size_t p = 0; p < ref.size(); ++p) EXPECT_NEAR(cam.values()[p], ref[p], 1e-6);
  }
}

TEST(Blend, ExamplesAndErrors) {
  const SoftMask out(2, 1, std::vector<float>{1.0f, 0.25f});
  const SoftMask cam(2, 1, std::vector<float>{0.0f, 0.75f});
  EXPECT_NEAR(BlendSaliency(out, cam, 0.718).at(0, 0), 0.718, 1e-7);
  EXPECT_EQ(BlendSaliency(out, cam, 1.0), out);
  EXPECT_EQ(BlendSaliency(out, cam, 0.0), cam);
  EXPECT_EQ(CodeOf([&] { BlendSaliency(out, cam, 1.01); }), Errc::kArgument);
  EXPECT_EQ(CodeOf([&] { BlendSaliency(out, cam, -0.1); }), Errc::kArgument);
  EXPECT_EQ(CodeOf([&] { BlendSaliency(out, SoftMask(1, 2), 0.5); }), Errc::kShape);
}

TEST(Blend, StaysWithinOperandEnvelope) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int t = 0; t < 100; ++t) {
    std::vector<float> a(25), b(25);
    for (auto& v : a) v = u(rng);
    for (auto& v : b) v = u(rng);
    const SoftMask out(5, 5, a), cam(5, 5, b);
    for (int i = 0; i <= 10; ++i) {
      const auto mix = BlendSaliency(out, cam, i / 10.0);
      for (std::size_t p = 0; p < a.size(); ++p) {
        EXPECT_GE(mix.values()[p], std::min(a[p], b[p]));
        EXPECT_LE(mix.values()[p], std::max(a[p], b[p]));
      }
    }
  }
}

UserTrainConfig TinyConfig(bool seg = true) {
  UserTrainConfig c;
  c.encoder_id = "tiny-cnn";
  c.pretrained_encoder = false;
  c.input_width = 32;
  c.input_height = 32;
  c.epochs = 3;
  c.lr = 1e-3;
  c.seed = 4;
  c.seg_decoder = seg;
  return c;
}

std::vector<ClassDef> Classes(int n) {
  std::vector<ClassDef> out;
  for (int i = 0; i < n; ++i) out.push_back({i, "c" + std::to_string(i), 0});
  return out;
}

std::vector<TeachingSample> Samples(int classes, int per) {
  return data::synth::ToTeachingSamples(data::synth::MakeClassSamples(classes, per, 40, 30, 3),
                                        "s-unit");
}

TEST(UserModel, ConfigValidationAndJson) {
  auto c = TinyConfig();
  EXPECT_NO_THROW(c.Validate());
  EXPECT_EQ(ToJson(UserTrainConfigFromJson(ToJson(c))), ToJson(c));
  c.epochs = 0;
  EXPECT_EQ(CodeOf([&] { c.Validate(); }), Errc::kConfig);
  c = TinyConfig();
  c.encoder_id = "vgg";
  EXPECT_EQ(CodeOf([&] { c.Validate(); }), Errc::kCatalog);
  EXPECT_EQ(CodeOf([] { UserModel::Create(Classes(1), TinyConfig(), 1.0); }), Errc::kDataset);
}

TEST(UserModel, UnloadedIsStateError) {
  UserModel m;
  EXPECT_FALSE(m.loaded());
  EXPECT_EQ(CodeOf([&] { Predict(m, ImageFrame::Filled(4, 4, {}), 0.5); }), Errc::kState);
}

TEST(UserModel, PredictionInvariants) {
  const auto m = UserModel::Create(Classes(3), TinyConfig(), 1.0);
  EXPECT_TRUE(m.has_seg_decoder());
  const auto samples = Samples(3, 1);
  for (const auto& s : samples) {
    const auto base = Predict(m, s.frame, 0.718);
    double sum = 0.0;
    for (double c : base.confidences) sum += c;
    EXPECT_NEAR(sum, 1.0, 1e-6);
    EXPECT_EQ(base.predicted_class, ArgmaxLowestTie(base.confidences));
    ASSERT_TRUE(base.seg_output.has_value());
    EXPECT_EQ(base.saliency, BlendSaliency(*base.seg_output, base.cam, 0.718));
    EXPECT_EQ(base.cam, ComputeCam(m, s.frame, base.predicted_class));
    for (double lam : {0.0, 0.3, 1.0}) {
      const auto other = Predict(m, s.frame, lam);
      EXPECT_EQ(other.predicted_class, base.predicted_class);
      EXPECT_EQ(other.confidences, base.confidences);
    }
    const auto pinned = Predict(m, s.frame, 0.5, 2);
    EXPECT_EQ(pinned.saliency_class, 2);
    EXPECT_EQ(pinned.cam, ComputeCam(m, s.frame, 2));
  }
  EXPECT_EQ(CodeOf([&] { ComputeCam(m, samples[0].frame, 3); }), Errc::kArgument);
}

TEST(UserModel, WithoutDecoderSaliencyIsCam) {
  const auto m = UserModel::Create(Classes(2), TinyConfig(false), 0.0);
  EXPECT_FALSE(m.has_seg_decoder());
  const auto frame = Samples(2, 1)[0].frame;
  const auto r = Predict(m, frame, 0.718);
  EXPECT_FALSE(r.seg_output.has_value());
  EXPECT_EQ(r.saliency, r.cam);
  // lambda 0 also disables the decoder.
  EXPECT_FALSE(UserModel::Create(Classes(2), TinyConfig(true), 0.0).has_seg_decoder());
}

TEST(UserModel, ExtractedFeaturesReproduceCam) {
  const auto m = UserModel::Create(Classes(3), TinyConfig(), 1.0);
  const auto frame = Samples(3, 1)[1].frame;
  const auto f = m.ExtractFeatures(frame);
  const auto w = m.ClassifierWeights();
  ASSERT_EQ(w.size(), static_cast<std::size_t>(3 * f.channels));
  for (int k = 0; k < 3; ++k) {
    const std::vector<double> wk(w.begin() + k * f.channels, w.begin() + (k + 1) * f.channels);
    const auto cam = CamFromFeatures(f, wk, {f.width, f.height});
    const auto ref = testing::ExplicitCam(f.values, f.channels, f.height, f.width, wk);
    for (std::size_t p = 0; p < ref.size(); ++p) EXPECT_NEAR(cam.values()[p], ref[p], 1e-6);
  }
}

TEST(Training, ValidationErrors) {
  const auto cfg = TinyConfig();
  auto samples = Samples(2, 2);
  EXPECT_NO_THROW(ValidateTrainingSamples(Classes(2), samples, cfg, 1.0));

  auto one = samples;
  for (auto& s : one) s.class_id = 0;
  EXPECT_EQ(CodeOf([&] { ValidateTrainingSamples(Classes(2), one, cfg, 1.0); }), Errc::kDataset);

  auto bad = samples;
  bad[1].class_id = 7;
  EXPECT_EQ(CodeOf([&] { ValidateTrainingSamples(Classes(2), bad, cfg, 1.0); }),
            Errc::kValidation);

  auto unmasked = samples;
  unmasked[2].highlight_soft = SoftMask();
  unmasked[2].highlight_bin = BinaryMask();
  try {
    ValidateTrainingSamples(Classes(2), unmasked, cfg, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kValidation);
    EXPECT_NE(std::string(e.what()).find(unmasked[2].sample_id), std::string::npos);
  }
  EXPECT_NO_THROW(ValidateTrainingSamples(Classes(2), unmasked, cfg, 0.0));
  EXPECT_NO_THROW(ValidateTrainingSamples(Classes(2), unmasked, TinyConfig(false), 1.0));
}

TEST(Training, FixedBatchLossDecreasesAndEpochsReport) {
  const auto samples = Samples(2, 2);
  UserModelTrainer trainer(UserModel::Create(Classes(2), TinyConfig(), 1.0), TinyConfig(),
                           samples);
  double prev = trainer.Step({0, 1, 2, 3});
  for (int i = 0; i < 4; ++i) {
    const double loss = trainer.Step({0, 1, 2, 3});
    EXPECT_LT(loss, prev);
    prev = loss;
  }
  std::vector<UserEpochStats> stats;
  const auto model = TrainUserModel(Classes(2), samples, TinyConfig(), 1.0,
                                    [&](const UserEpochStats& s) { stats.push_back(s); });
  ASSERT_EQ(stats.size(), 3u);
  for (int e = 0; e < 3; ++e) {
    EXPECT_EQ(stats[e].epoch, e);
    EXPECT_TRUE(std::isfinite(stats[e].mean_loss));
  }
  EXPECT_EQ(model.classes()[0].sample_count, 2);
  EXPECT_TRUE(model.metrics().contains("train_accuracy"));
}

TEST(Training, ClassifierOnlyWithoutMasks) {
  auto samples = Samples(2, 2);
  for (auto& s : samples) {
    s.highlight_soft = SoftMask();
    s.highlight_bin = BinaryMask();
  }
  const auto model = TrainUserModel(Classes(2), samples, TinyConfig(false), 0.0);
  EXPECT_FALSE(model.has_seg_decoder());
  const auto scores = ScoreUserModel(model, samples);
  EXPECT_FALSE(scores.seg_miou.has_value());
  EXPECT_EQ(scores.predictions.size(), 4u);
}

TEST(UserModel, SaveLoadRoundTrip) {
  testing::TempDir dir;
  const auto samples = Samples(3, 1);
  auto m = UserModel::Create(Classes(3), TinyConfig(), 1.0);
  m.set_lambda_blend(0.4);
  m.set_metrics({{"train_accuracy", 0.5}});
  m.Save(dir / "model");
  for (const char* f : {"weights.bin", "classes.json", "train_config.json", "metrics.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "model" / f)) << f;
  }
  const auto back = UserModel::Load(dir / "model");
  EXPECT_EQ(back.classes(), m.classes());
  EXPECT_EQ(back.lambda_blend(), 0.4);
  EXPECT_EQ(back.lambda_loss(), 1.0);
  EXPECT_EQ(back.has_seg_decoder(), true);
  EXPECT_EQ(back.metrics(), m.metrics());
  const auto a = Predict(m, samples[0].frame, 0.4);
  const auto b = Predict(back, samples[0].frame, 0.4);
  EXPECT_EQ(a.confidences, b.confidences);
  EXPECT_EQ(a.saliency, b.saliency);
  EXPECT_TRUE(CodeOf([&] { UserModel::Load(dir / "nothing"); }).has_value());
}

}  // namespace
}  // namespace gimt::teach
