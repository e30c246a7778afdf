#include <gtest/gtest.h>

#include <condition_variable>
#include <future>
#include <mutex>

#include "gimt/core/codec.hpp"
#include "gimt/core/error.hpp"
#include "gimt/datamgmt/synthetic.hpp"
#include "gimt/service/config.hpp"
#include "gimt/service/messages.hpp"
#include "gimt/service/server.hpp"
#include "gimt/service/session.hpp"
#include "test_support.hpp"

namespace gimt::service {
namespace {
using nlohmann::json;
using testing::CodeOf;
using testing::TempDir;

constexpr int kW = 32;
constexpr int kH = 24;

ServiceConfig SmallConfig(const std::filesystem::path& root) {
  ServiceConfig c;
  c.highlighter_model = "random:tiny-cnn+unet";
  c.highlighter_input_width = 32;
  c.highlighter_input_height = 32;
  c.capture_width = kW;
  c.capture_height = kH;
  c.data_root = root;
  c.train.encoder_id = "tiny-cnn";
  c.train.pretrained_encoder = false;
  c.train.input_width = 32;
  c.train.input_height = 32;
  c.train.epochs = 3;
  c.train.lr = 1e-3;
  return c;
}

ImageFrame Frame(int cls, int i) {
  const auto s = data::synth::MakeClassSamples(3, i + 1, kW, kH, 77);
  return s[static_cast<std::size_t>(cls * (i + 1) + i)].frame;
}

// ---- messages ----

TEST(Messages, Base64RoundTripAndErrors) {
  for (std::size_t n = 0; n < 20; ++n) {
    Bytes b(n);
    for (std::size_t i = 0; i < n; ++i) b[i] = static_cast<std::uint8_t>(i * 37 + 5);
    EXPECT_EQ(Base64Decode(Base64Encode(b)), b);
  }
  EXPECT_EQ(Base64Encode(Bytes{'M', 'a', 'n'}), "TWFu");
  EXPECT_EQ(Base64Encode(Bytes{'M', 'a'}), "TWE=");
  EXPECT_EQ(Base64Decode("TWE="), (Bytes{'M', 'a'}));
  EXPECT_EQ(CodeOf([] { Base64Decode("@@@@"); }), Errc::kProtocol);
  EXPECT_EQ(CodeOf([] { Base64Decode("TW=E"); }), Errc::kProtocol);
  EXPECT_EQ(CodeOf([] { Base64Decode("abc"); }), Errc::kProtocol);
}

TEST(Messages, ClientMessagesValidate) {
  const auto frame = Frame(0, 0);
  auto f = MakeFrameMessage(3, 1000, frame, 1);
  EXPECT_NO_THROW(ValidateClientMessage(f));
  EXPECT_EQ(DecodeFramePayload(f["data"].get<std::string>()).shape(), frame.shape());
  EXPECT_NO_THROW(ValidateClientMessage(MakeCaptureMessage(4, frame)));

  auto bad = f;
  bad["v"] = 2;
  EXPECT_EQ(CodeOf([&] { ValidateClientMessage(bad); }), Errc::kProtocol);
  bad = f;
  bad.erase("ts");
  try {
    ValidateClientMessage(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kProtocol);
    EXPECT_NE(std::string(e.what()).find("ts"), std::string::npos);
  }
  bad = f;
  bad["extra"] = true;
  EXPECT_EQ(CodeOf([&] { ValidateClientMessage(bad); }), Errc::kProtocol);
  bad = f;
  bad["type"] = "highlight";
  EXPECT_EQ(CodeOf([&] { ValidateClientMessage(bad); }), Errc::kProtocol);
  EXPECT_EQ(CodeOf([] { ValidateClientMessage(json::array()); }), Errc::kProtocol);
  EXPECT_EQ(CodeOf([] { DecodeFramePayload(Base64Encode(Bytes{1, 2, 3})); }), Errc::kProtocol);
}

TEST(Messages, ServerMessagesValidateAndRoundTrip) {
  SoftMask mask(3, 2, std::vector<float>{0, 0.2f, 0.4f, 0.6f, 0.8f, 1.0f});
  const auto q = QuantizeToU8Grid(mask);
  const auto h = ToJson(HighlightReply{7, 9, q, 1.5, 2});
  EXPECT_NO_THROW(ValidateServerMessage(h));
  EXPECT_EQ(DecodeSoftMask(Base64Decode(h["mask"].get<std::string>())), q);

  const auto p = ToJson(PredictionReply{1, 2, {0.25, 0.75}, 1, "pen", q, 1, 3.0, 0});
  EXPECT_NO_THROW(ValidateServerMessage(p));
  EXPECT_EQ(p["predicted_label"], "pen");
  EXPECT_NO_THROW(ValidateServerMessage(ToJson(CaptureAck{5, "sample-000001", 0, 1, {1, 0}})));
  EXPECT_NO_THROW(ValidateServerMessage(MakeErrorMessage("protocol", "bad", 4)));
  EXPECT_NO_THROW(ValidateServerMessage(MakeErrorMessage("protocol", "bad")));

  auto bad = p;
  bad["confidences"] = "x";
  EXPECT_EQ(CodeOf([&] { ValidateServerMessage(bad); }), Errc::kProtocol);
  EXPECT_EQ(CodeOf([&] { ValidateServerMessage(MakeFrameMessage(1, 1, Frame(0, 0))); }),
            Errc::kProtocol);
}

// ---- config ----

TEST(Config, NestedAndDottedKeys) {
  const auto a = ServiceConfigFromJson(json::parse(R"({
    "highlighter": {"model": "random:tiny-cnn+unet", "input_width": 64},
    "blend": {"lambda": 0.5}, "loss": {"lambda": 2.0},
    "capture": {"width": 320, "height": 240}, "stream": {"max_fps": 30},
    "handseg": {"backend": "oracle", "model": "/tmp/fx"},
    "train": {"epochs": 7, "encoder_id": "tiny-cnn"}})"));
  const auto b = ServiceConfigFromJson(json::parse(R"({
    "highlighter.model": "random:tiny-cnn+unet", "highlighter.input_width": 64,
    "blend.lambda": 0.5, "loss.lambda": 2.0, "capture.width": 320, "capture.height": 240,
    "stream.max_fps": 30, "handseg.backend": "oracle", "handseg.model": "/tmp/fx",
    "train.epochs": 7, "train.encoder_id": "tiny-cnn"})"));
  EXPECT_EQ(ToJson(a), ToJson(b));
  EXPECT_EQ(a.lambda_blend, 0.5);
  EXPECT_EQ(a.lambda_loss, 2.0);
  EXPECT_EQ(a.capture_width, 320);
  EXPECT_EQ(a.max_fps, 30.0);
  EXPECT_EQ(a.handseg.backend_id, "oracle");
  EXPECT_EQ(a.train.epochs, 7);
  EXPECT_EQ(ToJson(ServiceConfigFromJson(ToJson(a))), ToJson(a));
}

TEST(Config, DefaultsAndErrors) {
  const auto d = ServiceConfigFromJson(json::parse(R"({"highlighter": {"model": "m.bin"}})"));
  EXPECT_EQ(d.lambda_blend, 0.718);
  EXPECT_EQ(d.lambda_loss, 1.0);
  EXPECT_EQ(d.capture_width, 640);
  EXPECT_EQ(d.capture_height, 480);
  EXPECT_EQ(d.max_fps, 24.0);
  EXPECT_NO_THROW(d.Validate());
  // The model may come from the command line, so parsing alone does not require it.
  EXPECT_EQ(CodeOf([] { ServiceConfigFromJson(json::object()).Validate(); }), Errc::kConfig);
  EXPECT_EQ(CodeOf([] {
              ServiceConfigFromJson(json::parse(R"({"highlighter.model": "m", "blend.lambda": 2})"))
                  .Validate();
            }),
            Errc::kConfig);
  EXPECT_TRUE(CodeOf([] {
                ServiceConfigFromJson(json::parse(R"({"highlighter.model": "m", "capture.width": "x"})"));
              }).has_value());
}

// ---- sessions ----

class SessionTest : public ::testing::Test {
 protected:
  SessionTest() : config_(SmallConfig(root_.path())), pipeline_(LoadPipeline(config_)) {}
  TempDir root_;
  ServiceConfig config_;
  Pipeline pipeline_;
};

TEST_F(SessionTest, LifecycleAndEventReplay) {
  Session s("s-a", config_, pipeline_, root_ / "s-a", 0.718);
  EXPECT_TRUE(s.Snapshot().classes.empty());
  EXPECT_EQ(s.Snapshot().mode, data::Mode::kTeaching);
  EXPECT_EQ(s.AddClass("mug").class_id, 0);
  EXPECT_EQ(s.AddClass("pen").class_id, 1);
  EXPECT_EQ(s.AddClass("key").class_id, 2);
  EXPECT_EQ(s.Snapshot().active_class, 0);
  EXPECT_EQ(CodeOf([&] { s.AddClass("pen"); }), Errc::kConflict);
  EXPECT_EQ(CodeOf([&] { s.AddClass(""); }), Errc::kValidation);
  EXPECT_EQ(CodeOf([&] { s.SetActiveClass(3); }), Errc::kArgument);
  EXPECT_EQ(CodeOf([&] { s.SetMode(data::Mode::kAssessment); }), Errc::kState);
  s.SetActiveClass(2);
  s.SetLambdaBlend(0.25);
  EXPECT_EQ(CodeOf([&] { s.SetLambdaBlend(1.5); }), Errc::kArgument);
  const auto ack = s.Capture({11, Frame(2, 0)});
  EXPECT_EQ(ack.capture_id, 11);
  EXPECT_EQ(ack.class_id, 2);
  EXPECT_EQ(ack.sample_count, 1);
  EXPECT_EQ(ack.counts, (std::vector<int>{0, 0, 1}));
  s.SetActiveClass(0);
  s.Capture({12, Frame(0, 0)});

  const auto snap = s.Snapshot();
  EXPECT_EQ(ReplayEvents(s.Events()), snap);
  EXPECT_EQ(data::LoadSession(s.dir()), snap);
  std::uint64_t seq = 0;
  for (const auto& e : s.Events()) EXPECT_EQ(e.seq, ++seq);
}

TEST_F(SessionTest, CaptureRequiresTeachingAndActiveClass) {
  Session s("s-b", config_, pipeline_, root_ / "s-b", 0.718);
  EXPECT_EQ(CodeOf([&] { s.Capture({1, Frame(0, 0)}); }), Errc::kState);
  s.AddClass("a");
  EXPECT_EQ(CodeOf([&] { s.Capture({1, ImageFrame::Filled(kW + 1, kH, {})}); }), Errc::kProtocol);
  for (int i = 0; i < 30; ++i) s.Capture({i, Frame(0, i % 3)});
  EXPECT_EQ(s.Snapshot().classes[0].sample_count, 30);
  EXPECT_EQ(data::LoadSession(s.dir()).samples.size(), 30u);
}

TEST_F(SessionTest, TeachingFrameYieldsHighlight) {
  Session s("s-c", config_, pipeline_, root_ / "s-c", 0.718);
  const auto reply = s.ProcessFrame({5, 100, Frame(1, 0), std::nullopt});
  ASSERT_TRUE(reply.has_value());
  const auto& h = std::get<HighlightReply>(*reply);
  EXPECT_EQ(h.frame_id, 5);
  EXPECT_EQ(h.mask.shape(), (Shape{kW, kH}));
  EXPECT_NO_THROW(ValidateServerMessage(ToJson(h)));
}

TEST_F(SessionTest, LatestWinsCountsDrops) {
  Session s("s-d", config_, pipeline_, root_ / "s-d", 0.718);
  EXPECT_TRUE(s.TryBeginFrame());
  EXPECT_FALSE(s.TryBeginFrame());
  EXPECT_FALSE(s.TryBeginFrame());
  EXPECT_EQ(s.drops(), 2u);
  s.EndFrame();
  EXPECT_TRUE(s.TryBeginFrame());
  s.EndFrame();
  EXPECT_EQ(s.drops(), 2u);
}

// A parser that parks inside Parse until released, to hold a frame in flight.
struct Gate {
  std::mutex mu;
  std::condition_variable cv;
  bool entered = false;
  bool open = false;
};
Gate& TheGate() {
  static Gate g;
  return g;
}

class GatedParser : public handseg::HumanParser {
 public:
  const handseg::LabelNames& label_names() const override { return handseg::LipLabelNames(); }
  handseg::BodyPartLabelMap Parse(const ImageFrame& f) const override {
    auto& g = TheGate();
    std::unique_lock lock(g.mu);
    g.entered = true;
    g.cv.notify_all();
    g.cv.wait(lock, [&] { return g.open; });
    handseg::BodyPartLabelMap m;
    m.shape = f.shape();
    m.label_names = handseg::LipLabelNames();
    m.labels.assign(f.shape().area(), 0);
    return m;
  }
};

TEST_F(SessionTest, ModeSwitchFencesInFlightFrame) {
  handseg::RegisterBackend("gated", [](const handseg::HandSegmentorConfig&) {
    return std::make_unique<GatedParser>();
  });
  auto cfg = config_;
  cfg.handseg.backend_id = "gated";
  Pipeline gated = pipeline_;
  gated.hands = std::make_shared<const handseg::HandSegmentor>(cfg.handseg);
  Session s("s-e", cfg, gated, root_ / "s-e", 0.718);
  s.AddClass("a");
  s.AddClass("b");
  teach::UserTrainConfig tc = cfg.train;
  auto model = std::make_shared<const teach::UserModel>(
      teach::UserModel::Create(s.Snapshot().classes, tc, 1.0));

  auto fut = std::async(std::launch::async,
                        [&] { return s.ProcessFrame({1, 0, Frame(0, 0), std::nullopt}); });
  auto& g = TheGate();
  {
    std::unique_lock lock(g.mu);
    g.cv.wait(lock, [&] { return g.entered; });
  }
  const auto epoch = s.mode_epoch();
  s.AttachUserModel(model, "job-x");
  s.SetMode(data::Mode::kAssessment);
  EXPECT_GT(s.mode_epoch(), epoch);
  {
    std::lock_guard lock(g.mu);
    g.open = true;
  }
  g.cv.notify_all();
  EXPECT_FALSE(fut.get().has_value());

  const auto next = s.ProcessFrame({2, 0, Frame(0, 0), std::nullopt});
  ASSERT_TRUE(next.has_value());
  const auto& p = std::get<PredictionReply>(*next);
  double sum = 0.0;
  for (double c : p.confidences) sum += c;
  EXPECT_NEAR(sum, 1.0, 1e-6);
  EXPECT_NO_THROW(ValidateServerMessage(ToJson(p)));
  EXPECT_EQ(CodeOf([&] { s.Capture({3, Frame(0, 0)}); }), Errc::kState);
}

// ---- training jobs ----

TEST(Jobs, RejectsThinSessionsAndSecondJob) {
  TempDir root;
  SessionManager m(SmallConfig(root.path()));
  auto s = m.Create();
  s->AddClass("only");
  s->Capture({1, Frame(0, 0)});
  EXPECT_EQ(CodeOf([&] { m.StartTraining(s->id(), json::object()); }), Errc::kDataset);
  s->AddClass("empty");
  EXPECT_EQ(CodeOf([&] { m.StartTraining(s->id(), json::object()); }), Errc::kDataset);
  s->SetActiveClass(1);
  s->Capture({2, Frame(1, 0)});
  EXPECT_EQ(CodeOf([&] { m.StartTraining(s->id(), {{"bogus", 1}}); }), Errc::kValidation);
  EXPECT_EQ(CodeOf([&] { m.StartTraining("s-missing", json::object()); }), Errc::kNotFound);

  const auto job = m.StartTraining(s->id(), {{"epochs", 40}});
  EXPECT_EQ(CodeOf([&] { m.StartTraining(s->id(), json::object()); }), Errc::kConflict);
  int last = 0;
  while (true) {
    const auto snap = m.Job(job.job_id);
    EXPECT_GE(snap.epoch, last);
    last = snap.epoch;
    if (snap.status == JobStatus::kDone || snap.status == JobStatus::kFailed) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  const auto done = m.WaitForJob(job.job_id);
  ASSERT_EQ(done.status, JobStatus::kDone) << done.error.value_or("");
  EXPECT_EQ(done.epoch, 40);
  EXPECT_TRUE(done.metrics.contains("train_accuracy"));
  EXPECT_TRUE(s->user_model() != nullptr);
  EXPECT_FALSE(s->active_job().has_value());
  EXPECT_TRUE(std::filesystem::exists(s->dir() / "model" / "weights.bin"));
  s->SetMode(data::Mode::kAssessment);
  EXPECT_EQ(CodeOf([&] { m.Job("job-none"); }), Errc::kNotFound);
}

TEST(Jobs, SessionsSurviveRestart) {
  TempDir root;
  std::string id;
  data::SessionState before;
  {
    SessionManager m(SmallConfig(root.path()));
    auto s = m.Create(0.3);
    id = s->id();
    s->AddClass("a");
    s->AddClass("b");
    s->Capture({1, Frame(0, 0)});
    s->SetActiveClass(1);
    s->Capture({2, Frame(1, 0)});
    m.WaitForJob(m.StartTraining(id, json::object()).job_id);
    s->SetMode(data::Mode::kAssessment);
    before = s->Snapshot();
  }
  SessionManager again(SmallConfig(root.path()));
  auto s = again.Get(id);
  EXPECT_EQ(s->Snapshot(), before);
  EXPECT_TRUE(s->user_model() != nullptr);
  EXPECT_EQ(ReplayEvents(s->Events()), s->Snapshot());
  EXPECT_EQ(s->Snapshot().lambda_blend, 0.3);
}

// ---- HTTP routing ----

TEST(Http, RoutesAndStatusCodes) {
  TempDir root;
  SessionManager m(SmallConfig(root.path()));
  EXPECT_EQ(HandleHttp(m, "GET", "/health", "").status, 200);
  EXPECT_EQ(HandleHttp(m, "GET", "/config", "").body["blend"]["lambda"], 0.718);
  const auto created = HandleHttp(m, "POST", "/sessions", "");
  ASSERT_EQ(created.status, 201);
  const std::string id = created.body["session_id"];
  EXPECT_EQ(created.body["mode"], "teaching");
  EXPECT_TRUE(created.body["classes"].empty());
  const std::string base = "/sessions/" + id;
  EXPECT_EQ(HandleHttp(m, "POST", base + "/classes", R"({"label":"mug"})").status, 201);
  const auto second = HandleHttp(m, "POST", base + "/classes", R"({"label":"pen"})");
  EXPECT_EQ(second.body["id"], 1);
  EXPECT_EQ(HandleHttp(m, "POST", base + "/classes", R"({"label":"pen"})").status, 409);
  EXPECT_EQ(HandleHttp(m, "POST", base + "/classes", R"({"name":"x"})").status, 400);
  EXPECT_EQ(HandleHttp(m, "POST", base + "/classes", "{oops").status, 400);
  EXPECT_EQ(HandleHttp(m, "POST", base + "/active_class", R"({"class_id":1})").body["active_class"],
            1);
  EXPECT_EQ(HandleHttp(m, "POST", base + "/mode", R"({"mode":"assessment"})").status, 409);
  EXPECT_EQ(HandleHttp(m, "POST", base + "/mode", R"({"mode":"sleep"})").status, 400);
  EXPECT_EQ(HandleHttp(m, "POST", base + "/lambda_blend", R"({"lambda_blend":0.5})")
                .body["lambda_blend"],
            0.5);
  EXPECT_EQ(HandleHttp(m, "POST", base + "/train", "{}").status, 400);  // no samples
  const auto missing = HandleHttp(m, "GET", "/sessions/s-nope", "");
  EXPECT_EQ(missing.status, 404);
  EXPECT_EQ(missing.body["error"]["code"], "not_found");
  EXPECT_EQ(missing.body["v"], 1);
  EXPECT_EQ(HandleHttp(m, "GET", "/jobs/job-9", "").status, 404);
  EXPECT_EQ(HandleHttp(m, "DELETE", base, "").status, 404);
  EXPECT_EQ(HandleHttp(m, "GET", "/sessions", "").body["sessions"][0], id);
  const auto events = HandleHttp(m, "GET", base + "/events", "").body;
  EXPECT_EQ(events[0]["type"], "session_created");
  // created, mug, auto-activation, pen, active_class, lambda_blend
  EXPECT_EQ(events.size(), 6u);
}

TEST(Http, StatusMapping) {
  EXPECT_EQ(HttpStatusFor(Errc::kNotFound), 404);
  EXPECT_EQ(HttpStatusFor(Errc::kConflict), 409);
  EXPECT_EQ(HttpStatusFor(Errc::kState), 409);
  EXPECT_EQ(HttpStatusFor(Errc::kValidation), 400);
  EXPECT_EQ(HttpStatusFor(Errc::kDataset), 400);
  EXPECT_EQ(HttpStatusFor(Errc::kIo), 500);
}

// ---- live server ----

TEST(Server, HttpAndStreamOverSockets) {
  TempDir root;
  SessionManager m(SmallConfig(root.path()));
  Server server(m);
  server.Start("127.0.0.1", 0);
  ASSERT_GT(server.port(), 0);
  const auto [st, body] = testing::HttpCall(server.port(), "POST", "/sessions", json::object());
  ASSERT_EQ(st, 201);
  const std::string id = body["session_id"];
  testing::HttpCall(server.port(), "POST", "/sessions/" + id + "/classes", {{"label", "mug"}});

  testing::WsClient ws(server.port(), "/sessions/" + id + "/stream", 30);
  ws.Send(MakeFrameMessage(1, 10, Frame(0, 0)));
  auto reply = ws.Receive();
  EXPECT_EQ(reply["type"], "highlight");
  EXPECT_EQ(reply["frame_id"], 1);
  EXPECT_NO_THROW(ValidateServerMessage(reply));

  ws.Send(MakeCaptureMessage(2, Frame(0, 1)));
  reply = ws.Receive();
  EXPECT_EQ(reply["type"], "captured");
  EXPECT_EQ(reply["sample_count"], 1);

  ws.SendRaw("not json");
  reply = ws.Receive();
  EXPECT_EQ(reply["type"], "error");
  EXPECT_EQ(reply["code"], "protocol");

  json junk = {{"v", 1}, {"type", "frame"}, {"id", 3}, {"ts", 0}, {"data", "AAAA"}};
  ws.Send(junk);
  reply = ws.Receive();
  EXPECT_EQ(reply["type"], "error");
  EXPECT_EQ(reply["code"], "protocol");
  EXPECT_EQ(reply["ref_id"], 3);

  ws.Send(MakeCaptureMessage(4, ImageFrame::Filled(kW * 2, kH, {})));
  reply = ws.Receive();
  EXPECT_EQ(reply["code"], "protocol");
  EXPECT_EQ(reply["ref_id"], 4);

  // Read-your-writes: the count the client saw is what is persisted.
  EXPECT_EQ(data::LoadSession(m.Get(id)->dir()).classes[0].sample_count, 1);

  EXPECT_THROW(testing::WsClient(server.port(), "/sessions/s-unknown/stream", 5),
               boost::system::system_error);
  server.Stop();
}

TEST(Server, BurstOfFramesNeverQueues) {
  TempDir root;
  SessionManager m(SmallConfig(root.path()));
  Server server(m);
  server.Start("127.0.0.1", 0);
  const auto id = m.Create()->id();
  testing::WsClient ws(server.port(), "/sessions/" + id + "/stream", 30);
  const auto msg = MakeFrameMessage(0, 0, Frame(1, 0));
  const int sent = 200;
  for (int i = 0; i < sent; ++i) {
    auto f = msg;
    f["id"] = i;
    ws.Send(f);
  }
  // An invalid message is rejected on the reader thread; its error ends the burst.
  ws.Send(MakeErrorMessage("x", "y"));
  int highlights = 0;
  std::int64_t last_id = -1;
  while (true) {
    const auto r = ws.Receive();
    if (r["type"] == "error") break;
    ASSERT_EQ(r["type"], "highlight");
    EXPECT_GT(r["frame_id"].get<std::int64_t>(), last_id);
    last_id = r["frame_id"];
    ++highlights;
  }
  const auto drops = m.Get(id)->drops();
  EXPECT_GT(drops, 0u);
  EXPECT_LE(static_cast<int>(drops) + highlights, sent);
  server.Stop();
}

}  // namespace
}  // namespace gimt::service
