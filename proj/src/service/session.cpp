#include "gimt/service/session.hpp"

#include <chrono>
#include <cstdio>
#include <random>

#include "gimt/core/error.hpp"
#include "gimt/core/mask_ops.hpp"

namespace gimt::service {
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::int64_t NowMs() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string RandomId(const char* prefix) {
  static std::mutex mu;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mu);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%012llx", prefix,
                static_cast<unsigned long long>(rng() & 0xffffffffffffULL));
  return buf;
}

std::string SampleId(std::uint64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample-%06llu", static_cast<unsigned long long>(n));
  return buf;
}

double ElapsedMs(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

}  // namespace

void ApplyEvent(data::SessionState& s, const SessionEvent& e) {
  if (e.type == "session_created") {
    s = data::SessionState{};
    s.session_id = e.data.at("session_id").get<std::string>();
    s.lambda_blend = e.data.at("lambda_blend").get<double>();
  } else if (e.type == "class_added") {
    s.classes.push_back({e.data.at("class_id").get<int>(), e.data.at("label").get<std::string>(),
                         0});
  } else if (e.type == "active_class_set") {
    s.active_class = e.data.at("class_id").get<int>();
  } else if (e.type == "mode_set") {
    s.mode = *data::ParseMode(e.data.at("mode").get<std::string>());
  } else if (e.type == "lambda_blend_set") {
    s.lambda_blend = e.data.at("lambda_blend").get<double>();
  } else if (e.type == "sample_captured") {
    if (!e.sample) throw Error(Errc::kValidation, "sample_captured event without a sample");
    s.samples.push_back(*e.sample);
    ++s.classes.at(static_cast<std::size_t>(e.sample->class_id)).sample_count;
  } else if (e.type == "model_attached") {
    // The model handle lives outside the persistable state.
  } else {
    throw Error(Errc::kValidation, "unknown session event '" + e.type + "'");
  }
}

data::SessionState ReplayEvents(const std::vector<SessionEvent>& events) {
  data::SessionState s;
  for (const auto& e : events) ApplyEvent(s, e);
  return s;
}

Pipeline LoadPipeline(const ServiceConfig& config) {
  Pipeline p;
  p.hands = std::make_shared<const handseg::HandSegmentor>(config.handseg);
  const std::string& ref = config.highlighter_model;
  if (ref.rfind("random:", 0) == 0) {
    const auto spec = ref.substr(7);
    const auto plus = spec.find('+');
    if (plus == std::string::npos) {
      throw Error(Errc::kConfig, "highlighter.model 'random:' needs <backbone>+<decoder>");
    }
    highlight::HighlighterOptions options;
    options.spec = {spec.substr(0, plus), spec.substr(plus + 1)};
    options.input_width = config.highlighter_input_width;
    options.input_height = config.highlighter_input_height;
    p.highlighter = std::make_shared<const highlight::HighlighterModel>(
        highlight::HighlighterModel::Create(options, 0));
  } else {
    p.highlighter = std::make_shared<const highlight::HighlighterModel>(
        highlight::HighlighterModel::Load(ref));
  }
  return p;
}

Session::Session(std::string session_id, const ServiceConfig& config, Pipeline pipeline,
                 fs::path dir, double lambda_blend)
    : id_(std::move(session_id)), config_(config), pipeline_(std::move(pipeline)),
      dir_(std::move(dir)) {
  if (!(lambda_blend >= 0.0 && lambda_blend <= 1.0)) {
    throw Error(Errc::kArgument, "lambda_blend must lie in [0,1]");
  }
  std::lock_guard lock(mu_);
  Log("session_created", {{"session_id", id_}, {"lambda_blend", lambda_blend}});
}

std::shared_ptr<Session> Session::Restore(const fs::path& dir, const ServiceConfig& config,
                                          Pipeline pipeline) {
  const data::SessionState loaded = data::LoadSession(dir);
  auto session = std::make_shared<Session>(loaded.session_id, config, std::move(pipeline), dir,
                                           loaded.lambda_blend);
  std::lock_guard lock(session->mu_);
  for (const auto& c : loaded.classes) {
    session->Log("class_added", {{"class_id", c.class_id}, {"label", c.label}});
  }
  for (const auto& s : loaded.samples) {
    session->Log("sample_captured", {{"sample_id", s.sample_id}, {"class_id", s.class_id}}, s);
    if (s.sample_id.rfind("sample-", 0) == 0) {
      try {
        session->next_sample_ =
            std::max<std::uint64_t>(session->next_sample_, std::stoull(s.sample_id.substr(7)) + 1);
      } catch (const std::exception&) {
      }
    }
  }
  if (loaded.active_class) session->Log("active_class_set", {{"class_id", *loaded.active_class}});
  if (fs::exists(dir / "model" / "weights.bin")) {
    session->user_model_ =
        std::make_shared<const teach::UserModel>(teach::UserModel::Load(dir / "model"));
    session->Log("model_attached", {{"job_id", "restored"}});
  }
  if (loaded.mode == data::Mode::kAssessment && session->user_model_) {
    session->Log("mode_set", {{"mode", "assessment"}});
  }
  return session;
}

void Session::Log(std::string type, json data, std::optional<data::TeachingSample> sample) {
  SessionEvent e{events_.size() + 1, std::move(type), std::move(data), std::move(sample)};
  ApplyEvent(state_, e);
  events_.push_back(std::move(e));
}

data::SessionState Session::Snapshot() const {
  std::lock_guard lock(mu_);
  return state_;
}

std::vector<SessionEvent> Session::Events() const {
  std::lock_guard lock(mu_);
  return events_;
}

json Session::Describe() const {
  std::lock_guard lock(mu_);
  json classes = json::array();
  for (const auto& c : state_.classes) {
    classes.push_back({{"id", c.class_id}, {"label", c.label}, {"sample_count", c.sample_count}});
  }
  return {{"session_id", id_},
          {"mode", data::ModeName(state_.mode)},
          {"classes", classes},
          {"active_class", state_.active_class ? json(*state_.active_class) : json()},
          {"lambda_blend", state_.lambda_blend},
          {"has_model", user_model_ != nullptr},
          {"job_id", active_job_ ? json(*active_job_) : json()},
          {"drops", drops_.load()},
          {"capture", {{"width", config_.capture_width}, {"height", config_.capture_height}}},
          {"max_fps", config_.max_fps}};
}

data::ClassDef Session::AddClass(const std::string& label) {
  if (label.empty()) throw Error(Errc::kValidation, "class label must not be empty");
  std::lock_guard lock(mu_);
  for (const auto& c : state_.classes) {
    if (c.label == label) throw Error(Errc::kConflict, "class '" + label + "' already exists");
  }
  const int id = static_cast<int>(state_.classes.size());
  const auto before = state_;
  Log("class_added", {{"class_id", id}, {"label", label}});
  if (!state_.active_class) Log("active_class_set", {{"class_id", id}});
  try {
    data::WriteManifest(state_, dir_);
  } catch (...) {
    state_ = before;
    events_.resize(events_.size() - (before.active_class ? 1 : 2));
    throw;
  }
  return state_.classes.back();
}

void Session::SetActiveClass(int class_id) {
  std::lock_guard lock(mu_);
  if (class_id < 0 || class_id >= static_cast<int>(state_.classes.size())) {
    throw Error(Errc::kArgument, "no class with id " + std::to_string(class_id));
  }
  Log("active_class_set", {{"class_id", class_id}});
  data::WriteManifest(state_, dir_);
}

void Session::SetMode(data::Mode mode) {
  std::lock_guard lock(mu_);
  if (mode == data::Mode::kAssessment && !user_model_) {
    throw Error(Errc::kState, "assessment mode needs a trained model");
  }
  if (mode == state_.mode) return;
  Log("mode_set", {{"mode", data::ModeName(mode)}});
  ++mode_epoch_;
  data::WriteManifest(state_, dir_);
}

void Session::SetLambdaBlend(double lambda_blend) {
  if (!(lambda_blend >= 0.0 && lambda_blend <= 1.0)) {
    throw Error(Errc::kArgument, "lambda_blend must lie in [0,1]");
  }
  std::lock_guard lock(mu_);
  Log("lambda_blend_set", {{"lambda_blend", lambda_blend}});
  data::WriteManifest(state_, dir_);
}

bool Session::TryBeginFrame() {
  if (frame_busy_.exchange(true)) {
    ++drops_;
    return false;
  }
  return true;
}

void Session::EndFrame() { frame_busy_.store(false); }

std::uint64_t Session::mode_epoch() const {
  std::lock_guard lock(mu_);
  return mode_epoch_;
}

void Session::RequireFrameShape(const ImageFrame& frame) const {
  if (frame.width() != config_.capture_width || frame.height() != config_.capture_height) {
    throw Error(Errc::kProtocol, "frame is " + ToString(frame.shape()) + ", expected " +
                                     std::to_string(config_.capture_width) + "x" +
                                     std::to_string(config_.capture_height));
  }
}

std::optional<FrameReply> Session::ProcessFrame(const FrameMessage& msg) {
  const auto start = std::chrono::steady_clock::now();
  RequireFrameShape(msg.frame);
  data::Mode mode;
  std::uint64_t epoch;
  double lambda_blend;
  std::shared_ptr<const teach::UserModel> model;
  std::vector<data::ClassDef> classes;
  {
    std::lock_guard lock(mu_);
    mode = state_.mode;
    epoch = mode_epoch_;
    lambda_blend = state_.lambda_blend;
    model = user_model_;
    classes = state_.classes;
  }

  std::optional<FrameReply> reply;
  if (mode == data::Mode::kTeaching) {
    const BinaryMask hand = pipeline_.hands->Segment(msg.frame);
    HighlightReply r;
    r.frame_id = msg.id;
    r.ts = msg.ts;
    r.mask = highlight::PredictHighlight(*pipeline_.highlighter, msg.frame, hand);
    reply = std::move(r);
  } else {
    const auto p = teach::Predict(*model, msg.frame, lambda_blend, msg.saliency_class);
    PredictionReply r;
    r.frame_id = msg.id;
    r.ts = msg.ts;
    r.confidences = p.confidences;
    r.predicted_class = p.predicted_class;
    r.predicted_label = model->classes().at(static_cast<std::size_t>(p.predicted_class)).label;
    r.saliency = p.saliency;
    r.saliency_class = p.saliency_class;
    reply = std::move(r);
  }

  std::lock_guard lock(mu_);
  if (mode_epoch_ != epoch) return std::nullopt;
  const double latency = ElapsedMs(start);
  std::visit(
      [&](auto& r) {
        r.latency_ms = latency;
        r.drops = drops_.load();
      },
      *reply);
  return reply;
}

CaptureAck Session::Capture(const CaptureMessage& msg) {
  RequireFrameShape(msg.frame);
  {
    std::lock_guard lock(mu_);
    if (state_.mode != data::Mode::kTeaching) {
      throw Error(Errc::kState, "captures are only accepted in teaching mode");
    }
    if (!state_.active_class) throw Error(Errc::kState, "no active class to capture for");
  }
  const BinaryMask hand = pipeline_.hands->Segment(msg.frame);
  const SoftMask highlight = highlight::PredictHighlight(*pipeline_.highlighter, msg.frame, hand);

  std::lock_guard lock(mu_);
  // Re-check: the mode or class may have changed during inference.
  if (state_.mode != data::Mode::kTeaching) {
    throw Error(Errc::kState, "captures are only accepted in teaching mode");
  }
  const int class_id = *state_.active_class;
  auto sample = data::MakeTeachingSample(SampleId(next_sample_), class_id,
                                         msg.frame.WithSourceId({}), highlight, NowMs(), id_);
  const auto before = state_;
  const auto event_count = events_.size();
  Log("sample_captured", {{"sample_id", sample.sample_id}, {"class_id", class_id}}, sample);
  try {
    data::PersistSample(state_, sample, dir_);
  } catch (...) {
    state_ = before;
    events_.resize(event_count);
    throw;
  }
  ++next_sample_;
  CaptureAck ack;
  ack.capture_id = msg.id;
  ack.sample_id = sample.sample_id;
  ack.class_id = class_id;
  ack.sample_count = state_.classes[static_cast<std::size_t>(class_id)].sample_count;
  for (const auto& c : state_.classes) ack.counts.push_back(c.sample_count);
  return ack;
}

std::shared_ptr<const teach::UserModel> Session::user_model() const {
  std::lock_guard lock(mu_);
  return user_model_;
}

void Session::AttachUserModel(std::shared_ptr<const teach::UserModel> model,
                              const std::string& job_id) {
  std::lock_guard lock(mu_);
  user_model_ = std::move(model);
  Log("model_attached", {{"job_id", job_id}});
}

Session::TrainingInput Session::BeginTraining(const std::string& job_id) {
  std::lock_guard lock(mu_);
  if (active_job_) {
    throw Error(Errc::kConflict, "session already has training job " + *active_job_);
  }
  if (state_.classes.size() < 2) {
    throw Error(Errc::kDataset, "training needs at least 2 classes");
  }
  for (const auto& c : state_.classes) {
    if (c.sample_count < 1) {
      throw Error(Errc::kDataset, "class '" + c.label + "' has no samples");
    }
  }
  active_job_ = job_id;
  return {state_.classes, state_.samples};
}

void Session::EndTraining(const std::string& job_id) {
  std::lock_guard lock(mu_);
  if (active_job_ == job_id) active_job_.reset();
}

std::optional<std::string> Session::active_job() const {
  std::lock_guard lock(mu_);
  return active_job_;
}

std::string_view JobStatusName(JobStatus status) {
  switch (status) {
    case JobStatus::kQueued: return "queued";
    case JobStatus::kRunning: return "running";
    case JobStatus::kDone: return "done";
    case JobStatus::kFailed: return "failed";
  }
  return "unknown";
}

json ToJson(const TrainingJob& job) {
  return {{"job_id", job.job_id},
          {"session_id", job.session_id},
          {"status", JobStatusName(job.status)},
          {"epoch", job.epoch},
          {"epochs", job.epochs},
          {"loss", job.loss ? json(*job.loss) : json()},
          {"error", job.error ? json(*job.error) : json()},
          {"metrics", job.metrics}};
}

SessionManager::SessionManager(ServiceConfig config)
    : SessionManager(config, LoadPipeline(config)) {}

SessionManager::SessionManager(ServiceConfig config, Pipeline pipeline)
    : config_(std::move(config)), pipeline_(std::move(pipeline)) {
  config_.Validate();
  const fs::path root = config_.data_root / "sessions";
  if (!fs::exists(root)) return;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory() || !fs::exists(entry.path() / "session.json")) continue;
    auto session = Session::Restore(entry.path(), config_, pipeline_);
    sessions_[session->id()] = std::move(session);
  }
}

SessionManager::~SessionManager() {
  stopping_ = true;
  for (auto& t : workers_) {
    if (t.joinable()) t.join();
  }
}

std::shared_ptr<Session> SessionManager::Create(std::optional<double> lambda_blend) {
  std::lock_guard lock(mu_);
  std::string id;
  do {
    id = RandomId("s-");
  } while (sessions_.count(id));
  auto session = std::make_shared<Session>(id, config_, pipeline_,
                                           config_.data_root / "sessions" / id,
                                           lambda_blend.value_or(config_.lambda_blend));
  data::SaveSession(session->Snapshot(), session->dir());
  sessions_[id] = session;
  return session;
}

std::shared_ptr<Session> SessionManager::Get(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw Error(Errc::kNotFound, "unknown session '" + session_id + "'");
  return it->second;
}

std::vector<std::string> SessionManager::SessionIds() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> ids;
  for (const auto& [id, s] : sessions_) ids.push_back(id);
  return ids;
}

TrainingJob SessionManager::StartTraining(const std::string& session_id,
                                          const json& overrides) {
  if (!overrides.is_null() && !overrides.is_object()) {
    throw Error(Errc::kValidation, "training request body must be a JSON object");
  }
  json merged = teach::ToJson(config_.train);
  double lambda_loss = config_.lambda_loss;
  if (overrides.is_object()) {
    for (const auto& [key, value] : overrides.items()) {
      if (key == "lambda_loss") {
        if (!value.is_number()) throw Error(Errc::kValidation, "lambda_loss must be a number");
        lambda_loss = value.get<double>();
      } else if (merged.contains(key)) {
        merged[key] = value;
      } else {
        throw Error(Errc::kValidation, "unknown training option '" + key + "'");
      }
    }
  }
  teach::UserTrainConfig config;
  try {
    config = teach::UserTrainConfigFromJson(merged);
  } catch (const Error& e) {
    throw Error(Errc::kValidation, e.what());
  }
  config.encoder_weights = config_.train.encoder_weights;
  return StartTraining(session_id, config, lambda_loss);
}

TrainingJob SessionManager::StartTraining(const std::string& session_id,
                                          const teach::UserTrainConfig& config,
                                          double lambda_loss) {
  config.Validate();
  if (!(lambda_loss >= 0.0)) throw Error(Errc::kArgument, "lambda_loss must be >= 0");
  auto session = Get(session_id);
  std::string job_id;
  {
    std::lock_guard lock(mu_);
    job_id = "job-" + std::to_string(++next_job_);
  }
  auto input = session->BeginTraining(job_id);
  TrainingJob job;
  job.job_id = job_id;
  job.session_id = session_id;
  job.epochs = config.epochs;
  std::lock_guard lock(mu_);
  jobs_[job_id] = job;
  workers_.emplace_back(&SessionManager::RunJob, this, job_id, session, config, lambda_loss,
                        std::move(input));
  return job;
}

void SessionManager::UpdateJob(const std::string& job_id,
                               const std::function<void(TrainingJob&)>& fn) {
  {
    std::lock_guard lock(mu_);
    fn(jobs_.at(job_id));
  }
  job_cv_.notify_all();
}

void SessionManager::RunJob(std::string job_id, std::shared_ptr<Session> session,
                            teach::UserTrainConfig config, double lambda_loss,
                            Session::TrainingInput input) {
  UpdateJob(job_id, [](TrainingJob& j) { j.status = JobStatus::kRunning; });
  try {
    auto model = teach::TrainUserModel(
        input.classes, input.samples, config, lambda_loss, [&](const teach::UserEpochStats& s) {
          if (stopping_) throw Error(Errc::kState, "service shutting down");
          UpdateJob(job_id, [&](TrainingJob& j) {
            j.epoch = s.epoch + 1;
            j.loss = s.mean_loss;
          });
        });
    model.set_lambda_blend(session->Snapshot().lambda_blend);
    model.Save(session->dir() / "model");
    const json metrics = model.metrics();
    session->AttachUserModel(std::make_shared<const teach::UserModel>(std::move(model)), job_id);
    session->EndTraining(job_id);
    UpdateJob(job_id, [&](TrainingJob& j) {
      j.status = JobStatus::kDone;
      j.metrics = metrics;
    });
  } catch (const std::exception& e) {
    session->EndTraining(job_id);
    const std::string message = e.what();
    UpdateJob(job_id, [&](TrainingJob& j) {
      j.status = JobStatus::kFailed;
      j.error = message;
    });
  }
}

TrainingJob SessionManager::Job(const std::string& job_id) const {
  std::lock_guard lock(mu_);
  const auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw Error(Errc::kNotFound, "unknown job '" + job_id + "'");
  return it->second;
}

TrainingJob SessionManager::WaitForJob(const std::string& job_id) const {
  std::unique_lock lock(mu_);
  const auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw Error(Errc::kNotFound, "unknown job '" + job_id + "'");
  job_cv_.wait(lock, [&] {
    const auto s = jobs_.at(job_id).status;
    return s == JobStatus::kDone || s == JobStatus::kFailed;
  });
  return jobs_.at(job_id);
}

}  // namespace gimt::service
