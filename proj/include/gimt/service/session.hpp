#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "gimt/datamgmt/session_store.hpp"
#include "gimt/handseg/handseg.hpp"
#include "gimt/highlighter/highlighter.hpp"
#include "gimt/service/config.hpp"
#include "gimt/service/messages.hpp"
#include "gimt/teachtrain/user_model.hpp"

namespace gimt::service {

// One entry of a session's append-only log. Folding the log from an empty
// state with ApplyEvent reproduces the session state.
struct SessionEvent {
  std::uint64_t seq = 0;
  // session_created, class_added, active_class_set, mode_set,
  // lambda_blend_set, sample_captured, model_attached
  std::string type;
  nlohmann::json data;
  std::optional<data::TeachingSample> sample;  // sample_captured only
};

void ApplyEvent(data::SessionState& state, const SessionEvent& event);
data::SessionState ReplayEvents(const std::vector<SessionEvent>& events);

// Shared, read-only inference pipeline.
struct Pipeline {
  std::shared_ptr<const highlight::HighlighterModel> highlighter;
  std::shared_ptr<const handseg::HandSegmentor> hands;
};

Pipeline LoadPipeline(const ServiceConfig& config);

using FrameReply = std::variant<HighlightReply, PredictionReply>;

class Session {
 public:
  Session(std::string session_id, const ServiceConfig& config, Pipeline pipeline,
          std::filesystem::path dir, double lambda_blend);
  // Rebuilds a persisted session (and its model when present).
  static std::shared_ptr<Session> Restore(const std::filesystem::path& dir,
                                          const ServiceConfig& config, Pipeline pipeline);

  const std::string& id() const { return id_; }
  const std::filesystem::path& dir() const { return dir_; }

  data::SessionState Snapshot() const;
  std::vector<SessionEvent> Events() const;
  nlohmann::json Describe() const;

  data::ClassDef AddClass(const std::string& label);
  void SetActiveClass(int class_id);
  void SetMode(data::Mode mode);
  void SetLambdaBlend(double lambda_blend);

  // Latest-wins admission: false (counting a drop) while another frame of
  // this session is in flight.
  bool TryBeginFrame();
  void EndFrame();
  std::uint64_t drops() const { return drops_.load(); }
  std::uint64_t mode_epoch() const;

  // Highlight in teaching mode, prediction in assessment mode. Returns
  // nullopt when the mode changed while the frame was processed.
  std::optional<FrameReply> ProcessFrame(const FrameMessage& frame);
  // Stores frame + inferred highlight under the active class; the sample is
  // on disk before this returns.
  CaptureAck Capture(const CaptureMessage& capture);

  std::shared_ptr<const teach::UserModel> user_model() const;
  void AttachUserModel(std::shared_ptr<const teach::UserModel> model, const std::string& job_id);

  // Training bookkeeping: one job at a time.
  struct TrainingInput {
    std::vector<data::ClassDef> classes;
    std::vector<data::TeachingSample> samples;
  };
  TrainingInput BeginTraining(const std::string& job_id);
  void EndTraining(const std::string& job_id);
  std::optional<std::string> active_job() const;

 private:
  void Log(std::string type, nlohmann::json data,
           std::optional<data::TeachingSample> sample = std::nullopt);
  void RequireFrameShape(const ImageFrame& frame) const;

  const std::string id_;
  const ServiceConfig& config_;
  const Pipeline pipeline_;
  const std::filesystem::path dir_;

  mutable std::mutex mu_;
  data::SessionState state_;
  std::vector<SessionEvent> events_;
  std::shared_ptr<const teach::UserModel> user_model_;
  std::optional<std::string> active_job_;
  std::uint64_t mode_epoch_ = 0;
  std::uint64_t next_sample_ = 0;

  std::atomic<bool> frame_busy_{false};
  std::atomic<std::uint64_t> drops_{0};
};

enum class JobStatus { kQueued, kRunning, kDone, kFailed };
std::string_view JobStatusName(JobStatus status);

struct TrainingJob {
  std::string job_id;
  std::string session_id;
  JobStatus status = JobStatus::kQueued;
  int epoch = 0;  // completed epochs
  int epochs = 0;
  std::optional<double> loss;
  std::optional<std::string> error;
  nlohmann::json metrics;
};
nlohmann::json ToJson(const TrainingJob& job);

class SessionManager {
 public:
  // Restores every session persisted under config.data_root/sessions.
  SessionManager(ServiceConfig config, Pipeline pipeline);
  explicit SessionManager(ServiceConfig config);
  ~SessionManager();
  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  const ServiceConfig& config() const { return config_; }

  std::shared_ptr<Session> Create(std::optional<double> lambda_blend = std::nullopt);
  std::shared_ptr<Session> Get(const std::string& session_id) const;
  std::vector<std::string> SessionIds() const;

  // Validates synchronously (dataset error for < 2 classes or an empty
  // class, conflict while a job runs), then trains on a separate thread.
  TrainingJob StartTraining(const std::string& session_id, const teach::UserTrainConfig& config,
                            double lambda_loss);
  // Applies request-body overrides to the configured defaults.
  TrainingJob StartTraining(const std::string& session_id, const nlohmann::json& overrides);
  TrainingJob Job(const std::string& job_id) const;
  // Blocks until the job leaves queued/running.
  TrainingJob WaitForJob(const std::string& job_id) const;

 private:
  void RunJob(std::string job_id, std::shared_ptr<Session> session,
              teach::UserTrainConfig config, double lambda_loss, Session::TrainingInput input);
  void UpdateJob(const std::string& job_id, const std::function<void(TrainingJob&)>& fn);

  ServiceConfig config_;
  Pipeline pipeline_;
  mutable std::mutex mu_;
  mutable std::condition_variable job_cv_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, TrainingJob> jobs_;
  std::vector<std::thread> workers_;
  std::atomic<bool> stopping_{false};
  std::uint64_t next_job_ = 0;
};

}  // namespace gimt::service
