// Command-line entry point: dataset tooling, training, evaluation and the
// teaching server.

#include <csignal>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "gimt/core/codec.hpp"
#include "gimt/core/error.hpp"
#include "gimt/datamgmt/hutics.hpp"
#include "gimt/datamgmt/synthetic.hpp"
#include "gimt/evalbench/bench.hpp"
#include "gimt/service/server.hpp"

namespace {
using namespace gimt;
namespace fs = std::filesystem;
using nlohmann::json;

struct HandOptions {
  std::string backend = "constant";
  std::string model;
  std::vector<std::string> arms = {"left-arm", "right-arm"};

  void Add(CLI::App* app) {
    app->add_option("--handseg-backend", backend, "constant | oracle | pretrained-parser")
        ->capture_default_str();
    app->add_option("--handseg-model", model,
                    "parser weights (pretrained-parser) or fixture dir (oracle)");
    app->add_option("--arm-labels", arms, "parser labels that form the hand mask")
        ->capture_default_str();
  }
  handseg::HandSegmentorConfig Config() const {
    handseg::HandSegmentorConfig c;
    c.backend_id = backend;
    c.model_path = model;
    c.arm_label_names = {arms.begin(), arms.end()};
    return c;
  }
};

struct ScheduleOptions {
  highlight::HighlighterTrainConfig config;
  int input_width = kCaptureWidth;
  int input_height = kCaptureHeight;
  std::string encoder_weights;

  void Add(CLI::App* app) {
    app->add_option("--epochs", config.epochs)->capture_default_str();
    app->add_option("--batch-size", config.batch_size)->capture_default_str();
    app->add_option("--lr-initial", config.lr_initial)->capture_default_str();
    app->add_option("--lr-final", config.lr_final)->capture_default_str();
    app->add_option("--hold-head", config.lr_hold_head)->capture_default_str();
    app->add_option("--hold-tail", config.lr_hold_tail)->capture_default_str();
    app->add_option("--seed", config.seed, "training seed")->capture_default_str();
    app->add_option("--input-width", input_width)->capture_default_str();
    app->add_option("--input-height", input_height)->capture_default_str();
    app->add_option("--encoder-weights", encoder_weights, "pretrained encoder archive");
  }
};

data::DatasetSplit LoadSplit(const fs::path& root, double ratio, std::uint64_t seed) {
  auto loaded = data::LoadHuTics(root);
  for (const auto& issue : loaded.issues) {
    std::cerr << "skipped " << issue.record << ": " << issue.problem << "\n";
  }
  return data::SplitByParticipant(loaded.records, ratio, seed);
}

std::vector<ImageFrame> BenchFrames(const std::vector<data::HuTicsRecord>& records,
                                    std::size_t n) {
  std::vector<ImageFrame> frames;
  for (std::size_t i = 0; i < n && !records.empty(); ++i) {
    frames.push_back(data::LoadRecordImage(records[i % records.size()]));
  }
  return frames;
}

void PrintEpoch(const highlight::EpochStats& s) {
  std::cerr << "epoch " << s.epoch << " lr " << s.lr << " loss " << s.mean_loss << "\n";
}

int RunSynthData(const fs::path& out, int participants, int per, int width, int height,
                 std::uint64_t seed, const fs::path& fixtures) {
  const auto hands = data::synth::WriteSyntheticHuTics(out, participants, per, width, height,
                                                       seed);
  if (!fixtures.empty()) {
    for (const auto& h : hands) handseg::WriteOracleFixture(fixtures, h.record_id, h.hand);
  }
  std::cout << "wrote " << hands.size() << " images to " << out.string() << "\n";
  return 0;
}

int RunTrainHighlighter(const fs::path& data_root, const std::string& backbone,
                        const std::string& decoder, const ScheduleOptions& sched,
                        const HandOptions& hands, double ratio, std::uint64_t split_seed,
                        int worst, int fps_frames, const fs::path& out) {
  const auto split = LoadSplit(data_root, ratio, split_seed);
  highlight::HighlighterOptions options;
  options.spec = {backbone, decoder};
  options.input_width = sched.input_width;
  options.input_height = sched.input_height;
  options.encoder_weights = sched.encoder_weights;
  auto result = highlight::TrainHighlighter(split, options, sched.config, hands.Config(),
                                            PrintEpoch);
  fs::create_directories(out);
  result.model.Save(out / "model.bin");

  if (fps_frames > 0) {
    const auto frames = BenchFrames(split.test.empty() ? split.train : split.test,
                                    static_cast<std::size_t>(fps_frames) + 5);
    result.report.fps = eval::BenchmarkFps(result.model, hands.Config(), frames, 5).fps;
  }
  result.report.seed = split_seed;
  json report = eval::ToJson(result.report);
  report["train_seed"] = sched.config.seed;
  if (result.report.fps) {
    report["fps_protocol"] = "batch 1, in-memory frames, 1 thread, median per-frame rate";
  }
  WriteFileAtomic(out / "report.json", report.dump(2));

  auto segmentor = std::make_shared<const handseg::HandSegmentor>(hands.Config());
  highlight::RecordExampleSource test(split.test, segmentor);
  if (test.size() > 0) {
    eval::WriteWorstCases(result.model, test, result.report, static_cast<std::size_t>(worst),
                          out / "worst_cases");
  }
  std::cout << "test mIoU " << result.report.miou;
  if (result.report.fps) std::cout << "  fps " << *result.report.fps;
  std::cout << "\n";
  return 0;
}

highlight::HighlighterModel LoadHighlighter(const fs::path& path) {
  return highlight::HighlighterModel::Load(fs::is_directory(path) ? path / "model.bin" : path);
}

int RunEval(const fs::path& model_path, const fs::path& data_root, const HandOptions& hands,
            double ratio, std::uint64_t split_seed, int fps_frames, const fs::path& out) {
  const auto model = LoadHighlighter(model_path);
  const auto split = LoadSplit(data_root, ratio, split_seed);
  if (split.test.empty()) throw Error(Errc::kDataset, "the split has no test records");
  auto segmentor = std::make_shared<const handseg::HandSegmentor>(hands.Config());
  highlight::RecordExampleSource test(split.test, segmentor);
  auto report = highlight::EvaluateHighlighter(model, test, "participant split, seed " +
                                                                std::to_string(split_seed));
  report.seed = split_seed;
  if (fps_frames > 0) {
    report.fps = eval::BenchmarkFps(model, hands.Config(),
                                    BenchFrames(split.test, static_cast<std::size_t>(fps_frames) + 5),
                                    5)
                     .fps;
  }
  const std::string text = eval::ToJson(report).dump(2);
  if (out.empty()) {
    std::cout << text << "\n";
  } else {
    WriteFileAtomic(out, text);
    std::cout << "mIoU " << report.miou << "\n";
  }
  return 0;
}

int RunCompare(const fs::path& data_root, const std::string& backbone,
               const std::vector<std::string>& decoders, const ScheduleOptions& sched,
               const HandOptions& hands, double ratio, std::uint64_t split_seed, int fps_frames,
               const fs::path& out) {
  const auto split = LoadSplit(data_root, ratio, split_seed);
  std::vector<highlight::ModelSpec> specs;
  for (const auto& d : decoders) {
    // "<backbone>+<decoder>" overrides --backbone for one entry.
    const auto plus = d.find('+');
    specs.push_back(plus == std::string::npos
                        ? highlight::ModelSpec{backbone, d}
                        : highlight::ModelSpec{d.substr(0, plus), d.substr(plus + 1)});
  }
  auto segmentor = std::make_shared<const handseg::HandSegmentor>(hands.Config());
  highlight::RecordExampleSource train(split.train, segmentor);
  highlight::RecordExampleSource test(split.test, segmentor);
  highlight::HighlighterOptions base;
  base.input_width = sched.input_width;
  base.input_height = sched.input_height;
  base.encoder_weights = sched.encoder_weights;
  const auto rows = eval::CompareArchitectures(
      train, test, specs, base, sched.config, hands.Config(),
      BenchFrames(split.test.empty() ? split.train : split.test,
                  static_cast<std::size_t>(fps_frames) + 5),
      5);
  std::cout << eval::RenderTable(rows);
  if (!out.empty()) WriteFileAtomic(out, eval::ToJson(rows).dump(2));
  return 0;
}

int RunTrainUser(const fs::path& session_dir, teach::UserTrainConfig config, double lambda,
                 const fs::path& out) {
  const auto session = data::LoadSession(session_dir);
  auto model = teach::TrainUserModel(
      session.classes, session.samples, config, lambda, [](const teach::UserEpochStats& s) {
        std::cerr << "epoch " << s.epoch << " loss " << s.mean_loss << "\n";
      });
  model.set_lambda_blend(session.lambda_blend);
  model.Save(out);
  std::cout << model.metrics().dump() << "\n";
  return 0;
}

int RunCrossEval(const fs::path& model_dir, const fs::path& session_dir) {
  const auto model = teach::UserModel::Load(model_dir);
  const auto foreign = data::LoadSession(session_dir);
  const double acc = eval::CrossConditionEval(model, foreign.classes, foreign.samples);
  std::cout << json{{"accuracy", acc}, {"samples", foreign.samples.size()}}.dump() << "\n";
  return 0;
}

std::atomic<bool> g_stop{false};

int RunServe(const std::string& address, unsigned short port, const fs::path& config_file,
             const std::string& highlighter, const fs::path& static_dir) {
  service::ServiceConfig config = config_file.empty()
                                      ? service::ServiceConfig{}
                                      : service::LoadServiceConfig(config_file);
  if (!highlighter.empty()) {
    config.highlighter_model =
        fs::is_directory(highlighter) ? (fs::path(highlighter) / "model.bin").string()
                                      : highlighter;
  }
  service::SessionManager manager(config);
  service::Server server(manager, static_dir);
  server.Start(address, port);
  std::cout << "listening on " << address << ":" << server.port() << std::endl;
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
  server.Stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gesture-guided interactive machine teaching"};
  app.require_subcommand(1);

  // synth-data
  fs::path synth_out, synth_fixtures;
  int synth_participants = 10, synth_per = 12, synth_w = 64, synth_h = 64;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth-data", "write a synthetic dataset in HuTics layout");
  synth->add_option("--out", synth_out)->required();
  synth->add_option("--participants", synth_participants)->capture_default_str();
  synth->add_option("--per-participant", synth_per)->capture_default_str();
  synth->add_option("--width", synth_w)->capture_default_str();
  synth->add_option("--height", synth_h)->capture_default_str();
  synth->add_option("--seed", synth_seed)->capture_default_str();
  synth->add_option("--hand-fixtures", synth_fixtures, "also write oracle hand fixtures here");

  // index-hutics
  fs::path index_root;
  auto* index = app.add_subcommand("index-hutics", "write metadata.json for a HuTics layout");
  index->add_option("--data", index_root)->required();

  // train-highlighter
  fs::path th_data, th_out;
  std::string th_backbone = "efficientnet-b0", th_decoder = "unet";
  double th_ratio = 0.8;
  std::uint64_t th_split_seed = 0;
  int th_worst = 8, th_fps = 30;
  ScheduleOptions th_sched;
  HandOptions th_hands;
  auto* th = app.add_subcommand("train-highlighter", "train the object highlighter");
  th->add_option("--data", th_data)->required();
  th->add_option("--out", th_out)->required();
  th->add_option("--backbone", th_backbone)->capture_default_str();
  th->add_option("--decoder", th_decoder)->capture_default_str();
  th->add_option("--split-ratio", th_ratio)->capture_default_str();
  th->add_option("--split-seed", th_split_seed)->capture_default_str();
  th->add_option("--worst", th_worst, "number of worst cases to render")->capture_default_str();
  th->add_option("--fps-frames", th_fps, "0 skips the throughput benchmark")->capture_default_str();
  th_sched.Add(th);
  th_hands.Add(th);

  // eval
  fs::path ev_model, ev_data, ev_out;
  double ev_ratio = 0.8;
  std::uint64_t ev_seed = 0;
  int ev_fps = 0;
  HandOptions ev_hands;
  auto* ev = app.add_subcommand("eval", "evaluate a highlighter on the test split");
  ev->add_option("--model", ev_model, "model.bin or its directory")->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--split-seed", ev_seed)->capture_default_str();
  ev->add_option("--split-ratio", ev_ratio)->capture_default_str();
  ev->add_option("--fps-frames", ev_fps, "0 skips the throughput benchmark")
      ->capture_default_str();
  ev->add_option("--out", ev_out, "report path (stdout when omitted)");
  ev_hands.Add(ev);

  // compare-arch
  fs::path ca_data, ca_out;
  std::string ca_backbone = "efficientnet-b0";
  std::vector<std::string> ca_specs;
  double ca_ratio = 0.8;
  std::uint64_t ca_seed = 0;
  int ca_fps = 30;
  ScheduleOptions ca_sched;
  HandOptions ca_hands;
  auto* ca = app.add_subcommand("compare-arch", "train and rank several decoders");
  ca->add_option("--data", ca_data)->required();
  ca->add_option("--specs", ca_specs, "decoders or backbone+decoder pairs")
      ->required()
      ->delimiter(',');
  ca->add_option("--backbone", ca_backbone)->capture_default_str();
  ca->add_option("--split-ratio", ca_ratio)->capture_default_str();
  ca->add_option("--split-seed", ca_seed)->capture_default_str();
  ca->add_option("--fps-frames", ca_fps)->capture_default_str();
  ca->add_option("--out", ca_out, "JSON table path");
  ca_sched.Add(ca);
  ca_hands.Add(ca);

  // train-user-model
  fs::path tu_session, tu_out;
  teach::UserTrainConfig tu_config;
  double tu_lambda = teach::kDefaultLambdaLoss;
  bool tu_no_decoder = false, tu_no_pretrained = false;
  std::string tu_weights;
  auto* tu = app.add_subcommand("train-user-model", "train a classifier on a saved session");
  tu->add_option("--session", tu_session)->required();
  tu->add_option("--out", tu_out)->required();
  tu->add_option("--encoder", tu_config.encoder_id)->capture_default_str();
  tu->add_option("--epochs", tu_config.epochs)->capture_default_str();
  tu->add_option("--batch-size", tu_config.batch_size)->capture_default_str();
  tu->add_option("--lr", tu_config.lr)->capture_default_str();
  tu->add_option("--seed", tu_config.seed)->capture_default_str();
  tu->add_option("--input-width", tu_config.input_width)->capture_default_str();
  tu->add_option("--input-height", tu_config.input_height)->capture_default_str();
  tu->add_option("--lambda", tu_lambda, "segmentation loss weight")->capture_default_str();
  tu->add_option("--encoder-weights", tu_weights);
  tu->add_flag("--no-seg-decoder", tu_no_decoder);
  tu->add_flag("--no-pretrained", tu_no_pretrained);

  // cross-eval
  fs::path ce_model, ce_session;
  auto* ce = app.add_subcommand("cross-eval", "accuracy of a user model on another session");
  ce->add_option("--model", ce_model)->required();
  ce->add_option("--session", ce_session)->required();

  // serve
  std::string sv_address = "127.0.0.1", sv_highlighter;
  unsigned short sv_port = 8080;
  fs::path sv_config, sv_static;
  auto* sv = app.add_subcommand("serve", "run the teaching server");
  sv->add_option("--port", sv_port)->capture_default_str();
  sv->add_option("--address", sv_address)->capture_default_str();
  sv->add_option("--config", sv_config, "JSON service config");
  sv->add_option("--highlighter", sv_highlighter, "overrides highlighter.model");
  sv->add_option("--static", sv_static, "directory served for plain GET requests");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      return RunSynthData(synth_out, synth_participants, synth_per, synth_w, synth_h, synth_seed,
                          synth_fixtures);
    }
    if (*index) {
      std::cout << "indexed " << data::IndexHuTicsLayout(index_root) << " images\n";
      return 0;
    }
    if (*th) {
      return RunTrainHighlighter(th_data, th_backbone, th_decoder, th_sched, th_hands, th_ratio,
                                 th_split_seed, th_worst, th_fps, th_out);
    }
    if (*ev) return RunEval(ev_model, ev_data, ev_hands, ev_ratio, ev_seed, ev_fps, ev_out);
    if (*ca) {
      return RunCompare(ca_data, ca_backbone, ca_specs, ca_sched, ca_hands, ca_ratio, ca_seed,
                        ca_fps, ca_out);
    }
    if (*tu) {
      tu_config.seg_decoder = !tu_no_decoder;
      tu_config.pretrained_encoder = !tu_no_pretrained;
      tu_config.encoder_weights = tu_weights;
      return RunTrainUser(tu_session, tu_config, tu_lambda, tu_out);
    }
    if (*ce) return RunCrossEval(ce_model, ce_session);
    if (*sv) return RunServe(sv_address, sv_port, sv_config, sv_highlighter, sv_static);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  return 0;
}
