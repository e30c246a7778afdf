#include "gimt/evalbench/bench.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <torch/torch.h>

#include "gimt/core/codec.hpp"
#include "gimt/core/error.hpp"

namespace gimt::eval {

double CrossConditionEval(const teach::UserModel& model,
                          const std::vector<data::ClassDef>& foreign_classes,
                          const std::vector<data::TeachingSample>& foreign_samples,
                          const std::map<std::string, std::string>& label_map) {
  if (foreign_samples.empty()) throw Error(Errc::kArgument, "no foreign samples");
  std::map<std::string, int> model_ids;
  for (const auto& c : model.classes()) model_ids[c.label] = c.class_id;

  std::map<int, int> to_model;
  std::vector<std::string> unmatched;
  for (const auto& c : foreign_classes) {
    const auto renamed = label_map.find(c.label);
    const std::string& label = renamed == label_map.end() ? c.label : renamed->second;
    const auto it = model_ids.find(label);
    if (it == model_ids.end()) {
      unmatched.push_back(c.label);
    } else {
      to_model[c.class_id] = it->second;
    }
  }
  if (!unmatched.empty()) {
    std::string list;
    for (const auto& l : unmatched) list += (list.empty() ? "" : ", ") + l;
    throw Error(Errc::kMapping, "foreign labels without a model class: " + list);
  }

  std::vector<int> predictions, labels;
  for (const auto& s : foreign_samples) {
    const auto it = to_model.find(s.class_id);
    if (it == to_model.end()) {
      throw Error(Errc::kMapping, "sample '" + s.sample_id + "' has undeclared class " +
                                      std::to_string(s.class_id));
    }
    labels.push_back(it->second);
    predictions.push_back(teach::ArgmaxLowestTie(model.Logits(s.frame)));
  }
  return ClassificationAccuracy(predictions, labels);
}

FpsResult BenchmarkFps(const highlight::HighlighterModel& model,
                       const handseg::HandSegmentorConfig& hands,
                       const std::vector<ImageFrame>& frames, int warmup) {
  if (warmup < 0) throw Error(Errc::kArgument, "warmup must be >= 0");
  if (frames.size() < static_cast<std::size_t>(warmup) + 10) {
    throw Error(Errc::kArgument, "benchmark needs at least warmup + 10 = " +
                                     std::to_string(warmup + 10) + " frames, got " +
                                     std::to_string(frames.size()));
  }
  const handseg::HandSegmentor segmentor(hands);
  const int previous_threads = torch::get_num_threads();
  torch::set_num_threads(1);
  FpsResult result;
  result.warmup = warmup;
  try {
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const auto start = std::chrono::steady_clock::now();
      const BinaryMask hand = segmentor.Segment(frames[i]);
      const SoftMask out = highlight::PredictHighlight(model, frames[i], hand);
      const auto stop = std::chrono::steady_clock::now();
      if (out.shape() != frames[i].shape()) throw Error(Errc::kInference, "bad output shape");
      if (i < static_cast<std::size_t>(warmup)) continue;
      const double seconds = std::chrono::duration<double>(stop - start).count();
      result.per_frame_fps.push_back(1.0 / std::max(seconds, 1e-9));
    }
  } catch (...) {
    torch::set_num_threads(previous_threads);
    throw;
  }
  torch::set_num_threads(previous_threads);
  std::vector<double> sorted = result.per_frame_fps;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  result.fps = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return result;
}

std::vector<ArchitectureRow> CompareArchitectures(
    const highlight::ExampleSource& train, const highlight::ExampleSource& test,
    const std::vector<highlight::ModelSpec>& specs,
    const highlight::HighlighterOptions& base_options,
    const highlight::HighlighterTrainConfig& config,
    const handseg::HandSegmentorConfig& hands, const std::vector<ImageFrame>& bench_frames,
    int warmup) {
  if (specs.empty()) throw Error(Errc::kArgument, "no architectures to compare");
  for (const auto& s : specs) s.Validate();
  config.Validate();
  std::vector<ArchitectureRow> rows;
  for (const auto& s : specs) {
    auto options = base_options;
    options.spec = s;
    if (options.normalize_input && s.backbone_id != base_options.spec.backbone_id) {
      options.normalize_input.reset();
    }
    auto trained = highlight::TrainHighlighterOn(train, test, options, config);
    ArchitectureRow row;
    row.spec = s;
    row.fps = BenchmarkFps(trained.model, hands, bench_frames, warmup).fps;
    trained.report.fps = row.fps;
    row.miou = trained.report.miou;
    row.report = std::move(trained.report);
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.miou > b.miou; });
  return rows;
}

std::string RenderTable(const std::vector<ArchitectureRow>& rows) {
  std::size_t width = std::string("architecture").size();
  for (const auto& r : rows) width = std::max(width, r.spec.ToString().size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "architecture" << "  "
     << std::right << std::setw(6) << "mIoU" << "  " << std::setw(8) << "fps" << "\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(static_cast<int>(width)) << r.spec.ToString() << "  "
       << std::right << std::fixed << std::setprecision(3) << std::setw(6) << r.miou << "  "
       << std::setprecision(1) << std::setw(8) << r.fps << "\n";
  }
  return os.str();
}

nlohmann::json ToJson(const std::vector<ArchitectureRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"backbone", r.spec.backbone_id},
                   {"decoder", r.spec.decoder_id},
                   {"miou", r.miou},
                   {"fps", r.fps},
                   {"report", ToJson(r.report)}});
  }
  return out;
}

std::vector<std::filesystem::path> WriteWorstCases(const highlight::HighlighterModel& model,
                                                   const highlight::ExampleSource& examples,
                                                   const EvalReport& report, std::size_t count,
                                                   const std::filesystem::path& dir) {
  if (report.per_image_iou.size() != examples.size()) {
    throw Error(Errc::kArgument, "report does not cover the given examples");
  }
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return report.per_image_iou[a] < report.per_image_iou[b];
  });
  order.resize(std::min(count, order.size()));
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const auto ex = examples.Get(order[rank]);
    const SoftMask pred = highlight::PredictHighlight(model, ex.frame, ex.hand);
    const ImageFrame panel = ConcatHorizontal(
        {ex.frame, OverlayHighlight(ex.frame, ToSoft(ex.object), {0, 200, 0}, 0.6),
         OverlayHighlight(ex.frame, pred, {230, 40, 40}, 0.6)});
    std::string id = ex.id;
    std::replace(id.begin(), id.end(), '/', '_');
    std::ostringstream name;
    name << std::setw(3) << std::setfill('0') << rank << "_" << id << ".png";
    const auto path = dir / name.str();
    WriteFileAtomic(path, EncodePng(panel));
    written.push_back(path);
  }
  return written;
}

}  // namespace gimt::eval
