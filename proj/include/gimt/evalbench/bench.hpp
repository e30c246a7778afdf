#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "gimt/evalbench/metrics.hpp"
#include "gimt/handseg/handseg.hpp"
#include "gimt/highlighter/highlighter.hpp"
#include "gimt/teachtrain/user_model.hpp"

namespace gimt::eval {

// Accuracy of `model` on samples gathered under another teaching condition.
// Foreign classes are matched to the model's by label (optionally renamed
// through `label_map`, foreign -> model); any unmatched label is a mapping
// error listing all of them.
double CrossConditionEval(const teach::UserModel& model,
                          const std::vector<data::ClassDef>& foreign_classes,
                          const std::vector<data::TeachingSample>& foreign_samples,
                          const std::map<std::string, std::string>& label_map = {});

struct FpsResult {
  double fps = 0.0;  // median of per-frame rates
  std::vector<double> per_frame_fps;
  int threads = 1;
  int warmup = 0;
};

// Hand segmentation, input preparation and highlight prediction per frame,
// batch 1, frames already in memory, one intra-op thread.
FpsResult BenchmarkFps(const highlight::HighlighterModel& model,
                       const handseg::HandSegmentorConfig& hands,
                       const std::vector<ImageFrame>& frames, int warmup = 5);

struct ArchitectureRow {
  highlight::ModelSpec spec;
  double miou = 0.0;
  double fps = 0.0;
  EvalReport report;
};

// Trains every spec with the same options and config (seed included) and
// returns rows sorted by mIoU, best first; ties keep input order. Every spec
// is validated before any training starts.
std::vector<ArchitectureRow> CompareArchitectures(
    const highlight::ExampleSource& train, const highlight::ExampleSource& test,
    const std::vector<highlight::ModelSpec>& specs,
    const highlight::HighlighterOptions& base_options,
    const highlight::HighlighterTrainConfig& config,
    const handseg::HandSegmentorConfig& hands, const std::vector<ImageFrame>& bench_frames,
    int warmup = 5);

std::string RenderTable(const std::vector<ArchitectureRow>& rows);
nlohmann::json ToJson(const std::vector<ArchitectureRow>& rows);

// Writes the `count` lowest-IoU examples of `report` as
// <rank>_<id>.png: frame | ground truth overlay | prediction overlay.
// Returns the written paths.
std::vector<std::filesystem::path> WriteWorstCases(const highlight::HighlighterModel& model,
                                                   const highlight::ExampleSource& examples,
                                                   const EvalReport& report, std::size_t count,
                                                   const std::filesystem::path& dir);

}  // namespace gimt::eval
