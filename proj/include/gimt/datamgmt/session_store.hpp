#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gimt/core/image.hpp"

namespace gimt::data {

struct ClassDef {
  int class_id = 0;
  std::string label;
  int sample_count = 0;
  friend bool operator==(const ClassDef&, const ClassDef&) = default;
};

// Throws a validation error unless ids are 0..n-1 in order and labels unique.
void ValidateClassDefs(const std::vector<ClassDef>& classes);

// A captured demonstration: the frame plus the highlight inferred for it.
struct TeachingSample {
  std::string sample_id;
  int class_id = 0;
  ImageFrame frame;
  SoftMask highlight_soft;   // on the k/255 grid
  BinaryMask highlight_bin;  // Binarize(highlight_soft, 0.5)
  std::int64_t captured_at_ms = 0;
  std::string session_id;

  friend bool operator==(const TeachingSample&, const TeachingSample&) = default;
};

// Quantizes the soft highlight and derives the binary one.
TeachingSample MakeTeachingSample(std::string sample_id, int class_id,
                                  ImageFrame frame, const SoftMask& highlight,
                                  std::int64_t captured_at_ms,
                                  std::string session_id);

enum class Mode { kTeaching, kAssessment };
std::string_view ModeName(Mode mode);
std::optional<Mode> ParseMode(std::string_view name);

inline constexpr double kDefaultLambdaBlend = 0.718;

// The persistable part of a teaching session. Model handles are attached by
// the service layer.
struct SessionState {
  std::string session_id;
  Mode mode = Mode::kTeaching;
  std::vector<ClassDef> classes;
  std::vector<TeachingSample> samples;
  std::optional<int> active_class;
  double lambda_blend = kDefaultLambdaBlend;

  friend bool operator==(const SessionState&, const SessionState&) = default;
};

// Layout: session.json, frames/<id>.png, masks/<id>.soft.png,
// masks/<id>.bin.png. Every file is written to a temporary and renamed.
std::filesystem::path SaveSession(const SessionState& session,
                                  const std::filesystem::path& root);
// Writes one sample's files followed by the manifest for `session`, which
// must already contain the sample.
void PersistSample(const SessionState& session, const TeachingSample& sample,
                   const std::filesystem::path& root);
void WriteManifest(const SessionState& session,
                   const std::filesystem::path& root);
SessionState LoadSession(const std::filesystem::path& root);

}  // namespace gimt::data
