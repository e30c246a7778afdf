#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gimt/core/image.hpp"
#include "gimt/core/polygon.hpp"

namespace gimt::data {

enum class Gesture { kExhibiting, kPointing, kPresenting, kTouching };

inline constexpr Gesture kAllGestures[] = {
    Gesture::kExhibiting, Gesture::kPointing, Gesture::kPresenting,
    Gesture::kTouching};

std::string_view GestureName(Gesture g);
std::optional<Gesture> ParseGesture(std::string_view name);

using MaskSource = std::variant<std::filesystem::path, PolygonAnnotation>;

// One annotated photo of a deictic gesture toward an object.
struct HuTicsRecord {
  // Image path relative to the dataset root, without extension and without a
  // leading "images/" component, e.g. "p017/pointing_2". Used as frame id.
  std::string record_id;
  std::filesystem::path image_path;
  MaskSource mask;
  std::string participant_id;
  Gesture gesture = Gesture::kPointing;
  Shape shape;
};

ImageFrame LoadRecordImage(const HuTicsRecord& record);
BinaryMask LoadRecordMask(const HuTicsRecord& record);

struct ValidationIssue {
  std::string record;
  std::string problem;
};

struct HuTicsLoadResult {
  std::vector<HuTicsRecord> records;  // sorted by participant, then image path
  std::vector<ValidationIssue> issues;
  std::map<std::string, int> per_participant;
  std::map<std::string, int> per_gesture;
};

// Reads `<root>/metadata.json`: a list of
//   {"image": <rel path>, "mask": <rel png path> | {"polygons": [[[x,y],...],...]},
//    "participant": <id>, "gesture": exhibiting|pointing|presenting|touching}
// Invalid entries are reported in `issues` and skipped; the call throws a
// dataset error only when no valid record remains.
HuTicsLoadResult LoadHuTics(const std::filesystem::path& root);

// Scans the canonical layout images/<pid>/<gesture>_<k>.{jpg,png} +
// masks/<pid>/<gesture>_<k>.png and writes metadata.json. Returns the number
// of entries written.
std::size_t IndexHuTicsLayout(const std::filesystem::path& root);

struct DatasetSplit {
  std::vector<HuTicsRecord> train;
  std::vector<HuTicsRecord> test;
  std::uint64_t seed = 0;
  double ratio = 0.8;
};

// Seeded participant permutation shared by every platform: the same inputs
// always give the same order.
std::vector<std::string> PermuteParticipants(std::vector<std::string> ids,
                                             std::uint64_t seed);

// Participants are shuffled with PermuteParticipants (after sorting); the
// first floor(ratio * P) go to train and the remainder to test.
DatasetSplit SplitByParticipant(const std::vector<HuTicsRecord>& records,
                                double ratio, std::uint64_t seed);

}  // namespace gimt::data
