#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "gimt/core/image.hpp"

namespace gimt::handseg {

using LabelNames = std::map<int, std::string>;

// The 20-class human-parsing taxonomy (label 0 is background; 14 and 15 are
// the bare arms and hands).
const LabelNames& LipLabelNames();

struct BodyPartLabelMap {
  Shape shape;
  std::vector<std::uint8_t> labels;  // row-major
  LabelNames label_names;

  // Throws unless every label is named and label 0 is "background".
  void Validate() const;
};

struct HandSegmentorConfig {
  std::string backend_id = "constant";
  std::set<std::string> arm_label_names = {"left-arm", "right-arm"};
  // Weights file for "pretrained-parser"; fixture directory for "oracle".
  std::filesystem::path model_path;
  // Resolution the pretrained parser runs at.
  int native_width = 473;
  int native_height = 473;
};

// A human parser backend. Implementations are immutable after construction
// and safe to call concurrently.
class HumanParser {
 public:
  virtual ~HumanParser() = default;
  virtual const LabelNames& label_names() const = 0;
  virtual BodyPartLabelMap Parse(const ImageFrame& frame) const = 0;
};

using ParserFactory =
    std::function<std::unique_ptr<HumanParser>(const HandSegmentorConfig&)>;

// Built-in backends: "constant" (all background), "oracle" (reads
// <model_path>/<frame source_id>.hand.png holding label ids) and
// "pretrained-parser" (TorchScript module at model_path).
void RegisterBackend(const std::string& backend_id, ParserFactory factory);
std::vector<std::string> RegisteredBackends();
std::unique_ptr<HumanParser> CreateParser(const HandSegmentorConfig& config);

// Pixel is 1 iff its label's name is in `arm_label_names`.
BinaryMask ExtractHandMask(const BodyPartLabelMap& map,
                           const std::set<std::string>& arm_label_names);

// parse_human followed by extract_hand_mask.
class HandSegmentor {
 public:
  explicit HandSegmentor(HandSegmentorConfig config);

  const HandSegmentorConfig& config() const { return config_; }
  BodyPartLabelMap Parse(const ImageFrame& frame) const;
  BinaryMask Segment(const ImageFrame& frame) const;

 private:
  HandSegmentorConfig config_;
  std::shared_ptr<const HumanParser> parser_;
};

// Writes an oracle fixture for `frame_id` under `fixture_dir`, labelling the
// set pixels of `hand` as "left-arm".
void WriteOracleFixture(const std::filesystem::path& fixture_dir,
                        const std::string& frame_id, const BinaryMask& hand);

namespace detail {
std::unique_ptr<HumanParser> MakeTorchScriptParser(const HandSegmentorConfig& config);
}  // namespace detail

}  // namespace gimt::handseg
