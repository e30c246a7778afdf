#include "gimt/handseg/handseg.hpp"

#include <algorithm>
#include <array>
#include <mutex>

#include "gimt/core/codec.hpp"
#include "gimt/core/error.hpp"

namespace gimt::handseg {
namespace fs = std::filesystem;

const LabelNames& LipLabelNames() {
  static const LabelNames kNames = {
      {0, "background"}, {1, "hat"},          {2, "hair"},        {3, "glove"},
      {4, "sunglasses"}, {5, "upper-clothes"}, {6, "dress"},       {7, "coat"},
      {8, "socks"},      {9, "pants"},        {10, "jumpsuits"},  {11, "scarf"},
      {12, "skirt"},     {13, "face"},        {14, "left-arm"},   {15, "right-arm"},
      {16, "left-leg"},  {17, "right-leg"},   {18, "left-shoe"},  {19, "right-shoe"}};
  return kNames;
}

void BodyPartLabelMap::Validate() const {
  if (labels.size() != shape.area()) {
    throw Error(Errc::kShape, "label map buffer does not match its shape");
  }
  const auto bg = label_names.find(0);
  if (bg == label_names.end() || bg->second != "background") {
    throw Error(Errc::kValidation, "label 0 must be named 'background'");
  }
  for (std::uint8_t l : labels) {
    if (!label_names.count(l)) {
      throw Error(Errc::kValidation, "label " + std::to_string(l) + " has no name");
    }
  }
}

namespace {

class ConstantParser final : public HumanParser {
 public:
  const LabelNames& label_names() const override { return LipLabelNames(); }
  BodyPartLabelMap Parse(const ImageFrame& frame) const override {
    return {frame.shape(), std::vector<std::uint8_t>(frame.shape().area(), 0),
            LipLabelNames()};
  }
};

class OracleParser final : public HumanParser {
 public:
  explicit OracleParser(fs::path dir) : dir_(std::move(dir)) {
    if (!fs::is_directory(dir_)) {
      throw Error(Errc::kInitialization,
                  "oracle fixture directory " + dir_.string() + " not found");
    }
  }
  const LabelNames& label_names() const override { return LipLabelNames(); }
  BodyPartLabelMap Parse(const ImageFrame& frame) const override {
    const fs::path fixture = dir_ / (frame.source_id() + ".hand.png");
    GreyImage grey;
    try {
      grey = DecodeGrey(ReadFileBytes(fixture));
    } catch (const Error& e) {
      throw Error(Errc::kInference, "frame '" + frame.source_id() +
                                        "': no usable oracle fixture (" +
                                        e.what() + ")");
    }
    if (!(grey.shape == frame.shape())) {
      throw Error(Errc::kInference, "frame '" + frame.source_id() +
                                        "': fixture is " + ToString(grey.shape) +
                                        ", frame is " + ToString(frame.shape()));
    }
    BodyPartLabelMap map{grey.shape, std::move(grey.values), LipLabelNames()};
    try {
      map.Validate();
    } catch (const Error& e) {
      throw Error(Errc::kInference, "frame '" + frame.source_id() + "': " + e.what());
    }
    return map;
  }

 private:
  fs::path dir_;
};

struct Registry {
  std::mutex mu;
  std::map<std::string, ParserFactory> factories;
};

Registry& GetRegistry() {
  static Registry* registry = [] {
    auto* r = new Registry;
    r->factories["constant"] = [](const HandSegmentorConfig&) {
      return std::make_unique<ConstantParser>();
    };
    r->factories["oracle"] = [](const HandSegmentorConfig& c) {
      return std::make_unique<OracleParser>(c.model_path);
    };
    r->factories["pretrained-parser"] = [](const HandSegmentorConfig& c) {
      return detail::MakeTorchScriptParser(c);
    };
    return r;
  }();
  return *registry;
}

std::string JoinNames(const LabelNames& names) {
  std::string out;
  for (const auto& [id, name] : names) {
    if (!out.empty()) out += ", ";
    out += name;
  }
  return out;
}

}  // namespace

void RegisterBackend(const std::string& backend_id, ParserFactory factory) {
  auto& reg = GetRegistry();
  std::lock_guard lock(reg.mu);
  reg.factories[backend_id] = std::move(factory);
}

std::vector<std::string> RegisteredBackends() {
  auto& reg = GetRegistry();
  std::lock_guard lock(reg.mu);
  std::vector<std::string> ids;
  for (const auto& [id, f] : reg.factories) ids.push_back(id);
  return ids;
}

std::unique_ptr<HumanParser> CreateParser(const HandSegmentorConfig& config) {
  ParserFactory factory;
  {
    auto& reg = GetRegistry();
    std::lock_guard lock(reg.mu);
    const auto it = reg.factories.find(config.backend_id);
    if (it == reg.factories.end()) {
      std::string known;
      for (const auto& [id, f] : reg.factories) known += (known.empty() ? "" : ", ") + id;
      throw Error(Errc::kConfig, "unknown hand segmentation backend '" +
                                     config.backend_id + "' (registered: " +
                                     known + ")");
    }
    factory = it->second;
  }
  return factory(config);
}

BinaryMask ExtractHandMask(const BodyPartLabelMap& map,
                           const std::set<std::string>& arm_label_names) {
  if (arm_label_names.empty()) {
    throw Error(Errc::kConfig, "arm label name set is empty");
  }
  std::vector<std::string> missing;
  std::array<bool, 256> selected{};
  for (const auto& name : arm_label_names) {
    bool found = false;
    for (const auto& [id, n] : map.label_names) {
      if (n == name && id >= 0 && id < 256) {
        selected[static_cast<std::size_t>(id)] = true;
        found = true;
      }
    }
    if (!found) missing.push_back(name);
  }
  if (!missing.empty()) {
    std::string m;
    for (const auto& s : missing) m += (m.empty() ? "" : ", ") + s;
    throw Error(Errc::kConfig, "label names not published by the parser: " + m +
                                   " (valid: " + JoinNames(map.label_names) + ")");
  }
  std::vector<std::uint8_t> out(map.labels.size());
  std::transform(map.labels.begin(), map.labels.end(), out.begin(),
                 [&](std::uint8_t l) { return static_cast<std::uint8_t>(selected[l]); });
  return BinaryMask(map.shape.width, map.shape.height, std::move(out));
}

HandSegmentor::HandSegmentor(HandSegmentorConfig config)
    : config_(std::move(config)) {
  if (config_.arm_label_names.empty()) {
    throw Error(Errc::kConfig, "arm label name set is empty");
  }
  parser_ = CreateParser(config_);
  for (const auto& name : config_.arm_label_names) {
    const auto& names = parser_->label_names();
    const bool known = std::any_of(names.begin(), names.end(),
                                   [&](const auto& kv) { return kv.second == name; });
    if (!known) {
      throw Error(Errc::kConfig, "arm label '" + name +
                                     "' not published by backend '" +
                                     config_.backend_id + "' (valid: " +
                                     JoinNames(names) + ")");
    }
  }
}

BodyPartLabelMap HandSegmentor::Parse(const ImageFrame& frame) const {
  return parser_->Parse(frame);
}

BinaryMask HandSegmentor::Segment(const ImageFrame& frame) const {
  return ExtractHandMask(parser_->Parse(frame), config_.arm_label_names);
}

void WriteOracleFixture(const fs::path& fixture_dir, const std::string& frame_id,
                        const BinaryMask& hand) {
  GreyImage grey{hand.shape(), std::vector<std::uint8_t>(hand.values().size())};
  for (std::size_t i = 0; i < grey.values.size(); ++i) {
    grey.values[i] = hand.values()[i] ? 14 : 0;
  }
  WriteFileAtomic(fixture_dir / (frame_id + ".hand.png"), EncodeGreyPng(grey));
}

}  // namespace gimt::handseg
