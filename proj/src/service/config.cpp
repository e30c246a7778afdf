#include "gimt/service/config.hpp"

#include "gimt/core/codec.hpp"
#include "gimt/core/error.hpp"

namespace gimt::service {
using nlohmann::json;

void ServiceConfig::Validate() const {
  if (!(lambda_blend >= 0.0 && lambda_blend <= 1.0)) {
    throw Error(Errc::kConfig, "blend.lambda must lie in [0,1]");
  }
  if (!(lambda_loss >= 0.0)) throw Error(Errc::kConfig, "loss.lambda must be >= 0");
  if (capture_width <= 0 || capture_height <= 0) {
    throw Error(Errc::kConfig, "capture size must be positive");
  }
  if (!(max_fps > 0.0)) throw Error(Errc::kConfig, "stream.max_fps must be positive");
  if (highlighter_model.empty()) throw Error(Errc::kConfig, "highlighter.model is required");
  train.Validate();
}

namespace {

// Looks up "a.b" as j["a"]["b"], falling back to a literal "a.b" key.
const json* Lookup(const json& j, const std::string& dotted) {
  if (const auto it = j.find(dotted); it != j.end()) return &*it;
  const json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted.find('.', start);
    const auto key = dotted.substr(start, dot == std::string::npos ? dotted.npos : dot - start);
    if (!cur->is_object()) return nullptr;
    const auto it = cur->find(key);
    if (it == cur->end()) return nullptr;
    cur = &*it;
    if (dot == std::string::npos) return cur;
    start = dot + 1;
  }
}

template <typename T>
void Read(const json& j, const std::string& key, T& out) {
  if (const json* v = Lookup(j, key)) {
    try {
      out = v->get<T>();
    } catch (const json::exception&) {
      throw Error(Errc::kConfig, "config key '" + key + "' has the wrong type");
    }
  }
}

}  // namespace

ServiceConfig ServiceConfigFromJson(const json& j) {
  if (!j.is_object()) throw Error(Errc::kConfig, "config must be a JSON object");
  ServiceConfig c;
  Read(j, "handseg.backend", c.handseg.backend_id);
  std::string handseg_model;
  Read(j, "handseg.model", handseg_model);
  c.handseg.model_path = handseg_model;
  if (Lookup(j, "handseg.arm_labels")) {
    std::vector<std::string> arms;
    Read(j, "handseg.arm_labels", arms);
    c.handseg.arm_label_names = {arms.begin(), arms.end()};
  }
  Read(j, "highlighter.model", c.highlighter_model);
  Read(j, "highlighter.input_width", c.highlighter_input_width);
  Read(j, "highlighter.input_height", c.highlighter_input_height);
  Read(j, "blend.lambda", c.lambda_blend);
  Read(j, "loss.lambda", c.lambda_loss);
  Read(j, "capture.width", c.capture_width);
  Read(j, "capture.height", c.capture_height);
  Read(j, "stream.max_fps", c.max_fps);
  std::string root = c.data_root.string();
  Read(j, "data.root", root);
  c.data_root = root;
  Read(j, "train.epochs", c.train.epochs);
  Read(j, "train.batch_size", c.train.batch_size);
  Read(j, "train.lr", c.train.lr);
  Read(j, "train.seed", c.train.seed);
  Read(j, "train.encoder_id", c.train.encoder_id);
  Read(j, "train.seg_decoder", c.train.seg_decoder);
  Read(j, "train.pretrained_encoder", c.train.pretrained_encoder);
  Read(j, "train.input_width", c.train.input_width);
  Read(j, "train.input_height", c.train.input_height);
  std::string weights;
  Read(j, "train.encoder_weights", weights);
  c.train.encoder_weights = weights;
  return c;
}

ServiceConfig LoadServiceConfig(const std::filesystem::path& file) {
  const Bytes bytes = ReadFileBytes(file);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw Error(Errc::kConfig, "cannot parse " + file.string() + ": " + e.what());
  }
  return ServiceConfigFromJson(j);
}

json ToJson(const ServiceConfig& c) {
  return {{"handseg", {{"backend", c.handseg.backend_id},
                       {"model", c.handseg.model_path.string()},
                       {"arm_labels", c.handseg.arm_label_names}}},
          {"highlighter", {{"model", c.highlighter_model},
                           {"input_width", c.highlighter_input_width},
                           {"input_height", c.highlighter_input_height}}},
          {"blend", {{"lambda", c.lambda_blend}}},
          {"loss", {{"lambda", c.lambda_loss}}},
          {"capture", {{"width", c.capture_width}, {"height", c.capture_height}}},
          {"stream", {{"max_fps", c.max_fps}}},
          {"data", {{"root", c.data_root.string()}}},
          {"train", teach::ToJson(c.train)}};
}

}  // namespace gimt::service
