#include "gimt/datamgmt/session_store.hpp"

#include <json.hpp>
#include <set>

#include "gimt/core/codec.hpp"
#include "gimt/core/error.hpp"
#include "gimt/core/mask_ops.hpp"

namespace gimt::data {
namespace fs = std::filesystem;
using nlohmann::json;

void ValidateClassDefs(const std::vector<ClassDef>& classes) {
  std::set<std::string> labels;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i].class_id != static_cast<int>(i)) {
      throw Error(Errc::kValidation, "class ids must be contiguous from 0");
    }
    if (!labels.insert(classes[i].label).second) {
      throw Error(Errc::kValidation, "duplicate class label '" + classes[i].label + "'");
    }
  }
}

TeachingSample MakeTeachingSample(std::string sample_id, int class_id,
                                  ImageFrame frame, const SoftMask& highlight,
                                  std::int64_t captured_at_ms,
                                  std::string session_id) {
  RequireSameShape(frame.shape(), highlight.shape(), "teaching sample");
  TeachingSample s;
  s.sample_id = std::move(sample_id);
  s.class_id = class_id;
  s.frame = std::move(frame);
  s.highlight_soft = QuantizeToU8Grid(highlight);
  s.highlight_bin = Binarize(s.highlight_soft, kDefaultBinarizeThreshold);
  s.captured_at_ms = captured_at_ms;
  s.session_id = std::move(session_id);
  return s;
}

std::string_view ModeName(Mode mode) {
  return mode == Mode::kTeaching ? "teaching" : "assessment";
}

std::optional<Mode> ParseMode(std::string_view name) {
  if (name == "teaching") return Mode::kTeaching;
  if (name == "assessment") return Mode::kAssessment;
  return std::nullopt;
}

namespace {

struct SamplePaths {
  std::string frame, soft, bin;
};

SamplePaths PathsFor(const std::string& sample_id) {
  return {"frames/" + sample_id + ".png", "masks/" + sample_id + ".soft.png",
          "masks/" + sample_id + ".bin.png"};
}

json ManifestJson(const SessionState& s) {
  json classes = json::array();
  for (const auto& c : s.classes) classes.push_back({{"id", c.class_id}, {"label", c.label}});
  json samples = json::array();
  for (const auto& smp : s.samples) {
    const SamplePaths p = PathsFor(smp.sample_id);
    samples.push_back({{"id", smp.sample_id},
                       {"class_id", smp.class_id},
                       {"frame", p.frame},
                       {"mask_soft", p.soft},
                       {"mask_bin", p.bin},
                       {"captured_at", smp.captured_at_ms}});
  }
  json j = {{"v", 1},
            {"session_id", s.session_id},
            {"mode", std::string(ModeName(s.mode))},
            {"lambda_blend", s.lambda_blend},
            {"classes", classes},
            {"samples", samples}};
  j["active_class"] = s.active_class ? json(*s.active_class) : json(nullptr);
  return j;
}

template <typename T>
T Field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw Error(Errc::kValidation, "session manifest: missing field '" +
                                       std::string(key) + "' in " + where);
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(Errc::kValidation, "session manifest: field '" +
                                       std::string(key) + "' in " + where +
                                       " has the wrong type");
  }
}

void WriteSampleFiles(const TeachingSample& sample, const fs::path& root) {
  const SamplePaths p = PathsFor(sample.sample_id);
  WriteFileAtomic(root / p.frame, EncodePng(sample.frame));
  WriteFileAtomic(root / p.soft, EncodePng(sample.highlight_soft));
  WriteFileAtomic(root / p.bin, EncodePng(sample.highlight_bin));
}

}  // namespace

void WriteManifest(const SessionState& session, const fs::path& root) {
  WriteFileAtomic(root / "session.json", ManifestJson(session).dump(2));
}

fs::path SaveSession(const SessionState& session, const fs::path& root) {
  fs::create_directories(root);
  for (const auto& sample : session.samples) WriteSampleFiles(sample, root);
  WriteManifest(session, root);
  return root / "session.json";
}

void PersistSample(const SessionState& session, const TeachingSample& sample,
                   const fs::path& root) {
  WriteSampleFiles(sample, root);
  WriteManifest(session, root);
}

SessionState LoadSession(const fs::path& root) {
  const fs::path manifest_path = root / "session.json";
  json j;
  try {
    const Bytes raw = ReadFileBytes(manifest_path);
    j = json::parse(raw.begin(), raw.end());
  } catch (const json::exception& e) {
    throw Error(Errc::kValidation,
                "session manifest " + manifest_path.string() +
                    " is not valid JSON: " + e.what());
  }
  SessionState s;
  s.session_id = Field<std::string>(j, "session_id", "manifest");
  if (j.contains("mode")) {
    const auto mode = ParseMode(Field<std::string>(j, "mode", "manifest"));
    if (!mode) throw Error(Errc::kValidation, "session manifest: field 'mode' has an unknown value");
    s.mode = *mode;
  }
  if (j.contains("lambda_blend")) s.lambda_blend = Field<double>(j, "lambda_blend", "manifest");
  if (j.contains("active_class") && !j["active_class"].is_null()) {
    s.active_class = Field<int>(j, "active_class", "manifest");
  }
  const auto classes = Field<json>(j, "classes", "manifest");
  if (!classes.is_array()) throw Error(Errc::kValidation, "session manifest: field 'classes' must be a list");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const std::string where = "classes[" + std::to_string(i) + "]";
    s.classes.push_back({Field<int>(classes[i], "id", where),
                         Field<std::string>(classes[i], "label", where), 0});
  }
  ValidateClassDefs(s.classes);

  const auto samples = Field<json>(j, "samples", "manifest");
  if (!samples.is_array()) throw Error(Errc::kValidation, "session manifest: field 'samples' must be a list");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string where = "samples[" + std::to_string(i) + "]";
    const json& sj = samples[i];
    TeachingSample smp;
    smp.sample_id = Field<std::string>(sj, "id", where);
    smp.class_id = Field<int>(sj, "class_id", where);
    if (smp.class_id < 0 || smp.class_id >= static_cast<int>(s.classes.size())) {
      throw Error(Errc::kValidation, "session manifest: field 'class_id' in " +
                                         where + " names an unknown class");
    }
    smp.frame = ReadImageFile(root / Field<std::string>(sj, "frame", where),
                              smp.sample_id);
    smp.highlight_soft = ReadSoftMaskFile(root / Field<std::string>(sj, "mask_soft", where));
    smp.highlight_bin = ReadBinaryMaskFile(root / Field<std::string>(sj, "mask_bin", where));
    smp.captured_at_ms = Field<std::int64_t>(sj, "captured_at", where);
    smp.session_id = s.session_id;
    RequireSameShape(smp.frame.shape(), smp.highlight_soft.shape(), where);
    RequireSameShape(smp.frame.shape(), smp.highlight_bin.shape(), where);
    ++s.classes[smp.class_id].sample_count;
    s.samples.push_back(std::move(smp));
  }
  return s;
}

}  // namespace gimt::data
