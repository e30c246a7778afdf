#include "gimt/datamgmt/hutics.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <random>
#include <regex>
#include <set>

#include "gimt/core/codec.hpp"
#include "gimt/core/error.hpp"

namespace gimt::data {
namespace fs = std::filesystem;
using nlohmann::json;

std::string_view GestureName(Gesture g) {
  switch (g) {
    case Gesture::kExhibiting: return "exhibiting";
    case Gesture::kPointing: return "pointing";
    case Gesture::kPresenting: return "presenting";
    case Gesture::kTouching: return "touching";
  }
  return "unknown";
}

std::optional<Gesture> ParseGesture(std::string_view name) {
  for (Gesture g : kAllGestures) {
    if (GestureName(g) == name) return g;
  }
  return std::nullopt;
}

ImageFrame LoadRecordImage(const HuTicsRecord& record) {
  return ReadImageFile(record.image_path, record.record_id);
}

BinaryMask LoadRecordMask(const HuTicsRecord& record) {
  if (const auto* path = std::get_if<fs::path>(&record.mask)) {
    return ReadBinaryMaskFile(*path);
  }
  return RasterizePolygons(std::get<PolygonAnnotation>(record.mask),
                           record.shape.width, record.shape.height,
                           record.record_id);
}

namespace {

std::string RecordIdFor(const fs::path& rel_image) {
  fs::path p = rel_image;
  p.replace_extension();
  auto it = p.begin();
  if (it != p.end() && *it == "images") {
    fs::path stripped;
    for (++it; it != p.end(); ++it) stripped /= *it;
    p = stripped;
  }
  return p.generic_string();
}

PolygonAnnotation ParsePolygons(const json& j) {
  PolygonAnnotation polys;
  for (const auto& ring_j : j.at("polygons")) {
    Ring ring;
    for (const auto& v : ring_j) {
      ring.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
    }
    polys.rings.push_back(std::move(ring));
  }
  return polys;
}

// Returns the record or throws with a human readable problem.
HuTicsRecord ValidateEntry(const fs::path& root, const json& entry) {
  HuTicsRecord rec;
  const auto rel_image = fs::path(entry.at("image").get<std::string>());
  rec.record_id = RecordIdFor(rel_image);
  rec.image_path = root / rel_image;
  rec.participant_id = entry.at("participant").get<std::string>();
  const auto gesture_name = entry.at("gesture").get<std::string>();
  const auto gesture = ParseGesture(gesture_name);
  if (!gesture) throw std::runtime_error("unknown gesture '" + gesture_name + "'");
  rec.gesture = *gesture;

  if (!fs::exists(rec.image_path)) {
    throw std::runtime_error("missing image file " + rec.image_path.string());
  }
  const ImageFrame image = ReadImageFile(rec.image_path);
  rec.shape = image.shape();

  const json& mask_j = entry.at("mask");
  if (mask_j.is_string()) {
    const fs::path mask_path = root / mask_j.get<std::string>();
    if (!fs::exists(mask_path)) {
      throw std::runtime_error("missing mask file " + mask_path.string());
    }
    const BinaryMask mask = ReadBinaryMaskFile(mask_path);
    if (!(mask.shape() == rec.shape)) {
      throw std::runtime_error("mask " + ToString(mask.shape()) +
                               " does not match image " + ToString(rec.shape));
    }
    rec.mask = mask_path;
  } else {
    PolygonAnnotation polys = ParsePolygons(mask_j);
    ValidatePolygons(polys, rec.shape.width, rec.shape.height, rec.record_id);
    rec.mask = std::move(polys);
  }
  return rec;
}

}  // namespace

HuTicsLoadResult LoadHuTics(const fs::path& root) {
  const fs::path meta_path = root / "metadata.json";
  if (!fs::exists(meta_path)) {
    throw Error(Errc::kDataset, "no records: " + meta_path.string() + " not found");
  }
  json meta;
  try {
    const Bytes raw = ReadFileBytes(meta_path);
    meta = json::parse(raw.begin(), raw.end());
  } catch (const json::exception& e) {
    throw Error(Errc::kDataset, "unreadable metadata.json: " + std::string(e.what()));
  }
  if (!meta.is_array()) {
    throw Error(Errc::kDataset, "metadata.json must hold a list of records");
  }

  HuTicsLoadResult result;
  for (std::size_t i = 0; i < meta.size(); ++i) {
    const json& entry = meta[i];
    std::string label = "entry " + std::to_string(i);
    if (entry.is_object() && entry.contains("image") && entry["image"].is_string()) {
      label = entry["image"].get<std::string>();
    }
    try {
      result.records.push_back(ValidateEntry(root, entry));
    } catch (const std::exception& e) {
      result.issues.push_back({label, e.what()});
    }
  }
  if (result.records.empty()) {
    throw Error(Errc::kDataset,
                "no records (" + std::to_string(result.issues.size()) +
                    " invalid entries)");
  }
  std::sort(result.records.begin(), result.records.end(),
            [](const HuTicsRecord& a, const HuTicsRecord& b) {
              if (a.participant_id != b.participant_id) {
                return a.participant_id < b.participant_id;
              }
              return a.image_path < b.image_path;
            });
  for (const auto& r : result.records) {
    ++result.per_participant[r.participant_id];
    ++result.per_gesture[std::string(GestureName(r.gesture))];
  }
  return result;
}

std::size_t IndexHuTicsLayout(const fs::path& root) {
  const fs::path images = root / "images";
  if (!fs::is_directory(images)) {
    throw Error(Errc::kDataset, "no images/ directory under " + root.string());
  }
  static const std::regex kName(
      R"((exhibiting|pointing|presenting|touching)_(\d+)\.(jpg|jpeg|png))",
      std::regex::icase);
  std::vector<json> entries;
  for (const auto& pdir : fs::directory_iterator(images)) {
    if (!pdir.is_directory()) continue;
    const std::string pid = pdir.path().filename().string();
    for (const auto& f : fs::directory_iterator(pdir.path())) {
      std::smatch m;
      const std::string name = f.path().filename().string();
      if (!std::regex_match(name, m, kName)) continue;
      const std::string stem = f.path().stem().string();
      entries.push_back({{"image", "images/" + pid + "/" + name},
                         {"mask", "masks/" + pid + "/" + stem + ".png"},
                         {"participant", pid},
                         {"gesture", m[1].str()}});
    }
  }
  std::sort(entries.begin(), entries.end(), [](const json& a, const json& b) {
    return a["image"].get<std::string>() < b["image"].get<std::string>();
  });
  WriteFileAtomic(root / "metadata.json", json(entries).dump(2));
  return entries.size();
}

std::vector<std::string> PermuteParticipants(std::vector<std::string> ids,
                                             std::uint64_t seed) {
  // Fisher-Yates with rejection sampling over mt19937_64 output; avoids the
  // implementation-defined std::shuffle / uniform_int_distribution.
  std::mt19937_64 rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) {
    const std::uint64_t bound = i;
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() -
        std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw;
    do {
      draw = rng();
    } while (draw >= limit);
    std::swap(ids[i - 1], ids[static_cast<std::size_t>(draw % bound)]);
  }
  return ids;
}

DatasetSplit SplitByParticipant(const std::vector<HuTicsRecord>& records,
                                double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw Error(Errc::kArgument, "split ratio must lie in (0,1)");
  }
  std::set<std::string> unique;
  for (const auto& r : records) unique.insert(r.participant_id);
  if (unique.size() < 2) {
    throw Error(Errc::kDataset, "splitting needs at least 2 participants, got " +
                                    std::to_string(unique.size()));
  }
  const auto order = PermuteParticipants(
      std::vector<std::string>(unique.begin(), unique.end()), seed);
  const auto n_train = static_cast<std::size_t>(
      std::floor(ratio * static_cast<double>(order.size())));
  const std::set<std::string> train_ids(order.begin(), order.begin() + n_train);

  DatasetSplit split;
  split.seed = seed;
  split.ratio = ratio;
  for (const auto& r : records) {
    (train_ids.count(r.participant_id) ? split.train : split.test).push_back(r);
  }
  return split;
}

}  // namespace gimt::data
