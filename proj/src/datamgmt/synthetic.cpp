#include "gimt/datamgmt/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "gimt/core/codec.hpp"
#include "gimt/core/error.hpp"
#include "gimt/core/mask_ops.hpp"
#include "gimt/datamgmt/hutics.hpp"

namespace gimt::data::synth {
namespace {

enum class ShapeKind { kRect, kEllipse, kTriangle };

struct Box {
  int x0, y0, x1, y1;  // half-open
};

bool Inside(ShapeKind kind, const Box& b, double px, double py) {
  const double cx = 0.5 * (b.x0 + b.x1);
  const double cy = 0.5 * (b.y0 + b.y1);
  const double rx = 0.5 * (b.x1 - b.x0);
  const double ry = 0.5 * (b.y1 - b.y0);
  switch (kind) {
    case ShapeKind::kRect:
      return px >= b.x0 && px < b.x1 && py >= b.y0 && py < b.y1;
    case ShapeKind::kEllipse: {
      const double dx = (px - cx) / rx;
      const double dy = (py - cy) / ry;
      return dx * dx + dy * dy <= 1.0;
    }
    case ShapeKind::kTriangle: {
      // Apex at the top centre, base along the bottom edge.
      if (py < b.y0 || py >= b.y1) return false;
      const double t = (py - b.y0) / (b.y1 - b.y0);
      return std::abs(px - cx) <= t * rx;
    }
  }
  return false;
}

BinaryMask ShapeMask(ShapeKind kind, const Box& box, int width, int height) {
  BinaryMask m(width, height);
  for (int y = std::max(0, box.y0); y < std::min(height, box.y1); ++y) {
    for (int x = std::max(0, box.x0); x < std::min(width, box.x1); ++x) {
      if (Inside(kind, box, x + 0.5, y + 0.5)) m.set(x, y, true);
    }
  }
  return m;
}

class Canvas {
 public:
  Canvas(int width, int height) : w_(width), h_(height), px_(std::size_t(width) * height * 3) {}

  void Background(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> base(70, 170), noise(-12, 12);
    const Rgb top{static_cast<std::uint8_t>(base(rng)), static_cast<std::uint8_t>(base(rng)),
                  static_cast<std::uint8_t>(base(rng))};
    for (int y = 0; y < h_; ++y) {
      for (int x = 0; x < w_; ++x) {
        const int shade = (y * 30) / std::max(1, h_) + noise(rng);
        Put(x, y, {Clamp(top.r + shade), Clamp(top.g + shade), Clamp(top.b + shade)});
      }
    }
  }

  void Fill(const BinaryMask& m, Rgb c, std::mt19937_64& rng, int jitter = 10) {
    std::uniform_int_distribution<int> noise(-jitter, jitter);
    for (int y = 0; y < h_; ++y) {
      for (int x = 0; x < w_; ++x) {
        if (m.at(x, y)) Put(x, y, {Clamp(c.r + noise(rng)), Clamp(c.g + noise(rng)),
                                   Clamp(c.b + noise(rng))});
      }
    }
  }

  ImageFrame Frame(std::string id) && {
    return ImageFrame(w_, h_, std::move(px_), std::move(id));
  }

 private:
  static std::uint8_t Clamp(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }
  void Put(int x, int y, Rgb c) {
    auto* p = &px_[(std::size_t(y) * w_ + x) * 3];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }
  int w_, h_;
  std::vector<std::uint8_t> px_;
};

Rgb RandomVivid(std::mt19937_64& rng) {
  static constexpr Rgb kPalette[] = {{220, 40, 40},  {40, 180, 60}, {40, 70, 220},
                                     {230, 200, 30}, {200, 60, 200}, {30, 200, 210},
                                     {240, 130, 20}, {20, 20, 20},   {245, 245, 245}};
  return kPalette[rng() % std::size(kPalette)];
}

// Vertical arm from the bottom border up to (and slightly into) the object.
BinaryMask ArmTo(const BinaryMask& object, const Box& box, int width, int height) {
  const int cx = (box.x0 + box.x1) / 2;
  const int half = std::max(1, width / 20);
  int top = box.y1 - 1;
  for (int y = box.y1 - 1; y >= box.y0; --y) {
    if (object.at(std::clamp(cx, 0, width - 1), y)) top = y;
  }
  const int tip = std::min(height, top + std::max(2, (box.y1 - top) / 3));
  BinaryMask arm(width, height);
  for (int y = tip; y < height; ++y) {
    for (int x = std::max(0, cx - half); x < std::min(width, cx + half + 1); ++x) {
      if (!object.at(x, y)) arm.set(x, y, true);
    }
  }
  return arm;
}

}  // namespace

ImageFrame DrawHand(const ImageFrame& frame, const BinaryMask& hand) {
  RequireSameShape(frame.shape(), hand.shape(), "draw_hand");
  std::vector<std::uint8_t> px(frame.pixels().begin(), frame.pixels().end());
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      if (!hand.at(x, y)) continue;
      auto* p = &px[(std::size_t(y) * frame.width() + x) * 3];
      p[0] = 224;
      p[1] = 172;
      p[2] = 140;
    }
  }
  return ImageFrame(frame.width(), frame.height(), std::move(px), frame.source_id());
}

std::vector<TwoObjectScene> MakeTwoObjectScenes(int count, int width, int height,
                                                std::uint64_t seed) {
  if (count <= 0 || width < 16 || height < 16) {
    throw Error(Errc::kArgument, "two-object scenes need count > 0 and at least 16x16 pixels");
  }
  std::mt19937_64 rng(seed);
  std::vector<TwoObjectScene> scenes;
  for (int i = 0; i < count; ++i) {
    Canvas canvas(width, height);
    canvas.Background(rng);
    TwoObjectScene scene;
    std::array<Box, 2> boxes;
    for (int k = 0; k < 2; ++k) {
      const int half = width / 2;
      std::uniform_int_distribution<int> size(width / 5, width * 3 / 10);
      const int bw = size(rng);
      const int bh = size(rng);
      std::uniform_int_distribution<int> ox(k * half + 1, k * half + half - bw - 1);
      std::uniform_int_distribution<int> oy(height / 8, height / 2 - 1);
      boxes[k] = {ox(rng), oy(rng), 0, 0};
      boxes[k].x1 = boxes[k].x0 + bw;
      boxes[k].y1 = boxes[k].y0 + bh;
      const auto kind = static_cast<ShapeKind>(rng() % 3);
      scene.objects[k] = ShapeMask(kind, boxes[k], width, height);
      canvas.Fill(scene.objects[k], RandomVivid(rng), rng);
    }
    for (int k = 0; k < 2; ++k) scene.hands[k] = ArmTo(scene.objects[k], boxes[k], width, height);
    scene.id = "scene_" + std::to_string(i);
    scene.frame = std::move(canvas).Frame(scene.id);
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

std::vector<ClassSample> MakeClassSamples(int num_classes, int per_class, int width, int height,
                                          std::uint64_t seed) {
  if (num_classes < 1 || num_classes > 6 || per_class < 1 || width < 16 || height < 16) {
    throw Error(Errc::kArgument, "class samples need 1..6 classes, >= 1 per class, >= 16x16");
  }
  static constexpr Rgb kClassColour[] = {{220, 40, 40}, {40, 70, 220}, {40, 180, 60},
                                         {230, 200, 30}, {200, 60, 200}, {30, 200, 210}};
  static constexpr ShapeKind kClassShape[] = {ShapeKind::kRect, ShapeKind::kEllipse,
                                              ShapeKind::kTriangle, ShapeKind::kEllipse,
                                              ShapeKind::kRect, ShapeKind::kTriangle};
  std::mt19937_64 rng(seed);
  std::vector<ClassSample> out;
  for (int c = 0; c < num_classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      Canvas canvas(width, height);
      canvas.Background(rng);
      std::uniform_int_distribution<int> size(std::min(width, height) / 3,
                                              std::min(width, height) / 2);
      const int bw = size(rng);
      const int bh = size(rng);
      std::uniform_int_distribution<int> ox(1, width - bw - 1), oy(1, height - bh - 1);
      Box box{ox(rng), oy(rng), 0, 0};
      box.x1 = box.x0 + bw;
      box.y1 = box.y0 + bh;
      ClassSample s;
      s.class_id = c;
      s.object = ShapeMask(kClassShape[c], box, width, height);
      canvas.Fill(s.object, kClassColour[c], rng, 15);
      s.frame = std::move(canvas).Frame("c" + std::to_string(c) + "_" + std::to_string(i));
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<TeachingSample> ToTeachingSamples(const std::vector<ClassSample>& samples,
                                              const std::string& session_id) {
  std::vector<TeachingSample> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.push_back(MakeTeachingSample("synthetic-" + std::to_string(i), samples[i].class_id,
                                     samples[i].frame.WithSourceId({}),
                                     ToSoft(samples[i].object), 0, session_id));
  }
  return out;
}

std::vector<SyntheticHand> WriteSyntheticHuTics(const std::filesystem::path& root,
                                                int participants, int images_per_participant,
                                                int width, int height, std::uint64_t seed) {
  if (participants < 1 || images_per_participant < 1) {
    throw Error(Errc::kArgument, "need at least one participant and one image each");
  }
  const auto scenes = MakeTwoObjectScenes(participants * images_per_participant, width, height,
                                          seed);
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  std::vector<SyntheticHand> hands;
  for (int p = 0; p < participants; ++p) {
    char pid[16];
    std::snprintf(pid, sizeof pid, "p%03d", p + 1);
    std::map<Gesture, int> next;
    for (int i = 0; i < images_per_participant; ++i) {
      const auto& scene = scenes[static_cast<std::size_t>(p * images_per_participant + i)];
      const int target = static_cast<int>(rng() % 2);
      const Gesture g = kAllGestures[rng() % std::size(kAllGestures)];
      const std::string name =
          std::string(GestureName(g)) + "_" + std::to_string(next[g]++);
      const ImageFrame frame = DrawHand(scene.frame, scene.hands[target]);
      WriteFileAtomic(root / "images" / pid / (name + ".png"), EncodePng(frame));
      WriteFileAtomic(root / "masks" / pid / (name + ".png"), EncodePng(scene.objects[target]));
      hands.push_back({std::string(pid) + "/" + name, scene.hands[target]});
    }
  }
  IndexHuTicsLayout(root);
  return hands;
}

}  // namespace gimt::data::synth
