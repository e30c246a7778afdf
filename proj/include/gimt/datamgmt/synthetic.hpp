#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gimt/core/image.hpp"
#include "gimt/datamgmt/session_store.hpp"

namespace gimt::data::synth {

// A frame with two objects, one in each half. hands[k] is an arm stripe
// reaching object k from the bottom border; objects[k] is its mask.
struct TwoObjectScene {
  std::string id;
  ImageFrame frame;
  std::array<BinaryMask, 2> objects;
  std::array<BinaryMask, 2> hands;
};

// `draw_hand` paints the arm into the RGB frame (skin tone) for hand k;
// without it the arm exists only in the mask channel.
std::vector<TwoObjectScene> MakeTwoObjectScenes(int count, int width, int height,
                                                std::uint64_t seed);
ImageFrame DrawHand(const ImageFrame& frame, const BinaryMask& hand);

// Frames of `num_classes` visually distinct object kinds (shape + colour per
// class) at random positions over varied backgrounds, with the object mask
// as highlight.
struct ClassSample {
  int class_id = 0;
  ImageFrame frame;
  BinaryMask object;
};
std::vector<ClassSample> MakeClassSamples(int num_classes, int per_class, int width, int height,
                                          std::uint64_t seed);

std::vector<TeachingSample> ToTeachingSamples(const std::vector<ClassSample>& samples,
                                              const std::string& session_id);

struct SyntheticHand {
  std::string record_id;
  BinaryMask hand;
};

// Writes a dataset in the canonical HuTics layout (images/, masks/ and
// metadata.json) with the arm painted into each image. Returns the arm mask
// of every record, e.g. for oracle hand fixtures.
std::vector<SyntheticHand> WriteSyntheticHuTics(const std::filesystem::path& root,
                                                int participants, int images_per_participant,
                                                int width, int height, std::uint64_t seed);

}  // namespace gimt::data::synth
