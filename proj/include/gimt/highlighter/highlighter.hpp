#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gimt/core/image.hpp"
#include "gimt/datamgmt/hutics.hpp"
#include "gimt/evalbench/metrics.hpp"
#include "gimt/handseg/handseg.hpp"

namespace gimt::highlight {

struct ModelSpec {
  std::string backbone_id = "efficientnet-b0";
  std::string decoder_id = "unet";

  std::string ToString() const { return backbone_id + "+" + decoder_id; }
  // Throws a catalog error for unregistered ids.
  void Validate() const;
  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct HighlighterOptions {
  ModelSpec spec;
  // Network input resolution; frames are resampled to it and predictions
  // resampled back.
  int input_width = kCaptureWidth;
  int input_height = kCaptureHeight;
  // Defaults to the backbone's pretraining convention.
  std::optional<bool> normalize_input;
  // Optional pretrained encoder archive (parameter names must match).
  std::filesystem::path encoder_weights;
};

// The gesture-guided object segmentor: (RGB, hand mask) -> object logits.
// Copies share the same network. A model is frozen once training finishes and
// may then serve concurrent predictions.
class HighlighterModel {
 public:
  HighlighterModel();  // unloaded
  ~HighlighterModel();
  HighlighterModel(const HighlighterModel&);
  HighlighterModel& operator=(const HighlighterModel&);
  HighlighterModel(HighlighterModel&&) noexcept;
  HighlighterModel& operator=(HighlighterModel&&) noexcept;

  // Randomly initialised network (deterministic for a given seed).
  static HighlighterModel Create(const HighlighterOptions& options,
                                 std::uint64_t seed);
  static HighlighterModel Load(const std::filesystem::path& file);
  void Save(const std::filesystem::path& file) const;

  bool loaded() const noexcept;
  int input_channels() const noexcept { return 4; }
  const ModelSpec& spec() const;
  const HighlighterOptions& options() const;
  std::optional<double> trained_miou() const;
  void set_trained_miou(double miou);

  // Sets the logit layer's weights and bias to zero.
  void ZeroLogitLayer();

  struct Impl;
  Impl& impl() const;

 private:
  std::shared_ptr<Impl> impl_;
};

// Channel-major [4][H][W]: RGB / 255 then the hand mask as {0,1}.
struct FourChannelInput {
  Shape shape;
  std::vector<float> values;

  float at(int channel, int x, int y) const {
    return values[(static_cast<std::size_t>(channel) * shape.height + y) * shape.width + x];
  }
};

FourChannelInput PrepareInput(const ImageFrame& frame, const BinaryMask& hand);

struct HighlighterTrainConfig {
  int epochs = 100;
  int batch_size = 4;
  double lr_initial = 1e-4;
  double lr_final = 1e-5;
  int lr_hold_head = 25;
  int lr_hold_tail = 25;
  std::string optimizer = "adam";
  std::uint64_t seed = 0;

  void Validate() const;
};

// Constant lr_initial for the first lr_hold_head epochs, constant lr_final for
// the last lr_hold_tail epochs, geometric interpolation in between.
double LrAtEpoch(const HighlighterTrainConfig& config, int epoch);

struct HighlightExample {
  std::string id;
  ImageFrame frame;
  BinaryMask hand;
  BinaryMask object;
};

// Random access to training examples; implementations may load lazily.
class ExampleSource {
 public:
  virtual ~ExampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual HighlightExample Get(std::size_t index) const = 0;
};

class VectorExampleSource final : public ExampleSource {
 public:
  explicit VectorExampleSource(std::vector<HighlightExample> examples)
      : examples_(std::move(examples)) {}
  std::size_t size() const override { return examples_.size(); }
  HighlightExample Get(std::size_t i) const override { return examples_.at(i); }

 private:
  std::vector<HighlightExample> examples_;
};

// Decodes records on demand and runs the hand segmentor on each image.
class RecordExampleSource final : public ExampleSource {
 public:
  RecordExampleSource(std::vector<data::HuTicsRecord> records,
                      std::shared_ptr<const handseg::HandSegmentor> hands);
  std::size_t size() const override { return records_.size(); }
  HighlightExample Get(std::size_t i) const override;

 private:
  std::vector<data::HuTicsRecord> records_;
  std::shared_ptr<const handseg::HandSegmentor> hands_;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
};
using EpochCallback = std::function<void(const EpochStats&)>;

// Mini-batch Adam on per-pixel binary cross-entropy. Owns the model while
// training; the caller gets it back through model().
class HighlighterTrainer {
 public:
  HighlighterTrainer(HighlighterModel model, HighlighterTrainConfig config,
                     const ExampleSource& train);
  ~HighlighterTrainer();

  // One optimisation step on the given example indices at learning rate `lr`.
  // Returns the pre-update loss.
  double Step(const std::vector<std::size_t>& batch, double lr);
  // One pass over the training set in a seeded order.
  EpochStats RunEpoch(int epoch);
  // All configured epochs; no early stopping.
  void Run(const EpochCallback& on_epoch = {});

  HighlighterModel& model() { return model_; }

 private:
  struct State;
  HighlighterModel model_;
  HighlighterTrainConfig config_;
  const ExampleSource& train_;
  std::unique_ptr<State> state_;
};

// Sigmoid object highlight at the frame's resolution.
SoftMask PredictHighlight(const HighlighterModel& model, const ImageFrame& frame,
                          const BinaryMask& hand);

// Predicts every example and scores it against its object mask.
eval::EvalReport EvaluateHighlighter(const HighlighterModel& model,
                                     const ExampleSource& examples,
                                     std::string dataset_desc = {});

struct HighlighterTrainResult {
  HighlighterModel model;
  eval::EvalReport report;  // on split.test
};

// Trains on split.train with the final-epoch model evaluated on split.test.
HighlighterTrainResult TrainHighlighter(const data::DatasetSplit& split,
                                        const HighlighterOptions& options,
                                        const HighlighterTrainConfig& config,
                                        const handseg::HandSegmentorConfig& hands,
                                        const EpochCallback& on_epoch = {});

// Same as TrainHighlighter but on in-memory examples.
HighlighterTrainResult TrainHighlighterOn(const ExampleSource& train,
                                          const ExampleSource& test,
                                          const HighlighterOptions& options,
                                          const HighlighterTrainConfig& config,
                                          const EpochCallback& on_epoch = {});

}  // namespace gimt::highlight
