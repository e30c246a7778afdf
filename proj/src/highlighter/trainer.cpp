#include <numeric>
#include <random>

#include "gimt/core/error.hpp"
#include "gimt/nn/tensor_util.hpp"
#include "net.hpp"

namespace gimt::highlight {
namespace F = torch::nn::functional;

namespace {
// Preprocessed examples are kept in memory up to this many bytes.
constexpr std::size_t kCacheBudgetBytes = std::size_t{512} << 20;
}  // namespace

RecordExampleSource::RecordExampleSource(
    std::vector<data::HuTicsRecord> records,
    std::shared_ptr<const handseg::HandSegmentor> hands)
    : records_(std::move(records)), hands_(std::move(hands)) {}

HighlightExample RecordExampleSource::Get(std::size_t i) const {
  const auto& rec = records_.at(i);
  HighlightExample ex;
  ex.id = rec.record_id;
  ex.frame = data::LoadRecordImage(rec);
  ex.hand = hands_->Segment(ex.frame);
  ex.object = data::LoadRecordMask(rec);
  RequireSameShape(ex.frame.shape(), ex.object.shape(), "record " + rec.record_id);
  return ex;
}

struct HighlighterTrainer::State {
  std::unique_ptr<torch::optim::Adam> optimizer;
  std::mt19937_64 rng;
  bool cache_enabled = false;
  std::vector<std::optional<std::pair<torch::Tensor, torch::Tensor>>> cache;
};

HighlighterTrainer::HighlighterTrainer(HighlighterModel model,
                                       HighlighterTrainConfig config,
                                       const ExampleSource& train)
    : model_(std::move(model)), config_(std::move(config)), train_(train),
      state_(std::make_unique<State>()) {
  config_.Validate();
  if (train_.size() == 0) throw Error(Errc::kDataset, "empty training split");
  auto& im = model_.impl();
  state_->optimizer = std::make_unique<torch::optim::Adam>(
      im.net->parameters(), torch::optim::AdamOptions(config_.lr_initial));
  state_->rng.seed(config_.seed);
  const std::size_t per_example = static_cast<std::size_t>(im.options.input_width) *
                                  im.options.input_height * 5 * sizeof(float);
  state_->cache_enabled = per_example * train_.size() <= kCacheBudgetBytes;
  state_->cache.resize(train_.size());
}

HighlighterTrainer::~HighlighterTrainer() = default;

double HighlighterTrainer::Step(const std::vector<std::size_t>& batch, double lr) {
  auto& im = model_.impl();
  const int h = im.options.input_height;
  const int w = im.options.input_width;
  std::vector<torch::Tensor> xs, ys;
  for (std::size_t i : batch) {
    auto& slot = state_->cache.at(i);
    if (!slot) {
      const HighlightExample ex = train_.Get(i);
      auto x = ToNetworkInput(ex.frame, ex.hand, h, w);
      auto y = nn::ResizeNearest(nn::MaskToTensor(ex.object), h, w);
      if (!state_->cache_enabled) {
        xs.push_back(x);
        ys.push_back(y);
        continue;
      }
      slot.emplace(x, y);
    }
    xs.push_back(slot->first);
    ys.push_back(slot->second);
  }
  for (auto& group : state_->optimizer->param_groups()) {
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  }
  im.net->train();
  state_->optimizer->zero_grad();
  auto logits = im.net->forward(torch::stack(xs));
  auto loss = F::binary_cross_entropy_with_logits(logits, torch::stack(ys));
  loss.backward();
  state_->optimizer->step();
  im.net->eval();
  return loss.item<double>();
}

EpochStats HighlighterTrainer::RunEpoch(int epoch) {
  const double lr = LrAtEpoch(config_, epoch);
  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[state_->rng() % i]);
  }
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size();
       start += static_cast<std::size_t>(config_.batch_size)) {
    const std::size_t end =
        std::min(order.size(), start + static_cast<std::size_t>(config_.batch_size));
    total += Step({order.begin() + static_cast<std::ptrdiff_t>(start),
                   order.begin() + static_cast<std::ptrdiff_t>(end)},
                  lr);
    ++batches;
  }
  return {epoch, lr, total / static_cast<double>(batches)};
}

void HighlighterTrainer::Run(const EpochCallback& on_epoch) {
  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    const EpochStats stats = RunEpoch(epoch);
    if (on_epoch) on_epoch(stats);
  }
  model_.impl().net->eval();
}

eval::EvalReport EvaluateHighlighter(const HighlighterModel& model,
                                     const ExampleSource& examples,
                                     std::string dataset_desc) {
  std::vector<eval::PredictionPair> pairs;
  pairs.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    HighlightExample ex = examples.Get(i);
    pairs.push_back({PredictHighlight(model, ex.frame, ex.hand), std::move(ex.object), ex.id});
  }
  eval::EvalReport report = eval::MeanIou(pairs);
  report.model_desc = model.spec().ToString();
  report.dataset_desc = std::move(dataset_desc);
  return report;
}

HighlighterTrainResult TrainHighlighterOn(const ExampleSource& train,
                                          const ExampleSource& test,
                                          const HighlighterOptions& options,
                                          const HighlighterTrainConfig& config,
                                          const EpochCallback& on_epoch) {
  config.Validate();
  if (train.size() == 0) throw Error(Errc::kDataset, "empty training split");
  HighlighterTrainer trainer(HighlighterModel::Create(options, config.seed), config, train);
  trainer.Run(on_epoch);
  HighlighterTrainResult result{trainer.model(), {}};
  if (test.size() > 0) {
    result.report = EvaluateHighlighter(result.model, test);
    result.model.set_trained_miou(result.report.miou);
  }
  result.report.model_desc = options.spec.ToString();
  result.report.seed = config.seed;
  return result;
}

HighlighterTrainResult TrainHighlighter(const data::DatasetSplit& split,
                                        const HighlighterOptions& options,
                                        const HighlighterTrainConfig& config,
                                        const handseg::HandSegmentorConfig& hands,
                                        const EpochCallback& on_epoch) {
  if (split.train.empty()) throw Error(Errc::kDataset, "empty split: no training records");
  for (const auto* part : {&split.train, &split.test}) {
    for (const auto& rec : *part) {
      if (const auto* path = std::get_if<std::filesystem::path>(&rec.mask)) {
        if (path->empty() || !std::filesystem::exists(*path)) {
          throw Error(Errc::kValidation,
                      "record '" + rec.record_id + "' has no ground-truth object mask");
        }
      }
    }
  }
  auto segmentor = std::make_shared<const handseg::HandSegmentor>(hands);
  RecordExampleSource train(split.train, segmentor);
  RecordExampleSource test(split.test, segmentor);
  auto result = TrainHighlighterOn(train, test, options, config, on_epoch);
  result.report.dataset_desc = "participant split: " + std::to_string(split.train.size()) +
                               " train / " + std::to_string(split.test.size()) +
                               " test images, ratio " + std::to_string(split.ratio) +
                               ", split seed " + std::to_string(split.seed);
  result.report.seed = split.seed;
  return result;
}

}  // namespace gimt::highlight
