#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "spoter/dataset.hpp"
#include "spoter/model.hpp"
#include "spoter/preprocess.hpp"
#include "spoter/sgd.hpp"

namespace spoter {

struct TrainConfig {
  int epochs = 130;
  double learning_rate = 0.001;
  double momentum = 0.0;
  double weight_decay = 0.0;
  std::uint64_t seed = 42;
  int batch_size = 1;  // samples accumulated per optimizer step in the main pass
  AugmentationDistribution base_augmentation;
  bool use_augmentation = true;
  bool use_normalization = true;
  bool use_balanced_sampling = false;
  bool use_vsct = false;

  void validate() const;
};

// Whether tau takes its share of the W-restricted subset or of the whole
// training set (capped to W-class samples).
enum class TauBase { restricted, full };

TauBase parse_tau_base(const std::string& s);
std::string to_string(TauBase t);

struct VsctConfig {
  double gamma = 0.2;  // share of worst classes selected, in (0, 1]
  double tau = 1.0;    // share of their samples in the extra mini-batch, in (0, 1]
  AugmentationDistribution vsct_augmentation;
  TauBase tau_base = TauBase::restricted;

  void validate() const;
};

struct ClassScore {
  int correct = 0;
  int total = 0;
  double accuracy = 0.0;
};

// Classes with no evaluated sample are absent.
using PerClassAccuracy = std::map<int, ClassScore>;

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;  // mean cross-entropy over the epoch's main pass
  double train_top1 = 0.0;
  double train_top5 = 0.0;  // accuracy@min(5, classes)
  std::optional<double> val_top1;
  std::optional<double> val_top5;
  PerClassAccuracy per_class;      // on the validation split when present, else train
  std::vector<int> vsct_selected;  // ascending class ids; empty when VSCT is off
  long long sample_updates = 0;    // per-sample gradient contributions this epoch
  double seconds = 0.0;
};

struct EvalResult {
  std::map<int, double> topk;  // k -> accuracy@k
  PerClassAccuracy per_class;  // top-1 based
};

// Accuracy@k over precomputed logits; the scoring core behind evaluate.
EvalResult score_topk(const std::vector<RowVector>& logits, const std::vector<int>& labels,
                      const std::vector<int>& ks);

// Un-augmented top-k evaluation. Fans out across sequences; thread count
// is hardware concurrency capped by the VSCT_SPOTER_THREADS environment
// variable. Counters merge associatively, so results are order-independent.
EvalResult evaluate(const SpoterParams& params, const SpoterConfig& cfg, const Dataset& data,
                    const std::vector<int>& ks, bool use_normalization = true);

// Per-class top-1 correctness on un-augmented inputs.
PerClassAccuracy per_class_accuracy(const SpoterParams& params, const SpoterConfig& cfg,
                                    const Dataset& data, bool use_normalization = true);

// The ceil(gamma * total_classes) worst-performing classes present in acc
// (fewer when acc covers fewer); ties broken by lower class id. Returned
// ascending.
std::vector<int> select_worst_classes(const PerClassAccuracy& acc, double gamma,
                                      int total_classes);

// Uniform without-replacement sample of the training indices whose class
// is in `worst`: max(1, floor(tau * |S|)) of the |S| eligible indices
// (empty when none are eligible). TauBase::full draws
// max(1, floor(tau * |train|)) capped to |S| instead.
std::vector<int> build_vsct_minibatch(const Dataset& train, const std::vector<int>& worst,
                                      double tau, Rng& rng,
                                      TauBase tau_base = TauBase::restricted);

struct VsctOutcome {
  std::vector<int> selected;     // W, ascending class ids
  int batch_size = 0;
  long long sample_updates = 0;  // == batch_size
};

// The end-of-epoch extra pass: per-class accuracy on eval_split, worst-
// class selection, mini-batch construction, then one accumulated SGD step
// whose augmentations come from vsct_cfg.vsct_augmentation.
VsctOutcome vsct_step(SpoterParams& params, const SpoterConfig& cfg, const Dataset& train,
                      const Dataset& eval_split, const VsctConfig& vsct_cfg,
                      const TrainConfig& train_cfg, SgdState& sgd_state, const Rng& run_rng,
                      int epoch);

// Index stream of length epoch_length: class drawn uniformly, then one of
// its samples uniformly, with replacement. Every class must have at least
// one sample.
std::vector<int> balanced_sampler(const Dataset& train, Rng& rng, int epoch_length);

// Invoked after each epoch; return false to stop early.
using EpochCallback = std::function<bool(const EpochStats&)>;

// Epoch-wise gradient descent with optional augmentation, balanced
// sampling and the VSCT extra pass. Deterministic for a fixed rng seed.
// When use_vsct is set and val is null, per-class statistics fall back to
// the training split.
std::vector<EpochStats> train(SpoterParams& params, const SpoterConfig& cfg,
                              const Dataset& train_data, const Dataset* val_data,
                              const TrainConfig& train_cfg, const VsctConfig* vsct_cfg,
                              const Rng& rng, const EpochCallback& callback = nullptr);

// Evaluation fan-out width (hardware concurrency, capped by the
// VSCT_SPOTER_THREADS environment variable).
int eval_parallelism();

// T x 242 model input for one sequence: normalize + flatten, or flatten
// of raw pixel coordinates when normalization is off.
Matrix model_input(const PoseSequence& s, bool use_normalization);

}  // namespace spoter
