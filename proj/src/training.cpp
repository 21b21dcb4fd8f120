#include "spoter/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <thread>

#include "spoter/errors.hpp"
#include "spoter/ops.hpp"

namespace spoter {

namespace {

// Stream tags for deriving independent random substreams from the run rng.
constexpr std::uint64_t kShuffleStream = 0x5351;
constexpr std::uint64_t kSamplerStream = 0x5352;
constexpr std::uint64_t kAugmentStream = 0x5353;
constexpr std::uint64_t kDropoutStream = 0x5354;
constexpr std::uint64_t kVsctBatchStream = 0x5355;
constexpr std::uint64_t kVsctAugmentStream = 0x5356;

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  base_augmentation.validate();
}

TauBase parse_tau_base(const std::string& s) {
  if (s == "restricted") return TauBase::restricted;
  if (s == "full") return TauBase::full;
  throw ConfigError("unknown tau base '" + s + "' (expected restricted or full)");
}

std::string to_string(TauBase t) { return t == TauBase::restricted ? "restricted" : "full"; }

void VsctConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("vsct gamma must be in (0, 1]");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("vsct tau must be in (0, 1]");
  vsct_augmentation.validate();
}

Matrix model_input(const PoseSequence& s, bool use_normalization) {
  return use_normalization ? normalize_sequence(s).vectors : flatten(s).vectors;
}

int eval_parallelism() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("VSCT_SPOTER_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end && *end == '\0' && cap >= 1) hw = std::min<unsigned>(hw, static_cast<unsigned>(cap));
  }
  return static_cast<int>(hw);
}

EvalResult score_topk(const std::vector<RowVector>& logits, const std::vector<int>& labels,
                      const std::vector<int>& ks) {
  if (logits.size() != labels.size()) {
    throw ShapeError("score_topk: logits and labels counts disagree");
  }
  if (logits.empty()) throw UsageError("score_topk: no samples");
  if (ks.empty()) throw ConfigError("score_topk: no k values given");
  const int classes = static_cast<int>(logits.front().cols());
  int max_k = 0;
  for (int k : ks) {
    if (k < 1 || k > classes) {
      throw ConfigError("top-k rank " + std::to_string(k) + " out of [1, " +
                        std::to_string(classes) + "]");
    }
    max_k = std::max(max_k, k);
  }

  EvalResult result;
  std::map<int, long long> hits;
  for (int k : ks) hits[k] = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const int label = labels[i];
    if (label < 0 || label >= classes) {
      throw ShapeError("score_topk: label " + std::to_string(label) + " out of range");
    }
    const auto ranked = predict_topk(logits[i], max_k);
    for (int k : ks) {
      if (std::find(ranked.begin(), ranked.begin() + k, label) != ranked.begin() + k) {
        hits[k]++;
      }
    }
    auto& score = result.per_class[label];
    score.total++;
    if (ranked.front() == label) score.correct++;
  }
  for (int k : ks) {
    result.topk[k] = static_cast<double>(hits[k]) / static_cast<double>(logits.size());
  }
  for (auto& [cls, score] : result.per_class) {
    (void)cls;
    score.accuracy = static_cast<double>(score.correct) / score.total;
  }
  return result;
}

EvalResult evaluate(const SpoterParams& params, const SpoterConfig& cfg, const Dataset& data,
                    const std::vector<int>& ks, bool use_normalization) {
  if (data.sequences.empty()) throw UsageError("evaluate: dataset is empty");
  const int n = data.size();
  std::vector<RowVector> logits(static_cast<std::size_t>(n));
  std::vector<int> labels(static_cast<std::size_t>(n));

  const int threads = std::max(1, std::min(eval_parallelism(), n));
  auto worker = [&](int first, int last) {
    for (int i = first; i < last; ++i) {
      const auto& seq = data.sequences[static_cast<std::size_t>(i)];
      logits[static_cast<std::size_t>(i)] =
          forward(params, cfg, model_input(seq, use_normalization));
      labels[static_cast<std::size_t>(i)] = seq.gloss_id;
    }
  };
  if (threads == 1) {
    worker(0, n);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const int first = t * chunk;
      const int last = std::min(n, first + chunk);
      if (first >= last) break;
      pool.emplace_back(worker, first, last);
    }
    for (auto& th : pool) th.join();
  }
  return score_topk(logits, labels, ks);
}

PerClassAccuracy per_class_accuracy(const SpoterParams& params, const SpoterConfig& cfg,
                                    const Dataset& data, bool use_normalization) {
  return evaluate(params, cfg, data, {1}, use_normalization).per_class;
}

std::vector<int> select_worst_classes(const PerClassAccuracy& acc, double gamma,
                                      int total_classes) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0, 1]");
  if (total_classes < 1) throw ConfigError("total class count must be positive");

  const auto target = static_cast<std::size_t>(
      std::ceil(gamma * static_cast<double>(total_classes)));
  std::vector<std::pair<double, int>> ranked;
  ranked.reserve(acc.size());
  for (const auto& [cls, score] : acc) ranked.emplace_back(score.accuracy, cls);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second < b.second;
  });

  const std::size_t take = std::min(target, ranked.size());
  std::vector<int> worst;
  worst.reserve(take);
  for (std::size_t i = 0; i < take; ++i) worst.push_back(ranked[i].second);
  std::sort(worst.begin(), worst.end());
  return worst;
}

std::vector<int> build_vsct_minibatch(const Dataset& train, const std::vector<int>& worst,
                                      double tau, Rng& rng, TauBase tau_base) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must be in (0, 1]");

  std::vector<int> eligible;
  for (int i = 0; i < train.size(); ++i) {
    const int cls = train.sequences[static_cast<std::size_t>(i)].gloss_id;
    if (std::binary_search(worst.begin(), worst.end(), cls)) eligible.push_back(i);
  }
  if (eligible.empty()) return {};

  const double base = tau_base == TauBase::restricted
                          ? static_cast<double>(eligible.size())
                          : static_cast<double>(train.size());
  std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(tau * base)));
  n = std::min(n, eligible.size());

  rng.shuffle(eligible);
  eligible.resize(n);
  return eligible;
}

namespace {

// Accumulates per-sample loss gradients, then applies one averaged SGD
// step. Parameter leaves must follow enumerate() order.
class GradAccumulator {
public:
  explicit GradAccumulator(std::vector<ParamRef> refs) : refs_(std::move(refs)) {
    acc_.resize(refs_.size());
  }

  void add(const std::vector<Tensor>& leaves) {
    for (std::size_t i = 0; i < refs_.size(); ++i) {
      if (acc_[i].size() == 0) {
        acc_[i] = leaves[i].grad();
      } else {
        acc_[i] += leaves[i].grad();
      }
    }
    ++count_;
  }

  // Mean-gradient step; resets the accumulator.
  void step(const TrainConfig& tc, SgdState& state) {
    if (count_ == 0) return;
    std::vector<Matrix*> params;
    std::vector<const Matrix*> grads;
    params.reserve(refs_.size());
    grads.reserve(refs_.size());
    for (std::size_t i = 0; i < refs_.size(); ++i) {
      acc_[i] /= static_cast<double>(count_);
      params.push_back(refs_[i].matrix);
      grads.push_back(&acc_[i]);
    }
    sgd_step(params, grads, tc.learning_rate, tc.momentum, tc.weight_decay, state);
    for (auto& g : acc_) g.resize(0, 0);
    count_ = 0;
  }

  int pending() const { return count_; }

private:
  std::vector<ParamRef> refs_;
  std::vector<Matrix> acc_;
  int count_ = 0;
};

// Forward + cross-entropy + backward for one (possibly augmented) sample.
double sample_pass(SpoterParams& params, const SpoterConfig& cfg, const PoseSequence& seq,
                   const AugmentationDistribution* aug, Rng aug_rng, Rng dropout_rng,
                   const TrainConfig& tc, GradAccumulator& acc) {
  Matrix input;
  if (aug) {
    input = model_input(augment(seq, *aug, aug_rng), tc.use_normalization);
  } else {
    input = model_input(seq, tc.use_normalization);
  }
  Tape tape;
  auto fwd = spoter_forward(tape, params, cfg, input, /*train_mode=*/true, &dropout_rng);
  const Tensor loss = cross_entropy(fwd.logits, seq.gloss_id);
  const double loss_value = loss.value()(0, 0);
  tape.backward(loss);
  acc.add(fwd.leaves);
  return loss_value;
}

}  // namespace

VsctOutcome vsct_step(SpoterParams& params, const SpoterConfig& cfg, const Dataset& train,
                      const Dataset& eval_split, const VsctConfig& vsct_cfg,
                      const TrainConfig& train_cfg, SgdState& sgd_state, const Rng& run_rng,
                      int epoch) {
  vsct_cfg.validate();
  const auto acc = per_class_accuracy(params, cfg, eval_split, train_cfg.use_normalization);
  const auto worst = select_worst_classes(acc, vsct_cfg.gamma, cfg.num_classes);

  Rng batch_rng = run_rng.split(kVsctBatchStream, static_cast<std::uint64_t>(epoch));
  const auto batch =
      build_vsct_minibatch(train, worst, vsct_cfg.tau, batch_rng, vsct_cfg.tau_base);

  VsctOutcome outcome;
  outcome.selected = worst;
  outcome.batch_size = static_cast<int>(batch.size());
  outcome.sample_updates = static_cast<long long>(batch.size());
  if (batch.empty()) return outcome;

  GradAccumulator acc_grads(params.enumerate());
  for (int idx : batch) {
    const auto& seq = train.sequences[static_cast<std::size_t>(idx)];
    Rng aug_rng = run_rng.split(kVsctAugmentStream, static_cast<std::uint64_t>(epoch),
                                static_cast<std::uint64_t>(idx));
    Rng drop_rng = run_rng.split(kDropoutStream ^ kVsctBatchStream,
                                 static_cast<std::uint64_t>(epoch),
                                 static_cast<std::uint64_t>(idx));
    const AugmentationDistribution* aug =
        train_cfg.use_augmentation ? &vsct_cfg.vsct_augmentation : nullptr;
    sample_pass(params, cfg, seq, aug, aug_rng, drop_rng, train_cfg, acc_grads);
  }
  acc_grads.step(train_cfg, sgd_state);
  return outcome;
}

std::vector<int> balanced_sampler(const Dataset& train, Rng& rng, int epoch_length) {
  if (epoch_length < 0) throw ConfigError("epoch_length must be non-negative");
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(train.vocabulary.size()));
  for (int i = 0; i < train.size(); ++i) {
    by_class[static_cast<std::size_t>(train.sequences[static_cast<std::size_t>(i)].gloss_id)]
        .push_back(i);
  }
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].empty()) {
      throw ConfigError("balanced sampling requires every class to have samples; '" +
                        train.vocabulary.gloss(static_cast<int>(c)) + "' has none");
    }
  }
  std::vector<int> stream;
  stream.reserve(static_cast<std::size_t>(epoch_length));
  for (int i = 0; i < epoch_length; ++i) {
    const auto& members = by_class[static_cast<std::size_t>(rng.uniform_int(
        static_cast<int>(by_class.size())))];
    stream.push_back(members[static_cast<std::size_t>(
        rng.uniform_int(static_cast<int>(members.size())))]);
  }
  return stream;
}

std::vector<EpochStats> train(SpoterParams& params, const SpoterConfig& cfg,
                              const Dataset& train_data, const Dataset* val_data,
                              const TrainConfig& train_cfg, const VsctConfig* vsct_cfg,
                              const Rng& rng, const EpochCallback& callback) {
  cfg.validate();
  train_cfg.validate();
  if (train_data.sequences.empty()) throw UsageError("train: training dataset is empty");
  if (train_data.vocabulary.size() != cfg.num_classes) {
    throw ConfigError("model has " + std::to_string(cfg.num_classes) +
                      " classes but the training vocabulary has " +
                      std::to_string(train_data.vocabulary.size()));
  }
  if (val_data && !(val_data->vocabulary == train_data.vocabulary)) {
    throw VocabularyError("validation vocabulary differs from the training vocabulary");
  }
  if (train_cfg.use_vsct) {
    if (!vsct_cfg) throw ConfigError("VSCT enabled without a VSCT configuration");
    vsct_cfg->validate();
  }

  const int n = train_data.size();
  const int top5 = std::min(5, cfg.num_classes);
  SgdState sgd_state;
  GradAccumulator acc(params.enumerate());
  std::vector<EpochStats> history;
  history.reserve(static_cast<std::size_t>(train_cfg.epochs));

  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();

    std::vector<int> order;
    if (train_cfg.use_balanced_sampling) {
      Rng sampler_rng = rng.split(kSamplerStream, static_cast<std::uint64_t>(epoch));
      order = balanced_sampler(train_data, sampler_rng, n);
    } else {
      order.resize(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), 0);
      Rng shuffle_rng = rng.split(kShuffleStream, static_cast<std::uint64_t>(epoch));
      shuffle_rng.shuffle(order);
    }

    double loss_sum = 0.0;
    long long updates = 0;
    std::map<int, int> occurrences;  // balanced sampling may repeat an index
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      const int idx = order[pos];
      const auto& seq = train_data.sequences[static_cast<std::size_t>(idx)];
      const int occurrence = occurrences[idx]++;
      Rng aug_rng = rng.split(kAugmentStream + static_cast<std::uint64_t>(occurrence),
                              static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(idx));
      Rng drop_rng =
          rng.split(kDropoutStream + static_cast<std::uint64_t>(occurrence),
                    static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(idx));
      const AugmentationDistribution* aug =
          train_cfg.use_augmentation ? &train_cfg.base_augmentation : nullptr;
      loss_sum += sample_pass(params, cfg, seq, aug, aug_rng, drop_rng, train_cfg, acc);
      ++updates;
      if (acc.pending() >= train_cfg.batch_size) acc.step(train_cfg, sgd_state);
    }
    acc.step(train_cfg, sgd_state);  // flush a partial final batch

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = n > 0 ? loss_sum / static_cast<double>(order.size()) : 0.0;

    if (train_cfg.use_vsct) {
      const Dataset& eval_split = val_data ? *val_data : train_data;
      const auto outcome =
          vsct_step(params, cfg, train_data, eval_split, *vsct_cfg, train_cfg, sgd_state, rng,
                    epoch);
      stats.vsct_selected = outcome.selected;
      updates += outcome.sample_updates;
    }
    stats.sample_updates = updates;

    const auto train_eval =
        evaluate(params, cfg, train_data, {1, top5}, train_cfg.use_normalization);
    stats.train_top1 = train_eval.topk.at(1);
    stats.train_top5 = train_eval.topk.at(top5);
    stats.per_class = train_eval.per_class;
    if (val_data) {
      const auto val_eval =
          evaluate(params, cfg, *val_data, {1, top5}, train_cfg.use_normalization);
      stats.val_top1 = val_eval.topk.at(1);
      stats.val_top5 = val_eval.topk.at(top5);
      stats.per_class = val_eval.per_class;
    }

    stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.push_back(stats);
    if (callback && !callback(history.back())) break;
  }
  return history;
}

}  // namespace spoter
