#pragma once

#include <string>
#include <vector>

#include "spoter/dataset.hpp"
#include "spoter/rng.hpp"
#include "spoter/tensor.hpp"

namespace spoter {

// Transformer encoder-decoder over flattened pose frames: learnable
// positional encoding, a single learnable classification query into the
// decoder, and an MLP head mapping the decoded vector to class logits.
struct SpoterConfig {
  int input_dim = 242;  // frame vector width; heads must divide it
  int num_classes = 2;
  int encoder_layers = 6;
  int decoder_layers = 6;
  int heads = 11;
  int ff_dim = 1024;
  int max_frames = 256;
  double dropout_rate = 0.0;

  int head_dim() const { return input_dim / heads; }
  void validate() const;
  bool operator==(const SpoterConfig&) const = default;
};

struct AttentionParams {
  Matrix wq, bq, wk, bk, wv, bv, wo, bo;
};

struct LayerNormParams {
  Matrix gain, bias;  // 1 x dim
};

struct FeedForwardParams {
  Matrix w1, b1, w2, b2;
};

struct EncoderLayerParams {
  AttentionParams self_attn;
  LayerNormParams norm1;
  FeedForwardParams ff;
  LayerNormParams norm2;
};

struct DecoderLayerParams {
  AttentionParams self_attn;
  LayerNormParams norm1;
  AttentionParams cross_attn;
  LayerNormParams norm2;
  FeedForwardParams ff;
  LayerNormParams norm3;
};

struct MlpHeadParams {
  Matrix w1, b1, w2, b2;  // hidden layer of input_dim width, ReLU, then classes
};

struct ParamRef {
  std::string name;
  Matrix* matrix;
};

struct ConstParamRef {
  std::string name;
  const Matrix* matrix;
};

struct SpoterParams {
  Matrix pos_encoding;  // max_frames x input_dim
  Matrix class_query;   // 1 x input_dim
  std::vector<EncoderLayerParams> encoder;
  std::vector<DecoderLayerParams> decoder;
  MlpHeadParams head;

  // Canonical, stable ordering of every learnable array. Init draws,
  // checkpoints, gradient vectors and SGD state all follow this order.
  std::vector<ParamRef> enumerate();
  std::vector<ConstParamRef> enumerate() const;
  long long parameter_count() const;
};

enum class InitMode {
  faithful,  // every learnable value i.i.d. U[0, 1)
  standard,  // scaled uniform per layer, zero biases, unit layer-norm gains
};

InitMode parse_init_mode(const std::string& s);
std::string to_string(InitMode m);

// Allocates all arrays at their configured shapes, zero-filled.
SpoterParams allocate_params(const SpoterConfig& cfg);

SpoterParams init_params(const SpoterConfig& cfg, Rng& rng,
                         InitMode mode = InitMode::faithful);

struct ForwardResult {
  Tensor logits;                 // 1 x num_classes
  std::vector<Tensor> leaves;    // parameter leaves, enumerate() order
};

// Builds the computation on `tape`. frames is T x input_dim with
// 1 <= T <= max_frames (longer input is rejected, never truncated).
// Dropout fires only in train mode with dropout_rate > 0, drawing from
// dropout_rng.
ForwardResult spoter_forward(Tape& tape, const SpoterParams& params, const SpoterConfig& cfg,
                             const Matrix& frames, bool train_mode = false,
                             Rng* dropout_rng = nullptr);

// Evaluation-mode logits without keeping a tape around.
RowVector forward(const SpoterParams& params, const SpoterConfig& cfg, const Matrix& frames);

// Ids of the k largest logits, descending; ties broken by lower class id.
std::vector<int> predict_topk(const RowVector& logits, int k);

// Checkpoint file: magic "SPTR1", 8-byte little-endian length of a UTF-8
// JSON metadata block (config, vocabulary, ordered tensor index of
// {name, shape, offset}), then raw little-endian float32 arrays in listed
// order. Values round-trip within 32-bit cast precision.
void save_checkpoint(const SpoterParams& params, const SpoterConfig& cfg,
                     const std::string& path, const GlossVocabulary& vocabulary = {});

struct Checkpoint {
  SpoterParams params;
  SpoterConfig config;
  GlossVocabulary vocabulary;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace spoter
