#include "spoter/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <json.hpp>

#include "spoter/errors.hpp"
#include "spoter/ops.hpp"

namespace spoter {

using nlohmann::json;

void SpoterConfig::validate() const {
  if (input_dim < 1) throw ConfigError("input_dim must be positive");
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (encoder_layers < 1 || decoder_layers < 1) {
    throw ConfigError("encoder_layers and decoder_layers must be at least 1");
  }
  if (heads < 1 || input_dim % heads != 0) {
    throw ConfigError("heads must divide input_dim (" + std::to_string(heads) + " does not divide " +
                      std::to_string(input_dim) + ")");
  }
  if (ff_dim < 1) throw ConfigError("ff_dim must be positive");
  if (max_frames < 1) throw ConfigError("max_frames must be at least 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw ConfigError("dropout_rate must be in [0, 1)");
  }
}

InitMode parse_init_mode(const std::string& s) {
  if (s == "faithful") return InitMode::faithful;
  if (s == "standard") return InitMode::standard;
  throw ConfigError("unknown init mode '" + s + "' (expected faithful or standard)");
}

std::string to_string(InitMode m) {
  return m == InitMode::faithful ? "faithful" : "standard";
}

namespace {

template <typename Params, typename Ref>
std::vector<Ref> enumerate_impl(Params& p) {
  std::vector<Ref> refs;
  auto push = [&refs](const std::string& name, auto& m) { refs.push_back({name, &m}); };
  auto push_attn = [&](const std::string& prefix, auto& a) {
    push(prefix + ".wq", a.wq);
    push(prefix + ".bq", a.bq);
    push(prefix + ".wk", a.wk);
    push(prefix + ".bk", a.bk);
    push(prefix + ".wv", a.wv);
    push(prefix + ".bv", a.bv);
    push(prefix + ".wo", a.wo);
    push(prefix + ".bo", a.bo);
  };
  auto push_norm = [&](const std::string& prefix, auto& n) {
    push(prefix + ".gain", n.gain);
    push(prefix + ".bias", n.bias);
  };
  auto push_ff = [&](const std::string& prefix, auto& f) {
    push(prefix + ".w1", f.w1);
    push(prefix + ".b1", f.b1);
    push(prefix + ".w2", f.w2);
    push(prefix + ".b2", f.b2);
  };

  push("pos_encoding", p.pos_encoding);
  push("class_query", p.class_query);
  for (std::size_t i = 0; i < p.encoder.size(); ++i) {
    const std::string base = "encoder." + std::to_string(i);
    push_attn(base + ".self_attn", p.encoder[i].self_attn);
    push_norm(base + ".norm1", p.encoder[i].norm1);
    push_ff(base + ".ff", p.encoder[i].ff);
    push_norm(base + ".norm2", p.encoder[i].norm2);
  }
  for (std::size_t i = 0; i < p.decoder.size(); ++i) {
    const std::string base = "decoder." + std::to_string(i);
    push_attn(base + ".self_attn", p.decoder[i].self_attn);
    push_norm(base + ".norm1", p.decoder[i].norm1);
    push_attn(base + ".cross_attn", p.decoder[i].cross_attn);
    push_norm(base + ".norm2", p.decoder[i].norm2);
    push_ff(base + ".ff", p.decoder[i].ff);
    push_norm(base + ".norm3", p.decoder[i].norm3);
  }
  push("head.w1", p.head.w1);
  push("head.b1", p.head.b1);
  push("head.w2", p.head.w2);
  push("head.b2", p.head.b2);
  return refs;
}

}  // namespace

std::vector<ParamRef> SpoterParams::enumerate() {
  return enumerate_impl<SpoterParams, ParamRef>(*this);
}

std::vector<ConstParamRef> SpoterParams::enumerate() const {
  return enumerate_impl<const SpoterParams, ConstParamRef>(*this);
}

long long SpoterParams::parameter_count() const {
  long long total = 0;
  for (const auto& ref : enumerate()) total += ref.matrix->size();
  return total;
}

SpoterParams allocate_params(const SpoterConfig& cfg) {
  cfg.validate();
  const int d = cfg.input_dim;
  auto zeros = [](int r, int c) { return Matrix::Zero(r, c); };
  auto attn = [&] {
    AttentionParams a;
    a.wq = zeros(d, d);
    a.bq = zeros(1, d);
    a.wk = zeros(d, d);
    a.bk = zeros(1, d);
    a.wv = zeros(d, d);
    a.bv = zeros(1, d);
    a.wo = zeros(d, d);
    a.bo = zeros(1, d);
    return a;
  };
  auto norm = [&] { return LayerNormParams{zeros(1, d), zeros(1, d)}; };
  auto ff = [&] {
    return FeedForwardParams{zeros(d, cfg.ff_dim), zeros(1, cfg.ff_dim),
                             zeros(cfg.ff_dim, d), zeros(1, d)};
  };

  SpoterParams p;
  p.pos_encoding = zeros(cfg.max_frames, d);
  p.class_query = zeros(1, d);
  p.encoder.resize(cfg.encoder_layers);
  for (auto& l : p.encoder) l = {attn(), norm(), ff(), norm()};
  p.decoder.resize(cfg.decoder_layers);
  for (auto& l : p.decoder) l = {attn(), norm(), attn(), norm(), ff(), norm()};
  p.head = {zeros(d, d), zeros(1, d), zeros(d, cfg.num_classes), zeros(1, cfg.num_classes)};
  return p;
}

namespace {

void fill_uniform(Matrix& m, Rng& rng, double lo, double hi) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(lo, hi);
  }
}

bool is_weight_name(const std::string& name) {
  const auto dot = name.rfind('.');
  const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
  return leaf == "wq" || leaf == "wk" || leaf == "wv" || leaf == "wo" || leaf == "w1" ||
         leaf == "w2";
}

bool is_gain_name(const std::string& name) { return name.ends_with(".gain"); }

}  // namespace

SpoterParams init_params(const SpoterConfig& cfg, Rng& rng, InitMode mode) {
  SpoterParams p = allocate_params(cfg);
  for (auto& ref : p.enumerate()) {
    if (mode == InitMode::faithful) {
      fill_uniform(*ref.matrix, rng, 0.0, 1.0);
    } else if (is_weight_name(ref.name)) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(ref.matrix->rows()));
      fill_uniform(*ref.matrix, rng, -bound, bound);
    } else if (ref.name == "pos_encoding" || ref.name == "class_query") {
      fill_uniform(*ref.matrix, rng, -0.1, 0.1);
    } else if (is_gain_name(ref.name)) {
      ref.matrix->setOnes();
    }
    // biases stay zero in standard mode
  }
  return p;
}

namespace {

// One leaf per parameter array, looked up by storage address so each
// array is bound to the tape exactly once.
class BoundParams {
public:
  BoundParams(Tape& tape, const SpoterParams& p) {
    for (const auto& ref : p.enumerate()) {
      Tensor t = tape.param(*ref.matrix);
      leaves_.push_back(t);
      by_addr_.emplace(ref.matrix, t);
    }
  }

  Tensor operator()(const Matrix& m) const { return by_addr_.at(&m); }
  const std::vector<Tensor>& leaves() const { return leaves_; }

private:
  std::vector<Tensor> leaves_;
  std::unordered_map<const Matrix*, Tensor> by_addr_;
};

struct DropoutCtx {
  bool active = false;
  double rate = 0.0;
  Rng* rng = nullptr;

  Tensor maybe(const Tensor& t) const { return active ? dropout(t, rate, *rng) : t; }
};

Tensor multi_head_attention(const BoundParams& B, const AttentionParams& a, const Tensor& q_in,
                            const Tensor& kv_in, int heads, const DropoutCtx& drop) {
  const Tensor q = linear(q_in, B(a.wq), B(a.bq));
  const Tensor k = linear(kv_in, B(a.wk), B(a.bk));
  const Tensor v = linear(kv_in, B(a.wv), B(a.bv));
  const Eigen::Index dh = q.cols() / heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Tensor> outputs;
  outputs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    const Tensor qh = slice_cols(q, h * dh, dh);
    const Tensor kh = slice_cols(k, h * dh, dh);
    const Tensor vh = slice_cols(v, h * dh, dh);
    Tensor weights = softmax(scale(matmul(qh, transpose(kh)), att_scale), 1);
    weights = drop.maybe(weights);
    outputs.push_back(matmul(weights, vh));
  }
  return linear(concat_cols(outputs), B(a.wo), B(a.bo));
}

Tensor feed_forward(const BoundParams& B, const FeedForwardParams& f, const Tensor& x) {
  return linear(relu(linear(x, B(f.w1), B(f.b1))), B(f.w2), B(f.b2));
}

Tensor sublayer(const BoundParams& B, const LayerNormParams& n, const Tensor& x,
                const Tensor& fx, const DropoutCtx& drop) {
  return layer_norm(add(x, drop.maybe(fx)), B(n.gain), B(n.bias));
}

}  // namespace

ForwardResult spoter_forward(Tape& tape, const SpoterParams& params, const SpoterConfig& cfg,
                             const Matrix& frames, bool train_mode, Rng* dropout_rng) {
  cfg.validate();
  const Eigen::Index t_len = frames.rows();
  if (frames.cols() != cfg.input_dim) {
    throw ShapeError("forward: frame width " + std::to_string(frames.cols()) +
                     " does not match input_dim " + std::to_string(cfg.input_dim));
  }
  if (t_len < 1) throw ShapeError("forward: sequence must have at least one frame");
  if (t_len > cfg.max_frames) {
    throw ShapeError("forward: sequence length " + std::to_string(t_len) + " exceeds max_frames " +
                     std::to_string(cfg.max_frames) + " (no silent truncation)");
  }

  DropoutCtx drop;
  if (train_mode && cfg.dropout_rate > 0.0) {
    if (!dropout_rng) throw ShapeError("forward: dropout requires a random stream");
    drop = {true, cfg.dropout_rate, dropout_rng};
  }

  BoundParams B(tape, params);

  Tensor h = add(tape.constant(frames), slice_rows(B(params.pos_encoding), 0, t_len));
  for (const auto& layer : params.encoder) {
    h = sublayer(B, layer.norm1, h,
                 multi_head_attention(B, layer.self_attn, h, h, cfg.heads, drop), drop);
    h = sublayer(B, layer.norm2, h, feed_forward(B, layer.ff, h), drop);
  }

  Tensor q = B(params.class_query);
  for (const auto& layer : params.decoder) {
    q = sublayer(B, layer.norm1, q,
                 multi_head_attention(B, layer.self_attn, q, q, cfg.heads, drop), drop);
    q = sublayer(B, layer.norm2, q,
                 multi_head_attention(B, layer.cross_attn, q, h, cfg.heads, drop), drop);
    q = sublayer(B, layer.norm3, q, feed_forward(B, layer.ff, q), drop);
  }

  const Tensor hidden = relu(linear(q, B(params.head.w1), B(params.head.b1)));
  const Tensor logits = linear(hidden, B(params.head.w2), B(params.head.b2));
  return {logits, B.leaves()};
}

RowVector forward(const SpoterParams& params, const SpoterConfig& cfg, const Matrix& frames) {
  Tape tape;
  return spoter_forward(tape, params, cfg, frames).logits.value().row(0);
}

std::vector<int> predict_topk(const RowVector& logits, int k) {
  const int n = static_cast<int>(logits.cols());
  if (k < 1 || k > n) {
    throw ShapeError("predict_topk: k = " + std::to_string(k) + " out of [1, " +
                     std::to_string(n) + "]");
  }
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  std::partial_sort(ids.begin(), ids.begin() + k, ids.end(), [&logits](int a, int b) {
    if (logits(a) != logits(b)) return logits(a) > logits(b);
    return a < b;
  });
  ids.resize(k);
  return ids;
}

namespace {

constexpr char kMagic[5] = {'S', 'P', 'T', 'R', '1'};

json config_to_json(const SpoterConfig& c) {
  return json{{"input_dim", c.input_dim},         {"num_classes", c.num_classes},
              {"encoder_layers", c.encoder_layers}, {"decoder_layers", c.decoder_layers},
              {"heads", c.heads},                 {"ff_dim", c.ff_dim},
              {"max_frames", c.max_frames},       {"dropout_rate", c.dropout_rate}};
}

SpoterConfig config_from_json(const json& j) {
  SpoterConfig c;
  try {
    c.input_dim = j.at("input_dim").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.encoder_layers = j.at("encoder_layers").get<int>();
    c.decoder_layers = j.at("decoder_layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.ff_dim = j.at("ff_dim").get<int>();
    c.max_frames = j.at("max_frames").get<int>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint config block is malformed: ") + e.what());
  }
  return c;
}

void write_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64_le(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw FormatError("checkpoint truncated in header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const SpoterParams& params, const SpoterConfig& cfg,
                     const std::string& path, const GlossVocabulary& vocabulary) {
  cfg.validate();
  const auto refs = params.enumerate();

  json meta;
  meta["config"] = config_to_json(cfg);
  meta["vocabulary"] = vocabulary.glosses();
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& ref : refs) {
    tensors.push_back(json{{"name", ref.name},
                           {"shape", {ref.matrix->rows(), ref.matrix->cols()}},
                           {"offset", offset}});
    offset += static_cast<std::uint64_t>(ref.matrix->size()) * sizeof(float);
  }
  meta["tensors"] = std::move(tensors);
  const std::string meta_str = meta.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u64_le(out, meta_str.size());
  out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
  std::vector<float> buf;
  for (const auto& ref : refs) {
    buf.resize(static_cast<std::size_t>(ref.matrix->size()));
    const double* src = ref.matrix->data();  // row-major contiguous
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(src[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);

  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a checkpoint file (bad magic): " + path);
  }
  const std::uint64_t meta_len = read_u64_le(in);
  std::string meta_str(meta_len, '\0');
  in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw FormatError("checkpoint truncated in metadata block");

  json meta;
  try {
    meta = json::parse(meta_str);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }

  Checkpoint ck;
  ck.config = config_from_json(meta.at("config"));
  try {
    ck.config.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint carries an invalid config: ") + e.what());
  }
  if (meta.contains("vocabulary")) {
    ck.vocabulary =
        GlossVocabulary::from_glosses(meta.at("vocabulary").get<std::vector<std::string>>());
  }

  ck.params = allocate_params(ck.config);
  auto refs = ck.params.enumerate();
  std::unordered_map<std::string, Matrix*> by_name;
  for (auto& ref : refs) by_name.emplace(ref.name, ref.matrix);

  const auto& tensors = meta.at("tensors");
  if (!tensors.is_array() || tensors.size() != refs.size()) {
    throw FormatError("checkpoint tensor index does not match the config's parameter set");
  }

  const std::streampos data_start = in.tellg();
  std::vector<float> buf;
  for (const auto& jt : tensors) {
    const std::string name = jt.at("name").get<std::string>();
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint names unknown tensor '" + name + "'");
    Matrix& dst = *it->second;
    const auto shape = jt.at("shape");
    if (!shape.is_array() || shape.size() != 2 || shape[0].get<Eigen::Index>() != dst.rows() ||
        shape[1].get<Eigen::Index>() != dst.cols()) {
      throw FormatError("checkpoint tensor '" + name + "' has shape incompatible with the config");
    }
    const std::uint64_t offset = jt.at("offset").get<std::uint64_t>();
    in.seekg(data_start + static_cast<std::streamoff>(offset));
    buf.resize(static_cast<std::size_t>(dst.size()));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw FormatError("checkpoint truncated in tensor '" + name + "'");
    double* out = dst.data();
    for (std::size_t i = 0; i < buf.size(); ++i) out[i] = static_cast<double>(buf[i]);
  }
  return ck;
}

}  // namespace spoter
