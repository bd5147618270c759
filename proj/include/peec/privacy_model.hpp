#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "peec/bytes.hpp"
#include "peec/corpus.hpp"
#include "peec/matrix.hpp"
#include "peec/nn.hpp"
#include "peec/random.hpp"

namespace peec {

/// Layer widths of the privacy model. Defaults follow the reference
/// configuration (encoder D->2000->1000->L, heads L->400->400->K); tests use
/// smaller widths.
struct ModelArch {
  size_t enc_hidden1 = 2000;
  size_t enc_hidden2 = 1000;
  size_t head_hidden = 400;
  double dropout = 0.5;
  double leaky_slope = 0.01;

  friend bool operator==(const ModelArch&, const ModelArch&) = default;
};

enum class OptimizerKind : std::uint8_t { Adam = 0, Sgd = 1 };

struct TrainConfig {
  size_t epochs = 100;
  size_t batch_size = 32;
  size_t latent_dim = 512;
  double alpha = 1.0;
  double learning_rate = 1e-5;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  // per-head loss weights inside the alpha(...) sum
  double speaker_weight = 1.0;
  double gender_weight = 1.0;
  double language_weight = 1.0;
  ModelArch arch{};
};

struct EpochStats {
  double recon_loss = 0.0;
  double speaker_loss = 0.0, gender_loss = 0.0, language_loss = 0.0;
  double speaker_acc = 0.0, gender_acc = 0.0, language_acc = 0.0;
};

using TrainHistory = std::vector<EpochStats>;

/// Per-batch composite objective breakdown. `value` is
/// L_AE - alpha * (w_s L_spk + w_g L_ge + w_l L_lan).
struct CompositeStats {
  double value = 0.0;
  double recon = 0.0;
  double speaker_loss = 0.0, gender_loss = 0.0, language_loss = 0.0;
  double speaker_acc = 0.0, gender_acc = 0.0, language_acc = 0.0;
};

/// Integer labels for one batch, aligned with the rows of its feature matrix.
struct BatchLabels {
  std::vector<size_t> speaker;
  std::vector<size_t> gender;
  std::vector<size_t> language;
};

namespace detail {

// Cache-free passes for concurrent inference on frozen models.
inline Matrix apply_dense(const nn::DenseLayer& layer, const Matrix& x) {
  Matrix y = matmul(x, transpose(layer.W));
  for (size_t i = 0; i < y.rows(); ++i)
    for (size_t j = 0; j < y.cols(); ++j) y(i, j) += layer.b(0, j);
  return y;
}

inline Matrix apply_leaky_relu(Matrix x, double slope) {
  for (size_t i = 0; i < x.size(); ++i)
    if (x.data()[i] < 0.0) x.data()[i] *= slope;
  return x;
}

inline size_t vocab_index(const std::vector<std::string>& vocab,
                          const std::string& value, const char* what) {
  auto it = std::lower_bound(vocab.begin(), vocab.end(), value);
  if (it == vocab.end() || *it != value) {
    throw ValueError(std::string(what) + " '" + value +
                     "' not in the model vocabulary");
  }
  return static_cast<size_t>(it - vocab.begin());
}

} // namespace detail

/// One adversarial classifier head: z -> GRL -> dense -> leaky-ReLU ->
/// dropout -> dense -> leaky-ReLU -> dense -> logits. The head's own
/// parameters receive +dL/dtheta; the gradient flowing back into z is
/// -alpha * dL/dz.
class AdversaryHead {
public:
  AdversaryHead(size_t latent, size_t hidden, size_t classes, double alpha,
                double dropout, double slope, const std::string& name)
      : grl(alpha), l1(latent, hidden, name + ".l1"), a1(slope),
        drop(dropout), l2(hidden, hidden, name + ".l2"), a2(slope),
        l3(hidden, classes, name + ".l3") {}

  size_t classes() const { return l3.out_dim(); }

  void init(RandomSource& rs) {
    l1.init(rs);
    l2.init(rs);
    l3.init(rs);
  }

  Matrix forward(const Matrix& z, nn::Mode mode, RandomSource* rs) {
    Matrix h = grl.forward(z);
    h = a1.forward(l1.forward(h));
    h = drop.forward(h, mode, rs);
    h = a2.forward(l2.forward(h));
    return l3.forward(h);
  }

  /// Returns the gradient with respect to z (GRL already applied).
  Matrix backward(const Matrix& g_logits) {
    Matrix g = l3.backward(g_logits);
    g = l2.backward(a2.backward(g));
    g = drop.backward(g);
    g = l1.backward(a1.backward(g));
    return grl.backward(g);
  }

  std::vector<nn::ParamRef> params() {
    std::vector<nn::ParamRef> out;
    for (auto* layer : {&l1, &l2, &l3}) {
      for (auto& p : layer->params()) out.push_back(p);
    }
    return out;
  }

  /// Cache-free inference logits (dropout off).
  Matrix infer_logits(const Matrix& z) const {
    Matrix h = detail::apply_leaky_relu(detail::apply_dense(l1, z), a1.slope());
    h = detail::apply_leaky_relu(detail::apply_dense(l2, h), a2.slope());
    return detail::apply_dense(l3, h);
  }

  nn::GradReversal grl;
  nn::DenseLayer l1;
  nn::LeakyRelu a1;
  nn::Dropout drop;
  nn::DenseLayer l2;
  nn::LeakyRelu a2;
  nn::DenseLayer l3;
};

/// The adversarial autoencoder: encoder + decoder + three gradient-reversed
/// heads (speaker, gender, language). Mutable while training; a trained or
/// loaded instance is treated as frozen and its `encode`/`reconstruct`
/// methods are safe to call concurrently.
class PrivacyEncoderModel {
public:
  PrivacyEncoderModel(size_t input_dim, size_t latent_dim,
                      std::vector<std::string> speaker_vocab,
                      std::vector<std::string> language_vocab, double alpha,
                      std::uint64_t seed, ModelArch arch = {})
      : arch_(arch), alpha_(alpha), seed_(seed),
        speaker_vocab_(std::move(speaker_vocab)),
        language_vocab_(std::move(language_vocab)),
        enc1(input_dim, arch.enc_hidden1, "enc1"),
        enc2(arch.enc_hidden1, arch.enc_hidden2, "enc2"),
        enc3(arch.enc_hidden2, latent_dim, "enc3"),
        dec1(latent_dim, arch.enc_hidden2, "dec1"),
        dec2(arch.enc_hidden2, arch.enc_hidden1, "dec2"),
        dec3(arch.enc_hidden1, input_dim, "dec3"),
        enc_a1(arch.leaky_slope), enc_a2(arch.leaky_slope),
        dec_a1(arch.leaky_slope), dec_a2(arch.leaky_slope),
        enc_d1(arch.dropout), enc_d2(arch.dropout), dec_d1(arch.dropout),
        dec_d2(arch.dropout),
        speaker_head(latent_dim, arch.head_hidden, speaker_vocab_.size(),
                     alpha, arch.dropout, arch.leaky_slope, "spk"),
        gender_head(latent_dim, arch.head_hidden, 2, alpha, arch.dropout,
                    arch.leaky_slope, "gen"),
        language_head(latent_dim, arch.head_hidden, language_vocab_.size(),
                      alpha, arch.dropout, arch.leaky_slope, "lan") {
    if (latent_dim < 1 || input_dim < latent_dim) {
      throw ValueError("PrivacyEncoderModel: need input_dim >= latent_dim >= "
                       "1, got D=" +
                       std::to_string(input_dim) +
                       " L=" + std::to_string(latent_dim));
    }
    if (alpha < 0.0) throw ValueError("PrivacyEncoderModel: alpha must be >= 0");
    if (speaker_vocab_.size() < 2 || language_vocab_.size() < 2) {
      throw ValueError("PrivacyEncoderModel: each head needs >= 2 classes");
    }
    RandomSource rs(derive_seed(seed, 0x1717));
    enc1.init(rs);
    enc2.init(rs);
    enc3.init(rs);
    dec1.init(rs);
    dec2.init(rs);
    dec3.init(rs);
    speaker_head.init(rs);
    gender_head.init(rs);
    language_head.init(rs);
  }

  /// Architecture-only build with numbered placeholder vocabularies.
  static PrivacyEncoderModel build(size_t input_dim, size_t latent_dim,
                                   size_t n_speakers, size_t n_languages,
                                   double alpha, std::uint64_t seed,
                                   ModelArch arch = {}) {
    std::vector<std::string> spk, lang;
    for (size_t i = 0; i < n_speakers; ++i)
      spk.push_back("s" + std::to_string(i));
    for (size_t i = 0; i < n_languages; ++i)
      lang.push_back("l" + std::to_string(i));
    return PrivacyEncoderModel(input_dim, latent_dim, std::move(spk),
                               std::move(lang), alpha, seed, arch);
  }

  size_t input_dim() const { return enc1.in_dim(); }
  size_t latent_dim() const { return enc3.out_dim(); }
  size_t n_speakers() const { return speaker_vocab_.size(); }
  size_t n_languages() const { return language_vocab_.size(); }
  const ModelArch& arch() const { return arch_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<std::string>& speaker_vocab() const {
    return speaker_vocab_;
  }
  const std::vector<std::string>& language_vocab() const {
    return language_vocab_;
  }

  double alpha() const { return alpha_; }
  void set_alpha(double alpha) {
    if (alpha < 0.0) throw ValueError("set_alpha: alpha must be >= 0");
    alpha_ = alpha;
    speaker_head.grl.set_alpha(alpha);
    gender_head.grl.set_alpha(alpha);
    language_head.grl.set_alpha(alpha);
  }

  const ScalerParams& scaler() const { return scaler_; }
  void set_scaler(ScalerParams scaler) {
    if (scaler.valid() && scaler.dim() != input_dim()) {
      throw ShapeError("set_scaler: scaler dim " + std::to_string(scaler.dim()) +
                       " vs input dim " + std::to_string(input_dim()));
    }
    scaler_ = std::move(scaler);
  }

  // -- training-path passes (cache inputs; single-owner while training) ----

  Matrix encoder_forward(const Matrix& x, nn::Mode mode, RandomSource* rs) {
    Matrix h = enc_a1.forward(enc1.forward(x));
    h = enc_d1.forward(h, mode, rs);
    h = enc_a2.forward(enc2.forward(h));
    h = enc_d2.forward(h, mode, rs);
    return enc3.forward(h); // linear latent
  }

  void encoder_backward(const Matrix& g_z) {
    Matrix g = enc3.backward(g_z);
    g = enc_d2.backward(g);
    g = enc2.backward(enc_a2.backward(g));
    g = enc_d1.backward(g);
    enc1.backward(enc_a1.backward(g));
  }

  Matrix decoder_forward(const Matrix& z, nn::Mode mode, RandomSource* rs) {
    Matrix h = dec_a1.forward(dec1.forward(z));
    h = dec_d1.forward(h, mode, rs);
    h = dec_a2.forward(dec2.forward(h));
    h = dec_d2.forward(h, mode, rs);
    return dec3.forward(h); // linear output
  }

  Matrix decoder_backward(const Matrix& g_xhat) {
    Matrix g = dec3.backward(g_xhat);
    g = dec_d2.backward(g);
    g = dec2.backward(dec_a2.backward(g));
    g = dec_d1.backward(g);
    return dec1.backward(dec_a1.backward(g));
  }

  /// Full composite forward+backward on one batch of normalized features.
  /// Accumulates gradients into every parameter group; heads receive the
  /// plain gradients of their own losses while the encoder sees
  /// dL_AE/dtheta_e - alpha * sum_h w_h dL_h/dtheta_e through the GRLs.
  CompositeStats forward_backward(const Matrix& x, const BatchLabels& labels,
                                  nn::Mode mode, RandomSource* rs,
                                  double w_speaker = 1.0, double w_gender = 1.0,
                                  double w_language = 1.0) {
    CompositeStats stats = check_batch(x, labels);
    const Matrix z = encoder_forward(x, mode, rs);
    const Matrix x_hat = decoder_forward(z, mode, rs);

    auto [recon, g_xhat] = nn::mse_loss(x, x_hat);
    Matrix g_z = decoder_backward(g_xhat);

    struct HeadRun {
      AdversaryHead* head;
      const std::vector<size_t>* labels;
      double weight;
      double* loss_out;
      double* acc_out;
    };
    HeadRun runs[3] = {
        {&speaker_head, &labels.speaker, w_speaker, &stats.speaker_loss,
         &stats.speaker_acc},
        {&gender_head, &labels.gender, w_gender, &stats.gender_loss,
         &stats.gender_acc},
        {&language_head, &labels.language, w_language, &stats.language_loss,
         &stats.language_acc},
    };
    double head_sum = 0.0;
    for (auto& run : runs) {
      Matrix logits = run.head->forward(z, mode, rs);
      auto [loss, g_logits] = nn::softmax_xent(logits, *run.labels);
      *run.loss_out = loss;
      *run.acc_out = accuracy(logits, *run.labels);
      head_sum += run.weight * loss;
      if (run.weight != 1.0) g_logits = scale(g_logits, run.weight);
      g_z = add(g_z, run.head->backward(g_logits));
    }

    encoder_backward(g_z);
    stats.recon = recon;
    stats.value = recon - alpha_ * head_sum;
    return stats;
  }

  /// Objective breakdown without touching gradients.
  CompositeStats composite_loss(const Matrix& x, const BatchLabels& labels,
                                double w_speaker = 1.0, double w_gender = 1.0,
                                double w_language = 1.0) const {
    CompositeStats stats = check_batch(x, labels);
    const Matrix z = encode_normalized(x);
    const Matrix x_hat = decode_latent(z);
    stats.recon = nn::mse_loss(x, x_hat).value;

    const AdversaryHead* heads[3] = {&speaker_head, &gender_head,
                                     &language_head};
    const std::vector<size_t>* labs[3] = {&labels.speaker, &labels.gender,
                                          &labels.language};
    double* losses[3] = {&stats.speaker_loss, &stats.gender_loss,
                         &stats.language_loss};
    double* accs[3] = {&stats.speaker_acc, &stats.gender_acc,
                       &stats.language_acc};
    const double weights[3] = {w_speaker, w_gender, w_language};
    double head_sum = 0.0;
    for (int h = 0; h < 3; ++h) {
      Matrix logits = heads[h]->infer_logits(z);
      *losses[h] = nn::softmax_xent(logits, *labs[h]).value;
      *accs[h] = accuracy(logits, *labs[h]);
      head_sum += weights[h] * *losses[h];
    }
    stats.value = stats.recon - alpha_ * head_sum;
    return stats;
  }

  // -- frozen inference (cache-free, thread-safe on a const model) ---------

  /// Encode an already-normalized batch (rows x D) to latents (rows x L).
  Matrix encode_normalized(const Matrix& x_norm) const {
    if (x_norm.cols() != input_dim()) {
      throw ShapeError("encode: input width " + std::to_string(x_norm.cols()) +
                       " vs model input dim " + std::to_string(input_dim()));
    }
    Matrix h = detail::apply_leaky_relu(detail::apply_dense(enc1, x_norm),
                                        arch_.leaky_slope);
    h = detail::apply_leaky_relu(detail::apply_dense(enc2, h),
                                 arch_.leaky_slope);
    return detail::apply_dense(enc3, h);
  }

  Matrix decode_latent(const Matrix& z) const {
    if (z.cols() != latent_dim()) {
      throw ShapeError("decode: latent width " + std::to_string(z.cols()) +
                       " vs model latent dim " + std::to_string(latent_dim()));
    }
    Matrix h = detail::apply_leaky_relu(detail::apply_dense(dec1, z),
                                        arch_.leaky_slope);
    h = detail::apply_leaky_relu(detail::apply_dense(dec2, h),
                                 arch_.leaky_slope);
    return detail::apply_dense(dec3, h);
  }

  /// Scale raw features with the stored scaler, then encode.
  Matrix encode_raw(const Matrix& x_raw) const {
    if (!scaler_.valid()) {
      throw ValueError("encode_raw: model has no fitted scaler");
    }
    return encode_normalized(apply_minmax(scaler_, x_raw));
  }

  Matrix reconstruct(const Matrix& x_norm) const {
    return decode_latent(encode_normalized(x_norm));
  }

  // -- parameter access -----------------------------------------------------

  std::vector<nn::ParamRef> encoder_params() {
    std::vector<nn::ParamRef> out;
    for (auto* l : {&enc1, &enc2, &enc3})
      for (auto& p : l->params()) out.push_back(p);
    return out;
  }

  std::vector<nn::ParamRef> decoder_params() {
    std::vector<nn::ParamRef> out;
    for (auto* l : {&dec1, &dec2, &dec3})
      for (auto& p : l->params()) out.push_back(p);
    return out;
  }

  std::vector<nn::ParamRef> params() {
    std::vector<nn::ParamRef> out = encoder_params();
    for (auto& p : decoder_params()) out.push_back(p);
    for (auto* head : {&speaker_head, &gender_head, &language_head})
      for (auto& p : head->params()) out.push_back(p);
    return out;
  }

  void zero_grads() {
    auto all = params();
    nn::zero_grads(all);
  }

  // -- label mapping ---------------------------------------------------------

  BatchLabels labels_for(const Corpus& corpus,
                         std::span<const size_t> rows) const {
    BatchLabels out;
    out.speaker.reserve(rows.size());
    out.gender.reserve(rows.size());
    out.language.reserve(rows.size());
    for (size_t r : rows) {
      const auto& rec = corpus[r];
      out.speaker.push_back(
          detail::vocab_index(speaker_vocab_, rec.speaker, "speaker"));
      out.gender.push_back(rec.gender == Gender::F ? 0 : 1);
      out.language.push_back(
          detail::vocab_index(language_vocab_, rec.language, "language"));
    }
    return out;
  }

  // -- persistence -----------------------------------------------------------
  //
  // Byte layout (all integers little-endian):
  //   'PEEC' | u8 version=1
  //   u32 x7: input_dim, latent_dim, enc_hidden1, enc_hidden2, head_hidden,
  //           n_speakers, n_languages
  //   u64 seed | f64 alpha | f64 dropout | f64 leaky_slope
  //   u8 has_scaler | [f64 min[D] | f64 max[D]]
  //   speaker vocab, then language vocab: u16-length-prefixed UTF-8 each
  //   parameter matrices as f64, in declared order:
  //     enc1..enc3, dec1..dec3, speaker, gender, language heads
  //     (W then b for every dense layer)

  static constexpr char kMagic[4] = {'P', 'E', 'E', 'C'};
  static constexpr std::uint8_t kFormatVersion = 1;

  std::vector<std::uint8_t> serialize() const {
    bytes::Writer w;
    w.raw(std::string_view(kMagic, 4));
    w.u8(kFormatVersion);
    for (size_t dim : {input_dim(), latent_dim(), arch_.enc_hidden1,
                       arch_.enc_hidden2, arch_.head_hidden, n_speakers(),
                       n_languages()}) {
      w.u32(static_cast<std::uint32_t>(dim));
    }
    w.u64(seed_);
    w.f64(alpha_);
    w.f64(arch_.dropout);
    w.f64(arch_.leaky_slope);
    w.u8(scaler_.valid() ? 1 : 0);
    if (scaler_.valid()) {
      for (double v : scaler_.min) w.f64(v);
      for (double v : scaler_.max) w.f64(v);
    }
    for (const auto& s : speaker_vocab_) w.str16(s);
    for (const auto& s : language_vocab_) w.str16(s);
    for (const Matrix* m : parameter_order()) {
      for (double v : m->entries()) w.f64(v);
    }
    return w.take();
  }

  static PrivacyEncoderModel deserialize(std::span<const std::uint8_t> data) {
    bytes::Reader r(data);
    const auto magic = r.raw(4, "magic");
    if (!std::equal(magic.begin(), magic.end(),
                    reinterpret_cast<const std::uint8_t*>(kMagic))) {
      throw BadMagicError("model file does not start with PEEC magic");
    }
    const std::uint8_t version = r.u8("version");
    if (version != kFormatVersion) {
      throw VersionError("model format version " + std::to_string(version) +
                         ", expected " + std::to_string(kFormatVersion));
    }
    const size_t input_dim = r.u32("input_dim");
    const size_t latent_dim = r.u32("latent_dim");
    ModelArch arch;
    arch.enc_hidden1 = r.u32("enc_hidden1");
    arch.enc_hidden2 = r.u32("enc_hidden2");
    arch.head_hidden = r.u32("head_hidden");
    const size_t n_speakers = r.u32("n_speakers");
    const size_t n_languages = r.u32("n_languages");
    const std::uint64_t seed = r.u64("seed");
    const double alpha = r.f64("alpha");
    arch.dropout = r.f64("dropout");
    arch.leaky_slope = r.f64("leaky_slope");
    ScalerParams scaler;
    if (r.u8("has_scaler") != 0) {
      scaler.min.resize(input_dim);
      scaler.max.resize(input_dim);
      for (auto& v : scaler.min) v = r.f64("scaler.min");
      for (auto& v : scaler.max) v = r.f64("scaler.max");
    }
    std::vector<std::string> spk_vocab(n_speakers), lang_vocab(n_languages);
    for (auto& s : spk_vocab) s = r.str16("speaker vocab");
    for (auto& s : lang_vocab) s = r.str16("language vocab");

    PrivacyEncoderModel model(input_dim, latent_dim, std::move(spk_vocab),
                              std::move(lang_vocab), alpha, seed, arch);
    model.scaler_ = std::move(scaler);
    for (Matrix* m : model.parameter_order_mut()) {
      for (size_t i = 0; i < m->size(); ++i) m->data()[i] = r.f64("parameter");
    }
    if (!r.done()) {
      throw TruncationError("model file has " + std::to_string(r.remaining()) +
                            " trailing bytes");
    }
    return model;
  }

  void save(const std::string& path) const {
    const auto blob = serialize();
    bytes::write_file(path, blob);
  }

  static PrivacyEncoderModel load(const std::string& path) {
    const auto blob = bytes::read_file(path);
    return deserialize(blob);
  }

  // public layers so tests and the trainer can drive partial passes
  ModelArch arch_;
  double alpha_;
  std::uint64_t seed_;
  ScalerParams scaler_;
  std::vector<std::string> speaker_vocab_;
  std::vector<std::string> language_vocab_;

  nn::DenseLayer enc1, enc2, enc3;
  nn::DenseLayer dec1, dec2, dec3;
  nn::LeakyRelu enc_a1, enc_a2, dec_a1, dec_a2;
  nn::Dropout enc_d1, enc_d2, dec_d1, dec_d2;
  AdversaryHead speaker_head, gender_head, language_head;

private:
  std::vector<const Matrix*> parameter_order() const {
    const auto mut = const_cast<PrivacyEncoderModel*>(this)->parameter_order_mut();
    return {mut.begin(), mut.end()};
  }

  std::vector<Matrix*> parameter_order_mut() {
    std::vector<Matrix*> out;
    for (nn::DenseLayer* l :
         {&enc1, &enc2, &enc3, &dec1, &dec2, &dec3, &speaker_head.l1,
          &speaker_head.l2, &speaker_head.l3, &gender_head.l1, &gender_head.l2,
          &gender_head.l3, &language_head.l1, &language_head.l2,
          &language_head.l3}) {
      out.push_back(&l->W);
      out.push_back(&l->b);
    }
    return out;
  }

  static double accuracy(const Matrix& logits,
                         const std::vector<size_t>& labels) {
    const auto pred = argmax_rows(logits);
    size_t hits = 0;
    for (size_t i = 0; i < pred.size(); ++i)
      if (pred[i] == labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
  }

  CompositeStats check_batch(const Matrix& x, const BatchLabels& labels) const {
    if (x.cols() != input_dim()) {
      throw ShapeError("composite batch width " + std::to_string(x.cols()) +
                       " vs model input dim " + std::to_string(input_dim()));
    }
    if (labels.speaker.size() != x.rows() || labels.gender.size() != x.rows() ||
        labels.language.size() != x.rows()) {
      throw ValueError("composite batch: missing labels for some rows");
    }
    return {};
  }
};

namespace detail {

inline std::vector<const Matrix*>
parameter_order_of(const PrivacyEncoderModel& m) {
  std::vector<const Matrix*> out;
  auto& mm = const_cast<PrivacyEncoderModel&>(m);
  for (auto& p : mm.params()) out.push_back(p.value);
  return out;
}

} // namespace detail

/// True when every dimension, vocabulary entry and parameter matches.
inline bool models_equal(const PrivacyEncoderModel& a,
                         const PrivacyEncoderModel& b) {
  if (a.input_dim() != b.input_dim() || a.latent_dim() != b.latent_dim() ||
      !(a.arch() == b.arch()) || a.alpha() != b.alpha() ||
      a.seed() != b.seed() || !(a.scaler() == b.scaler()) ||
      a.speaker_vocab() != b.speaker_vocab() ||
      a.language_vocab() != b.language_vocab()) {
    return false;
  }
  const auto pa = detail::parameter_order_of(a);
  const auto pb = detail::parameter_order_of(b);
  for (size_t i = 0; i < pa.size(); ++i) {
    if (!(*pa[i] == *pb[i])) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// Mini-batch adversarial training: one optimizer step per shuffled batch
/// updates all parameter groups simultaneously. Rows are normalized through
/// the model's scaler, which must already be fitted (on the training rows
/// only, by the caller — the evaluation harness audits this).
inline TrainHistory train(PrivacyEncoderModel& model, const Corpus& corpus,
                          std::span<const size_t> rows,
                          const TrainConfig& cfg) {
  if (corpus.dim() != model.input_dim()) {
    throw ShapeError("train: corpus dim " + std::to_string(corpus.dim()) +
                     " vs model input dim " +
                     std::to_string(model.input_dim()));
  }
  if (!model.scaler().valid()) {
    throw ValueError("train: model has no fitted scaler; fit_minmax on the "
                     "training rows first");
  }
  if (rows.empty()) throw ValueError("train: empty row subset");
  if (cfg.batch_size == 0) throw ValueError("train: batch_size must be > 0");
  if (!(cfg.learning_rate > 0.0)) throw ValueError("train: lr must be > 0");

  const Matrix x_all =
      apply_minmax(model.scaler(), corpus.feature_matrix(rows));
  const BatchLabels all_labels = model.labels_for(corpus, rows);

  auto all_params = model.params();
  std::optional<nn::AdamOptimizer> adam;
  if (cfg.optimizer == OptimizerKind::Adam) {
    adam.emplace(all_params, cfg.learning_rate);
  }

  RandomSource shuffle_rs(derive_seed(cfg.seed, 0x5348)); // shuffle stream
  RandomSource dropout_rs(derive_seed(cfg.seed, 0x4452)); // dropout stream

  const size_t n = rows.size();
  TrainHistory history;
  history.reserve(cfg.epochs);
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rs.shuffle(order);
    EpochStats stats;
    for (size_t start = 0; start < n; start += cfg.batch_size) {
      const size_t count = std::min(cfg.batch_size, n - start);
      std::span<const size_t> batch_order(order.data() + start, count);
      const Matrix xb = row_select(x_all, batch_order);
      BatchLabels lb;
      for (size_t k : batch_order) {
        lb.speaker.push_back(all_labels.speaker[k]);
        lb.gender.push_back(all_labels.gender[k]);
        lb.language.push_back(all_labels.language[k]);
      }
      model.zero_grads();
      const CompositeStats batch_stats = model.forward_backward(
          xb, lb, nn::Mode::Train, &dropout_rs, cfg.speaker_weight,
          cfg.gender_weight, cfg.language_weight);
      if (adam) {
        adam->step();
      } else {
        nn::step_sgd(all_params, cfg.learning_rate);
      }
      const double w = static_cast<double>(count) / static_cast<double>(n);
      stats.recon_loss += w * batch_stats.recon;
      stats.speaker_loss += w * batch_stats.speaker_loss;
      stats.gender_loss += w * batch_stats.gender_loss;
      stats.language_loss += w * batch_stats.language_loss;
      stats.speaker_acc += w * batch_stats.speaker_acc;
      stats.gender_acc += w * batch_stats.gender_acc;
      stats.language_acc += w * batch_stats.language_acc;
    }
    history.push_back(stats);
  }
  return history;
}

struct TrainedModel {
  PrivacyEncoderModel model;
  TrainHistory history;
};

/// Convenience pipeline: derive vocabularies and scaler from the given rows,
/// build, then train. The scaler and vocabularies therefore never see rows
/// outside `rows`.
inline TrainedModel train_privacy_model(const Corpus& corpus,
                                        std::span<const size_t> rows,
                                        const TrainConfig& cfg) {
  if (rows.empty()) throw ValueError("train_privacy_model: empty row subset");
  std::set<std::string> spk, lang;
  for (size_t r : rows) {
    spk.insert(corpus[r].speaker);
    lang.insert(corpus[r].language);
  }
  PrivacyEncoderModel model(
      corpus.dim(), cfg.latent_dim,
      std::vector<std::string>(spk.begin(), spk.end()),
      std::vector<std::string>(lang.begin(), lang.end()), cfg.alpha, cfg.seed,
      cfg.arch);
  model.set_scaler(fit_minmax(corpus, rows));
  TrainHistory history = train(model, corpus, rows, cfg);
  return {std::move(model), std::move(history)};
}

} // namespace peec
