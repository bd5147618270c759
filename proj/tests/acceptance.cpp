// Release acceptance gate.
//
// Each criterion below guards one load-bearing property of the toolkit and
// prints exactly one [PASS]/[FAIL] line; the process exits nonzero if any
// criterion fails. Every tolerance is pinned in this file, next to the check
// that uses it. The heavier criteria (3 and 4) train real models on synthetic
// corpora and assert the documented directional outcomes; they are expected
// to take a couple of minutes combined.

#include <peec/peec.hpp>

#include "test_support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

namespace fs = std::filesystem;
using namespace peec;

namespace {

// ---------------------------------------------------------------------------
// Harness
// ---------------------------------------------------------------------------

struct Outcome {
  bool ok = false;
  std::string detail;
};

struct Checker {
  bool ok = true;
  std::ostringstream detail;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << (detail.str().empty() ? "" : "; ") << "FAILED: " << what;
    }
  }

  void note(const std::string& what) {
    detail << (detail.str().empty() ? "" : "; ") << what;
  }

  Outcome outcome() const { return {ok, detail.str()}; }
};

std::string fm(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return "<unreadable:" + p.string() + ">";
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness: composite nets at input dim 20 vs central finite
//    differences. Limits: max relative error < 1e-4, wall time < 30 s.
// ---------------------------------------------------------------------------

Outcome criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (const std::uint64_t seed : {std::uint64_t{41}, std::uint64_t{42}}) {
    ModelArch arch;
    arch.enc_hidden1 = 16;
    arch.enc_hidden2 = 12;
    arch.head_hidden = 10;
    arch.dropout = 0.0; // finite differences need a deterministic forward
    auto model = PrivacyEncoderModel::build(20, 6, 3, 2, 0.7, seed, arch);

    RandomSource rs(derive_seed(seed, 0xacce97));
    const Matrix x = rand_uniform(rs, 5, 20, 0.0, 1.0);
    BatchLabels labels;
    for (size_t i = 0; i < 5; ++i) {
      labels.speaker.push_back(rs.index(3));
      labels.gender.push_back(rs.index(2));
      labels.language.push_back(rs.index(2));
    }

    // The training step is a min-max update: encoder and decoder descend the
    // composite value while each head descends its own cross-entropy, so the
    // two parameter groups are checked against their own objectives.
    const auto backward = [&] {
      model.zero_grads();
      model.forward_backward(x, labels, nn::Mode::Infer, nullptr);
    };

    nn::GradCheckTarget trunk;
    trunk.loss = [&] { return model.composite_loss(x, labels).value; };
    trunk.backward = backward;
    trunk.params = model.encoder_params();
    for (auto& p : model.decoder_params()) trunk.params.push_back(p);
    worst = std::max(worst, nn::grad_check(trunk, 1e-5));

    nn::GradCheckTarget heads;
    heads.loss = [&] {
      const auto s = model.composite_loss(x, labels);
      return s.speaker_loss + s.gender_loss + s.language_loss;
    };
    heads.backward = backward;
    for (auto* head :
         {&model.speaker_head, &model.gender_head, &model.language_head}) {
      for (auto& p : head->params()) heads.params.push_back(p);
    }
    worst = std::max(worst, nn::grad_check(heads, 1e-5));
  }
  const double secs = seconds_since(t0);

  Checker c;
  c.expect(worst < 1e-4, "max relative error " + fm(worst) + " >= 1e-4");
  c.expect(secs < 30.0, "runtime " + fm(secs) + "s >= 30s");
  c.note("max relative error " + fm(worst) + " (limit 1e-4) in " + fm(secs) +
         "s (limit 30s)");
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 2. Reversal-layer equivalence: the composite backward pass must equal the
//    explicitly assembled dL_AE/dtheta_e - alpha * sum_h dL_h/dtheta_e within
//    1e-10 for alpha in {0, 0.5, 1, 2}; alpha = 0 must equal the plain
//    autoencoder gradient bit-for-bit.
// ---------------------------------------------------------------------------

std::vector<Matrix> encoder_grads(PrivacyEncoderModel& m) {
  std::vector<Matrix> out;
  for (const auto& ref : m.encoder_params()) out.push_back(*ref.grad);
  return out;
}

double max_abs_diff(const std::vector<Matrix>& a,
                    const std::vector<Matrix>& b) {
  double mx = 0.0;
  for (size_t k = 0; k < a.size(); ++k) {
    for (size_t i = 0; i < a[k].size(); ++i) {
      mx = std::max(mx, std::abs(a[k].data()[i] - b[k].data()[i]));
    }
  }
  return mx;
}

std::vector<Matrix> assembled_encoder_grads(PrivacyEncoderModel& helper,
                                            const Matrix& x,
                                            const BatchLabels& labels,
                                            double alpha) {
  helper.set_alpha(1.0); // head.backward now returns the negated raw gradient
  helper.zero_grads();

  const Matrix z = helper.encoder_forward(x, nn::Mode::Infer, nullptr);
  const Matrix x_hat = helper.decoder_forward(z, nn::Mode::Infer, nullptr);
  const auto recon = nn::mse_loss(x, x_hat);
  Matrix g_z = helper.decoder_backward(recon.grad);

  struct Run {
    AdversaryHead* head;
    const std::vector<size_t>* labels;
  } runs[3] = {{&helper.speaker_head, &labels.speaker},
               {&helper.gender_head, &labels.gender},
               {&helper.language_head, &labels.language}};
  for (auto& run : runs) {
    Matrix logits = run.head->forward(z, nn::Mode::Infer, nullptr);
    const auto xent = nn::softmax_xent(logits, *run.labels);
    // backward at alpha=1 yields -raw; scaling by +alpha gives -alpha*raw
    g_z = add(g_z, scale(run.head->backward(xent.grad), alpha));
  }
  helper.encoder_backward(g_z);
  return encoder_grads(helper);
}

Outcome criterion_reversal() {
  ModelArch arch;
  arch.enc_hidden1 = 24;
  arch.enc_hidden2 = 16;
  arch.head_hidden = 12;
  arch.dropout = 0.0; // the two passes must share a deterministic forward
  const Corpus corpus = synth_corpus(1, 24, 4, 2, SnrConfig{}, 17);
  const auto rows = corpus.all_rows();

  Checker c;
  double worst = 0.0;
  for (const double alpha : {0.0, 0.5, 1.0, 2.0}) {
    PrivacyEncoderModel model(24, 6, corpus.speakers(), corpus.languages(),
                              alpha, 21, arch);
    PrivacyEncoderModel helper(24, 6, corpus.speakers(), corpus.languages(),
                               alpha, 21, arch);

    const ScalerParams scaler = fit_minmax(corpus, rows);
    const Matrix x = apply_minmax(scaler, corpus.feature_matrix(rows));
    const BatchLabels labels = model.labels_for(corpus, rows);

    model.zero_grads();
    model.forward_backward(x, labels, nn::Mode::Infer, nullptr);
    const auto composite = encoder_grads(model);
    const auto assembled = assembled_encoder_grads(helper, x, labels, alpha);

    const double diff = max_abs_diff(composite, assembled);
    worst = std::max(worst, diff);
    c.expect(diff <= 1e-10, "alpha=" + fm(alpha) + " composite-vs-assembled " +
                                fm(diff) + " > 1e-10");

    if (alpha == 0.0) {
      helper.set_alpha(0.0);
      helper.zero_grads();
      const Matrix z = helper.encoder_forward(x, nn::Mode::Infer, nullptr);
      const Matrix x_hat = helper.decoder_forward(z, nn::Mode::Infer, nullptr);
      helper.encoder_backward(
          helper.decoder_backward(nn::mse_loss(x, x_hat).grad));
      const double ae_diff = max_abs_diff(composite, encoder_grads(helper));
      c.expect(ae_diff == 0.0, "alpha=0 differs from the plain-AE gradient by " +
                                   fm(ae_diff) + " (must be exact)");
    }
  }
  c.note("max composite-vs-assembled deviation " + fm(worst) +
         " (limit 1e-10), alpha=0 exact");
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 3. Directional replication (synthetic corpus, D=512, L=64, fixed seeds,
//    <= 5 min): the raw arm must be accurate AND leaky; the adversarial arm
//    must suppress every attack while keeping emotion UAR within 5 points of
//    the plain-AE arm.
// ---------------------------------------------------------------------------

Outcome criterion_directional() {
  const auto t0 = std::chrono::steady_clock::now();

  const Corpus corpus = synth_corpus(3, 512, 8, 2, SnrConfig{}, 4242);

  TrainConfig encoder;
  encoder.epochs = 100;
  encoder.batch_size = 32;
  encoder.latent_dim = 64;
  encoder.alpha = 1.0;
  encoder.learning_rate = 1e-3;
  encoder.seed = 101;
  encoder.arch.enc_hidden1 = 512;
  encoder.arch.enc_hidden2 = 256;
  encoder.arch.head_hidden = 128;
  // The labelled structure is a small share of the feature variance; the
  // default dropout starves the autoencoder into predicting the corpus mean,
  // which would make the utility gap and the attack gates vacuous. A lighter
  // rate with more epochs trains all arms to competence without memorising
  // (longer schedules start failing the membership gate instead).
  encoder.arch.dropout = 0.25;

  ReportOptions opts;
  opts.encoder = encoder;
  opts.member_fraction = 0.5;
  opts.pipeline.loso_repeats = 1;
  opts.pipeline.grid_C = {1.0, 10.0};
  opts.pipeline.grid_gamma = {1e-3, 1e-2, 1e-1};
  opts.pipeline.attack.hidden = 128;
  opts.pipeline.attack.epochs = 60;
  opts.pipeline.attack.batch = 32;
  opts.pipeline.attack.lr = 1e-3;
  opts.pipeline.attack.dropout = 0.25;
  opts.pipeline.seed = 2024;

  const AttackReport report = build_report(corpus, opts);
  const double secs = seconds_since(t0);

  const ReportRow& raw = report.row("raw");
  const ReportRow& ae = report.row("ae");
  const ReportRow& prop = report.row("proposed");
  const double chance_language = 0.5; // two languages
  const double uar_gap = std::abs(prop.emotion_uar - ae.emotion_uar);

  Checker c;
  c.expect(raw.emotion_uar >= 0.85,
           "raw emotion UAR " + fm(raw.emotion_uar) + " < 0.85");
  c.expect(raw.gender_acc >= 0.85,
           "raw gender attack " + fm(raw.gender_acc) + " < 0.85");
  c.expect(prop.gender_acc <= 0.65,
           "proposed gender attack " + fm(prop.gender_acc) + " > 0.65");
  c.expect(prop.member_acc <= 0.60,
           "proposed membership attack " + fm(prop.member_acc) + " > 0.60");
  c.expect(prop.language_acc <= chance_language + 0.15,
           "proposed language attack " + fm(prop.language_acc) + " > " +
               fm(chance_language + 0.15));
  c.expect(uar_gap <= 0.05, "proposed-vs-AE emotion UAR gap " + fm(uar_gap) +
                                " > 0.05");
  c.expect(secs <= 300.0, "runtime " + fm(secs) + "s > 300s");
  c.note("raw uar=" + fm(raw.emotion_uar) + " gender=" + fm(raw.gender_acc) +
         " | proposed gender=" + fm(prop.gender_acc) +
         " member=" + fm(prop.member_acc) +
         " language=" + fm(prop.language_acc) + " uar-gap=" + fm(uar_gap) +
         " | " + fm(secs) + "s (limit 300s)");
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 4. Latent-width sweep: L in {32, 64, 128, 256, 512} completes, and the
//    narrowest latent leaks no more gender than the widest plus 0.05.
// ---------------------------------------------------------------------------

Outcome criterion_sweep() {
  const auto t0 = std::chrono::steady_clock::now();
  const Corpus corpus = synth_corpus(3, 512, 4, 2, SnrConfig{}, 510);

  TrainConfig base;
  base.epochs = 100;
  base.batch_size = 32;
  base.alpha = 1.0;
  base.learning_rate = 1e-3;
  base.seed = 77;
  base.arch.enc_hidden1 = 384;
  base.arch.enc_hidden2 = 192;
  base.arch.head_hidden = 96;
  // Same training regime as the four-method comparison: light dropout and a
  // longer schedule so every width trains to competence instead of the
  // corpus mean (an untrained encoder would make the leakage gate vacuous).
  base.arch.dropout = 0.25;

  PipelineOptions pipe;
  pipe.loso_repeats = 1;
  pipe.grid_C = {1.0, 10.0};
  pipe.grid_gamma = {1e-3, 1e-2, 1e-1};
  pipe.attack.hidden = 96;
  pipe.attack.epochs = 40;
  pipe.attack.batch = 32;
  pipe.attack.lr = 1e-3;
  pipe.attack.dropout = 0.25;
  pipe.seed = 881;

  const std::vector<size_t> dims = {32, 64, 128, 256, 512};
  const auto rows = latent_sweep(corpus, dims, base, pipe, 0.5);
  const double secs = seconds_since(t0);

  Checker c;
  c.expect(rows.size() == dims.size(),
           "expected " + std::to_string(dims.size()) + " rows, got " +
               std::to_string(rows.size()));
  for (size_t i = 0; i < rows.size() && i < dims.size(); ++i) {
    c.expect(rows[i].latent_dim == dims[i], "row " + std::to_string(i) +
                                                " has latent_dim " +
                                                std::to_string(rows[i].latent_dim));
    for (const double v : {rows[i].emotion_uar, rows[i].gender_acc,
                           rows[i].member_acc, rows[i].language_acc}) {
      c.expect(std::isfinite(v) && v >= 0.0 && v <= 1.0,
               "metric " + fm(v) + " at L=" + std::to_string(dims[i]) +
                   " outside [0,1]");
    }
  }
  if (rows.size() == dims.size()) {
    const double narrow = rows.front().gender_acc;
    const double wide = rows.back().gender_acc;
    c.expect(narrow <= wide + 0.05, "gender attack at L=32 (" + fm(narrow) +
                                        ") > L=512 (" + fm(wide) + ") + 0.05");
    c.note("gender acc by L: 32->" + fm(rows[0].gender_acc) + " 64->" +
           fm(rows[1].gender_acc) + " 128->" + fm(rows[2].gender_acc) +
           " 256->" + fm(rows[3].gender_acc) + " 512->" +
           fm(rows[4].gender_acc) + " | " + fm(secs) + "s");
  }
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 5. SMO vs brute force: on a 20-point 2-D toy set the dual objective must
//    be within 1e-3 of a projected-gradient reference, predictions must be
//    identical, and the final multipliers must satisfy KKT within tol (1e-3).
// ---------------------------------------------------------------------------

std::vector<double> dual_oracle(const Matrix& x, const std::vector<int>& y,
                                double C, double gamma, size_t iters) {
  const size_t n = x.rows();
  Matrix k(n, n);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      k(i, j) = rbf_kernel(x.row(i), x.row(j), gamma);
    }
  }
  auto project = [&](std::vector<double> v) {
    double lo = -(C + 1.0), hi = C + 1.0;
    for (double vi : v) {
      lo = std::min(lo, -(std::abs(vi) + C + 1.0));
      hi = std::max(hi, std::abs(vi) + C + 1.0);
    }
    const auto balance = [&](double lambda) {
      double s = 0.0;
      for (size_t i = 0; i < v.size(); ++i) {
        s += std::clamp(v[i] - lambda * y[i], 0.0, C) * y[i];
      }
      return s;
    };
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (balance(mid) > 0.0 ? lo : hi) = mid;
    }
    const double lambda = 0.5 * (lo + hi);
    for (size_t i = 0; i < v.size(); ++i) {
      v[i] = std::clamp(v[i] - lambda * y[i], 0.0, C);
    }
    return v;
  };

  std::vector<double> alpha = project(std::vector<double>(n, C / 2.0));
  double step = 1.0 / static_cast<double>(n);
  double best = -1e300;
  std::vector<double> grad(n);
  for (size_t it = 0; it < iters; ++it) {
    for (size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (size_t j = 0; j < n; ++j) s += alpha[j] * y[j] * k(i, j);
      grad[i] = 1.0 - y[i] * s;
    }
    std::vector<double> cand(n);
    for (size_t i = 0; i < n; ++i) cand[i] = alpha[i] + step * grad[i];
    cand = project(std::move(cand));
    const double obj = svm_dual_objective(x, y, cand, gamma);
    if (obj > best) {
      best = obj;
      alpha = std::move(cand);
    } else {
      step *= 0.7;
      if (step < 1e-12) break;
    }
  }
  return alpha;
}

SvmModel model_from_alpha(const Matrix& x, const std::vector<int>& y,
                          const std::vector<double>& alpha, double C,
                          double gamma) {
  SvmModel m;
  m.gamma = gamma;
  m.C = C;
  std::vector<size_t> sv;
  for (size_t i = 0; i < x.rows(); ++i) {
    if (alpha[i] > 1e-10) sv.push_back(i);
  }
  if (sv.empty()) sv.push_back(0);
  m.support_vectors = row_select(x, sv);
  for (size_t i : sv) m.coeffs.push_back(alpha[i] * y[i]);

  double bias_sum = 0.0;
  size_t bias_n = 0;
  for (size_t i = 0; i < x.rows(); ++i) {
    const bool margin = alpha[i] > 1e-7 && alpha[i] < C - 1e-7;
    if (!margin) continue;
    double s = 0.0;
    for (size_t idx = 0; idx < sv.size(); ++idx) {
      s += m.coeffs[idx] * rbf_kernel(x.row(sv[idx]), x.row(i), gamma);
    }
    bias_sum += y[i] - s;
    ++bias_n;
  }
  m.bias = bias_n > 0 ? bias_sum / static_cast<double>(bias_n) : 0.0;
  return m;
}

Outcome criterion_smo() {
  constexpr double kC = 1.0;
  constexpr double kGamma = 0.5;
  constexpr double kTol = 1e-3;

  // 20 points, 2-D, overlapping blobs so the box constraints activate.
  RandomSource rs(5);
  Matrix x(20, 2);
  std::vector<int> y;
  for (size_t i = 0; i < 20; ++i) {
    const int label = i < 10 ? 1 : -1;
    x(i, 0) = rs.normal(label * 1.0, 1.0);
    x(i, 1) = rs.normal(label * 1.0, 1.0);
    y.push_back(label);
  }

  SmoDiagnostics diag;
  const SvmModel smo = svm_train_smo(x, y, kC, kGamma, kTol, 10, 9, &diag);
  const std::vector<double> ref_alpha = dual_oracle(x, y, kC, kGamma, 3000);
  const SvmModel ref = model_from_alpha(x, y, ref_alpha, kC, kGamma);

  const double obj_smo = svm_dual_objective(x, y, diag.alpha, kGamma);
  const double obj_ref = svm_dual_objective(x, y, ref_alpha, kGamma);
  const double obj_gap = std::abs(obj_smo - obj_ref);
  const double kkt =
      svm_kkt_violation(x, y, diag.alpha, diag.bias, kC, kGamma);

  Matrix probe(49, 2);
  size_t p = 0;
  for (int a = -3; a <= 3; ++a) {
    for (int b = -3; b <= 3; ++b) {
      probe(p, 0) = a;
      probe(p, 1) = b;
      ++p;
    }
  }

  Checker c;
  c.expect(obj_gap <= 1e-3, "dual objective gap " + fm(obj_gap) + " > 1e-3");
  c.expect(kkt <= kTol, "KKT violation " + fm(kkt) + " > tol " + fm(kTol));
  c.expect(svm_predict(smo, x) == svm_predict(ref, x),
           "train-set predictions differ from the reference solver");
  c.expect(svm_predict(smo, probe) == svm_predict(ref, probe),
           "probe-grid predictions differ from the reference solver");
  c.note("dual gap " + fm(obj_gap) + " (limit 1e-3), KKT " + fm(kkt) +
         " (tol 1e-3), predictions identical on 20 train + 49 probe points");
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 6. UAR oracle: hand-computed confusion matrices with exact expectations.
// ---------------------------------------------------------------------------

Outcome criterion_uar() {
  Checker c;

  ConfusionMatrix cm(2); // [[8,2],[5,5]] -> (0.8 + 0.5) / 2 = 0.65
  cm.add(0, 0, 8);
  cm.add(0, 1, 2);
  cm.add(1, 0, 5);
  cm.add(1, 1, 5);
  c.expect(uar(cm) == 0.65, "uar([[8,2],[5,5]]) = " + fm(uar(cm)) +
                                ", expected exactly 0.65");

  ConfusionMatrix perfect(3);
  perfect.add(0, 0, 4);
  perfect.add(1, 1, 7);
  perfect.add(2, 2, 2);
  c.expect(uar(perfect) == 1.0, "perfect classifier UAR != 1.0");

  ConfusionMatrix majority(2); // balanced binary, everything predicted as 0
  majority.add(0, 0, 50);
  majority.add(1, 0, 50);
  c.expect(uar(majority) == 0.5, "majority-class UAR != 0.5");

  c.note("0.65 / 1.0 / 0.5 all exact");
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 7. LOSO hygiene: the recorded fit events must contain zero test-speaker
//    rows, and the fold count must equal the speaker count.
// ---------------------------------------------------------------------------

Outcome criterion_loso() {
  const Corpus corpus = synth_corpus(2, 24, 5, 2, SnrConfig{}, 303);

  LosoOptions opt;
  opt.repeats = 1;
  opt.grid_C = {1.0};
  opt.grid_gamma = {0.1};
  opt.seed = 11;
  const LosoResult result =
      evaluate_loso(corpus, make_identity_representation(), opt);
  const auto violations = audit_violations(result.trace, corpus);

  Checker c;
  c.expect(violations.empty(),
           std::to_string(violations.size()) + " hygiene violations, first: " +
               (violations.empty() ? "" : violations.front()));
  c.expect(result.trace.fold_count == corpus.speakers().size(),
           "fold count " + std::to_string(result.trace.fold_count) +
               " != speaker count " +
               std::to_string(corpus.speakers().size()));
  c.expect(result.trace.events.size() == 4 * corpus.speakers().size(),
           "expected 4 fit events per fold");
  c.note("0 violations across " + std::to_string(result.trace.events.size()) +
         " fit events, " + std::to_string(result.trace.fold_count) +
         " folds == " + std::to_string(corpus.speakers().size()) +
         " speakers");
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 8. Persistence: save -> load round-trips bit-exactly; corrupted magic and
//    truncated payloads raise their own distinct error types.
// ---------------------------------------------------------------------------

Outcome criterion_persistence() {
  const Corpus corpus = synth_corpus(1, 16, 4, 2, SnrConfig{}, 88);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.latent_dim = 4;
  cfg.learning_rate = 1e-3;
  cfg.seed = 6;
  cfg.arch = testsup::tiny_arch();
  auto trained = train_privacy_model(corpus, corpus.all_rows(), cfg);

  Checker c;
  const auto bytes = trained.model.serialize();
  const auto back = PrivacyEncoderModel::deserialize(bytes);
  c.expect(models_equal(trained.model, back),
           "deserialized model differs from the original");
  c.expect(back.serialize() == bytes, "re-serialization is not bit-identical");

  const Matrix z = trained.model.encode_raw(
      corpus.feature_matrix(corpus.all_rows()));
  std::vector<int> y;
  for (size_t r = 0; r < corpus.size(); ++r) {
    y.push_back(corpus[r].valence == Valence::Pos ? 1 : -1);
  }
  const SvmModel svm = svm_train_smo(z, y, 1.0, 0.1, 1e-3, 10, 7);
  const auto svm_bytes = serialize_svm(svm);
  c.expect(serialize_svm(deserialize_svm(svm_bytes)) == svm_bytes,
           "SVM round-trip is not bit-identical");

  auto corrupted = bytes;
  corrupted[0] ^= 0xFF;
  bool magic_ok = false;
  try {
    (void)PrivacyEncoderModel::deserialize(corrupted);
  } catch (const BadMagicError&) {
    magic_ok = true;
  } catch (const Error&) {
  }
  c.expect(magic_ok, "corrupted magic did not raise the magic-specific error");

  auto truncated = bytes;
  truncated.resize(truncated.size() / 2);
  bool trunc_ok = false;
  try {
    (void)PrivacyEncoderModel::deserialize(truncated);
  } catch (const TruncationError&) {
    trunc_ok = true;
  } catch (const Error&) {
  }
  c.expect(trunc_ok, "truncation did not raise the truncation-specific error");

  c.note("model " + std::to_string(bytes.size()) + "B and SVM " +
         std::to_string(svm_bytes.size()) +
         "B round-trip bit-exactly; magic/truncation errors distinct");
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 9. Wire protocol and pipeline: golden PING bytes, round-trip identity for
//    every frame type, sensor->edge->cloud equal to offline encode->predict
//    exactly, and the leakage audit PASS on a healthy run / FAIL on the
//    passthrough negative control.
// ---------------------------------------------------------------------------

struct Stack {
  Corpus corpus;
  PrivacyEncoderModel model;
  SvmModel svm;
};

Stack make_stack() {
  Corpus corpus = synth_corpus(1, 16, 4, 2, SnrConfig{}, 91);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.latent_dim = 4;
  cfg.learning_rate = 1e-3;
  cfg.seed = 5;
  cfg.arch = testsup::tiny_arch();
  auto trained = train_privacy_model(corpus, corpus.all_rows(), cfg);

  const Matrix z =
      trained.model.encode_raw(corpus.feature_matrix(corpus.all_rows()));
  std::vector<int> y;
  for (size_t r = 0; r < corpus.size(); ++r) {
    y.push_back(corpus[r].valence == Valence::Pos ? 1 : -1);
  }
  SvmModel svm = svm_train_smo(z, y, 1.0, 0.1, 1e-3, 10, 7);
  return {std::move(corpus), std::move(trained.model), std::move(svm)};
}

std::pair<int, double> offline_predict(const Stack& s, size_t row) {
  const auto& raw = s.corpus[row].features;
  Matrix x(1, raw.size());
  for (size_t j = 0; j < raw.size(); ++j) {
    x(0, j) = static_cast<double>(static_cast<float>(raw[j]));
  }
  const Matrix z = s.model.encode_raw(x);
  Matrix z_wire(1, z.cols());
  for (size_t j = 0; j < z.cols(); ++j) {
    z_wire(0, j) = static_cast<double>(static_cast<float>(z(0, j)));
  }
  const double f = decision_values(s.svm, z_wire)[0];
  return {f < 0.0 ? 0 : 1, static_cast<double>(static_cast<float>(f))};
}

Outcome criterion_wire() {
  Checker c;

  const std::vector<std::uint8_t> golden = {0x50, 0x45, 0x45, 0x43, 0x01,
                                            0x05, 0x00, 0x00, 0x00, 0x00};
  c.expect(wire::encode_frame(wire::make_ping_frame()) == golden,
           "PING frame does not match the golden bytes");

  const std::vector<double> feats = {0.25, -1.5, 3.0};
  const std::vector<double> lat = {1.0, 2.0};
  const wire::WireFrame frames[] = {
      wire::make_ping_frame(),
      wire::make_pong_frame(),
      wire::make_features_frame("u1", feats),
      wire::make_latent_frame("u1", lat),
      wire::make_prediction_frame("u1", 1, 0.5F),
      wire::make_error_frame("boom")};
  for (const auto& f : frames) {
    const auto bytes = wire::encode_frame(f);
    size_t consumed = 0;
    const auto g = wire::decode_frame(bytes, &consumed);
    c.expect(consumed == bytes.size() && g.type == f.type &&
                 g.payload == f.payload,
             std::string("round-trip failed for frame type ") +
                 wire::to_string(f.type));
  }

  const Stack s = make_stack();
  {
    net::CloudService cloud("127.0.0.1:0", s.svm);
    cloud.start();
    net::TapService tap("127.0.0.1:0", cloud.address());
    tap.start();
    net::EdgeService edge("127.0.0.1:0", s.model, tap.address());
    edge.start();

    const auto transcript = net::run_sensor(s.corpus, edge.address());
    c.expect(transcript.size() == s.corpus.size(), "transcript size mismatch");
    bool exact = true;
    for (size_t r = 0; r < transcript.size(); ++r) {
      const auto [valence, score] = offline_predict(s, r);
      if (!transcript[r].error.empty() || transcript[r].valence != valence ||
          transcript[r].score != score) {
        exact = false;
      }
    }
    c.expect(exact, "pipeline predictions differ from offline encode+predict");

    const auto audit = net::audit_leakage_bytes(tap.capture(), 16, 4);
    c.expect(audit.pass && audit.n_latent == s.corpus.size() &&
                 audit.n_features == 0,
             "healthy-run audit verdict " + audit.verdict());

    edge.stop();
    tap.stop();
    cloud.stop();
  }
  {
    net::CloudService cloud("127.0.0.1:0", s.svm);
    cloud.start();
    net::TapService tap("127.0.0.1:0", cloud.address());
    tap.start();
    net::EdgeOptions options;
    options.passthrough = true;
    net::EdgeService edge("127.0.0.1:0", s.model, tap.address(), options);
    edge.start();

    (void)net::run_sensor(s.corpus, edge.address());
    const auto audit = net::audit_leakage_bytes(tap.capture(), 16, 4);
    c.expect(!audit.pass && audit.n_features > 0,
             "passthrough audit verdict " + audit.verdict() +
                 " (must be FAIL)");

    edge.stop();
    tap.stop();
    cloud.stop();
  }

  c.note("golden PING, 6/6 frame round-trips, " +
         std::to_string(s.corpus.size()) +
         " pipeline predictions exactly equal offline, audit PASS/FAIL as "
         "designed");
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 10. CLI determinism: two `train` + `report` invocations with identical
//     config and seed must produce bit-identical metric CSVs.
// ---------------------------------------------------------------------------

int run_cli(const std::vector<std::string>& args, const fs::path& log) {
  std::string cmd = "'" + std::string(PEEC_CLI_PATH) + "'";
  for (const auto& a : args) cmd += " '" + a + "'";
  cmd += " >'" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome criterion_cli_determinism() {
  const fs::path root = fs::temp_directory_path() /
                        ("peec-acceptance-" + std::to_string(::getpid()));
  fs::create_directories(root);

  const fs::path cfg = root / "config.json";
  {
    std::ofstream out(cfg);
    out << R"({
  "train": {"enc_hidden1": 24, "enc_hidden2": 12, "head_hidden": 8},
  "eval": {"grid_c": [1.0], "grid_gamma": [0.1]},
  "attack": {"hidden": 16, "epochs": 5, "batch": 16}
})";
  }

  Checker c;
  const fs::path synth_dir = root / "synth";
  c.expect(run_cli({"synth", "--seed", "19", "--n-per-cell", "2", "--dim",
                    "16", "--speakers", "4", "--languages", "2", "--run-dir",
                    synth_dir.string()},
                   root / "synth.log") == 0,
           "synth invocation failed (see " + (root / "synth.log").string() +
               ")");
  const std::string corpus_csv = (synth_dir / "corpus.csv").string();

  const auto train_args = [&](const fs::path& dir) {
    return std::vector<std::string>{
        "train",        "--config", cfg.string(),  "--corpus",
        corpus_csv,     "--seed",   "23",          "--epochs",
        "2",            "--batch-size", "8",       "--latent-dim",
        "4",            "--learning-rate", "0.001", "--run-dir",
        dir.string()};
  };
  const auto report_args = [&](const fs::path& dir) {
    return std::vector<std::string>{
        "report",       "--config", cfg.string(),  "--corpus",
        corpus_csv,     "--seed",   "23",          "--epochs",
        "2",            "--latent-dim", "4",       "--learning-rate",
        "0.001",        "--repeats", "1",          "--run-dir",
        dir.string()};
  };

  c.expect(run_cli(train_args(root / "train-1"), root / "train-1.log") == 0,
           "first train invocation failed");
  c.expect(run_cli(train_args(root / "train-2"), root / "train-2.log") == 0,
           "second train invocation failed");
  c.expect(run_cli(report_args(root / "report-1"), root / "report-1.log") == 0,
           "first report invocation failed");
  c.expect(run_cli(report_args(root / "report-2"), root / "report-2.log") == 0,
           "second report invocation failed");

  if (c.ok) {
    const std::string hist1 = read_bytes(root / "train-1" / "history.csv");
    c.expect(hist1 == read_bytes(root / "train-2" / "history.csv"),
             "train history CSVs differ between identical invocations");
    c.expect(read_bytes(root / "train-1" / "model.bin") ==
                 read_bytes(root / "train-2" / "model.bin"),
             "trained models differ between identical invocations");

    const std::string report1 = read_bytes(root / "report-1" / "report.csv");
    c.expect(report1 == read_bytes(root / "report-2" / "report.csv"),
             "report CSVs differ between identical invocations");
    c.expect(report1.rfind(
                 "method,emotion_uar,gender_acc,member_acc,language_acc\n",
                 0) == 0,
             "report CSV header is wrong");
    c.expect(std::count(report1.begin(), report1.end(), '\n') == 5,
             "report CSV must have a header plus four method rows");
    c.note("train history/model and 4-method report CSV bit-identical "
           "across reruns");
  }
  return c.outcome();
}

} // namespace

int main(int argc, char** argv) {
  struct Entry {
    const char* name;
    Outcome (*fn)();
  };
  const Entry entries[] = {
      {"gradient-correctness", criterion_gradients},
      {"reversal-layer-equivalence", criterion_reversal},
      {"directional-replication", criterion_directional},
      {"latent-width-sweep", criterion_sweep},
      {"smo-vs-reference-dual", criterion_smo},
      {"uar-oracle", criterion_uar},
      {"loso-hygiene", criterion_loso},
      {"persistence", criterion_persistence},
      {"wire-and-pipeline", criterion_wire},
      {"cli-determinism", criterion_cli_determinism},
  };

  // With arguments, run only the named criteria (exact match); the summary
  // line and exit code then cover just that subset.
  const auto selected = [&](const char* name) {
    if (argc <= 1) return true;
    for (int a = 1; a < argc; ++a) {
      if (std::string(argv[a]) == name) return true;
    }
    return false;
  };

  int failures = 0;
  int selected_count = 0;
  int index = 0;
  for (const auto& entry : entries) {
    ++index;
    if (!selected(entry.name)) continue;
    ++selected_count;
    Outcome out;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      out = entry.fn();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    std::printf("[%s] %02d %-28s %s [%.1fs]\n", out.ok ? "PASS" : "FAIL",
                index, entry.name, out.detail.c_str(), secs);
    std::fflush(stdout);
    if (!out.ok) ++failures;
  }

  if (selected_count == 0) {
    std::fprintf(stderr, "no criterion matches the given names\n");
    return 2;
  }
  std::printf("acceptance: %d/%d criteria passed\n", selected_count - failures,
              selected_count);
  return failures == 0 ? 0 : 1;
}
