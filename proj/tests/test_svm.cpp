#include <catch2/catch_amalgamated.hpp>

#include "test_support.hpp"

#include <peec/matrix.hpp>
#include <peec/random.hpp>
#include <peec/svm.hpp>

#include <cmath>
#include <vector>

using namespace peec;

namespace {

struct Problem {
  Matrix x;
  std::vector<int> y;
};

/// Two seeded Gaussian blobs; `gap` controls separability.
Problem two_blobs(size_t n_per_class, double gap, std::uint64_t seed) {
  RandomSource rs(seed);
  Problem p;
  p.x = Matrix(2 * n_per_class, 2);
  for (size_t i = 0; i < 2 * n_per_class; ++i) {
    const int label = i < n_per_class ? 1 : -1;
    p.x(i, 0) = rs.normal(label * gap / 2.0, 1.0);
    p.x(i, 1) = rs.normal(label * gap / 2.0, 1.0);
    p.y.push_back(label);
  }
  return p;
}

/// Independent reference solver: projected-gradient ascent on the dual with
/// an exact Euclidean projection onto {0 <= a <= C, sum a*y = 0} (bisection
/// on the hyperplane multiplier). Slow but assumption-free.
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
        const double a = std::clamp(v[i] - lambda * y[i], 0.0, C);
        s += a * y[i];
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
      step *= 0.7; // backtrack
      if (step < 1e-12) break;
    }
  }
  return alpha;
}

/// Assemble a model directly from a dual solution (reference bias rule:
/// average over margin vectors, all-vector fallback).
SvmModel model_from_alpha(const Matrix& x, const std::vector<int>& y,
                          const std::vector<double>& alpha, double C,
                          double gamma) {
  const size_t n = x.rows();
  SvmModel m;
  m.gamma = gamma;
  m.C = C;
  std::vector<size_t> sv;
  for (size_t i = 0; i < n; ++i) {
    if (alpha[i] > 1e-10) sv.push_back(i);
  }
  if (sv.empty()) sv.push_back(0);
  m.support_vectors = row_select(x, sv);
  for (size_t i : sv) m.coeffs.push_back(alpha[i] * y[i]);

  double bias_sum = 0.0;
  size_t bias_n = 0;
  for (size_t i = 0; i < n; ++i) {
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

} // namespace

TEST_CASE("rbf kernel basics") {
  const std::vector<double> u = {1.0, 2.0};
  const std::vector<double> v = {1.0, 2.0};
  CHECK(rbf_kernel(u, v, 0.3) == 1.0);
  const std::vector<double> w = {2.0, 0.0};
  // squared distance 5, gamma 0.5 -> exp(-2.5)
  CHECK(rbf_kernel(u, w, 0.5) == Catch::Approx(std::exp(-2.5)).epsilon(1e-12));
  CHECK(rbf_kernel(u, w, 0.5) <= 1.0);
}

TEST_CASE("separable blobs are classified perfectly") {
  const Problem p = two_blobs(15, 8.0, 1);
  const SvmModel m = svm_train_smo(p.x, p.y, 1.0, 0.5);
  const auto pred = svm_predict(m, p.x);
  for (size_t i = 0; i < p.y.size(); ++i) CHECK(pred[i] == p.y[i]);
}

TEST_CASE("smo matches the projected-gradient dual oracle") {
  const Problem p = two_blobs(10, 2.0, 7); // overlapping: both bound regimes
  const double C = 1.0, gamma = 0.5;

  SmoDiagnostics diag;
  const SvmModel m = svm_train_smo(p.x, p.y, C, gamma, 1e-3, 10, 0, &diag);
  const double smo_obj = svm_dual_objective(p.x, p.y, diag.alpha, gamma);

  const auto alpha_ref = dual_oracle(p.x, p.y, C, gamma, 20000);
  const double ref_obj = svm_dual_objective(p.x, p.y, alpha_ref, gamma);

  CAPTURE(smo_obj, ref_obj, diag.sweeps, diag.bias, m.bias);
  CHECK(std::abs(smo_obj - ref_obj) <= 1e-3);

  // feasibility of the smo solution
  double dot = 0.0;
  for (size_t i = 0; i < diag.alpha.size(); ++i) {
    CHECK(diag.alpha[i] >= -1e-12);
    CHECK(diag.alpha[i] <= C + 1e-12);
    dot += diag.alpha[i] * p.y[i];
  }
  CHECK(std::abs(dot) <= 1e-6);

  // KKT conditions hold within the training tolerance
  CHECK(svm_kkt_violation(p.x, p.y, diag.alpha, m.bias, C, gamma) <= 1e-3);

  // both solutions induce the same classifier on train and fresh points
  const SvmModel ref = model_from_alpha(p.x, p.y, alpha_ref, C, gamma);
  const Problem probe = two_blobs(20, 2.0, 8);
  const auto pred_smo = svm_predict(m, probe.x);
  const auto pred_ref = svm_predict(ref, probe.x);
  size_t agree = 0;
  for (size_t i = 0; i < pred_smo.size(); ++i) {
    agree += pred_smo[i] == pred_ref[i];
  }
  CHECK(agree == pred_smo.size());
  CHECK(svm_predict(m, p.x) == svm_predict(ref, p.x));
}

TEST_CASE("training is deterministic per seed") {
  const Problem p = two_blobs(12, 3.0, 4);
  SmoDiagnostics d1, d2;
  const SvmModel a = svm_train_smo(p.x, p.y, 1.0, 0.5, 1e-3, 10, 5, &d1);
  const SvmModel b = svm_train_smo(p.x, p.y, 1.0, 0.5, 1e-3, 10, 5, &d2);
  CHECK(d1.alpha == d2.alpha);
  CHECK(a.bias == b.bias);
  CHECK(a.support_vectors == b.support_vectors);
}

TEST_CASE("different partner seeds agree on the decision rule") {
  const Problem p = two_blobs(12, 5.0, 10);
  const SvmModel a = svm_train_smo(p.x, p.y, 1.0, 0.5, 1e-3, 10, 1);
  const SvmModel b = svm_train_smo(p.x, p.y, 1.0, 0.5, 1e-3, 10, 99);
  const Problem probe = two_blobs(25, 5.0, 11);
  CHECK(svm_predict(a, probe.x) == svm_predict(b, probe.x));
}

TEST_CASE("decision values match an independent kernel expansion") {
  const Problem p = two_blobs(10, 3.0, 13);
  const SvmModel m = svm_train_smo(p.x, p.y, 2.0, 0.25);
  const Problem probe = two_blobs(6, 3.0, 14);
  const auto fast = decision_values(m, probe.x);
  for (size_t i = 0; i < probe.x.rows(); ++i) {
    double f = m.bias;
    for (size_t s = 0; s < m.support_vectors.rows(); ++s) {
      double d2 = 0.0;
      for (size_t j = 0; j < 2; ++j) {
        const double d = m.support_vectors(s, j) - probe.x(i, j);
        d2 += d * d;
      }
      f += m.coeffs[s] * std::exp(-m.gamma * d2);
    }
    CHECK(std::abs(fast[i] - f) < 1e-10);
  }
}

TEST_CASE("vanishing gamma flattens the decision function") {
  const Problem p = two_blobs(10, 3.0, 17);
  const SvmModel m = svm_train_smo(p.x, p.y, 1.0, 1e-12);
  const auto vals = decision_values(m, p.x);
  for (size_t i = 1; i < vals.size(); ++i) {
    CHECK(std::abs(vals[i] - vals[0]) < 1e-6);
  }
}

TEST_CASE("a zero decision value predicts the positive class") {
  SvmModel m;
  m.gamma = 1.0;
  m.C = 1.0;
  m.bias = 0.0;
  m.support_vectors = Matrix{{1.0, 0.0}, {-1.0, 0.0}};
  m.coeffs = {0.5, -0.5};
  // the origin is equidistant from both vectors: f = 0 exactly
  const auto pred = svm_predict(m, Matrix{{0.0, 0.0}});
  CHECK(pred[0] == 1);
}

TEST_CASE("invalid training inputs are rejected") {
  const Problem p = two_blobs(5, 3.0, 19);
  std::vector<int> ones(p.y.size(), 1);
  CHECK_THROWS_AS(svm_train_smo(p.x, ones, 1.0, 0.5), ValueError);
  std::vector<int> bad = p.y;
  bad[0] = 2;
  CHECK_THROWS_AS(svm_train_smo(p.x, bad, 1.0, 0.5), ValueError);
  CHECK_THROWS_AS(svm_train_smo(p.x, p.y, 0.0, 0.5), ValueError);
  CHECK_THROWS_AS(svm_train_smo(p.x, p.y, 1.0, -0.5), ValueError);
  CHECK_THROWS_AS(svm_train_smo(Matrix(1, 2), std::vector<int>{1}, 1.0, 0.5),
                  ValueError);
  const SvmModel m = svm_train_smo(p.x, p.y, 1.0, 0.5);
  CHECK_THROWS_AS(svm_predict(m, Matrix(2, 5)), ShapeError);
}

TEST_CASE("svm persistence round-trips and fails specifically") {
  const Problem p = two_blobs(8, 3.0, 23);
  const SvmModel m = svm_train_smo(p.x, p.y, 1.0, 0.5);
  const auto blob = serialize_svm(m);
  const SvmModel back = deserialize_svm(blob);
  CHECK(back.support_vectors == m.support_vectors);
  CHECK(back.coeffs == m.coeffs);
  CHECK(back.bias == m.bias);
  CHECK(back.gamma == m.gamma);
  CHECK(back.C == m.C);

  const std::string path = testsup::scratch_path("svm") + ".bin";
  save_svm(m, path);
  const SvmModel loaded = load_svm(path);
  CHECK(loaded.coeffs == m.coeffs);

  auto bad_magic = blob;
  bad_magic[1] = 'x';
  CHECK_THROWS_AS(deserialize_svm(bad_magic), BadMagicError);
  auto bad_version = blob;
  bad_version[4] = 9;
  CHECK_THROWS_AS(deserialize_svm(bad_version), VersionError);
  auto truncated = blob;
  truncated.resize(blob.size() - 3);
  CHECK_THROWS_AS(deserialize_svm(truncated), TruncationError);
  auto padded = blob;
  padded.push_back(0);
  CHECK_THROWS_AS(deserialize_svm(padded), TruncationError);
}
