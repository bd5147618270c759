#include <catch2/catch_amalgamated.hpp>

#include <peec/baselines.hpp>
#include <peec/matrix.hpp>
#include <peec/random.hpp>

#include <cmath>
#include <vector>

using namespace peec;

namespace {

Matrix stretched_data(size_t n, size_t d, std::uint64_t seed) {
  RandomSource rs(seed);
  Matrix x = rand_normal(rs, n, d, 0.0, 1.0);
  // stretch a few directions so the spectrum is well separated
  for (size_t i = 0; i < n; ++i) {
    x(i, 0) *= 4.0;
    x(i, 1) = 2.0 * x(i, 1) + 0.5 * x(i, 0);
  }
  return x;
}

double frobenius_diff(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

} // namespace

TEST_CASE("first component of y = x data is (1,1)/sqrt(2)") {
  // points on the diagonal with a little symmetric spread
  Matrix x(6, 2);
  const double ts[6] = {-2.5, -1.0, -0.2, 0.3, 1.1, 2.3};
  for (size_t i = 0; i < 6; ++i) {
    x(i, 0) = ts[i];
    x(i, 1) = ts[i];
  }
  const PcaModel pca = pca_fit(x, 1);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  // sign convention: the largest-magnitude entry is positive
  CHECK(pca.components(0, 0) == Catch::Approx(inv_sqrt2).epsilon(1e-9));
  CHECK(pca.components(0, 1) == Catch::Approx(inv_sqrt2).epsilon(1e-9));
}

TEST_CASE("full-rank reconstruction is lossless") {
  const Matrix x = stretched_data(40, 6, 1);
  const PcaModel pca = pca_fit(x, 6);
  const Matrix z = pca_transform(pca, x);
  const Matrix back = pca_reconstruct(pca, z);
  CHECK(frobenius_diff(back, x) < 1e-8);
}

TEST_CASE("eigenvalues are non-negative and non-increasing") {
  const Matrix x = stretched_data(60, 8, 2);
  const PcaModel pca = pca_fit(x, 8);
  REQUIRE(pca.explained_variance.size() == 8);
  for (size_t i = 0; i < 8; ++i) {
    CHECK(pca.explained_variance[i] >= 0.0);
    if (i > 0) {
      CHECK(pca.explained_variance[i] <= pca.explained_variance[i - 1]);
    }
  }
}

TEST_CASE("component rows are orthonormal") {
  const Matrix x = stretched_data(50, 7, 3);
  const PcaModel pca = pca_fit(x, 5);
  const Matrix gram = matmul(pca.components, transpose(pca.components));
  for (size_t i = 0; i < 5; ++i) {
    for (size_t j = 0; j < 5; ++j) {
      CHECK(std::abs(gram(i, j) - (i == j ? 1.0 : 0.0)) < 1e-8);
    }
  }
}

TEST_CASE("the mean maps to the origin") {
  const Matrix x = stretched_data(30, 5, 4);
  const PcaModel pca = pca_fit(x, 3);
  Matrix mean(1, 5);
  for (size_t j = 0; j < 5; ++j) {
    double s = 0.0;
    for (size_t i = 0; i < 30; ++i) s += x(i, j);
    mean(0, j) = s / 30.0;
  }
  const Matrix z = pca_transform(pca, mean);
  for (size_t j = 0; j < 3; ++j) CHECK(std::abs(z(0, j)) < 1e-9);
}

TEST_CASE("reconstruction error decreases as k grows") {
  const Matrix x = stretched_data(64, 10, 5);
  double prev = std::numeric_limits<double>::infinity();
  for (size_t k : {1, 3, 5, 8, 10}) {
    const PcaModel pca = pca_fit(x, k);
    const double err = frobenius_diff(pca_reconstruct(pca, pca_transform(pca, x)), x);
    CHECK(err <= prev + 1e-9);
    prev = err;
  }
}

TEST_CASE("transform of a reconstruction returns the scores") {
  const Matrix x = stretched_data(25, 6, 6);
  const PcaModel pca = pca_fit(x, 4);
  const Matrix z = pca_transform(pca, x);
  const Matrix z2 = pca_transform(pca, pca_reconstruct(pca, z));
  CHECK(frobenius_diff(z2, z) < 1e-8);
}

TEST_CASE("score variances equal the eigenvalues") {
  const Matrix x = stretched_data(80, 6, 7);
  const PcaModel pca = pca_fit(x, 6);
  const Matrix z = pca_transform(pca, x);
  const size_t n = z.rows();
  double total_eig = 0.0;
  for (size_t j = 0; j < 6; ++j) {
    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) mean += z(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (size_t i = 0; i < n; ++i) {
      var += (z(i, j) - mean) * (z(i, j) - mean);
    }
    var /= static_cast<double>(n - 1);
    CHECK(var == Catch::Approx(pca.explained_variance[j]).margin(1e-8));
    total_eig += pca.explained_variance[j];
  }
  // total variance is preserved by the full-rank rotation
  double total_var = 0.0;
  for (size_t j = 0; j < 6; ++j) {
    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) mean += x(i, j);
    mean /= static_cast<double>(n);
    for (size_t i = 0; i < n; ++i) {
      total_var += (x(i, j) - mean) * (x(i, j) - mean);
    }
  }
  total_var /= static_cast<double>(n - 1);
  CHECK(total_var == Catch::Approx(total_eig).epsilon(1e-10));
}

TEST_CASE("degenerate and invalid inputs are rejected") {
  CHECK_THROWS_AS(pca_fit(Matrix::filled(10, 4, 3.0), 2), ValueError);
  const Matrix x = stretched_data(10, 4, 8);
  CHECK_THROWS_AS(pca_fit(x, 0), ValueError);
  CHECK_THROWS_AS(pca_fit(x, 5), ValueError);  // k > dim
  CHECK_THROWS_AS(pca_fit(Matrix(1, 4), 1), ValueError); // single row
  // k bounded by n - 1: 3 rows support at most 2 components
  const Matrix tiny = stretched_data(3, 4, 9);
  CHECK_THROWS_AS(pca_fit(tiny, 3), ValueError);
  CHECK_NOTHROW(pca_fit(tiny, 2));
  // transform width must match
  const PcaModel pca = pca_fit(x, 2);
  CHECK_THROWS_AS(pca_transform(pca, Matrix(2, 7)), ShapeError);
  CHECK_THROWS_AS(pca_reconstruct(pca, Matrix(2, 3)), ShapeError);
}

TEST_CASE("plain autoencoder baseline is the alpha=0 trainer") {
  const Corpus corpus = synth_corpus(2, 32, 4, 2, SnrConfig{}, 15);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.latent_dim = 6;
  cfg.alpha = 0.7; // must be ignored by the plain-AE wrapper
  cfg.learning_rate = 1e-3;
  cfg.seed = 9;
  cfg.arch.enc_hidden1 = 24;
  cfg.arch.enc_hidden2 = 16;
  cfg.arch.head_hidden = 12;

  const auto plain = train_plain_autoencoder(corpus, corpus.all_rows(), cfg);
  TrainConfig zeroed = cfg;
  zeroed.alpha = 0.0;
  const auto reference = train_privacy_model(corpus, corpus.all_rows(), zeroed);
  CHECK(models_equal(plain.model, reference.model));
  CHECK(plain.model.alpha() == 0.0);
}
