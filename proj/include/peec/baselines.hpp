#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "peec/corpus.hpp"
#include "peec/matrix.hpp"
#include "peec/privacy_model.hpp"

namespace peec {

/// Principal-component projection fitted on normalized features.
/// `components` is L x D (rows are unit-norm eigenvectors of the covariance,
/// ordered by decreasing eigenvalue); `mean` is 1 x D.
struct PcaModel {
  Matrix mean;       // 1 x D
  Matrix components; // L x D
  std::vector<double> explained_variance; // eigenvalues, length L

  size_t input_dim() const { return components.cols(); }
  size_t latent_dim() const { return components.rows(); }
};

/// Fit PCA by eigendecomposition of the sample covariance (divisor n-1).
/// Sign convention: each component is flipped so its largest-magnitude entry
/// is positive, making the projection deterministic across solvers.
inline PcaModel pca_fit(const Matrix& x, size_t n_components) {
  const size_t n = x.rows(), d = x.cols();
  if (n < 2) throw ValueError("pca_fit: need at least 2 rows");
  if (n_components < 1 || n_components > std::min(n - 1, d)) {
    throw ValueError("pca_fit: n_components " + std::to_string(n_components) +
                     " out of range for " + std::to_string(n) + " rows of dim " +
                     std::to_string(d) + " (need 1 <= k <= min(n-1, dim))");
  }
  ensure_finite(x, "pca_fit input");

  PcaModel model;
  model.mean = col_reduce(x, Reduce::Mean);
  Matrix centered = x;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < d; ++j) centered(i, j) -= model.mean(0, j);

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
      c(centered.data(), static_cast<Eigen::Index>(n),
        static_cast<Eigen::Index>(d));
  Eigen::MatrixXd cov =
      (c.transpose() * c) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) {
    throw NumericError("pca_fit: eigendecomposition failed to converge");
  }
  // SelfAdjointEigenSolver returns eigenvalues in increasing order.
  const auto& evals = solver.eigenvalues();
  const auto& evecs = solver.eigenvectors();

  const double top = std::abs(evals(static_cast<Eigen::Index>(d) - 1));
  if (!(top > 0.0)) {
    throw ValueError("pca_fit: data has zero variance in every direction");
  }

  model.components = Matrix(n_components, d);
  model.explained_variance.resize(n_components);
  for (size_t k = 0; k < n_components; ++k) {
    const Eigen::Index col = static_cast<Eigen::Index>(d - 1 - k);
    model.explained_variance[k] = evals(col);
    size_t arg = 0;
    double best = 0.0;
    for (size_t j = 0; j < d; ++j) {
      const double a = std::abs(evecs(static_cast<Eigen::Index>(j), col));
      if (a > best) {
        best = a;
        arg = j;
      }
    }
    const double sign =
        evecs(static_cast<Eigen::Index>(arg), col) < 0.0 ? -1.0 : 1.0;
    for (size_t j = 0; j < d; ++j) {
      model.components(k, j) =
          sign * evecs(static_cast<Eigen::Index>(j), col);
    }
  }
  ensure_finite(model.components, "pca components");
  return model;
}

/// Project rows into the principal subspace: (x - mean) C^T.
inline Matrix pca_transform(const PcaModel& model, const Matrix& x) {
  if (x.cols() != model.input_dim()) {
    throw ShapeError("pca_transform: input width " + std::to_string(x.cols()) +
                     " vs model dim " + std::to_string(model.input_dim()));
  }
  Matrix centered = x;
  for (size_t i = 0; i < x.rows(); ++i)
    for (size_t j = 0; j < x.cols(); ++j)
      centered(i, j) -= model.mean(0, j);
  return matmul(centered, transpose(model.components));
}

/// Map latents back to the input space: z C + mean.
inline Matrix pca_reconstruct(const PcaModel& model, const Matrix& z) {
  if (z.cols() != model.latent_dim()) {
    throw ShapeError("pca_reconstruct: latent width " +
                     std::to_string(z.cols()) + " vs model latent dim " +
                     std::to_string(model.latent_dim()));
  }
  Matrix x = matmul(z, model.components);
  for (size_t i = 0; i < x.rows(); ++i)
    for (size_t j = 0; j < x.cols(); ++j) x(i, j) += model.mean(0, j);
  return x;
}

/// Plain autoencoder baseline: the identical network and trainer with the
/// adversarial weight forced to zero, so the heads still train as probes but
/// contribute nothing to the encoder gradient.
inline TrainedModel train_plain_autoencoder(const Corpus& corpus,
                                            std::span<const size_t> rows,
                                            TrainConfig cfg) {
  cfg.alpha = 0.0;
  return train_privacy_model(corpus, rows, cfg);
}

} // namespace peec
