#pragma once

// Linear 3-D embedding for cluster inspection. Principal components of the
// mean-centered data stand in for a nonlinear embedding.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "kstone/error.hpp"
#include "kstone/features.hpp"
#include "kstone/learners/tree.hpp"

namespace kstone {

struct EmbeddingExport {
  std::size_t out_dim = 0;
  FeatureMatrix coords;                    // n x out_dim
  std::vector<double> explained_variance;  // ratio per component
  FeatureMatrix components;                // out_dim x d, unit rows (zero when padded)
  std::vector<double> mean;                // d
  std::size_t rank = 0;                    // components with nonzero variance, capped at out_dim
  bool rank_deficient = false;
  std::vector<ClassLabel> classes;         // filled by the FeatureVector overload
  std::vector<FeatureView> views;
};

// Eigenvalues at or below this fraction of the largest one count as zero.
inline constexpr double kPcaRankTolerance = 1e-10;

inline EmbeddingExport pca_project(const FeatureMatrix& x, std::size_t out_dim = 3) {
  if (out_dim == 0) fail(errc::kInvalidArgument, "out_dim must be >= 1");
  if (x.rows < out_dim + 1) {
    fail(errc::kInvalidArgument, "PCA needs at least " + std::to_string(out_dim + 1) + " samples");
  }
  if (x.cols < out_dim) fail(errc::kInvalidArgument, "dimensionality below out_dim");

  const auto n = static_cast<Eigen::Index>(x.rows);
  const auto d = static_cast<Eigen::Index>(x.cols);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> raw(x.data.data(), n, d);
  const Eigen::RowVectorXd mu = raw.colwise().mean();
  const Eigen::MatrixXd centered = raw.rowwise() - mu;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) fail(errc::kDegenerate, "eigen decomposition failed");

  const Eigen::VectorXd& evals = solver.eigenvalues();  // ascending
  const Eigen::MatrixXd& evecs = solver.eigenvectors();
  const double total = std::max(cov.trace(), 0.0);
  const double top = std::max(evals(d - 1), 0.0);
  const double cutoff = top * kPcaRankTolerance;

  EmbeddingExport e;
  e.out_dim = out_dim;
  e.coords = FeatureMatrix(x.rows, out_dim);
  e.components = FeatureMatrix(out_dim, x.cols);
  e.explained_variance.assign(out_dim, 0.0);
  e.mean.assign(mu.data(), mu.data() + d);
  for (std::size_t c = 0; c < out_dim; ++c) {
    const Eigen::Index col = d - 1 - static_cast<Eigen::Index>(c);
    const double lambda = evals(col);
    if (!(top > 0.0) || lambda <= cutoff) {
      e.rank_deficient = true;
      continue;
    }
    Eigen::VectorXd v = evecs.col(col);
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < d; ++j) {
      if (std::abs(v(j)) > std::abs(v(arg))) arg = j;
    }
    if (v(arg) < 0) v = -v;
    ++e.rank;
    e.explained_variance[c] = total > 0.0 ? std::clamp(lambda / total, 0.0, 1.0) : 0.0;
    for (Eigen::Index j = 0; j < d; ++j) e.components(c, static_cast<std::size_t>(j)) = v(j);
    const Eigen::VectorXd proj = centered * v;
    for (std::size_t i = 0; i < x.rows; ++i) e.coords(i, c) = proj(static_cast<Eigen::Index>(i));
  }
  return e;
}

inline EmbeddingExport pca_project(const std::vector<FeatureVector>& vectors, std::size_t out_dim = 3) {
  std::vector<std::vector<double>> rows;
  rows.reserve(vectors.size());
  for (const auto& v : vectors) rows.push_back(v.components);
  auto e = pca_project(FeatureMatrix::from_rows(rows), out_dim);
  for (const auto& v : vectors) {
    e.classes.push_back(v.cls);
    e.views.push_back(v.view);
  }
  return e;
}

// Maps embedded coordinates back into the input space.
inline std::vector<double> pca_reconstruct(const EmbeddingExport& e, std::size_t row) {
  std::vector<double> out = e.mean;
  for (std::size_t c = 0; c < e.out_dim; ++c) {
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += e.coords(row, c) * e.components(c, j);
  }
  return out;
}

}  // namespace kstone
