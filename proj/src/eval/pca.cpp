#include "gama/pca.hpp"

#include <cmath>
#include <cstdio>

#include "gama/error.hpp"
#include "gama/io.hpp"

namespace gama {

namespace {

/// Dominant eigenpair of a symmetric PSD matrix, kept orthogonal to `against`.
/// Products shorter than `floor` count as zero (the rest of the spectrum is
/// rounding noise left by deflation).
std::pair<double, Eigen::VectorXd> power_iterate(const Eigen::MatrixXd& m, const Eigen::MatrixXd& against,
                                                 int max_iterations, double tolerance, double floor) {
  const Eigen::Index k = m.rows();
  // Deterministic, generic start: not orthogonal to any axis-aligned eigenvector.
  Eigen::VectorXd v(k);
  for (Eigen::Index i = 0; i < k; ++i) v(i) = 1.0 + 0.1 * std::sin(1.0 + static_cast<double>(i));
  auto orthogonalize = [&](Eigen::VectorXd& x) {
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index c = 0; c < against.cols(); ++c) x -= against.col(c).dot(x) * against.col(c);
  };
  orthogonalize(v);
  v.normalize();
  for (int it = 0; it < max_iterations; ++it) {
    Eigen::VectorXd w = m * v;
    if (w.norm() <= floor) break;  // remaining spectrum is zero; any orthonormal v is an eigenvector
    orthogonalize(w);
    const double norm = w.norm();
    if (norm <= floor) break;
    w /= norm;
    const double change = std::min((w - v).norm(), (w + v).norm());
    v = w;
    if (change < tolerance) break;
  }
  return {v.dot(m * v), v};
}

}  // namespace

PcaResult pca_top2(const Eigen::MatrixXd& data, int max_iterations, double tolerance) {
  if (data.rows() < 3) throw Error(ErrorKind::data, "pca: need at least 3 rows");
  if (data.cols() < 2) throw Error(ErrorKind::data, "pca: need at least 2 dimensions");
  const Eigen::MatrixXd centered = data.rowwise() - data.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(data.rows() - 1);
  PcaResult r;
  r.total_variance = cov.trace();
  if (!(r.total_variance > 0.0)) throw Error(ErrorKind::data, "pca: rank < 2 (all rows identical)");

  r.components = Eigen::MatrixXd::Zero(data.cols(), 2);
  const Eigen::MatrixXd none(data.cols(), 0);
  const double floor = 1e-12 * r.total_variance;
  auto [l1, v1] = power_iterate(cov, none, max_iterations, tolerance, floor);
  r.components.col(0) = v1;
  Eigen::MatrixXd deflated = cov - l1 * v1 * v1.transpose();
  auto [l2, v2] = power_iterate(deflated, r.components.leftCols(1), max_iterations, tolerance, floor);
  r.components.col(1) = v2;
  r.eigenvalues << l1, v2.dot(cov * v2);
  r.coordinates = centered * r.components;
  return r;
}

PcaResult pca_embed_export(const Eigen::MatrixXd& clean, const Eigen::MatrixXd& perturbed,
                           const std::filesystem::path& csv_path) {
  if (clean.cols() != perturbed.cols()) throw Error(ErrorKind::compatibility, "pca: embedding widths differ");
  Eigen::MatrixXd all(clean.rows() + perturbed.rows(), clean.cols());
  all << clean, perturbed;
  auto r = pca_top2(all);
  std::string out = "x,y,group\n";
  char buf[96];
  for (Eigen::Index i = 0; i < all.rows(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%s\n", r.coordinates(i, 0), r.coordinates(i, 1),
                  i < clean.rows() ? "clean" : "perturbed");
    out += buf;
  }
  io::write_text_atomic(csv_path, out);
  return r;
}

double centroid_separation(const PcaResult& pca, Eigen::Index clean_rows) {
  const auto& c = pca.coordinates;
  if (clean_rows <= 0 || clean_rows >= c.rows()) throw Error("centroid_separation: both groups must be nonempty");
  const Eigen::RowVector2d a = c.topRows(clean_rows).colwise().mean();
  const Eigen::RowVector2d b = c.bottomRows(c.rows() - clean_rows).colwise().mean();
  return (a - b).norm();
}

}  // namespace gama
