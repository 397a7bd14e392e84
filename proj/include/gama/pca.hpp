#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace gama {

struct PcaResult {
  Eigen::Vector2d eigenvalues;   // covariance eigenvalues, descending
  Eigen::MatrixXd components;    // [K,2], orthonormal columns
  Eigen::MatrixXd coordinates;   // [N,2], centered rows projected on components
  double total_variance = 0.0;   // trace of the covariance

  double explained(int i) const { return total_variance > 0 ? eigenvalues(i) / total_variance : 0.0; }
};

/// Top-2 principal components of the rows of `data` by power iteration with
/// deflation on the sample covariance. Needs at least 3 rows; identical rows
/// (zero variance) are an error.
PcaResult pca_top2(const Eigen::MatrixXd& data, int max_iterations = 20000, double tolerance = 1e-14);

/// Stacks clean and perturbed embeddings, runs PCA and writes "x,y,group"
/// rows (group is "clean" or "perturbed"), six decimals.
PcaResult pca_embed_export(const Eigen::MatrixXd& clean, const Eigen::MatrixXd& perturbed,
                           const std::filesystem::path& csv_path);

/// Distance between the clean and perturbed centroids in the PCA plane.
double centroid_separation(const PcaResult& pca, Eigen::Index clean_rows);

}  // namespace gama
