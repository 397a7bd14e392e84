#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <Eigen/Core>

namespace gama::testing {

/// Cyclic Jacobi rotations on a symmetric matrix; eigenvalues, descending.
inline std::vector<double> jacobi_eigenvalues(Eigen::MatrixXd a, int sweeps = 100) {
  const Eigen::Index n = a.rows();
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    double off = 0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev(n);
  for (Eigen::Index i = 0; i < n; ++i) ev[i] = a(i, i);
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

/// Sample covariance (divisor N - 1) of the rows.
inline Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  return centered.transpose() * centered / static_cast<double>(x.rows() - 1);
}

/// Label sets built explicitly, then |Y ∩ Ŷ| / |Y ∪ Ŷ| averaged as a percentage.
inline double hamming_by_sets(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& truth, int c) {
  const std::size_t n = truth.size() / c;
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::set<int> y, yh, inter, uni;
    for (int k = 0; k < c; ++k) {
      if (truth[i * c + k]) y.insert(k);
      if (pred[i * c + k]) yh.insert(k);
    }
    std::set_intersection(y.begin(), y.end(), yh.begin(), yh.end(), std::inserter(inter, inter.begin()));
    std::set_union(y.begin(), y.end(), yh.begin(), yh.end(), std::inserter(uni, uni.begin()));
    total += uni.empty() ? 1.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size());
  }
  return 100.0 * total / static_cast<double>(n);
}

/// Median filter by sorting each clamped window; planes are [P,H,W] row-major.
inline std::vector<float> median_by_sort(const std::vector<float>& img, int planes, int h, int w, int window) {
  std::vector<float> out(img.size());
  const int r = window / 2;
  for (int p = 0; p < planes; ++p)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        std::vector<float> v;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            const int yy = std::clamp(y + dy, 0, h - 1), xx = std::clamp(x + dx, 0, w - 1);
            v.push_back(img[(p * h + yy) * w + xx]);
          }
        std::sort(v.begin(), v.end());
        out[(p * h + y) * w + x] = v[v.size() / 2];
      }
  return out;
}

}  // namespace gama::testing
