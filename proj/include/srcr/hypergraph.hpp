#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "srcr/errors.hpp"
#include "srcr/mat.hpp"
#include "srcr/tensor.hpp"

namespace srcr {

// Vertex construction: one vertex per (object, modality), modality-major, so
// vertex (r, i) sits at row r*N + i. Each row blends the reconstructed
// feature with the residual.
inline std::size_t vertex_row(std::size_t modality, std::size_t object, std::size_t n_objects) {
  return modality * n_objects + object;
}

inline Mat build_vertices(const std::vector<Mat>& fhat, const std::vector<Mat>& delta,
                          double tau) {
  if (tau < 0.0 || tau > 1.0)
    throw ConfigError("build_vertices: tau " + std::to_string(tau) + " outside [0,1]");
  if (fhat.empty() || fhat.size() != delta.size())
    throw DimensionError("build_vertices: block count mismatch");
  const std::size_t m = fhat.size();
  const std::size_t n = fhat[0].rows;
  const std::size_t d = fhat[0].cols;
  Mat v(m * n, d);
  for (std::size_t r = 0; r < m; ++r) {
    if (fhat[r].rows != n || fhat[r].cols != d || delta[r].rows != n || delta[r].cols != d)
      throw DimensionError("build_vertices: modality " + std::to_string(r) + " shape mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      const double* fh = fhat[r].row(i);
      const double* dl = delta[r].row(i);
      double* out = v.row(vertex_row(r, i, n));
      for (std::size_t t = 0; t < d; ++t) out[t] = tau * fh[t] + (1.0 - tau) * dl[t];
    }
  }
  return v;
}

// The k nearest rows to row q under Euclidean distance, excluding q itself.
// Ties are broken toward the lower row index, so the result is unique.
inline std::vector<std::size_t> knn_indices(const Mat& v, std::size_t q, std::size_t k) {
  if (k >= v.rows)
    throw StructureError("knn: k=" + std::to_string(k) + " with only " + std::to_string(v.rows) +
                         " vertices");
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(v.rows - 1);
  for (std::size_t i = 0; i < v.rows; ++i) {
    if (i == q) continue;
    dist.emplace_back(sq_dist(v.row(q), v.row(i), v.cols), i);
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = dist[i].second;
  return out;
}

enum class EdgeTag { modality, object, knn };

struct HyperedgeConfig {
  bool modality_edges = true;  // one edge per modality, spanning all its vertices
  bool object_edges = true;    // one edge per object, spanning its M views
  bool knn_edges = true;       // one edge per vertex: itself plus k nearest
  std::size_t k = 10;
};

// Incidence structure as member lists: edge j holds the sorted vertex rows it
// touches. Weights default to 1 and stay there in this artifact.
struct Hypergraph {
  std::size_t n_vertices = 0;
  std::vector<std::vector<std::size_t>> edges;
  std::vector<EdgeTag> tags;
  std::vector<double> weights;

  std::size_t n_edges() const { return edges.size(); }
};

inline Hypergraph build_hypergraph(const Mat& v, std::size_t m, std::size_t n,
                                   const HyperedgeConfig& cfg = {}) {
  if (v.rows != m * n)
    throw DimensionError("build_hypergraph: " + std::to_string(v.rows) + " vertices, expected " +
                         std::to_string(m) + "*" + std::to_string(n));
  Hypergraph g;
  g.n_vertices = v.rows;
  if (cfg.modality_edges) {
    for (std::size_t r = 0; r < m; ++r) {
      std::vector<std::size_t> e(n);
      for (std::size_t i = 0; i < n; ++i) e[i] = vertex_row(r, i, n);
      g.edges.push_back(std::move(e));
      g.tags.push_back(EdgeTag::modality);
    }
  }
  if (cfg.object_edges) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::size_t> e(m);
      for (std::size_t r = 0; r < m; ++r) e[r] = vertex_row(r, i, n);
      g.edges.push_back(std::move(e));
      g.tags.push_back(EdgeTag::object);
    }
  }
  if (cfg.knn_edges) {
    if (cfg.k < 1 || cfg.k >= v.rows)
      throw StructureError("build_hypergraph: knn k=" + std::to_string(cfg.k) +
                           " out of range for " + std::to_string(v.rows) + " vertices");
    for (std::size_t q = 0; q < v.rows; ++q) {
      std::vector<std::size_t> e = knn_indices(v, q, cfg.k);
      e.push_back(q);
      std::sort(e.begin(), e.end());
      g.edges.push_back(std::move(e));
      g.tags.push_back(EdgeTag::knn);
    }
  }
  g.weights.assign(g.edges.size(), 1.0);
  return g;
}

// Degree-normalized hypergraph propagation
//   S = D_v^{-1/2} H W D_e^{-1} H^T D_v^{-1/2}
// with D_v the weighted vertex degrees and D_e the edge sizes. Diagonal
// scalings on both sides of the symmetric H W D_e^{-1} H^T core keep S
// symmetric, which is what LinearOperator requires.
class HypergraphSmoother final : public LinearOperator {
 public:
  explicit HypergraphSmoother(const Hypergraph& g)
      : n_(g.n_vertices), edges_(g.edges), edge_scale_(g.n_edges()), inv_sqrt_dv_(g.n_vertices) {
    std::vector<double> dv(n_, 0.0);
    for (std::size_t j = 0; j < edges_.size(); ++j) {
      if (edges_[j].empty()) throw StructureError("smoother: empty hyperedge");
      edge_scale_[j] = g.weights[j] / static_cast<double>(edges_[j].size());
      for (std::size_t u : edges_[j]) {
        if (u >= n_) throw StructureError("smoother: vertex index out of range");
        dv[u] += g.weights[j];
      }
    }
    for (std::size_t u = 0; u < n_; ++u) {
      if (dv[u] <= 0.0)
        throw StructureError("smoother: vertex " + std::to_string(u) +
                             " has zero degree, cannot normalize");
      inv_sqrt_dv_[u] = 1.0 / std::sqrt(dv[u]);
    }
  }

  std::size_t dim() const override { return n_; }

  void apply(const double* x, double* y, std::size_t cols) const override {
    std::vector<double> acc(cols);
    for (std::size_t j = 0; j < edges_.size(); ++j) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t u : edges_[j]) {
        const double s = inv_sqrt_dv_[u];
        const double* xu = x + u * cols;
        for (std::size_t c = 0; c < cols; ++c) acc[c] += s * xu[c];
      }
      for (std::size_t u : edges_[j]) {
        const double s = edge_scale_[j] * inv_sqrt_dv_[u];
        double* yu = y + u * cols;
        for (std::size_t c = 0; c < cols; ++c) yu[c] += s * acc[c];
      }
    }
  }

 private:
  std::size_t n_;
  std::vector<std::vector<std::size_t>> edges_;
  std::vector<double> edge_scale_;
  std::vector<double> inv_sqrt_dv_;
};

// Plain-graph counterpart used by the graph-convolution variant: symmetrized
// KNN adjacency with self-loops, S = D^{-1/2} (A + I) D^{-1/2}.
class GcnSmoother final : public LinearOperator {
 public:
  GcnSmoother(const Mat& v, std::size_t k) : n_(v.rows), nbrs_(v.rows), inv_sqrt_deg_(v.rows) {
    if (k < 1 || k >= v.rows)
      throw StructureError("gcn: knn k=" + std::to_string(k) + " out of range for " +
                           std::to_string(v.rows) + " vertices");
    for (std::size_t q = 0; q < n_; ++q) {
      for (std::size_t w : knn_indices(v, q, k)) {
        nbrs_[q].push_back(w);
        nbrs_[w].push_back(q);
      }
    }
    for (std::size_t q = 0; q < n_; ++q) {
      nbrs_[q].push_back(q);  // self-loop
      std::sort(nbrs_[q].begin(), nbrs_[q].end());
      nbrs_[q].erase(std::unique(nbrs_[q].begin(), nbrs_[q].end()), nbrs_[q].end());
      inv_sqrt_deg_[q] = 1.0 / std::sqrt(static_cast<double>(nbrs_[q].size()));
    }
  }

  std::size_t dim() const override { return n_; }

  void apply(const double* x, double* y, std::size_t cols) const override {
    for (std::size_t u = 0; u < n_; ++u) {
      double* yu = y + u * cols;
      for (std::size_t w : nbrs_[u]) {
        const double s = inv_sqrt_deg_[u] * inv_sqrt_deg_[w];
        const double* xw = x + w * cols;
        for (std::size_t c = 0; c < cols; ++c) yu[c] += s * xw[c];
      }
    }
  }

 private:
  std::size_t n_;
  std::vector<std::vector<std::size_t>> nbrs_;
  std::vector<double> inv_sqrt_deg_;
};

}  // namespace srcr
