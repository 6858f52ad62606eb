#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "srcr/errors.hpp"
#include "srcr/hypergraph.hpp"
#include "srcr/mlp.hpp"
#include "srcr/rng.hpp"
#include "srcr/tensor.hpp"

namespace srcr {

constexpr std::uint64_t kHslInitSalt = 0x04;

// One propagation layer: smooth, project by theta, activate. The final layer
// keeps the identity activation so embeddings stay sign-unconstrained.
struct HgnnLayer {
  Tensor theta;  // in x out
  bool relu_act = false;
};

// X_tilde = sigma(S (X theta)); pass op = nullptr for the structure-free
// (pure MLP) variant.
inline Tensor hypergraph_conv(Graph& g, const LinearOperator* op, const HgnnLayer& layer,
                              const Tensor& x) {
  Tensor h = g.matmul(x, layer.theta);
  if (op) h = g.apply_symmetric(*op, h);
  return layer.relu_act ? g.relu(h) : h;
}

struct HslConfig {
  std::size_t d_in = 0;        // vertex dim, set from the data (d0)
  std::size_t d_z = 64;        // aligned embedding / anchor dim
  std::size_t conv_layers = 1;
  std::size_t hidden = 256;    // width of intermediate layers when conv_layers > 1
  std::size_t anchors = 64;    // memory bank size L
  double tau = 0.75;           // vertex blend between reconstruction and residual
  std::size_t k = 10;          // KNN edge size (k neighbors + self)
  std::size_t epochs = 120;
  double lr = 0.001;
};

struct HslModel {
  HslConfig cfg;
  std::vector<HgnnLayer> layers;
  Tensor anchors;  // L x d_z

  static HslModel init(const HslConfig& cfg, std::uint64_t seed) {
    if (cfg.d_in == 0 || cfg.d_z == 0) throw ConfigError("hsl: zero dimension in config");
    if (cfg.conv_layers == 0) throw ConfigError("hsl: need at least one conv layer");
    if (cfg.anchors == 0) throw ConfigError("hsl: need at least one anchor");
    if (cfg.tau < 0.0 || cfg.tau > 1.0)
      throw ConfigError("hsl: tau " + std::to_string(cfg.tau) + " outside [0,1]");
    HslModel model;
    model.cfg = cfg;
    Rng rng(mix_seed(seed, kHslInitSalt));
    // Unit-gain uniform init: var = 1/fan_in, so the conv preserves the scale
    // the standardized input arrives at and the memory temperature sees
    // unit-order distance spreads.
    auto make = [&rng](std::size_t in, std::size_t out) {
      const double bound = std::sqrt(3.0 / static_cast<double>(in));
      Mat t(in, out);
      for (double& x : t.v) x = rng.uniform(-bound, bound);
      return Tensor::param(std::move(t));
    };
    std::size_t in = cfg.d_in;
    for (std::size_t l = 0; l < cfg.conv_layers; ++l) {
      const bool last = l + 1 == cfg.conv_layers;
      const std::size_t out = last ? cfg.d_z : cfg.hidden;
      model.layers.push_back({make(in, out), !last});
      in = out;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.d_z));
    Mat a(cfg.anchors, cfg.d_z);
    for (double& x : a.v) x = rng.uniform(-bound, bound);
    model.anchors = Tensor::param(std::move(a));
    return model;
  }

  std::vector<Tensor> params() const {
    std::vector<Tensor> ps;
    for (const HgnnLayer& l : layers) ps.push_back(l.theta);
    ps.push_back(anchors);
    return ps;
  }
};

// Activation over anchors: scaled negative squared distance, softmax per row.
inline Tensor memory_scores(Graph& g, const Tensor& anchors, const Tensor& vtilde) {
  if (vtilde.cols() != anchors.cols())
    throw DimensionError("memory_scores: embedding dim " + std::to_string(vtilde.cols()) +
                         " vs anchor dim " + std::to_string(anchors.cols()));
  const double inv_scale = -1.0 / std::sqrt(static_cast<double>(anchors.cols()));
  Tensor s = g.scale(g.pairwise_sqdist(vtilde, anchors), inv_scale);
  return g.softmax_rows(s);
}

// z = s_hat A: every row is a convex combination of anchors.
inline Tensor memory_rebuild(Graph& g, const Tensor& anchors, const Tensor& shat) {
  return g.matmul(shat, anchors);
}

// Batch-averaged Euclidean distance between the structure-smoothed embedding
// and its memory rebuild.
inline Tensor loss_mr(Graph& g, const Tensor& vtilde, const Tensor& z) {
  return g.mean_all(g.l2norm_rows(g.sub(vtilde, z)));
}

// Forward pass from pre-smoothed layer-0 input to the aligned embedding.
// x0 must already be S*V (or V itself when op is null): V is constant during
// training, so its smoothing is hoisted out of the epoch loop by the caller.
struct HslForward {
  Tensor vtilde;
  Tensor shat;
  Tensor z;
};

inline HslForward hsl_forward(Graph& g, const HslModel& model, const Tensor& x0,
                              const LinearOperator* op) {
  Tensor h = g.matmul(x0, model.layers[0].theta);
  if (model.layers[0].relu_act) h = g.relu(h);
  for (std::size_t l = 1; l < model.layers.size(); ++l) h = hypergraph_conv(g, op, model.layers[l], h);
  HslForward f;
  f.vtilde = h;
  f.shat = memory_scores(g, model.anchors, h);
  f.z = memory_rebuild(g, model.anchors, f.shat);
  return f;
}

// Column z-score to a target spread, applied to the layer-0 input. The vertex
// matrix inherits whatever scale the reconstruction stage settled on, and
// smoothing contracts it further; the memory scores divide squared distances
// by sqrt(d_z) only, so a small input scale flattens the anchor softmax into
// uniform and the rebuild collapses to the anchor mean, while a large one
// hardens it into nearest-anchor snapping. Standardizing the learned stage's
// input pins the score spread regardless of upstream scale.
inline Mat standardize_columns(const Mat& x, double sd_target = 1.0) {
  Mat out = x;
  if (x.rows == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(x.rows);
  for (std::size_t j = 0; j < x.cols; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) mean += x.at(i, j);
    mean *= inv_n;
    double var = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
      const double c = x.at(i, j) - mean;
      var += c * c;
    }
    const double sd = std::sqrt(var * inv_n);
    const double scale = sd > 1e-12 ? sd_target / sd : 1.0;
    for (std::size_t i = 0; i < x.rows; ++i) out.at(i, j) = (x.at(i, j) - mean) * scale;
  }
  return out;
}

// Remove each modality block's mean row in place. Precomputed per-modality
// features carry backbone-specific constant components that can dwarf the
// semantic variation; they are constant within a block, so centering deletes
// them exactly, using only the block structure, never a label.
inline void center_modalities(Mat& x, std::size_t m, std::size_t n) {
  if (x.rows != m * n) throw DimensionError("center_modalities: rows do not match M*N");
  std::vector<double> mean(x.cols);
  for (std::size_t r = 0; r < m; ++r) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = x.row(vertex_row(r, i, n));
      for (std::size_t j = 0; j < x.cols; ++j) mean[j] += row[j];
    }
    for (double& v : mean) v /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      double* row = x.row(vertex_row(r, i, n));
      for (std::size_t j = 0; j < x.cols; ++j) row[j] -= mean[j];
    }
  }
}

#ifndef SRCR_HSL_INPUT_SD
#define SRCR_HSL_INPUT_SD 1.0
#endif
constexpr double kHslInputSd = SRCR_HSL_INPUT_SD;

// Layer-0 input: structural pre-smoothing (V is constant during training, so
// S*V is hoisted out of the epoch loop), per-modality centering, then the
// column z-score. Smoothing weights rows by vertex degree, so it does not
// preserve an existing centering; the block means are removed again after it.
inline Mat prepare_hsl_input(const Mat& vertices, const LinearOperator* op, std::size_t m,
                             std::size_t n) {
  Mat x = op ? apply_operator(*op, vertices) : vertices;
  center_modalities(x, m, n);
  return standardize_columns(x, kHslInputSd);
}

// Move the anchor bank onto the data before the first step: evenly spaced
// rows of the initial embedding. Anchors drawn blind sit tiny and
// near-orthogonal to the embedding, so every anchor is almost equidistant
// from every row, the softmax is uniform, and the rebuild is stuck at the
// anchor mean; seeding from the embedding itself gives the scores unit-order
// spread from the start.
inline void seed_anchors(HslModel& model, const Tensor& x0, const LinearOperator* op) {
  Graph g(false);
  Tensor h = g.matmul(x0, model.layers[0].theta);
  if (model.layers[0].relu_act) h = g.relu(h);
  for (std::size_t l = 1; l < model.layers.size(); ++l)
    h = hypergraph_conv(g, op, model.layers[l], h);
  const Mat v = h.to_mat();
  std::vector<double>& a = model.anchors.value_mut();
  const std::size_t l_count = model.anchors.rows(), d = model.anchors.cols();
  for (std::size_t j = 0; j < l_count; ++j) {
    const double* src = v.row(j * v.rows / l_count);
    for (std::size_t q = 0; q < d; ++q) a[j * d + q] = src[q];
  }
}

// Joint SGD over conv weights and anchors on the memory reconstruction loss.
// `input` is the prepared layer-0 matrix (see prepare_hsl_input); `op` only
// feeds the deeper conv layers. Anchor seeding counts as part of training, so
// zero epochs leaves the model untouched. Returns the loss at the start of
// each epoch.
inline std::vector<double> train_hsl(HslModel& model, const Mat& input, const LinearOperator* op,
                                     std::size_t epochs, double lr) {
  if (input.cols != model.cfg.d_in)
    throw DimensionError("train_hsl: input dim " + std::to_string(input.cols) +
                         " does not match model d_in " + std::to_string(model.cfg.d_in));
  Tensor x0 = Tensor::constant(input);
  if (epochs > 0) seed_anchors(model, x0, op);
  SgdOptimizer opt(lr, model.params());
  std::vector<double> log;
  log.reserve(epochs);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    Graph g;
    HslForward f = hsl_forward(g, model, x0, op);
    Tensor loss = loss_mr(g, f.vtilde, f.z);
    log.push_back(loss.scalar());
    g.backward(loss);
    opt.step();
  }
  return log;
}

// Frozen inference: rebuild nothing, record nothing, return the aligned
// embedding rows (one per prepared input row).
inline Mat hsl_embed(const HslModel& model, const Mat& input, const LinearOperator* op) {
  Graph g(false);
  HslForward f = hsl_forward(g, model, Tensor::constant(input), op);
  return f.z.to_mat();
}

}  // namespace srcr
