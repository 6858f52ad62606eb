#pragma once

#include <cstddef>
#include <cstdint>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "srcr/dataset.hpp"
#include "srcr/errors.hpp"
#include "srcr/mlp.hpp"
#include "srcr/rng.hpp"
#include "srcr/tensor.hpp"

namespace srcr {

constexpr std::uint64_t kRceInitSalt = 0x03;

struct RceConfig {
  std::size_t d0 = 0;      // input feature dim, set from the data
  std::size_t d_u = 64;    // unified embedding dim
  std::size_t hidden = 256;
  double alpha = 0.5;      // trade-off between center pull and cross reconstruction
  std::size_t epochs = 40;
  double lr = 0.1;
  // Optional reconstruction pull on the outer auto-encoder. The combined loss
  // does not include it by default; set a positive weight to add
  // mean ||f_hat - f||_2.
  double outer_recon_weight = 0.0;
};

// One modality's parameter group: outer auto-encoder into the unified space,
// inner auto-encoder producing the residual, and the learnable modality
// encoding added before the inner encoder.
struct RceModality {
  Mlp outer_enc;  // d0 -> d_u
  Mlp outer_dec;  // d_u -> d0
  Mlp inner_enc;  // d0 -> d0
  Mlp inner_dec;  // d0 -> d_u
  Tensor enc;     // 1 x d0
};

struct RceModel {
  RceConfig cfg;
  std::vector<RceModality> mods;

  std::size_t n_modalities() const { return mods.size(); }

  static RceModel init(std::size_t n_modalities, const RceConfig& cfg, std::uint64_t seed) {
    if (n_modalities == 0) throw ConfigError("rce: zero modalities");
    if (cfg.d0 == 0 || cfg.d_u == 0 || cfg.hidden == 0)
      throw ConfigError("rce: zero dimension in config");
    if (cfg.alpha < 0.0 || cfg.alpha > 1.0)
      throw ConfigError("rce: alpha " + std::to_string(cfg.alpha) + " outside [0,1]");
    RceModel model;
    model.cfg = cfg;
    Rng rng(mix_seed(seed, kRceInitSalt));
    const double enc_bound = 1.0 / std::sqrt(static_cast<double>(cfg.d0));
    model.mods.reserve(n_modalities);
    for (std::size_t r = 0; r < n_modalities; ++r) {
      RceModality m;
      m.outer_enc = Mlp::init(cfg.d0, cfg.hidden, cfg.d_u, rng);
      m.outer_dec = Mlp::init(cfg.d_u, cfg.hidden, cfg.d0, rng);
      m.inner_enc = Mlp::init(cfg.d0, cfg.hidden, cfg.d0, rng);
      m.inner_dec = Mlp::init(cfg.d0, cfg.hidden, cfg.d_u, rng);
      Mat e(1, cfg.d0);
      for (double& x : e.v) x = rng.uniform(-enc_bound, enc_bound);
      m.enc = Tensor::param(std::move(e));
      model.mods.push_back(std::move(m));
    }
    return model;
  }

  std::vector<Tensor> params() const {
    std::vector<Tensor> ps;
    for (const RceModality& m : mods) {
      for (const Tensor& t : m.outer_enc.params()) ps.push_back(t);
      for (const Tensor& t : m.outer_dec.params()) ps.push_back(t);
      for (const Tensor& t : m.inner_enc.params()) ps.push_back(t);
      for (const Tensor& t : m.inner_dec.params()) ps.push_back(t);
      ps.push_back(m.enc);
    }
    return ps;
  }
};

// Per-batch forward products, one tensor per modality plus the shared center.
struct RceOutputs {
  std::vector<Tensor> u_mod;   // u^r, n x d_u
  std::vector<Tensor> fhat;    // reconstructed features, n x d0
  std::vector<Tensor> delta;   // residuals, n x d0
  std::vector<Tensor> center;  // c^r, n x d_u
  Tensor u;                    // unified center, n x d_u
};

// u^r = outer encoder(f^r); f_hat^r = outer decoder(u^r).
inline std::pair<Tensor, Tensor> rce_outer_forward(Graph& g, const RceModality& m,
                                                   const Tensor& f) {
  Tensor u = m.outer_enc.forward(g, f);
  Tensor fhat = m.outer_dec.forward(g, u);
  return {u, fhat};
}

// delta^r = inner encoder(f_hat^r + e^r); c^r = inner decoder(f_hat^r + delta^r).
inline std::pair<Tensor, Tensor> rce_inner_forward(Graph& g, const RceModality& m,
                                                   const Tensor& fhat) {
  Tensor delta = m.inner_enc.forward(g, g.add_rowvec(fhat, m.enc));
  Tensor c = m.inner_dec.forward(g, g.add(fhat, delta));
  return {delta, c};
}

// Mean over modalities, the unified per-object center.
inline Tensor aggregate_center(Graph& g, const std::vector<Tensor>& u_mod) {
  if (u_mod.empty()) throw ContractError("aggregate_center: no modalities");
  Tensor acc = u_mod[0];
  for (std::size_t r = 1; r < u_mod.size(); ++r) acc = g.add(acc, u_mod[r]);
  return g.scale(acc, 1.0 / static_cast<double>(u_mod.size()));
}

inline RceOutputs rce_forward(Graph& g, const RceModel& model, const std::vector<Tensor>& feats) {
  if (feats.size() != model.n_modalities())
    throw DimensionError("rce_forward: " + std::to_string(feats.size()) + " feature blocks for " +
                         std::to_string(model.n_modalities()) + " modalities");
  RceOutputs o;
  for (std::size_t r = 0; r < feats.size(); ++r) {
    auto [u, fhat] = rce_outer_forward(g, model.mods[r], feats[r]);
    auto [delta, c] = rce_inner_forward(g, model.mods[r], fhat);
    o.u_mod.push_back(u);
    o.fhat.push_back(fhat);
    o.delta.push_back(delta);
    o.center.push_back(c);
  }
  o.u = aggregate_center(g, o.u_mod);
  return o;
}

// Center pull: (1/M) sum_r mean_i ( ||u^r_i - u_i|| + ||c^r_i - u_i|| ).
inline Tensor rce_loss_rc(Graph& g, const RceOutputs& o) {
  const std::size_t m = o.u_mod.size();
  Tensor acc;
  for (std::size_t r = 0; r < m; ++r) {
    Tensor t = g.add(g.mean_all(g.l2norm_rows(g.sub(o.u_mod[r], o.u))),
                     g.mean_all(g.l2norm_rows(g.sub(o.center[r], o.u))));
    acc = acc.valid() ? g.add(acc, t) : t;
  }
  return g.scale(acc, 1.0 / static_cast<double>(m));
}

// Decoder exchange: every other modality's inner decoder must reproduce c^k
// from modality k's re-encoded input. Vacuously 0 when M < 2.
inline Tensor rce_loss_cr(Graph& g, const RceModel& model, const RceOutputs& o) {
  const std::size_t m = o.u_mod.size();
  if (m < 2) return Tensor::constant(Mat(1, 1, 0.0));
  Tensor acc;
  for (std::size_t k = 0; k < m; ++k) {
    Tensor re = model.mods[k].inner_enc.forward(g, g.add(o.fhat[k], o.delta[k]));
    for (std::size_t l = 0; l < m; ++l) {
      if (l == k) continue;
      Tensor cross = model.mods[l].inner_dec.forward(g, re);
      Tensor t = g.mean_all(g.l2norm_rows(g.sub(cross, o.center[k])));
      acc = acc.valid() ? g.add(acc, t) : t;
    }
  }
  return g.scale(acc, 1.0 / static_cast<double>(m * (m - 1)));
}

inline Tensor rce_loss(Graph& g, const RceModel& model, const RceOutputs& o, double alpha,
                       const std::vector<Tensor>* feats = nullptr) {
  if (alpha < 0.0 || alpha > 1.0)
    throw ConfigError("rce_loss: alpha " + std::to_string(alpha) + " outside [0,1]");
  Tensor loss = g.add(g.scale(rce_loss_rc(g, o), alpha),
                      g.scale(rce_loss_cr(g, model, o), 1.0 - alpha));
  if (model.cfg.outer_recon_weight > 0.0) {
    if (!feats) throw ContractError("rce_loss: reconstruction term needs the input features");
    Tensor acc;
    for (std::size_t r = 0; r < o.fhat.size(); ++r) {
      Tensor t = g.mean_all(g.l2norm_rows(g.sub(o.fhat[r], (*feats)[r])));
      acc = acc.valid() ? g.add(acc, t) : t;
    }
    acc = g.scale(acc, model.cfg.outer_recon_weight / static_cast<double>(o.fhat.size()));
    loss = g.add(loss, acc);
  }
  return loss;
}

// Full-batch SGD on the combined loss. Returns the loss value at the start of
// each epoch (before that epoch's step).
inline std::vector<double> train_rce(RceModel& model, const TrainingFeatures& data,
                                     std::size_t epochs, double lr) {
  if (data.n_modalities != model.n_modalities())
    throw DimensionError("train_rce: data has " + std::to_string(data.n_modalities) +
                         " modalities, model " + std::to_string(model.n_modalities()));
  if (data.dim != model.cfg.d0)
    throw DimensionError("train_rce: feature dim " + std::to_string(data.dim) +
                         " does not match model d0 " + std::to_string(model.cfg.d0));
  if (model.n_modalities() < 2)
    std::cerr << "warning: single modality, cross-reconstruction term is vacuous\n";

  std::vector<Tensor> feats;
  feats.reserve(data.n_modalities);
  for (const Mat& f : data.feats) feats.push_back(Tensor::constant(f));

  SgdOptimizer opt(lr, model.params());
  std::vector<double> log;
  log.reserve(epochs);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    Graph g;
    RceOutputs o = rce_forward(g, model, feats);
    Tensor loss = rce_loss(g, model, o, model.cfg.alpha, &feats);
    log.push_back(loss.scalar());
    g.backward(loss);
    opt.step();
  }
  return log;
}

}  // namespace srcr
