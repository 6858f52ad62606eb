#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "srcr/checkpoint.hpp"
#include "srcr/dataset.hpp"
#include "srcr/errors.hpp"
#include "srcr/hsl.hpp"
#include "srcr/hypergraph.hpp"
#include "srcr/metrics.hpp"
#include "srcr/rce.hpp"
#include "srcr/report.hpp"
#include "srcr/rng.hpp"

namespace srcr {

constexpr std::uint64_t kBaselineSalt = 0x05;

// Model variants: the full two-stage pipeline plus the reduced forms used for
// component comparisons. The center variants replace the residual path; the
// hsl_* / gcn / mlp variants alter the structure stage.
enum class Variant {
  full,
  direct_center,                 // outer auto-encoder straight to the center, no residual, no structure stage
  category_center,               // like direct_center but pulls to per-category centers (consumes labels)
  hsl_no_modality_edges,         // structure stage without the modality edge family
  hsl_no_modality_object_edges,  // KNN edges only
  gcn_hsl,                       // pairwise KNN graph propagation instead of the hypergraph
  mlp_hsl,                       // no structure mixing at all
};

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::direct_center: return "direct_center";
    case Variant::category_center: return "category_center";
    case Variant::hsl_no_modality_edges: return "hsl_no_modality_edges";
    case Variant::hsl_no_modality_object_edges: return "hsl_no_modality_object_edges";
    case Variant::gcn_hsl: return "gcn_hsl";
    case Variant::mlp_hsl: return "mlp_hsl";
  }
  throw ContractError("to_string: bad variant value");
}

inline Variant variant_from_string(const std::string& s) {
  for (Variant v : {Variant::full, Variant::direct_center, Variant::category_center,
                    Variant::hsl_no_modality_edges, Variant::hsl_no_modality_object_edges,
                    Variant::gcn_hsl, Variant::mlp_hsl})
    if (to_string(v) == s) return v;
  throw ConfigError("unknown variant '" + s + "'");
}

inline bool variant_uses_hsl(Variant v) {
  return v != Variant::direct_center && v != Variant::category_center;
}

inline bool variant_uses_labels(Variant v) { return v == Variant::category_center; }

// Every knob of a run, serializable as key=value lines. d0 and modalities are
// data-derived and filled in at train time so a checkpoint can rebuild the
// model skeleton without the data file.
struct PipelineConfig {
  Variant variant = Variant::full;
  double alpha = 0.5;
  double tau = 0.75;
  std::size_t k = 10;
  std::size_t anchors = 64;
  std::size_t d_u = 64;
  std::size_t d_z = 64;
  std::size_t hidden = 256;
  std::size_t conv_layers = 1;
  std::size_t epochs_rce = 40;
  double lr_rce = 0.1;
  std::size_t epochs_hsl = 120;
  double lr_hsl = 0.001;
  double outer_recon_weight = 0.0;
  std::uint64_t seed = 2022;
  std::size_t d0 = 0;
  std::size_t modalities = 0;

  std::string serialize() const {
    std::ostringstream out;
    out << "variant=" << to_string(variant) << "\n";
    out << "alpha=" << fmt_double(alpha) << "\n";
    out << "tau=" << fmt_double(tau) << "\n";
    out << "k=" << k << "\n";
    out << "anchors=" << anchors << "\n";
    out << "d_u=" << d_u << "\n";
    out << "d_z=" << d_z << "\n";
    out << "hidden=" << hidden << "\n";
    out << "conv_layers=" << conv_layers << "\n";
    out << "epochs_rce=" << epochs_rce << "\n";
    out << "lr_rce=" << fmt_double(lr_rce) << "\n";
    out << "epochs_hsl=" << epochs_hsl << "\n";
    out << "lr_hsl=" << fmt_double(lr_hsl) << "\n";
    out << "outer_recon_weight=" << fmt_double(outer_recon_weight) << "\n";
    out << "seed=" << seed << "\n";
    out << "d0=" << d0 << "\n";
    out << "modalities=" << modalities << "\n";
    return out.str();
  }

  std::string hash() const { return hex64(fnv1a64(serialize())); }

  void set(const std::string& key, const std::string& value) {
    auto as_double = [&] {
      try {
        std::size_t used = 0;
        const double d = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("");
        return d;
      } catch (const std::exception&) {
        throw ConfigError("bad value '" + value + "' for " + key);
      }
    };
    auto as_size = [&] {
      try {
        std::size_t used = 0;
        const unsigned long long u = std::stoull(value, &used);
        if (used != value.size() || value[0] == '-') throw std::invalid_argument("");
        return static_cast<std::size_t>(u);
      } catch (const std::exception&) {
        throw ConfigError("bad value '" + value + "' for " + key);
      }
    };
    if (key == "variant") variant = variant_from_string(value);
    else if (key == "alpha") alpha = as_double();
    else if (key == "tau") tau = as_double();
    else if (key == "k") k = as_size();
    else if (key == "anchors") anchors = as_size();
    else if (key == "d_u") d_u = as_size();
    else if (key == "d_z") d_z = as_size();
    else if (key == "hidden") hidden = as_size();
    else if (key == "conv_layers") conv_layers = as_size();
    else if (key == "epochs_rce") epochs_rce = as_size();
    else if (key == "lr_rce") lr_rce = as_double();
    else if (key == "epochs_hsl") epochs_hsl = as_size();
    else if (key == "lr_hsl") lr_hsl = as_double();
    else if (key == "outer_recon_weight") outer_recon_weight = as_double();
    else if (key == "seed") seed = static_cast<std::uint64_t>(as_size());
    else if (key == "d0") d0 = as_size();
    else if (key == "modalities") modalities = as_size();
    else throw ConfigError("unknown config key '" + key + "'");
  }

  // Apply key=value lines on top of the current values. '#' starts a comment;
  // blank lines are fine.
  void apply_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("config line without '=': " + line);
      set(line.substr(0, eq), line.substr(eq + 1));
    }
  }

  static PipelineConfig parse(const std::string& text) {
    PipelineConfig cfg;
    cfg.apply_text(text);
    return cfg;
  }

  RceConfig rce_config() const {
    RceConfig c;
    c.d0 = d0;
    c.d_u = d_u;
    c.hidden = hidden;
    c.alpha = alpha;
    c.epochs = epochs_rce;
    c.lr = lr_rce;
    c.outer_recon_weight = outer_recon_weight;
    return c;
  }

  HslConfig hsl_config() const {
    HslConfig c;
    c.d_in = d0;
    c.d_z = d_z;
    c.conv_layers = conv_layers;
    c.hidden = hidden;
    c.anchors = anchors;
    c.tau = tau;
    c.k = k;
    c.epochs = epochs_hsl;
    c.lr = lr_hsl;
    return c;
  }
};

struct SrcrModel {
  PipelineConfig cfg;
  RceModel rce;
  HslModel hsl;  // only populated when the variant has a structure stage

  bool has_hsl() const { return !hsl.layers.empty(); }
};

inline std::vector<Tensor> model_parameters(const SrcrModel& m) {
  std::vector<Tensor> ps = m.rce.params();
  if (m.has_hsl())
    for (const Tensor& t : m.hsl.params()) ps.push_back(t);
  return ps;
}

inline HyperedgeConfig edge_config_for(Variant v, std::size_t k) {
  HyperedgeConfig c;
  c.k = k;
  if (v == Variant::hsl_no_modality_edges) c.modality_edges = false;
  if (v == Variant::hsl_no_modality_object_edges) {
    c.modality_edges = false;
    c.object_edges = false;
  }
  return c;
}

// The propagation operator a variant uses over the given vertex set; null for
// the structure-free variant.
inline std::unique_ptr<LinearOperator> make_structure(Variant v, const Mat& vertices,
                                                      std::size_t m, std::size_t n,
                                                      std::size_t k) {
  if (v == Variant::mlp_hsl) return nullptr;
  if (v == Variant::gcn_hsl) return std::make_unique<GcnSmoother>(vertices, k);
  Hypergraph g = build_hypergraph(vertices, m, n, edge_config_for(v, k));
  return std::make_unique<HypergraphSmoother>(g);
}

// Structure stage setup shared by training and embedding: the graph and the
// layer-0 input. Neighbor search runs on the centered vertex view, not the raw
// one: per-modality constant components dominate raw distances, which pins
// every KNN neighborhood inside its own modality block and leaves the
// implicit-category edges unable to group objects across modalities.
struct HslStage {
  std::unique_ptr<LinearOperator> op;
  Mat x0;
};

inline HslStage make_hsl_stage(Variant v, Mat vertices, std::size_t m, std::size_t n,
                               std::size_t k) {
  center_modalities(vertices, m, n);
  HslStage stage;
  stage.op = make_structure(v, vertices, m, n, k);
  stage.x0 = prepare_hsl_input(vertices, stage.op.get(), m, n);
  return stage;
}

// Frozen forward pass of the embedding stage, plain matrices out.
struct RceInference {
  std::vector<Mat> u_mod;
  std::vector<Mat> fhat;
  std::vector<Mat> delta;
};

inline RceInference rce_infer(const RceModel& model, const std::vector<Mat>& feats) {
  Graph g(false);
  std::vector<Tensor> ts;
  ts.reserve(feats.size());
  for (const Mat& f : feats) ts.push_back(Tensor::constant(f));
  RceOutputs o = rce_forward(g, model, ts);
  RceInference inf;
  for (std::size_t r = 0; r < feats.size(); ++r) {
    inf.u_mod.push_back(o.u_mod[r].to_mat());
    inf.fhat.push_back(o.fhat[r].to_mat());
    inf.delta.push_back(o.delta[r].to_mat());
  }
  return inf;
}

inline std::vector<Tensor> outer_encoder_parameters(const RceModel& model) {
  std::vector<Tensor> ps;
  for (const RceModality& m : model.mods)
    for (const Tensor& t : m.outer_enc.params()) ps.push_back(t);
  return ps;
}

struct TrainResult {
  SrcrModel model;
  std::vector<double> rce_log;
  std::vector<double> hsl_log;
};

namespace detail {

// Shared loop for the two center-only variants: encode each modality and
// pull its embedding toward a target center matrix built by `make_centers`.
// Deliberately nothing else: these baselines generate the center directly,
// with no residual structure holding the embedding apart, which is exactly
// the failure mode the residual design exists to avoid.
template <class MakeCenters>
std::vector<double> train_center_variant(RceModel& model, const std::vector<Tensor>& feats,
                                         std::size_t epochs, double lr,
                                         MakeCenters make_centers) {
  SgdOptimizer opt(lr, outer_encoder_parameters(model));
  std::vector<double> log;
  log.reserve(epochs);
  const double inv_m = 1.0 / static_cast<double>(feats.size());
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    Graph g;
    std::vector<Tensor> u_mod;
    for (std::size_t r = 0; r < feats.size(); ++r)
      u_mod.push_back(model.mods[r].outer_enc.forward(g, feats[r]));
    Tensor targets = make_centers(g, u_mod);  // n x d_u rows to pull toward
    Tensor acc;
    for (std::size_t r = 0; r < feats.size(); ++r) {
      Tensor t = g.mean_all(g.l2norm_rows(g.sub(u_mod[r], targets)));
      acc = acc.valid() ? g.add(acc, t) : t;
    }
    Tensor loss = g.scale(acc, inv_m);
    log.push_back(loss.scalar());
    g.backward(loss);
    opt.step();
  }
  return log;
}

}  // namespace detail

// Train the standard (label-free) variants. Center targets for
// direct_center are the per-object modality means; every other variant runs
// the two-stage residual + structure pipeline.
inline TrainResult train_pipeline(const TrainingFeatures& data, PipelineConfig cfg) {
  if (variant_uses_labels(cfg.variant))
    throw ContractError("train_pipeline: variant " + to_string(cfg.variant) +
                        " consumes labels; use train_with_labels");
  cfg.d0 = data.dim;
  cfg.modalities = data.n_modalities;

  TrainResult res;
  res.model.cfg = cfg;
  res.model.rce = RceModel::init(cfg.modalities, cfg.rce_config(), cfg.seed);

  if (cfg.variant == Variant::direct_center) {
    std::vector<Tensor> feats;
    for (const Mat& f : data.feats) feats.push_back(Tensor::constant(f));
    res.rce_log = detail::train_center_variant(
        res.model.rce, feats, cfg.epochs_rce, cfg.lr_rce,
        [](Graph& g, const std::vector<Tensor>& u_mod) { return aggregate_center(g, u_mod); });
    return res;
  }

  res.rce_log = train_rce(res.model.rce, data, cfg.epochs_rce, cfg.lr_rce);

  RceInference inf = rce_infer(res.model.rce, data.feats);
  HslStage stage = make_hsl_stage(cfg.variant, build_vertices(inf.fhat, inf.delta, cfg.tau),
                                  cfg.modalities, data.n_objects, cfg.k);
  res.model.hsl = HslModel::init(cfg.hsl_config(), cfg.seed);
  res.hsl_log = train_hsl(res.model.hsl, stage.x0, stage.op.get(), cfg.epochs_hsl, cfg.lr_hsl);
  return res;
}

// The explicitly label-consuming variant. Lives apart from train_pipeline so
// the label dependence is visible in the call signature, not buried in a flag.
inline TrainResult train_with_labels(const TrainingFeatures& data,
                                     const std::vector<std::uint32_t>& labels,
                                     PipelineConfig cfg) {
  if (cfg.variant != Variant::category_center)
    throw ContractError("train_with_labels: only the category_center variant consumes labels");
  if (labels.size() != data.n_objects)
    throw DimensionError("train_with_labels: label count mismatch");
  cfg.d0 = data.dim;
  cfg.modalities = data.n_modalities;

  // Category averaging as constant matrices: centers = P u (per modality,
  // then averaged over modalities), targets = E centers. Both classifiers of
  // label structure, both differentiable through u.
  std::vector<std::uint32_t> cats(labels);
  std::sort(cats.begin(), cats.end());
  cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
  const std::size_t y = cats.size();
  const std::size_t n = data.n_objects;
  std::vector<std::size_t> cat_of(n);
  std::vector<double> count(y, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    cat_of[i] = static_cast<std::size_t>(
        std::lower_bound(cats.begin(), cats.end(), labels[i]) - cats.begin());
    count[cat_of[i]] += 1.0;
  }
  Mat p(y, n), e(n, y);
  for (std::size_t i = 0; i < n; ++i) {
    p.at(cat_of[i], i) = 1.0 / count[cat_of[i]];
    e.at(i, cat_of[i]) = 1.0;
  }
  Tensor pt = Tensor::constant(std::move(p));
  Tensor et = Tensor::constant(std::move(e));

  TrainResult res;
  res.model.cfg = cfg;
  res.model.rce = RceModel::init(cfg.modalities, cfg.rce_config(), cfg.seed);
  std::vector<Tensor> feats;
  for (const Mat& f : data.feats) feats.push_back(Tensor::constant(f));
  res.rce_log = detail::train_center_variant(
      res.model.rce, feats, cfg.epochs_rce, cfg.lr_rce,
      [&pt, &et](Graph& g, const std::vector<Tensor>& u_mod) {
        Tensor acc;
        for (const Tensor& u : u_mod) {
          Tensor c = g.matmul(pt, u);
          acc = acc.valid() ? g.add(acc, c) : c;
        }
        acc = g.scale(acc, 1.0 / static_cast<double>(u_mod.size()));
        return g.matmul(et, acc);
      });
  return res;
}

// Aligned embeddings for an evaluation set: M*N rows, modality-major, one row
// per (modality, object). Structure variants rebuild their graph over this
// set; center variants emit the outer embedding directly.
inline Mat embed_pipeline(const SrcrModel& model, const TrainingFeatures& eval_feats) {
  if (eval_feats.n_modalities != model.cfg.modalities)
    throw DimensionError("embed: data has " + std::to_string(eval_feats.n_modalities) +
                         " modalities, model expects " + std::to_string(model.cfg.modalities));
  if (eval_feats.dim != model.cfg.d0)
    throw DimensionError("embed: feature dim " + std::to_string(eval_feats.dim) +
                         " does not match model d0 " + std::to_string(model.cfg.d0));
  RceInference inf = rce_infer(model.rce, eval_feats.feats);
  const std::size_t m = eval_feats.n_modalities, n = eval_feats.n_objects;
  if (!variant_uses_hsl(model.cfg.variant)) {
    Mat out(m * n, model.cfg.d_u);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t i = 0; i < n; ++i) {
        const double* src = inf.u_mod[r].row(i);
        double* dst = out.row(vertex_row(r, i, n));
        for (std::size_t j = 0; j < model.cfg.d_u; ++j) dst[j] = src[j];
      }
    return out;
  }
  HslStage stage = make_hsl_stage(model.cfg.variant,
                                  build_vertices(inf.fhat, inf.delta, model.cfg.tau), m, n,
                                  model.cfg.k);
  return hsl_embed(model.hsl, stage.x0, stage.op.get());
}

inline void save_model(const std::string& path, const SrcrModel& model) {
  write_checkpoint(path, model.cfg.serialize(), model_parameters(model));
}

inline SrcrModel load_model(const std::string& path) {
  Checkpoint ck = read_checkpoint(path);
  SrcrModel model;
  model.cfg = PipelineConfig::parse(ck.config_text);
  if (model.cfg.d0 == 0 || model.cfg.modalities == 0)
    throw ParseError(0, "checkpoint config lacks data dimensions");
  model.rce = RceModel::init(model.cfg.modalities, model.cfg.rce_config(), model.cfg.seed);
  if (variant_uses_hsl(model.cfg.variant))
    model.hsl = HslModel::init(model.cfg.hsl_config(), model.cfg.seed);
  load_parameters(model_parameters(model), ck.tensors);
  return model;
}

// ---------------------------------------------------------------------------
// Evaluation plumbing shared by the eval/ablate/risk commands.

inline TrainingFeatures subset_features(const FeatureSet& fs,
                                        const std::vector<std::size_t>& indices) {
  TrainingFeatures t;
  t.n_objects = indices.size();
  t.n_modalities = fs.n_modalities;
  t.dim = fs.dim;
  t.modality_names = fs.modality_names;
  for (std::size_t r = 0; r < fs.n_modalities; ++r) {
    Mat m(indices.size(), fs.dim);
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] >= fs.n_objects)
        throw ContractError("subset: index " + std::to_string(indices[i]) + " out of range");
      const float* src = fs.feature(r, indices[i]);
      double* dst = m.row(i);
      for (std::size_t j = 0; j < fs.dim; ++j) dst[j] = static_cast<double>(src[j]);
    }
    t.feats.push_back(std::move(m));
  }
  return t;
}

inline std::vector<std::uint32_t> subset_labels(const FeatureSet& fs,
                                                const std::vector<std::size_t>& indices) {
  if (!fs.has_labels()) throw ContractError("subset_labels: feature set has no labels");
  std::vector<std::uint32_t> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(fs.labels[i]);
  return out;
}

struct PairEval {
  std::size_t query_modality = 0;
  std::size_t target_modality = 0;
  std::string name;
  MetricReport report;
};

inline std::string pair_name(const std::vector<std::string>& modality_names, std::size_t q,
                             std::size_t t) {
  auto nm = [&](std::size_t r) {
    return r < modality_names.size() && !modality_names[r].empty() ? modality_names[r]
                                                                   : "mod" + std::to_string(r);
  };
  return nm(q) + "2" + nm(t);
}

// Pull selected objects out of a modality-major embedding block, preserving
// the modality-major layout over the subset.
inline Mat select_embedding_rows(const Mat& embeds, std::size_t n_total, std::size_t n_modalities,
                                 const std::vector<std::size_t>& indices) {
  if (embeds.rows != n_total * n_modalities)
    throw DimensionError("select_embedding_rows: embedding rows do not match M*N");
  Mat out(n_modalities * indices.size(), embeds.cols);
  for (std::size_t r = 0; r < n_modalities; ++r)
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] >= n_total)
        throw ContractError("select_embedding_rows: index " + std::to_string(indices[i]) +
                            " out of range");
      const double* src = embeds.row(vertex_row(r, indices[i], n_total));
      double* dst = out.row(vertex_row(r, i, indices.size()));
      for (std::size_t j = 0; j < embeds.cols; ++j) dst[j] = src[j];
    }
  return out;
}

// All ordered cross-modal pairs over a modality-major embedding block.
inline std::vector<PairEval> evaluate_pairs(const Mat& embeds, std::size_t n_objects,
                                            std::size_t n_modalities,
                                            const std::vector<std::uint32_t>& labels,
                                            const std::vector<std::string>& modality_names,
                                            bool exclude_self = false,
                                            std::size_t pr_points = 11) {
  if (embeds.rows != n_objects * n_modalities)
    throw DimensionError("evaluate_pairs: embedding rows do not match M*N");
  if (labels.size() != n_objects) throw DimensionError("evaluate_pairs: label count mismatch");
  auto block = [&](std::size_t r) {
    Mat m(n_objects, embeds.cols);
    for (std::size_t i = 0; i < n_objects; ++i) {
      const double* src = embeds.row(vertex_row(r, i, n_objects));
      double* dst = m.row(i);
      for (std::size_t j = 0; j < embeds.cols; ++j) dst[j] = src[j];
    }
    return m;
  };
  std::vector<Mat> blocks;
  for (std::size_t r = 0; r < n_modalities; ++r) blocks.push_back(block(r));

  std::vector<PairEval> out;
  for (std::size_t q = 0; q < n_modalities; ++q)
    for (std::size_t t = 0; t < n_modalities; ++t) {
      if (q == t) continue;
      PairEval pe;
      pe.query_modality = q;
      pe.target_modality = t;
      pe.name = pair_name(modality_names, q, t);
      RankedRetrieval rr = rank(blocks[q], blocks[t], labels, labels, exclude_self);
      pe.report = evaluate(rr, pr_points);
      out.push_back(std::move(pe));
    }
  return out;
}

inline double average_map(const std::vector<PairEval>& pairs) {
  double s = 0.0;
  for (const PairEval& p : pairs) s += p.report.map;
  return s / static_cast<double>(pairs.size());
}

// mAP of uniformly random rankings with the same label structure: the floor
// any trained model must clear.
inline double random_ranking_map(std::size_t n_objects, std::size_t n_modalities,
                                 const std::vector<std::uint32_t>& labels, std::uint64_t seed,
                                 bool exclude_self = false) {
  Rng rng(mix_seed(seed, kBaselineSalt));
  const std::size_t n_pairs = n_modalities * (n_modalities - 1);
  double sum = 0.0;
  for (std::size_t pair = 0; pair < n_pairs; ++pair) {
    RankedRetrieval rr;
    rr.n_targets = n_objects;
    rr.order.resize(n_objects);
    rr.sims.resize(n_objects);
    rr.rel.resize(n_objects);
    rr.n_relevant.assign(n_objects, 0);
    for (std::size_t i = 0; i < n_objects; ++i) {
      std::vector<std::size_t> perm;
      for (std::size_t j = 0; j < n_objects; ++j)
        if (!(exclude_self && j == i)) perm.push_back(j);
      rng.shuffle(perm);
      rr.order[i] = perm;
      rr.sims[i].assign(perm.size(), 0.0);
      rr.rel[i].resize(perm.size());
      for (std::size_t p = 0; p < perm.size(); ++p) {
        const bool hit = labels[perm[p]] == labels[i];
        rr.rel[i][p] = hit ? 1 : 0;
        if (hit) ++rr.n_relevant[i];
      }
    }
    sum += mean_average_precision(rr);
  }
  return sum / static_cast<double>(n_pairs);
}

// Cosine retrieval straight on the input features, averaged over pairs: what
// retrieval achieves with no learning at all.
inline double raw_feature_map(const TrainingFeatures& feats,
                              const std::vector<std::uint32_t>& labels,
                              bool exclude_self = false) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t q = 0; q < feats.n_modalities; ++q)
    for (std::size_t t = 0; t < feats.n_modalities; ++t) {
      if (q == t) continue;
      RankedRetrieval rr = rank(feats.feats[q], feats.feats[t], labels, labels, exclude_self);
      sum += mean_average_precision(rr);
      ++count;
    }
  return sum / static_cast<double>(count);
}

// One ablation run: retrain the variant end to end on the train split, embed
// the whole corpus transductively, evaluate retrieval among the unseen-split
// objects, and average the three headline metrics over all ordered pairs.
inline AblationRow run_variant(Variant v, const FeatureSet& fs, const OpenSetSplit& split,
                               PipelineConfig cfg, bool exclude_self = false) {
  cfg.variant = v;
  TrainingFeatures train_feats = subset_features(fs, split.train_indices);
  TrainResult tr = variant_uses_labels(v)
                       ? train_with_labels(train_feats, subset_labels(fs, split.train_indices), cfg)
                       : train_pipeline(train_feats, cfg);
  Mat z_all = embed_pipeline(tr.model, strip_labels(fs));
  Mat z = select_embedding_rows(z_all, fs.n_objects, fs.n_modalities, split.test_indices);
  std::vector<PairEval> pairs =
      evaluate_pairs(z, split.test_indices.size(), fs.n_modalities,
                     subset_labels(fs, split.test_indices), fs.modality_names, exclude_self);
  AblationRow row;
  row.variant = to_string(v);
  double sn = 0, sa = 0;
  for (const PairEval& p : pairs) {
    row.map += p.report.map;
    sn += p.report.ndcg;
    sa += p.report.anmrr;
  }
  const double c = static_cast<double>(pairs.size());
  row.map /= c;
  row.ndcg = sn / c;
  row.anmrr = sa / c;
  return row;
}

}  // namespace srcr
