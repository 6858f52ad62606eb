// Command-line front end for the retrieval pipeline: dataset synthesis,
// open-set splitting, two-stage training, embedding, evaluation, the variant
// comparison harness, and the empirical risk report.
//
// Exit codes: 0 success, 2 usage/configuration error, 1 runtime failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "srcr/srcr.hpp"

namespace {

std::string read_file_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw srcr::Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw srcr::Error("cannot open " + path + " for writing");
  out << text;
}

// key=value manifest with a content hash of its own body, written next to
// binary artifacts that cannot carry a comment themselves.
void write_manifest(const std::string& path, const std::string& body) {
  write_text(path, "config_hash=" + srcr::hex64(srcr::fnv1a64(body)) + "\n" + body);
}

std::vector<std::size_t> pick_indices(const srcr::OpenSetSplit& split, const std::string& set,
                                      std::size_t n_objects) {
  if (set == "train") return split.train_indices;
  if (set == "test") return split.test_indices;
  if (set == "all") {
    std::vector<std::size_t> all(n_objects);
    for (std::size_t i = 0; i < n_objects; ++i) all[i] = i;
    return all;
  }
  throw srcr::ConfigError("unknown set '" + set + "', expected train, test, or all");
}

// Embeddings may cover exactly the evaluated set or the whole corpus (the
// transductive flow embeds everything at once); in the latter case select the
// evaluated objects out of the file.
srcr::FeatureSet select_objects(const srcr::FeatureSet& efs,
                                const std::vector<std::size_t>& indices, const std::string& set,
                                std::size_t corpus_objects) {
  if (efs.n_objects == indices.size()) return efs;
  if (efs.n_objects != corpus_objects)
    throw srcr::ContractError("embeddings hold " + std::to_string(efs.n_objects) +
                              " objects but the " + set + " set has " +
                              std::to_string(indices.size()) + " and the corpus " +
                              std::to_string(corpus_objects));
  srcr::FeatureSet out;
  out.n_objects = indices.size();
  out.n_modalities = efs.n_modalities;
  out.dim = efs.dim;
  out.modality_names = efs.modality_names;
  out.features.resize(efs.n_modalities);
  for (std::size_t r = 0; r < efs.n_modalities; ++r) {
    out.features[r].resize(indices.size() * efs.dim);
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const float* src = efs.feature(r, indices[i]);
      std::copy(src, src + efs.dim, out.features[r].begin() + i * efs.dim);
    }
  }
  return out;
}

// Modality-major stacking of an embeddings file back into one matrix.
srcr::Mat stack_blocks(const srcr::FeatureSet& fs) {
  srcr::Mat out(fs.n_modalities * fs.n_objects, fs.dim);
  for (std::size_t r = 0; r < fs.n_modalities; ++r) {
    const srcr::Mat block = fs.modality_f64(r);
    for (std::size_t i = 0; i < fs.n_objects; ++i) {
      const double* src = block.row(i);
      double* dst = out.row(srcr::vertex_row(r, i, fs.n_objects));
      for (std::size_t j = 0; j < fs.dim; ++j) dst[j] = src[j];
    }
  }
  return out;
}

std::string sanitize(const std::string& name) {
  std::string out;
  for (char c : name)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out.empty() ? std::string("mod") : out;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::size_t categories = 30;
  std::size_t per_category = 20;
  std::size_t modalities = 3;
  std::size_t dim = 64;
  std::size_t latent_dim = srcr::SyntheticConfig{}.latent_dim;
  double shift = 1.0;
  double jitter = srcr::SyntheticConfig{}.jitter;
  double noise = 0.05;
  double offset_scale = srcr::SyntheticConfig{}.offset_scale;
  std::uint64_t seed = 2022;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  srcr::SyntheticConfig cfg;
  cfg.categories = a.categories;
  cfg.per_category = a.per_category;
  cfg.modalities = a.modalities;
  cfg.dim = a.dim;
  cfg.latent_dim = a.latent_dim;
  cfg.modality_shift = a.shift;
  cfg.jitter = a.jitter;
  cfg.noise = a.noise;
  cfg.offset_scale = a.offset_scale;
  cfg.seed = a.seed;
  srcr::SyntheticData data = srcr::generate_synthetic(cfg);
  srcr::write_ocmf(data.features, a.out);

  std::ostringstream body;
  body << "command=synth\ncategories=" << a.categories << "\nper_category=" << a.per_category
       << "\nmodalities=" << a.modalities << "\ndim=" << a.dim << "\nlatent_dim=" << a.latent_dim
       << "\nshift=" << srcr::fmt_double(a.shift) << "\njitter=" << srcr::fmt_double(a.jitter)
       << "\nnoise=" << srcr::fmt_double(a.noise)
       << "\noffset_scale=" << srcr::fmt_double(a.offset_scale) << "\nseed=" << a.seed << "\n";
  write_manifest(a.out + ".manifest", body.str());

  std::cout << "wrote " << a.out << ": " << data.features.n_objects << " objects, "
            << a.modalities << " modalities, dim " << a.dim << ", " << a.categories
            << " categories\n";
  return 0;
}

struct SplitArgs {
  std::string data;
  double unseen_fraction = 0.3;
  std::uint64_t seed = 2022;
  std::string out;
};

int cmd_split(const SplitArgs& a) {
  srcr::FeatureSet fs = srcr::read_ocmf(a.data);
  srcr::OpenSetSplit split = srcr::open_set_split(fs, a.unseen_fraction, a.seed);
  srcr::write_split(split, a.out);
  std::cout << "wrote " << a.out << ": " << split.seen_categories.size() << " seen / "
            << split.unseen_categories.size() << " unseen categories, "
            << split.train_indices.size() << " train / " << split.test_indices.size()
            << " test objects\n";
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string split;
  std::string out;
  std::string loss_log;  // defaults to out + ".loss.csv"
  std::string config_file;
  bool use_labels = false;
  srcr::PipelineConfig cfg;
  // set() keys of flags the user passed explicitly, applied over the file
  std::vector<std::pair<std::string, std::string>> overrides;
};

int cmd_train(TrainArgs& a) {
  srcr::PipelineConfig cfg;
  if (!a.config_file.empty()) cfg.apply_text(read_file_text(a.config_file));
  for (const auto& [key, value] : a.overrides) cfg.set(key, value);

  if (srcr::variant_uses_labels(cfg.variant) && !a.use_labels)
    throw srcr::ConfigError("variant " + srcr::to_string(cfg.variant) +
                            " consumes labels; pass --use-labels to opt in");
  if (a.use_labels && !srcr::variant_uses_labels(cfg.variant))
    throw srcr::ConfigError("--use-labels only applies to the category_center variant");

  srcr::OpenSetSplit split = srcr::read_split(a.split);
  srcr::TrainResult tr;
  if (a.use_labels) {
    srcr::FeatureSet fs = srcr::read_ocmf(a.data);
    tr = srcr::train_with_labels(srcr::subset_features(fs, split.train_indices),
                                 srcr::subset_labels(fs, split.train_indices), cfg);
  } else {
    // label block skipped at the byte level, not merely ignored
    srcr::FeatureSet fs = srcr::read_ocmf(a.data, srcr::OcmfRead::FeaturesOnly);
    tr = srcr::train_pipeline(srcr::subset_features(fs, split.train_indices), cfg);
  }

  srcr::save_model(a.out, tr.model);
  const std::string log_path = a.loss_log.empty() ? a.out + ".loss.csv" : a.loss_log;
  srcr::write_loss_csv(log_path, tr.rce_log, tr.hsl_log, tr.model.cfg.hash());

  std::cout << "wrote " << a.out << " (variant " << srcr::to_string(cfg.variant) << ")\n";
  if (!tr.rce_log.empty())
    std::cout << "embedding stage: loss " << srcr::fmt_double(tr.rce_log.front()) << " -> "
              << srcr::fmt_double(tr.rce_log.back()) << " over " << tr.rce_log.size()
              << " epochs\n";
  if (!tr.hsl_log.empty())
    std::cout << "structure stage: loss " << srcr::fmt_double(tr.hsl_log.front()) << " -> "
              << srcr::fmt_double(tr.hsl_log.back()) << " over " << tr.hsl_log.size()
              << " epochs\n";
  return 0;
}

struct EmbedArgs {
  std::string data;
  std::string split;
  std::string checkpoint;
  std::string out;
  std::string set = "test";
};

int cmd_embed(const EmbedArgs& a) {
  srcr::SrcrModel model = srcr::load_model(a.checkpoint);
  srcr::FeatureSet fs = srcr::read_ocmf(a.data, srcr::OcmfRead::FeaturesOnly);
  srcr::OpenSetSplit split = srcr::read_split(a.split);
  const std::vector<std::size_t> indices = pick_indices(split, a.set, fs.n_objects);
  if (indices.empty()) throw srcr::Error("selected set is empty");

  srcr::TrainingFeatures feats = srcr::subset_features(fs, indices);
  srcr::Mat z = srcr::embed_pipeline(model, feats);

  srcr::FeatureSet out;
  out.n_objects = feats.n_objects;
  out.n_modalities = feats.n_modalities;
  out.dim = z.cols;
  out.modality_names = fs.modality_names;
  out.features.resize(out.n_modalities);
  for (std::size_t r = 0; r < out.n_modalities; ++r) {
    out.features[r].resize(out.n_objects * out.dim);
    for (std::size_t i = 0; i < out.n_objects; ++i) {
      const double* src = z.row(srcr::vertex_row(r, i, out.n_objects));
      for (std::size_t j = 0; j < out.dim; ++j)
        out.features[r][i * out.dim + j] = static_cast<float>(src[j]);
    }
  }
  srcr::write_ocmf(out, a.out);

  std::ostringstream body;
  body << "command=embed\nmodel_config_hash=" << model.cfg.hash() << "\nset=" << a.set
       << "\nobjects=" << out.n_objects << "\ndim=" << out.dim << "\n";
  write_manifest(a.out + ".manifest", body.str());

  std::cout << "wrote " << a.out << ": " << out.n_objects << " objects x " << out.n_modalities
            << " modalities, dim " << out.dim << " (" << a.set << " set)\n";
  return 0;
}

struct EvalArgs {
  std::string embeddings;
  std::string data;
  std::string split;
  std::string out_dir;
  std::string set = "test";
  bool exclude_self = false;
  std::size_t pr_points = 11;
};

int cmd_eval(const EvalArgs& a) {
  srcr::FeatureSet all = srcr::read_ocmf(a.embeddings);
  srcr::FeatureSet fs = srcr::read_ocmf(a.data);
  srcr::OpenSetSplit split = srcr::read_split(a.split);
  const std::vector<std::size_t> indices = pick_indices(split, a.set, fs.n_objects);
  const srcr::FeatureSet efs = select_objects(all, indices, a.set, fs.n_objects);
  const std::vector<std::uint32_t> labels = srcr::subset_labels(fs, indices);
  const srcr::Mat embeds = stack_blocks(efs);

  std::ostringstream body;
  body << "command=eval\nembeddings=" << a.embeddings << "\ndata=" << a.data
       << "\nsplit=" << a.split << "\nset=" << a.set << "\nexclude_self=" << a.exclude_self
       << "\npr_points=" << a.pr_points << "\n";
  const std::string hash = srcr::hex64(srcr::fnv1a64(body.str()));

  std::vector<srcr::PairEval> pairs =
      srcr::evaluate_pairs(embeds, efs.n_objects, efs.n_modalities, labels, efs.modality_names,
                           a.exclude_self, a.pr_points);

  std::filesystem::create_directories(a.out_dir);
  std::vector<srcr::PairSummary> summary;
  for (const srcr::PairEval& p : pairs) {
    const std::string base = a.out_dir + "/" + sanitize(p.name);
    srcr::write_metrics_csv(base + "_metrics.csv", p.report, hash);
    srcr::write_pr_csv(base + "_pr.csv", p.report.pr, hash);
    srcr::write_pr_svg(base + "_pr.svg", p.report.pr, p.name, hash);
    summary.push_back({p.name, p.report});
  }
  srcr::write_summary_csv(a.out_dir + "/summary.csv", summary, hash);

  double avg_map = 0, avg_ndcg = 0, avg_anmrr = 0;
  std::cout << "pair,map,ndcg,anmrr\n";
  for (const srcr::PairEval& p : pairs) {
    std::cout << p.name << "," << srcr::fmt_double(p.report.map) << ","
              << srcr::fmt_double(p.report.ndcg) << "," << srcr::fmt_double(p.report.anmrr)
              << "\n";
    avg_map += p.report.map;
    avg_ndcg += p.report.ndcg;
    avg_anmrr += p.report.anmrr;
  }
  const double c = static_cast<double>(pairs.size());
  std::cout << "average," << srcr::fmt_double(avg_map / c) << ","
            << srcr::fmt_double(avg_ndcg / c) << "," << srcr::fmt_double(avg_anmrr / c) << "\n";
  std::cout << "wrote " << pairs.size() << " pair reports to " << a.out_dir << "\n";
  return 0;
}

struct AblateArgs {
  std::string data;
  std::string split;
  std::string out;
  std::string config_file;
  bool use_labels = false;
  bool exclude_self = false;
  std::vector<std::pair<std::string, std::string>> overrides;
};

int cmd_ablate(AblateArgs& a) {
  srcr::PipelineConfig cfg;
  if (!a.config_file.empty()) cfg.apply_text(read_file_text(a.config_file));
  for (const auto& [key, value] : a.overrides) cfg.set(key, value);

  srcr::FeatureSet fs = srcr::read_ocmf(a.data);
  srcr::OpenSetSplit split = srcr::read_split(a.split);

  std::vector<srcr::Variant> variants = {srcr::Variant::direct_center};
  if (a.use_labels) variants.push_back(srcr::Variant::category_center);
  variants.insert(variants.end(),
                  {srcr::Variant::hsl_no_modality_edges,
                   srcr::Variant::hsl_no_modality_object_edges, srcr::Variant::gcn_hsl,
                   srcr::Variant::mlp_hsl, srcr::Variant::full});

  std::vector<srcr::AblationRow> rows;
  std::cout << "variant,map,ndcg,anmrr\n";
  for (srcr::Variant v : variants) {
    srcr::AblationRow row = srcr::run_variant(v, fs, split, cfg, a.exclude_self);
    std::cout << row.variant << "," << srcr::fmt_double(row.map) << ","
              << srcr::fmt_double(row.ndcg) << "," << srcr::fmt_double(row.anmrr) << "\n";
    rows.push_back(std::move(row));
  }
  srcr::write_ablation_csv(a.out, rows, cfg.hash());
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

struct RiskArgs {
  std::string embeddings;
  std::string data;
  std::string split;
  std::string out;
  std::string set = "test";
};

int cmd_risk(const RiskArgs& a) {
  srcr::FeatureSet all = srcr::read_ocmf(a.embeddings);
  srcr::FeatureSet fs = srcr::read_ocmf(a.data);
  srcr::OpenSetSplit split = srcr::read_split(a.split);
  const std::vector<std::size_t> indices = pick_indices(split, a.set, fs.n_objects);
  const srcr::FeatureSet efs = select_objects(all, indices, a.set, fs.n_objects);
  const std::vector<std::uint32_t> labels = srcr::subset_labels(fs, indices);

  std::vector<srcr::Mat> blocks;
  for (std::size_t r = 0; r < efs.n_modalities; ++r) blocks.push_back(efs.modality_f64(r));

  std::ostringstream body;
  body << "command=risk\nembeddings=" << a.embeddings << "\ndata=" << a.data
       << "\nsplit=" << a.split << "\nset=" << a.set << "\n";
  const std::string hash = srcr::hex64(srcr::fnv1a64(body.str()));

  std::vector<std::pair<std::string, double>> rows;
  std::cout << "pair,risk\n";
  for (std::size_t q = 0; q < efs.n_modalities; ++q)
    for (std::size_t t = 0; t < efs.n_modalities; ++t) {
      if (q == t) continue;
      const double risk = srcr::empirical_risk(blocks[q], labels, blocks[t], labels);
      const std::string name = srcr::pair_name(efs.modality_names, q, t);
      std::cout << name << "," << srcr::fmt_double(risk) << "\n";
      rows.emplace_back(name, risk);
    }
  srcr::write_risk_csv(a.out, rows, hash);
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

// Config-override plumbing: every tunable is exposed as a flag; flags beat the
// config file, the file beats defaults.
void add_config_flags(CLI::App* sub, std::vector<std::pair<std::string, std::string>>* overrides,
                      bool with_variant) {
  auto add = [sub, overrides](const std::string& flag, const std::string& key,
                              const std::string& desc) {
    sub->add_option_function<std::string>(
           flag,
           [overrides, key](const std::string& v) { overrides->emplace_back(key, v); }, desc)
        ->option_text("VALUE");
  };
  if (with_variant)
    add("--variant", "variant",
        "model variant: full, direct_center, category_center, hsl_no_modality_edges, "
        "hsl_no_modality_object_edges, gcn_hsl, mlp_hsl");
  add("--alpha", "alpha", "trade-off between center pull and cross reconstruction");
  add("--tau", "tau", "vertex blend between reconstruction and residual");
  add("--k", "k", "KNN neighbor count for implicit-category edges");
  add("--anchors", "anchors", "memory bank size");
  add("--d-u", "d_u", "unified embedding dim");
  add("--d-z", "d_z", "aligned embedding dim");
  add("--hidden", "hidden", "hidden layer width");
  add("--conv-layers", "conv_layers", "propagation layer count");
  add("--epochs-rce", "epochs_rce", "embedding stage epochs");
  add("--lr-rce", "lr_rce", "embedding stage learning rate");
  add("--epochs-hsl", "epochs_hsl", "structure stage epochs");
  add("--lr-hsl", "lr_hsl", "structure stage learning rate");
  add("--outer-recon-weight", "outer_recon_weight",
      "optional outer reconstruction term weight (0 disables)");
  add("--seed", "seed", "random seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-supervised open-set cross-modal retrieval pipeline"};
  app.require_subcommand(1);
  int rc = 0;

  SynthArgs synth;
  CLI::App* s = app.add_subcommand("synth", "generate a synthetic multi-modal dataset");
  s->add_option("--categories", synth.categories, "number of categories");
  s->add_option("--per-category", synth.per_category, "objects per category");
  s->add_option("--modalities", synth.modalities, "number of modalities");
  s->add_option("--dim", synth.dim, "feature dimension");
  s->add_option("--latent-dim", synth.latent_dim, "shared latent subspace dimension");
  s->add_option("--shift", synth.shift, "per-modality affine distortion strength");
  s->add_option("--jitter", synth.jitter, "within-category latent spread");
  s->add_option("--noise", synth.noise, "observation noise sigma");
  s->add_option("--offset-scale", synth.offset_scale, "per-modality translation scale");
  s->add_option("--seed", synth.seed, "random seed");
  s->add_option("--out", synth.out, "output feature file")->required();
  s->callback([&] { rc = cmd_synth(synth); });

  SplitArgs split;
  CLI::App* p = app.add_subcommand("split", "hold out whole categories as an unseen test set");
  p->add_option("--data", split.data, "feature file")->required();
  p->add_option("--unseen-fraction", split.unseen_fraction, "fraction of categories held out");
  p->add_option("--seed", split.seed, "random seed");
  p->add_option("--out", split.out, "output split file")->required();
  p->callback([&] { rc = cmd_split(split); });

  TrainArgs train;
  CLI::App* t = app.add_subcommand("train", "train both pipeline stages on the seen split");
  t->add_option("--data", train.data, "feature file")->required();
  t->add_option("--split", train.split, "split file")->required();
  t->add_option("--out", train.out, "output checkpoint")->required();
  t->add_option("--loss-log", train.loss_log, "loss log CSV (default: <out>.loss.csv)");
  t->add_option("--config", train.config_file, "key=value config file (flags override it)");
  t->add_flag("--use-labels", train.use_labels,
              "opt in to the label-consuming category_center variant");
  add_config_flags(t, &train.overrides, true);
  t->callback([&] { rc = cmd_train(train); });

  EmbedArgs embed;
  CLI::App* e = app.add_subcommand("embed", "produce aligned embeddings from a checkpoint");
  e->add_option("--data", embed.data, "feature file")->required();
  e->add_option("--split", embed.split, "split file")->required();
  e->add_option("--checkpoint", embed.checkpoint, "trained checkpoint")->required();
  e->add_option("--out", embed.out, "output embeddings file")->required();
  e->add_option("--set", embed.set, "which objects to embed: train, test, or all");
  e->callback([&] { rc = cmd_embed(embed); });

  EvalArgs eval;
  CLI::App* v = app.add_subcommand("eval", "score retrieval across all cross-modal pairs");
  v->add_option("--embeddings", eval.embeddings, "embeddings file")->required();
  v->add_option("--data", eval.data, "feature file (labels)")->required();
  v->add_option("--split", eval.split, "split file")->required();
  v->add_option("--out-dir", eval.out_dir, "report directory")->required();
  v->add_option("--set", eval.set, "which objects the embeddings cover");
  v->add_flag("--exclude-self", eval.exclude_self, "drop the same-index target per query");
  v->add_option("--pr-points", eval.pr_points, "recall levels on the PR curve");
  v->callback([&] { rc = cmd_eval(eval); });

  AblateArgs ablate;
  CLI::App* b = app.add_subcommand("ablate", "retrain and compare model variants");
  b->add_option("--data", ablate.data, "feature file")->required();
  b->add_option("--split", ablate.split, "split file")->required();
  b->add_option("--out", ablate.out, "output comparison CSV")->required();
  b->add_option("--config", ablate.config_file, "key=value config file (flags override it)");
  b->add_flag("--use-labels", ablate.use_labels,
              "include the label-consuming category_center variant");
  b->add_flag("--exclude-self", ablate.exclude_self, "drop the same-index target per query");
  add_config_flags(b, &ablate.overrides, false);
  b->callback([&] { rc = cmd_ablate(ablate); });

  RiskArgs risk;
  CLI::App* r = app.add_subcommand("risk", "empirical open-set risk of an embedding");
  r->add_option("--embeddings", risk.embeddings, "embeddings file")->required();
  r->add_option("--data", risk.data, "feature file (labels)")->required();
  r->add_option("--split", risk.split, "split file")->required();
  r->add_option("--out", risk.out, "output CSV")->required();
  r->add_option("--set", risk.set, "which objects the embeddings cover");
  r->callback([&] { rc = cmd_risk(risk); });

  try {
    app.parse(argc, argv);
    return rc;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const srcr::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
