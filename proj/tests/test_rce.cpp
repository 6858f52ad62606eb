#include <cmath>
#include <vector>

#include <catch2/catch_amalgamated.hpp>
#include <srcr/srcr.hpp>

#include "test_util.hpp"

using namespace srcr;

namespace {

RceConfig tiny_cfg() {
  RceConfig cfg;
  cfg.d0 = 3;
  cfg.d_u = 2;
  cfg.hidden = 4;
  return cfg;
}

// Plain-double MLP forward, sharing no code with the tensor graph.
Mat mlp_apply(const Mlp& m, const Mat& x) {
  const Mat w1 = m.w1.to_mat(), b1 = m.b1.to_mat(), w2 = m.w2.to_mat(), b2 = m.b2.to_mat();
  Mat h(x.rows, w1.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < w1.cols; ++j) {
      double s = b1.at(0, j);
      for (std::size_t k = 0; k < x.cols; ++k) s += x.at(i, k) * w1.at(k, j);
      h.at(i, j) = std::max(0.0, s);
    }
  Mat out(x.rows, w2.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < w2.cols; ++j) {
      double s = b2.at(0, j);
      for (std::size_t k = 0; k < h.cols; ++k) s += h.at(i, k) * w2.at(k, j);
      out.at(i, j) = s;
    }
  return out;
}

Mat mat_add(const Mat& a, const Mat& b) {
  Mat out = a;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.v[i];
  return out;
}

Mat add_row(const Mat& a, const Mat& row) {
  Mat out = a;
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) out.at(i, j) += row.at(0, j);
  return out;
}

double mean_row_dist(const Mat& a, const Mat& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) {
      const double t = a.at(i, j) - b.at(i, j);
      d += t * t;
    }
    s += std::sqrt(d);
  }
  return s / static_cast<double>(a.rows);
}

std::vector<Tensor> const_feats(Rng& rng, std::size_t m, std::size_t n, std::size_t d) {
  std::vector<Tensor> feats;
  for (std::size_t r = 0; r < m; ++r)
    feats.push_back(Tensor::constant(testutil::random_mat(rng, n, d)));
  return feats;
}

}  // namespace

TEST_CASE("rce init validates config and is deterministic") {
  REQUIRE_THROWS_AS(RceModel::init(0, tiny_cfg(), 1), ConfigError);
  RceConfig bad = tiny_cfg();
  bad.d_u = 0;
  REQUIRE_THROWS_AS(RceModel::init(2, bad, 1), ConfigError);
  bad = tiny_cfg();
  bad.alpha = 1.5;
  REQUIRE_THROWS_AS(RceModel::init(2, bad, 1), ConfigError);

  RceModel a = RceModel::init(2, tiny_cfg(), 7);
  RceModel b = RceModel::init(2, tiny_cfg(), 7);
  RceModel c = RceModel::init(2, tiny_cfg(), 8);
  REQUIRE(a.params().size() == 2 * 17);
  REQUIRE(a.mods[0].outer_enc.w1.to_mat().v == b.mods[0].outer_enc.w1.to_mat().v);
  REQUIRE(a.mods[1].enc.to_mat().v == b.mods[1].enc.to_mat().v);
  REQUIRE(a.mods[0].outer_enc.w1.to_mat().v != c.mods[0].outer_enc.w1.to_mat().v);
}

TEST_CASE("rce forward produces the documented shapes and center mean") {
  Rng rng(3);
  RceModel model = RceModel::init(3, tiny_cfg(), 5);
  std::vector<Tensor> feats = const_feats(rng, 3, 4, 3);
  Graph g(false);
  RceOutputs o = rce_forward(g, model, feats);
  REQUIRE(o.u_mod.size() == 3);
  for (std::size_t r = 0; r < 3; ++r) {
    REQUIRE(o.u_mod[r].rows() == 4);
    REQUIRE(o.u_mod[r].cols() == 2);
    REQUIRE(o.fhat[r].cols() == 3);
    REQUIRE(o.delta[r].cols() == 3);
    REQUIRE(o.center[r].cols() == 2);
  }
  Mat u = o.u.to_mat();
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      const double want = (o.u_mod[0].to_mat().at(i, j) + o.u_mod[1].to_mat().at(i, j) +
                           o.u_mod[2].to_mat().at(i, j)) /
                          3.0;
      REQUIRE(u.at(i, j) == Catch::Approx(want).margin(1e-14));
    }
  std::vector<Tensor> wrong = const_feats(rng, 2, 4, 3);
  Graph g2(false);
  REQUIRE_THROWS_AS(rce_forward(g2, model, wrong), DimensionError);
}

TEST_CASE("aggregate center ignores modality order") {
  Rng rng(4);
  std::vector<Tensor> u = const_feats(rng, 3, 5, 2);
  std::vector<Tensor> perm = {u[2], u[0], u[1]};
  Graph g(false);
  Mat a = aggregate_center(g, u).to_mat();
  Mat b = aggregate_center(g, perm).to_mat();
  for (std::size_t i = 0; i < a.v.size(); ++i) REQUIRE(a.v[i] == Catch::Approx(b.v[i]).margin(1e-15));
  std::vector<Tensor> none;
  REQUIRE_THROWS_AS(aggregate_center(g, none), ContractError);
}

TEST_CASE("center pull is zero exactly when embeddings and centers agree") {
  Rng rng(5);
  Mat x = testutil::random_mat(rng, 4, 2);
  RceOutputs o;
  o.u_mod = {Tensor::constant(x), Tensor::constant(x)};
  o.center = {Tensor::constant(x), Tensor::constant(x)};
  Graph g(false);
  o.u = aggregate_center(g, o.u_mod);
  REQUIRE(rce_loss_rc(g, o).scalar() == Catch::Approx(0.0).margin(1e-15));

  Mat y = x;
  y.at(2, 1) += 0.5;
  o.center[1] = Tensor::constant(y);
  Graph g2(false);
  REQUIRE(rce_loss_rc(g2, o).scalar() > 0.01);
}

TEST_CASE("single-modality center pull reduces to the inner reconstruction gap") {
  Rng rng(6);
  Mat a = testutil::random_mat(rng, 5, 3);
  Mat c = testutil::random_mat(rng, 5, 3);
  RceOutputs o;
  o.u_mod = {Tensor::constant(a)};
  o.center = {Tensor::constant(c)};
  Graph g(false);
  o.u = aggregate_center(g, o.u_mod);
  REQUIRE(rce_loss_rc(g, o).scalar() == Catch::Approx(mean_row_dist(c, a)).margin(1e-12));
}

TEST_CASE("rce losses match a plain-double oracle") {
  Rng rng(9);
  const std::size_t m = 3, n = 5, d0 = 3;
  RceConfig cfg = tiny_cfg();
  cfg.outer_recon_weight = 0.3;
  RceModel model = RceModel::init(m, cfg, 11);
  std::vector<Tensor> feats = const_feats(rng, m, n, d0);

  Graph g(false);
  RceOutputs o = rce_forward(g, model, feats);
  const double got_rc = rce_loss_rc(g, o).scalar();
  const double got_cr = rce_loss_cr(g, model, o).scalar();
  const double got_all = rce_loss(g, model, o, 0.25, &feats).scalar();

  std::vector<Mat> u, fhat, delta, center;
  for (std::size_t r = 0; r < m; ++r) {
    const auto& mod = model.mods[r];
    u.push_back(mlp_apply(mod.outer_enc, feats[r].to_mat()));
    fhat.push_back(mlp_apply(mod.outer_dec, u[r]));
    delta.push_back(mlp_apply(mod.inner_enc, add_row(fhat[r], mod.enc.to_mat())));
    center.push_back(mlp_apply(mod.inner_dec, mat_add(fhat[r], delta[r])));
  }
  Mat ubar(n, 2);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t i = 0; i < ubar.v.size(); ++i) ubar.v[i] += u[r].v[i] / static_cast<double>(m);

  double want_rc = 0.0;
  for (std::size_t r = 0; r < m; ++r)
    want_rc += mean_row_dist(u[r], ubar) + mean_row_dist(center[r], ubar);
  want_rc /= static_cast<double>(m);

  double want_cr = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    Mat re = mlp_apply(model.mods[k].inner_enc, mat_add(fhat[k], delta[k]));
    for (std::size_t l = 0; l < m; ++l) {
      if (l == k) continue;
      want_cr += mean_row_dist(mlp_apply(model.mods[l].inner_dec, re), center[k]);
    }
  }
  want_cr /= static_cast<double>(m * (m - 1));

  double want_recon = 0.0;
  for (std::size_t r = 0; r < m; ++r) want_recon += mean_row_dist(fhat[r], feats[r].to_mat());
  want_recon *= cfg.outer_recon_weight / static_cast<double>(m);

  REQUIRE(got_rc == Catch::Approx(want_rc).margin(1e-12));
  REQUIRE(got_cr == Catch::Approx(want_cr).margin(1e-12));
  REQUIRE(got_all == Catch::Approx(0.25 * want_rc + 0.75 * want_cr + want_recon).margin(1e-12));
}

TEST_CASE("cross reconstruction is constant zero for one modality") {
  Rng rng(12);
  RceModel model = RceModel::init(1, tiny_cfg(), 13);
  std::vector<Tensor> feats = const_feats(rng, 1, 4, 3);
  Graph g(false);
  RceOutputs o = rce_forward(g, model, feats);
  REQUIRE(rce_loss_cr(g, model, o).scalar() == 0.0);
}

TEST_CASE("rce loss validates alpha and reconstruction inputs") {
  Rng rng(14);
  RceConfig cfg = tiny_cfg();
  cfg.outer_recon_weight = 1.0;
  RceModel model = RceModel::init(2, cfg, 15);
  std::vector<Tensor> feats = const_feats(rng, 2, 3, 3);
  Graph g(false);
  RceOutputs o = rce_forward(g, model, feats);
  REQUIRE_THROWS_AS(rce_loss(g, model, o, -0.1, &feats), ConfigError);
  REQUIRE_THROWS_AS(rce_loss(g, model, o, 1.1, &feats), ConfigError);
  REQUIRE_THROWS_AS(rce_loss(g, model, o, 0.5, nullptr), ContractError);
}

TEST_CASE("every rce loss term passes a finite-difference gradient check") {
  Rng rng(21);
  const std::size_t m = 2, n = 3, d0 = 3;
  RceConfig cfg = tiny_cfg();
  RceModel model = RceModel::init(m, cfg, 23);
  std::vector<Tensor> feats = const_feats(rng, m, n, d0);

  SECTION("center pull") {
    testutil::fd_gradcheck(model.params(), [&](Graph& g) {
      RceOutputs o = rce_forward(g, model, feats);
      return rce_loss_rc(g, o);
    });
  }
  SECTION("cross reconstruction") {
    testutil::fd_gradcheck(model.params(), [&](Graph& g) {
      RceOutputs o = rce_forward(g, model, feats);
      return rce_loss_cr(g, model, o);
    });
  }
  SECTION("combined with outer reconstruction") {
    RceConfig rcfg = tiny_cfg();
    rcfg.outer_recon_weight = 0.5;
    RceModel rmodel = RceModel::init(m, rcfg, 29);
    testutil::fd_gradcheck(rmodel.params(), [&](Graph& g) {
      RceOutputs o = rce_forward(g, rmodel, feats);
      return rce_loss(g, rmodel, o, rcfg.alpha, &feats);
    });
  }
}

TEST_CASE("training lowers the combined loss and is reproducible") {
  SyntheticConfig sc;
  sc.categories = 3;
  sc.per_category = 4;
  sc.modalities = 2;
  sc.dim = 8;
  sc.latent_dim = 4;
  SyntheticData data = generate_synthetic(sc);
  TrainingFeatures train = strip_labels(data.features);

  RceConfig cfg;
  cfg.d0 = 8;
  cfg.d_u = 4;
  cfg.hidden = 16;
  RceModel model = RceModel::init(2, cfg, 31);
  std::vector<double> log = train_rce(model, train, 15, 0.05);
  REQUIRE(log.size() == 15);
  REQUIRE(log.back() < log.front());

  RceModel again = RceModel::init(2, cfg, 31);
  train_rce(again, train, 15, 0.05);
  REQUIRE(model.mods[0].outer_enc.w1.to_mat().v == again.mods[0].outer_enc.w1.to_mat().v);
  REQUIRE(model.mods[1].inner_dec.b2.to_mat().v == again.mods[1].inner_dec.b2.to_mat().v);
}

TEST_CASE("zero epochs leaves the model untouched") {
  SyntheticConfig sc;
  sc.categories = 2;
  sc.per_category = 3;
  sc.modalities = 2;
  sc.dim = 6;
  sc.latent_dim = 3;
  SyntheticData data = generate_synthetic(sc);
  TrainingFeatures train = strip_labels(data.features);
  RceConfig cfg;
  cfg.d0 = 6;
  cfg.d_u = 3;
  cfg.hidden = 8;
  RceModel model = RceModel::init(2, cfg, 37);
  const std::vector<double> before = model.mods[0].outer_enc.w1.to_mat().v;
  REQUIRE(train_rce(model, train, 0, 0.1).empty());
  REQUIRE(model.mods[0].outer_enc.w1.to_mat().v == before);
}

TEST_CASE("train_rce rejects mismatched data") {
  SyntheticConfig sc;
  sc.categories = 2;
  sc.per_category = 2;
  sc.modalities = 2;
  sc.dim = 6;
  sc.latent_dim = 3;
  SyntheticData data = generate_synthetic(sc);
  TrainingFeatures train = strip_labels(data.features);
  RceConfig cfg;
  cfg.d0 = 6;
  cfg.d_u = 3;
  cfg.hidden = 8;
  RceModel three = RceModel::init(3, cfg, 41);
  REQUIRE_THROWS_AS(train_rce(three, train, 1, 0.1), DimensionError);
  cfg.d0 = 5;
  RceModel wrong_dim = RceModel::init(2, cfg, 43);
  REQUIRE_THROWS_AS(train_rce(wrong_dim, train, 1, 0.1), DimensionError);
}
