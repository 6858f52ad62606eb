#include <cmath>
#include <limits>

#include <catch2/catch_amalgamated.hpp>
#include <srcr/srcr.hpp>

#include "test_util.hpp"

using namespace srcr;
using testutil::random_mat;

namespace {

std::vector<std::uint32_t> random_labels(Rng& rng, std::size_t n, std::uint32_t n_cats) {
  std::vector<std::uint32_t> l(n);
  for (auto& x : l) x = static_cast<std::uint32_t>(rng.next_u64() % n_cats);
  return l;
}

}  // namespace

TEST_CASE("rank orders by cosine, ties to the lower index") {
  Mat q(1, 2), t(3, 2);
  q.at(0, 0) = 1.0;
  t.at(0, 0) = 2.0;             // cosine 1, index 0
  t.at(1, 0) = 5.0;             // cosine 1, index 1 (tie, magnitude must not matter)
  t.at(2, 0) = t.at(2, 1) = 1;  // cosine 0.707
  RankedRetrieval rr = rank(q, t, {7}, {7, 7, 9});
  REQUIRE(rr.order[0] == std::vector<std::size_t>{0, 1, 2});
  REQUIRE(rr.sims[0][0] == Catch::Approx(1.0));
  REQUIRE(rr.n_relevant[0] == 2);
}

TEST_CASE("rank is invariant to positive rescaling of rows") {
  Rng rng(11);
  Mat q = random_mat(rng, 4, 6), t = random_mat(rng, 9, 6);
  auto ql = random_labels(rng, 4, 3), tl = random_labels(rng, 9, 3);
  RankedRetrieval a = rank(q, t, ql, tl);
  for (std::size_t i = 0; i < q.rows; ++i)
    for (std::size_t j = 0; j < q.cols; ++j) q.at(i, j) *= 3.25;
  for (std::size_t i = 0; i < t.rows; ++i)
    for (std::size_t j = 0; j < t.cols; ++j) t.at(i, j) *= 0.125;
  RankedRetrieval b = rank(q, t, ql, tl);
  REQUIRE(a.order == b.order);
}

TEST_CASE("rank pushes zero-norm targets to the bottom and counts them") {
  Mat q(1, 2), t(3, 2);
  q.at(0, 0) = 1.0;
  t.at(0, 0) = -1.0;  // cosine -1, still beats unscorable
  // row 1 all zero
  t.at(2, 0) = 1.0;
  RankedRetrieval rr = rank(q, t, {0}, {0, 0, 0});
  REQUIRE(rr.order[0] == std::vector<std::size_t>{2, 0, 1});
  REQUIRE(rr.zero_norm_targets == 1);
  REQUIRE(std::isinf(rr.sims[0][2]));
}

TEST_CASE("rank counts zero-norm queries") {
  Mat q(2, 2), t(2, 2);
  q.at(1, 0) = 1.0;
  t.at(0, 0) = 1.0;
  t.at(1, 1) = 1.0;
  RankedRetrieval rr = rank(q, t, {0, 0}, {0, 0});
  REQUIRE(rr.zero_norm_queries == 1);
  REQUIRE(rr.order[0] == std::vector<std::size_t>{0, 1});  // ties fall back to index
}

TEST_CASE("rank with exclude_self skips the diagonal") {
  Rng rng(3);
  Mat x = random_mat(rng, 5, 4);
  auto l = random_labels(rng, 5, 2);
  RankedRetrieval rr = rank(x, x, l, l, true);
  for (std::size_t i = 0; i < 5; ++i) {
    REQUIRE(rr.order[i].size() == 4);
    for (std::size_t j : rr.order[i]) REQUIRE(j != i);
  }
}

TEST_CASE("rank validates shapes") {
  Mat q(2, 3), t(2, 4);
  REQUIRE_THROWS_AS(rank(q, t, {0, 1}, {0, 1}), DimensionError);
  Mat t2(2, 3);
  REQUIRE_THROWS_AS(rank(q, t2, {0}, {0, 1}), DimensionError);
  Mat t3(3, 3);
  REQUIRE_THROWS_AS(rank(q, t3, {0, 1}, {0, 1, 2}, true), ContractError);
}

TEST_CASE("average precision hand case") {
  // Ranking: hit, miss, hit, miss. AP = (1/1 + 2/3)/2 = 5/6.
  Mat q(1, 1), t(4, 1);
  q.at(0, 0) = 1.0;
  t.at(0, 0) = 8.0;
  t.at(1, 0) = 4.0;
  t.at(2, 0) = 2.0;
  t.at(3, 0) = 1.0;
  // Same cosine everywhere, so force order via distinct vectors instead.
  Mat q2(1, 2), t2(4, 2);
  q2.at(0, 0) = 1.0;
  const double sims[4] = {0.9, 0.6, 0.4, 0.1};
  for (std::size_t j = 0; j < 4; ++j) {
    t2.at(j, 0) = sims[j];
    t2.at(j, 1) = std::sqrt(1.0 - sims[j] * sims[j]);
  }
  RankedRetrieval rr = rank(q2, t2, {1}, {1, 0, 1, 0});
  REQUIRE(mean_average_precision(rr) == Catch::Approx(5.0 / 6.0).epsilon(1e-12));
  REQUIRE(ndcg(rr) ==
          Catch::Approx((1.0 + 1.0 / std::log2(4.0)) / (1.0 + 1.0 / std::log2(3.0))).epsilon(1e-12));
}

TEST_CASE("perfect retrieval: map 1, ndcg 1, anmrr 0; inverted retrieval: anmrr 1") {
  Mat q(1, 2), t(4, 2);
  q.at(0, 0) = 1.0;
  const double sims[4] = {0.9, 0.6, 0.4, 0.1};
  for (std::size_t j = 0; j < 4; ++j) {
    t.at(j, 0) = sims[j];
    t.at(j, 1) = std::sqrt(1.0 - sims[j] * sims[j]);
  }
  RankedRetrieval best = rank(q, t, {1}, {1, 1, 0, 0});
  REQUIRE(mean_average_precision(best) == Catch::Approx(1.0));
  REQUIRE(ndcg(best) == Catch::Approx(1.0));
  REQUIRE(anmrr(best) == Catch::Approx(0.0).margin(1e-15));

  // Both relevant items land beyond K = min(4*2, 2*2) = 4... K equals the
  // list length here, so build a longer list with the two hits dead last.
  Mat t8(8, 2);
  for (std::size_t j = 0; j < 8; ++j) {
    const double s = 0.9 - 0.1 * static_cast<double>(j);
    t8.at(j, 0) = s;
    t8.at(j, 1) = std::sqrt(1.0 - s * s);
  }
  std::vector<std::uint32_t> tl(8, 0);
  tl[6] = tl[7] = 1;
  RankedRetrieval worst = rank(q, t8, {1}, tl);
  // NG=2, max_ng=2, K=min(8,4)=4, both hits past K: AVR=1.25*4=5,
  // MRR=5-1.5=3.5, denom=5-1.5=3.5.
  REQUIRE(anmrr(worst) == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("metrics skip queries with no relevant target, throw when none scorable") {
  Mat q(2, 2), t(2, 2);
  q.at(0, 0) = 1.0;
  q.at(1, 0) = 1.0;
  t.at(0, 0) = 1.0;
  t.at(1, 1) = 1.0;
  RankedRetrieval rr = rank(q, t, {5, 6}, {5, 5});
  std::size_t skipped = 0;
  REQUIRE(mean_average_precision(rr, &skipped) == Catch::Approx(1.0));
  REQUIRE(skipped == 1);

  RankedRetrieval none = rank(q, t, {7, 7}, {5, 5});
  REQUIRE_THROWS_AS(mean_average_precision(none), EvalError);
  REQUIRE_THROWS_AS(ndcg(none), EvalError);
  REQUIRE_THROWS_AS(anmrr(none), EvalError);
  REQUIRE_THROWS_AS(pr_curve(none), EvalError);
}

TEST_CASE("pr curve: grid, endpoints, and interpolation") {
  Mat q(1, 2), t(4, 2);
  q.at(0, 0) = 1.0;
  const double sims[4] = {0.9, 0.6, 0.4, 0.1};
  for (std::size_t j = 0; j < 4; ++j) {
    t.at(j, 0) = sims[j];
    t.at(j, 1) = std::sqrt(1.0 - sims[j] * sims[j]);
  }
  RankedRetrieval rr = rank(q, t, {1}, {1, 0, 1, 0});
  auto curve = pr_curve(rr, 11);
  REQUIRE(curve.size() == 11);
  for (std::size_t i = 0; i < 11; ++i)
    REQUIRE(curve[i].first == Catch::Approx(static_cast<double>(i) / 10.0));
  // Hits at ranks 1 and 3: precision 1 up to recall 0.5, then 2/3.
  REQUIRE(curve[0].second == Catch::Approx(1.0));
  REQUIRE(curve[5].second == Catch::Approx(1.0));
  REQUIRE(curve[6].second == Catch::Approx(2.0 / 3.0));
  REQUIRE(curve[10].second == Catch::Approx(2.0 / 3.0));
  // Interpolated precision never increases with recall.
  for (std::size_t i = 1; i < curve.size(); ++i) REQUIRE(curve[i].second <= curve[i - 1].second);
  REQUIRE_THROWS_AS(pr_curve(rr, 1), ConfigError);
}

TEST_CASE("metrics agree with brute-force oracles on random instances") {
  Rng rng(2024);
  for (int inst = 0; inst < 60; ++inst) {
    const std::size_t nq = 2 + rng.next_u64() % 6;
    const std::size_t nt = 3 + rng.next_u64() % 12;
    const std::size_t d = 2 + rng.next_u64() % 5;
    const std::uint32_t cats = 2 + static_cast<std::uint32_t>(rng.next_u64() % 3);
    Mat q = random_mat(rng, nq, d), t = random_mat(rng, nt, d);
    auto ql = random_labels(rng, nq, cats), tl = random_labels(rng, nt, cats);

    RankedRetrieval rr = rank(q, t, ql, tl);

    double ap_sum = 0.0, ndcg_sum = 0.0, nmrr_sum = 0.0;
    std::size_t scorable = 0, max_ng = 0;
    std::vector<testutil::OracleRanking> oracles;
    for (std::size_t i = 0; i < nq; ++i) {
      oracles.push_back(testutil::oracle_rank_one(q, i, t, ql, tl));
      max_ng = std::max(max_ng, oracles.back().n_relevant);
    }
    std::vector<double> pr_sum(11, 0.0);
    for (std::size_t i = 0; i < nq; ++i) {
      const auto& orc = oracles[i];
      REQUIRE(rr.order[i] == orc.order);
      if (orc.n_relevant == 0) continue;
      ++scorable;
      ap_sum += testutil::oracle_ap(orc.rel);
      ndcg_sum += testutil::oracle_ndcg(orc.rel);
      nmrr_sum += testutil::oracle_nmrr(orc.rel, max_ng);
      auto pr = testutil::oracle_pr11(orc.rel);
      for (std::size_t p = 0; p < 11; ++p) pr_sum[p] += pr[p].second;
    }
    if (scorable == 0) continue;
    const double inv = 1.0 / static_cast<double>(scorable);
    REQUIRE(mean_average_precision(rr) == Catch::Approx(ap_sum * inv).margin(1e-12));
    REQUIRE(ndcg(rr) == Catch::Approx(ndcg_sum * inv).margin(1e-12));
    REQUIRE(anmrr(rr) == Catch::Approx(nmrr_sum * inv).margin(1e-12));
    auto curve = pr_curve(rr, 11);
    for (std::size_t p = 0; p < 11; ++p)
      REQUIRE(curve[p].second == Catch::Approx(pr_sum[p] * inv).margin(1e-12));
  }
}

TEST_CASE("empirical risk extremes and hand value") {
  // Identical embeddings, same label: D=0, risk = 1 - exp(0) = 0.
  Mat a(1, 2), b(1, 2);
  a.at(0, 0) = b.at(0, 0) = 1.0;
  REQUIRE(empirical_risk(a, {1}, b, {1}) == Catch::Approx(0.0).margin(1e-15));
  // Identical embeddings, different label: risk = exp(0) = 1.
  REQUIRE(empirical_risk(a, {1}, b, {2}) == Catch::Approx(1.0));
  // Orthogonal unit vectors: D = 2. Same label -> 1 - exp(-2).
  Mat c(1, 2);
  c.at(0, 1) = 1.0;
  REQUIRE(empirical_risk(a, {1}, c, {1}) == Catch::Approx(1.0 - std::exp(-2.0)).epsilon(1e-12));
  REQUIRE(empirical_risk(a, {1}, c, {2}) == Catch::Approx(std::exp(-2.0)).epsilon(1e-12));
  // Normalization means scale cannot matter.
  Mat a9 = a;
  a9.at(0, 0) = 1e9;
  REQUIRE(empirical_risk(a9, {1}, c, {1}) == Catch::Approx(1.0 - std::exp(-2.0)).epsilon(1e-12));
  REQUIRE_THROWS_AS(empirical_risk(Mat(0, 2), {}, c, {2}), EvalError);
}

TEST_CASE("empirical risk averages over the pair grid") {
  // 1 query, 2 targets: one same-label at distance 0, one different at D=2.
  Mat q(1, 2), t(2, 2);
  q.at(0, 0) = 1.0;
  t.at(0, 0) = 2.0;
  t.at(1, 1) = 3.0;
  const double expect = (0.0 + std::exp(-2.0)) / 2.0;
  REQUIRE(empirical_risk(q, {4}, t, {4, 5}) == Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("evaluate bundles the headline metrics and the curve") {
  Rng rng(77);
  Mat q = random_mat(rng, 6, 5), t = random_mat(rng, 10, 5);
  auto ql = random_labels(rng, 6, 2), tl = random_labels(rng, 10, 2);
  RankedRetrieval rr = rank(q, t, ql, tl);
  MetricReport rep = evaluate(rr, 11);
  REQUIRE(rep.map == Catch::Approx(mean_average_precision(rr)));
  REQUIRE(rep.ndcg == Catch::Approx(ndcg(rr)));
  REQUIRE(rep.anmrr == Catch::Approx(anmrr(rr)));
  REQUIRE(rep.pr.size() == 11);
}
