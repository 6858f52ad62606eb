#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "srcr/errors.hpp"
#include "srcr/mat.hpp"

namespace srcr {

// Full ranking of every target for every query, most similar first. Relevance
// is label equality, stored in ranked order. Queries and targets keep their
// own label vectors; the ordering is canonical (similarity descending, ties
// to the lower target index), so metrics downstream are deterministic.
struct RankedRetrieval {
  std::size_t n_targets = 0;
  std::vector<std::vector<std::size_t>> order;  // per query: target indices, best first
  std::vector<std::vector<double>> sims;        // aligned with order
  std::vector<std::vector<char>> rel;           // aligned with order, 1 = same label
  std::vector<std::size_t> n_relevant;          // per query
  std::size_t zero_norm_queries = 0;            // diagnostics
  std::size_t zero_norm_targets = 0;

  std::size_t n_queries() const { return order.size(); }
};

// Cosine-ranked retrieval. Zero-norm vectors cannot be scored; they get -inf
// similarity (so zero-norm targets sink to the bottom) and are counted.
// When exclude_self is set, query row i skips target row i: both sides must
// then describe the same object list positionally.
inline RankedRetrieval rank(const Mat& queries, const Mat& targets,
                            const std::vector<std::uint32_t>& query_labels,
                            const std::vector<std::uint32_t>& target_labels,
                            bool exclude_self = false) {
  if (queries.cols != targets.cols)
    throw DimensionError("rank: query dim " + std::to_string(queries.cols) + " vs target dim " +
                         std::to_string(targets.cols));
  if (query_labels.size() != queries.rows || target_labels.size() != targets.rows)
    throw DimensionError("rank: label count does not match embedding rows");
  if (exclude_self && queries.rows != targets.rows)
    throw ContractError("rank: self-exclusion requires equally sized, aligned sets");

  const std::size_t nq = queries.rows, nt = targets.rows, d = queries.cols;
  RankedRetrieval rr;
  rr.n_targets = nt;
  rr.order.resize(nq);
  rr.sims.resize(nq);
  rr.rel.resize(nq);
  rr.n_relevant.assign(nq, 0);

  std::vector<double> tnorm(nt);
  for (std::size_t j = 0; j < nt; ++j) {
    tnorm[j] = l2_norm(targets.row(j), d);
    if (tnorm[j] == 0.0) ++rr.zero_norm_targets;
  }

  const double neg_inf = -std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i < nq; ++i) {
    const double qnorm = l2_norm(queries.row(i), d);
    if (qnorm == 0.0) ++rr.zero_norm_queries;
    scored.clear();
    for (std::size_t j = 0; j < nt; ++j) {
      if (exclude_self && j == i) continue;
      double s = neg_inf;
      if (qnorm > 0.0 && tnorm[j] > 0.0)
        s = dot(queries.row(i), targets.row(j), d) / (qnorm * tnorm[j]);
      scored.emplace_back(s, j);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    rr.order[i].resize(scored.size());
    rr.sims[i].resize(scored.size());
    rr.rel[i].resize(scored.size());
    for (std::size_t p = 0; p < scored.size(); ++p) {
      rr.order[i][p] = scored[p].second;
      rr.sims[i][p] = scored[p].first;
      const bool hit = target_labels[scored[p].second] == query_labels[i];
      rr.rel[i][p] = hit ? 1 : 0;
      if (hit) ++rr.n_relevant[i];
    }
  }
  return rr;
}

namespace detail {

// Mean of f(query) over queries that have at least one relevant target.
// Queries without any are skipped; if every query lacks one, the metric is
// undefined and evaluation stops.
template <class F>
double mean_over_scorable(const RankedRetrieval& rr, const char* name, F f,
                          std::size_t* skipped_out = nullptr) {
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < rr.n_queries(); ++i) {
    if (rr.n_relevant[i] == 0) continue;
    sum += f(i);
    ++used;
  }
  if (skipped_out) *skipped_out = rr.n_queries() - used;
  if (used == 0) throw EvalError(std::string(name) + ": no query has any relevant target");
  return sum / static_cast<double>(used);
}

}  // namespace detail

inline double mean_average_precision(const RankedRetrieval& rr,
                                     std::size_t* skipped_out = nullptr) {
  return detail::mean_over_scorable(
      rr, "map",
      [&rr](std::size_t i) {
        double ap = 0.0;
        std::size_t hits = 0;
        for (std::size_t p = 0; p < rr.rel[i].size(); ++p)
          if (rr.rel[i][p]) {
            ++hits;
            ap += static_cast<double>(hits) / static_cast<double>(p + 1);
          }
        return ap / static_cast<double>(rr.n_relevant[i]);
      },
      skipped_out);
}

// Binary gains over the full ranking: DCG = sum 1/log2(rank+1) at relevant
// ranks, normalized by the ideal front-loaded ranking.
inline double ndcg(const RankedRetrieval& rr, std::size_t* skipped_out = nullptr) {
  return detail::mean_over_scorable(
      rr, "ndcg",
      [&rr](std::size_t i) {
        double dcg = 0.0;
        for (std::size_t p = 0; p < rr.rel[i].size(); ++p)
          if (rr.rel[i][p]) dcg += 1.0 / std::log2(static_cast<double>(p + 2));
        double ideal = 0.0;
        for (std::size_t r = 1; r <= rr.n_relevant[i]; ++r)
          ideal += 1.0 / std::log2(static_cast<double>(r + 1));
        return dcg / ideal;
      },
      skipped_out);
}

// MPEG-7 rank metric. Relevant items found past the cutoff K(q) are charged a
// flat penalty rank of 1.25*K; the normalizer maps perfect retrieval to 0 and
// all-missed to 1.
inline double anmrr(const RankedRetrieval& rr, std::size_t* skipped_out = nullptr) {
  std::size_t max_ng = 0;
  for (std::size_t ng : rr.n_relevant) max_ng = std::max(max_ng, ng);
  return detail::mean_over_scorable(
      rr, "anmrr",
      [&rr, max_ng](std::size_t i) {
        const double ng = static_cast<double>(rr.n_relevant[i]);
        const double k = std::min(4.0 * ng, 2.0 * static_cast<double>(max_ng));
        double avr = 0.0;
        for (std::size_t p = 0; p < rr.rel[i].size(); ++p)
          if (rr.rel[i][p]) {
            const double rank_p = static_cast<double>(p + 1);
            avr += rank_p <= k ? rank_p : 1.25 * k;
          }
        avr /= ng;
        const double mrr = avr - 0.5 - ng / 2.0;
        return mrr / (1.25 * k - 0.5 - ng / 2.0);
      },
      skipped_out);
}

// Interpolated precision at evenly spaced recall levels, averaged over
// queries. The classic 11-point curve is n_points = 11.
inline std::vector<std::pair<double, double>> pr_curve(const RankedRetrieval& rr,
                                                       std::size_t n_points = 11) {
  if (n_points < 2) throw ConfigError("pr_curve: need at least 2 recall points");
  std::vector<double> precision_sum(n_points, 0.0);
  std::size_t used = 0;
  for (std::size_t i = 0; i < rr.n_queries(); ++i) {
    const std::size_t ng = rr.n_relevant[i];
    if (ng == 0) continue;
    ++used;
    // precision/recall after each cut, then interpolate: at recall level r,
    // the best precision achievable at recall >= r.
    std::vector<double> prec, rec;
    std::size_t hits = 0;
    for (std::size_t p = 0; p < rr.rel[i].size(); ++p) {
      if (!rr.rel[i][p]) continue;
      ++hits;
      prec.push_back(static_cast<double>(hits) / static_cast<double>(p + 1));
      rec.push_back(static_cast<double>(hits) / static_cast<double>(ng));
    }
    for (std::size_t t = 0; t < n_points; ++t) {
      const double level = static_cast<double>(t) / static_cast<double>(n_points - 1);
      double best = 0.0;
      for (std::size_t s = 0; s < prec.size(); ++s)
        if (rec[s] >= level - 1e-15) best = std::max(best, prec[s]);
      precision_sum[t] += best;
    }
  }
  if (used == 0) throw EvalError("pr_curve: no query has any relevant target");
  std::vector<std::pair<double, double>> curve(n_points);
  for (std::size_t t = 0; t < n_points; ++t)
    curve[t] = {static_cast<double>(t) / static_cast<double>(n_points - 1),
                precision_sum[t] / static_cast<double>(used)};
  return curve;
}

// Mean over all query-target pairs of
//   same label:      1 - exp(-D)
//   different label:     exp(-D)
// with D the squared Euclidean distance between L2-normalized embeddings.
// Low risk means same-label pairs are close and different-label pairs far.
inline double empirical_risk(const Mat& queries, const std::vector<std::uint32_t>& query_labels,
                             const Mat& targets, const std::vector<std::uint32_t>& target_labels) {
  if (queries.rows == 0 || targets.rows == 0) throw EvalError("empirical_risk: empty set");
  if (queries.cols != targets.cols) throw DimensionError("empirical_risk: dim mismatch");
  if (query_labels.size() != queries.rows || target_labels.size() != targets.rows)
    throw DimensionError("empirical_risk: label count mismatch");

  auto normalized = [](const Mat& m) {
    Mat out = m;
    for (std::size_t i = 0; i < out.rows; ++i) {
      const double nrm = l2_norm(out.row(i), out.cols);
      if (nrm > 0.0)
        for (std::size_t j = 0; j < out.cols; ++j) out.at(i, j) /= nrm;
    }
    return out;
  };
  const Mat q = normalized(queries);
  const Mat t = normalized(targets);

  double sum = 0.0;
  for (std::size_t i = 0; i < q.rows; ++i)
    for (std::size_t j = 0; j < t.rows; ++j) {
      const double d = sq_dist(q.row(i), t.row(j), q.cols);
      const double e = std::exp(-d);
      sum += query_labels[i] == target_labels[j] ? 1.0 - e : e;
    }
  return sum / (static_cast<double>(q.rows) * static_cast<double>(t.rows));
}

// Everything eval emits for one query-target modality pair.
struct MetricReport {
  double map = 0.0;
  double ndcg = 0.0;
  double anmrr = 0.0;
  std::vector<std::pair<double, double>> pr;  // (recall, precision)
  std::size_t skipped_queries = 0;            // queries with no relevant target
  std::size_t zero_norm_queries = 0;
  std::size_t zero_norm_targets = 0;
};

inline MetricReport evaluate(const RankedRetrieval& rr, std::size_t pr_points = 11) {
  MetricReport rep;
  rep.map = mean_average_precision(rr, &rep.skipped_queries);
  rep.ndcg = ndcg(rr);
  rep.anmrr = anmrr(rr);
  rep.pr = pr_curve(rr, pr_points);
  rep.zero_norm_queries = rr.zero_norm_queries;
  rep.zero_norm_targets = rr.zero_norm_targets;
  return rep;
}

}  // namespace srcr
