#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "srcr/errors.hpp"
#include "srcr/metrics.hpp"

namespace srcr {

// Shortest round-trip decimal form. snprintf with %.17g is byte-stable across
// runs, which the determinism guarantee leans on.
inline std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::string fmt_fixed(double x, int places) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.*f", places, x);
  return buf;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  return out;
}

inline void write_metrics_csv(const std::string& path, const MetricReport& rep,
                              const std::string& config_hash) {
  std::ofstream out = open_out(path);
  out << "# config_hash=" << config_hash << "\n";
  out << "metric,value\n";
  out << "map," << fmt_double(rep.map) << "\n";
  out << "ndcg," << fmt_double(rep.ndcg) << "\n";
  out << "anmrr," << fmt_double(rep.anmrr) << "\n";
  out << "skipped_queries," << rep.skipped_queries << "\n";
  out << "zero_norm_queries," << rep.zero_norm_queries << "\n";
  out << "zero_norm_targets," << rep.zero_norm_targets << "\n";
}

inline void write_pr_csv(const std::string& path,
                         const std::vector<std::pair<double, double>>& curve,
                         const std::string& config_hash) {
  std::ofstream out = open_out(path);
  out << "# config_hash=" << config_hash << "\n";
  out << "recall,precision\n";
  for (const auto& [r, p] : curve) out << fmt_double(r) << "," << fmt_double(p) << "\n";
}

// Self-contained SVG line chart of a precision-recall curve.
inline void write_pr_svg(const std::string& path,
                         const std::vector<std::pair<double, double>>& curve,
                         const std::string& title, const std::string& config_hash) {
  const double w = 640, h = 480, ml = 60, mr = 20, mt = 40, mb = 60;
  const double px = w - ml - mr, py = h - mt - mb;
  auto xc = [&](double recall) { return ml + recall * px; };
  auto yc = [&](double precision) { return h - mb - precision * py; };

  std::ofstream out = open_out(path);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<!-- config_hash=" << config_hash << " -->\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
  out << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"16\">"
      << title << "</text>\n";
  // axes with ticks every 0.2
  out << "<g stroke=\"black\" fill=\"none\">\n";
  out << "<path d=\"M " << xc(0) << " " << yc(0) << " L " << xc(1) << " " << yc(0) << "\"/>\n";
  out << "<path d=\"M " << xc(0) << " " << yc(0) << " L " << xc(0) << " " << yc(1) << "\"/>\n";
  out << "</g>\n";
  out << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"black\">\n";
  for (int t = 0; t <= 5; ++t) {
    const double v = t / 5.0;
    out << "<line x1=\"" << xc(v) << "\" y1=\"" << yc(0) << "\" x2=\"" << xc(v) << "\" y2=\""
        << yc(0) + 5 << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << xc(v) << "\" y=\"" << yc(0) + 20 << "\" text-anchor=\"middle\">"
        << fmt_fixed(v, 1) << "</text>\n";
    out << "<line x1=\"" << xc(0) - 5 << "\" y1=\"" << yc(v) << "\" x2=\"" << xc(0) << "\" y2=\""
        << yc(v) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << xc(0) - 9 << "\" y=\"" << yc(v) + 4 << "\" text-anchor=\"end\">"
        << fmt_fixed(v, 1) << "</text>\n";
  }
  out << "<text x=\"" << ml + px / 2 << "\" y=\"" << h - 16
      << "\" text-anchor=\"middle\">recall</text>\n";
  out << "<text x=\"16\" y=\"" << mt + py / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << mt + py / 2
      << ")\">precision</text>\n";
  out << "</g>\n";
  out << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (i) out << " ";
    out << fmt_fixed(xc(curve[i].first), 2) << "," << fmt_fixed(yc(curve[i].second), 2);
  }
  out << "\"/>\n";
  for (const auto& [r, p] : curve)
    out << "<circle cx=\"" << fmt_fixed(xc(r), 2) << "\" cy=\"" << fmt_fixed(yc(p), 2)
        << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
  out << "</svg>\n";
}

inline void write_loss_csv(const std::string& path, const std::vector<double>& rce_log,
                           const std::vector<double>& hsl_log, const std::string& config_hash) {
  std::ofstream out = open_out(path);
  out << "# config_hash=" << config_hash << "\n";
  out << "stage,epoch,loss\n";
  for (std::size_t e = 0; e < rce_log.size(); ++e)
    out << "rce," << e + 1 << "," << fmt_double(rce_log[e]) << "\n";
  for (std::size_t e = 0; e < hsl_log.size(); ++e)
    out << "hsl," << e + 1 << "," << fmt_double(hsl_log[e]) << "\n";
}

struct PairSummary {
  std::string pair_name;
  MetricReport report;
};

inline void write_summary_csv(const std::string& path, const std::vector<PairSummary>& pairs,
                              const std::string& config_hash) {
  std::ofstream out = open_out(path);
  out << "# config_hash=" << config_hash << "\n";
  out << "pair,map,ndcg,anmrr\n";
  double sm = 0, sn = 0, sa = 0;
  for (const PairSummary& p : pairs) {
    out << p.pair_name << "," << fmt_double(p.report.map) << "," << fmt_double(p.report.ndcg)
        << "," << fmt_double(p.report.anmrr) << "\n";
    sm += p.report.map;
    sn += p.report.ndcg;
    sa += p.report.anmrr;
  }
  if (!pairs.empty()) {
    const double c = static_cast<double>(pairs.size());
    out << "average," << fmt_double(sm / c) << "," << fmt_double(sn / c) << ","
        << fmt_double(sa / c) << "\n";
  }
}

struct AblationRow {
  std::string variant;
  double map = 0.0;
  double ndcg = 0.0;
  double anmrr = 0.0;
};

inline void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows,
                               const std::string& config_hash) {
  std::ofstream out = open_out(path);
  out << "# config_hash=" << config_hash << "\n";
  out << "variant,map,ndcg,anmrr\n";
  for (const AblationRow& r : rows)
    out << r.variant << "," << fmt_double(r.map) << "," << fmt_double(r.ndcg) << ","
        << fmt_double(r.anmrr) << "\n";
}

inline void write_risk_csv(const std::string& path,
                           const std::vector<std::pair<std::string, double>>& rows,
                           const std::string& config_hash) {
  std::ofstream out = open_out(path);
  out << "# config_hash=" << config_hash << "\n";
  out << "pair,risk\n";
  double sum = 0;
  for (const auto& [name, risk] : rows) {
    out << name << "," << fmt_double(risk) << "\n";
    sum += risk;
  }
  if (!rows.empty())
    out << "average," << fmt_double(sum / static_cast<double>(rows.size())) << "\n";
}

}  // namespace srcr
