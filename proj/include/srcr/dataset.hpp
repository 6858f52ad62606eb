#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "srcr/errors.hpp"
#include "srcr/mat.hpp"
#include "srcr/rng.hpp"

namespace srcr {

// Seed salts for the independent random streams of the data layer.
constexpr std::uint64_t kSynthSalt = 0x01;
constexpr std::uint64_t kSplitSalt = 0x02;

// A multi-modal feature collection: N objects, each with one d0-dim vector
// per modality. Object i is the same object in every modality block (the
// correspondence is positional). Features are stored as f32, exactly as they
// live in the file; compute paths widen to double on entry.
struct FeatureSet {
  std::size_t n_objects = 0;
  std::size_t n_modalities = 0;
  std::size_t dim = 0;
  std::vector<std::vector<float>> features;  // M blocks of N*d0, row-major
  std::vector<std::uint32_t> labels;         // empty when absent
  std::vector<std::string> modality_names;   // M entries

  bool has_labels() const { return !labels.empty(); }

  const float* feature(std::size_t modality, std::size_t object) const {
    return features[modality].data() + object * dim;
  }

  Mat modality_f64(std::size_t r) const {
    Mat m(n_objects, dim);
    const std::vector<float>& src = features[r];
    for (std::size_t i = 0; i < src.size(); ++i) m.v[i] = static_cast<double>(src[i]);
    return m;
  }
};

// What training is allowed to see: features only. Constructing one of these
// is the single doorway from FeatureSet into any fitting code.
struct TrainingFeatures {
  std::size_t n_objects = 0;
  std::size_t n_modalities = 0;
  std::size_t dim = 0;
  std::vector<Mat> feats;  // M mats of N x d0, doubles
  std::vector<std::string> modality_names;
};

inline TrainingFeatures strip_labels(const FeatureSet& fs) {
  TrainingFeatures t;
  t.n_objects = fs.n_objects;
  t.n_modalities = fs.n_modalities;
  t.dim = fs.dim;
  t.modality_names = fs.modality_names;
  t.feats.reserve(fs.n_modalities);
  for (std::size_t r = 0; r < fs.n_modalities; ++r) t.feats.push_back(fs.modality_f64(r));
  return t;
}

// ---------------------------------------------------------------------------
// Byte-level input abstraction. The feature reader runs against this so tests
// can interpose a recording source and prove which byte ranges were actually
// consumed (versus skipped).

class ByteSource {
 public:
  virtual ~ByteSource() = default;
  // Fill dst with exactly n bytes or throw ParseError at the current offset.
  virtual void read(void* dst, std::size_t n) = 0;
  // Advance past n bytes without delivering them.
  virtual void skip(std::size_t n) = 0;
  virtual std::size_t offset() const = 0;
};

class FileSource final : public ByteSource {
 public:
  explicit FileSource(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw Error("cannot open " + path);
  }

  void read(void* dst, std::size_t n) override {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw ParseError(off_ + static_cast<std::size_t>(in_.gcount()), "unexpected end of file");
    off_ += n;
  }

  void skip(std::size_t n) override {
    in_.seekg(static_cast<std::streamoff>(n), std::ios::cur);
    if (!in_) throw ParseError(off_, "unexpected end of file while skipping");
    off_ += n;
  }

  std::size_t offset() const override { return off_; }

 private:
  std::ifstream in_;
  std::size_t off_ = 0;
};

class MemorySource final : public ByteSource {
 public:
  MemorySource(const void* data, std::size_t size)
      : data_(static_cast<const unsigned char*>(data)), size_(size) {}
  explicit MemorySource(const std::string& bytes) : MemorySource(bytes.data(), bytes.size()) {}

  void read(void* dst, std::size_t n) override {
    if (off_ + n > size_) throw ParseError(size_, "unexpected end of file");
    std::memcpy(dst, data_ + off_, n);
    off_ += n;
  }

  void skip(std::size_t n) override {
    if (off_ + n > size_) throw ParseError(size_, "unexpected end of file while skipping");
    off_ += n;
  }

  std::size_t offset() const override { return off_; }

 private:
  const unsigned char* data_;
  std::size_t size_;
  std::size_t off_ = 0;
};

namespace detail {

inline std::uint32_t get_u32(ByteSource& src) {
  unsigned char b[4];
  src.read(b, 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

inline void put_f32(std::ostream& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

}  // namespace detail

// ---------------------------------------------------------------------------
// OCMF v1: the on-disk feature container. Little-endian throughout.
//
//   "OCMF" | u32 version=1 | u32 N | u32 M | u32 d0 | u32 label_flag
//   M blocks of N*d0 f32 (block r = modality r, row-major)
//   if label_flag: N u32 labels
//   u32 name_bytes_len | newline-separated modality names (UTF-8)

enum class OcmfRead {
  Full,          // everything, labels included
  FeaturesOnly,  // label block skipped, never read
};

inline FeatureSet read_ocmf(ByteSource& src, OcmfRead mode = OcmfRead::Full) {
  char magic[4];
  src.read(magic, 4);
  if (std::memcmp(magic, "OCMF", 4) != 0) throw ParseError(0, "bad magic");
  const std::uint32_t version = detail::get_u32(src);
  if (version != 1) throw ParseError(4, "unsupported version " + std::to_string(version));
  const std::uint32_t n = detail::get_u32(src);
  const std::uint32_t m = detail::get_u32(src);
  const std::uint32_t d0 = detail::get_u32(src);
  const std::uint32_t label_flag = detail::get_u32(src);
  if (n == 0) throw ParseError(8, "zero object count");
  if (m == 0) throw ParseError(12, "zero modality count");
  if (d0 == 0) throw ParseError(16, "zero feature dimension");
  if (label_flag > 1)
    throw ParseError(20, "label flag must be 0 or 1, got " + std::to_string(label_flag));

  FeatureSet fs;
  fs.n_objects = n;
  fs.n_modalities = m;
  fs.dim = d0;
  fs.features.resize(m);
  const std::size_t block = static_cast<std::size_t>(n) * d0;
  for (std::uint32_t r = 0; r < m; ++r) {
    fs.features[r].resize(block);
    static_assert(sizeof(float) == 4);
    src.read(fs.features[r].data(), block * 4);
  }

  if (label_flag == 1) {
    if (mode == OcmfRead::FeaturesOnly) {
      src.skip(static_cast<std::size_t>(n) * 4);
    } else {
      fs.labels.resize(n);
      for (std::uint32_t i = 0; i < n; ++i) fs.labels[i] = detail::get_u32(src);
    }
  }

  const std::size_t names_at = src.offset();
  const std::uint32_t name_bytes = detail::get_u32(src);
  std::string buf(name_bytes, '\0');
  if (name_bytes > 0) src.read(buf.data(), name_bytes);
  fs.modality_names.clear();
  std::size_t start = 0;
  while (true) {
    const std::size_t nl = buf.find('\n', start);
    if (nl == std::string::npos) {
      fs.modality_names.push_back(buf.substr(start));
      break;
    }
    fs.modality_names.push_back(buf.substr(start, nl - start));
    start = nl + 1;
  }
  if (fs.modality_names.size() != m)
    throw ParseError(names_at, "expected " + std::to_string(m) + " modality names, got " +
                                   std::to_string(fs.modality_names.size()));
  return fs;
}

inline FeatureSet read_ocmf(const std::string& path, OcmfRead mode = OcmfRead::Full) {
  FileSource src(path);
  return read_ocmf(src, mode);
}

inline void write_ocmf(const FeatureSet& fs, std::ostream& out) {
  if (fs.n_objects == 0 || fs.n_modalities == 0 || fs.dim == 0)
    throw ContractError("write_ocmf: empty feature set");
  if (fs.features.size() != fs.n_modalities)
    throw ContractError("write_ocmf: modality block count mismatch");
  if (fs.modality_names.size() != fs.n_modalities)
    throw ContractError("write_ocmf: modality name count mismatch");
  if (fs.has_labels() && fs.labels.size() != fs.n_objects)
    throw ContractError("write_ocmf: label count mismatch");

  out.write("OCMF", 4);
  detail::put_u32(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(fs.n_objects));
  detail::put_u32(out, static_cast<std::uint32_t>(fs.n_modalities));
  detail::put_u32(out, static_cast<std::uint32_t>(fs.dim));
  detail::put_u32(out, fs.has_labels() ? 1u : 0u);
  const std::size_t block = fs.n_objects * fs.dim;
  for (std::size_t r = 0; r < fs.n_modalities; ++r) {
    if (fs.features[r].size() != block)
      throw ContractError("write_ocmf: modality " + std::to_string(r) + " has wrong size");
    for (float f : fs.features[r]) detail::put_f32(out, f);
  }
  if (fs.has_labels())
    for (std::uint32_t y : fs.labels) detail::put_u32(out, y);
  std::string names;
  for (std::size_t r = 0; r < fs.n_modalities; ++r) {
    if (r) names.push_back('\n');
    names += fs.modality_names[r];
  }
  detail::put_u32(out, static_cast<std::uint32_t>(names.size()));
  out.write(names.data(), static_cast<std::streamsize>(names.size()));
}

inline void write_ocmf(const FeatureSet& fs, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_ocmf(fs, out);
  out.flush();
  if (!out) throw Error("write to " + path + " failed");
}

// ---------------------------------------------------------------------------
// Synthetic multi-modal corpus. Objects scatter around per-category centroids
// in a latent space; each modality views that latent point through its own
// fixed affine map plus observation noise. Heterogeneous modalities, one
// shared semantic center per object.

struct SyntheticConfig {
  std::size_t categories = 30;
  std::size_t per_category = 20;
  std::size_t modalities = 3;
  std::size_t dim = 64;
  // All categories, seen and held out alike, live in a shared latent subspace
  // of this dimension. High-dimensional real features behave the same way,
  // and it is what lets structure learned on seen categories say anything
  // about unseen ones.
  std::size_t latent_dim = 8;
  // Blend between the identity view (0) and a fully random linear view (1).
  // At 1 the modalities share no coordinate system at all, so raw cross-modal
  // cosine carries no signal; real per-modality backbones are correlated, and
  // the default keeps a small shared component while raw cosine stays weak.
  double modality_shift = 0.9;
  double jitter = 0.2;  // within-category spread, in latent units
  double noise = 0.1;   // observation noise sigma
  // Per-coordinate sigma of the affine map's translation, relative to
  // modality_shift. Offsets are shared by every object in a modality, so they
  // control how much of the raw geometry encodes modality identity rather
  // than semantics. The default swamps naive center pulling while leaving
  // block-centered geometry intact.
  double offset_scale = 2.5;
  std::uint64_t seed = 2022;
};

struct SyntheticData {
  FeatureSet features;            // f32, as written to disk
  Mat latents;                    // N x d0 latent points
  std::vector<Mat> maps;          // M affine maps A_r, d0 x d0
  std::vector<std::vector<double>> shifts;  // M offsets b_r
  std::vector<Mat> exact;         // M blocks of A_r x + b_r + noise, before f32 rounding
};

inline SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.categories == 0 || cfg.per_category == 0 || cfg.modalities == 0 || cfg.dim == 0)
    throw ConfigError("generate_synthetic: all counts must be positive");
  if (cfg.latent_dim == 0 || cfg.latent_dim > cfg.dim)
    throw ConfigError("generate_synthetic: latent_dim must be in [1, dim]");
  if (cfg.noise < 0.0) throw ConfigError("generate_synthetic: negative noise");
  if (cfg.jitter < 0.0) throw ConfigError("generate_synthetic: negative jitter");
  if (cfg.offset_scale < 0.0) throw ConfigError("generate_synthetic: negative offset_scale");

  const std::size_t n = cfg.categories * cfg.per_category;
  const std::size_t d = cfg.dim;
  const std::size_t dl = cfg.latent_dim;
  Rng rng(mix_seed(cfg.seed, kSynthSalt));

  // Draw order is part of the format: latent centroids, subspace basis,
  // object jitter, per-modality maps, then per-modality observation noise.
  Mat centroids(cfg.categories, dl);
  for (double& x : centroids.v) x = rng.normal();
  // Basis scaled so latent points keep unit-variance coordinates in R^d.
  Mat basis(dl, d);
  const double b_scale = 1.0 / std::sqrt(static_cast<double>(dl));
  for (double& x : basis.v) x = b_scale * rng.normal();

  SyntheticData out;
  out.latents = Mat(n, d);
  std::vector<std::uint32_t> labels(n);
  std::vector<double> w(dl);
  for (std::size_t y = 0; y < cfg.categories; ++y)
    for (std::size_t j = 0; j < cfg.per_category; ++j) {
      const std::size_t i = y * cfg.per_category + j;
      labels[i] = static_cast<std::uint32_t>(y);
      for (std::size_t t = 0; t < dl; ++t) w[t] = centroids.at(y, t) + cfg.jitter * rng.normal();
      double* x = out.latents.row(i);
      for (std::size_t t = 0; t < dl; ++t) {
        const double wt = w[t];
        const double* br = basis.row(t);
        for (std::size_t q = 0; q < d; ++q) x[q] += wt * br[q];
      }
    }

  // A = (1-s) I + s G with G ~ N(0, 1/d): norm-preserving on average, and the
  // identity component vanishes at s = 1 so no coordinate survives untouched.
  const double s = cfg.modality_shift;
  const double g_scale = s / std::sqrt(static_cast<double>(d));
  out.maps.reserve(cfg.modalities);
  out.shifts.reserve(cfg.modalities);
  for (std::size_t r = 0; r < cfg.modalities; ++r) {
    Mat a(d, d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        a.at(i, j) = (i == j ? 1.0 - s : 0.0) + g_scale * rng.normal();
    std::vector<double> b(d);
    for (double& x : b) x = cfg.offset_scale * s * rng.normal();
    out.maps.push_back(std::move(a));
    out.shifts.push_back(std::move(b));
  }

  FeatureSet fs;
  fs.n_objects = n;
  fs.n_modalities = cfg.modalities;
  fs.dim = d;
  fs.labels = std::move(labels);
  fs.features.resize(cfg.modalities);
  out.exact.reserve(cfg.modalities);
  for (std::size_t r = 0; r < cfg.modalities; ++r) {
    Mat block(n, d);
    const Mat& a = out.maps[r];
    const std::vector<double>& b = out.shifts[r];
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = out.latents.row(i);
      double* f = block.row(i);
      for (std::size_t p = 0; p < d; ++p) f[p] = b[p];
      for (std::size_t p = 0; p < d; ++p) {
        const double xp = x[p];
        const double* ap = a.row(p);
        // f += x_p * row p of A^T: feature = A x with A applied row-wise.
        for (std::size_t q = 0; q < d; ++q) f[q] += ap[q] * xp;
      }
      for (std::size_t q = 0; q < d; ++q) f[q] += cfg.noise * rng.normal();
    }
    fs.features[r].resize(n * d);
    for (std::size_t i = 0; i < block.v.size(); ++i)
      fs.features[r][i] = static_cast<float>(block.v[i]);
    out.exact.push_back(std::move(block));
    fs.modality_names.push_back("mod" + std::to_string(r));
  }
  out.features = std::move(fs);
  return out;
}

// ---------------------------------------------------------------------------
// Open-set protocol: whole categories are held out, so every test object
// belongs to a category the model never saw.

struct OpenSetSplit {
  std::vector<std::uint32_t> seen_categories;
  std::vector<std::uint32_t> unseen_categories;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

inline OpenSetSplit open_set_split(const FeatureSet& fs, double unseen_fraction,
                                   std::uint64_t seed) {
  if (!fs.has_labels()) throw ContractError("open_set_split: feature set has no labels");
  std::vector<std::uint32_t> cats(fs.labels);
  std::sort(cats.begin(), cats.end());
  cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
  const std::size_t y = cats.size();
  const auto n_unseen = static_cast<std::size_t>(
      std::llround(unseen_fraction * static_cast<double>(y)));
  if (n_unseen == 0 || n_unseen >= y)
    throw ConfigError("open_set_split: fraction " + std::to_string(unseen_fraction) + " keeps " +
                      std::to_string(n_unseen) + " of " + std::to_string(y) +
                      " categories unseen");

  Rng rng(mix_seed(seed, kSplitSalt));
  rng.shuffle(cats);
  OpenSetSplit split;
  split.unseen_categories.assign(cats.begin(), cats.begin() + static_cast<std::ptrdiff_t>(n_unseen));
  split.seen_categories.assign(cats.begin() + static_cast<std::ptrdiff_t>(n_unseen), cats.end());
  std::sort(split.unseen_categories.begin(), split.unseen_categories.end());
  std::sort(split.seen_categories.begin(), split.seen_categories.end());

  for (std::size_t i = 0; i < fs.n_objects; ++i) {
    const bool unseen = std::binary_search(split.unseen_categories.begin(),
                                           split.unseen_categories.end(), fs.labels[i]);
    (unseen ? split.test_indices : split.train_indices).push_back(i);
  }
  return split;
}

// One cross-modal retrieval task: test objects viewed in modality q query
// against the same objects viewed in modality t.
struct RetrievalTask {
  std::size_t query_modality = 0;
  std::size_t target_modality = 0;
  std::vector<std::size_t> query_indices;
  std::vector<std::size_t> target_indices;
};

inline RetrievalTask make_task(const OpenSetSplit& split, std::size_t q, std::size_t t,
                               std::size_t n_modalities) {
  if (q == t) throw ContractError("make_task: query and target modality are both " +
                                  std::to_string(q));
  if (q >= n_modalities || t >= n_modalities)
    throw DimensionError("make_task: modality index out of range");
  RetrievalTask task;
  task.query_modality = q;
  task.target_modality = t;
  task.query_indices = split.test_indices;
  task.target_indices = split.test_indices;
  return task;
}

// ---------------------------------------------------------------------------
// Split files: small text artifacts so a split computed once can be replayed
// by later pipeline stages.

inline void write_split(const OpenSetSplit& split, std::ostream& out) {
  out << "srcr-split v1\n";
  auto line = [&out](const char* key, const auto& xs) {
    out << key;
    for (auto x : xs) out << ' ' << x;
    out << '\n';
  };
  line("seen", split.seen_categories);
  line("unseen", split.unseen_categories);
  line("train", split.train_indices);
  line("test", split.test_indices);
}

inline void write_split(const OpenSetSplit& split, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_split(split, out);
}

inline OpenSetSplit read_split(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || header != "srcr-split v1")
    throw ParseError(0, "not a split file (missing 'srcr-split v1' header)");
  OpenSetSplit split;
  std::size_t at = header.size() + 1;
  std::string ln;
  bool saw[4] = {false, false, false, false};
  while (std::getline(in, ln)) {
    if (ln.empty()) {
      at += 1;
      continue;
    }
    std::istringstream iss(ln);
    std::string key;
    iss >> key;
    auto fill_u32 = [&iss](std::vector<std::uint32_t>& v) {
      std::uint32_t x;
      while (iss >> x) v.push_back(x);
    };
    auto fill_sz = [&iss](std::vector<std::size_t>& v) {
      std::size_t x;
      while (iss >> x) v.push_back(x);
    };
    if (key == "seen") {
      fill_u32(split.seen_categories);
      saw[0] = true;
    } else if (key == "unseen") {
      fill_u32(split.unseen_categories);
      saw[1] = true;
    } else if (key == "train") {
      fill_sz(split.train_indices);
      saw[2] = true;
    } else if (key == "test") {
      fill_sz(split.test_indices);
      saw[3] = true;
    } else {
      throw ParseError(at, "unknown split key '" + key + "'");
    }
    if (!iss.eof()) throw ParseError(at, "bad value in '" + key + "' line");
    at += ln.size() + 1;
  }
  for (bool s : saw)
    if (!s) throw ParseError(at, "split file is missing a section");
  return split;
}

inline OpenSetSplit read_split(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return read_split(in);
}

}  // namespace srcr
