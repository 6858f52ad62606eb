#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "srcr/rng.hpp"
#include "srcr/tensor.hpp"

namespace srcr {

// Two-layer perceptron: relu(x W1 + b1) W2 + b2. Every encoder/decoder map in
// the model is one of these.
struct Mlp {
  Tensor w1, b1, w2, b2;
  std::size_t in = 0, hidden = 0, out = 0;

  static Mlp init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
    Mlp m;
    m.in = in;
    m.hidden = hidden;
    m.out = out;
    m.w1 = Tensor::param(random_mat(in, hidden, in, rng));
    m.b1 = Tensor::param(random_mat(1, hidden, in, rng));
    m.w2 = Tensor::param(random_mat(hidden, out, hidden, rng));
    m.b2 = Tensor::param(random_mat(1, out, hidden, rng));
    return m;
  }

  Tensor forward(Graph& g, const Tensor& x) const {
    Tensor h = g.relu(g.add_rowvec(g.matmul(x, w1), b1));
    return g.add_rowvec(g.matmul(h, w2), b2);
  }

  std::vector<Tensor> params() const { return {w1, b1, w2, b2}; }

 private:
  // Entries ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), drawn row-major.
  static Mat random_mat(std::size_t r, std::size_t c, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Mat m(r, c);
    for (double& x : m.v) x = rng.uniform(-bound, bound);
    return m;
  }
};

}  // namespace srcr
