#include <cmath>

#include "deepicp/autodiff.hpp"

namespace deepicp::ad {

namespace {

Tape* tape_of(const Tensor& t) { return t.tape(); }

int parent_of(const Tensor& t, Tape* tape) {
  return (tape != nullptr && t.tape() == tape) ? t.node() : -1;
}

Tape* merge2(const Tensor& a, const Tensor& b) {
  Tape* ta = a.tape();
  Tape* tb = b.tape();
  if (ta && tb && ta != tb) throw std::invalid_argument("inputs on different tapes");
  return ta ? ta : tb;
}

Tensor finish(Tape* tape, Tensor out, std::vector<int> parents,
              Tape::BackwardFn backward, const char* op) {
  if (finite_checks_enabled() && !out.all_finite()) {
    throw std::runtime_error(std::string(op) + ": non-finite value in output");
  }
  if (tape == nullptr) return out;
  return tape->record(std::move(out), std::move(parents), std::move(backward));
}

}  // namespace

Tensor relu(const Tensor& a) {
  Tensor out(a.shape());
  for (int i = 0; i < a.size(); ++i) out.data()[i] = a[i] > 0.0 ? a[i] : 0.0;
  Tape* tape = tape_of(a);
  const int pa = parent_of(a, tape);
  auto sa = a.storage();
  return finish(
      tape, std::move(out), {pa},
      [pa, sa](Tape& t, const std::vector<double>& g) {
        if (pa < 0) return;
        std::vector<double>& ga = t.grad(pa);
        for (std::size_t i = 0; i < g.size(); ++i)
          if (sa->values[i] > 0.0) ga[i] += g[i];
      },
      "relu");
}

Tensor softplus(const Tensor& a) {
  Tensor out(a.shape());
  for (int i = 0; i < a.size(); ++i) {
    const double x = a[i];
    out.data()[i] = x > 30.0 ? x : std::log1p(std::exp(x));
  }
  Tape* tape = tape_of(a);
  const int pa = parent_of(a, tape);
  auto sa = a.storage();
  return finish(
      tape, std::move(out), {pa},
      [pa, sa](Tape& t, const std::vector<double>& g) {
        if (pa < 0) return;
        std::vector<double>& ga = t.grad(pa);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double x = sa->values[i];
          ga[i] += g[i] / (1.0 + std::exp(-x));  // sigmoid
        }
      },
      "softplus");
}

Tensor softmax(const Tensor& a) {
  if (a.rank() < 1) throw std::invalid_argument("softmax: rank must be >= 1");
  const int c = a.dim(a.rank() - 1);
  const int rows = a.size() / c;
  Tensor out(a.shape());
  for (int r = 0; r < rows; ++r) {
    const double* in = a.data() + static_cast<std::ptrdiff_t>(r) * c;
    double* o = out.data() + static_cast<std::ptrdiff_t>(r) * c;
    double mx = in[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, in[j]);
    double denom = 0.0;
    for (int j = 0; j < c; ++j) {
      o[j] = std::exp(in[j] - mx);
      denom += o[j];
    }
    for (int j = 0; j < c; ++j) o[j] /= denom;
  }
  Tape* tape = tape_of(a);
  const int pa = parent_of(a, tape);
  auto so = out.storage();
  return finish(
      tape, std::move(out), {pa},
      [pa, so, rows, c](Tape& t, const std::vector<double>& g) {
        if (pa < 0) return;
        std::vector<double>& ga = t.grad(pa);
        for (int r = 0; r < rows; ++r) {
          const double* y = so->values.data() + static_cast<std::ptrdiff_t>(r) * c;
          const double* gr = g.data() + static_cast<std::ptrdiff_t>(r) * c;
          double dot = 0.0;
          for (int j = 0; j < c; ++j) dot += gr[j] * y[j];
          double* gar = ga.data() + static_cast<std::ptrdiff_t>(r) * c;
          for (int j = 0; j < c; ++j) gar[j] += (gr[j] - dot) * y[j];
        }
      },
      "softmax");
}

Tensor max_pool_blocks(const Tensor& a, int block) {
  if (a.rank() != 2) throw std::invalid_argument("max_pool_blocks: expected [rows, c]");
  const int rows = a.dim(0), c = a.dim(1);
  if (block < 1 || rows % block != 0) {
    throw std::invalid_argument("max_pool_blocks: row count not divisible by block");
  }
  const int b = rows / block;
  Tensor out({b, c});
  // argmax row per (block, channel); first maximum wins.
  std::vector<int> arg(static_cast<std::size_t>(b) * c);
  for (int bi = 0; bi < b; ++bi) {
    for (int j = 0; j < c; ++j) {
      int best = bi * block;
      double bv = a.data()[best * c + j];
      for (int r = 1; r < block; ++r) {
        const double v = a.data()[(bi * block + r) * c + j];
        if (v > bv) {
          bv = v;
          best = bi * block + r;
        }
      }
      out.data()[bi * c + j] = bv;
      arg[static_cast<std::size_t>(bi) * c + j] = best;
    }
  }
  Tape* tape = tape_of(a);
  const int pa = parent_of(a, tape);
  return finish(
      tape, std::move(out), {pa},
      [pa, arg = std::move(arg), b, c](Tape& t, const std::vector<double>& g) {
        if (pa < 0) return;
        std::vector<double>& ga = t.grad(pa);
        for (int bi = 0; bi < b; ++bi)
          for (int j = 0; j < c; ++j)
            ga[arg[static_cast<std::size_t>(bi) * c + j] * c + j] += g[bi * c + j];
      },
      "max_pool_blocks");
}

Tensor fully_connected(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2) throw std::invalid_argument("fully_connected: weights must be [in,out]");
  const int in = w.dim(0), out_c = w.dim(1);
  if (x.rank() < 1 || x.dim(x.rank() - 1) != in) {
    throw std::invalid_argument("fully_connected: trailing extent of input " +
                                shape_str(x.shape()) + " != " + std::to_string(in));
  }
  if (b.size() != out_c) throw std::invalid_argument("fully_connected: bias length mismatch");
  const int m = x.size() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_c;
  Tensor out(out_shape);
  const double* px = x.data();
  const double* pw = w.data();
  double* po = out.data();
  for (int i = 0; i < m; ++i) {
    double* orow = po + static_cast<std::ptrdiff_t>(i) * out_c;
    for (int j = 0; j < out_c; ++j) orow[j] = b[j];
    const double* xrow = px + static_cast<std::ptrdiff_t>(i) * in;
    for (int p = 0; p < in; ++p) {
      const double xv = xrow[p];
      if (xv == 0.0) continue;
      const double* wrow = pw + static_cast<std::ptrdiff_t>(p) * out_c;
      for (int j = 0; j < out_c; ++j) orow[j] += xv * wrow[j];
    }
  }
  Tape* tape = merge2(x, w);
  tape = tape ? tape : b.tape();
  if (b.tape() && tape != b.tape()) throw std::invalid_argument("inputs on different tapes");
  const int nx = parent_of(x, tape), nw = parent_of(w, tape), nb = parent_of(b, tape);
  auto sx = x.storage(), sw = w.storage();
  return finish(
      tape, std::move(out), {nx, nw, nb},
      [nx, nw, nb, sx, sw, m, in, out_c](Tape& t, const std::vector<double>& g) {
        if (nx >= 0) {
          std::vector<double>& gx = t.grad(nx);
          for (int i = 0; i < m; ++i) {
            const double* grow = g.data() + static_cast<std::ptrdiff_t>(i) * out_c;
            double* gxrow = gx.data() + static_cast<std::ptrdiff_t>(i) * in;
            for (int p = 0; p < in; ++p) {
              const double* wrow = sw->values.data() + static_cast<std::ptrdiff_t>(p) * out_c;
              double acc = 0.0;
              for (int j = 0; j < out_c; ++j) acc += grow[j] * wrow[j];
              gxrow[p] += acc;
            }
          }
        }
        if (nw >= 0) {
          std::vector<double>& gw = t.grad(nw);
          for (int i = 0; i < m; ++i) {
            const double* xrow = sx->values.data() + static_cast<std::ptrdiff_t>(i) * in;
            const double* grow = g.data() + static_cast<std::ptrdiff_t>(i) * out_c;
            for (int p = 0; p < in; ++p) {
              const double xv = xrow[p];
              if (xv == 0.0) continue;
              double* gwrow = gw.data() + static_cast<std::ptrdiff_t>(p) * out_c;
              for (int j = 0; j < out_c; ++j) gwrow[j] += xv * grow[j];
            }
          }
        }
        if (nb >= 0) {
          std::vector<double>& gb = t.grad(nb);
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < out_c; ++j) gb[j] += g[i * out_c + j];
        }
      },
      "fully_connected");
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BnMode mode,
                  std::vector<double>* running_mean, std::vector<double>* running_var,
                  bool update_running) {
  if (x.rank() != 2) throw std::invalid_argument("batch_norm: expected [n, c]");
  const int n = x.dim(0), c = x.dim(1);
  if (gamma.size() != c || beta.size() != c) {
    throw std::invalid_argument("batch_norm: gamma/beta length != channel count");
  }
  constexpr double kEps = 1e-5;
  constexpr double kMomentum = 0.9;

  std::vector<double> mean(c, 0.0), var(c, 0.0);
  if (mode == BnMode::kTrain) {
    if (n < 2) {
      throw std::invalid_argument("batch_norm: train mode requires n >= 2 rows, got " +
                                  std::to_string(n));
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) mean[j] += x.data()[i * c + j];
    for (int j = 0; j < c; ++j) mean[j] /= n;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) {
        const double d = x.data()[i * c + j] - mean[j];
        var[j] += d * d;
      }
    for (int j = 0; j < c; ++j) var[j] /= n;
    if (update_running && running_mean != nullptr && running_var != nullptr) {
      for (int j = 0; j < c; ++j) {
        (*running_mean)[j] = kMomentum * (*running_mean)[j] + (1.0 - kMomentum) * mean[j];
        (*running_var)[j] = kMomentum * (*running_var)[j] + (1.0 - kMomentum) * var[j];
      }
    }
  } else {
    if (running_mean == nullptr || running_var == nullptr) {
      throw std::invalid_argument("batch_norm: infer mode requires running statistics");
    }
    mean.assign(running_mean->begin(), running_mean->end());
    var.assign(running_var->begin(), running_var->end());
  }

  std::vector<double> inv_std(c);
  for (int j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + kEps);

  Tensor xhat({n, c});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j)
      xhat.data()[i * c + j] = (x.data()[i * c + j] - mean[j]) * inv_std[j];

  Tensor out({n, c});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j)
      out.data()[i * c + j] = xhat.data()[i * c + j] * gamma[j] + beta[j];

  Tape* tape = merge2(x, gamma);
  tape = tape ? tape : beta.tape();
  const int nx = parent_of(x, tape), ng = parent_of(gamma, tape), nb = parent_of(beta, tape);
  auto sxh = xhat.storage();
  auto sg = gamma.storage();
  const bool train = mode == BnMode::kTrain;
  return finish(
      tape, std::move(out), {nx, ng, nb},
      [nx, ng, nb, sxh, sg, inv_std, n, c, train](Tape& t, const std::vector<double>& g) {
        const double* xh = sxh->values.data();
        if (ng >= 0) {
          std::vector<double>& gg = t.grad(ng);
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < c; ++j) gg[j] += g[i * c + j] * xh[i * c + j];
        }
        if (nb >= 0) {
          std::vector<double>& gb = t.grad(nb);
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < c; ++j) gb[j] += g[i * c + j];
        }
        if (nx >= 0) {
          std::vector<double>& gx = t.grad(nx);
          if (!train) {
            for (int i = 0; i < n; ++i)
              for (int j = 0; j < c; ++j)
                gx[i * c + j] += g[i * c + j] * sg->values[j] * inv_std[j];
            return;
          }
          // Train mode: gradient through the batch statistics.
          for (int j = 0; j < c; ++j) {
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (int i = 0; i < n; ++i) {
              const double dxh = g[i * c + j] * sg->values[j];
              sum_dxhat += dxh;
              sum_dxhat_xhat += dxh * xh[i * c + j];
            }
            const double scale = inv_std[j] / n;
            for (int i = 0; i < n; ++i) {
              const double dxh = g[i * c + j] * sg->values[j];
              gx[i * c + j] +=
                  scale * (n * dxh - sum_dxhat - xh[i * c + j] * sum_dxhat_xhat);
            }
          }
        }
      },
      "batch_norm");
}

Tensor dropout(const Tensor& x, double keep_prob, bool train, Rng& rng) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw std::invalid_argument("dropout: keep probability must be in (0, 1]");
  }
  if (!train || keep_prob == 1.0) return x;
  Tensor out(x.shape());
  std::vector<double> mask(static_cast<std::size_t>(x.size()));
  const double inv_keep = 1.0 / keep_prob;
  for (int i = 0; i < x.size(); ++i) {
    mask[static_cast<std::size_t>(i)] = rng.uniform() < keep_prob ? inv_keep : 0.0;
    out.data()[i] = x[i] * mask[static_cast<std::size_t>(i)];
  }
  Tape* tape = tape_of(x);
  const int px = parent_of(x, tape);
  return finish(
      tape, std::move(out), {px},
      [px, mask = std::move(mask)](Tape& t, const std::vector<double>& g) {
        if (px < 0) return;
        std::vector<double>& gx = t.grad(px);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
      },
      "dropout");
}

}  // namespace deepicp::ad
