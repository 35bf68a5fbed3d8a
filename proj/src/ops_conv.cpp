#include <cmath>

#include "deepicp/autodiff.hpp"

namespace deepicp::ad {

namespace {

int parent_of(const Tensor& t, Tape* tape) {
  return (tape != nullptr && t.tape() == tape) ? t.node() : -1;
}

Tape* merge3(const Tensor& a, const Tensor& b, const Tensor& c) {
  Tape* tape = nullptr;
  for (const Tensor* t : {&a, &b, &c}) {
    if (t->tape() == nullptr) continue;
    if (tape && tape != t->tape()) throw std::invalid_argument("inputs on different tapes");
    tape = t->tape();
  }
  return tape;
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

Tensor conv3d(const Tensor& volume, const Tensor& kernels, const Tensor& bias) {
  if (volume.rank() != 4) throw std::invalid_argument("conv3d: volume must be [D,H,W,Cin]");
  if (kernels.rank() != 5 || kernels.dim(1) != 3 || kernels.dim(2) != 3 ||
      kernels.dim(3) != 3) {
    throw std::invalid_argument("conv3d: kernels must be [Cout,3,3,3,Cin]");
  }
  const int D = volume.dim(0), H = volume.dim(1), W = volume.dim(2), ci = volume.dim(3);
  const int co = kernels.dim(0);
  if (kernels.dim(4) != ci) {
    throw std::invalid_argument("conv3d: kernel channel count " +
                                std::to_string(kernels.dim(4)) + " != input channels " +
                                std::to_string(ci));
  }
  if (bias.size() != co) throw std::invalid_argument("conv3d: bias length mismatch");

  Tensor out({D, H, W, co});
  const double* pv = volume.data();
  const double* pk = kernels.data();
  double* po = out.data();
  auto vol_at = [&](int d, int h, int w) {
    return pv + (static_cast<std::ptrdiff_t>(d) * H * W + static_cast<std::ptrdiff_t>(h) * W + w) * ci;
  };
  for (int d = 0; d < D; ++d) {
    for (int h = 0; h < H; ++h) {
      for (int w = 0; w < W; ++w) {
        double* orow =
            po + (static_cast<std::ptrdiff_t>(d) * H * W + static_cast<std::ptrdiff_t>(h) * W + w) * co;
        for (int f = 0; f < co; ++f) orow[f] = bias[f];
        for (int dz = 0; dz < 3; ++dz) {
          const int nd = d + dz - 1;
          if (nd < 0 || nd >= D) continue;
          for (int dy = 0; dy < 3; ++dy) {
            const int nh = h + dy - 1;
            if (nh < 0 || nh >= H) continue;
            for (int dx = 0; dx < 3; ++dx) {
              const int nw = w + dx - 1;
              if (nw < 0 || nw >= W) continue;
              const double* in = vol_at(nd, nh, nw);
              const double* kbase = pk + (static_cast<std::ptrdiff_t>(dz) * 9 + dy * 3 + dx) * ci;
              for (int f = 0; f < co; ++f) {
                const double* kf = kbase + static_cast<std::ptrdiff_t>(f) * 27 * ci;
                double acc = 0.0;
                for (int c = 0; c < ci; ++c) acc += in[c] * kf[c];
                orow[f] += acc;
              }
            }
          }
        }
      }
    }
  }

  Tape* tape = merge3(volume, kernels, bias);
  const int nv = parent_of(volume, tape), nk = parent_of(kernels, tape),
            nb = parent_of(bias, tape);
  auto sv = volume.storage(), sk = kernels.storage();
  return finish(
      tape, std::move(out), {nv, nk, nb},
      [nv, nk, nb, sv, sk, D, H, W, ci, co](Tape& t, const std::vector<double>& g) {
        const double* pv = sv->values.data();
        const double* pk = sk->values.data();
        std::vector<double>* gv = nv >= 0 ? &t.grad(nv) : nullptr;
        std::vector<double>* gk = nk >= 0 ? &t.grad(nk) : nullptr;
        std::vector<double>* gb = nb >= 0 ? &t.grad(nb) : nullptr;
        for (int d = 0; d < D; ++d) {
          for (int h = 0; h < H; ++h) {
            for (int w = 0; w < W; ++w) {
              const double* grow =
                  g.data() +
                  (static_cast<std::ptrdiff_t>(d) * H * W + static_cast<std::ptrdiff_t>(h) * W + w) * co;
              if (gb) {
                for (int f = 0; f < co; ++f) (*gb)[f] += grow[f];
              }
              for (int dz = 0; dz < 3; ++dz) {
                const int nd = d + dz - 1;
                if (nd < 0 || nd >= D) continue;
                for (int dy = 0; dy < 3; ++dy) {
                  const int nh = h + dy - 1;
                  if (nh < 0 || nh >= H) continue;
                  for (int dx = 0; dx < 3; ++dx) {
                    const int nw = w + dx - 1;
                    if (nw < 0 || nw >= W) continue;
                    const std::ptrdiff_t in_off =
                        (static_cast<std::ptrdiff_t>(nd) * H * W +
                         static_cast<std::ptrdiff_t>(nh) * W + nw) *
                        ci;
                    const std::ptrdiff_t k_off = (static_cast<std::ptrdiff_t>(dz) * 9 + dy * 3 + dx) * ci;
                    for (int f = 0; f < co; ++f) {
                      const double gf = grow[f];
                      if (gf == 0.0) continue;
                      const std::ptrdiff_t kf_off = k_off + static_cast<std::ptrdiff_t>(f) * 27 * ci;
                      if (gv) {
                        double* gvrow = gv->data() + in_off;
                        const double* kf = pk + kf_off;
                        for (int c = 0; c < ci; ++c) gvrow[c] += gf * kf[c];
                      }
                      if (gk) {
                        double* gkrow = gk->data() + kf_off;
                        const double* in = pv + in_off;
                        for (int c = 0; c < ci; ++c) gkrow[c] += gf * in[c];
                      }
                    }
                  }
                }
              }
            }
          }
        }
      },
      "conv3d");
}

Tensor conv1d(const Tensor& seq, const Tensor& kernels, const Tensor& bias) {
  if (seq.rank() != 2) throw std::invalid_argument("conv1d: input must be [L,Cin]");
  if (kernels.rank() != 3 || kernels.dim(1) != 3) {
    throw std::invalid_argument("conv1d: kernels must be [Cout,3,Cin]");
  }
  const int L = seq.dim(0), ci = seq.dim(1), co = kernels.dim(0);
  if (kernels.dim(2) != ci) throw std::invalid_argument("conv1d: channel mismatch");
  if (bias.size() != co) throw std::invalid_argument("conv1d: bias length mismatch");

  Tensor out({L, co});
  for (int l = 0; l < L; ++l) {
    double* orow = out.data() + static_cast<std::ptrdiff_t>(l) * co;
    for (int f = 0; f < co; ++f) orow[f] = bias[f];
    for (int dz = 0; dz < 3; ++dz) {
      const int nl = l + dz - 1;
      if (nl < 0 || nl >= L) continue;
      const double* in = seq.data() + static_cast<std::ptrdiff_t>(nl) * ci;
      for (int f = 0; f < co; ++f) {
        const double* kf = kernels.data() + (static_cast<std::ptrdiff_t>(f) * 3 + dz) * ci;
        double acc = 0.0;
        for (int c = 0; c < ci; ++c) acc += in[c] * kf[c];
        orow[f] += acc;
      }
    }
  }

  Tape* tape = merge3(seq, kernels, bias);
  const int ns = parent_of(seq, tape), nk = parent_of(kernels, tape),
            nb = parent_of(bias, tape);
  auto ss = seq.storage(), sk = kernels.storage();
  return finish(
      tape, std::move(out), {ns, nk, nb},
      [ns, nk, nb, ss, sk, L, ci, co](Tape& t, const std::vector<double>& g) {
        std::vector<double>* gs = ns >= 0 ? &t.grad(ns) : nullptr;
        std::vector<double>* gk = nk >= 0 ? &t.grad(nk) : nullptr;
        std::vector<double>* gb = nb >= 0 ? &t.grad(nb) : nullptr;
        for (int l = 0; l < L; ++l) {
          const double* grow = g.data() + static_cast<std::ptrdiff_t>(l) * co;
          if (gb) {
            for (int f = 0; f < co; ++f) (*gb)[f] += grow[f];
          }
          for (int dz = 0; dz < 3; ++dz) {
            const int nl = l + dz - 1;
            if (nl < 0 || nl >= L) continue;
            for (int f = 0; f < co; ++f) {
              const double gf = grow[f];
              if (gf == 0.0) continue;
              const std::ptrdiff_t k_off = (static_cast<std::ptrdiff_t>(f) * 3 + dz) * ci;
              if (gs) {
                double* gsrow = gs->data() + static_cast<std::ptrdiff_t>(nl) * ci;
                const double* kf = sk->values.data() + k_off;
                for (int c = 0; c < ci; ++c) gsrow[c] += gf * kf[c];
              }
              if (gk) {
                double* gkrow = gk->data() + k_off;
                const double* in = ss->values.data() + static_cast<std::ptrdiff_t>(nl) * ci;
                for (int c = 0; c < ci; ++c) gkrow[c] += gf * in[c];
              }
            }
          }
        }
      },
      "conv1d");
}

}  // namespace deepicp::ad
