#include <cmath>
#include <cstring>

#include "deepicp/autodiff.hpp"

namespace deepicp::ad {

namespace {

bool g_finite_checks = false;

Tape* merge_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (!t->defined()) throw std::invalid_argument("op input tensor is undefined");
    if (t->tape() == nullptr) continue;
    if (tape != nullptr && tape != t->tape()) {
      throw std::invalid_argument("op inputs recorded on different tapes");
    }
    tape = t->tape();
  }
  return tape;
}

int parent_of(const Tensor& t, Tape* tape) {
  return (tape != nullptr && t.tape() == tape) ? t.node() : -1;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected rank-2 tensor, got " +
                                shape_str(a.shape()));
  }
}

Tensor finish(Tape* tape, Tensor out, std::vector<int> parents,
              Tape::BackwardFn backward, const char* op) {
  if (g_finite_checks && !out.all_finite()) {
    throw std::runtime_error(std::string(op) + ": non-finite value in output");
  }
  if (tape == nullptr) return out;
  return tape->record(std::move(out), std::move(parents), std::move(backward));
}

void axpy(std::vector<double>& dst, const std::vector<double>& g) {
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

}  // namespace

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks_enabled() { return g_finite_checks; }

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (int i = 0; i < a.size(); ++i) out.data()[i] = a[i] + b[i];
  Tape* tape = merge_tape({&a, &b});
  const int pa = parent_of(a, tape), pb = parent_of(b, tape);
  return finish(
      tape, std::move(out), {pa, pb},
      [pa, pb](Tape& t, const std::vector<double>& g) {
        if (pa >= 0) axpy(t.grad(pa), g);
        if (pb >= 0) axpy(t.grad(pb), g);
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (int i = 0; i < a.size(); ++i) out.data()[i] = a[i] - b[i];
  Tape* tape = merge_tape({&a, &b});
  const int pa = parent_of(a, tape), pb = parent_of(b, tape);
  return finish(
      tape, std::move(out), {pa, pb},
      [pa, pb](Tape& t, const std::vector<double>& g) {
        if (pa >= 0) axpy(t.grad(pa), g);
        if (pb >= 0) {
          std::vector<double>& gb = t.grad(pb);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
      },
      "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (int i = 0; i < a.size(); ++i) out.data()[i] = a[i] * b[i];
  Tape* tape = merge_tape({&a, &b});
  const int pa = parent_of(a, tape), pb = parent_of(b, tape);
  auto sa = a.storage(), sb = b.storage();
  return finish(
      tape, std::move(out), {pa, pb},
      [pa, pb, sa, sb](Tape& t, const std::vector<double>& g) {
        if (pa >= 0) {
          std::vector<double>& ga = t.grad(pa);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * sb->values[i];
        }
        if (pb >= 0) {
          std::vector<double>& gb = t.grad(pb);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * sa->values[i];
        }
      },
      "mul");
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor abs_val(const Tensor& a) {
  Tensor out(a.shape());
  for (int i = 0; i < a.size(); ++i) out.data()[i] = std::abs(a[i]);
  Tape* tape = merge_tape({&a});
  const int pa = parent_of(a, tape);
  auto sa = a.storage();
  return finish(
      tape, std::move(out), {pa},
      [pa, sa](Tape& t, const std::vector<double>& g) {
        if (pa < 0) return;
        std::vector<double>& ga = t.grad(pa);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double x = sa->values[i];
          ga[i] += g[i] * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
        }
      },
      "abs");
}

Tensor add_scalar(const Tensor& a, double s) {
  Tensor out(a.shape());
  for (int i = 0; i < a.size(); ++i) out.data()[i] = a[i] + s;
  Tape* tape = merge_tape({&a});
  const int pa = parent_of(a, tape);
  return finish(
      tape, std::move(out), {pa},
      [pa](Tape& t, const std::vector<double>& g) {
        if (pa >= 0) axpy(t.grad(pa), g);
      },
      "add_scalar");
}

Tensor mul_scalar(const Tensor& a, double s) {
  Tensor out(a.shape());
  for (int i = 0; i < a.size(); ++i) out.data()[i] = a[i] * s;
  Tape* tape = merge_tape({&a});
  const int pa = parent_of(a, tape);
  return finish(
      tape, std::move(out), {pa},
      [pa, s](Tape& t, const std::vector<double>& g) {
        if (pa < 0) return;
        std::vector<double>& ga = t.grad(pa);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
      },
      "mul_scalar");
}

Tensor div_by_scalar(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) throw std::invalid_argument("div_by_scalar: divisor must be scalar");
  const double sv = s[0];
  if (sv == 0.0) throw std::invalid_argument("div_by_scalar: division by zero");
  Tensor out(a.shape());
  for (int i = 0; i < a.size(); ++i) out.data()[i] = a[i] / sv;
  Tape* tape = merge_tape({&a, &s});
  const int pa = parent_of(a, tape), ps = parent_of(s, tape);
  auto sa = a.storage();
  return finish(
      tape, std::move(out), {pa, ps},
      [pa, ps, sa, sv](Tape& t, const std::vector<double>& g) {
        if (pa >= 0) {
          std::vector<double>& ga = t.grad(pa);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / sv;
        }
        if (ps >= 0) {
          double acc = 0.0;
          for (std::size_t i = 0; i < g.size(); ++i) acc -= g[i] * sa->values[i];
          t.grad(ps)[0] += acc / (sv * sv);
        }
      },
      "div_by_scalar");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw std::invalid_argument("matmul: inner extents differ, " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
  }
  Tensor out({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (int i = 0; i < m; ++i) {
    const double* arow = pa + static_cast<std::ptrdiff_t>(i) * k;
    double* orow = po + static_cast<std::ptrdiff_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = pb + static_cast<std::ptrdiff_t>(p) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  Tape* tape = merge_tape({&a, &b});
  const int na = parent_of(a, tape), nb = parent_of(b, tape);
  auto sa = a.storage(), sb = b.storage();
  return finish(
      tape, std::move(out), {na, nb},
      [na, nb, sa, sb, m, k, n](Tape& t, const std::vector<double>& g) {
        if (na >= 0) {
          // dA = G * B^T
          std::vector<double>& ga = t.grad(na);
          for (int i = 0; i < m; ++i) {
            const double* grow = g.data() + static_cast<std::ptrdiff_t>(i) * n;
            double* garow = ga.data() + static_cast<std::ptrdiff_t>(i) * k;
            for (int p = 0; p < k; ++p) {
              const double* brow = sb->values.data() + static_cast<std::ptrdiff_t>(p) * n;
              double acc = 0.0;
              for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
              garow[p] += acc;
            }
          }
        }
        if (nb >= 0) {
          // dB = A^T * G
          std::vector<double>& gb = t.grad(nb);
          for (int i = 0; i < m; ++i) {
            const double* arow = sa->values.data() + static_cast<std::ptrdiff_t>(i) * k;
            const double* grow = g.data() + static_cast<std::ptrdiff_t>(i) * n;
            for (int p = 0; p < k; ++p) {
              const double av = arow[p];
              if (av == 0.0) continue;
              double* gbrow = gb.data() + static_cast<std::ptrdiff_t>(p) * n;
              for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
            }
          }
        }
      },
      "matmul");
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const int m = a.dim(0), n = a.dim(1);
  Tensor out({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.data()[j * m + i] = a.data()[i * n + j];
  Tape* tape = merge_tape({&a});
  const int pa = parent_of(a, tape);
  return finish(
      tape, std::move(out), {pa},
      [pa, m, n](Tape& t, const std::vector<double>& g) {
        if (pa < 0) return;
        std::vector<double>& ga = t.grad(pa);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
      },
      "transpose");
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw std::invalid_argument("reshape: element count differs, " +
                                shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  // Same buffer, new shape; gradient passes through flat.
  Tensor out(std::move(shape), a.values());
  Tape* tape = merge_tape({&a});
  const int pa = parent_of(a, tape);
  return finish(
      tape, std::move(out), {pa},
      [pa](Tape& t, const std::vector<double>& g) {
        if (pa >= 0) axpy(t.grad(pa), g);
      },
      "reshape");
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_matrix(a, "concat_cols");
  require_matrix(b, "concat_cols");
  if (a.dim(0) != b.dim(0)) {
    throw std::invalid_argument("concat_cols: row counts differ");
  }
  const int m = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  Tensor out({m, ca + cb});
  for (int i = 0; i < m; ++i) {
    std::memcpy(out.data() + i * (ca + cb), a.data() + i * ca, sizeof(double) * ca);
    std::memcpy(out.data() + i * (ca + cb) + ca, b.data() + i * cb, sizeof(double) * cb);
  }
  Tape* tape = merge_tape({&a, &b});
  const int pa = parent_of(a, tape), pb = parent_of(b, tape);
  return finish(
      tape, std::move(out), {pa, pb},
      [pa, pb, m, ca, cb](Tape& t, const std::vector<double>& g) {
        if (pa >= 0) {
          std::vector<double>& ga = t.grad(pa);
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < ca; ++j) ga[i * ca + j] += g[i * (ca + cb) + j];
        }
        if (pb >= 0) {
          std::vector<double>& gb = t.grad(pb);
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < cb; ++j) gb[i * cb + j] += g[i * (ca + cb) + ca + j];
        }
      },
      "concat_cols");
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const int c = parts[0].rank() == 2 ? parts[0].dim(1) : parts[0].size();
  int rows = 0;
  for (const Tensor& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.dim(1) != c) throw std::invalid_argument("concat_rows: column counts differ");
    rows += p.dim(0);
  }
  Tensor out({rows, c});
  int at = 0;
  for (const Tensor& p : parts) {
    std::memcpy(out.data() + static_cast<std::ptrdiff_t>(at) * c, p.data(),
                sizeof(double) * static_cast<std::size_t>(p.size()));
    at += p.dim(0);
  }
  std::vector<const Tensor*> refs;
  refs.reserve(parts.size());
  for (const Tensor& p : parts) refs.push_back(&p);
  Tape* tape = nullptr;
  for (const Tensor* p : refs) {
    Tape* pt = merge_tape({p});
    if (pt != nullptr) {
      if (tape != nullptr && tape != pt)
        throw std::invalid_argument("concat_rows: inputs on different tapes");
      tape = pt;
    }
  }
  std::vector<int> parents;
  std::vector<int> offsets;
  std::vector<int> sizes;
  int off = 0;
  for (const Tensor& p : parts) {
    parents.push_back(parent_of(p, tape));
    offsets.push_back(off);
    sizes.push_back(p.size());
    off += p.size();
  }
  return finish(
      tape, std::move(out), parents,
      [parents, offsets, sizes](Tape& t, const std::vector<double>& g) {
        for (std::size_t k = 0; k < parents.size(); ++k) {
          if (parents[k] < 0) continue;
          std::vector<double>& gp = t.grad(parents[k]);
          for (int i = 0; i < sizes[k]; ++i) gp[i] += g[offsets[k] + i];
        }
      },
      "concat_rows");
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& idx) {
  require_matrix(a, "gather_rows");
  const int m = a.dim(0), c = a.dim(1);
  for (int i : idx) {
    if (i < 0 || i >= m) throw std::out_of_range("gather_rows: index out of range");
  }
  Tensor out({static_cast<int>(idx.size()), c});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::memcpy(out.data() + r * c, a.data() + static_cast<std::ptrdiff_t>(idx[r]) * c,
                sizeof(double) * c);
  }
  Tape* tape = merge_tape({&a});
  const int pa = parent_of(a, tape);
  return finish(
      tape, std::move(out), {pa},
      [pa, idx, c](Tape& t, const std::vector<double>& g) {
        if (pa < 0) return;
        std::vector<double>& ga = t.grad(pa);
        for (std::size_t r = 0; r < idx.size(); ++r)
          for (int j = 0; j < c; ++j) ga[idx[r] * c + j] += g[r * c + j];
      },
      "gather_rows");
}

Tensor repeat_rows(const Tensor& row, int n) {
  if (n < 1) throw std::invalid_argument("repeat_rows: n must be >= 1");
  const int c = row.size();
  if (row.rank() == 2 && row.dim(0) != 1) {
    throw std::invalid_argument("repeat_rows: expected a single row");
  }
  Tensor out({n, c});
  for (int i = 0; i < n; ++i)
    std::memcpy(out.data() + static_cast<std::ptrdiff_t>(i) * c, row.data(),
                sizeof(double) * c);
  Tape* tape = merge_tape({&row});
  const int pr = parent_of(row, tape);
  return finish(
      tape, std::move(out), {pr},
      [pr, n, c](Tape& t, const std::vector<double>& g) {
        if (pr < 0) return;
        std::vector<double>& gr = t.grad(pr);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < c; ++j) gr[j] += g[i * c + j];
      },
      "repeat_rows");
}

namespace {

Tensor rowvec_binary(const Tensor& a, const Tensor& v, double sign, const char* op) {
  require_matrix(a, op);
  const int m = a.dim(0), c = a.dim(1);
  if (v.size() != c) {
    throw std::invalid_argument(std::string(op) + ": vector length " +
                                std::to_string(v.size()) + " != column count " +
                                std::to_string(c));
  }
  Tensor out({m, c});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < c; ++j) out.data()[i * c + j] = a.data()[i * c + j] + sign * v[j];
  Tape* tape = merge_tape({&a, &v});
  const int pa = parent_of(a, tape), pv = parent_of(v, tape);
  return finish(
      tape, std::move(out), {pa, pv},
      [pa, pv, m, c, sign](Tape& t, const std::vector<double>& g) {
        if (pa >= 0) axpy(t.grad(pa), g);
        if (pv >= 0) {
          std::vector<double>& gv = t.grad(pv);
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < c; ++j) gv[j] += sign * g[i * c + j];
        }
      },
      op);
}

}  // namespace

Tensor add_rowvec(const Tensor& a, const Tensor& v) { return rowvec_binary(a, v, 1.0, "add_rowvec"); }
Tensor sub_rowvec(const Tensor& a, const Tensor& v) { return rowvec_binary(a, v, -1.0, "sub_rowvec"); }

Tensor scale_rows(const Tensor& a, const Tensor& s) {
  require_matrix(a, "scale_rows");
  const int m = a.dim(0), c = a.dim(1);
  if (s.size() != m) {
    throw std::invalid_argument("scale_rows: scale length != row count");
  }
  Tensor out({m, c});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < c; ++j) out.data()[i * c + j] = a.data()[i * c + j] * s[i];
  Tape* tape = merge_tape({&a, &s});
  const int pa = parent_of(a, tape), ps = parent_of(s, tape);
  auto sa = a.storage(), ss = s.storage();
  return finish(
      tape, std::move(out), {pa, ps},
      [pa, ps, sa, ss, m, c](Tape& t, const std::vector<double>& g) {
        if (pa >= 0) {
          std::vector<double>& ga = t.grad(pa);
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < c; ++j) ga[i * c + j] += g[i * c + j] * ss->values[i];
        }
        if (ps >= 0) {
          std::vector<double>& gs = t.grad(ps);
          for (int i = 0; i < m; ++i) {
            double acc = 0.0;
            for (int j = 0; j < c; ++j) acc += g[i * c + j] * sa->values[i * c + j];
            gs[i] += acc;
          }
        }
      },
      "scale_rows");
}

Tensor slice_rows(const Tensor& a, int begin, int count) {
  require_matrix(a, "slice_rows");
  const int m = a.dim(0), c = a.dim(1);
  if (begin < 0 || count < 1 || begin + count > m) {
    throw std::out_of_range("slice_rows: range out of bounds");
  }
  Tensor out({count, c});
  std::memcpy(out.data(), a.data() + static_cast<std::ptrdiff_t>(begin) * c,
              sizeof(double) * static_cast<std::size_t>(count) * c);
  Tape* tape = merge_tape({&a});
  const int pa = parent_of(a, tape);
  return finish(
      tape, std::move(out), {pa},
      [pa, begin, count, c](Tape& t, const std::vector<double>& g) {
        if (pa < 0) return;
        std::vector<double>& ga = t.grad(pa);
        for (int i = 0; i < count; ++i)
          for (int j = 0; j < c; ++j) ga[(begin + i) * c + j] += g[i * c + j];
      },
      "slice_rows");
}

Tensor sum_all(const Tensor& a) {
  double acc = 0.0;
  for (int i = 0; i < a.size(); ++i) acc += a[i];
  Tensor out = Tensor::scalar(acc);
  Tape* tape = merge_tape({&a});
  const int pa = parent_of(a, tape);
  const int n = a.size();
  return finish(
      tape, std::move(out), {pa},
      [pa, n](Tape& t, const std::vector<double>& g) {
        if (pa < 0) return;
        std::vector<double>& ga = t.grad(pa);
        for (int i = 0; i < n; ++i) ga[i] += g[0];
      },
      "sum_all");
}

Tensor mean_all(const Tensor& a) {
  return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

Tensor sum_cols(const Tensor& a) {
  require_matrix(a, "sum_cols");
  const int m = a.dim(0), c = a.dim(1);
  Tensor out({c});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < c; ++j) out.data()[j] += a.data()[i * c + j];
  Tape* tape = merge_tape({&a});
  const int pa = parent_of(a, tape);
  return finish(
      tape, std::move(out), {pa},
      [pa, m, c](Tape& t, const std::vector<double>& g) {
        if (pa < 0) return;
        std::vector<double>& ga = t.grad(pa);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < c; ++j) ga[i * c + j] += g[j];
      },
      "sum_cols");
}

Tensor sum_blocks(const Tensor& a, int block) {
  require_matrix(a, "sum_blocks");
  const int rows = a.dim(0), c = a.dim(1);
  if (block < 1 || rows % block != 0) {
    throw std::invalid_argument("sum_blocks: row count not divisible by block");
  }
  const int b = rows / block;
  Tensor out({b, c});
  for (int i = 0; i < rows; ++i) {
    const int bi = i / block;
    for (int j = 0; j < c; ++j) out.data()[bi * c + j] += a.data()[i * c + j];
  }
  Tape* tape = merge_tape({&a});
  const int pa = parent_of(a, tape);
  return finish(
      tape, std::move(out), {pa},
      [pa, rows, c, block](Tape& t, const std::vector<double>& g) {
        if (pa < 0) return;
        std::vector<double>& ga = t.grad(pa);
        for (int i = 0; i < rows; ++i) {
          const int bi = i / block;
          for (int j = 0; j < c; ++j) ga[i * c + j] += g[bi * c + j];
        }
      },
      "sum_blocks");
}

}  // namespace deepicp::ad
