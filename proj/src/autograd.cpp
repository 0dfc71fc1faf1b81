#include "relcp/autograd.hpp"

#include <cmath>
#include <stdexcept>

#include "relcp/kernels.hpp"

namespace relcp::ad {

template <typename S>
Var<S> Tape<S>::constant(Matrix<S> value) {
  nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
  return {this, nodes_.size() - 1};
}

template <typename S>
Var<S> Tape<S>::param(Parameter<S>& p) {
  nodes_.push_back(Node{p.value, {}, !p.frozen, &p, {}});
  return {this, nodes_.size() - 1};
}

template <typename S>
Var<S> Tape<S>::record(Matrix<S> value, std::initializer_list<Var<S>> parents, Backward backward) {
  bool needs = false;
  for (const auto& p : parents) needs = needs || nodes_[p.id].needs_grad;
  nodes_.push_back(Node{std::move(value), {}, needs, nullptr, needs ? std::move(backward) : Backward{}});
  return {this, nodes_.size() - 1};
}

template <typename S>
Matrix<S>& Tape<S>::grad(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad.resize(n.value.rows(), n.value.cols());
  return n.grad;
}

template <typename S>
void Tape<S>::backward(Var<S> loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw std::invalid_argument("backward: loss must be 1x1, got " + shape_str(loss.value()));
  }
  if (!nodes_[loss.id].needs_grad) return;
  grad(loss.id)(0, 0) = S(1);
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    auto& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.param != nullptr) {
      auto& pg = n.param->grad;
      if (pg.empty()) pg.resize(n.value.rows(), n.value.cols());
      auto src = n.grad.flat();
      auto dst = pg.flat();
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
    } else if (n.backward) {
      n.backward(*this, id);
    }
  }
}

namespace {

template <typename S>
void require_same(const Var<S>& a, const Var<S>& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.value()) +
                                " vs " + shape_str(b.value()));
  }
}

template <typename S>
void accumulate(Matrix<S>& dst, const Matrix<S>& src) {
  auto d = dst.flat();
  auto s = src.flat();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

template <typename S, typename F>
Matrix<S> map(const Matrix<S>& a, F f) {
  Matrix<S> out(a.rows(), a.cols());
  auto src = a.flat();
  auto dst = out.flat();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

}  // namespace

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw std::invalid_argument("matmul: shape mismatch " + shape_str(av) + " * " + shape_str(bv));
  }
  Matrix<S> out = kernels::matmul(av, bv);
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& av = t.value(a.id);
    const auto& bv = t.value(b.id);
    if (t.needs_grad(a.id)) {
      // dA += G * B^T
      const Matrix<S> bt = bv.transposed();
      kernels::gemm_nn(g.data(), bt.data(), t.grad(a.id).data(), g.rows(), g.cols(), bt.cols());
    }
    if (t.needs_grad(b.id)) {
      // dB += A^T * G
      kernels::gemm_tn(av.data(), g.data(), t.grad(b.id).data(), av.rows(), av.cols(), g.cols());
    }
  });
}

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  require_same(a, b, "add");
  Matrix<S> out = a.value();
  accumulate(out, b.value());
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(a.id)) accumulate(t.grad(a.id), g);
    if (t.needs_grad(b.id)) accumulate(t.grad(b.id), g);
  });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  require_same(a, b, "sub");
  Matrix<S> out = a.value();
  auto o = out.flat();
  auto bv = b.value().flat();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(a.id)) accumulate(t.grad(a.id), g);
    if (t.needs_grad(b.id)) {
      auto d = t.grad(b.id).flat();
      auto gs = g.flat();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= gs[i];
    }
  });
}

template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  require_same(a, b, "mul");
  Matrix<S> out(a.rows(), a.cols());
  {
    auto o = out.flat();
    auto av = a.value().flat();
    auto bv = b.value().flat();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * bv[i];
  }
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<S>& t, std::size_t self) {
    auto g = t.grad(self).flat();
    if (t.needs_grad(a.id)) {
      auto d = t.grad(a.id).flat();
      auto bv = t.value(b.id).flat();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (t.needs_grad(b.id)) {
      auto d = t.grad(b.id).flat();
      auto av = t.value(a.id).flat();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

template <typename S>
Var<S> add_row(Var<S> a, Var<S> bias) {
  const auto& av = a.value();
  const auto& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw std::invalid_argument("add_row: bias " + shape_str(bv) + " does not match " +
                                shape_str(av));
  }
  Matrix<S> out = av;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv(0, c);
  }
  return a.tape->record(std::move(out), {a, bias}, [a, bias](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(a.id)) accumulate(t.grad(a.id), g);
    if (t.needs_grad(bias.id)) kernels::colsum(g.data(), t.grad(bias.id).data(), g.rows(), g.cols());
  });
}

template <typename S>
Var<S> scale(Var<S> a, S factor) {
  Matrix<S> out = map(a.value(), [factor](S v) { return v * factor; });
  return a.tape->record(std::move(out), {a}, [a, factor](Tape<S>& t, std::size_t self) {
    auto g = t.grad(self).flat();
    auto d = t.grad(a.id).flat();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * factor;
  });
}

template <typename S>
Var<S> one_minus(Var<S> a) {
  Matrix<S> out = map(a.value(), [](S v) { return S(1) - v; });
  return a.tape->record(std::move(out), {a}, [a](Tape<S>& t, std::size_t self) {
    auto g = t.grad(self).flat();
    auto d = t.grad(a.id).flat();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
  });
}

template <typename S>
Var<S> sigmoid(Var<S> a) {
  Matrix<S> out = map(a.value(), [](S v) { return S(1) / (S(1) + std::exp(-v)); });
  return a.tape->record(std::move(out), {a}, [a](Tape<S>& t, std::size_t self) {
    auto g = t.grad(self).flat();
    auto y = t.value(self).flat();
    auto d = t.grad(a.id).flat();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * y[i] * (S(1) - y[i]);
  });
}

template <typename S>
Var<S> tanh(Var<S> a) {
  Matrix<S> out = map(a.value(), [](S v) { return std::tanh(v); });
  return a.tape->record(std::move(out), {a}, [a](Tape<S>& t, std::size_t self) {
    auto g = t.grad(self).flat();
    auto y = t.value(self).flat();
    auto d = t.grad(a.id).flat();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * (S(1) - y[i] * y[i]);
  });
}

template <typename S>
Var<S> relu(Var<S> a) {
  Matrix<S> out = map(a.value(), [](S v) { return v > S(0) ? v : S(0); });
  return a.tape->record(std::move(out), {a}, [a](Tape<S>& t, std::size_t self) {
    auto g = t.grad(self).flat();
    auto x = t.value(a.id).flat();
    auto d = t.grad(a.id).flat();
    for (std::size_t i = 0; i < d.size(); ++i)
      if (x[i] > S(0)) d[i] += g[i];
  });
}

template <typename S>
Var<S> concat_cols(std::span<const Var<S>> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix<S> out(rows, cols);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const auto& v = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      auto src = v.row(r);
      std::copy(src.begin(), src.end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(off));
    }
    off += v.cols();
  }
  std::vector<Var<S>> ps(parts.begin(), parts.end());
  Tape<S>* tape = parts[0].tape;
  bool needs = false;
  for (const auto& p : ps) needs = needs || tape->needs_grad(p.id);
  // record() takes an initializer_list, so route parents through the first one
  // and gate on the aggregate flag computed above.
  auto backward = [ps, offsets](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    for (std::size_t k = 0; k < ps.size(); ++k) {
      if (!t.needs_grad(ps[k].id)) continue;
      auto& d = t.grad(ps[k].id);
      for (std::size_t r = 0; r < d.rows(); ++r) {
        auto dst = d.row(r);
        auto src = g.row(r);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[offsets[k] + c];
      }
    }
  };
  if (!needs) return tape->constant(std::move(out));
  auto anchor = ps[0];
  for (const auto& p : ps)
    if (tape->needs_grad(p.id)) anchor = p;
  return tape->record(std::move(out), {anchor}, std::move(backward));
}

template <typename S>
Var<S> slice_cols(Var<S> a, std::size_t begin, std::size_t end) {
  const auto& av = a.value();
  if (begin > end || end > av.cols()) throw std::invalid_argument("slice_cols: bad range");
  Matrix<S> out(av.rows(), end - begin);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    auto src = av.row(r);
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(begin),
              src.begin() + static_cast<std::ptrdiff_t>(end), out.row(r).begin());
  }
  return a.tape->record(std::move(out), {a}, [a, begin](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& d = t.grad(a.id);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto src = g.row(r);
      auto dst = d.row(r);
      for (std::size_t c = 0; c < src.size(); ++c) dst[begin + c] += src[c];
    }
  });
}

template <typename S>
Var<S> gather_rows(Var<S> a, std::vector<std::size_t> index) {
  const auto& av = a.value();
  Matrix<S> out(index.size(), av.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= av.rows()) throw std::out_of_range("gather_rows: index out of range");
    auto src = av.row(index[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return a.tape->record(std::move(out), {a}, [a, index = std::move(index)](Tape<S>& t,
                                                                           std::size_t self) {
    const auto& g = t.grad(self);
    auto& d = t.grad(a.id);
    for (std::size_t r = 0; r < index.size(); ++r) {
      auto src = g.row(r);
      auto dst = d.row(index[r]);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

template <typename S>
Var<S> scale_rows(Var<S> a, std::vector<S> factors) {
  const auto& av = a.value();
  if (factors.size() != av.rows()) throw std::invalid_argument("scale_rows: factor count");
  Matrix<S> out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (auto& v : out.row(r)) v *= factors[r];
  return a.tape->record(std::move(out), {a}, [a, factors = std::move(factors)](Tape<S>& t,
                                                                               std::size_t self) {
    const auto& g = t.grad(self);
    auto& d = t.grad(a.id);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto src = g.row(r);
      auto dst = d.row(r);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c] * factors[r];
    }
  });
}

template <typename S>
Var<S> batched_left_matmul(Var<S> adj, Var<S> h, std::size_t batch) {
  const auto& av = adj.value();
  const auto& hv = h.value();
  const std::size_t n = av.cols();
  if (av.rows() != n || hv.rows() != batch * n) {
    throw std::invalid_argument("batched_left_matmul: adjacency " + shape_str(av) +
                                " incompatible with states " + shape_str(hv));
  }
  const std::size_t f = hv.cols();
  Matrix<S> out(hv.rows(), f);
  for (std::size_t b = 0; b < batch; ++b)
    kernels::gemm_nn(av.data(), hv.data() + b * n * f, out.data() + b * n * f, n, n, f);
  return adj.tape->record(std::move(out), {adj, h}, [adj, h, batch, n, f](Tape<S>& t,
                                                                          std::size_t self) {
    const auto& g = t.grad(self);
    const auto& av = t.value(adj.id);
    const auto& hv = t.value(h.id);
    if (t.needs_grad(h.id)) {
      auto& dh = t.grad(h.id);
      for (std::size_t b = 0; b < batch; ++b)
        kernels::gemm_tn(av.data(), g.data() + b * n * f, dh.data() + b * n * f, n, n, f);
    }
    if (t.needs_grad(adj.id)) {
      // dA += sum_b G_b * H_b^T
      auto& da = t.grad(adj.id);
      for (std::size_t b = 0; b < batch; ++b) {
        const S* gb = g.data() + b * n * f;
        const S* hb = hv.data() + b * n * f;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            S acc = S(0);
            for (std::size_t c = 0; c < f; ++c) acc += gb[i * f + c] * hb[j * f + c];
            da(i, j) += acc;
          }
      }
    }
  });
}

template <typename S>
Var<S> mae_loss(Var<S> pred, const Matrix<S>& target) {
  const auto& pv = pred.value();
  if (!pv.same_shape(target)) throw std::invalid_argument("mae_loss: shape mismatch");
  double acc = 0.0;
  auto p = pv.flat();
  auto y = target.flat();
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(static_cast<double>(p[i] - y[i]));
  const double n = static_cast<double>(p.size());
  Matrix<S> out(1, 1, static_cast<S>(acc / n));
  return pred.tape->record(std::move(out), {pred}, [pred, target, n](Tape<S>& t, std::size_t self) {
    const S g = t.grad(self)(0, 0) / static_cast<S>(n);
    auto p = t.value(pred.id).flat();
    auto y = target.flat();
    auto d = t.grad(pred.id).flat();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const S diff = p[i] - y[i];
      d[i] += diff > S(0) ? g : (diff < S(0) ? -g : S(0));
    }
  });
}

template <typename S>
Var<S> pinball_loss(Var<S> pred, const Matrix<S>& target, std::span<const double> levels) {
  const auto& pv = pred.value();
  if (target.rows() != pv.rows() || target.cols() != 1 || levels.size() != pv.cols()) {
    throw std::invalid_argument("pinball_loss: prediction " + shape_str(pv) + ", target " +
                                shape_str(target) + ", " + std::to_string(levels.size()) +
                                " levels");
  }
  std::vector<double> lv(levels.begin(), levels.end());
  double acc = 0.0;
  for (std::size_t r = 0; r < pv.rows(); ++r) {
    const double y = target(r, 0);
    for (std::size_t c = 0; c < pv.cols(); ++c) {
      const double q = pv(r, c);
      acc += q >= y ? (1.0 - lv[c]) * (q - y) : lv[c] * (y - q);
    }
  }
  const double n = static_cast<double>(pv.size());
  Matrix<S> out(1, 1, static_cast<S>(acc / n));
  return pred.tape->record(std::move(out), {pred}, [pred, target, lv, n](Tape<S>& t,
                                                                         std::size_t self) {
    const S g = t.grad(self)(0, 0) / static_cast<S>(n);
    const auto& p = t.value(pred.id);
    auto& d = t.grad(pred.id);
    for (std::size_t r = 0; r < p.rows(); ++r) {
      const S y = target(r, 0);
      for (std::size_t c = 0; c < p.cols(); ++c)
        d(r, c) += p(r, c) >= y ? g * static_cast<S>(1.0 - lv[c]) : -g * static_cast<S>(lv[c]);
    }
  });
}

#define RELCP_INSTANTIATE(S)                                                            \
  template class Tape<S>;                                                               \
  template Var<S> matmul<S>(Var<S>, Var<S>);                                            \
  template Var<S> add<S>(Var<S>, Var<S>);                                               \
  template Var<S> sub<S>(Var<S>, Var<S>);                                               \
  template Var<S> mul<S>(Var<S>, Var<S>);                                               \
  template Var<S> add_row<S>(Var<S>, Var<S>);                                           \
  template Var<S> scale<S>(Var<S>, S);                                                  \
  template Var<S> one_minus<S>(Var<S>);                                                 \
  template Var<S> sigmoid<S>(Var<S>);                                                   \
  template Var<S> tanh<S>(Var<S>);                                                      \
  template Var<S> relu<S>(Var<S>);                                                      \
  template Var<S> concat_cols<S>(std::span<const Var<S>>);                              \
  template Var<S> slice_cols<S>(Var<S>, std::size_t, std::size_t);                      \
  template Var<S> gather_rows<S>(Var<S>, std::vector<std::size_t>);                     \
  template Var<S> scale_rows<S>(Var<S>, std::vector<S>);                                \
  template Var<S> batched_left_matmul<S>(Var<S>, Var<S>, std::size_t);                  \
  template Var<S> mae_loss<S>(Var<S>, const Matrix<S>&);                                \
  template Var<S> pinball_loss<S>(Var<S>, const Matrix<S>&, std::span<const double>);

RELCP_INSTANTIATE(float)
RELCP_INSTANTIATE(double)

#undef RELCP_INSTANTIATE

}  // namespace relcp::ad
