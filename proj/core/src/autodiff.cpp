#include "brainstorm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace brainstorm::ad {

namespace {

void check_finite(const std::vector<double>& data, const char* op) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw std::domain_error(std::string(op) + ": non-finite input at index " +
                              std::to_string(i));
    }
  }
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor{{1}, {v}, requires_grad, std::nullopt};
}

Tensor Tensor::vector(std::vector<double> v, bool requires_grad) {
  Shape s{v.size()};
  return Tensor{std::move(s), std::move(v), requires_grad, std::nullopt};
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v,
                      bool requires_grad) {
  if (v.size() != rows * cols) throw std::invalid_argument("Tensor::matrix: size mismatch");
  return Tensor{{rows, cols}, std::move(v), requires_grad, std::nullopt};
}

double Tensor::item() const {
  if (numel(shape) != 1) throw std::invalid_argument("Tensor::item: not a scalar");
  return data[0];
}

Var Tape::push(Tensor t, std::vector<std::size_t> parents,
               std::function<void(Tape&, std::size_t)> backprop) {
  if (t.data.size() != numel(t.shape)) {
    throw std::invalid_argument("Tensor: data length does not match shape");
  }
  bool needs = t.requires_grad;
  for (auto p : parents) needs = needs || nodes_[p].needs_grad;
  nodes_.push_back(Node{std::move(t), std::move(parents), std::move(backprop), needs});
  return Var{nodes_.size() - 1};
}

Tape::Node& Tape::node(Var v) {
  if (v.idx >= nodes_.size()) throw std::invalid_argument("Var: not on this tape");
  return nodes_[v.idx];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.idx >= nodes_.size()) throw std::invalid_argument("Var: not on this tape");
  return nodes_[v.idx];
}

std::vector<double>& Tape::grad_buf(std::size_t idx) { return *nodes_[idx].t.grad; }

Var Tape::leaf(Tensor t) { return push(std::move(t), {}, nullptr); }

Var Tape::scalar(double v) { return leaf(Tensor::scalar(v)); }

Var Tape::constant_vector(std::vector<double> v) { return leaf(Tensor::vector(std::move(v))); }

const Tensor& Tape::value(Var v) const { return node(v).t; }

const std::vector<double>& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!n.t.grad) throw std::logic_error("grad: backward() has not run");
  return *n.t.grad;
}

Var Tape::add(Var a, Var b) {
  const Tensor& ta = node(a).t;
  const Tensor& tb = node(b).t;
  if (same_shape(ta.shape, tb.shape)) {
    std::vector<double> out(ta.data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta.data[i] + tb.data[i];
    return push(Tensor{ta.shape, std::move(out)}, {a.idx, b.idx},
                [](Tape& t, std::size_t self) {
                  const auto& g = t.grad_buf(self);
                  auto& ga = t.grad_buf(t.nodes_[self].parents[0]);
                  auto& gb = t.grad_buf(t.nodes_[self].parents[1]);
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    ga[i] += g[i];
                    gb[i] += g[i];
                  }
                });
  }
  // Row broadcast: {m,n} + {n}; the vector is added to every row.
  if (ta.shape.size() == 2 && tb.shape.size() == 1 && ta.shape[1] == tb.shape[0]) {
    const std::size_t m = ta.shape[0], n = ta.shape[1];
    std::vector<double> out(ta.data.size());
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] = ta.data[i * n + j] + tb.data[j];
    return push(Tensor{ta.shape, std::move(out)}, {a.idx, b.idx},
                [m, n](Tape& t, std::size_t self) {
                  const auto& g = t.grad_buf(self);
                  auto& ga = t.grad_buf(t.nodes_[self].parents[0]);
                  auto& gb = t.grad_buf(t.nodes_[self].parents[1]);
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                      ga[i * n + j] += g[i * n + j];
                      gb[j] += g[i * n + j];
                    }
                });
  }
  throw std::invalid_argument("add: incompatible shapes");
}

Var Tape::sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var Tape::mul(Var a, Var b) {
  const Tensor& ta = node(a).t;
  const Tensor& tb = node(b).t;
  if (!same_shape(ta.shape, tb.shape)) throw std::invalid_argument("mul: shape mismatch");
  std::vector<double> out(ta.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta.data[i] * tb.data[i];
  return push(Tensor{ta.shape, std::move(out)}, {a.idx, b.idx},
              [](Tape& t, std::size_t self) {
                const auto& g = t.grad_buf(self);
                const auto& pa = t.nodes_[t.nodes_[self].parents[0]].t.data;
                const auto& pb = t.nodes_[t.nodes_[self].parents[1]].t.data;
                auto& ga = t.grad_buf(t.nodes_[self].parents[0]);
                auto& gb = t.grad_buf(t.nodes_[self].parents[1]);
                for (std::size_t i = 0; i < g.size(); ++i) {
                  ga[i] += g[i] * pb[i];
                  gb[i] += g[i] * pa[i];
                }
              });
}

Var Tape::smul(Var scalar, Var x) {
  const Tensor& ts = node(scalar).t;
  const Tensor& tx = node(x).t;
  if (numel(ts.shape) != 1) throw std::invalid_argument("smul: first operand must be scalar");
  const double s = ts.data[0];
  std::vector<double> out(tx.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * tx.data[i];
  return push(Tensor{tx.shape, std::move(out)}, {scalar.idx, x.idx},
              [](Tape& t, std::size_t self) {
                const auto& g = t.grad_buf(self);
                const auto& sval = t.nodes_[t.nodes_[self].parents[0]].t.data[0];
                const auto& xval = t.nodes_[t.nodes_[self].parents[1]].t.data;
                auto& gs = t.grad_buf(t.nodes_[self].parents[0]);
                auto& gx = t.grad_buf(t.nodes_[self].parents[1]);
                for (std::size_t i = 0; i < g.size(); ++i) {
                  gs[0] += g[i] * xval[i];
                  gx[i] += g[i] * sval;
                }
              });
}

Var Tape::scale(Var x, double c) {
  const Tensor& tx = node(x).t;
  std::vector<double> out(tx.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * tx.data[i];
  return push(Tensor{tx.shape, std::move(out)}, {x.idx},
              [c](Tape& t, std::size_t self) {
                const auto& g = t.grad_buf(self);
                auto& gx = t.grad_buf(t.nodes_[self].parents[0]);
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
              });
}

Var Tape::add_const(Var x, double c) {
  const Tensor& tx = node(x).t;
  std::vector<double> out(tx.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = tx.data[i] + c;
  return push(Tensor{tx.shape, std::move(out)}, {x.idx},
              [](Tape& t, std::size_t self) {
                const auto& g = t.grad_buf(self);
                auto& gx = t.grad_buf(t.nodes_[self].parents[0]);
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
              });
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& ta = node(a).t;
  const Tensor& tb = node(b).t;
  const auto& sa = ta.shape;
  const auto& sb = tb.shape;

  // {m,k} x {k,n} -> {m,n};  {k} x {k,n} -> {n};  {m,k} x {k} -> {m}
  std::size_t m, k, n;
  Shape out_shape;
  if (sa.size() == 2 && sb.size() == 2) {
    m = sa[0], k = sa[1], n = sb[1];
    if (sb[0] != k) throw std::invalid_argument("matmul: inner dimension mismatch");
    out_shape = {m, n};
  } else if (sa.size() == 1 && sb.size() == 2) {
    m = 1, k = sa[0], n = sb[1];
    if (sb[0] != k) throw std::invalid_argument("matmul: inner dimension mismatch");
    out_shape = {n};
  } else if (sa.size() == 2 && sb.size() == 1) {
    m = sa[0], k = sa[1], n = 1;
    if (sb[0] != k) throw std::invalid_argument("matmul: inner dimension mismatch");
    out_shape = {m};
  } else {
    throw std::invalid_argument("matmul: operands must be 1-D or 2-D");
  }

  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = ta.data[i * k + kk];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * tb.data[kk * n + j];
    }

  return push(Tensor{std::move(out_shape), std::move(out)}, {a.idx, b.idx},
              [m, k, n](Tape& t, std::size_t self) {
                const auto& g = t.grad_buf(self);
                const auto& av = t.nodes_[t.nodes_[self].parents[0]].t.data;
                const auto& bv = t.nodes_[t.nodes_[self].parents[1]].t.data;
                auto& ga = t.grad_buf(t.nodes_[self].parents[0]);
                auto& gb = t.grad_buf(t.nodes_[self].parents[1]);
                for (std::size_t i = 0; i < m; ++i)
                  for (std::size_t j = 0; j < n; ++j) {
                    const double gv = g[i * n + j];
                    for (std::size_t kk = 0; kk < k; ++kk) {
                      ga[i * k + kk] += gv * bv[kk * n + j];
                      gb[kk * n + j] += gv * av[i * k + kk];
                    }
                  }
              });
}

Var Tape::tanh(Var x) {
  const Tensor& tx = node(x).t;
  std::vector<double> out(tx.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(tx.data[i]);
  return push(Tensor{tx.shape, std::move(out)}, {x.idx},
              [](Tape& t, std::size_t self) {
                const auto& g = t.grad_buf(self);
                const auto& y = t.nodes_[self].t.data;
                auto& gx = t.grad_buf(t.nodes_[self].parents[0]);
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
              });
}

Var Tape::hinge(Var x) {
  const Tensor& tx = node(x).t;
  std::vector<double> out(tx.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, tx.data[i]);
  return push(Tensor{tx.shape, std::move(out)}, {x.idx},
              [](Tape& t, std::size_t self) {
                const auto& g = t.grad_buf(self);
                const auto& xv = t.nodes_[t.nodes_[self].parents[0]].t.data;
                auto& gx = t.grad_buf(t.nodes_[self].parents[0]);
                for (std::size_t i = 0; i < g.size(); ++i)
                  if (xv[i] > 0.0) gx[i] += g[i];
              });
}

Var Tape::embedding(Var table, std::span<const int> ids) {
  const Tensor& tt = node(table).t;
  if (tt.shape.size() != 2) throw std::invalid_argument("embedding: table must be 2-D");
  const std::size_t v = tt.shape[0], e = tt.shape[1];
  std::vector<double> out(ids.size() * e);
  std::vector<int> idv(ids.begin(), ids.end());
  const std::size_t n_ids = idv.size();
  for (std::size_t i = 0; i < n_ids; ++i) {
    if (idv[i] < 0 || static_cast<std::size_t>(idv[i]) >= v)
      throw std::domain_error("embedding: id out of vocabulary: " + std::to_string(idv[i]));
    std::copy_n(tt.data.begin() + static_cast<std::size_t>(idv[i]) * e, e, out.begin() + i * e);
  }
  return push(Tensor{{n_ids, e}, std::move(out)}, {table.idx},
              [idv = std::move(idv), e](Tape& t, std::size_t self) {
                const auto& g = t.grad_buf(self);
                auto& gt = t.grad_buf(t.nodes_[self].parents[0]);
                for (std::size_t i = 0; i < idv.size(); ++i)
                  for (std::size_t j = 0; j < e; ++j)
                    gt[static_cast<std::size_t>(idv[i]) * e + j] += g[i * e + j];
              });
}

Var Tape::row(Var mat, std::size_t r) {
  const Tensor& tm = node(mat).t;
  if (tm.shape.size() != 2 || r >= tm.shape[0]) throw std::invalid_argument("row: bad index");
  const std::size_t n = tm.shape[1];
  std::vector<double> out(tm.data.begin() + r * n, tm.data.begin() + (r + 1) * n);
  return push(Tensor{{n}, std::move(out)}, {mat.idx},
              [r, n](Tape& t, std::size_t self) {
                const auto& g = t.grad_buf(self);
                auto& gm = t.grad_buf(t.nodes_[self].parents[0]);
                for (std::size_t j = 0; j < n; ++j) gm[r * n + j] += g[j];
              });
}

Var Tape::stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: empty input");
  const std::size_t n = numel(node(rows[0]).t.shape);
  std::vector<double> out;
  out.reserve(rows.size() * n);
  std::vector<std::size_t> parents;
  for (Var r : rows) {
    const Tensor& tr = node(r).t;
    if (tr.shape.size() != 1 || tr.shape[0] != n)
      throw std::invalid_argument("stack_rows: rows must be equal-length vectors");
    out.insert(out.end(), tr.data.begin(), tr.data.end());
    parents.push_back(r.idx);
  }
  const std::size_t k = rows.size();
  return push(Tensor{{k, n}, std::move(out)}, std::move(parents),
              [k, n](Tape& t, std::size_t self) {
                const auto& g = t.grad_buf(self);
                for (std::size_t i = 0; i < k; ++i) {
                  auto& gr = t.grad_buf(t.nodes_[self].parents[i]);
                  for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
                }
              });
}

Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: empty input");
  std::vector<double> out;
  std::vector<std::size_t> parents;
  std::vector<std::size_t> sizes;
  for (Var p : parts) {
    const Tensor& tp = node(p).t;
    if (tp.shape.size() != 1) throw std::invalid_argument("concat: operands must be 1-D");
    out.insert(out.end(), tp.data.begin(), tp.data.end());
    parents.push_back(p.idx);
    sizes.push_back(tp.data.size());
  }
  Shape s{out.size()};
  return push(Tensor{std::move(s), std::move(out)}, std::move(parents),
              [sizes = std::move(sizes)](Tape& t, std::size_t self) {
                const auto& g = t.grad_buf(self);
                std::size_t off = 0;
                for (std::size_t i = 0; i < sizes.size(); ++i) {
                  auto& gp = t.grad_buf(t.nodes_[self].parents[i]);
                  for (std::size_t j = 0; j < sizes[i]; ++j) gp[j] += g[off + j];
                  off += sizes[i];
                }
              });
}

Var Tape::pick(Var vec, std::size_t i) {
  const Tensor& tv = node(vec).t;
  if (tv.shape.size() != 1 || i >= tv.shape[0]) throw std::invalid_argument("pick: bad index");
  return push(Tensor::scalar(tv.data[i]), {vec.idx},
              [i](Tape& t, std::size_t self) {
                t.grad_buf(t.nodes_[self].parents[0])[i] += t.grad_buf(self)[0];
              });
}

Var Tape::sum(Var x) {
  const Tensor& tx = node(x).t;
  double s = 0.0;
  for (double v : tx.data) s += v;
  return push(Tensor::scalar(s), {x.idx},
              [](Tape& t, std::size_t self) {
                const double g = t.grad_buf(self)[0];
                auto& gx = t.grad_buf(t.nodes_[self].parents[0]);
                for (auto& v : gx) v += g;
              });
}

Var Tape::mean(Var x) {
  const Tensor& tx = node(x).t;
  const std::size_t n = tx.data.size();
  if (n == 0) throw std::invalid_argument("mean: empty tensor");
  double s = 0.0;
  for (double v : tx.data) s += v;
  return push(Tensor::scalar(s / static_cast<double>(n)), {x.idx},
              [n](Tape& t, std::size_t self) {
                const double g = t.grad_buf(self)[0] / static_cast<double>(n);
                auto& gx = t.grad_buf(t.nodes_[self].parents[0]);
                for (auto& v : gx) v += g;
              });
}

namespace {

// Iterates the lines of a 1-D or 2-D tensor along `axis`.
struct LineIter {
  std::size_t n_lines, line_len, stride, base_step;
};

LineIter line_iter(const Shape& shape, int axis) {
  if (shape.size() == 1) {
    if (axis != 0) throw std::invalid_argument("softmax: axis out of range");
    return {1, shape[0], 1, 0};
  }
  if (shape.size() == 2) {
    if (axis == 1) return {shape[0], shape[1], 1, shape[1]};
    if (axis == 0) return {shape[1], shape[0], shape[1], 1};
    throw std::invalid_argument("softmax: axis out of range");
  }
  throw std::invalid_argument("softmax: tensor must be 1-D or 2-D");
}

}  // namespace

Var Tape::softmax(Var x, int axis) {
  const Tensor& tx = node(x).t;
  check_finite(tx.data, "softmax");
  const LineIter it = line_iter(tx.shape, axis);
  std::vector<double> out(tx.data.size());
  for (std::size_t l = 0; l < it.n_lines; ++l) {
    const std::size_t base = l * it.base_step;
    double mx = tx.data[base];
    for (std::size_t i = 1; i < it.line_len; ++i)
      mx = std::max(mx, tx.data[base + i * it.stride]);
    double z = 0.0;
    for (std::size_t i = 0; i < it.line_len; ++i) {
      const double e = std::exp(tx.data[base + i * it.stride] - mx);
      out[base + i * it.stride] = e;
      z += e;
    }
    for (std::size_t i = 0; i < it.line_len; ++i) out[base + i * it.stride] /= z;
  }
  return push(Tensor{tx.shape, std::move(out)}, {x.idx},
              [it](Tape& t, std::size_t self) {
                const auto& g = t.grad_buf(self);
                const auto& y = t.nodes_[self].t.data;
                auto& gx = t.grad_buf(t.nodes_[self].parents[0]);
                for (std::size_t l = 0; l < it.n_lines; ++l) {
                  const std::size_t base = l * it.base_step;
                  double dot = 0.0;
                  for (std::size_t i = 0; i < it.line_len; ++i) {
                    const std::size_t k = base + i * it.stride;
                    dot += g[k] * y[k];
                  }
                  for (std::size_t i = 0; i < it.line_len; ++i) {
                    const std::size_t k = base + i * it.stride;
                    gx[k] += y[k] * (g[k] - dot);
                  }
                }
              });
}

Var Tape::log_softmax(Var x, int axis) {
  const Tensor& tx = node(x).t;
  check_finite(tx.data, "log_softmax");
  const LineIter it = line_iter(tx.shape, axis);
  std::vector<double> out(tx.data.size());
  for (std::size_t l = 0; l < it.n_lines; ++l) {
    const std::size_t base = l * it.base_step;
    double mx = tx.data[base];
    for (std::size_t i = 1; i < it.line_len; ++i)
      mx = std::max(mx, tx.data[base + i * it.stride]);
    double z = 0.0;
    for (std::size_t i = 0; i < it.line_len; ++i)
      z += std::exp(tx.data[base + i * it.stride] - mx);
    const double lz = std::log(z) + mx;
    for (std::size_t i = 0; i < it.line_len; ++i) {
      const std::size_t k = base + i * it.stride;
      out[k] = tx.data[k] - lz;
    }
  }
  return push(Tensor{tx.shape, std::move(out)}, {x.idx},
              [it](Tape& t, std::size_t self) {
                const auto& g = t.grad_buf(self);
                const auto& y = t.nodes_[self].t.data;
                auto& gx = t.grad_buf(t.nodes_[self].parents[0]);
                for (std::size_t l = 0; l < it.n_lines; ++l) {
                  const std::size_t base = l * it.base_step;
                  double gsum = 0.0;
                  for (std::size_t i = 0; i < it.line_len; ++i)
                    gsum += g[base + i * it.stride];
                  for (std::size_t i = 0; i < it.line_len; ++i) {
                    const std::size_t k = base + i * it.stride;
                    gx[k] += g[k] - std::exp(y[k]) * gsum;
                  }
                }
              });
}

Var Tape::cosine_similarity(Var a, Var b) {
  const Tensor& ta = node(a).t;
  const Tensor& tb = node(b).t;
  if (ta.shape.size() != 1 || tb.shape.size() != 1 || ta.shape[0] != tb.shape[0])
    throw std::invalid_argument("cosine_similarity: operands must be equal-length vectors");
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (std::size_t i = 0; i < ta.data.size(); ++i) {
    dot += ta.data[i] * tb.data[i];
    na2 += ta.data[i] * ta.data[i];
    nb2 += tb.data[i] * tb.data[i];
  }
  if (na2 == 0.0 || nb2 == 0.0)
    throw std::domain_error("cosine_similarity: zero-norm vector");
  const double na = std::sqrt(na2), nb = std::sqrt(nb2);
  const double c = dot / (na * nb);
  return push(Tensor::scalar(c), {a.idx, b.idx},
              [na, nb, c](Tape& t, std::size_t self) {
                const double g = t.grad_buf(self)[0];
                const auto& av = t.nodes_[t.nodes_[self].parents[0]].t.data;
                const auto& bv = t.nodes_[t.nodes_[self].parents[1]].t.data;
                auto& ga = t.grad_buf(t.nodes_[self].parents[0]);
                auto& gb = t.grad_buf(t.nodes_[self].parents[1]);
                for (std::size_t i = 0; i < av.size(); ++i) {
                  ga[i] += g * (bv[i] / (na * nb) - c * av[i] / (na * na));
                  gb[i] += g * (av[i] / (na * nb) - c * bv[i] / (nb * nb));
                }
              });
}

Var Tape::cross_entropy(Var log_probs, std::span<const int> targets, int pad_id) {
  const Tensor& tl = node(log_probs).t;
  if (tl.shape.size() != 2) throw std::invalid_argument("cross_entropy: log_probs must be 2-D");
  const std::size_t steps = tl.shape[0], vocab = tl.shape[1];
  if (targets.size() != steps)
    throw std::invalid_argument("cross_entropy: target length does not match steps");
  std::vector<int> tv(targets.begin(), targets.end());
  std::size_t n = 0;
  double nll = 0.0;
  for (std::size_t i = 0; i < steps; ++i) {
    if (tv[i] == pad_id) continue;
    if (tv[i] < 0 || static_cast<std::size_t>(tv[i]) >= vocab)
      throw std::domain_error("cross_entropy: target id out of vocabulary: " +
                              std::to_string(tv[i]));
    nll -= tl.data[i * vocab + static_cast<std::size_t>(tv[i])];
    ++n;
  }
  if (n == 0) throw std::invalid_argument("cross_entropy: all positions are padding");
  return push(Tensor::scalar(nll / static_cast<double>(n)), {log_probs.idx},
              [tv = std::move(tv), vocab, pad_id, n](Tape& t, std::size_t self) {
                const double g = t.grad_buf(self)[0] / static_cast<double>(n);
                auto& gl = t.grad_buf(t.nodes_[self].parents[0]);
                for (std::size_t i = 0; i < tv.size(); ++i) {
                  if (tv[i] == pad_id) continue;
                  gl[i * vocab + static_cast<std::size_t>(tv[i])] -= g;
                }
              });
}

void Tape::backward(Var loss) {
  if (numel(node(loss).t.shape) != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  for (auto& n : nodes_) {
    if (!n.t.grad) n.t.grad.emplace(n.t.data.size(), 0.0);
    else std::fill(n.t.grad->begin(), n.t.grad->end(), 0.0);
  }
  (*nodes_[loss.idx].t.grad)[0] = 1.0;
  for (std::size_t i = loss.idx + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backprop && n.needs_grad) n.backprop(*this, i);
  }
}

double finite_difference_check(const TapeFn& f, std::vector<Tensor> params, double step) {
  if (step <= 0.0) throw std::invalid_argument("finite_difference_check: step must be > 0");

  auto eval = [&](const std::vector<Tensor>& p) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(p.size());
    for (const auto& t : p) vars.push_back(tape.leaf(t));
    return std::make_pair(std::move(tape), f(tape, vars));
  };

  for (auto& p : params) p.requires_grad = true;
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : params) vars.push_back(tape.leaf(t));
    Var loss = f(tape, vars);
    tape.backward(loss);
    for (Var v : vars) analytic.push_back(tape.grad(v));
  }

  // Central differences, one coordinate at a time.
  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    for (std::size_t i = 0; i < params[pi].data.size(); ++i) {
      const double orig = params[pi].data[i];
      params[pi].data[i] = orig + step;
      double fp;
      {
        auto [tape, loss] = eval(params);
        fp = tape.value(loss).item();
      }
      params[pi].data[i] = orig - step;
      double fm;
      {
        auto [tape, loss] = eval(params);
        fm = tape.value(loss).item();
      }
      params[pi].data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double rel =
          std::abs(analytic[pi][i] - numeric) / std::max(1e-8, std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace brainstorm::ad
