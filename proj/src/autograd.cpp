#include "adamrc/autograd.hpp"

#include <cmath>
#include <stdexcept>

namespace adamrc::ag {

namespace {

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double z = std::exp(x);
  return z / (1.0 + z);
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

void init_glorot(Parameter& p, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(p.rows() + p.cols()));
  init_uniform(p, rng, bound);
}

void init_uniform(Parameter& p, Rng& rng, double bound) {
  for (Eigen::Index i = 0; i < p.value.size(); ++i)
    p.value.data()[i] = static_cast<float>(rng.uniform(-bound, bound));
  p.zero_grad();
}

// ---------------------------------------------------------------------------
// Graph

Var Graph::push(Matrix value, Backward backward) {
  Node n;
  n.value = std::move(value);
  if (requires_grad_) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Matrix& Graph::grad_buffer(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Graph::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
  Parameter* ptr = &p;
  Var v = push(p.value.cast<double>(), [ptr](Graph&, int, const Matrix& g) {
    if (ptr->grad.rows() != g.rows() || ptr->grad.cols() != g.cols()) ptr->zero_grad();
    ptr->grad += g;
  });
  param_nodes_.emplace(&p, v.id);
  return v;
}

Var Graph::constant(Matrix m) { return push(std::move(m)); }

Var Graph::lookup(Parameter& table, std::span<const int> ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || ids[t] >= table.rows())
      throw std::out_of_range("lookup: id out of range for " + table.name);
    out.row(static_cast<Eigen::Index>(t)) = table.value.row(ids[t]).cast<double>();
  }
  Parameter* ptr = &table;
  std::vector<int> idv(ids.begin(), ids.end());
  return push(std::move(out), [ptr, idv = std::move(idv)](Graph&, int, const Matrix& g) {
    if (ptr->grad.rows() != ptr->rows() || ptr->grad.cols() != ptr->cols()) ptr->zero_grad();
    for (std::size_t t = 0; t < idv.size(); ++t)
      ptr->grad.row(idv[t]) += g.row(static_cast<Eigen::Index>(t));
  });
}

void Graph::backward(Var out, double seed) {
  if (!requires_grad_) throw std::logic_error("backward on a graph built without gradients");
  if (out.rows() != 1 || out.cols() != 1) throw std::invalid_argument("backward: output must be 1x1");
  grad_buffer(out.id)(0, 0) += seed;
  for (int i = out.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, i, n.grad);
  }
}

// ---------------------------------------------------------------------------
// Basic operators

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Matrix out = a.value() * b.value();
  return a.graph->push(std::move(out), [a, b](Graph& gr, int, const Matrix& d) {
    gr.grad_buffer(a.id).noalias() += d * b.value().transpose();
    gr.grad_buffer(b.id).noalias() += a.value().transpose() * d;
  });
}

Var add(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "add");
  return a.graph->push(a.value() + b.value(), [a, b](Graph& gr, int, const Matrix& d) {
    gr.grad_buffer(a.id) += d;
    gr.grad_buffer(b.id) += d;
  });
}

Var sub(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "sub");
  return a.graph->push(a.value() - b.value(), [a, b](Graph& gr, int, const Matrix& d) {
    gr.grad_buffer(a.id) += d;
    gr.grad_buffer(b.id) -= d;
  });
}

Var mul(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "mul");
  return a.graph->push(a.value().cwiseProduct(b.value()), [a, b](Graph& gr, int, const Matrix& d) {
    gr.grad_buffer(a.id) += d.cwiseProduct(b.value());
    gr.grad_buffer(b.id) += d.cwiseProduct(a.value());
  });
}

Var scale(Var a, double s) {
  return a.graph->push(a.value() * s,
                       [a, s](Graph& gr, int, const Matrix& d) { gr.grad_buffer(a.id) += d * s; });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: shape mismatch");
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return a.graph->push(std::move(out), [a, row](Graph& gr, int, const Matrix& d) {
    gr.grad_buffer(a.id) += d;
    gr.grad_buffer(row.id) += d.colwise().sum();
  });
}

Var mul_col(Var a, Var col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw std::invalid_argument("mul_col: shape mismatch");
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r) *= col.value()(r, 0);
  return a.graph->push(std::move(out), [a, col](Graph& gr, int, const Matrix& d) {
    Matrix& ga = gr.grad_buffer(a.id);
    for (Eigen::Index r = 0; r < d.rows(); ++r) ga.row(r) += d.row(r) * col.value()(r, 0);
    Matrix& gc = gr.grad_buffer(col.id);
    for (Eigen::Index r = 0; r < d.rows(); ++r) gc(r, 0) += d.row(r).dot(a.value().row(r));
  });
}

Var one_minus(Var a) {
  Matrix out = (1.0 - a.value().array()).matrix();
  return a.graph->push(std::move(out), [a](Graph& gr, int, const Matrix& d) { gr.grad_buffer(a.id) -= d; });
}

Var sigmoid(Var a) {
  Matrix out = a.value().unaryExpr([](double x) { return sigmoid_scalar(x); });
  return a.graph->push(std::move(out), [a](Graph& gr, int self, const Matrix& d) {
    const Matrix& y = gr.value(self);
    gr.grad_buffer(a.id).array() += d.array() * y.array() * (1.0 - y.array());
  });
}

Var tanh(Var a) {
  Matrix out = a.value().array().tanh().matrix();
  return a.graph->push(std::move(out), [a](Graph& gr, int self, const Matrix& d) {
    const Matrix& y = gr.value(self);
    gr.grad_buffer(a.id).array() += d.array() * (1.0 - y.array().square());
  });
}

Var log(Var a) {
  Matrix out = a.value().array().log().matrix();
  return a.graph->push(std::move(out), [a](Graph& gr, int, const Matrix& d) {
    gr.grad_buffer(a.id).array() += d.array() / a.value().array();
  });
}

Var transpose(Var a) {
  Matrix out = a.value().transpose();
  return a.graph->push(std::move(out),
                       [a](Graph& gr, int, const Matrix& d) { gr.grad_buffer(a.id) += d.transpose(); });
}

Var hcat(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("hcat: no inputs");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("hcat: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return parts[0].graph->push(std::move(out), [ps = std::move(ps)](Graph& gr, int, const Matrix& d) {
    Eigen::Index off = 0;
    for (const Var& p : ps) {
      const Eigen::Index w = gr.value(p.id).cols();
      gr.grad_buffer(p.id) += d.middleCols(off, w);
      off += w;
    }
  });
}

Var vcat(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("vcat: no inputs");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("vcat: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return parts[0].graph->push(std::move(out), [ps = std::move(ps)](Graph& gr, int, const Matrix& d) {
    Eigen::Index off = 0;
    for (const Var& p : ps) {
      const Eigen::Index h = gr.value(p.id).rows();
      gr.grad_buffer(p.id) += d.middleRows(off, h);
      off += h;
    }
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw std::out_of_range("slice_rows");
  Matrix out = a.value().middleRows(start, count);
  return a.graph->push(std::move(out), [a, start, count](Graph& gr, int, const Matrix& d) {
    gr.grad_buffer(a.id).middleRows(start, count) += d;
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::out_of_range("slice_cols");
  Matrix out = a.value().middleCols(start, count);
  return a.graph->push(std::move(out), [a, start, count](Graph& gr, int, const Matrix& d) {
    gr.grad_buffer(a.id).middleCols(start, count) += d;
  });
}

Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.graph->push(std::move(out),
                       [a](Graph& gr, int, const Matrix& d) { gr.grad_buffer(a.id).array() += d(0, 0); });
}

Var mean_rows(Var a) {
  const double n = static_cast<double>(a.rows());
  Matrix out = a.value().colwise().sum() / n;
  return a.graph->push(std::move(out), [a, n](Graph& gr, int, const Matrix& d) {
    gr.grad_buffer(a.id).rowwise() += d.row(0) / n;
  });
}

Var pick(Var a, Eigen::Index row, Eigen::Index col) {
  if (row < 0 || row >= a.rows() || col < 0 || col >= a.cols()) throw std::out_of_range("pick");
  Matrix out(1, 1);
  out(0, 0) = a.value()(row, col);
  return a.graph->push(std::move(out), [a, row, col](Graph& gr, int, const Matrix& d) {
    gr.grad_buffer(a.id)(row, col) += d(0, 0);
  });
}

Var softmax_rows(Var a, Eigen::Index valid_cols) {
  const Eigen::Index n = valid_cols < 0 ? a.cols() : valid_cols;
  if (n < 1 || n > a.cols()) throw std::invalid_argument("softmax_rows: invalid mask length");
  const Matrix& x = a.value();
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mx = x.row(r).head(n).maxCoeff();
    auto e = (x.row(r).head(n).array() - mx).exp();
    out.row(r).head(n) = (e / e.sum()).matrix();
  }
  return a.graph->push(std::move(out), [a](Graph& gr, int self, const Matrix& d) {
    const Matrix& y = gr.value(self);
    Matrix& ga = gr.grad_buffer(a.id);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = d.row(r).dot(y.row(r));
      ga.row(r).array() += y.row(r).array() * (d.row(r).array() - dot);
    }
  });
}

Var grad_reverse(Var a, double lambda) {
  return a.graph->push(a.value(), [a, lambda](Graph& gr, int, const Matrix& d) {
    gr.grad_buffer(a.id) += -lambda * d;
  });
}

Var dropout(Var a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  const double keep = 1.0 - rate;
  Matrix mask(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  Matrix out = a.value().cwiseProduct(mask);
  return a.graph->push(std::move(out), [a, mask = std::move(mask)](Graph& gr, int, const Matrix& d) {
    gr.grad_buffer(a.id) += d.cwiseProduct(mask);
  });
}

Var bce_with_logits(Var logit, double label) {
  if (logit.rows() != 1 || logit.cols() != 1) throw std::invalid_argument("bce_with_logits: expects 1x1");
  const double z = logit.scalar();
  // softplus(z) = max(z, 0) + log1p(exp(-|z|))
  const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
  Matrix out(1, 1);
  out(0, 0) = softplus - label * z;
  return logit.graph->push(std::move(out), [logit, label](Graph& gr, int, const Matrix& d) {
    gr.grad_buffer(logit.id)(0, 0) += d(0, 0) * (sigmoid_scalar(logit.scalar()) - label);
  });
}

// ---------------------------------------------------------------------------
// Fused sequence operators

Var lstm(Var x, Var wx, Var wh, Var b, bool reverse, Var h0, Var c0) {
  const Eigen::Index T = x.rows();
  const Eigen::Index H = wh.rows();
  if (wx.rows() != x.cols() || wx.cols() != 4 * H || wh.cols() != 4 * H || b.cols() != 4 * H || b.rows() != 1)
    throw std::invalid_argument("lstm: weight shapes inconsistent");
  if (T < 1) throw std::invalid_argument("lstm: empty sequence");

  struct Cache {
    Matrix i, f, g, o, c, tc;  // T x H, stored at sequence position
  };
  auto cache = std::make_shared<Cache>();
  cache->i.resize(T, H);
  cache->f.resize(T, H);
  cache->g.resize(T, H);
  cache->o.resize(T, H);
  cache->c.resize(T, H);
  cache->tc.resize(T, H);

  Matrix zx = x.value() * wx.value();
  zx.rowwise() += b.value().row(0);
  const Matrix& whv = wh.value();

  RowVector h_init = h0.valid() ? RowVector(h0.value().row(0)) : RowVector::Zero(H);
  RowVector c_init = c0.valid() ? RowVector(c0.value().row(0)) : RowVector::Zero(H);

  Matrix out(T, H);
  RowVector h = h_init, c = c_init;
  RowVector z(4 * H);
  for (Eigen::Index s = 0; s < T; ++s) {
    const Eigen::Index t = reverse ? T - 1 - s : s;
    z.noalias() = zx.row(t);
    z.noalias() += h * whv;
    for (Eigen::Index k = 0; k < H; ++k) {
      const double ig = sigmoid_scalar(z(k));
      const double fg = sigmoid_scalar(z(H + k));
      const double gg = std::tanh(z(2 * H + k));
      const double og = sigmoid_scalar(z(3 * H + k));
      const double cn = fg * c(k) + ig * gg;
      const double tcn = std::tanh(cn);
      cache->i(t, k) = ig;
      cache->f(t, k) = fg;
      cache->g(t, k) = gg;
      cache->o(t, k) = og;
      cache->c(t, k) = cn;
      cache->tc(t, k) = tcn;
      c(k) = cn;
      h(k) = og * tcn;
    }
    out.row(t) = h;
  }

  return x.graph->push(std::move(out), [=](Graph& gr, int self, const Matrix& dout) {
    const Matrix& hs = gr.value(self);
    const Matrix& whv2 = wh.value();
    Matrix dz(T, 4 * H);
    RowVector dh_next = RowVector::Zero(H), dc_next = RowVector::Zero(H);
    Matrix dwh = Matrix::Zero(H, 4 * H);
    for (Eigen::Index s = T - 1; s >= 0; --s) {
      const Eigen::Index t = reverse ? T - 1 - s : s;
      const bool first = (s == 0);
      const Eigen::Index tp = reverse ? t + 1 : t - 1;
      RowVector h_prev = first ? h_init : RowVector(hs.row(tp));
      RowVector c_prev = first ? c_init : RowVector(cache->c.row(tp));
      RowVector dh = dout.row(t) + dh_next;
      RowVector dc_prev(H);
      for (Eigen::Index k = 0; k < H; ++k) {
        const double ig = cache->i(t, k), fg = cache->f(t, k), gg = cache->g(t, k), og = cache->o(t, k);
        const double tcn = cache->tc(t, k);
        const double dov = dh(k) * tcn;
        const double dcv = dh(k) * og * (1.0 - tcn * tcn) + dc_next(k);
        dz(t, k) = dcv * gg * ig * (1.0 - ig);
        dz(t, H + k) = dcv * c_prev(k) * fg * (1.0 - fg);
        dz(t, 2 * H + k) = dcv * ig * (1.0 - gg * gg);
        dz(t, 3 * H + k) = dov * og * (1.0 - og);
        dc_prev(k) = dcv * fg;
      }
      dwh.noalias() += h_prev.transpose() * dz.row(t);
      dh_next.noalias() = dz.row(t) * whv2.transpose();
      dc_next = dc_prev;
    }
    gr.grad_buffer(wh.id) += dwh;
    gr.grad_buffer(x.id).noalias() += dz * wx.value().transpose();
    gr.grad_buffer(wx.id).noalias() += x.value().transpose() * dz;
    gr.grad_buffer(b.id) += dz.colwise().sum();
    if (h0.valid()) gr.grad_buffer(h0.id) += dh_next;
    if (c0.valid()) gr.grad_buffer(c0.id) += dc_next;
  });
}

Var additive_scores(Var keys, Var queries, Var v) {
  const Eigen::Index T = keys.rows(), Tq = queries.rows(), A = keys.cols();
  if (queries.cols() != A || v.rows() != 1 || v.cols() != A)
    throw std::invalid_argument("additive_scores: shape mismatch");
  // th[t] holds tanh(keys + queries.row(t)) as T x A.
  auto th = std::make_shared<std::vector<Matrix>>(static_cast<std::size_t>(Tq));
  Matrix out(Tq, T);
  for (Eigen::Index t = 0; t < Tq; ++t) {
    Matrix m = keys.value();
    m.rowwise() += queries.value().row(t);
    m = m.array().tanh().matrix();
    out.row(t) = (m * v.value().transpose()).transpose();
    (*th)[static_cast<std::size_t>(t)] = std::move(m);
  }
  return keys.graph->push(std::move(out), [keys, queries, v, th](Graph& gr, int, const Matrix& d) {
    Matrix& gk = gr.grad_buffer(keys.id);
    Matrix& gq = gr.grad_buffer(queries.id);
    Matrix& gv = gr.grad_buffer(v.id);
    const auto vrow = v.value().row(0).array();
    for (std::size_t t = 0; t < th->size(); ++t) {
      const Matrix& m = (*th)[t];
      const auto dt = d.row(static_cast<Eigen::Index>(t)).transpose();  // T x 1
      // d tanh arg: dt(i) * v(k) * (1 - m(i,k)^2)
      Matrix darg = (1.0 - m.array().square()).matrix();
      for (Eigen::Index i = 0; i < darg.rows(); ++i) darg.row(i).array() *= vrow * dt(i);
      gk += darg;
      gq.row(static_cast<Eigen::Index>(t)) += darg.colwise().sum();
      gv.noalias() += dt.transpose() * m;
    }
  });
}

Var pointer_mixture_pick(Var pv, Var gate, Var alpha, std::span<const int> src_ids,
                         std::span<const int> targets) {
  const Eigen::Index Tq = pv.rows(), V = pv.cols(), T = alpha.cols();
  if (gate.rows() != Tq || gate.cols() != 1 || alpha.rows() != Tq ||
      static_cast<Eigen::Index>(src_ids.size()) != T || static_cast<Eigen::Index>(targets.size()) != Tq)
    throw std::invalid_argument("pointer_mixture_pick: shape mismatch");
  std::vector<int> src(src_ids.begin(), src_ids.end());
  std::vector<int> tgt(targets.begin(), targets.end());
  Matrix out(Tq, 1);
  Matrix copy(Tq, 1);
  for (Eigen::Index t = 0; t < Tq; ++t) {
    const int y = tgt[static_cast<std::size_t>(t)];
    double c = 0.0;
    for (Eigen::Index i = 0; i < T; ++i)
      if (src[static_cast<std::size_t>(i)] == y) c += alpha.value()(t, i);
    copy(t, 0) = c;
    const double g = gate.value()(t, 0);
    const double gen = y < V ? pv.value()(t, y) : 0.0;
    out(t, 0) = g * gen + (1.0 - g) * c;
  }
  return pv.graph->push(std::move(out), [=, src = std::move(src), tgt = std::move(tgt)](Graph& gr, int,
                                                                                        const Matrix& d) {
    Matrix& gpv = gr.grad_buffer(pv.id);
    Matrix& gg = gr.grad_buffer(gate.id);
    Matrix& ga = gr.grad_buffer(alpha.id);
    for (Eigen::Index t = 0; t < Tq; ++t) {
      const int y = tgt[static_cast<std::size_t>(t)];
      const double g = gate.value()(t, 0);
      const double gen = y < V ? pv.value()(t, y) : 0.0;
      if (y < V) gpv(t, y) += d(t, 0) * g;
      gg(t, 0) += d(t, 0) * (gen - copy(t, 0));
      for (Eigen::Index i = 0; i < T; ++i)
        if (src[static_cast<std::size_t>(i)] == y) ga(t, i) += d(t, 0) * (1.0 - g);
    }
  });
}

}  // namespace adamrc::ag
