#include "decoysl/neuralnet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "decoysl/errors.hpp"

namespace decoysl::nn {

std::size_t ParamStore::add(const std::string& name, Tensor init) {
  if (std::find(names_.begin(), names_.end(), name) != names_.end())
    throw std::invalid_argument("duplicate parameter " + name);
  names_.push_back(name);
  grads_.emplace_back(init.rows, init.cols);
  values_.push_back(std::move(init));
  versions_.push_back(0);
  return values_.size() - 1;
}

std::size_t ParamStore::find(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw std::out_of_range("no parameter " + name);
  return static_cast<std::size_t>(it - names_.begin());
}

void ParamStore::zero_grad() {
  for (auto& g : grads_) g.fill(0.0);
}

void ParamStore::zero_grad(const std::vector<std::size_t>& ids) {
  for (std::size_t i : ids) grads_[i].fill(0.0);
}

std::vector<std::size_t> ParamStore::ids_with_prefix(const std::string& prefix) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i].rfind(prefix, 0) == 0) out.push_back(i);
  return out;
}

Tensor init_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  Tensor t(rows, cols);
  const double k = kInitScale / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (double& v : t.values) v = rng.uniform(-k, k);
  return t;
}

Var Tape::push(Tensor value, std::function<void(Tape&)> back) {
  if (!value.all_finite()) throw NonFinite("non-finite value in forward pass");
  Node n;
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return {nodes_.size() - 1};
}

Tensor& Tape::g(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.rows, n.value.cols);
  return n.grad;
}

Var Tape::constant(Tensor v) { return push(std::move(v), nullptr); }

Var Tape::param(ParamStore& ps, std::size_t idx) {
  Var v = push(ps.value(idx), nullptr);
  nodes_[v.id].store = &ps;
  nodes_[v.id].param_idx = idx;
  nodes_[v.id].version = ps.version(idx);
  return v;
}

Var Tape::linear(Var x, Var w, Var b) {
  const Tensor& X = value(x);
  const Tensor& W = value(w);
  const Tensor& Bv = value(b);
  if (X.cols != W.cols || Bv.rows != 1 || Bv.cols != W.rows) throw ShapeMismatch("linear");
  Tensor Y(X.rows, W.rows);
  for (std::size_t r = 0; r < X.rows; ++r) {
    const double* xr = X.row_ptr(r);
    double* yr = Y.row_ptr(r);
    for (std::size_t o = 0; o < W.rows; ++o) {
      const double* wr = W.row_ptr(o);
      double acc = Bv.values[o];
      for (std::size_t i = 0; i < W.cols; ++i) acc += wr[i] * xr[i];
      yr[o] = acc;
    }
  }
  Var y = push(std::move(Y), nullptr);
  nodes_[y.id].back = [x, w, b, y](Tape& t) {
    const Tensor& X = t.value(x);
    const Tensor& W = t.value(w);
    const Tensor& G = t.nodes_[y.id].grad;
    Tensor& gx = t.g(x);
    Tensor& gw = t.g(w);
    Tensor& gb = t.g(b);
    for (std::size_t r = 0; r < X.rows; ++r) {
      const double* xr = X.row_ptr(r);
      double* gxr = gx.row_ptr(r);
      const double* gr = G.row_ptr(r);
      for (std::size_t o = 0; o < W.rows; ++o) {
        const double go = gr[o];
        if (go == 0.0) continue;
        gb.values[o] += go;
        const double* wr = W.row_ptr(o);
        double* gwr = gw.row_ptr(o);
        for (std::size_t i = 0; i < W.cols; ++i) {
          gwr[i] += go * xr[i];
          gxr[i] += go * wr[i];
        }
      }
    }
  };
  return y;
}

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) throw ShapeMismatch(op);
}

}  // namespace

Var Tape::add(Var a, Var b) {
  require_same(value(a), value(b), "add");
  Tensor Y = value(a);
  for (std::size_t i = 0; i < Y.size(); ++i) Y.values[i] += value(b).values[i];
  Var y = push(std::move(Y), nullptr);
  nodes_[y.id].back = [a, b, y](Tape& t) {
    const Tensor& G = t.nodes_[y.id].grad;
    Tensor& ga = t.g(a);
    for (std::size_t i = 0; i < G.size(); ++i) ga.values[i] += G.values[i];
    Tensor& gb = t.g(b);
    for (std::size_t i = 0; i < G.size(); ++i) gb.values[i] += G.values[i];
  };
  return y;
}

Var Tape::sub(Var a, Var b) {
  require_same(value(a), value(b), "sub");
  Tensor Y = value(a);
  for (std::size_t i = 0; i < Y.size(); ++i) Y.values[i] -= value(b).values[i];
  Var y = push(std::move(Y), nullptr);
  nodes_[y.id].back = [a, b, y](Tape& t) {
    const Tensor& G = t.nodes_[y.id].grad;
    Tensor& ga = t.g(a);
    for (std::size_t i = 0; i < G.size(); ++i) ga.values[i] += G.values[i];
    Tensor& gb = t.g(b);
    for (std::size_t i = 0; i < G.size(); ++i) gb.values[i] -= G.values[i];
  };
  return y;
}

Var Tape::mul(Var a, Var b) {
  require_same(value(a), value(b), "mul");
  Tensor Y = value(a);
  for (std::size_t i = 0; i < Y.size(); ++i) Y.values[i] *= value(b).values[i];
  Var y = push(std::move(Y), nullptr);
  nodes_[y.id].back = [a, b, y](Tape& t) {
    const Tensor& G = t.nodes_[y.id].grad;
    {
      Tensor& ga = t.g(a);
      const Tensor& B = t.value(b);
      for (std::size_t i = 0; i < G.size(); ++i) ga.values[i] += G.values[i] * B.values[i];
    }
    Tensor& gb = t.g(b);
    const Tensor& A = t.value(a);
    for (std::size_t i = 0; i < G.size(); ++i) gb.values[i] += G.values[i] * A.values[i];
  };
  return y;
}

Var Tape::scale(Var a, double s) {
  Tensor Y = value(a);
  for (double& v : Y.values) v *= s;
  Var y = push(std::move(Y), nullptr);
  nodes_[y.id].back = [a, y, s](Tape& t) {
    const Tensor& G = t.nodes_[y.id].grad;
    Tensor& ga = t.g(a);
    for (std::size_t i = 0; i < G.size(); ++i) ga.values[i] += s * G.values[i];
  };
  return y;
}

Var Tape::one_minus(Var a) {
  Tensor Y = value(a);
  for (double& v : Y.values) v = 1.0 - v;
  Var y = push(std::move(Y), nullptr);
  nodes_[y.id].back = [a, y](Tape& t) {
    const Tensor& G = t.nodes_[y.id].grad;
    Tensor& ga = t.g(a);
    for (std::size_t i = 0; i < G.size(); ++i) ga.values[i] -= G.values[i];
  };
  return y;
}

Var Tape::tanh(Var a) {
  Tensor Y = value(a);
  for (double& v : Y.values) v = std::tanh(v);
  Var y = push(std::move(Y), nullptr);
  nodes_[y.id].back = [a, y](Tape& t) {
    const Tensor& G = t.nodes_[y.id].grad;
    const Tensor& Yv = t.value(y);
    Tensor& ga = t.g(a);
    for (std::size_t i = 0; i < G.size(); ++i) ga.values[i] += G.values[i] * (1.0 - Yv.values[i] * Yv.values[i]);
  };
  return y;
}

Var Tape::sigmoid(Var a) {
  Tensor Y = value(a);
  for (double& v : Y.values) v = 1.0 / (1.0 + std::exp(-v));
  Var y = push(std::move(Y), nullptr);
  nodes_[y.id].back = [a, y](Tape& t) {
    const Tensor& G = t.nodes_[y.id].grad;
    const Tensor& Yv = t.value(y);
    Tensor& ga = t.g(a);
    for (std::size_t i = 0; i < G.size(); ++i) ga.values[i] += G.values[i] * Yv.values[i] * (1.0 - Yv.values[i]);
  };
  return y;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat of nothing");
  const std::size_t rows = value(parts[0]).rows;
  std::size_t cols = 0;
  for (Var p : parts) {
    if (value(p).rows != rows) throw ShapeMismatch("concat rows");
    cols += value(p).cols;
  }
  Tensor Y(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& P = value(p);
    for (std::size_t r = 0; r < rows; ++r) std::copy(P.row_ptr(r), P.row_ptr(r) + P.cols, Y.row_ptr(r) + off);
    off += P.cols;
  }
  Var y = push(std::move(Y), nullptr);
  nodes_[y.id].back = [parts, y](Tape& t) {
    const Tensor& G = t.nodes_[y.id].grad;
    std::size_t off = 0;
    for (Var p : parts) {
      Tensor& gp = t.g(p);
      for (std::size_t r = 0; r < gp.rows; ++r)
        for (std::size_t c = 0; c < gp.cols; ++c) gp(r, c) += G(r, off + c);
      off += gp.cols;
    }
  };
  return y;
}

Var Tape::gather_rows(Var table, const std::vector<std::size_t>& ids) {
  const Tensor& T = value(table);
  Tensor Y(ids.size(), T.cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= T.rows) throw ShapeMismatch("gather index out of range");
    std::copy(T.row_ptr(ids[i]), T.row_ptr(ids[i]) + T.cols, Y.row_ptr(i));
  }
  Var y = push(std::move(Y), nullptr);
  nodes_[y.id].back = [table, ids, y](Tape& t) {
    const Tensor& G = t.nodes_[y.id].grad;
    Tensor& gt = t.g(table);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      double* dst = gt.row_ptr(ids[i]);
      const double* src = G.row_ptr(i);
      for (std::size_t c = 0; c < G.cols; ++c) dst[c] += src[c];
    }
  };
  return y;
}

Var Tape::attention(Var q, Var k, Var v, std::size_t slots, const std::vector<char>& valid) {
  const Tensor& Q = value(q);
  const Tensor& K = value(k);
  const Tensor& V = value(v);
  if (slots == 0) throw std::invalid_argument("attention needs at least one history slot");
  const std::size_t B = Q.rows, C = Q.cols;
  if (K.rows != B * slots || V.rows != B * slots || K.cols != C || V.cols != C || valid.size() != B * slots)
    throw ShapeMismatch("attention");
  const double inv = 1.0 / std::sqrt(static_cast<double>(C));
  Tensor W(B, slots);  // attention weights, kept for backward
  Tensor Y(B, C);
  for (std::size_t b = 0; b < B; ++b) {
    double mx = -INFINITY;
    for (std::size_t s = 0; s < slots; ++s) {
      if (!valid[b * slots + s]) continue;
      double acc = 0.0;
      for (std::size_t c = 0; c < C; ++c) acc += Q(b, c) * K(b * slots + s, c);
      W(b, s) = acc * inv;
      mx = std::max(mx, W(b, s));
    }
    if (mx == -INFINITY) continue;
    double z = 0.0;
    for (std::size_t s = 0; s < slots; ++s) {
      if (!valid[b * slots + s]) continue;
      W(b, s) = std::exp(W(b, s) - mx);
      z += W(b, s);
    }
    for (std::size_t s = 0; s < slots; ++s) {
      if (!valid[b * slots + s]) continue;
      W(b, s) /= z;
      for (std::size_t c = 0; c < C; ++c) Y(b, c) += W(b, s) * V(b * slots + s, c);
    }
  }
  Var y = push(std::move(Y), nullptr);
  nodes_[y.id].back = [q, k, v, slots, valid, W, inv, y](Tape& t) {
    const Tensor& G = t.nodes_[y.id].grad;
    const Tensor& Q = t.value(q);
    const Tensor& K = t.value(k);
    const Tensor& V = t.value(v);
    Tensor& gq = t.g(q);
    Tensor& gk = t.g(k);
    Tensor& gv = t.g(v);
    const std::size_t B = Q.rows, C = Q.cols;
    std::vector<double> gw(slots);
    for (std::size_t b = 0; b < B; ++b) {
      double dot = 0.0;
      for (std::size_t s = 0; s < slots; ++s) {
        gw[s] = 0.0;
        if (!valid[b * slots + s]) continue;
        for (std::size_t c = 0; c < C; ++c) {
          gw[s] += G(b, c) * V(b * slots + s, c);
          gv(b * slots + s, c) += W(b, s) * G(b, c);
        }
        dot += W(b, s) * gw[s];
      }
      for (std::size_t s = 0; s < slots; ++s) {
        if (!valid[b * slots + s]) continue;
        const double gs = W(b, s) * (gw[s] - dot) * inv;
        for (std::size_t c = 0; c < C; ++c) {
          gq(b, c) += gs * K(b * slots + s, c);
          gk(b * slots + s, c) += gs * Q(b, c);
        }
      }
    }
  };
  return y;
}

Var Tape::row_logits(Var h, Var w, Var b, const Ragged& layout, const std::vector<std::size_t>& rows) {
  const Tensor& H = value(h);
  const Tensor& Wt = value(w);
  const Tensor& Bv = value(b);
  if (layout.rows() != H.rows || layout.total() != rows.size() || Wt.cols != H.cols || Bv.cols != Wt.rows)
    throw ShapeMismatch("row_logits");
  Tensor Y(1, rows.size());
  for (std::size_t i = 0; i < H.rows; ++i) {
    const double* hr = H.row_ptr(i);
    for (std::size_t j = layout.offsets[i]; j < layout.offsets[i + 1]; ++j) {
      const double* wr = Wt.row_ptr(rows[j]);
      double acc = Bv.values[rows[j]];
      for (std::size_t c = 0; c < H.cols; ++c) acc += wr[c] * hr[c];
      Y.values[j] = acc;
    }
  }
  Var y = push(std::move(Y), nullptr);
  nodes_[y.id].back = [h, w, b, layout, rows, y](Tape& t) {
    const Tensor& G = t.nodes_[y.id].grad;
    const Tensor& H = t.value(h);
    const Tensor& Wt = t.value(w);
    Tensor& gh = t.g(h);
    Tensor& gw = t.g(w);
    Tensor& gb = t.g(b);
    for (std::size_t i = 0; i < H.rows; ++i) {
      const double* hr = H.row_ptr(i);
      double* ghr = gh.row_ptr(i);
      for (std::size_t j = layout.offsets[i]; j < layout.offsets[i + 1]; ++j) {
        const double gj = G.values[j];
        if (gj == 0.0) continue;
        gb.values[rows[j]] += gj;
        const double* wr = Wt.row_ptr(rows[j]);
        double* gwr = gw.row_ptr(rows[j]);
        for (std::size_t c = 0; c < H.cols; ++c) {
          gwr[c] += gj * hr[c];
          ghr[c] += gj * wr[c];
        }
      }
    }
  };
  return y;
}

Var Tape::segment_log_softmax(Var flat, const Ragged& layout) {
  const Tensor& X = value(flat);
  if (X.rows != 1 || X.cols != layout.total()) throw ShapeMismatch("segment_log_softmax");
  Tensor Y(1, X.cols);
  for (std::size_t i = 0; i < layout.rows(); ++i) {
    const std::size_t lo = layout.offsets[i], hi = layout.offsets[i + 1];
    if (lo == hi) throw std::invalid_argument("softmax over an empty row");
    double mx = -INFINITY;
    for (std::size_t j = lo; j < hi; ++j) mx = std::max(mx, X.values[j]);
    double z = 0.0;
    for (std::size_t j = lo; j < hi; ++j) z += std::exp(X.values[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = lo; j < hi; ++j) Y.values[j] = X.values[j] - lz;
  }
  Var y = push(std::move(Y), nullptr);
  nodes_[y.id].back = [flat, layout, y](Tape& t) {
    const Tensor& G = t.nodes_[y.id].grad;
    const Tensor& Yv = t.value(y);
    Tensor& gx = t.g(flat);
    for (std::size_t i = 0; i < layout.rows(); ++i) {
      const std::size_t lo = layout.offsets[i], hi = layout.offsets[i + 1];
      double gsum = 0.0;
      for (std::size_t j = lo; j < hi; ++j) gsum += G.values[j];
      for (std::size_t j = lo; j < hi; ++j) gx.values[j] += G.values[j] - std::exp(Yv.values[j]) * gsum;
    }
  };
  return y;
}

Var Tape::segment_entropy(Var logp, const Ragged& layout) {
  const Tensor& L = value(logp);
  if (L.rows != 1 || L.cols != layout.total()) throw ShapeMismatch("segment_entropy");
  Tensor Y(layout.rows(), 1);
  for (std::size_t i = 0; i < layout.rows(); ++i) {
    double h = 0.0;
    for (std::size_t j = layout.offsets[i]; j < layout.offsets[i + 1]; ++j) h -= std::exp(L.values[j]) * L.values[j];
    Y.values[i] = h;
  }
  Var y = push(std::move(Y), nullptr);
  nodes_[y.id].back = [logp, layout, y](Tape& t) {
    const Tensor& G = t.nodes_[y.id].grad;
    const Tensor& L = t.value(logp);
    Tensor& gl = t.g(logp);
    for (std::size_t i = 0; i < layout.rows(); ++i)
      for (std::size_t j = layout.offsets[i]; j < layout.offsets[i + 1]; ++j)
        gl.values[j] -= G.values[i] * std::exp(L.values[j]) * (L.values[j] + 1.0);
  };
  return y;
}

Var Tape::pick(Var flat, const std::vector<std::size_t>& positions) {
  const Tensor& X = value(flat);
  Tensor Y(positions.size(), 1);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (positions[i] >= X.size()) throw ShapeMismatch("pick position out of range");
    Y.values[i] = X.values[positions[i]];
  }
  Var y = push(std::move(Y), nullptr);
  nodes_[y.id].back = [flat, positions, y](Tape& t) {
    const Tensor& G = t.nodes_[y.id].grad;
    Tensor& gx = t.g(flat);
    for (std::size_t i = 0; i < positions.size(); ++i) gx.values[positions[i]] += G.values[i];
  };
  return y;
}

Var Tape::clamp_min(Var a, double floor) {
  Tensor Y = value(a);
  for (double& v : Y.values) v = std::max(v, floor);
  Var y = push(std::move(Y), nullptr);
  nodes_[y.id].back = [a, y, floor](Tape& t) {
    const Tensor& G = t.nodes_[y.id].grad;
    const Tensor& A = t.value(a);
    Tensor& ga = t.g(a);
    for (std::size_t i = 0; i < G.size(); ++i)
      if (A.values[i] >= floor) ga.values[i] += G.values[i];
  };
  return y;
}

Var Tape::sum(Var a) {
  double s = 0.0;
  for (double v : value(a).values) s += v;
  Var y = push(Tensor(1, 1, s), nullptr);
  nodes_[y.id].back = [a, y](Tape& t) {
    const double gy = t.nodes_[y.id].grad.values[0];
    for (double& v : t.g(a).values) v += gy;
  };
  return y;
}

Var Tape::mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(value(a).size())); }

void Tape::backward(Var loss) {
  if (value(loss).size() != 1) throw ShapeMismatch("backward needs a scalar loss");
  for (const Node& n : nodes_)
    if (n.store && n.store->version(n.param_idx) != n.version)
      throw StaleTape("parameter " + n.store->name(n.param_idx) + " changed after the tape was recorded");
  g(loss).values[0] += 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.back) n.back(*this);
    if (n.store) {
      Tensor& pg = n.store->grad(n.param_idx);
      for (std::size_t j = 0; j < pg.size(); ++j) pg.values[j] += n.grad.values[j];
    }
  }
  for (const Node& n : nodes_)
    if (n.grad.size() && !n.grad.all_finite()) throw NonFinite("non-finite gradient");
}

std::vector<double> masked_softmax(const std::vector<double>& logits, const std::vector<bool>* mask) {
  if (mask && mask->size() != logits.size()) throw ShapeMismatch("mask length");
  double mx = -INFINITY;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (!mask || (*mask)[i]) mx = std::max(mx, logits[i]);
  if (mx == -INFINITY) throw std::invalid_argument("softmax with every entry masked");
  std::vector<double> p(logits.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (!mask || (*mask)[i]) z += p[i] = std::exp(logits[i] - mx);
  for (double& v : p) v /= z;
  return p;
}

std::size_t NetSpec::out_width(std::size_t in) const {
  std::size_t w = in;
  for (const auto& b : blocks)
    if (b.kind != BlockSpec::Kind::Residual) w = b.width;
  return w;
}

bool NetSpec::has_gru() const {
  return std::any_of(blocks.begin(), blocks.end(), [](const BlockSpec& b) { return b.kind == BlockSpec::Kind::Gru; });
}

std::size_t NetSpec::gru_width() const {
  for (const auto& b : blocks)
    if (b.kind == BlockSpec::Kind::Gru) return b.width;
  return 0;
}

Net::Net(ParamStore& ps, const std::string& prefix, std::size_t in_dim, NetSpec spec, Rng& rng)
    : spec_(std::move(spec)), in_(in_dim) {
  std::size_t w = in_dim;
  std::size_t grus = 0;
  for (std::size_t i = 0; i < spec_.blocks.size(); ++i) {
    const auto& b = spec_.blocks[i];
    const std::string p = prefix + "." + std::to_string(i) + ".";
    std::vector<std::size_t> ids;
    switch (b.kind) {
      case BlockSpec::Kind::Dense:
        ids.push_back(ps.add(p + "w", init_uniform(b.width, w, w, rng)));
        ids.push_back(ps.add(p + "b", init_uniform(1, b.width, w, rng)));
        w = b.width;
        break;
      case BlockSpec::Kind::Residual:
        ids.push_back(ps.add(p + "w1", init_uniform(w, w, w, rng)));
        ids.push_back(ps.add(p + "b1", init_uniform(1, w, w, rng)));
        ids.push_back(ps.add(p + "w2", init_uniform(w, w, w, rng)));
        ids.push_back(ps.add(p + "b2", init_uniform(1, w, w, rng)));
        break;
      case BlockSpec::Kind::Gru:
        if (++grus > 1) throw std::invalid_argument("at most one GRU block per net");
        for (const char* gate : {"z", "r", "h"}) {
          ids.push_back(ps.add(p + "w" + gate, init_uniform(b.width, w, w, rng)));
          ids.push_back(ps.add(p + "u" + gate, init_uniform(b.width, b.width, b.width, rng)));
          ids.push_back(ps.add(p + "b" + gate, init_uniform(1, b.width, w, rng)));
        }
        w = b.width;
        break;
    }
    ids_.push_back(ids);
  }
  out_ = w;
}

Net::Output Net::forward(Tape& t, ParamStore& ps, Var x, std::optional<Var> hidden) const {
  if (t.value(x).cols != in_) throw ShapeMismatch("net input width");
  Output out;
  auto act = [&](Var v, BlockSpec::Act a) {
    switch (a) {
      case BlockSpec::Act::Tanh: return t.tanh(v);
      case BlockSpec::Act::Sigmoid: return t.sigmoid(v);
      case BlockSpec::Act::Identity: return v;
    }
    return v;
  };
  for (std::size_t i = 0; i < spec_.blocks.size(); ++i) {
    const auto& b = spec_.blocks[i];
    const auto& id = ids_[i];
    auto P = [&](std::size_t j) { return t.param(ps, id[j]); };
    switch (b.kind) {
      case BlockSpec::Kind::Dense: x = act(t.linear(x, P(0), P(1)), b.act); break;
      case BlockSpec::Kind::Residual: {
        Var inner = t.linear(t.tanh(t.linear(x, P(0), P(1))), P(2), P(3));
        x = t.add(x, inner);
        break;
      }
      case BlockSpec::Kind::Gru: {
        Var h = hidden ? *hidden : t.constant(Tensor(t.value(x).rows, b.width));
        if (t.value(h).rows != t.value(x).rows || t.value(h).cols != b.width) throw ShapeMismatch("GRU hidden state");
        Var zero_bias = t.constant(Tensor(1, b.width));
        Var z = t.sigmoid(t.add(t.linear(x, P(0), P(2)), t.linear(h, P(1), zero_bias)));
        Var r = t.sigmoid(t.add(t.linear(x, P(3), P(5)), t.linear(h, P(4), zero_bias)));
        Var cand = t.tanh(t.add(t.linear(x, P(6), P(8)), t.linear(t.mul(r, h), P(7), zero_bias)));
        // h' = (1 − z) ⊙ h + z ⊙ candidate
        x = t.add(t.mul(t.one_minus(z), h), t.mul(z, cand));
        out.hidden = x;
        break;
      }
    }
  }
  out.y = x;
  return out;
}

void Optimizer::step(ParamStore& ps) {
  if (m_.empty())
    for (std::size_t id : ids_) {
      m_.emplace_back(ps.value(id).rows, ps.value(id).cols);
      v_.emplace_back(ps.value(id).rows, ps.value(id).cols);
    }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < ids_.size(); ++k) {
    Tensor& w = ps.value(ids_[k]);
    const Tensor& g = ps.grad(ids_[k]);
    if (cfg_.kind == OptimizerConfig::Kind::Sgd) {
      for (std::size_t i = 0; i < w.size(); ++i) w.values[i] -= cfg_.lr * g.values[i];
    } else {
      double* m = m_[k].values.data();
      double* v = v_[k].values.data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g.values[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        w.values[i] -= cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
      }
    }
    ps.touch(ids_[k]);
  }
}

namespace {

constexpr char kMagic[8] = {'D', 'S', 'L', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::ostream& o, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  o.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<const ParamStore*>& stores) {
  std::ofstream o(path, std::ios::binary);
  if (!o) throw std::runtime_error("cannot write checkpoint " + path);
  o.write(kMagic, 8);
  std::uint64_t count = 0;
  for (const auto* s : stores) count += s->size();
  put_u64(o, count);
  for (const auto* s : stores)
    for (std::size_t i = 0; i < s->size(); ++i) {
      const std::string& name = s->name(i);
      put_u64(o, name.size());
      o.write(name.data(), static_cast<std::streamsize>(name.size()));
      put_u64(o, 2);
      put_u64(o, s->value(i).rows);
      put_u64(o, s->value(i).cols);
      for (double v : s->value(i).values) put_u64(o, std::bit_cast<std::uint64_t>(v));
    }
}

void load_checkpoint(const std::string& path, const std::vector<ParamStore*>& stores) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("not a checkpoint file");
  std::uint64_t expected = 0;
  for (const auto* s : stores) expected += s->size();
  if (get_u64(in) != expected) throw std::runtime_error("checkpoint holds a different number of tensors");
  for (auto* s : stores)
    for (std::size_t i = 0; i < s->size(); ++i) {
      const std::uint64_t len = get_u64(in);
      if (len > 4096) throw std::runtime_error("corrupt checkpoint name");
      std::string name(len, '\0');
      in.read(name.data(), static_cast<std::streamsize>(len));
      if (name != s->name(i)) throw std::runtime_error("checkpoint tensor '" + name + "' does not match " + s->name(i));
      if (get_u64(in) != 2) throw std::runtime_error("checkpoint tensor rank");
      const std::uint64_t r = get_u64(in), c = get_u64(in);
      Tensor& t = s->value(i);
      if (r != t.rows || c != t.cols) throw std::runtime_error("checkpoint shape mismatch for " + name);
      for (double& v : t.values) v = std::bit_cast<double>(get_u64(in));
      s->touch(i);
    }
}

}  // namespace decoysl::nn
