#include "bifleet/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "bifleet/common.hpp"

namespace bifleet {

// ---------------------------------------------------------------------------
// ParamStore

int ParamStore::add(const std::string& name, Tensor init, bool trainable) {
  if (by_name_.count(name)) throw ContractViolation("duplicate parameter name: " + name);
  Param p;
  p.name = name;
  p.grad = Tensor::zeros(init.shape());
  p.value = std::move(init);
  p.trainable = trainable;
  params_.push_back(std::move(p));
  int id = static_cast<int>(params_.size()) - 1;
  by_name_[name] = id;
  return id;
}

int ParamStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? -1 : it->second;
}

void ParamStore::zero_grads() {
  for (auto& p : params_) p.grad.fill(0.0);
}

double ParamStore::squared_norm() const {
  double s = 0.0;
  for (const auto& p : params_) {
    if (!p.trainable) continue;
    for (double v : p.value.flat()) s += v * v;
  }
  return s;
}

int64_t ParamStore::trainable_count() const {
  int64_t n = 0;
  for (const auto& p : params_) {
    if (p.trainable) n += p.value.numel();
  }
  return n;
}

bool ParamStore::all_finite() const {
  for (const auto& p : params_) {
    if (!p.value.all_finite()) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Tape plumbing

Var Tape::emit(Tensor value, std::function<void(Tape&, int)> back) {
  nodes_.push_back(Node{std::move(value), std::move(back), -1});
  return Var{static_cast<int32_t>(nodes_.size()) - 1};
}

void Tape::check(Var v) const {
  if (!v.valid() || v.id >= static_cast<int32_t>(nodes_.size())) {
    throw ContractViolation("invalid tape handle");
  }
}

const Tensor& Tape::val(Var v) const {
  check(v);
  return nodes_[static_cast<size_t>(v.id)].value;
}

Tensor& Tape::grad_buf(int id) {
  return grads_[static_cast<size_t>(id)];
}

const Tensor& Tape::grad(Var v) const {
  check(v);
  if (grads_.empty()) throw ContractViolation("grad() before backward()");
  return grads_[static_cast<size_t>(v.id)];
}

Var Tape::input(Tensor value) {
  return emit(std::move(value), nullptr);
}

Var Tape::param(int param_id) {
  if (!params_) throw ContractViolation("tape has no parameter store");
  auto it = bound_params_.find(param_id);
  if (it != bound_params_.end()) return Var{it->second};
  Var v = emit(params_->at(param_id).value, nullptr);
  nodes_[static_cast<size_t>(v.id)].param_id = param_id;
  bound_params_[param_id] = v.id;
  return v;
}

void Tape::backward(Var loss) {
  check(loss);
  if (val(loss).numel() != 1) {
    throw ContractViolation("backward() requires a scalar loss, got shape " +
                            val(loss).shape_str());
  }
  grads_.clear();
  grads_.reserve(nodes_.size());
  for (const auto& n : nodes_) grads_.push_back(Tensor::zeros(n.value.shape()));
  touched_.assign(nodes_.size(), 0);
  grads_[static_cast<size_t>(loss.id)][0] = 1.0;
  touch(loss.id);

  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    if (!touched_[static_cast<size_t>(i)]) continue;
    auto& node = nodes_[static_cast<size_t>(i)];
    if (node.back) node.back(*this, i);
  }

  if (params_) {
    for (const auto& [pid, nid] : bound_params_) {
      if (!touched_[static_cast<size_t>(nid)]) continue;
      auto& g = params_->at(pid).grad;
      const auto& src = grads_[static_cast<size_t>(nid)];
      for (int64_t k = 0; k < src.numel(); ++k) g[k] += src[k];
    }
  }
}

// ---------------------------------------------------------------------------
// Linear algebra ops

Var Tape::matmul(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows()) {
    throw ShapeError(cat("matmul shape mismatch: ", ta.shape_str(), " x ", tb.shape_str()));
  }
  Tensor out = bifleet::matmul(ta, tb);
  return emit(std::move(out), [a, b](Tape& t, int self) {
    const Tensor& g = t.grad_buf(self);
    matmul_accumulate(g, t.val(b), t.grad_buf(a.id), false, true);   // dA = dC B^T
    matmul_accumulate(t.val(a), g, t.grad_buf(b.id), true, false);   // dB = A^T dC
    t.touch(a.id);
    t.touch(b.id);
  });
}

Var Tape::matvec(Var m, Var v) {
  const Tensor& tm = val(m);
  const Tensor& tv = val(v);
  if (tm.rank() != 2 || tv.rank() != 1 || tm.cols() != tv.dim(0)) {
    throw ShapeError(cat("matvec shape mismatch: ", tm.shape_str(), " x ", tv.shape_str()));
  }
  Tensor out({tm.rows()});
  for (int64_t i = 0; i < tm.rows(); ++i) {
    double acc = 0.0;
    const double* row = tm.data() + i * tm.cols();
    for (int64_t j = 0; j < tm.cols(); ++j) acc += row[j] * tv[j];
    out[i] = acc;
  }
  return emit(std::move(out), [m, v](Tape& t, int self) {
    const Tensor& g = t.grad_buf(self);
    const Tensor& tm = t.val(m);
    const Tensor& tv = t.val(v);
    Tensor& gm = t.grad_buf(m.id);
    Tensor& gv = t.grad_buf(v.id);
    for (int64_t i = 0; i < tm.rows(); ++i) {
      const double gi = g[i];
      if (gi == 0.0) continue;
      double* gmrow = gm.data() + i * tm.cols();
      const double* mrow = tm.data() + i * tm.cols();
      for (int64_t j = 0; j < tm.cols(); ++j) {
        gmrow[j] += gi * tv[j];
        gv[j] += gi * mrow[j];
      }
    }
    t.touch(m.id);
    t.touch(v.id);
  });
}

Var Tape::vecmat(Var v, Var m) {
  const Tensor& tv = val(v);
  const Tensor& tm = val(m);
  if (tv.rank() != 1 || tm.rank() != 2 || tv.dim(0) != tm.rows()) {
    throw ShapeError(cat("vecmat shape mismatch: ", tv.shape_str(), " x ", tm.shape_str()));
  }
  Tensor out({tm.cols()});
  for (int64_t i = 0; i < tm.rows(); ++i) {
    const double vi = tv[i];
    if (vi == 0.0) continue;
    const double* row = tm.data() + i * tm.cols();
    for (int64_t j = 0; j < tm.cols(); ++j) out[j] += vi * row[j];
  }
  return emit(std::move(out), [v, m](Tape& t, int self) {
    const Tensor& g = t.grad_buf(self);
    const Tensor& tv = t.val(v);
    const Tensor& tm = t.val(m);
    Tensor& gv = t.grad_buf(v.id);
    Tensor& gm = t.grad_buf(m.id);
    for (int64_t i = 0; i < tm.rows(); ++i) {
      const double* mrow = tm.data() + i * tm.cols();
      double* gmrow = gm.data() + i * tm.cols();
      double acc = 0.0;
      const double vi = tv[i];
      for (int64_t j = 0; j < tm.cols(); ++j) {
        acc += mrow[j] * g[j];
        gmrow[j] += vi * g[j];
      }
      gv[i] += acc;
    }
    t.touch(v.id);
    t.touch(m.id);
  });
}

Var Tape::dot(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.rank() != 1 || tb.rank() != 1 || ta.dim(0) != tb.dim(0)) {
    throw ShapeError(cat("dot shape mismatch: ", ta.shape_str(), " . ", tb.shape_str()));
  }
  double acc = 0.0;
  for (int64_t i = 0; i < ta.numel(); ++i) acc += ta[i] * tb[i];
  return emit(Tensor::scalar(acc), [a, b](Tape& t, int self) {
    const double g = t.grad_buf(self)[0];
    const Tensor& ta = t.val(a);
    const Tensor& tb = t.val(b);
    Tensor& ga = t.grad_buf(a.id);
    Tensor& gb = t.grad_buf(b.id);
    for (int64_t i = 0; i < ta.numel(); ++i) {
      ga[i] += g * tb[i];
      gb[i] += g * ta[i];
    }
    t.touch(a.id);
    t.touch(b.id);
  });
}

// ---------------------------------------------------------------------------
// Elementwise ops (with scalar broadcast)

namespace {
enum class Broadcast { kNone, kLeftScalar, kRightScalar };

Broadcast broadcast_mode(const Tensor& a, const Tensor& b, const char* opname) {
  if (a.same_shape(b)) return Broadcast::kNone;
  if (a.is_scalar()) return Broadcast::kLeftScalar;
  if (b.is_scalar()) return Broadcast::kRightScalar;
  throw ShapeError(cat(opname, " shape mismatch: ", a.shape_str(), " vs ", b.shape_str()));
}
}  // namespace

Var Tape::add(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  Broadcast mode = broadcast_mode(ta, tb, "add");
  Tensor out = mode == Broadcast::kLeftScalar ? tb : ta;
  if (mode == Broadcast::kNone) {
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] + tb[i];
  } else if (mode == Broadcast::kLeftScalar) {
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[0] + tb[i];
  } else {
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] + tb[0];
  }
  return emit(std::move(out), [a, b, mode](Tape& t, int self) {
    const Tensor& g = t.grad_buf(self);
    Tensor& ga = t.grad_buf(a.id);
    Tensor& gb = t.grad_buf(b.id);
    for (int64_t i = 0; i < g.numel(); ++i) {
      ga[mode == Broadcast::kLeftScalar ? 0 : i] += g[i];
      gb[mode == Broadcast::kRightScalar ? 0 : i] += g[i];
    }
    t.touch(a.id);
    t.touch(b.id);
  });
}

Var Tape::sub(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  Broadcast mode = broadcast_mode(ta, tb, "sub");
  Tensor out = mode == Broadcast::kLeftScalar ? tb : ta;
  if (mode == Broadcast::kNone) {
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] - tb[i];
  } else if (mode == Broadcast::kLeftScalar) {
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[0] - tb[i];
  } else {
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] - tb[0];
  }
  return emit(std::move(out), [a, b, mode](Tape& t, int self) {
    const Tensor& g = t.grad_buf(self);
    Tensor& ga = t.grad_buf(a.id);
    Tensor& gb = t.grad_buf(b.id);
    for (int64_t i = 0; i < g.numel(); ++i) {
      ga[mode == Broadcast::kLeftScalar ? 0 : i] += g[i];
      gb[mode == Broadcast::kRightScalar ? 0 : i] -= g[i];
    }
    t.touch(a.id);
    t.touch(b.id);
  });
}

Var Tape::mul(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  Broadcast mode = broadcast_mode(ta, tb, "mul");
  Tensor out = mode == Broadcast::kLeftScalar ? tb : ta;
  if (mode == Broadcast::kNone) {
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] * tb[i];
  } else if (mode == Broadcast::kLeftScalar) {
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[0] * tb[i];
  } else {
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] * tb[0];
  }
  return emit(std::move(out), [a, b, mode](Tape& t, int self) {
    const Tensor& g = t.grad_buf(self);
    const Tensor& ta = t.val(a);
    const Tensor& tb = t.val(b);
    Tensor& ga = t.grad_buf(a.id);
    Tensor& gb = t.grad_buf(b.id);
    for (int64_t i = 0; i < g.numel(); ++i) {
      const int64_t ia = mode == Broadcast::kLeftScalar ? 0 : i;
      const int64_t ib = mode == Broadcast::kRightScalar ? 0 : i;
      ga[ia] += g[i] * tb[ib];
      gb[ib] += g[i] * ta[ia];
    }
    t.touch(a.id);
    t.touch(b.id);
  });
}

Var Tape::scale(Var a, double c) {
  Tensor out = val(a);
  for (double& x : out.flat()) x *= c;
  return emit(std::move(out), [a, c](Tape& t, int self) {
    const Tensor& g = t.grad_buf(self);
    Tensor& ga = t.grad_buf(a.id);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += c * g[i];
    t.touch(a.id);
  });
}

Var Tape::add_const(Var a, double c) {
  Tensor out = val(a);
  for (double& x : out.flat()) x += c;
  return emit(std::move(out), [a](Tape& t, int self) {
    const Tensor& g = t.grad_buf(self);
    Tensor& ga = t.grad_buf(a.id);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    t.touch(a.id);
  });
}

Var Tape::sigmoid(Var a) {
  Tensor out = val(a);
  for (double& x : out.flat()) x = 1.0 / (1.0 + std::exp(-x));
  return emit(std::move(out), [a](Tape& t, int self) {
    const Tensor& g = t.grad_buf(self);
    const Tensor& y = t.val(Var{self});
    Tensor& ga = t.grad_buf(a.id);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
    t.touch(a.id);
  });
}

Var Tape::tanh_op(Var a) {
  Tensor out = val(a);
  for (double& x : out.flat()) x = std::tanh(x);
  return emit(std::move(out), [a](Tape& t, int self) {
    const Tensor& g = t.grad_buf(self);
    const Tensor& y = t.val(Var{self});
    Tensor& ga = t.grad_buf(a.id);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
    t.touch(a.id);
  });
}

Var Tape::relu(Var a) {
  Tensor out = val(a);
  for (double& x : out.flat()) x = x > 0.0 ? x : 0.0;
  return emit(std::move(out), [a](Tape& t, int self) {
    const Tensor& g = t.grad_buf(self);
    const Tensor& x = t.val(a);
    Tensor& ga = t.grad_buf(a.id);
    for (int64_t i = 0; i < g.numel(); ++i) {
      if (x[i] > 0.0) ga[i] += g[i];
    }
    t.touch(a.id);
  });
}

Var Tape::exp_op(Var a) {
  Tensor out = val(a);
  for (double& x : out.flat()) x = std::exp(x);
  if (!out.all_finite()) throw NumericError("exp overflow to non-finite value");
  return emit(std::move(out), [a](Tape& t, int self) {
    const Tensor& g = t.grad_buf(self);
    const Tensor& y = t.val(Var{self});
    Tensor& ga = t.grad_buf(a.id);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * y[i];
    t.touch(a.id);
  });
}

Var Tape::log_op(Var a) {
  Tensor out = val(a);
  for (double& x : out.flat()) {
    if (x <= 0.0) throw NumericError(cat("log of non-positive value ", x));
    x = std::log(x);
  }
  return emit(std::move(out), [a](Tape& t, int self) {
    const Tensor& g = t.grad_buf(self);
    const Tensor& x = t.val(a);
    Tensor& ga = t.grad_buf(a.id);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] / x[i];
    t.touch(a.id);
  });
}

// ---------------------------------------------------------------------------
// Reductions

Var Tape::softmax(Var v) {
  const Tensor& x = val(v);
  if (x.numel() < 1) throw ContractViolation("softmax on empty tensor");
  if (!x.all_finite()) throw NumericError("softmax input not finite");
  double mx = x[0];
  for (int64_t i = 1; i < x.numel(); ++i) mx = std::max(mx, x[i]);
  Tensor out = x;
  double z = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    out[i] = std::exp(x[i] - mx);
    z += out[i];
  }
  for (int64_t i = 0; i < x.numel(); ++i) out[i] /= z;
  return emit(std::move(out), [v](Tape& t, int self) {
    const Tensor& g = t.grad_buf(self);
    const Tensor& y = t.val(Var{self});
    Tensor& gv = t.grad_buf(v.id);
    double inner = 0.0;
    for (int64_t i = 0; i < g.numel(); ++i) inner += g[i] * y[i];
    for (int64_t i = 0; i < g.numel(); ++i) gv[i] += y[i] * (g[i] - inner);
    t.touch(v.id);
  });
}

Var Tape::logsumexp(Var v) {
  const Tensor& x = val(v);
  if (x.numel() < 1) throw ContractViolation("logsumexp on empty tensor");
  double mx = x[0];
  for (int64_t i = 1; i < x.numel(); ++i) mx = std::max(mx, x[i]);
  double z = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) z += std::exp(x[i] - mx);
  return emit(Tensor::scalar(mx + std::log(z)), [v](Tape& t, int self) {
    const double g = t.grad_buf(self)[0];
    const Tensor& x = t.val(v);
    const double lse = t.val(Var{self})[0];
    Tensor& gv = t.grad_buf(v.id);
    for (int64_t i = 0; i < x.numel(); ++i) gv[i] += g * std::exp(x[i] - lse);
    t.touch(v.id);
  });
}

Var Tape::sum(Var a) {
  const Tensor& x = val(a);
  double s = 0.0;
  for (double v : x.flat()) s += v;
  return emit(Tensor::scalar(s), [a](Tape& t, int self) {
    const double g = t.grad_buf(self)[0];
    Tensor& ga = t.grad_buf(a.id);
    for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
    t.touch(a.id);
  });
}

Var Tape::mean(Var a) {
  const Tensor& x = val(a);
  double s = 0.0;
  for (double v : x.flat()) s += v;
  const double inv = 1.0 / static_cast<double>(x.numel());
  return emit(Tensor::scalar(s * inv), [a, inv](Tape& t, int self) {
    const double g = t.grad_buf(self)[0] * inv;
    Tensor& ga = t.grad_buf(a.id);
    for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
    t.touch(a.id);
  });
}

// ---------------------------------------------------------------------------
// Structural ops

Var Tape::concat(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.rank() != 1 || tb.rank() != 1) {
    throw ShapeError(cat("concat requires vectors: ", ta.shape_str(), " ++ ", tb.shape_str()));
  }
  Tensor out({ta.numel() + tb.numel()});
  for (int64_t i = 0; i < ta.numel(); ++i) out[i] = ta[i];
  for (int64_t i = 0; i < tb.numel(); ++i) out[ta.numel() + i] = tb[i];
  const int64_t na = ta.numel();
  return emit(std::move(out), [a, b, na](Tape& t, int self) {
    const Tensor& g = t.grad_buf(self);
    Tensor& ga = t.grad_buf(a.id);
    Tensor& gb = t.grad_buf(b.id);
    for (int64_t i = 0; i < na; ++i) ga[i] += g[i];
    for (int64_t i = 0; i < gb.numel(); ++i) gb[i] += g[na + i];
    t.touch(a.id);
    t.touch(b.id);
  });
}

Var Tape::slice(Var v, int64_t start, int64_t len) {
  const Tensor& x = val(v);
  if (x.rank() != 1) throw ShapeError("slice requires a vector, got " + x.shape_str());
  if (start < 0 || len <= 0 || start + len > x.numel()) {
    throw ShapeError(cat("slice [", start, ", ", start + len, ") out of range for ",
                         x.shape_str()));
  }
  Tensor out({len});
  for (int64_t i = 0; i < len; ++i) out[i] = x[start + i];
  return emit(std::move(out), [v, start, len](Tape& t, int self) {
    const Tensor& g = t.grad_buf(self);
    Tensor& gv = t.grad_buf(v.id);
    for (int64_t i = 0; i < len; ++i) gv[start + i] += g[i];
    t.touch(v.id);
  });
}

Var Tape::row(Var m, int64_t r) {
  const Tensor& tm = val(m);
  if (tm.rank() != 2) throw ShapeError("row() requires a matrix, got " + tm.shape_str());
  if (r < 0 || r >= tm.rows()) {
    throw ContractViolation(cat("row index ", r, " out of range [0, ", tm.rows(), ")"));
  }
  const int64_t c = tm.cols();
  Tensor out({c});
  for (int64_t j = 0; j < c; ++j) out[j] = tm.at(r, j);
  return emit(std::move(out), [m, r, c](Tape& t, int self) {
    const Tensor& g = t.grad_buf(self);
    Tensor& gm = t.grad_buf(m.id);
    for (int64_t j = 0; j < c; ++j) gm.at(r, j) += g[j];
    t.touch(m.id);
  });
}

Var Tape::stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw ContractViolation("stack_rows of zero rows");
  const int64_t c = val(rows[0]).numel();
  Tensor out({static_cast<int64_t>(rows.size()), c});
  for (size_t i = 0; i < rows.size(); ++i) {
    const Tensor& r = val(rows[i]);
    if (r.rank() != 1 || r.numel() != c) {
      throw ShapeError(cat("stack_rows row ", i, " has shape ", r.shape_str(),
                           ", expected [", c, "]"));
    }
    for (int64_t j = 0; j < c; ++j) out.at(static_cast<int64_t>(i), j) = r[j];
  }
  return emit(std::move(out), [rows, c](Tape& t, int self) {
    const Tensor& g = t.grad_buf(self);
    for (size_t i = 0; i < rows.size(); ++i) {
      Tensor& gr = t.grad_buf(rows[i].id);
      for (int64_t j = 0; j < c; ++j) gr[j] += g.at(static_cast<int64_t>(i), j);
      t.touch(rows[i].id);
    }
  });
}

Var Tape::gather_rows(Var m, std::vector<int64_t> idx) {
  const Tensor& tm = val(m);
  if (tm.rank() != 2) throw ShapeError("gather_rows requires a matrix, got " + tm.shape_str());
  if (idx.empty()) throw ContractViolation("gather_rows with empty index list");
  const int64_t c = tm.cols();
  Tensor out({static_cast<int64_t>(idx.size()), c});
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= tm.rows()) {
      throw ContractViolation(cat("gather_rows index ", idx[i], " out of range [0, ",
                                  tm.rows(), ")"));
    }
    const double* src = tm.data() + idx[i] * c;
    double* dst = out.data() + static_cast<int64_t>(i) * c;
    for (int64_t j = 0; j < c; ++j) dst[j] = src[j];
  }
  auto indices = std::make_shared<std::vector<int64_t>>(std::move(idx));
  return emit(std::move(out), [m, indices, c](Tape& t, int self) {
    const Tensor& g = t.grad_buf(self);
    Tensor& gm = t.grad_buf(m.id);
    for (size_t i = 0; i < indices->size(); ++i) {
      const double* src = g.data() + static_cast<int64_t>(i) * c;
      double* dst = gm.data() + (*indices)[i] * c;
      for (int64_t j = 0; j < c; ++j) dst[j] += src[j];
    }
    t.touch(m.id);
  });
}

Var Tape::scale_columns(Var m, Var v) {
  const Tensor& tm = val(m);
  const Tensor& tv = val(v);
  if (tm.rank() != 2 || tv.rank() != 1 || tm.cols() != tv.numel()) {
    throw ShapeError(cat("scale_columns shape mismatch: ", tm.shape_str(), " vs ",
                         tv.shape_str()));
  }
  Tensor out = tm;
  for (int64_t i = 0; i < tm.rows(); ++i) {
    double* row = out.data() + i * tm.cols();
    for (int64_t j = 0; j < tm.cols(); ++j) row[j] *= tv[j];
  }
  return emit(std::move(out), [m, v](Tape& t, int self) {
    const Tensor& g = t.grad_buf(self);
    const Tensor& tm = t.val(m);
    const Tensor& tv = t.val(v);
    Tensor& gm = t.grad_buf(m.id);
    Tensor& gv = t.grad_buf(v.id);
    for (int64_t i = 0; i < tm.rows(); ++i) {
      const double* grow = g.data() + i * tm.cols();
      const double* mrow = tm.data() + i * tm.cols();
      double* gmrow = gm.data() + i * tm.cols();
      for (int64_t j = 0; j < tm.cols(); ++j) {
        gmrow[j] += grow[j] * tv[j];
        gv[j] += grow[j] * mrow[j];
      }
    }
    t.touch(m.id);
    t.touch(v.id);
  });
}

Var Tape::add_rowvec(Var m, Var v) {
  const Tensor& tm = val(m);
  const Tensor& tv = val(v);
  if (tm.rank() != 2 || tv.rank() != 1 || tm.cols() != tv.numel()) {
    throw ShapeError(cat("add_rowvec shape mismatch: ", tm.shape_str(), " vs ",
                         tv.shape_str()));
  }
  Tensor out = tm;
  for (int64_t i = 0; i < tm.rows(); ++i) {
    double* row = out.data() + i * tm.cols();
    for (int64_t j = 0; j < tm.cols(); ++j) row[j] += tv[j];
  }
  return emit(std::move(out), [m, v](Tape& t, int self) {
    const Tensor& g = t.grad_buf(self);
    Tensor& gm = t.grad_buf(m.id);
    Tensor& gv = t.grad_buf(v.id);
    const int64_t rows = gm.rows(), cols = gm.cols();
    for (int64_t i = 0; i < rows; ++i) {
      const double* grow = g.data() + i * cols;
      double* gmrow = gm.data() + i * cols;
      for (int64_t j = 0; j < cols; ++j) {
        gmrow[j] += grow[j];
        gv[j] += grow[j];
      }
    }
    t.touch(m.id);
    t.touch(v.id);
  });
}

Var Tape::max_over_rows(Var m) {
  const Tensor& tm = val(m);
  if (tm.rank() != 2) throw ShapeError("max_over_rows requires a matrix, got " + tm.shape_str());
  const int64_t rows = tm.rows(), cols = tm.cols();
  Tensor out({cols});
  auto winners = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(cols), 0);
  for (int64_t j = 0; j < cols; ++j) {
    double best = tm.at(0, j);
    int64_t arg = 0;
    for (int64_t i = 1; i < rows; ++i) {
      if (tm.at(i, j) > best) {
        best = tm.at(i, j);
        arg = i;
      }
    }
    out[j] = best;
    (*winners)[static_cast<size_t>(j)] = arg;
  }
  return emit(std::move(out), [m, winners](Tape& t, int self) {
    const Tensor& g = t.grad_buf(self);
    Tensor& gm = t.grad_buf(m.id);
    for (int64_t j = 0; j < g.numel(); ++j) {
      gm.at((*winners)[static_cast<size_t>(j)], j) += g[j];
    }
    t.touch(m.id);
  });
}

Var Tape::l2norm_rows(Var m) {
  const Tensor& tm = val(m);
  const int64_t rows = tm.rank() == 2 ? tm.rows() : 1;
  const int64_t cols = tm.rank() == 2 ? tm.cols() : tm.numel();
  Tensor out = tm;
  for (int64_t i = 0; i < rows; ++i) {
    double* row = out.data() + i * cols;
    double r2 = 0.0;
    for (int64_t j = 0; j < cols; ++j) r2 += row[j] * row[j];
    if (r2 == 0.0) continue;  // zero rows pass through unchanged
    const double inv = 1.0 / std::sqrt(r2);
    for (int64_t j = 0; j < cols; ++j) row[j] *= inv;
  }
  return emit(std::move(out), [m, rows, cols](Tape& t, int self) {
    const Tensor& g = t.grad_buf(self);
    const Tensor& x = t.val(m);
    Tensor& gm = t.grad_buf(m.id);
    for (int64_t i = 0; i < rows; ++i) {
      const double* xrow = x.data() + i * cols;
      const double* grow = g.data() + i * cols;
      double* gmrow = gm.data() + i * cols;
      double r2 = 0.0, xg = 0.0;
      for (int64_t j = 0; j < cols; ++j) {
        r2 += xrow[j] * xrow[j];
        xg += xrow[j] * grow[j];
      }
      if (r2 == 0.0) continue;
      const double r = std::sqrt(r2);
      const double inv = 1.0 / r;
      const double inv3 = inv / r2;
      for (int64_t j = 0; j < cols; ++j) {
        gmrow[j] += grow[j] * inv - xrow[j] * xg * inv3;
      }
    }
    t.touch(m.id);
  });
}

Var Tape::im2col_rows(Var m, int width) {
  const Tensor& tm = val(m);
  if (tm.rank() != 2) throw ShapeError("im2col_rows requires a matrix, got " + tm.shape_str());
  if (width < 1 || width % 2 == 0) {
    throw ContractViolation("im2col_rows width must be odd and positive");
  }
  const int64_t len = tm.rows(), d = tm.cols();
  const int64_t half = width / 2;
  Tensor out({len, width * d});
  for (int64_t i = 0; i < len; ++i) {
    for (int64_t u = 0; u < width; ++u) {
      const int64_t src = i + u - half;
      if (src < 0 || src >= len) continue;  // zero padding
      const double* from = tm.data() + src * d;
      double* to = out.data() + i * width * d + u * d;
      for (int64_t j = 0; j < d; ++j) to[j] = from[j];
    }
  }
  return emit(std::move(out), [m, width, len, d, half](Tape& t, int self) {
    const Tensor& g = t.grad_buf(self);
    Tensor& gm = t.grad_buf(m.id);
    for (int64_t i = 0; i < len; ++i) {
      for (int64_t u = 0; u < width; ++u) {
        const int64_t src = i + u - half;
        if (src < 0 || src >= len) continue;
        const double* grow = g.data() + i * width * d + u * d;
        double* dst = gm.data() + src * d;
        for (int64_t j = 0; j < d; ++j) dst[j] += grow[j];
      }
    }
    t.touch(m.id);
  });
}

// ---------------------------------------------------------------------------
// Linear-chain CRF

namespace {
double lse(const std::vector<double>& xs) {
  double mx = xs[0];
  for (double x : xs) mx = std::max(mx, x);
  double z = 0.0;
  for (double x : xs) z += std::exp(x - mx);
  return mx + std::log(z);
}
}  // namespace

Var Tape::crf_nll(Var emissions, Var transitions, Var start, Var stop,
                  const std::vector<int>& labels) {
  const Tensor& em = val(emissions);
  const Tensor& tr = val(transitions);
  const Tensor& st = val(start);
  const Tensor& sp = val(stop);
  if (em.rank() != 2) throw ShapeError("crf_nll emissions must be [m,L]");
  const int64_t m = em.rows(), L = em.cols();
  if (tr.rank() != 2 || tr.rows() != L || tr.cols() != L) {
    throw ShapeError(cat("crf_nll transitions must be [", L, ",", L, "], got ", tr.shape_str()));
  }
  if (st.numel() != L || sp.numel() != L) {
    throw ShapeError("crf_nll start/stop must have one entry per label");
  }
  if (static_cast<int64_t>(labels.size()) != m) {
    throw ContractViolation(cat("crf_nll got ", labels.size(), " labels for ", m, " tokens"));
  }
  for (int y : labels) {
    if (y < 0 || y >= L) throw ContractViolation(cat("crf_nll label id ", y, " out of range"));
  }

  // Forward recursion in log space; alpha[t][j] includes emissions through t.
  auto alpha = std::make_shared<std::vector<double>>(static_cast<size_t>(m * L));
  std::vector<double> work(static_cast<size_t>(L));
  for (int64_t j = 0; j < L; ++j) (*alpha)[static_cast<size_t>(j)] = st[j] + em.at(0, j);
  for (int64_t t = 1; t < m; ++t) {
    for (int64_t j = 0; j < L; ++j) {
      for (int64_t i = 0; i < L; ++i) {
        work[static_cast<size_t>(i)] =
            (*alpha)[static_cast<size_t>((t - 1) * L + i)] + tr.at(i, j);
      }
      (*alpha)[static_cast<size_t>(t * L + j)] = lse(work) + em.at(t, j);
    }
  }
  for (int64_t j = 0; j < L; ++j) {
    work[static_cast<size_t>(j)] = (*alpha)[static_cast<size_t>((m - 1) * L + j)] + sp[j];
  }
  const double log_z = lse(work);

  double gold = st[labels[0]] + em.at(0, labels[0]);
  for (int64_t t = 1; t < m; ++t) {
    gold += tr.at(labels[t - 1], labels[t]) + em.at(t, labels[t]);
  }
  gold += sp[labels[m - 1]];

  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  return emit(Tensor::scalar(log_z - gold),
              [emissions, transitions, start, stop, alpha, labels_copy, m, L,
               log_z](Tape& t, int self) {
    const double gscale = t.grad_buf(self)[0];
    if (gscale == 0.0) return;
    const Tensor& em = t.val(emissions);
    const Tensor& tr = t.val(transitions);
    // Backward recursion; beta[t][i] completes a path from state i at time t.
    std::vector<double> beta(static_cast<size_t>(m * L));
    const Tensor& sp = t.val(stop);
    std::vector<double> work(static_cast<size_t>(L));
    for (int64_t i = 0; i < L; ++i) beta[static_cast<size_t>((m - 1) * L + i)] = sp[i];
    for (int64_t tt = m - 2; tt >= 0; --tt) {
      for (int64_t i = 0; i < L; ++i) {
        for (int64_t j = 0; j < L; ++j) {
          work[static_cast<size_t>(j)] = tr.at(i, j) + em.at(tt + 1, j) +
                                         beta[static_cast<size_t>((tt + 1) * L + j)];
        }
        beta[static_cast<size_t>(tt * L + i)] = lse(work);
      }
    }

    Tensor& gem = t.grad_buf(emissions.id);
    Tensor& gtr = t.grad_buf(transitions.id);
    Tensor& gst = t.grad_buf(start.id);
    Tensor& gsp = t.grad_buf(stop.id);
    const auto& y = *labels_copy;

    // d logZ / d emission = unary marginals; gold side subtracts indicators.
    for (int64_t tt = 0; tt < m; ++tt) {
      for (int64_t j = 0; j < L; ++j) {
        const double marg = std::exp((*alpha)[static_cast<size_t>(tt * L + j)] +
                                     beta[static_cast<size_t>(tt * L + j)] - log_z);
        double d = marg;
        if (y[static_cast<size_t>(tt)] == j) d -= 1.0;
        gem.at(tt, j) += gscale * d;
      }
    }
    for (int64_t j = 0; j < L; ++j) {
      const double marg0 = std::exp((*alpha)[static_cast<size_t>(j)] +
                                    beta[static_cast<size_t>(j)] - log_z);
      gst[j] += gscale * (marg0 - (y[0] == j ? 1.0 : 0.0));
      const double margN = std::exp((*alpha)[static_cast<size_t>((m - 1) * L + j)] +
                                    beta[static_cast<size_t>((m - 1) * L + j)] - log_z);
      gsp[j] += gscale * (margN - (y[static_cast<size_t>(m - 1)] == j ? 1.0 : 0.0));
    }
    for (int64_t tt = 0; tt + 1 < m; ++tt) {
      for (int64_t i = 0; i < L; ++i) {
        const double ai = (*alpha)[static_cast<size_t>(tt * L + i)];
        for (int64_t j = 0; j < L; ++j) {
          const double pair = std::exp(ai + tr.at(i, j) + em.at(tt + 1, j) +
                                       beta[static_cast<size_t>((tt + 1) * L + j)] - log_z);
          gtr.at(i, j) += gscale * pair;
        }
      }
      gtr.at(y[static_cast<size_t>(tt)], y[static_cast<size_t>(tt + 1)]) -= gscale;
    }
    t.touch(emissions.id);
    t.touch(transitions.id);
    t.touch(start.id);
    t.touch(stop.id);
  });
}

Var Tape::crf_hinge(Var emissions, Var transitions, Var start, Var stop,
                    const std::vector<int>& labels) {
  const Tensor& em = val(emissions);
  const int64_t m = em.rows(), L = em.cols();
  if (static_cast<int64_t>(labels.size()) != m) {
    throw ContractViolation("crf_hinge label count does not match emission rows");
  }
  // Loss-augmented decode: +1 on every emission that disagrees with gold.
  Tensor aug = em;
  for (int64_t t = 0; t < m; ++t) {
    for (int64_t j = 0; j < L; ++j) {
      if (j != labels[static_cast<size_t>(t)]) aug.at(t, j) += 1.0;
    }
  }
  const Tensor& tr = val(transitions);
  const Tensor& st = val(start);
  const Tensor& sp = val(stop);
  auto best = std::make_shared<std::vector<int>>(crf_viterbi(aug, tr, st, sp));

  auto path_score = [&](const std::vector<int>& y, const Tensor& e) {
    double s = st[y[0]] + e.at(0, y[0]);
    for (int64_t t = 1; t < m; ++t) s += tr.at(y[t - 1], y[t]) + e.at(t, y[t]);
    return s + sp[y[static_cast<size_t>(m - 1)]];
  };
  const double margin = path_score(*best, aug) - path_score(labels, em);
  const double loss = margin > 0.0 ? margin : 0.0;

  auto gold = std::make_shared<std::vector<int>>(labels);
  const bool active = margin > 0.0;
  return emit(Tensor::scalar(loss),
              [emissions, transitions, start, stop, best, gold, m, active](Tape& t, int self) {
    if (!active) return;
    const double g = t.grad_buf(self)[0];
    if (g == 0.0) return;
    Tensor& gem = t.grad_buf(emissions.id);
    Tensor& gtr = t.grad_buf(transitions.id);
    Tensor& gst = t.grad_buf(start.id);
    Tensor& gsp = t.grad_buf(stop.id);
    const auto& b = *best;
    const auto& y = *gold;
    gst[b[0]] += g;
    gst[y[0]] -= g;
    gsp[b[static_cast<size_t>(m - 1)]] += g;
    gsp[y[static_cast<size_t>(m - 1)]] -= g;
    for (int64_t tt = 0; tt < m; ++tt) {
      gem.at(tt, b[static_cast<size_t>(tt)]) += g;
      gem.at(tt, y[static_cast<size_t>(tt)]) -= g;
      if (tt > 0) {
        gtr.at(b[static_cast<size_t>(tt - 1)], b[static_cast<size_t>(tt)]) += g;
        gtr.at(y[static_cast<size_t>(tt - 1)], y[static_cast<size_t>(tt)]) -= g;
      }
    }
    t.touch(emissions.id);
    t.touch(transitions.id);
    t.touch(start.id);
    t.touch(stop.id);
  });
}

Var Tape::hinge_multiclass(Var scores, int gold) {
  const Tensor& s = val(scores);
  if (s.rank() != 1) throw ShapeError("hinge_multiclass requires a vector");
  const int64_t n = s.numel();
  if (gold < 0 || gold >= n) throw ContractViolation("hinge_multiclass gold out of range");
  if (n == 1) return emit(Tensor::scalar(0.0), nullptr);
  int64_t violator = -1;
  double best = -1e300;
  for (int64_t k = 0; k < n; ++k) {
    if (k == gold) continue;
    if (s[k] > best) {
      best = s[k];
      violator = k;
    }
  }
  const double margin = best + 1.0 - s[gold];
  const double loss = margin > 0.0 ? margin : 0.0;
  const bool active = margin > 0.0;
  return emit(Tensor::scalar(loss), [scores, gold, violator, active](Tape& t, int self) {
    if (!active) return;
    const double g = t.grad_buf(self)[0];
    if (g == 0.0) return;
    Tensor& gs = t.grad_buf(scores.id);
    gs[violator] += g;
    gs[gold] -= g;
    t.touch(scores.id);
  });
}

std::vector<int> crf_viterbi(const Tensor& emissions, const Tensor& transitions,
                             const Tensor& start, const Tensor& stop) {
  if (emissions.rank() != 2) throw ShapeError("crf_viterbi emissions must be [m,L]");
  const int64_t m = emissions.rows(), L = emissions.cols();
  if (transitions.rows() != L || transitions.cols() != L || start.numel() != L ||
      stop.numel() != L) {
    throw ShapeError("crf_viterbi parameter shapes disagree with emissions");
  }

  std::vector<double> score(static_cast<size_t>(L));
  std::vector<double> next(static_cast<size_t>(L));
  std::vector<int> back(static_cast<size_t>((m > 1 ? m - 1 : 0) * L));
  for (int64_t j = 0; j < L; ++j) score[static_cast<size_t>(j)] = start[j] + emissions.at(0, j);

  for (int64_t t = 1; t < m; ++t) {
    for (int64_t j = 0; j < L; ++j) {
      double best = -std::numeric_limits<double>::infinity();
      int arg = 0;
      for (int64_t i = 0; i < L; ++i) {
        const double s = score[static_cast<size_t>(i)] + transitions.at(i, j);
        if (s > best) {  // strict: ties keep the lowest predecessor id
          best = s;
          arg = static_cast<int>(i);
        }
      }
      next[static_cast<size_t>(j)] = best + emissions.at(t, j);
      back[static_cast<size_t>((t - 1) * L + j)] = arg;
    }
    score.swap(next);
  }

  double best = -std::numeric_limits<double>::infinity();
  int last = 0;
  for (int64_t j = 0; j < L; ++j) {
    const double s = score[static_cast<size_t>(j)] + stop[j];
    if (s > best) {
      best = s;
      last = static_cast<int>(j);
    }
  }

  std::vector<int> path(static_cast<size_t>(m));
  path[static_cast<size_t>(m - 1)] = last;
  for (int64_t t = m - 2; t >= 0; --t) {
    path[static_cast<size_t>(t)] =
        back[static_cast<size_t>(t * L + path[static_cast<size_t>(t + 1)])];
  }
  return path;
}

}  // namespace bifleet
