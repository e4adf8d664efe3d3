#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "tokf/errors.hpp"
#include "tokf/tensor.hpp"

namespace tokf::ad {

// Handle to a node on a Tape.
struct Var {
  std::int32_t id = -1;
};

// Append-only reverse-mode tape. Nodes are topologically ordered by
// construction: an op may only reference vars created earlier. One backward
// pass per tape; gradients accumulate additively across fan-out, which is what
// makes weight tying (one tensor used in two places) come out right.
template <class T>
class Tape {
 public:
  using BackFn = std::function<void(Tape&, std::int32_t self)>;

  Var leaf(Tensor<T> value) { return push(std::move(value), nullptr); }

  Var push(Tensor<T> value, BackFn back) {
    nodes_.push_back(Node{std::move(value), Tensor<T>{}, false, std::move(back)});
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  const Tensor<T>& value(Var v) const { return node(v).value; }

  // Gradient of v (zeros if the loss never touched it). Meaningful after backward().
  const Tensor<T>& grad(Var v) { return grad_ref(v); }

  Tensor<T>& grad_ref(Var v) {
    Node& n = node(v);
    if (!n.grad_alloc) {
      n.grad = Tensor<T>(n.value.shape());
      n.grad_alloc = true;
    }
    return n.grad;
  }

  void accumulate(Var v, const Tensor<T>& g) {
    Tensor<T>& dst = grad_ref(v);
    for (std::int64_t i = 0; i < dst.numel(); ++i) dst(i) += g(i);
  }

  void backward(Var loss) {
    if (backward_done_) throw StateError("backward already run on this tape; re-record first");
    if (node(loss).value.numel() != 1) {
      throw StateError("backward requires a scalar loss, got shape " +
                       node(loss).value.shape_str());
    }
    backward_done_ = true;
    grad_ref(loss)(0) = T(1);
    for (std::int32_t i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.grad_alloc || !n.back) continue;
      n.back(*this, i);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool grad_alloc = false;
    BackFn back;
  };

  Node& node(Var v) { return nodes_.at(static_cast<std::size_t>(v.id)); }
  const Node& node(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)); }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// ---- primitive ops ---------------------------------------------------------

template <class T>
Var add(Tape<T>& t, Var a, Var b) {
  return t.push(tokf::add(t.value(a), t.value(b)), [a, b](Tape<T>& tp, std::int32_t self) {
    const Tensor<T>& g = tp.grad(Var{self});
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

template <class T>
Var scale(Tape<T>& t, Var a, T c) {
  return t.push(tokf::scale(t.value(a), c), [a, c](Tape<T>& tp, std::int32_t self) {
    tp.accumulate(a, tokf::scale(tp.grad(Var{self}), c));
  });
}

template <class T>
Var add_scalar(Tape<T>& t, Var a, T c) {
  Tensor<T> out = t.value(a);
  for (std::int64_t i = 0; i < out.numel(); ++i) out(i) += c;
  return t.push(std::move(out), [a](Tape<T>& tp, std::int32_t self) {
    tp.accumulate(a, tp.grad(Var{self}));
  });
}

template <class T>
Var hadamard(Tape<T>& t, Var a, Var b) {
  return t.push(tokf::hadamard(t.value(a), t.value(b)),
                [a, b](Tape<T>& tp, std::int32_t self) {
                  const Tensor<T>& g = tp.grad(Var{self});
                  tp.accumulate(a, tokf::hadamard(g, tp.value(b)));
                  tp.accumulate(b, tokf::hadamard(g, tp.value(a)));
                });
}

template <class T>
Var square(Tape<T>& t, Var a) {
  return t.push(tokf::hadamard(t.value(a), t.value(a)),
                [a](Tape<T>& tp, std::int32_t self) {
                  Tensor<T> contrib = tokf::hadamard(tp.grad(Var{self}), tp.value(a));
                  tp.accumulate(a, tokf::scale(contrib, T(2)));
                });
}

// Elementwise square root; inputs must be strictly positive.
template <class T>
Var sqrt_op(Tape<T>& t, Var a) {
  Tensor<T> out = t.value(a);
  for (std::int64_t i = 0; i < out.numel(); ++i) out(i) = std::sqrt(out(i));
  return t.push(std::move(out), [a](Tape<T>& tp, std::int32_t self) {
    const Tensor<T>& g = tp.grad(Var{self});
    const Tensor<T>& out = tp.value(Var{self});
    Tensor<T>& dst = tp.grad_ref(a);
    for (std::int64_t i = 0; i < dst.numel(); ++i) dst(i) += g(i) * T(0.5) / out(i);
  });
}

template <class T>
Var gelu(Tape<T>& t, Var a) {
  return t.push(tokf::gelu(t.value(a)), [a](Tape<T>& tp, std::int32_t self) {
    tp.accumulate(a, tokf::hadamard(tp.grad(Var{self}), tokf::gelu_prime(tp.value(a))));
  });
}

template <class T>
Var matmul(Tape<T>& t, Var a, Var b) {
  return t.push(tokf::matmul(t.value(a), t.value(b)),
                [a, b](Tape<T>& tp, std::int32_t self) {
                  const Tensor<T>& g = tp.grad(Var{self});
                  tp.accumulate(a, tokf::matmul_nt(g, tp.value(b)));
                  tp.accumulate(b, tokf::matmul_tn(tp.value(a), g));
                });
}

// out = a * b^T.
template <class T>
Var matmul_nt(Tape<T>& t, Var a, Var b) {
  return t.push(tokf::matmul_nt(t.value(a), t.value(b)),
                [a, b](Tape<T>& tp, std::int32_t self) {
                  const Tensor<T>& g = tp.grad(Var{self});
                  tp.accumulate(a, tokf::matmul(g, tp.value(b)));
                  tp.accumulate(b, tokf::matmul_tn(g, tp.value(a)));
                });
}

// [m x n] -> [m x 1].
template <class T>
Var row_sum(Tape<T>& t, Var a) {
  const Tensor<T>& av = t.value(a);
  Tensor<T> out({av.rows(), 1});
  for (std::int64_t i = 0; i < av.rows(); ++i) {
    T acc = 0;
    for (std::int64_t j = 0; j < av.cols(); ++j) acc += av(i, j);
    out(i, 0) = acc;
  }
  return t.push(std::move(out), [a](Tape<T>& tp, std::int32_t self) {
    const Tensor<T>& g = tp.grad(Var{self});
    Tensor<T>& dst = tp.grad_ref(a);
    for (std::int64_t i = 0; i < dst.rows(); ++i)
      for (std::int64_t j = 0; j < dst.cols(); ++j) dst(i, j) += g(i, 0);
  });
}

// out[i][j] = a[i][j] - c[i]  (c is [m x 1]).
template <class T>
Var sub_colvec(Tape<T>& t, Var a, Var c) {
  const Tensor<T>& av = t.value(a);
  const Tensor<T>& cv = t.value(c);
  Tensor<T> out = av;
  for (std::int64_t i = 0; i < av.rows(); ++i)
    for (std::int64_t j = 0; j < av.cols(); ++j) out(i, j) -= cv(i, 0);
  return t.push(std::move(out), [a, c](Tape<T>& tp, std::int32_t self) {
    const Tensor<T>& g = tp.grad(Var{self});
    tp.accumulate(a, g);
    Tensor<T>& dc = tp.grad_ref(c);
    for (std::int64_t i = 0; i < g.rows(); ++i)
      for (std::int64_t j = 0; j < g.cols(); ++j) dc(i, 0) -= g(i, j);
  });
}

// out[i][j] = a[i][j] / c[i]  (c is [m x 1], nonzero).
template <class T>
Var div_colvec(Tape<T>& t, Var a, Var c) {
  return t.push(tokf::div_colvec(t.value(a), t.value(c)),
                [a, c](Tape<T>& tp, std::int32_t self) {
                  const Tensor<T>& g = tp.grad(Var{self});
                  const Tensor<T>& out = tp.value(Var{self});
                  const Tensor<T>& cv = tp.value(c);
                  Tensor<T>& da = tp.grad_ref(a);
                  Tensor<T>& dc = tp.grad_ref(c);
                  for (std::int64_t i = 0; i < g.rows(); ++i) {
                    const T inv = T(1) / cv(i, 0);
                    T acc = 0;
                    for (std::int64_t j = 0; j < g.cols(); ++j) {
                      da(i, j) += g(i, j) * inv;
                      acc += g(i, j) * out(i, j);
                    }
                    dc(i, 0) -= acc * inv;
                  }
                });
}

// r[i] = max(||a_i||_2, eps). Rows at or below eps pass no gradient (the clamp
// is active there), which keeps zero rows differentiable.
template <class T>
Var clamped_row_l2_norm(Tape<T>& t, Var a, T eps) {
  return t.push(tokf::clamped_row_l2_norm(t.value(a), eps),
                [a, eps](Tape<T>& tp, std::int32_t self) {
                  const Tensor<T>& g = tp.grad(Var{self});
                  const Tensor<T>& r = tp.value(Var{self});
                  const Tensor<T>& av = tp.value(a);
                  Tensor<T>& da = tp.grad_ref(a);
                  for (std::int64_t i = 0; i < av.rows(); ++i) {
                    if (!(r(i, 0) > eps)) continue;
                    const T coeff = g(i, 0) / r(i, 0);
                    for (std::int64_t j = 0; j < av.cols(); ++j) da(i, j) += coeff * av(i, j);
                  }
                });
}

// r[i] = max(sum_j |a_ij|, eps).
template <class T>
Var clamped_row_l1_norm(Tape<T>& t, Var a, T eps) {
  const Tensor<T>& av = t.value(a);
  Tensor<T> r({av.rows(), 1});
  for (std::int64_t i = 0; i < av.rows(); ++i) {
    T acc = 0;
    for (std::int64_t j = 0; j < av.cols(); ++j) acc += std::abs(av(i, j));
    r(i, 0) = std::max(acc, eps);
  }
  return t.push(std::move(r), [a, eps](Tape<T>& tp, std::int32_t self) {
    const Tensor<T>& g = tp.grad(Var{self});
    const Tensor<T>& r = tp.value(Var{self});
    const Tensor<T>& av = tp.value(a);
    Tensor<T>& da = tp.grad_ref(a);
    for (std::int64_t i = 0; i < av.rows(); ++i) {
      if (!(r(i, 0) > eps)) continue;
      for (std::int64_t j = 0; j < av.cols(); ++j) {
        const T s = av(i, j) > T(0) ? T(1) : (av(i, j) < T(0) ? T(-1) : T(0));
        da(i, j) += g(i, 0) * s;
      }
    }
  });
}

// out[i][j] = a[i][j] * g[j]  (g is [1 x n]).
template <class T>
Var mul_rowvec(Tape<T>& t, Var a, Var g) {
  const Tensor<T>& av = t.value(a);
  const Tensor<T>& gv = t.value(g);
  if (gv.rank() != 2 || gv.rows() != 1 || gv.cols() != av.cols()) {
    throw DimensionError("mul_rowvec rhs must be [1x" + std::to_string(av.cols()) + "], got " +
                         gv.shape_str());
  }
  Tensor<T> out = av;
  for (std::int64_t i = 0; i < av.rows(); ++i)
    for (std::int64_t j = 0; j < av.cols(); ++j) out(i, j) *= gv(0, j);
  return t.push(std::move(out), [a, g](Tape<T>& tp, std::int32_t self) {
    const Tensor<T>& grad = tp.grad(Var{self});
    const Tensor<T>& av = tp.value(a);
    const Tensor<T>& gv = tp.value(g);
    Tensor<T>& da = tp.grad_ref(a);
    Tensor<T>& dg = tp.grad_ref(g);
    for (std::int64_t i = 0; i < av.rows(); ++i) {
      for (std::int64_t j = 0; j < av.cols(); ++j) {
        da(i, j) += grad(i, j) * gv(0, j);
        dg(0, j) += grad(i, j) * av(i, j);
      }
    }
  });
}

// out[i][j] = a[i][j] + b[j]  (b is [1 x n]).
template <class T>
Var add_rowvec(Tape<T>& t, Var a, Var b) {
  const Tensor<T>& av = t.value(a);
  const Tensor<T>& bv = t.value(b);
  if (bv.rank() != 2 || bv.rows() != 1 || bv.cols() != av.cols()) {
    throw DimensionError("add_rowvec rhs must be [1x" + std::to_string(av.cols()) + "], got " +
                         bv.shape_str());
  }
  Tensor<T> out = av;
  for (std::int64_t i = 0; i < av.rows(); ++i)
    for (std::int64_t j = 0; j < av.cols(); ++j) out(i, j) += bv(0, j);
  return t.push(std::move(out), [a, b](Tape<T>& tp, std::int32_t self) {
    const Tensor<T>& grad = tp.grad(Var{self});
    tp.accumulate(a, grad);
    Tensor<T>& db = tp.grad_ref(b);
    for (std::int64_t i = 0; i < grad.rows(); ++i)
      for (std::int64_t j = 0; j < grad.cols(); ++j) db(0, j) += grad(i, j);
  });
}

template <class T>
Var softmax(Tape<T>& t, Var a, bool causal = false) {
  return t.push(tokf::softmax_rows(t.value(a), causal),
                [a](Tape<T>& tp, std::int32_t self) {
                  const Tensor<T>& g = tp.grad(Var{self});
                  const Tensor<T>& s = tp.value(Var{self});
                  Tensor<T>& da = tp.grad_ref(a);
                  for (std::int64_t i = 0; i < s.rows(); ++i) {
                    T dot = 0;
                    for (std::int64_t j = 0; j < s.cols(); ++j) dot += g(i, j) * s(i, j);
                    for (std::int64_t j = 0; j < s.cols(); ++j)
                      da(i, j) += s(i, j) * (g(i, j) - dot);
                  }
                });
}

template <class T>
Var slice_rows(Tape<T>& t, Var a, std::int64_t start, std::int64_t count) {
  return t.push(tokf::slice_rows(t.value(a), start, count),
                [a, start, count](Tape<T>& tp, std::int32_t self) {
                  const Tensor<T>& g = tp.grad(Var{self});
                  Tensor<T>& da = tp.grad_ref(a);
                  for (std::int64_t i = 0; i < count; ++i)
                    for (std::int64_t j = 0; j < g.cols(); ++j) da(start + i, j) += g(i, j);
                });
}

template <class T>
Var slice_cols(Tape<T>& t, Var a, std::int64_t start, std::int64_t count) {
  return t.push(tokf::slice_cols(t.value(a), start, count),
                [a, start, count](Tape<T>& tp, std::int32_t self) {
                  const Tensor<T>& g = tp.grad(Var{self});
                  Tensor<T>& da = tp.grad_ref(a);
                  for (std::int64_t i = 0; i < g.rows(); ++i)
                    for (std::int64_t j = 0; j < count; ++j) da(i, start + j) += g(i, j);
                });
}

template <class T>
Var concat_cols(Tape<T>& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols needs at least one part");
  std::int64_t rows = t.value(parts[0]).rows();
  std::int64_t cols = 0;
  for (Var p : parts) cols += t.value(p).cols();
  Tensor<T> out({rows, cols});
  std::int64_t off = 0;
  for (Var p : parts) {
    const Tensor<T>& pv = t.value(p);
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t j = 0; j < pv.cols(); ++j) out(i, off + j) = pv(i, j);
    off += pv.cols();
  }
  return t.push(std::move(out), [parts](Tape<T>& tp, std::int32_t self) {
    const Tensor<T>& g = tp.grad(Var{self});
    std::int64_t off = 0;
    for (Var p : parts) {
      Tensor<T>& dp = tp.grad_ref(p);
      for (std::int64_t i = 0; i < dp.rows(); ++i)
        for (std::int64_t j = 0; j < dp.cols(); ++j) dp(i, j) += g(i, off + j);
      off += dp.cols();
    }
  });
}

// Row gather: out[t] = table[ids[t]]. Backward scatter-adds into the table.
template <class T>
Var embed(Tape<T>& t, Var table, std::vector<std::int32_t> ids) {
  const Tensor<T>& tab = t.value(table);
  Tensor<T> out({static_cast<std::int64_t>(ids.size()), tab.cols()});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tab.rows()) {
      throw DataError("token id " + std::to_string(ids[i]) + " out of range [0, " +
                      std::to_string(tab.rows()) + ")");
    }
    std::copy(tab.row_ptr(ids[i]), tab.row_ptr(ids[i]) + tab.cols(),
              out.row_ptr(static_cast<std::int64_t>(i)));
  }
  return t.push(std::move(out),
                [table, ids = std::move(ids)](Tape<T>& tp, std::int32_t self) {
                  const Tensor<T>& g = tp.grad(Var{self});
                  Tensor<T>& dt = tp.grad_ref(table);
                  for (std::size_t i = 0; i < ids.size(); ++i)
                    for (std::int64_t j = 0; j < g.cols(); ++j)
                      dt(ids[i], j) += g(static_cast<std::int64_t>(i), j);
                });
}

template <class T>
Var sum_all(Tape<T>& t, Var a) {
  const Tensor<T>& av = t.value(a);
  T acc = 0;
  for (std::int64_t i = 0; i < av.numel(); ++i) acc += av(i);
  return t.push(Tensor<T>({1}, {acc}), [a](Tape<T>& tp, std::int32_t self) {
    const T g = tp.grad(Var{self})(0);
    Tensor<T>& da = tp.grad_ref(a);
    for (std::int64_t i = 0; i < da.numel(); ++i) da(i) += g;
  });
}

// Mean over positions of -log softmax(logits)[target], log-sum-exp stabilized.
template <class T>
Var cross_entropy(Tape<T>& t, Var logits, std::vector<std::int32_t> targets) {
  const Tensor<T>& lv = t.value(logits);
  const std::int64_t n = lv.rows(), v = lv.cols();
  if (static_cast<std::int64_t>(targets.size()) != n) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(n) + " rows");
  }
  Tensor<T> probs({n, v});
  T loss = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (targets[i] < 0 || targets[i] >= v) {
      throw DataError("cross_entropy target " + std::to_string(targets[i]) + " out of range");
    }
    const T* row = lv.row_ptr(i);
    T maxv = row[0];
    for (std::int64_t j = 1; j < v; ++j) maxv = std::max(maxv, row[j]);
    T sum = 0;
    T* prow = probs.row_ptr(i);
    for (std::int64_t j = 0; j < v; ++j) {
      prow[j] = std::exp(row[j] - maxv);
      sum += prow[j];
    }
    for (std::int64_t j = 0; j < v; ++j) prow[j] /= sum;
    loss += std::log(sum) + maxv - row[targets[i]];
  }
  loss /= static_cast<T>(n);
  return t.push(Tensor<T>({1}, {loss}),
                [logits, targets = std::move(targets), probs = std::move(probs)](
                    Tape<T>& tp, std::int32_t self) {
                  const T g = tp.grad(Var{self})(0);
                  Tensor<T>& dl = tp.grad_ref(logits);
                  const T inv_n = T(1) / static_cast<T>(probs.rows());
                  for (std::int64_t i = 0; i < probs.rows(); ++i) {
                    for (std::int64_t j = 0; j < probs.cols(); ++j)
                      dl(i, j) += g * inv_n * probs(i, j);
                    dl(i, targets[static_cast<std::size_t>(i)]) -= g * inv_n;
                  }
                });
}

// ---- finite-difference oracle ----------------------------------------------

template <class T>
struct GradCheckReport {
  T max_abs_err = 0;
  T max_rel_err = 0;
};

// Central differences over every coordinate of every input, compared against
// the tape gradient. Relative error per coordinate: |ad-fd|/max(|ad|,|fd|,1),
// i.e. absolute below unit scale and relative above it. Sub-unit coordinates
// carry O(h^2) truncation and O(eps*|f|/h) roundoff that would swamp a naive
// ratio; a genuine backward bug perturbs them by their own magnitude and still
// trips the threshold.
template <class T, class F>
GradCheckReport<T> grad_check_multi(F f, std::vector<Tensor<T>> inputs, T h) {
  if (!(h > T(0))) throw ConfigError("grad_check h must be positive");
  std::vector<Tensor<T>> ad_grads;
  {
    Tape<T> tape;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const auto& in : inputs) vars.push_back(tape.leaf(in));
    Var loss = f(tape, vars);
    tape.backward(loss);
    for (Var v : vars) ad_grads.push_back(tape.grad(v));
  }
  auto eval = [&f](const std::vector<Tensor<T>>& xs) -> T {
    Tape<T> tape;
    std::vector<Var> vars;
    vars.reserve(xs.size());
    for (const auto& x : xs) vars.push_back(tape.leaf(x));
    const T out = tape.value(f(tape, vars))(0);
    if (!std::isfinite(out)) throw NumericError("grad_check: non-finite function value");
    return out;
  };
  GradCheckReport<T> report;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::int64_t i = 0; i < inputs[k].numel(); ++i) {
      const T orig = inputs[k](i);
      inputs[k](i) = orig + h;
      const T fp = eval(inputs);
      inputs[k](i) = orig - h;
      const T fm = eval(inputs);
      inputs[k](i) = orig;
      const T fd = (fp - fm) / (2 * h);
      const T ad = ad_grads[k](i);
      const T abs_err = std::abs(ad - fd);
      const T rel_err = abs_err / std::max({std::abs(ad), std::abs(fd), T(1)});
      report.max_abs_err = std::max(report.max_abs_err, abs_err);
      report.max_rel_err = std::max(report.max_rel_err, rel_err);
    }
  }
  return report;
}

template <class T, class F>
GradCheckReport<T> grad_check(F f, const Tensor<T>& x, T h) {
  return grad_check_multi<T>(
      [&f](Tape<T>& tape, const std::vector<Var>& vars) { return f(tape, vars[0]); }, {x}, h);
}

}  // namespace tokf::ad
