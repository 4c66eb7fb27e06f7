// SPDX-License-Identifier: Apache-2.0
#include "seekqa/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace seekqa::ad {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var Tape::push(std::vector<double> value, std::size_t rows, std::size_t cols, bool needs_grad,
               std::function<void(Tape&, const Node&)> back) {
  Node n;
  n.value = std::move(value);
  n.rows = rows;
  n.cols = cols;
  n.needs_grad = needs_grad;
  if (needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

std::vector<double>& Tape::grad(Var v) {
  auto& n = nodes_[v.id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::check_same(Var a, Var b, const char* op) const {
  if (size(a) != size(b)) {
    throw std::invalid_argument(std::string("tape ") + op + ": size mismatch " +
                                std::to_string(size(a)) + " vs " + std::to_string(size(b)));
  }
}

Var Tape::constant(std::vector<double> value, std::size_t rows, std::size_t cols) {
  if (value.size() != rows * cols) throw std::invalid_argument("tape constant: bad shape");
  return push(std::move(value), rows, cols, false, nullptr);
}

Var Tape::param(Parameter& p) {
  for (const auto& [id, bound] : bound_) {
    if (bound == &p) return Var{id};
  }
  Var v = push(p.value, p.rows, p.cols, true, [](Tape&, const Node&) {});
  bound_.emplace_back(v.id, &p);
  return v;
}

Var Tape::matvec(Var m, Var x) {
  const auto& mn = nodes_[m.id];
  const std::size_t rows = mn.rows, cols = mn.cols;
  if (size(x) != cols) {
    throw std::invalid_argument("tape matvec: " + std::to_string(rows) + "x" + std::to_string(cols) +
                                " times vector of " + std::to_string(size(x)));
  }
  std::vector<double> out(rows, 0.0);
  const auto& mv = mn.value;
  const auto& xv = value(x);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0;
    const double* row = mv.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) s += row[c] * xv[c];
    out[r] = s;
  }
  return push(std::move(out), rows, 1, needs(m) || needs(x), [m, x, rows, cols](Tape& t, const Node& self) {
    const auto& g = self.grad;
    if (t.needs(m)) {
      auto& gm = t.grad(m);
      const auto& xv = t.value(x);
      for (std::size_t r = 0; r < rows; ++r) {
        if (g[r] == 0) continue;
        double* row = gm.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) row[c] += g[r] * xv[c];
      }
    }
    if (t.needs(x)) {
      auto& gx = t.grad(x);
      const auto& mv = t.value(m);
      for (std::size_t r = 0; r < rows; ++r) {
        if (g[r] == 0) continue;
        const double* row = mv.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) gx[c] += g[r] * row[c];
      }
    }
  });
}

Var Tape::add(Var a, Var b) {
  check_same(a, b, "add");
  std::vector<double> out = value(a);
  const auto& bv = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return push(std::move(out), nodes_[a.id].rows, nodes_[a.id].cols, needs(a) || needs(b),
              [a, b](Tape& t, const Node& self) {
                for (Var v : {a, b}) {
                  if (!t.needs(v)) continue;
                  auto& gv = t.grad(v);
                  for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += self.grad[i];
                }
              });
}

Var Tape::sub(Var a, Var b) {
  check_same(a, b, "sub");
  std::vector<double> out = value(a);
  const auto& bv = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return push(std::move(out), nodes_[a.id].rows, nodes_[a.id].cols, needs(a) || needs(b),
              [a, b](Tape& t, const Node& self) {
                if (t.needs(a)) {
                  auto& ga = t.grad(a);
                  for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
                }
                if (t.needs(b)) {
                  auto& gb = t.grad(b);
                  for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= self.grad[i];
                }
              });
}

Var Tape::mul(Var a, Var b) {
  check_same(a, b, "mul");
  std::vector<double> out = value(a);
  const auto& bv = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return push(std::move(out), nodes_[a.id].rows, nodes_[a.id].cols, needs(a) || needs(b),
              [a, b](Tape& t, const Node& self) {
                if (t.needs(a)) {
                  auto& ga = t.grad(a);
                  const auto& bv = t.value(b);
                  for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * bv[i];
                }
                if (t.needs(b)) {
                  auto& gb = t.grad(b);
                  const auto& av = t.value(a);
                  for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[i] * av[i];
                }
              });
}

Var Tape::neg(Var a) { return scale(a, -1.0); }

Var Tape::scale(Var a, double s) {
  std::vector<double> out = value(a);
  for (double& x : out) x *= s;
  return push(std::move(out), nodes_[a.id].rows, nodes_[a.id].cols, needs(a),
              [a, s](Tape& t, const Node& self) {
                auto& ga = t.grad(a);
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * self.grad[i];
              });
}

Var Tape::scalar_mul(Var s, Var v) {
  if (size(s) != 1) throw std::invalid_argument("tape scalar_mul: first operand must be 1x1");
  const double sv = scalar(s);
  std::vector<double> out = value(v);
  for (double& x : out) x *= sv;
  return push(std::move(out), nodes_[v.id].rows, nodes_[v.id].cols, needs(s) || needs(v),
              [s, v](Tape& t, const Node& self) {
                const auto& vv = t.value(v);
                if (t.needs(s)) {
                  double acc = 0;
                  for (std::size_t i = 0; i < vv.size(); ++i) acc += self.grad[i] * vv[i];
                  t.grad(s)[0] += acc;
                }
                if (t.needs(v)) {
                  const double sv = t.scalar(s);
                  auto& gv = t.grad(v);
                  for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += sv * self.grad[i];
                }
              });
}

Var Tape::one_minus(Var a) {
  std::vector<double> out = value(a);
  for (double& x : out) x = 1.0 - x;
  return push(std::move(out), nodes_[a.id].rows, nodes_[a.id].cols, needs(a),
              [a](Tape& t, const Node& self) {
                auto& ga = t.grad(a);
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] -= self.grad[i];
              });
}

Var Tape::tanh(Var a) {
  std::vector<double> out = value(a);
  for (double& x : out) x = std::tanh(x);
  return push(std::move(out), nodes_[a.id].rows, nodes_[a.id].cols, needs(a),
              [a](Tape& t, const Node& self) {
                auto& ga = t.grad(a);
                for (std::size_t i = 0; i < ga.size(); ++i) {
                  const double y = self.value[i];
                  ga[i] += self.grad[i] * (1.0 - y * y);
                }
              });
}

Var Tape::sigmoid(Var a) {
  std::vector<double> out = value(a);
  for (double& x : out) x = stable_sigmoid(x);
  return push(std::move(out), nodes_[a.id].rows, nodes_[a.id].cols, needs(a),
              [a](Tape& t, const Node& self) {
                auto& ga = t.grad(a);
                for (std::size_t i = 0; i < ga.size(); ++i) {
                  const double y = self.value[i];
                  ga[i] += self.grad[i] * y * (1.0 - y);
                }
              });
}

Var Tape::concat(std::span<const Var> parts) {
  std::vector<double> out;
  bool any = false;
  for (Var p : parts) {
    const auto& v = value(p);
    out.insert(out.end(), v.begin(), v.end());
    any = any || needs(p);
  }
  const auto n = out.size();
  std::vector<Var> ps(parts.begin(), parts.end());
  return push(std::move(out), n, 1, any, [ps = std::move(ps)](Tape& t, const Node& self) {
    std::size_t off = 0;
    for (Var p : ps) {
      const auto len = t.size(p);
      if (t.needs(p)) {
        auto& gp = t.grad(p);
        for (std::size_t i = 0; i < len; ++i) gp[i] += self.grad[off + i];
      }
      off += len;
    }
  });
}

Var Tape::dot(Var a, Var b) {
  check_same(a, b, "dot");
  const auto& av = value(a);
  const auto& bv = value(b);
  double s = 0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  return push({s}, 1, 1, needs(a) || needs(b), [a, b](Tape& t, const Node& self) {
    const double g = self.grad[0];
    if (t.needs(a)) {
      auto& ga = t.grad(a);
      const auto& bv = t.value(b);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * bv[i];
    }
    if (t.needs(b)) {
      auto& gb = t.grad(b);
      const auto& av = t.value(a);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * av[i];
    }
  });
}

Var Tape::softmax(Var a) {
  std::vector<double> out = value(a);
  if (out.empty()) throw std::invalid_argument("tape softmax: empty input");
  const double mx = *std::max_element(out.begin(), out.end());
  double sum = 0;
  for (double& x : out) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : out) x /= sum;
  const auto n = out.size();
  return push(std::move(out), n, 1, needs(a), [a](Tape& t, const Node& self) {
    // dL/da_i = y_i (g_i - sum_j g_j y_j)
    double gy = 0;
    for (std::size_t i = 0; i < self.value.size(); ++i) gy += self.grad[i] * self.value[i];
    auto& ga = t.grad(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.value[i] * (self.grad[i] - gy);
  });
}

Var Tape::weighted_sum(Var w, std::span<const Var> vs) {
  if (vs.empty()) throw std::invalid_argument("tape weighted_sum: no vectors");
  if (size(w) != vs.size()) throw std::invalid_argument("tape weighted_sum: weight count mismatch");
  const auto& wv = value(w);
  const auto n = size(vs[0]);
  std::vector<double> out(n, 0.0);
  bool any = needs(w);
  for (std::size_t k = 0; k < vs.size(); ++k) {
    const auto& v = value(vs[k]);
    if (v.size() != n) throw std::invalid_argument("tape weighted_sum: ragged vectors");
    for (std::size_t i = 0; i < n; ++i) out[i] += wv[k] * v[i];
    any = any || needs(vs[k]);
  }
  std::vector<Var> ps(vs.begin(), vs.end());
  return push(std::move(out), n, 1, any, [w, ps = std::move(ps)](Tape& t, const Node& self) {
    const auto& wv = t.value(w);
    for (std::size_t k = 0; k < ps.size(); ++k) {
      const auto& v = t.value(ps[k]);
      if (t.needs(w)) {
        double acc = 0;
        for (std::size_t i = 0; i < v.size(); ++i) acc += self.grad[i] * v[i];
        t.grad(w)[k] += acc;
      }
      if (t.needs(ps[k])) {
        auto& gv = t.grad(ps[k]);
        for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += wv[k] * self.grad[i];
      }
    }
  });
}

Var Tape::mean(std::span<const Var> vs) {
  if (vs.empty()) throw std::invalid_argument("tape mean: no vectors");
  const auto n = size(vs[0]);
  const double inv = 1.0 / static_cast<double>(vs.size());
  std::vector<double> out(n, 0.0);
  bool any = false;
  for (Var v : vs) {
    const auto& vv = value(v);
    if (vv.size() != n) throw std::invalid_argument("tape mean: ragged vectors");
    for (std::size_t i = 0; i < n; ++i) out[i] += vv[i];
    any = any || needs(v);
  }
  for (double& x : out) x *= inv;
  std::vector<Var> ps(vs.begin(), vs.end());
  return push(std::move(out), n, 1, any, [ps = std::move(ps), inv](Tape& t, const Node& self) {
    for (Var p : ps) {
      if (!t.needs(p)) continue;
      auto& gp = t.grad(p);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += inv * self.grad[i];
    }
  });
}

Var Tape::row(Var m, std::size_t i) {
  const auto& mn = nodes_[m.id];
  if (i >= mn.rows) throw std::invalid_argument("tape row: index out of range");
  const std::size_t cols = mn.cols;
  std::vector<double> out(mn.value.begin() + static_cast<std::ptrdiff_t>(i * cols),
                          mn.value.begin() + static_cast<std::ptrdiff_t>((i + 1) * cols));
  return push(std::move(out), cols, 1, needs(m), [m, i, cols](Tape& t, const Node& self) {
    auto& gm = t.grad(m);
    for (std::size_t c = 0; c < cols; ++c) gm[i * cols + c] += self.grad[c];
  });
}

Var Tape::nll(Var scores, std::size_t gold) {
  const auto& s = value(scores);
  if (gold >= s.size()) throw std::invalid_argument("tape nll: gold index out of range");
  const double mx = *std::max_element(s.begin(), s.end());
  double sum = 0;
  for (double x : s) sum += std::exp(x - mx);
  const double lse = mx + std::log(sum);
  return push({lse - s[gold]}, 1, 1, needs(scores), [scores, gold, lse](Tape& t, const Node& self) {
    const auto& s = t.value(scores);
    auto& gs = t.grad(scores);
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double p = std::exp(s[i] - lse);
      gs[i] += self.grad[0] * (p - (i == gold ? 1.0 : 0.0));
    }
  });
}

void Tape::backward(Var out) {
  if (size(out) != 1) throw std::invalid_argument("tape backward: output must be scalar");
  if (!needs(out)) return;
  grad(out)[0] += 1.0;
  for (std::size_t i = out.id + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (n.back && !n.grad.empty()) n.back(*this, n);
  }
  for (const auto& [id, p] : bound_) {
    const auto& g = nodes_[id].grad;
    if (g.empty()) continue;
    for (std::size_t k = 0; k < g.size(); ++k) p->grad[k] += g[k];
  }
}

}  // namespace seekqa::ad
