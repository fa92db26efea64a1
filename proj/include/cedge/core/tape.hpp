#pragma once

#include "cedge/core/tensor.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

namespace cedge::ad {

// Define-by-run reverse-mode tape. Every value is a 2-D row-major matrix whose
// rows are batch entries. Nodes are appended in execution order, so the node
// list is always topologically sorted and backward is a single reverse sweep.
//
// Parameters are bound by reference: the referenced matrices must outlive the
// tape and must not be modified between the forward ops and backward().
template <typename Scalar>
class BasicTape {
 public:
  using Mat = MatrixX<Scalar>;

  struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
  };

  struct Gradients {
    std::map<std::string, Mat> params;
    std::map<std::string, Mat> inputs;
  };

  BasicTape() = default;
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  std::size_t size() const { return nodes_.size(); }

  Var constant(Mat value) { return push_leaf(Kind::kConstant, "constant", {}, std::move(value), nullptr); }

  // Leaf whose gradient is reported under `name` in Gradients::inputs.
  Var input(std::string name, Mat value) {
    return push_leaf(Kind::kInput, "input", std::move(name), std::move(value), nullptr);
  }

  // Leaf bound to an external parameter matrix; gradients accumulate under
  // `name` if the parameter is used more than once.
  Var parameter(std::string name, const Mat& value) {
    return push_leaf(Kind::kParameter, "parameter", std::move(name), Mat(), &value);
  }

  const Mat& value(Var v) const { return node(v).get(); }

  Scalar scalar(Var v) const {
    const Mat& m = value(v);
    if (m.size() != 1) throw ShapeError("scalar(): node " + std::to_string(v.id) + " has shape " + shape_string(m));
    return m(0, 0);
  }

  // ---- primitives -------------------------------------------------------

  // x (B x in) * w (in x out) + b (1 x out)
  Var affine(Var x, Var w, Var b) {
    const Mat& xv = value(x);
    const Mat& wv = value(w);
    const Mat& bv = value(b);
    if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols())
      shape_fail("affine", x, w, b);
    Mat out = xv * wv;
    out.rowwise() += bv.row(0);
    return push_op("affine", {x.id, w.id, b.id}, std::move(out), [](BasicTape& t, std::size_t self) {
      const auto& n = t.nodes_[self];
      const Mat& g = n.grad;
      const std::size_t xi = n.inputs[0], wi = n.inputs[1], bi = n.inputs[2];
      if (t.nodes_[xi].requires_grad) t.accumulate(xi, g * t.nodes_[wi].get().transpose());
      if (t.nodes_[wi].requires_grad) t.accumulate(wi, t.nodes_[xi].get().transpose() * g);
      if (t.nodes_[bi].requires_grad) t.accumulate(bi, g.colwise().sum());
    });
  }

  // Stride-1, same-padding temporal convolution. x holds `seq_len` consecutive
  // rows per sequence: ((B * L) x C_in). w is ((K * C_in) x C_out) with the
  // tap index as the major row index; b is (1 x C_out). K must be odd.
  Var conv1d(Var x, Var w, Var b, Index seq_len) {
    const Mat& xv = value(x);
    const Mat& wv = value(w);
    const Mat& bv = value(b);
    const Index c_in = xv.cols();
    if (seq_len <= 0 || xv.rows() % seq_len != 0 || wv.rows() % c_in != 0 || (wv.rows() / c_in) % 2 == 0 ||
        bv.rows() != 1 || bv.cols() != wv.cols())
      shape_fail("conv1d", x, w, b);
    const Index taps = wv.rows() / c_in;
    Mat cols = im2col(xv, seq_len, taps);
    Mat out = cols * wv;
    out.rowwise() += bv.row(0);
    auto backward = [cols = std::move(cols), seq_len, taps, c_in](BasicTape& t, std::size_t self) {
      const auto& n = t.nodes_[self];
      const Mat& g = n.grad;
      const std::size_t xi = n.inputs[0], wi = n.inputs[1], bi = n.inputs[2];
      if (t.nodes_[wi].requires_grad) t.accumulate(wi, cols.transpose() * g);
      if (t.nodes_[bi].requires_grad) t.accumulate(bi, g.colwise().sum());
      if (t.nodes_[xi].requires_grad) {
        Mat gcols = g * t.nodes_[wi].get().transpose();
        t.accumulate(xi, col2im(gcols, seq_len, taps, c_in));
      }
    };
    return push_op("conv1d", {x.id, w.id, b.id}, std::move(out), std::move(backward));
  }

  Var relu(Var x) {
    Mat out = value(x).cwiseMax(Scalar(0));
    return unary("relu", x, std::move(out), [](const Mat& in, const Mat&, const Mat& g) -> Mat {
      return (in.array() > Scalar(0)).select(g, Mat::Zero(g.rows(), g.cols()));
    });
  }

  Var tanh(Var x) {
    Mat out = value(x).array().tanh().matrix();
    return unary("tanh", x, std::move(out), [](const Mat&, const Mat& y, const Mat& g) -> Mat {
      return (g.array() * (Scalar(1) - y.array().square())).matrix();
    });
  }

  Var softplus(Var x) {
    Mat out = value(x).unaryExpr([](Scalar v) { return softplus_scalar(v); });
    return unary("softplus", x, std::move(out), [](const Mat& in, const Mat&, const Mat& g) -> Mat {
      return (g.array() * in.unaryExpr([](Scalar v) { return sigmoid_scalar(v); }).array()).matrix();
    });
  }

  Var sigmoid(Var x) {
    Mat out = value(x).unaryExpr([](Scalar v) { return sigmoid_scalar(v); });
    return unary("sigmoid", x, std::move(out), [](const Mat&, const Mat& y, const Mat& g) -> Mat {
      return (g.array() * y.array() * (Scalar(1) - y.array())).matrix();
    });
  }

  // log(sigmoid(x)) = -softplus(-x), evaluated without forming sigmoid(x).
  Var log_sigmoid(Var x) {
    Mat out = value(x).unaryExpr([](Scalar v) { return -softplus_scalar(-v); });
    return unary("log_sigmoid", x, std::move(out), [](const Mat& in, const Mat&, const Mat& g) -> Mat {
      return (g.array() * in.unaryExpr([](Scalar v) { return sigmoid_scalar(-v); }).array()).matrix();
    });
  }

  Var sum(Var x) {
    Mat out(1, 1);
    out(0, 0) = value(x).sum();
    const Index r = value(x).rows(), c = value(x).cols();
    return push_op("sum", {x.id}, std::move(out), [r, c](BasicTape& t, std::size_t self) {
      const auto& n = t.nodes_[self];
      if (t.nodes_[n.inputs[0]].requires_grad) t.accumulate(n.inputs[0], Mat::Constant(r, c, n.grad(0, 0)));
    });
  }

  Var mean(Var x) {
    const Index r = value(x).rows(), c = value(x).cols();
    if (r * c == 0) throw ShapeError("mean: node " + std::to_string(x.id) + " is empty");
    Mat out(1, 1);
    out(0, 0) = value(x).mean();
    return push_op("mean", {x.id}, std::move(out), [r, c](BasicTape& t, std::size_t self) {
      const auto& n = t.nodes_[self];
      if (t.nodes_[n.inputs[0]].requires_grad)
        t.accumulate(n.inputs[0], Mat::Constant(r, c, n.grad(0, 0) / Scalar(r * c)));
    });
  }

  // Sinusoidal embedding of (B x 1) step values into (B x dim):
  // [sin(k f_0) .. sin(k f_{h-1}), cos(k f_0) .. cos(k f_{h-1})],
  // f_i = exp(-ln(10000) i / h), h = dim / 2.
  Var timestep_embedding(Var steps, Index dim) {
    const Mat& kv = value(steps);
    if (kv.cols() != 1 || dim < 2 || dim % 2 != 0)
      throw ShapeError("timestep_embedding: node " + std::to_string(steps.id) + " needs (B x 1) steps and even dim, got " +
                       shape_string(kv) + ", dim " + std::to_string(dim));
    const Index half = dim / 2;
    RowVectorX<Scalar> freq(half);
    for (Index i = 0; i < half; ++i)
      freq(i) = std::exp(-std::log(Scalar(10000)) * Scalar(i) / Scalar(half));
    Mat out(kv.rows(), dim);
    for (Index r = 0; r < kv.rows(); ++r)
      for (Index i = 0; i < half; ++i) {
        const Scalar a = kv(r, 0) * freq(i);
        out(r, i) = std::sin(a);
        out(r, half + i) = std::cos(a);
      }
    return push_op("timestep_embedding", {steps.id}, std::move(out),
                   [freq, half](BasicTape& t, std::size_t self) {
                     const auto& n = t.nodes_[self];
                     const std::size_t ki = n.inputs[0];
                     if (!t.nodes_[ki].requires_grad) return;
                     const Mat& y = n.get();
                     Mat gk(y.rows(), 1);
                     for (Index r = 0; r < y.rows(); ++r) {
                       Scalar acc = 0;
                       for (Index i = 0; i < half; ++i)
                         acc += freq(i) * (n.grad(r, i) * y(r, half + i) - n.grad(r, half + i) * y(r, i));
                       gk(r, 0) = acc;
                     }
                     t.accumulate(ki, gk);
                   });
  }

  // Row-wise diagonal Gaussian log-density; x, mean, log_std all (B x d).
  Var gaussian_log_density(Var x, Var mu, Var log_std) {
    const Mat& xv = value(x);
    const Mat& mv = value(mu);
    const Mat& sv = value(log_std);
    if (xv.rows() != mv.rows() || xv.cols() != mv.cols() || xv.rows() != sv.rows() || xv.cols() != sv.cols())
      shape_fail("gaussian_log_density", x, mu, log_std);
    const Scalar half_log_2pi = Scalar(0.5) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
    Mat z = ((xv - mv).array() * (-sv.array()).exp()).matrix();
    Mat out = (-sv.array() - half_log_2pi - Scalar(0.5) * z.array().square()).rowwise().sum().matrix();
    return push_op("gaussian_log_density", {x.id, mu.id, log_std.id}, std::move(out),
                   [z = std::move(z)](BasicTape& t, std::size_t self) {
                     const auto& n = t.nodes_[self];
                     const Mat& sv = t.nodes_[n.inputs[2]].get();
                     // g is (B x 1); broadcast across columns.
                     Mat g = n.grad.col(0).replicate(1, z.cols());
                     Mat dx = (-g.array() * z.array() * (-sv.array()).exp()).matrix();
                     if (t.nodes_[n.inputs[0]].requires_grad) t.accumulate(n.inputs[0], dx);
                     if (t.nodes_[n.inputs[1]].requires_grad) t.accumulate(n.inputs[1], (-dx).eval());
                     if (t.nodes_[n.inputs[2]].requires_grad)
                       t.accumulate(n.inputs[2], (g.array() * (z.array().square() - Scalar(1))).matrix());
                   });
  }

  // ---- structural plumbing ---------------------------------------------

  Var add(Var a, Var b) {
    require_same_shape("add", a, b);
    return push_op("add", {a.id, b.id}, value(a) + value(b), [](BasicTape& t, std::size_t self) {
      const auto& n = t.nodes_[self];
      for (std::size_t i : n.inputs)
        if (t.nodes_[i].requires_grad) t.accumulate(i, n.grad);
    });
  }

  Var sub(Var a, Var b) {
    require_same_shape("sub", a, b);
    return push_op("sub", {a.id, b.id}, value(a) - value(b), [](BasicTape& t, std::size_t self) {
      const auto& n = t.nodes_[self];
      if (t.nodes_[n.inputs[0]].requires_grad) t.accumulate(n.inputs[0], n.grad);
      if (t.nodes_[n.inputs[1]].requires_grad) t.accumulate(n.inputs[1], (-n.grad).eval());
    });
  }

  Var mul(Var a, Var b) {
    require_same_shape("mul", a, b);
    Mat out = value(a).cwiseProduct(value(b));
    return push_op("mul", {a.id, b.id}, std::move(out), [](BasicTape& t, std::size_t self) {
      const auto& n = t.nodes_[self];
      const std::size_t ai = n.inputs[0], bi = n.inputs[1];
      if (t.nodes_[ai].requires_grad) t.accumulate(ai, n.grad.cwiseProduct(t.nodes_[bi].get()));
      if (t.nodes_[bi].requires_grad) t.accumulate(bi, n.grad.cwiseProduct(t.nodes_[ai].get()));
    });
  }

  Var scale(Var a, Scalar c) {
    return push_op("scale", {a.id}, value(a) * c, [c](BasicTape& t, std::size_t self) {
      const auto& n = t.nodes_[self];
      if (t.nodes_[n.inputs[0]].requires_grad) t.accumulate(n.inputs[0], (n.grad * c).eval());
    });
  }

  Var add_constant(Var a, Scalar c) {
    Mat out = (value(a).array() + c).matrix();
    return push_op("add_constant", {a.id}, std::move(out), [](BasicTape& t, std::size_t self) {
      const auto& n = t.nodes_[self];
      if (t.nodes_[n.inputs[0]].requires_grad) t.accumulate(n.inputs[0], n.grad);
    });
  }

  Var square(Var a) {
    Mat out = value(a).array().square().matrix();
    return unary("square", a, std::move(out), [](const Mat& in, const Mat&, const Mat& g) -> Mat {
      return (Scalar(2) * in.array() * g.array()).matrix();
    });
  }

  // Σ_ij w_ij x_ij with constant weights w of the same shape as x.
  Var weighted_sum(Var x, const Mat& weights) {
    const Mat& xv = value(x);
    if (xv.rows() != weights.rows() || xv.cols() != weights.cols())
      throw ShapeError("weighted_sum: node " + std::to_string(x.id) + " shape " + shape_string(xv) +
                       " vs weights " + shape_string(weights));
    Mat out(1, 1);
    out(0, 0) = xv.cwiseProduct(weights).sum();
    return push_op("weighted_sum", {x.id}, std::move(out), [weights](BasicTape& t, std::size_t self) {
      const auto& n = t.nodes_[self];
      if (t.nodes_[n.inputs[0]].requires_grad) t.accumulate(n.inputs[0], (weights * n.grad(0, 0)).eval());
    });
  }

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const Index rows = value(parts[0]).rows();
    Index cols = 0;
    std::vector<std::size_t> ids;
    std::vector<Index> widths;
    for (Var p : parts) {
      if (value(p).rows() != rows)
        throw ShapeError("concat_cols: node " + std::to_string(p.id) + " has " + std::to_string(value(p).rows()) +
                         " rows, expected " + std::to_string(rows));
      ids.push_back(p.id);
      widths.push_back(value(p).cols());
      cols += value(p).cols();
    }
    Mat out(rows, cols);
    Index at = 0;
    for (Var p : parts) {
      out.middleCols(at, value(p).cols()) = value(p);
      at += value(p).cols();
    }
    return push_op("concat_cols", std::move(ids), std::move(out), [widths](BasicTape& t, std::size_t self) {
      const auto& n = t.nodes_[self];
      Index at = 0;
      for (std::size_t i = 0; i < n.inputs.size(); ++i) {
        if (t.nodes_[n.inputs[i]].requires_grad) t.accumulate(n.inputs[i], n.grad.middleCols(at, widths[i]).eval());
        at += widths[i];
      }
    });
  }

  Var slice_cols(Var x, Index start, Index count) {
    const Mat& xv = value(x);
    if (start < 0 || count <= 0 || start + count > xv.cols())
      throw ShapeError("slice_cols: node " + std::to_string(x.id) + " shape " + shape_string(xv) + " cannot take [" +
                       std::to_string(start) + ", " + std::to_string(start + count) + ")");
    const Index rows = xv.rows(), cols = xv.cols();
    return push_op("slice_cols", {x.id}, xv.middleCols(start, count).eval(),
                   [start, count, rows, cols](BasicTape& t, std::size_t self) {
                     const auto& n = t.nodes_[self];
                     if (!t.nodes_[n.inputs[0]].requires_grad) return;
                     Mat g = Mat::Zero(rows, cols);
                     g.middleCols(start, count) = n.grad;
                     t.accumulate(n.inputs[0], g);
                   });
  }

  // Row-major reinterpretation.
  Var reshape(Var x, Index rows, Index cols) {
    const Mat& xv = value(x);
    if (rows * cols != xv.size())
      throw ShapeError("reshape: node " + std::to_string(x.id) + " shape " + shape_string(xv) + " to " +
                       shape_string(rows, cols));
    const Index r0 = xv.rows(), c0 = xv.cols();
    Mat out = Eigen::Map<const Mat>(xv.data(), rows, cols);
    return push_op("reshape", {x.id}, std::move(out), [r0, c0](BasicTape& t, std::size_t self) {
      const auto& n = t.nodes_[self];
      if (t.nodes_[n.inputs[0]].requires_grad)
        t.accumulate(n.inputs[0], Mat(Eigen::Map<const Mat>(n.grad.data(), r0, c0)));
    });
  }

  // out.row(i) = x.row(rows[i]); backward scatter-adds.
  Var gather_rows(Var x, std::vector<Index> rows) {
    const Mat& xv = value(x);
    Mat out(static_cast<Index>(rows.size()), xv.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] < 0 || rows[i] >= xv.rows())
        throw ShapeError("gather_rows: node " + std::to_string(x.id) + " has no row " + std::to_string(rows[i]));
      out.row(static_cast<Index>(i)) = xv.row(rows[i]);
    }
    const Index r0 = xv.rows();
    return push_op("gather_rows", {x.id}, std::move(out), [rows = std::move(rows), r0](BasicTape& t, std::size_t self) {
      const auto& n = t.nodes_[self];
      if (!t.nodes_[n.inputs[0]].requires_grad) return;
      Mat g = Mat::Zero(r0, n.grad.cols());
      for (std::size_t i = 0; i < rows.size(); ++i) g.row(rows[i]) += n.grad.row(static_cast<Index>(i));
      t.accumulate(n.inputs[0], g);
    });
  }

  // Sum over consecutive blocks of `group` rows: (G * group x C) -> (G x C).
  Var group_sum(Var x, Index group) { return group_reduce("group_sum", x, group, Scalar(1)); }

  Var group_mean(Var x, Index group) { return group_reduce("group_mean", x, group, Scalar(1) / Scalar(group)); }

  // ---- gradients ---------------------------------------------------------

  Gradients backward(Var output) {
    const Mat& v = value(output);
    if (v.size() != 1)
      throw UsageError("backward: node " + std::to_string(output.id) + " is " + shape_string(v) +
                       "; supply a seed for non-scalar outputs");
    return backward(output, Mat::Ones(1, 1));
  }

  Gradients backward(Var output, const Mat& seed) {
    if (output.id >= nodes_.size())
      throw UsageError("backward: node " + std::to_string(output.id) + " has not been computed on this tape");
    const Mat& v = value(output);
    if (seed.rows() != v.rows() || seed.cols() != v.cols())
      throw ShapeError("backward: seed " + shape_string(seed) + " vs output " + shape_string(v));
    for (auto& n : nodes_) {
      n.grad.resize(0, 0);
      n.has_grad = false;
    }
    Gradients result;
    if (!nodes_[output.id].requires_grad) return result;
    accumulate(output.id, seed);
    for (std::size_t i = output.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.has_grad) continue;
      if (n.kind == Kind::kOp) {
        n.backward(*this, i);
      } else if (n.kind == Kind::kParameter) {
        auto [it, inserted] = result.params.try_emplace(n.name, n.grad);
        if (!inserted) it->second += n.grad;
      } else if (n.kind == Kind::kInput) {
        auto [it, inserted] = result.inputs.try_emplace(n.name, n.grad);
        if (!inserted) it->second += n.grad;
      }
    }
    return result;
  }

 private:
  enum class Kind { kConstant, kInput, kParameter, kOp };
  using BackwardFn = std::function<void(BasicTape&, std::size_t)>;

  struct Node {
    Kind kind;
    const char* op;
    std::string name;
    std::vector<std::size_t> inputs;
    Mat value;
    const Mat* ref = nullptr;
    Mat grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;

    const Mat& get() const { return ref ? *ref : value; }
  };

  static Scalar sigmoid_scalar(Scalar v) {
    if (v >= 0) return Scalar(1) / (Scalar(1) + std::exp(-v));
    const Scalar e = std::exp(v);
    return e / (Scalar(1) + e);
  }

  static Scalar softplus_scalar(Scalar v) { return std::max(v, Scalar(0)) + std::log1p(std::exp(-std::abs(v))); }

  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw UsageError("node " + std::to_string(v.id) + " does not exist on this tape");
    return nodes_[v.id];
  }

  Var push_leaf(Kind kind, const char* op, std::string name, Mat value, const Mat* ref) {
    Node n;
    n.kind = kind;
    n.op = op;
    n.name = std::move(name);
    n.value = std::move(value);
    n.ref = ref;
    n.requires_grad = kind != Kind::kConstant;
    check_finite(n, nodes_.size());
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  Var push_op(const char* op, std::vector<std::size_t> inputs, Mat value, BackwardFn backward) {
    Node n;
    n.kind = Kind::kOp;
    n.op = op;
    n.inputs = std::move(inputs);
    n.value = std::move(value);
    for (std::size_t i : n.inputs) n.requires_grad = n.requires_grad || nodes_[i].requires_grad;
    if (n.requires_grad) n.backward = std::move(backward);
    check_finite(n, nodes_.size());
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  template <typename Rule>
  Var unary(const char* op, Var x, Mat out, Rule rule) {
    return push_op(op, {x.id}, std::move(out), [rule](BasicTape& t, std::size_t self) {
      const auto& n = t.nodes_[self];
      const std::size_t xi = n.inputs[0];
      if (t.nodes_[xi].requires_grad) t.accumulate(xi, rule(t.nodes_[xi].get(), n.get(), n.grad));
    });
  }

  Var group_reduce(const char* op, Var x, Index group, Scalar factor) {
    const Mat& xv = value(x);
    if (group <= 0 || xv.rows() % group != 0)
      throw ShapeError(std::string(op) + ": node " + std::to_string(x.id) + " has " + std::to_string(xv.rows()) +
                       " rows, not a multiple of " + std::to_string(group));
    const Index groups = xv.rows() / group;
    Mat out = Mat::Zero(groups, xv.cols());
    for (Index g = 0; g < groups; ++g) out.row(g) = xv.middleRows(g * group, group).colwise().sum() * factor;
    return push_op(op, {x.id}, std::move(out), [group, factor](BasicTape& t, std::size_t self) {
      const auto& n = t.nodes_[self];
      if (!t.nodes_[n.inputs[0]].requires_grad) return;
      Mat g(n.grad.rows() * group, n.grad.cols());
      for (Index r = 0; r < n.grad.rows(); ++r) g.middleRows(r * group, group) = n.grad.row(r).replicate(group, 1) * factor;
      t.accumulate(n.inputs[0], g);
    });
  }

  void accumulate(std::size_t id, const Mat& g) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }

  static void check_finite(const Node& n, std::size_t id) {
    if (!n.get().allFinite())
      throw NumericError(std::string("node ") + std::to_string(id) + " (" + n.op + ") produced non-finite values");
  }

  void require_same_shape(const char* op, Var a, Var b) const {
    const Mat& av = value(a);
    const Mat& bv = value(b);
    if (av.rows() != bv.rows() || av.cols() != bv.cols())
      throw ShapeError(std::string(op) + ": node " + std::to_string(a.id) + " " + shape_string(av) + " vs node " +
                       std::to_string(b.id) + " " + shape_string(bv));
  }

  [[noreturn]] void shape_fail(const char* op, Var a, Var b, Var c) const {
    throw ShapeError(std::string(op) + " at node " + std::to_string(nodes_.size()) + ": incompatible shapes " +
                     shape_string(value(a)) + ", " + shape_string(value(b)) + ", " + shape_string(value(c)));
  }

  static Mat im2col(const Mat& x, Index seq_len, Index taps) {
    const Index c = x.cols();
    const Index pad = taps / 2;
    Mat cols = Mat::Zero(x.rows(), taps * c);
    for (Index base = 0; base < x.rows(); base += seq_len)
      for (Index t = 0; t < seq_len; ++t)
        for (Index j = 0; j < taps; ++j) {
          const Index src = t + j - pad;
          if (src >= 0 && src < seq_len) cols.block(base + t, j * c, 1, c) = x.row(base + src);
        }
    return cols;
  }

  static Mat col2im(const Mat& gcols, Index seq_len, Index taps, Index c) {
    const Index pad = taps / 2;
    Mat g = Mat::Zero(gcols.rows(), c);
    for (Index base = 0; base < gcols.rows(); base += seq_len)
      for (Index t = 0; t < seq_len; ++t)
        for (Index j = 0; j < taps; ++j) {
          const Index src = t + j - pad;
          if (src >= 0 && src < seq_len) g.row(base + src) += gcols.block(base + t, j * c, 1, c);
        }
    return g;
  }

  std::vector<Node> nodes_;
};

using Tape = BasicTape<double>;
using Var = Tape::Var;

}  // namespace cedge::ad
