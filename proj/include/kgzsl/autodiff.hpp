#pragma once

#include "kgzsl/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

// Dense-matrix computation graphs with reverse-mode differentiation.
//
// A Graph is an append-only arena of nodes; an Expr is a cheap handle into
// it. Graphs are immutable once built (gradients() appends, it never edits)
// and may be evaluated concurrently through independent Evaluators, each of
// which owns its value cache. gradients() emits the backward pass as new
// primitive nodes in the same graph, so a gradient is itself differentiable;
// applying gradients() to an expression built from gradient nodes yields
// second-order derivatives (double backward).

namespace kgzsl::ad {

enum class Op : std::uint8_t {
  kConstant,
  kPlaceholder,
  kAdd,
  kSub,
  kCwiseMul,
  kCwiseInverse,
  kMatMul,
  kTranspose,
  kScale,          // attr_a * x
  kShift,          // x + attr_a
  kClamp,          // clamp to [attr_a, attr_b]
  kClampMask,      // 1 strictly inside (attr_a, attr_b), else 0; zero derivative
  kRelu,
  kReluMask,       // 1 for x > 0, else 0; zero derivative
  kLeakyRelu,      // slope attr_a on the negative side
  kLeakyReluMask,  // 1 for x > 0, else attr_a (slope at exactly 0); zero derivative
  kSigmoid,
  kExp,
  kLog,
  kSqrt,
  kHCat,           // column-wise concatenation
  kSliceCols,      // columns [attr_i0, attr_i0 + attr_i1)
  kPadCols,        // embed at column offset attr_i0 into attr_i1 zero columns
  kRowSum,         // n x m -> n x 1
  kColSum,         // n x m -> 1 x m
  kReplicateRows,  // 1 x m -> attr_i0 x m
  kReplicateCols,  // n x 1 -> n x attr_i0
  kSelectRows,     // gather rows by index list
  kScatterRows,    // add rows into attr_i0 total rows at the index list
  kRowMax,         // n x m -> n x 1; treated as constant under differentiation
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kConstant: return "constant";
    case Op::kPlaceholder: return "placeholder";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kCwiseMul: return "cwise-mul";
    case Op::kCwiseInverse: return "cwise-inverse";
    case Op::kMatMul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kScale: return "scale";
    case Op::kShift: return "shift";
    case Op::kClamp: return "clamp";
    case Op::kClampMask: return "clamp-mask";
    case Op::kRelu: return "relu";
    case Op::kReluMask: return "relu-mask";
    case Op::kLeakyRelu: return "leaky-relu";
    case Op::kLeakyReluMask: return "leaky-relu-mask";
    case Op::kSigmoid: return "sigmoid";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSqrt: return "sqrt";
    case Op::kHCat: return "concat";
    case Op::kSliceCols: return "slice-cols";
    case Op::kPadCols: return "pad-cols";
    case Op::kRowSum: return "row-sum";
    case Op::kColSum: return "col-sum";
    case Op::kReplicateRows: return "replicate-rows";
    case Op::kReplicateCols: return "replicate-cols";
    case Op::kSelectRows: return "select-rows";
    case Op::kScatterRows: return "scatter-rows";
    case Op::kRowMax: return "row-max";
  }
  return "?";
}

template <class Scalar>
class Graph;

template <class Scalar>
struct Expr {
  Graph<Scalar>* graph = nullptr;
  std::int32_t id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
  Index rows() const;
  Index cols() const;
};

template <class Scalar>
struct Node {
  Op op;
  std::vector<std::int32_t> inputs;
  Index rows = 0, cols = 0;
  Scalar attr_a = Scalar(0), attr_b = Scalar(0);
  Index attr_i0 = 0, attr_i1 = 0;
  std::vector<Index> indices;   // kSelectRows / kScatterRows
  MatX<Scalar> literal;         // kConstant payload
  std::string name;             // kPlaceholder binding key
};

template <class Scalar>
class Graph {
 public:
  Expr<Scalar> constant(MatX<Scalar> value) {
    Node<Scalar> n;
    n.op = Op::kConstant;
    n.rows = value.rows();
    n.cols = value.cols();
    n.literal = std::move(value);
    return append(std::move(n));
  }

  Expr<Scalar> scalar(Scalar value) {
    MatX<Scalar> m(1, 1);
    m(0, 0) = value;
    return constant(std::move(m));
  }

  // Named leaf bound at evaluation time. Parameters and per-step inputs are
  // both placeholders; only the binding source differs.
  Expr<Scalar> placeholder(const std::string& name, Index rows, Index cols) {
    Node<Scalar> n;
    n.op = Op::kPlaceholder;
    n.rows = rows;
    n.cols = cols;
    n.name = name;
    return append(std::move(n));
  }

  const Node<Scalar>& node(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::int32_t size() const { return static_cast<std::int32_t>(nodes_.size()); }

  Expr<Scalar> append(Node<Scalar> n) {
    nodes_.push_back(std::move(n));
    return Expr<Scalar>{this, size() - 1};
  }

 private:
  // Deque keeps node references stable while gradients() appends the
  // backward pass.
  std::deque<Node<Scalar>> nodes_;
};

template <class Scalar>
Index Expr<Scalar>::rows() const {
  return graph->node(id).rows;
}
template <class Scalar>
Index Expr<Scalar>::cols() const {
  return graph->node(id).cols;
}

namespace detail {

template <class Scalar>
[[noreturn]] void shape_fail(Op op, std::int32_t at, const std::string& what) {
  throw StructuralError("node " + std::to_string(at) + " (" + op_name(op) + "): " + what);
}

template <class Scalar>
Graph<Scalar>& same_graph(Expr<Scalar> a, Expr<Scalar> b) {
  if (a.graph != b.graph)
    throw UsageError("expressions belong to different graphs");
  return *a.graph;
}

template <class Scalar>
Expr<Scalar> unary(Op op, Expr<Scalar> x, Scalar attr_a = Scalar(0), Scalar attr_b = Scalar(0)) {
  Node<Scalar> n;
  n.op = op;
  n.inputs = {x.id};
  n.rows = x.rows();
  n.cols = x.cols();
  n.attr_a = attr_a;
  n.attr_b = attr_b;
  return x.graph->append(std::move(n));
}

}  // namespace detail

// ---- Graph-building free functions ----------------------------------------

template <class Scalar>
Expr<Scalar> add(Expr<Scalar> a, Expr<Scalar> b) {
  auto& g = detail::same_graph(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols())
    detail::shape_fail<Scalar>(Op::kAdd, g.size(),
                               "operand shapes differ: " + std::to_string(a.rows()) + "x" +
                                   std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                                   "x" + std::to_string(b.cols()));
  Node<Scalar> n;
  n.op = Op::kAdd;
  n.inputs = {a.id, b.id};
  n.rows = a.rows();
  n.cols = a.cols();
  return g.append(std::move(n));
}

template <class Scalar>
Expr<Scalar> sub(Expr<Scalar> a, Expr<Scalar> b) {
  auto& g = detail::same_graph(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols())
    detail::shape_fail<Scalar>(Op::kSub, g.size(), "operand shapes differ");
  Node<Scalar> n;
  n.op = Op::kSub;
  n.inputs = {a.id, b.id};
  n.rows = a.rows();
  n.cols = a.cols();
  return g.append(std::move(n));
}

template <class Scalar>
Expr<Scalar> cwise_mul(Expr<Scalar> a, Expr<Scalar> b) {
  auto& g = detail::same_graph(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols())
    detail::shape_fail<Scalar>(Op::kCwiseMul, g.size(), "operand shapes differ");
  Node<Scalar> n;
  n.op = Op::kCwiseMul;
  n.inputs = {a.id, b.id};
  n.rows = a.rows();
  n.cols = a.cols();
  return g.append(std::move(n));
}

template <class Scalar>
Expr<Scalar> cwise_inverse(Expr<Scalar> x) {
  return detail::unary(Op::kCwiseInverse, x);
}

template <class Scalar>
Expr<Scalar> matmul(Expr<Scalar> a, Expr<Scalar> b) {
  auto& g = detail::same_graph(a, b);
  if (a.cols() != b.rows())
    detail::shape_fail<Scalar>(Op::kMatMul, g.size(),
                               "inner extents differ: " + std::to_string(a.rows()) + "x" +
                                   std::to_string(a.cols()) + " * " + std::to_string(b.rows()) +
                                   "x" + std::to_string(b.cols()));
  Node<Scalar> n;
  n.op = Op::kMatMul;
  n.inputs = {a.id, b.id};
  n.rows = a.rows();
  n.cols = b.cols();
  return g.append(std::move(n));
}

template <class Scalar>
Expr<Scalar> transpose(Expr<Scalar> x) {
  Node<Scalar> n;
  n.op = Op::kTranspose;
  n.inputs = {x.id};
  n.rows = x.cols();
  n.cols = x.rows();
  return x.graph->append(std::move(n));
}

template <class Scalar>
Expr<Scalar> scale(Expr<Scalar> x, Scalar c) {
  return detail::unary(Op::kScale, x, c);
}

template <class Scalar>
Expr<Scalar> shift(Expr<Scalar> x, Scalar c) {
  return detail::unary(Op::kShift, x, c);
}

template <class Scalar>
Expr<Scalar> neg(Expr<Scalar> x) {
  return scale(x, Scalar(-1));
}

template <class Scalar>
Expr<Scalar> clamp(Expr<Scalar> x, Scalar lo, Scalar hi) {
  return detail::unary(Op::kClamp, x, lo, hi);
}

template <class Scalar>
Expr<Scalar> relu(Expr<Scalar> x) {
  return detail::unary(Op::kRelu, x);
}

template <class Scalar>
Expr<Scalar> leaky_relu(Expr<Scalar> x, Scalar slope) {
  return detail::unary(Op::kLeakyRelu, x, slope);
}

template <class Scalar>
Expr<Scalar> sigmoid(Expr<Scalar> x) {
  return detail::unary(Op::kSigmoid, x);
}

template <class Scalar>
Expr<Scalar> exp(Expr<Scalar> x) {
  return detail::unary(Op::kExp, x);
}

template <class Scalar>
Expr<Scalar> log(Expr<Scalar> x) {
  return detail::unary(Op::kLog, x);
}

template <class Scalar>
Expr<Scalar> sqrt(Expr<Scalar> x) {
  return detail::unary(Op::kSqrt, x);
}

template <class Scalar>
Expr<Scalar> hcat(Expr<Scalar> a, Expr<Scalar> b) {
  auto& g = detail::same_graph(a, b);
  if (a.rows() != b.rows())
    detail::shape_fail<Scalar>(Op::kHCat, g.size(), "row extents differ");
  Node<Scalar> n;
  n.op = Op::kHCat;
  n.inputs = {a.id, b.id};
  n.rows = a.rows();
  n.cols = a.cols() + b.cols();
  return g.append(std::move(n));
}

template <class Scalar>
Expr<Scalar> slice_cols(Expr<Scalar> x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.cols())
    detail::shape_fail<Scalar>(Op::kSliceCols, x.graph->size(), "slice out of range");
  Node<Scalar> n;
  n.op = Op::kSliceCols;
  n.inputs = {x.id};
  n.rows = x.rows();
  n.cols = count;
  n.attr_i0 = start;
  n.attr_i1 = count;
  return x.graph->append(std::move(n));
}

template <class Scalar>
Expr<Scalar> pad_cols(Expr<Scalar> x, Index offset, Index total) {
  if (offset < 0 || offset + x.cols() > total)
    detail::shape_fail<Scalar>(Op::kPadCols, x.graph->size(), "pad out of range");
  Node<Scalar> n;
  n.op = Op::kPadCols;
  n.inputs = {x.id};
  n.rows = x.rows();
  n.cols = total;
  n.attr_i0 = offset;
  n.attr_i1 = total;
  return x.graph->append(std::move(n));
}

template <class Scalar>
Expr<Scalar> row_sum(Expr<Scalar> x) {
  Node<Scalar> n;
  n.op = Op::kRowSum;
  n.inputs = {x.id};
  n.rows = x.rows();
  n.cols = 1;
  return x.graph->append(std::move(n));
}

template <class Scalar>
Expr<Scalar> col_sum(Expr<Scalar> x) {
  Node<Scalar> n;
  n.op = Op::kColSum;
  n.inputs = {x.id};
  n.rows = 1;
  n.cols = x.cols();
  return x.graph->append(std::move(n));
}

template <class Scalar>
Expr<Scalar> replicate_rows(Expr<Scalar> x, Index count) {
  if (x.rows() != 1)
    detail::shape_fail<Scalar>(Op::kReplicateRows, x.graph->size(), "input must be a row vector");
  Node<Scalar> n;
  n.op = Op::kReplicateRows;
  n.inputs = {x.id};
  n.rows = count;
  n.cols = x.cols();
  n.attr_i0 = count;
  return x.graph->append(std::move(n));
}

template <class Scalar>
Expr<Scalar> replicate_cols(Expr<Scalar> x, Index count) {
  if (x.cols() != 1)
    detail::shape_fail<Scalar>(Op::kReplicateCols, x.graph->size(), "input must be a column vector");
  Node<Scalar> n;
  n.op = Op::kReplicateCols;
  n.inputs = {x.id};
  n.rows = x.rows();
  n.cols = count;
  n.attr_i0 = count;
  return x.graph->append(std::move(n));
}

template <class Scalar>
Expr<Scalar> select_rows(Expr<Scalar> x, std::vector<Index> idx) {
  for (Index i : idx)
    if (i < 0 || i >= x.rows())
      detail::shape_fail<Scalar>(Op::kSelectRows, x.graph->size(), "row index out of range");
  Node<Scalar> n;
  n.op = Op::kSelectRows;
  n.inputs = {x.id};
  n.rows = static_cast<Index>(idx.size());
  n.cols = x.cols();
  n.indices = std::move(idx);
  return x.graph->append(std::move(n));
}

template <class Scalar>
Expr<Scalar> scatter_rows(Expr<Scalar> x, std::vector<Index> idx, Index total_rows) {
  if (static_cast<Index>(idx.size()) != x.rows())
    detail::shape_fail<Scalar>(Op::kScatterRows, x.graph->size(), "index count differs from rows");
  Node<Scalar> n;
  n.op = Op::kScatterRows;
  n.inputs = {x.id};
  n.rows = total_rows;
  n.cols = x.cols();
  n.attr_i0 = total_rows;
  n.indices = std::move(idx);
  return x.graph->append(std::move(n));
}

// Row maximum treated as a constant under differentiation. Sound inside
// exp-normalize, whose value and derivative are invariant to a per-row shift.
template <class Scalar>
Expr<Scalar> row_max_detached(Expr<Scalar> x) {
  Node<Scalar> n;
  n.op = Op::kRowMax;
  n.inputs = {x.id};
  n.rows = x.rows();
  n.cols = 1;
  return x.graph->append(std::move(n));
}

// ---- Composite operations --------------------------------------------------

template <class Scalar>
Expr<Scalar> square(Expr<Scalar> x) {
  return cwise_mul(x, x);
}

// X (n x m) plus a row-vector bias b (1 x m) broadcast over rows.
template <class Scalar>
Expr<Scalar> bias_add(Expr<Scalar> x, Expr<Scalar> b) {
  return add(x, replicate_rows(b, x.rows()));
}

template <class Scalar>
Expr<Scalar> sum_all(Expr<Scalar> x) {
  return row_sum(col_sum(x));
}

template <class Scalar>
Expr<Scalar> mean_all(Expr<Scalar> x) {
  return scale(sum_all(x), Scalar(1) / static_cast<Scalar>(x.rows() * x.cols()));
}

// Mean over the row axis: n x m -> 1 x m.
template <class Scalar>
Expr<Scalar> mean_over_rows(Expr<Scalar> x) {
  return scale(col_sum(x), Scalar(1) / static_cast<Scalar>(x.rows()));
}

// Mean over the column axis: n x m -> n x 1.
template <class Scalar>
Expr<Scalar> mean_over_cols(Expr<Scalar> x) {
  return scale(row_sum(x), Scalar(1) / static_cast<Scalar>(x.cols()));
}

// Per-row Euclidean norm. The epsilon keeps sqrt differentiable at zero rows;
// it is far below every tolerance used against this quantity.
template <class Scalar>
Expr<Scalar> row_l2_norm(Expr<Scalar> x, Scalar eps = Scalar(1e-12)) {
  return sqrt(shift(row_sum(square(x)), eps));
}

template <class Scalar>
Expr<Scalar> dot_rows(Expr<Scalar> a, Expr<Scalar> b) {
  return row_sum(cwise_mul(a, b));
}

// Numerically shifted exp-normalize over each row.
template <class Scalar>
Expr<Scalar> softmax_rows(Expr<Scalar> x) {
  auto shifted = sub(x, replicate_cols(row_max_detached(x), x.cols()));
  auto e = exp(shifted);
  auto z = row_sum(e);
  return cwise_mul(e, replicate_cols(cwise_inverse(z), x.cols()));
}

template <class Scalar>
Expr<Scalar> log_softmax_rows(Expr<Scalar> x) {
  auto shifted = sub(x, replicate_cols(row_max_detached(x), x.cols()));
  auto z = row_sum(exp(shifted));
  return sub(shifted, replicate_cols(log(z), x.cols()));
}

template <class Scalar>
Expr<Scalar> log_sigmoid(Expr<Scalar> x) {
  return log(sigmoid(x));
}

// ---- Evaluation ------------------------------------------------------------

template <class Scalar>
class ParameterSet {
 public:
  void insert(const std::string& name, MatX<Scalar> value, bool trainable = true) {
    auto [it, fresh] = entries_.emplace(name, Entry{std::move(value), trainable});
    if (!fresh) throw UsageError("parameter '" + name + "' already exists");
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  const MatX<Scalar>& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw UsageError("unknown parameter '" + name + "'");
    return it->second.value;
  }

  // Shapes are immutable after creation.
  void update(const std::string& name, MatX<Scalar> value) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw UsageError("unknown parameter '" + name + "'");
    if (it->second.value.rows() != value.rows() || it->second.value.cols() != value.cols())
      throw UsageError("parameter '" + name + "' shape is immutable");
    it->second.value = std::move(value);
  }

  bool trainable(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw UsageError("unknown parameter '" + name + "'");
    return it->second.trainable;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
  }

  std::vector<std::string> trainable_names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_)
      if (v.trainable) out.push_back(k);
    return out;
  }

  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    MatX<Scalar> value;
    bool trainable;
  };
  std::map<std::string, Entry> entries_;  // sorted: deterministic iteration
};

// One evaluation context over an immutable graph. Owns the value cache, so
// separate Evaluators may run concurrently over the same graph.
template <class Scalar>
class Evaluator {
 public:
  explicit Evaluator(const Graph<Scalar>& graph) : graph_(graph), cache_(graph.size()) {}

  Evaluator& bind(const std::string& name, MatX<Scalar> value) {
    bindings_[name] = std::move(value);
    return *this;
  }

  Evaluator& bind(const ParameterSet<Scalar>& params) {
    for (const auto& name : params.names()) bindings_[name] = params.at(name);
    return *this;
  }

  const MatX<Scalar>& value(Expr<Scalar> e) {
    if (e.graph != &graph_) throw UsageError("expression evaluated against the wrong graph");
    if (e.id >= static_cast<std::int32_t>(cache_.size())) cache_.resize(graph_.size());
    compute(e.id);
    return *cache_[static_cast<std::size_t>(e.id)];
  }

 private:
  void compute(std::int32_t root) {
    // Demand-driven: mark the needed subgraph, then evaluate in id order
    // (node ids are a topological order by construction).
    std::vector<std::int32_t> stack{root};
    std::vector<std::int32_t> needed;
    std::vector<bool> seen(static_cast<std::size_t>(graph_.size()), false);
    while (!stack.empty()) {
      const auto id = stack.back();
      stack.pop_back();
      const auto uid = static_cast<std::size_t>(id);
      if (seen[uid] || cache_[uid].has_value()) continue;
      seen[uid] = true;
      needed.push_back(id);
      for (auto in : graph_.node(id).inputs) stack.push_back(in);
    }
    std::sort(needed.begin(), needed.end());
    for (auto id : needed) cache_[static_cast<std::size_t>(id)] = eval_node(id);
  }

  MatX<Scalar> eval_node(std::int32_t id) {
    const Node<Scalar>& n = graph_.node(id);
    auto in = [&](std::size_t i) -> const MatX<Scalar>& {
      return *cache_[static_cast<std::size_t>(n.inputs[i])];
    };
    switch (n.op) {
      case Op::kConstant:
        return n.literal;
      case Op::kPlaceholder: {
        auto it = bindings_.find(n.name);
        if (it == bindings_.end())
          throw UsageError("placeholder '" + n.name + "' is unbound");
        if (it->second.rows() != n.rows || it->second.cols() != n.cols)
          detail::shape_fail<Scalar>(n.op, id, "binding for '" + n.name + "' has wrong shape");
        return it->second;
      }
      case Op::kAdd:
        return in(0) + in(1);
      case Op::kSub:
        return in(0) - in(1);
      case Op::kCwiseMul:
        return in(0).cwiseProduct(in(1));
      case Op::kCwiseInverse:
        return in(0).cwiseInverse();
      case Op::kMatMul:
        return in(0) * in(1);
      case Op::kTranspose:
        return in(0).transpose();
      case Op::kScale:
        return in(0) * n.attr_a;
      case Op::kShift:
        return (in(0).array() + n.attr_a).matrix();
      case Op::kClamp:
        return in(0).array().max(n.attr_a).min(n.attr_b).matrix();
      case Op::kClampMask: {
        const Scalar lo = n.attr_a, hi = n.attr_b;
        return in(0).unaryExpr([lo, hi](Scalar v) {
          return (v > lo && v < hi) ? Scalar(1) : Scalar(0);
        });
      }
      case Op::kRelu:
        return in(0).cwiseMax(Scalar(0));
      case Op::kReluMask:
        return in(0).unaryExpr([](Scalar v) { return v > Scalar(0) ? Scalar(1) : Scalar(0); });
      case Op::kLeakyRelu: {
        const Scalar s = n.attr_a;
        return in(0).unaryExpr([s](Scalar v) { return v > Scalar(0) ? v : s * v; });
      }
      case Op::kLeakyReluMask: {
        const Scalar s = n.attr_a;
        return in(0).unaryExpr([s](Scalar v) { return v > Scalar(0) ? Scalar(1) : s; });
      }
      case Op::kSigmoid:
        return in(0).unaryExpr([](Scalar v) {
          if (v >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-v));
          const Scalar e = std::exp(v);
          return e / (Scalar(1) + e);
        });
      case Op::kExp:
        return in(0).array().exp().matrix();
      case Op::kLog:
        return in(0).array().log().matrix();
      case Op::kSqrt:
        return in(0).array().sqrt().matrix();
      case Op::kHCat: {
        MatX<Scalar> out(n.rows, n.cols);
        out << in(0), in(1);
        return out;
      }
      case Op::kSliceCols:
        return in(0).middleCols(n.attr_i0, n.attr_i1);
      case Op::kPadCols: {
        MatX<Scalar> out = MatX<Scalar>::Zero(n.rows, n.cols);
        out.middleCols(n.attr_i0, in(0).cols()) = in(0);
        return out;
      }
      case Op::kRowSum:
        return in(0).rowwise().sum();
      case Op::kColSum:
        return in(0).colwise().sum();
      case Op::kReplicateRows:
        return in(0).replicate(n.attr_i0, 1);
      case Op::kReplicateCols:
        return in(0).replicate(1, n.attr_i0);
      case Op::kSelectRows: {
        MatX<Scalar> out(n.rows, n.cols);
        for (Index i = 0; i < n.rows; ++i) out.row(i) = in(0).row(n.indices[static_cast<std::size_t>(i)]);
        return out;
      }
      case Op::kScatterRows: {
        MatX<Scalar> out = MatX<Scalar>::Zero(n.rows, n.cols);
        for (Index i = 0; i < in(0).rows(); ++i)
          out.row(n.indices[static_cast<std::size_t>(i)]) += in(0).row(i);
        return out;
      }
      case Op::kRowMax:
        return in(0).rowwise().maxCoeff();
    }
    throw StructuralError("unreachable op");
  }

  const Graph<Scalar>& graph_;
  std::vector<std::optional<MatX<Scalar>>> cache_;
  std::map<std::string, MatX<Scalar>> bindings_;
};

// Evaluate a single expression against bindings.
template <class Scalar>
MatX<Scalar> forward_eval(Expr<Scalar> e, const ParameterSet<Scalar>& bindings) {
  Evaluator<Scalar> ev(*e.graph);
  ev.bind(bindings);
  return ev.value(e);
}

// ---- Differentiation -------------------------------------------------------

enum class DiffMode {
  kStandard,
  // Restricts the reachable subgraph to operations whose emitted backward
  // pass is itself differentiable, so the result can be differentiated again.
  kRequireTwiceDifferentiable,
};

namespace detail {

inline bool twice_differentiable(Op op) {
  switch (op) {
    case Op::kExp:
    case Op::kLog:
    case Op::kRowMax:
      return false;
    default:
      return true;
  }
}

// Per-op vector-Jacobian products, emitted as graph nodes. `self` is the
// node being differentiated, `up` the upstream adjoint of its output.
template <class Scalar>
void emit_vjp(const Node<Scalar>& n, Expr<Scalar> self, Expr<Scalar> up,
              std::vector<Expr<Scalar>>& out) {
  auto input = [&](std::size_t i) { return Expr<Scalar>{self.graph, n.inputs[i]}; };
  switch (n.op) {
    case Op::kConstant:
    case Op::kPlaceholder:
      return;
    case Op::kAdd:
      out = {up, up};
      return;
    case Op::kSub:
      out = {up, neg(up)};
      return;
    case Op::kCwiseMul:
      out = {cwise_mul(up, input(1)), cwise_mul(up, input(0))};
      return;
    case Op::kCwiseInverse:
      out = {neg(cwise_mul(up, square(self)))};
      return;
    case Op::kMatMul:
      out = {matmul(up, transpose(input(1))), matmul(transpose(input(0)), up)};
      return;
    case Op::kTranspose:
      out = {transpose(up)};
      return;
    case Op::kScale:
      out = {scale(up, n.attr_a)};
      return;
    case Op::kShift:
      out = {up};
      return;
    case Op::kClamp:
      out = {cwise_mul(up, detail::unary(Op::kClampMask, input(0), n.attr_a, n.attr_b))};
      return;
    case Op::kRelu:
      out = {cwise_mul(up, detail::unary(Op::kReluMask, input(0)))};
      return;
    case Op::kLeakyRelu:
      out = {cwise_mul(up, detail::unary(Op::kLeakyReluMask, input(0), n.attr_a))};
      return;
    case Op::kClampMask:
    case Op::kReluMask:
    case Op::kLeakyReluMask:
      return;  // piecewise-constant masks: zero derivative
    case Op::kSigmoid:
      out = {cwise_mul(up, cwise_mul(self, shift(neg(self), Scalar(1))))};
      return;
    case Op::kExp:
      out = {cwise_mul(up, self)};
      return;
    case Op::kLog:
      out = {cwise_mul(up, cwise_inverse(input(0)))};
      return;
    case Op::kSqrt:
      out = {scale(cwise_mul(up, cwise_inverse(self)), Scalar(0.5))};
      return;
    case Op::kHCat: {
      const Index ca = input(0).cols();
      out = {slice_cols(up, Index(0), ca), slice_cols(up, ca, input(1).cols())};
      return;
    }
    case Op::kSliceCols:
      out = {pad_cols(up, n.attr_i0, input(0).cols())};
      return;
    case Op::kPadCols:
      out = {slice_cols(up, n.attr_i0, input(0).cols())};
      return;
    case Op::kRowSum:
      out = {replicate_cols(up, input(0).cols())};
      return;
    case Op::kColSum:
      out = {replicate_rows(up, input(0).rows())};
      return;
    case Op::kReplicateRows:
      out = {col_sum(up)};
      return;
    case Op::kReplicateCols:
      out = {row_sum(up)};
      return;
    case Op::kSelectRows:
      out = {scatter_rows(up, n.indices, input(0).rows())};
      return;
    case Op::kScatterRows:
      out = {select_rows(up, n.indices)};
      return;
    case Op::kRowMax:
      return;  // detached by definition
  }
}

}  // namespace detail

// Reverse-mode differentiation of a scalar-valued expression. Emits the
// backward pass into the same graph and returns, per requested expression,
// a gradient expression of matching shape (a zero constant when the scalar
// does not depend on it). Adjoints accumulate in descending node-id order,
// which fixes the reduction order and makes repeated runs bit-identical.
template <class Scalar>
std::vector<Expr<Scalar>> gradients(Expr<Scalar> scalar_out, std::span<const Expr<Scalar>> wrt,
                                    DiffMode mode = DiffMode::kStandard) {
  if (!scalar_out.valid()) throw UsageError("gradients: invalid expression");
  if (scalar_out.rows() != 1 || scalar_out.cols() != 1)
    throw UsageError("gradients: output must be scalar (1x1), got " +
                     std::to_string(scalar_out.rows()) + "x" + std::to_string(scalar_out.cols()));
  Graph<Scalar>& g = *scalar_out.graph;

  // Reachability from the output, restricted to ancestors.
  std::vector<bool> reachable(static_cast<std::size_t>(g.size()), false);
  {
    std::vector<std::int32_t> stack{scalar_out.id};
    reachable[static_cast<std::size_t>(scalar_out.id)] = true;
    while (!stack.empty()) {
      auto id = stack.back();
      stack.pop_back();
      if (mode == DiffMode::kRequireTwiceDifferentiable &&
          !detail::twice_differentiable(g.node(id).op))
        throw CapabilityError(std::string("operation '") + op_name(g.node(id).op) +
                              "' (node " + std::to_string(id) +
                              ") is outside the twice-differentiable subset");
      for (auto in : g.node(id).inputs) {
        if (!reachable[static_cast<std::size_t>(in)]) {
          reachable[static_cast<std::size_t>(in)] = true;
          stack.push_back(in);
        }
      }
    }
  }

  const std::int32_t frontier = scalar_out.id;
  std::vector<Expr<Scalar>> adjoint(static_cast<std::size_t>(frontier) + 1);
  adjoint[static_cast<std::size_t>(frontier)] = g.constant(MatX<Scalar>::Ones(1, 1));

  for (std::int32_t id = frontier; id >= 0; --id) {
    const auto uid = static_cast<std::size_t>(id);
    if (!reachable[uid] || !adjoint[uid].valid()) continue;
    const Node<Scalar>& n = g.node(id);
    std::vector<Expr<Scalar>> contribs;
    detail::emit_vjp<Scalar>(n, Expr<Scalar>{&g, id}, adjoint[uid], contribs);
    for (std::size_t i = 0; i < contribs.size(); ++i) {
      if (!contribs[i].valid()) continue;
      const auto in = static_cast<std::size_t>(n.inputs[i]);
      adjoint[in] = adjoint[in].valid() ? add(adjoint[in], contribs[i]) : contribs[i];
    }
  }

  std::vector<Expr<Scalar>> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    if (w.graph != &g) throw UsageError("gradients: wrt expression from another graph");
    if (w.id <= frontier && adjoint[static_cast<std::size_t>(w.id)].valid())
      out.push_back(adjoint[static_cast<std::size_t>(w.id)]);
    else
      out.push_back(g.constant(MatX<Scalar>::Zero(w.rows(), w.cols())));
  }
  return out;
}

template <class Scalar>
Expr<Scalar> gradient(Expr<Scalar> scalar_out, Expr<Scalar> wrt,
                      DiffMode mode = DiffMode::kStandard) {
  return gradients(scalar_out, std::span<const Expr<Scalar>>(&wrt, 1), mode)[0];
}

}  // namespace kgzsl::ad
