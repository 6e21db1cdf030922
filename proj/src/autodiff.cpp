#include "ckge/autodiff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ckge::ad {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string("shape mismatch in ") + op);
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Matrix value) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(const Matrix& value, Matrix& grad_accumulator) {
  if (grad_accumulator.rows() != value.rows() || grad_accumulator.cols() != value.cols()) {
    grad_accumulator = Matrix::Zero(value.rows(), value.cols());
  }
  Node n;
  n.op = Op::Param;
  n.value = value;
  n.sink = &grad_accumulator;
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  const auto& va = value(a);
  const auto& vb = value(b);
  if (va.cols() != vb.rows()) throw std::invalid_argument("shape mismatch in matmul");
  Node n;
  n.op = Op::MatMul;
  n.a = a.id;
  n.b = b.id;
  n.value.noalias() = va * vb;
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Node n;
  n.op = Op::Add;
  n.a = a.id;
  n.b = b.id;
  n.value = value(a) + value(b);
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  Node n;
  n.op = Op::Sub;
  n.a = a.id;
  n.b = b.id;
  n.value = value(a) - value(b);
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  Node n;
  n.op = Op::Mul;
  n.a = a.id;
  n.b = b.id;
  n.value = value(a).cwiseProduct(value(b));
  return push(std::move(n));
}

Var Tape::add_row(Var a, Var row) {
  const auto& va = value(a);
  const auto& vr = value(row);
  if (vr.rows() != 1 || vr.cols() != va.cols()) throw std::invalid_argument("shape mismatch in add_row");
  Node n;
  n.op = Op::AddRow;
  n.a = a.id;
  n.b = row.id;
  n.value = va;
  n.value.rowwise() += vr.row(0);
  return push(std::move(n));
}

Var Tape::scale(Var a, double s) {
  Node n;
  n.op = Op::Scale;
  n.a = a.id;
  n.scalar = s;
  n.value = value(a) * s;
  return push(std::move(n));
}

Var Tape::add_scalar(Var a, double s) {
  Node n;
  n.op = Op::AddScalar;
  n.a = a.id;
  n.value = value(a).array() + s;
  return push(std::move(n));
}

Var Tape::one_minus(Var a) {
  Node n;
  n.op = Op::OneMinus;
  n.a = a.id;
  n.value = (1.0 - value(a).array()).matrix();
  return push(std::move(n));
}

Var Tape::square(Var a) {
  Node n;
  n.op = Op::Square;
  n.a = a.id;
  n.value = value(a).array().square().matrix();
  return push(std::move(n));
}

Var Tape::exp(Var a) {
  Node n;
  n.op = Op::Exp;
  n.a = a.id;
  n.value = value(a).array().exp().matrix();
  return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
  Node n;
  n.op = Op::Sigmoid;
  n.a = a.id;
  n.value = value(a).unaryExpr([](double x) { return stable_sigmoid(x); });
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  Node n;
  n.op = Op::Tanh;
  n.a = a.id;
  n.value = value(a).array().tanh().matrix();
  return push(std::move(n));
}

Var Tape::concat_cols(Var a, Var b) {
  const auto& va = value(a);
  const auto& vb = value(b);
  if (va.rows() != vb.rows()) throw std::invalid_argument("shape mismatch in concat_cols");
  Node n;
  n.op = Op::ConcatCols;
  n.a = a.id;
  n.b = b.id;
  n.value.resize(va.rows(), va.cols() + vb.cols());
  n.value << va, vb;
  return push(std::move(n));
}

Var Tape::gather_rows(Var table, const std::vector<std::uint32_t>& rows) {
  const auto& vt = value(table);
  Node n;
  n.op = Op::GatherRows;
  n.a = table.id;
  n.index = rows;
  n.value.resize(static_cast<Eigen::Index>(rows.size()), vt.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= vt.rows()) throw std::out_of_range("gather_rows index out of range");
    n.value.row(static_cast<Eigen::Index>(k)) = vt.row(rows[k]);
  }
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  Node n;
  n.op = Op::Sum;
  n.a = a.id;
  n.value = Matrix::Constant(1, 1, value(a).sum());
  return push(std::move(n));
}

Var Tape::softmax_xent(Var logits, const std::vector<std::uint32_t>& targets, std::size_t begin,
                       std::size_t end) {
  const auto& z = value(logits);
  if (static_cast<Eigen::Index>(targets.size()) != z.rows()) {
    throw std::invalid_argument("softmax_xent needs one target per row");
  }
  if (begin >= end || static_cast<Eigen::Index>(end) > z.cols()) {
    throw std::invalid_argument("softmax_xent range out of bounds");
  }
  const auto width = static_cast<Eigen::Index>(end - begin);
  Node n;
  n.op = Op::SoftmaxXent;
  n.a = logits.id;
  n.begin = begin;
  n.end = end;
  n.index = targets;
  n.cache.resize(z.rows(), width);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const auto t = targets[static_cast<std::size_t>(i)];
    if (t < begin || t >= end) throw std::out_of_range("softmax_xent target outside range");
    const auto seg = z.row(i).segment(static_cast<Eigen::Index>(begin), width);
    const double peak = seg.maxCoeff();
    double denom = 0.0;
    for (Eigen::Index k = 0; k < width; ++k) {
      n.cache(i, k) = std::exp(seg(k) - peak);
      denom += n.cache(i, k);
    }
    n.cache.row(i) /= denom;
    loss += -(seg(static_cast<Eigen::Index>(t - begin)) - peak - std::log(denom));
  }
  n.value = Matrix::Constant(1, 1, loss);
  return push(std::move(n));
}

void Tape::backward(Var root) {
  if (value(root).size() != 1) throw std::invalid_argument("backward root must be a scalar");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  auto ensure = [this](std::size_t i) -> Matrix& {
    auto& n = nodes_[i];
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  };
  ensure(root.id)(0, 0) = 1.0;

  for (std::size_t idx = root.id + 1; idx-- > 0;) {
    Node& n = nodes_[idx];
    if (n.grad.size() == 0) continue;
    const Matrix& g = n.grad;
    switch (n.op) {
      case Op::Leaf: break;
      case Op::Param: *n.sink += g; break;
      case Op::MatMul:
        ensure(n.a).noalias() += g * nodes_[n.b].value.transpose();
        ensure(n.b).noalias() += nodes_[n.a].value.transpose() * g;
        break;
      case Op::Add:
        ensure(n.a) += g;
        ensure(n.b) += g;
        break;
      case Op::Sub:
        ensure(n.a) += g;
        ensure(n.b) -= g;
        break;
      case Op::Mul:
        ensure(n.a) += g.cwiseProduct(nodes_[n.b].value);
        ensure(n.b) += g.cwiseProduct(nodes_[n.a].value);
        break;
      case Op::AddRow:
        ensure(n.a) += g;
        ensure(n.b) += g.colwise().sum();
        break;
      case Op::Scale: ensure(n.a) += n.scalar * g; break;
      case Op::AddScalar: ensure(n.a) += g; break;
      case Op::OneMinus: ensure(n.a) -= g; break;
      case Op::Square: ensure(n.a) += 2.0 * g.cwiseProduct(nodes_[n.a].value); break;
      case Op::Exp: ensure(n.a) += g.cwiseProduct(n.value); break;
      case Op::Sigmoid:
        ensure(n.a) += (g.array() * n.value.array() * (1.0 - n.value.array())).matrix();
        break;
      case Op::Tanh:
        ensure(n.a) += (g.array() * (1.0 - n.value.array().square())).matrix();
        break;
      case Op::ConcatCols: {
        const auto ca = nodes_[n.a].value.cols();
        const auto cb = nodes_[n.b].value.cols();
        ensure(n.a) += g.leftCols(ca);
        ensure(n.b) += g.rightCols(cb);
        break;
      }
      case Op::GatherRows: {
        Matrix& gt = ensure(n.a);
        for (std::size_t k = 0; k < n.index.size(); ++k)
          gt.row(n.index[k]) += g.row(static_cast<Eigen::Index>(k));
        break;
      }
      case Op::Sum: ensure(n.a).array() += g(0, 0); break;
      case Op::SoftmaxXent: {
        Matrix& gz = ensure(n.a);
        const double s = g(0, 0);
        const auto width = static_cast<Eigen::Index>(n.end - n.begin);
        for (Eigen::Index i = 0; i < n.cache.rows(); ++i) {
          auto seg = gz.row(i).segment(static_cast<Eigen::Index>(n.begin), width);
          seg += s * n.cache.row(i);
          seg(static_cast<Eigen::Index>(n.index[static_cast<std::size_t>(i)] - n.begin)) -= s;
        }
        break;
      }
    }
  }
}

}  // namespace ckge::ad
