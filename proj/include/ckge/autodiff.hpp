#pragma once

#include <cstdint>
#include <vector>

#include "ckge/matrix.hpp"

namespace ckge::ad {

// Handle to a node on a Tape.
struct Var {
  std::size_t id = 0;
};

// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
// order, so the node list is already topologically sorted; backward() walks
// it once from the end. Parameters are leaves bound to caller-owned
// storage: backward() adds their gradient into the bound accumulator.
class Tape {
 public:
  Var constant(Matrix value);
  Var parameter(const Matrix& value, Matrix& grad_accumulator);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b);                 // a * b
  Var add(Var a, Var b);                    // same shape
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);                    // elementwise
  Var add_row(Var a, Var row);              // a + broadcast(row), row is 1 x cols
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var one_minus(Var a);
  Var square(Var a);
  Var exp(Var a);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var concat_cols(Var a, Var b);
  Var gather_rows(Var table, const std::vector<std::uint32_t>& rows);
  Var sum(Var a);                           // 1 x 1
  // Sum over rows of -log softmax(logits restricted to [begin, end))[target].
  // Columns outside the range carry no probability mass. 1 x 1.
  Var softmax_xent(Var logits, const std::vector<std::uint32_t>& targets, std::size_t begin,
                   std::size_t end);

  // Seeds d(root)/d(root) = 1 (root must be 1 x 1) and propagates.
  void backward(Var root);

 private:
  enum class Op : std::uint8_t {
    Leaf, Param, MatMul, Add, Sub, Mul, AddRow, Scale, AddScalar, OneMinus, Square, Exp,
    Sigmoid, Tanh, ConcatCols, GatherRows, Sum, SoftmaxXent
  };

  struct Node {
    Op op = Op::Leaf;
    std::size_t a = 0;
    std::size_t b = 0;
    Matrix value;
    Matrix grad;
    double scalar = 0.0;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::vector<std::uint32_t> index;
    Matrix cache;  // softmax probabilities for SoftmaxXent
    Matrix* sink = nullptr;
  };

  Var push(Node node);
  Node& at(Var v) { return nodes_[v.id]; }

  std::vector<Node> nodes_;
};

}  // namespace ckge::ad
