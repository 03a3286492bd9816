#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace dds {

using Mat = Eigen::MatrixXd;

// A named, trainable matrix. Gradients accumulate across tapes until cleared.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  // AdamW state, sized lazily by the optimizer.
  Mat adam_m;
  Mat adam_v;

  Parameter() = default;
  Parameter(std::string n, Mat v)
      : name(std::move(n)), value(std::move(v)),
        grad(Mat::Zero(value.rows(), value.cols())) {}
};

// Handle to a node on a Tape.
struct Value {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over double-precision matrices. Nodes are appended in
// topological order; backward walks the tape in reverse. All activations are
// smooth (GELU, sigmoid, softmax, layer norm) so central finite differences
// converge everywhere except the measure-zero kinks of the box losses.
class Tape {
 public:
  Value constant(Mat m);
  Value leaf(Parameter& p);

  const Mat& val(Value v) const { return nodes_[v.id].value; }
  const Mat& grad_of(Value v) const { return nodes_[v.id].grad; }

  // Copies the value into a fresh constant, severing the gradient path.
  Value detach(Value v) { return constant(nodes_[v.id].value); }

  Value matmul(Value a, Value b);
  // a * b^T without materializing a transpose node
  Value matmul_nt(Value a, Value b);
  Value transpose(Value a);
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value scale(Value a, double c);
  Value hadamard(Value a, Value b);
  // a + ones * r where r is 1 x cols
  Value add_rowvec(Value a, Value r);
  Value gelu(Value a);
  Value sigmoid(Value a);
  Value softmax_rows(Value a);
  Value layer_norm(Value x, Value gamma, Value beta, double eps = 1e-5);
  Value slice_cols(Value a, int start, int n);
  Value concat_cols(const std::vector<Value>& parts);
  Value gather_rows(Value a, std::vector<int> idx);
  // Extract kernel patches of a (C x H*W) image into a (Ho*Wo) x (C*k*k)
  // matrix; kernel == stride, no padding.
  Value im2col(Value a, int height, int width, int kernel);

  // Weighted sum of 1x1 nodes.
  Value linear_comb(const std::vector<Value>& terms,
                    const std::vector<double>& coeffs);

  // Scalar losses. Targets and weights are constants.
  Value softmax_cross_entropy(Value logits, std::vector<int> targets,
                              std::vector<double> weights);
  Value bce_with_logits(Value logits, Mat targets);
  Value l1_loss(Value pred, Mat target, double scale);
  // Rows are boxes in center form; value is scale * sum_i (1 - giou_i).
  Value giou_loss(Value pred_boxes, Mat target_boxes, double scale);

  // Accumulates d(root)/d(param) into every referenced Parameter's grad.
  void backward(Value root);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape&, int)> back;
    Parameter* param = nullptr;
  };

  int push(Mat value, std::function<void(Tape&, int)> back = nullptr,
           Parameter* param = nullptr);

  Mat& grad(int id) { return nodes_[id].grad; }
  const Mat& v(int id) const { return nodes_[id].value; }

  std::vector<Node> nodes_;
};

// giou(p, g) plus d giou / d(p.cx, p.cy, p.w, p.h). Shared by the tape loss
// node and the standalone geometry tests.
double giou_with_grad(const double p[4], const double g[4], double dp[4]);

}  // namespace dds
