#include "dds/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace dds {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void check(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

int Tape::push(Mat value, std::function<void(Tape&, int)> back, Parameter* param) {
  nodes_.push_back(Node{std::move(value), Mat(), std::move(back), param});
  return static_cast<int>(nodes_.size()) - 1;
}

Value Tape::constant(Mat m) { return {push(std::move(m))}; }

Value Tape::leaf(Parameter& p) { return {push(p.value, nullptr, &p)}; }

Value Tape::matmul(Value a, Value b) {
  check(v(a.id).cols() == v(b.id).rows(), "matmul: inner dims mismatch");
  Mat out = v(a.id) * v(b.id);
  int ia = a.id, ib = b.id;
  return {push(std::move(out), [ia, ib](Tape& t, int self) {
    t.grad(ia).noalias() += t.grad(self) * t.v(ib).transpose();
    t.grad(ib).noalias() += t.v(ia).transpose() * t.grad(self);
  })};
}

Value Tape::matmul_nt(Value a, Value b) {
  check(v(a.id).cols() == v(b.id).cols(), "matmul_nt: inner dims mismatch");
  Mat out = v(a.id) * v(b.id).transpose();
  int ia = a.id, ib = b.id;
  return {push(std::move(out), [ia, ib](Tape& t, int self) {
    t.grad(ia).noalias() += t.grad(self) * t.v(ib);
    t.grad(ib).noalias() += t.grad(self).transpose() * t.v(ia);
  })};
}

Value Tape::transpose(Value a) {
  Mat out = v(a.id).transpose();
  int ia = a.id;
  return {push(std::move(out), [ia](Tape& t, int self) {
    t.grad(ia) += t.grad(self).transpose();
  })};
}

Value Tape::add(Value a, Value b) {
  check(v(a.id).rows() == v(b.id).rows() && v(a.id).cols() == v(b.id).cols(),
        "add: shape mismatch");
  Mat out = v(a.id) + v(b.id);
  int ia = a.id, ib = b.id;
  return {push(std::move(out), [ia, ib](Tape& t, int self) {
    t.grad(ia) += t.grad(self);
    t.grad(ib) += t.grad(self);
  })};
}

Value Tape::sub(Value a, Value b) {
  check(v(a.id).rows() == v(b.id).rows() && v(a.id).cols() == v(b.id).cols(),
        "sub: shape mismatch");
  Mat out = v(a.id) - v(b.id);
  int ia = a.id, ib = b.id;
  return {push(std::move(out), [ia, ib](Tape& t, int self) {
    t.grad(ia) += t.grad(self);
    t.grad(ib) -= t.grad(self);
  })};
}

Value Tape::scale(Value a, double c) {
  Mat out = v(a.id) * c;
  int ia = a.id;
  return {push(std::move(out), [ia, c](Tape& t, int self) {
    t.grad(ia) += t.grad(self) * c;
  })};
}

Value Tape::hadamard(Value a, Value b) {
  check(v(a.id).rows() == v(b.id).rows() && v(a.id).cols() == v(b.id).cols(),
        "hadamard: shape mismatch");
  Mat out = v(a.id).cwiseProduct(v(b.id));
  int ia = a.id, ib = b.id;
  return {push(std::move(out), [ia, ib](Tape& t, int self) {
    t.grad(ia) += t.grad(self).cwiseProduct(t.v(ib));
    t.grad(ib) += t.grad(self).cwiseProduct(t.v(ia));
  })};
}

Value Tape::add_rowvec(Value a, Value r) {
  check(v(r.id).rows() == 1 && v(r.id).cols() == v(a.id).cols(),
        "add_rowvec: r must be 1 x cols(a)");
  Mat out = v(a.id).rowwise() + v(r.id).row(0);
  int ia = a.id, ir = r.id;
  return {push(std::move(out), [ia, ir](Tape& t, int self) {
    t.grad(ia) += t.grad(self);
    t.grad(ir).row(0) += t.grad(self).colwise().sum();
  })};
}

Value Tape::gelu(Value a) {
  Mat out = v(a.id).unaryExpr([](double x) {
    return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  });
  int ia = a.id;
  return {push(std::move(out), [ia](Tape& t, int self) {
    const Mat& x = t.v(ia);
    Mat d = x.unaryExpr([](double xi) {
      return 0.5 * (1.0 + std::erf(xi * kInvSqrt2)) +
             xi * kInvSqrt2Pi * std::exp(-0.5 * xi * xi);
    });
    t.grad(ia) += t.grad(self).cwiseProduct(d);
  })};
}

Value Tape::sigmoid(Value a) {
  Mat out = v(a.id).unaryExpr([](double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                    : std::exp(x) / (1.0 + std::exp(x));
  });
  int ia = a.id;
  return {push(std::move(out), [ia](Tape& t, int self) {
    const Mat& y = t.v(self);
    t.grad(ia) += t.grad(self).cwiseProduct(
        y.cwiseProduct(Mat::Ones(y.rows(), y.cols()) - y));
  })};
}

Value Tape::softmax_rows(Value a) {
  const Mat& x = v(a.id);
  Mat out(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i) {
    double m = x.row(i).maxCoeff();
    Eigen::RowVectorXd e = (x.row(i).array() - m).exp();
    out.row(i) = e / e.sum();
  }
  int ia = a.id;
  return {push(std::move(out), [ia](Tape& t, int self) {
    const Mat& y = t.v(self);
    const Mat& dy = t.grad(self);
    for (int i = 0; i < y.rows(); ++i) {
      double dot = dy.row(i).dot(y.row(i));
      t.grad(ia).row(i) +=
          y.row(i).cwiseProduct(dy.row(i) - Eigen::RowVectorXd::Constant(y.cols(), dot));
    }
  })};
}

Value Tape::layer_norm(Value x, Value gamma, Value beta, double eps) {
  const Mat& xm = v(x.id);
  int d = static_cast<int>(xm.cols());
  check(v(gamma.id).rows() == 1 && v(gamma.id).cols() == d, "layer_norm: gamma shape");
  check(v(beta.id).rows() == 1 && v(beta.id).cols() == d, "layer_norm: beta shape");
  Mat xhat(xm.rows(), d);
  Eigen::VectorXd inv_sigma(xm.rows());
  for (int i = 0; i < xm.rows(); ++i) {
    double mu = xm.row(i).mean();
    double var = (xm.row(i).array() - mu).square().sum() / d;
    double is = 1.0 / std::sqrt(var + eps);
    inv_sigma(i) = is;
    xhat.row(i) = (xm.row(i).array() - mu) * is;
  }
  Mat out = (xhat.array().rowwise() * v(gamma.id).row(0).array()).rowwise() +
            v(beta.id).row(0).array();
  int ix = x.id, ig = gamma.id, ib = beta.id;
  return {push(std::move(out),
               [ix, ig, ib, xhat = std::move(xhat),
                inv_sigma = std::move(inv_sigma)](Tape& t, int self) {
    const Mat& dy = t.grad(self);
    int d = static_cast<int>(dy.cols());
    t.grad(ib).row(0) += dy.colwise().sum();
    t.grad(ig).row(0) += dy.cwiseProduct(xhat).colwise().sum();
    for (int i = 0; i < dy.rows(); ++i) {
      Eigen::RowVectorXd dxhat =
          dy.row(i).cwiseProduct(t.v(ig).row(0));
      double m1 = dxhat.mean();
      double m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
      t.grad(ix).row(i) +=
          inv_sigma(i) *
          (dxhat - Eigen::RowVectorXd::Constant(d, m1) - xhat.row(i) * m2);
    }
  })};
}

Value Tape::slice_cols(Value a, int start, int n) {
  check(start >= 0 && start + n <= v(a.id).cols(), "slice_cols: out of range");
  Mat out = v(a.id).middleCols(start, n);
  int ia = a.id;
  return {push(std::move(out), [ia, start, n](Tape& t, int self) {
    t.grad(ia).middleCols(start, n) += t.grad(self);
  })};
}

Value Tape::concat_cols(const std::vector<Value>& parts) {
  check(!parts.empty(), "concat_cols: empty");
  Eigen::Index rows = v(parts[0].id).rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    check(v(p.id).rows() == rows, "concat_cols: row mismatch");
    cols += v(p.id).cols();
  }
  Mat out(rows, cols);
  std::vector<int> ids;
  std::vector<int> offsets;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, v(p.id).cols()) = v(p.id);
    ids.push_back(p.id);
    offsets.push_back(static_cast<int>(off));
    off += v(p.id).cols();
  }
  return {push(std::move(out),
               [ids = std::move(ids), offsets = std::move(offsets)](Tape& t, int self) {
    for (size_t k = 0; k < ids.size(); ++k) {
      Eigen::Index n = t.v(ids[k]).cols();
      t.grad(ids[k]) += t.grad(self).middleCols(offsets[k], n);
    }
  })};
}

Value Tape::gather_rows(Value a, std::vector<int> idx) {
  Mat out(static_cast<Eigen::Index>(idx.size()), v(a.id).cols());
  for (size_t i = 0; i < idx.size(); ++i) {
    check(idx[i] >= 0 && idx[i] < v(a.id).rows(), "gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = v(a.id).row(idx[i]);
  }
  int ia = a.id;
  return {push(std::move(out), [ia, idx = std::move(idx)](Tape& t, int self) {
    for (size_t i = 0; i < idx.size(); ++i) {
      t.grad(ia).row(idx[i]) += t.grad(self).row(static_cast<Eigen::Index>(i));
    }
  })};
}

Value Tape::im2col(Value a, int height, int width, int kernel) {
  const Mat& x = v(a.id);
  check(x.cols() == static_cast<Eigen::Index>(height) * width, "im2col: pixel count");
  check(height % kernel == 0 && width % kernel == 0,
        "im2col: dims must be divisible by kernel (kernel == stride, no padding)");
  int channels = static_cast<int>(x.rows());
  int ho = height / kernel, wo = width / kernel;
  Mat out(static_cast<Eigen::Index>(ho) * wo,
          static_cast<Eigen::Index>(channels) * kernel * kernel);
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      int orow = oy * wo + ox;
      for (int c = 0; c < channels; ++c) {
        for (int ky = 0; ky < kernel; ++ky) {
          for (int kx = 0; kx < kernel; ++kx) {
            int pix = (oy * kernel + ky) * width + (ox * kernel + kx);
            out(orow, c * kernel * kernel + ky * kernel + kx) = x(c, pix);
          }
        }
      }
    }
  }
  int ia = a.id;
  return {push(std::move(out),
               [ia, height, width, kernel, channels, ho, wo](Tape& t, int self) {
    const Mat& dy = t.grad(self);
    Mat& dx = t.grad(ia);
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        int orow = oy * wo + ox;
        for (int c = 0; c < channels; ++c) {
          for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
              int pix = (oy * kernel + ky) * width + (ox * kernel + kx);
              dx(c, pix) += dy(orow, c * kernel * kernel + ky * kernel + kx);
            }
          }
        }
      }
    }
  })};
}

Value Tape::linear_comb(const std::vector<Value>& terms,
                        const std::vector<double>& coeffs) {
  check(terms.size() == coeffs.size() && !terms.empty(), "linear_comb: arity");
  double total = 0.0;
  std::vector<int> ids;
  for (size_t i = 0; i < terms.size(); ++i) {
    check(v(terms[i].id).size() == 1, "linear_comb: terms must be scalar");
    total += coeffs[i] * v(terms[i].id)(0, 0);
    ids.push_back(terms[i].id);
  }
  Mat out(1, 1);
  out(0, 0) = total;
  return {push(std::move(out), [ids = std::move(ids), coeffs](Tape& t, int self) {
    double g = t.grad(self)(0, 0);
    for (size_t i = 0; i < ids.size(); ++i) {
      t.grad(ids[i])(0, 0) += g * coeffs[i];
    }
  })};
}

Value Tape::softmax_cross_entropy(Value logits, std::vector<int> targets,
                                  std::vector<double> weights) {
  const Mat& z = v(logits.id);
  check(static_cast<Eigen::Index>(targets.size()) == z.rows(), "ce: target count");
  check(targets.size() == weights.size(), "ce: weight count");
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  check(wsum > 0.0, "ce: zero total weight");
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    check(targets[i] >= 0 && targets[i] < z.cols(), "ce: label out of range");
    double m = z.row(i).maxCoeff();
    double lse = m + std::log((z.row(i).array() - m).exp().sum());
    loss += weights[i] * (lse - z(i, targets[i]));
  }
  Mat out(1, 1);
  out(0, 0) = loss / wsum;
  int iz = logits.id;
  return {push(std::move(out),
               [iz, targets = std::move(targets), weights = std::move(weights),
                wsum](Tape& t, int self) {
    double g = t.grad(self)(0, 0) / wsum;
    const Mat& z = t.v(iz);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      double m = z.row(i).maxCoeff();
      Eigen::RowVectorXd e = (z.row(i).array() - m).exp();
      Eigen::RowVectorXd p = e / e.sum();
      p(targets[i]) -= 1.0;
      t.grad(iz).row(i) += g * weights[i] * p;
    }
  })};
}

Value Tape::bce_with_logits(Value logits, Mat targets) {
  const Mat& x = v(logits.id);
  check(x.rows() == targets.rows() && x.cols() == targets.cols(), "bce: shape");
  double n = static_cast<double>(x.size());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      double xi = x(i, j), ti = targets(i, j);
      loss += std::max(xi, 0.0) - xi * ti + std::log1p(std::exp(-std::abs(xi)));
    }
  }
  Mat out(1, 1);
  out(0, 0) = loss / n;
  int iz = logits.id;
  return {push(std::move(out), [iz, targets = std::move(targets), n](Tape& t, int self) {
    double g = t.grad(self)(0, 0) / n;
    const Mat& x = t.v(iz);
    Mat sig = x.unaryExpr([](double xi) {
      return xi >= 0.0 ? 1.0 / (1.0 + std::exp(-xi))
                       : std::exp(xi) / (1.0 + std::exp(xi));
    });
    t.grad(iz) += g * (sig - targets);
  })};
}

Value Tape::l1_loss(Value pred, Mat target, double scale) {
  const Mat& p = v(pred.id);
  check(p.rows() == target.rows() && p.cols() == target.cols(), "l1: shape");
  Mat out(1, 1);
  out(0, 0) = scale * (p - target).cwiseAbs().sum();
  int ip = pred.id;
  return {push(std::move(out), [ip, target = std::move(target), scale](Tape& t, int self) {
    double g = t.grad(self)(0, 0) * scale;
    const Mat& p = t.v(ip);
    t.grad(ip) += g * (p - target).unaryExpr([](double d) {
      return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    });
  })};
}

double giou_with_grad(const double p[4], const double g[4], double dp[4]) {
  double px1 = p[0] - p[2] / 2, px2 = p[0] + p[2] / 2;
  double py1 = p[1] - p[3] / 2, py2 = p[1] + p[3] / 2;
  double gx1 = g[0] - g[2] / 2, gx2 = g[0] + g[2] / 2;
  double gy1 = g[1] - g[3] / 2, gy2 = g[1] + g[3] / 2;

  double xi1 = std::max(px1, gx1), xi2 = std::min(px2, gx2);
  double yi1 = std::max(py1, gy1), yi2 = std::min(py2, gy2);
  double iw = xi2 - xi1, ih = yi2 - yi1;
  bool has_inter = iw > 0.0 && ih > 0.0;
  double inter = has_inter ? iw * ih : 0.0;

  double ap = p[2] * p[3], ag = g[2] * g[3];
  double uni = ap + ag - inter;

  double xc1 = std::min(px1, gx1), xc2 = std::max(px2, gx2);
  double yc1 = std::min(py1, gy1), yc2 = std::max(py2, gy2);
  double cw = xc2 - xc1, ch = yc2 - yc1;
  double enclose = cw * ch;

  double giou = inter / uni - (enclose - uni) / enclose;

  // Partials of I and C w.r.t. the prediction's corner coordinates.
  double dI[4] = {0, 0, 0, 0};  // px1, px2, py1, py2
  if (has_inter) {
    if (px1 >= gx1) dI[0] = -ih;
    if (px2 <= gx2) dI[1] = ih;
    if (py1 >= gy1) dI[2] = -iw;
    if (py2 <= gy2) dI[3] = iw;
  }
  double dC[4] = {0, 0, 0, 0};
  if (px1 <= gx1) dC[0] = -ch;
  if (px2 >= gx2) dC[1] = ch;
  if (py1 <= gy1) dC[2] = -cw;
  if (py2 >= gy2) dC[3] = cw;

  // Corner partials w.r.t. center form (cx, cy, w, h).
  const double jac[4][4] = {
      // px1  px2  py1  py2
      {1.0, 1.0, 0.0, 0.0},    // cx
      {0.0, 0.0, 1.0, 1.0},    // cy
      {-0.5, 0.5, 0.0, 0.0},   // w
      {0.0, 0.0, -0.5, 0.5},   // h
  };
  double dAp[4] = {0.0, 0.0, p[3], p[2]};

  for (int t = 0; t < 4; ++t) {
    double dI_t = 0.0, dC_t = 0.0;
    for (int c = 0; c < 4; ++c) {
      dI_t += dI[c] * jac[t][c];
      dC_t += dC[c] * jac[t][c];
    }
    double dU_t = dAp[t] - dI_t;
    double dIoU_t = (dI_t * uni - inter * dU_t) / (uni * uni);
    dp[t] = dIoU_t + (dU_t * enclose - uni * dC_t) / (enclose * enclose);
  }
  return giou;
}

Value Tape::giou_loss(Value pred_boxes, Mat target_boxes, double scale) {
  const Mat& p = v(pred_boxes.id);
  check(p.cols() == 4 && target_boxes.cols() == 4 && p.rows() == target_boxes.rows(),
        "giou_loss: shape");
  double loss = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    double pb[4] = {p(i, 0), p(i, 1), p(i, 2), p(i, 3)};
    double gb[4] = {target_boxes(i, 0), target_boxes(i, 1), target_boxes(i, 2),
                    target_boxes(i, 3)};
    double dp[4];
    loss += 1.0 - giou_with_grad(pb, gb, dp);
  }
  Mat out(1, 1);
  out(0, 0) = scale * loss;
  int ip = pred_boxes.id;
  return {push(std::move(out),
               [ip, target_boxes = std::move(target_boxes), scale](Tape& t, int self) {
    double g = t.grad(self)(0, 0) * scale;
    const Mat& p = t.v(ip);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      double pb[4] = {p(i, 0), p(i, 1), p(i, 2), p(i, 3)};
      double gb[4] = {target_boxes(i, 0), target_boxes(i, 1), target_boxes(i, 2),
                      target_boxes(i, 3)};
      double dp[4];
      giou_with_grad(pb, gb, dp);
      for (int c = 0; c < 4; ++c) t.grad(ip)(i, c) += -g * dp[c];
    }
  })};
}

void Tape::backward(Value root) {
  check(root.valid() && v(root.id).size() == 1, "backward: root must be scalar");
  for (auto& n : nodes_) {
    n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  }
  nodes_[root.id].grad(0, 0) = 1.0;
  for (int i = root.id; i >= 0; --i) {
    if (nodes_[i].back) nodes_[i].back(*this, i);
    if (nodes_[i].param) nodes_[i].param->grad += nodes_[i].grad;
  }
}

}  // namespace dds
