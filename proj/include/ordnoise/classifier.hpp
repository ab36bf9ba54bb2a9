#pragma once

// d -> H (ReLU) -> C multi-layer perceptron with analytic gradients and Adam.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ordnoise/error.hpp"
#include "ordnoise/text.hpp"
#include "ordnoise/labels.hpp"
#include "ordnoise/rng.hpp"

namespace ordnoise {

struct MlpParams {
  Eigen::MatrixXd w1;  // H x d
  Eigen::VectorXd b1;  // H
  Eigen::MatrixXd w2;  // C x H
  Eigen::VectorXd b2;  // C

  int input_dim() const { return static_cast<int>(w1.cols()); }
  int hidden_dim() const { return static_cast<int>(w1.rows()); }
  int num_classes() const { return static_cast<int>(w2.rows()); }

  std::size_t parameter_count() const {
    return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
  }

  bool same_shape(const MlpParams& o) const {
    return w1.rows() == o.w1.rows() && w1.cols() == o.w1.cols() && b1.size() == o.b1.size() &&
           w2.rows() == o.w2.rows() && w2.cols() == o.w2.cols() && b2.size() == o.b2.size();
  }

  static MlpParams zeros(int d, int h, int c) {
    return {Eigen::MatrixXd::Zero(h, d), Eigen::VectorXd::Zero(h), Eigen::MatrixXd::Zero(c, h),
            Eigen::VectorXd::Zero(c)};
  }

  MlpParams zeros_like() const { return zeros(input_dim(), hidden_dim(), num_classes()); }

  // Visits (name, tensor) in a fixed order; vectors are viewed as n x 1.
  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    fn("W1", w1);
    fn("b1", b1);
    fn("W2", w2);
    fn("b2", b2);
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    fn("W1", w1);
    fn("b1", b1);
    fn("W2", w2);
    fn("b2", b2);
  }

  MlpParams& operator+=(const MlpParams& o) {
    w1 += o.w1;
    b1 += o.b1;
    w2 += o.w2;
    b2 += o.b2;
    return *this;
  }
  MlpParams& operator*=(double s) {
    w1 *= s;
    b1 *= s;
    w2 *= s;
    b2 *= s;
    return *this;
  }

  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    return a.same_shape(b) && a.w1 == b.w1 && a.b1 == b.b1 && a.w2 == b.w2 && a.b2 == b.b2;
  }
};

// Gradients share the parameter layout.
using MlpGrads = MlpParams;

inline double max_abs_difference(const MlpParams& a, const MlpParams& b) {
  if (!a.same_shape(b)) throw ShapeError("parameter shapes differ");
  return std::max({(a.w1 - b.w1).cwiseAbs().maxCoeff(), (a.b1 - b.b1).cwiseAbs().maxCoeff(),
                   (a.w2 - b.w2).cwiseAbs().maxCoeff(), (a.b2 - b.b2).cwiseAbs().maxCoeff()});
}

// He-style init: weights ~ N(0, 2 / fan_in), zero biases.
inline MlpParams init_mlp(int d, int h, int c, std::uint64_t seed) {
  if (d < 1 || h < 1 || c < 2) throw InvalidParameterError("init_mlp: need d >= 1, H >= 1, C >= 2");
  MlpParams p = MlpParams::zeros(d, h, c);
  Rng rng(derive_seed(seed, "mlp_init"));
  const double s1 = std::sqrt(2.0 / d);
  const double s2 = std::sqrt(2.0 / h);
  for (Eigen::Index i = 0; i < p.w1.rows(); ++i)
    for (Eigen::Index j = 0; j < p.w1.cols(); ++j) p.w1(i, j) = s1 * rng.normal();
  for (Eigen::Index i = 0; i < p.w2.rows(); ++i)
    for (Eigen::Index j = 0; j < p.w2.cols(); ++j) p.w2(i, j) = s2 * rng.normal();
  return p;
}

namespace detail {

inline void check_input(const MlpParams& p, Eigen::Index cols) {
  if (cols != p.w1.cols())
    throw ShapeError("feature dimension " + std::to_string(cols) + " does not match network input " +
                     std::to_string(p.w1.cols()));
}

struct ForwardCache {
  Eigen::MatrixXd pre;     // B x H pre-activations
  Eigen::MatrixXd hidden;  // B x H after ReLU
  Eigen::MatrixXd logits;  // B x C
};

inline ForwardCache forward_cached(const MlpParams& p, const Eigen::MatrixXd& x) {
  check_input(p, x.cols());
  ForwardCache fc;
  fc.pre = (x * p.w1.transpose()).rowwise() + p.b1.transpose();
  fc.hidden = fc.pre.cwiseMax(0.0);
  fc.logits = (fc.hidden * p.w2.transpose()).rowwise() + p.b2.transpose();
  return fc;
}

inline MlpGrads backprop(const MlpParams& p, const Eigen::MatrixXd& x, const ForwardCache& fc,
                         const Eigen::MatrixXd& grad_logits) {
  MlpGrads g;
  g.w2 = grad_logits.transpose() * fc.hidden;
  g.b2 = grad_logits.colwise().sum().transpose();
  Eigen::MatrixXd grad_hidden = grad_logits * p.w2;
  grad_hidden = grad_hidden.array() * (fc.pre.array() > 0.0).cast<double>();
  g.w1 = grad_hidden.transpose() * x;
  g.b1 = grad_hidden.colwise().sum().transpose();
  return g;
}

}  // namespace detail

// Row-wise softmax(z / tau) with max-subtraction.
inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits, double tau = 1.0) {
  if (!(tau > 0.0)) throw InvalidParameterError("temperature must be > 0");
  if (!logits.allFinite()) throw NumericError("non-finite logits");
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double zmax = logits.row(i).maxCoeff();
    p.row(i) = ((logits.row(i).array() - zmax) / tau).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

// logits = W2 relu(W1 x + b1) + b2 for every row of x.
inline Eigen::MatrixXd forward_batch(const MlpParams& p, const Eigen::MatrixXd& x) {
  return detail::forward_cached(p, x).logits;
}

inline Eigen::VectorXd forward(const MlpParams& p, std::span<const double> features) {
  if (static_cast<Eigen::Index>(features.size()) != p.w1.cols())
    throw ShapeError("forward: feature dimension mismatch");
  Eigen::Map<const Eigen::RowVectorXd> row(features.data(), static_cast<Eigen::Index>(features.size()));
  return forward_batch(p, row).row(0).transpose();
}

// 1-based argmax class per row; ties go to the lower class.
inline std::vector<int> predict(const MlpParams& p, const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd logits = forward_batch(p, x);
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c)
      if (logits(i, c) > logits(i, best)) best = c;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best) + 1;
  }
  return out;
}

// B x C target matrix for 1-based labels under the chosen representation.
inline Eigen::MatrixXd make_targets(LabelKind kind, std::span<const int> labels, int num_classes,
                                    double alpha = 0.0) {
  Eigen::MatrixXd t(static_cast<Eigen::Index>(labels.size()), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto l = make_label(kind, labels[i], num_classes, alpha);
    for (int c = 0; c < num_classes; ++c) t(static_cast<Eigen::Index>(i), c) = l[static_cast<std::size_t>(c)];
  }
  return t;
}

struct LossAndGrad {
  double loss = 0.0;  // mean over the batch
  MlpGrads grads;
};

// Mean cross-entropy between target rows and softmax(logits); the gradient at
// the logit layer is (p - target) / B.
inline LossAndGrad backward(const MlpParams& p, const Eigen::MatrixXd& x, const Eigen::MatrixXd& targets) {
  if (x.rows() == 0) throw EmptyBatchError("backward: empty batch");
  if (targets.rows() != x.rows() || targets.cols() != p.w2.rows())
    throw ShapeError("backward: target matrix shape mismatch");
  const auto fc = detail::forward_cached(p, x);
  const Eigen::MatrixXd probs = softmax_rows(fc.logits);
  const auto b = static_cast<double>(x.rows());
  LossAndGrad out;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index c = 0; c < probs.cols(); ++c)
      if (targets(i, c) != 0.0) out.loss -= targets(i, c) * std::log(std::max(probs(i, c), kProbFloor));
  out.loss /= b;
  out.grads = detail::backprop(p, x, fc, (probs - targets) / b);
  return out;
}

// List-of-pairs form of backward().
inline LossAndGrad backward(const MlpParams& p,
                            std::span<const std::pair<std::vector<double>, LabelDistribution>> batch) {
  if (batch.empty()) throw EmptyBatchError("backward: empty batch");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(batch.size()), p.input_dim());
  Eigen::MatrixXd t(static_cast<Eigen::Index>(batch.size()), p.num_classes());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& [f, l] = batch[i];
    if (static_cast<int>(f.size()) != p.input_dim()) throw ShapeError("backward: feature dimension mismatch");
    if (static_cast<int>(l.size()) != p.num_classes()) throw ShapeError("backward: label dimension mismatch");
    for (int j = 0; j < p.input_dim(); ++j) x(static_cast<Eigen::Index>(i), j) = f[static_cast<std::size_t>(j)];
    for (int c = 0; c < p.num_classes(); ++c) t(static_cast<Eigen::Index>(i), c) = l[static_cast<std::size_t>(c)];
  }
  return backward(p, x, t);
}

struct JointLossAndGrad {
  double loss = 0.0;  // mean over the batch of CE1 + CE2 + lambda * J
  MlpGrads grads_1;
  MlpGrads grads_2;
};

namespace detail {

// d/dz of sum_c (a_c - b_c)(ln a_c - ln b_c) with a = softmax(z), both
// clamped at kProbFloor; clamped entries of a contribute no gradient.
inline Eigen::RowVectorXd jeffrey_logit_grad(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  const Eigen::Index n = a.size();
  Eigen::RowVectorXd dp(n);
  for (Eigen::Index c = 0; c < n; ++c) {
    if (a(c) < kProbFloor) {
      dp(c) = 0.0;
      continue;
    }
    const double bc = std::max(b(c), kProbFloor);
    dp(c) = std::log(a(c) / bc) + 1.0 - bc / a(c);
  }
  const double inner = dp.dot(a);
  return a.array() * (dp.array() - inner);
}

}  // namespace detail

// Joint loss CE(f1) + CE(f2) + lambda * Jeffrey(p1, p2), averaged over the
// batch, differentiated with respect to both networks.
inline JointLossAndGrad jocor_backward(const MlpParams& p1, const MlpParams& p2, const Eigen::MatrixXd& x,
                                       const Eigen::MatrixXd& targets, double lambda) {
  if (x.rows() == 0) throw EmptyBatchError("jocor_backward: empty batch");
  if (lambda < 0.0) throw InvalidParameterError("jocor_backward: lambda must be >= 0");
  if (!p1.same_shape(p2)) throw ShapeError("jocor_backward: networks differ in shape");
  if (targets.rows() != x.rows() || targets.cols() != p1.w2.rows())
    throw ShapeError("jocor_backward: target matrix shape mismatch");
  const auto fc1 = detail::forward_cached(p1, x);
  const auto fc2 = detail::forward_cached(p2, x);
  const Eigen::MatrixXd q1 = softmax_rows(fc1.logits);
  const Eigen::MatrixXd q2 = softmax_rows(fc2.logits);
  const auto b = static_cast<double>(x.rows());
  Eigen::MatrixXd g1 = q1 - targets;
  Eigen::MatrixXd g2 = q2 - targets;
  JointLossAndGrad out;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::RowVectorXd r1 = q1.row(i);
    const Eigen::RowVectorXd r2 = q2.row(i);
    const Eigen::RowVectorXd t = targets.row(i);
    const std::span<const double> s1(r1.data(), static_cast<std::size_t>(r1.size()));
    const std::span<const double> s2(r2.data(), static_cast<std::size_t>(r2.size()));
    const std::span<const double> st(t.data(), static_cast<std::size_t>(t.size()));
    out.loss += cross_entropy(st, s1) + cross_entropy(st, s2);
    if (lambda > 0.0) {
      out.loss += lambda * jeffrey_divergence(s1, s2);
      g1.row(i) += lambda * detail::jeffrey_logit_grad(r1, r2);
      g2.row(i) += lambda * detail::jeffrey_logit_grad(r2, r1);
    }
  }
  out.loss /= b;
  out.grads_1 = detail::backprop(p1, x, fc1, g1 / b);
  out.grads_2 = detail::backprop(p2, x, fc2, g2 / b);
  return out;
}

struct AdamState {
  MlpParams m;
  MlpParams v;
  std::uint64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // L2 coefficient added to the gradient

  static AdamState for_params(const MlpParams& p, double learning_rate = 1e-3, double weight_decay = 0.0) {
    AdamState s;
    s.m = p.zeros_like();
    s.v = p.zeros_like();
    s.learning_rate = learning_rate;
    s.weight_decay = weight_decay;
    return s;
  }
};

// One bias-corrected Adam update of `params` in place.
inline void adam_step(MlpParams& params, const MlpGrads& grads, AdamState& state) {
  if (!params.same_shape(grads) || !params.same_shape(state.m) || !params.same_shape(state.v))
    throw ShapeError("adam_step: parameter, gradient and moment shapes differ");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  auto update = [&](auto& theta, const auto& g_raw, auto& m, auto& v) {
    const auto g = (g_raw + state.weight_decay * theta).eval();
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    theta.array() -= state.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
  };
  update(params.w1, grads.w1, state.m.w1, state.v.w1);
  update(params.b1, grads.b1, state.m.b1, state.v.b1);
  update(params.w2, grads.w2, state.m.w2, state.v.w2);
  update(params.b2, grads.b2, state.m.b2, state.v.b2);
}

// Textual snapshot: "tensor,rows,cols" line per tensor followed by its rows.
inline void write_params_csv(std::ostream& os, const MlpParams& p) {
  p.for_each_tensor([&](const char* name, const auto& t) {
    os << name << ',' << t.rows() << ',' << t.cols() << '\n';
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
      for (Eigen::Index j = 0; j < t.cols(); ++j) os << (j ? "," : "") << to_text(t(i, j));
      os << '\n';
    }
  });
}

inline MlpParams read_params_csv(std::istream& is) {
  MlpParams p;
  std::size_t lineno = 0;
  auto read_line = [&](std::string& line) {
    ++lineno;
    if (!std::getline(is, line)) throw ParseError("params csv: unexpected end of file", lineno);
  };
  auto read_tensor = [&](const std::string& expected, Eigen::MatrixXd& out) {
    std::string line;
    read_line(line);
    std::stringstream hs(line);
    std::string name, rows, cols;
    std::getline(hs, name, ',');
    std::getline(hs, rows, ',');
    std::getline(hs, cols, ',');
    if (name != expected) throw ParseError("params csv: expected tensor " + expected, lineno);
    Eigen::Index r = 0, c = 0;
    try {
      r = std::stol(rows);
      c = std::stol(cols);
    } catch (const std::exception&) {
      throw ParseError("params csv: bad tensor shape", lineno);
    }
    out.resize(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
      read_line(line);
      std::stringstream rs(line);
      std::string cell;
      Eigen::Index j = 0;
      while (std::getline(rs, cell, ',')) {
        if (j >= c) throw ParseError("params csv: too many values", lineno);
        try {
          out(i, j++) = std::stod(cell);
        } catch (const std::exception&) {
          throw ParseError("params csv: bad value '" + cell + "'", lineno);
        }
      }
      if (j != c) throw ParseError("params csv: too few values", lineno);
    }
  };
  Eigen::MatrixXd w1, b1, w2, b2;
  read_tensor("W1", w1);
  read_tensor("b1", b1);
  read_tensor("W2", w2);
  read_tensor("b2", b2);
  if (b1.cols() != 1 || b2.cols() != 1 || b1.rows() != w1.rows() || w2.cols() != w1.rows() ||
      b2.rows() != w2.rows())
    throw ShapeError("params csv: inconsistent tensor shapes");
  p.w1 = w1;
  p.b1 = b1.col(0);
  p.w2 = w2;
  p.b2 = b2.col(0);
  return p;
}

}  // namespace ordnoise
