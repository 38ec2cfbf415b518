#pragma once

// Multi-layer perceptron: affine layers separated by ReLU, linear output,
// trained on mean absolute error with Adam. Samples are matrix columns.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "core.hpp"
#include "rng.hpp"

namespace cktdesign {

struct MlpConfig {
  std::vector<int> hidden{200, 300, 500, 500, 300, 200};
  int epochs = 100;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int batch_size = 64;
};

template <class Scalar>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct Layer {
    Matrix weight;  // out x in
    Vector bias;    // out
  };

  struct Gradient {
    Scalar loss = 0;
    std::vector<Layer> layers;
  };

  Mlp() = default;

  /// Zero-initialized network with the given layer widths [in, h1, ..., out].
  explicit Mlp(std::span<const int> sizes) {
    if (sizes.size() < 2) throw contract_violation("an MLP needs at least input and output sizes");
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      if (sizes[l] < 1 || sizes[l + 1] < 1) throw contract_violation("layer sizes must be >= 1");
      layers_.push_back({Matrix::Zero(sizes[l + 1], sizes[l]), Vector::Zero(sizes[l + 1])});
    }
  }

  /// Uniform fan-in initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for
  /// weights and biases alike.
  void init_uniform(Rng& rng) {
    for (auto& layer : layers_) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
        for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
          layer.weight(i, j) = static_cast<Scalar>(rng.uniform(-bound, bound));
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
        layer.bias(i) = static_cast<Scalar>(rng.uniform(-bound, bound));
    }
  }

  std::size_t depth() const noexcept { return layers_.size(); }
  int input_size() const { return static_cast<int>(layers_.front().weight.cols()); }
  int output_size() const { return static_cast<int>(layers_.back().weight.rows()); }
  std::vector<int> sizes() const {
    std::vector<int> s;
    if (layers_.empty()) return s;
    s.push_back(input_size());
    for (const auto& l : layers_) s.push_back(static_cast<int>(l.weight.rows()));
    return s;
  }
  std::vector<Layer>& layers() noexcept { return layers_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  Matrix forward(const Matrix& input) const {
    check_input(input);
    Matrix a = input;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Matrix z = layers_[l].weight * a;
      z.colwise() += layers_[l].bias;
      if (l + 1 < layers_.size()) z = z.cwiseMax(Scalar(0));
      a = std::move(z);
    }
    return a;
  }

  /// Mean absolute error over all outputs of the batch.
  Scalar loss(const Matrix& input, const Matrix& target) const {
    const Matrix out = forward(input);
    check_target(out, target);
    return (out - target).cwiseAbs().sum() / static_cast<Scalar>(out.size());
  }

  /// Exact reverse-mode gradient of the mean absolute error; the subgradient
  /// of |r| and of ReLU at 0 is taken as 0.
  Gradient gradient(const Matrix& input, const Matrix& target) const {
    Workspace ws;
    Gradient g;
    g.layers.resize(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l)
      g.layers[l] = {Matrix::Zero(layers_[l].weight.rows(), layers_[l].weight.cols()),
                     Vector::Zero(layers_[l].bias.size())};
    g.loss = backprop(input, target, ws, g.layers);
    return g;
  }

  /// Reusable activation buffers for training.
  struct Workspace {
    std::vector<Matrix> act;
    std::vector<Matrix> delta;
  };

  Scalar backprop(const Matrix& input, const Matrix& target, Workspace& ws,
                  std::vector<Layer>& grads) const {
    check_input(input);
    const auto L = layers_.size();
    const auto batch = input.cols();
    ws.act.resize(L + 1);
    ws.delta.resize(L + 1);
    ws.act[0] = input;
    for (std::size_t l = 0; l < L; ++l) {
      auto& z = ws.act[l + 1];
      z.resize(layers_[l].weight.rows(), batch);
      z.noalias() = layers_[l].weight * ws.act[l];
      z.colwise() += layers_[l].bias;
      if (l + 1 < L) z = z.cwiseMax(Scalar(0));
    }
    const Matrix& out = ws.act[L];
    check_target(out, target);
    const Scalar scale = Scalar(1) / static_cast<Scalar>(out.size());
    const Scalar loss = (out - target).cwiseAbs().sum() * scale;

    ws.delta[L] = (out - target).unaryExpr([scale](Scalar r) {
      return r > Scalar(0) ? scale : (r < Scalar(0) ? -scale : Scalar(0));
    });
    for (std::size_t l = L; l-- > 0;) {
      grads[l].weight.noalias() = ws.delta[l + 1] * ws.act[l].transpose();
      grads[l].bias = ws.delta[l + 1].rowwise().sum();
      if (l > 0) {
        auto& d = ws.delta[l];
        d.resize(layers_[l].weight.cols(), batch);
        d.noalias() = layers_[l].weight.transpose() * ws.delta[l + 1];
        d = (ws.act[l].array() > Scalar(0)).select(d, Scalar(0));
      }
    }
    return loss;
  }

 private:
  void check_input(const Matrix& input) const {
    if (layers_.empty()) throw contract_violation("MLP has no layers");
    if (input.rows() != layers_.front().weight.cols())
      throw contract_violation("MLP input has " + std::to_string(input.rows()) + " rows, expected " +
                               std::to_string(layers_.front().weight.cols()));
  }
  static void check_target(const Matrix& out, const Matrix& target) {
    if (out.rows() != target.rows() || out.cols() != target.cols())
      throw contract_violation("MLP target shape mismatch");
  }

  std::vector<Layer> layers_;
};

/// Adam state for an Mlp.
template <class Scalar>
class AdamOptimizer {
 public:
  using Net = Mlp<Scalar>;

  AdamOptimizer(const Net& net, const MlpConfig& cfg) : cfg_(cfg) {
    for (const auto& l : net.layers()) {
      m_.push_back({Net::Matrix::Zero(l.weight.rows(), l.weight.cols()),
                    Net::Vector::Zero(l.bias.size())});
      v_.push_back(m_.back());
    }
  }

  void step(Net& net, const std::vector<typename Net::Layer>& grads) {
    ++t_;
    const auto b1 = static_cast<Scalar>(cfg_.beta1);
    const auto b2 = static_cast<Scalar>(cfg_.beta2);
    const auto lr = static_cast<Scalar>(cfg_.learning_rate);
    const auto eps = static_cast<Scalar>(cfg_.adam_epsilon);
    const auto c1 = static_cast<Scalar>(1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
    const auto c2 = static_cast<Scalar>(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
    auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
      m = b1 * m + (Scalar(1) - b1) * g;
      v = b2 * v + (Scalar(1) - b2) * g.cwiseAbs2();
      param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };
    auto& layers = net.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      update(layers[l].weight, m_[l].weight, v_[l].weight, grads[l].weight);
      update(layers[l].bias, m_[l].bias, v_[l].bias, grads[l].bias);
    }
  }

 private:
  MlpConfig cfg_;
  std::vector<typename Net::Layer> m_, v_;
  std::int64_t t_ = 0;
};

/// Mini-batch training on column-sample matrices. The sample order is
/// reshuffled every epoch from `seed`. Returns per-epoch mean loss.
template <class Scalar>
std::vector<double> train_mlp(Mlp<Scalar>& net, const typename Mlp<Scalar>::Matrix& inputs,
                              const typename Mlp<Scalar>::Matrix& targets, const MlpConfig& cfg,
                              std::uint64_t seed) {
  using Matrix = typename Mlp<Scalar>::Matrix;
  if (inputs.cols() != targets.cols() || inputs.cols() == 0)
    throw contract_violation("training data empty or inputs/targets differ in sample count");
  if (cfg.batch_size < 1 || cfg.epochs < 0) throw contract_violation("invalid MLP configuration");

  AdamOptimizer<Scalar> adam(net, cfg);
  typename Mlp<Scalar>::Workspace ws;
  std::vector<typename Mlp<Scalar>::Layer> grads;
  for (const auto& l : net.layers())
    grads.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()),
                     Mlp<Scalar>::Vector::Zero(l.bias.size())});

  const auto n = static_cast<std::size_t>(inputs.cols());
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  std::vector<double> history;
  Matrix batch_in, batch_target;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const auto count = std::min(static_cast<std::size_t>(cfg.batch_size), n - start);
      batch_in.resize(inputs.rows(), static_cast<Eigen::Index>(count));
      batch_target.resize(targets.rows(), static_cast<Eigen::Index>(count));
      for (std::size_t c = 0; c < count; ++c) {
        batch_in.col(static_cast<Eigen::Index>(c)) = inputs.col(static_cast<Eigen::Index>(order[start + c]));
        batch_target.col(static_cast<Eigen::Index>(c)) = targets.col(static_cast<Eigen::Index>(order[start + c]));
      }
      total += static_cast<double>(net.backprop(batch_in, batch_target, ws, grads));
      ++batches;
      adam.step(net, grads);
    }
    history.push_back(total / static_cast<double>(batches));
  }
  return history;
}

}  // namespace cktdesign
