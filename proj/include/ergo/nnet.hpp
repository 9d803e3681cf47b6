#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ergo/environment.hpp"
#include "ergo/kinematics.hpp"

namespace ergo::nn {

// Single-hidden-layer fully connected network: linear -> ReLU -> linear.
// Weights are row-major, w1 is [hidden x input], w2 is [output x hidden].
struct Mlp {
  int input_dim = 0;
  int hidden_dim = 0;
  int output_dim = 0;
  std::vector<double> w1, b1, w2, b2;
  std::uint64_t seed = 0;

  // He-uniform hidden layer, +-1e-3 uniform output layer, zero biases.
  static Mlp init(int input_dim, int hidden_dim, int output_dim, std::uint64_t seed);
  static Mlp zeros(int input_dim, int hidden_dim, int output_dim);

  std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
  bool same_shape(const Mlp& o) const {
    return input_dim == o.input_dim && hidden_dim == o.hidden_dim && output_dim == o.output_dim;
  }
  bool finite() const;

  // Visits the four parameter blocks in a fixed order.
  template <typename F>
  void for_each_block(F&& f) {
    f(w1); f(b1); f(w2); f(b2);
  }
  template <typename F>
  void for_each_block(F&& f) const {
    f(w1); f(b1); f(w2); f(b2);
  }
};

// Same layout as Mlp, holding dLoss/dParam.
struct Gradients {
  std::vector<double> w1, b1, w2, b2;

  static Gradients like(const Mlp& net);
  void zero();
  double max_abs() const;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Workspace-local object position mapped affinely onto [-1, 1]^2.
std::array<double, 2> normalize_state(Point2 obj, const Workspace& ws);

// Row-major [rows x cols] block of doubles.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
  double* row(int i) { return data.data() + static_cast<std::size_t>(i) * cols; }
  const double* row(int i) const { return data.data() + static_cast<std::size_t>(i) * cols; }
  double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
  double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
};

// Activations kept from the forward pass for backpropagation.
struct BatchCache {
  Matrix input;   // [batch x input]
  Matrix hidden;  // [batch x hidden], post-ReLU
};

void forward(const Mlp& net, std::span<const double> input, std::span<double> output);

// Batched kernels. The parallel versions split work with OpenMP; the serial
// versions are the reference they are tested against.
void forward_batch(const Mlp& net, const Matrix& input, BatchCache& cache, Matrix& output);
void forward_batch_serial(const Mlp& net, const Matrix& input, BatchCache& cache, Matrix& output);

// Accumulates into `grads` the gradient of sum_i <out_grad_i, net(x_i)>.
void backward_batch(const Mlp& net, const BatchCache& cache, const Matrix& out_grad,
                    Gradients& grads);
void backward_batch_serial(const Mlp& net, const BatchCache& cache, const Matrix& out_grad,
                           Gradients& grads);

// Single-sample convenience wrapper around the serial kernels.
Gradients backward(const Mlp& net, std::span<const double> input,
                   std::span<const double> output_gradient);

struct Adam {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long long t = 0;
  Gradients m, v;

  static Adam for_net(const Mlp& net, double learning_rate);
  void step(Mlp& net, const Gradients& grads);
};

void soft_update(Mlp& target, const Mlp& online, double tau);

// Text checkpoint. Parameters are written as hexadecimal floats so a reload
// reproduces every bit.
void write_mlp(std::ostream& os, const Mlp& net);
Mlp read_mlp(std::istream& is);

}  // namespace ergo::nn
