#include "ergo/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace ergo::nn {

Mlp Mlp::zeros(int input_dim, int hidden_dim, int output_dim) {
  if (input_dim <= 0 || hidden_dim <= 0 || output_dim <= 0) {
    throw ShapeError("mlp dimensions must be positive");
  }
  Mlp n;
  n.input_dim = input_dim;
  n.hidden_dim = hidden_dim;
  n.output_dim = output_dim;
  n.w1.assign(static_cast<std::size_t>(hidden_dim) * input_dim, 0.0);
  n.b1.assign(hidden_dim, 0.0);
  n.w2.assign(static_cast<std::size_t>(output_dim) * hidden_dim, 0.0);
  n.b2.assign(output_dim, 0.0);
  return n;
}

Mlp Mlp::init(int input_dim, int hidden_dim, int output_dim, std::uint64_t seed) {
  Mlp n = zeros(input_dim, hidden_dim, output_dim);
  n.seed = seed;
  std::mt19937_64 rng(seed);
  const double hidden_bound = std::sqrt(6.0 / input_dim);
  std::uniform_real_distribution<double> hidden(-hidden_bound, hidden_bound);
  std::uniform_real_distribution<double> out(-1e-3, 1e-3);
  for (auto& w : n.w1) w = hidden(rng);
  for (auto& w : n.w2) w = out(rng);
  return n;
}

bool Mlp::finite() const {
  bool ok = true;
  for_each_block([&](const std::vector<double>& b) {
    for (double v : b) ok = ok && std::isfinite(v);
  });
  return ok;
}

Gradients Gradients::like(const Mlp& net) {
  Gradients g;
  g.w1.assign(net.w1.size(), 0.0);
  g.b1.assign(net.b1.size(), 0.0);
  g.w2.assign(net.w2.size(), 0.0);
  g.b2.assign(net.b2.size(), 0.0);
  return g;
}

void Gradients::zero() {
  std::fill(w1.begin(), w1.end(), 0.0);
  std::fill(b1.begin(), b1.end(), 0.0);
  std::fill(w2.begin(), w2.end(), 0.0);
  std::fill(b2.begin(), b2.end(), 0.0);
}

double Gradients::max_abs() const {
  double m = 0.0;
  for (const auto* b : {&w1, &b1, &w2, &b2}) {
    for (double v : *b) m = std::max(m, std::abs(v));
  }
  return m;
}

std::array<double, 2> normalize_state(Point2 obj, const Workspace& ws) {
  return {2.0 * obj.x / ws.width - 1.0, 2.0 * obj.z / ws.height - 1.0};
}

namespace {

void check_batch(const Mlp& net, const Matrix& input) {
  if (input.cols != net.input_dim) throw ShapeError("batch input width does not match network");
}

void prepare(const Mlp& net, const Matrix& input, BatchCache& cache, Matrix& output) {
  check_batch(net, input);
  cache.input = input;
  if (cache.hidden.rows != input.rows || cache.hidden.cols != net.hidden_dim) {
    cache.hidden = Matrix(input.rows, net.hidden_dim);
  }
  if (output.rows != input.rows || output.cols != net.output_dim) {
    output = Matrix(input.rows, net.output_dim);
  }
}

// One sample through both layers; shared by the serial and parallel kernels.
inline void forward_row(const Mlp& net, const double* x, double* h, double* y) {
  const int in = net.input_dim;
  const int hid = net.hidden_dim;
  for (int j = 0; j < hid; ++j) {
    const double* w = net.w1.data() + static_cast<std::size_t>(j) * in;
    double s = net.b1[j];
    for (int k = 0; k < in; ++k) s += w[k] * x[k];
    h[j] = s > 0.0 ? s : 0.0;
  }
  for (int o = 0; o < net.output_dim; ++o) {
    const double* w = net.w2.data() + static_cast<std::size_t>(o) * hid;
    double s = 0.0;
#pragma omp simd reduction(+ : s)
    for (int j = 0; j < hid; ++j) s += w[j] * h[j];
    y[o] = net.b2[o] + s;
  }
}

}  // namespace

void forward(const Mlp& net, std::span<const double> input, std::span<double> output) {
  if (static_cast<int>(input.size()) != net.input_dim ||
      static_cast<int>(output.size()) != net.output_dim) {
    throw ShapeError("forward: input/output size mismatch");
  }
  std::vector<double> h(net.hidden_dim);
  forward_row(net, input.data(), h.data(), output.data());
}

void forward_batch_serial(const Mlp& net, const Matrix& input, BatchCache& cache, Matrix& output) {
  prepare(net, input, cache, output);
  for (int i = 0; i < input.rows; ++i) {
    forward_row(net, input.row(i), cache.hidden.row(i), output.row(i));
  }
}

void forward_batch(const Mlp& net, const Matrix& input, BatchCache& cache, Matrix& output) {
  prepare(net, input, cache, output);
  const int rows = input.rows;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) {
    forward_row(net, input.row(i), cache.hidden.row(i), output.row(i));
  }
}

namespace {

void check_backward(const Mlp& net, const BatchCache& cache, const Matrix& out_grad,
                    const Gradients& grads) {
  if (out_grad.rows != cache.hidden.rows || out_grad.cols != net.output_dim ||
      cache.hidden.cols != net.hidden_dim || grads.w1.size() != net.w1.size() ||
      grads.w2.size() != net.w2.size()) {
    throw ShapeError("backward: shape mismatch");
  }
}

}  // namespace

void backward_batch_serial(const Mlp& net, const BatchCache& cache, const Matrix& out_grad,
                           Gradients& grads) {
  check_backward(net, cache, out_grad, grads);
  const int hid = net.hidden_dim;
  const int in = net.input_dim;
  std::vector<double> dh(hid);
  for (int i = 0; i < out_grad.rows; ++i) {
    const double* g = out_grad.row(i);
    const double* h = cache.hidden.row(i);
    const double* x = cache.input.row(i);
    std::fill(dh.begin(), dh.end(), 0.0);
    for (int o = 0; o < net.output_dim; ++o) {
      if (g[o] == 0.0) continue;
      grads.b2[o] += g[o];
      double* gw = grads.w2.data() + static_cast<std::size_t>(o) * hid;
      const double* w = net.w2.data() + static_cast<std::size_t>(o) * hid;
      for (int j = 0; j < hid; ++j) {
        gw[j] += g[o] * h[j];
        dh[j] += g[o] * w[j];
      }
    }
    for (int j = 0; j < hid; ++j) {
      if (h[j] <= 0.0) continue;
      grads.b1[j] += dh[j];
      double* gw = grads.w1.data() + static_cast<std::size_t>(j) * in;
      for (int k = 0; k < in; ++k) gw[k] += dh[j] * x[k];
    }
  }
}

void backward_batch(const Mlp& net, const BatchCache& cache, const Matrix& out_grad,
                    Gradients& grads) {
  check_backward(net, cache, out_grad, grads);
  const int hid = net.hidden_dim;
  const int in = net.input_dim;
  const int out = net.output_dim;
  const int rows = out_grad.rows;

  // Output layer: each output unit owns its row of w2.
#pragma omp parallel for schedule(static)
  for (int o = 0; o < out; ++o) {
    double* gw = grads.w2.data() + static_cast<std::size_t>(o) * hid;
    double gb = 0.0;
    for (int i = 0; i < rows; ++i) {
      const double g = out_grad.at(i, o);
      if (g == 0.0) continue;
      gb += g;
      const double* h = cache.hidden.row(i);
      for (int j = 0; j < hid; ++j) gw[j] += g * h[j];
    }
    grads.b2[o] += gb;
  }

  // Back-propagate into the hidden activations row by row. The DQN loss
  // touches a single output per row, so skipping zeros pays off.
  std::vector<double> dh(static_cast<std::size_t>(rows) * hid, 0.0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) {
    const double* g = out_grad.row(i);
    const double* h = cache.hidden.row(i);
    double* d = dh.data() + static_cast<std::size_t>(i) * hid;
    for (int o = 0; o < out; ++o) {
      if (g[o] == 0.0) continue;
      const double* w = net.w2.data() + static_cast<std::size_t>(o) * hid;
      for (int j = 0; j < hid; ++j) d[j] += g[o] * w[j];
    }
    for (int j = 0; j < hid; ++j)
      if (h[j] <= 0.0) d[j] = 0.0;
  }

  // Hidden layer: each hidden unit owns its row of w1.
#pragma omp parallel for schedule(static)
  for (int j = 0; j < hid; ++j) {
    double* gw = grads.w1.data() + static_cast<std::size_t>(j) * in;
    double gb = 0.0;
    for (int i = 0; i < rows; ++i) {
      const double d = dh[static_cast<std::size_t>(i) * hid + j];
      if (d == 0.0) continue;
      gb += d;
      const double* x = cache.input.row(i);
      for (int k = 0; k < in; ++k) gw[k] += d * x[k];
    }
    grads.b1[j] += gb;
  }
}

Gradients backward(const Mlp& net, std::span<const double> input,
                   std::span<const double> output_gradient) {
  if (static_cast<int>(input.size()) != net.input_dim ||
      static_cast<int>(output_gradient.size()) != net.output_dim) {
    throw ShapeError("backward: input/gradient size mismatch");
  }
  Matrix x(1, net.input_dim);
  std::copy(input.begin(), input.end(), x.data.begin());
  Matrix g(1, net.output_dim);
  std::copy(output_gradient.begin(), output_gradient.end(), g.data.begin());
  BatchCache cache;
  Matrix y;
  forward_batch_serial(net, x, cache, y);
  Gradients grads = Gradients::like(net);
  backward_batch_serial(net, cache, g, grads);
  return grads;
}

Adam Adam::for_net(const Mlp& net, double learning_rate) {
  Adam a;
  a.learning_rate = learning_rate;
  a.m = Gradients::like(net);
  a.v = Gradients::like(net);
  return a;
}

void Adam::step(Mlp& net, const Gradients& grads) {
  if (m.w1.size() != net.w1.size() || grads.w1.size() != net.w1.size() ||
      m.w2.size() != net.w2.size() || grads.w2.size() != net.w2.size()) {
    throw ShapeError("adam: state does not match network");
  }
  ++t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& mm,
                    std::vector<double>& vv) {
    const std::size_t n = p.size();
    for (std::size_t i = 0; i < n; ++i) {
      mm[i] = beta1 * mm[i] + (1.0 - beta1) * g[i];
      vv[i] = beta2 * vv[i] + (1.0 - beta2) * g[i] * g[i];
      const double mhat = mm[i] / c1;
      const double vhat = vv[i] / c2;
      p[i] -= learning_rate * mhat / (std::sqrt(vhat) + epsilon);
    }
  };
  update(net.w1, grads.w1, m.w1, v.w1);
  update(net.b1, grads.b1, m.b1, v.b1);
  update(net.w2, grads.w2, m.w2, v.w2);
  update(net.b2, grads.b2, m.b2, v.b2);
}

void soft_update(Mlp& target, const Mlp& online, double tau) {
  if (!target.same_shape(online)) throw ShapeError("soft_update: architecture mismatch");
  auto blend = [tau](std::vector<double>& t, const std::vector<double>& o) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = tau * o[i] + (1.0 - tau) * t[i];
  };
  blend(target.w1, online.w1);
  blend(target.b1, online.b1);
  blend(target.w2, online.w2);
  blend(target.b2, online.b2);
}

// ---------------------------------------------------------------------------
// Checkpoint format:
//   ergo-mlp 1
//   dims <input> <hidden> <output>
//   seed <u64>
//   w1 <n> <hexfloat>...
//   b1 ... w2 ... b2 ...

namespace {

void write_block(std::ostream& os, const char* name, const std::vector<double>& v) {
  os << name << ' ' << v.size();
  for (double x : v) os << ' ' << std::hexfloat << x;
  os << std::defaultfloat << '\n';
}

std::vector<double> read_block(std::istream& is, const char* name, std::size_t expected) {
  std::string tag;
  std::size_t n = 0;
  if (!(is >> tag >> n) || tag != name || n != expected) {
    throw std::runtime_error(std::string("checkpoint: bad block '") + name + "'");
  }
  std::vector<double> v(n);
  for (auto& x : v) {
    std::string tok;
    if (!(is >> tok)) throw std::runtime_error("checkpoint: truncated block");
    x = std::strtod(tok.c_str(), nullptr);
  }
  return v;
}

}  // namespace

void write_mlp(std::ostream& os, const Mlp& net) {
  os << "ergo-mlp 1\n";
  os << "dims " << net.input_dim << ' ' << net.hidden_dim << ' ' << net.output_dim << '\n';
  os << "seed " << net.seed << '\n';
  write_block(os, "w1", net.w1);
  write_block(os, "b1", net.b1);
  write_block(os, "w2", net.w2);
  write_block(os, "b2", net.b2);
}

Mlp read_mlp(std::istream& is) {
  std::string tag;
  int version = 0;
  if (!(is >> tag >> version) || tag != "ergo-mlp" || version != 1) {
    throw std::runtime_error("checkpoint: not an ergo-mlp v1 stream");
  }
  int in = 0, hid = 0, out = 0;
  if (!(is >> tag >> in >> hid >> out) || tag != "dims") {
    throw std::runtime_error("checkpoint: missing dims");
  }
  Mlp n = Mlp::zeros(in, hid, out);
  if (!(is >> tag >> n.seed) || tag != "seed") throw std::runtime_error("checkpoint: missing seed");
  n.w1 = read_block(is, "w1", n.w1.size());
  n.b1 = read_block(is, "b1", n.b1.size());
  n.w2 = read_block(is, "w2", n.w2.size());
  n.b2 = read_block(is, "b2", n.b2.size());
  return n;
}

}  // namespace ergo::nn
