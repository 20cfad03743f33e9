#pragma once

// Real MLP hidden stacks with a complex affine output layer. Hidden layers use
// Swish; the output layer is linear. Gradients of complex quantities follow
// the real-pair convention G = dL/dRe + i dL/dIm.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cndm/common.hpp"
#include "cndm/random.hpp"

namespace cndm {

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;  // out x in, row-major
  std::vector<double> bias;    // out

  DenseLayer() = default;
  DenseLayer(std::size_t in_, std::size_t out_)
      : in(in_), out(out_), weight(in_ * out_, 0.0), bias(out_, 0.0) {}
};

struct ComplexOutputLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<cplx> weight;  // out x in, row-major
  std::vector<cplx> bias;    // out

  ComplexOutputLayer() = default;
  ComplexOutputLayer(std::size_t in_, std::size_t out_)
      : in(in_), out(out_), weight(in_ * out_, cplx(0.0, 0.0)), bias(out_, cplx(0.0, 0.0)) {}
};

struct MlpShape {
  std::size_t input = 0;
  std::size_t hidden = 0;  // width of every hidden layer
  std::size_t layers = 0;  // number of hidden layers, may be 0
  std::size_t output = 0;  // complex outputs

  bool operator==(const MlpShape&) const = default;
};

struct MlpParams {
  std::vector<DenseLayer> hidden;
  ComplexOutputLayer output;

  std::size_t input_size() const { return hidden.empty() ? output.in : hidden.front().in; }
  std::size_t output_size() const { return output.out; }

  /// Doubles needed to record one forward pass for the backward pass.
  std::size_t tape_size() const {
    std::size_t n = 0;
    for (const DenseLayer& l : hidden) n += 2 * l.out;
    return n;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const DenseLayer& l : hidden) n += l.weight.size() + l.bias.size();
    return n + 2 * (output.weight.size() + output.bias.size());
  }
};

inline MlpParams make_mlp(const MlpShape& s) {
  MlpParams p;
  std::size_t width = s.input;
  for (std::size_t l = 0; l < s.layers; ++l) {
    p.hidden.emplace_back(width, s.hidden);
    width = s.hidden;
  }
  p.output = ComplexOutputLayer(width, s.output);
  return p;
}

/// Hidden weights uniform on +-sqrt(1/fan_in); complex output real and
/// imaginary parts each uniform on +-sqrt(1/(2 fan_in)). Biases likewise.
inline MlpParams init_mlp(const MlpShape& s, Rng& rng) {
  MlpParams p = make_mlp(s);
  for (DenseLayer& l : p.hidden) {
    const double bound = std::sqrt(1.0 / static_cast<double>(l.in));
    for (double& w : l.weight) w = uniform(rng, -bound, bound);
    for (double& b : l.bias) b = uniform(rng, -bound, bound);
  }
  const double bound = std::sqrt(1.0 / (2.0 * static_cast<double>(std::max<std::size_t>(1, p.output.in))));
  for (cplx& w : p.output.weight) w = cplx(uniform(rng, -bound, bound), uniform(rng, -bound, bound));
  for (cplx& b : p.output.bias) b = cplx(uniform(rng, -bound, bound), uniform(rng, -bound, bound));
  return p;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double swish(double x) { return x * sigmoid(x); }

inline double swish_grad(double x) {
  const double s = sigmoid(x);
  return s + x * s * (1.0 - s);
}

/// Forward pass. `tape`, if non-empty, must hold tape_size() doubles and
/// receives (pre-activation, activation) per hidden layer.
inline void mlp_forward(const MlpParams& p, std::span<const double> x, std::span<cplx> out,
                        std::span<double> tape = {}) {
  require_shape(x.size() == p.input_size(),
                "mlp_forward: input has " + std::to_string(x.size()) + " entries, expected " +
                    std::to_string(p.input_size()));
  require_shape(out.size() == p.output.out, "mlp_forward: output size mismatch");
  std::vector<double> scratch;
  if (tape.empty() && !p.hidden.empty()) {
    scratch.resize(p.tape_size());
    tape = scratch;
  }
  require_shape(tape.size() >= p.tape_size(), "mlp_forward: tape too small");

  std::span<const double> act = x;
  std::size_t offset = 0;
  for (const DenseLayer& l : p.hidden) {
    double* z = tape.data() + offset;
    double* a = z + l.out;
    for (std::size_t o = 0; o < l.out; ++o) {
      const double* w = l.weight.data() + o * l.in;
      double sum = l.bias[o];
      for (std::size_t i = 0; i < l.in; ++i) sum += w[i] * act[i];
      z[o] = sum;
      a[o] = swish(sum);
    }
    act = std::span<const double>(a, l.out);
    offset += 2 * l.out;
  }
  const ComplexOutputLayer& ol = p.output;
  for (std::size_t o = 0; o < ol.out; ++o) {
    const cplx* w = ol.weight.data() + o * ol.in;
    double re = ol.bias[o].real();
    double im = ol.bias[o].imag();
    for (std::size_t i = 0; i < ol.in; ++i) {
      re += w[i].real() * act[i];
      im += w[i].imag() * act[i];
    }
    out[o] = cplx(re, im);
  }
}

inline std::vector<cplx> mlp_forward(const MlpParams& p, std::span<const double> x) {
  std::vector<cplx> out(p.output.out);
  mlp_forward(p, x, out);
  return out;
}

/// Accumulates parameter gradients into `grads` (same shape as `p`) and, when
/// `input_grad` is non-empty, writes dL/dx there. `tape` is the record from the
/// forward pass on the same x.
inline void mlp_backward(const MlpParams& p, std::span<const double> x,
                         std::span<const double> tape, std::span<const cplx> out_grad,
                         MlpParams& grads, std::span<double> input_grad = {}) {
  require_shape(out_grad.size() == p.output.out, "mlp_backward: output gradient size mismatch");
  require_shape(x.size() == p.input_size(), "mlp_backward: input size mismatch");
  require_shape(tape.size() >= p.tape_size(), "mlp_backward: tape too small");
  require_shape(input_grad.empty() || input_grad.size() == x.size(),
                "mlp_backward: input gradient size mismatch");

  const std::size_t n_hidden = p.hidden.size();
  std::size_t offset = p.tape_size();
  const auto activation_of = [&](std::size_t layer) -> std::span<const double> {
    if (layer == 0) return x;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < layer; ++l) off += 2 * p.hidden[l].out;
    return tape.subspan(off + p.hidden[layer - 1].out, p.hidden[layer - 1].out);
  };

  // Output layer.
  const ComplexOutputLayer& ol = p.output;
  ComplexOutputLayer& gol = grads.output;
  const std::span<const double> last = activation_of(n_hidden);
  std::vector<double> delta(ol.in, 0.0);
  for (std::size_t o = 0; o < ol.out; ++o) {
    const cplx g = out_grad[o];
    gol.bias[o] += g;
    const cplx* w = ol.weight.data() + o * ol.in;
    cplx* gw = gol.weight.data() + o * ol.in;
    for (std::size_t i = 0; i < ol.in; ++i) {
      gw[i] += g * last[i];
      delta[i] += g.real() * w[i].real() + g.imag() * w[i].imag();
    }
  }

  // Hidden layers, last to first. delta holds dL/d(activation) on entry.
  for (std::size_t l = n_hidden; l-- > 0;) {
    const DenseLayer& layer = p.hidden[l];
    DenseLayer& glayer = grads.hidden[l];
    offset -= 2 * layer.out;
    const double* z = tape.data() + offset;
    const std::span<const double> in_act = activation_of(l);
    std::vector<double> next(layer.in, 0.0);
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double dz = delta[o] * swish_grad(z[o]);
      glayer.bias[o] += dz;
      const double* w = layer.weight.data() + o * layer.in;
      double* gw = glayer.weight.data() + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) {
        gw[i] += dz * in_act[i];
        next[i] += dz * w[i];
      }
    }
    delta = std::move(next);
  }
  if (!input_grad.empty())
    for (std::size_t i = 0; i < x.size(); ++i) input_grad[i] = delta[i];
}

inline double smooth_l1_term(double d, double beta) {
  const double a = std::abs(d);
  return a < beta ? 0.5 * d * d / beta : a - 0.5 * beta;
}

/// d/dd of smooth_l1_term.
inline double smooth_l1_slope(double d, double beta) {
  if (std::abs(d) < beta) return d / beta;
  return d > 0.0 ? 1.0 : -1.0;
}

/// Mean SmoothL1 over elements.
inline double smooth_l1(std::span<const double> pred, std::span<const double> target,
                        double beta = 1.0) {
  require_shape(pred.size() == target.size(), "smooth_l1: length mismatch");
  if (!(beta > 0.0)) throw Error(ErrorCategory::config, "smooth_l1: beta must be positive");
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += smooth_l1_term(pred[i] - target[i], beta);
  return sum / static_cast<double>(pred.size());
}

}  // namespace cndm
