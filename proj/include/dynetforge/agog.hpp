#pragma once

// Autoregressive GNN-ODE GRU model: affine encoder, augmented graph ODE for
// the hidden state solved with explicit Euler, GRU correction at every
// observation, affine decoder.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dynetforge/autodiff.hpp"
#include "dynetforge/errors.hpp"
#include "dynetforge/optim.hpp"

namespace dynetforge {

using ad::Tensor;

// Euler sub-step size. A span gets max(1, ceil(span / dt)) uniform sub-steps.
struct StepPolicy {
  double dt = 0.025;

  int substeps(double span) const {
    if (!(dt > 0.0)) throw UsageError("step policy dt must be positive");
    // The tolerance keeps spans that are exact multiples of dt from picking
    // up an extra sub-step through rounding.
    const double ratio = span / dt;
    return std::max(1, static_cast<int>(std::ceil(ratio - 1e-9 * std::max(1.0, ratio))));
  }
};

namespace detail {

inline Tensor uniform_weight(int rows, int cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(rows));
  std::uniform_real_distribution<double> unif(-bound, bound);
  ad::Matrix w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = unif(rng);
  return Tensor(std::move(w), true);
}

inline Tensor zero_bias(int rows, int cols) { return Tensor::zeros(rows, cols, true); }

inline const Tensor& find_parameter(const ParameterList& list, const std::string& name, int rows,
                                    int cols) {
  for (const auto& p : list) {
    if (p.name != name) continue;
    if (p.tensor.rows() != rows || p.tensor.cols() != cols) {
      throw ShapeError("parameter '" + name + "' has shape " + p.tensor.shape_string() +
                       ", expected (" + std::to_string(rows) + "x" + std::to_string(cols) + ")");
    }
    return p.tensor;
  }
  throw FormatError("missing parameter '" + name + "'");
}

}  // namespace detail

// x W + b for an n x k state; b is per node.
inline Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  return ad::add(ad::matmul(x, w), b);
}

// Phi h theta_1 + h theta_0 + b_0. Autonomous in t.
inline Tensor graph_ode_rhs(const Tensor& h, const ad::SparseConstant& phi, const Tensor& theta_1,
                            const Tensor& theta_0, const Tensor& b_0) {
  return ad::add(ad::add(ad::matmul(ad::sparse_matmul(phi, h), theta_1), ad::matmul(h, theta_0)),
                 b_0);
}

// Explicit Euler over [t_start, t_end]. A zero-length span returns the start
// state unchanged.
template <class Rhs>
Tensor euler_integrate(const Tensor& start, double t_start, double t_end, const StepPolicy& step,
                       const Rhs& rhs) {
  if (t_end < t_start) {
    throw UsageError("euler_solve: t_end " + std::to_string(t_end) + " precedes t_start " +
                     std::to_string(t_start));
  }
  if (t_end == t_start) return start;
  const int m = step.substeps(t_end - t_start);
  const double dt = (t_end - t_start) / static_cast<double>(m);
  Tensor h = start;
  for (int i = 0; i < m; ++i) {
    h = ad::add(h, ad::scalar_mul(rhs(h), dt));
    if (!h.value().allFinite()) {
      throw NumericError("euler_solve: non-finite state at sub-step " + std::to_string(i));
    }
  }
  return h;
}

// One fused Euler step h + dt * graph_ode_rhs(h, ...). Same value and
// gradients as the composed form, with one tape node instead of seven.
inline Tensor graph_euler_step(const Tensor& h, const ad::SparseConstant& phi,
                               const Tensor& theta_1, const Tensor& theta_0, const Tensor& b_0,
                               double dt) {
  if (phi.cols() != h.rows() || theta_1.rows() != h.cols() || theta_0.rows() != h.cols() ||
      theta_1.cols() != h.cols() || theta_0.cols() != h.cols() || b_0.rows() != h.rows() ||
      b_0.cols() != h.cols()) {
    throw ShapeError("graph_euler_step: incompatible shapes h " + h.shape_string() + ", theta_1 " +
                     theta_1.shape_string() + ", theta_0 " + theta_0.shape_string() + ", b_0 " +
                     b_0.shape_string());
  }
  auto ph = std::make_shared<ad::Matrix>(phi.matrix() * h.value());
  ad::Matrix value = h.value();
  value.noalias() += dt * (*ph * theta_1.value());
  value.noalias() += dt * (h.value() * theta_0.value());
  value += dt * b_0.value();
  auto hn = h.node(), t1 = theta_1.node(), t0 = theta_0.node(), bn = b_0.node();
  return ad::detail::make_result(
      std::move(value), {&h, &theta_1, &theta_0, &b_0},
      [phi, ph, hn, t1, t0, bn, dt](ad::Node& self) {
        const ad::Matrix& g = self.grad;
        if (t1->requires_grad) t1->accumulate(dt * (ph->transpose() * g));
        if (t0->requires_grad) t0->accumulate(dt * (hn->value.transpose() * g));
        if (bn->requires_grad) bn->accumulate(dt * g);
        if (hn->requires_grad) {
          ad::Matrix gh = g;
          gh.noalias() += dt * (phi.transpose() * (g * t1->value.transpose()));
          gh.noalias() += dt * (g * t0->value.transpose());
          hn->accumulate(gh);
        }
      });
}

// Euler solve of the graph ODE using the fused step.
inline Tensor graph_ode_solve(const Tensor& start, double t_start, double t_end,
                              const StepPolicy& step, const ad::SparseConstant& phi,
                              const Tensor& theta_1, const Tensor& theta_0, const Tensor& b_0) {
  if (t_end < t_start) {
    throw UsageError("euler_solve: t_end " + std::to_string(t_end) + " precedes t_start " +
                     std::to_string(t_start));
  }
  if (t_end == t_start) return start;
  const int m = step.substeps(t_end - t_start);
  const double dt = (t_end - t_start) / static_cast<double>(m);
  Tensor h = start;
  for (int i = 0; i < m; ++i) {
    h = graph_euler_step(h, phi, theta_1, theta_0, b_0, dt);
    if (!h.value().allFinite()) {
      throw NumericError("euler_solve: non-finite state at sub-step " + std::to_string(i));
    }
  }
  return h;
}

struct AgogHyper {
  int n = 0;
  int k = 1;
  int d = 20;
  int p = 5;

  int width() const { return d + p; }
  bool operator==(const AgogHyper&) const = default;
};

struct AgogParams {
  AgogHyper hyper;
  Tensor W_e, b_e;
  Tensor theta_1, theta_0, b_0;
  Tensor W_o, b_o;
  Tensor W_r, W_z, W_h;
  Tensor U_r, U_z, U_h;
  Tensor b_wr, b_ur, b_wz, b_uz, b_wh, b_uh;

  // Weights uniform on +-sqrt(1/fan_in), biases zero.
  static AgogParams init(const AgogHyper& hp, std::uint64_t seed) {
    if (hp.n < 1 || hp.k < 1 || hp.d < 1 || hp.p < 0) {
      throw UsageError("AGOG needs n, k, d >= 1 and p >= 0");
    }
    std::mt19937_64 rng(seed);
    const int w = hp.width();
    AgogParams a;
    a.hyper = hp;
    a.W_e = detail::uniform_weight(hp.k, hp.d, rng);
    a.b_e = detail::zero_bias(hp.n, hp.d);
    a.theta_1 = detail::uniform_weight(w, w, rng);
    a.theta_0 = detail::uniform_weight(w, w, rng);
    a.b_0 = detail::zero_bias(hp.n, w);
    a.W_o = detail::uniform_weight(w, hp.k, rng);
    a.b_o = detail::zero_bias(hp.n, hp.k);
    a.W_r = detail::uniform_weight(w, hp.d, rng);
    a.W_z = detail::uniform_weight(w, hp.d, rng);
    a.W_h = detail::uniform_weight(w, hp.d, rng);
    a.U_r = detail::uniform_weight(hp.d, hp.d, rng);
    a.U_z = detail::uniform_weight(hp.d, hp.d, rng);
    a.U_h = detail::uniform_weight(hp.d, hp.d, rng);
    for (Tensor* b : {&a.b_wr, &a.b_ur, &a.b_wz, &a.b_uz, &a.b_wh, &a.b_uh}) {
      *b = detail::zero_bias(hp.n, hp.d);
    }
    return a;
  }

  ParameterList parameters() const {
    return {{"W_e", W_e},   {"b_e", b_e},   {"theta_1", theta_1}, {"theta_0", theta_0},
            {"b_0", b_0},   {"W_o", W_o},   {"b_o", b_o},         {"W_r", W_r},
            {"W_z", W_z},   {"W_h", W_h},   {"U_r", U_r},         {"U_z", U_z},
            {"U_h", U_h},   {"b_wr", b_wr}, {"b_ur", b_ur},       {"b_wz", b_wz},
            {"b_uz", b_uz}, {"b_wh", b_wh}, {"b_uh", b_uh}};
  }

  static AgogParams from_parameters(const AgogHyper& hp, const ParameterList& list) {
    const int w = hp.width();
    AgogParams a;
    a.hyper = hp;
    auto get = [&](const char* name, int rows, int cols) {
      return detail::find_parameter(list, name, rows, cols);
    };
    a.W_e = get("W_e", hp.k, hp.d);
    a.b_e = get("b_e", hp.n, hp.d);
    a.theta_1 = get("theta_1", w, w);
    a.theta_0 = get("theta_0", w, w);
    a.b_0 = get("b_0", hp.n, w);
    a.W_o = get("W_o", w, hp.k);
    a.b_o = get("b_o", hp.n, hp.k);
    a.W_r = get("W_r", w, hp.d);
    a.W_z = get("W_z", w, hp.d);
    a.W_h = get("W_h", w, hp.d);
    a.U_r = get("U_r", hp.d, hp.d);
    a.U_z = get("U_z", hp.d, hp.d);
    a.U_h = get("U_h", hp.d, hp.d);
    a.b_wr = get("b_wr", hp.n, hp.d);
    a.b_ur = get("b_ur", hp.n, hp.d);
    a.b_wz = get("b_wz", hp.n, hp.d);
    a.b_uz = get("b_uz", hp.n, hp.d);
    a.b_wh = get("b_wh", hp.n, hp.d);
    a.b_uh = get("b_uh", hp.n, hp.d);
    return a;
  }
};

namespace agog {

inline Tensor encode(const Tensor& x, const AgogParams& prm) { return affine(x, prm.W_e, prm.b_e); }

inline Tensor gnn_ode_rhs(const Tensor& h_a, const ad::SparseConstant& phi, const AgogParams& prm) {
  return graph_ode_rhs(h_a, phi, prm.theta_1, prm.theta_0, prm.b_0);
}

inline Tensor euler_solve(const Tensor& h_a_start, double t_start, double t_end,
                          const ad::SparseConstant& phi, const AgogParams& prm,
                          const StepPolicy& step) {
  return graph_ode_solve(h_a_start, t_start, t_end, step, phi, prm.theta_1, prm.theta_0, prm.b_0);
}

// h_pred: solver output (n x (d+p)); h_obs: encoded observation (n x d).
// z -> 1 hands back the observation encoding.
inline Tensor gru_update(const Tensor& h_pred, const Tensor& h_obs, const AgogParams& prm) {
  using namespace ad;
  const Tensor r = sigmoid(add(add(matmul(h_pred, prm.W_r), prm.b_wr),
                               add(matmul(h_obs, prm.U_r), prm.b_ur)));
  const Tensor z = sigmoid(add(add(matmul(h_pred, prm.W_z), prm.b_wz),
                               add(matmul(h_obs, prm.U_z), prm.b_uz)));
  const Tensor cand = tanh(add(add(matmul(h_pred, prm.W_h), prm.b_wh),
                               mul(r, add(matmul(h_obs, prm.U_h), prm.b_uh))));
  // (1 - z) * cand + z * h_obs
  return add(cand, mul(z, sub(h_obs, cand)));
}

inline Tensor augment(const Tensor& h, int p) {
  if (p < 0) throw UsageError("augment dimension must be >= 0");
  if (p == 0) return h;
  return ad::concat_cols(h, Tensor::zeros(h.rows(), p));
}

inline Tensor decode(const Tensor& h_any, const AgogParams& prm) {
  return affine(h_any, prm.W_o, prm.b_o);
}

struct Rollout {
  std::vector<Tensor> x_pred;     // x'_i, decoded solver output
  std::vector<Tensor> x_updated;  // x^_i, decoded augmented GRU state
  std::vector<Tensor> h_a;        // augmented updated state at each observation
};

// Autoregressive pass over the observed sequence. At i = 0 there is no
// solver output, so x'_0 is taken to be x^_0.
inline Rollout train_rollout(std::span<const double> times, std::span<const ad::Matrix> observations,
                             const AgogParams& prm, const ad::SparseConstant& phi,
                             const StepPolicy& step) {
  if (times.size() != observations.size()) {
    throw UsageError("train_rollout: times and observations differ in length");
  }
  if (times.size() < 2) throw UsageError("train_rollout needs at least 2 observations");
  Rollout out;
  const int p = prm.hyper.p;
  Tensor h_a = augment(encode(Tensor::constant(observations[0]), prm), p);
  Tensor x_hat = decode(h_a, prm);
  out.h_a.push_back(h_a);
  out.x_updated.push_back(x_hat);
  out.x_pred.push_back(x_hat);
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) throw UsageError("train_rollout: times must increase");
    const Tensor h_pred = euler_solve(h_a, times[i - 1], times[i], phi, prm, step);
    const Tensor h_obs = encode(Tensor::constant(observations[i]), prm);
    h_a = augment(gru_update(h_pred, h_obs, prm), p);
    out.x_pred.push_back(decode(h_pred, prm));
    out.x_updated.push_back(decode(h_a, prm));
    out.h_a.push_back(h_a);
  }
  return out;
}

enum class InferenceMode { interpolation, extrapolation };

// Predictions at query_times without recording gradients. Interpolation
// solves each query independently from the latest updated state at or before
// it; extrapolation chains forward from the last updated state.
inline std::vector<ad::Matrix> inference_rollout(std::span<const double> train_times,
                                                 std::span<const ad::Matrix> train_obs,
                                                 std::span<const double> query_times,
                                                 InferenceMode mode, const AgogParams& prm,
                                                 const ad::SparseConstant& phi,
                                                 const StepPolicy& step) {
  ad::NoGradGuard no_grad;
  const Rollout roll = train_rollout(train_times, train_obs, prm, phi, step);
  std::vector<ad::Matrix> out;
  out.reserve(query_times.size());
  if (mode == InferenceMode::interpolation) {
    for (double q : query_times) {
      if (q < train_times.front()) {
        throw UsageError("query time " + std::to_string(q) + " precedes the first observation");
      }
      const auto it = std::upper_bound(train_times.begin(), train_times.end(), q);
      const auto a = static_cast<std::size_t>(std::distance(train_times.begin(), it)) - 1;
      const Tensor h = euler_solve(roll.h_a[a], train_times[a], q, phi, prm, step);
      out.push_back(decode(h, prm).value());
    }
    return out;
  }
  Tensor h = roll.h_a.back();
  double t = train_times.back();
  for (double q : query_times) {
    if (q < t) {
      throw UsageError("extrapolation queries must be sorted and not precede the last observation");
    }
    h = euler_solve(h, t, q, phi, prm, step);
    t = q;
    out.push_back(decode(h, prm).value());
  }
  return out;
}

}  // namespace agog
}  // namespace dynetforge
