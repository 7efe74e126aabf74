#pragma once

// Comparison models: NDCN (one graph ODE over the whole horizon, no
// observation updates) and temporal GNNs (GCN block feeding a GRU, LSTM or
// vanilla RNN cell; equal-interval sequences only).

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dynetforge/agog.hpp"
#include "dynetforge/autodiff.hpp"
#include "dynetforge/errors.hpp"
#include "dynetforge/optim.hpp"

namespace dynetforge {

struct NdcnHyper {
  int n = 0;
  int k = 1;
  int d = 20;
  bool operator==(const NdcnHyper&) const = default;
};

struct NdcnParams {
  NdcnHyper hyper;
  Tensor W_e, b_e;
  Tensor theta_1, theta_0, b_0;
  Tensor W_o, b_o;

  static NdcnParams init(const NdcnHyper& hp, std::uint64_t seed) {
    if (hp.n < 1 || hp.k < 1 || hp.d < 1) throw UsageError("NDCN needs n, k, d >= 1");
    std::mt19937_64 rng(seed);
    NdcnParams a;
    a.hyper = hp;
    a.W_e = detail::uniform_weight(hp.k, hp.d, rng);
    a.b_e = detail::zero_bias(hp.n, hp.d);
    a.theta_1 = detail::uniform_weight(hp.d, hp.d, rng);
    a.theta_0 = detail::uniform_weight(hp.d, hp.d, rng);
    a.b_0 = detail::zero_bias(hp.n, hp.d);
    a.W_o = detail::uniform_weight(hp.d, hp.k, rng);
    a.b_o = detail::zero_bias(hp.n, hp.k);
    return a;
  }

  ParameterList parameters() const {
    return {{"W_e", W_e}, {"b_e", b_e}, {"theta_1", theta_1}, {"theta_0", theta_0},
            {"b_0", b_0}, {"W_o", W_o}, {"b_o", b_o}};
  }

  static NdcnParams from_parameters(const NdcnHyper& hp, const ParameterList& list) {
    NdcnParams a;
    a.hyper = hp;
    a.W_e = detail::find_parameter(list, "W_e", hp.k, hp.d);
    a.b_e = detail::find_parameter(list, "b_e", hp.n, hp.d);
    a.theta_1 = detail::find_parameter(list, "theta_1", hp.d, hp.d);
    a.theta_0 = detail::find_parameter(list, "theta_0", hp.d, hp.d);
    a.b_0 = detail::find_parameter(list, "b_0", hp.n, hp.d);
    a.W_o = detail::find_parameter(list, "W_o", hp.d, hp.k);
    a.b_o = detail::find_parameter(list, "b_o", hp.n, hp.k);
    return a;
  }
};

namespace ndcn {

inline Tensor solve(const Tensor& h, double t_start, double t_end, const ad::SparseConstant& phi,
                    const NdcnParams& prm, const StepPolicy& step) {
  return graph_ode_solve(h, t_start, t_end, step, phi, prm.theta_1, prm.theta_0, prm.b_0);
}

// Hidden states at each query time, chaining one solve across the sorted
// queries starting from encode(x0) at t0.
inline std::vector<Tensor> hidden_path(const NdcnParams& prm, const ad::SparseConstant& phi,
                                       const ad::Matrix& x0, double t0,
                                       std::span<const double> query_times,
                                       const StepPolicy& step) {
  std::vector<Tensor> out;
  out.reserve(query_times.size());
  Tensor h = affine(Tensor::constant(x0), prm.W_e, prm.b_e);
  double t = t0;
  for (double q : query_times) {
    if (q < t) throw UsageError("ndcn: query times must be sorted and not precede t0");
    h = solve(h, t, q, phi, prm, step);
    t = q;
    out.push_back(h);
  }
  return out;
}

inline std::vector<Tensor> forward(const NdcnParams& prm, const ad::SparseConstant& phi,
                                   const ad::Matrix& x0, double t0,
                                   std::span<const double> query_times, const StepPolicy& step) {
  auto path = hidden_path(prm, phi, x0, t0, query_times, step);
  for (auto& h : path) h = affine(h, prm.W_o, prm.b_o);
  return path;
}

// Mean over timestamps of the mean absolute deviation.
inline Tensor loss(std::span<const Tensor> predictions, std::span<const ad::Matrix> observations) {
  if (predictions.size() != observations.size() || predictions.empty()) {
    throw UsageError("ndcn loss: predictions and observations differ in length");
  }
  Tensor total;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    Tensor term = ad::mean_abs(ad::sub(predictions[i], Tensor::constant(observations[i])));
    total = total.defined() ? ad::add(total, term) : term;
  }
  return ad::scalar_mul(total, 1.0 / static_cast<double>(predictions.size()));
}

// Test-time predictions consistent with training: the trajectory follows the
// training timestamps, and each query is solved from the last training time
// at or before it (chained across queries past the last training time).
inline std::vector<ad::Matrix> predict(const NdcnParams& prm, const ad::SparseConstant& phi,
                                       std::span<const double> train_times,
                                       const ad::Matrix& x0, std::span<const double> query_times,
                                       const StepPolicy& step) {
  ad::NoGradGuard no_grad;
  const auto anchors = hidden_path(prm, phi, x0, train_times.front(), train_times, step);
  std::vector<ad::Matrix> out;
  Tensor tail = anchors.back();
  double tail_t = train_times.back();
  for (double q : query_times) {
    if (q < train_times.front()) throw UsageError("ndcn: query precedes the first observation");
    Tensor h;
    if (q <= train_times.back()) {
      const auto it = std::upper_bound(train_times.begin(), train_times.end(), q);
      const auto a = static_cast<std::size_t>(std::distance(train_times.begin(), it)) - 1;
      h = solve(anchors[a], train_times[a], q, phi, prm, step);
    } else {
      if (q < tail_t) throw UsageError("ndcn: query times must be sorted");
      tail = solve(tail, tail_t, q, phi, prm, step);
      tail_t = q;
      h = tail;
    }
    out.push_back(affine(h, prm.W_o, prm.b_o).value());
  }
  return out;
}

}  // namespace ndcn

enum class CellType { gru, lstm, rnn };

inline std::string to_string(CellType c) {
  switch (c) {
    case CellType::gru: return "gru";
    case CellType::lstm: return "lstm";
    case CellType::rnn: return "rnn";
  }
  return "?";
}

struct TemporalGnnHyper {
  CellType cell = CellType::gru;
  int n = 0;
  int k = 1;
  int g1 = 10;  // GCN block width
  int g2 = 5;   // recurrent hidden size
  bool operator==(const TemporalGnnHyper&) const = default;
};

namespace temporal {

// Gate names per cell type; each gate has an input weight W_*, a recurrent
// weight U_*, and per-node biases b_w*, b_u*.
inline std::vector<std::string> gate_names(CellType cell) {
  switch (cell) {
    case CellType::gru: return {"r", "z", "h"};
    case CellType::lstm: return {"i", "f", "g", "o"};
    case CellType::rnn: return {"h"};
  }
  return {};
}

}  // namespace temporal

struct TemporalGnnParams {
  TemporalGnnHyper hyper;
  Tensor W_e, b_e;
  ParameterList cell;  // W_x, U_x, b_wx, b_ux per gate x
  Tensor W_d, b_d;

  static TemporalGnnParams init(const TemporalGnnHyper& hp, std::uint64_t seed) {
    if (hp.n < 1 || hp.k < 1 || hp.g1 < 1 || hp.g2 < 1) {
      throw UsageError("temporal GNN needs n, k, g1, g2 >= 1");
    }
    std::mt19937_64 rng(seed);
    TemporalGnnParams a;
    a.hyper = hp;
    a.W_e = detail::uniform_weight(hp.k, hp.g1, rng);
    a.b_e = detail::zero_bias(hp.n, hp.g1);
    for (const auto& g : temporal::gate_names(hp.cell)) {
      a.cell.push_back({"W_" + g, detail::uniform_weight(hp.g1, hp.g2, rng)});
      a.cell.push_back({"U_" + g, detail::uniform_weight(hp.g2, hp.g2, rng)});
      a.cell.push_back({"b_w" + g, detail::zero_bias(hp.n, hp.g2)});
      a.cell.push_back({"b_u" + g, detail::zero_bias(hp.n, hp.g2)});
    }
    a.W_d = detail::uniform_weight(hp.g2, hp.k, rng);
    a.b_d = detail::zero_bias(hp.n, hp.k);
    return a;
  }

  ParameterList parameters() const {
    ParameterList list{{"W_e", W_e}, {"b_e", b_e}};
    list.insert(list.end(), cell.begin(), cell.end());
    list.push_back({"W_d", W_d});
    list.push_back({"b_d", b_d});
    return list;
  }

  static TemporalGnnParams from_parameters(const TemporalGnnHyper& hp, const ParameterList& list) {
    TemporalGnnParams a;
    a.hyper = hp;
    a.W_e = detail::find_parameter(list, "W_e", hp.k, hp.g1);
    a.b_e = detail::find_parameter(list, "b_e", hp.n, hp.g1);
    for (const auto& g : temporal::gate_names(hp.cell)) {
      a.cell.push_back({"W_" + g, detail::find_parameter(list, "W_" + g, hp.g1, hp.g2)});
      a.cell.push_back({"U_" + g, detail::find_parameter(list, "U_" + g, hp.g2, hp.g2)});
      a.cell.push_back({"b_w" + g, detail::find_parameter(list, "b_w" + g, hp.n, hp.g2)});
      a.cell.push_back({"b_u" + g, detail::find_parameter(list, "b_u" + g, hp.n, hp.g2)});
    }
    a.W_d = detail::find_parameter(list, "W_d", hp.g2, hp.k);
    a.b_d = detail::find_parameter(list, "b_d", hp.n, hp.k);
    return a;
  }

  const Tensor& gate(const std::string& name) const {
    for (const auto& p : cell) {
      if (p.name == name) return p.tensor;
    }
    throw UsageError("no cell parameter '" + name + "'");
  }
};

namespace temporal {

// ReLU(Phi x W_e + b_e)
inline Tensor gcn_block(const Tensor& x, const ad::SparseConstant& phi,
                        const TemporalGnnParams& prm) {
  return ad::relu(affine(ad::sparse_matmul(phi, x), prm.W_e, prm.b_e));
}

struct CellState {
  Tensor h;
  Tensor c;  // LSTM only
};

inline Tensor gate_preact(const Tensor& z, const Tensor& h, const TemporalGnnParams& prm,
                          const std::string& g) {
  return ad::add(affine(z, prm.gate("W_" + g), prm.gate("b_w" + g)),
                 affine(h, prm.gate("U_" + g), prm.gate("b_u" + g)));
}

inline CellState cell_step(const Tensor& z, const CellState& s, const TemporalGnnParams& prm) {
  using namespace ad;
  switch (prm.hyper.cell) {
    case CellType::gru: {
      const Tensor r = sigmoid(gate_preact(z, s.h, prm, "r"));
      const Tensor u = sigmoid(gate_preact(z, s.h, prm, "z"));
      const Tensor cand =
          tanh(add(affine(z, prm.gate("W_h"), prm.gate("b_wh")),
                   mul(r, affine(s.h, prm.gate("U_h"), prm.gate("b_uh")))));
      return {add(cand, mul(u, sub(s.h, cand))), {}};
    }
    case CellType::lstm: {
      const Tensor i = sigmoid(gate_preact(z, s.h, prm, "i"));
      const Tensor f = sigmoid(gate_preact(z, s.h, prm, "f"));
      const Tensor g = tanh(gate_preact(z, s.h, prm, "g"));
      const Tensor o = sigmoid(gate_preact(z, s.h, prm, "o"));
      const Tensor c = add(mul(f, s.c), mul(i, g));
      return {mul(o, tanh(c)), c};
    }
    case CellType::rnn:
      return {tanh(gate_preact(z, s.h, prm, "h")), {}};
  }
  return s;
}

struct Sequence {
  std::vector<Tensor> teacher;  // predictions of x_1 .. x_T from true inputs
  std::vector<Tensor> rollout;  // horizon predictions past x_T, fed back
};

// One-step-ahead predictions. Teacher-forced over `observations`, then
// `horizon` further steps that consume the model's own outputs.
inline Sequence forward(const TemporalGnnParams& prm, const ad::SparseConstant& phi,
                        std::span<const ad::Matrix> observations, int horizon) {
  if (observations.empty()) throw UsageError("temporal GNN needs at least one observation");
  const auto& hp = prm.hyper;
  CellState state{Tensor::zeros(hp.n, hp.g2), Tensor::zeros(hp.n, hp.g2)};
  Sequence out;
  Tensor next;
  for (const auto& x : observations) {
    state = cell_step(gcn_block(Tensor::constant(x), phi, prm), state, prm);
    next = affine(state.h, prm.W_d, prm.b_d);
    out.teacher.push_back(next);
  }
  // The last teacher output already predicts the first step past the data.
  out.teacher.pop_back();
  for (int s = 0; s < horizon; ++s) {
    out.rollout.push_back(next);
    if (s + 1 == horizon) break;
    state = cell_step(gcn_block(next, phi, prm), state, prm);
    next = affine(state.h, prm.W_d, prm.b_d);
  }
  return out;
}

}  // namespace temporal
}  // namespace dynetforge
