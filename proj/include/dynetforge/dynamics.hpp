#pragma once

// Ground-truth network dynamics, the Dormand-Prince reference integrator,
// observation schedules and dataset assembly.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dynetforge/autodiff.hpp"
#include "dynetforge/errors.hpp"
#include "dynetforge/graph.hpp"

namespace dynetforge {

using ad::Matrix;

enum class DynamicsKind { gene, kuramoto, mutualistic };

inline std::string to_string(DynamicsKind k) {
  switch (k) {
    case DynamicsKind::gene: return "gene";
    case DynamicsKind::kuramoto: return "kuramoto";
    case DynamicsKind::mutualistic: return "mutualistic";
  }
  return "?";
}

inline DynamicsKind parse_dynamics(const std::string& s) {
  if (s == "gene") return DynamicsKind::gene;
  if (s == "kuramoto") return DynamicsKind::kuramoto;
  if (s == "mutualistic" || s == "mutual") return DynamicsKind::mutualistic;
  throw UsageError("unknown dynamics '" + s + "'");
}

// Per-node coefficients. Only the vectors used by `kind` are populated.
//   gene:        b (decay), hill exponent
//   kuramoto:    omega (natural frequency), k (coupling)
//   mutualistic: b, k, c, d, e, h
struct DynamicsSpec {
  DynamicsKind kind = DynamicsKind::gene;
  int state_dim = 1;
  double hill = 2.0;
  bool kuramoto_flip_sign = false;
  std::vector<double> b, k, c, d, e, h, omega;

  std::vector<std::pair<std::string, const std::vector<double>*>> named_coefficients() const {
    switch (kind) {
      case DynamicsKind::gene: return {{"b", &b}};
      case DynamicsKind::kuramoto: return {{"omega", &omega}, {"k", &k}};
      case DynamicsKind::mutualistic:
        return {{"b", &b}, {"k", &k}, {"c", &c}, {"d", &d}, {"e", &e}, {"h", &h}};
    }
    return {};
  }

  std::vector<double>* coefficient(const std::string& name) {
    if (name == "b") return &b;
    if (name == "k") return &k;
    if (name == "c") return &c;
    if (name == "d") return &d;
    if (name == "e") return &e;
    if (name == "h") return &h;
    if (name == "omega") return &omega;
    return nullptr;
  }

  bool operator==(const DynamicsSpec&) const = default;
};

inline constexpr double kMutualisticDenominatorFloor = 1e-8;

// Default coefficients. Kuramoto frequencies are i.i.d. standard normal.
inline DynamicsSpec default_dynamics(DynamicsKind kind, int n, std::uint64_t seed) {
  DynamicsSpec s;
  s.kind = kind;
  const auto un = static_cast<std::size_t>(n);
  switch (kind) {
    case DynamicsKind::gene:
      s.b.assign(un, 1.0);
      s.hill = 2.0;
      break;
    case DynamicsKind::kuramoto: {
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> normal(0.0, 1.0);
      s.omega.resize(un);
      for (auto& w : s.omega) w = normal(rng);
      s.k.assign(un, 1.0);
      break;
    }
    case DynamicsKind::mutualistic:
      s.b.assign(un, 0.1);
      s.k.assign(un, 5.0);
      s.c.assign(un, 1.0);
      s.d.assign(un, 5.0);
      s.e.assign(un, 0.9);
      s.h.assign(un, 0.1);
      break;
  }
  return s;
}

inline double default_horizon(DynamicsKind kind) {
  return kind == DynamicsKind::kuramoto ? 10.0 : 5.0;
}

// Right-hand side bound to one graph (neighbour lists precomputed).
class DynamicsRhs {
 public:
  DynamicsRhs(DynamicsSpec spec, const Graph& graph) : spec_(std::move(spec)), n_(graph.n) {
    if (spec_.state_dim < 1) throw UsageError("state_dim must be positive");
    for (const auto& [name, values] : spec_.named_coefficients()) {
      if (values->size() != static_cast<std::size_t>(n_)) {
        throw UsageError("coefficient '" + name + "' has length " +
                         std::to_string(values->size()) + ", expected " + std::to_string(n_));
      }
    }
    neighbors_.resize(static_cast<std::size_t>(n_));
    for (const auto& [i, j] : graph.edges) {
      neighbors_[i].push_back(j);
      neighbors_[j].push_back(i);
    }
  }

  // z is n x state_dim; columns evolve independently.
  Matrix operator()(const Matrix& z) const {
    if (z.rows() != n_ || z.cols() != spec_.state_dim) {
      throw ShapeError("dynamics state must be " + std::to_string(n_) + "x" +
                       std::to_string(spec_.state_dim));
    }
    if (!z.allFinite()) throw NumericError("non-finite state passed to dynamics rhs");
    Matrix dz(z.rows(), z.cols());
    for (Eigen::Index col = 0; col < z.cols(); ++col) {
      for (int i = 0; i < n_; ++i) dz(i, col) = node_rate(z, i, col);
    }
    return dz;
  }

  const DynamicsSpec& spec() const { return spec_; }

 private:
  double node_rate(const Matrix& z, int i, Eigen::Index col) const {
    const double zi = z(i, col);
    const auto& nb = neighbors_[static_cast<std::size_t>(i)];
    switch (spec_.kind) {
      case DynamicsKind::gene: {
        double coupling = 0.0;
        for (int j : nb) {
          const double p = std::pow(z(j, col), spec_.hill);
          coupling += p / (p + 1.0);
        }
        return -spec_.b[i] * zi + coupling;
      }
      case DynamicsKind::kuramoto: {
        double coupling = 0.0;
        for (int j : nb) coupling += std::sin(zi - z(j, col));
        if (spec_.kuramoto_flip_sign) coupling = -coupling;
        return spec_.omega[i] + spec_.k[i] * coupling;
      }
      case DynamicsKind::mutualistic: {
        double coupling = 0.0;
        for (int j : nb) {
          const double zj = z(j, col);
          double den = spec_.d[i] + spec_.e[i] * zi + spec_.h[j] * zj;
          if (std::abs(den) < kMutualisticDenominatorFloor) {
            den = std::copysign(kMutualisticDenominatorFloor, den);
          }
          coupling += zi * zj / den;
        }
        return -spec_.b[i] + zi * (1.0 - zi / spec_.k[i]) * (zi / spec_.c[i] - 1.0) + coupling;
      }
    }
    return 0.0;
  }

  DynamicsSpec spec_;
  int n_;
  std::vector<std::vector<int>> neighbors_;
};

inline Matrix dynamics_rhs(const DynamicsSpec& spec, const Graph& graph, const Matrix& z) {
  return DynamicsRhs(spec, graph)(z);
}

struct IntegratorOptions {
  double rtol = 1e-8;
  double atol = 1e-10;
  std::int64_t max_steps = 200'000;

  bool operator==(const IntegratorOptions&) const = default;
};

namespace detail {

inline double scaled_rms(const Matrix& v, const Matrix& y_a, const Matrix& y_b,
                         const IntegratorOptions& opt) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double sc =
        opt.atol + opt.rtol * std::max(std::abs(y_a.data()[i]), std::abs(y_b.data()[i]));
    const double r = v.data()[i] / sc;
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(std::max<Eigen::Index>(1, v.size())));
}

}  // namespace detail

// Adaptive Dormand-Prince 5(4) integration of dy/dt = f(y) from t0, stepping
// exactly onto every requested time. Returns one state per entry of t_eval.
template <class F>
std::vector<Matrix> integrate_dopri5(const F& f, Matrix y0, double t0, std::span<const double> t_eval,
                                     const IntegratorOptions& opt = {}) {
  if (!(opt.rtol > 0.0) || !(opt.atol > 0.0)) throw UsageError("tolerances must be positive");
  for (std::size_t i = 0; i < t_eval.size(); ++i) {
    if (t_eval[i] < t0 || (i > 0 && t_eval[i] < t_eval[i - 1])) {
      throw UsageError("t_eval must be sorted and not earlier than t0");
    }
  }

  // Autonomous system: the stage times c_i are not needed.
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                   a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                   a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                   b6 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                   e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  std::vector<Matrix> out;
  out.reserve(t_eval.size());
  double t = t0;
  Matrix y = std::move(y0);
  Matrix k1 = f(y);

  double h = 0.0;
  if (!t_eval.empty() && t_eval.back() > t0) {
    // Initial step estimate (Hairer, Norsett & Wanner).
    const double d0 = detail::scaled_rms(y, y, y, opt);
    const double d1 = detail::scaled_rms(k1, y, y, opt);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, t_eval.back() - t0);
    const Matrix y1 = y + h0 * k1;
    const double d2 = detail::scaled_rms(f(y1) - k1, y, y, opt) / h0;
    const double dmax = std::max(d1, d2);
    const double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dmax, 0.2);
    h = std::min(100.0 * h0, h1);
  }

  std::int64_t steps = 0;
  for (double target : t_eval) {
    while (t < target) {
      if (++steps > opt.max_steps) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "reference integrator exceeded max steps at t=%.9g (step %.3g)",
                      t, h);
        throw NumericError(buf);
      }
      const bool clipped = t + h >= target;
      const double step = clipped ? target - t : h;
      if (step < 1e-14 * std::max(1.0, std::abs(t))) {
        throw NumericError("reference integrator step size underflow at t=" + std::to_string(t));
      }
      const Matrix k2 = f(y + step * (a21 * k1));
      const Matrix k3 = f(y + step * (a31 * k1 + a32 * k2));
      const Matrix k4 = f(y + step * (a41 * k1 + a42 * k2 + a43 * k3));
      const Matrix k5 = f(y + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
      const Matrix k6 = f(y + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
      Matrix y_new = y + step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      if (!y_new.allFinite()) {
        h = 0.25 * step;
        continue;
      }
      Matrix k7 = f(y_new);
      const Matrix err = step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
      const double norm = detail::scaled_rms(err, y, y_new, opt);
      if (norm <= 1.0) {
        t = clipped ? target : t + step;
        y = std::move(y_new);
        k1 = std::move(k7);
        const double factor =
            norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(norm, -0.2), 0.2, 5.0);
        // A clipped step says nothing about the admissible size; keep h.
        if (!clipped || step * factor > h) h = step * factor;
      } else {
        h = step * std::max(0.2, 0.9 * std::pow(norm, -0.2));
      }
    }
    out.push_back(y);
  }
  return out;
}

inline std::vector<Matrix> integrate_reference(const DynamicsSpec& spec, const Graph& graph,
                                               const Matrix& x0, double t0,
                                               std::span<const double> t_eval,
                                               const IntegratorOptions& opt = {}) {
  const DynamicsRhs rhs(spec, graph);
  return integrate_dopri5(rhs, x0, t0, t_eval, opt);
}

enum class Protocol { irregular, regular };

inline std::string to_string(Protocol p) {
  return p == Protocol::irregular ? "irregular" : "regular";
}

inline Protocol parse_protocol(const std::string& s) {
  if (s == "irregular") return Protocol::irregular;
  if (s == "regular") return Protocol::regular;
  throw UsageError("unknown protocol '" + s + "'");
}

inline constexpr double kMinGapFraction = 1e-4;

// regular: t_i = i * horizon / (count - 1). irregular: count uniform draws on
// (0, horizon] conditioned on adjacent gaps >= horizon * 1e-4, sorted.
inline std::vector<double> sample_schedule(Protocol protocol, double horizon, int count,
                                           std::uint64_t seed) {
  if (count < 2) throw UsageError("schedule needs count >= 2");
  if (!(horizon > 0.0)) throw UsageError("schedule horizon must be positive");
  std::vector<double> t(static_cast<std::size_t>(count));
  if (protocol == Protocol::regular) {
    const double dt = horizon / static_cast<double>(count - 1);
    for (int i = 0; i < count; ++i) t[i] = static_cast<double>(i) * dt;
    return t;
  }
  const double gap = horizon * kMinGapFraction;
  const double slack = horizon - static_cast<double>(count - 1) * gap;
  if (!(slack > 0.0)) {
    throw UsageError("count " + std::to_string(count) +
                     " too large for the minimum-gap constraint on this horizon");
  }
  // Sorted uniforms on (0, slack] shifted by i * gap are exactly the uniform
  // order statistics on (0, horizon] conditioned on every gap >= gap.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (auto& v : t) v = slack * (1.0 - unif(rng));
  std::sort(t.begin(), t.end());
  for (int i = 0; i < count; ++i) t[i] += static_cast<double>(i) * gap;
  return t;
}

enum class Split : std::uint8_t { train = 0, interp_test = 1, extrap_test = 2 };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::interp_test: return "interp_test";
    case Split::extrap_test: return "extrap_test";
  }
  return "?";
}

struct ProtocolLayout {
  int total;
  int extrap;  // trailing extrapolation snapshots
};

inline ProtocolLayout protocol_layout(Protocol p) {
  return p == Protocol::irregular ? ProtocolLayout{120, 20} : ProtocolLayout{80, 16};
}

struct DatasetConfig {
  GraphFamily family = GraphFamily::grid;
  GraphParams graph_params;
  DynamicsKind dynamics = DynamicsKind::gene;
  int n = 400;
  Protocol protocol = Protocol::irregular;
  double train_frac = 0.1;
  double horizon = 0.0;  // <= 0: per-dynamics default
  std::uint64_t seed = 0;
  IntegratorOptions integrator;
  bool kuramoto_flip_sign = false;
};

struct Dataset {
  Graph graph;
  DynamicsSpec dynamics;
  Protocol protocol = Protocol::irregular;
  double train_frac = 0.0;
  double horizon = 0.0;
  std::uint64_t seed = 0;
  IntegratorOptions integrator;
  Matrix initial_state;  // simulation start, time 0
  std::vector<double> timestamps;
  std::vector<Matrix> states;  // states[i] at timestamps[i], n x k
  std::vector<Split> split;

  int n() const { return graph.n; }
  int state_dim() const { return dynamics.state_dim; }
  const Matrix& x0() const { return states.front(); }

  std::vector<std::size_t> indices(Split s) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < split.size(); ++i) {
      if (split[i] == s) idx.push_back(i);
    }
    return idx;
  }

  std::size_t count(Split s) const { return indices(s).size(); }

  std::vector<double> times_at(std::span<const std::size_t> idx) const {
    std::vector<double> t;
    t.reserve(idx.size());
    for (auto i : idx) t.push_back(timestamps[i]);
    return t;
  }

  std::vector<Matrix> states_at(std::span<const std::size_t> idx) const {
    std::vector<Matrix> s;
    s.reserve(idx.size());
    for (auto i : idx) s.push_back(states[i]);
    return s;
  }

  bool operator==(const Dataset&) const = default;
};

// FNV-1a over the little-endian bytes of every state value, row-major
// (T+1) x n x k.
inline std::uint64_t states_checksum(const std::vector<Matrix>& states) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (const auto& s : states) {
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(s.data()[i]);
      for (int b = 0; b < 8; ++b) {
        hash ^= (bits >> (8 * b)) & 0xffU;
        hash *= 0x100000001b3ULL;
      }
    }
  }
  return hash;
}

inline std::uint64_t states_checksum(const Dataset& ds) { return states_checksum(ds.states); }

// Independent sub-streams derived from one user seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace seed_stream {
inline constexpr std::uint64_t graph = 1, coefficients = 2, initial_state = 3, schedule = 4,
                               split = 5;
}

// Irregular: the first snapshot is always a training observation (it is the
// shared initial state); the remaining round(100 * P) - 1 training indices are
// drawn from [1, 100).
inline std::vector<Split> make_split(Protocol protocol, double train_frac, std::uint64_t seed) {
  const auto layout = protocol_layout(protocol);
  const int head = layout.total - layout.extrap;
  std::vector<Split> split(static_cast<std::size_t>(layout.total), Split::extrap_test);
  if (protocol == Protocol::regular) {
    std::fill(split.begin(), split.begin() + head, Split::train);
    return split;
  }
  if (!(train_frac > 0.0 && train_frac <= 1.0)) {
    throw UsageError("train fraction must lie in (0, 1]");
  }
  const int n_train = static_cast<int>(std::lround(head * train_frac));
  if (n_train < 2) throw UsageError("train fraction leaves fewer than 2 training snapshots");
  std::fill(split.begin(), split.begin() + head, Split::interp_test);
  std::vector<int> candidates(static_cast<std::size_t>(head - 1));
  for (int i = 0; i < head - 1; ++i) candidates[i] = i + 1;
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates over [1, head).
  for (int i = 0; i < n_train - 1; ++i) {
    std::uniform_int_distribution<int> pick(i, head - 2);
    std::swap(candidates[i], candidates[pick(rng)]);
    split[static_cast<std::size_t>(candidates[i])] = Split::train;
  }
  split[0] = Split::train;
  return split;
}

inline Matrix sample_initial_state(DynamicsKind kind, int n, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double hi = kind == DynamicsKind::kuramoto ? 2.0 * std::numbers::pi : 5.0;
  std::uniform_real_distribution<double> unif(0.0, hi);
  Matrix x(n, k);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = unif(rng);
  return x;
}

inline Dataset build_dataset(const DatasetConfig& cfg) {
  Dataset ds;
  ds.graph = generate_graph(cfg.family, cfg.n, cfg.graph_params,
                            derive_seed(cfg.seed, seed_stream::graph));
  ds.dynamics = default_dynamics(cfg.dynamics, cfg.n, derive_seed(cfg.seed, seed_stream::coefficients));
  ds.dynamics.kuramoto_flip_sign = cfg.kuramoto_flip_sign;
  ds.protocol = cfg.protocol;
  ds.train_frac = cfg.protocol == Protocol::irregular ? cfg.train_frac : 0.8;
  ds.horizon = cfg.horizon > 0.0 ? cfg.horizon : default_horizon(cfg.dynamics);
  ds.seed = cfg.seed;
  ds.integrator = cfg.integrator;

  const auto layout = protocol_layout(cfg.protocol);
  ds.split = make_split(cfg.protocol, cfg.train_frac, derive_seed(cfg.seed, seed_stream::split));
  ds.timestamps = sample_schedule(cfg.protocol, ds.horizon, layout.total,
                                  derive_seed(cfg.seed, seed_stream::schedule));
  ds.initial_state = sample_initial_state(cfg.dynamics, cfg.n, ds.dynamics.state_dim,
                                          derive_seed(cfg.seed, seed_stream::initial_state));
  ds.states = integrate_reference(ds.dynamics, ds.graph, ds.initial_state, 0.0, ds.timestamps,
                                  ds.integrator);
  return ds;
}

}  // namespace dynetforge
