#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dynetforge/autodiff.hpp"
#include "dynetforge/errors.hpp"

namespace dynetforge {

struct NamedTensor {
  std::string name;
  ad::Tensor tensor;
};

using ParameterList = std::vector<NamedTensor>;

inline void zero_grads(std::span<NamedTensor> params) {
  for (auto& p : params) p.tensor.zero_grad();
}

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First and second moments, one entry per parameter in list order.
struct AdamState {
  std::int64_t step = 0;
  std::vector<ad::Matrix> m;
  std::vector<ad::Matrix> v;
};

// One bias-corrected Adam update using each parameter's accumulated grad.
// A non-finite gradient aborts the step before any parameter is touched.
inline void adam_step(std::span<NamedTensor> params, AdamState& state, const AdamConfig& cfg) {
  for (const auto& p : params) {
    if (!p.tensor.grad().allFinite()) {
      throw NumericError("non-finite gradient in parameter '" + p.name + "'");
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(ad::Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
      state.v.push_back(ad::Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
    }
  }
  if (state.m.size() != params.size()) {
    throw UsageError("adam_step: optimizer state does not match parameter list");
  }

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ad::Matrix g = params[i].tensor.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    ad::Matrix& w = params[i].tensor.mutable_value();
    w.array() -= cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
  }
}

}  // namespace dynetforge
