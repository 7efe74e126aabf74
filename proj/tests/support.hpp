#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dynetforge/dynetforge.hpp"

namespace testing_support {

using dynetforge::ad::Matrix;
using dynetforge::ad::Tensor;

inline Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<param>[index]"
  std::size_t checked = 0;
};

// Central differences of `loss` against the taped gradient, entry by entry.
// Relative error |a - n| / max(|a|, |n|, floor).
inline GradcheckResult gradcheck(const std::function<Tensor()>& loss,
                                 std::vector<dynetforge::NamedTensor> params, double step = 1e-6,
                                 double floor = 1e-4) {
  dynetforge::zero_grads(params);
  {
    dynetforge::ad::Tape tape;
    tape.backward(loss());
  }
  GradcheckResult res;
  for (auto& p : params) {
    const Matrix analytic = p.tensor.grad();
    Matrix& v = p.tensor.mutable_value();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double orig = v.data()[i];
      v.data()[i] = orig + step;
      const double up = loss().item();
      v.data()[i] = orig - step;
      const double down = loss().item();
      v.data()[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic.data()[i];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++res.checked;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return res;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("dynetforge_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline dynetforge::Graph path_graph(int n) {
  dynetforge::Graph g;
  g.n = n;
  for (int i = 0; i + 1 < n; ++i) g.edges.emplace_back(i, i + 1);
  return g;
}

inline dynetforge::ad::SparseConstant phi_of(const dynetforge::Graph& g) {
  return dynetforge::ad::SparseConstant::from_dense(dynetforge::normalized_laplacian(g));
}

}  // namespace testing_support
