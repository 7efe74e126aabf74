#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dynetforge/agog.hpp"
#include "dynetforge/graph.hpp"
#include "dynetforge/training.hpp"
#include "support.hpp"

using namespace dynetforge;
using ad::Matrix;
using ad::Tensor;
using testing_support::random_matrix;

namespace {

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Fills every parameter with small random values (biases included).
AgogParams random_params(const AgogHyper& hp, std::uint64_t seed, double scale = 0.5) {
  AgogParams prm = AgogParams::init(hp, seed);
  std::mt19937_64 rng(seed + 100);
  for (auto& p : prm.parameters()) {
    Tensor t = p.tensor;
    t.mutable_value() = random_matrix(static_cast<int>(t.rows()), static_cast<int>(t.cols()), rng, scale);
  }
  return prm;
}

void zero_all(AgogParams& prm) {
  for (auto& p : prm.parameters()) {
    Tensor t = p.tensor;
    t.mutable_value().setZero();
  }
}

// Straight-line re-implementation on plain matrices.
struct Reference {
  Matrix We, be, t1, t0, b0, Wo, bo, Wr, Wz, Wh, Ur, Uz, Uh, bwr, bur, bwz, buz, bwh, buh;
  Matrix phi;
  int p;
  double dt;

  Reference(const AgogParams& a, const Matrix& phi_dense, double step)
      : We(a.W_e.value()), be(a.b_e.value()), t1(a.theta_1.value()), t0(a.theta_0.value()),
        b0(a.b_0.value()), Wo(a.W_o.value()), bo(a.b_o.value()), Wr(a.W_r.value()),
        Wz(a.W_z.value()), Wh(a.W_h.value()), Ur(a.U_r.value()), Uz(a.U_z.value()),
        Uh(a.U_h.value()), bwr(a.b_wr.value()), bur(a.b_ur.value()), bwz(a.b_wz.value()),
        buz(a.b_uz.value()), bwh(a.b_wh.value()), buh(a.b_uh.value()), phi(phi_dense),
        p(a.hyper.p), dt(step) {}

  Matrix aug(const Matrix& h) const {
    Matrix out = Matrix::Zero(h.rows(), h.cols() + p);
    out.leftCols(h.cols()) = h;
    return out;
  }
  Matrix solve(Matrix h, double a, double b) const {
    if (b == a) return h;
    // spans that are multiples of dt up to rounding take exactly span/dt steps
    const double ratio = (b - a) / dt;
    const double near = std::round(ratio);
    const int m = std::max(1, static_cast<int>(std::abs(ratio - near) < 1e-9 ? near : std::ceil(ratio)));
    const double s = (b - a) / m;
    for (int i = 0; i < m; ++i) h = h + s * (phi * h * t1 + h * t0 + b0);
    return h;
  }
  Matrix gru(const Matrix& hp, const Matrix& ho) const {
    Matrix out(ho.rows(), ho.cols());
    const Matrix r_pre = hp * Wr + bwr + ho * Ur + bur;
    const Matrix z_pre = hp * Wz + bwz + ho * Uz + buz;
    const Matrix a = hp * Wh + bwh;
    const Matrix c = ho * Uh + buh;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      for (Eigen::Index j = 0; j < out.cols(); ++j) {
        const double r = sigm(r_pre(i, j)), z = sigm(z_pre(i, j));
        const double n = std::tanh(a(i, j) + r * c(i, j));
        out(i, j) = (1.0 - z) * n + z * ho(i, j);
      }
    }
    return out;
  }
  Matrix enc(const Matrix& x) const { return x * We + be; }
  Matrix dec(const Matrix& h) const { return h * Wo + bo; }
};

}  // namespace

TEST(Encode, ZeroWeightGivesBias) {
  AgogParams prm = AgogParams::init({3, 2, 4, 1}, 1);
  std::mt19937_64 rng(1);
  prm.W_e.mutable_value().setZero();
  const Matrix B = random_matrix(3, 4, rng);
  prm.b_e.mutable_value() = B;
  EXPECT_EQ(agog::encode(Tensor::constant(random_matrix(3, 2, rng)), prm).value(), B);
}

TEST(Encode, IdentityWhenKEqualsD) {
  AgogParams prm = AgogParams::init({3, 2, 2, 0}, 1);
  prm.W_e.mutable_value() = Matrix::Identity(2, 2);
  std::mt19937_64 rng(2);
  const Matrix x = random_matrix(3, 2, rng);
  EXPECT_EQ(agog::encode(Tensor::constant(x), prm).value(), x);
}

TEST(Encode, MatchesHandMultiply) {
  const AgogParams prm = random_params({3, 2, 3, 1}, 3);
  std::mt19937_64 rng(3);
  const Matrix x = random_matrix(3, 2, rng);
  const Matrix got = agog::encode(Tensor::constant(x), prm).value();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double v = prm.b_e.value()(i, j);
      for (int l = 0; l < 2; ++l) v += x(i, l) * prm.W_e.value()(l, j);
      EXPECT_NEAR(got(i, j), v, 1e-15);
    }
  }
  EXPECT_THROW(agog::encode(Tensor::constant(random_matrix(3, 3, rng)), prm), ShapeError);
}

TEST(GnnOdeRhs, EmptyGraphConstantBias) {
  AgogParams prm = random_params({3, 1, 2, 1}, 4);
  Graph g;
  g.n = 3;
  prm.theta_0.mutable_value().setZero();
  std::mt19937_64 rng(4);
  const Matrix C = random_matrix(3, 3, rng);
  prm.b_0.mutable_value() = C;
  const Tensor h = Tensor::constant(random_matrix(3, 3, rng));
  EXPECT_EQ(agog::gnn_ode_rhs(h, testing_support::phi_of(g), prm).value(), C);
}

TEST(GnnOdeRhs, ZeroWeightsZeroDerivative) {
  AgogParams prm = AgogParams::init({4, 1, 2, 1}, 4);
  zero_all(prm);
  std::mt19937_64 rng(5);
  const Tensor h = Tensor::constant(random_matrix(4, 3, rng, 10.0));
  EXPECT_EQ(agog::gnn_ode_rhs(h, testing_support::phi_of(testing_support::path_graph(4)), prm).value(),
            Matrix::Zero(4, 3));
}

TEST(GnnOdeRhs, TwoNodePathScalar) {
  AgogParams prm = AgogParams::init({2, 1, 1, 0}, 4);
  prm.theta_1.mutable_value()(0, 0) = 0.7;
  prm.theta_0.mutable_value()(0, 0) = -0.3;
  prm.b_0.mutable_value() << 0.1, 0.2;
  Matrix h(2, 1);
  h << 2.0, 5.0;
  // phi = [[1,-1],[-1,1]]: phi h = (-3, 3)
  const Matrix got = agog::gnn_ode_rhs(Tensor::constant(h),
                                       testing_support::phi_of(testing_support::path_graph(2)), prm)
                         .value();
  EXPECT_NEAR(got(0, 0), -3.0 * 0.7 + 2.0 * -0.3 + 0.1, 1e-15);
  EXPECT_NEAR(got(1, 0), 3.0 * 0.7 + 5.0 * -0.3 + 0.2, 1e-15);
}

namespace {

// Scalar decay dh/dt = -h on one isolated node.
AgogParams decay_params() {
  AgogParams prm = AgogParams::init({1, 1, 1, 0}, 0);
  zero_all(prm);
  prm.theta_0.mutable_value()(0, 0) = -1.0;
  return prm;
}

ad::SparseConstant isolated_phi(int n) {
  Graph g;
  g.n = n;
  return testing_support::phi_of(g);
}

}  // namespace

TEST(EulerSolve, ZeroRhsIdentity) {
  AgogParams prm = AgogParams::init({3, 1, 2, 2}, 1);
  zero_all(prm);
  std::mt19937_64 rng(6);
  const Matrix h = random_matrix(3, 4, rng);
  EXPECT_EQ(agog::euler_solve(Tensor::constant(h), 0.0, 1.3, isolated_phi(3), prm, {0.01}).value(), h);
}

TEST(EulerSolve, SingleStep) {
  const Tensor out = agog::euler_solve(Tensor::constant(Matrix::Ones(1, 1)), 0.0, 0.5,
                                       isolated_phi(1), decay_params(), StepPolicy{0.5});
  EXPECT_DOUBLE_EQ(out.value()(0, 0), 0.5);
}

TEST(EulerSolve, ConvergesToExponential) {
  const Tensor out = agog::euler_solve(Tensor::constant(Matrix::Ones(1, 1)), 0.0, 1.0,
                                       isolated_phi(1), decay_params(), StepPolicy{1e-3});
  EXPECT_LT(std::abs(out.value()(0, 0) - std::exp(-1.0)), 2e-3);
}

TEST(EulerSolve, FirstOrderConvergence) {
  auto err = [](double dt) {
    return std::abs(agog::euler_solve(Tensor::constant(Matrix::Ones(1, 1)), 0.0, 1.0,
                                      isolated_phi(1), decay_params(), StepPolicy{dt})
                        .value()(0, 0) -
                    std::exp(-1.0));
  };
  const double ratio = err(0.01) / err(0.005);
  EXPECT_GE(ratio, 1.8);
  EXPECT_LE(ratio, 2.2);
}

TEST(EulerSolve, SubstepCount) {
  EXPECT_EQ(StepPolicy{0.1}.substeps(0.25), 3);
  EXPECT_EQ(StepPolicy{0.1}.substeps(0.3), 3);
  EXPECT_EQ(StepPolicy{0.1}.substeps(1e-9), 1);
  EXPECT_THROW(StepPolicy{0.0}.substeps(1.0), UsageError);
}

TEST(EulerSolve, RejectsBackwardSpanAndReportsBlowUp) {
  AgogParams prm = decay_params();
  EXPECT_THROW(agog::euler_solve(Tensor::constant(Matrix::Ones(1, 1)), 1.0, 0.5, isolated_phi(1),
                                 prm, {0.1}),
               UsageError);
  prm.theta_0.mutable_value()(0, 0) = 1e200;
  try {
    agog::euler_solve(Tensor::constant(Matrix::Ones(1, 1)), 0.0, 1.0, isolated_phi(1), prm, {0.1});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("sub-step 1"), std::string::npos) << e.what();
  }
}

TEST(EulerSolve, FusedStepMatchesComposedForm) {
  const AgogParams prm = random_params({5, 1, 3, 2}, 8);
  const auto phi = testing_support::phi_of(testing_support::path_graph(5));
  std::mt19937_64 rng(8);
  Tensor h(random_matrix(5, 5, rng), true);
  const Tensor fused = graph_euler_step(h, phi, prm.theta_1, prm.theta_0, prm.b_0, 0.1);
  const Tensor composed =
      ad::add(h, ad::scalar_mul(graph_ode_rhs(h, phi, prm.theta_1, prm.theta_0, prm.b_0), 0.1));
  EXPECT_LT((fused.value() - composed.value()).cwiseAbs().maxCoeff(), 1e-14);

  Tensor w = Tensor::constant(random_matrix(5, 5, rng));
  std::vector<NamedTensor> params{{"h", h}, {"theta_1", prm.theta_1}, {"theta_0", prm.theta_0},
                                  {"b_0", prm.b_0}};
  auto res = testing_support::gradcheck(
      [&] {
        Tensor y = graph_euler_step(h, phi, prm.theta_1, prm.theta_0, prm.b_0, 0.1);
        y = graph_euler_step(y, phi, prm.theta_1, prm.theta_0, prm.b_0, 0.1);
        return ad::sum(ad::mul(ad::tanh(y), w));
      },
      params, 1e-6, 1e-8);
  EXPECT_LT(res.max_rel_error, 1e-6) << res.worst;
}

TEST(GruUpdate, ZeroWeightsHalfObservation) {
  AgogParams prm = AgogParams::init({2, 1, 2, 1}, 1);
  zero_all(prm);
  std::mt19937_64 rng(9);
  const Matrix ho = random_matrix(2, 2, rng);
  const Matrix out = agog::gru_update(Tensor::constant(random_matrix(2, 3, rng)),
                                      Tensor::constant(ho), prm)
                         .value();
  EXPECT_LT((out - 0.5 * ho).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GruUpdate, SaturatedGateReturnsObservation) {
  AgogParams prm = AgogParams::init({2, 1, 2, 1}, 1);
  zero_all(prm);
  prm.b_wz.mutable_value().setConstant(50.0);
  prm.b_uz.mutable_value().setConstant(50.0);
  std::mt19937_64 rng(10);
  const Matrix ho = random_matrix(2, 2, rng);
  const Matrix out = agog::gru_update(Tensor::constant(random_matrix(2, 3, rng)),
                                      Tensor::constant(ho), prm)
                         .value();
  EXPECT_LT((out - ho).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GruUpdate, MatchesHandEvaluation) {
  const AgogParams prm = random_params({2, 1, 2, 1}, 11);
  std::mt19937_64 rng(11);
  const Matrix hp = random_matrix(2, 3, rng), ho = random_matrix(2, 2, rng);
  const Reference ref(prm, Matrix::Zero(2, 2), 0.1);
  const Matrix out = agog::gru_update(Tensor::constant(hp), Tensor::constant(ho), prm).value();
  EXPECT_LT((out - ref.gru(hp, ho)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(GruUpdate, ConvexCombinationBound) {
  const AgogParams prm = random_params({20, 1, 6, 3}, 12, 2.0);
  std::mt19937_64 rng(12);
  const Matrix hp = random_matrix(20, 9, rng, 3.0), ho = random_matrix(20, 6, rng, 3.0);
  const Matrix out = agog::gru_update(Tensor::constant(hp), Tensor::constant(ho), prm).value();
  // n-gate recomputed to bound each entry.
  const Matrix r = (hp * prm.W_r.value() + prm.b_wr.value() + ho * prm.U_r.value() + prm.b_ur.value())
                       .unaryExpr([](double x) { return sigm(x); });
  const Matrix n = (hp * prm.W_h.value() + prm.b_wh.value() +
                    r.cwiseProduct(ho * prm.U_h.value() + prm.b_uh.value()))
                       .unaryExpr([](double x) { return std::tanh(x); });
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double lo = std::min(n.data()[i], ho.data()[i]), hi = std::max(n.data()[i], ho.data()[i]);
    EXPECT_GE(out.data()[i], lo - 1e-12);
    EXPECT_LE(out.data()[i], hi + 1e-12);
  }
}

TEST(Augment, Cases) {
  std::mt19937_64 rng(13);
  const Matrix h = random_matrix(4, 3, rng);
  EXPECT_EQ(agog::augment(Tensor::constant(h), 0).value(), h);
  Matrix expected(2, 3);
  expected << 1, 1, 0, 1, 1, 0;
  EXPECT_EQ(agog::augment(Tensor::constant(Matrix::Ones(2, 2)), 1).value(), expected);
  EXPECT_EQ(ad::slice_cols(agog::augment(Tensor::constant(h), 5), 0, 3).value(), h);
  EXPECT_THROW(agog::augment(Tensor::constant(h), -1), UsageError);
}

TEST(Decode, Cases) {
  AgogParams prm = random_params({3, 2, 2, 2}, 14);
  std::mt19937_64 rng(14);
  const Matrix h = random_matrix(3, 4, rng);
  const Matrix got = agog::decode(Tensor::constant(h), prm).value();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 2; ++j) {
      double v = prm.b_o.value()(i, j);
      for (int l = 0; l < 4; ++l) v += h(i, l) * prm.W_o.value()(l, j);
      EXPECT_NEAR(got(i, j), v, 1e-15);
    }
  }
  // Padded columns with zero decoder rows contribute nothing.
  prm.W_o.mutable_value().bottomRows(2).setZero();
  Matrix padded = h;
  padded.rightCols(2).setConstant(7.0);
  Matrix zeroed = h;
  zeroed.rightCols(2).setZero();
  EXPECT_EQ(agog::decode(Tensor::constant(padded), prm).value(),
            agog::decode(Tensor::constant(zeroed), prm).value());
  prm.W_o.mutable_value().setZero();
  EXPECT_EQ(agog::decode(Tensor::constant(h), prm).value(), prm.b_o.value());
}

TEST(TrainRollout, DegenerateComposition) {
  AgogParams prm = random_params({4, 1, 3, 2}, 15);
  prm.theta_1.mutable_value().setZero();
  prm.theta_0.mutable_value().setZero();
  prm.b_0.mutable_value().setZero();
  prm.b_wz.mutable_value().setConstant(60.0);
  prm.b_uz.mutable_value().setConstant(60.0);
  prm.W_z.mutable_value().setZero();
  prm.U_z.mutable_value().setZero();
  std::mt19937_64 rng(15);
  const std::vector<Matrix> obs{random_matrix(4, 1, rng), random_matrix(4, 1, rng)};
  const std::vector<double> t{0.0, 0.4};
  const auto phi = testing_support::phi_of(testing_support::path_graph(4));
  const auto roll = agog::train_rollout(t, obs, prm, phi, {0.1});
  auto chain = [&](const Matrix& x) {
    return agog::decode(agog::augment(agog::encode(Tensor::constant(x), prm), 2), prm).value();
  };
  EXPECT_LT((roll.x_pred[1].value() - chain(obs[0])).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((roll.x_updated[1].value() - chain(obs[1])).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(roll.x_pred[0].value(), roll.x_updated[0].value());
}

TEST(TrainRollout, MatchesStraightLineReference) {
  const AgogParams prm = random_params({5, 1, 3, 2}, 16);
  const Graph g = testing_support::path_graph(5);
  const Matrix phi_dense = normalized_laplacian(g);
  std::mt19937_64 rng(16);
  std::vector<Matrix> obs;
  for (int i = 0; i < 4; ++i) obs.push_back(random_matrix(5, 1, rng));
  const std::vector<double> t{0.0, 0.13, 0.31, 0.5};
  const double dt = 0.05;
  const auto roll = agog::train_rollout(t, obs, prm, ad::SparseConstant::from_dense(phi_dense), {dt});

  const Reference ref(prm, phi_dense, dt);
  Matrix ha = ref.aug(ref.enc(obs[0]));
  EXPECT_LT((roll.x_updated[0].value() - ref.dec(ha)).cwiseAbs().maxCoeff(), 1e-13);
  for (std::size_t i = 1; i < t.size(); ++i) {
    const Matrix hp = ref.solve(ha, t[i - 1], t[i]);
    ha = ref.aug(ref.gru(hp, ref.enc(obs[i])));
    EXPECT_LT((roll.x_pred[i].value() - ref.dec(hp)).cwiseAbs().maxCoeff(), 1e-12) << i;
    EXPECT_LT((roll.x_updated[i].value() - ref.dec(ha)).cwiseAbs().maxCoeff(), 1e-12) << i;
    EXPECT_EQ(roll.h_a[i].value().rightCols(2), Matrix::Zero(5, 2)) << "reset point " << i;
  }

  // Inference: interpolation anchors on the updated state, extrapolation chains.
  const std::vector<double> q_interp{0.2, 0.4};
  const auto interp = agog::inference_rollout(t, obs, q_interp, agog::InferenceMode::interpolation,
                                              prm, ad::SparseConstant::from_dense(phi_dense), {dt});
  Matrix h1 = ref.aug(ref.enc(obs[0]));
  std::vector<Matrix> anchors{h1};
  for (std::size_t i = 1; i < t.size(); ++i) {
    anchors.push_back(ref.aug(ref.gru(ref.solve(anchors.back(), t[i - 1], t[i]), ref.enc(obs[i]))));
  }
  EXPECT_LT((interp[0] - ref.dec(ref.solve(anchors[1], 0.13, 0.2))).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((interp[1] - ref.dec(ref.solve(anchors[2], 0.31, 0.4))).cwiseAbs().maxCoeff(), 1e-12);

  const std::vector<double> q_extrap{0.6, 0.75};
  const auto extrap = agog::inference_rollout(t, obs, q_extrap, agog::InferenceMode::extrapolation,
                                              prm, ad::SparseConstant::from_dense(phi_dense), {dt});
  const Matrix e1 = ref.solve(anchors[3], 0.5, 0.6);
  const Matrix e2 = ref.solve(e1, 0.6, 0.75);
  EXPECT_LT((extrap[0] - ref.dec(e1)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((extrap[1] - ref.dec(e2)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(InferenceRollout, QueryAtTrainTimeGivesUpdatedDecode) {
  const AgogParams prm = random_params({4, 1, 3, 1}, 17);
  const auto phi = testing_support::phi_of(testing_support::path_graph(4));
  std::mt19937_64 rng(17);
  const std::vector<Matrix> obs{random_matrix(4, 1, rng), random_matrix(4, 1, rng),
                                random_matrix(4, 1, rng)};
  const std::vector<double> t{0.0, 0.2, 0.5};
  const auto roll = agog::train_rollout(t, obs, prm, phi, {0.05});
  const std::vector<double> q{0.2};
  const auto out = agog::inference_rollout(t, obs, q, agog::InferenceMode::interpolation, prm, phi, {0.05});
  EXPECT_EQ(out[0], roll.x_updated[1].value());
  const std::vector<double> early{-0.1};
  EXPECT_THROW(agog::inference_rollout(t, obs, early, agog::InferenceMode::interpolation, prm, phi,
                                       {0.05}),
               UsageError);
}

TEST(InferenceRollout, ZeroRhsExtrapolationIsConstant) {
  AgogParams prm = random_params({4, 1, 3, 1}, 18);
  prm.theta_1.mutable_value().setZero();
  prm.theta_0.mutable_value().setZero();
  prm.b_0.mutable_value().setZero();
  const auto phi = testing_support::phi_of(testing_support::path_graph(4));
  std::mt19937_64 rng(18);
  const std::vector<Matrix> obs{random_matrix(4, 1, rng), random_matrix(4, 1, rng)};
  const std::vector<double> t{0.0, 0.2};
  const auto roll = agog::train_rollout(t, obs, prm, phi, {0.05});
  const std::vector<double> q{0.3, 0.9, 2.0};
  for (const auto& x : agog::inference_rollout(t, obs, q, agog::InferenceMode::extrapolation, prm, phi, {0.05})) {
    EXPECT_EQ(x, roll.x_updated.back().value());
  }
}

TEST(AgogGradients, EveryParameterReceivesGradient) {
  const AgogParams prm = random_params({6, 1, 4, 2}, 19);
  const auto phi = testing_support::phi_of(testing_support::path_graph(6));
  std::mt19937_64 rng(19);
  const std::vector<Matrix> obs{random_matrix(6, 1, rng), random_matrix(6, 1, rng),
                                random_matrix(6, 1, rng)};
  const std::vector<double> t{0.0, 0.3, 0.7};
  auto params = prm.parameters();
  zero_grads(params);
  {
    ad::Tape tape;
    const auto roll = agog::train_rollout(t, obs, prm, phi, {0.1});
    tape.backward(agog_loss(roll.x_pred, roll.x_updated, obs));
  }
  for (const auto& p : params) {
    EXPECT_GT(p.tensor.grad().cwiseAbs().maxCoeff(), 0.0) << p.name;
    EXPECT_EQ(p.tensor.grad().rows(), p.tensor.rows()) << p.name;
    EXPECT_EQ(p.tensor.grad().cols(), p.tensor.cols()) << p.name;
  }
}

TEST(AgogGradients, FullLossGradcheck) {
  const AgogParams prm = random_params({5, 1, 3, 2}, 20, 0.4);
  const auto phi = testing_support::phi_of(generate_graph(GraphFamily::er, 5, GraphParams{.er_p = 0.6}, 2));
  std::mt19937_64 rng(20);
  std::vector<Matrix> obs;
  for (int i = 0; i < 4; ++i) obs.push_back(random_matrix(5, 1, rng));
  const std::vector<double> t{0.0, 0.2, 0.45, 0.6};
  auto res = testing_support::gradcheck(
      [&] {
        const auto roll = agog::train_rollout(t, obs, prm, phi, {0.1});
        return agog_loss(roll.x_pred, roll.x_updated, obs);
      },
      prm.parameters());
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst;
  std::size_t entries = 0;
  for (const auto& p : prm.parameters()) entries += static_cast<std::size_t>(p.tensor.value().size());
  EXPECT_EQ(res.checked, entries);
}

TEST(AgogParams, ShapesAndTrainable) {
  const AgogParams prm = AgogParams::init({7, 2, 5, 3}, 1);
  const auto list = prm.parameters();
  EXPECT_EQ(list.size(), 19u);
  for (const auto& p : list) EXPECT_TRUE(p.tensor.requires_grad()) << p.name;
  EXPECT_EQ(prm.theta_1.rows(), 8);
  EXPECT_EQ(prm.W_r.rows(), 8);
  EXPECT_EQ(prm.W_r.cols(), 5);
  EXPECT_EQ(prm.U_h.rows(), 5);
  EXPECT_EQ(prm.b_0.rows(), 7);
  EXPECT_EQ(prm.b_0.cols(), 8);
  EXPECT_EQ(prm.W_o.rows(), 8);
  EXPECT_EQ(prm.W_o.cols(), 2);
  const double bound = std::sqrt(1.0 / 8.0);
  EXPECT_LE(prm.theta_1.value().cwiseAbs().maxCoeff(), bound);
  EXPECT_EQ(prm.b_e.value(), Matrix::Zero(7, 5));
  EXPECT_THROW(AgogParams::init({7, 2, 0, 3}, 1), UsageError);
}
