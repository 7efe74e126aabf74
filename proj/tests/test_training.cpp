#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dynetforge/training.hpp"
#include "support.hpp"

using namespace dynetforge;
using ad::Matrix;
using ad::Tensor;
using testing_support::random_matrix;

namespace {

Dataset small_dataset(Protocol protocol = Protocol::irregular, int n = 25, double frac = 0.3,
                      std::uint64_t seed = 1) {
  DatasetConfig c;
  c.family = GraphFamily::grid;
  c.n = n;
  c.protocol = protocol;
  c.train_frac = frac;
  c.seed = seed;
  return build_dataset(c);
}

std::vector<Tensor> constants(const std::vector<Matrix>& ms) {
  std::vector<Tensor> out;
  for (const auto& m : ms) out.push_back(Tensor::constant(m));
  return out;
}

}  // namespace

TEST(AgogLoss, ZeroWhenConsistent) {
  std::mt19937_64 rng(1);
  const std::vector<Matrix> x{random_matrix(3, 1, rng), random_matrix(3, 1, rng)};
  EXPECT_EQ(agog_loss(constants(x), constants(x), x).item(), 0.0);
}

TEST(AgogLoss, ReconstructionOnly) {
  std::mt19937_64 rng(2);
  const std::vector<Matrix> x{random_matrix(3, 1, rng), random_matrix(3, 1, rng)};
  std::vector<Matrix> shifted;
  for (const auto& m : x) shifted.push_back(m.array() + 1.0);
  EXPECT_NEAR(agog_loss(constants(shifted), constants(shifted), x).item(), 1.0, 1e-15);
}

TEST(AgogLoss, HandComputedTwoNodes) {
  Matrix x0(2, 1), x1(2, 1), p0(2, 1), p1(2, 1), u0(2, 1), u1(2, 1);
  x0 << 1.0, 2.0;
  x1 << 0.5, -1.0;
  p0 << 1.5, 2.0;
  p1 << 0.0, 0.0;
  u0 << 1.0, 2.5;
  u1 << 0.25, 1.0;
  const std::vector<Matrix> x{x0, x1};
  // reconstruction: (0.25 + 0.75) ; continuity: (0.5 + 0.625)
  const double expected = (0.25 + 0.75 + 0.5 + 0.625) / 2.0;
  EXPECT_DOUBLE_EQ(agog_loss(constants({p0, p1}), constants({u0, u1}), x).item(), expected);
  EXPECT_DOUBLE_EQ(agog_loss(constants({p0, p1}), constants({u0, u1}), x, false).item(),
                   (0.25 + 0.75) / 2.0);
  EXPECT_THROW(agog_loss(constants({p0}), constants({u0, u1}), x), UsageError);
}

TEST(AgogLoss, DisabledContinuityEqualsReconstruction) {
  std::mt19937_64 rng(3);
  std::vector<Matrix> x, p, u;
  for (int i = 0; i < 4; ++i) {
    x.push_back(random_matrix(3, 2, rng));
    p.push_back(random_matrix(3, 2, rng));
    u.push_back(random_matrix(3, 2, rng));
  }
  EXPECT_EQ(agog_loss(constants(p), constants(u), x, false).item(),
            agog_loss(constants(p), constants(p), x, true).item());
}

TEST(Train, ZeroEpochsIsInitialization) {
  const Dataset ds = small_dataset();
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 4;
  const Checkpoint ck = train(ds, cfg);
  const Model init = Model::init(ModelType::agog, hyper_for(ds, cfg), 4);
  EXPECT_EQ(ck.params, init.snapshot());
  EXPECT_TRUE(ck.loss_trace.empty());
  EXPECT_EQ(ck.adam_step, 0);
}

TEST(Train, SameSeedSameResult) {
  const Dataset ds = small_dataset();
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 9;
  const Checkpoint a = train(ds, cfg), b = train(ds, cfg);
  EXPECT_EQ(a, b);
  cfg.seed = 10;
  EXPECT_NE(a.loss_trace.back(), train(ds, cfg).loss_trace.back());
}

TEST(Train, GeneGridConverges) {
  DatasetConfig c;
  c.family = GraphFamily::grid;
  c.n = 49;
  c.train_frac = 0.3;
  c.seed = 1;
  const Dataset ds = build_dataset(c);
  TrainConfig cfg;
  cfg.seed = 1;
  cfg.epochs = 800;
  const Checkpoint ck = train(ds, cfg);
  EXPECT_LT(ck.loss_trace.back(), 0.2 * ck.loss_trace.front());
  EXPECT_LT(evaluate_loss(ck, ds), 0.2 * ck.loss_trace.front());
}

TEST(Train, ProgressCallbackAndValidation) {
  const Dataset ds = small_dataset();
  TrainConfig cfg;
  cfg.epochs = 3;
  int calls = 0;
  train(ds, cfg, [&](int epoch, double loss) {
    EXPECT_EQ(epoch, calls++);
    EXPECT_TRUE(std::isfinite(loss));
  });
  EXPECT_EQ(calls, 3);
  cfg.lr = 0.0;
  EXPECT_THROW(train(ds, cfg), UsageError);
  cfg.lr = 0.01;
  cfg.epochs = -1;
  EXPECT_THROW(train(ds, cfg), UsageError);
  cfg.epochs = 1;
  cfg.model = ModelType::gru_gnn;
  EXPECT_THROW(train(ds, cfg), UsageError);
}

TEST(Train, NonFiniteLossReportsEpoch) {
  const Dataset ds = small_dataset();
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.lr = 1e300;
  try {
    train(ds, cfg);
    FAIL();
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_TRUE(msg.find("epoch") != std::string::npos || msg.find("sub-step") != std::string::npos ||
                msg.find("gradient") != std::string::npos)
        << msg;
  }
}

TEST(Train, AllModelsRun) {
  const Dataset irregular = small_dataset();
  const Dataset regular = small_dataset(Protocol::regular);
  for (auto m : {ModelType::agog, ModelType::agog_star, ModelType::ndcn}) {
    TrainConfig cfg;
    cfg.model = m;
    cfg.epochs = 3;
    const Checkpoint ck = train(irregular, cfg);
    EXPECT_EQ(ck.loss_trace.size(), 3u);
    for (Task t : {Task::interp, Task::extrap}) {
      const auto rep = evaluate(ck, irregular, t);
      EXPECT_EQ(rep.rows.size(), 2u);
    }
  }
  for (auto m : {ModelType::agog, ModelType::ndcn, ModelType::gru_gnn, ModelType::lstm_gnn,
                 ModelType::rnn_gnn}) {
    TrainConfig cfg;
    cfg.model = m;
    cfg.epochs = 3;
    const Checkpoint ck = train(regular, cfg);
    const auto rep = evaluate(ck, regular, Task::regular);
    ASSERT_EQ(rep.rows.size(), 2u) << to_string(m);
    EXPECT_GE(*rep.rows[0].value, 0.0);
    EXPECT_EQ(rep.series.size(), 16u);
  }
}

TEST(Train, AblationDiffersOnlyInContinuity) {
  const Dataset ds = small_dataset();
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.model = ModelType::agog_star;
  const Checkpoint star = train(ds, cfg);
  cfg.model = ModelType::agog;
  const Checkpoint full = train(ds, cfg);
  EXPECT_EQ(star.params, full.params);
  EXPECT_TRUE(cfg.continuity_enabled());
  cfg.model = ModelType::agog_star;
  EXPECT_FALSE(cfg.continuity_enabled());
  EXPECT_LE(evaluate_loss(star, ds), evaluate_loss(full, ds));
}

TEST(Metrics, PerfectPrediction) {
  std::mt19937_64 rng(5);
  const std::vector<Matrix> t{random_matrix(3, 1, rng)};
  const Metrics m = compute_metrics(t, t);
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_EQ(*m.norm_l1, 0.0);
}

TEST(Metrics, HandExample) {
  Matrix p(2, 1), t(2, 1);
  p << 3, 1;
  t << 2, 2;
  const Metrics m = compute_metrics(std::vector<Matrix>{p}, std::vector<Matrix>{t});
  EXPECT_DOUBLE_EQ(m.mae, 1.0);
  EXPECT_DOUBLE_EQ(*m.norm_l1, 0.5);
}

TEST(Metrics, ZeroTruthUndefined) {
  const std::vector<Matrix> t{Matrix::Zero(2, 1)}, p{Matrix::Ones(2, 1)};
  const Metrics m = compute_metrics(p, t);
  EXPECT_EQ(m.mae, 1.0);
  EXPECT_FALSE(m.norm_l1.has_value());
}

TEST(Metrics, NormL1Identity) {
  std::mt19937_64 rng(6);
  std::vector<Matrix> p, t;
  for (int i = 0; i < 5; ++i) {
    p.push_back(random_matrix(7, 1, rng, 3.0));
    t.push_back(random_matrix(7, 1, rng, 3.0));
  }
  const Metrics m = compute_metrics(p, t);
  double abs_truth = 0.0;
  for (const auto& x : t) abs_truth += x.cwiseAbs().sum();
  EXPECT_DOUBLE_EQ(*m.norm_l1, m.mae / (abs_truth / 35.0));
}

TEST(ErrorSeries, ConstantOffsetAndMean) {
  std::mt19937_64 rng(7);
  std::vector<Matrix> t, p;
  for (int i = 0; i < 4; ++i) {
    t.push_back(random_matrix(5, 1, rng));
    p.push_back(t.back().array() - 0.25);
  }
  for (double e : error_series(p, t)) EXPECT_NEAR(e, 0.25, 1e-15);
  EXPECT_EQ(error_series(t, t), std::vector<double>(4, 0.0));
}

TEST(Evaluate, OracleScoresZero) {
  const Dataset ds = small_dataset();
  const Checkpoint ck = oracle_checkpoint(ds);
  for (Task task : {Task::interp, Task::extrap}) {
    const auto rep = evaluate(ck, ds, task);
    EXPECT_EQ(*rep.rows[0].value, 0.0);
    for (const auto& s : error_over_time(ck, ds, task)) EXPECT_EQ(s, 0.0);
  }
}

TEST(Evaluate, SeriesMeanEqualsMae) {
  const Dataset ds = small_dataset();
  TrainConfig cfg;
  cfg.epochs = 10;
  const Checkpoint ck = train(ds, cfg);
  for (Task task : {Task::interp, Task::extrap}) {
    const auto rep = evaluate(ck, ds, task);
    const auto series = error_over_time(ck, ds, task);
    double mean = 0.0;
    for (double e : series) mean += e;
    mean /= static_cast<double>(series.size());
    EXPECT_NEAR(mean, *rep.rows[0].value, 1e-12);
    ASSERT_EQ(rep.rows[1].metric, "NormL1");
    const auto truth = ds.states_at(task_indices(ds, task));
    double scale = 0.0, count = 0.0;
    for (const auto& x : truth) {
      scale += x.cwiseAbs().sum();
      count += static_cast<double>(x.size());
    }
    EXPECT_DOUBLE_EQ(*rep.rows[1].value, *rep.rows[0].value / (scale / count));
  }
}

TEST(Evaluate, TaskSplitMismatch) {
  const Dataset regular = small_dataset(Protocol::regular);
  const Checkpoint ck = oracle_checkpoint(regular);
  try {
    evaluate(ck, regular, Task::interp);
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("no interp_test split"), std::string::npos);
  }
  const Dataset irregular = small_dataset();
  EXPECT_THROW(evaluate(oracle_checkpoint(irregular), irregular, Task::regular), UsageError);
}

// Test states never reach the model: changing them leaves predictions intact.
TEST(Evaluate, TestObservationsUnseen) {
  Dataset ds = small_dataset();
  TrainConfig cfg;
  cfg.epochs = 5;
  for (auto m : {ModelType::agog, ModelType::ndcn}) {
    cfg.model = m;
    const Checkpoint ck = train(ds, cfg);
    const auto before = predict(ck, ds, Task::interp);
    Dataset tampered = ds;
    for (auto i : tampered.indices(Split::interp_test)) tampered.states[i].setConstant(99.0);
    for (auto i : tampered.indices(Split::extrap_test)) tampered.states[i].setConstant(-99.0);
    EXPECT_EQ(predict(ck, tampered, Task::interp), before);
  }
}
