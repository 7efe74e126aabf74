#pragma once

// Loss assembly, full-batch training, inference per task, and metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dynetforge/agog.hpp"
#include "dynetforge/autodiff.hpp"
#include "dynetforge/baselines.hpp"
#include "dynetforge/dynamics.hpp"
#include "dynetforge/errors.hpp"
#include "dynetforge/graph.hpp"
#include "dynetforge/model.hpp"
#include "dynetforge/optim.hpp"

namespace dynetforge {

inline constexpr double kDefaultStepsPerHorizon = 200.0;

// Reconstruction mean |x'_i - x_i| plus continuity mean |x^_i - x'_i|, each
// averaged over the observed timestamps.
inline Tensor agog_loss(std::span<const Tensor> x_pred, std::span<const Tensor> x_updated,
                        std::span<const ad::Matrix> x_obs, bool continuity_enabled = true) {
  if (x_pred.size() != x_obs.size() || x_updated.size() != x_obs.size()) {
    throw UsageError("agog_loss: sequences differ in length (" + std::to_string(x_pred.size()) +
                     ", " + std::to_string(x_updated.size()) + ", " +
                     std::to_string(x_obs.size()) + ")");
  }
  if (x_obs.empty()) throw UsageError("agog_loss: empty sequence");
  Tensor total;
  auto accumulate = [&](const Tensor& term) { total = total.defined() ? ad::add(total, term) : term; };
  for (std::size_t i = 0; i < x_obs.size(); ++i) {
    accumulate(ad::mean_abs(ad::sub(x_pred[i], Tensor::constant(x_obs[i]))));
  }
  if (continuity_enabled) {
    for (std::size_t i = 0; i < x_obs.size(); ++i) {
      accumulate(ad::mean_abs(ad::sub(x_updated[i], x_pred[i])));
    }
  }
  return ad::scalar_mul(total, 1.0 / static_cast<double>(x_obs.size()));
}

inline StepPolicy step_policy_for(const Dataset& ds, double step_dt) {
  return StepPolicy{step_dt > 0.0 ? step_dt : ds.horizon / kDefaultStepsPerHorizon};
}

struct TrainingData {
  std::vector<double> times;
  std::vector<ad::Matrix> states;
};

inline TrainingData training_data(const Dataset& ds) {
  const auto idx = ds.indices(Split::train);
  return {ds.times_at(idx), ds.states_at(idx)};
}

inline void check_model_protocol(ModelType m, const Dataset& ds) {
  if (is_temporal_gnn(m) && ds.protocol != Protocol::regular) {
    throw UsageError(to_string(m) + " applies only to regular-protocol datasets");
  }
}

// Training objective of `model` on the dataset's train split.
inline Tensor model_loss(const Model& model, const ad::SparseConstant& phi, const TrainingData& td,
                         const StepPolicy& step) {
  if (td.times.size() < 2) throw UsageError("training needs at least 2 train snapshots");
  switch (model.type()) {
    case ModelType::agog:
    case ModelType::agog_star: {
      const auto roll = agog::train_rollout(td.times, td.states, model.agog(), phi, step);
      return agog_loss(roll.x_pred, roll.x_updated, td.states, model.type() == ModelType::agog);
    }
    case ModelType::ndcn: {
      const auto pred =
          ndcn::forward(model.ndcn(), phi, td.states.front(), td.times.front(), td.times, step);
      return ndcn::loss(pred, td.states);
    }
    case ModelType::gru_gnn:
    case ModelType::lstm_gnn:
    case ModelType::rnn_gnn: {
      const auto seq = temporal::forward(model.temporal(), phi, td.states, 0);
      return ndcn::loss(seq.teacher, std::span<const ad::Matrix>(td.states).subspan(1));
    }
    case ModelType::oracle:
      break;
  }
  throw UsageError("model " + to_string(model.type()) + " is not trainable");
}

inline ModelHyper hyper_for(const Dataset& ds, const TrainConfig& cfg) {
  ModelHyper hp;
  hp.n = ds.n();
  hp.k = ds.state_dim();
  hp.d = cfg.hidden;
  hp.p = is_agog(cfg.model) ? cfg.augment : 0;
  hp.g1 = cfg.g1;
  hp.g2 = cfg.g2;
  return hp;
}

using ProgressFn = std::function<void(int epoch, double loss)>;

// Full-batch Adam: each epoch runs the model over the whole train split,
// backpropagates through every solver step and applies one update.
inline Checkpoint train(const Dataset& ds, const TrainConfig& cfg, const ProgressFn& progress = {}) {
  if (cfg.epochs < 0) throw UsageError("epochs must be >= 0");
  if (!(cfg.lr > 0.0)) throw UsageError("learning rate must be positive");
  check_model_protocol(cfg.model, ds);
  if (cfg.model == ModelType::oracle) throw UsageError("the oracle model is not trainable");

  const ModelHyper hp = hyper_for(ds, cfg);
  const Model model = Model::init(cfg.model, hp, cfg.seed);
  const StepPolicy step = step_policy_for(ds, cfg.step_dt);
  const ad::SparseConstant phi = ad::SparseConstant::from_dense(normalized_laplacian(ds.graph));
  const TrainingData td = training_data(ds);
  const AdamConfig adam_cfg{cfg.lr};

  ParameterList params = model.parameters();
  AdamState adam;
  Checkpoint ck;
  ck.model = cfg.model;
  ck.hyper = hp;
  ck.step_dt = step.dt;
  ck.config = cfg;
  ck.data_checksum = states_checksum(ds);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    zero_grads(params);
    double value = 0.0;
    {
      ad::Tape tape;
      const Tensor loss = model_loss(model, phi, td, step);
      value = loss.item();
      if (!std::isfinite(value)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
      }
      tape.backward(loss);
    }
    adam_step(params, adam, adam_cfg);
    ck.loss_trace.push_back(value);
    if (progress) progress(epoch, value);
  }

  ck.params = model.snapshot();
  ck.adam_step = adam.step;
  for (std::size_t i = 0; i < adam.m.size(); ++i) {
    ck.adam_m.push_back({params[i].name, adam.m[i]});
    ck.adam_v.push_back({params[i].name, adam.v[i]});
  }
  return ck;
}

// Loss of a checkpoint on the dataset's train split, without updating it.
inline double evaluate_loss(const Checkpoint& ck, const Dataset& ds) {
  ad::NoGradGuard no_grad;
  const Model model = Model::from_checkpoint(ck);
  const ad::SparseConstant phi = ad::SparseConstant::from_dense(normalized_laplacian(ds.graph));
  return model_loss(model, phi, training_data(ds), StepPolicy{ck.step_dt}).item();
}

enum class Task { interp, extrap, regular };

inline std::string to_string(Task t) {
  switch (t) {
    case Task::interp: return "interp";
    case Task::extrap: return "extrap";
    case Task::regular: return "regular";
  }
  return "?";
}

inline Task parse_task(const std::string& s) {
  if (s == "interp" || s == "interpolation") return Task::interp;
  if (s == "extrap" || s == "extrapolation") return Task::extrap;
  if (s == "regular") return Task::regular;
  throw UsageError("unknown task '" + s + "'");
}

inline std::vector<Task> tasks_for(Protocol p) {
  if (p == Protocol::irregular) return {Task::interp, Task::extrap};
  return {Task::regular};
}

// Dataset indices scored by `task`; throws when the split does not exist.
inline std::vector<std::size_t> task_indices(const Dataset& ds, Task task) {
  if (task == Task::regular && ds.protocol != Protocol::regular) {
    throw UsageError("regular task needs a regular-protocol dataset");
  }
  const Split split = task == Task::interp ? Split::interp_test : Split::extrap_test;
  auto idx = ds.indices(split);
  if (idx.empty()) throw UsageError("dataset has no " + to_string(split) + " split");
  return idx;
}

// Exact trajectory at `times`: stored snapshots where a time matches one,
// otherwise a fresh reference solve.
inline std::vector<ad::Matrix> oracle_states(const Dataset& ds, std::span<const double> times) {
  std::vector<ad::Matrix> out(times.size());
  std::vector<double> missing;
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const auto it = std::find(ds.timestamps.begin(), ds.timestamps.end(), times[i]);
    if (it != ds.timestamps.end()) {
      out[i] = ds.states[static_cast<std::size_t>(std::distance(ds.timestamps.begin(), it))];
    } else {
      missing.push_back(times[i]);
      slots.push_back(i);
    }
  }
  if (!missing.empty()) {
    std::vector<std::size_t> order(missing.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return missing[a] < missing[b]; });
    std::vector<double> sorted;
    for (auto i : order) sorted.push_back(missing[i]);
    auto solved = integrate_reference(ds.dynamics, ds.graph, ds.initial_state, 0.0, sorted,
                                      ds.integrator);
    for (std::size_t i = 0; i < order.size(); ++i) out[slots[order[i]]] = std::move(solved[i]);
  }
  return out;
}

// Predictions at the task's test timestamps. Only train-split states reach
// the models.
inline std::vector<ad::Matrix> predict(const Checkpoint& ck, const Dataset& ds, Task task) {
  const auto idx = task_indices(ds, task);
  const auto query = ds.times_at(idx);
  if (ck.model == ModelType::oracle) return oracle_states(ds, query);
  check_model_protocol(ck.model, ds);
  if (ck.hyper.n != ds.n() || ck.hyper.k != ds.state_dim()) {
    throw UsageError("checkpoint was trained for n=" + std::to_string(ck.hyper.n) +
                     ", k=" + std::to_string(ck.hyper.k) + " but dataset has n=" +
                     std::to_string(ds.n()) + ", k=" + std::to_string(ds.state_dim()));
  }
  const Model model = Model::from_checkpoint(ck);
  const ad::SparseConstant phi = ad::SparseConstant::from_dense(normalized_laplacian(ds.graph));
  const TrainingData td = training_data(ds);
  const StepPolicy step{ck.step_dt};

  if (is_agog(ck.model)) {
    const auto mode = task == Task::interp ? agog::InferenceMode::interpolation
                                           : agog::InferenceMode::extrapolation;
    return agog::inference_rollout(td.times, td.states, query, mode, model.agog(), phi, step);
  }
  if (ck.model == ModelType::ndcn) {
    return ndcn::predict(model.ndcn(), phi, td.times, td.states.front(), query, step);
  }
  // Temporal GNNs step once per snapshot: the test block must directly follow
  // the training prefix.
  if (task == Task::interp) throw UsageError("temporal GNNs cannot interpolate");
  const auto train_idx = ds.indices(Split::train);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] != train_idx.back() + 1 + i) {
      throw UsageError("temporal GNN test snapshots must follow the training prefix");
    }
  }
  ad::NoGradGuard no_grad;
  const auto seq =
      temporal::forward(model.temporal(), phi, td.states, static_cast<int>(idx.size()));
  std::vector<ad::Matrix> out;
  for (const auto& t : seq.rollout) out.push_back(t.value());
  return out;
}

// Predictions at arbitrary times in [t_0, horizon]. AGOG interpolates up to
// the last train time and extrapolates beyond it; temporal GNNs only answer
// at snapshot times following the training prefix.
inline std::vector<ad::Matrix> predict_at(const Checkpoint& ck, const Dataset& ds,
                                          std::span<const double> times) {
  for (double t : times) {
    if (!std::isfinite(t) || t < ds.timestamps.front() || t > ds.horizon) {
      throw UsageError("time " + std::to_string(t) + " outside [" +
                       std::to_string(ds.timestamps.front()) + ", " + std::to_string(ds.horizon) +
                       "]");
    }
  }
  std::vector<std::size_t> order(times.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  std::vector<double> sorted;
  for (auto i : order) sorted.push_back(times[i]);

  std::vector<ad::Matrix> sorted_pred;
  if (ck.model == ModelType::oracle) {
    sorted_pred = oracle_states(ds, sorted);
  } else {
    check_model_protocol(ck.model, ds);
    const Model model = Model::from_checkpoint(ck);
    const ad::SparseConstant phi = ad::SparseConstant::from_dense(normalized_laplacian(ds.graph));
    const TrainingData td = training_data(ds);
    const StepPolicy step{ck.step_dt};
    if (is_agog(ck.model)) {
      const auto split = std::upper_bound(sorted.begin(), sorted.end(), td.times.back());
      const std::vector<double> inside(sorted.begin(), split), beyond(split, sorted.end());
      if (!inside.empty()) {
        sorted_pred = agog::inference_rollout(td.times, td.states, inside,
                                              agog::InferenceMode::interpolation, model.agog(),
                                              phi, step);
      }
      if (!beyond.empty()) {
        auto tail = agog::inference_rollout(td.times, td.states, beyond,
                                            agog::InferenceMode::extrapolation, model.agog(), phi,
                                            step);
        sorted_pred.insert(sorted_pred.end(), tail.begin(), tail.end());
      }
    } else if (ck.model == ModelType::ndcn) {
      sorted_pred = ndcn::predict(model.ndcn(), phi, td.times, td.states.front(), sorted, step);
    } else {
      const auto train_idx = ds.indices(Split::train);
      std::vector<std::size_t> ahead;
      for (double t : sorted) {
        const auto it = std::find(ds.timestamps.begin(), ds.timestamps.end(), t);
        const auto i = static_cast<std::size_t>(std::distance(ds.timestamps.begin(), it));
        if (it == ds.timestamps.end() || i <= train_idx.back()) {
          throw UsageError("temporal GNNs predict only at snapshot times after the training prefix");
        }
        ahead.push_back(i - train_idx.back());
      }
      ad::NoGradGuard no_grad;
      const auto seq = temporal::forward(model.temporal(), phi, td.states,
                                         static_cast<int>(ahead.back()));
      for (auto a : ahead) sorted_pred.push_back(seq.rollout[a - 1].value());
    }
  }
  std::vector<ad::Matrix> out(times.size());
  for (std::size_t i = 0; i < order.size(); ++i) out[order[i]] = std::move(sorted_pred[i]);
  return out;
}

struct ReportRow {
  std::string task;
  std::string dynamics;
  std::string graph;
  std::string method;
  std::string metric;  // "MAE" or "NormL1"
  std::optional<double> value;  // empty: undefined (zero-magnitude truth)
  std::uint64_t seed = 0;
  bool operator==(const ReportRow&) const = default;
};

struct SeriesPoint {
  std::string task;
  std::string dynamics;
  std::string graph;
  std::string method;
  std::uint64_t seed = 0;
  std::size_t index = 0;  // dataset snapshot index
  double time = 0.0;
  double error = 0.0;
  bool operator==(const SeriesPoint&) const = default;
};

struct EvalReport {
  std::vector<ReportRow> rows;
  std::vector<SeriesPoint> series;
};

struct Metrics {
  double mae = 0.0;
  std::optional<double> norm_l1;
};

// MAE over every entry; NormL1 divides by mean |truth| over the same entries.
inline Metrics compute_metrics(std::span<const ad::Matrix> pred, std::span<const ad::Matrix> truth) {
  if (pred.size() != truth.size() || pred.empty()) {
    throw UsageError("metrics: prediction and truth sequences differ in length");
  }
  double abs_err = 0.0;
  double abs_truth = 0.0;
  double count = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].rows() != truth[i].rows() || pred[i].cols() != truth[i].cols()) {
      throw ShapeError("metrics: prediction/truth shape mismatch");
    }
    abs_err += (pred[i] - truth[i]).cwiseAbs().sum();
    abs_truth += truth[i].cwiseAbs().sum();
    count += static_cast<double>(truth[i].size());
  }
  Metrics m;
  m.mae = abs_err / count;
  const double scale = abs_truth / count;
  if (scale > 0.0) m.norm_l1 = m.mae / scale;
  return m;
}

// Mean over nodes of |pred - truth| at each test timestamp, in index order.
inline std::vector<double> error_series(std::span<const ad::Matrix> pred,
                                        std::span<const ad::Matrix> truth) {
  if (pred.size() != truth.size()) throw UsageError("error series: length mismatch");
  std::vector<double> out;
  out.reserve(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    out.push_back((pred[i] - truth[i]).cwiseAbs().mean());
  }
  return out;
}

inline EvalReport evaluate(const Checkpoint& ck, const Dataset& ds, Task task) {
  const auto idx = task_indices(ds, task);
  const auto pred = predict(ck, ds, task);
  const auto truth = ds.states_at(idx);
  const Metrics m = compute_metrics(pred, truth);
  const auto series = error_series(pred, truth);

  EvalReport rep;
  const std::string t = to_string(task), dyn = to_string(ds.dynamics.kind),
                    graph = to_string(ds.graph.family), method = to_string(ck.model);
  rep.rows.push_back({t, dyn, graph, method, "MAE", m.mae, ds.seed});
  rep.rows.push_back({t, dyn, graph, method, "NormL1", m.norm_l1, ds.seed});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    rep.series.push_back({t, dyn, graph, method, ds.seed, idx[i], ds.timestamps[idx[i]], series[i]});
  }
  return rep;
}

inline std::vector<double> error_over_time(const Checkpoint& ck, const Dataset& ds, Task task) {
  const auto idx = task_indices(ds, task);
  return error_series(predict(ck, ds, task), ds.states_at(idx));
}

// Checkpoint of the exact predictor, for exercising evaluation plumbing.
inline Checkpoint oracle_checkpoint(const Dataset& ds) {
  Checkpoint ck;
  ck.model = ModelType::oracle;
  ck.hyper.n = ds.n();
  ck.hyper.k = ds.state_dim();
  ck.config.model = ModelType::oracle;
  ck.config.epochs = 0;
  ck.data_checksum = states_checksum(ds);
  return ck;
}

}  // namespace dynetforge
