#pragma once

// Model registry: one tagged parameter container for every trainable method,
// plus the value-semantic checkpoint that persists it.

#include <cstdint>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "dynetforge/agog.hpp"
#include "dynetforge/baselines.hpp"
#include "dynetforge/errors.hpp"
#include "dynetforge/optim.hpp"

namespace dynetforge {

// `oracle` re-integrates the reference dynamics; it exists so evaluation
// plumbing can be exercised against an exact predictor.
enum class ModelType { agog, agog_star, ndcn, gru_gnn, lstm_gnn, rnn_gnn, oracle };

inline std::string to_string(ModelType m) {
  switch (m) {
    case ModelType::agog: return "agog";
    case ModelType::agog_star: return "agog-star";
    case ModelType::ndcn: return "ndcn";
    case ModelType::gru_gnn: return "gru-gnn";
    case ModelType::lstm_gnn: return "lstm-gnn";
    case ModelType::rnn_gnn: return "rnn-gnn";
    case ModelType::oracle: return "oracle";
  }
  return "?";
}

inline ModelType parse_model_type(const std::string& s) {
  for (auto m : {ModelType::agog, ModelType::agog_star, ModelType::ndcn, ModelType::gru_gnn,
                 ModelType::lstm_gnn, ModelType::rnn_gnn, ModelType::oracle}) {
    if (s == to_string(m)) return m;
  }
  if (s == "agog*") return ModelType::agog_star;
  throw UsageError("unknown model '" + s + "'");
}

inline bool is_agog(ModelType m) { return m == ModelType::agog || m == ModelType::agog_star; }

inline bool is_temporal_gnn(ModelType m) {
  return m == ModelType::gru_gnn || m == ModelType::lstm_gnn || m == ModelType::rnn_gnn;
}

inline CellType cell_of(ModelType m) {
  switch (m) {
    case ModelType::gru_gnn: return CellType::gru;
    case ModelType::lstm_gnn: return CellType::lstm;
    case ModelType::rnn_gnn: return CellType::rnn;
    default: throw UsageError(to_string(m) + " is not a temporal GNN");
  }
}

// Union of the size settings of all model families; unused fields are kept
// at their defaults.
struct ModelHyper {
  int n = 0;
  int k = 1;
  int d = 20;
  int p = 5;
  int g1 = 10;
  int g2 = 5;
  bool operator==(const ModelHyper&) const = default;
};

struct NamedMatrix {
  std::string name;
  ad::Matrix value;
  bool operator==(const NamedMatrix&) const = default;
};

struct TrainConfig {
  ModelType model = ModelType::agog;
  int epochs = 800;
  double lr = 0.01;
  std::uint64_t seed = 0;
  double step_dt = 0.0;  // <= 0: dataset horizon / 200
  int hidden = 20;
  int augment = 5;
  int g1 = 10;
  int g2 = 5;
  bool operator==(const TrainConfig&) const = default;

  bool continuity_enabled() const { return model != ModelType::agog_star; }
};

struct Checkpoint {
  int format_version = 1;
  ModelType model = ModelType::agog;
  ModelHyper hyper;
  double step_dt = 0.0;
  std::vector<NamedMatrix> params;
  std::int64_t adam_step = 0;
  std::vector<NamedMatrix> adam_m;
  std::vector<NamedMatrix> adam_v;
  TrainConfig config;
  std::vector<double> loss_trace;
  std::uint64_t data_checksum = 0;

  bool operator==(const Checkpoint&) const = default;
};

// Live, differentiable parameters of one model.
class Model {
 public:
  static Model init(ModelType type, const ModelHyper& hp, std::uint64_t seed) {
    Model m;
    m.type_ = type;
    m.hyper_ = hp;
    if (is_agog(type)) {
      m.params_ = AgogParams::init({hp.n, hp.k, hp.d, hp.p}, seed);
    } else if (type == ModelType::ndcn) {
      m.params_ = NdcnParams::init({hp.n, hp.k, hp.d}, seed);
    } else if (is_temporal_gnn(type)) {
      m.params_ = TemporalGnnParams::init({cell_of(type), hp.n, hp.k, hp.g1, hp.g2}, seed);
    }
    return m;
  }

  static Model from_checkpoint(const Checkpoint& ck) {
    ParameterList list;
    for (const auto& p : ck.params) list.push_back({p.name, Tensor(p.value, true)});
    const auto& hp = ck.hyper;
    Model m;
    m.type_ = ck.model;
    m.hyper_ = hp;
    if (is_agog(ck.model)) {
      m.params_ = AgogParams::from_parameters({hp.n, hp.k, hp.d, hp.p}, list);
    } else if (ck.model == ModelType::ndcn) {
      m.params_ = NdcnParams::from_parameters({hp.n, hp.k, hp.d}, list);
    } else if (is_temporal_gnn(ck.model)) {
      m.params_ =
          TemporalGnnParams::from_parameters({cell_of(ck.model), hp.n, hp.k, hp.g1, hp.g2}, list);
    }
    if (m.parameters().size() != list.size()) {
      throw FormatError("checkpoint holds unexpected parameters for model " +
                        to_string(ck.model));
    }
    return m;
  }

  ModelType type() const { return type_; }
  const ModelHyper& hyper() const { return hyper_; }

  ParameterList parameters() const {
    return std::visit(
        [](const auto& p) -> ParameterList {
          if constexpr (std::is_same_v<std::decay_t<decltype(p)>, std::monostate>) {
            return {};
          } else {
            return p.parameters();
          }
        },
        params_);
  }

  const AgogParams& agog() const { return std::get<AgogParams>(params_); }
  const NdcnParams& ndcn() const { return std::get<NdcnParams>(params_); }
  const TemporalGnnParams& temporal() const { return std::get<TemporalGnnParams>(params_); }

  std::vector<NamedMatrix> snapshot() const {
    std::vector<NamedMatrix> out;
    for (const auto& p : parameters()) out.push_back({p.name, p.tensor.value()});
    return out;
  }

 private:
  ModelType type_ = ModelType::oracle;
  ModelHyper hyper_;
  std::variant<std::monostate, AgogParams, NdcnParams, TemporalGnnParams> params_;
};

}  // namespace dynetforge
