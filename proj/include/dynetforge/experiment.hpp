#pragma once

// Experiment matrix: dynamics x graph families x methods x seeds. Each
// (dynamics, family, seed) job builds one dataset that every method trains
// and is evaluated on.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "dynetforge/dynamics.hpp"
#include "dynetforge/errors.hpp"
#include "dynetforge/io.hpp"
#include "dynetforge/model.hpp"
#include "dynetforge/training.hpp"

namespace dynetforge {

struct MatrixSpec {
  std::vector<DynamicsKind> dynamics;
  std::vector<GraphFamily> graphs;
  std::vector<ModelType> methods;
  std::vector<std::uint64_t> seeds;
  int n = 400;
  Protocol protocol = Protocol::irregular;
  double train_frac = 0.1;
  double horizon = 0.0;
  GraphParams graph_params;
  TrainConfig train;  // model and seed are filled per run

  std::size_t cell_count() const { return dynamics.size() * graphs.size(); }
};

// Rejects method/protocol pairs that cannot run.
inline void validate(const MatrixSpec& spec) {
  if (spec.dynamics.empty() || spec.graphs.empty() || spec.methods.empty() || spec.seeds.empty()) {
    throw UsageError("matrix spec needs at least one dynamics, graph, method and seed");
  }
  for (auto m : spec.methods) {
    if (m == ModelType::oracle) throw UsageError("oracle is not a matrix method");
    if (is_temporal_gnn(m) && spec.protocol != Protocol::regular) {
      throw UsageError(to_string(m) + " requires protocol 'regular'");
    }
  }
}

// JSON spec, e.g.
//   {"dynamics": ["gene"], "graphs": ["grid", "er"], "methods": ["agog", "ndcn"],
//    "seeds": 3, "n": 400, "protocol": "irregular", "train_frac": 0.1,
//    "epochs": 800, "lr": 0.01}
// An integer "seeds" expands to 1..N.
inline MatrixSpec parse_matrix_spec(const nlohmann::json& j) {
  MatrixSpec s;
  try {
    for (const auto& v : j.at("dynamics")) s.dynamics.push_back(parse_dynamics(v.get<std::string>()));
    for (const auto& v : j.at("graphs")) s.graphs.push_back(parse_graph_family(v.get<std::string>()));
    for (const auto& v : j.at("methods")) s.methods.push_back(parse_model_type(v.get<std::string>()));
    const auto& seeds = j.at("seeds");
    if (seeds.is_number_integer()) {
      const auto count = seeds.get<std::int64_t>();
      for (std::int64_t i = 1; i <= count; ++i) s.seeds.push_back(static_cast<std::uint64_t>(i));
    } else {
      for (const auto& v : seeds) s.seeds.push_back(v.get<std::uint64_t>());
    }
    s.n = j.value("n", s.n);
    s.protocol = parse_protocol(j.value("protocol", std::string("irregular")));
    s.train_frac = j.value("train_frac", s.train_frac);
    s.horizon = j.value("horizon", s.horizon);
    s.train.epochs = j.value("epochs", s.train.epochs);
    s.train.lr = j.value("lr", s.train.lr);
    s.train.hidden = j.value("hidden", s.train.hidden);
    s.train.augment = j.value("augment", s.train.augment);
    s.train.g1 = j.value("g1", s.train.g1);
    s.train.g2 = j.value("g2", s.train.g2);
    s.train.step_dt = j.value("step_dt", s.train.step_dt);
    if (j.contains("graph_params")) {
      const auto& g = j.at("graph_params");
      auto& p = s.graph_params;
      p.blocks = g.value("blocks", p.blocks);
      p.p_in = g.value("p_in", p.p_in);
      p.p_out = g.value("p_out", p.p_out);
      p.er_p = g.value("er_p", p.er_p);
      p.ba_m = g.value("ba_m", p.ba_m);
      p.ws_k = g.value("ws_k", p.ws_k);
      p.ws_p = g.value("ws_p", p.ws_p);
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed matrix spec: ") + e.what());
  }
  validate(s);
  return s;
}

struct MatrixFailure {
  std::string dynamics;
  std::string graph;
  std::string method;  // empty: the dataset build failed
  std::uint64_t seed = 0;
  std::string message;
};

struct AggregateRow {
  std::string task, dynamics, graph, method, metric;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation over seeds
  std::size_t count = 0;
  bool operator==(const AggregateRow&) const = default;
};

struct MatrixResult {
  std::vector<ReportRow> rows;
  std::vector<SeriesPoint> series;
  std::vector<MatrixFailure> failures;
  std::vector<AggregateRow> aggregate;
};

// Mean and spread per (task, dynamics, graph, method, metric) in first-seen
// order; undefined values are left out.
inline std::vector<AggregateRow> aggregate_rows(const std::vector<ReportRow>& rows) {
  using Key = std::tuple<std::string, std::string, std::string, std::string, std::string>;
  std::vector<Key> order;
  std::map<Key, std::vector<double>> values;
  for (const auto& r : rows) {
    const Key key{r.task, r.dynamics, r.graph, r.method, r.metric};
    if (!values.contains(key)) order.push_back(key);
    auto& v = values[key];
    if (r.value) v.push_back(*r.value);
  }
  std::vector<AggregateRow> out;
  for (const auto& key : order) {
    const auto& v = values[key];
    AggregateRow a{std::get<0>(key), std::get<1>(key), std::get<2>(key), std::get<3>(key),
                   std::get<4>(key)};
    a.count = v.size();
    if (!v.empty()) {
      double sum = 0.0;
      for (double x : v) sum += x;
      a.mean = sum / static_cast<double>(v.size());
      double sq = 0.0;
      for (double x : v) sq += (x - a.mean) * (x - a.mean);
      a.stddev = std::sqrt(sq / static_cast<double>(v.size()));
    } else {
      a.mean = std::nan("");
    }
    out.push_back(std::move(a));
  }
  return out;
}

inline constexpr const char* kAggregateHeader = "task,dynamics,graph,method,metric,mean,std,count";

inline void write_aggregate(std::ostream& os, const std::vector<AggregateRow>& rows) {
  os << kAggregateHeader << "\n";
  for (const auto& a : rows) {
    os << a.task << "," << a.dynamics << "," << a.graph << "," << a.method << "," << a.metric << ","
       << io::format_double(a.mean) << "," << io::format_double(a.stddev) << "," << a.count << "\n";
  }
}

struct MatrixOptions {
  int jobs = 1;
  std::filesystem::path out_dir;  // empty: keep datasets/checkpoints in memory only
  std::function<void(const std::string&)> log;
};

struct MatrixJob {
  DynamicsKind dynamics;
  GraphFamily graph;
  std::uint64_t seed;
};

inline std::vector<MatrixJob> enumerate_jobs(const MatrixSpec& spec) {
  std::vector<MatrixJob> jobs;
  for (auto d : spec.dynamics) {
    for (auto g : spec.graphs) {
      for (auto s : spec.seeds) jobs.push_back({d, g, s});
    }
  }
  return jobs;
}

namespace detail {

struct JobOutput {
  std::vector<ReportRow> rows;
  std::vector<SeriesPoint> series;
  std::vector<MatrixFailure> failures;
};

inline JobOutput run_job(const MatrixSpec& spec, const MatrixJob& job, const MatrixOptions& opt) {
  JobOutput out;
  const std::string dyn = to_string(job.dynamics), graph = to_string(job.graph);
  const std::string tag = dyn + "_" + graph + "_s" + std::to_string(job.seed);
  Dataset ds;
  try {
    DatasetConfig cfg;
    cfg.family = job.graph;
    cfg.graph_params = spec.graph_params;
    cfg.dynamics = job.dynamics;
    cfg.n = spec.n;
    cfg.protocol = spec.protocol;
    cfg.train_frac = spec.train_frac;
    cfg.horizon = spec.horizon;
    cfg.seed = job.seed;
    ds = build_dataset(cfg);
    if (!opt.out_dir.empty()) save_dataset(opt.out_dir / "data" / (tag + ".dset"), ds);
  } catch (const std::exception& e) {
    out.failures.push_back({dyn, graph, "", job.seed, e.what()});
    return out;
  }
  for (auto method : spec.methods) {
    try {
      TrainConfig tc = spec.train;
      tc.model = method;
      tc.seed = job.seed;
      const Checkpoint ck = train(ds, tc);
      if (!opt.out_dir.empty()) {
        save_checkpoint(opt.out_dir / "checkpoints" / (tag + "_" + to_string(method) + ".ckpt"), ck);
      }
      for (Task task : tasks_for(ds.protocol)) {
        auto rep = evaluate(ck, ds, task);
        out.rows.insert(out.rows.end(), rep.rows.begin(), rep.rows.end());
        out.series.insert(out.series.end(), rep.series.begin(), rep.series.end());
      }
      if (opt.log) opt.log(tag + " " + to_string(method) + " done");
    } catch (const std::exception& e) {
      out.failures.push_back({dyn, graph, to_string(method), job.seed, e.what()});
      if (opt.log) opt.log(tag + " " + to_string(method) + " FAILED: " + e.what());
    }
  }
  return out;
}

}  // namespace detail

// Jobs run on `jobs` worker threads; results are merged in job order, so the
// report does not depend on scheduling.
inline MatrixResult run_experiment_matrix(const MatrixSpec& spec, const MatrixOptions& opt = {}) {
  validate(spec);
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir / "data");
    std::filesystem::create_directories(opt.out_dir / "checkpoints");
  }
  const auto jobs = enumerate_jobs(spec);
  std::vector<detail::JobOutput> outputs(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      outputs[i] = detail::run_job(spec, jobs[i], opt);
    }
  };
  const int workers = std::clamp(opt.jobs, 1, static_cast<int>(std::max<std::size_t>(1, jobs.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  MatrixResult res;
  for (auto& o : outputs) {
    res.rows.insert(res.rows.end(), o.rows.begin(), o.rows.end());
    res.series.insert(res.series.end(), o.series.begin(), o.series.end());
    res.failures.insert(res.failures.end(), o.failures.begin(), o.failures.end());
  }
  res.aggregate = aggregate_rows(res.rows);
  return res;
}

}  // namespace dynetforge
