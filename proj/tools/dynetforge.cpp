// dynetforge command-line front end.

#include <CLI11.hpp>

#include <Eigen/Core>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "dynetforge/dynetforge.hpp"

namespace fs = std::filesystem;
using namespace dynetforge;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kNumeric = 2, kPartial = 3 };

void refuse_overwrite(const fs::path& out, bool force) {
  if (fs::exists(out) && !force) {
    throw UsageError("'" + out.string() + "' exists; pass --force to overwrite");
  }
}

int thread_cap() {
  const char* env = std::getenv("DYNETFORGE_THREADS");
  if (env == nullptr || *env == '\0') return 0;
  try {
    const int v = std::stoi(env);
    if (v < 1) throw UsageError("");
    return v;
  } catch (const std::exception&) {
    throw UsageError(std::string("DYNETFORGE_THREADS must be a positive integer, got '") + env + "'");
  }
}

struct GenerateArgs {
  std::string dynamics = "gene";
  std::string graph = "grid";
  int n = 400;
  std::string protocol = "irregular";
  double train_frac = 0.1;
  double horizon = 0.0;
  std::uint64_t seed = 0;
  std::string out;
  bool force = false;
  bool kuramoto_flip = false;
};

int cmd_generate(const GenerateArgs& a) {
  refuse_overwrite(a.out, a.force);
  DatasetConfig c;
  c.dynamics = parse_dynamics(a.dynamics);
  c.family = parse_graph_family(a.graph);
  c.n = a.n;
  c.protocol = parse_protocol(a.protocol);
  c.train_frac = a.train_frac;
  c.horizon = a.horizon;
  c.seed = a.seed;
  c.kuramoto_flip_sign = a.kuramoto_flip;
  const Dataset ds = build_dataset(c);
  save_dataset(a.out, ds);
  std::cout << "wrote " << a.out << ": n=" << ds.n() << " edges=" << ds.graph.edges.size()
            << " timestamps=" << ds.timestamps.size() << " split=" << ds.indices(Split::train).size() << "/"
            << ds.indices(Split::interp_test).size() << "/" << ds.indices(Split::extrap_test).size()
            << " checksum=" << io::hex64(states_checksum(ds)) << "\n";
  return kOk;
}

struct TrainArgs {
  std::string model = "agog";
  std::string data;
  TrainConfig cfg;
  std::string out;
  int progress_every = 50;
  bool force = false;
};

int cmd_train(TrainArgs a) {
  refuse_overwrite(a.out, a.force);
  const Dataset ds = load_dataset(a.data);
  a.cfg.model = parse_model_type(a.model);
  Checkpoint ck;
  if (a.cfg.model == ModelType::oracle) {
    ck = oracle_checkpoint(ds);
  } else {
    ck = train(ds, a.cfg, [&](int epoch, double loss) {
      if (a.progress_every > 0 && ((epoch + 1) % a.progress_every == 0 || epoch + 1 == a.cfg.epochs)) {
        std::cout << "epoch " << epoch + 1 << "/" << a.cfg.epochs << " loss "
                  << io::format_double(loss) << std::endl;
      }
    });
  }
  save_checkpoint(a.out, ck);
  const fs::path trace = a.out + ".loss.csv";
  std::ofstream os(trace);
  os << "epoch,loss\n";
  for (std::size_t i = 0; i < ck.loss_trace.size(); ++i) {
    os << i << "," << io::format_double(ck.loss_trace[i]) << "\n";
  }
  std::cout << "wrote " << a.out << " and " << trace.string() << "\n";
  return kOk;
}

void warn_on_mismatch(const Checkpoint& ck, const Dataset& ds) {
  if (ck.data_checksum != states_checksum(ds)) {
    std::cerr << "warning: checkpoint was trained on a different dataset (checksum "
              << io::hex64(ck.data_checksum) << " vs " << io::hex64(states_checksum(ds)) << ")\n";
  }
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& task,
             const std::string& out) {
  const Checkpoint ck = load_checkpoint(ckpt);
  const Dataset ds = load_dataset(data);
  warn_on_mismatch(ck, ds);
  const EvalReport rep = evaluate(ck, ds, parse_task(task));
  append_report(out, rep.rows);
  append_series(series_path_for(out), rep.series);
  for (const auto& r : rep.rows) std::cout << report_line(r) << "\n";
  return kOk;
}

std::vector<double> parse_times(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw UsageError("bad time value '" + cell + "'");
    }
  }
  if (out.empty()) throw UsageError("--times needs at least one value");
  return out;
}

void write_grid(std::ostream& os, const ad::Matrix& x, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (c > 0) os << " ";
      os << io::format_double(x(r * cols + c, 0));
    }
    os << "\n";
  }
}

int cmd_viz(const std::string& ckpt, const std::string& data, const std::string& times_arg,
            const std::string& out, bool force) {
  refuse_overwrite(out, force);
  const Checkpoint ck = load_checkpoint(ckpt);
  const Dataset ds = load_dataset(data);
  warn_on_mismatch(ck, ds);
  const auto times = parse_times(times_arg);
  const auto pred = predict_at(ck, ds, times);
  const Checkpoint truth_ck = oracle_checkpoint(ds);
  const auto truth = predict_at(truth_ck, ds, times);

  const int n = ds.n();
  int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
  int rows = side, cols = side;
  if (side * side != n) {
    std::cerr << "warning: n=" << n << " is not a perfect square; writing 1x" << n << " strips\n";
    rows = 1;
    cols = n;
  }
  std::ofstream os(out);
  if (!os) throw UsageError("cannot open '" + out + "' for writing");
  os << "# dynamics " << to_string(ds.dynamics.kind) << " graph " << to_string(ds.graph.family)
     << " method " << to_string(ck.model) << " layout " << rows << "x" << cols << " components "
     << ds.state_dim() << "\n";
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double mae = (pred[i] - truth[i]).cwiseAbs().mean();
    os << "time " << io::format_double(times[i]) << "\nmae " << io::format_double(mae) << "\n";
    for (int k = 0; k < ds.state_dim(); ++k) {
      os << "truth " << k << "\n";
      write_grid(os, truth[i].col(k), rows, cols);
      os << "prediction " << k << "\n";
      write_grid(os, pred[i].col(k), rows, cols);
    }
    std::cout << "t=" << times[i] << " mae " << io::format_double(mae) << "\n";
  }
  return kOk;
}

int cmd_matrix(const std::string& spec_path, int jobs, const std::string& out_dir) {
  std::ifstream is(spec_path);
  if (!is) throw UsageError("cannot open '" + spec_path + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("spec is not valid JSON: ") + e.what());
  }
  const MatrixSpec spec = parse_matrix_spec(j);
  if (const int cap = thread_cap(); cap > 0) jobs = std::min(jobs, cap);
  MatrixOptions opt;
  opt.jobs = jobs;
  opt.out_dir = out_dir;
  opt.log = [](const std::string& line) {
    static std::mutex mu;
    std::lock_guard lock(mu);
    std::cout << line << std::endl;
  };
  const MatrixResult res = run_experiment_matrix(spec, opt);
  const fs::path dir(out_dir);
  {
    std::ofstream os(dir / "report.csv");
    write_report(os, res.rows);
  }
  {
    std::ofstream os(dir / "report.series.csv");
    write_series(os, res.series);
  }
  {
    std::ofstream os(dir / "aggregate.csv");
    write_aggregate(os, res.aggregate);
  }
  std::cout << "wrote " << (dir / "aggregate.csv").string() << " (" << res.aggregate.size()
            << " rows)\n";
  if (!res.failures.empty()) {
    std::cerr << res.failures.size() << " run(s) failed:\n";
    for (const auto& f : res.failures) {
      std::cerr << "  " << f.dynamics << "/" << f.graph << "/"
                << (f.method.empty() ? "dataset" : f.method) << " seed " << f.seed << ": "
                << f.message << "\n";
    }
    return kPartial;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Network dynamics datasets, AGOG and baseline models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "synthesize a dataset");
  g->add_option("--dynamics", gen.dynamics, "gene | kuramoto | mutualistic")->capture_default_str();
  g->add_option("--graph", gen.graph, "grid | er | ba | ws | community")->capture_default_str();
  g->add_option("--n", gen.n, "node count")->capture_default_str();
  g->add_option("--protocol", gen.protocol, "irregular | regular")->capture_default_str();
  g->add_option("--train-frac", gen.train_frac, "train fraction of the first 100 snapshots")
      ->capture_default_str();
  g->add_option("--horizon", gen.horizon, "time horizon (0: per-dynamics default)");
  g->add_option("--seed", gen.seed, "master seed")->capture_default_str();
  g->add_flag("--kuramoto-flip-sign", gen.kuramoto_flip, "use sin(x_i - x_j) in the coupling");
  g->add_option("--out", gen.out, "dataset file")->required();
  g->add_flag("--force", gen.force, "overwrite an existing file");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a model on a dataset");
  t->add_option("--model", tr.model, "agog | agog-star | ndcn | gru-gnn | lstm-gnn | rnn-gnn")
      ->capture_default_str();
  t->add_option("--data", tr.data, "dataset file")->required();
  t->add_option("--epochs", tr.cfg.epochs)->capture_default_str();
  t->add_option("--lr", tr.cfg.lr)->capture_default_str();
  t->add_option("--hidden", tr.cfg.hidden, "hidden width d")->capture_default_str();
  t->add_option("--augment", tr.cfg.augment, "augmented width p")->capture_default_str();
  t->add_option("--g1", tr.cfg.g1, "temporal GNN encoder width")->capture_default_str();
  t->add_option("--g2", tr.cfg.g2, "temporal GNN recurrent width")->capture_default_str();
  t->add_option("--step-dt", tr.cfg.step_dt, "Euler sub-step (0: horizon/200)");
  t->add_option("--seed", tr.cfg.seed)->capture_default_str();
  t->add_option("--progress-every", tr.progress_every, "epochs between progress lines (0: quiet)")
      ->capture_default_str();
  t->add_option("--out", tr.out, "checkpoint file")->required();
  t->add_flag("--force", tr.force, "overwrite an existing file");

  std::string ckpt, data, task = "interp", out, times;
  bool force = false;
  auto* e = app.add_subcommand("eval", "score a checkpoint; appends to a CSV report");
  e->add_option("--checkpoint", ckpt)->required();
  e->add_option("--data", data)->required();
  e->add_option("--task", task, "interp | extrap | regular")->capture_default_str();
  e->add_option("--out", out, "report CSV")->required();

  auto* v = app.add_subcommand("viz", "write truth/prediction grids at chosen times");
  v->add_option("--checkpoint", ckpt)->required();
  v->add_option("--data", data)->required();
  v->add_option("--times", times, "comma-separated times")->required();
  v->add_option("--out", out)->required();
  v->add_flag("--force", force, "overwrite an existing file");

  std::string spec;
  int jobs = 1;
  auto* m = app.add_subcommand("matrix", "run an experiment matrix from a JSON spec");
  m->add_option("--spec", spec)->required();
  m->add_option("--jobs", jobs)->check(CLI::PositiveNumber)->capture_default_str();
  m->add_option("--out-dir", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (const int cap = thread_cap(); cap > 0) Eigen::setNbThreads(cap);
    if (*g) return cmd_generate(gen);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ckpt, data, task, out);
    if (*v) return cmd_viz(ckpt, data, times, out, force);
    if (*m) return cmd_matrix(spec, jobs, out);
  } catch (const NumericError& err) {
    std::cerr << "numeric failure: " << err.what() << "\n";
    return kNumeric;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
