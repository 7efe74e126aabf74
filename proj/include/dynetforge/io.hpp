#pragma once

// Dataset and checkpoint containers, and CSV report files.
//
// Container layout:
//   DYNETFORGE-<KIND>\n
//   header-bytes: <N>\n
//   <N bytes of JSON metadata>\n
//   <payload: little-endian IEEE-754 doubles, sections listed in the JSON>

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dynetforge/dynamics.hpp"
#include "dynetforge/errors.hpp"
#include "dynetforge/graph.hpp"
#include "dynetforge/model.hpp"
#include "dynetforge/training.hpp"

namespace dynetforge {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kFormatVersion = 1;

namespace io {

using nlohmann::json;

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::uint64_t parse_hex64(const std::string& s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("bad checksum field '" + s + "'");
  }
  return v;
}

// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

class PayloadWriter {
 public:
  void add(const std::string& name, const double* data, std::size_t count, Eigen::Index rows,
           Eigen::Index cols) {
    sections_.push_back({{"name", name},
                         {"offset", bytes_.size()},
                         {"rows", rows},
                         {"cols", cols}});
    for (std::size_t i = 0; i < count; ++i) {
      const auto bits = std::bit_cast<std::uint64_t>(data[i]);
      for (int b = 0; b < 8; ++b) bytes_.push_back(static_cast<char>((bits >> (8 * b)) & 0xffU));
    }
  }
  void add(const std::string& name, const Matrix& m) {
    add(name, m.data(), static_cast<std::size_t>(m.size()), m.rows(), m.cols());
  }
  void add(const std::string& name, const std::vector<double>& v) {
    add(name, v.data(), v.size(), static_cast<Eigen::Index>(v.size()), 1);
  }

  json manifest() const { return {{"bytes", bytes_.size()}, {"sections", sections_}}; }
  const std::string& bytes() const { return bytes_; }

 private:
  json sections_ = json::array();
  std::string bytes_;
};

class PayloadReader {
 public:
  PayloadReader(const json& manifest, std::string bytes) : bytes_(std::move(bytes)) {
    if (manifest.at("bytes").get<std::size_t>() != bytes_.size()) {
      throw FormatError("payload size mismatch: expected " +
                        std::to_string(manifest.at("bytes").get<std::size_t>()) + " bytes, found " +
                        std::to_string(bytes_.size()));
    }
    for (const auto& s : manifest.at("sections")) {
      sections_[s.at("name").get<std::string>()] = {s.at("offset").get<std::size_t>(),
                                                    s.at("rows").get<Eigen::Index>(),
                                                    s.at("cols").get<Eigen::Index>()};
    }
  }

  Matrix matrix(const std::string& name) const {
    const auto it = sections_.find(name);
    if (it == sections_.end()) throw FormatError("payload section '" + name + "' missing");
    const auto& sec = it->second;
    if (sec.rows < 0 || sec.cols < 0) throw FormatError("negative section shape");
    Matrix m(sec.rows, sec.cols);
    const std::size_t count = static_cast<std::size_t>(m.size());
    if (sec.offset + 8 * count > bytes_.size()) {
      throw FormatError("payload section '" + name + "' runs past the end of the file");
    }
    for (std::size_t i = 0; i < count; ++i) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) {
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[sec.offset + 8 * i + b]))
                << (8 * b);
      }
      m.data()[i] = std::bit_cast<double>(bits);
    }
    return m;
  }

  std::vector<double> vector(const std::string& name) const {
    const Matrix m = matrix(name);
    return {m.data(), m.data() + m.size()};
  }

 private:
  struct Section {
    std::size_t offset;
    Eigen::Index rows;
    Eigen::Index cols;
  };
  std::map<std::string, Section> sections_;
  std::string bytes_;
};

inline void write_container(std::ostream& os, const std::string& kind, json header,
                            const PayloadWriter& payload) {
  header["payload"] = payload.manifest();
  const std::string text = header.dump(2);
  os << "DYNETFORGE-" << kind << "\n"
     << "header-bytes: " << text.size() << "\n"
     << text << "\n";
  os.write(payload.bytes().data(), static_cast<std::streamsize>(payload.bytes().size()));
  if (!os) throw FormatError("write failed");
}

struct Container {
  json header;
  PayloadReader payload;
};

inline Container read_container(std::istream& is, const std::string& kind) {
  std::string line;
  if (!std::getline(is, line) || line != "DYNETFORGE-" + kind) {
    throw FormatError("not a dynetforge " + kind + " file");
  }
  if (!std::getline(is, line) || line.rfind("header-bytes: ", 0) != 0) {
    throw FormatError("missing header-bytes line");
  }
  std::size_t n = 0;
  const std::string_view digits = std::string_view(line).substr(14);
  const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), n);
  if (res.ec != std::errc()) throw FormatError("bad header-bytes value");
  std::string text(n, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(n))) throw FormatError("truncated header");
  if (is.get() != '\n') throw FormatError("header not newline-terminated");
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("header is not valid JSON: ") + e.what());
  }
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (header.value("format_version", 0) != kFormatVersion) {
    throw FormatError("unsupported format_version");
  }
  PayloadReader reader(header.at("payload"), std::move(bytes));
  return {std::move(header), std::move(reader)};
}

inline json graph_params_json(const GraphParams& p) {
  return {{"blocks", p.blocks}, {"p_in", p.p_in},   {"p_out", p.p_out}, {"er_p", p.er_p},
          {"ba_m", p.ba_m},     {"ws_k", p.ws_k},   {"ws_p", p.ws_p}};
}

inline GraphParams graph_params_from_json(const json& j) {
  GraphParams p;
  p.blocks = j.at("blocks").get<int>();
  p.p_in = j.at("p_in").get<double>();
  p.p_out = j.at("p_out").get<double>();
  p.er_p = j.at("er_p").get<double>();
  p.ba_m = j.at("ba_m").get<int>();
  p.ws_k = j.at("ws_k").get<int>();
  p.ws_p = j.at("ws_p").get<double>();
  return p;
}

template <class T>
T parse_enum(const json& j, T (*parse)(const std::string&)) {
  try {
    return parse(j.get<std::string>());
  } catch (const UsageError& e) {
    throw FormatError(e.what());
  }
}

}  // namespace io

inline void write_dataset(std::ostream& os, const Dataset& ds) {
  using io::json;
  json edges = json::array();
  for (const auto& [i, j] : ds.graph.edges) edges.push_back({i, j});
  json coeff_names = json::array();
  for (const auto& [name, values] : ds.dynamics.named_coefficients()) coeff_names.push_back(name);
  json labels = json::array();
  for (Split s : ds.split) labels.push_back(to_string(s));

  json header = {
      {"format", "dynetforge-dataset"},
      {"format_version", kFormatVersion},
      {"graph",
       {{"n", ds.graph.n},
        {"family", to_string(ds.graph.family)},
        {"seed", ds.graph.seed},
        {"params", io::graph_params_json(ds.graph.params)},
        {"edge_count", ds.graph.edges.size()},
        {"components", connected_components(ds.graph)},
        {"edges", edges}}},
      {"dynamics",
       {{"name", to_string(ds.dynamics.kind)},
        {"state_dim", ds.dynamics.state_dim},
        {"hill", ds.dynamics.hill},
        {"kuramoto_flip_sign", ds.dynamics.kuramoto_flip_sign},
        {"horizon", ds.horizon},
        {"coefficients", coeff_names},
        {"integrator",
         {{"method", "dopri5"},
          {"rtol", ds.integrator.rtol},
          {"atol", ds.integrator.atol},
          {"max_steps", ds.integrator.max_steps}}}}},
      {"schedule",
       {{"protocol", to_string(ds.protocol)},
        {"count", ds.timestamps.size()},
        {"train_frac", ds.train_frac}}},
      {"split",
       {{"labels", labels},
        {"train", ds.count(Split::train)},
        {"interp_test", ds.count(Split::interp_test)},
        {"extrap_test", ds.count(Split::extrap_test)}}},
      {"provenance", {{"tool_version", kToolVersion}, {"seed", ds.seed}}},
      {"states_checksum", io::hex64(states_checksum(ds))},
  };

  io::PayloadWriter payload;
  payload.add("timestamps", ds.timestamps);
  payload.add("initial_state", ds.initial_state);
  for (const auto& [name, values] : ds.dynamics.named_coefficients()) {
    payload.add("coef/" + name, *values);
  }
  // States stacked row-major: (T+1) blocks of n rows.
  const Eigen::Index n = ds.n();
  const Eigen::Index k = ds.state_dim();
  Matrix stacked(static_cast<Eigen::Index>(ds.states.size()) * n, k);
  for (std::size_t i = 0; i < ds.states.size(); ++i) {
    stacked.middleRows(static_cast<Eigen::Index>(i) * n, n) = ds.states[i];
  }
  payload.add("states", stacked);
  io::write_container(os, "DATASET", std::move(header), payload);
}

inline Dataset read_dataset(std::istream& is) {
  auto [h, payload] = io::read_container(is, "DATASET");
  try {
    if (h.at("format") != "dynetforge-dataset") throw FormatError("not a dataset container");
    Dataset ds;
    const auto& g = h.at("graph");
    ds.graph.n = g.at("n").get<int>();
    ds.graph.family = io::parse_enum(g.at("family"), &parse_graph_family);
    ds.graph.seed = g.at("seed").get<std::uint64_t>();
    ds.graph.params = io::graph_params_from_json(g.at("params"));
    for (const auto& e : g.at("edges")) ds.graph.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    try {
      validate_graph(ds.graph);
    } catch (const UsageError& e) {
      throw FormatError(e.what());
    }

    const auto& d = h.at("dynamics");
    ds.dynamics.kind = io::parse_enum(d.at("name"), &parse_dynamics);
    ds.dynamics.state_dim = d.at("state_dim").get<int>();
    ds.dynamics.hill = d.at("hill").get<double>();
    ds.dynamics.kuramoto_flip_sign = d.at("kuramoto_flip_sign").get<bool>();
    ds.horizon = d.at("horizon").get<double>();
    ds.integrator.rtol = d.at("integrator").at("rtol").get<double>();
    ds.integrator.atol = d.at("integrator").at("atol").get<double>();
    ds.integrator.max_steps = d.at("integrator").at("max_steps").get<std::int64_t>();
    for (const auto& name : d.at("coefficients")) {
      auto* target = ds.dynamics.coefficient(name.get<std::string>());
      if (target == nullptr) throw FormatError("unknown coefficient " + name.dump());
      *target = payload.vector("coef/" + name.get<std::string>());
    }

    const auto& s = h.at("schedule");
    ds.protocol = io::parse_enum(s.at("protocol"), &parse_protocol);
    ds.train_frac = s.at("train_frac").get<double>();
    ds.seed = h.at("provenance").at("seed").get<std::uint64_t>();
    for (const auto& label : h.at("split").at("labels")) {
      const auto v = label.get<std::string>();
      if (v == "train") ds.split.push_back(Split::train);
      else if (v == "interp_test") ds.split.push_back(Split::interp_test);
      else if (v == "extrap_test") ds.split.push_back(Split::extrap_test);
      else throw FormatError("unknown split label '" + v + "'");
    }

    ds.timestamps = payload.vector("timestamps");
    ds.initial_state = payload.matrix("initial_state");
    const Matrix stacked = payload.matrix("states");
    const Eigen::Index n = ds.graph.n;
    if (stacked.cols() != ds.dynamics.state_dim ||
        stacked.rows() != static_cast<Eigen::Index>(ds.timestamps.size()) * n ||
        ds.split.size() != ds.timestamps.size()) {
      throw FormatError("states block inconsistent with schedule and graph size");
    }
    for (std::size_t i = 0; i < ds.timestamps.size(); ++i) {
      ds.states.push_back(stacked.middleRows(static_cast<Eigen::Index>(i) * n, n));
    }
    if (io::parse_hex64(h.at("states_checksum").get<std::string>()) != states_checksum(ds)) {
      throw FormatError("states checksum mismatch");
    }
    return ds;
  } catch (const io::json::exception& e) {
    throw FormatError(std::string("malformed dataset header: ") + e.what());
  }
}

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  using io::json;
  json names = json::array();
  for (const auto& p : ck.params) names.push_back(p.name);
  const auto& c = ck.config;
  json header = {
      {"format", "dynetforge-checkpoint"},
      {"format_version", kFormatVersion},
      {"model_type", to_string(ck.model)},
      {"hyperparams",
       {{"n", ck.hyper.n},
        {"k", ck.hyper.k},
        {"d", ck.hyper.d},
        {"p", ck.hyper.p},
        {"g1", ck.hyper.g1},
        {"g2", ck.hyper.g2}}},
      {"step_dt", ck.step_dt},
      {"config",
       {{"model", to_string(c.model)},
        {"epochs", c.epochs},
        {"lr", c.lr},
        {"seed", c.seed},
        {"step_dt", c.step_dt},
        {"hidden", c.hidden},
        {"augment", c.augment},
        {"g1", c.g1},
        {"g2", c.g2},
        {"continuity_enabled", c.continuity_enabled()}}},
      {"parameters", names},
      {"optimizer", {{"name", "adam"}, {"step", ck.adam_step}, {"moments", ck.adam_m.size()}}},
      {"data_checksum", io::hex64(ck.data_checksum)},
      {"provenance", {{"tool_version", kToolVersion}}},
  };
  io::PayloadWriter payload;
  for (const auto& p : ck.params) payload.add("param/" + p.name, p.value);
  for (const auto& m : ck.adam_m) payload.add("adam_m/" + m.name, m.value);
  for (const auto& v : ck.adam_v) payload.add("adam_v/" + v.name, v.value);
  payload.add("loss_trace", ck.loss_trace);
  io::write_container(os, "CHECKPOINT", std::move(header), payload);
}

inline Checkpoint read_checkpoint(std::istream& is) {
  auto [h, payload] = io::read_container(is, "CHECKPOINT");
  try {
    if (h.at("format") != "dynetforge-checkpoint") throw FormatError("not a checkpoint container");
    Checkpoint ck;
    ck.model = io::parse_enum(h.at("model_type"), &parse_model_type);
    const auto& hp = h.at("hyperparams");
    ck.hyper = {hp.at("n").get<int>(),  hp.at("k").get<int>(),  hp.at("d").get<int>(),
                hp.at("p").get<int>(),  hp.at("g1").get<int>(), hp.at("g2").get<int>()};
    ck.step_dt = h.at("step_dt").get<double>();
    const auto& c = h.at("config");
    ck.config.model = io::parse_enum(c.at("model"), &parse_model_type);
    ck.config.epochs = c.at("epochs").get<int>();
    ck.config.lr = c.at("lr").get<double>();
    ck.config.seed = c.at("seed").get<std::uint64_t>();
    ck.config.step_dt = c.at("step_dt").get<double>();
    ck.config.hidden = c.at("hidden").get<int>();
    ck.config.augment = c.at("augment").get<int>();
    ck.config.g1 = c.at("g1").get<int>();
    ck.config.g2 = c.at("g2").get<int>();
    const auto moments = h.at("optimizer").at("moments").get<std::size_t>();
    ck.adam_step = h.at("optimizer").at("step").get<std::int64_t>();
    for (const auto& name : h.at("parameters")) {
      const auto n = name.get<std::string>();
      ck.params.push_back({n, payload.matrix("param/" + n)});
      if (moments > 0) {
        ck.adam_m.push_back({n, payload.matrix("adam_m/" + n)});
        ck.adam_v.push_back({n, payload.matrix("adam_v/" + n)});
      }
    }
    ck.loss_trace = payload.vector("loss_trace");
    ck.data_checksum = io::parse_hex64(h.at("data_checksum").get<std::string>());
    if (ck.model != ModelType::oracle) Model::from_checkpoint(ck);  // shape validation
    return ck;
  } catch (const io::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(e.what());
  }
}

namespace io {

template <class T, class Writer>
void save_file(const std::filesystem::path& path, const T& value, Writer writer) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw UsageError("cannot open '" + path.string() + "' for writing");
  writer(os, value);
}

template <class Reader>
auto load_file(const std::filesystem::path& path, Reader reader) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("cannot open '" + path.string() + "'");
  return reader(is);
}

}  // namespace io

inline void save_dataset(const std::filesystem::path& p, const Dataset& ds) {
  io::save_file(p, ds, [](std::ostream& os, const Dataset& d) { write_dataset(os, d); });
}
inline Dataset load_dataset(const std::filesystem::path& p) {
  return io::load_file(p, [](std::istream& is) { return read_dataset(is); });
}
inline void save_checkpoint(const std::filesystem::path& p, const Checkpoint& ck) {
  io::save_file(p, ck, [](std::ostream& os, const Checkpoint& c) { write_checkpoint(os, c); });
}
inline Checkpoint load_checkpoint(const std::filesystem::path& p) {
  return io::load_file(p, [](std::istream& is) { return read_checkpoint(is); });
}

// ---- CSV reports -----------------------------------------------------------

inline constexpr const char* kReportHeader = "task,dynamics,graph,method,metric,value,seed";
inline constexpr const char* kSeriesHeader = "task,dynamics,graph,method,seed,index,time,error";

inline std::string report_line(const ReportRow& r) {
  return r.task + "," + r.dynamics + "," + r.graph + "," + r.method + "," + r.metric + "," +
         (r.value ? io::format_double(*r.value) : std::string("undefined")) + "," +
         std::to_string(r.seed);
}

inline std::string series_line(const SeriesPoint& s) {
  return s.task + "," + s.dynamics + "," + s.graph + "," + s.method + "," + std::to_string(s.seed) +
         "," + std::to_string(s.index) + "," + io::format_double(s.time) + "," +
         io::format_double(s.error);
}

inline void write_report(std::ostream& os, const std::vector<ReportRow>& rows, bool header = true) {
  if (header) os << kReportHeader << "\n";
  for (const auto& r : rows) os << report_line(r) << "\n";
}

inline void write_series(std::ostream& os, const std::vector<SeriesPoint>& pts, bool header = true) {
  if (header) os << kSeriesHeader << "\n";
  for (const auto& s : pts) os << series_line(s) << "\n";
}

// Appends to `path`, writing the header only when the file is new or empty.
template <class Rows, class Writer>
void append_csv(const std::filesystem::path& path, const Rows& rows, Writer writer) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream os(path, std::ios::app);
  if (!os) throw UsageError("cannot open '" + path.string() + "' for appending");
  writer(os, rows, fresh);
}

inline void append_report(const std::filesystem::path& path, const std::vector<ReportRow>& rows) {
  append_csv(path, rows, [](std::ostream& os, const auto& r, bool h) { write_report(os, r, h); });
}

inline void append_series(const std::filesystem::path& path, const std::vector<SeriesPoint>& pts) {
  append_csv(path, pts, [](std::ostream& os, const auto& p, bool h) { write_series(os, p, h); });
}

inline std::vector<ReportRow> read_report(std::istream& is) {
  std::vector<ReportRow> rows;
  std::string line;
  if (!std::getline(is, line) || line != kReportHeader) throw FormatError("missing report header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 7) throw FormatError("report row has " + std::to_string(f.size()) + " fields");
    ReportRow r{f[0], f[1], f[2], f[3], f[4], std::nullopt, std::stoull(f[6])};
    if (f[5] != "undefined") r.value = std::stod(f[5]);
    rows.push_back(std::move(r));
  }
  return rows;
}

// Series path next to a report: report.csv -> report.series.csv
inline std::filesystem::path series_path_for(const std::filesystem::path& report) {
  auto p = report;
  p.replace_extension();
  return p.string() + ".series.csv";
}

}  // namespace dynetforge
