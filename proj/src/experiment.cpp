#include "icsim/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "icsim/channel_io.hpp"
#include "icsim/core.hpp"
#include "icsim/errors.hpp"
#include "icsim/metrics.hpp"
#include "icsim/power_control.hpp"

namespace icsim {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------- config ---

void ExperimentConfig::validate() const {
  system.validate();
  if (mc_trials < 1) throw ConfigError("mc_trials must be >= 1");
  if (runs.empty()) throw ConfigError("experiment has no runs");
  std::set<std::string> names;
  for (const auto& r : runs) {
    r.scheme.validate();
    if (r.name.empty()) throw ConfigError("every run needs a name");
    if (!names.insert(r.name).second) throw ConfigError("duplicate run name '" + r.name + "'");
  }
  if (!(dpca_epsilon > 0.0)) throw ConfigError("dpca_epsilon must be positive");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  for (auto [i, j] : ratio_pairs)
    if (i < 1 || j < 1) throw ConfigError("ratio pairs are 1-based stream indices");
  if (mode == ExperimentMode::Ber) {
    if (ber.schedule.empty()) throw ConfigError("BER mode needs a non-empty schedule");
    if (ber.bits_per_stream == 0 || ber.bits_per_stream % 2 != 0)
      throw ConfigError("bits_per_stream must be a positive even number");
  }
  for (const auto& step : post) {
    if (step == "convergence") continue;
    if (step.rfind("normalize:", 0) == 0) {
      const std::string base = step.substr(10);
      if (!names.count(base)) throw ConfigError("normalize step names unknown run '" + base + "'");
      continue;
    }
    throw ConfigError("unknown post-processing step '" + step + "'");
  }
}

int ExperimentConfig::max_inits() const {
  int n = 1;
  for (const auto& r : runs) n = std::max(n, r.scheme.n_inits);
  return n;
}

namespace {

void require_known_keys(const ojson& j, std::initializer_list<const char*> keys,
                        const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : keys) ok = ok || it.key() == k;
    if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

std::vector<int> per_user(const ojson& j, int users, const std::string& what) {
  if (j.is_number_integer()) return std::vector<int>(users, j.get<int>());
  if (j.is_array()) return j.get<std::vector<int>>();
  throw ConfigError(what + " must be an integer or an array of integers");
}

ojson scheme_to_json(const SchemeSpec& s) {
  ojson j;
  j["name"] = to_string(s.scheme);
  j["orthogonalize"] = s.orthogonalize;
  j["intra_user_interference"] = s.intra_user_interference;
  j["stop"] = to_string(s.stop);
  if (s.max_iter) j["max_iter"] = *s.max_iter;
  j["epsilon"] = s.epsilon;
  j["n_inits"] = s.n_inits;
  return j;
}

SchemeSpec scheme_from_json(const ojson& j) {
  require_known_keys(j, {"name", "orthogonalize", "intra_user_interference", "stop", "max_iter",
                         "epsilon", "n_inits"},
                     "scheme");
  SchemeSpec s;
  s.scheme = scheme_from_string(j.at("name").get<std::string>());
  s.orthogonalize = j.value("orthogonalize", true);
  s.intra_user_interference = j.value("intra_user_interference", false);
  s.stop = stop_rule_from_string(j.value("stop", std::string("SumRate")));
  if (j.contains("max_iter") && !j.at("max_iter").is_null()) s.max_iter = j.at("max_iter").get<int>();
  s.epsilon = j.value("epsilon", 1e-6);
  s.n_inits = j.value("n_inits", 1);
  return s;
}

ojson system_to_json(const SystemConfig& c) {
  ojson j;
  j["users"] = c.users;
  j["tx_antennas"] = c.tx_antennas;
  j["rx_antennas"] = c.rx_antennas;
  j["streams"] = c.streams;
  j["snr_db"] = c.snr_db_points;
  j["epsilon"] = c.epsilon;
  j["master_seed"] = c.master_seed;
  return j;
}

SystemConfig system_from_json(const ojson& j, const SystemConfig& base) {
  require_known_keys(j, {"users", "tx_antennas", "rx_antennas", "streams", "snr_db", "epsilon",
                         "master_seed"},
                     "system");
  SystemConfig c = base;
  c.users = j.value("users", base.users);
  if (j.contains("tx_antennas")) c.tx_antennas = per_user(j["tx_antennas"], c.users, "tx_antennas");
  if (j.contains("rx_antennas")) c.rx_antennas = per_user(j["rx_antennas"], c.users, "rx_antennas");
  if (j.contains("streams")) c.streams = per_user(j["streams"], c.users, "streams");
  if (j.contains("snr_db")) c.snr_db_points = j["snr_db"].get<std::vector<double>>();
  c.epsilon = j.value("epsilon", base.epsilon);
  c.master_seed = j.value("master_seed", base.master_seed);
  return c;
}

std::string mode_name(ExperimentMode m) { return m == ExperimentMode::Ber ? "ber" : "metrics"; }

ExperimentMode mode_from_string(const std::string& s) {
  if (s == "metrics") return ExperimentMode::Metrics;
  if (s == "ber") return ExperimentMode::Ber;
  throw ConfigError("unknown mode '" + s + "' (metrics | ber)");
}

ojson config_to_ojson(const ExperimentConfig& c) {
  ojson j;
  j["name"] = c.name;
  j["mode"] = mode_name(c.mode);
  j["system"] = system_to_json(c.system);
  j["mc_trials"] = c.mc_trials;
  ojson runs = ojson::array();
  for (const auto& r : c.runs) {
    ojson rj;
    rj["name"] = r.name;
    rj["scheme"] = scheme_to_json(r.scheme);
    rj["power_control"] = r.power_control;
    if (!r.group.empty()) rj["group"] = r.group;
    runs.push_back(rj);
  }
  j["runs"] = runs;
  j["dpca_epsilon"] = c.dpca_epsilon;
  ojson pairs = ojson::array();
  for (auto [a, b] : c.ratio_pairs) pairs.push_back({a, b});
  j["ratio_pairs"] = pairs;
  if (c.mode == ExperimentMode::Ber) {
    ojson sched = ojson::array();
    for (const auto& p : c.ber.schedule) sched.push_back({{"snr_db", p.snr_db}, {"trials", p.trials}});
    j["ber"] = {{"schedule", sched},
                {"bits_per_stream", c.ber.bits_per_stream},
                {"detector", detector_name(c.ber.detector)}};
  }
  j["outputs"] = {{"traces", c.write_traces}, {"pc_trace", c.write_pc_trace}};
  j["post"] = c.post;
  return j;
}

void apply_common(ExperimentConfig& c, const ojson& j) {
  if (j.contains("mc_trials")) c.mc_trials = j["mc_trials"].get<int>();
  if (j.contains("dpca_epsilon")) c.dpca_epsilon = j["dpca_epsilon"].get<double>();
  if (j.contains("outputs")) {
    const auto& o = j["outputs"];
    require_known_keys(o, {"dir", "traces", "pc_trace"}, "outputs");
    if (o.contains("dir")) c.out_dir = o["dir"].get<std::string>();
    c.write_traces = o.value("traces", c.write_traces);
    c.write_pc_trace = o.value("pc_trace", c.write_pc_trace);
  }
  if (j.contains("inputs")) {
    const auto& in = j["inputs"];
    require_known_keys(in, {"save", "load"}, "inputs");
    if (in.contains("save")) c.save_inputs = in["save"].get<std::string>();
    if (in.contains("load")) c.load_inputs = in["load"].get<std::string>();
  }
  if (j.contains("threads")) c.threads = j["threads"].get<int>();
  if (j.contains("ber")) {
    const auto& b = j["ber"];
    require_known_keys(b, {"schedule", "bits_per_stream", "detector"}, "ber");
    if (b.contains("schedule")) {
      c.ber.schedule.clear();
      for (const auto& p : b["schedule"]) {
        require_known_keys(p, {"snr_db", "trials"}, "ber.schedule");
        c.ber.schedule.push_back({p.at("snr_db").get<double>(), p.at("trials").get<std::uint64_t>()});
      }
    }
    c.ber.bits_per_stream = b.value("bits_per_stream", c.ber.bits_per_stream);
    if (b.contains("detector")) c.ber.detector = parse_detector(b.at("detector").get<std::string>());
  }
}

ExperimentConfig config_from_ojson(const ojson& root) {
  if (root.contains("config") && root["config"].is_object()) return config_from_ojson(root["config"]);
  require_known_keys(root, {"name", "preset", "full", "mode", "system", "scheme", "power_control",
                            "runs", "mc_trials", "dpca_epsilon", "ratio_pairs", "ber", "outputs",
                            "inputs", "threads", "post"},
                     "experiment config");
  ExperimentConfig c;
  if (root.contains("preset")) {
    for (const char* k : {"scheme", "power_control", "runs", "mode", "post", "ratio_pairs"})
      if (root.contains(k))
        throw ConfigError(std::string("key '") + k + "' cannot be combined with a preset");
    c = preset_config(root["preset"].get<std::string>(), root.value("full", false));
    if (root.contains("system")) {
      const SystemConfig s = system_from_json(root["system"], c.system);
      if (!s.same_dimensions(c.system))
        throw ConfigError("preset '" + c.name + "' is defined on " + c.system.label() +
                          " but the config asks for " + s.label());
      c.system = s;
    }
    apply_common(c, root);
    if (root.contains("name")) c.name = root["name"].get<std::string>();
    c.validate();
    return c;
  }
  if (root.contains("full")) throw ConfigError("'full' only applies to presets");
  c.name = root.value("name", std::string("custom"));
  if (root.contains("mode")) c.mode = mode_from_string(root["mode"].get<std::string>());
  if (!root.contains("system")) throw ConfigError("experiment config needs a 'system'");
  SystemConfig base;
  base.tx_antennas.clear();
  base.rx_antennas.clear();
  base.streams.clear();
  c.system = system_from_json(root["system"], base);
  if (root.contains("runs")) {
    if (root.contains("scheme") || root.contains("power_control"))
      throw ConfigError("give either 'scheme' or 'runs', not both");
    for (const auto& rj : root["runs"]) {
      require_known_keys(rj, {"name", "scheme", "power_control", "group"}, "runs[]");
      RunSpec r;
      r.scheme = scheme_from_json(rj.at("scheme"));
      r.power_control = rj.value("power_control", false);
      r.name = rj.value("name", r.scheme.label() + (r.power_control ? " PC+" : ""));
      r.group = rj.value("group", std::string());
      c.runs.push_back(r);
    }
  } else if (root.contains("scheme")) {
    RunSpec r;
    r.scheme = scheme_from_json(root["scheme"]);
    r.power_control = root.value("power_control", false);
    r.name = r.scheme.label() + (r.power_control ? " PC+" : "");
    c.runs.push_back(r);
  }
  if (root.contains("ratio_pairs"))
    for (const auto& p : root["ratio_pairs"]) c.ratio_pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
  if (root.contains("post")) c.post = root["post"].get<std::vector<std::string>>();
  apply_common(c, root);
  c.validate();
  return c;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  ojson root;
  try {
    root = ojson::parse(json_text);
  } catch (const ojson::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  try {
    return config_from_ojson(root);
  } catch (const ojson::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string config_json(const ExperimentConfig& config) { return config_to_ojson(config).dump(2); }

// --------------------------------------------------------------- presets ---

namespace {

SchemeSpec spec(Scheme s, StopRule stop, std::optional<int> iters = std::nullopt,
                double eps = 1e-6, bool qr = true) {
  SchemeSpec sp;
  sp.scheme = s;
  sp.stop = stop;
  sp.max_iter = iters;
  sp.epsilon = eps;
  sp.orthogonalize = qr;
  return sp;
}

RunSpec run(std::string name, SchemeSpec s, bool pc = false, std::string group = {}) {
  return RunSpec{std::move(name), s, pc, std::move(group)};
}

std::vector<double> range_db(double lo, double hi, double step) {
  std::vector<double> v;
  for (double x = lo; x <= hi + 1e-9; x += step) v.push_back(x);
  return v;
}

std::vector<McPoint> ber_schedule(bool full) {
  std::vector<McPoint> s{{0.0, 1000}, {5.0, 10000}, {10.0, 100000}};
  if (full) s.push_back({15.0, 1000000});
  return s;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"table1", "table2", "table3", "table4", "fig1", "fig2", "fig3", "fig4",
          "fig5",   "fig6",   "fig7",   "fig9",   "sumrate_fig"};
}

ExperimentConfig preset_config(const std::string& name, bool full) {
  ExperimentConfig c;
  c.name = name;
  c.system = SystemConfig::symmetric(3, 4, 4, 2, {0.0}, 1e-6, 1);
  const auto iter16 = spec(Scheme::MaxSINR, StopRule::FixedIter, 16);
  if (name == "table1") {
    c.system.snr_db_points = range_db(0, 60, 10);
    c.mc_trials = 40;
    c.runs = {run("DIA", spec(Scheme::DIA, StopRule::FixedIter, 50)),
              run("MaxSINR", spec(Scheme::MaxSINR, StopRule::SumRate)),
              run("MinSumMSE", spec(Scheme::MinSumMSE, StopRule::FixedIter, 50))};
    c.ratio_pairs = {{1, 2}, {2, 1}};
  } else if (name == "table2") {
    c.system.snr_db_points = range_db(0, 40, 10);
    c.mc_trials = 20;
    struct Row {
      const char* label;
      Scheme s;
      bool qr;
    };
    for (const Row& r : {Row{"DIA", Scheme::DIA, true}, Row{"MaxSINR QR+", Scheme::MaxSINR, true},
                         Row{"MaxSINR QR-", Scheme::MaxSINR, false},
                         Row{"MinSumMSE", Scheme::MinSumMSE, true}}) {
      c.runs.push_back(run(std::string(r.label) + " eps=1e-6",
                           spec(r.s, StopRule::SumRate, std::nullopt, 1e-6, r.qr), false, r.label));
      c.runs.push_back(run(std::string(r.label) + " eps=1e-2",
                           spec(r.s, StopRule::SumRate, std::nullopt, 1e-2, r.qr), false, r.label));
    }
    c.post = {"convergence"};
  } else if (name == "table3") {
    c.system.snr_db_points = range_db(0, 60, 10);
    c.mc_trials = 40;
    c.runs = {run("DIA*", spec(Scheme::DIA, StopRule::SumSINR)),
              run("DIA", spec(Scheme::DIA, StopRule::SumRate)),
              run("MaxSINR*", spec(Scheme::MaxSINR, StopRule::SumSINR)),
              run("MaxSINR", spec(Scheme::MaxSINR, StopRule::SumRate)),
              run("GEVD*", spec(Scheme::GEVD, StopRule::SumSINR)),
              run("GEVD", spec(Scheme::GEVD, StopRule::SumRate))};
    c.post = {"normalize:GEVD"};
  } else if (name == "table4" || name == "fig3" || name == "fig4" || name == "fig5" ||
             name == "fig6" || name == "fig7") {
    if (name == "fig7") c.system = SystemConfig::symmetric(3, 6, 6, 3, {0.0}, 1e-6, 1);
    c.mode = ExperimentMode::Ber;
    c.ber.schedule = name == "table4" ? std::vector<McPoint>{{10.0, 100000}} : ber_schedule(full);
    c.ber.detector = Detector::IntraCancel;
    c.system.snr_db_points.clear();
    for (const auto& p : c.ber.schedule) c.system.snr_db_points.push_back(p.snr_db);
    c.mc_trials = 1;
    c.runs = {run("MaxSINR PC-", iter16, false), run("MaxSINR PC+", iter16, true)};
  } else if (name == "fig1" || name == "fig2") {
    c.system.snr_db_points = range_db(0, 60, 10);
    c.mc_trials = 40;
    c.runs = {run("DIA Iter=inf", spec(Scheme::DIA, StopRule::SumRate)),
              run("DIA Iter=50", spec(Scheme::DIA, StopRule::FixedIter, 50))};
    c.ratio_pairs = {{1, 2}, {2, 1}};
  } else if (name == "fig9") {
    c.system.snr_db_points = {30.0};
    c.mc_trials = 1;
    c.runs = {run("MaxSINR PC+", iter16, true)};
    c.write_pc_trace = true;
  } else if (name == "sumrate_fig") {
    c.system.snr_db_points = range_db(0, 60, 10);
    c.mc_trials = 20;
    const auto qr_on = spec(Scheme::MaxSINR, StopRule::FixedIter, 1000, 1e-6, true);
    const auto qr_off = spec(Scheme::MaxSINR, StopRule::FixedIter, 1000, 1e-6, false);
    c.runs = {run("QR+ PC-", qr_on, false), run("QR+ PC+", qr_on, true),
              run("QR- PC-", qr_off, false), run("QR- PC+", qr_off, true)};
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
  }
  c.validate();
  return c;
}

// ------------------------------------------------------------- execution ---

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

fs::path channel_file(const fs::path& dir, std::uint64_t t) {
  return dir / ("channels_" + std::to_string(t) + ".icch");
}

fs::path init_file(const fs::path& dir, std::uint64_t t, int i) {
  return dir / ("init_" + std::to_string(t) + "_" + std::to_string(i) + ".icbf");
}

struct TrialInputs {
  ChannelSet ch;
  std::vector<std::vector<CMatrix>> inits;
};

TrialInputs trial_inputs(const ExperimentConfig& c, std::uint64_t t) {
  TrialInputs in;
  const int n = c.max_inits();
  if (!c.load_inputs.empty()) {
    in.ch = io::read_channels(channel_file(c.load_inputs, t));
    for (int i = 0; i < n; ++i) in.inits.push_back(io::read_filters(init_file(c.load_inputs, t, i)));
    // Loaded inputs must fit the configured system.
    BeamformerSet probe;
    probe.U = in.inits.front();
    for (int k = 0; k < in.ch.users(); ++k)
      probe.V.push_back(CMatrix::Zero(in.ch.rx_antennas(k), probe.U[k].cols()));
    if (in.ch.users() != c.system.users)
      throw ConfigError("loaded channels of trial " + std::to_string(t) + " have " +
                        std::to_string(in.ch.users()) + " users, config has " +
                        std::to_string(c.system.users));
    for (int k = 0; k < c.system.users; ++k)
      if (in.ch.rx_antennas(k) != c.system.rx_antennas[k] ||
          in.ch.tx_antennas(k) != c.system.tx_antennas[k] ||
          probe.U[k].cols() != c.system.streams[k])
        throw ConfigError("loaded inputs of trial " + std::to_string(t) +
                          " do not match system " + c.system.label());
    check_shapes(in.ch, probe, PowerAllocation::zeros(c.system.streams));
  } else {
    in.ch = generate_channels(c.system, t);
    for (int i = 0; i < n; ++i) in.inits.push_back(random_transmit_filters(c.system, t, i));
  }
  if (!c.save_inputs.empty()) {
    io::write_channels(channel_file(c.save_inputs, t), in.ch);
    for (int i = 0; i < n; ++i) io::write_filters(init_file(c.save_inputs, t, i), in.inits[i]);
  }
  return in;
}

struct Cell {
  StreamMetrics metrics;
  PowerAllocation powers;
  IterationTrace trace;
  int outer = 0;
  int inner = 0;
  int fallbacks = 0;
  bool pc_unconverged = false;
  std::vector<std::vector<std::string>> pc_rows;
};

struct TrialRecord {
  std::uint64_t channel_seed = 0;
  std::string channel_hash;
  std::vector<std::string> init_hashes;
  std::vector<std::vector<Cell>> cells;  // [run][snr]
};

TrialRecord run_trial(const ExperimentConfig& c, std::uint64_t t) {
  const TrialInputs in = trial_inputs(c, t);
  TrialRecord rec;
  rec.channel_seed = in.ch.seed;
  rec.channel_hash = hex64(channel_hash(in.ch));
  for (const auto& u : in.inits) rec.init_hashes.push_back(hex64(filters_hash(u)));
  for (const auto& r : c.runs) {
    std::vector<Cell> row;
    const std::vector<std::vector<CMatrix>> inits(in.inits.begin(),
                                                  in.inits.begin() + r.scheme.n_inits);
    for (double snr : c.system.snr_db_points) {
      const auto budgets = user_budgets(c.system, snr);
      SchemeResult sr = run_scheme_inits(in.ch, r.scheme, budgets, inits);
      Cell cell;
      cell.trace = std::move(sr.trace);
      if (!c.write_traces) {
        cell.trace.sum_rate.clear();
        cell.trace.sum_sinr.clear();
        cell.trace.leakage.clear();
      }
      if (r.power_control) {
        DpcaOptions po;
        po.epsilon = c.dpca_epsilon;
        DpcaResult d = adhoc_dpca(in.ch, sr.filters, budgets, sr.powers, po);
        cell.metrics = d.report.final;
        cell.powers = d.powers;
        cell.outer = d.state.outer_iterations;
        cell.inner = d.state.inner_iterations;
        cell.fallbacks = d.state.sequential_fallbacks;
        cell.pc_unconverged = !d.report.converged;
        if (c.write_pc_trace) {
          for (std::size_t o = 0; o < d.report.outer.size(); ++o) {
            const auto& orec = d.report.outer[o];
            for (std::size_t n = 0; n < orec.inner.sup_distance.size(); ++n) {
              std::vector<std::string> line{
                  r.name, csv::fmt(t), csv::fmt(snr), csv::fmt(static_cast<int>(o + 1)),
                  csv::fmt(static_cast<int>(n)),
                  n == 0 ? std::string() : csv::fmt(orec.inner.l1_change[n - 1]),
                  csv::fmt(orec.inner.sup_distance[n]), csv::fmt(orec.fairness_gap),
                  orec.sequential ? "sequential" : "synchronous"};
              for (double g : orec.targets) line.push_back(csv::fmt(g));
              cell.pc_rows.push_back(std::move(line));
            }
          }
        }
      } else {
        cell.metrics = std::move(sr.metrics);
        cell.powers = std::move(sr.powers);
      }
      row.push_back(std::move(cell));
    }
    rec.cells.push_back(std::move(row));
  }
  return rec;
}

template <class Result, class Fn>
std::vector<Result> parallel_trials(std::uint64_t trials, int threads, Fn fn) {
  std::vector<Result> out(trials);
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr failure;
  std::mutex m;
  auto worker = [&] {
    for (;;) {
      const std::uint64_t t = next.fetch_add(1);
      if (t >= trials) return;
      try {
        out[t] = fn(t);
      } catch (...) {
        std::lock_guard<std::mutex> lock(m);
        if (!failure) failure = std::current_exception();
        next.store(trials);
        return;
      }
    }
  };
  const auto n = std::min<std::uint64_t>(static_cast<std::uint64_t>(threads), trials);
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::uint64_t i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

bool has_streams(const SystemConfig& s, int i, int j) {
  for (int d : s.streams)
    if (d < std::max(i, j)) return false;
  return true;
}

std::string ratio_col(int i, int j) { return "ratio_" + std::to_string(i) + "_" + std::to_string(j); }

class Writer {
 public:
  explicit Writer(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  void write(const std::string& file, const csv::Table& t) {
    const std::string text = csv::to_string(t);
    std::ofstream f(dir_ / file, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + (dir_ / file).string());
    f << text;
    hashes_.emplace_back(file, fnv1a_hex(text));
    result.files.push_back(dir_ / file);
  }

  void manifest(const ExperimentConfig& c) {
    ojson m;
    m["tool"] = "icbench";
    m["version"] = kToolVersion;
    m["config"] = config_to_ojson(c);
    m["seeds"] = {{"master_seed", c.system.master_seed},
                  {"derivation", "splitmix64 chain over (master_seed, trial, purpose, sub)"}};
    m["tolerances"] = {{"system_epsilon", c.system.epsilon}, {"dpca_epsilon", c.dpca_epsilon}};
    ojson outs = ojson::array();
    for (const auto& [f, h] : hashes_) outs.push_back({{"file", f}, {"fnv1a64", h}});
    m["outputs"] = outs;
    std::ofstream f(dir_ / "manifest.json", std::ios::binary);
    if (!f) throw ConfigError("cannot write manifest");
    f << m.dump(2) << '\n';
    result.files.push_back(dir_ / "manifest.json");
  }

  ExperimentResult result;

 private:
  fs::path dir_;
  std::vector<std::pair<std::string, std::string>> hashes_;
};

csv::Table inputs_table(const std::vector<TrialRecord>& recs) {
  csv::Table t;
  t.header = {"trial", "channel_seed", "channel_hash", "init_hashes"};
  for (std::size_t i = 0; i < recs.size(); ++i) {
    std::string inits;
    for (const auto& h : recs[i].init_hashes) inits += (inits.empty() ? "" : ";") + h;
    t.add_row({csv::fmt(static_cast<std::uint64_t>(i)), hex64(recs[i].channel_seed),
               recs[i].channel_hash, inits});
  }
  return t;
}

void convergence_post(const ExperimentConfig& c, const csv::Table& summary,
                      const std::vector<TrialRecord>& recs, Writer& w) {
  // Pair runs by group; the finer epsilon is the reference row.
  std::vector<std::string> groups;
  for (const auto& r : c.runs)
    if (!r.group.empty() && std::find(groups.begin(), groups.end(), r.group) == groups.end())
      groups.push_back(r.group);
  const std::size_t last_snr = c.system.snr_db_points.size() - 1;
  const double top = c.system.snr_db_points.back();
  csv::Table t;
  t.header = {"group", "run", "epsilon"};
  for (double s : c.system.snr_db_points) t.header.push_back("sum_rate_" + csv::fmt(s) + "dB");
  t.header.insert(t.header.end(), {"last_trial_iterations", "mean_iterations", "convergence_speed"});
  const auto col_run = summary.column("run");
  const auto col_snr = summary.column("snr_db");
  const auto col_rate = summary.column("mean_sum_rate");
  const auto col_mean_it = summary.column("mean_iterations");
  auto rate_of = [&](const std::string& run, double snr) {
    for (const auto& row : summary.rows)
      if (row[col_run] == run && row[col_snr] == csv::fmt(snr)) return csv::parse_double(row[col_rate]);
    return std::nan("");
  };
  auto mean_it = [&](const std::string& run) {
    for (const auto& row : summary.rows)
      if (row[col_run] == run && row[col_snr] == csv::fmt(top)) return row[col_mean_it];
    return std::string("nan");
  };
  for (const auto& g : groups) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < c.runs.size(); ++i)
      if (c.runs[i].group == g) idx.push_back(i);
    if (idx.size() != 2) throw ConfigError("convergence step needs exactly two runs in group '" + g + "'");
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return c.runs[a].scheme.epsilon < c.runs[b].scheme.epsilon;
    });
    const int it_fine = recs.back().cells[idx[0]][last_snr].trace.iterations;
    const int it_coarse = recs.back().cells[idx[1]][last_snr].trace.iterations;
    const double conv = it_fine == it_coarse
                            ? std::nan("")
                            : (rate_of(c.runs[idx[0]].name, top) - rate_of(c.runs[idx[1]].name, top)) /
                                  static_cast<double>(it_fine - it_coarse);
    for (int k = 0; k < 2; ++k) {
      const auto& r = c.runs[idx[k]];
      std::vector<std::string> row{g, r.name, csv::fmt(r.scheme.epsilon)};
      for (double s : c.system.snr_db_points) row.push_back(csv::fmt(rate_of(r.name, s)));
      row.push_back(csv::fmt(k == 0 ? it_fine : it_coarse));
      row.push_back(mean_it(r.name));
      row.push_back(k == 0 ? csv::fmt(conv) : std::string());
      t.add_row(std::move(row));
    }
  }
  w.write("convergence.csv", t);
}

ExperimentResult run_metrics(const ExperimentConfig& c) {
  const auto recs = parallel_trials<TrialRecord>(static_cast<std::uint64_t>(c.mc_trials), c.threads,
                                                 [&](std::uint64_t t) { return run_trial(c, t); });
  Writer w(c.out_dir);
  const int K = c.system.users;
  const auto& snrs = c.system.snr_db_points;

  csv::Table streams;
  streams.header = {"run", "trial", "snr_db", "k", "l", "sinr", "rate", "variant", "power"};
  csv::Table traces;
  traces.header = {"run", "trial", "snr_db", "iter", "sum_rate", "sum_sinr", "leakage"};
  csv::Table pc;
  pc.header = {"run", "trial", "snr_db", "outer_iter", "inner_iter", "l1_change", "sup_distance",
               "fairness_gap", "update_order"};
  for (int k = 0; k < K; ++k) pc.header.push_back("gamma_" + std::to_string(k + 1));
  for (std::size_t r = 0; r < c.runs.size(); ++r)
    for (std::size_t t = 0; t < recs.size(); ++t)
      for (std::size_t s = 0; s < snrs.size(); ++s) {
        const Cell& cell = recs[t].cells[r][s];
        for (int k = 0; k < K; ++k)
          for (std::size_t l = 0; l < cell.metrics.sinr[k].size(); ++l)
            streams.add_row({c.runs[r].name, csv::fmt(static_cast<std::uint64_t>(t)), csv::fmt(snrs[s]),
                             csv::fmt(k + 1), csv::fmt(static_cast<int>(l + 1)),
                             csv::fmt(cell.metrics.sinr[k][l]), csv::fmt(cell.metrics.rate[k][l]),
                             to_string(cell.metrics.variant), csv::fmt(cell.powers.p[k][l])});
        for (std::size_t n = 0; n < cell.trace.sum_rate.size(); ++n)
          traces.add_row({c.runs[r].name, csv::fmt(static_cast<std::uint64_t>(t)), csv::fmt(snrs[s]),
                          csv::fmt(static_cast<int>(n + 1)), csv::fmt(cell.trace.sum_rate[n]),
                          csv::fmt(cell.trace.sum_sinr[n]), csv::fmt(cell.trace.leakage[n])});
        for (const auto& row : cell.pc_rows) pc.add_row(row);
      }
  w.write("streams.csv", streams);

  std::vector<std::pair<int, int>> pairs;
  for (auto p : c.ratio_pairs)
    if (has_streams(c.system, p.first, p.second)) pairs.push_back(p);
  csv::Table summary;
  summary.header = {"run", "snr_db", "trials", "mean_sum_rate", "mean_sum_sinr", "mean_fairness_gap"};
  for (auto [i, j] : pairs) {
    summary.header.push_back(ratio_col(i, j));
    summary.header.push_back(ratio_col(i, j) + "_inf_count");
  }
  summary.header.insert(summary.header.end(), {"mean_iterations", "last_trial_iterations", "cap_hits",
                                               "mean_outer_iterations", "mean_inner_iterations",
                                               "sequential_fallbacks", "pc_unconverged"});
  csv::Table means;
  means.header = {"run", "snr_db", "k", "l", "mean_sinr", "mean_rate"};
  const double n = static_cast<double>(recs.size());
  for (std::size_t r = 0; r < c.runs.size(); ++r)
    for (std::size_t s = 0; s < snrs.size(); ++s) {
      double rate = 0, ssinr = 0, gap = 0, iters = 0, outer = 0, inner = 0;
      int caps = 0, fallbacks = 0, unconverged = 0;
      std::vector<double> ratio(pairs.size(), 0.0);
      std::vector<int> infs(pairs.size(), 0);
      StreamValues msinr, mrate;
      for (const auto& rec : recs) {
        const Cell& cell = rec.cells[r][s];
        rate += sum_rate(cell.metrics);
        ssinr += sum_sinr(cell.metrics);
        gap += fairness_gap(cell.metrics);
        iters += cell.trace.iterations;
        caps += cell.trace.hit_cap ? 1 : 0;
        outer += cell.outer;
        inner += cell.inner;
        fallbacks += cell.fallbacks;
        unconverged += cell.pc_unconverged ? 1 : 0;
        for (std::size_t p = 0; p < pairs.size(); ++p) {
          const RatioStat st = sinr_ratio_stat(cell.metrics, pairs[p].first, pairs[p].second);
          ratio[p] += st.value;
          infs[p] += st.infinite ? 1 : 0;
        }
        if (msinr.empty()) {
          msinr = cell.metrics.sinr;
          mrate = cell.metrics.rate;
        } else {
          for (int k = 0; k < K; ++k)
            for (std::size_t l = 0; l < msinr[k].size(); ++l) {
              msinr[k][l] += cell.metrics.sinr[k][l];
              mrate[k][l] += cell.metrics.rate[k][l];
            }
        }
      }
      std::vector<std::string> row{c.runs[r].name, csv::fmt(snrs[s]), csv::fmt(static_cast<int>(recs.size())),
                                   csv::fmt(rate / n), csv::fmt(ssinr / n), csv::fmt(gap / n)};
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        row.push_back(csv::fmt(ratio[p] / n));
        row.push_back(csv::fmt(infs[p]));
      }
      row.insert(row.end(), {csv::fmt(iters / n), csv::fmt(recs.back().cells[r][s].trace.iterations),
                             csv::fmt(caps), csv::fmt(outer / n), csv::fmt(inner / n),
                             csv::fmt(fallbacks), csv::fmt(unconverged)});
      summary.add_row(std::move(row));
      for (int k = 0; k < K; ++k)
        for (std::size_t l = 0; l < msinr[k].size(); ++l)
          means.add_row({c.runs[r].name, csv::fmt(snrs[s]), csv::fmt(k + 1),
                         csv::fmt(static_cast<int>(l + 1)), csv::fmt(msinr[k][l] / n),
                         csv::fmt(mrate[k][l] / n)});
    }
  w.write("summary.csv", summary);
  w.write("stream_means.csv", means);
  if (c.write_traces) w.write("traces.csv", traces);
  if (c.write_pc_trace) w.write("pc_trace.csv", pc);
  w.write("inputs.csv", inputs_table(recs));

  for (const auto& step : c.post) {
    if (step == "convergence") {
      convergence_post(c, summary, recs, w);
    } else if (step.rfind("normalize:", 0) == 0) {
      w.write("normalized.csv", normalize_report(summary, summary, step.substr(10), &w.result.warnings));
    }
  }
  w.manifest(c);
  return w.result;
}

ExperimentResult run_ber(const ExperimentConfig& c) {
  if (!c.load_inputs.empty() || !c.save_inputs.empty())
    throw ConfigError("BER sweeps draw fresh channels per trial; input persistence is not supported");
  Writer w(c.out_dir);
  csv::Table ber;
  ber.header = {"run", "snr_db", "with_pc", "k", "l", "bit_errors", "bits", "ber", "flagged"};
  csv::Table summary;
  summary.header = {"run", "snr_db", "with_pc", "trials", "total_errors", "total_bits",
                    "system_avg_ber", "stream_stddev", "mean_sum_rate", "mean_fairness_gap",
                    "pc_unconverged"};
  csv::Table means;
  means.header = {"run", "snr_db", "k", "l", "mean_sinr"};
  for (const auto& r : c.runs) {
    BerSweepOptions o;
    o.bits_per_stream = c.ber.bits_per_stream;
    o.detector = c.ber.detector;
    o.threads = c.threads;
    o.dpca_epsilon = c.dpca_epsilon;
    const auto points = ber_sweep(c.system, r.scheme, r.power_control, c.ber.schedule, o);
    const std::string pc = r.power_control ? "1" : "0";
    for (const auto& p : points) {
      const auto rates = p.report.ber();
      for (std::size_t k = 0; k < rates.size(); ++k)
        for (std::size_t l = 0; l < rates[k].size(); ++l)
          ber.add_row({r.name, csv::fmt(p.snr_db), pc, csv::fmt(static_cast<int>(k + 1)),
                       csv::fmt(static_cast<int>(l + 1)), csv::fmt(p.report.bit_errors[k][l]),
                       csv::fmt(p.report.bits_simulated), csv::fmt(rates[k][l]),
                       p.report.flagged[k][l] ? "1" : "0"});
      ber.add_row({r.name, csv::fmt(p.snr_db), pc, "all", "all", csv::fmt(p.report.total_errors()),
                   csv::fmt(p.report.total_bits()), csv::fmt(p.report.system_avg_ber()), ""});
      summary.add_row({r.name, csv::fmt(p.snr_db), pc, csv::fmt(p.trials),
                       csv::fmt(p.report.total_errors()), csv::fmt(p.report.total_bits()),
                       csv::fmt(p.report.system_avg_ber()), csv::fmt(p.report.stream_stddev()),
                       csv::fmt(p.mean_sum_rate), csv::fmt(p.mean_fairness_gap),
                       csv::fmt(p.pc_unconverged)});
      for (std::size_t k = 0; k < p.mean_sinr.size(); ++k)
        for (std::size_t l = 0; l < p.mean_sinr[k].size(); ++l)
          means.add_row({r.name, csv::fmt(p.snr_db), csv::fmt(static_cast<int>(k + 1)),
                         csv::fmt(static_cast<int>(l + 1)), csv::fmt(p.mean_sinr[k][l])});
    }
  }
  w.write("ber.csv", ber);
  w.write("ber_summary.csv", summary);
  w.write("ber_stream_means.csv", means);
  w.manifest(c);
  return w.result;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  return config.mode == ExperimentMode::Ber ? run_ber(config) : run_metrics(config);
}

ExperimentResult generate_inputs(const ExperimentConfig& config) {
  config.validate();
  ExperimentConfig c = config;
  if (c.save_inputs.empty()) c.save_inputs = config.out_dir;
  c.load_inputs.clear();
  std::vector<TrialRecord> recs = parallel_trials<TrialRecord>(
      static_cast<std::uint64_t>(c.mc_trials), c.threads, [&](std::uint64_t t) {
        const TrialInputs in = trial_inputs(c, t);
        TrialRecord r;
        r.channel_seed = in.ch.seed;
        r.channel_hash = hex64(channel_hash(in.ch));
        for (const auto& u : in.inits) r.init_hashes.push_back(hex64(filters_hash(u)));
        return r;
      });
  Writer w(c.out_dir);
  w.write("inputs.csv", inputs_table(recs));
  w.manifest(c);
  return w.result;
}

// ------------------------------------------------------------ reporting ---

namespace {

struct ResultDir {
  fs::path dir;
  ojson manifest;
  csv::Table streams;
  std::map<std::string, std::string> channel_hash;  // trial -> hash
};

ResultDir load_result_dir(const fs::path& dir) {
  ResultDir r;
  r.dir = dir;
  std::ifstream f(dir / "manifest.json", std::ios::binary);
  if (!f) throw ConfigError("no manifest.json in " + dir.string());
  try {
    r.manifest = ojson::parse(f);
  } catch (const ojson::exception& e) {
    throw ConfigError("invalid manifest in " + dir.string() + ": " + e.what());
  }
  r.streams = csv::read(dir / "streams.csv");
  if (fs::exists(dir / "inputs.csv")) {
    const auto in = csv::read(dir / "inputs.csv");
    const auto ct = in.column("trial");
    const auto ch = in.column("channel_hash");
    for (const auto& row : in.rows) r.channel_hash[row[ct]] = row[ch];
  }
  return r;
}

}  // namespace

csv::Table compare_schemes(const std::vector<fs::path>& result_dirs, std::vector<std::string>* warnings) {
  if (result_dirs.empty()) throw ConfigError("compare needs at least one result directory");
  std::vector<ResultDir> dirs;
  for (const auto& d : result_dirs) dirs.push_back(load_result_dir(d));
  const auto& ref = dirs.front().manifest.at("config");
  const SystemConfig ref_sys = system_from_json(ref.at("system"), SystemConfig{});
  for (std::size_t i = 1; i < dirs.size(); ++i) {
    const auto& cfg = dirs[i].manifest.at("config");
    const SystemConfig sys = system_from_json(cfg.at("system"), SystemConfig{});
    if (sys.master_seed != ref_sys.master_seed)
      throw ConfigError("cannot pair " + dirs[i].dir.string() + " with " + dirs[0].dir.string() +
                        ": master seeds differ (" + std::to_string(sys.master_seed) + " vs " +
                        std::to_string(ref_sys.master_seed) +
                        "), so the schemes did not see the same channels");
    if (!sys.same_dimensions(ref_sys))
      throw ConfigError("cannot pair " + dirs[i].dir.string() + ": system " + sys.label() +
                        " differs from " + ref_sys.label());
    for (const auto& [trial, hash] : dirs[i].channel_hash) {
      auto it = dirs[0].channel_hash.find(trial);
      if (it != dirs[0].channel_hash.end() && it->second != hash)
        throw ConfigError("channel hash of trial " + trial + " differs between " +
                          dirs[0].dir.string() + " and " + dirs[i].dir.string());
    }
  }

  using Key = std::tuple<std::uint64_t, double, int, int>;
  std::vector<std::string> labels;
  std::vector<std::map<Key, std::string>> columns;
  std::vector<std::set<double>> snr_sets;
  for (const auto& d : dirs) {
    const auto& t = d.streams;
    const auto cr = t.column("run"), ct = t.column("trial"), cs = t.column("snr_db"),
               ck = t.column("k"), cl = t.column("l"), cv = t.column("sinr");
    std::map<std::string, std::size_t> by_run;
    std::set<double> snrs;
    for (const auto& row : t.rows) {
      auto it = by_run.find(row[cr]);
      if (it == by_run.end()) {
        std::string label = row[cr];
        if (std::find(labels.begin(), labels.end(), label) != labels.end())
          label = d.dir.filename().string() + ":" + label;
        labels.push_back(label);
        columns.emplace_back();
        it = by_run.emplace(row[cr], columns.size() - 1).first;
      }
      const double snr = csv::parse_double(row[cs]);
      snrs.insert(snr);
      columns[it->second][Key{std::stoull(row[ct]), snr, std::stoi(row[ck]), std::stoi(row[cl])}] = row[cv];
    }
    snr_sets.push_back(std::move(snrs));
  }
  std::set<double> common = snr_sets.front();
  for (const auto& s : snr_sets) {
    std::set<double> keep;
    for (double x : common)
      if (s.count(x)) keep.insert(x);
    common = std::move(keep);
  }
  csv::Table out;
  out.header = {"trial", "snr_db", "k", "l"};
  for (const auto& l : labels) out.header.push_back("sinr[" + l + "]");
  if (common.empty()) {
    if (warnings) warnings->push_back("compare: the inputs share no SNR points; output is empty");
    return out;
  }
  for (const auto& [key, v] : columns.front()) {
    if (!common.count(std::get<1>(key))) continue;
    std::vector<std::string> row{csv::fmt(std::get<0>(key)), csv::fmt(std::get<1>(key)),
                                 csv::fmt(std::get<2>(key)), csv::fmt(std::get<3>(key)), v};
    bool complete = true;
    for (std::size_t c = 1; c < columns.size() && complete; ++c) {
      auto it = columns[c].find(key);
      if (it == columns[c].end()) complete = false;
      else row.push_back(it->second);
    }
    if (complete) out.add_row(std::move(row));
  }
  return out;
}

csv::Table normalize_report(const csv::Table& report, const csv::Table& baseline,
                            const std::string& baseline_run, std::vector<std::string>* warnings) {
  const auto br = baseline.column("run"), bs = baseline.column("snr_db"),
             bv = baseline.column("mean_sum_sinr");
  std::map<double, double> base;
  for (const auto& row : baseline.rows)
    if (row[br] == baseline_run) base[csv::parse_double(row[bs])] = csv::parse_double(row[bv]);
  if (base.empty()) throw ConfigError("baseline run '" + baseline_run + "' not found");
  const auto rr = report.column("run"), rs = report.column("snr_db"), rv = report.column("mean_sum_sinr");
  csv::Table out;
  out.header = {"run", "snr_db", "normalized_sum_sinr", "flag"};
  for (const auto& row : report.rows) {
    const double snr = csv::parse_double(row[rs]);
    auto it = base.find(snr);
    if (it == base.end()) {
      if (warnings)
        warnings->push_back("normalize: baseline has no " + row[rs] + " dB point; row of run '" +
                            row[rr] + "' skipped");
      continue;
    }
    if (it->second == 0.0) {
      out.add_row({row[rr], row[rs], "nan", "zero_baseline"});
      continue;
    }
    out.add_row({row[rr], row[rs], csv::fmt(csv::parse_double(row[rv]) / it->second), ""});
  }
  return out;
}

}  // namespace icsim
