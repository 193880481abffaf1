// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

#include "degf/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "degf/http_backend.hpp"
#include "degf/metrics.hpp"
#include "degf/synthetic_backend.hpp"
#include "degf/trace_io.hpp"

#ifndef DEGF_VERSION
#define DEGF_VERSION "0.0.0+unknown"
#endif
#ifndef DEGF_DATA_DIR
#define DEGF_DATA_DIR "data"
#endif

namespace degf::cli {
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::string_view kManifestSchema = "degf-manifest/1";

/// Hyperparameter flags shared by decode and bench, in display order.
const std::vector<std::pair<std::string, std::string>>& hyper_flags() {
  static const std::vector<std::pair<std::string, std::string>> flags = {
      {"alpha1", "complementary weight"},
      {"alpha2", "contrastive weight"},
      {"gamma", "divergence threshold in [0, 1]"},
      {"beta", "plausibility cutoff in [0, 1]"},
      {"vcd-alpha", "vcd contrast weight"},
      {"m3id-lambda", "m3id decay rate"},
      {"ritual-kappa", "ritual augmentation weight"},
      {"temperature", "softmax temperature"},
      {"max-new-tokens", "cap on the final response"},
      {"initial-max-tokens", "cap on the initial response"},
      {"seed", "sampling seed"},
      {"sampling", "multinomial or greedy"},
      {"diffusion-steps", "generator denoising steps"},
      {"generator-seed", "fixed generator seed (default: derived per instance)"},
      {"vcd-noise-steps", "forward-noise steps for the distorted image"},
      {"ritual-augment", "augmentation selector"},
  };
  return flags;
}

std::string normalize_key(std::string_view key) {
  std::string k(key);
  std::replace(k.begin(), k.end(), '_', '-');
  return k;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(std::string_view key, std::string_view value) {
  const std::string v = trim(value);
  std::size_t used = 0;
  double d = 0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size()) {
    throw ConfigError("invalid value for --" + std::string(key) + ": '" + std::string(value) + "'");
  }
  return d;
}

long long parse_int(std::string_view key, std::string_view value) {
  const std::string v = trim(value);
  std::size_t used = 0;
  long long n = 0;
  try {
    n = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size()) {
    throw ConfigError("invalid integer for --" + std::string(key) + ": '" + std::string(value) + "'");
  }
  return n;
}

std::uint64_t parse_u64(std::string_view key, std::string_view value) {
  const std::string v = trim(value);
  std::size_t used = 0;
  unsigned long long n = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    n = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size()) {
    throw ConfigError("invalid unsigned integer for --" + std::string(key) + ": '" + std::string(value) + "'");
  }
  return n;
}

int parse_small_int(std::string_view key, std::string_view value) {
  const long long n = parse_int(key, value);
  if (n < INT32_MIN || n > INT32_MAX) throw ConfigError("--" + std::string(key) + " out of range");
  return static_cast<int>(n);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out << content;
    if (!out) throw ConfigError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

Json timings_json(const PhaseTimings& t) {
  return Json{{"initial_s", t.initial_s}, {"generate_s", t.generate_s}, {"decode_s", t.decode_s}};
}

struct Manifest {
  std::string command;
  Json config = Json::object();
  std::string backend;
  std::vector<std::string> datasets;
  std::string output_dir;
  std::vector<std::string> artifacts;
  Json timings = Json::object();
  std::string status = "complete";
  std::string error;
  std::string run_key;

  Json to_json() const {
    Json j;
    j["schema"] = kManifestSchema;
    j["command"] = command;
    j["version"] = DEGF_VERSION;
    j["config"] = config;
    j["backend"] = backend;
    j["datasets"] = datasets;
    j["output_dir"] = output_dir;
    j["artifacts"] = artifacts;
    j["timings"] = timings;
    j["status"] = status;
    if (!error.empty()) j["error"] = error;
    if (!run_key.empty()) j["run_key"] = run_key;
    return j;
  }

  void write(const fs::path& dir) {
    artifacts.push_back((dir / "manifest.json").string());
    write_file(dir / "manifest.json", dump_json_pretty(to_json()) + "\n");
  }
};

enum class TimingMode { automatic, on, off };

TimingMode parse_timing_mode(std::string_view s) {
  if (s == "auto") return TimingMode::automatic;
  if (s == "on") return TimingMode::on;
  if (s == "off") return TimingMode::off;
  throw ConfigError("--timings must be auto, on or off");
}

bool include_timings(TimingMode mode, const ModelBackend& backend) {
  if (mode == TimingMode::automatic) return !backend.deterministic();
  return mode == TimingMode::on;
}

/// Hyperparameter flag values as given on the command line.
struct HyperArgs {
  std::map<std::string, std::string> values;
  std::string decoder;
  std::string config_file;

  void attach(CLI::App& app, bool decoder_required) {
    auto* dec = app.add_option("--decoder", decoder, "regular, degf, vcd, m3id or ritual");
    if (decoder_required) dec->required();
    app.add_option("--config", config_file, "key=value file; flags take precedence");
    for (const auto& [name, help] : hyper_flags()) app.add_option("--" + name, values[name], help);
  }

  std::vector<std::string> given(const CLI::App& app) const {
    std::vector<std::string> out;
    for (const auto& [name, help] : hyper_flags()) {
      if (app.count("--" + name) > 0) out.push_back(name);
    }
    return out;
  }
};

/// Defaults, then the config file, then explicit flags. Returns the flags
/// (or file keys) that were set explicitly.
std::set<std::string> build_config(const CLI::App& app, const HyperArgs& args, DecodeConfig& cfg,
                                   const std::string& skip = {}) {
  std::set<std::string> explicit_keys;
  if (!args.config_file.empty()) {
    for (const auto& [k, v] : read_config_file(args.config_file)) {
      apply_setting(cfg, k, v);
      explicit_keys.insert(normalize_key(k));
    }
  }
  if (app.count("--decoder") > 0) cfg.decoder = parse_decoder(args.decoder);
  for (const auto& name : args.given(app)) {
    explicit_keys.insert(name);
    if (name != skip) apply_setting(cfg, name, args.values.at(name));
  }
  return explicit_keys;
}

// ---------------------------------------------------------------------------
// decode

struct DecodeArgs {
  HyperArgs hyper;
  std::string backend;
  std::string image = "image-0";
  std::string prompt;
  std::string kind = "open_caption";
  std::string instance_id = "0";
  std::string out = "degf-decode";
  std::string timings = "auto";
  bool resume = false;
};

int cmd_decode(const CLI::App& app, const DecodeArgs& a, std::ostream& out, std::ostream& err) {
  DecodeConfig cfg;
  build_config(app, a.hyper, cfg);
  cfg.validate();
  const BenchmarkKind kind = parse_benchmark_kind(a.kind);
  const TimingMode timing_mode = parse_timing_mode(a.timings);
  const std::string prompt = a.prompt.empty() ? std::string(kCaptionPrompt) : a.prompt;

  const fs::path dir(a.out);
  fs::create_directories(dir);
  const fs::path trace_path = dir / "trace.jsonl";

  if (a.resume && fs::exists(trace_path)) {
    for (const auto& t : read_traces(trace_path)) {
      if (t.instance_id == a.instance_id && t.complete && t.config == cfg) {
        out << t.final_text << "\n";
        return kExitOk;
      }
    }
  }

  Manifest manifest;
  manifest.command = "decode";
  manifest.config = config_to_json(cfg);
  manifest.output_dir = dir.string();

  const BackendHandle backend = make_backend(a.backend);
  manifest.backend = backend.model->describe();

  DecodeRequest req{a.image, prompt, kind, a.instance_id};
  DecodeTrace trace;
  try {
    trace = run_session(*backend.model, backend.generator.get(), req, cfg);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    manifest.status = "incomplete";
    manifest.error = e.what();
    manifest.write(dir);
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }

  const bool with_timings = include_timings(timing_mode, *backend.model);
  write_file(trace_path, trace_to_jsonl(trace, with_timings) + "\n");
  manifest.artifacts.push_back(trace_path.string());
  manifest.timings = timings_json(trace.timings);
  if (!trace.complete) {
    manifest.status = "incomplete";
    manifest.error = trace.error;
  }
  manifest.write(dir);

  if (!trace.complete) {
    err << "error: " << trace.error << " (partial trace written to " << trace_path.string() << ")\n";
    return kExitRuntime;
  }
  out << trace.final_text << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  HyperArgs hyper;
  std::string backend;
  std::string benchmark;
  std::string dataset;
  std::string seeds;
  std::size_t parallel = 1;
  bool resume = false;
  std::string truth;
  std::string synonyms = std::string(DEGF_DATA_DIR) + "/coco_synonyms.tsv";
  std::string out = "runs";
  std::string timings = "auto";
};

struct Sweep {
  std::string param;                // empty when not sweeping
  std::vector<std::string> values;  // one entry ("") when not sweeping
};

Sweep find_sweep(const CLI::App& app, const HyperArgs& hyper) {
  Sweep sweep;
  for (const auto& name : hyper.given(app)) {
    const auto& raw = hyper.values.at(name);
    if (raw.find(',') == std::string::npos) continue;
    if (!sweep.param.empty()) {
      throw ConfigError("only one parameter can be swept at a time (got --" + sweep.param + " and --" + name + ")");
    }
    if (name == "seed") throw ConfigError("use --seeds to repeat over seeds");
    sweep.param = name;
    sweep.values = split_list(raw);
  }
  if (sweep.param.empty()) sweep.values = {""};
  return sweep;
}

struct InstanceResult {
  std::optional<BenchmarkRecord> record;
  DecodeTrace trace;
};

/// Keeps the last trace per instance id, a complete one over an incomplete one.
void keep_trace(std::map<std::string, DecodeTrace>& traces, DecodeTrace t) {
  auto it = traces.find(t.instance_id);
  if (it == traces.end() || t.complete || !it->second.complete) traces[t.instance_id] = std::move(t);
}

struct UnitOutcome {
  ScoreSet scores;
  bool complete = true;
  std::size_t failures = 0;
  std::string first_error;
  PhaseTimings timings;
};

ScoreSet score(Benchmark bench, const std::vector<BenchmarkRecord>& records, const GroundTruth& truth,
               const SynonymTable* synonyms) {
  switch (bench) {
    case Benchmark::pope: return to_score_set(pope_scores(records));
    case Benchmark::chair: return to_score_set(chair_scores(records, truth, *synonyms));
    case Benchmark::mme: return to_score_set(mme_score(records));
  }
  throw ConfigError("unknown benchmark");
}

/// One (sweep value, seed) unit: decode every instance, persist records and
/// traces in `dir`, score the completed set.
UnitOutcome run_unit(const BackendHandle& backend, Benchmark bench, const std::vector<BenchmarkRecord>& dataset,
                     const DecodeConfig& cfg, std::uint64_t run_seed, const BenchArgs& a, bool with_timings,
                     const fs::path& dir, const GroundTruth& truth, const SynonymTable* synonyms,
                     Manifest& manifest) {
  fs::create_directories(dir);
  const fs::path records_path = dir / "records.jsonl";
  const fs::path traces_path = dir / "traces.jsonl";

  std::map<std::string, BenchmarkRecord> done;
  std::map<std::string, DecodeTrace> traces;
  if (a.resume) {
    if (fs::exists(records_path)) {
      for (auto& r : read_records(records_path)) done[r.instance_id] = std::move(r);
    }
    if (fs::exists(traces_path)) {
      for (auto& t : read_traces(traces_path)) keep_trace(traces, std::move(t));
    }
  } else {
    std::ofstream(records_path, std::ios::trunc);
    std::ofstream(traces_path, std::ios::trunc);
  }

  std::vector<const BenchmarkRecord*> todo;
  for (const auto& r : dataset) {
    if (!done.count(r.instance_id)) todo.push_back(&r);
  }

  std::mutex io_mu;
  std::ofstream rec_out(records_path, std::ios::app);
  std::ofstream trace_out(traces_path, std::ios::app);
  std::atomic<std::size_t> next{0};
  std::exception_ptr fatal;
  UnitOutcome outcome;

  const auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= todo.size()) return;
      const BenchmarkRecord& in = *todo[i];
      try {
        DecodeConfig icfg = cfg;
        icfg.seed = derive_instance_seed(run_seed, in.instance_id);
        const BenchmarkKind kind = kind_of(bench);
        const std::string prompt = in.question.empty() ? std::string(kCaptionPrompt) : in.question;
        DecodeTrace t = run_session(*backend.model, backend.generator.get(), {in.image, prompt, kind, in.instance_id},
                                    icfg);
        std::lock_guard lock(io_mu);
        trace_out << trace_to_jsonl(t, with_timings) << "\n" << std::flush;
        outcome.timings.initial_s += t.timings.initial_s;
        outcome.timings.generate_s += t.timings.generate_s;
        outcome.timings.decode_s += t.timings.decode_s;
        if (t.complete) {
          BenchmarkRecord r = in;
          r.response = t.final_text;
          r.trace = t.instance_id;
          rec_out << dump_json(record_to_json(r)) << "\n" << std::flush;
          done[r.instance_id] = std::move(r);
        } else {
          ++outcome.failures;
          if (outcome.first_error.empty()) outcome.first_error = in.instance_id + ": " + t.error;
        }
        keep_trace(traces, std::move(t));
      } catch (...) {
        std::lock_guard lock(io_mu);
        if (!fatal) fatal = std::current_exception();
        next.store(todo.size());
        return;
      }
    }
  };

  const std::size_t n_threads = std::max<std::size_t>(1, std::min(a.parallel, todo.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  rec_out.close();
  trace_out.close();
  if (fatal) std::rethrow_exception(fatal);

  // Rewrite both files sorted by instance id.
  std::string rec_text, trace_text;
  std::vector<BenchmarkRecord> records;
  for (const auto& [id, r] : done) {
    rec_text += dump_json(record_to_json(r)) + "\n";
    records.push_back(r);
  }
  for (const auto& [id, t] : traces) trace_text += trace_to_jsonl(t, with_timings) + "\n";
  write_file(records_path, rec_text);
  write_file(traces_path, trace_text);
  manifest.artifacts.push_back(records_path.string());
  manifest.artifacts.push_back(traces_path.string());

  if (outcome.failures > 0) {
    outcome.complete = false;
    return outcome;
  }
  outcome.scores = score(bench, records, truth, synonyms);
  return outcome;
}

int cmd_bench(const CLI::App& app, const BenchArgs& a, std::ostream& out, std::ostream& err) {
  const auto started = Clock::now();
  const std::vector<BenchmarkRecord> dataset = read_records(a.dataset);
  if (dataset.empty()) throw ConfigError("dataset " + a.dataset + " has no records");

  Benchmark bench = dataset.front().benchmark;
  if (!a.benchmark.empty()) bench = parse_benchmark(a.benchmark);
  {
    std::set<std::string> ids;
    for (const auto& r : dataset) {
      if (r.benchmark != bench) {
        throw ConfigError(r.instance_id + ": record is " + std::string(to_string(r.benchmark)) + ", run is " +
                          std::string(to_string(bench)));
      }
      if (!ids.insert(r.instance_id).second) throw ConfigError("duplicate instance_id " + r.instance_id);
    }
  }

  const Sweep sweep = find_sweep(app, a.hyper);
  DecodeConfig base;
  const auto explicit_keys = build_config(app, a.hyper, base, sweep.param);
  if (bench == Benchmark::chair && !explicit_keys.count("beta")) base.beta = DecodeConfig::kCaptionBeta;

  std::vector<std::uint64_t> seeds;
  if (!a.seeds.empty()) {
    for (const auto& s : split_list(a.seeds)) seeds.push_back(parse_u64("seeds", s));
  } else {
    seeds.push_back(base.seed);
  }
  if (a.parallel == 0) throw ConfigError("--parallel must be positive");

  std::vector<DecodeConfig> configs;
  for (const auto& v : sweep.values) {
    DecodeConfig cfg = base;
    if (!sweep.param.empty()) apply_setting(cfg, sweep.param, v);
    cfg.validate();
    configs.push_back(cfg);
  }

  GroundTruth truth;
  std::optional<SynonymTable> synonyms;
  if (bench == Benchmark::chair) {
    if (!a.truth.empty()) truth = load_ground_truth(a.truth);
    synonyms = SynonymTable::load(a.synonyms);
  }

  const BackendHandle backend = make_backend(a.backend);
  backend.model->vocabulary();  // health probe; also settles deterministic()
  const bool with_timings = include_timings(parse_timing_mode(a.timings), *backend.model);

  // Run key: configuration, seeds, dataset bytes, auxiliary inputs and code version.
  Json key_doc;
  key_doc["benchmark"] = to_string(bench);
  key_doc["backend"] = backend.model->describe();
  key_doc["sweep_param"] = sweep.param;
  Json cfgs = Json::array();
  for (const auto& c : configs) cfgs.push_back(config_to_json(c));
  key_doc["configs"] = cfgs;
  key_doc["seeds"] = seeds;
  key_doc["version"] = DEGF_VERSION;
  std::uint64_t key = stable_hash(dump_json(key_doc), 0);
  key = hash_combine(key, stable_hash(read_file(a.dataset), 1));
  if (!a.truth.empty()) key = hash_combine(key, stable_hash(read_file(a.truth), 2));
  if (synonyms) key = hash_combine(key, stable_hash(read_file(a.synonyms), 3));
  const std::string run_key = hex16(key);

  const fs::path dir = fs::path(a.out) / (std::string(to_string(bench)) + "-" + std::string(to_string(base.decoder)) +
                                          "-" + run_key);
  fs::create_directories(dir);

  Manifest manifest;
  manifest.command = "bench";
  manifest.config = config_to_json(base);
  if (!sweep.param.empty()) manifest.config["sweep"] = {{"param", sweep.param}, {"values", sweep.values}};
  manifest.config["seeds"] = seeds;
  manifest.backend = backend.model->describe();
  manifest.datasets.push_back(a.dataset);
  if (!a.truth.empty()) manifest.datasets.push_back(a.truth);
  if (synonyms) manifest.datasets.push_back(a.synonyms);
  manifest.output_dir = dir.string();
  manifest.run_key = run_key;

  MetricReport report;
  report.benchmark = std::string(to_string(bench));
  report.decoder = std::string(to_string(base.decoder));
  report.backend = backend.model->describe();
  report.config_hash = run_key;
  report.seeds = seeds;

  PhaseTimings totals;
  std::size_t failures = 0;
  std::string first_error;
  for (std::size_t vi = 0; vi < configs.size(); ++vi) {
    std::vector<ScoreSet> per_seed;
    for (const auto seed : seeds) {
      const fs::path unit_dir = dir / ("row" + std::to_string(vi)) / ("seed-" + std::to_string(seed));
      UnitOutcome u;
      try {
        u = run_unit(backend, bench, dataset, configs[vi], seed, a, with_timings, unit_dir, truth,
                     synonyms ? &*synonyms : nullptr, manifest);
      } catch (const Error& e) {
        manifest.status = "incomplete";
        manifest.error = e.what();
        manifest.timings = timings_json(totals);
        manifest.write(dir);
        throw;
      }
      totals.initial_s += u.timings.initial_s;
      totals.generate_s += u.timings.generate_s;
      totals.decode_s += u.timings.decode_s;
      if (!u.complete) {
        failures += u.failures;
        if (first_error.empty()) first_error = u.first_error;
        continue;
      }
      per_seed.push_back(std::move(u.scores));
    }
    if (per_seed.size() == seeds.size()) report.rows.push_back(aggregate(sweep.param, sweep.values[vi], per_seed));
  }

  manifest.timings = timings_json(totals);
  manifest.timings["wall_s"] = std::chrono::duration<double>(Clock::now() - started).count();
  if (failures > 0) {
    manifest.status = "incomplete";
    manifest.error = std::to_string(failures) + " instance(s) failed; first: " + first_error;
    manifest.write(dir);
    err << "error: " << manifest.error << "\n"
        << "rerun with --resume to retry the failed instances (run directory " << dir.string() << ")\n";
    return kExitRuntime;
  }

  const fs::path report_path = dir / "report.json";
  write_file(report_path, dump_json_pretty(report_to_json(report)) + "\n");
  manifest.artifacts.push_back(report_path.string());
  manifest.write(dir);
  out << format_report_table(report);
  out << "run directory: " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
  std::vector<std::string> traces;
  std::string labels;
  std::string out = "degf-analysis";
  std::size_t bins = 20;
  std::size_t similarity_bins = 5;
};

struct Labels {
  std::map<std::string, std::set<int>> hallucinated_steps;
  std::set<std::string> all_hallucinated;
  std::set<std::string> known;
  std::vector<ResponsePoint> points;
};

Labels read_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open labels " + path.string());
  Labels labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    try {
      const Json j = Json::parse(line);
      const auto id = j.at("instance_id").get<std::string>();
      labels.known.insert(id);
      if (auto it = j.find("hallucinated_steps"); it != j.end()) {
        for (const auto& t : *it) labels.hallucinated_steps[id].insert(t.get<int>());
      }
      if (j.value("hallucinated", false)) labels.all_hallucinated.insert(id);
      if (j.contains("similarity") && j.contains("score")) {
        labels.points.push_back({j.at("similarity").get<double>(), j.at("score").get<double>()});
      }
    } catch (const Json::exception& e) {
      throw ConfigError(where + e.what());
    }
  }
  return labels;
}

std::string svg_bars(const std::string& title, const std::vector<std::string>& categories,
                     const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  static const char* kColors[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52"};
  const double width = 640, height = 360, left = 50, right = 20, top = 40, bottom = 50;
  double ymax = 0;
  for (const auto& [name, ys] : series) {
    for (double y : ys) ymax = std::max(ymax, y);
  }
  if (ymax <= 0) ymax = 1;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  const double group_w = categories.empty() ? plot_w : plot_w / static_cast<double>(categories.size());
  const double bar_w = group_w * 0.8 / static_cast<double>(std::max<std::size_t>(1, series.size()));

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  s << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\""
    << top + plot_h << "\" stroke=\"black\"/>\n";
  s << "<text x=\"" << left - 5 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\" font-size=\"10\">"
    << format_value(ymax) << "</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& [name, ys] = series[si];
    for (std::size_t c = 0; c < ys.size() && c < categories.size(); ++c) {
      const double h = ys[c] / ymax * plot_h;
      const double x = left + group_w * static_cast<double>(c) + group_w * 0.1 + bar_w * static_cast<double>(si);
      s << "<rect x=\"" << x << "\" y=\"" << top + plot_h - h << "\" width=\"" << bar_w << "\" height=\"" << h
        << "\" fill=\"" << kColors[si % 4] << "\"/>\n";
    }
    s << "<text x=\"" << left + 10 << "\" y=\"" << top + 14 * static_cast<double>(si + 1) << "\" font-size=\"11\" fill=\""
      << kColors[si % 4] << "\">" << name << "</text>\n";
  }
  const std::size_t stride = std::max<std::size_t>(1, categories.size() / 10);
  for (std::size_t c = 0; c < categories.size(); c += stride) {
    s << "<text x=\"" << left + group_w * (static_cast<double>(c) + 0.5) << "\" y=\"" << top + plot_h + 15
      << "\" text-anchor=\"middle\" font-size=\"9\">" << categories[c] << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out, std::ostream& err) {
  if (a.traces.empty()) {
    err << "error: no trace files given\n";
    return kExitUsage;
  }
  std::vector<DecodeTrace> traces;
  for (const auto& p : a.traces) {
    auto ts = read_traces(p);
    traces.insert(traces.end(), std::make_move_iterator(ts.begin()), std::make_move_iterator(ts.end()));
  }
  if (traces.empty()) {
    err << "error: the trace files contain no traces\n";
    return kExitUsage;
  }

  Labels labels;
  if (!a.labels.empty()) labels = read_labels(a.labels);
  const TokenLabeler labeler = [&](const DecodeTrace& tr, const StepTrace& st) {
    if (!labels.known.count(tr.instance_id)) return TokenClass::unlabeled;
    if (labels.all_hallucinated.count(tr.instance_id)) return TokenClass::hallucinatory;
    const auto it = labels.hallucinated_steps.find(tr.instance_id);
    if (it != labels.hallucinated_steps.end() && it->second.count(st.t)) return TokenClass::hallucinatory;
    return TokenClass::clean;
  };

  DivergenceStatsOptions opts;
  opts.histogram_bins = a.bins;
  opts.similarity_bins = a.similarity_bins;
  const DivergenceStats stats = trace_divergence_stats(traces, labeler, labels.points, opts);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_file(dir / "stats.json", dump_json_pretty(stats_to_json(stats)) + "\n");

  std::string hist_csv = "class,bin_lo,bin_hi,count,density\n";
  std::vector<std::string> categories;
  std::vector<std::pair<std::string, std::vector<double>>> density_series;
  for (const auto& [cls, h] : stats.histograms) {
    const auto dens = h.density();
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      const double lo = h.lo + h.width() * static_cast<double>(i);
      hist_csv += std::string(to_string(cls)) + "," + format_value(lo) + "," + format_value(lo + h.width()) + "," +
                  std::to_string(h.counts[i]) + "," + format_value(dens[i]) + "\n";
    }
    if (categories.empty()) {
      for (std::size_t i = 0; i < h.counts.size(); ++i) categories.push_back(format_value(h.lo + h.width() * i));
    }
    if (stats.by_class.at(cls).n > 0) density_series.emplace_back(std::string(to_string(cls)), dens);
  }
  write_file(dir / "histogram.csv", hist_csv);
  write_file(dir / "density.svg", svg_bars("token-level divergence density", categories, density_series));

  if (!stats.binned.empty()) {
    std::string csv = "bin_lo,bin_hi,n,mean_score\n";
    std::vector<std::string> cats;
    std::vector<double> means;
    for (const auto& b : stats.binned) {
      csv += format_value(b.lo) + "," + format_value(b.hi) + "," + std::to_string(b.n) + "," + format_value(b.mean) +
             "\n";
      cats.push_back(format_value(b.lo));
      means.push_back(b.mean);
    }
    write_file(dir / "binned_means.csv", csv);
    write_file(dir / "binned_means.svg", svg_bars("mean score by similarity bin", cats, {{"score", means}}));
  }

  out << "traces: " << stats.traces << ", tokens: " << stats.all.n << "\n";
  for (const auto& [cls, s] : stats.by_class) {
    if (s.n == 0) continue;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-14s n=%-6zu mean=%.4f median=%.4f q90=%.4f\n",
                  std::string(to_string(cls)).c_str(), s.n, s.mean, s.median, s.q90);
    out << buf;
  }
  if (stats.pearson_rho) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "pearson rho (similarity, score): %.4f\n", *stats.pearson_rho);
    out << buf;
  }
  out << "written to " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// compare

int cmd_compare(const std::vector<std::string>& paths, std::ostream& out, std::ostream& err) {
  if (paths.empty()) {
    err << "error: no reports given\n";
    return kExitUsage;
  }
  std::vector<std::pair<std::string, MetricReport>> reports;
  for (const auto& p : paths) {
    MetricReport r = read_report(p);
    std::string label = r.decoder;
    for (const auto& [l, other] : reports) {
      if (l == label) label = r.decoder + "#" + std::to_string(reports.size());
    }
    reports.emplace_back(label, std::move(r));
  }
  std::set<std::string> benches;
  for (const auto& [l, r] : reports) benches.insert(r.benchmark);
  if (benches.size() > 1) err << "warning: comparing reports from different benchmarks\n";
  out << format_comparison(reports);
  return kExitOk;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = text.find(',', start);
    const std::string item = trim(text.substr(start, comma == std::string_view::npos ? text.npos : comma - start));
    if (item.empty()) throw ConfigError("empty item in list '" + std::string(text) + "'");
    out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

void apply_setting(DecodeConfig& cfg, std::string_view raw_key, std::string_view value) {
  const std::string key = normalize_key(raw_key);
  if (key == "decoder") cfg.decoder = parse_decoder(trim(value));
  else if (key == "alpha1") cfg.alpha1 = parse_double(key, value);
  else if (key == "alpha2") cfg.alpha2 = parse_double(key, value);
  else if (key == "gamma") cfg.gamma = parse_double(key, value);
  else if (key == "beta") cfg.beta = parse_double(key, value);
  else if (key == "vcd-alpha") cfg.vcd_alpha = parse_double(key, value);
  else if (key == "m3id-lambda") cfg.m3id_lambda = parse_double(key, value);
  else if (key == "ritual-kappa") cfg.ritual_kappa = parse_double(key, value);
  else if (key == "temperature") cfg.temperature = parse_double(key, value);
  else if (key == "max-new-tokens") cfg.max_new_tokens = parse_small_int(key, value);
  else if (key == "initial-max-tokens") cfg.initial_max_tokens = parse_small_int(key, value);
  else if (key == "seed") cfg.seed = parse_u64(key, value);
  else if (key == "sampling") cfg.sampling = parse_sampling(trim(value));
  else if (key == "diffusion-steps") cfg.diffusion_steps = parse_small_int(key, value);
  else if (key == "generator-seed") cfg.generator_seed = parse_u64(key, value);
  else if (key == "vcd-noise-steps") cfg.vcd_noise_steps = parse_small_int(key, value);
  else if (key == "ritual-augment") cfg.ritual_augment = parse_small_int(key, value);
  else throw ConfigError("unknown setting '" + std::string(raw_key) + "'");
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string s = trim(line);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    std::string value = trim(s.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    out[trim(s.substr(0, eq))] = value;
  }
  return out;
}

BackendHandle make_backend(std::string_view spec) {
  std::string s(spec);
  if (s.empty()) {
    const char* env = std::getenv("DEGF_ADAPTER_URL");
    if (env == nullptr || *env == '\0') {
      throw ConfigError("no backend: pass --backend synthetic:<scenario> or http:<url>, or set DEGF_ADAPTER_URL");
    }
    s = std::string("http:") + env;
  }
  if (s.rfind("synthetic:", 0) == 0) {
    auto backend = std::make_shared<SyntheticBackend>(Scenario::load(s.substr(10)));
    return {backend, backend};
  }
  if (s.rfind("http:", 0) == 0) {
    AdapterEndpoint ep;
    // Both http:<url> and a bare http:// URL are accepted.
    ep.base_url = s.rfind("http://", 0) == 0 ? s : s.substr(5);
    auto client = std::make_shared<HttpAdapterClient>(ep);
    return {client, client};
  }
  throw ConfigError("--backend must be synthetic:<scenario> or http:<url>, got '" + s + "'");
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reference-image guided decoding for vision-language models", "degf"};
  app.set_version_flag("--version", DEGF_VERSION);
  app.require_subcommand(1);

  DecodeArgs dec;
  auto* decode = app.add_subcommand("decode", "Decode one instance and write its trace");
  dec.hyper.attach(*decode, true);
  decode->add_option("--backend", dec.backend, "synthetic:<scenario|file> or http:<url> (default $DEGF_ADAPTER_URL)");
  decode->add_option("--image", dec.image, "image reference")->capture_default_str();
  decode->add_option("--prompt", dec.prompt, "base prompt (default: captioning prompt)");
  decode->add_option("--kind", dec.kind, "yes_no, open_caption or binary_choice")->capture_default_str();
  decode->add_option("--instance-id", dec.instance_id, "instance id")->capture_default_str();
  decode->add_option("--out", dec.out, "output directory")->capture_default_str();
  decode->add_option("--timings", dec.timings, "auto, on or off")->capture_default_str();
  decode->add_flag("--resume", dec.resume, "skip when the output already holds this decode");

  BenchArgs ben;
  auto* bench = app.add_subcommand("bench", "Run a benchmark dataset and score it");
  ben.hyper.attach(*bench, true);
  bench->add_option("--backend", ben.backend, "synthetic:<scenario|file> or http:<url>");
  bench->add_option("--benchmark", ben.benchmark, "pope, chair or mme (default: from the dataset)");
  bench->add_option("--dataset", ben.dataset, "degf-bench/1 JSONL")->required();
  bench->add_option("--seeds", ben.seeds, "comma-separated seeds; reports mean and std");
  bench->add_option("--parallel", ben.parallel, "concurrent instances")->capture_default_str();
  bench->add_flag("--resume", ben.resume, "skip instances already recorded in the run directory");
  bench->add_option("--truth", ben.truth, "ground-truth object sets (chair)");
  bench->add_option("--synonyms", ben.synonyms, "synonym table TSV (chair)")->capture_default_str();
  bench->add_option("--out", ben.out, "parent of the run directory")->capture_default_str();
  bench->add_option("--timings", ben.timings, "auto, on or off")->capture_default_str();

  AnalyzeArgs ana;
  auto* analyze = app.add_subcommand("analyze", "Divergence statistics over decode traces");
  analyze->add_option("traces", ana.traces, "trace JSONL files");
  analyze->add_option("--labels", ana.labels, "JSONL of per-instance labels");
  analyze->add_option("--out", ana.out, "output directory")->capture_default_str();
  analyze->add_option("--bins", ana.bins, "histogram bins over [0, 1]")->capture_default_str();
  analyze->add_option("--similarity-bins", ana.similarity_bins, "bins on the similarity axis")->capture_default_str();

  std::vector<std::string> reports;
  auto* compare = app.add_subcommand("compare", "Side-by-side metric reports");
  compare->add_option("reports", reports, "report.json files")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (decode->parsed()) return cmd_decode(*decode, dec, out, err);
    if (bench->parsed()) return cmd_bench(*bench, ben, out, err);
    if (analyze->parsed()) return cmd_analyze(ana, out, err);
    if (compare->parsed()) return cmd_compare(reports, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace degf::cli
