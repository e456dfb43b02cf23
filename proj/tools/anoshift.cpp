// Copyright 2026 The AnoShift Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// anoshift: synth -> split -> drift / train / bench / monthly, plus verify.
//
// Every command writes into an --out directory: its artifacts and a
// manifest.json carrying the resolved config, its hash, the seed, and the
// content hash of each artifact. `verify <dir>` re-checks all of it.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "anoshift/desk.hpp"
#include "anoshift/detectors.hpp"
#include "anoshift/driftstats.hpp"
#include "anoshift/evaluate.hpp"
#include "anoshift/hash.hpp"
#include "anoshift/ingest.hpp"
#include "anoshift/io.hpp"
#include "anoshift/maskedmodel.hpp"
#include "anoshift/protocol.hpp"
#include "anoshift/tokenize.hpp"
#include "anoshift/vectorize.hpp"
#include "json.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using namespace anoshift;

constexpr const char* kManifest = "manifest.json";
constexpr const char* kSplitsFile = "splits.json";

[[noreturn]] void bad_config(const std::string& m) { throw Error(ErrorCode::kInvalidConfig, m); }

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string content_hash(std::string_view bytes) { return hex64(fnv1a64(bytes)); }

// ---------------------------------------------------------------------------
// Config resolution: defaults <- config file section <- flags <- --set.

struct Global {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  unsigned threads = 1;
  std::string out;
  std::vector<std::string> sets;  // "section.key=value"
};

struct Resolved {
  std::string command;
  std::uint64_t seed = 0;
  json config;  // section name -> object
  std::string hash() const {
    return content_hash(json{{"command", command}, {"config", config}, {"seed", seed}}.dump());
  }
};

json parse_scalar(const std::string& v) {
  json j = json::parse(v, nullptr, false);
  return j.is_discarded() ? json(v) : j;
}

Resolved resolve(const std::string& command, const Global& g, json defaults, const json& flags) {
  Resolved r;
  r.command = command;
  json file = json::object();
  if (!g.config_path.empty()) {
    file = json::parse(read_file(g.config_path), nullptr, false);
    if (file.is_discarded() || !file.is_object()) bad_config("config file is not a JSON object");
  }
  for (auto& [section, value] : defaults.items()) {
    if (file.contains(section)) {
      if (!file[section].is_object()) bad_config("config section '" + section + "' must be an object");
      for (auto& [k, v] : file[section].items()) {
        if (!value.contains(k)) bad_config("unknown key '" + section + "." + k + "'");
        value[k] = v;
      }
    }
  }
  for (auto& [section, obj] : flags.items()) {
    for (auto& [k, v] : obj.items()) defaults[section][k] = v;
  }
  for (const auto& s : g.sets) {
    const auto eq = s.find('=');
    const auto dot = s.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) bad_config("--set wants section.key=value");
    const std::string section = s.substr(0, dot), key = s.substr(dot + 1, eq - dot - 1);
    if (!defaults.contains(section) || !defaults[section].contains(key)) {
      bad_config("unknown key '" + section + "." + key + "'");
    }
    defaults[section][key] = parse_scalar(s.substr(eq + 1));
  }
  r.seed = g.seed ? *g.seed : file.value("seed", std::uint64_t{0});
  r.config = std::move(defaults);
  return r;
}

// Collects explicitly given flags into {section: {key: value}}.
class Flags {
 public:
  template <class T>
  CLI::Option* bind(CLI::App* app, const std::string& flag, const std::string& section, const std::string& key,
            const std::string& help) {
    auto holder = std::make_shared<T>();
    auto* opt = app->add_option(flag, *holder, help);
    apply_.push_back([=, this]() {
      if (opt->count() > 0) values_[section][key] = *holder;
    });
    return opt;
  }
  json collect() {
    values_ = json::object();
    for (auto& f : apply_) f();
    return values_;
  }

 private:
  std::vector<std::function<void()>> apply_;
  json values_ = json::object();
};

// ---------------------------------------------------------------------------
// Artifacts.

class Artifacts {
 public:
  Artifacts(const Resolved& r, fs::path dir) : r_(r), dir_(std::move(dir)) { fs::create_directories(dir_); }

  json provenance() const { return {{"command", r_.command}, {"config_hash", r_.hash()}, {"seed", r_.seed}}; }

  void write(const std::string& name, const std::string& bytes) {
    write_file_atomic(dir_ / name, bytes);
    files_[name] = content_hash(bytes);
  }
  void write_json(const std::string& name, json j) {
    j["provenance"] = provenance();
    write(name, j.dump(2) + "\n");
  }
  // Files written by library helpers.
  void record(const std::string& name) { files_[name] = content_hash(read_file(dir_ / name)); }
  void input(const std::string& role, const std::string& hash) { inputs_[role] = hash; }

  void finish(json extra = json::object()) {
    json m = {{"format", "anoshift-run"},
              {"version", 1},
              {"command", r_.command},
              {"seed", r_.seed},
              {"config", r_.config},
              {"config_hash", r_.hash()},
              {"files", files_},
              {"inputs", inputs_},
              {"created_at", utc_now()}};
    for (auto& [k, v] : extra.items()) m[k] = v;
    write_file_atomic(dir_ / kManifest, m.dump(2) + "\n");
  }

  const fs::path& dir() const { return dir_; }

 private:
  const Resolved& r_;
  fs::path dir_;
  json files_ = json::object();
  json inputs_ = json::object();
};

fs::path require_out(const Global& g) {
  if (g.out.empty()) bad_config("--out is required");
  return g.out;
}

// ---------------------------------------------------------------------------
// Shared loaders.

struct LoadedSplits {
  BenchmarkSplits splits;
  std::string hash;
};

LoadedSplits load_split_dir(const fs::path& dir) {
  const std::string bytes = read_file(dir / kSplitsFile);
  json j = json::parse(bytes, nullptr, false);
  if (j.is_discarded() || !j.contains("splits")) throw Error(ErrorCode::kFormat, "bad " + std::string(kSplitsFile));
  return {load_splits(dir, j["splits"], SchemaDescriptor::kyoto()), content_hash(bytes)};
}

std::vector<RawRecord> subsample_train(const std::vector<RawRecord>& records, double fraction,
                                       std::uint64_t seed) {
  if (fraction >= 1.0) return records;
  std::vector<std::size_t> idx(records.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span(idx));
  idx.resize(std::max<std::size_t>(1, static_cast<std::size_t>(fraction * static_cast<double>(records.size()))));
  std::sort(idx.begin(), idx.end());
  std::vector<RawRecord> out;
  for (auto i : idx) out.push_back(records[i]);
  return out;
}

void apply_train_fraction(BenchmarkSplits& s, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) bad_config("train_fraction must be in (0,1]");
  for (std::size_t k = 0; k < s.train.size(); ++k) {
    s.train[k].records = subsample_train(s.train[k].records, fraction, derive_seed(seed, 0x66726163 + k));
  }
}

struct DetectorSpec {
  std::string algo;
  VectorMode mode = VectorMode::kOneHot;
};

DetectorSpec parse_detector(const std::string& name) {
  DetectorSpec d;
  d.algo = name;
  if (name.size() > 4 && name.ends_with("-raw")) {
    d.algo = name.substr(0, name.size() - 4);
    d.mode = VectorMode::kRawNumeric;
  }
  if (d.algo != "bert" && d.algo != "ecod" && d.algo != "copod" && d.algo != "isoforest" && d.algo != "lof") {
    bad_config("unknown detector '" + name + "'");
  }
  if (d.algo == "bert" && d.mode == VectorMode::kRawNumeric) bad_config("bert has no raw mode");
  return d;
}

DetectorOptions detector_options(const json& j, VectorMode mode, unsigned threads) {
  DetectorOptions o;
  o.mode = mode;
  o.threads = threads;
  o.isoforest_trees = j.at("isoforest_trees").get<int>();
  o.isoforest_subsample = j.at("isoforest_subsample").get<std::size_t>();
  o.lof_k = j.at("lof_k").get<int>();
  if (o.isoforest_trees < 1 || o.isoforest_subsample < 2 || o.lof_k < 1) bad_config("bad detector parameters");
  return o;
}

json detector_defaults() { return {{"isoforest_trees", 100}, {"isoforest_subsample", 256}, {"lof_k", 20}}; }

mlm::ModelConfig model_from(const json& j) {
  auto c = mlm::ModelConfig::from_json(j);
  // vocab_size is only known once TRAIN is loaded; validate the rest now.
  auto probe = c;
  probe.vocab_size = Vocabulary::kNumSpecial + 1;
  probe.validate();
  return c;
}

std::vector<mlm::SequenceSet> yearly_sequences(const BenchmarkSplits& s, const Vocabulary& vocab) {
  std::vector<mlm::SequenceSet> sets;
  for (const auto& ys : s.train) sets.push_back(mlm::to_sequences(encode_all(ys.records, vocab)));
  return sets;
}

// ---------------------------------------------------------------------------
// Commands.

int cmd_synth(const Global& g, const json& flags) {
  json defaults = desk::synthetic_config().to_json();
  defaults["anomaly_ratio_per_year"] = json::array();  // empty: 0.5 for every year
  auto r = resolve("synth", g, {{"synth", defaults}}, flags);
  auto cfg = SyntheticConfig::from_json(r.config["synth"]);
  cfg.seed = r.seed;
  r.config["synth"]["seed"] = r.seed;
  cfg.validate();
  Artifacts out(r, require_out(g));
  const auto records = generate_synthetic(cfg);
  out.write("data.txt", format_dataset(records, SchemaDescriptor::kyoto()));
  out.finish({{"records", records.size()}});
  std::printf("wrote %zu records to %s\n", records.size(), (out.dir() / "data.txt").c_str());
  return 0;
}

int cmd_split(const Global& g, const json& flags, const std::vector<std::string>& data,
              const std::string& schema_path) {
  auto r = resolve("split", g, {{"split", desk::split_config().to_json()}}, flags);
  auto cfg = SplitConfig::from_json(r.config["split"]);
  cfg.seed = r.seed;
  r.config["split"]["seed"] = r.seed;
  cfg.validate();
  if (data.empty()) bad_config("--data is required");
  SchemaDescriptor schema = SchemaDescriptor::kyoto();
  if (!schema_path.empty()) schema = SchemaDescriptor::from_json(json::parse(read_file(schema_path)));
  schema.validate();

  Artifacts out(r, require_out(g));
  std::vector<RawRecord> records;
  json malformed = json::array();
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto res = read_dataset(data[i], schema);
    for (const auto& m : res.malformed) malformed.push_back({{"input", i}, {"line", m.line_no}, {"reason", m.reason}});
    records.insert(records.end(), std::make_move_iterator(res.records.begin()),
                   std::make_move_iterator(res.records.end()));
    out.input("data" + std::to_string(i), content_hash(read_file(data[i])));
  }
  const auto splits = plan_splits(records, cfg);
  write_split_files(out.dir(), splits, SchemaDescriptor::kyoto());
  for (auto s : kAllSplits) {
    for (const auto& ys : splits.split(s)) out.record(split_file_name(s, ys.year));
  }
  out.write_json(kSplitsFile, {{"splits", splits_manifest(splits)}, {"malformed_rows", malformed}});
  out.finish();
  for (const auto& w : splits.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  for (auto s : kAllSplits) {
    for (const auto& ys : splits.split(s)) {
      std::printf("%-5s %d  normal %zu  anomaly %zu\n", std::string(split_name(s)).c_str(), ys.year, ys.n_normal(),
                  ys.n_anomaly());
    }
  }
  return 0;
}

json drift_defaults() {
  return {{"metric", "jeffreys"},   {"feature", "service"},   {"row_class", "inlier"},
          {"col_class", "inlier"},  {"sample_size", 1000},    {"repeats", 3},
          {"epsilon", 0.05},        {"max_iters", 10000},     {"tol", 1e-3}};
}

ClassSide class_from(const std::string& s) {
  if (s == "inlier") return ClassSide::kInlier;
  if (s == "outlier") return ClassSide::kOutlier;
  bad_config("class must be inlier or outlier");
}

int cmd_drift(const Global& g, const json& flags, const std::string& splits_dir) {
  auto r = resolve("drift", g, {{"drift", drift_defaults()}}, flags);
  const json& c = r.config["drift"];
  const auto metric = c.at("metric").get<std::string>();
  if (metric != "jeffreys" && metric != "sinkhorn") bad_config("metric must be jeffreys or sinkhorn");
  const auto feature = feature_from_name(c.at("feature").get<std::string>());
  if (metric == "jeffreys" && !feature) bad_config("unknown feature '" + c.at("feature").get<std::string>() + "'");
  DatasetDistanceOptions opt;
  opt.row_class = class_from(c.at("row_class").get<std::string>());
  opt.col_class = class_from(c.at("col_class").get<std::string>());
  opt.sample_size = c.at("sample_size").get<std::size_t>();
  opt.repeats = c.at("repeats").get<int>();
  opt.sinkhorn.epsilon = c.at("epsilon").get<double>();
  opt.sinkhorn.max_iters = c.at("max_iters").get<int>();
  opt.sinkhorn.tol = c.at("tol").get<double>();
  opt.seed = r.seed;
  opt.threads = g.threads;
  if (opt.sample_size < 1 || opt.repeats < 1 || !(opt.sinkhorn.epsilon > 0)) bad_config("bad sinkhorn options");
  if (splits_dir.empty()) bad_config("--splits is required");

  const auto loaded = load_split_dir(splits_dir);
  const auto& s = loaded.splits;
  // Every record of a year, whatever split it landed in.
  std::map<int, std::vector<RawRecord>> by_year;
  for (auto sp : kAllSplits) {
    for (const auto& ys : s.split(sp)) {
      auto& v = by_year[ys.year];
      v.insert(v.end(), ys.records.begin(), ys.records.end());
    }
  }
  DistanceMatrix m;
  if (metric == "jeffreys") {
    const Vocabulary vocab = [&] {
      std::vector<RawRecord> all;
      for (auto& [y, v] : by_year) all.insert(all.end(), v.begin(), v.end());
      return build_vocabulary(all);
    }();
    std::vector<YearTokens> years;
    for (auto& [y, v] : by_year) years.push_back({y, encode_all(v, vocab)});
    m = divergence_matrix(years, static_cast<std::size_t>(*feature), vocab);
  } else {
    std::vector<RawRecord> train_inliers;
    for (const auto& rec : s.train_records()) {
      if (!rec.label.is_anomaly()) train_inliers.push_back(rec);
    }
    FeatureVectorizer vec(VectorMode::kOneHot);
    vec.fit(train_inliers);
    std::vector<YearPoints> years;
    for (auto& [y, v] : by_year) {
      std::vector<RawRecord> in, outl;
      for (const auto& rec : v) (rec.label.is_anomaly() ? outl : in).push_back(rec);
      YearPoints p;
      p.year = y;
      p.inliers = vec.transform(in);
      p.outliers = vec.transform(outl);
      years.push_back(std::move(p));
    }
    m = dataset_distance_report(years, opt);
  }
  Artifacts out(r, require_out(g));
  out.input("splits", loaded.hash);
  out.write("distance.csv", m.to_csv());
  json cells = json::array();
  for (std::size_t i = 0; i < m.size(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.size(); ++j) row.push_back(m.at(i, j));
    cells.push_back(row);
  }
  std::size_t unconverged = 0;
  for (bool b : m.converged) unconverged += b ? 0 : 1;
  out.write_json("distance.json", {{"metric", m.metric},
                                   {"conditioning", m.conditioning},
                                   {"years", m.years},
                                   {"values", cells},
                                   {"unconverged_cells", unconverged},
                                   {"max_marginal_error", m.max_marginal_error}});
  out.finish();
  std::fputs(m.to_csv().c_str(), stdout);
  if (unconverged > 0) std::fprintf(stderr, "warning: %zu cells did not converge\n", unconverged);
  return 0;
}

json train_defaults() { return {{"model", "bert"}, {"strategy", "iid"}, {"train_fraction", 1.0}}; }

void print_parameter_report(const mlm::ModelConfig& c, std::size_t count) {
  const auto V = c.vocab_size;
  const auto H = static_cast<std::size_t>(c.hidden), I = static_cast<std::size_t>(c.intermediate);
  const auto T = static_cast<std::size_t>(c.seq_len), L = static_cast<std::size_t>(c.n_layers);
  std::printf("parameters: %zu\n", count);
  std::printf("formula: V(2H+1) + TH + 2H + L(4H^2 + 2HI + 9H + I) with V=%zu H=%zu T=%zu I=%zu L=%zu -> %zu\n", V, H,
              T, I, L, mlm::parameter_count_formula(c));
}


int cmd_train(const Global& g, const json& flags, const std::string& splits_dir) {
  auto r = resolve("train", g,
                   {{"train", train_defaults()},
                    {"model", desk::model_config().to_json()},
                    {"detectors", detector_defaults()}},
                   flags);
  const auto& t = r.config["train"];
  const auto spec = parse_detector(t.at("model").get<std::string>());
  const auto strategy = mlm::strategy_from_name(t.at("strategy").get<std::string>());
  if (spec.algo != "bert" && strategy != mlm::Strategy::kIid) bad_config("strategies apply to bert only");
  auto mc = model_from(r.config["model"]);
  const auto dopt = detector_options(r.config["detectors"], spec.mode, g.threads);
  if (splits_dir.empty()) bad_config("--splits is required");

  auto loaded = load_split_dir(splits_dir);
  apply_train_fraction(loaded.splits, t.at("train_fraction").get<double>(), r.seed);
  Artifacts out(r, require_out(g));
  out.input("splits", loaded.hash);
  const auto train = loaded.splits.train_records();
  const Vocabulary vocab = build_vocabulary(train);
  out.write("vocab.txt", vocab.serialize());

  if (spec.algo == "bert") {
    mc.vocab_size = vocab.size();
    mc.validate();
    const auto params = mlm::train_with_strategy(strategy, yearly_sequences(loaded.splits, vocab), mc, r.seed);
    mlm::Checkpoint ck{params, vocab.fingerprint(), {{"strategy", std::string(mlm::strategy_name(strategy))}}};
    ck.metadata["provenance"] = out.provenance();
    out.write("model.ckpt", mlm::serialize_checkpoint(ck));
    print_parameter_report(mc, params.parameter_count());
  } else {
    auto scorer = make_vector_scorer(spec.algo, dopt);
    scorer->fit(train, vocab, r.seed);
    out.write_json("detector.json", {{"state", scorer->state()}});
  }
  out.finish({{"model", t.at("model")}});
  std::printf("trained %s (%s) on %zu TRAIN records\n", t.at("model").get<std::string>().c_str(),
              std::string(mlm::strategy_name(strategy)).c_str(), train.size());
  return 0;
}

json bench_defaults() {
  return {{"detectors", {"ecod", "copod", "isoforest", "isoforest-raw", "lof", "bert"}},
          {"seeds", json::array()},
          {"train_fraction", 1.0}};
}

int cmd_bench(const Global& g, const json& flags, const std::string& splits_dir) {
  auto r = resolve("bench", g,
                   {{"bench", bench_defaults()},
                    {"model", desk::model_config().to_json()},
                    {"detectors", detector_defaults()}},
                   flags);
  auto& b = r.config["bench"];
  if (b["seeds"].empty()) b["seeds"] = json::array({r.seed});
  const auto seeds = b.at("seeds").get<std::vector<std::uint64_t>>();
  const auto names = b.at("detectors").get<std::vector<std::string>>();
  if (names.empty()) bad_config("no detectors given");
  const auto mc = model_from(r.config["model"]);
  std::vector<DetectorSpec> specs;
  for (const auto& n : names) specs.push_back(parse_detector(n));
  for (const auto& s : specs) (void)detector_options(r.config["detectors"], s.mode, g.threads);
  if (splits_dir.empty()) bad_config("--splits is required");

  auto loaded = load_split_dir(splits_dir);
  apply_train_fraction(loaded.splits, b.at("train_fraction").get<double>(), r.seed);
  const Vocabulary vocab = build_vocabulary(loaded.splits.train_records());
  std::vector<ScorerFactory> factories;
  for (const auto& s : specs) {
    if (s.algo == "bert") {
      factories.push_back([mc, threads = g.threads]() -> std::unique_ptr<AnomalyScorer> {
        return std::make_unique<mlm::MaskedModelScorer>(mc, default_treatments(), threads);
      });
    } else {
      const auto opt = detector_options(r.config["detectors"], s.mode, g.threads);
      factories.push_back([opt, algo = s.algo]() { return make_vector_scorer(algo, opt); });
    }
  }
  const auto report = evaluate_benchmark(factories, loaded.splits, vocab, seeds);
  Artifacts out(r, require_out(g));
  out.input("splits", loaded.hash);
  out.write_json("report.json", to_json(report));
  out.write("report.txt", to_text(report));
  out.finish();
  std::fputs(to_text(report).c_str(), stdout);
  return 0;
}

json monthly_defaults() { return {{"split", "far"}, {"year", nullptr}}; }

int cmd_monthly(const Global& g, const json& flags, const std::string& splits_dir, const std::string& model_dir) {
  auto r = resolve("monthly", g, {{"monthly", monthly_defaults()}}, flags);
  const auto& c = r.config["monthly"];
  const auto split = split_from_name(c.at("split").get<std::string>());
  if (!split) bad_config("unknown split '" + c.at("split").get<std::string>() + "'");
  if (splits_dir.empty() || model_dir.empty()) bad_config("--splits and --model are required");

  const auto loaded = load_split_dir(splits_dir);
  const auto& sets = loaded.splits.split(*split);
  const YearSet* ys = nullptr;
  for (const auto& s : sets) {
    if (c.at("year").is_null() || c.at("year").get<int>() == s.year) {
      ys = &s;
      break;
    }
  }
  if (!ys) throw Error(ErrorCode::kNoRecordsForYear, "requested year is not in the split");

  const fs::path mdir = model_dir;
  const Vocabulary vocab = Vocabulary::load(mdir / "vocab.txt");
  std::unique_ptr<AnomalyScorer> scorer;
  std::string model_hash;
  if (fs::exists(mdir / "model.ckpt")) {
    const std::string bytes = read_file(mdir / "model.ckpt");
    model_hash = content_hash(bytes);
    auto ck = mlm::parse_checkpoint(bytes, vocab.fingerprint());
    const auto seed = ck.metadata.at("provenance").at("seed").get<std::uint64_t>();
    auto s = std::make_unique<mlm::MaskedModelScorer>(std::move(ck.params), vocab, default_treatments(), g.threads);
    s->fit({}, vocab, seed);
    scorer = std::move(s);
  } else {
    const std::string bytes = read_file(mdir / "detector.json");
    model_hash = content_hash(bytes);
    scorer = load_vector_scorer(json::parse(bytes).at("state"), g.threads);
  }
  const auto rows = monthly_breakdown(*scorer, ys->records);
  Artifacts out(r, require_out(g));
  out.input("splits", loaded.hash);
  out.input("model", model_hash);
  out.write("monthly.csv", monthly_csv(rows));
  out.finish({{"year", ys->year}, {"detector", scorer->name()}});
  std::fputs(monthly_csv(rows).c_str(), stdout);
  return 0;
}

// Re-hashes the manifest's config and every listed file.
int cmd_verify(const std::string& dir) {
  const fs::path d = dir;
  const json m = json::parse(read_file(d / kManifest), nullptr, false);
  if (m.is_discarded() || m.value("format", "") != "anoshift-run") throw Error(ErrorCode::kFormat, "not a run manifest");
  Resolved r;
  r.command = m.at("command").get<std::string>();
  r.seed = m.at("seed").get<std::uint64_t>();
  r.config = m.at("config");
  int bad = 0;
  auto check = [&](bool ok, const std::string& what) {
    std::printf("%s %s\n", ok ? "ok  " : "FAIL", what.c_str());
    bad += ok ? 0 : 1;
  };
  const std::string hash = m.at("config_hash").get<std::string>();
  check(r.hash() == hash, "config hash " + hash);
  for (auto& [name, h] : m.at("files").items()) {
    const std::string bytes = fs::exists(d / name) ? read_file(d / name) : std::string();
    bool ok = fs::exists(d / name) && content_hash(bytes) == h.get<std::string>();
    if (ok && name.ends_with(".json")) {
      const json j = json::parse(bytes);
      ok = j.contains("provenance") && j["provenance"].value("config_hash", "") == hash &&
           j["provenance"].value("seed", std::uint64_t{0}) == r.seed;
    }
    if (ok && name.ends_with(".ckpt")) {
      const auto ck = mlm::parse_checkpoint(bytes);
      ok = ck.metadata.at("provenance").value("config_hash", "") == hash;
    }
    check(ok, name);
  }
  return bad == 0 ? 0 : 1;
}

int report_error(const std::string& code, const std::string& message, int status) {
  std::cerr << json{{"error", {{"code", code}, {"message", message}}}}.dump() << "\n";
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AnoShift-style shift benchmark toolkit"};
  app.require_subcommand(1);
  Global g;
  std::uint64_t seed = 0;

  auto common = [&](CLI::App* sub, bool with_out = true) {
    sub->add_option("--seed", seed, "Global seed");
    sub->add_option("--config", g.config_path, "JSON config with per-command sections")->check(CLI::ExistingFile);
    sub->add_option("--threads", g.threads, "Worker threads")->check(CLI::Range(1u, 1024u));
    sub->add_option("--set", g.sets, "Override a config key: section.key=json");
    if (with_out) sub->add_option("--out", g.out, "Output directory");
  };

  Flags flags;
  std::vector<std::string> data;
  std::string schema_path, splits_dir, model_dir, verify_dir;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic drifting corpus");
  common(synth);
  flags.bind<int>(synth, "--years", "synth", "n_years", "Number of years");
  flags.bind<int>(synth, "--start-year", "synth", "start_year", "First year");
  flags.bind<int>(synth, "--months", "synth", "months_per_year", "Months per year");
  flags.bind<int>(synth, "--normals-per-month", "synth", "normals_per_month", "Normal records per month");
  flags.bind<double>(synth, "--drift", "synth", "drift_rate", "Drift per year");
  flags.bind<int>(synth, "--swap-year", "synth", "swap_year", "Year index of the anomaly swap");

  auto* split = app.add_subcommand("split", "Build TRAIN/IID/NEAR/FAR splits");
  common(split);
  split->add_option("--data", data, "Dataset file(s)")->check(CLI::ExistingFile);
  split->add_option("--schema", schema_path, "Schema descriptor JSON")->check(CLI::ExistingFile);
  flags.bind<std::vector<int>>(split, "--train-years", "split", "train_years", "TRAIN years");
  flags.bind<std::vector<int>>(split, "--near-years", "split", "near_years", "NEAR years");
  flags.bind<std::vector<int>>(split, "--far-years", "split", "far_years", "FAR years");
  flags.bind<std::size_t>(split, "--train-quota", "split", "normals_per_month_train", "Normals per month (TRAIN, NEAR, FAR)");
  flags.bind<std::size_t>(split, "--iid-quota", "split", "normals_per_month_iid", "Normals per month (IID)");
  flags.bind<double>(split, "--contamination", "split", "contamination_rate", "TRAIN contamination rate");

  auto* drift = app.add_subcommand("drift", "Year-by-year distance matrix");
  common(drift);
  drift->add_option("--splits", splits_dir, "Split directory")->check(CLI::ExistingDirectory);
  flags.bind<std::string>(drift, "--metric", "drift", "metric", "jeffreys or sinkhorn");
  flags.bind<std::string>(drift, "--feature", "drift", "feature", "Feature for jeffreys");
  flags.bind<std::string>(drift, "--row-class", "drift", "row_class", "inlier or outlier");
  flags.bind<std::string>(drift, "--col-class", "drift", "col_class", "inlier or outlier");
  flags.bind<std::size_t>(drift, "--sample-size", "drift", "sample_size", "Points per side");
  flags.bind<int>(drift, "--repeats", "drift", "repeats", "Subsample repeats");
  flags.bind<double>(drift, "--epsilon", "drift", "epsilon", "Sinkhorn epsilon");

  auto* train = app.add_subcommand("train", "Train a model on TRAIN");
  common(train);
  train->add_option("--splits", splits_dir, "Split directory")->check(CLI::ExistingDirectory);
  flags.bind<std::string>(train, "--model", "train", "model", "bert, ecod, copod, isoforest[-raw], lof[-raw]");
  flags.bind<std::string>(train, "--strategy", "train", "strategy", "iid, finetune or distill");
  flags.bind<double>(train, "--train-fraction", "train", "train_fraction", "Fraction of TRAIN used");
  flags.bind<int>(train, "--epochs", "model", "epochs", "Training epochs");

  auto* bench = app.add_subcommand("bench", "Evaluate detectors on IID/NEAR/FAR");
  common(bench);
  bench->add_option("--splits", splits_dir, "Split directory")->check(CLI::ExistingDirectory);
  flags.bind<std::vector<std::string>>(bench, "--detectors", "bench", "detectors", "Detector names")->delimiter(',');
  flags.bind<std::vector<std::uint64_t>>(bench, "--seeds", "bench", "seeds", "Seeds")->delimiter(',');
  flags.bind<double>(bench, "--train-fraction", "bench", "train_fraction", "Fraction of TRAIN used");
  flags.bind<int>(bench, "--epochs", "model", "epochs", "Masked-model epochs");

  auto* monthly = app.add_subcommand("monthly", "Per-month metrics for one year");
  common(monthly);
  monthly->add_option("--splits", splits_dir, "Split directory")->check(CLI::ExistingDirectory);
  monthly->add_option("--model", model_dir, "Output directory of `train`")->check(CLI::ExistingDirectory);
  flags.bind<std::string>(monthly, "--split", "monthly", "split", "iid, near or far");
  flags.bind<int>(monthly, "--year", "monthly", "year", "Year within the split");

  auto* verify = app.add_subcommand("verify", "Re-hash a run directory against its manifest");
  verify->add_option("dir", verify_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  for (auto* sub : app.get_subcommands()) {
    const auto* opt = sub->get_option_no_throw("--seed");
    if (opt && opt->count() > 0) g.seed = seed;
  }

  try {
    const json f = flags.collect();
    if (synth->parsed()) return cmd_synth(g, f);
    if (split->parsed()) return cmd_split(g, f, data, schema_path);
    if (drift->parsed()) return cmd_drift(g, f, splits_dir);
    if (train->parsed()) return cmd_train(g, f, splits_dir);
    if (bench->parsed()) return cmd_bench(g, f, splits_dir);
    if (monthly->parsed()) return cmd_monthly(g, f, splits_dir, model_dir);
    if (verify->parsed()) return cmd_verify(verify_dir);
  } catch (const Error& e) {
    const int status = e.code() == ErrorCode::kInvalidConfig ? 2 : 1;
    return report_error(std::string(error_code_name(e.code())), e.what(), status);
  } catch (const std::exception& e) {
    return report_error("Internal", e.what(), 1);
  }
  return 1;
}
