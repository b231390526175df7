// tools/flownorm_main.cc

// Copyright 2026  The Flownorm Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// flownorm: normalization flows and linear backends for embedding vectors.
//
// Subcommands cover the full loop: generate irregular synthetic data, fit
// linear transforms (LDA, LDA/N, whitening) and flows (plain NF or DNF with
// class priors), transform vector sets, score trials (cosine or PLDA), and
// evaluate EER.  `pipeline run` drives the same steps from one flat
// key = value config.  Exit codes: 1 bad arguments, 2 bad data, 3 numeric
// failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "flownorm/dataset.hpp"
#include "flownorm/dnf.hpp"
#include "flownorm/flow.hpp"
#include "flownorm/io_util.hpp"
#include "flownorm/linear.hpp"
#include "flownorm/metrics.hpp"
#include "flownorm/plda.hpp"
#include "flownorm/synth.hpp"
#include "flownorm/types.hpp"

namespace {

using flownorm::ArgError;
using flownorm::DataError;
using flownorm::Index;
using flownorm::NumericError;
using flownorm::Vec;
using flownorm::VectorSet;

constexpr const char* kVersion =
    "flownorm 1.0.0 (formats: VEC1 v1, LIN1 v1, DNF1 v1, PLD1 v1)";

std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

/// One JSON line per finished run: command, argument hash, seed when the
/// command takes one, wall time.  Appended, never rewritten.
struct RunLogger {
  std::string path = "flownorm_run.jsonl";
  std::string cmd;
  std::vector<std::string> args;
  bool has_seed = false;
  std::uint64_t seed = 0;
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();

  void finish() const {
    std::string joined;
    for (const auto& a : args) {
      joined += a;
      joined += '\x1f';
    }
    nlohmann::json j;
    j["cmd"] = cmd;
    j["args"] = args;
    j["config_hash"] = fnv1a_hex(joined);
    if (has_seed) j["seed"] = seed;
    j["wall_ms"] =
        std::chrono::duration<double, std::milli>(
            std::chrono::steady_clock::now() - start).count();
    j["status"] = "ok";
    std::ofstream os(path, std::ios::app);
    os << j.dump() << "\n";
  }
};

void require_file(const std::string& path) {
  if (!std::filesystem::exists(path))
    throw DataError("no such file: " + path);
}

std::map<std::string, Index> id_index(const VectorSet& set) {
  std::map<std::string, Index> m;
  for (std::size_t i = 0; i < set.ids.size(); ++i)
    m[set.ids[i]] = static_cast<Index>(i);
  return m;
}

void write_vectors(const std::string& path, const VectorSet& set,
                   bool binary) {
  if (binary)
    flownorm::write_vectors_binary(path, set);
  else
    flownorm::write_vectors_text(path, set);
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  flownorm::SynthConfig cfg;
  std::string out, train_out, eval_out, trials_out;
  double train_fraction = 0.7;
  Index imposter_cap = 0;
  bool binary = false;
};

void run_synth(const SynthArgs& a) {
  if (a.out.empty() == (a.train_out.empty() && a.eval_out.empty()))
    throw ArgError("synth: give either --out or --train-out/--eval-out");
  if (a.train_out.empty() != a.eval_out.empty())
    throw ArgError("synth: --train-out and --eval-out go together");
  if (!a.trials_out.empty() && a.eval_out.empty())
    throw ArgError("synth: --trials-out needs --eval-out");

  VectorSet all = flownorm::synth_generate(a.cfg);
  if (!a.out.empty()) {
    write_vectors(a.out, all, a.binary);
    std::cout << "wrote " << all.size() << " vectors (dim " << all.dim()
              << ", " << a.cfg.classes << " classes) to " << a.out << "\n";
    return;
  }
  // Derived streams keep the split and trial draws independent of the
  // generator draws while staying a pure function of --seed.
  auto [train, eval] =
      flownorm::split_open_set(all, a.train_fraction, a.cfg.seed + 1);
  write_vectors(a.train_out, train, a.binary);
  write_vectors(a.eval_out, eval, a.binary);
  std::cout << "wrote " << train.size() << " train / " << eval.size()
            << " eval vectors (dim " << all.dim() << ")\n";
  if (!a.trials_out.empty()) {
    flownorm::TrialList trials =
        flownorm::make_trials(eval, a.imposter_cap, a.cfg.seed + 2);
    flownorm::write_trials(a.trials_out, trials);
    std::cout << "wrote " << trials.size() << " trials to " << a.trials_out
              << "\n";
  }
}

// ---------------------------------------------------------------------------
// stats / subgroup-stats

struct StatsArgs {
  std::string in, model, report_out;
  Index k = 10;
  Index min_class_samples = 100;
};

void run_stats(const StatsArgs& a) {
  require_file(a.in);
  VectorSet data = flownorm::read_vectors(a.in);
  flownorm::ClassPriors centers;
  if (!a.model.empty()) {
    require_file(a.model);
    flownorm::load_flow(a.model, &centers);
    if (centers.empty())
      throw DataError("stats: model " + a.model + " carries no prior means");
  }
  flownorm::RegulationReport reg =
      flownorm::regulation_report(data, a.k, a.min_class_samples);
  flownorm::DiscriminationReport disc =
      flownorm::discrimination_report(data, centers);
  flownorm::print_regulation(std::cout, reg);
  flownorm::print_discrimination(std::cout, disc);

  if (!a.report_out.empty()) {
    std::ostringstream ss;
    auto kv = [&](const std::string& key, double v) {
      ss << key << ',' << flownorm::fmt_g17(v) << '\n';
    };
    ss << "key,value\n";
    kv("reg_classes_used", static_cast<double>(reg.n_classes_used));
    kv("reg_classes_skipped", static_cast<double>(reg.n_classes_skipped));
    kv("reg_avg_kurtosis", reg.avg_kurtosis);
    kv("reg_avg_kurtosis_abs", reg.avg_kurtosis_abs);
    kv("reg_avg_skewness", reg.avg_skewness);
    kv("reg_avg_skewness_signed", reg.avg_skewness_signed);
    for (std::size_t m = 0; m < reg.pc_dir_var.size(); ++m)
      kv("reg_pc" + std::to_string(m + 1) + "_dir_var", reg.pc_dir_var[m]);
    for (std::size_t m = 0; m < reg.pc_shape_var.size(); ++m)
      kv("reg_pc" + std::to_string(m + 1) + "_shape_var", reg.pc_shape_var[m]);
    kv("reg_avg_pc_dir_var", reg.avg_pc_dir_var);
    kv("reg_pc_shape_var_avg", reg.pc_shape_var_avg);
    kv("reg_between_var", reg.between_var);
    kv("reg_within_var", reg.within_var);
    kv("reg_bw_ratio", reg.bw_ratio);
    kv("disc_ce_inner", disc.ce_inner);
    kv("disc_ce_cosine", disc.ce_cosine);
    kv("disc_between_var", disc.between_var);
    kv("disc_within_var", disc.within_var);
    kv("disc_bw_ratio", disc.bw_ratio);
    kv("disc_train_eer_cosine", disc.train_eer_cosine);
    flownorm::write_file_atomic(a.report_out, ss.str());
  }
}

struct SubgroupArgs {
  std::string in, model, report_out;
  Index group_size = 0;
  Index k = 10;
  Index min_class_samples = 100;
};

void run_subgroup_stats(const SubgroupArgs& a) {
  require_file(a.in);
  require_file(a.model);
  VectorSet data = flownorm::read_vectors(a.in);
  flownorm::LinearTransform t = flownorm::load_linear(a.model);
  std::vector<flownorm::SubgroupReport> reports = flownorm::subgroup_report(
      data, t, a.group_size, a.k, a.min_class_samples);
  flownorm::print_subgroups(std::cout, reports);
  if (!a.report_out.empty()) {
    std::ostringstream ss;
    ss << "group,first_dim,group_size,cosine_eer,between_var,avg_kurtosis,"
          "avg_kurtosis_abs,avg_skewness,avg_pc_dir_var,pc_shape_var_avg\n";
    for (std::size_t g = 0; g < reports.size(); ++g) {
      const auto& r = reports[g];
      ss << g << ',' << r.first_dim << ',' << r.group_size << ','
         << flownorm::fmt_g17(r.cosine_eer) << ','
         << flownorm::fmt_g17(r.between_var) << ','
         << flownorm::fmt_g17(r.regulation.avg_kurtosis) << ','
         << flownorm::fmt_g17(r.regulation.avg_kurtosis_abs) << ','
         << flownorm::fmt_g17(r.regulation.avg_skewness) << ','
         << flownorm::fmt_g17(r.regulation.avg_pc_dir_var) << ','
         << flownorm::fmt_g17(r.regulation.pc_shape_var_avg) << '\n';
    }
    flownorm::write_file_atomic(a.report_out, ss.str());
  }
}

// ---------------------------------------------------------------------------
// train-nf / train-dnf

struct TrainArgs {
  std::string train, model_out, trace_out;
  flownorm::TrainConfig cfg;
};

void run_train(const TrainArgs& a, flownorm::TrainMode mode) {
  require_file(a.train);
  VectorSet data = flownorm::read_vectors(a.train);
  flownorm::TrainConfig cfg = a.cfg;
  cfg.mode = mode;
  flownorm::TrainResult res = flownorm::train(data, cfg);
  flownorm::save_flow(a.model_out, res.flow, res.priors);
  if (!a.trace_out.empty()) flownorm::write_trace(a.trace_out, res.trace);
  std::cout << "epochs_run " << res.epochs_run << "\n"
            << "final_nll " << flownorm::fmt_g17(res.final_nll) << "\n";
}

// ---------------------------------------------------------------------------
// fit-lda / fit-ldan / fit-whiten / fit-plda

struct FitArgs {
  std::string train, model_out, ll_out;
  Index out_dim = 0;
  double lambda = 0.1;
  int iters = 10;
};

void run_fit(const FitArgs& a, const std::string& what) {
  require_file(a.train);
  VectorSet data = flownorm::read_vectors(a.train);
  if (what == "plda") {
    std::vector<double> ll;
    flownorm::PldaModel m = flownorm::plda_fit(data, a.iters, &ll);
    flownorm::save_plda(a.model_out, m);
    if (!a.ll_out.empty()) {
      std::ostringstream ss;
      ss << "iter,ll\n";
      for (std::size_t i = 0; i < ll.size(); ++i)
        ss << i << ',' << flownorm::fmt_g17(ll[i]) << '\n';
      flownorm::write_file_atomic(a.ll_out, ss.str());
    }
    std::cout << "plda dim " << m.dim() << " em_iters " << ll.size() << "\n";
    return;
  }
  flownorm::LinearTransform t;
  if (what == "lda")
    t = flownorm::lda_fit(data, a.out_dim, a.lambda);
  else if (what == "ldan")
    t = flownorm::ldan_fit(data);
  else
    t = flownorm::whiten_fit(data);
  flownorm::save_linear(a.model_out, t);
  std::cout << t.kind << " " << t.in_dim() << " -> " << t.out_dim() << "\n";
}

// ---------------------------------------------------------------------------
// transform

struct TransformArgs {
  std::string in, out, manifest;
  std::vector<std::string> models;
  bool length_normalize = false;
  bool binary = false;
};

void run_transform(const TransformArgs& a) {
  require_file(a.in);
  for (const auto& m : a.models) require_file(m);
  if (!a.manifest.empty()) require_file(a.manifest);
  VectorSet data = flownorm::read_vectors(a.in);

  flownorm::Pipeline loaded =
      a.manifest.empty() ? flownorm::Pipeline::from_model_files(a.models)
                         : flownorm::Pipeline::from_manifest(a.manifest);
  flownorm::Pipeline full;
  if (a.length_normalize) full.add_linear(flownorm::make_length_norm());
  for (Index i = 0; i < loaded.size(); ++i) {
    const auto& s = loaded.stage(i);
    if (s.is_flow)
      full.add_flow(s.flow);
    else
      full.add_linear(s.linear);
  }
  if (full.size() == 0)
    throw ArgError("transform: no stages (give --model, --pipeline, or "
                   "--length-normalize)");
  VectorSet out = full.apply_set(data);
  write_vectors(a.out, out, a.binary);
  std::cout << "wrote " << out.size() << " vectors (dim " << out.dim()
            << ") to " << a.out << "\n";
}

// ---------------------------------------------------------------------------
// score / eval

struct ScoreArgs {
  std::string vectors, trials, out, backend = "cosine", plda_model;
};

void run_score(const ScoreArgs& a) {
  require_file(a.vectors);
  require_file(a.trials);
  if (a.backend != "cosine" && a.backend != "plda")
    throw ArgError("score: backend must be cosine or plda");
  if (a.backend == "plda" && a.plda_model.empty())
    throw ArgError("score: --plda-model required with --backend plda");

  VectorSet data = flownorm::read_vectors(a.vectors);
  flownorm::TrialList trials = flownorm::read_trials(a.trials);
  auto rows = id_index(data);
  auto row_of = [&](const std::string& id) {
    auto it = rows.find(id);
    if (it == rows.end())
      throw DataError("score: id \"" + id + "\" not in " + a.vectors);
    return it->second;
  };

  flownorm::PldaScorer scorer;
  bool use_plda = a.backend == "plda";
  if (use_plda) {
    require_file(a.plda_model);
    scorer = flownorm::make_scorer(flownorm::load_plda(a.plda_model));
  }
  std::vector<flownorm::ScoredTrial> scored;
  scored.reserve(trials.size());
  for (const auto& t : trials) {
    Vec e = data.x.row(row_of(t.enroll_id)).transpose();
    Vec s = data.x.row(row_of(t.test_id)).transpose();
    flownorm::ScoredTrial st;
    st.enroll_id = t.enroll_id;
    st.test_id = t.test_id;
    st.score = use_plda ? scorer.score(e, s) : flownorm::cosine_score(e, s);
    scored.push_back(std::move(st));
  }
  flownorm::write_scores(a.out, scored);
  std::cout << "scored " << scored.size() << " trials to " << a.out << "\n";
}

struct EvalArgs {
  std::string scores, trials;
};

void run_eval(const EvalArgs& a) {
  require_file(a.scores);
  require_file(a.trials);
  std::vector<flownorm::ScoredTrial> scored = flownorm::read_scores(a.scores);
  flownorm::TrialList trials = flownorm::read_trials(a.trials);
  std::map<std::pair<std::string, std::string>, bool> target_of;
  for (const auto& t : trials)
    target_of[{t.enroll_id, t.test_id}] = t.target;
  if (target_of.size() != trials.size())
    throw DataError("eval: duplicate trial pair in " + a.trials);
  if (scored.size() != trials.size())
    throw DataError("eval: " + std::to_string(scored.size()) +
                    " scores for " + std::to_string(trials.size()) +
                    " trials");
  std::vector<double> targets, imposters;
  for (const auto& st : scored) {
    auto it = target_of.find({st.enroll_id, st.test_id});
    if (it == target_of.end())
      throw DataError("eval: scored pair " + st.enroll_id + " " +
                      st.test_id + " not in trial list");
    (it->second ? targets : imposters).push_back(st.score);
  }
  flownorm::EerResult r = flownorm::eer(targets, imposters);
  char buf[64];
  std::snprintf(buf, sizeof buf, "EER %.4f\n", r.eer);
  std::cout << buf;
  std::cout << "threshold " << flownorm::fmt_g17(r.threshold) << "\n";
}

// ---------------------------------------------------------------------------
// pipeline run

struct PipelineArgs {
  std::string config;
  std::vector<std::string> sets;
};

std::string trimmed(const std::string& s) {
  auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::map<std::string, std::string> parse_flat_config(const std::string& text,
                                                     const std::string& name) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string t = trimmed(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ArgError(name + ":" + std::to_string(lineno) +
                     ": expected key = value");
    std::string key = trimmed(t.substr(0, eq));
    std::string value = trimmed(t.substr(eq + 1));
    if (key.empty())
      throw ArgError(name + ":" + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, value).second)
      throw ArgError(name + ": duplicate key \"" + key + "\"");
  }
  return kv;
}

long long config_int(const std::map<std::string, std::string>& kv,
                     const std::string& key, long long dflt) {
  auto it = kv.find(key);
  if (it == kv.end()) return dflt;
  try {
    std::size_t pos = 0;
    long long v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ArgError("config: " + key + " = \"" + it->second +
                   "\" is not an integer");
  }
}

double config_double(const std::map<std::string, std::string>& kv,
                     const std::string& key, double dflt) {
  auto it = kv.find(key);
  if (it == kv.end()) return dflt;
  try {
    std::size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ArgError("config: " + key + " = \"" + it->second +
                   "\" is not a number");
  }
}

std::string config_str(const std::map<std::string, std::string>& kv,
                       const std::string& key, const std::string& dflt) {
  auto it = kv.find(key);
  return it == kv.end() ? dflt : it->second;
}

void run_pipeline(const PipelineArgs& a) {
  require_file(a.config);
  auto kv = parse_flat_config(flownorm::read_file(a.config), a.config);
  for (const auto& s : a.sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ArgError("--set expects key=value, got \"" + s + "\"");
    kv[trimmed(s.substr(0, eq))] = trimmed(s.substr(eq + 1));
  }

  static const std::vector<std::string> known = {
      "train", "eval", "trials", "out_dir", "stages", "backend", "seed",
      "blocks", "hidden", "epochs", "batch_size", "lr", "trace_every",
      "prior_update", "lda_dim", "lambda", "plda_iters"};
  for (const auto& [key, value] : kv) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ArgError("config: unknown key \"" + key + "\"");
  }
  for (const char* req : {"train", "eval", "trials", "out_dir"}) {
    if (!kv.count(req))
      throw ArgError(std::string("config: missing required key \"") + req +
                     "\"");
  }

  std::vector<std::string> stages;
  {
    std::istringstream ss(config_str(kv, "stages", ""));
    std::string item;
    while (std::getline(ss, item, ',')) {
      std::string t = trimmed(item);
      if (t.empty()) continue;
      if (t != "lengthnorm" && t != "whiten" && t != "lda" && t != "ldan" &&
          t != "nf" && t != "dnf")
        throw ArgError("config: unknown stage \"" + t + "\"");
      stages.push_back(t);
    }
  }
  std::string backend = config_str(kv, "backend", "cosine");
  if (backend != "cosine" && backend != "plda")
    throw ArgError("config: backend must be cosine or plda");
  bool trains_flow =
      std::find(stages.begin(), stages.end(), "nf") != stages.end() ||
      std::find(stages.begin(), stages.end(), "dnf") != stages.end();
  if (trains_flow && !kv.count("seed"))
    throw ArgError("config: seed is required when stages include nf or dnf");

  std::string prior_update = config_str(kv, "prior_update", "gradient");
  if (prior_update != "gradient" && prior_update != "reestimate")
    throw ArgError("config: prior_update must be gradient or reestimate");

  flownorm::TrainConfig tc;
  tc.n_blocks = config_int(kv, "blocks", 10);
  tc.hidden = config_int(kv, "hidden", 0);
  tc.epochs = static_cast<int>(config_int(kv, "epochs", 20));
  tc.batch_size = config_int(kv, "batch_size", 300);
  tc.lr = config_double(kv, "lr", 0.003);
  tc.seed = static_cast<std::uint64_t>(config_int(kv, "seed", 0));
  tc.trace_every = static_cast<int>(config_int(kv, "trace_every", 0));
  tc.prior_update = prior_update == "gradient"
                        ? flownorm::PriorUpdate::kGradient
                        : flownorm::PriorUpdate::kReestimate;
  Index lda_dim = config_int(kv, "lda_dim", 0);
  // The regularized LDA objective weights the between-class scatter; cosine
  // scoring wants the mild default, PLDA wants plain LDA.
  double lambda =
      config_double(kv, "lambda", backend == "plda" ? 0.0 : 0.1);
  int plda_iters = static_cast<int>(config_int(kv, "plda_iters", 10));

  std::string train_path = kv.at("train");
  std::string eval_path = kv.at("eval");
  std::string trials_path = kv.at("trials");
  require_file(train_path);
  require_file(eval_path);
  require_file(trials_path);
  std::filesystem::path out_dir(kv.at("out_dir"));
  std::filesystem::create_directories(out_dir);

  VectorSet train_set = flownorm::read_vectors(train_path);
  VectorSet eval_set = flownorm::read_vectors(eval_path);
  flownorm::TrialList trials = flownorm::read_trials(trials_path);

  VectorSet cur = train_set;
  flownorm::Pipeline fitted;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const std::string& s = stages[i];
    std::string base =
        (out_dir / ("stage_" + std::to_string(i) + "_" + s)).string();
    if (s == "nf" || s == "dnf") {
      flownorm::TrainConfig cfg = tc;
      cfg.mode = s == "dnf" ? flownorm::TrainMode::kDnf
                            : flownorm::TrainMode::kVanillaNf;
      flownorm::TrainResult res = flownorm::train(cur, cfg);
      flownorm::save_flow(base + ".bin", res.flow, res.priors);
      flownorm::write_trace(base + "_trace.csv", res.trace);
      cur = flownorm::normalize_set(res.flow, cur);
      fitted.add_flow(res.flow);
      continue;
    }
    flownorm::LinearTransform t;
    if (s == "lengthnorm")
      t = flownorm::make_length_norm();
    else if (s == "whiten")
      t = flownorm::whiten_fit(cur);
    else if (s == "lda")
      t = flownorm::lda_fit(cur, lda_dim, lambda);
    else
      t = flownorm::ldan_fit(cur);
    flownorm::save_linear(base + ".bin", t);
    cur = flownorm::apply_set(t, cur);
    fitted.add_linear(t);
  }

  flownorm::PldaScorer scorer;
  bool use_plda = backend == "plda";
  if (use_plda) {
    flownorm::PldaModel m = flownorm::plda_fit(cur, plda_iters);
    flownorm::save_plda((out_dir / "plda.bin").string(), m);
    scorer = flownorm::make_scorer(m);
  }

  VectorSet eval_z = fitted.size() > 0 ? fitted.apply_set(eval_set) : eval_set;
  auto rows = id_index(eval_z);
  std::vector<flownorm::ScoredTrial> scored;
  std::vector<double> targets, imposters;
  scored.reserve(trials.size());
  for (const auto& t : trials) {
    auto it_e = rows.find(t.enroll_id);
    auto it_t = rows.find(t.test_id);
    if (it_e == rows.end() || it_t == rows.end())
      throw DataError("pipeline: trial id not in " + eval_path);
    Vec e = eval_z.x.row(it_e->second).transpose();
    Vec v = eval_z.x.row(it_t->second).transpose();
    flownorm::ScoredTrial st;
    st.enroll_id = t.enroll_id;
    st.test_id = t.test_id;
    st.score = use_plda ? scorer.score(e, v) : flownorm::cosine_score(e, v);
    (t.target ? targets : imposters).push_back(st.score);
    scored.push_back(std::move(st));
  }
  flownorm::write_scores((out_dir / "scores.txt").string(), scored);
  flownorm::EerResult r = flownorm::eer(targets, imposters);
  char buf[64];
  std::snprintf(buf, sizeof buf, "EER %.4f\n", r.eer);
  std::cout << buf;
  std::cout << "threshold " << flownorm::fmt_g17(r.threshold) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"normalization flows and linear backends for embedding "
               "vectors"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  RunLogger logger;
  app.add_option("--run-log", logger.path,
                 "JSON-lines run log (appended)")->capture_default_str();

  SynthArgs synth;
  CLI::App* c_synth = app.add_subcommand(
      "synth", "generate an irregular synthetic vector set");
  c_synth->add_option("--classes", synth.cfg.classes, "number of classes")->capture_default_str();
  c_synth->add_option("--samples", synth.cfg.samples_per_class,
                      "samples per class")->capture_default_str();
  c_synth->add_option("--dim", synth.cfg.dim, "vector dimension")->capture_default_str();
  c_synth->add_option("--mean-spread", synth.cfg.mean_spread,
                      "class-mean spread")->capture_default_str();
  c_synth->add_option("--cov-lo", synth.cfg.cov_scale_lo,
                      "per-axis scale lower bound")->capture_default_str();
  c_synth->add_option("--cov-hi", synth.cfg.cov_scale_hi,
                      "per-axis scale upper bound")->capture_default_str();
  c_synth->add_option("--skew", synth.cfg.skew_strength,
                      "skewness strength")->capture_default_str();
  c_synth->add_option("--tail", synth.cfg.tail_strength,
                      "heavy-tail strength")->capture_default_str();
  c_synth->add_option("--seed", synth.cfg.seed, "generator seed")->required();
  c_synth->add_option("--out", synth.out, "write the whole set here");
  c_synth->add_option("--train-out", synth.train_out,
                      "write the training-class split here");
  c_synth->add_option("--eval-out", synth.eval_out,
                      "write the held-out-class split here");
  c_synth->add_option("--train-fraction", synth.train_fraction,
                      "fraction of classes on the training side")->capture_default_str();
  c_synth->add_option("--trials-out", synth.trials_out,
                      "write verification trials over the eval split");
  c_synth->add_option("--imposter-cap", synth.imposter_cap,
                      "imposter trials per enroll record (0 = all)")->capture_default_str();
  c_synth->add_flag("--binary", synth.binary, "write binary vector files");

  StatsArgs stats;
  CLI::App* c_stats = app.add_subcommand(
      "stats", "regularity and separability reports for a vector set");
  c_stats->add_option("--in", stats.in, "vector set")->required();
  c_stats->add_option("--model", stats.model,
                      "flow model whose prior means serve as class centers");
  c_stats->add_option("--k", stats.k, "principal directions per class")->capture_default_str();
  c_stats->add_option("--min-class-samples", stats.min_class_samples,
                      "smallest class size entering the report")->capture_default_str();
  c_stats->add_option("--report-out", stats.report_out, "CSV report path");

  SubgroupArgs subg;
  CLI::App* c_subg = app.add_subcommand(
      "subgroup-stats",
      "per-group reports over discriminant-sorted dimension groups");
  c_subg->add_option("--in", subg.in, "vector set")->required();
  c_subg->add_option("--model", subg.model, "fitted lda transform")
      ->required();
  c_subg->add_option("--group-size", subg.group_size,
                     "dimensions per group")->required();
  c_subg->add_option("--k", subg.k, "principal directions per class")->capture_default_str();
  c_subg->add_option("--min-class-samples", subg.min_class_samples,
                     "smallest class size entering the report")->capture_default_str();
  c_subg->add_option("--report-out", subg.report_out, "CSV report path");

  TrainArgs tr_nf, tr_dnf;
  auto add_train_opts = [](CLI::App* c, TrainArgs& t, bool dnf) {
    c->add_option("--train", t.train, "training vector set")->required();
    c->add_option("--model-out", t.model_out, "model output path")
        ->required();
    c->add_option("--blocks", t.cfg.n_blocks, "flow blocks")->capture_default_str();
    c->add_option("--hidden", t.cfg.hidden,
                  "conditioner hidden width (0 = dim)")->capture_default_str();
    c->add_option("--epochs", t.cfg.epochs, "training epochs")->capture_default_str();
    c->add_option("--batch-size", t.cfg.batch_size, "minibatch size")->capture_default_str();
    c->add_option("--lr", t.cfg.lr, "Adam learning rate")->capture_default_str();
    c->add_option("--seed", t.cfg.seed, "training seed")->required();
    c->add_option("--trace-every", t.cfg.trace_every,
                  "probe diagnostics every n epochs (0 = off)")->capture_default_str();
    c->add_option("--probe-classes", t.cfg.probe_max_classes,
                  "probe subset class cap")->capture_default_str();
    c->add_option("--probe-samples", t.cfg.probe_max_samples,
                  "probe subset per-class cap")->capture_default_str();
    c->add_option("--trace-out", t.trace_out, "training trace CSV path");
    if (dnf) {
      c->add_option_function<std::string>(
           "--prior-update",
           [&t](const std::string& v) {
             if (v == "gradient")
               t.cfg.prior_update = flownorm::PriorUpdate::kGradient;
             else if (v == "reestimate")
               t.cfg.prior_update = flownorm::PriorUpdate::kReestimate;
             else
               throw CLI::ValidationError(
                   "--prior-update", "must be gradient or reestimate");
           },
           "class-mean update rule: gradient | reestimate");
    }
  };
  CLI::App* c_nf = app.add_subcommand(
      "train-nf", "train a plain normalization flow (single zero-mean prior)");
  add_train_opts(c_nf, tr_nf, false);
  CLI::App* c_dnf = app.add_subcommand(
      "train-dnf", "train a flow with per-class prior means");
  add_train_opts(c_dnf, tr_dnf, true);

  FitArgs f_lda, f_ldan, f_whiten, f_plda;
  CLI::App* c_lda =
      app.add_subcommand("fit-lda", "fit a discriminant projection");
  c_lda->add_option("--train", f_lda.train, "training vector set")
      ->required();
  c_lda->add_option("--model-out", f_lda.model_out, "model output path")
      ->required();
  c_lda->add_option("--out-dim", f_lda.out_dim,
                    "retained dimensions (0 = classes-1)")->capture_default_str();
  c_lda->add_option("--lambda", f_lda.lambda,
                    "between-class weight in the whitened scatter")->capture_default_str();
  CLI::App* c_ldan = app.add_subcommand(
      "fit-ldan", "fit the within-class whitening half of LDA");
  c_ldan->add_option("--train", f_ldan.train, "training vector set")
      ->required();
  c_ldan->add_option("--model-out", f_ldan.model_out, "model output path")
      ->required();
  CLI::App* c_whiten =
      app.add_subcommand("fit-whiten", "fit a total-covariance whitening");
  c_whiten->add_option("--train", f_whiten.train, "training vector set")
      ->required();
  c_whiten->add_option("--model-out", f_whiten.model_out,
                       "model output path")->required();
  CLI::App* c_plda = app.add_subcommand(
      "fit-plda", "fit a two-covariance scoring model by EM");
  c_plda->add_option("--train", f_plda.train, "training vector set")
      ->required();
  c_plda->add_option("--model-out", f_plda.model_out, "model output path")
      ->required();
  c_plda->add_option("--iters", f_plda.iters, "EM iterations")->capture_default_str();
  c_plda->add_option("--ll-out", f_plda.ll_out,
                     "CSV of the marginal log likelihood per iteration");

  TransformArgs tf;
  CLI::App* c_tf = app.add_subcommand(
      "transform", "apply saved models to a vector set, in order");
  c_tf->add_option("--in", tf.in, "input vector set")->required();
  c_tf->add_option("--out", tf.out, "output vector set")->required();
  c_tf->add_option("--model", tf.models,
                   "model file (repeatable; applied in order)");
  c_tf->add_option("--pipeline", tf.manifest,
                   "manifest listing model files, one per line")
      ->excludes("--model");
  c_tf->add_flag("--length-normalize", tf.length_normalize,
                 "scale each vector to norm sqrt(dim) first");
  c_tf->add_flag("--binary", tf.binary, "write a binary vector file");

  ScoreArgs sc;
  CLI::App* c_sc = app.add_subcommand("score", "score verification trials");
  c_sc->add_option("--vectors", sc.vectors, "vector set covering all trial "
                   "ids")->required();
  c_sc->add_option("--trials", sc.trials, "trial list")->required();
  c_sc->add_option("--out", sc.out, "score file output path")->required();
  c_sc->add_option("--backend", sc.backend, "cosine | plda")->capture_default_str();
  c_sc->add_option("--plda-model", sc.plda_model, "fitted plda model");

  EvalArgs ev;
  CLI::App* c_ev = app.add_subcommand("eval", "equal error rate of a score "
                                      "file");
  c_ev->add_option("--scores", ev.scores, "score file")->required();
  c_ev->add_option("--trials", ev.trials, "trial list with target flags")
      ->required();

  PipelineArgs pl;
  CLI::App* c_pl = app.add_subcommand("pipeline", "declarative multi-stage "
                                      "runs");
  c_pl->require_subcommand(1);
  CLI::App* c_plr = c_pl->add_subcommand(
      "run", "fit stages, score, and evaluate from one config");
  c_plr->add_option("--config", pl.config, "flat key = value config file")
      ->required();
  c_plr->add_option("--set", pl.sets,
                    "override a config key (key=value, repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  logger.args.assign(argv + 1, argv + argc);
  try {
    if (*c_synth) {
      logger.cmd = "synth";
      logger.has_seed = true;
      logger.seed = synth.cfg.seed;
      run_synth(synth);
    } else if (*c_stats) {
      logger.cmd = "stats";
      run_stats(stats);
    } else if (*c_subg) {
      logger.cmd = "subgroup-stats";
      run_subgroup_stats(subg);
    } else if (*c_nf) {
      logger.cmd = "train-nf";
      logger.has_seed = true;
      logger.seed = tr_nf.cfg.seed;
      run_train(tr_nf, flownorm::TrainMode::kVanillaNf);
    } else if (*c_dnf) {
      logger.cmd = "train-dnf";
      logger.has_seed = true;
      logger.seed = tr_dnf.cfg.seed;
      run_train(tr_dnf, flownorm::TrainMode::kDnf);
    } else if (*c_lda) {
      logger.cmd = "fit-lda";
      run_fit(f_lda, "lda");
    } else if (*c_ldan) {
      logger.cmd = "fit-ldan";
      run_fit(f_ldan, "ldan");
    } else if (*c_whiten) {
      logger.cmd = "fit-whiten";
      run_fit(f_whiten, "whiten");
    } else if (*c_plda) {
      logger.cmd = "fit-plda";
      run_fit(f_plda, "plda");
    } else if (*c_tf) {
      logger.cmd = "transform";
      run_transform(tf);
    } else if (*c_sc) {
      logger.cmd = "score";
      run_score(sc);
    } else if (*c_ev) {
      logger.cmd = "eval";
      run_eval(ev);
    } else if (*c_pl) {
      logger.cmd = "pipeline run";
      if (std::find(pl.sets.begin(), pl.sets.end(), "") != pl.sets.end())
        throw ArgError("--set expects key=value");
      run_pipeline(pl);
    }
  } catch (const ArgError& e) {
    std::cerr << "ERROR (arguments): " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "ERROR (data): " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "ERROR (numeric): " << e.what() << "\n";
    return 3;
  }
  logger.finish();
  return 0;
}
