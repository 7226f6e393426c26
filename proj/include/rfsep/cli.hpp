#pragma once

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "rfsep/bytes.hpp"
#include "rfsep/datagen.hpp"
#include "rfsep/error.hpp"
#include "rfsep/eval.hpp"
#include "rfsep/grad_check.hpp"
#include "rfsep/json_util.hpp"
#include "rfsep/ops.hpp"
#include "rfsep/train.hpp"
#include "rfsep/wavenet.hpp"

// Command-line front end. Exit codes: 0 success, 1 structured error, 2 usage.
namespace rfsep::cli {

namespace fs = std::filesystem;

struct EvalOptions {
  std::string label = "model";
  double target_ber = 1e-3;
};

inline void to_json(Json& j, const EvalOptions& e) { j = Json{{"label", e.label}, {"target_ber", e.target_ber}}; }

inline void from_json(const Json& j, EvalOptions& e) {
  reject_unknown_keys(j, {"label", "target_ber"}, "eval");
  read_optional(j, "label", e.label, "eval");
  read_optional(j, "target_ber", e.target_ber, "eval");
}

struct GradCheckConfig {
  int cases = 50;
  std::uint64_t seed = 0;
  std::vector<double> dilations = {1.3, 1.5, 2.7};
  int length = 32;
  int channels = 2;
  double tolerance = 1e-4;
};

inline void to_json(Json& j, const GradCheckConfig& g) {
  j = Json{{"cases", g.cases},   {"seed", g.seed},         {"dilations", g.dilations},
           {"length", g.length}, {"channels", g.channels}, {"tolerance", g.tolerance}};
}

inline void from_json(const Json& j, GradCheckConfig& g) {
  reject_unknown_keys(j, {"cases", "seed", "dilations", "length", "channels", "tolerance"}, "gradcheck");
  read_optional(j, "cases", g.cases, "gradcheck");
  read_optional(j, "seed", g.seed, "gradcheck");
  read_optional(j, "dilations", g.dilations, "gradcheck");
  read_optional(j, "length", g.length, "gradcheck");
  read_optional(j, "channels", g.channels, "gradcheck");
  read_optional(j, "tolerance", g.tolerance, "gradcheck");
}

/// The complete configuration tree. A config file may set any subset; keys
/// outside this tree are rejected.
struct RunConfig {
  datagen::DatasetSpec dataset;
  wavenet::WaveNetConfig model;
  train::TrainConfig train;
  EvalOptions eval;
  GradCheckConfig gradcheck;
};

inline Json to_json(const RunConfig& c) {
  return Json{{"dataset", c.dataset}, {"model", c.model}, {"train", c.train}, {"eval", c.eval}, {"gradcheck", c.gradcheck}};
}

inline RunConfig run_config_from_json(const Json& j) {
  reject_unknown_keys(j, {"dataset", "model", "train", "eval", "gradcheck"}, "config");
  RunConfig c;
  if (j.contains("dataset")) from_json(j.at("dataset"), c.dataset);
  if (j.contains("model")) from_json(j.at("model"), c.model);
  if (j.contains("train")) from_json(j.at("train"), c.train);
  if (j.contains("eval")) from_json(j.at("eval"), c.eval);
  if (j.contains("gradcheck")) from_json(j.at("gradcheck"), c.gradcheck);
  return c;
}

/// Applies "a.b.c=value" to `j`. The path must already exist; the value is
/// parsed as JSON when possible and taken as a string otherwise.
inline void apply_override(Json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorCode::invalid_argument, "--set expects key=value, got '" + assignment + "'");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) {
      throw Error(ErrorCode::invalid_argument, "--set: unknown key '" + path + "'");
    }
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  Json value = Json::parse(text, nullptr, false);
  *node = value.is_discarded() ? Json(text) : value;
}

inline RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  Json effective = to_json(RunConfig{});
  if (!path.empty()) {
    const auto data = bytes::read_file(path);
    const Json user = parse_json(std::string(data.begin(), data.end()), path);
    run_config_from_json(user);  // rejects unknown keys with a precise location
    effective.merge_patch(user);
  }
  for (const auto& o : overrides) apply_override(effective, o);
  return run_config_from_json(effective);
}

inline std::size_t resolve_threads(int flag) {
  if (flag > 0) return static_cast<std::size_t>(flag);
  if (const char* env = std::getenv("RFSEP_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return static_cast<std::size_t>(n);
  }
  return 1;
}

inline void write_json(const fs::path& path, const Json& j) {
  eval::write_text(path, j.dump(2) + "\n");
}

inline std::string file_hash(const fs::path& path) {
  return "fnv1a64:" + bytes::fnv1a_hex(bytes::read_file(path.string()));
}

// Shared state of one invocation.
struct Invocation {
  std::string subcommand;
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  int threads = 0;
  // subcommand-specific
  std::string input, train_data, val_data, data, checkpoint, baseline, candidate;
  double target_ber = -1.0;
};

inline wavenet::WaveNetModel load_model(const std::string& path) { return wavenet::load_checkpoint(path).model; }

inline Json run_gen(const RunConfig& cfg, const fs::path& out, std::size_t threads, Json& outputs) {
  const auto path = out / "dataset.sigpack";
  const auto manifest = datagen::generate_dataset(cfg.dataset, path.string(), threads);
  outputs["dataset.sigpack"] = file_hash(path);
  return Json{{"master_seed", cfg.dataset.master_seed}, {"count", manifest.at("count")}};
}

inline Json run_augment(const Invocation& inv, const fs::path& out, Json& outputs) {
  if (inv.input.empty()) throw Error(ErrorCode::invalid_argument, "augment: --input is required");
  const auto pack = datagen::read_sigpack(inv.input);
  const auto summary = datagen::augment_all(pack.examples);
  const auto path = out / "augmented.sigpack";
  datagen::write_sigpack(summary.accepted, path.string(),
                         Json{{"augmented_from", fs::path(inv.input).filename().string()}, {"source_spec", pack.spec}});
  outputs["augmented.sigpack"] = file_hash(path);
  return Json{{"input_count", pack.examples.size()}, {"accepted", summary.accepted.size()}, {"rejected", summary.rejected}};
}

inline Json run_train(const Invocation& inv, RunConfig cfg, const fs::path& out, Json& outputs) {
  if (inv.train_data.empty() || inv.val_data.empty()) {
    throw Error(ErrorCode::invalid_argument, "train: --train and --val are required");
  }
  const auto train_set = datagen::read_sigpack(inv.train_data).examples;
  const auto val_set = datagen::read_sigpack(inv.val_data).examples;
  cfg.train.checkpoint_path = (out / "model.ckpt").string();
  const std::uint64_t init_seed = hash_seed(cfg.train.seed, 1);
  auto model = wavenet::wavenet_init(cfg.model, init_seed);
  const auto result = train::train(model, train_set, val_set, cfg.train);
  // The trainer checkpoints on improvement; rewrite the best model with run metadata.
  wavenet::save_checkpoint(result.best, cfg.train.checkpoint_path,
                           {{"best_epoch", result.history.best_epoch}, {"best_val", result.history.best_val}});
  eval::write_text(out / "history.jsonl", train::history_jsonl(result.history));
  outputs["model.ckpt"] = file_hash(out / "model.ckpt");
  outputs["history.jsonl"] = file_hash(out / "history.jsonl");
  return Json{{"init_seed", init_seed},
              {"train_seed", cfg.train.seed},
              {"epochs", result.history.epochs.size()},
              {"best_epoch", result.history.best_epoch},
              {"best_val", result.history.best_val},
              {"stop_reason", result.history.stop_reason}};
}

inline void record_report(const eval::ReportFiles& files, Json& outputs) {
  for (const auto& p : files.csv) outputs[p.filename().string()] = file_hash(p);
  outputs[files.summary.filename().string()] = file_hash(files.summary);
}

inline Json run_eval(const Invocation& inv, const RunConfig& cfg, const fs::path& out, std::size_t threads,
                     Json& outputs) {
  if (inv.checkpoint.empty() || inv.data.empty()) {
    throw Error(ErrorCode::invalid_argument, "eval: --checkpoint and --data are required");
  }
  const auto model = load_model(inv.checkpoint);
  const auto test_set = datagen::read_sigpack(inv.data).examples;
  const auto result = eval::evaluate(eval::wavenet_separator(model), test_set, cfg.eval.label, {}, threads);
  const auto nul = eval::evaluate(eval::null_separator(), test_set, "null", {}, threads);
  std::vector<eval::Comparison> comps;
  if (result.ber.points.size() >= 2) comps.push_back(eval::compare(nul.ber, result.ber, cfg.eval.target_ber));
  record_report(eval::emit_report({result.ber, nul.ber}, {result.mse, nul.mse}, comps, out), outputs);
  return Json{{"examples", test_set.size()}};
}

inline Json run_compare(const Invocation& inv, const RunConfig& cfg, const fs::path& out, std::size_t threads,
                        Json& outputs) {
  if (inv.baseline.empty() || inv.candidate.empty() || inv.data.empty()) {
    throw Error(ErrorCode::invalid_argument, "compare: --baseline, --candidate and --data are required");
  }
  const double target = inv.target_ber > 0.0 ? inv.target_ber : cfg.eval.target_ber;
  const auto base_model = load_model(inv.baseline);
  const auto cand_model = load_model(inv.candidate);
  const auto test_set = datagen::read_sigpack(inv.data).examples;
  const auto base = eval::evaluate(eval::wavenet_separator(base_model), test_set, "baseline", {}, threads);
  const auto cand = eval::evaluate(eval::wavenet_separator(cand_model), test_set, "candidate", {}, threads);
  const auto comp = eval::compare(base.ber, cand.ber, target);
  record_report(eval::emit_report({base.ber, cand.ber}, {base.mse, cand.mse}, {comp}, out), outputs);
  return Json{{"target_ber", target}, {"comparison", eval::to_json(comp)}};
}

/// Gradient check of conv1d_frac w.r.t. input, kernel and dilation on random
/// 3-tap problems at each configured (non-integer) dilation.
inline Json gradcheck_report(const GradCheckConfig& g) {
  Xoshiro256pp rng(g.seed);
  const auto ch = static_cast<std::size_t>(g.channels);
  const auto len = static_cast<std::size_t>(g.length);
  double worst = 0.0;
  Json cases = Json::array();
  for (int c = 0; c < g.cases; ++c) {
    const double d = g.dilations[static_cast<std::size_t>(c) % g.dilations.size()];
    auto rand_tensor = [&rng](ad::Shape s, bool grad) {
      std::vector<double> v(ad::numel(s));
      for (auto& x : v) x = rng.uniform(-1.0, 1.0);
      return ad::Tensor::from(std::move(s), std::move(v), grad);
    };
    std::vector<ad::Tensor> inputs{rand_tensor({ch, len}, true), rand_tensor({ch, ch, 3}, true),
                                   ad::Tensor::scalar(d, true)};
    const auto weights = rand_tensor({ch, len}, false);
    const auto report = ad::grad_check(
        [&weights](const std::vector<ad::Tensor>& in) {
          return ad::weighted_sum(ad::conv1d_frac(in[0], in[1], in[2]), weights);
        },
        inputs, {1e-5, g.tolerance, 1e-6});
    worst = std::max(worst, report.max_relative_error);
    cases.push_back({{"dilation", d},
                     {"max_relative_error", report.max_relative_error},
                     {"input", report.per_input_max[0]},
                     {"kernel", report.per_input_max[1]},
                     {"dilation_grad", report.per_input_max[2]}});
  }
  return Json{{"max_relative_error", worst}, {"tolerance", g.tolerance}, {"passed", worst < g.tolerance}, {"cases", cases}};
}

inline const char* usage_text() {
  return "usage: rfsep <gen|augment|train|eval|compare|gradcheck> [--config FILE] [--set key=value]... "
         "--out DIR [--threads N]\n";
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"RF co-channel separation with learnable-dilation WaveNet", "rfsep"};
  app.require_subcommand(1, 1);
  Invocation inv;
  const std::map<std::string, std::string> descriptions{
      {"gen", "synthesize a dataset"},     {"augment", "resynthesis augmentation of a dataset"},
      {"train", "train a separator"},      {"eval", "BER/MSE curves for a checkpoint"},
      {"compare", "compare two checkpoints"}, {"gradcheck", "verify conv1d_frac gradients"}};
  for (const auto& [name, description] : descriptions) {
    auto* sub = app.add_subcommand(name, description);
    sub->add_option("--config", inv.config_path, "JSON config file");
    sub->add_option("--set", inv.overrides, "override a config value (dotted path)")->take_all();
    sub->add_option("--out", inv.out_dir, "output directory")->required();
    sub->add_option("--threads", inv.threads, "worker threads (falls back to RFSEP_THREADS)");
    if (name == "augment") sub->add_option("--input", inv.input, "sigpack to augment")->required();
    if (name == "train") {
      sub->add_option("--train", inv.train_data, "training sigpack")->required();
      sub->add_option("--val", inv.val_data, "validation sigpack")->required();
    }
    if (name == "eval") {
      sub->add_option("--checkpoint", inv.checkpoint, "model checkpoint")->required();
      sub->add_option("--data", inv.data, "test sigpack")->required();
    }
    if (name == "compare") {
      sub->add_option("--baseline", inv.baseline, "baseline checkpoint")->required();
      sub->add_option("--candidate", inv.candidate, "candidate checkpoint")->required();
      sub->add_option("--data", inv.data, "test sigpack")->required();
      sub->add_option("--target-ber", inv.target_ber, "target BER for the SINR comparison");
    }
    sub->callback([&inv, name] { inv.subcommand = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << usage_text();
    return 2;
  }

  try {
    const auto started = std::chrono::steady_clock::now();
    const RunConfig cfg = load_run_config(inv.config_path, inv.overrides);
    const fs::path out_dir(inv.out_dir);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorCode::io, "cannot create '" + out_dir.string() + "': " + ec.message());
    Json effective = to_json(cfg);
    if (inv.subcommand == "train") effective["train"]["checkpoint_path"] = (out_dir / "model.ckpt").string();
    write_json(out_dir / "config.json", effective);

    const std::size_t threads = resolve_threads(inv.threads);
    Json outputs = Json::object();
    Json details;
    int code = 0;
    if (inv.subcommand == "gen") {
      details = run_gen(cfg, out_dir, threads, outputs);
    } else if (inv.subcommand == "augment") {
      details = run_augment(inv, out_dir, outputs);
    } else if (inv.subcommand == "train") {
      details = run_train(inv, cfg, out_dir, outputs);
    } else if (inv.subcommand == "eval") {
      details = run_eval(inv, cfg, out_dir, threads, outputs);
    } else if (inv.subcommand == "compare") {
      details = run_compare(inv, cfg, out_dir, threads, outputs);
    } else {
      details = gradcheck_report(cfg.gradcheck);
      write_json(out_dir / "gradcheck.json", details);
      outputs["gradcheck.json"] = file_hash(out_dir / "gradcheck.json");
      if (!details.at("passed").get<bool>()) {
        err << "gradcheck: max relative error " << details.at("max_relative_error").get<double>()
            << " exceeds tolerance\n";
        code = 1;
      }
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    write_json(out_dir / "run_manifest.json", Json{{"subcommand", inv.subcommand},
                                                   {"config", effective},
                                                   {"threads", threads},
                                                   {"details", details},
                                                   {"outputs", outputs},
                                                   {"wall_time_s", wall}});
    out << inv.subcommand << ": done, outputs in " << out_dir.string() << "\n";
    return code;
  } catch (const rfsep::Error& e) {
    err << "rfsep " << inv.subcommand << ": [" << code_name(e.code()) << "] " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "rfsep " << inv.subcommand << ": " << e.what() << "\n";
    return 1;
  }
}

}  // namespace rfsep::cli
