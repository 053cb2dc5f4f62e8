#pragma once

// Command-line front end.
//
//   gen-data --spec <file> --out <file>
//   train    --config <file> --out <ckpt>
//   eval     --ckpt <file> --data <file> --way N --shot K --episodes E
//            --mode fewshot|ensemble|zeroshot [--beta x]
//   zeroshot   (eval with --mode zeroshot)
//   export-features --ckpt <file> --data <file> --out <csv>
//
// Each command prints a human-readable report and writes a key = value
// result file (--result, defaulting next to the main output).
// Exit status: 0 ok, 2 usage/config, 3 data, 4 numeric, 5 io.

#include "fsar/checkpoint.hpp"
#include "fsar/config.hpp"
#include "fsar/core.hpp"
#include "fsar/data.hpp"
#include "fsar/evaluate.hpp"
#include "fsar/export.hpp"
#include "fsar/train.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

namespace fsar {

namespace cli_detail {

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline void write_result(const std::string& path, const std::string& body) { io::write_file(path, body); }

inline std::string percent(double x) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * x << "%";
  return os.str();
}

struct EvalArgs {
  std::string ckpt;
  std::string data;
  int way = 5;
  int shot = 1;
  int episodes = 10000;
  std::string mode = "fewshot";
  std::optional<double> beta;
  std::optional<int> queries;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  std::string result;
};

inline void add_eval_options(CLI::App* cmd, EvalArgs& a, bool with_mode) {
  cmd->add_option("--ckpt", a.ckpt, "checkpoint file")->required();
  cmd->add_option("--data", a.data, "dataset file (novel split is evaluated)")->required();
  cmd->add_option("--way", a.way, "classes per episode")->capture_default_str();
  cmd->add_option("--shot", a.shot, "support videos per class")->capture_default_str();
  cmd->add_option("--episodes", a.episodes, "number of sampled episodes")->capture_default_str();
  if (with_mode) {
    cmd->add_option("--mode", a.mode, "prediction head")
        ->check(CLI::IsMember({"fewshot", "ensemble", "zeroshot"}))
        ->capture_default_str();
  }
  cmd->add_option("--beta", a.beta, "ensemble exponent in [0, 1] (default: from checkpoint)");
  cmd->add_option("--queries", a.queries, "queries per class (default: from checkpoint)");
  cmd->add_option("--seed", a.seed, "episode sampling seed (default: checkpoint seed)");
  cmd->add_option("--workers", a.workers, "evaluation threads")->capture_default_str();
  cmd->add_option("--result", a.result, "machine-readable result file (default: <ckpt>.<mode>.result)");
}

inline int run_eval(const EvalArgs& a, std::ostream& out) {
  const PredictMode mode = parse_mode(a.mode);
  const Model model = load_checkpoint(a.ckpt);
  const Dataset data = load_dataset(a.data);
  EvalOptions opt;
  opt.beta = a.beta;
  opt.queries_per_class = a.queries;
  opt.workers = a.workers;
  const std::uint64_t seed = a.seed.value_or(model.config.seed);
  const auto t0 = std::chrono::steady_clock::now();
  const EvalReport r = evaluate(model, data, a.way, a.shot, a.episodes, mode, seed, opt);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  out << "mode " << mode_name(mode) << ", " << a.way << "-way " << a.shot << "-shot, " << r.episodes
      << " episodes, seed " << seed << "\n";
  out << "accuracy " << percent(r.mean_accuracy) << " +- " << percent(r.ci95) << " (95% CI, " << r.total_queries
      << " queries, " << std::fixed << std::setprecision(1) << secs << " s)\n";

  std::ostringstream res;
  res << std::setprecision(17);
  res << "command = eval\n";
  res << "config_hash = " << hex64(config_hash(model.config)) << "\n";
  res << "checkpoint = " << a.ckpt << "\n";
  res << "data = " << a.data << "\n";
  res << "mode = " << mode_name(mode) << "\n";
  res << "way = " << a.way << "\n";
  res << "shot = " << a.shot << "\n";
  res << "episodes = " << r.episodes << "\n";
  res << "queries = " << r.total_queries << "\n";
  res << "seed = " << seed << "\n";
  res << "beta = " << a.beta.value_or(model.config.beta) << "\n";
  res << "mean_accuracy = " << r.mean_accuracy << "\n";
  res << "ci95 = " << r.ci95 << "\n";
  write_result(a.result.empty() ? a.ckpt + "." + mode_name(mode) + ".result" : a.result, res.str());
  return 0;
}

}  // namespace cli_detail

inline int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot sequence classification with text-guided prototype modulation", "fsar"};
  app.require_subcommand(1, 1);

  std::string spec_path, gen_out, gen_result;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset from a spec file");
  gen->add_option("--spec", spec_path, "synthetic spec (key = value)")->required();
  gen->add_option("--out", gen_out, "dataset file to write")->required();
  gen->add_option("--result", gen_result, "result file (default: <out>.result)");

  std::string config_path, train_out, train_result;
  bool quiet = false;
  auto* tr = app.add_subcommand("train", "train a model from a config file");
  tr->add_option("--config", config_path, "run config (key = value)")->required();
  tr->add_option("--out", train_out, "checkpoint file to write")->required();
  tr->add_option("--result", train_result, "result file (default: <out>.result)");
  tr->add_flag("--quiet", quiet, "suppress loss telemetry");

  cli_detail::EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the novel split");
  cli_detail::add_eval_options(ev, eval_args, true);

  cli_detail::EvalArgs zs_args;
  zs_args.mode = "zeroshot";
  auto* zs = app.add_subcommand("zeroshot", "alias for eval --mode zeroshot");
  cli_detail::add_eval_options(zs, zs_args, false);

  std::string ex_ckpt, ex_data, ex_out;
  auto* ex = app.add_subcommand("export-features", "dump raw and modulated features as CSV");
  ex->add_option("--ckpt", ex_ckpt, "checkpoint file")->required();
  ex->add_option("--data", ex_data, "dataset file")->required();
  ex->add_option("--out", ex_out, "CSV file to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*gen) {
      const SyntheticSpec spec = parse_synthetic_spec(io::read_file(spec_path));
      const Dataset data = generate_synthetic(spec);
      save_dataset(data, gen_out);
      out << "wrote " << data.samples().size() << " videos, " << data.classes().base_ids.size() << " base + "
          << data.classes().novel_ids.size() << " novel classes, frame dim " << data.frame_dim() << " -> " << gen_out
          << "\n";
      std::ostringstream res;
      res << "command = gen-data\n";
      res << "spec_hash = " << cli_detail::hex64(fnv1a(to_spec_text(spec))) << "\n";
      res << "seed = " << spec.seed << "\n";
      res << "videos = " << data.samples().size() << "\n";
      res << "base_classes = " << data.classes().base_ids.size() << "\n";
      res << "novel_classes = " << data.classes().novel_ids.size() << "\n";
      cli_detail::write_result(gen_result.empty() ? gen_out + ".result" : gen_result, res.str());
      return 0;
    }
    if (*tr) {
      const RunConfig cfg = load_config(config_path);
      TelemetrySink sink;
      if (!quiet) {
        sink = [&out](const TrainTelemetry& t) {
          out << "step " << t.step << "  loss " << std::setprecision(6) << t.loss << "  video-text "
              << t.video_text_loss << "  few-shot " << t.few_shot_loss << "  tau " << t.tau << "\n";
        };
      }
      const auto t0 = std::chrono::steady_clock::now();
      const Model model = train(cfg, sink);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      save_checkpoint(model, train_out);
      out << "trained " << model.step << " episodes (" << model.parameter_count() << " parameters, " << std::fixed
          << std::setprecision(1) << secs << " s) -> " << train_out << "\n";
      std::ostringstream res;
      res << std::setprecision(17);
      res << "command = train\n";
      res << "config_hash = " << cli_detail::hex64(config_hash(cfg)) << "\n";
      res << "seed = " << cfg.seed << "\n";
      res << "steps = " << model.step << "\n";
      res << "tau = " << model.tau() << "\n";
      cli_detail::write_result(train_result.empty() ? train_out + ".result" : train_result, res.str());
      return 0;
    }
    if (*ev) return cli_detail::run_eval(eval_args, out);
    if (*zs) return cli_detail::run_eval(zs_args, out);
    if (*ex) {
      const Model model = load_checkpoint(ex_ckpt);
      const Dataset data = load_dataset(ex_data);
      std::ofstream file(ex_out, std::ios::trunc);
      if (!file) throw Error(Errc::io_failure, "cannot open '" + ex_out + "' for writing");
      export_features(model, data, file);
      out << "exported features for " << data.samples().size() << " videos -> " << ex_out << "\n";
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace fsar
