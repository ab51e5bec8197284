// hclab: generate, train, sweep, analyze, evaluate and verify.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hclab/io.hpp"
#include "hclab/kernels.hpp"
#include "hclab/pipeline.hpp"
#include "hclab/verify.hpp"

using namespace hclab;

namespace {

constexpr const char* kSynopsis =
    "usage: hclab <command> [options]\n"
    "  gen --config F --out F [--set k=v ...]\n"
    "  train --data F --config F --out-ckpt F --metrics F [--set k=v ...]\n"
    "  sweep --config F --out-dir D [--set k=v ...]\n"
    "  analyze --ckpt F --data F --report F [--projections F]\n"
    "  eval --task zeroshot|fewshot|probe|discovery|variants --ckpt F --data F [--k N] --report F\n"
    "  verify [--ckpt F] [--seed N]\n"
    "environment: EC_THREADS caps worker threads (default 1)\n";

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
  for (const auto& o : overrides) apply_override(j, o);
  return run_config_from_json(j);
}

ModelState load_checkpoint(const std::string& path, AdamState* opt = nullptr) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
  return checkpoint_from_json(j, opt);
}

Dataset load_dataset(const std::string& path) { return dataset_from_jsonl(read_file(path)); }

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << kSynopsis;
    return 1;
  }

  CLI::App app{"hierarchical contrastive lab"};
  app.require_subcommand(1);
  app.set_help_flag("-h,--help");

  std::string config, out, data, ckpt, metrics, out_dir, report, projections, task;
  std::vector<std::string> overrides;
  std::size_t k = 5;
  std::uint64_t seed = 0;

  auto* gen = app.add_subcommand("gen", "generate a dataset");
  gen->add_option("--config", config)->required();
  gen->add_option("--out", out)->required();
  gen->add_option("--set", overrides);

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--data", data)->required();
  train->add_option("--config", config)->required();
  train->add_option("--out-ckpt", out)->required();
  train->add_option("--metrics", metrics)->required();
  train->add_option("--set", overrides);

  auto* sweep = app.add_subcommand("sweep", "run the nested-scale sweep");
  sweep->add_option("--config", config)->required();
  sweep->add_option("--out-dir", out_dir)->required();
  sweep->add_option("--set", overrides);

  auto* analyze = app.add_subcommand("analyze", "geometry report of a checkpoint");
  analyze->add_option("--ckpt", ckpt)->required();
  analyze->add_option("--data", data)->required();
  analyze->add_option("--report", report)->required();
  analyze->add_option("--projections", projections);

  auto* eval = app.add_subcommand("eval", "evaluation protocols");
  eval->add_option("--task", task)->required()->check(
      CLI::IsMember({"zeroshot", "fewshot", "probe", "discovery", "variants"}));
  eval->add_option("--ckpt", ckpt)->required();
  eval->add_option("--data", data)->required();
  eval->add_option("--k", k);
  eval->add_option("--report", report)->required();
  eval->add_option("--seed", seed);

  auto* verify = app.add_subcommand("verify", "run the self-check suites");
  verify->add_option("--ckpt", ckpt);
  verify->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << kSynopsis;
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "hclab: " << e.what() << "\n" << kSynopsis;
    return 1;
  }

  try {
    kernels::set_thread_count(kernels::threads_from_env());

    if (*gen) {
      const RunConfig cfg = load_config(config, overrides);
      write_file(out, dataset_to_jsonl(generate_dataset(cfg.synth)));
      std::cerr << "wrote " << out << "\n";
    } else if (*train) {
      const RunConfig cfg = load_config(config, overrides);
      const Dataset ds = load_dataset(data);
      TrainCallbacks cb;
      cb.on_epoch = [](const MetricsRow& r, const ModelState&) {
        std::cerr << "epoch " << r.epoch << " step " << r.step << " loss " << r.loss << "\n";
      };
      const auto res = train_run(ds, cfg.model, cfg.train, cb);
      write_file(out, dump_json(checkpoint_to_json(res.model, &res.optimizer)));
      write_file(metrics, metrics_csv(res.metrics));
    } else if (*sweep) {
      const RunConfig cfg = load_config(config, overrides);
      const auto results = run_sweep(cfg, out_dir);
      std::cout << read_file(std::filesystem::path(out_dir) / "trend.csv");
    } else if (*analyze) {
      const ModelState m = load_checkpoint(ckpt);
      const Dataset ds = load_dataset(data);
      const GeometryReport r = geometry_report(m, ds);
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
      write_file(report, dump_json(to_json(r)));
      if (!projections.empty()) write_file(projections, projections_csv(r, ds));
    } else if (*eval) {
      const ModelState m = load_checkpoint(ckpt);
      const Dataset ds = load_dataset(data);
      const auto reports = run_eval(parse_eval_task(task), m, ds, k, ProbeConfig{}, seed);
      Json j = Json::array();
      for (const auto& r : reports) {
        j.push_back(to_json(r));
        std::cout << r.task << " " << format_double(r.accuracy) << "\n";
      }
      write_file(report, dump_json(reports.size() == 1 ? j[0] : j));
    } else if (*verify) {
      std::optional<ModelState> m;
      if (!ckpt.empty()) m = load_checkpoint(ckpt);
      const auto results = run_verify(m ? &*m : nullptr, seed);
      bool ok = true;
      for (const auto& r : results) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.suite << ": " << r.detail << "\n";
        if (!r.passed) {
          ok = false;
          std::cerr << "failing instance for " << r.suite << ":\n" << r.failing_instance.dump() << "\n";
        }
      }
      return ok ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "hclab: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
