// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
//
//   hclab_acceptance --configs DIR --work DIR [--record]
//
// --record rewrites DIR/digests.json from this run instead of checking it.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "hclab/io.hpp"
#include "hclab/kernels.hpp"
#include "hclab/pipeline.hpp"
#include "hclab/verify.hpp"
#include "oracles.hpp"

using namespace hclab;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << ": " << detail << std::endl;
  if (!ok) ++failures;
}

// Runs fn, turning exceptions into a failed criterion.
void criterion(int id, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    report(id, false, std::string("threw: ") + e.what());
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

RunConfig load(const fs::path& p) { return run_config_from_json(Json::parse(read_file(p))); }

// Every regular file under dir, keyed by relative path, hashed.
std::map<std::string, std::string> tree_digests(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).generic_string()] = hex64(fnv1a64(read_file(e.path())));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path configs = "configs/acceptance", work = "acceptance_work";
  bool record = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--configs" && i + 1 < argc) configs = argv[++i];
    else if (a == "--work" && i + 1 < argc) work = argv[++i];
    else if (a == "--record") record = true;
    else {
      std::cerr << "usage: hclab_acceptance --configs DIR --work DIR [--record]\n";
      return 1;
    }
  }
  fs::remove_all(work);
  kernels::set_thread_count(kernels::threads_from_env());

  criterion(1, [] {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = suite_gradient_fd(0);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(1, r.passed && secs < 5.0, r.detail + ", " + fmt(secs) + " s");
  });

  criterion(2, [] {
    const auto a = suite_first_order(0);
    const auto b = suite_hessian_span(0);
    const auto c = suite_taylor_remainder(0);
    report(2, a.passed && b.passed && c.passed, a.detail + "; " + b.detail + "; " + c.detail);
  });

  // The scale sweep feeds criteria 3, 4, 5 and 9.
  std::vector<ScaleResult> sweep;
  std::string sweep_error;
  try {
    sweep = run_sweep(load(configs / "sweep.json"), work / "sweep");
  } catch (const std::exception& e) {
    sweep_error = e.what();
  }
  auto need_sweep = [&] {
    if (!sweep_error.empty()) throw std::runtime_error("sweep: " + sweep_error);
    if (sweep.size() < 2) throw std::runtime_error("sweep needs at least two scales");
  };

  criterion(3, [&] {
    need_sweep();
    PrototypeSet p;
    p.mu = Matrix{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}};
    VariationMatrix d;
    d.d = Matrix{{1.0}, {0.0}, {1.0}};
    const double hand = explained_variance_ratio(p, d);
    bool ok = std::abs(hand - 0.5) < 1e-12;
    for (const auto& s : sweep)
      for (const auto& a : s.report.axes)
        ok = ok && a.rho_empirical && *a.rho_empirical >= 0.0 && *a.rho_empirical <= 1.0;
    const auto span = suite_span_orthogonality(&sweep.back().model, 0);
    report(3, ok && span.passed, "hand rho " + fmt(hand) + ", " + span.detail);
  });

  criterion(4, [&] {
    need_sweep();
    const auto& lo = sweep.front();
    const auto& hi = sweep.back();
    bool ok = true;
    std::string d;
    for (std::size_t i = 1; i < sweep.size(); ++i) ok = ok && sweep[i].zeroshot_acc > sweep[i - 1].zeroshot_acc;
    d = "zero-shot";
    for (const auto& s : sweep) d += " " + fmt(s.zeroshot_acc);
    for (std::size_t a = 0; a < lo.report.axes.size(); ++a) {
      const auto& x = lo.report.axes[a];
      const auto& y = hi.report.axes[a];
      if (!x.rho_empirical || !y.rho_empirical || !x.fdr || !y.fdr) throw std::runtime_error("axis lacks rho or fdr");
      ok = ok && *y.rho_empirical < *x.rho_empirical && y.fdr->ratio > x.fdr->ratio;
      d += "; " + x.axis + " rho " + fmt(*x.rho_empirical) + " -> " + fmt(*y.rho_empirical) + ", fdr " +
           fmt(x.fdr->ratio) + " -> " + fmt(y.fdr->ratio);
    }
    report(4, ok, d);
  });

  criterion(5, [&] {
    need_sweep();
    const auto& lo = sweep.front();
    const auto& hi = sweep.back();
    report(5, hi.alignment > lo.alignment && hi.differentiation > lo.differentiation,
           "alignment " + fmt(lo.alignment) + " -> " + fmt(hi.alignment) + ", differentiation " +
               fmt(lo.differentiation) + " -> " + fmt(hi.differentiation));
  });

  criterion(6, [&] {
    const RunConfig cfg = load(configs / "replay.json");
    const Dataset ds = generate_dataset(cfg.synth);
    std::map<ReplayMode, TrainResult> runs;
    for (ReplayMode m : {ReplayMode::SharedProj, ReplayMode::SeparateProj}) {
      TrainConfig tc = cfg.train;
      tc.replay_mode = m;
      runs[m] = train_run(ds, cfg.model, tc);
    }
    const auto& sh = runs[ReplayMode::SharedProj].metrics;
    const auto& se = runs[ReplayMode::SeparateProj].metrics;
    const double zs_sh = *sh.back().zeroshot_acc, zs_se = *se.back().zeroshot_acc;
    const bool ok = zs_se >= zs_sh && sh.back().replay_loss < sh.front().replay_loss &&
                    se.back().replay_loss < se.front().replay_loss;
    report(6, ok,
           "zero-shot separate " + fmt(zs_se) + " vs shared " + fmt(zs_sh) + "; replay loss shared " +
               fmt(sh.front().replay_loss) + " -> " + fmt(sh.back().replay_loss) + ", separate " +
               fmt(se.front().replay_loss) + " -> " + fmt(se.back().replay_loss));
  });

  criterion(7, [] {
    const auto h = suite_hungarian(0);
    Rng rng(derive_seed(0, 0xC1A5));
    std::size_t mismatches = 0;
    const std::size_t trials = 200;
    for (std::size_t t = 0; t < trials; ++t) {
      const std::size_t k = 3 + rng.index(4), known = 1 + rng.index(2), n = 5 + rng.index(30);
      std::vector<std::size_t> cl(n), truth(n), kc(known);
      for (std::size_t i = 0; i < n; ++i) {
        cl[i] = rng.index(k);
        truth[i] = rng.index(k);
      }
      for (std::size_t i = 0; i < known; ++i) kc[i] = i;
      if (std::abs(clustering_accuracy(cl, truth, kc, k) - oracles::brute_accuracy(cl, truth, known, k)) > 1e-12)
        ++mismatches;
    }
    const auto loss = contrastive_loss(EmbeddingBatch{Matrix{{1.0, 0.0}, {0.0, 1.0}}},
                                       EmbeddingBatch{Matrix{{1.0, 0.0}, {0.0, 1.0}}}, 1.0);
    const double err = std::abs(loss.main - std::log1p(std::exp(-1.0)));
    report(7, h.passed && mismatches == 0 && err < 1e-12,
           h.detail + "; clustering " + std::to_string(trials - mismatches) + "/" + std::to_string(trials) +
               " match brute force; two-sample loss error " + fmt(err));
  });

  criterion(8, [&] {
    const fs::path cfg_path = configs / "replay.json";
    const RunConfig cfg = load(cfg_path);
    const std::string d1 = dataset_to_jsonl(generate_dataset(cfg.synth));
    const std::string d2 = dataset_to_jsonl(generate_dataset(cfg.synth));
    const int threads = kernels::thread_count();
    kernels::set_thread_count(1);
    run_sweep(cfg, work / "det_a");
    kernels::set_thread_count(3);
    run_sweep(cfg, work / "det_b");
    kernels::set_thread_count(threads);
    auto a = tree_digests(work / "det_a");
    const auto b = tree_digests(work / "det_b");
    a["dataset.jsonl"] = hex64(fnv1a64(d1));
    bool ok = d1 == d2 && a.size() == b.size() + 1;
    for (const auto& [k, v] : b) ok = ok && a.count(k) && a.at(k) == v;

    const fs::path frozen = configs / "digests.json";
    std::string d = std::to_string(a.size()) + " files identical across runs and thread counts";
    if (record) {
      Json j = a;
      write_file(frozen, dump_json(j));
      d += "; recorded " + frozen.generic_string();
    } else if (fs::exists(frozen)) {
      const auto want = Json::parse(read_file(frozen)).get<std::map<std::string, std::string>>();
      std::size_t diff = 0;
      for (const auto& [k, v] : want)
        if (!a.count(k) || a.at(k) != v) ++diff;
      ok = ok && diff == 0 && want.size() == a.size();
      d += "; " + std::to_string(want.size() - diff) + "/" + std::to_string(want.size()) + " frozen digests match";
    } else {
      ok = false;
      d += "; no frozen digests";
    }
    report(8, ok, d);
  });

  criterion(9, [&] {
    need_sweep();
    bool ok = true;
    std::string d = "attribute fdr init -> trained:";
    for (const auto& s : sweep) {
      if (!s.attribute_fdr_init || !s.report.attribute_fdr) throw std::runtime_error("attribute fdr missing");
      ok = ok && s.report.attribute_fdr->ratio > s.attribute_fdr_init->ratio;
      d += " " + std::to_string(s.scale) + ": " + fmt(s.attribute_fdr_init->ratio) + " -> " +
           fmt(s.report.attribute_fdr->ratio);
    }
    report(9, ok, d);
  });

  std::cout << (failures ? std::to_string(failures) + " criteria failed" : "all criteria passed") << std::endl;
  return failures ? 1 : 0;
}
