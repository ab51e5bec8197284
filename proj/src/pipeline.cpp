#include "hclab/pipeline.hpp"

#include <numeric>
#include <sstream>

namespace hclab {

EvalTask parse_eval_task(const std::string& name) {
  if (name == "zeroshot") return EvalTask::ZeroShot;
  if (name == "fewshot") return EvalTask::FewShot;
  if (name == "probe") return EvalTask::Probe;
  if (name == "discovery") return EvalTask::Discovery;
  if (name == "variants") return EvalTask::Variants;
  throw Error(ErrorCode::ConfigInvalid, "unknown eval task '" + name + "'");
}

namespace {

struct SplitView {
  std::vector<std::size_t> rows;
  std::vector<std::size_t> labels;
  Matrix embs;
};

SplitView view(const ModelState& m, const Dataset& ds, Split split) {
  SplitView v;
  v.rows = ds.indices(split);
  for (std::size_t i : v.rows) v.labels.push_back(ds.samples[i].species_id);
  v.embs = encode_images(m, ds.features(v.rows)).vectors;
  return v;
}

Matrix take(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(m.row(rows[i]).begin(), m.row(rows[i]).end(), out.row(i).begin());
  return out;
}

}  // namespace

std::vector<EvalReport> run_eval(EvalTask task, const ModelState& m, const Dataset& ds, std::size_t k,
                                 const ProbeConfig& probe, std::uint64_t seed) {
  const SplitView test = view(m, ds, Split::Test);
  switch (task) {
    case EvalTask::ZeroShot: {
      std::vector<std::size_t> all(ds.species_count());
      std::iota(all.begin(), all.end(), 0);
      auto r = zero_shot_ncc(test.embs, test.labels, textual_prototypes(m, all));
      r.task = "zeroshot";
      return {r};
    }
    case EvalTask::FewShot: {
      const SplitView train = view(m, ds, Split::Train);
      auto r = simpleshot(train.embs, train.labels, test.embs, test.labels, k, seed);
      r.task = "fewshot";
      return {r};
    }
    case EvalTask::Probe: {
      const SplitView train = view(m, ds, Split::Train);
      auto r = linear_probe(train.embs, train.labels, test.embs, test.labels, probe);
      r.task = "probe";
      return {r};
    }
    case EvalTask::Discovery: {
      // First half of the species ids are known: their train rows are labeled.
      const std::size_t known = (ds.species_count() + 1) / 2;
      const SplitView train = view(m, ds, Split::Train);
      std::vector<std::size_t> keep, labels;
      for (std::size_t i = 0; i < train.labels.size(); ++i)
        if (train.labels[i] < known) {
          keep.push_back(i);
          labels.push_back(train.labels[i]);
        }
      auto res = ssl_kmeans(take(train.embs, keep), labels, test.embs, test.labels, ds.species_count(), seed);
      return {res.report};
    }
    case EvalTask::Variants: {
      std::vector<std::size_t> rows(ds.samples.size());
      std::iota(rows.begin(), rows.end(), 0);
      const Matrix embs = encode_images(m, ds.features(rows)).vectors;
      std::vector<std::size_t> sids;
      std::vector<Split> splits;
      for (const auto& s : ds.samples) {
        sids.push_back(s.species_id);
        splits.push_back(s.split);
      }
      std::vector<EvalReport> out;
      for (std::size_t a = 0; a < ds.config.variant_axes.size(); ++a) {
        std::vector<int> values;
        for (const auto& s : ds.samples) values.push_back(s.variants[a]);
        auto r = variant_tasks(embs, sids, values, splits, ds.config.variant_axes[a].name, probe);
        out.push_back(r.alignment);
        out.push_back(r.differentiation);
      }
      return out;
    }
  }
  return {};
}

ScaleResult run_scale(const RunConfig& cfg, const Dataset& full, std::size_t scale) {
  ScaleResult res;
  res.scale = scale;
  const Dataset ds = subsample_scale(full, scale, cfg.subsample_seed);

  ModelConfig mc = cfg.model;
  mc.tau = cfg.train.tau;
  const ModelState init = init_model(cfg.train.seed, mc, ds);
  res.attribute_fdr_init = geometry_report(init, ds).attribute_fdr;

  TrainCallbacks cb;
  cb.eval_metrics = cfg.emit.metrics;
  auto trained = train_from(init, ds, cfg.train, cb);
  res.model = std::move(trained.model);
  res.metrics = std::move(trained.metrics);
  res.report = geometry_report(res.model, ds);

  const std::uint64_t seed = cfg.train.seed;
  for (EvalTask t : {EvalTask::ZeroShot, EvalTask::FewShot, EvalTask::Probe, EvalTask::Discovery, EvalTask::Variants})
    for (auto& r : run_eval(t, res.model, ds, cfg.fewshot_k, cfg.probe, seed)) res.evals.push_back(std::move(r));

  std::size_t n_align = 0, n_diff = 0;
  for (const auto& r : res.evals) {
    if (r.task == "zeroshot") res.zeroshot_acc = r.accuracy;
    if (r.task.rfind("alignment:", 0) == 0) {
      res.alignment += r.accuracy;
      ++n_align;
    }
    if (r.task.rfind("differentiation:", 0) == 0) {
      res.differentiation += r.accuracy;
      ++n_diff;
    }
  }
  if (n_align) res.alignment /= static_cast<double>(n_align);
  if (n_diff) res.differentiation /= static_cast<double>(n_diff);
  return res;
}

std::string trend_csv_header(const SynthConfig& synth) {
  std::string h = "scale,zeroshot_acc,alignment,differentiation";
  for (std::size_t a = 0; a < synth.variant_axes.size(); ++a) {
    const std::string s = std::to_string(a);
    h += ",rho_axis" + s + ",fdr_axis" + s + ",fdr_numerator_axis" + s + ",fdr_denominator_axis" + s;
  }
  return h + ",attribute_fdr_init,attribute_fdr\n";
}

std::string trend_csv_row(const ScaleResult& r) {
  std::ostringstream out;
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  out << r.scale << ',' << format_double(r.zeroshot_acc) << ',' << format_double(r.alignment) << ','
      << format_double(r.differentiation);
  for (const auto& a : r.report.axes) {
    out << ',' << opt(a.rho_empirical);
    if (a.fdr)
      out << ',' << format_double(a.fdr->ratio) << ',' << format_double(a.fdr->numerator) << ','
          << format_double(a.fdr->denominator);
    else
      out << ",,,";
  }
  out << ',' << (r.attribute_fdr_init ? format_double(r.attribute_fdr_init->ratio) : "") << ','
      << (r.report.attribute_fdr ? format_double(r.report.attribute_fdr->ratio) : "") << '\n';
  return out.str();
}

std::string eval_csv(const std::vector<ScaleResult>& results, std::uint64_t seed) {
  std::ostringstream out;
  out << "task,scale,seed,accuracy\n";
  for (const auto& r : results)
    for (const auto& e : r.evals) out << e.task << ',' << r.scale << ',' << seed << ',' << format_double(e.accuracy) << '\n';
  return out.str();
}

std::vector<ScaleResult> run_sweep(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  const Dataset full = generate_dataset(cfg.synth);
  std::vector<ScaleResult> results;
  std::string trend = trend_csv_header(cfg.synth);
  for (std::size_t scale : cfg.scales) {
    results.push_back(run_scale(cfg, full, scale));
    const ScaleResult& r = results.back();
    const auto dir = out_dir / ("scale_" + std::to_string(scale));
    const Dataset ds = subsample_scale(full, scale, cfg.subsample_seed);
    write_file(dir / "model.json", dump_json(checkpoint_to_json(r.model)));
    if (cfg.emit.report) write_file(dir / "report.json", dump_json(to_json(r.report)));
    if (cfg.emit.projections) write_file(dir / "projections.csv", projections_csv(r.report, ds));
    if (cfg.emit.metrics) write_file(dir / "metrics.csv", metrics_csv(r.metrics));
    Json evals = Json::array();
    for (const auto& e : r.evals) evals.push_back(to_json(e));
    write_file(dir / "eval.json", dump_json(evals));
    trend += trend_csv_row(r);
    write_file(out_dir / "trend.csv", trend);
    write_file(out_dir / "eval.csv", eval_csv(results, cfg.train.seed));
  }
  return results;
}

}  // namespace hclab
