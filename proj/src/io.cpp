#include "hclab/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace hclab {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

std::string dump_json(const Json& j) { return j.dump(1) + "\n"; }

namespace {

// Reads known keys from an object and rejects the rest.
class Fields {
 public:
  Fields(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw Error(ErrorCode::ConfigInvalid, where_ + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ConfigInvalid, where_ + "." + key + ": " + e.what());
    }
  }

  const Json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw Error(ErrorCode::ConfigInvalid, "unknown key " + where_ + "." + k);
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

Json matrix_json(const Matrix& m) { return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}}; }

Matrix matrix_from(const Json& j) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != rows * cols) throw Error(ErrorCode::ParseError, "matrix data length does not match its shape");
  return Matrix(rows, cols, std::move(data));
}

std::string mode_name(EncoderMode m) { return m == EncoderMode::Linear ? "linear" : "mlp"; }
std::string label_mode_name(LabelMode m) { return m == LabelMode::Taxonomic ? "taxonomic" : "scientific"; }
std::string replay_name(ReplayMode m) {
  switch (m) {
    case ReplayMode::None: return "none";
    case ReplayMode::SharedProj: return "shared_proj";
    case ReplayMode::SeparateProj: return "separate_proj";
  }
  return "none";
}

template <class E>
E parse_enum(const std::string& s, std::initializer_list<std::pair<const char*, E>> names, const char* what) {
  for (const auto& [n, v] : names)
    if (s == n) return v;
  throw Error(ErrorCode::ConfigInvalid, std::string("unknown ") + what + " '" + s + "'");
}

std::string split_name(Split s) { return s == Split::Train ? "train" : "test"; }

Json fdr_json(const std::optional<FdrResult>& f) {
  if (!f) return nullptr;
  return Json{{"numerator", f->numerator}, {"denominator", f->denominator}, {"ratio", f->ratio}};
}

Json opt_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json prototype_json(const PrototypeSet& p) {
  return Json{{"source", p.source == PrototypeSource::Empirical ? "empirical" : "textual"},
              {"species_ids", p.species_ids},
              {"mu", matrix_json(p.mu)}};
}

Json blocks_json(const ModelState& s) {
  Json out = Json::object();
  for_each_block(s, [&](const std::string& name, std::span<const double> v) {
    out[name] = std::vector<double>(v.begin(), v.end());
  });
  return out;
}

void blocks_from(const Json& j, ModelState& s) {
  for_each_block(s, [&](const std::string& name, std::span<double> v) {
    const auto vals = j.at(name).get<std::vector<double>>();
    if (vals.size() != v.size()) throw Error(ErrorCode::ParseError, "optimizer block " + name + " has wrong size");
    std::copy(vals.begin(), vals.end(), v.begin());
  });
}

}  // namespace

Json to_json(const SynthConfig& c) {
  Json axes = Json::array();
  for (const auto& a : c.variant_axes)
    axes.push_back({{"name", a.name}, {"values", {a.values[0], a.values[1]}}, {"offset_scale", a.offset_scale}});
  return Json{{"seed", c.seed},
              {"branching", c.branching},
              {"d_latent", c.d_latent},
              {"d_in", c.d_in},
              {"samples_per_species", c.samples_per_species},
              {"longtail_alpha", c.longtail_alpha},
              {"noise_sigma", c.noise_sigma},
              {"variant_axes", axes},
              {"rank_weight_decay", c.rank_weight_decay},
              {"attribute_rank", c.attribute_rank.index}};
}

SynthConfig synth_config_from_json(const Json& j) {
  SynthConfig c;
  Fields f(j, "synth");
  f.get("seed", c.seed);
  f.get("branching", c.branching);
  f.get("d_latent", c.d_latent);
  f.get("d_in", c.d_in);
  f.get("samples_per_species", c.samples_per_species);
  f.get("longtail_alpha", c.longtail_alpha);
  f.get("noise_sigma", c.noise_sigma);
  f.get("rank_weight_decay", c.rank_weight_decay);
  int rank = c.attribute_rank.index;
  f.get("attribute_rank", rank);
  if (rank < 0 || rank >= static_cast<int>(kNumRanks)) throw Error(ErrorCode::ConfigInvalid, "attribute_rank out of range");
  c.attribute_rank = RankLevel{static_cast<std::uint8_t>(rank)};
  if (const Json* axes = f.sub("variant_axes")) {
    c.variant_axes.clear();
    for (const auto& a : *axes) {
      VariantAxis axis;
      Fields af(a, "synth.variant_axes[]");
      af.get("name", axis.name);
      af.get("values", axis.values);
      af.get("offset_scale", axis.offset_scale);
      af.finish();
      c.variant_axes.push_back(axis);
    }
  }
  f.finish();
  return c;
}

Json to_json(const ModelConfig& c) {
  return Json{{"d_emb", c.d_emb},
              {"mode", mode_name(c.mode)},
              {"d_hidden", c.d_hidden},
              {"tau", c.tau},
              {"learn_tau", c.learn_tau},
              {"replay_captions", c.replay_captions},
              {"label_mode", label_mode_name(c.label_mode)}};
}

ModelConfig model_config_from_json(const Json& j) {
  ModelConfig c;
  Fields f(j, "model");
  f.get("d_emb", c.d_emb);
  std::string mode = mode_name(c.mode);
  f.get("mode", mode);
  c.mode = parse_enum<EncoderMode>(mode, {{"linear", EncoderMode::Linear}, {"mlp", EncoderMode::Mlp}}, "encoder mode");
  f.get("d_hidden", c.d_hidden);
  f.get("tau", c.tau);
  f.get("learn_tau", c.learn_tau);
  f.get("replay_captions", c.replay_captions);
  std::string lm = label_mode_name(c.label_mode);
  f.get("label_mode", lm);
  c.label_mode = parse_enum<LabelMode>(lm, {{"taxonomic", LabelMode::Taxonomic}, {"scientific", LabelMode::Scientific}},
                                       "label mode");
  f.finish();
  return c;
}

Json to_json(const TrainConfig& c) {
  return Json{{"tau", c.tau},
              {"lr_max", c.lr_max},
              {"warmup_steps", c.warmup_steps},
              {"cosine_decay", c.cosine_decay},
              {"weight_decay", c.weight_decay},
              {"batch_size", c.batch_size},
              {"replay_batch_size", c.replay_batch_size},
              {"epochs", c.epochs},
              {"seed", c.seed},
              {"replay_mode", replay_name(c.replay_mode)},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps},
              {"dedup_labels", c.dedup_labels},
              {"replay_pool_size", c.replay_pool_size},
              {"replay_noise", c.replay_noise}};
}

TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  Fields f(j, "train");
  f.get("tau", c.tau);
  f.get("lr_max", c.lr_max);
  f.get("warmup_steps", c.warmup_steps);
  f.get("cosine_decay", c.cosine_decay);
  f.get("weight_decay", c.weight_decay);
  f.get("batch_size", c.batch_size);
  f.get("replay_batch_size", c.replay_batch_size);
  f.get("epochs", c.epochs);
  f.get("seed", c.seed);
  std::string rm = replay_name(c.replay_mode);
  f.get("replay_mode", rm);
  c.replay_mode = parse_enum<ReplayMode>(
      rm, {{"none", ReplayMode::None}, {"shared_proj", ReplayMode::SharedProj}, {"separate_proj", ReplayMode::SeparateProj}},
      "replay mode");
  f.get("adam_beta1", c.adam_beta1);
  f.get("adam_beta2", c.adam_beta2);
  f.get("adam_eps", c.adam_eps);
  f.get("dedup_labels", c.dedup_labels);
  f.get("replay_pool_size", c.replay_pool_size);
  f.get("replay_noise", c.replay_noise);
  f.finish();
  return c;
}

std::string dataset_to_jsonl(const Dataset& ds) {
  Json meta;
  meta["version"] = kFormatVersion;
  meta["config"] = to_json(ds.config);
  Json taxa = Json::array();
  for (const auto& t : ds.taxa) taxa.push_back(canonical_string(t));
  meta["taxa"] = taxa;
  meta["attributes"] = ds.attributes;
  meta["variant_axes"] = to_json(ds.config)["variant_axes"];
  Json offsets = Json::array();
  for (const auto& o : ds.ground_truth.variant_offsets) offsets.push_back(matrix_json(o));
  meta["ground_truth"] = {{"species_latents", matrix_json(ds.ground_truth.species_latents)},
                          {"variant_offsets", offsets},
                          {"mixing", matrix_json(ds.ground_truth.mixing)},
                          {"bias", ds.ground_truth.bias}};
  std::string out = meta.dump() + "\n";
  const auto& axes = ds.config.variant_axes;
  for (const auto& s : ds.samples) {
    Json variants = Json::object();
    for (std::size_t a = 0; a < axes.size(); ++a) variants[axes[a].name] = axes[a].values[s.variants[a]];
    Json line{{"sid", s.species_id}, {"variants", variants}, {"split", split_name(s.split)}, {"x", s.x}};
    out += line.dump();
    out += '\n';
  }
  return out;
}

Dataset dataset_from_jsonl(std::string_view text) {
  Dataset ds;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    return true;
  };
  try {
    std::string_view line;
    if (!next_line(line)) throw Error(ErrorCode::ParseError, "empty dataset file");
    const Json meta = Json::parse(line);
    if (meta.at("version").get<int>() != kFormatVersion) throw Error(ErrorCode::ParseError, "unsupported dataset version");
    ds.config = synth_config_from_json(meta.at("config"));
    for (const auto& t : meta.at("taxa")) ds.taxa.push_back(parse_label(t.get<std::string>()));
    ds.attributes = meta.at("attributes").get<std::vector<std::map<std::string, bool>>>();
    const Json& gt = meta.at("ground_truth");
    ds.ground_truth.species_latents = matrix_from(gt.at("species_latents"));
    for (const auto& o : gt.at("variant_offsets")) ds.ground_truth.variant_offsets.push_back(matrix_from(o));
    ds.ground_truth.mixing = matrix_from(gt.at("mixing"));
    ds.ground_truth.bias = gt.at("bias").get<std::vector<double>>();

    const auto& axes = ds.config.variant_axes;
    while (next_line(line)) {
      if (line.empty()) continue;
      const Json j = Json::parse(line);
      Sample s;
      s.species_id = j.at("sid").get<std::size_t>();
      if (s.species_id >= ds.taxa.size()) throw Error(ErrorCode::ParseError, "sample species id out of range");
      const Json& v = j.at("variants");
      for (const auto& axis : axes) {
        const auto value = v.at(axis.name).get<std::string>();
        if (value == axis.values[0]) s.variants.push_back(0);
        else if (value == axis.values[1]) s.variants.push_back(1);
        else throw Error(ErrorCode::ParseError, "unknown value '" + value + "' on axis " + axis.name);
      }
      const auto split = j.at("split").get<std::string>();
      if (split != "train" && split != "test") throw Error(ErrorCode::ParseError, "unknown split '" + split + "'");
      s.split = split == "train" ? Split::Train : Split::Test;
      s.x = j.at("x").get<std::vector<double>>();
      if (s.x.size() != ds.config.d_in) throw Error(ErrorCode::ParseError, "feature length differs from d_in");
      ds.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, "dataset line " + std::to_string(line_no) + ": " + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseError) throw;
    throw Error(ErrorCode::ParseError, "dataset line " + std::to_string(line_no) + ": " + e.what());
  }
  return ds;
}

Json checkpoint_to_json(const ModelState& m, const AdamState* optimizer) {
  Json taxa = Json::array();
  for (const auto& t : m.taxa) taxa.push_back(canonical_string(t));
  Json j;
  j["version"] = kFormatVersion;
  j["config"] = {{"model", to_json(m.config)}, {"d_in", m.d_in}, {"taxa", taxa}};
  j["w_enc"] = matrix_json(m.w_enc);
  j["b_enc"] = m.b_enc;
  if (m.hidden) j["hidden"] = {{"w", matrix_json(m.hidden->w)}, {"b", m.hidden->b}};
  Json tables = Json::array();
  for (const auto& t : m.rank_tables) tables.push_back(t);
  j["rank_tables"] = tables;
  j["replay_head"] = {{"w", matrix_json(m.replay_w)}, {"b", m.replay_b}};
  j["replay_text_table"] = matrix_json(m.replay_text);
  j["tau"] = m.tau;
  j["log_tau"] = m.log_tau;
  if (optimizer)
    j["optimizer_state"] = {
        {"step", optimizer->step}, {"first", blocks_json(optimizer->first)}, {"second", blocks_json(optimizer->second)}};
  return j;
}

ModelState checkpoint_from_json(const Json& j, AdamState* optimizer) {
  ModelState m;
  try {
    if (j.at("version").get<int>() != kFormatVersion) throw Error(ErrorCode::ParseError, "unsupported checkpoint version");
    const Json& cfg = j.at("config");
    m.config = model_config_from_json(cfg.at("model"));
    m.d_in = cfg.at("d_in").get<std::size_t>();
    for (const auto& t : cfg.at("taxa")) m.taxa.push_back(parse_label(t.get<std::string>()));
    m.w_enc = matrix_from(j.at("w_enc"));
    m.b_enc = j.at("b_enc").get<std::vector<double>>();
    if (j.contains("hidden")) m.hidden = HiddenLayer{matrix_from(j["hidden"].at("w")), j["hidden"].at("b").get<std::vector<double>>()};
    const Json& tables = j.at("rank_tables");
    if (tables.size() != kNumRanks) throw Error(ErrorCode::ParseError, "expected one rank table per rank");
    for (std::size_t r = 0; r < kNumRanks; ++r) m.rank_tables[r] = tables[r].get<RankTable>();
    m.replay_w = matrix_from(j.at("replay_head").at("w"));
    m.replay_b = j.at("replay_head").at("b").get<std::vector<double>>();
    m.replay_text = matrix_from(j.at("replay_text_table"));
    m.tau = j.at("tau").get<double>();
    m.log_tau = j.contains("log_tau") ? j["log_tau"].get<double>() : std::log(m.tau);

    const std::size_t d = m.config.d_emb;
    const std::size_t trunk_in = m.hidden ? m.hidden->w.rows() : m.d_in;
    bool ok = m.w_enc.rows() == d && m.w_enc.cols() == trunk_in && m.b_enc.size() == d && m.replay_w.rows() == d &&
              m.replay_w.cols() == d && m.replay_b.size() == d && m.replay_text.cols() == d;
    if (m.hidden) ok = ok && m.hidden->w.cols() == m.d_in && m.hidden->b.size() == m.hidden->w.rows();
    for (const auto& t : m.rank_tables)
      for (const auto& [name, v] : t) ok = ok && v.size() == d;
    if (!ok) throw Error(ErrorCode::DimensionMismatch, "checkpoint block shapes disagree with its config");

    if (optimizer) {
      *optimizer = init_adam(m);
      if (j.contains("optimizer_state")) {
        const Json& o = j["optimizer_state"];
        optimizer->step = o.at("step").get<std::size_t>();
        blocks_from(o.at("first"), optimizer->first);
        blocks_from(o.at("second"), optimizer->second);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("checkpoint: ") + e.what());
  }
  return m;
}

Json to_json(const GeometryReport& r) {
  Json axes = Json::array();
  for (const auto& a : r.axes)
    axes.push_back({{"axis", a.axis},
                    {"rho_empirical", opt_json(a.rho_empirical)},
                    {"rho_textual", opt_json(a.rho_textual)},
                    {"columns", a.columns},
                    {"zero_columns", a.zero_columns},
                    {"skipped_species", a.skipped_species},
                    {"fdr", fdr_json(a.fdr)}});
  Json arrows = Json::array();
  for (const auto& a : r.plane.arrows)
    arrows.push_back({{"axis", a.axis}, {"species_id", a.species_id}, {"from", a.from}, {"to", a.to}});
  Json plane{{"center", r.plane.center},
             {"plane", matrix_json(r.plane.plane)},
             {"normal", r.plane.normal},
             {"species_ids", r.plane.species_ids},
             {"species_coords", matrix_json(r.plane.species_coords)},
             {"arrows", arrows}};
  return Json{{"version", kFormatVersion},
              {"empirical", prototype_json(r.empirical)},
              {"textual", prototype_json(r.textual)},
              {"axes", axes},
              {"attribute_fdr", fdr_json(r.attribute_fdr)},
              {"plane", plane},
              {"warnings", r.warnings}};
}

Json to_json(const EvalReport& r) {
  Json details = Json::array();
  for (const auto& d : r.details) details.push_back({{"label", d.label}, {"n", d.n}, {"correct", d.correct}});
  return Json{{"task", r.task}, {"accuracy", r.accuracy}, {"n", r.n}, {"correct", r.correct}, {"details", details}};
}

std::string projections_csv(const GeometryReport& r, const Dataset& ds) {
  std::ostringstream out;
  out << "sample_id,species_id,variant,px,py,pz\n";
  const auto& axes = ds.config.variant_axes;
  for (std::size_t i = 0; i < r.sample_index.size(); ++i) {
    const Sample& s = ds.samples.at(r.sample_index[i]);
    std::string variant;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      if (a) variant += '/';
      variant += axes[a].values[s.variants[a]];
    }
    out << r.sample_index[i] << ',' << s.species_id << ',' << variant << ',' << format_double(r.plane.coords(i, 0))
        << ',' << format_double(r.plane.coords(i, 1)) << ',' << format_double(r.plane.coords(i, 2)) << '\n';
  }
  return out.str();
}

void RunConfig::validate() const {
  synth.validate();
  model.validate();
  train.validate();
  if (scales.empty()) throw Error(ErrorCode::ConfigInvalid, "scales must be nonempty");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (scales[i] == 0) throw Error(ErrorCode::ConfigInvalid, "scales must be positive");
    if (i > 0 && scales[i] <= scales[i - 1]) throw Error(ErrorCode::ConfigInvalid, "scales must be strictly increasing");
  }
  if (fewshot_k == 0) throw Error(ErrorCode::ConfigInvalid, "fewshot_k must be positive");
}

void apply_override(Json& j, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0)
    throw Error(ErrorCode::ConfigInvalid, "override must look like key.path=value");
  const std::string path(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  Json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw Error(ErrorCode::ConfigInvalid, "empty segment in override path '" + path + "'");
    if (node->is_array()) {
      std::size_t idx = 0;
      const auto res = std::from_chars(key.data(), key.data() + key.size(), idx);
      if (res.ec != std::errc() || res.ptr != key.data() + key.size() || idx >= node->size())
        throw Error(ErrorCode::ConfigInvalid, "bad array index '" + key + "' in '" + path + "'");
      node = &(*node)[idx];
    } else {
      if (node->is_null()) *node = Json::object();
      if (!node->is_object()) throw Error(ErrorCode::ConfigInvalid, "override path '" + path + "' crosses a value");
      node = &(*node)[key];
    }
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  Json value = Json::parse(raw, nullptr, false);
  *node = value.is_discarded() ? Json(raw) : value;
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  Fields f(j, "config");
  if (const Json* s = f.sub("synth")) c.synth = synth_config_from_json(*s);
  if (const Json* m = f.sub("model")) c.model = model_config_from_json(*m);
  if (const Json* t = f.sub("train")) c.train = train_config_from_json(*t);
  if (const Json* p = f.sub("probe")) {
    Fields pf(*p, "probe");
    pf.get("lr", c.probe.lr);
    pf.get("steps", c.probe.steps);
    pf.get("l2", c.probe.l2);
    pf.get("seed", c.probe.seed);
    pf.get("hidden", c.probe.hidden);
    pf.finish();
  }
  f.get("scales", c.scales);
  f.get("subsample_seed", c.subsample_seed);
  f.get("fewshot_k", c.fewshot_k);
  if (const Json* e = f.sub("emit")) {
    Fields ef(*e, "emit");
    ef.get("report", c.emit.report);
    ef.get("projections", c.emit.projections);
    ef.get("metrics", c.emit.metrics);
    ef.finish();
  }
  f.finish();
  return c;
}

Json to_json(const RunConfig& c) {
  return Json{{"synth", to_json(c.synth)},
              {"model", to_json(c.model)},
              {"train", to_json(c.train)},
              {"probe",
               {{"lr", c.probe.lr},
                {"steps", c.probe.steps},
                {"l2", c.probe.l2},
                {"seed", c.probe.seed},
                {"hidden", c.probe.hidden}}},
              {"scales", c.scales},
              {"subsample_seed", c.subsample_seed},
              {"fewshot_k", c.fewshot_k},
              {"emit", {{"report", c.emit.report}, {"projections", c.emit.projections}, {"metrics", c.emit.metrics}}}};
}

}  // namespace hclab
