#pragma once

// Persistence: JSON-lines datasets, JSON checkpoints and reports, CSV tables,
// and the run configuration with dotted-path overrides. Doubles are always
// written in shortest round-trip form so files are byte-stable.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hclab/eval.hpp"
#include "hclab/geometry.hpp"
#include "hclab/model.hpp"
#include "hclab/synth.hpp"
#include "hclab/train.hpp"

namespace hclab {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

std::string format_double(double v);
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

std::string read_file(const std::filesystem::path& path);
/// Creates parent directories as needed.
void write_file(const std::filesystem::path& path, std::string_view contents);

Json to_json(const SynthConfig& c);
Json to_json(const ModelConfig& c);
Json to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are a ConfigInvalid error.
SynthConfig synth_config_from_json(const Json& j);
ModelConfig model_config_from_json(const Json& j);
TrainConfig train_config_from_json(const Json& j);

std::string dataset_to_jsonl(const Dataset& ds);
Dataset dataset_from_jsonl(std::string_view text);

Json checkpoint_to_json(const ModelState& m, const AdamState* optimizer = nullptr);
/// `optimizer`, when given, receives the stored state or a fresh one.
ModelState checkpoint_from_json(const Json& j, AdamState* optimizer = nullptr);

Json to_json(const GeometryReport& r);
Json to_json(const EvalReport& r);
/// sample_id,species_id,variant,px,py,pz for every row of the plane.
std::string projections_csv(const GeometryReport& r, const Dataset& ds);

/// Whole-file JSON with a trailing newline.
std::string dump_json(const Json& j);

struct EmitFlags {
  bool report = true;
  bool projections = true;
  bool metrics = true;
};

struct RunConfig {
  SynthConfig synth;
  ModelConfig model;
  TrainConfig train;
  ProbeConfig probe;
  std::vector<std::size_t> scales;
  std::uint64_t subsample_seed = 0;
  std::size_t fewshot_k = 5;
  EmitFlags emit;

  void validate() const;
};

/// Applies one `key.sub=value` override; the value is parsed as JSON when it
/// parses, and taken as a string otherwise.
void apply_override(Json& j, std::string_view assignment);
RunConfig run_config_from_json(const Json& j);
Json to_json(const RunConfig& c);

}  // namespace hclab
