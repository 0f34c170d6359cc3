#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "scoreaug/dataset.hpp"
#include "scoreaug/sampler.hpp"
#include "scoreaug/schedule.hpp"
#include "scoreaug/train.hpp"

namespace scoreaug {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Plain-text sectioned key=value run configuration. Unknown sections or keys
// are parse errors; '#' and ';' start comments.
struct RunConfig {
  // [dataset]
  std::string generator = "gmm2d";
  int data_n = 64;
  std::uint64_t data_seed = 1;
  std::string data_file;           // overrides the generator when set
  int heldout_n = 0;               // > 0: generate a held-out set
  std::uint64_t heldout_seed = 2;
  std::string heldout_file;
  ImageShape shape{0, 0, 0};       // all-zero: defer to generator/file defaults

  // [schedule]
  Formulation formulation = Formulation::ve;
  double sigma_data_override = 0.0;  // <= 0: compute from data
  double vp_beta_d = 19.9;
  double vp_beta_min = 0.1;

  // [augmentation] -> TrainConfig.aug, [model] -> TrainConfig.net,
  // [train], [sampler]
  TrainConfig train;
  int sample_count = 64;

  // [verify]
  std::uint64_t verify_seed = 0;
  long verify_n_mc = 100000;
  std::string verify_linear_map;  // optional "a b; c d" rows for a custom case

  // [output]
  std::string output_dir = "runs/out";
};

RunConfig parse_config_text(const std::string& text, const std::string& origin);
RunConfig parse_config_file(const std::filesystem::path& path);

// Canonical snapshot; parse_config_text(serialize_config(c)) reproduces c.
std::string serialize_config(const RunConfig& cfg);

// Materializes the dataset (generator or file) with the configured shape.
EmpiricalDataset config_dataset(const RunConfig& cfg);
// Returns the held-out set when one is configured.
std::optional<EmpiricalDataset> config_heldout(const RunConfig& cfg);
DiffusionSchedule config_schedule(const RunConfig& cfg, const EmpiricalDataset& ds);

// "zeros" | "identity" | "<kind>[:args]" e.g. "rotation:2", "brightness:1.5".
void parse_condition_spec(const std::string& spec, SamplerConfig* sampler);
std::string condition_spec_string(const SamplerConfig& sampler);

}  // namespace scoreaug
