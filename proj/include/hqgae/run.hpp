#ifndef HQGAE_RUN_HPP
#define HQGAE_RUN_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "hqgae/graph.hpp"
#include "hqgae/model.hpp"

namespace hqgae {

// Invalid configuration or command usage; mapped to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  ModelConfig model;
  std::string dataset_dir;  // empty when generating an SBM benchmark
  bool use_sbm = false;
  SbmParams sbm;
  std::uint64_t sbm_seed = 1;
  std::string out_dir = "runs/out";
};

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> dataset_dir;
};

// Parses the JSON config file; unknown keys are rejected by name. Flag
// overrides take precedence over file values, which beat defaults.
RunConfig load_run_config(const std::string& path, const CliOverrides& overrides);

// Canonical config fingerprint (FNV-1a 64, hex) recorded in metrics.
std::string config_hash(const RunConfig& cfg);

SparseGraph load_or_generate_graph(const RunConfig& cfg);

// Trains, writes <out>/model.ckpt and <out>/metrics.jsonl.
// Returns 0 on success, 2 on divergence.
int cmd_train(const RunConfig& cfg);

// Evaluates a checkpoint on lp | nc | cluster; appends a result line to
// <out>/metrics.jsonl.
int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path, const std::string& task,
             std::optional<std::uint64_t> eval_seed);

// Writes eval-mode embeddings to <out>/embeddings.tsv.
int cmd_embed(const RunConfig& cfg, const std::string& checkpoint_path);

// Sweep kinds: decay | cb1-size | cb2-size | alpha-beta | vq-onoff.
// One training run per grid point per seed; aborted points are recorded and
// the sweep continues. Writes <out>/sweep.csv and <out>/sweep.jsonl.
int cmd_ablate(const RunConfig& cfg, const std::string& kind, int jobs);

// Generates an SBM benchmark dataset directory in the documented format.
int cmd_gen_sbm(const SbmParams& params, std::uint64_t seed, const std::string& out_dir);

}  // namespace hqgae

#endif
