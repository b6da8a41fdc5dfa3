#pragma once

#include <filesystem>
#include <iosfwd>
#include <json.hpp>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "latentprobe/cmaes.hpp"
#include "latentprobe/sampler.hpp"

namespace latentprobe {

/// Maps a pair's latent distance to simulated answers. With both noise terms
/// at zero the answers are monotone in the distance:
///   s = clamp(1 - d / scale, 0, 1)
///   similarity = round(100 s + similarity_noise * N(0,1)), clamped to [0, 100]
///   same_person = s + identity_noise * N(0,1) > (seat + 0.5) / raters_per_pair
/// where seat is the participant's position among the raters of its batch.
struct RaterModel {
  double scale = 64.0;
  double similarity_noise = 8.0;
  double identity_noise = 0.1;
};

struct RunConfig {
  std::filesystem::path dataset;
  std::uint64_t seed = 0;
  bool synthetic = false;
  /// Transport descriptor of the external oracle ("exec:<cmd>" or "http://host:port").
  std::string oracle;
  Eigen::Index dim = kDefaultLatentDim;
  /// Synthetic decision distance is ||a - b|| / synthetic_normalizer.
  double synthetic_normalizer = 64.0;
  SamplerConfig sampler;
  CmaConfig cma;
  /// Model driving the optimization.
  std::string decision_model = "dlib";
  /// Models scored post hoc.
  std::vector<std::string> models{"dlib"};
  /// Parallel optimizer runs.
  int workers = 4;
  /// Acceptance-threshold overrides for the analysis.
  std::map<std::string, double> thresholds;
  int target_per_batch = 10;
  int expiry_minutes = 60;
  RaterModel rater;

  void validate() const;
};

nlohmann::json run_config_to_json(const RunConfig& config);
/// Fields absent from `j` keep their value in `defaults`.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig defaults = {});

/// Batch ids used by generate: batch-00, batch-01, ...
std::string generated_batch_id(int index);

struct GenerateReport {
  std::size_t batches = 0;
  std::size_t samples = 0;
  /// Optimized slots whose threshold was crossed.
  std::size_t reached = 0;
  std::size_t optimized_slots = 0;
  std::size_t generate_failures = 0;
  /// Batches that were already complete.
  std::size_t skipped = 0;
};

/// Plans, optimizes, materializes and saves n batches. Finished batches are
/// skipped and a partially optimized batch resumes from its saved runs.
GenerateReport cmd_generate(const RunConfig& config, int n_batches, std::ostream& log);

struct ScoreReport {
  std::size_t new_records = 0;
  std::size_t backend_calls = 0;
  std::size_t missing = 0;
};

/// Scores every pair for each configured model plus the native latent
/// distance. Pairs already in scores.csv are not sent to the oracle again.
ScoreReport cmd_score(const RunConfig& config, std::ostream& log);

struct ImportReport {
  std::size_t ratings = 0;
  std::size_t scores = 0;
};

ImportReport cmd_import(const RunConfig& config, const std::optional<std::filesystem::path>& ratings,
                        const std::optional<std::filesystem::path>& scores);

struct SimulateOptions {
  /// 0: target_per_batch times the number of batches.
  int participants = 0;
  int concurrency = 4;
  /// Drive a running server instead of starting one in-process.
  std::string url;
};

struct SimulateReport {
  int completed = 0;
  /// Participants turned away because the study was full.
  int rejected = 0;
  std::size_t ratings = 0;
};

/// Runs simulated participants against the study HTTP API, exactly as the
/// browser client would: open session, fetch/rate each pair, answer the
/// strategy questions.
SimulateReport cmd_simulate(const RunConfig& config, const SimulateOptions& options, std::ostream& log);

/// Answers of a simulated participant for one pair.
struct SimulatedAnswer {
  int similarity = 0;
  bool same_person = false;
};

SimulatedAnswer simulated_answer(const RaterModel& model, std::uint64_t seed, const std::string& participant_id,
                                 int seat, int raters_per_pair, const std::string& pair_id, double latent_distance);

struct AnalyzeOptions {
  /// Default: <dataset>/analysis
  std::filesystem::path out;
  bool per_rating = false;
  std::size_t top_k = 8;
  std::string disagreement_model = "dlib";
};

/// Writes report.json and the CSV exports; returns the report.
nlohmann::json cmd_analyze(const RunConfig& config, const AnalyzeOptions& options, std::ostream& log);

/// Copies the shareable tables (ratings, scores, pairs, manifest,
/// participant answers without session tokens) into `out`.
void cmd_export(const RunConfig& config, const std::filesystem::path& out, std::ostream& log);

/// Serves the study until SIGINT or SIGTERM.
void cmd_serve(const RunConfig& config, const std::string& host, int port,
               const std::optional<std::filesystem::path>& static_dir, std::ostream& log);

/// Serves the synthetic world over the line protocol on stdin/stdout, or
/// over HTTP when a port is given.
void cmd_oracle(const RunConfig& config, std::optional<int> http_port, const std::string& host);

}  // namespace latentprobe
