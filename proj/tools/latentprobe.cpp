#include <CLI11.hpp>
#include <iostream>

#include "latentprobe/app.hpp"
#include "latentprobe/error.hpp"
#include "latentprobe/fsio.hpp"

namespace fs = std::filesystem;
using namespace latentprobe;

namespace {

struct GlobalFlags {
  std::string dataset;
  std::uint64_t seed = 0;
  bool synthetic = false;
  std::string config_file;
  std::string oracle;
  long long dim = 0;
  double normalizer = 0.0;
  int workers = 0;
  std::vector<std::string> models;
  std::vector<std::string> thresholds;
  int target = 0;
  int expiry = 0;
  double rater_similarity_noise = -1.0;
  double rater_identity_noise = -1.0;
  double rater_scale = 0.0;
};

// defaults < <dataset>/run_config.json < --config file < flags
RunConfig resolve(const CLI::App& app, const GlobalFlags& f) {
  RunConfig config;
  config.dataset = f.dataset;
  if (!f.dataset.empty() && fs::exists(fs::path(f.dataset) / "run_config.json"))
    config = run_config_from_json(nlohmann::json::parse(read_file(fs::path(f.dataset) / "run_config.json")), config);
  if (!f.config_file.empty()) config = run_config_from_json(nlohmann::json::parse(read_file(f.config_file)), config);
  if (app.count("--seed")) config.seed = f.seed;
  if (f.synthetic) config.synthetic = true;
  if (!f.oracle.empty()) config.oracle = f.oracle;
  if (f.dim > 0) config.dim = f.dim;
  if (f.normalizer > 0.0) config.synthetic_normalizer = f.normalizer;
  if (f.workers > 0) config.workers = f.workers;
  if (!f.models.empty()) config.models = f.models;
  for (const auto& t : f.thresholds) {
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ValidationError("--threshold expects model=value, got '" + t + "'");
    config.thresholds[t.substr(0, eq)] = std::stod(t.substr(eq + 1));
  }
  if (f.target > 0) config.target_per_batch = f.target;
  if (f.expiry > 0) config.expiry_minutes = f.expiry;
  if (f.rater_similarity_noise >= 0.0) config.rater.similarity_noise = f.rater_similarity_noise;
  if (f.rater_identity_noise >= 0.0) config.rater.identity_noise = f.rater_identity_noise;
  if (f.rater_scale > 0.0) config.rater.scale = f.rater_scale;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probe a decision model with generated samples and compare it against human ratings"};
  app.require_subcommand(1);
  GlobalFlags flags;
  app.add_option("--dataset", flags.dataset, "Dataset root directory");
  app.add_option("--seed", flags.seed, "Master seed");
  app.add_flag("--synthetic", flags.synthetic, "Use the built-in synthetic latent world as oracle");
  app.add_option("--config", flags.config_file, "Run configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--oracle", flags.oracle, "External oracle: exec:<command> or http://host:port");
  app.add_option("--dim", flags.dim, "Latent dimension");
  app.add_option("--synthetic-normalizer", flags.normalizer, "Synthetic distance divisor");
  app.add_option("--workers", flags.workers, "Parallel optimizer runs");
  app.add_option("--models", flags.models, "Models to score");
  app.add_option("--threshold", flags.thresholds, "Acceptance threshold override, model=value");
  app.add_option("--target-per-batch", flags.target, "Raters per batch");
  app.add_option("--expiry-minutes", flags.expiry, "Session expiry");
  app.add_option("--rater-similarity-noise", flags.rater_similarity_noise, "Simulated rater similarity noise (sd)");
  app.add_option("--rater-identity-noise", flags.rater_identity_noise, "Simulated rater identity noise (sd)");
  app.add_option("--rater-scale", flags.rater_scale, "Latent distance at which simulated similarity reaches 0");

  int batches = 10;
  auto* generate = app.add_subcommand("generate", "Plan, optimize and render batches (resumable)");
  generate->add_option("--batches", batches, "Number of batches")->capture_default_str();

  auto* score = app.add_subcommand("score", "Score every pair with each model plus the latent distance");

  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;
  auto* serve = app.add_subcommand("serve", "Run the rating study HTTP service");
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--static", static_dir, "Directory with the browser client");

  SimulateOptions simulate_options;
  auto* simulate = app.add_subcommand("simulate", "Rate the study with simulated participants over the HTTP API");
  simulate->add_option("--participants", simulate_options.participants, "Default: target per batch x batches");
  simulate->add_option("--concurrency", simulate_options.concurrency)->capture_default_str();
  simulate->add_option("--url", simulate_options.url, "Use a running server instead of an in-process one");

  AnalyzeOptions analyze_options;
  std::string analyze_out;
  auto* analyze = app.add_subcommand("analyze", "Summaries, correlations and disagreement reports");
  analyze->add_option("--out", analyze_out, "Output directory (default <dataset>/analysis)");
  analyze->add_flag("--per-rating", analyze_options.per_rating, "Correlate individual ratings");
  analyze->add_option("--top-k", analyze_options.top_k)->capture_default_str();
  analyze->add_option("--disagreement-model", analyze_options.disagreement_model)->capture_default_str();

  std::string export_out;
  auto* exporter = app.add_subcommand("export", "Write the shareable tables to a directory");
  exporter->add_option("--out", export_out)->required();

  std::string ratings_file, scores_file;
  auto* importer = app.add_subcommand("import", "Merge external ratings or scores tables");
  importer->add_option("--ratings", ratings_file)->check(CLI::ExistingFile);
  importer->add_option("--scores", scores_file)->check(CLI::ExistingFile);

  int oracle_port = 0;
  auto* oracle = app.add_subcommand("oracle", "Serve the synthetic world over the oracle protocol");
  oracle->add_option("--http", oracle_port, "Serve HTTP on this port instead of stdin/stdout");
  oracle->add_option("--host", host)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    const auto config = resolve(app, flags);
    if (generate->parsed()) {
      const auto r = cmd_generate(config, batches, std::cerr);
      std::cout << r.samples << " samples in " << r.batches << " batches; optimized slots reached " << r.reached
                << "/" << r.optimized_slots << "\n";
    } else if (score->parsed()) {
      const auto r = cmd_score(config, std::cerr);
      std::cout << r.new_records << " new rows, " << r.backend_calls << " oracle calls, " << r.missing
                << " missing\n";
    } else if (serve->parsed()) {
      cmd_serve(config, host, port, static_dir.empty() ? std::nullopt : std::optional<fs::path>(static_dir),
                std::cerr);
    } else if (simulate->parsed()) {
      const auto r = cmd_simulate(config, simulate_options, std::cerr);
      std::cout << r.completed << " participants, " << r.ratings << " ratings\n";
      if (r.completed == 0 && r.rejected > 0) {
        std::cerr << "study complete: no participant could be placed\n";
        return 3;
      }
    } else if (analyze->parsed()) {
      analyze_options.out = analyze_out;
      cmd_analyze(config, analyze_options, std::cerr);
    } else if (exporter->parsed()) {
      cmd_export(config, export_out, std::cerr);
    } else if (importer->parsed()) {
      const auto r = cmd_import(config, ratings_file.empty() ? std::nullopt : std::optional<fs::path>(ratings_file),
                                scores_file.empty() ? std::nullopt : std::optional<fs::path>(scores_file));
      std::cout << r.ratings << " ratings, " << r.scores << " scores imported\n";
    } else if (oracle->parsed()) {
      cmd_oracle(config, oracle->count("--http") ? std::optional<int>(oracle_port) : std::nullopt, host);
    }
  } catch (const ConflictError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
