#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "latentprobe/cmaes.hpp"
#include "latentprobe/latent.hpp"
#include "latentprobe/oracle.hpp"

namespace latentprobe {

enum class SampleType { genuine, positive, negative, interpolation, optimized };

inline constexpr std::array<SampleType, 5> kSampleTypes{SampleType::genuine, SampleType::positive,
                                                        SampleType::negative, SampleType::interpolation,
                                                        SampleType::optimized};

std::string to_string(SampleType type);
SampleType sample_type_from_string(std::string_view name);

struct GenuineKind {
  bool operator==(const GenuineKind&) const = default;
};
struct PositiveKind {
  int direction_index = 0;
  double distance = 0.0;
  bool operator==(const PositiveKind&) const = default;
};
struct NegativeKind {
  std::string source_base_id;
  bool operator==(const NegativeKind&) const = default;
};
struct InterpolationKind {
  std::string negative_base_id;
  double fraction = 0.0;
  bool operator==(const InterpolationKind&) const = default;
};
struct OptimizedKind {
  std::string start_negative_id;
  double threshold = 0.0;
  /// False until the optimizer run for this slot has finished.
  bool filled = false;
  bool reached = false;
  double achieved = 0.0;
  std::size_t generation = 0;
  bool operator==(const OptimizedKind&) const = default;
};

using SampleKind = std::variant<GenuineKind, PositiveKind, NegativeKind, InterpolationKind, OptimizedKind>;

SampleType type_of(const SampleKind& kind);

/// Step, fraction or threshold of the kind as shortest decimal text; empty for
/// genuine and negative samples.
std::string sublevel_of(const SampleKind& kind);

struct SampleRecord {
  std::string sample_id;
  std::string batch_id;
  std::string base_id;
  SampleKind kind;
  /// Empty while an optimized slot is pending.
  LatentVector latent;
  std::optional<ImageRef> image;
  double latent_distance_to_base = 0.0;
  /// Last generation failure, if any.
  std::string error;

  bool operator==(const SampleRecord& other) const;
};

struct BaseRecord {
  std::string base_id;
  LatentVector latent;
  std::optional<ImageRef> image;

  bool operator==(const BaseRecord& other) const;
};

struct Batch {
  std::string batch_id;
  std::uint64_t master_seed = 0;
  std::vector<BaseRecord> bases;
  std::vector<SampleRecord> samples;

  const BaseRecord& base(std::string_view base_id) const;
  bool optimized_complete() const;
  bool materialized() const;
  bool operator==(const Batch&) const = default;
};

struct SamplerConfig {
  std::vector<double> steps{0.2, 0.4, 0.6};
  std::vector<double> fractions{0.25, 0.5, 0.75};
  /// Strictly descending.
  std::vector<double> thresholds{0.5, 0.4, 0.3};
  int directions_per_base = 2;
  double direction_scale = 1.0;
  int bases_per_batch = 4;
  /// Objective value used when the decision model cannot score a candidate.
  double missing_penalty = 10.0;

  void validate() const;
  /// Samples per base: 1 + directions*steps + negatives*(1 + fractions + thresholds).
  std::size_t samples_per_base() const;
};

/// "<base_id>:<sample_id>" as displayed in the study (base left, sample right).
std::string pair_id_of(const SampleRecord& sample);

/// Id of base k in a batch.
std::string base_id_for(std::string_view batch_id, int k);

/// Random base latents for a batch, one stream per base ("<batch_id>/base:<k>").
std::vector<BaseRecord> draw_bases(std::string_view batch_id, std::uint64_t seed, Eigen::Index dim,
                                   const SamplerConfig& config);

/// Plans every non-optimized sample and the pending optimized slots.
Batch plan_batch(std::string batch_id, std::vector<BaseRecord> bases, std::uint64_t seed,
                 const SamplerConfig& config);

/// Count of samples per type.
std::map<SampleType, std::size_t> kind_histogram(const Batch& batch);
std::map<SampleType, std::size_t> kind_histogram(const Batch& batch, std::string_view base_id);

/// Fills the optimized slots: one CMA-ES run per (base, negative start) with
/// objective distance(generate(candidate), base image), then first crossings
/// at the configured thresholds. Already filled runs are skipped.
/// `on_run_complete` is called (serialized) after each finished run so the
/// caller can persist a resumable partial batch.
void run_optimized(Batch& batch, GeneratorOracle& generator, DecisionOracle& decision, const CmaConfig& cma,
                   const SamplerConfig& config, const std::function<void(const Batch&)>& on_run_complete = {},
                   int workers = 1);

struct MaterializeReport {
  std::size_t generate_calls = 0;
  std::size_t failures = 0;
};

/// Generates images for every base and sample lacking one. Failures leave a
/// per-sample error marker and the rest of the batch intact.
MaterializeReport materialize(Batch& batch, GeneratorOracle& generator);

}  // namespace latentprobe
