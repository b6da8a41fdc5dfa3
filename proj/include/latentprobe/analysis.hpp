#pragma once

#include <json.hpp>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "latentprobe/dataset.hpp"
#include "latentprobe/stats.hpp"

namespace latentprobe {

/// Name of the native latent-distance metric in score tables and reports.
inline constexpr std::string_view kLatentMetric = "latent";

struct PairAggregate {
  std::string pair_id;
  std::string batch_id;
  SampleType type = SampleType::genuine;
  std::string sublevel;
  std::size_t n = 0;
  long long similarity_sum = 0;
  long long same_count = 0;
  long long similarity_square_sum = 0;
  double mean_similarity = 0.0;
  double identity_fraction = 0.0;
  /// nullopt for single-rating pairs.
  std::optional<double> similarity_sd;
  std::optional<double> identity_sd;
  double latent_distance = 0.0;
  /// Only models with a record for this pair; nullopt is a missing score.
  std::map<std::string, std::optional<double>> distances;
};

struct ModelSummary {
  /// Pairs with a usable distance.
  std::size_t n = 0;
  std::optional<double> mean_distance;
  /// Absent for models without a threshold.
  std::optional<double> acceptance_rate;
};

/// One Table-1 row: a sample type with an optional sublevel, or "all".
struct SummaryRow {
  std::string type;
  std::string sublevel;
  std::size_t n_pairs = 0;
  std::size_t n_ratings = 0;
  double mean_similarity = 0.0;
  double mean_identity = 0.0;
  double mean_latent_distance = 0.0;
  std::map<std::string, ModelSummary> models;
};

struct AnalysisConfig {
  /// Acceptance thresholds; known recognition models get their defaults.
  std::map<std::string, double> thresholds;
  /// Correlate individual ratings instead of per-pair aggregates.
  bool per_rating = false;
  std::string disagreement_model = "dlib";
  std::size_t top_k = 8;

  std::optional<double> threshold_for(const std::string& model) const;
};

struct Aggregates {
  std::vector<PairAggregate> pairs;
  /// Pairs in the index without any rating.
  std::vector<std::string> unrated;
};

/// Per-pair aggregates, sorted by pair id. Only pairs in `pairs` with at
/// least one rating are included. Ratings of unknown pairs are rejected.
Aggregates aggregate(const PairIndex& pairs, const std::vector<Rating>& ratings, const ScoreTable& scores);

/// Per-type and per-sublevel summary plus an "all" row.
std::vector<SummaryRow> summarize(const std::vector<PairAggregate>& pairs, const AnalysisConfig& config);

/// Acceptance rate of one model over pairs with a usable distance.
std::optional<double> acceptance_rate(const std::vector<PairAggregate>& pairs, const std::string& model,
                                      double threshold);

struct CorrelationCell {
  std::string row;
  std::string column;
  PearsonResult result;
  std::string stars;
};

/// Pearson correlation of human identity judgments with similarity ratings,
/// each model's distance and the latent distance, per sample type and for
/// "all". Genuine pairs are left out.
std::vector<CorrelationCell> correlation_table(const std::vector<PairAggregate>& pairs,
                                               const std::vector<Rating>& ratings, const AnalysisConfig& config);

enum class DisagreementDirection { model_more_similar, humans_more_similar };

struct DisagreementEntry {
  std::string pair_id;
  SampleType type = SampleType::genuine;
  double score = 0.0;
  double identity_fraction = 0.0;
  double distance = 0.0;
  DisagreementDirection direction = DisagreementDirection::humans_more_similar;
};

struct DisagreementRanking {
  std::string model;
  double d_min = 0.0;
  double d_max = 0.0;
  std::size_t n = 0;
  /// Most negative scores first.
  std::vector<DisagreementEntry> model_more_similar;
  /// Most positive scores first.
  std::vector<DisagreementEntry> humans_more_similar;
};

/// score = identity_fraction - (1 - (d - d_min) / (d_max - d_min)).
/// ValidationError when every distance is equal.
DisagreementRanking disagreement(const std::vector<PairAggregate>& pairs, const std::string& model,
                                 std::size_t top_k);

struct RaterSpread {
  std::string pair_id;
  std::size_t n = 0;
  double similarity_sd = 0.0;
  double identity_sd = 0.0;
};

struct RaterDisagreement {
  /// Highest spread first; ties by pair id.
  std::vector<RaterSpread> by_similarity;
  std::vector<RaterSpread> by_identity;
  /// Pairs with a single rating.
  std::vector<std::string> excluded;
};

RaterDisagreement rater_disagreement(const std::vector<PairAggregate>& pairs, std::size_t top_k);

inline constexpr int kHistogramBinWidth = 5;
inline constexpr int kHistogramBins = 20;

/// Bin of a similarity rating; 100 shares the last bin.
int histogram_bin(int similarity);

/// Per-type similarity histograms over individual ratings.
std::map<std::string, std::vector<std::size_t>> similarity_histograms(const PairIndex& pairs,
                                                                      const std::vector<Rating>& ratings);

/// CSV: type,bin_lower,bin_upper,count
std::string histograms_csv(const std::map<std::string, std::vector<std::size_t>>& histograms);

/// Long CSV of model distances split by each rater's identity vote:
/// type,same_person,model,pair_id,distance
std::string violin_csv(const std::vector<PairAggregate>& pairs, const PairIndex& index,
                       const std::vector<Rating>& ratings);

/// Per (type, vote, model) quantiles of the violin data:
/// type,same_person,model,n,mean,min,q1,median,q3,max
std::string violin_summary_csv(const std::vector<PairAggregate>& pairs, const PairIndex& index,
                               const std::vector<Rating>& ratings);

/// CSV of the per-pair aggregates.
std::string pairs_csv(const std::vector<PairAggregate>& pairs);

std::string to_string(DisagreementDirection direction);

nlohmann::json to_json(const SummaryRow& row);
nlohmann::json to_json(const CorrelationCell& cell);
nlohmann::json to_json(const DisagreementRanking& ranking);
nlohmann::json to_json(const RaterDisagreement& spread);

}  // namespace latentprobe
