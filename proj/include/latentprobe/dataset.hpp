#pragma once

#include <filesystem>
#include <json.hpp>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "latentprobe/sampler.hpp"

namespace latentprobe {

/// On-disk layout under a dataset root:
///
///   manifest.json                      dim, direction_scale, creation parameters, batch list + checksums
///   batches/<id>/batch.json            sample metadata (kinds, images, distances)
///   batches/<id>/latents.bin           little-endian float32, row-major, one row per id
///   batches/<id>/latents.f64           the same rows as float64 (exact values)
///   batches/<id>/latents.json          {dim, count, dtype, ids}
///   images/<hash>.<ext>                content-addressed images
///   ratings.csv, scores.csv            rating and score tables
struct BatchEntry {
  std::string batch_id;
  std::size_t sample_count = 0;
  bool optimized_complete = false;
  bool materialized = false;
  /// File name -> sha256 of its bytes.
  std::map<std::string, std::string> checksums;
};

struct Manifest {
  int format_version = 1;
  Eigen::Index dim = kDefaultLatentDim;
  double direction_scale = 1.0;
  nlohmann::json creation = nlohmann::json::object();
  std::vector<BatchEntry> batches;
};

/// One displayed pair: base on the left, sample on the right.
struct PairInfo {
  std::string pair_id;
  std::string batch_id;
  std::string base_id;
  std::string sample_id;
  SampleType type = SampleType::genuine;
  std::string sublevel;
  double latent_distance = 0.0;
  std::optional<ImageRef> base_image;
  std::optional<ImageRef> sample_image;
  /// Position of the sample within its batch.
  std::size_t index = 0;
};

using PairIndex = std::map<std::string, PairInfo>;

class Dataset {
 public:
  /// Opens an existing dataset; NotFoundError when there is no manifest.
  explicit Dataset(std::filesystem::path root);

  /// Creates the root and manifest, or opens an existing dataset after
  /// checking that its dimension matches.
  static Dataset initialize(const std::filesystem::path& root, Eigen::Index dim, double direction_scale,
                            nlohmann::json creation);

  Dataset(const Dataset&) = delete;
  Dataset& operator=(const Dataset&) = delete;

  const std::filesystem::path& root() const { return root_; }
  Manifest manifest() const;
  std::vector<std::string> batch_ids() const;
  bool has_batch(const std::string& batch_id) const;

  /// Writes the batch files atomically, then updates the manifest.
  void save_batch(const Batch& batch);

  /// NotFoundError for unknown ids, ChecksumError naming the corrupt file.
  Batch load_batch(const std::string& batch_id) const;

  /// Pairs of every batch, keyed by pair id.
  PairIndex pair_index() const;

  std::filesystem::path ratings_path() const { return root_ / "ratings.csv"; }
  std::filesystem::path partial_ratings_path() const { return root_ / "ratings_partial.csv"; }
  std::filesystem::path scores_path() const { return root_ / "scores.csv"; }
  std::filesystem::path sessions_path() const { return root_ / "sessions.json"; }
  std::filesystem::path lock_path() const { return root_ / ".lock"; }

 private:
  void write_manifest() const;

  std::filesystem::path root_;
  mutable std::mutex mutex_;
  Manifest manifest_;
};

nlohmann::json manifest_to_json(const Manifest& manifest);
Manifest manifest_from_json(const nlohmann::json& j);

nlohmann::json batch_to_json(const Batch& batch);
/// Metadata only; latents are filled in by the caller.
Batch batch_from_json(const nlohmann::json& j);

PairIndex pair_index_of(const Batch& batch);

/// One human judgment of one (base, sample) pair.
struct Rating {
  std::string participant_id;
  std::string pair_id;
  std::string base_id;
  std::string sample_id;
  int similarity = 0;
  bool same_person = false;
  int order_index = 0;
  std::string timestamp;

  bool operator==(const Rating&) const = default;
};

inline constexpr std::string_view kRatingsHeader =
    "participant_id,pair_id,base_id,sample_id,similarity,same_person,order_index,timestamp";
inline constexpr std::string_view kScoresHeader = "pair_id,model_name,distance";

std::string rating_to_csv_line(const Rating& r);

/// Checks ranges, identifiers and that the pair exists with matching base and sample ids.
void validate_rating(const Rating& r, const PairIndex& pairs);

/// Parses a ratings table. Errors carry the 1-based line number.
std::vector<Rating> parse_ratings_csv(std::string_view text, const PairIndex& pairs);

/// Append-only ratings table. Each append is one newline-terminated write
/// followed by fsync; a torn trailing line from a crash is dropped on open.
class RatingLog {
 public:
  RatingLog(std::filesystem::path path, const PairIndex& pairs);

  RatingLog(const RatingLog&) = delete;
  RatingLog& operator=(const RatingLog&) = delete;

  /// ConflictError for a duplicate (participant, pair); ValidationError otherwise.
  void append(const Rating& rating);

  std::vector<Rating> rows() const;
  std::size_t size() const;
  std::size_t count_for_participant(const std::string& participant_id) const;

  /// Removes a participant's rows from the table (atomic rewrite) and returns them.
  std::vector<Rating> remove_participant(const std::string& participant_id);

  /// Validates every row, then merges them in one atomic rewrite.
  /// Rows identical to stored ones are skipped; other duplicates conflict.
  std::size_t import_csv(std::string_view text);

  /// Header plus rows sorted by (participant_id, order_index).
  std::string canonical_csv() const;

 private:
  void rewrite_locked();

  std::filesystem::path path_;
  const PairIndex& pairs_;
  mutable std::mutex mutex_;
  std::vector<Rating> rows_;
  std::set<std::pair<std::string, std::string>> keys_;
};

struct ScoreRecord {
  std::string pair_id;
  std::string model_name;
  /// nullopt is the missing marker ("NA").
  std::optional<double> distance;

  bool operator==(const ScoreRecord&) const = default;
};

/// At most one distance per (pair, model).
class ScoreTable {
 public:
  ScoreTable() = default;
  /// Loads the file when it exists.
  explicit ScoreTable(std::filesystem::path path);

  /// Parses and validates the whole text first; nothing changes on error.
  /// Re-importing the same rows is a no-op; later values replace earlier ones.
  std::size_t import_csv(std::string_view text, const PairIndex& pairs);

  void set(const ScoreRecord& record);
  bool contains(const std::string& pair_id, const std::string& model) const;
  /// Outer nullopt: no record. Inner nullopt: missing marker.
  std::optional<std::optional<double>> find(const std::string& pair_id, const std::string& model) const;
  std::set<std::string> models() const;
  std::size_t size() const { return records_.size(); }
  std::vector<ScoreRecord> records() const;

  /// Header plus rows sorted by (pair_id, model_name); LF line ends.
  std::string canonical_csv() const;
  void save() const;
  void save_to(const std::filesystem::path& path) const;

 private:
  std::filesystem::path path_;
  std::map<std::pair<std::string, std::string>, std::optional<double>> records_;
};

/// Parses a scores table. Errors carry the 1-based line number.
std::vector<ScoreRecord> parse_scores_csv(std::string_view text, const PairIndex& pairs);

}  // namespace latentprobe
