#pragma once

#include <chrono>
#include <functional>
#include <json.hpp>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "latentprobe/dataset.hpp"

namespace latentprobe {

struct StudyConfig {
  int target_per_batch = 10;
  std::chrono::minutes expiry{60};
  /// Seeds the per-session order streams ("session:<n>").
  std::uint64_t seed = 0;

  void validate() const;
};

enum class SessionState { active, complete, expired };

std::string to_string(SessionState state);
SessionState session_state_from_string(std::string_view name);

struct Session {
  std::string session_id;
  std::string participant_id;
  std::string batch_id;
  /// 1-based position in opening order; also names the order stream.
  std::size_t number = 0;
  std::vector<std::string> order;
  std::size_t cursor = 0;
  nlohmann::json demographics = nlohmann::json::object();
  nlohmann::json strategy = nlohmann::json::object();
  SessionState state = SessionState::active;
  std::int64_t opened_at = 0;
  std::int64_t expires_at = 0;
};

/// Pair order of the n-th session: a seeded shuffle of the batch's pairs.
std::vector<std::string> session_order(std::vector<std::string> pair_ids, std::uint64_t seed, std::size_t number);

nlohmann::json session_to_json(const Session& s);
Session session_from_json(const nlohmann::json& j);

/// What the client shows next: base on the left, sample on the right.
struct PairDescriptor {
  std::string pair_id;
  std::string left_image_url;
  std::string right_image_url;
  std::size_t index = 0;
  std::size_t total = 0;
};

struct BatchProgress {
  std::string batch_id;
  /// Active plus completed sessions.
  int committed = 0;
  int completed = 0;
  int active = 0;
  int expired = 0;
  std::size_t ratings = 0;
};

struct AttentionRule {
  int min_genuine_same = 3;
  double min_genuine_similarity = 80.0;
};

struct AttentionEntry {
  std::string participant_id;
  std::size_t genuine_rated = 0;
  std::size_t genuine_total = 0;
  std::size_t genuine_same = 0;
  std::optional<double> mean_genuine_similarity;
  /// Advisory only; nothing is dropped.
  bool flagged = false;
};

/// Attention check over the genuine pairs of one batch, judged once a
/// participant has rated all of them.
std::vector<AttentionEntry> attention_report(const PairIndex& pairs, const std::vector<Rating>& ratings,
                                             const std::string& batch_id, const AttentionRule& rule = {});

/// Runs the rating study over a dataset. All mutations go through one
/// mutex, so concurrent sessions can never push a pair past its target.
class StudyService {
 public:
  using Clock = std::function<std::chrono::system_clock::time_point()>;

  StudyService(const Dataset& dataset, StudyConfig config, Clock clock = {});

  StudyService(const StudyService&) = delete;
  StudyService& operator=(const StudyService&) = delete;

  /// Assigns the least-committed open batch (ties to the earliest batch).
  /// StudyCompleteError when every batch is fully committed.
  Session open_session(nlohmann::json demographics);

  /// nullopt once the session is complete. Does not advance the cursor.
  std::optional<PairDescriptor> next_pair(const std::string& session_id);

  /// Records a rating for the current pair and returns the new cursor.
  /// ConflictError when pair_id is not the current pair.
  std::size_t submit_rating(const std::string& session_id, const std::string& pair_id, int similarity,
                            bool same_person);

  /// Only after the last rating.
  void submit_strategy(const std::string& session_id, nlohmann::json answers);

  Session session(const std::string& session_id);
  std::vector<BatchProgress> progress();
  bool study_complete();
  std::vector<AttentionEntry> attention(const std::string& batch_id) const;

  const StudyConfig& config() const { return config_; }
  const PairIndex& pairs() const { return pairs_; }
  std::size_t rating_count() const { return ratings_->size(); }

  /// Only images shown in some pair may be served.
  bool is_study_image(const std::string& ref) const { return images_.contains(ref); }

  /// URL path under which an image reference is served.
  static std::string image_url(const std::optional<ImageRef>& ref);

 private:
  std::int64_t now() const;
  void expire_stale_locked();
  void save_sessions_locked() const;
  Session& find_locked(const std::string& session_id);
  Session& active_locked(const std::string& session_id);
  std::string new_token();

  std::filesystem::path sessions_path_;
  StudyConfig config_;
  Clock clock_;
  PairIndex pairs_;
  /// Batch ids in manifest order and their pairs in stored order.
  std::vector<std::string> batch_ids_;
  std::map<std::string, std::vector<std::string>> batch_pairs_;
  std::set<std::string> images_;
  std::unique_ptr<RatingLog> ratings_;
  std::unique_ptr<RatingLog> partial_;
  mutable std::mutex mutex_;
  std::vector<Session> sessions_;
  std::map<std::string, std::size_t> by_id_;
};

/// HTTP front end of a StudyService:
///   POST /api/session, GET /api/session/{id}/next, POST /api/session/{id}/rating,
///   POST /api/session/{id}/strategy, GET /api/admin/progress,
///   GET /api/admin/attention?batch=<id>, GET /api/health, GET /images/<ref>
/// and, optionally, a static client bundle under "/".
class StudyServer {
 public:
  StudyServer(StudyService& service, std::filesystem::path dataset_root,
              std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~StudyServer();
  StudyServer(const StudyServer&) = delete;
  StudyServer& operator=(const StudyServer&) = delete;

  /// Binds and serves on a background thread; port 0 picks a free port.
  int start(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace latentprobe
