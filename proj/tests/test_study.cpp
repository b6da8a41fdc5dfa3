#include <gtest/gtest.h>

#include <atomic>
#include <set>
#include <thread>

// Eigen (via latentprobe headers) must precede httplib.
#include "latentprobe/fsio.hpp"
#include "latentprobe/study.hpp"
#include "test_support.hpp"

#include <httplib.h>

using namespace latentprobe;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

Batch planned(const std::string& id, std::uint64_t seed = 3) {
  SamplerConfig config;
  return plan_batch(id, draw_bases(id, seed, 16, config), seed, config);
}

const fs::path& make_dataset(const fs::path& root, int batches) {
  auto ds = Dataset::initialize(root, 16, 1.0, {});
  for (int b = 0; b < batches; ++b) ds.save_batch(planned("b" + std::to_string(b), 3 + b));
  return root;
}

struct FakeClock {
  std::shared_ptr<std::chrono::system_clock::time_point> t =
      std::make_shared<std::chrono::system_clock::time_point>(std::chrono::sys_days{std::chrono::year{2026} / 1 / 1});
  StudyService::Clock fn() const {
    return [t = t] { return *t; };
  }
  void advance(std::chrono::minutes m) { *t += m; }
};

// Rates every remaining pair of a session with a fixed answer.
void finish(StudyService& study, const std::string& session_id, int similarity = 50, bool same = false) {
  while (auto next = study.next_pair(session_id)) study.submit_rating(session_id, next->pair_id, similarity, same);
}

}  // namespace

TEST(Study, FreshSessionStartsAtZero) {
  testing_support::TempDir dir;
  Dataset ds(make_dataset(dir.path(), 1));
  StudyService study(ds, {});
  const auto s = study.open_session({{"age", "30-39"}});
  EXPECT_EQ(s.participant_id, "P0001");
  EXPECT_EQ(s.batch_id, "b0");
  ASSERT_EQ(s.order.size(), 112u);
  const auto next = study.next_pair(s.session_id);
  ASSERT_TRUE(next);
  EXPECT_EQ(next->index, 0u);
  EXPECT_EQ(next->total, 112u);
  EXPECT_EQ(next->pair_id, s.order[0]);
}

TEST(Study, OrderIsAPermutationOfTheBatch) {
  testing_support::TempDir dir;
  Dataset ds(make_dataset(dir.path(), 1));
  StudyService study(ds, {});
  const auto s = study.open_session({});
  std::set<std::string> seen(s.order.begin(), s.order.end());
  std::set<std::string> expected;
  for (const auto& [id, p] : study.pairs()) expected.insert(id);
  EXPECT_EQ(seen, expected);
}

TEST(Study, SessionsOnOneBatchGetDifferentOrders) {
  testing_support::TempDir dir;
  Dataset ds(make_dataset(dir.path(), 1));
  StudyService study(ds, {});
  const auto a = study.open_session({});
  const auto b = study.open_session({});
  EXPECT_EQ(a.batch_id, b.batch_id);
  EXPECT_NE(a.order, b.order);
  EXPECT_NE(a.session_id, b.session_id);
}

TEST(Study, OrderFollowsTheSeedStream) {
  testing_support::TempDir dir;
  Dataset ds(make_dataset(dir.path(), 1));
  StudyConfig config;
  config.seed = 99;
  StudyService study(ds, config);
  study.open_session({});
  const auto second = study.open_session({});
  std::vector<std::string> stored;
  for (const auto& [id, p] : study.pairs()) stored.push_back(id);
  std::sort(stored.begin(), stored.end(),
            [&](const auto& x, const auto& y) { return study.pairs().at(x).index < study.pairs().at(y).index; });
  EXPECT_EQ(second.order, session_order(stored, 99, 2));
}

TEST(Study, NextPairIsIdempotent) {
  testing_support::TempDir dir;
  Dataset ds(make_dataset(dir.path(), 1));
  StudyService study(ds, {});
  const auto s = study.open_session({});
  const auto first = study.next_pair(s.session_id);
  const auto again = study.next_pair(s.session_id);
  ASSERT_TRUE(first && again);
  EXPECT_EQ(first->pair_id, again->pair_id);
  EXPECT_EQ(again->index, 0u);
}

TEST(Study, StalePairConflicts) {
  testing_support::TempDir dir;
  Dataset ds(make_dataset(dir.path(), 1));
  StudyService study(ds, {});
  const auto s = study.open_session({});
  const auto first = study.next_pair(s.session_id);
  study.submit_rating(s.session_id, first->pair_id, 40, false);
  // a client that missed the advance resubmits the old pair
  EXPECT_THROW(study.submit_rating(s.session_id, first->pair_id, 40, false), ConflictError);
  const auto second = study.next_pair(s.session_id);
  EXPECT_EQ(second->index, 1u);
  EXPECT_EQ(study.submit_rating(s.session_id, second->pair_id, 60, true), 2u);
}

TEST(Study, InvalidRatingLeavesCursor) {
  testing_support::TempDir dir;
  Dataset ds(make_dataset(dir.path(), 1));
  StudyService study(ds, {});
  const auto s = study.open_session({});
  const auto first = study.next_pair(s.session_id);
  EXPECT_THROW(study.submit_rating(s.session_id, first->pair_id, 101, false), ValidationError);
  EXPECT_EQ(study.next_pair(s.session_id)->index, 0u);
  EXPECT_THROW(study.next_pair("feedface"), NotFoundError);
}

TEST(Study, CompletionPersistsAllRatings) {
  testing_support::TempDir dir;
  Dataset ds(make_dataset(dir.path(), 1));
  StudyService study(ds, {});
  const auto s = study.open_session({});
  EXPECT_THROW(study.submit_strategy(s.session_id, {{"similarity_strategy", "eyes"}}), ConflictError);
  finish(study, s.session_id);
  EXPECT_FALSE(study.next_pair(s.session_id));
  EXPECT_EQ(study.session(s.session_id).state, SessionState::complete);
  EXPECT_EQ(study.rating_count(), 112u);
  study.submit_strategy(s.session_id, {{"similarity_strategy", "eyes"}, {"identity_strategy", "nose"}});

  RatingLog log(ds.ratings_path(), study.pairs());
  EXPECT_EQ(log.count_for_participant(s.participant_id), 112u);
  const auto rows = log.rows();
  std::set<int> orders;
  for (const auto& r : rows) orders.insert(r.order_index);
  EXPECT_EQ(orders.size(), 112u);
}

TEST(Study, LeastCommittedBatchThenStudyFull) {
  testing_support::TempDir dir;
  Dataset ds(make_dataset(dir.path(), 2));
  StudyConfig config;
  config.target_per_batch = 2;
  StudyService study(ds, config);
  std::vector<std::string> batches;
  for (int i = 0; i < 4; ++i) batches.push_back(study.open_session({}).batch_id);
  EXPECT_EQ(batches, (std::vector<std::string>{"b0", "b1", "b0", "b1"}));
  EXPECT_THROW(study.open_session({}), StudyCompleteError);
  EXPECT_FALSE(study.study_complete());
}

TEST(Study, ConcurrentOpensNeverOverCommit) {
  for (int round = 0; round < 10; ++round) {
    testing_support::TempDir dir;
    Dataset ds(make_dataset(dir.path(), 2));
    StudyConfig config;
    config.target_per_batch = 1;
    StudyService study(ds, config);
    // b0 already holds its only slot; b1 has one left.
    EXPECT_EQ(study.open_session({}).batch_id, "b0");

    std::atomic<int> won{0}, full{0};
    std::vector<std::string> got(4);
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t)
      threads.emplace_back([&, t] {
        try {
          got[t] = study.open_session({}).batch_id;
          ++won;
        } catch (const StudyCompleteError&) {
          ++full;
        }
      });
    for (auto& th : threads) th.join();
    EXPECT_EQ(won, 1);
    EXPECT_EQ(full, 3);
    EXPECT_EQ(std::count(got.begin(), got.end(), "b1"), 1);
  }
}

TEST(Study, ExpiredSessionReleasesItsSlot) {
  testing_support::TempDir dir;
  Dataset ds(make_dataset(dir.path(), 1));
  FakeClock clock;
  StudyConfig config;
  config.target_per_batch = 1;
  StudyService study(ds, config, clock.fn());
  const auto s = study.open_session({});
  for (int i = 0; i < 5; ++i) {
    const auto next = study.next_pair(s.session_id);
    study.submit_rating(s.session_id, next->pair_id, 70, true);
  }
  EXPECT_THROW(study.open_session({}), StudyCompleteError);

  clock.advance(std::chrono::minutes(59));
  EXPECT_EQ(study.next_pair(s.session_id)->index, 5u);
  clock.advance(std::chrono::minutes(1));
  EXPECT_THROW(study.next_pair(s.session_id), SessionExpiredError);
  EXPECT_EQ(study.session(s.session_id).state, SessionState::expired);
  EXPECT_EQ(study.rating_count(), 0u);
  RatingLog partial(ds.partial_ratings_path(), study.pairs());
  EXPECT_EQ(partial.count_for_participant(s.participant_id), 5u);

  const auto refill = study.open_session({});
  EXPECT_EQ(refill.batch_id, "b0");
  finish(study, refill.session_id);
  EXPECT_TRUE(study.study_complete());
  const auto progress = study.progress();
  ASSERT_EQ(progress.size(), 1u);
  EXPECT_EQ(progress[0].completed, 1);
  EXPECT_EQ(progress[0].expired, 1);
  EXPECT_EQ(progress[0].ratings, 112u);
}

TEST(Study, RestartRecoversCursorFromRatings) {
  testing_support::TempDir dir;
  Dataset ds(make_dataset(dir.path(), 1));
  std::string id;
  std::string expected_pair;
  {
    StudyService study(ds, {});
    const auto s = study.open_session({{"age", "20-29"}});
    id = s.session_id;
    for (int i = 0; i < 57; ++i) study.submit_rating(id, study.next_pair(id)->pair_id, 10, false);
    expected_pair = s.order[57];
  }
  StudyService reopened(ds, {});
  const auto next = reopened.next_pair(id);
  ASSERT_TRUE(next);
  EXPECT_EQ(next->index, 57u);
  EXPECT_EQ(next->pair_id, expected_pair);
  EXPECT_EQ(reopened.session(id).demographics.at("age"), "20-29");
}

TEST(Study, CohortGivesEveryPairExactlyTargetRatings) {
  testing_support::TempDir dir;
  Dataset ds(make_dataset(dir.path(), 1));
  StudyService study(ds, {});
  std::vector<std::thread> threads;
  std::vector<std::vector<std::string>> orders(10);
  for (int t = 0; t < 10; ++t)
    threads.emplace_back([&, t] {
      const auto s = study.open_session({});
      orders[t] = s.order;
      finish(study, s.session_id, 50 + t, t % 2 == 0);
    });
  for (auto& th : threads) th.join();

  EXPECT_THROW(study.open_session({}), StudyCompleteError);
  EXPECT_TRUE(study.study_complete());
  EXPECT_EQ(std::set<std::vector<std::string>>(orders.begin(), orders.end()).size(), 10u);

  RatingLog log(ds.ratings_path(), study.pairs());
  EXPECT_EQ(log.size(), 1120u);
  std::map<std::string, int> per_pair;
  for (const auto& r : log.rows()) ++per_pair[r.pair_id];
  EXPECT_EQ(per_pair.size(), 112u);
  for (const auto& [pair, n] : per_pair) EXPECT_EQ(n, 10) << pair;
}

// Positional frequencies over 10^4 seeded orders should be flat: each pair
// lands in each position about 10^4 / 112 times.
TEST(Study, PermutationPositionsAreFlat) {
  constexpr int kPairs = 112;
  constexpr int kSessions = 10000;
  std::vector<std::string> ids;
  for (int i = 0; i < kPairs; ++i) ids.push_back("p" + std::to_string(i));
  std::map<std::string, int> slot;
  for (int i = 0; i < kPairs; ++i) slot[ids[i]] = i;

  std::vector<std::vector<int>> counts(kPairs, std::vector<int>(kPairs, 0));
  for (int n = 1; n <= kSessions; ++n) {
    const auto order = session_order(ids, 42, static_cast<std::size_t>(n));
    for (int pos = 0; pos < kPairs; ++pos) ++counts[slot.at(order[pos])][pos];
  }
  const double expected = static_cast<double>(kSessions) / kPairs;
  double chi2 = 0.0;
  for (const auto& row : counts)
    for (int c : row) chi2 += (c - expected) * (c - expected) / expected;
  // Rows and columns each sum to kSessions, so (k-1)^2 degrees of freedom.
  const double dof = (kPairs - 1.0) * (kPairs - 1.0);
  EXPECT_LT(std::abs(chi2 - dof), 5.0 * std::sqrt(2.0 * dof)) << "chi2 = " << chi2;

  // first position alone: 111 dof
  double first = 0.0;
  for (int i = 0; i < kPairs; ++i) first += (counts[i][0] - expected) * (counts[i][0] - expected) / expected;
  EXPECT_LT(first, 111.0 + 5.0 * std::sqrt(222.0)) << "chi2 = " << first;
}

TEST(Attention, Rules) {
  testing_support::TempDir dir;
  Dataset ds(make_dataset(dir.path(), 1));
  const auto pairs = ds.pair_index();
  std::vector<std::string> genuine;
  std::string other;
  for (const auto& [id, p] : pairs) {
    if (p.type == SampleType::genuine) genuine.push_back(id);
    else if (other.empty()) other = id;
  }
  ASSERT_EQ(genuine.size(), 4u);
  auto rate = [&](const std::string& who, const std::string& id, int sim, bool same) {
    const auto& p = pairs.at(id);
    return Rating{who, id, p.base_id, p.sample_id, sim, same, 0, ""};
  };
  std::vector<Rating> ratings;
  for (const auto& g : genuine) ratings.push_back(rate("perfect", g, 100, true));
  for (std::size_t i = 0; i < genuine.size(); ++i) ratings.push_back(rate("sloppy", genuine[i], 100, i == 0));
  for (std::size_t i = 0; i < genuine.size(); ++i) ratings.push_back(rate("vague", genuine[i], 79, true));
  for (std::size_t i = 0; i < genuine.size(); ++i) ratings.push_back(rate("borderline", genuine[i], i == 0 ? 80 : 90, i != 0));
  ratings.push_back(rate("partial", genuine[0], 0, false));
  ratings.push_back(rate("partial", other, 0, false));

  std::map<std::string, AttentionEntry> report;
  for (auto& e : attention_report(pairs, ratings, "b0")) report[e.participant_id] = e;
  ASSERT_EQ(report.size(), 5u);
  EXPECT_FALSE(report["perfect"].flagged);
  EXPECT_EQ(report["perfect"].genuine_same, 4u);
  EXPECT_DOUBLE_EQ(*report["perfect"].mean_genuine_similarity, 100.0);
  EXPECT_TRUE(report["sloppy"].flagged);
  EXPECT_TRUE(report["vague"].flagged);
  EXPECT_FALSE(report["borderline"].flagged);
  EXPECT_DOUBLE_EQ(*report["borderline"].mean_genuine_similarity, 87.5);
  // judged only once all genuine pairs are rated
  EXPECT_FALSE(report["partial"].flagged);
  EXPECT_EQ(report["partial"].genuine_rated, 1u);
  EXPECT_TRUE(attention_report(pairs, ratings, "elsewhere").empty());
}

TEST(StudyHttp, SessionFlow) {
  testing_support::TempDir dir;
  auto ds = Dataset::initialize(dir.path(), 16, 1.0, {});
  auto batch = planned("b0");
  batch.bases[0].image = ImageRef{"images/base0.png"};
  ds.save_batch(batch);
  fs::create_directories(dir.path() / "images");
  write_file_atomic(dir.path() / "images/base0.png", "PNGDATA");
  write_file_atomic(dir.path() / "secret.txt", "nope");

  StudyConfig config;
  config.target_per_batch = 1;
  StudyService study(ds, config);
  StudyServer server(study, dir.path());
  const int port = server.start("127.0.0.1", 0);
  httplib::Client client("127.0.0.1", port);

  auto res = client.Post("/api/session", json{{"demographics", {{"gender", "x"}}}}.dump(), "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const auto opened = json::parse(res->body);
  EXPECT_EQ(opened.at("total"), 112);
  const std::string id = opened.at("session_id");

  res = client.Get("/api/session/" + id + "/next");
  ASSERT_EQ(res->status, 200);
  auto next = json::parse(res->body);
  EXPECT_EQ(next.at("index"), 0);
  EXPECT_EQ(next.at("total"), 112);
  EXPECT_TRUE(next.at("left_image_url").get<std::string>().starts_with("/images/"));

  res = client.Post("/api/session/" + id + "/rating",
                    json{{"pair_id", "not-the-pair"}, {"similarity", 5}, {"same_person", false}}.dump(),
                    "application/json");
  EXPECT_EQ(res->status, 409);
  res = client.Post("/api/session/" + id + "/rating",
                    json{{"pair_id", next.at("pair_id")}, {"similarity", "high"}, {"same_person", false}}.dump(),
                    "application/json");
  EXPECT_EQ(res->status, 400);
  res = client.Post("/api/session/" + id + "/rating", "{not json", "application/json");
  EXPECT_EQ(res->status, 400);
  res = client.Post("/api/session/" + id + "/rating",
                    json{{"pair_id", next.at("pair_id")}, {"similarity", 5}, {"same_person", false}}.dump(),
                    "application/json");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body).at("index"), 1);

  res = client.Post("/api/session/" + id + "/strategy", "{}", "application/json");
  EXPECT_EQ(res->status, 409);
  res = client.Post("/api/session", "{}", "application/json");
  EXPECT_EQ(res->status, 409);
  EXPECT_TRUE(json::parse(res->body).at("study_complete").get<bool>());
  res = client.Get("/api/session/0123abcd/next");
  EXPECT_EQ(res->status, 404);

  res = client.Get("/api/admin/progress");
  ASSERT_EQ(res->status, 200);
  const auto progress = json::parse(res->body);
  EXPECT_EQ(progress.at("batches")[0].at("committed"), 1);
  EXPECT_EQ(progress.at("batches")[0].at("ratings"), 1);
  res = client.Get("/api/admin/attention?batch=b0");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body).at("participants").size(), 1u);

  res = client.Get("/images/images/base0.png");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(res->body, "PNGDATA");
  EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");
  res = client.Get("/images/../secret.txt");
  EXPECT_NE(res->status, 200);
  res = client.Get("/images/secret.txt");
  EXPECT_EQ(res->status, 404);
  server.stop();
}
