// Eigen must precede httplib: <resolv.h> defines a `_res` macro.
#include "latentprobe/study.hpp"

#include <algorithm>
#include <httplib.h>
#include <random>
#include <thread>

#include "latentprobe/error.hpp"
#include "latentprobe/fsio.hpp"
#include "latentprobe/rng.hpp"
#include "latentprobe/text.hpp"

namespace latentprobe {

namespace fs = std::filesystem;
using json = nlohmann::json;

void StudyConfig::validate() const {
  if (target_per_batch < 1) throw ValidationError("target_per_batch must be at least 1");
  if (expiry.count() < 1) throw ValidationError("session expiry must be at least one minute");
}

std::string to_string(SessionState state) {
  switch (state) {
    case SessionState::active: return "active";
    case SessionState::complete: return "complete";
    case SessionState::expired: return "expired";
  }
  return "active";
}

SessionState session_state_from_string(std::string_view name) {
  if (name == "active") return SessionState::active;
  if (name == "complete") return SessionState::complete;
  if (name == "expired") return SessionState::expired;
  throw ValidationError("unknown session state '" + std::string(name) + "'");
}

std::vector<std::string> session_order(std::vector<std::string> pair_ids, std::uint64_t seed, std::size_t number) {
  SeededRng rng(seed, "session:" + std::to_string(number));
  seeded_shuffle(pair_ids.begin(), pair_ids.end(), rng);
  return pair_ids;
}

json session_to_json(const Session& s) {
  return {{"session_id", s.session_id},
          {"participant_id", s.participant_id},
          {"batch_id", s.batch_id},
          {"number", s.number},
          {"order", s.order},
          {"demographics", s.demographics},
          {"strategy", s.strategy},
          {"state", to_string(s.state)},
          {"opened_at", s.opened_at},
          {"expires_at", s.expires_at}};
}

Session session_from_json(const json& j) {
  Session s;
  s.session_id = j.at("session_id").get<std::string>();
  s.participant_id = j.at("participant_id").get<std::string>();
  s.batch_id = j.at("batch_id").get<std::string>();
  s.number = j.at("number").get<std::size_t>();
  s.order = j.at("order").get<std::vector<std::string>>();
  s.demographics = j.value("demographics", json::object());
  s.strategy = j.value("strategy", json::object());
  s.state = session_state_from_string(j.at("state").get<std::string>());
  s.opened_at = j.at("opened_at").get<std::int64_t>();
  s.expires_at = j.at("expires_at").get<std::int64_t>();
  return s;
}

std::vector<AttentionEntry> attention_report(const PairIndex& pairs, const std::vector<Rating>& ratings,
                                             const std::string& batch_id, const AttentionRule& rule) {
  std::size_t genuine_total = 0;
  for (const auto& [id, p] : pairs)
    if (p.batch_id == batch_id && p.type == SampleType::genuine) ++genuine_total;

  std::map<std::string, AttentionEntry> by_participant;
  std::map<std::string, long long> similarity_sums;
  for (const auto& r : ratings) {
    const auto it = pairs.find(r.pair_id);
    if (it == pairs.end() || it->second.batch_id != batch_id) continue;
    auto& e = by_participant[r.participant_id];
    e.participant_id = r.participant_id;
    e.genuine_total = genuine_total;
    if (it->second.type != SampleType::genuine) continue;
    ++e.genuine_rated;
    if (r.same_person) ++e.genuine_same;
    similarity_sums[r.participant_id] += r.similarity;
  }

  std::vector<AttentionEntry> out;
  for (auto& [participant, e] : by_participant) {
    if (e.genuine_rated > 0)
      e.mean_genuine_similarity =
          static_cast<double>(similarity_sums[participant]) / static_cast<double>(e.genuine_rated);
    if (genuine_total > 0 && e.genuine_rated == genuine_total)
      e.flagged = e.genuine_same < static_cast<std::size_t>(rule.min_genuine_same) ||
                  *e.mean_genuine_similarity < rule.min_genuine_similarity;
    out.push_back(std::move(e));
  }
  return out;
}

StudyService::StudyService(const Dataset& dataset, StudyConfig config, Clock clock)
    : sessions_path_(dataset.sessions_path()),
      config_(std::move(config)),
      clock_(clock ? std::move(clock) : Clock([] { return std::chrono::system_clock::now(); })),
      pairs_(dataset.pair_index()) {
  config_.validate();
  batch_ids_ = dataset.batch_ids();
  if (batch_ids_.empty()) throw ValidationError("dataset has no batches to rate");
  for (const auto& id : batch_ids_) batch_pairs_[id];
  for (const auto& [id, p] : pairs_) {
    batch_pairs_[p.batch_id].push_back(id);
    if (p.base_image) images_.insert(p.base_image->path);
    if (p.sample_image) images_.insert(p.sample_image->path);
  }
  for (auto& [id, list] : batch_pairs_)
    std::sort(list.begin(), list.end(),
              [&](const std::string& a, const std::string& b) { return pairs_.at(a).index < pairs_.at(b).index; });

  ratings_ = std::make_unique<RatingLog>(dataset.ratings_path(), pairs_);
  partial_ = std::make_unique<RatingLog>(dataset.partial_ratings_path(), pairs_);

  if (fs::exists(sessions_path_)) {
    try {
      const auto doc = json::parse(read_file(sessions_path_));
      for (const auto& j : doc.at("sessions")) sessions_.push_back(session_from_json(j));
    } catch (const json::exception& e) {
      throw ValidationError("corrupt " + sessions_path_.string() + ": " + e.what());
    }
  }
  // The ratings table is the source of truth for progress.
  for (std::size_t i = 0; i < sessions_.size(); ++i) {
    auto& s = sessions_[i];
    if (!batch_pairs_.contains(s.batch_id)) throw ValidationError("session for unknown batch " + s.batch_id);
    s.cursor = s.state == SessionState::expired ? 0 : ratings_->count_for_participant(s.participant_id);
    if (s.state == SessionState::active && s.cursor >= s.order.size()) s.state = SessionState::complete;
    by_id_[s.session_id] = i;
  }
}

std::int64_t StudyService::now() const {
  return std::chrono::duration_cast<std::chrono::seconds>(clock_().time_since_epoch()).count();
}

std::string StudyService::new_token() {
  static thread_local std::random_device device;
  std::string token;
  static constexpr char kHex[] = "0123456789abcdef";
  for (int i = 0; i < 4; ++i) {
    auto word = device();
    for (int k = 0; k < 8; ++k, word >>= 4) token.push_back(kHex[word & 0xF]);
  }
  return token;
}

void StudyService::save_sessions_locked() const {
  json list = json::array();
  for (const auto& s : sessions_) list.push_back(session_to_json(s));
  write_file_atomic(sessions_path_, json{{"sessions", list}}.dump(1) + "\n");
}

void StudyService::expire_stale_locked() {
  const auto t = now();
  bool changed = false;
  for (auto& s : sessions_) {
    if (s.state != SessionState::active || t < s.expires_at) continue;
    // Keep the partial work, but out of the main table so the slot can be refilled.
    // Copy first so a crash in between duplicates rather than loses rows.
    for (const auto& r : ratings_->rows()) {
      if (r.participant_id != s.participant_id) continue;
      try {
        partial_->append(r);
      } catch (const ConflictError&) {
      }
    }
    ratings_->remove_participant(s.participant_id);
    s.state = SessionState::expired;
    s.cursor = 0;
    changed = true;
  }
  if (changed) save_sessions_locked();
}

Session& StudyService::find_locked(const std::string& session_id) {
  const auto it = by_id_.find(session_id);
  if (it == by_id_.end()) throw NotFoundError("unknown session");
  return sessions_[it->second];
}

Session& StudyService::active_locked(const std::string& session_id) {
  auto& s = find_locked(session_id);
  if (s.state == SessionState::expired) throw SessionExpiredError("session " + session_id + " has expired");
  return s;
}

Session StudyService::open_session(json demographics) {
  if (demographics.is_null()) demographics = json::object();
  if (!demographics.is_object()) throw ValidationError("demographics must be a JSON object");
  std::lock_guard lock(mutex_);
  expire_stale_locked();

  std::map<std::string, int> committed;
  for (const auto& s : sessions_)
    if (s.state != SessionState::expired) ++committed[s.batch_id];
  const std::string* chosen = nullptr;
  int best = config_.target_per_batch;
  for (const auto& id : batch_ids_) {
    const int c = committed[id];
    if (c < best) {
      best = c;
      chosen = &id;
    }
  }
  if (!chosen) throw StudyCompleteError("study complete: every batch has its raters");

  Session s;
  s.number = sessions_.size() + 1;
  s.session_id = new_token();
  while (by_id_.contains(s.session_id)) s.session_id = new_token();
  char participant[16];
  std::snprintf(participant, sizeof participant, "P%04zu", s.number);
  s.participant_id = participant;
  s.batch_id = *chosen;
  s.order = session_order(batch_pairs_.at(*chosen), config_.seed, s.number);
  s.demographics = std::move(demographics);
  s.opened_at = now();
  s.expires_at = s.opened_at + std::chrono::duration_cast<std::chrono::seconds>(config_.expiry).count();

  sessions_.push_back(s);
  by_id_[s.session_id] = sessions_.size() - 1;
  try {
    save_sessions_locked();
  } catch (...) {
    by_id_.erase(s.session_id);
    sessions_.pop_back();
    throw;
  }
  return s;
}

std::optional<PairDescriptor> StudyService::next_pair(const std::string& session_id) {
  std::lock_guard lock(mutex_);
  expire_stale_locked();
  const auto& s = active_locked(session_id);
  if (s.state == SessionState::complete || s.cursor >= s.order.size()) return std::nullopt;
  const auto& p = pairs_.at(s.order[s.cursor]);
  return PairDescriptor{p.pair_id, image_url(p.base_image), image_url(p.sample_image), s.cursor, s.order.size()};
}

std::size_t StudyService::submit_rating(const std::string& session_id, const std::string& pair_id, int similarity,
                                        bool same_person) {
  std::lock_guard lock(mutex_);
  expire_stale_locked();
  auto& s = active_locked(session_id);
  if (s.state == SessionState::complete) throw ConflictError("session is already complete");
  const auto& current = s.order[s.cursor];
  if (pair_id != current) throw ConflictError("pair " + pair_id + " is not the current pair; fetch the next pair again");
  const auto& p = pairs_.at(current);
  ratings_->append(Rating{s.participant_id, p.pair_id, p.base_id, p.sample_id, similarity, same_person,
                          static_cast<int>(s.cursor), utc_timestamp()});
  ++s.cursor;
  if (s.cursor == s.order.size()) {
    s.state = SessionState::complete;
    save_sessions_locked();
  }
  return s.cursor;
}

void StudyService::submit_strategy(const std::string& session_id, json answers) {
  if (answers.is_null()) answers = json::object();
  if (!answers.is_object()) throw ValidationError("strategy answers must be a JSON object");
  std::lock_guard lock(mutex_);
  expire_stale_locked();
  auto& s = find_locked(session_id);
  if (s.state != SessionState::complete) throw ConflictError("strategy questions open after the last rating");
  s.strategy = std::move(answers);
  save_sessions_locked();
}

Session StudyService::session(const std::string& session_id) {
  std::lock_guard lock(mutex_);
  expire_stale_locked();
  return find_locked(session_id);
}

std::vector<BatchProgress> StudyService::progress() {
  std::lock_guard lock(mutex_);
  expire_stale_locked();
  std::map<std::string, BatchProgress> by_batch;
  for (const auto& id : batch_ids_) by_batch[id].batch_id = id;
  for (const auto& s : sessions_) {
    auto& b = by_batch[s.batch_id];
    switch (s.state) {
      case SessionState::active: ++b.active; ++b.committed; break;
      case SessionState::complete: ++b.completed; ++b.committed; break;
      case SessionState::expired: ++b.expired; break;
    }
  }
  for (const auto& r : ratings_->rows()) ++by_batch[pairs_.at(r.pair_id).batch_id].ratings;
  std::vector<BatchProgress> out;
  for (const auto& id : batch_ids_) out.push_back(by_batch[id]);
  return out;
}

bool StudyService::study_complete() {
  const auto batches = progress();
  return std::all_of(batches.begin(), batches.end(),
                     [&](const BatchProgress& b) { return b.completed >= config_.target_per_batch; });
}

std::vector<AttentionEntry> StudyService::attention(const std::string& batch_id) const {
  if (!batch_pairs_.contains(batch_id)) throw NotFoundError("unknown batch " + batch_id);
  return attention_report(pairs_, ratings_->rows(), batch_id);
}

std::string StudyService::image_url(const std::optional<ImageRef>& ref) {
  return ref ? "/images/" + ref->path : std::string();
}

namespace {

json to_json(const PairDescriptor& d) {
  return {{"pair_id", d.pair_id},
          {"left_image_url", d.left_image_url},
          {"right_image_url", d.right_image_url},
          {"index", d.index},
          {"total", d.total}};
}

json to_json(const BatchProgress& b, int target) {
  return {{"batch_id", b.batch_id}, {"committed", b.committed}, {"completed", b.completed}, {"active", b.active},
          {"expired", b.expired},   {"ratings", b.ratings},     {"target", target}};
}

json to_json(const AttentionEntry& e) {
  return {{"participant_id", e.participant_id},
          {"genuine_rated", e.genuine_rated},
          {"genuine_total", e.genuine_total},
          {"genuine_same", e.genuine_same},
          {"mean_genuine_similarity", e.mean_genuine_similarity ? json(*e.mean_genuine_similarity) : json(nullptr)},
          {"flagged", e.flagged}};
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception&) {
    throw ValidationError("request body is not valid JSON");
  }
}

template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const StudyCompleteError& e) {
      reply(res, 409, {{"error", e.what()}, {"study_complete", true}});
    } catch (const NotFoundError& e) {
      reply(res, 404, {{"error", e.what()}});
    } catch (const ConflictError& e) {
      reply(res, 409, {{"error", e.what()}});
    } catch (const SessionExpiredError& e) {
      reply(res, 410, {{"error", e.what()}});
    } catch (const ValidationError& e) {
      reply(res, 400, {{"error", e.what()}});
    } catch (const json::exception& e) {
      reply(res, 400, {{"error", std::string("bad request: ") + e.what()}});
    } catch (const std::exception& e) {
      reply(res, 500, {{"error", e.what()}});
    }
  };
}

std::string content_type_for(const fs::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".webp") return "image/webp";
  return "application/octet-stream";
}

}  // namespace

struct StudyServer::Impl {
  StudyService& service;
  fs::path root;
  httplib::Server server;
  std::thread thread;

  Impl(StudyService& s, fs::path r) : service(s), root(std::move(r)) {}
};

StudyServer::StudyServer(StudyService& service, fs::path dataset_root, std::optional<fs::path> static_dir)
    : impl_(std::make_unique<Impl>(service, std::move(dataset_root))) {
  auto& srv = impl_->server;
  auto* impl = impl_.get();

  srv.Post("/api/session", guarded([impl](const httplib::Request& req, httplib::Response& res) {
             auto body = parse_body(req);
             auto demographics = body.is_object() && body.contains("demographics") ? body["demographics"] : body;
             const auto s = impl->service.open_session(std::move(demographics));
             reply(res, 200, {{"session_id", s.session_id},
                              {"participant_id", s.participant_id},
                              {"batch_id", s.batch_id},
                              {"total", s.order.size()}});
           }));
  srv.Get(R"(/api/session/([0-9a-f]+)/next)", guarded([impl](const httplib::Request& req, httplib::Response& res) {
            const auto next = impl->service.next_pair(req.matches[1]);
            if (next) reply(res, 200, to_json(*next));
            else reply(res, 200, {{"complete", true}});
          }));
  srv.Post(R"(/api/session/([0-9a-f]+)/rating)", guarded([impl](const httplib::Request& req, httplib::Response& res) {
             const auto body = parse_body(req);
             const auto& similarity = body.at("similarity");
             if (!similarity.is_number_integer()) throw ValidationError("similarity must be an integer");
             const auto& same = body.at("same_person");
             if (!same.is_boolean()) throw ValidationError("same_person must be true or false");
             const auto index = impl->service.submit_rating(req.matches[1], body.at("pair_id").get<std::string>(),
                                                            similarity.get<int>(), same.get<bool>());
             const bool complete = impl->service.session(req.matches[1]).state == SessionState::complete;
             reply(res, 200, {{"index", index}, {"complete", complete}});
           }));
  srv.Post(R"(/api/session/([0-9a-f]+)/strategy)", guarded([impl](const httplib::Request& req, httplib::Response& res) {
             impl->service.submit_strategy(req.matches[1], parse_body(req));
             reply(res, 200, json::object());
           }));
  srv.Get("/api/admin/progress", guarded([impl](const httplib::Request&, httplib::Response& res) {
            json batches = json::array();
            for (const auto& b : impl->service.progress())
              batches.push_back(to_json(b, impl->service.config().target_per_batch));
            reply(res, 200, {{"batches", batches}, {"study_complete", impl->service.study_complete()}});
          }));
  srv.Get("/api/admin/attention", guarded([impl](const httplib::Request& req, httplib::Response& res) {
            if (!req.has_param("batch")) throw ValidationError("missing ?batch=<id>");
            json list = json::array();
            for (const auto& e : impl->service.attention(req.get_param_value("batch"))) list.push_back(to_json(e));
            reply(res, 200, {{"participants", list}});
          }));
  srv.Get("/api/health", [](const httplib::Request&, httplib::Response& res) { reply(res, 200, {{"ok", true}}); });
  srv.Get(R"(/images/(.+))", guarded([impl](const httplib::Request& req, httplib::Response& res) {
            const std::string ref = req.matches[1];
            if (!is_safe_image_ref(ref) || !impl->service.is_study_image(ref)) throw NotFoundError("no such image");
            const auto path = impl->root / ref;
            if (!fs::is_regular_file(path)) throw NotFoundError("no such image");
            res.set_content(read_file(path), content_type_for(path));
          }));
  if (static_dir && !srv.set_mount_point("/", static_dir->string()))
    throw NotFoundError("static directory " + static_dir->string() + " does not exist");
}

StudyServer::~StudyServer() { stop(); }

int StudyServer::start(const std::string& host, int port) {
  auto& srv = impl_->server;
  const int bound = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw TransportError("cannot listen on " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  srv.wait_until_ready();
  return bound;
}

void StudyServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace latentprobe
