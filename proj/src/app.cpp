// Eigen must precede httplib: <resolv.h> defines a `_res` macro.
#include "latentprobe/app.hpp"

#include <signal.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <iostream>
#include <set>
#include <thread>

#include "latentprobe/analysis.hpp"
#include "latentprobe/dataset.hpp"
#include "latentprobe/error.hpp"
#include "latentprobe/fsio.hpp"
#include "latentprobe/protocol.hpp"
#include "latentprobe/rng.hpp"
#include "latentprobe/study.hpp"
#include "latentprobe/text.hpp"

#include <httplib.h>

namespace latentprobe {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Scratch images kept during optimization; the base image is read on every
// evaluation, so it never ages out.
constexpr std::size_t kScratchImages = 4096;

void require_dataset_path(const RunConfig& config) {
  if (config.dataset.empty()) throw ValidationError("no dataset given (--dataset <dir>)");
}

struct Oracles {
  std::shared_ptr<GeneratorOracle> generator;
  std::shared_ptr<DecisionBackend> backend;
};

// Oracles whose images land in `store_root`, or in a bounded scratch store
// when store_root is empty (synthetic optimization only).
Oracles make_oracles(const RunConfig& config, const fs::path& store_root) {
  if (config.synthetic) {
    std::shared_ptr<ImageStore> store;
    if (store_root.empty()) store = std::make_shared<MemoryImageStore>(kScratchImages);
    else store = std::make_shared<DirectoryImageStore>(store_root);
    auto world = std::make_shared<SyntheticWorld>(config.dim, config.synthetic_normalizer, store);
    return {world, world};
  }
  if (config.oracle.empty()) throw ValidationError("no oracle configured: pass --oracle <descriptor> or --synthetic");
  auto remote = std::make_shared<RemoteOracle>(make_transport(config.oracle), config.dim);
  return {remote, remote};
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

std::vector<Rating> canonical_ratings(std::vector<Rating> rows) {
  std::sort(rows.begin(), rows.end(), [](const Rating& a, const Rating& b) {
    return std::tie(a.participant_id, a.order_index, a.pair_id) < std::tie(b.participant_id, b.order_index, b.pair_id);
  });
  return rows;
}

std::string pair_index_csv(const PairIndex& pairs) {
  std::string out = "pair_id,batch_id,base_id,sample_id,type,sublevel,latent_distance,base_image,sample_image\n";
  for (const auto& [id, p] : pairs) {
    out += id + ',' + p.batch_id + ',' + p.base_id + ',' + p.sample_id + ',' + to_string(p.type) + ',' + p.sublevel +
           ',' + format_number(p.latent_distance) + ',' + (p.base_image ? p.base_image->path : "") + ',' +
           (p.sample_image ? p.sample_image->path : "") + '\n';
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  if (dim < 1) throw ValidationError("dim must be positive");
  if (!(synthetic_normalizer > 0.0)) throw ValidationError("synthetic_normalizer must be positive");
  if (workers < 1) throw ValidationError("workers must be at least 1");
  if (target_per_batch < 1) throw ValidationError("target_per_batch must be at least 1");
  if (expiry_minutes < 1) throw ValidationError("expiry_minutes must be at least 1");
  if (!(rater.scale > 0.0)) throw ValidationError("rater scale must be positive");
  if (rater.similarity_noise < 0.0 || rater.identity_noise < 0.0) throw ValidationError("rater noise must be >= 0");
  if (models.empty()) throw ValidationError("at least one model must be scored");
  sampler.validate();
}

json run_config_to_json(const RunConfig& c) {
  return {{"seed", std::to_string(c.seed)},
          {"synthetic", c.synthetic},
          {"oracle", c.oracle},
          {"dim", c.dim},
          {"synthetic_normalizer", c.synthetic_normalizer},
          {"sampler",
           {{"steps", c.sampler.steps},
            {"fractions", c.sampler.fractions},
            {"thresholds", c.sampler.thresholds},
            {"directions_per_base", c.sampler.directions_per_base},
            {"direction_scale", c.sampler.direction_scale},
            {"bases_per_batch", c.sampler.bases_per_batch},
            {"missing_penalty", c.sampler.missing_penalty}}},
          {"cma",
           {{"sigma0", c.cma.sigma0},
            {"max_generations", c.cma.max_generations},
            {"truncation", c.cma.truncation},
            {"population_size", c.cma.population_size},
            {"parallel_evaluations", c.cma.parallel_evaluations}}},
          {"decision_model", c.decision_model},
          {"models", c.models},
          {"workers", c.workers},
          {"thresholds", c.thresholds},
          {"target_per_batch", c.target_per_batch},
          {"expiry_minutes", c.expiry_minutes},
          {"rater",
           {{"scale", c.rater.scale},
            {"similarity_noise", c.rater.similarity_noise},
            {"identity_noise", c.rater.identity_noise}}}};
}

RunConfig run_config_from_json(const json& j, RunConfig c) {
  try {
    if (j.contains("seed")) {
      const auto& s = j.at("seed");
      if (s.is_string()) {
        const auto text = s.get<std::string>();
        const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), c.seed);
        if (ec != std::errc() || end != text.data() + text.size() || text.empty())
          throw ValidationError("seed must be a non-negative 64-bit integer");
      } else {
        c.seed = s.get<std::uint64_t>();
      }
    }
    c.synthetic = j.value("synthetic", c.synthetic);
    c.oracle = j.value("oracle", c.oracle);
    c.dim = j.value("dim", c.dim);
    c.synthetic_normalizer = j.value("synthetic_normalizer", c.synthetic_normalizer);
    if (j.contains("sampler")) {
      const auto& s = j.at("sampler");
      c.sampler.steps = s.value("steps", c.sampler.steps);
      c.sampler.fractions = s.value("fractions", c.sampler.fractions);
      c.sampler.thresholds = s.value("thresholds", c.sampler.thresholds);
      c.sampler.directions_per_base = s.value("directions_per_base", c.sampler.directions_per_base);
      c.sampler.direction_scale = s.value("direction_scale", c.sampler.direction_scale);
      c.sampler.bases_per_batch = s.value("bases_per_batch", c.sampler.bases_per_batch);
      c.sampler.missing_penalty = s.value("missing_penalty", c.sampler.missing_penalty);
    }
    if (j.contains("cma")) {
      const auto& s = j.at("cma");
      c.cma.sigma0 = s.value("sigma0", c.cma.sigma0);
      c.cma.max_generations = s.value("max_generations", c.cma.max_generations);
      c.cma.truncation = s.value("truncation", c.cma.truncation);
      c.cma.population_size = s.value("population_size", c.cma.population_size);
      c.cma.parallel_evaluations = s.value("parallel_evaluations", c.cma.parallel_evaluations);
    }
    c.decision_model = j.value("decision_model", c.decision_model);
    c.models = j.value("models", c.models);
    c.workers = j.value("workers", c.workers);
    c.thresholds = j.value("thresholds", c.thresholds);
    c.target_per_batch = j.value("target_per_batch", c.target_per_batch);
    c.expiry_minutes = j.value("expiry_minutes", c.expiry_minutes);
    if (j.contains("rater")) {
      const auto& s = j.at("rater");
      c.rater.scale = s.value("scale", c.rater.scale);
      c.rater.similarity_noise = s.value("similarity_noise", c.rater.similarity_noise);
      c.rater.identity_noise = s.value("identity_noise", c.rater.identity_noise);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad run config: ") + e.what());
  }
  return c;
}

std::string generated_batch_id(int index) {
  char id[32];
  std::snprintf(id, sizeof id, "batch-%02d", index);
  return id;
}

GenerateReport cmd_generate(const RunConfig& config, int n_batches, std::ostream& log) {
  require_dataset_path(config);
  config.validate();
  if (n_batches < 1) throw ValidationError("--batches must be at least 1");
  FileLock lock(config.dataset / ".lock");
  auto dataset = Dataset::initialize(config.dataset, config.dim, config.sampler.direction_scale,
                                     run_config_to_json(config));
  write_json(config.dataset / "run_config.json", run_config_to_json(config));

  // Candidates evaluated during optimization are throwaway; only the chosen
  // samples are rendered into the dataset.
  const auto scratch = make_oracles(config, config.synthetic ? fs::path() : config.dataset);
  const auto final_oracles = config.synthetic ? make_oracles(config, config.dataset) : scratch;

  CmaConfig cma = config.cma;
  cma.dim = config.dim;
  GenerateReport report;
  for (int i = 0; i < n_batches; ++i) {
    const auto id = generated_batch_id(i);
    Batch batch = dataset.has_batch(id)
                      ? dataset.load_batch(id)
                      : plan_batch(id, draw_bases(id, config.seed, config.dim, config.sampler), config.seed,
                                   config.sampler);
    if (batch.optimized_complete() && batch.materialized()) {
      log << id << ": already complete\n";
      ++report.skipped;
    } else {
      if (!batch.optimized_complete()) {
        DecisionOracle decision(scratch.backend, config.decision_model);
        run_optimized(batch, *scratch.generator, decision, cma, config.sampler,
                      [&](const Batch& partial) { dataset.save_batch(partial); }, config.workers);
        dataset.save_batch(batch);
      }
      const auto m = materialize(batch, *final_oracles.generator);
      report.generate_failures += m.failures;
      dataset.save_batch(batch);
      log << id << ": " << batch.samples.size() << " samples, " << m.generate_calls << " images";
      if (m.failures) log << ", " << m.failures << " failed";
      log << "\n";
    }
    ++report.batches;
    report.samples += batch.samples.size();
    for (const auto& s : batch.samples) {
      if (const auto* o = std::get_if<OptimizedKind>(&s.kind)) {
        ++report.optimized_slots;
        if (o->reached) ++report.reached;
      }
    }
  }
  return report;
}

ScoreReport cmd_score(const RunConfig& config, std::ostream& log) {
  require_dataset_path(config);
  config.validate();
  FileLock lock(config.dataset / ".lock");
  Dataset dataset(config.dataset);
  const auto pairs = dataset.pair_index();
  ScoreTable scores(dataset.scores_path());
  ScoreReport report;

  std::vector<std::string> unscored;
  for (const auto& [id, p] : pairs)
    if (!p.base_image || !p.sample_image) unscored.push_back(id);
  if (!unscored.empty())
    throw ValidationError(std::to_string(unscored.size()) + " pairs have no images (first: " + unscored.front() +
                          "); run generate to finish materializing the batches");

  const auto before = scores.size();
  for (const auto& [id, p] : pairs)
    if (!scores.contains(id, std::string(kLatentMetric)))
      scores.set({id, std::string(kLatentMetric), p.latent_distance});

  std::optional<Oracles> oracles;
  for (const auto& model : config.models) {
    if (model == kLatentMetric) continue;
    bool needed = false;
    for (const auto& [id, p] : pairs) needed = needed || !scores.contains(id, model);
    if (!needed) continue;
    if (!oracles) oracles = make_oracles(config, config.dataset);
    DecisionOracle decision(oracles->backend, model);
    for (const auto& [id, p] : pairs) {
      if (scores.contains(id, model)) continue;
      const auto d = decision.distance(*p.base_image, *p.sample_image);
      if (!d) ++report.missing;
      scores.set({id, model, d});
    }
    report.backend_calls += decision.backend_calls();
    scores.save();
    log << model << ": " << decision.backend_calls() << " oracle calls\n";
  }
  scores.save();
  report.new_records = scores.size() - before;
  log << report.new_records << " new score rows\n";
  return report;
}

ImportReport cmd_import(const RunConfig& config, const std::optional<fs::path>& ratings,
                        const std::optional<fs::path>& scores) {
  require_dataset_path(config);
  if (!ratings && !scores) throw ValidationError("nothing to import: pass --ratings and/or --scores");
  FileLock lock(config.dataset / ".lock");
  Dataset dataset(config.dataset);
  const auto pairs = dataset.pair_index();
  ImportReport report;
  if (ratings) {
    RatingLog log(dataset.ratings_path(), pairs);
    report.ratings = log.import_csv(read_file(*ratings));
  }
  if (scores) {
    ScoreTable table(dataset.scores_path());
    report.scores = table.import_csv(read_file(*scores), pairs);
    table.save();
  }
  return report;
}

SimulatedAnswer simulated_answer(const RaterModel& model, std::uint64_t seed, const std::string& participant_id,
                                 int seat, int raters_per_pair, const std::string& pair_id, double latent_distance) {
  SeededRng rng(seed, "rater:" + participant_id + ":" + pair_id);
  const double s = std::clamp(1.0 - latent_distance / model.scale, 0.0, 1.0);
  const double sim_noise = rng.normal();
  const double id_noise = rng.normal();
  SimulatedAnswer a;
  a.similarity = static_cast<int>(std::clamp(std::lround(100.0 * s + model.similarity_noise * sim_noise), 0L, 100L));
  const double cut = (seat + 0.5) / raters_per_pair;
  a.same_person = s + model.identity_noise * id_noise > cut;
  return a;
}

namespace {

json post_json(httplib::Client& client, const std::string& path, const json& body, int& status) {
  auto res = client.Post(path, body.dump(), "application/json");
  if (!res) throw TransportError("study server unreachable: " + httplib::to_string(res.error()));
  status = res->status;
  try {
    return json::parse(res->body);
  } catch (const json::exception&) {
    throw ProtocolError("bad_response", "study server sent non-JSON reply to " + path);
  }
}

json get_json(httplib::Client& client, const std::string& path) {
  auto res = client.Get(path);
  if (!res) throw TransportError("study server unreachable: " + httplib::to_string(res.error()));
  if (res->status != 200) throw TransportError(path + " returned HTTP " + std::to_string(res->status));
  return json::parse(res->body);
}

// Runs one participant; false when the study turned them away.
bool run_participant(const std::string& url, const RunConfig& config, const PairIndex& pairs, std::size_t n_batches,
                     std::size_t& ratings) {
  httplib::Client client(url);
  client.set_read_timeout(60);
  int status = 0;
  const auto opened = post_json(client, "/api/session",
                                {{"demographics", {{"age_group", "simulated"}, {"gender", "simulated"}}}}, status);
  if (status == 409 && opened.value("study_complete", false)) return false;
  if (status != 200) throw TransportError("opening a session failed: " + opened.dump());
  const std::string session = opened.at("session_id");
  const std::string participant = opened.at("participant_id");
  const auto number = parse_integer(std::string_view(participant).substr(1));
  if (!number || *number < 1) throw ProtocolError("bad_response", "unexpected participant id " + participant);
  const int seat = static_cast<int>(((*number - 1) / static_cast<long long>(n_batches)) % config.target_per_batch);

  for (;;) {
    const auto next = get_json(client, "/api/session/" + session + "/next");
    if (next.value("complete", false)) break;
    const std::string pair_id = next.at("pair_id");
    const auto it = pairs.find(pair_id);
    if (it == pairs.end()) throw ProtocolError("bad_response", "server offered unknown pair " + pair_id);
    const auto answer = simulated_answer(config.rater, config.seed, participant, seat, config.target_per_batch,
                                         pair_id, it->second.latent_distance);
    const auto reply = post_json(client, "/api/session/" + session + "/rating",
                                 {{"pair_id", pair_id}, {"similarity", answer.similarity},
                                  {"same_person", answer.same_person}},
                                 status);
    if (status == 409) continue;  // desync: fetch the current pair again
    if (status != 200) throw TransportError("rating rejected: " + reply.dump());
    ++ratings;
  }
  post_json(client, "/api/session/" + session + "/strategy",
            {{"similarity_strategy", "simulated"}, {"identity_strategy", "simulated"}}, status);
  if (status != 200) throw TransportError("strategy answers rejected");
  return true;
}

}  // namespace

SimulateReport cmd_simulate(const RunConfig& config, const SimulateOptions& options, std::ostream& log) {
  require_dataset_path(config);
  config.validate();
  if (options.concurrency < 1) throw ValidationError("concurrency must be at least 1");
  std::optional<FileLock> lock;
  Dataset dataset(config.dataset);
  const auto pairs = dataset.pair_index();
  const auto n_batches = dataset.batch_ids().size();

  std::unique_ptr<StudyService> service;
  std::unique_ptr<StudyServer> server;
  std::string url = options.url;
  if (url.empty()) {
    lock.emplace(config.dataset / ".lock");
    StudyConfig study;
    study.target_per_batch = config.target_per_batch;
    study.expiry = std::chrono::minutes(config.expiry_minutes);
    study.seed = config.seed;
    service = std::make_unique<StudyService>(dataset, study);
    server = std::make_unique<StudyServer>(*service, config.dataset);
    url = "http://127.0.0.1:" + std::to_string(server->start("127.0.0.1", 0));
  }

  const int participants =
      options.participants > 0 ? options.participants : config.target_per_batch * static_cast<int>(n_batches);
  std::atomic<int> next{0};
  std::atomic<int> completed{0}, rejected{0};
  std::atomic<std::size_t> ratings{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  std::vector<std::thread> threads;
  for (int t = 0; t < std::min(options.concurrency, participants); ++t)
    threads.emplace_back([&] {
      try {
        while (next.fetch_add(1) < participants) {
          std::size_t n = 0;
          const bool ok = run_participant(url, config, pairs, n_batches, n);
          ratings += n;
          (ok ? completed : rejected)++;
        }
      } catch (...) {
        std::lock_guard guard(error_mutex);
        if (!error) error = std::current_exception();
        next = participants;
      }
    });
  for (auto& t : threads) t.join();
  if (server) server->stop();
  if (error) std::rethrow_exception(error);

  SimulateReport report{completed.load(), rejected.load(), ratings.load()};
  log << report.completed << " participants completed, " << report.ratings << " ratings";
  if (report.rejected) log << ", " << report.rejected << " turned away (study complete)";
  log << "\n";
  return report;
}

json cmd_analyze(const RunConfig& config, const AnalyzeOptions& options, std::ostream& log) {
  require_dataset_path(config);
  FileLock lock(config.dataset / ".lock");
  Dataset dataset(config.dataset);
  const auto pairs = dataset.pair_index();
  if (!fs::exists(dataset.scores_path()))
    throw NotFoundError("no score table at " + dataset.scores_path().string() +
                        "; run `latentprobe score` or `latentprobe import --scores <csv>` first");
  ScoreTable scores(dataset.scores_path());
  const auto ratings = canonical_ratings(RatingLog(dataset.ratings_path(), pairs).rows());
  if (ratings.empty())
    throw NotFoundError("no ratings in " + dataset.ratings_path().string() +
                        "; collect them with `latentprobe serve`, `latentprobe simulate` or import a ratings table");

  AnalysisConfig ac;
  ac.thresholds = config.thresholds;
  ac.per_rating = options.per_rating;
  ac.top_k = options.top_k;
  ac.disagreement_model = options.disagreement_model;

  const auto agg = aggregate(pairs, ratings, scores);
  json report;
  std::set<std::string> participants;
  for (const auto& r : ratings) participants.insert(r.participant_id);
  report["counts"] = {{"pairs", pairs.size()},
                      {"rated_pairs", agg.pairs.size()},
                      {"unrated_pairs", agg.unrated.size()},
                      {"ratings", ratings.size()},
                      {"participants", participants.size()},
                      {"batches", dataset.batch_ids().size()}};
  json thresholds = json::object();
  for (const auto& m : scores.models())
    if (const auto t = ac.threshold_for(m)) thresholds[m] = *t;
  report["thresholds"] = thresholds;
  report["correlation_mode"] = ac.per_rating ? "per_rating" : "per_pair";

  json summary = json::array();
  for (const auto& row : summarize(agg.pairs, ac)) summary.push_back(to_json(row));
  report["summary"] = summary;

  json correlations = json::array();
  for (const auto& cell : correlation_table(agg.pairs, ratings, ac)) correlations.push_back(to_json(cell));
  report["correlations"] = correlations;

  if (scores.models().contains(ac.disagreement_model)) {
    try {
      report["disagreement"] = to_json(disagreement(agg.pairs, ac.disagreement_model, ac.top_k));
    } catch (const ValidationError& e) {
      report["disagreement"] = {{"model", ac.disagreement_model}, {"error", e.what()}};
    }
  } else {
    report["disagreement"] = {{"model", ac.disagreement_model}, {"error", "model has no scores"}};
  }
  report["rater_disagreement"] = to_json(rater_disagreement(agg.pairs, ac.top_k));

  json attention = json::object();
  for (const auto& batch : dataset.batch_ids()) {
    json list = json::array();
    for (const auto& e : attention_report(pairs, ratings, batch))
      list.push_back({{"participant_id", e.participant_id},
                      {"genuine_rated", e.genuine_rated},
                      {"genuine_same", e.genuine_same},
                      {"mean_genuine_similarity",
                       e.mean_genuine_similarity ? json(*e.mean_genuine_similarity) : json(nullptr)},
                      {"flagged", e.flagged}});
    attention[batch] = list;
  }
  report["attention"] = attention;

  const auto histograms = similarity_histograms(pairs, ratings);
  report["histograms"] = histograms;

  const fs::path out = options.out.empty() ? config.dataset / "analysis" : options.out;
  fs::create_directories(out);
  write_json(out / "report.json", report);
  write_file_atomic(out / "pairs.csv", pairs_csv(agg.pairs));
  write_file_atomic(out / "histograms.csv", histograms_csv(histograms));
  write_file_atomic(out / "violin.csv", violin_csv(agg.pairs, pairs, ratings));
  write_file_atomic(out / "violin_summary.csv", violin_summary_csv(agg.pairs, pairs, ratings));
  log << "analyzed " << ratings.size() << " ratings of " << agg.pairs.size() << " pairs into " << out.string()
      << "\n";
  return report;
}

void cmd_export(const RunConfig& config, const fs::path& out, std::ostream& log) {
  require_dataset_path(config);
  if (out.empty()) throw ValidationError("export needs an output directory (--out <dir>)");
  FileLock lock(config.dataset / ".lock");
  Dataset dataset(config.dataset);
  const auto pairs = dataset.pair_index();
  fs::create_directories(out);
  write_file_atomic(out / "ratings.csv", RatingLog(dataset.ratings_path(), pairs).canonical_csv());
  write_file_atomic(out / "scores.csv", ScoreTable(dataset.scores_path()).canonical_csv());
  write_file_atomic(out / "pairs.csv", pair_index_csv(pairs));
  write_json(out / "manifest.json", manifest_to_json(dataset.manifest()));

  json answers = json::array();
  if (fs::exists(dataset.sessions_path())) {
    const auto doc = json::parse(read_file(dataset.sessions_path()));
    for (const auto& s : doc.at("sessions")) {
      if (s.at("state") != "complete") continue;
      answers.push_back({{"participant_id", s.at("participant_id")},
                         {"batch_id", s.at("batch_id")},
                         {"demographics", s.value("demographics", json::object())},
                         {"strategy", s.value("strategy", json::object())}});
    }
  }
  write_json(out / "participants.json", answers);
  log << "exported " << pairs.size() << " pairs to " << out.string() << "\n";
}

void cmd_serve(const RunConfig& config, const std::string& host, int port,
               const std::optional<fs::path>& static_dir, std::ostream& log) {
  require_dataset_path(config);
  config.validate();
  FileLock lock(config.dataset / ".lock");
  Dataset dataset(config.dataset);
  const auto manifest = dataset.manifest();
  for (const auto& b : manifest.batches)
    if (!b.materialized) log << "warning: batch " << b.batch_id << " has pairs without images\n";

  // Block the signals before any server thread starts so only sigwait sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  StudyConfig study;
  study.target_per_batch = config.target_per_batch;
  study.expiry = std::chrono::minutes(config.expiry_minutes);
  study.seed = config.seed;
  StudyService service(dataset, study);
  StudyServer server(service, config.dataset, static_dir);
  const int bound = server.start(host, port);
  log << "serving " << dataset.batch_ids().size() << " batches on http://" << host << ":" << bound << std::endl;
  int received = 0;
  sigwait(&signals, &received);
  log << "shutting down\n";
  server.stop();
}

void cmd_oracle(const RunConfig& config, std::optional<int> http_port, const std::string& host) {
  if (!config.synthetic) throw ValidationError("only the synthetic world can be served (--synthetic)");
  require_dataset_path(config);
  fs::create_directories(config.dataset);
  SyntheticWorld world(config.dim, config.synthetic_normalizer, std::make_shared<DirectoryImageStore>(config.dataset));
  if (http_port) {
    run_oracle_http_server(&world, &world, host, *http_port);
  } else {
    protocol::serve_stream(std::cin, std::cout, &world, &world);
  }
}

}  // namespace latentprobe
