#include "latentprobe/dataset.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cstring>
#include <sstream>

#include "latentprobe/fsio.hpp"
#include "latentprobe/hash.hpp"
#include "latentprobe/text.hpp"

namespace latentprobe {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

static_assert(std::endian::native == std::endian::little, "latent files are written in host byte order");

json kind_to_json(const SampleKind& kind) {
  return std::visit(
      overloaded{
          [](const GenuineKind&) { return json{{"type", "genuine"}}; },
          [](const PositiveKind& k) {
            return json{{"type", "positive"}, {"direction_index", k.direction_index}, {"distance", k.distance}};
          },
          [](const NegativeKind& k) { return json{{"type", "negative"}, {"source_base_id", k.source_base_id}}; },
          [](const InterpolationKind& k) {
            return json{{"type", "interpolation"}, {"negative_base_id", k.negative_base_id}, {"fraction", k.fraction}};
          },
          [](const OptimizedKind& k) {
            return json{{"type", "optimized"}, {"start_negative_id", k.start_negative_id},
                        {"threshold", k.threshold}, {"filled", k.filled},
                        {"reached", k.reached},     {"achieved", k.achieved},
                        {"generation", k.generation}};
          },
      },
      kind);
}

SampleKind kind_from_json(const json& j) {
  const auto type = sample_type_from_string(j.at("type").get<std::string>());
  switch (type) {
    case SampleType::genuine: return GenuineKind{};
    case SampleType::positive: return PositiveKind{j.at("direction_index").get<int>(), j.at("distance").get<double>()};
    case SampleType::negative: return NegativeKind{j.at("source_base_id").get<std::string>()};
    case SampleType::interpolation:
      return InterpolationKind{j.at("negative_base_id").get<std::string>(), j.at("fraction").get<double>()};
    case SampleType::optimized:
      return OptimizedKind{j.at("start_negative_id").get<std::string>(), j.at("threshold").get<double>(),
                           j.at("filled").get<bool>(),  j.at("reached").get<bool>(),
                           j.at("achieved").get<double>(), j.at("generation").get<std::size_t>()};
  }
  throw ValidationError("unreachable sample type");
}

json optional_ref(const std::optional<ImageRef>& ref) { return ref ? json(ref->path) : json(nullptr); }

std::optional<ImageRef> optional_ref_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return ImageRef{j.get<std::string>()};
}

std::string line_error(std::size_t line, const std::string& msg) { return "line " + std::to_string(line) + ": " + msg; }

/// Splits into LF-terminated lines; a final line without LF is returned too.
std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

std::string strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return std::string(s);
}

}  // namespace

json manifest_to_json(const Manifest& manifest) {
  json batches = json::array();
  for (const auto& b : manifest.batches) {
    batches.push_back({{"batch_id", b.batch_id},
                       {"sample_count", b.sample_count},
                       {"optimized_complete", b.optimized_complete},
                       {"materialized", b.materialized},
                       {"checksums", b.checksums}});
  }
  return {{"format_version", manifest.format_version},
          {"dim", manifest.dim},
          {"direction_scale", manifest.direction_scale},
          {"creation", manifest.creation},
          {"batches", batches}};
}

Manifest manifest_from_json(const json& j) {
  Manifest m;
  m.format_version = j.at("format_version").get<int>();
  m.dim = j.at("dim").get<Eigen::Index>();
  m.direction_scale = j.at("direction_scale").get<double>();
  m.creation = j.value("creation", json::object());
  for (const auto& b : j.at("batches")) {
    m.batches.push_back({b.at("batch_id").get<std::string>(), b.at("sample_count").get<std::size_t>(),
                         b.at("optimized_complete").get<bool>(), b.at("materialized").get<bool>(),
                         b.at("checksums").get<std::map<std::string, std::string>>()});
  }
  return m;
}

json batch_to_json(const Batch& batch) {
  json bases = json::array();
  for (const auto& b : batch.bases) bases.push_back({{"base_id", b.base_id}, {"image", optional_ref(b.image)}});
  json samples = json::array();
  for (const auto& s : batch.samples) {
    samples.push_back({{"sample_id", s.sample_id},
                       {"base_id", s.base_id},
                       {"kind", kind_to_json(s.kind)},
                       {"image", optional_ref(s.image)},
                       {"latent_distance_to_base", s.latent_distance_to_base},
                       {"error", s.error}});
  }
  return {{"batch_id", batch.batch_id},
          {"master_seed", std::to_string(batch.master_seed)},
          {"bases", bases},
          {"samples", samples}};
}

Batch batch_from_json(const json& j) {
  Batch batch;
  batch.batch_id = j.at("batch_id").get<std::string>();
  batch.master_seed = std::stoull(j.at("master_seed").get<std::string>());
  for (const auto& b : j.at("bases")) {
    batch.bases.push_back({b.at("base_id").get<std::string>(), LatentVector{}, optional_ref_from(b.at("image"))});
  }
  for (const auto& s : j.at("samples")) {
    SampleRecord r;
    r.sample_id = s.at("sample_id").get<std::string>();
    r.batch_id = batch.batch_id;
    r.base_id = s.at("base_id").get<std::string>();
    r.kind = kind_from_json(s.at("kind"));
    r.image = optional_ref_from(s.at("image"));
    r.latent_distance_to_base = s.at("latent_distance_to_base").get<double>();
    r.error = s.value("error", "");
    batch.samples.push_back(std::move(r));
  }
  return batch;
}

PairIndex pair_index_of(const Batch& batch) {
  PairIndex index;
  for (std::size_t i = 0; i < batch.samples.size(); ++i) {
    const auto& s = batch.samples[i];
    PairInfo p;
    p.pair_id = pair_id_of(s);
    p.batch_id = batch.batch_id;
    p.base_id = s.base_id;
    p.sample_id = s.sample_id;
    p.type = type_of(s.kind);
    p.sublevel = sublevel_of(s.kind);
    p.latent_distance = s.latent_distance_to_base;
    p.base_image = batch.base(s.base_id).image;
    p.sample_image = s.image;
    p.index = i;
    index.emplace(p.pair_id, std::move(p));
  }
  return index;
}

Dataset::Dataset(fs::path root) : root_(std::move(root)) {
  const auto path = root_ / "manifest.json";
  if (!fs::exists(path)) throw NotFoundError("no dataset at " + root_.string() + " (manifest.json missing)");
  try {
    manifest_ = manifest_from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw ValidationError("corrupt manifest " + path.string() + ": " + e.what());
  }
}

Dataset Dataset::initialize(const fs::path& root, Eigen::Index dim, double direction_scale, json creation) {
  if (!fs::exists(root / "manifest.json")) {
    Manifest m;
    m.dim = dim;
    m.direction_scale = direction_scale;
    m.creation = std::move(creation);
    fs::create_directories(root);
    write_file_atomic(root / "manifest.json", manifest_to_json(m).dump(2) + "\n");
  }
  const auto existing = manifest_from_json(json::parse(read_file(root / "manifest.json"))).dim;
  if (existing != dim) {
    throw ValidationError("dataset at " + root.string() + " has dim " + std::to_string(existing) + ", requested " +
                          std::to_string(dim));
  }
  return Dataset(root);
}

Manifest Dataset::manifest() const {
  std::lock_guard lock(mutex_);
  return manifest_;
}

std::vector<std::string> Dataset::batch_ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> ids;
  for (const auto& b : manifest_.batches) ids.push_back(b.batch_id);
  return ids;
}

bool Dataset::has_batch(const std::string& batch_id) const {
  std::lock_guard lock(mutex_);
  return std::any_of(manifest_.batches.begin(), manifest_.batches.end(),
                     [&](const auto& b) { return b.batch_id == batch_id; });
}

void Dataset::write_manifest() const {
  write_file_atomic(root_ / "manifest.json", manifest_to_json(manifest_).dump(2) + "\n");
}

void Dataset::save_batch(const Batch& batch) {
  if (!is_plain_identifier(batch.batch_id) || batch.batch_id.find('/') != std::string::npos) {
    throw ValidationError("invalid batch id '" + batch.batch_id + "'");
  }
  std::vector<std::string> ids;
  std::vector<const LatentVector*> rows;
  for (const auto& b : batch.bases) {
    validate_latent(b.latent, manifest_.dim);
    ids.push_back(b.base_id);
    rows.push_back(&b.latent);
  }
  for (const auto& s : batch.samples) {
    if (s.latent.size() == 0) continue;
    validate_latent(s.latent, manifest_.dim);
    ids.push_back(s.sample_id);
    rows.push_back(&s.latent);
  }
  const auto dim = static_cast<std::size_t>(manifest_.dim);
  std::string f32(rows.size() * dim * sizeof(float), '\0');
  std::string f64(rows.size() * dim * sizeof(double), '\0');
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < dim; ++c) {
      const float x = static_cast<float>((*rows[r])[static_cast<Eigen::Index>(c)]);
      std::memcpy(f32.data() + (r * dim + c) * sizeof(float), &x, sizeof(float));
    }
    std::memcpy(f64.data() + r * dim * sizeof(double), rows[r]->data(), dim * sizeof(double));
  }
  const json sidecar{{"dim", manifest_.dim},
                     {"count", rows.size()},
                     {"dtype", "float32"},
                     {"byte_order", "little"},
                     {"exact", "latents.f64"},
                     {"ids", ids}};
  const std::map<std::string, std::string> files{{"batch.json", batch_to_json(batch).dump(2) + "\n"},
                                                 {"latents.bin", std::move(f32)},
                                                 {"latents.f64", std::move(f64)},
                                                 {"latents.json", sidecar.dump(2) + "\n"}};
  const auto dir = root_ / "batches" / batch.batch_id;
  BatchEntry entry{batch.batch_id, batch.samples.size(), batch.optimized_complete(), batch.materialized(), {}};
  for (const auto& [name, bytes] : files) {
    write_file_atomic(dir / name, bytes);
    entry.checksums[name] = sha256_hex(bytes);
  }
  std::lock_guard lock(mutex_);
  auto it = std::find_if(manifest_.batches.begin(), manifest_.batches.end(),
                         [&](const auto& b) { return b.batch_id == batch.batch_id; });
  if (it == manifest_.batches.end()) {
    manifest_.batches.push_back(std::move(entry));
  } else {
    *it = std::move(entry);
  }
  write_manifest();
}

Batch Dataset::load_batch(const std::string& batch_id) const {
  BatchEntry entry;
  {
    std::lock_guard lock(mutex_);
    auto it = std::find_if(manifest_.batches.begin(), manifest_.batches.end(),
                           [&](const auto& b) { return b.batch_id == batch_id; });
    if (it == manifest_.batches.end()) throw NotFoundError("unknown batch '" + batch_id + "'");
    entry = *it;
  }
  const auto dir = root_ / "batches" / batch_id;
  std::map<std::string, std::string> files;
  for (const auto& [name, checksum] : entry.checksums) {
    const auto path = dir / name;
    std::string bytes;
    try {
      bytes = read_file(path);
    } catch (const NotFoundError&) {
      throw ChecksumError("missing batch file " + path.string());
    }
    if (sha256_hex(bytes) != checksum) throw ChecksumError("checksum mismatch in " + path.string());
    files[name] = std::move(bytes);
  }
  for (const char* required : {"batch.json", "latents.f64", "latents.json"}) {
    if (!files.contains(required)) throw ChecksumError("manifest lacks checksum for " + (dir / required).string());
  }

  Batch batch;
  std::vector<std::string> ids;
  try {
    batch = batch_from_json(json::parse(files["batch.json"]));
    ids = json::parse(files["latents.json"]).at("ids").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ValidationError("corrupt batch metadata in " + dir.string() + ": " + e.what());
  }
  const auto dim = static_cast<std::size_t>(manifest_.dim);
  const auto& f64 = files["latents.f64"];
  if (f64.size() != ids.size() * dim * sizeof(double)) {
    throw ChecksumError("latent row count mismatch in " + (dir / "latents.f64").string());
  }
  std::map<std::string, LatentVector> latents;
  for (std::size_t r = 0; r < ids.size(); ++r) {
    LatentVector v(manifest_.dim);
    std::memcpy(v.data(), f64.data() + r * dim * sizeof(double), dim * sizeof(double));
    latents.emplace(ids[r], std::move(v));
  }
  for (auto& b : batch.bases) {
    const auto it = latents.find(b.base_id);
    if (it == latents.end()) throw ValidationError("batch " + batch_id + " lacks the latent of base " + b.base_id);
    b.latent = it->second;
  }
  for (auto& s : batch.samples) {
    if (const auto it = latents.find(s.sample_id); it != latents.end()) s.latent = it->second;
  }
  return batch;
}

PairIndex Dataset::pair_index() const {
  PairIndex index;
  for (const auto& id : batch_ids()) index.merge(pair_index_of(load_batch(id)));
  return index;
}

std::string rating_to_csv_line(const Rating& r) {
  std::ostringstream out;
  out << r.participant_id << ',' << r.pair_id << ',' << r.base_id << ',' << r.sample_id << ',' << r.similarity << ','
      << (r.same_person ? 1 : 0) << ',' << r.order_index << ',' << r.timestamp;
  return out.str();
}

void validate_rating(const Rating& r, const PairIndex& pairs) {
  if (!is_plain_identifier(r.participant_id)) throw ValidationError("invalid participant id");
  if (r.similarity < 0 || r.similarity > 100) {
    throw ValidationError("similarity " + std::to_string(r.similarity) + " outside [0, 100]");
  }
  if (r.order_index < 0) throw ValidationError("order_index must be non-negative");
  if (r.timestamp.find_first_of(",\n\r\"") != std::string::npos) throw ValidationError("invalid timestamp");
  const auto it = pairs.find(r.pair_id);
  if (it == pairs.end()) throw ValidationError("unknown pair '" + r.pair_id + "'");
  if (it->second.base_id != r.base_id || it->second.sample_id != r.sample_id) {
    throw ValidationError("pair '" + r.pair_id + "' does not match base/sample ids");
  }
}

std::vector<Rating> parse_ratings_csv(std::string_view text, const PairIndex& pairs) {
  const auto lines = split_lines(text);
  if (lines.empty() || strip_cr(lines[0]) != kRatingsHeader) {
    throw ValidationError(line_error(1, "expected header '" + std::string(kRatingsHeader) + "'"));
  }
  std::vector<Rating> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (strip_cr(lines[i]).empty()) continue;
    const auto f = split_csv_line(lines[i]);
    if (f.size() != 8) throw ValidationError(line_error(i + 1, "expected 8 fields"));
    const auto sim = parse_integer(f[4]);
    const auto order = parse_integer(f[6]);
    if (!sim) throw ValidationError(line_error(i + 1, "similarity is not an integer"));
    if (!order) throw ValidationError(line_error(i + 1, "order_index is not an integer"));
    if (f[5] != "0" && f[5] != "1") throw ValidationError(line_error(i + 1, "same_person must be 0 or 1"));
    if (*sim < 0 || *sim > 100) throw ValidationError(line_error(i + 1, "similarity outside [0, 100]"));
    Rating r{f[0], f[1], f[2], f[3], static_cast<int>(*sim), f[5] == "1", static_cast<int>(*order), f[7]};
    try {
      validate_rating(r, pairs);
    } catch (const ValidationError& e) {
      throw ValidationError(line_error(i + 1, e.what()));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

RatingLog::RatingLog(fs::path path, const PairIndex& pairs) : path_(std::move(path)), pairs_(pairs) {
  if (!fs::exists(path_)) {
    write_file_atomic(path_, std::string(kRatingsHeader) + "\n");
    return;
  }
  auto text = read_file(path_);
  if (!text.empty() && text.back() != '\n') {
    // torn append from an interrupted run
    const auto keep = text.rfind('\n');
    text.resize(keep == std::string::npos ? 0 : keep + 1);
    write_file_atomic(path_, text.empty() ? std::string(kRatingsHeader) + "\n" : text);
  }
  rows_ = parse_ratings_csv(text.empty() ? std::string(kRatingsHeader) + "\n" : text, pairs_);
  for (const auto& r : rows_) {
    if (!keys_.emplace(r.participant_id, r.pair_id).second) {
      throw ValidationError(path_.string() + ": duplicate rating of " + r.pair_id + " by " + r.participant_id);
    }
  }
}

void RatingLog::append(const Rating& rating) {
  validate_rating(rating, pairs_);
  std::lock_guard lock(mutex_);
  if (keys_.contains({rating.participant_id, rating.pair_id})) {
    throw ConflictError("participant " + rating.participant_id + " already rated " + rating.pair_id);
  }
  const auto line = rating_to_csv_line(rating) + "\n";
  const int fd = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CLOEXEC);
  if (fd < 0) throw Error("cannot open " + path_.string() + ": " + std::strerror(errno));
  const auto n = ::write(fd, line.data(), line.size());
  ::fsync(fd);
  ::close(fd);
  if (n != static_cast<ssize_t>(line.size())) throw Error("short write to " + path_.string());
  rows_.push_back(rating);
  keys_.emplace(rating.participant_id, rating.pair_id);
}

std::vector<Rating> RatingLog::rows() const {
  std::lock_guard lock(mutex_);
  return rows_;
}

std::size_t RatingLog::size() const {
  std::lock_guard lock(mutex_);
  return rows_.size();
}

std::size_t RatingLog::count_for_participant(const std::string& participant_id) const {
  std::lock_guard lock(mutex_);
  return static_cast<std::size_t>(
      std::count_if(rows_.begin(), rows_.end(), [&](const Rating& r) { return r.participant_id == participant_id; }));
}

void RatingLog::rewrite_locked() {
  std::string text(kRatingsHeader);
  text += '\n';
  for (const auto& r : rows_) text += rating_to_csv_line(r) + "\n";
  write_file_atomic(path_, text);
}

std::vector<Rating> RatingLog::remove_participant(const std::string& participant_id) {
  std::lock_guard lock(mutex_);
  std::vector<Rating> removed;
  std::vector<Rating> kept;
  for (auto& r : rows_) (r.participant_id == participant_id ? removed : kept).push_back(std::move(r));
  rows_ = std::move(kept);
  for (const auto& r : removed) keys_.erase({r.participant_id, r.pair_id});
  if (!removed.empty()) rewrite_locked();
  return removed;
}

std::size_t RatingLog::import_csv(std::string_view text) {
  auto incoming = parse_ratings_csv(text, pairs_);
  std::lock_guard lock(mutex_);
  std::map<std::pair<std::string, std::string>, const Rating*> existing;
  for (const auto& r : rows_) existing[{r.participant_id, r.pair_id}] = &r;
  std::vector<Rating> added;
  std::set<std::pair<std::string, std::string>> seen;
  for (auto& r : incoming) {
    const std::pair key{r.participant_id, r.pair_id};
    if (!seen.insert(key).second) throw ConflictError("import: duplicate rating of " + r.pair_id + " by " + r.participant_id);
    if (const auto it = existing.find(key); it != existing.end()) {
      if (!(*it->second == r)) throw ConflictError("import: conflicting rating of " + r.pair_id + " by " + r.participant_id);
      continue;
    }
    added.push_back(std::move(r));
  }
  for (auto& r : added) {
    keys_.emplace(r.participant_id, r.pair_id);
    rows_.push_back(std::move(r));
  }
  if (!added.empty()) rewrite_locked();
  return added.size();
}

std::string RatingLog::canonical_csv() const {
  auto rows = this->rows();
  std::sort(rows.begin(), rows.end(), [](const Rating& a, const Rating& b) {
    return std::tie(a.participant_id, a.order_index, a.pair_id) < std::tie(b.participant_id, b.order_index, b.pair_id);
  });
  std::string text(kRatingsHeader);
  text += '\n';
  for (const auto& r : rows) text += rating_to_csv_line(r) + "\n";
  return text;
}

std::vector<ScoreRecord> parse_scores_csv(std::string_view text, const PairIndex& pairs) {
  const auto lines = split_lines(text);
  if (lines.empty() || strip_cr(lines[0]) != kScoresHeader) {
    throw ValidationError(line_error(1, "expected header '" + std::string(kScoresHeader) + "'"));
  }
  std::vector<ScoreRecord> out;
  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (strip_cr(lines[i]).empty()) continue;
    const auto f = split_csv_line(lines[i]);
    if (f.size() != 3) throw ValidationError(line_error(i + 1, "expected 3 fields"));
    if (!pairs.contains(f[0])) throw ValidationError(line_error(i + 1, "unknown pair '" + f[0] + "'"));
    if (!is_plain_identifier(f[1])) throw ValidationError(line_error(i + 1, "invalid model name"));
    ScoreRecord r{f[0], f[1], std::nullopt};
    if (f[2] != "NA") {
      const auto d = parse_number(f[2]);
      if (!d || !std::isfinite(*d)) throw ValidationError(line_error(i + 1, "distance is not a number"));
      if (*d < 0.0) throw ValidationError(line_error(i + 1, "negative distance"));
      r.distance = *d;
    }
    if (!seen.emplace(r.pair_id, r.model_name).second) {
      throw ValidationError(line_error(i + 1, "duplicate score for " + r.pair_id + " / " + r.model_name));
    }
    out.push_back(std::move(r));
  }
  return out;
}

ScoreTable::ScoreTable(fs::path path) : path_(std::move(path)) {
  if (!fs::exists(path_)) return;
  const auto text = read_file(path_);
  // Stored tables were validated on import; only the format is re-checked here.
  const auto lines = split_lines(text);
  if (lines.empty() || strip_cr(lines[0]) != kScoresHeader) {
    throw ValidationError(path_.string() + ": " + line_error(1, "bad header"));
  }
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (strip_cr(lines[i]).empty()) continue;
    const auto f = split_csv_line(lines[i]);
    if (f.size() != 3) throw ValidationError(path_.string() + ": " + line_error(i + 1, "expected 3 fields"));
    std::optional<double> d;
    if (f[2] != "NA") {
      d = parse_number(f[2]);
      if (!d) throw ValidationError(path_.string() + ": " + line_error(i + 1, "distance is not a number"));
    }
    records_[{f[0], f[1]}] = d;
  }
}

std::size_t ScoreTable::import_csv(std::string_view text, const PairIndex& pairs) {
  const auto rows = parse_scores_csv(text, pairs);
  std::size_t changed = 0;
  for (const auto& r : rows) {
    const auto [it, inserted] = records_.try_emplace({r.pair_id, r.model_name}, r.distance);
    if (inserted) {
      ++changed;
    } else if (it->second != r.distance) {
      it->second = r.distance;
      ++changed;
    }
  }
  return changed;
}

void ScoreTable::set(const ScoreRecord& record) {
  if (record.distance && !(*record.distance >= 0.0 && std::isfinite(*record.distance))) {
    throw ValidationError("distance must be finite and non-negative");
  }
  records_[{record.pair_id, record.model_name}] = record.distance;
}

bool ScoreTable::contains(const std::string& pair_id, const std::string& model) const {
  return records_.contains({pair_id, model});
}

std::optional<std::optional<double>> ScoreTable::find(const std::string& pair_id, const std::string& model) const {
  const auto it = records_.find({pair_id, model});
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

std::set<std::string> ScoreTable::models() const {
  std::set<std::string> out;
  for (const auto& [key, value] : records_) out.insert(key.second);
  return out;
}

std::vector<ScoreRecord> ScoreTable::records() const {
  std::vector<ScoreRecord> out;
  for (const auto& [key, value] : records_) out.push_back({key.first, key.second, value});
  return out;
}

std::string ScoreTable::canonical_csv() const {
  std::string text(kScoresHeader);
  text += '\n';
  for (const auto& [key, value] : records_) {
    text += key.first + "," + key.second + "," + (value ? format_number(*value) : std::string("NA")) + "\n";
  }
  return text;
}

void ScoreTable::save() const {
  if (path_.empty()) throw ValidationError("score table has no backing file");
  save_to(path_);
}

void ScoreTable::save_to(const fs::path& path) const { write_file_atomic(path, canonical_csv()); }

}  // namespace latentprobe
