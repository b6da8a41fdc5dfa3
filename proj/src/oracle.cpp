#include "latentprobe/oracle.hpp"

#include <bit>
#include <cstring>

#include "latentprobe/fsio.hpp"
#include "latentprobe/hash.hpp"

namespace latentprobe {

bool is_safe_image_ref(std::string_view ref) {
  if (ref.empty() || ref.front() == '/' || ref.find("..") != std::string_view::npos) return false;
  for (char c : ref) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '.' || c == '_' || c == '/' || c == '-';
    if (!ok) return false;
  }
  return true;
}

namespace {

void require_safe(const ImageRef& ref) {
  if (!is_safe_image_ref(ref.path)) throw ValidationError("unsafe image reference '" + ref.path + "'");
}

}  // namespace

void DirectoryImageStore::put(const ImageRef& ref, std::string_view bytes) {
  require_safe(ref);
  write_file_atomic(root_ / ref.path, bytes);
}

std::string DirectoryImageStore::get(const ImageRef& ref) const {
  require_safe(ref);
  return read_file(root_ / ref.path);
}

bool DirectoryImageStore::contains(const ImageRef& ref) const {
  return is_safe_image_ref(ref.path) && std::filesystem::exists(root_ / ref.path);
}

void MemoryImageStore::put(const ImageRef& ref, std::string_view bytes) {
  std::lock_guard lock(mutex_);
  const auto it = images_.find(ref.path);
  if (it != images_.end()) {
    it->second.bytes.assign(bytes);
    recency_.splice(recency_.begin(), recency_, it->second.recency);
    return;
  }
  recency_.push_front(ref.path);
  images_.emplace(ref.path, Entry{std::string(bytes), recency_.begin()});
  if (capacity_ > 0 && images_.size() > capacity_) {
    images_.erase(recency_.back());
    recency_.pop_back();
  }
}

std::string MemoryImageStore::get(const ImageRef& ref) const {
  std::lock_guard lock(mutex_);
  const auto it = images_.find(ref.path);
  if (it == images_.end()) throw NotFoundError("image not in memory store: " + ref.path);
  recency_.splice(recency_.begin(), recency_, it->second.recency);
  return it->second.bytes;
}

bool MemoryImageStore::contains(const ImageRef& ref) const {
  std::lock_guard lock(mutex_);
  return images_.contains(ref.path);
}

std::size_t MemoryImageStore::size() const {
  std::lock_guard lock(mutex_);
  return images_.size();
}

std::optional<double> default_threshold(std::string_view model_name) {
  if (model_name == "dlib") return 0.6;
  if (model_name == "vggface") return 0.86;
  if (model_name == "facenet512") return 1.04;
  if (model_name == "openface") return 0.55;
  return std::nullopt;
}

bool accept(double threshold, double d) {
  if (!(d >= 0.0)) throw ValidationError("accept: distance must be non-negative");
  return d < threshold;
}

DecisionOracle::DecisionOracle(std::shared_ptr<DecisionBackend> backend, std::string model_name,
                               std::optional<double> threshold)
    : backend_(std::move(backend)),
      model_name_(std::move(model_name)),
      threshold_(threshold ? threshold : default_threshold(model_name_)) {
  if (!backend_) throw ValidationError("DecisionOracle needs a backend");
}

std::optional<double> DecisionOracle::distance(const ImageRef& a, const ImageRef& b) {
  auto key = a.path <= b.path ? std::pair(a.path, b.path) : std::pair(b.path, a.path);
  {
    std::lock_guard lock(mutex_);
    if (const auto it = cache_.find(key); it != cache_.end()) return it->second;
    ++backend_calls_;
  }
  std::optional<double> value;
  try {
    const double d = backend_->distance(model_name_, a, b);
    if (std::isfinite(d) && d >= 0.0) value = d;
  } catch (const ProtocolError&) {
    // scored as missing
  }
  std::lock_guard lock(mutex_);
  cache_.insert_or_assign(std::move(key), value);
  return value;
}

bool DecisionOracle::accept(double d) const {
  if (!threshold_) throw ValidationError("model '" + model_name_ + "' has no acceptance threshold");
  return latentprobe::accept(*threshold_, d);
}

std::size_t DecisionOracle::backend_calls() const {
  std::lock_guard lock(mutex_);
  return backend_calls_;
}

std::size_t DecisionOracle::cache_size() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

SyntheticWorld::SyntheticWorld(Eigen::Index dim, double distance_normalizer,
                               std::shared_ptr<ImageStore> store)
    : dim_(dim), normalizer_(distance_normalizer), store_(std::move(store)) {
  if (dim_ < 1) throw ValidationError("SyntheticWorld: dim must be positive");
  if (!(normalizer_ > 0.0)) throw ValidationError("SyntheticWorld: distance_normalizer must be positive");
  if (!store_) throw ValidationError("SyntheticWorld needs an image store");
}

std::string SyntheticWorld::identity() const { return "synthetic/d" + std::to_string(dim_); }

std::string SyntheticWorld::encode_image(const LatentVector& latent) {
  static_assert(std::endian::native == std::endian::little, "encoding assumes a little-endian host");
  std::string bytes(static_cast<std::size_t>(latent.size()) * sizeof(double), '\0');
  std::memcpy(bytes.data(), latent.data(), bytes.size());
  return bytes;
}

LatentVector SyntheticWorld::decode_image(std::string_view bytes) {
  if (bytes.size() % sizeof(double) != 0) throw ValidationError("synthetic image has a ragged length");
  LatentVector v(static_cast<Eigen::Index>(bytes.size() / sizeof(double)));
  std::memcpy(v.data(), bytes.data(), bytes.size());
  return v;
}

ImageRef SyntheticWorld::generate(const LatentVector& latent) {
  validate_latent(latent, dim_);
  const auto bytes = encode_image(latent);
  ImageRef ref{"images/" + sha256_hex(identity() + "\n" + bytes).substr(0, 40) + ".f64"};
  if (!store_->contains(ref)) store_->put(ref, bytes);
  return ref;
}

LatentVector SyntheticWorld::decode(const ImageRef& ref) const {
  std::string bytes;
  try {
    bytes = store_->get(ref);
  } catch (const NotFoundError& e) {
    throw ProtocolError("not_found", e.what());
  }
  auto v = decode_image(bytes);
  if (v.size() != dim_) throw ProtocolError("bad_image", "image " + ref.path + " has wrong dimension");
  return v;
}

double SyntheticWorld::distance(std::string_view /*model*/, const ImageRef& a, const ImageRef& b) {
  if (a == b) return 0.0;
  return euclidean_distance(decode(a), decode(b)) / normalizer_;
}

}  // namespace latentprobe
