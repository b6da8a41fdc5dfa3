#pragma once

#include <compare>
#include <filesystem>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>

#include "latentprobe/latent.hpp"

namespace latentprobe {

/// Relative path of an image under the dataset root, e.g. "images/3fa1....f64".
struct ImageRef {
  std::string path;

  auto operator<=>(const ImageRef&) const = default;
};

/// Relative, no "..", characters limited to [A-Za-z0-9._/-].
bool is_safe_image_ref(std::string_view ref);

/// Content-addressed byte storage for generated images.
class ImageStore {
 public:
  virtual ~ImageStore() = default;
  virtual void put(const ImageRef& ref, std::string_view bytes) = 0;
  virtual std::string get(const ImageRef& ref) const = 0;
  virtual bool contains(const ImageRef& ref) const = 0;
};

/// Files under a dataset root; writes are atomic.
class DirectoryImageStore final : public ImageStore {
 public:
  explicit DirectoryImageStore(std::filesystem::path root) : root_(std::move(root)) {}
  void put(const ImageRef& ref, std::string_view bytes) override;
  std::string get(const ImageRef& ref) const override;
  bool contains(const ImageRef& ref) const override;
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
};

/// In-process store, used for scratch images during optimization. With a
/// capacity, the least recently used image is dropped once it is exceeded.
class MemoryImageStore final : public ImageStore {
 public:
  explicit MemoryImageStore(std::size_t capacity = 0) : capacity_(capacity) {}
  void put(const ImageRef& ref, std::string_view bytes) override;
  std::string get(const ImageRef& ref) const override;
  bool contains(const ImageRef& ref) const override;
  std::size_t size() const;

 private:
  struct Entry {
    std::string bytes;
    std::list<std::string>::iterator recency;
  };

  std::size_t capacity_;
  mutable std::mutex mutex_;
  mutable std::list<std::string> recency_;
  std::unordered_map<std::string, Entry> images_;
};

/// Maps latents to images. generate() is deterministic per latent.
class GeneratorOracle {
 public:
  virtual ~GeneratorOracle() = default;
  virtual Eigen::Index dim() const = 0;
  virtual std::string identity() const = 0;
  /// Persists the image for `latent` and returns its reference.
  /// Throws DimensionError, TransportError or ProtocolError.
  virtual ImageRef generate(const LatentVector& latent) = 0;
};

/// An endpoint that can score image pairs for one or more named models.
class DecisionBackend {
 public:
  virtual ~DecisionBackend() = default;
  virtual std::string identity() const = 0;
  /// Throws ProtocolError when the model cannot score the pair (e.g. no face found).
  virtual double distance(std::string_view model, const ImageRef& a, const ImageRef& b) = 0;
};

/// Default acceptance thresholds of the known face recognition models
/// (dlib 0.6, vggface 0.86, facenet512 1.04, openface 0.55).
std::optional<double> default_threshold(std::string_view model_name);

/// True iff d is strictly below the threshold.
bool accept(double threshold, double d);

/// One model behind a backend, with an unordered-pair distance cache.
///
/// Model failures become missing scores (std::nullopt) and are cached like
/// values; transport failures propagate and are not cached.
class DecisionOracle {
 public:
  DecisionOracle(std::shared_ptr<DecisionBackend> backend, std::string model_name,
                 std::optional<double> threshold = std::nullopt);

  DecisionOracle(const DecisionOracle&) = delete;
  DecisionOracle& operator=(const DecisionOracle&) = delete;

  std::optional<double> distance(const ImageRef& a, const ImageRef& b);

  /// accept() against this model's threshold; ValidationError when it has none.
  bool accept(double d) const;

  const std::string& model_name() const { return model_name_; }
  std::optional<double> threshold() const { return threshold_; }
  std::size_t backend_calls() const;
  std::size_t cache_size() const;

 private:
  std::shared_ptr<DecisionBackend> backend_;
  std::string model_name_;
  std::optional<double> threshold_;
  mutable std::mutex mutex_;
  std::map<std::pair<std::string, std::string>, std::optional<double>> cache_;
  std::size_t backend_calls_ = 0;
};

/// Test double: an image is the lossless little-endian float64 encoding of
/// its latent, and every model's distance is ||a - b|| / distance_normalizer.
class SyntheticWorld final : public GeneratorOracle, public DecisionBackend {
 public:
  SyntheticWorld(Eigen::Index dim, double distance_normalizer, std::shared_ptr<ImageStore> store);

  Eigen::Index dim() const override { return dim_; }
  std::string identity() const override;
  ImageRef generate(const LatentVector& latent) override;
  double distance(std::string_view model, const ImageRef& a, const ImageRef& b) override;

  LatentVector decode(const ImageRef& ref) const;
  double distance_normalizer() const { return normalizer_; }
  const std::shared_ptr<ImageStore>& store() const { return store_; }

  static std::string encode_image(const LatentVector& latent);
  static LatentVector decode_image(std::string_view bytes);

 private:
  Eigen::Index dim_;
  double normalizer_;
  std::shared_ptr<ImageStore> store_;
};

}  // namespace latentprobe
