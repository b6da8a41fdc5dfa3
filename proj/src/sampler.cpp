#include "latentprobe/sampler.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "latentprobe/text.hpp"

namespace latentprobe {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

bool same_latent(const LatentVector& a, const LatentVector& b) {
  return a.size() == b.size() && (a.size() == 0 || a == b);
}

std::string latent_bytes(const LatentVector& v) {
  return std::string(reinterpret_cast<const char*>(v.data()), static_cast<std::size_t>(v.size()) * sizeof(double));
}

}  // namespace

std::string to_string(SampleType type) {
  switch (type) {
    case SampleType::genuine: return "genuine";
    case SampleType::positive: return "positive";
    case SampleType::negative: return "negative";
    case SampleType::interpolation: return "interpolation";
    case SampleType::optimized: return "optimized";
  }
  return "unknown";
}

SampleType sample_type_from_string(std::string_view name) {
  for (auto t : kSampleTypes) {
    if (to_string(t) == name) return t;
  }
  throw ValidationError("unknown sample type '" + std::string(name) + "'");
}

SampleType type_of(const SampleKind& kind) {
  return std::visit(overloaded{
                        [](const GenuineKind&) { return SampleType::genuine; },
                        [](const PositiveKind&) { return SampleType::positive; },
                        [](const NegativeKind&) { return SampleType::negative; },
                        [](const InterpolationKind&) { return SampleType::interpolation; },
                        [](const OptimizedKind&) { return SampleType::optimized; },
                    },
                    kind);
}

std::string sublevel_of(const SampleKind& kind) {
  return std::visit(overloaded{
                        [](const PositiveKind& k) { return format_number(k.distance); },
                        [](const InterpolationKind& k) { return format_number(k.fraction); },
                        [](const OptimizedKind& k) { return format_number(k.threshold); },
                        [](const auto&) { return std::string(); },
                    },
                    kind);
}

bool SampleRecord::operator==(const SampleRecord& other) const {
  return sample_id == other.sample_id && batch_id == other.batch_id && base_id == other.base_id &&
         kind == other.kind && same_latent(latent, other.latent) && image == other.image &&
         latent_distance_to_base == other.latent_distance_to_base && error == other.error;
}

bool BaseRecord::operator==(const BaseRecord& other) const {
  return base_id == other.base_id && same_latent(latent, other.latent) && image == other.image;
}

const BaseRecord& Batch::base(std::string_view base_id) const {
  for (const auto& b : bases) {
    if (b.base_id == base_id) return b;
  }
  throw NotFoundError("batch " + batch_id + " has no base '" + std::string(base_id) + "'");
}

bool Batch::optimized_complete() const {
  for (const auto& s : samples) {
    if (const auto* k = std::get_if<OptimizedKind>(&s.kind); k && !k->filled) return false;
  }
  return true;
}

bool Batch::materialized() const {
  for (const auto& b : bases) {
    if (!b.image) return false;
  }
  for (const auto& s : samples) {
    if (!s.image) return false;
  }
  return true;
}

void SamplerConfig::validate() const {
  if (bases_per_batch < 2) throw ValidationError("sampler: a batch needs at least two bases");
  if (directions_per_base < 0) throw ValidationError("sampler: directions_per_base must be non-negative");
  if (!(direction_scale > 0.0)) throw ValidationError("sampler: direction_scale must be positive");
  for (double s : steps) {
    if (!(s > 0.0)) throw ValidationError("sampler: steps must be positive");
  }
  for (double f : fractions) {
    if (!(f > 0.0 && f < 1.0)) throw ValidationError("sampler: fractions must lie in (0, 1)");
  }
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0)) throw ValidationError("sampler: thresholds must be positive");
    if (i > 0 && !(thresholds[i] < thresholds[i - 1])) {
      throw ValidationError("sampler: thresholds must be strictly descending");
    }
  }
}

std::size_t SamplerConfig::samples_per_base() const {
  const auto negatives = static_cast<std::size_t>(bases_per_batch - 1);
  return 1 + static_cast<std::size_t>(directions_per_base) * steps.size() +
         negatives * (1 + fractions.size() + thresholds.size());
}

std::string pair_id_of(const SampleRecord& sample) { return sample.base_id + ":" + sample.sample_id; }

std::string base_id_for(std::string_view batch_id, int k) { return std::string(batch_id) + "-" + std::to_string(k); }

std::vector<BaseRecord> draw_bases(std::string_view batch_id, std::uint64_t seed, Eigen::Index dim,
                                   const SamplerConfig& config) {
  std::vector<BaseRecord> bases;
  for (int k = 0; k < config.bases_per_batch; ++k) {
    SeededRng rng(seed, std::string(batch_id) + "/base:" + std::to_string(k));
    bases.push_back({base_id_for(batch_id, k), random_latent(rng, dim), std::nullopt});
  }
  return bases;
}

Batch plan_batch(std::string batch_id, std::vector<BaseRecord> bases, std::uint64_t seed,
                 const SamplerConfig& config) {
  config.validate();
  if (!is_plain_identifier(batch_id)) throw ValidationError("invalid batch id '" + batch_id + "'");
  if (bases.size() != static_cast<std::size_t>(config.bases_per_batch)) {
    throw ValidationError("plan_batch: expected " + std::to_string(config.bases_per_batch) + " bases, got " +
                          std::to_string(bases.size()));
  }
  std::set<std::string> ids;
  for (const auto& b : bases) {
    if (!is_plain_identifier(b.base_id)) throw ValidationError("invalid base id '" + b.base_id + "'");
    if (!ids.insert(b.base_id).second) throw ValidationError("plan_batch: duplicate base id '" + b.base_id + "'");
    validate_latent(b.latent, bases.front().latent.size());
  }
  for (std::size_t i = 0; i < bases.size(); ++i) {
    for (std::size_t j = i + 1; j < bases.size(); ++j) {
      if (same_latent(bases[i].latent, bases[j].latent)) {
        throw ValidationError("plan_batch: bases " + bases[i].base_id + " and " + bases[j].base_id +
                              " are identical");
      }
    }
  }

  Batch batch{std::move(batch_id), seed, std::move(bases), {}};
  const auto dim = batch.bases.front().latent.size();
  for (const auto& base : batch.bases) {
    auto add = [&](std::string sample_id, SampleKind kind, LatentVector latent) {
      SampleRecord record{base.base_id + "/" + sample_id, batch.batch_id, base.base_id, std::move(kind),
                          std::move(latent), std::nullopt, 0.0, {}};
      if (record.latent.size() > 0) record.latent_distance_to_base = euclidean_distance(record.latent, base.latent);
      batch.samples.push_back(std::move(record));
    };

    add("genuine", GenuineKind{}, base.latent);

    for (int d = 0; d < config.directions_per_base; ++d) {
      SeededRng rng(seed, batch.batch_id + "/" + base.base_id + "/dir:" + std::to_string(d));
      const LatentVector direction = unit_direction(rng, dim);
      for (double s : config.steps) {
        add("positive-d" + std::to_string(d) + "-" + format_number(s), PositiveKind{d, s},
            step(base.latent, direction, s, config.direction_scale));
      }
    }

    for (const auto& other : batch.bases) {
      if (other.base_id == base.base_id) continue;
      add("negative-" + other.base_id, NegativeKind{other.base_id}, other.latent);
    }
    for (const auto& other : batch.bases) {
      if (other.base_id == base.base_id) continue;
      for (double f : config.fractions) {
        add("interpolation-" + other.base_id + "-" + format_number(f), InterpolationKind{other.base_id, f},
            lerp(base.latent, other.latent, f));
      }
    }
    for (const auto& other : batch.bases) {
      if (other.base_id == base.base_id) continue;
      for (double t : config.thresholds) {
        add("optimized-" + other.base_id + "-" + format_number(t), OptimizedKind{other.base_id, t}, LatentVector{});
      }
    }
  }
  return batch;
}

std::map<SampleType, std::size_t> kind_histogram(const Batch& batch) {
  std::map<SampleType, std::size_t> counts;
  for (auto t : kSampleTypes) counts[t] = 0;
  for (const auto& s : batch.samples) ++counts[type_of(s.kind)];
  return counts;
}

std::map<SampleType, std::size_t> kind_histogram(const Batch& batch, std::string_view base_id) {
  std::map<SampleType, std::size_t> counts;
  for (auto t : kSampleTypes) counts[t] = 0;
  for (const auto& s : batch.samples) {
    if (s.base_id == base_id) ++counts[type_of(s.kind)];
  }
  return counts;
}

void run_optimized(Batch& batch, GeneratorOracle& generator, DecisionOracle& decision, const CmaConfig& cma,
                   const SamplerConfig& config, const std::function<void(const Batch&)>& on_run_complete,
                   int workers) {
  config.validate();
  struct Job {
    std::string base_id;
    std::string start_id;
  };
  std::vector<Job> jobs;
  for (const auto& s : batch.samples) {
    const auto* k = std::get_if<OptimizedKind>(&s.kind);
    if (!k || k->filled) continue;
    const bool seen = std::any_of(jobs.begin(), jobs.end(), [&](const Job& j) {
      return j.base_id == s.base_id && j.start_id == k->start_negative_id;
    });
    if (!seen) jobs.push_back({s.base_id, k->start_negative_id});
  }

  std::mutex batch_mutex;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;

  auto run_job = [&](const Job& job) {
    const LatentVector base_latent = batch.base(job.base_id).latent;
    const LatentVector start = batch.base(job.start_id).latent;
    const ImageRef base_image = generator.generate(base_latent);
    Objective<double> objective = [&](const LatentVector& candidate) {
      const auto d = decision.distance(generator.generate(candidate), base_image);
      return d.value_or(config.missing_penalty);
    };
    CmaConfig run_config = cma;
    run_config.dim = base_latent.size();
    run_config.seed = derive_stream_key(batch.master_seed, batch.batch_id + "/" + job.base_id + "/opt:" + job.start_id);
    const auto trajectory = minimize(run_config, objective, start);
    const auto crossings = first_crossings(trajectory, std::span<const double>(config.thresholds));

    std::lock_guard lock(batch_mutex);
    for (auto& s : batch.samples) {
      auto* k = std::get_if<OptimizedKind>(&s.kind);
      if (!k || s.base_id != job.base_id || k->start_negative_id != job.start_id) continue;
      for (std::size_t i = 0; i < config.thresholds.size(); ++i) {
        if (config.thresholds[i] != k->threshold) continue;
        const auto& c = crossings[i];
        s.latent = c.candidate;
        s.latent_distance_to_base = euclidean_distance(s.latent, base_latent);
        s.image.reset();
        s.error.clear();
        k->filled = true;
        k->reached = c.reached;
        k->achieved = c.score;
        k->generation = c.generation;
      }
    }
    if (on_run_complete) on_run_complete(batch);
  };

  auto worker = [&] {
    for (;;) {
      const auto i = next++;
      if (i >= jobs.size()) return;
      try {
        run_job(jobs[i]);
      } catch (...) {
        std::lock_guard lock(batch_mutex);
        if (!failure) failure = std::current_exception();
        next = jobs.size();
        return;
      }
    }
  };

  const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
}

MaterializeReport materialize(Batch& batch, GeneratorOracle& generator) {
  MaterializeReport report;
  std::map<std::string, ImageRef> generated;
  auto generate = [&](const LatentVector& latent) {
    auto key = latent_bytes(latent);
    if (const auto it = generated.find(key); it != generated.end()) return it->second;
    ++report.generate_calls;
    auto ref = generator.generate(latent);
    generated.emplace(std::move(key), ref);
    return ref;
  };
  for (const auto& b : batch.bases) {
    if (b.image) generated.emplace(latent_bytes(b.latent), *b.image);
  }
  for (const auto& s : batch.samples) {
    if (s.image && s.latent.size() > 0) generated.emplace(latent_bytes(s.latent), *s.image);
  }
  for (auto& b : batch.bases) {
    if (!b.image) b.image = generate(b.latent);
  }
  for (auto& s : batch.samples) {
    if (s.image || s.latent.size() == 0) continue;
    try {
      s.image = generate(s.latent);
      s.error.clear();
    } catch (const Error& e) {
      s.error = e.what();
      ++report.failures;
    }
  }
  return report;
}

}  // namespace latentprobe
