#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <numeric>
#include <span>
#include <sstream>
#include <vector>

#include "latentprobe/latent.hpp"
#include "latentprobe/rng.hpp"

namespace latentprobe {

struct CmaConfig {
  Eigen::Index dim = kDefaultLatentDim;
  double sigma0 = 1.0;
  int max_generations = 100;
  /// Stop as soon as a generation's best score drops below this value.
  double truncation = 0.3;
  /// 0 selects the default 4 + floor(3 ln dim).
  int population_size = 0;
  std::uint64_t seed = 0;
  /// Evaluate a generation's candidates on separate threads (results kept in order).
  bool parallel_evaluations = false;

  int resolved_population() const {
    return population_size > 0 ? population_size
                               : 4 + static_cast<int>(std::floor(3.0 * std::log(static_cast<double>(dim))));
  }

  void validate() const {
    if (dim < 1) throw ValidationError("CmaConfig: dim must be positive");
    if (!(sigma0 > 0.0)) throw ValidationError("CmaConfig: sigma0 must be positive");
    if (!(truncation > 0.0)) throw ValidationError("CmaConfig: truncation must be positive");
    if (max_generations < 1) throw ValidationError("CmaConfig: max_generations must be positive");
    if (resolved_population() < 4) throw ValidationError("CmaConfig: population_size must be at least 4");
  }
};

/// Strategy parameters derived from dimension and population size
/// (log-decreasing recombination weights, standard learning rates).
template <typename Scalar>
struct CmaParameters {
  Eigen::Index n = 0;
  int lambda = 0;
  int mu = 0;
  Latent<Scalar> weights;
  Scalar mueff{};
  Scalar cs{}, ds{}, cc{}, c1{}, cmu{}, chi_n{};
  /// Generations between eigendecompositions.
  double eigen_interval = 0.0;

  CmaParameters(Eigen::Index dim, int population) : n(dim), lambda(population), mu(population / 2) {
    using std::log;
    using std::sqrt;
    const Scalar nn = static_cast<Scalar>(n);
    weights.resize(mu);
    for (int i = 0; i < mu; ++i) {
      weights[i] = log(Scalar(lambda + 1) / Scalar(2)) - log(Scalar(i + 1));
    }
    weights /= weights.sum();
    mueff = Scalar(1) / weights.squaredNorm();
    cs = (mueff + Scalar(2)) / (nn + mueff + Scalar(5));
    ds = Scalar(1) + Scalar(2) * std::max(Scalar(0), sqrt((mueff - Scalar(1)) / (nn + Scalar(1))) - Scalar(1)) + cs;
    cc = (Scalar(4) + mueff / nn) / (nn + Scalar(4) + Scalar(2) * mueff / nn);
    c1 = Scalar(2) / ((nn + Scalar(1.3)) * (nn + Scalar(1.3)) + mueff);
    cmu = std::min(Scalar(1) - c1, Scalar(2) * (mueff - Scalar(2) + Scalar(1) / mueff) /
                                       ((nn + Scalar(2)) * (nn + Scalar(2)) + mueff));
    chi_n = sqrt(nn) * (Scalar(1) - Scalar(1) / (Scalar(4) * nn) + Scalar(1) / (Scalar(21) * nn * nn));
    eigen_interval = static_cast<double>(lambda) / static_cast<double>(c1 + cmu) / static_cast<double>(n) / 10.0;
  }
};

template <typename Scalar>
struct CmaState {
  using Vector = Latent<Scalar>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Vector mean;
  Scalar sigma{};
  Matrix covariance;
  Vector p_sigma;
  Vector p_c;
  /// Eigenbasis of the covariance as of the last decomposition.
  Matrix basis;
  /// Square roots of the covariance eigenvalues.
  Vector scales;
  Matrix inv_sqrt_covariance;
  int generation = 0;
  int eigen_generation = 0;
};

template <typename Scalar>
struct GenerationRecord {
  Latent<Scalar> best_candidate;
  Scalar best_score{};
  /// Cumulative objective evaluations up to and including this generation.
  std::size_t evaluations_used = 0;
  /// Index of best_candidate within its generation.
  int best_index = 0;
  Latent<Scalar> mean;
  Scalar sigma{};
};

template <typename Scalar>
struct Trajectory {
  std::vector<GenerationRecord<Scalar>> generations;
  bool truncated = false;

  std::size_t evaluations() const { return generations.empty() ? 0 : generations.back().evaluations_used; }

  /// Record with the lowest best_score (earliest on ties).
  const GenerationRecord<Scalar>& best() const {
    if (generations.empty()) throw ValidationError("trajectory is empty");
    auto it = std::min_element(generations.begin(), generations.end(),
                               [](const auto& a, const auto& b) { return a.best_score < b.best_score; });
    return *it;
  }
};

/// (mu/mu_w, lambda) CMA-ES with cumulative step-size adaptation, rank-one and
/// rank-mu covariance updates, and lazy eigendecomposition.
template <typename Scalar>
class CmaEs {
 public:
  using Vector = Latent<Scalar>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  CmaEs(const CmaConfig& config, const Vector& start)
      : params_((config.validate(), config.dim), config.resolved_population()), rng_(config.seed, "cmaes") {
    validate_latent(start, config.dim);
    const auto n = config.dim;
    state_.mean = start;
    state_.sigma = static_cast<Scalar>(config.sigma0);
    state_.covariance = Matrix::Identity(n, n);
    state_.p_sigma = Vector::Zero(n);
    state_.p_c = Vector::Zero(n);
    state_.basis = Matrix::Identity(n, n);
    state_.scales = Vector::Ones(n);
    state_.inv_sqrt_covariance = Matrix::Identity(n, n);
  }

  const CmaParameters<Scalar>& parameters() const { return params_; }
  const CmaState<Scalar>& state() const { return state_; }

  /// Samples the next population: x_k = mean + sigma * B * D * z_k.
  const std::vector<Vector>& ask() {
    const auto n = params_.n;
    steps_.assign(static_cast<std::size_t>(params_.lambda), Vector(n));
    candidates_.assign(static_cast<std::size_t>(params_.lambda), Vector(n));
    Vector z(n);
    for (int k = 0; k < params_.lambda; ++k) {
      for (Eigen::Index i = 0; i < n; ++i) z[i] = static_cast<Scalar>(rng_.normal());
      steps_[k].noalias() = state_.basis * state_.scales.cwiseProduct(z);
      candidates_[k] = state_.mean + state_.sigma * steps_[k];
    }
    return candidates_;
  }

  /// Updates the distribution from the scores of the last ask().
  void tell(std::span<const Scalar> scores) {
    using std::exp;
    using std::sqrt;
    if (scores.size() != candidates_.size()) throw ValidationError("tell: score count does not match population");
    const auto n = params_.n;
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] < scores[b]; });

    Matrix selected(n, params_.mu);
    for (int i = 0; i < params_.mu; ++i) selected.col(i) = steps_[order[i]];
    const Vector y_w = selected * params_.weights;

    state_.mean += state_.sigma * y_w;
    ++state_.generation;

    const Scalar cs = params_.cs;
    state_.p_sigma = (Scalar(1) - cs) * state_.p_sigma +
                     sqrt(cs * (Scalar(2) - cs) * params_.mueff) * (state_.inv_sqrt_covariance * y_w);
    const Scalar ps_norm = state_.p_sigma.norm();
    const Scalar decay = Scalar(1) - std::pow(Scalar(1) - cs, Scalar(2 * state_.generation));
    const bool hsig = ps_norm / sqrt(decay) / params_.chi_n < Scalar(1.4) + Scalar(2) / Scalar(n + 1);

    const Scalar cc = params_.cc;
    state_.p_c = (Scalar(1) - cc) * state_.p_c;
    if (hsig) state_.p_c += sqrt(cc * (Scalar(2) - cc) * params_.mueff) * y_w;

    const Scalar c1 = params_.c1;
    const Scalar cmu = params_.cmu;
    const Scalar old_weight = Scalar(1) - c1 - cmu + (hsig ? Scalar(0) : c1 * cc * (Scalar(2) - cc));
    state_.covariance *= old_weight;
    state_.covariance.noalias() += c1 * (state_.p_c * state_.p_c.transpose());
    state_.covariance.noalias() += cmu * (selected * params_.weights.asDiagonal() * selected.transpose());

    state_.sigma *= exp((cs / params_.ds) * (ps_norm / params_.chi_n - Scalar(1)));

    if (static_cast<double>(state_.generation - state_.eigen_generation) > params_.eigen_interval) {
      decompose();
    }
  }

  /// Refreshes basis, scales and C^(-1/2) from the (symmetrized) covariance.
  void decompose() {
    state_.eigen_generation = state_.generation;
    const Matrix symmetric = (state_.covariance + state_.covariance.transpose()) / Scalar(2);
    state_.covariance = symmetric;
    Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetric);
    if (solver.info() != Eigen::Success) throw Error("CMA-ES: covariance eigendecomposition failed");
    const Vector eigenvalues = solver.eigenvalues();
    if (eigenvalues.minCoeff() <= Scalar(0)) {
      throw Error("CMA-ES: covariance lost positive definiteness at generation " +
                  std::to_string(state_.generation));
    }
    state_.basis = solver.eigenvectors();
    state_.scales = eigenvalues.cwiseSqrt();
    state_.inv_sqrt_covariance =
        state_.basis * state_.scales.cwiseInverse().asDiagonal() * state_.basis.transpose();
  }

 private:
  CmaParameters<Scalar> params_;
  CmaState<Scalar> state_;
  SeededRng rng_;
  std::vector<Vector> steps_;
  std::vector<Vector> candidates_;
};

template <typename Scalar>
using Objective = std::function<Scalar(const Latent<Scalar>&)>;

/// Called after every generation with the updated state.
template <typename Scalar>
using CmaObserver = std::function<void(const CmaState<Scalar>&)>;

/// Minimizes `objective` from `start` until a generation's best score drops
/// below config.truncation or max_generations is reached.
template <typename Scalar>
Trajectory<Scalar> minimize(const CmaConfig& config, const Objective<Scalar>& objective,
                            const Latent<Scalar>& start, const CmaObserver<Scalar>& observer = {}) {
  CmaEs<Scalar> es(config, start);
  Trajectory<Scalar> trajectory;
  std::size_t evaluations = 0;
  const Scalar truncation = static_cast<Scalar>(config.truncation);
  std::vector<Scalar> scores;
  for (int g = 0; g < config.max_generations; ++g) {
    const auto& candidates = es.ask();
    scores.assign(candidates.size(), Scalar(0));
    if (config.parallel_evaluations) {
      std::vector<std::future<Scalar>> pending;
      pending.reserve(candidates.size());
      for (const auto& c : candidates) pending.push_back(std::async(std::launch::async, objective, std::cref(c)));
      for (std::size_t k = 0; k < pending.size(); ++k) scores[k] = pending[k].get();
    } else {
      for (std::size_t k = 0; k < candidates.size(); ++k) scores[k] = objective(candidates[k]);
    }
    evaluations += candidates.size();
    for (std::size_t k = 0; k < scores.size(); ++k) {
      if (!std::isfinite(static_cast<double>(scores[k]))) {
        std::ostringstream msg;
        msg << "CMA-ES: objective returned " << scores[k] << " for candidate " << k << " of generation "
            << g + 1 << " (first components:";
        for (Eigen::Index i = 0; i < std::min<Eigen::Index>(4, candidates[k].size()); ++i) {
          msg << ' ' << candidates[k][i];
        }
        msg << ')';
        throw Error(msg.str());
      }
    }
    const auto best = static_cast<int>(std::min_element(scores.begin(), scores.end()) - scores.begin());
    GenerationRecord<Scalar> record;
    record.best_candidate = candidates[best];
    record.best_score = scores[best];
    record.best_index = best;
    record.evaluations_used = evaluations;
    es.tell(scores);
    record.mean = es.state().mean;
    record.sigma = es.state().sigma;
    trajectory.generations.push_back(std::move(record));
    if (observer) observer(es.state());
    if (trajectory.generations.back().best_score < truncation) {
      trajectory.truncated = true;
      break;
    }
  }
  return trajectory;
}

template <typename Scalar>
struct Crossing {
  Latent<Scalar> candidate;
  Scalar score{};
  bool reached = false;
  /// 1-based generation the candidate came from.
  std::size_t generation = 0;
};

/// For each threshold t (strictly descending), the earliest generation whose
/// best score is below t; the overall best with reached=false otherwise.
template <typename Scalar>
std::vector<Crossing<Scalar>> first_crossings(const Trajectory<Scalar>& trajectory,
                                              std::span<const double> thresholds) {
  if (trajectory.generations.empty()) throw ValidationError("first_crossings: empty trajectory");
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    if (!(thresholds[i] < thresholds[i - 1])) {
      throw ValidationError("first_crossings: thresholds must be strictly descending");
    }
  }
  const auto& gens = trajectory.generations;
  std::vector<Crossing<Scalar>> out;
  out.reserve(thresholds.size());
  for (const double t : thresholds) {
    const auto it = std::find_if(gens.begin(), gens.end(),
                                 [&](const auto& r) { return static_cast<double>(r.best_score) < t; });
    const bool reached = it != gens.end();
    const auto& record = reached ? *it : trajectory.best();
    const auto index = static_cast<std::size_t>(&record - gens.data()) + 1;
    out.push_back({record.best_candidate, record.best_score, reached, index});
  }
  return out;
}

}  // namespace latentprobe
