#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "latentprobe/error.hpp"
#include "latentprobe/rng.hpp"

namespace latentprobe {

template <typename Scalar>
using Latent = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// A point in the generator's latent space.
using LatentVector = Latent<double>;

inline constexpr Eigen::Index kDefaultLatentDim = 512;

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& v) {
  return v.allFinite();
}

template <typename DerivedA, typename DerivedB>
void require_same_dim(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                      const char* what) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(what) + ": dimension mismatch (" + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()) + ")");
  }
}

/// Checks the LatentVector invariants: expected dimension, finite components.
template <typename Derived>
void validate_latent(const Eigen::MatrixBase<Derived>& v, Eigen::Index dim) {
  if (v.size() != dim) {
    throw DimensionError("latent has dimension " + std::to_string(v.size()) + ", expected " +
                         std::to_string(dim));
  }
  if (!all_finite(v)) throw ValidationError("latent has non-finite components");
}

/// i.i.d. standard normal components drawn from `rng`.
template <typename Scalar = double>
Latent<Scalar> random_latent(SeededRng& rng, Eigen::Index dim) {
  if (dim < 1) throw ValidationError("random_latent: dim must be positive");
  Latent<Scalar> v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v[i] = static_cast<Scalar>(rng.normal());
  return v;
}

/// Direction uniform on the unit sphere (normal draw, then normalize).
template <typename Scalar = double>
Latent<Scalar> unit_direction(SeededRng& rng, Eigen::Index dim) {
  for (;;) {
    Latent<Scalar> v = random_latent<Scalar>(rng, dim);
    const Scalar norm = v.norm();
    if (norm > Scalar(0)) return v / norm;
  }
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar euclidean_distance(const Eigen::MatrixBase<DerivedA>& a,
                                             const Eigen::MatrixBase<DerivedB>& b) {
  require_same_dim(a, b, "euclidean_distance");
  return (a - b).norm();
}

/// base + distance * direction_scale * direction, for a unit `direction`.
template <typename DerivedA, typename DerivedB>
Latent<typename DerivedA::Scalar> step(const Eigen::MatrixBase<DerivedA>& base,
                                       const Eigen::MatrixBase<DerivedB>& direction,
                                       typename DerivedA::Scalar distance,
                                       typename DerivedA::Scalar direction_scale = 1) {
  using Scalar = typename DerivedA::Scalar;
  require_same_dim(base, direction, "step");
  if (!(distance >= Scalar(0))) throw ValidationError("step: distance must be non-negative");
  if (!(direction_scale > Scalar(0))) throw ValidationError("step: direction_scale must be positive");
  if (std::abs(direction.norm() - Scalar(1)) > Scalar(1e-9)) {
    throw ValidationError("step: direction must have unit norm");
  }
  return base + (distance * direction_scale) * direction;
}

/// (1 - fraction) * base + fraction * target.
template <typename DerivedA, typename DerivedB>
Latent<typename DerivedA::Scalar> lerp(const Eigen::MatrixBase<DerivedA>& base,
                                       const Eigen::MatrixBase<DerivedB>& target,
                                       typename DerivedA::Scalar fraction) {
  using Scalar = typename DerivedA::Scalar;
  require_same_dim(base, target, "lerp");
  if (!(fraction >= Scalar(0) && fraction <= Scalar(1))) {
    throw ValidationError("lerp: fraction must lie in [0, 1]");
  }
  return (Scalar(1) - fraction) * base + fraction * target;
}

}  // namespace latentprobe
