#pragma once

// The four stochastic recursions: the interacting N-particle system, the
// auxiliary system driven by a reference law, the synchronous coupling of two
// copies, and (via large-N interacting clouds) the reference law itself.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mvlab/error.hpp"
#include "mvlab/keyed_rng.hpp"
#include "mvlab/measure.hpp"
#include "mvlab/model.hpp"

namespace mvlab {

enum class SimulationMode { interacting, auxiliary, coupled };

inline const char* to_string(SimulationMode m) {
  switch (m) {
    case SimulationMode::interacting: return "interacting";
    case SimulationMode::auxiliary: return "auxiliary";
    case SimulationMode::coupled: return "coupled";
  }
  return "interacting";
}

// Replicate index reserved for reference clouds so they never share noise
// with the consumer replicates drawn under the same seed.
inline constexpr std::uint64_t kReferenceReplicate = std::uint64_t{1} << 62;

inline ParticleCloud sample_initial(const ModelSpec& spec, std::size_t count, const NoiseKey& base) {
  ParticleCloud cloud(count, spec.dim, 0);
  const NoiseKey key0 = base.with_stream(NoiseStream::initial).with_step(0);
  for (std::size_t i = 0; i < count; ++i) spec.initial.draw(key0.with_particle(i), cloud.point(i));
  return cloud;
}

inline ParticleCloud sample_initial(const InitialLawSpec& law, std::size_t count, std::size_t dim,
                                    const NoiseKey& base) {
  ParticleCloud cloud(count, dim, 0);
  const NoiseKey key0 = base.with_stream(NoiseStream::initial).with_step(0);
  for (std::size_t i = 0; i < count; ++i) law.draw(key0.with_particle(i), cloud.point(i));
  return cloud;
}

namespace detail {

// X'_i = A X_i + delta f(X_i, law, z_i), z_i drawn at (particle = i, step = n + 1).
inline ParticleCloud advance(const ParticleCloud& cloud, const MeasureView& law, const ModelSpec& spec,
                             const NoiseKey& base) {
  if (cloud.dim() != spec.dim || law.dim != spec.dim)
    throw Error(ErrorKind::invalid_spec, "dimension mismatch between cloud, law and model");
  const std::size_t d = spec.dim;
  const std::size_t n_particles = cloud.size();
  const std::uint64_t next_step = cloud.time() + 1;
  ParticleCloud out(n_particles, d, cloud.time() + 1);
  std::vector<double> z(spec.noise.dim), f(d);
  const NoiseKey step_key = base.with_step(next_step);
  const bool scalar = d == 1;
  const double a11 = spec.A(0, 0);
  for (std::size_t i = 0; i < n_particles; ++i) {
    auto x = cloud.point(i);
    spec.noise.draw(step_key.with_particle(i), z);
    spec.interaction(x, law, z, f);
    auto y = out.point(i);
    if (scalar) {
      y[0] = a11 * x[0] + spec.delta * f[0];
    } else {
      for (std::size_t r = 0; r < d; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c)
          acc += spec.A(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * x[c];
        y[r] = acc + spec.delta * f[r];
      }
    }
    for (std::size_t r = 0; r < d; ++r)
      if (!std::isfinite(y[r]))
        throw Error(ErrorKind::numeric, "non-finite coordinate for particle " + std::to_string(i));
  }
  return out;
}

}  // namespace detail

inline ParticleCloud step_interacting(const ParticleCloud& cloud, const ModelSpec& spec, const NoiseKey& base) {
  return detail::advance(cloud, MeasureView::of(cloud), spec, base);
}

// The measure argument is the reference law, not the Y-cloud itself.
inline ParticleCloud step_auxiliary(const ParticleCloud& ycloud, const MeasureView& reference, const ModelSpec& spec,
                                    const NoiseKey& base) {
  if (reference.dim != ycloud.dim()) throw Error(ErrorKind::invalid_spec, "reference law dimension mismatch");
  return detail::advance(ycloud, reference, spec, base);
}

// Both clouds advanced with identical noise draws. A missing law means the
// cloud's own empirical measure (a particle approximation of Psi).
inline std::pair<ParticleCloud, ParticleCloud> step_coupled(const ParticleCloud& a, const ParticleCloud& b,
                                                            const std::optional<MeasureView>& law_a,
                                                            const std::optional<MeasureView>& law_b,
                                                            const ModelSpec& spec, const NoiseKey& base) {
  if (a.size() != b.size() || a.dim() != b.dim())
    throw Error(ErrorKind::invalid_spec, "coupled clouds must have equal N and d");
  const NoiseKey key = base.with_step(0);  // step index is taken from each cloud's time
  ParticleCloud na = detail::advance(a, law_a ? *law_a : MeasureView::of(a), spec, key);
  ParticleCloud nb = detail::advance(b, law_b ? *law_b : MeasureView::of(b), spec, key);
  return {std::move(na), std::move(nb)};
}

struct Trajectory {
  std::vector<ParticleCloud> clouds;
  // auxiliary mode: the interacting X-trajectory sharing the noise;
  // coupled mode: the second copy.
  std::vector<ParticleCloud> partner;
  std::uint64_t seed = 0;
  std::uint64_t replicate = 0;
  SimulationMode mode = SimulationMode::interacting;
};

struct SimulationReference {
  // Law mu_n used by the auxiliary system at time n.
  std::function<MeasureView(std::size_t n)> law_at;
  // Initial law of the second copy in coupled mode.
  std::optional<InitialLawSpec> partner_initial;
};

namespace detail {

template <class F>
decltype(auto) at_step(std::size_t n, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), "step " + std::to_string(n) + ": " + e.what());
  }
}

}  // namespace detail

// Streams the interacting trajectory clouds 0..T to `visit` without storing them.
template <class Visitor>
void for_each_step(const ModelSpec& spec, std::size_t count, std::size_t horizon, std::uint64_t seed,
                   std::uint64_t replicate, Visitor&& visit) {
  if (count < 1) throw Error(ErrorKind::domain, "N must be at least 1");
  const NoiseKey base{seed, NoiseStream::system, replicate, 0, 0};
  ParticleCloud cloud = sample_initial(spec, count, base);
  visit(std::as_const(cloud));
  for (std::size_t n = 0; n < horizon; ++n) {
    cloud = detail::at_step(n + 1, [&] { return step_interacting(cloud, spec, base); });
    visit(std::as_const(cloud));
  }
}

inline Trajectory simulate(const ModelSpec& spec, std::size_t count, std::size_t horizon, std::uint64_t seed,
                           SimulationMode mode = SimulationMode::interacting,
                           const SimulationReference* reference = nullptr, std::uint64_t replicate = 0) {
  if (count < 1) throw Error(ErrorKind::domain, "N must be at least 1");
  Trajectory traj;
  traj.seed = seed;
  traj.replicate = replicate;
  traj.mode = mode;
  traj.clouds.reserve(horizon + 1);
  switch (mode) {
    case SimulationMode::interacting: {
      for_each_step(spec, count, horizon, seed, replicate,
                    [&](const ParticleCloud& c) { traj.clouds.push_back(c); });
      break;
    }
    case SimulationMode::auxiliary: {
      if (!reference || !reference->law_at)
        throw Error(ErrorKind::domain, "auxiliary mode needs a reference law sequence");
      const NoiseKey base{seed, NoiseStream::system, replicate, 0, 0};
      ParticleCloud x = sample_initial(spec, count, base);
      ParticleCloud y = x;
      traj.clouds.push_back(y);
      traj.partner.push_back(x);
      for (std::size_t n = 0; n < horizon; ++n) {
        detail::at_step(n + 1, [&] {
          const MeasureView mu_n = reference->law_at(n);
          y = step_auxiliary(y, mu_n, spec, base);
          x = step_interacting(x, spec, base);
          return 0;
        });
        traj.clouds.push_back(y);
        traj.partner.push_back(x);
      }
      break;
    }
    case SimulationMode::coupled: {
      if (!reference || !reference->partner_initial)
        throw Error(ErrorKind::domain, "coupled mode needs the partner's initial law");
      const NoiseKey base{seed, NoiseStream::coupling, replicate, 0, 0};
      ParticleCloud a = sample_initial(spec, count, base);
      ParticleCloud b = sample_initial(*reference->partner_initial, count, spec.dim, base);
      traj.clouds.push_back(a);
      traj.partner.push_back(b);
      for (std::size_t n = 0; n < horizon; ++n) {
        auto next = detail::at_step(n + 1, [&] { return step_coupled(a, b, std::nullopt, std::nullopt, spec, base); });
        a = std::move(next.first);
        b = std::move(next.second);
        traj.clouds.push_back(a);
        traj.partner.push_back(b);
      }
      break;
    }
  }
  return traj;
}

// Large interacting cloud standing in for mu_n when no closed form exists.
inline Trajectory propagate_reference(const ModelSpec& spec, std::size_t n_ref, std::size_t horizon,
                                      std::uint64_t seed) {
  return simulate(spec, n_ref, horizon, seed, SimulationMode::interacting, nullptr, kReferenceReplicate);
}

}  // namespace mvlab
