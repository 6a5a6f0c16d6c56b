#pragma once

// Finite families of 1-Lipschitz functions on [-R, R]^d that are eps-dense in
// sup norm, their counting bound, and the resulting lower estimate of W1.
//
// Members are tables of values on a regular grid with K intervals per axis.
// Values live on the lattice h*Z (h = 2R/K) and differ by at most h between
// grid neighbours (including diagonals), so the table is 1-Lipschitz on the
// nodes. Off the grid a member is the piecewise-linear interpolant (d = 1) or
// the McShane extension min_k (g_k + |x - x_k|) (d >= 2), both 1-Lipschitz.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <set>
#include <vector>

#include "mvlab/error.hpp"
#include "mvlab/keyed_rng.hpp"
#include "mvlab/measure.hpp"
#include "mvlab/transport.hpp"

namespace mvlab {

enum class BracketMode { floor, identity };

struct CoveringCount {
  long double value = 1.0L;  // max{prefactor * 3^(B^d), 1}
  double log_value = 0.0;    // natural log of value
  bool overflow = false;     // value is +inf in long double
  double exponent_base = 0.0;  // B after the bracket is resolved
};

// Counting bound for an eps-net of {f : |f| <= R, 1-Lipschitz} on [-R, R]^d.
inline CoveringCount covering_count(double R, double eps, std::size_t d, BracketMode mode = BracketMode::floor) {
  if (!(R > 0.0) || !(eps > 0.0)) throw Error(ErrorKind::domain, "covering_count needs R, eps > 0");
  if (d == 0) throw Error(ErrorKind::domain, "dimension must be positive");
  const long double sd = std::sqrt(static_cast<long double>(d));
  const long double ratio = static_cast<long double>(R) / static_cast<long double>(eps);
  const long double prefactor = 2.0L * (2.0L * sd + 1.0L) / 3.0L * ratio;
  long double base = 2.0L * ratio * (sd + 1.0L);
  if (mode == BracketMode::floor) base = std::floor(base * (1.0L + 1e-15L));
  const long double expo = std::pow(base, static_cast<long double>(d));

  CoveringCount out;
  out.exponent_base = static_cast<double>(base);
  const long double log_v = std::log(prefactor) + expo * std::log(3.0L);
  if (log_v <= 0.0L) {
    out.value = 1.0L;
    out.log_value = 0.0;
    return out;
  }
  out.log_value = static_cast<double>(log_v);
  if (log_v >= std::log(std::numeric_limits<long double>::max())) {
    out.value = std::numeric_limits<long double>::infinity();
    out.overflow = true;
    return out;
  }
  out.value = std::max(1.0L, prefactor * std::pow(3.0L, expo));
  return out;
}

struct LipschitzNet {
  double R = 1.0;
  double eps = 1.0;
  std::size_t d = 1;
  bool anchored = true;     // members vanish at the origin
  std::size_t intervals = 0;  // K; 0 for the singleton net {0}
  double spacing = 0.0;       // h = 2R/K
  std::vector<std::vector<double>> members;  // values on the (K+1)^d nodes, axis 0 fastest
  bool exhaustive = true;

  std::size_t size() const noexcept { return members.size(); }
  std::size_t nodes_per_axis() const noexcept { return intervals + 1; }
  std::size_t node_count() const noexcept {
    std::size_t n = 1;
    for (std::size_t k = 0; k < d; ++k) n *= nodes_per_axis();
    return intervals == 0 ? 1 : n;
  }

  double node_coord(std::size_t index) const { return -R + spacing * static_cast<double>(index); }

  // Value of member m at x, with x already inside [-R, R]^d.
  double evaluate(std::size_t m, std::span<const double> x) const {
    const auto& g = members.at(m);
    if (intervals == 0) return g[0];
    if (d == 1) {
      const double t = (x[0] + R) / spacing;
      std::size_t k = static_cast<std::size_t>(std::clamp(std::floor(t), 0.0, static_cast<double>(intervals - 1)));
      const double w = std::clamp(t - static_cast<double>(k), 0.0, 1.0);
      return (1.0 - w) * g[k] + w * g[k + 1];
    }
    const std::size_t n = nodes_per_axis();
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> idx(d, 0);
    for (std::size_t flat = 0; flat < g.size(); ++flat) {
      double s = 0.0;
      std::size_t rem = flat;
      for (std::size_t k = 0; k < d; ++k) {
        const double c = node_coord(rem % n) - x[k];
        s += c * c;
        rem /= n;
      }
      best = std::min(best, g[flat] + std::sqrt(s));
    }
    return anchored ? best : std::clamp(best, -R, R);
  }
};

inline std::size_t& net_exhaustive_cap() {
  static std::size_t cap = 1000000;
  return cap;
}

namespace detail {

// Lattice index range allowed for a node value (in units of h).
struct NetGeometry {
  std::size_t K = 0;
  std::size_t d = 1;
  std::size_t n = 1;        // nodes per axis
  std::size_t nodes = 1;
  long bound = 0;           // |j| <= bound
  bool anchored = true;
  std::size_t origin = 0;   // flat index of the origin node (anchored only)

  // Neighbours of `flat` that precede it in flat order (Chebyshev distance 1).
  std::vector<std::size_t> earlier_neighbours(std::size_t flat) const {
    std::vector<std::size_t> out;
    std::vector<long> c(d);
    std::size_t rem = flat;
    for (std::size_t k = 0; k < d; ++k) {
      c[k] = static_cast<long>(rem % n);
      rem /= n;
    }
    const std::size_t combos = static_cast<std::size_t>(std::pow(3.0, static_cast<double>(d)));
    for (std::size_t code = 0; code < combos; ++code) {
      std::size_t cc = code;
      long other = 0, stride = 1;
      bool ok = true, self = true;
      for (std::size_t k = 0; k < d; ++k) {
        const long off = static_cast<long>(cc % 3) - 1;
        cc /= 3;
        if (off != 0) self = false;
        const long v = c[k] + off;
        if (v < 0 || v >= static_cast<long>(n)) ok = false;
        other += v * stride;
        stride *= static_cast<long>(n);
      }
      if (ok && !self && static_cast<std::size_t>(other) < flat) out.push_back(static_cast<std::size_t>(other));
    }
    return out;
  }
};

inline NetGeometry net_geometry(double R, double eps, std::size_t d, bool anchored) {
  NetGeometry geo;
  geo.d = d;
  geo.anchored = anchored;
  const double reach = anchored ? R * std::sqrt(static_cast<double>(d)) : R;
  if (reach <= eps) return geo;  // singleton {0}
  geo.K = anchored ? 2 * static_cast<std::size_t>(std::ceil(R / eps * (1 - 1e-14)))
                   : static_cast<std::size_t>(std::ceil(2 * R / eps * (1 - 1e-14)));
  geo.K = std::max<std::size_t>(geo.K, anchored ? 2 : 1);
  geo.n = geo.K + 1;
  geo.nodes = 1;
  for (std::size_t k = 0; k < d; ++k) geo.nodes *= geo.n;
  geo.bound = static_cast<long>(geo.K / 2);
  if (anchored) {
    std::size_t stride = 1;
    geo.origin = 0;
    for (std::size_t k = 0; k < d; ++k) {
      geo.origin += (geo.K / 2) * stride;
      stride *= geo.n;
    }
  }
  return geo;
}

// Feasible lattice range for node `flat` given earlier assignments.
inline std::pair<long, long> feasible_range(const NetGeometry& geo, const std::vector<std::size_t>& nbrs,
                                            const std::vector<long>& j) {
  long lo = -geo.bound, hi = geo.bound;
  for (std::size_t q : nbrs) {
    lo = std::max(lo, j[q] - 1);
    hi = std::min(hi, j[q] + 1);
  }
  return {lo, hi};
}

}  // namespace detail

// Exhaustive (budget = 0, d <= 2) or uniformly sampled (budget > 0) net.
inline LipschitzNet build_net(double R, double eps, std::size_t d, std::size_t budget = 0, bool anchored = true,
                              std::uint64_t seed = 0) {
  if (!(R > 0.0) || !(eps > 0.0)) throw Error(ErrorKind::domain, "build_net needs R, eps > 0");
  if (d == 0) throw Error(ErrorKind::domain, "dimension must be positive");
  LipschitzNet net;
  net.R = R;
  net.eps = eps;
  net.d = d;
  net.anchored = anchored;
  const auto geo = detail::net_geometry(R, eps, d, anchored);
  if (geo.K == 0) {
    net.members.push_back({0.0});
    return net;
  }
  net.intervals = geo.K;
  net.spacing = 2 * R / static_cast<double>(geo.K);
  const double h = net.spacing;

  std::vector<std::vector<std::size_t>> nbrs(geo.nodes);
  for (std::size_t f = 0; f < geo.nodes; ++f) nbrs[f] = geo.earlier_neighbours(f);

  // Depth-first enumeration of all admissible lattice tables.
  auto enumerate = [&](std::size_t cap, bool& overflowed) {
    std::vector<std::vector<long>> out;
    std::vector<long> j(geo.nodes, 0);
    overflowed = false;
    auto rec = [&](auto&& self, std::size_t f) -> void {
      if (overflowed) return;
      if (f == geo.nodes) {
        if (out.size() >= cap) {
          overflowed = true;
          return;
        }
        out.push_back(j);
        return;
      }
      auto [lo, hi] = detail::feasible_range(geo, nbrs[f], j);
      if (geo.anchored && f == geo.origin) {
        lo = std::max(lo, 0L);
        hi = std::min(hi, 0L);
      }
      for (long v = lo; v <= hi; ++v) {
        j[f] = v;
        self(self, f + 1);
      }
    };
    rec(rec, 0);
    return out;
  };

  auto to_values = [&](const std::vector<long>& j) {
    std::vector<double> g(j.size());
    for (std::size_t k = 0; k < j.size(); ++k) g[k] = static_cast<double>(j[k]) * h;
    return g;
  };

  if (budget == 0) {
    if (d > 2) throw Error(ErrorKind::unsupported, "exhaustive nets need d <= 2; pass a sampling budget");
    bool overflowed = false;
    auto tables = enumerate(net_exhaustive_cap(), overflowed);
    if (overflowed)
      throw Error(ErrorKind::unsupported, "exhaustive net exceeds " + std::to_string(net_exhaustive_cap()) +
                                              " members; pass a sampling budget");
    for (const auto& t : tables) net.members.push_back(to_values(t));
    return net;
  }

  net.exhaustive = false;
  KeyedStream rng(NoiseKey{seed, NoiseStream::auxiliary, 0, 0, 0});
  // Small families: enumerate and draw a uniform subset without replacement.
  if (d <= 2) {
    bool overflowed = false;
    auto tables = enumerate(std::max<std::size_t>(budget * 4, 4096), overflowed);
    if (!overflowed) {
      const std::size_t take = std::min(budget, tables.size());
      for (std::size_t k = 0; k < take; ++k) {
        const std::size_t pick = k + static_cast<std::size_t>(rng.uniform() * static_cast<double>(tables.size() - k));
        std::swap(tables[k], tables[std::min(pick, tables.size() - 1)]);
        net.members.push_back(to_values(tables[k]));
      }
      net.exhaustive = take == tables.size();
      return net;
    }
  }

  std::set<std::vector<long>> seen;
  std::vector<long> j(geo.nodes, 0);
  if (d == 1) {
    // Uniform over admissible walks: weight each value by its number of completions.
    std::vector<std::vector<long double>> completions(geo.nodes, std::vector<long double>(2 * geo.bound + 1, 0.0L));
    const auto col = [&](long v) { return static_cast<std::size_t>(v + geo.bound); };
    for (long v = -geo.bound; v <= geo.bound; ++v) completions[geo.nodes - 1][col(v)] = 1.0L;
    for (std::size_t f = geo.nodes - 1; f-- > 0;)
      for (long v = -geo.bound; v <= geo.bound; ++v) {
        long double s = 0.0L;
        for (long w = std::max(-geo.bound, v - 1); w <= std::min(geo.bound, v + 1); ++w) s += completions[f + 1][col(w)];
        completions[f][col(v)] = s;
      }
    std::size_t attempts = 0;
    while (net.members.size() < budget && attempts < 50 * budget) {
      ++attempts;
      if (geo.anchored) {
        for (std::size_t f = 0; f < geo.nodes; ++f) j[f] = 0;
        long acc = 0;
        for (std::size_t f = geo.origin + 1; f < geo.nodes; ++f) {
          acc += static_cast<long>(rng.uniform() * 3.0) - 1;
          j[f] = acc;
        }
        acc = 0;
        for (std::size_t f = geo.origin; f-- > 0;) {
          acc += static_cast<long>(rng.uniform() * 3.0) - 1;
          j[f] = acc;
        }
      } else {
        for (std::size_t f = 0; f < geo.nodes; ++f) {
          long lo = -geo.bound, hi = geo.bound;
          if (f > 0) {
            lo = std::max(lo, j[f - 1] - 1);
            hi = std::min(hi, j[f - 1] + 1);
          }
          long double total = 0.0L;
          for (long v = lo; v <= hi; ++v) total += completions[f][col(v)];
          long double u = static_cast<long double>(rng.uniform()) * total;
          long pick = hi;
          for (long v = lo; v <= hi; ++v) {
            u -= completions[f][col(v)];
            if (u < 0.0L) {
              pick = v;
              break;
            }
          }
          j[f] = pick;
        }
      }
      if (seen.insert(j).second) net.members.push_back(to_values(j));
    }
    return net;
  }

  // d >= 2 with a large family: sequential random tables (uniform over each
  // node's feasible range given the earlier nodes).
  std::size_t attempts = 0;
  while (net.members.size() < budget && attempts < 50 * budget) {
    ++attempts;
    for (std::size_t f = 0; f < geo.nodes; ++f) {
      auto [lo, hi] = detail::feasible_range(geo, nbrs[f], j);
      const long span_count = hi - lo + 1;
      j[f] = lo + std::min<long>(span_count - 1, static_cast<long>(rng.uniform() * static_cast<double>(span_count)));
    }
    if (geo.anchored) {
      const long shift = j[geo.origin];
      for (auto& v : j) v -= shift;
    }
    if (seen.insert(j).second) net.members.push_back(to_values(j));
  }
  return net;
}

// max over net members of |<g, u - v>|, a lower bound on W1 of the clouds
// clipped to [-R, R]^d. The bracket adds the net resolution 2 eps unless
// clipping occurred, in which case the upper end is unknown.
inline W1Result w1_net_lower(const ParticleCloud& u, const ParticleCloud& v, const LipschitzNet& net) {
  if (net.members.empty()) throw Error(ErrorKind::domain, "empty Lipschitz net");
  if (u.dim() != net.d || v.dim() != net.d) throw Error(ErrorKind::domain, "cloud dimension differs from the net");
  bool truncated = false;
  auto clipped = [&](const ParticleCloud& c) {
    ParticleCloud out = c;
    for (double& x : out.data()) {
      if (x > net.R || x < -net.R) truncated = true;
      x = std::clamp(x, -net.R, net.R);
    }
    return out;
  };
  const ParticleCloud cu = clipped(u), cv = clipped(v);
  double best = 0.0;
  for (std::size_t m = 0; m < net.size(); ++m) {
    double su = 0.0, sv = 0.0;
    for (std::size_t i = 0; i < cu.size(); ++i) su += net.evaluate(m, cu.point(i));
    for (std::size_t i = 0; i < cv.size(); ++i) sv += net.evaluate(m, cv.point(i));
    best = std::max(best, std::abs(su / static_cast<double>(cu.size()) - sv / static_cast<double>(cv.size())));
  }
  W1Result r;
  r.method = W1Method::net_lower;
  r.value = best;
  r.lower = best;
  r.upper = truncated ? std::numeric_limits<double>::infinity() : best + 2 * net.eps;
  r.converged = true;
  r.truncated = truncated;
  return r;
}

}  // namespace mvlab
