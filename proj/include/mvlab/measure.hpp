#pragma once

// Core measure types: particle clouds (uniform-weight empirical measures),
// Gaussian laws, and the read-only view the interaction function receives.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvlab/error.hpp"
#include "mvlab/stats.hpp"

namespace mvlab {

// N points in R^d stored row-major, with the time index they belong to.
class ParticleCloud {
 public:
  ParticleCloud() = default;
  ParticleCloud(std::size_t count, std::size_t dim, std::size_t time = 0)
      : dim_(dim), time_(time), data_(count * dim, 0.0) {
    if (dim == 0) throw Error(ErrorKind::invalid_spec, "particle dimension must be positive");
  }
  ParticleCloud(std::vector<double> data, std::size_t dim, std::size_t time = 0)
      : dim_(dim), time_(time), data_(std::move(data)) {
    if (dim == 0 || data_.size() % dim != 0)
      throw Error(ErrorKind::invalid_spec, "cloud data length is not a multiple of the dimension");
  }

  // Convenience for one-dimensional clouds.
  static ParticleCloud from_values(std::vector<double> values, std::size_t time = 0) {
    return ParticleCloud(std::move(values), 1, time);
  }

  std::size_t size() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t time() const noexcept { return time_; }
  void set_time(std::size_t n) noexcept { time_ = n; }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> point(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  std::span<double> point(std::size_t i) { return {data_.data() + i * dim_, dim_}; }
  double operator()(std::size_t i, std::size_t k) const { return data_[i * dim_ + k]; }
  double& operator()(std::size_t i, std::size_t k) { return data_[i * dim_ + k]; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  Eigen::VectorXd mean() const {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim_));
    const std::size_t n = size();
    if (n == 0) return m;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < dim_; ++k) m[static_cast<Eigen::Index>(k)] += (*this)(i, k);
    return m / static_cast<double>(n);
  }

  // ||mu||_1 = integral of |x| against the empirical measure.
  double abs_moment() const {
    const std::size_t n = size();
    if (n == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += norm(point(i));
    return s / static_cast<double>(n);
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  static double norm(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
  }

  friend bool operator==(const ParticleCloud&, const ParticleCloud&) = default;

 private:
  std::size_t dim_ = 1;
  std::size_t time_ = 0;
  std::vector<double> data_;
};

struct GaussianLaw {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(mean.size()); }

  static GaussianLaw scalar(double m, double variance) {
    GaussianLaw g;
    g.mean = Eigen::VectorXd::Constant(1, m);
    g.cov = Eigen::MatrixXd::Constant(1, 1, variance);
    return g;
  }
};

// Read-only description of the measure argument of the interaction function.
// `points` is empty when the measure is a closed-form law; interactions that
// need more than the summary statistics must handle that case.
struct MeasureView {
  std::span<const double> points;
  std::size_t dim = 1;
  Eigen::VectorXd mean;
  double abs_moment = 0.0;

  static MeasureView of(const ParticleCloud& cloud) {
    return MeasureView{cloud.data(), cloud.dim(), cloud.mean(), cloud.abs_moment()};
  }

  static MeasureView of(const GaussianLaw& law) {
    MeasureView v;
    v.dim = law.dim();
    v.mean = law.mean;
    if (v.dim == 1) {
      // folded normal mean
      const double s = std::sqrt(std::max(0.0, law.cov(0, 0)));
      const double m = law.mean[0];
      v.abs_moment = s > 0 ? s * std::sqrt(2.0 / std::numbers::pi) * std::exp(-m * m / (2 * s * s)) +
                                 m * (1 - 2 * stats::normal_cdf(-m / s))
                           : std::abs(m);
    } else {
      v.abs_moment = std::nan("");
    }
    return v;
  }
};

}  // namespace mvlab
