#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ahsl/anatomy.hpp"
#include "ahsl/error.hpp"
#include "ahsl/losses.hpp"
#include "ahsl/rng.hpp"
#include "ahsl/volume.hpp"

namespace ahsl {

struct OptimizeConfig {
  int iterations = 500;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double init_sigma = 0.01;  // zero init would start on argmax/max ties
  std::uint64_t seed = 42;
  LossConfig loss{};
  int log_period = 50;

  void validate() const {
    if (iterations < 1) fail(errc::bad_argument, "iterations must be >= 1");
    if (!(learning_rate > 0.0)) fail(errc::bad_argument, "learning rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) fail(errc::bad_argument, "momentum must be in [0, 1)");
    if (log_period < 1) fail(errc::bad_argument, "log period must be >= 1");
    loss.validate();
  }
};

struct TraceEntry {
  int iteration = 0;
  LossBreakdown loss;
};

struct OptimizeTrace {
  std::vector<TraceEntry> entries;  // iteration 0, every log_period, and the final state
  ScalarField4D final_logits;
  LabelVolume final_partition;
};

inline void to_json(nlohmann::json& j, const TraceEntry& e) {
  to_json(j, e.loss);
  j["iteration"] = e.iteration;
}

namespace detail {

inline std::pair<LossBreakdown, ScalarField4D> evaluate_or_abort(const ScalarField4D& logits,
                                                                 const RegionPartition& r,
                                                                 const AnatomyHierarchy& h,
                                                                 const LossConfig& cfg,
                                                                 int iteration) {
  std::pair<LossBreakdown, ScalarField4D> result = [&] {
    try {
      return total_loss_and_grad(logits, r, h, cfg);
    } catch (const Error& e) {
      if (e.code() == errc::non_finite) {
        fail(errc::non_finite,
             "non-finite state at iteration " + std::to_string(iteration) + ": " + e.what());
      }
      throw;
    }
  }();
  if (!std::isfinite(result.first.total)) {
    fail(errc::non_finite, "loss became non-finite at iteration " + std::to_string(iteration));
  }
  for (double g : result.second.data) {
    if (!std::isfinite(g)) {
      fail(errc::non_finite, "gradient became non-finite at iteration " + std::to_string(iteration));
    }
  }
  return result;
}

}  // namespace detail

/// Gradient descent with momentum on a free 19-channel logit field under
/// the full objective. Deterministic for a fixed seed and config; the trace
/// records iteration 0, every log_period-th iteration, and the final state.
inline OptimizeTrace optimize_logits(const RegionPartition& r, const AnatomyHierarchy& h,
                                     const OptimizeConfig& cfg) {
  cfg.validate();
  detail::require_bv(r);

  GridShape shape = r.shape;
  shape.channels = 19;
  ScalarField4D logits = ScalarField4D::zeros(shape);
  Rng rng(cfg.seed);
  for (double& v : logits.data) v = cfg.init_sigma * rng.normal();

  ScalarField4D velocity = ScalarField4D::zeros(shape);
  OptimizeTrace trace;

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    auto [breakdown, grad] = detail::evaluate_or_abort(logits, r, h, cfg.loss, iter);
    if (iter % cfg.log_period == 0) trace.entries.push_back({iter, breakdown});

    double* vel = velocity.data.data();
    const double* g = grad.data.data();
    double* x = logits.data.data();
    const std::int64_t n = shape.values();
    parallel_for(n, [&](std::int64_t i0, std::int64_t i1) {
      for (std::int64_t i = i0; i < i1; ++i) {
        vel[i] = cfg.momentum * vel[i] + g[i];
        x[i] -= cfg.learning_rate * vel[i];
      }
    });
  }

  auto [final_breakdown, final_grad] =
      detail::evaluate_or_abort(logits, r, h, cfg.loss, cfg.iterations);
  (void)final_grad;
  trace.entries.push_back({cfg.iterations, final_breakdown});

  trace.final_partition = argmax_labels(softmax_channels(logits));
  trace.final_logits = std::move(logits);
  return trace;
}

/// Compares the analytic gradient of the full objective against central
/// finite differences (step 1e-3, all in f64) at uniformly sampled
/// (channel, voxel) coordinates of a seeded standard-normal logit field.
/// Returns the max relative error with denominator max(|analytic|, |fd|, 1e-8).
inline double grad_check(const RegionPartition& r, const AnatomyHierarchy& h, const LossConfig& cfg,
                         int samples, std::uint64_t seed) {
  if (r.shape.voxels() > 12 * 12 * 12) {
    fail(errc::bad_argument, "gradient checks are limited to grids of at most 12^3 voxels");
  }
  if (samples < 1) fail(errc::bad_argument, "need at least one sample");

  GridShape shape = r.shape;
  shape.channels = 19;
  ScalarField4D logits = ScalarField4D::zeros(shape);
  Rng rng(seed);
  for (double& v : logits.data) v = rng.normal();

  const auto [breakdown, grad] = total_loss_and_grad(logits, r, h, cfg);
  (void)breakdown;

  constexpr double kStep = 1e-3;
  auto forward_total = [&]() {
    return total_loss(softmax_channels(logits), r, h, cfg).total;
  };

  double max_rel = 0.0;
  const std::int64_t n = shape.values();
  for (int s = 0; s < samples; ++s) {
    const std::int64_t i = rng.uniform_int(0, n - 1);
    const double saved = logits.data[static_cast<std::size_t>(i)];
    logits.data[static_cast<std::size_t>(i)] = saved + kStep;
    const double f_plus = forward_total();
    logits.data[static_cast<std::size_t>(i)] = saved - kStep;
    const double f_minus = forward_total();
    logits.data[static_cast<std::size_t>(i)] = saved;

    const double fd = (f_plus - f_minus) / (2.0 * kStep);
    const double analytic = grad.data[static_cast<std::size_t>(i)];
    const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-8});
    max_rel = std::max(max_rel, std::abs(analytic - fd) / denom);
  }
  return max_rel;
}

}  // namespace ahsl
