#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ahsl/anatomy.hpp"
#include "ahsl/error.hpp"
#include "ahsl/parallel.hpp"
#include "ahsl/volume.hpp"

namespace ahsl {

enum class ConsistencyNorm { sum, mean };

struct LossConfig {
  double lambda1 = 1.0;  // weight of the indirect (lobe-level) term
  double lambda2 = 1.0;  // weight of the consistency term
  double log_epsilon = 1e-12;
  double dice_epsilon = 1e-6;
  ConsistencyNorm consistency_norm = ConsistencyNorm::mean;

  void validate() const {
    if (lambda1 < 0.0 || lambda2 < 0.0) fail(errc::bad_argument, "lambda weights must be >= 0");
    if (!(log_epsilon > 0.0) || !(dice_epsilon > 0.0)) {
      fail(errc::bad_argument, "epsilons must be > 0");
    }
  }
};

struct LossBreakdown {
  double recall_bv = 0.0;
  double ce_bv = 0.0;
  double dice_lobe = 0.0;
  double ce_lobe = 0.0;
  double consistency = 0.0;
  double directly = 0.0;    // recall_bv + ce_bv
  double indirectly = 0.0;  // dice_lobe + ce_lobe
  double total = 0.0;       // directly + lambda1 * indirectly + lambda2 * consistency
  double lambda1 = 1.0;
  double lambda2 = 1.0;
};

inline void to_json(nlohmann::json& j, const LossBreakdown& b) {
  j = nlohmann::json{{"recall_bv", b.recall_bv},   {"ce_bv", b.ce_bv},
                     {"dice_lobe", b.dice_lobe},   {"ce_lobe", b.ce_lobe},
                     {"consistency", b.consistency}, {"directly", b.directly},
                     {"indirectly", b.indirectly}, {"total", b.total},
                     {"lambda1", b.lambda1},       {"lambda2", b.lambda2}};
}

namespace detail {

inline void require_same_grid(const ScalarField4D& p, const RegionPartition& r) {
  if (!p.shape.same_grid(r.shape)) fail(errc::bad_argument, "field and region grids differ");
}

inline void require_bv(const RegionPartition& r) {
  if (r.bv_total == 0) fail(errc::empty_region, "bronchovascular region is empty");
}

}  // namespace detail

/// Soft recall on the bronchovascular region: one minus the mean, over
/// segment classes with at least one BV voxel, of the average target-class
/// probability on that class's voxels. Rewards covering BV voxels without
/// penalizing expansion beyond them. Gradient accumulates into grad_p.
inline double recall_bv(const ScalarField4D& p, const RegionPartition& r,
                        ScalarField4D* grad_p = nullptr) {
  detail::require_same_grid(p, r);
  detail::require_bv(r);
  const std::int64_t vox = r.shape.voxels();
  const double* pd = p.data.data();

  std::array<double, 19> class_sum{};
  for (std::int64_t v = 0; v < vox; ++v) {
    if (r.tag[static_cast<std::size_t>(v)] != RegionTag::bronchovascular) continue;
    const int c = r.segment_target[static_cast<std::size_t>(v)];
    class_sum[static_cast<std::size_t>(c)] += pd[static_cast<std::size_t>(c) * vox + v];
  }
  const double classes = static_cast<double>(r.bv_classes_present.size());
  double mean_recall = 0.0;
  for (int c : r.bv_classes_present) {
    mean_recall += class_sum[static_cast<std::size_t>(c)] /
                   static_cast<double>(r.bv_class_count[static_cast<std::size_t>(c)]);
  }
  mean_recall /= classes;

  if (grad_p != nullptr) {
    double* g = grad_p->data.data();
    for (std::int64_t v = 0; v < vox; ++v) {
      if (r.tag[static_cast<std::size_t>(v)] != RegionTag::bronchovascular) continue;
      const int c = r.segment_target[static_cast<std::size_t>(v)];
      g[static_cast<std::size_t>(c) * vox + v] -=
          1.0 / (classes * static_cast<double>(r.bv_class_count[static_cast<std::size_t>(c)]));
    }
  }
  return 1.0 - mean_recall;
}

inline double recall_bv(const ProbabilityField& p, const RegionPartition& r,
                        ScalarField4D* grad_p = nullptr) {
  return recall_bv(p.field(), r, grad_p);
}

/// Mean cross entropy over BV voxels against their segment targets.
inline double ce_bv(const ScalarField4D& p, const RegionPartition& r, double log_epsilon = 1e-12,
                    ScalarField4D* grad_p = nullptr) {
  detail::require_same_grid(p, r);
  detail::require_bv(r);
  const std::int64_t vox = r.shape.voxels();
  const double* pd = p.data.data();
  double* g = grad_p != nullptr ? grad_p->data.data() : nullptr;
  const double inv_n = 1.0 / static_cast<double>(r.bv_total);

  double sum = 0.0;
  for (std::int64_t v = 0; v < vox; ++v) {
    if (r.tag[static_cast<std::size_t>(v)] != RegionTag::bronchovascular) continue;
    const int c = r.segment_target[static_cast<std::size_t>(v)];
    const double pv = pd[static_cast<std::size_t>(c) * vox + v];
    sum += -std::log(std::max(pv, log_epsilon));
    if (g != nullptr && pv >= log_epsilon) {
      g[static_cast<std::size_t>(c) * vox + v] -= inv_n / pv;
    }
  }
  return sum * inv_n;
}

inline double ce_bv(const ProbabilityField& p, const RegionPartition& r, double log_epsilon = 1e-12,
                    ScalarField4D* grad_p = nullptr) {
  return ce_bv(p.field(), r, log_epsilon, grad_p);
}

namespace detail {

/// Lobe-level one-hot target for channel k at voxel v: channel 0 marks B
/// voxels, channels 1..5 match the lobe target on BV and L voxels.
inline bool lobe_target_is(const RegionPartition& r, int k, std::int64_t v) {
  if (k == 0) return r.tag[static_cast<std::size_t>(v)] == RegionTag::background;
  return r.lobe_target[static_cast<std::size_t>(v)] == k;
}

}  // namespace detail

/// Soft Dice over the six lobe-level channels (background + 5 lobes) on the
/// full grid; channels with an empty target are skipped. Returns one minus
/// the mean Dice of the evaluated channels. Gradient accumulates into
/// grad_q (6 channels).
inline double dice_lobe(const LobeProbabilityField& q, const RegionPartition& r,
                        double dice_epsilon = 1e-6, ScalarField4D* grad_q = nullptr) {
  detail::require_same_grid(q.field, r);
  const std::int64_t vox = r.shape.voxels();
  const double* qd = q.field.data.data();

  std::array<double, 6> inter{};
  std::array<double, 6> q_sum{};
  std::array<std::int64_t, 6> t_count{};
  for (std::int64_t v = 0; v < vox; ++v) {
    const int target = r.tag[static_cast<std::size_t>(v)] == RegionTag::background
                           ? 0
                           : r.lobe_target[static_cast<std::size_t>(v)];
    ++t_count[static_cast<std::size_t>(target)];
    inter[static_cast<std::size_t>(target)] += qd[static_cast<std::size_t>(target) * vox + v];
  }
  for (int k = 0; k < 6; ++k) {
    const double* ch = qd + static_cast<std::size_t>(k) * vox;
    q_sum[static_cast<std::size_t>(k)] =
        parallel_sum(vox, [ch](std::int64_t i0, std::int64_t i1) {
          double s = 0.0;
          for (std::int64_t i = i0; i < i1; ++i) s += ch[i];
          return s;
        });
  }

  int evaluated = 0;
  double mean_dice = 0.0;
  std::array<double, 6> numer{};
  std::array<double, 6> denom{};
  for (int k = 0; k < 6; ++k) {
    if (t_count[static_cast<std::size_t>(k)] == 0) continue;
    ++evaluated;
    numer[static_cast<std::size_t>(k)] = 2.0 * inter[static_cast<std::size_t>(k)] + dice_epsilon;
    denom[static_cast<std::size_t>(k)] = q_sum[static_cast<std::size_t>(k)] +
                                         static_cast<double>(t_count[static_cast<std::size_t>(k)]) +
                                         dice_epsilon;
    mean_dice += numer[static_cast<std::size_t>(k)] / denom[static_cast<std::size_t>(k)];
  }
  if (evaluated == 0) return 0.0;
  mean_dice /= evaluated;

  if (grad_q != nullptr) {
    double* g = grad_q->data.data();
    const double inv_k = 1.0 / evaluated;
    for (int k = 0; k < 6; ++k) {
      if (t_count[static_cast<std::size_t>(k)] == 0) continue;
      const double n = numer[static_cast<std::size_t>(k)];
      const double d = denom[static_cast<std::size_t>(k)];
      const double d2 = d * d;
      double* gk = g + static_cast<std::size_t>(k) * vox;
      parallel_for(vox, [&](std::int64_t v0, std::int64_t v1) {
        for (std::int64_t v = v0; v < v1; ++v) {
          const double t = detail::lobe_target_is(r, k, v) ? 1.0 : 0.0;
          gk[v] -= inv_k * (2.0 * t * d - n) / d2;
        }
      });
    }
  }
  return 1.0 - mean_dice;
}

/// Mean cross entropy over all voxels against the lobe-level target
/// (channel 0 on background). Gradient accumulates into grad_q.
inline double ce_lobe(const LobeProbabilityField& q, const RegionPartition& r,
                      double log_epsilon = 1e-12, ScalarField4D* grad_q = nullptr) {
  detail::require_same_grid(q.field, r);
  const std::int64_t vox = r.shape.voxels();
  const double* qd = q.field.data.data();
  const double inv_n = 1.0 / static_cast<double>(vox);
  double* g = grad_q != nullptr ? grad_q->data.data() : nullptr;

  const double sum = parallel_sum(vox, [&](std::int64_t v0, std::int64_t v1) {
    double s = 0.0;
    for (std::int64_t v = v0; v < v1; ++v) {
      const int k = r.tag[static_cast<std::size_t>(v)] == RegionTag::background
                        ? 0
                        : r.lobe_target[static_cast<std::size_t>(v)];
      const double qv = qd[static_cast<std::size_t>(k) * vox + v];
      s += -std::log(std::max(qv, log_epsilon));
      if (g != nullptr && qv >= log_epsilon) {
        g[static_cast<std::size_t>(k) * vox + v] -= inv_n / qv;
      }
    }
    return s;
  });
  return sum * inv_n;
}

/// Discrete 6-neighborhood Laplacian per channel. Out-of-bounds neighbors
/// are omitted and the center coefficient shrinks to the in-bounds count,
/// which keeps the stencil self-adjoint and exactly zero on constants.
inline ScalarField4D laplacian(const ScalarField4D& p) {
  ScalarField4D out = ScalarField4D::zeros(p.shape);
  const std::int64_t vox = p.shape.voxels();
  const int depth = p.shape.depth, height = p.shape.height, width = p.shape.width;
  const std::int64_t dz = static_cast<std::int64_t>(height) * width;
  const std::int64_t dy = width;

  for (int c = 0; c < p.shape.channels; ++c) {
    const double* src = p.data.data() + static_cast<std::size_t>(c) * vox;
    double* dst = out.data.data() + static_cast<std::size_t>(c) * vox;
    parallel_for(vox, [&](std::int64_t v0, std::int64_t v1) {
      for (std::int64_t v = v0; v < v1; ++v) {
        const int z = static_cast<int>(v / dz);
        const int rem = static_cast<int>(v % dz);
        const int y = rem / width;
        const int x = rem % width;
        const double center = src[v];
        double acc = 0.0;
        if (z > 0) acc += src[v - dz] - center;
        if (z + 1 < depth) acc += src[v + dz] - center;
        if (y > 0) acc += src[v - dy] - center;
        if (y + 1 < height) acc += src[v + dy] - center;
        if (x > 0) acc += src[v - 1] - center;
        if (x + 1 < width) acc += src[v + 1] - center;
        dst[v] = acc;
      }
    });
  }
  return out;
}

/// L1 norm of the Laplacian of the field, divided by the value count in
/// mean mode. The gradient is the same stencil applied to sign(Lp) (the
/// stencil is self-adjoint; sign(0) = 0), scaled by grad_scale, accumulated
/// into grad_p.
inline double consistency_loss(const ScalarField4D& p, const LossConfig& cfg,
                               ScalarField4D* grad_p = nullptr, double grad_scale = 1.0) {
  ScalarField4D lap = laplacian(p);
  const std::int64_t n = p.shape.values();
  const double norm =
      cfg.consistency_norm == ConsistencyNorm::mean ? 1.0 / static_cast<double>(n) : 1.0;

  double* lap_d = lap.data.data();
  const double value = parallel_sum(n, [lap_d](std::int64_t i0, std::int64_t i1) {
    double s = 0.0;
    for (std::int64_t i = i0; i < i1; ++i) s += std::abs(lap_d[i]);
    return s;
  });

  if (grad_p != nullptr) {
    parallel_for(n, [lap_d](std::int64_t i0, std::int64_t i1) {
      for (std::int64_t i = i0; i < i1; ++i) {
        lap_d[i] = lap_d[i] > 0.0 ? 1.0 : (lap_d[i] < 0.0 ? -1.0 : 0.0);
      }
    });
    ScalarField4D back = laplacian(lap);
    const double scale = grad_scale * norm;
    double* g = grad_p->data.data();
    const double* b = back.data.data();
    parallel_for(n, [&](std::int64_t i0, std::int64_t i1) {
      for (std::int64_t i = i0; i < i1; ++i) g[i] += scale * b[i];
    });
  }
  return value * norm;
}

/// Routes a 6-channel lobe-level gradient back onto the 19-channel field:
/// channel 0 maps straight through, lobe channels map onto the member
/// segment recorded as the max witness at each voxel.
inline void route_lobe_gradient(const LobeProbabilityField& q, const ScalarField4D& grad_q,
                                double scale, ScalarField4D& grad_p) {
  const std::int64_t vox = q.field.shape.voxels();
  const double* gq = grad_q.data.data();
  double* gp = grad_p.data.data();
  const std::uint8_t* wit = q.witness.data();
  parallel_for(vox, [&](std::int64_t v0, std::int64_t v1) {
    for (std::int64_t v = v0; v < v1; ++v) {
      gp[v] += scale * gq[v];
      for (int l = 1; l <= AnatomyHierarchy::kLobeCount; ++l) {
        const int seg = wit[static_cast<std::size_t>(l - 1) * vox + v];
        gp[static_cast<std::size_t>(seg) * vox + v] +=
            scale * gq[static_cast<std::size_t>(l) * vox + v];
      }
    }
  });
}

/// Pulls a gradient w.r.t. probabilities back through the per-voxel softmax.
inline ScalarField4D softmax_backward(const ScalarField4D& p, const ScalarField4D& grad_p) {
  ScalarField4D out = ScalarField4D::zeros(p.shape);
  const std::int64_t vox = p.shape.voxels();
  const int ch = p.shape.channels;
  const double* pd = p.data.data();
  const double* g = grad_p.data.data();
  double* dst = out.data.data();
  parallel_for(vox, [&](std::int64_t v0, std::int64_t v1) {
    for (std::int64_t v = v0; v < v1; ++v) {
      double dot = 0.0;
      for (int c = 0; c < ch; ++c) {
        const std::size_t i = static_cast<std::size_t>(c) * vox + v;
        dot += pd[i] * g[i];
      }
      for (int c = 0; c < ch; ++c) {
        const std::size_t i = static_cast<std::size_t>(c) * vox + v;
        dst[i] = pd[i] * (g[i] - dot);
      }
    }
  });
  return out;
}

namespace detail {

inline LossBreakdown assemble_breakdown(double recall, double ce, double dice, double cel,
                                        double cons, const LossConfig& cfg) {
  LossBreakdown b;
  b.recall_bv = recall;
  b.ce_bv = ce;
  b.dice_lobe = dice;
  b.ce_lobe = cel;
  b.consistency = cons;
  b.directly = recall + ce;
  b.indirectly = dice + cel;
  b.total = b.directly + cfg.lambda1 * b.indirectly + cfg.lambda2 * b.consistency;
  b.lambda1 = cfg.lambda1;
  b.lambda2 = cfg.lambda2;
  return b;
}

}  // namespace detail

/// Forward-only evaluation of the full objective on a probability field.
inline LossBreakdown total_loss(const ProbabilityField& p, const RegionPartition& r,
                                const AnatomyHierarchy& h, const LossConfig& cfg) {
  cfg.validate();
  const LobeProbabilityField q = lobe_probability(p.field(), h);
  const double recall = recall_bv(p.field(), r);
  const double ce = ce_bv(p.field(), r, cfg.log_epsilon);
  const double dice = dice_lobe(q, r, cfg.dice_epsilon);
  const double cel = ce_lobe(q, r, cfg.log_epsilon);
  const double cons = consistency_loss(p.field(), cfg);
  return detail::assemble_breakdown(recall, ce, dice, cel, cons, cfg);
}

/// Full objective and its analytic gradient with respect to the logits.
/// Lobe-level gradients are routed through the max witnesses and everything
/// is chained through the softmax Jacobian.
inline std::pair<LossBreakdown, ScalarField4D> total_loss_and_grad(const ScalarField4D& logits,
                                                                   const RegionPartition& r,
                                                                   const AnatomyHierarchy& h,
                                                                   const LossConfig& cfg) {
  cfg.validate();
  if (logits.shape.channels != 19) fail(errc::bad_argument, "objective expects 19 logit channels");
  detail::require_same_grid(logits, r);

  const ProbabilityField p = softmax_channels(logits);
  const LobeProbabilityField q = lobe_probability(p.field(), h);

  ScalarField4D grad_p = ScalarField4D::zeros(p.field().shape);
  ScalarField4D grad_q = ScalarField4D::zeros(q.field.shape);

  const double recall = recall_bv(p.field(), r, &grad_p);
  const double ce = ce_bv(p.field(), r, cfg.log_epsilon, &grad_p);
  const double dice = dice_lobe(q, r, cfg.dice_epsilon, cfg.lambda1 != 0.0 ? &grad_q : nullptr);
  const double cel = ce_lobe(q, r, cfg.log_epsilon, cfg.lambda1 != 0.0 ? &grad_q : nullptr);
  if (cfg.lambda1 != 0.0) route_lobe_gradient(q, grad_q, cfg.lambda1, grad_p);
  const double cons =
      consistency_loss(p.field(), cfg, cfg.lambda2 != 0.0 ? &grad_p : nullptr, cfg.lambda2);

  ScalarField4D grad_logits = softmax_backward(p.field(), grad_p);
  return {detail::assemble_breakdown(recall, ce, dice, cel, cons, cfg), std::move(grad_logits)};
}

/// Fully supervised objective: (1 - mean soft Dice over classes present in
/// the labels) plus mean cross entropy over all voxels. Gradient is with
/// respect to the probability field.
inline double fsl_loss(const ScalarField4D& p, const LabelVolume& labels,
                       const LossConfig& cfg = {}, ScalarField4D* grad_p = nullptr) {
  if (!p.shape.same_grid(labels.shape)) fail(errc::bad_argument, "field and label grids differ");
  if (p.shape.channels != 19 || class_count(labels.semantics) != 19) {
    fail(errc::bad_argument, "fully supervised loss expects 19 classes");
  }
  const std::int64_t vox = p.shape.voxels();
  const double* pd = p.data.data();
  const double inv_n = 1.0 / static_cast<double>(vox);

  std::array<double, 19> inter{};
  std::array<std::int64_t, 19> t_count{};
  double ce_sum = 0.0;
  for (std::int64_t v = 0; v < vox; ++v) {
    const int c = labels.data[static_cast<std::size_t>(v)];
    const double pv = pd[static_cast<std::size_t>(c) * vox + v];
    inter[static_cast<std::size_t>(c)] += pv;
    ++t_count[static_cast<std::size_t>(c)];
    ce_sum += -std::log(std::max(pv, cfg.log_epsilon));
    if (grad_p != nullptr && pv >= cfg.log_epsilon) {
      grad_p->data[static_cast<std::size_t>(c) * vox + v] -= inv_n / pv;
    }
  }

  std::array<double, 19> p_sum{};
  for (int c = 0; c < 19; ++c) {
    const double* ch = pd + static_cast<std::size_t>(c) * vox;
    p_sum[static_cast<std::size_t>(c)] = parallel_sum(vox, [ch](std::int64_t i0, std::int64_t i1) {
      double s = 0.0;
      for (std::int64_t i = i0; i < i1; ++i) s += ch[i];
      return s;
    });
  }

  int evaluated = 0;
  double mean_dice = 0.0;
  for (int c = 0; c < 19; ++c) {
    if (t_count[static_cast<std::size_t>(c)] == 0) continue;
    ++evaluated;
    mean_dice += (2.0 * inter[static_cast<std::size_t>(c)] + cfg.dice_epsilon) /
                 (p_sum[static_cast<std::size_t>(c)] +
                  static_cast<double>(t_count[static_cast<std::size_t>(c)]) + cfg.dice_epsilon);
  }
  mean_dice /= evaluated;

  if (grad_p != nullptr) {
    double* g = grad_p->data.data();
    const double inv_k = 1.0 / evaluated;
    for (int c = 0; c < 19; ++c) {
      if (t_count[static_cast<std::size_t>(c)] == 0) continue;
      const double n = 2.0 * inter[static_cast<std::size_t>(c)] + cfg.dice_epsilon;
      const double d = p_sum[static_cast<std::size_t>(c)] +
                       static_cast<double>(t_count[static_cast<std::size_t>(c)]) + cfg.dice_epsilon;
      const double d2 = d * d;
      double* gc = g + static_cast<std::size_t>(c) * vox;
      for (std::int64_t v = 0; v < vox; ++v) {
        const double t = labels.data[static_cast<std::size_t>(v)] == c ? 1.0 : 0.0;
        gc[v] -= inv_k * (2.0 * t * d - n) / d2;
      }
    }
  }
  return (1.0 - mean_dice) + ce_sum * inv_n;
}

inline double fsl_loss(const ProbabilityField& p, const LabelVolume& labels,
                       const LossConfig& cfg = {}, ScalarField4D* grad_p = nullptr) {
  return fsl_loss(p.field(), labels, cfg, grad_p);
}

}  // namespace ahsl
