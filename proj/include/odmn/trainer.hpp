#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "odmn/error.hpp"
#include "odmn/homogenizer.hpp"
#include "odmn/network.hpp"
#include "odmn/parallel.hpp"
#include "odmn/tape.hpp"
#include "odmn/tensor.hpp"

namespace odmn {

/// Sampling box for the cubic constants C11, C12, C44 (GPa).
struct CubicRanges {
  double lo = 1e-3;
  double hi = 1e3;
};

inline constexpr std::size_t kRetryCap = 1'000'000;

/// Cubic stiffness with C11, C12, C44 ~ U[lo, hi], rejected until
/// C11 - C12 > 0.
inline StiffnessMatrix sample_cubic_stiffness(Rng &rng, const CubicRanges &ranges = {}) {
  if (!(ranges.lo > 0.0 && ranges.hi > ranges.lo)) throw UsageError("invalid stiffness ranges");
  for (std::size_t attempt = 0; attempt < kRetryCap; ++attempt) {
    const double c11 = rng.uniform(ranges.lo, ranges.hi);
    const double c12 = rng.uniform(ranges.lo, ranges.hi);
    const double c44 = rng.uniform(ranges.lo, ranges.hi);
    if (c11 - c12 > 0.0) return cubic_stiffness(c11, c12, c44);
  }
  throw NumericalError("stiffness sampling exceeded the retry cap");
}

struct PhasePair {
  StiffnessMatrix phase1;
  StiffnessMatrix phase2;
  double contrast = 1.0; ///< the factor c1 applied to phase 2
};

/// Two-phase stiffness pairs: a stable phase-1 triple, an independent
/// stable phase-2 triple scaled by c1 ~ 10^U(-1, 1).
inline std::vector<PhasePair> generate_two_phase_samples(std::size_t n, Rng &rng,
                                                         const CubicRanges &ranges = {}) {
  if (n == 0) throw UsageError("sample count must be positive");
  std::vector<PhasePair> out;
  out.reserve(n);
  std::size_t attempts = 0;
  while (out.size() < n) {
    if (++attempts > kRetryCap * n) throw NumericalError("two-phase sampling exceeded the retry cap");
    const double a11 = rng.uniform(ranges.lo, ranges.hi);
    const double a12 = rng.uniform(ranges.lo, ranges.hi);
    const double a44 = rng.uniform(ranges.lo, ranges.hi);
    if (!(a11 - a12 > 0.0)) continue;
    const double b11 = rng.uniform(ranges.lo, ranges.hi);
    const double b12 = rng.uniform(ranges.lo, ranges.hi);
    const double b44 = rng.uniform(ranges.lo, ranges.hi);
    if (!(b11 - b12 > 0.0)) continue;
    const double c1 = std::pow(10.0, rng.uniform(-1.0, 1.0));
    out.push_back({cubic_stiffness(a11, a12, a44), cubic_stiffness(c1 * b11, c1 * b12, c1 * b44), c1});
  }
  return out;
}

struct Sample {
  StiffnessMatrix phase1;
  std::optional<StiffnessMatrix> phase2;
  StiffnessMatrix target; ///< homogenized reference stiffness, GPa

  PhaseAssignment assignment() const {
    return phase2 ? PhaseAssignment::two_phase(phase1, *phase2) : PhaseAssignment::single(phase1);
  }
};

struct Dataset {
  std::vector<Sample> samples;
  std::string provenance = "teacher";
};

/// Reference targets produced by a teacher network in place of full-field
/// simulations.
inline Dataset synthesize_teacher_dataset(const ParameterSet &teacher, PhaseMode mode, std::size_t n,
                                          Rng &rng, const CubicRanges &ranges = {}) {
  teacher.validate();
  const Topology topo(teacher.depth);
  Dataset data;
  data.samples.reserve(n);
  if (mode == PhaseMode::two_phase) {
    for (const auto &pair : generate_two_phase_samples(n, rng, ranges)) {
      Sample s{pair.phase1, pair.phase2, {}};
      s.target = homogenize(teacher, topo, s.assignment());
      data.samples.push_back(std::move(s));
    }
  } else {
    if (n == 0) throw UsageError("sample count must be positive");
    for (std::size_t k = 0; k < n; ++k) {
      Sample s{sample_cubic_stiffness(rng, ranges), std::nullopt, {}};
      s.target = homogenize(teacher, topo, s.assignment());
      data.samples.push_back(std::move(s));
    }
  }
  return data;
}

/// ||target - predicted||_F^2 / ||target||_F^2.
inline double relative_squared_error(const StiffnessMatrix &target, const StiffnessMatrix &predicted) {
  const double denom = target.squaredNorm();
  if (!(denom > 0.0)) throw DataError("zero-norm target stiffness");
  return (target - predicted).squaredNorm() / denom;
}

/// Mean relative squared error over a batch; also the per-epoch error
/// metric when evaluated over a whole split.
inline double loss(std::span<const Sample> batch, const ParameterSet &params, const Topology &topo) {
  if (batch.empty()) throw UsageError("loss of an empty batch");
  std::vector<double> terms(batch.size());
  parallel_for(batch.size(), [&](std::size_t k) {
    terms[k] = relative_squared_error(batch[k].target, homogenize(params, topo, batch[k].assignment()));
  });
  double sum = 0.0;
  for (double t : terms) sum += t;
  return sum / double(batch.size());
}

/// Records the relative squared error of one sample on `tape`, reading the
/// parameters from `leaves` (one 1x1 leaf per flat parameter).
inline Var record_sample_error(GradientTape &tape, std::span<const Var> leaves, const Topology &topo,
                               const Sample &sample) {
  const std::size_t nodes = topo.num_nodes();
  const std::size_t inter = topo.num_interactions();
  const Var c1 = tape.leaf(sample.phase1);
  const Var c2 = sample.phase2 ? tape.leaf(*sample.phase2) : c1;

  std::vector<Var> level(nodes), weight(nodes);
  for (std::size_t i = 0; i < nodes; ++i) {
    weight[i] = tape.softplus(leaves[i]);
    const Var rx = tape.voigt_rotation(0, leaves[nodes + i]);
    const Var ry = tape.voigt_rotation(1, leaves[2 * nodes + i]);
    const Var rz = tape.voigt_rotation(2, leaves[3 * nodes + i]);
    const Var r1 = tape.matmul(rz, tape.matmul(ry, rx));
    const Var c = (sample.phase2 && i % 2 == 1) ? c2 : c1;
    level[i] = tape.matmul(r1, tape.matmul(c, tape.transpose(r1)));
  }
  for (int l = topo.depth() - 1; l >= 0; --l) {
    const std::size_t count = std::size_t{1} << l;
    std::vector<Var> next(count), next_weight(count);
    for (std::size_t p = 0; p < count; ++p) {
      const std::size_t j = Topology::interaction_index(l, p);
      const Var a = level[2 * p], b = level[2 * p + 1];
      const Var w0 = weight[2 * p], w1 = weight[2 * p + 1];
      const Var wsum = tape.add(w0, w1);
      const Var inv = tape.inverse(wsum);
      const Var f0 = tape.matmul(w0, inv);
      const Var f1 = tape.matmul(w1, inv);
      const Var h = tape.interface_basis(leaves[4 * nodes + j], leaves[4 * nodes + inter + j]);
      const Var mix = tape.add(tape.scale(a, f1), tape.scale(b, f0));
      const Var s = tape.matmul(tape.transpose(h), tape.matmul(mix, h));
      const Var q = tape.matmul(h, tape.matmul(tape.inverse(s), tape.transpose(h)));
      const Var d = tape.sub(a, b);
      const Var corr = tape.matmul(d, tape.matmul(q, d));
      const Var lin = tape.add(tape.scale(a, f0), tape.scale(b, f1));
      next[p] = tape.sub(lin, tape.scale(corr, tape.matmul(f0, f1)));
      next_weight[p] = wsum;
    }
    level = std::move(next);
    weight = std::move(next_weight);
  }
  const double denom = sample.target.squaredNorm();
  if (!(denom > 0.0)) throw DataError("zero-norm target stiffness");
  const Var diff = tape.sub(level[0], tape.leaf(sample.target));
  return tape.scale(tape.frob_dot(diff, diff), tape.scalar(1.0 / denom));
}

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient; ///< flat layout of ParameterSet::flatten
};

/// Exact gradient of the batch loss by reverse-mode replay of one tape per
/// sample. Per-sample gradients are reduced in sample order.
inline LossAndGradient gradient(const ParameterSet &params, std::span<const Sample> batch,
                                const Topology &topo) {
  if (batch.empty()) throw UsageError("gradient of an empty batch");
  const std::vector<double> flat = params.flatten();
  std::vector<double> losses(batch.size());
  std::vector<std::vector<double>> grads(batch.size());
  parallel_for(batch.size(), [&](std::size_t k) {
    GradientTape tape;
    std::vector<Var> leaves(flat.size());
    for (std::size_t m = 0; m < flat.size(); ++m) leaves[m] = tape.scalar(flat[m]);
    const Var out = record_sample_error(tape, leaves, topo, batch[k]);
    tape.backward(out);
    losses[k] = tape.scalar_value(out);
    grads[k].resize(flat.size());
    for (std::size_t m = 0; m < flat.size(); ++m) grads[k][m] = tape.scalar_adjoint(leaves[m]);
  });
  LossAndGradient out;
  out.gradient.assign(flat.size(), 0.0);
  const double inv = 1.0 / double(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    out.loss += losses[k] * inv;
    for (std::size_t m = 0; m < flat.size(); ++m) out.gradient[m] += grads[k][m] * inv;
  }
  return out;
}

/// Adam with decoupled weight decay.
class AdamW {
public:
  struct Options {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
  };

  AdamW(std::size_t size, Options options) : opt_(options), m_(size, 0.0), v_(size, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, double(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      m_[k] = opt_.beta1 * m_[k] + (1.0 - opt_.beta1) * grad[k];
      v_[k] = opt_.beta2 * v_[k] + (1.0 - opt_.beta2) * grad[k] * grad[k];
      const double m_hat = m_[k] / bc1;
      const double v_hat = v_[k] / bc2;
      params[k] -= opt_.learning_rate *
                   (m_hat / (std::sqrt(v_hat) + opt_.epsilon) + opt_.weight_decay * params[k]);
    }
  }

private:
  Options opt_;
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

struct TrainConfig {
  int depth = 4;
  int epochs = 200;
  double learning_rate = 1e-3;
  std::size_t batch_size = 20;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  std::size_t validation_count = 100;

  void validate() const {
    if (epochs < 0) throw UsageError("epochs must be non-negative");
    if (learning_rate < 0.0) throw UsageError("learning rate must be non-negative");
    if (batch_size == 0) throw UsageError("batch size must be positive");
    if (weight_decay < 0.0) throw UsageError("weight decay must be non-negative");
  }
};

struct EpochErrors {
  int epoch = 0;
  double train_error = 0.0;
  double val_error = 0.0;
};

struct TrainResult {
  ParameterSet params;
  std::vector<EpochErrors> curves; ///< epoch 0 is the untrained evaluation
};

struct DatasetSplit {
  std::vector<Sample> train;
  std::vector<Sample> validation;
};

/// Seeded shuffle; the last `validation_count` samples form the validation
/// split.
inline DatasetSplit split_dataset(const Dataset &data, std::size_t validation_count, Rng &rng) {
  if (data.samples.size() <= validation_count)
    throw DataError("dataset has " + std::to_string(data.samples.size()) +
                    " samples, not enough for a validation split of " +
                    std::to_string(validation_count));
  std::vector<std::size_t> order(data.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order.begin(), order.end());
  DatasetSplit split;
  const std::size_t n_train = order.size() - validation_count;
  for (std::size_t k = 0; k < order.size(); ++k)
    (k < n_train ? split.train : split.validation).push_back(data.samples[order[k]]);
  return split;
}

using EpochCallback = std::function<void(const EpochErrors &, const ParameterSet &)>;

/// Minibatch AdamW training. When `initial` is empty the parameters are
/// drawn from the config seed.
inline TrainResult train(const Dataset &data, const TrainConfig &config,
                         std::optional<ParameterSet> initial = std::nullopt,
                         const EpochCallback &on_epoch = {}) {
  config.validate();
  Rng rng(config.seed);
  const DatasetSplit split = split_dataset(data, config.validation_count, rng);
  ParameterSet params = initial ? *initial : init_parameters(config.depth, rng);
  params.validate();
  const Topology topo(params.depth);

  TrainResult result;
  const auto record = [&](int epoch) {
    EpochErrors e{epoch, loss(split.train, params, topo),
                  split.validation.empty() ? 0.0 : loss(split.validation, params, topo)};
    if (!std::isfinite(e.train_error) || !std::isfinite(e.val_error))
      throw NumericalError("training diverged at epoch " + std::to_string(epoch));
    result.curves.push_back(e);
    if (on_epoch) on_epoch(e, params);
  };
  record(0);

  AdamW opt(params.size(), {config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  std::vector<double> flat = params.flatten();
  std::vector<std::size_t> order(split.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<Sample> batch;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + config.batch_size); ++k)
        batch.push_back(split.train[order[k]]);
      const LossAndGradient lg = gradient(params, batch, topo);
      if (!std::isfinite(lg.loss)) throw NumericalError("training diverged: non-finite loss");
      opt.step(flat, lg.gradient);
      params.unflatten(flat);
    }
    record(epoch);
  }
  result.params = std::move(params);
  return result;
}

/// Central finite-difference oracle in extended precision for the batch
/// loss, evaluated through the non-tape forward pass.
inline std::vector<double> finite_difference_gradient(const ParameterSet &params,
                                                      std::span<const Sample> batch,
                                                      const Topology &topo) {
  using Ld = long double;
  const std::vector<double> flat = params.flatten();
  std::vector<Ld> x(flat.begin(), flat.end());
  std::vector<Mat6T<Ld>> p1(batch.size()), p2(batch.size()), tgt(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    p1[k] = batch[k].phase1.cast<Ld>();
    p2[k] = batch[k].phase2 ? batch[k].phase2->cast<Ld>() : p1[k];
    tgt[k] = batch[k].target.cast<Ld>();
  }
  const auto eval = [&](const std::vector<Ld> &v) {
    Ld sum = 0;
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const Mat6T<Ld> c =
          homogenize_flat<Ld>(v, topo, p1[k], batch[k].phase2 ? &p2[k] : nullptr);
      sum += (tgt[k] - c).squaredNorm() / tgt[k].squaredNorm();
    }
    return sum / Ld(batch.size());
  };
  std::vector<double> g(flat.size());
  for (std::size_t m = 0; m < flat.size(); ++m) {
    const Ld h = Ld(1e-6) * std::max(Ld(1), std::abs(x[m]));
    std::vector<Ld> plus = x, minus = x;
    plus[m] += h;
    minus[m] -= h;
    g[m] = double((eval(plus) - eval(minus)) / (2 * h));
  }
  return g;
}

/// Largest relative difference between two gradients. Entries much
/// smaller than the largest reference component are compared against
/// 1e-3 of that component instead of their own magnitude.
inline double max_relative_error(std::span<const double> g, std::span<const double> reference) {
  if (g.size() != reference.size()) throw UsageError("gradient sizes differ");
  double scale = 0.0;
  for (double x : reference) scale = std::max(scale, std::abs(x));
  double worst = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double denom = std::max(std::abs(reference[k]), 1e-3 * scale);
    if (denom > 0.0) worst = std::max(worst, std::abs(g[k] - reference[k]) / denom);
    else worst = std::max(worst, std::abs(g[k]));
  }
  return worst;
}

struct GradCheckResult {
  double max_error = 0.0;
  std::vector<double> per_point;
};

/// Tape gradient against the finite-difference oracle at random parameter
/// points, on a batch from a random teacher of the same depth.
inline GradCheckResult gradient_check(int depth, int points, std::size_t batch_size, std::uint64_t seed) {
  if (points < 1) throw UsageError("gradcheck needs at least one point");
  if (batch_size == 0) throw UsageError("gradcheck needs a non-empty batch");
  Rng rng(seed);
  const Topology topo(depth);
  const ParameterSet teacher = init_parameters(depth, rng);
  const Dataset data = synthesize_teacher_dataset(teacher, PhaseMode::two_phase, batch_size, rng);
  GradCheckResult out;
  for (int k = 0; k < points; ++k) {
    const ParameterSet p = init_parameters(depth, rng);
    const auto tape = gradient(p, data.samples, topo);
    const auto fd = finite_difference_gradient(p, data.samples, topo);
    out.per_point.push_back(max_relative_error(tape.gradient, fd));
    out.max_error = std::max(out.max_error, out.per_point.back());
  }
  return out;
}

} // namespace odmn
