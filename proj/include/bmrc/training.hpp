// bmrc -- bidirectional MRC for aspect sentiment triplet extraction
// Joint objective over the three query families, decoupled-weight-decay
// adaptive-moment optimization with linear warmup, and gradient checking.
#pragma once

#include "bmrc/checkpoint.hpp"
#include "bmrc/eval.hpp"

namespace bmrc {

struct LossBreakdown {
  double l_n = 0.0;  // non-restrictive extraction
  double l_r = 0.0;  // restrictive extraction
  double l_s = 0.0;  // sentiment classification
  double total = 0.0;
};

inline LossBreakdown total_loss(double l_n, double l_r, double l_s) {
  return {l_n, l_r, l_s, l_n + l_r + l_s};
}

namespace detail {

constexpr double kLogFloor = 1e-12;

inline double safe_log(double p) { return std::log(std::max(p, kLogFloor)); }

}  // namespace detail

// Summed two-class cross-entropy of start and end indicators against
// predicted probabilities, over instances and sentence tokens.
inline double span_loss(
    const std::vector<std::pair<SpanLabels, TokenSpanProbabilities>>& instances) {
  double total = 0.0;
  for (const auto& [gold, pred] : instances) {
    if (gold.start.size() != pred.p_start.size() || gold.end.size() != pred.p_end.size()) {
      throw DataError("span_loss: label length " + std::to_string(gold.start.size()) +
                      " != prediction length " + std::to_string(pred.p_start.size()));
    }
    for (size_t j = 0; j < gold.start.size(); ++j) {
      total -= gold.start[j] ? detail::safe_log(pred.p_start[j])
                             : detail::safe_log(1.0 - pred.p_start[j]);
      total -= gold.end[j] ? detail::safe_log(pred.p_end[j])
                           : detail::safe_log(1.0 - pred.p_end[j]);
    }
  }
  return total;
}

// Sum of -log(predicted probability of the gold class).
inline double sentiment_loss(
    const std::vector<std::pair<Sentiment, SentimentDistribution>>& instances) {
  double total = 0.0;
  for (const auto& [gold, pred] : instances) {
    total -= detail::safe_log(pred.of(gold));
  }
  return total;
}

struct OptimizerConfig {
  double head_lr = 1e-3;
  double encoder_lr = 1e-5;
  double weight_decay = 0.01;
  double warmup_fraction = 0.1;
  int batch_size = 4;
  int epochs = 40;
  uint64_t seed = 0;

  void validate() const {
    if (head_lr < 0.0 || encoder_lr < 0.0) throw ConfigError("learning rates must be >= 0");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (warmup_fraction < 0.0 || warmup_fraction >= 1.0) {
      throw ConfigError("warmup_fraction must lie in [0, 1)");
    }
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
  }
};

// Adaptive moments with decoupled weight decay; per-group step sizes for
// heads versus encoder. A zero-gradient parameter still shrinks by
// (1 - lr * decay) each step.
class AdamW {
 public:
  explicit AdamW(std::vector<NamedParam> params, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const NamedParam& p : params_) {
      m_.push_back(Eigen::MatrixXd::Zero(p.param->v.rows(), p.param->v.cols()));
      v_.push_back(Eigen::MatrixXd::Zero(p.param->v.rows(), p.param->v.cols()));
    }
  }

  void step(double encoder_lr, double head_lr, double weight_decay) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t i = 0; i < params_.size(); ++i) {
      Eigen::MatrixXd& theta = params_[i].param->v;
      const Eigen::MatrixXd& g = params_[i].param->g;
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
      const double lr = params_[i].head_group ? head_lr : encoder_lr;
      theta.array() -= lr * (m_[i].array() / bc1) /
                       ((v_[i].array() / bc2).sqrt() + eps_);
      theta.array() -= lr * weight_decay * theta.array();
    }
  }

  long steps_taken() const { return t_; }

 private:
  std::vector<NamedParam> params_;
  double beta1_, beta2_, eps_;
  std::vector<Eigen::MatrixXd> m_, v_;
  long t_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  LossBreakdown loss;
  std::array<PRF, 4> dev;  // indexed like kAllMatchModes

  double dev_triplet_f1() const { return dev[3].f1; }
};

inline std::string metrics_log_line(const EpochRecord& r) {
  std::ostringstream out;
  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return std::string(buf);
  };
  out << "epoch " << r.epoch << " l_n " << num(r.loss.l_n) << " l_r " << num(r.loss.l_r)
      << " l_s " << num(r.loss.l_s) << " total " << num(r.loss.total) << " dev_as "
      << num(r.dev[0].f1) << " dev_o " << num(r.dev[1].f1) << " dev_p " << num(r.dev[2].f1)
      << " dev_t " << num(r.dev[3].f1);
  return out.str();
}

struct FitOptions {
  InferenceParams infer;
  DirectionMode direction = DirectionMode::Both;
  // Stop once dev triplet F1 reaches this value (epoch cap still applies).
  std::optional<double> stop_at_dev_triplet_f1;
};

struct FitResult {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;                  // 1-based; 0 if no epoch ran
  std::optional<BmrcModel> best_model; // float32-quantized snapshot
};

// Shuffled mixed-family epochs; batch losses are summed per family and
// the joint objective is their plain sum. Dev triplet F1 is recorded each
// epoch on a float32-quantized snapshot (checkpoint precision) and the
// best-dev snapshot is retained.
inline FitResult fit(BmrcModel& model, const DatasetSplit& train, const DatasetSplit& dev,
                     const OptimizerConfig& opt, const FitOptions& options = {}) {
  opt.validate();
  options.infer.validate();

  std::vector<CompiledInstance> instances;
  for (const AnnotatedSentence& s : train.sentences) {
    for (const SupervisionInstance& inst : derive_supervision(s)) {
      instances.push_back(model.compile(inst, s));
    }
  }
  if (instances.empty()) throw DataError("fit: no supervision instances derived from train");

  const long steps_per_epoch =
      (static_cast<long>(instances.size()) + opt.batch_size - 1) / opt.batch_size;
  const long total_steps = steps_per_epoch * opt.epochs;
  const long warmup_steps = static_cast<long>(opt.warmup_fraction * total_steps);

  std::mt19937_64 rng(opt.seed);
  AdamW optimizer(model.params());
  std::vector<size_t> order(instances.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  FitResult result;
  double best_f1 = -1.0;
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossBreakdown epoch_loss;
    for (size_t base = 0; base < order.size(); base += opt.batch_size) {
      model.zero_grads();
      double batch_total = 0.0;
      for (size_t k = base; k < std::min(order.size(), base + opt.batch_size); ++k) {
        const CompiledInstance& inst = instances[order[k]];
        double l = model.loss_and_backward(inst, RunMode::Train, &rng);
        batch_total += l;
        switch (inst.kind) {
          case QueryKind::NonRestrictive: epoch_loss.l_n += l; break;
          case QueryKind::Restrictive: epoch_loss.l_r += l; break;
          case QueryKind::SentimentCls: epoch_loss.l_s += l; break;
        }
      }
      if (!std::isfinite(batch_total)) {
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) +
                                 ", step " + std::to_string(optimizer.steps_taken() + 1));
      }
      const long step = optimizer.steps_taken() + 1;
      const double warm =
          step <= warmup_steps ? static_cast<double>(step) / warmup_steps : 1.0;
      optimizer.step(opt.encoder_lr * warm, opt.head_lr * warm, opt.weight_decay);
    }
    epoch_loss = total_loss(epoch_loss.l_n, epoch_loss.l_r, epoch_loss.l_s);

    BmrcModel snapshot = model;
    snapshot.quantize_to_f32();
    EpochRecord record;
    record.epoch = epoch;
    record.loss = epoch_loss;
    record.dev = evaluate_split(snapshot, dev, options.infer, options.direction);
    result.epochs.push_back(record);
    if (record.dev_triplet_f1() > best_f1) {
      best_f1 = record.dev_triplet_f1();
      result.best_epoch = epoch;
      result.best_model = std::move(snapshot);
    }
    if (options.stop_at_dev_triplet_f1 && record.dev_triplet_f1() >= *options.stop_at_dev_triplet_f1) {
      break;
    }
  }
  return result;
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  int checked = 0;
};

// Central-difference verification of the analytic gradient of the summed
// loss over `instances`. Samples coordinates round-robin across tensors
// so every parameter group is covered. Runs in eval mode (deterministic).
inline GradCheckResult gradient_check(BmrcModel& model,
                                      const std::vector<CompiledInstance>& instances,
                                      int sample_size, uint64_t seed = 0, double step = 1e-5) {
  model.zero_grads();
  for (const CompiledInstance& inst : instances) {
    model.loss_and_backward(inst, RunMode::Eval);
  }
  auto params = model.params();
  auto loss_sum = [&]() {
    double total = 0.0;
    for (const CompiledInstance& inst : instances) total += model.loss(inst, RunMode::Eval);
    return total;
  };

  // A central difference of the loss resolves gradients only down to
  // ~eps*|L|/(2h) absolute noise; below that scale the relative error is
  // dominated by the probe, not the implementation. Coordinates smaller
  // than the floor are therefore compared on the floor scale, which keeps
  // probe noise under 1e-5 relative.
  const double base_loss = std::abs(loss_sum());
  const double fd_noise = std::numeric_limits<double>::epsilon() * std::max(1.0, base_loss) /
                          (2.0 * step);
  const double scale_floor = std::max(1e-8, fd_noise * 1e5);

  std::mt19937_64 rng(seed);
  GradCheckResult result;
  for (int k = 0; k < sample_size; ++k) {
    NamedParam& p = params[k % params.size()];
    std::uniform_int_distribution<Eigen::Index> row_dist(0, p.param->v.rows() - 1);
    std::uniform_int_distribution<Eigen::Index> col_dist(0, p.param->v.cols() - 1);
    Eigen::Index i = row_dist(rng), j = col_dist(rng);
    const double saved = p.param->v(i, j);
    p.param->v(i, j) = saved + step;
    const double up = loss_sum();
    p.param->v(i, j) = saved - step;
    const double down = loss_sum();
    p.param->v(i, j) = saved;
    const double fd = (up - down) / (2.0 * step);
    const double analytic = p.param->g(i, j);
    const double rel = std::abs(fd - analytic) /
                       std::max({std::abs(fd), std::abs(analytic), scale_floor});
    ++result.checked;
    if (rel > result.max_rel_err) {
      result.max_rel_err = rel;
      result.worst_param = p.name + "(" + std::to_string(i) + "," + std::to_string(j) + ")";
    }
  }
  return result;
}

}  // namespace bmrc
