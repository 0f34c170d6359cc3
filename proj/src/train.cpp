#include "scoreaug/train.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "scoreaug/numerics.hpp"
#include "scoreaug/oracle.hpp"

namespace scoreaug {

namespace {

// Fixed stream ids for deriving independent generators from the run seed.
constexpr std::uint64_t kSplitStream = 100;
constexpr std::uint64_t kInitStream = 101;
constexpr std::uint64_t kTrainStream = 102;
constexpr std::uint64_t kEvalStream = 103;
constexpr std::uint64_t kHeldoutStream = 104;
constexpr std::uint64_t kSampleStream = 105;
constexpr std::uint64_t kDropoutStream = 106;

Eigen::VectorXd zero_condition() { return Eigen::VectorXd::Zero(kConditionDim); }

}  // namespace

const char* loss_variant_name(LossVariant v) {
  switch (v) {
    case LossVariant::edm: return "edm";
    case LossVariant::scoreaug: return "scoreaug";
    case LossVariant::scoreaug_nonlinear: return "scoreaug_nonlinear";
  }
  return "?";
}

LossVariant loss_variant_from_name(const std::string& name) {
  if (name == "edm") return LossVariant::edm;
  if (name == "scoreaug") return LossVariant::scoreaug;
  if (name == "scoreaug_nonlinear") return LossVariant::scoreaug_nonlinear;
  throw std::invalid_argument("unknown loss variant: " + name);
}

DenoiserNet::Sample make_training_sample(LossVariant variant, const AugmentationParams& params,
                                         const ImageShape& shape, bool conditioning,
                                         const Eigen::VectorXd& d, const Eigen::VectorXd& n,
                                         double sigma, double sigma_data) {
  DenoiserNet::Sample s;
  s.sigma = sigma;
  s.weight = loss_weight(sigma, sigma_data);
  switch (variant) {
    case LossVariant::edm:
      s.x = d + n;
      s.target = d;
      s.cond = zero_condition();
      return s;
    case LossVariant::scoreaug: {
      if (params.kind == AugKind::smooth_nonlinear) {
        throw std::invalid_argument(
            "scoreaug loss takes linear kinds only; use the nonlinear variant");
      }
      const LinearOperator op = build_operator(params, shape);
      s.x = op.apply(d + n);
      s.target = op.apply(d);
      s.cond = conditioning ? condition_vector(params, shape) : zero_condition();
      return s;
    }
    case LossVariant::scoreaug_nonlinear: {
      if (params.kind == AugKind::smooth_nonlinear) {
        s.x = apply_transform(params, shape, d) + apply_transform(params, shape, n);
        s.target = apply_transform(params, shape, d);
      } else {
        // T(d + n) == T(d) + T(n) exactly for the matrix kinds; share the
        // fused evaluation so the two loss variants agree bit for bit.
        const LinearOperator op = build_operator(params, shape);
        s.x = op.apply(d + n);
        s.target = op.apply(d);
      }
      s.cond = conditioning ? condition_vector(params, shape) : zero_condition();
      return s;
    }
  }
  throw std::logic_error("unreachable");
}

namespace {

double sample_loss(const DenoiserNet& net, const DenoiserNet::Sample& s) {
  const Eigen::VectorXd out = net.forward(s.x, s.sigma, s.cond);
  return s.weight * (out - s.target).squaredNorm();
}

}  // namespace

double edm_loss_sample(const DenoiserNet& net, const Eigen::VectorXd& d,
                       const Eigen::VectorXd& n, double sigma) {
  const ImageShape flat{1, static_cast<int>(d.size()), 1};
  return sample_loss(net, make_training_sample(LossVariant::edm, AugmentationParams{}, flat,
                                               false, d, n, sigma, net.sigma_data()));
}

double scoreaug_loss_sample(const DenoiserNet& net, const Eigen::VectorXd& d,
                            const Eigen::VectorXd& n, double sigma,
                            const AugmentationParams& params, const ImageShape& shape,
                            bool conditioning) {
  return sample_loss(net, make_training_sample(LossVariant::scoreaug, params, shape,
                                               conditioning, d, n, sigma, net.sigma_data()));
}

double scoreaug_nonlinear_loss_sample(const DenoiserNet& net, const Eigen::VectorXd& d,
                                      const Eigen::VectorXd& n, double sigma,
                                      const AugmentationParams& params,
                                      const ImageShape& shape, bool conditioning) {
  return sample_loss(net,
                     make_training_sample(LossVariant::scoreaug_nonlinear, params, shape,
                                          conditioning, d, n, sigma, net.sigma_data()));
}

std::string RunMetrics::to_csv() const {
  std::string out =
      "step,train_loss,heldout_loss,gap,oracle_loss_floor,nn_min,nn_median,nn_max\n";
  char buf[512];
  for (const MetricsRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.step, r.train_loss, r.heldout_loss, r.gap, r.oracle_loss_floor, r.nn_min,
                  r.nn_median, r.nn_max);
    out += buf;
  }
  return out;
}

namespace {

// Averaged EDM loss of a denoiser over n_eval draws; optionally accumulates
// the paired closed-form floor terms lambda * tr Cov on the same draws.
double mc_edm_loss(const DenoiserFn& denoiser, const EmpiricalDataset& ds, int n_eval,
                   double sigma_data, Rng& rng, double* floor_out) {
  const int d = ds.dim();
  const Eigen::VectorXd cond = zero_condition();
  double loss = 0.0;
  double floor = 0.0;
  Eigen::VectorXd noise(d);
  for (int it = 0; it < n_eval; ++it) {
    const int idx = static_cast<int>(rng.uniform_int(0, ds.count() - 1));
    const double sigma = sample_sigma(rng);
    for (int i = 0; i < d; ++i) noise(i) = rng.normal();
    const Eigen::VectorXd x = ds.points.col(idx) + sigma * noise;
    const double lambda = loss_weight(sigma, sigma_data);
    loss += lambda * (denoiser(x, sigma, cond) - ds.points.col(idx)).squaredNorm();
    if (floor_out) floor += lambda * posterior_trace_cov_original(x, sigma, ds);
  }
  if (floor_out) *floor_out = floor / n_eval;
  return loss / n_eval;
}

}  // namespace

GapReport heldout_gap(const DenoiserFn& denoiser, const EmpiricalDataset& train,
                      const EmpiricalDataset& heldout, int n_eval, double sigma_data,
                      std::uint64_t seed) {
  if (train.count() < 1 || heldout.count() < 1) {
    throw std::invalid_argument("heldout_gap: both datasets must be nonempty");
  }
  GapReport rep;
  // Shared draw stream: evaluating the train set against itself gives a gap
  // of exactly zero, and distinct sets are compared with common random numbers.
  Rng rng_train(derive_seed(seed, kEvalStream));
  rep.train_loss = mc_edm_loss(denoiser, train, n_eval, sigma_data, rng_train, nullptr);
  Rng rng_held(derive_seed(seed, kEvalStream));
  rep.heldout_loss = mc_edm_loss(denoiser, heldout, n_eval, sigma_data, rng_held, nullptr);
  rep.gap = rep.heldout_loss - rep.train_loss;
  return rep;
}

NnSummary memorization_distance(const Eigen::MatrixXd& samples, const EmpiricalDataset& ds) {
  if (samples.cols() < 1) throw std::invalid_argument("memorization_distance: no samples");
  NnSummary out;
  out.distances.resize(samples.cols());
  for (int s = 0; s < samples.cols(); ++s) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < ds.count(); ++i) {
      best = std::min(best, (samples.col(s) - ds.points.col(i)).norm());
    }
    out.distances(s) = best;
  }
  std::vector<double> v(out.distances.data(), out.distances.data() + out.distances.size());
  out.min = out.distances.minCoeff();
  out.max = out.distances.maxCoeff();
  out.mean = out.distances.mean();
  out.median = median(v);
  return out;
}

double oracle_loss_floor(const EmpiricalDataset& ds, int n_draws, std::uint64_t seed) {
  Rng rng(seed);
  const int d = ds.dim();
  double floor = 0.0;
  Eigen::VectorXd noise(d);
  for (int it = 0; it < n_draws; ++it) {
    const int idx = static_cast<int>(rng.uniform_int(0, ds.count() - 1));
    const double sigma = sample_sigma(rng);
    for (int i = 0; i < d; ++i) noise(i) = rng.normal();
    const Eigen::VectorXd x = ds.points.col(idx) + sigma * noise;
    floor += loss_weight(sigma, ds.sigma_data) * posterior_trace_cov_original(x, sigma, ds);
  }
  return floor / n_draws;
}

DenoiserFn net_denoiser(const DenoiserNet& net) {
  return [&net](const Eigen::VectorXd& x, double sigma, const Eigen::VectorXd& cond) {
    return net.forward(x, sigma, cond);
  };
}

namespace {

struct EvalContext {
  const TrainConfig& cfg;
  const EmpiricalDataset& train;
  const EmpiricalDataset& heldout;
  const DiffusionSchedule& schedule;
  double floor = 0.0;
};

MetricsRow evaluate(const EvalContext& ctx, const DenoiserNet& eval_net, long step) {
  MetricsRow row;
  row.step = step;
  row.oracle_loss_floor = ctx.floor;
  const DenoiserFn denoiser = net_denoiser(eval_net);
  {
    Rng rng(derive_seed(ctx.cfg.seed, kEvalStream));
    row.train_loss = mc_edm_loss(denoiser, ctx.train, ctx.cfg.eval_draws,
                                 eval_net.sigma_data(), rng, nullptr);
  }
  {
    Rng rng(derive_seed(ctx.cfg.seed, kEvalStream));
    row.heldout_loss = mc_edm_loss(denoiser, ctx.heldout, ctx.cfg.eval_draws,
                                   eval_net.sigma_data(), rng, nullptr);
  }
  row.gap = row.heldout_loss - row.train_loss;
  {
    Rng rng(derive_seed(ctx.cfg.seed, kSampleStream));
    const Eigen::MatrixXd samples = heun_sample(
        denoiser, ctx.cfg.sampler, ctx.schedule, rng, ctx.cfg.metric_samples, ctx.train.shape);
    const NnSummary nn = memorization_distance(samples, ctx.train);
    row.nn_min = nn.min;
    row.nn_median = nn.median;
    row.nn_max = nn.max;
  }
  return row;
}

void write_metrics(const std::filesystem::path& dir, const RunMetrics& metrics) {
  std::FILE* f = std::fopen((dir / "metrics.csv").string().c_str(), "w");
  if (!f) throw std::runtime_error("cannot write metrics.csv");
  const std::string csv = metrics.to_csv();
  std::fwrite(csv.data(), 1, csv.size(), f);
  std::fclose(f);
}

}  // namespace

TrainResult train_run(const TrainConfig& cfg, const DiffusionSchedule& schedule,
                      const EmpiricalDataset& dataset, const EmpiricalDataset* heldout,
                      const std::filesystem::path* out_dir) {
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (cfg.heldout_fraction < 0.0 || cfg.heldout_fraction > 0.5) {
    throw std::invalid_argument("heldout_fraction must lie in [0, 0.5]");
  }
  validate_augmentation_config(cfg.aug, dataset.shape);
  if (cfg.variant == LossVariant::scoreaug) {
    for (AugKind k : cfg.aug.kinds) {
      if (k == AugKind::smooth_nonlinear) {
        throw std::invalid_argument(
            "smooth_nonlinear requires the scoreaug_nonlinear variant");
      }
    }
  }

  // Held-out set: explicit when provided, else an index split of the dataset.
  EmpiricalDataset train_ds = dataset;
  EmpiricalDataset held_ds;
  if (heldout != nullptr && heldout->count() > 0) {
    held_ds = *heldout;
  } else if (cfg.heldout_fraction > 0.0) {
    const int n = dataset.count();
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(cfg.seed, kSplitStream));
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.uniform_int(0, i));
      std::swap(order[i], order[j]);
    }
    const int n_held = static_cast<int>(std::floor(cfg.heldout_fraction * n));
    if (n_held > 0 && n - n_held > 0) {
      Eigen::MatrixXd hp(dataset.dim(), n_held);
      Eigen::MatrixXd tp(dataset.dim(), n - n_held);
      for (int i = 0; i < n_held; ++i) hp.col(i) = dataset.points.col(order[i]);
      for (int i = n_held; i < n; ++i) tp.col(i - n_held) = dataset.points.col(order[i]);
      held_ds = make_dataset(std::move(hp), dataset.shape, dataset.sigma_data);
      train_ds = make_dataset(std::move(tp), dataset.shape, dataset.sigma_data);
    }
  }
  if (held_ds.count() == 0) held_ds = train_ds;  // gap evaluates to ~0 by design

  NetConfig net_cfg = cfg.net;
  net_cfg.data_dim = train_ds.dim();
  DenoiserNet net(net_cfg, train_ds.sigma_data);
  {
    Rng rng(derive_seed(cfg.seed, kInitStream));
    net.init_params(rng);
  }
  Eigen::VectorXd ema = net.params();
  Eigen::VectorXd adam_m = Eigen::VectorXd::Zero(net.param_count());
  Eigen::VectorXd adam_v = Eigen::VectorXd::Zero(net.param_count());
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  const double ema_decay = std::pow(0.5, 1.0 / std::max(cfg.ema_halflife, 1.0));

  EvalContext ctx{cfg, train_ds, held_ds, schedule};
  ctx.floor = oracle_loss_floor(train_ds, std::max(cfg.eval_draws, 10000),
                                derive_seed(cfg.seed, kEvalStream));

  DenoiserNet eval_net = net;
  const auto run_eval = [&](long step) {
    eval_net.params() = ema;
    return evaluate(ctx, eval_net, step);
  };
  const auto persist = [&](std::uint64_t step) {
    if (!out_dir) return;
    Checkpoint ckpt;
    ckpt.net = net_cfg;
    ckpt.sigma_data = train_ds.sigma_data;
    ckpt.step = step;
    ckpt.theta = net.params();
    ckpt.ema = ema;
    ckpt.adam_m = adam_m;
    ckpt.adam_v = adam_v;
    save_checkpoint(*out_dir / "checkpoint.bin", ckpt);
  };

  TrainResult result{net, ema, {}, false, 0};
  result.metrics.rows.push_back(run_eval(0));
  persist(0);

  Rng rng(derive_seed(cfg.seed, kTrainStream));
  Rng dropout_rng(derive_seed(cfg.seed, kDropoutStream));
  const int d = train_ds.dim();
  std::vector<DenoiserNet::Sample> batch(cfg.batch_size);
  Eigen::VectorXd grad(net.param_count());
  Eigen::VectorXd noise(d);

  for (long step = 1; step <= cfg.steps; ++step) {
    // One augmentation per iteration; every variant consumes the same draws
    // so seeded trajectories are comparable across variants.
    const AugmentationParams params = sample_params(rng, cfg.aug, train_ds.shape);
    for (int b = 0; b < cfg.batch_size; ++b) {
      const int idx = static_cast<int>(rng.uniform_int(0, train_ds.count() - 1));
      const double sigma = sample_sigma(rng);
      for (int i = 0; i < d; ++i) noise(i) = rng.normal();
      batch[b] = make_training_sample(cfg.variant, params, train_ds.shape, cfg.conditioning,
                                      train_ds.points.col(idx), sigma * noise, sigma,
                                      train_ds.sigma_data);
    }

    bool ok = true;
    try {
      net.loss_and_grad(batch, grad, cfg.net.dropout > 0.0 ? &dropout_rng : nullptr);
    } catch (const std::runtime_error&) {
      ok = false;
    }
    if (!ok || !grad.allFinite()) {
      result.diverged = true;
      break;
    }

    if (cfg.weight_decay > 0.0) {
      net.params() *= 1.0 - cfg.learning_rate * cfg.weight_decay;
    }
    adam_m = beta1 * adam_m + (1.0 - beta1) * grad;
    adam_v = beta2 * adam_v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double bias1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bias2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    net.params() -=
        (cfg.learning_rate / bias1) *
        (adam_m.array() / ((adam_v.array() / bias2).sqrt() + adam_eps)).matrix();
    ema = ema_decay * ema + (1.0 - ema_decay) * net.params();

    result.last_good_step = step;
    const bool eval_now =
        (cfg.eval_every > 0 && step % cfg.eval_every == 0) || step == cfg.steps;
    if (eval_now) {
      result.metrics.rows.push_back(run_eval(step));
      persist(static_cast<std::uint64_t>(step));
    }
  }

  result.net = net;
  result.ema = ema;
  if (out_dir) write_metrics(*out_dir, result.metrics);
  return result;
}

}  // namespace scoreaug
