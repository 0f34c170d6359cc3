#include "scoreaug/verify_suite.hpp"

#include <cmath>
#include <functional>
#include <sstream>

#include "scoreaug/numerics.hpp"
#include "scoreaug/oracle.hpp"
#include "scoreaug/theorem.hpp"

namespace scoreaug {

namespace {

struct Suite {
  const RunConfig& cfg;
  std::string filter;
  std::vector<CheckResult> results;

  bool wants(const std::string& id) const {
    return filter.empty() || id.find(filter) != std::string::npos;
  }

  void run(const std::string& id, double threshold,
           const std::function<void(CheckResult&)>& body) {
    if (!wants(id)) return;
    CheckResult r;
    r.id = id;
    r.threshold = threshold;
    try {
      body(r);
      r.pass = r.rel_err < threshold;
    } catch (const std::exception& e) {
      r.pass = false;
      r.note = e.what();
    }
    results.push_back(r);
  }
};

AugmentationParams brightness_params(double factor) {
  AugmentationParams p;
  p.kind = AugKind::brightness;
  p.brightness = factor;
  return p;
}

AugmentationParams rotation_params(int turns) {
  AugmentationParams p;
  p.kind = AugKind::rotation;
  p.quarter_turns = turns;
  return p;
}

AugmentationParams translation_params(int di, int dj) {
  AugmentationParams p;
  p.kind = AugKind::translation;
  p.shift_i = di;
  p.shift_j = dj;
  return p;
}

AugmentationParams cutout_params(double cx, double cy, int h, int w) {
  AugmentationParams p;
  p.kind = AugKind::cutout;
  p.cut_cx = cx;
  p.cut_cy = cy;
  p.cut_h = h;
  p.cut_w = w;
  return p;
}

Eigen::VectorXd random_vector(Rng& rng, int d) {
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v(i) = rng.normal();
  return v;
}

Eigen::MatrixXd parse_matrix_spec(const std::string& spec) {
  std::vector<std::vector<double>> rows;
  std::stringstream row_stream(spec);
  std::string row_text;
  while (std::getline(row_stream, row_text, ';')) {
    std::vector<double> row;
    std::stringstream cell(row_text);
    double v;
    while (cell >> v) row.push_back(v);
    if (!row.empty()) rows.push_back(row);
  }
  if (rows.empty()) throw std::invalid_argument("empty linear_map spec");
  Eigen::MatrixXd t(rows.size(), rows[0].size());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) {
      throw std::invalid_argument("ragged linear_map spec");
    }
    for (size_t j = 0; j < rows[i].size(); ++j) t(i, j) = rows[i][j];
  }
  return t;
}

// Equivariance D(Tx; sigma, w) = T D(x; sigma) for invertible linear T.
void check_equivariance(CheckResult& r, const EmpiricalDataset& ds,
                        const AugmentationParams& params, std::uint64_t seed, int trials) {
  const LinearOperator op = build_operator(params, ds.shape);
  const AugmentedOracle oracle(ds, op);
  Rng rng(seed);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const double sigma = std::exp(rng.uniform(-2.0, 1.5));
    const Eigen::VectorXd x =
        ds.points.col(static_cast<int>(rng.uniform_int(0, ds.count() - 1))) +
        sigma * random_vector(rng, ds.dim());
    const Eigen::VectorXd lhs = oracle.denoise(op.apply(x), sigma);
    const Eigen::VectorXd rhs = op.apply(optimal_denoiser(x, sigma, ds));
    worst = std::max(worst, relative_error(lhs, rhs));
  }
  r.m = ds.dim();
  r.n = ds.dim();
  r.work = trials;
  r.rel_err = worst;
  r.abs_err = worst;
}

// score_aug against finite differences of log_density_aug along Im(T).
void check_score_consistency(CheckResult& r, const EmpiricalDataset& ds,
                             const AugmentationParams& params, std::uint64_t seed) {
  const LinearOperator op = build_operator(params, ds.shape);
  const AugmentedOracle oracle(ds, op);
  Rng rng(seed);
  const double sigma = 0.5;
  const Eigen::VectorXd x0 =
      ds.points.col(static_cast<int>(rng.uniform_int(0, ds.count() - 1)));
  const Eigen::VectorXd y = op.apply(x0 + sigma * random_vector(rng, ds.dim()));

  const Eigen::VectorXd score = oracle.score(y, sigma);
  const Eigen::MatrixXd& basis = oracle.support_basis();
  const double h = 1e-5;
  Eigen::VectorXd fd = Eigen::VectorXd::Zero(ds.dim());
  for (int k = 0; k < oracle.rank(); ++k) {
    const Eigen::VectorXd dir = basis.col(k);
    const double fp = oracle.log_density(y + h * dir, sigma);
    const double fm = oracle.log_density(y - h * dir, sigma);
    fd += ((fp - fm) / (2.0 * h)) * dir;
  }
  r.m = oracle.rank();
  r.n = ds.dim();
  r.sigma = sigma;
  r.abs_err = (score - fd).norm();
  r.rel_err = relative_error(score, fd);
}

}  // namespace

std::vector<CheckResult> run_verification_suite(const std::string& filter,
                                                const RunConfig& cfg) {
  Suite suite{cfg, filter, {}};
  const std::uint64_t seed = cfg.verify_seed;
  const long n_mc = cfg.verify_n_mc;

  const EmpiricalDataset glyphs = generate_glyphs8(16, derive_seed(seed, 1));
  const EmpiricalDataset gmm = generate_gmm2d(8, derive_seed(seed, 2));

  // --- equivariance of the augmented optimal denoiser (invertible T) ---
  suite.run("equivariance_brightness", 1e-8, [&](CheckResult& r) {
    check_equivariance(r, glyphs, brightness_params(1.7), derive_seed(seed, 10), 100);
  });
  suite.run("equivariance_rotation", 1e-8, [&](CheckResult& r) {
    check_equivariance(r, glyphs, rotation_params(1), derive_seed(seed, 11), 100);
  });

  // --- augmented score against the augmented log density, all four kinds ---
  suite.run("score_consistency_brightness", 1e-4, [&](CheckResult& r) {
    check_score_consistency(r, glyphs, brightness_params(0.6), derive_seed(seed, 20));
  });
  suite.run("score_consistency_translation", 1e-4, [&](CheckResult& r) {
    check_score_consistency(r, glyphs, translation_params(2, -1), derive_seed(seed, 21));
  });
  suite.run("score_consistency_cutout", 1e-4, [&](CheckResult& r) {
    check_score_consistency(r, glyphs, cutout_params(0.4, 0.6, 3, 4), derive_seed(seed, 22));
  });
  suite.run("score_consistency_rotation", 1e-4, [&](CheckResult& r) {
    check_score_consistency(r, glyphs, rotation_params(3), derive_seed(seed, 23));
  });

  // --- Theorem 1, linear surjection ---
  const double mc_threshold = 3.0 / std::sqrt(static_cast<double>(n_mc));
  suite.run("theorem_linear_identity", 1e-6, [&](CheckResult& r) {
    Rng rng(derive_seed(seed, 30));
    const Eigen::VectorXd y = gmm.points.col(0) + 0.5 * random_vector(rng, 2);
    const VerifyReport rep = verify_linear_surjection(Eigen::MatrixXd::Identity(2, 2), gmm,
                                                      0.5, y, 1000, rng);
    r.m = rep.m; r.n = rep.n; r.sigma = rep.sigma; r.work = rep.work;
    r.abs_err = rep.abs_err; r.rel_err = rep.rel_err;
  });
  suite.run("theorem_linear_projection", mc_threshold, [&](CheckResult& r) {
    Rng rng(derive_seed(seed, 31));
    Eigen::MatrixXd proj(1, 2);
    proj << 1.0, 0.0;
    Eigen::MatrixXd pts(2, 3);
    pts << -1.0, 0.3, 1.2,
            0.5, -0.7, 0.1;
    const EmpiricalDataset three = make_dataset(pts, ImageShape{1, 2, 1});
    Eigen::VectorXd y(1);
    y << 0.4;
    const VerifyReport rep = verify_linear_surjection(proj, three, 0.7, y, n_mc, rng);
    r.m = rep.m; r.n = rep.n; r.sigma = rep.sigma; r.work = rep.work;
    r.abs_err = rep.abs_err; r.rel_err = rep.rel_err;
  });
  suite.run("theorem_linear_orthogonal", mc_threshold, [&](CheckResult& r) {
    Rng rng(derive_seed(seed, 32));
    Eigen::MatrixXd rot(2, 2);
    const double c = std::cos(0.6), s = std::sin(0.6);
    rot << c, -s, s, c;
    const Eigen::VectorXd y = rot * (gmm.points.col(1) + 0.4 * random_vector(rng, 2));
    const VerifyReport rep = verify_linear_surjection(rot, gmm, 0.6, y, n_mc, rng);
    r.m = rep.m; r.n = rep.n; r.sigma = rep.sigma; r.work = rep.work;
    r.abs_err = rep.abs_err; r.rel_err = rep.rel_err;
  });
  suite.run("theorem_linear_wide", mc_threshold, [&](CheckResult& r) {
    Rng rng(derive_seed(seed, 33));
    Eigen::MatrixXd wide(2, 3);
    wide << 1.0, 0.4, -0.2,
            0.0, 1.1, 0.5;
    Eigen::MatrixXd pts(3, 2);
    pts << 0.4, -0.6,
           -0.2, 0.8,
           0.9, 0.1;
    const EmpiricalDataset ds3 = make_dataset(pts, ImageShape{1, 3, 1});
    const Eigen::VectorXd y = wide * (ds3.points.col(0) + 0.5 * random_vector(rng, 3));
    const VerifyReport rep = verify_linear_surjection(wide, ds3, 0.6, y, n_mc, rng);
    r.m = rep.m; r.n = rep.n; r.sigma = rep.sigma; r.work = rep.work;
    r.abs_err = rep.abs_err; r.rel_err = rep.rel_err;
  });
  if (!cfg.verify_linear_map.empty()) {
    suite.run("theorem_linear_custom", mc_threshold, [&](CheckResult& r) {
      const Eigen::MatrixXd t = parse_matrix_spec(cfg.verify_linear_map);
      Rng rng(derive_seed(seed, 34));
      Eigen::MatrixXd pts = Eigen::MatrixXd::Random(t.cols(), 3);
      const EmpiricalDataset ds = make_dataset(pts, ImageShape{1, static_cast<int>(t.cols()), 1});
      const Eigen::VectorXd y = t * (ds.points.col(0) + 0.5 * random_vector(rng, t.cols()));
      const VerifyReport rep = verify_linear_surjection(t, ds, 0.6, y, n_mc, rng);
      r.m = rep.m; r.n = rep.n; r.sigma = rep.sigma; r.work = rep.work;
      r.abs_err = rep.abs_err; r.rel_err = rep.rel_err;
    });
  }

  // --- Theorem 1, diffeomorphism ---
  suite.run("theorem_diffeo_identity", 1e-6, [&](CheckResult& r) {
    Eigen::VectorXd y(2);
    y << 0.3, -0.4;
    const VerifyReport rep = verify_diffeomorphism(make_tanh_diffeo(2, 0.0), gmm, 0.5, y);
    r.m = rep.m; r.n = rep.n; r.sigma = rep.sigma;
    r.abs_err = rep.abs_err; r.rel_err = rep.rel_err;
  });
  suite.run("theorem_diffeo_1d", 1e-3, [&](CheckResult& r) {
    Eigen::MatrixXd pts(1, 1);
    pts << 0.8;
    const EmpiricalDataset one = make_dataset(pts, ImageShape{1, 1, 1});
    Eigen::VectorXd y(1);
    y << 0.25;
    const VerifyReport rep = verify_diffeomorphism(make_tanh_diffeo(1, 0.5), one, 0.6, y);
    r.m = rep.m; r.n = rep.n; r.sigma = rep.sigma;
    r.abs_err = rep.abs_err; r.rel_err = rep.rel_err;
  });
  suite.run("theorem_diffeo_2d", 1e-3, [&](CheckResult& r) {
    Eigen::MatrixXd pts(2, 4);
    pts << -0.9, 0.4, 1.1, 0.0,
            0.3, -0.8, 0.5, 1.0;
    const EmpiricalDataset four = make_dataset(pts, ImageShape{1, 2, 1});
    Eigen::VectorXd y(2);
    y << 0.4, -0.2;
    const VerifyReport rep = verify_diffeomorphism(make_tanh_diffeo(2, 0.3), four, 0.5, y);
    r.m = rep.m; r.n = rep.n; r.sigma = rep.sigma;
    r.abs_err = rep.abs_err; r.rel_err = rep.rel_err;
  });

  // --- Theorem 1, general projection-of-diffeo ---
  suite.run("theorem_general_reduction", 1e-2, [&](CheckResult& r) {
    Eigen::VectorXd y(1);
    y << 0.3;
    const VerifyReport rep = verify_general(make_projected_tanh(2, 1, 0.0), gmm, 0.6, y, 512);
    r.m = rep.m; r.n = rep.n; r.sigma = rep.sigma; r.work = rep.work;
    r.abs_err = rep.abs_err; r.rel_err = rep.rel_err;
  });
  suite.run("theorem_general_2d", 1e-2, [&](CheckResult& r) {
    Eigen::MatrixXd pts(2, 2);
    pts << -0.7, 0.9,
            0.4, -0.5;
    const EmpiricalDataset two = make_dataset(pts, ImageShape{1, 2, 1});
    Eigen::VectorXd y(1);
    y << 0.2;
    const VerifyReport rep = verify_general(make_projected_tanh(2, 1, 0.3), two, 0.6, y, 512);
    r.m = rep.m; r.n = rep.n; r.sigma = rep.sigma; r.work = rep.work;
    r.abs_err = rep.abs_err; r.rel_err = rep.rel_err;
  });
  suite.run("theorem_general_3d", 1e-2, [&](CheckResult& r) {
    Eigen::MatrixXd pts(3, 2);
    pts << 0.5, -0.4,
           -0.3, 0.6,
           0.2, -0.1;
    const EmpiricalDataset two = make_dataset(pts, ImageShape{1, 3, 1});
    Eigen::VectorXd y(2);
    y << 0.3, -0.2;
    const VerifyReport rep = verify_general(make_projected_tanh(3, 2, 0.3), two, 0.7, y, 256);
    r.m = rep.m; r.n = rep.n; r.sigma = rep.sigma; r.work = rep.work;
    r.abs_err = rep.abs_err; r.rel_err = rep.rel_err;
  });

  // --- divergence identity ---
  suite.run("divergence_identity_linear", 1e-12, [&](CheckResult& r) {
    Eigen::MatrixXd t(2, 3);
    t << 1.0, 0.5, -0.3,
         0.2, 1.4, 0.6;
    Eigen::VectorXd x(3);
    x << 0.4, -0.7, 0.2;
    const DivergenceReport rep = divergence_identity_check(make_linear_map(t), x);
    r.m = 2; r.n = 3;
    r.abs_err = rep.max_abs_err;
    r.rel_err = rep.max_abs_err;  // both sides are exactly zero
  });
  suite.run("divergence_identity_diffeo", 1e-3, [&](CheckResult& r) {
    Eigen::VectorXd x(2);
    x << 0.6, -0.3;
    const DivergenceReport rep = divergence_identity_check(make_tanh_diffeo(2, 0.5), x);
    r.m = 2; r.n = 2;
    r.abs_err = rep.max_abs_err;
    r.rel_err = rep.max_abs_err;  // criterion is on max_abs_err
  });
  suite.run("divergence_identity_projection", 1e-3, [&](CheckResult& r) {
    Eigen::VectorXd x(3);
    x << 0.2, -0.5, 0.8;
    const DivergenceReport rep = divergence_identity_check(make_projected_tanh(3, 2, 0.4), x);
    r.m = 2; r.n = 3;
    r.abs_err = rep.max_abs_err;
    r.rel_err = rep.max_abs_err;
  });

  // --- oracle invariants ---
  suite.run("oracle_support_membership", 1e-6, [&](CheckResult& r) {
    const LinearOperator op = build_operator(cutout_params(0.5, 0.5, 4, 4), glyphs.shape);
    const AugmentedOracle oracle(glyphs, op);
    Rng rng(derive_seed(seed, 50));
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      const double sigma = std::exp(rng.uniform(-2.0, 1.0));
      const Eigen::VectorXd y = op.apply(glyphs.points.col(t % glyphs.count()) +
                                         sigma * random_vector(rng, glyphs.dim()));
      const Eigen::VectorXd den = oracle.denoise(y, sigma);
      worst = std::max(worst, oracle.support_distance(den) / std::max(den.norm(), 1.0));
    }
    r.n = glyphs.dim(); r.work = 50;
    r.abs_err = worst; r.rel_err = worst;
  });
  suite.run("oracle_score_orthogonality", 1e-10, [&](CheckResult& r) {
    const LinearOperator op = build_operator(cutout_params(0.3, 0.7, 3, 5), glyphs.shape);
    const AugmentedOracle oracle(glyphs, op);
    Rng rng(derive_seed(seed, 51));
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      const double sigma = std::exp(rng.uniform(-1.5, 1.0));
      const Eigen::VectorXd y =
          op.apply(glyphs.points.col(t % glyphs.count()) + sigma * random_vector(rng, glyphs.dim()));
      const Eigen::VectorXd score = oracle.score(y, sigma);
      const Eigen::VectorXd off = score - oracle.support_projector() * score;
      worst = std::max(worst, off.norm());
    }
    r.n = glyphs.dim(); r.work = 50;
    r.abs_err = worst; r.rel_err = worst;
  });
  suite.run("oracle_convexity_weights", 1e-12, [&](CheckResult& r) {
    const LinearOperator op = build_operator(brightness_params(1.4), glyphs.shape);
    const AugmentedOracle oracle(glyphs, op);
    Rng rng(derive_seed(seed, 52));
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      const double sigma = std::exp(rng.uniform(-2.0, 1.0));
      const Eigen::VectorXd y =
          op.apply(glyphs.points.col(t % glyphs.count()) + sigma * random_vector(rng, glyphs.dim()));
      const Eigen::VectorXd w = oracle.posterior_weights(y, sigma);
      worst = std::max(worst, std::abs(w.sum() - 1.0));
      worst = std::max(worst, std::max(-w.minCoeff(), w.maxCoeff() - 1.0));
    }
    r.n = glyphs.dim(); r.work = 50;
    r.abs_err = worst; r.rel_err = worst;
  });
  suite.run("oracle_logdensity_normalization", 1e-3, [&](CheckResult& r) {
    const LinearOperator op = build_operator(AugmentationParams{}, gmm.shape);
    const AugmentedOracle oracle(gmm, op);
    const double sigma = 0.8;
    const int res = 400;
    const double lo = -10.0, hi = 10.0;
    const double step = (hi - lo) / res;
    double mass = 0.0;
    Eigen::VectorXd p(2);
    for (int i = 0; i < res; ++i) {
      p(0) = lo + (i + 0.5) * step;
      for (int j = 0; j < res; ++j) {
        p(1) = lo + (j + 0.5) * step;
        mass += std::exp(oracle.log_density(p, sigma));
      }
    }
    mass *= step * step;
    r.n = 2; r.sigma = sigma; r.work = res;
    r.abs_err = std::abs(mass - 1.0);
    r.rel_err = r.abs_err;
  });
  suite.run("oracle_rotation_symmetrization", 1e-12, [&](CheckResult& r) {
    // ScoreAug loss with uniform rotations and no conditioning, oracle built
    // on the rotation-closed union vs the original set; the union oracle is
    // the objective's minimizer so its averaged loss cannot be larger.
    const EmpiricalDataset base = generate_glyphs8(6, derive_seed(seed, 53));
    std::vector<LinearOperator> rots;
    for (int k = 0; k < 4; ++k) rots.push_back(build_operator(rotation_params(k), base.shape));

    Eigen::MatrixXd union_pts(base.dim(), base.count() * 4);
    for (int k = 0; k < 4; ++k) {
      for (int i = 0; i < base.count(); ++i) {
        union_pts.col(k * base.count() + i) = rots[k].apply(base.points.col(i));
      }
    }
    const EmpiricalDataset sym = make_dataset(union_pts, base.shape, base.sigma_data);

    std::vector<AugmentedOracle> orig_oracles, union_oracles;
    for (int k = 0; k < 4; ++k) {
      orig_oracles.emplace_back(base, rots[k]);
      union_oracles.emplace_back(sym, rots[k]);
    }

    Rng rng(derive_seed(seed, 54));
    double loss_orig = 0.0, loss_union = 0.0;
    const int draws = 10000;
    for (int t = 0; t < draws; ++t) {
      const int k = static_cast<int>(rng.uniform_int(0, 3));
      const int idx = static_cast<int>(rng.uniform_int(0, base.count() - 1));
      const double sigma = sample_sigma(rng);
      const Eigen::VectorXd noise = random_vector(rng, base.dim());
      const Eigen::VectorXd target = rots[k].apply(base.points.col(idx));
      const Eigen::VectorXd y = rots[k].apply(base.points.col(idx) + sigma * noise);
      const double lambda = loss_weight(sigma, base.sigma_data);
      loss_orig += lambda * (orig_oracles[k].denoise(y, sigma) - target).squaredNorm();
      loss_union += lambda * (union_oracles[k].denoise(y, sigma) - target).squaredNorm();
    }
    loss_orig /= draws;
    loss_union /= draws;
    r.n = base.dim(); r.work = draws;
    r.abs_err = std::max(loss_union - loss_orig, 0.0);
    r.rel_err = (loss_union - loss_orig) / loss_orig;  // pass iff union <= original
    r.note = "union<=original";
  });

  return suite.results;
}

void write_verification_csv(std::ostream& out, const std::vector<CheckResult>& results) {
  out << "case,m,n,sigma,work,abs_err,rel_err,threshold,pass,note\n";
  char buf[256];
  for (const CheckResult& r : results) {
    std::snprintf(buf, sizeof(buf), "%.6g,%.6g,%.6g", r.abs_err, r.rel_err, r.threshold);
    out << r.id << ',' << r.m << ',' << r.n << ',' << r.sigma << ',' << r.work << ',' << buf
        << ',' << (r.pass ? "pass" : "fail") << ',' << r.note << "\n";
  }
}

}  // namespace scoreaug
