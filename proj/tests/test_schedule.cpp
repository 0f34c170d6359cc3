#include <doctest.h>

#include <cmath>

#include "scoreaug/rng.hpp"
#include "scoreaug/schedule.hpp"

using namespace scoreaug;

TEST_CASE("VE schedule: s(t)=1 and sigma(t)=sqrt(t) pointwise") {
  const DiffusionSchedule s = make_ve_schedule(0.5);
  for (int i = 0; i <= 100; ++i) {
    const double t = s.t_min + (s.t_max - s.t_min) * i / 100.0;
    CHECK(s.scale(t) == 1.0);
    CHECK(s.sigma(t) == doctest::Approx(std::sqrt(t)).epsilon(1e-15));
  }
}

TEST_CASE("VP schedule satisfies s^2 + s^2 sigma^2 = 1 on a 1000-point grid") {
  const DiffusionSchedule s = make_vp_schedule(0.5);
  for (int i = 0; i <= 1000; ++i) {
    const double t = s.t_min + (s.t_max - s.t_min) * i / 1000.0;
    const double sc = s.scale(t);
    const double sg = s.sigma(t);
    CHECK(std::abs(sc * sc + sc * sc * sg * sg - 1.0) <= 1e-10);
  }
}

TEST_CASE("sigma is strictly increasing") {
  for (const DiffusionSchedule s : {make_ve_schedule(0.5), make_vp_schedule(0.5)}) {
    double prev = s.sigma(s.t_min);
    for (int i = 1; i <= 100; ++i) {
      const double t = s.t_min + (s.t_max - s.t_min) * i / 100.0;
      const double cur = s.sigma(t);
      CHECK(cur > prev);
      prev = cur;
    }
  }
}

TEST_CASE("perturb: zero noise level returns s*x0 exactly") {
  Eigen::VectorXd x0(3), noise(3);
  x0 << 1.0, -2.0, 0.5;
  noise << 9.0, 9.0, 9.0;
  const Eigen::VectorXd out = perturb(x0, 0.0, 0.7, noise);
  CHECK(out == Eigen::VectorXd(0.7 * x0));
}

TEST_CASE("perturb: unit scale and zero data returns sigma*noise") {
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd noise(3);
  noise << 1.0, -1.0, 2.0;
  CHECK(perturb(x0, 0.3, 1.0, noise) == Eigen::VectorXd(0.3 * noise));
}

TEST_CASE("perturb: empirical covariance matches s^2 sigma^2 I") {
  Rng rng(3);
  const double sigma = 0.8, s = 0.6;
  Eigen::VectorXd x0(3);
  x0 << 0.2, -1.0, 0.7;
  const int draws = 100000;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd second = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd noise(3);
  for (int t = 0; t < draws; ++t) {
    for (int i = 0; i < 3; ++i) noise(i) = rng.normal();
    const Eigen::VectorXd x = perturb(x0, sigma, s, noise);
    mean += x;
    second += x.cwiseProduct(x);
  }
  mean /= draws;
  second /= draws;
  const double expect = s * s * sigma * sigma;
  for (int i = 0; i < 3; ++i) {
    const double var = second(i) - mean(i) * mean(i);
    CHECK(std::abs(var - expect) <= 0.02 * expect);
  }
}

TEST_CASE("perturb: antithetic noise pairs average to s*x0 at rounding precision") {
  // Bitwise equality is not achievable: the two sums round independently.
  // The deviation is bounded by one ulp of the dominant term.
  Rng rng(4);
  constexpr double eps = 0x1.0p-52;
  for (int t = 0; t < 20000; ++t) {
    Eigen::VectorXd x0(1), noise(1);
    x0 << rng.normal();
    noise << rng.normal();
    const double sigma = sample_sigma(rng);
    const double s = std::exp(-rng.uniform01());
    const Eigen::VectorXd avg =
        0.5 * (perturb(x0, sigma, s, noise) + perturb(x0, sigma, s, -noise));
    const double scale = std::max(std::abs(s * x0(0)), std::abs(s * sigma * noise(0)));
    CHECK(std::abs(avg(0) - s * x0(0)) <= 2.0 * eps * scale);
  }
}

TEST_CASE("sample_sigma follows ln(sigma) ~ N(-1.2, 1.2^2)") {
  Rng rng(5);
  const int draws = 100000;
  double sum = 0.0, sum_sq = 0.0;
  for (int t = 0; t < draws; ++t) {
    const double sigma = sample_sigma(rng);
    CHECK(sigma > 0.0);
    const double l = std::log(sigma);
    sum += l;
    sum_sq += l * l;
  }
  const double mean = sum / draws;
  const double std = std::sqrt(sum_sq / draws - mean * mean);
  CHECK(std::abs(mean + 1.2) <= 0.02);
  CHECK(std::abs(std - 1.2) <= 0.02);
}

TEST_CASE("loss weight formula") {
  CHECK(loss_weight(0.5, 0.5) == doctest::Approx(8.0).epsilon(1e-15));
  // sigma -> infinity limit is 1/sigma_data^2
  CHECK(std::abs(loss_weight(1e3, 0.5) - 4.0) <= 0.001 * 4.0);
  CHECK_THROWS_AS(loss_weight(0.0, 0.5), std::invalid_argument);
}

TEST_CASE("EDM design identity: lambda(sigma) * c_out(sigma)^2 = 1") {
  const double sigma_data = 0.73;
  for (int i = 0; i <= 200; ++i) {
    const double sigma = std::pow(10.0, -3.0 + 6.0 * i / 200.0);
    const double product =
        loss_weight(sigma, sigma_data) * std::pow(preconditioning(sigma, sigma_data).c_out, 2);
    CHECK(std::abs(product - 1.0) <= 1e-12);
  }
}

TEST_CASE("preconditioning coefficients") {
  SUBCASE("zero-noise limit: c_skip -> 1, c_out -> 0") {
    const Preconditioning p = preconditioning(1e-6, 0.5);
    CHECK(p.c_skip == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(std::abs(p.c_out) <= 1e-5);
  }
  SUBCASE("definition identity c_skip * (sigma^2 + sigma_data^2) = sigma_data^2") {
    for (int i = 0; i <= 100; ++i) {
      const double sigma = std::pow(10.0, -2.0 + 4.0 * i / 100.0);
      const Preconditioning p = preconditioning(sigma, 0.5);
      CHECK(std::abs(p.c_skip * (sigma * sigma + 0.25) - 0.25) <= 1e-15);
    }
  }
  SUBCASE("hand-computed values at sigma = sigma_data = 0.5") {
    const Preconditioning p = preconditioning(0.5, 0.5);
    CHECK(p.c_skip == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(p.c_out == doctest::Approx(0.5 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK(p.c_in == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(p.c_noise == doctest::Approx(std::log(0.5) / 4.0).epsilon(1e-15));
  }
  SUBCASE("sigma = 0 rejected") {
    CHECK_THROWS_AS(preconditioning(0.0, 0.5), std::invalid_argument);
  }
}
