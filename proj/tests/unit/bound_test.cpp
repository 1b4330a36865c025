#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fpbetter/bound.hpp"
#include "fpbetter/error.hpp"
#include "test_util.hpp"

using namespace fpb;
using fpb::test_support::mlp_spec;

namespace {

// The privacy formula evaluated independently in long double.
long double reference_epsilon(long double e0, long double T, long double N, long double dp) {
  return e0 * std::sqrt(2.0L * T * std::log(N / dp)) + T * e0 * (std::exp(e0) - 1.0L);
}

// Laplace(0, b) by inverse CDF.
double laplace_draw(Rng& rng, double b) {
  const double u = rng.uniform() - 0.5;
  return -b * (u < 0 ? -1.0 : 1.0) * std::log1p(-2.0 * std::abs(u));
}

}  // namespace

TEST(Epsilon0, HandArithmetic) {
  const std::vector<double> r = {2.0, 2.0};
  EXPECT_NEAR(epsilon0(r, 1.0, 100.0, 0.1), 0.8, 1e-15);
  const std::vector<double> with_one = {2.0, 1.0, 2.0};
  EXPECT_EQ(epsilon0(with_one, 1.0, 100.0, 0.1), epsilon0(r, 1.0, 100.0, 0.1));
  const std::vector<double> ones(5, 1.0);
  EXPECT_DOUBLE_EQ(epsilon0(ones, 3.0, 50.0, 0.2), 2.0 * 3.0 / (50.0 * 0.2));
}

TEST(Epsilon0, RemovingAFactorAtLeastOneNeverIncreases) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> r(1 + rng.below(8));
    for (double& v : r) v = rng.uniform(0.2, 3.0);
    const double full = epsilon0(r, 1.0, 1000.0, 0.5);
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (r[i] < 1.0) continue;
      std::vector<double> fewer = r;
      fewer.erase(fewer.begin() + static_cast<std::ptrdiff_t>(i));
      EXPECT_LE(epsilon0(fewer, 1.0, 1000.0, 0.5), full);
    }
  }
}

TEST(Epsilon0, DomainErrors) {
  const std::vector<double> r = {1.0};
  EXPECT_THROW(epsilon0(r, 1.0, 0.0, 0.1), DomainError);
  EXPECT_THROW(epsilon0(r, 1.0, 10.0, 0.0), DomainError);
  EXPECT_THROW(epsilon0(r, 1.0, 10.0, -1.0), DomainError);
  const std::vector<double> bad = {std::nan("")};
  EXPECT_THROW(epsilon0(bad, 1.0, 10.0, 0.1), DomainError);
}

TEST(PrivacyEpsilon, MatchesHighPrecisionOracle) {
  const PrivacyLoss p = privacy_epsilon(0.01, 100, 1000, 1e-3);
  const long double ref = reference_epsilon(0.01L, 100.0L, 1000.0L, 1e-3L);
  EXPECT_NEAR(p.epsilon, static_cast<double>(ref), 1e-12);
  EXPECT_NEAR(p.epsilon, 0.5357, 1e-3);
  EXPECT_EQ(p.delta, 1e-3 / 1000.0);
  EXPECT_DOUBLE_EQ(p.delta, 1e-6);
}

TEST(PrivacyEpsilon, ZeroLeak) {
  const PrivacyLoss p = privacy_epsilon(0.0, 50, 200, 1e-2);
  EXPECT_EQ(p.epsilon, 0.0);
  EXPECT_EQ(p.delta, 1e-2 / 200.0);
}

TEST(PrivacyEpsilon, StrictlyIncreasingInEps0) {
  double previous = -1.0;
  for (int i = 0; i < 10; ++i) {
    const double e0 = 0.001 * (i + 1) * (i + 1);
    const double e = privacy_epsilon(e0, 100, 1000, 1e-3).epsilon;
    EXPECT_GT(e, previous);
    EXPECT_NEAR(e, static_cast<double>(reference_epsilon(e0, 100, 1000, 1e-3L)), 1e-12 * std::max(1.0, e));
    previous = e;
  }
}

TEST(PrivacyEpsilon, DomainErrors) {
  EXPECT_THROW(privacy_epsilon(0.1, 0.5, 100, 1e-3), DomainError);
  EXPECT_THROW(privacy_epsilon(0.1, 10, 100, 0.0), DomainError);
  EXPECT_THROW(privacy_epsilon(0.1, 10, 100, 100.0), DomainError);
}

TEST(GeneralizationBound, HandArithmetic) {
  EXPECT_NEAR(generalization_bound(0.0, 0.0, 1.0, 100.0, std::exp(-1.0), 1.0), 0.1, 1e-15);
  EXPECT_NEAR(generalization_bound(0.0, 0.0, 5.0, 400.0, 0.05, 2.0),
              2.0 * std::sqrt(std::log(1.0 / 0.05) / 400.0), 1e-15);
}

TEST(GeneralizationBound, MonotoneGrids) {
  const std::vector<double> eps = {0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0};
  const std::vector<double> deltas = {0.0, 1e-6, 1e-3, 0.1, 0.5};
  for (double d : deltas) {
    double previous = -1.0;
    for (double e : eps) {
      const double v = generalization_bound(e, d, 1.0, 1000.0, 0.05);
      EXPECT_GE(v, previous);
      previous = v;
    }
  }
  for (double e : eps) {
    double previous = -1.0;
    for (double d : deltas) {
      const double v = generalization_bound(e, d, 1.0, 1000.0, 0.05);
      EXPECT_GE(v, previous);
      previous = v;
    }
  }
  double previous = -1.0;
  for (double m : {0.0, 0.5, 1.0, 2.0, 10.0}) {
    const double v = generalization_bound(0.3, 1e-4, m, 1000.0, 0.05);
    EXPECT_GE(v, previous);
    previous = v;
  }
}

TEST(GeneralizationBound, DomainErrors) {
  EXPECT_THROW(generalization_bound(0.1, 0.0, 1.0, 100.0, 0.0), DomainError);
  EXPECT_THROW(generalization_bound(0.1, 0.0, 1.0, 100.0, 1.0), DomainError);
  EXPECT_THROW(generalization_bound(-0.1, 0.0, 1.0, 100.0, 0.5), DomainError);
  EXPECT_THROW(generalization_bound(0.1, 0.0, 1.0, 0.5, 0.5), DomainError);
}

TEST(LaplaceScale, RecoversKnownScale) {
  Rng rng(17);
  std::vector<std::vector<double>> samples(10000, std::vector<double>(1));
  for (auto& s : samples) s[0] = laplace_draw(rng, 0.5);
  const std::vector<double> center = {0.0};
  EXPECT_NEAR(laplace_scale(samples, center), 0.5, 0.05);
}

TEST(LaplaceScale, IdenticalSamplesGiveZeroAndScaleEquivariance) {
  const std::vector<double> center = {1.0, -2.0};
  const std::vector<std::vector<double>> same(5, center);
  EXPECT_EQ(laplace_scale(same, center), 0.0);

  Rng rng(3);
  std::vector<std::vector<double>> s(50, std::vector<double>(2));
  for (auto& v : s) {
    v[0] = rng.uniform(-1, 1);
    v[1] = rng.uniform(-1, 1);
  }
  auto doubled = s;
  for (auto& v : doubled) {
    v[0] *= 2;
    v[1] *= 2;
  }
  const std::vector<double> c2 = {2.0, -4.0};
  EXPECT_DOUBLE_EQ(laplace_scale(doubled, c2), 2.0 * laplace_scale(s, center));
}

TEST(EstimateLaplaceB, NeedsTwoBatches) {
  const NetworkSpec spec = mlp_spec(2, 4, 1, 2);
  const Dataset data = make_blobs(10, 2, {{1, 1}, {-1, -1}}, 0.1, 0);
  const AttackConfig attack{0.1, 0.125, 1, AttackInit::uniform, false, 0, 1};
  EXPECT_THROW(estimate_laplace_b(spec, build_network(spec, 1), data, 4, 1, attack), DomainError);
  EXPECT_GT(estimate_laplace_b(spec, build_network(spec, 1), data, 4, 3, attack), 0.0);
}

TEST(Intensity, ZeroBudgetGivesUnitRatios) {
  const NetworkSpec spec = mlp_spec(2, 8, 2, 2);
  const ParameterSet p = build_network(spec, 4);
  const Dataset data = make_blobs(40, 2, {{1, 1}, {-1, -1}}, 0.3, 5);
  const AttackConfig attack{0.0, 0.1, 1, AttackInit::uniform, false, 0, 1};
  const IntensityReport r = layerwise_intensity(spec, p, data, attack, MaskMode::full, {}, 16);
  EXPECT_EQ(r.batches, 5u);
  EXPECT_EQ(r.intensity, 1.0);
  for (const auto& l : r.layers) {
    EXPECT_EQ(l.ratio, 1.0) << l.layer;
    EXPECT_EQ(l.status, LayerStatus::ok);
  }
  EXPECT_FALSE(r.scope.empty());
}

TEST(Intensity, LayersDroppedEverywhereGetUnitRatio) {
  const NetworkSpec spec = mlp_spec(2, 8, 3, 2);
  const ParameterSet p = build_network(spec, 4);
  const Dataset data = make_blobs(40, 2, {{1, 1}, {-1, -1}}, 0.3, 5);
  const AttackConfig attack{0.2, 0.25, 1, AttackInit::zero, false, 0, 1};
  // Block 1 never survives; the others always do.
  const std::vector<double> survival = {1.0, 0.0, 1.0};
  const IntensityReport r = layerwise_intensity(spec, p, data, attack, MaskMode::subnetwork, survival, 16);
  const auto groups = layer_groups(spec, p);
  ASSERT_EQ(groups.size(), r.layers.size());
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (groups[i].branch_of_block == 1) {
      EXPECT_EQ(r.layers[i].ratio, 1.0);
      EXPECT_EQ(r.layers[i].status, LayerStatus::dropped);
      ++dropped;
    } else {
      EXPECT_EQ(r.layers[i].status, LayerStatus::ok);
    }
  }
  EXPECT_EQ(dropped, 2u);
}

TEST(Intensity, HandCheckedLinearModel) {
  // f(x) = w x with squared loss (w x - y)^2 at w = 1.5 and two points.
  // dL/dw = 2 x (w x - y); the FGSM point moves x by eps * sign(2 w (w x - y)).
  const double w = 1.5, eps = 0.1;
  const double xs[2] = {1.0, -0.5}, ys[2] = {1.0, 0.5};
  std::vector<BatchGradientNorms> batches;
  for (int i = 0; i < 2; ++i) {
    const double r = w * xs[i] - ys[i];
    const double xa = xs[i] + eps * (r > 0 ? 1.0 : -1.0);
    BatchGradientNorms b;
    b.clean = {std::abs(2 * xs[i] * r)};
    b.adversarial = {std::abs(2 * xa * (w * xa - ys[i]))};
    b.active = {true};
    b.clean_total = b.clean[0];
    b.adversarial_total = b.adversarial[0];
    batches.push_back(b);
  }
  // Point 1: clean 2*1*0.5 = 1.0, adversarial 2*1.1*0.65 = 1.43.
  // Point 2: clean 2*0.5*1.25 = 1.25, adversarial 2*0.6*1.4 = 1.68.
  const IntensityReport r = intensity_from_norms({"w"}, batches);
  EXPECT_NEAR(r.layers[0].clean_norm, 1.25, 1e-12);
  EXPECT_NEAR(r.layers[0].adversarial_norm, 1.68, 1e-12);
  EXPECT_NEAR(r.layers[0].ratio, 1.68 / 1.25, 1e-12);
  EXPECT_NEAR(r.intensity, 1.68 / 1.25, 1e-12);
}

TEST(Intensity, ZeroCleanNormIsUndefined) {
  BatchGradientNorms b;
  b.clean = {0.0, 1.0};
  b.adversarial = {0.5, 2.0};
  b.active = {true, true};
  b.clean_total = 1.0;
  b.adversarial_total = 2.0;
  const IntensityReport r = intensity_from_norms({"a", "b"}, {b});
  EXPECT_EQ(r.layers[0].status, LayerStatus::undefined);
  EXPECT_TRUE(std::isnan(r.layers[0].ratio));
  EXPECT_EQ(r.layers[1].ratio, 2.0);

  BoundInputs in;
  in.samples = 100;
  in.iterations = 10;
  in.laplace_b = 0.1;
  in.intensity = r;
  EXPECT_THROW(compute_bound(in), DomainError);
  in.exclude_undefined = true;
  const BoundReport rep = compute_bound(in);
  EXPECT_EQ(rep.factors_used, 1u);
  EXPECT_NEAR(rep.epsilon0, 2.0 * 1.0 / (100 * 0.1) * 2.0, 1e-15);
}

TEST(ComputeBound, ComposesTheFormulas) {
  BoundInputs in;
  in.samples = 1000;
  in.iterations = 100;
  in.delta_prime = 1e-3;
  in.laplace_b = 2.0;
  in.l_erm = 1.0;
  in.intensity.layers = {{"a", 1, 1, 1.0, LayerStatus::ok}, {"b", 1, 1, 10.0, LayerStatus::ok}};
  const BoundReport r = compute_bound(in);
  EXPECT_NEAR(r.epsilon0, 0.01, 1e-15);
  EXPECT_NEAR(r.epsilon, static_cast<double>(reference_epsilon(0.01L, 100, 1000, 1e-3L)), 1e-12);
  EXPECT_DOUBLE_EQ(r.delta, 1e-6);
  EXPECT_DOUBLE_EQ(r.bound, generalization_bound(r.epsilon, r.delta, 1.0, 1000, 0.05, 1.0));
  const std::string text = format_bound_report(r);
  EXPECT_NE(text.find("epsilon0 = "), std::string::npos);
  EXPECT_NE(text.find("universal constant"), std::string::npos);
}
