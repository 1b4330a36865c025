#include <gtest/gtest.h>

#include <cstdlib>
#include <stdexcept>
#include <vector>

#include "fpbetter/bound.hpp"
#include "fpbetter/eval.hpp"
#include "fpbetter/parallel.hpp"
#include "test_util.hpp"

using namespace fpb;
using fpb::test_support::mlp_spec;

namespace {

struct ThreadCount {
  explicit ThreadCount(const char* n) { ::setenv("FPBETTER_NUM_THREADS", n, 1); }
  ~ThreadCount() { ::unsetenv("FPBETTER_NUM_THREADS"); }
};

struct Results {
  std::vector<double> losses;
  double robust = 0;
  double intensity = 0;
};

Results run_all() {
  const NetworkSpec spec = mlp_spec(2, 8, 3, 2);
  const ParameterSet p = build_network(spec, 2);
  const Dataset data = make_blobs(300, 2, {{1, 1}, {-1, -1}}, 0.5, 3);
  const AttackConfig attack{0.3, 0.1, 3, AttackInit::uniform, false, 0, 1};
  Results r;
  r.losses = per_example_losses(spec, p, data, Scaling::none(), 64);
  r.robust = robust_accuracy(spec, p, data, attack, 4, Scaling::none(), 64);
  r.intensity = layerwise_intensity(spec, p, data, attack, MaskMode::full, {}, 64).intensity;
  return r;
}

}  // namespace

TEST(Parallel, WorkerCountFromEnvironment) {
  {
    ThreadCount t("3");
    EXPECT_EQ(worker_count(), 3u);
  }
  {
    ThreadCount t("junk");
    EXPECT_EQ(worker_count(), 1u);
  }
  EXPECT_EQ(worker_count(), 1u);
}

TEST(Parallel, EveryIndexRunsOnce) {
  ThreadCount t("4");
  std::vector<int> hits(37, 0);
  parallel_for(hits.size(), [&](std::size_t i) { ++hits[i]; });
  for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(Parallel, ExceptionsPropagate) {
  ThreadCount t("2");
  EXPECT_THROW(parallel_for(4, [](std::size_t i) {
                 if (i == 3) throw std::runtime_error("boom");
               }),
               std::runtime_error);
}

TEST(Parallel, ResultsIndependentOfThreadCount) {
  Results one, two;
  {
    ThreadCount t("1");
    one = run_all();
  }
  {
    ThreadCount t("2");
    two = run_all();
  }
  ASSERT_EQ(one.losses.size(), two.losses.size());
  for (std::size_t i = 0; i < one.losses.size(); ++i) EXPECT_EQ(one.losses[i], two.losses[i]);
  EXPECT_EQ(one.robust, two.robust);
  EXPECT_EQ(one.intensity, two.intensity);
}
