#include <gtest/gtest.h>

#include "facecloak/probe.hpp"

namespace fc = facecloak;

namespace {

TEST(Probe, ProtectedBeatsCleanByWideMargin) {
  const fc::ToyWorld world = fc::make_toy_world(7);
  const fc::ProbeReport r = fc::transferability_probe(world, 100);
  EXPECT_FALSE(r.wide_confidence);
  EXPECT_GT(r.tau, 0.0);
  EXPECT_LE(r.clean_psr, 8.0);  // calibrated floor, ~1% plus binomial noise
  EXPECT_GE(r.protected_psr, r.clean_psr + 20.0);
}

TEST(Probe, CleanStaysNearFloorAcrossWorlds) {
  for (uint64_t seed : {1ull, 42ull}) {
    const fc::ToyWorld world = fc::make_toy_world(seed);
    const fc::ProbeReport r = fc::transferability_probe(world, 50);
    EXPECT_LE(r.clean_psr, 10.0) << "world " << seed;
    EXPECT_GT(r.protected_psr, r.clean_psr) << "world " << seed;
  }
}

TEST(Probe, AllFrozenMaskScoresExactlyLikeClean) {
  const fc::ToyWorld world = fc::make_toy_world(7);
  fc::ProbeOptions opt;
  opt.attack.mask.flags.assign(world.opt.layers, 0);
  const fc::ProbeReport r = fc::transferability_probe(world, 30, opt);
  EXPECT_DOUBLE_EQ(r.protected_psr, r.clean_psr);
}

TEST(Probe, DeterministicAcrossCalls) {
  const fc::ToyWorld world = fc::make_toy_world(11);
  const fc::ProbeReport a = fc::transferability_probe(world, 25);
  const fc::ProbeReport b = fc::transferability_probe(world, 25);
  EXPECT_DOUBLE_EQ(a.tau, b.tau);
  EXPECT_DOUBLE_EQ(a.clean_psr, b.clean_psr);
  EXPECT_DOUBLE_EQ(a.protected_psr, b.protected_psr);
}

TEST(Probe, ReportsHoldoutModel) {
  const fc::ToyWorld world = fc::make_toy_world(7);
  const fc::ProbeReport r = fc::transferability_probe(world, 20);
  EXPECT_EQ(r.holdout_model, world.embedders.back().spec().model_id);
  EXPECT_EQ(r.n_runs, 20);
}

TEST(Probe, TooFewRunsRejected) {
  const fc::ToyWorld world = fc::make_toy_world(7);
  EXPECT_THROW(fc::transferability_probe(world, 19), fc::Error);
}

}  // namespace
