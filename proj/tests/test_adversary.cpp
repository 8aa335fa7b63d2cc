#include <gtest/gtest.h>

#include "v2g/adversary.hpp"

using namespace v2g;
using namespace v2g::adversary;

namespace {

AttackScenario small(AttackKind kind, std::string variant, std::uint64_t seed = 3) {
  AttackScenario s;
  s.kind = kind;
  s.variant = std::move(variant);
  s.seed = seed;
  switch (kind) {
    case AttackKind::MitmRelay: s.trials = s.variant == "forge" ? 300 : 5; break;
    case AttackKind::LedgerCorrelation: s.seeds = 3; break;
    default: s.trials = 4;
  }
  return s;
}

const std::vector<AttackKind> kAllKinds = {
    AttackKind::MitmRelay,        AttackKind::ReplayM1,           AttackKind::LedgerCorrelation,
    AttackKind::EvcsTamperParams, AttackKind::EvcsCredentialExtract, AttackKind::EvRefusePay,
    AttackKind::EvFalseMeter,     AttackKind::CrossSessionRelay,
};

ledger::TransactionRecord rec(std::string pid, std::uint32_t slot, std::int64_t wh, std::int64_t micros,
                              SimTime slot_len, SimTime offset = 1000) {
  return {std::move(pid), "evcs-1", slot, Energy::wh(wh), Money::micros(micros), slot * slot_len + offset};
}

}  // namespace

TEST(Adversary, KindNamesRoundtrip) {
  for (auto k : kAllKinds) {
    EXPECT_EQ(parse_attack_kind(to_string(k)), k);
    EXPECT_FALSE(variants_of(k).empty());
  }
  EXPECT_THROW(parse_attack_kind("Nope"), Error);
}

TEST(Adversary, EveryVariantMeetsItsExpectation) {
  for (auto k : kAllKinds) {
    for (const auto& v : variants_of(k)) {
      const auto r = run_scenario(small(k, v));
      EXPECT_TRUE(r.pass) << to_string(k) << "/" << v << ": expected " << r.expected << ", observed "
                          << r.observed;
      EXPECT_EQ(r.variant, v);
    }
  }
}

TEST(Adversary, EmptyVariantSelectsDefault) {
  const auto r = run_scenario(small(AttackKind::ReplayM1, ""));
  EXPECT_EQ(r.variant, variants_of(AttackKind::ReplayM1).front());
}

TEST(Adversary, MitmMetrics) {
  auto passive = run_scenario(small(AttackKind::MitmRelay, "passive"));
  EXPECT_EQ(passive.metric("authenticated"), 5);
  EXPECT_EQ(passive.metric("leaks"), 0);
  EXPECT_GT(passive.metric("tap_frames"), 0);
  EXPECT_GT(passive.metric("secrets_checked"), 0);

  auto modify = run_scenario(small(AttackKind::MitmRelay, "modify_m2"));
  EXPECT_EQ(modify.metric("authenticated"), 0);
  EXPECT_EQ(modify.metric("modified_frames"), 5);

  auto forge = run_scenario(small(AttackKind::MitmRelay, "forge"));
  EXPECT_EQ(forge.metric("attempts"), 300);
  EXPECT_EQ(forge.metric("successes"), 0);
  EXPECT_EQ(forge.metric("fabric_successes"), 0);
}

TEST(Adversary, ReplayRejectsEveryTrial) {
  for (const auto& v : variants_of(AttackKind::ReplayM1)) {
    auto r = run_scenario(small(AttackKind::ReplayM1, v));
    EXPECT_EQ(r.metric("rejected"), r.metric("trials")) << v;
    EXPECT_EQ(r.metric("honest_authenticated"), r.metric("trials")) << v;
  }
}

TEST(Adversary, CredentialExtractionRecoversNoKeys) {
  auto r = run_scenario(small(AttackKind::EvcsCredentialExtract, "capture"));
  EXPECT_EQ(r.metric("private_keys_recovered"), 0);
  EXPECT_GT(r.metric("private_keys_checked"), 0);
  EXPECT_GT(r.metric("pids_seen"), 0);
}

TEST(Adversary, SameSeedSameReport) {
  auto a = run_scenario(small(AttackKind::EvFalseMeter, "under_report", 9));
  auto b = run_scenario(small(AttackKind::EvFalseMeter, "under_report", 9));
  EXPECT_EQ(a.observed, b.observed);
  EXPECT_EQ(a.metrics, b.metrics);
}

TEST(Adversary, MeterOffsetBelowToleranceIsNotDisputed) {
  // A 10 Wh inflation sits inside the 50 Wh tolerance, so no dispute is raised
  // and the scenario's dispute expectation does not hold.
  auto s = small(AttackKind::EvcsTamperParams, "inflate_meter");
  s.magnitude = 0.01;
  EXPECT_FALSE(run_scenario(s).pass);
}

TEST(Linkage, SharedPidDecidesOutright) {
  const SimTime len = 300 * kSecond;
  LinkageInput in;
  in.slot_length = len;
  in.records = {rec("A", 0, 1000, 1'000'000, len), rec("B", 0, 30000, 9'000'000, len),
                // Amounts look like B's, but the pid is A's.
                rec("A", 1, 30000, 9'000'000, len), rec("B", 1, 1000, 1'000'000, len)};
  in.reference = {0, 1};
  EXPECT_EQ(assign_sessions(in), (std::vector<std::size_t>{0, 1, 0, 1}));
}

TEST(Linkage, NearestClusterWithoutSharedPid) {
  const SimTime len = 300 * kSecond;
  LinkageInput in;
  in.slot_length = len;
  in.records = {rec("a0", 0, 1000, 1'000'000, len, 1000), rec("b0", 0, 30000, 9'000'000, len, 200000),
                rec("x1", 1, 29900, 8'900'000, len, 200000), rec("y1", 1, 1100, 1'100'000, len, 1000)};
  in.reference = {0, 1};
  EXPECT_EQ(assign_sessions(in), (std::vector<std::size_t>{0, 1, 1, 0}));
}

TEST(Linkage, OneSessionPerUserPerSlot) {
  const SimTime len = 300 * kSecond;
  LinkageInput in;
  in.slot_length = len;
  in.records = {rec("a0", 0, 1000, 1'000'000, len), rec("b0", 0, 30000, 9'000'000, len),
                rec("x1", 1, 30000, 9'000'000, len), rec("y1", 1, 29000, 8'800'000, len)};
  in.reference = {0, 1};
  const auto owner = assign_sessions(in);
  ASSERT_EQ(owner.size(), 4u);
  EXPECT_NE(owner[2], owner[3]);
}

TEST(Linkage, SingleUserIsAlwaysRight) {
  auto r = measure_linkage(5, 1, 4, 2, false, {});
  EXPECT_DOUBLE_EQ(r.mean_accuracy, 1.0);
  EXPECT_DOUBLE_EQ(r.chance, 1.0);
  EXPECT_EQ(r.per_seed.size(), 2u);
}

TEST(Linkage, ReusedPidsAreFullyLinkable) {
  auto r = measure_linkage(5, 4, 5, 2, true, {});
  EXPECT_DOUBLE_EQ(r.mean_accuracy, 1.0);
}

TEST(Leaks, ContiguousRunOnly) {
  const Bytes secret{1, 2, 3, 4};
  EXPECT_EQ(sim::count_leaks({secret}, {Bytes{9, 1, 2, 3, 4, 9}}), 1u);
  EXPECT_EQ(sim::count_leaks({secret}, {Bytes{1, 2, 3, 9, 4}}), 0u);
  EXPECT_EQ(sim::count_leaks({secret}, {Bytes{1, 2}, Bytes{3, 4}}), 0u);
  EXPECT_EQ(sim::count_leaks({secret, Bytes{7, 7}}, {Bytes{7, 7, 1, 2, 3, 4}}), 2u);
}
