#include <gtest/gtest.h>

#include <functional>
#include <random>
#include <sstream>

#include "oracles.hpp"

using namespace poisonscope;

namespace {

DomainRecord buyable(std::string d, std::uint64_t images, std::int64_t cents) {
  return {std::move(d), images, DomainStatus::Buyable, cents};
}

std::vector<DomainRecord> abc() { return {buyable("A", 100, 1000), buyable("B", 150, 2000), buyable("C", 40, 500)}; }

}  // namespace

TEST(RegistrableDomain, Examples) {
  SuffixRules rules(std::vector<std::string>{"co.uk", "com", "uk"});
  EXPECT_EQ(extract_registrable_domain("http://img.example.co.uk/a.jpg", rules), "example.co.uk");
  EXPECT_EQ(extract_registrable_domain("https://example.com/x/y", rules), "example.com");
  EXPECT_EQ(extract_registrable_domain("http://10.0.0.1/a", rules), "10.0.0.1");
  EXPECT_EQ(extract_registrable_domain("http://[2001:db8::1]:8080/a", rules), "[2001:db8::1]");
  EXPECT_THROW(extract_registrable_domain("no scheme", rules), InputError);
}

TEST(RegistrableDomain, HostIsCaseFoldedAndPortStripped) {
  EXPECT_EQ(extract_registrable_domain("HTTP://User@Img.Example.COM:8080/A.jpg", builtin_suffix_rules()), "example.com");
}

TEST(RegistrableDomain, WildcardAndException) {
  const auto& rules = builtin_suffix_rules();
  EXPECT_EQ(rules.size(), 30u);
  EXPECT_EQ(extract_registrable_domain("http://a.b.foo.ck/", rules), "b.foo.ck");
  EXPECT_EQ(extract_registrable_domain("http://www.ck/", rules), "www.ck");
  EXPECT_EQ(extract_registrable_domain("http://co.uk/", rules), "co.uk");
}

TEST(RegistrableDomain, LoadsRuleFile) {
  std::istringstream in("// comment\n\ncom\nco.uk   trailing\n*.kawasaki.jp\n!city.kawasaki.jp\n");
  auto rules = SuffixRules::load(in);
  EXPECT_EQ(rules.size(), 4u);
  EXPECT_EQ(rules.registrable_domain("x.y.kawasaki.jp"), "x.y.kawasaki.jp");
  EXPECT_EQ(rules.registrable_domain("www.city.kawasaki.jp"), "city.kawasaki.jp");
}

TEST(Expiration, Examples) {
  using R = ProbeResult;
  auto probe = [](std::string v, EpochSeconds day, R r) { return ResolverProbe{"d.com", std::move(v), 1 + day * 86400, r}; };
  std::vector<ResolverProbe> four = {probe("a", 0, R::NxDomain), probe("b", 0, R::NxDomain), probe("a", 1, R::NxDomain),
                                     probe("b", 1, R::NxDomain)};
  EXPECT_EQ(classify_expiration(four), ExpirationStatus::Expired);
  four[2].result = R::Resolved;
  EXPECT_EQ(classify_expiration(four), ExpirationStatus::Live);
  four.pop_back();
  four[2].result = R::NxDomain;
  EXPECT_EQ(classify_expiration(four), ExpirationStatus::Inconclusive);
  EXPECT_THROW(classify_expiration({}), InputError);
  std::vector<ResolverProbe> mixed = {probe("a", 0, R::NxDomain), {"e.com", "a", 1, R::NxDomain}};
  EXPECT_THROW(classify_expiration(mixed), InputError);
}

// Every probe multiset of size <= 5 over 3 results x 2 vantages x 2 days.
TEST(Expiration, ExhaustiveEnumeration) {
  std::vector<ResolverProbe> atoms;
  for (auto r : {ProbeResult::Resolved, ProbeResult::NxDomain, ProbeResult::Timeout}) {
    for (std::string v : {"v1", "v2"}) {
      for (EpochSeconds d : {0, 1}) atoms.push_back({"d.com", v, 86400 * (10 + d) + 5, r});
    }
  }
  std::size_t checked = 0;
  std::vector<std::size_t> pick;
  std::function<void(std::size_t)> rec = [&](std::size_t from) {
    if (!pick.empty()) {
      std::vector<ResolverProbe> ps;
      bool any_resolved = false, all_nx = true;
      std::set<std::string> vs;
      std::set<EpochSeconds> ds;
      for (auto i : pick) {
        ps.push_back(atoms[i]);
        any_resolved |= atoms[i].result == ProbeResult::Resolved;
        all_nx &= atoms[i].result == ProbeResult::NxDomain;
        vs.insert(atoms[i].vantage);
        ds.insert(atoms[i].probe_epoch / 86400);
      }
      auto expected = any_resolved ? ExpirationStatus::Live
                      : (all_nx && ps.size() >= 4 && vs.size() >= 2 && ds.size() >= 2) ? ExpirationStatus::Expired
                                                                                      : ExpirationStatus::Inconclusive;
      ASSERT_EQ(classify_expiration(ps), expected);
      ++checked;
    }
    if (pick.size() == 5) return;
    for (std::size_t i = from; i < atoms.size(); ++i) {
      pick.push_back(i);
      rec(i);
      pick.pop_back();
    }
  };
  rec(0);
  EXPECT_EQ(checked, 6187u);
}

TEST(AuditDomains, GroupsByDomain) {
  std::istringstream in(
      "domain,vantage,epoch,result\n"
      "a.com,v1,100,NXDOMAIN\na.com,v2,100,nxdomain\na.com,v1,90000,NXDOMAIN\na.com,v2,90000,NXDOMAIN\n"
      "b.com,v1,100,resolved\nc.com,v1,100,timeout\n");
  auto status = audit_domains(read_probes_csv(in));
  EXPECT_EQ(status.at("a.com"), ExpirationStatus::Expired);
  EXPECT_EQ(status.at("b.com"), ExpirationStatus::Live);
  EXPECT_EQ(status.at("c.com"), ExpirationStatus::Inconclusive);
}

TEST(PlanPurchase, ThreeRecordFixture) {
  auto plan = plan_purchase(abc(), 10'000, 1500);
  ASSERT_EQ(plan.selected.size(), 2u);
  EXPECT_EQ(plan.selected[0].domain, "A");
  EXPECT_EQ(plan.selected[1].domain, "C");
  EXPECT_EQ(plan.controlled_images, 140u);
  EXPECT_EQ(plan.total_cost_cents, 1500);
  EXPECT_DOUBLE_EQ(plan.controlled_fraction, 0.014);
}

TEST(PlanPurchase, EdgeCases) {
  EXPECT_TRUE(plan_purchase(abc(), 10'000, 0).selected.empty());
  EXPECT_DOUBLE_EQ(plan_purchase(abc(), 10'000, 0).controlled_fraction, 0.0);
  std::vector<DomainRecord> one = {buyable("x", 7, 300)};
  EXPECT_DOUBLE_EQ(plan_purchase(one, 100, 300).controlled_fraction, 0.07);
  EXPECT_THROW(plan_purchase(abc(), 10, 1000), InputError);
  EXPECT_THROW(plan_purchase(abc(), 10'000, -1), InputError);
  std::vector<DomainRecord> bad = {{"x", 1, DomainStatus::Buyable, std::nullopt}};
  EXPECT_THROW(plan_purchase(bad, 10, 10), InputError);
  std::vector<DomainRecord> priced_live = {{"x", 1, DomainStatus::Expired, 5}};
  EXPECT_THROW(plan_purchase(priced_live, 10, 10), InputError);
}

TEST(PlanPurchase, IgnoresNonBuyable) {
  auto records = abc();
  records.push_back({"big", 5000, DomainStatus::Expired, std::nullopt});
  records.push_back({"live", 100, DomainStatus::Live, std::nullopt});
  auto plan = plan_purchase(records, 10'000, 100'000);
  EXPECT_EQ(plan.controlled_images, 290u);
}

TEST(PlanPurchase, MatchesOracleOnRandomInstances) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<DomainRecord> rs;
    const auto n = rng() % 9;
    for (std::size_t i = 0; i < n; ++i) rs.push_back(buyable("d" + std::to_string(i), 1 + rng() % 5, static_cast<std::int64_t>(rng() % 6)));
    const auto budget = static_cast<std::int64_t>(rng() % 20);
    auto got = plan_purchase(rs, 100, budget);
    auto want = oracle::greedy_with_skip(rs, 100, budget);
    ASSERT_EQ(got.controlled_images, want.controlled_images);
    ASSERT_EQ(got.total_cost_cents, want.total_cost_cents);
    ASSERT_EQ(got.selected.size(), want.selected.size());
    for (std::size_t i = 0; i < got.selected.size(); ++i) ASSERT_EQ(got.selected[i].domain, want.selected[i].domain);
  }
}

TEST(CostCurve, Examples) {
  std::vector<std::int64_t> zero = {0};
  auto c0 = cost_curve(abc(), 10'000, zero);
  ASSERT_EQ(c0.size(), 1u);
  EXPECT_DOUBLE_EQ(c0[0].controlled_fraction, 0.0);
  std::vector<std::int64_t> grid = {1000, 1500};
  auto c = cost_curve(abc(), 10'000, grid);
  EXPECT_DOUBLE_EQ(c[0].controlled_fraction, 0.010);
  EXPECT_DOUBLE_EQ(c[1].controlled_fraction, 0.014);
  std::vector<std::int64_t> bad = {1500, 1000};
  EXPECT_THROW(cost_curve(abc(), 10'000, bad), InputError);
}

TEST(SignatureScan, Rules) {
  std::vector<IndexEntry> es;
  for (std::uint64_t i = 0; i < 3; ++i) es.push_back({i, "http://a.bought.com/" + std::to_string(i), "", {}});
  es.push_back({3, "http://lapsed.com/x", "", {}});
  es.push_back({4, "http://fresh.com/x", "", {}});
  es.push_back({5, "http://nowhois.com/x", "", {}});
  DatasetIndex idx("t", 1000, es);
  using O = VerificationOutcome;
  std::vector<O> v = {O::Modified, O::Modified, O::Modified, O::Modified, O::Intact, O::Modified};
  std::map<std::string, std::optional<EpochSeconds>> whois = {
      {"bought.com", 2000}, {"lapsed.com", 500}, {"fresh.com", 3000}, {"nowhois.com", std::nullopt}};
  auto flagged = attack_signature_scan(idx, v, whois);
  ASSERT_EQ(flagged.size(), 1u);
  EXPECT_EQ(flagged[0].domain, "bought.com");
  EXPECT_EQ(flagged[0].modified_entries, 3u);
  EXPECT_EQ(flagged[0].purchase_epoch, 2000);
}

TEST(SignatureScan, OrderedByCountThenName) {
  std::vector<IndexEntry> es = {{0, "http://b.com/1", "", {}}, {1, "http://a.com/1", "", {}}, {2, "http://c.com/1", "", {}},
                                {3, "http://c.com/2", "", {}}};
  DatasetIndex idx("t", 10, es);
  std::vector<VerificationOutcome> v(4, VerificationOutcome::Modified);
  std::map<std::string, std::optional<EpochSeconds>> whois = {{"a.com", 20}, {"b.com", 20}, {"c.com", 20}};
  auto flagged = attack_signature_scan(idx, v, whois);
  ASSERT_EQ(flagged.size(), 3u);
  EXPECT_EQ(flagged[0].domain, "c.com");
  EXPECT_EQ(flagged[1].domain, "a.com");
  EXPECT_EQ(flagged[2].domain, "b.com");
}

TEST(Amplification, Examples) {
  auto r = amplification(1'000'000, 400'000'000'000'000ULL, {{"cc100-en", 83'300'000'000ULL}});
  EXPECT_EQ(r.upstream_fraction, 2.5e-9);
  EXPECT_NEAR(r.subset_fractions.at("cc100-en"), 1.2e-5, 1e-8);
  EXPECT_EQ(amplification(10, 10, {}).upstream_fraction, 1.0);
  EXPECT_EQ(amplification(20, 10, {}).upstream_fraction, 1.0);
  EXPECT_THROW(amplification(0, 10, {}), InputError);
  EXPECT_THROW(amplification(1, 10, {{"empty", 0}}), InputError);
}

TEST(DomainCsv, ReadsRecords) {
  std::istringstream in("domain,image_count,status,price_cents\nA.com,100,Buyable,1000\nb.com,3,Expired,\n");
  auto rs = read_domain_records_csv(in);
  ASSERT_EQ(rs.size(), 2u);
  EXPECT_EQ(rs[0].domain, "a.com");
  EXPECT_EQ(*rs[0].price_cents, 1000);
  EXPECT_FALSE(rs[1].price_cents);
}
