#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"

using namespace poisonscope;

TEST(LogParse, CsvWithMalformedRows) {
  std::istringstream in(
      "epoch,client_key,url,user_agent,status\n"
      "1600000000,c1,http://a.com/x.jpg,curl/7,200\n"
      "notanumber,c1,http://a.com/x.jpg,curl/7,200\n"
      "1600000001,c2,\"http://a.com/y,z.jpg\",,404\n"
      "1600000002,c3\n");
  auto log = parse_log(in);
  ASSERT_EQ(log.records.size(), 2u);
  EXPECT_EQ(log.malformed, 2u);
  EXPECT_EQ(log.records[1].url, "http://a.com/y,z.jpg");
  EXPECT_EQ(log.records[1].user_agent, "");
  EXPECT_EQ(log.records[1].status, 404);
}

TEST(LogParse, CombinedFormatWithVhost) {
  std::istringstream in(
      "img.own0.com:80 203.0.113.5 - - [10/Oct/2022:13:55:36 +0000] \"GET /0.jpg HTTP/1.1\" 200 2326 \"-\" "
      "\"img2dataset\"\n"
      "198.51.100.1 - - [10/Oct/2022:13:55:37 +0100] \"GET http://x.org/a HTTP/1.0\" 404 0\n"
      "garbage line\n");
  auto log = parse_log(in);
  ASSERT_EQ(log.records.size(), 2u);
  EXPECT_EQ(log.malformed, 1u);
  EXPECT_EQ(log.records[0].url, "http://img.own0.com/0.jpg");
  EXPECT_EQ(log.records[0].client_key, "203.0.113.5");
  EXPECT_EQ(log.records[0].user_agent, "img2dataset");
  EXPECT_EQ(log.records[0].epoch, 1665410136);
  EXPECT_EQ(log.records[1].epoch, 1665410137 - 3600);
  EXPECT_EQ(log.records[1].user_agent, "");
  std::istringstream none("nothing here\n");
  EXPECT_THROW(parse_log(none), InputError);
}

TEST(LogCsv, RoundTrip) {
  auto t = oracle::make_traffic(1, 100);
  std::stringstream ss;
  write_log_csv(ss, t.records);
  auto back = parse_log(ss);
  EXPECT_EQ(back.malformed, 0u);
  EXPECT_EQ(back.records, t.records);
}

TEST(OwnedUrls, DomainMatching) {
  auto t = oracle::make_traffic(1, 0);
  OwnedUrlSet owned(t.index, t.domains);
  EXPECT_EQ(owned.size(), 1000u);
  EXPECT_EQ(owned.required_domains().size(), 6u);
  EXPECT_EQ(owned.owning_domain("http://deep.img.own3.com/a"), "own3.com");
  EXPECT_FALSE(owned.owning_domain("http://notown3.com/a"));
  EXPECT_THROW(OwnedUrlSet(t.index, {"nowhere.net"}), InputError);
  EXPECT_THROW(OwnedUrlSet(t.index, {}), InputError);
}

TEST(Detect, PlantedCrawlersExactly) {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto t = oracle::make_traffic(seed);
    OwnedUrlSet owned(t.index, t.domains);
    auto sessions = detect_downloads(t.records, owned);
    std::set<std::string> found;
    for (const auto& s : sessions) {
      found.insert(s.client_key);
      auto rc = oracle::recount(t, s);
      EXPECT_EQ(s.recall, rc.recall);
      EXPECT_EQ(s.precision, rc.precision);
      EXPECT_TRUE(s.ordered);
      EXPECT_EQ(s.dataset_name, "synthetic");
    }
    EXPECT_EQ(found, t.planted);
    EXPECT_EQ(sessions.size(), t.planted.size());
  }
}

TEST(Detect, InclusiveBoundary) {
  auto t = oracle::make_traffic(4);
  OwnedUrlSet owned(t.index, t.domains);
  auto sessions = detect_downloads(t.records, owned);
  auto it = std::find_if(sessions.begin(), sessions.end(), [](const auto& s) { return s.client_key == "planted-4"; });
  ASSERT_NE(it, sessions.end());
  EXPECT_EQ(it->precision, 0.5);
  EXPECT_EQ(it->recall, 1.0);
}

TEST(Detect, ScannerOfOneDomainIsNotADownload) {
  auto t = oracle::make_traffic(5, 0);
  for (std::size_t i = 0; i < 1000; i += 6) t.records.push_back({1'700'000'000 + static_cast<EpochSeconds>(i), "scanner", oracle::owned_url(i), "x", 200});
  OwnedUrlSet owned(t.index, t.domains);
  for (const auto& s : detect_downloads(t.records, owned)) EXPECT_NE(s.client_key, "scanner");
}

TEST(Detect, SessionGapSplits) {
  auto t = oracle::make_traffic(6, 0);
  OwnedUrlSet owned(t.index, t.domains);
  DetectOptions tight;
  tight.session_gap = 0;
  EXPECT_TRUE(detect_downloads(t.records, owned, tight).empty());
}

TEST(Detect, PermutationInvariant) {
  auto t = oracle::make_traffic(7, 3000);
  OwnedUrlSet owned(t.index, t.domains);
  auto base = detect_downloads(t.records, owned);
  std::mt19937_64 rng(1);
  for (int k = 0; k < 3; ++k) {
    std::shuffle(t.records.begin(), t.records.end(), rng);
    auto again = detect_downloads(t.records, owned);
    ASSERT_EQ(again.size(), base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
      EXPECT_EQ(again[i].client_key, base[i].client_key);
      EXPECT_EQ(again[i].t_start, base[i].t_start);
      EXPECT_EQ(again[i].recall, base[i].recall);
    }
  }
}

TEST(Detect, ThresholdMonotone) {
  auto t = oracle::make_traffic(8, 2000);
  OwnedUrlSet owned(t.index, t.domains);
  std::size_t prev = std::numeric_limits<std::size_t>::max();
  for (double r = 0.5; r <= 1.0; r += 0.05) {
    DetectOptions o;
    o.recall_threshold = r;
    auto n = detect_downloads(t.records, owned, o).size();
    EXPECT_LE(n, prev);
    prev = n;
  }
  prev = std::numeric_limits<std::size_t>::max();
  for (double p = 0.1; p <= 1.0; p += 0.1) {
    DetectOptions o;
    o.precision_threshold = p;
    auto n = detect_downloads(t.records, owned, o).size();
    EXPECT_LE(n, prev);
    prev = n;
  }
}

TEST(Spearman, Basics) {
  std::vector<double> x = {1, 2, 3, 4}, up = {10, 20, 30, 40}, down = {4, 3, 2, 1}, flat = {5, 5, 5, 5};
  EXPECT_DOUBLE_EQ(spearman(x, up), 1.0);
  EXPECT_DOUBLE_EQ(spearman(x, down), -1.0);
  EXPECT_EQ(spearman(x, flat), 0.0);
}

TEST(UserAgents, SharesAndNoneBucket) {
  std::vector<AccessRecord> rs;
  for (int i = 0; i < 77; ++i) rs.push_back({1 + i, "c", "http://a/", "img2dataset", 200});
  for (int i = 0; i < 23; ++i) rs.push_back({1 + i, "c", "http://a/", "", 200});
  auto s = user_agent_summary(rs);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].agent, "img2dataset");
  EXPECT_DOUBLE_EQ(s[0].fraction, 0.77);
  EXPECT_EQ(s[1].agent, "(none)");
  EXPECT_EQ(s[1].requests, 23u);
}

TEST(Timeline, OrderedOwnedOnly) {
  auto t = oracle::make_traffic(9, 500);
  OwnedUrlSet owned(t.index, t.domains);
  auto tl = timeline_export(t.records, t.index, owned);
  std::size_t expect = 0;
  for (const auto& r : t.records) expect += owned.find(r.url) != nullptr;
  EXPECT_EQ(tl.size(), expect);
  for (std::size_t i = 1; i < tl.size(); ++i) ASSERT_LE(tl[i - 1].epoch, tl[i].epoch);
  std::ostringstream out;
  write_timeline_csv(out, std::vector<TimelinePoint>{});
  EXPECT_EQ(out.str(), "epoch,entry_ordinal,client_key\n");
}
