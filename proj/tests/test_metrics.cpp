#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include "extax/errors.hpp"
#include "extax/metrics.hpp"
#include "extax/numerics/rng.hpp"
#include "extax/taxonomy.hpp"
#include "oracles.hpp"

using namespace extax;

TEST_CASE("hand-computed example") {
  const std::vector<int> gold{1, 1, 1, 0};
  const std::vector<int> pred{1, 1, 0, 0};
  const MetricReport r = compute_metrics(pred, gold);
  CHECK(r.n == 4);
  CHECK(r.accuracy == 0.75);
  CHECK(r.per_class[kLabelFake].f1 == doctest::Approx(0.8));
  CHECK(r.per_class[kLabelReal].f1 == doctest::Approx(2.0 / 3.0));
  CHECK(std::abs(r.macro_f1 - 11.0 / 15.0) < 1e-15);
  CHECK(std::abs(r.macro_recall - 5.0 / 6.0) < 1e-15);
  CHECK(r.per_class[kLabelFake].support == 3);
  CHECK(r.to_json().find("\"macro_f1\"") != std::string::npos);
  CHECK(r.to_text().find("fake") != std::string::npos);
}

TEST_CASE("second hand example") {
  const std::vector<int> gold{1, 1, 0, 0};
  const std::vector<int> pred{1, 0, 0, 0};
  const MetricReport r = compute_metrics(pred, gold);
  CHECK(std::abs(r.macro_f1 - 11.0 / 15.0) < 1e-10);
  CHECK(r.per_class[kLabelFake].recall == 0.5);
  CHECK(r.per_class[kLabelReal].precision == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("random label vectors agree with the brute-force oracle exactly") {
  Rng rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    const double skew = rng.uniform();
    std::vector<int> pred(n), gold(n);
    for (std::size_t i = 0; i < n; ++i) {
      gold[i] = rng.uniform() < skew;
      pred[i] = rng.uniform() < 0.5;
    }
    const MetricReport r = compute_metrics(pred, gold);
    const oracle::BinaryScores o = oracle::binary_scores(pred, gold);
    CHECK(r.accuracy == o.accuracy);
    CHECK(r.macro_f1 == o.macro_f1);
    CHECK(r.macro_recall == o.macro_recall);

    // Renaming the classes leaves macro scores unchanged.
    std::vector<int> sp(n), sg(n);
    for (std::size_t i = 0; i < n; ++i) {
      sp[i] = 1 - pred[i];
      sg[i] = 1 - gold[i];
    }
    const MetricReport s = compute_metrics(sp, sg);
    CHECK(std::abs(s.macro_f1 - r.macro_f1) < 1e-15);
    CHECK(std::abs(s.macro_recall - r.macro_recall) < 1e-15);
  }
}

TEST_CASE("degenerate inputs") {
  const std::vector<int> ones(10, 1);
  const MetricReport r = compute_metrics(ones, ones);
  CHECK(r.macro_recall == 0.5);
  CHECK(r.macro_f1 == 0.5);
  CHECK(r.per_class[kLabelReal].precision == 0.0);
  const std::vector<int> a{0, 1}, b{0};
  CHECK_THROWS_AS(compute_metrics(a, b), LengthMismatch);
  CHECK_THROWS_AS(compute_metrics({}, {}), EmptyInput);
  const std::vector<int> bad{0, 2};
  CHECK_THROWS_AS(compute_metrics(bad, a), ValidationError);
  CHECK(label_name(kLabelFake) == "fake");
  CHECK(label_name(kLabelReal) == "real");
}

TEST_CASE("confusion counts") {
  const std::vector<int> gold{1, 0, 1, 0, 1};
  const std::vector<int> pred{1, 1, 0, 0, 1};
  const ConfusionCounts c = confusion(pred, gold, kLabelFake);
  CHECK(c.tp == 2);
  CHECK(c.fp == 1);
  CHECK(c.fn == 1);
  CHECK(c.tn == 1);
  CHECK(c.total() == 5);
  const ClassMetrics empty = class_metrics({});
  CHECK(empty.precision == 0.0);
  CHECK(empty.recall == 0.0);
  CHECK(empty.f1 == 0.0);
}

TEST_CASE("attribute distribution") {
  std::vector<TaxVector> profiles(4);
  profiles[0][0] = 0.9;
  profiles[1][0] = 0.2;
  profiles[2][0] = 0.5;
  profiles[3][16] = 0.7;
  const std::vector<int> gold{1, 1, 0, 0};
  const AttributeDistribution d = attribute_distribution(profiles, gold);
  CHECK(d.n_fake == 2);
  CHECK(d.n_real == 2);
  CHECK(d.fake_rate[0] == 0.5);
  CHECK(d.real_rate[0] == 0.5);
  CHECK(d.real_rate[16] == 0.5);
  CHECK(d.fake_rate[16] == 0.0);
  CHECK(d.to_json(TaxonomySchema::builtin()).find("Attack on Reputation") != std::string::npos);
}

TEST_CASE("co-occurrence flows use the Cartesian product with None") {
  const TaxonomySchema& schema = TaxonomySchema::builtin();
  Rng rng(5);
  std::vector<TaxVector> profiles(200);
  std::vector<int> gold(200);
  std::size_t expected_units = 0;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    std::size_t product = 1;
    for (Facet f : kFacets) {
      std::size_t active = 0;
      for (std::size_t c = 0; c < facet_size(f); ++c) {
        const double v = rng.uniform() < 0.25 ? 0.8 : 0.1;
        profiles[i][facet_offset(f) + c] = v;
        active += v >= 0.5;
      }
      product *= std::max<std::size_t>(active, 1);
    }
    expected_units += product;
    gold[i] = static_cast<int>(rng.below(2));
  }
  const auto flows = cooccurrence_flows(profiles, gold, schema);
  std::size_t units = 0;
  for (std::size_t i = 0; i < flows.size(); ++i) {
    units += flows[i].count;
    CHECK(flows[i].count > 0);
    if (i > 0) {
      const auto& a = flows[i - 1];
      const auto& b = flows[i];
      CHECK(std::tie(a.persuasion, a.emotion, a.role, a.label) <
            std::tie(b.persuasion, b.emotion, b.role, b.label));
    }
  }
  CHECK(units == expected_units);

  std::vector<TaxVector> one(1);
  one[0][facet_offset(Facet::Emotion)] = 0.9;
  one[0][facet_offset(Facet::Emotion) + 1] = 0.9;
  const std::vector<int> g{1};
  const auto f = cooccurrence_flows(one, g, schema);
  REQUIRE(f.size() == 2);
  CHECK(f[0].persuasion == "None");
  CHECK(f[0].emotion == "Anger");
  CHECK(f[1].emotion == "Fear");
  CHECK(f[1].role == "None");
  CHECK(flows_to_csv(f) ==
        "persuasion,emotion,role,label,count\nNone,Anger,None,fake,1\nNone,Fear,None,fake,1\n");
  CHECK_THROWS_AS(cooccurrence_flows(one, g, schema, 0.0), DomainError);
  CHECK_THROWS_AS(cooccurrence_flows(one, std::vector<int>{}, schema), LengthMismatch);
}

TEST_CASE("mean and sample standard deviation") {
  const std::vector<double> xs{0.8, 0.9, 1.0};
  const MeanStd m = mean_std(xs);
  CHECK(std::abs(m.mean - 0.9) < 1e-15);
  CHECK(std::abs(m.std - 0.1) < 1e-15);
  const std::vector<double> one{0.7};
  CHECK(mean_std(one).std == 0.0);
}

TEST_CASE("seed table") {
  const std::vector<int> gold{1, 1, 1, 0};
  SplitReports a, b;
  a.overall = compute_metrics(std::vector<int>{1, 1, 0, 0}, gold);
  a.post = a.overall;
  b.overall = compute_metrics(gold, gold);
  b.post = b.overall;
  const std::vector<SplitReports> runs{a, b};
  const std::string table = format_seed_table(runs);
  CHECK(table.find("Overall") != std::string::npos);
  CHECK(table.find("Post") != std::string::npos);
  CHECK(table.find("0.8667 ± 0.1886") != std::string::npos);
  const std::vector<std::uint64_t> seeds{43, 434};
  const std::string json = seed_table_json(runs, seeds);
  CHECK(json.find("434") != std::string::npos);
}
