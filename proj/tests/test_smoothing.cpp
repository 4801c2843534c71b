#include <doctest.h>

#include <cmath>

#include "extax/errors.hpp"
#include "extax/smoothing.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace extax;

namespace {

FacetVector facet_bits(Facet f, std::vector<std::uint8_t> bits) {
  FacetVector v;
  v.facet = f;
  v.explanations.assign(bits.size(), "");
  v.bits = std::move(bits);
  return v;
}

// Four annotators; annotator a votes `pattern` bit a on every category.
RawVotes uniform_votes(unsigned pattern) {
  RawVotes r;
  r.sample_id = "s";
  for (int a = 0; a < 4; ++a) {
    AnnotatorVotes v;
    v.name = "m" + std::to_string(a);
    const std::uint8_t bit = (pattern >> a) & 1u;
    for (Facet f : kFacets) {
      v.facets[static_cast<std::size_t>(f)] =
          facet_bits(f, std::vector<std::uint8_t>(facet_size(f), bit));
    }
    r.annotators.push_back(v);
  }
  return r;
}

}  // namespace

TEST_CASE("spot values") {
  CHECK(std::abs(binary_entropy(0.75) - 0.811278) < 1e-6);
  CHECK(std::abs(smooth_target(0.75, binary_entropy(0.75), 0.1896) - 0.711545) < 1e-5);
  CHECK(kDefaultAlpha == 0.1896);
}

TEST_CASE("all 16 four-annotator patterns match the oracle for every alpha") {
  for (double alpha : {0.0, 0.1, 0.1896, 0.5, 1.0}) {
    for (unsigned pattern = 0; pattern < 16; ++pattern) {
      const int positives = __builtin_popcount(pattern);
      const SmoothedTargets t = smooth_sample(uniform_votes(pattern), {alpha});
      for (std::size_t c = 0; c < kTaxonomyDim; ++c) {
        CHECK(std::abs(t.values[c] - oracle::smoothed(positives, 4, alpha)) < 1e-12);
        CHECK(t.vote_counts[c] == 4);
      }
      if (positives == 2) {
        for (double y : t.values) CHECK(std::abs(y - 0.5) < 1e-15);
      }
    }
  }
}

TEST_CASE("binary entropy edges") {
  CHECK(binary_entropy(0.0) == 0.0);
  CHECK(binary_entropy(1.0) == 0.0);
  CHECK(binary_entropy(0.5) == 1.0);
  CHECK_THROWS_AS(binary_entropy(-0.1), DomainError);
  CHECK_THROWS_AS(binary_entropy(1.1), DomainError);
  CHECK_THROWS_AS(binary_entropy(std::nan("")), DomainError);
}

TEST_CASE("smoothing stays between p and 0.5") {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const double p = rng.uniform();
    const double alpha = rng.uniform();
    const double y = smooth_target(p, binary_entropy(p), alpha);
    CHECK(y >= std::min(p, 0.5) - 1e-15);
    CHECK(y <= std::max(p, 0.5) + 1e-15);
  }
}

TEST_CASE("alpha 0 returns the raw proportion") {
  for (unsigned pattern = 0; pattern < 16; ++pattern) {
    const SmoothedTargets t = smooth_sample(uniform_votes(pattern), {0.0});
    for (std::size_t c = 0; c < kTaxonomyDim; ++c) CHECK(t.values[c] == t.proportions[c]);
  }
}

TEST_CASE("invalid annotators leave the denominator") {
  RawVotes r = uniform_votes(0b0011);
  r.annotators[3].facets[static_cast<std::size_t>(Facet::Emotion)].reset();
  const SmoothedTargets t = smooth_sample(r, {});
  const std::size_t fear = facet_offset(Facet::Emotion);
  CHECK(t.vote_counts[fear] == 3);
  CHECK(t.proportions[fear] == doctest::Approx(2.0 / 3.0));
  CHECK(t.vote_counts[0] == 4);
  CHECK(t.proportions[0] == 0.5);
  CHECK(std::abs(t.values[fear] - oracle::smoothed(2, 3, kDefaultAlpha)) < 1e-12);
}

TEST_CASE("a facet without valid votes is an error") {
  RawVotes r = uniform_votes(1);
  for (auto& a : r.annotators) a.facets[static_cast<std::size_t>(Facet::NarrativeRole)].reset();
  CHECK_THROWS_AS(smooth_sample(r, {}), NoValidVotes);
  const std::uint8_t none[] = {0};
  CHECK_THROWS_AS(vote_proportion(std::span<const std::uint8_t>(none, 0), 0), NoValidVotes);
  CHECK_THROWS_AS(vote_proportion(none, 2), LengthMismatch);
}

TEST_CASE("alpha outside [0, 1] is rejected") {
  CHECK_THROWS_AS(SmoothingConfig{-0.01}.validate(), DomainError);
  CHECK_THROWS_AS(SmoothingConfig{1.5}.validate(), DomainError);
  CHECK_THROWS_AS(smooth_target(0.5, 1.0, 2.0), DomainError);
}

TEST_CASE("targets JSON-lines round trip") {
  test::TempDir dir("smooth");
  std::vector<SmoothedTargets> ts{smooth_sample(uniform_votes(0b0111), {}),
                                  smooth_sample(uniform_votes(0b0001), {0.5})};
  ts[1].sample_id = "t";
  write_targets_jsonl(dir / "t.jsonl", ts);
  const auto back = read_targets_jsonl(dir / "t.jsonl");
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].sample_id == ts[i].sample_id);
    CHECK(back[i].values == ts[i].values);
    CHECK(back[i].entropy == ts[i].entropy);
    CHECK(back[i].vote_counts == ts[i].vote_counts);
    CHECK(back[i].proportions == ts[i].proportions);
  }
  CHECK_THROWS_AS(parse_targets_line(R"({"sample_id": "x", "y_tax": [0.5]})"), ParseError);
}
