#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "extax/embeddings.hpp"
#include "extax/errors.hpp"
#include "extax/io.hpp"
#include "extax/pipeline/config.hpp"
#include "extax/pipeline/dataset.hpp"
#include "extax/pipeline/synth.hpp"
#include "extax/pipeline/workflow.hpp"
#include "support.hpp"

using namespace extax;

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

EmbeddingFile sample_embeddings(std::size_t dim, Rng& rng) {
  EmbeddingFile f;
  f.dim = dim;
  for (std::size_t len : {1u, 7u, 512u, 3u}) {
    Tensor t = test::random_tensor(len, dim, rng);
    for (double& v : t.data()) v = static_cast<float>(v);
    f.records.push_back({"id-" + std::to_string(len), std::move(t)});
  }
  return f;
}

}  // namespace

TEST_CASE("dataset files") {
  test::TempDir dir("dataset");
  write_text(dir / "ok.jsonl",
             "{\"sample_id\": \"a\", \"text\": \"one\", \"label\": 1, \"genre\": \"post\"}\n"
             "\n"
             "{\"sample_id\": \"b\", \"text\": \"two\", \"source\": \"wire\"}\n");
  const auto recs = load_dataset(dir / "ok.jsonl");
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].label == 1);
  CHECK(recs[0].genre == Genre::Post);
  CHECK_FALSE(recs[1].label.has_value());
  CHECK(recs[1].source == "wire");

  write_dataset(dir / "copy.jsonl", recs);
  const auto again = load_dataset(dir / "copy.jsonl");
  CHECK(again[0].text == "one");
  CHECK(again[1].source == "wire");

  write_text(dir / "bad.jsonl",
             "{\"sample_id\": \"a\", \"text\": \"x\", \"label\": 0}\n"
             "{\"sample_id\": \"b\", \"text\": \"y\", \"label\": 2}\n");
  try {
    load_dataset(dir / "bad.jsonl");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  write_text(dir / "dup.jsonl",
             "{\"sample_id\": \"a\", \"text\": \"x\"}\n{\"sample_id\": \"a\", \"text\": \"y\"}\n");
  CHECK_THROWS_AS(load_dataset(dir / "dup.jsonl"), DuplicateId);
  CHECK_THROWS_AS(parse_dataset_line("{\"sample_id\": \"a\", \"text\": \"x\", \"genre\": \"tweet\"}"),
                  ParseError);
  CHECK_THROWS_AS(parse_dataset_line("{\"sample_id\": \"a\", \"text\": \"x\", \"label\": 0.5}"),
                  ParseError);
  CHECK_THROWS_AS(parse_dataset_line("{\"text\": \"x\"}"), ParseError);
}

TEST_CASE("EXEB round trip is exact and byte-stable") {
  Rng rng(3);
  const EmbeddingFile f = sample_embeddings(9, rng);
  const std::string bytes = serialize_embeddings(f);
  CHECK(bytes.substr(0, 4) == "EXEB");
  const EmbeddingFile back = parse_embeddings(bytes, 9);
  REQUIRE(back.records.size() == f.records.size());
  for (std::size_t i = 0; i < f.records.size(); ++i) {
    CHECK(back.records[i].sample_id == f.records[i].sample_id);
    CHECK(back.records[i].tokens == f.records[i].tokens);
  }
  CHECK(serialize_embeddings(back) == bytes);

  test::TempDir dir("exeb");
  write_embeddings(dir / "e.exeb", f);
  CHECK(read_file(dir / "e.exeb") == bytes);
  CHECK(read_embeddings(dir / "e.exeb").records.size() == 4);
}

TEST_CASE("EXEB header layout") {
  EmbeddingFile f;
  f.dim = 2;
  f.records.push_back({"ab", Tensor::matrix(1, 2, {1.0, -2.0})});
  const std::string b = serialize_embeddings(f);
  // magic 4 + version 4 + dim 4 + count 8 + id_len 4 + id 2 + L 4 + 2 floats
  CHECK(b.size() == 4 + 4 + 4 + 8 + 4 + 2 + 4 + 8);
  CHECK(static_cast<unsigned char>(b[4]) == 1);
  CHECK(static_cast<unsigned char>(b[8]) == 2);
  CHECK(static_cast<unsigned char>(b[12]) == 1);
  float x;
  std::memcpy(&x, b.data() + b.size() - 4, 4);
  CHECK(x == -2.0f);

  EmbeddingFile empty;
  empty.dim = 5;
  const EmbeddingFile e = parse_embeddings(serialize_embeddings(empty));
  CHECK(e.dim == 5);
  CHECK(e.records.empty());
}

TEST_CASE("EXEB corruption is detected") {
  Rng rng(4);
  const std::string bytes = serialize_embeddings(sample_embeddings(3, rng));
  std::string bad = bytes;
  bad[1] = 'Y';
  CHECK_THROWS_AS(parse_embeddings(bad), BadMagic);
  CHECK_THROWS_AS(parse_embeddings(bytes, 4), DimMismatch);
  for (int i = 0; i < 200; ++i) {
    const std::size_t cut = rng.below(bytes.size());
    CHECK_THROWS_AS(parse_embeddings(bytes.substr(0, cut)), ValidationError);
  }
  CHECK_THROWS_AS(parse_embeddings(bytes + "z"), TruncatedRecord);

  // First record's length field sits after header (20) + id_len (4) + "id-1" (4).
  std::string huge = bytes;
  const std::uint32_t l = 100000;
  std::memcpy(huge.data() + 28, &l, 4);
  CHECK_THROWS_AS(parse_embeddings(huge), TruncatedRecord);
  std::string zero = bytes;
  const std::uint32_t z = 0;
  std::memcpy(zero.data() + 28, &z, 4);
  CHECK_THROWS_AS(parse_embeddings(zero), TruncatedRecord);

  EmbeddingFile wide;
  wide.dim = 3;
  wide.records.push_back({"x", Tensor::matrix(1, 4)});
  CHECK_THROWS_AS(serialize_embeddings(wide), DimMismatch);
  EmbeddingFile empty_seq;
  empty_seq.dim = 3;
  empty_seq.records.push_back({"x", Tensor::matrix(0, 3)});
  CHECK_THROWS_AS(serialize_embeddings(empty_seq), ValidationError);
}

TEST_CASE("synthetic embedding") {
  const Tensor dirs = planted_directions(43, 32);
  for (std::size_t i = 0; i < kTaxonomyDim; ++i) {
    for (std::size_t j = 0; j < kTaxonomyDim; ++j) {
      double dot = 0;
      for (std::size_t d = 0; d < 32; ++d) dot += dirs(i, d) * dirs(j, d);
      CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-12);
    }
  }
  CHECK_THROWS_AS(planted_directions(1, 16), ValidationError);

  DatasetRecord r{"doc-1", "", std::nullopt, std::nullopt, ""};
  const std::vector<std::size_t> none;
  const std::vector<std::size_t> fear{6};
  const SynthSample a = synth_embed(r, none, 43, 32);
  const SynthSample b = synth_embed(r, none, 43, 32);
  CHECK(a.embedding.tokens == b.embedding.tokens);
  CHECK(a.label == 0);
  CHECK(a.embedding.length() >= kSynthMinTokens);
  CHECK(a.embedding.length() <= kSynthMaxTokens);
  for (double v : a.embedding.tokens.data()) CHECK(static_cast<double>(static_cast<float>(v)) == v);
  for (double y : a.targets.values) CHECK(y == 0.0);

  const SynthSample f = synth_embed(r, fear, 43, 32);
  CHECK(f.label == 1);
  CHECK(f.targets.values[6] == 1.0);
  CHECK(f.embedding.length() == a.embedding.length());
  // The plant moves every row by kPlantStrength along the Fear direction.
  for (std::size_t row = 0; row < f.embedding.length(); ++row) {
    double shift = 0;
    for (std::size_t d = 0; d < 32; ++d)
      shift += (f.embedding.tokens(row, d) - a.embedding.tokens(row, d)) * dirs(6, d);
    CHECK(std::abs(shift - kPlantStrength) < 1e-5);
  }
  CHECK_FALSE(synth_embed({"doc-2", "", {}, {}, ""}, none, 43, 32).embedding.tokens ==
              a.embedding.tokens);
}

TEST_CASE("manipulative categories are the intended ones") {
  const TaxonomySchema& s = TaxonomySchema::builtin();
  std::set<std::string> names;
  for (std::size_t i : kManipulativeCategories) names.insert(s.category(i).name);
  CHECK(names == std::set<std::string>{"Attack on Reputation", "Fear", "Anger",
                                       "Deceptive Subversives", "Institutional Toxins"});
  for (std::size_t c = 0; c < kTaxonomyDim; ++c) {
    const std::vector<std::size_t> one{c};
    const bool manip = names.count(s.category(c).name) > 0;
    CHECK(manipulative_label(one) == (manip ? 1 : 0));
  }
}

TEST_CASE("synthetic corpus statistics match the sampling model") {
  SynthConfig cfg;
  cfg.dim = 24;
  const SynthCorpus c = make_synth_corpus(cfg);
  CHECK(c.train.records.size() == 2000);
  CHECK(c.val.records.size() == 500);
  CHECK(c.test.records.size() == 500);
  std::size_t planted = 0, cells = 0, fake = 0, samples = 0, posts = 0;
  std::set<std::string> ids;
  for (const SynthSplit* s : {&c.train, &c.val, &c.test}) {
    REQUIRE(s->embeddings.records.size() == s->records.size());
    for (std::size_t i = 0; i < s->records.size(); ++i) {
      planted += s->plants[i].size();
      cells += kTaxonomyDim;
      fake += *s->records[i].label;
      posts += *s->records[i].genre == Genre::Post;
      ++samples;
      ids.insert(s->records[i].sample_id);
      CHECK(s->records[i].sample_id == s->embeddings.records[i].sample_id);
      CHECK(s->targets[i].sample_id == s->records[i].sample_id);
    }
  }
  CHECK(ids.size() == samples);
  const double fake_rate = 1.0 - std::pow(1.0 - cfg.plant_probability, 5.0);
  CHECK(std::abs(static_cast<double>(planted) / cells - cfg.plant_probability) < 0.02);
  CHECK(std::abs(static_cast<double>(fake) / samples - fake_rate) < 0.03);
  CHECK(std::abs(static_cast<double>(posts) / samples - 0.5) < 0.03);

  const SynthCorpus d = make_synth_corpus(cfg);
  CHECK(serialize_embeddings(d.test.embeddings) == serialize_embeddings(c.test.embeddings));
}

TEST_CASE("run configuration") {
  const RunConfig def;
  CHECK(def.alpha == 0.1896);
  CHECK(def.stage1.lr == 0.00065);
  CHECK(def.stage1.weight_decay == 0.00069);
  CHECK(def.stage1.epochs == 10);
  CHECK(def.stage1.patience == 7);
  CHECK(def.stage1.dropout == 0.3290);
  CHECK(def.stage2.lr == 0.00096);
  CHECK(def.stage2.weight_decay == 0.00018);
  CHECK(def.stage2.epochs == 50);
  CHECK(def.stage2.patience == 3);
  CHECK(def.stage1.batch_size == 128);
  CHECK(def.seeds == std::vector<std::uint64_t>{43, 434, 445});
  CHECK(def.n_ppt == 3);
  CHECK(def.n_att == 1);

  RunConfig c = RunConfig::from_json(
      R"({"alpha": 0.3, "n_ppt": 2, "stage2": {"epochs": 5}, "seeds": [1],
          "endpoints": [{"name": "a", "base_url": "http://localhost:1", "model_id": "m",
                         "api_key_env": "KEY"}]})");
  CHECK(c.alpha == 0.3);
  CHECK(c.n_ppt == 2);
  CHECK(c.stage2.epochs == 5);
  CHECK(c.stage2.lr == 0.00096);
  REQUIRE(c.endpoints.size() == 1);
  const RunConfig back = RunConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(c.detector_shape(40) == DetectorShape{40, 64, 2, 1});

  CHECK_THROWS_AS(RunConfig::from_json(R"({"alpah": 0.3})"), ValidationError);
  CHECK_THROWS_AS(RunConfig::from_json(R"({"stage1": {"lr": 0.1, "momentum": 1}})"),
                  ValidationError);
  CHECK_THROWS_AS(RunConfig::from_json(R"({"alpha": 2})"), ValidationError);
  CHECK_THROWS_AS(RunConfig::from_json("not json"), ValidationError);
}

TEST_CASE("joining splits") {
  Rng rng(6);
  const EmbeddingFile e = sample_embeddings(4, rng);
  std::vector<DatasetRecord> ds;
  std::vector<SmoothedTargets> ts;
  for (const auto& r : e.records) {
    ds.push_back({r.sample_id, "t", 1, Genre::Article, ""});
    SmoothedTargets t;
    t.sample_id = r.sample_id;
    ts.push_back(t);
  }
  const PipelineSplit s = join_split(e, &ts, &ds);
  CHECK(s.size() == 4);
  CHECK(s.tokens[1] == &e.records[1].tokens);
  CHECK(s.labels == std::vector<int>{1, 1, 1, 1});
  CHECK(s.stage2_examples().size() == 4);
  ds.pop_back();
  CHECK_THROWS_AS(join_split(e, nullptr, &ds), ValidationError);
  ts.pop_back();
  CHECK_THROWS_AS(join_split(e, &ts, nullptr), ValidationError);

  const std::vector<int> pred{1, 0, 1, 1}, gold{1, 0, 0, 1};
  const std::vector<std::optional<Genre>> g{Genre::Post, Genre::Post, std::nullopt, Genre::Post};
  const SplitReports r = evaluate_by_genre(pred, gold, g);
  CHECK(r.overall.n == 4);
  REQUIRE(r.post.has_value());
  CHECK(r.post->n == 3);
  CHECK(r.post->accuracy == 1.0);
  CHECK_FALSE(r.article.has_value());
}
