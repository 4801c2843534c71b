#include "extax/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <tuple>

#include <json.hpp>

#include "extax/errors.hpp"

namespace extax {

using nlohmann::json;

namespace {

void check_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw LengthMismatch(std::string(what) + ": " + std::to_string(a) + " vs " +
                         std::to_string(b) + " entries");
  }
  if (a == 0) throw EmptyInput(std::string(what) + ": no samples");
}

void check_label(int y) {
  if (y != kLabelReal && y != kLabelFake) {
    throw ValidationError("label must be 0 or 1, got " + std::to_string(y));
  }
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

json metric_json(const MetricReport& r) {
  json j{{"n", r.n},
         {"accuracy", r.accuracy},
         {"macro_f1", r.macro_f1},
         {"macro_recall", r.macro_recall}};
  for (int k : {kLabelReal, kLabelFake}) {
    const auto& c = r.per_class[k];
    j["per_class"][std::string(label_name(k))] = {
        {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}};
  }
  return j;
}

std::string fmt4(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

}  // namespace

std::string_view label_name(int label) { return label == kLabelFake ? "fake" : "real"; }

ConfusionCounts confusion(std::span<const int> preds, std::span<const int> golds, int positive) {
  check_aligned(preds.size(), golds.size(), "confusion");
  ConfusionCounts c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] == positive;
    const bool g = golds[i] == positive;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

ClassMetrics class_metrics(const ConfusionCounts& c) {
  ClassMetrics m;
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.f1 = m.precision + m.recall == 0.0 ? 0.0
                                       : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  m.support = c.tp + c.fn;
  return m;
}

MetricReport compute_metrics(std::span<const int> preds, std::span<const int> golds) {
  check_aligned(preds.size(), golds.size(), "compute_metrics");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    check_label(preds[i]);
    check_label(golds[i]);
    if (preds[i] == golds[i]) ++correct;
  }
  MetricReport r;
  r.n = preds.size();
  r.accuracy = ratio(correct, r.n);
  for (int k : {kLabelReal, kLabelFake}) r.per_class[k] = class_metrics(confusion(preds, golds, k));
  r.macro_f1 = (r.per_class[0].f1 + r.per_class[1].f1) / 2.0;
  r.macro_recall = (r.per_class[0].recall + r.per_class[1].recall) / 2.0;
  return r;
}

std::string MetricReport::to_json() const { return metric_json(*this).dump(2); }

std::string MetricReport::to_text() const {
  std::string s;
  s += "n             " + std::to_string(n) + "\n";
  s += "accuracy      " + fmt4(accuracy) + "\n";
  s += "macro_f1      " + fmt4(macro_f1) + "\n";
  s += "macro_recall  " + fmt4(macro_recall) + "\n";
  s += "class  precision  recall  f1      support\n";
  for (int k : {kLabelReal, kLabelFake}) {
    const auto& c = per_class[k];
    char buf[96];
    std::snprintf(buf, sizeof buf, "%-5s  %.4f     %.4f  %.4f  %zu\n",
                  std::string(label_name(k)).c_str(), c.precision, c.recall, c.f1, c.support);
    s += buf;
  }
  return s;
}

AttributeDistribution attribute_distribution(std::span<const TaxVector> profiles,
                                             std::span<const int> golds, double threshold) {
  check_aligned(profiles.size(), golds.size(), "attribute_distribution");
  AttributeDistribution d;
  std::array<std::size_t, kTaxonomyDim> fake_hits{}, real_hits{};
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    check_label(golds[i]);
    auto& hits = golds[i] == kLabelFake ? fake_hits : real_hits;
    (golds[i] == kLabelFake ? d.n_fake : d.n_real) += 1;
    for (std::size_t c = 0; c < kTaxonomyDim; ++c) {
      if (profiles[i][c] >= threshold) ++hits[c];
    }
  }
  for (std::size_t c = 0; c < kTaxonomyDim; ++c) {
    d.fake_rate[c] = ratio(fake_hits[c], d.n_fake);
    d.real_rate[c] = ratio(real_hits[c], d.n_real);
  }
  return d;
}

std::string AttributeDistribution::to_json(const TaxonomySchema& schema) const {
  json j{{"n_fake", n_fake}, {"n_real", n_real}};
  for (const auto& cat : schema.categories()) {
    j["categories"].push_back({{"facet", facet_key(cat.facet)},
                               {"name", cat.name},
                               {"fake_rate", fake_rate[cat.global_index]},
                               {"real_rate", real_rate[cat.global_index]}});
  }
  return j.dump(2);
}

std::vector<std::string> active_categories(const TaxVector& v, Facet f,
                                           const TaxonomySchema& schema, double threshold) {
  std::vector<std::string> out;
  for (const auto& cat : schema.categories(f)) {
    if (v[cat.global_index] >= threshold) out.push_back(cat.name);
  }
  return out;
}

std::vector<Flow> cooccurrence_flows(std::span<const TaxVector> profiles,
                                     std::span<const int> golds, const TaxonomySchema& schema,
                                     double threshold) {
  check_aligned(profiles.size(), golds.size(), "cooccurrence_flows");
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw DomainError("flow threshold must lie in (0, 1]");
  }
  using Key = std::tuple<std::string, std::string, std::string, int>;
  std::map<Key, std::size_t> counts;
  auto or_none = [](std::vector<std::string> v) {
    if (v.empty()) v.emplace_back("None");
    return v;
  };
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    check_label(golds[i]);
    auto p = or_none(active_categories(profiles[i], Facet::Persuasion, schema, threshold));
    auto e = or_none(active_categories(profiles[i], Facet::Emotion, schema, threshold));
    auto n = or_none(active_categories(profiles[i], Facet::NarrativeRole, schema, threshold));
    for (const auto& a : p) {
      for (const auto& b : e) {
        for (const auto& c : n) ++counts[{a, b, c, golds[i]}];
      }
    }
  }
  std::vector<Flow> out;
  out.reserve(counts.size());
  for (const auto& [k, n] : counts) {
    out.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k), n});
  }
  return out;
}

std::string flows_to_csv(std::span<const Flow> flows) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
      if (ch == '"') q += '"';
      q += ch;
    }
    return q + "\"";
  };
  std::string out = "persuasion,emotion,role,label,count\n";
  for (const auto& f : flows) {
    out += quote(f.persuasion) + "," + quote(f.emotion) + "," + quote(f.role) + "," +
           std::string(label_name(f.label)) + "," + std::to_string(f.count) + "\n";
  }
  return out;
}

MeanStd mean_std(std::span<const double> xs) {
  if (xs.empty()) throw EmptyInput("mean_std: no values");
  MeanStd m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return m;
}

namespace {

template <typename Pick>
std::optional<std::pair<MeanStd, MeanStd>> summarize(std::span<const SplitReports> runs,
                                                     Pick pick) {
  std::vector<double> f1, rec;
  for (const auto& r : runs) {
    const MetricReport* m = pick(r);
    if (m == nullptr) return std::nullopt;
    f1.push_back(m->macro_f1);
    rec.push_back(m->macro_recall);
  }
  if (f1.empty()) return std::nullopt;
  return std::pair{mean_std(f1), mean_std(rec)};
}

template <typename Fn>
void for_each_row(std::span<const SplitReports> runs, Fn fn) {
  fn("Overall", summarize(runs, [](const SplitReports& r) { return &r.overall; }));
  fn("Post", summarize(runs, [](const SplitReports& r) {
       return r.post ? &*r.post : static_cast<const MetricReport*>(nullptr);
     }));
  fn("Article", summarize(runs, [](const SplitReports& r) {
       return r.article ? &*r.article : static_cast<const MetricReport*>(nullptr);
     }));
}

}  // namespace

std::string format_seed_table(std::span<const SplitReports> runs) {
  std::string out = "Split     Macro-F1            Macro-Recall\n";
  for_each_row(runs, [&](const char* label, const auto& row) {
    char buf[128];
    if (row) {
      std::snprintf(buf, sizeof buf, "%-8s  %.4f ± %.4f     %.4f ± %.4f\n", label,
                    row->first.mean, row->first.std, row->second.mean, row->second.std);
    } else {
      std::snprintf(buf, sizeof buf, "%-8s  n/a                 n/a\n", label);
    }
    out += buf;
  });
  return out;
}

std::string seed_table_json(std::span<const SplitReports> runs,
                            std::span<const std::uint64_t> seeds) {
  json j;
  j["seeds"] = std::vector<std::uint64_t>(seeds.begin(), seeds.end());
  for_each_row(runs, [&](const char* label, const auto& row) {
    if (!row) {
      j["rows"][label] = nullptr;
      return;
    }
    j["rows"][label] = {{"macro_f1", {{"mean", row->first.mean}, {"std", row->first.std}}},
                        {"macro_recall", {{"mean", row->second.mean}, {"std", row->second.std}}}};
  });
  for (const auto& r : runs) {
    json run{{"overall", metric_json(r.overall)}};
    if (r.post) run["post"] = metric_json(*r.post);
    if (r.article) run["article"] = metric_json(*r.article);
    j["runs"].push_back(run);
  }
  return j.dump(2);
}

}  // namespace extax
