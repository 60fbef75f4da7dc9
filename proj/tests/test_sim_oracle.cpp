#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "kbprobe/policies.hpp"
#include "kbprobe/prompts.hpp"
#include "kbprobe/sim_oracle.hpp"
#include "kbprobe/util.hpp"

using namespace kbprobe;

namespace {

const sim_corpus& stock_corpus() {
  static const sim_corpus corpus = sim_corpus::generate(sim_corpus_spec{});
  return corpus;
}

double cos_of(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_SUITE("sim_oracle") {

TEST_CASE("generation is deterministic per seed") {
  auto a = sim_corpus::generate(sim_corpus_spec{});
  const auto& b = stock_corpus();
  REQUIRE(a.total_fact_count() == b.total_fact_count());
  CHECK(a.level1_labels() == b.level1_labels());
  for (int i = 0; i < a.total_fact_count(); ++i) {
    CHECK(a.fact(i).variants == b.fact(i).variants);
    CHECK(a.fact(i).weight == b.fact(i).weight);
    CHECK(a.variant_vector(i, 0) == b.variant_vector(i, 0));
  }

  sim_corpus_spec other;
  other.seed = 8;
  auto c = sim_corpus::generate(other);
  CHECK(c.level1_labels() != b.level1_labels());
}

TEST_CASE("stock shape: 3x3 tree, 9 leaves, 180 facts") {
  const auto& corpus = stock_corpus();
  CHECK(corpus.level1_labels().size() == 3);
  CHECK(corpus.leaves().size() == 9);
  CHECK(corpus.total_fact_count() == 180);

  std::set<std::string> all_labels;
  for (const auto& l1 : corpus.level1_labels()) {
    all_labels.insert(l1);
    auto kids = corpus.children_of(l1);
    CHECK(kids.size() == 3);
    for (const auto& kid : kids) {
      CHECK(corpus.is_leaf_label(kid));
      CHECK(corpus.children_of(kid).empty());
      all_labels.insert(kid);
    }
  }
  CHECK(all_labels.size() == 12);

  for (const auto& leaf : corpus.leaves()) {
    CHECK(leaf.path.size() == 2);
    CHECK(leaf.path.back() == leaf.label);
    CHECK(leaf.fact_ids.size() == 20);
  }
}

TEST_CASE("fact texts never contain tree labels") {
  // Scope detection relies on substring matching, so a label occurring
  // inside fact prose would corrupt it.
  const auto& corpus = stock_corpus();
  for (const auto& fact : corpus.facts()) {
    for (const auto& variant : fact.variants) {
      for (const auto& l1 : corpus.level1_labels())
        CHECK_FALSE(contains(variant, l1));
      for (const auto& leaf : corpus.leaves())
        CHECK_FALSE(contains(variant, leaf.label));
    }
  }
}

TEST_CASE("popularity weights form a global zipf ranking") {
  const auto& corpus = stock_corpus();
  std::vector<double> weights;
  for (const auto& fact : corpus.facts()) weights.push_back(fact.weight);
  std::sort(weights.rbegin(), weights.rend());
  for (int r = 1; r <= 180; ++r)
    CHECK(weights[static_cast<std::size_t>(r - 1)] ==
          doctest::Approx(1.0 / std::pow(r, 1.1)).epsilon(1e-12));
}

TEST_CASE("paraphrases merge strictly, distinct facts never do") {
  const auto& corpus = stock_corpus();
  const int n = corpus.total_fact_count();

  double min_same = 1.0;
  for (int f = 0; f < n; ++f)
    min_same = std::min(
        min_same, cos_of(corpus.variant_vector(f, 0), corpus.variant_vector(f, 1)));
  CHECK(min_same > 0.92);

  double max_cross = -1.0;
  for (int f = 0; f < n; ++f) {
    for (int g = f + 1; g < n; ++g) {
      for (int vf = 0; vf < 2; ++vf)
        for (int vg = 0; vg < 2; ++vg)
          max_cross = std::max(max_cross,
                               cos_of(corpus.variant_vector(f, vf),
                                      corpus.variant_vector(g, vg)));
    }
  }
  CHECK(max_cross < 0.92);
  // Correlated pairs below must leave the zone non-empty.
  CHECK(max_cross > 0.70);
}

TEST_CASE("correlated pairs keep the judge zone busy") {
  // Odd-positioned facts lean towards their predecessor, aiming the pair
  // near cosine 0.775. The blend has spread, so this asserts bulk behavior:
  // most of the 90 built-in pairs land inside (0.70, 0.92], and every leaf
  // contributes at least one.
  const auto& corpus = stock_corpus();
  int in_zone = 0, pairs = 0;
  for (const auto& leaf : corpus.leaves()) {
    int leaf_hits = 0;
    for (std::size_t k = 1; k < leaf.fact_ids.size(); k += 2) {
      const int a = leaf.fact_ids[k - 1];
      const int b = leaf.fact_ids[k];
      ++pairs;
      const double s =
          cos_of(corpus.variant_vector(a, 0), corpus.variant_vector(b, 0));
      if (s > 0.70 && s <= 0.92) {
        ++in_zone;
        ++leaf_hits;
      }
    }
    CHECK(leaf_hits >= 1);
  }
  CHECK(pairs == 90);
  CHECK(in_zone >= 60);
}

TEST_CASE("text lookup inverts the variants") {
  const auto& corpus = stock_corpus();
  for (const auto& fact : corpus.facts()) {
    for (std::size_t v = 0; v < fact.variants.size(); ++v) {
      auto hit = corpus.lookup_text(fact.variants[v]);
      REQUIRE(hit.has_value());
      CHECK(hit->first == fact.fact_id);
      CHECK(hit->second == static_cast<int>(v));
    }
  }
  CHECK_FALSE(corpus.lookup_text("made-up text").has_value());

  auto stray1 = corpus.embed_text("made-up text");
  auto stray2 = corpus.embed_text("made-up text");
  auto stray3 = corpus.embed_text("other made-up text");
  CHECK(stray1 == stray2);
  CHECK(stray1 != stray3);
  CHECK(cos_of(stray1, stray1) == doctest::Approx(1.0));
  CHECK(corpus.embed_text(corpus.fact(0).variants[0]) ==
        corpus.variant_vector(0, 0));
}

TEST_CASE("model id parsing") {
  auto full = parse_sim_model_id("sim:demo");
  CHECK(full.name == "demo");
  CHECK(full.coverage == 1.0);

  auto partial = parse_sim_model_id("sim:alt@70");
  CHECK(partial.name == "alt");
  CHECK(partial.coverage == doctest::Approx(0.7));

  CHECK_THROWS_AS(parse_sim_model_id("gpt-4"), config_error);
  CHECK_THROWS_AS(parse_sim_model_id("sim:"), config_error);
  CHECK_THROWS_AS(parse_sim_model_id("sim:x@0"), config_error);
  CHECK_THROWS_AS(parse_sim_model_id("sim:x@101"), config_error);
  CHECK_THROWS_AS(parse_sim_model_id("sim:x@pct"), config_error);
}

TEST_CASE("partial coverage is a deterministic subset of the right size") {
  const auto& corpus = stock_corpus();
  sim_model_view view{"alt", 0.7};

  int known = 0;
  for (int f = 0; f < corpus.total_fact_count(); ++f) {
    const bool k1 = view.knows(corpus, f);
    CHECK(k1 == view.knows(corpus, f));
    if (k1) ++known;
  }
  // Binomial(180, 0.7): sd ~ 6.1, so a 4 sigma band is ~ [101, 151].
  CHECK(known > 100);
  CHECK(known < 152);

  sim_model_view all{"demo", 1.0};
  for (int f = 0; f < corpus.total_fact_count(); ++f)
    CHECK(all.knows(corpus, f));
}

TEST_CASE("responses scope to mentioned leaves") {
  const auto& corpus = stock_corpus();
  sim_model_view view{"demo", 1.0};
  const auto& leaf = corpus.leaves()[4];
  std::set<int> leaf_set(leaf.fact_ids.begin(), leaf.fact_ids.end());

  for (int round = 0; round < 20; ++round) {
    rng r(static_cast<std::uint64_t>(round) + 1000);
    auto resp = sim_respond("Tell me about '" + leaf.label + "'.", corpus, r,
                            view);
    CHECK(resp.emitted_fact_ids.size() >= 5);
    CHECK(resp.emitted_fact_ids.size() <= 15);
    for (int fid : resp.emitted_fact_ids) CHECK(leaf_set.count(fid) == 1);

    // Bullet lines must invert through the text index to the same ids.
    auto lines = parse_bullets(resp.text);
    REQUIRE(lines.size() == resp.emitted_fact_ids.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
      auto hit = corpus.lookup_text(lines[i]);
      REQUIRE(hit.has_value());
      CHECK(hit->first == resp.emitted_fact_ids[i]);
    }
  }
}

TEST_CASE("unscoped responses draw from the whole corpus by popularity") {
  const auto& corpus = stock_corpus();
  sim_model_view view{"demo", 1.0};

  int top_fact = 0, bottom_fact = 0;
  for (int f = 0; f < corpus.total_fact_count(); ++f) {
    if (corpus.fact(f).weight > corpus.fact(top_fact).weight) top_fact = f;
    if (corpus.fact(f).weight < corpus.fact(bottom_fact).weight)
      bottom_fact = f;
  }

  int top_seen = 0, bottom_seen = 0;
  std::set<int> distinct;
  for (int round = 0; round < 200; ++round) {
    rng r(static_cast<std::uint64_t>(round) + 5000);
    auto resp = sim_respond("List everything you know.", corpus, r, view);
    for (int fid : resp.emitted_fact_ids) {
      distinct.insert(fid);
      if (fid == top_fact) ++top_seen;
      if (fid == bottom_fact) ++bottom_seen;
    }
  }
  // Rank-1 weight is ~300x the rank-180 weight.
  CHECK(top_seen > bottom_seen + 50);
  CHECK(distinct.size() > 50);  // broad coverage, not a fixed clique
}

TEST_CASE("empty knowledge yields the stock refusal") {
  const auto& corpus = stock_corpus();
  sim_model_view blind{"blind", 1e-9};
  rng r(1);
  auto resp = sim_respond("anything", corpus, r, blind);
  CHECK(resp.emitted_fact_ids.empty());
  CHECK(resp.text == "No additional points available.");
}

TEST_CASE("true recall counts fact classes, not variants") {
  const auto& corpus = stock_corpus();
  std::vector<knowledge_atom> atoms;
  knowledge_atom a;
  a.text = corpus.fact(3).variants[0];
  atoms.push_back(a);
  a.text = corpus.fact(3).variants[1];  // same fact, other paraphrase
  atoms.push_back(a);
  a.text = corpus.fact(7).variants[0];
  atoms.push_back(a);

  CHECK(true_recall(atoms, corpus) == doctest::Approx(2.0 / 180.0));

  a.text = "never produced by the corpus";
  atoms.push_back(a);
  CHECK_THROWS_AS(true_recall(atoms, corpus), foreign_atom_error);
}

TEST_CASE("backend answers judge prompts from ground truth") {
  auto corpus = std::make_shared<const sim_corpus>(
      sim_corpus::generate(sim_corpus_spec{}));
  sim_backend backend(corpus, sim_model_view{"demo", 1.0});
  auto reg = prompt_registry::defaults();

  auto ask = [&](const std::string& prompt) {
    chat_request req;
    req.model_id = "sim:demo";
    req.messages = {{"user", prompt}};
    return backend.chat(req).text;
  };

  const auto& f0 = corpus->fact(0);
  const auto& f1 = corpus->fact(1);
  CHECK(ask(reg.render("judge.dedup", {{"text1", f0.variants[0]},
                                       {"text2", f0.variants[1]}})) == "YES");
  CHECK(ask(reg.render("judge.dedup", {{"text1", f0.variants[0]},
                                       {"text2", f1.variants[0]}})) == "NO");

  CHECK(ask(reg.render("judge.audit",
                       {{"query", "topic"},
                        {"knowledge_point", f0.variants[1]}})) == "YES");
  CHECK(ask(reg.render("judge.audit",
                       {{"query", "topic"},
                        {"knowledge_point", "Invented fluff."}})) == "NO");
}

TEST_CASE("backend answers taxonomy prompts with real labels first") {
  auto corpus = std::make_shared<const sim_corpus>(
      sim_corpus::generate(sim_corpus_spec{}));
  sim_backend backend(corpus, sim_model_view{"demo", 1.0});
  auto reg = prompt_registry::defaults();

  auto ask = [&](const std::string& prompt) {
    chat_request req;
    req.model_id = "sim:demo";
    req.messages = {{"user", prompt}};
    return backend.chat(req).text;
  };

  auto l1 = parse_bullets(ask(
      reg.render("taxonomy.level1", {{"query", "Any Topic"}, {"W", "3"}})));
  CHECK(l1 == corpus->level1_labels());

  // Requesting more branches than the tree has pads with synthetic labels.
  auto l1_wide = parse_bullets(ask(
      reg.render("taxonomy.level1", {{"query", "Any Topic"}, {"W", "5"}})));
  REQUIRE(l1_wide.size() == 5);
  std::set<std::string> uniq(l1_wide.begin(), l1_wide.end());
  CHECK(uniq.size() == 5);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(l1_wide[i] == corpus->level1_labels()[i]);

  auto l2 = parse_bullets(ask(reg.render(
      "taxonomy.level2", {{"query", "Any Topic"},
                          {"category", corpus->level1_labels()[0]},
                          {"W", "3"}})));
  CHECK(l2 == corpus->children_of(corpus->level1_labels()[0]));

  auto personas = parse_bullets(ask(reg.render(
      "profiles.generate", {{"N", "4"}, {"query", "Any Topic"}})));
  REQUIRE(personas.size() == 4);
  CHECK(personas[0] != personas[1]);
}

TEST_CASE("backend chats deterministically and reports estimated usage") {
  auto corpus = std::make_shared<const sim_corpus>(
      sim_corpus::generate(sim_corpus_spec{}));
  sim_backend one(corpus, sim_model_view{"demo", 1.0});
  sim_backend two(corpus, sim_model_view{"demo", 1.0});
  sim_backend other(corpus, sim_model_view{"rival", 1.0});

  chat_request req;
  req.model_id = "sim:demo";
  req.messages = {{"user", "List all atomic knowledge points."}};

  auto r1 = one.chat(req);
  auto r2 = two.chat(req);
  CHECK(r1.text == r2.text);
  CHECK(r1.prompt_tokens == estimate_tokens(req.messages[0].content));
  CHECK(r1.completion_tokens == estimate_tokens(r1.text));

  auto r3 = other.chat(req);
  CHECK(r3.text != r1.text);  // different model name, different stream
}

TEST_CASE("backend embeds known text with corpus vectors") {
  auto corpus = std::make_shared<const sim_corpus>(
      sim_corpus::generate(sim_corpus_spec{}));
  sim_backend backend(corpus, sim_model_view{"demo", 1.0});

  const auto& text = corpus->fact(5).variants[1];
  auto wire = backend.embed("sim:demo", {text, "unmapped text"});
  REQUIRE(wire.vectors.size() == 2);
  CHECK(wire.vectors[0] == corpus->variant_vector(5, 1));
  CHECK(wire.vectors[1].size() == 64);
  REQUIRE(wire.tokens.has_value());
  CHECK(*wire.tokens ==
        estimate_tokens(text) + estimate_tokens("unmapped text"));
}

TEST_CASE("factory hands out one backend per model id") {
  sim_backend_factory factory(sim_corpus_spec{});
  backend& a = factory.backend_for("sim:demo");
  backend& b = factory.backend_for("sim:demo");
  backend& c = factory.backend_for("sim:alt@50");
  CHECK(&a == &b);
  CHECK(&a != &c);
  CHECK(factory.corpus()->total_fact_count() == 180);
}

TEST_CASE("corpus spec file round-trip") {
  auto dir = std::filesystem::temp_directory_path() / "kbprobe_sim_test";
  std::filesystem::create_directories(dir);
  auto path = dir / "spec.json";

  sim_corpus_spec spec;
  spec.seed = 42;
  spec.branching = 2;
  spec.zipf_s = 1.5;
  write_corpus_spec(spec, path);
  auto copy = read_corpus_spec(path);
  CHECK(copy.seed == 42);
  CHECK(copy.branching == 2);
  CHECK(copy.zipf_s == 1.5);
  CHECK(copy.facts_per_leaf == spec.facts_per_leaf);

  CHECK_THROWS_AS(read_corpus_spec(dir / "missing.json"), error);
  std::filesystem::remove_all(dir);

  sim_corpus_spec bad;
  bad.branching = 0;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = sim_corpus_spec{};
  bad.zipf_s = 0.0;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = sim_corpus_spec{};
  bad.paraphrases_per_fact = 0;
  CHECK_THROWS_AS(bad.validate(), config_error);
}

}  // TEST_SUITE
