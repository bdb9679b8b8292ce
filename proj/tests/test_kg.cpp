#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kgzsl/kg.hpp"
#include "kgzsl/rng.hpp"

#include <set>
#include <sstream>

using namespace kgzsl;

namespace {

KnowledgeGraph from_text(const std::string& text) {
  std::istringstream in(text);
  return parse_graph(in, "inline");
}

const char* kZooGraph =
    "horse\tsubClass\tequine\n"
    "zebra\tsubClass\tequine\n"
    "zebra\thasAttribute\tstripe\n";

}  // namespace

TEST_CASE("load: three triples give 3 classes, 1 attribute, 2+1 edges") {
  auto kg = from_text(kZooGraph);
  CHECK(kg.num_classes() == 3);
  CHECK(kg.num_attributes() == 1);
  CHECK(kg.subclass_edges.size() == 2);
  CHECK(kg.has_attribute_edges.size() == 1);
  CHECK(kg.class_index.count("equine") == 1);
  CHECK(kg.attribute_index.count("stripe") == 1);
}

TEST_CASE("load: repeated triples deduplicate") {
  auto kg = from_text(
      "zebra\tsubClass\tequine\n"
      "zebra\tsubClass\tequine\n");
  CHECK(kg.subclass_edges.size() == 1);
}

TEST_CASE("load: unknown relation fails with its line number") {
  std::istringstream in(
      "# comment\n"
      "zebra\tsubClass\tequine\n"
      "zebra\teats\tgrass\n");
  CHECK_THROWS_WITH_AS(parse_graph(in, "zoo.tsv"), doctest::Contains("zoo.tsv:3"), ParseError);
}

TEST_CASE("load: subClass cycle is a validation error") {
  CHECK_THROWS_AS(from_text("a\tsubClass\tb\n"
                            "b\tsubClass\tc\n"
                            "c\tsubClass\ta\n"),
                  ValidationError);
  CHECK_THROWS_AS(from_text("a\tsubClass\ta\n"), ValidationError);
}

TEST_CASE("save/load round-trips the graph exactly") {
  auto kg = from_text(kZooGraph);
  auto text = graph_to_text(kg);
  std::istringstream in(text);
  auto back = parse_graph(in, "roundtrip");
  CHECK(kg == back);
}

TEST_CASE("views: direct read-off of the zoo graph") {
  auto kg = from_text(kZooGraph);
  auto [cls, attr] = extract_views(kg);

  CHECK(cls.node_count() == 3);
  CHECK(cls.edge_count() == 2);
  const Index zebra = kg.class_index.at("zebra");
  const Index equine = kg.class_index.at("equine");
  const Index horse = kg.class_index.at("horse");
  REQUIRE(cls.neighbors[static_cast<std::size_t>(zebra)].size() == 1);
  CHECK(cls.neighbors[static_cast<std::size_t>(zebra)][0] == equine);

  CHECK(attr.node_count() == 4);
  CHECK(attr.class_count == 3);
  CHECK(attr.edge_count() == 1);
  REQUIRE(attr.neighbors[static_cast<std::size_t>(zebra)].size() == 1);
  CHECK(attr.nodes[static_cast<std::size_t>(attr.neighbors[static_cast<std::size_t>(zebra)][0])] ==
        "stripe");
  CHECK(attr.neighbors[static_cast<std::size_t>(horse)].empty());
}

TEST_CASE("views: no hasAttribute edges yields an attribute view with empty neighborhoods") {
  auto kg = from_text("horse\tsubClass\tequine\n");
  auto [cls, attr] = extract_views(kg);
  CHECK(attr.edge_count() == 0);
  for (const auto& adj : attr.neighbors) CHECK(adj.empty());
}

TEST_CASE("views: edge multisets partition the input edges by relation") {
  // Random 20-node graphs; brute-force partition check.
  SeededRng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    std::ostringstream os;
    std::set<std::pair<int, int>> sub_in;
    std::set<std::pair<int, int>> attr_in;
    for (int e = 0; e < 24; ++e) {
      // Parent index above child index keeps the taxonomy acyclic.
      int child = static_cast<int>(rng.uniform_int(0, 10));
      int parent = 11 + static_cast<int>(rng.uniform_int(0, 2));
      os << "c" << child << "\tsubClass\tc" << parent << "\n";
      sub_in.emplace(child, parent);
      int cls = static_cast<int>(rng.uniform_int(0, 13));
      int attr = static_cast<int>(rng.uniform_int(0, 5));
      os << "c" << cls << "\thasAttribute\ta" << attr << "\n";
      attr_in.emplace(cls, attr);
    }
    auto kg = from_text(os.str());
    auto [cls_view, attr_view] = extract_views(kg);
    CHECK(cls_view.edge_count() == static_cast<Index>(sub_in.size()));
    CHECK(attr_view.edge_count() == static_cast<Index>(attr_in.size()));
    // Every class-view edge is a subClass edge of the input and vice versa.
    std::set<std::pair<std::string, std::string>> want;
    for (const auto& [c, p] : sub_in) {
      std::string a = "c" + std::to_string(c), b = "c" + std::to_string(p);
      want.insert({std::min(a, b), std::max(a, b)});
    }
    std::set<std::pair<std::string, std::string>> got;
    for (const auto& [a, b] : cls_view.edges)
      got.insert({cls_view.nodes[static_cast<std::size_t>(a)],
                  cls_view.nodes[static_cast<std::size_t>(b)]});
    CHECK(got == want);
  }
}

TEST_CASE("decoder edges: exhaustive counting on the class view") {
  auto kg = from_text(
      "a\tsubClass\tc\n"
      "b\tsubClass\tc\n"
      "d\thasAttribute\tx\n");
  auto [cls, attr] = extract_views(kg);
  REQUIRE(cls.node_count() == 4);
  auto sets = edge_sets_for_decoder(cls, {});
  CHECK(sets.positives.size() == 2);
  CHECK(sets.negatives.size() == 4);  // C(4,2) - 2
  CHECK(sets.weight == doctest::Approx(0.5));
}

TEST_CASE("decoder edges: bipartite admissible pairs only") {
  auto kg = from_text(
      "c1\thasAttribute\ta1\n"
      "c2\tsubClass\tc1\n"
      "c1\thasAttribute\ta2\n");
  auto [cls, attr] = extract_views(kg);
  // 2 classes x 2 attributes with 2 links -> 2 negatives.
  auto sets = edge_sets_for_decoder(attr, {});
  CHECK(sets.positives.size() == 2);
  CHECK(sets.negatives.size() == 2);
  for (const auto& [i, j] : sets.negatives) {
    CHECK(i < attr.class_count);
    CHECK(j >= attr.class_count);
  }
}

TEST_CASE("decoder edges: one bipartite link among 2x2 leaves 3 negatives") {
  GraphView view;
  view.kind = ViewKind::kAttributeView;
  view.nodes = {"c1", "c2", "a1", "a2"};
  view.class_count = 2;
  view.edges = {{0, 2}};
  view.neighbors = {{2}, {}, {0}, {}};
  auto sets = edge_sets_for_decoder(view, {});
  CHECK(sets.positives.size() == 1);
  CHECK(sets.negatives.size() == 3);
  CHECK(sets.weight == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("decoder edges: sampled policy draws ratio negatives disjoint from positives") {
  SeededRng rng(3);
  std::ostringstream os;
  for (int c = 0; c < 12; ++c)
    for (int rep = 0; rep < 2; ++rep)
      os << "c" << c << "\thasAttribute\ta" << rng.uniform_int(0, 29) << "\n";
  auto kg = from_text(os.str());
  auto [cls, attr] = extract_views(kg);

  NegativePolicy policy;
  policy.mode = NegativeMode::kSampled;
  policy.ratio = 5.0;
  policy.seed = 17;
  auto sets = edge_sets_for_decoder(attr, policy);
  CHECK(sets.negatives.size() == 5 * sets.positives.size());
  CHECK(sets.weight == doctest::Approx(0.2));

  std::set<std::pair<Index, Index>> pos(sets.positives.begin(), sets.positives.end());
  std::set<std::pair<Index, Index>> neg(sets.negatives.begin(), sets.negatives.end());
  CHECK(neg.size() == sets.negatives.size());  // no duplicates
  for (const auto& p : sets.negatives) {
    CHECK(pos.count(p) == 0);
    CHECK(p.first < attr.class_count);
    CHECK(p.second >= attr.class_count);
  }

  // Same seed, same draw.
  auto again = edge_sets_for_decoder(attr, policy);
  CHECK(again.negatives == sets.negatives);
}

TEST_CASE("decoder edges: zero-edge view is a usage error") {
  auto kg = from_text("horse\tsubClass\tequine\n");
  auto [cls, attr] = extract_views(kg);
  CHECK_THROWS_AS((void)edge_sets_for_decoder(attr, {}), UsageError);
}

TEST_CASE("label space validates disjointness and membership") {
  auto kg = from_text(kZooGraph);
  LabelSpace ok{{"horse"}, {"zebra"}};
  CHECK_NOTHROW(ok.validate(kg));

  LabelSpace overlap{{"horse"}, {"horse"}};
  CHECK_THROWS_AS(overlap.validate(kg), ValidationError);

  LabelSpace dangling{{"horse"}, {"unicorn"}};
  CHECK_THROWS_AS(dangling.validate(kg), ValidationError);
}

TEST_CASE("name vectors: parse, validate, round-trip") {
  std::istringstream in(
      "name_vectors class 3\n"
      "horse\t1,2.5,-3\n"
      "zebra\t0.125,0,7\n");
  auto nv = parse_name_vectors(in, "vec.tsv");
  CHECK(nv.dim == 3);
  CHECK(nv.at("horse")(1) == 2.5);
  CHECK_THROWS_AS((void)nv.at("tiger"), ValidationError);

  std::istringstream back(name_vectors_to_text(nv));
  auto nv2 = parse_name_vectors(back, "roundtrip");
  CHECK(nv2.vectors.size() == 2);
  CHECK(nv2.at("zebra")(0) == 0.125);

  std::istringstream bad(
      "name_vectors class 3\n"
      "horse\t1,2\n");
  CHECK_THROWS_WITH_AS(parse_name_vectors(bad, "vec.tsv"), doctest::Contains("vec.tsv:2"),
                       ParseError);
}
