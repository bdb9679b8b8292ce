#pragma once

#include "kgzsl/common.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace kgzsl {

enum class NodeKind { kClass, kAttribute };

// Two-view knowledge graph: class nodes under directed subClass edges plus
// attribute nodes attached to classes via hasAttribute edges. Nodes are
// ordered lexicographically within kind, so loading is deterministic.
struct KnowledgeGraph {
  std::vector<std::string> classes;
  std::vector<std::string> attributes;
  std::map<std::string, Index> class_index;
  std::map<std::string, Index> attribute_index;
  std::vector<std::pair<Index, Index>> subclass_edges;       // (child, parent)
  std::vector<std::pair<Index, Index>> has_attribute_edges;  // (class, attribute)

  Index num_classes() const { return static_cast<Index>(classes.size()); }
  Index num_attributes() const { return static_cast<Index>(attributes.size()); }

  bool operator==(const KnowledgeGraph&) const = default;
};

// One triple per line: subject<TAB>relation<TAB>object, relations restricted
// to {subClass, hasAttribute}; '#' starts a comment line.
KnowledgeGraph parse_graph(std::istream& in, const std::string& source);
KnowledgeGraph load_graph(const std::filesystem::path& path);
std::string graph_to_text(const KnowledgeGraph& kg);
void save_graph(const KnowledgeGraph& kg, const std::filesystem::path& path);

enum class ViewKind { kClassView, kAttributeView };

// Per-view neighborhood structure with the undirected interpretation used
// for GCN aggregation. In the attribute view, nodes list the classes first
// and then the attributes.
struct GraphView {
  ViewKind kind = ViewKind::kClassView;
  std::vector<std::string> nodes;
  Index class_count = 0;
  std::vector<std::vector<Index>> neighbors;
  std::vector<std::pair<Index, Index>> edges;  // unique, first < second

  Index node_count() const { return static_cast<Index>(nodes.size()); }
  Index edge_count() const { return static_cast<Index>(edges.size()); }
};

std::pair<GraphView, GraphView> extract_views(const KnowledgeGraph& kg);

// Seen/unseen label sets; labels name KG class nodes directly.
struct LabelSpace {
  std::vector<std::string> seen;
  std::vector<std::string> unseen;

  bool is_seen(const std::string& label) const;
  bool is_unseen(const std::string& label) const;
  std::vector<std::string> all() const;  // union, sorted

  // Disjointness and existence of every label's class node.
  void validate(const KnowledgeGraph& kg) const;
};

enum class NegativeMode { kAuto, kExhaustive, kSampled };

struct NegativePolicy {
  NegativeMode mode = NegativeMode::kAuto;
  double ratio = 5.0;  // negatives per positive under sampling
  // Candidate-pair count above which kAuto switches to sampling.
  std::size_t exhaustive_threshold = 10000;
  std::uint64_t seed = 0;
};

// Link sets feeding the inner-product decoder: observed pairs, unlinked
// admissible pairs, and the positive/negative balance weight |pos|/|neg|.
struct DecoderEdgeSets {
  std::vector<std::pair<Index, Index>> positives;
  std::vector<std::pair<Index, Index>> negatives;
  double weight = 0.0;
};

DecoderEdgeSets edge_sets_for_decoder(const GraphView& view, const NegativePolicy& policy);

// Initial node representations, one file per node kind.
// Header `name_vectors <node-kind> <dimension>`, then name<TAB>v1,v2,...
struct NameVectors {
  NodeKind kind = NodeKind::kClass;
  Index dim = 0;
  std::map<std::string, VecXd> vectors;

  const VecXd& at(const std::string& name) const;
  bool contains(const std::string& name) const { return vectors.count(name) != 0; }
};

NameVectors parse_name_vectors(std::istream& in, const std::string& source);
NameVectors load_name_vectors(const std::filesystem::path& path);
std::string name_vectors_to_text(const NameVectors& nv);
void save_name_vectors(const NameVectors& nv, const std::filesystem::path& path);

// Canonical decimal rendering used by every text format; shortest text that
// round-trips the double exactly.
std::string format_real(double v);

}  // namespace kgzsl
