#include "kgzsl/kg.hpp"

#include "kgzsl/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace kgzsl {

namespace {

std::vector<std::string> split_on(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

[[noreturn]] void parse_fail(const std::string& source, std::size_t lineno, const std::string& what) {
  throw ParseError(source + ":" + std::to_string(lineno) + ": " + what);
}

// Sorted-unique insertion order for node names, applied after parsing.
Index index_of(const std::map<std::string, Index>& index, const std::string& name) {
  return index.at(name);
}

void check_acyclic_subclass(const KnowledgeGraph& kg) {
  // Iterative three-color DFS over child -> parent edges.
  const auto n = static_cast<std::size_t>(kg.num_classes());
  std::vector<std::vector<Index>> out(n);
  for (const auto& [child, parent] : kg.subclass_edges)
    out[static_cast<std::size_t>(child)].push_back(parent);
  std::vector<int> color(n, 0);  // 0 unvisited, 1 on stack, 2 done
  for (std::size_t root = 0; root < n; ++root) {
    if (color[root] != 0) continue;
    std::vector<std::pair<Index, std::size_t>> stack{{static_cast<Index>(root), 0}};
    color[root] = 1;
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      const auto& succ = out[static_cast<std::size_t>(node)];
      if (next < succ.size()) {
        const Index to = succ[next++];
        if (color[static_cast<std::size_t>(to)] == 1)
          throw ValidationError("subClass cycle through '" +
                                kg.classes[static_cast<std::size_t>(to)] + "'");
        if (color[static_cast<std::size_t>(to)] == 0) {
          color[static_cast<std::size_t>(to)] = 1;
          stack.emplace_back(to, 0);
        }
      } else {
        color[static_cast<std::size_t>(node)] = 2;
        stack.pop_back();
      }
    }
  }
}

VecXd parse_reals(const std::string& field, const std::string& source, std::size_t lineno) {
  const auto parts = split_on(field, ',');
  VecXd v(static_cast<Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& p = parts[i];
    double value = 0.0;
    const auto* end = p.data() + p.size();
    auto [ptr, ec] = std::from_chars(p.data(), end, value);
    if (ec != std::errc() || ptr != end)
      parse_fail(source, lineno, "malformed real '" + p + "'");
    v(static_cast<Index>(i)) = value;
  }
  return v;
}

}  // namespace

std::string format_real(double v) {
  char buf[40];
  // Shortest representation that parses back to the same double.
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) return buf;
  }
  return buf;
}

KnowledgeGraph parse_graph(std::istream& in, const std::string& source) {
  std::set<std::string> class_names, attribute_names;
  std::vector<std::tuple<std::string, std::string, std::string>> triples;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_on(line, '\t');
    if (fields.size() != 3)
      parse_fail(source, lineno, "expected subject<TAB>relation<TAB>object");
    const auto& [s, r, o] = std::tie(fields[0], fields[1], fields[2]);
    if (s.empty() || o.empty()) parse_fail(source, lineno, "empty node name");
    if (r == "subClass") {
      class_names.insert(s);
      class_names.insert(o);
    } else if (r == "hasAttribute") {
      class_names.insert(s);
      attribute_names.insert(o);
    } else {
      parse_fail(source, lineno, "unknown relation '" + r + "'");
    }
    triples.emplace_back(s, r, o);
  }

  KnowledgeGraph kg;
  kg.classes.assign(class_names.begin(), class_names.end());
  kg.attributes.assign(attribute_names.begin(), attribute_names.end());
  for (Index i = 0; i < kg.num_classes(); ++i)
    kg.class_index[kg.classes[static_cast<std::size_t>(i)]] = i;
  for (Index i = 0; i < kg.num_attributes(); ++i)
    kg.attribute_index[kg.attributes[static_cast<std::size_t>(i)]] = i;

  std::set<std::pair<Index, Index>> sub, attr;
  for (const auto& [s, r, o] : triples) {
    if (r == "subClass")
      sub.emplace(index_of(kg.class_index, s), index_of(kg.class_index, o));
    else
      attr.emplace(index_of(kg.class_index, s), index_of(kg.attribute_index, o));
  }
  kg.subclass_edges.assign(sub.begin(), sub.end());
  kg.has_attribute_edges.assign(attr.begin(), attr.end());

  check_acyclic_subclass(kg);
  return kg;
}

KnowledgeGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open KG file '" + path.string() + "'");
  return parse_graph(in, path.filename().string());
}

std::string graph_to_text(const KnowledgeGraph& kg) {
  std::ostringstream os;
  for (const auto& [child, parent] : kg.subclass_edges)
    os << kg.classes[static_cast<std::size_t>(child)] << '\t' << "subClass" << '\t'
       << kg.classes[static_cast<std::size_t>(parent)] << '\n';
  for (const auto& [cls, attr] : kg.has_attribute_edges)
    os << kg.classes[static_cast<std::size_t>(cls)] << '\t' << "hasAttribute" << '\t'
       << kg.attributes[static_cast<std::size_t>(attr)] << '\n';
  return os.str();
}

void save_graph(const KnowledgeGraph& kg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write KG file '" + path.string() + "'");
  out << graph_to_text(kg);
}

namespace {

void add_undirected(GraphView& view, Index a, Index b) {
  const auto edge = std::minmax(a, b);
  view.edges.emplace_back(edge.first, edge.second);
}

void finish_view(GraphView& view) {
  std::sort(view.edges.begin(), view.edges.end());
  view.edges.erase(std::unique(view.edges.begin(), view.edges.end()), view.edges.end());
  view.neighbors.assign(static_cast<std::size_t>(view.node_count()), {});
  for (const auto& [a, b] : view.edges) {
    view.neighbors[static_cast<std::size_t>(a)].push_back(b);
    view.neighbors[static_cast<std::size_t>(b)].push_back(a);
  }
  for (auto& adj : view.neighbors) std::sort(adj.begin(), adj.end());
}

}  // namespace

std::pair<GraphView, GraphView> extract_views(const KnowledgeGraph& kg) {
  GraphView cls;
  cls.kind = ViewKind::kClassView;
  cls.nodes = kg.classes;
  cls.class_count = kg.num_classes();
  for (const auto& [child, parent] : kg.subclass_edges) add_undirected(cls, child, parent);
  finish_view(cls);

  GraphView attr;
  attr.kind = ViewKind::kAttributeView;
  attr.nodes = kg.classes;
  attr.nodes.insert(attr.nodes.end(), kg.attributes.begin(), kg.attributes.end());
  attr.class_count = kg.num_classes();
  for (const auto& [cls_i, attr_i] : kg.has_attribute_edges)
    add_undirected(attr, cls_i, kg.num_classes() + attr_i);
  finish_view(attr);

  return {std::move(cls), std::move(attr)};
}

bool LabelSpace::is_seen(const std::string& label) const {
  return std::binary_search(seen.begin(), seen.end(), label);
}

bool LabelSpace::is_unseen(const std::string& label) const {
  return std::binary_search(unseen.begin(), unseen.end(), label);
}

std::vector<std::string> LabelSpace::all() const {
  std::vector<std::string> out;
  out.reserve(seen.size() + unseen.size());
  std::merge(seen.begin(), seen.end(), unseen.begin(), unseen.end(), std::back_inserter(out));
  return out;
}

void LabelSpace::validate(const KnowledgeGraph& kg) const {
  for (const auto* side : {&seen, &unseen}) {
    if (!std::is_sorted(side->begin(), side->end()))
      throw ValidationError("label sets must be sorted");
    for (const auto& label : *side)
      if (kg.class_index.count(label) == 0)
        throw ValidationError("label '" + label + "' has no class node in the KG");
  }
  for (const auto& label : seen)
    if (is_unseen(label))
      throw ValidationError("label '" + label + "' appears as both seen and unseen");
}

DecoderEdgeSets edge_sets_for_decoder(const GraphView& view, const NegativePolicy& policy) {
  if (view.edge_count() == 0)
    throw UsageError("decoder edge sets are undefined for a view with zero edges");

  DecoderEdgeSets out;
  out.positives = view.edges;
  std::set<std::pair<Index, Index>> positive_set(view.edges.begin(), view.edges.end());

  const Index n = view.node_count();
  const Index nc = view.class_count;
  const Index na = n - nc;
  // Admissible pairs: unordered class pairs for the class view, one class
  // with one attribute for the bipartite attribute view.
  const std::size_t admissible =
      view.kind == ViewKind::kClassView
          ? static_cast<std::size_t>(nc) * static_cast<std::size_t>(nc - 1) / 2
          : static_cast<std::size_t>(nc) * static_cast<std::size_t>(na);
  const std::size_t complement = admissible - positive_set.size();

  const bool exhaustive =
      policy.mode == NegativeMode::kExhaustive ||
      (policy.mode == NegativeMode::kAuto && admissible <= policy.exhaustive_threshold);

  if (exhaustive) {
    out.negatives.reserve(complement);
    if (view.kind == ViewKind::kClassView) {
      for (Index i = 0; i < nc; ++i)
        for (Index j = i + 1; j < nc; ++j)
          if (!positive_set.count({i, j})) out.negatives.emplace_back(i, j);
    } else {
      for (Index i = 0; i < nc; ++i)
        for (Index j = nc; j < n; ++j)
          if (!positive_set.count({i, j})) out.negatives.emplace_back(i, j);
    }
  } else {
    const auto want = std::min(
        complement, static_cast<std::size_t>(policy.ratio * static_cast<double>(out.positives.size())));
    SeededRng rng(policy.seed);
    std::set<std::pair<Index, Index>> chosen;
    while (chosen.size() < want) {
      Index a, b;
      if (view.kind == ViewKind::kClassView) {
        a = static_cast<Index>(rng.uniform_int(0, nc - 1));
        b = static_cast<Index>(rng.uniform_int(0, nc - 1));
        if (a == b) continue;
        if (a > b) std::swap(a, b);
      } else {
        a = static_cast<Index>(rng.uniform_int(0, nc - 1));
        b = nc + static_cast<Index>(rng.uniform_int(0, na - 1));
      }
      if (positive_set.count({a, b})) continue;
      chosen.emplace(a, b);
    }
    out.negatives.assign(chosen.begin(), chosen.end());
  }

  // A complete view has no unlinked pairs; the negative term vanishes.
  out.weight = out.negatives.empty() ? 0.0
                                     : static_cast<double>(out.positives.size()) /
                                           static_cast<double>(out.negatives.size());
  return out;
}

const VecXd& NameVectors::at(const std::string& name) const {
  auto it = vectors.find(name);
  if (it == vectors.end())
    throw ValidationError("missing name vector for node '" + name + "'");
  return it->second;
}

NameVectors parse_name_vectors(std::istream& in, const std::string& source) {
  NameVectors nv;
  std::string line;
  std::size_t lineno = 0;

  if (!std::getline(in, line)) throw ParseError(source + ": empty name-vector file");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  {
    std::istringstream header(line);
    std::string tag, kind;
    long dim = -1;
    header >> tag >> kind >> dim;
    if (tag != "name_vectors" || dim <= 0)
      parse_fail(source, lineno, "expected header 'name_vectors <node-kind> <dimension>'");
    if (kind == "class")
      nv.kind = NodeKind::kClass;
    else if (kind == "attribute")
      nv.kind = NodeKind::kAttribute;
    else
      parse_fail(source, lineno, "unknown node kind '" + kind + "'");
    nv.dim = static_cast<Index>(dim);
  }

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_on(line, '\t');
    if (fields.size() != 2) parse_fail(source, lineno, "expected name<TAB>v1,v2,...");
    VecXd v = parse_reals(fields[1], source, lineno);
    if (v.size() != nv.dim)
      parse_fail(source, lineno, "vector has " + std::to_string(v.size()) +
                                     " entries, header declares " + std::to_string(nv.dim));
    if (!nv.vectors.emplace(fields[0], std::move(v)).second)
      parse_fail(source, lineno, "duplicate name '" + fields[0] + "'");
  }
  return nv;
}

NameVectors load_name_vectors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open name-vector file '" + path.string() + "'");
  return parse_name_vectors(in, path.filename().string());
}

std::string name_vectors_to_text(const NameVectors& nv) {
  std::ostringstream os;
  os << "name_vectors " << (nv.kind == NodeKind::kClass ? "class" : "attribute") << ' ' << nv.dim
     << '\n';
  for (const auto& [name, v] : nv.vectors) {
    os << name << '\t';
    for (Index i = 0; i < v.size(); ++i) {
      if (i) os << ',';
      os << format_real(v(i));
    }
    os << '\n';
  }
  return os.str();
}

void save_name_vectors(const NameVectors& nv, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write name-vector file '" + path.string() + "'");
  out << name_vectors_to_text(nv);
}

}  // namespace kgzsl
