#include "kgzsl/synth.hpp"

#include "kgzsl/digest.hpp"
#include "kgzsl/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace kgzsl {

void WorldSpec::validate() const {
  if (seen_classes < 2) throw ConfigError("world: at least two seen classes required");
  if (unseen_classes < 1) throw ConfigError("world: at least one unseen class required");
  if (attribute_pool < 6) throw ConfigError("world: attribute pool must hold at least 6 entries");
  if (min_attributes < 1 || max_attributes < min_attributes)
    throw ConfigError("world: attribute count range is empty");
  if (max_attributes > attribute_pool)
    throw ConfigError("world: classes need more attributes than the pool holds");
  if (feature_dim <= 0 || word_dim <= 0) throw ConfigError("world: dimensions must be positive");
  if (branching < 2) throw ConfigError("world: branching must be at least 2");
  if (feature_noise < 0 || word_noise < 0) throw ConfigError("world: noise must be non-negative");
}

const VecXd& SyntheticWorld::mean_of(const std::string& label) const {
  auto it = true_means.find(label);
  if (it == true_means.end()) throw ValidationError("no true mean for class '" + label + "'");
  return it->second;
}

std::map<std::string, VecXd> compute_class_means(const KnowledgeGraph& kg,
                                                 const MatXd& attribute_directions,
                                                 double attribute_scale, double parent_weight) {
  if (attribute_directions.rows() != kg.num_attributes())
    throw StructuralError("one direction row per attribute required");
  const auto n = static_cast<std::size_t>(kg.num_classes());
  std::vector<std::vector<Index>> attrs(n);
  for (const auto& [cls, attr] : kg.has_attribute_edges)
    attrs[static_cast<std::size_t>(cls)].push_back(attr);
  // Generated taxonomies give each node at most one parent.
  std::vector<Index> parent(n, -1);
  for (const auto& [child, par] : kg.subclass_edges) parent[static_cast<std::size_t>(child)] = par;

  const Index dim = attribute_directions.cols();
  std::vector<VecXd> means(n);
  std::vector<bool> done(n, false);
  auto resolve = [&](auto&& self, Index node) -> const VecXd& {
    const auto u = static_cast<std::size_t>(node);
    if (done[u]) return means[u];
    VecXd m = VecXd::Zero(dim);
    for (Index a : attrs[u]) m += attribute_scale * attribute_directions.row(a).transpose();
    if (parent[u] >= 0) m += parent_weight * self(self, parent[u]);
    means[u] = std::move(m);
    done[u] = true;
    return means[u];
  };

  std::map<std::string, VecXd> out;
  for (Index i = 0; i < kg.num_classes(); ++i)
    out[kg.classes[static_cast<std::size_t>(i)]] = resolve(resolve, i);
  return out;
}

namespace {

std::string padded(const char* prefix, Index i) {
  std::string n = std::to_string(i);
  if (n.size() < 2) n.insert(n.begin(), '0');
  return std::string(prefix) + n;
}

}  // namespace

SyntheticWorld generate_world(const WorldSpec& spec) {
  spec.validate();
  SyntheticWorld world;
  world.spec = spec;

  const Index n_leaves = spec.seen_classes + spec.unseen_classes;
  std::vector<std::string> leaves, groups;
  for (Index i = 0; i < n_leaves; ++i) leaves.push_back(padded("class_", i));
  const Index n_groups = (n_leaves + spec.branching - 1) / spec.branching;
  for (Index gi = 0; gi < n_groups; ++gi) groups.push_back(padded("group_", gi));

  // Taxonomy triples, then attribute assignments for every class node.
  std::ostringstream triples;
  for (Index i = 0; i < n_leaves; ++i)
    triples << leaves[static_cast<std::size_t>(i)] << "\tsubClass\t"
            << groups[static_cast<std::size_t>(i / spec.branching)] << '\n';
  for (const auto& gname : groups) triples << gname << "\tsubClass\troot\n";

  SeededRng structure_rng(SeededRng::derive(spec.seed, 1));
  std::vector<std::string> all_class_nodes = leaves;
  all_class_nodes.insert(all_class_nodes.end(), groups.begin(), groups.end());
  all_class_nodes.push_back("root");
  for (const auto& cname : all_class_nodes) {
    const auto want = static_cast<std::size_t>(
        structure_rng.uniform_int(spec.min_attributes, spec.max_attributes));
    std::set<Index> chosen;
    while (chosen.size() < want)
      chosen.insert(static_cast<Index>(structure_rng.uniform_int(0, spec.attribute_pool - 1)));
    for (Index a : chosen) triples << cname << "\thasAttribute\t" << padded("attr_", a) << '\n';
  }

  {
    std::istringstream in(triples.str());
    world.kg = parse_graph(in, "generated-world");
  }

  SeededRng direction_rng(SeededRng::derive(spec.seed, 2));
  world.attribute_directions = direction_rng.gaussian_matrix(world.kg.num_attributes(),
                                                             spec.feature_dim);
  world.true_means = compute_class_means(world.kg, world.attribute_directions,
                                         spec.attribute_scale, spec.parent_weight);

  // Name vectors are noisy projections of the generative quantities: weak
  // semantics by construction, mirroring word vectors.
  SeededRng word_rng(SeededRng::derive(spec.seed, 3));
  MatXd projection = word_rng.gaussian_matrix(spec.word_dim, spec.feature_dim) /
                     std::sqrt(static_cast<double>(spec.feature_dim));
  world.class_vectors.kind = NodeKind::kClass;
  world.class_vectors.dim = spec.word_dim;
  for (const auto& name : world.kg.classes)
    world.class_vectors.vectors[name] =
        projection * world.true_means.at(name) +
        spec.word_noise * VecXd(word_rng.gaussian_matrix(spec.word_dim, 1));
  world.attribute_vectors.kind = NodeKind::kAttribute;
  world.attribute_vectors.dim = spec.word_dim;
  for (Index a = 0; a < world.kg.num_attributes(); ++a)
    world.attribute_vectors.vectors[world.kg.attributes[static_cast<std::size_t>(a)]] =
        projection * (spec.attribute_scale * world.attribute_directions.row(a).transpose()) +
        spec.word_noise * VecXd(word_rng.gaussian_matrix(spec.word_dim, 1));

  SeededRng split_rng(SeededRng::derive(spec.seed, 4));
  auto order = split_rng.permutation(leaves.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& side = static_cast<Index>(i) < spec.seen_classes ? world.labels.seen
                                                           : world.labels.unseen;
    side.push_back(leaves[order[i]]);
  }
  std::sort(world.labels.seen.begin(), world.labels.seen.end());
  std::sort(world.labels.unseen.begin(), world.labels.unseen.end());
  world.labels.validate(world.kg);
  return world;
}

namespace {

FeatureSet draw_rows(const SyntheticWorld& world, const std::vector<std::string>& classes,
                     Index per_class, Provenance (*prov)(const SyntheticWorld&, const std::string&),
                     std::uint64_t seed) {
  FeatureSet fs;
  fs.x.resize(per_class * static_cast<Index>(classes.size()), world.spec.feature_dim);
  Index r = 0;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const VecXd& mean = world.mean_of(classes[c]);
    SeededRng rng(SeededRng::derive(seed, c));
    for (Index i = 0; i < per_class; ++i, ++r) {
      fs.x.row(r) =
          (mean + world.spec.feature_noise * VecXd(rng.gaussian_matrix(mean.size(), 1)))
              .transpose();
      fs.labels.push_back(classes[c]);
      fs.provenance.push_back(prov(world, classes[c]));
    }
  }
  return fs;
}

Provenance seen_prov(const SyntheticWorld&, const std::string&) { return Provenance::kSeen; }
Provenance by_split(const SyntheticWorld& w, const std::string& label) {
  return w.labels.is_seen(label) ? Provenance::kSeen : Provenance::kUnseen;
}

}  // namespace

DatasetSplit sample_dataset(const SyntheticWorld& world, Index n_train_per_seen,
                            Index n_test_per_class, std::uint64_t seed) {
  if (n_train_per_seen < 0 || n_test_per_class < 0)
    throw ConfigError("sample sizes must be non-negative");
  DatasetSplit split;
  split.labels = world.labels;
  split.mode = Mode::kGzsl;
  split.train =
      draw_rows(world, world.labels.seen, n_train_per_seen, seen_prov, SeededRng::derive(seed, 0x7));
  std::vector<std::string> everyone = world.labels.all();
  split.test =
      draw_rows(world, everyone, n_test_per_class, by_split, SeededRng::derive(seed, 0xE));
  split.validate();
  return split;
}

std::map<std::string, double> bayes_oracle_accuracy(const SyntheticWorld& world,
                                                    const FeatureSet& test,
                                                    const std::vector<std::string>& candidates) {
  if (candidates.empty()) throw UsageError("bayes oracle needs a candidate label set");
  MatXd means(static_cast<Index>(candidates.size()), world.spec.feature_dim);
  for (std::size_t c = 0; c < candidates.size(); ++c)
    means.row(static_cast<Index>(c)) = world.mean_of(candidates[c]).transpose();

  std::map<std::string, std::pair<Index, Index>> counts;  // label -> (hits, rows)
  for (Index r = 0; r < test.rows(); ++r) {
    std::vector<Index> tied{0};
    double best_d = (test.x.row(r) - means.row(0)).squaredNorm();
    for (Index c = 1; c < means.rows(); ++c) {
      const double d = (test.x.row(r) - means.row(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        tied.assign(1, c);
      } else if (d == best_d) {
        tied.push_back(c);
      }
    }
    // Exact likelihood ties (identical means) split deterministically by a
    // row hash, so neither tied class absorbs all the mass.
    const Index best = tied[static_cast<std::size_t>(
        SeededRng::derive(0xBA1E5, static_cast<std::uint64_t>(r)) % tied.size())];
    auto& [hits, rows] = counts[test.labels[static_cast<std::size_t>(r)]];
    ++rows;
    if (candidates[static_cast<std::size_t>(best)] == test.labels[static_cast<std::size_t>(r)])
      ++hits;
  }
  std::map<std::string, double> out;
  for (const auto& [label, hr] : counts)
    out[label] = 100.0 * static_cast<double>(hr.first) / static_cast<double>(hr.second);
  return out;
}

namespace {

nlohmann::json spec_to_json(const WorldSpec& s) {
  return nlohmann::json{{"seen_classes", s.seen_classes},
                        {"unseen_classes", s.unseen_classes},
                        {"attribute_pool", s.attribute_pool},
                        {"feature_dim", s.feature_dim},
                        {"word_dim", s.word_dim},
                        {"min_attributes", s.min_attributes},
                        {"max_attributes", s.max_attributes},
                        {"branching", s.branching},
                        {"attribute_scale", s.attribute_scale},
                        {"parent_weight", s.parent_weight},
                        {"feature_noise", s.feature_noise},
                        {"word_noise", s.word_noise},
                        {"seed", s.seed}};
}

WorldSpec spec_from_json(const nlohmann::json& j) {
  WorldSpec s;
  s.seen_classes = j.at("seen_classes").get<Index>();
  s.unseen_classes = j.at("unseen_classes").get<Index>();
  s.attribute_pool = j.at("attribute_pool").get<Index>();
  s.feature_dim = j.at("feature_dim").get<Index>();
  s.word_dim = j.at("word_dim").get<Index>();
  s.min_attributes = j.at("min_attributes").get<int>();
  s.max_attributes = j.at("max_attributes").get<int>();
  s.branching = j.at("branching").get<Index>();
  s.attribute_scale = j.at("attribute_scale").get<double>();
  s.parent_weight = j.at("parent_weight").get<double>();
  s.feature_noise = j.at("feature_noise").get<double>();
  s.word_noise = j.at("word_noise").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

std::string file_digest(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return Digest::of_string(buf.str());
}

}  // namespace

WorldFiles write_world_files(const SyntheticWorld& world, const DatasetSplit& split,
                             const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  WorldFiles files;
  files.kg = dir / "kg.tsv";
  files.class_vectors = dir / "class_vectors.tsv";
  files.attribute_vectors = dir / "attribute_vectors.tsv";
  files.train_features = dir / "train_features.tsv";
  files.test_features = dir / "test_features.tsv";
  files.manifest = dir / "world_manifest.json";

  save_graph(world.kg, files.kg);
  save_name_vectors(world.class_vectors, files.class_vectors);
  save_name_vectors(world.attribute_vectors, files.attribute_vectors);
  save_features(split.train, files.train_features);
  save_features(split.test, files.test_features);

  nlohmann::json j;
  j["spec"] = spec_to_json(world.spec);
  j["labels"]["seen"] = world.labels.seen;
  j["labels"]["unseen"] = world.labels.unseen;
  const std::map<std::string, std::filesystem::path> named = {
      {"kg", files.kg},
      {"class_vectors", files.class_vectors},
      {"attribute_vectors", files.attribute_vectors},
      {"train_features", files.train_features},
      {"test_features", files.test_features}};
  for (const auto& [key, path] : named) {
    j["files"][key] = path.filename().string();
    j["digests"][key] = file_digest(path);
  }
  std::ofstream out(files.manifest, std::ios::binary);
  if (!out) throw ValidationError("cannot write manifest '" + files.manifest.string() + "'");
  out << j.dump(2) << '\n';
  return files;
}

WorldManifest load_world_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.filename().string() + ": " + e.what());
  }
  WorldManifest m;
  try {
    m.spec = spec_from_json(j.at("spec"));
    m.labels.seen = j.at("labels").at("seen").get<std::vector<std::string>>();
    m.labels.unseen = j.at("labels").at("unseen").get<std::vector<std::string>>();
    for (const auto& [key, value] : j.at("digests").items())
      m.digests[key] = value.get<std::string>();
    for (const auto& [key, value] : j.at("files").items())
      m.files[key] = value.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.filename().string() + ": " + e.what());
  }
  return m;
}

}  // namespace kgzsl
