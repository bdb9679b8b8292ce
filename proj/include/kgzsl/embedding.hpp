#pragma once

#include "kgzsl/common.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace kgzsl {

// Per-class embeddings from the two graph views; the full class embedding
// is the class-view part followed by the attribute-view part. Either part
// may be zero-dimensional under view ablations.
struct ClassEmbeddingTable {
  std::vector<std::string> classes;
  std::map<std::string, Index> index;
  MatXd class_view;      // n x dim_c
  MatXd attribute_view;  // n x dim_a
  std::string provenance;  // digest of the producing configuration

  Index size() const { return static_cast<Index>(classes.size()); }
  Index dim_c() const { return class_view.cols(); }
  Index dim_a() const { return attribute_view.cols(); }
  Index dim() const { return dim_c() + dim_a(); }

  bool contains(const std::string& name) const { return index.count(name) != 0; }
  // [g^c; g^a] for one class, as a row vector.
  VecXd embedding(const std::string& name) const;
  MatXd full() const;  // n x dim
  void validate() const;
};

ClassEmbeddingTable make_embedding_table(std::vector<std::string> classes, MatXd class_view,
                                         MatXd attribute_view);

// Header `class_embeddings <n> <dim_c> <dim_a>`, then
// name<TAB>gc1,gc2,...<TAB>ga1,ga2,... with an empty field for a
// zero-dimensional part.
std::string embeddings_to_text(const ClassEmbeddingTable& table);
ClassEmbeddingTable parse_embeddings(std::istream& in, const std::string& source);
void save_embeddings(const ClassEmbeddingTable& table, const std::filesystem::path& path);
ClassEmbeddingTable load_embeddings(const std::filesystem::path& path);

}  // namespace kgzsl
