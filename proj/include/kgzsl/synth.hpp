#pragma once

#include "kgzsl/common.hpp"
#include "kgzsl/dataset.hpp"
#include "kgzsl/features.hpp"
#include "kgzsl/kg.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

// Synthetic worlds with a known generative story: a class taxonomy whose
// nodes carry attribute annotations, per-attribute latent directions in
// feature space, and class-conditional Gaussians whose means are exactly
// determined by the KG content (attribute sum plus a weighted parent
// component). Knowledge transfer to unseen classes is therefore testable
// against a Bayes oracle.

namespace kgzsl {

struct WorldSpec {
  Index seen_classes = 5;
  Index unseen_classes = 11;
  Index attribute_pool = 15;
  Index feature_dim = 32;
  Index word_dim = 16;
  int min_attributes = 3;
  int max_attributes = 6;
  Index branching = 4;  // taxonomy fan-out per internal node
  double attribute_scale = 1.0;
  double parent_weight = 0.3;
  double feature_noise = 0.5;  // isotropic sigma of the class-conditional Gaussians
  double word_noise = 0.1;     // noise added to projected name vectors
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticWorld {
  WorldSpec spec;
  KnowledgeGraph kg;
  LabelSpace labels;  // leaf classes only
  NameVectors class_vectors;
  NameVectors attribute_vectors;
  MatXd attribute_directions;  // one row per kg.attributes entry
  std::map<std::string, VecXd> true_means;

  const VecXd& mean_of(const std::string& label) const;
};

// Class means recomputed from KG content alone: for each class node,
// attribute_scale * sum of its attribute directions plus parent_weight
// times the parent's mean (roots have no parent term).
std::map<std::string, VecXd> compute_class_means(const KnowledgeGraph& kg,
                                                 const MatXd& attribute_directions,
                                                 double attribute_scale, double parent_weight);

SyntheticWorld generate_world(const WorldSpec& spec);

// Seen-class training rows plus test rows for every leaf class, all drawn
// from the true class-conditional distributions.
DatasetSplit sample_dataset(const SyntheticWorld& world, Index n_train_per_seen,
                            Index n_test_per_class, std::uint64_t seed);

// Maximum-likelihood accuracy ceiling under the true distributions:
// nearest true mean over the candidate label set, per-class top-1 accuracy.
std::map<std::string, double> bayes_oracle_accuracy(const SyntheticWorld& world,
                                                    const FeatureSet& test,
                                                    const std::vector<std::string>& candidates);

struct WorldFiles {
  std::filesystem::path kg;
  std::filesystem::path class_vectors;
  std::filesystem::path attribute_vectors;
  std::filesystem::path train_features;
  std::filesystem::path test_features;
  std::filesystem::path manifest;
};

// Emits the KG, the two name-vector files, sampled train/test features, and
// a JSON manifest recording the spec, the label split, and file digests.
WorldFiles write_world_files(const SyntheticWorld& world, const DatasetSplit& split,
                             const std::filesystem::path& dir);

struct WorldManifest {
  WorldSpec spec;
  LabelSpace labels;
  std::map<std::string, std::string> digests;  // file key -> content digest
  std::map<std::string, std::string> files;    // file key -> path
};

WorldManifest load_world_manifest(const std::filesystem::path& path);

}  // namespace kgzsl
