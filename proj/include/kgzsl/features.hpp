#pragma once

#include "kgzsl/common.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace kgzsl {

enum class Provenance { kSeen, kUnseen, kSynthetic };

const char* provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& name);

// Visual feature rows with class labels and a provenance tag.
struct FeatureSet {
  MatXd x;
  std::vector<std::string> labels;
  std::vector<Provenance> provenance;

  Index rows() const { return x.rows(); }
  Index dim() const { return x.cols(); }

  void append(const FeatureSet& other);
  void validate() const;
  // Digest over the canonical text serialization.
  std::string digest() const;
  // Row indices per label, labels sorted.
  std::vector<std::pair<std::string, std::vector<Index>>> rows_by_label() const;
};

// Text mode: header `features <rows> <dim>`, then label<TAB>provenance<TAB>
// comma-separated reals. Binary mode: magic KGZSLFEA, row/dim extents, then
// per row a length-prefixed label, a provenance byte, and the row as
// little-endian IEEE-754 single precision.
std::string features_to_text(const FeatureSet& fs);
FeatureSet parse_features_text(std::istream& in, const std::string& source);
void save_features(const FeatureSet& fs, const std::filesystem::path& path, bool binary = false);
FeatureSet load_features(const std::filesystem::path& path);

}  // namespace kgzsl
