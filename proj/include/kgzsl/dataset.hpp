#pragma once

#include "kgzsl/common.hpp"
#include "kgzsl/features.hpp"
#include "kgzsl/kg.hpp"

namespace kgzsl {

enum class Mode { kZsl, kGzsl };

inline const char* mode_name(Mode m) { return m == Mode::kZsl ? "zsl" : "gzsl"; }

inline Mode mode_from_name(const std::string& name) {
  if (name == "zsl") return Mode::kZsl;
  if (name == "gzsl") return Mode::kGzsl;
  throw ConfigError("unknown mode '" + name + "' (expected zsl or gzsl)");
}

// Real training rows, test rows, and the label split they draw from.
struct DatasetSplit {
  FeatureSet train;  // real seen features
  FeatureSet test;
  LabelSpace labels;
  Mode mode = Mode::kZsl;

  // Test rows restricted to the mode's candidate space (ZSL drops seen-class
  // rows); train rows are unchanged.
  DatasetSplit restricted(Mode m) const {
    DatasetSplit out;
    out.train = train;
    out.labels = labels;
    out.mode = m;
    if (m == Mode::kGzsl) {
      out.test = test;
      return out;
    }
    out.test.x.resize(0, test.dim());
    for (Index r = 0; r < test.rows(); ++r) {
      if (!labels.is_unseen(test.labels[static_cast<std::size_t>(r)])) continue;
      out.test.x.conservativeResize(out.test.rows() + 1, test.dim());
      out.test.x.row(out.test.rows() - 1) = test.x.row(r);
      out.test.labels.push_back(test.labels[static_cast<std::size_t>(r)]);
      out.test.provenance.push_back(test.provenance[static_cast<std::size_t>(r)]);
    }
    return out;
  }

  std::vector<std::string> candidate_labels() const {
    return mode == Mode::kZsl ? labels.unseen : labels.all();
  }

  void validate() const {
    train.validate();
    test.validate();
    for (const auto& l : train.labels)
      if (!labels.is_seen(l))
        throw ValidationError("train row labeled '" + l + "' is not a seen class");
    for (const auto& l : test.labels) {
      const bool ok = mode == Mode::kZsl ? labels.is_unseen(l)
                                         : (labels.is_seen(l) || labels.is_unseen(l));
      if (!ok)
        throw ValidationError("test row labeled '" + l + "' is outside the mode's label space");
    }
  }
};

}  // namespace kgzsl
