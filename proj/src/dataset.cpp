#include "sdadda/dataset.hpp"

#include "sdadda/error.hpp"

namespace sdadda {

void validate(const LabeledSet& set, int classes) {
  if (set.features.rows() == 0) throw ValidationError("empty labeled set");
  if (static_cast<Eigen::Index>(set.labels.size()) != set.features.rows()) {
    throw ValidationError("label count " + std::to_string(set.labels.size()) + " does not match " +
                          std::to_string(set.features.rows()) + " rows");
  }
  for (int y : set.labels) {
    if (y < 0 || y >= classes) {
      throw ValidationError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

LabeledSet concat(const std::vector<const LabeledSet*>& parts) {
  LabeledSet out;
  Eigen::Index rows = 0, cols = -1;
  for (const auto* p : parts) {
    if (p->features.rows() == 0) continue;
    if (cols >= 0 && p->features.cols() != cols) throw ValidationError("cannot stack sets of different dimension");
    cols = p->features.cols();
    rows += p->features.rows();
  }
  out.features.resize(rows, cols < 0 ? 0 : cols);
  Eigen::Index at = 0;
  for (const auto* p : parts) {
    if (p->features.rows() == 0) continue;
    out.features.middleRows(at, p->features.rows()) = p->features;
    out.labels.insert(out.labels.end(), p->labels.begin(), p->labels.end());
    at += p->features.rows();
  }
  return out;
}

}  // namespace sdadda
