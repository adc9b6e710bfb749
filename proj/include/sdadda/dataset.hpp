#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace sdadda {

// Rows are samples.
struct LabeledSet {
  Eigen::MatrixXd features;
  std::vector<int> labels;

  Eigen::Index size() const { return features.rows(); }
};

// Training-facing view of a target domain: features only.
struct UnlabeledSet {
  Eigen::MatrixXd features;

  Eigen::Index size() const { return features.rows(); }
};

struct Session {
  std::string id;
  LabeledSet data;
};

struct Subject {
  std::string id;
  std::vector<Session> sessions;
};

struct SubjectDataset {
  std::vector<Subject> subjects;
  int feature_dim = 0;
  int classes = 0;
};

// Throws ValidationError on empty sets, row/label count mismatch or a label
// outside [0, classes).
void validate(const LabeledSet& set, int classes);

// Stacks sets vertically; all must share a feature dimension.
LabeledSet concat(const std::vector<const LabeledSet*>& parts);

}  // namespace sdadda
