#pragma once

#include "sdadda/net.hpp"

#include <Eigen/Dense>

#include <vector>

namespace sdadda::trainer {

struct PseudoLabelSet {
  std::vector<Eigen::Index> indices;  // rows of the target batch
  std::vector<int> labels;
  std::vector<double> confidences;  // max softmax probability

  std::size_t size() const { return indices.size(); }
};

// Argmax per row, ties to the lowest class id.
PseudoLabelSet pseudo_labels_from_probs(const Eigen::Ref<const Eigen::MatrixXd>& probs);

// Eval-mode forward of the target batch followed by argmax.
PseudoLabelSet generate_pseudo_labels(const Eigen::Ref<const Eigen::MatrixXd>& target, const net::ModelParams& params);

// Keeps entries with confidence >= tau. At tau = 1 an entry survives only if
// its confidence is within 1e-9 of 1.
PseudoLabelSet filter_pseudo_labels(const PseudoLabelSet& set, double tau);

}  // namespace sdadda::trainer
