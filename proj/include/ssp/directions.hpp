#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ssp/stylegen.hpp"

namespace ssp {

enum class Space { Z, W, S };

std::string space_name(Space s);
Space space_from_name(const std::string& name);

struct Hyperplane {
  Space space = Space::S;
  std::vector<double> normal;       // raw trained vector
  std::vector<double> unit_normal;  // normal / ||normal||, oriented toward +1
  double bias = 0.0;
  // training metadata
  double l1_lambda = 0.0;
  double hinge_c = 1.0;
  int epochs = 0;
  std::uint64_t seed = 0;
};

struct DirectionReport {
  double train_accuracy = 0.0;
  double validation_accuracy = 0.0;
  double sparsity = 0.0;  // fraction of exactly-zero coordinates
  std::vector<int> per_layer_nonzeros;  // filled when a style layout is given
};

struct TrainOptions {
  double l1_lambda = 1e-3;
  double hinge_c = 1.0;
  int epochs = 200;
  std::uint64_t seed = 0;
  Space space = Space::S;
  // When set, the report breaks nonzero counts down per styled layer.
  std::optional<StyleLayout> layout;
};

// Hinge loss + L1, minimized by epoch-cycled proximal subgradient descent
// with step 1/sqrt(t) on standardized features, followed by a hard-margin
// polish restricted to the surviving coordinates. Soft-thresholding yields
// coordinates that are exactly zero. Reported accuracies use a seeded 80/20
// split; datasets too small to split are evaluated on the full set.
std::pair<Hyperplane, DirectionReport> train_hyperplane(
    const std::vector<std::vector<double>>& vectors, const std::vector<int>& labels,
    const TrainOptions& opts);

double classify(const Hyperplane& plane, const std::vector<double>& x);

// Unit displacement along which the classifier score increases.
std::vector<double> direction_in_space(const Hyperplane& plane);

}  // namespace ssp
