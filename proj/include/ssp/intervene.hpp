#pragma once

#include <string>
#include <vector>

#include "ssp/directions.hpp"
#include "ssp/stylegen.hpp"

namespace ssp {

// Per-channel mixing weights in [0,1], flat in style-code order.
struct InterventionCoeffs {
  std::vector<double> values;
  StyleLayout layout;

  static InterventionCoeffs zeros(const StyleLayout& layout);
};

struct LossWeights {
  double lambda_attr = 1e-2;
  double lambda_norm = 1e-6;
};

struct LossBreakdown {
  double pix = 0.0;
  double attr = 0.0;
  double norm = 0.0;
  double total = 0.0;
};

struct Schedule {
  int steps_per_layer = 200;
  double lr = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // 0 = rescale the unit attribute direction to ||delta_s_z||.
  double direction_scale = 0.0;
  // Ablations: joint (non-layer-wise) optimization, one scalar per layer.
  bool layerwise = true;
  bool per_layer_scalar = false;
};

struct TrajectoryPoint {
  int layer = 0;
  int step = 0;
  LossBreakdown loss;
  double outside_mse = 0.0;
};

struct InterventionResult {
  InterventionCoeffs coeffs;
  std::vector<TrajectoryPoint> trajectory;
  double initial_outside_mse = 0.0;               // pure Z-space edit
  std::vector<double> per_layer_outside_mse;      // after finishing each layer
  std::vector<Image> per_layer_images;
  Image z_edit_image;
  Image final_image;
  std::vector<double> merged_displacement;
  std::vector<double> direction_scaled;  // the rescaled attribute direction used
};

struct ZEditResult {
  LatentVector z_prime;
  std::vector<double> delta_s_z;
};

ZEditResult z_edit(const Hyperplane& plane_z, const GeneratorWeights& weights,
                   const LatentVector& z, double beta = 3.0);

std::vector<double> merge_displacement(const InterventionCoeffs& coeffs,
                                       const std::vector<double>& delta_s_z,
                                       const std::vector<double>& delta_s_n_scaled);

double loss_pix(const Image& original, const Image& edited, const Tensor& mask);
double loss_attr(const std::vector<double>& delta_s_n, const std::vector<double>& delta_s_m);
double loss_norm(const InterventionCoeffs& coeffs);

LossBreakdown total_loss(const GeneratorWeights& weights, const StyleCode& s,
                         const InterventionCoeffs& coeffs, const std::vector<double>& delta_s_z,
                         const std::vector<double>& delta_s_n_scaled, const Tensor& mask,
                         const LossWeights& lw);

struct LossEval {
  LossBreakdown loss;
  Image edited;
  std::vector<double> grad;  // d(total)/d(lambda_j), full style dimension
};

LossEval eval_total_loss(const GeneratorWeights& weights, const StyleCode& s,
                         const InterventionCoeffs& coeffs, const std::vector<double>& delta_s_z,
                         const std::vector<double>& delta_s_n_scaled, const Tensor& mask,
                         const LossWeights& lw);

InterventionResult optimize(const GeneratorWeights& weights, const StyleCode& s,
                            const std::vector<double>& delta_s_z,
                            const std::vector<double>& delta_s_n_unit, const Tensor& mask,
                            const LossWeights& lw, const Schedule& schedule);

Image interpolate(const GeneratorWeights& weights, const StyleCode& s,
                  const std::vector<double>& delta_s_z,
                  const std::vector<double>& delta_s_n_scaled, const InterventionCoeffs& coeffs,
                  double t);

struct VerifyReport {
  bool sign_flip = false;
  bool off_concept_preserved = false;
  bool off_concept_checked = false;
  double score_original = 0.0;
  double score_edited = 0.0;
  double max_off_concept_delta = 0.0;
};

VerifyReport verify_edit(const Hyperplane& plane_s, const StyleCode& s, const StyleCode& s_hat,
                         const ChannelPartition* partition, double tol = 1e-3);

}  // namespace ssp
