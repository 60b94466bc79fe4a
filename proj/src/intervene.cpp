#include "ssp/intervene.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ssp/metrics.hpp"
#include "ssp/tape.hpp"

namespace ssp {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw TensorError(msg);
}

double l2(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

StyleCode shifted_style(const StyleCode& s, const std::vector<double>& delta) {
  StyleCode out = s;
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += delta[i];
  return out;
}

// Gradient of -cos(n, m) with respect to m; zero when either vector vanishes.
std::vector<double> attr_grad(const std::vector<double>& n, const std::vector<double>& m) {
  std::vector<double> g(m.size(), 0.0);
  const double nn = l2(n), nm = l2(m);
  if (nn == 0.0 || nm == 0.0) return g;
  const double d = dot(n, m);
  for (std::size_t i = 0; i < m.size(); ++i)
    g[i] = -(n[i] / (nn * nm) - d * m[i] / (nn * nm * nm * nm));
  return g;
}

struct PixEval {
  double value = 0.0;
  Image edited;
  std::vector<double> grad_style;  // d(loss_pix)/d(edited style code)
};

// Evaluates L_pix and backpropagates through the synthesis network to the
// edited style code.
PixEval eval_pix(const GeneratorWeights& weights, const StyleCode& s_hat, const Image& original,
                 const Tensor& mask, bool want_grad) {
  Tape tape;
  const SynthesisTrace trace = synthesize_traced(weights, s_hat, tape);
  PixEval out;
  out.edited = tape.value(trace.image);

  const int c = out.edited.dims[0], h = out.edited.dims[1], w = out.edited.dims[2];
  double sq = 0.0;
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (mask.data[static_cast<std::size_t>(y) * w + x] > 0.5) continue;
        const double d = out.edited.at3(ch, y, x) - original.at3(ch, y, x);
        sq += d * d;
      }
  out.value = std::sqrt(sq);

  if (!want_grad) return out;
  out.grad_style.assign(s_hat.values.size(), 0.0);
  if (out.value == 0.0) return out;

  Tensor seed({c, h, w});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (mask.data[static_cast<std::size_t>(y) * w + x] > 0.5) continue;
        seed.at3(ch, y, x) = (out.edited.at3(ch, y, x) - original.at3(ch, y, x)) / out.value;
      }
  tape.backward(trace.image, seed);
  for (std::size_t layer = 0; layer < trace.gain_leaves.size(); ++layer) {
    const Tensor& g = tape.grad(trace.gain_leaves[layer]);
    const StyleSlice& sl = s_hat.layout.slices[layer];
    for (int j = 0; j < sl.length; ++j) out.grad_style[sl.offset + j] = g.at(j);
  }
  return out;
}

LossEval eval_total_loss_impl(const GeneratorWeights& weights, const StyleCode& s,
                              const InterventionCoeffs& coeffs,
                              const std::vector<double>& delta_s_z,
                              const std::vector<double>& delta_s_n_scaled, const Tensor& mask,
                              const LossWeights& lw, const Image& original) {
  const std::vector<double> merged = merge_displacement(coeffs, delta_s_z, delta_s_n_scaled);
  const PixEval pix = eval_pix(weights, shifted_style(s, merged), original, mask, true);

  LossEval out;
  out.edited = pix.edited;
  out.loss.pix = pix.value;
  const double nn = l2(delta_s_n_scaled), nm = l2(merged);
  out.loss.attr = (nn > 0 && nm > 0) ? -dot(delta_s_n_scaled, merged) / (nn * nm) : 0.0;
  out.loss.norm = l2(coeffs.values);
  out.loss.total = out.loss.pix + lw.lambda_attr * out.loss.attr + lw.lambda_norm * out.loss.norm;

  const std::vector<double> ga = attr_grad(delta_s_n_scaled, merged);
  out.grad.resize(merged.size());
  for (std::size_t j = 0; j < merged.size(); ++j) {
    const double dmerged = delta_s_n_scaled[j] - delta_s_z[j];
    double g = (pix.grad_style[j] + lw.lambda_attr * ga[j]) * dmerged;
    if (out.loss.norm > 0) g += lw.lambda_norm * coeffs.values[j] / out.loss.norm;
    out.grad[j] = g;
  }
  return out;
}

}  // namespace

InterventionCoeffs InterventionCoeffs::zeros(const StyleLayout& layout) {
  InterventionCoeffs c;
  c.layout = layout;
  c.values.assign(layout.total, 0.0);
  return c;
}

ZEditResult z_edit(const Hyperplane& plane_z, const GeneratorWeights& weights,
                   const LatentVector& z, double beta) {
  require(plane_z.space == Space::Z, "z_edit: hyperplane was not trained in Z space");
  const std::vector<double> dir = direction_in_space(plane_z);
  require(dir.size() == z.values.size(), "z_edit: direction/latent dim mismatch");

  ZEditResult out;
  out.z_prime.values = z.values;
  for (std::size_t i = 0; i < dir.size(); ++i) out.z_prime.values[i] += beta * dir[i];

  const StyleCode s0 = style_from_w(weights, map_latent(weights, z));
  const StyleCode s1 = style_from_w(weights, map_latent(weights, out.z_prime));
  out.delta_s_z.resize(s0.values.size());
  for (std::size_t i = 0; i < s0.values.size(); ++i)
    out.delta_s_z[i] = s1.values[i] - s0.values[i];
  return out;
}

std::vector<double> merge_displacement(const InterventionCoeffs& coeffs,
                                       const std::vector<double>& delta_s_z,
                                       const std::vector<double>& delta_s_n_scaled) {
  require(coeffs.values.size() == delta_s_z.size() && delta_s_z.size() == delta_s_n_scaled.size(),
          "merge_displacement: layout mismatch");
  std::vector<double> out(coeffs.values.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (1.0 - coeffs.values[i]) * delta_s_z[i] + coeffs.values[i] * delta_s_n_scaled[i];
  return out;
}

double loss_pix(const Image& original, const Image& edited, const Tensor& mask) {
  require(original.dims == edited.dims, "loss_pix: image dims mismatch");
  require(mask.rank() == 2 && mask.dims[0] == original.dims[1] && mask.dims[1] == original.dims[2],
          "loss_pix: mask dims mismatch");
  const int c = original.dims[0], h = original.dims[1], w = original.dims[2];
  double sq = 0.0;
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (mask.data[static_cast<std::size_t>(y) * w + x] > 0.5) continue;
        const double d = edited.at3(ch, y, x) - original.at3(ch, y, x);
        sq += d * d;
      }
  return std::sqrt(sq);
}

double loss_attr(const std::vector<double>& delta_s_n, const std::vector<double>& delta_s_m) {
  require(delta_s_n.size() == delta_s_m.size(), "loss_attr: dim mismatch");
  const double nn = l2(delta_s_n), nm = l2(delta_s_m);
  require(nn > 0 && nm > 0, "loss_attr: cosine undefined for zero vector");
  return -dot(delta_s_n, delta_s_m) / (nn * nm);
}

double loss_norm(const InterventionCoeffs& coeffs) { return l2(coeffs.values); }

LossBreakdown total_loss(const GeneratorWeights& weights, const StyleCode& s,
                         const InterventionCoeffs& coeffs, const std::vector<double>& delta_s_z,
                         const std::vector<double>& delta_s_n_scaled, const Tensor& mask,
                         const LossWeights& lw) {
  const std::vector<double> merged = merge_displacement(coeffs, delta_s_z, delta_s_n_scaled);
  const Image original = synthesize(weights, s);
  const Image edited = synthesize(weights, shifted_style(s, merged));

  LossBreakdown b;
  b.pix = loss_pix(original, edited, mask);
  b.attr = (l2(merged) > 0 && l2(delta_s_n_scaled) > 0) ? loss_attr(delta_s_n_scaled, merged) : 0.0;
  b.norm = loss_norm(coeffs);
  b.total = b.pix + lw.lambda_attr * b.attr + lw.lambda_norm * b.norm;
  return b;
}

LossEval eval_total_loss(const GeneratorWeights& weights, const StyleCode& s,
                         const InterventionCoeffs& coeffs, const std::vector<double>& delta_s_z,
                         const std::vector<double>& delta_s_n_scaled, const Tensor& mask,
                         const LossWeights& lw) {
  const Image original = synthesize(weights, s);
  return eval_total_loss_impl(weights, s, coeffs, delta_s_z, delta_s_n_scaled, mask, lw, original);
}

InterventionResult optimize(const GeneratorWeights& weights, const StyleCode& s,
                            const std::vector<double>& delta_s_z,
                            const std::vector<double>& delta_s_n_unit, const Tensor& mask,
                            const LossWeights& lw, const Schedule& schedule) {
  const std::size_t dim = s.values.size();
  require(delta_s_z.size() == dim && delta_s_n_unit.size() == dim, "optimize: layout mismatch");

  double scale = schedule.direction_scale;
  if (scale == 0.0) scale = l2(delta_s_z);
  std::vector<double> dsn(dim);
  for (std::size_t i = 0; i < dim; ++i) dsn[i] = scale * delta_s_n_unit[i];

  InterventionResult result;
  result.direction_scaled = dsn;
  result.coeffs = InterventionCoeffs::zeros(s.layout);
  InterventionCoeffs& coeffs = result.coeffs;

  const Image original = synthesize(weights, s);
  result.z_edit_image = synthesize(weights, shifted_style(s, delta_s_z));
  result.initial_outside_mse = masked_mse(original, result.z_edit_image, mask, MaskRegion::Outside);

  const int n_layers = static_cast<int>(s.layout.slices.size());

  auto run_steps = [&](int layer_lo, int layer_hi, int trajectory_layer) {
    // Adam state over the active coordinate range.
    const int lo = s.layout.slices[layer_lo].offset;
    const int hi = s.layout.slices[layer_hi].offset + s.layout.slices[layer_hi].length;
    std::vector<double> m(hi - lo, 0.0), v(hi - lo, 0.0);
    for (int step = 1; step <= schedule.steps_per_layer; ++step) {
      const LossEval ev = eval_total_loss_impl(weights, s, coeffs, delta_s_z, dsn, mask, lw, original);
      if (!std::isfinite(ev.loss.total))
        throw TensorError("optimize: non-finite loss at layer " + std::to_string(trajectory_layer) +
                          " step " + std::to_string(step));

      std::vector<double> grad(ev.grad.begin() + lo, ev.grad.begin() + hi);
      if (schedule.per_layer_scalar) {
        // One scalar per styled layer: average the per-channel gradients.
        for (int layer = layer_lo; layer <= layer_hi; ++layer) {
          const StyleSlice& sl = s.layout.slices[layer];
          double avg = 0.0;
          for (int j = 0; j < sl.length; ++j) avg += grad[sl.offset + j - lo];
          avg /= sl.length;
          for (int j = 0; j < sl.length; ++j) grad[sl.offset + j - lo] = avg;
        }
      }
      for (int j = 0; j < hi - lo; ++j) {
        if (!std::isfinite(grad[j]))
          throw TensorError("optimize: non-finite gradient at layer " +
                            std::to_string(trajectory_layer) + " step " + std::to_string(step));
        m[j] = schedule.beta1 * m[j] + (1 - schedule.beta1) * grad[j];
        v[j] = schedule.beta2 * v[j] + (1 - schedule.beta2) * grad[j] * grad[j];
        const double mh = m[j] / (1 - std::pow(schedule.beta1, step));
        const double vh = v[j] / (1 - std::pow(schedule.beta2, step));
        double& lam = coeffs.values[lo + j];
        lam -= schedule.lr * mh / (std::sqrt(vh) + schedule.eps);
        lam = std::min(1.0, std::max(0.0, lam));
      }

      TrajectoryPoint pt;
      pt.layer = trajectory_layer;
      pt.step = step;
      pt.loss = ev.loss;
      pt.outside_mse = masked_mse(original, ev.edited, mask, MaskRegion::Outside);
      result.trajectory.push_back(pt);
    }
  };

  if (schedule.layerwise) {
    for (int layer = 0; layer < n_layers; ++layer) {
      run_steps(layer, layer, layer);
      const Image img =
          synthesize(weights, shifted_style(s, merge_displacement(coeffs, delta_s_z, dsn)));
      result.per_layer_outside_mse.push_back(masked_mse(original, img, mask, MaskRegion::Outside));
      result.per_layer_images.push_back(img);
    }
  } else {
    run_steps(0, n_layers - 1, -1);
    const Image img =
        synthesize(weights, shifted_style(s, merge_displacement(coeffs, delta_s_z, dsn)));
    result.per_layer_outside_mse.push_back(masked_mse(original, img, mask, MaskRegion::Outside));
    result.per_layer_images.push_back(img);
  }

  result.merged_displacement = merge_displacement(coeffs, delta_s_z, dsn);
  result.final_image = synthesize(weights, shifted_style(s, result.merged_displacement));
  return result;
}

Image interpolate(const GeneratorWeights& weights, const StyleCode& s,
                  const std::vector<double>& delta_s_z,
                  const std::vector<double>& delta_s_n_scaled, const InterventionCoeffs& coeffs,
                  double t) {
  require(coeffs.values.size() == s.values.size(), "interpolate: layout mismatch");
  StyleCode shifted = s;
  for (std::size_t i = 0; i < s.values.size(); ++i)
    shifted.values[i] += (1.0 - coeffs.values[i]) * delta_s_z[i] +
                         t * coeffs.values[i] * delta_s_n_scaled[i];
  return synthesize(weights, shifted);
}

VerifyReport verify_edit(const Hyperplane& plane_s, const StyleCode& s, const StyleCode& s_hat,
                         const ChannelPartition* partition, double tol) {
  require(plane_s.space == Space::S, "verify_edit: hyperplane was not trained in S space");
  VerifyReport r;
  r.score_original = classify(plane_s, s.values);
  r.score_edited = classify(plane_s, s_hat.values);
  r.sign_flip = r.score_original * r.score_edited < 0;
  if (!partition) return r;

  r.off_concept_checked = true;
  double max_delta = 0.0;
  for (const auto& sl : s.layout.slices)
    for (int ch = 0; ch < sl.length; ++ch) {
      if (partition->contains(sl.layer, ch)) continue;
      max_delta = std::max(max_delta, std::abs(s_hat.values[sl.offset + ch] - s.values[sl.offset + ch]));
    }
  r.max_off_concept_delta = max_delta;
  r.off_concept_preserved = max_delta <= tol;
  return r;
}

}  // namespace ssp
