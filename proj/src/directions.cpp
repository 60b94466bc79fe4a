#include "ssp/directions.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ssp/rng.hpp"

namespace ssp {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw TensorError(msg);
}

double accuracy(const Hyperplane& plane, const std::vector<std::vector<double>>& vecs,
                const std::vector<int>& labels, const std::vector<std::size_t>& idx) {
  std::size_t hits = 0;
  for (std::size_t i : idx) {
    const double score = classify(plane, vecs[i]);
    if ((score > 0 ? 1 : -1) == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(idx.size());
}

// Bias maximizing training accuracy for a fixed normal: scan the midpoints of
// the sorted score sequence. Deterministic; on ties the smallest-index
// (leftmost) threshold wins. Returns the accuracy through `correct_out`.
double best_bias(const std::vector<std::vector<double>>& xs, const std::vector<int>& ys,
                 const std::vector<std::size_t>& idx, const std::vector<double>& n,
                 std::size_t* correct_out) {
  std::vector<std::pair<double, int>> sc;
  sc.reserve(idx.size());
  for (std::size_t i : idx) {
    double s = 0.0;
    for (std::size_t j = 0; j < n.size(); ++j) s += n[j] * xs[i][j];
    sc.emplace_back(s, ys[i]);
  }
  std::sort(sc.begin(), sc.end());
  const std::size_t m = sc.size();
  std::size_t pos_total = 0;
  for (const auto& p : sc) pos_total += p.second == 1;
  std::size_t best_correct = 0, neg_seen = 0, pos_seen = 0;
  double best_thr = sc.front().first - 1.0;
  bool first = true;
  for (std::size_t i = 0; i <= m; ++i) {
    const std::size_t correct = neg_seen + (pos_total - pos_seen);
    if (first || correct > best_correct) {
      first = false;
      best_correct = correct;
      best_thr = i == 0 ? sc.front().first - 1.0
                        : (i == m ? sc.back().first + 1.0
                                  : 0.5 * (sc[i - 1].first + sc[i].first));
    }
    if (i < m) (sc[i].second == 1 ? pos_seen : neg_seen)++;
  }
  if (correct_out) *correct_out = best_correct;
  return -best_thr;
}

// Polish pass on the coordinates that survived the proximal stage: walk the
// nearest points between the two class hulls (Mitchell-Demyanov-Malozemov
// updates) and keep the direction/bias pair with the best training accuracy.
// On separable data this reaches an exact separator; on overlapping classes
// the keep-best guard means it can only improve on the incoming plane.
void hull_refit(const std::vector<std::vector<double>>& xs, const std::vector<int>& ys,
                const std::vector<std::size_t>& idx, std::vector<double>& normal, double& bias) {
  const std::size_t dim = normal.size();
  std::vector<std::size_t> support;
  for (std::size_t j = 0; j < dim; ++j)
    if (normal[j] != 0.0) support.push_back(j);
  const std::size_t d = support.size();
  if (d == 0) return;

  std::vector<std::vector<double>> px, nx;
  for (std::size_t i : idx) {
    std::vector<double> v(d);
    for (std::size_t j = 0; j < d; ++j) v[j] = xs[i][support[j]];
    (ys[i] == 1 ? px : nx).push_back(std::move(v));
  }
  if (px.empty() || nx.empty()) return;

  std::size_t best_correct = 0;
  bias = best_bias(xs, ys, idx, normal, &best_correct);
  const std::size_t target = idx.size();

  auto consider = [&](const std::vector<double>& u_sub) {
    std::vector<double> cand(dim, 0.0);
    for (std::size_t j = 0; j < d; ++j) cand[support[j]] = u_sub[j];
    std::size_t correct = 0;
    const double b = best_bias(xs, ys, idx, cand, &correct);
    if (correct > best_correct) {
      best_correct = correct;
      normal = cand;
      bias = b;
    }
  };

  std::vector<double> ap(px.size(), 1.0 / static_cast<double>(px.size()));
  std::vector<double> an(nx.size(), 1.0 / static_cast<double>(nx.size()));
  std::vector<double> u(d, 0.0);
  auto rebuild_u = [&] {
    std::fill(u.begin(), u.end(), 0.0);
    for (std::size_t i = 0; i < px.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) u[j] += ap[i] * px[i][j];
    for (std::size_t i = 0; i < nx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) u[j] -= an[i] * nx[i][j];
  };
  rebuild_u();

  // One weight transfer toward the point with the worst margin, exact line
  // search, clipped so the weights stay on the simplex.
  auto step_side = [&](const std::vector<std::vector<double>>& pts, std::vector<double>& a,
                       double sign) {
    std::size_t i_min = 0, i_max = 0;
    double v_min = 0.0, v_max = 0.0;
    bool have_min = false, have_max = false;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += pts[i][j] * u[j];
      dot *= sign;
      if (!have_min || dot < v_min) {
        v_min = dot;
        i_min = i;
        have_min = true;
      }
      if (a[i] > 0.0 && (!have_max || dot > v_max)) {
        v_max = dot;
        i_max = i;
        have_max = true;
      }
    }
    if (i_min == i_max || v_max - v_min <= 0.0) return;
    double dn2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = pts[i_min][j] - pts[i_max][j];
      dn2 += diff * diff;
    }
    if (dn2 <= 0.0) return;
    const double t = std::min((v_max - v_min) / dn2, a[i_max]);
    a[i_max] -= t;
    a[i_min] += t;
    for (std::size_t j = 0; j < d; ++j) u[j] += sign * t * (pts[i_min][j] - pts[i_max][j]);
  };

  const int max_iter = 20000;
  for (int it = 0; it < max_iter; ++it) {
    double unorm2 = 0.0;
    for (double v : u) unorm2 += v * v;
    if (unorm2 < 1e-20) break;
    if (it % 50 == 0) {
      consider(u);
      if (best_correct == target) return;
    }
    step_side(px, ap, 1.0);
    step_side(nx, an, -1.0);
  }
  consider(u);
}

}  // namespace

std::string space_name(Space s) {
  switch (s) {
    case Space::Z: return "z";
    case Space::W: return "w";
    case Space::S: return "s";
  }
  return "?";
}

Space space_from_name(const std::string& name) {
  if (name == "z" || name == "Z") return Space::Z;
  if (name == "w" || name == "W") return Space::W;
  if (name == "s" || name == "S") return Space::S;
  throw TensorError("unknown space '" + name + "' (expected z, w, or s)");
}

std::pair<Hyperplane, DirectionReport> train_hyperplane(
    const std::vector<std::vector<double>>& vectors, const std::vector<int>& labels,
    const TrainOptions& opts) {
  require(vectors.size() == labels.size(), "train: vectors/labels length mismatch");
  require(!vectors.empty(), "train: empty dataset");
  const std::size_t dim = vectors[0].size();
  require(dim > 0, "train: zero-dimensional vectors");
  for (const auto& v : vectors) require(v.size() == dim, "train: inconsistent vector dims");
  require(opts.l1_lambda >= 0, "train: l1_lambda must be nonnegative");

  std::size_t pos = 0, neg = 0;
  for (int y : labels) {
    require(y == 1 || y == -1, "train: labels must be +1/-1");
    (y == 1 ? pos : neg)++;
  }
  require(pos >= 2 && neg >= 2, "train: need at least 2 samples per class");

  // Seeded shuffle, 80/20 split.
  std::vector<std::size_t> order(vectors.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(opts.seed);
  for (std::size_t i = order.size() - 1; i > 0; --i)
    std::swap(order[i], order[rng.next_u64() % (i + 1)]);

  const std::size_t n_val = order.size() / 5;
  std::vector<std::size_t> train_idx(order.begin(), order.end() - n_val);
  std::vector<std::size_t> val_idx(order.end() - n_val, order.end());
  bool split_ok = !val_idx.empty();
  if (split_ok) {
    std::size_t tpos = 0, tneg = 0;
    for (std::size_t i : train_idx) (labels[i] == 1 ? tpos : tneg)++;
    split_ok = tpos > 0 && tneg > 0;
  }
  if (!split_ok) {
    train_idx = order;
    val_idx = order;
  }

  // Standardize per coordinate on the training split. The style coordinates
  // sit near 1 with small variance, so without this the bias direction
  // dominates the geometry and the L1 threshold never bites. Zeros in the
  // standardized vector map to zeros in the raw vector, so sparsity survives
  // the fold-back below.
  const double n_train = static_cast<double>(train_idx.size());
  std::vector<double> mean(dim, 0.0), sd(dim, 0.0);
  for (std::size_t i : train_idx)
    for (std::size_t j = 0; j < dim; ++j) mean[j] += vectors[i][j];
  for (double& m : mean) m /= n_train;
  for (std::size_t i : train_idx)
    for (std::size_t j = 0; j < dim; ++j) {
      const double c = vectors[i][j] - mean[j];
      sd[j] += c * c;
    }
  for (double& s : sd) {
    s = std::sqrt(s / n_train);
    if (s < 1e-12) s = 1.0;
  }
  std::vector<std::vector<double>> xs(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    xs[i].resize(dim);
    for (std::size_t j = 0; j < dim; ++j) xs[i][j] = (vectors[i][j] - mean[j]) / sd[j];
  }

  // Epoch-cycled proximal subgradient descent on mean hinge + L1, one
  // full-batch step per epoch with step 1/sqrt(t). The soft-threshold runs
  // against the batch gradient, so a coordinate stays exactly zero once its
  // empirical correlation with the labels drops below l1_lambda.
  std::vector<double> n_std(dim, 0.0), grad(dim, 0.0);
  double b_std = 0.0;
  for (int t = 1; t <= opts.epochs; ++t) {
    const double step = 1.0 / std::sqrt(static_cast<double>(t));
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_b = 0.0;
    for (std::size_t i : train_idx) {
      const auto& x = xs[i];
      const double y = labels[i];
      double score = b_std;
      for (std::size_t j = 0; j < dim; ++j) score += n_std[j] * x[j];
      if (y * score < 1.0) {
        for (std::size_t j = 0; j < dim; ++j) grad[j] -= y * x[j];
        grad_b -= y;
      }
    }
    const double scale = step * opts.hinge_c / n_train;
    const double shrink = opts.l1_lambda * step;
    for (std::size_t j = 0; j < dim; ++j) {
      n_std[j] -= scale * grad[j];
      if (n_std[j] > shrink)
        n_std[j] -= shrink;
      else if (n_std[j] < -shrink)
        n_std[j] += shrink;
      else
        n_std[j] = 0.0;
    }
    b_std -= scale * grad_b;
  }

  hull_refit(xs, labels, train_idx, n_std, b_std);

  Hyperplane plane;
  plane.space = opts.space;
  plane.l1_lambda = opts.l1_lambda;
  plane.hinge_c = opts.hinge_c;
  plane.epochs = opts.epochs;
  plane.seed = opts.seed;
  plane.normal.resize(dim);
  for (std::size_t j = 0; j < dim; ++j) plane.normal[j] = n_std[j] / sd[j];
  plane.bias = b_std;
  for (std::size_t j = 0; j < dim; ++j) plane.bias -= plane.normal[j] * mean[j];

  double norm = 0.0;
  for (double v : plane.normal) norm += v * v;
  norm = std::sqrt(norm);
  require(norm > 0, "train: degenerate all-zero normal (l1_lambda too large?)");
  plane.unit_normal.resize(dim);
  for (std::size_t j = 0; j < dim; ++j) plane.unit_normal[j] = plane.normal[j] / norm;

  DirectionReport report;
  report.train_accuracy = accuracy(plane, vectors, labels, train_idx);
  report.validation_accuracy = accuracy(plane, vectors, labels, val_idx);
  std::size_t zeros = 0;
  for (double v : plane.normal) zeros += (v == 0.0);
  report.sparsity = static_cast<double>(zeros) / static_cast<double>(dim);
  if (opts.layout) {
    require(static_cast<std::size_t>(opts.layout->total) == dim, "train: layout/dim mismatch");
    for (const auto& sl : opts.layout->slices) {
      int nz = 0;
      for (int j = 0; j < sl.length; ++j) nz += plane.normal[sl.offset + j] != 0.0;
      report.per_layer_nonzeros.push_back(nz);
    }
  }
  return {plane, report};
}

double classify(const Hyperplane& plane, const std::vector<double>& x) {
  require(x.size() == plane.normal.size(), "classify: dim mismatch");
  double score = plane.bias;
  for (std::size_t j = 0; j < x.size(); ++j) score += plane.normal[j] * x[j];
  return score;
}

std::vector<double> direction_in_space(const Hyperplane& plane) {
  require(!plane.unit_normal.empty(), "direction: plane not trained");
  return plane.unit_normal;
}

}  // namespace ssp
