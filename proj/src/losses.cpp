#include "ihp/losses.hpp"

#include <algorithm>
#include <cmath>

namespace ihp {

void SPLossConfig::validate() const {
  if (!(margin > 0.0)) fail(ErrorKind::invalid_argument, "sp-loss margin must be positive");
  if (!(lambda >= 0.0)) fail(ErrorKind::invalid_argument, "sp-loss lambda must be non-negative");
  if (triplets_per_pair < 1) fail(ErrorKind::invalid_argument, "triplets_per_pair must be >= 1");
  if (!(eps > 0.0)) fail(ErrorKind::invalid_argument, "eps must be positive");
}

LabelMask downsample_majority(const LabelMask& mask, int stride) {
  const int h = (mask.height() + stride - 1) / stride;
  const int w = (mask.width() + stride - 1) / stride;
  LabelMask out(h, w, mask.num_classes());
  std::vector<int> votes(mask.num_classes());
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      std::fill(votes.begin(), votes.end(), 0);
      for (int y = r * stride; y < std::min((r + 1) * stride, mask.height()); ++y)
        for (int x = c * stride; x < std::min((c + 1) * stride, mask.width()); ++x) ++votes[mask.at(y, x)];
      // max_element returns the first maximum, i.e. the smallest class id.
      out.set(r, c, static_cast<std::uint8_t>(std::max_element(votes.begin(), votes.end()) - votes.begin()));
    }
  }
  return out;
}

namespace {

std::size_t cell_offset(const FeatureMap& f, Pixel cell) {
  return static_cast<std::size_t>(cell.row) * f.width + cell.col;
}

std::vector<std::size_t> click_cells(const FeatureMap& f, const ClickSet& clicks, int class_id) {
  std::vector<std::size_t> cells;
  for (const Click& c : clicks) {
    if (c.class_id != class_id) continue;
    const Pixel cell = feature_cell(c.pixel());
    if (cell.row < 0 || cell.col < 0 || cell.row >= f.height || cell.col >= f.width)
      fail(ErrorKind::invalid_argument, "click outside feature grid");
    cells.push_back(cell_offset(f, cell));
  }
  return cells;
}

std::vector<double> mean_feature(const FeatureMap& f, std::span<const std::size_t> cells) {
  const std::size_t plane = static_cast<std::size_t>(f.height) * f.width;
  std::vector<double> mean(f.dim, 0.0);
  for (std::size_t cell : cells)
    for (int d = 0; d < f.dim; ++d) mean[d] += f.values[d * plane + cell];
  for (double& v : mean) v /= static_cast<double>(cells.size());
  return mean;
}

struct CosineParts {
  double value = 0.0;
  std::vector<double> d_a;  // d cos / d a
  std::vector<double> d_b;  // d cos / d b
};

constexpr double kTinyNorm = 1e-12;

CosineParts cosine(std::span<const double> a, std::span<const double> b, bool want_grad) {
  CosineParts out;
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  if (want_grad) {
    out.d_a.assign(a.size(), 0.0);
    out.d_b.assign(b.size(), 0.0);
  }
  if (na < kTinyNorm || nb < kTinyNorm) return out;
  out.value = ab / (na * nb);
  if (want_grad) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      out.d_a[i] = b[i] / (na * nb) - out.value * a[i] / aa;
      out.d_b[i] = a[i] / (na * nb) - out.value * b[i] / bb;
    }
  }
  return out;
}

LossWithGrad sp_loss_impl(const FeatureMap& features, const LabelMask& cell_mask, const ClickSet& clicks,
                          const AdjacencyPairs& adjacency, const SPLossConfig& cfg, Rng& rng, bool want_grad) {
  cfg.validate();
  for (double v : features.values)
    if (!std::isfinite(v)) fail(ErrorKind::invalid_argument, "non-finite feature");
  if (cell_mask.height() != features.height || cell_mask.width() != features.width)
    fail(ErrorKind::invalid_argument, "cell mask does not match feature grid");

  const std::size_t plane = static_cast<std::size_t>(features.height) * features.width;
  const int num_classes = cell_mask.num_classes();
  LossWithGrad out;
  if (want_grad) out.grad.assign(features.values.size(), 0.0);

  std::vector<std::vector<std::size_t>> clicked(num_classes), members(num_classes);
  for (int k = 0; k < num_classes; ++k) clicked[k] = click_cells(features, clicks, k);
  for (std::size_t i = 0; i < plane; ++i) members[cell_mask[i]].push_back(i);

  std::vector<std::optional<std::vector<double>>> means(num_classes);
  for (int k = 0; k < num_classes; ++k)
    if (!clicked[k].empty()) means[k] = mean_feature(features, clicked[k]);

  // Accumulated d loss / d mean_k, scattered to the click cells at the end.
  std::vector<std::vector<double>> d_mean(num_classes, std::vector<double>(features.dim, 0.0));
  std::vector<double> anchor(features.dim);
  int terms = 0;
  double total = 0.0;

  auto similarity = [&](double s) { return std::max((s + 1.0) / 2.0, cfg.eps); };
  auto dlog_similarity = [&](double s) { return (s + 1.0) / 2.0 > cfg.eps ? 1.0 / (s + 1.0) : 0.0; };

  for (const auto& [a, b] : adjacency) {
    for (const auto& [m, n] : {std::pair{a, b}, std::pair{b, a}}) {
      if (m < 1 || m >= num_classes || n >= num_classes) continue;
      if (!means[m] || !means[n] || members[m].empty()) continue;
      for (int t = 0; t < cfg.triplets_per_pair; ++t) {
        const std::size_t r = members[m][rng.index(members[m].size())];
        for (int d = 0; d < features.dim; ++d) anchor[d] = features.values[d * plane + r];
        const CosineParts pos = cosine(anchor, *means[m], want_grad);
        const CosineParts neg = cosine(anchor, *means[n], want_grad);
        const double arg = std::log(similarity(neg.value)) - std::log(similarity(pos.value)) + cfg.margin;
        const bool active = cfg.literal_min_form ? arg < 0.0 : arg > 0.0;
        total += active ? arg : 0.0;
        ++terms;
        if (!want_grad || !active) continue;
        const double g_neg = dlog_similarity(neg.value);
        const double g_pos = -dlog_similarity(pos.value);
        for (int d = 0; d < features.dim; ++d) {
          out.grad[d * plane + r] += g_neg * neg.d_a[d] + g_pos * pos.d_a[d];
          d_mean[n][d] += g_neg * neg.d_b[d];
          d_mean[m][d] += g_pos * pos.d_b[d];
        }
      }
    }
  }
  if (terms == 0) return out;
  out.value = total / terms;
  if (want_grad) {
    for (int k = 0; k < num_classes; ++k) {
      if (clicked[k].empty()) continue;
      const double share = 1.0 / static_cast<double>(clicked[k].size());
      for (std::size_t cell : clicked[k])
        for (int d = 0; d < features.dim; ++d) out.grad[d * plane + cell] += d_mean[k][d] * share;
    }
    for (double& g : out.grad) g /= terms;
  }
  return out;
}

}  // namespace

std::optional<std::vector<double>> click_average_feature(const FeatureMap& features, const ClickSet& clicks,
                                                         int class_id) {
  const std::vector<std::size_t> cells = click_cells(features, clicks, class_id);
  if (cells.empty()) return std::nullopt;
  return mean_feature(features, cells);
}

double sp_loss(const FeatureMap& features, const LabelMask& cell_mask, const ClickSet& clicks,
               const AdjacencyPairs& adjacency, const SPLossConfig& cfg, Rng& rng) {
  return sp_loss_impl(features, cell_mask, clicks, adjacency, cfg, rng, false).value;
}

LossWithGrad sp_loss_with_grad(const FeatureMap& features, const LabelMask& cell_mask, const ClickSet& clicks,
                               const AdjacencyPairs& adjacency, const SPLossConfig& cfg, Rng& rng) {
  return sp_loss_impl(features, cell_mask, clicks, adjacency, cfg, rng, true);
}

ClassWeights class_weights(const LabelMask& mask, const ClickSet& clicks) {
  const int k = mask.num_classes();
  std::vector<double> pix(k, 0.0), clk(k, 0.0);
  for (std::size_t i = 0; i < mask.size(); ++i) pix[mask[i]] += 1.0;
  for (const Click& c : clicks)
    if (c.class_id >= 0 && c.class_id < k) clk[c.class_id] += 1.0;
  const double pix_share = static_cast<double>(mask.size()) / k;
  const double clk_share = static_cast<double>(clicks.size()) / k;
  ClassWeights out;
  out.weights.resize(k);
  double sum = 0.0;
  for (int c = 0; c < k; ++c) {
    out.weights[c] = 0.5 * pix_share / (pix[c] + 1.0) + 0.5 * clk_share / (clk[c] + 1.0);
    sum += out.weights[c];
  }
  for (double& w : out.weights) w *= k / sum;
  return out;
}

namespace {

LossWithGrad ce_impl(const Logits& logits, const LabelMask& mask, const ClassWeights& weights, bool want_grad) {
  if (logits.height != mask.height() || logits.width != mask.width() || logits.num_classes != mask.num_classes())
    fail(ErrorKind::invalid_argument, "logits and mask differ in shape");
  if (static_cast<int>(weights.weights.size()) != logits.num_classes)
    fail(ErrorKind::invalid_argument, "class weight count does not match logits");
  const std::size_t plane = static_cast<std::size_t>(logits.height) * logits.width;
  const int k = logits.num_classes;
  LossWithGrad out;
  if (want_grad) out.grad.assign(logits.values.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(plane);
  double total = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    double mx = logits.values[i];
    for (int c = 1; c < k; ++c) mx = std::max(mx, logits.values[c * plane + i]);
    double z = 0.0;
    for (int c = 0; c < k; ++c) z += std::exp(logits.values[c * plane + i] - mx);
    const int y = mask[i];
    const double w = weights.weights[y];
    const double log_p = logits.values[y * plane + i] - mx - std::log(z);
    total += -w * log_p;
    if (want_grad) {
      for (int c = 0; c < k; ++c) {
        const double p = std::exp(logits.values[c * plane + i] - mx) / z;
        out.grad[c * plane + i] = w * inv_n * (p - (c == y ? 1.0 : 0.0));
      }
    }
  }
  out.value = total * inv_n;
  return out;
}

}  // namespace

double balanced_ce(const Logits& logits, const LabelMask& mask, const ClassWeights& weights) {
  return ce_impl(logits, mask, weights, false).value;
}

LossWithGrad balanced_ce_with_grad(const Logits& logits, const LabelMask& mask, const ClassWeights& weights) {
  return ce_impl(logits, mask, weights, true);
}

}  // namespace ihp
