#pragma once

#include <optional>
#include <vector>

#include "ihp/clickmap.hpp"
#include "ihp/geometry.hpp"

namespace ihp {

/// Stride of the decoder feature map that feeds the semantic-perceiving loss.
inline constexpr int kFeatureStride = 4;

/// D×H'×W' planar embedding map.
struct FeatureMap {
  int dim = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;

  FeatureMap() = default;
  FeatureMap(int d, int h, int w) : dim(d), height(h), width(w), values(static_cast<std::size_t>(d) * h * w, 0.0) {}

  double& at(int d, int r, int c) { return values[(static_cast<std::size_t>(d) * height + r) * width + c]; }
  double at(int d, int r, int c) const { return values[(static_cast<std::size_t>(d) * height + r) * width + c]; }
};

/// Class scores, (num_classes)×H×W planar.
struct Logits {
  int num_classes = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;
};

struct SPLossConfig {
  double margin = 1.5;  // d_g
  double lambda = 1.0;  // 1 for random sampling, 3 for near-edge sampling
  int triplets_per_pair = 1;
  double eps = 1e-6;
  /// Evaluate the formula exactly as printed, min{log S_n - log S_p + d_g, 0},
  /// instead of the triplet hinge. Comparison only; never used for training.
  bool literal_min_form = false;

  void validate() const;
};

struct ClassWeights {
  std::vector<double> weights;
};

struct LossWithGrad {
  double value = 0.0;
  std::vector<double> grad;  // same layout as the differentiated input
};

/// Feature-grid cell of a full-resolution pixel (floor division by the stride).
inline Pixel feature_cell(Pixel p) { return {p.row / kFeatureStride, p.col / kFeatureStride}; }

/// Per-cell majority label over stride×stride blocks (ties to the smaller class).
LabelMask downsample_majority(const LabelMask& mask, int stride = kFeatureStride);

std::optional<std::vector<double>> click_average_feature(const FeatureMap& features, const ClickSet& clicks,
                                                         int class_id);

/// Semantic-perceiving loss: for every ordered adjacent pair (m, n) with m a
/// part class, anchors r are drawn from class-m cells and the hinge
/// max(log S~n - log S~p + d_g, 0) is averaged, where S~ = max((cos + 1) / 2, eps)
/// against the click-averaged features of m (positive) and n (negative).
///
/// `cell_mask` is the label grid at feature resolution (see downsample_majority),
/// click coordinates are full resolution, `adjacency` comes from the full mask.
double sp_loss(const FeatureMap& features, const LabelMask& cell_mask, const ClickSet& clicks,
               const AdjacencyPairs& adjacency, const SPLossConfig& cfg, Rng& rng);
LossWithGrad sp_loss_with_grad(const FeatureMap& features, const LabelMask& cell_mask, const ClickSet& clicks,
                               const AdjacencyPairs& adjacency, const SPLossConfig& cfg, Rng& rng);

/// Equal mix of pixel-frequency and click-frequency inverse weights
/// (add-one smoothed), normalised to mean 1.
ClassWeights class_weights(const LabelMask& mask, const ClickSet& clicks);

/// Mean over pixels of w[y] * -log softmax(logits)[y].
double balanced_ce(const Logits& logits, const LabelMask& mask, const ClassWeights& weights);
LossWithGrad balanced_ce_with_grad(const Logits& logits, const LabelMask& mask, const ClassWeights& weights);

inline double total_loss(double ce, double sp, double lambda) { return ce + lambda * sp; }

}  // namespace ihp
