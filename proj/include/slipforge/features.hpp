#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "slipforge/labelprep.hpp"

namespace slipforge {

inline constexpr int kPoolSize = 10;

/// Geometry of the pooled feature vector for a tensor of `bins` x h x w.
/// Layout: spatial block indexed ((bin * 2 + channel) * cells + cell), then
/// per-bin polarity sums at spatial_size() + 2 * bin + channel. Bin-major
/// order lets the spiking model read one bin as a contiguous slice.
struct FeatureLayout {
  int bins = 150;
  int pooled_height = 25;
  int pooled_width = 20;

  static FeatureLayout for_tensor(int bins, int height, int width);
  int cells() const { return pooled_height * pooled_width; }
  int spatial_size() const { return 2 * bins * cells(); }
  int dim() const { return spatial_size() + 2 * bins; }
  /// Inputs seen by the spiking model per time step.
  int per_bin() const { return 2 * cells() + 2; }
  bool operator==(const FeatureLayout&) const = default;
};

/// 10x10 average pooling per bin and polarity plus per-bin polarity event
/// sums, all divided by (window event count + 1).
std::vector<double> pool_features(const BinnedTensor& t);

struct SparseVec {
  std::vector<std::uint32_t> index;  // strictly increasing
  std::vector<float> value;

  std::size_t nnz() const { return index.size(); }
};

/// Sparse form of pool_features, computed directly from the tensor.
SparseVec pool_features_sparse(const BinnedTensor& t);

/// Class index used by the classifiers: 0 = slip, 1 = non-slip.
int class_index(Label label);

struct LabeledFeatures {
  SparseVec x;
  int label = 0;
  std::uint64_t id = 0;
};

struct FeatureDataset {
  FeatureLayout layout;
  std::vector<LabeledFeatures> items;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
};

FeatureDataset make_feature_dataset(std::span<const BinnedTensor> tensors, std::span<const std::uint64_t> ids = {});

/// Per-feature scaling x_j / (rms_j + 0.05 * mean nonzero rms), fitted on a
/// training set. Keeps the input sparse (no centering).
struct FeatureScaler {
  std::vector<float> scale;

  static FeatureScaler fit(const FeatureDataset& train);
  void apply(FeatureDataset& data) const;
  void apply(SparseVec& x) const;
};

}  // namespace slipforge
