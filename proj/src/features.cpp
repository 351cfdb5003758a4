#include "slipforge/features.hpp"

#include <algorithm>
#include <cmath>

#include "slipforge/errors.hpp"

namespace slipforge {

FeatureLayout FeatureLayout::for_tensor(int bins, int height, int width) {
  if (bins < 1 || height < 1 || width < 1) throw ParamError("invalid tensor shape");
  return {bins, (height + kPoolSize - 1) / kPoolSize, (width + kPoolSize - 1) / kPoolSize};
}

namespace {

/// Calls f(feature index, contribution) for every tensor entry, spatial part
/// first. Contributions before the (N + 1) normalization.
template <class F>
void for_each_contribution(const BinnedTensor& t, const FeatureLayout& l, F&& f) {
  const double inv_pool = 1.0 / (kPoolSize * kPoolSize);
  for (std::size_t k = 0; k < t.index.size(); ++k) {
    std::size_t r = t.index[k];
    const int x = static_cast<int>(r % t.width);
    r /= t.width;
    const int y = static_cast<int>(r % t.height);
    r /= t.height;
    const int b = static_cast<int>(r % t.bins);
    const int c = static_cast<int>(r / t.bins);
    const int cell = (y / kPoolSize) * l.pooled_width + x / kPoolSize;
    const double n = t.count[k];
    f(static_cast<std::size_t>((b * 2 + c) * l.cells() + cell), n * inv_pool);
    f(static_cast<std::size_t>(l.spatial_size() + 2 * b + c), n);
  }
}

}  // namespace

std::vector<double> pool_features(const BinnedTensor& t) {
  const FeatureLayout l = FeatureLayout::for_tensor(t.bins, t.height, t.width);
  std::vector<double> out(static_cast<std::size_t>(l.dim()), 0.0);
  for_each_contribution(t, l, [&](std::size_t j, double v) { out[j] += v; });
  const double norm = 1.0 / (static_cast<double>(t.sum()) + 1.0);
  for (double& v : out) v *= norm;
  return out;
}

SparseVec pool_features_sparse(const BinnedTensor& t) {
  const FeatureLayout l = FeatureLayout::for_tensor(t.bins, t.height, t.width);
  std::vector<std::pair<std::uint32_t, double>> acc;
  acc.reserve(2 * t.index.size());
  for_each_contribution(t, l, [&](std::size_t j, double v) { acc.emplace_back(static_cast<std::uint32_t>(j), v); });
  std::stable_sort(acc.begin(), acc.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  const double norm = 1.0 / (static_cast<double>(t.sum()) + 1.0);
  SparseVec out;
  for (std::size_t i = 0; i < acc.size();) {
    // Sum in the same entry order as the dense route.
    double s = 0.0;
    std::size_t j = i;
    while (j < acc.size() && acc[j].first == acc[i].first) s += acc[j++].second;
    out.index.push_back(acc[i].first);
    out.value.push_back(static_cast<float>(s * norm));
    i = j;
  }
  return out;
}

int class_index(Label label) {
  switch (label) {
    case Label::slip: return 0;
    case Label::nonslip: return 1;
    case Label::excluded: break;
  }
  throw InputError("excluded subsamples cannot be used for training");
}

FeatureDataset make_feature_dataset(std::span<const BinnedTensor> tensors, std::span<const std::uint64_t> ids) {
  if (!ids.empty() && ids.size() != tensors.size()) throw InputError("ids and tensors differ in length");
  FeatureDataset d;
  if (tensors.empty()) return d;
  d.layout = FeatureLayout::for_tensor(tensors.front().bins, tensors.front().height, tensors.front().width);
  d.items.reserve(tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const BinnedTensor& t = tensors[i];
    if (!(FeatureLayout::for_tensor(t.bins, t.height, t.width) == d.layout)) {
      throw InputError("tensors with different shapes in one dataset");
    }
    d.items.push_back({pool_features_sparse(t), class_index(t.label), ids.empty() ? i : ids[i]});
  }
  return d;
}

FeatureScaler FeatureScaler::fit(const FeatureDataset& train) {
  if (train.empty()) throw InputError("cannot fit a scaler on an empty set");
  const auto dim = static_cast<std::size_t>(train.layout.dim());
  std::vector<double> sq(dim, 0.0);
  for (const auto& item : train.items) {
    for (std::size_t k = 0; k < item.x.nnz(); ++k) {
      const double v = item.x.value[k];
      sq[item.x.index[k]] += v * v;
    }
  }
  const double n = static_cast<double>(train.size());
  double rms_sum = 0.0;
  std::size_t rms_count = 0;
  for (double& s : sq) {
    s = std::sqrt(s / n);
    if (s > 0.0) {
      rms_sum += s;
      ++rms_count;
    }
  }
  const double floor = rms_count ? 0.05 * rms_sum / static_cast<double>(rms_count) : 0.0;
  FeatureScaler sc;
  sc.scale.assign(dim, 0.0f);
  for (std::size_t j = 0; j < dim; ++j) {
    if (sq[j] > 0.0) sc.scale[j] = static_cast<float>(1.0 / (sq[j] + floor));
  }
  return sc;
}

void FeatureScaler::apply(SparseVec& x) const {
  for (std::size_t k = 0; k < x.nnz(); ++k) {
    if (x.index[k] >= scale.size()) throw InputError("feature index beyond the scaler dimension");
    x.value[k] *= scale[x.index[k]];
  }
}

void FeatureScaler::apply(FeatureDataset& data) const {
  if (static_cast<std::size_t>(data.layout.dim()) != scale.size()) {
    throw InputError("scaler dimension does not match the dataset");
  }
  for (auto& item : data.items) apply(item.x);
}

}  // namespace slipforge
