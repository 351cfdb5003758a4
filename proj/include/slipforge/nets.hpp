#pragma once

// Classifier networks with hand-written backpropagation. Templated on the
// scalar type: float for training, double for gradient checks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "slipforge/errors.hpp"
#include "slipforge/features.hpp"
#include "slipforge/rng.hpp"

namespace slipforge {

/// Dense layer inside a flat parameter vector: weights [in][out], then bias [out].
struct LayerShape {
  int in = 0;
  int out = 0;
  std::size_t offset = 0;

  std::size_t bias_offset() const { return offset + static_cast<std::size_t>(in) * out; }
  std::size_t size() const { return static_cast<std::size_t>(in) * out + out; }
};

inline std::vector<LayerShape> make_layers(int input, const std::vector<int>& hidden, int output) {
  std::vector<LayerShape> layers;
  std::size_t offset = 0;
  int in = input;
  auto add = [&](int out) {
    if (in < 1 || out < 1) throw ParamError("layer widths must be positive");
    layers.push_back({in, out, offset});
    offset += layers.back().size();
    in = out;
  };
  for (int h : hidden) add(h);
  add(output);
  return layers;
}

/// He-uniform weights, zero biases.
template <class S>
void init_layers(const std::vector<LayerShape>& layers, std::vector<S>& params, std::uint64_t seed) {
  params.assign(layers.back().offset + layers.back().size(), S(0));
  Rng rng(seed);
  for (const LayerShape& l : layers) {
    const double bound = std::sqrt(6.0 / l.in);
    for (std::size_t i = 0; i < static_cast<std::size_t>(l.in) * l.out; ++i) {
      params[l.offset + i] = static_cast<S>(rng.uniform(-bound, bound));
    }
  }
}

struct BatchStats {
  double loss = 0.0;  // mean over the batch, times the loss scale
  int correct = 0;
};

// ---------------------------------------------------------------- MLP

template <class S>
class MlpNet {
 public:
  static constexpr int kClasses = 2;

  MlpNet(int input_dim, std::vector<int> hidden, std::uint64_t seed)
      : hidden_(std::move(hidden)), layers_(make_layers(input_dim, hidden_, kClasses)) {
    init_layers(layers_, params_, seed);
  }

  std::vector<S>& params() { return params_; }
  const std::vector<S>& params() const { return params_; }
  const std::vector<LayerShape>& layers() const { return layers_; }
  const std::vector<int>& hidden() const { return hidden_; }
  int input_dim() const { return layers_.front().in; }

  void check_input(const SparseVec& x) const {
    if (!x.index.empty() && static_cast<int>(x.index.back()) >= input_dim()) {
      throw InputError("feature index beyond the input dimension");
    }
  }

  std::array<S, kClasses> logits(const SparseVec& x) const {
    check_input(x);
    std::vector<std::vector<S>> acts;
    forward(x, acts);
    return {acts.back()[0], acts.back()[1]};
  }

  int predict(const SparseVec& x) const {
    const auto z = logits(x);
    return z[1] > z[0] ? 1 : 0;
  }

  /// Cross-entropy of one example.
  S loss(const LabeledFeatures& e) const {
    const auto z = logits(e.x);
    return cross_entropy(z, e.label);
  }

  std::pair<int, S> predict_and_loss(const LabeledFeatures& e) const {
    const auto z = logits(e.x);
    return {z[1] > z[0] ? 1 : 0, cross_entropy(z, e.label)};
  }

  /// Mean cross-entropy over the batch times `scale`; `grad` receives its
  /// gradient. Result does not depend on the OpenMP thread count.
  BatchStats loss_and_grad(std::span<const LabeledFeatures* const> batch, std::vector<S>& grad,
                           S scale = S(1)) const {
    const std::size_t n = batch.size();
    if (n == 0) throw InputError("empty batch");
    for (const auto* e : batch) check_input(e->x);
    grad.assign(params_.size(), S(0));
    const std::size_t nl = layers_.size();
    std::vector<std::vector<std::vector<S>>> acts(n);
    std::vector<std::vector<std::vector<S>>> deltas(n);
    std::vector<S> losses(n);
    std::vector<int> hits(n);
    const S step = scale / static_cast<S>(n);

#pragma omp parallel for schedule(static)
    for (std::size_t s = 0; s < n; ++s) {
      auto& a = acts[s];
      forward(batch[s]->x, a);
      const auto& z = a.back();
      const int y = batch[s]->label;
      losses[s] = cross_entropy({z[0], z[1]}, y);
      hits[s] = ((z[1] > z[0] ? 1 : 0) == y) ? 1 : 0;
      auto& d = deltas[s];
      d.resize(nl);
      // Softmax gradient at the logits.
      const S m = std::max(z[0], z[1]);
      const S e0 = std::exp(z[0] - m), e1 = std::exp(z[1] - m);
      const S p1 = e1 / (e0 + e1);
      d[nl - 1] = {(S(1) - p1 - (y == 0 ? S(1) : S(0))) * step, (p1 - (y == 1 ? S(1) : S(0))) * step};
      for (std::size_t l = nl - 1; l > 0; --l) {
        const LayerShape& L = layers_[l];
        const S* w = params_.data() + L.offset;
        d[l - 1].assign(static_cast<std::size_t>(L.in), S(0));
        for (int i = 0; i < L.in; ++i) {
          if (!(a[l - 1][static_cast<std::size_t>(i)] > S(0))) continue;
          S acc = S(0);
          const S* row = w + static_cast<std::size_t>(i) * L.out;
          for (int o = 0; o < L.out; ++o) acc += row[o] * d[l][static_cast<std::size_t>(o)];
          d[l - 1][static_cast<std::size_t>(i)] = acc;
        }
      }
    }

    // Dense layers: accumulate in batch order.
    for (std::size_t l = 1; l < nl; ++l) {
      const LayerShape& L = layers_[l];
      S* gw = grad.data() + L.offset;
      S* gb = grad.data() + L.bias_offset();
      for (std::size_t s = 0; s < n; ++s) {
        const auto& in = acts[s][l - 1];
        const auto& d = deltas[s][l];
        for (int i = 0; i < L.in; ++i) {
          const S v = in[static_cast<std::size_t>(i)];
          if (v == S(0)) continue;
          S* row = gw + static_cast<std::size_t>(i) * L.out;
          for (int o = 0; o < L.out; ++o) row[o] += v * d[static_cast<std::size_t>(o)];
        }
        for (int o = 0; o < L.out; ++o) gb[o] += d[static_cast<std::size_t>(o)];
      }
    }

    // Sparse input layer: threads own disjoint output columns, each walks the
    // batch in order.
    const LayerShape& L0 = layers_[0];
    {
      S* gw = grad.data() + L0.offset;
      const int out = L0.out;
#pragma omp parallel
      {
        int nt = 1, tid = 0;
#ifdef _OPENMP
        nt = omp_get_num_threads();
        tid = omp_get_thread_num();
#endif
        const int lo = out * tid / nt, hi = out * (tid + 1) / nt;
        for (std::size_t s = 0; s < n; ++s) {
          const SparseVec& x = batch[s]->x;
          const S* d = deltas[s][0].data();
          for (std::size_t k = 0; k < x.nnz(); ++k) {
            const S v = static_cast<S>(x.value[k]);
            S* row = gw + static_cast<std::size_t>(x.index[k]) * out;
            for (int o = lo; o < hi; ++o) row[o] += v * d[o];
          }
        }
      }
      S* gb = grad.data() + L0.bias_offset();
      for (std::size_t s = 0; s < n; ++s) {
        for (int o = 0; o < out; ++o) gb[o] += deltas[s][0][static_cast<std::size_t>(o)];
      }
    }

    BatchStats st;
    S total = S(0);
    for (std::size_t s = 0; s < n; ++s) {
      total += losses[s];
      st.correct += hits[s];
    }
    st.loss = static_cast<double>(total * step);
    return st;
  }

 private:
  static S cross_entropy(const std::array<S, kClasses>& z, int y) {
    const S m = std::max(z[0], z[1]);
    const S lse = m + std::log(std::exp(z[0] - m) + std::exp(z[1] - m));
    return lse - z[static_cast<std::size_t>(y)];
  }

  /// acts[l] is the output of layer l (ReLU except for the logits).
  void forward(const SparseVec& x, std::vector<std::vector<S>>& acts) const {
    acts.resize(layers_.size());
    const LayerShape& L0 = layers_[0];
    auto& h0 = acts[0];
    h0.assign(params_.begin() + static_cast<std::ptrdiff_t>(L0.bias_offset()),
              params_.begin() + static_cast<std::ptrdiff_t>(L0.bias_offset() + L0.out));
    for (std::size_t k = 0; k < x.nnz(); ++k) {
      const S v = static_cast<S>(x.value[k]);
      const S* row = params_.data() + L0.offset + static_cast<std::size_t>(x.index[k]) * L0.out;
      for (int o = 0; o < L0.out; ++o) h0[static_cast<std::size_t>(o)] += v * row[o];
    }
    for (std::size_t l = 1; l < layers_.size(); ++l) {
      for (S& v : acts[l - 1]) v = std::max(v, S(0));
      const LayerShape& L = layers_[l];
      auto& h = acts[l];
      h.assign(params_.begin() + static_cast<std::ptrdiff_t>(L.bias_offset()),
               params_.begin() + static_cast<std::ptrdiff_t>(L.bias_offset() + L.out));
      for (int i = 0; i < L.in; ++i) {
        const S v = acts[l - 1][static_cast<std::size_t>(i)];
        if (v == S(0)) continue;
        const S* row = params_.data() + L.offset + static_cast<std::size_t>(i) * L.out;
        for (int o = 0; o < L.out; ++o) h[static_cast<std::size_t>(o)] += v * row[o];
      }
    }
  }

  std::vector<int> hidden_;
  std::vector<LayerShape> layers_;
  std::vector<S> params_;
};

// ---------------------------------------------------------------- SNN

struct SnnParams {
  double decay = 0.9;            // membrane decay per bin, in (0, 1)
  double threshold = 1.0;        // firing threshold
  double surrogate_slope = 10.0; // k in 1 / (1 + k|x|)^2
  double input_gain = 1.0;       // scales the pooled inputs into currents
  double target_true = 30.0;     // desired spike count of the true class
  double target_false = 5.0;     // desired spike count of the other class
  /// Replace the spike step by the smooth 0.5 + x / (1 + k|x|), whose exact
  /// derivative is the surrogate. Only used for gradient checking.
  bool smooth = false;

  void validate() const {
    if (!(decay > 0.0 && decay < 1.0)) throw ParamError("SNN decay must lie in (0, 1)");
    if (!(threshold > 0.0)) throw ParamError("SNN threshold must be positive");
    if (!(surrogate_slope > 0.0)) throw ParamError("surrogate slope must be positive");
    if (!(target_true >= 0.0 && target_false >= 0.0)) throw ParamError("spike targets must be >= 0");
  }
};

/// Leaky integrate-and-fire network with soft reset, driven one pooled bin
/// per time step:  v_t = decay * v_{t-1} + I_t - threshold * s_{t-1},
/// s_t = H(v_t - threshold). Output spike counts are matched to class
/// targets with a squared-error spike-count loss.
template <class S>
class SnnNet {
 public:
  static constexpr int kClasses = 2;

  SnnNet(const FeatureLayout& layout, std::vector<int> hidden, const SnnParams& p, std::uint64_t seed)
      : layout_(layout), hidden_(std::move(hidden)), p_(p),
        layers_(make_layers(layout.per_bin(), hidden_, kClasses)) {
    p_.validate();
    init_layers(layers_, params_, seed);
  }

  std::vector<S>& params() { return params_; }
  const std::vector<S>& params() const { return params_; }
  const std::vector<LayerShape>& layers() const { return layers_; }
  const std::vector<int>& hidden() const { return hidden_; }
  const FeatureLayout& layout() const { return layout_; }
  const SnnParams& snn_params() const { return p_; }
  SnnParams& snn_params() { return p_; }

  struct Output {
    std::array<S, kClasses> counts{};
    std::array<S, kClasses> potential{};  // summed output membrane potential
  };

  void check_input(const SparseVec& x) const {
    if (!x.index.empty() && static_cast<int>(x.index.back()) >= layout_.dim()) {
      throw InputError("feature index beyond the layout");
    }
  }

  Output run(const SparseVec& x) const {
    check_input(x);
    Trace tr;
    forward(x, tr);
    return output_of(tr);
  }

  /// Highest spike count; ties go to the larger summed membrane potential,
  /// then to class 0.
  int predict(const SparseVec& x) const {
    const Output o = run(x);
    if (o.counts[1] != o.counts[0]) return o.counts[1] > o.counts[0] ? 1 : 0;
    return o.potential[1] > o.potential[0] ? 1 : 0;
  }

  S loss(const LabeledFeatures& e) const { return spike_loss(run(e.x).counts, e.label); }

  std::pair<int, S> predict_and_loss(const LabeledFeatures& e) const {
    const Output o = run(e.x);
    const int pred = o.counts[1] != o.counts[0] ? (o.counts[1] > o.counts[0] ? 1 : 0)
                                                : (o.potential[1] > o.potential[0] ? 1 : 0);
    return {pred, spike_loss(o.counts, e.label)};
  }

  BatchStats loss_and_grad(std::span<const LabeledFeatures* const> batch, std::vector<S>& grad,
                           S scale = S(1)) const {
    const std::size_t n = batch.size();
    if (n == 0) throw InputError("empty batch");
    for (const auto* e : batch) check_input(e->x);
    const std::size_t np = params_.size();
    std::vector<std::vector<S>> per(n);
    std::vector<S> losses(n);
    std::vector<int> hits(n);
    const S step = scale / static_cast<S>(n);

#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t s = 0; s < n; ++s) {
      Trace tr;
      forward(batch[s]->x, tr);
      const Output o = output_of(tr);
      const int y = batch[s]->label;
      losses[s] = spike_loss(o.counts, y);
      int pred = o.counts[1] != o.counts[0] ? (o.counts[1] > o.counts[0] ? 1 : 0)
                                            : (o.potential[1] > o.potential[0] ? 1 : 0);
      hits[s] = pred == y ? 1 : 0;
      per[s].assign(np, S(0));
      backward(batch[s]->x, tr, o, y, step, per[s]);
    }

    grad.assign(np, S(0));
    BatchStats st;
    S total = S(0);
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t i = 0; i < np; ++i) grad[i] += per[s][i];
      total += losses[s];
      st.correct += hits[s];
    }
    st.loss = static_cast<double>(total * step);
    return st;
  }

 private:
  struct Trace {
    // [layer][t * width + i]
    std::vector<std::vector<S>> v;
    std::vector<std::vector<S>> s;
  };

  S target(int k, int y) const { return static_cast<S>(k == y ? p_.target_true : p_.target_false); }

  S spike_loss(const std::array<S, kClasses>& counts, int y) const {
    S l = S(0);
    for (int k = 0; k < kClasses; ++k) {
      const S e = counts[static_cast<std::size_t>(k)] - target(k, y);
      l += S(0.5) * e * e;
    }
    return l;
  }

  S spike(S x) const {
    if (p_.smooth) return S(0.5) + x / (S(1) + static_cast<S>(p_.surrogate_slope) * std::abs(x));
    return x >= S(0) ? S(1) : S(0);
  }

  S surrogate(S x) const {
    const S d = S(1) + static_cast<S>(p_.surrogate_slope) * std::abs(x);
    return S(1) / (d * d);
  }

  /// Calls f(t, in_index, value) for every input of bin t, in bin order.
  template <class F>
  void for_each_input(const SparseVec& x, F&& f) const {
    const std::size_t spatial = static_cast<std::size_t>(layout_.spatial_size());
    const std::size_t per_bin_spatial = 2 * static_cast<std::size_t>(layout_.cells());
    for (std::size_t k = 0; k < x.nnz(); ++k) {
      const std::size_t j = x.index[k];
      if (j < spatial) {
        f(static_cast<int>(j / per_bin_spatial), static_cast<int>(j % per_bin_spatial), x.value[k]);
      } else {
        const std::size_t r = j - spatial;
        f(static_cast<int>(r / 2), static_cast<int>(per_bin_spatial + r % 2), x.value[k]);
      }
    }
  }

  void forward(const SparseVec& x, Trace& tr) const {
    const int T = layout_.bins;
    const std::size_t nl = layers_.size();
    tr.v.resize(nl);
    tr.s.resize(nl);
    // Input currents of layer 0 for every bin.
    const LayerShape& L0 = layers_[0];
    std::vector<S> cur(static_cast<std::size_t>(T) * L0.out);
    for (int t = 0; t < T; ++t) {
      std::copy(params_.begin() + static_cast<std::ptrdiff_t>(L0.bias_offset()),
                params_.begin() + static_cast<std::ptrdiff_t>(L0.bias_offset() + L0.out),
                cur.begin() + static_cast<std::ptrdiff_t>(t) * L0.out);
    }
    const S gain = static_cast<S>(p_.input_gain);
    for_each_input(x, [&](int t, int i, float value) {
      const S v = gain * static_cast<S>(value);
      const S* row = params_.data() + L0.offset + static_cast<std::size_t>(i) * L0.out;
      S* c = cur.data() + static_cast<std::size_t>(t) * L0.out;
      for (int o = 0; o < L0.out; ++o) c[o] += v * row[o];
    });
    const S alpha = static_cast<S>(p_.decay), th = static_cast<S>(p_.threshold);
    for (std::size_t l = 0; l < nl; ++l) {
      const LayerShape& L = layers_[l];
      const std::size_t w = static_cast<std::size_t>(L.out);
      auto& V = tr.v[l];
      auto& Sp = tr.s[l];
      V.assign(static_cast<std::size_t>(T) * w, S(0));
      Sp.assign(static_cast<std::size_t>(T) * w, S(0));
      if (l > 0) {
        // Currents from the spikes of the layer below.
        cur.assign(static_cast<std::size_t>(T) * w, S(0));
        const auto& below = tr.s[l - 1];
        for (int t = 0; t < T; ++t) {
          S* c = cur.data() + static_cast<std::size_t>(t) * w;
          std::copy(params_.begin() + static_cast<std::ptrdiff_t>(L.bias_offset()),
                    params_.begin() + static_cast<std::ptrdiff_t>(L.bias_offset() + L.out), c);
          for (int i = 0; i < L.in; ++i) {
            const S si = below[static_cast<std::size_t>(t) * L.in + i];
            if (si == S(0)) continue;
            const S* row = params_.data() + L.offset + static_cast<std::size_t>(i) * w;
            for (std::size_t o = 0; o < w; ++o) c[o] += si * row[o];
          }
        }
      }
      for (int t = 0; t < T; ++t) {
        for (std::size_t o = 0; o < w; ++o) {
          const std::size_t k = static_cast<std::size_t>(t) * w + o;
          const S prev_v = t > 0 ? V[k - w] : S(0);
          const S prev_s = t > 0 ? Sp[k - w] : S(0);
          V[k] = alpha * prev_v + cur[k] - th * prev_s;
          Sp[k] = spike(V[k] - th);
        }
      }
    }
  }

  Output output_of(const Trace& tr) const {
    Output o;
    const auto& V = tr.v.back();
    const auto& Sp = tr.s.back();
    for (int t = 0; t < layout_.bins; ++t) {
      for (int k = 0; k < kClasses; ++k) {
        o.counts[static_cast<std::size_t>(k)] += Sp[static_cast<std::size_t>(t) * kClasses + k];
        o.potential[static_cast<std::size_t>(k)] += V[static_cast<std::size_t>(t) * kClasses + k];
      }
    }
    return o;
  }

  void backward(const SparseVec& x, const Trace& tr, const Output& o, int y, S step, std::vector<S>& g) const {
    const int T = layout_.bins;
    const std::size_t nl = layers_.size();
    const S alpha = static_cast<S>(p_.decay), th = static_cast<S>(p_.threshold);
    // Direct gradient w.r.t. the spikes of the current layer, [t][i].
    std::vector<S> direct(static_cast<std::size_t>(T) * kClasses);
    for (int t = 0; t < T; ++t) {
      for (int k = 0; k < kClasses; ++k) {
        direct[static_cast<std::size_t>(t) * kClasses + k] =
            (o.counts[static_cast<std::size_t>(k)] - target(k, y)) * step;
      }
    }
    std::vector<S> gcur;
    for (std::size_t l = nl; l-- > 0;) {
      const LayerShape& L = layers_[l];
      const std::size_t w = static_cast<std::size_t>(L.out);
      const auto& V = tr.v[l];
      gcur.assign(static_cast<std::size_t>(T) * w, S(0));
      std::vector<S> gv_next(w, S(0));
      for (int t = T; t-- > 0;) {
        for (std::size_t i = 0; i < w; ++i) {
          const std::size_t k = static_cast<std::size_t>(t) * w + i;
          const S gs = direct[k] - th * gv_next[i];
          const S gv = gs * surrogate(V[k] - th) + alpha * gv_next[i];
          gcur[k] = gv;
          gv_next[i] = gv;
        }
      }
      S* gb = g.data() + L.bias_offset();
      for (int t = 0; t < T; ++t) {
        for (std::size_t o2 = 0; o2 < w; ++o2) gb[o2] += gcur[static_cast<std::size_t>(t) * w + o2];
      }
      S* gw = g.data() + L.offset;
      if (l == 0) {
        const S gain = static_cast<S>(p_.input_gain);
        for_each_input(x, [&](int t, int i, float value) {
          const S v = gain * static_cast<S>(value);
          S* row = gw + static_cast<std::size_t>(i) * w;
          const S* gc = gcur.data() + static_cast<std::size_t>(t) * w;
          for (std::size_t o2 = 0; o2 < w; ++o2) row[o2] += v * gc[o2];
        });
        break;
      }
      const auto& below = tr.s[l - 1];
      const std::size_t win = static_cast<std::size_t>(L.in);
      std::vector<S> next_direct(static_cast<std::size_t>(T) * win, S(0));
      for (int t = 0; t < T; ++t) {
        const S* gc = gcur.data() + static_cast<std::size_t>(t) * w;
        for (std::size_t i = 0; i < win; ++i) {
          const S si = below[static_cast<std::size_t>(t) * win + i];
          const S* row = params_.data() + L.offset + i * w;
          S* grow = gw + i * w;
          S acc = S(0);
          for (std::size_t o2 = 0; o2 < w; ++o2) {
            if (si != S(0)) grow[o2] += si * gc[o2];
            acc += row[o2] * gc[o2];
          }
          next_direct[static_cast<std::size_t>(t) * win + i] = acc;
        }
      }
      direct.swap(next_direct);
    }
  }

  FeatureLayout layout_;
  std::vector<int> hidden_;
  SnnParams p_;
  std::vector<LayerShape> layers_;
  std::vector<S> params_;
};

}  // namespace slipforge

