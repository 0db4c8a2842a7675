#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "ringtrain/errors.hpp"
#include "ringtrain/tensor.hpp"

namespace ringtrain {

struct Dense {
  std::size_t in = 0;
  std::size_t out = 0;
  friend bool operator==(const Dense&, const Dense&) = default;
};
struct ReLU {
  friend bool operator==(const ReLU&, const ReLU&) = default;
};
struct SoftmaxCrossEntropy {
  friend bool operator==(const SoftmaxCrossEntropy&,
                         const SoftmaxCrossEntropy&) = default;
};

using LayerSpec = std::variant<Dense, ReLU, SoftmaxCrossEntropy>;

// One gradient tensor per parametric (Dense) layer, in layer order.
template <typename T>
struct BasicGradientSet {
  std::vector<BasicTensor<T>> chunks;

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& c : chunks) n += c.size();
    return n;
  }
  friend bool operator==(const BasicGradientSet&,
                         const BasicGradientSet&) = default;
};

using GradientSet = BasicGradientSet<float>;

// Activations kept by forward() for backward(). Tied to the model instance
// and the weight version it was computed against.
template <typename T>
struct ForwardCache {
  std::uint64_t model_id = 0;
  std::uint64_t version = 0;
  std::vector<BasicTensor<T>> inputs;  // input of every layer
  BasicTensor<T> probs;                // softmax output
  BasicTensor<T> targets;              // dense target distribution
  bool valid = false;
};

template <typename T>
struct ForwardResult {
  T loss;
  ForwardCache<T> cache;
};

namespace detail {

inline std::uint64_t next_model_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace detail

// Dense/ReLU/softmax-cross-entropy network. Dense weights live in a
// {in + 1, out} tensor whose last row is the bias.
template <typename T>
class BasicModel {
 public:
  BasicModel(std::vector<LayerSpec> layers, std::uint64_t seed)
      : layers_(std::move(layers)), seed_(seed), id_(detail::next_model_id()) {
    validate();
    std::mt19937_64 rng(seed);
    for (const auto& l : layers_) {
      if (const auto* d = std::get_if<Dense>(&l)) {
        BasicTensor<T> w({d->in + 1, d->out});
        const double r = std::sqrt(6.0 / static_cast<double>(d->in + d->out));
        for (std::size_t i = 0; i < d->in; ++i)
          for (std::size_t o = 0; o < d->out; ++o)
            w.at(i, o) = static_cast<T>(r * (2.0 * detail::uniform01(rng) - 1.0));
        weights_.push_back(std::move(w));
      }
    }
  }

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t id() const noexcept { return id_; }
  std::uint64_t version() const noexcept { return version_; }

  std::vector<BasicTensor<T>>& weights() noexcept { return weights_; }
  const std::vector<BasicTensor<T>>& weights() const noexcept {
    return weights_;
  }

  // Direct weight edits invalidate outstanding caches.
  void touch() noexcept { ++version_; }

  std::size_t input_dim() const { return std::get<Dense>(layers_.front()).in; }
  std::size_t num_classes() const {
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
      if (const auto* d = std::get_if<Dense>(&*it)) return d->out;
    return 0;
  }
  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto& w : weights_) n += w.size();
    return n;
  }

  template <typename U>
  BasicModel<U> cast() const {
    BasicModel<U> m(layers_, seed_);
    for (std::size_t i = 0; i < weights_.size(); ++i)
      m.weights()[i] = tensor_cast<U>(weights_[i]);
    m.touch();
    return m;
  }

 private:
  void validate() const {
    if (layers_.empty()) throw ShapeError("model has no layers");
    if (!std::holds_alternative<Dense>(layers_.front()))
      throw ShapeError("first layer must be Dense");
    if (!std::holds_alternative<SoftmaxCrossEntropy>(layers_.back()))
      throw ShapeError("last layer must be SoftmaxCrossEntropy");
    std::size_t width = 0;
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
      const auto& l = layers_[i];
      if (std::holds_alternative<SoftmaxCrossEntropy>(l))
        throw ShapeError("SoftmaxCrossEntropy must be the last layer");
      if (const auto* d = std::get_if<Dense>(&l)) {
        if (d->in == 0 || d->out == 0) throw ShapeError("empty Dense layer");
        if (width != 0 && d->in != width)
          throw ShapeError("Dense(" + std::to_string(d->in) + "," +
                           std::to_string(d->out) + ") follows width " +
                           std::to_string(width));
        width = d->out;
      }
    }
  }

  std::vector<LayerSpec> layers_;
  std::vector<BasicTensor<T>> weights_;
  std::uint64_t seed_;
  std::uint64_t id_;
  std::uint64_t version_ = 0;
};

using RealModel = BasicModel<float>;

// Dense(d0,d1), ReLU, Dense(d1,d2), ..., SoftmaxCrossEntropy.
inline std::vector<LayerSpec> mlp_layers(const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) throw ShapeError("mlp needs at least two widths");
  std::vector<LayerSpec> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (i > 0) layers.emplace_back(ReLU{});
    layers.emplace_back(Dense{dims[i], dims[i + 1]});
  }
  layers.emplace_back(SoftmaxCrossEntropy{});
  return layers;
}

namespace detail {

// Labels are either class indices {batch} or target distributions
// {batch, classes}; both become a dense distribution.
template <typename T, typename L>
BasicTensor<T> dense_targets(const BasicTensor<L>& labels, std::size_t batch,
                             std::size_t classes) {
  BasicTensor<T> y({batch, classes});
  if (labels.rank() == 1) {
    if (labels.dim(0) != batch)
      throw ShapeError("labels batch " + std::to_string(labels.dim(0)) +
                       " != inputs batch " + std::to_string(batch));
    for (std::size_t n = 0; n < batch; ++n) {
      const auto c = static_cast<long long>(labels[n]);
      if (c < 0 || static_cast<std::size_t>(c) >= classes)
        throw ShapeError("label " + std::to_string(c) + " out of range");
      y.at(n, static_cast<std::size_t>(c)) = T{1};
    }
  } else if (labels.rank() == 2) {
    if (labels.dim(0) != batch || labels.dim(1) != classes)
      throw ShapeError("labels shape " + shape_string(labels.shape()) +
                       " does not match {" + std::to_string(batch) + "," +
                       std::to_string(classes) + "}");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<T>(labels[i]);
  } else {
    throw ShapeError("labels must be rank 1 or 2");
  }
  return y;
}

}  // namespace detail

template <typename T, typename L>
ForwardResult<T> forward(const BasicModel<T>& model,
                         const BasicTensor<T>& inputs,
                         const BasicTensor<L>& labels) {
  if (inputs.rank() != 2) throw ShapeError("inputs must be {batch, features}");
  const std::size_t batch = inputs.dim(0);
  if (batch == 0) throw ShapeError("empty batch");
  if (inputs.dim(1) != model.input_dim())
    throw ShapeError("input width " + std::to_string(inputs.dim(1)) +
                     " != model input " + std::to_string(model.input_dim()));

  ForwardCache<T> cache;
  cache.model_id = model.id();
  cache.version = model.version();
  cache.targets = detail::dense_targets<T>(labels, batch, model.num_classes());

  BasicTensor<T> x = inputs;
  std::size_t wi = 0;
  T loss{0};
  for (const auto& layer : model.layers()) {
    cache.inputs.push_back(x);
    if (const auto* d = std::get_if<Dense>(&layer)) {
      const auto& w = model.weights()[wi++];
      BasicTensor<T> y({batch, d->out});
      for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t o = 0; o < d->out; ++o) y.at(n, o) = w.at(d->in, o);
        for (std::size_t i = 0; i < d->in; ++i) {
          const T xv = x.at(n, i);
          if (xv == T{0}) continue;
          for (std::size_t o = 0; o < d->out; ++o) y.at(n, o) += xv * w.at(i, o);
        }
      }
      x = std::move(y);
    } else if (std::holds_alternative<ReLU>(layer)) {
      for (auto& v : x.values()) v = v > T{0} ? v : T{0};
    } else {
      const std::size_t classes = x.dim(1);
      BasicTensor<T> p({batch, classes});
      for (std::size_t n = 0; n < batch; ++n) {
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t c = 0; c < classes; ++c) mx = std::max(mx, x.at(n, c));
        T z{0};
        for (std::size_t c = 0; c < classes; ++c) z += std::exp(x.at(n, c) - mx);
        const T logz = std::log(z) + mx;
        for (std::size_t c = 0; c < classes; ++c) {
          const T logp = x.at(n, c) - logz;
          p.at(n, c) = std::exp(logp);
          const T t = cache.targets.at(n, c);
          if (t != T{0}) loss -= t * logp;
        }
      }
      cache.probs = std::move(p);
    }
  }
  cache.valid = true;
  return {loss / static_cast<T>(batch), std::move(cache)};
}

template <typename T>
BasicGradientSet<T> backward(const BasicModel<T>& model,
                             const ForwardCache<T>& cache) {
  if (!cache.valid) throw StateError("backward without a forward cache");
  if (cache.model_id != model.id() || cache.version != model.version())
    throw StateError("forward cache is stale (weights changed since forward)");

  const std::size_t batch = cache.probs.dim(0);
  BasicTensor<T> delta = cache.probs;
  for (std::size_t i = 0; i < delta.size(); ++i)
    delta[i] = (delta[i] - cache.targets[i]) / static_cast<T>(batch);

  BasicGradientSet<T> grads;
  grads.chunks.resize(model.weights().size());
  std::size_t wi = model.weights().size();
  const auto& layers = model.layers();
  for (std::size_t li = layers.size() - 1; li-- > 0;) {
    const auto& x = cache.inputs[li];
    if (const auto* d = std::get_if<Dense>(&layers[li])) {
      const auto& w = model.weights()[--wi];
      BasicTensor<T> g({d->in + 1, d->out});
      for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t i = 0; i < d->in; ++i) {
          const T xv = x.at(n, i);
          if (xv == T{0}) continue;
          for (std::size_t o = 0; o < d->out; ++o) g.at(i, o) += xv * delta.at(n, o);
        }
        for (std::size_t o = 0; o < d->out; ++o) g.at(d->in, o) += delta.at(n, o);
      }
      if (li > 0) {
        BasicTensor<T> dx({batch, d->in});
        for (std::size_t n = 0; n < batch; ++n)
          for (std::size_t i = 0; i < d->in; ++i) {
            T s{0};
            for (std::size_t o = 0; o < d->out; ++o) s += delta.at(n, o) * w.at(i, o);
            dx.at(n, i) = s;
          }
        delta = std::move(dx);
      }
      grads.chunks[wi] = std::move(g);
    } else if (std::holds_alternative<ReLU>(layers[li])) {
      // x is the ReLU input
      for (std::size_t i = 0; i < delta.size(); ++i)
        if (!(x[i] > T{0})) delta[i] = T{0};
    }
  }
  return grads;
}

// w <- w - lr * (g + weight_decay * w)
template <typename T>
void sgd_update(BasicModel<T>& model, const BasicGradientSet<T>& grads, T lr,
                T weight_decay) {
  auto& ws = model.weights();
  if (grads.chunks.size() != ws.size())
    throw ShapeError("gradient set has " + std::to_string(grads.chunks.size()) +
                     " chunks, model has " + std::to_string(ws.size()));
  for (std::size_t k = 0; k < ws.size(); ++k)
    if (!ws[k].same_shape(grads.chunks[k]))
      throw ShapeError("gradient chunk " + std::to_string(k) + " shape " +
                       shape_string(grads.chunks[k].shape()) + " != weight " +
                       shape_string(ws[k].shape()));
  for (std::size_t k = 0; k < ws.size(); ++k) {
    auto w = ws[k].values();
    auto g = grads.chunks[k].values();
    for (std::size_t i = 0; i < w.size(); ++i)
      w[i] = w[i] - lr * (g[i] + weight_decay * w[i]);
  }
  model.touch();
}

// Gradient layout a model produces, for sizing receive buffers.
template <typename T>
BasicGradientSet<T> zero_gradients(const BasicModel<T>& model) {
  BasicGradientSet<T> g;
  for (const auto& w : model.weights()) g.chunks.emplace_back(w.shape());
  return g;
}

}  // namespace ringtrain
