#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gazesyn/nn/layers.hpp"

namespace gazesyn::nn {

/// Activations recorded by one forward pass.
struct Tape {
  std::vector<LayerCache> caches;
};

/// Flat list of parameter gradients, aligned with Network::parameters().
struct Gradients {
  std::vector<Tensor> tensors;

  bool all_finite() const {
    for (const auto& t : tensors)
      if (!t.all_finite()) return false;
    return true;
  }
  void scale(double s) {
    for (auto& t : tensors) t *= s;
  }
};

/// Sequential chain of layers. forward/backward are const: the network is
/// only mutated by optimizer steps, commit_statistics and weight loading.
class Network {
 public:
  Network() = default;

  Network(std::span<const LayerSpec> specs, Rng& rng) {
    for (const auto& spec : specs) layers_.push_back(make_layer(spec, rng));
  }

  Network(const Network& other) {
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
  }
  Network& operator=(const Network& other) {
    if (this != &other) {
      layers_.clear();
      for (const auto& l : other.layers_) layers_.push_back(l->clone());
    }
    return *this;
  }
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  void add(const LayerSpec& spec, Rng& rng) { layers_.push_back(make_layer(spec, rng)); }

  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }

  Tensor forward(const Tensor& input, Mode mode = Mode::Eval, Tape* tape = nullptr) const {
    if (tape) tape->caches.assign(layers_.size(), LayerCache{});
    Tensor x = input;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      try {
        x = layers_[i]->forward(x, mode, tape ? &tape->caches[i] : nullptr);
      } catch (const Error& e) {
        throw Error(e.code(), "layer " + std::to_string(i) + " " + e.what());
      }
    }
    return x;
  }

  /// Backpropagates `upstream` (dL/doutput) through the recorded tape,
  /// accumulating into `grads`. Returns dL/dinput.
  Tensor backward(const Tape& tape, const Tensor& upstream, Gradients& grads) const {
    require(tape.caches.size() == layers_.size(), "missing_cache",
            "backward called without a forward tape for this network");
    require(grads.tensors.size() == parameter_count(), "shape_mismatch",
            "gradient buffer does not match network parameters");
    Tensor g = upstream;
    std::size_t offset = parameter_count();
    for (std::size_t i = layers_.size(); i-- > 0;) {
      const auto& layer = *layers_[i];
      const auto& cache = tape.caches[i];
      require(cache.filled, "missing_cache",
              "layer " + std::to_string(i) + " " + layer_kind_name(layer.kind()) + ": no cached forward");
      const std::size_t np = layer.params().size();
      offset -= np;
      g = layer.backward(g, cache, std::span<Tensor>(grads.tensors).subspan(offset, np));
    }
    return g;
  }

  Gradients zero_gradients() const {
    Gradients g;
    for (const auto& l : layers_)
      for (const auto& p : l->params()) g.tensors.emplace_back(p.shape());
    return g;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l->params().size();
    return n;
  }

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for (auto& l : layers_)
      for (auto& p : l->params()) out.push_back(&p);
    return out;
  }

  std::vector<const Tensor*> parameters() const {
    std::vector<const Tensor*> out;
    for (const auto& l : layers_)
      for (const auto& p : l->params()) out.push_back(&p);
    return out;
  }

  /// Fold batch statistics of a training-mode tape into running state.
  void commit_statistics(const Tape& tape) {
    for (std::size_t i = 0; i < layers_.size() && i < tape.caches.size(); ++i)
      layers_[i]->commit(tape.caches[i]);
  }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace gazesyn::nn
