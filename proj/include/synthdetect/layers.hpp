#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "synthdetect/ops.hpp"
#include "synthdetect/rng.hpp"
#include "synthdetect/tensor.hpp"

namespace synthdetect {

template <class T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
  bool trainable = true;
};

// He-uniform: U(-sqrt(6 / fan_in), sqrt(6 / fan_in)).
template <class T>
Tensor<T> he_uniform(Shape shape, std::size_t fan_in, RngStream& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<T> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>::from(std::move(shape), std::move(data), true);
}

template <class T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  virtual std::string kind() const = 0;
  // Parameters and buffers, in a stable order, names prefixed.
  virtual void collect(const std::string& /*prefix*/, std::vector<NamedTensor<T>>& /*out*/) {}
};

template <class T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride, std::size_t padding,
         RngStream& rng)
      : weight(he_uniform<T>({out_channels, in_channels, kernel, kernel}, in_channels * kernel * kernel, rng)),
        bias(Tensor<T>::zeros({out_channels}, true)),
        stride(stride),
        padding(padding) {}

  Tensor<T> forward(const Tensor<T>& x, Mode) override { return conv2d(x, weight, bias, stride, padding); }
  std::string kind() const override { return "conv2d"; }
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) override {
    out.push_back({prefix + "weight", weight, true});
    out.push_back({prefix + "bias", bias, true});
  }

  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }

  Tensor<T> weight;
  Tensor<T> bias;
  std::size_t stride;
  std::size_t padding;
};

template <class T>
class BatchNorm2d : public Layer<T> {
 public:
  explicit BatchNorm2d(std::size_t channels)
      : gamma(Tensor<T>::full({channels}, T(1), true)), beta(Tensor<T>::zeros({channels}, true)), stats(channels) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override { return batchnorm2d(x, gamma, beta, stats, mode); }
  std::string kind() const override { return "batchnorm2d"; }
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) override {
    out.push_back({prefix + "gamma", gamma, true});
    out.push_back({prefix + "beta", beta, true});
    out.push_back({prefix + "running_mean", stats.running_mean, false});
    out.push_back({prefix + "running_var", stats.running_var, false});
  }

  Tensor<T> gamma;
  Tensor<T> beta;
  BatchNormStats<T> stats;
};

template <class T>
class Linear : public Layer<T> {
 public:
  Linear(std::size_t in_features, std::size_t out_features, RngStream& rng)
      : weight(he_uniform<T>({in_features, out_features}, in_features, rng)),
        bias(Tensor<T>::zeros({out_features}, true)) {}

  Tensor<T> forward(const Tensor<T>& x, Mode) override { return affine(x, weight, bias); }
  std::string kind() const override { return "linear"; }
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) override {
    out.push_back({prefix + "weight", weight, true});
    out.push_back({prefix + "bias", bias, true});
  }

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  Tensor<T> weight;
  Tensor<T> bias;
};

template <class T>
class Relu : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode) override { return relu(x); }
  std::string kind() const override { return "relu"; }
};

template <class T>
class MaxPool : public Layer<T> {
 public:
  MaxPool(std::size_t k, std::size_t stride) : k(k), stride(stride) {}
  Tensor<T> forward(const Tensor<T>& x, Mode) override { return maxpool2d(x, k, stride); }
  std::string kind() const override { return "maxpool2d"; }
  std::size_t k, stride;
};

template <class T>
class AvgPool : public Layer<T> {
 public:
  AvgPool(std::size_t k, std::size_t stride) : k(k), stride(stride) {}
  Tensor<T> forward(const Tensor<T>& x, Mode) override { return avgpool2d(x, k, stride); }
  std::string kind() const override { return "avgpool2d"; }
  std::size_t k, stride;
};

template <class T>
class Flatten : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode) override { return flatten(x); }
  std::string kind() const override { return "flatten"; }
};

template <class T>
class GlobalAvgPool : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode) override { return global_avg_pool(x); }
  std::string kind() const override { return "global_avg_pool"; }
};

// x_{l+1} = relu(x_l + F(x_l)), F = conv-bn-relu-conv-bn. A 1x1 projection
// (stride matched) is applied to the skip path when the shape changes.
template <class T>
class ResidualBlock : public Layer<T> {
 public:
  ResidualBlock(std::size_t in_channels, std::size_t out_channels, std::size_t stride, RngStream& rng)
      : conv1(in_channels, out_channels, 3, stride, 1, rng),
        bn1(out_channels),
        conv2(out_channels, out_channels, 3, 1, 1, rng),
        bn2(out_channels) {
    if (in_channels != out_channels || stride != 1) {
      projection = std::make_unique<Conv2d<T>>(in_channels, out_channels, 1, stride, 0, rng);
    }
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    Tensor<T> branch = relu(bn1.forward(conv1.forward(x, mode), mode));
    branch = bn2.forward(conv2.forward(branch, mode), mode);
    const Tensor<T> skip = projection ? projection->forward(x, mode) : x;
    if (skip.shape() != branch.shape()) {
      throw ShapeError("residual block: skip path " + shape_str(skip.shape()) + " cannot be added to branch " +
                       shape_str(branch.shape()));
    }
    return relu(add(skip, branch));
  }
  std::string kind() const override { return "residual_block"; }
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) override {
    conv1.collect(prefix + "conv1.", out);
    bn1.collect(prefix + "bn1.", out);
    conv2.collect(prefix + "conv2.", out);
    bn2.collect(prefix + "bn2.", out);
    if (projection) projection->collect(prefix + "proj.", out);
  }

  Conv2d<T> conv1;
  BatchNorm2d<T> bn1;
  Conv2d<T> conv2;
  BatchNorm2d<T> bn2;
  std::unique_ptr<Conv2d<T>> projection;
};

// One composite H_l = bn -> relu -> conv3x3 (growth outputs).
template <class T>
class DenseLayer {
 public:
  DenseLayer(std::size_t in_channels, std::size_t growth, RngStream& rng)
      : bn(in_channels), conv(in_channels, growth, 3, 1, 1, rng) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode) { return conv.forward(relu(bn.forward(x, mode)), mode); }

  BatchNorm2d<T> bn;
  Conv2d<T> conv;
};

// Layer l sees the channel concatenation of the block input and every earlier
// layer's output; the block returns the full concatenation, so it has
// in_channels + n_layers * growth channels.
template <class T>
class DenseBlock : public Layer<T> {
 public:
  DenseBlock(std::size_t in_channels, std::size_t n_layers, std::size_t growth, RngStream& rng)
      : in_channels_(in_channels), growth_(growth) {
    for (std::size_t l = 0; l < n_layers; ++l) {
      layers.push_back(std::make_unique<DenseLayer<T>>(in_channels + l * growth, growth, rng));
    }
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    if (x.rank() != 4 || x.dim(1) != in_channels_) {
      throw ShapeError("dense block expects " + std::to_string(in_channels_) + " input channels, got " +
                       shape_str(x.shape()));
    }
    if (layers.empty()) return x;
    std::vector<Tensor<T>> features{x};
    Tensor<T> joined = x;
    for (auto& layer : layers) {
      features.push_back(layer->forward(joined, mode));
      joined = concat_channels(features);
    }
    return joined;
  }
  std::string kind() const override { return "dense_block"; }
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) override {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l]->bn.collect(prefix + "layer" + std::to_string(l) + ".bn.", out);
      layers[l]->conv.collect(prefix + "layer" + std::to_string(l) + ".conv.", out);
    }
  }

  std::size_t in_channels() const { return in_channels_; }
  std::size_t out_channels() const { return in_channels_ + layers.size() * growth_; }

  std::vector<std::unique_ptr<DenseLayer<T>>> layers;

 private:
  std::size_t in_channels_;
  std::size_t growth_;
};

// Per stage: (conv3x3 pad 1 -> relu) x 2, then maxpool 2x2 stride 2.
template <class T>
class VggStack : public Layer<T> {
 public:
  VggStack(std::size_t in_channels, const std::vector<std::size_t>& stage_channels, RngStream& rng)
      : in_channels_(in_channels) {
    std::size_t c = in_channels;
    for (std::size_t width : stage_channels) {
      stages.push_back({std::make_unique<Conv2d<T>>(c, width, 3, 1, 1, rng),
                        std::make_unique<Conv2d<T>>(width, width, 3, 1, 1, rng)});
      c = width;
    }
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    Tensor<T> h = x;
    for (auto& stage : stages) {
      if (h.dim(2) % 2 != 0 || h.dim(3) % 2 != 0) {
        throw ShapeError("vgg stack: spatial size " + shape_str(h.shape()) + " is not divisible by 2");
      }
      h = relu(stage.first->forward(h, mode));
      h = relu(stage.second->forward(h, mode));
      h = maxpool2d(h, 2, 2);
    }
    return h;
  }
  std::string kind() const override { return "vgg_stack"; }
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) override {
    for (std::size_t s = 0; s < stages.size(); ++s) {
      stages[s].first->collect(prefix + "stage" + std::to_string(s) + ".conv1.", out);
      stages[s].second->collect(prefix + "stage" + std::to_string(s) + ".conv2.", out);
    }
  }

  std::size_t out_channels() const { return stages.empty() ? in_channels_ : stages.back().second->out_channels(); }

  std::vector<std::pair<std::unique_ptr<Conv2d<T>>, std::unique_ptr<Conv2d<T>>>> stages;

 private:
  std::size_t in_channels_;
};

}  // namespace synthdetect
