#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "synthdetect/error.hpp"
#include "synthdetect/layers.hpp"
#include "synthdetect/rng.hpp"

namespace synthdetect {

enum class ModelKind { CUSTOM_CNN, TINY_RESNET, TINY_VGG, TINY_DENSENET };

inline std::string_view model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::CUSTOM_CNN: return "CUSTOM_CNN";
    case ModelKind::TINY_RESNET: return "TINY_RESNET";
    case ModelKind::TINY_VGG: return "TINY_VGG";
    case ModelKind::TINY_DENSENET: return "TINY_DENSENET";
  }
  return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
  for (auto k : {ModelKind::CUSTOM_CNN, ModelKind::TINY_RESNET, ModelKind::TINY_VGG, ModelKind::TINY_DENSENET}) {
    if (s == model_kind_name(k)) return k;
  }
  throw ArgumentError("unknown model kind '" + std::string(s) + "'");
}

struct ModelSpec {
  ModelKind kind = ModelKind::CUSTOM_CNN;
  std::size_t head_classes = 1;      // 1: sigmoid probability output, >1: logits
  std::vector<std::size_t> stages;   // residual stage widths / VGG stage widths
  std::size_t growth = 12;           // dense blocks
  std::size_t dense_layers = 4;      // layers per dense block
  std::size_t stem_channels = 16;    // dense stem
  std::size_t hidden = 128;          // custom CNN hidden width
  std::size_t input_channels = 1;
  std::size_t input_size = 32;

  bool operator==(const ModelSpec&) const = default;
};

inline ModelSpec default_spec(ModelKind kind) {
  ModelSpec s;
  s.kind = kind;
  switch (kind) {
    case ModelKind::CUSTOM_CNN:
      s.head_classes = 1;
      s.input_channels = 1;
      s.input_size = 32;
      break;
    case ModelKind::TINY_RESNET:
      s.head_classes = 2;
      s.stages = {16, 32, 64};
      s.input_channels = 3;
      s.input_size = 24;
      break;
    case ModelKind::TINY_VGG:
      s.head_classes = 2;
      s.stages = {32, 64};
      s.input_channels = 3;
      s.input_size = 24;
      break;
    case ModelKind::TINY_DENSENET:
      s.head_classes = 2;
      s.input_channels = 3;
      s.input_size = 24;
      break;
  }
  return s;
}

enum class OutputKind { PROBABILITY, LOGITS };

template <class T>
class Model {
 public:
  Model(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) { build(); }

  // Assembles a model from explicit layers; used for ad-hoc architectures.
  Model(ModelSpec spec, std::vector<std::unique_ptr<Layer<T>>> layers, Shape input_shape)
      : spec_(std::move(spec)), layers_(std::move(layers)), input_shape_(std::move(input_shape)) {}

  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const ModelSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  Mode mode() const { return mode_; }
  void set_mode(Mode m) { mode_ = m; }
  OutputKind output() const { return spec_.head_classes == 1 ? OutputKind::PROBABILITY : OutputKind::LOGITS; }
  const Shape& input_shape() const { return input_shape_; }
  const std::vector<std::unique_ptr<Layer<T>>>& layers() const { return layers_; }

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> h = forward_logits(x);
    return output() == OutputKind::PROBABILITY ? sigmoid(h) : h;
  }

  // Output before the final sigmoid (identical to forward for logit heads).
  Tensor<T> forward_logits(const Tensor<T>& x) {
    Tensor<T> h = x;
    for (auto& layer : layers_) h = layer->forward(h, mode_);
    return h;
  }

  std::vector<NamedTensor<T>> state() const {
    std::vector<NamedTensor<T>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      layers_[i]->collect(std::to_string(i) + "." + layers_[i]->kind() + ".", out);
    }
    return out;
  }

  std::vector<Tensor<T>> parameters() const {
    std::vector<Tensor<T>> out;
    for (auto& nt : state()) {
      if (nt.trainable) out.push_back(nt.tensor);
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : parameters()) p.zero_grad();
  }

  // Swaps the terminal affine layer for a freshly initialized one with
  // n_classes outputs; every other tensor is left untouched.
  void replace_head(std::size_t n_classes, std::uint64_t seed) {
    if (n_classes < 1) throw ArgumentError("replace_head: n_classes must be >= 1");
    auto* head = layers_.empty() ? nullptr : dynamic_cast<Linear<T>*>(layers_.back().get());
    if (!head) throw StructuralError("replace_head: model does not end in an affine layer");
    RngStream rng(seed, "head", n_classes);
    layers_.back() = std::make_unique<Linear<T>>(head->in_features(), n_classes, rng);
    spec_.head_classes = n_classes;
  }

 private:
  template <class L, class... Args>
  L& push(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  void build() {
    if (spec_.head_classes < 1) throw ArgumentError("model head_classes must be >= 1");
    RngStream rng(seed_, "init", static_cast<std::uint64_t>(spec_.kind));
    const std::size_t side = spec_.input_size;
    input_shape_ = {spec_.input_channels, side, side};
    switch (spec_.kind) {
      case ModelKind::CUSTOM_CNN: {
        if (side < 4) throw ArgumentError("custom CNN input too small");
        push<Conv2d<T>>(spec_.input_channels, 32, 3, 1, 0, rng);
        push<Relu<T>>();
        push<MaxPool<T>>(2, 2);
        push<Flatten<T>>();
        const std::size_t pooled = (side - 2 - 2) / 2 + 1;
        push<Linear<T>>(32 * pooled * pooled, spec_.hidden, rng);
        push<Relu<T>>();
        push<Linear<T>>(spec_.hidden, spec_.head_classes, rng);
        break;
      }
      case ModelKind::TINY_RESNET: {
        if (spec_.stages.empty()) throw ArgumentError("TINY_RESNET needs at least one stage width");
        push<Conv2d<T>>(spec_.input_channels, spec_.stages[0], 3, 1, 1, rng);
        push<BatchNorm2d<T>>(spec_.stages[0]);
        push<Relu<T>>();
        std::size_t c = spec_.stages[0];
        for (std::size_t s = 0; s < spec_.stages.size(); ++s) {
          push<ResidualBlock<T>>(c, spec_.stages[s], s == 0 ? 1 : 2, rng);
          c = spec_.stages[s];
        }
        push<GlobalAvgPool<T>>();
        push<Linear<T>>(c, spec_.head_classes, rng);
        break;
      }
      case ModelKind::TINY_VGG: {
        std::size_t s = side;
        for (std::size_t i = 0; i < spec_.stages.size(); ++i) {
          if (s % 2 != 0) throw ShapeError("TINY_VGG: input size not divisible by 2 at every stage");
          s /= 2;
        }
        auto& stack = push<VggStack<T>>(spec_.input_channels, spec_.stages, rng);
        push<Flatten<T>>();
        push<Linear<T>>(stack.out_channels() * s * s, spec_.head_classes, rng);
        break;
      }
      case ModelKind::TINY_DENSENET: {
        if (side % 2 != 0) throw ShapeError("TINY_DENSENET: input size must be even");
        push<Conv2d<T>>(spec_.input_channels, spec_.stem_channels, 3, 1, 1, rng);
        auto& b1 = push<DenseBlock<T>>(spec_.stem_channels, spec_.dense_layers, spec_.growth, rng);
        const std::size_t c1 = b1.out_channels();
        const std::size_t reduced = std::max<std::size_t>(1, c1 / 2);
        push<BatchNorm2d<T>>(c1);
        push<Relu<T>>();
        push<Conv2d<T>>(c1, reduced, 1, 1, 0, rng);
        push<AvgPool<T>>(2, 2);
        auto& b2 = push<DenseBlock<T>>(reduced, spec_.dense_layers, spec_.growth, rng);
        const std::size_t c2 = b2.out_channels();
        push<BatchNorm2d<T>>(c2);
        push<Relu<T>>();
        push<GlobalAvgPool<T>>();
        push<Linear<T>>(c2, spec_.head_classes, rng);
        break;
      }
    }
  }

  ModelSpec spec_;
  std::uint64_t seed_ = 0;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  Shape input_shape_;
  Mode mode_ = Mode::TRAIN;
};

template <class T = float>
Model<T> build_model(ModelKind kind, std::uint64_t seed = 0) {
  return Model<T>(default_spec(kind), seed);
}

template <class T = float>
Model<T> build_custom_cnn(std::uint64_t seed = 0) {
  return build_model<T>(ModelKind::CUSTOM_CNN, seed);
}

}  // namespace synthdetect
