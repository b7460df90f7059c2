#include <gtest/gtest.h>

#include "synthdetect/layers.hpp"
#include "synthdetect/models.hpp"
#include "synthdetect/testing/oracles.hpp"

using namespace synthdetect;
namespace t = synthdetect::testing;

using TD = Tensor<double>;

namespace {

constexpr double kTol = 1e-4;

// Reduces any output to a scalar with fixed random weights so every output
// element carries a distinct upstream gradient.
struct Projector {
  std::vector<double> w;
  TD operator()(const TD& y) {
    if (w.size() != y.numel()) {
      RngStream rng(y.numel(), "projector");
      w.resize(y.numel());
      for (auto& v : w) v = rng.uniform(-1.0, 1.0);
    }
    return weighted_sum(y, std::span<const double>(w));
  }
};

}  // namespace

TEST(Grad, Conv2dRandomConfigs) {
  RngStream rng(1, "grad.conv");
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t C = 1 + rng.uniform_int(2), F = 1 + rng.uniform_int(3), k = 1 + rng.uniform_int(3);
    const std::size_t s = 1 + rng.uniform_int(2), p = rng.uniform_int(2);
    const std::size_t H = k + 1 + rng.uniform_int(3);
    auto x = t::random_tensor({2, C, H, H}, rng);
    auto w = t::random_tensor({F, C, k, k}, rng);
    auto b = t::random_tensor({F}, rng);
    Projector proj;
    auto r = t::check_gradients([&](const std::vector<TD>& in) { return proj(conv2d(in[0], in[1], in[2], s, p)); },
                                {x, w, b});
    EXPECT_LT(r.max_rel_error, kTol) << "trial " << trial << " input " << r.worst_input;
  }
}

TEST(Grad, Pools) {
  RngStream rng(2, "grad.pool");
  for (int trial = 0; trial < 6; ++trial) {
    auto x = t::random_tensor({2, 2, 6, 6}, rng);
    const std::size_t k = 2 + rng.uniform_int(2), s = 1 + rng.uniform_int(2);
    Projector a, b, c;
    EXPECT_LT(t::check_gradients([&](const std::vector<TD>& in) { return a(maxpool2d(in[0], k, s)); }, {x}).max_rel_error,
              kTol);
    EXPECT_LT(t::check_gradients([&](const std::vector<TD>& in) { return b(avgpool2d(in[0], k, s)); }, {x}).max_rel_error,
              kTol);
    EXPECT_LT(t::check_gradients([&](const std::vector<TD>& in) { return c(global_avg_pool(in[0])); }, {x}).max_rel_error,
              kTol);
  }
}

TEST(Grad, ActivationsAndAffine) {
  RngStream rng(3, "grad.act");
  for (int trial = 0; trial < 6; ++trial) {
    const std::size_t N = 1 + rng.uniform_int(4), D = 1 + rng.uniform_int(5), M = 1 + rng.uniform_int(4);
    auto x = t::random_tensor({N, D}, rng, true, -2.0, 2.0);
    auto w = t::random_tensor({D, M}, rng);
    auto b = t::random_tensor({M}, rng);
    Projector p1, p2, p3;
    EXPECT_LT(t::check_gradients([&](const std::vector<TD>& in) { return p1(relu(in[0])); }, {x}).max_rel_error, kTol);
    EXPECT_LT(t::check_gradients([&](const std::vector<TD>& in) { return p2(sigmoid(in[0])); }, {x}).max_rel_error, kTol);
    EXPECT_LT(t::check_gradients([&](const std::vector<TD>& in) { return p3(affine(in[0], in[1], in[2])); }, {x, w, b})
                  .max_rel_error,
              kTol);
  }
}

TEST(Grad, BatchNormBothModes) {
  RngStream rng(4, "grad.bn");
  for (int trial = 0; trial < 6; ++trial) {
    auto x = t::random_tensor({3, 2, 3, 3}, rng, true, -2.0, 3.0);
    auto g = t::random_tensor({2}, rng, true, 0.5, 1.5);
    auto b = t::random_tensor({2}, rng);
    BatchNormStats<double> st(2);
    st.running_mean.data()[0] = 0.3;
    st.running_var.data()[1] = 2.0;
    const Mode mode = trial % 2 ? Mode::EVAL : Mode::TRAIN;
    Projector p;
    auto r = t::check_gradients([&](const std::vector<TD>& in) { return p(batchnorm2d(in[0], in[1], in[2], st, mode)); },
                                {x, g, b});
    EXPECT_LT(r.max_rel_error, kTol) << "trial " << trial;
  }
}

TEST(Grad, Losses) {
  RngStream rng(5, "grad.loss");
  for (int trial = 0; trial < 6; ++trial) {
    auto q = t::random_tensor({5, 1}, rng, true, 0.05, 0.95);
    auto z = t::random_tensor({5, 1}, rng, true, -4.0, 4.0);
    auto l = t::random_tensor({5, 3}, rng, true, -3.0, 3.0);
    std::vector<double> tgt(5);
    std::vector<int> cls(5);
    for (std::size_t i = 0; i < 5; ++i) {
      tgt[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
      cls[i] = static_cast<int>(rng.uniform_int(3));
    }
    EXPECT_LT(t::check_gradients([&](const std::vector<TD>& in) {
                return binary_cross_entropy(in[0], std::span<const double>(tgt));
              }, {q}).max_rel_error,
              kTol);
    EXPECT_LT(t::check_gradients([&](const std::vector<TD>& in) {
                return binary_cross_entropy_with_logits(in[0], std::span<const double>(tgt));
              }, {z}).max_rel_error,
              kTol);
    EXPECT_LT(t::check_gradients([&](const std::vector<TD>& in) {
                return softmax_cross_entropy(in[0], std::span<const int>(cls));
              }, {l}).max_rel_error,
              kTol);
  }
}

TEST(Grad, StructuralOps) {
  RngStream rng(6, "grad.struct");
  auto a = t::random_tensor({2, 1, 3, 3}, rng);
  auto b = t::random_tensor({2, 2, 3, 3}, rng);
  auto c = t::random_tensor({2, 2, 3, 3}, rng);
  Projector p1, p2, p3;
  EXPECT_LT(t::check_gradients([&](const std::vector<TD>& in) { return p1(concat_channels<double>({in[0], in[1]})); },
                               {a, b}).max_rel_error,
            kTol);
  EXPECT_LT(t::check_gradients([&](const std::vector<TD>& in) { return p2(add(in[0], in[1])); }, {b, c}).max_rel_error,
            kTol);
  EXPECT_LT(t::check_gradients([&](const std::vector<TD>& in) { return p3(flatten(in[0])); }, {b}).max_rel_error, kTol);
  EXPECT_LT(t::check_gradients([&](const std::vector<TD>& in) { return sum(in[0]); }, {c}).max_rel_error, kTol);
}

TEST(Grad, ConvReluAffineChain) {
  RngStream rng(7, "grad.chain");
  auto x = t::random_tensor({2, 1, 6, 6}, rng);
  auto w = t::random_tensor({3, 1, 3, 3}, rng);
  auto cb = t::random_tensor({3}, rng);
  auto fw = t::random_tensor({12, 2}, rng);
  auto fb = t::random_tensor({2}, rng);
  Projector p;
  auto r = t::check_gradients(
      [&](const std::vector<TD>& in) {
        auto h = maxpool2d(relu(conv2d(in[0], in[1], in[2], 1, 0)), 2, 2);
        return p(affine(flatten(h), in[3], in[4]));
      },
      {x, w, cb, fw, fb});
  EXPECT_LT(r.max_rel_error, kTol);
}

TEST(Grad, ResidualBlockBothBranches) {
  for (auto [cin, cout, stride] : {std::tuple{2, 2, 1}, std::tuple{2, 3, 2}}) {
    RngStream rng(8 + cout, "grad.res");
    ResidualBlock<double> block(cin, cout, stride, rng);
    auto x = t::random_tensor({2, static_cast<std::size_t>(cin), 4, 4}, rng);
    std::vector<TD> inputs{x};
    std::vector<TD> before_bn;
    std::vector<NamedTensor<double>> params;
    block.collect("", params);
    for (auto& nt : params) {
      if (!nt.trainable) continue;
      // a bias feeding batch norm has an exactly zero gradient; relative error is undefined there
      if (nt.name == "conv1.bias" || nt.name == "conv2.bias")
        before_bn.push_back(nt.tensor);
      else
        inputs.push_back(nt.tensor);
    }
    for (auto& b : before_bn) b.zero_grad();
    Projector p;
    auto r = t::check_gradients([&](const std::vector<TD>& in) { return p(block.forward(in[0], Mode::TRAIN)); }, inputs);
    EXPECT_LT(r.max_rel_error, kTol) << cin << "->" << cout << " input " << r.worst_input;
    ASSERT_EQ(before_bn.size(), 2u);
    for (auto& b : before_bn)
      for (double g : b.grad()) EXPECT_LT(std::abs(g), 1e-12);
  }
}

TEST(Grad, DenseBlock) {
  RngStream rng(9, "grad.dense");
  DenseBlock<double> block(2, 2, 2, rng);
  auto x = t::random_tensor({2, 2, 3, 3}, rng);
  std::vector<TD> inputs{x};
  std::vector<NamedTensor<double>> params;
  block.collect("", params);
  for (auto& nt : params)
    if (nt.trainable) inputs.push_back(nt.tensor);
  Projector p;
  EXPECT_LT(t::check_gradients([&](const std::vector<TD>& in) { return p(block.forward(in[0], Mode::TRAIN)); }, inputs)
                .max_rel_error,
            kTol);
}

TEST(Grad, VggStackOneStage) {
  RngStream rng(10, "grad.vgg");
  VggStack<double> stack(2, {3}, rng);
  auto x = t::random_tensor({1, 2, 4, 4}, rng);
  std::vector<TD> inputs{x};
  std::vector<NamedTensor<double>> params;
  stack.collect("", params);
  for (auto& nt : params) inputs.push_back(nt.tensor);
  Projector p;
  EXPECT_LT(t::check_gradients([&](const std::vector<TD>& in) { return p(stack.forward(in[0], Mode::TRAIN)); }, inputs)
                .max_rel_error,
            kTol);
}

TEST(Grad, SmallCustomCnnEndToEnd) {
  ModelSpec spec = default_spec(ModelKind::CUSTOM_CNN);
  spec.input_size = 8;
  spec.hidden = 4;
  Model<double> model(spec, 3);
  RngStream rng(11, "grad.cnn");
  auto x = t::random_tensor({2, 1, 8, 8}, rng, false, 0.0, 1.0);
  const std::vector<double> tgt{1.0, 0.0};
  auto r = t::check_gradients(
      [&](const std::vector<TD>&) { return binary_cross_entropy(model.forward(x), std::span<const double>(tgt)); },
      model.parameters());
  EXPECT_LT(r.max_rel_error, kTol);
}
