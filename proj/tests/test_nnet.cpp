#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "crafter/nnet/layers.hpp"
#include "crafter/nnet/params.hpp"
#include "support/gradcheck.hpp"

using namespace crafter;
using crafter::testing::check_gradients;
using crafter::testing::layer_case_makers;
using crafter::testing::random_tensor;
using crafter::testing::TensorD;

namespace {

constexpr double kGradTol = 1e-6;

void run_layer(std::size_t which, std::uint64_t seed) {
  Rng rng(seed);
  for (int trial = 0; trial < 100; ++trial) {
    auto c = layer_case_makers()[which](rng);
    const auto r = check_gradients(c.inputs, c.f, rng);
    ASSERT_LT(r.max_rel, kGradTol) << c.name << " trial " << trial;
    ASSERT_GT(r.checked, 0u);
  }
}

}  // namespace

TEST(GradCheck, Conv2d) { run_layer(0, 100); }
TEST(GradCheck, Linear) { run_layer(1, 101); }
TEST(GradCheck, LstmCell) { run_layer(2, 102); }
TEST(GradCheck, Attention) { run_layer(3, 103); }
TEST(GradCheck, LayerNorm) { run_layer(4, 104); }
TEST(GradCheck, ResidualMlp) { run_layer(5, 105); }

TEST(GradCheck, PatchSplitAndTokens) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int patch = rng.range(1, 3);
    const int stride = rng.range(1, patch);
    const int gh = rng.range(1, 3), gw = rng.range(1, 3);
    const int h = patch + (gh - 1) * stride, w = patch + (gw - 1) * stride;
    const int f = 2 * patch * patch;
    std::vector<TensorD> in = {random_tensor({2, 2, h, w}, rng), random_tensor({f}, rng)};
    const auto r = check_gradients(in, [&](const std::vector<TensorD>& x) {
      const auto tokens = nn::append_token(nn::patch_split(x[0], patch, stride), x[1]);
      return nn::concat_cols(nn::select_token(tokens, 0), nn::mean_tokens(tokens));
    }, rng);
    EXPECT_LT(r.max_rel, kGradTol);
  }
}

TEST(GradCheck, DetectsAWrongGradient) {
  Rng rng(3);
  std::vector<TensorD> in = {random_tensor({3, 4}, rng)};
  // relu applied to a detached copy: the output depends on x but no gradient flows.
  const auto r = check_gradients(in, [](const std::vector<TensorD>& x) {
    return nn::add(nn::relu(x[0].detach()), nn::mul(x[0], x[0]));
  }, rng);
  EXPECT_GT(r.max_rel, 1e-3);
}

TEST(Conv2d, MatchesDirectSum) {
  Rng rng(11);
  const auto x = random_tensor({2, 3, 6, 5}, rng);
  const auto w = random_tensor({4, 3, 3, 3}, rng);
  const auto b = random_tensor({4}, rng);
  const auto y = nn::conv2d(x, w, b, 2, 1);
  ASSERT_EQ(y.shape(), (nn::Shape{2, 4, 3, 3}));
  auto at = [&](int n, int c, int i, int j) {
    if (i < 0 || j < 0 || i >= 6 || j >= 5) return 0.0;
    return x[static_cast<std::size_t>(((n * 3 + c) * 6 + i) * 5 + j)];
  };
  for (int n = 0; n < 2; ++n)
    for (int o = 0; o < 4; ++o)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          double s = b[static_cast<std::size_t>(o)];
          for (int c = 0; c < 3; ++c)
            for (int u = 0; u < 3; ++u)
              for (int v = 0; v < 3; ++v)
                s += w[static_cast<std::size_t>(((o * 3 + c) * 3 + u) * 3 + v)] * at(n, c, 2 * i + u - 1, 2 * j + v - 1);
          EXPECT_NEAR(y[static_cast<std::size_t>(((n * 4 + o) * 3 + i) * 3 + j)], s, 1e-12);
        }
}

TEST(PatchSplit, TokenCountsOnTheObservationMap) {
  auto map = TensorD::from({1, 1, 64, 64}, std::vector<double>(64 * 64, 0.0));
  EXPECT_EQ(nn::patch_split(map, 8, 8).dim(1), 64);
  EXPECT_EQ(nn::patch_split(map, 16, 16).dim(1), 16);
  EXPECT_EQ(nn::patch_split(map, 16, 8).dim(1), 49);
  EXPECT_EQ(nn::patch_split(map, 4, 4).dim(1), 256);
  EXPECT_EQ(nn::patch_split(map, 64, 64).dim(1), 1);
  EXPECT_THROW(nn::patch_split(map, 8, 9), nn::ShapeError);
  EXPECT_EQ(nn::patch_split(map, 12, 8).dim(1), 49);
  EXPECT_EQ(nn::patch_split(map, 10, 8).dim(1), 49);
  EXPECT_THROW(nn::patch_split(map, 65, 1), nn::ShapeError);
  EXPECT_THROW(nn::patch_split(map, 0, 1), nn::ShapeError);
}

TEST(PatchSplit, FeatureOrderIsChannelRowColumn) {
  std::vector<double> v(2 * 4 * 4);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  const auto x = TensorD::from({1, 2, 4, 4}, v);
  const auto p = nn::patch_split(x, 2, 2);
  ASSERT_EQ(p.shape(), (nn::Shape{1, 4, 8}));
  // Token 1 is the top-right patch.
  const std::vector<double> expect = {2, 3, 6, 7, 18, 19, 22, 23};
  for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(p[8 + j], expect[j]);
}

TEST(Attention, RowsOrColumnsSumToOne) {
  Rng rng(5);
  const auto q = random_tensor({2, 3, 4}, rng), k = random_tensor({2, 5, 4}, rng);
  const auto by_keys = nn::attention(q, k, k, 2);
  for (std::size_t r = 0; r < by_keys.weights.size() / 5; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 5; ++c) s += by_keys.weights[r * 5 + c];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  const auto by_queries = nn::attention(q, k, k, 2, nn::SoftmaxAxis::queries);
  for (std::size_t m = 0; m < 4; ++m)
    for (std::size_t c = 0; c < 5; ++c) {
      double s = 0;
      for (std::size_t r = 0; r < 3; ++r) s += by_queries.weights[m * 15 + r * 5 + c];
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  EXPECT_THROW(nn::attention(q, k, k, 3), nn::ShapeError);
}

TEST(Layers, SinusoidalPositions) {
  const auto pe = nn::sinusoidal_pe<double>(5, 6);
  for (int p = 0; p < 5; ++p)
    for (int i = 0; i < 3; ++i) {
      const double angle = p * std::exp(-std::log(10000.0) * 2.0 * i / 6.0);
      EXPECT_NEAR(pe[static_cast<std::size_t>(p * 6 + 2 * i)], std::sin(angle), 1e-12);
      EXPECT_NEAR(pe[static_cast<std::size_t>(p * 6 + 2 * i + 1)], std::cos(angle), 1e-12);
    }
  EXPECT_THROW(nn::sinusoidal_pe<double>(4, 5), nn::ShapeError);
}

TEST(Layers, ShapeErrors) {
  Rng rng(1);
  EXPECT_THROW(nn::linear(random_tensor({2, 3}, rng), random_tensor({4, 5}, rng), random_tensor({4}, rng)),
               nn::ShapeError);
  EXPECT_THROW(nn::add(random_tensor({2, 3}, rng), random_tensor({3, 2}, rng)), nn::ShapeError);
  EXPECT_THROW(TensorD::from({2, 2}, {1.0}), nn::ShapeError);
}

TEST(NoGrad, SkipsGraphRecording) {
  Rng rng(2);
  const auto x = random_tensor({2, 2}, rng);
  nn::NoGrad guard;
  const auto y = nn::mul(x, x);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Init, OrthogonalRowsOrColumns) {
  Rng rng(9);
  for (auto shape : {nn::Shape{4, 9}, nn::Shape{9, 4}, nn::Shape{6, 2, 2, 2}, nn::Shape{5, 5}}) {
    auto t = TensorD::zeros(shape);
    const double gain = std::sqrt(2.0);
    nn::orthogonal_init(t, gain, rng);
    const int rows = t.dim(0), cols = static_cast<int>(t.size()) / rows;
    Eigen::Map<const nn::RowMat<double>> w(t.data().data(), rows, cols);
    const Eigen::MatrixXd g = rows <= cols ? Eigen::MatrixXd(w * w.transpose()) : Eigen::MatrixXd(w.transpose() * w);
    const Eigen::MatrixXd id = gain * gain * Eigen::MatrixXd::Identity(g.rows(), g.cols());
    EXPECT_LT((g - id).cwiseAbs().maxCoeff(), 1e-10) << nn::to_string(shape);
  }
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  nn::ParamSet<double> ps;
  auto& p = ps.add("p", {3});
  p.grad();
  p.node().grad = {2.0, -0.5, 0.0};
  nn::Adam<double> opt(ps, {0.1, 0.9, 0.999, 1e-8});
  opt.step();
  EXPECT_NEAR(p[0], -0.1, 1e-8);
  EXPECT_NEAR(p[1], 0.1, 1e-8);
  EXPECT_EQ(p[2], 0.0);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(Adam, MinimizesAQuadratic) {
  nn::ParamSet<double> ps;
  auto& p = ps.add("p", {2});
  p.data()[0] = 3.0;
  p.data()[1] = -2.0;
  nn::Adam<double> opt(ps, {0.05, 0.9, 0.999, 1e-8});
  const auto target = TensorD::from({2}, {1.0, 0.5});
  for (int i = 0; i < 2000; ++i) {
    ps.zero_grad();
    const auto d = nn::add(p, nn::mul(target, TensorD::from({2}, {-1.0, -1.0})));
    nn::backward(nn::sum(nn::mul(d, d)));
    opt.step();
  }
  EXPECT_NEAR(p[0], 1.0, 1e-3);
  EXPECT_NEAR(p[1], 0.5, 1e-3);
}

TEST(ParamSet, ClipGradNorm) {
  nn::ParamSet<double> ps;
  auto& a = ps.add("a", {2});
  a.grad();
  a.node().grad = {3.0, 4.0};
  EXPECT_DOUBLE_EQ(ps.clip_grad_norm(1.0), 5.0);
  EXPECT_NEAR(ps.grad_norm(), 1.0, 1e-9);
  EXPECT_THROW(ps.add("a", {1}), nn::ShapeError);
  EXPECT_THROW(ps.get("b"), nn::ShapeError);
}

TEST(Checkpoint, RoundTripAndRefusals) {
  Rng rng(4);
  nn::ParamSet<float> a, b, c;
  for (auto* ps : {&a, &b}) {
    ps->add("w", {3, 4});
    ps->add("b", {3});
  }
  c.add("w", {3, 5});
  c.add("b", {3});
  for (auto& [_, t] : a) nn::gaussian_init(t, 1.0, rng);
  const auto path = std::filesystem::temp_directory_path() / "crafter_nnet.ckpt";
  nn::save_checkpoint(path, a, 42);
  EXPECT_EQ(nn::checkpoint_digest(path), 42u);
  nn::load_checkpoint(path, b, 42);
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(a.get("w")[i], b.get("w")[i]);
  EXPECT_THROW(nn::load_checkpoint(path, b, 43), nn::CheckpointError);
  EXPECT_THROW(nn::load_checkpoint(path, c, 42), nn::CheckpointError);
  {
    std::ofstream out(path, std::ios::binary);
    out << "garbage!";
  }
  EXPECT_THROW(nn::load_checkpoint(path, b, 42), nn::CheckpointError);
  std::filesystem::remove(path);
  EXPECT_THROW(nn::checkpoint_digest(path), nn::CheckpointError);
}
