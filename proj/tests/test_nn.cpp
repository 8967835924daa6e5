#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "core/distill.hpp"
#include "core/nn.hpp"

using namespace lab;

TEST_CASE("grl schedule") {
  CHECK(grl_schedule(0, 5) == 0.0);
  CHECK(grl_schedule(1, 5) == doctest::Approx(0.98661).epsilon(1e-5));
  CHECK(grl_schedule(real(0.5), 5) == doctest::Approx(0.84829).epsilon(1e-5));
  // monotone in p, bounded by the endpoint value
  real prev = -1;
  for (int i = 0; i <= 20; ++i) {
    real v = grl_schedule(real(i) / 20, 5);
    CHECK(v >= prev);
    CHECK(v <= grl_schedule(1, 5));
    prev = v;
  }
  CHECK_THROWS_AS(grl_schedule(real(-0.1), 5), ConfigError);
  CHECK_THROWS_AS(grl_schedule(real(1.1), 5), ConfigError);
}

TEST_CASE("grl apply: forward identity, reversed scaled gradient") {
  Tensor x = Tensor::from({2}, {2, -4}, true);
  SUBCASE("forward is bit-equal identity") {
    Grl grl;
    grl.lambda = real(0.7);
    Tensor y = grl_apply(x, grl);
    CHECK(y.value() == x.value());
  }
  SUBCASE("lambda 0 passes zero gradient") {
    Tensor y = grl_op(x, 0);
    backward(sum_all(y));
    CHECK(x.grad() == std::vector<real>{0, 0});
  }
  SUBCASE("lambda 1 flips the sign") {
    Tensor y = grl_op(x, 1);
    backward(sum_all(y));
    CHECK(x.grad() == std::vector<real>{-1, -1});
  }
  SUBCASE("lambda 0.5 with downstream grad [2,-4] gives [-1,2]") {
    Tensor y = grl_op(x, real(0.5));
    Tensor w = Tensor::from({2}, {2, -4});
    backward(sum_all(mul(y, w)));
    CHECK(x.grad()[0] == doctest::Approx(-1.0));
    CHECK(x.grad()[1] == doctest::Approx(2.0));
  }
}

TEST_CASE("mobilevit block") {
  SUBCASE("zero input and zero weights give zero output") {
    Rng rng(1);
    MobileViTBlock blk({4, 2, 8, 2, AttentionVariant::Dense}, rng, "blk");
    std::vector<Tensor> ps;
    blk.params(ps);
    fill_params(ps, 0);
    Tensor x = Tensor::zeros({2, 4, 8, 8});
    auto out = blk.forward(x, true);
    for (real v : out.map.value()) CHECK(v == 0.0);
  }
  SUBCASE("token count for 20x20 map with patch 2 is 100 and shapes round-trip") {
    Rng rng(2);
    MobileViTBlockCfg cfg{2, 2, 8, 2, AttentionVariant::Dense};
    CHECK(cfg.tokens(20, 20) == 100);
    MobileViTBlock blk(cfg, rng, "blk");
    Tensor x = Tensor::rand_uniform({1, 2, 20, 20}, rng, 0, 1);
    auto out = blk.forward(x, true);
    CHECK(out.map.shape() == Shape{1, 2, 20, 20});
    CHECK(out.tokens_in.shape() == Shape{1, 100, 8});
    CHECK(out.attn.shape() == Shape{1, 2, 100, 100});
  }
  SUBCASE("sparse mask with k=N matches the dense block on 20 random configs") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      Rng rng(seed);
      int heads = 1 + static_cast<int>(rng.below(2));
      int dim = heads * (4 + static_cast<int>(rng.below(3)));
      int c = 2 + static_cast<int>(rng.below(3));
      MobileViTBlock blk({c, 2, dim, heads, AttentionVariant::Sparse}, rng, "blk");
      Tensor x = Tensor::rand_uniform({2, c, 8, 8}, rng, -1, 1);
      auto dense = blk.forward(x, false);
      int n = 16;
      auto full = std::make_shared<Mask>(static_cast<size_t>(2 * heads * n * n), 1);
      auto sparse = blk.forward(x, false, full);
      for (size_t i = 0; i < dense.map.value().size(); ++i)
        CHECK(std::fabs(dense.map.value()[i] - sparse.map.value()[i]) <= 1e-10);
    }
  }
  SUBCASE("invalid patch divisibility is a config error") {
    Rng rng(3);
    MobileViTBlock blk({2, 3, 6, 2, AttentionVariant::Dense}, rng, "blk");
    Tensor x = Tensor::zeros({1, 2, 8, 8});  // 8 % 3 != 0
    CHECK_THROWS_AS(blk.forward(x, true), ConfigError);
  }
}

TEST_CASE("patch discriminator") {
  SUBCASE("zero weights give 0.5 everywhere") {
    Rng rng(4);
    PatchDiscriminator d(1, 4, rng, "d");
    std::vector<Tensor> ps;
    d.params(ps);
    fill_params(ps, 0);
    Tensor x = Tensor::rand_uniform({2, 1, 32, 32}, rng, 0, 1);
    Tensor out = d.forward(x);
    for (real v : out.value()) CHECK(v == doctest::Approx(0.5));
  }
  SUBCASE("three stride-2 stages map 32x32 to a 4x4 grid") {
    Rng rng(5);
    PatchDiscriminator d(1, 4, rng, "d");
    Tensor x = Tensor::rand_uniform({3, 1, 32, 32}, rng, 0, 1);
    CHECK(d.forward(x).shape() == Shape{3, 1, 4, 4});
  }
  SUBCASE("deterministic across identical seeds") {
    auto run = [&]() {
      Rng rng(6);
      PatchDiscriminator d(1, 4, rng, "d");
      Tensor x = Tensor::rand_uniform({1, 1, 16, 16}, rng, 0, 1);
      return d.forward(x).value();
    };
    CHECK(run() == run());
  }
}

TEST_CASE("mafe sharing: one object, one parameter set") {
  Rng rng(7);
  Mafe mafe(1, 4, 1, rng, "mafe");
  std::vector<Tensor> a, b;
  mafe.params(a);
  mafe.params(b);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].node() == b[i].node());

  // a gradient step through one consumer changes the encoding every other
  // consumer sees (same object, not a copy)
  Tensor x = Tensor::rand_uniform({1, 1, 8, 8}, rng, 0, 1);
  auto before = mafe.forward(x, false).value();
  zero_grads(a);
  backward(mean_all(mafe.forward(x, true)));
  Adam opt({real(0.05)});
  opt.step(a);
  auto after = mafe.forward(x, false).value();
  CHECK(before != after);
}

TEST_CASE("domain classifier routes gradients through the grl") {
  Rng rng(8);
  DomainClassifier cls(4, rng, "cls");
  Tensor feat = Tensor::rand_uniform({2, 4, 3, 3}, rng, -1, 1, true);

  // opposite gradient signs on the features for +lambda vs the plain path
  Tensor p1 = cls.forward(feat, real(1));
  feat.zero_grad();
  backward(mean_all(p1));
  auto g_rev = feat.grad();
  Tensor p0 = cls.forward(feat, real(-1));  // -(-1) = +1: the unreversed direction
  feat.zero_grad();
  backward(mean_all(p0));
  auto g_fwd = feat.grad();
  for (size_t i = 0; i < g_rev.size(); ++i) CHECK(g_rev[i] == doctest::Approx(-g_fwd[i]));
}
