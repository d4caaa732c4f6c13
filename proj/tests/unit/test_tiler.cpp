#include <doctest.h>

#include <algorithm>

#include "cseg/loss.hpp"
#include "cseg/phantom.hpp"
#include "cseg/tiler.hpp"
#include "unit/oracles.hpp"

using namespace cseg;

namespace {

NetworkConfig small_net(int k = 3) {
  NetworkConfig c;
  c.levels = 2;
  c.base_channels = 4;
  c.num_classes = k;
  c.input_tile = {44, 44, 44};
  return c;
}

Volume3 random_volume(const Dims3& d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.f, 1.f);
  Volume3 v(d);
  for (auto& x : v.data()) x = u(rng);
  return v;
}

/// Coverage of one axis from the stride/extent description, by enumeration.
std::vector<int> axis_coverage(int n, int out, int stride) {
  std::vector<int> c(n, 0);
  for (int o = 0;; o += stride) {
    for (int i = o; i < std::min(n, o + out); ++i) ++c[i];
    if (o + out >= n) break;
  }
  return c;
}

double sum_at(const Prediction& p, std::size_t i) {
  double s = 0;
  for (const auto& f : p.probabilities) s += f[i];
  return s;
}

}  // namespace

TEST_SUITE("tiler") {
  TEST_CASE("overlap mode names") {
    CHECK(parse_overlap_mode("none") == OverlapMode::None);
    CHECK(parse_overlap_mode("xy_half") == OverlapMode::XyHalf);
    CHECK(to_string(OverlapMode::XyHalf) == "xy_half");
    CHECK_THROWS_AS(parse_overlap_mode("half"), InvalidMode);
  }

  TEST_CASE("reference tile grid") {
    const NetworkConfig ref;
    const Dims3 d{88, 88, 56};
    const auto none = plan_tiles(d, ref, OverlapMode::None);
    CHECK(none.origins.size() == 8u);
    CHECK(none.output_tile == Dims3{44, 44, 28});
    for (int c : coverage_counts(none)) CHECK(c == 1);

    const auto half = plan_tiles(d, ref, OverlapMode::XyHalf);
    CHECK(half.origins.size() == 18u);
    const auto cx = axis_coverage(88, 44, 22), cz = axis_coverage(56, 28, 28);
    const auto cov = coverage_counts(half);
    for (int z = 0; z < 56; ++z)
      for (int y = 0; y < 88; ++y)
        for (int x = 0; x < 88; ++x) CHECK(cov[x + 88 * (y + 88 * z)] == cx[x] * cx[y] * cz[z]);
    CHECK(cov[44 + 88 * 44] == 4);
    CHECK(cov[44] == 2);
    CHECK(cov[0] == 1);
  }

  TEST_CASE("ragged volumes are still covered") {
    const NetworkConfig ref;
    for (const Dims3 d : {Dims3{90, 50, 30}, Dims3{43, 45, 29}, Dims3{10, 10, 10}}) {
      for (OverlapMode m : {OverlapMode::None, OverlapMode::XyHalf}) {
        const auto plan = plan_tiles(d, ref, m);
        for (int c : coverage_counts(plan)) CHECK(c >= 1);
        if (m == OverlapMode::None)
          for (int c : coverage_counts(plan)) CHECK(c == 1);
      }
    }
  }

  TEST_CASE("restriction drops tiles away from the mask") {
    const NetworkConfig ref;
    const Dims3 d{88, 88, 56};
    BinaryMask corner(d);
    corner(0, 0, 0) = 1;
    const auto none = plan_tiles(d, ref, OverlapMode::None, &corner);
    REQUIRE(none.origins.size() == 1u);
    CHECK(none.origins[0] == Dims3{0, 0, 0});
    CHECK(plan_tiles(d, ref, OverlapMode::XyHalf, &corner).origins.size() == 1u);

    BinaryMask centre(d);
    centre(44, 44, 10) = 1;
    CHECK(plan_tiles(d, ref, OverlapMode::XyHalf, &centre).origins.size() == 4u);
    const BinaryMask empty(d);
    CHECK(plan_tiles(d, ref, OverlapMode::None, &empty).origins.empty());
  }

  TEST_CASE("fusion averages overlapping estimates") {
    FusionAccumulator acc({1, 1, 1}, {1, 1, 1}, 2);
    Tensor5<float> a({1, 2, 1, 1, 1}), b({1, 2, 1, 1, 1});
    a.values = {0.8f, 0.2f};
    b.values = {0.4f, 0.6f};
    acc.add({0, 0, 0}, a);
    acc.add({0, 0, 0}, b);
    CHECK(acc.coverage(0, 0, 0) == 2);
    const auto p = acc.finalize();
    CHECK(p.probabilities[1][0] == doctest::Approx(0.4).epsilon(1e-7));
    CHECK(p.probabilities[0][0] == doctest::Approx(0.6).epsilon(1e-7));
    CHECK(p.labels[0] == 0);
  }

  TEST_CASE("fusion ties go to the lower class and outside voxels are background") {
    FusionAccumulator acc({2, 1, 1}, {1, 1, 1}, 3);
    Tensor5<float> t({1, 3, 1, 1, 2});
    t.values = {0.1f, 0.2f, 0.45f, 0.4f, 0.45f, 0.4f};
    acc.add({0, 0, 0}, t);
    BinaryMask only_first({2, 1, 1});
    only_first[0] = 1;
    const auto p = acc.finalize(&only_first);
    CHECK(p.labels[0] == 1);
    CHECK(p.labels[1] == 0);
    CHECK(p.probabilities[0][1] == 1.f);
    CHECK(p.probabilities[1][1] == 0.f);

    FusionAccumulator gap({3, 1, 1}, {1, 1, 1}, 2);
    CHECK_THROWS_AS(gap.finalize(), ShapeError);
  }

  TEST_CASE("non-overlapping prediction reproduces each tile's softmax") {
    const auto cfg = small_net();
    const UNet net = UNet::build(cfg, 1);
    const Dims3 d{56, 56, 28};
    const auto vol = random_volume(d, 2);
    const auto plan = plan_tiles(d, cfg, OverlapMode::None);
    CHECK(plan.origins.size() == 4u);
    const auto pred = predict_volume(net, vol, plan);
    const Dims3 out = output_shape(cfg);
    for (const Dims3& o : plan.origins) {
      const auto probs = softmax(net.forward(extract_tile(vol, o, cfg)));
      for (int k = 0; k < 3; ++k)
        for (int z = 0; z < out[2]; ++z)
          for (int y = 0; y < out[1]; ++y)
            for (int x = 0; x < out[0]; ++x)
              if (vol.contains(o[0] + x, o[1] + y, o[2] + z))
                CHECK(pred.probabilities[k](o[0] + x, o[1] + y, o[2] + z) == probs.at(0, k, z, y, x));
    }
  }

  TEST_CASE("fused probabilities sum to one and ignore tile order") {
    const auto cfg = small_net(4);
    const UNet net = UNet::build(cfg, 3);
    const Dims3 d{60, 50, 36};
    const auto vol = random_volume(d, 4);
    const auto plan = plan_tiles(d, cfg, OverlapMode::XyHalf);
    const auto pred = predict_volume(net, vol, plan);
    for (std::size_t i = 0; i < vol.size(); ++i) CHECK(std::abs(sum_at(pred, i) - 1.0) < 1e-5);

    std::vector<Dims3> order = plan.origins;
    std::mt19937_64 rng(5);
    std::shuffle(order.begin(), order.end(), rng);
    FusionAccumulator acc(d, vol.spacing(), 4);
    for (const Dims3& o : order) acc.add(o, softmax(net.forward(extract_tile(vol, o, cfg))));
    const auto shuffled = acc.finalize();
    for (int k = 0; k < 4; ++k)
      for (std::size_t i = 0; i < vol.size(); ++i)
        CHECK(std::abs(shuffled.probabilities[k][i] - pred.probabilities[k][i]) < 1e-6);
  }

  TEST_CASE("overlap only adds information when the half stride breaks the pooling grid") {
    // One pooling step: shifts by a multiple of 2 reproduce the same outputs exactly.
    const Dims3 d{60, 50, 36};
    const auto vol = random_volume(d, 6);
    auto max_mode_gap = [&](int tile) {
      NetworkConfig cfg = small_net(3);
      cfg.input_tile = {tile, tile, tile};
      const UNet net = UNet::build(cfg, 7);
      const auto a = predict_volume(net, vol, plan_tiles(d, cfg, OverlapMode::None));
      const auto b = predict_volume(net, vol, plan_tiles(d, cfg, OverlapMode::XyHalf));
      double gap = 0;
      for (int k = 0; k < 3; ++k)
        for (std::size_t i = 0; i < vol.size(); ++i)
          gap = std::max(gap, double(std::abs(a.probabilities[k][i] - b.probabilities[k][i])));
      return gap;
    };
    CHECK(output_shape(small_net()) == Dims3{28, 28, 28});
    CHECK(max_mode_gap(44) < 1e-5);
    CHECK(max_mode_gap(42) > 1e-3);
  }

  TEST_CASE("restricted prediction leaves outside voxels as background") {
    const auto cfg = small_net();
    const UNet net = UNet::build(cfg, 6);
    const Dims3 d{40, 40, 30};
    const auto vol = random_volume(d, 7);
    const auto region = oracle::dilate(oracle::random_mask(d, 0.0005, 8), 4);
    const auto pred = predict_volume(net, vol, plan_tiles(d, cfg, OverlapMode::XyHalf, &region), &region);
    for (std::size_t i = 0; i < vol.size(); ++i) {
      CHECK(std::abs(sum_at(pred, i) - 1.0) < 1e-5);
      if (!region[i]) {
        CHECK(pred.labels[i] == 0);
        CHECK(pred.probabilities[0][i] == 1.f);
      }
    }
  }

  TEST_CASE("geometry mismatches are rejected") {
    const auto cfg = small_net();
    const UNet net = UNet::build(cfg, 1);
    const auto plan = plan_tiles({40, 40, 40}, cfg, OverlapMode::None);
    CHECK_THROWS_AS(predict_volume(net, Volume3({40, 40, 41}), plan), ShapeError);
  }

  TEST_CASE("two-stage with one network twice reproduces the first stage") {
    PhantomSpec spec;
    spec.dims = {64, 64, 64};
    spec.seed = 9;
    const auto ph = generate(spec);
    const auto cfg = small_net(num_classes(spec));
    const UNet net = UNet::build(cfg, 10);
    TwoStageConfig tc;
    tc.cascade.dilation_radius = 64;
    tc.stage2_mode = OverlapMode::None;
    const auto r = two_stage_predict(net, net, ph.ct, tc);
    REQUIRE(r.warnings.empty());
    CHECK(r.labels.dims() == ph.ct.dims());
    CHECK(r.candidate.voxel_fraction > 0.0);
    for (std::size_t i = 0; i < r.body.mask.size(); ++i) {
      if (!r.body.mask[i]) continue;
      REQUIRE(r.candidate.mask[i] == 1);
      CHECK(r.stage2.labels[i] == r.stage1.labels[i]);
    }
  }

  TEST_CASE("empty first-stage foreground yields background and a warning") {
    PhantomSpec spec;
    spec.dims = {64, 64, 64};
    const auto ph = generate(spec);
    UNet net = UNet::build(small_net(num_classes(spec)), 11);
    auto& bias = net.parameter("head.bias").value.values;
    std::fill(bias.begin(), bias.end(), 0.f);
    bias[0] = 1e4f;
    const auto r = two_stage_predict(net, net, ph.ct, TwoStageConfig{});
    CHECK(r.warnings.size() == 1u);
    CHECK(r.candidate.voxel_fraction == 0.0);
    for (Label l : r.labels.data()) CHECK(l == 0);
  }

  TEST_CASE("stage networks must agree on classes") {
    PhantomSpec spec;
    const auto ph = generate(spec);
    CHECK_THROWS_AS(
        two_stage_predict(UNet::build(small_net(3), 1), UNet::build(small_net(4), 1), ph.ct, TwoStageConfig{}),
        ShapeError);
  }
}
