#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "cseg/augment.hpp"
#include "unit/oracles.hpp"

using namespace cseg;

namespace {

NetworkConfig small_net() {
  NetworkConfig c;
  c.levels = 2;
  c.base_channels = 4;
  c.num_classes = 3;
  c.input_tile = {44, 44, 44};
  return c;
}

Volume3 random_volume(const Dims3& d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-100.f, 100.f);
  Volume3 v(d);
  for (auto& x : v.data()) x = u(rng);
  return v;
}

LabelVolume random_labels(const Dims3& d, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LabelVolume l(d);
  for (auto& x : l.data()) x = static_cast<Label>(rng() % k);
  return l;
}

double ramp(double x, double y, double z) { return 2.0 * x - 0.5 * y + 1.5 * z + 10.0; }

Volume3 ramp_volume(const Dims3& d) {
  Volume3 v(d);
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) v(x, y, z) = static_cast<float>(ramp(x, y, z));
  return v;
}

}  // namespace

TEST_SUITE("augment") {
  TEST_CASE("zero displacement gives the identity field") {
    AugmentConfig cfg;
    cfg.max_disp = 0;
    Rng rng(1);
    const auto f = sample_deformation(rng, cfg, {64, 64, 64});
    CHECK(f.max_abs_component() == 0.0);
    const auto d = f.at(10.5, 3.2, 40.0);
    CHECK(d == Vec3{0, 0, 0});
  }

  TEST_CASE("deformation sampling is seeded") {
    AugmentConfig cfg;
    Rng a(5), b(5), c(6);
    const auto fa = sample_deformation(a, cfg, {64, 64, 64});
    CHECK(fa.displacement == sample_deformation(b, cfg, {64, 64, 64}).displacement);
    CHECK(fa.displacement != sample_deformation(c, cfg, {64, 64, 64}).displacement);
    CHECK(stream_rng(3, 7)() == stream_rng(3, 7)());
    CHECK(stream_rng(3, 7)() != stream_rng(3, 8)());
  }

  TEST_CASE("uniform displacement statistics") {
    AugmentConfig cfg;
    Rng rng(11);
    std::vector<double> v;
    while (v.size() < 10000) {
      const auto f = sample_deformation(rng, cfg, {132, 132, 116});
      for (const auto& d : f.displacement)
        for (double c : d) v.push_back(c);
    }
    double lo = 1e9, hi = -1e9, mean = 0;
    for (double c : v) {
      lo = std::min(lo, c);
      hi = std::max(hi, c);
      mean += c;
    }
    mean /= static_cast<double>(v.size());
    CHECK(lo >= -4.0);
    CHECK(hi <= 4.0);
    CHECK(std::abs(mean) < 0.15);
    // Uniform on [-4, 4] has variance 16/3.
    double var = 0;
    for (double c : v) var += (c - mean) * (c - mean);
    var /= static_cast<double>(v.size() - 1);
    CHECK(std::abs(var - 16.0 / 3.0) < 0.3);
  }

  TEST_CASE("control grid size follows the spacing") {
    AugmentConfig cfg;
    Rng rng(2);
    const auto f = sample_deformation(rng, cfg, {132, 132, 116});
    CHECK(f.nodes == Dims3{6, 6, 5});
    CHECK(f.displacement.size() == 180u);
    const auto g = sample_deformation(rng, cfg, {10, 10, 10});
    CHECK(g.nodes == Dims3{2, 2, 2});
  }

  TEST_CASE("field interpolates node values exactly at nodes") {
    AugmentConfig cfg;
    cfg.grid_spacing = 8;
    Rng rng(3);
    const auto f = sample_deformation(rng, cfg, {33, 33, 33});
    for (int k = 0; k < f.nodes[2]; ++k)
      for (int j = 0; j < f.nodes[1]; ++j)
        for (int i = 0; i < f.nodes[0]; ++i) {
          const auto d = f.at(8.0 * i, 8.0 * j, 8.0 * k);
          const auto& n = f.displacement[i + f.nodes[0] * (j + f.nodes[1] * k)];
          for (int a = 0; a < 3; ++a) CHECK(d[a] == doctest::Approx(n[a]).epsilon(1e-12));
        }
    const auto mid = f.at(4.0, 0.0, 0.0);
    const auto& n0 = f.displacement[0];
    const auto& n1 = f.displacement[1];
    for (int a = 0; a < 3; ++a) CHECK(mid[a] == doctest::Approx(0.5 * (n0[a] + n1[a])));
  }

  TEST_CASE("rigid samples stay in range") {
    AugmentConfig cfg;
    Rng rng(4);
    double amin = 1e9, amax = -1e9;
    for (int i = 0; i < 5000; ++i) {
      const auto r = sample_rigid(rng, cfg);
      amin = std::min(amin, r.angle_deg);
      amax = std::max(amax, r.angle_deg);
      CHECK(std::abs(r.angle_deg) <= 5.0);
      for (double t : r.translation) CHECK(std::abs(t) <= 20.0);
    }
    CHECK(amin < -4.5);
    CHECK(amax > 4.5);

    cfg.rotation_deg = 0;
    cfg.translation = 0;
    const auto id = sample_rigid(rng, cfg);
    CHECK(id.angle_deg == 0.0);
    CHECK(id.translation == Vec3{0, 0, 0});
  }

  TEST_CASE("identity transform leaves image and labels unchanged") {
    const Dims3 d{20, 18, 16};
    const auto vol = random_volume(d, 1);
    const auto lab = random_labels(d, 4, 2);
    const auto [v, l] = apply_transform(vol, lab, identity_field(d, 32), RigidTransform{});
    CHECK(v.data() == vol.data());
    CHECK(l.data() == lab.data());
  }

  TEST_CASE("integer translation shifts content exactly") {
    const Dims3 d{20, 18, 16};
    const auto vol = random_volume(d, 3);
    const auto lab = random_labels(d, 4, 4);
    RigidTransform r;
    r.translation = {3, 0, 0};
    const auto [v, l] = apply_transform(vol, lab, identity_field(d, 32), r);
    for (int z = 0; z < d[2]; ++z)
      for (int y = 0; y < d[1]; ++y)
        for (int x = 0; x < d[0]; ++x) {
          if (x >= 3) {
            CHECK(v(x, y, z) == vol(x - 3, y, z));
            CHECK(l(x, y, z) == lab(x - 3, y, z));
          } else {
            CHECK(v(x, y, z) == vol(0, y, z));
            CHECK(l(x, y, z) == 0);
          }
        }
  }

  TEST_CASE("warping a ramp matches the analytic ramp and unwarps") {
    const Dims3 d{48, 48, 40};
    const auto vol = ramp_volume(d);
    const LabelVolume lab(d);
    AugmentConfig cfg;
    cfg.grid_spacing = 16;
    Rng rng(9);
    const auto field = sample_deformation(rng, cfg, d);
    const auto rigid = sample_rigid(rng, cfg);
    RigidTransform rot = rigid;
    rot.translation = {2.0, -1.0, 0.5};
    const Vec3 c{(d[0] - 1) / 2.0, (d[1] - 1) / 2.0, (d[2] - 1) / 2.0};

    const auto warped = apply_transform(vol, lab, field, rot).first;
    for (int z = 12; z < d[2] - 12; ++z)
      for (int y = 12; y < d[1] - 12; ++y)
        for (int x = 12; x < d[0] - 12; ++x) {
          const Vec3 q = source_coordinate({double(x), double(y), double(z)}, field.at(x, y, z), rot, c);
          const double want = ramp(q[0], q[1], q[2]);
          CHECK(std::abs(warped(x, y, z) - want) <= 0.05 * std::abs(want) + 1e-3);
        }

    // The inverse rigid motion of q = R(p - c) + c - t is R^-1 (q + t - c) + c.
    const double th = rot.angle_deg * std::numbers::pi / 180.0;
    RigidTransform inv;
    inv.angle_deg = -rot.angle_deg;
    const double tx = rot.translation[0], ty = rot.translation[1];
    inv.translation = {-(std::cos(th) * tx + std::sin(th) * ty), -(-std::sin(th) * tx + std::cos(th) * ty),
                       -rot.translation[2]};
    const auto rigid_only = apply_transform(vol, lab, identity_field(d, 16), rot).first;
    const auto back = apply_transform(rigid_only, lab, identity_field(d, 16), inv).first;
    for (int z = 12; z < d[2] - 12; ++z)
      for (int y = 12; y < d[1] - 12; ++y)
        for (int x = 12; x < d[0] - 12; ++x) {
          const double want = vol(x, y, z);
          CHECK(std::abs(back(x, y, z) - want) <= 0.05 * std::abs(want) + 1e-3);
        }
  }

  TEST_CASE("labels only take source values") {
    const Dims3 d{32, 32, 32};
    const auto vol = random_volume(d, 5);
    LabelVolume lab(d);
    for (auto& v : lab.data()) v = 0;
    for (int z = 8; z < 20; ++z)
      for (int y = 8; y < 20; ++y)
        for (int x = 8; x < 20; ++x) lab(x, y, z) = (x + y) % 2 ? 3 : 5;
    Rng rng(6);
    for (int i = 0; i < 5; ++i) {
      AugmentConfig cfg;
      const auto [v, l] = apply_transform(vol, lab, sample_deformation(rng, cfg, d), sample_rigid(rng, cfg));
      for (Label x : l.data()) CHECK((x == 0 || x == 3 || x == 5));
    }
  }

  TEST_CASE("shape mismatch is rejected") {
    CHECK_THROWS_AS(apply_transform(Volume3({4, 4, 4}), LabelVolume({4, 4, 5}), identity_field({4, 4, 4}, 32),
                                    RigidTransform{}),
                    ShapeError);
  }

  TEST_CASE("single-voxel candidate centres every tile") {
    const Dims3 d{64, 64, 64};
    const auto vol = random_volume(d, 7);
    const auto lab = random_labels(d, 3, 8);
    BinaryMask cand(d);
    cand(40, 21, 33) = 1;
    const auto net = small_net();
    const Dims3 out = output_shape(net);
    Rng rng(10);
    for (bool aug : {false, true}) {
      AugmentConfig cfg;
      cfg.enabled = aug;
      for (int i = 0; i < 20; ++i) {
        const auto s = sample_subvolume(vol, lab, cand, net, rng, cfg);
        CHECK(s.centre == Dims3{40, 21, 33});
        for (int a = 0; a < 3; ++a) CHECK(s.output_origin[a] + out[a] / 2 == s.centre[a]);
        CHECK(s.input.dims() == net.input_tile);
        CHECK(s.labels.dims() == out);
        CHECK(s.mask.dims() == out);
      }
    }
  }

  TEST_CASE("empty candidate is rejected") {
    const Dims3 d{48, 48, 48};
    Rng rng(1);
    CHECK_THROWS_AS(sample_subvolume(Volume3(d), LabelVolume(d), BinaryMask(d), small_net(), rng, AugmentConfig{}),
                    EmptyRegion);
  }

  TEST_CASE("interior candidates are hit uniformly") {
    const Dims3 d{64, 64, 64};
    const Volume3 vol(d);
    const LabelVolume lab(d);
    BinaryMask cand(d);
    for (int z = 30; z < 33; ++z)
      for (int y = 30; y < 33; ++y)
        for (int x = 30; x < 33; ++x) cand(x, y, z) = 1;
    AugmentConfig cfg;
    cfg.enabled = false;
    Rng rng(12);
    std::map<std::size_t, int> hits;
    const int draws = 1000;
    for (int i = 0; i < draws; ++i) {
      const auto s = sample_subvolume(vol, lab, cand, small_net(), rng, cfg);
      ++hits[cand.index(s.centre[0], s.centre[1], s.centre[2])];
    }
    CHECK(hits.size() == 27u);
    const double p = 1.0 / 27, mean = draws * p, sigma = std::sqrt(draws * p * (1 - p));
    for (const auto& [idx, n] : hits) CHECK(std::abs(n - mean) <= 3 * sigma);
  }

  TEST_CASE("disabled augmentation is a plain crop") {
    const Dims3 d{64, 60, 56};
    const auto vol = random_volume(d, 13);
    const auto lab = random_labels(d, 3, 14);
    const auto cand = oracle::random_mask(d, 0.3, 15);
    AugmentConfig cfg;
    cfg.enabled = false;
    Rng rng(16);
    const auto net = small_net();
    const Dims3 out = output_shape(net);
    for (int i = 0; i < 10; ++i) {
      const auto s = sample_subvolume(vol, lab, cand, net, rng, cfg);
      for (int z = 0; z < out[2]; ++z)
        for (int y = 0; y < out[1]; ++y)
          for (int x = 0; x < out[0]; ++x) {
            const int gx = s.output_origin[0] + x, gy = s.output_origin[1] + y, gz = s.output_origin[2] + z;
            const bool inside = vol.contains(gx, gy, gz);
            CHECK(s.labels(x, y, z) == (inside ? lab(gx, gy, gz) : 0));
            CHECK(s.mask(x, y, z) == (inside ? cand(gx, gy, gz) : 0));
            // Input tile: centre-aligned with the output region, reflected at borders.
            const int m = (net.input_tile[0] - out[0]) / 2;
            CHECK(s.input(x + m, y + m, z + m) ==
                  vol(reflect_index(gx, d[0]), reflect_index(gy, d[1]), reflect_index(gz, d[2])));
          }
    }
  }

  TEST_CASE("sampling is a function of seed and index") {
    const Dims3 d{56, 56, 56};
    const auto vol = random_volume(d, 17);
    const auto lab = random_labels(d, 3, 18);
    const auto cand = oracle::random_mask(d, 0.1, 19);
    for (std::uint64_t it : {0u, 5u, 99u}) {
      Rng a = stream_rng(42, it), b = stream_rng(42, it);
      const auto sa = sample_subvolume(vol, lab, cand, small_net(), a, AugmentConfig{});
      const auto sb = sample_subvolume(vol, lab, cand, small_net(), b, AugmentConfig{});
      CHECK(sa.input.data() == sb.input.data());
      CHECK(sa.labels.data() == sb.labels.data());
      CHECK(sa.mask.data() == sb.mask.data());
    }
  }
}
