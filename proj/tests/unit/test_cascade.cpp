#include <doctest.h>

#include <sstream>

#include "cseg/cascade.hpp"
#include "unit/oracles.hpp"

using namespace cseg;

namespace {

bool inside_ellipsoid(int x, int y, int z, const Dims3& c, const Dims3& r) {
  const double a = double(x - c[0]) / r[0], b = double(y - c[1]) / r[1], e = double(z - c[2]) / r[2];
  return a * a + b * b + e * e <= 1.0;
}

Volume3 ellipsoid_ct(const Dims3& d, const Dims3& c, const Dims3& r, float inside, float outside) {
  Volume3 v(d, {1, 1, 1}, outside);
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x)
        if (inside_ellipsoid(x, y, z, c, r)) v(x, y, z) = inside;
  return v;
}

LabelVolume random_blobs(const Dims3& d, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LabelVolume l(d);
  for (int b = 0; b < 6; ++b) {
    const int cx = rng() % d[0], cy = rng() % d[1], cz = rng() % d[2], r = 2 + rng() % 4;
    const Label lab = static_cast<Label>(1 + rng() % (k - 1));
    for (int z = 0; z < d[2]; ++z)
      for (int y = 0; y < d[1]; ++y)
        for (int x = 0; x < d[0]; ++x)
          if ((x - cx) * (x - cx) + (y - cy) * (y - cy) + (z - cz) * (z - cz) <= r * r) l(x, y, z) = lab;
  }
  return l;
}

/// Perturbs a label map: flips a fraction of voxels to random classes.
LabelVolume noisy(const LabelVolume& gt, int k, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution flip(p);
  LabelVolume out = gt;
  for (auto& v : out.data())
    if (flip(rng)) v = static_cast<Label>(rng() % k);
  return out;
}

}  // namespace

TEST_SUITE("cascade") {
  TEST_CASE("body mask of an ellipsoid in air is the ellipsoid") {
    const Dims3 d{40, 36, 30}, c{20, 18, 15}, r{15, 12, 10};
    const auto ct = ellipsoid_ct(d, c, r, 0.f, -1000.f);
    const auto body = body_mask(ct, CascadeConfig{});
    std::size_t n = 0;
    for (int z = 0; z < d[2]; ++z)
      for (int y = 0; y < d[1]; ++y)
        for (int x = 0; x < d[0]; ++x) {
          CHECK(body.mask(x, y, z) == (inside_ellipsoid(x, y, z, c, r) ? 1 : 0));
          n += inside_ellipsoid(x, y, z, c, r);
        }
    CHECK(body.voxel_fraction == doctest::Approx(double(n) / voxel_count(d)));
  }

  TEST_CASE("air-only volume has no body") {
    CHECK_THROWS_AS(body_mask(Volume3({10, 10, 10}, {1, 1, 1}, -1000.f), CascadeConfig{}), NoForeground);
  }

  TEST_CASE("internal cavity is filled and stray specks are dropped") {
    const Dims3 d{40, 40, 40}, c{20, 20, 20};
    auto ct = ellipsoid_ct(d, c, {14, 14, 14}, 40.f, -1000.f);
    for (int z = 16; z < 24; ++z)
      for (int y = 16; y < 24; ++y)
        for (int x = 16; x < 24; ++x) ct(x, y, z) = -1000.f;
    ct(1, 1, 1) = 100.f;
    const auto body = body_mask(ct, CascadeConfig{});
    CHECK(body.mask(20, 20, 20) == 1);
    CHECK(body.mask(1, 1, 1) == 0);
    CHECK(body.mask(0, 0, 0) == 0);
  }

  TEST_CASE("body mask is idempotent on its own output") {
    const Dims3 d{36, 36, 36};
    auto ct = ellipsoid_ct(d, {18, 18, 18}, {12, 10, 9}, 40.f, -1000.f);
    ct(18, 18, 18) = -1000.f;
    const auto once = body_mask(ct, CascadeConfig{});
    Volume3 as_hu(d);
    for (std::size_t i = 0; i < as_hu.size(); ++i) as_hu[i] = once.mask[i];
    CascadeConfig half;
    half.body_threshold = 0.5f;
    CHECK(body_mask(as_hu, half).mask == once.mask);
  }

  TEST_CASE("candidate from prediction") {
    const Dims3 d{15, 15, 15};
    const auto pred = random_blobs(d, 4, 1);
    const auto r0 = candidate_from_prediction(pred, 0);
    for (std::size_t i = 0; i < pred.size(); ++i) CHECK(r0.mask[i] == (pred[i] > 0 ? 1 : 0));

    LabelVolume one(d);
    one(7, 7, 7) = 2;
    const auto ball = candidate_from_prediction(one, 3);
    CHECK(count_true(ball.mask) == 123u);
    BinaryMask seed(d);
    seed(7, 7, 7) = 1;
    CHECK(ball.mask == oracle::dilate(seed, 3));

    const auto none = candidate_from_prediction(LabelVolume(d), 3);
    CHECK(count_true(none.mask) == 0u);
    CHECK(none.voxel_fraction == 0.0);
    CHECK_THROWS_AS(candidate_from_prediction(pred, -1), GeometryError);
  }

  TEST_CASE("minimum foreground label excludes lower labels") {
    const Dims3 d{12, 12, 12};
    LabelVolume pred(d);
    pred(3, 3, 3) = 1;
    pred(8, 8, 8) = 2;
    const auto c = candidate_from_prediction(pred, 0, 2);
    CHECK(c.mask(3, 3, 3) == 0);
    CHECK(c.mask(8, 8, 8) == 1);
    CHECK(count_true(c.mask) == 1u);
  }

  TEST_CASE("recall and false-positive rate") {
    const Dims3 d{10, 10, 10};
    const auto gt = random_blobs(d, 3, 2);
    for (Label k : {Label{1}, Label{2}}) {
      if (count_true(labels_equal(gt, k)) == 0) continue;
      const auto exact = recall_fpr(labels_equal(gt, k), gt, k);
      CHECK(exact.recall == 1.0);
      CHECK(exact.fpr == 0.0);
      const auto all = recall_fpr(BinaryMask(d, {1, 1, 1}, 1), gt, k);
      CHECK(all.recall == 1.0);
      CHECK(all.fpr == 1.0);
      const auto super = recall_fpr(dilate_ball(labels_equal(gt, k), 1), gt, k);
      CHECK(super.recall == 1.0);
    }
    CHECK_THROWS_AS(recall_fpr(BinaryMask(d), LabelVolume(d), 1), ClassAbsent);
  }

  TEST_CASE("radius curve is monotone in r") {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const Dims3 d{24, 24, 20};
      const auto gt = random_blobs(d, 4, 10 + s);
      const auto pred = noisy(gt, 4, 0.05, 20 + s);
      std::vector<Label> classes;
      for (Label k = 1; k < 4; ++k)
        if (count_true(labels_equal(gt, k)) > 0) classes.push_back(k);
      const auto curve = radius_curve(pred, gt, 5, classes);
      CHECK(curve.rows.size() == 6 * classes.size());
      for (Label k : classes) {
        double recall = -1, fpr = -1;
        for (const auto& row : curve.rows) {
          if (row.label != k) continue;
          CHECK(row.value.recall >= recall);
          CHECK(row.value.fpr >= fpr);
          recall = row.value.recall;
          fpr = row.value.fpr;
          if (row.radius == 0) {
            const auto raw = recall_fpr(candidate_from_prediction(pred, 0).mask, gt, k);
            CHECK(row.value.recall == raw.recall);
            CHECK(row.value.fpr == raw.fpr);
          }
        }
      }
    }
  }

  TEST_CASE("ground-truth candidates contain every class for r >= 1") {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const Dims3 d{20, 20, 20};
      const auto gt = random_blobs(d, 5, 30 + s);
      for (int r = 1; r <= 3; ++r) {
        const auto c = candidate_from_prediction(gt, r);
        for (Label k = 1; k < 5; ++k)
          if (count_true(labels_equal(gt, k)) > 0) CHECK(recall_fpr(c.mask, gt, k).recall == 1.0);
      }
    }
  }

  TEST_CASE("curve table format") {
    const Dims3 d{8, 8, 8};
    LabelVolume gt(d);
    gt(4, 4, 4) = 1;
    const auto curve = radius_curve(gt, gt, 1, {1});
    std::istringstream in(curve.to_tsv());
    std::string line;
    std::getline(in, line);
    CHECK(line == "r\tclass\trecall\tfpr");
    std::getline(in, line);
    CHECK(line == "0\t1\t1.000000\t0.000000");
    std::getline(in, line);
    CHECK(line.starts_with("1\t1\t1.000000\t"));
  }
}
