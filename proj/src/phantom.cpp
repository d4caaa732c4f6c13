#include "cseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace cseg {

namespace {

using Vec = std::array<double, 3>;

struct Ellipsoid {
  Vec centre;
  Vec axes;
  bool contains(double x, double y, double z) const {
    const double u = (x - centre[0]) / axes[0], v = (y - centre[1]) / axes[1], w = (z - centre[2]) / axes[2];
    return u * u + v * v + w * w <= 1.0;
  }
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Point inside the body at normalised radius at most `reach`.
Vec inside_body(std::mt19937_64& rng, const Ellipsoid& body, double reach) {
  for (;;) {
    const Vec u{uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
    if (u[0] * u[0] + u[1] * u[1] + u[2] * u[2] > 1.0) continue;
    return {body.centre[0] + reach * u[0] * body.axes[0], body.centre[1] + reach * u[1] * body.axes[1],
            body.centre[2] + reach * u[2] * body.axes[2]};
  }
}

double distance(const Vec& a, const Vec& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

/// Blob placed away from already placed ones when possible.
Ellipsoid place_blob(std::mt19937_64& rng, const Ellipsoid& body, const Vec& axes, double reach,
                     const std::vector<Ellipsoid>& avoid) {
  Ellipsoid e{{}, axes};
  const double own = std::max({axes[0], axes[1], axes[2]});
  for (int attempt = 0; attempt < 64; ++attempt) {
    e.centre = inside_body(rng, body, reach);
    bool clear = true;
    for (const Ellipsoid& o : avoid)
      if (distance(e.centre, o.centre) < own + std::max({o.axes[0], o.axes[1], o.axes[2]})) clear = false;
    if (clear) break;
  }
  return e;
}

}  // namespace

std::vector<std::string> class_names(const PhantomSpec& spec) {
  std::vector<std::string> names{"background"};
  if (!spec.body_as_background) names.push_back("body");
  if (spec.large_organ) names.push_back("large_organ");
  if (spec.small_organ) names.push_back("small_organ");
  if (spec.vessel) names.push_back("vessel");
  if (spec.extra_organ) names.push_back("extra_organ");
  return names;
}

int num_classes(const PhantomSpec& spec) { return static_cast<int>(class_names(spec).size()); }

int label_of(const PhantomSpec& spec, Structure s) {
  if (s == Structure::Body && spec.body_as_background) return 0;
  const std::pair<bool, Structure> order[] = {{!spec.body_as_background, Structure::Body},
                                              {spec.large_organ, Structure::LargeOrgan},
                                              {spec.small_organ, Structure::SmallOrgan},
                                              {spec.vessel, Structure::Vessel},
                                              {spec.extra_organ, Structure::ExtraOrgan}};
  int next = 1;
  for (const auto& [present, which] : order) {
    if (!present) continue;
    if (which == s) return next;
    ++next;
  }
  return -1;
}

Phantom generate(const PhantomSpec& spec) {
  for (int a = 0; a < 3; ++a)
    if (spec.dims[a] < 48) throw GeometryError("generate: phantom dims " + to_string(spec.dims) + " below 48");
  std::mt19937_64 rng(spec.seed);
  const Vec d{double(spec.dims[0]), double(spec.dims[1]), double(spec.dims[2])};
  const double scale = std::cbrt(d[0] * d[1] * d[2]) / 64.0;

  Ellipsoid body;
  for (int a = 0; a < 3; ++a) {
    body.centre[a] = (d[a] - 1) / 2.0 + uniform(rng, -2.0, 2.0);
    body.axes[a] = d[a] * (a < 2 ? uniform(rng, 0.38, 0.42) : uniform(rng, 0.40, 0.44));
  }

  std::vector<Ellipsoid> placed;
  Ellipsoid large, small, extra;
  if (spec.large_organ) {
    const Vec ax{d[0] * uniform(rng, 0.14, 0.19), d[1] * uniform(rng, 0.14, 0.19), d[2] * uniform(rng, 0.14, 0.19)};
    large = place_blob(rng, body, ax, 0.42, placed);
    placed.push_back(large);
  }
  if (spec.small_organ) {
    const double s = scale * spec.small_scale;
    const Vec ax{s * uniform(rng, 4.5, 6.5), s * uniform(rng, 4.5, 6.5), s * uniform(rng, 4.5, 6.5)};
    small = place_blob(rng, body, ax, 0.6, placed);
    placed.push_back(small);
  }
  if (spec.extra_organ) {
    const Vec ax{scale * uniform(rng, 5.0, 7.0), scale * uniform(rng, 5.0, 7.0), scale * uniform(rng, 5.0, 7.0)};
    extra = place_blob(rng, body, ax, 0.6, placed);
    placed.push_back(extra);
  }

  // Tube: a sinusoidal curve running along z through the body.
  std::vector<Vec> path;
  double radius = 0.0;
  if (spec.vessel) {
    radius = uniform(rng, spec.vessel_radius_min, spec.vessel_radius_max);
    const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double freq = uniform(rng, 0.6, 1.2) * std::numbers::pi / body.axes[2];
    const double ampx = uniform(rng, 0.2, 0.35) * body.axes[0], ampy = uniform(rng, 0.2, 0.35) * body.axes[1];
    const double offx = uniform(rng, -0.15, 0.15) * body.axes[0], offy = uniform(rng, -0.15, 0.15) * body.axes[1];
    const double z0 = body.centre[2] - 0.6 * body.axes[2], z1 = body.centre[2] + 0.6 * body.axes[2];
    for (double z = z0; z <= z1; z += 0.25) {
      const double t = z - body.centre[2];
      path.push_back({body.centre[0] + offx + ampx * std::sin(freq * t + phase),
                      body.centre[1] + offy + ampy * std::cos(freq * t + phase), z});
    }
  }

  auto offset = [&](float hu) {
    return hu + static_cast<float>(spec.intensity_jitter > 0 ? uniform(rng, -spec.intensity_jitter, spec.intensity_jitter) : 0.0);
  };
  const float body_v = offset(spec.body_hu), large_v = offset(spec.large_hu), small_v = offset(spec.small_hu),
              vessel_v = offset(spec.vessel_hu), extra_v = offset(spec.extra_hu);
  const int body_l = label_of(spec, Structure::Body);
  const int large_l = label_of(spec, Structure::LargeOrgan), small_l = label_of(spec, Structure::SmallOrgan);
  const int vessel_l = label_of(spec, Structure::Vessel), extra_l = label_of(spec, Structure::ExtraOrgan);

  Phantom p;
  p.ct = Volume3(spec.dims, spec.spacing, spec.air_hu);
  p.labels = LabelVolume(spec.dims, spec.spacing, 0);
  for (int z = 0; z < spec.dims[2]; ++z)
    for (int y = 0; y < spec.dims[1]; ++y)
      for (int x = 0; x < spec.dims[0]; ++x) {
        if (!body.contains(x, y, z)) continue;
        float v = body_v;
        int l = body_l;
        if (spec.large_organ && large.contains(x, y, z)) v = large_v, l = large_l;
        if (spec.small_organ && small.contains(x, y, z)) v = small_v, l = small_l;
        if (spec.extra_organ && extra.contains(x, y, z)) v = extra_v, l = extra_l;
        p.ct(x, y, z) = v;
        p.labels(x, y, z) = static_cast<Label>(l);
      }

  const int reach = static_cast<int>(std::ceil(radius));
  for (const Vec& c : path) {
    const int cx = static_cast<int>(std::lround(c[0])), cy = static_cast<int>(std::lround(c[1])),
              cz = static_cast<int>(std::lround(c[2]));
    for (int z = cz - reach; z <= cz + reach; ++z)
      for (int y = cy - reach; y <= cy + reach; ++y)
        for (int x = cx - reach; x <= cx + reach; ++x) {
          if (!p.ct.contains(x, y, z) || !body.contains(x, y, z)) continue;
          if (distance({double(x), double(y), double(z)}, c) > radius) continue;
          p.ct(x, y, z) = vessel_v;
          p.labels(x, y, z) = static_cast<Label>(vessel_l);
        }
  }

  if (spec.noise_std > 0) {
    std::normal_distribution<float> noise(0.0f, static_cast<float>(spec.noise_std));
    for (float& v : p.ct.data()) v += noise(rng);
  }

  p.info.body_centre = body.centre;
  p.info.body_axes = body.axes;
  p.info.large_centre = large.centre;
  p.info.small_centre = small.centre;
  p.info.extra_centre = extra.centre;
  p.info.vessel_radius = radius;
  return p;
}

std::vector<SyntheticCase> generate_dataset(const PhantomSpec& spec, int n, std::uint64_t base_seed,
                                            int validation_count) {
  if (n < 1) throw GeometryError("generate_dataset: need at least one case");
  if (validation_count < 0 || validation_count > n)
    throw GeometryError("generate_dataset: validation count " + std::to_string(validation_count) + " out of range");
  std::vector<SyntheticCase> cases;
  for (int i = 0; i < n; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(base_seed), static_cast<std::uint32_t>(base_seed >> 32),
                      static_cast<std::uint32_t>(i)};
    std::mt19937_64 mix(seq);
    PhantomSpec s = spec;
    s.seed = mix();
    cases.push_back({generate(s), s.seed, i >= n - validation_count});
  }
  return cases;
}

PhantomSpec transfer_family(PhantomSpec spec) {
  spec.body_hu = 20.0f;
  spec.large_hu = 90.0f;
  spec.small_hu = 140.0f;
  spec.vessel_hu = 210.0f;
  spec.extra_hu = 180.0f;
  spec.extra_organ = true;
  return spec;
}

}  // namespace cseg
