#include <catch2/catch_amalgamated.hpp>

#include "mci/common.hpp"
#include "mci/nv_model.hpp"

using namespace mci;

namespace {

std::vector<double> linspace(double a, double b, size_t n) {
  std::vector<double> v(n);
  for (size_t i = 0; i < n; ++i) v[i] = a + (b - a) * double(i) / double(n - 1);
  return v;
}

// local minima indices of a sampled spectrum
std::vector<size_t> minima(std::span<const double> v, double below) {
  std::vector<size_t> out;
  for (size_t i = 1; i + 1 < v.size(); ++i)
    if (v[i] < v[i - 1] && v[i] <= v[i + 1] && v[i] < below) out.push_back(i);
  return out;
}

}  // namespace

TEST_CASE("tetrahedral axes sum to zero, are unit, and meet at acos(-1/3)") {
  const auto axes = tetrahedral_axes();
  Vec3 sum{};
  for (const auto& a : axes) {
    sum += a;
    REQUIRE(std::abs(a.norm() - 1.0) < 1e-15);
  }
  REQUIRE(sum.norm() < 1e-15);
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      REQUIRE(std::abs(axes[i].dot(axes[j]) + 1.0 / 3.0) < 1e-15);
}

TEST_CASE("resonance pair degenerates at zero field and zero projection") {
  const auto axes = tetrahedral_axes();
  auto [fm, fp] = resonance_pair(Vec3{}, axes[0]);
  REQUIRE(fm == 2.870e9);
  REQUIRE(fp == 2.870e9);

  // perpendicular field: projection zero
  const Vec3 perp = Vec3{1.0, -1.0, 0.0}.normalized();  // perp to (1,1,1)
  REQUIRE(std::abs(perp.dot(axes[0])) < 1e-16);
  auto [pm, pp] = resonance_pair(perp * 5e-3, axes[0]);
  REQUIRE(pm == Catch::Approx(2.870e9).margin(1e-3));
  REQUIRE(pp == Catch::Approx(2.870e9).margin(1e-3));
}

TEST_CASE("resonance pair matches the hand-evaluated 1 mT example") {
  const auto axes = tetrahedral_axes();
  const Vec3 b{0.0, 0.0, 1e-3};
  const auto [fm, fp] = resonance_pair(b, axes[0]);
  const double shift = 28.024e9 * 1e-3 / std::sqrt(3.0);
  REQUIRE(fm == Catch::Approx(2.870e9 - shift).margin(1.0));
  REQUIRE(fp == Catch::Approx(2.870e9 + shift).margin(1.0));
  // the same values to the precision quoted for this case
  REQUIRE(fm == Catch::Approx(2.85382e9).margin(1e4));
  REQUIRE(fp == Catch::Approx(2.88618e9).margin(1e4));
}

TEST_CASE("resonance pair is even in b and splits by 2 gamma |b.n|") {
  detail::Rng rng(21);
  const auto axes = tetrahedral_axes();
  const NVConstants c;
  for (int i = 0; i < 200; ++i) {
    const Vec3 b{(rng.uniform() - 0.5) * 4e-3, (rng.uniform() - 0.5) * 4e-3,
                 (rng.uniform() - 0.5) * 4e-3};
    const auto& axis = axes[rng.next_u64() % 4];
    const auto [fm, fp] = resonance_pair(b, axis, c);
    const auto [gm, gp] = resonance_pair(b * -1.0, axis, c);
    REQUIRE(fm == gm);
    REQUIRE(fp == gp);
    REQUIRE(fm <= fp);
    const double expected = 2.0 * c.gyromagnetic_hz_per_t * std::abs(b.dot(axis));
    REQUIRE(fp - fm == Catch::Approx(expected).margin(1e-5));
  }
}

TEST_CASE("zero field, zero bias: one merged dip of depth 8x contrast at D") {
  const VectorFieldMap field = VectorFieldMap::zeros(2, 2, 1e-6, 0.0);
  NVFrame frame;  // zero bias
  LineShapeParams shape;
  shape.contrast = 0.02;
  const auto freqs = linspace(2.87e9 - 4e7, 2.87e9 + 4e7, 201);  // index 100 = D
  const auto cube = synthesize_odmr(field, frame, freqs, shape);
  const auto s = cube.spectrum(0, 0);
  REQUIRE(s[100] == Catch::Approx(1.0 - 8.0 * shape.contrast).margin(1e-12));
  const auto dips = minima(s, 0.999);
  REQUIRE(dips.size() == 1);
  REQUIRE(dips[0] == 100);
}

TEST_CASE("uniform bias along axis 0 places dips at the derived offsets") {
  const VectorFieldMap field = VectorFieldMap::zeros(1, 1, 1e-6, 0.0);
  NVFrame frame;
  frame.bias_field = tetrahedral_axes()[0] * 2e-3;
  LineShapeParams shape;
  const auto freqs = linspace(2.87e9 - 8e7, 2.87e9 + 8e7, 801);
  const auto cube = synthesize_odmr(field, frame, freqs, shape);
  const auto s = cube.spectrum(0, 0);

  // axis 0 projects 2 mT; axes 1-3 all project -2/3 mT
  const double g = NVConstants{}.gyromagnetic_hz_per_t;
  const std::vector<double> expected = {
      2.87e9 - g * 2e-3, 2.87e9 - g * 2e-3 / 3.0, 2.87e9 + g * 2e-3 / 3.0,
      2.87e9 + g * 2e-3};
  REQUIRE(g * 2e-3 == Catch::Approx(56.048e6).epsilon(1e-9));
  REQUIRE(g * 2e-3 / 3.0 == Catch::Approx(18.683e6).epsilon(1e-4));

  const auto dips = minima(s, 0.999);
  REQUIRE(dips.size() == expected.size());
  const double df = freqs[1] - freqs[0];
  for (size_t k = 0; k < expected.size(); ++k)
    REQUIRE(std::abs(freqs[dips[k]] - expected[k]) <= df);
  // the triple-degenerate inner dips are about three times deeper
  REQUIRE(s[dips[1]] < 1.0 - 2.5 * shape.contrast);
  REQUIRE(s[dips[0]] > 1.0 - 1.5 * shape.contrast);
}

TEST_CASE("sweep that misses a resonance is rejected") {
  const VectorFieldMap field = VectorFieldMap::zeros(1, 1, 1e-6, 0.0);
  NVFrame frame;
  frame.bias_field = tetrahedral_axes()[0] * 4e-3;  // dips at +-112 MHz
  const auto freqs = linspace(2.87e9 - 8e7, 2.87e9 + 8e7, 201);
  REQUIRE_THROWS_AS(synthesize_odmr(field, frame, freqs, LineShapeParams{}), Error);
}

TEST_CASE("noiseless spectra stay within [0, 1] and saturate at zero") {
  const VectorFieldMap field = VectorFieldMap::zeros(2, 1, 1e-6, 0.0);
  NVFrame frame;
  LineShapeParams shape;
  shape.contrast = 0.2;  // merged depth 8 x 0.2 = 1.6 clamps at zero
  const auto freqs = linspace(2.87e9 - 4e7, 2.87e9 + 4e7, 201);
  const auto cube = synthesize_odmr(field, frame, freqs, shape);
  for (double v : cube.spectra) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
  REQUIRE(cube.spectrum(0, 0)[100] == 0.0);
}

TEST_CASE("synthesis is deterministic and pixelwise independent") {
  VectorFieldMap field = VectorFieldMap::zeros(4, 4, 1e-6, 0.0);
  NVFrame frame;
  frame.bias_field = Vec3{0.4, 0.7, 0.9}.normalized() * 2e-3;
  LineShapeParams shape;
  shape.photon_noise_sigma = 0.003;
  shape.rng_seed = 42;
  const auto freqs = linspace(2.87e9 - 8e7, 2.87e9 + 8e7, 161);

  const auto a = synthesize_odmr(field, frame, freqs, shape);
  const auto b = synthesize_odmr(field, frame, freqs, shape);
  REQUIRE(a.spectra == b.spectra);

  shape.rng_seed = 43;
  const auto c = synthesize_odmr(field, frame, freqs, shape);
  REQUIRE(a.spectra != c.spectra);

  // change one pixel's field: only that pixel's spectrum may change
  VectorFieldMap field2 = field;
  field2.bz.at(2, 1) = 2e-6;
  shape.rng_seed = 42;
  const auto d = synthesize_odmr(field2, frame, freqs, shape);
  for (uint32_t y = 0; y < 4; ++y)
    for (uint32_t x = 0; x < 4; ++x) {
      const auto sa = a.spectrum(x, y);
      const auto sd = d.spectrum(x, y);
      const bool same = std::equal(sa.begin(), sa.end(), sd.begin());
      REQUIRE(same == !(x == 2 && y == 1));
    }
}
