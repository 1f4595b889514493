#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lotlab/affine.hpp"
#include "lotlab/measures.hpp"
#include "lotlab/rng.hpp"

using namespace lotlab;

TEST_CASE("construction enforces the weight invariants") {
  SECTION("valid measure keeps exact weights when the sum is tight") {
    DiscreteMeasure m(2, {0.0, 0.0, 1.0, 0.0}, {0.25, 0.75});
    REQUIRE(m.size() == 2);
    REQUIRE(m.weight(0) == 0.25);
    REQUIRE(m.weight(1) == 0.75);
  }
  SECTION("small drift renormalizes") {
    double eps = 4e-10;
    DiscreteMeasure m(1, {0.0, 1.0}, {0.5 + eps, 0.5});
    REQUIRE(std::abs(m.weight(0) + m.weight(1) - 1.0) < 1e-15);
  }
  SECTION("large drift rejects") {
    REQUIRE_THROWS_AS(DiscreteMeasure(1, {0.0, 1.0}, {0.7, 0.7}),
                      InvalidArgument);
  }
  SECTION("negative weight rejects") {
    REQUIRE_THROWS_AS(DiscreteMeasure(1, {0.0, 1.0}, {1.5, -0.5}),
                      InvalidArgument);
  }
  SECTION("empty support rejects") {
    REQUIRE_THROWS_AS(DiscreteMeasure(2, {}, {}), EmptySupport);
  }
  SECTION("points/weights mismatch rejects") {
    REQUIRE_THROWS_AS(DiscreteMeasure(2, {0.0, 0.0, 1.0}, {0.5, 0.5}),
                      DimensionMismatch);
  }
}

TEST_CASE("normalize rescales raw weights") {
  SECTION("weights (2, 2) become (0.5, 0.5)") {
    DiscreteMeasure m = normalize(1, {0.0, 1.0}, {2.0, 2.0});
    REQUIRE(m.weight(0) == 0.5);
    REQUIRE(m.weight(1) == 0.5);
  }
  SECTION("all-zero weights raise ZeroTotalMass") {
    REQUIRE_THROWS_AS(normalize(1, {0.0, 1.0}, {0.0, 0.0}), ZeroTotalMass);
  }
  SECTION("prune_zero drops zero atoms") {
    DiscreteMeasure m = normalize(1, {0.0, 1.0, 2.0}, {1.0, 0.0, 3.0}, true);
    REQUIRE(m.size() == 2);
    REQUIRE(m.point(0)[0] == 0.0);
    REQUIRE(m.point(1)[0] == 2.0);
    REQUIRE(m.weight(0) == 0.25);
  }
  SECTION("idempotent on an already normalized measure") {
    DiscreteMeasure m(1, {0.5, 2.5}, {0.125, 0.875});
    DiscreteMeasure n = normalize(m);
    REQUIRE(n.weights() == m.weights());
    REQUIRE(n.points() == m.points());
  }
}

TEST_CASE("coalesce merges bitwise-duplicate atoms") {
  DiscreteMeasure m(2, {1.0, 2.0, 3.0, 4.0, 1.0, 2.0}, {0.25, 0.5, 0.25});
  DiscreteMeasure c = coalesce(m);
  REQUIRE(c.size() == 2);
  REQUIRE(c.point(0)[0] == 1.0);
  REQUIRE(c.weight(0) == 0.5);  // 0.25 + 0.25
  REQUIRE(c.weight(1) == 0.5);

  SECTION("no duplicates leaves the measure unchanged") {
    DiscreteMeasure d(1, {1.0, 2.0}, {0.5, 0.5});
    DiscreteMeasure cd = coalesce(d);
    REQUIRE(cd.points() == d.points());
    REQUIRE(cd.weights() == d.weights());
  }
}

TEST_CASE("pushforward moves atoms and keeps weights") {
  DiscreteMeasure m(2, {0.0, 0.0, 1.0, 1.0}, {0.3, 0.7});
  auto shift = [](std::span<const double> x, double* out) {
    out[0] = x[0] + 2.0;
    out[1] = x[1] - 1.0;
  };
  DiscreteMeasure p = pushforward(m, shift);
  REQUIRE(p.weights() == m.weights());
  REQUIRE(p.point(0)[0] == 2.0);
  REQUIRE(p.point(1)[1] == 0.0);

  SECTION("composition order matches function composition") {
    auto dbl = [](std::span<const double> x, double* out) {
      out[0] = 2.0 * x[0];
      out[1] = 2.0 * x[1];
    };
    DiscreteMeasure lhs = pushforward(pushforward(m, shift), dbl);
    auto both = [&](std::span<const double> x, double* out) {
      double tmp[2];
      shift(x, tmp);
      dbl({tmp, 2}, out);
    };
    DiscreteMeasure rhs = pushforward(m, both);
    REQUIRE(lhs.points() == rhs.points());
  }

  SECTION("affine overload agrees with the lambda") {
    AffineMap f(2.0 * Eigen::Matrix2d::Identity(), Eigen::Vector2d(1.0, 0.0));
    DiscreteMeasure viaf = pushforward(m, f);
    REQUIRE(viaf.point(1)[0] == 3.0);
    REQUIRE(viaf.point(1)[1] == 2.0);
  }
}

TEST_CASE("bounded_support_radius") {
  DiscreteMeasure m(2, {3.0, 4.0, 0.0, 1.0}, {0.5, 0.5});
  REQUIRE(bounded_support_radius(m) == Catch::Approx(5.0).margin(1e-12));
  DiscreteMeasure single(2, {0.0, 0.0}, {1.0});
  REQUIRE(bounded_support_radius(single) == 0.0);
}

TEST_CASE("mean is the weighted average of the support") {
  DiscreteMeasure m(2, {0.0, 0.0, 2.0, 4.0}, {0.75, 0.25});
  Eigen::VectorXd mu = m.mean();
  REQUIRE(mu[0] == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(mu[1] == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("json round trip preserves the measure exactly") {
  Rng rng(7);
  std::vector<double> pts, ws;
  for (int i = 0; i < 5; ++i) {
    pts.push_back(rng.uniform(-1, 1));
    pts.push_back(rng.uniform(-1, 1));
    ws.push_back(rng.uniform(0.1, 1.0));
  }
  DiscreteMeasure m = normalize(2, pts, ws);
  DiscreteMeasure back = measure_from_json(
      nlohmann::json::parse(measure_to_json(m).dump()));
  REQUIRE(back.points() == m.points());
  REQUIRE(back.weights() == m.weights());
  REQUIRE(back.structural_hash() == m.structural_hash());
}

TEST_CASE("structural hash distinguishes structure") {
  DiscreteMeasure a(1, {0.0, 1.0}, {0.5, 0.5});
  DiscreteMeasure b(1, {0.0, 1.0}, {0.5, 0.5});
  DiscreteMeasure c(1, {0.0, 1.0}, {0.25, 0.75});
  DiscreteMeasure d(1, {0.0, 2.0}, {0.5, 0.5});
  REQUIRE(a.structural_hash() == b.structural_hash());
  REQUIRE(a.structural_hash() != c.structural_hash());
  REQUIRE(a.structural_hash() != d.structural_hash());
}

TEST_CASE("gaussian measure validation") {
  Eigen::Matrix2d good;
  good << 2.0, 0.5, 0.5, 1.0;
  REQUIRE_NOTHROW(GaussianMeasure(Eigen::Vector2d(0, 0), good));

  Eigen::Matrix2d asym;
  asym << 2.0, 0.5, 0.1, 1.0;
  REQUIRE_THROWS_AS(GaussianMeasure(Eigen::Vector2d(0, 0), asym),
                    InvalidArgument);

  Eigen::Matrix2d indef;
  indef << 1.0, 2.0, 2.0, 1.0;
  REQUIRE_THROWS_AS(GaussianMeasure(Eigen::Vector2d(0, 0), indef),
                    SingularCovariance);
}

TEST_CASE("rng streams are deterministic and distinct") {
  Rng a = Rng::stream(42, 1);
  Rng b = Rng::stream(42, 1);
  Rng c = Rng::stream(42, 2);
  bool all_same = true, any_same = false;
  for (int i = 0; i < 16; ++i) {
    double va = a.uniform(), vb = b.uniform(), vc = c.uniform();
    all_same = all_same && va == vb;
    any_same = any_same || va == vc;
  }
  REQUIRE(all_same);
  REQUIRE_FALSE(any_same);
}

TEST_CASE("rng helpers stay in range") {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    double u = rng.uniform(2.0, 3.0);
    REQUIRE(u >= 2.0);
    REQUIRE(u < 3.0);
    int v = rng.uniform_int(-2, 4);
    REQUIRE(v >= -2);
    REQUIRE(v <= 4);
  }
  auto sample = rng.sample_without_replacement(10, 10);
  std::sort(sample.begin(), sample.end());
  for (int i = 0; i < 10; ++i) REQUIRE(sample[i] == i);

  // normals: crude two-sided moment check
  Rng nr(11);
  double s = 0, s2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double z = nr.normal();
    s += z;
    s2 += z * z;
  }
  REQUIRE(std::abs(s / n) < 0.05);
  REQUIRE(std::abs(s2 / n - 1.0) < 0.05);
}
