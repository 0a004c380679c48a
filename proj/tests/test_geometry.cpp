#include <doctest.h>

#include "contactflow/geometry.hpp"
#include "test_support.hpp"

#include <memory>

using namespace contactflow;
using testsupport::random_points2;
using testsupport::random_vec3;

TEST_CASE("contact form on coordinate directions") {
  const Vec3 p(0.3, 0.5, 0.1);
  CHECK(eval_alpha(p, Vec3(0, 0, 1)) == 1.0);
  CHECK(eval_alpha(p, Vec3(0, 1, 0)) == 0.0);
  CHECK(eval_alpha(p, Vec3(1, 0, 0)) == -0.5);
}

TEST_CASE("identity chart satisfies the chart equations exactly") {
  const auto d = check_contact_chart(ContactChart::identity(), random_points2(1, 50));
  CHECK(d.det_residual == 0.0);
  CHECK(d.cx_residual == 0.0);
  CHECK(d.cy_residual == 0.0);
  CHECK(d.passed());
}

TEST_CASE("linear normalization with its quadratic correction") {
  // u = 2, s = 0: C vanishes and (A, B) = (x/2, 2y).
  const ContactChart scale = ContactChart::identity().then(std::make_shared<LinearNormalization>(2.0, 0.0));
  const auto d = check_contact_chart(scale, random_points2(2, 100, -3, 3));
  CHECK(d.det_residual < 1e-12);
  CHECK(d.cx_residual < 1e-12);
  CHECK(d.cy_residual < 1e-12);
  const Vec3 img = scale.apply(Vec3(1.0, 1.0, 0.25));
  CHECK(img.x() == doctest::Approx(0.5));
  CHECK(img.y() == doctest::Approx(2.0));
  CHECK(img.z() == doctest::Approx(0.25));

  // general shear: C = -s x^2/(2u) solves C_x = B A_x - y = (u y - s x)/u - y.
  const ContactChart sheared = ContactChart::identity().then(std::make_shared<LinearNormalization>(1.5, 0.7));
  const auto g = check_contact_chart(sheared, random_points2(3, 100, -3, 3));
  CHECK(g.passed());
  const auto fd = check_contact_chart(sheared, random_points2(3, 100, -3, 3), DerivativeMode::FiniteDifference, 1e-7);
  CHECK(fd.passed());
}

TEST_CASE("non-unimodular planar part is reported, not thrown") {
  auto bad = std::make_shared<GenericMove>([](double x, double) { return 2 * x; }, [](double, double y) { return y; },
                                           [](double, double) { return 0.0; });
  const auto d = check_contact_chart(ContactChart::identity().then(bad), random_points2(4, 20));
  CHECK(d.det_residual == doctest::Approx(1.0).epsilon(1e-6));
  CHECK_FALSE(d.passed());
}

TEST_CASE("translation with shear keeps the form") {
  const ContactChart chart = ContactChart::identity().then(std::make_shared<TranslationShear>(0.2, -0.4, 1.3));
  CHECK(check_contact_chart(chart, random_points2(5, 100, -2, 2)).passed());
  const Vec3 origin = chart.apply(Vec3(0.2, -0.4, 1.3));
  CHECK(origin.norm() < 1e-15);
}

TEST_CASE("Reeb chart at a normalized frame is the identity") {
  const ContactChart chart = reeb_chart_at(Vec3::Zero(), Vec3(0, 1, 0), Vec3(1, 0, 0));
  for (const Vec2& p : random_points2(6, 20, -1, 1)) {
    const Vec3 q(p.x(), p.y(), 0.3);
    CHECK((chart.apply(q) - q).norm() < 1e-14);
    CHECK((chart.jacobian(q) - Mat3::Identity()).norm() < 1e-14);
  }
}

TEST_CASE("Reeb chart rescales a longer unstable vector") {
  const ContactChart chart = reeb_chart_at(Vec3::Zero(), Vec3(0, 1, 0), Vec3(2, 0, 0));
  const Mat3 J = chart.jacobian(Vec3(0.1, 0.2, 0.0));
  CHECK(J(0, 0) == doctest::Approx(0.5));
  CHECK(J(1, 1) == doctest::Approx(2.0));
  CHECK(std::abs(J(0, 1)) < 1e-15);
  CHECK(std::abs(J(1, 0)) < 1e-15);
}

TEST_CASE("Reeb chart along the stable eigendirection of the example map") {
  const Vec3 point(0.37, 0.61, 0.2);
  const double y = point.y();
  const Vec3 stable(1.0, -0.5, y);     // kernel lift of (1, -1/2)
  const Vec3 unstable(1.0, 1.0, y);    // kernel lift of (1, 1)
  REQUIRE(std::abs(eval_alpha(point, stable)) < 1e-15);
  const ContactChart chart = reeb_chart_at(point, stable, unstable);

  CHECK(chart.apply(point).norm() < 1e-12);
  const Vec3 mapped_u = chart.jacobian(point) * unstable;
  CHECK((mapped_u - Vec3(1, 0, 0)).norm() < 1e-12);

  // the kernel-lifted straight leaf lands on the stable axis
  for (double s : {-0.2, -0.05, 0.1, 0.3}) {
    const Vec3 leaf(point.x() + s, point.y() - 0.5 * s, point.z() + y * s - 0.25 * s * s);
    const Vec3 img = chart.apply(leaf);
    CHECK(std::abs(img.x()) < 1e-12);
    CHECK(std::abs(img.z()) < 1e-12);
  }

  CounterRng rng(7, 0);
  std::vector<Vec3> pts, vecs;
  for (int i = 0; i < 100; ++i) {
    pts.push_back(point + random_vec3(rng, 0.2));
    vecs.push_back(random_vec3(rng));
  }
  CHECK(pullback_residual(chart, pts, vecs, DerivativeMode::FiniteDifference) < 1e-8);
}

TEST_CASE("Reeb chart preconditions") {
  CHECK_THROWS_AS(reeb_chart_at(Vec3(0, 0.5, 0), Vec3(0, 1, 1), Vec3(1, 0, 0.5)), Error);
  try {
    reeb_chart_at(Vec3(0, 0.5, 0), Vec3(1, -0.5, 0.5), Vec3(2, -1, 1));
    FAIL("expected DegenerateFrame");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateFrame);
  }
  try {
    reeb_chart_at(Vec3(0, 0.5, 0), Vec3(0, 1, 1), Vec3(1, 0, 0.5));
    FAIL("expected NotInKernel");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotInKernel);
  }
}

TEST_CASE("property: random Reeb charts preserve the contact form") {
  CounterRng rng(11, 0);
  double worst_analytic = 0.0, worst_fd = 0.0;
  for (int chart_index = 0; chart_index < 20; ++chart_index) {
    const Vec3 point = random_vec3(rng, 1.0);
    // random planar directions with the stable one not horizontal
    const Vec2 e(rng.uniform(-1, 1), rng.uniform(0.3, 1.0));
    Vec2 u(rng.uniform(-1, 1), rng.uniform(-1, 1));
    if (std::abs(e.x() * u.y() - e.y() * u.x()) < 0.1) u = Vec2(e.y(), -e.x());
    const Vec3 stable(e.x(), e.y(), point.y() * e.x());
    const Vec3 unstable(u.x(), u.y(), point.y() * u.x());
    const ContactChart chart = reeb_chart_at(point, stable, unstable);
    std::vector<Vec3> pts, vecs;
    for (int i = 0; i < 500; ++i) {
      pts.push_back(point + random_vec3(rng, 0.5));
      vecs.push_back(random_vec3(rng));
    }
    worst_analytic = std::max(worst_analytic, pullback_residual(chart, pts, vecs));
    worst_fd = std::max(worst_fd, pullback_residual(chart, pts, vecs, DerivativeMode::FiniteDifference));

    // idempotence: the frame in normalized coordinates yields the identity chart
    const Mat3 J = chart.jacobian(point);
    const ContactChart again = reeb_chart_at(Vec3::Zero(), J * stable, J * unstable);
    CHECK((again.jacobian(Vec3::Zero()).topLeftCorner<2, 2>() - Mat2::Identity()).norm() < 1e-10);
  }
  CHECK(worst_analytic < 1e-8);
  CHECK(worst_fd < 1e-6);
}
