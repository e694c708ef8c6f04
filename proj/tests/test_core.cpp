#include "tvirt/core.hpp"
#include "tvirt/errors.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

using namespace tvirt;
using Catch::Approx;

TEST_CASE("mask set operations keep counts in sync", "[core]") {
  ObservationMask a(2, 3), b(2, 3);
  a.set(0, 0);
  a.set(1, 2);
  b.set(1, 2);
  b.set(0, 1);
  CHECK(a.observed_count() == 2);
  CHECK((a & b).observed_count() == 1);
  CHECK((a | b).observed_count() == 3);
  CHECK(a.complement().observed_count() == 4);
  CHECK(a.intersects(b));
  CHECK_FALSE(a.intersects(a.complement()));
  CHECK((a | b).contains(a));
  CHECK(a.row_count(1) == 1);
  CHECK(a.col_count(2) == 1);
  a.set(0, 0, false);
  CHECK(a.observed_count() == 1);
  CHECK_THROWS_AS(a & ObservationMask(3, 2), DataError);
}

TEST_CASE("score matrix validates ids and range", "[core]") {
  Eigen::MatrixXd v(1, 2);
  v << 0.5, 1.5;
  ObservationMask m(1, 2, true);
  CHECK_THROWS_AS(ScoreMatrix(v, m), DataError);
  m.set(0, 1, false);
  ScoreMatrix s(v, m);
  CHECK(s(0, 1) == 0.0);
  CHECK(s.agent_ids()[0] == "agent_0");
  CHECK(s.item_ids()[1] == "item_1");
  CHECK_THROWS_AS(ScoreMatrix({"a"}, {"x", "x"}, v, m), DataError);
  CHECK_THROWS_AS(ScoreMatrix({"a", "b"}, {"x", "y"}, v, m), DataError);
}

TEST_CASE("predict examples", "[core]") {
  AdditiveParams p;
  p.theta = Eigen::Vector2d(0, 0);
  p.b = Eigen::Vector2d(0, 0);
  CHECK(predict(p, true).isZero());

  p.theta = Eigen::Vector2d(0.5, -0.5);
  p.b = Eigen::Vector2d(0.2, -0.2);
  const auto m = predict(p, false);
  CHECK(m(0, 0) == Approx(0.3).margin(1e-15));
  CHECK(m(0, 1) == Approx(0.7).margin(1e-15));
  CHECK(m(1, 0) == Approx(-0.7).margin(1e-15));
  CHECK(m(1, 1) == Approx(-0.3).margin(1e-15));

  p.theta = Eigen::VectorXd::Constant(1, 1.5);
  p.b = Eigen::VectorXd::Zero(1);
  CHECK(predict(p, true)(0, 0) == 1.0);
  CHECK(predict(p, false)(0, 0) == 1.5);
}

TEST_CASE("link examples", "[core]") {
  const Link logit(LinkKind::logit), probit(LinkKind::probit), identity(LinkKind::identity);
  CHECK(link_forward(0.0, logit) == 0.0);
  CHECK(link_forward(0.0, probit) == 0.0);
  // ln(0.995 / 0.005) = ln 199, evaluated at 30 digits.
  CHECK(link_forward(0.99, logit) == Approx(5.29330482472449239541).epsilon(1e-14));
  // Phi^-1(0.75) and Phi^-1(0.995), evaluated at 30 digits.
  CHECK(link_forward(0.5, probit) == Approx(0.674489750196081743202).epsilon(1e-13));
  CHECK(link_forward(0.99, probit) == Approx(2.57582930354890076098).epsilon(1e-13));
  CHECK(link_forward(1.0, logit) == link_forward(0.99, logit));
  CHECK(link_forward(0.995, identity) == 0.99);
  CHECK(link_inverse(0.0, logit) == 0.0);
  CHECK(link_inverse(5.29330482472449239541, logit) == Approx(0.99).epsilon(1e-14));
  CHECK_THROWS_AS(Link(LinkKind::logit, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(parse_link_kind("cubic"), std::invalid_argument);
}

TEST_CASE("links are strictly increasing and round-trip", "[core][property]") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-0.99, 0.99);
  for (auto kind : {LinkKind::identity, LinkKind::probit, LinkKind::logit}) {
    const Link link(kind);
    for (int n = 0; n < 2000; ++n) {
      double a = u(rng), b = u(rng);
      if (a == b) continue;
      if (a > b) std::swap(a, b);
      CHECK(link_forward(a, link) < link_forward(b, link));
      CHECK(link_inverse(link_forward(a, link), link) == Approx(a).margin(1e-12));
    }
  }
}

TEST_CASE("inverse_link(apply_link(m)) clamps entrywise", "[core][property]") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd v(6, 9);
  ObservationMask mask(6, 9);
  for (Eigen::Index i = 0; i < 6; ++i)
    for (Eigen::Index j = 0; j < 9; ++j) {
      v(i, j) = u(rng);
      if ((i + j) % 4) mask.set(i, j);
    }
  v(0, 1) = 1.0;
  v(2, 3) = -1.0;
  const ScoreMatrix m(v, mask);
  for (auto kind : {LinkKind::identity, LinkKind::probit, LinkKind::logit}) {
    const Link link(kind);
    const auto back = inverse_link(apply_link(m, link), link);
    CHECK(back.mask == mask);
    for (auto [i, j] : mask.cells())
      CHECK(back.values(i, j) == Approx(std::clamp(v(i, j), -0.99, 0.99)).margin(1e-12));
  }
}

TEST_CASE("agent labels", "[core]") {
  AgentLabels l({AgentTag::faithful, AgentTag::problematic, AgentTag::unlabeled});
  CHECK(l.count(AgentTag::faithful) == 1);
  CHECK_NOTHROW(l.require_covers(3));
  CHECK_THROWS_AS(l.require_covers(4), DataError);
  CHECK(parse_agent_tag("problematic") == AgentTag::problematic);
  CHECK_THROWS(parse_agent_tag("good"));
}
