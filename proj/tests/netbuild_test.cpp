#include "phkit/netbuild.hpp"

#include <random>

#include <gtest/gtest.h>

#include "phkit/analysis.hpp"
#include "phkit/error.hpp"
#include "phkit/simulate.hpp"
#include "test_generators.hpp"

namespace phkit {
namespace {

using testing_support::uniform;

MsdGraph two_mass() {
  MsdGraph g;
  g.nodes = {{"1", 1.0}, {"2", 1.0}};
  g.springs = {{"1", "2", 1.0}};
  g.dampers = {{"1", "2", 0.5}};
  g.actuated = {"1"};
  return g;
}

// Random connected chain-plus-chords graph without ground edges.
MsdGraph random_graph(std::mt19937_64& rng, int nodes, bool ground) {
  MsdGraph g;
  for (int i = 0; i < nodes; ++i) g.nodes.push_back({"m" + std::to_string(i), uniform(rng, 0.5, 3.0)});
  for (int i = 1; i < nodes; ++i)
    g.springs.push_back({"m" + std::to_string(i - 1), "m" + std::to_string(i), uniform(rng, 0.5, 4.0)});
  for (int k = 0; k < nodes; ++k) {
    const auto a = static_cast<int>(rng() % nodes);
    const auto b = static_cast<int>(rng() % nodes);
    if (a == b) continue;
    g.dampers.push_back({"m" + std::to_string(a), "m" + std::to_string(b), uniform(rng, 0.1, 1.0)});
  }
  if (ground) g.springs.push_back({"m0", kGroundNode, 2.0});
  g.actuated = {"m" + std::to_string(nodes - 1)};
  return g;
}

TEST(Incidence, SingleSpring) {
  MsdGraph g;
  g.nodes = {{"a", 1}, {"b", 1}};
  g.springs = {{"a", "b", 1}};
  const Incidence inc = incidence(g);
  EXPECT_EQ(inc.springs, Eigen::MatrixXd(Eigen::Vector2d(1, -1)));
  EXPECT_EQ(inc.dampers.cols(), 0);
}

TEST(Incidence, Edgeless) {
  MsdGraph g;
  g.nodes = {{"a", 1}};
  const Incidence inc = incidence(g);
  EXPECT_EQ(inc.springs.size(), 0);
  EXPECT_EQ(inc.dampers.size(), 0);
}

TEST(Incidence, TriangleColumnsSumToZero) {
  MsdGraph g;
  g.nodes = {{"a", 1}, {"b", 2}, {"c", 3}};
  g.springs = {{"a", "b", 1}, {"b", "c", 1}, {"c", "a", 1}};
  const Incidence inc = incidence(g);
  ASSERT_EQ(inc.springs.rows(), 3);
  ASSERT_EQ(inc.springs.cols(), 3);
  EXPECT_EQ(inc.springs.colwise().sum().norm(), 0.0);
  EXPECT_EQ(inc.springs.cwiseAbs().sum(), 6.0);
}

TEST(Incidence, GroundRowDropped) {
  MsdGraph g;
  g.nodes = {{"a", 1}};
  g.springs = {{"a", kGroundNode, 1}};
  EXPECT_EQ(incidence(g).springs, Eigen::MatrixXd::Ones(1, 1));
}

TEST(BuildMsd, TwoMassExample) {
  const PhsModel m = build_msd(two_mass());
  ASSERT_EQ(m.n(), 3);
  Eigen::Matrix3d J, R;
  J << 0, 1, -1, -1, 0, 0, 1, 0, 0;
  R << 0, 0, 0, 0, 0.5, -0.5, 0, -0.5, 0.5;
  EXPECT_EQ(m.J.constant_value(), Eigen::MatrixXd(J));
  EXPECT_EQ(m.R.constant_value(), Eigen::MatrixXd(R));
  EXPECT_EQ(m.G.constant_value(), Eigen::MatrixXd(Eigen::Vector3d(0, 1, 0)));
  EXPECT_EQ(m.state, (std::vector<std::string>{"q1", "p_1", "p_2"}));
  EXPECT_EQ(m.metadata.at("incidence"), "+1 at tail, -1 at head");
  EXPECT_TRUE(validate_phs(m).passed());
}

TEST(BuildMsd, OutputIsActuatedVelocity) {
  MsdGraph g = two_mass();
  g.nodes[0].mass = 2.0;
  const PhsModel m = build_msd(g);
  const PhsEval e = phs_vector_field(m, Eigen::Vector3d(0.3, 4.0, 1.0), Eigen::VectorXd::Zero(1));
  EXPECT_DOUBLE_EQ(e.y(0), 2.0);
}

TEST(BuildMsd, TotalMomentumIsCasimir) {
  const PhsModel m = build_msd(two_mass());
  const Eigen::Vector3d grad(0, 1, 1);
  EXPECT_EQ((m.J.constant_value() * grad).norm(), 0.0);
  EXPECT_EQ((m.R.constant_value() * grad).norm(), 0.0);
  const CasimirBasis basis = linear_casimirs(m);
  ASSERT_EQ(basis.size(), 1u);
  EXPECT_NEAR(std::abs(basis.covectors[0].dot(grad.normalized())), 1.0, 1e-12);
}

TEST(BuildMsd, FreeParticle) {
  MsdGraph g;
  g.nodes = {{"m", 2.0}};
  const PhsModel m = build_msd(g);
  ASSERT_EQ(m.n(), 1);
  EXPECT_EQ(m.J.constant_value().norm(), 0.0);
  EXPECT_EQ(m.R.constant_value().norm(), 0.0);
  EXPECT_EQ(m.m(), 0);
  EXPECT_DOUBLE_EQ(m.H.value(Eigen::VectorXd::Constant(1, 2.0)), 1.0);
}

TEST(BuildMsd, RandomGraphsValidAndConserveMomentum) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const int nodes = 1 + trial % 6;
    const MsdGraph g = random_graph(rng, nodes, false);
    const PhsModel m = build_msd(g);
    EXPECT_TRUE(validate_phs(m).passed());
    Eigen::VectorXd momentum = Eigen::VectorXd::Zero(m.n());
    momentum.tail(nodes).setOnes();
    const CasimirBasis basis = linear_casimirs(m);
    Eigen::MatrixXd B(m.n(), static_cast<Eigen::Index>(basis.size()));
    for (std::size_t k = 0; k < basis.size(); ++k) B.col(static_cast<Eigen::Index>(k)) = basis.covectors[k];
    // Projection onto the basis span recovers the momentum covector.
    EXPECT_LE((B * (B.transpose() * momentum) - momentum).norm(), 1e-10);
  }
}

TEST(BuildMsd, GroundSpringBreaksMomentumConservation) {
  std::mt19937_64 rng(32);
  const PhsModel m = build_msd(random_graph(rng, 3, true));
  EXPECT_TRUE(validate_phs(m).passed());
  Eigen::VectorXd momentum = Eigen::VectorXd::Zero(m.n());
  momentum.tail(3).setOnes();
  EXPECT_GT((m.J.constant_value() * momentum).norm(), 0.5);
}

TEST(BuildMsd, ForcedRunPassesEnergyAudit) {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 5; ++trial) {
    const PhsModel m = build_msd(random_graph(rng, 2 + trial, trial % 2 == 1));
    const Trajectory tr =
        simulate_phs(m, SignalSpec::expressions({parse_expr("sin(2*t)", {"t"})}),
                     testing_support::uniform_vector(rng, m.n(), -1, 1), 10.0, 0.01, Method::kMidpoint);
    const AuditReport a = energy_audit(tr, m);
    EXPECT_TRUE(a.passed);
    EXPECT_LE(std::abs(a.balance_residual), 1e-10);
  }
}

TEST(MsdGraph, InvalidGraphs) {
  auto expect_invalid = [](MsdGraph g) { EXPECT_THROW(build_msd(g), PreconditionError); };
  MsdGraph g = two_mass();
  g.nodes[0].mass = 0.0;
  expect_invalid(g);
  g = two_mass();
  g.springs[0].coefficient = -1.0;
  expect_invalid(g);
  g = two_mass();
  g.dampers[0].to = "3";
  expect_invalid(g);
  g = two_mass();
  g.nodes.push_back({"1", 1.0});
  expect_invalid(g);
  g = two_mass();
  g.nodes.push_back({kGroundNode, 1.0});
  expect_invalid(g);
  g = two_mass();
  g.springs[0].to = "1";
  expect_invalid(g);
  g = two_mass();
  g.actuated = {kGroundNode};
  expect_invalid(g);
  g = two_mass();
  g.nodes[1].name = "a b";
  expect_invalid(g);
}

}  // namespace
}  // namespace phkit
