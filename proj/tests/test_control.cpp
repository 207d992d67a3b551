#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "pfs/app/evaluate.hpp"
#include "pfs/control/deploy.hpp"

using namespace pfs;
using namespace pfs::control;

namespace {

train::Checkpoint untrained_checkpoint(int d = 3, std::uint64_t seed = 3) {
  std::mt19937_64 rng(seed);
  train::Checkpoint ck;
  ck.params = net::init_net(8, feature::count, 3, d, rng);
  ck.N = 5;
  ck.norm = NormStats::identity(feature::count);
  return ck;
}

Vec3 random_q(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
  return {u(rng), u(rng), u(rng)};
}

// Kinetic energy from finite-difference velocities of every mass point.
double kinetic_energy_oracle(const ArmConfig& a, const Vec3& q, const Vec3& qd) {
  const double h = 1e-6;
  auto points = [&](const Vec3& qq) {
    // centers of the three rods, their absolute angles, then the tool frame
    std::array<double, 9> out{};
    double x = a.base_x, z = a.base_z, phi = 0.0;
    for (int i = 0; i < 3; ++i) {
      phi += qq[i];
      const double L = a.length[static_cast<std::size_t>(i)];
      out[static_cast<std::size_t>(3 * i)] = x + 0.5 * L * std::cos(phi);
      out[static_cast<std::size_t>(3 * i + 1)] = z + 0.5 * L * std::sin(phi);
      out[static_cast<std::size_t>(3 * i + 2)] = phi;
      x += L * std::cos(phi);
      z += L * std::sin(phi);
    }
    return std::pair{out, std::array<double, 2>{x, z}};
  };
  const auto [p1, t1] = points(q + h * qd);
  const auto [p0, t0] = points(q - h * qd);
  double e = 0.0;
  for (int i = 0; i < 3; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const double vx = (p1[3 * ui] - p0[3 * ui]) / (2 * h), vz = (p1[3 * ui + 1] - p0[3 * ui + 1]) / (2 * h);
    const double w = (p1[3 * ui + 2] - p0[3 * ui + 2]) / (2 * h);
    const double m = a.link_mass[ui], L = a.length[ui];
    e += 0.5 * m * (vx * vx + vz * vz) + 0.5 * (m * L * L / 12.0) * w * w;
  }
  const double vx = (t1[0] - t0[0]) / (2 * h), vz = (t1[1] - t0[1]) / (2 * h);
  const double w = qd.sum();
  e += 0.5 * a.payload_mass * (vx * vx + vz * vz) + 0.5 * a.payload_inertia * w * w;
  return e;
}

}  // namespace

TEST(Arm, HomePose) {
  const ArmConfig a;
  const Pose p = tool_pose(a, Vec3::Zero());
  EXPECT_DOUBLE_EQ(p.x, a.base_x + a.length[0] + a.length[1] + a.length[2]);
  EXPECT_DOUBLE_EQ(p.z, a.base_z);
  EXPECT_DOUBLE_EQ(p.theta, std::numbers::pi / 2);
}

TEST(Arm, InverseKinematicsRoundTrip) {
  const ArmConfig a;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ux(-0.05, 0.05), uz(-0.01, 0.1), ut(-0.5, 0.5);
  for (int i = 0; i < 200; ++i) {
    const Pose target{ux(rng), uz(rng), ut(rng)};
    const Pose got = tool_pose(a, inverse_kinematics(a, target));
    EXPECT_NEAR(got.x, target.x, 1e-12);
    EXPECT_NEAR(got.z, target.z, 1e-12);
    EXPECT_NEAR(got.theta, target.theta, 1e-12);
  }
  EXPECT_THROW(inverse_kinematics(a, Pose{2.0, 0.0, 0.0}), ConfigError);
}

TEST(Arm, JacobianMatchesFiniteDifferences) {
  const ArmConfig a;
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    const Vec3 q = random_q(rng);
    const Mat3 J = jacobian(a, q);
    for (int j = 0; j < 3; ++j) {
      const double h = 1e-6;
      Vec3 qp = q, qm = q;
      qp[j] += h;
      qm[j] -= h;
      const Pose pp = tool_pose(a, qp), pm = tool_pose(a, qm);
      EXPECT_NEAR((pp.x - pm.x) / (2 * h), J(0, j), 1e-8);
      EXPECT_NEAR((pp.z - pm.z) / (2 * h), J(1, j), 1e-8);
      EXPECT_NEAR(normalize_angle(pp.theta - pm.theta) / (2 * h), J(2, j), 1e-8);
    }
  }
}

TEST(Arm, TwistMatchesPoseDifference) {
  const ArmConfig a;
  std::mt19937_64 rng(3);
  ArmState s{random_q(rng), Vec3(0.3, -0.7, 1.1)};
  const double dt = 1e-7;
  const auto [p0, tw] = forward_kinematics(a, s);
  ArmState s1 = s;
  s1.q += s.qd * dt;
  const Pose p1 = tool_pose(a, s1.q);
  EXPECT_NEAR((p1.x - p0.x) / dt, tw.vx, 1e-6);
  EXPECT_NEAR((p1.z - p0.z) / dt, tw.vz, 1e-6);
  EXPECT_NEAR(normalize_angle(p1.theta - p0.theta) / dt, tw.omega, 1e-6);
}

TEST(Arm, BaseRotationMovesTipByRadiusTimesAngle) {
  const ArmConfig a;
  const Vec3 q = inverse_kinematics(a, Pose{0.0, 0.03, 0.0});
  const Pose p0 = tool_pose(a, q);
  const double r = std::hypot(p0.x - a.base_x, p0.z - a.base_z);
  const double delta = 1e-5;
  const Pose p1 = tool_pose(a, q + Vec3(delta, 0, 0));
  EXPECT_NEAR(std::hypot(p1.x - p0.x, p1.z - p0.z), r * delta, r * delta * 1e-4);
}

TEST(Arm, InertiaMatchesKineticEnergyAndIsSpd) {
  const ArmConfig a;
  ArmConfig heavy = a;
  heavy.link_mass = {2.0, 1.5, 0.5};
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (const ArmConfig& cfg : {a, heavy}) {
    for (int t = 0; t < 50; ++t) {
      const Vec3 q = random_q(rng);
      const Vec3 qd(n(rng), n(rng), n(rng));
      const Mat3 H = inertia(cfg, q);
      EXPECT_LE((H - H.transpose()).cwiseAbs().maxCoeff(), 1e-15);
      EXPECT_GT(Eigen::SelfAdjointEigenSolver<Mat3>(H).eigenvalues().minCoeff(), 0.0);
      const double e = 0.5 * qd.dot(H * qd);
      EXPECT_NEAR(e, kinetic_energy_oracle(cfg, q, qd), 1e-7 * std::max(1.0, e));
    }
  }
}

TEST(Controller, IdleIsExactlyStationary) {
  const ControllerConfig cfg;
  ArmState arm;
  arm.q = inverse_kinematics(cfg.arm, Pose{0.004, 0.012, 0.1});
  const ArmState start = arm;
  const Pose p0 = tool_pose(cfg.arm, arm.q);
  const Wrench f{3.25, -7.5, 0.0125};
  for (int i = 0; i < 1000; ++i) arm = control_step(cfg, arm, f, f);
  EXPECT_EQ(arm, start);
  EXPECT_EQ(tool_pose(cfg.arm, arm.q), p0);
}

TEST(Controller, ZeroErrorDecaysVelocityByDampingFactor) {
  const ControllerConfig cfg;
  ArmState arm;
  arm.q = inverse_kinematics(cfg.arm, Pose{0, 0.03, 0});
  arm.qd = Vec3(1.0, -2.0, 0.5);
  const ArmState next = control_step(cfg, arm, Wrench{1, 2, 3}, Wrench{1, 2, 3});
  EXPECT_EQ(next.qd, arm.qd * 0.9);
  EXPECT_EQ(next.q, arm.q + arm.qd * cfg.sim_dt);
}

TEST(Controller, DoublingGainDoublesAcceleration) {
  ControllerConfig cfg;
  const Vec3 q = inverse_kinematics(cfg.arm, Pose{0.01, 0.02, -0.2});
  const Wrench ref{1.5, -4.0, 0.03}, meas{0.25, 1.0, -0.01};
  const Vec3 a1 = joint_acceleration(cfg, q, ref, meas);
  cfg.Kp = Wrench{2.0, 2.0, 2.0};
  EXPECT_EQ(joint_acceleration(cfg, q, ref, meas), 2.0 * a1);
}

TEST(Controller, DownwardReferenceAcceleratesDownward) {
  const ControllerConfig cfg;
  ArmState arm;
  arm.q = inverse_kinematics(cfg.arm, Pose{0, 0.03, 0});
  for (int i = 0; i < 10; ++i) arm = control_step(cfg, arm, Wrench{0, -5, 0}, Wrench{});
  const auto [pose, tw] = forward_kinematics(cfg.arm, arm);
  EXPECT_LT(tw.vz, 0.0);
  EXPECT_LT(pose.z, 0.03);
  EXPECT_NEAR(tw.vx / tw.vz, 0.0, 0.05);
}

TEST(Controller, ConstantReferenceKeepsVelocityBounded) {
  const ControllerConfig cfg;
  ArmState arm;
  arm.q = inverse_kinematics(cfg.arm, Pose{0, 0.03, 0});
  double peak = 0.0;
  for (int i = 0; i < 20000; ++i) {
    arm = control_step(cfg, arm, Wrench{10, -20, 0.2}, Wrench{});
    peak = std::max(peak, arm.qd.cwiseAbs().maxCoeff());
  }
  // |qd| <= d/(1-d) * max|qdd| * dt along the geometric series.
  const Vec3 qdd = joint_acceleration(cfg, arm.q, Wrench{10, -20, 0.2}, Wrench{});
  EXPECT_TRUE(std::isfinite(peak));
  EXPECT_LT(peak, 100.0 * 9.0 * qdd.cwiseAbs().maxCoeff() * cfg.sim_dt);
}

TEST(Controller, MatchedTerminalSpeed) {
  const SimConfig sim;
  const ControllerConfig cfg = matched_controller(sim);
  ArmState arm;
  arm.q = inverse_kinematics(cfg.arm, Pose{0, 0.03, 0});
  for (int i = 0; i < 2000; ++i) arm = control_step(cfg, arm, Wrench{0, -5, 0}, Wrench{});
  const auto [pose, tw] = forward_kinematics(cfg.arm, arm, cfg.sim_dt * cfg.control_rate);
  // The free sim part settles at f / lin_damping; light links perturb this slightly.
  EXPECT_NEAR(tw.vz, -5.0 / sim.lin_damping, 0.05 * 5.0 / sim.lin_damping);
}

TEST(Controller, SingularInertiaIsRegularized) {
  ControllerConfig cfg;
  cfg.arm.link_mass = {0.0, 0.0, 0.0};
  ControlStats stats;
  // Stretched arm: the x row of J vanishes and H = J^T M J is singular.
  const Vec3 qdd = joint_acceleration(cfg, Vec3::Zero(), Wrench{0, 1, 0}, Wrench{}, &stats);
  EXPECT_TRUE(qdd.allFinite());
  EXPECT_EQ(stats.regularized, 1);
}

TEST(Controller, RejectsNonFinite) {
  const ControllerConfig cfg;
  ArmState arm;
  EXPECT_THROW(control_step(cfg, arm, Wrench{std::nan(""), 0, 0}, Wrench{}), NumericError);
}

TEST(Controller, PostScale) {
  const Wrench w{4.0, -8.0, 0.1};
  EXPECT_EQ(post_scale(w, 0.5), (Wrench{2.0, -4.0, 0.05}));
  EXPECT_EQ(post_scale(w, 1.0), w);
  EXPECT_EQ(post_scale(w, 0.0), Wrench{});
  EXPECT_THROW(post_scale(w, 1.5), ConfigError);
  // Zero reference composed with the damping brings a moving arm to rest.
  const ControllerConfig cfg;
  ArmState arm;
  arm.q = inverse_kinematics(cfg.arm, Pose{0, 0.03, 0});
  arm.qd = Vec3(0.5, 0.5, -0.5);
  for (int i = 0; i < 500; ++i) arm = control_step(cfg, arm, post_scale(w, 0.0), Wrench{});
  EXPECT_LT(arm.qd.norm(), 1e-20);
}

TEST(Controller, RateContract) {
  ControllerConfig cfg;
  EXPECT_EQ(cfg.steps_per_tick(), 100);
  cfg.model_rate = 5;
  cfg.control_rate = 500;
  EXPECT_EQ(cfg.steps_per_tick(), 100);
  cfg.control_rate = 502;
  EXPECT_THROW(cfg.steps_per_tick(), ConfigError);

  const SimConfig sim;
  const ControllerConfig c2 = matched_controller(sim);
  ZeroPolicy zero;
  DeployConfig dc;
  dc.max_time = 0.5;
  std::mt19937_64 rng(5);
  const Pose start{0.003, 0.03, 0.05};
  const EpisodeLog log = deploy(zero, sim, c2, start, dc, rng);
  EXPECT_EQ(log.outcome, Outcome::timeout);
  EXPECT_EQ(log.model_ticks, 50);
  EXPECT_EQ(log.control_steps, log.model_ticks * c2.steps_per_tick());
  // Out of contact with zero reference the tool never moves.
  for (const auto& r : log.rows) EXPECT_EQ(r.pose, log.rows.front().pose);
  EXPECT_EQ(log.rows.size(), 51u);
}

TEST(Deploy, DeterministicForFixedSeed) {
  const SimConfig sim;
  const ControllerConfig cfg = matched_controller(sim);
  DeployConfig dc;
  dc.max_time = 1.0;
  for (double temperature : {0.0, 1.0}) {
    ModelPolicy a(untrained_checkpoint(), Encoding::incremental, temperature);
    ModelPolicy b(untrained_checkpoint(), Encoding::incremental, temperature);
    std::mt19937_64 ra(9), rb(9);
    const Pose start{0.005, 0.03, 0.1};
    const auto la = deploy(a, sim, cfg, start, dc, ra);
    const auto lb = deploy(b, sim, cfg, start, dc, rb);
    ASSERT_EQ(la.rows.size(), lb.rows.size());
    EXPECT_EQ(episode_csv(la), episode_csv(lb));
    for (const auto& r : la.rows) EXPECT_GT(r.inertia_min_eig, 0.0);
  }
}

TEST(Deploy, IncrementalStateEqualsRecomputation) {
  const SimConfig sim;
  const ControllerConfig cfg = matched_controller(sim);
  ModelPolicy policy(untrained_checkpoint(), Encoding::incremental, 1.0);
  DeployConfig dc;
  dc.max_time = 0.4;
  std::mt19937_64 rng(10);
  deploy(policy, sim, cfg, Pose{-0.004, 0.025, -0.1}, dc, rng);
  ASSERT_EQ(policy.history().size(), 40u);
  std::vector<net::Matrix> seq(policy.history().begin(), policy.history().end());
  const auto fw = net::forward(policy.checkpoint().params.lstm, seq);
  EXPECT_EQ(fw.state.h, policy.state().h);
  EXPECT_EQ(fw.state.c, policy.state().c);
}

TEST(Deploy, WindowEncodingUsesLastInputs) {
  const train::Checkpoint ck = untrained_checkpoint();
  ModelPolicy policy(ck, Encoding::window, 0.0);
  std::mt19937_64 rng(11);
  Wrench w;
  Pose p{0.001, 0.02, 0.0};
  for (int i = 0; i < 12; ++i) {
    p.x += 0.001;
    w = policy.act(p, Twist{}, w, rng);
  }
  EXPECT_EQ(policy.history().size(), 6u);
  // The last answer equals a fresh encoding of the stored window.
  std::vector<net::Matrix> seq(policy.history().begin(), policy.history().end());
  const auto fw = net::forward(ck.params.lstm, seq);
  const auto mix = net::head_forward(ck.params.head, fw.state);
  const Eigen::VectorXd y = net::sample(mix, rng, 0.0);
  EXPECT_EQ(w, Wrench::from_array({y[0], y[1], y[2]}));
}

TEST(Deploy, DimensionGuard) {
  EXPECT_THROW(ModelPolicy(untrained_checkpoint(6), Encoding::incremental, 1.0), DimensionError);
}

TEST(Deploy, CutoffCountsAsFailure) {
  const SimConfig sim;
  const ControllerConfig cfg = matched_controller(sim);
  ZeroPolicy zero;
  DeployConfig dc;
  dc.max_time = 0.25;
  std::mt19937_64 rng(12);
  const auto log = deploy(zero, sim, cfg, Pose{0.0, 0.03, 0.0}, dc, rng);
  EXPECT_FALSE(log.success());
  EXPECT_DOUBLE_EQ(log.duration, 0.25);
}

TEST(Deploy, ThresholdCrossingEndsWithSuccess) {
  // Starting inside the success radius ends immediately.
  const SimConfig sim;
  const ControllerConfig cfg = matched_controller(sim);
  ZeroPolicy zero;
  std::mt19937_64 rng(13);
  const auto log = deploy(zero, sim, cfg, Pose{0.0, 0.0005, 0.0}, DeployConfig{}, rng);
  EXPECT_TRUE(log.success());
  EXPECT_EQ(log.control_steps, 0);
}

TEST(Evaluate, ZeroBaselineNeverSucceedsAndWorkersAgree) {
  const SimConfig sim;
  const ControllerConfig cfg = matched_controller(sim);
  EvalConfig ec;
  ec.trials = 4;
  ec.max_time = 0.5;
  const PolicyFactory zero = [] { return std::make_unique<ZeroPolicy>(); };
  const EvalReport one = evaluate(zero, "zero", sim, cfg, ec);
  EXPECT_EQ(one.successes, 0);
  ec.workers = 3;
  EXPECT_EQ(evaluate(zero, "zero", sim, cfg, ec), one);
  const auto j = to_json(one);
  EXPECT_EQ(j["trials"], 4);
  EXPECT_EQ(j["results"].size(), 4u);
  // 10 Hz trace over 0.5 s: t = 0, 0.1, ..., 0.4 and the final row at 0.5
  for (const auto& r : one.results) {
    ASSERT_EQ(r.trace.size(), 6u);
    EXPECT_NEAR(r.trace.front(), goal_distance(r.start), 1e-12);  // through IK and FK
    EXPECT_EQ(r.trace.back(), r.final_distance);
  }
  ec.trace_rate = 0.0;
  EXPECT_TRUE(evaluate(zero, "zero", sim, cfg, ec).results[0].trace.empty());
}

TEST(Evaluate, CompletionTimeOutliers) {
  std::vector<TrialResult> rs;
  const double times[] = {10, 11, 12, 13, 14, 40, 3};
  for (int i = 0; i < 7; ++i) {
    TrialResult r;
    r.index = i;
    r.duration = times[i];
    r.outcome = i == 6 ? Outcome::timeout : Outcome::success;
    rs.push_back(r);
  }
  // sorted successes 10..14, 40: Q1 = 11.25, Q3 = 13.75, upper whisker 17.5
  EXPECT_EQ(completion_time_outliers(rs), std::vector<int>{5});
  rs[5].duration = 17.5;
  EXPECT_TRUE(completion_time_outliers(rs).empty());
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4}, 0.5), 2.5);
}

TEST(Evaluate, ReplayPolicyPlaysRecordedCommands) {
  const Dataset ds = generate_demos(SimConfig{}, 1, 21);
  ReplayPolicy replay(ds.demos[0]);
  std::mt19937_64 rng(1);
  replay.reset();
  for (const auto& s : ds.demos[0].samples) EXPECT_EQ(replay.act(Pose{}, Twist{}, Wrench{}, rng), s.wrench);
  EXPECT_EQ(replay.act(Pose{}, Twist{}, Wrench{}, rng), Wrench{});
  replay.reset();
  EXPECT_EQ(replay.act(Pose{}, Twist{}, Wrench{}, rng), ds.demos[0].samples[0].wrench);
}
