// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "pfs/app/demonstrator.hpp"
#include "pfs/app/evaluate.hpp"
#include "pfs/control/deploy.hpp"
#include "pfs/demos/analysis.hpp"
#include "pfs/net/model.hpp"
#include "pfs/train/checkpoint.hpp"
#include "pfs/train/grad_check.hpp"
#include "pfs/train/trainer.hpp"

using namespace pfs;
using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int prec = 4) {
  std::ostringstream o;
  o.precision(prec);
  o << v;
  return o.str();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("pfs_acceptance_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// ---- 1 ----
Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240501);
  train::GradCheckShape sh;  // m 8, k 3, d 3, N 5, inputs 10, batch 2
  double worst = 0.0;
  std::size_t coords = 0;
  std::string where;
  for (int i = 0; i < 20; ++i) {
    const auto r = train::random_grad_check(sh, rng, 1e-5);
    coords += r.checked;
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      where = r.worst_tensor + "[" + std::to_string(r.worst_index) + "]";
    }
  }
  const double secs = seconds_since(t0);
  // same instances with the difference quotient evaluated in plain double
  std::mt19937_64 rng2(20240501);
  double worst_double = 0.0;
  for (int i = 0; i < 20; ++i)
    worst_double = std::max(worst_double, train::random_grad_check<double>(sh, rng2, 1e-5).max_rel_error);
  return {worst < 1e-6 && secs < 30.0,
          "max rel err " + num(worst) + " at " + where + " over 20 instances / " + std::to_string(coords) +
              " coords, " + num(secs, 3) + " s (limit 1e-6, 30 s; double-evaluated quotient: " + num(worst_double) +
              ")"};
}

// ---- 2 ----
Outcome mixture_validity() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> scale(0.1, 30.0), wide(-500.0, 500.0);
  std::normal_distribution<double> n01;
  double worst_sum = 0.0, min_sigma = INFINITY;
  const int m = 16, c = 10, k = 4, d = 3;
  for (int t = 0; t < 10000; ++t) {
    net::NetParams p = net::init_net(m, c, k, d, rng);
    p.head.Wz *= scale(rng);
    for (auto& w : p.lstm.W) w *= scale(rng) / 10.0;
    std::vector<net::Matrix> seq(6, net::Matrix(c, 1));
    for (auto& x : seq) x = x.unaryExpr([&](double) { return 3.0 * n01(rng); });
    const auto mix = net::head_forward(p.head, net::forward(p.lstm, seq).state);
    worst_sum = std::max(worst_sum, std::abs(mix.alpha.sum() - 1.0));
    min_sigma = std::min(min_sigma, mix.sigma.minCoeff());
  }
  int nonfinite = 0;
  for (int t = 0; t < 10000; ++t) {
    net::Vector z(k * (d + 2)), y(d);
    for (auto& v : z) v = wide(rng);
    for (auto& v : y) v = wide(rng);
    const auto mix = net::mixture_from_logits(z, k, d);
    worst_sum = std::max(worst_sum, std::abs(mix.alpha.sum() - 1.0));
    min_sigma = std::min(min_sigma, mix.sigma.minCoeff());
    if (!std::isfinite(net::nll_loss(mix, y)) || !net::nll_grad_logits(z, mix, y).allFinite()) ++nonfinite;
  }
  return {worst_sum <= 1e-12 && min_sigma >= net::kSigmaFloor && nonfinite == 0,
          "max |sum(alpha)-1| " + num(worst_sum) + ", min sigma " + num(min_sigma) + ", non-finite NLL " +
              std::to_string(nonfinite) + " of 1e4 logit draws in [-500, 500]"};
}

// ---- 3 ----
Outcome density_normalization() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    net::Vector z(3 * 4);
    for (auto& v : z) v = u(rng);
    const auto mix = net::mixture_from_logits(z, 3, 2);
    const double smax = mix.sigma.maxCoeff(), smin = mix.sigma.minCoeff();
    const double lo = mix.mu.minCoeff() - 9.0 * smax, hi = mix.mu.maxCoeff() + 9.0 * smax;
    const int n = static_cast<int>(std::ceil((hi - lo) / (smin / 6.0)));
    const double h = (hi - lo) / n;
    double total = 0.0;
    net::Vector y(2);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        y << lo + (a + 0.5) * h, lo + (b + 0.5) * h;
        total += net::mixture_density(mix, y);
      }
    worst = std::max(worst, std::abs(total * h * h - 1.0));
  }
  return {worst <= 1e-3, "max |integral - 1| " + num(worst) + " over 20 random k=3, d=2 mixtures (limit 1e-3)"};
}

// ---- 4 ----
Outcome stepwise_equivalence() {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01;
  int cases = 0, mismatched = 0;
  for (int t = 0; t < 10; ++t)
    for (int batch : {1, 3, 8}) {
      auto p = net::init_lstm(8 + 4 * (t % 3), 10, rng);
      if (t % 2) for (auto& w : p.W) w *= 5.0;
      std::vector<net::Matrix> seq(50, net::Matrix(10, batch));
      for (auto& x : seq) x = x.unaryExpr([&](double) { return 2.0 * n01(rng); });
      const auto fw = net::forward(p, seq);
      net::LstmState s = net::LstmState::zeros(p.hidden(), batch);
      for (const auto& x : seq) s = net::step(p, x, s);
      ++cases;
      if (!(s.h == fw.state.h) || !(s.c == fw.state.c)) ++mismatched;
    }
  return {mismatched == 0, std::to_string(cases - mismatched) + "/" + std::to_string(cases) +
                               " length-50 sequences bit-identical (h and c)"};
}

// ---- 5, 6, 7 share one dataset and one quartile suite ----

struct Experiment {
  Dataset ds;
  train::QuartileSuite suite;
  double all_train_seconds = 0.0;
  SimConfig sim;
  control::ControllerConfig ctrl;
  std::map<std::string, EvalReport> reports;
  double generation_seconds = 0.0;
};

constexpr int kExperimentSteps = 1500;

Experiment& experiment() {
  static std::optional<Experiment> ex;
  if (ex) return *ex;
  ex.emplace();
  auto t0 = Clock::now();
  ex->ds = generate_demos(ex->sim, 200, 1);
  ex->generation_seconds = seconds_since(t0);
  ex->ctrl = control::matched_controller(ex->sim);
  train::Hyper h;  // k 4, N 25, lr 5e-4, batch 128
  h.steps = kExperimentSteps;
  // a model's clock starts when the previous one reported its last point
  std::map<std::string, Clock::time_point> started, finished;
  Clock::time_point last = Clock::now();
  ex->suite = train::train_quartile_suite(ex->ds, h, [&](const std::string& name, const train::CurvePoint& p) {
    if (!started.count(name)) started[name] = last;
    finished[name] = last = Clock::now();
    if (!std::isnan(p.eval_loss))
      std::cerr << "  [" << name << "] step " << p.step << " held-out NLL " << num(p.eval_loss) << "\n";
  });
  ex->all_train_seconds = std::chrono::duration<double>(finished["all"] - started["all"]).count();
  return *ex;
}

const train::TrainResult& all_model() {
  const auto& m = experiment().suite.models.back();
  if (m.name != "all" || !m.result) throw std::runtime_error("full-dataset model missing");
  return *m.result;
}

const EvalReport& report_for(const std::string& name, const PolicyFactory& make) {
  Experiment& ex = experiment();
  auto it = ex.reports.find(name);
  if (it != ex.reports.end()) return it->second;
  EvalConfig ec;  // 30 trials, 1 mm, 30 s
  const EvalReport rep = evaluate(make, name, ex.sim, ex.ctrl, ec);
  std::cerr << "  eval " << name << ": " << rep.successes << "/" << rep.trials << "\n";
  return ex.reports.emplace(name, rep).first->second;
}

PolicyFactory model_factory(const train::Checkpoint& ck) {
  return [ck] { return std::make_unique<control::ModelPolicy>(ck, control::Encoding::incremental, ck.hyper.temperature); };
}

Outcome training_efficacy() {
  const auto& s = all_model().checkpoint.summary;
  const Experiment& ex = experiment();
  const double ratio = s.final_eval_loss / s.initial_eval_loss;
  const bool ok = s.initial_eval_loss > 0 && s.final_eval_loss <= 0.5 * s.initial_eval_loss &&
                  s.steps <= 5000 && ex.all_train_seconds < 600.0;
  return {ok, "held-out NLL " + num(s.initial_eval_loss) + " -> " + num(s.final_eval_loss) + " (ratio " +
                  num(ratio) + ", limit 0.5) after " + std::to_string(s.steps) + " steps on " +
                  std::to_string(s.train_demos) + "+" + std::to_string(s.heldout_demos) + " demos, " +
                  num(ex.all_train_seconds, 3) + " s"};
}

Outcome closed_loop_success() {
  const EvalReport& model = report_for("all", model_factory(all_model().checkpoint));
  const EvalReport& zero = report_for("zero", [] { return std::make_unique<control::ZeroPolicy>(); });
  return {model.success_rate >= 0.7 && zero.successes == 0,
          "model " + std::to_string(model.successes) + "/30 (limit >= 70%), mean completion " +
              num(model.mean_success_time) + " s; zero-wrench baseline " + std::to_string(zero.successes) + "/30"};
}

Outcome quartile_ordering() {
  Experiment& ex = experiment();
  std::map<std::string, double> rate;
  std::string line;
  for (const auto& m : ex.suite.models) {
    if (!m.result) return {false, m.name + " could not be trained: " + m.warning};
    rate[m.name] = report_for(m.name, model_factory(m.result->checkpoint)).success_rate;
    line += m.name + " " + num(100 * rate[m.name], 3) + "% ";
  }
  const double last = rate["Q3-inf"];
  bool unique_best = true;
  for (const auto& [name, r] : rate)
    if (name != "Q3-inf" && r >= last) unique_best = false;
  return {rate["all"] >= last && !unique_best,
          line + "(need all >= Q3-inf and Q3-inf not the unique best)"};
}

// ---- 8 ----
Outcome controller_idle() {
  const SimConfig sim;
  const control::ControllerConfig cfg = control::matched_controller(sim);
  const double rate_scale = cfg.sim_dt * cfg.control_rate;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Pose> poses;
  for (int i = 0; i < 6; ++i) poses.push_back(random_start(sim, rng).pose);
  poses.push_back({0.0, 0.0, 0.0});  // seated: in contact with the hole floor
  poses.push_back({0.0049, 0.011, 0.05});  // on the chamfer
  int moved = 0, contact_cases = 0, runs = 0;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    for (int variant = 0; variant < 2; ++variant) {
      control::ArmState arm;
      arm.q = control::inverse_kinematics(cfg.arm, poses[i]);
      const control::ArmState start = arm;
      const Pose p0 = control::forward_kinematics(cfg.arm, arm, rate_scale).first;
      const Wrench offset = variant ? Wrench{5.0 * u(rng), 5.0 * u(rng), 0.1 * u(rng)} : Wrench{};
      bool touched = false;
      for (int k = 0; k < 1000; ++k) {
        const auto [pose, twist] = control::forward_kinematics(cfg.arm, arm, rate_scale);
        const Wrench f_meas = -contact_resolve(pose, twist, sim) + offset;
        touched |= !(f_meas == offset);
        arm = control::control_step(cfg, arm, f_meas, f_meas);
      }
      ++runs;
      contact_cases += touched;
      const Pose p1 = control::forward_kinematics(cfg.arm, arm, rate_scale).first;
      if (!(arm.q == start.q) || !(arm.qd == start.qd) || !(p1 == p0)) ++moved;
    }
  }
  return {moved == 0 && contact_cases > 0,
          std::to_string(runs - moved) + "/" + std::to_string(runs) +
              " runs of 1000 control steps with f_ref = f_meas left q, qd and the tool pose bit-identical (" +
              std::to_string(contact_cases) + " in contact)"};
}

// ---- 9 ----
struct PipelineRun {
  train::LearningCurve curve;
  EvalReport report;
  std::string checkpoint_text;
};

PipelineRun pipeline(const fs::path& dir) {
  const SimConfig sim;
  write_dataset(generate_demos(sim, 40, 77), dir / "demos");
  const Dataset ds = read_dataset(dir / "demos");
  train::Hyper h;
  h.m = 16;
  h.steps = 200;
  h.eval_every = 50;
  h.seed = 77;
  h.workers = 1;
  PipelineRun run;
  const auto tr = train::train(ds, h);
  run.curve = tr.curve;
  train::save_checkpoint(tr.checkpoint, dir / "model.ckpt.json");
  const train::Checkpoint ck = train::load_checkpoint(dir / "model.ckpt.json");
  run.checkpoint_text = train::to_json_text(ck);
  EvalConfig ec;
  ec.trials = 8;
  ec.max_time = 10.0;
  ec.seed = 77;
  ec.workers = 1;
  run.report = evaluate(model_factory(ck), "model", sim, control::matched_controller(sim), ec);
  return run;
}

Outcome determinism() {
  const PipelineRun a = pipeline(scratch("det_a"));
  const PipelineRun b = pipeline(scratch("det_b"));
  const bool same_curve = a.curve == b.curve;
  const bool same_report = a.report == b.report && to_json(a.report) == to_json(b.report);
  const bool same_ck = a.checkpoint_text == b.checkpoint_text;
  return {same_curve && same_report && same_ck && !a.curve.empty(),
          std::string("loss trace (") + std::to_string(a.curve.size()) + " points) " +
              (same_curve ? "identical" : "DIFFERS") + ", checkpoint " + (same_ck ? "identical" : "DIFFERS") +
              ", eval report (" + std::to_string(a.report.successes) + "/" + std::to_string(a.report.trials) +
              ") " + (same_report ? "identical" : "DIFFERS")};
}

// ---- 10 ----
std::string mutate(std::string s, std::mt19937_64& rng) {
  const int edits = 1 + static_cast<int>(rng() % 4);
  for (int e = 0; e < edits; ++e) {
    if (s.empty()) {
      s.push_back(static_cast<char>(rng()));
      continue;
    }
    const std::size_t at = rng() % s.size();
    switch (rng() % 7) {
      case 0: s[at] = static_cast<char>(rng()); break;
      case 1: s.erase(at, 1 + rng() % 16); break;
      case 2: s.insert(at, 1, "{}[],:\"-.eE0123456789\n"[rng() % 22]); break;
      case 3: s.resize(at); break;
      case 4: {  // duplicate a line
        const auto b = s.rfind('\n', at), en = s.find('\n', at);
        const std::size_t from = b == std::string::npos ? 0 : b + 1;
        s.insert(from, s.substr(from, (en == std::string::npos ? s.size() : en + 1) - from));
        break;
      }
      case 5:
        if (std::isdigit(static_cast<unsigned char>(s[at]))) s[at] = static_cast<char>('0' + rng() % 10);
        break;
      default: s.insert(at, std::string(1 + rng() % 8, static_cast<char>(rng()))); break;
    }
  }
  return s;
}

template <class Parse>
void fuzz(const std::string& base, int n, std::uint64_t seed, Parse parse, int& accepted, int& typed,
          int& untyped, std::string& first_untyped) {
  std::mt19937_64 rng(seed);
  for (int i = 0; i < n; ++i) {
    const std::string text = mutate(base, rng);
    try {
      parse(text);
      ++accepted;
    } catch (const FormatError&) {
      ++typed;
    } catch (const std::exception& e) {
      if (untyped++ == 0) first_untyped = e.what();
    }
  }
}

Outcome format_round_trips() {
  // demonstrations: a generated one plus one with awkward but finite values
  Dataset ds = generate_demos(SimConfig{}, 3, 10);
  Demonstration odd = ds.demos[0];
  odd.id = "odd";
  odd.samples[0].pose.x = -0.0;
  odd.samples[0].twist.vx = 4.9e-324;
  odd.samples[0].wrench.fx = 1.7976931348623157e308;
  odd.samples[1].wrench.tau = -2.2250738585072014e-308;
  odd.samples[1].pose.theta = 0.1 + 0.2;
  ds.demos.push_back(odd);
  int demo_exact = 0;
  for (const auto& d : ds.demos) {
    std::stringstream ss;
    write_demo(d, ss);
    const Demonstration back = read_demo(ss);
    bool bits = back == d;
    for (std::size_t i = 0; bits && i < d.size(); ++i)
      bits = std::signbit(back.samples[i].pose.x) == std::signbit(d.samples[i].pose.x);
    demo_exact += bits;
  }
  const fs::path dir = scratch("roundtrip");
  write_dataset(ds, dir / "demos");
  const bool dataset_exact = read_dataset(dir / "demos").demos == ds.demos;

  // checkpoints: a trained-shape random network with awkward values
  std::mt19937_64 rng(10);
  train::Checkpoint ck;
  ck.params = net::init_net(16, feature::count, 4, feature::wrench_dim, rng);
  ck.params.head.Wz(0, 0) = -0.0;
  ck.params.head.Wz(1, 0) = 4.9e-324;
  ck.params.lstm.b[0][0] = 1.7976931348623157e308;
  ck.N = 25;
  ck.norm.mean = Eigen::VectorXd::Constant(feature::count, 0.1);
  ck.norm.stddev = Eigen::VectorXd::Constant(feature::count, 0.3);
  ck.hyper.seed = 18446744073709551615ull;
  ck.sim_config_hash = config_hash(SimConfig{});
  ck.summary.initial_eval_loss = 4.25;
  ck.summary.final_eval_loss = -1.0 / 3.0;
  const std::string ck_text = train::to_json_text(ck);
  const train::Checkpoint ck_back = train::checkpoint_from_json_text(ck_text);
  const bool ck_exact = ck_back == ck && std::signbit(ck_back.params.head.Wz(0, 0)) &&
                        train::to_json_text(ck_back) == ck_text;
  train::save_checkpoint(ck, dir / "c.ckpt.json");
  const bool ck_file_exact = train::load_checkpoint(dir / "c.ckpt.json") == ck;

  std::stringstream demo_text;
  write_demo(ds.demos[0], demo_text);
  int acc_d = 0, typed_d = 0, untyped_d = 0, acc_c = 0, typed_c = 0, untyped_c = 0;
  std::string first_d, first_c;
  fuzz(demo_text.str(), 1000, 101, [](const std::string& t) {
    std::istringstream in(t);
    read_demo(in);
  }, acc_d, typed_d, untyped_d, first_d);
  fuzz(ck_text, 1000, 202, [](const std::string& t) { train::checkpoint_from_json_text(t); }, acc_c, typed_c,
       untyped_c, first_c);

  const bool ok = demo_exact == static_cast<int>(ds.size()) && dataset_exact && ck_exact && ck_file_exact &&
                  untyped_d == 0 && untyped_c == 0;
  std::string detail = "round trips: demos " + std::to_string(demo_exact) + "/" + std::to_string(ds.size()) +
                       " exact, dataset " + (dataset_exact ? "exact" : "DIFFERS") + ", checkpoint " +
                       (ck_exact && ck_file_exact ? "exact" : "DIFFERS") + "; fuzz demos: " +
                       std::to_string(typed_d) + " typed errors, " + std::to_string(acc_d) + " accepted, " +
                       std::to_string(untyped_d) + " other; checkpoints: " + std::to_string(typed_c) +
                       " typed errors, " + std::to_string(acc_c) + " accepted, " + std::to_string(untyped_c) +
                       " other";
  if (!first_d.empty()) detail += " [demo: " + first_d + "]";
  if (!first_c.empty()) detail += " [checkpoint: " + first_c + "]";
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradient_correctness},
      {"mixture validity", mixture_validity},
      {"density normalization", density_normalization},
      {"stepwise/batch LSTM equivalence", stepwise_equivalence},
      {"training efficacy", training_efficacy},
      {"closed-loop success", closed_loop_success},
      {"quartile ordering", quartile_ordering},
      {"controller idle", controller_idle},
      {"determinism", determinism},
      {"format round trips", format_round_trips},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": "
              << o.detail << " [" << num(seconds_since(t0), 3) << " s]" << std::endl;
  }
  std::error_code ec;
  fs::remove_all(fs::temp_directory_path() / ("pfs_acceptance_" + std::to_string(::getpid())), ec);
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << std::endl;
  return failed ? 1 : 0;
}
