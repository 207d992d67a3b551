// pfs: demonstrations, training, evaluation and teleoperation from one binary.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pfs/app/demonstrator.hpp"
#include "pfs/app/evaluate.hpp"
#include "pfs/control/deploy.hpp"
#include "pfs/demos/analysis.hpp"
#include "pfs/train/checkpoint.hpp"
#include "pfs/train/grad_check.hpp"
#include "pfs/train/trainer.hpp"
#include "pfs/teleop/server.hpp"

namespace fs = std::filesystem;
using namespace pfs;

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kConfig = 2, kFormat = 3, kNumeric = 4, kDimension = 5 };

struct Global {
  std::uint64_t seed = 1;
  std::string sim_config;
  std::string data_dir;
  int workers = 1;
  bool quiet = false;

  SimConfig sim() const { return sim_config.empty() ? SimConfig{} : load_sim_config(sim_config); }
  fs::path data(const std::string& leaf) const { return fs::path(data_dir) / leaf; }
};

Global G;

void note(const std::string& s) {
  if (!G.quiet) std::cerr << s << '\n';
}

void warn(const std::string& s) { std::cerr << "warning: " << s << '\n'; }

std::string fmt(double v) { return pfs::detail::format_double(v); }

/// For console summaries.
std::string brief(double v) {
  std::ostringstream o;
  o << std::setprecision(4) << v;
  return o.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatError::Kind::io, "cannot write " + path.string());
  out << text;
  if (!out) throw FormatError(FormatError::Kind::io, "write failed for " + path.string());
}

std::string path_or(const std::string& given, const fs::path& fallback) {
  return given.empty() ? fallback.string() : given;
}

/// Training uses successful demonstrations only.
Dataset load_training_set(const std::string& dir) {
  Dataset all = read_dataset(dir);
  Dataset ds;
  for (auto& d : all.demos)
    if (d.success) ds.demos.push_back(std::move(d));
  if (ds.size() != all.size()) warn("skipped " + std::to_string(all.size() - ds.size()) + " unsuccessful demos");
  if (ds.empty()) throw ConfigError("no successful demonstrations in " + dir);
  for (const auto& d : ds.demos)
    if (d.sim_config_hash != ds.demos.front().sim_config_hash) {
      warn("demonstrations were recorded under different sim configs");
      break;
    }
  return ds;
}

// ---- gen-demos ----

struct GenOpts {
  std::size_t count = 200;
  std::string out;
  bool white_noise = false;
  double noise_scale = 1.0;
  double max_time = 60.0;
};

int gen_demos(const GenOpts& o) {
  const SimConfig sim = G.sim();
  DemonstratorConfig dc;
  dc.white_noise = o.white_noise;
  dc.noise_scale = o.noise_scale;
  dc.max_time = o.max_time;
  GenerationStats st;
  const Dataset ds = generate_demos(sim, o.count, G.seed, dc, &st);
  const fs::path out = path_or(o.out, G.data("demos"));
  if (fs::exists(out / "manifest.json")) throw ConfigError(out.string() + " already holds a dataset");
  write_dataset(ds, out);
  save_sim_config(sim, (out / "sim_config.txt").string());
  double sum = 0, sq = 0;
  for (const auto& d : ds.demos) sum += d.duration();
  const double mean = sum / static_cast<double>(ds.size());
  for (const auto& d : ds.demos) sq += (d.duration() - mean) * (d.duration() - mean);
  std::cout << "wrote " << ds.size() << " demonstrations to " << out.string() << " (" << st.successes << " of "
            << st.attempts << " attempts succeeded; duration mean " << brief(mean) << " s, std "
            << brief(std::sqrt(sq / static_cast<double>(ds.size()))) << " s)\n";
  return kOk;
}

// ---- analyze ----

struct AnalyzeOpts {
  std::string demos;
  std::string grid = "180x60";
  std::string feature = "fz";
  std::string out;
  int bands = 0;
  std::string bands_out;
  std::string durations_out;
};

int analyze(const AnalyzeOpts& o) {
  const Dataset ds = read_dataset(path_or(o.demos, G.data("demos")));
  if (ds.empty()) throw ConfigError("dataset is empty");
  const auto f = parse_sample_feature(o.feature);
  if (!f) throw ConfigError("unknown feature '" + o.feature + "'");
  int w = 0, h = 0;
  char x = 0;
  std::istringstream gs(o.grid);
  if (!(gs >> w >> x >> h) || x != 'x' || w < 1 || h < 1 || !gs.eof())
    throw ConfigError("--grid must look like 180x60");

  const DurationPartition part = partition_by_duration(ds);
  std::vector<double> dur;
  for (const auto& d : ds.demos) dur.push_back(d.duration());
  std::sort(dur.begin(), dur.end());
  std::cout << "demos " << ds.size() << ", duration min " << brief(dur.front()) << " s, Q1 " << brief(part.q1)
            << " s, median " << brief(part.q2) << " s, Q3 " << brief(part.q3) << " s, max " << brief(dur.back())
            << " s\n";
  for (std::size_t i = 0; i < part.parts.size(); ++i)
    std::cout << "  " << part.names[i] << ": " << part.parts[i].size() << " demos\n";

  const OccurrenceGrid g = occurrence_grid(ds, *f, w, h);
  std::string csv = "col,row,goal_distance,value,count\n";
  const double dw = (g.dist_hi - g.dist_lo) / w, vh = (g.value_hi - g.value_lo) / h;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      csv += std::to_string(c) + "," + std::to_string(r) + "," + fmt(g.dist_lo + (c + 0.5) * dw) + "," +
             fmt(g.value_lo + (r + 0.5) * vh) + "," + std::to_string(g.at(c, r)) + "\n";
  const fs::path out = path_or(o.out, G.data("grid_" + o.feature + ".csv"));
  write_text(out, csv);
  std::cout << "occurrence grid " << w << "x" << h << " of " << o.feature << " (" << g.total() << " samples) -> "
            << out.string() << "\n";

  if (o.bands > 0) {
    std::string b = "dist_lo,dist_hi,count,min,max,mean\n";
    for (const auto& band : band_plot(ds, *f, o.bands))
      b += fmt(band.lo) + "," + fmt(band.hi) + "," + std::to_string(band.count) + "," +
           (band.empty() ? ",," : fmt(band.min) + "," + fmt(band.max) + "," + fmt(band.mean)) + "\n";
    const fs::path bo = path_or(o.bands_out, G.data("bands_" + o.feature + ".csv"));
    write_text(bo, b);
    std::cout << "band plot -> " << bo.string() << "\n";
  }
  if (!o.durations_out.empty()) {
    std::string d = "id,duration,samples\n";
    for (const auto& demo : ds.demos)
      d += demo.id + "," + fmt(demo.duration()) + "," + std::to_string(demo.size()) + "\n";
    write_text(o.durations_out, d);
  }
  return kOk;
}

// ---- train / train-quartiles ----

struct TrainOpts {
  std::string demos;
  std::string out;
  std::string curve;
  train::Hyper hyper;
};

void add_hyper_flags(CLI::App* c, train::Hyper& h) {
  c->add_option("--k", h.k, "Mixture components")->capture_default_str();
  c->add_option("--n", h.N, "History length N (windows hold N+1 inputs)")->capture_default_str();
  c->add_option("--hidden", h.m, "LSTM cells")->capture_default_str();
  c->add_option("--lr", h.learning_rate, "Adam learning rate")->capture_default_str();
  c->add_option("--batch", h.batch_size, "Minibatch size")->capture_default_str();
  c->add_option("--steps", h.steps, "Optimizer steps")->capture_default_str();
  c->add_option("--eval-every", h.eval_every, "Held-out evaluation period")->capture_default_str();
  c->add_option("--eval-windows", h.eval_windows, "Held-out windows per evaluation")->capture_default_str();
  c->add_option("--holdout", h.holdout_fraction, "Fraction of demos held out")->capture_default_str();
  c->add_option("--clip", h.clip_norm, "Global gradient norm clip")->capture_default_str();
  c->add_option("--input-noise", h.input_noise, "Noise std on normalized wrench inputs")->capture_default_str();
  c->add_option("--temperature", h.temperature, "Default sampling temperature stored in the checkpoint")
      ->capture_default_str();
}

train::ProgressFn progress_printer(const std::string& tag) {
  return [tag](const train::CurvePoint& p) {
    if (!std::isnan(p.eval_loss))
      note(tag + "step " + std::to_string(p.step) +
           (std::isnan(p.batch_loss) ? std::string() : "  batch " + brief(p.batch_loss)) + "  held-out " +
           brief(p.eval_loss));
  };
}

int train_cmd(TrainOpts o) {
  o.hyper.seed = G.seed;
  o.hyper.workers = G.workers;
  const Dataset ds = load_training_set(path_or(o.demos, G.data("demos")));
  note("training on " + std::to_string(ds.size()) + " demonstrations");
  const train::TrainResult r = train::train(ds, o.hyper, progress_printer(""));
  const fs::path ck = path_or(o.out, G.data("model.ckpt.json"));
  if (ck.has_parent_path()) fs::create_directories(ck.parent_path());
  train::save_checkpoint(r.checkpoint, ck);
  const fs::path curve = path_or(o.curve, G.data("curve.csv"));
  train::write_curve_csv(r.curve, curve);
  const auto& s = r.checkpoint.summary;
  std::cout << "held-out NLL " << brief(s.initial_eval_loss) << " -> " << brief(s.final_eval_loss) << " after "
            << s.steps << " steps; checkpoint " << ck.string() << ", curve " << curve.string() << "\n";
  return kOk;
}

struct QuartileOpts {
  std::string demos;
  std::string out_dir;
  train::Hyper hyper;
};

int train_quartiles(QuartileOpts o) {
  o.hyper.seed = G.seed;
  o.hyper.workers = G.workers;
  const Dataset ds = load_training_set(path_or(o.demos, G.data("demos")));
  const fs::path dir = path_or(o.out_dir, G.data("quartiles"));
  fs::create_directories(dir);
  const train::QuartileSuite suite =
      train::train_quartile_suite(ds, o.hyper, [](const std::string& name, const train::CurvePoint& p) {
        progress_printer("[" + name + "] ")(p);
      });
  nlohmann::ordered_json index{{"q1", suite.partition.q1},
                               {"q2", suite.partition.q2},
                               {"q3", suite.partition.q3},
                               {"models", nlohmann::ordered_json::array()}};
  for (const auto& m : suite.models) {
    nlohmann::ordered_json e{{"name", m.name}, {"demos", m.demos}};
    if (m.result) {
      const fs::path p = dir / (m.name + ".ckpt.json");
      train::save_checkpoint(m.result->checkpoint, p);
      e["checkpoint"] = p.filename().string();
      e["initial_eval_loss"] = m.result->checkpoint.summary.initial_eval_loss;
      e["final_eval_loss"] = m.result->checkpoint.summary.final_eval_loss;
      std::cout << m.name << ": " << m.demos << " demos, held-out NLL "
                << brief(m.result->checkpoint.summary.final_eval_loss) << " -> " << p.string() << "\n";
    } else {
      e["warning"] = m.warning;
      warn(m.name + ": " + m.warning);
    }
    index["models"].push_back(e);
  }
  write_text(dir / "curves.csv", train::suite_curves_csv(suite));
  write_text(dir / "suite.json", index.dump(1) + "\n");
  return kOk;
}

// ---- grad-check ----

struct GradOpts {
  int instances = 20;
  train::GradCheckShape shape;
  double eps = 1e-5;
  double tol = 1e-6;
  std::string precision = "long-double";
};

int grad_check_cmd(const GradOpts& o) {
  if (o.instances < 1) throw ConfigError("--instances must be >= 1");
  if (o.precision != "long-double" && o.precision != "double")
    throw ConfigError("--fd-precision must be long-double or double");
  std::mt19937_64 rng(G.seed);
  double worst = 0.0;
  for (int i = 0; i < o.instances; ++i) {
    const train::GradCheckResult r = o.precision == "double"
                                         ? train::random_grad_check<double>(o.shape, rng, o.eps)
                                         : train::random_grad_check<long double>(o.shape, rng, o.eps);
    worst = std::max(worst, r.max_rel_error);
    std::cout << "instance " << i << ": max relative error " << brief(r.max_rel_error) << " at " << r.worst_tensor
              << "[" << r.worst_index << "] (" << r.checked << " coordinates)\n";
  }
  const bool ok = worst < o.tol;
  std::cout << (ok ? "PASS" : "FAIL") << ": worst " << brief(worst) << " vs tolerance " << brief(o.tol) << "\n";
  return ok ? kOk : kNumeric;
}

// ---- eval / replay ----

struct PolicyOpts {
  std::vector<std::string> checkpoints;
  std::vector<std::string> baselines;
  std::string encoding = "incremental";
  std::optional<double> temperature;
  double post_scale = 1.0;
};

struct NamedFactory {
  std::string name;
  PolicyFactory make;
};

std::vector<NamedFactory> policies(const PolicyOpts& o, const SimConfig& sim) {
  std::vector<NamedFactory> out;
  const control::Encoding enc = control::parse_encoding(o.encoding);
  const std::string hash = config_hash(sim);
  for (const auto& path : o.checkpoints) {
    auto ck = std::make_shared<train::Checkpoint>(train::load_checkpoint(path));
    train::require_dims(*ck, feature::count, feature::wrench_dim);
    if (ck->sim_config_hash != hash)
      warn(path + " was trained under sim config " + ck->sim_config_hash + ", evaluating under " + hash);
    const double temp = o.temperature.value_or(ck->hyper.temperature);
    out.push_back({path, [ck, enc, temp] { return std::make_unique<control::ModelPolicy>(*ck, enc, temp); }});
  }
  for (const auto& b : o.baselines) {
    if (b == "zero")
      out.push_back({b, [] { return std::make_unique<control::ZeroPolicy>(); }});
    else if (b == "scripted")
      out.push_back({b, [sim] { return std::make_unique<ScriptedPolicy>(sim); }});
    else
      throw ConfigError("unknown baseline '" + b + "' (zero, scripted)");
  }
  if (out.empty()) throw ConfigError("nothing to evaluate: give --checkpoint or --baseline");
  return out;
}

void add_policy_flags(CLI::App* c, PolicyOpts& p) {
  c->add_option("--checkpoint", p.checkpoints, "Model checkpoint(s)");
  c->add_option("--baseline", p.baselines, "Baseline policy: zero, scripted");
  c->add_option("--encoding", p.encoding, "LSTM state handling: incremental or window")->capture_default_str();
  c->add_option("--temperature", p.temperature, "Sampling temperature (default: from checkpoint)");
  c->add_option("--post-scale", p.post_scale, "Scale applied to model wrenches, in [0, 1]")->capture_default_str();
}

control::ControllerConfig controller_for(const SimConfig& sim, const std::string& encoding) {
  control::ControllerConfig c = control::matched_controller(sim);
  c.encoding = control::parse_encoding(encoding);
  return c;
}

struct EvalOpts {
  PolicyOpts policy;
  EvalConfig ec;
  std::string report;
};

int eval_cmd(EvalOpts o) {
  const SimConfig sim = G.sim();
  o.ec.seed = G.seed;
  o.ec.workers = G.workers;
  o.ec.post_scale = o.policy.post_scale;
  const auto ctrl = controller_for(sim, o.policy.encoding);
  nlohmann::ordered_json all{{"seed", std::to_string(G.seed)},
                             {"cutoff", o.ec.max_time},
                             {"threshold", o.ec.success_threshold},
                             {"reports", nlohmann::ordered_json::array()}};
  for (const auto& p : policies(o.policy, sim)) {
    const EvalReport rep = evaluate(p.make, p.name, sim, ctrl, o.ec);
    std::cout << p.name << ": " << rep.successes << "/" << rep.trials << " successes (" << brief(100 * rep.success_rate)
              << "%), mean completion " << brief(rep.mean_success_time) << " s, " << rep.outliers.size()
              << " outliers\n";
    all["reports"].push_back(to_json(rep));
  }
  const fs::path out = path_or(o.report, G.data("eval.json"));
  write_text(out, all.dump(1) + "\n");
  note("report -> " + out.string());
  return kOk;
}

struct ReplayOpts {
  std::string demo;
  PolicyOpts policy;
  int trial = 0;
  double max_time = 30.0;
  double threshold = 1e-3;
  std::string out;
};

int replay_demo(const ReplayOpts& o) {
  const Demonstration d = read_demo(fs::path(o.demo));
  const SimConfig sim = G.sim();
  if (d.sim_config_hash != config_hash(sim)) warn("demo was recorded under sim config " + d.sim_config_hash);
  std::string csv = "t,x,z,theta,vx,vz,omega,fx,fz,tau,goal_distance,replay_error\n";
  SimState s;
  double worst = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& smp = d.samples[i];
    if (i == 0) {
      s.pose = smp.pose;
      s.twist = smp.twist;
      s.t = smp.t;
    }
    const double err = std::max({std::abs(s.pose.x - smp.pose.x), std::abs(s.pose.z - smp.pose.z),
                                 std::abs(s.pose.theta - smp.pose.theta)});
    worst = std::max(worst, err);
    csv += fmt(smp.t) + "," + fmt(smp.pose.x) + "," + fmt(smp.pose.z) + "," + fmt(smp.pose.theta) + "," +
           fmt(smp.twist.vx) + "," + fmt(smp.twist.vz) + "," + fmt(smp.twist.omega) + "," + fmt(smp.wrench.fx) +
           "," + fmt(smp.wrench.fz) + "," + fmt(smp.wrench.tau) + "," + fmt(goal_distance(smp.pose)) + "," +
           fmt(err) + "\n";
    s = step(s, smp.wrench, sim);
  }
  const fs::path out = path_or(o.out, G.data(d.id + ".replay.csv"));
  write_text(out, csv);
  std::cout << d.id << ": " << d.size() << " samples, " << brief(d.duration()) << " s, "
            << (d.success ? "successful" : "unsuccessful") << ", final goal distance "
            << brief(goal_distance(d.samples.back().pose)) << " m, open-loop replay error " << brief(worst)
            << " m -> " << out.string() << "\n";
  return kOk;
}

int replay_episode(const ReplayOpts& o) {
  const SimConfig sim = G.sim();
  const auto ctrl = controller_for(sim, o.policy.encoding);
  const auto ps = policies(o.policy, sim);
  if (ps.size() != 1) throw ConfigError("replay takes exactly one --checkpoint or --baseline");
  auto policy = ps.front().make();
  // same start and stream as trial `trial` of eval with this seed
  std::mt19937_64 rng = stream_rng(G.seed, static_cast<std::uint64_t>(o.trial));
  const Pose start = random_start(sim, rng).pose;
  control::DeployConfig dc;
  dc.max_time = o.max_time;
  dc.success_threshold = o.threshold;
  dc.post_scale = o.policy.post_scale;
  const control::EpisodeLog log = control::deploy(*policy, sim, ctrl, start, dc, rng);
  const fs::path out = path_or(o.out, G.data("episode_" + std::to_string(o.trial) + ".csv"));
  control::write_episode_csv(log, out);
  std::cout << ps.front().name << " trial " << o.trial << ": " << control::outcome_name(log.outcome) << " after "
            << brief(log.duration) << " s, final goal distance " << brief(log.final_distance) << " m, "
            << log.rows.size() << " rows -> " << out.string() << (log.fault.empty() ? "" : "; " + log.fault)
            << "\n";
  return kOk;
}

// ---- serve ----

struct ServeOpts {
  teleop::ServerConfig server;
  std::string record_dir;
  std::string static_dir;
};

int serve(ServeOpts o) {
  o.server.session.sim = G.sim();
  o.server.session.initial_seed = G.seed;
  o.server.session.dataset_dir = path_or(o.record_dir, G.data("human"));
  o.server.static_dir = o.static_dir;
  o.server.log = [](const std::string& s) { note(s); };
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  teleop::Server server(o.server);
  std::cout << "serving ws://" << o.server.address << ":" << server.port() << "/session, recordings -> "
            << o.server.session.dataset_dir.string() << std::endl;
  std::thread t([&] { server.run(); });
  int sig = 0;
  sigwait(&set, &sig);
  note("shutting down");
  server.stop();
  t.join();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learning peg-in-hole force strategies from demonstrations"};
  app.set_config("--config", "", "Read options from a TOML/INI file");
  app.require_subcommand(1);
  if (const char* d = std::getenv("PFS_DATA_DIR")) G.data_dir = d;
  if (G.data_dir.empty()) G.data_dir = "pfs_data";
  app.add_option("--seed", G.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--sim-config", G.sim_config, "Simulation parameters (key = value file)");
  app.add_option("--data-dir", G.data_dir, "Default location of inputs and outputs (env PFS_DATA_DIR)")
      ->capture_default_str();
  app.add_option("--workers", G.workers, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", G.quiet, "Only print results");

  GenOpts gen;
  auto* c_gen = app.add_subcommand("gen-demos", "Record scripted demonstrations");
  c_gen->add_option("--count", gen.count, "Successful demonstrations to keep")->capture_default_str();
  c_gen->add_option("--out", gen.out, "Dataset directory (default <data-dir>/demos)");
  c_gen->add_flag("--white-noise", gen.white_noise, "Uncorrelated operator noise (ablation)");
  c_gen->add_option("--noise-scale", gen.noise_scale, "Operator noise multiplier")->capture_default_str();
  c_gen->add_option("--max-time", gen.max_time, "Attempts longer than this are discarded [s]")->capture_default_str();

  AnalyzeOpts an;
  auto* c_an = app.add_subcommand("analyze", "Duration quartiles, occurrence grid and band plot");
  c_an->add_option("--demos", an.demos, "Dataset directory");
  c_an->add_option("--grid", an.grid, "Occurrence grid WIDTHxHEIGHT")->capture_default_str();
  c_an->add_option("--feature", an.feature, "x z theta vx vz omega fx fz tau")->capture_default_str();
  c_an->add_option("--out", an.out, "Grid CSV");
  c_an->add_option("--bands", an.bands, "Band plot bins (0 = off)");
  c_an->add_option("--bands-out", an.bands_out, "Band plot CSV");
  c_an->add_option("--durations-out", an.durations_out, "Per-demo duration CSV");

  TrainOpts tr;
  auto* c_tr = app.add_subcommand("train", "Train the LSTM + mixture density model");
  c_tr->add_option("--demos", tr.demos, "Dataset directory");
  c_tr->add_option("--out", tr.out, "Checkpoint path");
  c_tr->add_option("--curve", tr.curve, "Learning curve CSV");
  add_hyper_flags(c_tr, tr.hyper);

  QuartileOpts qo;
  auto* c_q = app.add_subcommand("train-quartiles", "Train one model per duration quartile plus the full set");
  c_q->add_option("--demos", qo.demos, "Dataset directory");
  c_q->add_option("--out-dir", qo.out_dir, "Output directory");
  add_hyper_flags(c_q, qo.hyper);

  GradOpts go;
  auto* c_g = app.add_subcommand("grad-check", "Compare analytic gradients with central differences");
  c_g->add_option("--instances", go.instances)->capture_default_str();
  c_g->add_option("--hidden", go.shape.m)->capture_default_str();
  c_g->add_option("--inputs", go.shape.c)->capture_default_str();
  c_g->add_option("--k", go.shape.k)->capture_default_str();
  c_g->add_option("--d", go.shape.d)->capture_default_str();
  c_g->add_option("--n", go.shape.N)->capture_default_str();
  c_g->add_option("--batch", go.shape.batch)->capture_default_str();
  c_g->add_option("--eps", go.eps)->capture_default_str();
  c_g->add_option("--tol", go.tol)->capture_default_str();
  c_g->add_option("--fd-precision", go.precision, "long-double or double")->capture_default_str();

  EvalOpts ev;
  auto* c_ev = app.add_subcommand("eval", "Closed-loop trials through the admittance controller");
  add_policy_flags(c_ev, ev.policy);
  c_ev->add_option("--trials", ev.ec.trials)->capture_default_str();
  c_ev->add_option("--cutoff", ev.ec.max_time, "Sim time budget per trial [s]")->capture_default_str();
  c_ev->add_option("--threshold", ev.ec.success_threshold, "Goal distance for success [m]")->capture_default_str();
  c_ev->add_option("--trace-rate", ev.ec.trace_rate, "Goal-distance trace samples per second")->capture_default_str();
  c_ev->add_option("--report", ev.report, "Report JSON (default <data-dir>/eval.json)");

  ReplayOpts rp;
  auto* c_rp = app.add_subcommand("replay", "Re-simulate a demonstration or log one deployment episode as CSV");
  c_rp->add_option("--demo", rp.demo, "Demonstration file to replay open loop");
  add_policy_flags(c_rp, rp.policy);
  c_rp->add_option("--trial", rp.trial, "Trial index whose start pose is used")->capture_default_str();
  c_rp->add_option("--cutoff", rp.max_time)->capture_default_str();
  c_rp->add_option("--threshold", rp.threshold)->capture_default_str();
  c_rp->add_option("--out", rp.out, "CSV path");

  ServeOpts so;
  auto* c_sv = app.add_subcommand("serve", "Teleoperation WebSocket server");
  c_sv->add_option("--bind", so.server.address)->capture_default_str();
  c_sv->add_option("--port", so.server.port)->capture_default_str();
  c_sv->add_option("--max-sessions", so.server.max_sessions)->capture_default_str();
  c_sv->add_option("--state-rate", so.server.session.state_rate, "State broadcast rate [Hz]")->capture_default_str();
  c_sv->add_option("--record-dir", so.record_dir, "Where recordings go (default <data-dir>/human)");
  c_sv->add_option("--static", so.static_dir, "Directory served over HTTP (UI bundle)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*c_gen) return gen_demos(gen);
    if (*c_an) return analyze(an);
    if (*c_tr) return train_cmd(tr);
    if (*c_q) return train_quartiles(qo);
    if (*c_g) return grad_check_cmd(go);
    if (*c_ev) return eval_cmd(ev);
    if (*c_rp) return rp.demo.empty() ? replay_episode(rp) : replay_demo(rp);
    if (*c_sv) return serve(so);
  } catch (const DimensionError& e) {
    std::cerr << "dimension error: " << e.what() << '\n';
    return kDimension;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return e.kind() == FormatError::Kind::dimension ? kDimension : kFormat;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
