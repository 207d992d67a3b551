#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "pfs/demos/analysis.hpp"
#include "pfs/demos/features.hpp"
#include "pfs/detail/text.hpp"
#include "pfs/error.hpp"
#include "pfs/net/model.hpp"
#include "pfs/train/adam.hpp"
#include "pfs/train/checkpoint.hpp"
#include "pfs/train/hyper.hpp"

namespace pfs::train {

/// One learning-curve row. eval_loss is NaN on steps without evaluation
/// and batch_loss is NaN on the final evaluation-only row.
struct CurvePoint {
  int step = 0;
  double batch_loss = std::numeric_limits<double>::quiet_NaN();
  double eval_loss = std::numeric_limits<double>::quiet_NaN();

  friend bool operator==(const CurvePoint& a, const CurvePoint& b) {
    auto same = [](double x, double y) { return (std::isnan(x) && std::isnan(y)) || x == y; };
    return a.step == b.step && same(a.batch_loss, b.batch_loss) && same(a.eval_loss, b.eval_loss);
  }
};

using LearningCurve = std::vector<CurvePoint>;

struct TrainResult {
  Checkpoint checkpoint;
  LearningCurve curve;
};

/// Reference to one window: inputs are columns pivot-N..pivot of the demo's
/// feature matrix and the label is the wrench at pivot+1.
struct WindowRef {
  std::size_t demo = 0;
  long pivot = 0;
};

/// Normalized features of a set of demonstrations, ready for batching.
class WindowSet {
public:
  WindowSet() = default;

  WindowSet(const std::vector<const Demonstration*>& demos, const NormStats& norm, int N) : N_(N) {
    for (const Demonstration* d : demos) {
      const auto len = static_cast<long>(d->samples.size());
      net::Matrix f(feature::count, len);
      net::Matrix y(feature::wrench_dim, len);
      for (long t = 0; t < len; ++t) {
        const auto& s = d->samples[static_cast<std::size_t>(t)];
        f.col(t) = norm.apply(feature_vector(s));
        y.col(t) = norm.apply_label(wrench_vector(s.wrench));
      }
      const std::size_t n = window_count(static_cast<std::size_t>(len), N);
      features_.push_back(std::move(f));
      labels_.push_back(std::move(y));
      ids_.push_back(d->id);
      offsets_.push_back(total_);
      total_ += static_cast<long>(n);
    }
  }

  long size() const { return total_; }
  int N() const { return N_; }

  /// Maps a flat index in [0, size()) to its window.
  WindowRef at(long index) const {
    auto it = std::upper_bound(offsets_.begin(), offsets_.end(), index);
    const auto demo = static_cast<std::size_t>(it - offsets_.begin()) - 1;
    return {demo, N_ + (index - offsets_[demo])};
  }

  const std::string& demo_id(std::size_t demo) const { return ids_[demo]; }

  /// Builds the time-major input batch and the label matrix.
  void gather(const std::vector<WindowRef>& refs, std::vector<net::Matrix>& seq, net::Matrix& labels) const {
    const auto B = static_cast<Eigen::Index>(refs.size());
    seq.assign(static_cast<std::size_t>(N_ + 1), net::Matrix(feature::count, B));
    labels.resize(feature::wrench_dim, B);
    for (Eigen::Index j = 0; j < B; ++j) {
      const WindowRef& r = refs[static_cast<std::size_t>(j)];
      const net::Matrix& f = features_[r.demo];
      for (int s = 0; s <= N_; ++s) seq[static_cast<std::size_t>(s)].col(j) = f.col(r.pivot - N_ + s);
      labels.col(j) = labels_[r.demo].col(r.pivot + 1);
    }
  }

private:
  int N_ = 0;
  std::vector<net::Matrix> features_;
  std::vector<net::Matrix> labels_;
  std::vector<std::string> ids_;
  std::vector<long> offsets_;
  long total_ = 0;
};

/// Demo indices of the held-out split: a seeded shuffle keeps the last
/// round(fraction * n) demos aside, at least one when n >= 2 and fraction > 0.
inline std::vector<bool> holdout_mask(std::size_t n, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  std::size_t hold = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (fraction > 0 && n >= 2) hold = std::clamp<std::size_t>(hold, 1, n - 1);
  if (n < 2) hold = 0;
  std::vector<bool> mask(n, false);
  for (std::size_t i = 0; i < hold; ++i) mask[order[n - 1 - i]] = true;
  return mask;
}

/// Mean loss and gradient of a batch, optionally split across worker
/// threads. Chunks are combined in a fixed order, and a single worker
/// reduces to one call.
inline net::LossGrad parallel_loss_and_grad(const net::NetParams& p, const std::vector<net::Matrix>& seq,
                                            const net::Matrix& labels, int workers) {
  const auto B = labels.cols();
  const int w = static_cast<int>(std::min<Eigen::Index>(workers, B));
  if (w <= 1) return net::loss_and_grad(p, seq, labels);
  std::vector<net::LossGrad> parts(static_cast<std::size_t>(w));
  std::vector<Eigen::Index> start(static_cast<std::size_t>(w) + 1);
  for (int i = 0; i <= w; ++i) start[static_cast<std::size_t>(i)] = B * i / w;
  {
    std::vector<std::jthread> pool;
    for (int i = 0; i < w; ++i)
      pool.emplace_back([&, i] {
        const auto a = start[static_cast<std::size_t>(i)], n = start[static_cast<std::size_t>(i) + 1] - a;
        std::vector<net::Matrix> s;
        for (const auto& x : seq) s.push_back(x.middleCols(a, n));
        parts[static_cast<std::size_t>(i)] = net::loss_and_grad(p, s, labels.middleCols(a, n));
      });
  }
  net::LossGrad out;
  out.grads = net::NetParams::zeros_like(p);
  out.losses.resize(B);
  auto acc = net::tensors(out.grads);
  for (int i = 0; i < w; ++i) {
    auto& part = parts[static_cast<std::size_t>(i)];
    const auto a = start[static_cast<std::size_t>(i)], n = start[static_cast<std::size_t>(i) + 1] - a;
    const double weight = static_cast<double>(n) / static_cast<double>(B);
    auto g = net::tensors(part.grads);
    for (std::size_t t = 0; t < acc.size(); ++t) acc[t].values += weight * g[t].values;
    out.losses.segment(a, n) = part.losses;
  }
  out.loss = out.losses.mean();
  return out;
}

/// Mean NLL over a fixed list of windows, evaluated in chunks.
inline double mean_loss(const net::NetParams& p, const WindowSet& ws, const std::vector<WindowRef>& refs) {
  if (refs.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  std::vector<net::Matrix> seq;
  net::Matrix labels;
  const std::size_t chunk = 256;
  for (std::size_t a = 0; a < refs.size(); a += chunk) {
    std::vector<WindowRef> part(refs.begin() + static_cast<long>(a),
                                refs.begin() + static_cast<long>(std::min(refs.size(), a + chunk)));
    ws.gather(part, seq, labels);
    total += net::batch_loss(p, seq, labels) * static_cast<double>(part.size());
  }
  return total / static_cast<double>(refs.size());
}

/// Up to `cap` windows spread evenly over the set.
inline std::vector<WindowRef> spread_windows(const WindowSet& ws, long cap) {
  std::vector<WindowRef> out;
  const long n = ws.size();
  const long take = std::min(n, cap);
  for (long i = 0; i < take; ++i) out.push_back(ws.at(i * n / take));
  return out;
}

using ProgressFn = std::function<void(const CurvePoint&)>;

/// Minibatch BPTT training with Adam. Deterministic for a fixed seed and
/// worker count.
inline TrainResult train(const Dataset& ds, const Hyper& hyper, const ProgressFn& progress = {}) {
  hyper.validate();
  if (ds.demos.empty()) throw ConfigError("train: empty dataset");

  const auto mask = holdout_mask(ds.demos.size(), hyper.holdout_fraction, hyper.seed);
  std::vector<const Demonstration*> train_demos, held_demos;
  Dataset train_set;
  for (std::size_t i = 0; i < ds.demos.size(); ++i) {
    if (mask[i]) {
      held_demos.push_back(&ds.demos[i]);
    } else {
      train_demos.push_back(&ds.demos[i]);
      train_set.demos.push_back(ds.demos[i]);
    }
  }
  const NormStats norm = fit_norm_stats(train_set);
  const WindowSet train_ws(train_demos, norm, hyper.N);
  if (train_ws.size() == 0)
    throw ConfigError("train: no demonstration is long enough for N = " + std::to_string(hyper.N));
  // Without held-out demos the evaluation falls back to training windows.
  const WindowSet held_ws(held_demos.empty() ? train_demos : held_demos, norm, hyper.N);
  const std::vector<WindowRef> eval_refs = spread_windows(held_ws.size() > 0 ? held_ws : train_ws, hyper.eval_windows);
  const WindowSet& eval_ws = held_ws.size() > 0 ? held_ws : train_ws;

  std::mt19937_64 init_rng(hyper.seed);
  net::NetParams params = net::init_net(hyper.m, feature::count, hyper.k, feature::wrench_dim, init_rng);
  AdamState adam = AdamState::like(params);
  const AdamConfig adam_cfg{hyper.learning_rate};
  std::mt19937_64 batch_rng(hyper.seed + 0x5851f42d4c957f2dULL);
  std::uniform_int_distribution<long> pick(0, train_ws.size() - 1);
  std::mt19937_64 noise_rng(hyper.seed + 0x2545f4914f6cdd1dULL);
  std::normal_distribution<double> noise(0.0, 1.0);

  TrainResult result;
  std::vector<WindowRef> refs(static_cast<std::size_t>(hyper.batch_size));
  std::vector<net::Matrix> seq;
  net::Matrix labels;
  double last_batch = std::numeric_limits<double>::quiet_NaN();
  double initial_eval = std::numeric_limits<double>::quiet_NaN();
  for (int s = 0; s < hyper.steps; ++s) {
    for (auto& r : refs) r = train_ws.at(pick(batch_rng));
    train_ws.gather(refs, seq, labels);
    // Corrupting the commanded-wrench inputs (labels stay clean) keeps the
    // model from merely echoing its previous command.
    if (hyper.input_noise > 0)
      for (auto& x : seq)
        for (Eigen::Index j = 0; j < x.cols(); ++j)
          for (int r = feature::wrench_offset; r < feature::wrench_offset + feature::wrench_dim; ++r)
            x(r, j) += hyper.input_noise * noise(noise_rng);
    net::LossGrad lg = parallel_loss_and_grad(params, seq, labels, hyper.workers);
    if (!std::isfinite(lg.loss)) {
      std::ostringstream msg;
      msg << "train: non-finite loss at step " << s << "; offending windows:";
      for (std::size_t j = 0; j < refs.size(); ++j)
        if (!std::isfinite(lg.losses[static_cast<Eigen::Index>(j)]))
          msg << " " << train_ws.demo_id(refs[j].demo) << "@" << refs[j].pivot;
      throw NumericError(msg.str());
    }
    CurvePoint pt;
    pt.step = s;
    pt.batch_loss = lg.loss;
    if (s % hyper.eval_every == 0) {
      pt.eval_loss = mean_loss(params, eval_ws, eval_refs);
      if (!std::isfinite(pt.eval_loss))
        throw NumericError("train: non-finite held-out loss at step " + std::to_string(s));
      if (s == 0) initial_eval = pt.eval_loss;
    }
    result.curve.push_back(pt);
    if (progress) progress(pt);
    last_batch = lg.loss;
    clip_global_norm(lg.grads, hyper.clip_norm);
    adam_step(params, lg.grads, adam, adam_cfg);
  }
  CurvePoint final_pt;
  final_pt.step = hyper.steps;
  final_pt.eval_loss = mean_loss(params, eval_ws, eval_refs);
  if (hyper.steps == 0) initial_eval = final_pt.eval_loss;
  result.curve.push_back(final_pt);
  if (progress) progress(final_pt);
  if (!std::isfinite(final_pt.eval_loss)) throw NumericError("train: non-finite held-out loss after training");

  Checkpoint& ck = result.checkpoint;
  ck.params = std::move(params);
  ck.N = hyper.N;
  ck.norm = norm;
  ck.hyper = hyper;
  ck.sim_config_hash = ds.demos.front().sim_config_hash;
  ck.summary.steps = hyper.steps;
  ck.summary.initial_eval_loss = initial_eval;
  ck.summary.final_eval_loss = final_pt.eval_loss;
  ck.summary.final_batch_loss = std::isfinite(last_batch) ? last_batch : final_pt.eval_loss;
  ck.summary.train_demos = static_cast<int>(train_demos.size());
  ck.summary.heldout_demos = static_cast<int>(held_demos.size());
  ck.summary.train_windows = train_ws.size();
  ck.summary.heldout_windows = held_demos.empty() ? 0 : held_ws.size();
  return result;
}

/// CSV with header step,batch_loss,eval_loss; missing values are empty.
inline std::string curve_csv(const LearningCurve& curve) {
  std::string out = "step,batch_loss,eval_loss\n";
  auto cell = [](double v) { return std::isnan(v) ? std::string() : pfs::detail::format_double(v); };
  for (const auto& p : curve) out += std::to_string(p.step) + "," + cell(p.batch_loss) + "," + cell(p.eval_loss) + "\n";
  return out;
}

inline void write_curve_csv(const LearningCurve& curve, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatError::Kind::io, "cannot write " + path.string());
  out << curve_csv(curve);
}

struct QuartileModel {
  std::string name;                       ///< "0-Q1", ..., "all"
  std::size_t demos = 0;
  std::optional<TrainResult> result;      ///< empty when the subset had no windows
  std::string warning;
};

struct QuartileSuite {
  DurationPartition partition;
  std::vector<QuartileModel> models;      ///< always 5, in partition order
};

/// Trains one model per duration subset with identical hyperparameters.
inline QuartileSuite train_quartile_suite(const Dataset& ds, const Hyper& hyper,
                                          const std::function<void(const std::string&, const CurvePoint&)>& progress = {}) {
  QuartileSuite suite;
  suite.partition = partition_by_duration(ds);
  for (std::size_t i = 0; i < suite.partition.parts.size(); ++i) {
    QuartileModel qm;
    qm.name = suite.partition.names[i];
    const Dataset sub = subset(ds, suite.partition.parts[i]);
    qm.demos = sub.demos.size();
    std::size_t windows = 0;
    for (const auto& d : sub.demos) windows += window_count(d.samples.size(), hyper.N);
    if (windows == 0) {
      qm.warning = "subset " + qm.name + " yields no training windows; model skipped";
    } else {
      ProgressFn fn;
      if (progress) fn = [&](const CurvePoint& p) { progress(qm.name, p); };
      qm.result = train(sub, hyper, fn);
    }
    suite.models.push_back(std::move(qm));
  }
  return suite;
}

/// Side-by-side curves: step plus one batch and eval column per model.
inline std::string suite_curves_csv(const QuartileSuite& suite) {
  std::string out = "step";
  std::size_t rows = 0;
  for (const auto& m : suite.models) {
    out += "," + m.name + ":batch_loss," + m.name + ":eval_loss";
    if (m.result) rows = std::max(rows, m.result->curve.size());
  }
  out += "\n";
  auto cell = [](double v) { return std::isnan(v) ? std::string() : pfs::detail::format_double(v); };
  for (std::size_t r = 0; r < rows; ++r) {
    std::string line;
    int step = -1;
    for (const auto& m : suite.models) {
      if (m.result && r < m.result->curve.size()) {
        const auto& p = m.result->curve[r];
        step = p.step;
        line += "," + cell(p.batch_loss) + "," + cell(p.eval_loss);
      } else {
        line += ",,";
      }
    }
    out += std::to_string(step) + line + "\n";
  }
  return out;
}

}  // namespace pfs::train
