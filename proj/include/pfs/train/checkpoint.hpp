#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "pfs/demos/features.hpp"
#include "pfs/error.hpp"
#include "pfs/net/model.hpp"
#include "pfs/train/hyper.hpp"

namespace pfs::train {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointFormat = "pfs-checkpoint";

struct TrainingSummary {
  int steps = 0;
  double initial_eval_loss = 0.0;
  double final_eval_loss = 0.0;
  double final_batch_loss = 0.0;
  int train_demos = 0;
  int heldout_demos = 0;
  long train_windows = 0;
  long heldout_windows = 0;

  friend bool operator==(const TrainingSummary&, const TrainingSummary&) = default;
};

/// Everything needed to run a trained model without outside configuration.
struct Checkpoint {
  net::NetParams params;
  int N = 0;
  NormStats norm;
  Hyper hyper;
  std::string sim_config_hash;
  TrainingSummary summary;

  int m() const { return params.m(); }
  int c() const { return params.c(); }
  int k() const { return params.k(); }
  int d() const { return params.d(); }

  void validate() const {
    params.validate();
    if (norm.mean.size() != c() || norm.stddev.size() != c())
      throw DimensionError("checkpoint: normalization size does not match input dimension");
    if (N < 0) throw DimensionError("checkpoint: N must be >= 0");
  }

  friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
    return a.params == b.params && a.N == b.N && a.norm.mean == b.norm.mean && a.norm.stddev == b.norm.stddev &&
           a.hyper == b.hyper && a.sim_config_hash == b.sim_config_hash && a.summary == b.summary;
  }
};

/// Throws DimensionError unless the checkpoint produces d-dimensional
/// wrenches from c-dimensional inputs.
inline void require_dims(const Checkpoint& ck, int c, int d) {
  if (ck.d() != d || ck.c() != c)
    throw DimensionError("checkpoint has c=" + std::to_string(ck.c()) + ", d=" + std::to_string(ck.d()) +
                         " but the caller needs c=" + std::to_string(c) + ", d=" + std::to_string(d));
}

namespace detail {

using ojson = nlohmann::ordered_json;
using Kind = FormatError::Kind;

inline ojson matrix_json(const net::Matrix& m) {
  ojson rows = ojson::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ojson row = ojson::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline ojson vector_json(const Eigen::VectorXd& v) {
  ojson out = ojson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline double finite_number(const ojson& j, const std::string& where) {
  if (!j.is_number()) throw FormatError(Kind::value, where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw FormatError(Kind::value, where + ": not finite");
  return v;
}

inline const ojson& field(const ojson& j, const std::string& key, const std::string& where) {
  if (!j.is_object()) throw FormatError(Kind::syntax, where + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(Kind::syntax, where + ": missing '" + key + "'");
  return *it;
}

inline int int_field(const ojson& j, const std::string& key, const std::string& where) {
  const ojson& v = field(j, key, where);
  if (!v.is_number_integer()) throw FormatError(Kind::value, where + "." + key + ": expected an integer");
  const auto x = v.get<long long>();
  if (x < -1'000'000'000LL || x > 1'000'000'000LL) throw FormatError(Kind::value, where + "." + key + ": out of range");
  return static_cast<int>(x);
}

inline net::Matrix matrix_from(const ojson& j, Eigen::Index rows, Eigen::Index cols, const std::string& where) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw FormatError(Kind::dimension, where + ": expected " + std::to_string(rows) + " rows");
  net::Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const ojson& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw FormatError(Kind::dimension, where + ": row " + std::to_string(r) + " must hold " + std::to_string(cols) +
                                             " values");
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = finite_number(row[static_cast<std::size_t>(c)], where);
  }
  return m;
}

inline Eigen::VectorXd vector_from(const ojson& j, Eigen::Index n, const std::string& where) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n)
    throw FormatError(Kind::dimension, where + ": expected " + std::to_string(n) + " values");
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = finite_number(j[static_cast<std::size_t>(i)], where);
  return v;
}

}  // namespace detail

inline std::string to_json_text(const Checkpoint& ck) {
  using detail::ojson;
  ck.validate();
  ojson lstm = ojson::object();
  for (int g = 0; g < 4; ++g) lstm[std::string("W_") + net::gate_names[g]] = detail::matrix_json(ck.params.lstm.W[g]);
  for (int g = 0; g < 4; ++g) lstm[std::string("U_") + net::gate_names[g]] = detail::matrix_json(ck.params.lstm.U[g]);
  for (int g = 0; g < 4; ++g) lstm[std::string("b_") + net::gate_names[g]] = detail::vector_json(ck.params.lstm.b[g]);
  const Hyper& h = ck.hyper;
  const TrainingSummary& s = ck.summary;
  ojson j{
      {"format", kCheckpointFormat},
      {"version", kCheckpointVersion},
      {"dims", {{"m", ck.m()}, {"c", ck.c()}, {"k", ck.k()}, {"d", ck.d()}, {"N", ck.N}}},
      {"lstm", std::move(lstm)},
      {"W_z", detail::matrix_json(ck.params.head.Wz)},
      {"norm", {{"mean", detail::vector_json(ck.norm.mean)}, {"stddev", detail::vector_json(ck.norm.stddev)}}},
      {"hyper",
       {{"k", h.k},
        {"N", h.N},
        {"m", h.m},
        {"learning_rate", h.learning_rate},
        {"batch_size", h.batch_size},
        {"steps", h.steps},
        {"eval_every", h.eval_every},
        {"eval_windows", h.eval_windows},
        {"holdout_fraction", h.holdout_fraction},
        {"clip_norm", h.clip_norm},
        {"input_noise", h.input_noise},
        {"temperature", h.temperature},
        {"workers", h.workers}}},
      {"seed", std::to_string(h.seed)},
      {"sim_config_hash", ck.sim_config_hash},
      {"training",
       {{"steps", s.steps},
        {"initial_eval_loss", s.initial_eval_loss},
        {"final_eval_loss", s.final_eval_loss},
        {"final_batch_loss", s.final_batch_loss},
        {"train_demos", s.train_demos},
        {"heldout_demos", s.heldout_demos},
        {"train_windows", s.train_windows},
        {"heldout_windows", s.heldout_windows}}},
  };
  return j.dump(1) + "\n";
}

inline Checkpoint checkpoint_from_json_text(const std::string& text) {
  using detail::field;
  using detail::finite_number;
  using detail::int_field;
  using detail::ojson;
  using Kind = FormatError::Kind;
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    // An error past the last byte means the file was cut short.
    if (e.byte > text.size()) throw FormatError(Kind::truncated, e.what());
    throw FormatError(Kind::syntax, e.what());
  } catch (const ojson::exception& e) {
    throw FormatError(Kind::value, e.what());
  }
  try {
    if (!j.is_object()) throw FormatError(Kind::syntax, "checkpoint is not an object");
    const ojson& fmt = field(j, "format", "checkpoint");
    if (!fmt.is_string() || fmt.get<std::string>() != kCheckpointFormat)
      throw FormatError(Kind::syntax, "not a checkpoint file");
    const int version = int_field(j, "version", "checkpoint");
    if (version != kCheckpointVersion)
      throw FormatError(Kind::version, "unsupported checkpoint version " + std::to_string(version));

    const ojson& dims = field(j, "dims", "checkpoint");
    const int m = int_field(dims, "m", "dims"), c = int_field(dims, "c", "dims"), k = int_field(dims, "k", "dims"),
              d = int_field(dims, "d", "dims");
    Checkpoint ck;
    ck.N = int_field(dims, "N", "dims");
    if (m < 1 || c < 1 || k < 1 || d < 1 || ck.N < 0 || m > 100000 || c > 100000 || k > 100000 || d > 100000)
      throw FormatError(Kind::dimension, "dims out of range");

    const ojson& lstm = field(j, "lstm", "checkpoint");
    for (int g = 0; g < 4; ++g) {
      const std::string gn = net::gate_names[g];
      ck.params.lstm.W[g] = detail::matrix_from(field(lstm, "W_" + gn, "lstm"), m, c, "W_" + gn);
      ck.params.lstm.U[g] = detail::matrix_from(field(lstm, "U_" + gn, "lstm"), m, m, "U_" + gn);
      ck.params.lstm.b[g] = detail::vector_from(field(lstm, "b_" + gn, "lstm"), m, "b_" + gn);
    }
    ck.params.head.k = k;
    ck.params.head.d = d;
    ck.params.head.Wz = detail::matrix_from(field(j, "W_z", "checkpoint"), k * (d + 2), 2 * m, "W_z");

    const ojson& norm = field(j, "norm", "checkpoint");
    ck.norm.mean = detail::vector_from(field(norm, "mean", "norm"), c, "norm.mean");
    ck.norm.stddev = detail::vector_from(field(norm, "stddev", "norm"), c, "norm.stddev");
    if (!(ck.norm.stddev.array() > 0.0).all()) throw FormatError(Kind::value, "norm.stddev must be positive");

    const ojson& h = field(j, "hyper", "checkpoint");
    ck.hyper.k = int_field(h, "k", "hyper");
    ck.hyper.N = int_field(h, "N", "hyper");
    ck.hyper.m = int_field(h, "m", "hyper");
    ck.hyper.learning_rate = finite_number(field(h, "learning_rate", "hyper"), "hyper.learning_rate");
    ck.hyper.batch_size = int_field(h, "batch_size", "hyper");
    ck.hyper.steps = int_field(h, "steps", "hyper");
    ck.hyper.eval_every = int_field(h, "eval_every", "hyper");
    ck.hyper.eval_windows = int_field(h, "eval_windows", "hyper");
    ck.hyper.holdout_fraction = finite_number(field(h, "holdout_fraction", "hyper"), "hyper.holdout_fraction");
    ck.hyper.clip_norm = finite_number(field(h, "clip_norm", "hyper"), "hyper.clip_norm");
    ck.hyper.input_noise = finite_number(field(h, "input_noise", "hyper"), "hyper.input_noise");
    ck.hyper.temperature = finite_number(field(h, "temperature", "hyper"), "hyper.temperature");
    ck.hyper.workers = int_field(h, "workers", "hyper");
    const ojson& seed = field(j, "seed", "checkpoint");
    if (!seed.is_string()) throw FormatError(Kind::value, "seed must be a decimal string");
    try {
      std::size_t used = 0;
      const std::string ss = seed.get<std::string>();
      ck.hyper.seed = std::stoull(ss, &used);
      if (used != ss.size() || ss.empty() || ss[0] == '-') throw std::invalid_argument("seed");
    } catch (const std::logic_error&) {
      throw FormatError(Kind::value, "seed must be a decimal string");
    }
    try {
      ck.hyper.validate();
    } catch (const ConfigError& e) {
      throw FormatError(Kind::value, e.what());
    }
    const ojson& hash = field(j, "sim_config_hash", "checkpoint");
    if (!hash.is_string()) throw FormatError(Kind::value, "sim_config_hash must be a string");
    ck.sim_config_hash = hash.get<std::string>();

    const ojson& t = field(j, "training", "checkpoint");
    ck.summary.steps = int_field(t, "steps", "training");
    ck.summary.initial_eval_loss = finite_number(field(t, "initial_eval_loss", "training"), "training");
    ck.summary.final_eval_loss = finite_number(field(t, "final_eval_loss", "training"), "training");
    ck.summary.final_batch_loss = finite_number(field(t, "final_batch_loss", "training"), "training");
    ck.summary.train_demos = int_field(t, "train_demos", "training");
    ck.summary.heldout_demos = int_field(t, "heldout_demos", "training");
    ck.summary.train_windows = int_field(t, "train_windows", "training");
    ck.summary.heldout_windows = int_field(t, "heldout_windows", "training");
    return ck;
  } catch (const ojson::exception& e) {
    throw FormatError(Kind::value, e.what());
  }
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const std::string text = to_json_text(ck);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatError::Kind::io, "cannot write " + path.string());
  out << text;
  if (!out) throw FormatError(FormatError::Kind::io, "write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json_text(ss.str());
}

}  // namespace pfs::train
