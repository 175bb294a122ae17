#pragma once

// File formats: dataset and assignment CSVs, synthetic-spec, fit-report and
// evaluation JSON documents.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "pcm/domain.hpp"
#include "pcm/metrics.hpp"
#include "pcm/pipeline.hpp"
#include "pcm/synthgen.hpp"

namespace pcm::io {

using json = nlohmann::json;

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File content does not match the expected format.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw FormatError("not a number: '" + std::string(s) + "'");
  return v;
}

inline long long parse_int(std::string_view s) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw FormatError("not an integer: '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error reading '" + path + "'");
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  out.flush();
  if (!out) throw IoError("error writing '" + path + "'");
}

// ---------------------------------------------------------------- datasets

/// Header x1..xd,t,y[,ybar][,c_true]; missing optional values are empty.
inline std::string dataset_to_csv(const Dataset& data) {
  bool any_ybar = false, any_label = false;
  for (const Subject& s : data.subjects) {
    any_ybar = any_ybar || s.ybar.has_value();
    any_label = any_label || s.c_true.has_value();
  }
  std::string out;
  out.reserve(data.n() * (24 * (data.d + 3)));
  for (std::size_t j = 0; j < data.d; ++j) out += "x" + std::to_string(j + 1) + ",";
  out += "t,y";
  if (any_ybar) out += ",ybar";
  if (any_label) out += ",c_true";
  out += '\n';
  for (const Subject& s : data.subjects) {
    for (double v : s.x) {
      out += format_double(v);
      out += ',';
    }
    out += s.t == 1 ? "1," : "0,";
    out += format_double(s.y);
    if (any_ybar) {
      out += ',';
      if (s.ybar) out += format_double(*s.ybar);
    }
    if (any_label) {
      out += ',';
      if (s.c_true) out += std::to_string(*s.c_true);
    }
    out += '\n';
  }
  return out;
}

struct DatasetColumns {
  bool has_ybar = false;
  bool has_label = false;
};

inline Dataset dataset_from_csv(std::string_view text, DatasetColumns* columns = nullptr) {
  std::size_t pos = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    line = trim_cr(text.substr(pos, nl - pos));
    pos = nl + 1;
    return true;
  };
  std::string_view line;
  if (!next_line(line) || line.empty()) throw FormatError("missing CSV header");
  const std::vector<std::string_view> header = split_csv(line);
  Dataset data;
  long col_t = -1, col_y = -1, col_ybar = -1, col_c = -1;
  std::vector<long> col_x;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string_view h = header[c];
    if (h == "t") col_t = static_cast<long>(c);
    else if (h == "y") col_y = static_cast<long>(c);
    else if (h == "ybar") col_ybar = static_cast<long>(c);
    else if (h == "c_true") col_c = static_cast<long>(c);
    else if (h.size() > 1 && h[0] == 'x') {
      const long long j = parse_int(h.substr(1));
      if (j < 1) throw FormatError("bad feature column '" + std::string(h) + "'");
      if (col_x.size() < static_cast<std::size_t>(j)) col_x.resize(static_cast<std::size_t>(j), -1);
      col_x[static_cast<std::size_t>(j - 1)] = static_cast<long>(c);
    } else {
      throw FormatError("unknown column '" + std::string(h) + "'");
    }
  }
  if (col_x.empty()) throw FormatError("no feature columns x1..xd");
  for (std::size_t j = 0; j < col_x.size(); ++j)
    if (col_x[j] < 0) throw FormatError("feature column x" + std::to_string(j + 1) + " missing");
  if (col_t < 0 || col_y < 0) throw FormatError("columns t and y are required");
  data.d = col_x.size();
  if (columns) *columns = {col_ybar >= 0, col_c >= 0};

  std::size_t row = 0;
  while (next_line(line)) {
    if (line.empty()) continue;
    ++row;
    const std::vector<std::string_view> f = split_csv(line);
    if (f.size() != header.size())
      throw FormatError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) + " fields");
    Subject s;
    s.x.reserve(data.d);
    for (long c : col_x) s.x.push_back(parse_double(f[static_cast<std::size_t>(c)]));
    const long long t = parse_int(f[static_cast<std::size_t>(col_t)]);
    if (t != 0 && t != 1) throw FormatError("row " + std::to_string(row) + ": t must be 0 or 1");
    s.t = static_cast<int>(t);
    s.y = parse_double(f[static_cast<std::size_t>(col_y)]);
    if (col_ybar >= 0 && !f[static_cast<std::size_t>(col_ybar)].empty())
      s.ybar = parse_double(f[static_cast<std::size_t>(col_ybar)]);
    if (col_c >= 0 && !f[static_cast<std::size_t>(col_c)].empty())
      s.c_true = static_cast<int>(parse_int(f[static_cast<std::size_t>(col_c)]));
    data.subjects.push_back(std::move(s));
  }
  return data;
}

inline Dataset read_dataset(const std::string& path, DatasetColumns* columns = nullptr) {
  return dataset_from_csv(read_file(path), columns);
}

// ------------------------------------------------------------ synth specs

inline json spec_to_json(const SynthSpec& spec) {
  json regions = json::array();
  for (const Region& r : spec.regions) regions.push_back({{"lo", r.lo}, {"hi", r.hi}, {"level", r.level}});
  return {{"d", spec.d},
          {"regions", regions},
          {"default_level", spec.default_level},
          {"mu", {{"control", spec.mu_control}, {"treated", spec.mu_treated}}},
          {"sigma", spec.sigma},
          {"p_treat", spec.p_treat},
          {"n", spec.n},
          {"seed", spec.seed}};
}

/// Parses a spec document; absent fields keep the default-spec values.
inline SynthSpec spec_from_json(const json& j) {
  try {
    SynthSpec spec = default_spec();
    if (!j.is_object()) throw FormatError("spec must be a JSON object");
    if (j.contains("d")) spec.d = j.at("d").get<std::size_t>();
    if (j.contains("regions")) {
      spec.regions.clear();
      for (const json& r : j.at("regions"))
        spec.regions.push_back(
            {r.at("lo").get<std::vector<double>>(), r.at("hi").get<std::vector<double>>(), r.at("level").get<int>()});
    }
    if (j.contains("default_level")) spec.default_level = j.at("default_level").get<int>();
    if (j.contains("mu")) {
      spec.mu_control = j.at("mu").at("control").get<std::vector<double>>();
      spec.mu_treated = j.at("mu").at("treated").get<std::vector<double>>();
    }
    if (j.contains("sigma")) spec.sigma = j.at("sigma").get<double>();
    if (j.contains("p_treat")) spec.p_treat = j.at("p_treat").get<double>();
    if (j.contains("n")) spec.n = j.at("n").get<std::size_t>();
    if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    return spec;
  } catch (const json::exception& e) {
    throw FormatError(std::string("spec: ") + e.what());
  }
}

inline SynthSpec read_spec(const std::string& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("spec '") + path + "': " + e.what());
  }
  return spec_from_json(j);
}

// ------------------------------------------------------------ fit reports

inline json config_to_json(const PcmConfig& c) {
  return {{"precluster", to_string(c.precluster_mode)},
          {"cf", to_string(c.cf_mode)},
          {"knn_k", c.knn_k},
          {"em_iters", c.em_iters},
          {"tau_multiplier", c.tau_multiplier},
          {"k_max", c.k_max},
          {"seed", c.seed},
          {"fixed_levels", c.fixed_levels}};
}

inline PreclusterMode parse_precluster_mode(std::string_view s) {
  if (s == "box") return PreclusterMode::Box;
  if (s == "kmeans") return PreclusterMode::KMeans;
  throw FormatError("unknown pre-cluster mode '" + std::string(s) + "'");
}

inline CfMode parse_cf_mode(std::string_view s) {
  if (s == "given") return CfMode::Given;
  if (s == "knn") return CfMode::Knn;
  if (s == "control_diff") return CfMode::ControlDiff;
  throw FormatError("unknown counterfactual mode '" + std::string(s) + "'");
}

inline PcmConfig config_from_json(const json& j) {
  PcmConfig c;
  c.precluster_mode = parse_precluster_mode(j.at("precluster").get<std::string>());
  c.cf_mode = parse_cf_mode(j.at("cf").get<std::string>());
  c.knn_k = j.value("knn_k", std::size_t{0});
  c.em_iters = j.value("em_iters", std::size_t{1});
  c.tau_multiplier = j.value("tau_multiplier", 1.0);
  c.k_max = j.value("k_max", std::size_t{10});
  c.seed = j.value("seed", std::uint64_t{0});
  c.fixed_levels = j.value("fixed_levels", std::size_t{0});
  return c;
}

inline constexpr const char* kFitFormat = "pcm-fit/1";

/// Fit report; everything except the "timing" object is reproducible.
inline json fit_report(const PcmResult& res, const PcmConfig& config) {
  const LevelModel& m = res.model;
  json curve = json::array();
  for (const auto& [k, err] : m.err_curve) curve.push_back({{"k", k}, {"err", err}});
  std::vector<std::size_t> level_sizes(m.ell_hat, 0);
  for (int a : m.assignment)
    if (a >= 0) ++level_sizes[static_cast<std::size_t>(a)];
  const Diagnostics& dg = res.diagnostics;
  json timing = json::object();
  double total = 0.0;
  for (const StageTiming& st : dg.timings) {
    timing[st.stage + "_ms"] = st.ms;
    total += st.ms;
  }
  timing["total_ms"] = total;
  return {{"format", kFitFormat},
          {"ell_hat", m.ell_hat},
          {"mu_hat", m.mu_hat},
          {"level_sizes", level_sizes},
          {"err_curve", curve},
          {"tau", dg.tau},
          {"threshold_used", m.threshold_used},
          {"did_not_converge", m.did_not_converge},
          {"n_subjects", dg.n_subjects},
          {"config", config_to_json(config)},
          {"diagnostics",
           {{"n_eligible", dg.n_eligible},
            {"num_clusters", dg.num_clusters},
            {"dropped_clusters", dg.dropped_clusters},
            {"epsilon", dg.epsilon},
            {"empty_levels_removed", m.empty_levels_removed},
            {"knn_k", dg.knn_k}}},
          {"timing", timing}};
}

/// Header index,level,smoothed_ite; level -1 and an empty smoothed value
/// mark subjects that did not take part.
inline std::string assignments_to_csv(const LevelModel& m) {
  std::string out = "index,level,smoothed_ite\n";
  for (std::size_t i = 0; i < m.assignment.size(); ++i) {
    out += std::to_string(i);
    out += ',';
    out += std::to_string(m.assignment[i]);
    out += ',';
    if (i < m.smoothed_ite.size() && !std::isnan(m.smoothed_ite[i])) out += format_double(m.smoothed_ite[i]);
    out += '\n';
  }
  return out;
}

/// Rebuilds the parts of a LevelModel needed for evaluation.
inline LevelModel model_from_files(const json& report, std::string_view assignments_csv) {
  LevelModel m;
  try {
    if (report.value("format", std::string()) != kFitFormat) throw FormatError("model is not a pcm-fit/1 report");
    m.ell_hat = report.at("ell_hat").get<std::size_t>();
    m.mu_hat = report.at("mu_hat").get<std::vector<double>>();
    for (const json& e : report.at("err_curve"))
      m.err_curve.emplace_back(e.at("k").get<std::size_t>(), e.at("err").get<double>());
    m.threshold_used = report.at("threshold_used").get<double>();
    m.did_not_converge = report.at("did_not_converge").get<bool>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("model: ") + e.what());
  }
  if (m.mu_hat.size() != m.ell_hat) throw FormatError("model: mu_hat length differs from ell_hat");
  std::size_t pos = assignments_csv.find('\n');
  if (pos == std::string_view::npos || trim_cr(assignments_csv.substr(0, pos)) != "index,level,smoothed_ite")
    throw FormatError("assignments: bad header");
  ++pos;
  while (pos < assignments_csv.size()) {
    std::size_t nl = assignments_csv.find('\n', pos);
    if (nl == std::string_view::npos) nl = assignments_csv.size();
    const std::string_view line = trim_cr(assignments_csv.substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 3) throw FormatError("assignments: expected 3 fields");
    if (static_cast<std::size_t>(parse_int(f[0])) != m.assignment.size())
      throw FormatError("assignments: indices must be 0..n-1 in order");
    const long long level = parse_int(f[1]);
    if (level < -1 || level >= static_cast<long long>(m.ell_hat)) throw FormatError("assignments: level out of range");
    m.assignment.push_back(static_cast<int>(level));
    m.smoothed_ite.push_back(f[2].empty() ? std::numeric_limits<double>::quiet_NaN() : parse_double(f[2]));
  }
  return m;
}

// ------------------------------------------------------------ evaluation

inline json mean_std_json(const MeanStd& v) { return {{"mean", v.mean}, {"std", v.std}}; }

inline json eval_to_json(const EvalReport& r) {
  json j = {{"mae", mean_std_json(r.mae)},
            {"confusion", r.confusion},
            {"effects", {{"mu_hat", r.mu_hat}, {"true_mu", r.true_mu}}},
            {"ell_hat", r.ell_hat},
            {"ell_true", r.ell_true},
            {"level_count_mismatch", r.level_count_mismatch}};
  j["homogeneity"] = r.homogeneity ? json(*r.homogeneity) : json(nullptr);
  if (r.bayes) {
    j["bayes"] = {{"raw_ite_mae", mean_std_json(r.bayes->raw_ite_mae)},
                  {"subpopulation_mae", mean_std_json(r.bayes->subpopulation_mae)},
                  {"group_means", r.bayes->group_means},
                  {"confusion", r.bayes->confusion}};
  }
  return j;
}

inline std::string matrix_to_csv(const Matrix& m) {
  std::string out = "true_level";
  const std::size_t cols = m.empty() ? 0 : m.front().size();
  for (std::size_t b = 0; b < cols; ++b) out += ",pred" + std::to_string(b);
  out += '\n';
  for (std::size_t a = 0; a < m.size(); ++a) {
    out += std::to_string(a);
    for (double v : m[a]) out += "," + format_double(v);
    out += '\n';
  }
  return out;
}

/// 100 equal-width bins over [min, max] of the finite values; the last bin
/// is closed on the right.
inline std::string histogram_csv(const std::vector<double>& values, std::size_t bins = 100) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : values)
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  std::string out = "bin,lo,hi,count\n";
  if (!(lo <= hi)) return out;
  std::vector<std::size_t> count(bins, 0);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    auto b = width > 0.0 ? static_cast<std::size_t>((v - lo) / width) : 0;
    ++count[std::min(b, bins - 1)];
  }
  for (std::size_t b = 0; b < bins; ++b) {
    const double a = lo + width * static_cast<double>(b);
    const double z = b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1);
    out += std::to_string(b) + "," + format_double(a) + "," + format_double(z) + "," + std::to_string(count[b]) + "\n";
  }
  return out;
}

inline std::string effects_csv(const EvalReport& r) {
  std::string out = "level,mu_hat,true_mu\n";
  const std::size_t rows = std::max(r.mu_hat.size(), r.true_mu.size());
  for (std::size_t c = 0; c < rows; ++c) {
    out += std::to_string(c) + ",";
    if (c < r.mu_hat.size()) out += format_double(r.mu_hat[c]);
    out += ",";
    if (c < r.true_mu.size()) out += format_double(r.true_mu[c]);
    out += "\n";
  }
  return out;
}

}  // namespace pcm::io
