#include "flowrec/harness.hpp"

#include "flowrec/cubic.hpp"
#include "flowrec/rng.hpp"
#include "flowrec/snapshot_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

namespace flowrec {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (value.empty() || ec != std::errc{} || ptr != value.data() + value.size()) {
    fail(ErrorCode::parse_error, "bad value '" + value + "' for " + key);
  }
  return out;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool set_data_value(BenchmarkConfig& c, const std::string& key, const std::string& v) {
  auto& s = c.sizes;
  auto& sp = c.spectrum;
  if (key == "data.seed") c.data_seed = parse_number<std::uint64_t>(key, v);
  else if (key == "data.per_cad_count") c.per_cad_count = parse_number<int>(key, v);
  else if (key == "data.length_scale") c.length_scale = parse_number<double>(key, v);
  else if (key == "data.cads") {
    c.cads.clear();
    for (const auto& item : split(v, ',')) c.cads.push_back(parse_number<double>(key, item));
  } else if (key == "data.obstacles") {
    c.domain.obstacles.clear();
    for (const auto& item : split(v, ';')) {
      const auto parts = split(item, ':');
      if (parts.size() != 4) fail(ErrorCode::parse_error, "obstacle needs x0:z0:x1:z1, got '" + item + "'");
      c.domain.obstacles.push_back({parse_number<double>(key, parts[0]), parse_number<double>(key, parts[1]),
                                    parse_number<double>(key, parts[2]), parse_number<double>(key, parts[3])});
    }
  } else if (key == "data.width") c.domain.width = parse_number<double>(key, v);
  else if (key == "data.height_start") c.domain.height_start = parse_number<double>(key, v);
  else if (key == "data.height_end") c.domain.height_end = parse_number<double>(key, v);
  else if (key == "data.n_modes") sp.n_modes = parse_number<int>(key, v);
  else if (key == "data.k_min") sp.k_min = parse_number<double>(key, v);
  else if (key == "data.k_max") sp.k_max = parse_number<double>(key, v);
  else if (key == "data.decay") sp.decay = parse_number<double>(key, v);
  else if (key == "data.amplitude") sp.amplitude = parse_number<double>(key, v);
  else if (key == "data.spectrum_seed") sp.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "data.variation") sp.variation = parse_number<double>(key, v);
  else if (key == "data.turbulence") sp.turbulence = parse_number<double>(key, v);
  else if (key == "data.turbulence_k_min") sp.turbulence_k_min = parse_number<double>(key, v);
  else if (key == "data.turbulence_k_max") sp.turbulence_k_max = parse_number<double>(key, v);
  else if (key == "data.panel_side") s.panel_side = parse_number<double>(key, v);
  else if (key == "data.panel_min_points") s.panel_min_points = parse_number<int>(key, v);
  else if (key == "data.panel_max_points") s.panel_max_points = parse_number<int>(key, v);
  else if (key == "data.train_ratio") s.train_ratio = parse_number<double>(key, v);
  else if (key == "data.val_ratio") s.val_ratio = parse_number<double>(key, v);
  else if (key == "data.slice_count") s.slice_count = parse_number<int>(key, v);
  else if (key == "data.slice_min_area_factor") s.slice_min_area_factor = parse_number<double>(key, v);
  else if (key == "data.slice_max_area_factor") s.slice_max_area_factor = parse_number<double>(key, v);
  else if (key == "data.slice_points_per_panel_area") s.slice_points_per_panel_area = parse_number<int>(key, v);
  else if (key == "data.slice_min_points") s.slice_min_points = parse_number<int>(key, v);
  else if (key == "data.slice_max_points") s.slice_max_points = parse_number<int>(key, v);
  else if (key == "data.jitter") s.jitter = parse_number<double>(key, v);
  else return false;
  return true;
}

double mean_of(const std::vector<MetricsReport>& reports, double MetricsReport::*field) {
  double total = 0.0;
  for (const auto& r : reports) total += r.*field;
  return reports.empty() ? std::numeric_limits<double>::quiet_NaN()
                         : total / static_cast<double>(reports.size());
}

}  // namespace

double BenchmarkConfig::effective_length_scale() const {
  return length_scale > 0.0 ? length_scale : std::sqrt(2.0) * sizes.panel_side;
}

void BenchmarkConfig::validate() const {
  train.validate();
  domain.validate();
  spectrum.validate();
  if (cads.empty()) fail(ErrorCode::invalid_argument, "config: data.cads is empty");
  if (per_cad_count < 1) fail(ErrorCode::invalid_argument, "config: data.per_cad_count must be >= 1");
  if (sizes.panel_min_points < 4 || sizes.panel_max_points < sizes.panel_min_points) {
    fail(ErrorCode::invalid_argument, "config: need 4 <= panel_min_points <= panel_max_points");
  }
  if (sizes.slice_count < 0) fail(ErrorCode::invalid_argument, "config: data.slice_count must be >= 0");
  if (length_scale < 0.0) fail(ErrorCode::invalid_argument, "config: data.length_scale must be >= 0");
}

void apply_benchmark_text(BenchmarkConfig& config, std::istream& in, const std::string& source) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) fail(ErrorCode::parse_error, where + "expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    try {
      if (!set_config_value(config.train, key, value) && !set_data_value(config, key, value)) {
        fail(ErrorCode::parse_error, "unknown key '" + key + "'");
      }
    } catch (const Error& e) {
      fail(e.code(), where + e.what());
    }
  }
  config.validate();
}

BenchmarkConfig load_benchmark_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot open " + path.string());
  BenchmarkConfig config;
  apply_benchmark_text(config, in, path.string());
  return config;
}

Dataset generate_dataset(const BenchmarkConfig& config) {
  config.validate();
  return make_dataset(config.domain, config.cads, config.spectrum, config.per_cad_count, config.sizes,
                      config.data_seed);
}

Dataset load_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) fail(ErrorCode::io_error, "cannot open " + manifest.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != "path,split,size_class,cad,n_points") {
    fail(ErrorCode::parse_error, manifest.string() + ":1: expected header path,split,size_class,cad,n_points");
  }
  Dataset ds;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    const std::string where = manifest.string() + ":" + std::to_string(line_no) + ": ";
    if (cells.size() != 5) fail(ErrorCode::parse_error, where + "expected 5 columns");
    DatasetEntry e;
    e.snapshot = load_snapshot(manifest.parent_path() / cells[0]);
    if (cells[1] == "train") e.split = Split::train;
    else if (cells[1] == "val") e.split = Split::val;
    else if (cells[1] == "test") e.split = Split::test;
    else fail(ErrorCode::parse_error, where + "unknown split '" + cells[1] + "'");
    if (cells[2] == "panel") e.size_class = SizeClass::panel;
    else if (cells[2] == "slice") e.size_class = SizeClass::slice;
    else fail(ErrorCode::parse_error, where + "unknown size class '" + cells[2] + "'");
    e.snapshot.cad = parse_number<double>("cad", cells[3]);
    ds.entries.push_back(std::move(e));
  }
  return ds;
}

BenchmarkData prepare_benchmark(const Dataset& dataset, const BenchmarkConfig& config) {
  BenchmarkData data;
  const double scale = config.effective_length_scale();
  for (std::size_t i = 0; i < dataset.entries.size(); ++i) {
    const auto& e = dataset.entries[i];
    const FlowGraph g = build_knn_graph(e.snapshot, config.train.knn, scale);
    SparseSample s = mask_random(g, config.train.keep_fraction, mix_seed(config.train.seed, 100 + i));
    switch (e.split) {
      case Split::train: data.train.push_back(std::move(s)); break;
      case Split::val: data.val.push_back(std::move(s)); break;
      case Split::test:
        data.test.push_back(std::move(s));
        data.test_size.push_back(e.size_class);
        data.test_tag.push_back(e.snapshot.domain_tag);
        break;
    }
  }
  return data;
}

std::vector<AblationVariant> ablation_grid() {
  return {
      {"none", LayerKind::attention, false, false},
      {"fp", LayerKind::attention, true, false},
      {"fp+bi", LayerKind::attention, true, true},
      {"gcn", LayerKind::gcn, true, true},
      {"mean_aggregator", LayerKind::mean_aggregator, true, true},
  };
}

const AblationRow& AblationTable::row(std::string_view name) const {
  for (const auto& r : rows) {
    if (r.variant.name == name) return r;
  }
  fail(ErrorCode::invalid_argument, "no ablation row named " + std::string(name));
}

AblationTable run_ablation(const BenchmarkData& data, const TrainConfig& config, const Progress& progress) {
  if (data.test.empty()) fail(ErrorCode::invalid_argument, "run_ablation: no test samples");
  PropagationOptions fp;
  fp.max_iters = config.fp_max_iters;
  fp.tol = config.fp_tol;

  AblationTable table;
  for (const auto& variant : ablation_grid()) {
    AblationRow row;
    row.variant = variant;
    TrainOptions options;
    options.layer_kind = variant.kind;
    options.use_fp = variant.use_fp;
    options.use_bi = variant.use_bi;
    if (progress) {
      options.on_epoch = [&](const EpochRecord& r) {
        std::ostringstream msg;
        msg << variant.name << " epoch " << r.epoch << " train " << r.train_loss << " val " << r.val_loss;
        progress(msg.str());
      };
    }
    try {
      TrainResult result = train(data.train, data.val, config, options);
      row.parameters = static_cast<std::size_t>(param_count(result.model));
      row.best_epoch = result.history.best_epoch;
      row.final_train_loss = result.history.epochs.back().train_loss;
      for (std::size_t i = 0; i < data.test.size(); ++i) {
        const auto& s = data.test[i];
        row.reports.push_back(make_report(reconstruct(result.model, s, fp), s.target_velocities,
                                          s.eval_mask, variant.name, data.test_tag[i]));
      }
      row.mae = mean_of(row.reports, &MetricsReport::mae);
      row.rmse = mean_of(row.reports, &MetricsReport::rmse);
      row.r2 = mean_of(row.reports, &MetricsReport::r2);
      row.model = std::move(result.model);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::diverged && e.code() != ErrorCode::non_finite) throw;
      row.failed = true;
      row.error = e.what();
      row.mae = row.rmse = row.r2 = std::numeric_limits<double>::quiet_NaN();
    }
    if (progress) progress(variant.name + (row.failed ? " failed: " + row.error : " done"));
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_ablation_csv(std::ostream& out, const AblationTable& table) {
  out << "variant,layer,fp,bi,status,mae,rmse,r2,n_snapshots,parameters,best_epoch,final_train_loss\n";
  out << std::setprecision(17);
  for (const auto& r : table.rows) {
    out << r.variant.name << ',' << to_string(r.variant.kind) << ',' << int(r.variant.use_fp) << ','
        << int(r.variant.use_bi) << ',' << (r.failed ? "failed" : "ok") << ',' << r.mae << ','
        << r.rmse << ',' << r.r2 << ',' << r.reports.size() << ',' << r.parameters << ','
        << r.best_epoch << ',' << r.final_train_loss << '\n';
  }
}

Summary summarize(std::vector<double> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) {
    s.mean = s.median = s.q1 = s.q3 = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(values.size());
  s.median = quantile(0.5);
  s.q1 = quantile(0.25);
  s.q3 = quantile(0.75);
  return s;
}

const MethodAggregate& EvaluationReport::aggregate(std::string_view method,
                                                   std::string_view size_class) const {
  for (const auto& a : aggregates) {
    if (a.method == method && a.size_class == size_class) return a;
  }
  fail(ErrorCode::invalid_argument,
       "no aggregate for " + std::string(method) + "/" + std::string(size_class));
}

double EvaluationReport::mae_gap(std::string_view size_class) const {
  return aggregate("cubic", size_class).mae.mean - aggregate("gacn", size_class).mae.mean;
}

EvaluationReport evaluate_methods(const BenchmarkData& data, const GacnModel& model,
                                  const PropagationOptions& fp) {
  if (data.test.empty()) fail(ErrorCode::invalid_argument, "evaluate_methods: no test samples");
  EvaluationReport report;
  const std::vector<std::string> methods{"gacn", "cubic"};
  std::vector<std::string> size_of_report;
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    const auto& s = data.test[i];
    const auto& tag = data.test_tag[i];
    const auto cubic = cubic_baseline(s);
    if (cubic.nearest_fallback) report.fallback_snapshots.push_back(tag);
    report.reports.push_back(make_report(reconstruct(model, s, fp), s.target_velocities, s.eval_mask,
                                         "gacn", tag));
    report.reports.push_back(make_report(cubic.velocities, s.target_velocities, s.eval_mask, "cubic", tag));
    size_of_report.insert(size_of_report.end(), 2, std::string(to_string(data.test_size[i])));
  }
  for (const std::string size_class : {"panel", "slice", "all"}) {
    for (const auto& method : methods) {
      std::vector<double> m, r, q;
      for (std::size_t k = 0; k < report.reports.size(); ++k) {
        const auto& rep = report.reports[k];
        if (rep.method != method || (size_class != "all" && size_of_report[k] != size_class)) continue;
        m.push_back(rep.mae);
        r.push_back(rep.rmse);
        q.push_back(rep.r2);
      }
      if (m.empty()) continue;
      report.aggregates.push_back({method, size_class, summarize(m), summarize(r), summarize(q)});
    }
  }
  return report;
}

void write_evaluation_csv(std::ostream& out, const EvaluationReport& report) {
  out << "method,size_class,count";
  for (const char* metric : {"mae", "rmse", "r2"}) {
    for (const char* stat : {"mean", "median", "q1", "q3"}) out << ',' << metric << '_' << stat;
  }
  out << '\n' << std::setprecision(17);
  for (const auto& a : report.aggregates) {
    out << a.method << ',' << a.size_class << ',' << a.mae.count;
    for (const Summary* s : {&a.mae, &a.rmse, &a.r2}) {
      out << ',' << s->mean << ',' << s->median << ',' << s->q1 << ',' << s->q3;
    }
    out << '\n';
  }
}

}  // namespace flowrec
