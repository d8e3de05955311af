// flowrec: synthetic data generation, training, reconstruction and
// benchmarking for sparse velocity-field reconstruction.

#include "flowrec/checkpoint.hpp"
#include "flowrec/harness.hpp"
#include "flowrec/snapshot_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace flowrec;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key = value config file");
  cmd->add_option("--seed", c.seed, "override the seed");
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
}

BenchmarkConfig load_config(const Common& c) {
  BenchmarkConfig cfg;
  if (!c.config.empty()) cfg = load_benchmark_config(c.config);
  return cfg;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io_error, "cannot write " + path.string());
  return out;
}

fs::path out_dir(const Common& c) {
  fs::create_directories(c.out);
  return c.out;
}

Dataset load_or_generate(const BenchmarkConfig& cfg, const std::string& manifest) {
  return manifest.empty() ? generate_dataset(cfg) : load_manifest(manifest);
}

json report_json(const MetricsReport& r) {
  return {{"method", r.method},  {"snapshot", r.snapshot}, {"mae", r.mae},
          {"rmse", r.rmse},      {"r2", r.r2},             {"n_eval", r.n_eval},
          {"per_node_abs_error", r.per_node_abs_error}};
}

json summary_json(const Summary& s) {
  return {{"mean", s.mean}, {"median", s.median}, {"q1", s.q1}, {"q3", s.q3}, {"count", s.count}};
}

void log(const std::string& msg) { std::cerr << msg << '\n'; }

int cmd_gen_data(const Common& c) {
  BenchmarkConfig cfg = load_config(c);
  if (c.seed) cfg.data_seed = *c.seed;
  const Dataset ds = generate_dataset(cfg);
  const fs::path dir = out_dir(c);
  fs::create_directories(dir / "snapshots");
  std::vector<std::string> paths;
  for (const auto& e : ds.entries) {
    const std::string rel = "snapshots/" + e.snapshot.domain_tag + ".csv";
    save_snapshot(e.snapshot, dir / rel);
    paths.push_back(rel);
  }
  auto out = open_out(dir / "manifest.csv");
  write_manifest(out, paths, ds);
  std::cout << "wrote " << ds.entries.size() << " snapshots to " << (dir / "manifest.csv").string() << '\n';
  return 0;
}

int cmd_train(const Common& c, const std::string& manifest, const std::string& layer, bool no_fp,
              bool no_bi) {
  BenchmarkConfig cfg = load_config(c);
  if (c.seed) cfg.train.seed = *c.seed;
  const BenchmarkData data = prepare_benchmark(load_or_generate(cfg, manifest), cfg);
  TrainOptions opt;
  opt.layer_kind = parse_layer_kind(layer);
  opt.use_fp = !no_fp;
  opt.use_bi = !no_bi;
  opt.on_epoch = [](const EpochRecord& r) {
    std::cerr << "epoch " << r.epoch << " train " << r.train_loss << " val " << r.val_loss << " lr "
              << r.lr << '\n';
  };
  const TrainResult res = train(data.train, data.val, cfg.train, opt);
  const fs::path dir = out_dir(c);
  save_checkpoint(res.model, dir / "model.ckpt");
  auto hist = open_out(dir / "history.csv");
  write_history_csv(hist, res.history);
  std::cout << "parameters " << param_count(res.model) << " (reference " << kReferenceParameterCount
            << ")\nbest_epoch " << res.history.best_epoch << "\ncheckpoint "
            << (dir / "model.ckpt").string() << '\n';
  return 0;
}

int cmd_reconstruct(const Common& c, const std::string& checkpoint, const std::string& input,
                    std::optional<double> keep_fraction) {
  BenchmarkConfig cfg = load_config(c);
  if (c.seed) cfg.train.seed = *c.seed;
  const GacnModel model = load_checkpoint(checkpoint);
  const FlowSnapshot snap = load_snapshot(input);
  const FlowGraph g = build_knn_graph(snap, model.knn, model.length_scale);
  SparseSample sample;
  if (!snap.mask.empty()) {
    sample = make_sparse_sample(g, snap.mask, snap.velocities,
                                std::vector<std::uint8_t>(static_cast<std::size_t>(snap.size()), 1));
  } else {
    sample = mask_random(g, keep_fraction.value_or(cfg.train.keep_fraction), cfg.train.seed);
  }
  PropagationOptions fp;
  fp.max_iters = cfg.train.fp_max_iters;
  fp.tol = cfg.train.fp_tol;
  const Matrix pred = reconstruct(model, sample, fp);
  const fs::path path = out_dir(c) / "reconstruction.csv";
  auto out = open_out(path);
  out << "x,z,u_x_pred,u_z_pred\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    out << snap.points(i, 0) << ',' << snap.points(i, 1) << ',' << pred(i, 0) << ',' << pred(i, 1) << '\n';
  }
  std::cout << "wrote " << path.string() << '\n';
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& checkpoint, const std::string& manifest) {
  BenchmarkConfig cfg = load_config(c);
  if (c.seed) cfg.train.seed = *c.seed;
  const GacnModel model = load_checkpoint(checkpoint);
  cfg.train.knn = model.knn;
  cfg.length_scale = model.length_scale;
  const BenchmarkData data = prepare_benchmark(load_or_generate(cfg, manifest), cfg);
  PropagationOptions fp;
  fp.max_iters = cfg.train.fp_max_iters;
  fp.tol = cfg.train.fp_tol;
  const EvaluationReport rep = evaluate_methods(data, model, fp);

  json j;
  j["reports"] = json::array();
  for (const auto& r : rep.reports) j["reports"].push_back(report_json(r));
  j["aggregates"] = json::array();
  for (const auto& a : rep.aggregates) {
    j["aggregates"].push_back({{"method", a.method},
                               {"size_class", a.size_class},
                               {"mae", summary_json(a.mae)},
                               {"rmse", summary_json(a.rmse)},
                               {"r2", summary_json(a.r2)}});
  }
  j["cubic_nearest_fallback"] = rep.fallback_snapshots;
  const fs::path dir = out_dir(c);
  open_out(dir / "evaluation.json") << j.dump(2) << '\n';
  auto csv = open_out(dir / "evaluation.csv");
  write_evaluation_csv(csv, rep);
  for (const auto& a : rep.aggregates) {
    std::cout << a.method << ' ' << a.size_class << " mae " << a.mae.mean << " (n=" << a.mae.count << ")\n";
  }
  return 0;
}

int cmd_ablate(const Common& c, const std::string& manifest, bool quiet) {
  BenchmarkConfig cfg = load_config(c);
  if (c.seed) cfg.train.seed = *c.seed;
  const BenchmarkData data = prepare_benchmark(load_or_generate(cfg, manifest), cfg);
  const AblationTable table = run_ablation(data, cfg.train, quiet ? Progress{} : Progress{log});

  json j;
  j["rows"] = json::array();
  for (const auto& r : table.rows) {
    json row = {{"variant", r.variant.name},
                {"layer", std::string(to_string(r.variant.kind))},
                {"fp", r.variant.use_fp},
                {"bi", r.variant.use_bi},
                {"status", r.failed ? "failed" : "ok"},
                {"mae", r.mae},
                {"rmse", r.rmse},
                {"r2", r.r2},
                {"parameters", r.parameters},
                {"reference_parameters", kReferenceParameterCount},
                {"best_epoch", r.best_epoch}};
    if (r.failed) row["error"] = r.error;
    row["reports"] = json::array();
    for (const auto& rep : r.reports) row["reports"].push_back(report_json(rep));
    j["rows"].push_back(std::move(row));
  }
  const fs::path dir = out_dir(c);
  open_out(dir / "ablation.json") << j.dump(2) << '\n';
  auto csv = open_out(dir / "ablation.csv");
  write_ablation_csv(csv, table);
  write_ablation_csv(std::cout, table);
  return 0;
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch == '\n' ? ' ' : ch;
  }
  return out + "\"";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse velocity-field reconstruction on point-cloud graphs"};
  app.require_subcommand(1);

  Common gen, tr, rec, ev, ab;
  std::string manifest_tr, manifest_ev, manifest_ab, layer = "attention", checkpoint_rec, checkpoint_ev, input;
  bool no_fp = false, no_bi = false, quiet = false;
  std::optional<double> keep;

  auto* g = app.add_subcommand("gen-data", "generate a synthetic dataset and manifest");
  add_common(g, gen);
  auto* t = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common(t, tr);
  t->add_option("--data", manifest_tr, "manifest.csv from gen-data (default: generate from config)");
  t->add_option("--layer", layer, "attention | gcn | mean_aggregator")->capture_default_str();
  t->add_flag("--no-fp", no_fp, "disable feature propagation");
  t->add_flag("--no-bi", no_bi, "disable the binary indicator");
  auto* r = app.add_subcommand("reconstruct", "reconstruct one snapshot CSV");
  add_common(r, rec);
  r->add_option("--checkpoint", checkpoint_rec)->required();
  r->add_option("--input", input, "snapshot CSV (x,z,u_x,u_z[,mask])")->required();
  r->add_option("--keep-fraction", keep, "retention when the input has no mask column");
  auto* e = app.add_subcommand("evaluate", "compare a model with cubic interpolation");
  add_common(e, ev);
  e->add_option("--checkpoint", checkpoint_ev)->required();
  e->add_option("--data", manifest_ev, "manifest.csv from gen-data");
  auto* a = app.add_subcommand("ablate", "train and score the five ablation variants");
  add_common(a, ab);
  a->add_option("--data", manifest_ab, "manifest.csv from gen-data");
  a->add_flag("--quiet", quiet, "no per-epoch progress");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err);
  }

  try {
    if (g->parsed()) return cmd_gen_data(gen);
    if (t->parsed()) return cmd_train(tr, manifest_tr, layer, no_fp, no_bi);
    if (r->parsed()) return cmd_reconstruct(rec, checkpoint_rec, input, keep);
    if (e->parsed()) return cmd_evaluate(ev, checkpoint_ev, manifest_ev);
    if (a->parsed()) return cmd_ablate(ab, manifest_ab, quiet);
  } catch (const Error& err) {
    std::cerr << "error code=" << to_string(err.code()) << " message=" << quoted(err.what()) << '\n';
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error code=internal message=" << quoted(err.what()) << '\n';
    return 2;
  }
  return 1;
}
