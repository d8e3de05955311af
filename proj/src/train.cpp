#include "flowrec/train.hpp"

#include "flowrec/losses.hpp"
#include "flowrec/rng.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace flowrec {

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) fail(ErrorCode::invalid_argument, std::string("config: ") + what);
  };
  require(lr0 > 0.0, "lr0 must be positive");
  require(epochs >= 1, "epochs must be >= 1");
  require(plateau_patience >= 1, "plateau_patience must be >= 1");
  require(plateau_factor > 0.0 && plateau_factor < 1.0, "plateau_factor must lie in (0, 1)");
  require(min_improvement >= 0.0, "min_improvement must be >= 0");
  require(min_lr > 0.0, "min_lr must be positive");
  require(keep_fraction > 0.0 && keep_fraction <= 1.0, "keep_fraction must lie in (0, 1]");
  require(validation_fraction >= 0.0 && validation_fraction < 1.0,
          "validation_fraction must lie in [0, 1)");
  require(widths.size() >= 2 && widths.front() == feature::count,
          "widths must start at 5 and name at least one layer");
  require(knn >= 1, "knn must be >= 1");
  require(fp_max_iters >= 1, "fp_max_iters must be >= 1");
  require(fp_tol >= 0.0, "fp_tol must be >= 0");
  require(divergence_threshold > 0.0, "divergence_threshold must be positive");
}

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
  if (ec != std::errc{} || ptr != value.data() + value.size() || value.empty()) {
    fail(ErrorCode::parse_error, "bad value '" + value + "' for " + key);
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  fail(ErrorCode::parse_error, "bad boolean '" + value + "' for " + key);
}

}  // namespace

bool set_config_value(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "lr0") c.lr0 = parse_number<double>(key, value);
  else if (key == "epochs") c.epochs = parse_number<int>(key, value);
  else if (key == "plateau_patience") c.plateau_patience = parse_number<int>(key, value);
  else if (key == "plateau_factor") c.plateau_factor = parse_number<double>(key, value);
  else if (key == "min_improvement") c.min_improvement = parse_number<double>(key, value);
  else if (key == "min_lr") c.min_lr = parse_number<double>(key, value);
  else if (key == "keep_fraction") c.keep_fraction = parse_number<double>(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "validation_fraction") c.validation_fraction = parse_number<double>(key, value);
  else if (key == "knn") c.knn = parse_number<int>(key, value);
  else if (key == "fp_max_iters") c.fp_max_iters = parse_number<int>(key, value);
  else if (key == "fp_tol") c.fp_tol = parse_number<double>(key, value);
  else if (key == "use_diffusion") c.use_diffusion = parse_bool(key, value);
  else if (key == "divergence_threshold") c.divergence_threshold = parse_number<double>(key, value);
  else if (key == "widths") {
    c.widths.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) c.widths.push_back(parse_number<int>(key, trim(item)));
  } else {
    return false;
  }
  return true;
}

void apply_config_text(TrainConfig& config, std::istream& in, const std::string& source) {
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
      if (!set_config_value(config, key, value)) {
        fail(ErrorCode::parse_error, "unknown key '" + key + "'");
      }
    } catch (const Error& e) {
      fail(e.code(), where + e.what());
    }
  }
  config.validate();
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot open " + path.string());
  TrainConfig config;
  apply_config_text(config, in, path.string());
  return config;
}

void write_history_csv(std::ostream& out, const TrainHistory& history) {
  out << "epoch,train_loss,val_loss,lr,seconds\n" << std::setprecision(17);
  for (const auto& r : history.epochs) {
    out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.lr << ',' << r.seconds
        << '\n';
  }
}

namespace {

struct Prepared {
  GraphContext ctx;
  Matrix input;   // n x 5, velocities already scaled
  Matrix target;  // n x 2, scaled
  std::vector<std::uint8_t> eval_mask;
};

Prepared prepare(const GacnModel& model, const SparseSample& sample, const PropagationOptions& fp) {
  Prepared p;
  p.ctx = GraphContext::build(sample.graph, model.spec.kind);
  p.input = build_input_features(model, sample, network_velocities(model, sample, fp));
  p.target = sample.target_velocities / model.velocity_scale;
  p.eval_mask = sample.eval_mask;
  return p;
}

Gradients gradients_of(const GacnModel& model, const GraphContext& ctx, const Matrix& input,
                       const Matrix& target, const std::vector<std::uint8_t>& mask) {
  auto tr = trace_forward(model, ctx, input, true);
  const auto loss = ad::masked_mse(tr.tape, tr.output, target, mask);
  tr.tape.backward(loss);
  Gradients g;
  g.loss = tr.tape.value(loss)(0, 0);
  const auto names = parameters(model);
  for (std::size_t k = 0; k < tr.params.size(); ++k) {
    g.grads.push_back(tr.tape.grad(tr.params[k]));
    if (!g.grads.back().allFinite()) {
      fail(ErrorCode::non_finite, "non-finite gradient for " + names[k].name);
    }
  }
  return g;
}

double eval_loss(const GacnModel& model, const Prepared& p, bool all_nodes) {
  auto tr = trace_forward(model, p.ctx, p.input, false);
  const std::vector<std::uint8_t> all(static_cast<std::size_t>(p.input.rows()), 1);
  return mse_loss(tr.tape.value(tr.output), p.target, all_nodes ? all : p.eval_mask);
}

}  // namespace

Gradients backward(const GacnModel& model, const SparseSample& sample, const Matrix& propagated) {
  const GraphContext ctx = GraphContext::build(sample.graph, model.spec.kind);
  const Matrix input = build_input_features(model, sample, propagated);
  return gradients_of(model, ctx, input, sample.target_velocities / model.velocity_scale,
                      sample.eval_mask);
}

Matrix network_velocities(const GacnModel& model, const SparseSample& sample,
                          const PropagationOptions& fp) {
  if (!model.spec.use_fp) return sample.known_velocities();
  return propagate_features(sample, rw_adjacency(sample.graph), fp).velocities;
}

Matrix reconstruct(const GacnModel& model, const SparseSample& sample, const PropagationOptions& fp) {
  return gacn_forward(model, sample, network_velocities(model, sample, fp));
}

double rms_velocity(const std::vector<SparseSample>& samples) {
  double total = 0.0;
  double count = 0.0;
  for (const auto& s : samples) {
    total += s.target_velocities.squaredNorm();
    count += static_cast<double>(s.target_velocities.size());
  }
  if (count == 0.0 || !(total > 0.0)) return 1.0;
  return std::sqrt(total / count);
}

TrainResult train(const std::vector<SparseSample>& train_set,
                  const std::vector<SparseSample>& val_set, const TrainConfig& config,
                  const TrainOptions& options) {
  config.validate();
  if (train_set.empty()) fail(ErrorCode::invalid_argument, "training set is empty");

  ModelSpec spec;
  spec.widths = config.widths;
  spec.kind = options.layer_kind;
  spec.use_diffusion = config.use_diffusion;
  spec.use_fp = options.use_fp;
  spec.use_bi = options.use_bi;
  GacnModel model = init_glorot(spec, mix_seed(config.seed, 1));
  model.velocity_scale = rms_velocity(train_set);
  model.length_scale = train_set.front().graph.length_scale();
  model.knn = config.knn;

  PropagationOptions fp;
  fp.max_iters = config.fp_max_iters;
  fp.tol = config.fp_tol;
  std::vector<Prepared> train_data;
  std::vector<Prepared> val_data;
  for (const auto& s : train_set) train_data.push_back(prepare(model, s, fp));
  for (const auto& s : val_set) val_data.push_back(prepare(model, s, fp));

  TrainResult result;
  result.model = model;
  auto& history = result.history;
  AdamState adam = AdamState::for_parameters(parameters(std::as_const(model)));
  PlateauScheduler scheduler(config.plateau_patience, config.plateau_factor,
                             config.min_improvement, config.min_lr);
  double lr = config.lr0;
  double best_val = std::numeric_limits<double>::infinity();
  const auto start = std::chrono::steady_clock::now();

  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng rng(mix_seed(config.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    shuffle(order, rng);
    double train_loss = 0.0;
    for (const auto idx : order) {
      const auto& p = train_data[idx];
      const std::vector<std::uint8_t> all(static_cast<std::size_t>(p.input.rows()), 1);
      Gradients g;
      try {
        g = gradients_of(model, p.ctx, p.input, p.target, all);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::non_finite) throw;
        throw TrainingDiverged(std::string("epoch ") + std::to_string(epoch) + ": " + e.what(), history);
      }
      if (!std::isfinite(g.loss) || g.loss > config.divergence_threshold) {
        throw TrainingDiverged("training loss diverged at epoch " + std::to_string(epoch), history);
      }
      train_loss += g.loss;
      adam_step(parameters(model), g.grads, adam, lr);
    }
    train_loss /= static_cast<double>(train_data.size());

    double val_loss = 0.0;
    if (val_data.empty()) {
      val_loss = train_loss;
    } else {
      for (const auto& p : val_data) val_loss += eval_loss(model, p, false);
      val_loss /= static_cast<double>(val_data.size());
    }
    if (!std::isfinite(val_loss)) {
      throw TrainingDiverged("validation loss is not finite at epoch " + std::to_string(epoch), history);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_loss;
    rec.val_loss = val_loss;
    rec.lr = lr;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.epochs.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);

    if (val_loss < best_val) {
      best_val = val_loss;
      result.model = model;
      history.best_epoch = epoch;
    }
    lr = scheduler.step(val_loss, lr);
  }
  return result;
}

TrainResult train(const std::vector<SparseSample>& dataset, const TrainConfig& config,
                  LayerKind layer_kind, bool use_fp, bool use_bi) {
  if (dataset.empty()) fail(ErrorCode::invalid_argument, "dataset is empty");
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(config.seed, 2));
  shuffle(order, rng);
  const auto n_val = static_cast<std::size_t>(
      std::llround(config.validation_fraction * static_cast<double>(dataset.size())));
  std::vector<SparseSample> train_set;
  std::vector<SparseSample> val_set;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const bool to_val = i < n_val && n_val < dataset.size();
    (to_val ? val_set : train_set).push_back(dataset[order[i]]);
  }
  TrainOptions options;
  options.layer_kind = layer_kind;
  options.use_fp = use_fp;
  options.use_bi = use_bi;
  return train(train_set, val_set, config, options);
}

}  // namespace flowrec
