#include "dynerr/cli.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "dynerr/attractor.hpp"
#include "dynerr/core.hpp"
#include "dynerr/forecast.hpp"
#include "dynerr/generators.hpp"
#include "dynerr/indices.hpp"
#include "dynerr/metrics.hpp"

namespace dynerr {

namespace fs = std::filesystem;

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

TrajectoryDataset load_any(const fs::path& path) { return load_dataset(path, format_from_path(path)); }

std::vector<double> read_latitudes(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<double> lats;
  std::string tok;
  while (in >> tok) {
    for (auto& c : tok) {
      if (c == ',') c = ' ';
    }
    std::istringstream parts(tok);
    double v = 0.0;
    while (parts >> v) lats.push_back(v);
  }
  if (lats.empty()) throw IoError(path.string() + ": no latitudes found");
  return lats;
}

CLI::Validator open_quantile() {
  return CLI::Validator(
      [](std::string& text) -> std::string {
        double v = 0.0;
        try {
          v = std::stod(text);
        } catch (const std::exception&) {
          return "q must be a number";
        }
        return v > 0.5 && v < 1.0 ? std::string() : "q must lie in (0.5, 1), got " + text;
      },
      "(0.5,1)");
}

struct Context {
  RunManifest manifest;
  std::ostream& out;
};

// ---- generate --------------------------------------------------------------

struct GenerateOptions {
  std::string system;
  std::string out_dir;
  std::optional<std::size_t> steps;
  std::optional<double> dt;
  std::optional<std::size_t> transient;
  std::size_t downsample = 25;
  double sigma = 10.0, rho = 28.0, beta = 2.667;
  std::vector<double> init = {1.0, 1.0, 1.0};
  double L = 22.0;
  std::size_t grid = 64;
  std::uint64_t seed = 42;
  bool normalize = false;
  std::string format = "binary";
};

void cmd_generate(const GenerateOptions& o, Context& ctx) {
  const System system = parse_system(o.system);
  TrajectoryDataset data = [&] {
    if (system == System::kLorenz) {
      LorenzParams p;
      p.sigma = o.sigma;
      p.rho = o.rho;
      p.beta = o.beta;
      if (o.dt) p.dt = *o.dt;
      if (o.steps) p.n_steps = *o.steps;
      if (o.transient) p.transient_discard = *o.transient;
      if (o.init.size() != 3) throw InvalidArgument("--init needs three values");
      p.init = {o.init[0], o.init[1], o.init[2]};
      return simulate_lorenz(p);
    }
    KsParams p;
    p.L = o.L;
    p.n_grid = o.grid;
    p.downsample = o.downsample;
    if (o.dt) p.dt_internal = *o.dt;
    if (o.steps) p.n_steps_internal = *o.steps;
    if (o.transient) p.transient_discard = *o.transient;
    return simulate_ks(p, o.seed);
  }();

  const auto parts = split(data);
  const NormStats stats = compute_norm_stats(parts.train);
  const fs::path dir(o.out_dir);
  ensure_dir(dir);
  const FileFormat fmt = o.format == "csv" ? FileFormat::kCsv : FileFormat::kBinary;
  const std::string ext = fmt == FileFormat::kCsv ? ".csv" : ".dytr";
  auto emit = [&](const TrajectoryDataset& ds, const std::string& name) {
    const TrajectoryDataset named(name, ds.dt(), o.normalize ? zscore(ds, stats).states() : ds.states(),
                                  ds.start_index());
    save_dataset(named, dir / (name + ext), fmt);
  };
  emit(parts.train, "train");
  emit(parts.val, "val");
  emit(parts.test, "test");
  write_json({{"mean", stats.mean}, {"std", stats.std}, {"normalized_outputs", o.normalize}},
             dir / "stats.json");
  ctx.manifest.config = {{"command", "generate"},      {"system", o.system},
                         {"n_times", data.n_times()},  {"n_space", data.n_space()},
                         {"dt", data.dt()},            {"seed", o.seed},
                         {"normalize", o.normalize},   {"format", o.format},
                         {"steps", o.steps ? nlohmann::json(*o.steps) : nlohmann::json()},
                         {"transient", o.transient ? nlohmann::json(*o.transient) : nlohmann::json()}};
  write_manifest(ctx.manifest, dir / "manifest.json");
  ctx.out << "wrote " << parts.train.n_times() << "/" << parts.val.n_times() << "/"
          << parts.test.n_times() << " rows (dt=" << data.dt() << ") to " << dir.string() << '\n';
}

// ---- indices ---------------------------------------------------------------

struct IndicesOptions {
  std::string reference;
  std::string query;
  double q = kDefaultQuantile;
  std::string out;
};

void cmd_indices(const IndicesOptions& o, Context& ctx) {
  const auto ref_ds = load_any(o.reference);
  const auto query = load_any(o.query);
  if (query.n_space() != ref_ds.n_space()) {
    throw InvalidArgument("query has " + std::to_string(query.n_space()) +
                          " columns but reference has " + std::to_string(ref_ds.n_space()));
  }
  const auto ref = build_reference(ref_ds);
  const auto idx = compute_indices(ref, query, o.q);

  std::ofstream out(o.out, std::ios::trunc);
  if (!out) throw IoError("cannot write " + o.out);
  out << "index,time,d,theta,valid,n_exceedances,gof_p\n";
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out << i << ',' << fmt17(query.time_of(i)) << ',' << fmt17(idx.d[i]) << ','
        << fmt17(idx.theta[i]) << ',' << (idx.valid[i] ? 1 : 0) << ',' << idx.n_exceedances[i]
        << ',' << fmt17(idx.gof_p[i]) << '\n';
  }
  if (!out) throw IoError("failed writing " + o.out);
  ctx.manifest.input_digests[o.reference] = sha256_file(o.reference);
  ctx.manifest.input_digests[o.query] = sha256_file(o.query);
  ctx.manifest.config = {{"command", "indices"}, {"q", o.q}};
  write_manifest(ctx.manifest, o.out + ".manifest.json");
  ctx.out << idx.n_valid() << "/" << idx.size() << " valid states written to " << o.out << '\n';
}

// ---- evaluate --------------------------------------------------------------

struct EvaluateOptions {
  std::string pred;
  std::string truth;
  std::string reference;
  double q = kDefaultQuantile;
  std::size_t bins = kDefaultBins;
  std::string lat_grid;
  std::string out_dir;
};

void cmd_evaluate(const EvaluateOptions& o, Context& ctx) {
  const auto pred = load_any(o.pred);
  const auto truth = load_any(o.truth);
  if (pred.n_times() != truth.n_times() || pred.n_space() != truth.n_space()) {
    throw InvalidArgument("prediction has " + std::to_string(pred.n_times()) + " rows x " +
                          std::to_string(pred.n_space()) + " columns but truth has " +
                          std::to_string(truth.n_times()) + " rows x " +
                          std::to_string(truth.n_space()) + " columns");
  }
  const auto ref = build_reference(load_any(o.reference));
  const ForecastPair pair{pred, truth, 1};
  const auto pred_idx = compute_indices(ref, pred, o.q);
  const auto true_idx = compute_indices(ref, truth, o.q);
  EvaluationReport report = build_report(pair, pred_idx, true_idx, std::nullopt, o.bins);
  if (!o.lat_grid.empty()) {
    report.lat_rmse = lat_weighted_rmse(pred.states(), truth.states(), read_latitudes(o.lat_grid));
    ctx.manifest.input_digests[o.lat_grid] = sha256_file(o.lat_grid);
  }
  const fs::path dir(o.out_dir);
  ensure_dir(dir);
  write_json(report, dir / "report.json");
  write_curve_csv(report.curve_d, dir / "curve_d.csv");
  write_curve_csv(report.curve_theta, dir / "curve_theta.csv");
  for (const auto& p : {o.pred, o.truth, o.reference}) {
    ctx.manifest.input_digests[p] = sha256_file(p);
  }
  ctx.manifest.config = {{"command", "evaluate"}, {"q", o.q}, {"bins", o.bins}};
  write_manifest(ctx.manifest, dir / "manifest.json");
  ctx.out << "mse=" << report.mse << " mse_d=" << report.mse_d << " mse_theta=" << report.mse_theta
          << " wd=" << report.wd << '\n';
}

// ---- rollout ---------------------------------------------------------------

struct RolloutOptions {
  std::string model = "analog";
  std::size_t k = 3;
  std::size_t m = 3;
  std::string reference;
  std::string test;
  std::optional<std::size_t> steps;
  std::size_t starts = 500;
  std::vector<double> eval;
  std::string units = "steps";
  std::string system = "lorenz";
  double q = kDefaultQuantile;
  std::size_t bins = kDefaultBins;
  std::string out_dir;
};

void cmd_rollout(const RolloutOptions& o, Context& ctx) {
  const auto ref_ds = load_any(o.reference);
  const auto test = load_any(o.test);
  if (test.n_space() != ref_ds.n_space()) {
    throw InvalidArgument("test has " + std::to_string(test.n_space()) +
                          " columns but reference has " + std::to_string(ref_ds.n_space()));
  }
  const System system = parse_system(o.system);
  const TimeScale ts = time_scale(system, test.dt());
  const auto ref = build_reference(ref_ds);

  RolloutStudyConfig cfg;
  cfg.m = o.m;
  cfg.steps = o.steps ? *o.steps : rollout_preset_steps(system, test.dt());
  cfg.n_starts = o.starts;
  cfg.q = o.q;
  cfg.n_bins = o.bins;
  cfg.lt_steps = ts.lt_steps;
  if (o.eval.empty()) throw InvalidArgument("--eval needs at least one time");
  for (double e : o.eval) {
    const double steps = o.units == "lt" ? e * static_cast<double>(ts.lt_steps) : e;
    const long long rounded = std::llround(steps);
    if (rounded < 1) throw InvalidArgument("eval time " + fmt17(e) + " maps to step < 1");
    cfg.eval_steps.push_back(static_cast<std::size_t>(rounded));
  }

  std::unique_ptr<Forecaster> model;
  if (o.model == "persistence") {
    model = std::make_unique<PersistenceForecaster>();
  } else {
    model = std::make_unique<AnalogForecaster>(ref, o.k, o.m);
  }
  const RolloutStudy study = rollout_study(*model, test, ref, cfg);

  const fs::path dir(o.out_dir);
  ensure_dir(dir);
  for (const auto& t : study.times) {
    nlohmann::json j = {{"step", t.step},
                        {"lt", std::isfinite(t.lt) ? nlohmann::json(t.lt) : nlohmann::json()},
                        {"survivors", t.survivors},
                        {"mean_mse", t.mean_mse},
                        {"std_mse", t.std_mse}};
    if (t.report) {
      j["report"] = *t.report;
    } else {
      j["error"] = t.error;
    }
    write_json(j, dir / ("report_step" + std::to_string(t.step) + ".json"));
  }
  write_rollout_csv(study, dir / "rollout.csv");
  for (const auto& p : {o.reference, o.test}) ctx.manifest.input_digests[p] = sha256_file(p);
  ctx.manifest.config = {{"command", "rollout"}, {"model", o.model},       {"k", o.k},
                         {"m", o.m},             {"steps", cfg.steps},     {"starts", o.starts},
                         {"eval", o.eval},       {"eval_steps", cfg.eval_steps},
                         {"units", o.units},     {"system", o.system},     {"q", o.q},
                         {"bins", o.bins},       {"lt_steps", ts.lt_steps}};
  write_manifest(ctx.manifest, dir / "manifest.json");
  ctx.out << "rollout study over " << study.starts.size() << " starts, " << study.times.size()
          << " eval times written to " << dir.string() << '\n';
}

// ---- report ----------------------------------------------------------------

struct ReportOptions {
  std::vector<std::string> inputs;
  std::string out;
};

const std::vector<std::string>& scalar_fields() {
  static const std::vector<std::string> fields = {
      "mse",    "nmse",       "mae",        "nmae",        "mse_d",           "mse_theta",
      "nmse_d", "nmse_theta", "mae_d",      "mae_theta",   "nmae_d",          "nmae_theta",
      "wd",     "wd_d",       "wd_theta",   "mean_d_pred", "mean_theta_pred", "mean_d_true",
      "mean_theta_true",      "n_valid",    "n_skipped"};
  return fields;
}

void cmd_report(const ReportOptions& o, Context& ctx) {
  std::ofstream out(o.out, std::ios::trunc);
  if (!out) throw IoError("cannot write " + o.out);
  out << "source";
  for (const auto& f : scalar_fields()) out << ',' << f;
  out << '\n';
  for (const auto& path : o.inputs) {
    nlohmann::json j = read_json(path);
    // Rollout files wrap the report; plain evaluate output is the report.
    if (j.contains("report")) j = j.at("report");
    EvaluationReport r;
    try {
      from_json(j, r);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path + ": not an evaluation report (" + e.what() + ")");
    }
    const nlohmann::json flat = r;
    out << path;
    for (const auto& f : scalar_fields()) {
      const auto& v = flat.at(f);
      out << ',' << (v.is_number_float() ? fmt17(v.get<double>()) : v.dump());
    }
    out << '\n';
    ctx.manifest.input_digests[path] = sha256_file(path);
  }
  if (!out) throw IoError("failed writing " + o.out);
  ctx.manifest.config = {{"command", "report"}, {"inputs", o.inputs}};
  write_manifest(ctx.manifest, o.out + ".manifest.json");
  ctx.out << "merged " << o.inputs.size() << " reports into " << o.out << '\n';
}

}  // namespace

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> md(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!md || EVP_DigestInit_ex(md.get(), EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 initialisation failed");
  }
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(md.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(md.get(), digest, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

void write_manifest(const RunManifest& m, const fs::path& path) {
  write_json({{"command_line", m.command_line},
              {"config", m.config},
              {"input_digests", m.input_digests},
              {"version", m.version},
              {"timestamp", m.timestamp}},
             path);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"dynamical-indices forecast evaluation", "dynerr"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  GenerateOptions gen;
  auto* generate = app.add_subcommand("generate", "simulate a system and write train/val/test splits");
  generate->add_option("system", gen.system, "lorenz or ks")
      ->required()
      ->check(CLI::IsMember({"lorenz", "ks"}));
  generate->add_option("--out", gen.out_dir, "output directory")->required();
  generate->add_option("--steps", gen.steps, "integration steps (ks: internal steps)");
  generate->add_option("--dt", gen.dt, "integration step (ks: internal step)")
      ->check(CLI::PositiveNumber);
  generate->add_option("--transient", gen.transient, "initial steps to discard");
  generate->add_option("--downsample", gen.downsample, "ks output stride")->check(CLI::PositiveNumber);
  generate->add_option("--sigma", gen.sigma);
  generate->add_option("--rho", gen.rho);
  generate->add_option("--beta", gen.beta);
  generate->add_option("--init", gen.init, "lorenz initial state x,y,z")->delimiter(',');
  generate->add_option("--L", gen.L, "ks domain length");
  generate->add_option("--grid", gen.grid, "ks grid points (power of two)");
  generate->add_option("--seed", gen.seed, "seed for the ks initial condition");
  generate->add_flag("--normalize", gen.normalize, "write z-scored splits");
  generate->add_option("--format", gen.format)->check(CLI::IsMember({"binary", "csv"}));

  IndicesOptions ind;
  auto* indices = app.add_subcommand("indices", "compute d and theta for every query state");
  indices->add_option("--reference", ind.reference)->required()->check(CLI::ExistingFile);
  indices->add_option("--query", ind.query)->required()->check(CLI::ExistingFile);
  indices->add_option("--q", ind.q, "quantile in (0.5, 1)")
      ->check(open_quantile());
  indices->add_option("--out", ind.out)->required();

  EvaluateOptions ev;
  auto* evaluate = app.add_subcommand("evaluate", "standard and dynamical-index metrics");
  evaluate->add_option("--pred", ev.pred)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--truth", ev.truth)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--reference", ev.reference)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--q", ev.q)->check(open_quantile());
  evaluate->add_option("--bins", ev.bins)->check(CLI::Range(2, 1000000));
  evaluate->add_option("--lat-grid", ev.lat_grid, "file of latitudes in degrees")
      ->check(CLI::ExistingFile);
  evaluate->add_option("--out", ev.out_dir)->required();

  RolloutOptions ro;
  auto* rollout = app.add_subcommand("rollout", "recursive forecast study");
  rollout->add_option("--model", ro.model)->check(CLI::IsMember({"persistence", "analog"}));
  rollout->add_option("--k", ro.k)->check(CLI::PositiveNumber);
  rollout->add_option("--m", ro.m)->check(CLI::PositiveNumber);
  rollout->add_option("--reference", ro.reference)->required()->check(CLI::ExistingFile);
  rollout->add_option("--test", ro.test)->required()->check(CLI::ExistingFile);
  rollout->add_option("--steps", ro.steps, "rollout length (default: system preset)");
  rollout->add_option("--starts", ro.starts)->check(CLI::PositiveNumber);
  rollout->add_option("--eval", ro.eval, "evaluation times")->delimiter(',')->required();
  rollout->add_option("--units", ro.units)->check(CLI::IsMember({"steps", "lt"}));
  rollout->add_option("--system", ro.system)->check(CLI::IsMember({"lorenz", "ks"}));
  rollout->add_option("--q", ro.q)->check(open_quantile());
  rollout->add_option("--bins", ro.bins)->check(CLI::Range(2, 1000000));
  rollout->add_option("--out", ro.out_dir)->required();

  ReportOptions rep;
  auto* report = app.add_subcommand("report", "merge JSON reports into one comparison CSV");
  report->add_option("inputs", rep.inputs)->required()->check(CLI::ExistingFile);
  report->add_option("--out", rep.out)->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << '\n';
    return 2;
  }

  std::string command_line;
  for (std::size_t i = 0; i < args.size(); ++i) command_line += (i ? " " : "") + args[i];
  Context ctx{RunManifest{command_line, nlohmann::json::object(), {}, kVersion, utc_timestamp()}, out};
  try {
    if (*generate) cmd_generate(gen, ctx);
    if (*indices) cmd_indices(ind, ctx);
    if (*evaluate) cmd_evaluate(ev, ctx);
    if (*rollout) cmd_rollout(ro, ctx);
    if (*report) cmd_report(rep, ctx);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace dynerr
