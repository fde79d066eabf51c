#include "commands.hpp"

#include <omp.h>
#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "icfit/config.hpp"
#include "icfit/csv.hpp"
#include "icfit/engine.hpp"
#include "icfit/ggm.hpp"
#include "icfit/metrics.hpp"
#include "icfit/randcoef.hpp"
#include "icfit/regselect.hpp"
#include "icfit/simgen.hpp"

namespace icfit::cli {
namespace {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

// Substream roots under the master seed: replicate r draws its data from
// make_rng(seed, {kDataStream, r}) and its chains from
// derive_seed(seed, {kFitStream, r}).
constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kFitStream = 2;

class Failure : public std::runtime_error {
 public:
  Failure(int code, const std::string& what) : std::runtime_error(what), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string rep_name(int r) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "rep%03d", r);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  out << text;
}

// Refuses a non-empty target unless forced, in which case it is cleared.
void prepare_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw Failure(kOutputExists, dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir)) {
      if (!force) throw Failure(kOutputExists, dir.string() + " is not empty; pass --force to overwrite");
      fs::remove_all(dir);
    }
  }
  fs::create_directories(dir);
}

void prepare_file(const fs::path& file, bool force) {
  if (fs::exists(file) && !force)
    throw Failure(kOutputExists, file.string() + " exists; pass --force to overwrite");
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

std::string inputs_comment(const std::string& hash) { return "inputs sha256:" + hash; }

csv::WriteOptions tagged(const std::string& hash) {
  csv::WriteOptions o;
  o.comments = {inputs_comment(hash)};
  return o;
}

Matrix bool_to_matrix(const BoolMatrix& b) { return b.cast<double>(); }

// ---------------------------------------------------------------------------
// Worker fan-out over replicates. Exceptions are caught per replicate.

struct RepOutcome {
  bool ok = true;
  std::string message;
  Errc code = Errc::invalid_argument;
  std::size_t index = Error::npos;
  double seconds = 0.0;
};

template <class F>
std::vector<RepOutcome> for_each_replicate(int reps, F&& body) {
  std::vector<RepOutcome> outcomes(static_cast<std::size_t>(reps));
  const int workers = std::max(1, std::min(worker_count(), reps));
#pragma omp parallel for schedule(dynamic) num_threads(workers) if (workers > 1)
  for (int r = 1; r <= reps; ++r) {
    RepOutcome& o = outcomes[static_cast<std::size_t>(r - 1)];
    const auto t0 = std::chrono::steady_clock::now();
    try {
      body(r);
    } catch (const Error& e) {
      o = {false, e.what(), e.code(), e.index(), 0.0};
    } catch (const std::exception& e) {
      o = {false, e.what(), Errc::invalid_argument, Error::npos, 0.0};
    }
    o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return outcomes;
}

int failure_code(Errc code) {
  switch (code) {
    case Errc::io:
    case Errc::parse:
    case Errc::dimension_mismatch:
    case Errc::non_finite_value:
    case Errc::all_missing_column:
    case Errc::infeasible_rate:
      return kInvalidSpec;
    default:
      return kEstimatorFailure;
  }
}

// ---------------------------------------------------------------------------
// generate

struct SpecFlags {
  std::string spec_path;
  std::string kind, setting;
  Index n = 0, p = 0, customers = 0, items = 0;
  double rate = 0.0;
  int reps = 0;
  std::uint64_t seed = 0;
  CLI::Option *o_kind{}, *o_n{}, *o_p{}, *o_customers{}, *o_items{}, *o_rate{}, *o_reps{},
      *o_seed{}, *o_setting{};
};

ExperimentSpec resolve_spec(const SpecFlags& f) {
  ExperimentSpec s = f.spec_path.empty() ? ExperimentSpec{} : load_spec(f.spec_path);
  if (f.o_kind->count()) s.set_kind(parse_kind(f.kind));
  if (f.o_n->count()) s.n = f.n;
  if (f.o_p->count()) s.p = f.p;
  if (f.o_customers->count()) s.customers = f.customers;
  if (f.o_items->count()) s.items = f.items;
  if (f.o_rate->count()) s.rate = f.rate;
  if (f.o_reps->count()) s.replicates = f.reps;
  if (f.o_seed->count()) s.engine.seed = f.seed;
  if (f.o_setting->count()) s.setting = parse_design(f.setting);
  s.validate();
  return s;
}

std::vector<std::string> payload_names(Index db, Index dz, Index dw) {
  std::vector<std::string> names = csv::numbered_header("beta", db);
  names.push_back("sigma2");
  for (const char* prefix : {"lambda", "gamma"}) {
    const Index d = std::string(prefix) == "lambda" ? dz : dw;
    for (Index c = 0; c < d; ++c)
      for (Index r = c; r < d; ++r)
        names.push_back(std::string(prefix) + std::to_string(r + 1) + std::to_string(c + 1));
  }
  return names;
}

Vector randcoef_truth_payload(const simgen::RandCoefTruth& t) {
  const Index dz = t.lambda_cov.rows(), dw = t.gamma_cov.rows();
  Vector out(t.beta.size() + 1 + dz * (dz + 1) / 2 + dw * (dw + 1) / 2);
  Index k = 0;
  for (Index j = 0; j < t.beta.size(); ++j) out(k++) = t.beta(j);
  out(k++) = t.sigma2;
  for (const Matrix* m : {&t.lambda_cov, &t.gamma_cov})
    for (Index c = 0; c < m->cols(); ++c)
      for (Index r = c; r < m->rows(); ++r) out(k++) = (*m)(r, c);
  return out;
}

void generate_replicate(const ExperimentSpec& spec, const fs::path& dir, int r, const std::string& hash) {
  Rng rng = make_rng(spec.engine.seed, {kDataStream, static_cast<std::uint64_t>(r)});
  fs::create_directories(dir);
  const auto opt = tagged(hash);
  switch (spec.kind) {
    case Kind::ggm: {
      const Matrix c = simgen::ar2_concentration(spec.p);
      const Matrix x = simgen::sample_ggm_data(c, spec.n, rng);
      csv::write_incomplete(dir / "data.csv", simgen::inject_mcar(x, spec.rate, rng), opt);
      csv::write(dir / "truth_data.csv", csv::numbered_header("x", spec.p), x, opt);
      BoolMatrix edges = (c.array() != 0.0);
      edges.diagonal().setConstant(false);
      csv::write(dir / "truth_graph.csv", csv::numbered_header("x", spec.p), bool_to_matrix(edges), opt);
      break;
    }
    case Kind::regression: {
      const auto s = simgen::sample_regression_data(spec.setting, spec.n, spec.p, rng);
      csv::write_incomplete(dir / "x.csv", simgen::inject_mcar(s.x, spec.rate, rng), opt);
      csv::write(dir / "y.csv", {"y"}, s.y, opt);
      csv::write(dir / "truth_x.csv", csv::numbered_header("x", spec.p), s.x, opt);
      csv::write(dir / "truth_beta.csv", {"beta"}, s.beta, opt);
      break;
    }
    case Kind::randcoef: {
      simgen::RandCoefDims dims;
      dims.customers = spec.customers;
      dims.items = spec.items;
      const auto truth = simgen::default_randcoef_truth(dims);
      const auto s = simgen::sample_randcoef_data(dims, truth, rng);
      csv::write(dir / "y.csv", csv::numbered_header("item", dims.items), s.data.y, opt);
      csv::write(dir / "x.csv", csv::numbered_header("x", dims.beta_dim), s.data.x, opt);
      csv::write(dir / "z.csv", csv::numbered_header("z", dims.z_dim), s.data.z, opt);
      csv::write(dir / "w.csv", csv::numbered_header("w", dims.w_dim), s.data.w, opt);
      csv::write(dir / "truth.csv", payload_names(dims.beta_dim, dims.z_dim, dims.w_dim),
                 randcoef_truth_payload(truth).transpose(), opt);
      break;
    }
  }
}

int cmd_generate(const SpecFlags& flags, const std::string& out_dir, bool force, std::ostream& out) {
  ExperimentSpec spec;
  try {
    spec = resolve_spec(flags);
  } catch (const Error& e) {
    throw Failure(kInvalidSpec, std::string("invalid spec: ") + e.what());
  }
  const fs::path root(out_dir);
  prepare_dir(root, force);
  const std::string spec_text = format_spec(spec);
  const std::string hash = sha256_hex(spec_text);

  const auto outcomes = for_each_replicate(spec.replicates, [&](int r) {
    generate_replicate(spec, root / rep_name(r), r, hash);
  });
  for (std::size_t k = 0; k < outcomes.size(); ++k)
    if (!outcomes[k].ok)
      throw Failure(kInvalidSpec, rep_name(static_cast<int>(k) + 1) + ": " + outcomes[k].message);

  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file()) files.push_back(fs::relative(entry.path(), root).generic_string());
  std::sort(files.begin(), files.end());
  std::string sums;
  for (const auto& f : files) sums += file_sha256(root / f) + "  " + f + "\n";
  write_text(root / "files.sha256", sums);
  write_text(root / "manifest.txt", "# icfit generate\n# " + inputs_comment(hash) + "\n" + spec_text);
  out << "generated " << spec.replicates << " " << to_string(spec.kind) << " replicate(s) in "
      << root.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// fit

struct FitFlags {
  std::string data, out, kind, method = "icc";
  std::size_t iters = 0, burn_in = 0, chains = 0;
  std::uint64_t seed = 0;
  bool force = false;
  CLI::Option *o_kind{}, *o_iters{}, *o_burn{}, *o_chains{}, *o_seed{}, *o_method{};
};

ExperimentSpec read_data_manifest(const fs::path& dir) {
  try {
    return load_spec((dir / "manifest.txt").string());
  } catch (const Error& e) {
    throw Failure(kInvalidSpec, "cannot read data manifest: " + std::string(e.what()));
  }
}

Matrix average_of(const std::vector<ChainTrace>& traces) {
  Matrix sum = chain_average(traces.front());
  for (std::size_t c = 1; c < traces.size(); ++c) sum += chain_average(traces[c]);
  return sum / static_cast<double>(traces.size());
}

Vector last_of(const std::vector<ChainTrace>& traces) {
  Vector sum = traces.front().back().payload;
  for (std::size_t c = 1; c < traces.size(); ++c) sum += traces[c].back().payload;
  return sum / static_cast<double>(traces.size());
}

void write_traces(const fs::path& dir, const std::vector<ChainTrace>& traces, const std::string& hash) {
  for (std::size_t c = 0; c < traces.size(); ++c) {
    const std::string name = traces.size() == 1 ? "trace.csv" : "trace_c" + std::to_string(c + 1) + ".csv";
    csv::write_trace(dir / name, traces[c], tagged(hash));
  }
  if (traces.size() < 2) return;
  const Index dim = traces.front().dimension();
  Vector psrf(dim);
  for (Index k = 0; k < dim; ++k) psrf(k) = gelman_rubin(traces, k);
  csv::write(dir / "psrf.csv", {"psrf"}, psrf, tagged(hash));
}

std::string method_label(Kind kind, const std::string& method, std::size_t iters) {
  switch (kind) {
    case Kind::ggm:
      return iters == 1 ? "Median" : "IC";
    case Kind::regression:
      return iters == 1 ? "Median" : "ICC";
    case Kind::randcoef:
      return method == "gibbs" ? "Gibbs" : "ICC";
  }
  return "?";
}

void fit_ggm(const fs::path& in, const fs::path& out, const EngineConfig& cfg, const std::string& hash) {
  const IncompleteMatrix data = csv::read_incomplete(in / "data.csv");
  const ggm::GgmModel model;
  const auto traces = run_ic_chains(model, data, cfg);
  const Index p = data.cols();
  const Matrix avg = ggm::unpack_upper(average_of(traces), p);
  const Matrix last = ggm::unpack_upper(last_of(traces), p);
  const auto graph = ggm::threshold_graph(avg, model.options().q, ggm::default_cap(data.rows()));
  const auto header = csv::numbered_header("x", p);
  csv::write(out / "scores.csv", header, avg, tagged(hash));
  csv::write(out / "scores_last.csv", header, last, tagged(hash));
  csv::write(out / "adjacency.csv", header, bool_to_matrix(graph.adjacency), tagged(hash));
  write_traces(out, traces, hash);
}

void fit_regression(const fs::path& in, const fs::path& out, const EngineConfig& cfg,
                    const std::string& hash) {
  const IncompleteMatrix x = csv::read_incomplete(in / "x.csv");
  const Vector y = csv::read(in / "y.csv").values.col(0);
  const regselect::RegressionModel model(y);
  const auto traces = run_icc_chains(model, x, cfg);
  const Index p = x.cols();
  const Vector avg = average_of(traces);
  // A covariate counts as selected when it is nonzero in at least half of the
  // post-burn-in iterations (5 of 10 under the default protocol).
  const int window = static_cast<int>(cfg.iterations - cfg.burn_in);
  const int threshold = (window + 1) / 2;
  std::vector<int> counts(static_cast<std::size_t>(p), 0);
  for (const auto& t : traces) {
    const auto rep = regselect::selection_report(t, p, threshold);
    for (Index j = 0; j < p; ++j) counts[static_cast<std::size_t>(j)] += rep.counts[static_cast<std::size_t>(j)];
  }
  Matrix sel(p, 3);
  const int need = threshold * static_cast<int>(traces.size());
  for (Index j = 0; j < p; ++j) {
    const int c = counts[static_cast<std::size_t>(j)];
    sel.row(j) << static_cast<double>(j + 1), c, c >= need ? 1.0 : 0.0;
  }
  csv::write(out / "beta.csv", {"beta"}, avg.head(p + 1), tagged(hash));
  csv::write(out / "selection.csv", {"variable", "count", "selected"}, sel, tagged(hash));
  write_traces(out, traces, hash);
}

randcoef::RandCoefData read_randcoef(const fs::path& in) {
  randcoef::RandCoefData d;
  d.y = csv::read(in / "y.csv").values;
  d.x = csv::read(in / "x.csv").values;
  d.z = csv::read(in / "z.csv").values;
  d.w = csv::read(in / "w.csv").values;
  d.customers = d.y.rows();
  d.items = d.y.cols();
  for (Index i = 0; i < d.customers; ++i) d.customer_ids.push_back(i);
  for (Index j = 0; j < d.items; ++j) d.item_ids.push_back(j);
  d.validate();
  return d;
}

void fit_randcoef(const fs::path& in, const fs::path& out, const EngineConfig& cfg,
                  randcoef::Method method, const std::string& hash) {
  const auto d = read_randcoef(in);
  const auto h = randcoef::Hyperparameters::defaults(d.beta_dim(), d.z_dim(), d.w_dim());
  std::vector<ChainTrace> traces;
  for (std::size_t c = 0; c < cfg.chains; ++c) traces.push_back(randcoef::run_chain(d, h, method, cfg, c));
  csv::write(out / "summary.csv", payload_names(d.beta_dim(), d.z_dim(), d.w_dim()),
             average_of(traces).transpose(), tagged(hash));
  write_traces(out, traces, hash);
}

int cmd_fit(const FitFlags& f, std::ostream& out, std::ostream& err) {
  const fs::path data(f.data), root(f.out);
  const ExperimentSpec spec = read_data_manifest(data);
  if (f.o_kind->count() && parse_kind(f.kind) != spec.kind)
    throw Failure(kInvalidSpec, "--kind " + f.kind + " does not match the data (" + to_string(spec.kind) + ")");
  if (f.o_method->count() && spec.kind != Kind::randcoef)
    throw Failure(kInvalidSpec, "--method applies to randcoef data only");
  if (f.method != "icc" && f.method != "gibbs") throw Failure(kInvalidSpec, "--method must be icc or gibbs");

  EngineConfig cfg = spec.engine;
  if (f.o_iters->count()) cfg.iterations = f.iters;
  if (f.o_burn->count()) cfg.burn_in = f.burn_in;
  else if (cfg.burn_in >= cfg.iterations && cfg.iterations > 0) cfg.burn_in = cfg.iterations - 1;
  if (f.o_chains->count()) cfg.chains = f.chains;
  if (f.o_seed->count()) cfg.seed = f.seed;
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Failure(kInvalidSpec, std::string("invalid engine settings: ") + e.what());
  }

  const std::string hash = file_sha256(data / "manifest.txt");
  prepare_dir(root, f.force);
  const std::string label = method_label(spec.kind, f.method, cfg.iterations);
  const auto method = f.method == "gibbs" ? randcoef::Method::gibbs : randcoef::Method::icc;

  const auto outcomes = for_each_replicate(spec.replicates, [&](int r) {
    const fs::path in = data / rep_name(r);
    const fs::path dst = root / rep_name(r);
    fs::create_directories(dst);
    EngineConfig rc = cfg;
    rc.seed = derive_seed(cfg.seed, {kFitStream, static_cast<std::uint64_t>(r)});
    switch (spec.kind) {
      case Kind::ggm:
        fit_ggm(in, dst, rc, hash);
        break;
      case Kind::regression:
        fit_regression(in, dst, rc, hash);
        break;
      case Kind::randcoef:
        fit_randcoef(in, dst, rc, method, hash);
        break;
    }
  });

  std::ostringstream log;
  int code = kOk;
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    const auto& o = outcomes[k];
    log << rep_name(static_cast<int>(k) + 1) << " " << (o.ok ? "ok" : "failed") << " "
        << fmt("%.3f", o.seconds) << " s";
    if (!o.ok) {
      log << " " << to_string(o.code);
      if ((o.code == Errc::estimator_failure || o.code == Errc::block_failure) && o.index != Error::npos)
        log << " at iteration " << o.index;
      log << ": " << o.message;
      err << rep_name(static_cast<int>(k) + 1) << ": " << o.message << "\n";
      if (code == kOk) code = failure_code(o.code);
    }
    log << "\n";
  }
  write_text(root / "fit.log", log.str());

  std::ostringstream manifest;
  manifest << "# icfit fit\n# " << inputs_comment(hash) << "\n"
           << "kind = " << to_string(spec.kind) << "\n"
           << "method = " << label << "\n"
           << "replicates = " << spec.replicates << "\n"
           << "[engine]\n"
           << "iterations = " << cfg.iterations << "\n"
           << "burn_in = " << cfg.burn_in << "\n"
           << "chains = " << cfg.chains << "\n"
           << "seed = " << cfg.seed << "\n";
  write_text(root / "manifest.txt", manifest.str());
  if (code == kOk)
    out << "fit " << spec.replicates << " replicate(s) with " << label << " into " << root.string() << "\n";
  return code;
}

// ---------------------------------------------------------------------------
// evaluate

struct MetricRow {
  std::string kind, method;
  int replicate = 0;
  std::string metric;
  double value = 0.0;
};

BoolMatrix read_graph(const fs::path& path) { return csv::read(path).values.array() != 0.0; }

std::vector<Index> read_selected(const fs::path& path) {
  const Matrix sel = csv::read(path).values;
  std::vector<Index> out;
  for (Index r = 0; r < sel.rows(); ++r)
    if (sel(r, 2) != 0.0) out.push_back(static_cast<Index>(sel(r, 0)) - 1);
  return out;
}

std::vector<Index> first_five() { return {0, 1, 2, 3, 4}; }

void evaluate_replicate(Kind kind, const std::string& label, const fs::path& data, const fs::path& fit,
                        int r, std::vector<MetricRow>& rows) {
  const std::string k = to_string(kind);
  auto add = [&](const std::string& method, const std::string& metric, double v) {
    rows.push_back({k, method, r, metric, v});
  };
  switch (kind) {
    case Kind::ggm: {
      const BoolMatrix truth = read_graph(data / "truth_graph.csv");
      const Matrix complete = csv::read(data / "truth_data.csv").values;
      add("True", "auc", metrics::pr_curve(ggm::learn_graph(complete).scores, truth).auc);
      const double ave = metrics::pr_curve(csv::read(fit / "scores.csv").values, truth).auc;
      if (label == "Median") {
        add("Median", "auc", ave);
      } else {
        add("IC-Ave", "auc", ave);
        add("IC-Last", "auc", metrics::pr_curve(csv::read(fit / "scores_last.csv").values, truth).auc);
      }
      break;
    }
    case Kind::regression: {
      const Vector beta = csv::read(data / "truth_beta.csv").values.col(0);
      const Matrix x = csv::read(data / "truth_x.csv").values;
      const Vector y = csv::read(data / "y.csv").values.col(0);
      const auto truth_set = first_five();
      const auto full = regselect::sis_mcp(x, y);
      const auto t = metrics::selection_metrics(full.beta(), full.support, beta, truth_set);
      const auto m = metrics::selection_metrics(csv::read(fit / "beta.csv").values.col(0),
                                                read_selected(fit / "selection.csv"), beta, truth_set);
      for (const auto& [name, s] : {std::pair{std::string("True"), t}, std::pair{label, m}}) {
        add(name, "err2", s.err2);
        add(name, "fsr", s.fsr);
        add(name, "nsr", s.nsr);
      }
      break;
    }
    case Kind::randcoef: {
      const Vector truth = csv::read(data / "truth.csv").values.row(0).transpose();
      const Vector est = csv::read(fit / "summary.csv").values.row(0).transpose();
      if (truth.size() != est.size()) throw Error(Errc::dimension_mismatch, "summary does not match truth");
      const Index db = csv::read(data / "x.csv").values.cols();
      add(label, "err2_beta", (est.head(db) - truth.head(db)).squaredNorm());
      add(label, "err_sigma2", std::abs(est(db) - truth(db)));
      fs::path trace = fit / "trace.csv";
      if (!fs::exists(trace)) trace = fit / "trace_c1.csv";
      const Matrix tr = csv::read(trace).values;
      double worst = -1.0;
      for (Index c = 1; c <= db; ++c) {
        const Vector s = tr.col(c);
        worst = std::max(worst, metrics::lag_autocorrelation(std::span<const double>(s.data(), s.size()), 1));
      }
      add(label, "acf1_beta_max", worst);
      break;
    }
  }
}

std::string format_rows(const std::vector<MetricRow>& rows, const std::string& hash) {
  std::ostringstream s;
  s << "# " << inputs_comment(hash) << "\nkind,method,replicate,metric,value\n";
  for (const auto& r : rows)
    s << r.kind << "," << r.method << "," << r.replicate << "," << r.metric << "," << fmt("%.17g", r.value)
      << "\n";
  return s.str();
}

int cmd_evaluate(const std::string& data_dir, const std::string& fit_dir, const std::string& out_file,
                 bool force, std::ostream& out) {
  const fs::path data(data_dir), fit(fit_dir), dst(out_file);
  const ExperimentSpec spec = read_data_manifest(data);
  pt::ptree fm;
  try {
    std::istringstream in(read_text(fit / "manifest.txt"));
    pt::read_ini(in, fm);
  } catch (const std::exception& e) {
    throw Failure(kInvalidSpec, std::string("cannot read fit manifest: ") + e.what());
  }
  if (fm.get<std::string>("kind", "") != to_string(spec.kind))
    throw Failure(kReportMismatch, "fit and data are of different kinds");
  const std::string data_hash = file_sha256(data / "manifest.txt");
  const std::string fit_text = read_text(fit / "manifest.txt");
  if (fit_text.find(inputs_comment(data_hash)) == std::string::npos)
    throw Failure(kReportMismatch, "fit was not produced from this data set");
  const std::string label = fm.get<std::string>("method", "");
  prepare_file(dst, force);

  std::vector<MetricRow> rows;
  for (int r = 1; r <= spec.replicates; ++r) {
    try {
      evaluate_replicate(spec.kind, label, data / rep_name(r), fit / rep_name(r), r, rows);
    } catch (const Error& e) {
      throw Failure(kInvalidSpec, rep_name(r) + ": " + e.what());
    }
  }
  write_text(dst, format_rows(rows, sha256_hex(data_hash + file_sha256(fit / "manifest.txt"))));
  out << "evaluated " << spec.replicates << " replicate(s) of " << label << " into " << dst.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// report

std::vector<MetricRow> parse_metrics(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::vector<MetricRow> rows;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "kind,method,replicate,metric,value")
        throw Failure(kInvalidSpec, path.string() + " is not a metrics file");
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() != 5) throw Failure(kInvalidSpec, path.string() + ": malformed row '" + line + "'");
    try {
      rows.push_back({f[0], f[1], std::stoi(f[2]), f[3], std::stod(f[4])});
    } catch (const std::exception&) {
      throw Failure(kInvalidSpec, path.string() + ": malformed row '" + line + "'");
    }
  }
  return rows;
}

int cmd_report(const std::vector<std::string>& files, const std::string& out_file, bool force,
               std::ostream& out) {
  using Key = std::pair<std::string, std::string>;  // method, metric
  std::vector<Key> order;
  std::map<Key, std::map<int, double>> cells;
  std::string kind, hashes;
  for (const auto& file : files) {
    hashes += file_sha256(file);
    for (const auto& row : parse_metrics(file)) {
      if (kind.empty()) kind = row.kind;
      if (row.kind != kind) throw Failure(kReportMismatch, "metrics of different kinds cannot share a report");
      const Key key{row.method, row.metric};
      auto [it, fresh] = cells.try_emplace(key);
      if (fresh) order.push_back(key);
      const auto [slot, inserted] = it->second.emplace(row.replicate, row.value);
      if (!inserted && slot->second != row.value)
        throw Failure(kReportMismatch, "conflicting values for " + row.method + "/" + row.metric +
                                           " replicate " + std::to_string(row.replicate));
    }
  }
  if (cells.empty()) throw Failure(kReportMismatch, "no metrics to report");
  std::set<int> reps;
  for (const auto& [r, v] : cells.begin()->second) reps.insert(r);
  for (const auto& [key, m] : cells) {
    std::set<int> these;
    for (const auto& [r, v] : m) these.insert(r);
    if (these != reps)
      throw Failure(kReportMismatch, "replicate sets differ (" + key.first + "/" + key.second + ")");
  }

  const fs::path dst(out_file);
  prepare_file(dst, force);
  std::ostringstream csv_out;
  csv_out << "# " << inputs_comment(sha256_hex(hashes)) << "\n# kind " << kind
          << "\nmethod,metric,replicates,mean,sd,summary\n";
  for (const auto& key : order) {
    std::vector<double> v;
    for (const auto& [r, x] : cells[key]) v.push_back(x);
    const auto ms = metrics::mean_sd(v);
    const std::string summary = fmt("%.3f", ms.mean) + "(" + fmt("%.3f", ms.sd) + ")";
    csv_out << key.first << "," << key.second << "," << v.size() << "," << fmt("%.17g", ms.mean) << ","
            << fmt("%.17g", ms.sd) << "," << summary << "\n";
    out << key.first << " " << key.second << " " << summary << "\n";
  }
  write_text(dst, csv_out.str());
  return kOk;
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error(Errc::io, "sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out.push_back(hex[digest[k] >> 4]);
    out.push_back(hex[digest[k] & 15]);
  }
  return out;
}

std::string file_sha256(const fs::path& path) { return sha256_hex(read_text(path)); }

int worker_count() {
  if (const char* env = std::getenv("ICFIT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  return omp_get_max_threads();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (const char* env = std::getenv("ICFIT_THREADS"); env && worker_count() > 0)
    omp_set_num_threads(worker_count());

  CLI::App app{"Imputation-consistency experiments: generate, fit, evaluate, report"};
  app.require_subcommand(1);

  SpecFlags spec;
  std::string gen_out;
  bool gen_force = false;
  auto* gen = app.add_subcommand("generate", "write seeded replicate data sets with ground truth");
  gen->add_option("--spec", spec.spec_path, "INI experiment spec");
  spec.o_kind = gen->add_option("--kind", spec.kind, "ggm, regression or randcoef");
  spec.o_n = gen->add_option("--n", spec.n, "rows");
  spec.o_p = gen->add_option("--p", spec.p, "columns");
  spec.o_customers = gen->add_option("--customers", spec.customers, "randcoef customers");
  spec.o_items = gen->add_option("--items", spec.items, "randcoef items");
  spec.o_rate = gen->add_option("--rate", spec.rate, "MCAR missing rate");
  spec.o_reps = gen->add_option("--reps", spec.reps, "replicates");
  spec.o_setting = gen->add_option("--setting", spec.setting, "regression design: independent or ar2");
  spec.o_seed = gen->add_option("--seed", spec.seed, "master seed");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_flag("--force", gen_force, "overwrite a non-empty output directory");

  FitFlags fit;
  auto* fit_cmd = app.add_subcommand("fit", "run IC/ICC on every replicate of a data set");
  fit_cmd->add_option("--data", fit.data, "directory written by generate")->required();
  fit_cmd->add_option("--out", fit.out, "output directory")->required();
  fit.o_kind = fit_cmd->add_option("--kind", fit.kind, "must match the data");
  fit.o_iters = fit_cmd->add_option("--iters", fit.iters, "iterations");
  fit.o_burn = fit_cmd->add_option("--burn-in", fit.burn_in, "burn-in iterations");
  fit.o_chains = fit_cmd->add_option("--chains", fit.chains, "independent chains");
  fit.o_seed = fit_cmd->add_option("--seed", fit.seed, "master seed for the chains");
  fit.o_method = fit_cmd->add_option("--method", fit.method, "randcoef: icc or gibbs");
  fit_cmd->add_flag("--force", fit.force, "overwrite a non-empty output directory");

  std::string ev_data, ev_fit, ev_out;
  bool ev_force = false;
  auto* ev = app.add_subcommand("evaluate", "score a fit against the ground truth");
  ev->add_option("--data", ev_data, "directory written by generate")->required();
  ev->add_option("--fit", ev_fit, "directory written by fit")->required();
  ev->add_option("--out", ev_out, "metrics CSV")->required();
  ev->add_flag("--force", ev_force, "overwrite an existing file");

  std::vector<std::string> rep_in;
  std::string rep_out;
  bool rep_force = false;
  auto* rep = app.add_subcommand("report", "aggregate metrics into mean(sd) rows");
  rep->add_option("--metrics", rep_in, "metrics CSVs written by evaluate")->required()->expected(1, -1);
  rep->add_option("--out", rep_out, "report CSV")->required();
  rep->add_flag("--force", rep_force, "overwrite an existing file");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  if (!argv_rev.empty()) argv_rev.pop_back();
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*gen) return cmd_generate(spec, gen_out, gen_force, out);
    if (*fit_cmd) return cmd_fit(fit, out, err);
    if (*ev) return cmd_evaluate(ev_data, ev_fit, ev_out, ev_force, out);
    if (*rep) return cmd_report(rep_in, rep_out, rep_force, out);
  } catch (const Failure& f) {
    err << f.what() << "\n";
    return f.code();
  } catch (const Error& e) {
    err << e.what() << "\n";
    return e.code() == Errc::io || e.code() == Errc::parse ? kInvalidSpec : kEstimatorFailure;
  }
  return kUsage;
}

}  // namespace icfit::cli
