#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cqed/bifurcation.hpp"
#include "cqed/error.hpp"
#include "cqed/io.hpp"
#include "cqed/params.hpp"
#include "cqed/quantum.hpp"
#include "cqed/semiclassical.hpp"
#include "cqed/trajectories.hpp"

#ifndef CQED_VERSION
#define CQED_VERSION "0.0.0"
#endif

namespace cqed::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Common {
  std::string params;
  std::string preset;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<double> y;
  int jobs = 1;
};

// Flags that do not enter the recorded configuration, or are re-emitted in
// canonical form.
const std::vector<std::string> kCommonFlags = {"--params", "--preset", "--out", "--seed", "--y", "--jobs"};

struct Context {
  std::string command;
  std::vector<std::string> args;  // as given, minus the command
  Common common;
  DimensionlessParams d;
  PhysicalParams p;
  bool physical_source = false;  // p given directly; d may not exist (g0 = 0)
  bool has_d = true;
  std::uint64_t seed = 0;
  std::ostream* out = nullptr;

  // Arguments that reproduce this run: the command's own flags followed by
  // the resolved parameters and seed.
  std::vector<std::string> canonical_args() const {
    std::vector<std::string> a;
    for (std::size_t i = 0; i < args.size(); ++i) {
      const std::string& s = args[i];
      const auto eq = s.find('=');
      const std::string flag = s.substr(0, eq);
      if (std::find(kCommonFlags.begin(), kCommonFlags.end(), flag) != kCommonFlags.end()) {
        if (eq == std::string::npos) ++i;
        continue;
      }
      a.push_back(s);
    }
    const json pj = physical_source ? to_json(p) : to_json(d);
    a.insert(a.end(), {"--params", pj.dump(), "--seed", std::to_string(seed)});
    return a;
  }

  json provenance() const {
    const json cfg = {{"command", command}, {"args", canonical_args()}};
    return {{"tool", "cqed"},
            {"version", CQED_VERSION},
            {"config", cfg},
            {"config_hash", io::config_hash(cfg)},
            {"seed", seed},
            {"params", has_d ? to_json(d) : json(nullptr)},
            {"physical", to_json(p)}};
  }

  void emit(const std::string& name, const std::string& content) const {
    const fs::path path = fs::path(common.out) / name;
    io::atomic_write(path, content);
    *out << path.string() << '\n';
  }
  void emit_json(const std::string& name, const json& j) const { emit(name, j.dump(2) + "\n"); }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidParameter("params", "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void resolve_params(Context& ctx) {
  const Common& c = ctx.common;
  if (c.params.empty() == c.preset.empty())
    throw InvalidParameter("params", "give exactly one of --params and --preset");
  if (!c.preset.empty()) {
    if (c.preset == "bistability") ctx.d = presets::absorptive_bistability();
    else if (c.preset == "hopf") ctx.d = presets::supercritical_hopf();
    else if (c.preset == "subcritical") ctx.d = presets::subcritical_hopf();
    else throw InvalidParameter("preset", "expected bistability, hopf or subcritical");
  } else {
    const std::string text = c.params.front() == '{' ? c.params : read_file(c.params);
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw InvalidParameter("params", e.what());
    }
    if (j.contains("g0")) {
      ctx.physical_source = true;
      ctx.p = physical_from_json(j);
      ctx.p.validate();
      ctx.has_d = ctx.p.g0 > 0.0;
      if (ctx.has_d) ctx.d = to_dimensionless(ctx.p);
    } else {
      ctx.d = dimensionless_from_json(j);
    }
  }
  if (c.y) {
    if (!ctx.has_d) throw InvalidParameter("y", "needs g0 > 0 to map the scaled drive");
    ctx.d.y = *c.y;
  }
  if (ctx.has_d) ctx.d.validate();
  if (!ctx.physical_source) ctx.p = to_physical(ctx.d);
  else if (c.y) ctx.p = to_physical(ctx.d, ctx.p.n_atoms, ctx.p.gamma_perp());
  if (c.seed) {
    ctx.seed = *c.seed;
  } else {
    std::random_device rd;
    ctx.seed = (static_cast<std::uint64_t>(rd()) << 32) | rd();
  }
  fs::create_directories(c.out);
}

template <class F>
void parallel_for(std::size_t n, int jobs, F&& f) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  std::vector<std::exception_ptr> errors(workers);
  auto body = [&](std::size_t w) {
    try {
      for (std::size_t i = w; i < n; i += workers) f(i);
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    body(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<double> linspace(const std::vector<double>& spec, const char* name) {
  if (spec.size() != 3 || !(spec[2] >= 2) || !(spec[1] > spec[0]))
    throw InvalidParameter(name, "expected lo,hi,n with hi > lo and n >= 2");
  const int n = static_cast<int>(spec[2]);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = spec[0] + (spec[1] - spec[0]) * i / (n - 1);
  return v;
}

std::string label(double y) {
  std::string s = io::fmt_double(y);
  std::replace(s.begin(), s.end(), '.', 'p');
  return s;
}

quantum::TruncationPolicy policy(int start, int ceiling) {
  quantum::TruncationPolicy pol;
  pol.n_max_start = start;
  pol.n_max_ceiling = ceiling;
  return pol;
}

json steady_json(const quantum::SteadyState& ss) {
  return {{"n_max", ss.ops.space.n_max},
          {"cutoffs_tried", ss.cutoffs_tried},
          {"top_population", ss.top_population},
          {"residual", ss.residual},
          {"min_eigenvalue", ss.min_eigenvalue},
          {"mean_photons", ss.mean_photons}};
}

// Phase that puts the field of the largest semiclassical fixed point on the
// real axis.
double amplitude_quadrature(const DimensionlessParams& d) {
  const auto fps = steady_states(d);
  if (fps.empty() || std::abs(fps.back().x_ss) == 0.0) return 0.0;
  return -std::arg(fps.back().x_ss);
}

void require_scaled(const Context& ctx) {
  if (!ctx.has_d) throw InvalidParameter("g0", "semiclassical commands need g0 > 0");
}

// ---- subcommands -------------------------------------------------------

struct IoCurveOpts {
  std::vector<double> xmag{1e-3, 10.0, 400};
  std::vector<double> yrange;
};

void cmd_iocurve(const Context& ctx, const IoCurveOpts& o) {
  require_scaled(ctx);
  std::vector<BranchPoint> pts;
  if (!o.yrange.empty()) {
    for (double y : linspace(o.yrange, "y-range"))
      for (auto& bp : steady_states(ctx.d.with_drive(y))) pts.push_back(bp);
  } else {
    for (double x : linspace(o.xmag, "xmag")) {
      BranchPoint bp = branch_point_at_amplitude(ctx.d, x);
      classify(ctx.d, bp);
      pts.push_back(bp);
    }
  }
  std::ostringstream csv;
  write_branch_csv(csv, pts);
  const AmplitudeRange range{std::max(1e-6, o.xmag[0]), o.xmag[1], 2000};
  const auto sn = find_saddle_nodes(ctx.d, range);
  const auto hopf = find_hopf(ctx.d, range);
  json side = ctx.provenance();
  side["markers"] = bifurcation_json(sn, hopf.points);
  side["points"] = pts.size();
  ctx.emit("iocurve.csv", csv.str());
  ctx.emit_json("iocurve.json", side);
}

void cmd_bifscan(const Context& ctx, const std::vector<double>& xmag) {
  require_scaled(ctx);
  if (xmag.size() != 3 || !(xmag[2] >= 2)) throw InvalidParameter("xmag", "expected lo,hi,samples");
  const AmplitudeRange range{xmag[0], xmag[1], static_cast<int>(xmag[2])};
  const auto sn = find_saddle_nodes(ctx.d, range);
  const auto hopf = find_hopf(ctx.d, range);
  json side = ctx.provenance();
  side["result"] = bifurcation_json(sn, hopf.points);
  side["diagnostics"] = hopf.diagnostics;
  ctx.emit_json("bifscan.json", side);
}

struct QuantumOpts {
  int n_max_start = 0;
  int ceiling = 256;
};

struct QfuncOpts : QuantumOpts {
  int grid = 201;
  bool binary = false;
};

void cmd_qfunc(const Context& ctx, const QfuncOpts& o) {
  if (o.grid < 3) throw InvalidParameter("grid", "must be >= 3");
  const auto ss = quantum::steady_state(ctx.p, policy(o.n_max_start, o.ceiling));
  auto spec = quantum::GridSpec::automatic(ss.mean_photons);
  spec.n_re = spec.n_im = o.grid;
  const auto q = quantum::q_function(ss.rho, ss.ops.space, spec);
  const auto modes = quantum::find_modes(q);
  const auto ring = quantum::detect_ring(q);
  json side = quantum::q_sidecar(q, ctx.p);
  side.update(ctx.provenance());
  side["steady_state"] = steady_json(ss);
  side["modes"] = modes.count;
  side["ring"] = ring.is_ring;
  side["ring_radius"] = ring.mean_radius;
  std::ostringstream csv;
  quantum::write_q_csv(csv, q);
  ctx.emit("qfunc.csv", csv.str());
  if (o.binary) {
    std::ostringstream bin;
    quantum::write_q_binary(bin, q);
    ctx.emit("qfunc.bin", bin.str());
  }
  ctx.emit_json("qfunc.json", side);
}

struct AutocorrOpts : QuantumOpts {
  double tau_max = 150.0;
  double dtau = 0.05;
};

void cmd_autocorr(const Context& ctx, const AutocorrOpts& o) {
  if (!(o.tau_max > 0.0) || !(o.dtau > 0.0)) throw InvalidParameter("tau", "tau-max and dtau must be > 0");
  const auto ss = quantum::steady_state(ctx.p, policy(o.n_max_start, o.ceiling));
  std::vector<double> tau;
  const auto n = static_cast<int>(std::floor(o.tau_max / o.dtau + 1e-9));
  for (int i = 0; i <= n; ++i) tau.push_back(i * o.dtau);
  const auto c = quantum::autocorrelation_y(ctx.p, ss, tau);
  json side = ctx.provenance();
  side["steady_state"] = steady_json(ss);
  side["frame_n_max"] = c.n_max;
  side["max_imag"] = c.max_imag;
  try {
    const auto f = quantum::coherence_time(c.g, c.tau);
    side["fit"] = {{"t_coh", f.t_coh}, {"omega", f.omega}, {"amplitude", f.amplitude},
                   {"phase", f.phase}, {"offset", f.offset}, {"residual_norm", f.residual_norm}};
  } catch (const quantum::FitDegenerate& e) {
    side["fit"] = nullptr;
    side["envelope_time"] = e.envelope_time();
  }
  std::ostringstream csv;
  quantum::write_correlation_csv(csv, c);
  ctx.emit("autocorr.csv", csv.str());
  ctx.emit_json("autocorr.json", side);
}

struct TrajectoryOpts : QuantumOpts {
  double duration = 100.0;
  double dt = 0.0;
  int stride = 1;
  std::optional<double> phi1;
  double phi2 = 0.0;
  bool atomic = false;
  int count = 1;
  double omega = 0.0;
};

trajectories::SSEConfig sse_config(const Context& ctx, const TrajectoryOpts& o) {
  trajectories::SSEConfig c;
  c.duration = o.duration;
  c.dt = o.dt;
  c.record_stride = o.stride;
  c.phi1 = o.phi1 ? *o.phi1 : 0.0;
  c.phi2 = o.phi2;
  c.record_atomic = o.atomic;
  c.omega_estimate = o.omega;
  c.seed = ctx.seed;
  return c;
}

trajectories::PhotocurrentRecord run_sse(const Context& ctx, const QuantumOpts& o,
                                         const DimensionlessParams& d,
                                         const trajectories::SSEConfig& c) {
  const PhysicalParams p =
      ctx.has_d ? to_physical(d, ctx.p.n_atoms, ctx.p.gamma_perp()) : ctx.p;
  return trajectories::simulate(p, policy(o.n_max_start, o.ceiling), c);
}

void cmd_trajectory(const Context& ctx, const TrajectoryOpts& o) {
  if (o.count < 1) throw InvalidParameter("count", "must be >= 1");
  const auto n = static_cast<std::size_t>(o.count);
  std::vector<trajectories::PhotocurrentRecord> recs(n);
  parallel_for(n, ctx.common.jobs, [&](std::size_t i) {
    auto c = sse_config(ctx, o);
    c.seed = ctx.seed + i;
    recs[i] = run_sse(ctx, o, ctx.d, c);
  });
  for (std::size_t i = 0; i < n; ++i) {
    const std::string stem = o.count == 1 ? "trajectory" : "trajectory_" + std::to_string(i);
    std::ostringstream csv;
    trajectories::write_record_csv(csv, recs[i]);
    json side = ctx.provenance();
    side["record"] = trajectories::record_sidecar(recs[i]);
    ctx.emit(stem + ".csv", csv.str());
    ctx.emit_json(stem + ".json", side);
  }
}

struct SpectrumOpts : TrajectoryOpts {
  std::vector<double> ys;
  double segment = 256.0;  // time units
  double overlap = 0.5;
  std::vector<double> band;
  SpectrumOpts() {
    duration = 2000.0;
    stride = 10;
  }
};

void cmd_spectrum(const Context& ctx, const SpectrumOpts& o) {
  if (!o.ys.empty()) require_scaled(ctx);
  std::vector<double> ys = o.ys.empty() ? std::vector<double>{ctx.d.y} : o.ys;
  if (!o.band.empty() && o.band.size() != 2) throw InvalidParameter("band", "expected lo,hi");
  struct Item {
    trajectories::PhotocurrentRecord rec;
    trajectories::SpectrumEstimate s;
    trajectories::SpectralPeak pk;
    double phi1 = 0.0;
  };
  std::vector<Item> items(ys.size());
  parallel_for(ys.size(), ctx.common.jobs, [&](std::size_t i) {
    const DimensionlessParams d = ctx.d.with_drive(ys[i]);
    auto c = sse_config(ctx, o);
    c.phi1 = o.phi1 ? *o.phi1 : ctx.has_d ? amplitude_quadrature(d) : 0.0;
    Item& it = items[i];
    it.phi1 = c.phi1;
    it.rec = run_sse(ctx, o, d, c);
    const double sample_dt = it.rec.dt * it.rec.stride;
    const int seg = static_cast<int>(std::lround(o.segment / sample_dt));
    it.s = trajectories::power_spectrum(it.rec, seg, o.overlap);
    const double df = it.s.frequency[1];
    it.pk = o.band.empty() ? trajectories::find_peak(it.s, 2.0 * df, it.s.frequency.back())
                           : trajectories::find_peak(it.s, o.band[0], o.band[1]);
  });
  json side = ctx.provenance();
  side["spectra"] = json::array();
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const Item& it = items[i];
    std::ostringstream csv;
    trajectories::write_spectrum_csv(csv, it.s);
    ctx.emit("spectrum_y" + label(ys[i]) + ".csv", csv.str());
    side["spectra"].push_back({{"y", ys[i]},
                               {"phi1", it.phi1},
                               {"n_max", it.rec.n_max},
                               {"dt", it.rec.dt},
                               {"stride", it.rec.stride},
                               {"segments", it.s.segments},
                               {"segment_length", it.s.segment_length},
                               {"window", it.s.window},
                               {"peak_frequency", it.pk.frequency},
                               {"peak_omega", 2.0 * M_PI * it.pk.frequency},
                               {"peak_power", it.pk.power},
                               {"floor", it.pk.floor},
                               {"ratio", it.pk.ratio()}});
  }
  ctx.emit_json("spectrum.json", side);
}

struct LimitCycleOpts {
  std::vector<double> ys;
  std::vector<double> yrange;
  double settle = 0.0;
  double sample = 0.0;
};

void cmd_limitcycle(const Context& ctx, const LimitCycleOpts& o) {
  require_scaled(ctx);
  std::vector<double> ys = !o.yrange.empty() ? linspace(o.yrange, "y-range")
                           : o.ys.empty()     ? std::vector<double>{ctx.d.y}
                                              : o.ys;
  std::vector<LimitCycle> lcs(ys.size());
  LimitCycleOptions lo;
  lo.settle_time = o.settle;
  lo.sample_time = o.sample;
  parallel_for(ys.size(), ctx.common.jobs, [&](std::size_t i) {
    const DimensionlessParams d = ctx.d.with_drive(ys[i]);
    const auto fps = steady_states(d);
    MBState s0 = fps.empty() ? MBState{} : fps.back().state();
    s0.x += cplx(1e-2, 1e-2);
    lcs[i] = find_limit_cycle(d, s0, lo);
  });
  std::ostringstream csv;
  io::CsvWriter w(csv, {"y", "amp_max", "amp_min", "half_amplitude", "period", "converged"});
  for (const auto& lc : lcs) {
    w << lc.y << lc.amp_max << lc.amp_min << lc.half_amplitude() << lc.period << lc.converged;
    w.end_row();
  }
  ctx.emit("limitcycle.csv", csv.str());
  ctx.emit_json("limitcycle.json", ctx.provenance());
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--params", c.params, "parameter JSON file or inline JSON (dimensionless or physical)");
  sub->add_option("--preset", c.preset, "bistability | hopf | subcritical");
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--seed", c.seed, "64-bit seed (random and recorded when absent)");
  sub->add_option("--y", c.y, "scaled drive, overrides the parameter source");
  sub->add_option("--jobs", c.jobs, "parallel workers across sweep points")->check(CLI::PositiveNumber);
}

void add_quantum(CLI::App* sub, QuantumOpts& q) {
  sub->add_option("--n-max", q.n_max_start, "initial Fock cutoff (0: from the empty cavity)");
  sub->add_option("--ceiling", q.ceiling, "largest Fock cutoff");
}

void add_sse(CLI::App* sub, TrajectoryOpts& t) {
  add_quantum(sub, t);
  sub->add_option("--duration", t.duration);
  sub->add_option("--dt", t.dt, "step (0: default rule)");
  sub->add_option("--stride", t.stride, "record decimation");
  sub->add_option("--phi1", t.phi1, "cavity local-oscillator phase");
  sub->add_option("--phi2", t.phi2, "atomic local-oscillator phase");
  sub->add_flag("--atomic", t.atomic, "also record I_hom2");
  sub->add_option("--omega", t.omega, "oscillation frequency estimate for the default step");
}

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::InvalidParameter:
    case ErrorKind::Unsupported:
      return kUsage;
    case ErrorKind::Numeric:
    case ErrorKind::IntegrationFailure:
      return kNumeric;
    case ErrorKind::Truncation:
      return kTruncation;
    case ErrorKind::Io:
      break;
  }
  return kFailure;
}

int replay(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Re-run the command recorded in a sidecar"};
  std::string sidecar, dir = ".";
  app.add_option("sidecar", sidecar)->required();
  app.add_option("--out", dir);
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, err, err) == 0 ? kOk : kUsage;
  }
  const json j = json::parse(read_file(sidecar));
  if (!j.contains("config")) throw InvalidParameter("sidecar", "no recorded config");
  std::vector<std::string> next{j["config"]["command"].get<std::string>()};
  for (const auto& a : j["config"]["args"]) next.push_back(a.get<std::string>());
  next.insert(next.end(), {"--out", dir});
  return run(next, out, err);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (!args.empty() && args.front() == "replay") {
    try {
      return replay({args.begin() + 1, args.end()}, out, err);
    } catch (const Error& e) {
      err << "error: " << e.what() << '\n';
      return exit_code(e);
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return kUsage;
    }
  }

  CLI::App app{"Bifurcation and quantum analysis of the driven Jaynes-Cummings model"};
  app.require_subcommand(1);
  app.set_version_flag("--version", CQED_VERSION);
  Context ctx;
  ctx.out = &out;

  IoCurveOpts io_o;
  auto* iocurve = app.add_subcommand("iocurve", "steady-state branch with stability flags");
  add_common(iocurve, ctx.common);
  iocurve->add_option("--xmag", io_o.xmag, "lo,hi,n over |x_ss|")->delimiter(',')->expected(3);
  iocurve->add_option("--y-range", io_o.yrange, "lo,hi,n over the drive")->delimiter(',')->expected(3);

  std::vector<double> scan{1e-6, 10.0, 2000};
  auto* bifscan = app.add_subcommand("bifscan", "saddle-node and Hopf points with eta3");
  add_common(bifscan, ctx.common);
  bifscan->add_option("--xmag", scan, "lo,hi,samples over |x_ss|")->delimiter(',')->expected(3);

  QfuncOpts qf;
  auto* qfunc = app.add_subcommand("qfunc", "steady-state Q function");
  add_common(qfunc, ctx.common);
  add_quantum(qfunc, qf);
  qfunc->add_option("--grid", qf.grid, "points per axis");
  qfunc->add_flag("--binary", qf.binary, "also write raw little-endian doubles");

  AutocorrOpts ac;
  auto* autocorr = app.add_subcommand("autocorr", "phase-quadrature autocorrelation and coherence fit");
  add_common(autocorr, ctx.common);
  add_quantum(autocorr, ac);
  autocorr->add_option("--tau-max", ac.tau_max);
  autocorr->add_option("--dtau", ac.dtau);

  TrajectoryOpts tr;
  auto* trajectory = app.add_subcommand("trajectory", "homodyne photocurrent records");
  add_common(trajectory, ctx.common);
  add_sse(trajectory, tr);
  trajectory->add_option("--count", tr.count, "records, seeds seed..seed+count-1");

  SpectrumOpts sp;
  auto* spectrum = app.add_subcommand("spectrum", "photocurrent power spectra over drives");
  add_common(spectrum, ctx.common);
  add_sse(spectrum, sp);
  spectrum->add_option("--y-list", sp.ys, "drives")->delimiter(',');
  spectrum->add_option("--segment", sp.segment, "Welch segment length in time units");
  spectrum->add_option("--overlap", sp.overlap);
  spectrum->add_option("--band", sp.band, "lo,hi peak search band (cycles per unit time)")->delimiter(',')->expected(2);

  LimitCycleOpts lc;
  auto* limitcycle = app.add_subcommand("limitcycle", "semiclassical limit-cycle amplitudes");
  add_common(limitcycle, ctx.common);
  limitcycle->add_option("--y-list", lc.ys, "drives")->delimiter(',');
  limitcycle->add_option("--y-range", lc.yrange, "lo,hi,n")->delimiter(',')->expected(3);
  limitcycle->add_option("--settle", lc.settle);
  limitcycle->add_option("--sample", lc.sample);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  try {
    ctx.command = app.get_subcommands().front()->get_name();
    ctx.args.assign(args.begin() + 1, args.end());
    resolve_params(ctx);
    if (iocurve->parsed()) cmd_iocurve(ctx, io_o);
    else if (bifscan->parsed()) cmd_bifscan(ctx, scan);
    else if (qfunc->parsed()) cmd_qfunc(ctx, qf);
    else if (autocorr->parsed()) cmd_autocorr(ctx, ac);
    else if (trajectory->parsed()) cmd_trajectory(ctx, tr);
    else if (spectrum->parsed()) cmd_spectrum(ctx, sp);
    else if (limitcycle->parsed()) cmd_limitcycle(ctx, lc);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}

}  // namespace cqed::cli
