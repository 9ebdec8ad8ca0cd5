// ipod: simulate FitzHugh-Nagumo snapshots, stream them through the
// incremental weighted SVD, and check the results against a batch SVD.
//
// Exit codes: 0 success, 1 usage, 2 data/format, 3 numerical failure.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "ipod/ipod.hpp"

namespace fs = std::filesystem;
using namespace ipod;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  double tol = 1e-10;
  double tol_sv = 1e-10;
  std::uint32_t nodes = 500;
  double t_final = 10.0;
  std::string input;
  std::string weights;
  std::string output = ".";
  std::uint32_t checkpoint_every = 0;
  bool no_w = false;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> random;  // m n seed
  std::string resume;
  std::uint64_t max_columns = 0;
  std::uint64_t column_cap = 20000;
  double rel_tol = StepperConfig{}.rel_tol;
  double abs_tol = StepperConfig{}.abs_tol;
};

bool deterministic() {
  const char* v = std::getenv("POD_DETERMINISTIC");
  return !(v && std::string(v) == "0");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void check_tolerances(const RunConfig& c) {
  if (!(c.tol > 0.0) || !(c.tol_sv > 0.0)) throw UsageError("--tol and --tol-sv must be positive");
}

fs::path output_dir(const RunConfig& c) {
  fs::path dir(c.output);
  fs::create_directories(dir);
  return dir;
}

void check_distinct(const fs::path& in, const fs::path& out) {
  std::error_code ec;
  if (fs::exists(out) && fs::equivalent(in, out, ec)) {
    throw UsageError("output '" + out.string() + "' would overwrite input '" + in.string() + "'");
  }
}

fs::path weights_path(const RunConfig& c) {
  if (!c.weights.empty()) return c.weights;
  return fs::path(c.input).parent_path() / "weights.txt";
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + p.string() + "' for writing");
  return out;
}

// Batch commands hold the whole stream in memory.
LoadedStream load_capped(const RunConfig& c) {
  try {
    return read_stream(c.input, c.column_cap);
  } catch (const InvalidInput& e) {
    throw InvalidInput(std::string(e.what()) + "; the batch oracle needs every column in memory. Raise "
                       "--column-cap if that fits, or use 'pod' which streams");
  }
}

// ---------------------------------------------------------------------------

int cmd_simulate(const RunConfig& c) {
  if (c.nodes < 2) throw UsageError("--nodes must be at least 2");
  if (!(c.t_final > 0.0)) throw UsageError("--t-final must be positive");
  const fs::path dir = output_dir(c);
  const Mesh1D mesh(c.nodes);
  StepperConfig cfg;
  cfg.rel_tol = c.rel_tol;
  cfg.abs_tol = c.abs_tol;

  const auto t0 = std::chrono::steady_clock::now();
  const auto m = static_cast<std::uint64_t>(2 * mesh.nodes());
  StreamWriter writer(dir / "snapshots.pods", m);
  Vector scaled;
  simulate_streaming({}, mesh, c.t_final, cfg, [&](double t, double dt, const Vector& raw) {
    const double weight = std::sqrt(dt);
    scaled = weight * raw;
    writer.write(t, weight, scaled);
  });
  writer.close();
  write_weight_matrix(dir / "weights.txt", build_weight_matrix(mesh));
  std::cout << "s=" << writer.written() << " m=" << m << " wall=" << seconds_since(t0) << "s\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct TraceRow {
  std::uint64_t n;
  std::int64_t k;
  double p, e_p, e_sv, e;
};

// Keeps the header and the rows for n <= last; used when resuming.
void truncate_trace(const fs::path& path, std::uint64_t last) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("resume: missing trace '" + path.string() + "'");
  std::string line, kept;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      kept += line + "\n";
      header = false;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) break;
    if (detail::parse_uint(line.substr(0, comma), "trace row") > last) break;
    kept += line + "\n";
  }
  in.close();
  auto out = open_out(path);
  out << kept;
}

int cmd_pod(const RunConfig& c) {
  check_tolerances(c);
  if (c.input.empty()) throw UsageError("pod needs --input");
  const fs::path dir = output_dir(c);
  for (const char* name : {"modes.podc", "eigenvalues.csv", "trace.csv", "checkpoint.podc"}) {
    check_distinct(c.input, dir / name);
  }
  const auto t0 = std::chrono::steady_clock::now();

  const WeightMatrix m = read_weight_matrix(weights_path(c));
  StreamReader reader(c.input);
  if (reader.dim() != static_cast<std::uint64_t>(m.dim())) {
    throw FormatError("stream has m = " + std::to_string(reader.dim()) + " but the weight matrix is " +
                      std::to_string(m.dim()) + " x " + std::to_string(m.dim()));
  }

  Tolerances tols{c.tol, c.tol_sv};
  UpdateOptions options;
  options.keep_right = !c.no_w;
  std::optional<IncrementalPod> pod;
  const fs::path trace_path = dir / "trace.csv";

  if (!c.resume.empty()) {
    Checkpoint ck = restore(c.resume);
    if (ck.state.dim() != m.dim()) throw FormatError("checkpoint dimension does not match the weights");
    tols = ck.tols;
    options.keep_right = ck.state.tracks_right;
    // Columns before the first nonzero one were skipped and are not counted in the state.
    const double zero = init_tolerance(m);
    while (true) {
      auto col = reader.next();
      if (!col) throw FormatError("resume: stream ended before the checkpointed position");
      if (m_norm(col->values, m) > zero) break;
    }
    reader.skip(ck.state.columns - 1);
    truncate_trace(trace_path, ck.state.columns);
    pod.emplace(m, tols, std::move(ck.state), options);
  } else {
    pod.emplace(m, tols, options);
    auto out = open_out(trace_path);
    CsvWriter(out).header({"n", "k", "p", "e_p", "e_sv", "e"});
  }

  std::ofstream trace(trace_path, std::ios::binary | std::ios::app);
  if (!trace) throw FormatError("cannot append to '" + trace_path.string() + "'");
  CsvWriter trace_csv(trace);
  std::uint64_t processed = 0;
  while (auto col = reader.next()) {
    if (c.max_columns && processed >= c.max_columns) break;
    ++processed;
    UpdateReport r;
    if (!pod->push(col->values, &r)) continue;
    const SvdState& s = pod->state();
    trace_csv.row({s.columns, static_cast<std::int64_t>(s.rank()), r.p, r.e_p, r.e_sv, s.error_bound});
    if (c.checkpoint_every && s.columns % c.checkpoint_every == 0) {
      trace.flush();
      checkpoint(s, tols, dir / "checkpoint.podc");
    }
  }
  trace.close();
  if (!pod->initialized()) throw FormatError("stream contains no nonzero column");

  const SvdState& s = pod->state();
  checkpoint(s, tols, dir / "modes.podc");
  {
    auto out = open_out(dir / "eigenvalues.csv");
    CsvWriter csv(out);
    csv.header({"index", "eigenvalue", "sigma"});
    const PodOutput po = pod_output(s);
    for (Index i = 0; i < s.rank(); ++i) {
      csv.row({static_cast<std::int64_t>(i + 1), po.eigenvalues(i), s.sigma(i)});
    }
  }
  std::cout << "n=" << s.columns << " k=" << s.rank() << " e=" << detail::format_double(s.error_bound)
            << " T_p=" << s.p_truncations << " T_sv=" << s.sv_truncations << " wall=" << seconds_since(t0)
            << "s\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct VerifyCell {
  SweepRow row;
  SvdState state;
};

int verify_random(const RunConfig& c, const fs::path& dir) {
  if (c.random.size() != 3) throw UsageError("--random takes m n seed");
  const auto m = static_cast<Index>(c.random[0]), n = static_cast<Index>(c.random[1]);
  if (m < 1 || n < 1) throw UsageError("--random needs m, n >= 1");
  std::mt19937_64 rng(c.random[2]);
  std::normal_distribution<double> g;
  Matrix a(m, m), u(m, n);
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < m; ++i) a(i, j) = g(rng);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < m; ++i) u(i, j) = g(rng);
  Matrix spd = a * a.transpose() / static_cast<double>(m);
  spd.diagonal().array() += 0.5;
  spd = 0.5 * (spd + spd.transpose()).eval();
  const WeightMatrix w = WeightMatrix::from_dense(spd);

  const SvdState s = run_stream(u, w, {1e-300, 1e-300});
  const ExactSvd ex = exact_weighted_svd(u, w);
  const double dev = max_singular_value_deviation(ex.sigma, s.sigma);
  const double rec = exact_error(u, s, w);
  const double unorm = weighted_operator_norm(u, w);
  const bool agrees = dev <= 1e-11 * ex.sigma(0) && rec <= 1e-11 * unorm && s.error_bound == 0.0;

  auto out = open_out(dir / "random_verify.csv");
  CsvWriter csv(out);
  csv.header({"m", "n", "seed", "rank", "oracle_rank", "max_sigma_dev", "reconstruction_error",
              "incr_error_bound", "agrees"});
  csv.row({static_cast<std::int64_t>(m), static_cast<std::int64_t>(n), c.random[2],
           static_cast<std::int64_t>(s.rank()), static_cast<std::int64_t>(ex.sigma.size()), dev, rec,
           s.error_bound, agrees});
  std::cout << "random m=" << m << " n=" << n << " rank=" << s.rank() << " oracle_rank=" << ex.sigma.size()
            << " max_sigma_dev=" << dev << " reconstruction_error=" << rec << (agrees ? " ok" : " MISMATCH")
            << "\n";
  return agrees ? kOk : kNumerical;
}

int cmd_verify(const RunConfig& c) {
  const fs::path dir = output_dir(c);
  if (!c.random.empty()) return verify_random(c, dir);
  if (c.input.empty()) throw UsageError("verify needs --input or --random");
  const WeightMatrix m = read_weight_matrix(weights_path(c));
  const LoadedStream data = load_capped(c);
  if (data.columns.rows() != m.dim()) throw FormatError("stream and weight matrix disagree on m");
  const ExactSvd ex = exact_weighted_svd(data.columns, m);
  const double slack = 1e-10 * ex.sigma(0);

  const auto grid = standard_tolerance_grid();
  std::vector<VerifyCell> cells(grid.size());
  auto run_cell = [&](std::size_t i) {
    cells[i].state = run_stream(data.columns, m, grid[i]);
    SweepRow& row = cells[i].row;
    row.tols = grid[i];
    row.rank = cells[i].state.rank();
    row.exact_error = exact_error(data.columns, cells[i].state, m);
    row.incr_error_bound = cells[i].state.error_bound;
    row.p_truncations = cells[i].state.p_truncations;
    row.sv_truncations = cells[i].state.sv_truncations;
  };
  if (deterministic()) {
    for (std::size_t i = 0; i < grid.size(); ++i) run_cell(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < grid.size(); ++i) pool.emplace_back(run_cell, i);
    for (auto& t : pool) t.join();
  }

  bool all_ok = true;
  {
    auto out = open_out(dir / "verify.csv");
    CsvWriter csv(out);
    csv.header({"tol", "tol_sv", "rank", "exact_error", "incr_error_bound", "dominated", "p_truncations",
                "sv_truncations", "max_sigma_dev"});
    for (const auto& cell : cells) {
      const SweepRow& r = cell.row;
      const bool dominated = r.exact_error <= r.incr_error_bound + slack;
      all_ok = all_ok && dominated;
      csv.row({r.tols.tol, r.tols.tol_sv, static_cast<std::int64_t>(r.rank), r.exact_error,
               r.incr_error_bound, dominated, r.p_truncations, r.sv_truncations,
               max_singular_value_deviation(ex.sigma, cell.state.sigma)});
      std::cout << "tol=" << r.tols.tol << " tol_sv=" << r.tols.tol_sv << " rank=" << r.rank
                << " exact=" << r.exact_error << " bound=" << r.incr_error_bound
                << (dominated ? " dominated" : " NOT DOMINATED") << "\n";
    }
  }

  // Vector bounds for the tightest run.
  const auto tightest = std::min_element(cells.begin(), cells.end(), [](const auto& a, const auto& b) {
    return std::max(a.row.tols.tol, a.row.tols.tol_sv) < std::max(b.row.tols.tol, b.row.tols.tol_sv);
  });
  Index k = std::min<Index>({20, tightest->state.rank(), ex.sigma.size() - 1});
  for (Index j = 1; j <= k; ++j) {
    if (!(ex.sigma(j - 1) > ex.sigma(j))) {
      k = j - 1;
      break;
    }
  }
  if (k >= 1) {
    const auto rows = vector_bound_check(ex, as_triple(tightest->state), m, tightest->state.error_bound, k);
    auto out = open_out(dir / "vector_bounds.csv");
    write_vector_bound_csv(out, rows);
    for (const auto& r : rows) all_ok = all_ok && (!r.gap_ok || (r.v_holds && r.w_holds));
  }
  std::cout << "s=" << data.columns.cols() << " oracle_rank=" << ex.sigma.size()
            << (all_ok ? " all checks passed\n" : " CHECK FAILED\n");
  return all_ok ? kOk : kNumerical;
}

// ---------------------------------------------------------------------------

int cmd_report(const RunConfig& c) {
  check_tolerances(c);
  if (c.input.empty()) throw UsageError("report needs --input");
  const fs::path dir = output_dir(c);
  const WeightMatrix m = read_weight_matrix(weights_path(c));
  const LoadedStream data = load_capped(c);
  if (data.columns.rows() != m.dim()) throw FormatError("stream and weight matrix disagree on m");
  const ExactSvd ex = exact_weighted_svd(data.columns, m);
  const SvdState s = run_stream(data.columns, m, {c.tol, c.tol_sv});

  {
    auto out = open_out(dir / "singular_values.csv");
    CsvWriter csv(out);
    csv.header({"index", "exact", "incremental"});
    const Index n = std::max(ex.sigma.size(), s.sigma.size());
    for (Index i = 0; i < n; ++i) {
      csv.row({static_cast<std::int64_t>(i + 1), i < ex.sigma.size() ? CsvValue(ex.sigma(i)) : CsvValue(std::monostate{}),
               i < s.sigma.size() ? CsvValue(s.sigma(i)) : CsvValue(std::monostate{})});
    }
  }
  {
    auto out = open_out(dir / "mode_errors.csv");
    CsvWriter csv(out);
    csv.header({"index", "sigma", "mode_error"});
    const Index n = std::min(ex.sigma.size(), s.sigma.size());
    for (Index i = 0; i < n; ++i) {
      Vector v = s.modes.col(i);
      if (m_inner(v, ex.modes.col(i), m) < 0.0) v = -v;
      csv.row({static_cast<std::int64_t>(i + 1), ex.sigma(i), m_norm(Vector(v - ex.modes.col(i)), m)});
    }
  }
  std::cout << "exact_rank=" << ex.sigma.size() << " incremental_rank=" << s.rank()
            << " e=" << detail::format_double(s.error_bound) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming weighted POD with a computable error bound"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto add_tols = [&](CLI::App* sub) {
    sub->add_option("--tol", cfg.tol, "residual truncation tolerance")->capture_default_str();
    sub->add_option("--tol-sv", cfg.tol_sv, "singular value truncation tolerance")->capture_default_str();
  };
  auto add_io = [&](CLI::App* sub) {
    sub->add_option("--input", cfg.input, "snapshot stream (.pods)");
    sub->add_option("--weights", cfg.weights, "weight matrix file (default: weights.txt next to --input)");
  };

  auto* sim = app.add_subcommand("simulate", "run the FitzHugh-Nagumo model and write snapshots + weights");
  sim->add_option("--nodes", cfg.nodes, "finite element nodes")->capture_default_str();
  sim->add_option("--t-final", cfg.t_final, "final time")->capture_default_str();
  sim->add_option("--rel-tol", cfg.rel_tol, "stepper relative tolerance")->capture_default_str();
  sim->add_option("--abs-tol", cfg.abs_tol, "stepper absolute tolerance")->capture_default_str();

  auto* pod = app.add_subcommand("pod", "stream snapshots through the incremental SVD");
  add_tols(pod);
  add_io(pod);
  pod->add_option("--checkpoint-every", cfg.checkpoint_every, "write checkpoint.podc every N columns (0 = off)");
  pod->add_flag("--no-w", cfg.no_w, "do not maintain right singular vectors");
  pod->add_option("--resume", cfg.resume, "continue from a checkpoint written by --checkpoint-every");
  pod->add_option("--max-columns", cfg.max_columns, "stop after reading N stream columns");

  auto* ver = app.add_subcommand("verify", "tolerance sweep against the exact weighted SVD");
  add_io(ver);
  ver->add_option("--random", cfg.random, "random oracle check instead of a stream: m n seed")->expected(3);
  ver->add_option("--seed", cfg.seed, "seed (kept for symmetry with --random)");
  ver->add_option("--column-cap", cfg.column_cap, "refuse streams longer than this")->capture_default_str();

  auto* rep = app.add_subcommand("report", "singular value and mode error tables");
  cfg.tol = 1e-10;
  add_tols(rep);
  add_io(rep);
  rep->add_option("--column-cap", cfg.column_cap, "refuse streams longer than this")->capture_default_str();

  for (auto* sub : {sim, pod, ver, rep}) sub->add_option("--output", cfg.output, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*sim) return cmd_simulate(cfg);
    if (*pod) return cmd_pod(cfg);
    if (*ver) return cmd_verify(cfg);
    if (*rep) return cmd_report(cfg);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kData;
  } catch (const CorruptStream& e) {
    std::cerr << "corrupt stream: " << e.what() << "\n";
    return kData;
  } catch (const CorruptCheckpoint& e) {
    std::cerr << "corrupt checkpoint: " << e.what() << "\n";
    return kData;
  } catch (const NotPositiveDefinite& e) {
    std::cerr << "weight matrix: " << e.what() << "\n";
    return kData;
  } catch (const SizeError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kData;
  } catch (const ipod::Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  }
  return kUsage;
}
