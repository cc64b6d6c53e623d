#include "ipwvar/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "ipwvar/io.hpp"
#include "ipwvar/moments.hpp"
#include "ipwvar/simulate.hpp"
#include "ipwvar/strata.hpp"

namespace ipwvar {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitUsage = 2;

constexpr double kGapTolerance = -1e-15;
constexpr double kPolynomialTolerance = -1e-12;

// Thrown for problems that map to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SeedChoice {
  std::uint64_t value = 42;
  std::string source = "default";
  std::optional<std::string> env_value;
};

SeedChoice resolve_seed(const std::optional<std::uint64_t>& flag) {
  SeedChoice choice;
  if (const char* env = std::getenv(kSeedEnvVar)) choice.env_value = env;
  if (flag) {
    choice.value = *flag;
    choice.source = "flag";
  } else if (choice.env_value) {
    try {
      std::size_t used = 0;
      choice.value = std::stoull(*choice.env_value, &used);
      if (used != choice.env_value->size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw UsageError(std::string(kSeedEnvVar) + " is not an unsigned integer: '" +
                       *choice.env_value + "'");
    }
    choice.source = "env";
  }
  return choice;
}

nlohmann::json seed_json(const SeedChoice& seed) {
  nlohmann::json env = nlohmann::json::object();
  env[kSeedEnvVar] = seed.env_value ? nlohmann::json(*seed.env_value) : nlohmann::json(nullptr);
  return {{"value", seed.value}, {"source", seed.source}, {"environment", env}};
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string s;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) s += sep;
    s += parts[i];
  }
  return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, sep);)
    if (!item.empty()) parts.push_back(item);
  return parts;
}

std::vector<WeightingScheme> parse_schemes(const std::string& list) {
  std::vector<WeightingScheme> out;
  try {
    for (const auto& name : split(list, ',')) out.push_back(parse_scheme(name));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (out.empty()) throw UsageError("--schemes must name at least one scheme");
  return out;
}

PopulationSpec read_population(const std::string& path) {
  try {
    return load_population(path);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

// Prints violations and returns false when the population is invalid.
bool report_violations(const PopulationSpec& pop, std::ostream& sink) {
  const auto violations = validate(pop);
  for (const auto& v : violations)
    sink << (v.stratum.empty() ? std::string("population") : v.stratum) << ": " << v.kind << ": "
         << v.message << '\n';
  return violations.empty();
}

void emit(const std::string& text, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) {
    out << text;
    return;
  }
  std::ofstream file(out_path, std::ios::binary);
  if (!file) throw UsageError("cannot open output file '" + out_path + "'");
  file << text;
}

struct Csv {
  std::ostringstream text;

  void comment(const std::string& key, const std::string& value) {
    text << "# " << key << ": " << value << '\n';
  }
  void header(const std::vector<std::string>& columns) { text << join(columns, ',') << '\n'; }
  void row(const std::string& first, const std::vector<double>& values) {
    text << first;
    for (double v : values) text << ',' << format_double(v);
    text << '\n';
  }
};

// ---------------------------------------------------------------- validate

struct ValidateArgs {
  std::string population;
};

int cmd_validate(const ValidateArgs& a, std::ostream& out) {
  const auto pop = read_population(a.population);
  if (!report_violations(pop, out)) return kExitFailed;
  out << "valid: " << pop.strata.size() << " strata, N = " << pop.total_size() << '\n';
  return kExitOk;
}

// ------------------------------------------------------------------- exact

struct ExactArgs {
  std::string population;
  bool paper_literal = false;
  std::string out_path;
};

int cmd_exact(const ExactArgs& a, std::ostream& out, std::ostream& err) {
  const auto pop = read_population(a.population);
  if (!report_violations(pop, err)) return kExitFailed;

  const std::string mode = a.paper_literal ? "--paper-literal" : "--weighted";
  Csv csv;
  csv.comment("tool", std::string("ipwvar ") + kToolVersion);
  csv.comment("command", "exact " + a.population + " " + mode);
  csv.comment("population", to_json(pop).dump());
  csv.header({"label", "weight", "v_true", "v_est", "mean_true", "mean_est", "difference"});

  const double big_n = static_cast<double>(pop.total_size());
  const auto literal = variance_difference(pop);
  std::vector<double> totals(6, 0.0);
  for (std::size_t i = 0; i < pop.strata.size(); ++i) {
    const auto& s = pop.strata[i];
    const auto v = stratum_variances(s);
    const double w = static_cast<double>(s.n_total) / big_n;
    std::vector<double> values;
    if (a.paper_literal) {
      values = {w, v.v_true, v.v_est, v.mean_true, v.mean_est, literal.per_stratum[i].total()};
    } else {
      const double w2 = w * w;
      values = {w, w2 * v.v_true, w2 * v.v_est, w * v.mean_true, w * v.mean_est,
                w2 * v.v_true - w2 * v.v_est};
    }
    for (std::size_t c = 0; c < values.size(); ++c) totals[c] += values[c];
    csv.row(s.label, values);
  }
  csv.row("total", totals);
  emit(csv.text.str(), a.out_path, out);
  return kExitOk;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string population;
  std::string schemes = "true,estimated,hybrid";
  std::uint64_t reps = 200'000;
  std::optional<std::uint64_t> seed;
  std::string outcome_model = "gaussian";
  std::uint64_t chunk_size = 4096;
  unsigned threads = 1;
  std::string out_path;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  const auto pop = read_population(a.population);
  if (!report_violations(pop, err)) return kExitFailed;
  const auto schemes = parse_schemes(a.schemes);
  const auto seed = resolve_seed(a.seed);

  SimConfig config;
  config.replications = a.reps;
  config.master_seed = seed.value;
  config.chunk_size = a.chunk_size;
  config.threads = a.threads;
  try {
    config.outcome_model = parse_outcome_model(a.outcome_model);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (a.reps < 1) throw UsageError("--reps must be >= 1");
  if (a.chunk_size < 1) throw UsageError("--chunk-size must be >= 1");

  const auto report = run_monte_carlo(pop, schemes, config);
  auto result = to_json(report);
  for (std::size_t k = 0; k < schemes.size(); ++k) {
    result["schemes"][k]["exact_variance"] = aggregate_variance(pop, schemes[k]);
    result["schemes"][k]["exact_mean"] = aggregate_mean(pop, schemes[k]);
  }

  const std::vector<std::string> command = {
      "simulate",         a.population,  "--schemes",         a.schemes,
      "--reps",           std::to_string(a.reps), "--seed",   std::to_string(seed.value),
      "--outcome-model",  a.outcome_model, "--chunk-size",    std::to_string(a.chunk_size)};
  nlohmann::json envelope = {{"tool", "ipwvar"},
                             {"version", kToolVersion},
                             {"command", command},
                             {"seed", seed_json(seed)},
                             {"population", to_json(pop)},
                             {"result", std::move(result)}};
  emit(envelope.dump(2) + "\n", a.out_path, out);
  return kExitOk;
}

// ------------------------------------------------------------------ figure

struct FigureArgs {
  int figure = 1;
  std::size_t grid_points = 49;
  std::uint64_t reps = 0;
  std::optional<std::uint64_t> seed;
  std::string outcome_model = "gaussian";
  unsigned threads = 1;
  long n_total = 17;
  double var1 = 4.0;
  double var0 = 16.0;
  double left_mu1 = 0.0, left_mu0 = 0.0;
  double right_mu1 = 1.0, right_mu0 = 3.0;
  double mu1 = 0.0, mu0 = 0.0;
  std::string out_path;
};

int cmd_figure(const FigureArgs& a, std::ostream& out) {
  if (a.grid_points < 1) throw UsageError("--grid-points must be >= 1");
  const auto seed = resolve_seed(a.seed);
  SimConfig config;
  config.replications = a.reps;
  config.master_seed = seed.value;
  config.threads = a.threads;
  try {
    config.outcome_model = parse_outcome_model(a.outcome_model);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto grid = propensity_grid(a.grid_points);
  const bool with_mc = a.reps > 0;

  auto stratum = [&](const std::string& label, double mu1, double mu0) {
    return StratumSpec{label, 0.5, mu1, mu0, a.var1, a.var0, a.n_total};
  };

  std::vector<std::string> command = {"figure", "--figure", std::to_string(a.figure),
                                      "--grid-points", std::to_string(a.grid_points),
                                      "--reps", std::to_string(a.reps),
                                      "--seed", std::to_string(seed.value),
                                      "--outcome-model", a.outcome_model,
                                      "--n-total", std::to_string(a.n_total),
                                      "--var1", format_double(a.var1),
                                      "--var0", format_double(a.var0)};
  Csv csv;
  csv.comment("tool", std::string("ipwvar ") + kToolVersion);
  if (with_mc) csv.comment("seed", seed_json(seed).dump());

  if (a.figure == 1) {
    for (auto [flag, v] : {std::pair{"--left-mu1", a.left_mu1}, {"--left-mu0", a.left_mu0},
                           {"--right-mu1", a.right_mu1}, {"--right-mu0", a.right_mu0}}) {
      command.push_back(flag);
      command.push_back(format_double(v));
    }
    const std::vector<WeightingScheme> schemes = {WeightingScheme::TruePropensity,
                                                  WeightingScheme::EstimatedPropensity};
    const PopulationSpec left{{stratum("x", a.left_mu1, a.left_mu0)}};
    const PopulationSpec right{{stratum("x", a.right_mu1, a.right_mu0)}};
    const auto lrows = sweep(left, SweepParameter::Propensity, grid, schemes, config);
    const auto rrows = sweep(right, SweepParameter::Propensity, grid, schemes, config);

    csv.comment("command", join(command, ' '));
    csv.comment("left_population", to_json(left).dump());
    csv.comment("right_population", to_json(right).dump());
    std::vector<std::string> cols = {"p",           "left_v_true",  "left_v_est", "left_difference",
                                     "right_v_true", "right_v_est", "right_difference"};
    if (with_mc)
      for (std::string panel : {"left", "right"})
        for (std::string s : {"true", "est"}) {
          cols.push_back(panel + "_mc_" + s);
          cols.push_back(panel + "_mc_" + s + "_se");
        }
    csv.header(cols);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto& l = lrows[i];
      const auto& r = rrows[i];
      std::vector<double> values = {l.exact_variance[0], l.exact_variance[1],
                                    l.exact_variance[0] - l.exact_variance[1],
                                    r.exact_variance[0], r.exact_variance[1],
                                    r.exact_variance[0] - r.exact_variance[1]};
      if (with_mc)
        for (const auto* row : {&l, &r})
          for (const auto& m : row->mc) {
            values.push_back(m.variance);
            values.push_back(m.variance_se);
          }
      csv.row(format_double(grid[i]), values);
    }
  } else if (a.figure == 2) {
    for (auto [flag, v] : {std::pair{"--mu1", a.mu1}, {"--mu0", a.mu0}}) {
      command.push_back(flag);
      command.push_back(format_double(v));
    }
    const std::vector<WeightingScheme> schemes = {WeightingScheme::EstimatedPropensity,
                                                  WeightingScheme::HybridCollapsed};
    const PopulationSpec pop{{stratum("a", a.mu1, a.mu0), stratum("b", a.mu1, a.mu0)}};
    const auto rows = sweep(pop, SweepParameter::Propensity, grid, schemes, config);

    csv.comment("command", join(command, ' '));
    csv.comment("population", to_json(pop).dump());
    std::vector<std::string> cols = {"p", "noncollapsed", "collapsed", "gap"};
    if (with_mc)
      for (std::string c : {"mc_noncollapsed", "mc_collapsed"}) {
        cols.push_back(c);
        cols.push_back(c + "_se");
      }
    csv.header(cols);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto& row = rows[i];
      std::vector<double> values = {row.exact_variance[0], row.exact_variance[1],
                                    row.exact_variance[0] - row.exact_variance[1]};
      for (const auto& m : row.mc) {
        values.push_back(m.variance);
        values.push_back(m.variance_se);
      }
      csv.row(format_double(grid[i]), values);
    }
  } else {
    throw UsageError("--figure must be 1 or 2");
  }
  emit(csv.text.str(), a.out_path, out);
  return kExitOk;
}

// --------------------------------------------------------- appendix-check

struct AppendixArgs {
  long n_max = 200;
  std::size_t grid_points = 199;
  std::string out_path;
};

int cmd_appendix_check(const AppendixArgs& a, std::ostream& out) {
  if (a.n_max < 1) throw UsageError("--n-max must be >= 1");
  if (a.grid_points < 1) throw UsageError("--grid-points must be >= 1");
  const auto grid = propensity_grid(a.grid_points);

  double min_gap = std::numeric_limits<double>::infinity();
  double min_g1 = std::numeric_limits<double>::infinity();
  long gap_n = 0, g1_n = 0;
  double gap_p = 0.0, g1_p = 0.0;
  bool g3_ok = true, g2_monotone = true, endpoints_ok = true;
  for (long n = 1; n <= a.n_max; ++n) {
    const auto at0 = appendix_polynomial_chain(n, 0.0);
    const auto at1 = appendix_polynomial_chain(n, 1.0);
    endpoints_ok = endpoints_ok && at0.g1 == 0.0 && at1.g1 == 1.0 &&
                   at0.g2 == 0.0 && at1.g2 == static_cast<double>(n);
    double prev_g2 = at0.g2;
    for (double p : grid) {
      const double gap = collapsed_pair_gap(n, p);
      if (gap < min_gap) {
        min_gap = gap;
        gap_n = n;
        gap_p = p;
      }
      const auto chain = appendix_polynomial_chain(n, p);
      if (chain.g1 < min_g1) {
        min_g1 = chain.g1;
        g1_n = n;
        g1_p = p;
      }
      g3_ok = g3_ok && chain.g3 >= 0.0;
      g2_monotone = g2_monotone && chain.g2 - prev_g2 >= kPolynomialTolerance;
      prev_g2 = chain.g2;
    }
    g2_monotone = g2_monotone && at1.g2 - prev_g2 >= kPolynomialTolerance;
  }
  const bool pass = min_gap >= kGapTolerance && min_g1 >= kPolynomialTolerance && g3_ok &&
                    g2_monotone && endpoints_ok;

  nlohmann::json report = {
      {"tool", "ipwvar"},
      {"version", kToolVersion},
      {"command", {"appendix-check", "--n-max", std::to_string(a.n_max), "--grid-points",
                   std::to_string(a.grid_points)}},
      {"min_gap", min_gap},
      {"argmin_gap", {{"n", gap_n}, {"p", gap_p}}},
      {"gap_tolerance", kGapTolerance},
      {"min_g1", min_g1},
      {"argmin_g1", {{"n", g1_n}, {"p", g1_p}}},
      {"g1_tolerance", kPolynomialTolerance},
      {"g2_nondecreasing", g2_monotone},
      {"g3_nonnegative", g3_ok},
      {"endpoints_ok", endpoints_ok},
      {"pass", pass}};
  emit(report.dump(2) + "\n", a.out_path, out);
  return pass ? kExitOk : kExitFailed;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Finite-sample variance of IPW treatment-effect estimators on discrete strata",
               "ipwvar"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  ValidateArgs va;
  auto* validate_cmd = app.add_subcommand("validate", "Check a population file");
  validate_cmd->add_option("population", va.population, "Population JSON")->required();

  ExactArgs ea;
  auto* exact_cmd = app.add_subcommand("exact", "Exact per-stratum variances as CSV");
  exact_cmd->add_option("population", ea.population, "Population JSON")->required();
  auto* weighted = exact_cmd->add_flag("--weighted", "(N_x/N)^2-weighted contributions (default)");
  auto* literal = exact_cmd->add_flag("--paper-literal", ea.paper_literal,
                                      "Unweighted per-stratum variances and their plain sum");
  weighted->excludes(literal);
  exact_cmd->add_option("--out", ea.out_path, "Write CSV here instead of stdout");

  SimulateArgs sa;
  auto* simulate_cmd = app.add_subcommand("simulate", "Monte Carlo report as JSON");
  simulate_cmd->add_option("population", sa.population, "Population JSON")->required();
  simulate_cmd->add_option("--schemes", sa.schemes, "Comma list of true, estimated, hybrid");
  simulate_cmd->add_option("--reps", sa.reps, "Replications");
  simulate_cmd->add_option("--seed", sa.seed, "Master seed (default: $IPWVAR_SEED or 42)");
  simulate_cmd->add_option("--outcome-model", sa.outcome_model, "gaussian or two-point");
  simulate_cmd->add_option("--chunk-size", sa.chunk_size, "Replications per seeded chunk");
  simulate_cmd->add_option("--threads", sa.threads, "Worker threads, 0 = all cores");
  simulate_cmd->add_option("--out", sa.out_path, "Write JSON here instead of stdout");

  FigureArgs fa;
  auto* figure_cmd = app.add_subcommand("figure", "Variance curves over a propensity grid as CSV");
  figure_cmd->add_option("--figure", fa.figure, "1: true vs estimated, 2: collapsed vs not")
      ->required();
  figure_cmd->add_option("--grid-points", fa.grid_points, "Interior grid points i/(K+1)");
  figure_cmd->add_option("--reps", fa.reps, "Monte Carlo replications per grid point (0 = none)");
  figure_cmd->add_option("--seed", fa.seed, "Master seed (default: $IPWVAR_SEED or 42)");
  figure_cmd->add_option("--outcome-model", fa.outcome_model, "gaussian or two-point");
  figure_cmd->add_option("--threads", fa.threads, "Worker threads, 0 = all cores");
  figure_cmd->add_option("--n-total", fa.n_total, "Cell size N_x");
  figure_cmd->add_option("--var1", fa.var1, "Treated outcome variance");
  figure_cmd->add_option("--var0", fa.var0, "Control outcome variance");
  figure_cmd->add_option("--left-mu1", fa.left_mu1, "Figure 1 left panel treated mean");
  figure_cmd->add_option("--left-mu0", fa.left_mu0, "Figure 1 left panel control mean");
  figure_cmd->add_option("--right-mu1", fa.right_mu1, "Figure 1 right panel treated mean");
  figure_cmd->add_option("--right-mu0", fa.right_mu0, "Figure 1 right panel control mean");
  figure_cmd->add_option("--mu1", fa.mu1, "Figure 2 treated mean");
  figure_cmd->add_option("--mu0", fa.mu0, "Figure 2 control mean");
  figure_cmd->add_option("--out", fa.out_path, "Write CSV here instead of stdout");

  AppendixArgs aa;
  auto* appendix_cmd =
      app.add_subcommand("appendix-check", "Audit the collapsed-pair inequality on a grid");
  appendix_cmd->add_option("--n-max", aa.n_max, "Largest n scanned (from 1)");
  appendix_cmd->add_option("--grid-points", aa.grid_points, "Interior p points i/(K+1)");
  appendix_cmd->add_option("--out", aa.out_path, "Write JSON here instead of stdout");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (validate_cmd->parsed()) return cmd_validate(va, out);
    if (exact_cmd->parsed()) return cmd_exact(ea, out, err);
    if (simulate_cmd->parsed()) return cmd_simulate(sa, out, err);
    if (figure_cmd->parsed()) return cmd_figure(fa, out);
    if (appendix_cmd->parsed()) return cmd_appendix_check(aa, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailed;
  }
  return kExitUsage;
}

}  // namespace ipwvar
