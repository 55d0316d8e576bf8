// nmf-energy: command-line front end for instance generation, model
// building, solving, classical fitting and experiment runs.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <nmf_energy.hpp>

namespace ne = nmf_energy;
namespace fs = std::filesystem;

namespace {

void emit(const ne::Json& j, const std::string& out) {
  if (out.empty() || out == "-")
    std::cout << j.dump(2) << "\n";
  else
    ne::write_json_file(out, j);
}

ne::ProblemInstance load_instance(const std::string& path) {
  return ne::read_json_file(path).get<ne::ProblemInstance>();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Energy-based and classical non-negative matrix factorization"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ne::kToolVersion));

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a test instance");
  std::string gen_kind = "continuous_planted", gen_out, gen_id = "case-0";
  std::size_t gen_n = 2, gen_m = 2, gen_p = 1;
  int gen_levels = 8;
  std::uint64_t gen_seed = 0;
  gen->add_option("--kind", gen_kind,
                  "continuous_planted|continuous_raw|integer_planted|integer_raw");
  gen->add_option("-n", gen_n, "Rows of V");
  gen->add_option("-m", gen_m, "Columns of V");
  gen->add_option("-p", gen_p, "Inner dimension");
  gen->add_option("--levels", gen_levels, "Integer levels (integer kinds)");
  gen->add_option("--seed", gen_seed, "Seed");
  gen->add_option("--case-id", gen_id, "Case identifier");
  gen->add_option("--out", gen_out, "Output JSON (default stdout)");

  // build quardp | qubo
  auto* build = app.add_subcommand("build", "Build an energy model from an instance");
  build->require_subcommand(1);
  auto* bq = build->add_subcommand("quardp", "Quartic polynomial model");
  std::string bq_instance, bq_out;
  std::optional<double> bq_R;
  bq->add_option("--instance", bq_instance)->required();
  bq->add_option("--R", bq_R, "Sum constraint (default p(n+m))");
  bq->add_option("--out", bq_out);
  auto* bb = build->add_subcommand("qubo", "Binarized and quadratized model");
  std::string bb_instance, bb_out;
  int bb_bits = 2;
  double bb_kappa = 1.0, bb_offset = 0.0;
  std::optional<double> bb_lambda;
  bb->add_option("--instance", bb_instance)->required();
  bb->add_option("--bits", bb_bits, "N: entries use N+1 bits");
  bb->add_option("--kappa", bb_kappa, "Bit scale");
  bb->add_option("--offset", bb_offset, "Constant C");
  bb->add_option("--lambda", bb_lambda, "Global penalty (default: local bound)");
  bb->add_option("--out", bb_out);

  // solve
  auto* solve = app.add_subcommand("solve", "Run the energy solver on a model");
  std::string sv_model, sv_mode = "continuous", sv_out;
  int sv_schedule = 1, sv_levels = 8;
  std::uint64_t sv_seed = 0;
  std::size_t sv_runs = 10;
  solve->add_option("--model", sv_model)->required();
  solve->add_option("--mode", sv_mode, "continuous|discrete|qubo");
  solve->add_option("--schedule", sv_schedule, "Relaxation schedule 1|2|3");
  solve->add_option("--seed", sv_seed);
  solve->add_option("--runs", sv_runs);
  solve->add_option("--levels", sv_levels, "Levels per entry (discrete mode)");
  solve->add_option("--out", sv_out);

  // fit
  auto* fit = app.add_subcommand("fit", "Classical HALS fit");
  std::string ft_instance, ft_init = "nndsvda", ft_w0, ft_h0, ft_out;
  std::uint64_t ft_seed = 0;
  ne::HalsParams ft_params;
  fit->add_option("--instance", ft_instance)->required();
  fit->add_option("--init", ft_init, "nndsvda|random|mean|given");
  fit->add_option("--w0", ft_w0, "W0 CSV (given init)");
  fit->add_option("--h0", ft_h0, "H0 CSV (given init)");
  fit->add_option("--seed", ft_seed, "Seed (random init)");
  fit->add_option("--max-iter", ft_params.max_iter);
  fit->add_option("--tol", ft_params.tol);
  fit->add_option("--out", ft_out);

  // intsolve
  auto* ints = app.add_subcommand("intsolve", "Integer factorization search");
  std::string is_instance, is_objective = "sq", is_mode = "heuristic", is_out;
  double is_time = 1.0;
  std::uint64_t is_seed = 0;
  std::optional<std::size_t> is_iters;
  ints->add_option("--instance", is_instance)->required();
  ints->add_option("--objective", is_objective, "abs|sq");
  ints->add_option("--mode", is_mode, "oracle|heuristic");
  ints->add_option("--time-limit", is_time, "Seconds (heuristic)");
  ints->add_option("--iterations", is_iters, "Logical budget instead of a time limit");
  ints->add_option("--seed", is_seed);
  ints->add_option("--out", is_out);

  // experiment
  auto* exp = app.add_subcommand("experiment", "Run an experiment from a config");
  std::string ex_config, ex_out;
  bool ex_wall = false;
  exp->add_option("--config", ex_config)->required();
  exp->add_option("--out", ex_out, "Output directory (default: config output_dir)");
  exp->add_flag("--wallclock", ex_wall, "Match heuristic budgets by wall-clock time");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const ne::CaseKind kind = ne::parse_case_kind(gen_kind);
      const bool integer =
          kind == ne::CaseKind::IntegerPlanted || kind == ne::CaseKind::IntegerRaw;
      const ne::ValueDomain dom =
          integer ? ne::ValueDomain::integer(gen_levels) : ne::ValueDomain::continuous();
      emit(ne::generate_case(kind, gen_n, gen_m, gen_p, dom, gen_seed, gen_id), gen_out);
    } else if (*bq) {
      emit(ne::build_quardp(load_instance(bq_instance), bq_R), bq_out);
    } else if (*bb) {
      const ne::ProblemInstance inst = load_instance(bb_instance);
      const ne::BinarizationScheme scheme{bb_bits, bb_kappa, bb_offset};
      scheme.validate();
      const ne::PenaltyPolicy policy =
          bb_lambda ? ne::PenaltyPolicy::global(*bb_lambda) : ne::PenaltyPolicy::local_bound();
      ne::Json j = ne::build_qubo(inst, scheme, policy);
      j["scheme"] = scheme;
      j["layout"] = ne::VariableLayout(inst.n, inst.m, inst.p, false);
      j["case_id"] = inst.case_id;
      emit(j, bb_out);
    } else if (*solve) {
      const ne::Json model = ne::read_json_file(sv_model);
      const ne::SolverMode mode = ne::parse_solver_mode(sv_mode);
      const auto schedule = ne::RelaxationSchedule::standard(sv_schedule);
      ne::Json runs = ne::Json::array();
      for (std::size_t r = 0; r < sv_runs; ++r) {
        const std::uint64_t seed = ne::derive_seed(sv_seed, {static_cast<std::uint64_t>(r)});
        ne::SolverRun run;
        if (mode == ne::SolverMode::Qubo) {
          if (model.value("kind", "") != "qubo")
            throw ne::InvalidArgument("qubo mode needs a model from 'build qubo'");
          const auto q = model.get<ne::QuboModel>();
          if (auto b = ne::check_qubo_budget(q.num_vars); !b)
            throw ne::BudgetViolation(b.detail);
          run = ne::solve_qubo(q, ne::QuboParams::from_schedule(schedule), seed);
        } else {
          if (model.value("kind", "") != "quardp")
            throw ne::InvalidArgument("continuous/discrete modes need a model from 'build quardp'");
          const auto q = model.get<ne::QuardpModel>();
          if (mode == ne::SolverMode::Continuous) {
            run = ne::solve_continuous(q, schedule, seed);
          } else {
            std::vector<std::size_t> levels(q.layout.total_vars(),
                                            static_cast<std::size_t>(sv_levels));
            if (auto s = q.layout.slack_index()) levels[*s] = 1;
            run = ne::solve_discrete(q.poly, levels, schedule, seed);
          }
        }
        runs.push_back(run);
      }
      emit({{"model", sv_model}, {"mode", sv_mode}, {"schedule", sv_schedule},
            {"seed", sv_seed}, {"runs", runs}},
           sv_out);
    } else if (*fit) {
      const ne::ProblemInstance inst = load_instance(ft_instance);
      ne::InitStrategy init = ne::InitNndsvda{};
      if (ft_init == "random") {
        init = ne::InitRandom{ft_seed};
      } else if (ft_init == "mean") {
        init = ne::InitConstantMean{};
      } else if (ft_init == "given") {
        if (ft_w0.empty() || ft_h0.empty())
          throw ne::InvalidArgument("given init needs --w0 and --h0");
        init = ne::InitGiven{{ne::read_matrix_csv_file(ft_w0), ne::read_matrix_csv_file(ft_h0)}};
      } else if (ft_init != "nndsvda") {
        throw ne::InvalidArgument("unknown init '" + ft_init + "'");
      }
      const ne::FitResult res = ne::hals_fit(inst.V, inst.p, init, ft_params);
      ne::Json j = res;
      const auto e = ne::error_metrics(inst.V, res.factors);
      j["epsilon"] = e.absolute;
      j["delta"] = e.relative;
      emit(j, ft_out);
    } else if (*ints) {
      const ne::ProblemInstance inst = load_instance(is_instance);
      const ne::IntObjective obj = ne::parse_int_objective(is_objective);
      ne::IntSolution sol;
      if (is_mode == "oracle") {
        sol = ne::brute_force_optimum(inst, obj);
      } else if (is_mode == "heuristic") {
        ne::SearchBudget budget;
        budget.time_limit = is_time;
        budget.seed = is_seed;
        budget.logical_iterations = is_iters;
        sol = ne::heuristic_search(inst, obj, budget);
      } else {
        throw ne::InvalidArgument("unknown mode '" + is_mode + "'");
      }
      emit({{"objective", is_objective}, {"mode", is_mode}, {"value", sol.value},
            {"iterations", sol.iterations}, {"W", sol.factors.W}, {"H", sol.factors.H},
            {"delta", ne::error_metrics(inst.V, sol.factors).relative}},
           is_out);
    } else if (*exp) {
      ne::ExperimentConfig cfg = ne::read_json_file(ex_config).get<ne::ExperimentConfig>();
      if (ex_wall) cfg.wallclock = true;
      if (!ex_out.empty()) cfg.output_dir = ex_out;
      const ne::ExperimentReport report = ne::run_experiment(cfg);
      ne::report_tables(report, cfg.output_dir);
      std::size_t skipped = 0;
      for (const auto& c : report.cases) skipped += !c.ok();
      std::cerr << "experiment " << ne::to_string(cfg.experiment) << ": "
                << report.cases.size() << " records (" << skipped << " skipped) -> "
                << cfg.output_dir << "\n";
    }
  } catch (const ne::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
