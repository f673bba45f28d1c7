// Command-line front end: planning, simulation, sweeps, verification checks
// and SVG rendering for the distributed nonparametric estimation stack.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "destim/destim.hpp"

using namespace destim;
using nlohmann::json;

namespace {

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("config", "cannot open " + path);
  return parse_experiment_config(in);
}

void apply_overrides(ExperimentConfig& cfg, std::uint64_t seed, bool seed_set,
                     const std::string& out, int threads) {
  if (seed_set) cfg.seed = seed;
  if (!out.empty()) cfg.out = out;
  if (threads > 0) cfg.threads = threads;
}

json plan_to_json(const RegimeParams& p, const RegimePlan& plan) {
  return json{{"m", p.m},
              {"n", p.n},
              {"l", p.l},
              {"r", p.r},
              {"case", case_name(plan.case_id)},
              {"n_ess", plan.n_ess},
              {"H", plan.H},
              {"K", plan.K},
              {"K0", plan.K0},
              {"c3", plan.c3}};
}

json point_to_json(const RatePoint& pt) {
  return json{{"m", pt.params.m},       {"n", pt.params.n},
              {"l", pt.params.l},       {"r", pt.params.r},
              {"case", case_name(pt.case_id)}, {"n_ess", pt.n_ess},
              {"K", pt.K},              {"K0", pt.K0},
              {"inner", pt.inner_variant}, {"trials", pt.trials},
              {"mean_mse", pt.mean_mse}, {"stderr", pt.stderr_},
              {"seed", pt.seed}};
}

ModelKind model_from_flag(const std::string& name) { return parse_model(name); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"communication-constrained distributed nonparametric estimation"};
  app.require_subcommand(1);

  std::string config_path, out_path, in_path, kind = "rate", model_name_flag = "density",
              variant = "count_frames";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
  long long m = 64, n = 16;
  int l = 8;
  double r = 0.8;
  bool theory_constants = false;
  double c3 = 1.0, c_inner = 1.0, headroom = 1.0;
  std::vector<int> k_grid{8, 16, 32};
  std::vector<double> c_values{10.0, 20.0};
  long samples = 100000;
  int trials = 10000, k_alpha = 8, b_bits = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "root seed")->each([&](const std::string&) { seed_set = true; });
    sub->add_option("--out", out_path, "output path");
    sub->add_option("--threads", threads, "worker threads (0 = hardware)");
  };

  std::string transcript_path;
  CLI::App* sim = app.add_subcommand("simulate", "run one configuration point");
  sim->add_option("config", config_path, "experiment config file")->required();
  sim->add_option("--transcript-out", transcript_path,
                  "dump one round's transcript in the binary format");
  add_common(sim);

  CLI::App* sweep = app.add_subcommand("sweep", "run a full experiment sweep");
  sweep->add_option("config", config_path, "experiment config file")->required();
  add_common(sweep);

  CLI::App* regimes = app.add_subcommand("regimes", "print the plan for (m, n, l, r)");
  regimes->add_option("--m", m)->required();
  regimes->add_option("--n", n)->required();
  regimes->add_option("--l", l)->required();
  regimes->add_option("--r", r)->required();
  regimes->add_flag("--theory-constants", theory_constants, "use the literal log-squared divisors");
  regimes->add_option("--c3", c3);
  regimes->add_option("--c-inner", c_inner);
  regimes->add_option("--case1-headroom", headroom);

  CLI::App* verify = app.add_subcommand("verify-assumptions", "check the model assumptions");
  verify->add_option("--model", model_name_flag, "density|gaussian|binary|poisson|heteroskedastic");
  verify->add_option("--r", r);
  verify->add_option("--k-grid", k_grid, "sieve cell counts");
  verify->add_option("--samples", samples, "samples per k");
  add_common(verify);

  CLI::App* bb = app.add_subcommand("balls-bins", "occupancy tail bounds");
  bb->add_option("--n", n)->required();
  bb->add_option("--k", m)->required();
  bb->add_option("--trials", trials);
  bb->add_option("--c", c_values, "bound thresholds");
  add_common(bb);

  CLI::App* bench = app.add_subcommand("inner-bench", "standalone inner-protocol error");
  bench->add_option("--variant", variant, "count_frames|quantized_frames|random_partition|idealized");
  bench->add_option("--k", k_alpha)->required();
  bench->add_option("--m", m)->required();
  bench->add_option("--n", n)->required();
  bench->add_option("--l", l)->required();
  bench->add_option("--b", b_bits, "frame bits for quantized_frames");
  bench->add_option("--trials", trials);
  add_common(bench);

  CLI::App* plot = app.add_subcommand("plot", "render an SVG chart from a sweep CSV");
  plot->add_option("--in", in_path, "sweep CSV")->required();
  plot->add_option("--kind", kind, "rate|phase");
  plot->add_option("--out", out_path, "SVG path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      ExperimentConfig cfg = load_config(config_path);
      apply_overrides(cfg, seed, seed_set, out_path, threads);
      if (cfg.ms.size() != 1 || cfg.ns.size() != 1 || cfg.ls.size() != 1)
        throw std::invalid_argument("simulate expects singleton m, n, l axes");
      const RegimeParams p{cfg.ms[0], cfg.ns[0], cfg.ls[0], cfg.r};
      const RatePoint pt = run_point(cfg, p, 0);
      json out = point_to_json(pt);
      if (!transcript_path.empty()) {
        OuterConfig oc = outer_config(cfg);
        oc.keep_transcript = true;
        const SieveFunction truth = experiment_truth(cfg, 0);
        Rng rng = make_rng(cfg.seed, 0xd0d0ull);
        const EstimateResult res = run_protocol(p, cfg.model, truth, oc, rng);
        const auto bytes = serialize(res.transcript);
        std::ofstream tf(transcript_path, std::ios::binary);
        tf.write(reinterpret_cast<const char*>(bytes.data()),
                 static_cast<std::streamsize>(bytes.size()));
        out["transcript_file"] = transcript_path;
        out["transcript_bits"] = res.transcript_bits;
      }
      if (cfg.worst_of_signs > 0) {
        ExperimentConfig fixed = cfg;
        fixed.worst_of_signs = 0;
        const RatePoint base = run_point(fixed, p, 0);
        out["mean_mse_fixed_signs"] = base.mean_mse;
        out["worst_of_signs"] = cfg.worst_of_signs;
      }
      std::cout << out.dump(2) << "\n";
      return 0;
    }

    if (sweep->parsed()) {
      ExperimentConfig cfg = load_config(config_path);
      apply_overrides(cfg, seed, seed_set, out_path, threads);
      const auto pts = run_sweep(cfg);
      json rows = json::array();
      for (const auto& pt : pts) rows.push_back(point_to_json(pt));
      std::cout << rows.dump(2) << "\n";
      return 0;
    }

    if (regimes->parsed()) {
      const RegimeParams p{m, n, l, r};
      PlanOptions opt;
      opt.theory_constants = theory_constants;
      opt.c3 = c3;
      opt.c_inner = c_inner;
      opt.case1_headroom = headroom;
      std::cout << plan_to_json(p, make_plan(p, opt)).dump(2) << "\n";
      return 0;
    }

    if (verify->parsed()) {
      const ModelKind mk = model_from_flag(model_name_flag);
      const AssumptionReport rep =
          verify_assumptions(mk, r, k_grid, samples, seed_set ? seed : 1);
      json out{{"model", model_name(mk)},
               {"r", r},
               {"scaling_ratio", rep.scaling_ratio},
               {"all_pass", rep.all_pass}};
      out["per_k"] = json::array();
      for (const auto& kr : rep.per_k)
        out["per_k"].push_back({{"k", kr.k},
                                {"unbiased_ok", kr.unbiased_ok},
                                {"marginal_ok", kr.marginal_ok},
                                {"mean_loglr", kr.mean_loglr},
                                {"scaled_mean", kr.scaled_mean},
                                {"tail_ok", kr.tail_ok},
                                {"nu_mult", kr.nu_mult},
                                {"beta_mult", kr.beta_mult}});
      std::cout << out.dump(2) << "\n";
      return rep.all_pass ? 0 : 1;
    }

    if (bb->parsed()) {
      Rng rng = make_rng(seed_set ? seed : 1);
      const BallsBinsReport rep =
          balls_bins_sim(static_cast<int>(n), static_cast<int>(m), trials, rng, c_values);
      json out{{"n", rep.n},
               {"k", rep.k},
               {"trials", rep.trials},
               {"mean_occupancy", rep.mean_occupancy},
               {"max_seen", rep.max_seen},
               {"all_pass", rep.all_pass}};
      out["bounds"] = json::array();
      for (const auto& b : rep.bounds)
        out["bounds"].push_back({{"which", b.which},
                                 {"c", b.c},
                                 {"threshold", b.threshold},
                                 {"empirical", b.empirical},
                                 {"bound", b.bound},
                                 {"pass", b.pass}});
      std::cout << out.dump(2) << "\n";
      return rep.all_pass ? 0 : 1;
    }

    if (bench->parsed()) {
      Rng rng = make_rng(seed_set ? seed : 1);
      std::vector<double> p(static_cast<std::size_t>(k_alpha));
      std::exponential_distribution<double> e(1.0);
      double tot = 0.0;
      for (auto& v : p) tot += (v = e(rng));
      for (auto& v : p) v /= tot;
      InnerChoice choice;
      if (variant == "count_frames") choice = {ProtocolVariant::CountFrames, 0};
      else if (variant == "quantized_frames")
        choice = {ProtocolVariant::QuantizedFrames, b_bits > 0 ? b_bits : std::min(l, bits_for_count(n))};
      else if (variant == "random_partition") choice = {ProtocolVariant::RandomPartition, 0};
      else if (variant == "idealized") choice = {ProtocolVariant::Idealized, 0};
      else throw std::invalid_argument("unknown variant: " + variant);
      if (choice.variant == ProtocolVariant::CountFrames) choice.b_bits = bits_for_count(n);

      std::discrete_distribution<int> dist(p.begin(), p.end());
      double mse = 0.0;
      std::vector<double> mean(static_cast<std::size_t>(k_alpha), 0.0);
      for (int t = 0; t < trials; ++t) {
        SymbolBlock sb;
        sb.m = static_cast<int>(m);
        sb.n = static_cast<int>(n);
        sb.k = k_alpha;
        sb.w.resize(static_cast<std::size_t>(m * n));
        for (auto& w : sb.w) w = static_cast<std::uint32_t>(dist(rng));
        auto [tr, est] = run_inner_round(choice, sb, l, rng);
        for (int w = 0; w < k_alpha; ++w) {
          const double d = est[static_cast<std::size_t>(w)] - p[static_cast<std::size_t>(w)];
          mse += d * d;
          mean[static_cast<std::size_t>(w)] += est[static_cast<std::size_t>(w)];
        }
      }
      double max_bias = 0.0;
      for (int w = 0; w < k_alpha; ++w)
        max_bias = std::max(max_bias, std::abs(mean[static_cast<std::size_t>(w)] / trials - p[static_cast<std::size_t>(w)]));
      json out{{"variant", variant_name(choice.variant)},
               {"k", k_alpha},
               {"m", m},
               {"n", n},
               {"l", l},
               {"trials", trials},
               {"mse", mse / trials},
               {"max_abs_bias", max_bias}};
      std::cout << out.dump(2) << "\n";
      return 0;
    }

    if (plot->parsed()) {
      const auto pts = read_csv(in_path);
      if (pts.empty()) throw std::invalid_argument("no rows in " + in_path);
      if (kind == "rate")
        write_rate_svg(pts, out_path);
      else if (kind == "phase")
        write_phase_svg(pts, out_path);
      else
        throw std::invalid_argument("unknown plot kind: " + kind);
      std::cout << "wrote " << out_path << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
