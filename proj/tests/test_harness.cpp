#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "destim/destim.hpp"
#include "oracles.hpp"

using namespace destim;

TEST_CASE("balls and bins occupancy") {
  Rng rng = make_rng(401);

  SECTION("one ball one bin") {
    const double cs[] = {10.0};
    const BallsBinsReport rep = balls_bins_sim(1, 1, 200, rng, cs);
    CHECK(rep.max_seen == 1);
    CHECK(rep.mean_occupancy == 1.0);
    CHECK(rep.all_pass);
  }

  SECTION("square grid tail bound") {
    const double cs[] = {20.0};
    const BallsBinsReport rep = balls_bins_sim(64, 64, 10000, rng, cs);
    REQUIRE(!rep.bounds.empty());
    for (const auto& b : rep.bounds) {
      CHECK(b.empirical <= b.bound + b.slack);
      CHECK(b.pass);
    }
    CHECK(std::abs(rep.mean_occupancy - 1.0) <= 4.0 * rep.mean_occupancy_se);
  }
}

TEST_CASE("sub-exponential tail checks") {
  Rng rng = make_rng(409);

  SECTION("standard normal passes at (1, 0)") {
    std::vector<double> xs(20000);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (auto& x : xs) x = nd(rng);
    CHECK(subexp_tail_check(xs, 1.0, 0.0).pass);
  }

  SECTION("bounded samples pass at nu = (b - a) / 2") {
    std::vector<double> xs(20000);
    std::uniform_real_distribution<double> ud(2.0, 5.0);
    for (auto& x : xs) x = ud(rng);
    CHECK(subexp_tail_check(xs, 1.5, 0.0).pass);
  }

  SECTION("heavy polynomial tails fail the whole grid") {
    std::vector<double> xs(20000);
    for (auto& x : xs) x = oracle::pareto(1.5, rng);
    const SubexpFit fit = fit_subexp(xs);
    CHECK(!fit.found);
  }

  SECTION("preconditions") {
    std::vector<double> tiny(10, 0.0);
    CHECK_THROWS_AS(subexp_tail_check(tiny, 1.0, 0.0), std::invalid_argument);
  }
}

TEST_CASE("rate fits recover planted slopes") {
  Rng rng = make_rng(419);

  SECTION("exact power law") {
    std::vector<RateObservation> pts;
    for (double x : {100.0, 400.0, 1000.0, 4000.0, 20000.0})
      pts.push_back({x, 3.0 * std::pow(x, -0.6), 0.0});
    const RateFitResult fit = rate_fit(pts);
    CHECK(fit.slope == Catch::Approx(-0.6).margin(1e-9));
    CHECK(fit.intercept == Catch::Approx(std::log(3.0)).margin(1e-9));
    CHECK(fit.r2 == Catch::Approx(1.0).margin(1e-12));
  }

  SECTION("ten percent multiplicative noise") {
    std::normal_distribution<double> nd(0.0, 0.1);
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<RateObservation> pts;
      for (double x = 50.0; x < 100000.0; x *= 2.0)
        pts.push_back({x, 2.0 * std::pow(x, -0.6) * std::exp(nd(rng)), 0.0});
      CHECK(rate_fit(pts).slope == Catch::Approx(-0.6).margin(0.05));
      CHECK(rate_fit(pts, true).slope == Catch::Approx(-0.6).margin(0.05));
    }
  }

  SECTION("preconditions") {
    std::vector<RateObservation> few{{10.0, 1.0, 0.0}, {100.0, 0.5, 0.0}, {1000.0, 0.2, 0.0}};
    CHECK_THROWS_AS(rate_fit(few), std::invalid_argument);
    std::vector<RateObservation> narrow{
        {10.0, 1.0, 0.0}, {12.0, 0.9, 0.0}, {14.0, 0.8, 0.0}, {16.0, 0.7, 0.0}};
    CHECK_THROWS_AS(rate_fit(narrow), std::invalid_argument);
  }
}

TEST_CASE("assumption verification passes for the density model") {
  const int grid[] = {8, 16, 32};
  const AssumptionReport rep =
      verify_assumptions(ModelKind::Density, 0.8, grid, 20000, 20260809);
  CHECK(rep.all_pass);
  CHECK(rep.scaling_ratio <= 10.0);
  for (const auto& kr : rep.per_k) {
    CHECK(kr.unbiased_ok);
    CHECK(kr.marginal_ok);
    CHECK(kr.tail_ok);
    CHECK(kr.nu_mult > 0.0);
  }
}

TEST_CASE("zero perturbation verifies trivially") {
  const int grid[] = {8, 16};
  const AssumptionReport rep =
      verify_assumptions(ModelKind::GaussianRegression, 0.8, grid, 5000, 3, 0.0);
  CHECK(rep.all_pass);
  CHECK(rep.scaling_ratio == 1.0);
  for (const auto& kr : rep.per_k) CHECK(kr.mean_loglr == 0.0);
}

TEST_CASE("sweeps write stable deterministic CSV") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "destim_test_sweep";
  fs::remove_all(dir);
  fs::create_directories(dir);

  ExperimentConfig cfg;
  cfg.model = ModelKind::Density;
  cfg.r = 0.8;
  cfg.sieve_k = 1;
  cfg.ms = {16, 32};
  cfg.ns = {4};
  cfg.ls = {8};
  cfg.trials = 20;
  cfg.max_trials = 20;
  cfg.seed = 99;
  cfg.threads = 2;

  SECTION("single point gives one row") {
    ExperimentConfig one = cfg;
    one.ms = {16};
    one.out = (dir / "one.csv").string();
    const auto rows = run_sweep(one);
    CHECK(rows.size() == 1);
    std::ifstream in(one.out);
    std::string line;
    int count = 0;
    while (std::getline(in, line)) ++count;
    CHECK(count == 2);  // header plus one row
  }

  SECTION("identical seeds reproduce identical bytes") {
    ExperimentConfig a = cfg, b = cfg;
    a.out = (dir / "a.csv").string();
    b.out = (dir / "b.csv").string();
    b.threads = 1;
    run_sweep(a);
    run_sweep(b);
    std::ifstream fa(a.out), fb(b.out);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    CHECK(sa.str() == sb.str());
    CHECK(sa.str().find("case") != std::string::npos);
  }

  SECTION("completed rows are reused on resume") {
    ExperimentConfig full = cfg;
    full.out = (dir / "resume.csv").string();
    const auto rows = run_sweep(full);
    // truncate the file to the first data row, then resume
    {
      std::ofstream out(full.out, std::ios::trunc);
      out << csv_header() << "\n" << csv_row(rows[0]) << "\n";
    }
    const auto resumed = run_sweep(full);
    REQUIRE(resumed.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      CHECK(resumed[i].mean_mse == rows[i].mean_mse);
    const auto reread = read_csv(full.out);
    CHECK(reread.size() == rows.size());
  }

  fs::remove_all(dir);
}

TEST_CASE("csv rows round trip") {
  RatePoint pt;
  pt.params = {256, 16, 8, 0.8};
  pt.case_id = RegimeCase::Case2;
  pt.n_ess = 2048.0;
  pt.K = 2;
  pt.K0 = 11.7631;
  pt.inner_variant = "random_partition";
  pt.trials = 100;
  pt.mean_mse = 0.1234567890123;
  pt.stderr_ = 0.002;
  pt.seed = 42;
  const auto back = parse_csv_row(csv_row(pt));
  REQUIRE(back.has_value());
  CHECK(back->params.m == 256);
  CHECK(back->case_id == RegimeCase::Case2);
  CHECK(back->mean_mse == pt.mean_mse);
  CHECK(back->seed == 42);
  CHECK(!parse_csv_row("not,a,row").has_value());
}

TEST_CASE("config files parse into experiment configs") {
  std::istringstream in(R"(# example configuration
model = gaussian
r = 0.7
sieve_k = 4
sieve_eps = auto
m = 64, 128, 256
n = 16
l = 8, 12
trials = 50
seed = 1234
inner = auto
theory_constants = false
c3 = 0.75
out = rate.csv
threads = 2
)");
  const ExperimentConfig cfg = parse_experiment_config(in);
  CHECK(cfg.model == ModelKind::GaussianRegression);
  CHECK(cfg.r == 0.7);
  CHECK(cfg.sieve_k == 4);
  CHECK(cfg.ms == std::vector<long long>{64, 128, 256});
  CHECK(cfg.ls == std::vector<int>{8, 12});
  CHECK(cfg.trials == 50);
  CHECK(cfg.seed == 1234);
  CHECK(cfg.plan.c3 == 0.75);
  CHECK(cfg.out == "rate.csv");

  std::istringstream bad("model = unknown_model\n");
  CHECK_THROWS_AS(parse_experiment_config(bad), std::invalid_argument);
}

TEST_CASE("svg charts render from sweep points") {
  namespace fs = std::filesystem;
  std::vector<RatePoint> pts;
  for (int i = 0; i < 5; ++i) {
    RatePoint pt;
    pt.params = {64LL << i, 16, 8, 0.8};
    pt.n_ess = 600.0 * (1 << i);
    pt.mean_mse = 0.5 / (1 << i);
    pt.params.l = 8;
    pts.push_back(pt);
  }
  const fs::path path = fs::temp_directory_path() / "destim_rate.svg";
  write_rate_svg(pts, path.string());
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str().find("<svg") != std::string::npos);
  CHECK(ss.str().find("polyline") != std::string::npos);
  fs::remove(path);
}
