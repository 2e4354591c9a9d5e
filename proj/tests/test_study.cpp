#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "itepred/serialize.hpp"
#include "itepred/study.hpp"

using namespace itepred;

namespace {

StudyPlan tiny_plan() {
  StudyPlan plan;
  plan.ns = {200};
  plan.beta_t_values = {std::log(0.6)};
  plan.heterogeneous = {false};
  plan.runs = 2;
  plan.validation_n = 1000;
  plan.strategies = {"overall", "hom-ml"};
  plan.base_seed = 555;
  plan.threads = 2;
  return plan;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("factorial plan enumerates settings in order") {
  StudyPlan plan = StudyPlan::paper_defaults();
  auto settings = plan.settings();
  CHECK(settings.size() == 12);
  CHECK(settings[0].n == 400);
  CHECK(settings.back().n == 3600);
  CHECK(settings.back().heterogeneous);
}

TEST_CASE("smoke: one setting, one run, strategy overall") {
  StudyPlan plan = tiny_plan();
  plan.runs = 1;
  plan.strategies = {"overall"};
  auto records = run_study_records(plan);
  REQUIRE(records.size() == 1);
  CHECK(records[0].ok);
  CHECK(records[0].rmspe >= 0.0);
  CHECK(records[0].strategy == "overall");
  CHECK(records[0].calibration.bins.size() == 20);
}

TEST_CASE("identical base seeds give byte-identical result CSVs") {
  StudyPlan plan = tiny_plan();
  auto dir1 = fresh_dir("itepred_study_a");
  auto dir2 = fresh_dir("itepred_study_b");
  run_study(plan, dir1);
  run_study(plan, dir2);
  CHECK(slurp(dir1 / "runs.csv") == slurp(dir2 / "runs.csv"));
  CHECK(slurp(dir1 / "calib.csv") == slurp(dir2 / "calib.csv"));
  CHECK(slurp(dir1 / "aggregate.csv") == slurp(dir2 / "aggregate.csv"));
  CHECK(!slurp(dir1 / "runs.csv").empty());
}

TEST_CASE("parallel and serial execution produce identical records") {
  StudyPlan serial = tiny_plan();
  serial.threads = 1;
  StudyPlan parallel = tiny_plan();
  parallel.threads = 4;
  auto a = run_study_records(serial);
  auto b = run_study_records(parallel);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].strategy == b[i].strategy);
    CHECK(a[i].run == b[i].run);
    CHECK(a[i].rmspe == b[i].rmspe);
    CHECK(a[i].q90_delta == b[i].q90_delta);
  }
}

TEST_CASE("resume reproduces the uninterrupted result byte for byte") {
  StudyPlan plan = tiny_plan();
  auto full_dir = fresh_dir("itepred_study_full");
  run_study(plan, full_dir);
  const std::string full_runs = slurp(full_dir / "runs.csv");
  const std::string full_calib = slurp(full_dir / "calib.csv");

  // Simulate a crash: keep only the first unit's lines.
  auto crash_dir = fresh_dir("itepred_study_crash");
  std::filesystem::create_directories(crash_dir);
  {
    std::istringstream in(full_runs);
    std::ofstream out(crash_dir / "runs.csv");
    std::string line;
    int kept = 0;
    while (std::getline(in, line) && kept < 1 + 2) {  // header + first unit (2 strategies)
      out << line << "\n";
      ++kept;
    }
  }
  {
    std::istringstream in(full_calib);
    std::ofstream out(crash_dir / "calib.csv");
    std::string line;
    int kept = 0;
    while (std::getline(in, line) && kept < 1 + 40) {  // header + 2 strategies x 20 bins
      out << line << "\n";
      ++kept;
    }
  }
  run_study(plan, crash_dir, /*resume=*/true);
  CHECK(slurp(crash_dir / "runs.csv") == full_runs);
  CHECK(slurp(crash_dir / "calib.csv") == full_calib);
}

TEST_CASE("resume with a truncated partial unit recomputes it") {
  StudyPlan plan = tiny_plan();
  auto full_dir = fresh_dir("itepred_study_full2");
  run_study(plan, full_dir);
  const std::string full_runs = slurp(full_dir / "runs.csv");

  auto crash_dir = fresh_dir("itepred_study_crash2");
  std::filesystem::create_directories(crash_dir);
  {
    std::istringstream in(full_runs);
    std::ofstream out(crash_dir / "runs.csv");
    std::string line;
    int kept = 0;
    while (std::getline(in, line) && kept < 1 + 3) {  // header + 1.5 units
      out << line << "\n";
      ++kept;
    }
  }
  // calib.csv intentionally missing: the whole partial tail is discarded.
  run_study(plan, crash_dir, /*resume=*/true);
  CHECK(slurp(crash_dir / "runs.csv") == full_runs);
}

TEST_CASE("strategy failures become error records, not crashes") {
  StudyPlan plan = tiny_plan();
  plan.ns = {40};  // far too small for a 12-covariate interaction ML fit
  plan.strategies = {"hte-ml", "overall"};
  plan.runs = 1;
  auto records = run_study_records(plan);
  REQUIRE(records.size() == 2);
  CHECK_FALSE(records[0].ok);
  CHECK(!records[0].error.empty());
  CHECK(records[1].ok);
}

TEST_CASE("aggregate: hand-computed mean and standard error") {
  std::vector<RunRecord> records(2);
  for (int i = 0; i < 2; ++i) {
    records[i].setting_id = "s";
    records[i].n = 100;
    records[i].strategy = "overall";
    records[i].ok = true;
  }
  records[0].rmspe = 0.1;
  records[1].rmspe = 0.3;
  auto cells = aggregate(records);
  REQUIRE(cells.size() == 1);
  CHECK(cells[0].mean_rmspe == doctest::Approx(0.2));
  CHECK(cells[0].se_rmspe == doctest::Approx(0.1));
  CHECK(cells[0].runs_ok == 2);
}

TEST_CASE("aggregate: all-error cells are flagged, not dropped") {
  std::vector<RunRecord> records(3);
  for (auto& r : records) {
    r.setting_id = "s";
    r.strategy = "hte-ml";
    r.ok = false;
    r.error = "Separation: no finite maximum likelihood estimate";
  }
  auto cells = aggregate(records);
  REQUIRE(cells.size() == 1);
  CHECK(cells[0].runs_ok == 0);
  CHECK(cells[0].runs_err == 3);
  CHECK(std::isnan(cells[0].mean_rmspe));
}

TEST_CASE("aggregate: invariant to record order") {
  std::vector<RunRecord> records(4);
  for (int i = 0; i < 4; ++i) {
    records[i].setting_id = "s";
    records[i].strategy = i % 2 == 0 ? "a" : "b";
    records[i].ok = true;
    records[i].rmspe = 0.1 * (i + 1);
  }
  auto forward = aggregate(records);
  std::reverse(records.begin(), records.end());
  auto backward = aggregate(records);
  REQUIRE(forward.size() == backward.size());
  for (const auto& cell : forward) {
    bool found = false;
    for (const auto& other : backward) {
      if (other.strategy == cell.strategy) {
        CHECK(other.mean_rmspe == doctest::Approx(cell.mean_rmspe).epsilon(1e-12));
        found = true;
      }
    }
    CHECK(found);
  }
}

TEST_CASE("plan JSON round trip") {
  StudyPlan plan = tiny_plan();
  auto path = std::filesystem::temp_directory_path() / "itepred_plan.json";
  save_plan(path, plan);
  StudyPlan back = load_plan(path);
  CHECK(back.ns == plan.ns);
  CHECK(back.beta_t_values == plan.beta_t_values);
  CHECK(back.heterogeneous == plan.heterogeneous);
  CHECK(back.runs == plan.runs);
  CHECK(back.validation_n == plan.validation_n);
  CHECK(back.strategies == plan.strategies);
  CHECK(back.base_seed == plan.base_seed);
  CHECK(back.perturbation_seed == plan.perturbation_seed);
}

TEST_CASE("runs.csv round trip through read_run_records") {
  StudyPlan plan = tiny_plan();
  plan.runs = 1;
  auto dir = fresh_dir("itepred_study_rt");
  run_study(plan, dir);
  auto records = read_run_records(dir / "runs.csv");
  REQUIRE(records.size() == 2);
  CHECK(records[0].setting_id == plan.settings()[0].id);
  CHECK(records[0].ok);
  CHECK(records[0].rmspe > 0.0);
  CHECK(records[1].strategy == "hom-ml");
}
