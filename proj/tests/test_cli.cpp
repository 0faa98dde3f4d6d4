#include "ftsens/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

using namespace ftsens;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("ftsens_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

struct Run {
  int code;
  std::string out, err;
};

Run run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

cli::json run_json(const std::vector<std::string>& args, int expect_code = 0) {
  auto r = run_cli(args);
  EXPECT_EQ(r.code, expect_code) << r.err;
  return cli::json::parse(r.out);
}

/// exit status of the installed binary; empty when FTSENS_BIN is unset
std::optional<int> run_binary(const std::string& args, const std::string& env = "") {
  const char* bin = std::getenv("FTSENS_BIN");
  if (!bin) return std::nullopt;
  std::string cmd = env + " \"" + bin + "\" " + args + " >/dev/null 2>&1";
  int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

/// diam of sigma^j(B(x, r)) for x = (1/2, 1/2, ...), scanned coordinatewise
Dyadic centered_ball_diam(const Dyadic& r, long j) {
  Dyadic best;
  for (long i = -80; i <= 80; ++i) {
    Dyadic w = ldexp(r + r, std::labs(i + j));
    if (w > Dyadic(1)) w = Dyadic(1);
    best = max(best, ldexp(w, -std::labs(i)));
  }
  return best;
}

}  // namespace

// --- number parsing -----------------------------------------------------------

TEST(Numbers, ExactAndDecimalForms) {
  EXPECT_EQ(parse_exact("1/8"), Dyadic::pow2(-3));
  EXPECT_EQ(parse_exact("3"), Dyadic(3));
  EXPECT_THROW(parse_exact("0.125"), UsageError);
  EXPECT_THROW(parse_exact("1/3"), UsageError);
  EXPECT_DOUBLE_EQ(parse_decimal("0.05"), 0.05);
  EXPECT_THROW(parse_decimal("1/8"), UsageError);
  EXPECT_THROW(parse_decimal("0.1x"), UsageError);
}

TEST(Numbers, ListsRejectMixingAndEmptyEntries) {
  auto v = parse_exact_list("1/16, 1/32,1/64");
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[2], Dyadic::pow2(-6));
  EXPECT_THROW(parse_exact_list("1/16,0.03"), UsageError);
  EXPECT_THROW(parse_decimal_list("0.1,1/8"), UsageError);
  EXPECT_THROW(parse_exact_list("1/16,,1/32"), UsageError);
  EXPECT_TRUE(parse_exact_list("").empty());
}

// --- CSV and plot data -----------------------------------------------------------

TEST(Csv, QuotingAndLineEnds) {
  std::ostringstream os;
  csv_row(os, {"plain", "a,b", "say \"hi\"", "two\nlines"});
  EXPECT_EQ(os.str(), "plain,\"a,b\",\"say \"\"hi\"\"\",\"two\nlines\"\r\n");
  EXPECT_EQ(provenance::exact(), "exact");
  EXPECT_EQ(provenance::sampled(7), "sampled(7)");
  EXPECT_EQ(provenance::bounded(1e-12), "bounded(1e-12)");
}

TEST(PlotData, EmptySeriesIsHeaderOnly) {
  std::ostringstream os;
  write_plotdata(os, {{"series", "empty"}, {"n", "0"}}, {});
  EXPECT_EQ(os.str(), "# series: empty\n# n: 0\n");
}

TEST(PlotData, ExactValuesCarryFractions) {
  std::ostringstream os;
  write_plotdata(os, {}, {plot_point(0, Dyadic(3, -6)), plot_point(1, 0.25)});
  EXPECT_EQ(os.str(), "0 0.046875  # 3/64\n1 0.25\n");
}

// --- config validation -------------------------------------------------------------

TEST(Config, LineAndColumn) {
  EXPECT_FALSE(validate_config("schema_version = 1\n# note\n[certify]\nn-max = 8\n"));
  auto a = validate_config("schema_version = 1\n[certify\n");
  ASSERT_TRUE(a);
  EXPECT_EQ(a->line, 2);
  EXPECT_EQ(a->column, 1);
  auto b = validate_config("schema_version = 1\n  n max = 3\n");
  ASSERT_TRUE(b);
  EXPECT_EQ(b->line, 2);
  EXPECT_EQ(b->column, 4);
  auto c = validate_config("schema_version = 2\n");
  ASSERT_TRUE(c);
  EXPECT_EQ(c->column, 18);
  auto d = validate_config("schema_version = 1\nseed =\n");
  ASSERT_TRUE(d);
  EXPECT_EQ(d->line, 2);
  EXPECT_EQ(d->column, 7);
  EXPECT_TRUE(validate_config("[certify]\nschema_version = 1\n"));
  EXPECT_TRUE(validate_config("seed = 3\n"));
}

TEST(Config, FileFeedsOptionsAndErrorsExitOne) {
  auto dir = scratch_dir("config");
  std::ofstream(dir / "good.ini") << "schema_version = 1\n[certify]\nn-max = 6\nsamples = 3\n";
  std::ofstream(dir / "bad.ini") << "schema_version = 1\n[certify\n";
  auto j = run_json({"--out", dir.string(), "--config", (dir / "good.ini").string(), "certify"});
  EXPECT_EQ(j["samples"], 3);
  EXPECT_EQ(j["schedule"].size(), 6u);
  auto r = run_cli({"--out", dir.string(), "--config", (dir / "bad.ini").string(), "certify"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("bad.ini:2:1"), std::string::npos) << r.err;
}

// --- tasks -----------------------------------------------------------------------------

TEST(Certify, ShiftExampleWithinConstants) {
  auto dir = scratch_dir("certify");
  auto j = run_json({"certify", "--system", "shift", "--epsilon", "1/8", "--gammas", "1/16,1/32,1/64", "--n-max", "24",
                     "--out", dir.string()});
  EXPECT_EQ(j["verdict"], "certified-at-scale");
  EXPECT_TRUE(j["constants_ok"].get<bool>());
  ASSERT_EQ(j["per_gamma"].size(), 3u);
  for (const auto& g : j["per_gamma"]) {
    EXPECT_LE(g["max_f2"].get<long>(), g["k_gamma"].get<long>() + 2);
    EXPECT_LE(g["max_f1"].get<long>(), 2);
  }
  EXPECT_EQ(j["per_gamma"][0]["k_gamma"], 0);
  EXPECT_EQ(j["schedule"][23], "1/134217728");
  auto csv = slurp(dir / "certify_diffs.csv");
  EXPECT_EQ(csv.rfind("sample,k,gamma,kind,value,provenance\r\n", 0), 0u);
  EXPECT_NE(csv.find(",exact\r\n"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "certify_f2_g2.dat"));
}

TEST(Certify, ExactPathIsByteReproducible) {
  auto a = scratch_dir("repro_a"), b = scratch_dir("repro_b");
  for (const auto& d : {a, b}) run_json({"certify", "--n-max", "10", "--seed", "9", "--out", d.string()});
  for (const char* f : {"certify.json", "certify_diffs.csv", "certify_f2_g0.dat"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(Certify, UsageErrors) {
  auto dir = scratch_dir("usage");
  EXPECT_EQ(run_cli({"certify", "--samples", "0", "--out", dir.string()}).code, 1);
  EXPECT_EQ(run_cli({"certify", "--gammas", "1/16,0.03", "--out", dir.string()}).code, 1);
  EXPECT_EQ(run_cli({"certify", "--gammas", "0.03", "--out", dir.string()}).code, 1);
  EXPECT_EQ(run_cli({"certify", "--system", "torus9", "--out", dir.string()}).code, 1);
  EXPECT_EQ(run_cli({"certify", "--gammas", "1/4", "--out", dir.string()}).code, 1);  // gamma above epsilon
  EXPECT_EQ(run_cli({}).code, 1);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST(FirstTime, TraceMatchesCoordinateScan) {
  auto dir = scratch_dir("first_time");
  // x = (1/2, 1/2, ...), r = eps/16
  auto j = run_json({"first-time", "--x", "1/2", "--r", "1/128", "--out", dir.string()});
  Dyadic r(1, -7);
  long n1 = -1;
  for (long t = 0; n1 < 0; ++t)
    if (centered_ball_diam(r, t) > Dyadic(1, -3)) n1 = t;
  EXPECT_EQ(j["n1"], n1);
  ASSERT_EQ(j["trace"].size(), static_cast<size_t>(n1 + 1));
  std::ostringstream want;
  want << "# series: j vs diameter of the j-th image\n# system: shift\n# n1: " << n1 << "\n";
  for (long t = 0; t <= n1; ++t) {
    Dyadic d = centered_ball_diam(r, t);
    EXPECT_EQ(j["trace"][static_cast<size_t>(t)]["lo"], d.to_fraction());
    want << t << ' ' << d.to_decimal() << "  # " << d.to_fraction() << "\n";
  }
  EXPECT_EQ(slurp(dir / "first_time_diam.dat"), want.str());
}

TEST(Entropy, CatExampleSlope) {
  auto dir = scratch_dir("entropy");
  auto j = run_json({"entropy", "--system", "cat", "--delta", "0.05", "--n-max", "12", "--out", dir.string()});
  const double ref = std::log((3 + std::sqrt(5.0)) / 2);
  EXPECT_NEAR(j["h"].get<double>(), ref, 0.15 * ref);
  EXPECT_EQ(j["counts"].size(), 13u);
  auto dat = slurp(dir / "entropy_logs.dat");
  EXPECT_EQ(dat.rfind("# series: n vs log s(n, delta)\n", 0), 0u);
  EXPECT_NE(slurp(dir / "entropy_counts.csv").find("sampled(1)"), std::string::npos);
}

TEST(Tasks, ContinuumFtMetricSplitTree) {
  auto dir = scratch_dir("tasks");
  auto c = run_json({"continuum", "--out", dir.string()});
  EXPECT_TRUE(c["converged"].get<bool>());
  EXPECT_FALSE(c["closed_form_k"].is_null());
  auto ci = run_json({"continuum", "--system", "cat-id", "--out", dir.string()});
  EXPECT_TRUE(ci["slice"]["passed"].get<bool>());
  auto f = run_json({"ftmetric", "--size", "20", "--chains", "50", "--out", dir.string()});
  EXPECT_EQ(f["failures"], 0);
  auto s = run_json({"split-tree", "--depth", "3", "--out", dir.string()});
  EXPECT_EQ(s["leaves"], 8);
  EXPECT_EQ(s["pairs_checked"], 28);
  EXPECT_TRUE(s["separated"].get<bool>());
  EXPECT_EQ(run_cli({"split-tree", "--M", "5", "--out", dir.string()}).code, 1);  // below the admissible minimum
  EXPECT_EQ(run_cli({"split-tree", "--system", "cat", "--out", dir.string()}).code, 1);
}

TEST(Tasks, Selftest) {
  auto j = run_json({"selftest"});
  EXPECT_TRUE(j["passed"].get<bool>());
}

// --- installed binary ----------------------------------------------------------------------

TEST(Binary, ExitCodesAndJobsOverride) {
  if (!std::getenv("FTSENS_BIN")) GTEST_SKIP() << "FTSENS_BIN not set";
  auto a = scratch_dir("bin_a"), b = scratch_dir("bin_b");
  EXPECT_EQ(run_binary("certify --n-max 8 --out " + a.string()), 0);
  EXPECT_EQ(run_binary("certify --n-max 8 --out " + b.string(), "FTSENS_JOBS=1"), 0);
  EXPECT_EQ(slurp(a / "certify.json"), slurp(b / "certify.json"));
  EXPECT_EQ(run_binary("certify --samples 0 --out " + a.string()), 1);
  EXPECT_EQ(run_binary("frobnicate"), 1);
  EXPECT_EQ(run_binary("selftest --out " + a.string()), 0);
}
