#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <unistd.h>

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "ghostlab/cli.hpp"
#include "ghostlab/io.hpp"
#include "ghostlab/kspace.hpp"
#include "json.hpp"

using namespace ghostlab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  std::ostringstream out, err;
  CliResult r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("ghostlab_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

// A config that keeps the stock settings (four analyzer pairs plus the
// marginal) but shrinks the run so the whole suite stays fast.
std::string small_config(const std::string& out_dir, const std::string& extra = "",
                         long n_trials = 300000,
                         const std::string& bins = "16 16") {
  return "[run]\nn_trials = " + std::to_string(n_trials) +
         "\nseed = 5\nbins = " + bins + "\nout = " + out_dir + "\n" + extra;
}

}  // namespace

TEST_CASE("help, version, and usage errors") {
  CliResult help = run({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("simulate") != std::string::npos);
  CHECK(help.out.find("bell") != std::string::npos);

  CliResult version = run({"--version"});
  CHECK(version.code == 0);
  CHECK(version.out.find('.') != std::string::npos);

  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CliResult badflag = run({"simulate", "--no-such-flag"});
  CHECK(badflag.code == 2);
  CHECK(badflag.err.find("usage error") != std::string::npos);

  CliResult badangle = run({"simulate", "--setting", "x", "0"});
  CHECK(badangle.code == 2);
  CHECK(badangle.err.find("config error") != std::string::npos);
}

TEST_CASE("simulate writes frames, events, and a manifest") {
  TempDir tmp;
  std::string out_dir = tmp.file("run_a");
  write_text_file(tmp.file("a.cfg"), small_config(out_dir));

  CliResult r = run({"simulate", "--config", tmp.file("a.cfg")});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("manifest:") != std::string::npos);

  for (const char* name :
       {"frames_00_plus.txt", "frames_00_minus.txt", "events_00.txt",
        "frames_04_plus.txt", "phase_s.phase", "phase_i.phase",
        "manifest.json"}) {
    CHECK(fs::exists(fs::path(out_dir) / name));
  }

  json manifest =
      json::parse(read_text_file((fs::path(out_dir) / "manifest.json").string()));
  CHECK(manifest["command"] == "simulate");
  CHECK(manifest["seed"] == 5);
  CHECK(manifest["n_trials"] == 300000);
  REQUIRE(manifest["settings"].size() == 5);
  for (const json& e : manifest["settings"]) {
    CHECK(e["status"] == "ok");
    CHECK(e["trials"] == 300000);
    CHECK(e["bucket_clicks"].get<std::int64_t>() > 0);
    CHECK(e["counts_plus"].get<std::int64_t>() +
              e["counts_minus"].get<std::int64_t>() >
          0);
  }
  CHECK(manifest["settings"][4]["theta_s"] == "INF");
}

TEST_CASE("simulate output is reproducible and worker-count independent") {
  TempDir tmp;
  std::string dir1 = tmp.file("r1"), dir2 = tmp.file("r2"),
              dir3 = tmp.file("r3");
  write_text_file(tmp.file("r.cfg"), small_config("UNUSED"));

  REQUIRE(run({"simulate", "--config", tmp.file("r.cfg"), "--out", dir1})
              .code == 0);
  REQUIRE(run({"simulate", "--config", tmp.file("r.cfg"), "--out", dir2})
              .code == 0);
  REQUIRE(run({"simulate", "--config", tmp.file("r.cfg"), "--out", dir3,
               "--workers", "3"})
              .code == 0);

  for (const char* name : {"frames_00_plus.txt", "frames_02_minus.txt",
                           "events_01.txt", "frames_04_plus.txt"}) {
    std::string a = read_text_file((fs::path(dir1) / name).string());
    CHECK(read_text_file((fs::path(dir2) / name).string()) == a);
    CHECK(read_text_file((fs::path(dir3) / name).string()) == a);
  }
}

TEST_CASE("bell analysis of a simulate directory") {
  TempDir tmp;
  std::string out_dir = tmp.file("run_bell");
  write_text_file(tmp.file("b.cfg"), small_config(out_dir));
  REQUIRE(run({"simulate", "--config", tmp.file("b.cfg")}).code == 0);

  CliResult r = run({"bell", out_dir});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("S_chsh") != std::string::npos);
  CHECK(r.out.find("S_freedman") != std::string::npos);

  std::string report =
      read_text_file((fs::path(out_dir) / "bell_report.txt").string());
  CHECK(report.find("s_chsh = ") != std::string::npos);
  CHECK(report.find("s_freedman = ") != std::string::npos);
  CHECK(report.find("[curve]") != std::string::npos);

  // values parse and sit in a physically sane band even at this small n
  std::istringstream is(report.substr(report.find("s_chsh = ") + 9));
  double s_chsh = 0.0;
  is >> s_chsh;
  CHECK(s_chsh > 1.0);
  CHECK(s_chsh < 2.9);

  // a report path override is honored
  CliResult r2 = run({"bell", out_dir, "--out", tmp.file("custom_report.txt")});
  CHECK(r2.code == 0);
  CHECK(fs::exists(tmp.file("custom_report.txt")));
}

TEST_CASE("bell refuses a run without the marginal frames") {
  TempDir tmp;
  std::string out_dir = tmp.file("run_nomarg");
  write_text_file(
      tmp.file("nm.cfg"),
      small_config(out_dir,
                   "settings = 0 0, 1.5707963267948966 0, "
                   "0 1.5707963267948966, "
                   "1.5707963267948966 1.5707963267948966\n",
                   100000));
  REQUIRE(run({"simulate", "--config", tmp.file("nm.cfg")}).code == 0);

  CliResult r = run({"bell", out_dir});
  CHECK(r.code == 4);
  CHECK(r.err.find("C^inf") != std::string::npos);
}

TEST_CASE("flat joint phase is reported as a numeric error") {
  TempDir tmp;
  std::string out_dir = tmp.file("run_flat");
  write_text_file(tmp.file("f.cfg"),
                  small_config(out_dir,
                               "[phases]\n"
                               "phase_s = linear 0 0 0\n"
                               "phase_i = linear 0 0 0\n",
                               100000));
  REQUIRE(run({"simulate", "--config", tmp.file("f.cfg")}).code == 0);

  CliResult r = run({"bell", out_dir});
  CHECK(r.code == 3);
  CHECK(r.err.find("numeric error") != std::string::npos);
}

TEST_CASE("retrieve-phase on an analyzer sweep") {
  TempDir tmp;
  std::string out_dir = tmp.file("run_sweep");
  std::string settings = "settings =";
  for (int j = 0; j < 6; ++j) {
    settings += (j ? ", 0 " : " 0 ") + format_g17(2.0 * M_PI * j / 6.0);
  }
  write_text_file(tmp.file("s.cfg"),
                  small_config(out_dir, settings + "\n", 1000000, "12 12"));
  REQUIRE(run({"simulate", "--config", tmp.file("s.cfg")}).code == 0);

  CliResult r = run({"retrieve-phase", out_dir});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("carrier window") != std::string::npos);

  PhaseProfile p =
      read_phase_profile((fs::path(out_dir) / "retrieved.phase").string());
  CHECK(p.kind() == PhaseProfile::Kind::sampled);
  CHECK(p.values().rows() == 12);
  CHECK(p.values().cols() == 12);

  // explicit output path, demodulated variant
  CliResult r2 = run({"retrieve-phase", out_dir, "--demodulate", "--out",
                      tmp.file("resid.phase")});
  CHECK(r2.code == 0);
  CHECK(fs::exists(tmp.file("resid.phase")));
}

TEST_CASE("retrieve-phase needs at least two sweep frames") {
  TempDir tmp;
  std::string out_dir = tmp.file("run_single");
  write_text_file(tmp.file("one.cfg"),
                  small_config(out_dir, "settings = 0 0\n", 100000));
  REQUIRE(run({"simulate", "--config", tmp.file("one.cfg")}).code == 0);
  CHECK(run({"retrieve-phase", out_dir}).code == 4);
}

TEST_CASE("gzip output stays readable end to end") {
  TempDir tmp;
  std::string out_dir = tmp.file("run_gz");
  write_text_file(tmp.file("gz.cfg"), small_config(out_dir));
  REQUIRE(run({"simulate", "--config", tmp.file("gz.cfg"), "--gzip"}).code ==
          0);

  CHECK(fs::exists(fs::path(out_dir) / "frames_00_plus.txt.gz"));
  CHECK_FALSE(fs::exists(fs::path(out_dir) / "frames_00_plus.txt"));
  json manifest =
      json::parse(read_text_file((fs::path(out_dir) / "manifest.json").string()));
  CHECK(manifest["gzip"] == true);

  CHECK(run({"bell", out_dir}).code == 0);
}

TEST_CASE("config problems exit with the usage code") {
  TempDir tmp;
  CliResult missing = run({"simulate", "--config", tmp.file("absent.cfg")});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("config error") != std::string::npos);

  write_text_file(tmp.file("zero.cfg"), "[run]\nn_trials = 0\n");
  CHECK(run({"simulate", "--config", tmp.file("zero.cfg")}).code == 2);

  // bell on a directory that was never simulated
  fs::create_directories(tmp.file("empty_dir"));
  CliResult nodir = run({"bell", tmp.file("empty_dir")});
  CHECK(nodir.code == 2);
  CHECK(nodir.err.find("manifest") != std::string::npos);
}

TEST_CASE("budget and rates report the stock operating point") {
  CliResult budget = run({"budget"});
  REQUIRE(budget.code == 0);
  CHECK(budget.out.find("v_ult") != std::string::npos);
  CHECK(budget.out.find("total   = 0.736343") != std::string::npos);

  CliResult rates = run({"rates"});
  REQUIRE(rates.code == 0);
  CHECK(rates.out.find("retention         = 0.5") != std::string::npos);
  CHECK(rates.out.find("instantaneous_cps = 60") != std::string::npos);
  CHECK(rates.out.find("average_cps       = 6") != std::string::npos);
}
