#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const fs::path log = fs::temp_directory_path() / "ddet_cli_test.log";
  const std::string cmd = std::string("\"") + DDET_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 2") {
  CHECK(run("").code == 2);
  CHECK(run("fom --preset no-such-preset --out x").code == 2);
  CHECK(run("compress").code == 2);
  CHECK(run("fom --config /nonexistent/config.json --out x").code == 2);
}

TEST_CASE("bad data exits with 3") {
  const fs::path junk = fs::temp_directory_path() / "ddet_cli_junk.ddet";
  std::ofstream(junk) << "not a container";
  CHECK(run("compare \"" + junk.string() + "\" \"" + junk.string() + "\"").code == 3);
  CHECK(run("svd-report /nonexistent/snapshots.ddet --out x").code == 3);
  fs::remove(junk);
}

TEST_CASE("equilibrium pipeline") {
  const fs::path dir = fs::temp_directory_path() / "ddet_cli_pipeline";
  fs::remove_all(dir);
  const std::string d = "\"" + dir.string();
  REQUIRE(run("fom --preset equilibrium --out " + d + "/fom\"").code == 0);
  CHECK(fs::exists(dir / "fom" / "run.ddet"));
  CHECK(fs::exists(dir / "fom" / "snapshots.ddet"));

  const Result cmp = run("compare " + d + "/fom/run.ddet\" " + d + "/fom/run.ddet\" --out " + d + "/err.csv\"");
  CHECK(cmp.code == 0);
  const std::string csv = slurp(dir / "err.csv");
  CHECK(csv.rfind("t,e_T,e_E", 0) == 0);
  CHECK(csv.find(",0,0") != std::string::npos);

  const Result br = run("breakout " + d + "/fom/run.ddet\" --quantity F --threshold 1.0");
  CHECK(br.code == 0);
  CHECK(br.out.find("not reached") != std::string::npos);

  CHECK(run("compress " + d + "/fom/snapshots.ddet\" --method playback --out " + d + "/pb\"").code == 0);
  CHECK(fs::exists(dir / "pb" / "fxx_c.ddet"));
  CHECK(run("rom --preset equilibrium --models " + d + "/pb\" --out " + d + "/rom\"").code == 0);
  const Result rc = run("compare " + d + "/rom/run.ddet\" " + d + "/fom/run.ddet\"");
  CHECK(rc.code == 0);

  // Models built for one layout are refused for another.
  const Result mismatch = run("rom --preset fleck-cummings-desk --models " + d + "/pb\" --out " + d + "/bad\"");
  CHECK(mismatch.code == 3);

  CHECK(run("svd-report " + d + "/fom/snapshots.ddet\" --out " + d + "/svd\"").code == 0);
  CHECK(fs::exists(dir / "svd" / "sigma.csv"));
  CHECK(fs::exists(dir / "svd" / "ranks.csv"));
  fs::remove_all(dir);
}

}  // TEST_SUITE
