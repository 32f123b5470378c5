#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

fs::path scratch() {
  const fs::path p = fs::temp_directory_path() / "mmslab_cli_test";
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MMSLAB_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const std::string& name, const std::string& text) {
  const fs::path p = scratch() / name;
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("passing scenario exits 0 and writes all artifacts") {
  const fs::path out = scratch() / "hk";
  fs::remove_all(out);
  const auto cfg = write_config("hk.cfg", "scenario = heat-kernel-check\n");
  CHECK(run_cli("run " + cfg.string() + " --out " + out.string()) == 0);
  const std::string report = slurp(out / "report.csv");
  CHECK(report.rfind("name,statement,constant,status,tolerance\n", 0) == 0);
  CHECK(report.find("trace-identity,") != std::string::npos);
  CHECK(fs::exists(out / "series" / "heat_kernel.csv"));
  const std::string manifest = slurp(out / "manifest.txt");
  CHECK(manifest.find("scenario heat-kernel-check") != std::string::npos);
  CHECK(manifest.find("[config]\nscenario = heat-kernel-check") != std::string::npos);
}

TEST_CASE("config errors exit 2") {
  const auto bad = write_config("bad.cfg", "scenario = heat-kernel-check\n[numerics]\nk_max = -4\n");
  CHECK(run_cli("run " + bad.string()) == 2);
  CHECK(run_cli("run " + (scratch() / "missing.cfg").string()) == 2);
  const auto field = write_config("field.cfg", "scenario = contraction\n[field]\nname = shear\n");
  // shear on the default sphere cannot be built
  CHECK(run_cli("run " + field.string() + " --out " + (scratch() / "f").string()) == 2);
}

TEST_CASE("gate failures exit 1 and still write the report") {
  const fs::path out = scratch() / "gf";
  fs::remove_all(out);
  // The Green action identity only holds for the unregularized kernel.
  const auto cfg = write_config("gf.cfg", "scenario = green-check\n[space]\ndims = 2\nresolution = 8\n"
                                          "[numerics]\ngreen_epsilon = 0.05\n");
  CHECK(run_cli("run " + cfg.string() + " --out " + out.string()) == 1);
  CHECK(slurp(out / "report.csv").find("green-action,") != std::string::npos);
  CHECK(slurp(out / "report.csv").find(",fail,") != std::string::npos);
}

TEST_CASE("basis cache is written and reused") {
  const fs::path cache = scratch() / "cache";
  fs::remove_all(cache);
  const auto cfg = write_config("sph.cfg", "scenario = heat-kernel-check\n[space]\nkind = sphere\npoints = 150\n"
                                           "[numerics]\nbandwidth = 0.4\n");
  const fs::path a = scratch() / "sa", b = scratch() / "sb";
  CHECK(run_cli("run " + cfg.string() + " --out " + a.string() + " --cache " + cache.string()) == 0);
  int files = 0;
  for (const auto& e : fs::directory_iterator(cache)) files += e.path().extension() == ".mms";
  CHECK(files == 1);
  const std::string env = "MMS_CACHE=" + cache.string() + " ";
  const int status = std::system((env + MMSLAB_CLI + " run " + cfg.string() + " --out " + b.string() + " > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(status) == 0);
  CHECK(slurp(a / "report.csv") == slurp(b / "report.csv"));
}

TEST_CASE("seed override lands in the manifest") {
  const fs::path out = scratch() / "seed";
  const auto cfg = write_config("seed.cfg", "scenario = heat-kernel-check\n");
  CHECK(run_cli("run " + cfg.string() + " --out " + out.string() + " --seed 42 --threads 2") == 0);
  CHECK(slurp(out / "manifest.txt").find("seed 42") != std::string::npos);
}
