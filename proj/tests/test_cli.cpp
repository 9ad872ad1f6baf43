#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "tcm_cli_test";

int run(const std::string& args, const std::string& log = "cli.log") {
  const std::string cmd = std::string(TCM_CLI_PATH) + " " + args + " > " +
                          (kRoot / log).string() + " 2> " + (kRoot / ("err_" + log)).string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("command line end to end") {
  fs::remove_all(kRoot);
  fs::create_directories(kRoot);
  const std::string data = (kRoot / "data").string();
  const std::string runs = (kRoot / "run").string();

  REQUIRE(run("gen-toy --set toy.count=3 --set toy.seed=4 --out " + data) == 0);
  CHECK(fs::exists(kRoot / "data" / "images"));
  CHECK(std::distance(fs::directory_iterator(kRoot / "data" / "annotations"),
                      fs::directory_iterator{}) == 3);

  std::ofstream(kRoot / "exp.cfg") << "# small run\ntrain.steps = 4\nvg.depth = 1\n"
                                   << "data.train = " << data << "\noutput.dir = " << runs << "\n";
  REQUIRE(run("train --config " + (kRoot / "exp.cfg").string() + " --set train.log_every=2",
              "train.log") == 0);
  CHECK(slurp(kRoot / "train.log").find("final loss") != std::string::npos);
  const std::string ckpt = (kRoot / "run" / "model.ckpt").string();
  REQUIRE(fs::exists(ckpt));
  CHECK(fs::exists(kRoot / "run" / "report_train.json"));

  CHECK(run("evaluate --config " + (kRoot / "exp.cfg").string() + " --checkpoint " + ckpt,
            "eval.log") == 0);
  CHECK(slurp(kRoot / "eval.log").find("F ") != std::string::npos);

  const fs::path img = *fs::directory_iterator(kRoot / "data" / "images");
  CHECK(run("predict --checkpoint " + ckpt + " --image " + img.string() + " --out " +
            (kRoot / "pred.txt").string()) == 0);
  CHECK(fs::exists(kRoot / "pred.txt"));

  CHECK(run("export-maps --checkpoint " + ckpt + " --image " + img.string() + " --out " +
            (kRoot / "maps").string()) == 0);
  CHECK(fs::exists(kRoot / "maps" / "score_map.pgm"));
  CHECK(fs::exists(kRoot / "maps" / "visual_prompt.bin"));
}

TEST_CASE("command line errors are reported as JSON") {
  fs::create_directories(kRoot);
  const std::string out = (kRoot / "bad").string();
  CHECK(run("train --set output.dir=" + out + " --set tcm.lg=perhaps", "bad.log") == 1);
  const auto err = nlohmann::json::parse(slurp(kRoot / "err_bad.log"));
  CHECK(err["status"] == "error");
  CHECK(err["command"] == "train");
  CHECK(err["kind"] == "invalid_config");
  CHECK(fs::exists(kRoot / "bad" / "error.json"));

  CHECK(run("evaluate --set output.dir=" + out + " --checkpoint " + (kRoot / "missing.ckpt").string(), "missing.log") == 1);
  CHECK(nlohmann::json::parse(slurp(kRoot / "err_missing.log"))["kind"] == "not_found");
  CHECK(run("no-such-command", "usage.log") != 0);
  fs::remove_all(kRoot);
}
