#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

const fs::path& scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("fdnet_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int fdnet(const std::string& args) {
  const std::string cmd = std::string(FDNET_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

fs::path write(const std::string& name, const std::string& body) {
  const fs::path p = scratch() / name;
  std::ofstream(p) << body;
  return p;
}

std::string out(const std::string& name) { return (scratch() / name).string(); }

}  // namespace

TEST(Cli, ExitCodes) {
  EXPECT_EQ(fdnet("--help"), 0);
  EXPECT_EQ(fdnet(""), 2);
  EXPECT_EQ(fdnet("gen --nonsense 1"), 2);
  EXPECT_EQ(fdnet("gen --n 10 --deg 20 --out " + out("x1")), 2);
  EXPECT_EQ(fdnet("splus --n 20 --lambda 1.5 --out " + out("x2")), 2);
  EXPECT_EQ(fdnet("ingest --input " + out("missing.tsv") + " --out " + out("x3")), 3);
  const fs::path bad = write("bad.tsv", "1\t2\n2\tabc\n");
  EXPECT_EQ(fdnet("ingest --input " + bad.string() + " --out " + out("x4")), 3);
  EXPECT_EQ(fdnet("tail --n 50 --reps 200 --grid 40,50 --out " + out("x5")), 4);
}

TEST(Cli, ConfigFile) {
  const fs::path cfg = write("run.cfg", "# comment\nmodel = er\nn = 30\ndeg = 3\nseed = 5\n");
  ASSERT_EQ(fdnet("gen --config " + cfg.string() + " --out " + out("cfg_a")), 0);
  ASSERT_EQ(fdnet("gen --model er --n 30 --deg 3 --seed 5 --out " + out("cfg_b")), 0);
  EXPECT_EQ(slurp(out("cfg_a") + "/weights.csv"), slurp(out("cfg_b") + "/weights.csv"));
  // explicit flags win
  ASSERT_EQ(fdnet("gen --config " + cfg.string() + " --n 40 --out " + out("cfg_c")), 0);
  EXPECT_NE(first_line(out("cfg_c") + "/weights.csv").find("--n 40"), std::string::npos);
  const fs::path unknown = write("unknown.cfg", "n = 30\ncolour = red\n");
  EXPECT_EQ(fdnet("gen --config " + unknown.string() + " --out " + out("cfg_d")), 2);
  const fs::path broken = write("broken.cfg", "n 30\n");
  EXPECT_EQ(fdnet("gen --config " + broken.string() + " --out " + out("cfg_e")), 3);
}

TEST(Cli, ManifestReproducesOutput) {
  ASSERT_EQ(fdnet("gen --model sbm --n 60 --dwb 5 --dbb 2 --seed 9 --out " + out("man_a")), 0);
  std::string line = first_line(out("man_a") + "/weights.csv");
  ASSERT_EQ(line.rfind("# fdnet gen ", 0), 0u);
  EXPECT_EQ(line.find("--threads"), std::string::npos);
  const auto start = std::string("# fdnet ").size();
  const std::string args = line.substr(start, line.find(" # ") - start);
  ASSERT_EQ(fdnet(args + " --out " + out("man_b")), 0);
  EXPECT_EQ(slurp(out("man_a") + "/weights.csv"), slurp(out("man_b") + "/weights.csv"));
  EXPECT_EQ(slurp(out("man_a") + "/edges.tsv"), slurp(out("man_b") + "/edges.tsv"));
  ASSERT_EQ(fdnet("gen --config " + out("man_a") + "/manifest.cfg --out " + out("man_c")), 0);
  EXPECT_EQ(slurp(out("man_a") + "/weights.csv"), slurp(out("man_c") + "/weights.csv"));
}

TEST(Cli, CycleDelta) {
  const fs::path cycle = write("cycle.tsv", "1\t2\n2\t3\n3\t1\n");
  ASSERT_EQ(fdnet("fdm --model file --input " + cycle.string() + " --lambda 0.5 --mode exact --out " +
                  out("cyc")),
            0);
  std::ifstream in(out("cyc") + "/delta.csv");
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  EXPECT_EQ(line, "# p=2,mode=exact,R=0,seed=0");
  std::getline(in, line);
  EXPECT_NEAR(std::stod(line.substr(0, line.find(','))), 1.2 * std::sqrt(2.0), 1e-12);
}

TEST(Cli, IngestFcap) {
  const fs::path f = write("holdings.tsv", "F1\t1\t10\t2\t100\nF1\t2\t5\t4\t50\nF2\t2\t5\t4\t50\nF2\t3\t1\t1\t10\n");
  ASSERT_EQ(fdnet("ingest --schema fcap --input " + f.string() + " --out " + out("fcap")), 0);
  EXPECT_TRUE(fs::exists(out("fcap") + "/weights.csv"));
  EXPECT_TRUE(fs::exists(out("fcap") + "/manifest.cfg"));
}

TEST(Cli, ThreadCountDoesNotChangeBytes) {
  const std::vector<std::pair<std::string, std::string>> runs{
      {"fdm --model er --n 40 --lambda 0.3 --link tobit --mode mc --reps 300", "delta.csv"},
      {"conditions --model triangle --n 40,60 --degrees 3 --lambda 0.2,0.4 --reps 4 --variant both",
       "conditions.csv"},
      {"clt --model er --n 80 --lambda 0.3 --link tobit --reps 300", "clt.csv"},
  };
  int k = 0;
  for (const auto& [args, file] : runs) {
    std::string first;
    for (int threads : {1, 4, 8}) {
      const std::string dir = out("det" + std::to_string(k) + "_" + std::to_string(threads));
      ASSERT_EQ(fdnet(args + " --seed 3 --threads " + std::to_string(threads) + " --out " + dir), 0) << args;
      const std::string body = slurp(dir + "/" + file);
      if (threads == 1) first = body;
      EXPECT_EQ(body, first) << args << " threads=" << threads;
    }
    ++k;
  }
}
