#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "ihp/config.hpp"
#include "ihp/synthdata.hpp"
#include "json.hpp"

using namespace ihp;
namespace fs = std::filesystem;

namespace {

struct EnvGuard {
  explicit EnvGuard(const char* value) {
    if (const char* old = std::getenv(kDataRootEnv)) saved = old;
    if (value) setenv(kDataRootEnv, value, 1);
    else unsetenv(kDataRootEnv);
  }
  ~EnvGuard() {
    if (saved) setenv(kDataRootEnv, saved->c_str(), 1);
    else unsetenv(kDataRootEnv);
  }
  std::optional<std::string> saved;
};

struct CliResult {
  int status;
  std::string out;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(IHP_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, ""};
  std::string out;
  std::array<char, 4096> buf{};
  while (auto n = std::fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
  const int rc = pclose(pipe);
  return {WIFEXITED(rc) ? WEXITSTATUS(rc) : -1, out};
}

}  // namespace

TEST(DataRoot, UnsetLeavesPathsAlone) {
  EnvGuard env(nullptr);
  EXPECT_FALSE(data_root().has_value());
  EXPECT_EQ(resolve_data_path("data/x"), fs::path("data/x"));
}

TEST(DataRoot, RelativePathsResolveAgainstRoot) {
  EnvGuard env("/srv/ihp");
  ASSERT_TRUE(data_root().has_value());
  EXPECT_EQ(resolve_data_path("synthetic"), fs::path("/srv/ihp/synthetic"));
  EXPECT_EQ(resolve_data_path("/abs/file"), fs::path("/abs/file"));
  EXPECT_EQ(resolve_data_path(""), fs::path(""));
}

TEST(DataRoot, EmptyValueIgnored) {
  EnvGuard env("");
  EXPECT_FALSE(data_root().has_value());
}

TEST(Cli, PipelineWithConfigFileAndDataRoot) {
  const fs::path root = fs::temp_directory_path() / "ihp_cli_pipeline";
  fs::remove_all(root);
  fs::create_directories(root);
  EnvGuard env(root.c_str());
  {
    std::ofstream cfg(root / "run.ini");
    cfg << "[generate-data]\nout = data\nsamples = 6\nimage-size = 32\nparts = 3\nseed = 4\n"
        << "[train]\ndataset = data\nout = model.ckpt\niterations = 3\nbatch-size = 2\nbase-channels = 4\n"
        << "embed-dim = 4\ncrop-size = 32\nlog-every = 1\n";
  }
  const std::string cfg = "--config " + (root / "run.ini").string();

  CliResult r = run_cli(cfg + " generate-data");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_EQ(load_meta(root / "data").ids.size(), 6u);

  r = run_cli(cfg + " train --iterations 2");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("iter 1 loss"), std::string::npos);
  EXPECT_EQ(r.out.find("iter 2 loss"), std::string::npos);  // flag beats the file
  EXPECT_TRUE(fs::exists(root / "model.ckpt"));

  r = run_cli("simulate-clicks --dataset data --limit 2 --strategy near_edge");
  ASSERT_EQ(r.status, 0) << r.out;
  std::istringstream lines(r.out);
  int n = 0;
  for (std::string line; std::getline(lines, line);) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("id"));
    EXPECT_FALSE(j.at("clicks").empty());
    ++n;
  }
  EXPECT_EQ(n, 2);
  EXPECT_EQ(run_cli("simulate-clicks --dataset data --limit 2 --strategy near_edge").out, r.out);

  r = run_cli("evaluate --checkpoint model.ckpt --dataset data --split val --max-rounds 2 --out report.json "
              "--dump-masks masks");
  ASSERT_EQ(r.status, 0) << r.out;
  const auto report = nlohmann::json::parse(std::ifstream(root / "report.json"));
  EXPECT_EQ(report.at("images"), 3);
  EXPECT_EQ(report.at("mean_miou").size(), 3u);
  EXPECT_TRUE(fs::exists(root / "masks" / "000001_r0.png"));
  fs::remove_all(root);
}

TEST(Cli, ErrorsExitNonZero) {
  EnvGuard env(nullptr);
  CliResult r = run_cli("evaluate --checkpoint /nonexistent/model.ckpt");
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.out.find("error:"), std::string::npos);
  EXPECT_NE(run_cli("").status, 0);
  EXPECT_NE(run_cli("train --iterations notanumber").status, 0);
  EXPECT_NE(run_cli("simulate-clicks --strategy everywhere --dataset /nonexistent").status, 0);
}
