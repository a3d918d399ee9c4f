#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tsclab/commands.hpp"
#include "tsclab/errors.hpp"

using namespace tsclab;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "tsclab_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(std::vector<std::string> args, std::string* out_text = nullptr,
        std::string* err_text = nullptr) {
  std::vector<const char*> argv{"tscl"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_CASE("generate writes loadable, reproducible files") {
  auto dir_a = fresh_dir("gen_a");
  auto dir_b = fresh_dir("gen_b");
  CHECK(run({"generate", "--rows", "2", "--cols", "3", "--mode", "bi", "--out",
             dir_a.string()}) == kExitOk);
  CHECK(run({"generate", "--rows", "2", "--cols", "3", "--mode", "bi", "--out",
             dir_b.string()}) == kExitOk);

  RoadNetwork net = load_roadnet(dir_a / "roadnet.json");
  FlowSpec flow = load_flow(dir_a / "flow.json", net);
  CHECK(net.agent_count() == 6);
  CHECK_FALSE(flow.entries.empty());

  CHECK(slurp(dir_a / "roadnet.json") == slurp(dir_b / "roadnet.json"));
  CHECK(slurp(dir_a / "flow.json") == slurp(dir_b / "flow.json"));
}

TEST_CASE("degenerate grid arguments exit nonzero") {
  std::string err;
  int code = run({"generate", "--rows", "0", "--out", fresh_dir("gen_bad").string()},
                 nullptr, &err);
  CHECK(code == kExitValidation);
  CHECK_FALSE(err.empty());
}

TEST_CASE("unknown flags and missing subcommands are usage errors") {
  CHECK(run({"--no-such-flag"}) == kExitUsage);
  CHECK(run({}) == kExitUsage);
  std::string out;
  CHECK(run({"--version"}, &out) == kExitOk);
  CHECK(out.find("tsclab") != std::string::npos);
}

TEST_CASE("train writes a checkpoint and a deterministic log") {
  auto dir_a = fresh_dir("train_a");
  auto dir_b = fresh_dir("train_b");
  std::vector<std::string> base{"train",       "--rows",   "1",    "--cols",
                                "1",           "--episodes", "5",  "--episode_len",
                                "600",         "--thres_size", "100", "--seed",
                                "3"};
  auto with_out = [&](const fs::path& dir) {
    auto args = base;
    args.push_back("--out");
    args.push_back(dir.string());
    return args;
  };
  CHECK(run(with_out(dir_a)) == kExitOk);
  CHECK(run(with_out(dir_b)) == kExitOk);

  CHECK(fs::exists(dir_a / "checkpoint.json"));
  auto log_lines = split_lines(slurp(dir_a / "train_log.csv"));
  REQUIRE(log_lines.size() == 6);  // header + 5 episodes
  CHECK(log_lines[0] ==
        "episode,att,throughput,critic_loss,actor_loss,recon_loss,alpha,mean_entropy");
  CHECK(slurp(dir_a / "train_log.csv") == slurp(dir_b / "train_log.csv"));

  // recon column strictly positive on episodes that performed updates
  for (std::size_t i = 2; i < log_lines.size(); ++i) {
    std::stringstream ss(log_lines[i]);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    REQUIRE(fields.size() == 8);
    CHECK(std::stod(fields[5]) > 0.0);
  }

  SUBCASE("the checkpoint evaluates through the eval command") {
    auto eval_dir = fresh_dir("train_eval");
    std::string out;
    int code = run({"eval", "--controller", "hgdrl", "--checkpoint",
                    (dir_a / "checkpoint.json").string(), "--rows", "1", "--cols", "1",
                    "--episode_len", "600", "--seed", "3", "--out", eval_dir.string()},
                   &out);
    CHECK(code == kExitOk);
    CHECK(out.find("ATT=") != std::string::npos);
  }

  SUBCASE("a mismatched checkpoint is a validation error") {
    auto eval_dir = fresh_dir("train_eval_bad");
    std::string err;
    int code = run({"eval", "--controller", "hgdrl", "--checkpoint",
                    (dir_a / "checkpoint.json").string(), "--rows", "2", "--cols", "2",
                    "--episode_len", "600", "--out", eval_dir.string()},
                   nullptr, &err);
    CHECK(code == kExitValidation);
  }
}

TEST_CASE("eval prints deterministic metrics and consistent CSV files") {
  auto dir = fresh_dir("eval_fixed");
  std::vector<std::string> args{"eval",   "--controller", "fixed", "--rows", "2",
                                "--cols", "2",            "--seed", "5",     "--episode_len",
                                "1200",   "--out",        dir.string()};
  std::string out_a, out_b;
  CHECK(run(args, &out_a) == kExitOk);
  CHECK(run(args, &out_b) == kExitOk);
  CHECK(out_a == out_b);
  CHECK(out_a.rfind("ATT=", 0) == 0);

  // summary ATT must equal a recomputation from the per-vehicle log
  auto vehicle_lines = split_lines(slurp(dir / "vehicles.csv"));
  REQUIRE(vehicle_lines.size() > 1);
  double total = 0;
  long count = 0;
  for (std::size_t i = 1; i < vehicle_lines.size(); ++i) {
    std::stringstream ss(vehicle_lines[i]);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    REQUIRE(fields.size() == 4);
    total += std::stod(fields[2]) - std::stod(fields[1]);
    ++count;
  }
  double att_recomputed = total / count;

  auto metric_lines = split_lines(slurp(dir / "metrics.csv"));
  REQUIRE(!metric_lines.empty());
  std::string summary = metric_lines.back();
  REQUIRE(summary.rfind("ATT,", 0) == 0);
  double att_summary = std::stod(summary.substr(4));
  CHECK(std::abs(att_summary - att_recomputed) < 1e-9);

  // metrics rows in step order with nondecreasing throughput
  long last_thr = -1;
  for (std::size_t i = 1; i + 1 < metric_lines.size(); ++i) {
    std::stringstream ss(metric_lines[i]);
    std::string step, queue, thr;
    std::getline(ss, step, ',');
    std::getline(ss, queue, ',');
    std::getline(ss, thr, ',');
    CHECK(std::stol(step) == static_cast<long>(i));
    CHECK(std::stol(thr) >= last_thr);
    last_thr = std::stol(thr);
  }
}

TEST_CASE("eval of an empty scenario prints zeros") {
  auto dir = fresh_dir("eval_empty");
  std::string out;
  CHECK(run({"eval", "--controller", "fixed", "--rows", "1", "--cols", "1", "--we_rate",
             "0", "--sn_rate", "0", "--episode_len", "600", "--out", dir.string()},
            &out) == kExitOk);
  CHECK(out == "ATT=0 throughput=0\n");
}

TEST_CASE("compare emits one row per controller with seed statistics") {
  auto dir = fresh_dir("compare");
  std::string out;
  CHECK(run({"compare", "--controllers", "fixed,maxpressure", "--seeds", "1,2,3",
             "--rows", "2", "--cols", "2", "--episode_len", "600", "--out",
             dir.string()},
            &out) == kExitOk);
  auto lines = split_lines(slurp(dir / "compare.csv"));
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "controller,att_mean,att_std,throughput_mean,throughput_std,seeds");
  CHECK(lines[1].rfind("fixed,", 0) == 0);
  CHECK(lines[2].rfind("maxpressure,", 0) == 0);

  // three seeds populate a nonzero spread for the traffic-sensitive controller
  std::stringstream ss(lines[2]);
  std::string field;
  std::vector<std::string> fields;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  CHECK(fields[5] == "3");
}

TEST_CASE("fixed time statistics agree between uni and bi scenarios") {
  auto dir_uni = fresh_dir("compare_uni");
  auto dir_bi = fresh_dir("compare_bi");
  for (auto [dir, mode] : {std::pair{&dir_uni, "uni"}, std::pair{&dir_bi, "bi"}}) {
    CHECK(run({"compare", "--controllers", "fixed", "--seeds", "1,2", "--rows", "2",
               "--cols", "2", "--mode", mode, "--episode_len", "1200", "--out",
               dir->string()}) == kExitOk);
  }
  auto row = [](const fs::path& dir) {
    auto lines = split_lines(slurp(dir / "compare.csv"));
    REQUIRE(lines.size() == 2);
    return lines[1];
  };
  std::string uni_row = row(dir_uni);
  std::string bi_row = row(dir_bi);
  auto att_of = [](const std::string& line) {
    auto pos = line.find(',');
    return std::stod(line.substr(pos + 1));
  };
  CHECK(att_of(uni_row) == doctest::Approx(att_of(bi_row)).epsilon(1e-9));
}

TEST_CASE("config file values load with flag precedence") {
  auto dir = fresh_dir("configfile");
  auto cfg_path = dir / "run.cfg";
  std::ofstream(cfg_path) << "rows=1\ncols=1\nwe_rate=0\nsn_rate=0\nepisode_len=600\n";
  std::string out;
  CHECK(run({"eval", "--config", cfg_path.string(), "--controller", "fixed", "--out",
             dir.string()},
            &out) == kExitOk);
  CHECK(out == "ATT=0 throughput=0\n");  // rates from the file

  // a flag overrides the file value
  std::string out2;
  CHECK(run({"eval", "--config", cfg_path.string(), "--controller", "fixed", "--we_rate",
             "300", "--out", dir.string()},
            &out2) == kExitOk);
  CHECK(out2 != out);
}

TEST_CASE("selfcheck passes clean and fails when a gradient is corrupted") {
  std::ostringstream out;
  CHECK(cmd_selfcheck(out) == kExitOk);
  std::string text = out.str();
  CHECK(text.find("SELFCHECK PASS") != std::string::npos);
  CHECK(text.find("max error") != std::string::npos);
  CHECK(text.find("op gradients") != std::string::npos);
  CHECK(text.find("encoder+critic composite") != std::string::npos);

  std::ostringstream bad;
  CHECK(cmd_selfcheck(bad, true) == kExitRuntime);
  CHECK(bad.str().find("SELFCHECK FAIL") != std::string::npos);
}
