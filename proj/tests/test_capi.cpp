// Licensed under the Apache License 2.0 (see LICENSE file).
//
// Exercises the shared library through its C interface and the CLI binary
// through its exit codes. Links only the public library.

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "tsync/tsync.h"

namespace fs = std::filesystem;

namespace {

class Scratch {
 public:
  explicit Scratch(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = fs::temp_directory_path() / ("tsync_capi_" + tag + "_" + std::to_string(rng()));
    fs::create_directories(path_);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t count_lines(const std::string& path) {
  const auto text = slurp(path);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

// Runs the CLI with TSYNC_THREADS pinned and returns its exit code.
int cli(const std::string& args, const std::string& stdout_file = "") {
  std::string cmd = std::string("TSYNC_THREADS=2 '") + TSYNC_CLI_PATH + "' -q " + args;
  cmd += stdout_file.empty() ? " >/dev/null" : " >'" + stdout_file + "'";
  cmd += " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Small, clean corpus settings shared by the end-to-end cases.
std::string small_config(int routes, int journeys) {
  std::ostringstream s;
  s << "corpus.routes=" << routes << "\ncorpus.journeys_per_route=" << journeys
    << "\ncorpus.frames=1500\ncorpus.route_length=200\ncorpus.noise_sigma=0\ncorpus.bias_scale=0\n"
       "corpus.drift_amplitude=0\ncorpus.noise_block_fraction=0\n"
       "embed.hidden_dim=32\nembed.dim=16\nembed.epochs=2\ncurriculum.intra_labels=300\n"
       "curriculum.inter_labels=100\ncurriculum.iterations=0\n";
  return s.str();
}

struct Trained {
  std::string config, corpus, model;
};

Trained prepare(const Scratch& dir, int routes, int journeys) {
  Trained t{dir / "run.cfg", dir / "corpus", dir / "model.tsmd"};
  std::ofstream(t.config) << small_config(routes, journeys);
  REQUIRE(cli("-c " + t.config + " generate -o " + t.corpus) == 0);
  REQUIRE(cli("-c " + t.config + " train --corpus " + t.corpus + " -m " + t.model) == 0);
  return t;
}

}  // namespace

TEST_CASE("config handles, status codes and last error") {
  CHECK(std::string(tsync_version()).size() > 0);
  tsync_config* cfg = tsync_config_new();
  REQUIRE(cfg);
  char buf[64];
  CHECK(tsync_config_get(cfg, "video.stride", buf, sizeof buf) == TSYNC_OK);
  CHECK(std::string(buf) == "10");
  CHECK(tsync_config_set(cfg, "video.stride", "5") == TSYNC_OK);
  CHECK(tsync_config_get(cfg, "video.stride", buf, sizeof buf) == TSYNC_OK);
  CHECK(std::string(buf) == "5");

  CHECK(tsync_config_set(cfg, "video.nonsense", "1") == TSYNC_ERR_DATA);
  CHECK(std::string(tsync_last_error()).find("video.nonsense") != std::string::npos);
  CHECK(tsync_config_set(cfg, "video.stride", "1") == TSYNC_OK);
  CHECK(std::string(tsync_last_error()).empty());
  CHECK(tsync_config_get(cfg, "video.stride", buf, 1) == TSYNC_OK);
  CHECK(std::string(buf).empty());

  Scratch dir("cfg");
  CHECK(tsync_config_write(cfg, (dir / "a.cfg").c_str()) == TSYNC_OK);
  tsync_config* back = tsync_config_new();
  CHECK(tsync_config_load(back, (dir / "a.cfg").c_str()) == TSYNC_OK);
  CHECK(tsync_config_get(back, "video.stride", buf, sizeof buf) == TSYNC_OK);
  CHECK(std::string(buf) == "1");
  CHECK(tsync_config_load(back, (dir / "missing.cfg").c_str()) == TSYNC_ERR_DATA);
  tsync_config_free(back);
  tsync_config_free(cfg);

  tsync_model* model = nullptr;
  CHECK(tsync_model_load((dir / "missing.tsmd").c_str(), &model) == TSYNC_ERR_DATA);
  CHECK(model == nullptr);
  CHECK(tsync_model_load(nullptr, &model) == TSYNC_ERR_DATA);
}

TEST_CASE("generate: determinism and error exit") {
  Scratch dir("gen");
  std::ofstream(dir / "c.cfg") << small_config(1, 2);
  CHECK(cli("-c " + dir / "c.cfg" + " generate -o " + dir / "a") == 0);
  CHECK(cli("-c " + dir / "c.cfg" + " generate -o " + dir / "b") == 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    CHECK(slurp(e.path().string()) == slurp(dir / "b" + "/" + e.path().filename().string()));
    ++files;
  }
  CHECK(files == 4);  // meta, two journeys, one ground truth
  CHECK(fs::exists(dir / "a/corpus.meta"));

  std::ofstream(dir / "blocker") << "x";
  CHECK(cli("-c " + dir / "c.cfg" + " generate -o " + dir / "blocker/sub") == 2);
  CHECK(cli("generate") == 2);
  CHECK(cli("-s video.stride=0 generate -o " + dir / "z") == 2);
  CHECK(cli("-s no.such=1 generate -o " + dir / "z") == 2);
}

TEST_CASE("train: reports per iteration and error exits") {
  Scratch dir("train");
  const auto t = prepare(dir, 1, 3);
  CHECK(fs::exists(t.model));
  CHECK(count_lines(dir / "reports.jsonl") == 1);
  CHECK(fs::exists(dir / "labels_iter0.csv"));

  CHECK(cli("-c " + t.config + " -s curriculum.iterations=2 train --corpus " + t.corpus + " -m " + dir / "m2.tsmd" +
            " --reports " + dir / "rep") == 0);
  std::ifstream in(dir / "rep/reports.jsonl");
  std::string line;
  std::size_t iteration = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["iteration"] == iteration++);
    for (const char* key : {"tours_accepted_fraction", "eval_offset_le4_fraction"}) {
      CHECK(j[key].get<double>() >= 0.0);
      CHECK(j[key].get<double>() <= 1.0);
    }
  }
  CHECK(iteration == 3);

  tsync_model* model = nullptr;
  REQUIRE(tsync_model_load(t.model.c_str(), &model) == TSYNC_OK);
  CHECK(tsync_model_input_dim(model) == 32);
  CHECK(tsync_model_output_dim(model) == 16);
  std::vector<float> x(32, 0.25f), y(16);
  CHECK(tsync_model_embed(model, x.data(), y.data()) == TSYNC_OK);
  double norm = 0;
  for (float v : y) norm += double(v) * v;
  CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-5));
  tsync_model_free(model);

  CHECK(cli("-c " + t.config + " train --corpus " + dir / "nowhere" + " -m " + dir / "m3.tsmd") == 2);
  CHECK(cli("-c " + t.config + " -s embed.learning_rate=1e300 train --corpus " + t.corpus + " -m " +
            dir / "m4.tsmd") == 3);
}

TEST_CASE("align: self match, no match, matrix dumps and eval") {
  Scratch dir("align");
  const auto t = prepare(dir, 2, 2);
  // j00, j01 share a route; j02 lies on the other one.
  REQUIRE(fs::exists(t.corpus + "/gt_j00_j01.csv"));
  const std::string model = " -m " + t.model;
  CHECK(cli("-c " + t.config + " align" + model + " -x " + t.corpus + "/j00.tsrf -y " + t.corpus +
            "/j00.tsrf -o " + dir / "self --pgm --dump-matrix") == 0);
  const auto self_tour = slurp(dir / "self/tour_j00_j00.csv");
  CHECK(self_tour.rfind("frame_x,frame_y,cost,segment_id\n", 0) == 0);
  std::istringstream rows(self_tour);
  std::string row;
  std::getline(rows, row);
  std::size_t n = 0, diagonal = 0;
  while (std::getline(rows, row)) {
    std::istringstream fields(row);
    std::string fx, fy;
    std::getline(fields, fx, ',');
    std::getline(fields, fy, ',');
    ++n;
    diagonal += fx == fy;
  }
  CHECK(n > 100);
  CHECK(diagonal >= 0.99 * n);
  const auto pgm = slurp(dir / "self/matrix_j00_j00.pgm");
  CHECK(pgm.rfind("P5\n150 150\n255\n", 0) == 0);
  CHECK(fs::exists(dir / "self/matrix_j00_j00.tscm"));
  CHECK(fs::exists(dir / "self/align_j00_j00.csv"));

  CHECK(cli("-c " + t.config + " align" + model + " -x " + t.corpus + "/j00.tsrf -y " + t.corpus +
            "/j02.tsrf -o " + dir / "cross") == 1);
  CHECK(slurp(dir / "cross/tour_j00_j02.csv") == "frame_x,frame_y,cost,segment_id\n");
  CHECK_FALSE(fs::exists(dir / "cross/align_j00_j02.csv"));

  CHECK(cli("-c " + t.config + " align" + model + " -x " + t.corpus + "/j00.tsrf -y " + t.corpus +
            "/j01.tsrf -o " + dir / "pair") == 0);
  CHECK(cli("eval -a " + dir / "pair/align_j00_j01.csv -g " + t.corpus + "/gt_j00_j01.csv", dir / "eval.json") == 0);
  const auto metrics = nlohmann::json::parse(slurp(dir / "eval.json"));
  for (const char* key : {"coverage", "hit_rate", "mean_offset", "median_offset"}) CHECK(metrics.contains(key));
  tsync_metrics m{};
  CHECK(tsync_eval((dir / "pair/align_j00_j01.csv").c_str(), (t.corpus + "/gt_j00_j01.csv").c_str(), 4, 0, &m) ==
        TSYNC_OK);
  CHECK(m.hit_rate == doctest::Approx(metrics["hit_rate"].get<double>()));
  CHECK(m.hit_rate > 0.5);

  CHECK(cli("-c " + t.config + " dump-matrix" + model + " -x " + t.corpus + "/j00.tsrf -y " + t.corpus +
            "/j01.tsrf -o " + dir / "m.tscm --decorrelated --pgm " + dir / "m.pgm") == 0);
  CHECK(slurp(dir / "m.pgm").rfind("P5\n150 150\n255\n", 0) == 0);

  std::ofstream(dir / "broken.tsrf") << "not a journey";
  CHECK(cli("-c " + t.config + " align" + model + " -x " + dir / "broken.tsrf -y " + t.corpus + "/j00.tsrf -o " +
            dir / "bad") == 2);
  std::ofstream(dir / "broken.csv") << "t,frame_x\n";
  CHECK(cli("eval -a " + dir / "broken.csv -g " + t.corpus + "/gt_j00_j01.csv") == 2);
}

TEST_CASE("sync: one class of four journeys and a lonely reference") {
  Scratch dir("sync");
  const auto t = prepare(dir, 1, 4);
  CHECK(cli("-c " + t.config + " sync -m " + t.model + " --corpus " + t.corpus + " -r j01 -o " + dir / "out") == 0);
  std::size_t aligned = 0;
  for (const auto& e : fs::directory_iterator(dir / "out"))
    aligned += e.path().filename().string().rfind("align_j01_", 0) == 0;
  CHECK(aligned == 3);
  const auto report = nlohmann::json::parse(slurp(dir / "out/sync_report.json"));
  CHECK(report["reference"] == "j01");
  CHECK(report["direct_alignments"].get<std::size_t>() <= report["budget"].get<std::size_t>());
  CHECK(report["budget"] == 8);
  CHECK(report["aligned"].size() == 3);
  CHECK(cli("-c " + t.config + " sync -m " + t.model + " --corpus " + t.corpus + " -r j77 -o " + dir / "x") == 2);

  Scratch lone("lone");
  const auto u = prepare(lone, 2, 1);
  CHECK(cli("-c " + u.config + " sync -m " + u.model + " --corpus " + u.corpus + " -r j00 -o " + lone / "out") == 1);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(lone / "out")) files += e.path().filename().string().rfind("align_", 0) == 0;
  CHECK(files == 0);
}
