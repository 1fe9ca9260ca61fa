#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hypervox/cli.hpp"
#include "hypervox/data.hpp"
#include "hypervox/transfer.hpp"
#include "support/synthetic.hpp"
#include "support/tempdir.hpp"

using namespace hypervox;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "hypervox");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string last_line(const std::string& text) {
  std::string t = text;
  while (!t.empty() && t.back() == '\n') t.pop_back();
  return t.substr(t.rfind('\n') + 1);
}

struct Files {
  hvtest::TempDir dir;
  std::string cube, gt;
  explicit Files(int w = 16, int h = 16, int bands = 20, int nclass = 3, std::uint64_t seed = 5) {
    const auto ds = hvtest::synthetic_dataset(w, h, bands, nclass, seed);
    cube = dir.file("scene.hsc");
    gt = dir.file("scene.hsg");
    write_cube(cube, ds.cube);
    write_ground_truth(gt, ds.gt);
  }
  std::string out(const std::string& name) const { return dir.file(name); }
};

}  // namespace

TEST_CASE("trace of family d at 5x5x103") {
  const auto r = cli({"trace", "--family", "d", "--spatial", "5", "--bands", "103", "--classes", "9"});
  REQUIRE(r.code == 0);
  const std::string last = last_line(r.out);
  REQUIRE(last.rfind("params: ", 0) == 0);
  CHECK(std::stoul(last.substr(8)) < 7000);
  for (const char* ref : {"published 6862", "published 3681", "published 2251"})
    CHECK(r.out.find(ref) != std::string::npos);
  CHECK(r.out.find("delta") != std::string::npos);
}

TEST_CASE("trace of family b at n=1 has no 3D rows") {
  const auto r = cli({"trace", "--family", "b", "--spatial", "1"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("conv3d") == std::string::npos);
  CHECK(r.out.find("conv1d") != std::string::npos);
}

TEST_CASE("trace of an over-collapsing custom spec exits 3") {
  hvtest::TempDir dir;
  std::ofstream(dir.file("bad.txt")) << "conv 4 3,3,3 1,1,1 1,0,0\nconv 4 3,3,3 1,1,1 1,0,0\nfc nclass\n";
  const auto r = cli({"trace", "--spec-file", dir.file("bad.txt"), "--spatial", "3", "--bands", "20"});
  CHECK(r.code == 3);
  CHECK(r.err.rfind("error: kind=architecture code=3", 0) == 0);
  CHECK(r.err.find("layer 1") != std::string::npos);
  CHECK(cli({"trace", "--family", "d", "--spatial", "4"}).code == 3);
}

TEST_CASE("bad arguments exit 2") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"train", "--cube", "x.hsc"}).code == 2);
  const auto r = cli({"train", "--cube", "/nonexistent.hsc", "--gt", "/nonexistent.hsg"});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error: kind=input code=2 message=", 0) == 0);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("count split on nine classes prints the training size") {
  Files f(90, 60, 6, 9, 3);
  const auto r = cli({"train", "--cube", f.cube, "--gt", f.gt, "--family", "b", "--spatial", "1", "--split",
                      "count:200", "--epochs", "0", "--runs", "1", "--out", f.out("o")});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("train=1800") != std::string::npos);
}

TEST_CASE("train writes reports and checkpoints, reproducibly") {
  Files f;
  const std::vector<std::string> base{"train",   "--cube",  f.cube, "--gt",    f.gt,   "--family", "d",
                                      "--spatial", "3",     "--split", "frac:0.3", "--seed", "1",
                                      "--epochs", "2",      "--runs",  "2",      "--lr",   "0.01"};
  auto a = base;
  a.insert(a.end(), {"--out", f.out("a")});
  auto b = base;
  b.insert(b.end(), {"--out", f.out("b")});
  const auto ra = cli(a);
  REQUIRE(ra.code == 0);
  CHECK(ra.out.find("mean accuracy") != std::string::npos);
  REQUIRE(cli(b).code == 0);
  for (const char* file : {"run0/report.json", "run0/loss.csv", "run0/accuracy.csv", "run0/checkpoint.hvck",
                           "run1/report.json", "summary.json"}) {
    CAPTURE(file);
    REQUIRE(fs::exists(fs::path(f.out("a")) / file));
    CHECK(slurp(fs::path(f.out("a")) / file) == slurp(fs::path(f.out("b")) / file));
  }
  CHECK(fs::exists(fs::path(f.out("a")) / "run0/timing.json"));
  const auto summary = nlohmann::json::parse(slurp(fs::path(f.out("a")) / "summary.json"));
  CHECK(summary["runs"] == 2);
}

TEST_CASE("mismatched cube and labels exit 2") {
  Files f;
  const auto other = hvtest::synthetic_dataset(15, 16, 20, 3, 5);
  write_ground_truth(f.out("other.hsg"), other.gt);
  const auto r = cli({"train", "--cube", f.cube, "--gt", f.out("other.hsg"), "--out", f.out("o")});
  CHECK(r.code == 2);
  CHECK(r.err.find("dimension mismatch") != std::string::npos);
}

TEST_CASE("eval, classify, transfer and sweep") {
  Files f;
  REQUIRE(cli({"train", "--cube", f.cube, "--gt", f.gt, "--family", "d", "--spatial", "3", "--split", "frac:0.3",
               "--epochs", "2", "--runs", "1", "--lr", "0.01", "--out", f.out("t")})
              .code == 0);
  const std::string ck = (fs::path(f.out("t")) / "run0" / "checkpoint.hvck").string();

  const auto ev = cli({"eval", "--cube", f.cube, "--gt", f.gt, "--checkpoint", ck, "--out", f.out("e")});
  REQUIRE(ev.code == 0);
  CHECK(fs::exists(fs::path(f.out("e")) / "eval.json"));

  const auto cl = cli({"classify", "--cube", f.cube, "--gt", f.gt, "--checkpoint", ck, "--out", f.out("c")});
  REQUIRE(cl.code == 0);
  const std::string pgm = slurp(fs::path(f.out("c")) / "map.pgm");
  CHECK(pgm.rfind("P5\n16 16\n255\n", 0) == 0);
  CHECK(pgm.size() == 13 + 256);
  const auto legend = nlohmann::json::parse(slurp(fs::path(f.out("c")) / "legend.json"));
  CHECK(legend.size() == 3);

  const auto other = hvtest::synthetic_dataset(14, 14, 18, 4, 8);
  write_cube(f.out("o.hsc"), other.cube);
  write_ground_truth(f.out("o.hsg"), other.gt);
  const auto tr = cli({"transfer", "--cube", f.out("o.hsc"), "--gt", f.out("o.hsg"), "--init-from", ck,
                       "--freeze-features", "--split", "frac:0.3", "--epochs", "1", "--out", f.out("x")});
  REQUIRE(tr.code == 0);
  CHECK(tr.out.find("fine-tuned accuracy") != std::string::npos);
  const Checkpoint tuned = read_checkpoint((fs::path(f.out("x")) / "checkpoint.hvck").string());
  CHECK(tuned.manifest["f"] == 18);
  CHECK(tuned.manifest["metadata"]["freeze_features"] == true);

  const auto sw = cli({"sweep", "--cube", f.cube, "--gt", f.gt, "--family", "d", "--spatial", "3", "--fractions",
                       "0.3", "--epochs", "1", "--runs", "1", "--out", f.out("s")});
  REQUIRE(sw.code == 0);
  const std::string csv = slurp(fs::path(f.out("s")) / "sweep.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  CHECK(csv.rfind("fraction,mean_accuracy,max_deviation\n0.3,", 0) == 0);
}

TEST_CASE("config file mirrors the flags") {
  Files f;
  std::ofstream(f.out("run.toml")) << "[train]\nfamily = \"b\"\nspatial = 1\nepochs = 0\nruns = 1\nsplit = \"count:5\"\n";
  const auto r = cli({"--config", f.out("run.toml"), "train", "--cube", f.cube, "--gt", f.gt, "--out", f.out("o")});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("train=15") != std::string::npos);
}
