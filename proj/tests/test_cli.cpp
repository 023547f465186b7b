#include "loupe/sampling.hpp"
#include "loupe/tensor_io.hpp"

#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

fs::path const &work_dir()
{
  static fs::path const dir = [] {
    auto const p = fs::temp_directory_path() / "loupe_test_cli";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

struct Result
{
  int code;
  std::string output;
};

// Runs the CLI with stdout and stderr captured.
Result run(std::string const &args)
{
  auto const log = work_dir() / "out.txt";
  std::string const cmd =
    "cd '" + work_dir().string() + "' && '" KSPACE_LOUPE_BIN "' " + args + " > '" + log.string() + "' 2>&1";
  int const status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

void write_text(fs::path const &p, std::string const &text)
{
  std::ofstream(p) << text;
}

char const *const kSmallConfig = R"({
  "seeds": {"data": 4, "init": 5, "sampling": 6},
  "data": {"height": 16, "width": 16, "coils": 2, "n_train": 3, "n_val": 2, "n_test": 2, "out_dir": "data"},
  "train": {"gamma": 0.25, "calib_size": 4, "channels": 4, "blocks": 2, "cg_iters": 4, "epochs": 1,
            "manifest": "data/manifest.json", "checkpoint_dir": "run"},
  "eval": {"cg_iters": 8, "tv_iters": 20, "out_prefix": "rep"}
})";

} // namespace

TEST_CASE("Usage errors exit with status 2", "[cli]")
{
  Result r = run("");
  CHECK(r.code == 2);
  CHECK(r.output.find("gen-data") != std::string::npos);
  CHECK(r.output.find("gradcheck") != std::string::npos);

  CHECK(run("frobnicate").code == 2);
  r = run("train --no-such-flag 3");
  CHECK(r.code == 2);
  CHECK(r.output.find("Usage") != std::string::npos);
  CHECK(run("train --config missing.json").code == 2);
  CHECK(run("gen-data --seed 1,2").code == 2);

  write_text(work_dir() / "bad_key.json", R"({"train": {"epochz": 3}})");
  r = run("train --config bad_key.json");
  CHECK(r.code == 2);
  CHECK(r.output.find("epochz") != std::string::npos);
  write_text(work_dir() / "bad_value.json", R"({"train": {"gamma": 1.5}})");
  CHECK(run("train --config bad_value.json").code == 2);
  write_text(work_dir() / "bad_json.json", "{not json");
  CHECK(run("eval --config bad_json.json").code == 2);
  CHECK(run("gradcheck --suite nope").code == 2);
}

TEST_CASE("End-to-end commands on a small configuration", "[cli]")
{
  write_text(work_dir() / "small.json", kSmallConfig);
  REQUIRE(run("gen-data --config small.json").code == 0);
  CHECK(fs::exists(work_dir() / "data" / "manifest.json"));

  Result r = run("train --config small.json");
  REQUIRE(r.code == 0);
  CHECK(r.output.find("epoch   1") != std::string::npos);
  CHECK(fs::exists(work_dir() / "run" / "best.ckpt"));
  CHECK(fs::exists(work_dir() / "run" / "log.csv"));

  r = run("eval --config small.json --pattern vd --method zf --method tv");
  REQUIRE(r.code == 0);
  auto const csv = loupe::read_file(work_dir() / "rep.csv");
  std::string const text(csv.begin(), csv.end());
  CHECK(text.rfind("sample_id,method,pattern,psnr_db,ssim\n", 0) == 0);
  CHECK(text.find(",tv,vd,") != std::string::npos);
  CHECK(fs::exists(work_dir() / "rep.json"));

  r = run("eval --config small.json --out rep_topk");
  REQUIRE(r.code == 0);
  CHECK(r.output.find("modl") != std::string::npos);

  REQUIRE(run("export-pattern --config small.json --out-dir .").code == 0);
  loupe::RTensor const pat = loupe::read_tensor(work_dir() / "pattern.ksr");
  CHECK(pat.shape() == loupe::Shape{16, 16});
  CHECK(loupe::count_ones(pat) == 64);
  CHECK(fs::exists(work_dir() / "pattern.png"));
  CHECK(fs::exists(work_dir() / "probability.png"));

  r = run("recon --config small.json --input data/test_000.ksd --output rec.ksr --png rec.png --method zf "
          "--pattern file --pattern-file pattern.ksr");
  REQUIRE(r.code == 0);
  CHECK(loupe::read_tensor(work_dir() / "rec.ksr").shape() == loupe::Shape{16, 16, 2});
  CHECK(fs::exists(work_dir() / "rec.png"));

  REQUIRE(run("vd-pattern --height 32 --width 32 --gamma 0.2 --out vd.ksr --png vd.png").code == 0);
  CHECK(loupe::read_tensor(work_dir() / "vd.ksr").shape() == loupe::Shape{32, 32});

  CHECK(run("eval --config small.json --checkpoint nowhere.ckpt").code == 1);
}

TEST_CASE("Gradient check command", "[cli]")
{
  Result const r = run("gradcheck --suite ops");
  CHECK(r.code == 0);
  CHECK(r.output.find("max_rel_err") != std::string::npos);
  CHECK(r.output.find("FAIL") == std::string::npos);
  CHECK(r.output.find("conv2d") != std::string::npos);
}
