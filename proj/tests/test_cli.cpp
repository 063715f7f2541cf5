#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <unistd.h>

#include "doctest.h"
#include "lrnr/analytic.hpp"
#include "lrnr/cli.hpp"
#include "lrnr/dataio.hpp"
#include "lrnr/errors.hpp"

using namespace lrnr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("lrnr_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "lrnr");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  const int code = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

std::string first_line(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  return line;
}

double value_after(const std::string& text, const std::string& key) {
  const auto at = text.find(key + " ");
  REQUIRE(at != std::string::npos);
  return std::stod(text.substr(at + key.size() + 1));
}

// a quick config: the small audit network on the default problem
std::string small_config(const std::function<void(nlohmann::json&)>& edit = {}) {
  RunConfig c = small_gradcheck_config();
  c.train.batch = 2;
  auto j = nlohmann::json::parse(to_json(c));
  if (edit) edit(j);
  return j.dump(2);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("gen writes the requested number of snapshots") {
  TempDir dir("gen");
  const auto r = run({"gen", "--problem", "wave1d", "--atoms", "1", "--times", "81", "--out", dir / "w.lrnrd"});
  CHECK(r.code == 0);
  const auto ds = load_dataset(dir / "w.lrnrd");
  CHECK(ds.size() == 81);
  CHECK(ds.times.back() == 1.0);
  // rerunning overwrites with identical bytes
  const std::string bytes = slurp(dir / "w.lrnrd");
  CHECK(run({"gen", "--problem", "wave1d", "--atoms", "1", "--times", "81", "--out", dir / "w.lrnrd"}).code == 0);
  CHECK(slurp(dir / "w.lrnrd") == bytes);
  CHECK(run({"gen", "--problem", "wave2d-planar", "--cells", "8", "--times", "3", "--out", dir / "w2.lrnrd"}).code == 0);
  CHECK(load_dataset(dir / "w2.lrnrd").spatial_dim == 2);
}

TEST_CASE("advection over an empty time range is the initial profile") {
  TempDir dir("adv");
  CHECK(run({"gen", "--problem", "advection1d", "--t0", "0", "--t1", "0", "--cells", "64", "--out", dir / "a.lrnrd"})
            .code == 0);
  const auto ds = load_dataset(dir / "a.lrnrd");
  REQUIRE(ds.size() == 1);
  const AdvectionProfile prof;
  for (std::size_t j = 0; j < 64; ++j)
    CHECK(ds.snapshots[0].values(0, j) == advection_profile(prof, ds.snapshots[0].points(0, j)));
}

TEST_CASE("generated Burgers shock sits at the Rankine-Hugoniot location") {
  TempDir dir("burgers");
  CHECK(run({"gen", "--problem", "burgers1d-riemann", "--ul", "1", "--ur", "0", "--cells", "200", "--times", "5",
             "--out", dir / "b.lrnrd"})
            .code == 0);
  const auto ds = load_dataset(dir / "b.lrnrd");
  const auto& s = ds.snapshots.back();
  const double shock = 0.5 * ds.times.back();
  for (std::size_t j = 0; j < s.size(); ++j) CHECK(s.values(0, j) == (s.points(0, j) < shock ? 1.0 : 0.0));
}

TEST_CASE("config parsing is strict") {
  CHECK_NOTHROW(parse_run_config("{}"));
  auto kind = [](const std::string& text) {
    try {
      parse_run_config(text);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::IoError;
  };
  CHECK(kind(R"({"sead": 1})") == ErrorKind::ConfigError);
  CHECK(kind(R"({"train": {"learning_rate": 0.1}})") == ErrorKind::ConfigError);
  CHECK(kind(R"({"model": {"M": "wide"}})") == ErrorKind::ConfigError);
  CHECK(kind(R"({"model": {"activation": "gelu"}})") == ErrorKind::ConfigError);
  CHECK(kind("{not json") == ErrorKind::ConfigError);
  const RunConfig c = parse_run_config(R"({"seed": 4, "model": {"M": 32, "L": 4, "r": 5}, "train": {"lr0": 0.01}})");
  CHECK(c.seed == 4);
  CHECK(c.M == 32);
  CHECK(c.ranks == RankSpec::uniform(4, 5));
  CHECK(c.train.lr0 == 0.01);
  // the emitted form parses back to itself
  const std::string text = to_json(c);
  CHECK(to_json(parse_run_config(text)) == text);
}

TEST_CASE("train and eval agree on the relative misfit") {
  TempDir dir("train");
  spit(dir / "cfg.json", small_config());
  CHECK(run({"gen", "--problem", "advection1d", "--cells", "32", "--times", "5", "--out", dir / "d.lrnrd"}).code == 0);
  const auto tr = run({"train", "--config", dir / "cfg.json", "--data", dir / "d.lrnrd", "--out", dir / "m.lrnrc",
                       "--epochs", "15"});
  REQUIRE(tr.code == 0);
  CHECK(first_line(dir / "m.lrnrc.history.csv") == history_csv_header());
  const auto ck = load_checkpoint(dir / "m.lrnrc");
  REQUIRE(ck.train_state.has_value());
  CHECK(ck.train_state->epoch == 15);

  auto data = std::make_shared<const WaveDataset>(load_dataset(dir / "d.lrnrd"));
  const auto ev = run({"eval", "--ckpt", dir / "m.lrnrc", "--data", dir / "d.lrnrd", "--out", dir / "e.lrnrd"});
  REQUIRE(ev.code == 0);
  const double printed = value_after(ev.out, "rel_l2");
  CHECK(std::abs(printed - relative_l2_error(ck.model, *data)) < 1e-12);
  const auto evald = load_dataset(dir / "e.lrnrd");
  CHECK(evald.size() == data->size());

  // evaluation outside the training window and domain
  const auto ex = run({"eval", "--ckpt", dir / "m.lrnrc", "--t", "1.5", "--lo", "-3", "--hi", "3", "--cells", "60",
                       "--out", dir / "x.lrnrd"});
  CHECK(ex.code == 0);
  CHECK(ex.err.find("outside the training time range") != std::string::npos);
  CHECK(load_dataset(dir / "x.lrnrd").snapshots[0].size() == 60);

  // resuming continues the epoch count and appends history
  CHECK(run({"train", "--resume", dir / "m.lrnrc", "--data", dir / "d.lrnrd", "--out", dir / "m2.lrnrc", "--history",
             dir / "m.lrnrc.history.csv", "--epochs", "5"})
            .code == 0);
  CHECK(load_checkpoint(dir / "m2.lrnrc").train_state->epoch == 20);
  std::ifstream hist(dir / "m.lrnrc.history.csv");
  std::size_t lines = 0;
  for (std::string l; std::getline(hist, l);) ++lines;
  CHECK(lines == 21);
}

TEST_CASE("trainer and eval report the same final rel_l2") {
  TempDir dir("same");
  spit(dir / "cfg.json", small_config([](nlohmann::json& j) { j["train"]["n_epc"] = 12; }));
  CHECK(run({"gen", "--problem", "advection1d", "--cells", "32", "--times", "5", "--out", dir / "d.lrnrd"}).code == 0);
  const RunConfig cfg = load_run_config(dir / "cfg.json");
  auto data = std::make_shared<const WaveDataset>(load_dataset(dir / "d.lrnrd"));
  Rng init = Rng::stream(cfg.seed, 0);
  const auto res = train_loop(init_meta_model(cfg.shape(1, 1), {data->times.front(), data->times.back()}, init), data,
                              cfg.train);
  CHECK(run({"train", "--config", dir / "cfg.json", "--data", dir / "d.lrnrd", "--out", dir / "m.lrnrc"}).code == 0);
  const auto ev = run({"eval", "--ckpt", dir / "m.lrnrc", "--data", dir / "d.lrnrd", "--out", dir / "e.lrnrd"});
  CHECK(std::abs(value_after(ev.out, "rel_l2") - res.rel_l2) < 1e-12);
}

TEST_CASE("analysis commands write headed CSVs") {
  TempDir dir("analysis");
  spit(dir / "cfg.json", small_config());
  CHECK(run({"gen", "--problem", "advection1d", "--cells", "32", "--times", "9", "--out", dir / "d.lrnrd"}).code == 0);
  REQUIRE(run({"train", "--config", dir / "cfg.json", "--data", dir / "d.lrnrd", "--out", dir / "m.lrnrc",
               "--epochs", "10"})
              .code == 0);
  const auto hm = run({"hypermodes", "--ckpt", dir / "m.lrnrc", "--n", "21", "--degree", "6", "--out-dir",
                       dir / "hm", "--out-ckpt", dir / "mh.lrnrc"});
  CHECK(hm.code == 0);
  CHECK(first_line(dir / "hm/singular_values.csv") == "index,sigma,sigma_rel,tail_energy_fraction");
  CHECK(first_line(dir / "hm/truncation.csv") == "layer,weight_rank,weight_kept,bias_rank,bias_kept");
  CHECK(first_line(dir / "hm/temporal_fit.csv") == "degree,max_residual");
  CHECK(first_line(dir / "hm/temporal_modes.csv").rfind("t,psi_1", 0) == 0);
  CHECK(load_checkpoint(dir / "mh.lrnrc").hypermodes.has_value());

  CHECK(run({"perturb", "--ckpt", dir / "mh.lrnrc", "--t", "0.5", "--mode", "1", "--eta", "0.1", "--out",
             dir / "p.lrnrd", "--csv", dir / "p.csv"})
            .code == 0);
  CHECK(first_line(dir / "p.csv") == "x1,u1,u1_perturbed");
  CHECK(run({"extrap", "--ckpt", dir / "mh.lrnrc", "--t", "0.5", "--mode", "1", "--eta", "1", "--out",
             dir / "q.lrnrd"})
            .code == 0);
  CHECK(run({"perturb", "--ckpt", dir / "mh.lrnrc", "--t", "0.5", "--mode", "99", "--out", dir / "r.lrnrd"}).code ==
        1);

  CHECK(run({"compress", "--ckpt", dir / "m.lrnrc", "--anchor", "0.1", "--n", "21", "--out", dir / "f.lrnrc",
             "--sweep", dir / "sweep.csv", "--sweep-max-rank", "3"})
            .code == 0);
  CHECK(first_line(dir / "sweep.csv") == "rank,rel_error,fast_ops,full_ops");
  const auto fe = run({"fast-eval", "--ckpt", dir / "f.lrnrc", "--n", "11", "--out", dir / "fe.csv"});
  CHECK(fe.code == 0);
  CHECK(first_line(dir / "fe.csv") == "t,fast_u1,full_u1,abs_error_u1");
  CHECK(value_after(fe.out, "rel_error") < 1e-6);
}

TEST_CASE("rate study and gradient audit commands") {
  TempDir dir("rate");
  const auto rs =
      run({"rate-study", "--problem", "advection1d", "--widths", "8,16,32", "--seeds", "2", "--out", dir / "r.csv"});
  CHECK(rs.code == 0);
  CHECK(first_line(dir / "r.csv") == "width,seed,h1_error,slope");
  const auto gc = run({"gradcheck", "--seeds", "2"});
  CHECK(gc.code == 0);
  CHECK(gc.out.find("PASS") != std::string::npos);
  CHECK(value_after(gc.out, "PASS max_rel_error") < 1e-6);
  // an impossible tolerance fails the audit with a nonzero exit
  CHECK(run({"gradcheck", "--seeds", "1", "--tol", "1e-300"}).code != 0);
}

TEST_CASE("exit codes by failure class") {
  TempDir dir("codes");
  CHECK(run({}).code == 1);
  CHECK(run({"frobnicate"}).code == 1);
  CHECK(run({"gen", "--problem", "heat3d", "--out", dir / "x.lrnrd"}).code == 1);
  CHECK(run({"eval", "--ckpt", dir / "missing.lrnrc", "--t", "0", "--out", dir / "e.lrnrd"}).code == 2);
  spit(dir / "junk.lrnrc", "LRNRC 7\n{}\n");
  CHECK(run({"eval", "--ckpt", dir / "junk.lrnrc", "--t", "0", "--out", dir / "e.lrnrd"}).code == 2);
  spit(dir / "bad.json", R"({"train": {"epochs": 3}})");
  const auto cfg = run({"train", "--config", dir / "bad.json", "--out", dir / "m.lrnrc"});
  CHECK(cfg.code == 1);
  CHECK(cfg.err.find("epochs") != std::string::npos);
  spit(dir / "blow.json", small_config([](nlohmann::json& j) { j["train"]["lr0"] = 1e300; }));
  const auto blow = run({"train", "--config", dir / "blow.json", "--out", dir / "b.lrnrc", "--epochs", "5"});
  CHECK(blow.code == 3);
  // the last good state is still on disk
  CHECK(fs::exists(dir / "b.lrnrc"));
  CHECK(run({"--help"}).code == 0);
}

}  // TEST_SUITE
