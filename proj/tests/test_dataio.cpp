#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <functional>
#include <sstream>
#include <unistd.h>

#include "doctest.h"
#include "lrnr/analytic.hpp"
#include "lrnr/cli.hpp"
#include "lrnr/dataio.hpp"
#include "lrnr/errors.hpp"
#include "lrnr/rng.hpp"
#include "oracles.hpp"

using namespace lrnr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("lrnr_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << bytes;
}

bool same_bits(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), 8 * a.size()) == 0;
}

ErrorKind kind_of_load(const std::string& path) {
  try {
    load_dataset(path);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("load succeeded");
  return ErrorKind::InvalidInput;
}

WaveDataset random_dataset(oracle::Gen& g, std::size_t d, std::size_t n) {
  const auto grid = cube_grid(d, d == 1 ? 17 : 5, -1.0, 1.0, true);
  Vector times = time_grid(0.0, 1.0, n);
  const Vector a = g.vector(3);
  return generate_dataset(grid, times, [&](std::span<const double> x, double t) {
    double z = a[0] * t;
    for (double xi : x) z += a[1] * xi + a[2] * xi * xi;
    return std::sin(7.0 * z) / 3.0;  // plenty of non-representable mantissas
  });
}

MetaModel random_model(oracle::Gen& g) {
  MetaModel m;
  const RankSpec r{{3, 2, 2}, {1, 2, 1}};
  m.factors = g.factors(2, 6, 2, r, Activation::Tanh);
  m.hyper = g.hyper({1, 4, 4, r.total()}, Activation::Tanh);
  m.normalizer = {0.25, 1.75};
  return m;
}

}  // namespace

TEST_SUITE("dataio") {

TEST_CASE("dataset round trips are bit exact") {
  TempDir dir("ds");
  oracle::Gen g(1);
  for (std::size_t d : {1u, 2u}) {
    const WaveDataset ds = random_dataset(g, d, 3);
    save_dataset(ds, dir / "a.lrnrd");
    const WaveDataset back = load_dataset(dir / "a.lrnrd");
    CHECK(back == ds);
    for (std::size_t k = 0; k < ds.size(); ++k) {
      CHECK(same_bits(back.snapshots[k].values.values(), ds.snapshots[k].values.values()));
      CHECK(same_bits(back.snapshots[k].weights, ds.snapshots[k].weights));
      CHECK(same_bits(back.snapshots[k].points.values(), ds.snapshots[k].points.values()));
    }
    CHECK(same_bits(back.times, ds.times));
    // a second save produces the same bytes
    save_dataset(back, dir / "b.lrnrd");
    CHECK(slurp(dir / "a.lrnrd") == slurp(dir / "b.lrnrd"));
  }
}

TEST_CASE("eighty-one snapshot datasets keep their cadence") {
  TempDir dir("ds81");
  oracle::Gen g(2);
  save_dataset(random_dataset(g, 1, 81), dir / "a.lrnrd");
  const auto back = load_dataset(dir / "a.lrnrd");
  CHECK(back.size() == 81);
  CHECK(back.times[80] == 1.0);
  CHECK(back.times[40] == 0.5);
}

TEST_CASE("manifest offsets address little-endian float64 rows") {
  TempDir dir("layout");
  oracle::Gen g(3);
  const WaveDataset ds = random_dataset(g, 2, 2);
  save_dataset(ds, dir / "a.lrnrd");
  const std::string bytes = slurp(dir / "a.lrnrd");
  const auto nl1 = bytes.find('\n'), nl2 = bytes.find('\n', nl1 + 1);
  CHECK(bytes.substr(0, nl1) == "LRNRD 1");
  const auto manifest = nlohmann::json::parse(bytes.substr(nl1 + 1, nl2 - nl1 - 1));
  const std::string payload = bytes.substr(nl2 + 1);
  CHECK(manifest["payload_bytes"].get<std::size_t>() == payload.size());
  auto le = [&](std::size_t off) {
    std::uint64_t u = 0;
    for (int b = 7; b >= 0; --b) u = (u << 8) | static_cast<unsigned char>(payload[off + b]);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  };
  const std::size_t toff = manifest["times_offset"];
  CHECK(le(toff + 8) == ds.times[1]);
  const auto& rec = manifest["snapshots"][1];
  CHECK(rec["points"].get<std::size_t>() == ds.snapshots[1].size());
  const std::size_t off = rec["offset"];
  const std::size_t j = 7, row = 2 + 1 + 1;
  CHECK(le(off + 8 * (row * j)) == ds.snapshots[1].points(0, j));
  CHECK(le(off + 8 * (row * j + 1)) == ds.snapshots[1].points(1, j));
  CHECK(le(off + 8 * (row * j + 2)) == ds.snapshots[1].values(0, j));
  CHECK(le(off + 8 * (row * j + 3)) == ds.snapshots[1].weights[j]);
}

TEST_CASE("dataset corruption maps to distinct error kinds") {
  TempDir dir("corrupt");
  oracle::Gen g(4);
  save_dataset(random_dataset(g, 1, 3), dir / "a.lrnrd");
  const std::string good = slurp(dir / "a.lrnrd");
  const std::string p = dir / "bad.lrnrd";

  std::string s = good;
  s[0] = 'X';
  spit(p, s);
  CHECK(kind_of_load(p) == ErrorKind::FormatError);

  s = good;
  s.replace(0, 7, "LRNRD 2");
  spit(p, s);
  CHECK(kind_of_load(p) == ErrorKind::VersionMismatch);

  spit(p, good.substr(0, good.size() - 5));
  CHECK(kind_of_load(p) == ErrorKind::TruncatedFile);

  spit(p, good.substr(0, good.find('\n') + 20));
  CHECK(kind_of_load(p) == ErrorKind::TruncatedFile);

  spit(p, good + "x");
  CHECK(kind_of_load(p) == ErrorKind::FormatError);

  // a snapshot claiming more points than the payload holds
  s = good;
  const auto at = s.find("\"points\":17");
  REQUIRE(at != std::string::npos);
  s.replace(at, 11, "\"points\":99");
  spit(p, s);
  CHECK(kind_of_load(p) == ErrorKind::ShapeMismatch);

  CHECK(kind_of_load(dir / "missing.lrnrd") == ErrorKind::IoError);
  try {
    load_checkpoint(dir / "a.lrnrd");
    FAIL("dataset loaded as checkpoint");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::FormatError);
  }
}

TEST_CASE("checkpoint round trip reproduces forward outputs exactly") {
  TempDir dir("ckpt");
  oracle::Gen g(5);
  Checkpoint ck;
  ck.model = random_model(g);
  ck.config_json = R"({"seed":3})";
  ck.history_path = "runs/h.csv";
  save_checkpoint(ck, dir / "a.lrnrc");
  const Checkpoint back = load_checkpoint(dir / "a.lrnrc");
  CHECK(back.model == ck.model);
  CHECK_FALSE(back.train_state.has_value());
  CHECK_FALSE(back.hypermodes.has_value());
  CHECK_FALSE(back.fast.has_value());
  CHECK(back.config_json == ck.config_json);
  CHECK(back.history_path == ck.history_path);
  for (int k = 0; k < 50; ++k) {
    const Vector x = g.vector(2);
    const double t = g.uniform(0.25, 1.75);
    CHECK(same_bits(meta_forward(back.model, x, t), meta_forward(ck.model, x, t)));
  }
}

TEST_CASE("checkpoint optional sections survive the round trip") {
  TempDir dir("ckpt_full");
  oracle::Gen g(6);
  Checkpoint ck;
  ck.model = random_model(g);
  TrainConfig tc;
  TrainState st = TrainState::initial(ck.model, tc);
  st.epoch = 17;
  st.alpha = 1;
  st.lr = 3.3e-4;
  st.radius = 0.01;
  st.plateau = {0.125, 4};
  st.adam.step = 17;
  for (auto& v : st.adam.m) v = g.uniform();
  for (auto& v : st.adam.v) v = g.uniform(0.0, 1.0);
  Rng rng = Rng::stream(9, 1);
  rng.next_u64();
  st.rng = rng.state();
  ck.train_state = st;
  const Vector times = time_grid(0.25, 1.75, 21);
  ck.hypermodes = compute_hypermodes(coeff_snapshots(ck.model, times), 1e-6, times);
  CompressOptions opts;
  opts.max_rank = 3;
  ck.fast = compress(ck.model, g.matrix(2, 2), times, opts, &*ck.hypermodes);
  save_checkpoint(ck, dir / "a.lrnrc");
  const Checkpoint back = load_checkpoint(dir / "a.lrnrc");
  CHECK(back.model == ck.model);
  REQUIRE(back.train_state.has_value());
  CHECK(*back.train_state == st);
  REQUIRE(back.hypermodes.has_value());
  CHECK(*back.hypermodes == *ck.hypermodes);
  REQUIRE(back.fast.has_value());
  CHECK(*back.fast == *ck.fast);
  const Vector x = ck.fast->anchors.col(0);
  CHECK(same_bits(fast_forward(*back.fast, 0.9, x), fast_forward(*ck.fast, 0.9, x)));
}

TEST_CASE("checkpoint shape errors are reported") {
  TempDir dir("ckpt_bad");
  oracle::Gen g(7);
  Checkpoint ck;
  ck.model = random_model(g);
  save_checkpoint(ck, dir / "a.lrnrc");
  const std::string good = slurp(dir / "a.lrnrc");
  auto kind = [&](const std::string& bytes) {
    spit(dir / "b.lrnrc", bytes);
    try {
      load_checkpoint(dir / "b.lrnrc");
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::InvalidInput;
  };
  std::string s = good;
  s.replace(0, 7, "LRNRC 9");
  CHECK(kind(s) == ErrorKind::VersionMismatch);
  CHECK(kind(good.substr(0, good.size() - 8)) == ErrorKind::TruncatedFile);
  // widen one declared section past the payload
  const auto nl1 = good.find('\n'), nl2 = good.find('\n', nl1 + 1);
  auto manifest = nlohmann::json::parse(good.substr(nl1 + 1, nl2 - nl1 - 1));
  std::function<bool(nlohmann::json&)> bump = [&](nlohmann::json& j) {
    if (j.is_object() && j.contains("rows") && j.contains("offset")) {
      j["rows"] = j["rows"].get<std::size_t>() + 1000;
      return true;
    }
    if (j.is_object() || j.is_array())
      for (auto& c : j)
        if (bump(c)) return true;
    return false;
  };
  REQUIRE(bump(manifest));
  s = good.substr(0, nl1 + 1) + manifest.dump() + good.substr(nl2);
  CHECK(kind(s) == ErrorKind::ShapeMismatch);
}

TEST_CASE("split training through a checkpoint matches one run") {
  TempDir dir("split");
  RunConfig cfg = small_gradcheck_config();
  cfg.train.batch = 2;
  cfg.train.n_epc = 40;
  cfg.train.w0 = 0.1;
  auto data = std::make_shared<const WaveDataset>(generate_problem(cfg.problem));
  Rng init = Rng::stream(cfg.seed, 0);
  const MetaModel m0 = init_meta_model(cfg.shape(1, 1), {data->times.front(), data->times.back()}, init);
  TrainOptions ten;
  ten.stop_after = 10;
  TrainOptions twenty;
  twenty.stop_after = 20;
  const TrainResult whole = train_loop(m0, data, cfg.train, nullptr, twenty);
  const TrainResult first = train_loop(m0, data, cfg.train, nullptr, ten);
  Checkpoint ck;
  ck.model = first.model;
  ck.train_state = first.state;
  save_checkpoint(ck, dir / "mid.lrnrc");
  const Checkpoint mid = load_checkpoint(dir / "mid.lrnrc");
  const TrainResult second = train_loop(mid.model, data, cfg.train, &*mid.train_state, ten);
  CHECK(second.model == whole.model);
  CHECK(second.state == whole.state);
  CHECK(second.rel_l2 == whole.rel_l2);
  REQUIRE(whole.history.size() == 20);
  for (std::size_t k = 0; k < 10; ++k) CHECK(second.history[k] == whole.history[10 + k]);
}

TEST_CASE("AMR tables become an adaptive dataset") {
  TempDir dir("amr");
  spit(dir / "t0.txt", "# x u w\n0.0 1.0 0.5\n0.5 2.0 0.25\n\n0.75 3.0 0.25  # finest patch\n");
  spit(dir / "t1.txt", "0.1 -1.0 0.5\n0.6 -2.0 0.5\n");
  const auto ds = ingest_amr_tables({{0.0, dir / "t0.txt"}, {0.5, dir / "t1.txt"}}, 1, 1);
  CHECK(ds.grid_kind == GridKind::Adaptive);
  CHECK_FALSE(ds.grid.has_value());
  CHECK(ds.times == Vector{0.0, 0.5});
  REQUIRE(ds.snapshots[0].size() == 3);
  CHECK(ds.snapshots[0].points(0, 2) == 0.75);
  CHECK(ds.snapshots[0].values(0, 1) == 2.0);
  CHECK(ds.snapshots[0].weights == Vector{0.5, 0.25, 0.25});
  CHECK(ds.snapshots[1].size() == 2);
  save_dataset(ds, dir / "amr.lrnrd");
  CHECK(load_dataset(dir / "amr.lrnrd") == ds);
  CHECK_THROWS_AS(mollified_view(std::make_shared<const WaveDataset>(ds), 0.1), UnsupportedOperation);

  auto kind = [&](const std::string& text) {
    spit(dir / "bad.txt", text);
    try {
      ingest_amr_tables({{0.0, dir / "bad.txt"}}, 1, 1);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::ConfigError;
  };
  CHECK(kind("0.0 1.0\n") == ErrorKind::ShapeMismatch);
  CHECK(kind("0.0 abc 1.0\n") == ErrorKind::FormatError);
  CHECK(kind("0.0 1.0 0.0\n") == ErrorKind::InvalidInput);
  CHECK_THROWS_AS(ingest_amr_tables({{0.0, dir / "nope.txt"}}, 1, 1), Error);
  CHECK_THROWS_AS(ingest_amr_tables({}, 1, 1), InvalidInput);
}

TEST_CASE("atomic writes leave no temporaries behind") {
  TempDir dir("atomic");
  write_file_atomic(dir / "f.bin", "first");
  write_file_atomic(dir / "f.bin", std::string("sec\0ond", 7));
  CHECK(slurp(dir / "f.bin") == std::string("sec\0ond", 7));
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path)) ++files;
  CHECK(files == 1);
}

}  // TEST_SUITE
