#include "lrnr/dataio.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lrnr/errors.hpp"

namespace lrnr {

using json = nlohmann::json;

namespace {

constexpr const char* kDatasetMagic = "LRNRD";
constexpr const char* kCheckpointMagic = "LRNRC";

void append_double(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

double read_double(const std::string& buf, std::size_t pos) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
  if (s.size() != 16) throw Error(ErrorKind::FormatError, "malformed RNG state word");
  std::uint64_t v = 0;
  for (char c : s) {
    v <<= 4;
    if (c >= '0' && c <= '9') v |= static_cast<std::uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f') v |= static_cast<std::uint64_t>(c - 'a' + 10);
    else throw Error(ErrorKind::FormatError, "malformed RNG state word");
  }
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Container {
  json manifest;
  std::string payload;
};

std::string compose(const char* magic, int version, json manifest, const std::string& payload) {
  manifest["payload_bytes"] = payload.size();
  std::string out = std::string(magic) + " " + std::to_string(version) + "\n";
  out += manifest.dump();
  out += "\n";
  out += payload;
  return out;
}

Container parse(const std::string& bytes, const char* magic, int version, const std::string& path) {
  const auto nl1 = bytes.find('\n');
  if (nl1 == std::string::npos) throw Error(ErrorKind::FormatError, path + ": missing header line");
  std::istringstream header(bytes.substr(0, nl1));
  std::string tag;
  int found = -1;
  header >> tag >> found;
  if (tag != magic) throw Error(ErrorKind::FormatError, path + ": bad magic header (expected " + magic + ")");
  if (found != version) {
    std::ostringstream msg;
    msg << path << ": unsupported format version " << found << " (expected " << version << ")";
    throw Error(ErrorKind::VersionMismatch, msg.str());
  }
  const auto nl2 = bytes.find('\n', nl1 + 1);
  if (nl2 == std::string::npos) throw Error(ErrorKind::TruncatedFile, path + ": manifest is incomplete");
  Container c;
  try {
    c.manifest = json::parse(bytes.substr(nl1 + 1, nl2 - nl1 - 1));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::FormatError, path + ": malformed manifest: " + e.what());
  }
  c.payload = bytes.substr(nl2 + 1);
  if (!c.manifest.is_object() || !c.manifest.contains("payload_bytes"))
    throw Error(ErrorKind::FormatError, path + ": manifest lacks payload_bytes");
  const auto declared = c.manifest["payload_bytes"].get<std::size_t>();
  if (c.payload.size() < declared) throw Error(ErrorKind::TruncatedFile, path + ": payload is truncated");
  if (c.payload.size() > declared) throw Error(ErrorKind::FormatError, path + ": trailing bytes after payload");
  return c;
}

template <class Fn>
auto guarded(const std::string& path, Fn fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::FormatError, path + ": manifest field error: " + e.what());
  }
}

// Named float64 arrays appended to a payload.
class SectionWriter {
 public:
  void put(const std::string& name, std::span<const double> v, std::size_t rows, std::size_t cols) {
    sections_.push_back({{"name", name}, {"rows", rows}, {"cols", cols}, {"offset", payload_.size()}});
    for (double x : v) append_double(payload_, x);
  }
  void put(const std::string& name, const Matrix& m) { put(name, m.values(), m.rows(), m.cols()); }
  void put(const std::string& name, std::span<const double> v) { put(name, v, v.size(), 1); }

  const json& sections() const { return sections_; }
  const std::string& payload() const { return payload_; }

 private:
  json sections_ = json::array();
  std::string payload_;
};

class SectionReader {
 public:
  SectionReader(const Container& c, std::string path) : payload_(c.payload), path_(std::move(path)) {
    for (const auto& s : c.manifest.at("sections")) index_[s.at("name").get<std::string>()] = s;
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Vector vector(const std::string& name, std::size_t rows, std::size_t cols = 1) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw Error(ErrorKind::FormatError, path_ + ": missing section " + name);
    const json& s = it->second;
    if (s.at("rows").get<std::size_t>() != rows || s.at("cols").get<std::size_t>() != cols) {
      std::ostringstream msg;
      msg << path_ << ": section " << name << " has shape " << s.at("rows") << "x" << s.at("cols")
          << ", expected " << rows << "x" << cols;
      throw Error(ErrorKind::ShapeMismatch, msg.str());
    }
    const std::size_t off = s.at("offset").get<std::size_t>();
    const std::size_t n = rows * cols;
    if (off + 8 * n > payload_.size()) throw Error(ErrorKind::ShapeMismatch, path_ + ": section " + name + " overruns payload");
    Vector v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = read_double(payload_, off + 8 * i);
    return v;
  }

  Matrix matrix(const std::string& name, std::size_t rows, std::size_t cols) const {
    const Vector v = vector(name, rows, cols);
    Matrix m(rows, cols);
    std::copy(v.begin(), v.end(), m.data());
    return m;
  }

 private:
  const std::string& payload_;
  std::string path_;
  std::map<std::string, json> index_;
};

json hyper_shape(const HyperNetParams& h) {
  json widths = json::array({1});
  for (const auto& l : h.layers) widths.push_back(l.weight.rows());
  return {{"widths", widths}, {"activation", to_string(h.activation)}};
}

void put_hyper(SectionWriter& w, const std::string& prefix, const HyperNetParams& h, const TimeNormalizer& n) {
  for (std::size_t l = 0; l < h.layers.size(); ++l) {
    w.put(prefix + "hyper.W" + std::to_string(l + 1), h.layers[l].weight);
    w.put(prefix + "hyper.b" + std::to_string(l + 1), h.layers[l].bias);
  }
  const Vector tn{n.t0, n.t1};
  w.put(prefix + "normalizer", tn);
}

HyperNetParams get_hyper(const SectionReader& r, const std::string& prefix, const json& shape) {
  HyperNetParams h;
  h.activation = parse_activation(shape.at("activation").get<std::string>());
  const auto widths = shape.at("widths").get<std::vector<std::size_t>>();
  if (widths.size() < 2) throw Error(ErrorKind::FormatError, "hypernetwork needs at least one layer");
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    DenseLayer layer;
    layer.weight = r.matrix(prefix + "hyper.W" + std::to_string(l + 1), widths[l + 1], widths[l]);
    layer.bias = r.vector(prefix + "hyper.b" + std::to_string(l + 1), widths[l + 1]);
    h.layers.push_back(std::move(layer));
  }
  return h;
}

TimeNormalizer get_normalizer(const SectionReader& r, const std::string& prefix) {
  const Vector tn = r.vector(prefix + "normalizer", 2);
  return {tn[0], tn[1]};
}

json ranks_json(const RankSpec& r) { return {{"weight_ranks", r.weight_ranks}, {"bias_ranks", r.bias_ranks}}; }

RankSpec ranks_from(const json& j) {
  RankSpec r{j.at("weight_ranks").get<std::vector<std::size_t>>(), j.at("bias_ranks").get<std::vector<std::size_t>>()};
  r.validate();
  return r;
}

}  // namespace

void write_file_atomic(const std::string& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error(ErrorKind::IoError, "failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot rename " + tmp.string() + " to " + path + ": " + ec.message());
}

// ---------------------------------------------------------------- dataset

void save_dataset(const WaveDataset& ds, const std::string& path) {
  ds.validate();
  std::string payload;
  json manifest;
  manifest["kind"] = "dataset";
  manifest["d"] = ds.spatial_dim;
  manifest["m"] = ds.output_dim;
  manifest["grid_kind"] = ds.grid_kind == GridKind::Uniform ? "uniform" : "adaptive";
  manifest["n_snapshots"] = ds.size();
  manifest["times_offset"] = payload.size();
  for (double t : ds.times) append_double(payload, t);
  if (ds.grid) {
    json g;
    g["shape"] = ds.grid->shape;
    g["periodic"] = ds.grid->periodic;
    g["origin_offset"] = payload.size();
    for (double v : ds.grid->origin) append_double(payload, v);
    g["spacing_offset"] = payload.size();
    for (double v : ds.grid->spacing) append_double(payload, v);
    manifest["grid"] = g;
  }
  json snaps = json::array();
  for (const auto& s : ds.snapshots) {
    snaps.push_back({{"points", s.size()}, {"offset", payload.size()}});
    for (std::size_t j = 0; j < s.size(); ++j) {
      for (std::size_t k = 0; k < ds.spatial_dim; ++k) append_double(payload, s.points(k, j));
      for (std::size_t k = 0; k < ds.output_dim; ++k) append_double(payload, s.values(k, j));
      append_double(payload, s.weights[j]);
    }
  }
  manifest["snapshots"] = snaps;
  write_file_atomic(path, compose(kDatasetMagic, kDatasetVersion, manifest, payload));
}

WaveDataset load_dataset(const std::string& path) {
  const Container c = parse(read_file(path), kDatasetMagic, kDatasetVersion, path);
  return guarded(path, [&] {
    const json& m = c.manifest;
    const std::size_t size = c.payload.size();
    auto need = [&](std::size_t off, std::size_t count) {
      if (off + 8 * count > size) throw Error(ErrorKind::ShapeMismatch, path + ": declared shapes overrun the payload");
    };
    WaveDataset ds;
    ds.spatial_dim = m.at("d").get<std::size_t>();
    ds.output_dim = m.at("m").get<std::size_t>();
    const std::string kind = m.at("grid_kind").get<std::string>();
    if (kind == "uniform") ds.grid_kind = GridKind::Uniform;
    else if (kind == "adaptive") ds.grid_kind = GridKind::Adaptive;
    else throw Error(ErrorKind::FormatError, path + ": unknown grid kind " + kind);
    const std::size_t n = m.at("n_snapshots").get<std::size_t>();
    const std::size_t toff = m.at("times_offset").get<std::size_t>();
    need(toff, n);
    for (std::size_t k = 0; k < n; ++k) ds.times.push_back(read_double(c.payload, toff + 8 * k));
    if (m.contains("grid")) {
      const json& g = m["grid"];
      UniformGrid grid;
      grid.shape = g.at("shape").get<std::vector<std::size_t>>();
      grid.periodic = g.at("periodic").get<bool>();
      const std::size_t d = grid.shape.size();
      const std::size_t oo = g.at("origin_offset").get<std::size_t>(), so = g.at("spacing_offset").get<std::size_t>();
      need(oo, d);
      need(so, d);
      for (std::size_t k = 0; k < d; ++k) {
        grid.origin.push_back(read_double(c.payload, oo + 8 * k));
        grid.spacing.push_back(read_double(c.payload, so + 8 * k));
      }
      ds.grid = grid;
    }
    const json& snaps = m.at("snapshots");
    if (snaps.size() != n) throw Error(ErrorKind::ShapeMismatch, path + ": snapshot count differs from n_snapshots");
    const std::size_t row = ds.spatial_dim + ds.output_dim + 1;
    for (const auto& rec : snaps) {
      const std::size_t p = rec.at("points").get<std::size_t>();
      const std::size_t off = rec.at("offset").get<std::size_t>();
      need(off, p * row);
      Snapshot s{Matrix(ds.spatial_dim, p), Matrix(ds.output_dim, p), Vector(p)};
      std::size_t pos = off;
      for (std::size_t j = 0; j < p; ++j) {
        for (std::size_t k = 0; k < ds.spatial_dim; ++k, pos += 8) s.points(k, j) = read_double(c.payload, pos);
        for (std::size_t k = 0; k < ds.output_dim; ++k, pos += 8) s.values(k, j) = read_double(c.payload, pos);
        s.weights[j] = read_double(c.payload, pos);
        pos += 8;
      }
      ds.snapshots.push_back(std::move(s));
    }
    try {
      ds.validate();
    } catch (const InvalidInput& e) {
      throw Error(ErrorKind::FormatError, path + ": " + e.what());
    }
    return ds;
  });
}

// ---------------------------------------------------------------- checkpoint

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  ckpt.model.validate();
  SectionWriter w;
  json manifest;
  manifest["kind"] = "checkpoint";
  const LrnrFactors& f = ckpt.model.factors;
  manifest["model"] = {{"widths", f.widths},
                       {"activation", to_string(f.activation)},
                       {"ranks", ranks_json(f.ranks())},
                       {"hyper", hyper_shape(ckpt.model.hyper)}};
  for (std::size_t l = 0; l < f.depth(); ++l) {
    const std::string n = std::to_string(l + 1);
    w.put("U" + n, f.layers[l].u);
    w.put("V" + n, f.layers[l].v);
    w.put("B" + n, f.layers[l].b);
  }
  w.put("b_out", f.output_bias);
  put_hyper(w, "", ckpt.model.hyper, ckpt.model.normalizer);
  manifest["history_path"] = ckpt.history_path;
  manifest["config"] = ckpt.config_json;

  if (ckpt.train_state) {
    const TrainState& st = *ckpt.train_state;
    json rng_words = json::array();
    for (auto word : st.rng.words) rng_words.push_back(hex64(word));
    manifest["train_state"] = {{"epoch", st.epoch},
                               {"alpha", st.alpha},
                               {"adam_step", st.adam.step},
                               {"bad_epochs", st.plateau.bad_epochs},
                               {"rng", rng_words},
                               {"rng_has_spare", st.rng.has_spare}};
    const Vector scalars{st.lr, st.plateau.best, st.radius, st.rng.spare};
    w.put("train.scalars", scalars);
    w.put("train.adam_m", st.adam.m);
    w.put("train.adam_v", st.adam.v);
  }

  if (ckpt.hypermodes) {
    const HypermodeBasis& b = *ckpt.hypermodes;
    manifest["hypermodes"] = {{"rbar", b.rbar}, {"n", b.phi.rows()}, {"k", b.singular_values.size()},
                              {"N", b.psi.rows()}, {"times", b.times.size()}};
    w.put("hm.phi", b.phi);
    w.put("hm.singular_values", b.singular_values);
    w.put("hm.psi", b.psi);
    w.put("hm.times", b.times);
  }

  if (ckpt.fast) {
    const FastLrnrModel& fm = *ckpt.fast;
    json hidden = json::array();
    for (std::size_t l = 0; l < fm.hidden.size(); ++l) {
      const auto& h = fm.hidden[l];
      const std::string n = std::to_string(l + 1);
      hidden.push_back({{"rows", h.xi.rows()}, {"rank", h.rank()}, {"indices", h.indices},
                        {"n_singular", h.singular_values.size()}});
      w.put("fast.xi" + n, h.xi);
      w.put("fast.sv" + n, h.singular_values);
      w.put("fast.cond" + n, Vector{h.condition});
    }
    json layers = json::array();
    for (std::size_t l = 0; l < fm.layers.size(); ++l) {
      const auto& fl = fm.layers[l];
      const std::string n = std::to_string(l + 1);
      layers.push_back({{"rows", fl.u_hat.rows()}, {"inputs", fl.v_hat.rows()}});
      w.put("fast.U" + n, fl.u_hat);
      w.put("fast.V" + n, fl.v_hat);
      w.put("fast.B" + n, fl.b_hat);
    }
    w.put("fast.b_out", fm.output_bias);
    w.put("fast.anchors", fm.anchors);
    put_hyper(w, "fast.", fm.hyper, fm.normalizer);
    if (fm.projector) w.put("fast.projector", *fm.projector);
    manifest["fast"] = {{"activation", to_string(fm.activation)},
                        {"ranks", ranks_json(fm.ranks)},
                        {"full_width", fm.full_width},
                        {"hidden", hidden},
                        {"layers", layers},
                        {"anchor_count", fm.anchors.cols()},
                        {"hyper", hyper_shape(fm.hyper)},
                        {"projector_cols", fm.projector ? json(fm.projector->cols()) : json(nullptr)},
                        {"warnings", fm.warnings}};
  }
  manifest["sections"] = w.sections();
  write_file_atomic(path, compose(kCheckpointMagic, kCheckpointVersion, manifest, w.payload()));
}

Checkpoint load_checkpoint(const std::string& path) {
  const Container c = parse(read_file(path), kCheckpointMagic, kCheckpointVersion, path);
  return guarded(path, [&] {
    const json& m = c.manifest;
    const SectionReader r(c, path);
    Checkpoint ck;
    const json& mj = m.at("model");
    LrnrFactors& f = ck.model.factors;
    f.widths = mj.at("widths").get<std::vector<std::size_t>>();
    f.activation = parse_activation(mj.at("activation").get<std::string>());
    const RankSpec ranks = ranks_from(mj.at("ranks"));
    if (f.widths.size() != ranks.depth() + 1) throw Error(ErrorKind::ShapeMismatch, path + ": widths/ranks depth mismatch");
    for (std::size_t l = 0; l < ranks.depth(); ++l) {
      const std::string n = std::to_string(l + 1);
      f.layers.push_back({r.matrix("U" + n, f.widths[l + 1], ranks.weight_ranks[l]),
                          r.matrix("V" + n, f.widths[l], ranks.weight_ranks[l]),
                          r.matrix("B" + n, f.widths[l + 1], ranks.bias_ranks[l])});
    }
    f.output_bias = r.vector("b_out", f.widths.back());
    ck.model.hyper = get_hyper(r, "", mj.at("hyper"));
    ck.model.normalizer = get_normalizer(r, "");
    try {
      ck.model.validate();
    } catch (const InvalidInput& e) {
      throw Error(ErrorKind::ShapeMismatch, path + ": " + e.what());
    }
    ck.history_path = m.value("history_path", std::string());
    ck.config_json = m.value("config", std::string());

    if (m.contains("train_state")) {
      const json& tj = m["train_state"];
      TrainState st;
      st.epoch = tj.at("epoch").get<std::size_t>();
      st.alpha = tj.at("alpha").get<int>();
      st.adam.step = tj.at("adam_step").get<std::uint64_t>();
      st.plateau.bad_epochs = tj.at("bad_epochs").get<std::size_t>();
      const auto words = tj.at("rng").get<std::vector<std::string>>();
      if (words.size() != 4) throw Error(ErrorKind::FormatError, path + ": RNG state needs four words");
      for (std::size_t i = 0; i < 4; ++i) st.rng.words[i] = parse_hex64(words[i]);
      st.rng.has_spare = tj.at("rng_has_spare").get<bool>();
      const Vector sc = r.vector("train.scalars", 4);
      st.lr = sc[0];
      st.plateau.best = sc[1];
      st.radius = sc[2];
      st.rng.spare = sc[3];
      const std::size_t np = parameter_count(ck.model);
      st.adam.m = r.vector("train.adam_m", np);
      st.adam.v = r.vector("train.adam_v", np);
      ck.train_state = std::move(st);
    }

    if (m.contains("hypermodes")) {
      const json& hj = m["hypermodes"];
      HypermodeBasis b;
      const std::size_t n = hj.at("n").get<std::size_t>(), k = hj.at("k").get<std::size_t>(),
                        N = hj.at("N").get<std::size_t>();
      b.rbar = hj.at("rbar").get<std::size_t>();
      b.phi = r.matrix("hm.phi", n, k);
      b.singular_values = r.vector("hm.singular_values", k);
      b.psi = r.matrix("hm.psi", N, k);
      b.times = r.vector("hm.times", hj.at("times").get<std::size_t>());
      b.validate();
      ck.hypermodes = std::move(b);
    }

    if (m.contains("fast")) {
      const json& fj = m["fast"];
      FastLrnrModel fm;
      fm.activation = parse_activation(fj.at("activation").get<std::string>());
      fm.ranks = ranks_from(fj.at("ranks"));
      fm.full_width = fj.at("full_width").get<std::size_t>();
      const json& hidden = fj.at("hidden");
      for (std::size_t l = 0; l < hidden.size(); ++l) {
        const std::string n = std::to_string(l + 1);
        HiddenBasisLayer h;
        const std::size_t rows = hidden[l].at("rows").get<std::size_t>(), rank = hidden[l].at("rank").get<std::size_t>();
        h.xi = r.matrix("fast.xi" + n, rows, rank);
        h.singular_values = r.vector("fast.sv" + n, hidden[l].at("n_singular").get<std::size_t>());
        h.indices = hidden[l].at("indices").get<std::vector<std::size_t>>();
        h.condition = r.vector("fast.cond" + n, 1)[0];
        fm.hidden.push_back(std::move(h));
      }
      const json& layers = fj.at("layers");
      if (layers.size() != fm.ranks.depth()) throw Error(ErrorKind::ShapeMismatch, path + ": fast layer count mismatch");
      for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string n = std::to_string(l + 1);
        const std::size_t rows = layers[l].at("rows").get<std::size_t>(), in = layers[l].at("inputs").get<std::size_t>();
        fm.layers.push_back({r.matrix("fast.U" + n, rows, fm.ranks.weight_ranks[l]),
                             r.matrix("fast.V" + n, in, fm.ranks.weight_ranks[l]),
                             r.matrix("fast.B" + n, rows, fm.ranks.bias_ranks[l])});
      }
      fm.output_bias = r.vector("fast.b_out", fm.layers.back().u_hat.rows());
      fm.anchors = r.matrix("fast.anchors", fm.layers.front().v_hat.rows(), fj.at("anchor_count").get<std::size_t>());
      fm.hyper = get_hyper(r, "fast.", fj.at("hyper"));
      fm.normalizer = get_normalizer(r, "fast.");
      if (!fj.at("projector_cols").is_null())
        fm.projector = r.matrix("fast.projector", fm.ranks.total(), fj["projector_cols"].get<std::size_t>());
      fm.warnings = fj.at("warnings").get<std::vector<std::string>>();
      try {
        fm.validate();
      } catch (const InvalidInput& e) {
        throw Error(ErrorKind::ShapeMismatch, path + ": " + e.what());
      }
      ck.fast = std::move(fm);
    }
    return ck;
  });
}

// ---------------------------------------------------------------- ingestion

WaveDataset ingest_amr_tables(const std::vector<std::pair<double, std::string>>& snapshots,
                              std::size_t spatial_dim, std::size_t output_dim) {
  if (snapshots.empty()) throw InvalidInput("ingest_amr_tables: no snapshot tables");
  WaveDataset ds;
  ds.spatial_dim = spatial_dim;
  ds.output_dim = output_dim;
  ds.grid_kind = GridKind::Adaptive;
  const std::size_t cols = spatial_dim + output_dim + 1;
  for (const auto& [t, path] : snapshots) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
    std::vector<Vector> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::istringstream ls(line);
      Vector row;
      double v;
      while (ls >> v) row.push_back(v);
      if (!ls.eof()) throw Error(ErrorKind::FormatError, path + ":" + std::to_string(lineno) + ": non-numeric entry");
      if (row.empty()) continue;
      if (row.size() != cols) {
        std::ostringstream msg;
        msg << path << ":" << lineno << ": expected " << cols << " columns, found " << row.size();
        throw Error(ErrorKind::ShapeMismatch, msg.str());
      }
      rows.push_back(std::move(row));
    }
    Snapshot s{Matrix(spatial_dim, rows.size()), Matrix(output_dim, rows.size()), Vector(rows.size())};
    for (std::size_t j = 0; j < rows.size(); ++j) {
      for (std::size_t k = 0; k < spatial_dim; ++k) s.points(k, j) = rows[j][k];
      for (std::size_t k = 0; k < output_dim; ++k) s.values(k, j) = rows[j][spatial_dim + k];
      s.weights[j] = rows[j].back();
    }
    ds.times.push_back(t);
    ds.snapshots.push_back(std::move(s));
  }
  ds.validate();
  return ds;
}

}  // namespace lrnr
