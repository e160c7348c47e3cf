// SPDX-License-Identifier: Apache-2.0
//
// mrgnf: mesh building, regridding, synthetic data, training, rollout and scoring.
// Diagnostics go to stderr; stdout carries only data or the paths written.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrgnf/io/codecs.hpp"
#include "mrgnf/io/config.hpp"
#include "mrgnf/io/manifest.hpp"
#include "mrgnf/mesh.hpp"
#include "mrgnf/mesh_quality.hpp"
#include "mrgnf/regrid.hpp"
#include "mrgnf/rollout.hpp"
#include "mrgnf/stats.hpp"
#include "mrgnf/synth.hpp"
#include "mrgnf/train.hpp"

namespace fs = std::filesystem;
using namespace mrgnf;
using namespace mrgnf::io;
using json = nlohmann::ordered_json;

namespace {

struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string parent_dir(const std::string& file) {
  const auto p = fs::path(file).parent_path();
  return p.empty() ? std::string(".") : p.string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CliError("cannot create directory '" + dir + "': " + ec.message());
}

void need_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw CliError("no such file: " + path);
}

// Collects the files a command writes into one directory and records them in its manifest.
class Outputs {
 public:
  explicit Outputs(std::string dir) : dir_(std::move(dir)) { ensure_dir(dir_); }

  std::string path(const std::string& name) const { return (fs::path(dir_) / name).string(); }

  std::string add(const std::string& name, const std::string& bytes) {
    const auto p = path(name);
    write_file(p, bytes);
    files_.push_back(p);
    return p;
  }
  void adopt(const std::string& p) { files_.push_back(p); }

  void finish(const std::string& command, const std::string& config, std::uint64_t seed,
              const std::vector<std::string>& inputs) const {
    write_manifest(dir_, make_manifest(command, config, seed, inputs, dir_, files_));
  }

 private:
  std::string dir_;
  std::vector<std::string> files_;
};

std::string read_text_or_empty(const std::string& path) {
  if (path.empty()) return "";
  need_file(path);
  return read_file(path);
}

// Config file text followed by --set overrides (later keys must not repeat earlier ones).
RunConfig load_config(const std::string& path, const std::vector<std::string>& sets) {
  std::string text = read_text_or_empty(path);
  if (!text.empty() && text.back() != '\n') text += '\n';
  for (const auto& s : sets) text += s + "\n";
  return parse_config_text(text, path.empty() ? "config" : path);
}

std::vector<double> numbers(const std::string& s, std::size_t want, const std::string& flag) {
  std::vector<double> out;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw CliError(flag + ": '" + tok + "' is not a number");
    }
  }
  if (out.size() != want) throw CliError(flag + ": expected " + std::to_string(want) + " comma-separated values");
  return out;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

// ---------------------------------------------------------------- datasets on disk

struct DiskDataset {
  TriMesh mesh;
  Dataset data;
  std::vector<std::string> files;  ///< every file read
};

DiskDataset load_dataset(const std::string& dir) {
  const auto index = (fs::path(dir) / "dataset.json").string();
  need_file(index);
  DiskDataset d;
  json j;
  try {
    j = json::parse(read_file(index));
  } catch (const std::exception& e) {
    throw FormatError(index + ": " + e.what());
  }
  d.files.push_back(index);
  const auto mesh_path = (fs::path(dir) / j.at("mesh").get<std::string>()).string();
  d.mesh = read_mesh(mesh_path);
  d.files.push_back(mesh_path);
  const auto statics_path = (fs::path(dir) / j.at("statics").get<std::string>()).string();
  d.data.statics = read_tensor(statics_path);
  d.files.push_back(statics_path);
  for (const auto& s : j.at("sequences")) {
    const auto p = (fs::path(dir) / s.at("file").get<std::string>()).string();
    d.data.sequences.push_back(read_tensor(p));
    d.files.push_back(p);
  }
  const std::size_t N = d.mesh.vertices.size();
  if (d.data.statics.nodes != N) throw FormatError(statics_path + ": node count does not match the mesh");
  for (std::size_t s = 0; s < d.data.sequences.size(); ++s)
    if (d.data.sequences[s].nodes != N) throw FormatError(d.files[3 + s] + ": node count does not match the mesh");
  if (d.data.sequences.empty()) throw FormatError(index + ": no sequences");
  return d;
}

ChannelStats train_stats(const Dataset& d) {
  const auto idx = d.indices(Split::Train);
  if (idx.empty()) throw CliError("dataset has no training sequences");
  WelfordState w;
  for (auto i : idx) welford_accumulate(w, d.sequences[i]);
  return ChannelStats::from_welford(w, d.sequences[idx[0]].channel_names);
}

std::string sibling(const std::string& file, const std::string& name) {
  return (fs::path(parent_dir(file)) / name).string();
}

void check_model_matches(const Params<float>& p, const Dataset& d) {
  if (p.config.channels != d.sequences[0].channels) throw CliError("checkpoint channel count does not match the data");
  if (p.config.statics != d.statics.channels) throw CliError("checkpoint statics count does not match the data");
}

void check_stats_match(const ChannelStats& s, const Dataset& d) {
  if (s.channel_names != d.sequences[0].channel_names) throw CliError("stats channels do not match the data");
}

// ---------------------------------------------------------------- images

// Binary 8-bit PGM.
std::string pgm(std::size_t w, std::size_t h, const std::vector<std::uint8_t>& px) {
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.append(reinterpret_cast<const char*>(px.data()), px.size());
  return out;
}

std::vector<std::uint8_t> to_gray(const std::vector<double>& v) {
  double lo = 1e300, hi = -1e300;
  for (double x : v)
    if (std::isfinite(x)) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  std::vector<std::uint8_t> px(v.size(), 0);
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (std::isfinite(v[i])) px[i] = std::uint8_t(std::lround(255.0 * (v[i] - lo) / span));
  return px;
}

// Nearest-node raster of one field over the ROI box, north up.
std::vector<double> raster(const TriMesh& mesh, const float* field, std::size_t w, std::size_t h) {
  const auto& roi = mesh.roi;
  std::vector<std::size_t> nodes;
  for (std::size_t n = 0; n < mesh.vertices.size(); ++n)
    if (mesh.zone[n] == Zone::Roi) nodes.push_back(n);
  if (nodes.empty()) throw CliError("mesh has no ROI nodes to plot");
  const double c = std::cos(roi.center_lat() * kDegToRad);
  std::vector<double> img(w * h);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const double lat = roi.lat_max - (double(i) + 0.5) / double(h) * (roi.lat_max - roi.lat_min);
      const double lon = roi.lon_min + (double(j) + 0.5) / double(w) * (roi.lon_max - roi.lon_min);
      double best = 1e300;
      std::size_t arg = nodes[0];
      for (auto n : nodes) {
        const double dx = wrap_lon(mesh.vertices[n].lon - lon) * c, dy = mesh.vertices[n].lat - lat;
        const double d = dx * dx + dy * dy;
        if (d < best) {
          best = d;
          arg = n;
        }
      }
      img[i * w + j] = field[arg];
    }
  return img;
}

struct MetricRow {
  std::string channel;
  std::size_t lead = 0;
  double rmse = 0, mae = 0;
};

std::vector<MetricRow> read_metrics(const std::string& path) {
  need_file(path);
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "channel,lead,lead_hours,rmse,mae")
    throw FormatError(path + ": not a metrics table");
  std::vector<MetricRow> rows;
  for (int lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string tok;
    while (std::getline(ls, tok, ',')) f.push_back(tok);
    try {
      if (f.size() != 5) throw std::invalid_argument("field count");
      rows.push_back({f[0], std::stoul(f[1]), std::stod(f[3]), std::stod(f[4])});
    } catch (const std::exception&) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": malformed row");
    }
  }
  if (rows.empty()) throw FormatError(path + ": no rows");
  return rows;
}

// ---------------------------------------------------------------- commands

void cmd_mesh_build(const std::string& roi_s, const std::string& margins_s, const std::string& spacing_s,
                    std::uint64_t seed, const std::string& out) {
  RoiSpec roi;
  const auto r = numbers(roi_s, 4, "--roi");
  roi.lon_min = r[0];
  roi.lon_max = r[1];
  roi.lat_min = r[2];
  roi.lat_max = r[3];
  if (!margins_s.empty()) {
    const auto m = numbers(margins_s, 4, "--margins");
    roi.belt_dlon = m[0];
    roi.belt_dlat = m[1];
    roi.outer_dlon = m[2];
    roi.outer_dlat = m[3];
  }
  const auto s = numbers(spacing_s, 3, "--spacing");
  const SpacingSpec sp{s[0], s[1], s[2]};
  const auto mesh = build_mesh(Ellipsoid{}, roi, sp, seed);
  Outputs o(parent_dir(out));
  std::cout << o.add(fs::path(out).filename().string(), mesh_to_json(mesh)) << '\n';
  const std::string cfg = "roi=" + roi_s + "\nmargins=" + margins_s + "\nspacing=" + spacing_s + "\n";
  o.finish("mesh-build", cfg, seed, {});
}

void cmd_mesh_report(const std::string& mesh_path, const std::string& out) {
  need_file(mesh_path);
  const auto mesh = read_mesh(mesh_path);
  const auto q = compute_quality(mesh, mesh.roi, mesh.spacing);
  json hist = json::object();
  for (const auto& [deg, n] : q.degree_histogram) hist[std::to_string(deg)] = n;
  std::size_t zones[3] = {0, 0, 0};
  for (auto z : mesh.zone) ++zones[std::size_t(z)];
  const json j{{"V", q.V},
               {"E", q.E},
               {"F", q.F},
               {"euler", std::int64_t(q.V) - std::int64_t(q.E) + std::int64_t(q.F)},
               {"nodes_roi", zones[0]},
               {"nodes_belt", zones[1]},
               {"nodes_outer", zones[2]},
               {"degree_mean", q.degree_mean},
               {"degree_histogram", hist},
               {"min_angle_mean", q.min_angle_mean},
               {"max_angle_mean", q.max_angle_mean},
               {"min_angle_min", q.min_angle_min},
               {"min_angle_p5", q.min_angle_p5},
               {"min_angle_p95", q.min_angle_p95},
               {"compactness_mean", q.compactness_mean},
               {"h_r_mean", q.h_r_mean}};
  Outputs o(parent_dir(out));
  std::cout << o.add(fs::path(out).filename().string(), j.dump(2) + "\n") << '\n';
  o.finish("mesh-report", "", 0, {mesh_path});
}

void cmd_regrid(const std::string& mesh_path, const std::string& roi_g, const std::string& belt_g,
                const std::string& outer_g, const std::string& channels, std::int64_t time, const std::string& out) {
  for (const auto& p : {mesh_path, roi_g, belt_g, outer_g}) need_file(p);
  const auto mesh = read_mesh(mesh_path);
  std::vector<std::string> warnings;
  const auto a = read_rgrid(roi_g, &warnings), b = read_rgrid(belt_g, &warnings), c = read_rgrid(outer_g, &warnings);
  for (const auto& w : warnings) std::cerr << "mrgnf: warning: " << w << '\n';
  std::vector<ChannelSpec> specs;
  std::vector<std::string> inputs{mesh_path, roi_g, belt_g, outer_g};
  if (channels.empty()) {
    specs = default_channel_specs();
  } else {
    need_file(channels);
    specs = channel_specs_from_json(read_file(channels));
    inputs.push_back(channels);
  }
  ZoneGrids<float> zg;
  zg.set(Zone::Roi, a);
  zg.set(Zone::Belt, b);
  zg.set(Zone::Outer, c);
  auto x = zone_sample(mesh, zg, specs);
  x.timestamps[0] = time;
  Outputs o(parent_dir(out));
  std::cout << o.add(fs::path(out).filename().string(), encode_tensor(x)) << '\n';
  o.finish("regrid", "time=" + std::to_string(time) + "\n", 0, inputs);
}

void cmd_stats(const std::vector<std::string>& nodes, const std::string& data_dir, const std::string& split_s,
               const std::string& out) {
  std::vector<NodeTensor<float>> tensors;
  std::vector<std::string> inputs;
  if (!data_dir.empty()) {
    auto d = load_dataset(data_dir);
    tensors = std::move(d.data.sequences);
    inputs = d.files;
  }
  for (const auto& p : nodes) {
    need_file(p);
    tensors.push_back(read_tensor(p));
    inputs.push_back(p);
  }
  if (tensors.empty()) throw CliError("stats needs --nodes or --data");
  const bool all = split_s == "all";
  const Split split = all ? Split::Train : parse_split(split_s);
  WelfordState w;
  const auto& names = tensors[0].channel_names;
  std::vector<double> frame(names.size());
  for (const auto& x : tensors) {
    if (x.channel_names != names) throw CliError("node tensors disagree on channel names");
    if (w.channels() == 0) w = WelfordState(names.size());
    for (std::size_t t = 0; t < x.frames; ++t) {
      if (!all && split_of(x.timestamps[t]) != split) continue;
      for (std::size_t n = 0; n < x.nodes; ++n) {
        for (std::size_t c = 0; c < x.channels; ++c) frame[c] = x.at(t, c, n);
        welford_update(w, frame.data());
      }
    }
  }
  if (w.count == 0) throw CliError("no frames fall in split '" + split_s + "'");
  Outputs o(parent_dir(out));
  std::cout << o.add(fs::path(out).filename().string(), stats_to_json(ChannelStats::from_welford(w, names))) << '\n';
  o.finish("stats", "split=" + split_s + "\n", 0, inputs);
}

void cmd_synth(const std::string& mesh_path, std::size_t n, std::uint64_t seed, std::size_t frames, bool grids,
               const std::string& out) {
  need_file(mesh_path);
  const auto mesh = read_mesh(mesh_path);
  SynthConfig sc;
  sc.sequences = n;
  sc.seed = seed;
  sc.frames = frames;
  const auto d = synth_dataset(mesh, sc);
  Outputs o(out);
  o.add("mesh.json", mesh_to_json(mesh));
  o.add("statics.bin", encode_tensor(d.statics));
  json seqs = json::array();
  for (std::size_t s = 0; s < d.sequences.size(); ++s) {
    char name[32];
    std::snprintf(name, sizeof name, "seq_%04zu.bin", s);
    o.add(name, encode_tensor(d.sequences[s]));
    seqs.push_back({{"file", name}, {"split", split_name(d.split(s))}, {"start_hours", d.sequences[s].timestamps[0]}});
  }
  if (grids) {
    // the raw fields behind sequence 0, frame 0, for the regrid command
    const auto g = synth_grids(mesh.roi, mesh.spacing, synth_sequence(mesh, sc, 0), 0.0);
    for (std::size_t z = 0; z < 3; ++z) o.add("grid_" + std::string(zone_name(Zone(z))) + ".rgrid", encode_rgrid(g[z]));
    o.add("channels.json", channel_specs_to_json(default_channel_specs()));
  }
  const json idx{{"version", 1},
                 {"mesh", "mesh.json"},
                 {"statics", "statics.bin"},
                 {"seed", seed},
                 {"frames", frames},
                 {"channels", d.sequences[0].channel_names},
                 {"sequences", seqs}};
  std::cout << o.add("dataset.json", idx.dump(2) + "\n") << '\n';
  const std::string cfg = "n=" + std::to_string(n) + "\nframes=" + std::to_string(frames) + "\n";
  o.finish("synth", cfg, seed, {mesh_path});
}

void cmd_model_init(const std::string& config, const std::vector<std::string>& sets, const std::string& out) {
  const auto rc = load_config(config, sets);
  const auto p = init_params<float>(rc.model, TokenLayout::standard(), rc.model_seed);
  Outputs o(parent_dir(out));
  std::cout << o.add(fs::path(out).filename().string(), encode_checkpoint(p)) << '\n';
  o.finish("model-init", dump_config(rc), rc.model_seed, config.empty() ? std::vector<std::string>{} : std::vector{config});
}

void cmd_model_info(const std::string& ckpt) {
  need_file(ckpt);
  const auto p = read_checkpoint(ckpt);
  std::cout << "param_count " << param_count(p.config, p.tokens) << '\n';
  std::cout << "core_param_count " << core_param_count(p.config, p.tokens) << '\n';
  std::cout << "allocated " << p.data.size() << '\n';
  for (const auto& t : p.layout.tensors()) std::cout << t.name << ' ' << t.rows << 'x' << t.cols << '\n';
}

struct TrainArgs {
  std::string data, config, init, ckpt, stats, out, head;
  std::vector<std::string> sets;
};

void write_summary(Outputs& o, const TrainResult& r, json extra = json::object()) {
  json j{{"initial_val", r.initial_val},
         {"best_val", r.best_val},
         {"best_step", r.best_step},
         {"steps_run", r.steps_run},
         {"stopped_early", r.stopped_early}};
  for (auto& [k, v] : extra.items()) j[k] = v;
  o.add("summary.json", j.dump(2) + "\n");
}

void cmd_train(const TrainArgs& a) {
  const auto rc = load_config(a.config, a.sets);
  const auto d = load_dataset(a.data);
  std::vector<std::string> inputs = d.files;
  if (!a.config.empty()) inputs.push_back(a.config);
  Params<float> p;
  if (a.init.empty()) {
    p = init_params<float>(rc.model, TokenLayout::standard(), rc.model_seed);
  } else {
    need_file(a.init);
    p = read_checkpoint(a.init);
    inputs.push_back(a.init);
  }
  check_model_matches(p, d.data);
  const auto stats = train_stats(d.data);
  const auto train = StandardizedData::build(d.data, d.data.indices(Split::Train), stats);
  const auto val = StandardizedData::build(d.data, d.data.indices(Split::Val), stats);
  const auto g = make_graph(d.mesh.vertices.size(), d.mesh.edges);
  std::ostringstream log, vlog;
  const auto r = train_core(p, train, val, g, rc.train, &log, &vlog);
  Outputs o(a.out);
  o.add("stats.json", stats_to_json(stats));
  o.add("train_log.csv", log.str());
  o.add("val_log.csv", vlog.str());
  o.add("config.ini", dump_config(rc));
  write_summary(o, r);
  std::cout << o.add("model.ckpt", encode_checkpoint(r.params)) << '\n';
  std::cerr << "mrgnf: train: " << r.steps_run << " steps, val " << fmt(r.initial_val) << " -> " << fmt(r.best_val)
            << " (best at step " << r.best_step << ")\n";
  o.finish("train", dump_config(rc), rc.train.seed, inputs);
}

void cmd_finetune(const TrainArgs& a) {
  const auto kind = parse_head(a.head);
  const auto rc = load_config(a.config, a.sets);
  const auto d = load_dataset(a.data);
  need_file(a.ckpt);
  const auto stats_path = a.stats.empty() ? sibling(a.ckpt, "stats.json") : a.stats;
  need_file(stats_path);
  std::vector<std::string> inputs = d.files;
  for (const auto& p : {a.ckpt, stats_path}) inputs.push_back(p);
  if (!a.config.empty()) inputs.push_back(a.config);
  const auto p = read_checkpoint(a.ckpt);
  check_model_matches(p, d.data);
  const auto stats = read_stats(stats_path);
  check_stats_match(stats, d.data);
  const auto train = StandardizedData::build(d.data, d.data.indices(Split::Train), stats);
  const auto val = StandardizedData::build(d.data, d.data.indices(Split::Val), stats);
  const auto g = make_graph(d.mesh.vertices.size(), d.mesh.edges);
  std::ostringstream log, vlog;
  const auto r = fine_tune_head(p, kind, train, val, stats, g, rc.train, rc.precip, &log, &vlog);
  const auto cmp = compare_head(r.params, kind, val, stats, g, rc.precip);
  Outputs o(a.out);
  o.add("stats.json", stats_to_json(stats));
  o.add("train_log.csv", log.str());
  o.add("val_log.csv", vlog.str());
  o.add("config.ini", dump_config(rc));
  write_summary(o, r, {{"head", head_name(kind)}, {"val_core_loss", cmp.core}, {"val_head_loss", cmp.head}});
  std::cout << o.add("model.ckpt", encode_checkpoint(r.params)) << '\n';
  std::cerr << "mrgnf: finetune " << head_name(kind) << ": validation head loss " << fmt(cmp.head) << " vs core "
            << fmt(cmp.core) << '\n';
  o.finish(std::string("finetune-") + head_name(kind), dump_config(rc), rc.train.seed, inputs);
}

void cmd_rollout(const TrainArgs& a, const std::string& split_s, std::size_t steps, bool substitute) {
  auto rc = load_config(a.config, a.sets);
  if (steps) rc.rollout.steps = steps;
  if (substitute) rc.rollout.substitute_heads = true;
  rc.validate();
  const auto d = load_dataset(a.data);
  need_file(a.ckpt);
  const auto stats_path = a.stats.empty() ? sibling(a.ckpt, "stats.json") : a.stats;
  need_file(stats_path);
  std::vector<std::string> inputs = d.files;
  for (const auto& p : {a.ckpt, stats_path}) inputs.push_back(p);
  const auto p = read_checkpoint(a.ckpt);
  check_model_matches(p, d.data);
  const auto stats = read_stats(stats_path);
  check_stats_match(stats, d.data);
  const auto g = make_graph(d.mesh.vertices.size(), d.mesh.edges);
  const auto st = encode_statics(p, d.data.statics.data.data(), g.nodes);
  const std::size_t K = rc.rollout.steps, T = p.config.t_in;
  const auto& names = d.data.sequences[0].channel_names;
  const std::size_t C = names.size(), N = g.nodes;

  std::vector<float> pred, truth;
  std::vector<std::int64_t> times;
  std::size_t samples = 0;
  for (auto s : d.data.indices(parse_split(split_s))) {
    const auto& phys = d.data.sequences[s];
    const auto z = standardize(phys, stats);
    for (std::size_t t0 = 0; t0 + T + K <= phys.frames; ++t0) {
      auto r = rollout(p, z.frame(t0), st, g, rc.rollout, names);
      r.timestamps.assign(K, 0);
      const auto y = destandardize(r, stats);
      pred.insert(pred.end(), y.data.begin(), y.data.end());
      truth.insert(truth.end(), phys.frame(t0 + T), phys.frame(t0 + T + K));
      for (std::size_t k = 0; k < K; ++k) times.push_back(phys.timestamps[t0 + T + k]);
      ++samples;
    }
  }
  if (!samples) throw CliError("split '" + split_s + "' has no windows of " + std::to_string(T + K) + " frames");
  NodeTensor<float> P(samples * K, C, N, names), Y(samples * K, C, N, names);
  P.data = std::move(pred);
  Y.data = std::move(truth);
  P.timestamps = Y.timestamps = times;
  Outputs o(a.out);
  o.add("mesh.json", mesh_to_json(d.mesh));
  o.add("truth.bin", encode_tensor(Y));
  const json info{{"steps", K}, {"samples", samples}, {"split", split_s}, {"substitute_heads", rc.rollout.substitute_heads}};
  o.add("rollout.json", info.dump(2) + "\n");
  std::cout << o.add("pred.bin", encode_tensor(P)) << '\n';
  o.finish("rollout", dump_config(rc), 0, inputs);
}

void cmd_eval(const std::string& pred_p, const std::string& truth_p, std::string mesh_p, std::size_t steps,
              const std::string& out) {
  need_file(pred_p);
  need_file(truth_p);
  if (mesh_p.empty()) mesh_p = sibling(pred_p, "mesh.json");
  need_file(mesh_p);
  std::vector<std::string> inputs{pred_p, truth_p, mesh_p};
  if (!steps) {
    const auto info = sibling(pred_p, "rollout.json");
    if (fs::is_regular_file(info)) {
      steps = json::parse(read_file(info)).at("steps").get<std::size_t>();
      inputs.push_back(info);
    } else {
      steps = RolloutConfig{}.steps;
    }
  }
  const auto m = evaluate(read_tensor(pred_p), read_tensor(truth_p), read_mesh(mesh_p), steps);
  std::ostringstream csv;
  m.write_csv(csv);
  Outputs o(parent_dir(out));
  std::cout << o.add(fs::path(out).filename().string(), csv.str()) << '\n';
  o.finish("eval", "steps=" + std::to_string(steps) + "\n", 0, inputs);
}

void cmd_plot_export(const std::string& metrics, const std::string& pred_p, std::string mesh_p,
                     const std::string& channel, std::size_t width, const std::string& out) {
  const auto rows = read_metrics(metrics);
  std::vector<std::string> inputs{metrics};
  Outputs o(out);
  std::map<std::size_t, std::vector<const MetricRow*>> by_lead;
  std::vector<std::string> channels;
  for (const auto& r : rows) {
    by_lead[r.lead].push_back(&r);
    if (std::find(channels.begin(), channels.end(), r.channel) == channels.end()) channels.push_back(r.channel);
  }
  for (const auto& [lead, rs] : by_lead) {
    std::string csv = "channel,rmse,mae\n";
    for (const auto* r : rs) csv += r->channel + "," + fmt(r->rmse) + "," + fmt(r->mae) + "\n";
    std::cout << o.add("lead_" + std::to_string(lead) + ".csv", csv) << '\n';
  }
  // error growth image: one row per channel, one column per lead, each row scaled to its own range
  const std::size_t L = by_lead.size(), cell = 8;
  std::vector<std::uint8_t> px(channels.size() * cell * L * cell, 0);
  for (std::size_t c = 0; c < channels.size(); ++c) {
    std::vector<double> v;
    for (const auto& [lead, rs] : by_lead) {
      double x = std::nan("");
      for (const auto* r : rs)
        if (r->channel == channels[c]) x = r->rmse;
      v.push_back(x);
    }
    const auto g = to_gray(v);
    for (std::size_t k = 0; k < L; ++k)
      for (std::size_t i = 0; i < cell; ++i)
        for (std::size_t j = 0; j < cell; ++j) px[(c * cell + i) * (L * cell) + k * cell + j] = g[k];
  }
  std::cout << o.add("rmse_by_lead.pgm", pgm(L * cell, channels.size() * cell, px)) << '\n';

  if (!pred_p.empty()) {
    need_file(pred_p);
    if (mesh_p.empty()) mesh_p = sibling(pred_p, "mesh.json");
    need_file(mesh_p);
    inputs.push_back(pred_p);
    inputs.push_back(mesh_p);
    const auto mesh = read_mesh(mesh_p);
    const auto x = read_tensor(pred_p);
    if (x.nodes != mesh.vertices.size()) throw CliError("prediction node count does not match the mesh");
    const auto c = x.channel_index(channel);
    const auto& roi = mesh.roi;
    const auto h = std::max<std::size_t>(
        1, std::size_t(std::lround(double(width) * (roi.lat_max - roi.lat_min) /
                                   ((roi.lon_max - roi.lon_min) * std::cos(roi.center_lat() * kDegToRad)))));
    for (std::size_t k = 0; k < std::min(L, x.frames); ++k) {
      const auto img = raster(mesh, x.frame(k) + c * x.nodes, width, h);
      std::cout << o.add("field_" + channel + "_lead" + std::to_string(k + 1) + ".pgm", pgm(width, h, to_gray(img)))
                << '\n';
    }
  }
  o.finish("plot-export", "channel=" + channel + "\nwidth=" + std::to_string(width) + "\n", 0, inputs);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-resolution graph forecasting toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  std::string out, mesh, roi = "-11,2,49,59", margins, spacing = "0.25,0.5,1.0", channels, split = "train";
  std::string ro_split = "test";
  std::uint64_t seed = 1, synth_seed = 7;
  std::int64_t time = 0;
  std::vector<std::string> nodes;
  std::string roi_grid, belt_grid, outer_grid, metrics, pred, truth, channel = "t2m";
  std::size_t n = 64, frames = 12, steps = 0, width = 160;
  bool grids = false, substitute = false;
  TrainArgs ta;

  auto* mb = app.add_subcommand("mesh-build", "build a multi-resolution mesh");
  mb->add_option("--roi", roi, "lonmin,lonmax,latmin,latmax");
  mb->add_option("--margins", margins, "belt_dlon,belt_dlat,outer_dlon,outer_dlat");
  mb->add_option("--spacing", spacing, "roi,belt,outer spacing in degrees");
  mb->add_option("--seed", seed);
  mb->add_option("--out", out)->required();

  auto* mr = app.add_subcommand("mesh-report", "mesh quality report as JSON");
  mr->add_option("--mesh", mesh)->required();
  mr->add_option("--out", out)->required();

  auto* rg = app.add_subcommand("regrid", "sample zone grids onto mesh nodes");
  rg->add_option("--mesh", mesh)->required();
  rg->add_option("--roi-grid", roi_grid)->required();
  rg->add_option("--belt-grid", belt_grid)->required();
  rg->add_option("--outer-grid", outer_grid)->required();
  rg->add_option("--channels", channels, "channel list JSON (default: the 21 standard channels)");
  rg->add_option("--time", time, "timestamp in hours since 1970");
  rg->add_option("--out", out)->required();

  auto* sc = app.add_subcommand("stats", "per-channel normalization statistics");
  sc->add_option("--nodes", nodes, "node tensor files");
  sc->add_option("--data", ta.data, "synthetic dataset directory");
  sc->add_option("--split", split, "train, val, test or all");
  sc->add_option("--out", out)->required();

  auto* sy = app.add_subcommand("synth", "generate a synthetic dataset");
  sy->add_option("--mesh", mesh)->required();
  sy->add_option("--n", n, "number of sequences");
  sy->add_option("--seed", synth_seed);
  sy->add_option("--frames", frames, "frames per sequence");
  sy->add_flag("--grids", grids, "also write the raw grids of the first frame");
  sy->add_option("--out", out)->required();

  auto* mi = app.add_subcommand("model-init", "initialize a checkpoint");
  mi->add_option("--config", ta.config);
  mi->add_option("--set", ta.sets, "key=value override");
  mi->add_option("--out", out)->required();

  auto* mf = app.add_subcommand("model-info", "print parameter count and shapes");
  mf->add_option("--ckpt", ta.ckpt)->required();

  auto* tr = app.add_subcommand("train", "train the core");
  tr->add_option("--data", ta.data)->required();
  tr->add_option("--config", ta.config);
  tr->add_option("--set", ta.sets, "key=value override");
  tr->add_option("--init", ta.init, "start from this checkpoint");
  tr->add_option("--out", ta.out)->required();

  auto* ft = app.add_subcommand("finetune", "fine-tune a head");
  ft->add_option("--head", ta.head)->required()->check(CLI::IsMember({"wind", "precip"}));
  ft->add_option("--data", ta.data)->required();
  ft->add_option("--ckpt", ta.ckpt)->required();
  ft->add_option("--stats", ta.stats, "default: stats.json next to the checkpoint");
  ft->add_option("--config", ta.config);
  ft->add_option("--set", ta.sets, "key=value override");
  ft->add_option("--out", ta.out)->required();

  auto* ro = app.add_subcommand("rollout", "autoregressive forecasts on a split");
  ro->add_option("--ckpt", ta.ckpt)->required();
  ro->add_option("--data", ta.data)->required();
  ro->add_option("--stats", ta.stats, "default: stats.json next to the checkpoint");
  ro->add_option("--split", ro_split);
  ro->add_option("--steps", steps, "rollout length (default from config)");
  ro->add_flag("--substitute-heads", substitute);
  ro->add_option("--config", ta.config);
  ro->add_option("--set", ta.sets, "key=value override");
  ro->add_option("--out", ta.out)->required();

  auto* ev = app.add_subcommand("eval", "per-lead RMSE and MAE over ROI nodes");
  ev->add_option("--pred", pred)->required();
  ev->add_option("--truth", truth)->required();
  ev->add_option("--mesh", mesh, "default: mesh.json next to the prediction");
  ev->add_option("--steps", steps, "default: from rollout.json next to the prediction");
  ev->add_option("--out", out)->required();

  auto* pe = app.add_subcommand("plot-export", "per-lead CSV tables and PGM images");
  pe->add_option("--metrics", metrics)->required();
  pe->add_option("--pred", pred, "also render forecast fields");
  pe->add_option("--mesh", mesh);
  pe->add_option("--channel", channel);
  pe->add_option("--width", width)->check(CLI::Range(8, 4096));
  pe->add_option("--out", out)->required();

  try {
    CLI11_PARSE(app, argc, argv);
    if (mb->parsed()) cmd_mesh_build(roi, margins, spacing, seed, out);
    if (mr->parsed()) cmd_mesh_report(mesh, out);
    if (rg->parsed()) cmd_regrid(mesh, roi_grid, belt_grid, outer_grid, channels, time, out);
    if (sc->parsed()) cmd_stats(nodes, ta.data, split, out);
    if (sy->parsed()) cmd_synth(mesh, n, synth_seed, frames, grids, out);
    if (mi->parsed()) cmd_model_init(ta.config, ta.sets, out);
    if (mf->parsed()) cmd_model_info(ta.ckpt);
    if (tr->parsed()) cmd_train(ta);
    if (ft->parsed()) cmd_finetune(ta);
    if (ro->parsed()) cmd_rollout(ta, ro_split, steps, substitute);
    if (ev->parsed()) cmd_eval(pred, truth, mesh, steps, out);
    if (pe->parsed()) cmd_plot_export(metrics, pred, mesh, channel, width, out);
  } catch (const std::exception& e) {
    std::cerr << "mrgnf: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
