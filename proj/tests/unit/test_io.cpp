// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "mrgnf/io/codecs.hpp"
#include "mrgnf/io/config.hpp"
#include "mrgnf/io/manifest.hpp"
#include "mrgnf/synth.hpp"
#include "mrgnf/mesh.hpp"

using namespace mrgnf;
using namespace mrgnf::io;

namespace {

std::string temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("mrgnf_io_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

void expect_same(const TriMesh& a, const TriMesh& b) {
  ASSERT_EQ(a.vertices.size(), b.vertices.size());
  for (std::size_t i = 0; i < a.vertices.size(); ++i) {
    ASSERT_EQ(a.vertices[i].lon, b.vertices[i].lon) << i;
    ASSERT_EQ(a.vertices[i].lat, b.vertices[i].lat) << i;
  }
  EXPECT_EQ(a.triangles, b.triangles);
  EXPECT_EQ(a.zone, b.zone);
  EXPECT_EQ(a.edges, b.edges);
  EXPECT_EQ(a.roi.lon_min, b.roi.lon_min);
  EXPECT_EQ(a.spacing.s_belt, b.spacing.s_belt);
}

template <typename F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

RectGrid<float> random_grid(std::mt19937_64& rng, bool mask) {
  std::uniform_int_distribution<int> dim(2, 9);
  const std::size_t w = std::size_t(dim(rng)), h = std::size_t(dim(rng)), c = std::size_t(dim(rng) - 1);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < c; ++i) names.push_back("v" + std::to_string(i));
  auto g = make_grid<float>(-20.25, 40.5, 0.25, w, h, names);
  std::normal_distribution<float> nd;
  for (auto& x : g.data) x = nd(rng);
  if (mask) {
    g.water_mask.resize(w * h);
    for (auto& m : g.water_mask) m = std::uint8_t(rng() & 1);
  }
  return g;
}

}  // namespace

TEST(MeshCodec, RoundTripsBitExactly) {
  const auto m = build_mesh(Ellipsoid{}, RoiSpec{}, SpacingSpec{1.0, 2.0, 4.0}, 5);
  const auto back = mesh_from_json(mesh_to_json(m));
  expect_same(m, back);
  EXPECT_EQ(mesh_to_json(back), mesh_to_json(m));
}

TEST(MeshCodec, RejectsBrokenDocuments) {
  const auto m = build_mesh(Ellipsoid{}, RoiSpec{}, SpacingSpec{1.0, 2.0, 4.0}, 5);
  auto j = nlohmann::ordered_json::parse(mesh_to_json(m));
  j["version"] = 99;
  EXPECT_THROW(mesh_from_json(j.dump()), std::exception);
  j = nlohmann::ordered_json::parse(mesh_to_json(m));
  j["triangles"][0][1] = 1000000;
  EXPECT_THROW(mesh_from_json(j.dump()), std::exception);
  EXPECT_THROW(mesh_from_json("{"), std::exception);
}

TEST(StatsCodec, RoundTrip) {
  ChannelStats s{{"t2m", "tp_log"}, {281.25, 0.1234567890123}, {6.5, 1e-3}, {100, 100}};
  const auto b = stats_from_json(stats_to_json(s));
  EXPECT_EQ(b.channel_names, s.channel_names);
  EXPECT_EQ(b.mean, s.mean);
  EXPECT_EQ(b.std, s.std);
  EXPECT_EQ(b.count, s.count);
}

TEST(RgridCodec, RandomRoundTrips) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto g = random_grid(rng, trial % 2 == 0);
    const auto b = decode_rgrid(encode_rgrid(g));
    ASSERT_EQ(b.lons, g.lons);
    ASSERT_EQ(b.lats, g.lats);
    ASSERT_EQ(b.channel_names, g.channel_names);
    ASSERT_EQ(std::memcmp(b.data.data(), g.data.data(), g.data.size() * 4), 0);
    ASSERT_EQ(b.water_mask, g.water_mask);
  }
}

TEST(RgridCodec, WarnsOnNonFinite) {
  std::mt19937_64 rng(12);
  auto g = random_grid(rng, false);
  g.data[1] = std::numeric_limits<float>::quiet_NaN();
  std::vector<std::string> warnings;
  const auto b = decode_rgrid(encode_rgrid(g), &warnings);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("1 non-finite"), std::string::npos);
  EXPECT_TRUE(std::isnan(b.data[1]));
}

TEST(RgridCodec, RejectsTruncationAndTrailingBytes) {
  std::mt19937_64 rng(13);
  const auto bytes = encode_rgrid(random_grid(rng, true));
  for (std::size_t cut : {std::size_t(3), std::size_t(10), bytes.size() / 2, bytes.size() - 1})
    EXPECT_THROW(decode_rgrid(bytes.substr(0, cut)), FormatError) << cut;
  EXPECT_THROW(decode_rgrid(bytes + "x"), FormatError);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_rgrid(bad), FormatError);
}

TEST(TensorCodec, RoundTrip) {
  NodeTensor<float> x(3, 2, 5, {"a", "b"});
  x.timestamps = {-6, 0, 6};
  std::iota(x.data.begin(), x.data.end(), -4.5f);
  const auto b = decode_tensor(encode_tensor(x));
  EXPECT_EQ(b.frames, 3u);
  EXPECT_EQ(b.channel_names, x.channel_names);
  EXPECT_EQ(b.timestamps, x.timestamps);
  EXPECT_EQ(b.data, x.data);
  const auto bytes = encode_tensor(x);
  EXPECT_THROW(decode_tensor(bytes.substr(0, bytes.size() - 2)), FormatError);
}

TEST(CheckpointCodec, RoundTripPreservesForward) {
  auto p = init_params<float>(tiny_config(), TokenLayout::standard(), 21);
  fixtures::jitter(p, 22, 0.1);
  const auto b = decode_checkpoint(encode_checkpoint(p));
  EXPECT_EQ(b.data, p.data);
  EXPECT_EQ(b.config.embed, p.config.embed);
  EXPECT_EQ(b.tokens.tokens.size(), p.tokens.tokens.size());
  const auto g = fixtures::lattice_graph(4, 4);
  const auto h = fixtures::random_vector<float>(2 * 21 * 16, 23);
  const auto s = fixtures::random_vector<float>(8 * 16, 24);
  const auto a1 = core_forward(p, h.data(), encode_statics(p, s.data(), 16), g, false).prediction;
  const auto a2 = core_forward(b, h.data(), encode_statics(b, s.data(), 16), g, false).prediction;
  EXPECT_EQ(a1, a2);
}

TEST(CheckpointCodec, TruncationNamesTheBlob) {
  const auto p = init_params<float>(tiny_config(), TokenLayout::standard(), 25);
  const auto bytes = encode_checkpoint(p);
  const auto msg = error_of([&] { decode_checkpoint(bytes.substr(0, bytes.size() - 6)); });
  const auto& last = p.layout.tensors().back().name;
  EXPECT_NE(msg.find("checksum error in blob '" + last + "'"), std::string::npos) << msg;
}

TEST(CheckpointCodec, CorruptionNamesTheBlob) {
  const auto p = init_params<float>(tiny_config(), TokenLayout::standard(), 26);
  auto bytes = encode_checkpoint(p);
  bytes[bytes.size() - 8] ^= 0x40;  // inside the last payload
  const auto msg = error_of([&] { decode_checkpoint(bytes); });
  EXPECT_NE(msg.find("checksum error in blob '" + p.layout.tensors().back().name + "'"), std::string::npos) << msg;
  auto bad = encode_checkpoint(p);
  bad[4] = 7;
  EXPECT_NE(error_of([&] { decode_checkpoint(bad); }).find("unsupported version"), std::string::npos);
  bad = encode_checkpoint(p);
  bad[1] = 'Q';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
}

TEST(RunConfigText, EmptyGivesDefaults) {
  const auto c = parse_config_text("");
  EXPECT_EQ(c.rollout.steps, RolloutConfig{}.steps);
  EXPECT_EQ(c.train.batch_size, TrainConfig{}.batch_size);
  EXPECT_EQ(c.model.embed, ModelConfig{}.embed);
}

TEST(RunConfigText, ParsesKeysAndComments) {
  const auto c = parse_config_text("# rollout\nsteps = 4\n\nlearning_rate=5e-4  # smaller\njoint=true\n");
  EXPECT_EQ(c.rollout.steps, 4u);
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 5e-4);
  EXPECT_TRUE(c.train.joint);
  EXPECT_EQ(parse_config_text(dump_config(c)).rollout.steps, 4u);
  EXPECT_EQ(dump_config(parse_config_text(dump_config(c))), dump_config(c));
}

TEST(RunConfigText, ErrorsNameTheKey) {
  auto msg = error_of([] { parse_config_text("stepz=4\n"); });
  EXPECT_NE(msg.find("unknown key 'stepz'"), std::string::npos) << msg;
  msg = error_of([] { parse_config_text("steps=four\n"); });
  EXPECT_NE(msg.find("steps"), std::string::npos) << msg;
  msg = error_of([] { parse_config_text("steps=-1\n"); });
  EXPECT_NE(msg.find("steps"), std::string::npos) << msg;
  msg = error_of([] { parse_config_text("steps=2\nsteps=3\n"); });
  EXPECT_NE(msg.find("duplicate key 'steps'"), std::string::npos) << msg;
  msg = error_of([] { parse_config_text("joint=maybe\n"); });
  EXPECT_NE(msg.find("joint"), std::string::npos) << msg;
  msg = error_of([] { parse_config_text("steps\n"); });
  EXPECT_NE(msg.find(":1:"), std::string::npos) << msg;
  EXPECT_THROW(parse_config_text("steps=0\n"), ConfigError);
  EXPECT_THROW(parse_config_text("embed=30\nheads=4\n"), ConfigError);
}

TEST(Manifest, KnownDigest) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Manifest, WriteVerifyTamper) {
  const auto dir = temp_dir("manifest");
  const auto in = dir + "/input.txt", out = dir + "/out/result.bin";
  std::filesystem::create_directories(dir + "/out");
  write_file(in, "input");
  write_file(out, "result");
  write_manifest(dir, make_manifest("train", "steps=4\n", 9, {in}, dir, {out}));
  write_manifest(dir, make_manifest("eval", "", 9, {}, dir, {}));
  write_manifest(dir, make_manifest("train", "steps=5\n", 9, {in}, dir, {out}));  // replaces
  const auto entries = read_manifest(dir);
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[1].command, "train");
  EXPECT_EQ(entries[1].config, "steps=5\n");
  EXPECT_EQ(entries[1].outputs[0].path, "out/result.bin");
  EXPECT_EQ(entries[1].seed, 9u);
  EXPECT_EQ(entries[1].tool_version, kToolVersion);
  EXPECT_TRUE(verify_manifest(dir).empty());
  write_file(out, "tampered");
  const auto bad = verify_manifest(dir);
  ASSERT_EQ(bad.size(), 1u);
  EXPECT_EQ(bad[0], "out/result.bin");
  std::filesystem::remove_all(dir);
}

TEST(ChannelCodec, RoundTripsDefaults) {
  auto specs = default_channel_specs();
  specs[0].mask_class = MaskClass::Land;
  const auto back = channel_specs_from_json(channel_specs_to_json(specs));
  ASSERT_EQ(back.size(), specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    EXPECT_EQ(back[i].name, specs[i].name);
    EXPECT_EQ(back[i].variable(), specs[i].variable());
    EXPECT_EQ(back[i].kind, specs[i].kind);
    EXPECT_EQ(back[i].level, specs[i].level);
    EXPECT_EQ(back[i].transform, specs[i].transform);
    EXPECT_EQ(back[i].mask_class, specs[i].mask_class);
  }
  EXPECT_THROW(channel_specs_from_json(R"([{"name":"t","kind":"bogus"}])"), FormatError);
  EXPECT_THROW(channel_specs_from_json(R"([{"name":"t","kind":"pressure_level","level":700}])"), FormatError);
  EXPECT_THROW(channel_specs_from_json("[]"), FormatError);
}

TEST(CheckpointCodec, EveryTruncationIsDiagnosed) {
  const auto p = init_params<float>(tiny_config(), TokenLayout::standard(), 27);
  const auto bytes = encode_checkpoint(p);
  const auto& layout = p.layout.tensors();
  for (std::size_t cut = 1; cut <= 200; ++cut) {
    const auto msg = error_of([&] { decode_checkpoint(bytes.substr(0, bytes.size() - cut)); });
    bool named = false;
    for (const auto& t : layout) named = named || msg.find("checksum error in blob '" + t.name + "'") != std::string::npos;
    ASSERT_TRUE(named) << cut << ": " << msg;
  }
}
