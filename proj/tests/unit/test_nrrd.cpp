// NRRD subset reader/writer: bit-exact round trips, handcrafted headers,
// and the rejection paths for everything outside the subset.
#include "doctest.h"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "core/common.hpp"
#include "core/nrrd.hpp"
#include "core/rng.hpp"
#include "core/volume.hpp"

using namespace voxpipe;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
  static fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / "voxpipe_nrrd_tests";
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string tmp_file(const std::string& name) {
  static int counter = 0;
  return (tmp_dir() / (std::to_string(counter++) + "_" + name)).string();
}

std::string write_bytes(const std::string& name, const std::string& bytes) {
  std::string path = tmp_file(name);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  return path;
}

// Minimal well-formed int16 file with an adjustable header and payload.
std::string int16_file(const std::string& name, const std::string& header_fields,
                       const std::vector<int16_t>& payload) {
  std::string bytes = "NRRD0004\n" + header_fields + "\n";
  bytes.append(reinterpret_cast<const char*>(payload.data()), payload.size() * 2);
  return write_bytes(name, bytes);
}

const std::string kGoodFields =
    "type: short\n"
    "dimension: 3\n"
    "sizes: 2 2 2\n"
    "spacings: 1 1 1\n"
    "endian: little\n"
    "encoding: raw\n";

Volume random_float_volume(Rng& rng, Dims3 d) {
  Volume v = make_volume(d, Spacing3{2, 2, 3}, VolumeKind::windowed);
  for (float& x : v.data) x = static_cast<float>(rng.uniform());
  return v;
}

}  // namespace

TEST_CASE("float volumes round-trip bit-exactly through raw and gzip") {
  Rng rng(71);
  for (NrrdEncoding enc : {NrrdEncoding::raw, NrrdEncoding::gzip}) {
    Volume v = random_float_volume(rng, Dims3{5, 4, 3});
    std::string path = tmp_file("float.nrrd");
    write_nrrd(v, path, enc);
    Volume r = read_volume_nrrd(path);
    CHECK(r.dims.x == 5);
    CHECK(r.dims.y == 4);
    CHECK(r.dims.z == 3);
    CHECK(r.spacing.x == 2.0);
    CHECK(r.spacing.z == 3.0);
    CHECK(r.kind == VolumeKind::windowed);
    REQUIRE(r.data.size() == v.data.size());
    CHECK(std::memcmp(r.data.data(), v.data.data(), v.data.size() * 4) == 0);
  }
}

TEST_CASE("integer-valued volumes take the compact int16 path and stay exact") {
  Volume v = make_volume(Dims3{3, 2, 2}, Spacing3{1, 1, 2}, VolumeKind::hu);
  float hu = -1024.0f;
  for (float& x : v.data) x = hu++;
  for (NrrdEncoding enc : {NrrdEncoding::raw, NrrdEncoding::gzip}) {
    std::string path = tmp_file("hu.nrrd");
    write_nrrd(v, path, enc);
    Volume r = read_volume_nrrd(path);
    CHECK(r.kind == VolumeKind::hu);
    CHECK(r.data == v.data);
  }
}

TEST_CASE("masks round-trip as binary uint8") {
  Rng rng(73);
  MaskVolume m = make_mask(Dims3{6, 5, 4}, Spacing3{2, 2, 3});
  for (uint8_t& x : m.data) x = rng.uniform() < 0.3 ? 1 : 0;
  for (NrrdEncoding enc : {NrrdEncoding::raw, NrrdEncoding::gzip}) {
    std::string path = tmp_file("mask.nrrd");
    write_nrrd(m, path, enc);
    MaskVolume r = read_mask_nrrd(path);
    CHECK(r.dims.x == m.dims.x);
    CHECK(r.spacing.z == m.spacing.z);
    CHECK(r.data == m.data);
  }
}

TEST_CASE("raw and gzip encodings of one volume read back equal") {
  Rng rng(79);
  Volume v = random_float_volume(rng, Dims3{4, 4, 4});
  std::string p1 = tmp_file("enc_raw.nrrd");
  std::string p2 = tmp_file("enc_gz.nrrd");
  write_nrrd(v, p1, NrrdEncoding::raw);
  write_nrrd(v, p2, NrrdEncoding::gzip);
  Volume a = read_volume_nrrd(p1);
  Volume b = read_volume_nrrd(p2);
  CHECK(a.data == b.data);
  // gzip genuinely compresses the constant-heavy case.
  Volume flat = make_volume(Dims3{32, 32, 8}, Spacing3{1, 1, 1}, VolumeKind::hu);
  std::string praw = tmp_file("flat_raw.nrrd");
  std::string pgz = tmp_file("flat_gz.nrrd");
  write_nrrd(flat, praw, NrrdEncoding::raw);
  write_nrrd(flat, pgz, NrrdEncoding::gzip);
  CHECK(fs::file_size(pgz) < fs::file_size(praw) / 4);
}

TEST_CASE("a handcrafted minimal header parses with x-fastest order") {
  std::string path = int16_file("minimal.nrrd", kGoodFields, {1, 2, 3, 4, 5, 6, 7, 8});
  Volume v = read_volume_nrrd(path);
  CHECK(v.dims.x == 2);
  CHECK(v.dims.y == 2);
  CHECK(v.dims.z == 2);
  CHECK(v.kind == VolumeKind::raw);  // int16 without a content hint
  CHECK(v.at(0, 0, 0) == 1.0f);
  CHECK(v.at(1, 0, 0) == 2.0f);  // x advances first
  CHECK(v.at(0, 1, 0) == 3.0f);
  CHECK(v.at(0, 0, 1) == 5.0f);
  CHECK(v.at(1, 1, 1) == 8.0f);
}

TEST_CASE("space directions provide diagonal spacing") {
  std::string fields =
      "type: short\n"
      "dimension: 3\n"
      "sizes: 1 1 2\n"
      "space directions: (2,0,0) (0,2.5,0) (0,0,3)\n"
      "endian: little\n"
      "encoding: raw\n";
  std::string path = int16_file("sd.nrrd", fields, {7, 9});
  Volume v = read_volume_nrrd(path);
  CHECK(v.spacing.x == 2.0);
  CHECK(v.spacing.y == 2.5);
  CHECK(v.spacing.z == 3.0);

  std::string bad =
      "type: short\n"
      "dimension: 3\n"
      "sizes: 1 1 2\n"
      "space directions: (2,0.1,0) (0,2.5,0) (0,0,3)\n"
      "endian: little\n"
      "encoding: raw\n";
  CHECK_THROWS_AS(read_nrrd(int16_file("sd_bad.nrrd", bad, {7, 9})),
                  UnsupportedHeaderField);
}

TEST_CASE("payload size mismatches are reported for both encodings") {
  // Declares 8 voxels but carries 6.
  std::string path = int16_file("short.nrrd", kGoodFields, {1, 2, 3, 4, 5, 6});
  CHECK_THROWS_AS(read_nrrd(path), PayloadSizeMismatch);

  // Oversized raw payload is just as wrong.
  std::string over = int16_file("long.nrrd", kGoodFields, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  CHECK_THROWS_AS(read_nrrd(over), PayloadSizeMismatch);

  // Truncated gzip stream.
  Volume v = make_volume(Dims3{4, 4, 4}, Spacing3{1, 1, 1}, VolumeKind::hu, 3.0f);
  std::string gz = tmp_file("trunc.nrrd");
  write_nrrd(v, gz, NrrdEncoding::gzip);
  std::ifstream in(gz, std::ios::binary);
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  std::string cut = write_bytes("trunc_cut.nrrd", blob.substr(0, blob.size() - 5));
  CHECK_THROWS_AS(read_nrrd(cut), PayloadSizeMismatch);
}

TEST_CASE("headers outside the frozen subset are rejected by name") {
  auto with = [](const std::string& find, const std::string& repl) {
    std::string f = kGoodFields;
    size_t pos = f.find(find);
    REQUIRE(pos != std::string::npos);
    f.replace(pos, find.size(), repl);
    return f;
  };
  std::vector<int16_t> pay(8, 1);

  CHECK_THROWS_AS(read_nrrd(int16_file("t.nrrd", with("type: short", "type: double"), pay)),
                  UnsupportedHeaderField);
  CHECK_THROWS_AS(
      read_nrrd(int16_file("d.nrrd", with("dimension: 3", "dimension: 4"), pay)),
      UnsupportedHeaderField);
  CHECK_THROWS_AS(
      read_nrrd(int16_file("e.nrrd", with("encoding: raw", "encoding: ascii"), pay)),
      UnsupportedHeaderField);
  CHECK_THROWS_AS(
      read_nrrd(int16_file("b.nrrd", with("endian: little", "endian: big"), pay)),
      UnsupportedHeaderField);
  CHECK_THROWS_AS(
      read_nrrd(int16_file("k.nrrd", kGoodFields + "thicknesses: 1 1 1\n", pay)),
      UnsupportedHeaderField);
}

TEST_CASE("malformed headers are told apart from unsupported ones") {
  std::vector<int16_t> pay(8, 1);
  // Wrong magic.
  CHECK_THROWS_AS(read_nrrd(write_bytes("magic.nrrd", "NRRD9999\n" + kGoodFields + "\n")),
                  MalformedHeader);
  // Header never terminated by a blank line.
  CHECK_THROWS_AS(read_nrrd(write_bytes("noterm.nrrd", "NRRD0004\n" + kGoodFields)),
                  MalformedHeader);
  // sizes with the wrong arity.
  auto subst = [&](const std::string& find, const std::string& repl) {
    std::string f = kGoodFields;
    f.replace(f.find(find), find.size(), repl);
    return int16_file("m.nrrd", f, pay);
  };
  CHECK_THROWS_AS(read_nrrd(subst("sizes: 2 2 2", "sizes: 2 2 2 2")), MalformedHeader);
  CHECK_THROWS_AS(read_nrrd(subst("sizes: 2 2 2", "sizes: 2 -2 2")), MalformedHeader);
  CHECK_THROWS_AS(read_nrrd(subst("spacings: 1 1 1", "spacings: 1 0 1")), MalformedHeader);
  // Removing a required field entirely.
  CHECK_THROWS_AS(read_nrrd(subst("sizes: 2 2 2\n", "")), MalformedHeader);
  CHECK_THROWS_AS(read_nrrd(subst("spacings: 1 1 1\n", "")), MalformedHeader);
  CHECK_THROWS_AS(read_nrrd(subst("endian: little\n", "")), MalformedHeader);
  // Duplicate spacing information.
  CHECK_THROWS_AS(
      read_nrrd(int16_file("dup.nrrd",
                           kGoodFields + "space directions: (1,0,0) (0,1,0) (0,0,1)\n", pay)),
      MalformedHeader);
  // Key-value line without the key: value form.
  CHECK_THROWS_AS(read_nrrd(int16_file("kv.nrrd", kGoodFields + "oddline\n", pay)),
                  MalformedHeader);
}

TEST_CASE("non-binary uint8 payloads are refused as masks") {
  std::string fields =
      "type: uchar\n"
      "dimension: 3\n"
      "sizes: 2 1 1\n"
      "spacings: 1 1 1\n"
      "encoding: raw\n";
  std::string bytes = "NRRD0004\n" + fields + "\n";
  bytes.push_back(1);
  bytes.push_back(2);
  CHECK_THROWS_AS(read_nrrd(write_bytes("nb.nrrd", bytes)), NonBinaryMaskValues);

  // A clean binary payload without endian is fine for single-byte types.
  std::string ok = "NRRD0004\n" + fields + "\n";
  ok.push_back(1);
  ok.push_back(0);
  MaskVolume m = read_mask_nrrd(write_bytes("okmask.nrrd", ok));
  CHECK(m.foreground_count() == 1);
}

TEST_CASE("typed readers reject the other payload kind") {
  Rng rng(83);
  Volume v = random_float_volume(rng, Dims3{2, 2, 2});
  MaskVolume m = make_mask(Dims3{2, 2, 2}, Spacing3{1, 1, 1}, 1);
  std::string pv = tmp_file("v.nrrd");
  std::string pm = tmp_file("m.nrrd");
  write_nrrd(v, pv);
  write_nrrd(m, pm);
  CHECK_THROWS_AS(read_mask_nrrd(pv), IoError);
  CHECK_THROWS_AS(read_volume_nrrd(pm), IoError);
  CHECK_THROWS_AS(read_nrrd(tmp_file("missing.nrrd")), IoError);
}

TEST_CASE("scan metadata survives the JSON sidecar") {
  ScanMeta meta;
  meta.rescale_slope = 2.0;
  meta.rescale_intercept = -1024.0;
  meta.group = "CTA";
  meta.label = 1;
  meta.orientation = Orientation::FFS;
  std::string path = tmp_file("meta.json");
  write_meta_json(meta, path);
  ScanMeta r = read_meta_json(path);
  CHECK(r.rescale_slope == 2.0);
  CHECK(r.rescale_intercept == -1024.0);
  CHECK(r.group == "CTA");
  CHECK(r.label == 1);
  CHECK(r.orientation == Orientation::FFS);

  CHECK_THROWS_AS(read_meta_json(write_bytes("bad.json", "{\"slope\": 1}")), IoError);
  CHECK_THROWS_AS(read_meta_json(write_bytes("broken.json", "{nope")), IoError);
  CHECK_THROWS_AS(read_meta_json(tmp_file("absent.json")), IoError);
}
