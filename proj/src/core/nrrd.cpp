#include "core/nrrd.hpp"

#include <zlib.h>

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace voxpipe {

static_assert(std::endian::native == std::endian::little,
              "payload I/O assumes a little-endian host");

namespace {

enum class PixelType { int16, uint8, float32 };

struct Header {
  PixelType type = PixelType::float32;
  Dims3 sizes;
  Spacing3 spacing;
  NrrdEncoding encoding = NrrdEncoding::raw;
  std::string content;  // kind hint written by us, optional
  bool have_type = false, have_dim = false, have_sizes = false;
  bool have_encoding = false, have_endian = false, have_spacing = false;
};

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

PixelType parse_type(const std::string& v) {
  if (v == "short" || v == "signed short" || v == "int16" || v == "int16_t") {
    return PixelType::int16;
  }
  if (v == "uchar" || v == "unsigned char" || v == "uint8" || v == "uint8_t") {
    return PixelType::uint8;
  }
  if (v == "float") return PixelType::float32;
  throw UnsupportedHeaderField("unsupported type: " + v);
}

// Accepts exactly three diagonal vectors: (sx,0,0) (0,sy,0) (0,0,sz).
Spacing3 parse_space_directions(const std::string& v) {
  double m[3][3];
  int axis = 0;
  size_t pos = 0;
  while (pos < v.size()) {
    if (std::isspace(static_cast<unsigned char>(v[pos]))) { ++pos; continue; }
    if (v[pos] != '(') throw MalformedHeader("bad space directions: " + v);
    size_t close = v.find(')', pos);
    if (close == std::string::npos || axis >= 3) {
      throw MalformedHeader("bad space directions: " + v);
    }
    std::string vec = v.substr(pos + 1, close - pos - 1);
    if (std::sscanf(vec.c_str(), "%lf,%lf,%lf", &m[axis][0], &m[axis][1], &m[axis][2]) != 3) {
      throw MalformedHeader("bad space directions vector: " + vec);
    }
    ++axis;
    pos = close + 1;
  }
  if (axis != 3) throw MalformedHeader("space directions needs 3 vectors");
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (i != j && m[i][j] != 0.0) {
        throw UnsupportedHeaderField("non-diagonal space directions");
      }
    }
  }
  return Spacing3{m[0][0], m[1][1], m[2][2]};
}

void parse_field(Header& h, const std::string& key, const std::string& value) {
  if (key == "type") {
    h.type = parse_type(value);
    h.have_type = true;
  } else if (key == "dimension") {
    if (value != "3") throw UnsupportedHeaderField("only 3-D supported, got dimension: " + value);
    h.have_dim = true;
  } else if (key == "sizes") {
    std::istringstream is(value);
    if (!(is >> h.sizes.x >> h.sizes.y >> h.sizes.z) || h.sizes.x <= 0 ||
        h.sizes.y <= 0 || h.sizes.z <= 0) {
      throw MalformedHeader("bad sizes: " + value);
    }
    std::string rest;
    if (is >> rest) throw MalformedHeader("sizes must have 3 entries: " + value);
    h.have_sizes = true;
  } else if (key == "space directions") {
    if (h.have_spacing) throw MalformedHeader("duplicate spacing information");
    h.spacing = parse_space_directions(value);
    h.have_spacing = true;
  } else if (key == "spacings") {
    if (h.have_spacing) throw MalformedHeader("duplicate spacing information");
    std::istringstream is(value);
    if (!(is >> h.spacing.x >> h.spacing.y >> h.spacing.z)) {
      throw MalformedHeader("bad spacings: " + value);
    }
    h.have_spacing = true;
  } else if (key == "endian") {
    if (value != "little") throw UnsupportedHeaderField("unsupported endian: " + value);
    h.have_endian = true;
  } else if (key == "encoding") {
    if (value == "raw") {
      h.encoding = NrrdEncoding::raw;
    } else if (value == "gzip" || value == "gz") {
      h.encoding = NrrdEncoding::gzip;
    } else {
      throw UnsupportedHeaderField("unsupported encoding: " + value);
    }
    h.have_encoding = true;
  } else if (key == "content") {
    h.content = value;
  } else {
    throw UnsupportedHeaderField("unsupported header field: " + key);
  }
}

std::vector<uint8_t> gzip_deflate(const uint8_t* src, size_t n) {
  z_stream zs{};
  if (deflateInit2(&zs, 6, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw IoError("deflateInit2 failed");
  }
  std::vector<uint8_t> out(deflateBound(&zs, static_cast<uLong>(n)));
  zs.next_in = const_cast<Bytef*>(src);
  zs.avail_in = static_cast<uInt>(n);
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw IoError("gzip compression failed");
  out.resize(out.size() - zs.avail_out);
  return out;
}

std::vector<uint8_t> gzip_inflate(const uint8_t* src, size_t n, size_t expected) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 16) != Z_OK) throw IoError("inflateInit2 failed");
  std::vector<uint8_t> out(expected + 1);  // room to detect oversize payloads
  zs.next_in = const_cast<Bytef*>(src);
  zs.avail_in = static_cast<uInt>(n);
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = inflate(&zs, Z_FINISH);
  size_t got = out.size() - zs.avail_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END && !(rc == Z_BUF_ERROR && got > expected)) {
    throw PayloadSizeMismatch("gzip payload did not decode cleanly");
  }
  if (got != expected) {
    throw PayloadSizeMismatch("decompressed payload has " + std::to_string(got) +
                              " bytes, expected " + std::to_string(expected));
  }
  out.resize(expected);
  return out;
}

size_t bytes_per_voxel(PixelType t) {
  switch (t) {
    case PixelType::int16: return 2;
    case PixelType::uint8: return 1;
    case PixelType::float32: return 4;
  }
  return 0;
}

std::string kind_to_content(VolumeKind k) {
  switch (k) {
    case VolumeKind::raw: return "raw";
    case VolumeKind::hu: return "hu";
    case VolumeKind::windowed: return "windowed";
  }
  return "raw";
}

void write_file(const std::string& path, const std::string& header,
                const uint8_t* payload, size_t n, NrrdEncoding enc) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  if (enc == NrrdEncoding::gzip) {
    auto gz = gzip_deflate(payload, n);
    f.write(reinterpret_cast<const char*>(gz.data()), static_cast<std::streamsize>(gz.size()));
  } else {
    f.write(reinterpret_cast<const char*>(payload), static_cast<std::streamsize>(n));
  }
  if (!f) throw IoError("write failed: " + path);
}

std::string header_text(PixelType t, const Dims3& d, const Spacing3& s,
                        NrrdEncoding enc, const std::string& content) {
  std::ostringstream os;
  os << "NRRD0004\n";
  os << "# voxpipe volume\n";
  switch (t) {
    case PixelType::int16: os << "type: short\n"; break;
    case PixelType::uint8: os << "type: uchar\n"; break;
    case PixelType::float32: os << "type: float\n"; break;
  }
  os << "dimension: 3\n";
  os << "sizes: " << d.x << " " << d.y << " " << d.z << "\n";
  os << "space directions: (" << s.x << ",0,0) (0," << s.y << ",0) (0,0," << s.z << ")\n";
  os << "endian: little\n";
  os << "encoding: " << (enc == NrrdEncoding::gzip ? "gzip" : "raw") << "\n";
  if (!content.empty()) os << "content: " << content << "\n";
  os << "\n";
  return os.str();
}

bool all_integral_int16(const std::vector<float>& v) {
  for (float x : v) {
    if (!(x >= -32768.0f && x <= 32767.0f)) return false;
    if (x != std::nearbyintf(x)) return false;
  }
  return true;
}

}  // namespace

std::variant<Volume, MaskVolume> read_nrrd(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  size_t pos = blob.find('\n');
  if (pos == std::string::npos) throw MalformedHeader("missing header terminator");
  std::string magic = trim(blob.substr(0, pos));
  if (magic != "NRRD0004" && magic != "NRRD0005") {
    throw MalformedHeader("bad magic: " + magic);
  }

  Header h;
  size_t line_start = pos + 1;
  while (true) {
    size_t nl = blob.find('\n', line_start);
    if (nl == std::string::npos) throw MalformedHeader("header not terminated by blank line");
    std::string line = blob.substr(line_start, nl - line_start);
    line_start = nl + 1;
    std::string t = trim(line);
    if (t.empty()) break;  // blank line ends the header
    if (t[0] == '#') continue;
    size_t colon = t.find(": ");
    if (colon == std::string::npos) {
      // "key:=value" style key-value pairs are outside the subset.
      throw MalformedHeader("unparsable header line: " + t);
    }
    parse_field(h, trim(t.substr(0, colon)), trim(t.substr(colon + 2)));
  }

  if (!h.have_type || !h.have_dim || !h.have_sizes || !h.have_encoding) {
    throw MalformedHeader("missing required header field");
  }
  if (!h.have_spacing) throw MalformedHeader("missing spacing information");
  if (h.spacing.x <= 0 || h.spacing.y <= 0 || h.spacing.z <= 0) {
    throw MalformedHeader("spacing must be positive");
  }
  if (!h.have_endian && h.type != PixelType::uint8) {
    throw MalformedHeader("endian required for multi-byte types");
  }

  size_t expected = static_cast<size_t>(h.sizes.count()) * bytes_per_voxel(h.type);
  const uint8_t* payload = reinterpret_cast<const uint8_t*>(blob.data()) + line_start;
  size_t payload_size = blob.size() - line_start;
  std::vector<uint8_t> bytes;
  if (h.encoding == NrrdEncoding::gzip) {
    bytes = gzip_inflate(payload, payload_size, expected);
  } else {
    if (payload_size != expected) {
      throw PayloadSizeMismatch("raw payload has " + std::to_string(payload_size) +
                                " bytes, expected " + std::to_string(expected));
    }
    bytes.assign(payload, payload + expected);
  }

  if (h.type == PixelType::uint8) {
    MaskVolume m;
    m.dims = h.sizes;
    m.spacing = h.spacing;
    m.data.assign(bytes.begin(), bytes.end());
    for (uint8_t v : m.data) {
      if (v > 1) throw NonBinaryMaskValues("uint8 volume has value " + std::to_string(v));
    }
    return m;
  }

  Volume v;
  v.dims = h.sizes;
  v.spacing = h.spacing;
  v.data.resize(static_cast<size_t>(h.sizes.count()));
  if (h.type == PixelType::int16) {
    const int16_t* src = reinterpret_cast<const int16_t*>(bytes.data());
    for (size_t i = 0; i < v.data.size(); ++i) v.data[i] = static_cast<float>(src[i]);
    v.kind = VolumeKind::raw;
  } else {
    std::memcpy(v.data.data(), bytes.data(), bytes.size());
    v.kind = VolumeKind::hu;
  }
  if (h.content == "raw") v.kind = VolumeKind::raw;
  else if (h.content == "hu") v.kind = VolumeKind::hu;
  else if (h.content == "windowed") v.kind = VolumeKind::windowed;
  else if (h.content.empty() && h.type == PixelType::float32) {
    bool in_unit = true;
    for (float x : v.data) {
      if (x < 0.0f || x > 1.0f) { in_unit = false; break; }
    }
    if (in_unit) v.kind = VolumeKind::windowed;
  }
  return v;
}

Volume read_volume_nrrd(const std::string& path) {
  auto r = read_nrrd(path);
  if (auto* v = std::get_if<Volume>(&r)) return std::move(*v);
  throw IoError("expected a scalar volume, got a binary mask: " + path);
}

MaskVolume read_mask_nrrd(const std::string& path) {
  auto r = read_nrrd(path);
  if (auto* m = std::get_if<MaskVolume>(&r)) return std::move(*m);
  throw IoError("expected a binary mask, got a scalar volume: " + path);
}

void write_nrrd(const Volume& v, const std::string& path, NrrdEncoding enc) {
  v.validate();
  // int16 is used only when exact: keeps round-trips lossless.
  if (v.kind != VolumeKind::windowed && all_integral_int16(v.data)) {
    std::vector<int16_t> pix(v.data.size());
    for (size_t i = 0; i < pix.size(); ++i) pix[i] = static_cast<int16_t>(std::lrintf(v.data[i]));
    auto header = header_text(PixelType::int16, v.dims, v.spacing, enc, kind_to_content(v.kind));
    write_file(path, header, reinterpret_cast<const uint8_t*>(pix.data()),
               pix.size() * sizeof(int16_t), enc);
    return;
  }
  auto header = header_text(PixelType::float32, v.dims, v.spacing, enc, kind_to_content(v.kind));
  write_file(path, header, reinterpret_cast<const uint8_t*>(v.data.data()),
             v.data.size() * sizeof(float), enc);
}

void write_nrrd(const MaskVolume& m, const std::string& path, NrrdEncoding enc) {
  m.validate();
  auto header = header_text(PixelType::uint8, m.dims, m.spacing, enc, "mask");
  write_file(path, header, m.data.data(), m.data.size(), enc);
}

ScanMeta read_meta_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad meta JSON in " + path + ": " + e.what());
  }
  ScanMeta meta;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "rescale_slope") meta.rescale_slope = it.value().get<double>();
    else if (k == "rescale_intercept") meta.rescale_intercept = it.value().get<double>();
    else if (k == "group") meta.group = it.value().get<std::string>();
    else if (k == "label") meta.label = it.value().get<int>();
    else if (k == "orientation") meta.orientation = orientation_from_string(it.value().get<std::string>());
    else throw IoError("unknown meta key in " + path + ": " + k);
  }
  return meta;
}

void write_meta_json(const ScanMeta& meta, const std::string& path) {
  nlohmann::json j;
  j["rescale_slope"] = meta.rescale_slope;
  j["rescale_intercept"] = meta.rescale_intercept;
  j["group"] = meta.group;
  j["label"] = meta.label;
  j["orientation"] = orientation_to_string(meta.orientation);
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << j.dump(2) << "\n";
}

}  // namespace voxpipe
