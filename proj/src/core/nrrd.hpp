#pragma once

#include <string>
#include <variant>

#include "core/volume.hpp"

namespace voxpipe {

class UnsupportedHeaderField : public IoError {
 public:
  explicit UnsupportedHeaderField(const std::string& what) : IoError(what) {}
};

class MalformedHeader : public IoError {
 public:
  explicit MalformedHeader(const std::string& what) : IoError(what) {}
};

class PayloadSizeMismatch : public IoError {
 public:
  explicit PayloadSizeMismatch(const std::string& what) : IoError(what) {}
};

class NonBinaryMaskValues : public IoError {
 public:
  explicit NonBinaryMaskValues(const std::string& what) : IoError(what) {}
};

enum class NrrdEncoding { raw, gzip };

// Deliberately small NRRD subset: 3-D, little-endian, {int16, uint8,
// float32}, {raw, gzip}, diagonal space directions or plain spacings.
// Anything else is rejected with a specific error rather than guessed at.
// uint8 payloads must be strictly binary and come back as MaskVolume.
std::variant<Volume, MaskVolume> read_nrrd(const std::string& path);

Volume read_volume_nrrd(const std::string& path);
MaskVolume read_mask_nrrd(const std::string& path);

void write_nrrd(const Volume& v, const std::string& path,
                NrrdEncoding enc = NrrdEncoding::gzip);
void write_nrrd(const MaskVolume& m, const std::string& path,
                NrrdEncoding enc = NrrdEncoding::gzip);

// JSON sidecar carrying acquisition metadata for a scan volume.
ScanMeta read_meta_json(const std::string& path);
void write_meta_json(const ScanMeta& meta, const std::string& path);

}  // namespace voxpipe
