#pragma once

#include <filesystem>
#include <string>

#include "cseg/volume.hpp"

namespace cseg {

enum class ElementType { Short, UChar, Float };

std::string to_string(ElementType t);  // MET_SHORT, MET_UCHAR, MET_FLOAT

struct MetaHeader {
  Dims3 dims{};
  Spacing3 spacing{1.0, 1.0, 1.0};
  ElementType type = ElementType::Float;
  std::string data_file;  // relative to the header's directory
};

/// Parses a .mhd header. Missing or malformed keys, big-endian payloads and
/// compressed payloads throw FormatError naming the key.
MetaHeader read_header(const std::filesystem::path& mhd);

/// Writes `<stem>.mhd` and `<stem>.raw` next to each other. Short payloads
/// round to the nearest integer and saturate.
void write_volume(const Volume3& vol, const std::filesystem::path& mhd, ElementType type = ElementType::Float);
void write_labels(const LabelVolume& labels, const std::filesystem::path& mhd);
void write_mask(const BinaryMask& mask, const std::filesystem::path& mhd);

/// Any element type, converted to float.
Volume3 read_volume(const std::filesystem::path& mhd);
/// MET_UCHAR only.
LabelVolume read_labels(const std::filesystem::path& mhd);
BinaryMask read_mask(const std::filesystem::path& mhd);

}  // namespace cseg
