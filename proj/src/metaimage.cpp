#include "cseg/metaimage.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <vector>

namespace cseg {

static_assert(std::endian::native == std::endian::little, "MetaImage payloads are read as little-endian");

namespace fs = std::filesystem;

std::string to_string(ElementType t) {
  switch (t) {
    case ElementType::Short: return "MET_SHORT";
    case ElementType::UChar: return "MET_UCHAR";
    case ElementType::Float: return "MET_FLOAT";
  }
  return "?";
}

namespace {

std::size_t element_size(ElementType t) {
  switch (t) {
    case ElementType::Short: return 2;
    case ElementType::UChar: return 1;
    case ElementType::Float: return 4;
  }
  return 0;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const fs::path& p, const std::string& key, const std::string& why) {
  throw FormatError("read_header: " + p.string() + ": key " + key + ": " + why);
}

template <class T>
std::vector<T> parse_list(const fs::path& p, const std::string& key, const std::string& value, std::size_t n) {
  std::istringstream is(value);
  std::vector<T> out;
  T v;
  while (is >> v) out.push_back(v);
  if (!is.eof() || out.size() != n) bad(p, key, "expected " + std::to_string(n) + " numbers, got '" + value + "'");
  return out;
}

void write_header(const fs::path& mhd, const Dims3& dims, const Spacing3& spacing, ElementType type,
                  const std::string& raw_name) {
  std::ofstream os(mhd);
  if (!os) throw FormatError("write_volume: cannot open " + mhd.string());
  os.precision(17);
  os << "ObjectType = Image\n"
     << "NDims = 3\n"
     << "BinaryData = True\n"
     << "BinaryDataByteOrderMSB = False\n"
     << "CompressedData = False\n"
     << "ElementByteOrderMSB = False\n"
     << "DimSize = " << dims[0] << ' ' << dims[1] << ' ' << dims[2] << '\n'
     << "ElementSpacing = " << spacing[0] << ' ' << spacing[1] << ' ' << spacing[2] << '\n'
     << "ElementType = " << to_string(type) << '\n'
     << "ElementDataFile = " << raw_name << '\n';
  if (!os) throw FormatError("write_volume: failed writing " + mhd.string());
}

void write_payload(const fs::path& mhd, const Dims3& dims, const Spacing3& spacing, ElementType type,
                   const void* bytes, std::size_t n) {
  const fs::path raw = fs::path(mhd).replace_extension(".raw");
  write_header(mhd, dims, spacing, type, raw.filename().string());
  std::ofstream os(raw, std::ios::binary);
  if (!os) throw FormatError("write_volume: cannot open " + raw.string());
  os.write(static_cast<const char*>(bytes), static_cast<std::streamsize>(n));
  if (!os) throw FormatError("write_volume: failed writing " + raw.string());
}

std::vector<char> read_payload(const fs::path& mhd, const MetaHeader& h) {
  const fs::path raw = mhd.parent_path() / h.data_file;
  std::ifstream is(raw, std::ios::binary);
  if (!is) throw FormatError("read_volume: cannot open payload " + raw.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const std::size_t want = voxel_count(h.dims) * element_size(h.type);
  if (bytes.size() != want)
    throw FormatError("read_volume: payload " + raw.string() + " holds " + std::to_string(bytes.size()) +
                      " bytes, header DimSize " + to_string(h.dims) + " " + to_string(h.type) + " needs " +
                      std::to_string(want));
  return bytes;
}

template <class Out>
Out read_uchar(const fs::path& mhd, const char* op) {
  const MetaHeader h = read_header(mhd);
  if (h.type != ElementType::UChar)
    throw FormatError(std::string(op) + ": " + mhd.string() + " has ElementType " + to_string(h.type) +
                      ", expected MET_UCHAR");
  const std::vector<char> bytes = read_payload(mhd, h);
  Out out(h.dims, h.spacing);
  std::memcpy(out.data().data(), bytes.data(), bytes.size());
  return out;
}

}  // namespace

MetaHeader read_header(const fs::path& mhd) {
  std::ifstream is(mhd);
  if (!is) throw FormatError("read_header: cannot open " + mhd.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("read_header: " + mhd.string() + ": line without '=': " + line);
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) bad(mhd, key, "missing");
    return it->second;
  };
  if (need("ObjectType") != "Image") bad(mhd, "ObjectType", "expected Image");
  if (need("NDims") != "3") bad(mhd, "NDims", "expected 3");
  for (const char* key : {"ElementByteOrderMSB", "BinaryDataByteOrderMSB"}) {
    auto it = kv.find(key);
    if (it != kv.end() && it->second != "False") bad(mhd, key, "big-endian payloads are not supported");
  }
  if (auto it = kv.find("CompressedData"); it != kv.end() && it->second != "False")
    bad(mhd, "CompressedData", "compressed payloads are not supported");

  MetaHeader h;
  const auto dims = parse_list<long>(mhd, "DimSize", need("DimSize"), 3);
  for (int a = 0; a < 3; ++a) {
    if (dims[a] <= 0 || dims[a] > std::numeric_limits<int>::max()) bad(mhd, "DimSize", "non-positive extent");
    h.dims[a] = static_cast<int>(dims[a]);
  }
  if (auto it = kv.find("ElementSpacing"); it != kv.end()) {
    const auto sp = parse_list<double>(mhd, "ElementSpacing", it->second, 3);
    for (int a = 0; a < 3; ++a) {
      if (!(sp[a] > 0.0)) bad(mhd, "ElementSpacing", "spacing must be positive");
      h.spacing[a] = sp[a];
    }
  }
  const std::string& type = need("ElementType");
  if (type == "MET_SHORT") h.type = ElementType::Short;
  else if (type == "MET_UCHAR") h.type = ElementType::UChar;
  else if (type == "MET_FLOAT") h.type = ElementType::Float;
  else bad(mhd, "ElementType", "unsupported type " + type);
  h.data_file = need("ElementDataFile");
  if (h.data_file == "LOCAL" || h.data_file.empty()) bad(mhd, "ElementDataFile", "a separate payload file is required");
  return h;
}

void write_volume(const Volume3& vol, const fs::path& mhd, ElementType type) {
  switch (type) {
    case ElementType::Float:
      write_payload(mhd, vol.dims(), vol.spacing(), type, vol.data().data(), vol.size() * sizeof(float));
      return;
    case ElementType::Short: {
      std::vector<std::int16_t> v(vol.size());
      for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = static_cast<std::int16_t>(std::clamp(std::lround(vol[i]), -32768L, 32767L));
      write_payload(mhd, vol.dims(), vol.spacing(), type, v.data(), v.size() * 2);
      return;
    }
    case ElementType::UChar: {
      std::vector<std::uint8_t> v(vol.size());
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<std::uint8_t>(std::clamp(std::lround(vol[i]), 0L, 255L));
      write_payload(mhd, vol.dims(), vol.spacing(), type, v.data(), v.size());
      return;
    }
  }
}

void write_labels(const LabelVolume& labels, const fs::path& mhd) {
  write_payload(mhd, labels.dims(), labels.spacing(), ElementType::UChar, labels.data().data(), labels.size());
}

void write_mask(const BinaryMask& mask, const fs::path& mhd) {
  write_payload(mhd, mask.dims(), mask.spacing(), ElementType::UChar, mask.data().data(), mask.size());
}

Volume3 read_volume(const fs::path& mhd) {
  const MetaHeader h = read_header(mhd);
  const std::vector<char> bytes = read_payload(mhd, h);
  Volume3 out(h.dims, h.spacing);
  const std::size_t n = out.size();
  switch (h.type) {
    case ElementType::Float:
      std::memcpy(out.data().data(), bytes.data(), n * 4);
      break;
    case ElementType::Short:
      for (std::size_t i = 0; i < n; ++i) {
        std::int16_t v;
        std::memcpy(&v, bytes.data() + 2 * i, 2);
        out[i] = v;
      }
      break;
    case ElementType::UChar:
      for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<std::uint8_t>(bytes[i]);
      break;
  }
  return out;
}

LabelVolume read_labels(const fs::path& mhd) { return read_uchar<LabelVolume>(mhd, "read_labels"); }

BinaryMask read_mask(const fs::path& mhd) {
  BinaryMask m = read_uchar<BinaryMask>(mhd, "read_mask");
  for (auto& v : m.data()) v = v ? 1 : 0;
  return m;
}

}  // namespace cseg
