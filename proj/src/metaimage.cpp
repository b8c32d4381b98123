#include "edgeseg/metaimage.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace edgeseg {
namespace {

struct TypeInfo {
  MetaElementType type;
  const char* name;
  int size;
};

constexpr TypeInfo kTypes[] = {
    {MetaElementType::int8, "MET_CHAR", 1},    {MetaElementType::uint8, "MET_UCHAR", 1},
    {MetaElementType::int16, "MET_SHORT", 2},  {MetaElementType::uint16, "MET_USHORT", 2},
    {MetaElementType::float32, "MET_FLOAT", 4},
};

const TypeInfo& type_info(MetaElementType t) {
  for (const auto& ti : kTypes) {
    if (ti.type == t) return ti;
  }
  throw FormatError("MetaImage: unknown element type enum");
}

const TypeInfo* type_by_name(const std::string& name) {
  for (const auto& ti : kTypes) {
    if (name == ti.name) return &ti;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  std::string lo = v;
  std::transform(lo.begin(), lo.end(), lo.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lo == "true" || lo == "1") return true;
  if (lo == "false" || lo == "0") return false;
  throw FormatError("MetaImage: corrupt boolean value for key " + key);
}

template <typename T, int N>
std::array<T, N> parse_triple(const std::string& v, const std::string& key) {
  std::istringstream is(v);
  std::array<T, N> out{};
  for (int i = 0; i < N; ++i) {
    if (!(is >> out[i])) throw FormatError("MetaImage: corrupt value for key " + key);
  }
  return out;
}

std::uint16_t bswap16(std::uint16_t v) { return static_cast<std::uint16_t>((v >> 8) | (v << 8)); }
std::uint32_t bswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0x0000ff00u) | ((v << 8) & 0x00ff0000u) | (v << 24);
}

template <typename Raw>
void decode(const std::vector<char>& bytes, bool msb, std::vector<float>& out) {
  const auto n = bytes.size() / sizeof(Raw);
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Raw r;
    std::memcpy(&r, bytes.data() + i * sizeof(Raw), sizeof(Raw));
    if (msb) {
      if constexpr (sizeof(Raw) == 2) {
        std::uint16_t u;
        std::memcpy(&u, &r, 2);
        u = bswap16(u);
        std::memcpy(&r, &u, 2);
      } else if constexpr (sizeof(Raw) == 4) {
        std::uint32_t u;
        std::memcpy(&u, &r, 4);
        u = bswap32(u);
        std::memcpy(&r, &u, 4);
      }
    }
    out[i] = static_cast<float>(r);
  }
}

template <typename Raw>
void encode(const std::vector<float>& in, bool msb, std::vector<char>& bytes) {
  bytes.resize(in.size() * sizeof(Raw));
  for (std::size_t i = 0; i < in.size(); ++i) {
    Raw r;
    if constexpr (std::is_integral_v<Raw>) {
      r = static_cast<Raw>(std::llround(static_cast<double>(in[i])));
    } else {
      r = static_cast<Raw>(in[i]);
    }
    if (msb) {
      if constexpr (sizeof(Raw) == 2) {
        std::uint16_t u;
        std::memcpy(&u, &r, 2);
        u = bswap16(u);
        std::memcpy(&r, &u, 2);
      } else if constexpr (sizeof(Raw) == 4) {
        std::uint32_t u;
        std::memcpy(&u, &r, 4);
        u = bswap32(u);
        std::memcpy(&r, &u, 4);
      }
    }
    std::memcpy(bytes.data() + i * sizeof(Raw), &r, sizeof(Raw));
  }
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Volume read_metaimage(const std::filesystem::path& header_path, VolumeKind kind) {
  std::ifstream in(header_path, std::ios::binary);
  if (!in) throw IoError("MetaImage: cannot open " + header_path.string());

  std::map<std::string, std::string> kv;
  std::string line;
  std::string data_file;
  std::streampos data_offset = -1;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (trim(line).empty()) continue;
      throw FormatError("MetaImage: malformed header line '" + trim(line) + "'");
    }
    const std::string k = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    if (k.empty()) throw FormatError("MetaImage: malformed header line with empty key");
    kv[k] = v;
    if (k == "ElementDataFile") {
      data_file = v;
      data_offset = in.tellg();  // LOCAL data starts right after this line
      break;
    }
  }

  auto require = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw FormatError("MetaImage: missing required key " + k);
    return it->second;
  };

  if (auto it = kv.find("ObjectType"); it != kv.end() && it->second != "Image") {
    throw FormatError("MetaImage: unsupported ObjectType (key ObjectType)");
  }
  if (std::stoi(require("NDims")) != 3) throw FormatError("MetaImage: NDims must be 3 (key NDims)");
  if (auto it = kv.find("CompressedData"); it != kv.end() && parse_bool(it->second, "CompressedData")) {
    throw FormatError("MetaImage: compressed data files are not supported (key CompressedData)");
  }

  const auto dims = parse_triple<std::int64_t, 3>(require("DimSize"), "DimSize");
  for (auto d : dims) {
    if (d < 1) throw FormatError("MetaImage: corrupt value for key DimSize");
  }

  const TypeInfo* ti = type_by_name(require("ElementType"));
  if (!ti) throw FormatError("MetaImage: unsupported value for key ElementType: " + kv["ElementType"]);

  bool msb = false;
  if (auto it = kv.find("BinaryDataByteOrderMSB"); it != kv.end()) msb = parse_bool(it->second, "BinaryDataByteOrderMSB");
  if (auto it = kv.find("ElementByteOrderMSB"); it != kv.end()) msb = parse_bool(it->second, "ElementByteOrderMSB");

  Volume vol(dims[0], dims[1], dims[2], kind);
  if (auto it = kv.find("ElementSpacing"); it != kv.end()) {
    vol.spacing = parse_triple<double, 3>(it->second, "ElementSpacing");
  }
  if (auto it = kv.find("Offset"); it != kv.end()) {
    vol.origin = parse_triple<double, 3>(it->second, "Offset");
  }

  if (data_file.empty()) throw FormatError("MetaImage: missing required key ElementDataFile");

  const std::size_t expected_bytes = static_cast<std::size_t>(vol.voxels()) * static_cast<std::size_t>(ti->size);
  std::vector<char> bytes;
  if (data_file == "LOCAL") {
    in.clear();
    in.seekg(data_offset);
    bytes.resize(expected_bytes);
    in.read(bytes.data(), static_cast<std::streamsize>(expected_bytes));
    if (static_cast<std::size_t>(in.gcount()) != expected_bytes) {
      throw TruncationError("MetaImage: LOCAL data truncated, DimSize declares " + std::to_string(expected_bytes) +
                            " bytes but fewer are stored");
    }
  } else {
    const auto raw_path = header_path.parent_path() / data_file;
    std::ifstream raw(raw_path, std::ios::binary | std::ios::ate);
    if (!raw) throw IoError("MetaImage: cannot open data file " + raw_path.string());
    const auto actual = static_cast<std::size_t>(raw.tellg());
    if (actual != expected_bytes) {
      throw TruncationError("MetaImage: data file holds " + std::to_string(actual) + " bytes but DimSize declares " +
                            std::to_string(expected_bytes));
    }
    raw.seekg(0);
    bytes.resize(expected_bytes);
    raw.read(bytes.data(), static_cast<std::streamsize>(expected_bytes));
    if (static_cast<std::size_t>(raw.gcount()) != expected_bytes) {
      throw IoError("MetaImage: short read from " + raw_path.string());
    }
  }

  switch (ti->type) {
    case MetaElementType::int8: decode<std::int8_t>(bytes, msb, vol.data); break;
    case MetaElementType::uint8: decode<std::uint8_t>(bytes, msb, vol.data); break;
    case MetaElementType::int16: decode<std::int16_t>(bytes, msb, vol.data); break;
    case MetaElementType::uint16: decode<std::uint16_t>(bytes, msb, vol.data); break;
    case MetaElementType::float32: decode<float>(bytes, msb, vol.data); break;
  }

  if (kind == VolumeKind::label) {
    for (float v : vol.data) {
      if (!is_binary_value(v)) throw FormatError("MetaImage: requested label volume contains non-binary values");
    }
  }
  return vol;
}

void write_metaimage(const Volume& volume, const std::filesystem::path& header_path) {
  write_metaimage(volume, header_path,
                  volume.kind == VolumeKind::label ? MetaElementType::uint8 : MetaElementType::float32);
}

void write_metaimage(const Volume& volume, const std::filesystem::path& header_path, MetaElementType element_type,
                     bool msb_byte_order) {
  volume.validate();
  const TypeInfo& ti = type_info(element_type);

  std::filesystem::path raw_path = header_path;
  raw_path.replace_extension(".raw");

  std::ostringstream hdr;
  hdr << "ObjectType = Image\n";
  hdr << "NDims = 3\n";
  hdr << "BinaryData = True\n";
  hdr << "BinaryDataByteOrderMSB = " << (msb_byte_order ? "True" : "False") << "\n";
  hdr << "CompressedData = False\n";
  hdr << "DimSize = " << volume.size[0] << " " << volume.size[1] << " " << volume.size[2] << "\n";
  hdr << "ElementSpacing = " << format_double(volume.spacing[0]) << " " << format_double(volume.spacing[1]) << " "
      << format_double(volume.spacing[2]) << "\n";
  hdr << "Offset = " << format_double(volume.origin[0]) << " " << format_double(volume.origin[1]) << " "
      << format_double(volume.origin[2]) << "\n";
  hdr << "ElementType = " << ti.name << "\n";
  hdr << "ElementDataFile = " << raw_path.filename().string() << "\n";

  std::ofstream out(header_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("MetaImage: cannot write " + header_path.string());
  out << hdr.str();
  if (!out) throw IoError("MetaImage: failed writing header " + header_path.string());

  std::vector<char> bytes;
  switch (element_type) {
    case MetaElementType::int8: encode<std::int8_t>(volume.data, msb_byte_order, bytes); break;
    case MetaElementType::uint8: encode<std::uint8_t>(volume.data, msb_byte_order, bytes); break;
    case MetaElementType::int16: encode<std::int16_t>(volume.data, msb_byte_order, bytes); break;
    case MetaElementType::uint16: encode<std::uint16_t>(volume.data, msb_byte_order, bytes); break;
    case MetaElementType::float32: encode<float>(volume.data, msb_byte_order, bytes); break;
  }

  std::ofstream raw(raw_path, std::ios::binary | std::ios::trunc);
  if (!raw) throw IoError("MetaImage: cannot write data file " + raw_path.string());
  raw.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!raw) throw IoError("MetaImage: failed writing data file " + raw_path.string());
}

}  // namespace edgeseg
