#include "graphmamba/ad/checkpoint.hpp"

#include "graphmamba/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace graphmamba::ad {

namespace {

constexpr char kMagic[8] = {'G', 'M', 'C', 'K', 'P', 'T', '0', '1'};

void put_u64(std::vector<char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

void put_f64(std::vector<char>& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

}  // namespace

std::vector<char> encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json index;
  index["format"] = "graphmamba-checkpoint";
  index["version"] = 1;
  index["meta"] = ckpt.meta;
  index["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& r : ckpt.records) {
    if (shape_size(r.shape) != static_cast<Index>(r.data.size())) {
      throw DimensionError("checkpoint record '" + r.name + "' has inconsistent shape");
    }
    index["tensors"].push_back({{"name", r.name}, {"shape", r.shape}, {"offset", offset}, {"count", r.data.size()}});
    offset += 8 * r.data.size();
  }
  const std::string header = index.dump();
  std::vector<char> out(std::begin(kMagic), std::end(kMagic));
  put_u64(out, header.size());
  out.insert(out.end(), header.begin(), header.end());
  out.reserve(out.size() + offset);
  for (const auto& r : ckpt.records) {
    for (double d : r.data) put_f64(out, d);
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const char> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw FormatError("not a graphmamba checkpoint (bad magic)");
  }
  const std::uint64_t header_len = get_u64(bytes.data() + 8);
  if (header_len > bytes.size() - 16) throw FormatError("checkpoint index truncated");
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint index is not valid JSON: ") + e.what());
  }
  if (index.value("format", "") != "graphmamba-checkpoint" || index.value("version", 0) != 1) {
    throw FormatError("unsupported checkpoint format/version");
  }
  const char* payload = bytes.data() + 16 + header_len;
  const std::uint64_t payload_len = bytes.size() - 16 - header_len;

  Checkpoint ckpt;
  ckpt.meta = index.value("meta", nlohmann::json::object());
  for (const auto& t : index.at("tensors")) {
    CheckpointRecord r;
    r.name = t.at("name").get<std::string>();
    r.shape = t.at("shape").get<Shape>();
    const auto offset = t.at("offset").get<std::uint64_t>();
    const auto count = t.at("count").get<std::uint64_t>();
    if (shape_size(r.shape) != static_cast<Index>(count)) {
      throw FormatError("checkpoint record '" + r.name + "' count disagrees with shape");
    }
    if (offset + 8 * count > payload_len) {
      throw FormatError("checkpoint record '" + r.name + "' runs past end of file");
    }
    r.data.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      r.data[i] = std::bit_cast<double>(get_u64(payload + offset + 8 * i));
    }
    ckpt.records.push_back(std::move(r));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, std::span<const Parameter> params, const nlohmann::json& meta) {
  Checkpoint ckpt;
  ckpt.meta = meta;
  for (const auto& p : params) {
    const auto d = p.tensor.data();
    ckpt.records.push_back({p.name, p.tensor.shape(), std::vector<double>(d.begin(), d.end())});
  }
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void restore_parameters(const Checkpoint& ckpt, std::span<Parameter> params) {
  for (Parameter& p : params) {
    const CheckpointRecord* match = nullptr;
    for (const auto& r : ckpt.records) {
      if (r.name == p.name) {
        match = &r;
        break;
      }
    }
    if (!match) throw FormatError("checkpoint has no tensor named '" + p.name + "'");
    if (match->shape != p.tensor.shape()) {
      throw FormatError("checkpoint tensor '" + p.name + "' has shape " + shape_string(match->shape) + ", expected " +
                        shape_string(p.tensor.shape()));
    }
    p.tensor.mutable_value() = Eigen::Map<const Matrix>(match->data.data(), p.tensor.rows(), p.tensor.cols());
  }
}

}  // namespace graphmamba::ad
