#include "adamrc/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <set>

#include "adamrc/io.hpp"

namespace adamrc::ckpt {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'A', 'D', 'A', 'M', 'R', 'C', '\0', '\x01'};

void put_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

std::uint64_t get_u64(std::string_view bytes, std::size_t at) {
  std::uint64_t v;
  std::memcpy(&v, bytes.data() + at, 8);
  return v;
}

std::uint32_t crc_of(const char* data, std::size_t n) {
  uLong c = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    c = crc32(c, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

std::string build(const std::map<std::string, const ag::FMatrix*>& tensors, const Manifest& m) {
  std::string payload;
  json table = json::array();
  for (const auto& [name, t] : tensors) {
    const std::size_t len = static_cast<std::size_t>(t->size()) * sizeof(float);
    const std::size_t off = payload.size();
    payload.append(reinterpret_cast<const char*>(t->data()), len);
    table.push_back({{"name", name},
                     {"dtype", "f32"},
                     {"shape", {t->rows(), t->cols()}},
                     {"byte_offset", off},
                     {"byte_len", len},
                     {"crc32", crc_of(payload.data() + off, len)}});
  }
  const json manifest = {{"format_version", m.format_version}, {"kind", m.kind},       {"config", m.config},
                         {"epoch", m.epoch},                   {"dev_metrics", m.dev_metrics}, {"tensors", table}};
  const std::string mtext = manifest.dump();
  std::string out(kMagic, 8);
  put_u64(out, mtext.size());
  out += mtext;
  put_u64(out, payload.size());
  out += payload;
  return out;
}

}  // namespace

const ag::FMatrix& Checkpoint::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw CheckpointError("checkpoint has no tensor '" + name + "'");
  return it->second;
}

std::string serialize(const nn::ParamRefs& params, const Manifest& manifest) {
  std::map<std::string, const ag::FMatrix*> tensors;
  for (const ag::Parameter* p : params)
    if (!tensors.emplace(p->name, &p->value).second)
      throw CheckpointError("duplicate parameter name '" + p->name + "'");
  return build(tensors, manifest);
}

Checkpoint deserialize(std::string_view bytes, const std::string& source_name) {
  const std::string where = source_name + ": ";
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 7) != 0)
    throw CheckpointError(where + "not a checkpoint (bad magic)");
  if (bytes[7] != kMagic[7])
    throw CheckpointError(where + "unsupported container version " + std::to_string(static_cast<int>(bytes[7])));
  const std::uint64_t mlen = get_u64(bytes, 8);
  if (mlen > bytes.size() - 16) throw CheckpointError(where + "truncated manifest");
  json manifest;
  try {
    manifest = json::parse(bytes.substr(16, mlen));
  } catch (const json::exception& e) {
    throw CheckpointError(where + "corrupt manifest: " + e.what());
  }
  const std::size_t payload_at = 16 + mlen + 8;
  if (bytes.size() < payload_at) throw CheckpointError(where + "truncated before payload header");
  const std::uint64_t plen = get_u64(bytes, 16 + mlen);
  const std::string_view payload = bytes.substr(payload_at);

  Checkpoint ck;
  try {
    ck.manifest.format_version = manifest.at("format_version").get<int>();
    if (ck.manifest.format_version != kFormatVersion)
      throw CheckpointError(where + "format_version " + std::to_string(ck.manifest.format_version) +
                            " is not supported (expected " + std::to_string(kFormatVersion) + ")");
    ck.manifest.kind = manifest.value("kind", "");
    ck.manifest.config = manifest.value("config", json::object());
    ck.manifest.epoch = manifest.value("epoch", -1);
    ck.manifest.dev_metrics = manifest.value("dev_metrics", json::object());
    for (const json& t : manifest.at("tensors")) {
      const std::string name = t.at("name").get<std::string>();
      const std::string tag = where + "tensor '" + name + "': ";
      if (t.at("dtype").get<std::string>() != "f32") throw CheckpointError(tag + "unsupported dtype");
      const auto rows = t.at("shape").at(0).get<Eigen::Index>();
      const auto cols = t.at("shape").at(1).get<Eigen::Index>();
      const auto off = t.at("byte_offset").get<std::uint64_t>();
      const auto len = t.at("byte_len").get<std::uint64_t>();
      if (rows < 0 || cols < 0 || len != static_cast<std::uint64_t>(rows * cols) * sizeof(float))
        throw CheckpointError(tag + "shape does not match byte length");
      if (off + len > plen) throw CheckpointError(tag + "byte range exceeds declared payload");
      if (off + len > payload.size()) throw CheckpointError(tag + "payload truncated");
      if (t.contains("crc32") && crc_of(payload.data() + off, len) != t.at("crc32").get<std::uint32_t>())
        throw CheckpointError(tag + "checksum mismatch (corrupt payload)");
      ag::FMatrix m(rows, cols);
      std::memcpy(m.data(), payload.data() + off, len);
      ck.tensors.emplace(name, std::move(m));
    }
  } catch (const json::exception& e) {
    throw CheckpointError(where + "malformed manifest: " + e.what());
  }
  if (payload.size() != plen)
    throw CheckpointError(where + "payload is " + std::to_string(payload.size()) + " bytes, manifest declares " +
                          std::to_string(plen));
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const nn::ParamRefs& params, const Manifest& manifest) {
  io::write_file_atomic(path, serialize(params, manifest));
}

void save_tensors(const std::filesystem::path& path, const std::map<std::string, ag::FMatrix>& tensors,
                  const Manifest& manifest) {
  std::map<std::string, const ag::FMatrix*> refs;
  for (const auto& [name, t] : tensors) refs.emplace(name, &t);
  io::write_file_atomic(path, build(refs, manifest));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw CheckpointError("checkpoint not found: " + path.string());
  return deserialize(io::read_file(path), path.string());
}

void apply_checkpoint(const Checkpoint& ckpt, const nn::ParamRefs& params, bool strict) {
  std::set<std::string> used;
  for (ag::Parameter* p : params) {
    const ag::FMatrix& t = ckpt.at(p->name);
    if (t.rows() != p->rows() || t.cols() != p->cols())
      throw CheckpointError("tensor '" + p->name + "': shape " + std::to_string(t.rows()) + "x" +
                            std::to_string(t.cols()) + " does not match parameter " + std::to_string(p->rows()) + "x" +
                            std::to_string(p->cols()));
    p->value = t;
    p->zero_grad();
    used.insert(p->name);
  }
  if (strict)
    for (const auto& [name, t] : ckpt.tensors)
      if (!used.count(name)) throw CheckpointError("tensor '" + name + "' has no matching parameter");
}

}  // namespace adamrc::ckpt
