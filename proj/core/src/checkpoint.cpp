#include "ppssl/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace ppssl::train {
namespace {

constexpr char kMagic[4] = {'P', 'P', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxDims = 8;
constexpr std::uint64_t kMaxNameLen = 4096;
constexpr std::int64_t kMaxElements = std::int64_t(1) << 31;

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = char((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

void put_i64(std::ostream& out, long long v) { put_u64(out, std::bit_cast<std::uint64_t>(static_cast<std::int64_t>(v))); }

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
      (std::uint32_t(b[3]) << 24);
  return true;
}

bool get_u64(std::istream& in, std::uint64_t& v) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return true;
}

bool get_i64(std::istream& in, long long& v) {
  std::uint64_t u;
  if (!get_u64(in, u)) return false;
  v = static_cast<long long>(std::bit_cast<std::int64_t>(u));
  return true;
}

bool get_f64(std::istream& in, double& v) {
  std::uint64_t u;
  if (!get_u64(in, u)) return false;
  v = std::bit_cast<double>(u);
  return true;
}

[[noreturn]] void truncated(const std::string& path) {
  throw ParseError("truncated checkpoint '" + path + "'");
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::set<std::string> seen;
  for (const auto& [name, t] : c.tensors) {
    if (name.empty() || name.size() > kMaxNameLen)
      throw StructuralError("checkpoint tensor with empty or oversized name");
    if (!seen.insert(name).second)
      throw StructuralError("duplicate checkpoint tensor '" + name + "'");
    if (t.ndim() == 0 || t.ndim() > int(kMaxDims))
      throw StructuralError("checkpoint tensor '" + name + "' has unsupported rank");
    if (!t.all_finite()) throw StructuralError("checkpoint tensor '" + name + "' is not finite");
  }

  std::ostringstream buf(std::ios::binary);
  buf.write(kMagic, 4);
  put_u32(buf, kVersion);
  put_u64(buf, c.settings_text.size());
  buf.write(c.settings_text.data(), std::streamsize(c.settings_text.size()));
  put_i64(buf, c.epoch);
  put_i64(buf, c.step);
  put_i64(buf, c.queue_write_head);
  put_i64(buf, c.queue_fill);
  put_u32(buf, std::uint32_t(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    put_u64(buf, name.size());
    buf.write(name.data(), std::streamsize(name.size()));
    put_u32(buf, std::uint32_t(t.ndim()));
    for (int d = 0; d < t.ndim(); ++d) put_u32(buf, std::uint32_t(t.dim(d)));
    for (std::int64_t i = 0; i < t.size(); ++i) put_f64(buf, t[i]);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint '" + path + "' for writing");
  const std::string bytes = buf.str();
  out.write(bytes.data(), std::streamsize(bytes.size()));
  out.flush();
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");

  char magic[4];
  if (!in.read(magic, 4)) truncated(path);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("'" + path + "' is not a checkpoint (bad magic)");
  std::uint32_t version;
  if (!get_u32(in, version)) truncated(path);
  if (version != kVersion)
    throw ParseError("checkpoint '" + path + "' has unsupported version " +
                     std::to_string(version));

  Checkpoint c;
  std::uint64_t text_len;
  if (!get_u64(in, text_len)) truncated(path);
  if (text_len > (std::uint64_t(1) << 24))
    throw ParseError("checkpoint '" + path + "' declares an oversized settings block");
  c.settings_text.resize(text_len);
  if (text_len && !in.read(c.settings_text.data(), std::streamsize(text_len))) truncated(path);
  if (!get_i64(in, c.epoch) || !get_i64(in, c.step) || !get_i64(in, c.queue_write_head) ||
      !get_i64(in, c.queue_fill))
    truncated(path);

  std::uint32_t count;
  if (!get_u32(in, count)) truncated(path);
  std::set<std::string> seen;
  c.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint64_t name_len;
    if (!get_u64(in, name_len)) truncated(path);
    if (name_len == 0 || name_len > kMaxNameLen)
      throw ParseError("checkpoint '" + path + "' has a tensor with a bad name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), std::streamsize(name_len))) truncated(path);
    if (!seen.insert(name).second)
      throw ParseError("checkpoint '" + path + "' repeats tensor '" + name + "'");
    std::uint32_t ndim;
    if (!get_u32(in, ndim)) truncated(path);
    if (ndim == 0 || ndim > kMaxDims)
      throw ParseError("checkpoint '" + path + "' tensor '" + name + "' has unsupported rank");
    std::vector<int> shape(ndim);
    std::int64_t total = 1;
    for (auto& d : shape) {
      std::uint32_t dim;
      if (!get_u32(in, dim)) truncated(path);
      if (dim == 0 || dim > std::uint32_t(kMaxElements))
        throw ParseError("checkpoint '" + path + "' tensor '" + name + "' has a bad dimension");
      d = int(dim);
      total *= d;
      if (total > kMaxElements)
        throw ParseError("checkpoint '" + path + "' tensor '" + name + "' is oversized");
    }
    Tensor t(shape);
    for (std::int64_t j = 0; j < t.size(); ++j)
      if (!get_f64(in, t[j])) truncated(path);
    if (!t.all_finite())
      throw ParseError("checkpoint '" + path + "' tensor '" + name + "' is not finite");
    c.tensors.emplace_back(std::move(name), std::move(t));
  }

  char extra;
  if (in.read(&extra, 1)) throw ParseError("trailing bytes after checkpoint '" + path + "'");
  return c;
}

}  // namespace ppssl::train
