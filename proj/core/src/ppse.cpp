#include "ppssl/ppse.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace ppssl::ppse {

namespace {

constexpr char kMagic[4] = {'P', 'P', 'S', 'E'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw ParseError(path + ": truncated while reading " + what);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

void put_f32(std::ostream& out, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(out, u);
}

}  // namespace

void write_matrix(const std::string& path, const Tensor& rows) {
  if (rows.ndim() != 2) throw StructuralError("embedding matrix must be 2-d, got " + rows.shape_str());
  if (!rows.all_finite()) throw StructuralError("embedding matrix has non-finite entries");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(rows.dim(0)));
  put_u32(out, static_cast<std::uint32_t>(rows.dim(1)));
  for (std::int64_t i = 0; i < rows.size(); ++i) put_f32(out, static_cast<float>(rows[i]));
  out.flush();
  if (!out) throw IoError("short write: " + path);
}

Tensor read_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError(path + ": not an embedding file (bad magic)");
  const std::uint32_t version = get_u32(in, path, "version");
  if (version != kVersion)
    throw ParseError(path + ": unsupported version " + std::to_string(version));
  const std::uint32_t count = get_u32(in, path, "row count");
  const std::uint32_t dim = get_u32(in, path, "dim");
  Tensor rows({static_cast<int>(count), static_cast<int>(dim)});
  for (std::int64_t i = 0; i < rows.size(); ++i) {
    const std::uint32_t u = get_u32(in, path, "payload");
    float f;
    std::memcpy(&f, &u, 4);
    rows[i] = static_cast<double>(f);
  }
  char extra;
  if (in.read(&extra, 1)) throw ParseError(path + ": trailing bytes after payload");
  return rows;
}

void write_ids(const std::string& path, const std::vector<std::string>& ids) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (const auto& id : ids) {
    if (id.empty() || id.find('\n') != std::string::npos)
      throw StructuralError("invalid id in index: '" + id + "'");
    out << id << '\n';
  }
  out.flush();
  if (!out) throw IoError("short write: " + path);
}

std::vector<std::string> read_ids(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw ParseError(path + ": blank id at row " + std::to_string(ids.size()));
    ids.push_back(line);
  }
  return ids;
}

void write_table(const std::string& matrix_path, const std::string& ids_path, const Table& table) {
  if (table.rows.ndim() != 2 || table.rows.dim(0) != static_cast<int>(table.ids.size()))
    throw StructuralError("table index size " + std::to_string(table.ids.size()) +
                          " does not match matrix " + table.rows.shape_str());
  write_matrix(matrix_path, table.rows);
  write_ids(ids_path, table.ids);
}

Table read_table(const std::string& matrix_path, const std::string& ids_path) {
  Table t;
  t.rows = read_matrix(matrix_path);
  t.ids = read_ids(ids_path);
  if (t.rows.dim(0) != static_cast<int>(t.ids.size()))
    throw StructuralError(ids_path + ": " + std::to_string(t.ids.size()) + " ids for " +
                          std::to_string(t.rows.dim(0)) + " rows in " + matrix_path);
  return t;
}

void write_labels(const std::string& path, const std::vector<std::string>& ids,
                  const std::vector<int>& labels) {
  if (ids.size() != labels.size())
    throw StructuralError("label sidecar: " + std::to_string(ids.size()) + " ids vs " +
                          std::to_string(labels.size()) + " labels");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i].empty() || ids[i].find_first_of("\t\n") != std::string::npos)
      throw StructuralError("invalid id in label sidecar: '" + ids[i] + "'");
    out << ids[i] << '\t' << labels[i] << '\n';
  }
  out.flush();
  if (!out) throw IoError("short write: " + path);
}

std::vector<std::pair<std::string, int>> read_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::vector<std::pair<std::string, int>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0)
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected id<TAB>label");
    int label = 0;
    try {
      std::size_t used = 0;
      label = std::stoi(line.substr(tab + 1), &used);
      if (used != line.size() - tab - 1) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": label is not an integer");
    }
    if (label < 0)
      throw ParseError(path + ":" + std::to_string(lineno) + ": negative label");
    out.emplace_back(line.substr(0, tab), label);
  }
  return out;
}

std::string sidecar_path(const std::string& matrix_path, const std::string& ext) {
  std::filesystem::path p(matrix_path);
  p.replace_extension(ext);
  return p.string();
}

}  // namespace ppssl::ppse
