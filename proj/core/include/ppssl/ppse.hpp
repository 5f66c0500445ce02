#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ppssl/tensor.hpp"

namespace ppssl::ppse {

// Embedding container: binary matrix file plus a text index aligning each
// row with the id it was computed from. Values are stored as float32, so
// a file read back and rewritten is byte-identical.
struct Table {
  Tensor rows;                   // count x dim
  std::vector<std::string> ids;  // one per row
};

void write_matrix(const std::string& path, const Tensor& rows);
Tensor read_matrix(const std::string& path);

void write_ids(const std::string& path, const std::vector<std::string>& ids);
std::vector<std::string> read_ids(const std::string& path);

void write_table(const std::string& matrix_path, const std::string& ids_path, const Table& table);
Table read_table(const std::string& matrix_path, const std::string& ids_path);

// Label sidecar: `id<TAB>label` lines, aligned with a Table by id.
void write_labels(const std::string& path, const std::vector<std::string>& ids,
                  const std::vector<int>& labels);
std::vector<std::pair<std::string, int>> read_labels(const std::string& path);

// `<stem>.<ext>` next to the matrix file, replacing its extension.
std::string sidecar_path(const std::string& matrix_path, const std::string& ext);

}  // namespace ppssl::ppse
