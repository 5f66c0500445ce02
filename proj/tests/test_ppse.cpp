#include <doctest.h>

#include "ppssl/ppse.hpp"
#include "test_support.hpp"

using namespace ppssl;
using namespace ppssl::ppse;
using ppssl::testing::rand_tensor;
using ppssl::testing::read_file_bytes;
using ppssl::testing::TempDir;

TEST_SUITE("ppse") {

TEST_CASE("matrix write-read-write is byte identical") {
  TempDir dir;
  Rng rng(1);
  Tensor rows = rand_tensor({5, 7}, rng);
  const std::string a = dir.file("a.ppse"), b = dir.file("b.ppse");
  write_matrix(a, rows);
  Tensor back = read_matrix(a);
  REQUIRE(back.shape() == rows.shape());
  write_matrix(b, back);
  CHECK(read_file_bytes(a) == read_file_bytes(b));
  // float32 storage: the round trip reproduces the float-cast values exactly
  for (std::int64_t i = 0; i < rows.size(); ++i)
    CHECK(back[i] == double(float(rows[i])));
}

TEST_CASE("header layout") {
  TempDir dir;
  Tensor rows({2, 3});
  for (std::int64_t i = 0; i < 6; ++i) rows[i] = double(i);
  const std::string p = dir.file("m.ppse");
  write_matrix(p, rows);
  const std::string bytes = read_file_bytes(p);
  REQUIRE(bytes.size() == 4 + 4 + 4 + 4 + 6 * 4);
  CHECK(bytes.substr(0, 4) == "PPSE");
  // little-endian u32s: version 1, count 2, dim 3
  const unsigned char* u = reinterpret_cast<const unsigned char*>(bytes.data());
  CHECK(u[4] == 1);  CHECK(u[5] == 0);
  CHECK(u[8] == 2);
  CHECK(u[12] == 3);
}

TEST_CASE("read rejects corrupt files") {
  TempDir dir;
  const std::string p = dir.file("bad.ppse");
  {
    std::ofstream out(p, std::ios::binary);
    out << "NOPE" << std::string(12, '\0');
  }
  CHECK_THROWS_AS(read_matrix(p), ParseError);
  CHECK_THROWS_AS(read_matrix(dir.file("missing.ppse")), IoError);

  Tensor rows = Tensor::zeros({2, 2});
  write_matrix(p, rows);
  std::string bytes = read_file_bytes(p);
  {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << bytes.substr(0, bytes.size() - 2);  // truncate payload
  }
  CHECK_THROWS_AS(read_matrix(p), ParseError);
  {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << bytes << '\0';  // trailing garbage
  }
  CHECK_THROWS_AS(read_matrix(p), ParseError);
  {
    std::string wrong = bytes;
    wrong[4] = 9;  // version
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << wrong;
  }
  CHECK_THROWS_AS(read_matrix(p), ParseError);
}

TEST_CASE("table round trip with ids") {
  TempDir dir;
  Rng rng(2);
  Table t;
  t.rows = rand_tensor({3, 4}, rng);
  t.ids = {"class_00/img_000.png", "class_00/img_001.png", "class_01/img_000.png"};
  const std::string m = dir.file("t.ppse"), ids = dir.file("t.ids");
  write_table(m, ids, t);
  Table back = read_table(m, ids);
  CHECK(back.ids == t.ids);
  for (std::int64_t i = 0; i < t.rows.size(); ++i) CHECK(back.rows[i] == double(float(t.rows[i])));
}

TEST_CASE("table validation") {
  TempDir dir;
  Table t;
  t.rows = Tensor::zeros({2, 2});
  t.ids = {"only-one"};
  CHECK_THROWS_AS(write_table(dir.file("x.ppse"), dir.file("x.ids"), t), StructuralError);

  t.ids = {"a", "b"};
  write_table(dir.file("x.ppse"), dir.file("x.ids"), t);
  ppse::write_ids(dir.file("short.ids"), {"a"});
  CHECK_THROWS_AS(read_table(dir.file("x.ppse"), dir.file("short.ids")), StructuralError);

  Tensor bad = Tensor::zeros({1, 1});
  bad[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(write_matrix(dir.file("nan.ppse"), bad), StructuralError);
}

TEST_CASE("label sidecar round trip") {
  TempDir dir;
  const std::string p = dir.file("f.labels");
  write_labels(p, {"a/1.png", "b/2.png"}, {0, 7});
  auto rows = read_labels(p);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].first == "a/1.png");
  CHECK(rows[0].second == 0);
  CHECK(rows[1].second == 7);

  CHECK_THROWS_AS(write_labels(p, {"a"}, {1, 2}), StructuralError);
  {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << "noseparator\n";
  }
  CHECK_THROWS_AS(read_labels(p), ParseError);
  {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << "a\tnot_a_number\n";
  }
  CHECK_THROWS_AS(read_labels(p), ParseError);
}

TEST_CASE("sidecar path swaps the extension") {
  CHECK(sidecar_path("/x/features.ppse", ".ids") == "/x/features.ids");
  CHECK(sidecar_path("features.ppse", ".labels") == "features.labels");
  CHECK(sidecar_path("noext", ".ids") == "noext.ids");
}

}  // TEST_SUITE
