#include <doctest.h>

#include "ppssl/image.hpp"
#include "test_support.hpp"

using namespace ppssl;

TEST_SUITE("image") {

TEST_CASE("png round-trip is exact on quantized values") {
  Rng rng(100);
  Tensor t({3, 9, 7});
  for (std::int64_t i = 0; i < t.size(); ++i)
    t[i] = double(rng.uniform_int(256)) / 255.0;
  testing::TempDir dir;
  const std::string path = dir.file("roundtrip.png");
  img::save_png(path, t);
  Tensor back = img::load_png(path);
  REQUIRE(back.shape() == t.shape());
  for (std::int64_t i = 0; i < t.size(); ++i) CHECK(back[i] == doctest::Approx(t[i]).epsilon(1e-12));
}

TEST_CASE("load rejects a missing file") {
  CHECK_THROWS_AS(img::load_png("/nonexistent/nowhere.png"), IoError);
}

TEST_CASE("bilinear resize 1-d oracle") {
  Tensor t = Tensor::from_data({1, 1, 2}, {0.0, 1.0});
  Tensor r = img::bilinear_resize(t, 1, 4);
  CHECK(r[0] == doctest::Approx(0.0));
  CHECK(r[1] == doctest::Approx(0.25));
  CHECK(r[2] == doctest::Approx(0.75));
  CHECK(r[3] == doctest::Approx(1.0));
}

TEST_CASE("resize preserves constants") {
  Tensor t = Tensor::full({3, 5, 5}, 0.37);
  Tensor r = img::bilinear_resize(t, 13, 8);
  for (std::int64_t i = 0; i < r.size(); ++i) CHECK(r[i] == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("resize_shorter keeps aspect") {
  Tensor t({3, 100, 50});
  Tensor r = img::resize_shorter(t, 25);
  CHECK(r.dim(1) == 50);
  CHECK(r.dim(2) == 25);
  Tensor q({3, 40, 120});
  Tensor s = img::resize_shorter(q, 20);
  CHECK(s.dim(1) == 20);
  CHECK(s.dim(2) == 60);
}

TEST_CASE("crop bounds checked") {
  Tensor t({3, 8, 8});
  CHECK_THROWS_AS(img::crop(t, 4, 4, 5, 4), StructuralError);
  CHECK_THROWS_AS(img::crop(t, -1, 0, 4, 4), StructuralError);
  Tensor c = img::crop(t, 2, 3, 4, 5);
  CHECK(c.shape() == std::vector<int>{3, 4, 5});
}

TEST_CASE("center_crop picks the middle window") {
  Tensor t({1, 4, 4});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) t[y * 4 + x] = y * 4 + x;
  Tensor c = img::center_crop(t, 2, 2);
  CHECK(c[0] == 5.0);
  CHECK(c[3] == 10.0);
}

TEST_CASE("hflip reverses rows and is an involution") {
  Tensor t = Tensor::from_data({1, 1, 3}, {1, 2, 3});
  Tensor f = img::hflip(t);
  CHECK(f[0] == 3.0);
  CHECK(f[2] == 1.0);
  Tensor ff = img::hflip(f);
  for (std::int64_t i = 0; i < t.size(); ++i) CHECK(ff[i] == t[i]);
}

}  // TEST_SUITE
