#include <doctest.h>

#include "ppssl/data.hpp"
#include "ppssl/image.hpp"
#include "ppssl/synthetic.hpp"
#include "test_support.hpp"

using namespace ppssl;
using namespace ppssl::data;
using ppssl::testing::TempDir;
using ppssl::testing::read_file_bytes;

namespace {
SyntheticSpec desk_spec() {
  SyntheticSpec s;
  s.num_classes = 2;
  s.per_class = 4;
  s.canvas = 32;
  s.seed = 7;
  s.background_clutter = 0.2;
  return s;
}
}  // namespace

TEST_SUITE("synthetic") {

TEST_CASE("rendering is a pure function of the spec") {
  SyntheticSpec s = desk_spec();
  RenderedImage a = render_synthetic(s, 1, 2);
  RenderedImage b = render_synthetic(s, 1, 2);
  REQUIRE(a.image.same_shape(b.image));
  for (std::int64_t i = 0; i < a.image.size(); ++i) CHECK(a.image[i] == b.image[i]);
  for (std::int64_t i = 0; i < a.mask.size(); ++i) CHECK(a.mask[i] == b.mask[i]);
}

TEST_CASE("mask is hard and nonempty") {
  RenderedImage a = render_synthetic(desk_spec(), 0, 0);
  double covered = 0.0;
  for (std::int64_t i = 0; i < a.mask.size(); ++i) {
    CHECK((a.mask[i] == 0.0 || a.mask[i] == 1.0));
    covered += a.mask[i];
  }
  CHECK(covered > 0.0);
  CHECK(covered < a.mask.size());
}

TEST_CASE("clutter only touches pixels outside the mask") {
  SyntheticSpec clean = desk_spec();
  clean.background_clutter = 0.0;
  SyntheticSpec noisy = desk_spec();
  noisy.background_clutter = 0.5;
  for (int idx = 0; idx < 3; ++idx) {
    RenderedImage a = render_synthetic(clean, 0, idx);
    RenderedImage c = render_synthetic(noisy, 0, idx);
    const int S = clean.canvas;
    bool outside_differs = false;
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        const bool inside = a.mask[std::int64_t(y) * S + x] != 0.0;
        for (int ch = 0; ch < 3; ++ch) {
          const std::int64_t i = (std::int64_t(ch) * S + y) * S + x;
          if (inside)
            CHECK(a.image[i] == c.image[i]);
          else if (a.image[i] != c.image[i])
            outside_differs = true;
        }
      }
    CHECK(outside_differs);
  }
}

TEST_CASE("classes differ while sharing the base shape family") {
  SyntheticSpec s = desk_spec();
  s.num_classes = 8;
  RenderedImage a = render_synthetic(s, 0, 0);
  RenderedImage b = render_synthetic(s, 1, 0);
  bool differ = false;
  for (std::int64_t i = 0; i < a.image.size() && !differ; ++i)
    if (a.image[i] != b.image[i]) differ = true;
  CHECK(differ);
}

TEST_CASE("generation writes the 80/20 split") {
  TempDir dir;
  SyntheticSpec s = desk_spec();
  const std::string manifest = generate_synthetic(s, dir.file("ds"));
  Manifest m = load_manifest(manifest);
  REQUIRE(m.records.size() == 8);
  CHECK(m.num_classes == 2);
  CHECK(m.split_records(Split::train).size() == 6);
  CHECK(m.split_records(Split::test).size() == 2);
}

TEST_CASE("generation is byte-identical across runs") {
  TempDir dir;
  SyntheticSpec s = desk_spec();
  const std::string m1 = generate_synthetic(s, dir.file("run1"));
  const std::string m2 = generate_synthetic(s, dir.file("run2"));
  CHECK(read_file_bytes(m1) == read_file_bytes(m2));
  CHECK(read_file_bytes(dir.file("run1/class_00/img_000.png")) ==
        read_file_bytes(dir.file("run2/class_00/img_000.png")));
  CHECK(read_file_bytes(dir.file("run1/class_01/img_003.png")) ==
        read_file_bytes(dir.file("run2/class_01/img_003.png")));
}

TEST_CASE("generated images decode to the canvas size") {
  TempDir dir;
  SyntheticSpec s = desk_spec();
  generate_synthetic(s, dir.file("ds"));
  Tensor t = img::load_png(dir.file("ds/class_00/img_001.png"));
  CHECK(t.shape() == std::vector<int>{3, 32, 32});
}

TEST_CASE("spec validation") {
  SyntheticSpec s = desk_spec();
  s.num_classes = 17;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = desk_spec();
  s.per_class = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = desk_spec();
  s.background_clutter = -0.1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = desk_spec();
  CHECK_THROWS_AS(render_synthetic(s, 2, 0), StructuralError);
}

}  // TEST_SUITE
