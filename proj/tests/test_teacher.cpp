#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "ppssl/synthetic.hpp"
#include "ppssl/teacher.hpp"
#include "test_support.hpp"

using namespace ppssl;
using namespace ppssl::teacher;
using ppssl::testing::rand_tensor;
using ppssl::testing::TempDir;

namespace {

double norm_of(const Tensor& v) {
  double n = 0.0;
  for (std::int64_t i = 0; i < v.size(); ++i) n += v[i] * v[i];
  return std::sqrt(n);
}

double cosine(const Tensor& a, const Tensor& b) {
  double d = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) d += a[i] * b[i];
  return d;
}

Tensor unit_vec(int dim, Rng& rng) {
  Tensor v({dim});
  double n = 0.0;
  for (int i = 0; i < dim; ++i) {
    v[i] = rng.normal();
    n += v[i] * v[i];
  }
  n = std::sqrt(n);
  for (int i = 0; i < dim; ++i) v[i] /= n;
  return v;
}

}  // namespace

TEST_SUITE("teacher") {

TEST_CASE("source_id class parsing") {
  CHECK(parse_synthetic_class("class_03/img_017.png") == 3);
  CHECK(parse_synthetic_class("class_15/img_000.png") == 15);
  CHECK(parse_synthetic_class("some/dir/class_7/x.png") == 7);
  CHECK_THROWS_AS(parse_synthetic_class("img_017.png"), ContractError);
  CHECK_THROWS_AS(parse_synthetic_class("class_/img.png"), ContractError);
}

TEST_CASE("description keys are stable and distinct") {
  const std::string a = description_key("stripes across the back");
  CHECK(a == description_key("stripes across the back"));
  CHECK(a != description_key("a notched wing edge"));
  CHECK(a.substr(0, 4) == "txt:");
  CHECK(a.size() == 20);
}

TEST_CASE("fixture embeddings are unit, deterministic, content-sensitive") {
  FixtureConfig cfg;
  cfg.seed = 5;
  FixtureProvider p(cfg);
  Rng rng(1);
  Tensor img = rand_tensor({3, 8, 8}, rng, 0.0, 1.0);
  Tensor u1 = p.image_embedding(img, "class_02/img_000.png");
  Tensor u2 = p.image_embedding(img, "class_02/img_000.png");
  CHECK(norm_of(u1) == doctest::Approx(1.0).epsilon(1e-9));
  for (std::int64_t i = 0; i < u1.size(); ++i) CHECK(u1[i] == u2[i]);

  Tensor other = img;
  other[0] += 0.25;
  Tensor u3 = p.image_embedding(other, "class_02/img_000.png");
  bool moved = false;
  for (std::int64_t i = 0; i < u1.size(); ++i)
    if (u1[i] != u3[i]) moved = true;
  CHECK(moved);

  Tensor t1 = p.text_embedding("feathered crest");
  CHECK(norm_of(t1) == doctest::Approx(1.0).epsilon(1e-9));
  Tensor t2 = p.text_embedding("feathered crest");
  for (std::int64_t i = 0; i < t1.size(); ++i) CHECK(t1[i] == t2[i]);
}

TEST_CASE("fixture clusters by class on real synthetic renders") {
  data::SyntheticSpec spec;
  spec.num_classes = 4;
  spec.per_class = 4;
  spec.canvas = 32;
  spec.seed = 7;
  FixtureConfig cfg;
  cfg.seed = 7;
  FixtureProvider p(cfg);

  char id[64];
  std::vector<Tensor> em;
  std::vector<int> cls;
  for (int c = 0; c < spec.num_classes; ++c)
    for (int i = 0; i < spec.per_class; ++i) {
      std::snprintf(id, sizeof id, "class_%02d/img_%03d.png", c, i);
      em.push_back(p.image_embedding(data::render_synthetic(spec, c, i).image, id));
      cls.push_back(c);
    }
  // brute force: every same-class cosine beats every cross-class cosine
  double min_same = 1.0, max_cross = -1.0;
  for (std::size_t a = 0; a < em.size(); ++a)
    for (std::size_t b = a + 1; b < em.size(); ++b) {
      const double c = cosine(em[a], em[b]);
      if (cls[a] == cls[b])
        min_same = std::min(min_same, c);
      else
        max_cross = std::max(max_cross, c);
    }
  CHECK(min_same > max_cross);
}

TEST_CASE("fixture rejects ids beyond its class budget") {
  FixtureConfig cfg;
  cfg.num_classes = 4;
  FixtureProvider p(cfg);
  Rng rng(2);
  Tensor img = rand_tensor({3, 4, 4}, rng, 0.0, 1.0);
  CHECK_THROWS_AS(p.image_embedding(img, "class_09/img_000.png"), ContractError);
}

TEST_CASE("fixture config validation") {
  FixtureConfig cfg;
  cfg.dim = 1;
  cfg.kappa = 1.5;
  try {
    FixtureProvider p(cfg);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.issues().size() == 2);
  }
}

TEST_CASE("cache provider serves rows by id and misses loudly") {
  TempDir dir;
  Rng rng(3);
  ppse::Table imgs;
  imgs.rows = Tensor({2, 6});
  for (int r = 0; r < 2; ++r) {
    Tensor v = unit_vec(6, rng);
    for (int j = 0; j < 6; ++j) imgs.rows[std::int64_t(r) * 6 + j] = v[j];
  }
  imgs.ids = {"class_00/img_000.png", "class_01/img_000.png"};
  const std::string ipath = dir.file("img.ppse");
  ppse::write_table(ipath, ppse::sidecar_path(ipath, ".ids"), imgs);

  ppse::Table texts;
  texts.rows = Tensor({2, 6});
  for (int r = 0; r < 2; ++r) {
    Tensor v = unit_vec(6, rng);
    for (int j = 0; j < 6; ++j) texts.rows[std::int64_t(r) * 6 + j] = v[j];
  }
  texts.ids = {description_key("one"), description_key("two")};
  const std::string tpath = dir.file("txt.ppse");
  ppse::write_table(tpath, ppse::sidecar_path(tpath, ".ids"), texts);

  CacheProvider cache(ipath, tpath);
  CHECK(cache.dim() == 6);
  Tensor dummy({1});
  // storage is float32: the cache returns the float-cast values exactly
  Tensor u = cache.image_embedding(dummy, "class_01/img_000.png");
  for (int j = 0; j < 6; ++j) CHECK(u[j] == double(float(imgs.rows[6 + j])));
  Tensor t = cache.text_embedding("two");
  for (int j = 0; j < 6; ++j) CHECK(t[j] == double(float(texts.rows[6 + j])));

  CHECK_THROWS_AS(cache.image_embedding(dummy, "class_09/img_000.png"), IoError);
  CHECK_THROWS_AS(cache.text_embedding("three"), IoError);

  CacheProvider image_only(ipath, "");
  CHECK_THROWS_AS(image_only.text_embedding("one"), ConfigError);
  CHECK_THROWS_AS(CacheProvider("", ""), ConfigError);
}

TEST_CASE("cache provider rejects non-unit rows") {
  TempDir dir;
  ppse::Table t;
  t.rows = Tensor::full({1, 4}, 0.6);
  t.ids = {"class_00/img_000.png"};
  const std::string p = dir.file("bad.ppse");
  ppse::write_table(p, ppse::sidecar_path(p, ".ids"), t);
  CHECK_THROWS_AS(CacheProvider(p, ""), ContractError);
}

}  // TEST_SUITE
