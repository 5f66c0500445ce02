#include "ppssl/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>

namespace ppssl::config {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool identifier_shaped(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return true;
}

// Shortest decimal form that parses back to the same bits.
std::string format_double(double v) {
  char buf[64];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

bool parse_ll(const std::string& s, long long& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtoll(s.c_str(), &end, 10);
  return errno == 0 && end == s.c_str() + s.size();
}

std::optional<std::string> apply_int(const std::string& v, int& out) {
  long long ll;
  if (!parse_ll(v, ll) || ll < std::numeric_limits<int>::min() ||
      ll > std::numeric_limits<int>::max())
    return "expected an integer, got '" + v + "'";
  out = static_cast<int>(ll);
  return std::nullopt;
}

std::optional<std::string> apply_u64(const std::string& v, std::uint64_t& out) {
  if (v.empty() || v[0] == '-' || v[0] == '+') return "expected an unsigned integer, got '" + v + "'";
  errno = 0;
  char* end = nullptr;
  std::uint64_t r = std::strtoull(v.c_str(), &end, 10);
  if (errno != 0 || end != v.c_str() + v.size())
    return "expected an unsigned integer, got '" + v + "'";
  out = r;
  return std::nullopt;
}

std::optional<std::string> apply_double(const std::string& v, double& out) {
  if (v.empty()) return std::string("expected a number, got ''");
  errno = 0;
  char* end = nullptr;
  double r = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size()) return "expected a number, got '" + v + "'";
  if (!std::isfinite(r)) return "expected a finite number, got '" + v + "'";
  out = r;
  return std::nullopt;
}

std::optional<std::string> apply_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "1") {
    out = true;
    return std::nullopt;
  }
  if (v == "false" || v == "0") {
    out = false;
    return std::nullopt;
  }
  return "expected true/false, got '" + v + "'";
}

struct Binding {
  const char* key;
  std::function<std::optional<std::string>(Settings&, const std::string&)> apply;
  std::function<std::string(const Settings&)> render;
};

template <class Ref>
Binding bind_int(const char* key, Ref ref) {
  return {key, [ref](Settings& s, const std::string& v) { return apply_int(v, ref(s)); },
          [ref](const Settings& s) {
            Settings c = s;
            return std::to_string(ref(c));
          }};
}

template <class Ref>
Binding bind_double(const char* key, Ref ref) {
  return {key, [ref](Settings& s, const std::string& v) { return apply_double(v, ref(s)); },
          [ref](const Settings& s) {
            Settings c = s;
            return format_double(ref(c));
          }};
}

template <class Ref>
Binding bind_bool(const char* key, Ref ref) {
  return {key, [ref](Settings& s, const std::string& v) { return apply_bool(v, ref(s)); },
          [ref](const Settings& s) {
            Settings c = s;
            return ref(c) ? "true" : "false";
          }};
}

template <class Ref>
Binding bind_string(const char* key, Ref ref) {
  return {key,
          [ref](Settings& s, const std::string& v) {
            ref(s) = v;
            return std::nullopt;
          },
          [ref](const Settings& s) {
            Settings c = s;
            return ref(c);
          }};
}

template <class Ref>
Binding bind_u64(const char* key, Ref ref) {
  return {key, [ref](Settings& s, const std::string& v) { return apply_u64(v, ref(s)); },
          [ref](const Settings& s) {
            Settings c = s;
            return std::to_string(ref(c));
          }};
}

// Canonical key order; snapshot() and resolve() both walk this table, so
// the two stay in sync by construction.
const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = {
      bind_string("data.manifest", [](Settings& s) -> std::string& { return s.data.manifest; }),
      bind_int("data.train_size", [](Settings& s) -> int& { return s.data.train_size; }),
      bind_int("data.test_resize", [](Settings& s) -> int& { return s.data.test_resize; }),
      bind_int("data.test_size", [](Settings& s) -> int& { return s.data.test_size; }),
      bind_string("data.norm", [](Settings& s) -> std::string& { return s.data.norm; }),
      bind_string("model.encoder", [](Settings& s) -> std::string& { return s.model.encoder; }),
      bind_int("model.width", [](Settings& s) -> int& { return s.model.width; }),
      bind_bool("model.conv_bias", [](Settings& s) -> bool& { return s.model.conv_bias; }),
      bind_int("model.proj_hidden", [](Settings& s) -> int& { return s.model.proj_hidden; }),
      bind_int("model.proj_dim", [](Settings& s) -> int& { return s.model.proj_dim; }),
      bind_double("contrastive.tau", [](Settings& s) -> double& { return s.contrastive.tau; }),
      bind_int("contrastive.queue", [](Settings& s) -> int& { return s.contrastive.queue; }),
      bind_bool("ais.disable", [](Settings& s) -> bool& { return s.ais.disable; }),
      bind_double("ais.alpha", [](Settings& s) -> double& { return s.ais.alpha; }),
      bind_double("ais.tau", [](Settings& s) -> double& { return s.ais.tau; }),
      bind_int("ais.channels", [](Settings& s) -> int& { return s.ais.channels; }),
      bind_int("ais.delay_epochs", [](Settings& s) -> int& { return s.ais.delay_epochs; }),
      bind_string("ais.corpus", [](Settings& s) -> std::string& { return s.ais.corpus; }),
      bind_string("ais.provider", [](Settings& s) -> std::string& { return s.ais.provider; }),
      bind_int("ais.teacher_dim", [](Settings& s) -> int& { return s.ais.teacher_dim; }),
      bind_double("ais.kappa", [](Settings& s) -> double& { return s.ais.kappa; }),
      bind_int("ais.fixture_classes", [](Settings& s) -> int& { return s.ais.fixture_classes; }),
      bind_string("ais.image_cache", [](Settings& s) -> std::string& { return s.ais.image_cache; }),
      bind_string("ais.text_cache", [](Settings& s) -> std::string& { return s.ais.text_cache; }),
      bind_bool("iadm.disable", [](Settings& s) -> bool& { return s.iadm.disable; }),
      bind_double("iadm.beta", [](Settings& s) -> double& { return s.iadm.beta; }),
      bind_int("iadm.channels", [](Settings& s) -> int& { return s.iadm.channels; }),
      bind_int("iadm.delay_epochs", [](Settings& s) -> int& { return s.iadm.delay_epochs; }),
      bind_int("iadm.saliency_layer", [](Settings& s) -> int& { return s.iadm.saliency_layer; }),
      bind_double("optim.lr", [](Settings& s) -> double& { return s.optim.lr; }),
      bind_double("optim.momentum", [](Settings& s) -> double& { return s.optim.momentum; }),
      bind_double("optim.weight_decay", [](Settings& s) -> double& { return s.optim.weight_decay; }),
      bind_string("optim.schedule", [](Settings& s) -> std::string& { return s.optim.schedule; }),
      bind_int("optim.epochs", [](Settings& s) -> int& { return s.optim.epochs; }),
      bind_int("optim.batch_size", [](Settings& s) -> int& { return s.optim.batch_size; }),
      bind_double("optim.ema", [](Settings& s) -> double& { return s.optim.ema; }),
      bind_u64("run.seed", [](Settings& s) -> std::uint64_t& { return s.run.seed; }),
      bind_string("run.dir", [](Settings& s) -> std::string& { return s.run.dir; }),
      bind_int("run.checkpoint_every", [](Settings& s) -> int& { return s.run.checkpoint_every; }),
  };
  return table;
}

const Binding* find_binding(const std::string& key) {
  for (const auto& b : bindings())
    if (key == b.key) return &b;
  return nullptr;
}

void check_positive_int(std::vector<std::string>& issues, const char* key, int v) {
  if (v <= 0) issues.push_back(std::string(key) + " must be positive");
}

void check_nonneg_int(std::vector<std::string>& issues, const char* key, int v) {
  if (v < 0) issues.push_back(std::string(key) + " must be nonnegative");
}

void check_positive(std::vector<std::string>& issues, const char* key, double v) {
  if (!(v > 0.0) || !std::isfinite(v)) issues.push_back(std::string(key) + " must be positive");
}

void check_nonneg(std::vector<std::string>& issues, const char* key, double v) {
  if (!(v >= 0.0) || !std::isfinite(v)) issues.push_back(std::string(key) + " must be nonnegative");
}

void check_unit_interval(std::vector<std::string>& issues, const char* key, double v) {
  if (!(v >= 0.0 && v <= 1.0)) issues.push_back(std::string(key) + " must lie in [0, 1]");
}

std::vector<std::string> collect_issues(const Settings& s) {
  std::vector<std::string> issues;

  check_positive_int(issues, "data.train_size", s.data.train_size);
  check_positive_int(issues, "data.test_resize", s.data.test_resize);
  check_positive_int(issues, "data.test_size", s.data.test_size);
  if (s.data.test_resize < s.data.test_size)
    issues.push_back("data.test_resize must be at least data.test_size");
  if (s.data.norm != "none" && s.data.norm != "imagenet")
    issues.push_back("data.norm must be none or imagenet");

  if (s.model.encoder != "tinycnn" && s.model.encoder != "resnet50")
    issues.push_back("model.encoder must be tinycnn or resnet50");
  check_positive_int(issues, "model.width", s.model.width);
  check_nonneg_int(issues, "model.proj_hidden", s.model.proj_hidden);
  check_positive_int(issues, "model.proj_dim", s.model.proj_dim);

  check_positive(issues, "contrastive.tau", s.contrastive.tau);
  check_positive_int(issues, "contrastive.queue", s.contrastive.queue);

  check_nonneg(issues, "ais.alpha", s.ais.alpha);
  check_positive(issues, "ais.tau", s.ais.tau);
  check_nonneg_int(issues, "ais.channels", s.ais.channels);
  check_nonneg_int(issues, "ais.delay_epochs", s.ais.delay_epochs);
  if (s.ais.provider != "fixture" && s.ais.provider != "cache")
    issues.push_back("ais.provider must be fixture or cache");
  check_positive_int(issues, "ais.teacher_dim", s.ais.teacher_dim);
  check_unit_interval(issues, "ais.kappa", s.ais.kappa);
  check_positive_int(issues, "ais.fixture_classes", s.ais.fixture_classes);

  check_nonneg(issues, "iadm.beta", s.iadm.beta);
  check_nonneg_int(issues, "iadm.channels", s.iadm.channels);
  check_nonneg_int(issues, "iadm.delay_epochs", s.iadm.delay_epochs);
  if (s.iadm.saliency_layer < -1)
    issues.push_back("iadm.saliency_layer must be -1 (input pixels) or a stage index");

  check_positive(issues, "optim.lr", s.optim.lr);
  if (!(s.optim.momentum >= 0.0 && s.optim.momentum < 1.0))
    issues.push_back("optim.momentum must lie in [0, 1)");
  check_nonneg(issues, "optim.weight_decay", s.optim.weight_decay);
  if (s.optim.schedule != "cosine" && s.optim.schedule != "constant")
    issues.push_back("optim.schedule must be cosine or constant");
  check_positive_int(issues, "optim.epochs", s.optim.epochs);
  check_positive_int(issues, "optim.batch_size", s.optim.batch_size);
  check_unit_interval(issues, "optim.ema", s.optim.ema);
  if (s.optim.batch_size > s.contrastive.queue)
    issues.push_back("optim.batch_size must not exceed contrastive.queue");

  if (s.run.dir.empty()) issues.push_back("run.dir must not be empty");
  check_nonneg_int(issues, "run.checkpoint_every", s.run.checkpoint_every);

  return issues;
}

}  // namespace

Doc Doc::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str(), path);
}

Doc Doc::parse_text(const std::string& text, const std::string& origin) {
  Doc d;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  auto fail = [&](const std::string& msg) -> ParseError {
    return ParseError(origin + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw fail("unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (!identifier_shaped(section)) throw fail("bad section name '" + section + "'");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw fail("expected `key = value`");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (section.empty()) throw fail("key '" + key + "' outside any section");
    if (!identifier_shaped(key)) throw fail("bad key name '" + key + "'");
    const std::string dotted = section + "." + key;
    if (!d.entries.emplace(dotted, value).second) throw fail("duplicate key '" + dotted + "'");
  }
  return d;
}

void Doc::set(const std::string& dotted_key, const std::string& value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos || !identifier_shaped(dotted_key.substr(0, dot)) ||
      !identifier_shaped(dotted_key.substr(dot + 1)))
    throw ConfigError("key '" + dotted_key + "' is not of the form section.key");
  if (value.find('\n') != std::string::npos)
    throw ConfigError("value for '" + dotted_key + "' must be a single line");
  entries[dotted_key] = trim(value);
}

void Settings::validate() const {
  auto issues = collect_issues(*this);
  if (!issues.empty()) throw ConfigError("invalid configuration", std::move(issues));
}

void validate_training_inputs(const Settings& s) {
  std::vector<std::string> issues;
  if (s.data.manifest.empty()) issues.push_back("data.manifest is required for training");
  if (!s.ais.disable && s.ais.alpha > 0.0) {
    if (s.ais.corpus.empty()) issues.push_back("ais.corpus is required while the AIS loss is active");
    if (s.ais.provider == "cache") {
      if (s.ais.image_cache.empty())
        issues.push_back("ais.image_cache is required with the cache provider");
      if (s.ais.text_cache.empty())
        issues.push_back("ais.text_cache is required with the cache provider");
    }
  }
  if (!issues.empty()) throw ConfigError("missing training inputs", std::move(issues));
}

std::string Settings::snapshot() const {
  std::ostringstream out;
  std::string section;
  for (const auto& b : bindings()) {
    const std::string key = b.key;
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << "\n";
      out << "[" << sec << "]\n";
      section = sec;
    }
    out << key.substr(dot + 1) << " = " << b.render(*this) << "\n";
  }
  return out.str();
}

Settings resolve(const Doc& doc, const std::vector<std::string>& overrides) {
  Doc merged = doc;
  std::vector<std::string> issues;
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos) {
      issues.push_back("override '" + ov + "' is not of the form section.key=value");
      continue;
    }
    try {
      merged.set(trim(ov.substr(0, eq)), ov.substr(eq + 1));
    } catch (const ConfigError& e) {
      issues.push_back(e.what());
    }
  }

  Settings s;
  for (const auto& [key, value] : merged.entries) {
    const Binding* b = find_binding(key);
    if (!b) {
      issues.push_back("unknown key '" + key + "'");
      continue;
    }
    if (auto err = b->apply(s, value)) issues.push_back(key + ": " + *err);
  }
  if (!issues.empty()) throw ConfigError("invalid configuration", std::move(issues));

  s.validate();
  return s;
}

data::AugPolicy aug_policy(const Settings& s) {
  data::AugPolicy p;
  p.train_size = s.data.train_size;
  p.test_resize = s.data.test_resize;
  p.test_size = s.data.test_size;
  if (s.data.norm == "imagenet") p = data::with_imagenet_stats(p);
  p.validate();
  return p;
}

}  // namespace ppssl::config
