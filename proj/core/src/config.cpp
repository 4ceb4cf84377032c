#include "sct/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "sct/errors.hpp"

namespace sct {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  std::ostringstream os;
  os << "config key '" << key << "': cannot read '" << value << "' as " << want;
  throw DomainError(os.str());
}

double to_double(std::string_view key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    bad_value(key, v, "a number");
  }
  if (used != v.size() || !std::isfinite(x)) bad_value(key, v, "a finite number");
  return x;
}

long long to_int(std::string_view key, const std::string& v) {
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    bad_value(key, v, "an integer");
  }
  if (used != v.size()) bad_value(key, v, "an integer");
  return x;
}

std::size_t to_count(std::string_view key, const std::string& v) {
  const long long x = to_int(key, v);
  if (x < 0) bad_value(key, v, "a non-negative integer");
  return static_cast<std::size_t>(x);
}

bool to_bool(std::string_view key, const std::string& v) {
  if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
  if (v == "false" || v == "no" || v == "0" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::string num(double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

struct Key {
  const char* name;
  std::function<void(ModelConfig&, const std::string&)> set;
  std::function<std::string(const ModelConfig&)> get;
  const char* meaning;
};

const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      {"family",
       [](ModelConfig& c, const std::string& v) { c.family = marginal::parse_family(v); },
       [](const ModelConfig& c) { return std::string(marginal::family_name(c.family)); },
       "parametric marginal family: identity, gaussian or skew-t3 (shared degrees of freedom)"},
      {"use_h", [](ModelConfig& c, const std::string& v) { c.use_h = to_bool("use_h", v); },
       [](const ModelConfig& c) { return std::string(c.use_h ? "true" : "false"); },
       "enable the onion spline correction layer"},
      {"D",
       [](ModelConfig& c, const std::string& v) { c.D = static_cast<int>(to_int("D", v)); },
       [](const ModelConfig& c) { return std::to_string(c.D); },
       "free spline parameters per location"},
      {"a", [](ModelConfig& c, const std::string& v) { c.a = to_double("a", v); },
       [](const ModelConfig& c) { return num(c.a); },
       "lower boundary of the flexible spline region (standardized scale)"},
      {"b", [](ModelConfig& c, const std::string& v) { c.b = to_double("b", v); },
       [](const ModelConfig& c) { return num(c.b); },
       "upper boundary of the flexible spline region (standardized scale)"},
      {"M", [](ModelConfig& c, const std::string& v) { c.M = to_count("M", v); },
       [](const ModelConfig& c) { return std::to_string(c.M); },
       "inducing locations (first M of the maximin ordering); 64 suits regional grids, 256 global"},
      {"g", [](ModelConfig& c, const std::string& v) { c.g = to_double("g", v); },
       [](const ModelConfig& c) { return num(c.g); },
       "prior spread of the map noise variances; SD(d^2) = g E(d^2), larger is weaker"},
      {"epsilon", [](ModelConfig& c, const std::string& v) { c.epsilon = to_double("epsilon", v); },
       [](const ModelConfig& c) { return num(c.epsilon); },
       "neighbor relevance threshold that caps the conditioning set size"},
      {"max_conditioning",
       [](ModelConfig& c, const std::string& v) { c.max_conditioning = to_count("max_conditioning", v); },
       [](const ModelConfig& c) { return std::to_string(c.max_conditioning); },
       "hard upper bound on the conditioning set size"},
      {"kernel_zeta",
       [](ModelConfig& c, const std::string& v) { c.kernel_zeta = priors::parse_kernel(v); },
       [](const ModelConfig& c) { return std::string(priors::kernel_name(c.kernel_zeta)); },
       "spatial kernel of the marginal parameter fields"},
      {"kernel_beta",
       [](ModelConfig& c, const std::string& v) { c.kernel_beta = priors::parse_kernel(v); },
       [](const ModelConfig& c) { return std::string(priors::kernel_name(c.kernel_beta)); },
       "spatial kernel of the spline coefficient fields"},
      {"optimizer",
       [](ModelConfig& c, const std::string& v) { c.optimizer.algorithm = opt::parse_algorithm(v); },
       [](const ModelConfig& c) { return std::string(opt::algorithm_name(c.optimizer.algorithm)); },
       "quasi-newton (L-BFGS) or first-order-adaptive (Adam)"},
      {"max_iter",
       [](ModelConfig& c, const std::string& v) {
         c.optimizer.max_iter = static_cast<int>(to_int("max_iter", v));
       },
       [](const ModelConfig& c) { return std::to_string(c.optimizer.max_iter); },
       "iteration budget of the marginal fit"},
      {"grad_tol",
       [](ModelConfig& c, const std::string& v) { c.optimizer.grad_tol = to_double("grad_tol", v); },
       [](const ModelConfig& c) { return num(c.optimizer.grad_tol); },
       "gradient tolerance of the marginal fit"},
      {"learning_rate",
       [](ModelConfig& c, const std::string& v) {
         c.optimizer.learning_rate = to_double("learning_rate", v);
       },
       [](const ModelConfig& c) { return num(c.optimizer.learning_rate); },
       "step size of the first-order-adaptive optimizer"},
      {"patience",
       [](ModelConfig& c, const std::string& v) {
         c.optimizer.patience = static_cast<int>(to_int("patience", v));
       },
       [](const ModelConfig& c) { return std::to_string(c.optimizer.patience); },
       "iterations without validation improvement before early stopping (0 disables)"},
      {"tm_max_iter",
       [](ModelConfig& c, const std::string& v) {
         c.tm_optimizer.max_iter = static_cast<int>(to_int("tm_max_iter", v));
       },
       [](const ModelConfig& c) { return std::to_string(c.tm_optimizer.max_iter); },
       "iteration budget of the transport map hyperparameter fit"},
      {"validation_fraction",
       [](ModelConfig& c, const std::string& v) {
         c.validation_fraction = to_double("validation_fraction", v);
       },
       [](const ModelConfig& c) { return num(c.validation_fraction); },
       "share of training replicates held out for early stopping"},
      {"seed",
       [](ModelConfig& c, const std::string& v) {
         c.optimizer.seed = c.tm_optimizer.seed = static_cast<std::uint64_t>(to_count("seed", v));
       },
       [](const ModelConfig& c) { return std::to_string(c.optimizer.seed); },
       "seed of the validation split"},
      {"standardize",
       [](ModelConfig& c, const std::string& v) { c.standardize = to_bool("standardize", v); },
       [](const ModelConfig& c) { return std::string(c.standardize ? "true" : "false"); },
       "global z-standardization of the training data before fitting"},
  };
  return k;
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw DomainError("config: " + m); };
  if (!(a < b)) fail("a must be smaller than b");
  if (D < 1) fail("D must be at least 1");
  if (M < 1) fail("M must be at least 1");
  if (!(g > 0.0)) fail("g must be positive");
  if (!(epsilon > 0.0 && epsilon < 1.0)) fail("epsilon must lie in (0, 1)");
  if (max_conditioning < 1) fail("max_conditioning must be at least 1");
  if (optimizer.max_iter < 1 || tm_optimizer.max_iter < 1) fail("iteration budgets must be positive");
  if (!(optimizer.grad_tol > 0.0)) fail("grad_tol must be positive");
  if (!(optimizer.learning_rate > 0.0)) fail("learning_rate must be positive");
  if (optimizer.patience < 0) fail("patience must be non-negative");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    fail("validation_fraction must lie in [0, 1)");
  }
}

ModelConfig parse_config(std::string_view text) {
  ModelConfig c;
  std::map<std::string, const Key*> index;
  for (const auto& k : keys()) index[k.name] = &k;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  std::map<std::string, int> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw DomainError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    std::string value = trim(std::string_view(t).substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    const auto it = index.find(key);
    if (it == index.end()) {
      throw DomainError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    if (seen.count(key)) {
      throw DomainError("config line " + std::to_string(lineno) + ": key '" + key +
                        "' repeats line " + std::to_string(seen[key]));
    }
    seen[key] = lineno;
    it->second->set(c, value);
  }
  c.validate();
  return c;
}

ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string render_config(const ModelConfig& c) {
  std::ostringstream os;
  for (const auto& k : keys()) os << k.name << " = " << k.get(c) << "\n";
  return os.str();
}

std::string explain_config(const ModelConfig& c) {
  const ModelConfig d;
  std::ostringstream os;
  for (const auto& k : keys()) {
    os << k.name << " = " << k.get(c) << "  # default " << k.get(d) << "; " << k.meaning << "\n";
  }
  return os.str();
}

}  // namespace sct
