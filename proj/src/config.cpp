#include "dfl/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace dfl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

struct Entry {
  std::string value;
  int line = 0;
};

using Blocks = std::map<std::string, std::map<std::string, Entry>>;

const std::map<std::string, std::set<std::string>> kSchema = {
    {"model", {"d", "A", "h", "prior", "T"}},
    {"grid", {"n_steps"}},
    {"mc", {"n_paths", "seed"}},
    {"control", {"kind", "value", "intercept", "slope", "offset", "u"}},
    {"terminal", {"kind", "F", "G"}},
    {"experiment",
     {"name", "measure", "basis_degree", "picard_iterations", "v_estimator", "quadrature_nodes", "allowance", "zeta"}},
    {"output", {"directory", "formats", "dump_paths"}},
};

Blocks tokenize(const std::string& text, std::vector<std::string>& diag) {
  Blocks blocks;
  std::istringstream in(text);
  std::string raw, block;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']' && line.find('=') == std::string::npos) {
      block = trim(line.substr(1, line.size() - 2));
      if (!kSchema.count(block)) diag.push_back("line " + std::to_string(lineno) + ": unknown block [" + block + "]");
      if (blocks.count(block))
        diag.push_back("line " + std::to_string(lineno) + ": block [" + block + "] appears twice");
      blocks[block];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      diag.push_back("line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
      continue;
    }
    const int start = lineno;
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    // arrays may continue over several lines until the closing bracket
    if (!value.empty() && value.front() == '[')
      while (value.find(']') == std::string::npos && std::getline(in, raw)) {
        ++lineno;
        value += " " + trim(raw.substr(0, raw.find('#')));
      }
    if (block.empty()) {
      diag.push_back("line " + std::to_string(start) + ": key '" + key + "' outside any block");
      continue;
    }
    auto sch = kSchema.find(block);
    if (sch != kSchema.end() && !sch->second.count(key)) {
      diag.push_back("line " + std::to_string(start) + ": unknown key '" + key + "' in [" + block + "]");
      continue;
    }
    if (blocks[block].count(key)) {
      diag.push_back("line " + std::to_string(start) + ": duplicate key '" + block + "." + key + "'");
      continue;
    }
    blocks[block][key] = {value, start};
  }
  return blocks;
}

class Reader {
 public:
  Reader(const Blocks& b, std::vector<std::string>& d) : blocks_(b), diag_(d) {}

  const Entry* find(const std::string& block, const std::string& key) const {
    auto b = blocks_.find(block);
    if (b == blocks_.end()) return nullptr;
    auto k = b->second.find(key);
    return k == b->second.end() ? nullptr : &k->second;
  }

  bool has(const std::string& block, const std::string& key) const { return find(block, key) != nullptr; }

  const Entry* need(const std::string& block, const std::string& key) {
    const Entry* e = find(block, key);
    if (!e) diag_.push_back("missing required key '" + block + "." + key + "'");
    return e;
  }

  std::optional<double> number(const std::string& block, const std::string& key, bool required) {
    const Entry* e = required ? need(block, key) : find(block, key);
    if (!e) return std::nullopt;
    return parse_number(*e, block + "." + key);
  }

  std::optional<long long> integer(const std::string& block, const std::string& key, bool required) {
    auto v = number(block, key, required);
    if (!v) return std::nullopt;
    if (std::floor(*v) != *v || std::abs(*v) > 9.0e15) {
      diag_.push_back(at(*find(block, key)) + block + "." + key + " must be an integer");
      return std::nullopt;
    }
    return (long long)*v;
  }

  std::optional<std::vector<double>> array(const std::string& block, const std::string& key, bool required) {
    const Entry* e = required ? need(block, key) : find(block, key);
    if (!e) return std::nullopt;
    const std::string& v = e->value;
    if (v.size() < 2 || v.front() != '[' || v.back() != ']') {
      diag_.push_back(at(*e) + block + "." + key + " must be a bracketed array");
      return std::nullopt;
    }
    std::string body = v.substr(1, v.size() - 2);
    std::replace(body.begin(), body.end(), ',', ' ');
    std::istringstream in(body);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
      auto x = parse_number({tok, e->line}, block + "." + key);
      if (!x) return std::nullopt;
      out.push_back(*x);
    }
    return out;
  }

  std::optional<std::string> word(const std::string& block, const std::string& key, bool required) {
    const Entry* e = required ? need(block, key) : find(block, key);
    if (!e) return std::nullopt;
    return e->value;
  }

  static std::string at(const Entry& e) { return "line " + std::to_string(e.line) + ": "; }

 private:
  std::optional<double> parse_number(const Entry& e, const std::string& name) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(e.value, &pos);
      if (pos == e.value.size() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    diag_.push_back(at(e) + name + " = '" + e.value + "' is not a finite number");
    return std::nullopt;
  }

  const Blocks& blocks_;
  std::vector<std::string>& diag_;
};

bool one_of(const std::string& v, std::initializer_list<const char*> opts) {
  for (const char* o : opts)
    if (v == o) return true;
  return false;
}

}  // namespace

ParsedConfig parse_config(const std::string& text) {
  ParsedConfig pc;
  auto& diag = pc.diagnostics;
  auto& c = pc.config;
  const Blocks blocks = tokenize(text, diag);
  Reader r(blocks, diag);

  // model
  const auto d = r.integer("model", "d", true);
  const auto A = r.array("model", "A", true);
  const auto h = r.array("model", "h", true);
  const auto prior = r.array("model", "prior", true);
  const auto T = r.number("model", "T", true);
  bool model_shapes = d && A && h && prior && T;
  if (d) {
    c.d = int(*d);
    if (*d < 2) {
      diag.push_back("model.d = " + std::to_string(*d) + ": state space needs d >= 2");
      model_shapes = false;
    }
  }
  if (model_shapes) {
    const long long dd = *d;
    if ((long long)A->size() != dd * dd) {
      diag.push_back("model.A has " + std::to_string(A->size()) + " entries, expected d*d = " + std::to_string(dd * dd));
      model_shapes = false;
    }
    if ((long long)h->size() != dd) {
      diag.push_back("model.h has " + std::to_string(h->size()) + " entries, expected d = " + std::to_string(dd));
      model_shapes = false;
    }
    if ((long long)prior->size() != dd) {
      diag.push_back("model.prior has " + std::to_string(prior->size()) + " entries, expected d = " +
                     std::to_string(dd));
      model_shapes = false;
    }
  }
  if (model_shapes) {
    const int dd = int(*d);
    c.A = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(A->data(), dd, dd);
    c.h = Eigen::Map<const Vec>(h->data(), dd);
    c.prior = Eigen::Map<const Vec>(prior->data(), dd);
    c.T = *T;
    for (auto& s : Model::diagnose(c.A, c.h, c.prior, c.T)) diag.push_back("model: " + s);
  }

  // grid, mc
  if (auto n = r.integer("grid", "n_steps", true)) {
    if (*n < 1)
      diag.push_back("grid.n_steps = " + std::to_string(*n) + " gives a degenerate grid (need n_steps >= 1)");
    else
      c.n_steps = int(*n);
  }
  if (auto n = r.integer("mc", "n_paths", true)) {
    if (*n < 1 || *n > 100000000)
      diag.push_back("mc.n_paths = " + std::to_string(*n) + " must be in 1..1e8");
    else
      c.n_paths = int(*n);
  }
  if (auto s = r.integer("mc", "seed", true)) {
    if (*s < 0)
      diag.push_back("mc.seed must be nonnegative");
    else
      c.seed = std::uint64_t(*s);
  }

  // experiment
  if (auto name = r.word("experiment", "name", true)) {
    c.experiment.name = *name;
    if (std::find(kExperimentNames.begin(), kExperimentNames.end(), *name) == kExperimentNames.end())
      diag.push_back("experiment.name = '" + *name + "' is not a known experiment");
  }
  const std::string& ex = c.experiment.name;
  if (auto m = r.word("experiment", "measure", false)) {
    c.experiment.measure = *m;
    if (!one_of(*m, {"P", "P-tilde"})) diag.push_back("experiment.measure must be P or P-tilde");
    if (!one_of(ex, {"simulate", "filter"})) diag.push_back("experiment.measure applies only to simulate and filter");
  }
  if (auto v = r.integer("experiment", "basis_degree", false)) {
    c.experiment.basis_degree = int(*v);
    if (*v < 0 || *v > 4) diag.push_back("experiment.basis_degree must be in 0..4");
  }
  if (auto v = r.integer("experiment", "picard_iterations", false)) {
    c.experiment.picard_iterations = int(*v);
    if (*v < 0 || *v > 100) diag.push_back("experiment.picard_iterations must be in 0..100");
  }
  if (auto v = r.word("experiment", "v_estimator", false)) {
    c.experiment.v_estimator = *v;
    if (!one_of(*v, {"demeaned", "plain"})) diag.push_back("experiment.v_estimator must be demeaned or plain");
  }
  if (auto v = r.integer("experiment", "quadrature_nodes", false)) {
    c.experiment.quadrature_nodes = int(*v);
    if (*v < 2 || *v > 64) diag.push_back("experiment.quadrature_nodes must be in 2..64");
  }
  if (auto v = r.number("experiment", "allowance", false)) {
    c.experiment.allowance = *v;
    if (*v < 0) diag.push_back("experiment.allowance must be nonnegative");
  }
  if (auto z = r.array("experiment", "zeta", false)) {
    c.experiment.zeta = Eigen::Map<const Vec>(z->data(), Eigen::Index(z->size()));
    if (d && (long long)z->size() != *d) diag.push_back("experiment.zeta must have d entries");
  }

  // control
  if (auto k = r.word("control", "kind", false)) c.control.kind = *k;
  const std::string& ck = c.control.kind;
  if (!one_of(ck, {"zero", "constant", "ramp", "table", "optimal"}))
    diag.push_back("control.kind = '" + ck + "' must be zero, constant, ramp, table or optimal");
  auto forbid = [&](const char* key, const char* kinds) {
    if (r.has("control", key)) diag.push_back(std::string("control.") + key + " applies only to kind " + kinds);
  };
  if (ck == "constant") {
    if (auto v = r.number("control", "value", true)) c.control.value = *v;
  } else {
    forbid("value", "constant");
  }
  if (ck == "ramp") {
    if (auto v = r.number("control", "intercept", true)) c.control.intercept = *v;
    if (auto v = r.number("control", "slope", true)) c.control.slope = *v;
  } else {
    forbid("intercept", "ramp");
    forbid("slope", "ramp");
  }
  if (ck == "optimal") {
    if (auto v = r.number("control", "offset", false)) c.control.offset = *v;
  } else {
    forbid("offset", "optimal");
  }
  if (ck == "table") {
    if (auto v = r.array("control", "u", true)) {
      c.control.table = *v;
      if (c.n_steps > 0 && int(v->size()) != c.n_steps + 1)
        diag.push_back("control.u has " + std::to_string(v->size()) + " values, expected n_steps + 1 = " +
                       std::to_string(c.n_steps + 1));
    }
  } else {
    forbid("u", "table");
  }

  // terminal
  const bool needs_terminal = !one_of(ex, {"simulate", "filter"});
  if (auto k = r.word("terminal", "kind", false)) c.terminal.kind = *k;
  if (!one_of(c.terminal.kind, {"deterministic", "observation-linear"}))
    diag.push_back("terminal.kind must be deterministic or observation-linear");
  if (auto F = r.array("terminal", "F", needs_terminal)) {
    c.terminal.F = Eigen::Map<const Vec>(F->data(), Eigen::Index(F->size()));
    if (d && (long long)F->size() != *d) diag.push_back("terminal.F must have d entries");
  }
  if (c.terminal.kind == "observation-linear") {
    if (auto G = r.array("terminal", "G", true)) {
      c.terminal.G = Eigen::Map<const Vec>(G->data(), Eigen::Index(G->size()));
      if (d && (long long)G->size() != *d) diag.push_back("terminal.G must have d entries");
    }
  } else if (r.has("terminal", "G")) {
    diag.push_back("terminal.G applies only to kind observation-linear");
  }

  // cross-block requirements
  const bool deterministic_control = ck != "optimal";
  if (ex == "drift-check" && (!deterministic_control || c.terminal.kind != "deterministic"))
    diag.push_back("drift-check needs a deterministic control and a deterministic terminal condition");
  if (ex == "optimal-cost" && c.terminal.kind != "deterministic")
    diag.push_back("optimal-cost needs a deterministic terminal condition");
  const bool regression =
      ck == "optimal" || c.terminal.kind != "deterministic" || ex == "optimal-cost" || ex == "bsde-solve";
  if (regression && needs_terminal && c.n_paths > 0 && c.n_paths < 1000)
    diag.push_back("mc.n_paths = " + std::to_string(c.n_paths) + " is below the regression solver minimum of 1000");

  // output
  if (auto v = r.word("output", "directory", false)) c.output.directory = *v;
  if (auto v = r.word("output", "formats", false)) {
    std::string body = *v;
    if (!body.empty() && body.front() == '[' && body.back() == ']') body = body.substr(1, body.size() - 2);
    std::replace(body.begin(), body.end(), ',', ' ');
    std::istringstream in(body);
    c.output.formats.clear();
    for (std::string tok; in >> tok;) {
      if (tok != "csv") diag.push_back("output.formats: unsupported format '" + tok + "' (only csv)");
      c.output.formats.push_back(tok);
    }
  }
  if (auto v = r.integer("output", "dump_paths", false)) {
    c.output.dump_paths = int(*v);
    if (*v < 0) diag.push_back("output.dump_paths must be nonnegative");
  }

  if (pc.diagnostics.empty() && c.n_steps > 0) {
    const double dt = c.T / c.n_steps;
    const double hmax = c.h.cwiseAbs().maxCoeff();
    const double amax = (-c.A.diagonal()).maxCoeff();
    const double bound = 0.01 / std::max(hmax * hmax, amax);
    if (dt > bound)
      c.notes.push_back("dt = " + std::to_string(dt) + " exceeds the step-size guideline 0.01/max(|h|^2, |A_xx|) = " +
                        std::to_string(bound));
  }
  return pc;
}

ParsedConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace dfl
