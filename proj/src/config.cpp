#include "icfit/config.hpp"

#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace icfit {
namespace {

namespace pt = boost::property_tree;

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(Errc::invalid_argument, what);
}

template <class T>
T read_key(const pt::ptree& tree, const std::string& key, T fallback) {
  const auto node = tree.get_child_optional(key);
  if (!node) return fallback;
  const auto value = node->template get_value_optional<T>();
  if (!value) throw Error(Errc::parse, "bad value for '" + key + "'");
  return *value;
}

ExperimentSpec from_tree(const pt::ptree& tree, ExperimentSpec s) {
  if (auto kind = tree.get_optional<std::string>("kind")) s.set_kind(parse_kind(*kind));
  s.n = read_key(tree, "data.n", s.n);
  s.p = read_key(tree, "data.p", s.p);
  s.customers = read_key(tree, "data.customers", s.customers);
  s.items = read_key(tree, "data.items", s.items);
  s.rate = read_key(tree, "data.rate", s.rate);
  s.replicates = read_key(tree, "data.replicates", s.replicates);
  if (auto setting = tree.get_optional<std::string>("data.setting"))
    s.setting = parse_design(*setting);
  s.engine.iterations = read_key(tree, "engine.iterations", s.engine.iterations);
  s.engine.burn_in = read_key(tree, "engine.burn_in", s.engine.burn_in);
  s.engine.chains = read_key(tree, "engine.chains", s.engine.chains);
  s.engine.seed = read_key(tree, "engine.seed", s.engine.seed);
  return s;
}

}  // namespace

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::ggm:
      return "ggm";
    case Kind::regression:
      return "regression";
    case Kind::randcoef:
      return "randcoef";
  }
  return "?";
}

Kind parse_kind(const std::string& text) {
  if (text == "ggm") return Kind::ggm;
  if (text == "regression") return Kind::regression;
  if (text == "randcoef") return Kind::randcoef;
  throw Error(Errc::invalid_argument, "unknown kind '" + text + "'");
}

std::string to_string(simgen::Design design) {
  return design == simgen::Design::independent ? "independent" : "ar2";
}

simgen::Design parse_design(const std::string& text) {
  if (text == "independent") return simgen::Design::independent;
  if (text == "ar2") return simgen::Design::ar2;
  throw Error(Errc::invalid_argument, "unknown setting '" + text + "'");
}

EngineConfig protocol_engine(Kind kind) {
  EngineConfig cfg;
  if (kind == Kind::ggm) {
    cfg.iterations = 50;
    cfg.burn_in = 30;
  }
  return cfg;
}

void ExperimentSpec::set_kind(Kind k) {
  const EngineConfig old = protocol_engine(kind), next = protocol_engine(k);
  if (engine.iterations == old.iterations && engine.burn_in == old.burn_in) {
    engine.iterations = next.iterations;
    engine.burn_in = next.burn_in;
  }
  kind = k;
}

void ExperimentSpec::validate() const {
  require(replicates >= 1, "replicates must be at least 1");
  require(rate >= 0.0 && rate < 1.0, "missing rate must lie in [0, 1)");
  switch (kind) {
    case Kind::ggm:
      require(n >= 5 && p >= 5, "ggm needs n >= 5 and p >= 5");
      break;
    case Kind::regression:
      require(n >= 5 && p >= 6, "regression needs n >= 5 and p >= 6");
      break;
    case Kind::randcoef:
      require(customers >= 1 && items >= 1, "randcoef needs positive customers and items");
      break;
  }
  engine.validate();
}

ExperimentSpec parse_spec(const std::string& text, ExperimentSpec base) {
  std::istringstream in(text);
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(Errc::parse, e.what());
  }
  ExperimentSpec spec = from_tree(tree, std::move(base));
  spec.validate();
  return spec;
}

ExperimentSpec load_spec(const std::string& path, ExperimentSpec base) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_spec(text.str(), std::move(base));
}

std::string format_spec(const ExperimentSpec& s) {
  std::ostringstream out;
  out.precision(17);
  out << "kind = " << to_string(s.kind) << "\n"
      << "[data]\n"
      << "n = " << s.n << "\n"
      << "p = " << s.p << "\n"
      << "customers = " << s.customers << "\n"
      << "items = " << s.items << "\n"
      << "rate = " << s.rate << "\n"
      << "replicates = " << s.replicates << "\n"
      << "setting = " << to_string(s.setting) << "\n"
      << "[engine]\n"
      << "iterations = " << s.engine.iterations << "\n"
      << "burn_in = " << s.engine.burn_in << "\n"
      << "chains = " << s.engine.chains << "\n"
      << "seed = " << s.engine.seed << "\n";
  return out.str();
}

}  // namespace icfit
