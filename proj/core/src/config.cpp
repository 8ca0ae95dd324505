#include "lotlab/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "lotlab/errors.hpp"

namespace lotlab {

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::kVanilla: return "vanilla";
    case Mode::kReset: return "reset";
    case Mode::kScheduled: return "scheduled";
  }
  return "?";
}

Mode parse_mode(std::string_view name) {
  if (name == "vanilla") return Mode::kVanilla;
  if (name == "reset") return Mode::kReset;
  if (name == "scheduled") return Mode::kScheduled;
  throw ConfigError("unknown mode '" + std::string(name) + "'");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError(std::string(key) + ": cannot parse '" + std::string(v) +
                      "' as a number");
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError(std::string(key) + ": cannot parse '" + std::string(v) +
                      "' as a non-negative integer");
  return out;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string fmt(std::uint64_t x) { return std::to_string(x); }

struct Key {
  std::string name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::optional<std::string>(const RunConfig&)> get;
};

SyntheticSource& synthetic(RunConfig& c) {
  if (!std::holds_alternative<SyntheticSource>(c.stream.source))
    c.stream.source = SyntheticSource{};
  return std::get<SyntheticSource>(c.stream.source);
}

MnistSource& mnist(RunConfig& c) {
  if (!std::holds_alternative<MnistSource>(c.stream.source))
    c.stream.source = MnistSource{"train-images-idx3-ubyte", "train-labels-idx1-ubyte"};
  return std::get<MnistSource>(c.stream.source);
}

const SyntheticSource* synthetic(const RunConfig& c) {
  return std::get_if<SyntheticSource>(&c.stream.source);
}
const MnistSource* mnist(const RunConfig& c) {
  return std::get_if<MnistSource>(&c.stream.source);
}

ControllerConfig& controller(RunConfig& c) {
  if (!c.controller) c.controller.emplace();
  return *c.controller;
}

// Keys whose value is a double living at a fixed member.
template <typename Access>
Key real(std::string name, Access access) {
  return {name,
          [name, access](RunConfig& c, std::string_view v) {
            access(c) = to_double(name, v);
          },
          [access](const RunConfig& c) -> std::optional<std::string> {
            return fmt(access(const_cast<RunConfig&>(c)));
          }};
}

template <typename Access>
Key count(std::string name, Access access) {
  return {name,
          [name, access](RunConfig& c, std::string_view v) {
            access(c) = static_cast<std::remove_reference_t<decltype(access(c))>>(
                to_u64(name, v));
          },
          [access](const RunConfig& c) -> std::optional<std::string> {
            return fmt(static_cast<std::uint64_t>(access(const_cast<RunConfig&>(c))));
          }};
}

template <typename Access>
Key controller_real(std::string name, Access access) {
  return {name,
          [name, access](RunConfig& c, std::string_view v) {
            access(controller(c)) = to_double(name, v);
          },
          [access](const RunConfig& c) -> std::optional<std::string> {
            if (!c.controller) return std::nullopt;
            return fmt(access(const_cast<ControllerConfig&>(*c.controller)));
          }};
}

template <typename Access>
Key controller_count(std::string name, Access access) {
  return {name,
          [name, access](RunConfig& c, std::string_view v) {
            access(controller(c)) =
                static_cast<std::remove_reference_t<decltype(access(controller(c)))>>(
                    to_u64(name, v));
          },
          [access](const RunConfig& c) -> std::optional<std::string> {
            if (!c.controller) return std::nullopt;
            return fmt(static_cast<std::uint64_t>(
                access(const_cast<ControllerConfig&>(*c.controller))));
          }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    k.push_back({"mode",
                 [](RunConfig& c, std::string_view v) { c.mode = parse_mode(v); },
                 [](const RunConfig& c) -> std::optional<std::string> {
                   return to_string(c.mode);
                 }});
    k.push_back({"seeds",
                 [](RunConfig& c, std::string_view v) {
                   c.seeds.clear();
                   std::string s(v);
                   std::stringstream ss(s);
                   std::string item;
                   while (std::getline(ss, item, ','))
                     c.seeds.push_back(to_u64("seeds", trim(item)));
                   if (c.seeds.empty()) throw ConfigError("seeds: empty list");
                 },
                 [](const RunConfig& c) -> std::optional<std::string> {
                   std::string out;
                   for (std::size_t i = 0; i < c.seeds.size(); ++i)
                     out += (i ? "," : "") + std::to_string(c.seeds[i]);
                   return out;
                 }});
    k.push_back(count("log_interval", [](RunConfig& c) -> auto& { return c.log_interval; }));
    k.push_back({"power_iters",
                 [](RunConfig& c, std::string_view v) {
                   c.probe.power_iters = static_cast<int>(to_u64("power_iters", v));
                 },
                 [](const RunConfig& c) -> std::optional<std::string> {
                   return std::to_string(c.probe.power_iters);
                 }});
    k.push_back(real("power_tol", [](RunConfig& c) -> auto& { return c.probe.tol; }));

    k.push_back({"stream.source",
                 [](RunConfig& c, std::string_view v) {
                   if (v == "synthetic") synthetic(c);
                   else if (v == "mnist") mnist(c);
                   else throw ConfigError("stream.source must be synthetic or mnist");
                 },
                 [](const RunConfig& c) -> std::optional<std::string> {
                   return mnist(c) ? "mnist" : "synthetic";
                 }});
    k.push_back({"stream.mnist_images",
                 [](RunConfig& c, std::string_view v) { mnist(c).images = std::string(v); },
                 [](const RunConfig& c) -> std::optional<std::string> {
                   if (auto* m = mnist(c)) return m->images.string();
                   return std::nullopt;
                 }});
    k.push_back({"stream.mnist_labels",
                 [](RunConfig& c, std::string_view v) { mnist(c).labels = std::string(v); },
                 [](const RunConfig& c) -> std::optional<std::string> {
                   if (auto* m = mnist(c)) return m->labels.string();
                   return std::nullopt;
                 }});
    auto syn_count = [](std::string name, std::size_t SyntheticSource::*member) {
      return Key{name,
                 [name, member](RunConfig& c, std::string_view v) {
                   synthetic(c).*member = to_u64(name, v);
                 },
                 [member](const RunConfig& c) -> std::optional<std::string> {
                   if (auto* s = synthetic(c)) return std::to_string(s->*member);
                   return std::nullopt;
                 }};
    };
    k.push_back(syn_count("stream.synthetic.n", &SyntheticSource::n));
    k.push_back(syn_count("stream.synthetic.dim", &SyntheticSource::dim));
    k.push_back(syn_count("stream.synthetic.classes", &SyntheticSource::classes));
    k.push_back({"stream.synthetic.separation",
                 [](RunConfig& c, std::string_view v) {
                   synthetic(c).separation = to_double("stream.synthetic.separation", v);
                 },
                 [](const RunConfig& c) -> std::optional<std::string> {
                   if (auto* s = synthetic(c)) return fmt(s->separation);
                   return std::nullopt;
                 }});
    k.push_back({"stream.synthetic.seed",
                 [](RunConfig& c, std::string_view v) {
                   synthetic(c).seed = to_u64("stream.synthetic.seed", v);
                 },
                 [](const RunConfig& c) -> std::optional<std::string> {
                   if (auto* s = synthetic(c)) return std::to_string(s->seed);
                   return std::nullopt;
                 }});
    k.push_back(count("stream.subsample_n", [](RunConfig& c) -> auto& { return c.stream.subsample_n; }));
    k.push_back(count("stream.tasks", [](RunConfig& c) -> auto& { return c.stream.tasks; }));
    k.push_back(count("stream.epochs_per_task", [](RunConfig& c) -> auto& { return c.stream.epochs_per_task; }));
    k.push_back(count("stream.batch_size", [](RunConfig& c) -> auto& { return c.stream.batch_size; }));
    k.push_back(real("stream.randomize_frac", [](RunConfig& c) -> auto& { return c.stream.randomize_frac; }));
    k.push_back(count("stream.base_seed", [](RunConfig& c) -> auto& { return c.stream.base_seed; }));

    k.push_back(count("model.hidden_width", [](RunConfig& c) -> auto& { return c.model.hidden_width; }));
    k.push_back(count("model.hidden_layers", [](RunConfig& c) -> auto& { return c.model.hidden_layers; }));
    k.push_back({"model.activation",
                 [](RunConfig& c, std::string_view v) {
                   parse_activation(v, 0.5);  // validates the name
                   c.model.activation = std::string(v);
                 },
                 [](const RunConfig& c) -> std::optional<std::string> {
                   return c.model.activation;
                 }});
    k.push_back(real("model.leaky_slope", [](RunConfig& c) -> auto& { return c.model.leaky_slope; }));
    k.push_back({"model.regularizer",
                 [](RunConfig& c, std::string_view v) {
                   if (v != "none" && v != "l2" && v != "wasserstein")
                     throw ConfigError("model.regularizer must be none, l2 or wasserstein");
                   c.model.regularizer = std::string(v);
                 },
                 [](const RunConfig& c) -> std::optional<std::string> {
                   return c.model.regularizer;
                 }});
    k.push_back(real("model.reg_lambda", [](RunConfig& c) -> auto& { return c.model.reg_lambda; }));

    k.push_back(real("optimizer.eta", [](RunConfig& c) -> auto& { return c.optimizer.eta; }));
    k.push_back(real("optimizer.beta1", [](RunConfig& c) -> auto& { return c.optimizer.adam.beta1; }));
    k.push_back(real("optimizer.beta2", [](RunConfig& c) -> auto& { return c.optimizer.adam.beta2; }));
    k.push_back(real("optimizer.eps", [](RunConfig& c) -> auto& { return c.optimizer.adam.eps; }));

    k.push_back(real("bounds.kappa", [](RunConfig& c) -> auto& { return c.bounds.kappa; }));
    k.push_back(real("bounds.beta", [](RunConfig& c) -> auto& { return c.bounds.beta; }));
    k.push_back(real("bounds.delta", [](RunConfig& c) -> auto& { return c.bounds.delta; }));
    k.push_back(real("bounds.c_contraction", [](RunConfig& c) -> auto& { return c.bounds.c_contraction; }));

    k.push_back(count("window.capacity", [](RunConfig& c) -> auto& { return c.window.capacity; }));
    k.push_back(real("window.ema_decay", [](RunConfig& c) -> auto& { return c.window.ema_decay; }));
    k.push_back(real("window.eps_vol", [](RunConfig& c) -> auto& { return c.window.eps_vol; }));

    k.push_back(controller_real("controller.gamma", [](ControllerConfig& c) -> auto& { return c.gamma; }));
    k.push_back(controller_real("controller.cool", [](ControllerConfig& c) -> auto& { return c.cool; }));
    k.push_back(controller_real("controller.warm", [](ControllerConfig& c) -> auto& { return c.warm; }));
    k.push_back(controller_count("controller.window", [](ControllerConfig& c) -> auto& { return c.window; }));
    k.push_back(controller_count("controller.interval_K", [](ControllerConfig& c) -> auto& { return c.interval_k; }));
    k.push_back(controller_real("controller.abs_floor", [](ControllerConfig& c) -> auto& { return c.abs_floor; }));
    k.push_back(controller_real("controller.warm_phase_frac", [](ControllerConfig& c) -> auto& { return c.warm_phase_frac; }));
    k.push_back(controller_real("controller.timid_frac", [](ControllerConfig& c) -> auto& { return c.timid_frac; }));
    k.push_back(controller_real("controller.eta_min", [](ControllerConfig& c) -> auto& { return c.eta_min; }));
    k.push_back(controller_real("controller.eta_max", [](ControllerConfig& c) -> auto& { return c.eta_max; }));
    return k;
  }();
  return table;
}

}  // namespace

void RunConfig::finalize() {
  if (mode == Mode::kScheduled) {
    if (!controller) controller.emplace();
    controller->validate();
    // The controller's decision window is the sharpness window.
    window.capacity = controller->window;
  } else {
    controller.reset();
  }
  stream.validate();
  bounds.validate();
  window.validate();
  optimizer.adam.validate();
  probe.validate();
  if (!(optimizer.eta > 0.0)) throw ConfigError("optimizer.eta must be > 0");
  if (model.hidden_width < 1) throw ConfigError("model.hidden_width must be >= 1");
  if (seeds.empty()) throw ConfigError("seeds: empty list");
  if (!(model.reg_lambda >= 0.0)) throw ConfigError("model.reg_lambda must be >= 0");
  parse_activation(model.activation, model.leaky_slope);

  if (auto* m = std::get_if<MnistSource>(&stream.source)) {
    if (const char* dir = std::getenv(kDataDirEnv)) {
      if (m->images.is_relative()) m->images = std::filesystem::absolute(std::filesystem::path(dir) / m->images);
      if (m->labels.is_relative()) m->labels = std::filesystem::absolute(std::filesystem::path(dir) / m->labels);
    }
  }
}

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  const std::string v = trim(value);
  for (const auto& k : keys()) {
    if (k.name == key) {
      k.set(cfg, v);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void apply_config_text(RunConfig& cfg, std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key=value");
    apply_setting(cfg, trim(std::string_view(t).substr(0, eq)),
                  std::string_view(t).substr(eq + 1));
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  apply_config_text(cfg, in);
}

std::string to_config_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : keys()) {
    if (auto v = k.get(cfg)) out += k.name + "=" + *v + "\n";
  }
  return out;
}

}  // namespace lotlab
