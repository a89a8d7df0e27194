#include "quadlearn/config.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

#include "quadlearn/errors.hpp"

namespace quadlearn {

using nlohmann::json;

namespace {

template <typename T>
T read(const json& v, const std::string& key) {
  auto bad = [&](const char* want) {
    throw ConfigError("config key '" + key + "' expects " + want + ", got " + v.dump());
  };
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) bad("a boolean");
    return v.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) bad("an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (v.is_number_unsigned()) return v.get<T>();
      if (v.get<std::int64_t>() < 0) bad("a nonnegative integer");
    }
    return v.get<T>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) bad("a number");
    return v.get<T>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) bad("a string");
    return v.get<std::string>();
  } else {
    static_assert(sizeof(T) == 0, "unsupported config type");
  }
}

struct Field {
  std::string key;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <typename Access>
Field scalar(std::string key, Access ref) {
  using T = std::decay_t<decltype(ref(std::declval<RunConfig&>()))>;
  Field f;
  f.key = key;
  f.get = [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); };
  f.set = [ref, key](RunConfig& c, const json& v) { ref(c) = read<T>(v, key); };
  return f;
}

template <typename Enum>
Field enumerated(std::string key, std::function<Enum&(RunConfig&)> ref,
                 std::function<std::string(Enum)> name, std::function<Enum(std::string_view)> parse) {
  Field f;
  f.key = key;
  f.get = [ref, name](const RunConfig& c) { return json(name(ref(const_cast<RunConfig&>(c)))); };
  f.set = [ref, parse, key](RunConfig& c, const json& v) { ref(c) = parse(read<std::string>(v, key)); };
  return f;
}

#define QL_FIELD(key, expr) scalar(key, [](RunConfig& c) -> auto& { return expr; })

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> t;
    t.push_back(QL_FIELD("seed", c.seed));
    t.push_back(QL_FIELD("total_steps", c.total_steps));
    t.push_back(QL_FIELD("checkpoint_interval", c.checkpoint_interval));
    t.push_back(QL_FIELD("replay_capacity", c.replay_capacity));
    t.push_back(QL_FIELD("eval_episodes", c.eval_episodes));
    t.push_back(QL_FIELD("out_dir", c.out_dir));
    t.push_back(QL_FIELD("control_frequency", c.env.control_frequency));

    t.push_back(enumerated<tasks::TaskVariant>(
        "task.variant", [](RunConfig& c) -> tasks::TaskVariant& { return c.env.task.variant; },
        [](tasks::TaskVariant v) { return tasks::to_string(v); }, tasks::parse_task));
    t.push_back(QL_FIELD("task.target_speed", c.env.task.target_speed));
    t.push_back(QL_FIELD("task.omni_range", c.env.task.omni_range));
    t.push_back(QL_FIELD("task.episode_seconds", c.env.task.episode_seconds));
    t.push_back(QL_FIELD("task.use_estimated_velocity", c.env.task.use_estimated_velocity));
    t.push_back(QL_FIELD("task.curriculum", c.env.task.curriculum));
    t.push_back(QL_FIELD("task.curriculum_bins_per_half", c.env.task.curriculum_bins_per_half));

    t.push_back(QL_FIELD("reward.yaw", c.env.weights.yaw));
    t.push_back(QL_FIELD("reward.upright", c.env.weights.upright));
    t.push_back(QL_FIELD("reward.energy", c.env.weights.energy));
    t.push_back(QL_FIELD("reward.max_x_scale", c.env.weights.max_x_scale));
    t.push_back(QL_FIELD("reward.floor_at_zero", c.env.weights.floor_at_zero));
    t.push_back(QL_FIELD("reward.use_penalties", c.env.weights.use_penalties));

    t.push_back(enumerated<control::ControlArch>(
        "control.arch", [](RunConfig& c) -> control::ControlArch& { return c.env.control; },
        [](control::ControlArch a) { return control::to_string(a); }, control::parse_control));
    t.push_back(QL_FIELD("jtp.phi", c.env.jtp.phi));
    t.push_back(enumerated<control::FilterKind>(
        "filter.kind", [](RunConfig& c) -> control::FilterKind& { return c.env.jtp.filter.kind; },
        [](control::FilterKind k) { return control::to_string(k); }, control::parse_filter));
    t.push_back(QL_FIELD("filter.lowpass_cutoff", c.env.jtp.filter.lowpass_cutoff));
    t.push_back(QL_FIELD("filter.mincutoff", c.env.jtp.filter.one_euro.mincutoff));
    t.push_back(QL_FIELD("filter.beta", c.env.jtp.filter.one_euro.beta));
    t.push_back(QL_FIELD("filter.dcutoff", c.env.jtp.filter.one_euro.dcutoff));
    t.push_back(QL_FIELD("cpg.frequency", c.env.cpg.frequency));
    t.push_back(QL_FIELD("cpg.h", c.env.cpg.h));
    {
      Field f;
      f.key = "cpg.offset_bounds";
      f.get = [](const RunConfig& c) {
        const auto& b = c.env.cpg.offset_bounds;
        return json::array({b.x(), b.y(), b.z()});
      };
      f.set = [](RunConfig& c, const json& v) {
        if (!v.is_array() || v.size() != 3) throw ConfigError("config key 'cpg.offset_bounds' expects 3 numbers");
        for (int i = 0; i < 3; ++i) c.env.cpg.offset_bounds[i] = read<double>(v[i], "cpg.offset_bounds");
      };
      t.push_back(f);
    }

    t.push_back(enumerated<rl::Algo>(
        "algo.name", [](RunConfig& c) -> rl::Algo& { return c.algo.name; },
        [](rl::Algo a) { return rl::to_string(a); }, rl::parse_algo));
    t.push_back(QL_FIELD("algo.utd", c.algo.utd));
    t.push_back(QL_FIELD("algo.num_critics", c.algo.num_critics));
    t.push_back(QL_FIELD("algo.subset_size", c.algo.subset_size));
    t.push_back(QL_FIELD("algo.dropout_rate", c.algo.dropout_rate));
    t.push_back(QL_FIELD("algo.use_target_nets", c.algo.use_target_nets));
    t.push_back(QL_FIELD("algo.use_batchnorm_joint", c.algo.use_batchnorm_joint));
    t.push_back(QL_FIELD("algo.use_layernorm", c.algo.use_layernorm));
    t.push_back(QL_FIELD("algo.polyak_tau", c.algo.polyak_tau));
    t.push_back(QL_FIELD("algo.learning_rate", c.algo.learning_rate));
    t.push_back(QL_FIELD("algo.batch_size", c.algo.batch_size));
    t.push_back(QL_FIELD("algo.gamma", c.algo.gamma));
    t.push_back(QL_FIELD("algo.learning_starts", c.algo.learning_starts));
    t.push_back(QL_FIELD("algo.actor_updates_per_step", c.algo.actor_updates_per_step));
    t.push_back(QL_FIELD("algo.bn_momentum", c.algo.bn_momentum));
    t.push_back(QL_FIELD("algo.initial_temperature", c.algo.initial_temperature));
    {
      Field f;
      f.key = "algo.hidden";
      f.get = [](const RunConfig& c) { return json(c.algo.hidden); };
      f.set = [](RunConfig& c, const json& v) {
        if (!v.is_array() || v.empty()) throw ConfigError("config key 'algo.hidden' expects a nonempty array");
        c.algo.hidden.clear();
        for (const auto& e : v) c.algo.hidden.push_back(read<int>(e, "algo.hidden"));
      };
      t.push_back(f);
    }

    t.push_back(QL_FIELD("sim.dt", c.env.sim_dt));
    t.push_back(QL_FIELD("sim.trunk_mass", c.env.model.trunk_mass));
    t.push_back(QL_FIELD("sim.kp", c.env.model.kp));
    t.push_back(QL_FIELD("sim.kd", c.env.model.kd));
    t.push_back(QL_FIELD("sim.torque_limit", c.env.model.torque_limit));
    t.push_back(QL_FIELD("sim.reflected_inertia", c.env.model.reflected_inertia));
    t.push_back(QL_FIELD("sim.nominal_height", c.env.model.nominal_height));
    t.push_back(QL_FIELD("sim.delay_min", c.env.delay_min));
    t.push_back(QL_FIELD("sim.delay_max", c.env.delay_max));
    t.push_back(QL_FIELD("sim.reset_noise", c.env.reset_noise));
    t.push_back(QL_FIELD("sim.fall_angle", c.env.fall.max_angle));
    t.push_back(QL_FIELD("sim.fall_min_height", c.env.fall.min_height));
    t.push_back(QL_FIELD("contact.stiffness", c.env.contact.stiffness));
    t.push_back(QL_FIELD("contact.damping", c.env.contact.damping));
    t.push_back(QL_FIELD("contact.friction", c.env.contact.friction_coefficient));
    t.push_back(QL_FIELD("contact.tangential_damping", c.env.contact.tangential_damping));

    {
      Field f;
      f.key = "imu.accel_bias";
      f.get = [](const RunConfig& c) {
        const auto& b = c.env.imu.accel_bias;
        return json::array({b.x(), b.y(), b.z()});
      };
      f.set = [](RunConfig& c, const json& v) {
        if (!v.is_array() || v.size() != 3) throw ConfigError("config key 'imu.accel_bias' expects 3 numbers");
        for (int i = 0; i < 3; ++i) c.env.imu.accel_bias[i] = read<double>(v[i], "imu.accel_bias");
      };
      t.push_back(f);
    }
    t.push_back(QL_FIELD("imu.accel_noise_std", c.env.imu.accel_noise_std));
    t.push_back(QL_FIELD("imu.gyro_noise_std", c.env.imu.gyro_noise_std));
    t.push_back(QL_FIELD("estimator.process_noise", c.env.estimator.process_noise));
    t.push_back(QL_FIELD("estimator.measurement_noise", c.env.estimator.measurement_noise));
    t.push_back(QL_FIELD("estimator.odometry_noise_std", c.env.estimator.odometry_noise_std));
    t.push_back(QL_FIELD("estimator.initial_variance", c.env.estimator.initial_variance));
    return t;
  }();
  return table;
}

#undef QL_FIELD

const Field* find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

void flatten_into(const json& j, const std::string& prefix, json& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      flatten_into(*it, key, out);
    } else {
      out[key] = *it;
    }
  }
}

}  // namespace

void RunConfig::validate() const {
  env.validate();
  algo.validate();
  if (total_steps <= 0) throw ConfigError("total_steps must be positive");
  if (checkpoint_interval < 0) throw ConfigError("checkpoint_interval must be nonnegative");
  if (replay_capacity <= 0 || replay_capacity > std::numeric_limits<int>::max()) {
    throw ConfigError("replay_capacity out of range");
  }
  if (eval_episodes < 1) throw ConfigError("eval_episodes must be positive");
  if (env.control_frequency != default_control_frequency(algo.name)) {
    throw ConfigError("control_frequency " + std::to_string(env.control_frequency) + " Hz does not match " +
                      rl::to_string(algo.name) + " (expects " +
                      std::to_string(default_control_frequency(algo.name)) + " Hz)");
  }
}

double default_control_frequency(rl::Algo algo) { return algo == rl::Algo::kCrossQ ? 40.0 : 20.0; }

std::int64_t default_total_steps(tasks::TaskVariant task) {
  return task == tasks::TaskVariant::kOmni ? 50000 : 20000;
}

json flatten(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  json out = json::object();
  flatten_into(j, "", out);
  return out;
}

json to_flat_json(const RunConfig& cfg) {
  json out = json::object();
  for (const auto& f : fields()) out[f.key] = f.get(cfg);
  return out;
}

RunConfig config_from_flat(const json& flat_in) {
  const json flat = flatten(flat_in);
  for (auto it = flat.begin(); it != flat.end(); ++it) {
    if (!find_field(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");
  }
  RunConfig cfg;
  const rl::Algo algo =
      flat.contains("algo.name") ? rl::parse_algo(read<std::string>(flat["algo.name"], "algo.name")) : rl::Algo::kCrossQ;
  const int utd = flat.contains("algo.utd") ? read<int>(flat["algo.utd"], "algo.utd") : 0;
  cfg.algo = rl::AlgoVariant::preset(algo, utd);
  cfg.env.control_frequency = default_control_frequency(algo);
  if (flat.contains("task.variant")) {
    cfg.env.task.variant = tasks::parse_task(read<std::string>(flat["task.variant"], "task.variant"));
  }
  cfg.total_steps = default_total_steps(cfg.env.task.variant);
  for (auto it = flat.begin(); it != flat.end(); ++it) find_field(it.key())->set(cfg, it.value());
  cfg.env.jtp.nominal_q = cfg.env.model.nominal_q();
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const json& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  json flat = flatten(j);
  for (auto it = overrides.begin(); it != overrides.end(); ++it) flat[it.key()] = it.value();
  return config_from_flat(flat);
}

std::string canonical_config_text(const RunConfig& cfg) {
  json flat = to_flat_json(cfg);
  flat.erase("out_dir");
  flat.erase("total_steps");
  flat.erase("checkpoint_interval");
  return flat.dump();
}

std::string config_digest(const RunConfig& cfg) {
  const std::string text = canonical_config_text(cfg);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

}  // namespace quadlearn
