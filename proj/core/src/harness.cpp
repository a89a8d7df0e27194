#include "quadlearn/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>

#include "quadlearn/errors.hpp"

namespace quadlearn {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double number_or_nan(const nlohmann::json& j) { return j.is_null() ? kNaN : j.get<double>(); }

Eigen::VectorXf to_float(const Eigen::VectorXd& v) { return v.cast<float>(); }

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::trunc) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::out | mode);
  if (!out) throw InputError("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

}  // namespace

nlohmann::json MetricsRecord::to_json(bool with_wall_time) const {
  nlohmann::json j = {{"schema", kMetricsSchema},
                      {"step", step},
                      {"episode", episode},
                      {"return", ret},
                      {"length", length},
                      {"fell", fell},
                      {"falls_cumulative", falls_cumulative},
                      {"max_velocity_episode", max_velocity_episode},
                      {"tracking_error_abs", number_or_null(tracking_error_abs)},
                      {"action_rate_sq", action_rate_sq},
                      {"critic_updates", critic_updates}};
  if (with_wall_time) j["wall_time"] = wall_time;
  return j;
}

MetricsRecord MetricsRecord::from_json(const nlohmann::json& j) {
  if (j.value("schema", 0) != kMetricsSchema) throw InputError("metrics: unsupported schema");
  MetricsRecord r;
  r.step = j.at("step").get<std::int64_t>();
  r.episode = j.at("episode").get<std::int64_t>();
  r.ret = j.at("return").get<double>();
  r.length = j.at("length").get<std::int64_t>();
  r.fell = j.at("fell").get<bool>();
  r.falls_cumulative = j.at("falls_cumulative").get<std::int64_t>();
  r.max_velocity_episode = j.at("max_velocity_episode").get<double>();
  r.tracking_error_abs = number_or_nan(j.at("tracking_error_abs"));
  r.action_rate_sq = j.at("action_rate_sq").get<double>();
  r.critic_updates = j.at("critic_updates").get<std::int64_t>();
  r.wall_time = j.value("wall_time", 0.0);
  return r;
}

double action_rate_metric(const std::vector<sim::Vec12>& actions) {
  if (actions.size() < 2) return 0.0;
  double sum = 0.0;
  for (std::size_t t = 1; t < actions.size(); ++t) sum += (actions[t] - actions[t - 1]).squaredNorm();
  return sum / static_cast<double>(actions.size() - 1);
}

void EpisodeStats::add(const StepResult& r, const tasks::Vec2& target, tasks::TaskVariant variant) {
  const sim::Vec3& v = r.info.velocity_true;
  ret += r.reward;
  if (length > 0) action_rate_sum += (r.info.action - last_action).squaredNorm();
  last_action = r.info.action;
  ++length;
  max_velocity = std::max(max_velocity, v.x());
  switch (variant) {
    case tasks::TaskVariant::kFixedForward:
      tracking_error_sum += std::abs(v.x() - target.x());
      break;
    case tasks::TaskVariant::kOmni:
      tracking_error_sum += (v.head<2>() - target).norm();
      break;
    case tasks::TaskVariant::kMaxForward:
      break;
  }
  const double speed = target.norm();
  if (speed > 0) along_velocity_sum += v.head<2>().dot(target) / speed;
}

// -- Trainer -----------------------------------------------------------------

Trainer::Trainer(RunConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  rng_.seed(cfg_.seed);
  env_ = LocomotionEnv(cfg_.env, cfg_.seed ^ 0x9e3779b97f4a7c15ULL);
  agent_ = rl::Agent<float>::create(cfg_.algo, env_.obs_dim(), env_.act_dim(), rng_);
  buffer_ = rl::ReplayBuffer<float>(static_cast<int>(cfg_.replay_capacity), env_.obs_dim(), env_.act_dim());
  obs_ = env_.reset();
  started_ = std::chrono::steady_clock::now();
}

void Trainer::finish_episode(bool fell, const std::function<void(const MetricsRecord&)>& cb) {
  const auto variant = cfg_.env.task.variant;
  MetricsRecord r;
  r.step = env_steps_;
  r.episode = episodes_;
  r.ret = stats_.ret;
  r.length = stats_.length;
  r.fell = fell;
  if (fell) ++falls_;
  r.falls_cumulative = falls_;
  r.max_velocity_episode = stats_.length > 0 ? stats_.max_velocity : 0.0;
  r.tracking_error_abs = (variant == tasks::TaskVariant::kMaxForward || stats_.length == 0)
                             ? kNaN
                             : stats_.tracking_error_sum / static_cast<double>(stats_.length);
  r.action_rate_sq = stats_.length > 1 ? stats_.action_rate_sum / static_cast<double>(stats_.length - 1) : 0.0;
  r.critic_updates = agent_.counters.critic_updates;
  r.wall_time =
      wall_before_ + std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();

  if (auto* cur = env_.curriculum(); cur && env_.target_bin() >= 0 && stats_.length > 0) {
    const double along = stats_.along_velocity_sum / static_cast<double>(stats_.length);
    *cur = tasks::curriculum_update(*cur, env_.target_bin(),
                                    tasks::achieved_ratio(along, cfg_.env.task.target_speed));
  }

  ++episodes_;
  records_.push_back(r);
  stats_ = EpisodeStats{};
  obs_ = env_.reset();
  if (cb) cb(r);
}

void Trainer::run(std::int64_t until_step, const std::function<void(const MetricsRecord&)>& on_episode) {
  const int act_dim = env_.act_dim();
  std::uniform_real_distribution<float> uniform(-1.0f, 1.0f);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  while (env_steps_ < until_step) {
    Eigen::VectorXf a(act_dim);
    const Eigen::VectorXf o = to_float(obs_);
    if (env_steps_ < cfg_.algo.learning_starts) {
      for (int i = 0; i < act_dim; ++i) a[i] = uniform(rng_);
    } else {
      Eigen::VectorXf noise(act_dim);
      for (int i = 0; i < act_dim; ++i) noise[i] = normal(rng_);
      a = rl::act(agent_, o, rl::ActMode::kExplore, noise);
    }

    const StepResult r = env_.step(a.cast<double>());
    ++env_steps_;
    stats_.add(r, env_.target(), cfg_.env.task.variant);

    rl::Transition<float> t;
    t.obs = o;
    t.action = a;
    t.reward = static_cast<float>(r.reward);
    t.next_obs = to_float(r.obs);
    t.terminal = r.fallen;
    buffer_.push(t);
    obs_ = r.obs;

    if (env_steps_ > cfg_.algo.learning_starts) rl::train_step(agent_, buffer_, rng_);

    if (r.fallen || r.truncated) finish_episode(r.fallen, on_episode);
  }
}

// -- train -------------------------------------------------------------------

TrainResult train(const RunConfig& cfg, const TrainOptions& opts) {
  const std::filesystem::path out = cfg.out_dir;
  std::optional<Trainer> trainer;
  if (opts.resume) {
    trainer.emplace(Trainer::load(*opts.resume, &cfg));
  } else {
    trainer.emplace(cfg);
  }

  std::ofstream metrics;
  if (opts.write_files) {
    std::filesystem::create_directories(out);
    {
      auto cj = open_out(out / "config.json");
      cj << to_flat_json(trainer->config()).dump(2) << "\n";
    }
    // On resume the stream is cut back to what the checkpoint knew about.
    metrics = open_out(out / "metrics.jsonl");
    for (const auto& r : trainer->records()) metrics << r.to_json().dump() << "\n";
  }

  TrainResult result;
  result.checkpoint = out / "checkpoint.bin";
  auto on_episode = [&](const MetricsRecord& r) {
    if (opts.write_files) metrics << r.to_json().dump() << "\n" << std::flush;
    if (!opts.quiet) {
      std::cerr << "step " << r.step << " ep " << r.episode << " return " << r.ret << " falls "
                << r.falls_cumulative << "\n";
    }
  };

  const std::int64_t interval = cfg.checkpoint_interval;
  try {
    while (trainer->env_steps() < cfg.total_steps) {
      std::int64_t until = cfg.total_steps;
      if (interval > 0) until = std::min(until, (trainer->env_steps() / interval + 1) * interval);
      trainer->run(until, on_episode);
      if (opts.write_files && interval > 0 && trainer->env_steps() < cfg.total_steps) {
        trainer->save(result.checkpoint);
      }
    }
  } catch (const NumericError& e) {
    result.aborted = true;
    result.message = e.what();
    if (opts.write_files) {
      nlohmann::json diag = {{"error", e.what()},
                             {"where", e.where()},
                             {"env_steps", trainer->env_steps()},
                             {"episodes", trainer->episodes()},
                             {"critic_updates", trainer->agent().counters.critic_updates},
                             {"actor_updates", trainer->agent().counters.actor_updates},
                             {"temperature", trainer->agent().temperature()}};
      auto f = open_out(out / "abort.json");
      f << diag.dump(2) << "\n";
      trainer->save(out / "abort_checkpoint.bin");
    }
  }

  if (opts.write_files && !result.aborted) trainer->save(result.checkpoint);
  result.records = trainer->records();
  result.env_steps = trainer->env_steps();
  result.critic_updates = trainer->agent().counters.critic_updates;
  result.falls = trainer->falls();
  return result;
}

// -- evaluation ----------------------------------------------------------------

std::vector<FootstepInterval> contact_intervals(const ContactTrace& trace, int episode) {
  std::vector<FootstepInterval> out;
  for (int leg = 0; leg < sim::kLegs; ++leg) {
    bool open = false;
    double start = 0.0;
    for (const auto& [t, c] : trace) {
      if (c[leg] && !open) {
        open = true;
        start = t;
      } else if (!c[leg] && open) {
        open = false;
        out.push_back({episode, leg, start, t});
      }
    }
    if (open && !trace.empty()) out.push_back({episode, leg, start, trace.back().first});
  }
  return out;
}

double dominant_frequency(const std::vector<double>& signal, double dt, double min_frequency) {
  const std::size_t n = signal.size();
  if (n < 4 || !(dt > 0)) return kNaN;
  const double mean = std::accumulate(signal.begin(), signal.end(), 0.0) / static_cast<double>(n);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = signal[i] - mean;
  double r0 = 0.0;
  for (double v : x) r0 += v * v;
  if (r0 <= 1e-12) return kNaN;
  r0 /= static_cast<double>(n);

  // need two full periods of data for the lag
  const std::size_t max_lag =
      std::min<std::size_t>(n / 2, static_cast<std::size_t>(std::ceil(1.0 / (min_frequency * dt))));
  std::vector<double> r(max_lag + 1, 0.0);
  for (std::size_t k = 0; k <= max_lag; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) s += x[i] * x[i + k];
    r[k] = s / static_cast<double>(n - k) / r0;
  }
  std::size_t k = 1;
  while (k <= max_lag && r[k] > 0) ++k;
  if (k > max_lag) return kNaN;
  std::size_t top = k;
  for (std::size_t j = k; j <= max_lag; ++j) {
    if (r[j] > r[top]) top = j;
  }
  if (r[top] < 0.2) return kNaN;
  // multiples of the period peak about as high; take the first local max near the top
  std::size_t best = top;
  for (std::size_t j = k; j < top; ++j) {
    if (r[j] >= 0.9 * r[top] && r[j] >= r[j - 1] && r[j] >= r[j + 1]) {
      best = j;
      break;
    }
  }
  if (best == max_lag) return kNaN;
  double lag = static_cast<double>(best);
  const double den = r[best - 1] - 2 * r[best] + r[best + 1];
  if (std::abs(den) > 1e-12) lag += 0.5 * (r[best - 1] - r[best + 1]) / den;
  return 1.0 / (lag * dt);
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json freq = nlohmann::json::array();
  for (double f : contact_frequency) freq.push_back(number_or_null(f));
  return {{"episodes", episodes},
          {"mean_return", mean_return},
          {"mean_max_velocity", mean_max_velocity},
          {"peak_velocity", peak_velocity},
          {"mean_tracking_error", number_or_null(mean_tracking_error)},
          {"falls", falls},
          {"contact_frequency", freq},
          {"dominant_contact_frequency", number_or_null(dominant_contact_frequency)},
          {"footstep_intervals", footsteps.size()}};
}

EvalReport evaluate(const rl::Agent<float>& agent, const RunConfig& cfg, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw ConfigError("evaluate: need at least one episode");
  LocomotionEnv env(cfg.env, seed);
  if (env.obs_dim() != agent.obs_dim || env.act_dim() != agent.act_dim) {
    throw ConfigError("evaluate: agent does not match the environment");
  }
  const double settle = 1.0;  // skip the start transient in the contact signal
  EvalReport rep;
  rep.episodes = episodes;
  rep.peak_velocity = -std::numeric_limits<double>::infinity();
  std::array<std::vector<double>, sim::kLegs> leg_freqs;
  double tracking_sum = 0.0;
  int tracking_n = 0;
  const Eigen::VectorXf zero = Eigen::VectorXf::Zero(agent.act_dim);

  for (int ep = 0; ep < episodes; ++ep) {
    ContactTrace trace;
    env.record_contacts(&trace);
    Eigen::VectorXd obs = env.reset();
    EpisodeStats stats;
    bool fell = false;
    while (true) {
      const Eigen::VectorXf a = rl::act(agent, to_float(obs), rl::ActMode::kDeterministic, zero);
      const StepResult r = env.step(a.cast<double>());
      stats.add(r, env.target(), cfg.env.task.variant);
      obs = r.obs;
      if (r.fallen || r.truncated) {
        fell = r.fallen;
        break;
      }
    }
    env.record_contacts(nullptr);

    rep.mean_return += stats.ret;
    rep.mean_max_velocity += stats.max_velocity;
    rep.peak_velocity = std::max(rep.peak_velocity, stats.max_velocity);
    if (cfg.env.task.variant != tasks::TaskVariant::kMaxForward) {
      tracking_sum += stats.tracking_error_sum / static_cast<double>(stats.length);
      ++tracking_n;
    }
    if (fell) ++rep.falls;

    auto steps = contact_intervals(trace, ep);
    rep.footsteps.insert(rep.footsteps.end(), steps.begin(), steps.end());

    if (trace.size() > 2) {
      const double dt = trace[1].first - trace[0].first;
      for (int leg = 0; leg < sim::kLegs; ++leg) {
        std::vector<double> sig;
        for (const auto& [t, c] : trace) {
          if (t >= settle) sig.push_back(c[leg] ? 1.0 : 0.0);
        }
        const double f = dominant_frequency(sig, dt);
        if (std::isfinite(f)) leg_freqs[leg].push_back(f);
      }
    }
  }
  rep.mean_return /= episodes;
  rep.mean_max_velocity /= episodes;
  if (tracking_n > 0) rep.mean_tracking_error = tracking_sum / tracking_n;

  std::vector<double> per_leg;
  for (int leg = 0; leg < sim::kLegs; ++leg) {
    rep.contact_frequency[leg] = leg_freqs[leg].empty() ? kNaN : median(leg_freqs[leg]);
    if (std::isfinite(rep.contact_frequency[leg])) per_leg.push_back(rep.contact_frequency[leg]);
  }
  if (!per_leg.empty()) rep.dominant_contact_frequency = median(per_leg);
  return rep;
}

EvalReport evaluate(const Trainer& trainer, int episodes) {
  return evaluate(trainer.agent(), trainer.config(), episodes, trainer.config().seed + 1000003);
}

void write_footsteps_csv(const std::filesystem::path& path, const std::vector<FootstepInterval>& steps) {
  auto out = open_out(path);
  out << "episode,leg,start,end\n";
  for (const auto& s : steps) out << s.episode << ',' << s.leg << ',' << s.start << ',' << s.end << '\n';
}

// -- figure data -------------------------------------------------------------

std::vector<EstimatorSample> estimator_trace(const EnvConfig& base, const EstimatorTraceOptions& opts) {
  EnvConfig cfg = base;
  cfg.control = control::ControlArch::kCpg;
  cfg.delay_min = cfg.delay_max = 0;
  cfg.reset_noise = 0.0;
  cfg.task.episode_seconds = opts.seconds;
  cfg.imu.accel_bias = sim::Vec3(opts.accel_bias, 0.0, 0.0);
  cfg.estimator.odometry_noise_std = opts.odometry_noise_std;
  LocomotionEnv env(cfg, opts.seed);
  env.reset();

  std::vector<EstimatorSample> rows;
  const int steps = cfg.episode_steps();
  for (int k = 0; k < steps; ++k) {
    const sim::Vec12 off = control::cpg_stride_offsets(env.phase(), opts.stride, cfg.cpg);
    const StepResult r = env.step(off.cwiseQuotient(cfg.cpg.offset_box()));
    rows.push_back({(k + 1) * cfg.control_dt(), r.info.velocity_true.x(), r.info.velocity_accel_only.x(),
                    r.info.velocity_estimated.x()});
    if (r.fallen) break;
  }
  return rows;
}

void write_estimator_csv(const std::filesystem::path& path, const std::vector<EstimatorSample>& rows) {
  auto out = open_out(path);
  out << "t,v_true,v_accel_only,v_fused\n";
  for (const auto& r : rows) out << r.t << ',' << r.v_true << ',' << r.v_accel_only << ',' << r.v_fused << '\n';
}

void write_state_trace_csv(const std::filesystem::path& path, const rl::Agent<float>& agent, const RunConfig& cfg,
                           std::uint64_t seed) {
  LocomotionEnv env(cfg.env, seed);
  auto out = open_out(path);
  out << "t,x,y,z,roll,pitch,yaw,vx,vy,vz,reward";
  for (int j = 0; j < sim::kJoints; ++j) out << ",q" << j;
  out << '\n';
  Eigen::VectorXd obs = env.reset();
  const Eigen::VectorXf zero = Eigen::VectorXf::Zero(agent.act_dim);
  while (true) {
    const Eigen::VectorXf a = rl::act(agent, to_float(obs), rl::ActMode::kDeterministic, zero);
    const StepResult r = env.step(a.cast<double>());
    const auto& s = env.state();
    const auto e = sim::roll_pitch_yaw(s.orientation);
    const sim::Vec3 v = sim::body_linear_velocity(s);
    out << s.time << ',' << s.position.x() << ',' << s.position.y() << ',' << s.position.z() << ',' << e.roll
        << ',' << e.pitch << ',' << e.yaw << ',' << v.x() << ',' << v.y() << ',' << v.z() << ',' << r.reward;
    for (int j = 0; j < sim::kJoints; ++j) out << ',' << s.q[j];
    out << '\n';
    obs = r.obs;
    if (r.fallen || r.truncated) break;
  }
}

// -- ablations ---------------------------------------------------------------

std::vector<AblationEntry> ablation_grid(const std::string& preset, const RunConfig& base) {
  std::vector<AblationEntry> grid;
  if (preset == "algorithms") {
    const std::vector<std::pair<std::string, std::pair<rl::Algo, int>>> rows = {
        {"sac_utd1", {rl::Algo::kSac, 1}},
        {"sac_utd20", {rl::Algo::kSac, 20}},
        {"droq", {rl::Algo::kDroq, 0}},
        {"redq", {rl::Algo::kRedq, 0}},
        {"crossq", {rl::Algo::kCrossQ, 0}}};
    for (const auto& [name, a] : rows) {
      RunConfig c = base;
      c.algo = rl::AlgoVariant::preset(a.first, a.second);
      c.env.control_frequency = default_control_frequency(a.first);
      grid.push_back({name, c});
    }
  } else if (preset == "filters") {
    RunConfig c = base;
    c.env.control = control::ControlArch::kJtp;
    c.env.jtp.filter = control::FilterConfig{};
    c.env.jtp.filter.kind = control::FilterKind::kNone;
    grid.push_back({"none", c});
    c.env.jtp.filter.kind = control::FilterKind::kLowpass;
    c.env.jtp.filter.lowpass_cutoff = 0.4;
    grid.push_back({"lowpass", c});
    c.env.jtp.filter.kind = control::FilterKind::kOneEuro;
    c.env.jtp.filter.one_euro = control::OneEuroParams{};
    grid.push_back({"one_euro", c});
  } else if (preset == "rewards") {
    RunConfig c = base;
    c.env.weights.use_penalties = false;
    grid.push_back({"tracking_only", c});
    c.env.weights.use_penalties = true;
    grid.push_back({"full_penalties", c});
  } else {
    throw ConfigError("unknown ablation preset '" + preset + "'");
  }
  for (auto& e : grid) e.config.validate();
  return grid;
}

double final_return(const std::vector<MetricsRecord>& records, std::size_t n) {
  if (records.empty()) return kNaN;
  const std::size_t k = std::min(n, records.size());
  double s = 0.0;
  for (std::size_t i = records.size() - k; i < records.size(); ++i) s += records[i].ret;
  return s / static_cast<double>(k);
}

namespace {

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

double iqr(std::vector<double> v) { return quantile(v, 0.75) - quantile(v, 0.25); }

std::vector<AblationRow> run_ablation(const std::string& preset, const RunConfig& base,
                                      const std::vector<std::uint64_t>& seeds,
                                      const std::filesystem::path& out_dir, bool verbose) {
  std::vector<AblationRow> rows;
  for (const auto& entry : ablation_grid(preset, base)) {
    AblationRow row;
    row.name = entry.name;
    std::vector<double> rets, falls, rates;
    for (std::uint64_t seed : seeds) {
      RunConfig c = entry.config;
      c.seed = seed;
      c.out_dir = (out_dir / entry.name / ("seed_" + std::to_string(seed))).string();
      ++row.runs;
      TrainResult r;
      try {
        r = train(c);
      } catch (const std::exception& e) {
        r.aborted = true;
        r.message = e.what();
      }
      if (r.aborted || r.records.empty()) {
        ++row.failed;
        if (verbose) std::cerr << entry.name << " seed " << seed << " failed: " << r.message << "\n";
        continue;
      }
      rets.push_back(final_return(r.records));
      falls.push_back(static_cast<double>(r.falls));
      const std::size_t k = std::min<std::size_t>(10, r.records.size());
      double rate = 0.0;
      for (std::size_t i = r.records.size() - k; i < r.records.size(); ++i) rate += r.records[i].action_rate_sq;
      rates.push_back(rate / static_cast<double>(k));
      if (verbose) {
        std::cerr << entry.name << " seed " << seed << " return " << rets.back() << " falls " << falls.back()
                  << "\n";
      }
    }
    row.return_median = median(rets);
    row.return_iqr = iqr(rets);
    row.falls_median = median(falls);
    row.falls_iqr = iqr(falls);
    row.action_rate_median = median(rates);
    row.action_rate_iqr = iqr(rates);
    rows.push_back(row);
  }
  write_ablation_csv(out_dir / (preset + ".csv"), rows);
  return rows;
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
  auto out = open_out(path);
  out << "config,runs,failed,return_median,return_iqr,falls_median,falls_iqr,action_rate_median,action_rate_iqr\n";
  for (const auto& r : rows) {
    out << r.name << ',' << r.runs << ',' << r.failed << ',' << r.return_median << ',' << r.return_iqr << ','
        << r.falls_median << ',' << r.falls_iqr << ',' << r.action_rate_median << ',' << r.action_rate_iqr
        << '\n';
  }
}

}  // namespace quadlearn
