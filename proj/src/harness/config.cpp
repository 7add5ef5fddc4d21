#include "noisesteer/harness/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <type_traits>
#include <sstream>

#include "noisesteer/errors.hpp"

namespace noisesteer {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Value codecs. Doubles use %.17g so a written config reloads bit-exactly.
std::string encode(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
static_assert(std::is_same_v<std::size_t, std::uint64_t>, "size_t and uint64_t share one codec");
std::string encode(std::size_t v) { return std::to_string(v); }
std::string encode(bool v) { return v ? "true" : "false"; }
std::string encode(const std::string& v) { return v; }
std::string encode(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}
template <class T>
std::string encode(const std::optional<T>& v) {
  return v ? encode(*v) : "default";
}

void decode(const std::string& s, double& out) {
  try {
    std::size_t pos = 0;
    out = std::stod(s, &pos);
    if (pos != s.size()) throw ConfigError("");
  } catch (const std::exception&) {
    throw ConfigError("not a number: '" + s + "'");
  }
}
void decode(const std::string& s, std::uint64_t& out) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ConfigError("not a non-negative integer: '" + s + "'");
}
void decode(const std::string& s, bool& out) {
  if (s == "true" || s == "1") {
    out = true;
  } else if (s == "false" || s == "0") {
    out = false;
  } else {
    throw ConfigError("not a boolean: '" + s + "'");
  }
}
void decode(const std::string& s, std::string& out) { out = s; }
void decode(const std::string& s, std::vector<std::size_t>& out) {
  out.clear();
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::uint64_t v = 0;
    decode(trim(item), v);
    out.push_back(static_cast<std::size_t>(v));
  }
}
template <class T>
void decode(const std::string& s, std::optional<T>& out) {
  if (s == "default") {
    out.reset();
    return;
  }
  T v{};
  decode(s, v);
  out = v;
}

struct Field {
  const char* key;
  const char* alt;  // a different valid value, used by the audit
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <class T>
Field field(const char* key, T ExperimentConfig::*m, const char* alt) {
  return {key, alt, [m](const ExperimentConfig& c) { return encode(c.*m); },
          [m](ExperimentConfig& c, const std::string& v) { decode(v, c.*m); }};
}

const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> f{
      field("task", &C::task, "insert"),
      field("seed", &C::seed, "7"),
      field("method", &C::method, "dsrl"),
      field("schedule", &C::schedule, "rl_then_sft"),
      field("interleave", &C::interleave, "true"),
      field("rounds", &C::rounds, "3"),
      field("episodes_per_round", &C::episodes_per_round, "4"),
      field("n_sft", &C::n_sft, "7"),
      field("n_rl", &C::n_rl, "9"),
      field("checkpoint_every", &C::checkpoint_every, "2"),
      field("demos", &C::demos, "12"),
      field("demo_aim_fraction", &C::demo_aim_fraction, "0.5"),
      field("denoise_steps", &C::denoise_steps, "6"),
      field("flow_hidden", &C::flow_hidden, "32"),
      field("flow_steps", &C::flow_steps, "10"),
      field("flow_batch", &C::flow_batch, "8"),
      field("flow_lr", &C::flow_lr, "0.002"),
      field("env_horizon", &C::env_horizon, "4"),
      field("env_max_decisions", &C::env_max_decisions, "5"),
      field("env_tolerance", &C::env_tolerance, "0.04"),
      field("env_bias_x", &C::env_bias_x, "0.017"),
      field("env_bias_y", &C::env_bias_y, "0.017"),
      field("env_gain", &C::env_gain, "0.02"),
      field("env_max_step", &C::env_max_step, "0.05"),
      field("env_actuation_noise", &C::env_actuation_noise, "0.001"),
      field("env_init_jitter", &C::env_init_jitter, "0.01"),
      field("env_miscalibrated", &C::env_miscalibrated, "false"),
      field("actor_lr", &C::actor_lr, "0.0002"),
      field("critic_lr", &C::critic_lr, "0.0002"),
      field("temperature_lr", &C::temperature_lr, "0.0002"),
      field("sft_lr", &C::sft_lr, "0.0002"),
      field("gamma", &C::gamma, "0.9"),
      field("tau", &C::tau, "0.01"),
      field("init_alpha", &C::init_alpha, "0.5"),
      field("target_entropy", &C::target_entropy, "-3"),
      field("batch_size", &C::batch_size, "32"),
      field("replay_capacity", &C::replay_capacity, "1000"),
      field("actor_hidden", &C::actor_hidden, "32,32"),
      field("critic_hidden", &C::critic_hidden, "32,32"),
      field("squash", &C::squash, "2.5"),
      field("log_std_min", &C::log_std_min, "-10"),
      field("log_std_max", &C::log_std_max, "1"),
      field("match_target_entropy", &C::match_target_entropy, "false"),
      field("inversion_iterations", &C::inversion_iterations, "8"),
      field("inversion_tol", &C::inversion_tol, "1e-8"),
      field("inversion_early_exit", &C::inversion_early_exit, "false"),
      field("corrector_deviation", &C::corrector_deviation, "0.2"),
      field("corrector_window", &C::corrector_window, "3"),
      field("corrector_progress_eps", &C::corrector_progress_eps, "0.02"),
      field("eval_trials_per_position", &C::eval_trials_per_position, "1"),
      field("eval_seed", &C::eval_seed, "5"),
      field("dagger_steps", &C::dagger_steps, "50"),
      field("dagger_batch", &C::dagger_batch, "16"),
      field("dagger_lr", &C::dagger_lr, "0.0001"),
      field("corpus_size", &C::corpus_size, "20"),
      field("sweep_iterations", &C::sweep_iterations, "2,4"),
      field("supervision_corpus", &C::supervision_corpus, "4"),
      field("supervision_steps", &C::supervision_steps, "20"),
      field("opt_steps", &C::opt_steps, "20"),
      field("opt_lr", &C::opt_lr, "0.1"),
      field("opt_budget_s", &C::opt_budget_s, "0.5"),
      field("opt_divergence_window", &C::opt_divergence_window, "5"),
  };
  return f;
}

const Field& find(const std::string& key) {
  for (const auto& f : fields()) {
    if (key == f.key) return f;
  }
  throw ConfigError("unknown config key: " + key);
}

}  // namespace

const char* method_name(Method m) {
  switch (m) {
    case Method::unisteer:
      return "unisteer";
    case Method::dsrl:
      return "dsrl";
    case Method::dagger:
      return "dagger";
    case Method::opt_invert:
      return "opt_invert";
    case Method::direct_sup:
      return "direct_sup";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  for (auto m : {Method::unisteer, Method::dsrl, Method::dagger, Method::opt_invert, Method::direct_sup}) {
    if (s == method_name(m)) return m;
  }
  throw ConfigError("unknown method: " + s);
}

std::vector<std::string> ExperimentConfig::keys() {
  std::vector<std::string> k;
  for (const auto& f : fields()) k.emplace_back(f.key);
  return k;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  try {
    find(key).set(*this, trim(value));
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

std::string ExperimentConfig::get(const std::string& key) const { return find(key).get(*this); }

ExperimentConfig ExperimentConfig::parse(std::istream& is) {
  ExperimentConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    c.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config: " + path);
  return parse(is);
}

void ExperimentConfig::write(std::ostream& os) const {
  for (const auto& f : fields()) os << f.key << " = " << f.get(*this) << '\n';
}

void ExperimentConfig::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write config: " + path);
  write(os);
}

void ExperimentConfig::validate() const {
  task_id();
  method_id();
  parse_schedule(schedule);
  env_params().validate();
  inversion_config().validate();
  if (episodes_per_round == 0) throw ConfigError("episodes_per_round must be positive");
  if (batch_size == 0 || flow_batch == 0 || dagger_batch == 0) throw ConfigError("batch sizes must be positive");
  if (denoise_steps == 0) throw ConfigError("denoise_steps must be positive");
  if (!(demo_aim_fraction >= 0.0 && demo_aim_fraction < 1.0)) throw ConfigError("demo_aim_fraction must be in [0, 1)");
  if (!(init_alpha > 0.0)) throw ConfigError("init_alpha must be positive");
  if (!(squash > 0.0)) throw ConfigError("squash must be positive");
  if (!(log_std_min < log_std_max)) throw ConfigError("log_std_min must be below log_std_max");
  if (!(gamma >= 0.0 && gamma <= 1.0) || !(tau >= 0.0 && tau <= 1.0)) throw ConfigError("gamma and tau must be in [0, 1]");
  if (replay_capacity == 0) throw ConfigError("replay_capacity must be positive");
  if (sweep_iterations.empty()) throw ConfigError("sweep_iterations must not be empty");
}

Task ExperimentConfig::task_id() const { return parse_task(task); }
Method ExperimentConfig::method_id() const { return parse_method(method); }

EnvParams ExperimentConfig::env_params() const {
  auto p = EnvParams::defaults(task_id());
  p.horizon = env_horizon;
  if (env_max_decisions) p.max_decisions = *env_max_decisions;
  if (env_tolerance) p.tolerance = *env_tolerance;
  if (env_bias_x) p.bias[0] = *env_bias_x;
  if (env_bias_y) p.bias[1] = *env_bias_y;
  if (env_gain) p.gain = *env_gain;
  p.max_step = env_max_step;
  p.actuation_noise = env_actuation_noise;
  p.init_jitter = env_init_jitter;
  p.miscalibrated = env_miscalibrated;
  return p;
}

TrainerConfig ExperimentConfig::trainer_config() const {
  TrainerConfig t;
  t.actor.hidden = actor_hidden;
  t.actor.squash = squash;
  t.actor.log_std_min = log_std_min;
  t.actor.log_std_max = log_std_max;
  t.critic_hidden = critic_hidden;
  t.actor_lr = actor_lr;
  t.critic_lr = critic_lr;
  t.temperature_lr = temperature_lr;
  t.sft_lr = sft_lr;
  t.gamma = gamma;
  t.tau = tau;
  t.init_alpha = init_alpha;
  t.target_entropy = target_entropy;
  t.batch_size = batch_size;
  t.replay_capacity = replay_capacity;
  t.match_target_entropy = match_target_entropy;
  return t;
}

FlowTrainConfig ExperimentConfig::flow_config() const { return {flow_steps, flow_batch, flow_lr}; }

InversionConfig ExperimentConfig::inversion_config() const {
  InversionConfig c;
  c.iterations = inversion_iterations;
  c.residual_tol = inversion_tol;
  c.early_exit = inversion_early_exit;
  return c;
}

ScheduleSpec ExperimentConfig::schedule_spec() const {
  ScheduleSpec s;
  s.variant = parse_schedule(schedule);
  s.n_sft = n_sft;
  s.n_rl = n_rl;
  s.interleave = interleave;
  return s;
}

RoundConfig ExperimentConfig::round_config() const {
  RoundConfig r;
  r.episodes = episodes_per_round;
  r.seed = seed;
  r.inversion = inversion_config();
  return r;
}

OracleCorrectorConfig ExperimentConfig::corrector_config() const {
  return {corrector_deviation, corrector_window, corrector_progress_eps};
}

EvalProtocol ExperimentConfig::eval_protocol() const { return {eval_trials_per_position, eval_seed}; }

DaggerConfig ExperimentConfig::dagger_config() const { return {dagger_steps, dagger_batch, dagger_lr}; }

AblationConfig ExperimentConfig::ablation_config() const {
  AblationConfig a;
  a.corpus_size = corpus_size;
  a.sweep_iterations = sweep_iterations;
  a.supervision_corpus = supervision_corpus;
  a.supervision_steps = supervision_steps;
  a.opt.steps = opt_steps;
  a.opt.lr = opt_lr;
  a.opt.wall_budget_s = opt_budget_s;
  a.opt.divergence_window = opt_divergence_window;
  return a;
}

std::string derived_fingerprint(const ExperimentConfig& c) {
  std::ostringstream os;
  os.precision(17);
  const auto list = [&](const std::vector<std::size_t>& v) {
    for (auto x : v) os << x << ',';
    os << ' ';
  };
  os << "run " << c.task << ' ' << c.seed << ' ' << c.method << ' ' << c.rounds << ' ' << c.checkpoint_every << '\n';
  os << "demos " << c.demos << ' ' << c.demo_aim_fraction << ' ' << c.denoise_steps << ' ';
  list(c.flow_hidden);
  os << '\n';
  const auto e = c.env_params();
  os << "env " << task_name(e.task) << ' ' << e.horizon << ' ' << e.max_decisions << ' ' << e.max_step << ' '
     << e.tolerance << ' ' << e.actuation_noise << ' ' << e.init_jitter << ' ' << e.miscalibrated << ' ' << e.bias[0]
     << ' ' << e.bias[1] << ' ' << e.gain << ' ' << e.inits.size() << '\n';
  const auto t = c.trainer_config();
  os << "trainer ";
  list(t.actor.hidden);
  list(t.critic_hidden);
  os << t.actor.squash << ' ' << t.actor.log_std_min << ' ' << t.actor.log_std_max << ' ' << t.actor_lr << ' '
     << t.critic_lr << ' ' << t.temperature_lr << ' ' << t.sft_lr << ' ' << t.gamma << ' ' << t.tau << ' '
     << t.init_alpha << ' ' << t.target_entropy << ' ' << t.batch_size << ' ' << t.replay_capacity << ' '
     << t.match_target_entropy << '\n';
  const auto f = c.flow_config();
  os << "flow " << f.steps << ' ' << f.batch_size << ' ' << f.lr << '\n';
  const auto r = c.round_config();
  os << "round " << r.episodes << ' ' << r.seed << ' ' << r.inversion.iterations << ' ' << r.inversion.residual_tol
     << ' ' << r.inversion.early_exit << '\n';
  const auto s = c.schedule_spec();
  os << "schedule " << schedule_name(s.variant) << ' ' << s.n_sft << ' ' << s.n_rl << ' ' << s.interleave << '\n';
  const auto k = c.corrector_config();
  os << "corrector " << k.deviation_threshold << ' ' << k.no_progress_window << ' ' << k.progress_eps << '\n';
  const auto p = c.eval_protocol();
  os << "eval " << p.trials_per_position << ' ' << p.seed << '\n';
  const auto d = c.dagger_config();
  os << "dagger " << d.steps_per_round << ' ' << d.batch_size << ' ' << d.lr << '\n';
  const auto a = c.ablation_config();
  os << "ablation " << a.corpus_size << ' ';
  list(a.sweep_iterations);
  os << a.supervision_corpus << ' ' << a.supervision_steps << ' ' << a.opt.steps << ' ' << a.opt.lr << ' '
     << a.opt.wall_budget_s << ' ' << a.opt.divergence_window << '\n';
  return os.str();
}

std::vector<std::string> audit_config(const ExperimentConfig& cfg, const Fingerprint& fingerprint) {
  std::vector<std::string> dead;
  const auto base = fingerprint(cfg);
  for (const auto& f : fields()) {
    // a key is dead only if neither the alternate nor the default moves the fingerprint;
    // a single probe can land on a task-derived value and look like a no-op
    const auto current = f.get(cfg);
    bool moved = false;
    for (const auto& value : {std::string{f.alt}, f.get(ExperimentConfig{})}) {
      if (value == current || moved) continue;
      ExperimentConfig probe = cfg;
      f.set(probe, value);
      moved = fingerprint(probe) != base;
    }
    if (!moved) dead.emplace_back(f.key);
  }
  return dead;
}

}  // namespace noisesteer
