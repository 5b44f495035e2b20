#include "ecodrive/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "ecodrive/errors.hpp"

namespace ecodrive {

Eigen::VectorXd Observation::to_vector() const {
  Eigen::VectorXd x(size());
  int i = 0;
  x[i++] = v_cav;
  x[i++] = p_cav;
  for (double p : tl_phase) x[i++] = p;
  x[i++] = v_lead;
  x[i++] = p_lead;
  x[i++] = v_follow;
  x[i++] = p_follow;
  x[i++] = tl_time;
  return x;
}

double control_human(ControllerKind kind, const VehicleState& ego,
                     const std::optional<LeaderView>& effective_leader, const IdmParams& params,
                     double noise_halfwidth, Rng& noise) {
  const double a = idm_accel(ego, effective_leader, params);
  if (kind == ControllerKind::kVanillaIdm) return a;
  std::uniform_real_distribution<double> u(-noise_halfwidth, noise_halfwidth);
  return a + u(noise);
}

// ---------------------------------------------------------------------------

namespace {

// Time to cover `d` from speed v accelerating at `accel` up to v_max.
double time_to_cover(double d, double v, double accel, double v_max) {
  if (d <= 0.0) return 0.0;
  const double t_ramp = std::max(0.0, (v_max - v) / accel);
  const double d_ramp = 0.5 * (v + v_max) * t_ramp;
  if (d_ramp >= d) return (-v + std::sqrt(v * v + 2.0 * accel * d)) / accel;
  return t_ramp + (d - d_ramp) / v_max;
}

// Arrival time when cruising at vc and then ramping up at `accel` so that the
// stop line is passed at v_arr, or as fast as the remaining distance allows.
double glide_time(double d, double vc, double v_arr, double accel) {
  if (vc >= v_arr) return d / vc;
  const double d_ramp = (v_arr * v_arr - vc * vc) / (2.0 * accel);
  if (d_ramp >= d) return (-vc + std::sqrt(vc * vc + 2.0 * accel * d)) / accel;
  return (d - d_ramp) / vc + (v_arr - vc) / accel;
}

}  // namespace

GlideCommand control_eco_glide(const VehicleState& ego, const GlideContext& ctx,
                               const IdmParams& idm, const Limits& limits, const GlideSettings& s) {
  const double v = ego.vel;
  const double v_max = limits.v_max;
  auto track = [&](double target) {
    return std::clamp((target - v) / s.tracking_time_s, -s.comfort_decel, s.comfort_accel);
  };
  auto follow = [&](const std::optional<LeaderView>& leader) {
    return leader ? idm_accel(ego, leader, idm) : std::numeric_limits<double>::infinity();
  };

  const double d = ctx.stop_line - ego.pos;
  if (d <= 0.0) return {std::min(track(v_max), follow(ctx.leader)), std::nullopt, false};

  double earliest = ctx.now + time_to_cover(d, v, s.comfort_accel, v_max);
  if (ctx.leader && ctx.leader->pos < ctx.stop_line) {
    double leader_arrival = 0.0;
    if (ctx.leader_planned_arrival) {
      leader_arrival = *ctx.leader_planned_arrival;
    } else {
      const double dl = ctx.stop_line - ctx.leader->pos;
      leader_arrival = ctx.now + dl / std::max(ctx.leader->vel, s.v_min_glide);
    }
    earliest = std::max(earliest, leader_arrival + s.slot_headway_s);
  }

  // First green window whose usable part [start + buffer, end) admits an
  // arrival no earlier than `earliest`.
  GreenWindow w = green_window(*ctx.plan, ctx.approach, earliest);
  double target = std::max(earliest, w.start + s.green_entry_buffer_s);
  for (int guard = 0; target >= w.end && guard < 8; ++guard) {
    w = green_window(*ctx.plan, ctx.approach, w.end + 1e-6);
    target = std::max(earliest, w.start + s.green_entry_buffer_s);
  }

  const bool unconstrained = target <= earliest + 1e-9 && !ctx.leader_planned_arrival;
  if (unconstrained) return {std::min(track(v_max), follow(ctx.leader)), target, false};

  const double available = target - ctx.now;
  const double v_arr = std::min(v_max, s.arrival_speed);
  if (d / s.v_min_glide < available) {
    // Even crawling arrives on red: stop at the line.
    const std::optional<LeaderView> line{LeaderView{ctx.stop_line, 0.0, 0.0}};
    return {follow(nearer_leader(ego, ctx.leader, line)), target, true};
  }
  // Cruise speed that makes the glide land on the target time; v_min_glide
  // when even that is early.
  double lo = s.v_min_glide, hi = v_max;
  for (int it = 0; it < 50; ++it) {
    const double mid = 0.5 * (lo + hi);
    (glide_time(d, mid, v_arr, s.comfort_accel) > available ? lo : hi) = mid;
  }
  const double v_cruise = hi;
  // Ramp once the remaining distance only just allows reaching v_arr, but not
  // if accelerating now would reach the line early.
  const bool ramp = v < v_arr && d <= (v_arr * v_arr - v * v) / (2.0 * s.comfort_accel) &&
                    glide_time(d, v, v_arr, s.comfort_accel) >= available - 0.5;
  const double a = ramp ? s.comfort_accel : track(v_cruise);
  return {std::min(a, follow(ctx.leader)), target, false};
}

// ---------------------------------------------------------------------------

Eigen::VectorXd PolicyParams::actor_flat() const {
  Eigen::VectorXd theta(num_actor_params());
  theta.head(actor.num_params()) = actor.flat();
  theta[actor.num_params()] = log_std;
  return theta;
}

void PolicyParams::set_actor_flat(const Eigen::VectorXd& theta) {
  if (theta.size() != num_actor_params()) {
    throw ValidationError("actor parameter vector has wrong size");
  }
  actor.set_flat(theta.head(actor.num_params()));
  log_std = theta[actor.num_params()];
}

Eigen::VectorXd PolicyParams::value(const Eigen::MatrixXd& obs) const {
  Eigen::VectorXd out = critic.forward(obs).row(0).transpose();
  return (out.array() * value_scale + value_shift).matrix();
}

PolicyParams make_policy(int obs_size, std::uint64_t seed, int hidden, double initial_std) {
  Rng rng = make_rng(seed, {0x90'11C7ULL});
  PolicyParams p;
  p.actor = Mlp({obs_size, hidden, hidden, 1}, rng, 0.01);
  p.log_std = std::log(initial_std);
  p.critic = Mlp({obs_size, hidden, hidden, 1}, rng, 0.1);
  return p;
}

void validate(const PolicyParams& p) {
  if (p.actor.sizes().empty() || p.critic.sizes().empty()) {
    throw ValidationError("policy has no layers");
  }
  if (p.actor.output_size() != 1 || p.critic.output_size() != 1) {
    throw ValidationError("policy heads must have a single output");
  }
  if (p.actor.input_size() != p.critic.input_size()) {
    throw ValidationError("actor and critic input sizes differ");
  }
  if (!p.actor.flat().allFinite() || !p.critic.flat().allFinite() || !std::isfinite(p.log_std) ||
      !std::isfinite(p.value_shift) || !std::isfinite(p.value_scale)) {
    throw ValidationError("policy contains non-finite parameters");
  }
}

std::vector<PolicySample> policy_actions(const Eigen::MatrixXd& obs, const PolicyParams& params,
                                         ActionMode mode, Rng& rng, const Limits& limits) {
  if (obs.rows() != params.obs_size()) throw ValidationError("observation width mismatch");
  const Eigen::MatrixXd mean = params.actor.forward(obs);
  const double std_dev = std::exp(params.log_std);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<PolicySample> out(static_cast<std::size_t>(obs.cols()));
  for (Eigen::Index n = 0; n < obs.cols(); ++n) {
    double raw = mean(0, n);
    if (mode == ActionMode::kSample) raw += std_dev * normal(rng);
    out[n] = {raw, std::clamp(raw, limits.a_min, limits.a_max)};
  }
  return out;
}

PolicySample policy_action(const Observation& obs, const PolicyParams& params, ActionMode mode,
                           Rng& rng, const Limits& limits) {
  validate(params);
  return policy_actions(obs.to_vector(), params, mode, rng, limits).front();
}

LogProbGrad policy_logprob_and_grad(const Observation& obs, double action,
                                    const PolicyParams& params) {
  Mlp::Tape tape;
  const double mean = params.actor.forward(obs.to_vector(), tape)(0, 0);
  const double var = std::exp(2.0 * params.log_std);
  const double diff = action - mean;
  LogProbGrad out;
  out.logprob = -0.5 * diff * diff / var - params.log_std - 0.5 * std::log(2.0 * std::numbers::pi);
  out.grad.resize(params.num_actor_params());
  Eigen::MatrixXd dmean(1, 1);
  dmean(0, 0) = diff / var;
  out.grad.head(params.actor.num_params()) = params.actor.backward(tape, dmean);
  out.grad[params.actor.num_params()] = diff * diff / var - 1.0;
  return out;
}

double policy_logprob(const Observation& obs, double action, const PolicyParams& params) {
  const double mean = params.actor.forward(obs.to_vector())(0, 0);
  const double var = std::exp(2.0 * params.log_std);
  const double diff = action - mean;
  return -0.5 * diff * diff / var - params.log_std - 0.5 * std::log(2.0 * std::numbers::pi);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kMagic = "ecodrive-policy";
constexpr int kVersion = 1;

void write_sizes(std::ostream& os, const char* tag, const Mlp& net) {
  os << tag << ' ' << net.sizes().size();
  for (int s : net.sizes()) os << ' ' << s;
  os << '\n';
}

std::vector<int> read_sizes(std::istream& is, const char* tag) {
  std::string word;
  std::size_t n = 0;
  if (!(is >> word >> n) || word != tag || n < 2 || n > 16) {
    throw ValidationError(std::string("checkpoint: bad '") + tag + "' shape header");
  }
  std::vector<int> sizes(n);
  for (auto& s : sizes) {
    if (!(is >> s) || s <= 0) throw ValidationError("checkpoint: bad layer size");
  }
  return sizes;
}

void write_values(std::ostream& os, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) os << std::hexfloat << v[i] << '\n';
  os << std::defaultfloat;
}

double read_value(std::istream& is) {
  std::string word;
  if (!(is >> word)) throw ValidationError("checkpoint: truncated parameter list");
  char* end = nullptr;
  const double v = std::strtod(word.c_str(), &end);
  if (end != word.c_str() + word.size()) throw ValidationError("checkpoint: bad number " + word);
  return v;
}

Eigen::VectorXd read_values(std::istream& is, int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = read_value(is);
  return v;
}

}  // namespace

std::string serialize_policy(const PolicyParams& p) {
  std::ostringstream os;
  os << kMagic << ' ' << kVersion << '\n';
  write_sizes(os, "actor", p.actor);
  write_sizes(os, "critic", p.critic);
  os << "scalars 3\n";
  write_values(os, Eigen::Vector3d(p.log_std, p.value_shift, p.value_scale));
  os << "actor_params " << p.actor.num_params() << '\n';
  write_values(os, p.actor.flat());
  os << "critic_params " << p.critic.num_params() << '\n';
  write_values(os, p.critic.flat());
  return os.str();
}

PolicyParams deserialize_policy(const std::string& text) {
  std::istringstream is(text);
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != kMagic)
    throw ValidationError("not a policy checkpoint");
  if (version != kVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }
  PolicyParams p;
  p.actor = Mlp::zeros(read_sizes(is, "actor"));
  p.critic = Mlp::zeros(read_sizes(is, "critic"));
  std::string word;
  int n = 0;
  if (!(is >> word >> n) || word != "scalars" || n != 3)
    throw ValidationError("checkpoint: bad scalars");
  p.log_std = read_value(is);
  p.value_shift = read_value(is);
  p.value_scale = read_value(is);
  if (!(is >> word >> n) || word != "actor_params" || n != p.actor.num_params()) {
    throw ValidationError("checkpoint: actor parameter count does not match its shape");
  }
  p.actor.set_flat(read_values(is, n));
  if (!(is >> word >> n) || word != "critic_params" || n != p.critic.num_params()) {
    throw ValidationError("checkpoint: critic parameter count does not match its shape");
  }
  p.critic.set_flat(read_values(is, n));
  validate(p);
  return p;
}

void save_policy(const PolicyParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << serialize_policy(params);
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

PolicyParams load_policy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return deserialize_policy(buf.str());
}

}  // namespace ecodrive
