#include "overtake/sac.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "overtake/binary_io.hpp"
#include "overtake/errors.hpp"

namespace overtake {
namespace {

constexpr std::string_view kCheckpointMagic = "OTSACCKP";
constexpr std::uint32_t kCheckpointVersion = 1;
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

template <typename M>
M stack_rows(const M& top, const M& bottom) {
  M out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

Eigen::MatrixXf normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXf m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = static_cast<float>(rng.normal());
  }
  return m;
}

std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

}  // namespace

double log1m_tanh_sq(double u) {
  // log(1 - tanh(u)^2) = 2 * (log 2 - u - softplus(-2u))
  const double x = -2.0 * u;
  const double softplus = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  return 2.0 * (std::numbers::ln2 - u - softplus);
}

double squashed_gaussian_log_prob(double mean, double log_std, double action) {
  const double u = std::atanh(action);
  const double z = (u - mean) / std::exp(log_std);
  return -0.5 * z * z - log_std - kHalfLog2Pi - log1m_tanh_sq(u);
}

void SacConfig::validate() const {
  if (observation_dim <= 0 || action_dim <= 0) throw ConfigError("sac: dimensions must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("sac: gamma must lie in (0, 1)");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("sac: tau must lie in [0, 1]");
  if (batch_size <= 0) throw ConfigError("sac: batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("sac: learning_rate must be positive");
  if (!(initial_alpha > 0.0)) throw ConfigError("sac: initial_alpha must be positive");
  if (!(log_std_min < log_std_max)) throw ConfigError("sac: log_std range is empty");
  if (!(reward_scale > 0.0)) throw ConfigError("sac: reward_scale must be positive");
  for (int h : hidden) {
    if (h <= 0) throw ConfigError("sac: hidden sizes must be positive");
  }
}

SacAgent::SacAgent(SacConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
  config_.validate();
  const int obs = config_.observation_dim;
  const int act = config_.action_dim;
  policy_ = Mlp<float>(layer_sizes(obs, config_.hidden, 2 * act));
  q1_ = Mlp<float>(layer_sizes(obs + act, config_.hidden, 1));
  q2_ = Mlp<float>(layer_sizes(obs + act, config_.hidden, 1));
  Rng rng(Rng::derive(seed, 0xA11CE));
  policy_.initialize(rng);
  policy_.reset_output_rows(act, act, static_cast<float>(config_.log_std_init_bias));
  q1_.initialize(rng);
  q2_.initialize(rng);
  q1_target_ = q1_;
  q2_target_ = q2_;
  log_alpha_ = std::log(config_.initial_alpha);
  const Adam<float>::Options opt{config_.learning_rate, 0.9, 0.999, 1e-8};
  policy_opt_ = Adam<float>(policy_.parameter_count(), opt);
  q1_opt_ = Adam<float>(q1_.parameter_count(), opt);
  q2_opt_ = Adam<float>(q2_.parameter_count(), opt);
  alpha_opt_ = Adam<double>(1, {config_.learning_rate, 0.9, 0.999, 1e-8});
}

double SacAgent::alpha() const { return std::exp(log_alpha_); }

PolicyOutput PolicySnapshot::output(const Eigen::MatrixXf& observations) const {
  const Eigen::MatrixXf out = net.forward(observations);
  PolicyOutput po;
  po.mean = out.topRows(action_dim);
  po.log_std = out.bottomRows(action_dim).cwiseMax(log_std_min).cwiseMin(log_std_max);
  return po;
}

Eigen::MatrixXf PolicySnapshot::act_batch(const Eigen::MatrixXf& observations, ActionMode mode,
                                          std::span<Rng> rngs) const {
  const PolicyOutput po = output(observations);
  Eigen::MatrixXf u = po.mean;
  if (mode == ActionMode::stochastic) {
    require(rngs.size() == static_cast<std::size_t>(observations.cols()),
            "act_batch: one generator per observation required");
    for (Eigen::Index c = 0; c < u.cols(); ++c) {
      for (Eigen::Index r = 0; r < u.rows(); ++r) {
        u(r, c) += std::exp(po.log_std(r, c)) * static_cast<float>(rngs[static_cast<std::size_t>(c)].normal());
      }
    }
  }
  return u.array().tanh().matrix();
}

PolicySnapshot SacAgent::snapshot() const {
  return {policy_, config_.action_dim, static_cast<float>(config_.log_std_min),
          static_cast<float>(config_.log_std_max)};
}

PolicyOutput SacAgent::policy_output(const Eigen::MatrixXf& observations) const {
  return snapshot().output(observations);
}

std::vector<float> SacAgent::act(std::span<const float> observation, ActionMode mode, Rng& rng) const {
  require(observation.size() == static_cast<std::size_t>(config_.observation_dim),
          "SacAgent::act: observation width mismatch");
  Eigen::MatrixXf obs = Eigen::Map<const Eigen::VectorXf>(observation.data(), config_.observation_dim);
  const Eigen::MatrixXf a = act_batch(obs, mode, std::span<Rng>(&rng, 1));
  return {a.data(), a.data() + a.size()};
}

Eigen::MatrixXf SacAgent::act_batch(const Eigen::MatrixXf& observations, ActionMode mode,
                                    std::span<Rng> rngs) const {
  const PolicySnapshot snap{policy_, config_.action_dim, static_cast<float>(config_.log_std_min),
                            static_cast<float>(config_.log_std_max)};
  return snap.act_batch(observations, mode, rngs);
}

double SacAgent::log_prob(std::span<const float> observation, std::span<const double> action) const {
  require(action.size() == static_cast<std::size_t>(config_.action_dim), "SacAgent::log_prob: action width");
  for (double a : action) require(a > -1.0 && a < 1.0, "SacAgent::log_prob: action must lie in (-1, 1)");
  Eigen::MatrixXf obs = Eigen::Map<const Eigen::VectorXf>(observation.data(), config_.observation_dim);
  const PolicyOutput po = policy_output(obs);
  double total = 0.0;
  for (int j = 0; j < config_.action_dim; ++j) {
    total += squashed_gaussian_log_prob(po.mean(j, 0), po.log_std(j, 0), action[static_cast<std::size_t>(j)]);
  }
  return total;
}

UpdateDiagnostics SacAgent::update(const ReplayBuffer& buffer) {
  const auto batch_size = static_cast<std::size_t>(config_.batch_size);
  require(buffer.size() >= batch_size, "SacAgent::update: buffer holds fewer transitions than one batch");
  require(buffer.observation_dim() == config_.observation_dim && buffer.action_dim() == config_.action_dim,
          "SacAgent::update: buffer widths do not match the agent");

  Rng rng(Rng::derive(seed_, updates_ + 1));
  const TransitionBatch batch = buffer.sample(batch_size, rng);
  const auto n = static_cast<Eigen::Index>(batch_size);
  const int d = config_.action_dim;
  const double alpha = std::exp(log_alpha_);

  // Soft Bellman targets.
  Eigen::RowVectorXd target(n);
  {
    const PolicyOutput next = policy_output(batch.next_observation);
    const Eigen::MatrixXf noise = normal_matrix(d, n, rng);
    Eigen::MatrixXf next_action(d, n);
    Eigen::RowVectorXd next_logp = Eigen::RowVectorXd::Zero(n);
    for (Eigen::Index c = 0; c < n; ++c) {
      for (int j = 0; j < d; ++j) {
        const double log_std = next.log_std(j, c);
        const double xi = noise(j, c);
        const double u = next.mean(j, c) + std::exp(log_std) * xi;
        next_action(j, c) = static_cast<float>(std::tanh(u));
        next_logp(c) += -0.5 * xi * xi - log_std - kHalfLog2Pi - log1m_tanh_sq(u);
      }
    }
    const Eigen::MatrixXf q_in = stack_rows(batch.next_observation, next_action);
    const Eigen::MatrixXf t1 = q1_target_.forward(q_in);
    const Eigen::MatrixXf t2 = q2_target_.forward(q_in);
    for (Eigen::Index c = 0; c < n; ++c) {
      const double min_q = std::min<double>(t1(0, c), t2(0, c));
      target(c) = config_.reward_scale * batch.reward(c) +
                  config_.gamma * (1.0 - batch.done(c)) * (min_q - alpha * next_logp(c));
    }
  }

  UpdateDiagnostics diag;
  std::vector<float> grads;

  // Critic regression.
  {
    const Eigen::MatrixXf q_in = stack_rows(batch.observation, batch.action);
    diag.q1_loss = critic_objective(q1_, q_in, target, &grads, &diag.mean_q);
    q1_opt_.step(q1_.parameters(), grads);
    diag.q2_loss = critic_objective(q2_, q_in, target, &grads);
    q2_opt_.step(q2_.parameters(), grads);
  }

  // Policy improvement through the reparameterized squashed Gaussian.
  Eigen::RowVectorXd logp;
  {
    const Eigen::MatrixXf noise = normal_matrix(d, n, rng);
    diag.policy_loss = policy_objective(policy_, q1_, q2_, batch.observation, noise, alpha, config_.log_std_min,
                                        config_.log_std_max, &grads, &logp);
    policy_opt_.step(policy_.parameters(), grads);
  }

  // Temperature: drive the entropy toward the target.
  const double entropy = -logp.mean();
  const double alpha_grad = -(-entropy + config_.target_entropy);
  std::vector<double> la{log_alpha_};
  const std::vector<double> ga{alpha_grad};
  alpha_opt_.step(la, ga);
  log_alpha_ = la[0];

  soft_update(q1_target_, q1_, config_.tau);
  soft_update(q2_target_, q2_, config_.tau);

  ++updates_;
  diag.update_index = updates_;
  diag.alpha = std::exp(log_alpha_);
  diag.entropy = entropy;
  diag.buffer_size = buffer.size();
  return diag;
}

void SacAgent::reinitialize_exploration() {
  policy_.reset_output_rows(config_.action_dim, config_.action_dim,
                            static_cast<float>(config_.log_std_init_bias));
  log_alpha_ = std::log(config_.initial_alpha);
}

void SacAgent::save(const std::filesystem::path& path, std::uint64_t layout_hash) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  io::write_magic(out, kCheckpointMagic);
  io::write_pod<std::uint32_t>(out, kCheckpointVersion);
  io::write_pod<std::uint64_t>(out, layout_hash);
  io::write_pod<std::int32_t>(out, config_.observation_dim);
  io::write_pod<std::int32_t>(out, config_.action_dim);
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(config_.hidden.size()));
  for (int h : config_.hidden) io::write_pod<std::int32_t>(out, h);
  for (double v : {config_.gamma, config_.tau, config_.learning_rate, config_.initial_alpha,
                   config_.target_entropy, config_.log_std_min, config_.log_std_max,
                   config_.log_std_init_bias, config_.reward_scale}) {
    io::write_pod<double>(out, v);
  }
  io::write_pod<std::int32_t>(out, config_.batch_size);
  io::write_pod<std::uint64_t>(out, seed_);
  io::write_pod<std::uint64_t>(out, updates_);
  io::write_pod<double>(out, log_alpha_);
  for (const auto* net : {&policy_, &q1_, &q2_, &q1_target_, &q2_target_}) net->write(out);
  for (const auto* opt : {&policy_opt_, &q1_opt_, &q2_opt_}) opt->write(out);
  io::write_pod<std::uint64_t>(out, alpha_opt_.step_count());
  io::write_pod<double>(out, alpha_opt_.first_moment()[0]);
  io::write_pod<double>(out, alpha_opt_.second_moment()[0]);
  if (!out) throw ConfigError("failed writing checkpoint " + path.string());
}

std::uint64_t SacAgent::peek_layout_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  io::expect_magic(in, kCheckpointMagic);
  const auto version = io::read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw ConfigError("checkpoint version " + std::to_string(version) + " is not supported");
  }
  return io::read_pod<std::uint64_t>(in);
}

SacAgent SacAgent::load(const std::filesystem::path& path, std::uint64_t expected_layout_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  io::expect_magic(in, kCheckpointMagic);
  const auto version = io::read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw ConfigError("checkpoint version " + std::to_string(version) + " is not supported");
  }
  const auto hash = io::read_pod<std::uint64_t>(in);
  if (hash != expected_layout_hash) {
    std::ostringstream msg;
    msg << "checkpoint " << path.string() << " is incompatible: observation layout hash " << std::hex
        << hash << " (checkpoint) != " << expected_layout_hash << " (expected)";
    throw ConfigError(msg.str());
  }
  SacAgent agent;
  SacConfig& cfg = agent.config_;
  cfg.observation_dim = io::read_pod<std::int32_t>(in);
  cfg.action_dim = io::read_pod<std::int32_t>(in);
  const auto n_hidden = io::read_pod<std::uint32_t>(in);
  if (n_hidden > 64) throw ConfigError("checkpoint: implausible hidden layer count");
  cfg.hidden.clear();
  for (std::uint32_t i = 0; i < n_hidden; ++i) cfg.hidden.push_back(io::read_pod<std::int32_t>(in));
  for (double* v : {&cfg.gamma, &cfg.tau, &cfg.learning_rate, &cfg.initial_alpha, &cfg.target_entropy,
                    &cfg.log_std_min, &cfg.log_std_max, &cfg.log_std_init_bias, &cfg.reward_scale}) {
    *v = io::read_pod<double>(in);
  }
  cfg.batch_size = io::read_pod<std::int32_t>(in);
  cfg.validate();
  agent.seed_ = io::read_pod<std::uint64_t>(in);
  agent.updates_ = io::read_pod<std::uint64_t>(in);
  agent.log_alpha_ = io::read_pod<double>(in);
  agent.policy_ = Mlp<float>::read(in);
  agent.q1_ = Mlp<float>::read(in);
  agent.q2_ = Mlp<float>::read(in);
  agent.q1_target_ = Mlp<float>::read(in);
  agent.q2_target_ = Mlp<float>::read(in);
  const Adam<float>::Options opt{cfg.learning_rate, 0.9, 0.999, 1e-8};
  agent.policy_opt_ = Adam<float>::read(in, opt);
  agent.q1_opt_ = Adam<float>::read(in, opt);
  agent.q2_opt_ = Adam<float>::read(in, opt);
  const auto alpha_steps = io::read_pod<std::uint64_t>(in);
  const double m = io::read_pod<double>(in);
  const double v = io::read_pod<double>(in);
  agent.alpha_opt_ = Adam<double>::restore({cfg.learning_rate, 0.9, 0.999, 1e-8}, alpha_steps, {m}, {v});

  const auto expect = [&](const Mlp<float>& net, int in_dim, int out_dim) {
    if (net.input_size() != in_dim || net.output_size() != out_dim) {
      throw ConfigError("checkpoint network shapes do not match its configuration");
    }
  };
  expect(agent.policy_, cfg.observation_dim, 2 * cfg.action_dim);
  expect(agent.q1_, cfg.observation_dim + cfg.action_dim, 1);
  expect(agent.q2_, cfg.observation_dim + cfg.action_dim, 1);
  return agent;
}

bool SacAgent::operator==(const SacAgent& other) const {
  return seed_ == other.seed_ && updates_ == other.updates_ && log_alpha_ == other.log_alpha_ &&
         policy_ == other.policy_ && q1_ == other.q1_ && q2_ == other.q2_ &&
         q1_target_ == other.q1_target_ && q2_target_ == other.q2_target_;
}

Action to_vehicle_action(std::span<const float> normalized) {
  require(normalized.size() == 2, "to_vehicle_action: expects a 2-D action");
  return clamp_action(normalized[0] * kMaxSteering, normalized[1]);
}

template <typename T>
double critic_objective(const Mlp<T>& q, const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& q_input,
                        const Eigen::RowVectorXd& target, std::vector<T>* grad, double* mean_q) {
  using Matrix = typename Mlp<T>::Matrix;
  const Eigen::Index n = q_input.cols();
  require(target.size() == n, "critic_objective: target size mismatch");
  const double inv_n = 1.0 / static_cast<double>(n);
  typename Mlp<T>::Cache cache;
  const Matrix pred = q.forward(q_input, grad != nullptr ? &cache : nullptr);
  Matrix out_grad(1, n);
  double loss = 0.0, sum_q = 0.0;
  for (Eigen::Index c = 0; c < n; ++c) {
    const double err = static_cast<double>(pred(0, c)) - target(c);
    loss += 0.5 * err * err;
    sum_q += pred(0, c);
    out_grad(0, c) = static_cast<T>(err * inv_n);
  }
  if (grad != nullptr) q.backward(cache, out_grad, *grad);
  if (mean_q != nullptr) *mean_q = sum_q * inv_n;
  return loss * inv_n;
}

template <typename T>
double policy_objective(const Mlp<T>& policy, const Mlp<T>& q1, const Mlp<T>& q2,
                        const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& observations,
                        const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& noise, double alpha,
                        double log_std_min, double log_std_max, std::vector<T>* grad,
                        Eigen::RowVectorXd* log_prob) {
  using Matrix = typename Mlp<T>::Matrix;
  const Eigen::Index n = observations.cols();
  const auto d = noise.rows();
  require(policy.output_size() == 2 * d && noise.cols() == n, "policy_objective: shape mismatch");
  const double inv_n = 1.0 / static_cast<double>(n);

  typename Mlp<T>::Cache cache;
  const Matrix raw = policy.forward(observations, grad != nullptr ? &cache : nullptr);
  Matrix action(d, n), sigma(d, n), in_range(d, n);
  Eigen::RowVectorXd logp = Eigen::RowVectorXd::Zero(n);
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double raw_ls = raw(d + j, c);
      const double ls = std::clamp(raw_ls, log_std_min, log_std_max);
      in_range(j, c) = (raw_ls > log_std_min && raw_ls < log_std_max) ? T(1) : T(0);
      sigma(j, c) = static_cast<T>(std::exp(ls));
      const double xi = noise(j, c);
      const double u = static_cast<double>(raw(j, c)) + static_cast<double>(sigma(j, c)) * xi;
      action(j, c) = static_cast<T>(std::tanh(u));
      logp(c) += -0.5 * xi * xi - ls - kHalfLog2Pi - log1m_tanh_sq(u);
    }
  }

  const Matrix q_in = stack_rows<Matrix>(observations, action);
  typename Mlp<T>::Cache c1, c2;
  const Matrix o1 = q1.forward(q_in, &c1);
  const Matrix o2 = q2.forward(q_in, &c2);
  double loss = 0.0;
  Matrix g1 = Matrix::Zero(1, n), g2 = Matrix::Zero(1, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const bool first = o1(0, c) <= o2(0, c);
    (first ? g1 : g2)(0, c) = static_cast<T>(-inv_n);
    loss += alpha * logp(c) - static_cast<double>(std::min(o1(0, c), o2(0, c)));
  }
  if (log_prob != nullptr) *log_prob = logp;
  if (grad == nullptr) return loss * inv_n;

  Matrix in1, in2;
  std::vector<T> unused;
  q1.backward(c1, g1, unused, &in1, false);
  q2.backward(c2, g2, unused, &in2, false);
  const Matrix dq_da = in1.bottomRows(d) + in2.bottomRows(d);

  // d tanh(u)/du = 1 - a^2 and d log(1 - a^2)/du = -2a; the Gaussian term
  // contributes -1 per log-std through -log sigma.
  Matrix out_grad(2 * d, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double a = action(j, c);
      const double jac = 1.0 - a * a;
      const double sxi = static_cast<double>(sigma(j, c)) * static_cast<double>(noise(j, c));
      const double d_mean = alpha * 2.0 * a * inv_n + static_cast<double>(dq_da(j, c)) * jac;
      const double d_logstd =
          (alpha * (-1.0 + 2.0 * a * sxi) * inv_n + static_cast<double>(dq_da(j, c)) * jac * sxi) *
          static_cast<double>(in_range(j, c));
      out_grad(j, c) = static_cast<T>(d_mean);
      out_grad(d + j, c) = static_cast<T>(d_logstd);
    }
  }
  policy.backward(cache, out_grad, *grad);
  return loss * inv_n;
}

template double critic_objective<float>(const Mlp<float>&, const Eigen::MatrixXf&, const Eigen::RowVectorXd&,
                                        std::vector<float>*, double*);
template double critic_objective<double>(const Mlp<double>&, const Eigen::MatrixXd&, const Eigen::RowVectorXd&,
                                         std::vector<double>*, double*);
template double policy_objective<float>(const Mlp<float>&, const Mlp<float>&, const Mlp<float>&,
                                        const Eigen::MatrixXf&, const Eigen::MatrixXf&, double, double, double,
                                        std::vector<float>*, Eigen::RowVectorXd*);
template double policy_objective<double>(const Mlp<double>&, const Mlp<double>&, const Mlp<double>&,
                                         const Eigen::MatrixXd&, const Eigen::MatrixXd&, double, double, double,
                                         std::vector<double>*, Eigen::RowVectorXd*);

}  // namespace overtake
