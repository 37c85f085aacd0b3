#include "distprm/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "distprm/random.hpp"
#include "distprm/stats.hpp"

namespace distprm {

namespace {

double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void check_dims(const ScorerParams& params, std::span<const double> features) {
    if (features.size() != params.feature_dim) {
        throw std::invalid_argument("scorer: feature vector has " + std::to_string(features.size()) +
                                    " entries, expected " + std::to_string(params.feature_dim));
    }
}

struct HeadActivations {
    double logit_margin;  // z_yes - z_no
    double conc_pre;      // pre-softplus concentration
};

HeadActivations activations(const ScorerParams& p, std::span<const double> x) {
    double z_yes = p.mean_bias[0];
    double z_no = p.mean_bias[1];
    double s = p.conc_bias;
    for (std::size_t i = 0; i < p.feature_dim; ++i) {
        z_yes += x[i] * p.mean_weights[2 * i];
        z_no += x[i] * p.mean_weights[2 * i + 1];
        s += x[i] * p.conc_weights[i];
    }
    return {z_yes - z_no, s};
}

}  // namespace

double softplus(double x) noexcept {
    if (x > 30.0) return x + std::exp(-x);
    return std::log1p(std::exp(x));
}

double inverse_softplus(double y) {
    if (!(y > 0.0)) throw std::invalid_argument("inverse_softplus: argument must be positive");
    if (y > 30.0) return y + std::log(-std::expm1(-y));
    return std::log(std::expm1(y));
}

const char* to_string(LossKind kind) noexcept {
    switch (kind) {
        case LossKind::BetaBinomialTotal: return "beta_binomial_total";
        case LossKind::CrossEntropy: return "cross_entropy";
    }
    return "unknown";
}

LossKind loss_kind_from_string(const std::string& name) {
    if (name == "bb" || name == "beta_binomial_total") return LossKind::BetaBinomialTotal;
    if (name == "ce" || name == "cross_entropy") return LossKind::CrossEntropy;
    throw std::invalid_argument("unknown loss kind '" + name + "'");
}

ScorerParams ScorerParams::zeros(std::size_t feature_dim, double kappa_min) {
    ScorerParams p;
    p.feature_dim = feature_dim;
    p.kappa_min = kappa_min;
    p.mean_weights.assign(2 * feature_dim, 0.0);
    p.conc_weights.assign(feature_dim, 0.0);
    return p;
}

void ScorerParams::validate() const {
    if (feature_dim == 0) throw std::invalid_argument("scorer: feature_dim must be positive");
    if (mean_weights.size() != 2 * feature_dim || conc_weights.size() != feature_dim) {
        throw std::invalid_argument("scorer: weight shapes do not match feature_dim");
    }
    if (!(kappa_min > 0.0) || !std::isfinite(kappa_min)) {
        throw std::invalid_argument("scorer: kappa_min must be positive");
    }
    auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(mean_weights.begin(), mean_weights.end(), finite) ||
        !std::all_of(conc_weights.begin(), conc_weights.end(), finite) || !finite(mean_bias[0]) ||
        !finite(mean_bias[1]) || !finite(conc_bias)) {
        throw std::invalid_argument("scorer: non-finite weight");
    }
}

BetaBelief forward(const ScorerParams& params, std::span<const double> features) {
    check_dims(params, features);
    const auto act = activations(params, features);
    return {sigmoid(act.logit_margin), softplus(act.conc_pre) + params.kappa_min};
}

double bb_loss(const BetaBelief& belief, const CountObservation& obs) {
    return -beta_binomial_log_pmf(obs, belief);
}

double reg_loss(const BetaBelief& belief, const CountObservation& obs, double lambda_reg) {
    return lambda_reg * std::abs(clamp_mu(belief.mu) - obs.ratio()) * belief.kappa;
}

double ce_loss(const BetaBelief& belief, const CountObservation& obs) {
    const double p = clamp_mu(belief.mu);
    const double q = obs.ratio();
    return -q * std::log(p) - (1.0 - q) * std::log1p(-p);
}

double total_loss(const BetaBelief& belief, const CountObservation& obs, double lambda_reg) {
    return bb_loss(belief, obs) + reg_loss(belief, obs, lambda_reg);
}

double loss(LossKind kind, const BetaBelief& belief, const CountObservation& obs, double lambda_reg) {
    return kind == LossKind::CrossEntropy ? ce_loss(belief, obs) : total_loss(belief, obs, lambda_reg);
}

BeliefGrad bb_loss_grad(const BetaBelief& belief, const CountObservation& obs) {
    const auto g = beta_binomial_grad(obs, belief);
    return {-g.d_mu, -g.d_kappa};
}

BeliefGrad reg_loss_grad(const BetaBelief& belief, const CountObservation& obs, double lambda_reg) {
    return {0.0, lambda_reg * std::abs(clamp_mu(belief.mu) - obs.ratio())};
}

BeliefGrad ce_loss_grad(const BetaBelief& belief, const CountObservation& obs) {
    if (mu_clamp_active(belief.mu)) return {0.0, 0.0};
    const double p = belief.mu;
    return {(p - obs.ratio()) / (p * (1.0 - p)), 0.0};
}

BeliefGrad loss_grad(LossKind kind, const BetaBelief& belief, const CountObservation& obs, double lambda_reg) {
    if (kind == LossKind::CrossEntropy) return ce_loss_grad(belief, obs);
    const auto bb = bb_loss_grad(belief, obs);
    const auto reg = reg_loss_grad(belief, obs, lambda_reg);
    return {bb.d_mu + reg.d_mu, bb.d_kappa + reg.d_kappa};
}

ScorerGrad backprop(const ScorerParams& params, std::span<const double> features, const BeliefGrad& upstream) {
    check_dims(params, features);
    const auto act = activations(params, features);
    const double mu = sigmoid(act.logit_margin);
    const double d_margin = upstream.d_mu * mu * (1.0 - mu);
    const double d_pre = upstream.d_kappa * sigmoid(act.conc_pre);

    ScorerGrad g;
    g.mean_weights.resize(2 * params.feature_dim);
    g.conc_weights.resize(params.feature_dim);
    for (std::size_t i = 0; i < params.feature_dim; ++i) {
        g.mean_weights[2 * i] = features[i] * d_margin;
        g.mean_weights[2 * i + 1] = -features[i] * d_margin;
        g.conc_weights[i] = features[i] * d_pre;
    }
    g.mean_bias = {d_margin, -d_margin};
    g.conc_bias = d_pre;
    return g;
}

ScorerGrad backward(const ScorerParams& params, std::span<const double> features, const CountObservation& obs,
                    LossKind kind, double lambda_reg) {
    const auto belief = forward(params, features);
    return backprop(params, features, loss_grad(kind, belief, obs, lambda_reg));
}

ScorerParams initialize_params(std::size_t feature_dim, const TrainConfig& config) {
    ScorerParams p = ScorerParams::zeros(feature_dim, config.kappa_min);
    Rng rng(derive_seed(config.seed, {0x1417}));
    for (auto& w : p.mean_weights) w = rng.uniform(-config.init_scale, config.init_scale);
    for (auto& w : p.conc_weights) w = rng.uniform(-config.init_scale, config.init_scale);
    p.conc_bias = inverse_softplus(config.initial_kappa - config.kappa_min);
    return p;
}

EpochDiagnostics diagnose(const ScorerParams& params, std::span<const LabeledPrefix> data, LossKind kind,
                          double lambda_reg, int epoch) {
    EpochDiagnostics d;
    d.epoch = epoch;
    std::vector<double> kappas;
    kappas.reserve(data.size());
    double loss_sum = 0.0;
    double abs_err = 0.0;
    std::size_t with_truth = 0;
    for (const auto& rec : data) {
        const auto belief = forward(params, rec.features);
        loss_sum += loss(kind, belief, rec.observation, lambda_reg);
        kappas.push_back(belief.kappa);
        if (rec.true_q) {
            abs_err += std::abs(belief.mu - *rec.true_q);
            ++with_truth;
        }
    }
    d.loss = loss_sum / static_cast<double>(data.size());
    d.kappa_mean = mean(kappas);
    d.kappa_p90 = percentile(kappas, 0.9);
    d.mae_true_q = with_truth ? abs_err / static_cast<double>(with_truth)
                              : std::numeric_limits<double>::quiet_NaN();
    return d;
}

namespace {

class AdamW {
public:
    AdamW(const TrainConfig& c, std::size_t n) : c_(c), m_(n, 0.0), v_(n, 0.0) {}

    // Updates one scalar. `slot` indexes the moment buffers.
    void step(std::size_t slot, double& param, double grad, double lr, bool decay) {
        m_[slot] = c_.beta1 * m_[slot] + (1.0 - c_.beta1) * grad;
        v_[slot] = c_.beta2 * v_[slot] + (1.0 - c_.beta2) * grad * grad;
        const double m_hat = m_[slot] / bias1_;
        const double v_hat = v_[slot] / bias2_;
        if (decay) param -= lr * c_.weight_decay * param;
        param -= lr * m_hat / (std::sqrt(v_hat) + c_.adam_epsilon);
    }

    void begin_step() {
        ++t_;
        bias1_ = 1.0 - std::pow(c_.beta1, t_);
        bias2_ = 1.0 - std::pow(c_.beta2, t_);
    }

private:
    const TrainConfig& c_;
    std::vector<double> m_, v_;
    int t_ = 0;
    double bias1_ = 1.0, bias2_ = 1.0;
};

void accumulate(ScorerGrad& acc, const ScorerGrad& g) {
    for (std::size_t i = 0; i < acc.mean_weights.size(); ++i) acc.mean_weights[i] += g.mean_weights[i];
    for (std::size_t i = 0; i < acc.conc_weights.size(); ++i) acc.conc_weights[i] += g.conc_weights[i];
    acc.mean_bias[0] += g.mean_bias[0];
    acc.mean_bias[1] += g.mean_bias[1];
    acc.conc_bias += g.conc_bias;
}

}  // namespace

TrainResult train(std::span<const LabeledPrefix> data, const TrainConfig& config, LossKind kind) {
    if (data.empty()) throw std::invalid_argument("train: empty dataset");
    if (config.epochs < 1 || config.batch_size < 1) {
        throw std::invalid_argument("train: epochs and batch_size must be positive");
    }
    const std::size_t dim = data.front().features.size();
    for (const auto& rec : data) {
        if (rec.features.size() != dim) throw std::invalid_argument("train: inconsistent feature_dim");
        rec.observation.validate();
    }

    TrainResult result;
    result.params = initialize_params(dim, config);
    result.initial = diagnose(result.params, data, kind, config.lambda_reg, 0);

    ScorerParams& p = result.params;
    const std::size_t n_params = 3 * dim + 3;
    AdamW opt(config, n_params);
    Rng shuffle_rng(derive_seed(config.seed, {0x5e1f}));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const double mean_lr = config.learning_rate;
    const double conc_lr = config.learning_rate * config.conc_lr_multiplier;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            ScorerGrad acc;
            acc.mean_weights.assign(2 * dim, 0.0);
            acc.conc_weights.assign(dim, 0.0);
            double batch_loss = 0.0;
            for (std::size_t b = start; b < end; ++b) {
                const auto& rec = data[order[b]];
                const auto belief = forward(p, rec.features);
                batch_loss += loss(kind, belief, rec.observation, config.lambda_reg);
                accumulate(acc, backprop(p, rec.features, loss_grad(kind, belief, rec.observation, config.lambda_reg)));
            }
            if (!std::isfinite(batch_loss)) {
                throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                         ", batch starting at " + std::to_string(start));
            }
            const double scale = 1.0 / static_cast<double>(end - start);
            opt.begin_step();
            std::size_t slot = 0;
            for (std::size_t i = 0; i < p.mean_weights.size(); ++i) {
                opt.step(slot++, p.mean_weights[i], acc.mean_weights[i] * scale, mean_lr, true);
            }
            for (std::size_t i = 0; i < 2; ++i) {
                opt.step(slot++, p.mean_bias[i], acc.mean_bias[i] * scale, mean_lr, false);
            }
            // Cross-entropy never reaches the concentration head, so it is frozen (no decay either).
            if (kind == LossKind::CrossEntropy) continue;
            for (std::size_t i = 0; i < p.conc_weights.size(); ++i) {
                opt.step(slot++, p.conc_weights[i], acc.conc_weights[i] * scale, conc_lr, true);
            }
            opt.step(slot++, p.conc_bias, acc.conc_bias * scale, conc_lr, false);
        }
        result.epochs.push_back(diagnose(p, data, kind, config.lambda_reg, epoch));
    }
    return result;
}

}  // namespace distprm
