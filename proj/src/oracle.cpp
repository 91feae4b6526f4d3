#include "hnca/oracle.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <map>
#include <tuple>

#include <nlohmann/json.hpp>

namespace hnca::oracle {

namespace {

int total_hidden_units(const StochasticNet& net) {
  int n = 0;
  for (int w : net.spec().hidden_layers) n += w;
  return n;
}

void check_size_cap(const StochasticNet& net) {
  const int n = total_hidden_units(net);
  if (n > kMaxHiddenUnits) {
    throw SizeCapError("network has " + std::to_string(n) +
                       " hidden units, enumeration cap is " +
                       std::to_string(kMaxHiddenUnits));
  }
}

std::vector<int> layer_bit_offsets(const StochasticNet& net) {
  std::vector<int> offsets;
  int at = 0;
  for (int w : net.spec().hidden_layers) {
    offsets.push_back(at);
    at += w;
  }
  return offsets;
}

// Calls fn(trace, bits, cls, p_config, p_outcome) for every joint outcome.
// The trace is the forced forward pass; head.phi is set to cls.
template <typename Fn>
void for_each_outcome(const StochasticNet& net, const Vec& context,
                      Fn&& fn) {
  check_size_cap(net);
  const int hidden = total_hidden_units(net);
  const auto& widths = net.spec().hidden_layers;
  const double hi = high_value(net.spec().output_mapping);
  const double lo = low_value(net.spec().output_mapping);
  const int num_classes = net.spec().num_classes;

  std::vector<Vec> phi(widths.size());
  for (std::size_t k = 0; k < widths.size(); ++k) phi[k].resize(widths[k]);

  const std::uint64_t num_configs = 1ULL << hidden;
  for (std::uint64_t bits = 0; bits < num_configs; ++bits) {
    int at = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      for (int u = 0; u < widths[k]; ++u, ++at) {
        phi[k](u) = ((bits >> at) & 1ULL) ? hi : lo;
      }
    }
    NetworkTrace trace = network_forward_forced(net, context, phi, 0);
    double p_config = 1.0;
    at = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      for (int u = 0; u < widths[k]; ++u, ++at) {
        const double p = trace.layers[k].p(u);
        p_config *= ((bits >> at) & 1ULL) ? p : 1.0 - p;
      }
    }
    for (int cls = 0; cls < num_classes; ++cls) {
      trace.head.phi = cls;
      fn(trace, bits, cls, p_config, p_config * trace.head.p(cls));
    }
  }
}

std::uint64_t extract_layer_bits(std::uint64_t bits, int offset, int width) {
  return (bits >> offset) & ((1ULL << width) - 1ULL);
}

}  // namespace

double enumerate_expected_reward(const StochasticNet& net, const Vec& context,
                                 const RewardFn& reward) {
  double total = 0.0;
  for_each_outcome(net, context,
                   [&](const NetworkTrace&, std::uint64_t, int cls, double,
                       double p_outcome) { total += p_outcome * reward(cls); });
  return total;
}

Vec exact_gradient_fd(const StochasticNet& net, const Vec& context,
                      const RewardFn& reward, double step) {
  if (step < 1e-6 || step > 1e-3) {
    throw SpecError("finite-difference step must lie in [1e-6, 1e-3]");
  }
  check_size_cap(net);
  const int n = net.parameter_count();
  Vec grad(n);
  for (int i = 0; i < n; ++i) {
    StochasticNet plus = net;
    plus.nudge_parameter(i, step);
    StochasticNet minus = net;
    minus.nudge_parameter(i, -step);
    grad(i) = (enumerate_expected_reward(plus, context, reward) -
               enumerate_expected_reward(minus, context, reward)) /
              (2.0 * step);
  }
  return grad;
}

double exact_q(const StochasticNet& net, int layer, int unit,
               std::uint64_t parent_bits, int phi, const Vec& context,
               const RewardFn& reward) {
  const int L = net.num_hidden_layers();
  const auto offsets = layer_bit_offsets(net);
  const auto& widths = net.spec().hidden_layers;

  double mass = 0.0;
  double value = 0.0;
  for_each_outcome(net, context, [&](const NetworkTrace&, std::uint64_t bits,
                                     int cls, double, double p_outcome) {
    bool parents_match;
    if (layer == 0) {
      parents_match = parent_bits == 0;  // parents are the fixed context
    } else {
      const int pk = layer == L ? L - 1 : layer - 1;
      parents_match =
          extract_layer_bits(bits, offsets[pk], widths[pk]) == parent_bits;
    }
    if (!parents_match) return;

    bool unit_matches;
    if (layer == L) {
      unit_matches = cls == phi;
    } else {
      const int bit = static_cast<int>((bits >> (offsets[layer] + unit)) & 1);
      unit_matches = bit == phi;
    }
    if (!unit_matches) return;

    mass += p_outcome;
    value += p_outcome * reward(cls);
  });
  if (mass <= 0.0) {
    throw UnreachableConfigError("conditioning event has zero probability");
  }
  return value / mass;
}

namespace {

struct ActionValueAccum {
  double mass = 0.0;
  double s_high = 0.0, s2_high = 0.0;
  double s_low = 0.0, s2_low = 0.0;
  double s_cross = 0.0;
  // Markov-blanket groups: key -> (mass, sum, sum of squares) per phi.
  std::map<std::tuple<std::uint64_t, std::uint64_t, std::uint64_t>,
           std::array<double, 6>>
      mb;
};

}  // namespace

EstimatorMoments exact_estimator_moments(const StochasticNet& net,
                                         const Vec& context,
                                         const RewardFn& reward,
                                         Estimator estimator) {
  if (estimator != Estimator::Hnca && estimator != Estimator::Reinforce) {
    throw SpecError("estimator moments require hnca or reinforce");
  }
  const int L = net.num_hidden_layers();
  const auto offsets = layer_bit_offsets(net);
  const auto& widths = net.spec().hidden_layers;
  const double hi = high_value(net.spec().output_mapping);
  const int n_params = net.parameter_count();

  // Per (layer, unit, parent_bits) accumulators.
  std::map<std::tuple<int, int, std::uint64_t>, ActionValueAccum> accums;
  Vec g1 = Vec::Zero(n_params), g2 = Vec::Zero(n_params),
      g3 = Vec::Zero(n_params), g4 = Vec::Zero(n_params);
  double prob_mass = 0.0;

  for_each_outcome(net, context, [&](const NetworkTrace& trace,
                                     std::uint64_t bits, int cls,
                                     double p_config, double p_outcome) {
    (void)p_config;
    prob_mass += p_outcome;
    const double r = reward(cls);

    const NetworkBackwardResult bw =
        network_backward(net, trace, r, estimator);

    // Per-parameter gradient raw moments over the full joint.
    const Vec g = bw.grad.flatten();
    g1 += p_outcome * g;
    g2 += p_outcome * g.array().square().matrix();
    g3 += p_outcome * g.array().cube().matrix();
    g4 += p_outcome * g.array().square().square().matrix();

    // Per-unit action-value estimator moments given the parent config.
    for (int k = 0; k < L; ++k) {
      const std::uint64_t parent_bits =
          k == 0 ? 0 : extract_layer_bits(bits, offsets[k - 1], widths[k - 1]);
      const std::uint64_t sibling_bits =
          extract_layer_bits(bits, offsets[k], widths[k]);
      const std::uint64_t child_bits =
          k + 1 < L ? extract_layer_bits(bits, offsets[k + 1], widths[k + 1])
                    : static_cast<std::uint64_t>(cls);
      for (int u = 0; u < widths[k]; ++u) {
        double q_high, q_low;
        if (estimator == Estimator::Hnca) {
          const CreditEstimate& credit = bw.layers[k].credit[u];
          q_high = credit.weight_high * r;
          q_low = credit.weight_low * r;
        } else {
          const bool fired = trace.layers[k].phi(u) == hi;
          const double p = trace.layers[k].p(u);
          q_high = fired ? r / p : 0.0;
          q_low = fired ? 0.0 : r / (1.0 - p);
        }
        ActionValueAccum& acc = accums[{k, u, parent_bits}];
        acc.mass += p_outcome;
        acc.s_high += p_outcome * q_high;
        acc.s2_high += p_outcome * q_high * q_high;
        acc.s_low += p_outcome * q_low;
        acc.s2_low += p_outcome * q_low * q_low;
        acc.s_cross += p_outcome * q_high * q_low;

        const std::uint64_t siblings_without_u =
            sibling_bits & ~(1ULL << u);
        auto& mb = acc.mb[{child_bits, siblings_without_u,
                           std::bit_cast<std::uint64_t>(r)}];
        mb[0] += p_outcome;
        mb[1] += p_outcome * q_high;
        mb[2] += p_outcome * q_high * q_high;
        mb[3] += p_outcome;
        mb[4] += p_outcome * q_low;
        mb[5] += p_outcome * q_low * q_low;
      }
    }
  });

  EstimatorMoments out;
  out.tag = estimator;
  out.prob_mass = prob_mass;

  out.grad.mean = g1;
  out.grad.var = (g2 - g1.array().square().matrix()).cwiseMax(0.0);
  out.grad.m4.resize(n_params);
  for (int i = 0; i < n_params; ++i) {
    const double mu = g1(i);
    out.grad.m4(i) = g4(i) - 4.0 * g3(i) * mu + 6.0 * g2(i) * mu * mu -
                     3.0 * mu * mu * mu * mu;
    if (out.grad.m4(i) < 0.0) out.grad.m4(i) = 0.0;
  }

  for (const auto& [key, acc] : accums) {
    UnitConfigMoments m;
    m.layer = std::get<0>(key);
    m.unit = std::get<1>(key);
    m.parent_bits = std::get<2>(key);
    m.prob_b = acc.mass;
    const double inv = 1.0 / acc.mass;
    m.mean_high = acc.s_high * inv;
    m.mean_low = acc.s_low * inv;
    m.var_high = acc.s2_high * inv - m.mean_high * m.mean_high;
    m.var_low = acc.s2_low * inv - m.mean_low * m.mean_low;
    m.cov_high_low = acc.s_cross * inv - m.mean_high * m.mean_low;
    double ev_high = 0.0, ev_low = 0.0;
    for (const auto& [mb_key, s] : acc.mb) {
      (void)mb_key;
      if (s[0] > 0.0) {
        ev_high += s[2] - s[1] * s[1] / s[0];
        ev_low += s[5] - s[4] * s[4] / s[3];
      }
    }
    m.mb_expected_var_high = ev_high * inv;
    m.mb_expected_var_low = ev_low * inv;
    out.configs.push_back(m);
  }
  return out;
}

OracleReport oracle_report(const StochasticNet& net, const Vec& context,
                           const RewardFn& reward, double fd_step) {
  OracleReport report;
  report.expected_reward = enumerate_expected_reward(net, context, reward);
  report.exact_grad = exact_gradient_fd(net, context, reward, fd_step);
  report.re = exact_estimator_moments(net, context, reward,
                                      Estimator::Reinforce);
  report.hnca = exact_estimator_moments(net, context, reward,
                                        Estimator::Hnca);

  const int L = net.num_hidden_layers();
  const auto& widths = net.spec().hidden_layers;
  for (const auto& cfg : report.hnca.configs) {
    for (int phi = 0; phi <= 1; ++phi) {
      report.q_table.push_back(
          {cfg.layer, cfg.unit, cfg.parent_bits, phi,
           exact_q(net, cfg.layer, cfg.unit, cfg.parent_bits, phi, context,
                   reward)});
    }
  }
  // Head entries: every last-layer configuration is a parent config.
  const int last_width = L > 0 ? widths[L - 1] : 0;
  const std::uint64_t head_parents = L > 0 ? (1ULL << last_width) : 1;
  for (std::uint64_t b = 0; b < head_parents; ++b) {
    for (int cls = 0; cls < net.spec().num_classes; ++cls) {
      report.q_table.push_back(
          {L, 0, b, cls, exact_q(net, L, 0, b, cls, context, reward)});
    }
  }
  return report;
}

std::string OracleReport::to_json() const {
  nlohmann::json j;
  j["expected_reward"] = expected_reward;
  j["exact_grad"] = std::vector<double>(exact_grad.data(),
                                        exact_grad.data() + exact_grad.size());
  nlohmann::json q = nlohmann::json::array();
  for (const auto& e : q_table) {
    q.push_back({{"layer", e.layer},
                 {"unit", e.unit},
                 {"parent_bits", e.parent_bits},
                 {"phi", e.phi},
                 {"q", e.q}});
  }
  j["q_table"] = q;
  auto moments_json = [](const EstimatorMoments& m) {
    nlohmann::json mj;
    mj["estimator"] = to_string(m.tag);
    mj["prob_mass"] = m.prob_mass;
    nlohmann::json cfgs = nlohmann::json::array();
    for (const auto& c : m.configs) {
      cfgs.push_back({{"layer", c.layer},
                      {"unit", c.unit},
                      {"parent_bits", c.parent_bits},
                      {"prob_b", c.prob_b},
                      {"mean_high", c.mean_high},
                      {"mean_low", c.mean_low},
                      {"var_high", c.var_high},
                      {"var_low", c.var_low},
                      {"cov_high_low", c.cov_high_low},
                      {"mb_expected_var_high", c.mb_expected_var_high},
                      {"mb_expected_var_low", c.mb_expected_var_low}});
    }
    mj["configs"] = cfgs;
    mj["grad_mean"] = std::vector<double>(
        m.grad.mean.data(), m.grad.mean.data() + m.grad.mean.size());
    mj["grad_var"] = std::vector<double>(
        m.grad.var.data(), m.grad.var.data() + m.grad.var.size());
    return mj;
  };
  j["reinforce"] = moments_json(re);
  j["hnca"] = moments_json(hnca);
  return j.dump(2);
}

// ---------------------------------------------------------------------------

namespace {

void note_violation(VerifySummary& summary, const std::string& check,
                    std::uint64_t net_seed, const std::string& where,
                    double lhs, double rhs) {
  ++summary.violation_count;
  ++summary.by_check[check];
  if (summary.violations.size() < 32) {
    summary.violations.push_back({check, net_seed, where, lhs, rhs});
  }
}

std::string config_label(const UnitConfigMoments& c, int phi) {
  return "h" + std::to_string(c.layer) + ".u" + std::to_string(c.unit) +
         ".b" + std::to_string(c.parent_bits) +
         (phi == 1 ? ".high" : ".low");
}

}  // namespace

VerifySummary verify_random_nets(int input_dim,
                                 const std::vector<int>& hidden_layers,
                                 int num_classes, int draws,
                                 std::uint64_t seed, MappingPolicy mapping,
                                 const VerifyTolerances& tol) {
  if (draws < 1) throw SpecError("verification requires draws >= 1");
  VerifySummary summary;
  summary.draws = draws;

  for (int draw = 0; draw < draws; ++draw) {
    NetworkSpec spec;
    spec.input_dim = input_dim;
    spec.hidden_layers = hidden_layers;
    spec.num_classes = num_classes;
    switch (mapping) {
      case MappingPolicy::ZeroOne:
        spec.output_mapping = OutputMapping::ZeroOne;
        break;
      case MappingPolicy::PlusMinusOne:
        spec.output_mapping = OutputMapping::PlusMinusOne;
        break;
      case MappingPolicy::Alternate:
        spec.output_mapping = draw % 2 == 0 ? OutputMapping::ZeroOne
                                            : OutputMapping::PlusMinusOne;
        break;
    }
    spec.seed = seed + static_cast<std::uint64_t>(draw);
    StochasticNet net(spec);

    RngStream ctx_rng(spec.seed, 0xC0);
    Vec context(input_dim);
    for (int i = 0; i < input_dim; ++i) {
      context(i) = ctx_rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    const RewardFn reward = [](int cls) { return cls == 0 ? 1.0 : 0.0; };

    const Vec fd = exact_gradient_fd(net, context, reward, tol.fd_step);
    const EstimatorMoments re =
        exact_estimator_moments(net, context, reward, Estimator::Reinforce);
    const EstimatorMoments hnca =
        exact_estimator_moments(net, context, reward, Estimator::Hnca);

    // Unbiasedness: exact estimator means match the exact gradient.
    for (int i = 0; i < fd.size(); ++i) {
      const double bound = tol.unbiased_abs + tol.unbiased_rel * std::abs(fd(i));
      for (const EstimatorMoments* m : {&re, &hnca}) {
        const double err = std::abs(m->grad.mean(i) - fd(i));
        summary.max_unbiased_err = std::max(summary.max_unbiased_err, err);
        if (err > bound) {
          note_violation(summary, "unbiasedness." + to_string(m->tag),
                         spec.seed, net.parameter_name(i), m->grad.mean(i),
                         fd(i));
        }
      }
    }

    // Theorem 1, covariance ordering, and the total-variance identity,
    // per (unit, reachable parent config).
    for (std::size_t c = 0; c < re.configs.size(); ++c) {
      const UnitConfigMoments& mre = re.configs[c];
      const UnitConfigMoments& mh = hnca.configs[c];
      for (int phi = 0; phi <= 1; ++phi) {
        const double var_re = phi == 1 ? mre.var_high : mre.var_low;
        const double var_h = phi == 1 ? mh.var_high : mh.var_low;
        summary.max_theorem1_gap =
            std::max(summary.max_theorem1_gap, var_h - var_re);
        if (var_h > var_re + tol.theorem1) {
          note_violation(summary, "theorem1", spec.seed,
                         config_label(mre, phi), var_h, var_re);
        }
        const double mb =
            phi == 1 ? mre.mb_expected_var_high : mre.mb_expected_var_low;
        const double lotv_err = std::abs((var_re - var_h) - mb);
        summary.max_total_variance_err =
            std::max(summary.max_total_variance_err, lotv_err);
        if (lotv_err > tol.total_variance) {
          note_violation(summary, "total_variance", spec.seed,
                         config_label(mre, phi), var_re - var_h, mb);
        }
      }
      summary.max_cov_gap = std::max(
          summary.max_cov_gap, mre.cov_high_low - mh.cov_high_low);
      if (mh.cov_high_low < mre.cov_high_low - tol.covariance) {
        note_violation(summary, "covariance", spec.seed,
                       config_label(mre, 1), mh.cov_high_low,
                       mre.cov_high_low);
      }
    }

    // Per-parameter gradient variance ordering for Bernoulli-unit params.
    int bernoulli_params = 0;
    for (int k = 0; k < net.num_hidden_layers(); ++k) {
      bernoulli_params += static_cast<int>(net.hidden_layer(k).W.size() +
                                           net.hidden_layer(k).b.size());
    }
    for (int i = 0; i < bernoulli_params; ++i) {
      summary.max_grad_var_gap = std::max(
          summary.max_grad_var_gap, hnca.grad.var(i) - re.grad.var(i));
      if (hnca.grad.var(i) > re.grad.var(i) + tol.grad_var) {
        note_violation(summary, "grad_variance", spec.seed,
                       net.parameter_name(i), hnca.grad.var(i),
                       re.grad.var(i));
      }
    }
  }
  return summary;
}

int VerifySummary::count(const std::string& check_prefix) const {
  int total = 0;
  for (const auto& [name, n] : by_check) {
    if (name.rfind(check_prefix, 0) == 0) total += n;
  }
  return total;
}

std::string VerifySummary::to_json() const {
  nlohmann::json j;
  j["draws"] = draws;
  j["ok"] = ok();
  j["violation_count"] = violation_count;
  j["violations_by_check"] = by_check;
  j["max_unbiased_err"] = max_unbiased_err;
  j["max_theorem1_gap"] = max_theorem1_gap;
  j["max_cov_gap"] = max_cov_gap;
  j["max_grad_var_gap"] = max_grad_var_gap;
  j["max_total_variance_err"] = max_total_variance_err;
  nlohmann::json v = nlohmann::json::array();
  for (const auto& viol : violations) {
    v.push_back({{"check", viol.check},
                 {"net_seed", viol.net_seed},
                 {"where", viol.where},
                 {"lhs", viol.lhs},
                 {"rhs", viol.rhs}});
  }
  j["violations"] = v;
  return j.dump(2);
}

}  // namespace hnca::oracle
