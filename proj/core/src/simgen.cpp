#include "reirl/simgen.hpp"

#include "reirl/errors.hpp"
#include "reirl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace reirl {

TransitionStyle transition_style_from_string(const std::string& name) {
  if (name == "random-dirichlet") return TransitionStyle::RandomDirichlet;
  if (name == "deterministic-cycle") return TransitionStyle::DeterministicCycle;
  throw ConfigError("unknown transition style '" + name + "'");
}

std::string to_string(TransitionStyle style) {
  switch (style) {
    case TransitionStyle::RandomDirichlet: return "random-dirichlet";
    case TransitionStyle::DeterministicCycle: return "deterministic-cycle";
  }
  throw ConfigError("invalid transition style");
}

void GeneratorSpec::validate() const {
  if (n_states < 1) throw ConfigError("n_states must be at least 1");
  if (n_actions < 1) throw ConfigError("n_actions must be at least 1");
  if (K < 1) throw ConfigError("K must be at least 1");
  if (horizon < 1) throw ConfigError("horizon must be at least 1");
  if (N < 1) throw ConfigError("N must be at least 1");
  if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma must be in [0, 1]");
  if (theta_star.size() != K) throw ConfigError("theta_star must have K entries");
}

FiniteMDP make_mdp(const GeneratorSpec& spec) {
  spec.validate();
  FiniteMDP mdp;
  mdp.n_states = spec.n_states;
  mdp.n_actions = spec.n_actions;
  mdp.initial_state = 0;
  mdp.transition.assign(
      static_cast<std::size_t>(spec.n_states) * spec.n_actions * spec.n_states, 0.0);
  mdp.state_features.resize(spec.n_states, spec.K);

  SeedStream feature_stream(spec.seed, "features");
  for (int s = 0; s < spec.n_states; ++s) {
    for (int k = 0; k < spec.K; ++k) {
      mdp.state_features(s, k) = feature_stream.next_normal();
    }
  }

  SeedStream transition_stream(spec.seed, "transition");
  for (int s = 0; s < spec.n_states; ++s) {
    for (int a = 0; a < spec.n_actions; ++a) {
      if (spec.transition_style == TransitionStyle::DeterministicCycle) {
        mdp.p(s, a, (s + a + 1) % spec.n_states) = 1.0;
      } else {
        double total = 0.0;
        std::vector<double> draws(spec.n_states);
        for (int s2 = 0; s2 < spec.n_states; ++s2) {
          draws[s2] = transition_stream.next_exponential();
          total += draws[s2];
        }
        double row_sum = 0.0;
        for (int s2 = 0; s2 < spec.n_states - 1; ++s2) {
          mdp.p(s, a, s2) = draws[s2] / total;
          row_sum += mdp.p(s, a, s2);
        }
        // Last entry by complement so the row sums to 1 exactly.
        mdp.p(s, a, spec.n_states - 1) = std::max(0.0, 1.0 - row_sum);
      }
    }
  }
  mdp.validate();
  return mdp;
}

ExactStepPolicy exact_step_policy(const FiniteMDP& mdp, const Vec& theta, int horizon,
                                  double gamma) {
  mdp.validate();
  if (theta.size() != mdp.K()) throw DataError("theta dimension mismatch");

  // Arrival weight of state s at step t: exp(gamma^t * theta . f(s)).
  std::vector<double> discount(horizon + 1);
  double w = 1.0;
  for (int t = 0; t <= horizon; ++t) {
    discount[t] = w;
    w *= gamma;
  }
  const Vec scores = mdp.state_features * theta;  // theta . f(s) per state

  ExactStepPolicy policy;
  policy.action_probs.assign(horizon, Mat::Zero(mdp.n_states, mdp.n_actions));
  policy.next_state_probs.assign(
      horizon, std::vector<Mat>(mdp.n_actions, Mat::Zero(mdp.n_states, mdp.n_states)));

  // Backward continuation values V_t(s); V_H = 1. Rescaled per level so
  // long horizons stay in range (scales cancel in every conditional).
  Vec value = Vec::Ones(mdp.n_states);
  for (int t = horizon - 1; t >= 0; --t) {
    Mat action_weight = Mat::Zero(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s) {
      for (int a = 0; a < mdp.n_actions; ++a) {
        double acc = 0.0;
        for (int s2 = 0; s2 < mdp.n_states; ++s2) {
          const double pr = mdp.p(s, a, s2);
          if (pr == 0.0) continue;
          const double arrival = std::exp(discount[t + 1] * scores[s2]) * value[s2];
          acc += pr * arrival;
          policy.next_state_probs[t][a](s, s2) = pr * arrival;
        }
        action_weight(s, a) = acc;
        if (acc > 0.0) policy.next_state_probs[t][a].row(s) /= acc;
      }
    }
    Vec next_value(mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s) {
      const double total = action_weight.row(s).sum();
      next_value[s] = total / mdp.n_actions;
      policy.action_probs[t].row(s) = action_weight.row(s) / total;
    }
    const double scale = next_value.maxCoeff();
    if (scale > 0.0) next_value /= scale;
    value = next_value;
  }
  return policy;
}

int action_index_to_label(int index, int n_actions) {
  if (n_actions > kActionCount) throw ConfigError("at most 7 actions map to labels");
  return index - n_actions / 2;
}

int action_label_to_index(int label, int n_actions) {
  if (n_actions > kActionCount) throw ConfigError("at most 7 actions map to labels");
  return label + n_actions / 2;
}

namespace {

std::string draw_entity(std::int64_t index) {
  std::ostringstream os;
  os << "sim-" << std::setw(7) << std::setfill('0') << index;
  return os.str();
}

}  // namespace

ExpertSample sample_expert_set(const FiniteMDP& mdp, const Vec& theta_star, std::int64_t N,
                               int horizon, double gamma, std::uint64_t seed,
                               std::int64_t cap) {
  if (N < 1) throw ConfigError("N must be at least 1");
  if (mdp.n_actions > kActionCount) {
    throw ConfigError("pipeline labels support at most 7 actions");
  }

  ExpertSample sample;
  sample.space = enumerate_trajectories(mdp, horizon, gamma, cap);
  const Vec law = trajectory_distribution(theta_star, sample.space);
  Vec cumulative(law.size());
  double acc = 0.0;
  for (Eigen::Index l = 0; l < law.size(); ++l) {
    acc += law[l];
    cumulative[l] = acc;
  }
  cumulative[law.size() - 1] = 1.0;

  const ExactStepPolicy step_policy = exact_step_policy(mdp, theta_star, horizon, gamma);

  sample.set.horizon = horizon;
  sample.set.K = mdp.K();
  sample.set.gamma = gamma;
  sample.set.trajectories.reserve(static_cast<std::size_t>(N));
  sample.drawn_indices.reserve(static_cast<std::size_t>(N));

  sample.exact_policy.smoothing_eps = 0.0;
  sample.exact_policy.k_neighbors = 0;
  sample.exact_policy.min_overlap = 0;

  for (std::int64_t i = 0; i < N; ++i) {
    // Counter-based seeding: draw i is reproducible independently of the rest.
    SeedStream draw_stream(seed, "draw", static_cast<std::uint64_t>(i));
    const double u = draw_stream.next_unit();
    const auto it = std::upper_bound(cumulative.data(), cumulative.data() + cumulative.size(), u);
    const auto l = static_cast<std::int64_t>(it - cumulative.data());
    sample.drawn_indices.push_back(l);

    Trajectory traj;
    traj.entity = draw_entity(i);
    traj.id = traj.entity;
    traj.start_period = 0;
    traj.states.reserve(horizon + 1);
    traj.actions.reserve(horizon);
    for (int t = 0; t <= horizon; ++t) {
      traj.states.push_back(mdp.state_features.row(sample.space.state_paths(l, t)).transpose());
    }
    for (int t = 0; t < horizon; ++t) {
      const int a = sample.space.action_paths(l, t);
      traj.actions.push_back(action_index_to_label(a, mdp.n_actions));

      PolicyKey key{traj.entity, t};
      PolicyEntry entry;
      entry.p.fill(0.0);
      const int s = sample.space.state_paths(l, t);
      for (int ai = 0; ai < mdp.n_actions; ++ai) {
        entry.p[action_slot(action_index_to_label(ai, mdp.n_actions))] =
            step_policy.action_probs[t](s, ai);
      }
      entry.n_valid_neighbors = 0;
      sample.exact_policy.entries.emplace(std::move(key), entry);
    }
    sample.set.trajectories.push_back(std::move(traj));
  }
  return sample;
}

PanelDataset expert_sample_to_panel(const ExpertSample& sample, const FiniteMDP& mdp) {
  PanelDataset panel;
  panel.K = mdp.K();
  panel.feature_names.reserve(panel.K);
  for (int k = 0; k < panel.K; ++k) panel.feature_names.push_back("f" + std::to_string(k + 1));
  panel.standardization = Standardization::identity(panel.K);

  for (const auto& traj : sample.set.trajectories) {
    for (int t = 0; t <= traj.horizon(); ++t) {
      PanelRow row;
      row.entity = traj.entity;
      row.period = t;
      row.features = traj.states[t];
      if (t < traj.horizon()) {
        row.action_label = traj.actions[t];
        row.raw_action = static_cast<double>(traj.actions[t]);
      } else {
        // Final state has no action; give it the neutral label so the KNN
        // pool stays rectangular. It never enters a likelihood.
        row.action_label = 0;
        row.raw_action = 0.0;
      }
      panel.rows.push_back(std::move(row));
    }
  }
  std::stable_sort(panel.rows.begin(), panel.rows.end(),
                   [](const PanelRow& a, const PanelRow& b) {
                     return std::tie(a.entity, a.period) < std::tie(b.entity, b.period);
                   });
  return panel;
}

FeatureBounds mdp_feature_bounds(const FiniteMDP& mdp, double gamma, int horizon) {
  FeatureBounds bounds;
  bounds.upper = mdp.state_features.colwise().maxCoeff().transpose();
  bounds.lower = mdp.state_features.colwise().minCoeff().transpose();
  bounds.geom_factor = geometric_sum(gamma, horizon);
  return bounds;
}

}  // namespace reirl
