#pragma once

#include "reirl/knn_policy.hpp"
#include "reirl/oracle.hpp"
#include "reirl/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace reirl {

enum class TransitionStyle {
  RandomDirichlet,     // rows sampled from a flat Dirichlet
  DeterministicCycle,  // (s, a) -> (s + a + 1) mod n_states, unit mass
};

TransitionStyle transition_style_from_string(const std::string& name);
std::string to_string(TransitionStyle style);

/// Recipe for a synthetic ground-truth instance.
struct GeneratorSpec {
  int n_states = 2;
  int n_actions = 2;
  int K = 2;
  int horizon = 3;
  std::int64_t N = 100;
  double gamma = 1.0;
  Vec theta_star;
  std::uint64_t seed = 0;
  TransitionStyle transition_style = TransitionStyle::RandomDirichlet;

  void validate() const;
};

/// Builds the MDP for a spec: transition rows per style, state features
/// standard-normal, everything frozen by the seed (bit-reproducible).
FiniteMDP make_mdp(const GeneratorSpec& spec);

/// Exact per-step conditional policy of the exponential-family trajectory
/// law, from a backward pass over the horizon. action_probs[t](s, a) is
/// pi(a | s, t); next_state_probs gives the matching conditional state law,
/// so that the product of per-step factors along any trajectory reproduces
/// the trajectory law exactly.
struct ExactStepPolicy {
  std::vector<Mat> action_probs;            // H matrices, n_states x n_actions
  std::vector<std::vector<Mat>> next_state_probs;  // [t][a] n_states x n_states
};

ExactStepPolicy exact_step_policy(const FiniteMDP& mdp, const Vec& theta, int horizon,
                                  double gamma);

/// Maps MDP action index to an action label centered on zero
/// (n_actions <= 7 required): index i -> i - floor(n_actions / 2).
int action_index_to_label(int index, int n_actions);
int action_label_to_index(int label, int n_actions);

struct ExpertSample {
  TrajectorySet set;
  PolicyTable exact_policy;  // keyed by (draw entity, t), exact conditionals
  EnumeratedSpace space;     // the enumeration the draws came from
  std::vector<std::int64_t> drawn_indices;  // enumeration row per draw
};

/// N i.i.d. draws from the exponential-family law at theta_star, via
/// inverse-CDF over the enumerated distribution (no sampler error), plus the
/// exact per-step policy table those draws imply. Draw i is seeded by
/// (seed, i), so sampling is order-independent and reproducible.
ExpertSample sample_expert_set(const FiniteMDP& mdp, const Vec& theta_star,
                               std::int64_t N, int horizon, double gamma,
                               std::uint64_t seed,
                               std::int64_t cap = kDefaultEnumerationCap);

/// Panel rows matching a sampled trajectory set (entity = draw id, period =
/// step index, identity standardization), so the KNN pipeline can run
/// unchanged on synthetic data. raw_action carries the label value.
PanelDataset expert_sample_to_panel(const ExpertSample& sample, const FiniteMDP& mdp);

/// Exact per-feature bounds over the MDP's states.
FeatureBounds mdp_feature_bounds(const FiniteMDP& mdp, double gamma, int horizon);

}  // namespace reirl
