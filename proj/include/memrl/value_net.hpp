#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "memrl/embedding.hpp"
#include "memrl/hyperparams.hpp"
#include "memrl/rng.hpp"

namespace memrl {

using Matrix = Eigen::MatrixXd;

// State-conditional value estimator over (query, case) pairs: a two-hidden-
// layer MLP (affine -> layer norm -> GELU -> dropout) with a sigmoid head,
// hidden widths 512 and 128.

inline constexpr int kHidden1 = 512;
inline constexpr int kHidden2 = 128;
inline constexpr double kLayerNormEps = 1e-5;

enum class Mode { kTrain, kEval };

// Feature layout: [e_s ; e_m ; |e_s - e_m| ; e_s .* e_m], length 4d.
Vector build_features(const Vector& e_s, const Vector& e_m);

struct ValueNetGrads {
  Matrix w1;
  Vector b1, ln1_gain, ln1_offset;
  Matrix w2;
  Vector b2, ln2_gain, ln2_offset;
  Matrix out_w;  // 1 x kHidden2
  Vector out_b;  // size 1

  bool all_finite() const;
};

struct ValueNetParams {
  Matrix w1;  // kHidden1 x 4d
  Vector b1, ln1_gain, ln1_offset;
  Matrix w2;  // kHidden2 x kHidden1
  Vector b2, ln2_gain, ln2_offset;
  Matrix out_w;  // 1 x kHidden2
  Vector out_b;  // size 1
  double p_drop = 0.1;
  int d = 0;  // embedding dimension; feature length is 4d

  int feature_dim() const { return 4 * d; }
  ValueNetGrads zeros_like() const;
};

// Flattened views over the tensors of a params/grads struct, in a fixed
// order; lets the optimizer and serialization treat both uniformly.
template <class T>
std::array<Eigen::Map<Vector>, 10> tensor_views(T& t) {
  auto flat = [](auto& m) { return Eigen::Map<Vector>(m.data(), m.size()); };
  return {flat(t.w1),       flat(t.b1), flat(t.ln1_gain), flat(t.ln1_offset),
          flat(t.w2),       flat(t.b2), flat(t.ln2_gain), flat(t.ln2_offset),
          flat(t.out_w),    flat(t.out_b)};
}

// Symmetric uniform weight init (+-sqrt(6/(fan_in+fan_out))), zero biases,
// identity layer norm.
ValueNetParams init_params(int d, double p_drop, std::uint64_t seed);

// Sigmoid score in (0,1). Train mode applies inverted dropout from `rng`;
// eval mode is a pure function of (params, z).
double forward(const ValueNetParams& params, const Vector& z, Mode mode = Mode::kEval,
               Rng* rng = nullptr);

struct TrainingSample {
  Vector features;
  int label = 0;  // {0,1}
};

// Optional pathway for the entropy regularizer's gradient: the retrieval
// distribution is softmax(fused/tau) and fused depends on each candidate's
// value score through a per-candidate constant factor (min-max statistics and
// semantic scores are treated as stop-gradients).
struct EntropyContext {
  std::vector<Vector> candidate_features;
  Vector dfused_dval;  // per-candidate d(fused)/d(s_val); zero when degenerate
  double tau = 0.8;
};

struct LossGrads {
  double loss = 0.0;
  double bce = 0.0;
  ValueNetGrads grads;
};

// loss = sum over batch of BCE(y, f(z)) - beta * H(policy_probs).
// Gradient-check callers pass Mode::kEval (no dropout).
LossGrads loss_and_grads(const ValueNetParams& params, const std::vector<TrainingSample>& batch,
                         const Vector& policy_probs, double beta, Mode mode = Mode::kEval,
                         Rng* rng = nullptr, const EntropyContext* entropy_ctx = nullptr);

struct AdamState {
  ValueNetGrads m;
  ValueNetGrads v;
  std::int64_t step = 0;
};

AdamState init_adam(const ValueNetParams& params);

// One Adam update. Throws NumericError and leaves params untouched when the
// gradients contain non-finite entries.
void train_step(ValueNetParams& params, const ValueNetGrads& grads, AdamState& state,
                const HyperParams& hp);

// Versioned JSON round-trip; reload gives bit-identical eval-mode outputs.
void save_params(const ValueNetParams& params, const std::string& path);
ValueNetParams load_params(const std::string& path);

}  // namespace memrl
