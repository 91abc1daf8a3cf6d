#pragma once

namespace memrl {

// All scalar knobs of the retrieval engine in one place. Defaults follow the
// reference configuration; everything is overridable from config JSON.
struct HyperParams {
  // Case retrieval.
  int k0 = 20;              // semantic recall candidate count
  int k = 5;                // cases injected per round
  double alpha_start = 0.9; // fusion weight on semantic score at t=0
  double alpha_end = 0.35;  // fusion weight after annealing
  double t_decay = 400.0;   // annealing horizon (episodes)
  double tau_c = 0.8;       // softmax temperature
  double epsilon = 0.05;    // exploration rate in selection
  double beta = 0.03;       // entropy regularization coefficient

  // Case training-sample construction.
  int n_bottom = 20;        // size of the low-fused negative pool
  int n_neg = 5;            // negatives drawn per successful episode

  // Skill utility dynamics.
  double eta = 0.1;         // EMA learning rate
  double u_min = 0.5;       // eligibility threshold
  double u_prune = 0.5;     // disposition threshold
  int n_min = 5;            // minimum uses before disposition
  double u_init = 0.5;      // utility assigned to fresh skills
  bool delete_on_prune = false;  // freeze by default, delete if set

  // Skill retrieval.
  double lambda_sem = 0.7;  // weight on bounded semantic similarity
  double lambda_u = 0.3;    // weight on utility prior
  int k_skill_recall = 15;  // semantic candidate count (K)
  int k_skill = 3;          // skills returned per round

  // M-MDP discount; carried for completeness, terminal binary reward never
  // discounts.
  double gamma = 1.0;

  // Value-net optimizer (Adam).
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  // Embedding / value net shape.
  int d = 64;               // embedding dimension
  double p_drop = 0.1;      // dropout rate
};

}  // namespace memrl
