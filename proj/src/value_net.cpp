#include "memrl/value_net.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "memrl/errors.hpp"

namespace memrl {

namespace {

using nlohmann::json;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
  double phi = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return phi + x * pdf;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

constexpr double kProbClamp = 1e-12;

struct LayerCache {
  Vector affine;    // W x + b
  Vector xhat;      // layer-normalized, pre gain/offset
  double inv_std = 0.0;
  Vector ln_out;    // gain .* xhat + offset
  Vector act;       // gelu(ln_out)
  Vector drop_mask; // per-unit keep indicator (empty in eval mode)
  Vector out;       // layer output fed forward
};

struct ForwardCache {
  LayerCache l1, l2;
  double logit = 0.0;
  double prob = 0.0;
};

void run_layer(const Matrix& w, const Vector& b, const Vector& gain, const Vector& offset,
               const Vector& in, double p_drop, Mode mode, Rng* rng, LayerCache& c) {
  c.affine = w * in + b;
  const auto h = static_cast<double>(c.affine.size());
  double mu = c.affine.mean();
  Vector centered = c.affine.array() - mu;
  double var = centered.squaredNorm() / h;
  c.inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
  c.xhat = centered * c.inv_std;
  c.ln_out = gain.cwiseProduct(c.xhat) + offset;
  c.act = c.ln_out.unaryExpr([](double x) { return gelu(x); });
  if (mode == Mode::kTrain && p_drop > 0.0) {
    if (!rng) throw InvalidInputError("value net: train mode requires an rng");
    c.drop_mask.resize(c.act.size());
    for (Eigen::Index i = 0; i < c.act.size(); ++i)
      c.drop_mask[i] = rng->uniform() < p_drop ? 0.0 : 1.0;
    c.out = c.act.cwiseProduct(c.drop_mask) / (1.0 - p_drop);
  } else {
    c.drop_mask.resize(0);
    c.out = c.act;
  }
}

ForwardCache forward_cached(const ValueNetParams& p, const Vector& z, Mode mode, Rng* rng) {
  if (z.size() != p.feature_dim())
    throw InvalidInputError("value net: feature length " + std::to_string(z.size()) +
                            " does not match params (expect " + std::to_string(p.feature_dim()) +
                            ")");
  ForwardCache c;
  run_layer(p.w1, p.b1, p.ln1_gain, p.ln1_offset, z, p.p_drop, mode, rng, c.l1);
  run_layer(p.w2, p.b2, p.ln2_gain, p.ln2_offset, c.l1.out, p.p_drop, mode, rng, c.l2);
  c.logit = (p.out_w * c.l2.out)(0) + p.out_b[0];
  c.prob = std::clamp(sigmoid(c.logit), kProbClamp, 1.0 - kProbClamp);
  return c;
}

// Backpropagates one sample given d(loss)/d(logit); accumulates into g.
void backward(const ValueNetParams& p, const Vector& z, const ForwardCache& c, double dlogit,
              ValueNetGrads& g) {
  g.out_w.noalias() += dlogit * c.l2.out.transpose();
  g.out_b[0] += dlogit;
  Vector dout = p.out_w.transpose() * dlogit;

  auto layer_backward = [&p](const LayerCache& lc, const Matrix& w, const Vector& gain,
                             const Vector& in, Vector& dout_io, Matrix& gw, Vector& gb,
                             Vector& ggain, Vector& goffset) {
    Vector dact = dout_io;
    if (lc.drop_mask.size() > 0)
      dact = dact.cwiseProduct(lc.drop_mask) / (1.0 - p.p_drop);
    Vector dln = dact.cwiseProduct(lc.ln_out.unaryExpr([](double x) { return gelu_grad(x); }));
    ggain += dln.cwiseProduct(lc.xhat);
    goffset += dln;
    Vector dxhat = dln.cwiseProduct(gain);
    const auto h = static_cast<double>(dxhat.size());
    double sum_dxhat = dxhat.sum();
    double dot_dxhat_xhat = dxhat.dot(lc.xhat);
    Vector daffine =
        (lc.inv_std / h) * (h * dxhat.array() - sum_dxhat - lc.xhat.array() * dot_dxhat_xhat);
    gw.noalias() += daffine * in.transpose();
    gb += daffine;
    dout_io = w.transpose() * daffine;
  };

  layer_backward(c.l2, p.w2, p.ln2_gain, c.l1.out, dout, g.w2, g.b2, g.ln2_gain, g.ln2_offset);
  layer_backward(c.l1, p.w1, p.ln1_gain, z, dout, g.w1, g.b1, g.ln1_gain, g.ln1_offset);
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Matrix matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw ParseError(std::string("value net params: bad shape for ") + name);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[r];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ParseError(std::string("value net params: bad row width for ") + name);
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[c].get<double>();
  }
  if (!m.allFinite()) throw ParseError(std::string("value net params: non-finite ") + name);
  return m;
}

Vector vector_from_json(const json& j, Eigen::Index n, const char* name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n)
    throw ParseError(std::string("value net params: bad length for ") + name);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = j[i].get<double>();
  if (!v.allFinite()) throw ParseError(std::string("value net params: non-finite ") + name);
  return v;
}

}  // namespace

Vector build_features(const Vector& e_s, const Vector& e_m) {
  if (e_s.size() != e_m.size())
    throw InvalidInputError("build_features: length mismatch (" + std::to_string(e_s.size()) +
                            " vs " + std::to_string(e_m.size()) + ")");
  const Eigen::Index d = e_s.size();
  Vector z(4 * d);
  z.segment(0, d) = e_s;
  z.segment(d, d) = e_m;
  z.segment(2 * d, d) = (e_s - e_m).cwiseAbs();
  z.segment(3 * d, d) = e_s.cwiseProduct(e_m);
  return z;
}

bool ValueNetGrads::all_finite() const {
  auto views = tensor_views(const_cast<ValueNetGrads&>(*this));
  for (const auto& v : views)
    if (!v.allFinite()) return false;
  return true;
}

ValueNetGrads ValueNetParams::zeros_like() const {
  ValueNetGrads g;
  g.w1 = Matrix::Zero(w1.rows(), w1.cols());
  g.b1 = Vector::Zero(b1.size());
  g.ln1_gain = Vector::Zero(ln1_gain.size());
  g.ln1_offset = Vector::Zero(ln1_offset.size());
  g.w2 = Matrix::Zero(w2.rows(), w2.cols());
  g.b2 = Vector::Zero(b2.size());
  g.ln2_gain = Vector::Zero(ln2_gain.size());
  g.ln2_offset = Vector::Zero(ln2_offset.size());
  g.out_w = Matrix::Zero(out_w.rows(), out_w.cols());
  g.out_b = Vector::Zero(out_b.size());
  return g;
}

ValueNetParams init_params(int d, double p_drop, std::uint64_t seed) {
  if (d < 1) throw InvalidInputError("init_params: d must be positive");
  if (p_drop < 0.0 || p_drop >= 1.0) throw InvalidInputError("init_params: p_drop outside [0,1)");
  Rng rng(splitmix64(seed ^ 0x76616c75656e6574ull));
  auto glorot = [&rng](Eigen::Index rows, Eigen::Index cols) {
    double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = (2.0 * rng.uniform() - 1.0) * limit;
    return m;
  };

  ValueNetParams p;
  p.d = d;
  p.p_drop = p_drop;
  p.w1 = glorot(kHidden1, 4 * d);
  p.b1 = Vector::Zero(kHidden1);
  p.ln1_gain = Vector::Ones(kHidden1);
  p.ln1_offset = Vector::Zero(kHidden1);
  p.w2 = glorot(kHidden2, kHidden1);
  p.b2 = Vector::Zero(kHidden2);
  p.ln2_gain = Vector::Ones(kHidden2);
  p.ln2_offset = Vector::Zero(kHidden2);
  p.out_w = glorot(1, kHidden2);
  p.out_b = Vector::Zero(1);
  return p;
}

double forward(const ValueNetParams& params, const Vector& z, Mode mode, Rng* rng) {
  return forward_cached(params, z, mode, rng).prob;
}

LossGrads loss_and_grads(const ValueNetParams& params, const std::vector<TrainingSample>& batch,
                         const Vector& policy_probs, double beta, Mode mode, Rng* rng,
                         const EntropyContext* entropy_ctx) {
  if (batch.empty()) throw InvalidInputError("loss_and_grads: empty batch");
  if (policy_probs.size() == 0)
    throw InvalidInputError("loss_and_grads: empty policy distribution");
  if (std::abs(policy_probs.sum() - 1.0) > 1e-9)
    throw InvalidInputError("loss_and_grads: policy distribution does not sum to 1");
  if (beta < 0.0) throw InvalidInputError("loss_and_grads: beta must be >= 0");

  LossGrads out;
  out.grads = params.zeros_like();

  for (const auto& sample : batch) {
    if (sample.label != 0 && sample.label != 1)
      throw InvalidInputError("loss_and_grads: label must be 0 or 1");
    ForwardCache c = forward_cached(params, sample.features, mode, rng);
    double y = static_cast<double>(sample.label);
    out.bce += -(y * std::log(c.prob) + (1.0 - y) * std::log(1.0 - c.prob));
    backward(params, sample.features, c, c.prob - y, out.grads);
  }

  double entropy = 0.0;
  for (Eigen::Index i = 0; i < policy_probs.size(); ++i) {
    double pi = policy_probs[i];
    if (pi > 0.0) entropy -= pi * std::log(pi);
  }
  out.loss = out.bce - beta * entropy;

  if (entropy_ctx && beta > 0.0) {
    if (static_cast<Eigen::Index>(entropy_ctx->candidate_features.size()) != policy_probs.size() ||
        entropy_ctx->dfused_dval.size() != policy_probs.size())
      throw InvalidInputError("loss_and_grads: entropy context size mismatch");
    for (Eigen::Index j = 0; j < policy_probs.size(); ++j) {
      double pj = policy_probs[j];
      if (pj <= 0.0 || entropy_ctx->dfused_dval[j] == 0.0) continue;
      // d(-beta H)/d(fused_j) with min-max statistics and semantic scores
      // held constant; chains through s_val = sigmoid(logit).
      double dloss_dfused = beta * pj / entropy_ctx->tau * (std::log(pj) + entropy);
      ForwardCache c =
          forward_cached(params, entropy_ctx->candidate_features[j], Mode::kEval, nullptr);
      double dval_dlogit = c.prob * (1.0 - c.prob);
      double dlogit = dloss_dfused * entropy_ctx->dfused_dval[j] * dval_dlogit;
      backward(params, entropy_ctx->candidate_features[j], c, dlogit, out.grads);
    }
  }

  return out;
}

AdamState init_adam(const ValueNetParams& params) {
  AdamState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  s.step = 0;
  return s;
}

void train_step(ValueNetParams& params, const ValueNetGrads& grads, AdamState& state,
                const HyperParams& hp) {
  if (!grads.all_finite()) throw NumericError("train_step: non-finite gradient");

  state.step += 1;
  double bias1 = 1.0 - std::pow(hp.adam_beta1, static_cast<double>(state.step));
  double bias2 = 1.0 - std::pow(hp.adam_beta2, static_cast<double>(state.step));

  auto pv = tensor_views(params);
  auto gv = tensor_views(const_cast<ValueNetGrads&>(grads));
  auto mv = tensor_views(state.m);
  auto vv = tensor_views(state.v);
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (pv[i].size() != gv[i].size()) throw InvalidInputError("train_step: shape mismatch");
    mv[i] = hp.adam_beta1 * mv[i] + (1.0 - hp.adam_beta1) * gv[i];
    vv[i] = hp.adam_beta2 * vv[i].array() + (1.0 - hp.adam_beta2) * gv[i].array().square();
    pv[i].array() -=
        hp.learning_rate * (mv[i].array() / bias1) / ((vv[i].array() / bias2).sqrt() + hp.adam_eps);
  }
}

void save_params(const ValueNetParams& params, const std::string& path) {
  json j;
  j["version"] = 1;
  j["d"] = params.d;
  j["p_drop"] = params.p_drop;
  j["layers"] = json::array();
  j["layers"].push_back({{"w", matrix_to_json(params.w1)},
                         {"b", vector_to_json(params.b1)},
                         {"ln_gain", vector_to_json(params.ln1_gain)},
                         {"ln_offset", vector_to_json(params.ln1_offset)}});
  j["layers"].push_back({{"w", matrix_to_json(params.w2)},
                         {"b", vector_to_json(params.b2)},
                         {"ln_gain", vector_to_json(params.ln2_gain)},
                         {"ln_offset", vector_to_json(params.ln2_offset)}});
  j["out"] = {{"w", matrix_to_json(params.out_w)}, {"b", vector_to_json(params.out_b)}};

  std::ofstream out(path);
  if (!out) throw IoError("cannot write value net params: " + path);
  out << j.dump(2) << '\n';
}

ValueNetParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open value net params: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("value net params: " + std::string(e.what()));
  }
  try {
    if (j.at("version").get<int>() != 1) throw ParseError("value net params: unknown version");
    ValueNetParams p;
    p.d = j.at("d").get<int>();
    p.p_drop = j.at("p_drop").get<double>();
    if (p.d < 1 || p.p_drop < 0.0 || p.p_drop >= 1.0)
      throw ParseError("value net params: bad d or p_drop");
    const auto& layers = j.at("layers");
    if (!layers.is_array() || layers.size() != 2)
      throw ParseError("value net params: expect exactly 2 hidden layers");
    p.w1 = matrix_from_json(layers[0].at("w"), kHidden1, 4 * p.d, "layers[0].w");
    p.b1 = vector_from_json(layers[0].at("b"), kHidden1, "layers[0].b");
    p.ln1_gain = vector_from_json(layers[0].at("ln_gain"), kHidden1, "layers[0].ln_gain");
    p.ln1_offset = vector_from_json(layers[0].at("ln_offset"), kHidden1, "layers[0].ln_offset");
    p.w2 = matrix_from_json(layers[1].at("w"), kHidden2, kHidden1, "layers[1].w");
    p.b2 = vector_from_json(layers[1].at("b"), kHidden2, "layers[1].b");
    p.ln2_gain = vector_from_json(layers[1].at("ln_gain"), kHidden2, "layers[1].ln_gain");
    p.ln2_offset = vector_from_json(layers[1].at("ln_offset"), kHidden2, "layers[1].ln_offset");
    p.out_w = matrix_from_json(j.at("out").at("w"), 1, kHidden2, "out.w");
    p.out_b = vector_from_json(j.at("out").at("b"), 1, "out.b");
    return p;
  } catch (const json::exception& e) {
    throw ParseError("value net params: " + std::string(e.what()));
  }
}

}  // namespace memrl
