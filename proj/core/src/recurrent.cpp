#include "ehrcvd/recurrent.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>

namespace ehrcvd {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::gru: return "gru";
    case Variant::mt_gru: return "mt_gru";
    case Variant::mt_att_gru: return "mt_att_gru";
  }
  return "gru";
}

Variant parse_variant(std::string_view name) {
  if (name == "gru") return Variant::gru;
  if (name == "mt_gru") return Variant::mt_gru;
  if (name == "mt_att_gru") return Variant::mt_att_gru;
  throw ConfigError("unknown model variant: " + std::string(name));
}

void ModelConfig::validate() const {
  if (n_hidden == 0) throw ConfigError("n_hidden must be >= 1");
  if (n_days_pad == 0) throw ConfigError("n_days_pad must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be positive");
  }
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (patience == 0) throw ConfigError("patience must be >= 1");
  if (!(input_dropout >= 0.0 && input_dropout < 1.0)) {
    throw ConfigError("input_dropout must lie in [0, 1)");
  }
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"variant", to_string(c.variant)},
          {"n_hidden", c.n_hidden},
          {"n_days_pad", c.n_days_pad},
          {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"target_horizon", c.target_horizon},
          {"seed", c.seed},
          {"patience", c.patience},
          {"input_dropout", c.input_dropout}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    c.n_hidden = j.value("n_hidden", c.n_hidden);
    c.n_days_pad = j.value("n_days_pad", c.n_days_pad);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.target_horizon = j.value("target_horizon", c.target_horizon);
    c.seed = j.value("seed", c.seed);
    c.patience = j.value("patience", c.patience);
    c.input_dropout = j.value("input_dropout", c.input_dropout);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid model config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---- parameters ----

std::vector<ParamRef> RecurrentParams::refs() {
  std::vector<ParamRef> out = {
      {"gru.update_input", &gru.update_input},
      {"gru.reset_input", &gru.reset_input},
      {"gru.candidate_input", &gru.candidate_input},
      {"gru.update_recurrent", &gru.update_recurrent},
      {"gru.reset_recurrent", &gru.reset_recurrent},
      {"gru.candidate_recurrent", &gru.candidate_recurrent},
      {"gru.update_bias", &gru.update_bias},
      {"gru.reset_bias", &gru.reset_bias},
      {"gru.candidate_bias", &gru.candidate_bias},
  };
  if (attention) {
    out.push_back({"attention.score", &attention->score});
    out.push_back({"attention.combine", &attention->combine});
    out.push_back({"attention.combine_bias", &attention->combine_bias});
  }
  out.push_back({"heads.weights", &heads.weights});
  out.push_back({"heads.bias", &heads.bias});
  return out;
}

std::vector<NamedTensor> RecurrentParams::to_named_tensors() const {
  auto copy = *this;
  std::vector<NamedTensor> out;
  for (const auto& r : copy.refs()) out.push_back({r.name, *r.value});
  return out;
}

RecurrentParams RecurrentParams::from_named_tensors(std::span<const NamedTensor> blocks) {
  std::map<std::string, const Tensor2*> by_name;
  for (const auto& b : blocks) by_name[b.name] = &b.value;
  RecurrentParams p;
  if (by_name.count("attention.score")) p.attention.emplace();
  for (const auto& r : p.refs()) {
    const auto it = by_name.find(r.name);
    if (it == by_name.end()) throw DataError("checkpoint lacks block " + r.name);
    *r.value = *it->second;
  }
  const std::size_t nf = p.gru.n_features(), nh = p.gru.n_hidden();
  const auto expect = [](const Tensor2& t, std::size_t rows, std::size_t cols, const char* name) {
    if (t.rows() != rows || t.cols() != cols) {
      throw DataError(std::string("checkpoint block has unexpected shape: ") + name);
    }
  };
  expect(p.gru.reset_input, nf, nh, "gru.reset_input");
  expect(p.gru.candidate_input, nf, nh, "gru.candidate_input");
  expect(p.gru.update_recurrent, nh, nh, "gru.update_recurrent");
  expect(p.gru.reset_recurrent, nh, nh, "gru.reset_recurrent");
  expect(p.gru.candidate_recurrent, nh, nh, "gru.candidate_recurrent");
  expect(p.gru.update_bias, 1, nh, "gru.update_bias");
  expect(p.gru.reset_bias, 1, nh, "gru.reset_bias");
  expect(p.gru.candidate_bias, 1, nh, "gru.candidate_bias");
  if (p.attention) {
    expect(p.attention->score, nh, nh, "attention.score");
    expect(p.attention->combine, 2 * nh, nh, "attention.combine");
    expect(p.attention->combine_bias, 1, nh, "attention.combine_bias");
  }
  expect(p.heads.weights, p.heads.weights.rows(), nh, "heads.weights");
  expect(p.heads.bias, 1, p.heads.n_outputs(), "heads.bias");
  return p;
}

RecurrentParams RecurrentParams::zeros_like() const {
  RecurrentParams z = *this;
  for (auto& r : z.refs()) r.value->fill(0.0);
  return z;
}

namespace {

Tensor2 glorot(std::size_t fan_in, std::size_t fan_out, std::size_t rows, std::size_t cols,
               Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor2 t(rows, cols);
  for (auto& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

}  // namespace

RecurrentParams init_params(std::size_t n_features, std::size_t n_hidden, std::size_t n_outputs,
                            bool with_attention, std::uint64_t seed) {
  if (n_features == 0 || n_hidden == 0 || n_outputs == 0) {
    throw ConfigError("init_params: sizes must be positive");
  }
  Rng rng(seed);
  RecurrentParams p;
  auto& g = p.gru;
  g.update_input = glorot(n_features, n_hidden, n_features, n_hidden, rng);
  g.reset_input = glorot(n_features, n_hidden, n_features, n_hidden, rng);
  g.candidate_input = glorot(n_features, n_hidden, n_features, n_hidden, rng);
  g.update_recurrent = glorot(n_hidden, n_hidden, n_hidden, n_hidden, rng);
  g.reset_recurrent = glorot(n_hidden, n_hidden, n_hidden, n_hidden, rng);
  g.candidate_recurrent = glorot(n_hidden, n_hidden, n_hidden, n_hidden, rng);
  g.update_bias = Tensor2(1, n_hidden);
  g.reset_bias = Tensor2(1, n_hidden);
  g.candidate_bias = Tensor2(1, n_hidden);
  if (with_attention) {
    AttentionParams a;
    a.score = glorot(n_hidden, n_hidden, n_hidden, n_hidden, rng);
    a.combine = glorot(2 * n_hidden, n_hidden, 2 * n_hidden, n_hidden, rng);
    a.combine_bias = Tensor2(1, n_hidden);
    p.attention = std::move(a);
  }
  p.heads.weights = glorot(n_hidden, 1, n_outputs, n_hidden, rng);
  p.heads.bias = Tensor2(1, n_outputs);
  return p;
}

// ---- forward pieces ----

namespace {

double tanh_of(double x) { return std::tanh(x); }

// One active GRU step; writes gates and the new state.
void cell_step(std::span<const double> x, std::span<const double> h_prev, const GruParams& p,
               std::span<double> z, std::span<double> r, std::span<double> cand,
               std::span<double> h_out, std::vector<double>& scratch) {
  const std::size_t nh = p.n_hidden();
  std::copy(p.update_bias.values().begin(), p.update_bias.values().end(), z.begin());
  add_vec_mat(x, p.update_input, z);
  add_vec_mat(h_prev, p.update_recurrent, z);
  std::copy(p.reset_bias.values().begin(), p.reset_bias.values().end(), r.begin());
  add_vec_mat(x, p.reset_input, r);
  add_vec_mat(h_prev, p.reset_recurrent, r);
  for (std::size_t j = 0; j < nh; ++j) {
    z[j] = sigmoid(z[j]);
    r[j] = sigmoid(r[j]);
  }
  scratch.resize(nh);
  for (std::size_t j = 0; j < nh; ++j) scratch[j] = r[j] * h_prev[j];
  std::copy(p.candidate_bias.values().begin(), p.candidate_bias.values().end(), cand.begin());
  add_vec_mat(x, p.candidate_input, cand);
  add_vec_mat(scratch, p.candidate_recurrent, cand);
  for (std::size_t j = 0; j < nh; ++j) {
    cand[j] = tanh_of(cand[j]);
    h_out[j] = (1.0 - z[j]) * h_prev[j] + z[j] * cand[j];
  }
}

struct AttentionCache {
  std::vector<double> query_proj;  // query^T S
  std::vector<double> weights;
  std::vector<double> combined_input;  // [context; query]
  std::vector<double> representation;
};

// `states` rows offset..offset+n-1 are the day states.
void attend(const Tensor2& states, std::size_t offset, std::span<const std::uint8_t> mask,
            std::span<const double> query, const AttentionParams& a, AttentionCache& c) {
  const std::size_t n = mask.size();
  const std::size_t nh = query.size();
  c.query_proj.assign(nh, 0.0);
  add_vec_mat(query, a.score, c.query_proj);
  std::vector<double> scores(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    if (mask[t]) scores[t] = dot(c.query_proj, states.row(offset + t));
  }
  c.weights = masked_softmax(scores, mask);
  c.combined_input.assign(2 * nh, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    if (c.weights[t] == 0.0) continue;
    const auto h = states.row(offset + t);
    for (std::size_t j = 0; j < nh; ++j) c.combined_input[j] += c.weights[t] * h[j];
  }
  std::copy(query.begin(), query.end(), c.combined_input.begin() + static_cast<std::ptrdiff_t>(nh));
  c.representation.assign(a.combine_bias.values().begin(), a.combine_bias.values().end());
  add_vec_mat(c.combined_input, a.combine, c.representation);
  for (auto& v : c.representation) v = tanh_of(v);
}

void heads_logits(std::span<const double> rep, const HeadParams& heads, std::span<double> out) {
  for (std::size_t k = 0; k < heads.n_outputs(); ++k) {
    out[k] = dot(heads.weights.row(k), rep) + heads.bias[k];
  }
}

void check_features(const RecurrentParams& params, const PatientSequence& seq) {
  if (seq.n_features() != params.gru.n_features()) {
    throw DataError("sequence " + seq.patient_id + " has " + std::to_string(seq.n_features()) +
                    " features, model expects " + std::to_string(params.gru.n_features()));
  }
  if (seq.mask.size() != seq.n_days()) {
    throw DataError("sequence " + seq.patient_id + " mask length differs from its rows");
  }
}

}  // namespace

std::vector<double> gru_cell_forward(std::span<const double> x, std::span<const double> h_prev,
                                     const GruParams& params) {
  if (x.size() != params.n_features() || h_prev.size() != params.n_hidden()) {
    throw DataError("gru_cell_forward: input or state size mismatch");
  }
  const std::size_t nh = params.n_hidden();
  std::vector<double> z(nh), r(nh), cand(nh), h(nh), scratch;
  cell_step(x, h_prev, params, z, r, cand, h, scratch);
  return h;
}

SequenceStates sequence_forward(const PatientSequence& seq, const GruParams& params) {
  if (seq.n_features() != params.n_features()) {
    throw DataError("sequence_forward: feature count mismatch");
  }
  const std::size_t nh = params.n_hidden(), n = seq.n_days();
  SequenceStates s;
  s.hidden = Tensor2(n, nh);
  std::vector<double> h(nh, 0.0), z(nh), r(nh), cand(nh), next(nh), scratch;
  for (std::size_t t = 0; t < n; ++t) {
    if (seq.mask[t]) {
      cell_step(seq.matrix.row(t), h, params, z, r, cand, next, scratch);
      h.swap(next);
    }
    std::copy(h.begin(), h.end(), s.hidden.row(t).begin());
  }
  s.final_state = std::move(h);
  return s;
}

AttentionResult attention_combine(const Tensor2& hidden, std::span<const std::uint8_t> mask,
                                  std::span<const double> final_state,
                                  const AttentionParams& params) {
  if (mask.size() != hidden.rows()) throw DataError("attention_combine: mask length mismatch");
  AttentionCache c;
  attend(hidden, 0, mask, final_state, params, c);
  return {std::move(c.representation), std::move(c.weights)};
}

std::vector<double> heads_forward(std::span<const double> representation,
                                  const HeadParams& heads) {
  std::vector<double> out(heads.n_outputs());
  heads_logits(representation, heads, out);
  for (auto& v : out) v = sigmoid(v);
  return out;
}

// ---- full forward / backward ----

namespace {

struct ForwardCache {
  Tensor2 hidden;  // (n+1) x nh; row 0 is the zero initial state
  Tensor2 update, reset, candidate;
  Tensor2 dropped_inputs;  // empty unless dropout applied
  AttentionCache attention;
  std::vector<double> probabilities;
};

void forward(const RecurrentParams& p, const PatientSequence& seq, ForwardCache& c,
             double dropout_rate, Rng* rng) {
  const std::size_t n = seq.n_days(), nh = p.gru.n_hidden();
  c.hidden = Tensor2(n + 1, nh);
  c.update = Tensor2(n, nh);
  c.reset = Tensor2(n, nh);
  c.candidate = Tensor2(n, nh);
  const bool drop = dropout_rate > 0.0 && rng != nullptr;
  if (drop) {
    c.dropped_inputs = seq.matrix;
    const double keep_scale = 1.0 / (1.0 - dropout_rate);
    for (std::size_t t = 0; t < n; ++t) {
      if (!seq.mask[t]) continue;
      for (auto& v : c.dropped_inputs.row(t)) {
        if (v == 0.0) continue;
        v = rng->bernoulli(dropout_rate) ? 0.0 : v * keep_scale;
      }
    }
  } else {
    c.dropped_inputs = Tensor2();
  }
  const Tensor2& inputs = drop ? c.dropped_inputs : seq.matrix;
  std::vector<double> scratch;
  for (std::size_t t = 0; t < n; ++t) {
    if (!seq.mask[t]) {
      const auto prev = c.hidden.row(t);
      std::copy(prev.begin(), prev.end(), c.hidden.row(t + 1).begin());
      continue;
    }
    cell_step(inputs.row(t), c.hidden.row(t), p.gru, c.update.row(t), c.reset.row(t),
              c.candidate.row(t), c.hidden.row(t + 1), scratch);
  }
  const auto final_state = c.hidden.row(n);
  std::span<const double> rep = final_state;
  if (p.attention) {
    attend(c.hidden, 1, seq.mask, final_state, *p.attention, c.attention);
    rep = c.attention.representation;
  }
  c.probabilities.resize(p.heads.n_outputs());
  heads_logits(rep, p.heads, c.probabilities);
  for (auto& v : c.probabilities) v = sigmoid(v);
}

// Accumulates gradients given d loss / d logit for each head.
void backward(const RecurrentParams& p, const PatientSequence& seq, const ForwardCache& c,
              std::span<const double> dlogit, RecurrentParams& g) {
  const std::size_t n = seq.n_days(), nh = p.gru.n_hidden();
  const auto final_state = c.hidden.row(n);
  std::span<const double> rep = p.attention ? std::span<const double>(c.attention.representation)
                                            : final_state;

  std::vector<double> drep(nh, 0.0);
  for (std::size_t k = 0; k < p.heads.n_outputs(); ++k) {
    if (dlogit[k] == 0.0) continue;
    g.heads.bias[k] += dlogit[k];
    auto gw = g.heads.weights.row(k);
    const auto w = p.heads.weights.row(k);
    for (std::size_t j = 0; j < nh; ++j) {
      gw[j] += dlogit[k] * rep[j];
      drep[j] += dlogit[k] * w[j];
    }
  }

  // Gradient w.r.t. each day state h_1..h_n (row t = h_{t+1}).
  Tensor2 dstate(n, nh);
  if (p.attention) {
    const auto& a = *p.attention;
    auto& ga = *g.attention;
    const auto& ac = c.attention;
    std::vector<double> da(nh);
    for (std::size_t j = 0; j < nh; ++j) {
      da[j] = drep[j] * (1.0 - ac.representation[j] * ac.representation[j]);
      ga.combine_bias[j] += da[j];
    }
    add_outer(ac.combined_input, da, ga.combine);
    std::vector<double> dinput(2 * nh, 0.0);
    add_mat_vec(a.combine, da, dinput);
    const std::span<const double> dcontext(dinput.data(), nh);
    std::vector<double> dquery(dinput.begin() + static_cast<std::ptrdiff_t>(nh), dinput.end());

    std::vector<double> dweight(n, 0.0);
    double weighted = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      if (!seq.mask[t]) continue;
      dweight[t] = dot(dcontext, c.hidden.row(t + 1));
      weighted += ac.weights[t] * dweight[t];
    }
    std::vector<double> dproj(nh, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      if (!seq.mask[t]) continue;
      const double alpha = ac.weights[t];
      const double dscore = alpha * (dweight[t] - weighted);
      const auto h = c.hidden.row(t + 1);
      auto dh = dstate.row(t);
      for (std::size_t j = 0; j < nh; ++j) {
        dproj[j] += dscore * h[j];
        dh[j] += alpha * dcontext[j] + dscore * ac.query_proj[j];
      }
    }
    add_mat_vec(a.score, dproj, dquery);
    add_outer(final_state, dproj, ga.score);
    if (n > 0) {
      auto last = dstate.row(n - 1);
      for (std::size_t j = 0; j < nh; ++j) last[j] += dquery[j];
    }
  } else if (n > 0) {
    auto last = dstate.row(n - 1);
    for (std::size_t j = 0; j < nh; ++j) last[j] += drep[j];
  }

  const Tensor2& inputs = c.dropped_inputs.empty() ? seq.matrix : c.dropped_inputs;
  auto& gg = g.gru;
  std::vector<double> carry(nh, 0.0), dh(nh), dprev(nh), dz(nh), dr(nh), dc(nh), rh(nh), drh(nh);
  for (std::size_t t = n; t-- > 0;) {
    const auto ds = dstate.row(t);
    for (std::size_t j = 0; j < nh; ++j) dh[j] = ds[j] + carry[j];
    if (!seq.mask[t]) {
      carry = dh;
      continue;
    }
    const auto x = inputs.row(t);
    const auto hp = c.hidden.row(t);
    const auto z = c.update.row(t);
    const auto r = c.reset.row(t);
    const auto cand = c.candidate.row(t);
    for (std::size_t j = 0; j < nh; ++j) {
      dprev[j] = dh[j] * (1.0 - z[j]);
      dc[j] = dh[j] * z[j] * (1.0 - cand[j] * cand[j]);
      dz[j] = dh[j] * (cand[j] - hp[j]) * z[j] * (1.0 - z[j]);
      rh[j] = r[j] * hp[j];
      drh[j] = 0.0;
    }
    add_outer(x, dc, gg.candidate_input);
    add_outer(rh, dc, gg.candidate_recurrent);
    add_mat_vec(p.gru.candidate_recurrent, dc, drh);
    for (std::size_t j = 0; j < nh; ++j) {
      gg.candidate_bias[j] += dc[j];
      dr[j] = drh[j] * hp[j] * r[j] * (1.0 - r[j]);
      dprev[j] += drh[j] * r[j];
      gg.update_bias[j] += dz[j];
      gg.reset_bias[j] += dr[j];
    }
    add_outer(x, dz, gg.update_input);
    add_outer(hp, dz, gg.update_recurrent);
    add_mat_vec(p.gru.update_recurrent, dz, dprev);
    add_outer(x, dr, gg.reset_input);
    add_outer(hp, dr, gg.reset_recurrent);
    add_mat_vec(p.gru.reset_recurrent, dr, dprev);
    carry = dprev;
  }
}

bool same_shapes(RecurrentParams& a, RecurrentParams& b) {
  auto ra = a.refs();
  auto rb = b.refs();
  if (ra.size() != rb.size()) return false;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    if (!ra[i].value->same_shape(*rb[i].value)) return false;
  }
  return true;
}

}  // namespace

std::size_t n_outputs(const ModelConfig& config, std::size_t n_horizons) {
  return config.multi_task() ? n_horizons : 1;
}

std::pair<Tensor2, Tensor2> select_targets(const Tensor2& labels, const Tensor2& masks,
                                           const ModelConfig& config) {
  if (!labels.same_shape(masks)) throw DataError("select_targets: labels and masks differ in shape");
  if (config.multi_task()) return {labels, masks};
  if (config.target_horizon >= labels.cols()) {
    throw ConfigError("target_horizon " + std::to_string(config.target_horizon) +
                      " out of range for " + std::to_string(labels.cols()) + " horizons");
  }
  Tensor2 l(labels.rows(), 1), m(masks.rows(), 1);
  for (std::size_t i = 0; i < labels.rows(); ++i) {
    l(i, 0) = labels(i, config.target_horizon);
    m(i, 0) = masks(i, config.target_horizon);
  }
  return {std::move(l), std::move(m)};
}

double loss_and_gradient(const RecurrentParams& params, const TrainingSet& data,
                         std::span<const std::size_t> batch, RecurrentParams* grad,
                         double dropout_rate, Rng* dropout_rng) {
  const std::size_t k = params.heads.n_outputs();
  if (data.labels.cols() != k || data.masks.cols() != k ||
      data.labels.rows() != data.size() || data.masks.rows() != data.size()) {
    throw DataError("training targets do not match the model outputs");
  }
  std::vector<ForwardCache> caches(batch.size());
  std::vector<double> probs(batch.size() * k), labels(batch.size() * k), mask(batch.size() * k);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::size_t i = batch[b];
    if (i >= data.size()) throw DataError("batch index out of range");
    check_features(params, data.sequences[i]);
    forward(params, data.sequences[i], caches[b], dropout_rate, dropout_rng);
    for (std::size_t o = 0; o < k; ++o) {
      probs[b * k + o] = caches[b].probabilities[o];
      labels[b * k + o] = data.labels(i, o);
      mask[b * k + o] = data.masks(i, o);
    }
  }
  const LossGrad lg = bce_loss(probs, labels, mask);
  if (grad == nullptr) return lg.loss;

  auto& self = const_cast<RecurrentParams&>(params);
  if (!same_shapes(*grad, self)) {
    *grad = params.zeros_like();
  } else {
    for (auto& r : grad->refs()) r.value->fill(0.0);
  }
  std::vector<double> dlogit(k);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    bool any = false;
    for (std::size_t o = 0; o < k; ++o) {
      const double p = probs[b * k + o];
      dlogit[o] = lg.grad[b * k + o] * p * (1.0 - p);
      any = any || dlogit[o] != 0.0;
    }
    if (any) backward(params, data.sequences[batch[b]], caches[b], dlogit, *grad);
  }
  return lg.loss;
}

TrainResult train(const TrainingSet& train_set, const TrainingSet& validation_set,
                  const ModelConfig& config) {
  config.validate();
  if (train_set.size() == 0) throw DataError("train: empty training set");
  const std::size_t nf = train_set.sequences.front().n_features();
  const std::size_t k = train_set.labels.cols();
  if (k == 0) throw DataError("train: no targets");

  TrainResult result;
  RecurrentParams params =
      init_params(nf, config.n_hidden, k, config.uses_attention(), derive_seed(config.seed, 1));
  RecurrentParams grad = params.zeros_like();
  auto refs = params.refs();
  std::vector<const Tensor2*> grad_ptrs;
  for (auto& r : grad.refs()) grad_ptrs.push_back(r.value);
  AdamState adam(AdamHyper{.learning_rate = config.learning_rate}, refs);

  Rng shuffle_rng(derive_seed(config.seed, 2));
  Rng dropout_rng(derive_seed(config.seed, 3));
  std::vector<std::size_t> all_validation(validation_set.size());
  for (std::size_t i = 0; i < all_validation.size(); ++i) all_validation[i] = i;

  result.params = params;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  const auto bs = config.batch_size;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const auto order = shuffle_rng.permutation(train_set.size());
    double loss_sum = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += bs) {
      const std::span<const std::size_t> batch(order.data() + b0, std::min(bs, order.size() - b0));
      const double loss = loss_and_gradient(params, train_set, batch, &grad, config.input_dropout,
                                            &dropout_rng);
      if (!std::isfinite(loss)) {
        throw TrainingDiverged("non-finite training loss in epoch " + std::to_string(epoch),
                               result.params);
      }
      try {
        adam_step(refs, grad_ptrs, adam);
      } catch (const NumericError& e) {
        throw TrainingDiverged(e.what(), result.params);
      }
      loss_sum += loss * static_cast<double>(batch.size());
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(order.size());
    entry.validation_loss = validation_set.size() == 0
                                ? entry.train_loss
                                : loss_and_gradient(params, validation_set, all_validation, nullptr);
    entry.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(entry);
    if (!std::isfinite(entry.validation_loss)) {
      throw TrainingDiverged("non-finite validation loss in epoch " + std::to_string(epoch),
                             result.params);
    }
    if (entry.validation_loss < best_loss) {
      best_loss = entry.validation_loss;
      result.params = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

Prediction predict(const RecurrentParams& params, const PatientSequence& sequence) {
  check_features(params, sequence);
  ForwardCache c;
  forward(params, sequence, c, 0.0, nullptr);
  Prediction out;
  out.probabilities = std::move(c.probabilities);
  if (params.attention) out.attention = std::move(c.attention.weights);
  return out;
}

}  // namespace ehrcvd
