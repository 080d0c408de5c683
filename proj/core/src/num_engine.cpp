#include "ehrcvd/num_engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>

#include "ehrcvd/errors.hpp"

namespace ehrcvd {

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DataError("tensor data length " + std::to_string(data_.size()) +
                    " does not match shape " + std::to_string(rows_) + "x" +
                    std::to_string(cols_));
  }
}

void Tensor2::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor2::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void add_vec_mat(std::span<const double> x, const Tensor2& W, std::span<double> out) {
  const std::size_t cols = W.cols();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const auto w = W.row(i);
    for (std::size_t j = 0; j < cols; ++j) out[j] += xi * w[j];
  }
}

void add_mat_vec(const Tensor2& W, std::span<const double> d, std::span<double> out) {
  for (std::size_t i = 0; i < W.rows(); ++i) {
    out[i] += dot(W.row(i), d);
  }
}

void add_outer(std::span<const double> x, std::span<const double> d, Tensor2& G) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    auto g = G.row(i);
    for (std::size_t j = 0; j < d.size(); ++j) g[j] += xi * d[j];
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

std::vector<double> softmax(std::span<const double> scores) {
  std::vector<double> out(scores.size());
  if (scores.empty()) return out;
  const double m = *std::max_element(scores.begin(), scores.end());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - m);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

std::vector<double> masked_softmax(std::span<const double> scores,
                                   std::span<const std::uint8_t> mask) {
  std::vector<double> out(scores.size(), 0.0);
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (mask[i]) m = std::max(m, scores[i]);
  }
  if (!std::isfinite(m)) throw NumericError("softmax over zero unmasked entries");
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!mask[i]) continue;
    out[i] = std::exp(scores[i] - m);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

LossGrad bce_loss(std::span<const double> predictions, std::span<const double> labels,
                  std::span<const double> mask) {
  if (predictions.size() != labels.size() || predictions.size() != mask.size()) {
    throw DataError("bce_loss: length mismatch (" + std::to_string(predictions.size()) +
                    ", " + std::to_string(labels.size()) + ", " +
                    std::to_string(mask.size()) + ")");
  }
  LossGrad out;
  out.grad.assign(predictions.size(), 0.0);
  double weight = 0.0;
  for (double m : mask) weight += m;
  const double norm = std::max(1.0, weight);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (mask[i] == 0.0) continue;
    const double raw = predictions[i];
    const double p = std::clamp(raw, kProbabilityClip, 1.0 - kProbabilityClip);
    const double y = labels[i];
    out.loss -= mask[i] * (y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    if (raw == p) {
      out.grad[i] = -mask[i] * (y / p - (1.0 - y) / (1.0 - p)) / norm;
    }
  }
  out.loss /= norm;
  return out;
}

AdamState::AdamState(AdamHyper h, std::span<const ParamRef> params) : hyper(h) {
  first_moment.reserve(params.size());
  second_moment.reserve(params.size());
  for (const auto& p : params) {
    first_moment.emplace_back(p.value->rows(), p.value->cols());
    second_moment.emplace_back(p.value->rows(), p.value->cols());
  }
}

void adam_step(std::span<const ParamRef> params, std::span<const Tensor2* const> grads,
               AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw DataError("adam_step: parameter/gradient/state block counts differ");
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (!params[b].value->same_shape(*grads[b]) ||
        !params[b].value->same_shape(state.first_moment[b])) {
      throw DataError("adam_step: shape mismatch in block " + params[b].name);
    }
    if (!grads[b]->all_finite()) {
      throw NumericError("gradient blow-up in " + params[b].name);
    }
  }
  state.step += 1;
  const auto& h = state.hyper;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto w = params[b].value->values();
    auto g = grads[b]->values();
    auto m = state.first_moment[b].values();
    auto v = state.second_moment[b].values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      // Entries with an exactly-zero gradient keep their value (lazy update);
      // zero gradients everywhere leave the parameters untouched.
      if (g[i] == 0.0) continue;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= h.learning_rate * mhat / (std::sqrt(vhat) + h.epsilon);
    }
  }
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(std::span<const ParamRef> params,
                           std::span<const Tensor2* const> analytic,
                           const std::function<double()>& loss, double eps) {
  GradCheckReport report;
  for (std::size_t b = 0; b < params.size(); ++b) {
    Tensor2& w = *params[b].value;
    GradCheckReport::Block block{params[b].name, 0.0};
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w[i];
      w[i] = saved + eps;
      const double up = loss();
      w[i] = saved - eps;
      const double down = loss();
      w[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      block.max_rel_error =
          std::max(block.max_rel_error, relative_error((*analytic[b])[i], numeric));
    }
    report.max_rel_error = std::max(report.max_rel_error, block.max_rel_error);
    report.blocks.push_back(std::move(block));
  }
  return report;
}

namespace {

constexpr char kMagic[8] = {'E', 'H', 'R', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put_le(std::ostream& os, T v) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  }
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw DataError("checkpoint truncated");
  }
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> blocks) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(os, kCheckpointVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(blocks.size()));
  for (const auto& b : blocks) {
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(b.name.size()));
    os.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
    put_le<std::uint64_t>(os, b.value.rows());
    put_le<std::uint64_t>(os, b.value.cols());
  }
  for (const auto& b : blocks) {
    for (double v : b.value.values()) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw DataError("failed writing checkpoint: " + path.string());
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path.string());
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) || !std::equal(magic, magic + sizeof(magic), kMagic)) {
    throw DataError("not a checkpoint file (bad magic): " + path.string());
  }
  const auto version = get_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get_le<std::uint32_t>(is);
  std::vector<NamedTensor> blocks(count);
  std::vector<std::pair<std::uint64_t, std::uint64_t>> shapes(count);
  for (auto& b : blocks) {
    const auto len = get_le<std::uint32_t>(is);
    b.name.resize(len);
    if (!is.read(b.name.data(), len)) throw DataError("checkpoint truncated");
    const auto rows = get_le<std::uint64_t>(is);
    const auto cols = get_le<std::uint64_t>(is);
    b.value = Tensor2(rows, cols);
  }
  for (auto& b : blocks) {
    for (double& v : b.value.values()) v = std::bit_cast<double>(get_le<std::uint64_t>(is));
  }
  return blocks;
}

}  // namespace ehrcvd
