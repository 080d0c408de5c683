#pragma once

// Dense numeric core shared by every learned model: a row-major matrix,
// elementwise activations, masked binary cross-entropy, softmax, Adam and a
// central-difference gradient checker. Everything is double precision.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ehrcvd {

class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  /// Takes ownership of `data`; throws if its length is not rows*cols.
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  void fill(double v);
  bool all_finite() const;
  bool same_shape(const Tensor2& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Tensor2&, const Tensor2&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// A named view of one learnable parameter block.
struct ParamRef {
  std::string name;
  Tensor2* value;
};

struct NamedTensor {
  std::string name;
  Tensor2 value;
};

// ---- linear algebra kernels (accumulating) ----

/// out += x * W, where x has W.rows() entries and out has W.cols() entries.
/// Zero entries of x are skipped, which pays off on sparse day vectors.
void add_vec_mat(std::span<const double> x, const Tensor2& W, std::span<double> out);
/// out += W * d, where d has W.cols() entries and out has W.rows() entries.
void add_mat_vec(const Tensor2& W, std::span<const double> d, std::span<double> out);
/// G += x d^T.
void add_outer(std::span<const double> x, std::span<const double> d, Tensor2& G);
double dot(std::span<const double> a, std::span<const double> b);

// ---- activations ----

double sigmoid(double x);
/// log(sigmoid(x)) computed without overflow.
double log_sigmoid(double x);

/// Max-shifted exponential normalisation.
std::vector<double> softmax(std::span<const double> scores);
/// Softmax restricted to entries with mask != 0; masked entries get exactly 0.
/// Throws NumericError if no entry is unmasked.
std::vector<double> masked_softmax(std::span<const double> scores,
                                   std::span<const std::uint8_t> mask);

// ---- loss ----

inline constexpr double kProbabilityClip = 1e-7;

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;  ///< d loss / d prediction
};

/// Masked binary cross-entropy, normalised by max(1, sum(mask)).
/// Predictions are clipped to [1e-7, 1 - 1e-7]; clipped entries have zero
/// gradient, consistent with the clipped loss.
LossGrad bce_loss(std::span<const double> predictions, std::span<const double> labels,
                  std::span<const double> mask);

// ---- Adam ----

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamHyper hyper;
  std::vector<Tensor2> first_moment;
  std::vector<Tensor2> second_moment;
  std::int64_t step = 0;

  AdamState() = default;
  AdamState(AdamHyper h, std::span<const ParamRef> params);
};

/// One bias-corrected Adam update. Throws NumericError("gradient blow-up in
/// <block>") before touching anything if a gradient entry is non-finite.
void adam_step(std::span<const ParamRef> params, std::span<const Tensor2* const> grads,
               AdamState& state);

// ---- gradient checking ----

struct GradCheckReport {
  struct Block {
    std::string name;
    double max_rel_error = 0.0;
  };
  std::vector<Block> blocks;
  double max_rel_error = 0.0;
};

/// Relative error |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

/// Compares analytic gradients against central differences of `loss`,
/// perturbing every entry of every block in place (restored afterwards).
GradCheckReport grad_check(std::span<const ParamRef> params,
                           std::span<const Tensor2* const> analytic,
                           const std::function<double()>& loss, double eps = 1e-5);

// ---- checkpoints ----

/// Flat binary layout, all integers little-endian:
///   magic "EHRCKPT1" (8 bytes), u32 version (=1), u32 block count,
///   per block: u32 name length, name bytes (UTF-8), u64 rows, u64 cols,
///   then every block's payload in table order as row-major IEEE-754
///   binary64 little-endian.
void write_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> blocks);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

}  // namespace ehrcvd
