#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cgnn {

using Shape = std::vector<std::size_t>;

std::size_t NumElements(const Shape& shape);
std::string ShapeString(const Shape& shape);

namespace detail {
struct TensorStorage;
}

// Dense row-major array of doubles with an optional gradient buffer.
//
// Tensor is a cheap handle: copies share storage, which is what lets the tape
// accumulate gradients into parameters that live in a model. All values are
// checked finite when a tensor is constructed.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor Zeros(Shape shape, bool requires_grad = false);
  static Tensor Scalar(double value, bool requires_grad = false);
  static Tensor FromRows(const std::vector<std::vector<double>>& rows, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(s_); }
  std::uint64_t id() const;
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  // Leading extent and trailing extent of a rank-2 tensor.
  std::size_t rows() const;
  std::size_t cols() const;

  bool requires_grad() const;
  std::span<const double> values() const;
  std::span<double> mutable_values();
  std::span<const double> grad() const;
  // Gradient storage is shared by every handle, so writing through a const
  // handle is allowed; this is how tape entries accumulate into their inputs.
  std::span<double> mutable_grad() const;

  double item() const;
  double at(std::size_t i) const { return values()[i]; }
  double at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }

  void ZeroGrad();
  // Same values, fresh storage, no gradient.
  Tensor Detached() const;
  bool AllFinite() const;

 private:
  std::shared_ptr<detail::TensorStorage> s_;
};

// Ordered record of differentiable operations. Ops append an entry only when
// the tape is recording and at least one input requires a gradient.
//
// Backward may run once per tape: a second call without Reset() is a contract
// error (double-backward is not supported).
class Tape {
 public:
  enum class Mode { kRecord, kInference };

  explicit Tape(Mode mode = Mode::kRecord) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return mode_ == Mode::kRecord; }
  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

  // True when an op with these inputs must be recorded.
  bool Tracks(std::initializer_list<const Tensor*> inputs) const;
  bool Tracks(std::span<const Tensor> inputs) const;

  void Record(std::string_view op, std::vector<Tensor> inputs, Tensor output,
              std::function<void()> backward);

  void Backward(const Tensor& loss);
  void Reset();

  struct Entry {
    std::string op;
    std::vector<std::uint64_t> input_ids;
    std::uint64_t output_id = 0;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  Mode mode_;
  bool consumed_ = false;
  std::vector<Entry> entries_;
};

// --- differentiable operations -------------------------------------------
// Rank-2 unless stated. Shape errors raise ErrorKind::kDimension.

Tensor MatMul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor Add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor Sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor Mul(Tape& tape, const Tensor& a, const Tensor& b);
// x[N x d] + bias[d] on every row.
Tensor AddRowVector(Tape& tape, const Tensor& x, const Tensor& bias);
// scale * x + shift, elementwise.
Tensor Affine(Tape& tape, const Tensor& x, double scale, double shift);
Tensor Sigmoid(Tape& tape, const Tensor& x);
Tensor Tanh(Tape& tape, const Tensor& x);
Tensor LeakyRelu(Tape& tape, const Tensor& x, double slope = 0.01);
// Normalizes over the last dimension; gamma and beta have that length.
Tensor LayerNorm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps = 1e-5);
Tensor Sum(Tape& tape, const Tensor& x);
Tensor Mean(Tape& tape, const Tensor& x);
Tensor SliceCols(Tape& tape, const Tensor& x, std::size_t begin, std::size_t end);
Tensor GatherRows(Tape& tape, const Tensor& x, std::span<const std::size_t> rows);
Tensor ConcatRows(Tape& tape, std::span<const Tensor> parts);
// Mean over consecutive groups of group_size rows: [(G*g) x d] -> [G x d].
Tensor SegmentMean(Tape& tape, const Tensor& x, std::size_t group_size);

struct SoftmaxCrossEntropyResult {
  Tensor loss;   // scalar, mean negative log-likelihood
  Tensor probs;  // [B x K], constant
};
SoftmaxCrossEntropyResult SoftmaxCrossEntropy(Tape& tape, const Tensor& logits,
                                              std::span<const int> labels);

// Graph ops. Node features are stacked per sample: row b*C + c holds node c of
// sample b. Messages flow from source i to target j through adj[i][j].
Tensor GraphMix(Tape& tape, const Tensor& adj, const Tensor& nodes);
// D_out^{-1/2} (offdiag(A) + I) D_in^{-1/2}. Requires nonnegative weights.
Tensor NormalizeAdjacency(Tape& tape, const Tensor& adj);
// |corrcoef| across the C nodes of a stacked batch, each node's feature vector
// being the concatenation of its rows over the batch. A node with zero
// variance gets an all-zero row and column.
Tensor AbsCorrcoef(Tape& tape, const Tensor& nodes, std::size_t num_nodes);

}  // namespace cgnn
