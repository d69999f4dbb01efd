#include "cgnn/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Core>
#include <spdlog/spdlog.h>

#include "cgnn/error.hpp"

namespace cgnn {

namespace detail {
struct TensorStorage {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t id = 0;
};
}  // namespace detail

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

std::uint64_t NextTensorId() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

void RequireRank2(const Tensor& t, const char* op) {
  CGNN_CHECK(t.defined() && t.rank() == 2, ErrorKind::kDimension,
             std::string(op) + ": expected a rank-2 tensor, got " +
                 (t.defined() ? ShapeString(t.shape()) : std::string("undefined")));
}

void RequireSameShape(const Tensor& a, const Tensor& b, const char* op) {
  CGNN_CHECK(a.shape() == b.shape(), ErrorKind::kDimension,
             std::string(op) + ": shape mismatch " + ShapeString(a.shape()) + " vs " +
                 ShapeString(b.shape()));
}

// Output tensor that requires a gradient iff the op is being recorded.
Tensor MakeOutput(Tape& tape, Shape shape, std::vector<double> values,
                  std::initializer_list<const Tensor*> inputs) {
  return Tensor(std::move(shape), std::move(values), tape.Tracks(inputs));
}

}  // namespace

std::size_t NumElements(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// --- Tensor -----------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : s_(std::make_shared<detail::TensorStorage>()) {
  CGNN_CHECK(NumElements(shape) == values.size(), ErrorKind::kDimension,
             "tensor shape " + ShapeString(shape) + " does not hold " +
                 std::to_string(values.size()) + " values");
  for (double v : values) {
    CGNN_CHECK(std::isfinite(v), ErrorKind::kNumerical, "non-finite value in tensor");
  }
  s_->shape = std::move(shape);
  s_->value = std::move(values);
  s_->requires_grad = requires_grad;
  if (requires_grad) s_->grad.assign(s_->value.size(), 0.0);
  s_->id = NextTensorId();
}

Tensor Tensor::Zeros(Shape shape, bool requires_grad) {
  const std::size_t n = NumElements(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::Scalar(double value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

Tensor Tensor::FromRows(const std::vector<std::vector<double>>& rows, bool requires_grad) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.front().size() : 0;
  std::vector<double> flat;
  flat.reserve(r * c);
  for (const auto& row : rows) {
    CGNN_CHECK(row.size() == c, ErrorKind::kDimension, "ragged rows");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(flat), requires_grad);
}

std::uint64_t Tensor::id() const { return s_->id; }
const Shape& Tensor::shape() const { return s_->shape; }
std::size_t Tensor::size() const { return s_->value.size(); }

std::size_t Tensor::rows() const {
  CGNN_CHECK(rank() == 2, ErrorKind::kDimension, "rows() on " + ShapeString(shape()));
  return s_->shape[0];
}

std::size_t Tensor::cols() const {
  CGNN_CHECK(rank() == 2, ErrorKind::kDimension, "cols() on " + ShapeString(shape()));
  return s_->shape[1];
}

bool Tensor::requires_grad() const { return s_ && s_->requires_grad; }
std::span<const double> Tensor::values() const { return s_->value; }
std::span<double> Tensor::mutable_values() { return s_->value; }
std::span<const double> Tensor::grad() const { return s_->grad; }
std::span<double> Tensor::mutable_grad() const { return s_->grad; }

double Tensor::item() const {
  CGNN_CHECK(size() == 1, ErrorKind::kContract, "item() on non-scalar " + ShapeString(shape()));
  return s_->value[0];
}

void Tensor::ZeroGrad() {
  if (s_ && s_->requires_grad) std::fill(s_->grad.begin(), s_->grad.end(), 0.0);
}

Tensor Tensor::Detached() const { return Tensor(s_->shape, s_->value, false); }

bool Tensor::AllFinite() const {
  return std::all_of(s_->value.begin(), s_->value.end(), [](double v) { return std::isfinite(v); });
}

// --- Tape -------------------------------------------------------------------

bool Tape::Tracks(std::initializer_list<const Tensor*> inputs) const {
  if (!recording()) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

bool Tape::Tracks(std::span<const Tensor> inputs) const {
  if (!recording()) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor& t) { return t.requires_grad(); });
}

void Tape::Record(std::string_view op, std::vector<Tensor> inputs, Tensor output,
                  std::function<void()> backward) {
  CGNN_CHECK(recording(), ErrorKind::kContract, "recording on an inference tape");
  CGNN_CHECK(!consumed_, ErrorKind::kContract, "recording on a consumed tape; call Reset()");
  Entry e;
  e.op = std::string(op);
  for (const auto& in : inputs) {
    CGNN_CHECK(in.id() < output.id(), ErrorKind::kContract, "tape entry out of order");
    e.input_ids.push_back(in.id());
  }
  e.output_id = output.id();
  e.inputs = std::move(inputs);
  e.output = std::move(output);
  e.backward = std::move(backward);
  entries_.push_back(std::move(e));
}

void Tape::Backward(const Tensor& loss) {
  CGNN_CHECK(!consumed_, ErrorKind::kContract,
             "backward already ran on this tape; double-backward is unsupported");
  CGNN_CHECK(loss.defined() && loss.size() == 1, ErrorKind::kContract,
             "backward root must be a scalar");
  CGNN_CHECK(loss.requires_grad(), ErrorKind::kContract,
             "backward root does not depend on any tracked tensor");
  Tensor root = loss;
  root.mutable_grad()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward();
  consumed_ = true;
}

void Tape::Reset() {
  entries_.clear();
  consumed_ = false;
}

// --- elementwise --------------------------------------------------------------

Tensor Add(Tape& tape, const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  Tensor y = MakeOutput(tape, a.shape(), std::move(out), {&a, &b});
  if (y.requires_grad()) {
    tape.Record("add", {a, b}, y, [a, b, y]() mutable {
      auto g = y.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return y;
}

Tensor Sub(Tape& tape, const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  Tensor y = MakeOutput(tape, a.shape(), std::move(out), {&a, &b});
  if (y.requires_grad()) {
    tape.Record("sub", {a, b}, y, [a, b, y]() mutable {
      auto g = y.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return y;
}

Tensor Mul(Tape& tape, const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  Tensor y = MakeOutput(tape, a.shape(), std::move(out), {&a, &b});
  if (y.requires_grad()) {
    tape.Record("mul", {a, b}, y, [a, b, y]() mutable {
      auto g = y.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.at(i);
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.at(i);
      }
    });
  }
  return y;
}

Tensor AddRowVector(Tape& tape, const Tensor& x, const Tensor& bias) {
  RequireRank2(x, "add_row_vector");
  CGNN_CHECK(bias.size() == x.cols(), ErrorKind::kDimension,
             "add_row_vector: bias " + ShapeString(bias.shape()) + " vs " + ShapeString(x.shape()));
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(x.values().begin(), x.values().end());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] += bias.at(c);
  Tensor y = MakeOutput(tape, x.shape(), std::move(out), {&x, &bias});
  if (y.requires_grad()) {
    tape.Record("add_row_vector", {x, bias}, y, [x, bias, y, n, d]() mutable {
      auto g = y.grad();
      if (x.requires_grad()) {
        auto gx = x.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto gb = bias.mutable_grad();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < d; ++c) gb[c] += g[r * d + c];
      }
    });
  }
  return y;
}

Tensor Affine(Tape& tape, const Tensor& x, double scale, double shift) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * x.at(i) + shift;
  Tensor y = MakeOutput(tape, x.shape(), std::move(out), {&x});
  if (y.requires_grad()) {
    tape.Record("affine", {x}, y, [x, y, scale]() mutable {
      auto g = y.grad();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += scale * g[i];
    });
  }
  return y;
}

Tensor Sigmoid(Tape& tape, const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.at(i);
    out[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  Tensor y = MakeOutput(tape, x.shape(), std::move(out), {&x});
  if (y.requires_grad()) {
    tape.Record("sigmoid", {x}, y, [x, y]() mutable {
      auto g = y.grad();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double s = y.at(i);
        gx[i] += g[i] * s * (1.0 - s);
      }
    });
  }
  return y;
}

Tensor Tanh(Tape& tape, const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.at(i));
  Tensor y = MakeOutput(tape, x.shape(), std::move(out), {&x});
  if (y.requires_grad()) {
    tape.Record("tanh", {x}, y, [x, y]() mutable {
      auto g = y.grad();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double t = y.at(i);
        gx[i] += g[i] * (1.0 - t * t);
      }
    });
  }
  return y;
}

Tensor LeakyRelu(Tape& tape, const Tensor& x, double slope) {
  CGNN_CHECK(slope > 0.0 && slope < 1.0, ErrorKind::kContract, "leaky_relu slope must be in (0,1)");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.at(i);
    out[i] = v >= 0 ? v : slope * v;
  }
  Tensor y = MakeOutput(tape, x.shape(), std::move(out), {&x});
  if (y.requires_grad()) {
    tape.Record("leaky_relu", {x}, y, [x, y, slope]() mutable {
      auto g = y.grad();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (x.at(i) >= 0 ? 1.0 : slope);
    });
  }
  return y;
}

// --- linear algebra -----------------------------------------------------------

Tensor MatMul(Tape& tape, const Tensor& a, const Tensor& b) {
  RequireRank2(a, "matmul");
  RequireRank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  CGNN_CHECK(b.rows() == k, ErrorKind::kDimension,
             "matmul: inner dims disagree " + ShapeString(a.shape()) + " x " + ShapeString(b.shape()));
  std::vector<double> out(m * n, 0.0);
  RowMap(out.data(), m, n).noalias() = ConstRowMap(a.values().data(), m, k) * ConstRowMap(b.values().data(), k, n);
  Tensor y = MakeOutput(tape, {m, n}, std::move(out), {&a, &b});
  if (y.requires_grad()) {
    tape.Record("matmul", {a, b}, y, [a, b, y, m, k, n]() mutable {
      const ConstRowMap g(y.grad().data(), m, n);
      // dA = dC * B^T, dB = A^T * dC
      if (a.requires_grad())
        RowMap(a.mutable_grad().data(), m, k).noalias() += g * ConstRowMap(b.values().data(), k, n).transpose();
      if (b.requires_grad())
        RowMap(b.mutable_grad().data(), k, n).noalias() += ConstRowMap(a.values().data(), m, k).transpose() * g;
    });
  }
  return y;
}

Tensor LayerNorm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps) {
  CGNN_CHECK(x.rank() >= 1, ErrorKind::kDimension, "layer_norm on a scalar");
  const std::size_t d = x.shape().back();
  CGNN_CHECK(d >= 2, ErrorKind::kDegenerateInput, "layer_norm needs at least 2 features");
  CGNN_CHECK(eps > 0.0, ErrorKind::kContract, "layer_norm eps must be positive");
  CGNN_CHECK(gamma.size() == d && beta.size() == d, ErrorKind::kDimension,
             "layer_norm: affine params must have length " + std::to_string(d));
  const std::size_t n = x.size() / d;
  std::vector<double> xhat(x.size()), inv_std(n), out(x.size());
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = x.values().data() + r * d;
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += row[c];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      xhat[r * d + c] = (row[c] - mean) * inv_std[r];
      out[r * d + c] = xhat[r * d + c] * gamma.at(c) + beta.at(c);
    }
  }
  Tensor y = MakeOutput(tape, x.shape(), std::move(out), {&x, &gamma, &beta});
  if (y.requires_grad()) {
    tape.Record("layer_norm", {x, gamma, beta}, y,
                [x, gamma, beta, y, xhat = std::move(xhat), inv_std = std::move(inv_std), n,
                 d]() mutable {
                  const auto g = y.grad();
                  if (gamma.requires_grad() || beta.requires_grad()) {
                    for (std::size_t r = 0; r < n; ++r)
                      for (std::size_t c = 0; c < d; ++c) {
                        if (gamma.requires_grad())
                          gamma.mutable_grad()[c] += g[r * d + c] * xhat[r * d + c];
                        if (beta.requires_grad()) beta.mutable_grad()[c] += g[r * d + c];
                      }
                  }
                  if (!x.requires_grad()) return;
                  auto gx = x.mutable_grad();
                  const double dd = static_cast<double>(d);
                  std::vector<double> dxhat(d);
                  for (std::size_t r = 0; r < n; ++r) {
                    double sum = 0.0, dot = 0.0;
                    for (std::size_t c = 0; c < d; ++c) {
                      dxhat[c] = g[r * d + c] * gamma.at(c);
                      sum += dxhat[c];
                      dot += dxhat[c] * xhat[r * d + c];
                    }
                    for (std::size_t c = 0; c < d; ++c)
                      gx[r * d + c] +=
                          inv_std[r] / dd * (dd * dxhat[c] - sum - xhat[r * d + c] * dot);
                  }
                });
  }
  return y;
}

// --- reductions and reshaping -------------------------------------------------

Tensor Sum(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor y = MakeOutput(tape, {}, {s}, {&x});
  if (y.requires_grad()) {
    tape.Record("sum", {x}, y, [x, y]() mutable {
      const double g = y.grad()[0];
      for (double& gx : x.mutable_grad()) gx += g;
    });
  }
  return y;
}

Tensor Mean(Tape& tape, const Tensor& x) {
  CGNN_CHECK(x.size() > 0, ErrorKind::kDimension, "mean of an empty tensor");
  double s = 0.0;
  for (double v : x.values()) s += v;
  const double n = static_cast<double>(x.size());
  Tensor y = MakeOutput(tape, {}, {s / n}, {&x});
  if (y.requires_grad()) {
    tape.Record("mean", {x}, y, [x, y, n]() mutable {
      const double g = y.grad()[0] / n;
      for (double& gx : x.mutable_grad()) gx += g;
    });
  }
  return y;
}

Tensor SliceCols(Tape& tape, const Tensor& x, std::size_t begin, std::size_t end) {
  RequireRank2(x, "slice_cols");
  CGNN_CHECK(begin < end && end <= x.cols(), ErrorKind::kDimension, "slice_cols: bad range");
  const std::size_t n = x.rows(), d = x.cols(), w = end - begin;
  std::vector<double> out(n * w);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = x.at(r * d + begin + c);
  Tensor y = MakeOutput(tape, {n, w}, std::move(out), {&x});
  if (y.requires_grad()) {
    tape.Record("slice_cols", {x}, y, [x, y, n, d, w, begin]() mutable {
      const auto g = y.grad();
      auto gx = x.mutable_grad();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < w; ++c) gx[r * d + begin + c] += g[r * w + c];
    });
  }
  return y;
}

Tensor GatherRows(Tape& tape, const Tensor& x, std::span<const std::size_t> rows) {
  RequireRank2(x, "gather_rows");
  const std::size_t d = x.cols();
  std::vector<double> out(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CGNN_CHECK(rows[i] < x.rows(), ErrorKind::kDimension, "gather_rows: index out of range");
    std::copy_n(x.values().begin() + static_cast<std::ptrdiff_t>(rows[i] * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  Tensor y = MakeOutput(tape, {rows.size(), d}, std::move(out), {&x});
  if (y.requires_grad()) {
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    tape.Record("gather_rows", {x}, y, [x, y, idx = std::move(idx), d]() mutable {
      const auto g = y.grad();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t c = 0; c < d; ++c) gx[idx[i] * d + c] += g[i * d + c];
    });
  }
  return y;
}

Tensor ConcatRows(Tape& tape, std::span<const Tensor> parts) {
  CGNN_CHECK(!parts.empty(), ErrorKind::kDimension, "concat_rows: nothing to concatenate");
  const std::size_t d = parts.front().cols();
  std::size_t total = 0;
  std::vector<double> out;
  for (const auto& p : parts) {
    RequireRank2(p, "concat_rows");
    CGNN_CHECK(p.cols() == d, ErrorKind::kDimension, "concat_rows: column mismatch");
    total += p.rows();
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  Tensor y(Shape{total, d}, std::move(out), tape.Tracks(parts));
  if (y.requires_grad()) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    tape.Record("concat_rows", inputs, y, [inputs, y]() mutable {
      const auto g = y.grad();
      std::size_t offset = 0;
      for (auto& p : inputs) {
        if (p.requires_grad()) {
          auto gp = p.mutable_grad();
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
        }
        offset += p.size();
      }
    });
  }
  return y;
}

Tensor SegmentMean(Tape& tape, const Tensor& x, std::size_t group_size) {
  RequireRank2(x, "segment_mean");
  CGNN_CHECK(group_size > 0 && x.rows() % group_size == 0, ErrorKind::kDimension,
             "segment_mean: rows not divisible by group size");
  const std::size_t groups = x.rows() / group_size, d = x.cols();
  const double inv = 1.0 / static_cast<double>(group_size);
  std::vector<double> out(groups * d, 0.0);
  for (std::size_t gi = 0; gi < groups; ++gi)
    for (std::size_t r = 0; r < group_size; ++r)
      for (std::size_t c = 0; c < d; ++c)
        out[gi * d + c] += x.at((gi * group_size + r) * d + c) * inv;
  Tensor y = MakeOutput(tape, {groups, d}, std::move(out), {&x});
  if (y.requires_grad()) {
    tape.Record("segment_mean", {x}, y, [x, y, groups, group_size, d, inv]() mutable {
      const auto g = y.grad();
      auto gx = x.mutable_grad();
      for (std::size_t gi = 0; gi < groups; ++gi)
        for (std::size_t r = 0; r < group_size; ++r)
          for (std::size_t c = 0; c < d; ++c)
            gx[(gi * group_size + r) * d + c] += g[gi * d + c] * inv;
    });
  }
  return y;
}

// --- loss ---------------------------------------------------------------------

SoftmaxCrossEntropyResult SoftmaxCrossEntropy(Tape& tape, const Tensor& logits,
                                              std::span<const int> labels) {
  RequireRank2(logits, "softmax_cross_entropy");
  const std::size_t b = logits.rows(), k = logits.cols();
  CGNN_CHECK(labels.size() == b, ErrorKind::kDimension, "softmax_cross_entropy: label count");
  CGNN_CHECK(b > 0, ErrorKind::kDimension, "softmax_cross_entropy: empty batch");
  std::vector<double> probs(b * k);
  double loss = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    CGNN_CHECK(labels[r] == 0 || labels[r] == 1, ErrorKind::kLabel,
               "label " + std::to_string(labels[r]) + " outside {0,1}");
    CGNN_CHECK(static_cast<std::size_t>(labels[r]) < k, ErrorKind::kLabel, "label exceeds classes");
    const double* z = logits.values().data() + r * k;
    const double zmax = *std::max_element(z, z + k);
    double denom = 0.0;
    for (std::size_t c = 0; c < k; ++c) denom += std::exp(z[c] - zmax);
    const double log_denom = std::log(denom);
    for (std::size_t c = 0; c < k; ++c) probs[r * k + c] = std::exp(z[c] - zmax - log_denom);
    loss += -(z[labels[r]] - zmax - log_denom);
  }
  loss /= static_cast<double>(b);
  Tensor p({b, k}, probs, false);
  Tensor y = MakeOutput(tape, {}, {loss}, {&logits});
  if (y.requires_grad()) {
    std::vector<int> lab(labels.begin(), labels.end());
    tape.Record("softmax_cross_entropy", {logits}, y,
                [logits, y, probs = std::move(probs), lab = std::move(lab), b, k]() mutable {
                  const double g = y.grad()[0] / static_cast<double>(b);
                  auto gl = logits.mutable_grad();
                  for (std::size_t r = 0; r < b; ++r)
                    for (std::size_t c = 0; c < k; ++c)
                      gl[r * k + c] +=
                          g * (probs[r * k + c] - (static_cast<int>(c) == lab[r] ? 1.0 : 0.0));
                });
  }
  return {y, p};
}

// --- graph ops ----------------------------------------------------------------

Tensor GraphMix(Tape& tape, const Tensor& adj, const Tensor& nodes) {
  RequireRank2(adj, "graph_mix");
  RequireRank2(nodes, "graph_mix");
  const std::size_t c = adj.rows();
  CGNN_CHECK(adj.cols() == c, ErrorKind::kDimension, "graph_mix: adjacency must be square");
  CGNN_CHECK(c > 0 && nodes.rows() % c == 0, ErrorKind::kDimension,
             "graph_mix: node rows not a multiple of the node count");
  const std::size_t batch = nodes.rows() / c, d = nodes.cols();
  std::vector<double> out(nodes.size(), 0.0);
  const auto a = adj.values();
  const auto x = nodes.values();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const double w = a[i * c + j];
        if (w == 0.0) continue;
        const double* src = x.data() + (b * c + i) * d;
        double* dst = out.data() + (b * c + j) * d;
        for (std::size_t k = 0; k < d; ++k) dst[k] += w * src[k];
      }
  Tensor y = MakeOutput(tape, nodes.shape(), std::move(out), {&adj, &nodes});
  if (y.requires_grad()) {
    tape.Record("graph_mix", {adj, nodes}, y, [adj, nodes, y, c, batch, d]() mutable {
      const auto g = y.grad();
      const auto a = adj.values();
      const auto x = nodes.values();
      if (nodes.requires_grad()) {
        auto gx = nodes.mutable_grad();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t i = 0; i < c; ++i)
            for (std::size_t j = 0; j < c; ++j) {
              const double w = a[i * c + j];
              if (w == 0.0) continue;
              for (std::size_t k = 0; k < d; ++k)
                gx[(b * c + i) * d + k] += w * g[(b * c + j) * d + k];
            }
      }
      if (adj.requires_grad()) {
        auto ga = adj.mutable_grad();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t i = 0; i < c; ++i)
            for (std::size_t j = 0; j < c; ++j) {
              double s = 0.0;
              for (std::size_t k = 0; k < d; ++k)
                s += x[(b * c + i) * d + k] * g[(b * c + j) * d + k];
              ga[i * c + j] += s;
            }
      }
    });
  }
  return y;
}

Tensor NormalizeAdjacency(Tape& tape, const Tensor& adj) {
  RequireRank2(adj, "normalize_adjacency");
  const std::size_t c = adj.rows();
  CGNN_CHECK(adj.cols() == c, ErrorKind::kDimension, "normalize_adjacency: not square");
  std::vector<double> tilde(c * c);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double w = adj.at(i * c + j);
      CGNN_CHECK(w >= 0.0, ErrorKind::kContract, "adjacency weights must be nonnegative");
      tilde[i * c + j] = i == j ? 1.0 : w;
    }
  std::vector<double> dout(c, 0.0), din(c, 0.0);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      dout[i] += tilde[i * c + j];
      din[j] += tilde[i * c + j];
    }
  std::vector<double> out(c * c);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out[i * c + j] = tilde[i * c + j] / std::sqrt(dout[i] * din[j]);
  Tensor y = MakeOutput(tape, {c, c}, out, {&adj});
  if (y.requires_grad()) {
    tape.Record("normalize_adjacency", {adj}, y,
                [adj, y, dout = std::move(dout), din = std::move(din), c]() mutable {
                  const auto g = y.grad();
                  std::vector<double> rout(c, 0.0), rin(c, 0.0);
                  for (std::size_t i = 0; i < c; ++i)
                    for (std::size_t j = 0; j < c; ++j) {
                      const double ga = g[i * c + j] * y.at(i * c + j);
                      rout[i] += ga;
                      rin[j] += ga;
                    }
                  for (std::size_t i = 0; i < c; ++i) {
                    rout[i] *= -0.5 / dout[i];
                    rin[i] *= -0.5 / din[i];
                  }
                  auto gadj = adj.mutable_grad();
                  for (std::size_t i = 0; i < c; ++i)
                    for (std::size_t j = 0; j < c; ++j) {
                      if (i == j) continue;
                      gadj[i * c + j] +=
                          g[i * c + j] / std::sqrt(dout[i] * din[j]) + rout[i] + rin[j];
                    }
                });
  }
  return y;
}

Tensor AbsCorrcoef(Tape& tape, const Tensor& nodes, std::size_t num_nodes) {
  RequireRank2(nodes, "abs_corrcoef");
  const std::size_t c = num_nodes;
  CGNN_CHECK(c > 0 && nodes.rows() % c == 0, ErrorKind::kDimension,
             "abs_corrcoef: node rows not a multiple of the node count");
  const std::size_t batch = nodes.rows() / c, d = nodes.cols(), n = batch * d;
  CGNN_CHECK(n >= 2, ErrorKind::kDegenerateInput, "abs_corrcoef needs at least 2 features");
  // Centered per-node vectors, u[node][b*d + k].
  std::vector<double> u(c * n);
  for (std::size_t node = 0; node < c; ++node) {
    double mean = 0.0;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t k = 0; k < d; ++k) mean += nodes.at((b * c + node) * d + k);
    mean /= static_cast<double>(n);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t k = 0; k < d; ++k)
        u[node * n + b * d + k] = nodes.at((b * c + node) * d + k) - mean;
  }
  std::vector<double> cov(c * c, 0.0);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = i; j < c; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += u[i * n + k] * u[j * n + k];
      cov[i * c + j] = cov[j * c + i] = s;
    }
  std::vector<bool> degenerate(c);
  for (std::size_t i = 0; i < c; ++i) {
    // Relative to the node's raw scale so constant-but-large rows count as flat.
    double scale = 0.0;
    for (std::size_t k = 0; k < n; ++k) scale = std::max(scale, std::abs(u[i * n + k]));
    degenerate[i] = cov[i * c + i] <= 1e-24 * static_cast<double>(n) || scale == 0.0;
    if (degenerate[i]) spdlog::debug("abs_corrcoef: node {} has zero variance, using a zero row", i);
  }
  std::vector<double> r(c * c, 0.0), out(c * c, 0.0);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      if (degenerate[i] || degenerate[j]) continue;
      if (i == j) {
        r[i * c + j] = 1.0;
        out[i * c + j] = 1.0;
        continue;
      }
      double v = cov[i * c + j] / std::sqrt(cov[i * c + i] * cov[j * c + j]);
      v = std::clamp(v, -1.0, 1.0);
      r[i * c + j] = v;
      out[i * c + j] = std::abs(v);
    }
  Tensor y = MakeOutput(tape, {c, c}, std::move(out), {&nodes});
  if (y.requires_grad()) {
    tape.Record("abs_corrcoef", {nodes}, y,
                [nodes, y, u = std::move(u), cov = std::move(cov), r = std::move(r),
                 degenerate = std::move(degenerate), c, batch, d, n]() mutable {
                  const auto g = y.grad();
                  std::vector<double> dc(c * c, 0.0);
                  for (std::size_t i = 0; i < c; ++i)
                    for (std::size_t j = 0; j < c; ++j) {
                      if (i == j || degenerate[i] || degenerate[j]) continue;
                      const double rij = r[i * c + j];
                      const double sg = rij > 0 ? 1.0 : (rij < 0 ? -1.0 : 0.0);
                      const double gr = g[i * c + j] * sg;
                      if (gr == 0.0) continue;
                      dc[i * c + j] += gr / std::sqrt(cov[i * c + i] * cov[j * c + j]);
                      dc[i * c + i] += -0.5 * gr * rij / cov[i * c + i];
                      dc[j * c + j] += -0.5 * gr * rij / cov[j * c + j];
                    }
                  auto gx = nodes.mutable_grad();
                  std::vector<double> du(n);
                  for (std::size_t i = 0; i < c; ++i) {
                    std::fill(du.begin(), du.end(), 0.0);
                    for (std::size_t j = 0; j < c; ++j) {
                      const double w = dc[i * c + j] + dc[j * c + i];
                      if (w == 0.0) continue;
                      for (std::size_t k = 0; k < n; ++k) du[k] += w * u[j * n + k];
                    }
                    double mean = 0.0;
                    for (double v : du) mean += v;
                    mean /= static_cast<double>(n);
                    for (std::size_t b = 0; b < batch; ++b)
                      for (std::size_t k = 0; k < d; ++k)
                        gx[(b * c + i) * d + k] += du[b * d + k] - mean;
                  }
                });
  }
  return y;
}

}  // namespace cgnn
