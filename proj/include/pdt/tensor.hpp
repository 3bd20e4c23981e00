#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace pdt {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;
using Shape = std::vector<std::int64_t>;

/// Dense 64-bit row-major tensor with an optional reverse-mode graph.
/// Ops are free functions below; each records its backward closure when
/// gradients are enabled and any input requires them.
class Tensor : public std::enable_shared_from_this<Tensor> {
public:
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // allocated lazily, same length as data
    std::string name;          // parameters carry names for diagnostics

    // graph bookkeeping (empty for leaves)
    std::vector<TensorPtr> parents;
    std::function<void(Tensor&)> backward_fn;
    bool consumed = false;

    static TensorPtr create(Shape shape, std::vector<double> data, bool requires_grad = false);
    static TensorPtr zeros(Shape shape, bool requires_grad = false);
    static TensorPtr full(Shape shape, double value, bool requires_grad = false);
    static TensorPtr scalar(double value, bool requires_grad = false);

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape.size()); }
    std::int64_t rows() const;
    std::int64_t cols() const;
    bool is_scalar() const { return data.size() == 1 && shape.size() <= 1; }
    double value() const;  // scalar accessor

    void ensure_grad();
    void zero_grad();
    void accumulate_grad(const std::vector<double>& g);

    TensorPtr named(std::string n) {
        name = std::move(n);
        return shared_from_this();
    }
};

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

/// Scoped guard disabling graph recording (inference / frozen models).
class NoGrad {
public:
    NoGrad();
    ~NoGrad();
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;

private:
    bool prev_;
};
bool grad_enabled();

// ---- elementwise / arithmetic ----
// add/sub/mul accept equal shapes, or one operand whose shape is a trailing
// suffix of the other's (broadcast over the leading axes).
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, double c);
TensorPtr exp_op(const TensorPtr& a);
TensorPtr log_op(const TensorPtr& a);  // errors on non-positive entries
TensorPtr sigmoid(const TensorPtr& a);
TensorPtr tanh_op(const TensorPtr& a);
TensorPtr relu(const TensorPtr& a);

// ---- structure ----
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);  // rank-2 x rank-2
TensorPtr transpose(const TensorPtr& a);                   // rank-2
TensorPtr reshape(const TensorPtr& a, Shape shape);        // same element count
TensorPtr concat_rows(const std::vector<TensorPtr>& parts);
TensorPtr slice_rows(const TensorPtr& a, std::int64_t start, std::int64_t count);
TensorPtr broadcast_to(const TensorPtr& a, const Shape& shape);  // leading axes
TensorPtr embedding(const TensorPtr& table, const std::vector<int>& ids);

// ---- reductions ----
TensorPtr sum(const TensorPtr& a);
TensorPtr mean(const TensorPtr& a);
// sum_i weights[i] * row_i of a rank-2 tensor; weights are constants
TensorPtr weighted_row_sum(const TensorPtr& a, const std::vector<double>& weights);
TensorPtr squared_l2(const TensorPtr& a);
TensorPtr dot(const TensorPtr& a, const TensorPtr& b);
TensorPtr cosine_similarity(const TensorPtr& a, const TensorPtr& b);

// ---- rowwise nonlinear ----
TensorPtr softmax_rows(const TensorPtr& a);  // last axis; rank-1 treated as one row
TensorPtr layer_norm_rows(const TensorPtr& a, const TensorPtr& gamma, const TensorPtr& beta,
                          double eps = 1e-5);

// Cross entropy from logits. `targets` gives one class id per row; rows whose
// target equals `ignore_index` contribute nothing. Returns the summed loss and
// the number of counted rows (mean = loss / count).
struct CrossEntropyResult {
    TensorPtr loss_sum;
    std::int64_t count = 0;
};
CrossEntropyResult cross_entropy_logits(const TensorPtr& logits, const std::vector<int>& targets,
                                        int ignore_index = -1);
TensorPtr cross_entropy_mean(const TensorPtr& logits, const std::vector<int>& targets,
                             int ignore_index = -1);

/// Reverse-mode sweep from a scalar loss. Gradients accumulate (sum) into
/// every reachable tensor with requires_grad. Without `retain` the graph is
/// consumed and a second sweep through it is an error.
void backward(const TensorPtr& loss, bool retain = false);

}  // namespace pdt
