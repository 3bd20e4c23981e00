#include "pdt/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace pdt {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

thread_local bool g_grad_enabled = true;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void check_rank2(const TensorPtr& a, const char* op) {
    if (a->rank() != 2) {
        fail(std::string(op) + ": expected rank-2 tensor, got shape " + shape_str(a->shape));
    }
}

void check_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
    if (a->shape != b->shape) {
        fail(std::string(op) + ": shape mismatch (" + shape_str(a->shape) + " vs " +
             shape_str(b->shape) + ")");
    }
}

bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

TensorPtr make_node(Shape shape, std::vector<double> data, std::vector<TensorPtr> inputs,
                    std::function<void(Tensor&)> bw) {
    auto out = Tensor::create(std::move(shape), std::move(data), false);
    bool track = false;
    if (g_grad_enabled) {
        for (const auto& in : inputs) {
            if (in && in->requires_grad) {
                track = true;
                break;
            }
        }
    }
    if (track) {
        out->requires_grad = true;
        out->parents = std::move(inputs);
        out->backward_fn = std::move(bw);
    }
    return out;
}

// Reduce a gradient shaped like `big` onto `small` (suffix broadcast inverse).
std::vector<double> reduce_to_suffix(const std::vector<double>& g, std::int64_t small_size) {
    std::vector<double> out(static_cast<std::size_t>(small_size), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        out[i % static_cast<std::size_t>(small_size)] += g[i];
    }
    return out;
}

TensorPtr binary_broadcast(const TensorPtr& a, const TensorPtr& b, const char* op,
                           double (*fwd)(double, double),
                           void (*bwd)(double av, double bv, double g, double& ga, double& gb)) {
    const Tensor* big = a.get();
    const Tensor* small = b.get();
    bool b_is_small = true;
    if (a->shape == b->shape) {
        // equal shapes, no broadcast
    } else if (is_suffix(b->shape, a->shape)) {
        // defaults
    } else if (is_suffix(a->shape, b->shape)) {
        big = b.get();
        small = a.get();
        b_is_small = false;
    } else {
        fail(std::string(op) + ": shape mismatch (" + shape_str(a->shape) + " vs " +
             shape_str(b->shape) + ")");
    }
    const std::size_t n = big->data.size();
    const std::size_t m = small->data.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double av = b_is_small ? big->data[i] : small->data[i % m];
        double bv = b_is_small ? small->data[i % m] : big->data[i];
        out[i] = fwd(av, bv);
    }
    auto a_keep = a;
    auto b_keep = b;
    return make_node(big->shape, std::move(out), {a, b},
                     [a_keep, b_keep, bwd, b_is_small](Tensor& node) {
                         const Tensor* bg = b_is_small ? a_keep.get() : b_keep.get();
                         const Tensor* sm = b_is_small ? b_keep.get() : a_keep.get();
                         const std::size_t n2 = bg->data.size();
                         const std::size_t m2 = sm->data.size();
                         std::vector<double> gbig(n2, 0.0), gsmall_full(n2, 0.0);
                         for (std::size_t i = 0; i < n2; ++i) {
                             double av = b_is_small ? bg->data[i] : sm->data[i % m2];
                             double bv = b_is_small ? sm->data[i % m2] : bg->data[i];
                             double ga = 0.0, gb = 0.0;
                             bwd(av, bv, node.grad[i], ga, gb);
                             gbig[i] = b_is_small ? ga : gb;
                             gsmall_full[i] = b_is_small ? gb : ga;
                         }
                         // dispatch by role so a == b (e.g. sub(x, x)) stays correct
                         if (a_keep->requires_grad) {
                             if (b_is_small) {
                                 a_keep->accumulate_grad(gbig);
                             } else {
                                 a_keep->accumulate_grad(
                                     reduce_to_suffix(gsmall_full, a_keep->size()));
                             }
                         }
                         if (b_keep->requires_grad) {
                             if (b_is_small) {
                                 b_keep->accumulate_grad(
                                     reduce_to_suffix(gsmall_full, b_keep->size()));
                             } else {
                                 b_keep->accumulate_grad(gbig);
                             }
                         }
                     });
}

TensorPtr unary_ew(const TensorPtr& a, const char* /*op*/, double (*fwd)(double),
                   double (*dydx)(double x, double y)) {
    std::vector<double> out(a->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a->data[i]);
    auto a_keep = a;
    auto vals = out;  // y values for the backward closure
    return make_node(a->shape, std::move(out), {a}, [a_keep, vals, dydx](Tensor& node) {
        if (!a_keep->requires_grad) return;
        std::vector<double> g(vals.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] = dydx(a_keep->data[i], vals[i]) * node.grad[i];
        }
        a_keep->accumulate_grad(g);
    });
}

}  // namespace

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

TensorPtr Tensor::create(Shape shape, std::vector<double> data, bool requires_grad) {
    for (auto d : shape) {
        if (d <= 0) fail("tensor: non-positive dimension in shape " + shape_str(shape));
    }
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
        fail("tensor: shape " + shape_str(shape) + " does not match data length " +
             std::to_string(data.size()));
    }
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data = std::move(data);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<double> d(static_cast<std::size_t>(shape_numel(shape)), 0.0);
    return create(std::move(shape), std::move(d), requires_grad);
}

TensorPtr Tensor::full(Shape shape, double value, bool requires_grad) {
    std::vector<double> d(static_cast<std::size_t>(shape_numel(shape)), value);
    return create(std::move(shape), std::move(d), requires_grad);
}

TensorPtr Tensor::scalar(double value, bool requires_grad) {
    return create({}, {value}, requires_grad);
}

std::int64_t Tensor::rows() const {
    if (rank() != 2) fail("rows(): tensor is not rank-2, shape " + shape_str(shape));
    return shape[0];
}

std::int64_t Tensor::cols() const {
    if (rank() != 2) fail("cols(): tensor is not rank-2, shape " + shape_str(shape));
    return shape[1];
}

double Tensor::value() const {
    if (!is_scalar()) fail("value(): tensor is not scalar, shape " + shape_str(shape));
    return data[0];
}

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() { grad.assign(data.size(), 0.0); }

void Tensor::accumulate_grad(const std::vector<double>& g) {
    if (g.size() != data.size()) {
        fail("accumulate_grad: size mismatch on '" + name + "'");
    }
    ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

NoGrad::NoGrad() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGrad::~NoGrad() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    return binary_broadcast(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double, double, double g, double& ga, double& gb) {
            ga = g;
            gb = g;
        });
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    return binary_broadcast(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double, double g, double& ga, double& gb) {
            ga = g;
            gb = -g;
        });
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    return binary_broadcast(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double x, double y, double g, double& ga, double& gb) {
            ga = g * y;
            gb = g * x;
        });
}

TensorPtr scale(const TensorPtr& a, double c) {
    std::vector<double> out(a->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * c;
    auto a_keep = a;
    return make_node(a->shape, std::move(out), {a}, [a_keep, c](Tensor& node) {
        if (!a_keep->requires_grad) return;
        std::vector<double> g(node.grad.size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = node.grad[i] * c;
        a_keep->accumulate_grad(g);
    });
}

TensorPtr exp_op(const TensorPtr& a) {
    return unary_ew(a, "exp", [](double x) { return std::exp(x); },
                    [](double, double y) { return y; });
}

TensorPtr log_op(const TensorPtr& a) {
    for (std::size_t i = 0; i < a->data.size(); ++i) {
        if (!(a->data[i] > 0.0)) {
            fail("log: non-positive input " + std::to_string(a->data[i]) + " at flat index " +
                 std::to_string(i));
        }
    }
    return unary_ew(a, "log", [](double x) { return std::log(x); },
                    [](double x, double) { return 1.0 / x; });
}

TensorPtr sigmoid(const TensorPtr& a) {
    return unary_ew(a, "sigmoid",
                    [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                                                 : std::exp(x) / (1.0 + std::exp(x)); },
                    [](double, double y) { return y * (1.0 - y); });
}

TensorPtr tanh_op(const TensorPtr& a) {
    return unary_ew(a, "tanh", [](double x) { return std::tanh(x); },
                    [](double, double y) { return 1.0 - y * y; });
}

TensorPtr relu(const TensorPtr& a) {
    return unary_ew(a, "relu", [](double x) { return x > 0 ? x : 0.0; },
                    [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    check_rank2(a, "matmul");
    check_rank2(b, "matmul");
    if (a->cols() != b->rows()) {
        fail("matmul: shape mismatch (" + shape_str(a->shape) + " vs " + shape_str(b->shape) +
             ")");
    }
    const auto m = a->rows(), k = a->cols(), n = b->cols();
    std::vector<double> out(static_cast<std::size_t>(m * n));
    {
        ConstMatMap A(a->data.data(), m, k), B(b->data.data(), k, n);
        MatMap C(out.data(), m, n);
        C.noalias() = A * B;
    }
    auto a_keep = a, b_keep = b;
    return make_node({m, n}, std::move(out), {a, b}, [a_keep, b_keep, m, k, n](Tensor& node) {
        ConstMatMap G(node.grad.data(), m, n);
        if (a_keep->requires_grad) {
            ConstMatMap B(b_keep->data.data(), k, n);
            std::vector<double> ga(static_cast<std::size_t>(m * k));
            MatMap GA(ga.data(), m, k);
            GA.noalias() = G * B.transpose();
            a_keep->accumulate_grad(ga);
        }
        if (b_keep->requires_grad) {
            ConstMatMap A(a_keep->data.data(), m, k);
            std::vector<double> gb(static_cast<std::size_t>(k * n));
            MatMap GB(gb.data(), k, n);
            GB.noalias() = A.transpose() * G;
            b_keep->accumulate_grad(gb);
        }
    });
}

TensorPtr transpose(const TensorPtr& a) {
    check_rank2(a, "transpose");
    const auto m = a->rows(), n = a->cols();
    std::vector<double> out(a->data.size());
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j)
            out[static_cast<std::size_t>(j * m + i)] = a->data[static_cast<std::size_t>(i * n + j)];
    auto a_keep = a;
    return make_node({n, m}, std::move(out), {a}, [a_keep, m, n](Tensor& node) {
        if (!a_keep->requires_grad) return;
        std::vector<double> g(node.grad.size());
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < m; ++j)
                g[static_cast<std::size_t>(j * n + i)] =
                    node.grad[static_cast<std::size_t>(i * m + j)];
        a_keep->accumulate_grad(g);
    });
}

TensorPtr reshape(const TensorPtr& a, Shape shape) {
    if (shape_numel(shape) != a->size()) {
        fail("reshape: cannot view " + shape_str(a->shape) + " as " + shape_str(shape));
    }
    auto a_keep = a;
    return make_node(std::move(shape), a->data, {a}, [a_keep](Tensor& node) {
        if (a_keep->requires_grad) a_keep->accumulate_grad(node.grad);
    });
}

TensorPtr concat_rows(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) fail("concat: empty input list");
    std::int64_t cols = -1, rows_total = 0;
    for (const auto& p : parts) {
        check_rank2(p, "concat");
        if (cols < 0) cols = p->cols();
        if (p->cols() != cols) {
            fail("concat: shape mismatch (" + shape_str(parts[0]->shape) + " vs " +
                 shape_str(p->shape) + ")");
        }
        rows_total += p->rows();
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(rows_total * cols));
    for (const auto& p : parts) out.insert(out.end(), p->data.begin(), p->data.end());
    auto parts_keep = parts;
    return make_node({rows_total, cols}, std::move(out), parts, [parts_keep](Tensor& node) {
        std::size_t off = 0;
        for (const auto& p : parts_keep) {
            const std::size_t n = p->data.size();
            if (p->requires_grad) {
                std::vector<double> g(node.grad.begin() + static_cast<std::ptrdiff_t>(off),
                                      node.grad.begin() + static_cast<std::ptrdiff_t>(off + n));
                p->accumulate_grad(g);
            }
            off += n;
        }
    });
}

TensorPtr slice_rows(const TensorPtr& a, std::int64_t start, std::int64_t count) {
    check_rank2(a, "slice");
    if (start < 0 || count <= 0 || start + count > a->rows()) {
        fail("slice: rows [" + std::to_string(start) + ", " + std::to_string(start + count) +
             ") out of range for shape " + shape_str(a->shape));
    }
    const auto c = a->cols();
    std::vector<double> out(a->data.begin() + static_cast<std::ptrdiff_t>(start * c),
                            a->data.begin() + static_cast<std::ptrdiff_t>((start + count) * c));
    auto a_keep = a;
    return make_node({count, c}, std::move(out), {a}, [a_keep, start, count, c](Tensor& node) {
        if (!a_keep->requires_grad) return;
        std::vector<double> g(a_keep->data.size(), 0.0);
        std::copy(node.grad.begin(), node.grad.end(),
                  g.begin() + static_cast<std::ptrdiff_t>(start * c));
        a_keep->accumulate_grad(g);
    });
}

TensorPtr broadcast_to(const TensorPtr& a, const Shape& shape) {
    if (!is_suffix(a->shape, shape)) {
        fail("broadcast: " + shape_str(a->shape) + " is not a trailing suffix of " +
             shape_str(shape));
    }
    const std::size_t n = static_cast<std::size_t>(shape_numel(shape));
    const std::size_t m = a->data.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = a->data[i % m];
    auto a_keep = a;
    return make_node(shape, std::move(out), {a}, [a_keep](Tensor& node) {
        if (!a_keep->requires_grad) return;
        a_keep->accumulate_grad(reduce_to_suffix(node.grad, a_keep->size()));
    });
}

TensorPtr embedding(const TensorPtr& table, const std::vector<int>& ids) {
    check_rank2(table, "embedding");
    const auto v = table->rows(), d = table->cols();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= v) {
            fail("embedding: id " + std::to_string(ids[i]) + " at position " + std::to_string(i) +
                 " out of range for table " + shape_str(table->shape));
        }
    }
    if (ids.empty()) fail("embedding: empty id list");
    std::vector<double> out(ids.size() * static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const double* src = table->data.data() + static_cast<std::size_t>(ids[i]) * d;
        std::copy(src, src + d, out.data() + i * static_cast<std::size_t>(d));
    }
    auto t_keep = table;
    auto ids_keep = ids;
    return make_node({static_cast<std::int64_t>(ids.size()), d}, std::move(out), {table},
                     [t_keep, ids_keep, d](Tensor& node) {
                         if (!t_keep->requires_grad) return;
                         std::vector<double> g(t_keep->data.size(), 0.0);
                         for (std::size_t i = 0; i < ids_keep.size(); ++i) {
                             double* dst = g.data() + static_cast<std::size_t>(ids_keep[i]) * d;
                             const double* src = node.grad.data() + i * static_cast<std::size_t>(d);
                             for (std::int64_t j = 0; j < d; ++j) dst[j] += src[j];
                         }
                         t_keep->accumulate_grad(g);
                     });
}

TensorPtr sum(const TensorPtr& a) {
    double s = 0.0;
    for (double v : a->data) s += v;
    auto a_keep = a;
    return make_node({}, {s}, {a}, [a_keep](Tensor& node) {
        if (!a_keep->requires_grad) return;
        std::vector<double> g(a_keep->data.size(), node.grad[0]);
        a_keep->accumulate_grad(g);
    });
}

TensorPtr mean(const TensorPtr& a) { return scale(sum(a), 1.0 / static_cast<double>(a->size())); }

TensorPtr weighted_row_sum(const TensorPtr& a, const std::vector<double>& weights) {
    check_rank2(a, "weighted_row_sum");
    if (static_cast<std::int64_t>(weights.size()) != a->rows()) {
        fail("weighted_row_sum: " + std::to_string(weights.size()) + " weights for shape " +
             shape_str(a->shape));
    }
    const auto c = a->cols();
    std::vector<double> out(static_cast<std::size_t>(c), 0.0);
    for (std::int64_t i = 0; i < a->rows(); ++i) {
        const double w = weights[static_cast<std::size_t>(i)];
        if (w == 0.0) continue;
        const double* row = a->data.data() + i * c;
        for (std::int64_t j = 0; j < c; ++j) out[static_cast<std::size_t>(j)] += w * row[j];
    }
    auto a_keep = a;
    auto w_keep = weights;
    return make_node({c}, std::move(out), {a}, [a_keep, w_keep, c](Tensor& node) {
        if (!a_keep->requires_grad) return;
        std::vector<double> g(a_keep->data.size());
        for (std::int64_t i = 0; i < a_keep->rows(); ++i)
            for (std::int64_t j = 0; j < c; ++j)
                g[static_cast<std::size_t>(i * c + j)] =
                    w_keep[static_cast<std::size_t>(i)] * node.grad[static_cast<std::size_t>(j)];
        a_keep->accumulate_grad(g);
    });
}

TensorPtr squared_l2(const TensorPtr& a) {
    double s = 0.0;
    for (double v : a->data) s += v * v;
    auto a_keep = a;
    return make_node({}, {s}, {a}, [a_keep](Tensor& node) {
        if (!a_keep->requires_grad) return;
        std::vector<double> g(a_keep->data.size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = 2.0 * a_keep->data[i] * node.grad[0];
        a_keep->accumulate_grad(g);
    });
}

TensorPtr dot(const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a->data.size(); ++i) s += a->data[i] * b->data[i];
    auto a_keep = a, b_keep = b;
    return make_node({}, {s}, {a, b}, [a_keep, b_keep](Tensor& node) {
        const double g = node.grad[0];
        if (a_keep->requires_grad) {
            std::vector<double> ga(b_keep->data.size());
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = g * b_keep->data[i];
            a_keep->accumulate_grad(ga);
        }
        if (b_keep->requires_grad) {
            std::vector<double> gb(a_keep->data.size());
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] = g * a_keep->data[i];
            b_keep->accumulate_grad(gb);
        }
    });
}

TensorPtr cosine_similarity(const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(a, b, "cosine_similarity");
    double na2 = 0.0, nb2 = 0.0, ab = 0.0;
    for (std::size_t i = 0; i < a->data.size(); ++i) {
        na2 += a->data[i] * a->data[i];
        nb2 += b->data[i] * b->data[i];
        ab += a->data[i] * b->data[i];
    }
    if (na2 == 0.0 || nb2 == 0.0) fail("cosine_similarity: zero vector operand");
    const double na = std::sqrt(na2), nb = std::sqrt(nb2);
    const double c = ab / (na * nb);
    auto a_keep = a, b_keep = b;
    return make_node({}, {c}, {a, b}, [a_keep, b_keep, na, nb, c](Tensor& node) {
        const double g = node.grad[0];
        if (a_keep->requires_grad) {
            std::vector<double> ga(a_keep->data.size());
            for (std::size_t i = 0; i < ga.size(); ++i) {
                ga[i] = g * (b_keep->data[i] / (na * nb) - c * a_keep->data[i] / (na * na));
            }
            a_keep->accumulate_grad(ga);
        }
        if (b_keep->requires_grad) {
            std::vector<double> gb(b_keep->data.size());
            for (std::size_t i = 0; i < gb.size(); ++i) {
                gb[i] = g * (a_keep->data[i] / (na * nb) - c * b_keep->data[i] / (nb * nb));
            }
            b_keep->accumulate_grad(gb);
        }
    });
}

namespace {

void rows_view(const TensorPtr& a, std::int64_t& r, std::int64_t& c, const char* op) {
    if (a->rank() == 1) {
        r = 1;
        c = a->shape[0];
    } else if (a->rank() == 2) {
        r = a->rows();
        c = a->cols();
    } else {
        fail(std::string(op) + ": expected rank-1 or rank-2 tensor, got shape " +
             shape_str(a->shape));
    }
}

}  // namespace

TensorPtr softmax_rows(const TensorPtr& a) {
    std::int64_t r, c;
    rows_view(a, r, c, "softmax");
    std::vector<double> out(a->data.size());
    for (std::int64_t i = 0; i < r; ++i) {
        const double* x = a->data.data() + i * c;
        double* y = out.data() + i * c;
        double mx = x[0];
        for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (std::int64_t j = 0; j < c; ++j) {
            y[j] = std::exp(x[j] - mx);
            z += y[j];
        }
        for (std::int64_t j = 0; j < c; ++j) y[j] /= z;
    }
    auto a_keep = a;
    auto vals = out;
    return make_node(a->shape, std::move(out), {a}, [a_keep, vals, r, c](Tensor& node) {
        if (!a_keep->requires_grad) return;
        std::vector<double> g(vals.size());
        for (std::int64_t i = 0; i < r; ++i) {
            const double* y = vals.data() + i * c;
            const double* go = node.grad.data() + i * c;
            double dotv = 0.0;
            for (std::int64_t j = 0; j < c; ++j) dotv += go[j] * y[j];
            for (std::int64_t j = 0; j < c; ++j)
                g[static_cast<std::size_t>(i * c + j)] = y[j] * (go[j] - dotv);
        }
        a_keep->accumulate_grad(g);
    });
}

TensorPtr layer_norm_rows(const TensorPtr& a, const TensorPtr& gamma, const TensorPtr& beta,
                          double eps) {
    std::int64_t r, c;
    rows_view(a, r, c, "layer_norm");
    if (gamma->size() != c || beta->size() != c) {
        fail("layer_norm: gamma/beta length " + std::to_string(gamma->size()) + "/" +
             std::to_string(beta->size()) + " vs row width " + std::to_string(c));
    }
    std::vector<double> out(a->data.size());
    std::vector<double> xhat(a->data.size());
    std::vector<double> inv_std(static_cast<std::size_t>(r));
    for (std::int64_t i = 0; i < r; ++i) {
        const double* x = a->data.data() + i * c;
        double mu = 0.0;
        for (std::int64_t j = 0; j < c; ++j) mu += x[j];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::int64_t j = 0; j < c; ++j) var += (x[j] - mu) * (x[j] - mu);
        var /= static_cast<double>(c);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(i)] = is;
        for (std::int64_t j = 0; j < c; ++j) {
            const std::size_t k = static_cast<std::size_t>(i * c + j);
            xhat[k] = (x[j] - mu) * is;
            out[k] = xhat[k] * gamma->data[static_cast<std::size_t>(j)] +
                     beta->data[static_cast<std::size_t>(j)];
        }
    }
    auto a_keep = a;
    auto g_keep = gamma;
    auto b_keep = beta;
    return make_node(a->shape, std::move(out), {a, gamma, beta},
                     [a_keep, g_keep, b_keep, xhat, inv_std, r, c](Tensor& node) {
                         std::vector<double> ga(a_keep->data.size(), 0.0);
                         std::vector<double> gg(static_cast<std::size_t>(c), 0.0);
                         std::vector<double> gb(static_cast<std::size_t>(c), 0.0);
                         for (std::int64_t i = 0; i < r; ++i) {
                             const double* go = node.grad.data() + i * c;
                             const double* xh = xhat.data() + i * c;
                             const double is = inv_std[static_cast<std::size_t>(i)];
                             double sum_gxh = 0.0, sum_g = 0.0;
                             for (std::int64_t j = 0; j < c; ++j) {
                                 const double gj =
                                     go[j] * g_keep->data[static_cast<std::size_t>(j)];
                                 sum_gxh += gj * xh[j];
                                 sum_g += gj;
                                 gg[static_cast<std::size_t>(j)] += go[j] * xh[j];
                                 gb[static_cast<std::size_t>(j)] += go[j];
                             }
                             for (std::int64_t j = 0; j < c; ++j) {
                                 const double gj =
                                     go[j] * g_keep->data[static_cast<std::size_t>(j)];
                                 ga[static_cast<std::size_t>(i * c + j)] =
                                     is * (gj - sum_g / static_cast<double>(c) -
                                           xh[j] * sum_gxh / static_cast<double>(c));
                             }
                         }
                         if (a_keep->requires_grad) a_keep->accumulate_grad(ga);
                         if (g_keep->requires_grad) g_keep->accumulate_grad(gg);
                         if (b_keep->requires_grad) b_keep->accumulate_grad(gb);
                     });
}

CrossEntropyResult cross_entropy_logits(const TensorPtr& logits, const std::vector<int>& targets,
                                        int ignore_index) {
    std::int64_t r, c;
    rows_view(logits, r, c, "cross_entropy");
    if (static_cast<std::int64_t>(targets.size()) != r) {
        fail("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
             std::to_string(r) + " logit rows");
    }
    double total = 0.0;
    std::int64_t count = 0;
    std::vector<double> probs(logits->data.size(), 0.0);
    for (std::int64_t i = 0; i < r; ++i) {
        const int t = targets[static_cast<std::size_t>(i)];
        if (t == ignore_index) continue;
        if (t < 0 || t >= c) {
            fail("cross_entropy: target " + std::to_string(t) + " out of range at row " +
                 std::to_string(i));
        }
        const double* x = logits->data.data() + i * c;
        double mx = x[0];
        for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (std::int64_t j = 0; j < c; ++j) z += std::exp(x[j] - mx);
        const double lse = mx + std::log(z);
        total += lse - x[t];
        double* p = probs.data() + i * c;
        for (std::int64_t j = 0; j < c; ++j) p[j] = std::exp(x[j] - lse);
        ++count;
    }
    auto l_keep = logits;
    auto t_keep = targets;
    auto node = make_node({}, {total}, {logits},
                          [l_keep, t_keep, probs, ignore_index, r, c](Tensor& out) {
                              if (!l_keep->requires_grad) return;
                              const double g = out.grad[0];
                              std::vector<double> gl(l_keep->data.size(), 0.0);
                              for (std::int64_t i = 0; i < r; ++i) {
                                  const int t = t_keep[static_cast<std::size_t>(i)];
                                  if (t == ignore_index) continue;
                                  const double* p = probs.data() + i * c;
                                  double* gr = gl.data() + i * c;
                                  for (std::int64_t j = 0; j < c; ++j) gr[j] = g * p[j];
                                  gr[t] -= g;
                              }
                              l_keep->accumulate_grad(gl);
                          });
    return {node, count};
}

TensorPtr cross_entropy_mean(const TensorPtr& logits, const std::vector<int>& targets,
                             int ignore_index) {
    auto r = cross_entropy_logits(logits, targets, ignore_index);
    if (r.count == 0) fail("cross_entropy: no counted positions (all targets ignored)");
    return scale(r.loss_sum, 1.0 / static_cast<double>(r.count));
}

void backward(const TensorPtr& loss, bool retain) {
    if (!loss) fail("backward: null loss");
    if (!loss->is_scalar()) {
        fail("backward: loss must be scalar, got shape " + shape_str(loss->shape));
    }
    if (loss->consumed) fail("backward: graph already consumed (use retain to reuse)");
    if (!loss->requires_grad) return;  // constant loss, nothing to do

    // topological order by depth-first search over parents
    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> seen;
    std::vector<std::pair<Tensor*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Tensor* p = node->parents[idx].get();
            ++idx;
            if (p && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // Propagate through zeroed per-pass buffers so a retained graph can be
    // swept repeatedly with plain summed accumulation; prior grads are folded
    // back in afterwards.
    std::vector<std::vector<double>> saved(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        Tensor* node = order[i];
        if (!node->requires_grad) continue;
        saved[i] = std::move(node->grad);
        node->grad.assign(node->data.size(), 0.0);
    }
    loss->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor* node = *it;
        if (node->backward_fn) {
            node->ensure_grad();
            node->backward_fn(*node);
        }
    }
    for (std::size_t i = 0; i < order.size(); ++i) {
        Tensor* node = order[i];
        if (saved[i].empty()) continue;
        for (std::size_t k = 0; k < saved[i].size(); ++k) node->grad[k] += saved[i][k];
    }
    if (!retain) {
        for (Tensor* node : order) {
            if (node->backward_fn) {
                node->backward_fn = nullptr;
                node->parents.clear();
                node->consumed = true;
            }
        }
        loss->consumed = true;
    }
}

}  // namespace pdt
