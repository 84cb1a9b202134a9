#include "unirec/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "unirec/common.hpp"

namespace unirec {

namespace {

constexpr double kBceClamp = 1e-12;

double stable_sigmoid(double s) {
    if (s >= 0.0) {
        return 1.0 / (1.0 + std::exp(-s));
    }
    double e = std::exp(s);
    return e / (1.0 + e);
}

// b broadcasts over a when its shape is a suffix of a's shape, or when b is
// a single element.
bool suffix_broadcastable(const Tensor& a, const Tensor& b) {
    if (b.numel() == 1) return true;
    if (b.shape.size() > a.shape.size()) return false;
    size_t off = a.shape.size() - b.shape.size();
    for (size_t i = 0; i < b.shape.size(); ++i) {
        if (a.shape[off + i] != b.shape[i]) return false;
    }
    return true;
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    std::ostringstream os;
    os << op << ": incompatible shapes " << a.shape_str() << " and " << b.shape_str();
    throw std::invalid_argument(os.str());
}

}  // namespace

Tape::NodeId Tape::push(Node n) {
    if (!n.value.all_finite()) {
        throw NumericError("tape op produced a non-finite value");
    }
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

Tensor& Tape::ensure_grad(NodeId id) {
    Node& n = node(id);
    if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
}

Tensor Tape::grad(NodeId id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.data.empty()) return Tensor::zeros(n.value.shape);
    return n.grad;
}

Tape::NodeId Tape::constant(Tensor value) {
    Node n;
    n.op = Op::Constant;
    n.value = std::move(value);
    return push(std::move(n));
}

Tape::NodeId Tape::param(Parameter& p) {
    Node n;
    n.op = Op::Param;
    n.value = p.value;
    n.bound = &p;
    return push(std::move(n));
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b, bool trans_b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.rank() < 2 || B.rank() < 2) shape_error("matmul", A, B);
    const bool shared_b = B.rank() == 2 && A.rank() > 2;
    if (!shared_b && A.rank() != B.rank()) shape_error("matmul", A, B);

    int M = A.dim(A.rank() - 2);
    int K = A.dim(A.rank() - 1);
    int BK = trans_b ? B.dim(B.rank() - 1) : B.dim(B.rank() - 2);
    int N = trans_b ? B.dim(B.rank() - 2) : B.dim(B.rank() - 1);
    if (K != BK) shape_error("matmul", A, B);

    int64_t batch = 1;
    std::vector<int> out_shape;
    for (int i = 0; i < A.rank() - 2; ++i) {
        batch *= A.dim(i);
        out_shape.push_back(A.dim(i));
        if (!shared_b && B.dim(i) != A.dim(i)) shape_error("matmul", A, B);
    }
    out_shape.push_back(M);
    out_shape.push_back(N);

    Tensor C = Tensor::zeros(out_shape);
    const int64_t a_stride = static_cast<int64_t>(M) * K;
    const int64_t b_stride = shared_b ? 0 : static_cast<int64_t>(K) * N;
    const int64_t c_stride = static_cast<int64_t>(M) * N;
    for (int64_t s = 0; s < batch; ++s) {
        const double* ap = A.data.data() + s * a_stride;
        const double* bp = B.data.data() + s * b_stride;
        double* cp = C.data.data() + s * c_stride;
        if (trans_b) {
            mm_nt(ap, bp, cp, M, K, N);
        } else {
            mm_nn(ap, bp, cp, M, K, N);
        }
    }

    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    n.trans_b = trans_b;
    n.value = std::move(C);
    return push(std::move(n));
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!suffix_broadcastable(A, B)) shape_error("add", A, B);
    Tensor out = A;
    const int64_t bn = B.numel();
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) += B.at(i % bn);
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.value = std::move(out);
    return push(std::move(n));
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!suffix_broadcastable(A, B)) shape_error("sub", A, B);
    Tensor out = A;
    const int64_t bn = B.numel();
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) -= B.at(i % bn);
    Node n;
    n.op = Op::Sub;
    n.a = a;
    n.b = b;
    n.value = std::move(out);
    return push(std::move(n));
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!suffix_broadcastable(A, B)) shape_error("mul", A, B);
    Tensor out = A;
    const int64_t bn = B.numel();
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) *= B.at(i % bn);
    Node n;
    n.op = Op::Mul;
    n.a = a;
    n.b = b;
    n.value = std::move(out);
    return push(std::move(n));
}

Tape::NodeId Tape::scale(NodeId a, double c) {
    Tensor out = val(a);
    for (double& v : out.data) v *= c;
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.c = c;
    n.value = std::move(out);
    return push(std::move(n));
}

Tape::NodeId Tape::relu(NodeId a) {
    Tensor out = val(a);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    Node n;
    n.op = Op::Relu;
    n.a = a;
    n.value = std::move(out);
    return push(std::move(n));
}

Tape::NodeId Tape::sigmoid(NodeId a) {
    Tensor out = val(a);
    for (double& v : out.data) v = stable_sigmoid(v);
    Node n;
    n.op = Op::Sigmoid;
    n.a = a;
    n.value = std::move(out);
    return push(std::move(n));
}

Tape::NodeId Tape::square(NodeId a) {
    Tensor out = val(a);
    for (double& v : out.data) v *= v;
    Node n;
    n.op = Op::Square;
    n.a = a;
    n.value = std::move(out);
    return push(std::move(n));
}

Tape::NodeId Tape::softmax_last(NodeId a) {
    const Tensor& A = val(a);
    if (A.rank() < 1) throw std::invalid_argument("softmax_last: rank-0 input");
    const int cols = A.dim(A.rank() - 1);
    if (cols == 0) throw std::invalid_argument("softmax_last: empty last axis");
    Tensor out = A;
    const int64_t rows = A.numel() / cols;
    for (int64_t r = 0; r < rows; ++r) {
        double* p = out.data.data() + r * cols;
        double mx = p[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, p[j]);
        double sum = 0.0;
        for (int j = 0; j < cols; ++j) {
            p[j] = std::exp(p[j] - mx);
            sum += p[j];
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j < cols; ++j) p[j] *= inv;
    }
    Node n;
    n.op = Op::SoftmaxLast;
    n.a = a;
    n.value = std::move(out);
    return push(std::move(n));
}

Tape::NodeId Tape::layernorm_last(NodeId a, double eps) {
    const Tensor& A = val(a);
    if (A.rank() < 1) throw std::invalid_argument("layernorm_last: rank-0 input");
    const int cols = A.dim(A.rank() - 1);
    if (cols == 0) throw std::invalid_argument("layernorm_last: empty last axis");
    Tensor out = A;
    const int64_t rows = A.numel() / cols;
    for (int64_t r = 0; r < rows; ++r) {
        double* p = out.data.data() + r * cols;
        double mean = 0.0;
        for (int j = 0; j < cols; ++j) mean += p[j];
        mean /= cols;
        double var = 0.0;
        for (int j = 0; j < cols; ++j) {
            double d = p[j] - mean;
            var += d * d;
        }
        var /= cols;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < cols; ++j) p[j] = (p[j] - mean) * inv;
    }
    Node n;
    n.op = Op::LayerNormLast;
    n.a = a;
    n.c = eps;
    n.value = std::move(out);
    return push(std::move(n));
}

Tape::NodeId Tape::concat_last(NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.rank() != B.rank() || A.rank() < 1) shape_error("concat_last", A, B);
    for (int i = 0; i < A.rank() - 1; ++i) {
        if (A.dim(i) != B.dim(i)) shape_error("concat_last", A, B);
    }
    const int ac = A.dim(A.rank() - 1);
    const int bc = B.dim(B.rank() - 1);
    std::vector<int> shape = A.shape;
    shape.back() = ac + bc;
    Tensor out = Tensor::zeros(shape);
    const int64_t rows = ac > 0 ? A.numel() / ac : B.numel() / std::max(bc, 1);
    for (int64_t r = 0; r < rows; ++r) {
        double* dst = out.data.data() + r * (ac + bc);
        if (ac > 0) std::memcpy(dst, A.data.data() + r * ac, sizeof(double) * ac);
        if (bc > 0) std::memcpy(dst + ac, B.data.data() + r * bc, sizeof(double) * bc);
    }
    Node n;
    n.op = Op::ConcatLast;
    n.a = a;
    n.b = b;
    n.value = std::move(out);
    return push(std::move(n));
}

Tape::NodeId Tape::gather_rows(NodeId table, std::vector<int> indices) {
    const Tensor& T = val(table);
    if (T.rank() != 2) throw std::invalid_argument("gather_rows: table must be 2-D");
    const int rows = T.dim(0);
    const int cols = T.dim(1);
    Tensor out = Tensor::zeros({static_cast<int>(indices.size()), cols});
    for (size_t i = 0; i < indices.size(); ++i) {
        int idx = indices[i];
        if (idx == -1) continue;  // padding: zero row
        if (idx < 0 || idx >= rows) {
            std::ostringstream os;
            os << "gather_rows: index " << idx << " out of range [0," << rows << ")";
            throw std::out_of_range(os.str());
        }
        std::memcpy(out.data.data() + i * cols, T.data.data() + static_cast<size_t>(idx) * cols,
                    sizeof(double) * cols);
    }
    Node n;
    n.op = Op::GatherRows;
    n.a = table;
    n.indices = std::move(indices);
    n.value = std::move(out);
    return push(std::move(n));
}

Tape::NodeId Tape::sum_all(NodeId a) {
    const Tensor& A = val(a);
    double s = 0.0;
    for (double v : A.data) s += v;
    Node n;
    n.op = Op::SumAll;
    n.a = a;
    n.value = Tensor::scalar(s);
    return push(std::move(n));
}

Tape::NodeId Tape::mean_all(NodeId a) {
    const Tensor& A = val(a);
    if (A.numel() == 0) throw std::invalid_argument("mean_all: empty tensor");
    double s = 0.0;
    for (double v : A.data) s += v;
    Node n;
    n.op = Op::MeanAll;
    n.a = a;
    n.value = Tensor::scalar(s / static_cast<double>(A.numel()));
    return push(std::move(n));
}

Tape::NodeId Tape::sum_last(NodeId a) {
    const Tensor& A = val(a);
    if (A.rank() < 1) throw std::invalid_argument("sum_last: rank-0 input");
    const int cols = A.dim(A.rank() - 1);
    std::vector<int> shape = A.shape;
    shape.back() = 1;
    Tensor out = Tensor::zeros(shape);
    const int64_t rows = cols > 0 ? A.numel() / cols : out.numel();
    for (int64_t r = 0; r < rows; ++r) {
        double s = 0.0;
        const double* p = A.data.data() + r * cols;
        for (int j = 0; j < cols; ++j) s += p[j];
        out.at(r) = s;
    }
    Node n;
    n.op = Op::SumLast;
    n.a = a;
    n.value = std::move(out);
    return push(std::move(n));
}

Tape::NodeId Tape::reshape(NodeId a, std::vector<int> shape) {
    const Tensor& A = val(a);
    if (shape_numel(shape) != A.numel()) {
        throw std::invalid_argument("reshape: element count mismatch");
    }
    Node n;
    n.op = Op::Reshape;
    n.a = a;
    n.value = Tensor(std::move(shape), A.data);
    return push(std::move(n));
}

Tape::NodeId Tape::swap_axes_12(NodeId a) {
    const Tensor& A = val(a);
    if (A.rank() != 4) throw std::invalid_argument("swap_axes_12: rank-4 input required");
    const int d0 = A.dim(0), d1 = A.dim(1), d2 = A.dim(2), d3 = A.dim(3);
    Tensor out = Tensor::zeros({d0, d2, d1, d3});
    for (int i = 0; i < d0; ++i) {
        for (int j = 0; j < d1; ++j) {
            for (int k = 0; k < d2; ++k) {
                const double* src = A.data.data() + ((static_cast<int64_t>(i) * d1 + j) * d2 + k) * d3;
                double* dst = out.data.data() + ((static_cast<int64_t>(i) * d2 + k) * d1 + j) * d3;
                std::memcpy(dst, src, sizeof(double) * d3);
            }
        }
    }
    Node n;
    n.op = Op::SwapAxes12;
    n.a = a;
    n.value = std::move(out);
    return push(std::move(n));
}

Tape::NodeId Tape::stop_grad(NodeId a) {
    Node n;
    n.op = Op::StopGrad;
    n.a = a;
    n.value = val(a);
    return push(std::move(n));
}

Tape::NodeId Tape::bce_from_logits(NodeId logits, Tensor targets) {
    const Tensor& S = val(logits);
    if (!S.same_shape(targets)) shape_error("bce_from_logits", S, targets);
    Tensor out = Tensor::zeros(S.shape);
    for (int64_t i = 0; i < S.numel(); ++i) {
        const double p = stable_sigmoid(S.at(i));
        const double y = targets.at(i);
        out.at(i) = -y * std::log(std::max(p, kBceClamp))
                    - (1.0 - y) * std::log(std::max(1.0 - p, kBceClamp));
    }
    Node n;
    n.op = Op::BceFromLogits;
    n.a = logits;
    n.aux = std::move(targets);
    n.value = std::move(out);
    return push(std::move(n));
}

void Tape::backward(NodeId loss) {
    Node& ln = node(loss);
    if (ln.value.numel() != 1) {
        throw std::invalid_argument("backward: loss must be scalar");
    }
    ensure_grad(loss).at(0) = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
        if (node(id).grad.data.empty()) continue;
        backward_one(id);
    }
}

void Tape::backward_one(NodeId id) {
    Node& n = node(id);
    const Tensor& g = n.grad;
    switch (n.op) {
        case Op::Constant:
            break;
        case Op::Param:
            for (int64_t i = 0; i < g.numel(); ++i) n.bound->grad.at(i) += g.at(i);
            break;
        case Op::MatMul: {
            const Tensor& A = val(n.a);
            const Tensor& B = val(n.b);
            Tensor& dA = ensure_grad(n.a);
            Tensor& dB = ensure_grad(n.b);
            const int M = A.dim(A.rank() - 2);
            const int K = A.dim(A.rank() - 1);
            const int N = n.trans_b ? B.dim(B.rank() - 2) : B.dim(B.rank() - 1);
            int64_t batch = 1;
            for (int i = 0; i < A.rank() - 2; ++i) batch *= A.dim(i);
            const bool shared_b = B.rank() == 2 && A.rank() > 2;
            const int64_t a_stride = static_cast<int64_t>(M) * K;
            const int64_t b_stride = shared_b ? 0 : static_cast<int64_t>(K) * N;
            const int64_t c_stride = static_cast<int64_t>(M) * N;
            for (int64_t s = 0; s < batch; ++s) {
                const double* gp = g.data.data() + s * c_stride;
                const double* ap = A.data.data() + s * a_stride;
                const double* bp = B.data.data() + s * b_stride;
                double* dap = dA.data.data() + s * a_stride;
                double* dbp = dB.data.data() + s * b_stride;
                if (n.trans_b) {
                    // C = A * B^T with B stored (N, K)
                    mm_nn(gp, bp, dap, M, N, K);  // dA += dC * B
                    mm_tn(gp, ap, dbp, M, N, K);  // dB += dC^T * A
                } else {
                    mm_nt(gp, bp, dap, M, N, K);  // dA += dC * B^T
                    mm_tn(ap, gp, dbp, M, K, N);  // dB += A^T * dC
                }
            }
            break;
        }
        case Op::Add:
        case Op::Sub: {
            Tensor& dA = ensure_grad(n.a);
            Tensor& dB = ensure_grad(n.b);
            const double sgn = n.op == Op::Sub ? -1.0 : 1.0;
            const int64_t bn = dB.numel();
            for (int64_t i = 0; i < g.numel(); ++i) {
                dA.at(i) += g.at(i);
                dB.at(i % bn) += sgn * g.at(i);
            }
            break;
        }
        case Op::Mul: {
            const Tensor& A = val(n.a);
            const Tensor& B = val(n.b);
            Tensor& dA = ensure_grad(n.a);
            Tensor& dB = ensure_grad(n.b);
            const int64_t bn = B.numel();
            for (int64_t i = 0; i < g.numel(); ++i) {
                dA.at(i) += g.at(i) * B.at(i % bn);
                dB.at(i % bn) += g.at(i) * A.at(i);
            }
            break;
        }
        case Op::Scale: {
            Tensor& dA = ensure_grad(n.a);
            for (int64_t i = 0; i < g.numel(); ++i) dA.at(i) += n.c * g.at(i);
            break;
        }
        case Op::Relu: {
            const Tensor& A = val(n.a);
            Tensor& dA = ensure_grad(n.a);
            for (int64_t i = 0; i < g.numel(); ++i) {
                if (A.at(i) > 0.0) dA.at(i) += g.at(i);
            }
            break;
        }
        case Op::Sigmoid: {
            Tensor& dA = ensure_grad(n.a);
            for (int64_t i = 0; i < g.numel(); ++i) {
                const double y = n.value.at(i);
                dA.at(i) += g.at(i) * y * (1.0 - y);
            }
            break;
        }
        case Op::Square: {
            const Tensor& A = val(n.a);
            Tensor& dA = ensure_grad(n.a);
            for (int64_t i = 0; i < g.numel(); ++i) dA.at(i) += 2.0 * A.at(i) * g.at(i);
            break;
        }
        case Op::SoftmaxLast: {
            Tensor& dA = ensure_grad(n.a);
            const int cols = n.value.dim(n.value.rank() - 1);
            const int64_t rows = n.value.numel() / cols;
            for (int64_t r = 0; r < rows; ++r) {
                const double* y = n.value.data.data() + r * cols;
                const double* gy = g.data.data() + r * cols;
                double dot = 0.0;
                for (int j = 0; j < cols; ++j) dot += gy[j] * y[j];
                double* da = dA.data.data() + r * cols;
                for (int j = 0; j < cols; ++j) da[j] += y[j] * (gy[j] - dot);
            }
            break;
        }
        case Op::LayerNormLast: {
            // x-hat stored in value; dx = inv_std * (dy - mean(dy) - xhat * mean(dy .* xhat))
            const Tensor& A = val(n.a);
            Tensor& dA = ensure_grad(n.a);
            const int cols = n.value.dim(n.value.rank() - 1);
            const int64_t rows = n.value.numel() / cols;
            for (int64_t r = 0; r < rows; ++r) {
                const double* x = A.data.data() + r * cols;
                const double* y = n.value.data.data() + r * cols;
                const double* gy = g.data.data() + r * cols;
                double mean = 0.0;
                for (int j = 0; j < cols; ++j) mean += x[j];
                mean /= cols;
                double var = 0.0;
                for (int j = 0; j < cols; ++j) {
                    double d = x[j] - mean;
                    var += d * d;
                }
                var /= cols;
                const double inv = 1.0 / std::sqrt(var + n.c);
                double gmean = 0.0, gymean = 0.0;
                for (int j = 0; j < cols; ++j) {
                    gmean += gy[j];
                    gymean += gy[j] * y[j];
                }
                gmean /= cols;
                gymean /= cols;
                double* da = dA.data.data() + r * cols;
                for (int j = 0; j < cols; ++j) {
                    da[j] += inv * (gy[j] - gmean - y[j] * gymean);
                }
            }
            break;
        }
        case Op::ConcatLast: {
            Tensor& dA = ensure_grad(n.a);
            Tensor& dB = ensure_grad(n.b);
            const int ac = dA.dim(dA.rank() - 1);
            const int bc = dB.dim(dB.rank() - 1);
            const int64_t rows = n.value.numel() / (ac + bc);
            for (int64_t r = 0; r < rows; ++r) {
                const double* gp = g.data.data() + r * (ac + bc);
                double* dap = dA.data.data() + r * ac;
                double* dbp = dB.data.data() + r * bc;
                for (int j = 0; j < ac; ++j) dap[j] += gp[j];
                for (int j = 0; j < bc; ++j) dbp[j] += gp[ac + j];
            }
            break;
        }
        case Op::GatherRows: {
            Tensor& dT = ensure_grad(n.a);
            const int cols = dT.dim(1);
            for (size_t i = 0; i < n.indices.size(); ++i) {
                const int idx = n.indices[i];
                if (idx == -1) continue;
                const double* gp = g.data.data() + i * cols;
                double* dp = dT.data.data() + static_cast<size_t>(idx) * cols;
                for (int j = 0; j < cols; ++j) dp[j] += gp[j];
            }
            break;
        }
        case Op::SumAll: {
            Tensor& dA = ensure_grad(n.a);
            const double gs = g.at(0);
            for (int64_t i = 0; i < dA.numel(); ++i) dA.at(i) += gs;
            break;
        }
        case Op::MeanAll: {
            Tensor& dA = ensure_grad(n.a);
            const double gs = g.at(0) / static_cast<double>(dA.numel());
            for (int64_t i = 0; i < dA.numel(); ++i) dA.at(i) += gs;
            break;
        }
        case Op::SumLast: {
            Tensor& dA = ensure_grad(n.a);
            const int cols = dA.dim(dA.rank() - 1);
            const int64_t rows = cols > 0 ? dA.numel() / cols : 0;
            for (int64_t r = 0; r < rows; ++r) {
                const double gs = g.at(r);
                double* da = dA.data.data() + r * cols;
                for (int j = 0; j < cols; ++j) da[j] += gs;
            }
            break;
        }
        case Op::Reshape: {
            Tensor& dA = ensure_grad(n.a);
            for (int64_t i = 0; i < g.numel(); ++i) dA.at(i) += g.at(i);
            break;
        }
        case Op::SwapAxes12: {
            Tensor& dA = ensure_grad(n.a);
            const int d0 = dA.dim(0), d1 = dA.dim(1), d2 = dA.dim(2), d3 = dA.dim(3);
            for (int i = 0; i < d0; ++i) {
                for (int j = 0; j < d1; ++j) {
                    for (int k = 0; k < d2; ++k) {
                        const double* gp =
                            g.data.data() + ((static_cast<int64_t>(i) * d2 + k) * d1 + j) * d3;
                        double* dp =
                            dA.data.data() + ((static_cast<int64_t>(i) * d1 + j) * d2 + k) * d3;
                        for (int t = 0; t < d3; ++t) dp[t] += gp[t];
                    }
                }
            }
            break;
        }
        case Op::StopGrad:
            break;
        case Op::BceFromLogits: {
            const Tensor& S = val(n.a);
            Tensor& dA = ensure_grad(n.a);
            for (int64_t i = 0; i < g.numel(); ++i) {
                const double p = stable_sigmoid(S.at(i));
                const double y = n.aux.at(i);
                double d = 0.0;
                if (p > kBceClamp) d += -y * (1.0 - p);
                if (1.0 - p > kBceClamp) d += (1.0 - y) * p;
                dA.at(i) += g.at(i) * d;
            }
            break;
        }
    }
}

}  // namespace unirec
