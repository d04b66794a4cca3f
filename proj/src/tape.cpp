#include "tagtopo/tape.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace tagtopo {

Tensor Tensor::from(std::initializer_list<std::initializer_list<double>> rows_init) {
    Tensor t(int(rows_init.size()), rows_init.size() ? int(rows_init.begin()->size()) : 0);
    int r = 0;
    for (const auto& row : rows_init) {
        if (int(row.size()) != t.cols) throw std::invalid_argument("Tensor::from: ragged rows");
        int c = 0;
        for (double x : row) t.at(r, c++) = x;
        ++r;
    }
    return t;
}

bool Tensor::all_finite() const {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

std::shared_ptr<const SparsePattern> SparsePattern::from_coo(
    int rows, int cols, std::vector<std::pair<int, int>> entries) {
    for (const auto& [r, c] : entries)
        if (r < 0 || r >= rows || c < 0 || c >= cols)
            throw std::invalid_argument("SparsePattern: entry out of range");
    std::sort(entries.begin(), entries.end());
    entries.erase(std::unique(entries.begin(), entries.end()), entries.end());

    auto p = std::make_shared<SparsePattern>();
    p->rows = rows;
    p->cols = cols;
    p->indptr.assign(std::size_t(rows) + 1, 0);
    p->col.reserve(entries.size());
    p->entry_row.reserve(entries.size());
    for (const auto& [r, c] : entries) {
        p->indptr[std::size_t(r) + 1]++;
        p->col.push_back(c);
        p->entry_row.push_back(r);
    }
    for (int r = 0; r < rows; ++r) p->indptr[std::size_t(r) + 1] += p->indptr[std::size_t(r)];
    return p;
}

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

} // namespace

int Tape::push(Node n) {
    if (check_finite_ && !n.val.all_finite())
        throw std::runtime_error("tape: non-finite value produced by forward op");
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
}

int Tape::leaf(Tensor t, bool requires_grad) {
    Node n;
    n.op = Op::Leaf;
    n.val = std::move(t);
    n.requires_grad = requires_grad;
    return push(std::move(n));
}

int Tape::matmul(int a, int b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(A.cols == B.rows, "matmul: inner dimensions differ");
    Node n;
    n.op = Op::MatMul;
    n.a = a; n.b = b;
    n.requires_grad = requires_grad(a) || requires_grad(b);
    n.val = Tensor(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i)
        for (int k = 0; k < A.cols; ++k) {
            const double aik = A.at(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < B.cols; ++j) n.val.at(i, j) += aik * B.at(k, j);
        }
    return push(std::move(n));
}

int Tape::add(int a, int b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(A.same_shape(B), "add: shape mismatch");
    Node n;
    n.op = Op::Add;
    n.a = a; n.b = b;
    n.requires_grad = requires_grad(a) || requires_grad(b);
    n.val = A;
    for (std::size_t i = 0; i < n.val.v.size(); ++i) n.val.v[i] += B.v[i];
    return push(std::move(n));
}

int Tape::mul(int a, int b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(A.same_shape(B), "mul: shape mismatch");
    Node n;
    n.op = Op::Mul;
    n.a = a; n.b = b;
    n.requires_grad = requires_grad(a) || requires_grad(b);
    n.val = A;
    for (std::size_t i = 0; i < n.val.v.size(); ++i) n.val.v[i] *= B.v[i];
    return push(std::move(n));
}

int Tape::scale(int a, double s) {
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.scalar = s;
    n.requires_grad = requires_grad(a);
    n.val = value(a);
    for (double& x : n.val.v) x *= s;
    return push(std::move(n));
}

int Tape::exp(int a) {
    Node n;
    n.op = Op::Exp;
    n.a = a;
    n.requires_grad = requires_grad(a);
    n.val = value(a);
    for (double& x : n.val.v) x = std::exp(x);
    return push(std::move(n));
}

int Tape::relu(int a) {
    Node n;
    n.op = Op::Relu;
    n.a = a;
    n.requires_grad = requires_grad(a);
    n.val = value(a);
    for (double& x : n.val.v) x = x > 0.0 ? x : 0.0;
    return push(std::move(n));
}

int Tape::log(int a) {
    Node n;
    n.op = Op::Log;
    n.a = a;
    n.requires_grad = requires_grad(a);
    n.val = value(a);
    for (double& x : n.val.v) {
        require(x > 0.0, "log: non-positive input");
        x = std::log(x);
    }
    return push(std::move(n));
}

int Tape::row_softmax(int a) {
    const Tensor& A = value(a);
    Node n;
    n.op = Op::RowSoftmax;
    n.a = a;
    n.requires_grad = requires_grad(a);
    n.val = Tensor(A.rows, A.cols);
    for (int i = 0; i < A.rows; ++i) {
        double mx = A.at(i, 0);
        for (int j = 1; j < A.cols; ++j) mx = std::max(mx, A.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < A.cols; ++j) {
            const double e = std::exp(A.at(i, j) - mx);
            n.val.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < A.cols; ++j) n.val.at(i, j) /= sum;
    }
    return push(std::move(n));
}

int Tape::gather_rows(int a, std::vector<int> idx) {
    const Tensor& A = value(a);
    for (int i : idx) require(i >= 0 && i < A.rows, "gather_rows: index out of range");
    Node n;
    n.op = Op::GatherRows;
    n.a = a;
    n.requires_grad = requires_grad(a);
    n.val = Tensor(int(idx.size()), A.cols);
    for (int r = 0; r < int(idx.size()); ++r)
        for (int c = 0; c < A.cols; ++c) n.val.at(r, c) = A.at(idx[std::size_t(r)], c);
    n.index = std::move(idx);
    return push(std::move(n));
}

int Tape::concat_rows(int a, int b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(A.cols == B.cols, "concat_rows: column mismatch");
    Node n;
    n.op = Op::ConcatRows;
    n.a = a; n.b = b;
    n.requires_grad = requires_grad(a) || requires_grad(b);
    n.val = Tensor(A.rows + B.rows, A.cols);
    std::copy(A.v.begin(), A.v.end(), n.val.v.begin());
    std::copy(B.v.begin(), B.v.end(), n.val.v.begin() + std::ptrdiff_t(A.v.size()));
    return push(std::move(n));
}

int Tape::reduce_sum(int a) {
    const Tensor& A = value(a);
    Node n;
    n.op = Op::ReduceSum;
    n.a = a;
    n.requires_grad = requires_grad(a);
    n.val = Tensor(1, 1);
    double s = 0.0;
    for (double x : A.v) s += x;
    n.val.at(0, 0) = s;
    return push(std::move(n));
}

int Tape::spmm(std::shared_ptr<const SparsePattern> p, int values, int dense) {
    const Tensor& V = value(values);
    const Tensor& X = value(dense);
    require(V.rows == p->nnz() && V.cols == 1, "spmm: values must be nnz x 1");
    require(X.rows == p->cols, "spmm: dense row count != pattern cols");
    Node n;
    n.op = Op::Spmm;
    n.a = values; n.b = dense;
    n.pattern = p;
    n.requires_grad = requires_grad(values) || requires_grad(dense);
    n.val = Tensor(p->rows, X.cols);
    for (int k = 0; k < p->nnz(); ++k) {
        const int r = p->entry_row[std::size_t(k)];
        const int c = p->col[std::size_t(k)];
        const double w = V.v[std::size_t(k)];
        if (w == 0.0) continue;
        for (int j = 0; j < X.cols; ++j) n.val.at(r, j) += w * X.at(c, j);
    }
    return push(std::move(n));
}

int Tape::degree_sum(std::shared_ptr<const SparsePattern> p, int values) {
    const Tensor& V = value(values);
    require(V.rows == p->nnz() && V.cols == 1, "degree_sum: values must be nnz x 1");
    Node n;
    n.op = Op::DegreeSum;
    n.a = values;
    n.pattern = p;
    n.requires_grad = requires_grad(values);
    n.val = Tensor(p->rows, 1);
    for (int k = 0; k < p->nnz(); ++k)
        n.val.at(p->entry_row[std::size_t(k)], 0) += V.v[std::size_t(k)];
    return push(std::move(n));
}

int Tape::rsqrt(int a) {
    Node n;
    n.op = Op::Rsqrt;
    n.a = a;
    n.requires_grad = requires_grad(a);
    n.val = value(a);
    for (double& x : n.val.v) {
        require(x > 0.0, "rsqrt: non-positive input");
        x = 1.0 / std::sqrt(x);
    }
    return push(std::move(n));
}

int Tape::edge_scale(std::shared_ptr<const SparsePattern> p, int values, int row_f, int col_f) {
    const Tensor& V = value(values);
    const Tensor& R = value(row_f);
    const Tensor& C = value(col_f);
    require(V.rows == p->nnz() && V.cols == 1, "edge_scale: values must be nnz x 1");
    require(R.rows == p->rows && R.cols == 1, "edge_scale: row factors must be rows x 1");
    require(C.rows == p->cols && C.cols == 1, "edge_scale: col factors must be cols x 1");
    Node n;
    n.op = Op::EdgeScale;
    n.a = values; n.b = row_f; n.c = col_f;
    n.pattern = p;
    n.requires_grad = requires_grad(values) || requires_grad(row_f) || requires_grad(col_f);
    n.val = Tensor(p->nnz(), 1);
    for (int k = 0; k < p->nnz(); ++k)
        n.val.v[std::size_t(k)] = V.v[std::size_t(k)] * R.at(p->entry_row[std::size_t(k)], 0) *
                                  C.at(p->col[std::size_t(k)], 0);
    return push(std::move(n));
}

int Tape::row_renormalize(int a) {
    const Tensor& A = value(a);
    Node n;
    n.op = Op::RowRenormalize;
    n.a = a;
    n.requires_grad = requires_grad(a);
    n.val = Tensor(A.rows, A.cols);
    n.aux = Tensor(A.rows, 1); // effective row sums; 0 marks the uniform fallback
    for (int i = 0; i < A.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < A.cols; ++j) s += A.at(i, j);
        if (s < kLogEps) {
            for (int j = 0; j < A.cols; ++j) n.val.at(i, j) = 1.0 / A.cols;
            n.aux.at(i, 0) = 0.0;
        } else {
            for (int j = 0; j < A.cols; ++j) n.val.at(i, j) = A.at(i, j) / s;
            n.aux.at(i, 0) = s;
        }
    }
    return push(std::move(n));
}

int Tape::cross_entropy(int pred, const Tensor& target_onehot, std::vector<int> subset) {
    const Tensor& P = value(pred);
    require(P.same_shape(target_onehot), "cross_entropy: prediction/target shape mismatch");
    require(!subset.empty(), "cross_entropy: empty subset");
    for (int i : subset) require(i >= 0 && i < P.rows, "cross_entropy: subset index out of range");
    Node n;
    n.op = Op::CrossEntropy;
    n.a = pred;
    n.requires_grad = requires_grad(pred);
    n.aux = target_onehot;
    n.index = std::move(subset);
    double loss = 0.0;
    for (int i : n.index)
        for (int c = 0; c < P.cols; ++c) {
            const double t = target_onehot.at(i, c);
            if (t != 0.0) loss -= t * std::log(P.at(i, c) + kLogEps);
        }
    n.val = Tensor(1, 1);
    n.val.at(0, 0) = loss / double(n.index.size());
    return push(std::move(n));
}

int Tape::softmax_cross_entropy(int logits, const Tensor& target_onehot, std::vector<int> subset) {
    const Tensor& Z = value(logits);
    require(Z.same_shape(target_onehot), "softmax_cross_entropy: logits/target shape mismatch");
    require(!subset.empty(), "softmax_cross_entropy: empty subset");
    Node n;
    n.op = Op::SoftmaxCrossEntropy;
    n.a = logits;
    n.requires_grad = requires_grad(logits);
    n.index = std::move(subset);
    n.aux = Tensor(int(n.index.size()) * 2, Z.cols); // [softmax rows; target rows]
    double loss = 0.0;
    for (int r = 0; r < int(n.index.size()); ++r) {
        const int i = n.index[std::size_t(r)];
        require(i >= 0 && i < Z.rows, "softmax_cross_entropy: subset index out of range");
        double mx = Z.at(i, 0);
        for (int j = 1; j < Z.cols; ++j) mx = std::max(mx, Z.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < Z.cols; ++j) sum += std::exp(Z.at(i, j) - mx);
        const double lse = mx + std::log(sum);
        for (int j = 0; j < Z.cols; ++j) {
            n.aux.at(r, j) = std::exp(Z.at(i, j) - lse);
            n.aux.at(r + int(n.index.size()), j) = target_onehot.at(i, j);
            if (target_onehot.at(i, j) != 0.0)
                loss += target_onehot.at(i, j) * (lse - Z.at(i, j));
        }
    }
    n.val = Tensor(1, 1);
    n.val.at(0, 0) = loss / double(n.index.size());
    return push(std::move(n));
}

double Tape::scalar_value(int id) const {
    const Tensor& t = value(id);
    require(t.rows == 1 && t.cols == 1, "scalar_value: node is not 1x1");
    return t.at(0, 0);
}

void Tape::backward(int id) {
    require(id >= 0 && id < int(nodes_.size()), "backward: bad node id");
    for (auto& n : nodes_)
        if (n.requires_grad) n.grad = Tensor(n.val.rows, n.val.cols);
    Node& out = nodes_[std::size_t(id)];
    if (!out.requires_grad) return; // loss does not depend on any trainable leaf
    for (double& g : out.grad.v) g = 1.0;

    for (int i = id; i >= 0; --i) {
        Node& n = nodes_[std::size_t(i)];
        if (!n.requires_grad || n.op == Op::Leaf) continue;
        const Tensor& G = n.grad;
        auto takes = [&](int pid) { return pid >= 0 && nodes_[std::size_t(pid)].requires_grad; };

        switch (n.op) {
        case Op::MatMul: {
            const Tensor& A = nodes_[std::size_t(n.a)].val;
            const Tensor& B = nodes_[std::size_t(n.b)].val;
            if (takes(n.a)) {
                Tensor& gA = nodes_[std::size_t(n.a)].grad;
                for (int r = 0; r < A.rows; ++r)
                    for (int j = 0; j < B.cols; ++j) {
                        const double g = G.at(r, j);
                        if (g == 0.0) continue;
                        for (int k = 0; k < A.cols; ++k) gA.at(r, k) += g * B.at(k, j);
                    }
            }
            if (takes(n.b)) {
                Tensor& gB = nodes_[std::size_t(n.b)].grad;
                for (int r = 0; r < A.rows; ++r)
                    for (int k = 0; k < A.cols; ++k) {
                        const double a = A.at(r, k);
                        if (a == 0.0) continue;
                        for (int j = 0; j < B.cols; ++j) gB.at(k, j) += a * G.at(r, j);
                    }
            }
            break;
        }
        case Op::Add: {
            for (int pid : {n.a, n.b})
                if (takes(pid)) {
                    Tensor& gP = nodes_[std::size_t(pid)].grad;
                    for (std::size_t k = 0; k < G.v.size(); ++k) gP.v[k] += G.v[k];
                }
            break;
        }
        case Op::Mul: {
            if (takes(n.a)) {
                const Tensor& B = nodes_[std::size_t(n.b)].val;
                Tensor& gA = nodes_[std::size_t(n.a)].grad;
                for (std::size_t k = 0; k < G.v.size(); ++k) gA.v[k] += G.v[k] * B.v[k];
            }
            if (takes(n.b)) {
                const Tensor& A = nodes_[std::size_t(n.a)].val;
                Tensor& gB = nodes_[std::size_t(n.b)].grad;
                for (std::size_t k = 0; k < G.v.size(); ++k) gB.v[k] += G.v[k] * A.v[k];
            }
            break;
        }
        case Op::Scale: {
            if (takes(n.a)) {
                Tensor& gA = nodes_[std::size_t(n.a)].grad;
                for (std::size_t k = 0; k < G.v.size(); ++k) gA.v[k] += n.scalar * G.v[k];
            }
            break;
        }
        case Op::Exp: {
            if (takes(n.a)) {
                Tensor& gA = nodes_[std::size_t(n.a)].grad;
                for (std::size_t k = 0; k < G.v.size(); ++k) gA.v[k] += G.v[k] * n.val.v[k];
            }
            break;
        }
        case Op::Relu: {
            if (takes(n.a)) {
                const Tensor& A = nodes_[std::size_t(n.a)].val;
                Tensor& gA = nodes_[std::size_t(n.a)].grad;
                for (std::size_t k = 0; k < G.v.size(); ++k)
                    if (A.v[k] > 0.0) gA.v[k] += G.v[k];
            }
            break;
        }
        case Op::Log: {
            if (takes(n.a)) {
                const Tensor& A = nodes_[std::size_t(n.a)].val;
                Tensor& gA = nodes_[std::size_t(n.a)].grad;
                for (std::size_t k = 0; k < G.v.size(); ++k) gA.v[k] += G.v[k] / A.v[k];
            }
            break;
        }
        case Op::RowSoftmax: {
            if (takes(n.a)) {
                Tensor& gA = nodes_[std::size_t(n.a)].grad;
                for (int r = 0; r < n.val.rows; ++r) {
                    double dot = 0.0;
                    for (int j = 0; j < n.val.cols; ++j) dot += G.at(r, j) * n.val.at(r, j);
                    for (int j = 0; j < n.val.cols; ++j)
                        gA.at(r, j) += n.val.at(r, j) * (G.at(r, j) - dot);
                }
            }
            break;
        }
        case Op::GatherRows: {
            if (takes(n.a)) {
                Tensor& gA = nodes_[std::size_t(n.a)].grad;
                for (int r = 0; r < int(n.index.size()); ++r)
                    for (int c = 0; c < G.cols; ++c)
                        gA.at(n.index[std::size_t(r)], c) += G.at(r, c);
            }
            break;
        }
        case Op::ConcatRows: {
            const int top = nodes_[std::size_t(n.a)].val.rows;
            if (takes(n.a)) {
                Tensor& gA = nodes_[std::size_t(n.a)].grad;
                for (std::size_t k = 0; k < gA.v.size(); ++k) gA.v[k] += G.v[k];
            }
            if (takes(n.b)) {
                Tensor& gB = nodes_[std::size_t(n.b)].grad;
                const std::size_t off = std::size_t(top) * std::size_t(G.cols);
                for (std::size_t k = 0; k < gB.v.size(); ++k) gB.v[k] += G.v[off + k];
            }
            break;
        }
        case Op::ReduceSum: {
            if (takes(n.a)) {
                Tensor& gA = nodes_[std::size_t(n.a)].grad;
                const double g = G.at(0, 0);
                for (double& x : gA.v) x += g;
            }
            break;
        }
        case Op::Spmm: {
            const SparsePattern& p = *n.pattern;
            const Tensor& V = nodes_[std::size_t(n.a)].val;
            const Tensor& X = nodes_[std::size_t(n.b)].val;
            if (takes(n.a)) {
                Tensor& gV = nodes_[std::size_t(n.a)].grad;
                for (int k = 0; k < p.nnz(); ++k) {
                    const int r = p.entry_row[std::size_t(k)];
                    const int c = p.col[std::size_t(k)];
                    double acc = 0.0;
                    for (int j = 0; j < X.cols; ++j) acc += G.at(r, j) * X.at(c, j);
                    gV.v[std::size_t(k)] += acc;
                }
            }
            if (takes(n.b)) {
                Tensor& gX = nodes_[std::size_t(n.b)].grad;
                for (int k = 0; k < p.nnz(); ++k) {
                    const int r = p.entry_row[std::size_t(k)];
                    const int c = p.col[std::size_t(k)];
                    const double w = V.v[std::size_t(k)];
                    if (w == 0.0) continue;
                    for (int j = 0; j < X.cols; ++j) gX.at(c, j) += w * G.at(r, j);
                }
            }
            break;
        }
        case Op::DegreeSum: {
            if (takes(n.a)) {
                const SparsePattern& p = *n.pattern;
                Tensor& gV = nodes_[std::size_t(n.a)].grad;
                for (int k = 0; k < p.nnz(); ++k)
                    gV.v[std::size_t(k)] += G.at(p.entry_row[std::size_t(k)], 0);
            }
            break;
        }
        case Op::Rsqrt: {
            if (takes(n.a)) {
                Tensor& gA = nodes_[std::size_t(n.a)].grad;
                for (std::size_t k = 0; k < G.v.size(); ++k) {
                    const double y = n.val.v[k];
                    gA.v[k] += G.v[k] * (-0.5 * y * y * y);
                }
            }
            break;
        }
        case Op::EdgeScale: {
            const SparsePattern& p = *n.pattern;
            const Tensor& V = nodes_[std::size_t(n.a)].val;
            const Tensor& R = nodes_[std::size_t(n.b)].val;
            const Tensor& C = nodes_[std::size_t(n.c)].val;
            for (int k = 0; k < p.nnz(); ++k) {
                const int r = p.entry_row[std::size_t(k)];
                const int c = p.col[std::size_t(k)];
                const double g = G.v[std::size_t(k)];
                if (g == 0.0) continue;
                if (takes(n.a))
                    nodes_[std::size_t(n.a)].grad.v[std::size_t(k)] += g * R.at(r, 0) * C.at(c, 0);
                if (takes(n.b))
                    nodes_[std::size_t(n.b)].grad.at(r, 0) += g * V.v[std::size_t(k)] * C.at(c, 0);
                if (takes(n.c))
                    nodes_[std::size_t(n.c)].grad.at(c, 0) += g * V.v[std::size_t(k)] * R.at(r, 0);
            }
            break;
        }
        case Op::RowRenormalize: {
            if (takes(n.a)) {
                Tensor& gA = nodes_[std::size_t(n.a)].grad;
                for (int r = 0; r < n.val.rows; ++r) {
                    const double s = n.aux.at(r, 0);
                    if (s == 0.0) continue; // uniform fallback is constant
                    double dot = 0.0;
                    for (int j = 0; j < n.val.cols; ++j) dot += G.at(r, j) * n.val.at(r, j);
                    for (int j = 0; j < n.val.cols; ++j)
                        gA.at(r, j) += (G.at(r, j) - dot) / s;
                }
            }
            break;
        }
        case Op::CrossEntropy: {
            if (takes(n.a)) {
                const Tensor& P = nodes_[std::size_t(n.a)].val;
                Tensor& gP = nodes_[std::size_t(n.a)].grad;
                const double g = G.at(0, 0) / double(n.index.size());
                for (int i : n.index)
                    for (int c = 0; c < P.cols; ++c) {
                        const double t = n.aux.at(i, c);
                        if (t != 0.0) gP.at(i, c) -= g * t / (P.at(i, c) + kLogEps);
                    }
            }
            break;
        }
        case Op::SoftmaxCrossEntropy: {
            if (takes(n.a)) {
                Tensor& gZ = nodes_[std::size_t(n.a)].grad;
                const double g = G.at(0, 0) / double(n.index.size());
                const int m = int(n.index.size());
                for (int r = 0; r < m; ++r) {
                    const int i = n.index[std::size_t(r)];
                    for (int j = 0; j < gZ.cols; ++j)
                        gZ.at(i, j) += g * (n.aux.at(r, j) - n.aux.at(r + m, j));
                }
            }
            break;
        }
        case Op::Leaf:
            break;
        }
    }
}

void Tape::dump(std::ostream& os) const {
    static const char* names[] = {
        "leaf", "matmul", "add", "mul", "scale", "exp", "relu", "log", "row_softmax",
        "gather_rows", "concat_rows", "reduce_sum", "spmm", "degree_sum", "rsqrt",
        "edge_scale", "row_renormalize", "cross_entropy", "softmax_cross_entropy",
    };
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        os << i << ": " << names[int(n.op)] << " (" << n.val.rows << "x" << n.val.cols << ")";
        if (n.a >= 0) os << " a=" << n.a;
        if (n.b >= 0) os << " b=" << n.b;
        if (n.c >= 0) os << " c=" << n.c;
        if (n.requires_grad) os << " grad";
        os << "\n";
    }
}

GradCheckReport grad_check(const LossBuilder& build, const std::vector<Tensor>& leaves, double h) {
    Tape tape;
    std::vector<int> ids;
    ids.reserve(leaves.size());
    for (const auto& t : leaves) ids.push_back(tape.leaf(t, true));
    const int loss = build(tape, ids);
    if (!std::isfinite(tape.scalar_value(loss)))
        throw std::runtime_error("grad_check: non-finite loss");
    tape.backward(loss);

    auto eval = [&](const std::vector<Tensor>& vals) {
        Tape t2;
        t2.set_check_finite(false);
        std::vector<int> ids2;
        ids2.reserve(vals.size());
        for (const auto& t : vals) ids2.push_back(t2.leaf(t, false));
        return t2.scalar_value(build(t2, ids2));
    };

    GradCheckReport rep;
    std::vector<Tensor> work = leaves;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        const Tensor& g = tape.grad(ids[li]);
        for (std::size_t k = 0; k < work[li].v.size(); ++k) {
            const double keep = work[li].v[k];
            work[li].v[k] = keep + h;
            const double up = eval(work);
            work[li].v[k] = keep - h;
            const double dn = eval(work);
            work[li].v[k] = keep;
            const double numeric = (up - dn) / (2.0 * h);
            const double analytic = g.v.empty() ? 0.0 : g.v[k];
            const double rel = std::abs(analytic - numeric) /
                               std::max({1.0, std::abs(analytic), std::abs(numeric)});
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_leaf = int(li);
                rep.worst_entry = int(k);
                rep.analytic_at_worst = analytic;
                rep.numeric_at_worst = numeric;
            }
        }
    }
    return rep;
}

} // namespace tagtopo
