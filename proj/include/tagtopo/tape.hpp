#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace tagtopo {

/// Dense row-major matrix of doubles. Vectors are n x 1.
struct Tensor {
    int rows = 0, cols = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int r, int c, double fill = 0.0)
        : rows(r), cols(c), v(std::size_t(r) * std::size_t(c), fill) {}

    static Tensor from(std::initializer_list<std::initializer_list<double>> rows_init);

    double& at(int r, int c) { return v[std::size_t(r) * std::size_t(cols) + std::size_t(c)]; }
    double at(int r, int c) const { return v[std::size_t(r) * std::size_t(cols) + std::size_t(c)]; }
    std::size_t size() const { return v.size(); }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    bool all_finite() const;
};

/// Fixed sparsity structure in CSR form. Values live on the tape, the
/// pattern is shared immutable metadata.
struct SparsePattern {
    int rows = 0, cols = 0;
    std::vector<int> indptr;    // rows + 1
    std::vector<int> col;       // nnz column indices
    std::vector<int> entry_row; // nnz row indices (expanded)

    int nnz() const { return int(col.size()); }

    // entries deduplicated and sorted by (row, col)
    static std::shared_ptr<const SparsePattern> from_coo(
        int rows, int cols, std::vector<std::pair<int, int>> entries);
};

enum class Op : std::uint8_t {
    Leaf, MatMul, Add, Mul, Scale, Exp, Relu, Log, RowSoftmax,
    GatherRows, ConcatRows, ReduceSum, Spmm, DegreeSum, Rsqrt,
    EdgeScale, RowRenormalize, CrossEntropy, SoftmaxCrossEntropy,
};

/// Eager reverse-mode tape. Each call records one primitive, computes its
/// value immediately and keeps what the reverse rule needs. backward()
/// replays the records in reverse and accumulates gradients additively.
class Tape {
public:
    struct Node {
        Op op = Op::Leaf;
        int a = -1, b = -1, c = -1; // parent node ids
        Tensor val;
        Tensor grad;
        bool requires_grad = false;
        double scalar = 0.0;
        std::shared_ptr<const SparsePattern> pattern;
        std::vector<int> index; // gather map / loss subset
        Tensor aux;             // saved extras (softmax rows, targets, row sums)
    };

    int leaf(Tensor t, bool requires_grad = false);

    int matmul(int a, int b);
    int add(int a, int b);
    int mul(int a, int b); // elementwise
    int scale(int a, double s);
    int exp(int a);
    int relu(int a);
    int log(int a);
    int row_softmax(int a);
    int gather_rows(int a, std::vector<int> idx);
    int concat_rows(int a, int b);
    int reduce_sum(int a);

    /// y = A x with A given by (pattern, values); values is an nnz x 1 node.
    int spmm(std::shared_ptr<const SparsePattern> p, int values, int dense);
    /// row sums of (pattern, values) as an n x 1 vector.
    int degree_sum(std::shared_ptr<const SparsePattern> p, int values);
    /// elementwise x^(-1/2); rejects non-positive input.
    int rsqrt(int a);
    /// out[k] = values[k] * row_f[row(k)] * col_f[col(k)]
    int edge_scale(std::shared_ptr<const SparsePattern> p, int values, int row_f, int col_f);
    /// rows scaled to sum 1 (guard 1e-12); all-zero rows fall back to uniform.
    int row_renormalize(int a);

    /// mean over subset rows of -sum_c target(c) * log(pred(c) + 1e-12)
    int cross_entropy(int pred, const Tensor& target_onehot, std::vector<int> subset);
    /// fused, numerically stable version taking logits
    int softmax_cross_entropy(int logits, const Tensor& target_onehot, std::vector<int> subset);

    void backward(int id);

    const Tensor& value(int id) const { return nodes_[std::size_t(id)].val; }
    const Tensor& grad(int id) const { return nodes_[std::size_t(id)].grad; }
    double scalar_value(int id) const;
    bool requires_grad(int id) const { return nodes_[std::size_t(id)].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    void set_check_finite(bool on) { check_finite_ = on; }
    void dump(std::ostream& os) const;

    static constexpr double kLogEps = 1e-12;

private:
    int push(Node n);
    std::vector<Node> nodes_;
    bool check_finite_ = true;
};

/// Builds a scalar loss node from leaves placed on the given tape.
using LossBuilder = std::function<int(Tape&, const std::vector<int>&)>;

struct GradCheckReport {
    double max_rel_err = 0.0;
    int worst_leaf = -1;
    int worst_entry = -1;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

/// Central-difference check of tape gradients for every entry of every leaf.
/// rel err = |a - n| / max(1, |a|, |n|).
GradCheckReport grad_check(const LossBuilder& build, const std::vector<Tensor>& leaves,
                           double h = 1e-5);

} // namespace tagtopo
