#include "tagtopo/gcn.hpp"

#include "tagtopo/errors.hpp"
#include "tagtopo/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

namespace tagtopo {

GcnModel GcnModel::init(int d_in, int d_hidden, int num_classes, double dropout,
                        std::uint64_t seed) {
    Rng rng = Rng::stream(seed, "init");
    auto glorot = [&](int rows, int cols) {
        Tensor t(rows, cols);
        const double s = std::sqrt(6.0 / double(rows + cols));
        for (double& x : t.v) x = rng.uniform(-s, s);
        return t;
    };
    GcnModel m;
    m.w0 = glorot(d_in, d_hidden);
    m.w1 = glorot(d_hidden, num_classes);
    m.dropout = dropout;
    return m;
}

void TrainConfig::validate() const {
    if (lambda < 0.0 || lambda > 5.0 || beta < 0.0 || beta > 5.0)
        throw ConfigError("lambda/beta must lie in [0, 5]");
    if (xi_del < 0.0 || xi_del > 1.0 || xi_add < 0.0 || xi_add > 1.0)
        throw ConfigError("thresholds must lie in [0, 1]");
    if (k_gcn != 2) throw ConfigError("only the two-layer GCN is supported");
    if (k_lpa < 1) throw ConfigError("k_lpa must be >= 1");
    if (hidden < 1 || epochs < 1 || patience < 0) throw ConfigError("bad training sizes");
    if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
    if (seeds.empty()) throw ConfigError("need at least one seed");
}

GcnForward gcn_forward(Tape& tape, const TapeAdjacency& abar, int h0, int w0, int w1,
                       const Tensor* hidden_mask) {
    GcnForward out;
    const int z0 = tape.spmm(abar.pattern, abar.abar_values, tape.matmul(h0, w0));
    out.hidden = tape.relu(z0);
    int h = out.hidden;
    if (hidden_mask) h = tape.mul(h, tape.leaf(*hidden_mask));
    out.logits = tape.spmm(abar.pattern, abar.abar_values, tape.matmul(h, w1));
    return out;
}

int joint_loss(Tape& tape, int logits, std::optional<int> y_lpa, std::optional<int> y_llm,
               const DatasetSplit& split, const std::vector<std::optional<int>>& labels,
               int num_classes, double lambda, double beta) {
    const Tensor targets = onehot_labels(labels, num_classes);
    int total = tape.softmax_cross_entropy(logits, targets, split.train);
    if (lambda > 0.0) {
        if (!y_lpa) throw ConfigError("joint_loss: lambda > 0 needs a propagated label matrix");
        total = tape.add(total, tape.scale(lpa_loss(tape, *y_lpa, split, labels, num_classes),
                                           lambda));
    }
    if (beta > 0.0) {
        if (!y_llm) throw ConfigError("joint_loss: beta > 0 needs a propagated pseudo matrix");
        total = tape.add(total, tape.scale(lpa_loss(tape, *y_llm, split, labels, num_classes),
                                           beta));
    }
    return total;
}

double accuracy(const Tensor& logits, const std::vector<std::optional<int>>& labels,
                const std::vector<int>& subset) {
    if (subset.empty()) throw DataError("accuracy: empty subset");
    int hit = 0;
    for (int i : subset) {
        int arg = 0;
        for (int c = 1; c < logits.cols; ++c)
            if (logits.at(i, c) > logits.at(i, arg)) arg = c;
        if (labels[std::size_t(i)] && *labels[std::size_t(i)] == arg) ++hit;
    }
    return double(hit) / double(subset.size());
}

namespace {

struct Adam {
    Tensor m, v;
    int t = 0;
    explicit Adam(int rows, int cols) : m(rows, cols), v(rows, cols) {}
    void step(Tensor& param, const Tensor& grad, double lr, double weight_decay) {
        ++t;
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double c1 = 1.0 - std::pow(b1, t);
        const double c2 = 1.0 - std::pow(b2, t);
        for (std::size_t i = 0; i < param.v.size(); ++i) {
            const double g = grad.v[i] + weight_decay * param.v[i];
            m.v[i] = b1 * m.v[i] + (1.0 - b1) * g;
            v.v[i] = b2 * v.v[i] + (1.0 - b2) * g * g;
            param.v[i] -= lr * (m.v[i] / c1) / (std::sqrt(v.v[i] / c2) + eps);
        }
    }
};

Tensor dropout_mask(Rng& rng, int rows, int cols, double rate) {
    Tensor mask(rows, cols, 1.0);
    if (rate <= 0.0) return mask;
    const double keep = 1.0 - rate;
    for (double& x : mask.v) x = rng.uniform() < keep ? 1.0 / keep : 0.0;
    return mask;
}

} // namespace

TrainResult train(const WeightedAdjacency& adj, const Tensor& features,
                  const DatasetSplit& split, const std::vector<std::optional<int>>& labels,
                  int num_classes, const TrainConfig& config, std::uint64_t seed,
                  const LabelMatrix* y0_true, const LabelMatrix* y0_llm) {
    config.validate();
    if (features.rows != adj.num_nodes()) throw DataError("train: feature row count != |V|");
    if (config.lambda > 0.0 && !y0_true)
        throw ConfigError("train: lambda > 0 requires the true-label matrix");
    if (config.beta > 0.0 && !y0_llm)
        throw ConfigError("train: beta > 0 requires the pseudo-label matrix");

    WeightedAdjacency work = adj; // theta evolves here when learn_edges
    GcnModel model = GcnModel::init(features.cols, config.hidden, num_classes, config.dropout,
                                    seed);
    Rng dropout_rng = Rng::stream(seed, "dropout");

    Adam opt_w0(model.w0.rows, model.w0.cols);
    Adam opt_w1(model.w1.rows, model.w1.cols);
    Adam opt_theta(work.num_edges(), 1);

    TrainResult result;
    GcnModel best_model = model;
    std::vector<double> best_theta = work.all_theta();
    double best_val = -1.0;
    double best_loss = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    double best_test = 0.0;
    int since_best = 0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        Tape tape;
        const TapeAdjacency abar = build_normalized_adjacency(tape, work, config.learn_edges);
        const int h0 = tape.leaf(features);
        const int w0 = tape.leaf(model.w0, true);
        const int w1 = tape.leaf(model.w1, true);
        const Tensor mask =
            dropout_mask(dropout_rng, features.rows, config.hidden, config.dropout);
        const GcnForward fwd = gcn_forward(tape, abar, h0, w0, w1, &mask);

        std::optional<int> y_lpa, y_llm;
        if (config.lambda > 0.0)
            y_lpa = propagate(tape, tape.leaf(y0_true->rows), abar, config.k_lpa);
        if (config.beta > 0.0)
            y_llm = propagate(tape, tape.leaf(y0_llm->rows), abar, config.k_lpa);
        const int loss = joint_loss(tape, fwd.logits, y_lpa, y_llm, split, labels, num_classes,
                                    config.lambda, config.beta);
        const double train_loss = tape.scalar_value(loss);
        if (!std::isfinite(train_loss)) {
            std::ostringstream dump;
            tape.dump(dump);
            std::cerr << "train: non-finite loss at epoch " << epoch << "\n" << dump.str();
            throw DataError("train: non-finite loss at epoch " + std::to_string(epoch));
        }
        tape.backward(loss);

        opt_w0.step(model.w0, tape.grad(w0), config.learning_rate, config.weight_decay);
        opt_w1.step(model.w1, tape.grad(w1), config.learning_rate, config.weight_decay);
        if (config.learn_edges && work.num_edges() > 0) {
            std::vector<double> theta = work.all_theta();
            Tensor theta_t(work.num_edges(), 1);
            for (int e = 0; e < work.num_edges(); ++e) theta_t.at(e, 0) = theta[std::size_t(e)];
            opt_theta.step(theta_t, tape.grad(abar.theta), config.learning_rate, 0.0);
            for (int e = 0; e < work.num_edges(); ++e) theta[std::size_t(e)] = theta_t.at(e, 0);
            work.set_all_theta(theta);
        }

        const EvalResult ev = evaluate(model, work, features, split, labels);
        result.history.push_back({epoch, train_loss, ev.val_acc, ev.test_acc});

        // ties on validation accuracy go to the lower-loss (later) model,
        // without resetting the patience window
        const bool improved = ev.val_acc > best_val;
        if (improved || (ev.val_acc == best_val && train_loss < best_loss)) {
            best_val = ev.val_acc;
            best_loss = train_loss;
            best_epoch = epoch;
            best_test = ev.test_acc;
            best_model = model;
            best_theta = work.all_theta();
        }
        if (improved)
            since_best = 0;
        else if (++since_best > config.patience)
            break;
    }

    result.model = std::move(best_model);
    result.theta = std::move(best_theta);
    result.best_epoch = best_epoch;
    result.best_val_acc = best_val;
    result.test_acc = best_test;
    return result;
}

EvalResult evaluate(const GcnModel& model, const WeightedAdjacency& adj, const Tensor& features,
                    const DatasetSplit& split, const std::vector<std::optional<int>>& labels) {
    Tape tape;
    const TapeAdjacency abar = build_normalized_adjacency(tape, adj, false);
    const GcnForward fwd = gcn_forward(tape, abar, tape.leaf(features), tape.leaf(model.w0),
                                       tape.leaf(model.w1), nullptr);
    EvalResult out;
    out.logits = tape.value(fwd.logits);
    out.hidden = tape.value(fwd.hidden);
    if (!split.train.empty()) out.train_acc = accuracy(out.logits, labels, split.train);
    if (!split.val.empty()) out.val_acc = accuracy(out.logits, labels, split.val);
    if (!split.test.empty()) out.test_acc = accuracy(out.logits, labels, split.test);
    return out;
}

SeedAggregate aggregate(std::vector<double> values) {
    if (values.empty()) throw DataError("aggregate: no values");
    SeedAggregate a;
    a.values = std::move(values);
    for (double v : a.values) a.mean += v;
    a.mean /= double(a.values.size());
    if (a.values.size() > 1) {
        double ss = 0.0;
        for (double v : a.values) ss += (v - a.mean) * (v - a.mean);
        a.stddev = std::sqrt(ss / double(a.values.size() - 1));
    }
    return a;
}

void write_metric_history(const std::string& path, const std::vector<MetricRow>& history) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write metric history: " + path);
    out << "epoch,train_loss,val_acc,test_acc\n";
    char buf[128];
    for (const auto& row : history) {
        std::snprintf(buf, sizeof buf, "%d,%.10f,%.10f,%.10f\n", row.epoch, row.train_loss,
                      row.val_acc, row.test_acc);
        out << buf;
    }
}

namespace {

void write_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

void write_f64(std::ofstream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::ifstream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void write_tensor(std::ofstream& out, const std::string& name, const Tensor& t) {
    write_u32(out, std::uint32_t(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    write_u32(out, std::uint32_t(t.rows));
    write_u32(out, std::uint32_t(t.cols));
    for (double x : t.v) write_f64(out, x);
}

std::pair<std::string, Tensor> read_tensor(std::ifstream& in) {
    const auto len = read_u32(in);
    std::string name(len, '\0');
    in.read(name.data(), std::streamsize(len));
    const int rows = int(read_u32(in));
    const int cols = int(read_u32(in));
    Tensor t(rows, cols);
    for (double& x : t.v) x = read_f64(in);
    return {name, t};
}

constexpr std::uint32_t kCheckpointMagic = 0x4b435454; // "TTCK"

} // namespace

void save_checkpoint(const std::string& path, const GcnModel& model,
                     const std::vector<double>& theta, const std::string& config_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    write_u32(out, kCheckpointMagic);
    write_u32(out, 1); // version
    write_u32(out, 3); // tensor count
    write_tensor(out, "w0", model.w0);
    write_tensor(out, "w1", model.w1);
    Tensor th(int(theta.size()), 1);
    for (std::size_t i = 0; i < theta.size(); ++i) th.at(int(i), 0) = theta[i];
    write_tensor(out, "theta", th);

    nlohmann::json side;
    side["config_hash"] = config_hash;
    side["format"] = "ttck-v1 little-endian f64";
    std::ofstream sidecar(path + ".json");
    sidecar << side.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    if (read_u32(in) != kCheckpointMagic) throw DataError("bad checkpoint magic: " + path);
    if (read_u32(in) != 1) throw DataError("unsupported checkpoint version: " + path);
    const auto count = read_u32(in);
    Checkpoint ck;
    for (std::uint32_t i = 0; i < count; ++i) {
        auto [name, t] = read_tensor(in);
        if (name == "w0")
            ck.model.w0 = std::move(t);
        else if (name == "w1")
            ck.model.w1 = std::move(t);
        else if (name == "theta")
            for (double x : t.v) ck.theta.push_back(x);
    }
    std::ifstream sidecar(path + ".json");
    if (sidecar) {
        nlohmann::json side;
        sidecar >> side;
        ck.config_hash = side.value("config_hash", "");
    }
    return ck;
}

void write_edge_weights(const std::string& path, const WeightedAdjacency& adj,
                        const std::vector<std::optional<int>>& labels) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write edge weights: " + path);
    out << "src,dst,weight,src_class,dst_class\n";
    char buf[128];
    for (int e = 0; e < adj.num_edges(); ++e) {
        const auto [a, b] = adj.edges()[std::size_t(e)];
        const int la = labels[std::size_t(a)] ? *labels[std::size_t(a)] : -1;
        const int lb = labels[std::size_t(b)] ? *labels[std::size_t(b)] : -1;
        std::snprintf(buf, sizeof buf, "%d,%d,%.10g,%d,%d\n", a, b, adj.weight(e), la, lb);
        out << buf;
    }
}

} // namespace tagtopo
