#include "histoforge/head.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "histoforge/tensor_file.hpp"

namespace histoforge {

void HeadConfig::validate() const {
    if (in_dim <= 0 || n_classes <= 0) throw std::invalid_argument("head dims must be positive");
    if (variant == HeadVariant::TwoLayer && hidden_dim <= 0)
        throw std::invalid_argument("hidden_dim must be positive");
    if (dropout_p < 0.0 || dropout_p >= 1.0)
        throw std::invalid_argument("dropout_p must be in [0, 1)");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (lr < 0) throw std::invalid_argument("lr must be >= 0");
}

int count_params(const HeadConfig& config) {
    config.validate();
    if (config.variant == HeadVariant::OneLayer)
        return config.in_dim * config.n_classes + config.n_classes;
    return config.in_dim * config.hidden_dim + config.hidden_dim +
           config.hidden_dim * config.n_classes + config.n_classes;
}

HeadParams init_params(const HeadConfig& config, RngStream& rng) {
    config.validate();
    auto uniform_layer = [&](Eigen::MatrixXd& w, Eigen::VectorXd& b, int out, int in) {
        double bound = 1.0 / std::sqrt(static_cast<double>(in));
        w.resize(out, in);
        b.resize(out);
        for (int i = 0; i < out; ++i)
            for (int j = 0; j < in; ++j) w(i, j) = rng.uniform(-bound, bound);
        for (int i = 0; i < out; ++i) b(i) = rng.uniform(-bound, bound);
    };
    HeadParams p;
    if (config.variant == HeadVariant::OneLayer) {
        uniform_layer(p.w1, p.b1, config.n_classes, config.in_dim);
    } else {
        uniform_layer(p.w1, p.b1, config.hidden_dim, config.in_dim);
        uniform_layer(p.w2, p.b2, config.n_classes, config.hidden_dim);
    }
    return p;
}

namespace {

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
    Eigen::ArrayXd shifted = logits.array() - logits.maxCoeff();
    Eigen::ArrayXd e = shifted.exp();
    return (e / e.sum()).matrix();
}

double log_softmax_at(const Eigen::VectorXd& logits, int label) {
    double mx = logits.maxCoeff();
    double lse = std::log((logits.array() - mx).exp().sum()) + mx;
    return logits(label) - lse;
}

Eigen::VectorXd dropout_mask(int n, double p, RngStream& rng) {
    Eigen::VectorXd mask(n);
    double scale = 1.0 / (1.0 - p);
    for (int i = 0; i < n; ++i) mask(i) = rng.next_double() < p ? 0.0 : scale;
    return mask;
}

}  // namespace

Eigen::VectorXd forward(const Eigen::VectorXd& features, const HeadParams& params,
                        const HeadConfig& config, bool training, RngStream* rng) {
    if (features.size() != config.in_dim)
        throw std::invalid_argument("feature dimension mismatch: expected " +
                                    std::to_string(config.in_dim) + ", got " +
                                    std::to_string(features.size()));
    if (config.variant == HeadVariant::OneLayer)
        return softmax(params.w1 * features + params.b1);

    Eigen::VectorXd hidden = (params.w1 * features + params.b1).cwiseMax(0.0);
    if (training && config.dropout_p > 0.0) {
        if (!rng) throw std::invalid_argument("training forward with dropout needs an rng");
        hidden = hidden.cwiseProduct(dropout_mask(config.hidden_dim, config.dropout_p, *rng));
    }
    return softmax(params.w2 * hidden + params.b2);
}

double cross_entropy(const Eigen::VectorXd& probs, int label) {
    if (label < 0 || label >= probs.size()) throw std::out_of_range("label out of range");
    return -std::log(std::max(probs(label), 1e-12));
}

BatchGradients gradients(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                         const HeadParams& params, const HeadConfig& config) {
    const Eigen::Index n = features.cols();
    if (n == 0) throw std::invalid_argument("empty batch");
    if (static_cast<std::size_t>(n) != labels.size())
        throw std::invalid_argument("features/labels size mismatch");

    BatchGradients out;
    out.mean_loss = 0.0;
    out.grads.w1 = Eigen::MatrixXd::Zero(params.w1.rows(), params.w1.cols());
    out.grads.b1 = Eigen::VectorXd::Zero(params.b1.size());
    bool two_layer = config.variant == HeadVariant::TwoLayer;
    if (two_layer) {
        out.grads.w2 = Eigen::MatrixXd::Zero(params.w2.rows(), params.w2.cols());
        out.grads.b2 = Eigen::VectorXd::Zero(params.b2.size());
    }

    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd x = features.col(i);
        int label = labels[i];
        if (two_layer) {
            Eigen::VectorXd pre = params.w1 * x + params.b1;
            Eigen::VectorXd hidden = pre.cwiseMax(0.0);
            Eigen::VectorXd logits = params.w2 * hidden + params.b2;
            Eigen::VectorXd probs = softmax(logits);
            out.mean_loss += -log_softmax_at(logits, label);
            Eigen::VectorXd delta = probs;  // softmax-CE gradient at the output
            delta(label) -= 1.0;
            out.grads.w2 += delta * hidden.transpose();
            out.grads.b2 += delta;
            Eigen::VectorXd dhidden = params.w2.transpose() * delta;
            Eigen::VectorXd dpre =
                dhidden.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
            out.grads.w1 += dpre * x.transpose();
            out.grads.b1 += dpre;
        } else {
            Eigen::VectorXd logits = params.w1 * x + params.b1;
            Eigen::VectorXd probs = softmax(logits);
            out.mean_loss += -log_softmax_at(logits, label);
            Eigen::VectorXd delta = probs;
            delta(label) -= 1.0;
            out.grads.w1 += delta * x.transpose();
            out.grads.b1 += delta;
        }
    }

    double inv = 1.0 / static_cast<double>(n);
    out.mean_loss *= inv;
    out.grads.w1 *= inv;
    out.grads.b1 *= inv;
    if (two_layer) {
        out.grads.w2 *= inv;
        out.grads.b2 *= inv;
    }
    return out;
}

AdamState zero_adam_state(const HeadParams& params) {
    auto zeros_like = [](const HeadParams& p) {
        HeadGradients g;
        g.w1 = Eigen::MatrixXd::Zero(p.w1.rows(), p.w1.cols());
        g.b1 = Eigen::VectorXd::Zero(p.b1.size());
        if (p.w2.size() > 0) {
            g.w2 = Eigen::MatrixXd::Zero(p.w2.rows(), p.w2.cols());
            g.b2 = Eigen::VectorXd::Zero(p.b2.size());
        }
        return g;
    };
    return {zeros_like(params), zeros_like(params)};
}

namespace {
template <typename Mat>
void adam_update(Mat& theta, const Mat& g, Mat& m, Mat& v, int t, const TrainConfig& c) {
    m = c.adam_beta1 * m + (1.0 - c.adam_beta1) * g;
    v = c.adam_beta2 * v + (1.0 - c.adam_beta2) * g.cwiseProduct(g);
    double bc1 = 1.0 - std::pow(c.adam_beta1, t);
    double bc2 = 1.0 - std::pow(c.adam_beta2, t);
    theta.array() -= c.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.adam_eps);
}
}  // namespace

void adam_step(HeadParams& params, const HeadGradients& grads, AdamState& state, int t,
               const TrainConfig& config) {
    if (t < 1) throw std::invalid_argument("adam step index must be >= 1");
    adam_update(params.w1, grads.w1, state.m.w1, state.v.w1, t, config);
    adam_update(params.b1, grads.b1, state.m.b1, state.v.b1, t, config);
    if (params.w2.size() > 0) {
        adam_update(params.w2, grads.w2, state.m.w2, state.v.w2, t, config);
        adam_update(params.b2, grads.b2, state.m.b2, state.v.b2, t, config);
    }
}

namespace {

/// Batch gradients with dropout applied to the hidden layer (TwoLayer only);
/// the mask is drawn per sample and shared between forward and backward.
BatchGradients gradients_with_dropout(const Eigen::MatrixXd& features,
                                      const std::vector<int>& labels, const HeadParams& params,
                                      const HeadConfig& config, RngStream& rng) {
    if (config.variant == HeadVariant::OneLayer || config.dropout_p <= 0.0)
        return gradients(features, labels, params, config);

    const Eigen::Index n = features.cols();
    BatchGradients out;
    out.mean_loss = 0.0;
    out.grads.w1 = Eigen::MatrixXd::Zero(params.w1.rows(), params.w1.cols());
    out.grads.b1 = Eigen::VectorXd::Zero(params.b1.size());
    out.grads.w2 = Eigen::MatrixXd::Zero(params.w2.rows(), params.w2.cols());
    out.grads.b2 = Eigen::VectorXd::Zero(params.b2.size());

    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd x = features.col(i);
        int label = labels[i];
        Eigen::VectorXd pre = params.w1 * x + params.b1;
        Eigen::VectorXd mask = dropout_mask(config.hidden_dim, config.dropout_p, rng);
        Eigen::VectorXd hidden = pre.cwiseMax(0.0).cwiseProduct(mask);
        Eigen::VectorXd logits = params.w2 * hidden + params.b2;
        Eigen::VectorXd probs = softmax(logits);
        out.mean_loss += -log_softmax_at(logits, label);
        Eigen::VectorXd delta = probs;
        delta(label) -= 1.0;
        out.grads.w2 += delta * hidden.transpose();
        out.grads.b2 += delta;
        Eigen::VectorXd dhidden = (params.w2.transpose() * delta).cwiseProduct(mask);
        Eigen::VectorXd dpre = dhidden.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
        out.grads.w1 += dpre * x.transpose();
        out.grads.b1 += dpre;
    }
    double inv = 1.0 / static_cast<double>(n);
    out.mean_loss *= inv;
    out.grads.w1 *= inv;
    out.grads.b1 *= inv;
    out.grads.w2 *= inv;
    out.grads.b2 *= inv;
    return out;
}

}  // namespace

TrainResult train(const Eigen::MatrixXd& train_features, const std::vector<int>& train_labels,
                  const Eigen::MatrixXd& val_features, const std::vector<int>& val_labels,
                  const HeadConfig& head_config, const TrainConfig& train_config) {
    head_config.validate();
    train_config.validate();
    if (train_features.rows() != head_config.in_dim)
        throw std::invalid_argument("train feature dimension does not match head config");
    if (val_features.cols() > 0 && val_features.rows() != head_config.in_dim)
        throw std::invalid_argument("val feature dimension does not match head config");
    std::vector<long> class_seen(head_config.n_classes, 0);
    for (int label : train_labels) {
        if (label < 0 || label >= head_config.n_classes)
            throw std::invalid_argument("train label out of range");
        class_seen[label]++;
    }
    for (int k = 0; k < head_config.n_classes; ++k)
        if (class_seen[k] == 0)
            throw std::invalid_argument("no training samples for class index " +
                                        std::to_string(k));

    RngStream base(train_config.seed);
    RngStream init_rng = base.derive("head-init");
    HeadParams params = init_params(head_config, init_rng);
    AdamState state = zero_adam_state(params);
    RngStream dropout_rng = base.derive("dropout");

    TrainResult result;
    double best_acc = -1.0;
    int t = 0;
    const Eigen::Index n = train_features.cols();

    for (int epoch = 1; epoch <= train_config.epochs; ++epoch) {
        std::vector<Eigen::Index> order(n);
        std::iota(order.begin(), order.end(), 0);
        RngStream shuffle_rng = base.derive("shuffle").derive(static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        long batches = 0;
        for (Eigen::Index start = 0; start < n; start += train_config.batch_size) {
            Eigen::Index size = std::min<Eigen::Index>(train_config.batch_size, n - start);
            Eigen::MatrixXd batch(head_config.in_dim, size);
            std::vector<int> batch_labels(size);
            for (Eigen::Index i = 0; i < size; ++i) {
                batch.col(i) = train_features.col(order[start + i]);
                batch_labels[i] = train_labels[order[start + i]];
            }
            BatchGradients bg =
                gradients_with_dropout(batch, batch_labels, params, head_config, dropout_rng);
            adam_step(params, bg.grads, state, ++t, train_config);
            epoch_loss += bg.mean_loss;
            ++batches;
        }

        double val_loss = 0.0, val_acc = 0.0;
        if (val_features.cols() > 0) {
            long correct = 0;
            for (Eigen::Index i = 0; i < val_features.cols(); ++i) {
                Eigen::VectorXd probs = forward(val_features.col(i), params, head_config);
                val_loss += cross_entropy(probs, val_labels[i]);
                Eigen::Index pred;
                probs.maxCoeff(&pred);
                if (pred == val_labels[i]) ++correct;
            }
            val_loss /= static_cast<double>(val_features.cols());
            val_acc = static_cast<double>(correct) / static_cast<double>(val_features.cols());
        }

        result.history.push_back({epoch, epoch_loss / std::max<long>(1, batches), val_loss,
                                  val_acc});
        if (val_acc > best_acc) {
            best_acc = val_acc;
            result.best_params = params;
            result.best_epoch = epoch;
        }
    }
    result.final_params = params;
    return result;
}

void save_head(const HeadParams& params, const HeadConfig& config,
               const std::filesystem::path& path) {
    TensorFile file;
    auto add = [&](const std::string& name, const Eigen::MatrixXd& m) {
        std::vector<float> values;
        values.reserve(m.size());
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                values.push_back(static_cast<float>(m(i, j)));
        if (m.cols() == 1)
            file.add(name, {m.rows()}, std::move(values));
        else
            file.add(name, {m.rows(), m.cols()}, std::move(values));
    };
    add("head.w1", params.w1);
    add("head.b1", params.b1);
    if (config.variant == HeadVariant::TwoLayer) {
        add("head.w2", params.w2);
        add("head.b2", params.b2);
    }
    file.meta = {{"variant", config.variant == HeadVariant::OneLayer ? "one" : "two"},
                 {"in_dim", std::to_string(config.in_dim)},
                 {"hidden_dim", std::to_string(config.hidden_dim)},
                 {"n_classes", std::to_string(config.n_classes)},
                 {"dropout_p", std::to_string(config.dropout_p)}};
    file.write(path);
}

std::pair<HeadParams, HeadConfig> load_head(const std::filesystem::path& path) {
    TensorFile file = TensorFile::read(path);
    HeadConfig config;
    config.variant = file.meta.at("variant") == "two" ? HeadVariant::TwoLayer
                                                      : HeadVariant::OneLayer;
    config.in_dim = std::stoi(file.meta.at("in_dim"));
    config.hidden_dim = std::stoi(file.meta.at("hidden_dim"));
    config.n_classes = std::stoi(file.meta.at("n_classes"));
    config.dropout_p = std::stod(file.meta.at("dropout_p"));

    auto to_matrix = [&](const std::string& name, int rows, int cols) {
        const NamedTensor& t =
            cols == 1 ? file.require(name, {rows}) : file.require(name, {rows, cols});
        Eigen::MatrixXd m(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) m(i, j) = t.values[i * cols + j];
        return m;
    };
    HeadParams params;
    if (config.variant == HeadVariant::OneLayer) {
        params.w1 = to_matrix("head.w1", config.n_classes, config.in_dim);
        params.b1 = to_matrix("head.b1", config.n_classes, 1);
    } else {
        params.w1 = to_matrix("head.w1", config.hidden_dim, config.in_dim);
        params.b1 = to_matrix("head.b1", config.hidden_dim, 1);
        params.w2 = to_matrix("head.w2", config.n_classes, config.hidden_dim);
        params.b2 = to_matrix("head.b2", config.n_classes, 1);
    }
    return {params, config};
}

}  // namespace histoforge
