#include "retrolearn/losses.hpp"

#include "retrolearn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace retrolearn {

ProbabilityBatch::ProbabilityBatch(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), probs_(rows * cols, 0.0) {}

ProbabilityBatch::ProbabilityBatch(std::size_t rows, std::size_t cols, std::vector<double> probs)
    : rows_(rows), cols_(cols), probs_(std::move(probs)) {
    if (probs_.size() != rows * cols) {
        throw DimensionError("probability batch of " + std::to_string(rows) + "x" + std::to_string(cols) +
                             " given " + std::to_string(probs_.size()) + " values");
    }
}

ProbabilityBatch ProbabilityBatch::uniform(std::size_t rows, std::size_t cols) {
    return ProbabilityBatch(rows, cols, std::vector<double>(rows * cols, 1.0 / static_cast<double>(cols)));
}

void ProbabilityBatch::validate(double tol) const {
    for (std::size_t r = 0; r < rows_; ++r) {
        double total = 0.0;
        for (double p : row(r)) {
            if (!(p >= 0.0 && p <= 1.0)) {
                throw ContractError("probability row " + std::to_string(r) + " has entry outside [0,1]");
            }
            total += p;
        }
        if (std::abs(total - 1.0) > tol) {
            throw ContractError("probability row " + std::to_string(r) + " sums to " + std::to_string(total));
        }
    }
}

namespace {

void require_tau(double tau) {
    if (!(tau > 0.0)) throw PreconditionError("temperature must be positive, got " + std::to_string(tau));
}

void require_labels(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2) {
        throw DimensionError("logits must be [B x C], got " + shape_to_string(logits.shape()));
    }
    if (labels.size() != logits.rows()) {
        throw DimensionError("got " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(logits.rows()) + " logit rows");
    }
    const auto classes = static_cast<int>(logits.cols());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= classes) {
            throw ContractError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                                " outside [0, " + std::to_string(classes) + ")");
        }
    }
}

/// log softmax(z / tau) of one row into `out`.
void log_softmax_row(std::span<const double> z, double tau, std::span<double> out) {
    const double peak = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) {
        out[c] = (z[c] - peak) / tau;
        total += std::exp(out[c]);
    }
    const double log_total = std::log(total);
    for (double& v : out) v -= log_total;
}

std::span<const double> row_of(const Tensor& t, std::size_t r) {
    return t.values().subspan(r * t.cols(), t.cols());
}

}  // namespace

ProbabilityBatch softmax_temperature(const Tensor& logits, double tau) {
    require_tau(tau);
    if (logits.rank() != 2) {
        throw DimensionError("softmax_temperature expects [B x C] logits, got " + shape_to_string(logits.shape()));
    }
    const std::size_t classes = logits.cols();
    ProbabilityBatch out(logits.rows(), classes);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto dst = out.row(r);
        log_softmax_row(row_of(logits, r), tau, dst);
        for (double& v : dst) v = std::exp(v);
    }
    return out;
}

double entropy(std::span<const double> p) {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return h;
}

double kl_divergence(const ProbabilityBatch& p, const ProbabilityBatch& q) {
    if (p.rows() != q.rows() || p.cols() != q.cols()) throw DimensionError("kl_divergence: shape mismatch");
    if (p.rows() == 0) throw DimensionError("kl_divergence: empty batch");
    double total = 0.0;
    for (std::size_t r = 0; r < p.rows(); ++r) {
        auto pr = p.row(r);
        auto qr = q.row(r);
        for (std::size_t c = 0; c < pr.size(); ++c) {
            if (pr[c] > 0.0) total += pr[c] * (std::log(pr[c]) - std::log(std::max(qr[c], kProbabilityFloor)));
        }
    }
    return total / static_cast<double>(p.rows());
}

Var cross_entropy(Var logits, std::span<const int> labels) {
    const Tensor& z = logits.value();
    require_labels(z, labels);
    const std::size_t batch = z.rows();
    const std::size_t classes = z.cols();
    std::vector<int> targets(labels.begin(), labels.end());

    std::vector<double> logp(classes);
    double total = 0.0;
    for (std::size_t r = 0; r < batch; ++r) {
        log_softmax_row(row_of(z, r), 1.0, logp);
        total -= logp[static_cast<std::size_t>(targets[r])];
    }
    const double inv_batch = 1.0 / static_cast<double>(batch);

    return logits.tape().record(
        Tensor::scalar(total * inv_batch), {logits},
        [targets = std::move(targets), inv_batch](const Tensor& out, std::span<Tensor* const> ins) {
            const double g = out.grad()[0] * inv_batch;
            const Tensor& zt = *ins[0];
            auto gz = ins[0]->grad();
            const std::size_t classes = zt.cols();
            std::vector<double> logp(classes);
            for (std::size_t r = 0; r < zt.rows(); ++r) {
                log_softmax_row(row_of(zt, r), 1.0, logp);
                for (std::size_t c = 0; c < classes; ++c) gz[r * classes + c] += g * std::exp(logp[c]);
                gz[r * classes + static_cast<std::size_t>(targets[r])] -= g;
            }
        });
}

Var softened_kl(Var logits, const ProbabilityBatch& stored, double tau) {
    require_tau(tau);
    const Tensor& z = logits.value();
    if (z.rank() != 2 || stored.rows() != z.rows() || stored.cols() != z.cols()) {
        throw ContractError("stored soft labels " + std::to_string(stored.rows()) + "x" +
                            std::to_string(stored.cols()) + " do not match logits " + shape_to_string(z.shape()));
    }
    const std::size_t classes = z.cols();
    std::vector<double> logp(classes);
    double total = 0.0;
    for (std::size_t r = 0; r < z.rows(); ++r) {
        log_softmax_row(row_of(z, r), tau, logp);
        auto s = stored.row(r);
        for (std::size_t c = 0; c < classes; ++c) {
            if (s[c] > 0.0) total += s[c] * (std::log(std::max(s[c], kProbabilityFloor)) - logp[c]);
        }
    }
    const double inv_batch = 1.0 / static_cast<double>(z.rows());

    // d/dz_c KL(s || softmax(z/tau)) = (p_c - s_c) / tau
    return logits.tape().record(
        Tensor::scalar(total * inv_batch), {logits},
        [stored, tau, inv_batch](const Tensor& out, std::span<Tensor* const> ins) {
            const double g = out.grad()[0] * inv_batch / tau;
            const Tensor& zt = *ins[0];
            auto gz = ins[0]->grad();
            const std::size_t classes = zt.cols();
            std::vector<double> logp(classes);
            for (std::size_t r = 0; r < zt.rows(); ++r) {
                log_softmax_row(row_of(zt, r), tau, logp);
                auto s = stored.row(r);
                for (std::size_t c = 0; c < classes; ++c) gz[r * classes + c] += g * (std::exp(logp[c]) - s[c]);
            }
        });
}

Var lwr_loss(Var logits, std::span<const int> labels, const ProbabilityBatch& stored, double tau, double alpha,
             double beta, LwrParts* parts) {
    require_tau(tau);
    if (alpha < 0.0 || beta < 0.0) throw PreconditionError("lwr_loss: alpha and beta must be nonnegative");
    Var ce = cross_entropy(logits, labels);
    Var kl = softened_kl(logits, stored, tau);
    Var total = add(scale(ce, alpha), scale(kl, beta * tau * tau));
    if (parts) {
        parts->cross_entropy = ce.value().item();
        parts->kl = kl.value().item();
        parts->total = total.value().item();
    }
    return total;
}

Var lsr_loss(Var logits, std::span<const int> labels, double epsilon, std::size_t num_classes) {
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw PreconditionError("lsr_loss: epsilon must lie in [0, 1)");
    const Tensor& z = logits.value();
    require_labels(z, labels);
    if (z.cols() != num_classes) {
        throw DimensionError("lsr_loss: logits have " + std::to_string(z.cols()) + " classes, expected " +
                             std::to_string(num_classes));
    }
    const std::size_t classes = num_classes;
    const double off = epsilon / static_cast<double>(classes);
    const double on = 1.0 - epsilon + off;
    std::vector<int> targets(labels.begin(), labels.end());

    std::vector<double> logp(classes);
    double total = 0.0;
    for (std::size_t r = 0; r < z.rows(); ++r) {
        log_softmax_row(row_of(z, r), 1.0, logp);
        for (std::size_t c = 0; c < classes; ++c) {
            const double target = static_cast<int>(c) == targets[r] ? on : off;
            total -= target * logp[c];
        }
    }
    const double inv_batch = 1.0 / static_cast<double>(z.rows());

    return logits.tape().record(
        Tensor::scalar(total * inv_batch), {logits},
        [targets = std::move(targets), on, off, inv_batch](const Tensor& out, std::span<Tensor* const> ins) {
            const double g = out.grad()[0] * inv_batch;
            const Tensor& zt = *ins[0];
            auto gz = ins[0]->grad();
            const std::size_t classes = zt.cols();
            std::vector<double> logp(classes);
            for (std::size_t r = 0; r < zt.rows(); ++r) {
                log_softmax_row(row_of(zt, r), 1.0, logp);
                for (std::size_t c = 0; c < classes; ++c) {
                    const double target = static_cast<int>(c) == targets[r] ? on : off;
                    gz[r * classes + c] += g * (std::exp(logp[c]) - target);
                }
            }
        });
}

Var max_entropy_loss(Var logits, std::span<const int> labels, double lambda) {
    if (!(lambda >= 0.0)) throw PreconditionError("max_entropy_loss: lambda must be nonnegative");
    const Tensor& z = logits.value();
    require_labels(z, labels);
    const std::size_t classes = z.cols();
    std::vector<int> targets(labels.begin(), labels.end());

    std::vector<double> logp(classes);
    double total = 0.0;
    for (std::size_t r = 0; r < z.rows(); ++r) {
        log_softmax_row(row_of(z, r), 1.0, logp);
        double h = 0.0;
        for (double lp : logp) h -= std::exp(lp) * lp;
        total += -logp[static_cast<std::size_t>(targets[r])] - lambda * h;
    }
    const double inv_batch = 1.0 / static_cast<double>(z.rows());

    // d(-lambda H)/dz_c = lambda p_c (log p_c + H)
    return logits.tape().record(
        Tensor::scalar(total * inv_batch), {logits},
        [targets = std::move(targets), lambda, inv_batch](const Tensor& out, std::span<Tensor* const> ins) {
            const double g = out.grad()[0] * inv_batch;
            const Tensor& zt = *ins[0];
            auto gz = ins[0]->grad();
            const std::size_t classes = zt.cols();
            std::vector<double> logp(classes);
            for (std::size_t r = 0; r < zt.rows(); ++r) {
                log_softmax_row(row_of(zt, r), 1.0, logp);
                double h = 0.0;
                for (double lp : logp) h -= std::exp(lp) * lp;
                for (std::size_t c = 0; c < classes; ++c) {
                    const double p = std::exp(logp[c]);
                    gz[r * classes + c] += g * (p + lambda * p * (logp[c] + h));
                }
                gz[r * classes + static_cast<std::size_t>(targets[r])] -= g;
            }
        });
}

}  // namespace retrolearn
