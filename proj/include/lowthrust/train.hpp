#ifndef LOWTHRUST_TRAIN_HPP
#define LOWTHRUST_TRAIN_HPP

#include <algorithm>
#include <limits>
#include <numeric>

#include "lowthrust/losses.hpp"

namespace lowthrust {

struct TrainConfig {
    double lr = 1e-4;
    int batch_size = 4096;
    int epochs = 100;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double plateau_factor = 0.5;
    int plateau_patience = 10;
    double plateau_min_delta = 1e-6;
    double grad_clip = 0.0;  // global-norm clip; 0 disables
    std::uint64_t seed = 0;
    ValueTarget value_target = ValueTarget::PropellantToGo;

    void validate() const {
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch >= 1");
        if (lr <= 0.0) throw std::invalid_argument("TrainConfig: lr > 0");
        if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs >= 1");
    }
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    NetworkModel model;  // best-validation checkpoint
    std::vector<EpochRecord> curve;
    double best_val_loss = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
};

namespace detail {

// Amsgrad state: exponential moments plus the running maximum of the second
// moment, per parameter tensor.
struct Amsgrad {
    std::vector<Eigen::MatrixXd> mW, vW, vmaxW;
    std::vector<Eigen::VectorXd> mb, vb, vmaxb;
    long t = 0;

    explicit Amsgrad(const NetworkModel& model) {
        for (int i = 0; i < model.n_layers(); ++i) {
            mW.push_back(Eigen::MatrixXd::Zero(model.W[i].rows(), model.W[i].cols()));
            vW.push_back(mW.back());
            vmaxW.push_back(mW.back());
            mb.push_back(Eigen::VectorXd::Zero(model.b[i].size()));
            vb.push_back(mb.back());
            vmaxb.push_back(mb.back());
        }
    }

    void step(NetworkModel& model, const Gradients& g, const TrainConfig& cfg,
              double lr) {
        ++t;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
        for (int i = 0; i < model.n_layers(); ++i) {
            mW[i] = cfg.beta1 * mW[i] + (1.0 - cfg.beta1) * g.W[i];
            vW[i] = cfg.beta2 * vW[i].array().matrix() +
                    (1.0 - cfg.beta2) * g.W[i].array().square().matrix();
            vmaxW[i] = vmaxW[i].cwiseMax(vW[i]);
            model.W[i].array() -=
                (lr / bc1) * mW[i].array() /
                ((vmaxW[i].array() / bc2).sqrt() + cfg.adam_eps);

            mb[i] = cfg.beta1 * mb[i] + (1.0 - cfg.beta1) * g.b[i];
            vb[i] = cfg.beta2 * vb[i].array().matrix() +
                    (1.0 - cfg.beta2) * g.b[i].array().square().matrix();
            vmaxb[i] = vmaxb[i].cwiseMax(vb[i]);
            model.b[i].array() -=
                (lr / bc1) * mb[i].array() /
                ((vmaxb[i].array() / bc2).sqrt() + cfg.adam_eps);
        }
    }
};

inline Batch slice_batch(const Batch& full, const std::vector<Eigen::Index>& idx,
                         Eigen::Index begin, Eigen::Index end) {
    Batch b;
    const Eigen::Index n = end - begin;
    b.X.resize(7, n);
    b.u_star.resize(n);
    b.i_star.resize(3, n);
    b.value_target.resize(n);
    b.lambda.resize(7, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const Eigen::Index s = idx[begin + j];
        b.X.col(j) = full.X.col(s);
        b.u_star(j) = full.u_star(s);
        b.i_star.col(j) = full.i_star.col(s);
        b.value_target(j) = full.value_target(s);
        b.lambda.col(j) = full.lambda.col(s);
    }
    return b;
}

}  // namespace detail

// Minibatch Amsgrad training with a validation-plateau learning-rate
// schedule. Deterministic for a fixed seed: shuffles come from per-epoch
// substreams and the optimizer state is updated in a fixed order.
inline TrainResult train(NetworkModel model,
                         const std::vector<TrajectorySample>& train_rows,
                         const std::vector<TrajectorySample>& val_rows,
                         const TrainConfig& cfg, const LossConfig& loss_cfg,
                         const HomotopyParam& eps, const PhysicalConstants& k) {
    cfg.validate();
    loss_cfg.validate();
    if (train_rows.empty()) throw std::invalid_argument("train: empty training split");
    const Batch train_all = make_batch(train_rows, cfg.value_target);
    const Batch val_all = make_batch(val_rows.empty() ? train_rows : val_rows,
                                     cfg.value_target);

    detail::Amsgrad opt(model);
    TrainResult result;
    result.model = model;
    double lr = cfg.lr;
    int stale = 0;
    double plateau_best = std::numeric_limits<double>::infinity();

    std::vector<Eigen::Index> idx(train_all.size());
    std::iota(idx.begin(), idx.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto rng = substream(cfg.seed, "train_shuffle", static_cast<std::uint64_t>(epoch));
        std::shuffle(idx.begin(), idx.end(), rng);

        double sum = 0.0;
        long batches = 0;
        for (Eigen::Index begin = 0; begin < train_all.size();
             begin += cfg.batch_size) {
            const Eigen::Index end =
                std::min<Eigen::Index>(begin + cfg.batch_size, train_all.size());
            const Batch mb = detail::slice_batch(train_all, idx, begin, end);
            LossResult lr_res = loss_and_gradient(model, mb, loss_cfg, eps, k);
            if (!std::isfinite(lr_res.loss))
                throw std::runtime_error(
                    "train: non-finite loss at epoch " + std::to_string(epoch) +
                    ", batch " + std::to_string(batches));
            if (cfg.grad_clip > 0.0) {
                double norm2 = 0.0;
                for (const auto& g : lr_res.grad.W) norm2 += g.squaredNorm();
                for (const auto& g : lr_res.grad.b) norm2 += g.squaredNorm();
                const double norm = std::sqrt(norm2);
                if (norm > cfg.grad_clip) {
                    const double s = cfg.grad_clip / norm;
                    for (auto& g : lr_res.grad.W) g *= s;
                    for (auto& g : lr_res.grad.b) g *= s;
                }
            }
            opt.step(model, lr_res.grad, cfg, lr);
            sum += lr_res.loss;
            ++batches;
        }

        const double val_loss =
            composite_loss(loss_cfg, loss_components(model, val_all, eps, k));
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = sum / static_cast<double>(batches);
        rec.val_loss = val_loss;
        rec.lr = lr;
        result.curve.push_back(rec);

        if (val_loss < result.best_val_loss) {
            result.best_val_loss = val_loss;
            result.best_epoch = epoch;
            result.model = model;
        }
        if (val_loss < plateau_best - cfg.plateau_min_delta) {
            plateau_best = val_loss;
            stale = 0;
        } else if (++stale >= cfg.plateau_patience) {
            lr *= cfg.plateau_factor;
            stale = 0;
        }
    }
    return result;
}

}  // namespace lowthrust

#endif
