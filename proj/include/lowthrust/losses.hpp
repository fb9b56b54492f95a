#ifndef LOWTHRUST_LOSSES_HPP
#define LOWTHRUST_LOSSES_HPP

#include "lowthrust/backgen.hpp"
#include "lowthrust/net.hpp"

namespace lowthrust {

enum class ValueTarget { PropellantToGo, FinalMass };

// A training batch in network layout: columns are samples.
struct Batch {
    Eigen::MatrixXd X;             // 7 x B inputs (p,f,g,h,k,L,m)
    Eigen::RowVectorXd u_star;     // stored optimal throttle
    Eigen::Matrix3Xd i_star;       // stored optimal direction
    Eigen::RowVectorXd value_target;
    Eigen::MatrixXd lambda;        // 7 x B stored costates (6 orbital + lambda_m)

    Eigen::Index size() const { return X.cols(); }
};

inline Batch make_batch(const std::vector<TrajectorySample>& rows,
                        ValueTarget target = ValueTarget::PropellantToGo) {
    const Eigen::Index B = static_cast<Eigen::Index>(rows.size());
    Batch b;
    b.X.resize(7, B);
    b.u_star.resize(B);
    b.i_star.resize(3, B);
    b.value_target.resize(B);
    b.lambda.resize(7, B);
    for (Eigen::Index j = 0; j < B; ++j) {
        const TrajectorySample& r = rows[j];
        b.X.col(j) = r.state.pack().head<7>();
        b.u_star(j) = r.control.u;
        b.i_star.col(j) = r.control.i_tau;
        b.value_target(j) = (target == ValueTarget::PropellantToGo)
                                ? r.propellant_to_go()
                                : r.m_f;
        b.lambda.col(j).head<6>() = r.state.co.lambda;
        b.lambda(6, j) = r.state.co.lambda_m;
    }
    return b;
}

struct LossComponents {
    double policy = 0.0;
    double vf = 0.0;
    double lambda = 0.0;
    double H = 0.0;
    double u = 0.0;
};

enum class Composite { N1, N2, N3, N4 };

struct LossConfig {
    Composite composite = Composite::N2;
    double s1 = 100.0;  // scale on the Hamiltonian component

    void validate() const {
        if (s1 <= 0.0) throw std::invalid_argument("LossConfig: s1 must be > 0");
    }
};

inline double composite_loss(const LossConfig& cfg, const LossComponents& c) {
    cfg.validate();
    switch (cfg.composite) {
        case Composite::N1: return c.policy;
        case Composite::N2: return c.vf;
        case Composite::N3: return c.vf + c.lambda;
        default: return c.vf + cfg.s1 * c.H + c.u;
    }
}

namespace detail {

inline EquinoctialState state_of_column(const Eigen::MatrixXd& X, Eigen::Index j) {
    EquinoctialState x;
    x.p = X(0, j);
    x.f = X(1, j);
    x.g = X(2, j);
    x.h = X(3, j);
    x.k = X(4, j);
    x.L = X(5, j);
    x.m = X(6, j);
    return x;
}

// d(throttle)/d(SF) of the smoothed bang-bang law, cancellation-safe on both
// branches.
inline double throttle_derivative(double sf, double eps) {
    const double R = std::sqrt(4.0 * eps * eps + sf * sf);
    const double RpS = (sf >= 0.0) ? (R + sf) : (4.0 * eps * eps / (R - sf));
    const double D = 2.0 * eps + RpS;
    return -2.0 * eps * (RpS / R) / (D * D);
}

}  // namespace detail

// Value and gradient (w.r.t. the 7-vector costate surrogate g, per sample) of
// a loss defined on g. Used for both the true-costate diagnostics and the
// network's second-order training path.
struct GradLossEval {
    double value = 0.0;
    Eigen::MatrixXd dldg;  // 7 x B, d(value)/dg
};

// Squared Hamiltonian residual, Eq.-6 form with g in place of the costates
// and the stored optimal control: mean over the batch of H^2.
inline GradLossEval hamiltonian_loss(const Eigen::MatrixXd& g, const Batch& batch,
                                     const HomotopyParam& eps,
                                     const PhysicalConstants& k) {
    const Eigen::Index B = batch.size();
    GradLossEval out;
    out.dldg = Eigen::MatrixXd::Zero(7, B);
    for (Eigen::Index j = 0; j < B; ++j) {
        const EquinoctialState x = detail::state_of_column(batch.X, j);
        const Mat63 Bm = b_matrix(x, k.mu);
        const double u = batch.u_star(j);
        const Vec3 it = batch.i_star.col(j);
        const Vec6 lam = g.col(j).head<6>();
        const double lm = g(6, j);
        const double drift = std::sqrt(k.mu / (x.p * x.p * x.p)) * x.w() * x.w();
        const Vec6 Bi = Bm * it;
        const double H = (k.c1 * u / x.m) * lam.dot(Bi) + lam(5) * drift -
                         k.c2 * lm * u + u -
                         eps.epsilon * std::log(u * (1.0 - u));
        out.value += H * H;
        Vec7 dHdg;
        dHdg.head<6>() = (k.c1 * u / x.m) * Bi;
        dHdg(5) += drift;
        dHdg(6) = -k.c2 * u;
        out.dldg.col(j) = 2.0 * H * dHdg;
    }
    out.value /= static_cast<double>(B);
    out.dldg /= static_cast<double>(B);
    return out;
}

// Control-reconstruction loss: throttle and direction recomputed from g via
// the minimum-principle formulas, compared against the stored controls.
inline GradLossEval control_loss(const Eigen::MatrixXd& g, const Batch& batch,
                                 const HomotopyParam& eps,
                                 const PhysicalConstants& k) {
    const Eigen::Index B = batch.size();
    GradLossEval out;
    out.dldg = Eigen::MatrixXd::Zero(7, B);
    for (Eigen::Index j = 0; j < B; ++j) {
        const EquinoctialState x = detail::state_of_column(batch.X, j);
        const Mat63 Bm = b_matrix(x, k.mu);
        const Vec6 lam = g.col(j).head<6>();
        const double lm = g(6, j);
        const Vec3 q = Bm.transpose() * lam;
        const double qn = std::max(q.norm(), 1e-14);
        const Vec3 qhat = q / qn;
        const Vec3 ihat = -qhat;
        const double sf = 1.0 - (k.c1 / x.m) * qn - k.c2 * lm;
        const double uhat = optimal_throttle(sf, eps);

        const double ustar = batch.u_star(j);
        const Vec3 istar = batch.i_star.col(j);
        out.value += (uhat - ustar) * (uhat - ustar) + (1.0 - ihat.dot(istar));

        // Throttle chain: dSF/dlam = -(c1/m) B qhat, dSF/dlm = -c2.
        const double du = detail::throttle_derivative(sf, eps.epsilon);
        const double coeff = 2.0 * (uhat - ustar) * du;
        Vec7 dl = Vec7::Zero();
        dl.head<6>() = coeff * (-(k.c1 / x.m)) * (Bm * qhat);
        dl(6) = coeff * (-k.c2);
        // Direction chain: d(1 - ihat.istar)/dq = (I - qhat qhat^T) istar / qn.
        const Vec3 dq = (istar - qhat * qhat.dot(istar)) / qn;
        dl.head<6>() += Bm * dq;
        out.dldg.col(j) = dl;
    }
    out.value /= static_cast<double>(B);
    out.dldg /= static_cast<double>(B);
    return out;
}

// All loss components applicable to the model's head, values only.
inline LossComponents loss_components(const NetworkModel& m, const Batch& batch,
                                      const HomotopyParam& eps,
                                      const PhysicalConstants& k) {
    LossComponents c;
    const Eigen::Index B = batch.size();
    if (m.arch.head == Head::Policy) {
        const Eigen::MatrixXd out = forward(m, batch.X);
        double acc = 0.0;
        for (Eigen::Index j = 0; j < B; ++j) {
            const double u = 1.0 / (1.0 + std::exp(-out(0, j)));
            const Vec3 d = out.col(j).tail<3>();
            const double dn = std::max(d.norm(), 1e-14);
            const Vec3 ihat = d / dn;
            const double du = u - batch.u_star(j);
            acc += du * du + (1.0 - ihat.dot(batch.i_star.col(j)));
        }
        c.policy = acc / static_cast<double>(B);
        return c;
    }
    ForwardCache cache;
    const Eigen::RowVectorXd v = forward(m, batch.X, &cache).row(0);
    c.vf = (v - batch.value_target).squaredNorm() / static_cast<double>(B);
    const Eigen::MatrixXd g = input_gradient(m, batch.X, &cache);
    c.lambda = (g.topRows(6) - batch.lambda.topRows(6)).squaredNorm() /
               (6.0 * static_cast<double>(B));
    c.H = hamiltonian_loss(g, batch, eps, k).value;
    c.u = control_loss(g, batch, eps, k).value;
    return c;
}

struct Gradients {
    std::vector<Eigen::MatrixXd> W;
    std::vector<Eigen::VectorXd> b;

    static Gradients zeros_like(const NetworkModel& m) {
        Gradients g;
        for (int i = 0; i < m.n_layers(); ++i) {
            g.W.push_back(Eigen::MatrixXd::Zero(m.W[i].rows(), m.W[i].cols()));
            g.b.push_back(Eigen::VectorXd::Zero(m.b[i].size()));
        }
        return g;
    }
};

struct LossResult {
    double loss = 0.0;
    LossComponents components;
    Gradients grad;
};

// Composite loss with exact reverse-mode weight gradients. The costate-based
// components differentiate through the network's input gradient, which is
// handled by augmenting the forward pass with a tangent direction per sample
// and running reverse mode over the augmented computation.
inline LossResult loss_and_gradient(const NetworkModel& m, const Batch& batch,
                                    const LossConfig& cfg,
                                    const HomotopyParam& eps,
                                    const PhysicalConstants& k) {
    cfg.validate();
    if ((cfg.composite == Composite::N1) != (m.arch.head == Head::Policy))
        throw std::invalid_argument("loss_and_gradient: head/composite mismatch");
    const Eigen::Index B = batch.size();
    const int L = m.n_layers();
    LossResult res;
    res.grad = Gradients::zeros_like(m);

    ForwardCache cache;
    forward(m, batch.X, &cache);

    if (m.arch.head == Head::Policy) {
        // First-order path: plain backprop from the head outputs.
        Eigen::MatrixXd G(4, B);  // d(loss)/d(head pre-activation)
        double acc = 0.0;
        for (Eigen::Index j = 0; j < B; ++j) {
            const double u = 1.0 / (1.0 + std::exp(-cache.out(0, j)));
            const Vec3 d = cache.out.col(j).tail<3>();
            const double dn = std::max(d.norm(), 1e-14);
            const Vec3 dhat = d / dn;
            const Vec3 istar = batch.i_star.col(j);
            const double du = u - batch.u_star(j);
            acc += du * du + (1.0 - dhat.dot(istar));
            G(0, j) = 2.0 * du * u * (1.0 - u);
            G.col(j).tail<3>() = -(istar - dhat * dhat.dot(istar)) / dn;
        }
        G /= static_cast<double>(B);
        res.components.policy = acc / static_cast<double>(B);
        res.loss = res.components.policy;

        Eigen::MatrixXd hbar;  // d(loss)/dh for the layer below
        res.grad.W[L - 1] = G * cache.h[L - 1].transpose();
        res.grad.b[L - 1] = G.rowwise().sum();
        hbar = m.W[L - 1].transpose() * G;
        for (int i = L - 2; i >= 0; --i) {
            const Eigen::ArrayXXd sp = nn::sigmoid(cache.z[i].array());
            const Eigen::MatrixXd zbar = (sp * hbar.array()).matrix();
            res.grad.W[i] = zbar * cache.h[i].transpose();
            res.grad.b[i] = zbar.rowwise().sum();
            if (i > 0) hbar = m.W[i].transpose() * zbar;
        }
        return res;
    }

    // Value head. Quantities of the plain pass:
    const Eigen::RowVectorXd v = cache.out.row(0);
    const Eigen::MatrixXd g = input_gradient(m, batch.X, &cache);

    res.components.vf =
        (v - batch.value_target).squaredNorm() / static_cast<double>(B);
    res.components.lambda = (g.topRows(6) - batch.lambda.topRows(6)).squaredNorm() /
                            (6.0 * static_cast<double>(B));
    const GradLossEval lH = hamiltonian_loss(g, batch, eps, k);
    const GradLossEval lu = control_loss(g, batch, eps, k);
    res.components.H = lH.value;
    res.components.u = lu.value;
    res.loss = composite_loss(cfg, res.components);

    // Per-sample seeds: dfdv on the value output, a = df/dg on the input
    // gradient.
    Eigen::RowVectorXd dfdv = Eigen::RowVectorXd::Zero(B);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(7, B);
    if (cfg.composite != Composite::N1) {
        dfdv = 2.0 / static_cast<double>(B) * (v - batch.value_target);
    }
    if (cfg.composite == Composite::N3) {
        a.topRows(6) = (g.topRows(6) - batch.lambda.topRows(6)) *
                       (2.0 / (6.0 * static_cast<double>(B)));
    } else if (cfg.composite == Composite::N4) {
        a = cfg.s1 * lH.dldg + lu.dldg;
    }

    // N2 touches only the value output: plain first-order backprop.
    if (cfg.composite == Composite::N2) {
        res.grad.W[L - 1] = dfdv * cache.h[L - 1].transpose();
        res.grad.b[L - 1] = Eigen::VectorXd::Constant(1, dfdv.sum());
        Eigen::MatrixXd hbar = m.W[L - 1].transpose() * dfdv;
        for (int i = L - 2; i >= 0; --i) {
            const Eigen::ArrayXXd s = nn::sigmoid(cache.z[i].array());
            const Eigen::MatrixXd zbar = (s * hbar.array()).matrix();
            res.grad.W[i] = zbar * cache.h[i].transpose();
            res.grad.b[i] = zbar.rowwise().sum();
            if (i > 0) hbar = m.W[i].transpose() * zbar;
        }
        return res;
    }

    // Tangent-augmented forward: hdot[0] = a.
    std::vector<Eigen::MatrixXd> hdot(L), zdot(L - 1);
    hdot[0] = a;
    for (int i = 0; i < L - 1; ++i) {
        zdot[i] = m.W[i] * hdot[i];
        hdot[i + 1] = (nn::sigmoid(cache.z[i].array()) * zdot[i].array()).matrix();
    }

    // Reverse over (value path) + (directional-derivative path).
    res.grad.W[L - 1] = dfdv * cache.h[L - 1].transpose();
    res.grad.W[L - 1] += hdot[L - 1].rowwise().sum().transpose();
    res.grad.b[L - 1] = Eigen::VectorXd::Constant(1, dfdv.sum());
    Eigen::MatrixXd hbar = m.W[L - 1].transpose() * dfdv;
    Eigen::MatrixXd hdotbar = m.W[L - 1].transpose() *
                              Eigen::MatrixXd::Ones(1, B);
    for (int i = L - 2; i >= 0; --i) {
        const Eigen::ArrayXXd s = nn::sigmoid(cache.z[i].array());
        const Eigen::ArrayXXd spp = s * (1.0 - s);  // softplus''
        const Eigen::MatrixXd zbar =
            (s * hbar.array() + spp * zdot[i].array() * hdotbar.array()).matrix();
        const Eigen::MatrixXd zdotbar = (s * hdotbar.array()).matrix();
        res.grad.W[i] = zbar * cache.h[i].transpose() +
                        zdotbar * hdot[i].transpose();
        res.grad.b[i] = zbar.rowwise().sum();
        if (i > 0) {
            hbar = m.W[i].transpose() * zbar;
            hdotbar = m.W[i].transpose() * zdotbar;
        }
    }
    return res;
}

}  // namespace lowthrust

#endif
