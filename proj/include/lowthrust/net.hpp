#ifndef LOWTHRUST_NET_HPP
#define LOWTHRUST_NET_HPP

#include <Eigen/Dense>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lowthrust/equinoctial.hpp"
#include "lowthrust/rng.hpp"

namespace lowthrust {

struct ModelFormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Head { Value, Policy };

// Feed-forward architecture: 7 inputs (p,f,g,h,k,L,m), softplus hidden
// layers, and either a scalar linear value head or a policy head emitting a
// sigmoid throttle plus an unnormalized 3-vector thrust direction.
struct Arch {
    int input = 7;
    std::vector<int> hidden;
    Head head = Head::Value;

    int output_dim() const { return head == Head::Value ? 1 : 4; }
    void validate() const {
        if (input < 1) throw std::invalid_argument("Arch: bad input width");
        for (int w : hidden)
            if (w < 1) throw std::invalid_argument("Arch: bad hidden width");
    }
};

struct NetworkModel {
    Arch arch;
    std::vector<Eigen::MatrixXd> W;  // W[i]: out x in
    std::vector<Eigen::VectorXd> b;

    int n_layers() const { return static_cast<int>(W.size()); }
};

inline NetworkModel init_model(const Arch& arch, std::mt19937_64& rng) {
    arch.validate();
    NetworkModel m;
    m.arch = arch;
    std::vector<int> dims;
    dims.push_back(arch.input);
    for (int w : arch.hidden) dims.push_back(w);
    dims.push_back(arch.output_dim());
    std::normal_distribution<double> N(0.0, 1.0);
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const int fan_in = dims[i], fan_out = dims[i + 1];
        const double sd = std::sqrt(2.0 / fan_in);
        Eigen::MatrixXd W(fan_out, fan_in);
        for (int r = 0; r < fan_out; ++r)
            for (int c = 0; c < fan_in; ++c) W(r, c) = sd * N(rng);
        m.W.push_back(std::move(W));
        m.b.push_back(Eigen::VectorXd::Zero(fan_out));
    }
    return m;
}

namespace nn {

inline Eigen::ArrayXXd softplus(const Eigen::ArrayXXd& z) {
    // Numerically safe: log(1+e^z) = max(z,0) + log1p(e^{-|z|}).
    return z.max(0.0) + (-z.abs()).exp().log1p();
}
inline Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& z) {
    return 0.5 * (0.5 * z).tanh() + 0.5;
}

}  // namespace nn

// Intermediate activations of a batched forward pass (columns are samples).
struct ForwardCache {
    std::vector<Eigen::MatrixXd> h;  // h[0] = input, h[i] = softplus(z[i-1])
    std::vector<Eigen::MatrixXd> z;  // pre-activations of hidden layers
    Eigen::MatrixXd out;             // head pre-activation (linear part)
};

inline Eigen::MatrixXd forward(const NetworkModel& m, const Eigen::MatrixXd& X,
                               ForwardCache* cache = nullptr) {
    Eigen::MatrixXd h = X;
    if (cache) {
        cache->h.assign(1, h);
        cache->z.clear();
    }
    const int L = m.n_layers();
    for (int i = 0; i < L - 1; ++i) {
        Eigen::MatrixXd z = (m.W[i] * h).colwise() + m.b[i];
        h = nn::softplus(z.array()).matrix();
        if (cache) {
            cache->z.push_back(std::move(z));
            cache->h.push_back(h);
        }
    }
    Eigen::MatrixXd out = (m.W[L - 1] * h).colwise() + m.b[L - 1];
    if (cache) cache->out = out;
    return out;
}

// Value-head scalar outputs, one per column.
inline Eigen::RowVectorXd value_of(const NetworkModel& m, const Eigen::MatrixXd& X) {
    if (m.arch.head != Head::Value)
        throw std::invalid_argument("value_of: not a value network");
    return forward(m, X).row(0);
}

struct PolicyOutput {
    double u = 0.0;
    Vec3 i_tau = Vec3::Zero();
    bool degenerate = false;  // |d| below threshold, i_tau invalid
};

inline PolicyOutput policy_of(const NetworkModel& m, const Vec7& x) {
    if (m.arch.head != Head::Policy)
        throw std::invalid_argument("policy_of: not a policy network");
    const Eigen::MatrixXd out = forward(m, x);
    PolicyOutput p;
    p.u = 1.0 / (1.0 + std::exp(-out(0, 0)));
    const Vec3 d = out.col(0).tail<3>();
    if (d.norm() < 1e-14) {
        p.degenerate = true;
        return p;
    }
    p.i_tau = d.normalized();
    return p;
}

// Exact reverse-mode gradient of the value output w.r.t. the inputs; one
// 7-vector per column of X.
inline Eigen::MatrixXd input_gradient(const NetworkModel& m,
                                      const Eigen::MatrixXd& X,
                                      const ForwardCache* pre = nullptr) {
    if (m.arch.head != Head::Value)
        throw std::invalid_argument("input_gradient: not a value network");
    ForwardCache local;
    const ForwardCache* c = pre;
    if (!c) {
        forward(m, X, &local);
        c = &local;
    }
    const int L = m.n_layers();
    // r = dv/dh for the current layer, all columns at once.
    Eigen::MatrixXd r = m.W[L - 1].transpose() *
                        Eigen::MatrixXd::Ones(1, X.cols());
    for (int i = L - 2; i >= 0; --i) {
        const Eigen::ArrayXXd sp = nn::sigmoid(c->z[i].array());  // softplus'
        r = m.W[i].transpose() * (sp * r.array()).matrix();
    }
    return r;
}

inline void export_model(const NetworkModel& m, const std::string& path,
                         const nlohmann::json& metadata = {}) {
    nlohmann::json j;
    j["magic"] = "gcnet-model-v1";
    j["arch"]["input"] = m.arch.input;
    j["arch"]["hidden"] = m.arch.hidden;
    j["arch"]["head"] = m.arch.head == Head::Value ? "value" : "policy";
    auto& layers = j["layers"];
    layers = nlohmann::json::array();
    for (int i = 0; i < m.n_layers(); ++i) {
        nlohmann::json layer;
        layer["rows"] = m.W[i].rows();
        layer["cols"] = m.W[i].cols();
        std::vector<double> w;
        w.reserve(m.W[i].size());
        for (Eigen::Index r = 0; r < m.W[i].rows(); ++r)
            for (Eigen::Index c = 0; c < m.W[i].cols(); ++c)
                w.push_back(m.W[i](r, c));
        layer["weights"] = std::move(w);
        layer["biases"] =
            std::vector<double>(m.b[i].data(), m.b[i].data() + m.b[i].size());
        layers.push_back(std::move(layer));
    }
    j["metadata"] = metadata;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << j.dump() << '\n';
}

inline NetworkModel import_model(const std::string& path,
                                 nlohmann::json* metadata = nullptr) {
    std::ifstream in(path);
    if (!in) throw ModelFormatError("cannot open model file: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ModelFormatError("model file is not valid JSON: " + path);
    }
    if (!j.contains("magic") || j["magic"] != "gcnet-model-v1")
        throw ModelFormatError("bad model magic in " + path);
    NetworkModel m;
    m.arch.input = j["arch"]["input"];
    m.arch.hidden = j["arch"]["hidden"].get<std::vector<int>>();
    m.arch.head = j["arch"]["head"] == "value" ? Head::Value : Head::Policy;
    for (const auto& layer : j["layers"]) {
        const Eigen::Index rows = layer["rows"], cols = layer["cols"];
        const auto w = layer["weights"].get<std::vector<double>>();
        const auto bb = layer["biases"].get<std::vector<double>>();
        if (static_cast<Eigen::Index>(w.size()) != rows * cols ||
            static_cast<Eigen::Index>(bb.size()) != rows)
            throw ModelFormatError("inconsistent layer dims in " + path);
        Eigen::MatrixXd W(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) W(r, c) = w[r * cols + c];
        m.W.push_back(std::move(W));
        m.b.push_back(Eigen::Map<const Eigen::VectorXd>(bb.data(), rows));
    }
    if (metadata && j.contains("metadata")) *metadata = j["metadata"];
    return m;
}

}  // namespace lowthrust

#endif
