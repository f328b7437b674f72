#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "memjscc/ad.hpp"
#include "memjscc/rng.hpp"

namespace memjscc::nn {

using ad::Mat;

class ParamStore {
public:
    int add(const std::string& name, Mat init) {
        if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
        index_[name] = static_cast<int>(values_.size());
        names_.push_back(name);
        values_.push_back(std::move(init));
        return static_cast<int>(values_.size()) - 1;
    }

    int count() const { return static_cast<int>(values_.size()); }
    Mat& value(int i) { return values_[static_cast<std::size_t>(i)]; }
    const Mat& value(int i) const { return values_[static_cast<std::size_t>(i)]; }
    const std::string& name(int i) const { return names_[static_cast<std::size_t>(i)]; }
    int find(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::invalid_argument("ParamStore: unknown name " + name);
        return it->second;
    }
    bool has(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
        return n;
    }

private:
    std::vector<std::string> names_;
    std::vector<Mat> values_;
    std::map<std::string, int> index_;
};

// Leaves for every parameter on a fresh tape; grads are read back after
// Tape::backward.
struct Bound {
    ad::Tape* tape = nullptr;
    ParamStore* store = nullptr;
    std::vector<int> node_of_param;

    ad::Var operator[](int param_idx) const {
        return {tape, node_of_param[static_cast<std::size_t>(param_idx)]};
    }
};

inline Bound bind(ad::Tape& t, ParamStore& s) {
    Bound b{&t, &s, {}};
    b.node_of_param.reserve(static_cast<std::size_t>(s.count()));
    for (int i = 0; i < s.count(); ++i) b.node_of_param.push_back(t.add(s.value(i)));
    return b;
}

inline std::vector<Mat> collect_grads(const Bound& b) {
    std::vector<Mat> g;
    g.reserve(b.node_of_param.size());
    for (int node : b.node_of_param) g.push_back(b.tape->grad(node));
    return g;
}

inline Mat glorot_uniform(Eigen::Index rows, Eigen::Index cols, double fan_in, double fan_out,
                          RngStream& rng) {
    const double lim = std::sqrt(6.0 / (fan_in + fan_out));
    Mat m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-lim, lim);
    return m;
}

struct AdamState {
    std::vector<Mat> m, v;
    long step = 0;
};

// Adaptive moment estimation with global gradient-norm clipping.
inline void adam_step(ParamStore& params, std::vector<Mat>& grads, AdamState& st, double lr,
                      double clip_norm = 10.0, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
    if (st.m.empty()) {
        st.m.resize(grads.size());
        st.v.resize(grads.size());
        for (std::size_t i = 0; i < grads.size(); ++i) {
            st.m[i] = Mat::Zero(grads[i].rows(), grads[i].cols());
            st.v[i] = Mat::Zero(grads[i].rows(), grads[i].cols());
        }
    }
    double sq = 0.0;
    for (const auto& g : grads) sq += g.squaredNorm();
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw std::runtime_error("adam_step: non-finite gradients");
    const double scale = (clip_norm > 0.0 && norm > clip_norm) ? clip_norm / norm : 1.0;
    ++st.step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.step));
    for (std::size_t i = 0; i < grads.size(); ++i) {
        Mat g = grads[i] * scale;
        st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * g;
        st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * g.cwiseProduct(g);
        params.value(static_cast<int>(i)).array() -=
            lr * (st.m[i].array() / bc1) / ((st.v[i].array() / bc2).sqrt() + eps);
    }
}

// Fully connected stack with tanh between layers and a linear head.
struct Mlp {
    std::vector<int> weight_idx;
    std::vector<int> bias_idx;

    static Mlp create(ParamStore& s, const std::string& prefix, const std::vector<int>& widths,
                      RngStream& rng, bool zero_last = false) {
        if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least in/out widths");
        Mlp m;
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            const int fin = widths[l], fout = widths[l + 1];
            const bool last = l + 2 == widths.size();
            Mat w = (last && zero_last) ? Mat::Zero(fin, fout)
                                        : glorot_uniform(fin, fout, fin, fout, rng);
            m.weight_idx.push_back(s.add(prefix + ".w" + std::to_string(l), std::move(w)));
            m.bias_idx.push_back(s.add(prefix + ".b" + std::to_string(l), Mat::Zero(1, fout)));
        }
        return m;
    }

    ad::Var forward(const Bound& b, ad::Var x) const {
        for (std::size_t l = 0; l < weight_idx.size(); ++l) {
            x = ad::add_row_broadcast(ad::matmul(x, b[weight_idx[l]]), b[bias_idx[l]]);
            if (l + 1 < weight_idx.size()) x = ad::tanh_(x);
        }
        return x;
    }
};

}  // namespace memjscc::nn
