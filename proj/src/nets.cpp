#include "mvfbsde/nets.hpp"

#include "mvfbsde/errors.hpp"
#include "mvfbsde/parallel.hpp"
#include "mvfbsde/rng.hpp"

#include <cmath>

namespace mvfbsde {

std::string activation_name(Activation a) {
    return a == Activation::Tanh ? "tanh" : "identity";
}

Activation activation_from_name(const std::string& name) {
    if (name == "tanh") return Activation::Tanh;
    if (name == "identity") return Activation::Identity;
    throw ConfigError("unknown activation: " + name);
}

namespace {

void init_uniform(Mat& m, double bound, Rng& rng) {
    for (double& v : m.flat()) v = rng.uniform(-bound, bound);
}

// out = x·Wᵀ + b, plain (no tape) version shared by both nets.
void affine_eval(const Mat& x, const Mat& w, const Mat& b, Mat& out) {
    const std::size_t rows = x.rows(), in = w.cols(), no = w.rows();
    out.ensure_shape(rows, no);
    const double* xd = x.data();
    const double* wd = w.data();
    const double* bd = b.data();
    double* od = out.data();
    parallel_ranges(rows, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
            const double* xr = xd + r * in;
            double* orow = od + r * no;
            for (std::size_t o = 0; o < no; ++o) {
                const double* wr = wd + o * in;
                double acc = bd[o];
                for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wr[i];
                orow[o] = acc;
            }
        }
    });
}

inline double sigmoid1(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double ev = std::exp(v);
    return ev / (1.0 + ev);
}

} // namespace

FeedForwardNet::FeedForwardNet(std::vector<std::size_t> layer_sizes, Activation activation,
                               std::uint64_t seed)
    : sizes_(std::move(layer_sizes)), activation_(activation) {
    if (sizes_.size() < 2) throw ConfigError("FeedForwardNet needs at least input+output sizes");
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        const std::size_t in = sizes_[l], out = sizes_[l + 1];
        if (in == 0 || out == 0) throw ConfigError("FeedForwardNet: zero layer width");
        Mat w(out, in), b(1, out);
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        init_uniform(w, bound, rng);
        init_uniform(b, bound, rng);
        weights_.push_back(std::move(w));
        biases_.push_back(std::move(b));
    }
}

Mat FeedForwardNet::eval(const Mat& x) const {
    if (x.cols() != input_dim())
        throw ConfigError("FeedForwardNet::eval: input width " + std::to_string(x.cols()) +
                          " != " + std::to_string(input_dim()));
    Mat cur = x, next;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        affine_eval(cur, weights_[l], biases_[l], next);
        const bool last = (l + 1 == weights_.size());
        if (!last && activation_ == Activation::Tanh) {
            double* d = next.data();
            const std::size_t n = next.size();
            parallel_ranges(n, [&](std::size_t e0, std::size_t e1) {
                for (std::size_t e = e0; e < e1; ++e) d[e] = std::tanh(d[e]);
            });
        }
        std::swap(cur, next);
    }
    return cur;
}

FeedForwardNet::TapeEval FeedForwardNet::forward_on_tape(ad::Tape& tape, const Mat& x,
                                                         bool input_requires_grad) const {
    if (x.cols() != input_dim())
        throw ConfigError("FeedForwardNet::forward_on_tape: input width mismatch");
    TapeEval ev;
    ev.input = tape.leaf(x, input_requires_grad);
    ad::NodeId cur = ev.input;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        const ad::NodeId w = tape.leaf(weights_[l], true);
        const ad::NodeId b = tape.leaf(biases_[l], true);
        ev.params.push_back(w);
        ev.params.push_back(b);
        cur = tape.affine(cur, w, b);
        if (l + 1 < weights_.size() && activation_ == Activation::Tanh) cur = tape.tanh_(cur);
    }
    ev.output = cur;
    return ev;
}

std::vector<Mat*> FeedForwardNet::params() {
    std::vector<Mat*> p;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        p.push_back(&weights_[l]);
        p.push_back(&biases_[l]);
    }
    return p;
}

std::vector<const Mat*> FeedForwardNet::params() const {
    std::vector<const Mat*> p;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        p.push_back(&weights_[l]);
        p.push_back(&biases_[l]);
    }
    return p;
}

GruNet::GruNet(std::size_t input_dim, std::size_t hidden_dim, std::size_t extra_dim,
               std::size_t output_dim, std::uint64_t seed)
    : input_dim_(input_dim), hidden_dim_(hidden_dim), extra_dim_(extra_dim),
      output_dim_(output_dim) {
    if (input_dim == 0 || hidden_dim == 0 || output_dim == 0)
        throw ConfigError("GruNet: zero dimension");
    Rng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    auto make = [&](Mat& m, std::size_t r, std::size_t c) {
        m.resize(r, c);
        init_uniform(m, bound, rng);
    };
    make(wz, hidden_dim, input_dim);
    make(uz, hidden_dim, hidden_dim);
    make(bz, 1, hidden_dim);
    make(wr, hidden_dim, input_dim);
    make(ur, hidden_dim, hidden_dim);
    make(br, 1, hidden_dim);
    make(wn, hidden_dim, input_dim);
    make(bn, 1, hidden_dim);
    make(un, hidden_dim, hidden_dim);
    make(bhn, 1, hidden_dim);
    const double head_bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim + extra_dim));
    wo.resize(output_dim, hidden_dim + extra_dim);
    init_uniform(wo, head_bound, rng);
    bo.resize(1, output_dim);
    init_uniform(bo, head_bound, rng);
}

Mat GruNet::step(const Mat& h, const Mat& x) const {
    if (x.cols() != input_dim_) throw ConfigError("GruNet::step: input width mismatch");
    if (h.cols() != hidden_dim_ || h.rows() != x.rows())
        throw ConfigError("GruNet::step: hidden shape mismatch");
    Mat zi, zh, ri, rh, ni, nh;
    Mat zero_b(1, hidden_dim_);
    affine_eval(x, wz, bz, zi);
    affine_eval(h, uz, zero_b, zh);
    affine_eval(x, wr, br, ri);
    affine_eval(h, ur, zero_b, rh);
    affine_eval(x, wn, bn, ni);
    affine_eval(h, un, bhn, nh);
    Mat out(h.rows(), hidden_dim_);
    for (std::size_t r = 0; r < h.rows(); ++r) {
        for (std::size_t c = 0; c < hidden_dim_; ++c) {
            const double z = sigmoid1(zi(r, c) + zh(r, c));
            const double rr = sigmoid1(ri(r, c) + rh(r, c));
            const double n = std::tanh(ni(r, c) + rr * nh(r, c));
            out(r, c) = (1.0 - z) * n + z * h(r, c);
        }
    }
    return out;
}

Mat GruNet::head(const Mat& h, const Mat* extra) const {
    if (extra_dim_ == 0) {
        if (extra && !extra->empty()) throw ConfigError("GruNet::head: unexpected extra features");
        Mat out;
        affine_eval(h, wo, bo, out);
        return out;
    }
    if (!extra || extra->cols() != extra_dim_ || extra->rows() != h.rows())
        throw ConfigError("GruNet::head: extra feature shape mismatch");
    Mat joined(h.rows(), hidden_dim_ + extra_dim_);
    for (std::size_t r = 0; r < h.rows(); ++r) {
        for (std::size_t c = 0; c < hidden_dim_; ++c) joined(r, c) = h(r, c);
        for (std::size_t c = 0; c < extra_dim_; ++c) joined(r, hidden_dim_ + c) = (*extra)(r, c);
    }
    Mat out;
    affine_eval(joined, wo, bo, out);
    return out;
}

std::vector<Mat> GruNet::hidden_sequence(const std::vector<Mat>& inputs) const {
    if (inputs.empty()) throw UsageError("GruNet: empty input sequence");
    std::vector<Mat> hidden;
    hidden.reserve(inputs.size());
    Mat h(inputs.front().rows(), hidden_dim_, 0.0);
    for (const Mat& x : inputs) {
        h = step(h, x);
        hidden.push_back(h);
    }
    return hidden;
}

std::vector<Mat> GruNet::eval_sequence(const std::vector<Mat>& inputs,
                                       const std::vector<Mat>* extras) const {
    if (extras && extras->size() != inputs.size())
        throw ConfigError("GruNet::eval_sequence: extras length mismatch");
    std::vector<Mat> hidden = hidden_sequence(inputs);
    std::vector<Mat> outputs;
    outputs.reserve(hidden.size());
    for (std::size_t j = 0; j < hidden.size(); ++j)
        outputs.push_back(head(hidden[j], extras ? &(*extras)[j] : nullptr));
    return outputs;
}

GruNet::TapeEval GruNet::forward_on_tape(ad::Tape& tape, const std::vector<Mat>& inputs,
                                         const std::vector<Mat>* extras) const {
    if (inputs.empty()) throw UsageError("GruNet: empty input sequence");
    if (extras && extras->size() != inputs.size())
        throw ConfigError("GruNet::forward_on_tape: extras length mismatch");
    TapeEval ev;
    const ad::NodeId nwz = tape.leaf(wz, true), nuz = tape.leaf(uz, true),
                     nbz = tape.leaf(bz, true);
    const ad::NodeId nwr = tape.leaf(wr, true), nur = tape.leaf(ur, true),
                     nbr = tape.leaf(br, true);
    const ad::NodeId nwn = tape.leaf(wn, true), nbn = tape.leaf(bn, true),
                     nun = tape.leaf(un, true), nbhn = tape.leaf(bhn, true);
    const ad::NodeId nwo = tape.leaf(wo, true), nbo = tape.leaf(bo, true);
    ev.params = {nwz, nuz, nbz, nwr, nur, nbr, nwn, nbn, nun, nbhn, nwo, nbo};

    const std::size_t batch = inputs.front().rows();
    ad::NodeId h = tape.leaf(Mat(batch, hidden_dim_, 0.0), false);
    for (std::size_t j = 0; j < inputs.size(); ++j) {
        const ad::NodeId x = tape.leaf(inputs[j], false);
        const ad::NodeId z = tape.sigmoid_(tape.add(tape.affine(x, nwz, nbz),
                                                    tape.affine(h, nuz)));
        const ad::NodeId r = tape.sigmoid_(tape.add(tape.affine(x, nwr, nbr),
                                                    tape.affine(h, nur)));
        const ad::NodeId n = tape.tanh_(tape.add(tape.affine(x, nwn, nbn),
                                                 tape.mul(r, tape.affine(h, nun, nbhn))));
        h = tape.add(tape.mul(tape.one_minus(z), n), tape.mul(z, h));
        ad::NodeId head_in = h;
        if (extra_dim_ > 0) {
            const ad::NodeId e = tape.leaf((*extras)[j], false);
            head_in = tape.concat_cols(h, e);
        }
        ev.outputs.push_back(tape.affine(head_in, nwo, nbo));
    }
    return ev;
}

std::vector<Mat*> GruNet::params() {
    return {&wz, &uz, &bz, &wr, &ur, &br, &wn, &bn, &un, &bhn, &wo, &bo};
}

std::vector<const Mat*> GruNet::params() const {
    return {&wz, &uz, &bz, &wr, &ur, &br, &wn, &bn, &un, &bhn, &wo, &bo};
}

AdamState::AdamState(const std::vector<const Mat*>& params, AdamConfig cfg) : cfg_(cfg) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Mat* p : params) {
        m_.emplace_back(p->rows(), p->cols(), 0.0);
        v_.emplace_back(p->rows(), p->cols(), 0.0);
    }
}

double AdamState::effective_lr() const {
    return cfg_.lr * std::pow(cfg_.decay, static_cast<double>(steps_ / cfg_.decay_every));
}

void AdamState::update(const std::vector<Mat*>& params, const std::vector<const Mat*>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
        throw UsageError("AdamState::update: parameter list size mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (!params[k]->same_shape(m_[k]))
            throw UsageError("AdamState::update: parameter shape drifted");
        if (!grads[k]->same_shape(m_[k]))
            throw UsageError("AdamState::update: gradient shape mismatch");
        if (!grads[k]->all_finite())
            throw TrainingError("non-finite gradient; update aborted, optimizer state unchanged");
    }
    const double lr = effective_lr();
    const double t = static_cast<double>(steps_ + 1);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        double* p = params[k]->data();
        const double* g = grads[k]->data();
        double* m = m_[k].data();
        double* v = v_[k].data();
        const std::size_t n = m_[k].size();
        for (std::size_t e = 0; e < n; ++e) {
            m[e] = cfg_.beta1 * m[e] + (1.0 - cfg_.beta1) * g[e];
            v[e] = cfg_.beta2 * v[e] + (1.0 - cfg_.beta2) * g[e] * g[e];
            const double mhat = m[e] / bc1;
            const double vhat = v[e] / bc2;
            p[e] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
    ++steps_;
}

} // namespace mvfbsde
