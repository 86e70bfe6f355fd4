#include "mvfbsde/tape.hpp"

#include "mvfbsde/errors.hpp"
#include "mvfbsde/parallel.hpp"

#include <cmath>
#include <cstring>

namespace mvfbsde::ad {

namespace {
// Fixed chunk count for ordered partial-sum reductions. Independent of the
// worker count so results are bit-identical under any parallelism.
constexpr std::size_t kReduceChunks = 64;
} // namespace

void Tape::check_id(NodeId id, const char* where) const {
    if (id >= cursor_) throw UsageError(std::string(where) + ": node id out of range");
}

// Nodes live in a growable vector, so no reference or pointer into nodes_
// obtained before push() may be used after it.
Node& Tape::push(Op op, std::size_t rows, std::size_t cols) {
    if (cursor_ == nodes_.size()) nodes_.emplace_back();
    Node& n = nodes_[cursor_++];
    n.op = op;
    n.a = n.b = n.c = kNoNode;
    n.requires_grad = false;
    n.s0 = n.s1 = 0.0;
    n.value.ensure_shape(rows, cols);
    return n;
}

NodeId Tape::leaf(const Mat& v, bool requires_grad) {
    Node& n = push(Op::Leaf, v.rows(), v.cols());
    std::memcpy(n.value.data(), v.data(), v.size() * sizeof(double));
    n.requires_grad = requires_grad;
    return static_cast<NodeId>(cursor_ - 1);
}

NodeId Tape::leaf_scalar(double v, bool requires_grad) {
    Node& n = push(Op::Leaf, 1, 1);
    n.value(0, 0) = v;
    n.requires_grad = requires_grad;
    return static_cast<NodeId>(cursor_ - 1);
}

NodeId Tape::affine(NodeId x, NodeId w, NodeId bias) {
    check_id(x, "affine");
    check_id(w, "affine");
    const std::size_t rows = nodes_[x].value.rows();
    const std::size_t in = nodes_[w].value.cols();
    const std::size_t out = nodes_[w].value.rows();
    if (nodes_[x].value.cols() != in)
        throw ConfigError("affine: input width " + std::to_string(nodes_[x].value.cols()) +
                          " does not match weight fan-in " + std::to_string(in));
    if (bias != kNoNode) {
        check_id(bias, "affine");
        if (nodes_[bias].value.rows() != 1 || nodes_[bias].value.cols() != out)
            throw ConfigError("affine: bias shape must be 1x" + std::to_string(out));
    }
    Node& n = push(Op::Affine, rows, out);
    n.a = x;
    n.b = w;
    n.c = bias;
    n.requires_grad = nodes_[x].requires_grad || nodes_[w].requires_grad ||
                      (bias != kNoNode && nodes_[bias].requires_grad);
    const double* xd = nodes_[x].value.data();
    const double* wd = nodes_[w].value.data();
    const double* bptr = bias != kNoNode ? nodes_[bias].value.data() : nullptr;
    double* od = n.value.data();
    parallel_ranges(rows, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
            const double* xr = xd + r * in;
            double* orow = od + r * out;
            for (std::size_t o = 0; o < out; ++o) {
                const double* wr = wd + o * in;
                double acc = bptr ? bptr[o] : 0.0;
                for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wr[i];
                orow[o] = acc;
            }
        }
    });
    return static_cast<NodeId>(cursor_ - 1);
}

NodeId Tape::tanh_(NodeId x) {
    check_id(x, "tanh");
    const std::size_t rows = nodes_[x].value.rows(), cols = nodes_[x].value.cols();
    Node& n = push(Op::Tanh, rows, cols);
    n.a = x;
    n.requires_grad = nodes_[x].requires_grad;
    const double* xd = nodes_[x].value.data();
    double* od = n.value.data();
    parallel_ranges(rows * cols, [&](std::size_t e0, std::size_t e1) {
        for (std::size_t e = e0; e < e1; ++e) od[e] = std::tanh(xd[e]);
    });
    return static_cast<NodeId>(cursor_ - 1);
}

NodeId Tape::sigmoid_(NodeId x) {
    check_id(x, "sigmoid");
    const std::size_t rows = nodes_[x].value.rows(), cols = nodes_[x].value.cols();
    Node& n = push(Op::Sigmoid, rows, cols);
    n.a = x;
    n.requires_grad = nodes_[x].requires_grad;
    const double* xd = nodes_[x].value.data();
    double* od = n.value.data();
    for (std::size_t e = 0; e < rows * cols; ++e) {
        const double v = xd[e];
        if (v >= 0.0) {
            od[e] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double ev = std::exp(v);
            od[e] = ev / (1.0 + ev);
        }
    }
    return static_cast<NodeId>(cursor_ - 1);
}

NodeId Tape::add(NodeId a, NodeId b) {
    check_id(a, "add");
    check_id(b, "add");
    require_same_shape(nodes_[a].value, nodes_[b].value, "add");
    const std::size_t rows = nodes_[a].value.rows(), cols = nodes_[a].value.cols();
    Node& n = push(Op::Add, rows, cols);
    n.a = a;
    n.b = b;
    n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
    const double* ad = nodes_[a].value.data();
    const double* bd = nodes_[b].value.data();
    double* od = n.value.data();
    for (std::size_t e = 0; e < rows * cols; ++e) od[e] = ad[e] + bd[e];
    return static_cast<NodeId>(cursor_ - 1);
}

NodeId Tape::sub(NodeId a, NodeId b) {
    check_id(a, "sub");
    check_id(b, "sub");
    require_same_shape(nodes_[a].value, nodes_[b].value, "sub");
    const std::size_t rows = nodes_[a].value.rows(), cols = nodes_[a].value.cols();
    Node& n = push(Op::Sub, rows, cols);
    n.a = a;
    n.b = b;
    n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
    const double* ad = nodes_[a].value.data();
    const double* bd = nodes_[b].value.data();
    double* od = n.value.data();
    for (std::size_t e = 0; e < rows * cols; ++e) od[e] = ad[e] - bd[e];
    return static_cast<NodeId>(cursor_ - 1);
}

NodeId Tape::mul(NodeId a, NodeId b) {
    check_id(a, "mul");
    check_id(b, "mul");
    require_same_shape(nodes_[a].value, nodes_[b].value, "mul");
    const std::size_t rows = nodes_[a].value.rows(), cols = nodes_[a].value.cols();
    Node& n = push(Op::Mul, rows, cols);
    n.a = a;
    n.b = b;
    n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
    const double* ad = nodes_[a].value.data();
    const double* bd = nodes_[b].value.data();
    double* od = n.value.data();
    for (std::size_t e = 0; e < rows * cols; ++e) od[e] = ad[e] * bd[e];
    return static_cast<NodeId>(cursor_ - 1);
}

NodeId Tape::one_minus(NodeId x) {
    check_id(x, "one_minus");
    const std::size_t rows = nodes_[x].value.rows(), cols = nodes_[x].value.cols();
    Node& n = push(Op::OneMinus, rows, cols);
    n.a = x;
    n.requires_grad = nodes_[x].requires_grad;
    const double* xd = nodes_[x].value.data();
    double* od = n.value.data();
    for (std::size_t e = 0; e < rows * cols; ++e) od[e] = 1.0 - xd[e];
    return static_cast<NodeId>(cursor_ - 1);
}

NodeId Tape::scale(NodeId x, double c) {
    check_id(x, "scale");
    const std::size_t rows = nodes_[x].value.rows(), cols = nodes_[x].value.cols();
    Node& n = push(Op::Scale, rows, cols);
    n.a = x;
    n.s0 = c;
    n.requires_grad = nodes_[x].requires_grad;
    const double* xd = nodes_[x].value.data();
    double* od = n.value.data();
    for (std::size_t e = 0; e < rows * cols; ++e) od[e] = c * xd[e];
    return static_cast<NodeId>(cursor_ - 1);
}

NodeId Tape::concat_cols(NodeId a, NodeId b) {
    check_id(a, "concat_cols");
    check_id(b, "concat_cols");
    if (nodes_[a].value.rows() != nodes_[b].value.rows())
        throw ConfigError("concat_cols: row count mismatch");
    const std::size_t rows = nodes_[a].value.rows();
    const std::size_t ac = nodes_[a].value.cols(), bc = nodes_[b].value.cols();
    Node& n = push(Op::ConcatCols, rows, ac + bc);
    n.a = a;
    n.b = b;
    n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
    const double* ad = nodes_[a].value.data();
    const double* bd = nodes_[b].value.data();
    for (std::size_t r = 0; r < rows; ++r) {
        double* orow = n.value.data() + r * (ac + bc);
        std::memcpy(orow, ad + r * ac, ac * sizeof(double));
        std::memcpy(orow + ac, bd + r * bc, bc * sizeof(double));
    }
    return static_cast<NodeId>(cursor_ - 1);
}

NodeId Tape::sum_all(NodeId x) {
    check_id(x, "sum_all");
    const std::size_t count = nodes_[x].value.size();
    Node& n = push(Op::SumAll, 1, 1);
    n.a = x;
    n.requires_grad = nodes_[x].requires_grad;
    const double* xd = nodes_[x].value.data();
    double acc = 0.0;
    for (std::size_t e = 0; e < count; ++e) acc += xd[e];
    n.value(0, 0) = acc;
    return static_cast<NodeId>(cursor_ - 1);
}

NodeId Tape::sq_loss(NodeId pred, const Mat& target, const Mat& weights, double norm) {
    check_id(pred, "sq_loss");
    require_same_shape(nodes_[pred].value, target, "sq_loss target");
    require_same_shape(nodes_[pred].value, weights, "sq_loss weights");
    if (norm <= 0.0) throw ConfigError("sq_loss: normalizer must be positive");
    const std::size_t count = target.size();
    Node& n = push(Op::SqLoss, 1, 1);
    n.a = pred;
    n.s0 = norm;
    n.requires_grad = nodes_[pred].requires_grad;
    n.aux.ensure_shape(target.rows(), target.cols());
    std::memcpy(n.aux.data(), target.data(), count * sizeof(double));
    n.aux2.ensure_shape(weights.rows(), weights.cols());
    std::memcpy(n.aux2.data(), weights.data(), count * sizeof(double));
    const double* pd = nodes_[pred].value.data();
    const double* td = n.aux.data();
    const double* wd = n.aux2.data();
    double acc = 0.0;
    for (std::size_t e = 0; e < count; ++e) {
        const double d = pd[e] - td[e];
        acc += wd[e] * d * d;
    }
    n.value(0, 0) = acc / norm;
    return static_cast<NodeId>(cursor_ - 1);
}

NodeId Tape::pinball_loss(NodeId pred, const Mat& realized, double alpha, const Mat& weights,
                          double norm) {
    check_id(pred, "pinball_loss");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("pinball_loss: alpha must be in (0,1)");
    require_same_shape(nodes_[pred].value, realized, "pinball_loss realized");
    require_same_shape(nodes_[pred].value, weights, "pinball_loss weights");
    if (norm <= 0.0) throw ConfigError("pinball_loss: normalizer must be positive");
    const std::size_t count = realized.size();
    Node& n = push(Op::PinballLoss, 1, 1);
    n.a = pred;
    n.s0 = norm;
    n.s1 = alpha;
    n.requires_grad = nodes_[pred].requires_grad;
    n.aux.ensure_shape(realized.rows(), realized.cols());
    std::memcpy(n.aux.data(), realized.data(), count * sizeof(double));
    n.aux2.ensure_shape(weights.rows(), weights.cols());
    std::memcpy(n.aux2.data(), weights.data(), count * sizeof(double));
    const double* pd = nodes_[pred].value.data();
    const double* xd = n.aux.data();
    const double* wd = n.aux2.data();
    double acc = 0.0;
    for (std::size_t e = 0; e < count; ++e) {
        const double ind = (xd[e] >= pd[e]) ? 1.0 : 0.0;
        acc += wd[e] * (ind - (1.0 - alpha)) * (xd[e] - pd[e]);
    }
    n.value(0, 0) = acc / norm;
    return static_cast<NodeId>(cursor_ - 1);
}

void Tape::backward(NodeId loss) {
    check_id(loss, "backward");
    if (nodes_[loss].value.rows() != 1 || nodes_[loss].value.cols() != 1)
        throw UsageError("backward: loss must be a scalar (1x1) node");

    ++epoch_;
    if (grad_epoch_.size() < cursor_) grad_epoch_.resize(cursor_, 0);
    auto ensure_grad = [this](NodeId id) -> Mat& {
        Node& n = nodes_[id];
        if (grad_epoch_[id] != epoch_) {
            n.grad.ensure_shape(n.value.rows(), n.value.cols());
            n.grad.fill(0.0);
            grad_epoch_[id] = epoch_;
        }
        return n.grad;
    };

    ensure_grad(loss)(0, 0) = 1.0;

    for (NodeId idx = loss + 1; idx-- > 0;) {
        Node& n = nodes_[idx];
        if (grad_epoch_[idx] != epoch_) continue; // not reached from the loss
        if (!n.requires_grad) continue;
        const Mat& g = n.grad;
        switch (n.op) {
        case Op::Leaf:
            break;
        case Op::Affine: {
            Node& xn = nodes_[n.a];
            Node& wn = nodes_[n.b];
            const std::size_t rows = g.rows(), out = g.cols(), in = wn.value.cols();
            if (xn.requires_grad) {
                Mat& gx = ensure_grad(n.a);
                const double* gd = g.data();
                const double* wd = wn.value.data();
                double* gxd = gx.data();
                parallel_ranges(rows, [&](std::size_t r0, std::size_t r1) {
                    for (std::size_t r = r0; r < r1; ++r) {
                        const double* grow = gd + r * out;
                        double* gxr = gxd + r * in;
                        for (std::size_t o = 0; o < out; ++o) {
                            const double go = grow[o];
                            const double* wr = wd + o * in;
                            for (std::size_t i = 0; i < in; ++i) gxr[i] += go * wr[i];
                        }
                    }
                });
            }
            if (wn.requires_grad) {
                Mat& gw = ensure_grad(n.b);
                // Ordered chunked reduction: fixed chunk boundaries and a
                // sequential combine keep results identical for any worker
                // count.
                const std::size_t chunks = std::min<std::size_t>(kReduceChunks, rows ? rows : 1);
                const std::size_t per = (rows + chunks - 1) / chunks;
                scratch_.assign(chunks * out * in, 0.0);
                const double* gd = g.data();
                const double* xd = xn.value.data();
                double* partial = scratch_.data();
                parallel_for(chunks, [&](std::size_t cidx) {
                    double* p = partial + cidx * out * in;
                    const std::size_t r0 = cidx * per, r1 = std::min(rows, r0 + per);
                    for (std::size_t r = r0; r < r1; ++r) {
                        const double* grow = gd + r * out;
                        const double* xr = xd + r * in;
                        for (std::size_t o = 0; o < out; ++o) {
                            const double go = grow[o];
                            double* prow = p + o * in;
                            for (std::size_t i = 0; i < in; ++i) prow[i] += go * xr[i];
                        }
                    }
                });
                double* gwd = gw.data();
                for (std::size_t cidx = 0; cidx < chunks; ++cidx) {
                    const double* p = partial + cidx * out * in;
                    for (std::size_t e = 0; e < out * in; ++e) gwd[e] += p[e];
                }
            }
            if (n.c != kNoNode && nodes_[n.c].requires_grad) {
                Mat& gb = ensure_grad(n.c);
                const double* gd = g.data();
                double* gbd = gb.data();
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* grow = gd + r * out;
                    for (std::size_t o = 0; o < out; ++o) gbd[o] += grow[o];
                }
            }
            break;
        }
        case Op::Tanh: {
            if (!nodes_[n.a].requires_grad) break;
            Mat& gx = ensure_grad(n.a);
            const double* gd = g.data();
            const double* yd = n.value.data();
            double* gxd = gx.data();
            parallel_ranges(g.size(), [&](std::size_t e0, std::size_t e1) {
                for (std::size_t e = e0; e < e1; ++e) gxd[e] += gd[e] * (1.0 - yd[e] * yd[e]);
            });
            break;
        }
        case Op::Sigmoid: {
            if (!nodes_[n.a].requires_grad) break;
            Mat& gx = ensure_grad(n.a);
            const double* gd = g.data();
            const double* yd = n.value.data();
            double* gxd = gx.data();
            for (std::size_t e = 0; e < g.size(); ++e) gxd[e] += gd[e] * yd[e] * (1.0 - yd[e]);
            break;
        }
        case Op::Add: {
            for (NodeId in : {n.a, n.b}) {
                if (!nodes_[in].requires_grad) continue;
                Mat& gi = ensure_grad(in);
                const double* gd = g.data();
                double* gid = gi.data();
                for (std::size_t e = 0; e < g.size(); ++e) gid[e] += gd[e];
            }
            break;
        }
        case Op::Sub: {
            if (nodes_[n.a].requires_grad) {
                Mat& ga = ensure_grad(n.a);
                const double* gd = g.data();
                double* gad = ga.data();
                for (std::size_t e = 0; e < g.size(); ++e) gad[e] += gd[e];
            }
            if (nodes_[n.b].requires_grad) {
                Mat& gb = ensure_grad(n.b);
                const double* gd = g.data();
                double* gbd = gb.data();
                for (std::size_t e = 0; e < g.size(); ++e) gbd[e] -= gd[e];
            }
            break;
        }
        case Op::Mul: {
            if (nodes_[n.a].requires_grad) {
                Mat& ga = ensure_grad(n.a);
                const double* gd = g.data();
                const double* bd = nodes_[n.b].value.data();
                double* gad = ga.data();
                for (std::size_t e = 0; e < g.size(); ++e) gad[e] += gd[e] * bd[e];
            }
            if (nodes_[n.b].requires_grad) {
                Mat& gb = ensure_grad(n.b);
                const double* gd = g.data();
                const double* ad = nodes_[n.a].value.data();
                double* gbd = gb.data();
                for (std::size_t e = 0; e < g.size(); ++e) gbd[e] += gd[e] * ad[e];
            }
            break;
        }
        case Op::OneMinus: {
            if (!nodes_[n.a].requires_grad) break;
            Mat& gx = ensure_grad(n.a);
            const double* gd = g.data();
            double* gxd = gx.data();
            for (std::size_t e = 0; e < g.size(); ++e) gxd[e] -= gd[e];
            break;
        }
        case Op::Scale: {
            if (!nodes_[n.a].requires_grad) break;
            Mat& gx = ensure_grad(n.a);
            const double* gd = g.data();
            double* gxd = gx.data();
            for (std::size_t e = 0; e < g.size(); ++e) gxd[e] += n.s0 * gd[e];
            break;
        }
        case Op::ConcatCols: {
            const std::size_t ac = nodes_[n.a].value.cols();
            const std::size_t bc = nodes_[n.b].value.cols();
            if (nodes_[n.a].requires_grad) {
                Mat& ga = ensure_grad(n.a);
                for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = 0; c < ac; ++c) ga(r, c) += g(r, c);
            }
            if (nodes_[n.b].requires_grad) {
                Mat& gb = ensure_grad(n.b);
                for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = 0; c < bc; ++c) gb(r, c) += g(r, ac + c);
            }
            break;
        }
        case Op::SumAll: {
            if (!nodes_[n.a].requires_grad) break;
            Mat& gx = ensure_grad(n.a);
            const double gbar = g(0, 0);
            double* gxd = gx.data();
            for (std::size_t e = 0; e < gx.size(); ++e) gxd[e] += gbar;
            break;
        }
        case Op::SqLoss: {
            if (!nodes_[n.a].requires_grad) break;
            Mat& gp = ensure_grad(n.a);
            const double gbar = g(0, 0) / n.s0;
            const double* pd = nodes_[n.a].value.data();
            const double* td = n.aux.data();
            const double* wd = n.aux2.data();
            double* gpd = gp.data();
            parallel_ranges(gp.size(), [&](std::size_t e0, std::size_t e1) {
                for (std::size_t e = e0; e < e1; ++e)
                    gpd[e] += gbar * 2.0 * wd[e] * (pd[e] - td[e]);
            });
            break;
        }
        case Op::PinballLoss: {
            if (!nodes_[n.a].requires_grad) break;
            Mat& gp = ensure_grad(n.a);
            const double gbar = g(0, 0) / n.s0;
            const double alpha = n.s1;
            const double* pd = nodes_[n.a].value.data();
            const double* xd = n.aux.data();
            const double* wd = n.aux2.data();
            double* gpd = gp.data();
            // One-sided subgradient at the kink; elsewhere exact:
            // d/ds (1_{x>=s} - (1-alpha))(x - s) = (1-alpha) - 1_{x>=s}.
            for (std::size_t e = 0; e < gp.size(); ++e) {
                const double ind = (xd[e] >= pd[e]) ? 1.0 : 0.0;
                gpd[e] += gbar * wd[e] * ((1.0 - alpha) - ind);
            }
            break;
        }
        }
    }
}

} // namespace mvfbsde::ad
