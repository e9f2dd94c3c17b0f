#include "vvpit/autodiff.hpp"

#include <cmath>
#include <limits>

#include "vvpit/errors.hpp"
#include "vvpit/ops.hpp"
#include "vvpit/xcorr.hpp"

namespace vvpit {

namespace {

bool any_tracked(std::initializer_list<const Var*> vars) {
    for (const Var* v : vars)
        if (v->node >= 0) return true;
    return false;
}

// Gradients of the penalized patch correlation w.r.t. all four inputs.
// Gather form: every output cell is written by exactly one iteration.
void xcorr_pen_backward(const Tensor& gout, const Tensor& ms_t, const Tensor& mt_t, const Tensor& ns_t,
                        const Tensor& nt_t, Tensor& gms, Tensor& gmt, Tensor& gns, Tensor& gnt) {
    const int C = ms_t.dim(0), Hs = ms_t.dim(1), Ws = ms_t.dim(2);
    const int Ht = mt_t.dim(1), Wt = mt_t.dim(2);
    const int Ho = Hs - Ht + 1, Wo = Ws - Wt + 1;
    const double* g = gout.data();
    const double* ms = ms_t.data();
    const double* mt = mt_t.data();
    const double* ns = ns_t.data();
    const double* nt = nt_t.data();

    gms = Tensor(ms_t.shape());
    gns = Tensor(ns_t.shape());
    double* pms = gms.data();
    double* pns = gns.data();
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        const std::size_t s_ch = static_cast<std::size_t>(c) * Hs * Ws;
        const std::size_t t_ch = static_cast<std::size_t>(c) * Ht * Wt;
        for (int y = 0; y < Hs; ++y) {
            for (int x = 0; x < Ws; ++x) {
                const std::size_t si = s_ch + static_cast<std::size_t>(y) * Ws + x;
                double am = 0.0, an = 0.0;
                const int ilo = std::max(0, y - Ho + 1), ihi = std::min(Ht - 1, y);
                const int jlo = std::max(0, x - Wo + 1), jhi = std::min(Wt - 1, x);
                for (int i = ilo; i <= ihi; ++i) {
                    const int py = y - i;
                    for (int j = jlo; j <= jhi; ++j) {
                        const int px = x - j;
                        const double go = g[static_cast<std::size_t>(py) * Wo + px];
                        const std::size_t ti = t_ch + static_cast<std::size_t>(i) * Wt + j;
                        const double den = ns[si] + nt[ti];
                        am += go * 2.0 * mt[ti] / den;
                        an -= go * 2.0 * ms[si] * mt[ti] / (den * den);
                    }
                }
                pms[si] = am;
                pns[si] = an;
            }
        }
    }

    gmt = Tensor(mt_t.shape());
    gnt = Tensor(nt_t.shape());
    double* pmt = gmt.data();
    double* pnt = gnt.data();
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        const std::size_t s_ch = static_cast<std::size_t>(c) * Hs * Ws;
        const std::size_t t_ch = static_cast<std::size_t>(c) * Ht * Wt;
        for (int i = 0; i < Ht; ++i) {
            for (int j = 0; j < Wt; ++j) {
                const std::size_t ti = t_ch + static_cast<std::size_t>(i) * Wt + j;
                double am = 0.0, an = 0.0;
                for (int py = 0; py < Ho; ++py) {
                    const std::size_t s_row = s_ch + static_cast<std::size_t>(py + i) * Ws + j;
                    const double* g_row = g + static_cast<std::size_t>(py) * Wo;
                    for (int px = 0; px < Wo; ++px) {
                        const double den = ns[s_row + px] + nt[ti];
                        am += g_row[px] * 2.0 * ms[s_row + px] / den;
                        an -= g_row[px] * 2.0 * ms[s_row + px] * mt[ti] / (den * den);
                    }
                }
                pmt[ti] = am;
                pnt[ti] = an;
            }
        }
    }
}

}  // namespace

Var GradTape::record(Tensor value, BackFn fn) {
    if (!enabled_) return Var{std::move(value), -1};
    Node n;
    n.back = std::move(fn);
    n.shape = value.shape();
    nodes_.push_back(std::move(n));
    return Var{std::move(value), static_cast<int>(nodes_.size()) - 1};
}

void GradTape::accumulate(std::vector<Tensor>& grads, int node, const Tensor& g) {
    if (node < 0) return;
    Tensor& slot = grads[static_cast<std::size_t>(node)];
    if (slot.size() == 0)
        slot = g;
    else
        for (std::size_t i = 0; i < slot.size(); ++i) slot[i] += g[i];
}

Var GradTape::leaf(Tensor v) {
    return record(std::move(v), [](const Tensor&, std::vector<Tensor>&) {});
}

Var GradTape::param(const std::string& name, Tensor v) {
    Var out = leaf(std::move(v));
    if (out.node >= 0) nodes_[static_cast<std::size_t>(out.node)].param_name = name;
    return out;
}

Var GradTape::conv2d(const Var& x, const Var& k, int stride, int padding) {
    Tensor value = vvpit::conv2d(x.value, k.value, stride, padding);
    if (!enabled_ || !any_tracked({&x, &k})) return Var{std::move(value), -1};
    const int xn = x.node, kn = k.node;
    Tensor xv = x.value, kv = k.value;
    return record(std::move(value), [xn, kn, xv, kv, stride, padding](const Tensor& g, std::vector<Tensor>& grads) {
        if (xn >= 0) accumulate(grads, xn, conv2d_grad_input(g, kv, stride, padding, xv.shape()));
        if (kn >= 0) accumulate(grads, kn, conv2d_grad_kernel(g, xv, stride, padding, kv.shape()));
    });
}

Var GradTape::add_bias(const Var& x, const Var& b) {
    Tensor value = add_channel_bias(x.value, b.value);
    if (!enabled_ || !any_tracked({&x, &b})) return Var{std::move(value), -1};
    const int xn = x.node, bn = b.node;
    return record(std::move(value), [xn, bn](const Tensor& g, std::vector<Tensor>& grads) {
        if (xn >= 0) accumulate(grads, xn, g);
        if (bn >= 0) accumulate(grads, bn, channel_bias_grad(g));
    });
}

namespace {

// Reduces an elementwise gradient onto a broadcast one-element operand.
Tensor fold_scalar(const Tensor& g) {
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) acc += g[i];
    return Tensor::scalar(acc);
}

}  // namespace

Var GradTape::add(const Var& a, const Var& b) {
    Tensor value = vvpit::add(a.value, b.value);
    if (!enabled_ || !any_tracked({&a, &b})) return Var{std::move(value), -1};
    const int an = a.node, bn = b.node;
    const bool scalar_b = b.value.size() == 1 && a.value.size() != 1;
    return record(std::move(value), [an, bn, scalar_b](const Tensor& g, std::vector<Tensor>& grads) {
        if (an >= 0) accumulate(grads, an, g);
        if (bn >= 0) accumulate(grads, bn, scalar_b ? fold_scalar(g) : g);
    });
}

Var GradTape::sub(const Var& a, const Var& b) {
    Tensor value = vvpit::sub(a.value, b.value);
    if (!enabled_ || !any_tracked({&a, &b})) return Var{std::move(value), -1};
    const int an = a.node, bn = b.node;
    const bool scalar_b = b.value.size() == 1 && a.value.size() != 1;
    return record(std::move(value), [an, bn, scalar_b](const Tensor& g, std::vector<Tensor>& grads) {
        if (an >= 0) accumulate(grads, an, g);
        if (bn >= 0) {
            Tensor neg = vvpit::scale(g, -1.0);
            accumulate(grads, bn, scalar_b ? fold_scalar(neg) : neg);
        }
    });
}

Var GradTape::mul(const Var& a, const Var& b) {
    Tensor value = vvpit::mul(a.value, b.value);
    if (!enabled_ || !any_tracked({&a, &b})) return Var{std::move(value), -1};
    const int an = a.node, bn = b.node;
    Tensor av = a.value, bv = b.value;
    const bool scalar_b = b.value.size() == 1 && a.value.size() != 1;
    return record(std::move(value), [an, bn, av, bv, scalar_b](const Tensor& g, std::vector<Tensor>& grads) {
        if (an >= 0) accumulate(grads, an, vvpit::mul(g, bv));
        if (bn >= 0) {
            Tensor gb = vvpit::mul(g, av);
            accumulate(grads, bn, scalar_b ? fold_scalar(gb) : gb);
        }
    });
}

Var GradTape::div(const Var& a, const Var& b) {
    Tensor value = vvpit::div(a.value, b.value);
    if (!enabled_ || !any_tracked({&a, &b})) return Var{std::move(value), -1};
    const int an = a.node, bn = b.node;
    Tensor av = a.value, bv = b.value;
    const bool scalar_b = b.value.size() == 1 && a.value.size() != 1;
    return record(std::move(value), [an, bn, av, bv, scalar_b](const Tensor& g, std::vector<Tensor>& grads) {
        if (an >= 0) accumulate(grads, an, vvpit::div(g, bv));
        if (bn >= 0) {
            Tensor gb(av.shape().empty() ? std::vector<int>{} : av.shape());
            if (av.shape().empty()) gb = Tensor::scalar(0.0);
            for (std::size_t i = 0; i < av.size(); ++i) {
                const double be = bv[bv.size() == 1 ? 0 : i];
                gb[i] = -g[i] * av[i] / (be * be);
            }
            accumulate(grads, bn, scalar_b ? fold_scalar(gb) : gb);
        }
    });
}

Var GradTape::emax(const Var& a, const Var& b) {
    Tensor value = vvpit::emax(a.value, b.value);
    if (!enabled_ || !any_tracked({&a, &b})) return Var{std::move(value), -1};
    const int an = a.node, bn = b.node;
    Tensor av = a.value, bv = b.value;
    const bool scalar_b = b.value.size() == 1 && a.value.size() != 1;
    return record(std::move(value), [an, bn, av, bv, scalar_b](const Tensor& g, std::vector<Tensor>& grads) {
        // ties route to a, matching the forward pick
        if (an >= 0) {
            Tensor ga = g;
            for (std::size_t i = 0; i < ga.size(); ++i)
                if (av[i] < bv[scalar_b ? 0 : i]) ga[i] = 0.0;
            accumulate(grads, an, ga);
        }
        if (bn >= 0) {
            Tensor gb = g;
            for (std::size_t i = 0; i < gb.size(); ++i)
                if (av[i] >= bv[scalar_b ? 0 : i]) gb[i] = 0.0;
            accumulate(grads, bn, scalar_b ? fold_scalar(gb) : gb);
        }
    });
}

Var GradTape::scale(const Var& a, double c) {
    Tensor value = vvpit::scale(a.value, c);
    if (!enabled_ || a.node < 0) return Var{std::move(value), -1};
    const int an = a.node;
    return record(std::move(value), [an, c](const Tensor& g, std::vector<Tensor>& grads) {
        accumulate(grads, an, vvpit::scale(g, c));
    });
}

Var GradTape::leaky_relu(const Var& x, double slope) {
    Tensor value = vvpit::leaky_relu(x.value, slope);
    if (!enabled_ || x.node < 0) return Var{std::move(value), -1};
    const int xn = x.node;
    Tensor xv = x.value;
    return record(std::move(value), [xn, xv, slope](const Tensor& g, std::vector<Tensor>& grads) {
        accumulate(grads, xn, leaky_relu_grad(g, xv, slope));
    });
}

Var GradTape::softplus(const Var& x) {
    Tensor value = vvpit::softplus(x.value);
    if (!enabled_ || x.node < 0) return Var{std::move(value), -1};
    const int xn = x.node;
    Tensor xv = x.value;
    return record(std::move(value), [xn, xv](const Tensor& g, std::vector<Tensor>& grads) {
        accumulate(grads, xn, softplus_grad(g, xv));
    });
}

Var GradTape::reduce(ReduceOp op, const Var& x, const std::vector<int>& axes) {
    Tensor value = vvpit::reduce(op, x.value, axes);
    if (!enabled_ || x.node < 0) return Var{std::move(value), -1};
    const int xn = x.node;
    Tensor xv = x.value;
    return record(std::move(value), [xn, xv, op, axes](const Tensor& g, std::vector<Tensor>& grads) {
        const int r = xv.rank();
        std::vector<bool> reduced(static_cast<std::size_t>(r), false);
        for (int ax : axes) reduced[static_cast<std::size_t>(ax)] = true;
        std::size_t out_count = g.size();
        const double count = static_cast<double>(xv.size() / out_count);

        Tensor gin(xv.shape());
        std::vector<int> idx(static_cast<std::size_t>(r), 0);
        if (op == ReduceOp::sum || op == ReduceOp::mean) {
            for (std::size_t flat = 0; flat < xv.size(); ++flat) {
                std::size_t out_flat = 0;
                for (int ax = 0; ax < r; ++ax)
                    if (!reduced[static_cast<std::size_t>(ax)])
                        out_flat = out_flat * static_cast<std::size_t>(xv.dim(ax)) +
                                   static_cast<std::size_t>(idx[static_cast<std::size_t>(ax)]);
                gin[flat] = op == ReduceOp::sum ? g[out_flat] : g[out_flat] / count;
                for (int ax = r - 1; ax >= 0; --ax) {
                    if (++idx[static_cast<std::size_t>(ax)] < xv.dim(ax)) break;
                    idx[static_cast<std::size_t>(ax)] = 0;
                }
            }
        } else {
            // min/max subgradient: route to the first extremal element of each
            // group in row-major order, matching the forward fold.
            std::vector<std::size_t> arg(out_count, 0);
            std::vector<double> best(out_count, op == ReduceOp::min ? std::numeric_limits<double>::infinity()
                                                                    : -std::numeric_limits<double>::infinity());
            for (std::size_t flat = 0; flat < xv.size(); ++flat) {
                std::size_t out_flat = 0;
                for (int ax = 0; ax < r; ++ax)
                    if (!reduced[static_cast<std::size_t>(ax)])
                        out_flat = out_flat * static_cast<std::size_t>(xv.dim(ax)) +
                                   static_cast<std::size_t>(idx[static_cast<std::size_t>(ax)]);
                const double v = xv[flat];
                if ((op == ReduceOp::min && v < best[out_flat]) || (op == ReduceOp::max && v > best[out_flat])) {
                    best[out_flat] = v;
                    arg[out_flat] = flat;
                }
                for (int ax = r - 1; ax >= 0; --ax) {
                    if (++idx[static_cast<std::size_t>(ax)] < xv.dim(ax)) break;
                    idx[static_cast<std::size_t>(ax)] = 0;
                }
            }
            for (std::size_t o = 0; o < out_count; ++o) gin[arg[o]] += g[o];
        }
        accumulate(grads, xn, gin);
    });
}

Var GradTape::reshape(const Var& x, std::vector<int> new_shape) {
    Tensor value(new_shape, x.value.values());
    if (!enabled_ || x.node < 0) return Var{std::move(value), -1};
    const int xn = x.node;
    std::vector<int> old_shape = x.value.shape();
    return record(std::move(value), [xn, old_shape](const Tensor& g, std::vector<Tensor>& grads) {
        accumulate(grads, xn, Tensor(old_shape, g.values()));
    });
}

Var GradTape::normalize_variance(const Var& v, double rho) {
    Tensor value = vvpit::normalize_variance(v.value, rho);
    if (!enabled_ || v.node < 0) return Var{std::move(value), -1};
    const int vn = v.node;
    Tensor vv = v.value;
    return record(std::move(value), [vn, vv, rho](const Tensor& g, std::vector<Tensor>& grads) {
        const int C = vv.dim(0);
        const std::size_t hw = static_cast<std::size_t>(vv.dim(1)) * vv.dim(2);
        Tensor gv(vv.shape());
        for (int c = 0; c < C; ++c) {
            const double* ch = vv.data() + c * hw;
            const double* gch = g.data() + c * hw;
            double* out = gv.data() + c * hw;
            std::size_t alo = 0, ahi = 0;
            double lo = ch[0], hi = ch[0];
            for (std::size_t i = 1; i < hw; ++i) {
                if (ch[i] < lo) { lo = ch[i]; alo = i; }
                if (ch[i] > hi) { hi = ch[i]; ahi = i; }
            }
            if (hi - lo <= 1e-30) continue;  // degenerate channel: constant output, zero grad
            const double span = hi - lo;
            const double r = (rho - 1.0) / span;
            double s_lo = 0.0, s_hi = 0.0;
            for (std::size_t i = 0; i < hw; ++i) {
                out[i] = gch[i] * r;
                s_lo += gch[i] * (rho - 1.0) * (ch[i] - hi) / (span * span);
                s_hi -= gch[i] * (rho - 1.0) * (ch[i] - lo) / (span * span);
            }
            out[alo] += s_lo;
            out[ahi] += s_hi;
        }
        accumulate(grads, vn, gv);
    });
}

Var GradTape::xcorr_pen(const Var& ms, const Var& mt, const Var& vns, const Var& vnt) {
    Tensor value = xcorr_pen_core(ms.value, mt.value, vns.value, vnt.value);
    if (!enabled_ || !any_tracked({&ms, &mt, &vns, &vnt})) return Var{std::move(value), -1};
    const int msn = ms.node, mtn = mt.node, nsn = vns.node, ntn = vnt.node;
    Tensor msv = ms.value, mtv = mt.value, nsv = vns.value, ntv = vnt.value;
    return record(std::move(value), [=](const Tensor& g, std::vector<Tensor>& grads) {
        Tensor gms, gmt, gns, gnt;
        xcorr_pen_backward(g, msv, mtv, nsv, ntv, gms, gmt, gns, gnt);
        if (msn >= 0) accumulate(grads, msn, gms);
        if (mtn >= 0) accumulate(grads, mtn, gmt);
        if (nsn >= 0) accumulate(grads, nsn, gns);
        if (ntn >= 0) accumulate(grads, ntn, gnt);
    });
}

Var GradTape::bce_with_logits(const Var& logits, const Tensor& label, double pos_weight, double neg_weight) {
    if (!logits.value.same_shape(label))
        throw DataError("bce_with_logits shape mismatch: " + logits.value.shape_str() + " vs " +
                        shape_to_string(label.shape()));
    if (pos_weight <= 0.0 || neg_weight <= 0.0) throw ConfigError("bce_with_logits weights must be positive");
    const std::size_t n = label.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = logits.value[i], y = label[i];
        acc += pos_weight * y * softplus_scalar(-x) + neg_weight * (1.0 - y) * softplus_scalar(x);
    }
    Tensor value = Tensor::scalar(acc / static_cast<double>(n));
    if (!enabled_ || logits.node < 0) return Var{std::move(value), -1};
    const int xn = logits.node;
    Tensor xv = logits.value, yv = label;
    return record(std::move(value), [xn, xv, yv, pos_weight, neg_weight](const Tensor& g, std::vector<Tensor>& grads) {
        const double go = g[0];
        const std::size_t n = yv.size();
        Tensor gx(xv.shape());
        for (std::size_t i = 0; i < n; ++i) {
            const double x = xv[i], y = yv[i];
            gx[i] = go * (-pos_weight * y * sigmoid_scalar(-x) + neg_weight * (1.0 - y) * sigmoid_scalar(x)) /
                    static_cast<double>(n);
        }
        accumulate(grads, xn, gx);
    });
}

std::map<std::string, Tensor> GradTape::backward(const Var& loss) {
    if (nodes_.empty()) throw DataError("backward on an empty tape");
    if (loss.value.size() != 1) throw DataError("backward loss must be scalar, got shape " + loss.value.shape_str());
    if (loss.node < 0) throw DataError("backward loss was not recorded on this tape");

    std::vector<Tensor> grads(nodes_.size());
    grads[static_cast<std::size_t>(loss.node)] = Tensor::scalar(1.0);
    for (int i = loss.node; i >= 0; --i) {
        const Tensor& g = grads[static_cast<std::size_t>(i)];
        if (g.size() == 0) continue;
        nodes_[static_cast<std::size_t>(i)].back(g, grads);
    }

    std::map<std::string, Tensor> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].param_name.empty()) continue;
        Tensor& g = grads[i];
        out[nodes_[i].param_name] = g.size() != 0 ? g : Tensor(nodes_[i].shape);
    }
    last_grads_ = std::move(grads);
    return out;
}

Tensor GradTape::grad(const Var& v) const {
    if (v.node < 0 || static_cast<std::size_t>(v.node) >= last_grads_.size())
        throw DataError("grad() requires a recorded Var and a completed backward pass");
    const Tensor& g = last_grads_[static_cast<std::size_t>(v.node)];
    if (g.size() != 0) return g;
    return Tensor(nodes_[static_cast<std::size_t>(v.node)].shape);
}

}  // namespace vvpit
