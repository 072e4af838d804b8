#include "spde/policy.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace spde {

std::string to_string(Arch arch) { return arch == Arch::Mlp ? "mlp" : "cnn"; }

Arch arch_from_string(const std::string& s) {
    if (s == "mlp") return Arch::Mlp;
    if (s == "cnn") return Arch::Cnn;
    throw std::invalid_argument("unknown policy arch: " + s);
}

const TensorSlot& PolicyParams::slot(const std::string& name) const {
    for (const auto& s : slots)
        if (s.name == name) return s;
    throw std::invalid_argument("no such tensor: " + name);
}

CnnDims cnn_dims(int J) {
    CnnDims d;
    d.conv1_out = (J - kConv1Kernel) / 2 + 1;
    if (d.conv1_out < 2) throw std::invalid_argument("CNN input too small");
    d.pool1_out = d.conv1_out / 2;
    d.conv2_out = d.pool1_out;
    d.pool2_out = d.conv2_out / 2;
    if (d.pool2_out < 1) throw std::invalid_argument("CNN input too small");
    d.flat = d.pool2_out * d.pool2_out * kConv2Filters;
    return d;
}

PolicyParams make_policy(Arch arch, int input_points, int input_dim, int outputs) {
    if (outputs < 1) throw std::invalid_argument("policy needs at least one output");
    PolicyParams p;
    p.arch = arch;
    p.input_points = input_points;
    p.input_dim = input_dim;
    p.outputs = outputs;
    int offset = 0;
    auto add = [&](const std::string& name, int rows, int cols) {
        p.slots.push_back({name, rows, cols, offset});
        offset += rows * cols;
    };
    if (arch == Arch::Mlp) {
        if (input_dim != 1) throw std::invalid_argument("MLP policy expects 1D fields");
        add("W1", kMlpHidden, p.input_size());
        add("b1", kMlpHidden, 1);
        add("W2", kMlpHidden, kMlpHidden);
        add("b2", kMlpHidden, 1);
        add("W3", outputs, kMlpHidden);
        add("b3", outputs, 1);
    } else {
        if (input_dim != 2) throw std::invalid_argument("CNN policy expects 2D fields");
        const CnnDims d = cnn_dims(input_points);
        add("conv1_w", kConv1Filters, kConv1Kernel * kConv1Kernel);
        add("conv1_b", kConv1Filters, 1);
        add("conv2_w", kConv2Filters, kConv1Filters * kConv2Kernel * kConv2Kernel);
        add("conv2_b", kConv2Filters, 1);
        add("dense_w", outputs, d.flat);
        add("dense_b", outputs, 1);
    }
    p.theta = Eigen::VectorXd::Zero(offset);
    return p;
}

PolicyParams init_params(Arch arch, int input_points, int input_dim, int outputs,
                         std::mt19937_64& rng, InitScheme scheme, double gain) {
    PolicyParams p = make_policy(arch, input_points, input_dim, outputs);
    if (scheme == InitScheme::Zero) return p;
    std::normal_distribution<double> n01(0.0, 1.0);
    for (const auto& s : p.slots) {
        if (s.name[0] == 'b' || s.name.find("_b") != std::string::npos) continue;
        const double fan_in = static_cast<double>(s.cols);
        const double scale = gain * std::sqrt(2.0 / fan_in);
        for (int i = 0; i < s.size(); ++i) p.theta[s.offset + i] = scale * n01(rng);
    }
    return p;
}

namespace {

// channel-major flat index into an H x H feature map stack
inline int fm(int ch, int r, int c, int H) { return ch * H * H + r * H + c; }

void maxpool(const Eigen::VectorXd& in, int channels, int H, Eigen::VectorXd& out,
             std::vector<int>& argmax) {
    const int P = H / 2;
    out.resize(channels * P * P);
    argmax.assign(channels * P * P, 0);
    for (int ch = 0; ch < channels; ++ch)
        for (int r = 0; r < P; ++r)
            for (int c = 0; c < P; ++c) {
                int best = fm(ch, 2 * r, 2 * c, H);
                double val = in[best];
                for (int kr = 0; kr < 2; ++kr)
                    for (int kc = 0; kc < 2; ++kc) {
                        const int idx = fm(ch, 2 * r + kr, 2 * c + kc, H);
                        if (in[idx] > val) {
                            val = in[idx];
                            best = idx;
                        }
                    }
                const int o = fm(ch, r, c, P);
                out[o] = val;
                argmax[o] = best;
            }
}

// conv1 pre-activation (valid, stride 2) of a dense input image
Eigen::VectorXd conv1_pre(const PolicyParams& p, const Eigen::VectorXd& x) {
    const int J = p.input_points;
    const CnnDims d = cnn_dims(J);
    const auto W = p.tensor(p.slot("conv1_w"));
    const auto b = p.tensor(p.slot("conv1_b"));
    Eigen::VectorXd pre(kConv1Filters * d.conv1_out * d.conv1_out);
    for (int f = 0; f < kConv1Filters; ++f)
        for (int r = 0; r < d.conv1_out; ++r)
            for (int c = 0; c < d.conv1_out; ++c) {
                double acc = b(f, 0);
                for (int kr = 0; kr < kConv1Kernel; ++kr)
                    for (int kc = 0; kc < kConv1Kernel; ++kc)
                        acc += W(f, kr * kConv1Kernel + kc) *
                               x[(2 * r + kr) * J + (2 * c + kc)];
                pre[fm(f, r, c, d.conv1_out)] = acc;
            }
    return pre;
}

// everything after the first convolution; records the tape when given
Eigen::VectorXd cnn_tail(const PolicyParams& p, const Eigen::VectorXd& pre1,
                         GradientTape* tape) {
    const CnnDims d = cnn_dims(p.input_points);
    Eigen::VectorXd act1 = pre1.cwiseMax(0.0);

    Eigen::VectorXd pool1;
    std::vector<int> arg1;
    maxpool(act1, kConv1Filters, d.conv1_out, pool1, arg1);

    // conv2: 2x2, stride 1, same padding (zeros on the high side)
    const auto W2 = p.tensor(p.slot("conv2_w"));
    const auto b2 = p.tensor(p.slot("conv2_b"));
    const int H = d.pool1_out;
    Eigen::VectorXd act2(kConv2Filters * H * H);
    for (int f = 0; f < kConv2Filters; ++f)
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < H; ++c) {
                double acc = b2(f, 0);
                for (int ic = 0; ic < kConv1Filters; ++ic)
                    for (int kr = 0; kr < kConv2Kernel; ++kr)
                        for (int kc = 0; kc < kConv2Kernel; ++kc) {
                            const int rr = r + kr, cc = c + kc;
                            if (rr >= H || cc >= H) continue;
                            acc += W2(f, (ic * kConv2Kernel + kr) * kConv2Kernel + kc) *
                                   pool1[fm(ic, rr, cc, H)];
                        }
                act2[fm(f, r, c, H)] = acc > 0 ? acc : 0.0;
            }

    Eigen::VectorXd pool2;
    std::vector<int> arg2;
    maxpool(act2, kConv2Filters, H, pool2, arg2);

    const auto Wd = p.tensor(p.slot("dense_w"));
    const auto bd = p.tensor(p.slot("dense_b"));
    Eigen::VectorXd out = Wd * pool2 + bd.col(0);

    if (tape) {
        tape->conv1_act = std::move(act1);
        tape->pool1 = std::move(pool1);
        tape->pool1_argmax = std::move(arg1);
        tape->conv2_act = std::move(act2);
        tape->pool2 = std::move(pool2);
        tape->pool2_argmax = std::move(arg2);
    }
    return out;
}

Eigen::VectorXd mlp_tail(const PolicyParams& p, const Eigen::VectorXd& z1,
                         GradientTape* tape) {
    Eigen::VectorXd h1 = z1.cwiseMax(0.0);
    Eigen::VectorXd h2 =
        (p.tensor(p.slot("W2")) * h1 + p.tensor(p.slot("b2")).col(0)).cwiseMax(0.0);
    Eigen::VectorXd out = p.tensor(p.slot("W3")) * h2 + p.tensor(p.slot("b3")).col(0);
    if (tape) {
        tape->h1 = std::move(h1);
        tape->h2 = std::move(h2);
    }
    return out;
}

} // namespace

Eigen::VectorXd forward(const PolicyParams& params, const Eigen::VectorXd& x,
                        GradientTape* tape) {
    if (x.size() != params.input_size())
        throw std::invalid_argument("policy forward: input size mismatch");
    if (tape) tape->input = x;
    if (params.arch == Arch::Mlp) {
        Eigen::VectorXd z1 =
            params.tensor(params.slot("W1")) * x + params.tensor(params.slot("b1")).col(0);
        return mlp_tail(params, z1, tape);
    }
    return cnn_tail(params, conv1_pre(params, x), tape);
}

void backward(const PolicyParams& params, const GradientTape& tape,
              const Eigen::VectorXd& cotangent, Eigen::VectorXd& grad) {
    if (grad.size() != params.theta.size())
        throw std::invalid_argument("backward: gradient buffer size mismatch");
    auto gmap = [&](const char* name) {
        const TensorSlot& s = params.slot(name);
        return Eigen::Map<Eigen::MatrixXd>(grad.data() + s.offset, s.rows, s.cols);
    };
    if (params.arch == Arch::Mlp) {
        gmap("W3") += cotangent * tape.h2.transpose();
        gmap("b3").col(0) += cotangent;
        Eigen::VectorXd dz2 = params.tensor(params.slot("W3")).transpose() * cotangent;
        dz2 = (tape.h2.array() > 0).select(dz2, 0.0);
        gmap("W2") += dz2 * tape.h1.transpose();
        gmap("b2").col(0) += dz2;
        Eigen::VectorXd dz1 = params.tensor(params.slot("W2")).transpose() * dz2;
        dz1 = (tape.h1.array() > 0).select(dz1, 0.0);
        gmap("W1") += dz1 * tape.input.transpose();
        gmap("b1").col(0) += dz1;
        return;
    }

    const CnnDims d = cnn_dims(params.input_points);
    const int H = d.pool1_out;
    // dense
    gmap("dense_w") += cotangent * tape.pool2.transpose();
    gmap("dense_b").col(0) += cotangent;
    Eigen::VectorXd dpool2 = params.tensor(params.slot("dense_w")).transpose() * cotangent;
    // pool2 + ReLU(conv2)
    Eigen::VectorXd dact2 = Eigen::VectorXd::Zero(tape.conv2_act.size());
    for (int i = 0; i < dpool2.size(); ++i) dact2[tape.pool2_argmax[i]] += dpool2[i];
    Eigen::VectorXd dpre2 = (tape.conv2_act.array() > 0).select(dact2, 0.0);
    // conv2
    auto W2 = params.tensor(params.slot("conv2_w"));
    auto gW2 = gmap("conv2_w");
    auto gb2 = gmap("conv2_b");
    Eigen::VectorXd dpool1 = Eigen::VectorXd::Zero(tape.pool1.size());
    for (int f = 0; f < kConv2Filters; ++f)
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < H; ++c) {
                const double g = dpre2[fm(f, r, c, H)];
                if (g == 0) continue;
                gb2(f, 0) += g;
                for (int ic = 0; ic < kConv1Filters; ++ic)
                    for (int kr = 0; kr < kConv2Kernel; ++kr)
                        for (int kc = 0; kc < kConv2Kernel; ++kc) {
                            const int rr = r + kr, cc = c + kc;
                            if (rr >= H || cc >= H) continue;
                            const int widx = (ic * kConv2Kernel + kr) * kConv2Kernel + kc;
                            gW2(f, widx) += g * tape.pool1[fm(ic, rr, cc, H)];
                            dpool1[fm(ic, rr, cc, H)] += g * W2(f, widx);
                        }
            }
    // pool1 + ReLU(conv1)
    Eigen::VectorXd dact1 = Eigen::VectorXd::Zero(tape.conv1_act.size());
    for (int i = 0; i < dpool1.size(); ++i) dact1[tape.pool1_argmax[i]] += dpool1[i];
    Eigen::VectorXd dpre1 = (tape.conv1_act.array() > 0).select(dact1, 0.0);
    // conv1
    auto gW1 = gmap("conv1_w");
    auto gb1 = gmap("conv1_b");
    const int J = params.input_points;
    for (int f = 0; f < kConv1Filters; ++f)
        for (int r = 0; r < d.conv1_out; ++r)
            for (int c = 0; c < d.conv1_out; ++c) {
                const double g = dpre1[fm(f, r, c, d.conv1_out)];
                if (g == 0) continue;
                gb1(f, 0) += g;
                for (int kr = 0; kr < kConv1Kernel; ++kr)
                    for (int kc = 0; kc < kConv1Kernel; ++kc)
                        gW1(f, kr * kConv1Kernel + kc) +=
                            g * tape.input[(2 * r + kr) * J + (2 * c + kc)];
            }
}

Eigen::MatrixXd sparse_forward_pass(const PolicyParams& params, const Eigen::VectorXd& x) {
    if (x.size() != params.input_size())
        throw std::invalid_argument("sparse_forward_pass: input size mismatch");
    const int nodes = static_cast<int>(x.size());
    Eigen::MatrixXd out(nodes, params.outputs);

    if (params.arch == Arch::Mlp) {
        const auto W1 = params.tensor(params.slot("W1"));
        const auto b1 = params.tensor(params.slot("b1"));
        for (int j = 0; j < nodes; ++j) {
            // single active column of the first layer
            Eigen::VectorXd z1 = b1.col(0) + W1.col(j) * x[j];
            out.row(j) = mlp_tail(params, z1, nullptr).transpose();
        }
        return out;
    }

    const int J = params.input_points;
    const CnnDims d = cnn_dims(J);
    const auto W = params.tensor(params.slot("conv1_w"));
    const auto b = params.tensor(params.slot("conv1_b"));
    // bias-only baseline; each active pixel touches one Toeplitz column
    Eigen::VectorXd base(kConv1Filters * d.conv1_out * d.conv1_out);
    for (int f = 0; f < kConv1Filters; ++f)
        base.segment(f * d.conv1_out * d.conv1_out, d.conv1_out * d.conv1_out)
            .setConstant(b(f, 0));
    // output positions whose receptive field covers pixel p: 2*o <= p <= 2*o+3
    auto window_lo = [](int p) { return p < kConv1Kernel ? 0 : (p - kConv1Kernel + 2) / 2; };
    for (int j = 0; j < nodes; ++j) {
        const int r = j / J, c = j % J;
        Eigen::VectorXd pre = base;
        const int r_hi = std::min(d.conv1_out - 1, r / 2);
        const int c_hi = std::min(d.conv1_out - 1, c / 2);
        for (int orow = window_lo(r); orow <= r_hi; ++orow) {
            const int kr = r - 2 * orow;
            for (int ocol = window_lo(c); ocol <= c_hi; ++ocol) {
                const int kc = c - 2 * ocol;
                for (int f = 0; f < kConv1Filters; ++f)
                    pre[fm(f, orow, ocol, d.conv1_out)] +=
                        W(f, kr * kConv1Kernel + kc) * x[j];
            }
        }
        out.row(j) = cnn_tail(params, pre, nullptr).transpose();
    }
    return out;
}

OptimizerState make_optimizer(const PolicyParams& params, double learn_rate, double beta1,
                              double beta2, double eps) {
    OptimizerState s;
    s.m = Eigen::VectorXd::Zero(params.theta.size());
    s.v = Eigen::VectorXd::Zero(params.theta.size());
    s.learn_rate = learn_rate;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    return s;
}

void adam_step(OptimizerState& state, PolicyParams& params, const Eigen::VectorXd& grad) {
    if (grad.size() != params.theta.size())
        throw std::invalid_argument("adam_step: shape mismatch");
    state.step += 1;
    state.m = state.beta1 * state.m + (1 - state.beta1) * grad;
    state.v = state.beta2 * state.v + (1 - state.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1 - std::pow(state.beta2, static_cast<double>(state.step));
    params.theta -= state.learn_rate *
                    ((state.m / bc1).array() /
                     ((state.v / bc2).array().sqrt() + state.eps))
                        .matrix();
}

void save_checkpoint(const PolicyParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    out << "spde-policy v1\n";
    out << "arch " << to_string(params.arch) << "\n";
    out << "input " << params.input_points << " " << params.input_dim << "\n";
    out << "outputs " << params.outputs << "\n";
    out << "tensors " << params.slots.size() << "\n";
    for (const auto& s : params.slots)
        out << s.name << " " << s.rows << " " << s.cols << "\n";
    out << "params " << params.theta.size() << "\n";
    out << "data\n";
    static_assert(sizeof(double) == 8);
    out.write(reinterpret_cast<const char*>(params.theta.data()),
              static_cast<std::streamsize>(params.theta.size() * sizeof(double)));
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

PolicyParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string line;
    auto expect_line = [&](const std::string& what) {
        if (!std::getline(in, line)) throw std::runtime_error("truncated checkpoint header");
        return line;
    };
    if (expect_line("magic") != "spde-policy v1")
        throw std::runtime_error("not a policy checkpoint: " + path);
    std::string key, arch_name;
    int input_points, input_dim, outputs;
    size_t tensors, count;
    {
        std::istringstream ls(expect_line("arch"));
        ls >> key >> arch_name;
        if (key != "arch") throw std::runtime_error("bad checkpoint header (arch)");
    }
    {
        std::istringstream ls(expect_line("input"));
        ls >> key >> input_points >> input_dim;
        if (key != "input" || !ls) throw std::runtime_error("bad checkpoint header (input)");
    }
    {
        std::istringstream ls(expect_line("outputs"));
        ls >> key >> outputs;
        if (key != "outputs" || !ls)
            throw std::runtime_error("bad checkpoint header (outputs)");
    }
    {
        std::istringstream ls(expect_line("tensors"));
        ls >> key >> tensors;
        if (key != "tensors" || !ls)
            throw std::runtime_error("bad checkpoint header (tensors)");
    }
    PolicyParams p =
        make_policy(arch_from_string(arch_name), input_points, input_dim, outputs);
    if (tensors != p.slots.size()) throw std::runtime_error("checkpoint tensor count mismatch");
    for (const auto& s : p.slots) {
        std::istringstream ls(expect_line("tensor"));
        std::string name;
        int rows, cols;
        ls >> name >> rows >> cols;
        if (!ls || name != s.name || rows != s.rows || cols != s.cols)
            throw std::runtime_error("checkpoint manifest mismatch at tensor " + s.name);
    }
    {
        std::istringstream ls(expect_line("params"));
        ls >> key >> count;
        if (key != "params" || !ls || count != static_cast<size_t>(p.theta.size()))
            throw std::runtime_error("checkpoint parameter count mismatch");
    }
    if (expect_line("data") != "data") throw std::runtime_error("bad checkpoint header (data)");
    in.read(reinterpret_cast<char*>(p.theta.data()),
            static_cast<std::streamsize>(p.theta.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(p.theta.size() * sizeof(double)))
        throw std::runtime_error("truncated checkpoint payload");
    if (!p.theta.allFinite()) throw std::runtime_error("checkpoint holds non-finite parameters");
    return p;
}

} // namespace spde
