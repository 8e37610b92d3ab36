#include "actconv/nn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace actconv {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;

const char* const kKindNames[] = {
    "conv",            "acu",  "batchnorm",       "relu",
    "global_avg_pool", "softmax_xent", "add_shortcut", "projection_shortcut",
};

}  // namespace

const char* layer_kind_name(LayerKind k) {
    return kKindNames[static_cast<int>(k)];
}

LayerKind layer_kind_from_name(const std::string& s) {
    for (int i = 0; i < 8; ++i) {
        if (s == kKindNames[i]) return static_cast<LayerKind>(i);
    }
    throw std::invalid_argument("unknown layer kind: " + s);
}

namespace {

bool is_convlike(LayerKind k) {
    return k == LayerKind::conv || k == LayerKind::acu ||
           k == LayerKind::projection_shortcut;
}

int resolve_input(int node, int raw) {
    if (raw == -2) return node - 1;  // previous node (or the input for node 0)
    if (raw >= -1 && raw < node) return raw;
    throw std::invalid_argument("layer " + std::to_string(node) +
                                ": bad input index " + std::to_string(raw));
}

SynapsePositions positions_from_init(const std::string& init) {
    if (init == "grid3x3") return grid3x3_positions();
    if (init.rfind("dilated", 0) == 0) {
        const int d = std::stoi(init.substr(7));
        return dilated_positions(d);
    }
    throw std::invalid_argument("unknown position init: " + init);
}

}  // namespace

void validate(const NetworkSpec& spec) {
    const int L = static_cast<int>(spec.layers.size());
    if (L == 0) throw std::invalid_argument("network: no layers");
    if (spec.classes < 2) throw std::invalid_argument("network: classes < 2");
    if (spec.in_channels < 1) {
        throw std::invalid_argument("network: in_channels < 1");
    }

    std::vector<int> ch(static_cast<std::size_t>(L), 0);
    auto chan = [&](int idx) {
        return idx < 0 ? spec.in_channels : ch[static_cast<std::size_t>(idx)];
    };
    int loss_nodes = 0;

    for (int i = 0; i < L; ++i) {
        const LayerSpec& l = spec.layers[static_cast<std::size_t>(i)];
        const int in0 = resolve_input(i, l.in0);
        const std::string where = "layer " + std::to_string(i) + " (" +
                                  layer_kind_name(l.kind) + ")";
        switch (l.kind) {
            case LayerKind::conv:
            case LayerKind::projection_shortcut:
            case LayerKind::acu: {
                if (l.in_channels != chan(in0)) {
                    throw std::invalid_argument(where + ": in_channels " +
                                                std::to_string(l.in_channels) +
                                                " != producer " +
                                                std::to_string(chan(in0)));
                }
                if (l.out_channels < 1 || l.stride < 1 || l.pad < 0 ||
                    l.dilation < 1 || l.groups < 1) {
                    throw std::invalid_argument(where + ": bad geometry");
                }
                if (l.kind == LayerKind::acu) {
                    if (l.in_channels % l.groups != 0 ||
                        l.out_channels % l.groups != 0) {
                        throw std::invalid_argument(where +
                                                    ": groups do not divide");
                    }
                    positions_from_init(l.position_init);  // throws if unknown
                } else if (l.kernel < 1 || l.kernel % 2 == 0) {
                    throw std::invalid_argument(where + ": kernel must be odd");
                }
                ch[static_cast<std::size_t>(i)] = l.out_channels;
                break;
            }
            case LayerKind::batchnorm:
            case LayerKind::relu:
            case LayerKind::global_avg_pool: {
                if (l.in_channels != chan(in0) ||
                    l.out_channels != l.in_channels) {
                    throw std::invalid_argument(where +
                                                ": channel annotation mismatch");
                }
                ch[static_cast<std::size_t>(i)] = chan(in0);
                break;
            }
            case LayerKind::add_shortcut: {
                const int in1 = resolve_input(i, l.in1);
                if (chan(in0) != chan(in1)) {
                    throw std::invalid_argument(
                        where + ": branch channels differ (" +
                        std::to_string(chan(in0)) + " vs " +
                        std::to_string(chan(in1)) + ")");
                }
                if (l.in_channels != chan(in0) ||
                    l.out_channels != l.in_channels) {
                    throw std::invalid_argument(where +
                                                ": channel annotation mismatch");
                }
                ch[static_cast<std::size_t>(i)] = chan(in0);
                break;
            }
            case LayerKind::softmax_xent: {
                ++loss_nodes;
                if (i != L - 1) {
                    throw std::invalid_argument(where + ": loss must be last");
                }
                if (chan(in0) != spec.classes) {
                    throw std::invalid_argument(
                        where + ": logits channels " + std::to_string(chan(in0)) +
                        " != classes " + std::to_string(spec.classes));
                }
                ch[static_cast<std::size_t>(i)] = chan(in0);
                break;
            }
        }
    }
    if (loss_nodes != 1) {
        throw std::invalid_argument("network: need exactly one loss head");
    }
}

std::string serialize_network_spec(const NetworkSpec& spec) {
    std::ostringstream os;
    os << "netspec v1\n";
    os << "classes " << spec.classes << "\n";
    os << "in_channels " << spec.in_channels << "\n";
    os << "layers " << spec.layers.size() << "\n";
    for (const LayerSpec& l : spec.layers) {
        os << "layer kind=" << layer_kind_name(l.kind) << " in=" << l.in_channels
           << " out=" << l.out_channels << " k=" << l.kernel
           << " stride=" << l.stride << " pad=" << l.pad << " dil=" << l.dilation
           << " groups=" << l.groups << " init=" << l.position_init
           << " in0=" << l.in0 << " in1=" << l.in1 << "\n";
    }
    return os.str();
}

NetworkSpec parse_network_spec(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != "netspec v1") {
        throw std::invalid_argument("netspec: bad header");
    }
    NetworkSpec spec;
    std::size_t expected = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "classes") {
            ls >> spec.classes;
            if (ls.fail()) throw std::invalid_argument("netspec: parse error");
        } else if (tag == "in_channels") {
            ls >> spec.in_channels;
            if (ls.fail()) throw std::invalid_argument("netspec: parse error");
        } else if (tag == "layers") {
            ls >> expected;
            if (ls.fail()) throw std::invalid_argument("netspec: parse error");
        } else if (tag == "layer") {
            LayerSpec l;
            std::string tok;
            while (ls >> tok) {
                const std::size_t eq = tok.find('=');
                if (eq == std::string::npos) {
                    throw std::invalid_argument("netspec: bad token " + tok);
                }
                const std::string key = tok.substr(0, eq);
                const std::string val = tok.substr(eq + 1);
                if (key == "kind") {
                    l.kind = layer_kind_from_name(val);
                } else if (key == "in") {
                    l.in_channels = std::stoi(val);
                } else if (key == "out") {
                    l.out_channels = std::stoi(val);
                } else if (key == "k") {
                    l.kernel = std::stoi(val);
                } else if (key == "stride") {
                    l.stride = std::stoi(val);
                } else if (key == "pad") {
                    l.pad = std::stoi(val);
                } else if (key == "dil") {
                    l.dilation = std::stoi(val);
                } else if (key == "groups") {
                    l.groups = std::stoi(val);
                } else if (key == "init") {
                    l.position_init = val;
                } else if (key == "in0") {
                    l.in0 = std::stoi(val);
                } else if (key == "in1") {
                    l.in1 = std::stoi(val);
                } else {
                    throw std::invalid_argument("netspec: unknown key " + key);
                }
            }
            spec.layers.push_back(l);
        } else {
            throw std::invalid_argument("netspec: unknown line tag " + tag);
        }
    }
    if (expected != spec.layers.size()) {
        throw std::invalid_argument("netspec: layer count mismatch");
    }
    validate(spec);
    return spec;
}

namespace {

int scaled_width(int base, double mult) {
    const long long w = std::llround(base * mult);
    return static_cast<int>(std::max(4LL, w));
}

struct SpecBuilder {
    NetworkSpec spec;
    int last_channels;

    explicit SpecBuilder(int in_channels, int classes) {
        spec.in_channels = in_channels;
        spec.classes = classes;
        last_channels = in_channels;
    }

    int add(LayerSpec l) {
        spec.layers.push_back(l);
        last_channels = l.out_channels;
        return static_cast<int>(spec.layers.size()) - 1;
    }

    int conv(int out, int k, int stride, bool acu, int from = -2) {
        LayerSpec l;
        const int in = from == -2 ? last_channels
                                  : spec.layers[static_cast<std::size_t>(from)]
                                        .out_channels;
        l.kind = acu ? LayerKind::acu : LayerKind::conv;
        l.in_channels = in;
        l.out_channels = out;
        l.kernel = k;
        l.stride = stride;
        l.pad = (k - 1) / 2;
        l.in0 = from;
        return add(l);
    }

    int bn_relu() {
        LayerSpec b;
        b.kind = LayerKind::batchnorm;
        b.in_channels = b.out_channels = last_channels;
        add(b);
        LayerSpec r;
        r.kind = LayerKind::relu;
        r.in_channels = r.out_channels = last_channels;
        return add(r);
    }
};

}  // namespace

NetworkSpec build_plain_network(double width_multiplier, int classes,
                                bool use_acu, int in_channels) {
    if (!(width_multiplier > 0.0)) {
        throw std::invalid_argument("build_plain_network: multiplier <= 0");
    }
    const int w0 = scaled_width(16, width_multiplier);
    const int w1 = scaled_width(48, width_multiplier);
    const int w2 = scaled_width(96, width_multiplier);
    const int w3 = scaled_width(192, width_multiplier);

    SpecBuilder b(in_channels, classes);
    b.conv(w0, 1, 1, false);  // stem
    b.bn_relu();
    b.conv(w1, 3, 1, use_acu);
    b.bn_relu();
    b.conv(w1, 3, 1, use_acu);
    b.bn_relu();
    b.conv(w2, 3, 2, use_acu);
    b.bn_relu();
    b.conv(w2, 3, 1, use_acu);
    b.bn_relu();
    b.conv(w3, 3, 2, use_acu);
    b.bn_relu();
    b.conv(w3, 3, 1, use_acu);
    b.bn_relu();
    b.conv(classes, 1, 1, false);  // 1x1 classifier
    b.bn_relu();
    LayerSpec gap;
    gap.kind = LayerKind::global_avg_pool;
    gap.in_channels = gap.out_channels = classes;
    b.add(gap);
    LayerSpec loss;
    loss.kind = LayerKind::softmax_xent;
    loss.in_channels = loss.out_channels = classes;
    b.add(loss);
    validate(b.spec);
    return b.spec;
}

NetworkSpec build_residual_network(ResidualKind kind, int blocks_per_stage,
                                   int classes, bool use_acu, int in_channels) {
    if (blocks_per_stage < 1) {
        throw std::invalid_argument("build_residual_network: blocks < 1");
    }
    SpecBuilder b(in_channels, classes);
    b.conv(16, 3, 1, false);  // stem
    int block_in = static_cast<int>(b.spec.layers.size()) - 1;

    for (int stage = 0; stage < 3; ++stage) {
        const int mid = 16 << stage;
        const int out = kind == ResidualKind::basic ? mid : mid * 4;
        for (int blk = 0; blk < blocks_per_stage; ++blk) {
            const int stride = (stage > 0 && blk == 0) ? 2 : 1;
            const int in_ch =
                b.spec.layers[static_cast<std::size_t>(block_in)].out_channels;

            b.bn_relu();
            const int preact = static_cast<int>(b.spec.layers.size()) - 1;
            int main_out;
            if (kind == ResidualKind::basic) {
                b.conv(mid, 3, stride, use_acu, preact);
                b.bn_relu();
                main_out = b.conv(mid, 3, 1, use_acu);
            } else {
                b.conv(mid, 1, 1, false, preact);
                b.bn_relu();
                b.conv(mid, 3, stride, use_acu);
                b.bn_relu();
                main_out = b.conv(out, 1, 1, false);
            }

            int skip = block_in;
            if (in_ch != out || stride != 1) {
                LayerSpec p;
                p.kind = LayerKind::projection_shortcut;
                p.in_channels = in_ch;
                p.out_channels = out;
                p.kernel = 1;
                p.stride = stride;
                p.pad = 0;
                p.in0 = preact;
                skip = b.add(p);
            }

            LayerSpec a;
            a.kind = LayerKind::add_shortcut;
            a.in_channels = a.out_channels = out;
            a.in0 = main_out;
            a.in1 = skip;
            block_in = b.add(a);
        }
    }

    b.bn_relu();
    b.conv(classes, 1, 1, false);  // classifier
    LayerSpec gap;
    gap.kind = LayerKind::global_avg_pool;
    gap.in_channels = gap.out_channels = classes;
    b.add(gap);
    LayerSpec loss;
    loss.kind = LayerKind::softmax_xent;
    loss.in_channels = loss.out_channels = classes;
    b.add(loss);
    validate(b.spec);
    return b.spec;
}

int count_conv_layers(const NetworkSpec& spec) {
    int n = 0;
    for (const LayerSpec& l : spec.layers) {
        if (l.kind == LayerKind::conv || l.kind == LayerKind::acu) ++n;
    }
    return n;
}

ParamCount count_learnable_params(const NetworkSpec& spec) {
    ParamCount pc;
    for (const LayerSpec& l : spec.layers) {
        switch (l.kind) {
            case LayerKind::conv:
            case LayerKind::projection_shortcut: {
                pc.weights += static_cast<std::int64_t>(l.out_channels) *
                              l.in_channels * l.kernel * l.kernel;
                pc.biases += l.out_channels;
                break;
            }
            case LayerKind::acu: {
                const SynapsePositions init =
                    positions_from_init(l.position_init);
                const std::int64_t K = init.count();
                pc.weights += static_cast<std::int64_t>(l.out_channels) *
                              (l.in_channels / l.groups) * K;
                pc.biases += l.out_channels;
                pc.positions +=
                    static_cast<std::int64_t>(l.groups) * 2 *
                    (K - (init.origin_fixed ? 1 : 0));
                break;
            }
            case LayerKind::batchnorm: {
                pc.batchnorm += 2LL * l.in_channels;
                break;
            }
            default:
                break;
        }
    }
    return pc;
}

Network instantiate_network(const NetworkSpec& spec, Rng& rng) {
    validate(spec);
    Network net;
    net.spec = spec;
    net.params.resize(spec.layers.size());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        NodeParams& p = net.params[i];
        switch (l.kind) {
            case LayerKind::conv:
            case LayerKind::projection_shortcut: {
                p.conv.weights =
                    Tensor(l.out_channels, l.in_channels, l.kernel, l.kernel);
                const double stddev = std::sqrt(
                    2.0 / (static_cast<double>(l.in_channels) * l.kernel *
                           l.kernel));
                for (std::int64_t j = 0; j < p.conv.weights.size(); ++j) {
                    p.conv.weights.data()[j] = rng.normal(0.0, stddev);
                }
                p.conv.bias.assign(static_cast<std::size_t>(l.out_channels),
                                   0.0);
                p.conv.stride = l.stride;
                p.conv.pad = l.pad;
                p.conv.dilation = l.dilation;
                break;
            }
            case LayerKind::acu: {
                p.acu = make_acu_layer(l.in_channels, l.out_channels,
                                       positions_from_init(l.position_init),
                                       l.stride, l.pad, l.groups, rng);
                break;
            }
            case LayerKind::batchnorm: {
                const std::size_t c = static_cast<std::size_t>(l.in_channels);
                p.bn.gamma.assign(c, 1.0);
                p.bn.beta.assign(c, 0.0);
                p.bn.running_mean.assign(c, 0.0);
                p.bn.running_var.assign(c, 1.0);
                break;
            }
            default:
                break;
        }
    }
    return net;
}

namespace {

struct NodeCache {
    Tensor in;                           // conv/relu/bn input
    AcuCache acu;
    std::vector<double> mean, inv_std;   // bn batch statistics
    Tensor xhat;
};

Tensor batchnorm_forward(const Tensor& x, BnState& bn, bool training,
                         NodeCache* cache) {
    const std::int64_t N = x.n(), C = x.c(), H = x.h(), W = x.w();
    if (static_cast<std::int64_t>(bn.gamma.size()) != C) {
        throw std::invalid_argument("batchnorm: channel mismatch");
    }
    Tensor y(N, C, H, W);
    const std::int64_t M = N * H * W;
    if (training) {
        std::vector<double> mean(static_cast<std::size_t>(C), 0.0);
        std::vector<double> var(static_cast<std::size_t>(C), 0.0);
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t c = 0; c < C; ++c) {
                const double* xr = x.data() + x.offset(n, c, 0, 0);
                double s = 0.0;
                for (std::int64_t i = 0; i < H * W; ++i) s += xr[i];
                mean[static_cast<std::size_t>(c)] += s;
            }
        }
        for (std::int64_t c = 0; c < C; ++c) {
            mean[static_cast<std::size_t>(c)] /= static_cast<double>(M);
        }
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t c = 0; c < C; ++c) {
                const double m = mean[static_cast<std::size_t>(c)];
                const double* xr = x.data() + x.offset(n, c, 0, 0);
                double s = 0.0;
                for (std::int64_t i = 0; i < H * W; ++i) {
                    const double d = xr[i] - m;
                    s += d * d;
                }
                var[static_cast<std::size_t>(c)] += s;
            }
        }
        for (std::int64_t c = 0; c < C; ++c) {
            var[static_cast<std::size_t>(c)] /= static_cast<double>(M);
        }

        std::vector<double> inv_std(static_cast<std::size_t>(C));
        for (std::int64_t c = 0; c < C; ++c) {
            inv_std[static_cast<std::size_t>(c)] =
                1.0 / std::sqrt(var[static_cast<std::size_t>(c)] + kBnEps);
        }
        Tensor xhat(N, C, H, W);
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t c = 0; c < C; ++c) {
                const std::size_t cc = static_cast<std::size_t>(c);
                const double m = mean[cc], is = inv_std[cc];
                const double g = bn.gamma[cc], bt = bn.beta[cc];
                const double* xr = x.data() + x.offset(n, c, 0, 0);
                double* hr = xhat.data() + xhat.offset(n, c, 0, 0);
                double* yr = y.data() + y.offset(n, c, 0, 0);
                for (std::int64_t i = 0; i < H * W; ++i) {
                    const double h = (xr[i] - m) * is;
                    hr[i] = h;
                    yr[i] = g * h + bt;
                }
            }
        }
        for (std::int64_t c = 0; c < C; ++c) {
            const std::size_t cc = static_cast<std::size_t>(c);
            bn.running_mean[cc] =
                kBnMomentum * bn.running_mean[cc] + (1.0 - kBnMomentum) * mean[cc];
            bn.running_var[cc] =
                kBnMomentum * bn.running_var[cc] + (1.0 - kBnMomentum) * var[cc];
        }
        if (cache) {
            cache->mean = std::move(mean);
            cache->inv_std = std::move(inv_std);
            cache->xhat = std::move(xhat);
        }
    } else {
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t c = 0; c < C; ++c) {
                const std::size_t cc = static_cast<std::size_t>(c);
                const double m = bn.running_mean[cc];
                const double is = 1.0 / std::sqrt(bn.running_var[cc] + kBnEps);
                const double g = bn.gamma[cc], bt = bn.beta[cc];
                const double* xr = x.data() + x.offset(n, c, 0, 0);
                double* yr = y.data() + y.offset(n, c, 0, 0);
                for (std::int64_t i = 0; i < H * W; ++i) {
                    yr[i] = g * (xr[i] - m) * is + bt;
                }
            }
        }
    }
    return y;
}

struct ForwardState {
    std::vector<Tensor> acts;
    std::vector<NodeCache> caches;
};

Tensor run_forward(Network& net, const Tensor& x, bool training,
                   bool keep_caches, ForwardState* st) {
    const NetworkSpec& spec = net.spec;
    if (x.c() != spec.in_channels) {
        throw std::invalid_argument("network: input channel mismatch");
    }
    const int L = static_cast<int>(spec.layers.size());
    std::vector<Tensor> acts(static_cast<std::size_t>(L));
    if (keep_caches) st->caches.resize(static_cast<std::size_t>(L));

    auto value = [&](int idx) -> const Tensor& {
        return idx < 0 ? x : acts[static_cast<std::size_t>(idx)];
    };

    for (int i = 0; i < L; ++i) {
        const LayerSpec& l = spec.layers[static_cast<std::size_t>(i)];
        NodeParams& p = net.params[static_cast<std::size_t>(i)];
        const int in0 = resolve_input(i, l.in0);
        const Tensor& v = value(in0);
        Tensor out;
        switch (l.kind) {
            case LayerKind::conv:
            case LayerKind::projection_shortcut: {
                out = conv2d(v, p.conv);
                if (keep_caches) {
                    st->caches[static_cast<std::size_t>(i)].in = v;
                }
                break;
            }
            case LayerKind::acu: {
                out = acu_forward(
                    v, p.acu,
                    keep_caches ? &st->caches[static_cast<std::size_t>(i)].acu
                                : nullptr);
                break;
            }
            case LayerKind::batchnorm: {
                out = batchnorm_forward(
                    v, p.bn, training,
                    keep_caches ? &st->caches[static_cast<std::size_t>(i)]
                                : nullptr);
                break;
            }
            case LayerKind::relu: {
                out = v;
                for (std::int64_t j = 0; j < out.size(); ++j) {
                    if (out.data()[j] < 0.0) out.data()[j] = 0.0;
                }
                if (keep_caches) {
                    st->caches[static_cast<std::size_t>(i)].in = v;
                }
                break;
            }
            case LayerKind::global_avg_pool: {
                out = Tensor(v.n(), v.c(), 1, 1);
                const double inv = 1.0 / static_cast<double>(v.h() * v.w());
                for (std::int64_t n = 0; n < v.n(); ++n) {
                    for (std::int64_t c = 0; c < v.c(); ++c) {
                        const double* xr = v.data() + v.offset(n, c, 0, 0);
                        double s = 0.0;
                        for (std::int64_t j = 0; j < v.h() * v.w(); ++j) {
                            s += xr[j];
                        }
                        out(n, c, 0, 0) = s * inv;
                    }
                }
                if (keep_caches) {
                    st->caches[static_cast<std::size_t>(i)].in = v;
                }
                break;
            }
            case LayerKind::add_shortcut: {
                const int in1 = resolve_input(i, l.in1);
                const Tensor& w = value(in1);
                if (!v.same_shape(w)) {
                    throw std::invalid_argument(
                        "add_shortcut: branch shapes differ " + v.shape_str() +
                        " vs " + w.shape_str());
                }
                out = v;
                for (std::int64_t j = 0; j < out.size(); ++j) {
                    out.data()[j] += w.data()[j];
                }
                break;
            }
            case LayerKind::softmax_xent: {
                out = v;  // logits pass through; loss is computed separately
                break;
            }
        }
        acts[static_cast<std::size_t>(i)] = std::move(out);
    }

    Tensor logits = acts[static_cast<std::size_t>(L - 1)];
    if (st) st->acts = std::move(acts);
    return logits;
}

}  // namespace

Tensor network_forward(Network& net, const Tensor& x, bool training) {
    return run_forward(net, x, training, false, nullptr);
}

double softmax_xent_loss(const Tensor& logits, const std::vector<int>& labels) {
    const std::int64_t N = logits.n(), C = logits.c();
    if (logits.h() != 1 || logits.w() != 1) {
        throw std::invalid_argument("softmax: logits must be N x C x 1 x 1");
    }
    if (static_cast<std::int64_t>(labels.size()) != N) {
        throw std::invalid_argument("softmax: label count mismatch");
    }
    double total = 0.0;
    for (std::int64_t n = 0; n < N; ++n) {
        const int y = labels[static_cast<std::size_t>(n)];
        if (y < 0 || y >= C) {
            throw std::invalid_argument("softmax: label out of range");
        }
        const double* lr = logits.data() + logits.offset(n, 0, 0, 0);
        double m = lr[0];
        for (std::int64_t c = 1; c < C; ++c) m = std::max(m, lr[c]);
        double sum = 0.0;
        for (std::int64_t c = 0; c < C; ++c) sum += std::exp(lr[c] - m);
        total += m + std::log(sum) - lr[y];
    }
    return total / static_cast<double>(N);
}

double network_loss(Network& net, const Tensor& x,
                    const std::vector<int>& labels, bool training) {
    const Tensor logits = run_forward(net, x, training, false, nullptr);
    return softmax_xent_loss(logits, labels);
}

double network_forward_backward(Network& net, const Tensor& x,
                                const std::vector<int>& labels,
                                NetGradients& grads) {
    const NetworkSpec& spec = net.spec;
    const int L = static_cast<int>(spec.layers.size());
    ForwardState st;
    const Tensor logits = run_forward(net, x, true, true, &st);
    const double loss = softmax_xent_loss(logits, labels);

    grads.nodes.assign(static_cast<std::size_t>(L), NodeGrads{});

    // Gradient w.r.t. each node output, accumulated in reverse.
    std::vector<Tensor> g(static_cast<std::size_t>(L));
    auto add_into = [](Tensor& dst, Tensor&& src) {
        if (dst.size() == 0) {
            dst = std::move(src);
        } else {
            for (std::int64_t j = 0; j < dst.size(); ++j) {
                dst.data()[j] += src.data()[j];
            }
        }
    };
    auto send = [&](int idx, Tensor&& grad) {
        if (idx < 0) return;  // gradient w.r.t. the network input: unused
        add_into(g[static_cast<std::size_t>(idx)], std::move(grad));
    };

    // Loss seed: d(mean xent)/d(logits) = (softmax - onehot) / N.
    {
        const std::int64_t N = logits.n(), C = logits.c();
        Tensor seed(N, C, 1, 1);
        for (std::int64_t n = 0; n < N; ++n) {
            const double* lr = logits.data() + logits.offset(n, 0, 0, 0);
            double* sr = seed.data() + seed.offset(n, 0, 0, 0);
            double m = lr[0];
            for (std::int64_t c = 1; c < C; ++c) m = std::max(m, lr[c]);
            double sum = 0.0;
            for (std::int64_t c = 0; c < C; ++c) sum += std::exp(lr[c] - m);
            for (std::int64_t c = 0; c < C; ++c) {
                sr[c] = std::exp(lr[c] - m) / sum / static_cast<double>(N);
            }
            sr[labels[static_cast<std::size_t>(n)]] -=
                1.0 / static_cast<double>(N);
        }
        g[static_cast<std::size_t>(L - 1)] = std::move(seed);
    }

    for (int i = L - 1; i >= 0; --i) {
        Tensor& gi = g[static_cast<std::size_t>(i)];
        if (gi.size() == 0) continue;  // dead branch (shouldn't happen)
        const LayerSpec& l = spec.layers[static_cast<std::size_t>(i)];
        NodeParams& p = net.params[static_cast<std::size_t>(i)];
        NodeCache& cache = st.caches[static_cast<std::size_t>(i)];
        NodeGrads& ng = grads.nodes[static_cast<std::size_t>(i)];
        const int in0 = resolve_input(i, l.in0);

        switch (l.kind) {
            case LayerKind::conv:
            case LayerKind::projection_shortcut: {
                ConvGradients cg = conv2d_backward(cache.in, p.conv, gi);
                ng.d_conv_w = std::move(cg.d_weights);
                ng.d_conv_b = std::move(cg.d_bias);
                send(in0, std::move(cg.d_input));
                break;
            }
            case LayerKind::acu: {
                AcuGradients ag = acu_backward(gi, cache.acu, p.acu);
                ng.d_acu_w = std::move(ag.d_weights);
                ng.d_acu_b = std::move(ag.d_bias);
                ng.d_pos = std::move(ag.d_positions);
                send(in0, std::move(ag.d_input));
                break;
            }
            case LayerKind::batchnorm: {
                const Tensor& xhat = cache.xhat;
                const std::int64_t N = gi.n(), C = gi.c(), H = gi.h(),
                                   W = gi.w();
                const double M = static_cast<double>(N * H * W);
                ng.d_gamma.assign(static_cast<std::size_t>(C), 0.0);
                ng.d_beta.assign(static_cast<std::size_t>(C), 0.0);
                for (std::int64_t n = 0; n < N; ++n) {
                    for (std::int64_t c = 0; c < C; ++c) {
                        const double* gr = gi.data() + gi.offset(n, c, 0, 0);
                        const double* hr =
                            xhat.data() + xhat.offset(n, c, 0, 0);
                        double sg = 0.0, sgh = 0.0;
                        for (std::int64_t j = 0; j < H * W; ++j) {
                            sg += gr[j];
                            sgh += gr[j] * hr[j];
                        }
                        ng.d_beta[static_cast<std::size_t>(c)] += sg;
                        ng.d_gamma[static_cast<std::size_t>(c)] += sgh;
                    }
                }
                Tensor dx(N, C, H, W);
                for (std::int64_t n = 0; n < N; ++n) {
                    for (std::int64_t c = 0; c < C; ++c) {
                        const std::size_t cc = static_cast<std::size_t>(c);
                        const double gam = p.bn.gamma[cc];
                        const double is = cache.inv_std[cc];
                        const double sum_dh = gam * ng.d_beta[cc];
                        const double sum_dh_h = gam * ng.d_gamma[cc];
                        const double* gr = gi.data() + gi.offset(n, c, 0, 0);
                        const double* hr =
                            xhat.data() + xhat.offset(n, c, 0, 0);
                        double* dr = dx.data() + dx.offset(n, c, 0, 0);
                        for (std::int64_t j = 0; j < H * W; ++j) {
                            const double dh = gam * gr[j];
                            dr[j] = is * (dh - sum_dh / M -
                                          hr[j] * sum_dh_h / M);
                        }
                    }
                }
                send(in0, std::move(dx));
                break;
            }
            case LayerKind::relu: {
                Tensor dx = gi;
                const Tensor& in = cache.in;
                for (std::int64_t j = 0; j < dx.size(); ++j) {
                    if (in.data()[j] <= 0.0) dx.data()[j] = 0.0;
                }
                send(in0, std::move(dx));
                break;
            }
            case LayerKind::global_avg_pool: {
                const Tensor& in = cache.in;
                Tensor dx(in.n(), in.c(), in.h(), in.w());
                const double inv = 1.0 / static_cast<double>(in.h() * in.w());
                for (std::int64_t n = 0; n < in.n(); ++n) {
                    for (std::int64_t c = 0; c < in.c(); ++c) {
                        const double gv = gi(n, c, 0, 0) * inv;
                        double* dr = dx.data() + dx.offset(n, c, 0, 0);
                        for (std::int64_t j = 0; j < in.h() * in.w(); ++j) {
                            dr[j] = gv;
                        }
                    }
                }
                send(in0, std::move(dx));
                break;
            }
            case LayerKind::add_shortcut: {
                const int in1 = resolve_input(i, l.in1);
                Tensor copy = gi;
                send(in0, std::move(copy));
                send(in1, std::move(gi));
                break;
            }
            case LayerKind::softmax_xent: {
                send(in0, std::move(gi));
                break;
            }
        }
    }
    return loss;
}

std::vector<ParamRef> learnable_params(Network& net, NetGradients* grads) {
    std::vector<ParamRef> refs;
    for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
        const LayerSpec& l = net.spec.layers[i];
        NodeParams& p = net.params[i];
        NodeGrads* ng = grads ? &grads->nodes[i] : nullptr;
        const std::string base = "node" + std::to_string(i);
        switch (l.kind) {
            case LayerKind::conv:
            case LayerKind::projection_shortcut: {
                refs.push_back({base + ".conv.weights", p.conv.weights.data(),
                                ng ? ng->d_conv_w.data() : nullptr,
                                p.conv.weights.size(), true});
                refs.push_back({base + ".conv.bias", p.conv.bias.data(),
                                ng ? ng->d_conv_b.data() : nullptr,
                                static_cast<std::int64_t>(p.conv.bias.size()),
                                false});
                break;
            }
            case LayerKind::acu: {
                refs.push_back({base + ".acu.weights", p.acu.weights.data(),
                                ng ? ng->d_acu_w.data() : nullptr,
                                p.acu.weights.size(), true});
                refs.push_back({base + ".acu.bias", p.acu.bias.data(),
                                ng ? ng->d_acu_b.data() : nullptr,
                                static_cast<std::int64_t>(p.acu.bias.size()),
                                false});
                break;
            }
            case LayerKind::batchnorm: {
                refs.push_back({base + ".bn.gamma", p.bn.gamma.data(),
                                ng ? ng->d_gamma.data() : nullptr,
                                static_cast<std::int64_t>(p.bn.gamma.size()),
                                false});
                refs.push_back({base + ".bn.beta", p.bn.beta.data(),
                                ng ? ng->d_beta.data() : nullptr,
                                static_cast<std::int64_t>(p.bn.beta.size()),
                                false});
                break;
            }
            default:
                break;
        }
    }
    return refs;
}

double evaluate_error(Network& net, const Tensor& images,
                      const std::vector<int>& labels, std::int64_t limit,
                      std::int64_t batch) {
    std::int64_t N = images.n();
    if (static_cast<std::int64_t>(labels.size()) < N) {
        throw std::invalid_argument("evaluate_error: not enough labels");
    }
    if (limit > 0) N = std::min(N, limit);
    if (N == 0) throw std::invalid_argument("evaluate_error: empty dataset");
    if (batch < 1) batch = 1;

    const std::int64_t plane = images.c() * images.h() * images.w();
    std::int64_t wrong = 0;
    for (std::int64_t start = 0; start < N; start += batch) {
        const std::int64_t bn = std::min(batch, N - start);
        Tensor xb(bn, images.c(), images.h(), images.w());
        for (std::int64_t j = 0; j < bn; ++j) {
            const double* src = images.data() + (start + j) * plane;
            double* dst = xb.data() + j * plane;
            for (std::int64_t k = 0; k < plane; ++k) dst[k] = src[k];
        }
        const Tensor logits = network_forward(net, xb, false);
        for (std::int64_t j = 0; j < bn; ++j) {
            const double* lr = logits.data() + logits.offset(j, 0, 0, 0);
            std::int64_t best = 0;
            for (std::int64_t c = 1; c < logits.c(); ++c) {
                if (lr[c] > lr[best]) best = c;
            }
            if (best != labels[static_cast<std::size_t>(start + j)]) ++wrong;
        }
    }
    return 100.0 * static_cast<double>(wrong) / static_cast<double>(N);
}

}  // namespace actconv
