#include "actconv/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include "actconv/data.hpp"  // IoError

namespace actconv {

std::vector<double> flatten_positions(const Network& net) {
    std::vector<double> out;
    for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
        if (net.spec.layers[i].kind != LayerKind::acu) continue;
        for (const SynapsePositions& sp : net.params[i].acu.positions) {
            for (const Point& p : sp.points) {
                out.push_back(p.alpha);
                out.push_back(p.beta);
            }
        }
    }
    return out;
}

namespace {

constexpr char kMagic[8] = {'A', 'C', 'T', 'C', 'O', 'N', 'V', '1'};
constexpr std::uint32_t kVersion = 1;

void write_bytes(std::ofstream& f, const void* p, std::size_t n) {
    f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void write_u32(std::ofstream& f, std::uint32_t v) { write_bytes(f, &v, 4); }
void write_i64(std::ofstream& f, std::int64_t v) { write_bytes(f, &v, 8); }
void write_u64(std::ofstream& f, std::uint64_t v) { write_bytes(f, &v, 8); }

void write_string(std::ofstream& f, const std::string& s) {
    write_u64(f, s.size());
    write_bytes(f, s.data(), s.size());
}

void write_entry(std::ofstream& f, const std::string& name,
                 std::int64_t d0, std::int64_t d1, std::int64_t d2,
                 std::int64_t d3, const double* data) {
    write_string(f, name);
    write_i64(f, d0);
    write_i64(f, d1);
    write_i64(f, d2);
    write_i64(f, d3);
    write_bytes(f, data, static_cast<std::size_t>(d0 * d1 * d2 * d3) *
                             sizeof(double));
}

void read_bytes(std::ifstream& f, void* p, std::size_t n) {
    f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!f) throw IoError("checkpoint: unexpected end of file");
}

std::uint32_t read_u32(std::ifstream& f) {
    std::uint32_t v;
    read_bytes(f, &v, 4);
    return v;
}
std::int64_t read_i64(std::ifstream& f) {
    std::int64_t v;
    read_bytes(f, &v, 8);
    return v;
}
std::uint64_t read_u64(std::ifstream& f) {
    std::uint64_t v;
    read_bytes(f, &v, 8);
    return v;
}

std::string read_string(std::ifstream& f) {
    const std::uint64_t n = read_u64(f);
    if (n > (1ULL << 32)) throw IoError("checkpoint: absurd string length");
    std::string s(n, '\0');
    if (n) read_bytes(f, s.data(), n);
    return s;
}

struct Entry {
    std::int64_t dims[4];
    std::vector<double> data;
};

}  // namespace

void save_checkpoint(const std::string& path, const Network& net,
                     const std::vector<std::vector<double>>& velocities,
                     std::int64_t iteration, const std::string& rng_state,
                     const PositionHistory& history) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot create checkpoint " + path);

    write_bytes(f, kMagic, 8);
    write_u32(f, kVersion);
    write_i64(f, iteration);
    write_string(f, serialize_network_spec(net.spec));
    write_string(f, rng_state);

    // Count entries first: per-node state plus one velocity span per
    // learnable parameter.
    Network& mutable_net = const_cast<Network&>(net);
    std::vector<ParamRef> refs = learnable_params(mutable_net, nullptr);
    if (velocities.size() != refs.size()) {
        throw std::invalid_argument("save_checkpoint: velocity count mismatch");
    }
    std::uint64_t count = refs.size();  // velocity entries
    for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
        switch (net.spec.layers[i].kind) {
            case LayerKind::conv:
            case LayerKind::projection_shortcut:
                count += 2;
                break;
            case LayerKind::acu:
                count += 4;  // weights, bias, positions, extent
                break;
            case LayerKind::batchnorm:
                count += 4;
                break;
            default:
                break;
        }
    }
    write_u64(f, count);

    for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
        const NodeParams& p = net.params[i];
        const std::string base = "node" + std::to_string(i);
        switch (net.spec.layers[i].kind) {
            case LayerKind::conv:
            case LayerKind::projection_shortcut: {
                const Tensor& w = p.conv.weights;
                write_entry(f, base + ".conv.weights", w.n(), w.c(), w.h(),
                            w.w(), w.data());
                write_entry(f, base + ".conv.bias",
                            static_cast<std::int64_t>(p.conv.bias.size()), 1, 1,
                            1, p.conv.bias.data());
                break;
            }
            case LayerKind::acu: {
                const AcuLayer& a = p.acu;
                write_entry(f, base + ".acu.weights", a.weights.n(),
                            a.weights.c(), a.weights.h(), a.weights.w(),
                            a.weights.data());
                write_entry(f, base + ".acu.bias",
                            static_cast<std::int64_t>(a.bias.size()), 1, 1, 1,
                            a.bias.data());
                std::vector<double> pos;
                for (const SynapsePositions& sp : a.positions) {
                    for (const Point& pt : sp.points) {
                        pos.push_back(pt.alpha);
                        pos.push_back(pt.beta);
                    }
                }
                write_entry(f, base + ".acu.positions",
                            static_cast<std::int64_t>(a.positions.size()),
                            a.synapse_count(), 2, 1, pos.data());
                const double extent[4] = {
                    static_cast<double>(a.lo_h), static_cast<double>(a.hi_h),
                    static_cast<double>(a.lo_w), static_cast<double>(a.hi_w)};
                write_entry(f, base + ".acu.extent", 4, 1, 1, 1, extent);
                break;
            }
            case LayerKind::batchnorm: {
                const BnState& bn = p.bn;
                const std::int64_t c =
                    static_cast<std::int64_t>(bn.gamma.size());
                write_entry(f, base + ".bn.gamma", c, 1, 1, 1, bn.gamma.data());
                write_entry(f, base + ".bn.beta", c, 1, 1, 1, bn.beta.data());
                write_entry(f, base + ".bn.running_mean", c, 1, 1, 1,
                            bn.running_mean.data());
                write_entry(f, base + ".bn.running_var", c, 1, 1, 1,
                            bn.running_var.data());
                break;
            }
            default:
                break;
        }
    }
    for (std::size_t r = 0; r < refs.size(); ++r) {
        write_entry(f, "vel." + refs[r].name,
                    static_cast<std::int64_t>(velocities[r].size()), 1, 1, 1,
                    velocities[r].data());
    }

    write_u64(f, history.entries.size());
    for (const PositionSnapshot& s : history.entries) {
        write_i64(f, s.iter);
        write_u64(f, s.values.size());
        write_bytes(f, s.values.data(), s.values.size() * sizeof(double));
    }
    f.flush();
    if (!f) throw IoError("write failed for checkpoint " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint " + path);

    char magic[8];
    read_bytes(f, magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0) {
        throw IoError("not a checkpoint file: " + path);
    }
    const std::uint32_t version = read_u32(f);
    if (version != kVersion) {
        throw IoError("unsupported checkpoint version " +
                      std::to_string(version));
    }

    LoadedCheckpoint out;
    out.iteration = read_i64(f);
    const std::string spec_text = read_string(f);
    out.rng_state = read_string(f);

    Rng scratch(0);  // loader overwrites every initialized value
    out.net = instantiate_network(parse_network_spec(spec_text), scratch);

    std::map<std::string, Entry> entries;
    const std::uint64_t count = read_u64(f);
    for (std::uint64_t e = 0; e < count; ++e) {
        const std::string name = read_string(f);
        Entry en;
        std::int64_t numel = 1;
        for (int k = 0; k < 4; ++k) {
            en.dims[k] = read_i64(f);
            if (en.dims[k] < 0) throw IoError("checkpoint: negative dim");
            numel *= en.dims[k];
        }
        en.data.resize(static_cast<std::size_t>(numel));
        if (numel) {
            read_bytes(f, en.data.data(),
                       static_cast<std::size_t>(numel) * sizeof(double));
        }
        if (!entries.emplace(name, std::move(en)).second) {
            throw IoError("checkpoint: duplicate entry " + name);
        }
    }

    auto take = [&](const std::string& name, std::int64_t expect) -> Entry {
        auto it = entries.find(name);
        if (it == entries.end()) {
            throw IoError("checkpoint: missing entry " + name);
        }
        Entry en = std::move(it->second);
        entries.erase(it);
        if (static_cast<std::int64_t>(en.data.size()) != expect) {
            throw IoError("checkpoint: size mismatch for " + name);
        }
        return en;
    };
    auto fill = [&](const std::string& name, double* dst, std::int64_t n) {
        const Entry en = take(name, n);
        std::memcpy(dst, en.data.data(),
                    static_cast<std::size_t>(n) * sizeof(double));
    };

    Network& net = out.net;
    for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
        NodeParams& p = net.params[i];
        const std::string base = "node" + std::to_string(i);
        switch (net.spec.layers[i].kind) {
            case LayerKind::conv:
            case LayerKind::projection_shortcut: {
                fill(base + ".conv.weights", p.conv.weights.data(),
                     p.conv.weights.size());
                fill(base + ".conv.bias", p.conv.bias.data(),
                     static_cast<std::int64_t>(p.conv.bias.size()));
                break;
            }
            case LayerKind::acu: {
                AcuLayer& a = p.acu;
                fill(base + ".acu.weights", a.weights.data(), a.weights.size());
                fill(base + ".acu.bias", a.bias.data(),
                     static_cast<std::int64_t>(a.bias.size()));
                const std::int64_t npos =
                    static_cast<std::int64_t>(a.positions.size()) * 2 *
                    a.synapse_count();
                const Entry pos = take(base + ".acu.positions", npos);
                std::size_t idx = 0;
                for (SynapsePositions& sp : a.positions) {
                    for (Point& pt : sp.points) {
                        pt.alpha = pos.data[idx++];
                        pt.beta = pos.data[idx++];
                    }
                }
                const Entry ext = take(base + ".acu.extent", 4);
                a.lo_h = static_cast<std::int64_t>(ext.data[0]);
                a.hi_h = static_cast<std::int64_t>(ext.data[1]);
                a.lo_w = static_cast<std::int64_t>(ext.data[2]);
                a.hi_w = static_cast<std::int64_t>(ext.data[3]);
                break;
            }
            case LayerKind::batchnorm: {
                BnState& bn = p.bn;
                const std::int64_t c =
                    static_cast<std::int64_t>(bn.gamma.size());
                fill(base + ".bn.gamma", bn.gamma.data(), c);
                fill(base + ".bn.beta", bn.beta.data(), c);
                fill(base + ".bn.running_mean", bn.running_mean.data(), c);
                fill(base + ".bn.running_var", bn.running_var.data(), c);
                break;
            }
            default:
                break;
        }
    }

    const std::vector<ParamRef> refs = learnable_params(net, nullptr);
    out.velocities.resize(refs.size());
    for (std::size_t r = 0; r < refs.size(); ++r) {
        const Entry en = take("vel." + refs[r].name, refs[r].size);
        out.velocities[r] = std::move(en.data);
    }
    if (!entries.empty()) {
        throw IoError("checkpoint: unexpected entry " + entries.begin()->first);
    }

    const std::uint64_t hist = read_u64(f);
    out.history.entries.resize(hist);
    for (std::uint64_t e = 0; e < hist; ++e) {
        PositionSnapshot& s = out.history.entries[e];
        s.iter = read_i64(f);
        const std::uint64_t nv = read_u64(f);
        s.values.resize(nv);
        if (nv) read_bytes(f, s.values.data(), nv * sizeof(double));
    }
    return out;
}

}  // namespace actconv
