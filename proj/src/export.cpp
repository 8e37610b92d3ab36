#include "actconv/export.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

namespace actconv {

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

/// ACU node indices and their synapse counts (groups * K), in node order;
/// matches the flatten_positions layout.
std::vector<std::pair<int, int>> acu_layout(const NetworkSpec& spec) {
    std::vector<std::pair<int, int>> out;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        if (l.kind != LayerKind::acu) continue;
        SynapsePositions init;
        if (l.position_init == "grid3x3") {
            init = grid3x3_positions();
        } else if (l.position_init.rfind("dilated", 0) == 0) {
            init = dilated_positions(std::stoi(l.position_init.substr(7)));
        } else {
            throw std::invalid_argument("unknown position init: " +
                                        l.position_init);
        }
        out.emplace_back(static_cast<int>(i), l.groups * init.count());
    }
    return out;
}

}  // namespace

std::string trajectory_csv(const NetworkSpec& spec,
                           const PositionHistory& history) {
    const std::vector<std::pair<int, int>> layout = acu_layout(spec);
    std::int64_t total = 0;
    for (const auto& [node, count] : layout) total += count;

    std::ostringstream os;
    os << "layer,synapse,iter,alpha,beta\n";
    std::int64_t base = 0;
    for (const auto& [node, count] : layout) {
        for (int s = 0; s < count; ++s) {
            for (const PositionSnapshot& snap : history.entries) {
                if (static_cast<std::int64_t>(snap.values.size()) != 2 * total) {
                    throw std::invalid_argument(
                        "trajectory_csv: snapshot size mismatch");
                }
                const double a = snap.values[static_cast<std::size_t>(
                    2 * (base + s))];
                const double b = snap.values[static_cast<std::size_t>(
                    2 * (base + s) + 1)];
                os << node << "," << s << "," << snap.iter << "," << fmt17(a)
                   << "," << fmt17(b) << "\n";
            }
        }
        base += count;
    }
    return os.str();
}

std::vector<LayerScatter> scatter_from_network(const Network& net) {
    std::vector<LayerScatter> panels;
    for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
        const LayerSpec& l = net.spec.layers[i];
        if (l.kind != LayerKind::acu) continue;
        LayerScatter p;
        p.layer = static_cast<int>(i);
        SynapsePositions init;
        if (l.position_init == "grid3x3") {
            init = grid3x3_positions();
        } else {
            init = dilated_positions(std::stoi(l.position_init.substr(7)));
        }
        for (int g = 0; g < l.groups; ++g) {
            for (const Point& pt : init.points) p.init.push_back(pt);
        }
        for (const SynapsePositions& sp : net.params[i].acu.positions) {
            for (const Point& pt : sp.points) p.final_pos.push_back(pt);
        }
        panels.push_back(std::move(p));
    }
    return panels;
}

std::vector<LayerScatter> scatter_from_trajectory_csv(const std::string& csv) {
    std::istringstream is(csv);
    std::string line;
    if (!std::getline(is, line) || line != "layer,synapse,iter,alpha,beta") {
        throw std::invalid_argument("trajectory csv: bad header");
    }
    struct Series {
        std::int64_t first_iter = 0, last_iter = -1;
        Point first, last;
        bool seen = false;
    };
    std::map<int, std::map<int, Series>> layers;  // layer -> synapse -> series
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        int layer, synapse;
        long long iter;
        double alpha, beta;
        if (std::sscanf(line.c_str(), "%d,%d,%lld,%lf,%lf", &layer, &synapse,
                        &iter, &alpha, &beta) != 5) {
            throw std::invalid_argument("trajectory csv: bad row '" + line +
                                        "'");
        }
        Series& s = layers[layer][synapse];
        if (!s.seen || iter < s.first_iter) {
            s.first_iter = iter;
            s.first = {alpha, beta};
        }
        if (!s.seen || iter > s.last_iter) {
            s.last_iter = iter;
            s.last = {alpha, beta};
        }
        s.seen = true;
    }
    std::vector<LayerScatter> panels;
    for (const auto& [layer, series] : layers) {
        LayerScatter p;
        p.layer = layer;
        for (const auto& [synapse, s] : series) {
            p.init.push_back(s.first);
            p.final_pos.push_back(s.last);
        }
        panels.push_back(std::move(p));
    }
    if (panels.empty()) {
        throw std::invalid_argument("trajectory csv: no rows");
    }
    return panels;
}

std::string positions_svg(const std::vector<LayerScatter>& panels) {
    constexpr int kPanel = 220;
    constexpr int kMargin = 20;
    const int width =
        kMargin + static_cast<int>(panels.size()) * (kPanel + kMargin);
    const int height = kPanel + 2 * kMargin + 16;

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
       << "\" height=\"" << height << "\">\n";
    os << "<rect width=\"" << width << "\" height=\"" << height
       << "\" fill=\"white\"/>\n";

    for (std::size_t pi = 0; pi < panels.size(); ++pi) {
        const LayerScatter& p = panels[pi];
        double radius = 2.0;
        for (const Point& pt : p.init) {
            radius = std::max({radius, std::abs(pt.alpha), std::abs(pt.beta)});
        }
        for (const Point& pt : p.final_pos) {
            radius = std::max({radius, std::abs(pt.alpha), std::abs(pt.beta)});
        }
        radius = std::ceil(radius) + 0.5;

        const double x0 = kMargin + static_cast<double>(pi) * (kPanel + kMargin);
        const double y0 = kMargin;
        const double scale = kPanel / (2.0 * radius);
        // beta (width offset) goes right, alpha (height offset) goes down.
        auto px = [&](double beta) { return x0 + (beta + radius) * scale; };
        auto py = [&](double alpha) { return y0 + (alpha + radius) * scale; };

        os << "<rect x=\"" << fmt2(x0) << "\" y=\"" << fmt2(y0) << "\" width=\""
           << kPanel << "\" height=\"" << kPanel
           << "\" fill=\"none\" stroke=\"black\"/>\n";
        for (int gl = static_cast<int>(-radius); gl <= static_cast<int>(radius);
             ++gl) {
            os << "<line x1=\"" << fmt2(px(gl)) << "\" y1=\"" << fmt2(py(-radius))
               << "\" x2=\"" << fmt2(px(gl)) << "\" y2=\"" << fmt2(py(radius))
               << "\" stroke=\"#dddddd\"/>\n";
            os << "<line x1=\"" << fmt2(px(-radius)) << "\" y1=\"" << fmt2(py(gl))
               << "\" x2=\"" << fmt2(px(radius)) << "\" y2=\"" << fmt2(py(gl))
               << "\" stroke=\"#dddddd\"/>\n";
        }
        for (const Point& pt : p.init) {
            const double cx = px(pt.beta), cy = py(pt.alpha);
            os << "<line x1=\"" << fmt2(cx - 4) << "\" y1=\"" << fmt2(cy)
               << "\" x2=\"" << fmt2(cx + 4) << "\" y2=\"" << fmt2(cy)
               << "\" stroke=\"#888888\"/>\n";
            os << "<line x1=\"" << fmt2(cx) << "\" y1=\"" << fmt2(cy - 4)
               << "\" x2=\"" << fmt2(cx) << "\" y2=\"" << fmt2(cy + 4)
               << "\" stroke=\"#888888\"/>\n";
        }
        for (const Point& pt : p.final_pos) {
            os << "<circle cx=\"" << fmt2(px(pt.beta)) << "\" cy=\""
               << fmt2(py(pt.alpha)) << "\" r=\"3\" fill=\"#cc2222\"/>\n";
        }
        os << "<text x=\"" << fmt2(x0) << "\" y=\""
           << fmt2(y0 + kPanel + 14) << "\" font-size=\"12\">layer " << p.layer
           << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace actconv
