#include "actconv/optim.hpp"

#include "actconv/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace actconv {

void validate(const TrainConfig& cfg) {
    if (!(cfg.base_lr > 0.0)) {
        throw std::invalid_argument("config: base_lr must be > 0");
    }
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) {
        throw std::invalid_argument("config: momentum must be in [0,1)");
    }
    if (cfg.weight_decay < 0.0) {
        throw std::invalid_argument("config: weight_decay must be >= 0");
    }
    if (!(cfg.lr_drop_factor > 0.0) || cfg.lr_drop_factor > 1.0) {
        throw std::invalid_argument("config: lr_drop_factor must be in (0,1]");
    }
    if (cfg.total_iters < 1) {
        throw std::invalid_argument("config: total_iters must be >= 1");
    }
    for (std::size_t i = 0; i < cfg.lr_drop_steps.size(); ++i) {
        if (cfg.lr_drop_steps[i] < 1) {
            throw std::invalid_argument("config: lr drop step must be >= 1");
        }
        // steps at or beyond total_iters are allowed and simply never fire;
        // that lets a shortened run share the config of the full schedule
        if (i > 0 && cfg.lr_drop_steps[i] <= cfg.lr_drop_steps[i - 1]) {
            throw std::invalid_argument("config: lr_drop_steps not ascending");
        }
    }
    // warmup_iters >= total_iters is legal: a shortened run of a longer
    // schedule simply never unfreezes its positions
    if (cfg.warmup_iters < 0) {
        throw std::invalid_argument("config: warmup_iters must be >= 0");
    }
    if (cfg.batch_size < 1) {
        throw std::invalid_argument("config: batch_size must be >= 1");
    }
    if (cfg.position_lr_scale < 0.0) {
        throw std::invalid_argument("config: position_lr_scale must be >= 0");
    }
    if (cfg.log_interval < 1) {
        throw std::invalid_argument("config: log_interval must be >= 1");
    }
    if (cfg.eval_limit < 0) {
        throw std::invalid_argument("config: eval_limit must be >= 0");
    }
}

namespace {

std::string fmt_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_real(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double out;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad value for " + key);
    }
    if (pos != v.size()) {
        throw std::invalid_argument("config: bad value for " + key);
    }
    return out;
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    long long out;
    try {
        out = std::stoll(v, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad value for " + key);
    }
    if (pos != v.size()) {
        throw std::invalid_argument("config: bad value for " + key);
    }
    return out;
}

std::vector<std::int64_t> parse_int_list(const std::string& key,
                                         const std::string& v) {
    std::vector<std::int64_t> out;
    if (v.empty()) return out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(parse_int(key, item));
    }
    return out;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
    TrainConfig cfg;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config: expected key=value, got '" +
                                        line + "'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "base_lr") {
            cfg.base_lr = parse_real(key, val);
        } else if (key == "momentum") {
            cfg.momentum = parse_real(key, val);
        } else if (key == "weight_decay") {
            cfg.weight_decay = parse_real(key, val);
        } else if (key == "lr_drop_steps") {
            cfg.lr_drop_steps = parse_int_list(key, val);
        } else if (key == "lr_drop_factor") {
            cfg.lr_drop_factor = parse_real(key, val);
        } else if (key == "total_iters") {
            cfg.total_iters = parse_int(key, val);
        } else if (key == "warmup_iters") {
            cfg.warmup_iters = parse_int(key, val);
        } else if (key == "batch_size") {
            cfg.batch_size = parse_int(key, val);
        } else if (key == "position_lr_scale") {
            cfg.position_lr_scale = parse_real(key, val);
        } else if (key == "seed") {
            cfg.seed = static_cast<std::uint64_t>(parse_int(key, val));
        } else if (key == "log_interval") {
            cfg.log_interval = parse_int(key, val);
        } else if (key == "eval_limit") {
            cfg.eval_limit = parse_int(key, val);
        } else if (key == "augment") {
            cfg.augment = parse_int(key, val) != 0;
        } else {
            throw std::invalid_argument("config: unknown key '" + key + "'");
        }
    }
    validate(cfg);
    return cfg;
}

std::string serialize_train_config(const TrainConfig& cfg) {
    std::ostringstream os;
    os << "base_lr=" << fmt_real(cfg.base_lr) << "\n";
    os << "momentum=" << fmt_real(cfg.momentum) << "\n";
    os << "weight_decay=" << fmt_real(cfg.weight_decay) << "\n";
    os << "lr_drop_steps=";
    for (std::size_t i = 0; i < cfg.lr_drop_steps.size(); ++i) {
        if (i) os << ",";
        os << cfg.lr_drop_steps[i];
    }
    os << "\n";
    os << "lr_drop_factor=" << fmt_real(cfg.lr_drop_factor) << "\n";
    os << "total_iters=" << cfg.total_iters << "\n";
    os << "warmup_iters=" << cfg.warmup_iters << "\n";
    os << "batch_size=" << cfg.batch_size << "\n";
    os << "position_lr_scale=" << fmt_real(cfg.position_lr_scale) << "\n";
    os << "seed=" << cfg.seed << "\n";
    os << "log_interval=" << cfg.log_interval << "\n";
    os << "eval_limit=" << cfg.eval_limit << "\n";
    os << "augment=" << (cfg.augment ? 1 : 0) << "\n";
    return os.str();
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) {
        throw IoError("cannot open config file: " + path);
    }
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_train_config(buf.str());
}

double lr_at(const TrainConfig& cfg, std::int64_t iter) {
    if (iter < 0 || iter >= cfg.total_iters) {
        throw std::invalid_argument("lr_at: iter out of range");
    }
    double lr = cfg.base_lr;
    for (std::int64_t step : cfg.lr_drop_steps) {
        if (iter >= step) lr *= cfg.lr_drop_factor;
    }
    return lr;
}

void sgd_nesterov_step(double* param, const double* grad, double* velocity,
                       std::int64_t count, double lr, double momentum,
                       double decay) {
    for (std::int64_t i = 0; i < count; ++i) {
        const double g = grad[i] + decay * param[i];
        const double v = momentum * velocity[i] - lr * g;
        velocity[i] = v;
        param[i] += momentum * v - lr * g;
    }
}

void position_step(AcuLayer& layer,
                   const std::vector<std::vector<Point>>& raw_pos_grad,
                   const TrainConfig& cfg, std::int64_t iter) {
    if (raw_pos_grad.size() != layer.positions.size()) {
        throw std::invalid_argument("position_step: group count mismatch");
    }
    layer.position_lr_scale = cfg.position_lr_scale;
    std::vector<std::vector<Point>> normalized(raw_pos_grad.size());
    for (std::size_t g = 0; g < raw_pos_grad.size(); ++g) {
        normalized[g] = normalize_position_gradient(
            raw_pos_grad[g], layer.positions[g].origin_fixed);
    }
    apply_position_update(layer, normalized, lr_at(cfg, iter),
                          iter >= cfg.warmup_iters);
}

}  // namespace actconv
