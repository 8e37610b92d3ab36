// actconv: command line front end for training, evaluation, position export,
// gradient checking and micro-benchmarks.
#include <CLI11.hpp>

#include <actconv/acu.hpp>
#include <actconv/checkpoint.hpp>
#include <actconv/data.hpp>
#include <actconv/export.hpp>
#include <actconv/gradsuite.hpp>
#include <actconv/nn.hpp>
#include <actconv/optim.hpp>
#include <actconv/refconv.hpp>
#include <actconv/trainer.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace actconv;

constexpr std::uint64_t kDataSeedSalt = 0xda7a5eedULL;
constexpr std::uint64_t kTestSeedSalt = 0x7e57da7aULL;
constexpr int kSyntheticImage = 13;
constexpr int kSyntheticTrain = 4096;
constexpr int kSyntheticTest = 1024;

struct DataOptions {
    std::string source = "synthetic";
    std::string dir;
    std::uint64_t seed = 1;
    long long limit = 0;
};

std::string resolve_data_dir(const std::string& flag) {
    if (!flag.empty()) return flag;
    const char* env = std::getenv("ACTCONV_DATA_DIR");
    if (env && *env) return env;
    throw std::invalid_argument("no data directory: pass --data-dir or set ACTCONV_DATA_DIR");
}

Dataset load_split(const DataOptions& opt, const std::string& split) {
    if (opt.source == "synthetic") {
        const bool test = split == "test";
        Rng rng(opt.seed ^ (test ? kTestSeedSalt : kDataSeedSalt));
        int n = test ? kSyntheticTest : kSyntheticTrain;
        if (opt.limit > 0) n = static_cast<int>(std::min<long long>(n, opt.limit));
        Dataset d = synthetic_dilation_task(n, kSyntheticImage, rng);
        d.split = split;
        return d;
    }
    if (opt.source == "cifar10") {
        Dataset d = load_cifar10(resolve_data_dir(opt.dir), split,
                                 split == "train" ? opt.limit : 0);
        global_contrast_normalize(d);
        return d;
    }
    throw std::invalid_argument("unknown data source: " + opt.source);
}

NetworkSpec make_spec(const std::string& arch, double width, int blocks, bool acu,
                      int classes, int in_channels) {
    if (arch == "plain") return build_plain_network(width, classes, acu, in_channels);
    if (arch == "res-basic")
        return build_residual_network(ResidualKind::basic, blocks, classes, acu, in_channels);
    if (arch == "res-bottleneck")
        return build_residual_network(ResidualKind::bottleneck, blocks, classes, acu, in_channels);
    throw std::invalid_argument("unknown arch: " + arch);
}

bool network_has_acu(const NetworkSpec& spec) {
    for (const auto& l : spec.layers)
        if (l.kind == LayerKind::acu) return true;
    return false;
}

int cmd_train(const std::string& config_path, const DataOptions& data_in,
              const std::string& arch, const std::string& acu_flag, double width,
              int blocks, const std::string& out_dir, const std::string& resume) {
    TrainConfig cfg = load_train_config(config_path);
    DataOptions data = data_in;
    data.seed = cfg.seed;

    Dataset train = load_split(data, "train");
    DataOptions test_opt = data;
    test_opt.limit = 0;
    Dataset test = load_split(test_opt, "test");

    const bool use_acu = acu_flag == "on";
    NetworkSpec spec = make_spec(arch, width, blocks, use_acu, train.class_count,
                                 static_cast<int>(train.images.c()));

    TrainState state = resume.empty() ? make_train_state(spec, cfg)
                                      : train_state_from_checkpoint(load_checkpoint(resume));
    if (!resume.empty() && serialize_network_spec(state.net.spec) != serialize_network_spec(spec))
        throw std::invalid_argument("resume checkpoint architecture differs from requested one");

    std::filesystem::create_directories(out_dir);
    TrainSummary summary = train_loop(state, cfg, train, test);

    const std::string metrics_path = out_dir + "/metrics.csv";
    {
        std::ofstream out(metrics_path, std::ios::binary);
        if (!out) throw IoError("cannot write " + metrics_path);
        out << summary.metrics_csv;
    }
    const std::string ckpt_path = out_dir + "/checkpoint.bin";
    save_checkpoint(ckpt_path, state.net, state.velocities, state.iteration,
                    state.rng.state(), state.history);

    std::printf("final_train_loss=%.17g\n", summary.final_loss);
    std::printf("final_test_error_percent=%.17g\n", summary.final_test_error);
    std::printf("wrote %s\n", metrics_path.c_str());
    std::printf("wrote %s\n", ckpt_path.c_str());

    if (network_has_acu(state.net.spec)) {
        const std::string traj_path = out_dir + "/trajectory.csv";
        std::ofstream out(traj_path, std::ios::binary);
        if (!out) throw IoError("cannot write " + traj_path);
        out << trajectory_csv(state.net.spec, state.history);
        std::printf("wrote %s\n", traj_path.c_str());
    }
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const DataOptions& data,
             const std::string& split, long long limit) {
    LoadedCheckpoint ck = load_checkpoint(ckpt_path);
    Dataset d = load_split(data, split);
    double err = evaluate_error(ck.net, d.images, d.labels, limit);
    std::printf("split=%s examples=%lld top1_error_percent=%.17g\n", split.c_str(),
                limit > 0 ? std::min<long long>(limit, d.labels.size())
                          : static_cast<long long>(d.labels.size()),
                err);
    return 0;
}

int cmd_positions(const std::string& ckpt_path, const std::string& csv_path,
                  const std::string& svg_out, const std::string& csv_out) {
    if (ckpt_path.empty() == csv_path.empty())
        throw std::invalid_argument("positions: pass exactly one of --checkpoint or --csv");

    std::vector<LayerScatter> scatter;
    std::string trajectory;
    if (!ckpt_path.empty()) {
        LoadedCheckpoint ck = load_checkpoint(ckpt_path);
        scatter = scatter_from_network(ck.net);
        if (scatter.empty()) throw std::invalid_argument("checkpoint has no position layers");
        trajectory = trajectory_csv(ck.net.spec, ck.history);
    } else {
        std::ifstream in(csv_path, std::ios::binary);
        if (!in) throw IoError("cannot read " + csv_path);
        std::stringstream ss;
        ss << in.rdbuf();
        trajectory = ss.str();
        scatter = scatter_from_trajectory_csv(trajectory);
    }

    if (!csv_out.empty()) {
        std::ofstream out(csv_out, std::ios::binary);
        if (!out) throw IoError("cannot write " + csv_out);
        out << trajectory;
        std::printf("wrote %s\n", csv_out.c_str());
    }
    if (!svg_out.empty()) {
        std::ofstream out(svg_out, std::ios::binary);
        if (!out) throw IoError("cannot write " + svg_out);
        out << positions_svg(scatter);
        std::printf("wrote %s\n", svg_out.c_str());
    }
    if (svg_out.empty() && csv_out.empty())
        std::printf("parsed %zu position layers\n", scatter.size());
    return 0;
}

int run_reports(const char* label, int count, std::uint64_t seed0,
                GradReport (*fn)(std::uint64_t), bool& ok) {
    int failed = 0;
    for (int i = 0; i < count; ++i) {
        GradReport r = fn(seed0 + static_cast<std::uint64_t>(i));
        std::printf("%s %s\n", label, r.line().c_str());
        if (!r.pass) ++failed;
    }
    if (failed) ok = false;
    return failed;
}

GradReport acu_off_lattice(std::uint64_t seed) { return check_acu_instance(seed, false); }
GradReport acu_on_lattice(std::uint64_t seed) { return check_acu_instance(seed, true); }

int cmd_gradcheck(const std::string& module) {
    bool ok = true;
    if (module == "interp" || module == "all")
        run_reports("interp", 200, 1, check_interp_instance, ok);
    if (module == "conv" || module == "all")
        run_reports("conv", 50, 1, check_conv_instance, ok);
    if (module == "acu" || module == "all") {
        run_reports("acu", 30, 1, acu_off_lattice, ok);
        run_reports("acu-lattice", 30, 1, acu_on_lattice, ok);
    }
    if (module == "network" || module == "all")
        run_reports("network", 3, 1, check_network_instance, ok);
    std::printf("gradcheck %s\n", ok ? "PASS" : "FAIL");
    return ok ? 0 : 1;
}

struct BenchShape {
    int c, d, h, w, k;
};

double median_ms(std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int cmd_bench(const std::string& shapes_path, const std::string& out_path, int reps) {
    if (reps < 1) throw std::invalid_argument("bench: reps must be positive");
    std::ifstream in(shapes_path);
    if (!in) throw IoError("cannot read " + shapes_path);

    std::vector<BenchShape> shapes;
    std::string line;
    while (std::getline(in, line)) {
        std::string body = line.substr(0, line.find('#'));
        std::istringstream ls(body);
        BenchShape s{};
        if (!(ls >> s.c >> s.d >> s.h >> s.w >> s.k)) {
            // anything left on the line means truncated or non-numeric, not blank
            std::istringstream probe(body);
            std::string rest;
            if (probe >> rest)
                throw std::invalid_argument("bench: malformed shape line: " + line);
            continue;  // blank / comment-only line
        }
        std::string rest;
        if (ls >> rest)
            throw std::invalid_argument("bench: malformed shape line: " + line);
        if (s.c < 1 || s.d < 1 || s.h < 1 || s.w < 1)
            throw std::invalid_argument("bench: shape dims must be positive: " + line);
        if (s.k != 1 && s.k != 9)
            throw std::invalid_argument("bench: synapse count must be 1 or 9: " + line);
        shapes.push_back(s);
    }

    std::ostringstream csv;
    csv << "c,d,h,w,k,conv_ms,acu_ms,ratio\n";
    Rng rng(7);
    for (const BenchShape& s : shapes) {
        const int kernel = s.k == 1 ? 1 : 3;
        const int pad = kernel / 2;

        Tensor x(1, s.c, s.h, s.w);
        for (std::int64_t i = 0; i < x.size(); ++i)
            x.data()[i] = 2.0 * rng.uniform01() - 1.0;

        ConvParams conv;
        conv.weights = Tensor(s.d, s.c, kernel, kernel);
        conv.bias.assign(static_cast<size_t>(s.d), 0.1);
        conv.stride = 1;
        conv.pad = pad;
        for (std::int64_t i = 0; i < conv.weights.size(); ++i)
            conv.weights.data()[i] = rng.normal(0.0, 0.2);

        SynapsePositions init;
        if (s.k == 1) {
            init.points = {{0.0, 0.0}};  // identical extent to 1x1; exercises the gather path
        } else {
            // half-spaced grid keeps the lattice footprint at 3x3 while forcing
            // genuine four-corner interpolation on every synapse
            for (int a = -1; a <= 1; ++a)
                for (int b = -1; b <= 1; ++b)
                    init.points.push_back({0.5 * a, 0.5 * b});
        }
        init.origin_fixed = false;
        Rng wrng(11);
        AcuLayer acu = make_acu_layer(s.c, s.d, init, 1, pad, 1, wrng);
        std::copy(conv.bias.begin(), conv.bias.end(), acu.bias.begin());
        for (std::int64_t i = 0; i < acu.weights.size(); ++i)
            acu.weights.data()[i] = rng.normal(0.0, 0.2);

        auto time_ms = [&](auto&& fn) {
            std::vector<double> t;
            t.reserve(static_cast<size_t>(reps));
            fn();  // warm-up
            for (int r = 0; r < reps; ++r) {
                auto t0 = std::chrono::steady_clock::now();
                fn();
                auto t1 = std::chrono::steady_clock::now();
                t.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
            }
            return median_ms(t);
        };

        double conv_ms = time_ms([&] { conv2d(x, conv); });
        double acu_ms = time_ms([&] { acu_forward(x, acu, nullptr); });
        char row[256];
        std::snprintf(row, sizeof row, "%d,%d,%d,%d,%d,%.6f,%.6f,%.4f\n", s.c, s.d, s.h,
                      s.w, s.k, conv_ms, acu_ms, acu_ms / conv_ms);
        csv << row;
    }

    if (out_path.empty()) {
        std::fputs(csv.str().c_str(), stdout);
    } else {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) throw IoError("cannot write " + out_path);
        out << csv.str();
        std::printf("wrote %s\n", out_path.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"active convolution workbench"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "train a network and write artifacts");
    std::string cfg_path, out_dir = "run", resume;
    DataOptions data;
    std::string arch = "plain", acu_flag = "on", split = "test";
    double width = 1.0;
    int blocks = 5;
    long long eval_limit = 0;
    train->add_option("--config", cfg_path, "training config file")->required();
    train->add_option("--data", data.source, "data source")
        ->check(CLI::IsMember({"synthetic", "cifar10"}));
    train->add_option("--data-dir", data.dir, "dataset directory (default $ACTCONV_DATA_DIR)");
    train->add_option("--arch", arch, "network family")
        ->check(CLI::IsMember({"plain", "res-basic", "res-bottleneck"}));
    train->add_option("--acu", acu_flag, "learnable positions on/off")
        ->check(CLI::IsMember({"on", "off"}));
    train->add_option("--width", width, "plain network width multiplier");
    train->add_option("--blocks", blocks, "residual blocks per stage");
    train->add_option("--limit", data.limit, "cap on training examples (0 = all)");
    train->add_option("--out", out_dir, "output directory");
    train->add_option("--resume", resume, "checkpoint to continue from");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ckpt_path;
    eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    eval->add_option("--data", data.source, "data source")
        ->check(CLI::IsMember({"synthetic", "cifar10"}));
    eval->add_option("--data-dir", data.dir, "dataset directory (default $ACTCONV_DATA_DIR)");
    eval->add_option("--split", split, "dataset split")->check(CLI::IsMember({"train", "test"}));
    eval->add_option("--seed", data.seed, "seed for synthetic data generation");
    eval->add_option("--limit", eval_limit, "cap on evaluated examples (0 = all)");

    // positions
    auto* positions = app.add_subcommand("positions", "export synapse positions");
    std::string pos_ckpt, pos_csv, svg_out, csv_out;
    positions->add_option("--checkpoint", pos_ckpt, "checkpoint file");
    positions->add_option("--csv", pos_csv, "previously exported trajectory csv");
    positions->add_option("--svg", svg_out, "write scatter plot svg");
    positions->add_option("--csv-out", csv_out, "write trajectory csv");

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    std::string module = "all";
    gradcheck->add_option("--module", module, "which module to check")
        ->check(CLI::IsMember({"interp", "conv", "acu", "network", "all"}));

    // bench
    auto* bench = app.add_subcommand("bench", "micro-benchmark conv vs learned positions");
    std::string shapes_path, bench_out;
    int reps = 30;
    bench->add_option("--shapes", shapes_path, "file with 'C D H W K' lines")->required();
    bench->add_option("--out", bench_out, "output csv (default stdout)");
    bench->add_option("--reps", reps, "timed repetitions per shape");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;  // bad arguments are validation errors
    }

    try {
        if (train->parsed())
            return cmd_train(cfg_path, data, arch, acu_flag, width, blocks, out_dir, resume);
        if (eval->parsed()) return cmd_eval(ckpt_path, data, split, eval_limit);
        if (positions->parsed()) return cmd_positions(pos_ckpt, pos_csv, svg_out, csv_out);
        if (gradcheck->parsed()) return cmd_gradcheck(module);
        if (bench->parsed()) return cmd_bench(shapes_path, bench_out, reps);
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 2;
    } catch (const NanLossError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
