// End-to-end checks of the actconv binary: every subcommand is exercised
// through std::system against a scratch directory, and the documented exit
// codes (0 ok, 1 validation, 2 i/o) are pinned down.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = -1;
    std::string out;  // stdout and stderr interleaved
};

const fs::path& work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "actconv_cli_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(bool(in), "missing file: " << path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(bool(out));
    out << text;
}

CliResult run_cli(const std::string& args) {
    static int counter = 0;
    const fs::path capture = work_dir() / ("capture" + std::to_string(counter++) + ".log");
    const std::string cmd =
        std::string(ACTCONV_CLI_PATH) + " " + args + " > " + capture.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    CliResult r;
    if (status != -1 && WIFEXITED(status)) r.code = WEXITSTATUS(status);
    r.out = read_file(capture);
    return r;
}

// Value printed as "<key>=<double>" somewhere in the output.
double value_after(const std::string& out, const std::string& key) {
    const std::string needle = key + "=";
    const size_t at = out.find(needle);
    REQUIRE_MESSAGE(at != std::string::npos, "no '" << needle << "' in:\n" << out);
    return std::strtod(out.c_str() + at + needle.size(), nullptr);
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line))
        if (!line.empty()) lines.push_back(line);
    return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    return fields;
}

// Two 2000-iteration runs on the synthetic task sharing one config: a fixed
// 3x3 baseline and its learnable-position twin. Built once, reused by the
// cases below.
const char* kTrainCfg =
    "base_lr=0.1\n"
    "momentum=0.9\n"
    "weight_decay=0.0001\n"
    "lr_drop_steps=1200,1600\n"
    "lr_drop_factor=0.1\n"
    "total_iters=2000\n"
    "warmup_iters=200\n"
    "batch_size=16\n"
    "position_lr_scale=0.5\n"
    "seed=3\n"
    "log_interval=100\n"
    "eval_limit=256\n"
    "augment=0\n";

struct PairedRuns {
    fs::path conv_dir, acu_dir;
    CliResult conv, acu;
};

const PairedRuns& paired_runs() {
    static const PairedRuns runs = [] {
        PairedRuns r;
        r.conv_dir = work_dir() / "conv_run";
        r.acu_dir = work_dir() / "acu_run";
        const fs::path cfg = work_dir() / "train.cfg";
        write_file(cfg, kTrainCfg);
        const std::string common = "train --config " + cfg.string() +
                                   " --data synthetic --arch plain --width 0.25";
        r.conv = run_cli(common + " --acu off --out " + r.conv_dir.string());
        r.acu = run_cli(common + " --acu on --out " + r.acu_dir.string());
        return r;
    }();
    return runs;
}

}  // namespace

TEST_CASE("train writes metrics, checkpoint and summary lines") {
    const PairedRuns& runs = paired_runs();
    REQUIRE_MESSAGE(runs.conv.code == 0, runs.conv.out);

    CHECK(runs.conv.out.find("wrote " + (runs.conv_dir / "metrics.csv").string()) !=
          std::string::npos);
    CHECK(runs.conv.out.find("wrote " + (runs.conv_dir / "checkpoint.bin").string()) !=
          std::string::npos);

    const double loss = value_after(runs.conv.out, "final_train_loss");
    CHECK(loss < 0.3);  // the synthetic task is easy at this budget
    const double err = value_after(runs.conv.out, "final_test_error_percent");
    CHECK(err >= 0.0);
    CHECK(err <= 100.0);

    const auto metrics = lines_of(read_file(runs.conv_dir / "metrics.csv"));
    REQUIRE(!metrics.empty());
    CHECK(metrics[0] == "iter,lr,train_loss,test_error");
    CHECK(metrics.size() == 1 + 2000 / 100);  // one row per log interval
    for (size_t i = 1; i < metrics.size(); ++i) CHECK(split_csv(metrics[i]).size() == 4);

    CHECK(fs::file_size(runs.conv_dir / "checkpoint.bin") > 0);
    // fixed-grid networks have no positions to track
    CHECK(!fs::exists(runs.conv_dir / "trajectory.csv"));
}

TEST_CASE("learnable positions leave the integer grid and match the baseline") {
    const PairedRuns& runs = paired_runs();
    REQUIRE_MESSAGE(runs.acu.code == 0, runs.acu.out);

    // Same budget, same data: the learnable twin must not end up worse.
    const double conv_err = value_after(runs.conv.out, "final_test_error_percent");
    const double acu_err = value_after(runs.acu.out, "final_test_error_percent");
    CHECK(acu_err <= conv_err);

    const auto traj = lines_of(read_file(runs.acu_dir / "trajectory.csv"));
    REQUIRE(traj.size() > 1);
    CHECK(traj[0] == "layer,synapse,iter,alpha,beta");

    long long max_iter = 0;
    for (size_t i = 1; i < traj.size(); ++i)
        max_iter = std::max(max_iter, std::stoll(split_csv(traj[i])[2]));
    CHECK(max_iter == 2000);

    double largest_final = 0.0;
    for (size_t i = 1; i < traj.size(); ++i) {
        const auto f = split_csv(traj[i]);
        REQUIRE(f.size() == 5);
        const long long iter = std::stoll(f[2]);
        const double alpha = std::stod(f[3]);
        const double beta = std::stod(f[4]);
        if (iter == 0) {
            // starts on the integer 3x3 grid (the csv round-trips doubles exactly)
            CHECK(alpha == std::round(alpha));
            CHECK(beta == std::round(beta));
            CHECK(std::abs(alpha) <= 1.0);
            CHECK(std::abs(beta) <= 1.0);
        }
        if (iter == max_iter)
            largest_final = std::max({largest_final, std::abs(alpha), std::abs(beta)});
    }
    // at least one synapse wandered well beyond its initial cell
    CHECK(largest_final > 1.5);
}

TEST_CASE("positions export round-trips through csv") {
    const PairedRuns& runs = paired_runs();
    REQUIRE(runs.acu.code == 0);

    const fs::path csv = work_dir() / "positions.csv";
    const fs::path svg = work_dir() / "positions.svg";
    CliResult from_ckpt =
        run_cli("positions --checkpoint " + (runs.acu_dir / "checkpoint.bin").string() +
                " --csv-out " + csv.string() + " --svg " + svg.string());
    REQUIRE_MESSAGE(from_ckpt.code == 0, from_ckpt.out);

    // checkpoint export reproduces the training-time trajectory byte for byte
    CHECK(read_file(csv) == read_file(runs.acu_dir / "trajectory.csv"));

    const fs::path svg2 = work_dir() / "positions_roundtrip.svg";
    CliResult from_csv = run_cli("positions --csv " + csv.string() + " --svg " + svg2.string());
    REQUIRE_MESSAGE(from_csv.code == 0, from_csv.out);
    const std::string svg_bytes = read_file(svg);
    CHECK(svg_bytes.find("<svg") != std::string::npos);
    CHECK(read_file(svg2) == svg_bytes);
}

TEST_CASE("eval reproduces the logged final test error and the train slice overfits") {
    const fs::path cfg = work_dir() / "overfit.cfg";
    write_file(cfg,
               "base_lr=0.05\n"
               "momentum=0.9\n"
               "weight_decay=0\n"
               "total_iters=600\n"
               "warmup_iters=600\n"
               "batch_size=8\n"
               "seed=21\n"
               "log_interval=200\n"
               "eval_limit=8\n");
    const fs::path dir = work_dir() / "overfit_run";
    CliResult train = run_cli("train --config " + cfg.string() +
                              " --data synthetic --arch plain --acu off --width 0.25" +
                              " --limit 8 --out " + dir.string());
    REQUIRE_MESSAGE(train.code == 0, train.out);
    const double logged = value_after(train.out, "final_test_error_percent");

    const std::string ckpt = (dir / "checkpoint.bin").string();
    CliResult test_eval = run_cli("eval --checkpoint " + ckpt +
                                  " --data synthetic --split test --seed 21 --limit 8");
    REQUIRE_MESSAGE(test_eval.code == 0, test_eval.out);
    CHECK(test_eval.out.find("split=test examples=8") != std::string::npos);
    // identical data, identical weights: the numbers agree exactly
    CHECK(value_after(test_eval.out, "top1_error_percent") == logged);

    // 600 iterations on the 8 training examples it saw: memorized
    CliResult train_eval = run_cli("eval --checkpoint " + ckpt +
                                   " --data synthetic --split train --seed 21 --limit 8");
    REQUIRE_MESSAGE(train_eval.code == 0, train_eval.out);
    CHECK(value_after(train_eval.out, "top1_error_percent") == 0.0);
}

TEST_CASE("an untrained network sits at chance level") {
    const fs::path cfg = work_dir() / "untrained.cfg";
    write_file(cfg,
               "base_lr=1e-12\n"
               "total_iters=1\n"
               "warmup_iters=1\n"
               "batch_size=8\n"
               "seed=11\n"
               "log_interval=1\n"
               "eval_limit=32\n");
    const fs::path dir = work_dir() / "untrained_run";
    CliResult train = run_cli("train --config " + cfg.string() +
                              " --data synthetic --arch plain --acu on --width 0.25 --out " +
                              dir.string());
    REQUIRE_MESSAGE(train.code == 0, train.out);

    CliResult ev = run_cli("eval --checkpoint " + (dir / "checkpoint.bin").string() +
                           " --data synthetic --split test --seed 11");
    REQUIRE_MESSAGE(ev.code == 0, ev.out);
    CHECK(ev.out.find("examples=1024") != std::string::npos);
    const double err = value_after(ev.out, "top1_error_percent");
    // two balanced classes: a fresh network lands near the 50% coin flip
    CHECK(err > 40.0);
    CHECK(err < 65.0);
}

TEST_CASE("gradcheck subcommand reports pass") {
    CliResult r = run_cli("gradcheck --module interp");
    REQUIRE_MESSAGE(r.code == 0, r.out);
    CHECK(r.out.find("gradcheck PASS") != std::string::npos);
}

TEST_CASE("bench writes one csv row per shape and holds the single-synapse band") {
    const fs::path shapes = work_dir() / "shapes.txt";
    write_file(shapes,
               "# c d h w k\n"
               "32 32 32 32 1\n"
               "32 32 32 32 9\n");
    const fs::path out = work_dir() / "bench.csv";
    CliResult r = run_cli("bench --shapes " + shapes.string() + " --out " + out.string());
    REQUIRE_MESSAGE(r.code == 0, r.out);

    const auto rows = lines_of(read_file(out));
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == "c,d,h,w,k,conv_ms,acu_ms,ratio");
    for (int i : {1, 2}) {
        const auto f = split_csv(rows[i]);
        REQUIRE(f.size() == 8);
        CHECK(std::stod(f[5]) > 0.0);  // conv_ms
        CHECK(std::stod(f[6]) > 0.0);  // acu_ms
    }
    const auto k1 = split_csv(rows[1]);
    CHECK(k1[4] == "1");
    const double ratio1 = std::stod(k1[7]);
    CHECK(ratio1 >= 0.5);
    CHECK(ratio1 <= 2.0);
    const auto k9 = split_csv(rows[2]);
    CHECK(k9[4] == "9");
    CHECK(std::stod(k9[7]) > 0.0);
}

TEST_CASE("bench handles empty and rejects malformed shape files") {
    const fs::path empty = work_dir() / "empty_shapes.txt";
    write_file(empty, "# nothing but comments\n\n");
    CliResult header_only = run_cli("bench --shapes " + empty.string());
    REQUIRE(header_only.code == 0);
    CHECK(header_only.out == "c,d,h,w,k,conv_ms,acu_ms,ratio\n");

    const fs::path bad = work_dir() / "bad_shapes.txt";
    write_file(bad, "32 32 32\n");
    CliResult malformed = run_cli("bench --shapes " + bad.string());
    CHECK(malformed.code == 1);
    CHECK(malformed.out.find("malformed shape line") != std::string::npos);

    const fs::path badk = work_dir() / "badk_shapes.txt";
    write_file(badk, "8 8 8 8 5\n");
    CliResult bad_k = run_cli("bench --shapes " + badk.string());
    CHECK(bad_k.code == 1);
    CHECK(bad_k.out.find("synapse count must be 1 or 9") != std::string::npos);
}

TEST_CASE("exit codes separate validation from io failures") {
    CHECK(run_cli("--help").code == 0);
    CHECK(run_cli("").code == 1);            // a subcommand is required
    CHECK(run_cli("frobnicate").code == 1);  // unknown subcommand
    CHECK(run_cli("train").code == 1);       // --config is required
    CHECK(run_cli("train --config x.cfg --no-such-flag").code == 1);
    CHECK(run_cli("gradcheck --module bogus").code == 1);

    const fs::path missing = work_dir() / "does_not_exist";
    CliResult bad_cfg = run_cli("train --config " + missing.string());
    CHECK(bad_cfg.code == 2);
    CHECK(bad_cfg.out.find("io error") != std::string::npos);

    CliResult bad_ckpt = run_cli("eval --checkpoint " + missing.string());
    CHECK(bad_ckpt.code == 2);
    CHECK(bad_ckpt.out.find("io error") != std::string::npos);

    // positions needs exactly one source
    CHECK(run_cli("positions").code == 1);
    CliResult both = run_cli("positions --checkpoint a.bin --csv b.csv");
    CHECK(both.code == 1);
    CHECK(both.out.find("exactly one of") != std::string::npos);
}
