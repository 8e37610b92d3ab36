#include "actconv/data.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace actconv {

namespace {

constexpr std::int64_t kCifarPixels = 3 * 32 * 32;
constexpr std::int64_t kCifarRecord = 1 + kCifarPixels;

std::filesystem::path batch_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path root(dir);
    if (fs::exists(root / "data_batch_1.bin") ||
        fs::exists(root / "test_batch.bin")) {
        return root;
    }
    const fs::path nested = root / "cifar-10-batches-bin";
    if (fs::exists(nested / "data_batch_1.bin") ||
        fs::exists(nested / "test_batch.bin")) {
        return nested;
    }
    throw IoError("no CIFAR-10 binary batches under " + dir);
}

void read_batch_file(const std::filesystem::path& path, Dataset& d,
                     std::int64_t& filled, std::int64_t want) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    f.seekg(0, std::ios::end);
    const std::int64_t bytes = f.tellg();
    f.seekg(0);
    if (bytes % kCifarRecord != 0) {
        throw IoError("truncated batch file " + path.string() + " (" +
                      std::to_string(bytes) + " bytes)");
    }
    const std::int64_t records =
        std::min(bytes / kCifarRecord, want - filled);
    std::vector<unsigned char> rec(static_cast<std::size_t>(kCifarRecord));
    for (std::int64_t r = 0; r < records; ++r) {
        f.read(reinterpret_cast<char*>(rec.data()), kCifarRecord);
        if (!f) throw IoError("short read in " + path.string());
        if (rec[0] > 9) {
            throw IoError("bad label byte in " + path.string());
        }
        d.labels[static_cast<std::size_t>(filled)] = rec[0];
        double* dst = d.images.data() + filled * kCifarPixels;
        for (std::int64_t i = 0; i < kCifarPixels; ++i) {
            dst[i] = static_cast<double>(rec[static_cast<std::size_t>(i) + 1]);
        }
        ++filled;
    }
}

std::int64_t count_records(const std::filesystem::path& path) {
    std::error_code ec;
    const auto bytes = std::filesystem::file_size(path, ec);
    if (ec) throw IoError("cannot stat " + path.string());
    if (bytes % kCifarRecord != 0) {
        throw IoError("truncated batch file " + path.string());
    }
    return static_cast<std::int64_t>(bytes) / kCifarRecord;
}

}  // namespace

Dataset load_cifar10(const std::string& dir, const std::string& split,
                     std::int64_t limit) {
    if (split != "train" && split != "test") {
        throw std::invalid_argument("load_cifar10: split must be train|test");
    }
    const std::filesystem::path root = batch_dir(dir);
    std::vector<std::filesystem::path> files;
    if (split == "train") {
        for (int i = 1; i <= 5; ++i) {
            files.push_back(root / ("data_batch_" + std::to_string(i) + ".bin"));
        }
    } else {
        files.push_back(root / "test_batch.bin");
    }

    std::int64_t total = 0;
    for (const auto& f : files) total += count_records(f);
    if (limit > 0) total = std::min(total, limit);
    if (total == 0) throw IoError("empty CIFAR-10 split in " + dir);

    Dataset d;
    d.split = split;
    d.class_count = 10;
    d.images = Tensor(total, 3, 32, 32);
    d.labels.assign(static_cast<std::size_t>(total), 0);
    std::int64_t filled = 0;
    for (const auto& f : files) {
        if (filled >= total) break;
        read_batch_file(f, d, filled, total);
    }
    return d;
}

void write_cifar_records(const std::string& path, const Dataset& d) {
    if (d.images.c() != 3 || d.images.h() != 32 || d.images.w() != 32) {
        throw std::invalid_argument(
            "write_cifar_records: images must be N x 3 x 32 x 32");
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot create " + path);
    std::vector<unsigned char> rec(static_cast<std::size_t>(kCifarRecord));
    for (std::int64_t n = 0; n < d.images.n(); ++n) {
        rec[0] = static_cast<unsigned char>(d.labels[static_cast<std::size_t>(n)]);
        const double* src = d.images.data() + n * kCifarPixels;
        for (std::int64_t i = 0; i < kCifarPixels; ++i) {
            const double v = std::clamp(std::round(src[i]), 0.0, 255.0);
            rec[static_cast<std::size_t>(i) + 1] =
                static_cast<unsigned char>(v);
        }
        f.write(reinterpret_cast<const char*>(rec.data()), kCifarRecord);
    }
    if (!f) throw IoError("write failed for " + path);
}

void global_contrast_normalize(Dataset& d) {
    const std::int64_t N = d.images.n();
    const std::int64_t plane = d.images.c() * d.images.h() * d.images.w();
    if (plane == 0) return;
    for (std::int64_t n = 0; n < N; ++n) {
        double* px = d.images.data() + n * plane;
        double mean = 0.0;
        for (std::int64_t i = 0; i < plane; ++i) mean += px[i];
        mean /= static_cast<double>(plane);
        double var = 0.0;
        for (std::int64_t i = 0; i < plane; ++i) {
            const double c = px[i] - mean;
            var += c * c;
        }
        const double stddev = std::sqrt(var / static_cast<double>(plane));
        const double inv = 1.0 / std::max(stddev, 1e-8);
        for (std::int64_t i = 0; i < plane; ++i) {
            px[i] = (px[i] - mean) * inv;
        }
    }
}

ZcaTransform fit_zca(const Dataset& d, double ridge) {
    const std::int64_t N = d.images.n();
    const std::int64_t dim = d.images.c() * d.images.h() * d.images.w();
    if (N < 2) throw std::invalid_argument("fit_zca: need at least 2 images");
    if (ridge < 0.0) throw std::invalid_argument("fit_zca: ridge < 0");

    ZcaTransform t;
    t.dim = dim;
    t.mean.assign(static_cast<std::size_t>(dim), 0.0);
    for (std::int64_t n = 0; n < N; ++n) {
        const double* px = d.images.data() + n * dim;
        for (std::int64_t i = 0; i < dim; ++i) {
            t.mean[static_cast<std::size_t>(i)] += px[i];
        }
    }
    for (double& m : t.mean) m /= static_cast<double>(N);

    // Covariance, then eigendecomposition in place.
    std::vector<double> cov(static_cast<std::size_t>(dim * dim), 0.0);
    for (std::int64_t n = 0; n < N; ++n) {
        const double* px = d.images.data() + n * dim;
        for (std::int64_t i = 0; i < dim; ++i) {
            const double ci = px[i] - t.mean[static_cast<std::size_t>(i)];
            double* row = cov.data() + i * dim;
            for (std::int64_t j = i; j < dim; ++j) {
                row[j] += ci * (px[j] - t.mean[static_cast<std::size_t>(j)]);
            }
        }
    }
    for (std::int64_t i = 0; i < dim; ++i) {
        for (std::int64_t j = i; j < dim; ++j) {
            const double v = cov[static_cast<std::size_t>(i * dim + j)] /
                             static_cast<double>(N);
            cov[static_cast<std::size_t>(i * dim + j)] = v;
            cov[static_cast<std::size_t>(j * dim + i)] = v;
        }
    }

    std::vector<double> eigvals(static_cast<std::size_t>(dim));
    const lapack_int info = LAPACKE_dsyevd(
        LAPACK_ROW_MAJOR, 'V', 'U', static_cast<lapack_int>(dim), cov.data(),
        static_cast<lapack_int>(dim), eigvals.data());
    if (info != 0) {
        throw std::runtime_error("fit_zca: eigendecomposition failed (info=" +
                                 std::to_string(info) + ")");
    }

    // W = U diag(1/sqrt(lambda + ridge)) U^T; cov now holds U column-wise
    // per row-major convention (row i = component i of each eigenvector).
    t.matrix.assign(static_cast<std::size_t>(dim * dim), 0.0);
    std::vector<double> scaled(static_cast<std::size_t>(dim));
    for (std::int64_t i = 0; i < dim; ++i) {
        for (std::int64_t k = 0; k < dim; ++k) {
            scaled[static_cast<std::size_t>(k)] =
                cov[static_cast<std::size_t>(i * dim + k)] /
                std::sqrt(eigvals[static_cast<std::size_t>(k)] + ridge);
        }
        for (std::int64_t j = i; j < dim; ++j) {
            double s = 0.0;
            const double* vj = cov.data() + j * dim;
            for (std::int64_t k = 0; k < dim; ++k) {
                s += scaled[static_cast<std::size_t>(k)] * vj[k];
            }
            t.matrix[static_cast<std::size_t>(i * dim + j)] = s;
            t.matrix[static_cast<std::size_t>(j * dim + i)] = s;
        }
    }
    return t;
}

void apply_zca(const ZcaTransform& t, Dataset& d) {
    const std::int64_t dim = d.images.c() * d.images.h() * d.images.w();
    if (dim != t.dim) {
        throw std::invalid_argument("apply_zca: dimension mismatch");
    }
    std::vector<double> centered(static_cast<std::size_t>(dim));
    for (std::int64_t n = 0; n < d.images.n(); ++n) {
        double* px = d.images.data() + n * dim;
        for (std::int64_t i = 0; i < dim; ++i) {
            centered[static_cast<std::size_t>(i)] =
                px[i] - t.mean[static_cast<std::size_t>(i)];
        }
        for (std::int64_t i = 0; i < dim; ++i) {
            const double* row = t.matrix.data() + i * dim;
            double s = 0.0;
            for (std::int64_t j = 0; j < dim; ++j) {
                s += row[j] * centered[static_cast<std::size_t>(j)];
            }
            px[i] = s;
        }
    }
}

void augment_image(const Tensor& images, std::int64_t idx, int off_h,
                   int off_w, bool flip, Tensor& out, std::int64_t out_idx) {
    const std::int64_t C = images.c(), H = images.h(), W = images.w();
    if (off_h < 0 || off_h > 8 || off_w < 0 || off_w > 8) {
        throw std::invalid_argument("augment_image: offsets must be in [0,8]");
    }
    for (std::int64_t c = 0; c < C; ++c) {
        const double* src = images.data() + images.offset(idx, c, 0, 0);
        double* dst = out.data() + out.offset(out_idx, c, 0, 0);
        for (std::int64_t h = 0; h < H; ++h) {
            const std::int64_t sh = h + off_h - 4;
            for (std::int64_t w = 0; w < W; ++w) {
                const std::int64_t cw = flip ? W - 1 - w : w;
                const std::int64_t sw = cw + off_w - 4;
                dst[h * W + w] = (sh >= 0 && sh < H && sw >= 0 && sw < W)
                                     ? src[sh * W + sw]
                                     : 0.0;
            }
        }
    }
}

Tensor augment_batch(const Tensor& images, Rng& rng) {
    Tensor out(images.n(), images.c(), images.h(), images.w());
    for (std::int64_t n = 0; n < images.n(); ++n) {
        const int off_h = static_cast<int>(rng.uniform_int(9));
        const int off_w = static_cast<int>(rng.uniform_int(9));
        const bool flip = rng.uniform01() < 0.5;
        augment_image(images, n, off_h, off_w, flip, out, n);
    }
    return out;
}

Dataset synthetic_dilation_task(std::int64_t n, int size, Rng& rng,
                                const DilationTaskParams& params) {
    if (size < 9) {
        throw std::invalid_argument("synthetic_dilation_task: size must be >= 9");
    }
    if (n < 1) {
        throw std::invalid_argument("synthetic_dilation_task: n must be >= 1");
    }
    const int off = static_cast<int>(params.offset);

    Dataset d;
    d.split = "synthetic";
    d.class_count = 2;
    d.images = Tensor(n, 1, size, size);
    d.labels.assign(static_cast<std::size_t>(n), 0);

    const double inv2s2 = 1.0 / (2.0 * params.sigma * params.sigma);
    for (std::int64_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 2);  // alternating: balanced
        d.labels[static_cast<std::size_t>(i)] = label;
        const double s1 = rng.uniform01() < 0.5 ? 1.0 : -1.0;
        const double s2 = label == 1 ? s1 : -s1;  // 1 = signs agree
        const int ch = off + 1 + static_cast<int>(rng.uniform_int(
                                     size - 2 * (off + 1)));
        const int cw =
            2 + static_cast<int>(rng.uniform_int(static_cast<std::int64_t>(size) - 4));

        double* px = d.images.data() + d.images.offset(i, 0, 0, 0);
        for (int h = 0; h < size; ++h) {
            for (int w = 0; w < size; ++w) {
                const double d1h = h - (ch - params.offset);
                const double d2h = h - (ch + params.offset);
                const double dw = w - cw;
                const double blob =
                    s1 * std::exp(-(d1h * d1h + dw * dw) * inv2s2) +
                    s2 * std::exp(-(d2h * d2h + dw * dw) * inv2s2);
                px[h * size + w] = params.amplitude * blob +
                                   params.noise * rng.normal();
            }
        }
    }
    return d;
}

}  // namespace actconv
