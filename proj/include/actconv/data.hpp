#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "actconv/rng.hpp"
#include "actconv/tensor.hpp"

namespace actconv {

/// Thrown for missing, truncated, or unwritable dataset files so callers
/// can distinguish I/O failures from validation failures.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Dataset {
    Tensor images;            // N x C x H x W
    std::vector<int> labels;  // values in [0, class_count)
    std::string split;        // "train" | "test" | "synthetic"
    int class_count = 0;
};

/// Reads the standard binary batches (3073-byte records: label byte +
/// 3072 CHW pixels, R plane then G then B). `dir` may be the batch
/// directory itself or its parent containing cifar-10-batches-bin.
/// split "train" concatenates data_batch_1..5, "test" reads test_batch.
/// With limit > 0, only the first `limit` records are kept.
Dataset load_cifar10(const std::string& dir, const std::string& split,
                     std::int64_t limit = 0);

/// Writes a 3 x 32 x 32 dataset back to the binary record format (values
/// rounded and clamped to bytes). Lets synthetic data reuse the loader
/// pipeline.
void write_cifar_records(const std::string& path, const Dataset& d);

/// Per-image: subtract the mean, divide by max(std, 1e-8). Constant
/// images map to zero.
void global_contrast_normalize(Dataset& d);

/// Symmetric whitening transform fitted on a dataset: covariance
/// eigendecomposition with a ridge added to the eigenvalues,
/// W = U (Lambda + ridge I)^(-1/2) U^T. Off by default in the pipeline;
/// fit on train, apply to both splits.
struct ZcaTransform {
    std::int64_t dim = 0;
    std::vector<double> mean;    // dim
    std::vector<double> matrix;  // dim x dim, row-major
};
ZcaTransform fit_zca(const Dataset& d, double ridge = 0.1);
void apply_zca(const ZcaTransform& t, Dataset& d);

/// Deterministic augmentation core: zero-pad 4 on every side, crop H x W
/// at (off_h, off_w) in [0,8]^2, then mirror horizontally if `flip`.
/// Reads image `idx` of `images` into a fresh tensor slab at `out`+offset.
void augment_image(const Tensor& images, std::int64_t idx, int off_h,
                   int off_w, bool flip, Tensor& out, std::int64_t out_idx);

/// Random crop + horizontal flip for a whole batch. Per image, in index
/// order, draws off_h, off_w (uniform_int 9) then the flip coin.
Tensor augment_batch(const Tensor& images, Rng& rng);

struct DilationTaskParams {
    double offset = 3.0;     // blob displacement from center, along height
    double sigma = 0.7;
    double amplitude = 2.0;
    double noise = 0.05;
};

/// Two-class single-channel task: each image carries two Gaussian blobs
/// at +-offset from a jittered center, signs s1, s2 in {-1,+1}; the label
/// says whether the signs agree. GAP features of any local window that
/// sees at most one blob are additive in (s1, s2), which caps a linear
/// readout at 75% -- separating the classes requires a receptive field
/// wide enough to combine both blobs. Labels alternate, so the set is
/// balanced to within one.
Dataset synthetic_dilation_task(std::int64_t n, int size, Rng& rng,
                                const DilationTaskParams& params = {});

}  // namespace actconv
