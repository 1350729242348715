#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ntr/rng.hpp"
#include "ntr/tensor_ops.hpp"

namespace ntr {

/// Raw contents of one IDX file: header dims plus unsigned-byte payload.
struct IdxData {
    std::vector<index_t> dims;
    std::vector<std::uint8_t> payload;
};

/// Parses an IDX file (plain or gzip; gzip is detected by magic bytes).
/// expected_magic is the full 4-byte big-endian magic, e.g. 0x00000803 for
/// image files and 0x00000801 for label files; 0 accepts any ubyte IDX.
/// Malformed input raises FormatError naming the offending byte offset.
IdxData read_idx_file(const std::string& path, std::uint32_t expected_magic = 0);

/// Writers for the same container (fixtures and round-trip tests).
void write_idx_images(const std::string& path, index_t count, index_t rows, index_t cols,
                      const std::vector<std::uint8_t>& pixels);
void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

/// Resolution order for the dataset root: $NTR_DATA_DIR, ./data, ../data.
/// Returns an empty string when nothing exists.
std::string default_data_dir();

/// Locates `<data_dir>/<dataset>/<base>` or its .gz twin; FormatError with
/// both candidate paths when neither exists.
std::string find_dataset_file(const std::string& data_dir, const std::string& dataset,
                              const std::string& base);

/// In-memory split: images scaled to [0,1], shape (n, rows, cols, 1).
template <typename T>
struct Dataset {
    Tensor<T> images;
    std::vector<int> labels;
    std::string split; // "train" or "test"

    index_t size() const { return static_cast<index_t>(labels.size()); }
};

/// Loads an images/labels IDX pair into a Dataset. Pixels are divided by 255;
/// no other preprocessing. Image/label counts must agree and labels must lie
/// in [0,9].
template <typename T>
Dataset<T> load_idx(const std::string& images_path, const std::string& labels_path,
                    std::string split = "train") {
    IdxData imgs = read_idx_file(images_path, 0x00000803u);
    IdxData labs = read_idx_file(labels_path, 0x00000801u);
    if (imgs.dims.size() != 3)
        throw FormatError("load_idx: image file must have 3 dims (count, rows, cols): " + images_path);
    if (labs.dims.size() != 1)
        throw FormatError("load_idx: label file must have 1 dim: " + labels_path);
    if (imgs.dims[0] != labs.dims[0])
        throw FormatError("load_idx: image count " + std::to_string(imgs.dims[0]) +
                          " != label count " + std::to_string(labs.dims[0]));

    const index_t n = imgs.dims[0], rows = imgs.dims[1], cols = imgs.dims[2];
    Dataset<T> ds;
    ds.split = std::move(split);
    ds.images = Tensor<T>{Shape{n, rows, cols, 1}};
    T* out = ds.images.data().data();
    const std::uint8_t* in = imgs.payload.data();
    const index_t total = n * rows * cols;
#pragma omp parallel for schedule(static)
    for (index_t i = 0; i < total; ++i) out[i] = static_cast<T>(in[i]) / T(255);

    ds.labels.reserve(static_cast<std::size_t>(n));
    for (index_t i = 0; i < n; ++i) {
        const int y = labs.payload[static_cast<std::size_t>(i)];
        if (y > 9)
            throw FormatError("load_idx: label " + std::to_string(y) + " out of range [0,9] at index " +
                              std::to_string(i));
        ds.labels.push_back(y);
    }
    return ds;
}

/// Loads the train or test split of "mnist" / "fashion-mnist" from the
/// conventional file names under <data_dir>/<dataset>/.
template <typename T>
Dataset<T> load_dataset(const std::string& data_dir, const std::string& dataset, const std::string& split) {
    const std::string prefix = split == "train" ? "train" : "t10k";
    return load_idx<T>(find_dataset_file(data_dir, dataset, prefix + "-images-idx3-ubyte"),
                       find_dataset_file(data_dir, dataset, prefix + "-labels-idx1-ubyte"), split);
}

/// Deterministic batching plan.
struct BatchPlan {
    index_t batch_size = 128;
    std::uint64_t seed = 0;
    bool drop_last = false;
    bool shuffle = true;

    void validate() const {
        if (batch_size < 1) throw ArgumentError("BatchPlan: batch size must be >= 1");
    }
};

/// Per-epoch visit order: a seeded Fisher-Yates shuffle of 0..n-1,
/// deterministic in (seed, epoch); identity order when shuffling is off.
inline std::vector<index_t> epoch_order(index_t n, const BatchPlan& plan, index_t epoch) {
    plan.validate();
    std::vector<index_t> order(static_cast<std::size_t>(n));
    for (index_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    if (plan.shuffle) {
        Rng rng(mix_seed(plan.seed, static_cast<std::uint64_t>(epoch)));
        for (index_t i = n - 1; i > 0; --i)
            std::swap(order[static_cast<std::size_t>(i)],
                      order[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i) + 1))]);
    }
    return order;
}

/// Gathers dataset rows into a batch tensor (b, rows, cols, 1) + labels.
template <typename T>
std::pair<Tensor<T>, std::vector<int>> gather_batch(const Dataset<T>& ds, std::span<const index_t> idx) {
    const Shape& s = ds.images.shape();
    const index_t sample = s[1] * s[2] * s[3];
    Tensor<T> out{Shape{static_cast<index_t>(idx.size()), s[1], s[2], s[3]}};
    const T* in = ds.images.data().data();
    T* o = out.data().data();
    std::vector<int> labels(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy(in + idx[i] * sample, in + (idx[i] + 1) * sample, o + static_cast<index_t>(i) * sample);
        labels[i] = ds.labels[static_cast<std::size_t>(idx[i])];
    }
    return {std::move(out), std::move(labels)};
}

/// Streams one epoch of batches in plan order.
template <typename T>
void for_each_batch(const Dataset<T>& ds, const BatchPlan& plan, index_t epoch,
                    const std::function<void(const Tensor<T>&, const std::vector<int>&)>& fn) {
    const std::vector<index_t> order = epoch_order(ds.size(), plan, epoch);
    const index_t n = ds.size();
    for (index_t start = 0; start < n; start += plan.batch_size) {
        const index_t b = std::min(plan.batch_size, n - start);
        if (b < plan.batch_size && plan.drop_last) break;
        auto [images, labels] =
            gather_batch(ds, std::span<const index_t>(order.data() + start, static_cast<std::size_t>(b)));
        fn(images, labels);
    }
}

/// (b, rows, cols, 1) -> (b, rows*cols); row-major, so pixel (r,c) lands at
/// index cols*r + c.
template <typename T>
Tensor<T> flatten_for_mlp(const Tensor<T>& images) {
    if (images.rank() != 4)
        throw ShapeError("flatten_for_mlp: expected (b, rows, cols, 1), got " + images.shape().str());
    const Shape& s = images.shape();
    return reshape(images, Shape{s[0], s[1] * s[2] * s[3]});
}

/// Inverse of flatten_for_mlp.
template <typename T>
Tensor<T> unflatten_images(const Tensor<T>& flat, index_t rows, index_t cols) {
    if (flat.rank() != 2) throw ShapeError("unflatten_images: expected (b, pixels)");
    return reshape(flat, Shape{flat.shape()[0], rows, cols, 1});
}

} // namespace ntr
