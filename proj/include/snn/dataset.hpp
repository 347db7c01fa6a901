#pragma once

#include <string>
#include <vector>

#include "snn/tensor.hpp"

namespace snn {

/// In-memory labeled image set, pixels scaled to [0,1].
struct LabeledDataset {
    enum class Split { Train, Test };

    Tensor images;  // [N, C, H, W]
    std::vector<int> labels;
    Split split = Split::Train;

    std::size_t size() const { return labels.size(); }
    std::size_t channels() const { return images.dim(1); }
    std::size_t height() const { return images.dim(2); }
    std::size_t width() const { return images.dim(3); }

    /// Copy of sample `idx` as [C,H,W].
    Tensor image(std::size_t idx) const;
};

/// MNIST IDX pair (big-endian headers, magic 0x803/0x801). Fails closed on
/// bad magic, truncation, or image/label count mismatch.
LabeledDataset load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                              LabeledDataset::Split split = LabeledDataset::Split::Train);

/// CIFAR-10 binary batches: 3073-byte records, 1 label byte + 3072
/// channel-major RGB bytes.
LabeledDataset load_cifar10_binary(const std::vector<std::string>& batch_paths,
                                   LabeledDataset::Split split = LabeledDataset::Split::Train);

/// Constant-current temporal encoding: the image is presented unchanged at
/// every step. [C,H,W] -> [T,C,H,W].
Tensor encode_temporal(const Tensor& image, int t_steps);

}  // namespace snn
