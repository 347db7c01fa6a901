#include "snn/dataset.hpp"

#include <cstring>
#include <fstream>

namespace snn {

Tensor LabeledDataset::image(std::size_t idx) const {
    const std::size_t n = channels() * height() * width();
    Tensor out({channels(), height(), width()});
    std::memcpy(out.data(), images.data() + idx * n, n * sizeof(float));
    return out;
}

namespace {

std::uint32_t read_be_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw FormatError("truncated IDX header: " + path);
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

std::vector<unsigned char> read_exact(std::istream& in, std::size_t n, const std::string& path) {
    std::vector<unsigned char> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n))
        throw FormatError("truncated file: " + path);
    return buf;
}

}  // namespace

LabeledDataset load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                              LabeledDataset::Split split) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw IoError("cannot open " + images_path);
    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw IoError("cannot open " + labels_path);

    if (read_be_u32(imgs, images_path) != 0x00000803u)
        throw FormatError("bad IDX image magic: " + images_path);
    const std::size_t n = read_be_u32(imgs, images_path);
    const std::size_t h = read_be_u32(imgs, images_path);
    const std::size_t w = read_be_u32(imgs, images_path);

    if (read_be_u32(labs, labels_path) != 0x00000801u)
        throw FormatError("bad IDX label magic: " + labels_path);
    const std::size_t n_labels = read_be_u32(labs, labels_path);
    if (n != n_labels)
        throw FormatError("image/label count mismatch: " + std::to_string(n) + " vs " +
                          std::to_string(n_labels));

    const auto pixels = read_exact(imgs, n * h * w, images_path);
    const auto label_bytes = read_exact(labs, n, labels_path);

    LabeledDataset ds;
    ds.split = split;
    ds.images = Tensor({n, 1, h, w});
    for (std::size_t i = 0; i < pixels.size(); ++i)
        ds.images[i] = static_cast<float>(pixels[i]) / 255.0f;
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (label_bytes[i] > 9) throw FormatError("label out of range in " + labels_path);
        ds.labels[i] = label_bytes[i];
    }
    return ds;
}

LabeledDataset load_cifar10_binary(const std::vector<std::string>& batch_paths,
                                   LabeledDataset::Split split) {
    constexpr std::size_t kRecord = 3073;  // 1 label byte + 3*32*32 pixels
    constexpr std::size_t kPixels = 3072;
    if (batch_paths.empty()) throw ConfigError("load_cifar10_binary: no files given");

    std::vector<unsigned char> all;
    for (const auto& path : batch_paths) {
        std::ifstream in(path, std::ios::binary | std::ios::ate);
        if (!in) throw IoError("cannot open " + path);
        const std::streamoff size = in.tellg();
        if (size <= 0 || size % kRecord != 0)
            throw FormatError("file size not a multiple of 3073: " + path);
        in.seekg(0);
        const std::size_t old = all.size();
        all.resize(old + static_cast<std::size_t>(size));
        in.read(reinterpret_cast<char*>(all.data() + old), size);
        if (in.gcount() != size) throw FormatError("truncated file: " + path);
    }

    const std::size_t n = all.size() / kRecord;
    LabeledDataset ds;
    ds.split = split;
    ds.images = Tensor({n, 3, 32, 32});
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char* rec = all.data() + i * kRecord;
        if (rec[0] > 9) throw FormatError("CIFAR-10 label byte out of range");
        ds.labels[i] = rec[0];
        float* dst = ds.images.data() + i * kPixels;
        for (std::size_t j = 0; j < kPixels; ++j)
            dst[j] = static_cast<float>(rec[1 + j]) / 255.0f;
    }
    return ds;
}

Tensor encode_temporal(const Tensor& image, int t_steps) {
    if (t_steps < 1) throw ConfigError("encode_temporal: T must be >= 1");
    std::vector<std::size_t> shape;
    shape.push_back(static_cast<std::size_t>(t_steps));
    for (std::size_t d : image.shape()) shape.push_back(d);
    Tensor out(std::move(shape));
    for (int t = 0; t < t_steps; ++t)
        std::memcpy(out.data() + static_cast<std::size_t>(t) * image.size(), image.data(),
                    image.size() * sizeof(float));
    return out;
}

}  // namespace snn
