#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zfda/tensor.hpp"

namespace zfda {

struct DatasetHandle {
    Tensor images;  // [N,C,H,W] in [0,1]
    std::vector<int64_t> labels;
    std::string source;

    int64_t size() const { return images.shape.empty() ? 0 : images.shape[0]; }
};

enum class CifarVariant { Cifar10, Cifar100 };

// CIFAR binary records: 1 label byte (cifar10) or coarse+fine label bytes
// (cifar100, fine retained), then 3072 pixel bytes (1024 R, 1024 G, 1024 B,
// row-major). Pixels are divided by 255. The file size must be an exact
// multiple of the record size.
DatasetHandle read_cifar_binary(const std::string& path, CifarVariant variant);

// Procedural stand-in dataset: per image a directional gradient background
// plus 1..5 seeded Gaussian blobs, clamped to [0,1]. The pseudo-class label
// encodes the blob count and the gradient direction (num_classes = 10).
DatasetHandle gen_synthetic(int64_t n, int64_t c, int64_t h, int64_t w, uint64_t seed);

// 2x2 average pooling over H and W; both must be even.
Tensor avg_pool2(const Tensor& images);

// .zft tensor file: magic "ZFT1", dtype u8=0 (f32), ndim u8, 2 zero pad
// bytes, dims u32[] LE, data f32[] LE row-major. Non-finite tensors are
// refused on write; malformed files are rejected on read.
void write_tensor_file(const std::string& path, const Tensor& tensor);
Tensor read_tensor_file(const std::string& path);
std::vector<uint8_t> encode_tensor(const Tensor& tensor);
Tensor decode_tensor(const std::vector<uint8_t>& bytes, const std::string& what);

// CSV report writer: fixed column order, floats at 6 significant digits,
// deterministic bytes for identical rows.
std::string format_g6(double v);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);
void append_csv_row(const std::string& path, const std::vector<std::string>& header,
                    const std::vector<std::string>& row);

}  // namespace zfda
