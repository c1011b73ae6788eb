#include "zfda/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "zfda/io_util.hpp"
#include "zfda/rng.hpp"

namespace zfda {

DatasetHandle read_cifar_binary(const std::string& path, CifarVariant variant) {
    const std::vector<uint8_t> bytes = read_file_bytes(path);
    const size_t label_bytes = variant == CifarVariant::Cifar10 ? 1 : 2;
    const size_t record = label_bytes + 3072;
    if (bytes.empty() || bytes.size() % record != 0)
        throw DataError(path + ": size " + std::to_string(bytes.size()) + " is not a multiple of the " +
                        std::to_string(record) + "-byte record");
    const int64_t n = static_cast<int64_t>(bytes.size() / record);
    DatasetHandle ds;
    ds.source = path;
    ds.images = Tensor({n, 3, 32, 32});
    ds.labels.resize(n);
    for (int64_t i = 0; i < n; ++i) {
        const uint8_t* rec = bytes.data() + static_cast<size_t>(i) * record;
        ds.labels[i] = variant == CifarVariant::Cifar10 ? rec[0] : rec[1];  // fine label
        const uint8_t* px = rec + label_bytes;
        float* out = ds.images.data.data() + i * 3 * 32 * 32;
        for (int64_t j = 0; j < 3 * 32 * 32; ++j) out[j] = static_cast<float>(px[j]) / 255.0f;
    }
    return ds;
}

DatasetHandle gen_synthetic(int64_t n, int64_t c, int64_t h, int64_t w, uint64_t seed) {
    if (n <= 0) throw DataError("gen_synthetic: dataset must have at least one image");
    if (c <= 0 || h <= 0 || w <= 0) throw DataError("gen_synthetic: dimensions must be positive");
    DatasetHandle ds;
    ds.source = "synthetic";
    ds.images = Tensor({n, c, h, w});
    ds.labels.resize(n);
    Rng rng(seed);
    const double diag = static_cast<double>(std::min(h, w));
    for (int64_t i = 0; i < n; ++i) {
        const int64_t cls = static_cast<int64_t>(rng.next_below(10));
        const int64_t blobs = 1 + (cls % 5);
        const bool vertical = cls >= 5;
        ds.labels[i] = cls;
        float* img = ds.images.data.data() + i * c * h * w;
        for (int64_t ch = 0; ch < c; ++ch) {
            // Independent per-channel gradients keep the images saturated.
            const double base = rng.uniform(0.05, 0.6);
            const double slope = rng.uniform(-0.5, 0.5);
            for (int64_t y = 0; y < h; ++y) {
                for (int64_t x = 0; x < w; ++x) {
                    const double t = vertical ? static_cast<double>(y) / std::max<int64_t>(h - 1, 1)
                                              : static_cast<double>(x) / std::max<int64_t>(w - 1, 1);
                    img[(ch * h + y) * w + x] = static_cast<float>(base + slope * t);
                }
            }
        }
        for (int64_t b = 0; b < blobs; ++b) {
            const double cx = rng.uniform(0.15, 0.85) * static_cast<double>(w - 1);
            const double cy = rng.uniform(0.15, 0.85) * static_cast<double>(h - 1);
            const double sigma = rng.uniform(0.08, 0.22) * diag;
            std::vector<double> amp(c);
            for (int64_t ch = 0; ch < c; ++ch) amp[ch] = rng.uniform(-0.8, 0.8);
            for (int64_t ch = 0; ch < c; ++ch) {
                for (int64_t y = 0; y < h; ++y) {
                    for (int64_t x = 0; x < w; ++x) {
                        const double dx = (static_cast<double>(x) - cx) / sigma;
                        const double dy = (static_cast<double>(y) - cy) / sigma;
                        img[(ch * h + y) * w + x] +=
                            static_cast<float>(amp[ch] * std::exp(-0.5 * (dx * dx + dy * dy)));
                    }
                }
            }
        }
        for (int64_t j = 0; j < c * h * w; ++j) img[j] = std::clamp(img[j], 0.0f, 1.0f);
    }
    return ds;
}

Tensor avg_pool2(const Tensor& images) {
    if (images.shape.size() != 4) throw ShapeError("avg_pool2: expected [N,C,H,W], got " + shape_str(images.shape));
    const int64_t n = images.shape[0], c = images.shape[1], h = images.shape[2], w = images.shape[3];
    if (h % 2 != 0 || w % 2 != 0) throw ShapeError("avg_pool2: H and W must be even");
    Tensor out({n, c, h / 2, w / 2});
    for (int64_t i = 0; i < n * c; ++i) {
        const float* src = images.data.data() + i * h * w;
        float* dst = out.data.data() + i * (h / 2) * (w / 2);
        for (int64_t y = 0; y < h / 2; ++y)
            for (int64_t x = 0; x < w / 2; ++x) {
                const double s = static_cast<double>(src[(2 * y) * w + 2 * x]) + src[(2 * y) * w + 2 * x + 1] +
                                 src[(2 * y + 1) * w + 2 * x] + src[(2 * y + 1) * w + 2 * x + 1];
                dst[y * (w / 2) + x] = static_cast<float>(s / 4.0);
            }
    }
    return out;
}

std::vector<uint8_t> encode_tensor(const Tensor& tensor) {
    if (!all_finite(tensor.data)) throw DataError("write_tensor_file: tensor contains non-finite values");
    if (tensor.shape.empty() || tensor.shape.size() > 8)
        throw DataError("write_tensor_file: ndim must be in [1,8], got " + std::to_string(tensor.shape.size()));
    ByteWriter w;
    w.magic("ZFT1");
    w.u8(0);  // dtype f32
    w.u8(static_cast<uint8_t>(tensor.shape.size()));
    w.u8(0);
    w.u8(0);
    for (int64_t d : tensor.shape) {
        if (d <= 0 || d > static_cast<int64_t>(UINT32_MAX)) throw DataError("write_tensor_file: dim out of u32 range");
        w.u32(static_cast<uint32_t>(d));
    }
    for (float f : tensor.data) w.f32(f);
    return w.bytes();
}

Tensor decode_tensor(const std::vector<uint8_t>& bytes, const std::string& what) {
    ByteReader r(bytes, what);
    r.expect_magic("ZFT1");
    if (r.u8() != 0) throw DataError(what + ": unsupported dtype (only f32)");
    const uint8_t ndim = r.u8();
    if (ndim == 0 || ndim > 8) throw DataError(what + ": ndim must be in [1,8], got " + std::to_string(ndim));
    if (r.u8() != 0 || r.u8() != 0) throw DataError(what + ": nonzero pad bytes");
    Shape shape(ndim);
    int64_t numel = 1;
    for (auto& d : shape) {
        const uint32_t v = r.u32();
        if (v == 0) throw DataError(what + ": zero dimension");
        d = v;
        if (numel > (1ll << 40) / d) throw DataError(what + ": tensor too large");
        numel *= d;
    }
    if (r.remaining() != static_cast<size_t>(numel) * 4)
        throw DataError(what + ": payload size " + std::to_string(r.remaining()) + " != 4*" + std::to_string(numel));
    Tensor t(shape);
    for (int64_t i = 0; i < numel; ++i) t.data[i] = r.f32();
    ensure_finite(t.data, what);
    return t;
}

void write_tensor_file(const std::string& path, const Tensor& tensor) {
    write_file_bytes(path, encode_tensor(tensor));
}

Tensor read_tensor_file(const std::string& path) { return decode_tensor(read_file_bytes(path), path); }

std::string format_g6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

namespace {

std::string join_row(const std::vector<std::string>& cells) {
    std::string line;
    for (size_t i = 0; i < cells.size(); ++i) {
        if (i) line.push_back(',');
        line += cells[i];
    }
    line.push_back('\n');
    return line;
}

}  // namespace

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open CSV for writing: " + path);
    out << join_row(header);
    for (const auto& row : rows) {
        if (row.size() != header.size())
            throw DataError("CSV row width " + std::to_string(row.size()) + " != header width " +
                            std::to_string(header.size()));
        out << join_row(row);
    }
    if (!out) throw DataError("write failure on " + path);
}

void append_csv_row(const std::string& path, const std::vector<std::string>& header,
                    const std::vector<std::string>& row) {
    const bool exists = std::filesystem::exists(path);
    std::ofstream out(path, std::ios::app);
    if (!out) throw DataError("cannot open CSV for appending: " + path);
    if (!exists) out << join_row(header);
    out << join_row(row);
    if (!out) throw DataError("write failure on " + path);
}

}  // namespace zfda
