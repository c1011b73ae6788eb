#include "zfda/domain.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

namespace zfda {

TransformKind parse_transform_kind(const std::string& name) {
    if (name == "none") return TransformKind::None;
    if (name == "va") return TransformKind::VariedAngle;
    if (name == "vp") return TransformKind::VariedPerspective;
    if (name == "vc") return TransformKind::VariedContrast;
    if (name == "vh") return TransformKind::VariedHue;
    throw ConfigError("unknown transform '" + name + "' (expected none|va|vp|vc|vh)");
}

const char* transform_kind_name(TransformKind kind) {
    switch (kind) {
        case TransformKind::None: return "none";
        case TransformKind::VariedAngle: return "va";
        case TransformKind::VariedPerspective: return "vp";
        case TransformKind::VariedContrast: return "vc";
        case TransformKind::VariedHue: return "vh";
    }
    return "?";
}

double transform_default_param(TransformKind kind) {
    switch (kind) {
        case TransformKind::VariedAngle: return 30.0;
        case TransformKind::VariedPerspective: return 0.2;
        case TransformKind::VariedContrast: return 1.8;
        case TransformKind::VariedHue: return 60.0;
        default: return 0.0;
    }
}

namespace {

double bilinear(const float* plane, int64_t h, int64_t w, double sy, double sx) {
    const int64_t x0 = static_cast<int64_t>(std::floor(sx));
    const int64_t y0 = static_cast<int64_t>(std::floor(sy));
    const double fx = sx - static_cast<double>(x0);
    const double fy = sy - static_cast<double>(y0);
    auto sample = [&](int64_t y, int64_t x) -> double {
        if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;  // zero fill
        return static_cast<double>(plane[y * w + x]);
    };
    return (1.0 - fy) * ((1.0 - fx) * sample(y0, x0) + fx * sample(y0, x0 + 1)) +
           fy * ((1.0 - fx) * sample(y0 + 1, x0) + fx * sample(y0 + 1, x0 + 1));
}

// Inverse-maps every output pixel through `src_of` (dst y,x -> src y,x) with
// bilinear sampling and zero fill, clamping the result to [0,1].
template <typename Fn>
Tensor warp(const Tensor& image, Fn src_of) {
    const int64_t c = image.shape[0], h = image.shape[1], w = image.shape[2];
    Tensor out(image.shape);
    for (int64_t ch = 0; ch < c; ++ch) {
        const float* src = image.data.data() + ch * h * w;
        float* dst = out.data.data() + ch * h * w;
        for (int64_t y = 0; y < h; ++y) {
            for (int64_t x = 0; x < w; ++x) {
                double sy = 0.0, sx = 0.0;
                src_of(static_cast<double>(y), static_cast<double>(x), sy, sx);
                const double v = bilinear(src, h, w, sy, sx);
                dst[y * w + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return out;
}

// Solves an 8x8 linear system by Gaussian elimination with partial pivoting.
void solve8(double a[8][9]) {
    for (int col = 0; col < 8; ++col) {
        int pivot = col;
        for (int r = col + 1; r < 8; ++r)
            if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
        if (std::fabs(a[pivot][col]) < 1e-12) throw DataError("perspective transform: degenerate homography");
        if (pivot != col)
            for (int j = 0; j < 9; ++j) std::swap(a[pivot][j], a[col][j]);
        for (int r = 0; r < 8; ++r) {
            if (r == col) continue;
            const double f = a[r][col] / a[col][col];
            for (int j = col; j < 9; ++j) a[r][j] -= f * a[col][j];
        }
    }
    for (int r = 0; r < 8; ++r) a[r][8] /= a[r][r];
}

// Homography h mapping (x,y) -> (u,v) with h[8] = 1, from four point pairs.
std::array<double, 9> homography_from_pairs(const double xy[4][2], const double uv[4][2]) {
    double a[8][9] = {};
    for (int i = 0; i < 4; ++i) {
        const double x = xy[i][0], y = xy[i][1], u = uv[i][0], v = uv[i][1];
        double* r0 = a[2 * i];
        double* r1 = a[2 * i + 1];
        r0[0] = x; r0[1] = y; r0[2] = 1; r0[6] = -u * x; r0[7] = -u * y; r0[8] = u;
        r1[3] = x; r1[4] = y; r1[5] = 1; r1[6] = -v * x; r1[7] = -v * y; r1[8] = v;
    }
    solve8(a);
    return {a[0][8], a[1][8], a[2][8], a[3][8], a[4][8], a[5][8], a[6][8], a[7][8], 1.0};
}

Tensor rotate_image(const Tensor& image, double angle_deg) {
    const int64_t h = image.shape[1], w = image.shape[2];
    const double rad = angle_deg * M_PI / 180.0;
    const double ca = std::cos(rad), sa = std::sin(rad);
    const double cx = static_cast<double>(w - 1) / 2.0, cy = static_cast<double>(h - 1) / 2.0;
    // Inverse map: rotate the output grid by -angle about the center.
    return warp(image, [&](double y, double x, double& sy, double& sx) {
        const double dx = x - cx, dy = y - cy;
        sx = ca * dx + sa * dy + cx;
        sy = -sa * dx + ca * dy + cy;
    });
}

Tensor perspective_image(const Tensor& image, double shift) {
    if (shift < 0.0 || shift >= 0.5)
        throw ConfigError("perspective transform: corner shift must be in [0, 0.5), got " + std::to_string(shift));
    const int64_t h = image.shape[1], w = image.shape[2];
    const double W = static_cast<double>(w - 1), H = static_cast<double>(h - 1);
    // The two top corners are pulled inward by `shift`; the warp maps output
    // pixels back to source coordinates.
    const double dst[4][2] = {{shift * W, 0.0}, {(1.0 - shift) * W, 0.0}, {W, H}, {0.0, H}};
    const double src[4][2] = {{0.0, 0.0}, {W, 0.0}, {W, H}, {0.0, H}};
    const std::array<double, 9> hmat = homography_from_pairs(dst, src);
    return warp(image, [&](double y, double x, double& sy, double& sx) {
        const double d = hmat[6] * x + hmat[7] * y + hmat[8];
        sx = (hmat[0] * x + hmat[1] * y + hmat[2]) / d;
        sy = (hmat[3] * x + hmat[4] * y + hmat[5]) / d;
    });
}

Tensor contrast_image(const Tensor& image, double factor) {
    Tensor out(image.shape);
    for (size_t i = 0; i < image.data.size(); ++i) {
        const double v = 0.5 + factor * (static_cast<double>(image.data[i]) - 0.5);
        out.data[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    return out;
}

// Rotation about the gray axis (1,1,1)/sqrt(3) in RGB space.
Tensor hue_image(const Tensor& image, double angle_deg) {
    if (image.shape[0] != 3)
        throw ShapeError("hue transform requires 3 channels, got " + std::to_string(image.shape[0]));
    const double rad = angle_deg * M_PI / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    const double oc = (1.0 - c) / 3.0;
    const double sq = std::sqrt(1.0 / 3.0) * s;
    const double m[3][3] = {
        {c + oc, oc - sq, oc + sq},
        {oc + sq, c + oc, oc - sq},
        {oc - sq, oc + sq, c + oc},
    };
    const int64_t hw = image.shape[1] * image.shape[2];
    Tensor out(image.shape);
    const float* r = image.data.data();
    const float* g = r + hw;
    const float* b = g + hw;
    for (int64_t i = 0; i < hw; ++i) {
        const double rr = r[i], gg = g[i], bb = b[i];
        for (int64_t ch = 0; ch < 3; ++ch) {
            const double v = m[ch][0] * rr + m[ch][1] * gg + m[ch][2] * bb;
            out.data[ch * hw + i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return out;
}

bool is_identity(const Transform& t) {
    switch (t.kind) {
        case TransformKind::None: return true;
        case TransformKind::VariedAngle:
        case TransformKind::VariedHue: return t.param == 0.0;
        case TransformKind::VariedPerspective: return t.param == 0.0;
        case TransformKind::VariedContrast: return t.param == 1.0;
    }
    return false;
}

}  // namespace

Tensor apply_transform(const Tensor& image, const Transform& transform) {
    if (image.shape.size() != 3)
        throw ShapeError("apply_transform: expected [C,H,W], got " + shape_str(image.shape));
    if (!std::isfinite(transform.param)) throw DataError("apply_transform: non-finite parameter");
    if (is_identity(transform)) return image;
    switch (transform.kind) {
        case TransformKind::VariedAngle: return rotate_image(image, transform.param);
        case TransformKind::VariedPerspective: return perspective_image(image, transform.param);
        case TransformKind::VariedContrast: return contrast_image(image, transform.param);
        case TransformKind::VariedHue: return hue_image(image, transform.param);
        case TransformKind::None: return image;
    }
    return image;
}

Tensor apply_transform_batch(const Tensor& images, const Transform& transform) {
    if (images.shape.size() != 4)
        throw ShapeError("apply_transform_batch: expected [N,C,H,W], got " + shape_str(images.shape));
    if (!std::isfinite(transform.param)) throw DataError("apply_transform_batch: non-finite parameter");
    if (is_identity(transform)) return images;
    Tensor out(images.shape);
    const int64_t per = images.numel() / images.shape[0];
    const Shape img_shape{images.shape[1], images.shape[2], images.shape[3]};
    for (int64_t i = 0; i < images.shape[0]; ++i) {
        Tensor img(img_shape);
        std::copy_n(images.data.begin() + i * per, per, img.data.begin());
        const Tensor warped = apply_transform(img, transform);
        std::copy_n(warped.data.begin(), per, out.data.begin() + i * per);
    }
    return out;
}

Domain make_domain(const DatasetHandle& dataset, const std::vector<int64_t>& class_filter,
                   const Transform& transform) {
    std::vector<int64_t> rows;
    if (class_filter.empty()) {
        rows.resize(dataset.size());
        for (int64_t i = 0; i < dataset.size(); ++i) rows[i] = i;
    } else {
        const std::set<int64_t> keep(class_filter.begin(), class_filter.end());
        for (int64_t i = 0; i < dataset.size(); ++i)
            if (keep.count(dataset.labels[i])) rows.push_back(i);
    }
    if (rows.empty()) throw DataError("make_domain: class filter selects no images");
    Domain d;
    d.transform = transform;
    d.class_filter = class_filter;
    d.images = apply_transform_batch(gather_rows(dataset.images, rows), transform);
    d.labels.reserve(rows.size());
    for (int64_t r : rows) d.labels.push_back(dataset.labels[r]);
    return d;
}

}  // namespace zfda
