#include "zfda/layers.hpp"

#include <algorithm>
#include <sstream>

namespace zfda {

const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Dense: return "Dense";
        case LayerKind::Conv2D: return "Conv2D";
        case LayerKind::ConvTranspose2D: return "ConvTranspose2D";
        case LayerKind::ReLU: return "ReLU";
        case LayerKind::Sigmoid: return "Sigmoid";
    }
    return "?";
}

int64_t LayerSpec::weight_count() const {
    switch (kind) {
        case LayerKind::Dense: return in * out;
        case LayerKind::Conv2D:
        case LayerKind::ConvTranspose2D: return in * out * kh * kw;
        default: return 0;
    }
}

int64_t LayerSpec::d_in() const {
    switch (kind) {
        case LayerKind::Dense: return in;
        case LayerKind::Conv2D:
        case LayerKind::ConvTranspose2D: return in * kh * kw;
        default: return 0;
    }
}

std::string LayerSpec::describe() const {
    std::ostringstream os;
    os << layer_kind_name(kind);
    if (kind == LayerKind::Dense) {
        os << "(" << in << "->" << out << (has_bias ? "" : ",nobias") << ")";
    } else if (is_parameterized()) {
        os << "(" << in << "->" << out << ",k" << kh << "x" << kw << ",s" << stride << ",p" << pad;
        if (in_h > 0) os << ",in" << in_h << "x" << in_w;
        if (!has_bias) os << ",nobias";
        os << ")";
    }
    return os.str();
}

LayerSpec dense_spec(int64_t in, int64_t out, bool has_bias) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.in = in;
    s.out = out;
    s.has_bias = has_bias;
    return s;
}

static LayerSpec conv_like(LayerKind kind, int64_t in_ch, int64_t out_ch, int64_t kh, int64_t kw, int64_t stride,
                           int64_t pad, int64_t in_h, int64_t in_w, bool has_bias) {
    LayerSpec s;
    s.kind = kind;
    s.in = in_ch;
    s.out = out_ch;
    s.kh = kh;
    s.kw = kw;
    s.stride = stride;
    s.pad = pad;
    s.in_h = in_h;
    s.in_w = in_w;
    s.has_bias = has_bias;
    return s;
}

LayerSpec conv2d_spec(int64_t in_ch, int64_t out_ch, int64_t kh, int64_t kw, int64_t stride, int64_t pad,
                      int64_t in_h, int64_t in_w, bool has_bias) {
    return conv_like(LayerKind::Conv2D, in_ch, out_ch, kh, kw, stride, pad, in_h, in_w, has_bias);
}

LayerSpec conv_transpose2d_spec(int64_t in_ch, int64_t out_ch, int64_t kh, int64_t kw, int64_t stride, int64_t pad,
                                int64_t in_h, int64_t in_w, bool has_bias) {
    return conv_like(LayerKind::ConvTranspose2D, in_ch, out_ch, kh, kw, stride, pad, in_h, in_w, has_bias);
}

LayerSpec activation_spec(LayerKind kind) {
    LayerSpec s;
    s.kind = kind;
    s.has_bias = false;
    return s;
}

static void check_spec_basics(const LayerSpec& s, const std::string& context) {
    auto fail = [&](const std::string& msg) { throw ShapeError(context + ": " + s.describe() + ": " + msg); };
    if (s.kind == LayerKind::Dense) {
        if (s.in <= 0 || s.out <= 0) fail("widths must be positive");
    } else if (s.is_parameterized()) {
        if (s.in <= 0 || s.out <= 0) fail("channel counts must be positive");
        if (s.kh <= 0 || s.kw <= 0) fail("kernel must be positive");
        if (s.stride <= 0) fail("stride must be positive");
        if (s.pad < 0) fail("padding must be non-negative");
    }
}

Shape resolve_layer(LayerSpec& spec, const Shape& input, const std::string& context) {
    check_spec_basics(spec, context);
    const int64_t flat = shape_numel(input);
    auto fail = [&](const std::string& msg) {
        throw ShapeError(context + ": " + spec.describe() + " applied to input " + shape_str(input) + ": " + msg);
    };
    switch (spec.kind) {
        case LayerKind::ReLU:
        case LayerKind::Sigmoid:
            return input;
        case LayerKind::Dense:
            if (flat != spec.in) fail("flat size " + std::to_string(flat) + " != in width " + std::to_string(spec.in));
            return {spec.out};
        case LayerKind::Conv2D:
        case LayerKind::ConvTranspose2D: {
            int64_t h = 0, w = 0;
            if (input.size() == 3) {
                if (input[0] != spec.in) fail("input channels " + std::to_string(input[0]) + " != " + std::to_string(spec.in));
                h = input[1];
                w = input[2];
                if (spec.in_h > 0 && (spec.in_h != h || spec.in_w != w))
                    fail("declared spatial size " + std::to_string(spec.in_h) + "x" + std::to_string(spec.in_w) +
                         " != actual " + std::to_string(h) + "x" + std::to_string(w));
            } else {
                if (spec.in_h <= 0 || spec.in_w <= 0)
                    fail("flat input needs explicit in_h/in_w on the layer spec");
                h = spec.in_h;
                w = spec.in_w;
                if (flat != spec.in * h * w)
                    fail("flat size " + std::to_string(flat) + " != " + std::to_string(spec.in * h * w));
            }
            spec.in_h = h;
            spec.in_w = w;
            if (spec.kind == LayerKind::Conv2D) {
                const int64_t oh = (h + 2 * spec.pad - spec.kh) / spec.stride + 1;
                const int64_t ow = (w + 2 * spec.pad - spec.kw) / spec.stride + 1;
                if (h + 2 * spec.pad < spec.kh || w + 2 * spec.pad < spec.kw || oh <= 0 || ow <= 0)
                    fail("kernel larger than padded input");
                return {spec.out, oh, ow};
            }
            const int64_t oh = (h - 1) * spec.stride + spec.kh - 2 * spec.pad;
            const int64_t ow = (w - 1) * spec.stride + spec.kw - 2 * spec.pad;
            if (oh <= 0 || ow <= 0) fail("non-positive output size");
            return {spec.out, oh, ow};
        }
    }
    fail("unknown layer kind");
    return {};
}

Shape resolve_chain(std::vector<LayerSpec>& specs, const Shape& input, const std::string& context) {
    Shape cur = input;
    for (size_t i = 0; i < specs.size(); ++i) {
        std::string ctx = context + " layer " + std::to_string(i);
        if (i > 0) ctx += " (after " + specs[i - 1].describe() + ")";
        cur = resolve_layer(specs[i], cur, ctx);
    }
    return cur;
}

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t");
    size_t b = s.find_last_not_of(" \t");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

int64_t parse_i64(const std::string& tok, const std::string& what) {
    try {
        size_t pos = 0;
        const int64_t v = std::stoll(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("layer list: bad integer '" + tok + "' in " + what);
    }
}

}  // namespace

std::vector<LayerSpec> parse_layer_list(const std::string& text) {
    std::vector<LayerSpec> specs;
    for (const std::string& raw : split(text, ',')) {
        const std::string item = trim(raw);
        if (item.empty()) continue;
        std::vector<std::string> f = split(item, ':');
        const std::string kind = f[0];
        bool nobias = false;
        if (!f.empty() && f.back() == "nobias") {
            nobias = true;
            f.pop_back();
        }
        if (kind == "relu" || kind == "sigmoid") {
            if (f.size() != 1 || nobias) throw ConfigError("layer list: '" + item + "' takes no arguments");
            specs.push_back(activation_spec(kind == "relu" ? LayerKind::ReLU : LayerKind::Sigmoid));
        } else if (kind == "dense") {
            if (f.size() != 3) throw ConfigError("layer list: dense needs dense:IN:OUT, got '" + item + "'");
            specs.push_back(dense_spec(parse_i64(f[1], item), parse_i64(f[2], item), !nobias));
        } else if (kind == "conv" || kind == "convt") {
            if (f.size() != 7 && f.size() != 9)
                throw ConfigError("layer list: " + kind + " needs " + kind +
                                  ":IN:OUT:KH:KW:STRIDE:PAD[:IN_H:IN_W], got '" + item + "'");
            int64_t a[8] = {0, 0, 0, 0, 0, 0, 0, 0};
            for (size_t i = 1; i < f.size(); ++i) a[i - 1] = parse_i64(f[i], item);
            auto make = kind == "conv" ? conv2d_spec : conv_transpose2d_spec;
            specs.push_back(make(a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], !nobias));
        } else {
            throw ConfigError("layer list: unknown layer kind '" + kind + "'");
        }
    }
    if (specs.empty()) throw ConfigError("layer list: empty");
    return specs;
}

std::string format_layer_list(const std::vector<LayerSpec>& specs) {
    std::ostringstream os;
    for (size_t i = 0; i < specs.size(); ++i) {
        if (i) os << ", ";
        const LayerSpec& s = specs[i];
        switch (s.kind) {
            case LayerKind::ReLU: os << "relu"; break;
            case LayerKind::Sigmoid: os << "sigmoid"; break;
            case LayerKind::Dense:
                os << "dense:" << s.in << ":" << s.out;
                if (!s.has_bias) os << ":nobias";
                break;
            case LayerKind::Conv2D:
            case LayerKind::ConvTranspose2D:
                os << (s.kind == LayerKind::Conv2D ? "conv:" : "convt:") << s.in << ":" << s.out << ":" << s.kh << ":"
                   << s.kw << ":" << s.stride << ":" << s.pad;
                if (s.in_h > 0) os << ":" << s.in_h << ":" << s.in_w;
                if (!s.has_bias) os << ":nobias";
                break;
        }
    }
    return os.str();
}

}  // namespace zfda
