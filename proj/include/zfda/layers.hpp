#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zfda/tensor.hpp"

namespace zfda {

enum class LayerKind : uint8_t {
    Dense = 1,
    Conv2D = 2,
    ConvTranspose2D = 3,
    ReLU = 4,
    Sigmoid = 5,
};

const char* layer_kind_name(LayerKind kind);

// Static description of one layer. Activation kinds carry zero parameters.
//
// Dense uses `in`/`out` as widths and flattens any input shape of matching
// size. Conv2D / ConvTranspose2D use `in`/`out` as channel counts; `in_h` and
// `in_w` record the spatial input size and are filled in during shape
// resolution (they must be given explicitly when the preceding output is
// flat, e.g. a dense layer feeding a deconvolution).
struct LayerSpec {
    LayerKind kind = LayerKind::ReLU;
    int64_t in = 0, out = 0;
    int64_t kh = 0, kw = 0;
    int64_t stride = 1, pad = 0;
    int64_t in_h = 0, in_w = 0;
    bool has_bias = true;

    bool is_parameterized() const { return kind == LayerKind::Dense || kind == LayerKind::Conv2D || kind == LayerKind::ConvTranspose2D; }
    int64_t weight_count() const;
    int64_t bias_count() const { return is_parameterized() && has_bias ? out : 0; }
    // p_k = weights + biases, a pure function of the spec.
    int64_t param_count() const { return weight_count() + bias_count(); }

    // Fan dimensions used by the sparsity allocation: dense layers use their
    // widths; conv layers use d_in = in_channels*kh*kw, d_out = out_channels.
    // Biases count in param_count() but not here.
    int64_t d_in() const;
    int64_t d_out() const { return out; }

    std::string describe() const;
};

LayerSpec dense_spec(int64_t in, int64_t out, bool has_bias = true);
LayerSpec conv2d_spec(int64_t in_ch, int64_t out_ch, int64_t kh, int64_t kw, int64_t stride, int64_t pad,
                      int64_t in_h = 0, int64_t in_w = 0, bool has_bias = true);
LayerSpec conv_transpose2d_spec(int64_t in_ch, int64_t out_ch, int64_t kh, int64_t kw, int64_t stride, int64_t pad,
                                int64_t in_h = 0, int64_t in_w = 0, bool has_bias = true);
LayerSpec activation_spec(LayerKind kind);

// Computes the output shape of `spec` applied to `input`, filling in
// inferred in_h/in_w on conv specs. Throws ShapeError with both the layer
// description and the offending shape on mismatch.
Shape resolve_layer(LayerSpec& spec, const Shape& input, const std::string& context);

// Resolves a whole chain in order, mutating specs in place. Returns the
// output shape. `context` names the chain ("encoder"/"decoder") in errors.
Shape resolve_chain(std::vector<LayerSpec>& specs, const Shape& input, const std::string& context);

// Layer list syntax used by config files and the CLI, comma separated:
//   dense:IN:OUT[:nobias]
//   conv:IN:OUT:KH:KW:STRIDE:PAD[:IN_H:IN_W][:nobias]
//   convt:IN:OUT:KH:KW:STRIDE:PAD[:IN_H:IN_W][:nobias]
//   relu | sigmoid
std::vector<LayerSpec> parse_layer_list(const std::string& text);
std::string format_layer_list(const std::vector<LayerSpec>& specs);

}  // namespace zfda
