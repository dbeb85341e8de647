#pragma once

#include <memory>
#include <string>
#include <vector>

#include "demtrain/rng.hpp"
#include "demtrain/tensor.hpp"

namespace demtrain::model {

struct ParamRef {
    std::string name;  // "<layer>.<param>", e.g. "conv1.weight"
    Tensor* tensor;
};

// Per-batch scratch retained from forward for the backward pass.
struct LayerCache {
    Tensor cols;              // conv: im2col buffers, one block per sample
    std::vector<int> argmax;  // maxpool: winning input index per output element
};

// A layer transforms a per-sample flat vector of in_size() floats into
// out_size() floats. Batches are processed sample-by-sample so that results
// are bitwise independent of batch composition and parallelism degree; any
// cross-sample accumulation (parameter gradients) runs in fixed sample order.
class Layer {
public:
    virtual ~Layer() = default;
    virtual const std::string& name() const = 0;
    virtual std::string kind() const = 0;
    virtual int in_size() const = 0;
    virtual int out_size() const = 0;
    virtual std::vector<int> out_shape() const = 0;  // per-sample, e.g. {C,H,W} or {D}

    virtual void forward(const float* in, int batch, float* out, LayerCache& cache) const = 0;

    // d_out is batch x out_size, d_in (overwritten) batch x in_size. When
    // grads is non-null, parameter gradients summed over the batch are
    // accumulated into it (entries match parameters() order).
    virtual void backward(const float* in, const float* out, const float* d_out, int batch,
                          const LayerCache& cache, float* d_in,
                          std::vector<Tensor>* grads) const = 0;

    virtual std::vector<ParamRef> parameters() = 0;
    virtual std::vector<Tensor> zero_grads() const = 0;
    virtual std::unique_ptr<Layer> clone() const = 0;
};

struct Shape3 {
    int c = 0, h = 0, w = 0;
    int numel() const { return c * h * w; }
};

std::unique_ptr<Layer> make_conv3x3(const std::string& name, Shape3 in, int out_channels,
                                    Rng init_rng);
std::unique_ptr<Layer> make_relu(const std::string& name, std::vector<int> shape);
std::unique_ptr<Layer> make_maxpool2(const std::string& name, Shape3 in);
std::unique_ptr<Layer> make_dense(const std::string& name, int in_size, int out_size,
                                  Rng init_rng);
// Fixed elementwise affine (x - shift) * scale, no trainable parameters;
// standardizes [0,1] pixels at the network entry.
std::unique_ptr<Layer> make_input_scale(const std::string& name, std::vector<int> shape,
                                        float shift, float scale);

}  // namespace demtrain::model
