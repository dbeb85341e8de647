#include "demtrain/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "demtrain/errors.hpp"

namespace demtrain::model {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using VecMap = Eigen::Map<Eigen::VectorXf>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXf>;

void he_init(Tensor& w, int fan_in, Rng& rng) {
    double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : w.vec()) v = static_cast<float>(rng.normal() * std_dev);
}

// 3x3, stride 1, pad 1 convolution implemented as im2col + GEMM per sample.
class Conv3x3 final : public Layer {
public:
    Conv3x3(std::string name, Shape3 in, int out_channels, Rng rng)
        : name_(std::move(name)), in_(in), out_channels_(out_channels),
          weight_({out_channels, in.c * 9}), bias_({out_channels}) {
        he_init(weight_, in.c * 9, rng);
        std::fill(bias_.vec().begin(), bias_.vec().end(), 0.05f);  // keeps units alive
    }

    const std::string& name() const override { return name_; }
    std::string kind() const override { return "conv3x3"; }
    int in_size() const override { return in_.numel(); }
    int out_size() const override { return out_channels_ * in_.h * in_.w; }
    std::vector<int> out_shape() const override { return {out_channels_, in_.h, in_.w}; }

    int col_rows() const { return in_.c * 9; }
    int col_cols() const { return in_.h * in_.w; }

    void im2col(const float* in, float* col) const {
        const int h = in_.h, w = in_.w;
        for (int c = 0; c < in_.c; ++c) {
            const float* plane = in + c * h * w;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    float* row = col + ((c * 9) + ky * 3 + kx) * (h * w);
                    for (int y = 0; y < h; ++y) {
                        int sy = y + ky - 1;
                        if (sy < 0 || sy >= h) {
                            std::memset(row + y * w, 0, sizeof(float) * static_cast<size_t>(w));
                            continue;
                        }
                        for (int x = 0; x < w; ++x) {
                            int sx = x + kx - 1;
                            row[y * w + x] = (sx < 0 || sx >= w) ? 0.0f : plane[sy * w + sx];
                        }
                    }
                }
            }
        }
    }

    void col2im(const float* col, float* in_grad) const {
        const int h = in_.h, w = in_.w;
        std::memset(in_grad, 0, sizeof(float) * static_cast<size_t>(in_size()));
        for (int c = 0; c < in_.c; ++c) {
            float* plane = in_grad + c * h * w;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const float* row = col + ((c * 9) + ky * 3 + kx) * (h * w);
                    for (int y = 0; y < h; ++y) {
                        int sy = y + ky - 1;
                        if (sy < 0 || sy >= h) continue;
                        for (int x = 0; x < w; ++x) {
                            int sx = x + kx - 1;
                            if (sx < 0 || sx >= w) continue;
                            plane[sy * w + sx] += row[y * w + x];
                        }
                    }
                }
            }
        }
    }

    void forward(const float* in, int batch, float* out, LayerCache& cache) const override {
        const int cr = col_rows(), cc = col_cols();
        cache.cols = Tensor({batch, cr, cc});
        ConstMatMap w_map(weight_.data(), out_channels_, cr);
#pragma omp parallel for schedule(static)
        for (int s = 0; s < batch; ++s) {
            float* col = cache.cols.data() + static_cast<std::int64_t>(s) * cr * cc;
            im2col(in + static_cast<std::int64_t>(s) * in_size(), col);
            MatMap out_map(out + static_cast<std::int64_t>(s) * out_size(), out_channels_, cc);
            ConstMatMap col_map(col, cr, cc);
            out_map.noalias() = w_map * col_map;
            for (int oc = 0; oc < out_channels_; ++oc) out_map.row(oc).array() += bias_[oc];
        }
    }

    void backward(const float*, const float*, const float* d_out, int batch,
                  const LayerCache& cache, float* d_in,
                  std::vector<Tensor>* grads) const override {
        const int cr = col_rows(), cc = col_cols();
        ConstMatMap w_map(weight_.data(), out_channels_, cr);
#pragma omp parallel for schedule(static)
        for (int s = 0; s < batch; ++s) {
            ConstMatMap dout_map(d_out + static_cast<std::int64_t>(s) * out_size(),
                                 out_channels_, cc);
            Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dcol =
                w_map.transpose() * dout_map;
            col2im(dcol.data(), d_in + static_cast<std::int64_t>(s) * in_size());
        }
        if (!grads) return;
        Tensor& dw = (*grads)[0];
        Tensor& db = (*grads)[1];
        // Row-block parallelism with a fixed sample order keeps the
        // accumulation independent of thread count.
        constexpr int kBlock = 16;
        const int nblocks = (out_channels_ + kBlock - 1) / kBlock;
#pragma omp parallel for schedule(static)
        for (int b = 0; b < nblocks; ++b) {
            const int r0 = b * kBlock;
            const int rows = std::min(kBlock, out_channels_ - r0);
            MatMap dw_blk(dw.data() + static_cast<std::int64_t>(r0) * cr, rows, cr);
            for (int s = 0; s < batch; ++s) {
                ConstMatMap dout_map(d_out + static_cast<std::int64_t>(s) * out_size(),
                                     out_channels_, cc);
                ConstMatMap col_map(cache.cols.data() + static_cast<std::int64_t>(s) * cr * cc,
                                    cr, cc);
                dw_blk.noalias() += dout_map.middleRows(r0, rows) * col_map.transpose();
            }
            for (int oc = r0; oc < r0 + rows; ++oc) {
                double db_acc = static_cast<double>(db[oc]);
                for (int s = 0; s < batch; ++s) {
                    ConstMatMap dout_map(d_out + static_cast<std::int64_t>(s) * out_size(),
                                         out_channels_, cc);
                    db_acc += static_cast<double>(dout_map.row(oc).sum());
                }
                db[oc] = static_cast<float>(db_acc);
            }
        }
    }

    std::vector<ParamRef> parameters() override {
        return {{name_ + ".weight", &weight_}, {name_ + ".bias", &bias_}};
    }
    std::vector<Tensor> zero_grads() const override {
        return {Tensor(weight_.shape()), Tensor(bias_.shape())};
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv3x3>(*this); }

private:
    std::string name_;
    Shape3 in_;
    int out_channels_;
    Tensor weight_;  // out_channels x (in.c*9)
    Tensor bias_;    // out_channels
};

class Relu final : public Layer {
public:
    Relu(std::string name, std::vector<int> shape)
        : name_(std::move(name)), shape_(std::move(shape)),
          size_(static_cast<int>(Tensor::numel_of(shape_))) {}

    const std::string& name() const override { return name_; }
    std::string kind() const override { return "relu"; }
    int in_size() const override { return size_; }
    int out_size() const override { return size_; }
    std::vector<int> out_shape() const override { return shape_; }

    void forward(const float* in, int batch, float* out, LayerCache&) const override {
        std::int64_t n = static_cast<std::int64_t>(batch) * size_;
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) out[i] = in[i] > 0.0f ? in[i] : 0.0f;
    }

    void backward(const float* in, const float*, const float* d_out, int batch,
                  const LayerCache&, float* d_in, std::vector<Tensor>*) const override {
        std::int64_t n = static_cast<std::int64_t>(batch) * size_;
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) d_in[i] = in[i] > 0.0f ? d_out[i] : 0.0f;
    }

    std::vector<ParamRef> parameters() override { return {}; }
    std::vector<Tensor> zero_grads() const override { return {}; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Relu>(*this); }

private:
    std::string name_;
    std::vector<int> shape_;
    int size_;
};

// 2x2 max pooling, stride 2, floor semantics on odd extents.
class MaxPool2 final : public Layer {
public:
    MaxPool2(std::string name, Shape3 in)
        : name_(std::move(name)), in_(in), oh_(in.h / 2), ow_(in.w / 2) {
        if (oh_ < 1 || ow_ < 1) throw ConfigError("maxpool: input too small for " + name_);
    }

    const std::string& name() const override { return name_; }
    std::string kind() const override { return "maxpool2"; }
    int in_size() const override { return in_.numel(); }
    int out_size() const override { return in_.c * oh_ * ow_; }
    std::vector<int> out_shape() const override { return {in_.c, oh_, ow_}; }

    void forward(const float* in, int batch, float* out, LayerCache& cache) const override {
        cache.argmax.assign(static_cast<size_t>(batch) * out_size(), 0);
#pragma omp parallel for schedule(static)
        for (int s = 0; s < batch; ++s) {
            const float* src = in + static_cast<std::int64_t>(s) * in_size();
            float* dst = out + static_cast<std::int64_t>(s) * out_size();
            int* arg = cache.argmax.data() + static_cast<std::int64_t>(s) * out_size();
            for (int c = 0; c < in_.c; ++c) {
                const float* plane = src + c * in_.h * in_.w;
                for (int y = 0; y < oh_; ++y) {
                    for (int x = 0; x < ow_; ++x) {
                        int base = (2 * y) * in_.w + 2 * x;
                        int best = base;
                        float bv = plane[base];
                        int cand[3] = {base + 1, base + in_.w, base + in_.w + 1};
                        for (int k = 0; k < 3; ++k) {
                            if (plane[cand[k]] > bv) {
                                bv = plane[cand[k]];
                                best = cand[k];
                            }
                        }
                        int oidx = c * oh_ * ow_ + y * ow_ + x;
                        dst[oidx] = bv;
                        arg[oidx] = c * in_.h * in_.w + best;
                    }
                }
            }
        }
    }

    void backward(const float*, const float*, const float* d_out, int batch,
                  const LayerCache& cache, float* d_in, std::vector<Tensor>*) const override {
#pragma omp parallel for schedule(static)
        for (int s = 0; s < batch; ++s) {
            float* dst = d_in + static_cast<std::int64_t>(s) * in_size();
            std::memset(dst, 0, sizeof(float) * static_cast<size_t>(in_size()));
            const float* src = d_out + static_cast<std::int64_t>(s) * out_size();
            const int* arg = cache.argmax.data() + static_cast<std::int64_t>(s) * out_size();
            for (int i = 0; i < out_size(); ++i) dst[arg[i]] += src[i];
        }
    }

    std::vector<ParamRef> parameters() override { return {}; }
    std::vector<Tensor> zero_grads() const override { return {}; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool2>(*this); }

private:
    std::string name_;
    Shape3 in_;
    int oh_, ow_;
};

class InputScale final : public Layer {
public:
    InputScale(std::string name, std::vector<int> shape, float shift, float scale)
        : name_(std::move(name)), shape_(std::move(shape)),
          size_(static_cast<int>(Tensor::numel_of(shape_))), shift_(shift), scale_(scale) {}

    const std::string& name() const override { return name_; }
    std::string kind() const override { return "input_scale"; }
    int in_size() const override { return size_; }
    int out_size() const override { return size_; }
    std::vector<int> out_shape() const override { return shape_; }

    void forward(const float* in, int batch, float* out, LayerCache&) const override {
        std::int64_t n = static_cast<std::int64_t>(batch) * size_;
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) out[i] = (in[i] - shift_) * scale_;
    }

    void backward(const float*, const float*, const float* d_out, int batch, const LayerCache&,
                  float* d_in, std::vector<Tensor>*) const override {
        std::int64_t n = static_cast<std::int64_t>(batch) * size_;
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) d_in[i] = d_out[i] * scale_;
    }

    std::vector<ParamRef> parameters() override { return {}; }
    std::vector<Tensor> zero_grads() const override { return {}; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<InputScale>(*this); }

private:
    std::string name_;
    std::vector<int> shape_;
    int size_;
    float shift_, scale_;
};

class Dense final : public Layer {
public:
    Dense(std::string name, int in_size, int out_size, Rng rng)
        : name_(std::move(name)), in_size_(in_size), out_size_(out_size),
          weight_({out_size, in_size}), bias_({out_size}) {
        he_init(weight_, in_size, rng);
        std::fill(bias_.vec().begin(), bias_.vec().end(), 0.05f);
    }

    const std::string& name() const override { return name_; }
    std::string kind() const override { return "dense"; }
    int in_size() const override { return in_size_; }
    int out_size() const override { return out_size_; }
    std::vector<int> out_shape() const override { return {out_size_}; }

    void forward(const float* in, int batch, float* out, LayerCache&) const override {
        ConstMatMap w_map(weight_.data(), out_size_, in_size_);
        ConstVecMap b_map(bias_.data(), out_size_);
#pragma omp parallel for schedule(static)
        for (int s = 0; s < batch; ++s) {
            ConstVecMap x(in + static_cast<std::int64_t>(s) * in_size_, in_size_);
            VecMap y(out + static_cast<std::int64_t>(s) * out_size_, out_size_);
            y.noalias() = w_map * x;
            y += b_map;
        }
    }

    void backward(const float* in, const float*, const float* d_out, int batch,
                  const LayerCache&, float* d_in, std::vector<Tensor>* grads) const override {
        ConstMatMap w_map(weight_.data(), out_size_, in_size_);
#pragma omp parallel for schedule(static)
        for (int s = 0; s < batch; ++s) {
            ConstVecMap dy(d_out + static_cast<std::int64_t>(s) * out_size_, out_size_);
            VecMap dx(d_in + static_cast<std::int64_t>(s) * in_size_, in_size_);
            dx.noalias() = w_map.transpose() * dy;
        }
        if (!grads) return;
        Tensor& dw = (*grads)[0];
        Tensor& db = (*grads)[1];
        ConstMatMap in_map(in, batch, in_size_);
        ConstMatMap dout_map(d_out, batch, out_size_);
        // Split over output-row blocks; each block sums the batch in fixed order.
        constexpr int kBlock = 16;
        const int nblocks = (out_size_ + kBlock - 1) / kBlock;
#pragma omp parallel for schedule(static)
        for (int b = 0; b < nblocks; ++b) {
            const int r0 = b * kBlock;
            const int rows = std::min(kBlock, out_size_ - r0);
            MatMap dw_blk(dw.data() + static_cast<std::int64_t>(r0) * in_size_, rows, in_size_);
            dw_blk.noalias() += dout_map.middleCols(r0, rows).transpose() * in_map;
            for (int o = r0; o < r0 + rows; ++o) {
                double acc = static_cast<double>(db[o]);
                for (int s = 0; s < batch; ++s) acc += static_cast<double>(dout_map(s, o));
                db[o] = static_cast<float>(acc);
            }
        }
    }

    std::vector<ParamRef> parameters() override {
        return {{name_ + ".weight", &weight_}, {name_ + ".bias", &bias_}};
    }
    std::vector<Tensor> zero_grads() const override {
        return {Tensor(weight_.shape()), Tensor(bias_.shape())};
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }

private:
    std::string name_;
    int in_size_, out_size_;
    Tensor weight_;  // out x in
    Tensor bias_;
};

}  // namespace

std::unique_ptr<Layer> make_conv3x3(const std::string& name, Shape3 in, int out_channels,
                                    Rng init_rng) {
    return std::make_unique<Conv3x3>(name, in, out_channels, init_rng);
}

std::unique_ptr<Layer> make_relu(const std::string& name, std::vector<int> shape) {
    return std::make_unique<Relu>(name, std::move(shape));
}

std::unique_ptr<Layer> make_maxpool2(const std::string& name, Shape3 in) {
    return std::make_unique<MaxPool2>(name, in);
}

std::unique_ptr<Layer> make_dense(const std::string& name, int in_size, int out_size,
                                  Rng init_rng) {
    return std::make_unique<Dense>(name, in_size, out_size, init_rng);
}

std::unique_ptr<Layer> make_input_scale(const std::string& name, std::vector<int> shape,
                                        float shift, float scale) {
    return std::make_unique<InputScale>(name, std::move(shape), shift, scale);
}

}  // namespace demtrain::model
