#include "ppssl/backbone.hpp"
#include "ppssl/ops.hpp"

namespace ppssl::model {

namespace {

struct ConvBn {
  Var weight;  // bias-free conv
  Var gamma, beta;
  int stride = 1, pad = 0;

  Var run(Graph& g, const Var& x) const {
    return ops::batchnorm2d(g, ops::conv2d(g, x, weight, nullptr, stride, pad), gamma, beta);
  }
};

struct Bottleneck {
  ConvBn c1, c2, c3;
  bool has_down = false;
  ConvBn down;

  Var run(Graph& g, const Var& x) const {
    Var h = ops::relu(g, c1.run(g, x));
    h = ops::relu(g, c2.run(g, h));
    h = c3.run(g, h);
    Var skip = has_down ? down.run(g, x) : x;
    return ops::relu(g, ops::add(g, h, skip));
  }
};

class ResNet50 final : public EncoderImpl {
public:
  ResNet50(const std::string& prefix, std::uint64_t seed, bool trainable) {
    stem_ = conv_bn(prefix + ".stem", 3, 64, 7, 2, 3, seed, trainable);
    int in = 64;
    const int planes[4] = {64, 128, 256, 512};
    const int depth[4] = {3, 4, 6, 3};
    for (int l = 0; l < 4; ++l) {
      std::vector<Bottleneck> blocks;
      for (int b = 0; b < depth[l]; ++b) {
        const std::string base =
            prefix + ".layer" + std::to_string(l + 1) + ".block" + std::to_string(b);
        const int stride = (b == 0 && l > 0) ? 2 : 1;
        const int out = planes[l] * 4;
        Bottleneck blk;
        blk.c1 = conv_bn(base + ".conv1", in, planes[l], 1, 1, 0, seed, trainable);
        blk.c2 = conv_bn(base + ".conv2", planes[l], planes[l], 3, stride, 1, seed, trainable);
        blk.c3 = conv_bn(base + ".conv3", planes[l], out, 1, 1, 0, seed, trainable);
        if (stride != 1 || in != out) {
          blk.has_down = true;
          blk.down = conv_bn(base + ".down", in, out, 1, stride, 0, seed, trainable);
        }
        in = out;
        blocks.push_back(std::move(blk));
      }
      layers_.push_back(std::move(blocks));
    }
  }

  EncoderOutput forward(Graph& g, const Var& batch) const override {
    EncoderOutput out;
    Var h = ops::relu(g, stem_.run(g, batch));
    h = ops::maxpool2d(g, h, 3, 2, 1);
    out.taps.push_back(h);
    for (const auto& layer : layers_) {
      for (const auto& blk : layer) h = blk.run(g, h);
      out.taps.push_back(h);
    }
    out.feature_map = h;
    out.pooled = ops::global_avg_pool(g, h);
    return out;
  }

  int out_channels() const override { return 2048; }
  int num_stages() const override { return 5; }

private:
  ConvBn conv_bn(const std::string& base, int cin, int cout, int k, int stride, int pad,
                 std::uint64_t seed, bool trainable) {
    ConvBn cb;
    cb.stride = stride;
    cb.pad = pad;
    Tensor w = he_normal({cout, cin, k, k}, std::int64_t(cin) * k * k, seed, base + ".weight");
    cb.weight = make_leaf(std::move(w), trainable, base + ".weight");
    cb.gamma = make_leaf(Tensor::full({cout}, 1.0), trainable, base + ".bn.gamma");
    cb.beta = make_leaf(Tensor::zeros({cout}), trainable, base + ".bn.beta");
    params_.push_back({base + ".weight", cb.weight});
    params_.push_back({base + ".bn.gamma", cb.gamma});
    params_.push_back({base + ".bn.beta", cb.beta});
    return cb;
  }

  ConvBn stem_;
  std::vector<std::vector<Bottleneck>> layers_;
};

}  // namespace

std::unique_ptr<EncoderImpl> make_resnet50(const EncoderConfig&, const std::string& prefix,
                                           std::uint64_t seed, bool trainable) {
  return std::make_unique<ResNet50>(prefix, seed, trainable);
}

}  // namespace ppssl::model
