#include "lfd/model.hpp"

#include <cmath>
#include <random>

#include "lfd/errors.hpp"

namespace lfd {
namespace {

template <typename T>
Tensor<T> he_uniform(Shape shape, std::int64_t fan_in, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> zeros_param(Shape shape) {
  Tensor<T> t(std::move(shape), T{0});
  t.set_requires_grad(true);
  return t;
}

template <typename T>
ForwardOutput<T> run_forward(const Model<T>& model, std::vector<BatchNormState<T>*> bn,
                             const Tensor<T>& images, Mode mode, Tape<T>* tape) {
  const auto& cfg = model.config;
  if (images.rank() != 4 || images.dim(1) != cfg.in_channels) {
    throw DimensionError("forward expects N×" + std::to_string(cfg.in_channels) +
                         "×H×W images, got " + shape_str(images.shape()));
  }
  const auto grid = output_grid(cfg, images.dim(2), images.dim(3));
  if (mode == Mode::kTrain && (images.dim(2) != cfg.input_size || images.dim(3) != cfg.input_size)) {
    throw DimensionError("train-mode forward expects " + std::to_string(cfg.input_size) + "x" +
                         std::to_string(cfg.input_size) + " inputs, got " +
                         shape_str(images.shape()));
  }

  Tensor<T> x = images;
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    if (static_cast<std::int64_t>(i) == cfg.pool_position) {
      x = maxpool2d(x, cfg.pool_kernel, cfg.pool_stride, tape);
    }
    const auto& block = model.blocks[i];
    x = conv2d_valid(x, block.weight, block.bias, tape);
    x = relu(x, tape);
    x = batchnorm2d(x, *bn[i], mode, tape);
  }
  if (cfg.pool_position == static_cast<std::int64_t>(model.blocks.size())) {
    x = maxpool2d(x, cfg.pool_kernel, cfg.pool_stride, tape);
  }

  ForwardOutput<T> out;
  out.grid = grid;
  for (const auto& head : model.seg_heads) {
    out.seg_logits.push_back(conv2d_valid(x, head.weight, head.bias, tape));
  }
  out.image_logits = affine(global_avg_pool(x, tape), model.cls_weight, model.cls_bias, tape);
  return out;
}

}  // namespace

template <typename T>
std::vector<NamedTensor<T>> Model<T>::parameters() const {
  std::vector<NamedTensor<T>> params;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto prefix = "conv" + std::to_string(i + 1);
    params.push_back({prefix + ".weight", blocks[i].weight});
    params.push_back({prefix + ".bias", blocks[i].bias});
    params.push_back({prefix + ".bn.gamma", blocks[i].bn.gamma});
    params.push_back({prefix + ".bn.beta", blocks[i].bn.beta});
  }
  for (std::size_t h = 0; h < seg_heads.size(); ++h) {
    const auto prefix = "seg" + std::to_string(h);
    params.push_back({prefix + ".weight", seg_heads[h].weight});
    params.push_back({prefix + ".bias", seg_heads[h].bias});
  }
  params.push_back({"cls.weight", cls_weight});
  params.push_back({"cls.bias", cls_bias});
  return params;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

template <typename T>
Model<T> Model<T>::clone() const {
  Model copy = *this;
  for (auto& b : copy.blocks) {
    b.weight = b.weight.clone();
    b.bias = b.bias.clone();
    b.bn.gamma = b.bn.gamma.clone();
    b.bn.beta = b.bn.beta.clone();
  }
  for (auto& h : copy.seg_heads) {
    h.weight = h.weight.clone();
    h.bias = h.bias.clone();
  }
  copy.cls_weight = cls_weight.clone();
  copy.cls_bias = cls_bias.clone();
  return copy;
}

template <typename T>
Model<T> build_model(const ArchConfig& config, std::uint64_t seed) {
  validate(config);
  Model<T> model;
  model.config = config;
  model.rf = receptive_field(config);
  std::mt19937_64 rng(seed);
  std::int64_t in = config.in_channels;
  for (std::size_t i = 0; i < config.conv_kernels.size(); ++i) {
    const auto k = config.conv_kernels[i];
    const auto out = config.conv_channels[i];
    model.blocks.push_back({he_uniform<T>(Shape{out, in, k, k}, in * k * k, rng),
                            zeros_param<T>(Shape{out}), BatchNormState<T>(out)});
    in = out;
  }
  for (std::int64_t h = 0; h < config.num_seg_heads; ++h) {
    model.seg_heads.push_back({he_uniform<T>(Shape{config.num_classes, in, 1, 1}, in, rng),
                               zeros_param<T>(Shape{config.num_classes})});
  }
  model.cls_weight = he_uniform<T>(Shape{config.num_classes, in}, in, rng);
  model.cls_bias = zeros_param<T>(Shape{config.num_classes});
  return model;
}

template <typename T>
ForwardOutput<T> forward(Model<T>& model, const Tensor<T>& images, Mode mode, Tape<T>* tape) {
  std::vector<BatchNormState<T>*> bn;
  for (auto& b : model.blocks) bn.push_back(&b.bn);
  return run_forward(model, std::move(bn), images, mode, tape);
}

template <typename T>
ForwardOutput<T> forward_eval(const Model<T>& model, const Tensor<T>& images) {
  // Eval mode never writes running statistics, so shallow copies suffice.
  std::vector<BatchNormState<T>> copies;
  copies.reserve(model.blocks.size());
  for (const auto& b : model.blocks) copies.push_back(b.bn);
  std::vector<BatchNormState<T>*> bn;
  for (auto& c : copies) bn.push_back(&c);
  return run_forward<T>(model, std::move(bn), images, Mode::kEval, nullptr);
}

template <typename T>
std::int64_t param_count(const Model<T>& model) {
  std::int64_t n = 0;
  for (const auto& p : model.parameters()) n += p.tensor.numel();
  return n;
}

#define LFD_INSTANTIATE_MODEL(T)                                                          \
  template class Model<T>;                                                                \
  template Model<T> build_model<T>(const ArchConfig&, std::uint64_t);                     \
  template ForwardOutput<T> forward<T>(Model<T>&, const Tensor<T>&, Mode, Tape<T>*);      \
  template ForwardOutput<T> forward_eval<T>(const Model<T>&, const Tensor<T>&);           \
  template std::int64_t param_count<T>(const Model<T>&);

LFD_INSTANTIATE_MODEL(float)
LFD_INSTANTIATE_MODEL(double)
LFD_INSTANTIATE_MODEL(long double)

}  // namespace lfd
