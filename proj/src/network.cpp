#include "hypervox/network.hpp"

#include "hypervox/error.hpp"

namespace hypervox {

std::size_t argmax(std::span<const float> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

Network::Network(NetworkSpec spec, std::vector<Stage> stages) : spec_(std::move(spec)), stages_(std::move(stages)) {}

Network Network::build(const NetworkSpec& spec, Prng& rng) {
  validate(spec);
  const ShapeTrace trace = shape_trace(spec);
  std::vector<Stage> stages;
  stages.reserve(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const LayerTrace& lt = trace.layers[i];
    Stage s;
    s.spec = l;
    if (l.is_conv()) {
      Conv3dGeometry g;
      g.in_channels = static_cast<int>(lt.input[0]);
      g.filters = l.filters;
      g.kernel = l.kernel;
      g.stride = l.stride;
      g.pad = l.pad;
      s.conv = Conv3dLayer::zeros(g);
      s.conv.weights = init_msra(s.conv.weights.shape(), g.fan_in(), rng);
    } else {
      const auto in_dim = static_cast<int>(shape_product(lt.input));
      s.dense = DenseLayer::zeros(in_dim, l.filters);
      s.dense.weights = init_msra(s.dense.weights.shape(), static_cast<std::size_t>(in_dim), rng);
    }
    s.grad_weights = Tensor(s.weights().shape());
    s.grad_bias = Tensor(s.bias().shape());
    stages.push_back(std::move(s));
  }
  return Network(spec, std::move(stages));
}

void Network::check_voxel(const Tensor& voxel) const {
  if (voxel.shape() != input_shape()) {
    throw ShapeError("network expects voxels of shape " + shape_to_string(input_shape()) + ", got " +
                     shape_to_string(voxel.shape()));
  }
}

Tensor Network::logits(const Tensor& voxel) const {
  check_voxel(voxel);
  Tensor x = voxel;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const Stage& s = stages_[i];
    x = s.spec.is_conv() ? conv3d_forward(x, s.conv) : dense_forward(x, s.dense);
    if (s.spec.relu && i + 1 < stages_.size()) relu_inplace(x);
  }
  return x;
}

Tensor Network::probabilities(const Tensor& voxel) const { return softmax(logits(voxel)); }

std::size_t Network::predict(const Tensor& voxel) const { return argmax(logits(voxel).data()); }

float Network::accumulate_gradients(const Tensor& voxel, std::size_t label, Prng& dropout_rng, float weight) {
  check_voxel(voxel);
  const std::size_t count = stages_.size();

  // Backprop only needs to reach the earliest trainable stage.
  std::size_t first_trainable = count;
  for (std::size_t i = 0; i < count; ++i) {
    if (!stages_[i].frozen) {
      first_trainable = i;
      break;
    }
  }

  struct Saved {
    Conv3dCache conv;
    DropoutLayer dropout;
    Tensor dense_input;
    Tensor output;  // post-activation
  };
  std::vector<Saved> saved(count);

  Tensor x = voxel;
  for (std::size_t i = 0; i < count; ++i) {
    Stage& s = stages_[i];
    Saved& sv = saved[i];
    if (s.spec.is_conv()) {
      x = conv3d_forward(x, s.conv, i >= first_trainable ? &sv.conv : nullptr);
    } else {
      if (s.spec.dropout) {
        sv.dropout.rate = *s.spec.dropout;
        sv.dropout.mode = mode_;
        x = dropout_forward(x, sv.dropout, dropout_rng);
      }
      sv.dense_input = x;
      x = dense_forward(x, s.dense);
    }
    if (s.spec.relu && i + 1 < count) relu_inplace(x);
    if (i >= first_trainable) sv.output = x;
  }

  const SoftmaxLoss fused = softmax_cross_entropy(x, label);
  Tensor grad = softmax_cross_entropy_backward(fused.probs, label);

  for (std::size_t i = count; i-- > first_trainable;) {
    Stage& s = stages_[i];
    Saved& sv = saved[i];
    if (s.spec.relu && i + 1 < count) grad = relu_backward(grad, sv.output);
    const bool want_input = i > first_trainable;
    if (s.spec.is_conv()) {
      Conv3dGrads g = conv3d_backward(grad, sv.conv, s.conv, want_input);
      if (!s.frozen) {
        axpy(weight, g.weights, s.grad_weights);
        axpy(weight, g.bias, s.grad_bias);
      }
      grad = std::move(g.input);
    } else {
      DenseGrads g = dense_backward(grad, sv.dense_input, s.dense);
      if (!s.frozen) {
        axpy(weight, g.weights, s.grad_weights);
        axpy(weight, g.bias, s.grad_bias);
      }
      grad = s.spec.dropout ? dropout_backward(g.input, sv.dropout) : std::move(g.input);
    }
  }
  return fused.loss;
}

void Network::zero_grad() {
  for (auto& s : stages_) {
    s.grad_weights.fill(0.0f);
    s.grad_bias.fill(0.0f);
  }
}

namespace {

std::string stage_prefix(std::size_t i, const Stage& s) {
  return "layer" + std::to_string(i) + "." + std::string(to_string(s.spec.kind));
}

}  // namespace

std::vector<ParamRef> Network::parameters() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    Stage& s = stages_[i];
    out.push_back({stage_prefix(i, s) + ".weight", &s.weights(), &s.grad_weights, false});
    out.push_back({stage_prefix(i, s) + ".bias", &s.bias(), &s.grad_bias, true});
  }
  return out;
}

std::vector<ParamRef> Network::trainable_parameters() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    Stage& s = stages_[i];
    if (s.frozen) continue;
    out.push_back({stage_prefix(i, s) + ".weight", &s.weights(), &s.grad_weights, false});
    out.push_back({stage_prefix(i, s) + ".bias", &s.bias(), &s.grad_bias, true});
  }
  return out;
}

std::vector<NamedTensor> Network::named_tensors() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const Stage& s = stages_[i];
    out.push_back({stage_prefix(i, s) + ".weight", &s.weights()});
    out.push_back({stage_prefix(i, s) + ".bias", &s.bias()});
  }
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t total = 0;
  for (const auto& s : stages_) total += s.weights().size() + s.bias().size();
  return total;
}

std::size_t Network::trainable_parameter_count() const {
  std::size_t total = 0;
  for (const auto& s : stages_) {
    if (!s.frozen) total += s.weights().size() + s.bias().size();
  }
  return total;
}

void Network::freeze_convolutions() {
  for (auto& s : stages_) {
    if (s.spec.is_conv()) s.frozen = true;
  }
}

}  // namespace hypervox
