#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glymph/adam.hpp"
#include "glymph/ops.hpp"
#include "glymph/rng.hpp"
#include "glymph/tensor.hpp"

namespace glymph {

struct UNetConfig {
  int in_channels = 2;   // 2 per input time point (sagittal + axial)
  int out_channels = 2;  // predicted sagittal + axial pair
  int base_features = 64;
  int depth = 4;         // number of pooling levels
  std::uint64_t seed = 0;
  int max_features = 1024; // cap on base_features * 2^depth

  bool operator==(const UNetConfig& o) const {
    return in_channels == o.in_channels && out_channels == o.out_channels &&
           base_features == o.base_features && depth == o.depth;
  }
};

// Initialization gains. Weight draws are fan-in-scaled Gaussians; with
// batch normalization re-scaling every block, small hidden gains speed up
// early training (Adam moves weights a fixed distance per step, so smaller
// weights rotate the represented function faster). The head starts near a
// flat mid-intensity output.
inline constexpr double kHiddenInitGain = 0.02; // variance = gain / fan_in
inline constexpr double kHeadInitGain = 0.005;
inline constexpr double kHeadBiasInit = 0.35;

namespace detail {

template <typename S>
struct DoubleConv {
  Tensor<S> w1, b1, g1, be1, rm1, rv1;
  Tensor<S> w2, b2, g2, be2, rm2, rv2;

  void init(int c_in, int c_out, Rng& rng) {
    w1 = Tensor<S>({c_out, c_in, 3, 3});
    b1 = Tensor<S>({c_out});
    w2 = Tensor<S>({c_out, c_out, 3, 3});
    b2 = Tensor<S>({c_out});
    const double std1 = std::sqrt(kHiddenInitGain / (static_cast<double>(c_in) * 9));
    const double std2 = std::sqrt(kHiddenInitGain / (static_cast<double>(c_out) * 9));
    for (Eigen::Index i = 0; i < w1.size(); ++i) w1[i] = static_cast<S>(rng.normal(0.0, std1));
    for (Eigen::Index i = 0; i < w2.size(); ++i) w2[i] = static_cast<S>(rng.normal(0.0, std2));
    g1 = Tensor<S>::full({c_out}, S(1));
    be1 = Tensor<S>({c_out});
    rm1 = Tensor<S>({c_out});
    rv1 = Tensor<S>::full({c_out}, S(1));
    g2 = Tensor<S>::full({c_out}, S(1));
    be2 = Tensor<S>({c_out});
    rm2 = Tensor<S>({c_out});
    rv2 = Tensor<S>::full({c_out}, S(1));
  }
};

} // namespace detail

/// Per-stage activations retained by a training-mode forward pass; backward
/// walks these in reverse. Gradients accumulate into the stored tensors'
/// grad slots, so a trace is single-use per backward call.
template <typename S>
struct UNetTrace {
  struct Block {
    Tensor<S> x;             // block input
    Tensor<S> c1, n1, r1;    // conv1 out, bn1 out, relu1 out
    Tensor<S> c2, n2, r2;    // conv2 out, bn2 out, relu2 out (block output)
  };
  struct UpStage {
    Tensor<S> up;  // upconv output
    Block block;   // block.x is the concatenated tensor
  };
  Tensor<S> input;
  std::vector<Block> down;   // one per level, x = previous pooled tensor
  Block bottleneck;
  std::vector<UpStage> up;   // stored bottom-up (level depth-1 first)
  Mode mode = Mode::Train;
};

/// The modified U-net: a contracting path of double conv3x3+batchnorm+relu
/// blocks with 2x2 max pooling, a bottleneck, an expansive path of 2x2
/// transposed convolutions with skip concatenations, and a 1x1 convolution
/// head with no activation. Channel width doubles per level from
/// base_features.
template <typename S>
class UNet {
public:
  explicit UNet(const UNetConfig& config) : config_(config) {
    if (config.in_channels <= 0 || config.out_channels <= 0 || config.base_features <= 0 ||
        config.depth <= 0)
      fail(ErrorKind::Config, "unet: all config extents must be positive");
    const long widest = static_cast<long>(config.base_features) << config.depth;
    if (widest > config.max_features)
      fail(ErrorKind::Config,
           "unet: base_features * 2^depth = " + std::to_string(widest) +
               " exceeds the configured feature cap " + std::to_string(config.max_features));

    Rng rng(config.seed);
    down_.resize(static_cast<std::size_t>(config.depth));
    up_w_.resize(down_.size());
    up_b_.resize(down_.size());
    up_blocks_.resize(down_.size());

    int ch = config.in_channels;
    for (int i = 0; i < config.depth; ++i) {
      const int f = features_at(i);
      down_[static_cast<std::size_t>(i)].init(ch, f, rng);
      ch = f;
    }
    bottleneck_.init(ch, features_at(config.depth), rng);

    for (int i = config.depth - 1; i >= 0; --i) {
      const int f_above = features_at(i + 1);
      const int f = features_at(i);
      const std::size_t k = stage_index(i);
      up_w_[k] = Tensor<S>({f_above, f, 2, 2});
      up_b_[k] = Tensor<S>({f});
      const double stdu = std::sqrt(kHiddenInitGain / (static_cast<double>(f_above) * 4));
      for (Eigen::Index t = 0; t < up_w_[k].size(); ++t)
        up_w_[k][t] = static_cast<S>(rng.normal(0.0, stdu));
      up_blocks_[k].init(2 * f, f, rng);
    }

    head_w_ = Tensor<S>({config.out_channels, config.base_features, 1, 1});
    head_b_ = Tensor<S>::full({config.out_channels}, static_cast<S>(kHeadBiasInit));
    const double stdh = std::sqrt(kHeadInitGain / static_cast<double>(config.base_features));
    for (Eigen::Index t = 0; t < head_w_.size(); ++t)
      head_w_[t] = static_cast<S>(rng.normal(0.0, stdh));
  }

  const UNetConfig& config() const { return config_; }

  int features_at(int level) const { return config_.base_features << level; }

  Tensor<S> forward(const Tensor<S>& batch, Mode mode) { return run(batch, mode, nullptr); }

  Tensor<S> forward(const Tensor<S>& batch, Mode mode, UNetTrace<S>& trace) {
    trace = UNetTrace<S>{};
    trace.mode = mode;
    return run(batch, mode, &trace);
  }

  /// Accumulates parameter gradients (and trace.input.grad) for the forward
  /// pass recorded in `trace`, given the gradient of the loss with respect
  /// to the network output. Set want_input_grad when the gradient with
  /// respect to the input batch is needed.
  void backward(UNetTrace<S>& trace, const Tensor<S>& gout, bool want_input_grad = false) {
    Tensor<S> g = gout;

    // head
    auto& last_block = trace.up.empty() ? trace.bottleneck : trace.up.back().block;
    conv1x1_backward(g, last_block.r2, head_w_, head_b_);
    g = take_grad(last_block.r2);

    // expansive path, top stage first
    for (int k = static_cast<int>(trace.up.size()) - 1; k >= 0; --k) {
      auto& stage = trace.up[static_cast<std::size_t>(k)];
      const int level = config_.depth - 1 - k;
      block_backward(stage.block, up_blocks_[static_cast<std::size_t>(k)], g, trace.mode);
      // split the concat gradient between the skip tensor and the upconv output
      auto& skip = trace.down[static_cast<std::size_t>(level)].r2;
      Tensor<S> gcat = take_grad(stage.block.x);
      concat_channels_backward(gcat, skip, stage.up);
      Tensor<S> gup = take_grad(stage.up);
      auto& below = (k == 0) ? trace.bottleneck : trace.up[static_cast<std::size_t>(k - 1)].block;
      upconv2x2_backward(gup, below.r2, up_w_[static_cast<std::size_t>(k)],
                         up_b_[static_cast<std::size_t>(k)]);
      g = take_grad(below.r2); // includes any skip gradient accumulated earlier
    }

    // bottleneck
    block_backward(trace.bottleneck, bottleneck_, g, trace.mode);
    g = take_grad(trace.bottleneck.x);

    // contracting path, deepest level first
    for (int i = config_.depth - 1; i >= 0; --i) {
      auto& blk = trace.down[static_cast<std::size_t>(i)];
      maxpool2x2_backward(g, blk.r2);
      // blk.r2.grad now carries the pooled gradient plus any skip gradient
      // routed here while unwinding the expansive path
      Tensor<S> gr2 = take_grad(blk.r2);
      const bool need_input = (i > 0) || want_input_grad;
      block_backward(blk, down_[static_cast<std::size_t>(i)], gr2, trace.mode, need_input);
      if (i > 0)
        g = take_grad(blk.x);
      else if (want_input_grad)
        trace.input.ensure_grad() = blk.x.grad();
    }
  }

  void zero_grad() {
    for (auto& p : trainable_params()) p.tensor->zero_grad();
  }

  /// Trainable parameters (weights, biases, gammas, betas) in a stable order.
  std::vector<NamedParam<S>> trainable_params() { return collect(false); }

  /// Every named tensor including batch-norm running statistics; the
  /// checkpoint and weight-store order.
  std::vector<NamedParam<S>> named_tensors() { return collect(true); }

private:
  std::size_t stage_index(int level) const {
    return static_cast<std::size_t>(config_.depth - 1 - level);
  }

  static Tensor<S> take_grad(Tensor<S>& t) {
    Tensor<S> g = Tensor<S>::uninit(t.shape());
    g.values() = t.grad();
    t.drop_grad();
    return g;
  }

  Tensor<S> block_forward(detail::DoubleConv<S>& p, Tensor<S> x, Mode mode,
                          typename UNetTrace<S>::Block* tr) {
    Tensor<S> c1 = conv3x3(x, p.w1, p.b1);
    Tensor<S> n1 = batchnorm2d(c1, p.g1, p.be1, p.rm1, p.rv1, mode);
    Tensor<S> r1 = relu(n1);
    Tensor<S> c2 = conv3x3(r1, p.w2, p.b2);
    Tensor<S> n2 = batchnorm2d(c2, p.g2, p.be2, p.rm2, p.rv2, mode);
    Tensor<S> r2 = relu(n2);
    if (tr) {
      tr->x = std::move(x);
      tr->c1 = std::move(c1);
      tr->n1 = std::move(n1);
      tr->r1 = std::move(r1);
      tr->c2 = std::move(c2);
      tr->n2 = std::move(n2);
      tr->r2 = r2;
    }
    return r2;
  }

  /// Backward through one double-conv block; `g` is the gradient on the
  /// block output.
  void block_backward(typename UNetTrace<S>::Block& blk, detail::DoubleConv<S>& p,
                      const Tensor<S>& g, Mode mode, bool want_input_grad = true) {
    relu_backward(g, blk.n2);
    Tensor<S> gn2 = take_grad(blk.n2);
    batchnorm2d_backward(gn2, blk.c2, p.g2, p.be2, p.rm2, p.rv2, mode);
    Tensor<S> gc2 = take_grad(blk.c2);
    conv3x3_backward(gc2, blk.r1, p.w2, p.b2);
    Tensor<S> gr1 = take_grad(blk.r1);
    relu_backward(gr1, blk.n1);
    Tensor<S> gn1 = take_grad(blk.n1);
    batchnorm2d_backward(gn1, blk.c1, p.g1, p.be1, p.rm1, p.rv1, mode);
    Tensor<S> gc1 = take_grad(blk.c1);
    conv3x3_backward(gc1, blk.x, p.w1, p.b1, want_input_grad);
  }

  Tensor<S> run(const Tensor<S>& batch, Mode mode, UNetTrace<S>* trace) {
    if (batch.rank() != 4 || batch.extent(1) != config_.in_channels)
      fail(ErrorKind::Shape, "unet forward: expected batch of " +
                                 std::to_string(config_.in_channels) + " channels, got " +
                                 batch.shape_string());
    const int h = batch.extent(2), w = batch.extent(3);
    const int step = 1 << config_.depth;
    if (h % step != 0 || w % step != 0)
      fail(ErrorKind::Config, "unet forward: spatial extent " + batch.shape_string() +
                                  " not divisible by 2^depth = " + std::to_string(step));

    if (trace) {
      trace->down.resize(static_cast<std::size_t>(config_.depth));
      trace->up.resize(static_cast<std::size_t>(config_.depth));
      trace->input = batch;
    }

    std::vector<Tensor<S>> skips(static_cast<std::size_t>(config_.depth));
    Tensor<S> cur = batch;
    for (int i = 0; i < config_.depth; ++i) {
      auto* tb = trace ? &trace->down[static_cast<std::size_t>(i)] : nullptr;
      Tensor<S> out = block_forward(down_[static_cast<std::size_t>(i)], std::move(cur), mode, tb);
      cur = maxpool2x2(out);
      skips[static_cast<std::size_t>(i)] = std::move(out);
    }
    cur = block_forward(bottleneck_, std::move(cur), mode, trace ? &trace->bottleneck : nullptr);

    for (int i = config_.depth - 1; i >= 0; --i) {
      const std::size_t k = stage_index(i);
      Tensor<S> up = upconv2x2(cur, up_w_[k], up_b_[k]);
      Tensor<S> cat = concat_channels(skips[static_cast<std::size_t>(i)], up);
      if (trace) trace->up[k].up = std::move(up);
      cur = block_forward(up_blocks_[k], std::move(cat), mode, trace ? &trace->up[k].block : nullptr);
    }
    return conv1x1(cur, head_w_, head_b_);
  }

  std::vector<NamedParam<S>> collect(bool include_running) {
    std::vector<NamedParam<S>> out;
    auto add_block = [&](const std::string& prefix, detail::DoubleConv<S>& p) {
      out.push_back({prefix + ".conv1.weight", &p.w1});
      out.push_back({prefix + ".conv1.bias", &p.b1});
      out.push_back({prefix + ".bn1.gamma", &p.g1});
      out.push_back({prefix + ".bn1.beta", &p.be1});
      if (include_running) {
        out.push_back({prefix + ".bn1.run_mean", &p.rm1});
        out.push_back({prefix + ".bn1.run_var", &p.rv1});
      }
      out.push_back({prefix + ".conv2.weight", &p.w2});
      out.push_back({prefix + ".conv2.bias", &p.b2});
      out.push_back({prefix + ".bn2.gamma", &p.g2});
      out.push_back({prefix + ".bn2.beta", &p.be2});
      if (include_running) {
        out.push_back({prefix + ".bn2.run_mean", &p.rm2});
        out.push_back({prefix + ".bn2.run_var", &p.rv2});
      }
    };
    for (int i = 0; i < config_.depth; ++i)
      add_block("level" + std::to_string(i) + ".down", down_[static_cast<std::size_t>(i)]);
    add_block("level" + std::to_string(config_.depth) + ".bottleneck", bottleneck_);
    for (int i = config_.depth - 1; i >= 0; --i) {
      const std::size_t k = stage_index(i);
      const std::string prefix = "level" + std::to_string(i) + ".up";
      out.push_back({prefix + ".upconv.weight", &up_w_[k]});
      out.push_back({prefix + ".upconv.bias", &up_b_[k]});
      add_block(prefix, up_blocks_[k]);
    }
    out.push_back({"final.conv.weight", &head_w_});
    out.push_back({"final.conv.bias", &head_b_});
    return out;
  }

  UNetConfig config_;
  std::vector<detail::DoubleConv<S>> down_;
  detail::DoubleConv<S> bottleneck_;
  std::vector<Tensor<S>> up_w_, up_b_;           // transposed-conv parameters, bottom-up
  std::vector<detail::DoubleConv<S>> up_blocks_; // bottom-up
  Tensor<S> head_w_, head_b_;
};

// ---------------------------------------------------------------------------
// Checkpoints: magic "GLCK", version u16, config block (in, out, base, depth
// as u32), then each named tensor as (name length u16, name bytes, GLT1
// record).
// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kCheckpointVersion = 1;

template <typename S>
void save_checkpoint(UNet<S>& model, const std::string& path) {
  std::string out;
  out += "GLCK";
  detail::put_u16(out, kCheckpointVersion);
  const auto& c = model.config();
  detail::put_u32(out, static_cast<std::uint32_t>(c.in_channels));
  detail::put_u32(out, static_cast<std::uint32_t>(c.out_channels));
  detail::put_u32(out, static_cast<std::uint32_t>(c.base_features));
  detail::put_u32(out, static_cast<std::uint32_t>(c.depth));
  for (auto& p : model.named_tensors()) {
    detail::put_u16(out, static_cast<std::uint16_t>(p.name.size()));
    out += p.name;
    out += encode_glt(*p.tensor);
  }
  write_file_bytes(path, out);
}

template <typename S>
UNet<S> load_checkpoint(const std::string& path, const UNetConfig& config) {
  const std::string bytes = read_file_bytes(path);
  detail::ByteReader r(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
  char magic[4];
  if (!r.take(magic, 4) || std::memcmp(magic, "GLCK", 4) != 0)
    fail(ErrorKind::IoBadMagic, path + ": not a checkpoint file");
  std::uint16_t version = 0;
  if (!r.u16(version)) fail(ErrorKind::IoCorrupt, path + ": corrupt checkpoint (header)");
  if (version != kCheckpointVersion)
    fail(ErrorKind::IoVersion, path + ": unsupported checkpoint version " + std::to_string(version));
  std::uint32_t stored[4];
  for (auto& v : stored)
    if (!r.u32(v)) fail(ErrorKind::IoCorrupt, path + ": corrupt checkpoint (config block)");
  if (static_cast<int>(stored[0]) != config.in_channels ||
      static_cast<int>(stored[1]) != config.out_channels ||
      static_cast<int>(stored[2]) != config.base_features ||
      static_cast<int>(stored[3]) != config.depth)
    fail(ErrorKind::Shape, path + ": checkpoint was written for a different model shape");

  UNet<S> model(config);
  for (auto& p : model.named_tensors()) {
    std::uint16_t name_len = 0;
    if (!r.u16(name_len)) fail(ErrorKind::IoCorrupt, path + ": corrupt checkpoint (tensor name)");
    std::string name(name_len, '\0');
    if (!r.take(name.data(), name_len))
      fail(ErrorKind::IoCorrupt, path + ": corrupt checkpoint (tensor name)");
    if (name != p.name)
      fail(ErrorKind::IoCorrupt,
           path + ": checkpoint tensor order mismatch: expected '" + p.name + "', found '" +
               name + "'");
    // GLT1 records are self-delimiting given the shape in their header.
    const std::size_t header = 7 + 4 * p.tensor->shape().size();
    const std::size_t blob = header + 4 * static_cast<std::size_t>(p.tensor->size());
    if (r.remaining() < blob) fail(ErrorKind::IoCorrupt, path + ": corrupt checkpoint (truncated)");
    std::string record(blob, '\0');
    r.take(record.data(), blob);
    Tensor<S> t =
        decode_glt<S>(reinterpret_cast<const unsigned char*>(record.data()), blob, path);
    if (!t.same_shape(*p.tensor))
      fail(ErrorKind::Shape, path + ": checkpoint tensor '" + p.name + "' has shape " +
                                 t.shape_string() + ", expected " + p.tensor->shape_string());
    *p.tensor = std::move(t);
  }
  if (r.remaining() != 0) fail(ErrorKind::IoCorrupt, path + ": trailing bytes after checkpoint");
  return model;
}

} // namespace glymph
