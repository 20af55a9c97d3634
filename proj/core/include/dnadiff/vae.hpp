#pragma once

// Sequence autoencoder: a multi-kernel 1-D conv/pool encoder that folds one-hot
// DNA into a 2-D surface, a strided 2-D conv stage producing a diagonal-Gaussian
// posterior over a C x H x W latent, and a mirrored decoder emitting per-position
// base distributions.  Trained with cross-entropy reconstruction plus a weighted
// KL term against a standard-normal prior.

#include <cmath>
#include <deque>
#include <string>
#include <vector>

#include "dnadiff/checkpoint.hpp"
#include "dnadiff/conv.hpp"
#include "dnadiff/datapipe.hpp"
#include "dnadiff/ops.hpp"
#include "dnadiff/optim.hpp"
#include "dnadiff/rng.hpp"
#include "dnadiff/runconfig.hpp"
#include "dnadiff/seqcodec.hpp"

namespace dnadiff {

struct VaeConfig {
    int64_t sequence_length = 2048;
    std::vector<int64_t> kernel_sizes = {1, 3, 5};
    // Output channels of each 1-D stage; every stage ends with a length-halving
    // maxpool, so the final stage's channel count is the height of the 2-D
    // surface and sequence_length >> ladder.size() is its width.
    std::vector<int64_t> ladder = {64, 64, 128, 128};
    // Output channels of each stride-2 3x3 conv in the 2-D stage; the last
    // entry holds the mean/logvar stack, so it must equal 2 * latent_channels.
    std::vector<int64_t> conv2d_channels = {32, 32, 32};
    int64_t latent_channels = 16;
    int64_t latent_height = 16;
    int64_t latent_width = 16;
    double kl_weight = 1e-4;
    double learning_rate = 1e-4;
    int64_t batch_size = 128;
    double logvar_min = -30.0;
    double logvar_max = 20.0;
    // Reconstruction summed over positions (true) or averaged (false); the sum
    // keeps kl_weight on the same relative scale as the reference setting.
    bool sum_reconstruction = true;
    // Plain autoencoder mode: decode the posterior mean and drop the KL term.
    // Used to train the reference embedder for distribution distances.
    bool autoencoder_mode = false;

    int64_t surface_height() const { return ladder.empty() ? 0 : ladder.back(); }
    int64_t surface_width() const {
        return sequence_length >> static_cast<int64_t>(ladder.size());
    }
    int64_t latent_numel() const { return latent_channels * latent_height * latent_width; }

    // Throws ShapeError/ValueError when the stage arithmetic cannot produce the
    // declared latent shape.
    void validate() const;

    // Reduced preset: length 256, ladder {32, 64}, latent 4x8x8.  Small enough
    // to train in minutes on one core.
    static VaeConfig desk();
};

// Reads "vae.*" keys, falling back to the given defaults for absent keys.
VaeConfig vae_config_from(const RunConfig& rc, VaeConfig defaults = VaeConfig());

// Serializes a config as "vae.*" key=value lines (checkpoint sidecar).
std::string vae_config_text(const VaeConfig& cfg);

// Near-equal partition of `total` into `parts` bins; earlier bins take the
// remainder.  Equal whenever parts divides total.
std::vector<int64_t> split_channels(int64_t total, int64_t parts);

template <typename S>
struct Posterior {
    nn::Var<S> mean;
    nn::Var<S> logvar;
};

template <typename S>
struct ElboParts {
    nn::Var<S> total;
    nn::Var<S> recon;
    nn::Var<S> kl;
    nn::Var<S> probs;  // decoded distributions, handy for accuracy bookkeeping
};

// Sum over every element of 0.5 * (exp(logvar) + mean^2 - 1 - logvar): the KL
// divergence from N(mean, diag exp(logvar)) to the standard normal.
template <typename S>
nn::Var<S> gaussian_kl(const nn::Var<S>& mean, const nn::Var<S>& logvar) {
    using namespace nn;
    Var<S> term = add(exp(logvar), mul(mean, mean));
    term = sub(add_scalar(term, S(-1)), logvar);
    return mul_scalar(sum(term), S(0.5));
}

// Assembles (total, recon, kl) from decoded distributions and the posterior.
// recon is cross-entropy per sequence (summed or averaged over positions per
// `sum_reconstruction`), kl is per sequence, total = recon + kl_weight * kl.
template <typename S>
ElboParts<S> elbo_loss(const nn::Var<S>& probs, const nn::Tensor<S>& x, const Posterior<S>& post,
                       double kl_weight, bool sum_reconstruction, bool drop_kl = false) {
    using namespace nn;
    const int64_t batch = x.dim(0);
    ElboParts<S> parts;
    parts.recon = cross_entropy(probs, x, sum_reconstruction ? Reduction::Sum : Reduction::Mean);
    parts.kl = mul_scalar(gaussian_kl(post.mean, post.logvar), S(1) / S(batch));
    parts.total = drop_kl ? parts.recon : add(parts.recon, mul_scalar(parts.kl, S(kl_weight)));
    parts.probs = probs;
    return parts;
}

namespace detail {

// BN -> LeakyReLU -> parallel same-padded convs (one per kernel size) -> concat.
template <typename S>
struct MultiKernelBlock {
    nn::Parameter<S>* bn_scale = nullptr;
    nn::Parameter<S>* bn_shift = nullptr;
    nn::BatchNormState<S>* bn_state = nullptr;
    std::vector<int64_t> ksizes;
    std::vector<nn::Parameter<S>*> w;
    std::vector<nn::Parameter<S>*> b;

    nn::Var<S> forward(const nn::Var<S>& x, bool train) const {
        using namespace nn;
        Var<S> h = batchnorm(x, bn_scale->var, bn_shift->var, *bn_state, train);
        h = leaky_relu(h);
        std::vector<Var<S>> branches;
        branches.reserve(ksizes.size());
        for (size_t i = 0; i < ksizes.size(); ++i) {
            Var<S> c = conv1d(h, w[i]->var, 1, (ksizes[i] - 1) / 2);
            branches.push_back(add_channel_bias(c, b[i]->var));
        }
        return branches.size() == 1 ? branches[0] : cat_channels(branches);
    }
};

// One 2-D conv (or transposed conv) with optional BN + LeakyReLU afterwards.
template <typename S>
struct ConvNorm2d {
    nn::Parameter<S>* w = nullptr;
    nn::Parameter<S>* b = nullptr;
    nn::Parameter<S>* bn_scale = nullptr;
    nn::Parameter<S>* bn_shift = nullptr;
    nn::BatchNormState<S>* bn_state = nullptr;
    bool transposed = false;

    nn::Var<S> forward(const nn::Var<S>& x, bool train) const {
        using namespace nn;
        Var<S> h = transposed ? transposed_conv2d(x, w->var, 2) : conv2d(x, w->var, 2, 1);
        h = add_channel_bias(h, b->var);
        if (bn_state != nullptr) {
            h = batchnorm(h, bn_scale->var, bn_shift->var, *bn_state, train);
            h = leaky_relu(h);
        }
        return h;
    }
};

}  // namespace detail

template <typename S>
class VaeModel {
public:
    VaeConfig cfg;

    VaeModel(const VaeConfig& config, uint64_t init_seed) : cfg(config) {
        cfg.validate();
        RngStream rng(init_seed);
        build(rng);
    }

    // x: [B, 4, L] one-hot batch -> posterior mean/logvar, each [B, C, H, W].
    Posterior<S> encode(const nn::Tensor<S>& x, bool train) {
        using namespace nn;
        check_input(x);
        Var<S> h = constant(x);
        for (const auto& block : enc_blocks_) {
            h = block.forward(h, train);
            h = maxpool1d(h, 2);
        }
        const int64_t B = x.dim(0);
        h = reshape(h, {B, 1, cfg.surface_height(), cfg.surface_width()});
        for (const auto& layer : enc2d_) h = layer.forward(h, train);
        Posterior<S> post;
        post.mean = slice_channels(h, 0, cfg.latent_channels);
        post.logvar = clamp(slice_channels(h, cfg.latent_channels, 2 * cfg.latent_channels),
                            S(cfg.logvar_min), S(cfg.logvar_max));
        return post;
    }

    // z = mean + exp(0.5 * logvar) * eps with eps ~ N(0, I) from the stream.
    // In autoencoder mode the posterior mean is returned unchanged.
    nn::Var<S> reparameterize(const Posterior<S>& post, RngStream& rng) {
        using namespace nn;
        if (cfg.autoencoder_mode) return post.mean;
        nn::Tensor<S> eps(post.mean->value.shape);
        for (int64_t i = 0; i < eps.numel(); ++i) eps[i] = static_cast<S>(rng.normal());
        Var<S> sigma = exp(mul_scalar(post.logvar, S(0.5)));
        return add(post.mean, mul(sigma, constant(std::move(eps))));
    }

    // z: [B, C, H, W] -> per-position distributions [B, 4, L]; every column is
    // a softmax over the four bases.
    nn::Var<S> decode(const nn::Var<S>& z, bool train) {
        using namespace nn;
        const nn::Tensor<S>& zv = z->value;
        if (zv.rank() != 4 || zv.dim(1) != cfg.latent_channels || zv.dim(2) != cfg.latent_height ||
            zv.dim(3) != cfg.latent_width)
            throw ShapeError("decode: latent shape " + nn::shape_str(zv.shape) + " does not match config " +
                             std::to_string(cfg.latent_channels) + "x" + std::to_string(cfg.latent_height) +
                             "x" + std::to_string(cfg.latent_width));
        Var<S> h = z;
        for (const auto& layer : dec2d_) h = layer.forward(h, train);
        const int64_t B = zv.dim(0);
        h = reshape(h, {B, cfg.surface_height(), cfg.surface_width()});
        for (const auto& block : dec_blocks_) {
            h = upsample_nearest(h, 2);
            h = block.forward(h, train);
        }
        h = conv1d(h, head_w_->var, 1, 0);
        h = add_channel_bias(h, head_b_->var);
        return softmax_channels(h);
    }

    nn::Var<S> decode(const nn::Tensor<S>& z, bool train) { return decode(nn::constant(z), train); }

    // encode -> reparameterize -> decode -> loss, one graph.
    ElboParts<S> elbo(const nn::Tensor<S>& x, RngStream& rng, bool train) {
        Posterior<S> post = encode(x, train);
        nn::Var<S> z = reparameterize(post, rng);
        nn::Var<S> probs = decode(z, train);
        return elbo_loss(probs, x, post, cfg.kl_weight, cfg.sum_reconstruction, cfg.autoencoder_mode);
    }

    // Deterministic evaluation pass: decode the posterior mean.
    ElboParts<S> elbo_mean(const nn::Tensor<S>& x, bool train) {
        Posterior<S> post = encode(x, train);
        nn::Var<S> probs = decode(post.mean, train);
        return elbo_loss(probs, x, post, cfg.kl_weight, cfg.sum_reconstruction, cfg.autoencoder_mode);
    }

    std::vector<nn::Parameter<S>*> parameters() {
        std::vector<nn::Parameter<S>*> out;
        out.reserve(params_.size());
        for (auto& p : params_) out.push_back(&p);
        return out;
    }

    int64_t parameter_count() const {
        int64_t n = 0;
        for (const auto& p : params_) n += p.var->value.numel();
        return n;
    }

    // Parameters plus batchnorm running statistics, keyed by layer path.
    StateDict state() const {
        StateDict sd;
        for (const auto& p : params_) sd.put(p.name, to_float(p.var->value));
        for (const auto& [name, st] : bn_named_) {
            sd.put(name + ".running_mean", to_float(st->running_mean));
            sd.put(name + ".running_var", to_float(st->running_var));
        }
        return sd;
    }

    void load_state(const StateDict& sd) {
        for (auto& p : params_) assign_from(p.var->value, sd, p.name);
        for (auto& [name, st] : bn_named_) {
            assign_from(st->running_mean, sd, name + ".running_mean");
            assign_from(st->running_var, sd, name + ".running_var");
        }
    }

private:
    std::deque<nn::Parameter<S>> params_;
    std::deque<nn::BatchNormState<S>> bn_store_;
    std::vector<std::pair<std::string, nn::BatchNormState<S>*>> bn_named_;
    std::vector<detail::MultiKernelBlock<S>> enc_blocks_;
    std::vector<detail::ConvNorm2d<S>> enc2d_;
    std::vector<detail::ConvNorm2d<S>> dec2d_;
    std::vector<detail::MultiKernelBlock<S>> dec_blocks_;
    nn::Parameter<S>* head_w_ = nullptr;
    nn::Parameter<S>* head_b_ = nullptr;

    void check_input(const nn::Tensor<S>& x) const {
        if (x.rank() != 3 || x.dim(1) != 4 || x.dim(2) != cfg.sequence_length)
            throw ShapeError("encode: input shape " + nn::shape_str(x.shape) + " does not match [B, 4, " +
                             std::to_string(cfg.sequence_length) + "]");
    }

    static nn::Tensor<float> to_float(const nn::Tensor<S>& t) {
        nn::Tensor<float> out(t.shape);
        for (int64_t i = 0; i < t.numel(); ++i) out[i] = static_cast<float>(t[i]);
        return out;
    }

    static void assign_from(nn::Tensor<S>& dst, const StateDict& sd, const std::string& name) {
        const nn::Tensor<float>& src = sd.get(name);
        if (src.shape != dst.shape)
            throw ShapeError("state record " + name + ": shape " + nn::shape_str(src.shape) +
                             " does not match model shape " + nn::shape_str(dst.shape));
        for (int64_t i = 0; i < dst.numel(); ++i) dst[i] = static_cast<S>(src[i]);
    }

    nn::Parameter<S>* add_param(const std::string& name, nn::Tensor<S> t) {
        params_.emplace_back(name, std::move(t));
        return &params_.back();
    }

    nn::Parameter<S>* add_kaiming(const std::string& name, nn::Shape shape, int64_t fan_in, RngStream& rng) {
        nn::Tensor<S> t(shape);
        nn::kaiming_uniform(t, fan_in, rng);
        return add_param(name, std::move(t));
    }

    nn::Parameter<S>* add_zeros(const std::string& name, nn::Shape shape) {
        return add_param(name, nn::Tensor<S>(shape));
    }

    nn::BatchNormState<S>* add_bn(const std::string& name, int64_t channels) {
        bn_store_.emplace_back(channels);
        bn_named_.emplace_back(name, &bn_store_.back());
        return &bn_store_.back();
    }

    detail::MultiKernelBlock<S> make_block(const std::string& prefix, int64_t in_c, int64_t out_c,
                                           RngStream& rng) {
        detail::MultiKernelBlock<S> blk;
        blk.ksizes = cfg.kernel_sizes;
        nn::Tensor<S> ones({in_c});
        for (int64_t i = 0; i < in_c; ++i) ones[i] = S(1);
        blk.bn_scale = add_param(prefix + ".bn.scale", std::move(ones));
        blk.bn_shift = add_zeros(prefix + ".bn.shift", {in_c});
        blk.bn_state = add_bn(prefix + ".bn", in_c);
        std::vector<int64_t> outs = split_channels(out_c, static_cast<int64_t>(blk.ksizes.size()));
        for (size_t i = 0; i < blk.ksizes.size(); ++i) {
            const int64_t k = blk.ksizes[i];
            const std::string stem = prefix + ".k" + std::to_string(k);
            blk.w.push_back(add_kaiming(stem + ".w", {outs[i], in_c, k}, in_c * k, rng));
            blk.b.push_back(add_zeros(stem + ".b", {outs[i]}));
        }
        return blk;
    }

    detail::ConvNorm2d<S> make_conv2d(const std::string& prefix, int64_t in_c, int64_t out_c,
                                      bool transposed, bool with_norm, RngStream& rng) {
        detail::ConvNorm2d<S> layer;
        layer.transposed = transposed;
        if (transposed)
            layer.w = add_kaiming(prefix + ".w", {in_c, out_c, 2, 2}, in_c * 4, rng);
        else
            layer.w = add_kaiming(prefix + ".w", {out_c, in_c, 3, 3}, in_c * 9, rng);
        layer.b = add_zeros(prefix + ".b", {out_c});
        if (with_norm) {
            nn::Tensor<S> ones({out_c});
            for (int64_t i = 0; i < out_c; ++i) ones[i] = S(1);
            layer.bn_scale = add_param(prefix + ".bn.scale", std::move(ones));
            layer.bn_shift = add_zeros(prefix + ".bn.shift", {out_c});
            layer.bn_state = add_bn(prefix + ".bn", out_c);
        }
        return layer;
    }

    void build(RngStream& rng) {
        const int64_t stages = static_cast<int64_t>(cfg.ladder.size());
        int64_t in_c = 4;
        for (int64_t i = 0; i < stages; ++i) {
            enc_blocks_.push_back(
                make_block("enc.stage" + std::to_string(i), in_c, cfg.ladder[i], rng));
            in_c = cfg.ladder[i];
        }
        const int64_t n2 = static_cast<int64_t>(cfg.conv2d_channels.size());
        in_c = 1;
        for (int64_t j = 0; j < n2; ++j) {
            enc2d_.push_back(make_conv2d("enc.conv2d" + std::to_string(j), in_c, cfg.conv2d_channels[j],
                                         false, j + 1 < n2, rng));
            in_c = cfg.conv2d_channels[j];
        }
        in_c = cfg.latent_channels;
        for (int64_t j = 0; j < n2; ++j) {
            const int64_t out_c = (j + 1 < n2) ? cfg.conv2d_channels[n2 - 2 - j] : 1;
            dec2d_.push_back(make_conv2d("dec.tconv" + std::to_string(j), in_c, out_c, true,
                                         j + 1 < n2, rng));
            in_c = out_c;
        }
        in_c = cfg.surface_height();
        for (int64_t i = stages - 1; i >= 0; --i) {
            const int64_t out_c = (i == 0) ? cfg.ladder[0] : cfg.ladder[i - 1];
            dec_blocks_.push_back(
                make_block("dec.stage" + std::to_string(i), in_c, out_c, rng));
            in_c = out_c;
        }
        head_w_ = add_zeros("dec.head.w", {4, in_c, 1});
        head_b_ = add_zeros("dec.head.b", {4});
    }
};

using VaeModelF = VaeModel<float>;

struct VaeTrainOptions {
    int64_t epochs = 20;
    uint64_t seed = 1;
    std::string checkpoint_path;  // best-validation checkpoint; empty = skip
    std::string log_csv_path;     // per-epoch CSV (epoch, split, total, recon, kl); empty = skip
    int64_t stamp_every = 0;      // also write <stamp_dir>/vae_epoch<N>.ddkp every N epochs
    std::string stamp_dir;
    double stop_at_val_accuracy = 0;  // early exit once validation accuracy reaches this (0 = off)
    int64_t warmup_epochs = 0;        // linear ramp to the configured rate
    bool cosine_decay = false;        // after warmup, cosine decay to zero at the last epoch
    bool verbose = false;
};

struct VaeEpochStats {
    int64_t epoch = 0;
    double train_total = 0, train_recon = 0, train_kl = 0;
    double val_total = 0, val_recon = 0, val_kl = 0;
    double val_accuracy = 0;
};

struct VaeTrainReport {
    std::vector<VaeEpochStats> epochs;
    int64_t best_epoch = -1;
    double best_val_total = 0;
    double final_val_accuracy = 0;
    std::string checkpoint_path;
};

// Adam training of the ELBO on the table's training split, with deterministic
// per-epoch shuffling, eval-mode validation on the posterior mean, best-val
// checkpointing, and divergence detection (non-finite loss aborts).
VaeTrainReport train_vae(VaeModelF& model, const DatasetTable& table, const VaeTrainOptions& opt);

// Eval-mode posterior means for a sequence corpus, [N, C, H, W].
nn::Tensor<float> encode_means(VaeModelF& model, const std::vector<std::string>& sequences,
                           int64_t batch_size = 64);

// Eval-mode argmax decode of a latent batch [N, C, H, W] to base strings.
std::vector<std::string> decode_to_sequences(VaeModelF& model, const nn::Tensor<float>& latents,
                                             int64_t batch_size = 64);

// Fraction of positions where argmax-decoded reconstructions match, over a corpus.
double reconstruction_accuracy(VaeModelF& model, const std::vector<std::string>& sequences,
                               int64_t batch_size = 64);

}  // namespace dnadiff
