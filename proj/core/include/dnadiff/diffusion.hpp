#pragma once

// Latent-space denoising diffusion: a variance-preserving noise schedule, the
// closed-form forward corruption, a noise-prediction UNet with time embeddings
// and self-attention, ancestral (DDPM) sampling, and the training loop for the
// noise-prediction objective.

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "dnadiff/checkpoint.hpp"
#include "dnadiff/conv.hpp"
#include "dnadiff/ops.hpp"
#include "dnadiff/optim.hpp"
#include "dnadiff/rng.hpp"
#include "dnadiff/runconfig.hpp"

namespace dnadiff {

// ---------------------------------------------------------------------------
// noise schedule
// ---------------------------------------------------------------------------

struct NoiseSchedule {
    int64_t T = 0;
    std::vector<double> betas;       // beta_1..beta_T at indices 0..T-1
    std::vector<double> alphas;      // 1 - beta_t
    std::vector<double> alpha_bars;  // prefix products of alpha

    double beta(int64_t t) const { return betas[check_step(t)]; }
    double alpha(int64_t t) const { return alphas[check_step(t)]; }
    double alpha_bar(int64_t t) const { return alpha_bars[check_step(t)]; }

    // Hard invariants: every beta strictly inside (0, 1), alpha_bar strictly
    // decreasing and positive.
    void validate() const;

    // True when the endpoint marginal is close enough to a pure standard
    // normal for sampling to start from N(0, I).  Holds for the default
    // 1000-step schedule; a deliberately short schedule may fail it.
    bool near_pure_noise(double threshold = 1e-3) const {
        return !alpha_bars.empty() && alpha_bars.back() < threshold;
    }

private:
    size_t check_step(int64_t t) const;
};

enum class ScheduleKind { Linear, Cosine };

// Linear: beta interpolates beta_start..beta_end over T steps.  Cosine: the
// squared-cosine alpha_bar profile with offset 0.008, betas clipped to 0.999
// (beta_start/beta_end are ignored for this kind).
NoiseSchedule build_schedule(int64_t T = 1000, ScheduleKind kind = ScheduleKind::Linear,
                             double beta_start = 1e-4, double beta_end = 0.02);

struct ScheduleSpec {
    int64_t T = 1000;
    ScheduleKind kind = ScheduleKind::Linear;
    double beta_start = 1e-4;
    double beta_end = 0.02;
};

NoiseSchedule build_schedule(const ScheduleSpec& spec);
ScheduleSpec schedule_spec_from(const RunConfig& rc, ScheduleSpec defaults = ScheduleSpec());
std::string schedule_spec_text(const ScheduleSpec& spec);

// ---------------------------------------------------------------------------
// forward process and the noise/score correspondence
// ---------------------------------------------------------------------------

// z_t = sqrt(alpha_bar_t) * z0 + sqrt(1 - alpha_bar_t) * eps
template <typename S>
nn::Tensor<S> forward_diffuse(const nn::Tensor<S>& z0, int64_t t, const NoiseSchedule& sched,
                              const nn::Tensor<S>& eps) {
    nn::require_same_shape(z0, eps, "forward_diffuse");
    const double ab = sched.alpha_bar(t);
    const double keep = std::sqrt(ab), mix = std::sqrt(1.0 - ab);
    nn::Tensor<S> out(z0.shape);
    for (int64_t i = 0; i < z0.numel(); ++i)
        out[i] = static_cast<S>(keep * z0[i] + mix * eps[i]);
    return out;
}

// Convenience overload drawing eps ~ N(0, I); the draw is exposed through
// eps_out so callers can form prediction targets.
template <typename S>
nn::Tensor<S> forward_diffuse(const nn::Tensor<S>& z0, int64_t t, const NoiseSchedule& sched,
                              RngStream& rng, nn::Tensor<S>* eps_out = nullptr) {
    nn::Tensor<S> eps(z0.shape);
    for (int64_t i = 0; i < eps.numel(); ++i) eps[i] = static_cast<S>(rng.normal());
    nn::Tensor<S> out = forward_diffuse(z0, t, sched, eps);
    if (eps_out != nullptr) *eps_out = std::move(eps);
    return out;
}

// Score estimate from a noise estimate: S(z_t, t) = -eps / sqrt(1 - alpha_bar_t).
template <typename S>
nn::Tensor<S> score_from_noise(const nn::Tensor<S>& eps_estimate, int64_t t, const NoiseSchedule& sched) {
    const double scale = -1.0 / std::sqrt(1.0 - sched.alpha_bar(t));
    nn::Tensor<S> out(eps_estimate.shape);
    for (int64_t i = 0; i < eps_estimate.numel(); ++i)
        out[i] = static_cast<S>(scale * eps_estimate[i]);
    return out;
}

// Batched noise predictor: (z_t [B, ...], per-element step t) -> eps estimate.
using NoisePredictor =
    std::function<nn::Tensor<float>(const nn::Tensor<float>&, const std::vector<int64_t>&)>;

// Draws t ~ U[1, T] and eps ~ N(0, I) per batch row, corrupts z0, queries the
// predictor once, and returns mean_b ||eps_b - eps_hat_b||^2.
double noise_prediction_loss(const nn::Tensor<float>& z0, const NoisePredictor& predictor,
                             const NoiseSchedule& sched, uint64_t seed);

// ---------------------------------------------------------------------------
// latent standardization
// ---------------------------------------------------------------------------

struct LatentStats {
    std::vector<double> mean;    // per channel
    std::vector<double> stddev;  // per channel, strictly positive
    int64_t count = 0;

    void validate() const;
};

// Per-channel moments of an encoded latent set [N, C, H, W]; stddev is floored
// to keep standardization finite on degenerate channels.
LatentStats fit_latent_stats(const nn::Tensor<float>& latents, double stddev_floor = 1e-6);

nn::Tensor<float> standardize(const nn::Tensor<float>& latents, const LatentStats& stats);
nn::Tensor<float> destandardize(const nn::Tensor<float>& latents, const LatentStats& stats);

StateDict latent_stats_state(const LatentStats& stats);
LatentStats latent_stats_from_state(const StateDict& sd);

// ---------------------------------------------------------------------------
// noise-prediction UNet
// ---------------------------------------------------------------------------

struct UnetConfig {
    int64_t channels = 16;  // input == output channels
    int64_t height = 16;
    int64_t width = 16;
    std::vector<int64_t> ladder = {256, 256, 512, 512};
    int64_t resnets_per_stage = 8;
    std::vector<int64_t> attn_down = {2};  // down-stage indices with self-attention
    std::vector<int64_t> attn_up = {1};    // up-block indices (execution order) with self-attention
    int64_t heads = 8;
    int64_t head_dim = 64;
    int64_t norm_groups = 8;
    int64_t time_dim = 0;  // 0 = 4 * ladder front

    int64_t effective_time_dim() const { return time_dim > 0 ? time_dim : 4 * ladder.front(); }

    void validate() const;

    // Reduced preset: 4x8x8 latents, ladder {32, 64}, 2 resnets per stage,
    // attention on the deepest down stage and the first up block.
    static UnetConfig desk();
};

UnetConfig unet_config_from(const RunConfig& rc, UnetConfig defaults = UnetConfig());
std::string unet_config_text(const UnetConfig& cfg);

class UnetModel {
public:
    UnetConfig cfg;

    UnetModel(const UnetConfig& config, uint64_t init_seed);

    // z_t: [B, C, H, W], t: one (1-based) step per batch row -> noise estimate
    // of the same shape.
    nn::Var<float> forward(const nn::Tensor<float>& z_t, const std::vector<int64_t>& t, bool train);

    std::vector<nn::Parameter<float>*> parameters();
    int64_t parameter_count() const;
    StateDict state() const;
    void load_state(const StateDict& sd);

private:
    struct Resnet {
        nn::Parameter<float>*gn1_scale, *gn1_shift, *conv1_w, *conv1_b;
        nn::Parameter<float>*time_w, *time_b;
        nn::Parameter<float>*gn2_scale, *gn2_shift, *conv2_w, *conv2_b;
        nn::Parameter<float>*skip_w, *skip_b;  // 1x1 projection when in != out, else null
        int64_t in_c, out_c;
    };
    struct Attention {
        nn::Parameter<float>*gn_scale, *gn_shift, *wq, *wk, *wv, *wo;
    };
    struct Conv {
        nn::Parameter<float>*w, *b;
    };
    struct Stage {
        std::vector<Resnet> resnets;
        bool has_attn = false;
        Attention attn;
        bool has_resample = false;
        Conv resample;  // stride-2 conv down, post-upsample conv up
    };

    std::deque<nn::Parameter<float>> params_;
    Conv stem_;
    std::vector<Stage> down_;
    Resnet mid0_, mid1_;
    std::vector<Stage> up_;
    nn::Parameter<float>*head_gn_scale_, *head_gn_shift_, *head_w_, *head_b_;
    Conv time_mlp1_, time_mlp2_;

    nn::Parameter<float>* add_param(const std::string& name, nn::Tensor<float> t);
    nn::Parameter<float>* add_kaiming(const std::string& name, nn::Shape shape, int64_t fan_in,
                                      RngStream& rng);
    nn::Parameter<float>* add_zeros(const std::string& name, nn::Shape shape);
    nn::Parameter<float>* add_ones(const std::string& name, int64_t n);
    Resnet make_resnet(const std::string& prefix, int64_t in_c, int64_t out_c, RngStream& rng);
    Attention make_attention(const std::string& prefix, int64_t channels, RngStream& rng);
    nn::Var<float> run_resnet(const Resnet& r, nn::Var<float> h, const nn::Var<float>& temb) const;
    nn::Var<float> run_attention(const Attention& a, nn::Var<float> h) const;
    nn::Var<float> time_embedding(const std::vector<int64_t>& t) const;
};

// Eval-mode adapter so a trained model can stand in wherever a NoisePredictor
// is expected (sampling, loss probes).
NoisePredictor unet_noise_predictor(UnetModel& model);

// ---------------------------------------------------------------------------
// sampling
// ---------------------------------------------------------------------------

// Ancestral DDPM sampling from z_T ~ N(0, I):
//   z_{t-1} = (z_t - beta_t / sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_t)
//             + sqrt(beta_t) * xi,   xi = 0 at the final step.
// latent_shape is {C, H, W}; the result is [count, C, H, W], de-standardized
// with `stats` when given.  count = 0 returns an empty tensor.
// Chains are advanced in slabs of chain_batch to bound predictor batch size.
nn::Tensor<float> ddpm_sample(const NoisePredictor& predictor, const NoiseSchedule& sched,
                              int64_t count, const nn::Shape& latent_shape, uint64_t seed,
                              const LatentStats* stats = nullptr, int64_t chain_batch = 256);

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

struct DiffusionTrainOptions {
    int64_t epochs = 50;
    double learning_rate = 5e-5;
    int64_t batch_size = 256;
    int64_t warmup_epochs = 5;  // linear warmup, then cosine decay
    uint64_t seed = 1;
    std::string checkpoint_path;  // best-loss checkpoint; empty = skip
    std::string log_csv_path;     // per-epoch CSV (epoch, loss, lr); empty = skip
    int64_t stamp_every = 0;
    std::string stamp_dir;
    bool verbose = false;
};

struct DiffusionEpochStats {
    int64_t epoch = 0;
    double loss = 0;
    double lr = 0;
};

struct DiffusionTrainReport {
    std::vector<DiffusionEpochStats> epochs;
    int64_t best_epoch = -1;
    double best_loss = 0;
    std::string checkpoint_path;
};

// Adam with warmup+cosine learning rate on the noise-prediction objective over
// a standardized latent set [N, C, H, W].  Deterministic under a fixed seed;
// non-finite losses abort.
DiffusionTrainReport train_diffusion(UnetModel& model, const nn::Tensor<float>& latents,
                                     const NoiseSchedule& sched, const DiffusionTrainOptions& opt);

}  // namespace dnadiff
