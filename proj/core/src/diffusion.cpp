#include "dnadiff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>

namespace dnadiff {

namespace fs = std::filesystem;
using nn::Shape;
using nn::Tensor;
using nn::Var;

// ---------------------------------------------------------------------------
// noise schedule
// ---------------------------------------------------------------------------

size_t NoiseSchedule::check_step(int64_t t) const {
    if (t < 1 || t > T)
        throw ValueError("schedule step " + std::to_string(t) + " outside 1.." + std::to_string(T));
    return static_cast<size_t>(t - 1);
}

void NoiseSchedule::validate() const {
    if (T < 1 || static_cast<int64_t>(betas.size()) != T || static_cast<int64_t>(alphas.size()) != T ||
        static_cast<int64_t>(alpha_bars.size()) != T)
        throw ShapeError("noise schedule: array lengths do not match T = " + std::to_string(T));
    double prev_bar = 1.0;
    for (int64_t i = 0; i < T; ++i) {
        const double b = betas[static_cast<size_t>(i)];
        if (!(b > 0.0) || !(b < 1.0))
            throw ValueError("noise schedule: beta_" + std::to_string(i + 1) + " = " + std::to_string(b) +
                             " outside (0, 1)");
        const double a = alphas[static_cast<size_t>(i)];
        if (std::abs(a - (1.0 - b)) > 1e-12)
            throw ValueError("noise schedule: alpha_" + std::to_string(i + 1) + " != 1 - beta");
        const double bar = alpha_bars[static_cast<size_t>(i)];
        if (!(bar > 0.0) || !(bar < prev_bar))
            throw ValueError("noise schedule: alpha_bar must decrease strictly and stay positive");
        prev_bar = bar;
    }
}

NoiseSchedule build_schedule(int64_t T, ScheduleKind kind, double beta_start, double beta_end) {
    if (T < 1) throw ValueError("build_schedule: T must be at least 1");
    NoiseSchedule s;
    s.T = T;
    s.betas.resize(static_cast<size_t>(T));
    if (kind == ScheduleKind::Linear) {
        if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
            throw ValueError("build_schedule: need 0 < beta_start <= beta_end < 1");
        for (int64_t t = 0; t < T; ++t)
            s.betas[static_cast<size_t>(t)] =
                T == 1 ? beta_start
                       : beta_start + (beta_end - beta_start) * static_cast<double>(t) /
                                          static_cast<double>(T - 1);
    } else {
        const double offset = 0.008;
        auto f = [&](double u) {
            const double v = std::cos((u + offset) / (1.0 + offset) * (3.14159265358979323846 / 2.0));
            return v * v;
        };
        double prev = 1.0;
        for (int64_t t = 1; t <= T; ++t) {
            const double bar = f(static_cast<double>(t) / static_cast<double>(T)) / f(0.0);
            double beta = 1.0 - bar / prev;
            beta = std::min(std::max(beta, 1e-8), 0.999);
            s.betas[static_cast<size_t>(t - 1)] = beta;
            prev *= 1.0 - beta;
        }
    }
    s.alphas.resize(static_cast<size_t>(T));
    s.alpha_bars.resize(static_cast<size_t>(T));
    double bar = 1.0;
    for (int64_t t = 0; t < T; ++t) {
        s.alphas[static_cast<size_t>(t)] = 1.0 - s.betas[static_cast<size_t>(t)];
        bar *= s.alphas[static_cast<size_t>(t)];
        s.alpha_bars[static_cast<size_t>(t)] = bar;
    }
    s.validate();
    return s;
}

NoiseSchedule build_schedule(const ScheduleSpec& spec) {
    return build_schedule(spec.T, spec.kind, spec.beta_start, spec.beta_end);
}

ScheduleSpec schedule_spec_from(const RunConfig& rc, ScheduleSpec defaults) {
    ScheduleSpec spec = defaults;
    spec.T = rc.get_i64("diff.steps", spec.T);
    spec.beta_start = rc.get_f64("diff.beta_start", spec.beta_start);
    spec.beta_end = rc.get_f64("diff.beta_end", spec.beta_end);
    const std::string kind =
        rc.get_str("diff.kind", defaults.kind == ScheduleKind::Cosine ? "cosine" : "linear");
    if (kind == "linear")
        spec.kind = ScheduleKind::Linear;
    else if (kind == "cosine")
        spec.kind = ScheduleKind::Cosine;
    else
        throw ParseError("config key 'diff.kind': expected linear or cosine, got '" + kind + "'");
    return spec;
}

std::string schedule_spec_text(const ScheduleSpec& spec) {
    std::ostringstream os;
    os << "diff.steps=" << spec.T << "\n";
    os << "diff.kind=" << (spec.kind == ScheduleKind::Cosine ? "cosine" : "linear") << "\n";
    os << std::setprecision(17);
    os << "diff.beta_start=" << spec.beta_start << "\n";
    os << "diff.beta_end=" << spec.beta_end << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// noise-prediction loss (predictor form)
// ---------------------------------------------------------------------------

double noise_prediction_loss(const Tensor<float>& z0, const NoisePredictor& predictor,
                             const NoiseSchedule& sched, uint64_t seed) {
    if (z0.rank() < 2) throw ShapeError("noise_prediction_loss: z0 must have a leading batch axis");
    const int64_t B = z0.dim(0);
    const int64_t inner = z0.numel() / B;
    RngStream rng(seed);
    Tensor<float> eps(z0.shape), zt(z0.shape);
    std::vector<int64_t> tv(static_cast<size_t>(B));
    for (int64_t b = 0; b < B; ++b) {
        const int64_t t = rng.uniform_int(1, sched.T);
        tv[static_cast<size_t>(b)] = t;
        const double ab = sched.alpha_bar(t);
        const double keep = std::sqrt(ab), mix = std::sqrt(1.0 - ab);
        for (int64_t i = b * inner; i < (b + 1) * inner; ++i) {
            const double e = rng.normal();
            eps[i] = static_cast<float>(e);
            zt[i] = static_cast<float>(keep * z0[i] + mix * e);
        }
    }
    Tensor<float> eps_hat = predictor(zt, tv);
    nn::require_same_shape(eps_hat, eps, "noise_prediction_loss predictor output");
    double acc = 0;
    for (int64_t i = 0; i < eps.numel(); ++i) {
        const double d = static_cast<double>(eps[i]) - eps_hat[i];
        acc += d * d;
    }
    return acc / static_cast<double>(B);
}

// ---------------------------------------------------------------------------
// latent standardization
// ---------------------------------------------------------------------------

void LatentStats::validate() const {
    if (mean.empty() || mean.size() != stddev.size())
        throw ShapeError("latent stats: mean/stddev length mismatch");
    for (double s : stddev)
        if (!(s > 0.0)) throw ValueError("latent stats: stddev must be strictly positive");
    if (count < 1) throw ValueError("latent stats: sample count must be positive");
}

LatentStats fit_latent_stats(const Tensor<float>& latents, double stddev_floor) {
    nn::require_rank(latents, 4, "fit_latent_stats");
    const int64_t N = latents.dim(0), C = latents.dim(1), plane = latents.dim(2) * latents.dim(3);
    LatentStats stats;
    stats.count = N;
    stats.mean.assign(static_cast<size_t>(C), 0.0);
    stats.stddev.assign(static_cast<size_t>(C), 0.0);
    const double per_channel = static_cast<double>(N) * plane;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const float* p = latents.ptr() + (n * C + c) * plane;
            for (int64_t i = 0; i < plane; ++i) stats.mean[static_cast<size_t>(c)] += p[i];
        }
    for (int64_t c = 0; c < C; ++c) stats.mean[static_cast<size_t>(c)] /= per_channel;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const float* p = latents.ptr() + (n * C + c) * plane;
            const double mu = stats.mean[static_cast<size_t>(c)];
            for (int64_t i = 0; i < plane; ++i) {
                const double d = p[i] - mu;
                stats.stddev[static_cast<size_t>(c)] += d * d;
            }
        }
    for (int64_t c = 0; c < C; ++c)
        stats.stddev[static_cast<size_t>(c)] =
            std::max(std::sqrt(stats.stddev[static_cast<size_t>(c)] / per_channel), stddev_floor);
    stats.validate();
    return stats;
}

namespace {

Tensor<float> scale_latents(const Tensor<float>& latents, const LatentStats& stats, bool forward) {
    nn::require_rank(latents, 4, "latent standardization");
    stats.validate();
    const int64_t C = latents.dim(1);
    if (C != static_cast<int64_t>(stats.mean.size()))
        throw ShapeError("latent standardization: " + std::to_string(C) + " channels vs stats for " +
                         std::to_string(stats.mean.size()));
    const int64_t N = latents.dim(0), plane = latents.dim(2) * latents.dim(3);
    Tensor<float> out(latents.shape);
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const double mu = stats.mean[static_cast<size_t>(c)];
            const double sd = stats.stddev[static_cast<size_t>(c)];
            const float* p = latents.ptr() + (n * C + c) * plane;
            float* q = out.ptr() + (n * C + c) * plane;
            for (int64_t i = 0; i < plane; ++i)
                q[i] = static_cast<float>(forward ? (p[i] - mu) / sd : p[i] * sd + mu);
        }
    return out;
}

}  // namespace

Tensor<float> standardize(const Tensor<float>& latents, const LatentStats& stats) {
    return scale_latents(latents, stats, true);
}

Tensor<float> destandardize(const Tensor<float>& latents, const LatentStats& stats) {
    return scale_latents(latents, stats, false);
}

StateDict latent_stats_state(const LatentStats& stats) {
    stats.validate();
    const int64_t C = static_cast<int64_t>(stats.mean.size());
    StateDict sd;
    Tensor<float> mean({C}), stddev({C}), count({1});
    for (int64_t c = 0; c < C; ++c) {
        mean[c] = static_cast<float>(stats.mean[static_cast<size_t>(c)]);
        stddev[c] = static_cast<float>(stats.stddev[static_cast<size_t>(c)]);
    }
    count[0] = static_cast<float>(stats.count);
    sd.put("latent_stats.mean", std::move(mean));
    sd.put("latent_stats.stddev", std::move(stddev));
    sd.put("latent_stats.count", std::move(count));
    return sd;
}

LatentStats latent_stats_from_state(const StateDict& sd) {
    const Tensor<float>& mean = sd.get("latent_stats.mean");
    const Tensor<float>& stddev = sd.get("latent_stats.stddev");
    const Tensor<float>& count = sd.get("latent_stats.count");
    LatentStats stats;
    for (int64_t i = 0; i < mean.numel(); ++i) stats.mean.push_back(mean[i]);
    for (int64_t i = 0; i < stddev.numel(); ++i) stats.stddev.push_back(stddev[i]);
    stats.count = static_cast<int64_t>(count[0]);
    stats.validate();
    return stats;
}

// ---------------------------------------------------------------------------
// UNet configuration
// ---------------------------------------------------------------------------

void UnetConfig::validate() const {
    if (channels < 1) throw ValueError("unet config: channels must be positive");
    if (height < 1 || width < 1) throw ValueError("unet config: spatial size must be positive");
    if (ladder.empty()) throw ValueError("unet config: ladder must be non-empty");
    for (int64_t c : ladder)
        if (c <= 0) throw ValueError("unet config: ladder channels must be positive");
    if (resnets_per_stage < 1) throw ValueError("unet config: resnets_per_stage must be positive");
    if (heads < 1 || head_dim < 1) throw ValueError("unet config: heads and head_dim must be positive");
    if (norm_groups < 1) throw ValueError("unet config: norm_groups must be positive");
    const int64_t stages = static_cast<int64_t>(ladder.size());
    const int64_t halvings = stages - 1;
    if (height % (int64_t(1) << halvings) != 0 || width % (int64_t(1) << halvings) != 0)
        throw ShapeError("unet config: spatial size " + std::to_string(height) + "x" +
                         std::to_string(width) + " is not divisible by 2^" + std::to_string(halvings) +
                         " (one halving between stages)");
    for (int64_t i : attn_down)
        if (i < 0 || i >= stages)
            throw ShapeError("unet config: attention down-stage index " + std::to_string(i) +
                             " outside 0.." + std::to_string(stages - 1));
    for (int64_t u : attn_up)
        if (u < 0 || u >= stages)
            throw ShapeError("unet config: attention up-block index " + std::to_string(u) +
                             " outside 0.." + std::to_string(stages - 1));
    const int64_t D = effective_time_dim();
    if (D < 2 || D % 2 != 0)
        throw ValueError("unet config: time embedding dimension must be even and >= 2");

    // walk the channel counts that reach a groupnorm and check divisibility
    std::vector<int64_t> normed;
    int64_t cur = ladder.front();  // after the stem conv
    for (int64_t i = 0; i < stages; ++i) {
        int64_t in_c = cur;
        for (int64_t r = 0; r < resnets_per_stage; ++r) {
            normed.push_back(in_c);
            normed.push_back(ladder[static_cast<size_t>(i)]);
            in_c = ladder[static_cast<size_t>(i)];
        }
        cur = in_c;
        if (std::find(attn_down.begin(), attn_down.end(), i) != attn_down.end()) normed.push_back(cur);
    }
    normed.push_back(cur);  // mid resnets
    normed.push_back(cur);
    for (int64_t u = 0; u < stages; ++u) {
        const int64_t j = stages - 1 - u;
        int64_t in_c = cur + ladder[static_cast<size_t>(j)];  // concat with the skip
        for (int64_t r = 0; r < resnets_per_stage; ++r) {
            normed.push_back(in_c);
            normed.push_back(ladder[static_cast<size_t>(j)]);
            in_c = ladder[static_cast<size_t>(j)];
        }
        cur = in_c;
        if (std::find(attn_up.begin(), attn_up.end(), u) != attn_up.end()) normed.push_back(cur);
    }
    normed.push_back(ladder.front());  // head norm
    for (int64_t c : normed)
        if (c % norm_groups != 0)
            throw ShapeError("unet config: " + std::to_string(c) +
                             " channels not divisible by norm_groups = " + std::to_string(norm_groups));
}

UnetConfig UnetConfig::desk() {
    UnetConfig cfg;
    cfg.channels = 4;
    cfg.height = 8;
    cfg.width = 8;
    cfg.ladder = {32, 64};
    cfg.resnets_per_stage = 2;
    cfg.attn_down = {1};
    cfg.attn_up = {0};
    cfg.heads = 4;
    cfg.head_dim = 8;
    cfg.norm_groups = 8;
    return cfg;
}

UnetConfig unet_config_from(const RunConfig& rc, UnetConfig defaults) {
    UnetConfig cfg = defaults;
    cfg.channels = rc.get_i64("unet.channels", cfg.channels);
    cfg.height = rc.get_i64("unet.height", cfg.height);
    cfg.width = rc.get_i64("unet.width", cfg.width);
    cfg.ladder = rc.get_i64_list("unet.ladder", cfg.ladder);
    cfg.resnets_per_stage = rc.get_i64("unet.resnets_per_stage", cfg.resnets_per_stage);
    cfg.attn_down = rc.get_i64_list("unet.attn_down", cfg.attn_down);
    cfg.attn_up = rc.get_i64_list("unet.attn_up", cfg.attn_up);
    cfg.heads = rc.get_i64("unet.heads", cfg.heads);
    cfg.head_dim = rc.get_i64("unet.head_dim", cfg.head_dim);
    cfg.norm_groups = rc.get_i64("unet.norm_groups", cfg.norm_groups);
    cfg.time_dim = rc.get_i64("unet.time_dim", cfg.time_dim);
    return cfg;
}

namespace {

std::string join_i64(const std::vector<int64_t>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

}  // namespace

std::string unet_config_text(const UnetConfig& cfg) {
    std::ostringstream os;
    os << "unet.channels=" << cfg.channels << "\n";
    os << "unet.height=" << cfg.height << "\n";
    os << "unet.width=" << cfg.width << "\n";
    os << "unet.ladder=" << join_i64(cfg.ladder) << "\n";
    os << "unet.resnets_per_stage=" << cfg.resnets_per_stage << "\n";
    os << "unet.attn_down=" << join_i64(cfg.attn_down) << "\n";
    os << "unet.attn_up=" << join_i64(cfg.attn_up) << "\n";
    os << "unet.heads=" << cfg.heads << "\n";
    os << "unet.head_dim=" << cfg.head_dim << "\n";
    os << "unet.norm_groups=" << cfg.norm_groups << "\n";
    os << "unet.time_dim=" << cfg.time_dim << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// UNet model
// ---------------------------------------------------------------------------

nn::Parameter<float>* UnetModel::add_param(const std::string& name, Tensor<float> t) {
    params_.emplace_back(name, std::move(t));
    return &params_.back();
}

nn::Parameter<float>* UnetModel::add_kaiming(const std::string& name, Shape shape, int64_t fan_in,
                                             RngStream& rng) {
    Tensor<float> t(shape);
    nn::kaiming_uniform(t, fan_in, rng);
    return add_param(name, std::move(t));
}

nn::Parameter<float>* UnetModel::add_zeros(const std::string& name, Shape shape) {
    return add_param(name, Tensor<float>(shape));
}

nn::Parameter<float>* UnetModel::add_ones(const std::string& name, int64_t n) {
    Tensor<float> t({n});
    t.fill(1.0f);
    return add_param(name, std::move(t));
}

UnetModel::Resnet UnetModel::make_resnet(const std::string& prefix, int64_t in_c, int64_t out_c,
                                         RngStream& rng) {
    Resnet r;
    r.in_c = in_c;
    r.out_c = out_c;
    r.gn1_scale = add_ones(prefix + ".gn1.scale", in_c);
    r.gn1_shift = add_zeros(prefix + ".gn1.shift", {in_c});
    r.conv1_w = add_kaiming(prefix + ".conv1.w", {out_c, in_c, 3, 3}, in_c * 9, rng);
    r.conv1_b = add_zeros(prefix + ".conv1.b", {out_c});
    const int64_t D = cfg.effective_time_dim();
    r.time_w = add_kaiming(prefix + ".time.w", {D, out_c}, D, rng);
    r.time_b = add_zeros(prefix + ".time.b", {out_c});
    r.gn2_scale = add_ones(prefix + ".gn2.scale", out_c);
    r.gn2_shift = add_zeros(prefix + ".gn2.shift", {out_c});
    r.conv2_w = add_kaiming(prefix + ".conv2.w", {out_c, out_c, 3, 3}, out_c * 9, rng);
    r.conv2_b = add_zeros(prefix + ".conv2.b", {out_c});
    if (in_c != out_c) {
        r.skip_w = add_kaiming(prefix + ".skip.w", {out_c, in_c, 1, 1}, in_c, rng);
        r.skip_b = add_zeros(prefix + ".skip.b", {out_c});
    } else {
        r.skip_w = nullptr;
        r.skip_b = nullptr;
    }
    return r;
}

UnetModel::Attention UnetModel::make_attention(const std::string& prefix, int64_t channels,
                                               RngStream& rng) {
    Attention a;
    a.gn_scale = add_ones(prefix + ".gn.scale", channels);
    a.gn_shift = add_zeros(prefix + ".gn.shift", {channels});
    const int64_t inner = cfg.heads * cfg.head_dim;
    a.wq = add_kaiming(prefix + ".wq", {channels, inner}, channels, rng);
    a.wk = add_kaiming(prefix + ".wk", {channels, inner}, channels, rng);
    a.wv = add_kaiming(prefix + ".wv", {channels, inner}, channels, rng);
    a.wo = add_kaiming(prefix + ".wo", {inner, channels}, inner, rng);
    return a;
}

UnetModel::UnetModel(const UnetConfig& config, uint64_t init_seed) : cfg(config) {
    cfg.validate();
    RngStream rng(init_seed);
    const int64_t stages = static_cast<int64_t>(cfg.ladder.size());
    const int64_t D = cfg.effective_time_dim();

    time_mlp1_.w = add_kaiming("time.mlp1.w", {D, D}, D, rng);
    time_mlp1_.b = add_zeros("time.mlp1.b", {D});
    time_mlp2_.w = add_kaiming("time.mlp2.w", {D, D}, D, rng);
    time_mlp2_.b = add_zeros("time.mlp2.b", {D});

    stem_.w = add_kaiming("stem.w", {cfg.ladder.front(), cfg.channels, 3, 3}, cfg.channels * 9, rng);
    stem_.b = add_zeros("stem.b", {cfg.ladder.front()});

    int64_t cur = cfg.ladder.front();
    for (int64_t i = 0; i < stages; ++i) {
        Stage st;
        const std::string prefix = "down" + std::to_string(i);
        int64_t in_c = cur;
        for (int64_t r = 0; r < cfg.resnets_per_stage; ++r) {
            st.resnets.push_back(make_resnet(prefix + ".res" + std::to_string(r), in_c,
                                             cfg.ladder[static_cast<size_t>(i)], rng));
            in_c = cfg.ladder[static_cast<size_t>(i)];
        }
        cur = in_c;
        if (std::find(cfg.attn_down.begin(), cfg.attn_down.end(), i) != cfg.attn_down.end()) {
            st.has_attn = true;
            st.attn = make_attention(prefix + ".attn", cur, rng);
        }
        if (i + 1 < stages) {
            st.has_resample = true;
            st.resample.w = add_kaiming(prefix + ".down.w", {cur, cur, 3, 3}, cur * 9, rng);
            st.resample.b = add_zeros(prefix + ".down.b", {cur});
        }
        down_.push_back(std::move(st));
    }

    mid0_ = make_resnet("mid.res0", cur, cur, rng);
    mid1_ = make_resnet("mid.res1", cur, cur, rng);

    for (int64_t u = 0; u < stages; ++u) {
        const int64_t j = stages - 1 - u;
        Stage st;
        const std::string prefix = "up" + std::to_string(u);
        int64_t in_c = cur + cfg.ladder[static_cast<size_t>(j)];
        for (int64_t r = 0; r < cfg.resnets_per_stage; ++r) {
            st.resnets.push_back(make_resnet(prefix + ".res" + std::to_string(r), in_c,
                                             cfg.ladder[static_cast<size_t>(j)], rng));
            in_c = cfg.ladder[static_cast<size_t>(j)];
        }
        cur = in_c;
        if (std::find(cfg.attn_up.begin(), cfg.attn_up.end(), u) != cfg.attn_up.end()) {
            st.has_attn = true;
            st.attn = make_attention(prefix + ".attn", cur, rng);
        }
        if (j > 0) {
            st.has_resample = true;
            st.resample.w = add_kaiming(prefix + ".up.w", {cur, cur, 3, 3}, cur * 9, rng);
            st.resample.b = add_zeros(prefix + ".up.b", {cur});
        }
        up_.push_back(std::move(st));
    }

    head_gn_scale_ = add_ones("head.gn.scale", cur);
    head_gn_shift_ = add_zeros("head.gn.shift", {cur});
    // zero-initialized head: the untrained model predicts zero noise
    head_w_ = add_zeros("head.w", {cfg.channels, cur, 3, 3});
    head_b_ = add_zeros("head.b", {cfg.channels});
}

Var<float> UnetModel::time_embedding(const std::vector<int64_t>& t) const {
    const int64_t B = static_cast<int64_t>(t.size());
    const int64_t D = cfg.effective_time_dim(), half = D / 2;
    Tensor<float> emb({B, D});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < half; ++i) {
            const double freq =
                std::exp(-std::log(10000.0) * static_cast<double>(i) /
                         static_cast<double>(half > 1 ? half - 1 : 1));
            const double angle = static_cast<double>(t[static_cast<size_t>(b)]) * freq;
            emb[b * D + i] = static_cast<float>(std::sin(angle));
            emb[b * D + half + i] = static_cast<float>(std::cos(angle));
        }
    return nn::constant(std::move(emb));
}

Var<float> UnetModel::run_resnet(const Resnet& r, Var<float> h, const Var<float>& temb) const {
    using namespace nn;
    Var<float> input = h;
    h = groupnorm(h, r.gn1_scale->var, r.gn1_shift->var, cfg.norm_groups);
    h = swish(h);
    h = add_channel_bias(conv2d(h, r.conv1_w->var, 1, 1), r.conv1_b->var);
    h = add_channel_map(h, linear(temb, r.time_w->var, r.time_b->var));
    h = groupnorm(h, r.gn2_scale->var, r.gn2_shift->var, cfg.norm_groups);
    h = swish(h);
    h = add_channel_bias(conv2d(h, r.conv2_w->var, 1, 1), r.conv2_b->var);
    Var<float> shortcut = r.skip_w == nullptr
                              ? input
                              : add_channel_bias(conv2d(input, r.skip_w->var, 1, 0), r.skip_b->var);
    return add(h, shortcut);
}

Var<float> UnetModel::run_attention(const Attention& a, Var<float> h) const {
    using namespace nn;
    const int64_t B = h->value.dim(0), C = h->value.dim(1);
    const int64_t H = h->value.dim(2), W = h->value.dim(3);
    Var<float> n = groupnorm(h, a.gn_scale->var, a.gn_shift->var, cfg.norm_groups);
    Var<float> seq = transpose_last(reshape(n, {B, C, H * W}));  // [B, HW, C]
    Var<float> q = linear(seq, a.wq->var);
    Var<float> k = linear(seq, a.wk->var);
    Var<float> v = linear(seq, a.wv->var);
    Var<float> o = attention(q, k, v, cfg.heads, a.wo->var);
    Var<float> back = reshape(transpose_last(o), {B, C, H, W});
    return add(h, back);
}

Var<float> UnetModel::forward(const Tensor<float>& z_t, const std::vector<int64_t>& t, bool train) {
    using namespace nn;
    (void)train;  // no train-time state: groupnorm is batch-independent
    if (z_t.rank() != 4 || z_t.dim(1) != cfg.channels || z_t.dim(2) != cfg.height ||
        z_t.dim(3) != cfg.width)
        throw ShapeError("unet forward: input shape " + shape_str(z_t.shape) + " does not match [B, " +
                         std::to_string(cfg.channels) + ", " + std::to_string(cfg.height) + ", " +
                         std::to_string(cfg.width) + "]");
    if (static_cast<int64_t>(t.size()) != z_t.dim(0))
        throw ShapeError("unet forward: got " + std::to_string(t.size()) + " steps for batch of " +
                         std::to_string(z_t.dim(0)));

    Var<float> temb = time_embedding(t);
    temb = add_channel_bias(linear(temb, time_mlp1_.w->var), time_mlp1_.b->var);
    temb = swish(temb);
    temb = add_channel_bias(linear(temb, time_mlp2_.w->var), time_mlp2_.b->var);

    Var<float> h = add_channel_bias(conv2d(constant(z_t), stem_.w->var, 1, 1), stem_.b->var);
    std::vector<Var<float>> skips;
    for (const Stage& st : down_) {
        for (const Resnet& r : st.resnets) h = run_resnet(r, h, temb);
        if (st.has_attn) h = run_attention(st.attn, h);
        skips.push_back(h);
        if (st.has_resample)
            h = add_channel_bias(conv2d(h, st.resample.w->var, 2, 1), st.resample.b->var);
    }
    h = run_resnet(mid0_, h, temb);
    h = run_resnet(mid1_, h, temb);
    const int64_t stages = static_cast<int64_t>(up_.size());
    for (int64_t u = 0; u < stages; ++u) {
        const Stage& st = up_[static_cast<size_t>(u)];
        h = cat_channels<float>({h, skips[static_cast<size_t>(stages - 1 - u)]});
        for (const Resnet& r : st.resnets) h = run_resnet(r, h, temb);
        if (st.has_attn) h = run_attention(st.attn, h);
        if (st.has_resample) {
            h = upsample_nearest(h, 2);
            h = add_channel_bias(conv2d(h, st.resample.w->var, 1, 1), st.resample.b->var);
        }
    }
    h = groupnorm(h, head_gn_scale_->var, head_gn_shift_->var, cfg.norm_groups);
    h = swish(h);
    return add_channel_bias(conv2d(h, head_w_->var, 1, 1), head_b_->var);
}

std::vector<nn::Parameter<float>*> UnetModel::parameters() {
    std::vector<nn::Parameter<float>*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(&p);
    return out;
}

int64_t UnetModel::parameter_count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.var->value.numel();
    return n;
}

StateDict UnetModel::state() const {
    StateDict sd;
    for (const auto& p : params_) sd.put(p.name, p.var->value);
    return sd;
}

void UnetModel::load_state(const StateDict& sd) {
    std::vector<nn::Parameter<float>*> params;
    for (auto& p : params_) params.push_back(&p);
    restore_state(sd, params);
}

NoisePredictor unet_noise_predictor(UnetModel& model) {
    return [&model](const Tensor<float>& z_t, const std::vector<int64_t>& t) {
        return model.forward(z_t, t, false)->value;
    };
}

// ---------------------------------------------------------------------------
// sampling
// ---------------------------------------------------------------------------

Tensor<float> ddpm_sample(const NoisePredictor& predictor, const NoiseSchedule& sched, int64_t count,
                          const Shape& latent_shape, uint64_t seed, const LatentStats* stats,
                          int64_t chain_batch) {
    if (count < 0) throw ValueError("ddpm_sample: count must be non-negative");
    if (latent_shape.size() != 3)
        throw ShapeError("ddpm_sample: latent_shape must be {C, H, W}, got " + nn::shape_str(latent_shape));
    if (chain_batch < 1) throw ValueError("ddpm_sample: chain_batch must be positive");
    if (count == 0) return Tensor<float>();

    const int64_t C = latent_shape[0], H = latent_shape[1], W = latent_shape[2];
    const int64_t plane = nn::shape_numel(latent_shape);
    RngStream rng(seed);
    Tensor<float> out({count, C, H, W});

    for (int64_t start = 0; start < count; start += chain_batch) {
        const int64_t b = std::min(chain_batch, count - start);
        Tensor<float> z({b, C, H, W});
        for (int64_t i = 0; i < z.numel(); ++i) z[i] = static_cast<float>(rng.normal());
        std::vector<int64_t> tv(static_cast<size_t>(b));
        for (int64_t t = sched.T; t >= 1; --t) {
            std::fill(tv.begin(), tv.end(), t);
            Tensor<float> eps_hat = predictor(z, tv);
            nn::require_same_shape(eps_hat, z, "ddpm_sample predictor output");
            const double a = sched.alpha(t);
            const double ab = sched.alpha_bar(t);
            const double beta = sched.beta(t);
            const double c1 = 1.0 / std::sqrt(a);
            const double c2 = beta / std::sqrt(1.0 - ab);
            const double sigma = std::sqrt(beta);
            const bool last = (t == 1);
            for (int64_t i = 0; i < z.numel(); ++i) {
                double v = c1 * (static_cast<double>(z[i]) - c2 * eps_hat[i]);
                if (!last) v += sigma * rng.normal();
                z[i] = static_cast<float>(v);
            }
            if (!z.all_finite())
                throw ValueError("ddpm_sample: non-finite value at step " + std::to_string(t));
        }
        std::copy(z.ptr(), z.ptr() + b * plane, out.ptr() + start * plane);
    }
    if (stats != nullptr) out = destandardize(out, *stats);
    return out;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

namespace {

void ensure_parent_dir(const std::string& path) {
    fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

}  // namespace

DiffusionTrainReport train_diffusion(UnetModel& model, const Tensor<float>& latents,
                                     const NoiseSchedule& sched, const DiffusionTrainOptions& opt) {
    nn::require_rank(latents, 4, "train_diffusion latents");
    const int64_t N = latents.dim(0);
    if (N < 1) throw ValueError("train_diffusion: empty latent set");
    if (latents.dim(1) != model.cfg.channels || latents.dim(2) != model.cfg.height ||
        latents.dim(3) != model.cfg.width)
        throw ShapeError("train_diffusion: latents " + nn::shape_str(latents.shape) +
                         " do not match the model's latent shape");
    if (opt.epochs < 1) throw ValueError("train_diffusion: epochs must be positive");
    if (opt.batch_size < 1) throw ValueError("train_diffusion: batch_size must be positive");
    sched.validate();

    const int64_t plane = latents.dim(1) * latents.dim(2) * latents.dim(3);
    const int64_t batch = opt.batch_size;
    const int64_t steps_per_epoch = (N + batch - 1) / batch;
    const int64_t total_steps = opt.epochs * steps_per_epoch;
    int64_t warmup_steps = opt.warmup_epochs * steps_per_epoch;
    warmup_steps = std::max<int64_t>(0, std::min(warmup_steps, total_steps - 1));

    RngStream root(opt.seed);
    RngStream shuffle_rng = root.fork(0xd1fful);
    RngStream noise_rng = root.fork(0x015eu);

    std::vector<nn::Parameter<float>*> params = model.parameters();
    nn::AdamConfig<float> adam;

    std::ofstream csv;
    if (!opt.log_csv_path.empty()) {
        ensure_parent_dir(opt.log_csv_path);
        csv.open(opt.log_csv_path);
        if (!csv) throw IoError("train_diffusion: cannot open log file " + opt.log_csv_path);
        csv << "epoch,loss,lr\n";
    }

    std::vector<int64_t> order(static_cast<size_t>(N));
    for (int64_t i = 0; i < N; ++i) order[static_cast<size_t>(i)] = i;

    DiffusionTrainReport report;
    report.best_loss = std::numeric_limits<double>::infinity();
    int64_t global_step = 0;

    for (int64_t epoch = 1; epoch <= opt.epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }
        double sum_loss = 0;
        int64_t seen = 0;
        double last_lr = 0;
        for (int64_t s = 0; s < N; s += batch) {
            const int64_t b = std::min(batch, N - s);
            Tensor<float> z0({b, latents.dim(1), latents.dim(2), latents.dim(3)});
            for (int64_t i = 0; i < b; ++i)
                std::copy(latents.ptr() + order[static_cast<size_t>(s + i)] * plane,
                          latents.ptr() + (order[static_cast<size_t>(s + i)] + 1) * plane,
                          z0.ptr() + i * plane);
            Tensor<float> eps(z0.shape), zt(z0.shape);
            std::vector<int64_t> tv(static_cast<size_t>(b));
            for (int64_t i = 0; i < b; ++i) {
                const int64_t t = noise_rng.uniform_int(1, sched.T);
                tv[static_cast<size_t>(i)] = t;
                const double ab = sched.alpha_bar(t);
                const double keep = std::sqrt(ab), mix = std::sqrt(1.0 - ab);
                for (int64_t k = i * plane; k < (i + 1) * plane; ++k) {
                    const double e = noise_rng.normal();
                    eps[k] = static_cast<float>(e);
                    zt[k] = static_cast<float>(keep * z0[k] + mix * e);
                }
            }
            Var<float> eps_hat = model.forward(zt, tv, true);
            Var<float> diff = nn::sub(eps_hat, nn::constant(std::move(eps)));
            Var<float> loss = nn::mul_scalar(nn::sum(nn::mul(diff, diff)), 1.0f / static_cast<float>(b));
            const double lv = loss->value[0];
            if (!std::isfinite(lv))
                throw ValueError("train_diffusion: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch offset " + std::to_string(s));
            sum_loss += lv * static_cast<double>(b);
            seen += b;
            nn::backward(loss);
            adam.lr = nn::lr_cosine_warmup(global_step, warmup_steps, total_steps,
                                           static_cast<float>(opt.learning_rate));
            last_lr = adam.lr;
            nn::adam_step(params, adam);
            nn::zero_grads(params);
            ++global_step;
        }

        DiffusionEpochStats stats;
        stats.epoch = epoch;
        stats.loss = sum_loss / static_cast<double>(seen);
        stats.lr = last_lr;
        report.epochs.push_back(stats);

        if (csv.is_open()) {
            csv << std::setprecision(10) << epoch << "," << stats.loss << "," << stats.lr << "\n";
            csv.flush();
        }
        if (opt.verbose)
            std::cout << std::setprecision(6) << "epoch " << epoch << " loss " << stats.loss << " lr "
                      << stats.lr << "\n"
                      << std::flush;

        if (stats.loss < report.best_loss) {
            report.best_loss = stats.loss;
            report.best_epoch = epoch;
            if (!opt.checkpoint_path.empty()) {
                ensure_parent_dir(opt.checkpoint_path);
                save_checkpoint(opt.checkpoint_path, model.state(), CheckpointPrecision::Single);
                report.checkpoint_path = opt.checkpoint_path;
            }
        }
        if (opt.stamp_every > 0 && epoch % opt.stamp_every == 0) {
            fs::create_directories(opt.stamp_dir.empty() ? "." : opt.stamp_dir);
            const std::string stamp = (opt.stamp_dir.empty() ? std::string(".") : opt.stamp_dir) +
                                      "/diff_epoch" + std::to_string(epoch) + ".ddkp";
            save_checkpoint(stamp, model.state(), CheckpointPrecision::Single);
        }
    }
    return report;
}

}  // namespace dnadiff
