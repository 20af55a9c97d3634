#include "dnadiff/vae.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>

namespace dnadiff {

namespace fs = std::filesystem;

void VaeConfig::validate() const {
    if (sequence_length <= 0) throw ValueError("vae config: sequence_length must be positive");
    if (kernel_sizes.empty()) throw ValueError("vae config: kernel_sizes must be non-empty");
    for (int64_t k : kernel_sizes)
        if (k < 1 || k % 2 == 0)
            throw ValueError("vae config: kernel sizes must be odd and positive, got " + std::to_string(k));
    if (ladder.empty()) throw ValueError("vae config: ladder must be non-empty");
    for (int64_t c : ladder)
        if (c <= 0) throw ValueError("vae config: ladder channel counts must be positive");
    if (conv2d_channels.empty()) throw ValueError("vae config: conv2d_channels must be non-empty");
    for (int64_t c : conv2d_channels)
        if (c <= 0) throw ValueError("vae config: conv2d channel counts must be positive");
    if (latent_channels <= 0 || latent_height <= 0 || latent_width <= 0)
        throw ValueError("vae config: latent dimensions must be positive");
    if (kl_weight <= 0) throw ValueError("vae config: kl_weight must be positive");
    if (learning_rate <= 0) throw ValueError("vae config: learning_rate must be positive");
    if (batch_size < 2) throw ValueError("vae config: batch_size must be at least 2 (batchnorm)");
    if (!(logvar_min < logvar_max)) throw ValueError("vae config: logvar bounds must satisfy min < max");

    const int64_t stages = static_cast<int64_t>(ladder.size());
    if (sequence_length % (int64_t(1) << stages) != 0)
        throw ShapeError("vae config: sequence_length " + std::to_string(sequence_length) +
                         " is not divisible by 2^" + std::to_string(stages) + " (one halving per 1-D stage)");
    const int64_t n2 = static_cast<int64_t>(conv2d_channels.size());
    const int64_t sh = surface_height(), sw = surface_width();
    if (sh % (int64_t(1) << n2) != 0 || sw % (int64_t(1) << n2) != 0)
        throw ShapeError("vae config: surface " + std::to_string(sh) + "x" + std::to_string(sw) +
                         " is not divisible by 2^" + std::to_string(n2) + " (one halving per 2-D stage)");
    if (latent_height != (sh >> n2) || latent_width != (sw >> n2))
        throw ShapeError("vae config: latent plane " + std::to_string(latent_height) + "x" +
                         std::to_string(latent_width) + " does not match surface " + std::to_string(sh) +
                         "x" + std::to_string(sw) + " halved " + std::to_string(n2) + " times");
    if (conv2d_channels.back() != 2 * latent_channels)
        throw ShapeError("vae config: last 2-D stage must emit 2*latent_channels = " +
                         std::to_string(2 * latent_channels) + " channels (mean/logvar split), got " +
                         std::to_string(conv2d_channels.back()));
}

VaeConfig VaeConfig::desk() {
    VaeConfig cfg;
    cfg.sequence_length = 256;
    cfg.kernel_sizes = {1, 3, 5};
    cfg.ladder = {32, 64};
    cfg.conv2d_channels = {16, 16, 8};
    cfg.latent_channels = 4;
    cfg.latent_height = 8;
    cfg.latent_width = 8;
    // Rate tuned on the planted-motif benchmark corpus; stable at batch 32
    // under a short warmup, too noisy at smaller batches.
    cfg.learning_rate = 3e-3;
    cfg.batch_size = 32;
    return cfg;
}

VaeConfig vae_config_from(const RunConfig& rc, VaeConfig defaults) {
    VaeConfig cfg = defaults;
    cfg.sequence_length = rc.get_i64("vae.sequence_length", cfg.sequence_length);
    cfg.kernel_sizes = rc.get_i64_list("vae.kernel_sizes", cfg.kernel_sizes);
    cfg.ladder = rc.get_i64_list("vae.ladder", cfg.ladder);
    cfg.conv2d_channels = rc.get_i64_list("vae.conv2d_channels", cfg.conv2d_channels);
    cfg.latent_channels = rc.get_i64("vae.latent_channels", cfg.latent_channels);
    cfg.latent_height = rc.get_i64("vae.latent_height", cfg.latent_height);
    cfg.latent_width = rc.get_i64("vae.latent_width", cfg.latent_width);
    cfg.kl_weight = rc.get_f64("vae.kl_weight", cfg.kl_weight);
    cfg.learning_rate = rc.get_f64("vae.learning_rate", cfg.learning_rate);
    cfg.batch_size = rc.get_i64("vae.batch_size", cfg.batch_size);
    cfg.logvar_min = rc.get_f64("vae.logvar_min", cfg.logvar_min);
    cfg.logvar_max = rc.get_f64("vae.logvar_max", cfg.logvar_max);
    cfg.sum_reconstruction = rc.get_bool("vae.sum_reconstruction", cfg.sum_reconstruction);
    cfg.autoencoder_mode = rc.get_bool("vae.autoencoder_mode", cfg.autoencoder_mode);
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

std::string fmt_f64(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace

std::string vae_config_text(const VaeConfig& cfg) {
    std::ostringstream os;
    os << "vae.sequence_length=" << cfg.sequence_length << "\n";
    os << "vae.kernel_sizes=" << join_i64(cfg.kernel_sizes) << "\n";
    os << "vae.ladder=" << join_i64(cfg.ladder) << "\n";
    os << "vae.conv2d_channels=" << join_i64(cfg.conv2d_channels) << "\n";
    os << "vae.latent_channels=" << cfg.latent_channels << "\n";
    os << "vae.latent_height=" << cfg.latent_height << "\n";
    os << "vae.latent_width=" << cfg.latent_width << "\n";
    os << "vae.kl_weight=" << fmt_f64(cfg.kl_weight) << "\n";
    os << "vae.learning_rate=" << fmt_f64(cfg.learning_rate) << "\n";
    os << "vae.batch_size=" << cfg.batch_size << "\n";
    os << "vae.logvar_min=" << fmt_f64(cfg.logvar_min) << "\n";
    os << "vae.logvar_max=" << fmt_f64(cfg.logvar_max) << "\n";
    os << "vae.sum_reconstruction=" << (cfg.sum_reconstruction ? "true" : "false") << "\n";
    os << "vae.autoencoder_mode=" << (cfg.autoencoder_mode ? "true" : "false") << "\n";
    return os.str();
}

std::vector<int64_t> split_channels(int64_t total, int64_t parts) {
    if (parts <= 0) throw ValueError("split_channels: parts must be positive");
    if (total < parts)
        throw ValueError("split_channels: cannot split " + std::to_string(total) + " channels into " +
                         std::to_string(parts) + " non-empty groups");
    std::vector<int64_t> out(parts, total / parts);
    for (int64_t i = 0; i < total % parts; ++i) out[i] += 1;
    return out;
}

namespace {

nn::Tensor<float> one_hot_batch(const DatasetTable& table, const std::vector<size_t>& order, size_t start,
                            size_t count) {
    const int64_t L = table.window_length;
    nn::Tensor<float> x({static_cast<int64_t>(count), 4, L});
    for (size_t i = 0; i < count; ++i) {
        nn::Tensor<float> one = one_hot_encode(table.records[order[start + i]].sequence);
        std::copy(one.ptr(), one.ptr() + one.numel(), x.ptr() + static_cast<int64_t>(i) * 4 * L);
    }
    return x;
}

nn::Tensor<float> one_hot_batch(const std::vector<std::string>& seqs, size_t start, size_t count) {
    const int64_t L = static_cast<int64_t>(seqs[start].size());
    nn::Tensor<float> x({static_cast<int64_t>(count), 4, L});
    for (size_t i = 0; i < count; ++i) {
        nn::Tensor<float> one = one_hot_encode(seqs[start + i]);
        if (one.dim(1) != L)
            throw ShapeError("sequence batch: length " + std::to_string(one.dim(1)) +
                             " differs from first sequence length " + std::to_string(L));
        std::copy(one.ptr(), one.ptr() + one.numel(), x.ptr() + static_cast<int64_t>(i) * 4 * L);
    }
    return x;
}

size_t matching_positions(const std::string& decoded, const std::string& truth) {
    size_t hits = 0;
    for (size_t i = 0; i < decoded.size(); ++i) {
        char t = static_cast<char>(std::toupper(static_cast<unsigned char>(truth[i])));
        if (decoded[i] == t) ++hits;
    }
    return hits;
}

void ensure_parent_dir(const std::string& path) {
    fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

}  // namespace

VaeTrainReport train_vae(VaeModelF& model, const DatasetTable& table, const VaeTrainOptions& opt) {
    std::vector<size_t> train_idx = table.indices_of(Split::Train);
    std::vector<size_t> val_idx = table.indices_of(Split::Validation);
    if (train_idx.empty()) throw ValueError("train_vae: training split is empty");
    if (table.window_length != model.cfg.sequence_length)
        throw ShapeError("train_vae: table window length " + std::to_string(table.window_length) +
                         " does not match configured sequence length " +
                         std::to_string(model.cfg.sequence_length));
    if (opt.epochs <= 0) throw ValueError("train_vae: epochs must be positive");

    const size_t batch = static_cast<size_t>(model.cfg.batch_size);
    RngStream root(opt.seed);
    RngStream shuffle_rng = root.fork(0x5eed5u);
    RngStream noise_rng = root.fork(0x0153eu);

    std::vector<nn::Parameter<float>*> params = model.parameters();
    nn::AdamConfig<float> adam;
    const float base_lr = static_cast<float>(model.cfg.learning_rate);
    adam.lr = base_lr;

    // Optimizer steps per epoch: full batches plus a trailing batch of >= 2.
    int64_t steps_per_epoch = 0;
    for (size_t s = 0; s + 2 <= train_idx.size(); s += batch)
        if (std::min(batch, train_idx.size() - s) >= 2) ++steps_per_epoch;
    const int64_t warmup_steps = std::max<int64_t>(0, opt.warmup_epochs) * steps_per_epoch;
    const int64_t total_steps = opt.epochs * steps_per_epoch;
    int64_t global_step = 0;

    std::ofstream csv;
    if (!opt.log_csv_path.empty()) {
        ensure_parent_dir(opt.log_csv_path);
        csv.open(opt.log_csv_path);
        if (!csv) throw IoError("train_vae: cannot open log file " + opt.log_csv_path);
        csv << "epoch,split,total,recon,kl\n";
    }

    VaeTrainReport report;
    report.best_val_total = std::numeric_limits<double>::infinity();
    const bool has_val = !val_idx.empty();

    for (int64_t epoch = 1; epoch <= opt.epochs; ++epoch) {
        for (size_t i = train_idx.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(train_idx[i - 1], train_idx[j]);
        }

        double sum_total = 0, sum_recon = 0, sum_kl = 0;
        size_t seen = 0;
        for (size_t s = 0; s + 2 <= train_idx.size(); s += batch) {
            const size_t b = std::min(batch, train_idx.size() - s);
            if (b < 2) break;  // batchnorm needs at least two rows
            nn::Tensor<float> x = one_hot_batch(table, train_idx, s, b);
            ElboParts<float> parts = model.elbo(x, noise_rng, true);
            const double total = parts.total->value[0];
            if (!std::isfinite(total))
                throw ValueError("train_vae: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch offset " + std::to_string(s));
            sum_total += total * static_cast<double>(b);
            sum_recon += parts.recon->value[0] * static_cast<double>(b);
            sum_kl += parts.kl->value[0] * static_cast<double>(b);
            seen += b;
            nn::backward(parts.total);
            if (opt.cosine_decay)
                adam.lr = nn::lr_cosine_warmup(global_step, warmup_steps, total_steps, base_lr);
            else if (global_step < warmup_steps)
                adam.lr = base_lr * static_cast<float>(global_step + 1) / static_cast<float>(warmup_steps);
            ++global_step;
            nn::adam_step(params, adam);
            nn::zero_grads(params);
        }
        if (seen == 0) throw ValueError("train_vae: no trainable batch of size >= 2");

        VaeEpochStats stats;
        stats.epoch = epoch;
        stats.train_total = sum_total / static_cast<double>(seen);
        stats.train_recon = sum_recon / static_cast<double>(seen);
        stats.train_kl = sum_kl / static_cast<double>(seen);

        if (has_val) {
            double vt = 0, vr = 0, vk = 0;
            size_t vseen = 0, hits = 0, positions = 0;
            for (size_t s = 0; s < val_idx.size(); s += batch) {
                const size_t b = std::min(batch, val_idx.size() - s);
                nn::Tensor<float> x = one_hot_batch(table, val_idx, s, b);
                ElboParts<float> parts = model.elbo_mean(x, false);
                vt += parts.total->value[0] * static_cast<double>(b);
                vr += parts.recon->value[0] * static_cast<double>(b);
                vk += parts.kl->value[0] * static_cast<double>(b);
                vseen += b;
                std::vector<std::string> decoded = decode_argmax_batch(parts.probs->value);
                for (size_t i = 0; i < b; ++i) {
                    const std::string& truth = table.records[val_idx[s + i]].sequence;
                    hits += matching_positions(decoded[i], truth);
                    positions += truth.size();
                }
            }
            stats.val_total = vt / static_cast<double>(vseen);
            stats.val_recon = vr / static_cast<double>(vseen);
            stats.val_kl = vk / static_cast<double>(vseen);
            stats.val_accuracy = positions ? static_cast<double>(hits) / static_cast<double>(positions) : 0;
        } else {
            stats.val_total = std::numeric_limits<double>::quiet_NaN();
            stats.val_recon = std::numeric_limits<double>::quiet_NaN();
            stats.val_kl = std::numeric_limits<double>::quiet_NaN();
            stats.val_accuracy = std::numeric_limits<double>::quiet_NaN();
        }
        report.epochs.push_back(stats);

        if (csv.is_open()) {
            csv << std::setprecision(10);
            csv << epoch << ",train," << stats.train_total << "," << stats.train_recon << ","
                << stats.train_kl << "\n";
            if (has_val)
                csv << epoch << ",val," << stats.val_total << "," << stats.val_recon << ","
                    << stats.val_kl << "\n";
            csv.flush();
        }
        if (opt.verbose) {
            std::cout << std::setprecision(6) << "epoch " << epoch << " train " << stats.train_total
                      << " (recon " << stats.train_recon << " kl " << stats.train_kl << ")";
            if (has_val)
                std::cout << " val " << stats.val_total << " acc " << stats.val_accuracy;
            std::cout << "\n" << std::flush;
        }

        const double tracked = has_val ? stats.val_total : stats.train_total;
        if (tracked < report.best_val_total) {
            report.best_val_total = tracked;
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
                                      "/vae_epoch" + std::to_string(epoch) + ".ddkp";
            save_checkpoint(stamp, model.state(), CheckpointPrecision::Single);
        }
        if (has_val) report.final_val_accuracy = stats.val_accuracy;
        if (opt.stop_at_val_accuracy > 0 && has_val && stats.val_accuracy >= opt.stop_at_val_accuracy)
            break;
    }
    return report;
}

nn::Tensor<float> encode_means(VaeModelF& model, const std::vector<std::string>& sequences,
                           int64_t batch_size) {
    if (batch_size < 1) throw ValueError("encode_means: batch_size must be positive");
    const int64_t N = static_cast<int64_t>(sequences.size());
    const int64_t C = model.cfg.latent_channels, H = model.cfg.latent_height, W = model.cfg.latent_width;
    nn::Tensor<float> out({N, C, H, W});
    const int64_t plane = C * H * W;
    for (int64_t s = 0; s < N; s += batch_size) {
        const size_t b = static_cast<size_t>(std::min<int64_t>(batch_size, N - s));
        nn::Tensor<float> x = one_hot_batch(sequences, static_cast<size_t>(s), b);
        Posterior<float> post = model.encode(x, false);
        std::copy(post.mean->value.ptr(), post.mean->value.ptr() + static_cast<int64_t>(b) * plane,
                  out.ptr() + s * plane);
    }
    return out;
}

std::vector<std::string> decode_to_sequences(VaeModelF& model, const nn::Tensor<float>& latents,
                                             int64_t batch_size) {
    if (batch_size < 1) throw ValueError("decode_to_sequences: batch_size must be positive");
    if (latents.rank() != 4)
        throw ShapeError("decode_to_sequences: latents must be [N, C, H, W], got " +
                         nn::shape_str(latents.shape));
    const int64_t N = latents.dim(0);
    const int64_t plane = latents.dim(1) * latents.dim(2) * latents.dim(3);
    std::vector<std::string> out;
    out.reserve(static_cast<size_t>(N));
    for (int64_t s = 0; s < N; s += batch_size) {
        const int64_t b = std::min<int64_t>(batch_size, N - s);
        nn::Tensor<float> z({b, latents.dim(1), latents.dim(2), latents.dim(3)});
        std::copy(latents.ptr() + s * plane, latents.ptr() + (s + b) * plane, z.ptr());
        nn::Var<float> probs = model.decode(z, false);
        std::vector<std::string> decoded = decode_argmax_batch(probs->value);
        out.insert(out.end(), decoded.begin(), decoded.end());
    }
    return out;
}

double reconstruction_accuracy(VaeModelF& model, const std::vector<std::string>& sequences,
                               int64_t batch_size) {
    if (sequences.empty()) throw ValueError("reconstruction_accuracy: empty sequence set");
    size_t hits = 0, positions = 0;
    const size_t batch = static_cast<size_t>(std::max<int64_t>(1, batch_size));
    for (size_t s = 0; s < sequences.size(); s += batch) {
        const size_t b = std::min(batch, sequences.size() - s);
        nn::Tensor<float> x = one_hot_batch(sequences, s, b);
        Posterior<float> post = model.encode(x, false);
        nn::Var<float> probs = model.decode(post.mean, false);
        std::vector<std::string> decoded = decode_argmax_batch(probs->value);
        for (size_t i = 0; i < b; ++i) {
            hits += matching_positions(decoded[i], sequences[s + i]);
            positions += sequences[s + i].size();
        }
    }
    return positions ? static_cast<double>(hits) / static_cast<double>(positions) : 0;
}

}  // namespace dnadiff
