// dnadiff: operator surface for the discrete-sequence latent-diffusion
// pipeline.  One pipeline stage per invocation:
//   ingest -> train-vae -> encode-latents -> train-diff -> generate -> eval-*
// Every artifact-producing run writes a .manifest (config snapshot, seed,
// input/output digests, wall time) next to its primary output.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dnadiff/datapipe.hpp"
#include "dnadiff/diffusion.hpp"
#include "dnadiff/fred.hpp"
#include "dnadiff/matrixfile.hpp"
#include "dnadiff/metrics.hpp"
#include "dnadiff/motif.hpp"
#include "dnadiff/runconfig.hpp"
#include "dnadiff/seqcodec.hpp"
#include "dnadiff/svgplot.hpp"
#include "dnadiff/vae.hpp"

namespace fs = std::filesystem;
using namespace dnadiff;

namespace {

struct UsageFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct WallTimer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

void require_file(const std::string& path) {
    if (!fs::exists(path)) throw IoError("missing input file '" + path + "'");
}

void check_overwrite(const std::string& path, bool force) {
    if (path.empty()) return;
    if (!force && fs::exists(path))
        throw UsageFailure("refusing to overwrite existing '" + path + "' (pass --force)");
}

void write_text_file(const std::string& path, const std::string& text) {
    fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os << text;
}

std::string read_text_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Sidecars are read verbatim: environment overrides apply only to --config.
RunConfig load_sidecar(const std::string& artifact_path) {
    const std::string side = artifact_path + ".config";
    if (!fs::exists(side)) return RunConfig();
    return RunConfig::from_string(read_text_file(side));
}

// Per-command shared flags.
struct Common {
    std::string config_path;
    int64_t seed = -1;  // <0: take run.seed from the config (default 1)
    bool force = false;

    RunConfig config() const {
        if (config_path.empty()) {
            RunConfig rc;
            rc.apply_env_overrides();
            return rc;
        }
        require_file(config_path);
        return RunConfig::from_file(config_path);
    }
    uint64_t effective_seed(const RunConfig& rc) const {
        if (seed >= 0) return static_cast<uint64_t>(seed);
        return static_cast<uint64_t>(rc.get_i64("run.seed", 1));
    }
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config_path, "key=value config file (DDK_* env vars override)");
    sub->add_option("--seed", c.seed, "random seed (overrides run.seed)");
    sub->add_flag("--force", c.force, "overwrite existing outputs");
}

std::vector<std::string> fasta_sequences(const std::string& path) {
    require_file(path);
    std::vector<FastaRecord> recs = parse_fasta_file(path);
    std::vector<std::string> out;
    out.reserve(recs.size());
    for (auto& r : recs) out.push_back(std::move(r.seq));
    return out;
}

VaeConfig vae_config_for(const std::string& ckpt_path, const RunConfig& rc) {
    VaeConfig cfg = vae_config_from(load_sidecar(ckpt_path), VaeConfig::desk());
    return vae_config_from(rc, cfg);
}

Eigen::MatrixXd load_matrix_d(const std::string& path) {
    require_file(path);
    return load_matrix_any(path).cast<double>();
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

struct IngestArgs {
    Common common;
    std::vector<std::string> fasta, meta, species;
    int64_t window = 0;
    double val_fraction = -1;
    std::string output;
};

void run_ingest(const IngestArgs& a) {
    WallTimer timer;
    RunConfig rc = a.common.config();
    const uint64_t seed = a.common.effective_seed(rc);
    const int64_t window = a.window > 0 ? a.window : rc.get_i64("data.window_length", 2048);
    const double frac =
        a.val_fraction >= 0 ? a.val_fraction : rc.get_f64("data.val_fraction", 0.1);
    for (const auto& p : a.fasta) require_file(p);
    for (const auto& p : a.meta) require_file(p);
    check_overwrite(a.output, a.common.force);

    IngestReport report;
    DatasetTable table = ingest(a.fasta, a.meta, window, &report);
    if (!a.species.empty()) table = filter_species(table, a.species);
    split_table(table, frac, seed);
    persist_table(table, a.output);

    std::cout << "parsed=" << report.parsed << " kept=" << table.records.size()
              << " duplicates=" << report.dropped_duplicates
              << " out_of_bounds=" << report.skipped_bounds
              << " metadata_rows=" << report.metadata_rows
              << " validation=" << table.indices_of(Split::Validation).size() << "\n";
    for (const auto& w : report.warnings) std::cout << "warning: " << w << "\n";

    std::vector<std::string> inputs = a.fasta;
    inputs.insert(inputs.end(), a.meta.begin(), a.meta.end());
    write_manifest(a.output + ".manifest", "ingest", rc, seed, inputs, {a.output},
                   timer.seconds());
}

// ---------------------------------------------------------------------------
// train-vae
// ---------------------------------------------------------------------------

struct TrainVaeArgs {
    Common common;
    std::string table, output, log_csv, stamp_dir;
    int64_t epochs = 0, stamp_every = -1, warmup_epochs = -1;
    double stop_accuracy = -1;
    bool cosine = false;
    bool quiet = false;
};

void run_train_vae(const TrainVaeArgs& a) {
    WallTimer timer;
    RunConfig rc = a.common.config();
    const uint64_t seed = a.common.effective_seed(rc);
    require_file(a.table);
    check_overwrite(a.output, a.common.force);
    if (!a.log_csv.empty()) check_overwrite(a.log_csv, a.common.force);

    DatasetTable table = load_table(a.table);
    VaeConfig cfg = vae_config_from(rc, VaeConfig::desk());
    VaeModelF model(cfg, seed);

    VaeTrainOptions opt;
    opt.epochs = a.epochs > 0 ? a.epochs : rc.get_i64("vae.epochs", 20);
    opt.seed = seed;
    opt.checkpoint_path = a.output;
    opt.log_csv_path = a.log_csv;
    opt.stamp_every = a.stamp_every >= 0 ? a.stamp_every : rc.get_i64("vae.stamp_every", 0);
    opt.stamp_dir = !a.stamp_dir.empty() ? a.stamp_dir : rc.get_str("vae.stamp_dir", "");
    opt.stop_at_val_accuracy =
        a.stop_accuracy >= 0 ? a.stop_accuracy : rc.get_f64("vae.stop_accuracy", 0.0);
    opt.warmup_epochs = a.warmup_epochs >= 0 ? a.warmup_epochs : rc.get_i64("vae.warmup_epochs", 0);
    opt.cosine_decay = a.cosine || rc.get_i64("vae.cosine_decay", 0) != 0;
    opt.verbose = !a.quiet;

    VaeTrainReport report = train_vae(model, table, opt);
    write_text_file(a.output + ".config", vae_config_text(cfg));

    std::cout << "epochs=" << report.epochs.size() << " best_epoch=" << report.best_epoch
              << " best_val_total=" << report.best_val_total
              << " final_val_accuracy=" << report.final_val_accuracy
              << " parameters=" << model.parameter_count() << "\n";
    std::vector<std::string> outputs{a.output, a.output + ".config"};
    if (!a.log_csv.empty()) outputs.push_back(a.log_csv);
    write_manifest(a.output + ".manifest", "train-vae", rc, seed, {a.table}, outputs,
                   timer.seconds());
}

// ---------------------------------------------------------------------------
// encode-latents
// ---------------------------------------------------------------------------

struct EncodeArgs {
    Common common;
    std::string table, vae_ckpt, split = "train", output;
    int64_t batch = 64;
};

void run_encode(const EncodeArgs& a) {
    WallTimer timer;
    RunConfig rc = a.common.config();
    const uint64_t seed = a.common.effective_seed(rc);
    require_file(a.table);
    require_file(a.vae_ckpt);
    check_overwrite(a.output, a.common.force);

    DatasetTable table = load_table(a.table);
    VaeConfig cfg = vae_config_for(a.vae_ckpt, rc);
    VaeModelF model(cfg, 0);
    model.load_state(load_checkpoint(a.vae_ckpt));

    std::vector<std::string> seqs;
    if (a.split == "train" || a.split == "all")
        for (size_t i : table.indices_of(Split::Train)) seqs.push_back(table.records[i].sequence);
    if (a.split == "val" || a.split == "all")
        for (size_t i : table.indices_of(Split::Validation))
            seqs.push_back(table.records[i].sequence);
    if (a.split != "train" && a.split != "val" && a.split != "all")
        throw UsageFailure("--split must be train, val, or all (got '" + a.split + "')");
    if (seqs.empty()) throw ValueError("selected split '" + a.split + "' holds no sequences");

    nn::Tensor<float> means = encode_means(model, seqs, a.batch);
    LatentStats stats = fit_latent_stats(means);

    StateDict sd = latent_stats_state(stats);
    sd.put("latents", means);
    save_checkpoint(a.output, sd);

    std::cout << "sequences=" << means.dim(0) << " latent_shape=" << means.dim(1) << "x"
              << means.dim(2) << "x" << means.dim(3) << " split=" << a.split << "\n";
    write_manifest(a.output + ".manifest", "encode-latents", rc, seed,
                   {a.table, a.vae_ckpt}, {a.output}, timer.seconds());
}

// ---------------------------------------------------------------------------
// train-diff
// ---------------------------------------------------------------------------

struct TrainDiffArgs {
    Common common;
    std::string latents, output, log_csv, stamp_dir;
    int64_t epochs = 0, batch = 0, warmup = -1, stamp_every = -1;
    double lr = 0;
    bool quiet = false;
};

void run_train_diff(const TrainDiffArgs& a) {
    WallTimer timer;
    RunConfig rc = a.common.config();
    const uint64_t seed = a.common.effective_seed(rc);
    require_file(a.latents);
    check_overwrite(a.output, a.common.force);
    if (!a.log_csv.empty()) check_overwrite(a.log_csv, a.common.force);

    StateDict latent_sd = load_checkpoint(a.latents);
    const nn::Tensor<float>& raw = latent_sd.get("latents");
    LatentStats stats = latent_sd.has("latent_stats.mean") ? latent_stats_from_state(latent_sd)
                                                           : fit_latent_stats(raw);
    nn::Tensor<float> latents = standardize(raw, stats);

    UnetConfig ucfg = unet_config_from(rc, UnetConfig::desk());
    // the latent artifact fixes the data shape unless the config pins it
    if (!rc.has("unet.channels")) ucfg.channels = raw.dim(1);
    if (!rc.has("unet.height")) ucfg.height = raw.dim(2);
    if (!rc.has("unet.width")) ucfg.width = raw.dim(3);
    ScheduleSpec spec = schedule_spec_from(rc);
    NoiseSchedule sched = build_schedule(spec);

    UnetModel model(ucfg, seed);
    DiffusionTrainOptions opt;
    opt.epochs = a.epochs > 0 ? a.epochs : rc.get_i64("diff.epochs", 50);
    opt.learning_rate = a.lr > 0 ? a.lr : rc.get_f64("diff.lr", 5e-5);
    opt.batch_size = a.batch > 0 ? a.batch : rc.get_i64("diff.batch", 256);
    opt.warmup_epochs = a.warmup >= 0 ? a.warmup : rc.get_i64("diff.warmup_epochs", 5);
    opt.seed = seed;
    opt.checkpoint_path = a.output;
    opt.log_csv_path = a.log_csv;
    opt.stamp_every = a.stamp_every >= 0 ? a.stamp_every : rc.get_i64("diff.stamp_every", 0);
    opt.stamp_dir = !a.stamp_dir.empty() ? a.stamp_dir : rc.get_str("diff.stamp_dir", "");
    opt.verbose = !a.quiet;

    DiffusionTrainReport report = train_diffusion(model, latents, sched, opt);

    // fold the standardization stats into the checkpoint so generation is
    // self-contained
    StateDict best = load_checkpoint(a.output);
    for (const auto& rec : latent_stats_state(stats).records) best.put(rec.first, rec.second);
    save_checkpoint(a.output, best);
    write_text_file(a.output + ".config", unet_config_text(ucfg) + schedule_spec_text(spec));

    std::cout << "epochs=" << report.epochs.size() << " best_epoch=" << report.best_epoch
              << " best_loss=" << report.best_loss << " parameters=" << model.parameter_count()
              << "\n";
    std::vector<std::string> outputs{a.output, a.output + ".config"};
    if (!a.log_csv.empty()) outputs.push_back(a.log_csv);
    write_manifest(a.output + ".manifest", "train-diff", rc, seed, {a.latents}, outputs,
                   timer.seconds());
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateArgs {
    Common common;
    std::string diff_ckpt, vae_ckpt, output, latents_out;
    int64_t count = 16, chain_batch = 256, decode_batch = 64;
};

void run_generate(const GenerateArgs& a) {
    WallTimer timer;
    RunConfig rc = a.common.config();
    const uint64_t seed = a.common.effective_seed(rc);
    require_file(a.diff_ckpt);
    require_file(a.vae_ckpt);
    check_overwrite(a.output, a.common.force);
    if (!a.latents_out.empty()) check_overwrite(a.latents_out, a.common.force);
    if (a.count < 0) throw UsageFailure("--count must be non-negative");

    RunConfig diff_side = load_sidecar(a.diff_ckpt);
    UnetConfig ucfg = unet_config_from(diff_side, UnetConfig::desk());
    ucfg = unet_config_from(rc, ucfg);
    ScheduleSpec spec = schedule_spec_from(rc, schedule_spec_from(diff_side));
    NoiseSchedule sched = build_schedule(spec);

    VaeConfig vcfg = vae_config_for(a.vae_ckpt, rc);
    if (vcfg.latent_channels != ucfg.channels || vcfg.latent_height != ucfg.height ||
        vcfg.latent_width != ucfg.width)
        throw ShapeError("decoder latent shape " + std::to_string(vcfg.latent_channels) + "x" +
                         std::to_string(vcfg.latent_height) + "x" +
                         std::to_string(vcfg.latent_width) +
                         " does not match the denoiser's " + std::to_string(ucfg.channels) + "x" +
                         std::to_string(ucfg.height) + "x" + std::to_string(ucfg.width));

    UnetModel model(ucfg, 0);
    StateDict diff_sd = load_checkpoint(a.diff_ckpt);
    model.load_state(diff_sd);
    LatentStats stats = latent_stats_from_state(diff_sd);

    VaeModelF vae(vcfg, 0);
    vae.load_state(load_checkpoint(a.vae_ckpt));

    std::vector<FastaRecord> records;
    if (a.count > 0) {
        nn::Tensor<float> latents =
            ddpm_sample(unet_noise_predictor(model), sched, a.count,
                        {ucfg.channels, ucfg.height, ucfg.width}, seed, &stats, a.chain_batch);
        if (!a.latents_out.empty()) {
            StateDict out_sd;
            out_sd.put("latents", latents);
            save_checkpoint(a.latents_out, out_sd);
        }
        std::vector<std::string> seqs = decode_to_sequences(vae, latents, a.decode_batch);
        for (size_t i = 0; i < seqs.size(); ++i) {
            FastaRecord r;
            std::ostringstream id;
            id << "sample_" << std::setw(6) << std::setfill('0') << i << " seed=" << seed;
            r.header = id.str();
            r.seq = seqs[i];
            records.push_back(std::move(r));
        }
    }
    write_fasta_file(a.output, records);
    std::cout << "generated=" << records.size() << " length="
              << (records.empty() ? 0 : static_cast<int64_t>(records.front().seq.size())) << "\n";

    std::vector<std::string> outputs{a.output};
    if (!a.latents_out.empty() && a.count > 0) outputs.push_back(a.latents_out);
    write_manifest(a.output + ".manifest", "generate", rc, seed, {a.diff_ckpt, a.vae_ckpt},
                   outputs, timer.seconds());
}

// ---------------------------------------------------------------------------
// eval-fred
// ---------------------------------------------------------------------------

struct EvalFredArgs {
    Common common;
    std::string set_a, set_b, encoder, output;
    int64_t batch = 64;
};

void run_eval_fred(const EvalFredArgs& a) {
    WallTimer timer;
    RunConfig rc = a.common.config();
    const uint64_t seed = a.common.effective_seed(rc);
    require_file(a.encoder);
    std::vector<std::string> sa = fasta_sequences(a.set_a);
    std::vector<std::string> sb = fasta_sequences(a.set_b);
    check_overwrite(a.output, a.common.force);

    VaeConfig cfg = vae_config_for(a.encoder, rc);
    VaeModelF model(cfg, 0);
    model.load_state(load_checkpoint(a.encoder));

    FredResult r = fred(sa, sb, model, a.batch);
    std::cout << "fred=" << r.distance << " dim=" << r.dim << " set_a=" << r.real_count
              << " set_b=" << r.generated_count << " undersized=" << (r.undersized ? 1 : 0)
              << "\n";
    if (r.undersized)
        std::cout << "warning: a set is smaller than dim+1; the Gaussian fit is noisy\n";

    if (!a.output.empty()) {
        std::ostringstream csv;
        csv << "metric,value\n";
        csv << "fred," << fmt_double(r.distance) << "\n";
        csv << "dim," << r.dim << "\n";
        csv << "set_a," << r.real_count << "\n";
        csv << "set_b," << r.generated_count << "\n";
        csv << "undersized," << (r.undersized ? 1 : 0) << "\n";
        write_text_file(a.output, csv.str());
        write_manifest(a.output + ".manifest", "eval-fred", rc, seed,
                       {a.set_a, a.set_b, a.encoder}, {a.output}, timer.seconds());
    }
}

// ---------------------------------------------------------------------------
// eval-motif
// ---------------------------------------------------------------------------

struct EvalMotifArgs {
    Common common;
    std::string real_path, generated_path, pattern = "TATAWAW", output, svg;
    int64_t bin_width = 10, tss = -1, smooth = 0;
};

void run_eval_motif(const EvalMotifArgs& a) {
    WallTimer timer;
    RunConfig rc = a.common.config();
    const uint64_t seed = a.common.effective_seed(rc);
    std::vector<std::string> real = fasta_sequences(a.real_path);
    std::vector<std::string> gen = fasta_sequences(a.generated_path);
    check_overwrite(a.output, a.common.force);
    check_overwrite(a.svg, a.common.force);
    if (real.empty()) throw ValueError("--real set is empty");

    const int64_t window = static_cast<int64_t>(real.front().size());
    const int64_t tss = a.tss >= 0 ? a.tss : window / 2;
    MotifHistogram hr = motif_histogram(real, a.pattern, a.bin_width, tss, window);
    MotifHistogram hg = motif_histogram(gen, a.pattern, a.bin_width, tss, window);
    const double tv = histogram_distance(hr, hg);

    std::cout << "pattern=" << a.pattern << " tv_distance=" << tv
              << " real_hits=" << hr.total_hits << " generated_hits=" << hg.total_hits
              << " real_modal_rel=" << (hr.modal_bin() < 0 ? 0 : hr.bin_rel_start(hr.modal_bin()))
              << " generated_modal_rel="
              << (hg.modal_bin() < 0 ? 0 : hg.bin_rel_start(hg.modal_bin())) << "\n";

    if (!a.output.empty()) {
        std::ostringstream csv;
        csv << "rel_start,real_count,generated_count";
        std::vector<double> sr, sg;
        if (a.smooth > 0) {
            sr = smooth_counts(hr.counts, a.smooth);
            sg = smooth_counts(hg.counts, a.smooth);
            csv << ",real_smooth,generated_smooth";
        }
        csv << "\n";
        for (size_t b = 0; b < hr.counts.size(); ++b) {
            csv << hr.bin_rel_start(static_cast<int64_t>(b)) << "," << hr.counts[b] << ","
                << hg.counts[b];
            if (a.smooth > 0) csv << "," << sr[b] << "," << sg[b];
            csv << "\n";
        }
        csv << "# pattern=" << a.pattern << " tv_distance=" << fmt_double(tv) << "\n";
        write_text_file(a.output, csv.str());
        write_manifest(a.output + ".manifest", "eval-motif", rc, seed,
                       {a.real_path, a.generated_path}, {a.output}, timer.seconds());
    }
    if (!a.svg.empty()) {
        std::vector<double> x;
        std::vector<double> yr, yg;
        for (size_t b = 0; b < hr.counts.size(); ++b) {
            x.push_back(static_cast<double>(hr.bin_rel_start(static_cast<int64_t>(b))));
            yr.push_back(static_cast<double>(hr.counts[b]));
            yg.push_back(static_cast<double>(hg.counts[b]));
        }
        svg_bar_chart(a.svg, "motif " + a.pattern + " positions vs TSS", x,
                      {{"real", yr}, {"generated", yg}});
    }
}

// ---------------------------------------------------------------------------
// eval-sei-hits
// ---------------------------------------------------------------------------

struct EvalSeiHitsArgs {
    Common common;
    std::string predictions, labels, output;
    double threshold = 0.9;
    int64_t top_k = 10;
};

void run_eval_sei_hits(const EvalSeiHitsArgs& a) {
    WallTimer timer;
    RunConfig rc = a.common.config();
    const uint64_t seed = a.common.effective_seed(rc);
    Eigen::MatrixXd m = load_matrix_d(a.predictions);
    check_overwrite(a.output, a.common.force);

    std::vector<std::string> labels;
    if (!a.labels.empty()) {
        require_file(a.labels);
        std::ifstream is(a.labels);
        std::string line;
        while (std::getline(is, line)) labels.push_back(line);
    }
    auto label_of = [&](int64_t p) {
        if (p < static_cast<int64_t>(labels.size())) return labels[static_cast<size_t>(p)];
        return "profile_" + std::to_string(p);
    };

    ProfileHitReport rep = sei_hits(m, a.threshold, a.top_k);
    std::cout << "sequences=" << rep.sequences << " profiles=" << rep.counts.size()
              << " threshold=" << rep.threshold << "\n";
    for (size_t i = 0; i < rep.top.size(); ++i)
        std::cout << "top" << (i + 1) << " profile=" << rep.top[i].first << " label=\""
                  << label_of(rep.top[i].first) << "\" hits=" << rep.top[i].second << "\n";

    if (!a.output.empty()) {
        std::ostringstream csv;
        csv << "profile,label,hits\n";
        for (size_t p = 0; p < rep.counts.size(); ++p)
            csv << p << "," << label_of(static_cast<int64_t>(p)) << "," << rep.counts[p] << "\n";
        write_text_file(a.output, csv.str());
        std::vector<std::string> inputs{a.predictions};
        if (!a.labels.empty()) inputs.push_back(a.labels);
        write_manifest(a.output + ".manifest", "eval-sei-hits", rc, seed, inputs, {a.output},
                       timer.seconds());
    }
}

// ---------------------------------------------------------------------------
// eval-sei-dist
// ---------------------------------------------------------------------------

struct EvalSeiDistArgs {
    Common common;
    std::string emb_a, emb_b, output;
};

void run_eval_sei_dist(const EvalSeiDistArgs& a) {
    WallTimer timer;
    RunConfig rc = a.common.config();
    const uint64_t seed = a.common.effective_seed(rc);
    Eigen::MatrixXd ma = load_matrix_d(a.emb_a);
    Eigen::MatrixXd mb = load_matrix_d(a.emb_b);
    check_overwrite(a.output, a.common.force);

    const double d = embedding_distribution_distance(ma, mb);
    std::cout << "sei_distance=" << d << " distance_kind=frechet rows_a=" << ma.rows()
              << " rows_b=" << mb.rows() << " dim=" << ma.cols() << "\n";
    if (!a.output.empty()) {
        std::ostringstream csv;
        csv << "metric,value\n";
        csv << "sei_distance," << fmt_double(d) << "\n";
        csv << "distance_kind,frechet\n";
        csv << "rows_a," << ma.rows() << "\n";
        csv << "rows_b," << mb.rows() << "\n";
        csv << "dim," << ma.cols() << "\n";
        write_text_file(a.output, csv.str());
        write_manifest(a.output + ".manifest", "eval-sei-dist", rc, seed, {a.emb_a, a.emb_b},
                       {a.output}, timer.seconds());
    }
}

// ---------------------------------------------------------------------------
// plot-data
// ---------------------------------------------------------------------------

struct PlotArgs {
    Common common;
    std::string input, kind = "line", title, output, csv_out;
};

void run_plot(const PlotArgs& a) {
    WallTimer timer;
    RunConfig rc = a.common.config();
    const uint64_t seed = a.common.effective_seed(rc);
    require_file(a.input);
    check_overwrite(a.output, a.common.force);
    if (a.kind != "line" && a.kind != "bar")
        throw UsageFailure("--kind must be line or bar (got '" + a.kind + "')");

    std::ifstream is(a.input);
    std::string line;
    if (!std::getline(is, line)) throw ParseError("'" + a.input + "': empty file, expected a CSV header");
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ss(s);
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        return cells;
    };
    std::vector<std::string> header = split(line);
    if (header.size() < 2)
        throw ParseError("'" + a.input + "': need an x column and at least one series");

    std::vector<double> x;
    std::vector<PlotSeries> series(header.size() - 1);
    for (size_t s = 0; s < series.size(); ++s) series[s].name = header[s + 1];
    int64_t row = 1;
    while (std::getline(is, line)) {
        ++row;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells = split(line);
        if (cells.size() != header.size())
            throw ParseError("'" + a.input + "' row " + std::to_string(row) + ": expected " +
                             std::to_string(header.size()) + " cells, got " +
                             std::to_string(cells.size()));
        try {
            x.push_back(std::stod(cells[0]));
            for (size_t s = 0; s < series.size(); ++s)
                series[s].y.push_back(std::stod(cells[s + 1]));
        } catch (const std::exception&) {
            throw ParseError("'" + a.input + "' row " + std::to_string(row) +
                             ": non-numeric cell");
        }
    }

    const std::string title =
        !a.title.empty() ? a.title : fs::path(a.input).stem().string();
    if (x.empty()) {
        // nothing to draw; still emit a well-formed placeholder
        write_text_file(a.output,
                        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"360\">"
                        "<text x=\"20\" y=\"40\">" + title + " (no data)</text></svg>\n");
    } else if (a.kind == "line") {
        svg_line_chart(a.output, title, x, series);
    } else {
        svg_bar_chart(a.output, title, x, series);
    }

    const std::string csv_out =
        !a.csv_out.empty() ? a.csv_out : fs::path(a.output).replace_extension(".csv").string();
    check_overwrite(csv_out, a.common.force);
    std::ostringstream csv;
    csv << header[0];
    for (size_t s = 0; s < series.size(); ++s) csv << "," << series[s].name;
    csv << "\n";
    for (size_t i = 0; i < x.size(); ++i) {
        csv << fmt_double(x[i]);
        for (size_t s = 0; s < series.size(); ++s) csv << "," << fmt_double(series[s].y[i]);
        csv << "\n";
    }
    write_text_file(csv_out, csv.str());
    std::cout << "rows=" << x.size() << " series=" << series.size() << " svg=" << a.output
              << " csv=" << csv_out << "\n";
    write_manifest(a.output + ".manifest", "plot-data", rc, seed, {a.input},
                   {a.output, csv_out}, timer.seconds());
}

int fail(int code, const std::string& kind, const std::string& message) {
    std::cerr << "error code=" << code << " kind=" << kind << " message=\"" << message << "\"\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "dnadiff: latent-diffusion pipeline for promoter-like DNA sequences.\n"
        "Stages: ingest -> train-vae -> encode-latents -> train-diff -> generate;\n"
        "evaluation: eval-fred, eval-motif, eval-sei-hits, eval-sei-dist, plot-data."};
    app.require_subcommand(1);
    app.footer(
        "Exit codes:\n"
        "  0  success\n"
        "  2  usage error (unknown flag, bad value, overwrite refused without --force)\n"
        "  3  missing or unreadable file\n"
        "  4  configuration or shape mismatch\n"
        "  5  corrupt or malformed data file\n"
        "  6  invalid numeric values or training divergence\n"
        "Config keys (vae.*, unet.*, diff.*, data.*, run.seed) come from --config;\n"
        "environment variables with the DDK_ prefix override them (DDK_VAE_EPOCHS=4).");

    IngestArgs ingest_args;
    auto* c_ingest = app.add_subcommand("ingest", "Parse FASTA (+ metadata TSV) into a dataset table");
    c_ingest->add_option("--fasta", ingest_args.fasta, "FASTA input files")->required();
    c_ingest->add_option("--meta", ingest_args.meta, "metadata TSV files");
    c_ingest->add_option("--window", ingest_args.window, "window length around the TSS");
    c_ingest->add_option("--val-fraction", ingest_args.val_fraction, "validation fraction (default 0.1)");
    c_ingest->add_option("--species", ingest_args.species, "keep only these species");
    c_ingest->add_option("--output", ingest_args.output, "table output path")->required();
    add_common(c_ingest, ingest_args.common);

    TrainVaeArgs tv_args;
    auto* c_tv = app.add_subcommand("train-vae", "Train the sequence VAE on a dataset table");
    c_tv->add_option("--table", tv_args.table, "dataset table from ingest")->required();
    c_tv->add_option("--output", tv_args.output, "checkpoint output path")->required();
    c_tv->add_option("--epochs", tv_args.epochs, "training epochs");
    c_tv->add_option("--log", tv_args.log_csv, "per-epoch CSV log path");
    c_tv->add_option("--stamp-every", tv_args.stamp_every, "epoch-stamped checkpoints every N epochs");
    c_tv->add_option("--stamp-dir", tv_args.stamp_dir, "directory for epoch stamps");
    c_tv->add_option("--stop-accuracy", tv_args.stop_accuracy, "early-stop validation accuracy");
    c_tv->add_option("--warmup-epochs", tv_args.warmup_epochs, "linear learning-rate warmup epochs");
    c_tv->add_flag("--cosine", tv_args.cosine, "cosine-decay the learning rate after warmup");
    c_tv->add_flag("--quiet", tv_args.quiet, "suppress per-epoch lines");
    add_common(c_tv, tv_args.common);

    EncodeArgs enc_args;
    auto* c_enc = app.add_subcommand("encode-latents", "Encode a table split to posterior-mean latents");
    c_enc->add_option("--table", enc_args.table, "dataset table")->required();
    c_enc->add_option("--vae", enc_args.vae_ckpt, "VAE checkpoint")->required();
    c_enc->add_option("--split", enc_args.split, "train | val | all (default train)");
    c_enc->add_option("--batch", enc_args.batch, "encoding batch size");
    c_enc->add_option("--output", enc_args.output, "latent artifact output path")->required();
    add_common(c_enc, enc_args.common);

    TrainDiffArgs td_args;
    auto* c_td = app.add_subcommand("train-diff", "Train the latent denoiser on encoded latents");
    c_td->add_option("--latents", td_args.latents, "latent artifact from encode-latents")->required();
    c_td->add_option("--output", td_args.output, "checkpoint output path")->required();
    c_td->add_option("--epochs", td_args.epochs, "training epochs");
    c_td->add_option("--batch", td_args.batch, "batch size");
    c_td->add_option("--lr", td_args.lr, "base learning rate");
    c_td->add_option("--warmup-epochs", td_args.warmup, "linear warmup epochs");
    c_td->add_option("--log", td_args.log_csv, "per-epoch CSV log path");
    c_td->add_option("--stamp-every", td_args.stamp_every, "epoch-stamped checkpoints every N epochs");
    c_td->add_option("--stamp-dir", td_args.stamp_dir, "directory for epoch stamps");
    c_td->add_flag("--quiet", td_args.quiet, "suppress per-epoch lines");
    add_common(c_td, td_args.common);

    GenerateArgs gen_args;
    auto* c_gen = app.add_subcommand("generate", "Sample latents and decode them to FASTA");
    c_gen->add_option("--diff", gen_args.diff_ckpt, "denoiser checkpoint")->required();
    c_gen->add_option("--vae", gen_args.vae_ckpt, "VAE checkpoint (decoder)")->required();
    c_gen->add_option("--count", gen_args.count, "number of sequences (default 16)");
    c_gen->add_option("--output", gen_args.output, "FASTA output path")->required();
    c_gen->add_option("--latents-out", gen_args.latents_out, "also save raw latents here");
    c_gen->add_option("--chain-batch", gen_args.chain_batch, "sampling chains per slab");
    c_gen->add_option("--decode-batch", gen_args.decode_batch, "decoding batch size");
    add_common(c_gen, gen_args.common);

    EvalFredArgs ef_args;
    auto* c_ef = app.add_subcommand("eval-fred", "Frechet distance between two sequence sets");
    c_ef->add_option("--set-a", ef_args.set_a, "first FASTA set")->required();
    c_ef->add_option("--set-b", ef_args.set_b, "second FASTA set")->required();
    c_ef->add_option("--encoder", ef_args.encoder, "reference encoder checkpoint")->required();
    c_ef->add_option("--batch", ef_args.batch, "encoding batch size");
    c_ef->add_option("--output", ef_args.output, "CSV report path");
    add_common(c_ef, ef_args.common);

    EvalMotifArgs em_args;
    auto* c_em = app.add_subcommand("eval-motif", "Compare motif position histograms of two sets");
    c_em->add_option("--real", em_args.real_path, "real-set FASTA")->required();
    c_em->add_option("--generated", em_args.generated_path, "generated-set FASTA")->required();
    c_em->add_option("--pattern", em_args.pattern, "motif (IUPAC W supported; default TATAWAW)");
    c_em->add_option("--bin-width", em_args.bin_width, "histogram bin width (default 10)");
    c_em->add_option("--tss", em_args.tss, "TSS index within each window (default centre)");
    c_em->add_option("--smooth", em_args.smooth, "moving-average window for the CSV");
    c_em->add_option("--output", em_args.output, "CSV output path");
    c_em->add_option("--svg", em_args.svg, "SVG bar chart path");
    add_common(c_em, em_args.common);

    EvalSeiHitsArgs eh_args;
    auto* c_eh = app.add_subcommand("eval-sei-hits", "Count chromatin-profile hits in a prediction matrix");
    c_eh->add_option("--predictions", eh_args.predictions, "N x P prediction matrix (DDMX or CSV)")
        ->required();
    c_eh->add_option("--threshold", eh_args.threshold, "hit threshold (default 0.9)");
    c_eh->add_option("--top", eh_args.top_k, "top-k profiles to report (default 10)");
    c_eh->add_option("--labels", eh_args.labels, "profile labels, one per column");
    c_eh->add_option("--output", eh_args.output, "CSV output path");
    add_common(c_eh, eh_args.common);

    EvalSeiDistArgs ed_args;
    auto* c_ed = app.add_subcommand("eval-sei-dist", "Distribution distance between embedding matrices");
    c_ed->add_option("--embeddings-a", ed_args.emb_a, "first embedding matrix")->required();
    c_ed->add_option("--embeddings-b", ed_args.emb_b, "second embedding matrix")->required();
    c_ed->add_option("--output", ed_args.output, "CSV report path");
    add_common(c_ed, ed_args.common);

    PlotArgs plot_args;
    auto* c_plot = app.add_subcommand("plot-data", "Render a CSV (x + series columns) to SVG");
    c_plot->add_option("--input", plot_args.input, "CSV input path")->required();
    c_plot->add_option("--kind", plot_args.kind, "line | bar (default line)");
    c_plot->add_option("--title", plot_args.title, "chart title");
    c_plot->add_option("--output", plot_args.output, "SVG output path")->required();
    c_plot->add_option("--csv-out", plot_args.csv_out, "canonical CSV emission path");
    add_common(c_plot, plot_args.common);

    c_ingest->callback([&] { run_ingest(ingest_args); });
    c_tv->callback([&] { run_train_vae(tv_args); });
    c_enc->callback([&] { run_encode(enc_args); });
    c_td->callback([&] { run_train_diff(td_args); });
    c_gen->callback([&] { run_generate(gen_args); });
    c_ef->callback([&] { run_eval_fred(ef_args); });
    c_em->callback([&] { run_eval_motif(em_args); });
    c_eh->callback([&] { run_eval_sei_hits(eh_args); });
    c_ed->callback([&] { run_eval_sei_dist(ed_args); });
    c_plot->callback([&] { run_plot(plot_args); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
        app.exit(e);  // prints CLI11's own diagnostic
        return fail(2, "usage", e.what());
    } catch (const UsageFailure& e) {
        return fail(2, "usage", e.what());
    } catch (const IoError& e) {
        return fail(3, "missing-file", e.what());
    } catch (const ShapeError& e) {
        return fail(4, "shape-mismatch", e.what());
    } catch (const dnadiff::ParseError& e) {
        return fail(5, "corrupt-data", e.what());
    } catch (const ValueError& e) {
        return fail(6, "numeric", e.what());
    } catch (const std::exception& e) {
        return fail(1, "internal", e.what());
    }
    return 0;
}
