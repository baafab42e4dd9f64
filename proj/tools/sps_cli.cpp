// Command-line front end: generation, descriptor extraction, redundancy
// analysis, subspace verification, and the keep-rate benchmark.
// Exit codes: 0 success, 1 verification failure, 2 usage or validation.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "sps/backbone.hpp"
#include "sps/lemma.hpp"
#include "sps/redundancy.hpp"
#include "sps/selection.hpp"
#include "sps/tensor.hpp"
#include "sps/tensor_io.hpp"
#include "sps/types.hpp"

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t seed_or_env(std::uint64_t seed, bool seed_given) {
    if (seed_given)
        return seed;
    if (const char* env = std::getenv("SPS_SEED"))
        return std::strtoull(env, nullptr, 10);
    return 0;
}

sps::MaskKind mask_from_flags(const std::string& name, double alpha) {
    if (name == "hard")
        return sps::MaskKind::hard(alpha);
    if (name == "exp2")
        return sps::MaskKind::exp2();
    if (name == "inverse")
        return sps::MaskKind::inverse();
    throw sps::ParamError("unknown mask kind: " + name);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw sps::FormatError("cannot open for writing: " + path);
    out << text;
    if (!out)
        throw sps::FormatError("write failed: " + path);
}

void emit_timing(const char* component, std::int64_t median_ns, int runs) {
    std::printf("{\"component\":\"%s\",\"median_ns\":%lld,\"runs\":%d}\n", component,
                static_cast<long long>(median_ns), runs);
}

std::int64_t median_ns(std::vector<std::int64_t> samples) {
    std::sort(samples.begin(), samples.end());
    const std::size_t n = samples.size();
    return n % 2 == 1 ? samples[n / 2] : (samples[n / 2 - 1] + samples[n / 2]) / 2;
}

// Grid factorization for --n: square grids only; reject otherwise so the
// caller states --rows/--cols explicitly.
void resolve_grid(int n, int& rows, int& cols) {
    if (rows > 0 && cols > 0) {
        if (n > 0 && rows * cols != n)
            throw sps::ParamError("--rows * --cols does not match --n");
        return;
    }
    if (n <= 0)
        throw sps::ParamError("need --n or both --rows and --cols");
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
    if (side * side != n)
        throw sps::ParamError("--n is not a perfect square; pass --rows and --cols");
    rows = side;
    cols = side;
}

struct GenFlags {
    int n = 0, rows = 0, cols = 0, d = 64, rank = 8, spiky_rows = 0;
    double noise = 0.0;
    std::string mode = "spread";
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out = "tokens.spst";
};

int cmd_gen(GenFlags& flags) {
    resolve_grid(flags.n, flags.rows, flags.cols);
    const sps::GridShape shape(flags.rows, flags.cols, flags.d);
    const sps::CoherenceMode mode =
        flags.mode == "spiky" ? sps::CoherenceMode::kSpiky : sps::CoherenceMode::kSpread;
    if (flags.mode != "spread" && flags.mode != "spiky")
        throw sps::ParamError("--mode must be spread or spiky");

    const sps::RngSeed seed{seed_or_env(flags.seed, flags.seed_given), 0};
    const sps::DescriptorMatrix x =
        sps::gen_low_rank(shape, flags.rank, flags.noise, mode, seed, flags.spiky_rows);
    sps::save_tensor(flags.out, x);

    const auto centered = sps::center(x).first;
    const sps::SvdFactors svd = sps::thin_svd(centered.data());
    const int r = std::min(flags.rank, svd.rank);
    const double mu = sps::coherence(svd.u.leftCols(r)).mu;
    std::printf("shape: %dx%dx%d (N=%d)\nrank: %d\nmu: %.6f\n", shape.h_patches, shape.w_patches,
                shape.dim, shape.n_patches(), flags.rank, mu);
    return 0;
}

struct ExtractFlags {
    std::string input, out = "descriptors.spst", indices_out;
    std::string variant = "sps", mask = "exp2";
    double rate = -1.0; // unset means full extraction
    double alpha = 1.0, r_sup = -1e4;
    int key_dim = 0, layers = 4, masked_layer = 0;
    bool no_residual = false, scale_logits = false, inspect = false;
    std::uint64_t seed = 0, stream = 0;
    bool seed_given = false;
};

sps::BackboneConfig backbone_config_from(const ExtractFlags& flags, int dim) {
    sps::BackboneConfig config;
    config.dim = dim;
    config.key_dim = flags.key_dim > 0 ? flags.key_dim : dim;
    config.layers = flags.layers;
    config.masked_layer = flags.masked_layer > 0 ? flags.masked_layer : flags.layers;
    config.suppression = flags.r_sup;
    config.residual = !flags.no_residual;
    config.scale_logits = flags.scale_logits;
    config.seed = sps::RngSeed{seed_or_env(flags.seed, flags.seed_given), 0};
    return config;
}

int cmd_extract(ExtractFlags& flags) {
    const sps::DescriptorMatrix x = sps::load_tensor(flags.input);
    const sps::GridShape& shape = x.shape();
    const sps::BackboneConfig config = backbone_config_from(flags, shape.dim);
    const sps::Backbone backbone(config);
    const sps::MaskKind mask = mask_from_flags(flags.mask, flags.alpha);
    const sps::RngSeed sample_seed{seed_or_env(flags.seed, flags.seed_given), flags.stream};

    sps::SelectParams params;
    params.rate = flags.rate < 0.0 ? 1.0 : flags.rate;
    params.mask = mask;
    if (flags.variant == "sps")
        params.variant = sps::Variant::kSps;
    else if (flags.variant == "spps")
        params.variant = sps::Variant::kSpps;
    else if (flags.variant == "mspps")
        params.variant = sps::Variant::kMspps;
    else
        throw sps::ParamError("--variant must be sps, spps, or mspps");

    const auto t0 = Clock::now();
    const sps::SelectionOutcome outcome =
        sps::select_and_build(backbone, x.data(), shape, params, sample_seed);
    const auto t1 = Clock::now();

    int zero_rows = 0;
    if (outcome.sparse) {
        const sps::SparseDescriptorTensor& sparse = *outcome.sparse;
        for (std::size_t i = 0; i < sparse.occupancy.size(); ++i)
            if (!sparse.occupancy[i])
                ++zero_rows;
        sps::save_tensor(flags.out, sps::DescriptorMatrix(shape, sparse.data));
    } else {
        const sps::Mat tokens = outcome.sequence->tokens();
        const sps::GridShape seq_shape(static_cast<int>(tokens.rows()), 1,
                                       static_cast<int>(tokens.cols()));
        sps::save_tensor(flags.out, sps::DescriptorMatrix(seq_shape, tokens));
    }
    if (!flags.indices_out.empty())
        write_text(flags.indices_out, sps::selection_to_csv(outcome.selected));

    const auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
    emit_timing("select_and_extract", ns, 1);
    if (flags.inspect)
        std::printf("selected: %d of %d, zero_rows: %d\n", outcome.selected.size(),
                    shape.n_patches(), zero_rows);
    return 0;
}

struct AnalyzeFlags {
    std::string input, out_dir = ".";
    int seed_patch = 0, upsample = 1, top_energy = 0;
    std::string normalization = "over_n";
};

int cmd_analyze(AnalyzeFlags& flags) {
    std::error_code dir_err;
    std::filesystem::create_directories(flags.out_dir, dir_err);
    if (dir_err)
        throw sps::ParamError("cannot create output directory: " + flags.out_dir);
    const sps::DescriptorMatrix raw = sps::load_tensor(flags.input);
    const sps::DescriptorMatrix f = raw.centered() ? raw : sps::center(raw).first;
    const sps::Normalization norm = flags.normalization == "over_n_minus_1"
                                        ? sps::Normalization::kOverNMinus1
                                        : sps::Normalization::kOverN;

    const sps::SpectrumReport report = sps::spectrum(sps::covariance(f, norm), norm);
    std::string csv = "m,lambda,E\n";
    char line[128];
    for (int m = 1; m <= report.size(); ++m) {
        std::snprintf(line, sizeof line, "%d,%.12g,%.6f\n", m, report.eigenvalues[m - 1],
                      report.cumulative[m - 1]);
        csv += line;
    }
    write_text(flags.out_dir + "/spectrum.csv", csv);

    const sps::PearsonResult pearson = sps::pearson_matrix(raw);
    std::string corr;
    corr.reserve(static_cast<std::size_t>(pearson.corr.size()) * 8);
    for (Eigen::Index i = 0; i < pearson.corr.rows(); ++i) {
        for (Eigen::Index j = 0; j < pearson.corr.cols(); ++j) {
            std::snprintf(line, sizeof line, "%s%.9g", j == 0 ? "" : ",", pearson.corr(i, j));
            corr += line;
        }
        corr += "\n";
    }
    write_text(flags.out_dir + "/correlation.csv", corr);

    const sps::OverlayMap overlay = sps::cosine_overlay(raw, flags.seed_patch, flags.upsample);
    const std::vector<std::uint8_t> pgm = sps::overlay_to_pgm(overlay);
    std::ofstream pgm_out(flags.out_dir + "/overlay.pgm", std::ios::binary);
    if (!pgm_out)
        throw sps::FormatError("cannot open for writing: " + flags.out_dir + "/overlay.pgm");
    pgm_out.write(reinterpret_cast<const char*>(pgm.data()),
                  static_cast<std::streamsize>(pgm.size()));

    if (flags.top_energy > 0) {
        const std::vector<int> top = sps::top_energy_subset(raw, flags.top_energy);
        const sps::Vec norms = sps::l2_row_norms(raw);
        std::string top_csv = "rank,index,norm\n";
        for (std::size_t t = 0; t < top.size(); ++t) {
            std::snprintf(line, sizeof line, "%zu,%d,%.12g\n", t, top[t], norms[top[t]]);
            top_csv += line;
        }
        write_text(flags.out_dir + "/top_energy.csv", top_csv);
        std::printf("top_energy:");
        for (int i : top)
            std::printf(" %d", i);
        std::printf("\n");
    }
    std::printf("spectrum: %d eigenvalues, E(full) = %.6f\n", report.size(),
                report.cumulative[report.size() - 1]);
    if (pearson.any_degenerate)
        std::printf("warning: degenerate rows present, correlations contain nan\n");
    return 0;
}

struct VerifyFlags {
    std::string input, out = "campaign.csv";
    int n = 512, rows = 0, cols = 0, d = 64, rank = 8, spiky_rows = 0;
    double noise = 0.0;
    std::string mode = "spread";
    double epsilon = 0.25, delta = 0.05, constant = 8.0, rank_tol = 1e-9;
    int trials = 200, m_override = 0;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

int cmd_verify(VerifyFlags& flags) {
    sps::LemmaConfig config;
    config.epsilon = flags.epsilon;
    config.delta = flags.delta;
    config.constant = flags.constant;
    config.trials = flags.trials;
    config.rank_tol = flags.rank_tol;
    config.m_override = flags.m_override;
    config.seed = sps::RngSeed{seed_or_env(flags.seed, flags.seed_given), 0};
    config.validate();

    sps::DescriptorMatrix f = [&] {
        if (!flags.input.empty()) {
            const sps::DescriptorMatrix raw = sps::load_tensor(flags.input);
            return raw.centered() ? raw : sps::center(raw).first;
        }
        resolve_grid(flags.n, flags.rows, flags.cols);
        const sps::GridShape shape(flags.rows, flags.cols, flags.d);
        const sps::CoherenceMode mode =
            flags.mode == "spiky" ? sps::CoherenceMode::kSpiky : sps::CoherenceMode::kSpread;
        if (flags.mode != "spread" && flags.mode != "spiky")
            throw sps::ParamError("--mode must be spread or spiky");
        const sps::RngSeed data_seed{config.seed.seed ^ 0xD1B54A32D192ED03ULL, 0};
        return sps::center(sps::gen_low_rank(shape, flags.rank, flags.noise, mode, data_seed,
                                             flags.spiky_rows))
            .first;
    }();

    const sps::CampaignReport report = sps::run_campaign(f, flags.rank, config);
    write_text(flags.out, sps::campaign_to_csv(report));
    std::printf("m: %d\nmu: %.6f\npass_fraction: %.4f\nmargin: %.4f\nresult: %s\n", report.m,
                report.mu, report.pass_fraction, report.margin, report.passed ? "pass" : "fail");
    return report.passed ? 0 : 1;
}

struct BenchFlags {
    std::string out = "bench.csv";
    int n = 256, rows = 0, cols = 0, d = 64, key_dim = 0, layers = 4, masked_layer = 0;
    int runs = 100, warmup = 5;
    double r_sup = -1e4;
    std::string mask = "exp2";
    double alpha = 1.0;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

int cmd_bench(BenchFlags& flags) {
    resolve_grid(flags.n, flags.rows, flags.cols);
    if (flags.runs < 1 || flags.warmup < 0)
        throw sps::ParamError("--runs must be positive and --warmup non-negative");
    const sps::GridShape shape(flags.rows, flags.cols, flags.d);
    const std::uint64_t seed = seed_or_env(flags.seed, flags.seed_given);

    const sps::DescriptorMatrix x = sps::gen_low_rank(
        shape, std::min(8, flags.d), 0.05, sps::CoherenceMode::kSpread, {seed, 0});

    sps::BackboneConfig config;
    config.dim = flags.d;
    config.key_dim = flags.key_dim > 0 ? flags.key_dim : flags.d;
    config.layers = flags.layers;
    config.masked_layer = flags.masked_layer > 0 ? flags.masked_layer : flags.layers;
    config.suppression = flags.r_sup;
    config.seed = sps::RngSeed{seed, 0};
    const sps::Backbone backbone(config);
    const sps::MaskKind mask = mask_from_flags(flags.mask, flags.alpha);

    const double rates[] = {1.0, 0.7, 0.5, 0.3};
    double medians[4] = {0, 0, 0, 0};
    double means[4] = {0, 0, 0, 0};
    for (int ri = 0; ri < 4; ++ri) {
        std::vector<std::int64_t> samples;
        samples.reserve(static_cast<std::size_t>(flags.runs));
        for (int run = 0; run < flags.warmup + flags.runs; ++run) {
            // fresh subset per run, matching the per-frame reseeding contract
            const sps::SelectionSet omega = sps::sample_fixed(
                shape.n_patches(), rates[ri],
                {seed, static_cast<std::uint64_t>(ri * (flags.warmup + flags.runs) + run)});
            const auto t0 = Clock::now();
            const sps::Mat rows = backbone.extract_subset(x.data(), shape, omega.indices, mask);
            const auto t1 = Clock::now();
            if (rows.rows() != omega.size())
                throw sps::ContractError("bench: extraction dropped rows");
            if (run >= flags.warmup)
                samples.push_back(
                    std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
        }
        medians[ri] = static_cast<double>(median_ns(samples));
        means[ri] = static_cast<double>(std::accumulate(samples.begin(), samples.end(),
                                                        std::int64_t{0})) /
                    static_cast<double>(samples.size());
    }

    std::string csv = "rate,median_ns,mean_ns,speedup_vs_rate1\n";
    char line[128];
    for (int ri = 0; ri < 4; ++ri) {
        std::snprintf(line, sizeof line, "%.1f,%.0f,%.0f,%.4f\n", rates[ri], medians[ri],
                      means[ri], medians[0] / medians[ri]);
        csv += line;
    }
    write_text(flags.out, csv);
    std::fputs(csv.c_str(), stdout);

    for (int ri = 1; ri < 4; ++ri) {
        if (!(medians[0] / medians[ri] > medians[0] / medians[ri - 1])) {
            std::fprintf(stderr, "bench: speedup not increasing from rate %.1f to %.1f\n",
                         rates[ri - 1], rates[ri]);
            return 1;
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"stochastic patch selection toolkit"};
    app.require_subcommand(1);

    GenFlags gen;
    CLI::App* cgen = app.add_subcommand("gen", "generate a low-rank token tensor");
    cgen->add_option("--n", gen.n, "patch count (perfect square)");
    cgen->add_option("--rows", gen.rows, "grid rows");
    cgen->add_option("--cols", gen.cols, "grid cols");
    cgen->add_option("--d", gen.d, "descriptor dim")->check(CLI::PositiveNumber);
    cgen->add_option("--rank", gen.rank, "target rank")->check(CLI::PositiveNumber);
    cgen->add_option("--noise", gen.noise, "additive noise sigma")->check(CLI::NonNegativeNumber);
    cgen->add_option("--mode", gen.mode, "spread | spiky");
    cgen->add_option("--spiky-rows", gen.spiky_rows, "identity block size for spiky mode");
    cgen->add_option("--seed", gen.seed, "rng seed");
    cgen->add_option("--out", gen.out, "output tensor path");

    ExtractFlags ext;
    CLI::App* cext = app.add_subcommand("extract", "extract masked patch descriptors");
    cext->add_option("--input", ext.input, "input tensor")->required();
    cext->add_option("--out", ext.out, "output tensor path");
    cext->add_option("--indices-out", ext.indices_out, "selection CSV sidecar");
    cext->add_option("--variant", ext.variant, "sps | spps | mspps");
    cext->add_option("--rate", ext.rate, "keep rate (omit for full extraction)");
    cext->add_option("--mask", ext.mask, "hard | exp2 | inverse");
    cext->add_option("--alpha", ext.alpha, "hard mask radius");
    cext->add_option("--r-sup", ext.r_sup, "suppression strength (negative)");
    cext->add_option("--key-dim", ext.key_dim, "attention key dim (default d)");
    cext->add_option("--layers", ext.layers, "backbone depth")->check(CLI::PositiveNumber);
    cext->add_option("--masked-layer", ext.masked_layer, "1-based masked layer (default last)");
    cext->add_flag("--no-residual", ext.no_residual, "disable residual connections");
    cext->add_flag("--scale-logits", ext.scale_logits, "scale logits by 1/sqrt(key dim)");
    cext->add_flag("--inspect", ext.inspect, "print selection statistics");
    cext->add_option("--seed", ext.seed, "rng seed");
    cext->add_option("--stream", ext.stream, "per-frame stream id");

    AnalyzeFlags ana;
    CLI::App* cana = app.add_subcommand("analyze", "spectrum, correlation, overlay outputs");
    cana->add_option("--input", ana.input, "input tensor")->required();
    cana->add_option("--out-dir", ana.out_dir, "output directory");
    cana->add_option("--seed-patch", ana.seed_patch, "overlay seed patch");
    cana->add_option("--upsample", ana.upsample, "overlay upsample factor")
        ->check(CLI::PositiveNumber);
    cana->add_option("--top-energy", ana.top_energy, "list k highest-energy patches");
    cana->add_option("--normalization", ana.normalization, "over_n | over_n_minus_1");

    VerifyFlags ver;
    CLI::App* cver = app.add_subcommand("verify", "subspace-preservation campaign");
    cver->add_option("--input", ver.input, "tensor to verify (default: generated)");
    cver->add_option("--out", ver.out, "campaign CSV path");
    cver->add_option("--n", ver.n, "patch count for generated data");
    cver->add_option("--rows", ver.rows, "grid rows");
    cver->add_option("--cols", ver.cols, "grid cols");
    cver->add_option("--d", ver.d, "descriptor dim")->check(CLI::PositiveNumber);
    cver->add_option("--rank", ver.rank, "target rank")->check(CLI::PositiveNumber);
    cver->add_option("--noise", ver.noise, "noise sigma")->check(CLI::NonNegativeNumber);
    cver->add_option("--mode", ver.mode, "spread | spiky");
    cver->add_option("--spiky-rows", ver.spiky_rows, "identity block size for spiky mode");
    cver->add_option("--epsilon", ver.epsilon, "distance tolerance");
    cver->add_option("--delta", ver.delta, "failure probability");
    cver->add_option("--constant", ver.constant, "bound constant");
    cver->add_option("--trials", ver.trials, "campaign size");
    cver->add_option("--rank-tol", ver.rank_tol, "relative rank tolerance");
    cver->add_option("--m", ver.m_override, "override sample count");
    cver->add_option("--seed", ver.seed, "rng seed");

    BenchFlags ben;
    CLI::App* cben = app.add_subcommand("bench", "keep-rate vs extraction-time benchmark");
    cben->add_option("--out", ben.out, "CSV path");
    cben->add_option("--n", ben.n, "patch count");
    cben->add_option("--rows", ben.rows, "grid rows");
    cben->add_option("--cols", ben.cols, "grid cols");
    cben->add_option("--d", ben.d, "descriptor dim")->check(CLI::PositiveNumber);
    cben->add_option("--key-dim", ben.key_dim, "attention key dim");
    cben->add_option("--layers", ben.layers, "backbone depth")->check(CLI::PositiveNumber);
    cben->add_option("--masked-layer", ben.masked_layer, "1-based masked layer (default last)");
    cben->add_option("--runs", ben.runs, "timed runs per rate");
    cben->add_option("--warmup", ben.warmup, "discarded warm-up runs");
    cben->add_option("--mask", ben.mask, "hard | exp2 | inverse");
    cben->add_option("--alpha", ben.alpha, "hard mask radius");
    cben->add_option("--r-sup", ben.r_sup, "suppression strength");
    cben->add_option("--seed", ben.seed, "rng seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cgen->parsed()) {
            gen.seed_given = cgen->count("--seed") > 0;
            return cmd_gen(gen);
        }
        if (cext->parsed()) {
            ext.seed_given = cext->count("--seed") > 0;
            return cmd_extract(ext);
        }
        if (cana->parsed())
            return cmd_analyze(ana);
        if (cver->parsed()) {
            ver.seed_given = cver->count("--seed") > 0;
            return cmd_verify(ver);
        }
        if (cben->parsed()) {
            ben.seed_given = cben->count("--seed") > 0;
            return cmd_bench(ben);
        }
    } catch (const sps::ParamError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const sps::FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const sps::ContractError& e) {
        std::fprintf(stderr, "internal contract violated: %s\n", e.what());
        return 1;
    }
    return 2;
}
