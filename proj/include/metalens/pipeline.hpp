#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "metalens/alignment.hpp"
#include "metalens/config.hpp"
#include "metalens/diffusion.hpp"
#include "metalens/error.hpp"
#include "metalens/image.hpp"
#include "metalens/io.hpp"
#include "metalens/manifest.hpp"
#include "metalens/measurement.hpp"
#include "metalens/metrics.hpp"
#include "metalens/predeblur.hpp"
#include "metalens/psf_factory.hpp"
#include "metalens/pyramid.hpp"
#include "metalens/scene.hpp"
#include "metalens/tone_map.hpp"

namespace metalens {

namespace fs = std::filesystem;

/// Per-channel statistics of measurements in the expected (untone-shifted) domain; the DAM target.
struct DomainProfile {
    std::vector<ChannelStats> color;
    std::vector<ChannelStats> structure;
};

namespace detail {

inline nlohmann::ordered_json stats_json(const std::vector<ChannelStats>& v) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& s : v) arr.push_back({{"mean", s.mean}, {"std", s.std}, {"skewness", s.skewness}});
    return arr;
}

inline std::vector<ChannelStats> stats_from_json(const nlohmann::json& j) {
    std::vector<ChannelStats> out;
    for (const auto& e : j) out.push_back({e.at("mean").get<double>(), e.at("std").get<double>(), e.at("skewness").get<double>()});
    return out;
}

inline nlohmann::ordered_json tone_json(const ToneMapParams& p) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& t : p.channels) arr.push_back({{"gain", t.gain}, {"bias", t.bias}, {"gamma", t.gamma}});
    return arr;
}

inline void write_text(const fs::path& path, const std::string& text) {
    write_file(path, std::vector<unsigned char>(text.begin(), text.end()));
}

inline nlohmann::json read_json(const fs::path& path) {
    const auto bytes = read_file(path);
    try {
        return nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::format, path.string() + ": " + e.what());
    }
}

inline void require_file(const fs::path& path, const std::string& what) {
    require(!path.empty(), ErrorKind::config, what + " path not set");
    require(fs::is_regular_file(path), ErrorKind::config, what + " not found: " + path.string());
}

/// "<file name> sha256:<hex>": identifies an input independent of where the tree lives.
inline std::string input_ref(const fs::path& path) {
    return path.filename().string() + " sha256:" + sha256_file(path);
}

}  // namespace detail

inline void save_domain_profile(const DomainProfile& d, const fs::path& path) {
    nlohmann::ordered_json j;
    j["color"] = detail::stats_json(d.color);
    j["structure"] = detail::stats_json(d.structure);
    detail::write_text(path, j.dump(2) + "\n");
}

inline DomainProfile load_domain_profile(const fs::path& path) {
    detail::require_file(path, "domain profile");
    const auto j = detail::read_json(path);
    try {
        return {detail::stats_from_json(j.at("color")), detail::stats_from_json(j.at("structure"))};
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::format, path.string() + ": " + e.what());
    }
}

/// Rethrows library errors with the stage name in front of the message.
template <class F>
auto run_stage(const char* name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const Error& e) {
        throw Error(e.kind(), std::string("stage ") + name + ": " + e.message());
    }
}

// ---------------------------------------------------------------- synth

struct SynthResult {
    Image gt;
    Image y_c;
    Image y_s;
    DomainProfile domain;
};

/// Both measurements, then the ablation perturbations: a translation of the color cue and a
/// gamma tone shift of both images. The domain profile is taken before either perturbation.
inline SynthResult synthesize(const Image& scene, const PsfGrid& grid_c, const PsfGrid& grid_s,
                              const PipelineConfig& cfg) {
    Measurements m = synthesize_measurements(scene, grid_c, grid_s, {cfg.noise_sigma, cfg.seed}, cfg.engine);
    SynthResult r{scene, std::move(m.color_cue), std::move(m.structure), {}};
    r.domain = {channel_stats(r.y_c), channel_stats(r.y_s)};
    if (cfg.shift_x != 0.0 || cfg.shift_y != 0.0)
        r.y_c = warp(r.y_c, Transform2D::translation(cfg.shift_x, cfg.shift_y));
    if (cfg.tone_gamma != 1.0) {
        r.y_c = apply_tone_map(r.y_c, {std::vector<ChannelTone>(3, {1.0, 0.0, cfg.tone_gamma})});
        r.y_s = apply_tone_map(r.y_s, {{{1.0, 0.0, cfg.tone_gamma}}});
    }
    return r;
}

inline SynthResult run_synth(const PipelineConfig& cfg) {
    cfg.validate();
    detail::require_file(cfg.scene, "scene");
    detail::require_file(cfg.psf_c, "color PSF grid");
    detail::require_file(cfg.psf_s, "structure PSF grid");
    const Image scene = load_image(cfg.scene);
    const PsfGrid grid_c = load_psf_grid(cfg.psf_c);
    const PsfGrid grid_s = load_psf_grid(cfg.psf_s);
    SynthResult r = synthesize(scene, grid_c, grid_s, cfg);

    fs::create_directories(cfg.outdir);
    save_image(r.gt, cfg.gt_path());
    save_image(r.y_c, cfg.y_c_path());
    save_image(r.y_s, cfg.y_s_path());
    save_domain_profile(r.domain, cfg.domain_path());

    const std::vector<std::string> inputs{detail::input_ref(cfg.scene), detail::input_ref(cfg.psf_c),
                                          detail::input_ref(cfg.psf_s)};
    std::vector<ManifestRecord> records;
    for (const auto& p : {cfg.gt_path(), cfg.y_c_path(), cfg.y_s_path(), cfg.domain_path()})
        records.push_back(make_record(cfg.outdir, p, "synth", inputs, cfg.seed));
    update_manifest(cfg.outdir / "manifest.jsonl", records);
    return r;
}

// ---------------------------------------------------------------- restore

/// Encoder outputs for the fusion and sampling stages.
///
/// f_z: pyramid of the deblurred color estimate whose coarsest level comes from the raw
///      color cue (low frequencies are reliable there, the inverse filter only adds noise).
/// f_s: structure residual, per level E_struc - S(f_z), where E_struc is built the same way
///      from the structure branch. One channel; it gates every color channel.
/// f_c: unit color weights, so the gate injects the structure residual into each channel.
struct Conditioning {
    FeaturePyramid f_z;
    FeaturePyramid f_c;
    FeaturePyramid f_s;
};

inline Conditioning encode_conditions(const Image& cond_c, const Image& cond_s, int levels) {
    require(cond_c.channels() == 6 && cond_s.channels() == 2, ErrorKind::shape,
            "conditioning expects 6 color and 2 structure channels");
    require(cond_c.same_dims(cond_s), ErrorKind::shape, "conditioning images differ in size");
    Conditioning c;
    c.f_z = build_pyramid(slice_channels(cond_c, 0, 3), levels);
    FeaturePyramid struc = build_pyramid(slice_channels(cond_s, 0, 1), levels);
    const int top = levels - 1;
    c.f_z[top] = build_pyramid(slice_channels(cond_c, 3, 3), levels)[top];
    struc[top] = build_pyramid(slice_channels(cond_s, 1, 1), levels)[top];
    for (int l = 0; l < levels; ++l) {
        Image res = struc[l];
        const Image lum = color_average(c.f_z[l]);
        for (std::size_t i = 0; i < res.size(); ++i) res.samples()[i] -= lum.samples()[i];
        c.f_s.levels.push_back(std::move(res));
        c.f_c.levels.emplace_back(c.f_z[l].width(), c.f_z[l].height(), 3, 1.0f);
    }
    return c;
}

inline FeaturePyramid negated(FeaturePyramid p) {
    for (auto& l : p.levels)
        for (float& v : l.samples()) v = -v;
    return p;
}

struct RestoreResult {
    Image y_c_dam;
    Image y_s_dam;
    ToneMapParams tone_c;
    ToneMapParams tone_s;
    Image y_c_aligned;
    AlignResult alignment;
    Image pred_c;  // tilde y_c
    Image pred_s;  // tilde y_s
    Image baseline;  // collapse(gated_fuse(f_z, f_c, f_s))
    Image mu;        // prior mean handed to the diffusion predictor
    Image restored;
    std::vector<std::string> warnings;
};

/// Stages 4-7: concat, encoders and fusion, diffusion sampling. Needs the aligned and
/// deblurred images only, so dumped intermediates can re-enter here.
inline void finish_restore(RestoreResult& r, const PipelineConfig& cfg) {
    const Image cond_c = run_stage("concat", [&] { return concat_condition(r.pred_c, r.y_c_aligned); });
    const Image cond_s = run_stage("concat", [&] { return concat_condition(r.pred_s, r.y_s_dam); });
    const Conditioning cond =
        run_stage("fusion", [&] { return encode_conditions(cond_c, cond_s, cfg.pyramid_levels); });
    r.baseline = run_stage("fusion", [&] { return collapse_pyramid(gated_fuse(cond.f_z, cond.f_c, cond.f_s)); });

    r.restored = run_stage("diffusion", [&] {
        const DiffusionSchedule sched = default_schedule(cfg.timesteps);
        EpsilonPredictor pred;
        switch (cfg.predictor) {
            case PredictorKind::oracle:
                r.mu = r.baseline;
                pred = oracle_predictor(r.mu, sched);
                break;
            case PredictorKind::gaussian:
                r.mu = r.baseline;
                pred = gaussian_predictor(r.mu, cfg.prior_sigma, sched);
                break;
            case PredictorKind::fused_gaussian:
                // The base sees collapse(gated_fuse(P(z_t), f_c, -f_s)) = z_t - g, so its z0 estimate
                // is mu + g / sqrt(abar): the gated structure residual rides on the color prior.
                r.mu = collapse_pyramid(cond.f_z);
                pred = fused_predictor(gaussian_predictor(r.mu, cfg.prior_sigma, sched), cond.f_c, negated(cond.f_s));
                break;
        }
        Image out = sample(pred, cond.f_c, cond.f_s, r.mu.width(), r.mu.height(), r.mu.channels(), sched, cfg.eta,
                           derive_seed(cfg.seed, 0xD1FFu));
        out.check_finite();
        return out;
    });
}

/// Stages 1-7 on in-memory measurements. `domain` is required unless cfg.no_dam.
inline RestoreResult restore(const Image& y_c, const Image& y_s, const PsfGrid& grid_c, const PsfGrid& grid_s,
                             const DomainProfile* domain, const PipelineConfig& cfg) {
    cfg.validate();
    RestoreResult r;
    run_stage("dam", [&] {
        if (cfg.no_dam) {
            r.y_c_dam = y_c;
            r.y_s_dam = y_s;
            r.tone_c = {std::vector<ChannelTone>(static_cast<std::size_t>(y_c.channels()))};
            r.tone_s = {std::vector<ChannelTone>(static_cast<std::size_t>(y_s.channels()))};
            return;
        }
        require(domain != nullptr, ErrorKind::config, "tone mapping needs a domain profile");
        r.tone_c = fit_tone_map(y_c, domain->color, cfg.gamma_grid);
        r.tone_s = fit_tone_map(y_s, domain->structure, cfg.gamma_grid);
        r.y_c_dam = apply_tone_map(y_c, r.tone_c);
        r.y_s_dam = apply_tone_map(y_s, r.tone_s);
    });
    run_stage("align", [&] {
        if (cfg.no_align) {
            r.y_c_aligned = r.y_c_dam;
            r.alignment = {Transform2D::identity(), true, 0, 0.0};
            return;
        }
        AlignedColor a = align_color_to_structure(r.y_c_dam, r.y_s_dam, cfg.align);
        r.y_c_aligned = std::move(a.image);
        r.alignment = a.estimate;
        if (!r.alignment.converged)
            r.warnings.push_back("alignment did not converge after " + std::to_string(r.alignment.iterations) +
                                 " iterations; residual mse " + std::to_string(r.alignment.residual_mse));
    });
    run_stage("predeblur", [&] {
        r.pred_c = predeblur_image(r.y_c_aligned, grid_c, {cfg.noise_sigma, cfg.k_out_c, cfg.lambda_scale}, cfg.engine);
        r.pred_s = predeblur_image(r.y_s_dam, grid_s, {cfg.noise_sigma, cfg.k_out_s, cfg.lambda_scale}, cfg.engine);
    });
    finish_restore(r, cfg);
    return r;
}

namespace detail {

inline nlohmann::ordered_json transform_json(const AlignResult& a, bool skipped) {
    nlohmann::ordered_json j;
    j["matrix"] = a.transform.matrix();
    j["skipped"] = skipped;
    j["converged"] = a.converged;
    j["iterations"] = a.iterations;
    j["residual_mse"] = a.residual_mse;
    return j;
}

}  // namespace detail

/// Loads measurements and calibration per `cfg`, restores, writes restored.imgf, dumps and
/// manifest records. With `resume`, stages 4-7 rerun from the dumps of an earlier run.
inline RestoreResult run_restore(const PipelineConfig& cfg, bool resume = false) {
    cfg.validate();
    const fs::path dumps = cfg.outdir / "dumps";
    const fs::path manifest = cfg.outdir / "manifest.jsonl";
    RestoreResult r;
    std::vector<std::string> inputs;
    std::vector<ManifestRecord> records;
    const std::string command = resume ? "restore --resume" : "restore";

    if (resume) {
        for (const char* name : {"y_c_aligned.imgf", "y_s_dam.imgf", "pred_c.imgf", "pred_s.imgf"}) {
            detail::require_file(dumps / name, std::string("stage dump ") + name);
            inputs.push_back(detail::input_ref(dumps / name));
        }
        r.y_c_aligned = load_image(dumps / "y_c_aligned.imgf");
        r.y_s_dam = load_image(dumps / "y_s_dam.imgf");
        r.pred_c = load_image(dumps / "pred_c.imgf");
        r.pred_s = load_image(dumps / "pred_s.imgf");
        finish_restore(r, cfg);
    } else {
        detail::require_file(cfg.y_c_path(), "color cue");
        detail::require_file(cfg.y_s_path(), "structure image");
        detail::require_file(cfg.psf_c, "color PSF grid");
        detail::require_file(cfg.psf_s, "structure PSF grid");
        for (const auto& p : {cfg.y_c_path(), cfg.y_s_path(), cfg.psf_c, cfg.psf_s}) inputs.push_back(detail::input_ref(p));
        DomainProfile domain;
        if (!cfg.no_dam) {
            domain = load_domain_profile(cfg.domain_path());
            inputs.push_back(detail::input_ref(cfg.domain_path()));
        }
        const Image y_c = load_image(cfg.y_c_path());
        const Image y_s = load_image(cfg.y_s_path());
        const PsfGrid grid_c = load_psf_grid(cfg.psf_c);
        const PsfGrid grid_s = load_psf_grid(cfg.psf_s);
        r = restore(y_c, y_s, grid_c, grid_s, cfg.no_dam ? nullptr : &domain, cfg);
    }

    fs::create_directories(cfg.outdir);
    if (cfg.dumps) {
        fs::create_directories(dumps);
        std::vector<std::pair<std::string, const Image*>> images{{"baseline.imgf", &r.baseline}, {"mu.imgf", &r.mu}};
        if (!resume) {
            images.insert(images.begin(), {{"y_c_dam.imgf", &r.y_c_dam},
                                           {"y_s_dam.imgf", &r.y_s_dam},
                                           {"y_c_aligned.imgf", &r.y_c_aligned},
                                           {"pred_c.imgf", &r.pred_c},
                                           {"pred_s.imgf", &r.pred_s}});
            nlohmann::ordered_json tone;
            tone["skipped"] = cfg.no_dam;
            tone["color"] = detail::tone_json(r.tone_c);
            tone["structure"] = detail::tone_json(r.tone_s);
            detail::write_text(dumps / "tone.json", tone.dump(2) + "\n");
            detail::write_text(dumps / "transform.json", detail::transform_json(r.alignment, cfg.no_align).dump(2) + "\n");
        }
        for (const auto& [name, img] : images) save_image(*img, dumps / name);
        for (const auto& [name, img] : images) records.push_back(make_record(cfg.outdir, dumps / name, command, inputs, cfg.seed));
        if (!resume)
            for (const char* name : {"tone.json", "transform.json"})
                records.push_back(make_record(cfg.outdir, dumps / name, command, inputs, cfg.seed));
    }
    save_image(r.restored, cfg.outdir / "restored.imgf");
    records.push_back(make_record(cfg.outdir, cfg.outdir / "restored.imgf", command, inputs, cfg.seed));
    records.back().warnings = r.warnings;
    update_manifest(manifest, records);
    return r;
}

// ---------------------------------------------------------------- eval, helpers

struct EvalPair {
    std::string name;
    fs::path restored;
    fs::path gt;
};

/// One metrics row per pair plus a `mean` row.
inline std::vector<MetricRow> run_eval(const std::vector<EvalPair>& pairs, const fs::path& out_csv) {
    require(!pairs.empty(), ErrorKind::config, "eval needs at least one restored/gt pair");
    std::vector<MetricRow> rows;
    MetricRow mean{"mean", 0.0, 0.0, 0.0};
    for (const auto& p : pairs) {
        detail::require_file(p.restored, "restored image");
        detail::require_file(p.gt, "ground truth image");
        rows.push_back(evaluate_pair(p.name, load_image(p.restored), load_image(p.gt)));
        mean.psnr_db += rows.back().psnr_db;
        mean.ssim += rows.back().ssim;
        mean.mse += rows.back().mse;
    }
    const double n = static_cast<double>(pairs.size());
    mean.psnr_db /= n;
    mean.ssim /= n;
    mean.mse /= n;
    rows.push_back(mean);
    if (!out_csv.parent_path().empty()) fs::create_directories(out_csv.parent_path());
    report(rows, out_csv);
    return rows;
}

/// Writes `file` and records it in the manifest of its directory.
inline void record_artifact(const fs::path& file, const std::string& command, std::vector<std::string> inputs,
                            std::uint64_t seed) {
    const fs::path dir = file.parent_path().empty() ? fs::path(".") : file.parent_path();
    update_manifest(dir / "manifest.jsonl", {make_record(dir, file, command, std::move(inputs), seed)});
}

inline void run_make_psf(const PsfSpec& spec, const fs::path& out) {
    const PsfGrid grid = make_psf_grid(spec);
    if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
    save_psf_grid(grid, out);
    record_artifact(out, "make-psf", {}, 0);
}

inline void run_make_scene(int width, int height, std::uint64_t seed, const fs::path& out) {
    const Image scene = make_scene(width, height, seed);
    if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
    save_image(scene, out);
    record_artifact(out, "make-scene", {}, seed);
}

}  // namespace metalens
