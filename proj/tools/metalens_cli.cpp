#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "metalens/metalens.hpp"

using namespace metalens;

namespace {

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::config:
        case ErrorKind::parameter: return 2;
        case ErrorKind::numeric: return 4;
        default: return 3;
    }
}

struct GlobalFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string engine;
    std::string outdir;
    bool no_align = false;
    bool no_dam = false;
};

struct Overrides {
    std::string scene, psf_c, psf_s, y_c, y_s, gt, domain;
    std::optional<double> noise_sigma, shift_x, shift_y, tone_gamma;
    std::optional<double> lambda_scale, eta, prior_sigma;
    std::optional<int> timesteps;
    std::string predictor;
    bool no_dumps = false;
};

PipelineConfig resolve(const GlobalFlags& g, const Overrides& o) {
    PipelineConfig c = g.config.empty() ? PipelineConfig{} : load_config(g.config);
    if (g.seed) c.seed = *g.seed;
    if (!g.engine.empty()) c.engine = parse_engine(g.engine);
    if (!g.outdir.empty()) c.outdir = g.outdir;
    c.no_align = c.no_align || g.no_align;
    c.no_dam = c.no_dam || g.no_dam;
    auto set_path = [](std::filesystem::path& dst, const std::string& v) {
        if (!v.empty()) dst = v;
    };
    set_path(c.scene, o.scene);
    set_path(c.psf_c, o.psf_c);
    set_path(c.psf_s, o.psf_s);
    set_path(c.y_c, o.y_c);
    set_path(c.y_s, o.y_s);
    set_path(c.gt, o.gt);
    set_path(c.domain, o.domain);
    if (o.noise_sigma) c.noise_sigma = *o.noise_sigma;
    if (o.shift_x) c.shift_x = *o.shift_x;
    if (o.shift_y) c.shift_y = *o.shift_y;
    if (o.tone_gamma) c.tone_gamma = *o.tone_gamma;
    if (o.lambda_scale) c.lambda_scale = *o.lambda_scale;
    if (o.eta) c.eta = *o.eta;
    if (o.prior_sigma) c.prior_sigma = *o.prior_sigma;
    if (o.timesteps) c.timesteps = *o.timesteps;
    if (!o.predictor.empty()) c.predictor = parse_predictor_kind(o.predictor);
    if (o.no_dumps) c.dumps = false;
    c.validate();
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Restoration toolkit for dual-measurement metalens imaging"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalFlags g;
    Overrides o;
    app.add_option("--config", g.config, "INI config file");
    app.add_option("--seed", g.seed, "RNG seed");
    app.add_option("--engine", g.engine, "convolution engine: direct or tiled");
    app.add_option("--outdir", g.outdir, "output directory");
    app.add_flag("--no-align", g.no_align, "skip color-to-structure alignment");
    app.add_flag("--no-dam", g.no_dam, "skip tone mapping");

    auto* synth = app.add_subcommand("synth", "simulate both measurements from a scene and two PSF grids");
    synth->add_option("--scene", o.scene);
    synth->add_option("--psf-c", o.psf_c);
    synth->add_option("--psf-s", o.psf_s);
    synth->add_option("--noise-sigma", o.noise_sigma);
    synth->add_option("--shift-x", o.shift_x, "color cue misalignment in pixels");
    synth->add_option("--shift-y", o.shift_y);
    synth->add_option("--tone-gamma", o.tone_gamma, "gamma applied to both measurements");

    PsfSpec psf;
    std::string psf_kind = "gaussian-ramp";
    std::string psf_out;
    auto* make_psf = app.add_subcommand("make-psf", "write a synthetic PSF grid");
    make_psf->add_option("--kind", psf_kind, "gaussian-ramp, astigmatic-ramp or delta");
    make_psf->add_option("--grid-h", psf.layout.grid_h);
    make_psf->add_option("--grid-w", psf.layout.grid_w);
    make_psf->add_option("--kernel-k", psf.layout.kernel_k);
    make_psf->add_option("--channels", psf.layout.channels);
    make_psf->add_option("--width", psf.layout.image_w);
    make_psf->add_option("--height", psf.layout.image_h);
    make_psf->add_option("--sigma-center", psf.sigma_center);
    make_psf->add_option("--sigma-edge", psf.sigma_edge);
    make_psf->add_option("--anisotropy", psf.anisotropy);
    make_psf->add_option("--out", psf_out)->required();

    int scene_w = 128, scene_h = 128;
    std::string scene_out;
    auto* make_scene_cmd = app.add_subcommand("make-scene", "write the procedural test scene");
    make_scene_cmd->add_option("--width", scene_w);
    make_scene_cmd->add_option("--height", scene_h);
    make_scene_cmd->add_option("--out", scene_out)->required();

    bool resume = false;
    auto* restore_cmd = app.add_subcommand("restore", "run the restoration pipeline");
    restore_cmd->add_option("--y-c", o.y_c);
    restore_cmd->add_option("--y-s", o.y_s);
    restore_cmd->add_option("--psf-c", o.psf_c);
    restore_cmd->add_option("--psf-s", o.psf_s);
    restore_cmd->add_option("--domain", o.domain, "domain profile for tone mapping");
    restore_cmd->add_option("--noise-sigma", o.noise_sigma);
    restore_cmd->add_option("--lambda-scale", o.lambda_scale);
    restore_cmd->add_option("--predictor", o.predictor, "oracle, gaussian or fused-gaussian");
    restore_cmd->add_option("--timesteps", o.timesteps);
    restore_cmd->add_option("--eta", o.eta);
    restore_cmd->add_option("--prior-sigma", o.prior_sigma);
    restore_cmd->add_flag("--resume", resume, "rerun the final stages from stage dumps");
    restore_cmd->add_flag("--no-dumps", o.no_dumps);

    std::vector<std::vector<std::string>> pairs;
    std::string report_out;
    auto* eval = app.add_subcommand("eval", "PSNR/SSIM/MSE report");
    eval->add_option("--pair", pairs, "NAME RESTORED GT (repeatable)")->expected(3)->allow_extra_args(false);
    eval->add_option("--gt", o.gt);
    eval->add_option("--out", report_out, "CSV path (default <outdir>/report.csv)");

    std::string manifest_path;
    auto* verify = app.add_subcommand("verify-manifest", "re-hash every artifact in a manifest");
    verify->add_option("manifest", manifest_path, "default <outdir>/manifest.jsonl");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*make_psf) {
            psf.kind = parse_psf_kind(psf_kind);
            run_make_psf(psf, psf_out);
            std::cout << "wrote " << psf_out << "\n";
            return 0;
        }
        if (*make_scene_cmd) {
            run_make_scene(scene_w, scene_h, g.seed.value_or(0), scene_out);
            std::cout << "wrote " << scene_out << "\n";
            return 0;
        }
        const PipelineConfig cfg = resolve(g, o);
        if (*synth) {
            run_synth(cfg);
            std::cout << "wrote gt, y_c, y_s and domain profile to " << cfg.outdir.string() << "\n";
        } else if (*restore_cmd) {
            const RestoreResult r = run_restore(cfg, resume);
            for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
            std::cout << "wrote " << (cfg.outdir / "restored.imgf").string() << "\n";
            if (std::filesystem::exists(cfg.gt_path())) {
                const Image gt = load_image(cfg.gt_path());
                if (gt.same_shape(r.restored)) std::printf("psnr_db %.4f\n", psnr(r.restored, gt));
            }
        } else if (*eval) {
            std::vector<EvalPair> list;
            for (const auto& p : pairs) list.push_back({p.at(0), p.at(1), p.at(2)});
            if (list.empty()) list.push_back({"restored", cfg.outdir / "restored.imgf", cfg.gt_path()});
            const auto out = report_out.empty() ? cfg.outdir / "report.csv" : std::filesystem::path(report_out);
            std::cout << format_report(run_eval(list, out));
        } else if (*verify) {
            const auto path = manifest_path.empty() ? cfg.outdir / "manifest.jsonl" : std::filesystem::path(manifest_path);
            const VerifyResult v = verify_manifest(path);
            for (const auto& m : v.mismatches) std::cerr << m << "\n";
            std::cout << (v.ok() ? "ok" : "FAILED") << ": " << v.checked << " records, " << v.mismatches.size()
                      << " mismatches\n";
            return v.ok() ? 0 : 3;
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << "metalens: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "metalens: i/o error: " << e.what() << "\n";
        return 3;
    }
}
