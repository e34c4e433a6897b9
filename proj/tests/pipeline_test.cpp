#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <string>

#include "metalens/metalens.hpp"
#include "pipeline_fixture.hpp"
#include "test_support.hpp"

using namespace metalens;
namespace mt = metalens::testing;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    f << text;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(METALENS_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorKind::format;
}

}  // namespace

TEST(Config, ReadsModuleSectionsAndResolvesPaths) {
    mt::TempDir dir("cfg");
    write(dir / "run.ini",
          "[pipeline-cli]\nscene = data/scene.imgf\noutdir = /abs/out\nno_dam = true\n"
          "[forward-model]\nnoise_sigma = 0.01\nseed = 42\nengine = tiled\n"
          "[alignment]\nmodel = translation\nmax_iters = 7\n"
          "[predeblur]\nk_out_c = 31\nlambda_scale = 3.5\n"
          "[fusion]\npyramid_levels = 3\ngamma_grid = 0.5, 1, 2\n"
          "[diffusion]\ntimesteps = 50\neta = 1\npredictor = oracle\n");
    PipelineConfig c = load_config(dir / "run.ini");
    EXPECT_EQ(c.scene, dir.path() / "data/scene.imgf");
    EXPECT_EQ(c.outdir, fs::path("/abs/out"));
    EXPECT_TRUE(c.no_dam);
    EXPECT_FALSE(c.no_align);
    EXPECT_EQ(c.noise_sigma, 0.01);
    EXPECT_EQ(c.seed, 42u);
    EXPECT_EQ(c.engine, Engine::tiled);
    EXPECT_EQ(c.align.model, MotionModel::translation);
    EXPECT_EQ(c.align.max_iters, 7);
    EXPECT_EQ(c.k_out_c, 31);
    EXPECT_EQ(c.k_out_s, 0);
    EXPECT_EQ(c.lambda_scale, 3.5);
    EXPECT_EQ(c.pyramid_levels, 3);
    EXPECT_EQ(c.gamma_grid, (std::vector<double>{0.5, 1.0, 2.0}));
    EXPECT_EQ(c.timesteps, 50);
    EXPECT_EQ(c.eta, 1.0);
    EXPECT_EQ(c.predictor, PredictorKind::oracle);
    EXPECT_EQ(c.domain_path(), fs::path("/abs/out/domain.json"));
}

TEST(Config, BadInputsAreConfigErrors) {
    mt::TempDir dir("cfgbad");
    EXPECT_EQ(kind_of([&] { load_config(dir / "missing.ini"); }), ErrorKind::config);
    for (const char* text : {"[nonsense]\na = 1\n", "[forward-model]\nnoise_sigma = abc\n",
                             "[diffusion]\npredictor = unet\n", "[diffusion]\ntimesteps = 10\n",
                             "[predeblur]\nk_out_c = 8\n", "[forward-model]\nengine = gpu\n", "[fusion\n",
                             "[fusion]\nlevels = 3\n"}) {
        write(dir / "bad.ini", text);
        EXPECT_EQ(kind_of([&] { load_config(dir / "bad.ini"); }), ErrorKind::config) << text;
    }
}

TEST(Synth, DeltaPsfsWithoutNoiseReproduceTheScene) {
    mt::TempDir dir("synth_delta");
    const auto in = mt::write_standard_inputs(dir / "in", 3, true);
    PipelineConfig cfg = mt::standard_config(in, dir / "out", 3);
    cfg.noise_sigma = 0.0;
    run_synth(cfg);
    const Image gt = load_image(cfg.gt_path());
    EXPECT_EQ(gt, load_image(in.scene));
    EXPECT_EQ(load_image(cfg.y_c_path()), gt);
    const Image y_s = load_image(cfg.y_s_path());
    ASSERT_EQ(y_s.channels(), 1);
    double worst = 0.0;
    for (int y = 0; y < 128; ++y)
        for (int x = 0; x < 128; ++x) {
            const double avg = (static_cast<double>(gt.at(0, y, x)) + gt.at(1, y, x) + gt.at(2, y, x)) / 3.0;
            worst = std::max(worst, std::abs(avg - y_s.at(0, y, x)));
        }
    EXPECT_LT(worst, 1e-6);
}

TEST(Synth, FixedSeedIsByteIdentical) {
    mt::TempDir dir("synth_det");
    const auto in = mt::write_standard_inputs(dir / "in", 4);
    run_synth(mt::standard_config(in, dir / "a", 9));
    run_synth(mt::standard_config(in, dir / "b", 9));
    run_synth(mt::standard_config(in, dir / "c", 10));
    for (const char* f : {"gt.imgf", "y_c.imgf", "y_s.imgf", "domain.json", "manifest.jsonl"})
        EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
    EXPECT_NE(slurp(dir / "a" / "y_c.imgf"), slurp(dir / "c" / "y_c.imgf"));
}

TEST(Synth, ManifestDetectsTampering) {
    mt::TempDir dir("synth_tamper");
    const auto in = mt::write_standard_inputs(dir / "in", 5);
    const auto cfg = mt::standard_config(in, dir / "out", 1);
    run_synth(cfg);
    const auto records = read_manifest(cfg.outdir / "manifest.jsonl");
    ASSERT_EQ(records.size(), 4u);
    EXPECT_EQ(records[1].path, "y_c.imgf");
    EXPECT_EQ(records[1].command, "synth");
    EXPECT_EQ(records[1].sha256, sha256_file(cfg.y_c_path()));
    EXPECT_TRUE(verify_manifest(cfg.outdir / "manifest.jsonl").ok());

    std::string bytes = slurp(cfg.y_c_path());
    bytes[100] ^= 1;
    write(cfg.y_c_path(), bytes);
    const VerifyResult v = verify_manifest(cfg.outdir / "manifest.jsonl");
    EXPECT_FALSE(v.ok());
    ASSERT_EQ(v.mismatches.size(), 1u);
    EXPECT_NE(v.mismatches[0].find("y_c.imgf"), std::string::npos);
}

TEST(Synth, MissingInputsAreConfigErrors) {
    mt::TempDir dir("synth_missing");
    const auto in = mt::write_standard_inputs(dir / "in", 6);
    auto cfg = mt::standard_config(in, dir / "out", 1);
    cfg.psf_s = dir / "nope.psfg";
    EXPECT_EQ(kind_of([&] { run_synth(cfg); }), ErrorKind::config);
}

TEST(Synth, ShiftAndToneLeaveTheDomainProfileClean) {
    mt::TempDir dir("synth_perturb");
    const auto in = mt::write_standard_inputs(dir / "in", 7);
    auto clean = mt::standard_config(in, dir / "clean", 2);
    auto shifted = clean;
    shifted.outdir = dir / "shifted";
    shifted.shift_x = 1.5;
    shifted.tone_gamma = 2.0;
    const SynthResult a = run_synth(clean);
    const SynthResult b = run_synth(shifted);
    EXPECT_EQ(slurp(clean.domain_path()), slurp(shifted.domain_path()));
    EXPECT_EQ(a.gt, b.gt);
    // y_s is only tone shifted: max(v, 0)^2
    for (std::size_t i = 0; i < a.y_s.size(); ++i) {
        const double v = std::max(a.y_s.samples()[i], 0.0f);
        ASSERT_NEAR(b.y_s.samples()[i], v * v, 1e-6);
    }
}

TEST(Encoders, StructureResidualVanishesForConsistentBranches) {
    Image d_c = mt::smooth_image(64, 64, 3, 1), y_c = mt::smooth_image(64, 64, 3, 2);
    const Conditioning c =
        encode_conditions(concat_condition(d_c, y_c), concat_condition(color_average(d_c), color_average(y_c)), 4);
    ASSERT_EQ(c.f_s.size(), 4);
    for (int l = 0; l < 4; ++l) {
        EXPECT_EQ(c.f_s[l].channels(), 1);
        for (float v : c.f_s[l].samples()) ASSERT_NEAR(v, 0.0f, 1e-6);
        for (float v : c.f_c[l].samples()) ASSERT_EQ(v, 1.0f);
    }
    // fine levels come from the deblurred image, the coarsest from the raw cue
    EXPECT_EQ(c.f_z[0], d_c);
    EXPECT_EQ(c.f_z[3], build_pyramid(y_c, 4)[3]);
    EXPECT_LT(mt::max_abs_diff(collapse_pyramid(gated_fuse(c.f_z, c.f_c, c.f_s)), collapse_pyramid(c.f_z)), 1e-5);
}

TEST(Encoders, ChannelCountsAreChecked) {
    Image img = mt::smooth_image(32, 32, 3, 3);
    EXPECT_EQ(kind_of([&] { encode_conditions(img, color_average(img), 2); }), ErrorKind::shape);
}

TEST(Restore, DeltaPsfsNoiselessDoNotDegrade) {
    mt::TempDir dir("restore_delta");
    const auto in = mt::write_standard_inputs(dir / "in", 8, true);
    auto cfg = mt::standard_config(in, dir / "out", 4);
    cfg.noise_sigma = 0.0;
    cfg.lambda_scale = 1.0;
    cfg.predictor = PredictorKind::gaussian;
    cfg.timesteps = 50;
    const SynthResult s = run_synth(cfg);
    const RestoreResult r = run_restore(cfg);
    const double base = psnr(s.y_c, s.gt), ours = psnr(r.restored, s.gt);
    RecordProperty("psnr_y_c", std::to_string(base));
    RecordProperty("psnr_restored", std::to_string(ours));
    EXPECT_GE(ours, base - 0.1);
}

TEST(Restore, MildBlurGainsThreeDb) {
    mt::TempDir dir("restore_mild");
    const auto in = mt::write_standard_inputs(dir / "in", 1);
    const auto cfg = mt::standard_config(in, dir / "out", 1);
    const SynthResult s = run_synth(cfg);
    const RestoreResult r = run_restore(cfg);
    const double base = psnr(s.y_c, s.gt), ours = psnr(r.restored, s.gt);
    RecordProperty("gain_db", std::to_string(ours - base));
    EXPECT_GE(ours, base + 3.0);
}

TEST(Restore, AlignmentHelpsOnMisalignedInputs) {
    mt::TempDir dir("restore_shift");
    const auto in = mt::write_standard_inputs(dir / "in", 2);
    auto cfg = mt::standard_config(in, dir / "out", 2);
    cfg.shift_x = 1.5;
    const SynthResult s = run_synth(cfg);
    const double full = psnr(run_restore(cfg).restored, s.gt);
    cfg.no_align = true;
    const double ablated = psnr(run_restore(cfg).restored, s.gt);
    RecordProperty("full_db", std::to_string(full));
    RecordProperty("no_align_db", std::to_string(ablated));
    EXPECT_GT(full, ablated);
}

TEST(Restore, ToneMappingHelpsOnToneShiftedInputs) {
    mt::TempDir dir("restore_tone");
    const auto in = mt::write_standard_inputs(dir / "in", 3);
    auto cfg = mt::standard_config(in, dir / "out", 3);
    cfg.tone_gamma = 2.0;
    const SynthResult s = run_synth(cfg);
    const RestoreResult full = run_restore(cfg);
    for (const auto& t : full.tone_c.channels) EXPECT_EQ(t.gamma, 0.5);
    cfg.no_dam = true;
    const double ablated = psnr(run_restore(cfg).restored, s.gt);
    EXPECT_GT(psnr(full.restored, s.gt), ablated);
}

TEST(Restore, ResumeFromDumpsReproducesOutput) {
    mt::TempDir dir("restore_resume");
    const auto in = mt::write_standard_inputs(dir / "in", 4);
    auto cfg = mt::standard_config(in, dir / "out", 5);
    cfg.timesteps = 50;
    cfg.eta = 1.0;
    run_synth(cfg);
    const Image first = run_restore(cfg).restored;
    const Image again = run_restore(cfg, true).restored;
    EXPECT_LT(mt::max_abs_diff(first, again), 1e-6);
    EXPECT_EQ(load_image(cfg.outdir / "restored.imgf"), again);
    for (const char* f : {"y_c_dam.imgf", "y_s_dam.imgf", "y_c_aligned.imgf", "pred_c.imgf", "pred_s.imgf",
                          "baseline.imgf", "mu.imgf", "tone.json", "transform.json"})
        EXPECT_TRUE(fs::exists(cfg.outdir / "dumps" / f)) << f;
    EXPECT_TRUE(verify_manifest(cfg.outdir / "manifest.jsonl").ok());
}

TEST(Restore, FixedSeedIsByteIdentical) {
    mt::TempDir dir("restore_det");
    const auto in = mt::write_standard_inputs(dir / "in", 5);
    auto a = mt::standard_config(in, dir / "a", 6);
    auto b = mt::standard_config(in, dir / "b", 6);
    a.eta = b.eta = 1.0;
    a.timesteps = b.timesteps = 100;
    run_synth(a);
    run_synth(b);
    run_restore(a);
    run_restore(b);
    EXPECT_EQ(slurp(a.outdir / "restored.imgf"), slurp(b.outdir / "restored.imgf"));
    EXPECT_EQ(slurp(a.outdir / "manifest.jsonl"), slurp(b.outdir / "manifest.jsonl"));
}

TEST(Restore, PredictorsAgreeWithTheFusionBaseline) {
    mt::TempDir dir("restore_pred");
    const auto in = mt::write_standard_inputs(dir / "in", 6);
    auto cfg = mt::standard_config(in, dir / "out", 7);
    cfg.timesteps = 50;
    run_synth(cfg);
    cfg.predictor = PredictorKind::oracle;
    const RestoreResult oracle = run_restore(cfg);
    EXPECT_LT(mt::max_abs_diff(oracle.restored, oracle.baseline), 1e-5);
    cfg.predictor = PredictorKind::gaussian;
    const RestoreResult gauss = run_restore(cfg);
    EXPECT_LT(mt::max_abs_diff(gauss.restored, gauss.baseline), 1e-5);
    // fused: mu + g / sqrt(abar_0) against mu + g
    cfg.predictor = PredictorKind::fused_gaussian;
    const RestoreResult fused = run_restore(cfg);
    const double abar0 = default_schedule(50).abar[0];
    Image expected = fused.mu;
    for (std::size_t i = 0; i < expected.size(); ++i)
        expected.samples()[i] += static_cast<float>((fused.baseline.samples()[i] - fused.mu.samples()[i]) / std::sqrt(abar0));
    EXPECT_LT(mt::max_abs_diff(fused.restored, expected), 1e-4);
}

TEST(Restore, AblationFlagsSkipStages) {
    mt::TempDir dir("restore_skip");
    const auto in = mt::write_standard_inputs(dir / "in", 7);
    auto cfg = mt::standard_config(in, dir / "out", 8);
    cfg.timesteps = 50;
    cfg.no_align = cfg.no_dam = true;
    run_synth(cfg);
    fs::remove(cfg.domain_path());
    const RestoreResult r = run_restore(cfg);
    EXPECT_EQ(r.y_c_aligned, load_image(cfg.y_c_path()));
    EXPECT_EQ(r.y_s_dam, load_image(cfg.y_s_path()));
    const auto j = nlohmann::json::parse(slurp(cfg.outdir / "dumps" / "transform.json"));
    EXPECT_TRUE(j.at("skipped").get<bool>());
}

TEST(Restore, StageErrorsNameTheStage) {
    mt::TempDir dir("restore_stage");
    const auto in = mt::write_standard_inputs(dir / "in", 8);
    auto cfg = mt::standard_config(in, dir / "out", 9);
    run_synth(cfg);
    PsfSpec small = mt::standard_color_psf();
    small.layout.image_w = small.layout.image_h = 64;
    save_psf_grid(make_psf_grid(small), dir / "small.psfg");
    cfg.psf_c = dir / "small.psfg";
    try {
        run_restore(cfg);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::shape);
        EXPECT_NE(std::string(e.what()).find("stage predeblur"), std::string::npos) << e.what();
    }
}

TEST(Restore, NonConvergedAlignmentIsAManifestWarning) {
    mt::TempDir dir("restore_warn");
    const auto in = mt::write_standard_inputs(dir / "in", 9);
    auto cfg = mt::standard_config(in, dir / "out", 10);
    cfg.timesteps = 50;
    cfg.shift_x = 1.5;
    run_synth(cfg);
    cfg.align.max_iters = 1;
    cfg.align.pyramid_levels = 1;
    const RestoreResult r = run_restore(cfg);
    ASSERT_EQ(r.warnings.size(), 1u);
    bool found = false;
    for (const auto& rec : read_manifest(cfg.outdir / "manifest.jsonl"))
        if (rec.path == "restored.imgf") found = rec.warnings == r.warnings;
    EXPECT_TRUE(found);
}

TEST(Eval, RowsPlusMean) {
    mt::TempDir dir("eval");
    Image gt = mt::smooth_image(32, 32, 3, 1);
    Image a = gt, b = gt;
    for (float& v : a.samples()) v += 0.1f;
    for (float& v : b.samples()) v -= 0.01f;
    save_image(gt, dir / "gt.imgf");
    save_image(a, dir / "a.imgf");
    save_image(b, dir / "b.imgf");
    const auto rows = run_eval({{"a", dir / "a.imgf", dir / "gt.imgf"}, {"b", dir / "b.imgf", dir / "gt.imgf"}},
                               dir / "r.csv");
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_NEAR(rows[0].psnr_db, 20.0, 1e-4);
    EXPECT_NEAR(rows[1].psnr_db, 40.0, 1e-3);
    EXPECT_EQ(rows[2].name, "mean");
    EXPECT_NEAR(rows[2].psnr_db, 30.0, 1e-3);
    EXPECT_NEAR(rows[2].mse, (0.01 + 0.0001) / 2, 1e-7);
    EXPECT_EQ(read_report(dir / "r.csv").size(), 3u);
    EXPECT_EQ(kind_of([&] { run_eval({{"x", dir / "missing.imgf", dir / "gt.imgf"}}, dir / "r2.csv"); }),
              ErrorKind::config);
}

TEST(Cli, ExitCodes) {
    mt::TempDir dir("cli");
    const auto in = mt::write_standard_inputs(dir / "in", 10);
    const std::string out = (dir / "out").string();
    const std::string psfs = " --psf-c " + in.psf_c.string() + " --psf-s " + in.psf_s.string();
    EXPECT_EQ(run_cli("synth --scene " + in.scene.string() + psfs + " --outdir " + out), 0);
    EXPECT_EQ(run_cli("verify-manifest --outdir " + out), 0);
    EXPECT_EQ(run_cli("restore" + psfs + " --outdir " + out + " --timesteps 50"), 0);
    EXPECT_EQ(run_cli("eval --outdir " + out), 0);
    EXPECT_TRUE(fs::exists(dir / "out" / "report.csv"));

    EXPECT_EQ(run_cli(""), 2);
    EXPECT_EQ(run_cli("restore --bogus-flag"), 2);
    EXPECT_EQ(run_cli("restore --config " + (dir / "none.ini").string()), 2);
    EXPECT_EQ(run_cli("restore" + psfs + " --outdir " + out + " --eta 2"), 2);
    EXPECT_EQ(run_cli("make-psf --kind sphere --out " + (dir / "x.psfg").string()), 2);

    // shape error: PSF grid for another image size
    PsfSpec small = mt::standard_color_psf();
    small.layout.image_w = small.layout.image_h = 64;
    save_psf_grid(make_psf_grid(small), dir / "small.psfg");
    EXPECT_EQ(run_cli("restore --psf-c " + (dir / "small.psfg").string() + " --psf-s " + in.psf_s.string() +
                      " --outdir " + out),
              3);

    // numeric error: a non-finite sample in the measurement
    std::string bytes = slurp(dir / "out" / "y_s.imgf");
    const unsigned char nan_le[4] = {0x00, 0x00, 0xc0, 0x7f};
    std::copy(nan_le, nan_le + 4, bytes.begin() + 16);
    write(dir / "out" / "y_s.imgf", bytes);
    EXPECT_EQ(run_cli("restore" + psfs + " --outdir " + out), 4);

    std::string y_c = slurp(dir / "out" / "y_c.imgf");
    y_c[200] ^= 1;
    write(dir / "out" / "y_c.imgf", y_c);
    EXPECT_EQ(run_cli("verify-manifest --outdir " + out), 3);
}
