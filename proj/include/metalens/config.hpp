#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "metalens/alignment.hpp"
#include "metalens/diffusion.hpp"
#include "metalens/error.hpp"
#include "metalens/pyramid.hpp"
#include "metalens/sv_convolve.hpp"
#include "metalens/tone_map.hpp"

namespace metalens {

enum class PredictorKind { oracle, gaussian, fused_gaussian };

inline PredictorKind parse_predictor_kind(const std::string& s) {
    if (s == "oracle") return PredictorKind::oracle;
    if (s == "gaussian") return PredictorKind::gaussian;
    if (s == "fused-gaussian") return PredictorKind::fused_gaussian;
    fail(ErrorKind::config, "unknown predictor '" + s + "' (expected oracle, gaussian or fused-gaussian)");
}

inline const char* to_string(PredictorKind k) {
    switch (k) {
        case PredictorKind::oracle: return "oracle";
        case PredictorKind::gaussian: return "gaussian";
        case PredictorKind::fused_gaussian: return "fused-gaussian";
    }
    return "?";
}

inline Engine parse_engine(const std::string& s) {
    if (s == "direct") return Engine::direct;
    if (s == "tiled") return Engine::tiled;
    fail(ErrorKind::config, "unknown engine '" + s + "' (expected direct or tiled)");
}

inline MotionModel parse_motion_model(const std::string& s) {
    if (s == "translation") return MotionModel::translation;
    if (s == "affine") return MotionModel::affine;
    if (s == "homography") return MotionModel::homography;
    fail(ErrorKind::config, "unknown motion model '" + s + "'");
}

/// Comma- or space-separated reals.
inline std::vector<double> parse_real_list(const std::string& s) {
    std::string text = s;
    for (char& ch : text)
        if (ch == ',') ch = ' ';
    std::istringstream in(text);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            require(used == tok.size(), ErrorKind::config, "bad number '" + tok + "'");
        } catch (const std::logic_error&) {
            fail(ErrorKind::config, "bad number '" + tok + "'");
        }
    }
    return out;
}

struct PipelineConfig {
    // [pipeline-cli]
    std::filesystem::path scene;
    std::filesystem::path psf_c;
    std::filesystem::path psf_s;
    std::filesystem::path outdir = "out";
    std::filesystem::path domain;  // empty: <outdir>/domain.json
    std::filesystem::path y_c;     // empty: <outdir>/y_c.imgf
    std::filesystem::path y_s;     // empty: <outdir>/y_s.imgf
    std::filesystem::path gt;      // empty: <outdir>/gt.imgf
    double shift_x = 0.0;          // synth: color-cue misalignment in pixels
    double shift_y = 0.0;
    double tone_gamma = 1.0;       // synth: gamma applied to both measurements after the domain profile
    bool no_align = false;
    bool no_dam = false;
    bool dumps = true;

    // [forward-model]
    double noise_sigma = 0.005;
    std::uint64_t seed = 0;
    Engine engine = Engine::direct;

    // [alignment]
    AlignConfig align;

    // [predeblur]
    int k_out_c = 0;  // 0: 2 kernel_k + 1
    int k_out_s = 0;
    double lambda_scale = 200.0;

    // [fusion]
    int pyramid_levels = kDefaultPyramidLevels;
    std::vector<double> gamma_grid = default_gamma_grid();

    // [diffusion]
    int timesteps = kDefaultTimesteps;
    double eta = 0.0;
    PredictorKind predictor = PredictorKind::fused_gaussian;
    double prior_sigma = 0.0;

    std::filesystem::path domain_path() const { return domain.empty() ? outdir / "domain.json" : domain; }
    std::filesystem::path y_c_path() const { return y_c.empty() ? outdir / "y_c.imgf" : y_c; }
    std::filesystem::path y_s_path() const { return y_s.empty() ? outdir / "y_s.imgf" : y_s; }
    std::filesystem::path gt_path() const { return gt.empty() ? outdir / "gt.imgf" : gt; }

    void validate() const {
        require(noise_sigma >= 0.0, ErrorKind::config, "noise_sigma must be >= 0");
        require(tone_gamma > 0.0, ErrorKind::config, "tone_gamma must be > 0");
        require(k_out_c >= 0 && k_out_s >= 0 && (k_out_c == 0 || k_out_c % 2 == 1) &&
                    (k_out_s == 0 || k_out_s % 2 == 1),
                ErrorKind::config, "k_out must be 0 (automatic) or odd");
        require(lambda_scale > 0.0, ErrorKind::config, "lambda_scale must be > 0");
        require(pyramid_levels >= 1, ErrorKind::config, "pyramid levels must be >= 1");
        require(!gamma_grid.empty(), ErrorKind::config, "gamma grid is empty");
        for (double g : gamma_grid) require(g > 0.0, ErrorKind::config, "gamma values must be > 0");
        require(timesteps > 20, ErrorKind::config, "timesteps must exceed 20 for the default schedule");
        require(eta >= 0.0 && eta <= 1.0, ErrorKind::config, "eta must lie in [0, 1]");
        require(prior_sigma >= 0.0, ErrorKind::config, "prior_sigma must be >= 0");
        try {
            align.validate();
        } catch (const Error& e) {
            fail(ErrorKind::config, e.what());
        }
    }
};

namespace detail {

template <class T>
void read_key(const boost::property_tree::ptree& pt, const std::string& key, T& out) {
    const auto v = pt.get_optional<std::string>(key);
    if (!v) return;
    try {
        out = boost::lexical_cast<T>(*v);
    } catch (const boost::bad_lexical_cast&) {
        fail(ErrorKind::config, "bad value '" + *v + "' for " + key);
    }
}

inline void read_bool(const boost::property_tree::ptree& pt, const std::string& key, bool& out) {
    const auto v = pt.get_optional<std::string>(key);
    if (!v) return;
    if (*v == "true" || *v == "1" || *v == "yes") out = true;
    else if (*v == "false" || *v == "0" || *v == "no") out = false;
    else fail(ErrorKind::config, "bad boolean '" + *v + "' for " + key);
}

inline void read_path(const boost::property_tree::ptree& pt, const std::string& key,
                      const std::filesystem::path& base, std::filesystem::path& out) {
    const auto v = pt.get_optional<std::string>(key);
    if (!v || v->empty()) return;
    const std::filesystem::path p(*v);
    out = p.is_absolute() ? p : base / p;
}

}  // namespace detail

/// INI file with one section per module; relative paths resolve against the file's directory.
inline PipelineConfig load_config(const std::filesystem::path& path) {
    require(std::filesystem::exists(path), ErrorKind::config, "config file not found: " + path.string());
    boost::property_tree::ptree pt;
    try {
        boost::property_tree::ini_parser::read_ini(path.string(), pt);
    } catch (const boost::property_tree::ini_parser_error& e) {
        fail(ErrorKind::config, e.what());
    }
    static const std::map<std::string, std::set<std::string>> known{
        {"pipeline-cli",
         {"scene", "psf_c", "psf_s", "outdir", "domain", "y_c", "y_s", "gt", "shift_x", "shift_y", "tone_gamma",
          "no_align", "no_dam", "dumps"}},
        {"forward-model", {"noise_sigma", "seed", "engine"}},
        {"alignment", {"model", "pyramid_levels", "max_iters", "convergence_tol"}},
        {"predeblur", {"k_out_c", "k_out_s", "lambda_scale"}},
        {"fusion", {"pyramid_levels", "gamma_grid"}},
        {"diffusion", {"timesteps", "eta", "predictor", "prior_sigma"}},
    };
    for (const auto& [name, child] : pt) {
        const auto it = known.find(name);
        require(it != known.end() && !child.empty(), ErrorKind::config, "unknown section or top-level key '" + name + "'");
        for (const auto& [key, value] : child)
            require(it->second.count(key) == 1, ErrorKind::config, "unknown key '" + key + "' in [" + name + "]");
    }
    const auto base = path.parent_path();
    PipelineConfig c;

    detail::read_path(pt, "pipeline-cli.scene", base, c.scene);
    detail::read_path(pt, "pipeline-cli.psf_c", base, c.psf_c);
    detail::read_path(pt, "pipeline-cli.psf_s", base, c.psf_s);
    detail::read_path(pt, "pipeline-cli.outdir", base, c.outdir);
    detail::read_path(pt, "pipeline-cli.domain", base, c.domain);
    detail::read_path(pt, "pipeline-cli.y_c", base, c.y_c);
    detail::read_path(pt, "pipeline-cli.y_s", base, c.y_s);
    detail::read_path(pt, "pipeline-cli.gt", base, c.gt);
    detail::read_key(pt, "pipeline-cli.shift_x", c.shift_x);
    detail::read_key(pt, "pipeline-cli.shift_y", c.shift_y);
    detail::read_key(pt, "pipeline-cli.tone_gamma", c.tone_gamma);
    detail::read_bool(pt, "pipeline-cli.no_align", c.no_align);
    detail::read_bool(pt, "pipeline-cli.no_dam", c.no_dam);
    detail::read_bool(pt, "pipeline-cli.dumps", c.dumps);

    detail::read_key(pt, "forward-model.noise_sigma", c.noise_sigma);
    detail::read_key(pt, "forward-model.seed", c.seed);
    if (auto e = pt.get_optional<std::string>("forward-model.engine")) c.engine = parse_engine(*e);

    if (auto m = pt.get_optional<std::string>("alignment.model")) c.align.model = parse_motion_model(*m);
    detail::read_key(pt, "alignment.pyramid_levels", c.align.pyramid_levels);
    detail::read_key(pt, "alignment.max_iters", c.align.max_iters);
    detail::read_key(pt, "alignment.convergence_tol", c.align.convergence_tol);

    detail::read_key(pt, "predeblur.k_out_c", c.k_out_c);
    detail::read_key(pt, "predeblur.k_out_s", c.k_out_s);
    detail::read_key(pt, "predeblur.lambda_scale", c.lambda_scale);

    detail::read_key(pt, "fusion.pyramid_levels", c.pyramid_levels);
    if (auto g = pt.get_optional<std::string>("fusion.gamma_grid")) c.gamma_grid = parse_real_list(*g);

    detail::read_key(pt, "diffusion.timesteps", c.timesteps);
    detail::read_key(pt, "diffusion.eta", c.eta);
    if (auto p = pt.get_optional<std::string>("diffusion.predictor")) c.predictor = parse_predictor_kind(*p);
    detail::read_key(pt, "diffusion.prior_sigma", c.prior_sigma);
    c.validate();
    return c;
}

}  // namespace metalens
