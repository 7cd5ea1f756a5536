// Pipeline configuration: a JSON document with schema "mfkc.config/1".
// Every key is optional except `seed`; unknown keys are rejected so typos
// fail loudly.

#pragma once

#include "mfkc/core.hpp"
#include "mfkc/da.hpp"
#include "mfkc/eval.hpp"
#include "mfkc/features.hpp"
#include "mfkc/kernels.hpp"
#include "mfkc/preprocess.hpp"
#include "mfkc/serialize.hpp"
#include "mfkc/smlmfkc.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace mfkc {

inline constexpr const char* kConfigSchema = "mfkc.config/1";

struct FeatureParams {
    Index eigenfaces_dim = 20;
    Index fisherfaces_dim = 0;  // 0: C - 1
    GridSize lbp_grid{4, 4};
    GaborParams gabor;
    WeberParams weber;
};

struct EmbeddingConfig {
    std::optional<Index> dim;  // unset: "auto"
    double eig_tol = 1e-10;
};

struct DaConfig {
    bool naive = false;  // true skips adaptation
    double C_S = 1.0;
    double C_T = 10.0;
    int sweeps = 20;
    double tol = 1e-6;
    int inner_iters = 500;
    double inner_tol = 1e-6;
    int target_samples_per_class = 3;
    std::optional<int> target_subjects;  // unset: every probe subject
};

struct EvalConfig {
    Fusion fusion = Fusion::sum_normalized;
    int k = 1;
};

struct PipelineConfig {
    std::string profile = "custom";
    std::uint64_t seed = 0;
    unsigned threads = 1;
    PreprocessParams preprocess;
    std::vector<std::string> features;
    FeatureParams feature_params;
    std::vector<KernelSpec> kernels;
    /// Chi-square kernels need nonnegative inputs; when set, a feature with
    /// negative entries is offset by its gallery minimum instead of failing.
    bool chi_square_shift = false;
    SvmOptions svm;
    MfkcOptions mfkc;
    EmbeddingConfig embedding;
    DaConfig da;
    EvalConfig eval;

    void validate() const {
        if (features.empty()) throw ParameterError("config: at least one feature is required");
        if (kernels.empty()) throw ParameterError("config: at least one kernel is required");
        std::set<std::string> seen;
        for (const auto& f : features) {
            if (!is_known_feature_tag(f)) throw ParameterError("config: unknown feature tag '" + f + "'");
            if (!seen.insert(f).second) throw ParameterError("config: feature '" + f + "' listed twice");
        }
        for (const auto& k : kernels) {
            if (k.kind == KernelKind::polynomial && k.degree < 1) throw ParameterError("config: polynomial degree < 1");
            if (k.sigma && !(*k.sigma > 0.0)) throw ParameterError("config: kernel sigma must be positive");
        }
        preprocess.validate();
        if (threads < 1) throw ParameterError("config: threads must be >= 1");
        if (!(mfkc.C > 0.0)) throw ParameterError("config: mfkc.C must be positive");
        if (embedding.dim && *embedding.dim < 1) throw ParameterError("config: embedding.dim must be >= 1");
        if (!da.naive) {
            if (!(da.C_S >= 0.0) || !(da.C_T >= 0.0) || (da.C_S == 0.0 && da.C_T == 0.0))
                throw ParameterError("config: da.C_S and da.C_T must be non-negative and not both zero");
            if (da.sweeps < 0) throw ParameterError("config: da.sweeps must be >= 0");
            if (da.target_samples_per_class < 0) throw ParameterError("config: da.target_samples_per_class must be >= 0");
            if (da.target_subjects && *da.target_subjects < 1)
                throw ParameterError("config: da.target_subjects must be >= 1");
        }
        if (eval.k < 1) throw ParameterError("config: eval.k must be >= 1");
    }

    [[nodiscard]] DaOptions da_options() const {
        DaOptions o;
        o.sweeps = da.sweeps;
        o.tol = da.tol;
        o.inner_iters = da.inner_iters;
        o.inner_tol = da.inner_tol;
        o.svm = svm;
        return o;
    }
};

namespace detail {

inline void reject_unknown_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ParameterError("config: '" + where + "' must be an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok |= key == a;
        if (!ok) throw ParameterError("config: unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void read_opt(const Json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

inline KernelSpec kernel_from_config(const Json& j) {
    KernelSpec s;
    if (j.is_string()) {
        s.kind = kernel_kind_from_string(j.get<std::string>());
        return s;
    }
    reject_unknown_keys(j, {"kind", "c", "alpha", "degree", "sigma", "rbf_squared_norm"}, "kernel");
    s.kind = kernel_kind_from_string(j.at("kind").get<std::string>());
    read_opt(j, "c", s.c);
    read_opt(j, "alpha", s.alpha);
    read_opt(j, "degree", s.degree);
    read_opt(j, "rbf_squared_norm", s.rbf_squared_norm);
    if (j.contains("sigma") && !j.at("sigma").is_null()) s.sigma = j.at("sigma").get<double>();
    return s;
}

}  // namespace detail

inline PipelineConfig config_from_json(const Json& j) {
    using detail::read_opt;
    try {
        detail::reject_unknown_keys(j,
                                    {"schema", "profile", "seed", "threads", "preprocess", "features", "feature_params",
                                     "kernels", "chi_square_shift", "svm", "mfkc", "embedding", "da", "eval"},
                                    "config");
        if (j.value("schema", std::string(kConfigSchema)) != kConfigSchema)
            throw ParameterError("config: unsupported schema '" + j.at("schema").get<std::string>() + "'");
        if (!j.contains("seed")) throw ParameterError("config: 'seed' is required");

        PipelineConfig c;
        read_opt(j, "profile", c.profile);
        c.seed = j.at("seed").get<std::uint64_t>();
        read_opt(j, "threads", c.threads);
        read_opt(j, "chi_square_shift", c.chi_square_shift);
        read_opt(j, "features", c.features);

        if (j.contains("preprocess")) {
            const Json& p = j.at("preprocess");
            detail::reject_unknown_keys(p, {"sigma", "gamma", "height", "width"}, "preprocess");
            read_opt(p, "sigma", c.preprocess.sigma);
            read_opt(p, "gamma", c.preprocess.gamma);
            read_opt(p, "height", c.preprocess.target_size.height);
            read_opt(p, "width", c.preprocess.target_size.width);
        }
        if (j.contains("feature_params")) {
            const Json& f = j.at("feature_params");
            detail::reject_unknown_keys(f, {"eigenfaces_dim", "fisherfaces_dim", "lbp_grid", "gabor", "weber"},
                                        "feature_params");
            read_opt(f, "eigenfaces_dim", c.feature_params.eigenfaces_dim);
            read_opt(f, "fisherfaces_dim", c.feature_params.fisherfaces_dim);
            if (f.contains("lbp_grid")) {
                const auto g = f.at("lbp_grid").get<std::vector<Index>>();
                if (g.size() != 2) throw ParameterError("config: lbp_grid must be [rows, cols]");
                c.feature_params.lbp_grid = {g[0], g[1]};
            }
            if (f.contains("gabor")) {
                const Json& g = f.at("gabor");
                detail::reject_unknown_keys(
                    g, {"scales", "orientations", "downsample", "k_max", "spacing", "sigma", "max_radius"}, "gabor");
                auto& gp = c.feature_params.gabor;
                read_opt(g, "scales", gp.scales);
                read_opt(g, "orientations", gp.orientations);
                read_opt(g, "downsample", gp.downsample);
                read_opt(g, "k_max", gp.k_max);
                read_opt(g, "spacing", gp.spacing);
                read_opt(g, "sigma", gp.sigma);
                read_opt(g, "max_radius", gp.max_radius);
            }
            if (f.contains("weber")) {
                const Json& w = f.at("weber");
                detail::reject_unknown_keys(w, {"alpha", "epsilon"}, "weber");
                read_opt(w, "alpha", c.feature_params.weber.alpha);
                read_opt(w, "epsilon", c.feature_params.weber.epsilon);
            }
        }
        if (j.contains("kernels"))
            for (const auto& k : j.at("kernels")) c.kernels.push_back(detail::kernel_from_config(k));
        if (j.contains("svm")) {
            const Json& s = j.at("svm");
            detail::reject_unknown_keys(s, {"tol", "max_iter"}, "svm");
            read_opt(s, "tol", c.svm.tol);
            read_opt(s, "max_iter", c.svm.max_iter);
        }
        c.mfkc.svm = c.svm;
        if (j.contains("mfkc")) {
            const Json& m = j.at("mfkc");
            detail::reject_unknown_keys(m, {"C", "tol", "max_sweeps", "max_backtracks"}, "mfkc");
            read_opt(m, "C", c.mfkc.C);
            read_opt(m, "tol", c.mfkc.tol);
            read_opt(m, "max_sweeps", c.mfkc.max_sweeps);
            read_opt(m, "max_backtracks", c.mfkc.max_backtracks);
        }
        c.mfkc.threads = c.threads;
        if (j.contains("embedding")) {
            const Json& e = j.at("embedding");
            detail::reject_unknown_keys(e, {"dim", "eig_tol"}, "embedding");
            if (e.contains("dim")) {
                const Json& d = e.at("dim");
                if (d.is_string()) {
                    if (d.get<std::string>() != "auto") throw ParameterError("config: embedding.dim must be 'auto' or an integer");
                } else {
                    c.embedding.dim = d.get<Index>();
                }
            }
            read_opt(e, "eig_tol", c.embedding.eig_tol);
        }
        if (j.contains("da")) {
            const Json& d = j.at("da");
            detail::reject_unknown_keys(d,
                                        {"naive", "C_S", "C_T", "sweeps", "tol", "inner_iters", "inner_tol",
                                         "target_samples_per_class", "target_subjects"},
                                        "da");
            read_opt(d, "naive", c.da.naive);
            read_opt(d, "C_S", c.da.C_S);
            read_opt(d, "C_T", c.da.C_T);
            read_opt(d, "sweeps", c.da.sweeps);
            read_opt(d, "tol", c.da.tol);
            read_opt(d, "inner_iters", c.da.inner_iters);
            read_opt(d, "inner_tol", c.da.inner_tol);
            read_opt(d, "target_samples_per_class", c.da.target_samples_per_class);
            if (d.contains("target_subjects") && !d.at("target_subjects").is_null())
                c.da.target_subjects = d.at("target_subjects").get<int>();
        }
        if (j.contains("eval")) {
            const Json& e = j.at("eval");
            detail::reject_unknown_keys(e, {"fusion", "k"}, "eval");
            if (e.contains("fusion")) c.eval.fusion = fusion_from_string(e.at("fusion").get<std::string>());
            read_opt(e, "k", c.eval.k);
        }
        c.validate();
        return c;
    } catch (const Json::exception& e) {
        throw ParameterError(std::string("config: ") + e.what());
    }
}

inline Json to_json(const PipelineConfig& c) {
    Json kernels = Json::array();
    for (const auto& k : c.kernels) kernels.push_back(to_json(k));
    const auto& g = c.feature_params.gabor;
    Json j{
        {"schema", kConfigSchema},
        {"profile", c.profile},
        {"seed", c.seed},
        {"threads", c.threads},
        {"preprocess",
         {{"sigma", c.preprocess.sigma},
          {"gamma", c.preprocess.gamma},
          {"height", c.preprocess.target_size.height},
          {"width", c.preprocess.target_size.width}}},
        {"features", c.features},
        {"feature_params",
         {{"eigenfaces_dim", c.feature_params.eigenfaces_dim},
          {"fisherfaces_dim", c.feature_params.fisherfaces_dim},
          {"lbp_grid", {c.feature_params.lbp_grid.rows, c.feature_params.lbp_grid.cols}},
          {"gabor",
           {{"scales", g.scales},
            {"orientations", g.orientations},
            {"downsample", g.downsample},
            {"k_max", g.k_max},
            {"spacing", g.spacing},
            {"sigma", g.sigma},
            {"max_radius", g.max_radius}}},
          {"weber", {{"alpha", c.feature_params.weber.alpha}, {"epsilon", c.feature_params.weber.epsilon}}}}},
        {"kernels", kernels},
        {"chi_square_shift", c.chi_square_shift},
        {"svm", {{"tol", c.svm.tol}, {"max_iter", c.svm.max_iter}}},
        {"mfkc",
         {{"C", c.mfkc.C},
          {"tol", c.mfkc.tol},
          {"max_sweeps", c.mfkc.max_sweeps},
          {"max_backtracks", c.mfkc.max_backtracks}}},
        {"embedding", {{"eig_tol", c.embedding.eig_tol}}},
        {"da",
         {{"naive", c.da.naive},
          {"C_S", c.da.C_S},
          {"C_T", c.da.C_T},
          {"sweeps", c.da.sweeps},
          {"tol", c.da.tol},
          {"inner_iters", c.da.inner_iters},
          {"inner_tol", c.da.inner_tol},
          {"target_samples_per_class", c.da.target_samples_per_class}}},
        {"eval", {{"fusion", std::string(to_string(c.eval.fusion))}, {"k", c.eval.k}}},
    };
    j["embedding"]["dim"] = c.embedding.dim ? Json(*c.embedding.dim) : Json("auto");
    j["da"]["target_subjects"] = c.da.target_subjects ? Json(*c.da.target_subjects) : Json(nullptr);
    return j;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::exception& e) {
        throw ParameterError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

}  // namespace mfkc
