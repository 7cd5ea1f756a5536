// Stage orchestration: preprocess -> extract -> train-mfkc -> adapt ->
// evaluate. Every stage reads its inputs from the previous stage's checkpoint
// on disk and writes its own, so rerunning from any stage equals a fresh run.
//
// Run directory layout:
//   config.json                resolved configuration
//   checkpoints/<stage>.json   schema mfkc.checkpoint/1
//   preprocessed/*.pgm         normalized images (image manifests only)
//   features/*.csv             per-feature gallery / probe vectors
//   report/{summary,cmc,roc}.csv

#pragma once

#include "mfkc/config.hpp"
#include "mfkc/da.hpp"
#include "mfkc/embed.hpp"
#include "mfkc/eval.hpp"
#include "mfkc/features.hpp"
#include "mfkc/image_io.hpp"
#include "mfkc/kernels.hpp"
#include "mfkc/manifest.hpp"
#include "mfkc/parallel.hpp"
#include "mfkc/preprocess.hpp"
#include "mfkc/serialize.hpp"
#include "mfkc/smlmfkc.hpp"
#include "mfkc/synthetic.hpp"

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mfkc {

enum class Stage { preprocess, extract, train_mfkc, adapt, evaluate };

inline constexpr std::array<Stage, 5> kStages = {Stage::preprocess, Stage::extract, Stage::train_mfkc, Stage::adapt,
                                                 Stage::evaluate};

inline std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::preprocess: return "preprocess";
        case Stage::extract: return "extract";
        case Stage::train_mfkc: return "train-mfkc";
        case Stage::adapt: return "adapt";
        case Stage::evaluate: return "evaluate";
    }
    return "unknown";
}

inline Stage stage_from_string(std::string_view s) {
    for (Stage st : kStages)
        if (to_string(st) == s) return st;
    throw ParameterError("unknown stage '" + std::string(s) + "'");
}

struct RunDir {
    std::filesystem::path root;

    [[nodiscard]] std::filesystem::path checkpoint(Stage s) const {
        return root / "checkpoints" / (std::string(to_string(s)) + ".json");
    }
    [[nodiscard]] std::filesystem::path preprocessed() const { return root / "preprocessed"; }
    [[nodiscard]] std::filesystem::path features() const { return root / "features"; }
    [[nodiscard]] std::filesystem::path report() const { return root / "report"; }
};

/// Gallery and probe vectors of one extracted feature.
struct ExtractedFeature {
    FeatureSet gallery;
    FeatureSet probe;
};

/// Kernel evaluated between `a` and `b`, cosine-normalized with each side's
/// self-similarities.
inline GramMatrix normalized_cross_gram(const Matrix& a, const Matrix& b, const KernelSpec& spec) {
    return normalize_gram(gram(a, b, spec), self_kernel(a, spec), self_kernel(b, spec));
}

namespace detail {

inline std::vector<ImageMatrix> read_images(const RunDir& run, const Json& names) {
    std::vector<ImageMatrix> out;
    for (const auto& n : names) out.push_back(read_image(run.preprocessed() / n.get<std::string>()));
    return out;
}

inline FeatureSet from_images(const std::vector<ImageMatrix>& images, const std::vector<int>& labels,
                              const std::string& tag, const std::function<Vector(const ImageMatrix&)>& fn) {
    if (images.empty()) throw InputError("feature '" + tag + "' needs image entries in the manifest");
    FeatureSet fs;
    fs.tag = tag;
    fs.labels = labels;
    const Vector first = fn(images.front());
    fs.vectors.resize(static_cast<Index>(images.size()), first.size());
    fs.vectors.row(0) = first.transpose();
    for (std::size_t i = 1; i < images.size(); ++i) fs.vectors.row(static_cast<Index>(i)) = fn(images[i]).transpose();
    return fs;
}

inline ExtractedFeature extract_native(const std::string& tag, const PipelineConfig& cfg,
                                       const std::vector<ImageMatrix>& gallery, const std::vector<ImageMatrix>& probe,
                                       const std::vector<int>& gl, const std::vector<int>& pl) {
    const auto& fp = cfg.feature_params;
    if (tag == "lbp") {
        auto fn = [&](const ImageMatrix& im) { return lbp_histogram(im, fp.lbp_grid); };
        return {from_images(gallery, gl, tag, fn), from_images(probe, pl, tag, fn)};
    }
    if (tag == "gabor") {
        auto fn = [&](const ImageMatrix& im) { return gabor_features(im, fp.gabor); };
        return {from_images(gallery, gl, tag, fn), from_images(probe, pl, tag, fn)};
    }
    if (tag == "weberfaces") {
        auto fn = [&](const ImageMatrix& im) { return weberface(im, fp.weber); };
        return {from_images(gallery, gl, tag, fn), from_images(probe, pl, tag, fn)};
    }
    auto fn = [](const ImageMatrix& im) { return flatten(im); };
    FeatureSet g = from_images(gallery, gl, tag, fn);
    FeatureSet p = from_images(probe, pl, tag, fn);
    SubspaceProjector proj;
    if (tag == "eigenfaces") {
        proj = fit_eigenfaces(g, fp.eigenfaces_dim);
    } else {
        const auto classes = static_cast<Index>(distinct_labels(gl).size());
        proj = fit_fisherfaces(g, fp.fisherfaces_dim > 0 ? fp.fisherfaces_dim : classes - 1);
    }
    g.vectors = proj.project(g.vectors);
    p.vectors = proj.project(p.vectors);
    return {std::move(g), std::move(p)};
}

inline void check_ingested(const FeatureSet& fs, const std::vector<int>& labels, const char* split) {
    if (fs.labels != labels)
        throw InputError("feature '" + fs.tag + "': " + split +
                         " rows do not match the manifest's entries (count or subject ids differ)");
}

/// Applies the chi-square offset policy; returns the offset used.
inline double apply_nonnegative_policy(ExtractedFeature& f, const PipelineConfig& cfg) {
    bool chi = false;
    for (const auto& k : cfg.kernels) chi |= needs_nonnegative(k.kind);
    if (!chi) return 0.0;
    const double lo = std::min(f.gallery.vectors.minCoeff(), f.probe.vectors.minCoeff());
    if (lo >= 0.0) return 0.0;
    if (!cfg.chi_square_shift)
        throw InputError("feature '" + f.gallery.tag +
                         "' has negative entries but a chi-square kernel is configured (enable chi_square_shift)");
    const double offset = -std::min(f.gallery.vectors.minCoeff(), 0.0);
    f.gallery.vectors.array() += offset;
    f.probe.vectors = (f.probe.vectors.array() + offset).cwiseMax(0.0);
    return offset;
}

inline std::vector<ExtractedFeature> load_extracted(const RunDir& run) {
    const Json payload = read_checkpoint(run.checkpoint(Stage::extract), "extract");
    std::vector<ExtractedFeature> out;
    for (const auto& f : payload.at("features")) {
        const std::string tag = f.at("tag").get<std::string>();
        out.push_back({load_precomputed(run.features() / f.at("gallery").get<std::string>(), tag),
                       load_precomputed(run.features() / f.at("probe").get<std::string>(), tag)});
    }
    return out;
}

struct AdaptedPair {
    int feature = 0;
    int kernel = 0;
    KernelSpec spec;
    EmpiricalKernelMap map;
    std::optional<DaTransform> transform;
};

struct AdaptState {
    bool naive = true;
    std::vector<Index> targets;
    std::vector<AdaptedPair> pairs;
};

inline AdaptState load_adapt(const RunDir& run) {
    const Json payload = read_checkpoint(run.checkpoint(Stage::adapt), "adapt");
    AdaptState s;
    s.naive = payload.at("naive").get<bool>();
    s.targets = payload.at("targets").get<std::vector<Index>>();
    for (const auto& p : payload.at("pairs")) {
        AdaptedPair a;
        a.feature = p.at("feature").get<int>();
        a.kernel = p.at("kernel").get<int>();
        a.spec = kernel_spec_from_json(p.at("spec"));
        a.map = kernel_map_from_json(p.at("map"));
        if (!p.at("transform").is_null()) a.transform = da_transform_from_json(p.at("transform"));
        s.pairs.push_back(std::move(a));
    }
    return s;
}

inline Matrix rows_of(const Matrix& m, const std::vector<Index>& idx) {
    Matrix out(static_cast<Index>(idx.size()), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = m.row(idx[i]);
    return out;
}

}  // namespace detail

inline void stage_preprocess(const PipelineConfig& cfg, const DatasetManifest& manifest, const RunDir& run) {
    Json payload{{"images", manifest.has_images()}};
    Json gallery = Json::array(), probe = Json::array();
    if (manifest.has_images()) {
        std::filesystem::create_directories(run.preprocessed());
        for (std::size_t i = 0; i < manifest.gallery.size(); ++i) {
            const std::string name = "gallery_" + std::to_string(i) + ".pgm";
            write_pgm(preprocess_gallery(read_image(manifest.gallery[i].ref), cfg.preprocess), run.preprocessed() / name);
            gallery.push_back(name);
        }
        for (std::size_t i = 0; i < manifest.probe.size(); ++i) {
            const std::string name = "probe_" + std::to_string(i) + ".pgm";
            write_pgm(preprocess_probe(read_image(manifest.probe[i].ref), cfg.preprocess), run.preprocessed() / name);
            probe.push_back(name);
        }
    }
    payload["gallery"] = gallery;
    payload["probe"] = probe;
    write_checkpoint(run.checkpoint(Stage::preprocess), "preprocess", payload);
}

inline void stage_extract(const PipelineConfig& cfg, const DatasetManifest& manifest, const RunDir& run) {
    const Json pre = read_checkpoint(run.checkpoint(Stage::preprocess), "preprocess");
    std::vector<ImageMatrix> gallery_images, probe_images;
    bool needs_images = false;
    for (const auto& tag : cfg.features) needs_images |= is_native_feature_tag(tag);
    if (needs_images) {
        gallery_images = detail::read_images(run, pre.at("gallery"));
        probe_images = detail::read_images(run, pre.at("probe"));
    }
    const auto gl = manifest.gallery_labels();
    const auto pl = manifest.probe_labels();

    std::filesystem::create_directories(run.features());
    Json features = Json::array();
    for (const auto& tag : cfg.features) {
        ExtractedFeature f;
        if (is_native_feature_tag(tag)) {
            f = detail::extract_native(tag, cfg, gallery_images, probe_images, gl, pl);
        } else {
            const auto it = manifest.feature_files.find(tag);
            if (it == manifest.feature_files.end())
                throw InputError("feature '" + tag + "' is external and the manifest lists no CSV files for it");
            f = {load_precomputed(it->second.gallery, tag), load_precomputed(it->second.probe, tag)};
            detail::check_ingested(f.gallery, gl, "gallery");
            detail::check_ingested(f.probe, pl, "probe");
        }
        const double offset = detail::apply_nonnegative_policy(f, cfg);
        const std::string stem = tag_file_stem(tag);
        export_precomputed(f.gallery, run.features() / (stem + "_gallery.csv"));
        export_precomputed(f.probe, run.features() / (stem + "_probe.csv"));
        features.push_back(
            {{"tag", tag}, {"gallery", stem + "_gallery.csv"}, {"probe", stem + "_probe.csv"}, {"offset", offset}});
    }
    write_checkpoint(run.checkpoint(Stage::extract), "extract", Json{{"features", features}});
}

inline void stage_train_mfkc(const PipelineConfig& cfg, const RunDir& run) {
    const auto feats = detail::load_extracted(run);
    FeatureKernelGrid grid;
    grid.labels = feats.front().gallery.labels;
    grid.kernel_specs = cfg.kernels;
    Json specs = Json::array();
    for (const auto& f : feats) {
        grid.feature_tags.push_back(f.gallery.tag);
        grid.grams.emplace_back();
        Json row = Json::array();
        for (const auto& k : cfg.kernels) {
            const KernelSpec spec = resolve_kernel(k, f.gallery.vectors);
            grid.grams.back().push_back(normalize_gram(gram(f.gallery.vectors, f.gallery.vectors, spec)));
            row.push_back(to_json(spec));
        }
        specs.push_back(row);
    }
    const MfkcModel model = select_pairs(grid, cfg.mfkc);
    Json tags = grid.feature_tags;
    write_checkpoint(run.checkpoint(Stage::train_mfkc), "train-mfkc",
                     Json{{"feature_tags", tags}, {"kernels", specs}, {"model", to_json(model)}});
}

inline void stage_adapt(const PipelineConfig& cfg, const DatasetManifest& manifest, const RunDir& run) {
    const auto feats = detail::load_extracted(run);
    const Json train = read_checkpoint(run.checkpoint(Stage::train_mfkc), "train-mfkc");
    const MfkcModel model = mfkc_model_from_json(train.at("model"));
    const auto targets = cfg.da.naive ? std::vector<Index>{} : draw_targets(manifest, cfg.da, cfg.seed);
    std::vector<int> target_labels;
    for (Index t : targets) target_labels.push_back(feats.front().probe.labels[static_cast<std::size_t>(t)]);

    std::vector<Json> records(model.selected_pairs.size());
    parallel_for(model.selected_pairs.size(), cfg.threads, [&](std::size_t i) {
        const auto [m, q] = model.selected_pairs[i];
        const auto& f = feats[static_cast<std::size_t>(m)];
        const KernelSpec spec =
            kernel_spec_from_json(train.at("kernels")[static_cast<std::size_t>(m)][static_cast<std::size_t>(q)]);
        const GramMatrix g = normalize_gram(gram(f.gallery.vectors, f.gallery.vectors, spec));
        const EmpiricalKernelMap map = fit_empirical_map(g, cfg.embedding.dim, cfg.embedding.eig_tol);
        Json transform(nullptr);
        if (!cfg.da.naive) {
            DaProblem p;
            p.source_x = map.training_coordinates();
            p.source_y = f.gallery.labels;
            p.target_x = targets.empty()
                             ? Matrix(0, map.dim())
                             : embed_points(map, normalized_cross_gram(detail::rows_of(f.probe.vectors, targets),
                                                                       f.gallery.vectors, spec));
            p.target_y = target_labels;
            p.C_S = cfg.da.C_S;
            p.C_T = cfg.da.C_T;
            transform = to_json(train_transform(p, cfg.da_options()));
        }
        records[i] = Json{{"feature", m}, {"kernel", q}, {"spec", to_json(spec)}, {"map", to_json(map)},
                          {"transform", transform}};
    });
    write_checkpoint(run.checkpoint(Stage::adapt), "adapt",
                     Json{{"naive", cfg.da.naive}, {"targets", targets}, {"pairs", records}});
}

inline EvalReport stage_evaluate(const PipelineConfig& cfg, const DatasetManifest& manifest, const RunDir& run) {
    const auto feats = detail::load_extracted(run);
    const detail::AdaptState state = detail::load_adapt(run);
    std::vector<LabeledPoints> gallery;
    std::vector<Matrix> probes;
    std::string pair_names;
    std::size_t warnings = 0;
    for (const auto& p : state.pairs) {
        const auto& f = feats[static_cast<std::size_t>(p.feature)];
        Matrix z = p.map.training_coordinates();
        if (p.transform) {
            z = transform_source_rows(p.transform->W, z);
            warnings += p.transform->warnings.size();
        }
        gallery.push_back({std::move(z), f.gallery.labels});
        probes.push_back(embed_points(p.map, normalized_cross_gram(f.probe.vectors, f.gallery.vectors, p.spec)));
        if (!pair_names.empty()) pair_names += ";";
        pair_names += f.gallery.tag + "|" + std::string(to_string(p.spec.kind));
    }
    const ScoreMatrix sm = knn_score(gallery, probes, feats.front().probe.labels, cfg.eval.fusion, cfg.eval.k);
    EvalReport report = evaluate(sm);
    report.notes = {
        {"profile", manifest.profile},
        {"mode", state.naive ? "naive" : "full"},
        {"pairs", pair_names},
        {"fusion", std::string(to_string(cfg.eval.fusion))},
        {"n_gallery", std::to_string(feats.front().gallery.size())},
        {"n_probe", std::to_string(feats.front().probe.size())},
        {"da_targets", std::to_string(state.targets.size())},
        // Every probe is evaluated, so any DA target is also a test probe.
        {"da_target_overlap", state.targets.empty() ? "false" : "true"},
        {"da_warnings", std::to_string(warnings)},
    };
    export_report(report, run.report());
    write_checkpoint(run.checkpoint(Stage::evaluate), "evaluate",
                     Json{{"rank1", report.rank1}, {"auc", report.auc}});
    return report;
}

namespace detail {

template <typename E>
[[noreturn]] void rethrow_in_stage(Stage s, const E& e) {
    throw E("stage '" + std::string(to_string(s)) + "': " + e.what());
}

}  // namespace detail

/// Runs one stage; errors are re-raised with the stage name, keeping their
/// category. Checkpoints of earlier stages stay on disk.
inline void run_stage(Stage s, const PipelineConfig& cfg, const DatasetManifest& manifest, const RunDir& run) {
    std::filesystem::create_directories(run.root / "checkpoints");
    try {
        switch (s) {
            case Stage::preprocess: stage_preprocess(cfg, manifest, run); break;
            case Stage::extract: stage_extract(cfg, manifest, run); break;
            case Stage::train_mfkc: stage_train_mfkc(cfg, run); break;
            case Stage::adapt: stage_adapt(cfg, manifest, run); break;
            case Stage::evaluate: stage_evaluate(cfg, manifest, run); break;
        }
    } catch (const DivergenceError& e) {
        detail::rethrow_in_stage(s, e);
    } catch (const ConvergenceError& e) {
        detail::rethrow_in_stage(s, e);
    } catch (const NormalizationError& e) {
        detail::rethrow_in_stage(s, e);
    } catch (const DegenerateDataError& e) {
        detail::rethrow_in_stage(s, e);
    } catch (const ParameterError& e) {
        detail::rethrow_in_stage(s, e);
    } catch (const InputError& e) {
        detail::rethrow_in_stage(s, e);
    } catch (const Json::exception& e) {
        throw InputError("stage '" + std::string(to_string(s)) + "': malformed checkpoint: " + e.what());
    }
}

/// Runs stages [from, evaluate] and returns the report.
inline EvalReport run_pipeline(const PipelineConfig& cfg, const DatasetManifest& manifest,
                               const std::filesystem::path& out, Stage from = Stage::preprocess) {
    cfg.validate();
    const RunDir run{out};
    std::filesystem::create_directories(out);
    {
        std::ofstream c(out / "config.json", std::ios::binary);
        c << to_json(cfg).dump(1) << "\n";
    }
    for (Stage s : kStages)
        if (static_cast<int>(s) >= static_cast<int>(from)) run_stage(s, cfg, manifest, run);
    return read_report(run.report());
}

}  // namespace mfkc
