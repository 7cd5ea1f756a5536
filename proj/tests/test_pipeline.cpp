#include "mfkc/pipeline.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mfkc;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "mfkc_test_pipeline" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

std::string report_bytes(const fs::path& run) {
    return slurp(run / "report" / "summary.csv") + slurp(run / "report" / "cmc.csv") + slurp(run / "report" / "roc.csv");
}

PipelineConfig benchmark_config(std::uint64_t seed) {
    return config_from_json(Json{
        {"seed", seed},
        {"features", {"custom:view0", "custom:view1", "custom:view2"}},
        {"kernels", {"linear", "gaussian", "polynomial"}},
        {"embedding", {{"dim", 16}}},
        {"da", {{"C_S", 0.1}, {"C_T", 10.0}, {"target_samples_per_class", 3}}},
    });
}

PipelineConfig single_pair_config(const std::string& kernel, bool naive) {
    return config_from_json(Json{
        {"seed", 3},
        {"features", {"custom:view0"}},
        {"kernels", {kernel}},
        {"da", {{"naive", naive}}},
    });
}

// Small instance for the fast tests.
SyntheticParams small_params() {
    SyntheticParams p;
    p.classes = 4;
    p.gallery_per_class = 6;
    p.probe_per_class = 4;
    return p;
}

}  // namespace

TEST(Config, ParsesDefaultsAndOverrides) {
    const auto c = config_from_json(Json{{"seed", 9},
                                         {"features", {"lbp", "custom:view0"}},
                                         {"kernels", {"gaussian", {{"kind", "polynomial"}, {"degree", 3}}}},
                                         {"embedding", {{"dim", "auto"}}},
                                         {"da", {{"target_subjects", 20}, {"target_samples_per_class", 5}}},
                                         {"eval", {{"fusion", "min"}}}});
    EXPECT_EQ(c.seed, 9u);
    ASSERT_EQ(c.kernels.size(), 2u);
    EXPECT_EQ(c.kernels[1].kind, KernelKind::polynomial);
    EXPECT_EQ(c.kernels[1].degree, 3);
    EXPECT_FALSE(c.embedding.dim.has_value());
    EXPECT_EQ(c.da.target_subjects, 20);
    EXPECT_EQ(c.da.target_samples_per_class, 5);
    EXPECT_EQ(c.da.C_S, 1.0);
    EXPECT_EQ(c.da.C_T, 10.0);
    EXPECT_EQ(c.eval.fusion, Fusion::min);
    EXPECT_EQ(c.eval.k, 1);
}

TEST(Config, JsonRoundTrip) {
    const auto c = benchmark_config(5);
    const auto back = config_from_json(to_json(c));
    EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
}

TEST(Config, Errors) {
    const Json base{{"seed", 1}, {"features", {"lbp"}}, {"kernels", {"linear"}}};
    EXPECT_NO_THROW(config_from_json(base));
    Json j = base;
    j.erase("seed");
    EXPECT_THROW(config_from_json(j), ParameterError);
    j = base;
    j["sedd"] = 1;
    EXPECT_THROW(config_from_json(j), ParameterError);
    j = base;
    j["da"] = {{"C_s", 1.0}};
    EXPECT_THROW(config_from_json(j), ParameterError);
    j = base;
    j["features"] = Json::array();
    EXPECT_THROW(config_from_json(j), ParameterError);
    j = base;
    j["kernels"] = {"sigmoid"};
    EXPECT_THROW(config_from_json(j), ParameterError);
    j = base;
    j["features"] = {"sift"};
    EXPECT_THROW(config_from_json(j), ParameterError);
    j = base;
    j["seed"] = "one";
    EXPECT_THROW(config_from_json(j), ParameterError);
    EXPECT_THROW(load_config("/nonexistent/config.json"), InputError);
}

TEST(Config, ProfilesCarryPreprocessValues) {
    const fs::path dir = fs::path(MFKC_SOURCE_DIR) / "configs" / "profiles";
    const struct {
        const char* name;
        double sigma, gamma;
        int per_subject, subjects;
    } expected[] = {{"FR_SURV", 1.75, 1.75, 5, 20}, {"SCface", 1.70, 1.50, 3, 30}, {"ChokePoint", 1.20, 1.25, 6, 7}};
    for (const auto& e : expected) {
        const auto c = load_config(dir / (std::string(e.name) + ".json"));
        EXPECT_EQ(c.profile, e.name);
        EXPECT_EQ(c.preprocess.sigma, e.sigma) << e.name;
        EXPECT_EQ(c.preprocess.gamma, e.gamma) << e.name;
        EXPECT_EQ(c.da.target_samples_per_class, e.per_subject) << e.name;
        EXPECT_EQ(c.da.target_subjects, e.subjects) << e.name;
    }
}

class ManifestTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fresh_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
        for (const char* n : {"g0.pgm", "g1.pgm", "p0.pgm", "p1.pgm"})
            write_pgm(ImageMatrix(Matrix::Constant(8, 8, 100.0)), dir_ / n);
    }
    fs::path manifest(const std::string& text) {
        write_text(dir_ / "manifest.txt", text);
        return dir_ / "manifest.txt";
    }
    fs::path dir_;
};

TEST_F(ManifestTest, MinimalTwoSubjects) {
    const auto m = load_manifest(manifest("profile demo\n# two subjects\ngallery g0.pgm 0\ngallery g1.pgm 1\n"
                                          "probe p0.pgm 0  # trailing comment\nprobe p1.pgm 1\n"));
    EXPECT_EQ(m.profile, "demo");
    ASSERT_EQ(m.gallery.size(), 2u);
    ASSERT_EQ(m.probe.size(), 2u);
    EXPECT_TRUE(m.has_images());
    EXPECT_EQ(m.gallery_labels(), (std::vector<int>{0, 1}));
    EXPECT_EQ(m.probe[1].line, 6);
    EXPECT_EQ(fs::path(m.probe[0].ref).filename(), "p0.pgm");
}

TEST_F(ManifestTest, UnknownProbeSubjectNamesTheLine) {
    const auto p = manifest("gallery g0.pgm 0\ngallery g1.pgm 1\nprobe p0.pgm 0\nprobe p1.pgm 7\n");
    try {
        load_manifest(p);
        FAIL() << "expected InputError";
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find(":4:"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("subject 7"), std::string::npos) << e.what();
    }
}

TEST_F(ManifestTest, Errors) {
    EXPECT_THROW(load_manifest(manifest("gallery missing.pgm 0\nprobe p0.pgm 0\n")), InputError);
    EXPECT_THROW(load_manifest(manifest("probe p0.pgm 0\n")), InputError);
    EXPECT_THROW(load_manifest(manifest("gallery g0.pgm 0\n")), InputError);
    EXPECT_THROW(load_manifest(manifest("gallery g0.pgm zero\nprobe p0.pgm 0\n")), InputError);
    EXPECT_THROW(load_manifest(manifest("gallery g0.pgm 0\nprobe p0.pgm 0\nfrobnicate\n")), InputError);
    EXPECT_THROW(load_manifest(manifest("gallery g0.pgm 0\nprobe p0.pgm 0\ntarget p0.pgm 3\n")), InputError);
    EXPECT_THROW(load_manifest(dir_ / "absent.txt"), InputError);
}

TEST_F(ManifestTest, PinnedTargetsWinOverDrawing) {
    const auto m = load_manifest(
        manifest("gallery g0.pgm 0\ngallery g1.pgm 1\nprobe p0.pgm 0\nprobe p1.pgm 1\ntarget p1.pgm 1\n"));
    EXPECT_EQ(m.pinned_targets, (std::vector<Index>{1}));
    EXPECT_EQ(draw_targets(m, DaConfig{}, 4), (std::vector<Index>{1}));
}

TEST(Manifest, FeatureOnlyManifestRoundTrips) {
    const auto dir = fresh_dir("feature_only");
    const auto ds = generate_synthetic(small_params(), 11);
    const auto path = write_synthetic(ds, dir);
    const auto m = load_manifest(path);
    EXPECT_FALSE(m.has_images());
    EXPECT_EQ(m.gallery_labels(), ds.gallery.front().labels);
    EXPECT_EQ(m.probe_labels(), ds.probe.front().labels);
    EXPECT_EQ(m.feature_files.size(), 3u);
    EXPECT_EQ(m.gallery[2].ref, "#2");
}

TEST(Manifest, TargetDrawIsSeededPerSubject) {
    DatasetManifest m;
    for (int s = 0; s < 40; ++s)
        for (int i = 0; i < 8; ++i) {
            m.gallery.push_back({"#", s, 0});
            m.probe.push_back({"#", s, 0});
        }
    DaConfig da;
    da.target_samples_per_class = 5;
    da.target_subjects = 20;
    const auto a = draw_targets(m, da, 17);
    EXPECT_EQ(a, draw_targets(m, da, 17));
    EXPECT_NE(a, draw_targets(m, da, 18));
    ASSERT_EQ(a.size(), 100u);
    EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
    std::map<int, int> per_subject;
    for (Index t : a) ++per_subject[m.probe[static_cast<std::size_t>(t)].subject];
    EXPECT_EQ(per_subject.size(), 20u);
    for (const auto& [s, n] : per_subject) EXPECT_EQ(n, 5) << "subject " << s;

    da.target_subjects.reset();
    da.target_samples_per_class = 100;  // more than available: take all
    EXPECT_EQ(draw_targets(m, da, 1).size(), m.probe.size());
}

TEST(Synthetic, SameSeedIsBitIdentical) {
    auto p = small_params();
    p.render_images = true;
    const auto a = generate_synthetic(p, 42);
    const auto b = generate_synthetic(p, 42);
    const auto c = generate_synthetic(p, 43);
    ASSERT_EQ(a.gallery.size(), 3u);
    for (std::size_t v = 0; v < a.gallery.size(); ++v) {
        EXPECT_EQ(a.gallery[v].vectors, b.gallery[v].vectors);
        EXPECT_EQ(a.probe[v].vectors, b.probe[v].vectors);
        EXPECT_EQ(a.gallery[v].labels, b.gallery[v].labels);
    }
    ASSERT_EQ(a.gallery_images.size(), 24u);
    ASSERT_EQ(a.probe_images.size(), 16u);
    for (std::size_t i = 0; i < a.probe_images.size(); ++i)
        EXPECT_EQ(a.probe_images[i].pixels(), b.probe_images[i].pixels());
    EXPECT_NE(a.gallery[0].vectors, c.gallery[0].vectors);
    EXPECT_EQ(a.probe_images[0].height(), 16);
}

TEST(Synthetic, ShapesAndLabels) {
    const auto ds = generate_synthetic(SyntheticParams{}, 1);
    EXPECT_EQ(ds.gallery[0].vectors.rows(), 200);
    EXPECT_EQ(ds.probe[0].vectors.rows(), 100);
    EXPECT_EQ(ds.gallery[0].vectors.cols(), 16);
    std::map<int, int> counts;
    for (int l : ds.probe[1].labels) ++counts[l];
    EXPECT_EQ(counts.size(), 10u);
    for (const auto& [l, n] : counts) EXPECT_EQ(n, 10);
}

TEST(Synthetic, Errors) {
    auto p = small_params();
    p.classes = 1;
    EXPECT_THROW(generate_synthetic(p, 0), ParameterError);
    p = small_params();
    p.probe_per_class = 0;
    EXPECT_THROW(generate_synthetic(p, 0), ParameterError);
    p = small_params();
    p.view_noise = {0.1};
    EXPECT_THROW(generate_synthetic(p, 0), ParameterError);
    p = small_params();
    p.spread = -1.0;
    EXPECT_THROW(generate_synthetic(p, 0), ParameterError);
}

TEST(Pipeline, IdentityShiftSeparableGivesPerfectNaiveRank1) {
    auto p = small_params();
    p.shift_linear = 0.0;
    p.shift_translation = 0.0;
    p.noise = 0.0;
    p.class_scale = 5.0;
    p.spread = 0.05;
    p.view_noise = {0.01, 0.01, 0.01};
    const auto dir = fresh_dir("identity");
    const auto manifest = load_manifest(write_synthetic(generate_synthetic(p, 8), dir / "data"));
    const auto report = run_pipeline(single_pair_config("linear", true), manifest, dir / "run");
    EXPECT_EQ(report.rank1, 1.0);
    EXPECT_EQ(report.auc, 1.0);
}

TEST(Pipeline, SinglePairMatchesHandWiredComposition) {
    const auto ds = generate_synthetic(small_params(), 21);
    const auto dir = fresh_dir("hand_wired");
    const auto manifest = load_manifest(write_synthetic(ds, dir / "data"));
    const auto report = run_pipeline(single_pair_config("gaussian", true), manifest, dir / "run");

    const Matrix& g = ds.gallery[0].vectors;
    const Matrix& pr = ds.probe[0].vectors;
    const KernelSpec spec = resolve_kernel(KernelSpec{KernelKind::gaussian}, g);
    const auto map = fit_empirical_map(normalize_gram(gram(g, g, spec)), std::nullopt, 1e-10);
    const Matrix probes = embed_points(map, normalize_gram(gram(pr, g, spec), self_kernel(pr, spec), self_kernel(g, spec)));
    const auto sm = knn_score({{map.training_coordinates(), ds.gallery[0].labels}}, {probes}, ds.probe[0].labels);
    const auto expected = evaluate(sm);

    EXPECT_EQ(report.rank1, expected.rank1);
    EXPECT_EQ(report.auc, expected.auc);
    EXPECT_EQ(report.cmc, expected.cmc);
    ASSERT_EQ(report.roc_points.size(), expected.roc_points.size());
    for (std::size_t i = 0; i < expected.roc_points.size(); ++i) {
        EXPECT_EQ(report.roc_points[i].far, expected.roc_points[i].far);
        EXPECT_EQ(report.roc_points[i].tar, expected.roc_points[i].tar);
    }
}

TEST(Pipeline, CheckpointRerunIsByteIdentical) {
    const auto dir = fresh_dir("rerun");
    const auto manifest = load_manifest(write_synthetic(generate_synthetic(small_params(), 5), dir / "data"));
    const auto cfg = benchmark_config(5);
    run_pipeline(cfg, manifest, dir / "a");
    const std::string first = report_bytes(dir / "a");
    const std::string adapt = slurp(dir / "a" / "checkpoints" / "adapt.json");
    ASSERT_FALSE(first.empty());
    for (Stage from : {Stage::extract, Stage::train_mfkc, Stage::adapt, Stage::evaluate}) {
        run_pipeline(cfg, manifest, dir / "a", from);
        EXPECT_EQ(report_bytes(dir / "a"), first) << "from " << to_string(from);
        EXPECT_EQ(slurp(dir / "a" / "checkpoints" / "adapt.json"), adapt) << "from " << to_string(from);
    }
    run_pipeline(cfg, manifest, dir / "b");
    EXPECT_EQ(report_bytes(dir / "b"), first);
}

TEST(Pipeline, FullBeatsNaiveOnShiftedInstance) {
    const auto dir = fresh_dir("full_vs_naive");
    const auto manifest = load_manifest(write_synthetic(generate_synthetic(SyntheticParams{}, 1002), dir / "data"));
    auto cfg = benchmark_config(2);
    const auto full = run_pipeline(cfg, manifest, dir / "full");
    cfg.da.naive = true;
    const auto naive = run_pipeline(cfg, manifest, dir / "naive");
    EXPECT_GE(full.rank1, naive.rank1);
    const auto note = [](const EvalReport& r, const std::string& key) {
        for (const auto& [k, v] : r.notes)
            if (k == key) return v;
        return std::string();
    };
    EXPECT_EQ(note(full, "mode"), "full");
    EXPECT_EQ(note(naive, "mode"), "naive");
    EXPECT_EQ(note(full, "da_targets"), "30");
    EXPECT_EQ(note(full, "da_target_overlap"), "true");
    EXPECT_EQ(note(naive, "da_targets"), "0");
}

TEST(Pipeline, ImageManifestSmokeRun) {
    auto p = small_params();
    p.render_images = true;
    const auto dir = fresh_dir("images");
    const auto manifest = load_manifest(write_synthetic(generate_synthetic(p, 3), dir / "data"));
    ASSERT_TRUE(manifest.has_images());
    const auto cfg = config_from_json(Json{{"seed", 3},
                                           {"preprocess", {{"sigma", 1.2}, {"gamma", 1.25}, {"height", 32}, {"width", 32}}},
                                           {"features", {"lbp", "eigenfaces", "gabor"}},
                                           {"feature_params", {{"eigenfaces_dim", 8}}},
                                           {"kernels", {"gaussian", "chi_square"}},
                                           {"chi_square_shift", true},
                                           {"da", {{"target_samples_per_class", 2}}}});
    const auto report = run_pipeline(cfg, manifest, dir / "run");
    EXPECT_GE(report.rank1, 0.0);
    EXPECT_LE(report.rank1, 1.0);
    EXPECT_EQ(report.cmc(report.cmc.size() - 1), 1.0);
    EXPECT_TRUE(fs::exists(dir / "run" / "preprocessed" / "probe_15.pgm"));
    const auto probe = read_image(dir / "run" / "preprocessed" / "probe_0.pgm");
    EXPECT_EQ(probe.height(), 32);
    for (Stage s : kStages) EXPECT_TRUE(fs::exists(RunDir{dir / "run"}.checkpoint(s))) << to_string(s);
}

TEST(Pipeline, StageErrorKeepsCategoryAndNamesStage) {
    const auto dir = fresh_dir("stage_error");
    const auto manifest = load_manifest(write_synthetic(generate_synthetic(small_params(), 5), dir / "data"));
    const auto cfg = config_from_json(Json{{"seed", 1}, {"features", {"custom:view0"}}, {"kernels", {"chi_square"}}});
    try {
        run_pipeline(cfg, manifest, dir / "run");
        FAIL() << "expected InputError";
    } catch (const InputError& e) {
        EXPECT_EQ(std::string(e.what()).rfind("stage 'extract': ", 0), 0u) << e.what();
    }
    EXPECT_TRUE(fs::exists(RunDir{dir / "run"}.checkpoint(Stage::preprocess)));
    EXPECT_FALSE(fs::exists(RunDir{dir / "run"}.checkpoint(Stage::extract)));

    EXPECT_THROW(run_pipeline(single_pair_config("linear", true), manifest, dir / "missing", Stage::adapt), InputError);
}

TEST(Pipeline, ExternalFeatureMustMatchManifest) {
    const auto dir = fresh_dir("mismatch");
    auto manifest = load_manifest(write_synthetic(generate_synthetic(small_params(), 5), dir / "data"));
    std::swap(manifest.gallery[0].subject, manifest.gallery[1].subject);
    EXPECT_THROW(run_pipeline(single_pair_config("linear", true), manifest, dir / "run"), InputError);
}

TEST(Pipeline, StageNames) {
    for (Stage s : kStages) EXPECT_EQ(stage_from_string(to_string(s)), s);
    EXPECT_EQ(to_string(Stage::train_mfkc), "train-mfkc");
    EXPECT_THROW(stage_from_string("embed"), ParameterError);
}
