// mfkc: stage runner and synthetic data generator.
//
//   mfkc run --config c.json --manifest m.txt --out run/ [--seed N] [--stage-from adapt]
//   mfkc <stage> --config c.json --manifest m.txt --out run/
//   mfkc synth --out data/ --seed N [--classes K ...]
//
// Exit codes: 0 ok, 2 invalid input or parameters, 3 solver failed to
// converge, 1 anything else.

#include "mfkc/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

namespace {

struct RunArgs {
    std::string config;
    std::string manifest;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string stage_from = "preprocess";
};

void add_run_flags(CLI::App* cmd, RunArgs& a, bool with_stage_from) {
    cmd->add_option("--config", a.config, "pipeline configuration (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--manifest", a.manifest, "dataset manifest")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", a.out, "run directory")->required();
    cmd->add_option("--seed", a.seed, "override the configuration seed");
    if (with_stage_from)
        cmd->add_option("--stage-from", a.stage_from, "first stage to run; earlier checkpoints are reused")
            ->check(CLI::IsMember({"preprocess", "extract", "train-mfkc", "adapt", "evaluate"}));
}

mfkc::PipelineConfig load(const RunArgs& a) {
    auto cfg = mfkc::load_config(a.config);
    if (a.seed) cfg.seed = *a.seed;
    cfg.validate();
    return cfg;
}

void print_report(const mfkc::EvalReport& r) {
    std::printf("rank1 %.6f\nauc %.6f\n", r.rank1, r.auc);
    for (const auto& [k, v] : r.notes) std::printf("%s %s\n", k.c_str(), v.c_str());
}

int run_guarded(const std::function<void()>& fn) {
    try {
        fn();
        return 0;
    } catch (const mfkc::ConvergenceError& e) {
        std::cerr << "mfkc: " << e.what() << "\n";
        return 3;
    } catch (const mfkc::Error& e) {
        std::cerr << "mfkc: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "mfkc: unexpected failure: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-feature kernel combination with domain adaptation for gallery/probe face matching"};
    app.require_subcommand(1);

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "run every stage (or from --stage-from on)");
    add_run_flags(run, run_args, true);

    std::vector<std::pair<CLI::App*, mfkc::Stage>> stage_cmds;
    std::vector<RunArgs> stage_args(mfkc::kStages.size());
    for (std::size_t i = 0; i < mfkc::kStages.size(); ++i) {
        const mfkc::Stage s = mfkc::kStages[i];
        auto* cmd = app.add_subcommand(std::string(mfkc::to_string(s)), "run the " + std::string(mfkc::to_string(s)) +
                                                                            " stage from existing checkpoints");
        add_run_flags(cmd, stage_args[i], false);
        stage_cmds.emplace_back(cmd, s);
    }

    mfkc::SyntheticParams sp;
    std::string synth_out;
    std::uint64_t synth_seed = 0;
    std::string synth_profile = "synthetic";
    auto* synth = app.add_subcommand("synth", "write a seeded synthetic gallery/probe dataset and its manifest");
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--seed", synth_seed, "generator seed")->required();
    synth->add_option("--classes", sp.classes, "number of subjects")->capture_default_str();
    synth->add_option("--gallery-per-class", sp.gallery_per_class)->capture_default_str();
    synth->add_option("--probe-per-class", sp.probe_per_class)->capture_default_str();
    synth->add_option("--view-dim", sp.view_dim, "dimension of each feature view")->capture_default_str();
    synth->add_option("--shift-linear", sp.shift_linear, "scale of the probe-side linear distortion")
        ->capture_default_str();
    synth->add_option("--shift-translation", sp.shift_translation, "norm of the probe-side translation")
        ->capture_default_str();
    synth->add_option("--noise", sp.noise, "probe-side additive noise")->capture_default_str();
    synth->add_flag("--images", sp.render_images, "also render blob-face images");
    synth->add_option("--profile", synth_profile, "profile name written to the manifest")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (*run) {
        return run_guarded([&] {
            const auto cfg = load(run_args);
            const auto manifest = mfkc::load_manifest(run_args.manifest);
            print_report(mfkc::run_pipeline(cfg, manifest, run_args.out, mfkc::stage_from_string(run_args.stage_from)));
        });
    }
    for (std::size_t i = 0; i < stage_cmds.size(); ++i) {
        if (!*stage_cmds[i].first) continue;
        const RunArgs& a = stage_args[i];
        const mfkc::Stage s = stage_cmds[i].second;
        return run_guarded([&] {
            const auto cfg = load(a);
            const auto manifest = mfkc::load_manifest(a.manifest);
            mfkc::run_stage(s, cfg, manifest, mfkc::RunDir{a.out});
            if (s == mfkc::Stage::evaluate) print_report(mfkc::read_report(mfkc::RunDir{a.out}.report()));
        });
    }
    if (*synth) {
        return run_guarded([&] {
            const auto path = mfkc::write_synthetic(mfkc::generate_synthetic(sp, synth_seed), synth_out, synth_profile);
            std::printf("%s\n", path.string().c_str());
        });
    }
    return 2;
}
