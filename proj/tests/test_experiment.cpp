#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "phytac/experiment.hpp"

using namespace phytac;
namespace fs = std::filesystem;

namespace {

struct TempTree {
  fs::path root;
  explicit TempTree(const std::string& name)
      : root(fs::temp_directory_path() / name) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~TempTree() { fs::remove_all(root); }
  std::string p(const std::string& rel) const { return (root / rel).string(); }
};

RunConfig tiny_run_config() {
  RunConfig rc = parse_config(R"({
    "seed": 424242,
    "codec": {"m": 8, "hidden": 32},
    "diffusion": {"T": 50, "ddim_steps": 5, "hidden": 32},
    "dataset": {
      "object_count": 4,
      "grasps_per_object": 2,
      "frames_per_grasp": 6,
      "grid_rows": 16,
      "grid_cols": 16
    },
    "experiment": {"episodes": 2, "holdout": 8}
  })");
  return rc;
}

// Dataset plus untrained-but-usable codec and denoiser artifacts.
struct Fixture {
  TempTree tree;
  RunConfig cfg;
  StagePaths paths;

  explicit Fixture(const std::string& name) : tree(name),
                                              cfg(tiny_run_config()) {
    generate_dataset(cfg.dataset, tree.p("data"));

    Rng rng(5);
    CodecParams codec =
        init_codec(cfg.dataset.grid_rows, cfg.dataset.grid_cols, cfg.codec,
                   rng);
    for (double& w : codec.w) w += 0.2 * rng.normal();
    save_codec(codec, tree.p("codec.phyt"));

    const std::size_t c_dim =
        kMassEmbedDim + static_cast<std::size_t>(kTextureCount);
    DenoiserParams den = init_denoiser(cfg.codec.m, c_dim, cfg.diffusion,
                                       rng);
    save_denoiser(den, tree.p("denoiser.phyt"));

    paths = {tree.p("data"), tree.p("codec.phyt"), tree.p("denoiser.phyt")};
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("context loading names the missing stage") {
  Fixture fx("phytac_ctx");

  StagePaths no_data = fx.paths;
  no_data.data_dir = fx.tree.p("nowhere");
  try {
    load_context(fx.cfg, no_data, false);
    FAIL("expected artifact_error");
  } catch (const artifact_error& e) {
    CHECK(std::string(e.what()).find("gen-data") != std::string::npos);
  }

  StagePaths no_codec = fx.paths;
  no_codec.codec_file = fx.tree.p("missing.phyt");
  try {
    load_context(fx.cfg, no_codec, false);
    FAIL("expected artifact_error");
  } catch (const artifact_error& e) {
    CHECK(std::string(e.what()).find("train-codec") != std::string::npos);
  }

  StagePaths no_diff = fx.paths;
  no_diff.diffusion_file = fx.tree.p("missing.phyt");
  try {
    load_context(fx.cfg, no_diff, true);
    FAIL("expected artifact_error");
  } catch (const artifact_error& e) {
    CHECK(std::string(e.what()).find("train-diffusion") != std::string::npos);
  }

  // Without the need, a missing diffusion file just leaves the sampler out.
  const ExperimentContext ctx = load_context(fx.cfg, no_diff, false);
  CHECK_FALSE(ctx.has_denoiser);
}

TEST_CASE("context holds per-record latents and class groupings") {
  Fixture fx("phytac_ctx2");
  const ExperimentContext ctx = load_context(fx.cfg, fx.paths, false);
  CHECK(ctx.records.size() == ctx.manifest.record_count);
  CHECK(ctx.latents.size() == ctx.records.size());
  CHECK(ctx.scale.size() == ctx.codec.m);
  for (double s : ctx.scale) CHECK(s > 0.0);
  CHECK(ctx.has_denoiser);
  CHECK(ctx.class_grasps.size() == static_cast<std::size_t>(kTextureCount));
  std::size_t total = 0;
  for (const auto& g : ctx.class_grasps) total += g.size();
  CHECK(total == ctx.manifest.grasps.size());
  // Default generation cycles all four classes.
  for (const auto& g : ctx.class_grasps) CHECK_FALSE(g.empty());
}

TEST_CASE("policies produce classified, deterministic episodes") {
  Fixture fx("phytac_policies");
  const ExperimentContext ctx = load_context(fx.cfg, fx.paths, false);

  for (int pi = 0; pi < kPolicyCount; ++pi) {
    const Policy policy = static_cast<Policy>(pi);
    const std::vector<EpisodeResult> a =
        run_policy(ctx, policy, GoalSource::oracle, 2);
    CHECK(a.size() == 2 * static_cast<std::size_t>(kTextureCount));
    for (const EpisodeResult& r : a) {
      CHECK(r.policy == policy);
      CHECK(r.f_star > 0.0);
      if (r.outcome.fosg) CHECK(r.outcome.stg);
      if (r.outcome.stg) CHECK(r.outcome.sug);
      if (!r.trace.frames.empty())
        CHECK(r.trace.frames.front().aperture > 0.0);
    }
    const std::vector<EpisodeResult> b =
        run_policy(ctx, policy, GoalSource::oracle, 2);
    REQUIRE(b.size() == a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(b[i].trace.final_force == a[i].trace.final_force);
      CHECK(b[i].trace.final_aperture == a[i].trace.final_aperture);
      CHECK(b[i].trace.frames.size() == a[i].trace.frames.size());
    }
  }
}

TEST_CASE("fixed-force policy stops at its preset") {
  Fixture fx("phytac_ff");
  RunConfig cfg = fx.cfg;
  cfg.experiment.fixed_force_factor = 0.8;  // low preset: quickly reachable
  const ExperimentContext ctx = load_context(cfg, fx.paths, false);
  const ObjectInfo& ref = ctx.manifest.objects.at(0);
  const double preset = 0.8 * optimal_force(ref.mass_kg, ref.friction_mu,
                                            cfg.plant);

  const std::vector<EpisodeResult> rs =
      run_policy(ctx, Policy::fixed_force, GoalSource::oracle, 2);
  for (const EpisodeResult& r : rs) {
    CHECK(r.goal_force == preset);
    if (r.trace.held) CHECK(r.trace.final_force >= preset);
  }
}

TEST_CASE("open-loop policy closes to the planner width") {
  Fixture fx("phytac_ol");
  RunConfig cfg = fx.cfg;
  cfg.experiment.open_loop_sigma_mm = 0.0;  // perfect planner width
  const ExperimentContext ctx = load_context(cfg, fx.paths, false);
  const std::vector<EpisodeResult> rs =
      run_policy(ctx, Policy::open_loop, GoalSource::oracle, 1);
  REQUIRE_FALSE(rs.empty());
  for (const EpisodeResult& r : rs) {
    const double u_star = ctx.manifest.grasps.at(r.grasp_index).u_star_mm;
    if (r.trace.held)
      CHECK(r.trace.final_aperture == Catch::Approx(u_star).margin(1e-6));
  }
}

TEST_CASE("sampled goals require the diffusion artifact") {
  Fixture fx("phytac_ldm");
  StagePaths no_diff = fx.paths;
  no_diff.diffusion_file.clear();
  const ExperimentContext ctx = load_context(fx.cfg, no_diff, false);
  CHECK_THROWS_AS(run_policy(ctx, Policy::phytac, GoalSource::ldm, 1),
                  artifact_error);

  const ExperimentContext full = load_context(fx.cfg, fx.paths, true);
  const std::vector<EpisodeResult> rs =
      run_policy(full, Policy::phytac, GoalSource::ldm, 1);
  CHECK(rs.size() == static_cast<std::size_t>(kTextureCount));
}

TEST_CASE("eval scores the trailing holdout against the optimal imprints") {
  Fixture fx("phytac_eval");
  const ExperimentContext ctx = load_context(fx.cfg, fx.paths, true);
  const EvalSummary sum = run_eval(ctx, fx.tree.p("eval_out"));
  CHECK(sum.records == fx.cfg.experiment.holdout);
  CHECK(sum.mean_goal.rmse >= 0.0);
  CHECK(sum.mean_current.ssim <= 1.0);

  const std::string csv = slurp(fx.tree.p("eval_out") + "/image_metrics.csv");
  CHECK(csv.find("record,pair,mae,rmse,psnr_db,ssim,lpips") == 0);
  CHECK(csv.find("n/a") != std::string::npos);
  CHECK(csv.find("mean,goal_vs_optimal") != std::string::npos);
  CHECK(csv.find("mean,current_vs_optimal") != std::string::npos);

  RunConfig big = fx.cfg;
  big.experiment.holdout = ctx.records.size() + 1;
  const ExperimentContext ctx_big = load_context(big, fx.paths, true);
  CHECK_THROWS_AS(run_eval(ctx_big, fx.tree.p("eval_bad")), config_error);

  StagePaths no_diff = fx.paths;
  no_diff.diffusion_file.clear();
  const ExperimentContext plain = load_context(fx.cfg, no_diff, false);
  CHECK_THROWS_AS(run_eval(plain, fx.tree.p("eval_none")), artifact_error);
}

TEST_CASE("reports are complete and byte-identical across runs") {
  Fixture fx("phytac_report");
  const ExperimentContext ctx = load_context(fx.cfg, fx.paths, true);

  const ExperimentReport rep = run_report(ctx, fx.tree.p("out1"));
  CHECK(rep.episodes.size() ==
        static_cast<std::size_t>(kPolicyCount) *
            static_cast<std::size_t>(kTextureCount) *
            fx.cfg.experiment.episodes);
  CHECK(rep.cells.size() == static_cast<std::size_t>(kPolicyCount) *
                                static_cast<std::size_t>(kTextureCount));
  CHECK(rep.has_eval);

  for (const char* f :
       {"summary.csv", "episodes.csv", "traces.csv", "image_metrics.csv",
        "summary.txt"})
    CHECK(fs::exists(fx.tree.p("out1") + "/" + f));

  const std::string summary = slurp(fx.tree.p("out1") + "/summary.csv");
  CHECK(summary.find("policy,object_class,episodes,sug_rate,stg_rate,"
                     "fosg_rate") == 0);
  CHECK(summary.find("phytac,") != std::string::npos);
  CHECK(summary.find("fixed-force,") != std::string::npos);
  CHECK(summary.find("open-loop,") != std::string::npos);

  run_report(ctx, fx.tree.p("out2"));
  for (const char* f :
       {"summary.csv", "episodes.csv", "traces.csv", "image_metrics.csv"})
    CHECK(slurp(fx.tree.p("out1") + "/" + f) ==
          slurp(fx.tree.p("out2") + "/" + f));
}
