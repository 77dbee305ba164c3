// Command-line front end for the tactile grasping pipeline. One binary,
// seven pipeline subcommands plus a diffusion sampling probe; every stage
// reads the same config file and exchanges artifacts through explicit paths.
#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "phytac/config.hpp"
#include "phytac/experiment.hpp"

namespace {

using namespace phytac;

// Deterministic per-stage seed streams, disjoint from the episode and eval
// streams used inside the experiment layer.
constexpr std::uint64_t kSampleSalt = 9ull << 40;
constexpr std::uint64_t kCodecSalt = 11ull << 40;
constexpr std::uint64_t kDiffusionSalt = 12ull << 40;

struct GlobalArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;
};

RunConfig resolve_config(const GlobalArgs& g) {
  RunConfig cfg = g.config_path.empty() ? RunConfig{} : load_config(g.config_path);
  if (g.seed_set) cfg.seed = g.seed;
  if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
  cfg.wire();
  cfg.validate();
  return cfg;
}

std::vector<GraspRecord> records_or_hint(const std::string& dir) {
  try {
    return read_all_records(dir);
  } catch (const artifact_error& e) {
    throw artifact_error(std::string(e.what()) +
                         "; run the gen-data stage first");
  }
}

CodecParams codec_or_hint(const std::string& path) {
  try {
    return load_codec(path);
  } catch (const artifact_error& e) {
    throw artifact_error(std::string(e.what()) +
                         "; run the train-codec stage first");
  }
}

void ensure_parent_dir(const std::string& file) {
  const std::filesystem::path parent =
      std::filesystem::path(file).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

void write_image_csv(const std::string& path, const ImprintImage& im) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw artifact_error("cannot write " + path);
  for (std::size_t r = 0; r < im.rows; ++r) {
    for (std::size_t c = 0; c < im.cols; ++c) {
      if (c) out << ',';
      out << detail::fmt_real(im.at(r, c));
    }
    out << '\n';
  }
}

double mean_tail(const std::vector<double>& v, std::size_t n) {
  if (v.empty()) return 0.0;
  const std::size_t k = std::min(n, v.size());
  return std::accumulate(v.end() - static_cast<std::ptrdiff_t>(k), v.end(),
                         0.0) /
         static_cast<double>(k);
}

double mean_head(const std::vector<double>& v, std::size_t n) {
  if (v.empty()) return 0.0;
  const std::size_t k = std::min(n, v.size());
  return std::accumulate(v.begin(),
                         v.begin() + static_cast<std::ptrdiff_t>(k), 0.0) /
         static_cast<double>(k);
}

// --- gen-data --------------------------------------------------------------

int cmd_gen_data(const GlobalArgs& g, const std::string& out_flag) {
  const RunConfig cfg = resolve_config(g);
  const std::string dir = out_flag.empty() ? cfg.out_dir : out_flag;
  const DatasetManifest mf = generate_dataset(cfg.dataset, dir);
  std::printf("wrote %zu records (%zu objects, %zu grasps, %zux%zu grid) to %s\n",
              mf.record_count, mf.objects.size(), mf.grasps.size(),
              mf.grid_rows, mf.grid_cols, dir.c_str());
  return 0;
}

// --- train-codec -----------------------------------------------------------

int cmd_train_codec(const GlobalArgs& g, const std::string& data_dir,
                    const std::string& out_flag) {
  const RunConfig cfg = resolve_config(g);
  const std::vector<GraspRecord> records = records_or_hint(data_dir);

  // The codec must embed both the live imprints and the force-optimal
  // targets, so both image streams join the training set.
  std::vector<ImprintImage> images;
  images.reserve(2 * records.size());
  for (const GraspRecord& r : records) {
    images.push_back(r.imprint_current);
    images.push_back(r.imprint_optimal);
  }

  Rng rng = Rng(cfg.seed).derive(kCodecSalt);
  const TrainedCodec trained = train_codec(images, cfg.codec, rng);

  const std::string out =
      out_flag.empty() ? cfg.out_dir + "/codec.phyt" : out_flag;
  ensure_parent_dir(out);
  save_codec(trained.params, out);

  const double recon = mean_l1_reconstruction(trained.params, images);
  const double base = mean_image_baseline_l1(images);
  std::printf("trained codec on %zu imprints for %zu epochs: loss %.6f -> %.6f\n",
              images.size(), trained.loss_history.size(),
              trained.loss_history.empty() ? 0.0 : trained.loss_history.front(),
              trained.loss_history.empty() ? 0.0 : trained.loss_history.back());
  std::printf("reconstruction L1 %.6f vs mean-image baseline %.6f (ratio %.3f)\n",
              recon, base, base > 0.0 ? recon / base : 0.0);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

// --- train-diffusion -------------------------------------------------------

int cmd_train_diffusion(const GlobalArgs& g, const std::string& data_dir,
                        const std::string& codec_file,
                        const std::string& out_flag) {
  const RunConfig cfg = resolve_config(g);
  const std::vector<GraspRecord> records = records_or_hint(data_dir);
  const CodecParams codec = codec_or_hint(codec_file);

  Rng rng = Rng(cfg.seed).derive(kDiffusionSalt);
  const TrainedDenoiser trained =
      train_denoiser(records, codec, cfg.diffusion, rng);

  const std::string out =
      out_flag.empty() ? cfg.out_dir + "/denoiser.phyt" : out_flag;
  ensure_parent_dir(out);
  save_denoiser(trained.params, out);

  std::printf("trained denoiser on %zu records for %zu steps: "
              "objective %.6f -> %.6f (first/last 50-step means)\n",
              records.size(), trained.loss_history.size(),
              mean_head(trained.loss_history, 50),
              mean_tail(trained.loss_history, 50));
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

// --- sample ----------------------------------------------------------------

int cmd_sample(const GlobalArgs& g, std::size_t record_idx,
               const StagePaths& paths, const std::string& out_flag) {
  const RunConfig cfg = resolve_config(g);
  const ExperimentContext ctx = load_context(cfg, paths, true);
  if (record_idx >= ctx.records.size())
    throw config_error("sample: record index " + std::to_string(record_idx) +
                       " out of range (dataset has " +
                       std::to_string(ctx.records.size()) + " records)");
  const GraspRecord& rec = ctx.records[record_idx];

  Rng rng = Rng(cfg.seed).derive(kSampleSalt + record_idx);
  const GoalSample sample =
      sample_goal(ctx.denoiser, ctx.codec, rec.imprint_current,
                  rec.patch.depth_map, rec.mass_kg, rec.texture,
                  cfg.diffusion.ddim_steps, ctx.schedule, rng);

  const std::string dir = out_flag.empty() ? cfg.out_dir : out_flag;
  std::filesystem::create_directories(dir);
  const std::string stem = dir + "/sample_" + std::to_string(record_idx);
  write_image_csv(stem + "_goal.csv", sample.x_g);
  write_image_csv(stem + "_optimal.csv", rec.imprint_optimal);
  write_image_csv(stem + "_current.csv", rec.imprint_current);

  const ImageMetrics goal_m = image_metrics(sample.x_g, rec.imprint_optimal);
  const ImageMetrics cur_m =
      image_metrics(rec.imprint_current, rec.imprint_optimal);
  {
    std::ofstream out(stem + "_metrics.csv", std::ios::binary);
    if (!out) throw artifact_error("cannot write " + stem + "_metrics.csv");
    out << "pair,mae,rmse,psnr_db,ssim\n";
    out << "goal_vs_optimal," << detail::fmt_real(goal_m.mae) << ','
        << detail::fmt_real(goal_m.rmse) << ','
        << detail::fmt_real(psnr_for_csv(goal_m.psnr_db)) << ','
        << detail::fmt_real(goal_m.ssim) << '\n';
    out << "current_vs_optimal," << detail::fmt_real(cur_m.mae) << ','
        << detail::fmt_real(cur_m.rmse) << ','
        << detail::fmt_real(psnr_for_csv(cur_m.psnr_db)) << ','
        << detail::fmt_real(cur_m.ssim) << '\n';
  }

  std::printf("record %zu: goal-vs-optimal ssim %.4f (current-vs-optimal %.4f)\n",
              record_idx, goal_m.ssim, cur_m.ssim);
  std::printf("wrote %s_{goal,optimal,current,metrics}.csv\n", stem.c_str());
  return 0;
}

// --- rank-poses ------------------------------------------------------------

struct SceneInput {
  std::vector<Vec3> points;
  std::vector<GraspCandidate> candidates;
};

// Text scene format, one directive per line ('#' starts a comment):
//   point <x> <y> <z>
//   candidate <r00 r01 r02 r10 r11 r12 r20 r21 r22> <tx ty tz> <score>
SceneInput parse_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw artifact_error("scene file not found: " + path);
  SceneInput scene;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream iss(line);
    std::string tag;
    if (!(iss >> tag)) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    if (tag == "point") {
      Vec3 p;
      if (!(iss >> p.x >> p.y >> p.z))
        throw config_error(where + ": expected 'point x y z'");
      scene.points.push_back(p);
    } else if (tag == "candidate") {
      GraspCandidate c;
      bool ok = true;
      for (double& v : c.pose.r) ok = ok && static_cast<bool>(iss >> v);
      ok = ok && static_cast<bool>(iss >> c.pose.t.x >> c.pose.t.y >>
                                   c.pose.t.z >> c.score_s);
      if (!ok)
        throw config_error(
            where + ": expected 'candidate r00..r22 tx ty tz score'");
      scene.candidates.push_back(c);
    } else {
      throw config_error(where + ": unknown directive '" + tag + "'");
    }
    std::string extra;
    if (iss >> extra)
      throw config_error(where + ": trailing token '" + extra + "'");
  }
  if (scene.candidates.empty())
    throw config_error(path + ": scene has no candidates");
  if (scene.points.empty())
    throw config_error(path + ": scene has no surface points");
  return scene;
}

int cmd_rank_poses(const GlobalArgs& g, const std::string& scene_file,
                   const RankWeights& weights, std::size_t top_n) {
  const RunConfig cfg = resolve_config(g);
  const SceneInput scene = parse_scene(scene_file);

  // The planner's top-n by score enter the physics re-ranking.
  std::vector<std::size_t> order(scene.candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return scene.candidates[a].score_s >
                            scene.candidates[b].score_s;
                   });
  order.resize(std::min(top_n, order.size()));

  std::vector<GraspCandidate> picked;
  std::vector<PatchMetrics> metrics;
  for (std::size_t idx : order) {
    const ContactPatch patch = extract_patch(
        scene.points, scene.candidates[idx].pose, cfg.dataset.window_w,
        cfg.dataset.window_h, cfg.dataset.grid_rows, cfg.dataset.grid_cols);
    const std::size_t k = std::min<std::size_t>(12, patch.points.size() - 1);
    metrics.push_back(patch_metrics(patch, estimate_normals_curvature(patch, k)));
    picked.push_back(scene.candidates[idx]);
  }

  const std::vector<RankedCandidate> ranked =
      rank_candidates(picked, metrics, weights);

  std::printf("rank,candidate,score_s,s_rough,c_n,u_c,f_cost,w_p\n");
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const RankedCandidate& r = ranked[i];
    std::printf("%zu,%zu,%s,%s,%s,%s,%s,%s\n", i,
                order[r.original_index],
                detail::fmt_real(r.candidate.score_s).c_str(),
                detail::fmt_real(r.raw.s_rough).c_str(),
                detail::fmt_real(r.raw.c_n).c_str(),
                detail::fmt_real(r.raw.u_c).c_str(),
                detail::fmt_real(r.f_cost).c_str(),
                detail::fmt_real(r.w_p).c_str());
  }
  return 0;
}

// --- run-grasp / eval / report ----------------------------------------------

int cmd_run_grasp(const GlobalArgs& g, const StagePaths& paths,
                  std::size_t episodes, const std::string& goal_name,
                  const std::string& policy_name_arg,
                  const std::string& out_flag) {
  const RunConfig cfg = resolve_config(g);
  const Policy policy = policy_from_name(policy_name_arg);
  const GoalSource goal =
      goal_name.empty() ? cfg.experiment.goal : goal_source_from_name(goal_name);
  const std::size_t n = episodes ? episodes : cfg.experiment.episodes;

  const bool need_denoiser =
      policy == Policy::phytac && goal == GoalSource::ldm;
  const ExperimentContext ctx = load_context(cfg, paths, need_denoiser);
  const std::vector<EpisodeResult> results = run_policy(ctx, policy, goal, n);

  const std::string dir = out_flag.empty() ? cfg.out_dir : out_flag;
  std::filesystem::create_directories(dir);
  write_episodes_csv(dir + "/episodes.csv", results);
  write_traces_csv(dir + "/traces.csv", results);

  for (const CellRates& c : summarize(results))
    std::printf("%s %s: %zu episodes, SuG %.3f StG %.3f FOSG %.3f\n",
                policy_name(c.policy), texture_name(c.object_class),
                c.episodes, c.sug_rate, c.stg_rate, c.fosg_rate);
  std::printf("wrote %s/episodes.csv and %s/traces.csv\n", dir.c_str(),
              dir.c_str());
  return 0;
}

int cmd_eval(const GlobalArgs& g, const StagePaths& paths,
             const std::string& out_flag) {
  const RunConfig cfg = resolve_config(g);
  const ExperimentContext ctx = load_context(cfg, paths, true);
  const std::string dir = out_flag.empty() ? cfg.out_dir : out_flag;
  const EvalSummary sum = run_eval(ctx, dir);
  std::printf("evaluated %zu held-out records\n", sum.records);
  std::printf("goal    vs optimal: mae %.6f rmse %.6f psnr %.2f ssim %.4f\n",
              sum.mean_goal.mae, sum.mean_goal.rmse,
              psnr_for_csv(sum.mean_goal.psnr_db), sum.mean_goal.ssim);
  std::printf("current vs optimal: mae %.6f rmse %.6f psnr %.2f ssim %.4f\n",
              sum.mean_current.mae, sum.mean_current.rmse,
              psnr_for_csv(sum.mean_current.psnr_db), sum.mean_current.ssim);
  std::printf("wrote %s/image_metrics.csv\n", dir.c_str());
  return 0;
}

int cmd_report(const GlobalArgs& g, const StagePaths& paths,
               const std::string& out_flag) {
  const RunConfig cfg = resolve_config(g);
  const ExperimentContext ctx = load_context(cfg, paths, false);
  const std::string dir = out_flag.empty() ? cfg.out_dir : out_flag;
  run_report(ctx, dir);
  std::ifstream summary(dir + "/summary.txt");
  std::cout << summary.rdbuf();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"physics-conditioned tactile grasping pipeline"};
  app.require_subcommand(1);

  GlobalArgs g;
  app.add_option("--config", g.config_path,
                 "JSON config file (defaults used when omitted)");
  auto* seed_opt = app.add_option("--seed", g.seed, "override the config seed");
  app.add_option("--out", g.out_dir, "output directory (default 'out')");

  auto* gen = app.add_subcommand("gen-data", "synthesize a tactile dataset");
  std::string gen_out;
  gen->add_option("--out", gen_out, "dataset directory");
  gen->fallthrough();

  auto* tc = app.add_subcommand("train-codec",
                                "train the imprint autoencoder");
  std::string tc_data, tc_out;
  tc->add_option("--data", tc_data, "dataset directory")->required();
  tc->add_option("--out", tc_out, "codec parameter file");
  tc->fallthrough();

  auto* td = app.add_subcommand("train-diffusion",
                                "train the conditioned goal sampler");
  std::string td_data, td_codec, td_out;
  td->add_option("--data", td_data, "dataset directory")->required();
  td->add_option("--codec", td_codec, "codec parameter file")->required();
  td->add_option("--out", td_out, "denoiser parameter file");
  td->fallthrough();

  auto* sm = app.add_subcommand(
      "sample", "sample a goal imprint for one dataset record");
  std::size_t sm_record = 0;
  StagePaths sm_paths;
  std::string sm_out;
  sm->add_option("--record", sm_record, "dataset record index")->required();
  sm->add_option("--data", sm_paths.data_dir, "dataset directory")->required();
  sm->add_option("--codec", sm_paths.codec_file, "codec parameter file")
      ->required();
  sm->add_option("--diffusion", sm_paths.diffusion_file,
                 "denoiser parameter file")
      ->required();
  sm->add_option("--out", sm_out, "output directory");
  sm->fallthrough();

  auto* rp = app.add_subcommand("rank-poses",
                                "re-rank grasp poses by contact physics");
  std::string rp_scene;
  double rp_alpha = -1, rp_beta = -1, rp_gamma = -1, rp_delta = -1;
  std::size_t rp_top_n = 0;
  rp->add_option("--scene", rp_scene, "scene file (points + candidates)")
      ->required();
  rp->add_option("--alpha", rp_alpha, "roughness weight");
  rp->add_option("--beta", rp_beta, "normal-consistency weight");
  rp->add_option("--gamma", rp_gamma, "curvature-dispersion weight");
  rp->add_option("--delta", rp_delta, "score-vs-cost mixing weight");
  rp->add_option("--top-n", rp_top_n, "planner candidates to re-rank");
  rp->fallthrough();

  auto* rg = app.add_subcommand("run-grasp", "run seeded grasp episodes");
  StagePaths rg_paths;
  std::size_t rg_episodes = 0;
  std::string rg_goal, rg_policy = "phytac", rg_out;
  rg->add_option("--data", rg_paths.data_dir, "dataset directory")->required();
  rg->add_option("--codec", rg_paths.codec_file, "codec parameter file")
      ->required();
  rg->add_option("--diffusion", rg_paths.diffusion_file,
                 "denoiser parameter file (needed for --goal ldm)");
  rg->add_option("--episodes", rg_episodes, "episodes per object class");
  rg->add_option("--goal", rg_goal, "goal source: ldm|oracle");
  rg->add_option("--policy", rg_policy,
                 "policy: phytac|fixed-force|open-loop");
  rg->add_option("--out", rg_out, "output directory");
  rg->fallthrough();

  auto* ev = app.add_subcommand(
      "eval", "score sampled goals against optimal imprints");
  StagePaths ev_paths;
  std::string ev_out;
  ev->add_option("--data", ev_paths.data_dir, "dataset directory")->required();
  ev->add_option("--codec", ev_paths.codec_file, "codec parameter file")
      ->required();
  ev->add_option("--diffusion", ev_paths.diffusion_file,
                 "denoiser parameter file")
      ->required();
  ev->add_option("--out", ev_out, "output directory");
  ev->fallthrough();

  auto* rpt = app.add_subcommand("report",
                                 "run all policies and write the report");
  StagePaths rpt_paths;
  std::string rpt_out;
  rpt->add_option("--data", rpt_paths.data_dir, "dataset directory")
      ->required();
  rpt->add_option("--codec", rpt_paths.codec_file, "codec parameter file")
      ->required();
  rpt->add_option("--diffusion", rpt_paths.diffusion_file,
                  "denoiser parameter file (adds the image-metric section)");
  rpt->add_option("--out", rpt_out, "output directory");
  rpt->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  g.seed_set = seed_opt->count() > 0;

  try {
    if (gen->parsed()) return cmd_gen_data(g, gen_out);
    if (tc->parsed()) return cmd_train_codec(g, tc_data, tc_out);
    if (td->parsed()) return cmd_train_diffusion(g, td_data, td_codec, td_out);
    if (sm->parsed()) return cmd_sample(g, sm_record, sm_paths, sm_out);
    if (rp->parsed()) {
      const RunConfig cfg = resolve_config(g);
      GeometryConfig geo = cfg.geometry;
      if (rp_alpha >= 0) geo.weights.alpha = rp_alpha;
      if (rp_beta >= 0) geo.weights.beta = rp_beta;
      if (rp_gamma >= 0) geo.weights.gamma = rp_gamma;
      if (rp_delta >= 0) geo.weights.delta = rp_delta;
      if (rp_top_n) geo.top_n = rp_top_n;
      geo.validate();
      return cmd_rank_poses(g, rp_scene, geo.weights, geo.top_n);
    }
    if (rg->parsed())
      return cmd_run_grasp(g, rg_paths, rg_episodes, rg_goal, rg_policy,
                           rg_out);
    if (ev->parsed()) return cmd_eval(g, ev_paths, ev_out);
    if (rpt->parsed()) return cmd_report(g, rpt_paths, rpt_out);
    std::fprintf(stderr, "phytac: no subcommand given\n");
    return 2;
  } catch (const config_error& e) {
    std::fprintf(stderr, "phytac: config error: %s\n", e.what());
    return 2;
  } catch (const artifact_error& e) {
    std::fprintf(stderr, "phytac: missing artifact: %s\n", e.what());
    return 3;
  } catch (const numeric_error& e) {
    std::fprintf(stderr, "phytac: numerical failure: %s\n", e.what());
    return 4;
  } catch (const contract_error& e) {
    std::fprintf(stderr, "phytac: numerical failure: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "phytac: %s\n", e.what());
    return 1;
  }
}
