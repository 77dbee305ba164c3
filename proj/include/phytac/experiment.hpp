#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "phytac/codec.hpp"
#include "phytac/config.hpp"
#include "phytac/control.hpp"
#include "phytac/dataset.hpp"
#include "phytac/diffusion.hpp"
#include "phytac/metrics.hpp"
#include "phytac/plant.hpp"

namespace phytac {

enum class Policy { phytac, fixed_force, open_loop };
constexpr int kPolicyCount = 3;

inline const char* policy_name(Policy p) {
  switch (p) {
    case Policy::phytac: return "phytac";
    case Policy::fixed_force: return "fixed-force";
    case Policy::open_loop: return "open-loop";
  }
  throw contract_error("policy_name: unknown policy");
}

inline Policy policy_from_name(const std::string& name) {
  if (name == "phytac") return Policy::phytac;
  if (name == "fixed-force") return Policy::fixed_force;
  if (name == "open-loop") return Policy::open_loop;
  throw config_error(
      "policy must be \"phytac\", \"fixed-force\" or \"open-loop\", got \"" +
      name + "\"");
}

struct StagePaths {
  std::string data_dir;
  std::string codec_file;
  std::string diffusion_file;  // may stay empty when the goal is the oracle
};

// Everything the episode loops need, loaded once: the dataset with all
// record imprints pre-encoded, the codec, and (when requested) the sampler.
struct ExperimentContext {
  RunConfig cfg;
  DatasetManifest manifest;
  std::vector<GraspRecord> records;
  std::vector<LatentVector> latents;  // encode(imprint_current) per record
  ScaleVector scale;
  CodecParams codec;
  DenoiserParams denoiser;
  NoiseSchedule schedule;
  bool has_denoiser = false;
  std::vector<std::vector<std::size_t>> class_grasps;  // texture -> grasps
};

struct EpisodeResult {
  Policy policy = Policy::phytac;
  Texture object_class = Texture::smooth;
  std::size_t episode = 0;
  std::size_t object_index = 0;
  std::size_t grasp_index = 0;
  double f_star = 0.0;
  double goal_force = 0.0;  // commanded force target where the policy has one
  ServoTrace trace;
  GraspOutcome outcome;
};

struct CellRates {
  Policy policy = Policy::phytac;
  Texture object_class = Texture::smooth;
  std::size_t episodes = 0;
  double sug_rate = 0.0;
  double stg_rate = 0.0;
  double fosg_rate = 0.0;
};

struct EvalSummary {
  std::size_t records = 0;
  ImageMetrics mean_goal;     // sampled goal vs optimal imprint
  ImageMetrics mean_current;  // current imprint vs optimal imprint
};

namespace detail {

inline std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw artifact_error("cannot write " + path);
  return out;
}

}  // namespace detail

inline std::vector<GraspRecord> read_all_records(const std::string& dir) {
  DatasetReader reader(dir);
  std::vector<GraspRecord> records;
  records.reserve(reader.manifest().record_count);
  GraspRecord rec;
  while (reader.next(rec)) records.push_back(rec);
  return records;
}

// Load the pipeline artifacts, naming the stage that produces whatever is
// missing. The denoiser is optional unless `need_denoiser`.
inline ExperimentContext load_context(const RunConfig& cfg,
                                      const StagePaths& paths,
                                      bool need_denoiser) {
  ExperimentContext ctx;
  ctx.cfg = cfg;
  try {
    ctx.manifest = load_manifest(paths.data_dir);
    ctx.records = read_all_records(paths.data_dir);
  } catch (const artifact_error& e) {
    throw artifact_error(std::string(e.what()) +
                         "; run the gen-data stage first");
  }
  {
    std::ifstream probe(paths.codec_file, std::ios::binary);
    if (!probe)
      throw artifact_error("codec parameters missing at " + paths.codec_file +
                           "; run the train-codec stage first");
  }
  ctx.codec = load_codec(paths.codec_file);
  if (ctx.codec.rows != ctx.manifest.grid_rows ||
      ctx.codec.cols != ctx.manifest.grid_cols)
    throw artifact_error("codec grid does not match the dataset grid");

  if (need_denoiser || !paths.diffusion_file.empty()) {
    std::ifstream probe(paths.diffusion_file, std::ios::binary);
    if (!probe) {
      if (need_denoiser)
        throw artifact_error("diffusion parameters missing at " +
                             paths.diffusion_file +
                             "; run the train-diffusion stage first");
    } else {
      ctx.denoiser = load_denoiser(paths.diffusion_file);
      if (ctx.denoiser.m != ctx.codec.m)
        throw artifact_error(
            "diffusion latent width does not match the codec");
      ctx.schedule = make_schedule(ctx.denoiser.T, cfg.diffusion.beta_min,
                                   cfg.diffusion.beta_max);
      ctx.has_denoiser = true;
    }
  }

  ctx.latents.reserve(ctx.records.size());
  for (const GraspRecord& r : ctx.records)
    ctx.latents.push_back(encode(ctx.codec, r.imprint_current).mean);
  if (ctx.latents.size() >= 2) ctx.scale = fit_scale(ctx.latents);
  else ctx.scale.assign(ctx.codec.m, 1.0);

  ctx.class_grasps.assign(static_cast<std::size_t>(kTextureCount), {});
  for (std::size_t g = 0; g < ctx.manifest.grasps.size(); ++g) {
    const std::size_t oi = ctx.manifest.grasps[g].object_index;
    const Texture t = ctx.manifest.objects.at(oi).texture;
    ctx.class_grasps[static_cast<std::size_t>(t)].push_back(g);
  }
  return ctx;
}

namespace detail {

// Replay the grasp's recorded aperture sweep through the identifier so the
// servo starts from a data-grounded dynamics estimate.
inline DynamicsEstimate warm_start(const ExperimentContext& ctx,
                                   std::size_t grasp, const LatentVector& z_g,
                                   Rng& rng) {
  DynamicsEstimate est =
      init_dynamics(ctx.codec.m, ctx.cfg.control, rng);
  const GraspInfo& info = ctx.manifest.grasps.at(grasp);
  for (std::size_t f = 0; f + 1 < info.frame_count; ++f) {
    const std::size_t a = info.first_record + f;
    const std::size_t b = a + 1;
    est = rls_update(
        est, latent_error(ctx.latents[a], z_g, ctx.scale),
        ctx.records[b].feedback_u - ctx.records[a].feedback_u,
        latent_error(ctx.latents[b], z_g, ctx.scale));
  }
  return est;
}

// Close at full rate until the measured force reaches the preset, then hold.
inline ServoTrace run_fixed_force(const GraspEpisode& ep, double preset,
                                  const ControlConfig& cfg, Rng& rng) {
  ServoTrace tr;
  PlantState st;
  try {
    st = plant_at(ep.patch, ep.start_aperture, ep.material, ep.plant, rng);
  } catch (const force_limit_error&) {
    tr.safety_failure = true;
    return tr;
  }
  for (std::size_t frame = 0; frame < cfg.frame_budget; ++frame) {
    const bool reached = st.normal_force >= preset;
    const double du = reached ? 0.0 : -cfg.du_limit;
    tr.frames.push_back({frame, st.aperture_u, st.normal_force, 0.0, du,
                         false, st.slipping, reached});
    if (reached) {
      tr.held = true;
      tr.hold_frame = frame;
      break;
    }
    try {
      st = step(st, du, ep.patch, ep.material, ep.plant, rng);
    } catch (const force_limit_error&) {
      tr.safety_failure = true;
      break;
    }
  }
  tr.final_aperture = st.aperture_u;
  tr.final_force = st.normal_force;
  tr.final_slipping = st.slipping;
  return tr;
}

// Close to the planner's grip width with no feedback at all, then hold.
inline ServoTrace run_open_loop(const GraspEpisode& ep, double u_target,
                                const ControlConfig& cfg, Rng& rng) {
  ServoTrace tr;
  PlantState st;
  try {
    st = plant_at(ep.patch, ep.start_aperture, ep.material, ep.plant, rng);
  } catch (const force_limit_error&) {
    tr.safety_failure = true;
    return tr;
  }
  for (std::size_t frame = 0; frame < cfg.frame_budget; ++frame) {
    const double gap = u_target - st.aperture_u;
    const bool reached = std::abs(gap) <= 1e-9;
    const double du =
        reached ? 0.0 : std::clamp(gap, -cfg.du_limit, cfg.du_limit);
    tr.frames.push_back({frame, st.aperture_u, st.normal_force, 0.0, du,
                         false, st.slipping, reached});
    if (reached) {
      tr.held = true;
      tr.hold_frame = frame;
      break;
    }
    try {
      st = step(st, du, ep.patch, ep.material, ep.plant, rng);
    } catch (const force_limit_error&) {
      tr.safety_failure = true;
      break;
    }
  }
  tr.final_aperture = st.aperture_u;
  tr.final_force = st.normal_force;
  tr.final_slipping = st.slipping;
  return tr;
}

}  // namespace detail

// One seeded episode of the chosen policy on the chosen dataset grasp.
inline EpisodeResult run_episode(const ExperimentContext& ctx, Policy policy,
                                 GoalSource goal, Texture object_class,
                                 std::size_t episode, std::size_t grasp,
                                 Rng& rng) {
  const GraspInfo& info = ctx.manifest.grasps.at(grasp);
  const GraspRecord& rec = ctx.records.at(info.first_record);
  const ControlConfig& control = ctx.cfg.control;
  const ExperimentConfig& ex = ctx.cfg.experiment;

  EpisodeResult out;
  out.policy = policy;
  out.object_class = object_class;
  out.episode = episode;
  out.object_index = info.object_index;
  out.grasp_index = grasp;
  out.f_star =
      optimal_force(rec.mass_kg, rec.friction_mu, ctx.cfg.plant);

  GraspEpisode ep;
  ep.patch = rec.patch;
  ep.material = {rec.texture, rec.mass_kg, rec.friction_mu};
  ep.plant = ctx.cfg.plant;
  const double jitter =
      ex.start_closure_jitter * (2.0 * rng.uniform() - 1.0);
  ep.start_aperture = std::clamp(
      ctx.cfg.plant.contact_aperture - ex.start_closure - jitter, 0.0,
      ctx.cfg.plant.aperture_max);

  if (policy == Policy::phytac) {
    out.goal_force = control.goal_force_factor * out.f_star;
    LatentVector z_g;
    if (goal == GoalSource::oracle) {
      const double u_goal = aperture_for_force(ep.patch, out.goal_force,
                                               ep.plant, ep.material.texture);
      PlantConfig crisp = ep.plant;
      crisp.sensor_noise_sigma = 0.0;
      Rng goal_rng = rng.derive(1);
      z_g = encode(ctx.codec, render_imprint(ep.patch, u_goal, crisp,
                                             ep.material.texture, goal_rng))
                .mean;
    } else {
      if (!ctx.has_denoiser)
        throw artifact_error(
            "sampled goals need diffusion parameters; run the "
            "train-diffusion stage first");
      Rng render_rng = rng.derive(2);
      const ImprintImage x_c =
          render_imprint(ep.patch, ep.start_aperture, ep.plant,
                         ep.material.texture, render_rng);
      Rng sample_rng = rng.derive(3);
      z_g = sample_goal(ctx.denoiser, ctx.codec, x_c, ep.patch.depth_map,
                        rec.mass_kg, rec.texture,
                        ctx.cfg.diffusion.ddim_steps, ctx.schedule,
                        sample_rng)
                .z_g;
    }
    DynamicsEstimate est = detail::warm_start(ctx, grasp, z_g, rng);
    out.trace = run_servo(ep, ctx.codec, z_g, ctx.scale, est, control, rng);
  } else if (policy == Policy::fixed_force) {
    const ObjectInfo& ref = ctx.manifest.objects.at(0);
    out.goal_force =
        ex.fixed_force_factor *
        optimal_force(ref.mass_kg, ref.friction_mu, ctx.cfg.plant);
    out.trace = detail::run_fixed_force(ep, out.goal_force, control, rng);
  } else {
    const double u_target =
        std::clamp(info.u_star_mm + ex.open_loop_sigma_mm * rng.normal(), 0.0,
                   ctx.cfg.plant.aperture_max);
    out.trace = detail::run_open_loop(ep, u_target, control, rng);
  }

  out.outcome = classify_outcome(out.trace, out.f_star, ex.tol_f);
  return out;
}

// All seeded episodes of one policy: `episodes` per object class, cycling
// through that class's dataset grasps.
inline std::vector<EpisodeResult> run_policy(const ExperimentContext& ctx,
                                             Policy policy, GoalSource goal,
                                             std::size_t episodes) {
  std::vector<EpisodeResult> results;
  Rng root(ctx.cfg.seed);
  const int pi = static_cast<int>(policy);
  for (int ti = 0; ti < kTextureCount; ++ti) {
    const auto& grasps = ctx.class_grasps.at(static_cast<std::size_t>(ti));
    if (grasps.empty()) continue;
    for (std::size_t k = 0; k < episodes; ++k) {
      const std::uint64_t salt =
          (static_cast<std::uint64_t>(pi * kTextureCount + ti) << 32) + k + 1;
      Rng rng = root.derive(salt);
      results.push_back(run_episode(ctx, policy, goal,
                                    static_cast<Texture>(ti), k,
                                    grasps[k % grasps.size()], rng));
    }
  }
  return results;
}

inline std::vector<CellRates> summarize(
    const std::vector<EpisodeResult>& results) {
  std::vector<CellRates> cells;
  for (int pi = 0; pi < kPolicyCount; ++pi)
    for (int ti = 0; ti < kTextureCount; ++ti) {
      CellRates cell;
      cell.policy = static_cast<Policy>(pi);
      cell.object_class = static_cast<Texture>(ti);
      std::size_t sug = 0, stg = 0, fosg = 0;
      for (const EpisodeResult& r : results) {
        if (r.policy != cell.policy || r.object_class != cell.object_class)
          continue;
        ++cell.episodes;
        sug += r.outcome.sug;
        stg += r.outcome.stg;
        fosg += r.outcome.fosg;
      }
      if (cell.episodes > 0) {
        const double n = static_cast<double>(cell.episodes);
        cell.sug_rate = static_cast<double>(sug) / n;
        cell.stg_rate = static_cast<double>(stg) / n;
        cell.fosg_rate = static_cast<double>(fosg) / n;
        cells.push_back(cell);
      }
    }
  return cells;
}

inline void write_summary_csv(const std::string& path,
                              const std::vector<CellRates>& cells) {
  std::ofstream out = detail::open_csv(path);
  out << "policy,object_class,episodes,sug_rate,stg_rate,fosg_rate\n";
  for (const CellRates& c : cells)
    out << policy_name(c.policy) << ',' << texture_name(c.object_class) << ','
        << c.episodes << ',' << detail::fmt_real(c.sug_rate) << ','
        << detail::fmt_real(c.stg_rate) << ','
        << detail::fmt_real(c.fosg_rate) << '\n';
}

inline void write_episodes_csv(const std::string& path,
                               const std::vector<EpisodeResult>& results) {
  std::ofstream out = detail::open_csv(path);
  out << "policy,object_class,episode,object_index,grasp_index,held,"
         "hold_frame,frames,final_aperture_mm,final_force_n,f_star_n,"
         "goal_force_n,sug,stg,fosg,safety_failure\n";
  for (const EpisodeResult& r : results) {
    out << policy_name(r.policy) << ',' << texture_name(r.object_class) << ','
        << r.episode << ',' << r.object_index << ',' << r.grasp_index << ','
        << (r.trace.held ? 1 : 0) << ','
        << (r.trace.held ? static_cast<long long>(r.trace.hold_frame) : -1)
        << ',' << r.trace.frames.size() << ','
        << detail::fmt_real(r.trace.final_aperture) << ','
        << detail::fmt_real(r.trace.final_force) << ','
        << detail::fmt_real(r.f_star) << ','
        << detail::fmt_real(r.goal_force) << ',' << (r.outcome.sug ? 1 : 0)
        << ',' << (r.outcome.stg ? 1 : 0) << ',' << (r.outcome.fosg ? 1 : 0)
        << ',' << (r.trace.safety_failure ? 1 : 0) << '\n';
  }
}

inline void write_traces_csv(const std::string& path,
                             const std::vector<EpisodeResult>& results) {
  std::ofstream out = detail::open_csv(path);
  out << "policy,object_class,episode,frame,aperture_mm,force_n,d_c,du_mm,"
         "clamped,slipping,hold\n";
  for (const EpisodeResult& r : results)
    for (const ServoFrame& f : r.trace.frames)
      out << policy_name(r.policy) << ',' << texture_name(r.object_class)
          << ',' << r.episode << ',' << f.frame << ','
          << detail::fmt_real(f.aperture) << ',' << detail::fmt_real(f.force)
          << ',' << detail::fmt_real(f.d_c) << ','
          << detail::fmt_real(f.du) << ',' << (f.clamped ? 1 : 0) << ','
          << (f.slipping ? 1 : 0) << ',' << (f.hold ? 1 : 0) << '\n';
}

// Score the sampled goal imprints against the optimal imprints on the
// trailing `holdout` records, with the raw current imprint as the baseline
// comparison. The perceptual-metric column is reported as unavailable.
inline EvalSummary run_eval(const ExperimentContext& ctx,
                            const std::string& out_dir) {
  if (!ctx.has_denoiser)
    throw artifact_error(
        "eval needs diffusion parameters; run the train-diffusion stage "
        "first");
  const std::size_t n = ctx.records.size();
  if (ctx.cfg.experiment.holdout > n)
    throw config_error("experiment.holdout exceeds the dataset size");
  const std::size_t first = n - ctx.cfg.experiment.holdout;

  std::filesystem::create_directories(out_dir);
  std::ofstream out = detail::open_csv(out_dir + "/image_metrics.csv");
  out << "record,pair,mae,rmse,psnr_db,ssim,lpips\n";

  EvalSummary sum;
  Rng root(ctx.cfg.seed);
  std::vector<ImageMetrics> goal_rows, current_rows;
  for (std::size_t i = first; i < n; ++i) {
    const GraspRecord& rec = ctx.records[i];
    Rng rng = root.derive((std::uint64_t{7} << 40) + i);
    const GoalSample g =
        sample_goal(ctx.denoiser, ctx.codec, rec.imprint_current,
                    rec.patch.depth_map, rec.mass_kg, rec.texture,
                    ctx.cfg.diffusion.ddim_steps, ctx.schedule, rng);
    goal_rows.push_back(image_metrics(g.x_g, rec.imprint_optimal));
    current_rows.push_back(
        image_metrics(rec.imprint_current, rec.imprint_optimal));
  }

  auto write_row = [&](const std::string& label, const std::string& pair,
                       const ImageMetrics& m) {
    out << label << ',' << pair << ',' << detail::fmt_real(m.mae) << ','
        << detail::fmt_real(m.rmse) << ','
        << detail::fmt_real(psnr_for_csv(m.psnr_db)) << ','
        << detail::fmt_real(m.ssim) << ",n/a\n";
  };
  auto mean_of = [](const std::vector<ImageMetrics>& rows) {
    ImageMetrics m;
    for (const ImageMetrics& r : rows) {
      m.mae += r.mae;
      m.rmse += r.rmse;
      m.psnr_db += psnr_for_csv(r.psnr_db);
      m.ssim += r.ssim;
    }
    const double n = std::max<std::size_t>(rows.size(), 1);
    m.mae /= n;
    m.rmse /= n;
    m.psnr_db /= n;
    m.ssim /= n;
    return m;
  };

  for (std::size_t k = 0; k < goal_rows.size(); ++k)
    write_row(std::to_string(first + k), "goal_vs_optimal", goal_rows[k]);
  for (std::size_t k = 0; k < current_rows.size(); ++k)
    write_row(std::to_string(first + k), "current_vs_optimal",
              current_rows[k]);
  sum.records = goal_rows.size();
  sum.mean_goal = mean_of(goal_rows);
  sum.mean_current = mean_of(current_rows);
  write_row("mean", "goal_vs_optimal", sum.mean_goal);
  write_row("mean", "current_vs_optimal", sum.mean_current);
  return sum;
}

struct ExperimentReport {
  std::vector<EpisodeResult> episodes;
  std::vector<CellRates> cells;
  EvalSummary eval;
  bool has_eval = false;
};

// The full orchestration: every policy on every object class, the goal-model
// image table when the sampler is available, and all report files.
inline ExperimentReport run_report(const ExperimentContext& ctx,
                                   const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  ExperimentReport rep;
  for (int pi = 0; pi < kPolicyCount; ++pi) {
    const std::vector<EpisodeResult> part =
        run_policy(ctx, static_cast<Policy>(pi), ctx.cfg.experiment.goal,
                   ctx.cfg.experiment.episodes);
    rep.episodes.insert(rep.episodes.end(), part.begin(), part.end());
  }
  rep.cells = summarize(rep.episodes);
  write_summary_csv(out_dir + "/summary.csv", rep.cells);
  write_episodes_csv(out_dir + "/episodes.csv", rep.episodes);
  write_traces_csv(out_dir + "/traces.csv", rep.episodes);
  if (ctx.has_denoiser) {
    rep.eval = run_eval(ctx, out_dir);
    rep.has_eval = true;
  }

  std::ofstream txt(out_dir + "/summary.txt", std::ios::binary);
  if (!txt) throw artifact_error("cannot write " + out_dir + "/summary.txt");
  txt << "grasp outcome rates (seed " << ctx.cfg.seed << ", "
      << ctx.cfg.experiment.episodes << " episodes per cell, goal: "
      << goal_source_name(ctx.cfg.experiment.goal) << ")\n\n";
  txt << "policy        class    episodes  sug    stg    fosg\n";
  for (const CellRates& c : rep.cells) {
    char line[128];
    std::snprintf(line, sizeof line, "%-13s %-8s %8zu  %.3f  %.3f  %.3f\n",
                  policy_name(c.policy), texture_name(c.object_class),
                  c.episodes, c.sug_rate, c.stg_rate, c.fosg_rate);
    txt << line;
  }
  if (rep.has_eval) {
    txt << "\ngoal model on " << rep.eval.records
        << " held-out records (mean, vs optimal imprint)\n";
    char line[160];
    std::snprintf(line, sizeof line,
                  "  sampled goal : mae %.4f rmse %.4f psnr %.2f ssim %.4f\n",
                  rep.eval.mean_goal.mae, rep.eval.mean_goal.rmse,
                  rep.eval.mean_goal.psnr_db, rep.eval.mean_goal.ssim);
    txt << line;
    std::snprintf(line, sizeof line,
                  "  current      : mae %.4f rmse %.4f psnr %.2f ssim %.4f\n",
                  rep.eval.mean_current.mae, rep.eval.mean_current.rmse,
                  rep.eval.mean_current.psnr_db, rep.eval.mean_current.ssim);
    txt << line;
  }
  txt << "\nfiles: summary.csv episodes.csv traces.csv"
      << (rep.has_eval ? " image_metrics.csv" : "") << "\n";
  return rep;
}

}  // namespace phytac
