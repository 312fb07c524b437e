// facecloak command line: batch protection runs, evaluation against a
// held-out model, single-image diagnostics, and the mock provider bridge.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "facecloak/api.hpp"
#include "facecloak/pipeline.hpp"
#include "facecloak/probe.hpp"

namespace fc = facecloak;

namespace {

struct ConfigFlags {
  std::optional<int> inversion_iters, attack_iters;
  std::optional<double> inversion_lr, lambda2, lr, max_grad_norm;
  std::optional<double> w_adv, w_clip, w_latent;
  std::optional<std::string> mode;
  std::optional<uint64_t> seed;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--inversion-iters", inversion_iters, "generator fine-tuning iterations");
    cmd.add_option("--inversion-lr", inversion_lr, "fine-tuning learning rate");
    cmd.add_option("--lambda2", lambda2, "weight of the pixel term during fine-tuning");
    cmd.add_option("--attack-iters", attack_iters, "latent search iterations");
    cmd.add_option("--lr", lr, "latent search learning rate");
    cmd.add_option("--max-grad-norm", max_grad_norm, "gradient clipping norm, 0 disables");
    cmd.add_option("--weight-adv", w_adv, "adversarial loss weight");
    cmd.add_option("--weight-clip", w_clip, "makeup direction loss weight");
    cmd.add_option("--weight-latent", w_latent, "latent leash weight");
    cmd.add_option("--mode", mode, "attack mode: impersonate+dodge or dodge-only");
    cmd.add_option("--seed", seed, "base seed for per-job randomness");
  }

  void apply(fc::ProtectionConfig& cfg) const {
    if (inversion_iters) cfg.inversion_iters = *inversion_iters;
    if (inversion_lr) cfg.inversion_lr = *inversion_lr;
    if (lambda2) cfg.lambda2 = *lambda2;
    if (attack_iters) cfg.attack_iters = *attack_iters;
    if (lr) cfg.lr = *lr;
    if (max_grad_norm) cfg.max_grad_norm = *max_grad_norm;
    if (w_adv) cfg.weights.adv = *w_adv;
    if (w_clip) cfg.weights.clip = *w_clip;
    if (w_latent) cfg.weights.latent = *w_latent;
    if (mode) cfg.mode = fc::attack_mode_from_name(*mode);
    if (seed) cfg.seed = *seed;
  }
};

struct RunFlags {
  std::string manifest_path;
  std::string config_path;
  std::string registry_path;
  std::string output_dir;
  std::string run_id;
  std::optional<int> workers;
  std::optional<uint64_t> world_seed;
  std::vector<std::string> prompts;
  bool builtin_prompts = false;
  ConfigFlags config;

  void add_to(CLI::App& cmd, bool with_config) {
    cmd.add_option("-m,--manifest", manifest_path, "job manifest (json)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd.add_option("--output-dir", output_dir, "override the manifest output directory");
    cmd.add_option("--run-id", run_id, "override the manifest run id");
    cmd.add_option("--workers", workers, "parallel jobs");
    cmd.add_option("--world-seed", world_seed, "toy world seed");
    cmd.add_option("--prompt", prompts, "makeup prompt, repeatable; replaces manifest prompts");
    cmd.add_flag("--builtin-prompts", builtin_prompts, "use the five shipped prompt styles");
    if (with_config) {
      cmd.add_option("--config", config_path, "json config layered over the manifest config")
          ->check(CLI::ExistingFile);
      cmd.add_option("--registry", registry_path, "checkpoint registry for non-toy runs")
          ->check(CLI::ExistingFile);
      config.add_to(cmd);
    }
  }

  // defaults < manifest < config file < explicit flags
  fc::JobManifest resolve() const {
    fc::json j;
    try {
      j = fc::json::parse(fc::read_file(manifest_path));
    } catch (const fc::json::exception& e) {
      throw fc::Error(fc::Errc::bad_manifest,
                      std::string("manifest is not valid json: ") + e.what());
    }
    fc::JobManifest m = fc::manifest_from_json(j);
    if (!config_path.empty()) {
      m.config = fc::config_from_json(fc::json::parse(fc::read_file(config_path)));
    }
    config.apply(m.config);
    if (!output_dir.empty()) m.output_dir = output_dir;
    if (!run_id.empty()) m.run_id = run_id;
    if (workers) m.workers = *workers;
    if (world_seed) m.world_seed = *world_seed;
    if (builtin_prompts) m.prompts = fc::builtin_prompt_styles();
    if (!prompts.empty()) m.prompts = prompts;
    m.validate();
    return m;
  }
};

int run_protect(const RunFlags& flags) {
  fc::JobManifest m = flags.resolve();

  if (!m.toy && !flags.registry_path.empty()) {
    const auto reg = fc::load_registry(flags.registry_path);
    std::vector<std::string> required = m.surrogate_models;
    required.push_back(m.blackbox_model);
    for (const auto& id : required) {
      std::string status = "verified";
      if (!reg.has(id)) {
        status = "not in registry";
      } else {
        try {
          reg.resolve(id);
        } catch (const fc::Error& e) {
          status = e.what();
        }
      }
      std::cerr << "checkpoint " << id << ": " << status << "\n";
    }
    if (fc::checkpoints_available(reg, required)) {
      std::cerr << "checkpoints verified, but this build has no checkpoint inference; "
                   "the toy world runs the pipeline instead\n";
    }
  }

  const fc::ProtectSummary summary = fc::cmd_protect(m);
  std::printf("jobs: %zu  done: %d  resumed: %d  failed: %d\n", summary.jobs.size(),
              summary.done, summary.resumed, summary.failed);
  return summary.exit_code();
}

int run_evaluate(const RunFlags& flags) {
  const fc::JobManifest m = flags.resolve();
  const fc::EvaluationRun run = fc::cmd_evaluate(m);
  fc::write_evaluation(m, run);
  std::cout << fc::render_evaluation_table(run);
  const auto root = std::filesystem::path(m.output_dir) / m.run_id;
  std::cerr << "wrote " << (root / "evaluation.json").string() << " and "
            << (root / "evaluation.txt").string() << "\n";
  return run.zero_coverage ? 1 : 0;
}

struct InvertFlags {
  std::string image_path;
  std::optional<uint64_t> toy_face;
  uint64_t world_seed = 42;
  std::string save_latent, save_recon;
  ConfigFlags config;
};

int run_invert(const InvertFlags& flags) {
  const fc::ToyWorld world = fc::make_toy_world(flags.world_seed);
  fc::ProtectionConfig cfg;
  flags.config.apply(cfg);
  cfg.validate();

  fc::FaceImage img;
  std::string image_id;
  if (!flags.image_path.empty()) {
    img = fc::load_image(flags.image_path);
    image_id = flags.image_path;
  } else if (flags.toy_face) {
    img = fc::sample_face(world, *flags.toy_face).image;
    image_id = "toy-" + std::to_string(*flags.toy_face);
  } else {
    throw fc::Error(fc::Errc::bad_manifest, "invert needs --image or --toy-face");
  }

  const int res = world.generator.resolution();
  const fc::FaceImage aligned = fc::ensure_aligned(img, res, nullptr).image;
  const fc::InversionResult inv = fc::invert_image(world, aligned, cfg, image_id);

  fc::json out;
  out["image_id"] = inv.image_id;
  out["recon_l2"] = inv.recon_l2;
  out["recon_lpips"] = inv.recon_lpips;
  out["initial_objective"] = inv.initial_objective;
  out["final_objective"] = inv.final_objective;
  out["finetuned"] = inv.provenance == fc::WeightProvenance::finetuned;
  std::cout << out.dump(2) << "\n";

  if (!flags.save_latent.empty()) {
    const auto q = fc::quantize8(aligned);
    fc::save_latent(flags.save_latent, inv.w_inv,
                    fc::sha256_hex(std::span<const uint8_t>(q)), "toy-encoder");
  }
  if (!flags.save_recon.empty()) {
    fc::save_png(flags.save_recon, inv.weights.generate(inv.w_inv));
  }
  return 0;
}

struct CalibrateFlags {
  std::string distances_path;
  uint64_t world_seed = 42;
  int pairs = 500;
  double fmr = 0.01;
  std::string model_id;
};

int run_calibrate(const CalibrateFlags& flags) {
  std::vector<double> d;
  std::string source;
  if (!flags.distances_path.empty()) {
    std::istringstream in(fc::read_file(flags.distances_path));
    double v;
    while (in >> v) d.push_back(v);
    source = flags.distances_path;
  } else {
    const fc::ToyWorld world = fc::make_toy_world(flags.world_seed);
    const fc::ToyFaceEmbedder& model = flags.model_id.empty()
                                           ? world.embedders.back()
                                           : world.embedder(flags.model_id);
    fc::Rng rng(fc::derive_seed(flags.world_seed, "cli-calibration"));
    for (int i = 0; i < flags.pairs; ++i) {
      const auto a = fc::sample_face(world, rng);
      const auto b = fc::sample_face(world, rng);
      d.push_back(fc::cosine_distance(fc::embed_fitted(model, a.image),
                                      fc::embed_fitted(model, b.image)));
    }
    source = model.spec().model_id + " impostor pairs";
  }

  const fc::CalibrationResult r = fc::calibrate_threshold_detailed(std::move(d), flags.fmr);
  fc::json out;
  out["tau"] = r.tau;
  out["pairs"] = r.pairs;
  out["false_matches"] = r.false_matches;
  out["wide_confidence"] = r.wide_confidence;
  out["fmr"] = flags.fmr;
  out["source"] = source;
  std::cout << out.dump(2) << "\n";
  if (r.wide_confidence) {
    std::cerr << "warning: too few pairs to resolve this false match rate\n";
  }
  return 0;
}

struct ApiVerifyFlags {
  std::string image_a, image_b;
  std::string endpoint;
  std::string credentials;
  bool mock = false;
  uint64_t world_seed = 42;
  int max_attempts = 3;
  int backoff_ms = 100;
};

int run_api_verify(const ApiVerifyFlags& flags) {
  const fc::FaceImage a = fc::load_image(flags.image_a);
  const fc::FaceImage b = fc::load_image(flags.image_b);

  std::unique_ptr<fc::MockVerifyServer> mock;
  std::string endpoint = flags.endpoint;
  std::string key;
  if (flags.mock) {
    mock = std::make_unique<fc::MockVerifyServer>(flags.world_seed);
    mock->start();
    endpoint = mock->endpoint();
    key = mock->api_key();
  } else {
    if (endpoint.empty()) {
      throw fc::Error(fc::Errc::bad_manifest, "api-verify needs --endpoint or --mock");
    }
    key = flags.credentials.empty() ? fc::read_api_key_from_env()
                                    : fc::read_api_key(flags.credentials);
  }

  fc::VerifyApiClient client(endpoint, key, flags.max_attempts, flags.backoff_ms);
  const fc::ApiVerifyResult r = client.verify(a, b);
  fc::json out;
  out["confidence"] = r.confidence;
  out["provider"] = r.provider;
  out["latency_ms"] = r.latency_ms;
  std::cout << out.dump(2) << "\n";
  return 0;
}

struct DemoFlags {
  int runs = 60;
  uint64_t world_seed = 7;
  uint64_t probe_seed = 424242;
};

int run_toy_demo(const DemoFlags& flags) {
  std::cerr << "building a toy world and attacking its held-out face model; "
               "this takes a few seconds\n";
  const fc::ToyWorld world = fc::make_toy_world(flags.world_seed);
  fc::ProbeOptions opt;
  opt.seed = flags.probe_seed;
  const fc::ProbeReport r = fc::transferability_probe(world, flags.runs, opt);

  std::printf("held-out model        %s\n", r.holdout_model.c_str());
  std::printf("threshold (1%% FMR)    %.4f%s\n", r.tau,
              r.wide_confidence ? "  (low confidence: few pairs)" : "");
  std::printf("runs                  %d\n", r.n_runs);
  std::printf("clean images passing  %.1f%%\n", r.clean_psr);
  std::printf("protected passing     %.1f%%\n", r.protected_psr);
  std::printf("transfer gain         %+.1f points\n", r.protected_psr - r.clean_psr);
  fc::warn_toy_fallback("demo mode");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"face privacy protection: makeup-guided adversarial latent search"};
  app.require_subcommand(1);

  RunFlags protect_flags;
  auto* protect_cmd = app.add_subcommand("protect", "run every job in a manifest");
  protect_flags.add_to(*protect_cmd, true);

  RunFlags eval_flags;
  auto* eval_cmd =
      app.add_subcommand("evaluate", "score a finished run against the held-out model");
  eval_flags.add_to(*eval_cmd, true);

  InvertFlags invert_flags;
  auto* invert_cmd = app.add_subcommand("invert", "diagnose inversion quality for one image");
  invert_cmd->add_option("--image", invert_flags.image_path, "image file")
      ->check(CLI::ExistingFile);
  invert_cmd->add_option("--toy-face", invert_flags.toy_face, "sample a toy face by seed");
  invert_cmd->add_option("--world-seed", invert_flags.world_seed, "toy world seed");
  invert_cmd->add_option("--save-latent", invert_flags.save_latent, "write the pivot latent");
  invert_cmd->add_option("--save-recon", invert_flags.save_recon, "write the reconstruction");
  invert_flags.config.add_to(*invert_cmd);

  CalibrateFlags cal_flags;
  auto* cal_cmd =
      app.add_subcommand("calibrate", "pick a match threshold at a false match rate");
  cal_cmd->add_option("--distances", cal_flags.distances_path,
                      "file of impostor distances, one per line")
      ->check(CLI::ExistingFile);
  cal_cmd->add_option("--world-seed", cal_flags.world_seed, "toy world seed");
  cal_cmd->add_option("--pairs", cal_flags.pairs, "impostor pairs to draw");
  cal_cmd->add_option("--fmr", cal_flags.fmr, "false match rate budget");
  cal_cmd->add_option("--model", cal_flags.model_id, "embedder to calibrate, default held-out");

  ApiVerifyFlags api_flags;
  auto* api_cmd =
      app.add_subcommand("api-verify", "score two images through a verification service");
  api_cmd->add_option("--image-a", api_flags.image_a, "first image")
      ->required()
      ->check(CLI::ExistingFile);
  api_cmd->add_option("--image-b", api_flags.image_b, "second image")
      ->required()
      ->check(CLI::ExistingFile);
  api_cmd->add_option("--endpoint", api_flags.endpoint, "service base url");
  api_cmd->add_option("--credentials", api_flags.credentials,
                      "api key file; default $FACECLOAK_API_CREDENTIALS");
  api_cmd->add_flag("--mock", api_flags.mock, "serve and query the local mock provider");
  api_cmd->add_option("--world-seed", api_flags.world_seed, "mock provider world seed");
  api_cmd->add_option("--max-attempts", api_flags.max_attempts, "retry budget");
  api_cmd->add_option("--backoff-ms", api_flags.backoff_ms, "base retry backoff");

  DemoFlags demo_flags;
  auto* demo_cmd = app.add_subcommand(
      "toy-demo", "end-to-end transferability demonstration on the toy world");
  demo_cmd->add_option("--runs", demo_flags.runs, "faces to protect");
  demo_cmd->add_option("--world-seed", demo_flags.world_seed, "toy world seed");
  demo_cmd->add_option("--probe-seed", demo_flags.probe_seed, "probe randomness seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help/usage or the parse error
    return code == 0 ? 0 : 2;
  }

  try {
    if (*protect_cmd) return run_protect(protect_flags);
    if (*eval_cmd) return run_evaluate(eval_flags);
    if (*invert_cmd) return run_invert(invert_flags);
    if (*cal_cmd) return run_calibrate(cal_flags);
    if (*api_cmd) return run_api_verify(api_flags);
    if (*demo_cmd) return run_toy_demo(demo_flags);
  } catch (const fc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
