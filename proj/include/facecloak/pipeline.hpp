#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <numeric>
#include <thread>
#include <vector>

#include "facecloak/fid.hpp"
#include "facecloak/image_io.hpp"
#include "facecloak/manifest.hpp"
#include "facecloak/metrics.hpp"
#include "facecloak/registry.hpp"
#include "facecloak/search.hpp"
#include "facecloak/serialize.hpp"
#include "facecloak/toy_world.hpp"
#include "facecloak/verification.hpp"

namespace facecloak {

namespace fsys = std::filesystem;

// Fixed artifact names inside <output_dir>/<run_id>/<image_id>/<prompt_slug>/
inline constexpr const char* kProtectedFile = "protected.png";
inline constexpr const char* kLatentFile = "latent.bin";
inline constexpr const char* kTraceFile = "trace.csv";
inline constexpr const char* kProvenanceFile = "provenance.json";

inline fsys::path job_dir(const JobManifest& m, const std::string& image_id,
                          const std::string& prompt) {
  return fsys::path(m.output_dir) / m.run_id / image_id / prompt_slug(prompt);
}

// A job is complete when its provenance exists and every checksum it records
// still matches the file on disk; anything less is redone from scratch.
inline bool job_complete(const fsys::path& dir) {
  try {
    const Provenance p =
        provenance_from_json(json::parse(read_file((dir / kProvenanceFile).string())));
    if (p.checksums.empty()) return false;
    for (const auto& [name, hash] : p.checksums) {
      const fsys::path f = dir / name;
      if (!fsys::exists(f) || sha256_file(f.string()) != hash) return false;
    }
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

// Toy datasets have no files: the image id itself seeds a reproducible face.
inline FaceImage toy_image_for(const ToyWorld& world, const std::string& image_id) {
  return sample_face(world, derive_seed(world.seed, "image-" + image_id)).image;
}

inline FaceImage manifest_image(const JobManifest& m, const ToyWorld& world,
                                const ManifestImage& entry) {
  if (m.toy) return toy_image_for(world, entry.id);
  return load_image(m.resolve_path(entry.path));
}

// Images pair with targets round-robin: image k impersonates target k mod T.
inline int target_index_for(const JobManifest& m, int image_idx) {
  if (m.targets.empty()) return -1;
  return image_idx % static_cast<int>(m.targets.size());
}

inline uint64_t job_seed(const JobManifest& m, const std::string& image_id,
                         const std::string& prompt) {
  return derive_seed(m.config.seed, image_id + "\x1f" + prompt);
}

struct JobOutcome {
  std::string image_id;
  std::string prompt;
  enum class Status { done, resumed, failed } status = Status::done;
  std::string error;
};

struct ProtectSummary {
  std::vector<JobOutcome> jobs;
  int done = 0;
  int resumed = 0;
  int failed = 0;

  // nonzero only when nothing at all succeeded
  int exit_code() const { return (!jobs.empty() && failed == static_cast<int>(jobs.size())) ? 1 : 0; }
};

inline ProtectSummary cmd_protect(const JobManifest& m, std::ostream& log = std::cerr) {
  m.validate();
  if (!m.toy) {
    warn_toy_fallback("checkpoint inference is not part of this build; toy world substituted");
  }
  const ToyWorld world = make_toy_world(m.world_seed);

  std::vector<const ToyFaceEmbedder*> surrogates;
  for (const auto& id : m.surrogate_models) surrogates.push_back(&world.embedder(id));

  std::vector<FaceImage> target_images;
  target_images.reserve(m.targets.size());
  for (const auto& t : m.targets) target_images.push_back(manifest_image(m, world, t));

  struct Job {
    int image_idx;
    int prompt_idx;
  };
  std::vector<Job> jobs;
  for (int i = 0; i < static_cast<int>(m.images.size()); ++i)
    for (int p = 0; p < static_cast<int>(m.prompts.size()); ++p) jobs.push_back({i, p});

  ProtectSummary summary;
  summary.jobs.resize(jobs.size());
  std::atomic<size_t> cursor{0};
  std::mutex mu;

  auto run_job = [&](size_t k) {
    const ManifestImage& img = m.images[jobs[k].image_idx];
    const std::string& prompt = m.prompts[jobs[k].prompt_idx];
    JobOutcome out;
    out.image_id = img.id;
    out.prompt = prompt;
    const fsys::path dir = job_dir(m, img.id, prompt);
    try {
      if (job_complete(dir)) {
        out.status = JobOutcome::Status::resumed;
      } else {
        fsys::create_directories(dir);
        const FaceImage source = manifest_image(m, world, img);
        const int ti = target_index_for(m, jobs[k].image_idx);

        MakeupPrompt mp;
        mp.t_makeup = prompt;
        ProtectionConfig cfg = m.config;
        cfg.seed = job_seed(m, img.id, prompt);

        const ProtectedFace pf =
            protect(world, source, mp, ti >= 0 ? &target_images[ti] : nullptr, surrogates, cfg,
                    img.id, ti >= 0 ? m.targets[ti].id : "");

        save_png((dir / kProtectedFile).string(), pf.image);
        const auto src_bytes = quantize8(source);
        save_latent((dir / kLatentFile).string(), pf.w_final,
                    sha256_hex(std::span<const uint8_t>(src_bytes)), "toy-encoder");
        write_file((dir / kTraceFile).string(), trace_to_csv(pf.trace));

        Provenance prov;
        prov.config = cfg;
        prov.prompt = prompt;
        prov.image_id = img.id;
        prov.target_id = ti >= 0 ? m.targets[ti].id : "";
        prov.world_seed = m.world_seed;
        prov.surrogate_models = m.surrogate_models;
        prov.blackbox_model = m.blackbox_model;
        for (const char* name : {kProtectedFile, kLatentFile, kTraceFile}) {
          prov.checksums[name] = sha256_file((dir / name).string());
        }
        // provenance goes last: its presence certifies the files above
        write_file((dir / kProvenanceFile).string(), provenance_to_json(prov).dump(2) + "\n");
      }
    } catch (const std::exception& e) {
      out.status = JobOutcome::Status::failed;
      out.error = e.what();
      std::lock_guard<std::mutex> lk(mu);
      log << "protect " << img.id << " / \"" << prompt << "\" failed: " << e.what() << "\n";
    }
    summary.jobs[k] = std::move(out);
  };

  const int workers = std::min<int>(m.workers, static_cast<int>(jobs.size()));
  if (workers <= 1) {
    for (size_t k = 0; k < jobs.size(); ++k) run_job(k);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (;;) {
          const size_t k = cursor.fetch_add(1);
          if (k >= jobs.size()) return;
          run_job(k);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  for (const auto& j : summary.jobs) {
    switch (j.status) {
      case JobOutcome::Status::done: ++summary.done; break;
      case JobOutcome::Status::resumed: ++summary.resumed; break;
      case JobOutcome::Status::failed: ++summary.failed; break;
    }
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Evaluation over a finished run.

struct EvaluationRun {
  std::vector<EvaluationReport> rows;  // one per prompt, scored on the blackbox
  double mean_psr = 0;
  double std_psr = 0;  // sample standard deviation across prompts
  double tau = 0;
  bool zero_coverage = true;
};

inline EvaluationRun cmd_evaluate(const JobManifest& m) {
  m.validate();
  const ToyWorld world = make_toy_world(m.world_seed);
  const ToyFaceEmbedder& blackbox = world.embedder(m.blackbox_model);

  EvaluationRun run;
  {
    Rng rng(derive_seed(m.world_seed, "eval-calibration"));
    std::vector<double> d;
    d.reserve(500);
    for (int i = 0; i < 500; ++i) {
      const ToySample a = sample_face(world, rng);
      const ToySample b = sample_face(world, rng);
      d.push_back(cosine_distance(embed_fitted(blackbox, a.image),
                                  embed_fitted(blackbox, b.image)));
    }
    run.tau = calibrate_threshold_detailed(std::move(d), 0.01).tau;
  }

  const bool dodging = m.config.mode == AttackMode::dodge_only;
  VerificationProtocol protocol;
  protocol.model_id = m.blackbox_model;
  protocol.tau = run.tau;
  protocol.mode = dodging ? VerifyMode::dodging : VerifyMode::impersonation;

  // Clean and target material is re-derived, not trusted from disk.
  std::vector<FaceImage> clean;
  clean.reserve(m.images.size());
  for (const auto& img : m.images) clean.push_back(manifest_image(m, world, img));
  std::vector<FaceImage> target_images;
  for (const auto& t : m.targets) target_images.push_back(manifest_image(m, world, t));

  GallerySet gallery;
  for (size_t i = 0; i < m.images.size(); ++i) {
    gallery.entries.push_back({m.images[i].identity.empty() ? m.images[i].id
                                                            : m.images[i].identity,
                               embed_fitted(blackbox, clean[i])});
  }
  for (size_t t = 0; t < m.targets.size(); ++t) {
    gallery.entries.push_back({m.targets[t].identity.empty() ? m.targets[t].id
                                                             : m.targets[t].identity,
                               embed_fitted(blackbox, target_images[t])});
  }

  for (const auto& prompt : m.prompts) {
    EvaluationReport row;
    row.prompt = prompt;
    row.dataset = m.toy ? "toy" : m.dataset_root;
    row.target_model = m.blackbox_model;
    row.surrogate_models = m.surrogate_models;
    row.mode = dodging ? "dodging" : "impersonation";

    std::vector<double> pair_distances;
    std::vector<ProbeEntry> probes;
    std::vector<std::vector<double>> feats_protected, feats_clean;
    double sum_psnr = 0, sum_ssim = 0;

    for (size_t i = 0; i < m.images.size(); ++i) {
      const fsys::path dir = job_dir(m, m.images[i].id, prompt);
      const fsys::path png = dir / kProtectedFile;
      if (!fsys::exists(png)) {
        ++row.images_missing;
        continue;
      }
      FaceImage prot;
      try {
        prot = load_image(png.string());
      } catch (const Error&) {
        ++row.images_missing;
        continue;
      }
      ++row.images_evaluated;

      const EmbeddingVector prot_e = embed_fitted(blackbox, prot);
      const EmbeddingVector clean_e = embed_fitted(blackbox, clean[i]);
      const int ti = target_index_for(m, static_cast<int>(i));
      if (dodging || ti < 0) {
        pair_distances.push_back(cosine_distance(prot_e, clean_e));
      } else {
        pair_distances.push_back(
            cosine_distance(prot_e, embed_fitted(blackbox, target_images[ti])));
      }

      ProbeEntry probe;
      probe.e = prot_e;
      probe.true_label = m.images[i].identity.empty() ? m.images[i].id : m.images[i].identity;
      if (!dodging && ti >= 0) {
        probe.target_label =
            m.targets[ti].identity.empty() ? m.targets[ti].id : m.targets[ti].identity;
      }
      probes.push_back(std::move(probe));

      feats_protected.emplace_back(prot_e.values.begin(), prot_e.values.end());
      feats_clean.emplace_back(clean_e.values.begin(), clean_e.values.end());

      FaceImage reference = clean[i];
      if (reference.height != prot.height || reference.width != prot.width) {
        reference = resize_image(reference, prot.height, prot.width);
      }
      sum_psnr += psnr(prot, reference);
      sum_ssim += ssim(prot, reference);
    }

    if (row.images_evaluated > 0) {
      row.psr = verification_psr_from_distances(pair_distances, protocol);
      row.rank_n = identification_metrics(probes, gallery, {1, 5});
      const FidResult f = fid_detailed(feats_protected, feats_clean);
      row.fid = f.value;
      row.fid_degenerate = f.shrinkage_applied;
      row.psnr = sum_psnr / row.images_evaluated;
      row.ssim = sum_ssim / row.images_evaluated;
    }
    run.rows.push_back(std::move(row));
  }

  std::vector<double> psrs;
  for (const auto& r : run.rows)
    if (r.images_evaluated > 0) psrs.push_back(r.psr);
  run.zero_coverage = psrs.empty();
  if (!psrs.empty()) {
    run.mean_psr = std::accumulate(psrs.begin(), psrs.end(), 0.0) / psrs.size();
    if (psrs.size() > 1) {
      double ss = 0;
      for (double v : psrs) ss += (v - run.mean_psr) * (v - run.mean_psr);
      run.std_psr = std::sqrt(ss / (psrs.size() - 1));
    }
  }
  return run;
}

inline json evaluation_to_json(const EvaluationRun& run) {
  json j;
  j["rows"] = json::array();
  for (const auto& r : run.rows) j["rows"].push_back(report_to_json(r));
  j["mean_psr"] = run.mean_psr;
  j["std_psr"] = run.std_psr;
  j["tau"] = run.tau;
  j["zero_coverage"] = run.zero_coverage;
  return j;
}

inline std::string render_evaluation_table(const EvaluationRun& run) {
  auto cell = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%8.2f", v);
    return std::string(buf);
  };
  std::string out;
  out += "prompt               |     PSR |    R1-T |    R5-T |    R1-U |    R5-U |     FID |    PSNR |    SSIM |  n | miss\n";
  out += "---------------------+---------+---------+---------+---------+---------+---------+---------+---------+----+-----\n";
  for (const auto& r : run.rows) {
    char head[32];
    std::snprintf(head, sizeof(head), "%-20.20s", r.prompt.c_str());
    out += head;
    if (r.images_evaluated == 0) {
      out += " | no data |";
      out += std::string(70, ' ');
      char tail[32];
      std::snprintf(tail, sizeof(tail), "%3d | %4d\n", r.images_evaluated, r.images_missing);
      out += tail;
      continue;
    }
    auto rank = [&](int n, bool targeted) {
      const auto it = r.rank_n.find(n);
      if (it == r.rank_n.end()) return std::string("     n/a");
      const double v = targeted ? it->second.targeted : it->second.untargeted;
      return std::isnan(v) ? std::string("     n/a") : cell(v);
    };
    out += " |" + cell(r.psr) + " |" + rank(1, true) + " |" + rank(5, true) + " |" +
           rank(1, false) + " |" + rank(5, false) + " |" + cell(r.fid) +
           (r.fid_degenerate ? "*" : " ") + "|" + cell(r.psnr) + " |" + cell(r.ssim) + " |";
    char tail[32];
    std::snprintf(tail, sizeof(tail), "%3d | %4d\n", r.images_evaluated, r.images_missing);
    out += tail;
  }
  char foot[160];
  if (run.zero_coverage) {
    out += "\nzero coverage: no protected images were found for any cell\n";
  } else {
    std::snprintf(foot, sizeof(foot),
                  "\naverage PSR over %zu prompt styles: %.2f  (std %.2f)  tau=%.4f\n",
                  run.rows.size(), run.mean_psr, run.std_psr, run.tau);
    out += foot;
  }
  out += run.zero_coverage ? "" : "(* fid computed with covariance ridge: small sample)\n";
  return out;
}

inline void write_evaluation(const JobManifest& m, const EvaluationRun& run) {
  const fsys::path root = fsys::path(m.output_dir) / m.run_id;
  fsys::create_directories(root);
  write_file((root / "evaluation.json").string(), evaluation_to_json(run).dump(2) + "\n");
  write_file((root / "evaluation.txt").string(), render_evaluation_table(run));
}

}  // namespace facecloak
