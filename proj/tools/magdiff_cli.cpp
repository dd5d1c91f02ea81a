// magdiff: data preparation, training, sampling and evaluation front end.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "magdiff/evaluation.hpp"
#include "magdiff/grad_suite.hpp"
#include "magdiff/image_io.hpp"
#include "magdiff/pipeline.hpp"

namespace fs = std::filesystem;
using namespace magdiff;

namespace {

// Layering: defaults < --config file < MAGDIFF_SEED < command-line flags.
struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> flags;
  std::vector<std::shared_ptr<void>> storage;  // CLI11 writes parsed values here

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value run config file");
    cmd->add_option("--set", sets, "override one config key (KEY=VALUE), repeatable");
  }

  // A typed flag that, when given, overrides config key `key`.
  template <typename V>
  void flag(CLI::App* cmd, const std::string& name, const std::string& key, const std::string& help) {
    auto holder = std::make_shared<V>();
    storage.push_back(holder);
    cmd->add_option(name, *holder, help)->each([this, key](const std::string& v) { flags.emplace_back(key, v); });
  }

  RunConfig resolve(const RunConfig& base) const {
    RunConfig rc = base;
    if (!config_path.empty()) rc.update_from_file(config_path);
    rc.apply_env();
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ValueError("--set expects KEY=VALUE, got '" + s + "'");
      rc.set(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& [k, v] : flags) rc.set(k, v);
    rc.validate();
    return rc;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<VideoClip> load_corpus(const fs::path& dir, std::size_t resolution) {
  auto clips = read_corpus(dir);
  for (auto& c : clips) c = center_crop(c, resolution);
  return clips;
}

RunConfig checkpoint_run_config(const Checkpoint& ck) {
  return ck.config.contains("run") ? RunConfig::from_json(ck.config.at("run")) : RunConfig{};
}

std::string alpha_text(const std::vector<std::pair<double, double>>& alphas) {
  std::string s;
  char buf[64];
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%s(%.4f,%.4f)", i ? " " : "", alphas[i].first, alphas[i].second);
    s += buf;
  }
  return s;
}

void write_generated(const fs::path& out, const VideoClip& clip) {
  write_clip(out, clip);
  write_ppm(out / "contact_sheet.ppm", contact_sheet(clip.frames));
}

// ---- commands -----------------------------------------------------------------

int cmd_prepare_data(const RunConfig& rc, const fs::path& out) {
  const auto corpus = prepare_synthetic_corpus(prepare_options(rc));
  write_corpus(out, corpus);
  write_text(out / "run.cfg", rc.to_text());
  if (corpus.clips.empty()) {
    std::cerr << "warning: corpus at " << out.string() << " is empty (" << rc.clips << " clips requested, "
              << corpus.rejected.size() << " rejected)\n";
  }
  std::cout << "prepared " << corpus.clips.size() << " clips (" << corpus.rejected.size() << " rejected) in "
            << out.string() << "\n";
  return 0;
}

int cmd_train_vae(const RunConfig& rc, const fs::path& data, const fs::path& out) {
  const auto clips = load_corpus(data, rc.resolution);
  if (clips.empty()) throw ValueError("corpus '" + data.string() + "' has no clips");
  Vae<float> vae(derive_seed(rc.seed, SeedStream::kVaeInit));
  const auto result = train_vae(vae, all_frames(clips), vae_train_options(rc), [](std::size_t step, double loss) {
    std::printf("vae step %zu mse %.6f\n", step, loss);
  });
  std::printf("vae reconstruction mse %.6f -> %.6f, latent scale %.6f\n", result.initial_mse, result.final_mse,
              static_cast<double>(vae.latent_scale()));
  vae_checkpoint(vae, rc.to_json()).save(out);
  return 0;
}

int cmd_train(const RunConfig& rc, const fs::path& data, const fs::path& vae_path, const fs::path& out,
              fs::path loss_log) {
  const auto clips = load_corpus(data, rc.resolution);
  if (clips.empty()) throw ValueError("corpus '" + data.string() + "' has no clips");
  auto bundle = init_model(rc, vae_from_checkpoint(Checkpoint::load(vae_path)), Vocab::load(data / "vocab.txt"));
  const auto examples = prepare_examples(clips, *bundle.vae, bundle.vocab, rc.max_tokens, bundle.hfa);
  if (loss_log.empty()) loss_log = fs::path(out).replace_extension(".losses.csv");
  std::string csv = "step,loss\n";
  auto save_at = [&](std::size_t step) {
    auto p = out;
    p.replace_extension(".step" + std::to_string(step) + out.extension().string());
    bundle.to_checkpoint(rc.to_json()).save(p);
  };
  std::printf("training %zu trainable / %zu parameters on %zu clips\n", bundle.net->params().trainable_elements(),
              bundle.net->params().total_elements(), examples.size());
  const auto result = train_denoiser(
      *bundle.net, examples, bundle.schedule, train_options(rc),
      [](const TrainLogEntry& e) {
        std::printf("step %zu loss %.6f alpha %s\n", e.step, e.loss, alpha_text(e.alphas).c_str());
        std::fflush(stdout);
      },
      [&](std::size_t done) {
        if (rc.checkpoint_every && done % rc.checkpoint_every == 0 && done < rc.steps) save_at(done);
      });
  for (std::size_t i = 0; i < result.losses.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", i, result.losses[i]);
    csv += buf;
  }
  write_text(loss_log, csv);
  bundle.to_checkpoint(rc.to_json()).save(out);
  if (!result.losses.empty()) std::printf("final loss (mean of last %zu steps) %.6f\n",
                                          std::min<std::size_t>(100, result.losses.size()), result.final_loss);
  return 0;
}

int cmd_generate(const RunConfig& rc, const ModelBundle& bundle, const fs::path& subject_path,
                 const std::string& mask_path, bool full_frame, const std::string& caption, const fs::path& out) {
  const auto image = read_ppm(subject_path);
  Tensor<float> mask;
  if (!mask_path.empty()) {
    mask = read_pgm_mask(mask_path);
  } else if (full_frame) {
    mask = Tensor<float>::full({1, image.dim(1), image.dim(2)}, 1.0f);
  } else {
    throw ValueError("generate needs --mask or --full-frame");
  }
  if (mask.dim(1) != image.dim(1) || mask.dim(2) != image.dim(2)) {
    throw ShapeError("mask " + shape_str(mask.shape()) + " does not match subject image " + shape_str(image.shape()));
  }
  const auto clip = sample_video(bundle.context(), extract_subject(image, mask), caption, rc.frames, sampler_config(rc));
  write_generated(out, clip);
  std::printf("wrote %zu frames to %s\n", clip.frame_count(), out.string().c_str());
  return 0;
}

int cmd_edit(const RunConfig& rc, const ModelBundle& bundle, const fs::path& source, const std::string& caption,
             const fs::path& out) {
  const auto src = read_clip(source);
  const auto clip = edit_video(bundle.context(), src, caption, sampler_config(rc));
  write_generated(out, clip);
  std::printf("wrote %zu edited frames to %s\n", clip.frame_count(), out.string().c_str());
  return 0;
}

int cmd_eval(const RunConfig& rc, const ModelBundle& bundle, const fs::path& data, std::size_t max_clips,
             const EvalThresholds& th, const fs::path& out) {
  const auto names = read_manifest_clips(data);
  std::vector<EvalClip> clips;
  for (const auto& n : names) {
    if (max_clips && clips.size() == max_clips) break;
    clips.push_back({n, center_crop(read_clip(data / n), rc.resolution)});
  }
  if (clips.empty()) throw ValueError("eval set '" + data.string() + "' is empty");
  const auto sampler = sampler_config(rc);
  nlohmann::json cfg = {{"cfg_scale", sampler.cfg_scale}, {"ddim_steps", sampler.ddim_steps},
                        {"eta", sampler.eta},             {"seed", rc.seed},
                        {"clips", clips.size()},          {"features", "grayscale-8x8"}};
  auto report = eval_report(clips, bundle.context(), sampler, th, cfg);
  const bool ok = check_thresholds(report, th);
  write_text(out, report.to_json().dump(2) + "\n");
  const auto& a = report.aggregate;
  std::printf("frame_consistency %.6f subject_mse %.6f subject_iou %.6f edit_mse %.6f\n", a.frame_consistency,
              a.subject_mse, a.subject_iou, a.edit_mse);
  for (const auto& v : report.violations) std::fprintf(stderr, "threshold violated: %s\n", v.c_str());
  return ok ? 0 : 4;
}

int cmd_grad_check(const GradCheckOptions& opts, const std::string& out) {
  nlohmann::json cases = nlohmann::json::array();
  std::size_t failures = 0;
  grad_check_suite(opts, [&](const GradSuiteCase& c) {
    failures += c.report.failures;
    std::printf("%-26s %s  elements %zu  max_rel_error %.3e\n", c.name.c_str(), c.report.passed() ? "ok  " : "FAIL",
                c.report.entries.size(), c.report.max_rel_error);
    if (!c.report.passed()) std::printf("%s\n", c.report.summary().c_str());
    std::fflush(stdout);
    cases.push_back({{"name", c.name},
                     {"elements", c.report.entries.size()},
                     {"failures", c.report.failures},
                     {"max_rel_error", c.report.max_rel_error}});
  });
  if (!out.empty()) {
    write_text(out, nlohmann::json{{"rel_tol", opts.rel_tol},
                                   {"abs_tol", opts.abs_tol},
                                   {"step", opts.step},
                                   {"max_elements", opts.max_elements},
                                   {"passed", failures == 0},
                                   {"cases", cases}}
                        .dump(2) + "\n");
  }
  if (failures) throw AcceptanceError(std::to_string(failures) + " sampled gradient elements failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"magdiff: subject-driven video diffusion at desk scale"};
  app.require_subcommand(1);

  ConfigArgs prep_cfg, vae_cfg, train_cfg, gen_cfg, edit_cfg, eval_cfg;
  std::string out, data, vae_path, loss_log, checkpoint, subject, mask, caption, source;
  bool full_frame = false;
  std::size_t max_clips = 0;
  std::optional<double> min_fc, max_subject, max_edit;
  GradCheckOptions gc;
  gc.abs_tol = 1e-11;
  std::string gc_out;

  auto* prep = app.add_subcommand("prepare-data", "generate, curate and write a synthetic corpus");
  prep_cfg.add_to(prep);
  prep->add_option("--out", out, "corpus directory")->required();
  prep_cfg.flag<std::size_t>(prep, "--clips", "clips", "number of clips to generate");
  prep_cfg.flag<std::uint64_t>(prep, "--seed", "seed", "run seed");

  auto* tvae = app.add_subcommand("train-vae", "pre-train the latent autoencoder");
  vae_cfg.add_to(tvae);
  tvae->add_option("--data", data, "corpus directory")->required();
  tvae->add_option("--out", out, "VAE checkpoint path")->required();
  vae_cfg.flag<std::size_t>(tvae, "--steps", "vae_steps", "optimizer steps");
  vae_cfg.flag<std::uint64_t>(tvae, "--seed", "seed", "run seed");

  auto* train = app.add_subcommand("train", "train the denoiser");
  train_cfg.add_to(train);
  train->add_option("--data", data, "corpus directory")->required();
  train->add_option("--vae", vae_path, "VAE checkpoint")->required();
  train->add_option("--out", out, "model checkpoint path")->required();
  train->add_option("--loss-log", loss_log, "per-step loss CSV (default: <out>.losses.csv)");
  train_cfg.flag<std::size_t>(train, "--steps", "steps", "optimizer steps");
  train_cfg.flag<std::size_t>(train, "--batch-size", "batch_size", "clips per step");
  train_cfg.flag<double>(train, "--lr", "lr", "learning rate");
  train_cfg.flag<std::string>(train, "--apa-mode", "apa_mode", "trainable | fixed:A1,A2 | fpa");
  train_cfg.flag<std::string>(train, "--freeze-policy", "freeze_policy", "default | desk | train-all");
  train_cfg.flag<std::uint64_t>(train, "--seed", "seed", "run seed");

  auto add_sampler = [](ConfigArgs& cfg, CLI::App* cmd) {
    cfg.add_to(cmd);
    cfg.flag<std::size_t>(cmd, "--ddim-steps", "ddim_steps", "DDIM steps");
    cfg.flag<double>(cmd, "--cfg-scale", "cfg_scale", "classifier-free guidance scale");
    cfg.flag<double>(cmd, "--eta", "eta", "DDIM eta (0 = deterministic)");
    cfg.flag<std::uint64_t>(cmd, "--seed", "seed", "run seed");
  };

  auto* gen = app.add_subcommand("generate", "generate a clip from a subject image and caption");
  add_sampler(gen_cfg, gen);
  gen->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  gen->add_option("--subject", subject, "subject image (binary PPM)")->required();
  auto* mask_opt = gen->add_option("--mask", mask, "subject mask (binary PGM)");
  gen->add_flag("--full-frame", full_frame, "use the whole image as the subject")->excludes(mask_opt);
  gen->add_option("--caption", caption, "text prompt")->required();
  gen->add_option("--out", out, "output clip directory")->required();
  gen_cfg.flag<std::size_t>(gen, "--frames", "frames", "frames to generate");

  auto* edit = app.add_subcommand("edit", "edit an existing clip");
  add_sampler(edit_cfg, edit);
  edit->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  edit->add_option("--source", source, "source clip directory")->required();
  edit->add_option("--caption", caption, "edit prompt")->required();
  edit->add_option("--out", out, "output clip directory")->required();

  auto* eval = app.add_subcommand("eval", "score generation and identity edits on a corpus");
  add_sampler(eval_cfg, eval);
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval->add_option("--data", data, "evaluation corpus")->required();
  eval->add_option("--out", out, "report path (JSON)")->required();
  eval->add_option("--max-clips", max_clips, "evaluate only the first N clips (0 = all)");
  eval->add_option("--min-frame-consistency", min_fc, "acceptance threshold");
  eval->add_option("--max-subject-mse", max_subject, "acceptance threshold");
  eval->add_option("--max-edit-mse", max_edit, "acceptance threshold");

  auto* grad = app.add_subcommand("grad-check", "finite-difference check of every differentiable op and the denoiser");
  grad->add_option("--max-elements", gc.max_elements, "elements sampled per tensor (0 = all)");
  grad->add_option("--rel-tol", gc.rel_tol, "relative tolerance");
  grad->add_option("--abs-tol", gc.abs_tol, "absolute tolerance below which differences pass");
  grad->add_option("--step", gc.step, "central difference step");
  grad->add_option("--seed", gc.seed, "sampling seed");
  grad->add_option("--out", gc_out, "JSON report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    auto load_bundle = [&](const ConfigArgs& cfg, RunConfig& rc) {
      const auto ck = Checkpoint::load(checkpoint);
      rc = cfg.resolve(checkpoint_run_config(ck));
      return ModelBundle::from_checkpoint(ck);
    };
    RunConfig rc;
    if (*prep) return cmd_prepare_data(prep_cfg.resolve({}), out);
    if (*tvae) return cmd_train_vae(vae_cfg.resolve({}), data, out);
    if (*train) return cmd_train(train_cfg.resolve({}), data, vae_path, out, loss_log);
    if (*gen) {
      auto bundle = load_bundle(gen_cfg, rc);
      return cmd_generate(rc, bundle, subject, mask, full_frame, caption, out);
    }
    if (*edit) {
      auto bundle = load_bundle(edit_cfg, rc);
      return cmd_edit(rc, bundle, source, caption, out);
    }
    if (*eval) {
      auto bundle = load_bundle(eval_cfg, rc);
      return cmd_eval(rc, bundle, data, max_clips, {min_fc, max_subject, max_edit}, out);
    }
    if (*grad) return cmd_grad_check(gc, gc_out);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
