// Command-line front end for the cascaded segmentation engine.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "cseg/cascade.hpp"
#include "cseg/gradcheck.hpp"
#include "cseg/metaimage.hpp"
#include "cseg/metrics.hpp"
#include "cseg/phantom.hpp"
#include "cseg/run_config.hpp"
#include "cseg/tiler.hpp"
#include "cseg/trainer.hpp"
#include "cseg/unet.hpp"

namespace fs = std::filesystem;
using namespace cseg;

namespace {

struct Manifest {
  std::vector<std::string> classes;
  std::vector<std::string> names;
  std::vector<LabelledVolume> cases;
};

fs::path manifest_file(const fs::path& p) { return fs::is_directory(p) ? p / "manifest.tsv" : p; }

void write_manifest(const fs::path& dir, const std::vector<std::string>& classes,
                    const std::vector<std::array<std::string, 4>>& rows) {
  std::ofstream os(dir / "manifest.tsv");
  os << "# classes";
  for (const auto& c : classes) os << '\t' << c;
  os << "\nname\tct\tlabels\tsplit\n";
  for (const auto& r : rows) os << r[0] << '\t' << r[1] << '\t' << r[2] << '\t' << r[3] << '\n';
  if (!os) throw FormatError("synth: failed writing manifest in " + dir.string());
}

Manifest read_manifest(const fs::path& where) {
  const fs::path file = manifest_file(where);
  std::ifstream is(file);
  if (!is) throw FormatError("read_manifest: cannot open " + file.string());
  Manifest m;
  std::string line;
  bool header = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::vector<std::string> f;
    std::string tok;
    while (std::getline(fields, tok, '\t')) f.push_back(tok);
    if (f[0] == "# classes") {
      m.classes.assign(f.begin() + 1, f.end());
      continue;
    }
    if (!header) {
      header = true;
      continue;
    }
    if (f.size() != 4) throw FormatError("read_manifest: " + file.string() + ": expected 4 columns in '" + line + "'");
    const fs::path base = file.parent_path();
    m.names.push_back(f[0]);
    m.cases.push_back({read_volume(base / f[1]), read_labels(base / f[2]), f[3] == "validation"});
  }
  if (m.cases.empty()) throw FormatError("read_manifest: " + file.string() + " lists no case");
  return m;
}

void write_text(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream os(path);
  os << text;
  if (!os) throw FormatError("write_text: cannot write " + path);
}

void write_prediction(const std::string& prefix, const LabelVolume& labels, const std::vector<Volume3>* probs) {
  write_labels(labels, prefix + "_labels.mhd");
  if (probs)
    for (std::size_t k = 0; k < probs->size(); ++k)
      write_volume((*probs)[k], prefix + "_prob" + std::to_string(k) + ".mhd", ElementType::Float);
}

RunConfig config_or_default(const std::string& path) { return path.empty() ? RunConfig{} : load_run_config(path); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cascaded 3D fully convolutional segmentation"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "Seed for every random choice");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic phantom dataset");
  std::string synth_out, family = "a";
  int synth_count = 20, synth_val = 4, synth_dims = 64;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--count", synth_count, "Number of cases")->check(CLI::PositiveNumber);
  synth->add_option("--validation", synth_val, "Cases tagged for validation")->check(CLI::NonNegativeNumber);
  synth->add_option("--dims", synth_dims, "Cube edge in voxels")->check(CLI::Range(48, 1024));
  synth->add_option("--family", family, "Phantom family")->check(CLI::IsMember({"a", "b"}));

  // bodymask
  auto* bodym = app.add_subcommand("bodymask", "Body mask of a CT volume");
  std::string bm_ct, bm_out, bm_config;
  bodym->add_option("--ct", bm_ct)->required();
  bodym->add_option("--out", bm_out)->required();
  bodym->add_option("--config", bm_config);

  // train
  auto* trn = app.add_subcommand("train", "Train one stage");
  std::string tr_config, tr_data, tr_out, tr_history, tr_stage1;
  int tr_stage = 0;
  long tr_iters = -1;
  trn->add_option("--config", tr_config)->required();
  trn->add_option("--data", tr_data, "Dataset directory or manifest")->required();
  trn->add_option("--out", tr_out, "Checkpoint path")->required();
  trn->add_option("--history", tr_history, "History TSV path");
  trn->add_option("--stage", tr_stage, "1 or 2 (default from config)")->check(CLI::Range(1, 2));
  trn->add_option("--stage1", tr_stage1, "First-stage checkpoint (stage 2)");
  trn->add_option("--iterations", tr_iters, "Override the iteration budget");

  // finetune
  auto* ft = app.add_subcommand("finetune", "Fine-tune a checkpoint with a new head");
  std::string ft_config, ft_data, ft_ckpt, ft_out, ft_history;
  int ft_classes = 0;
  long ft_iters = -1;
  ft->add_option("--config", ft_config)->required();
  ft->add_option("--checkpoint", ft_ckpt)->required();
  ft->add_option("--data", ft_data)->required();
  ft->add_option("--out", ft_out)->required();
  ft->add_option("--history", ft_history);
  ft->add_option("--classes", ft_classes, "Classes of the new head (default from dataset)");
  ft->add_option("--iterations", ft_iters);

  // predict
  auto* pred = app.add_subcommand("predict", "Single-network sliding-window prediction");
  std::string pr_ckpt, pr_ct, pr_out, pr_config, pr_overlap = "none";
  bool pr_probs = false;
  pred->add_option("--checkpoint", pr_ckpt)->required();
  pred->add_option("--ct", pr_ct)->required();
  pred->add_option("--out", pr_out, "Output prefix")->required();
  pred->add_option("--config", pr_config);
  pred->add_option("--overlap", pr_overlap)->check(CLI::IsMember({"none", "xy_half"}));
  pred->add_flag("--probabilities", pr_probs, "Also write per-class probabilities");

  // cascade
  auto* casc = app.add_subcommand("cascade", "Two-stage prediction");
  std::string ca_s1, ca_s2, ca_ct, ca_out, ca_config, ca_overlap;
  bool ca_probs = false;
  casc->add_option("--stage1", ca_s1)->required();
  casc->add_option("--stage2", ca_s2)->required();
  casc->add_option("--ct", ca_ct)->required();
  casc->add_option("--out", ca_out, "Output prefix")->required();
  casc->add_option("--config", ca_config);
  casc->add_option("--overlap", ca_overlap, "Second-stage overlap mode")->check(CLI::IsMember({"none", "xy_half"}));
  casc->add_flag("--probabilities", ca_probs);

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Dice table");
  std::vector<std::string> ev_pred, ev_gt, ev_names;
  std::string ev_out;
  int ev_first = 1;
  eval->add_option("--pred", ev_pred, "Predicted label volumes")->required();
  eval->add_option("--gt", ev_gt, "Ground-truth label volumes")->required();
  eval->add_option("--classes", ev_names, "Class names, background first");
  eval->add_option("--first-class", ev_first)->check(CLI::Range(0, 255));
  eval->add_option("--out", ev_out);

  // curve
  auto* curve = app.add_subcommand("curve", "Recall and FPR against dilation radius");
  std::string cu_pred, cu_gt, cu_out;
  int cu_rmax = 6, cu_min = 1;
  curve->add_option("--pred", cu_pred)->required();
  curve->add_option("--gt", cu_gt)->required();
  curve->add_option("--rmax", cu_rmax)->check(CLI::NonNegativeNumber);
  curve->add_option("--min-label", cu_min)->check(CLI::Range(1, 255));
  curve->add_option("--out", cu_out);

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  bool gc_all = false;
  std::string gc_layer;
  int gc_cases = 20;
  double gc_tol = 1e-4;
  gc->add_flag("--all", gc_all);
  gc->add_option("--layer", gc_layer);
  gc->add_option("--cases", gc_cases)->check(CLI::PositiveNumber);
  gc->add_option("--tolerance", gc_tol);

  // count-params
  auto* cp = app.add_subcommand("count-params", "Learnable parameter count");
  std::string cp_config;
  cp->add_option("--config", cp_config)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (gc->parsed() && !gc_all && gc_layer.empty()) {
    std::cerr << "gradcheck: pass --all or --layer NAME\n";
    return 1;
  }

  try {
    if (synth->parsed()) {
      PhantomSpec spec;
      spec.dims = {synth_dims, synth_dims, synth_dims};
      if (family == "b") spec = transfer_family(spec);
      if (synth_val > synth_count) throw ConfigError("synth: more validation cases than cases");
      fs::create_directories(synth_out);
      const auto cases = generate_dataset(spec, synth_count, seed.value_or(0), synth_val);
      std::vector<std::array<std::string, 4>> rows;
      for (std::size_t i = 0; i < cases.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "case%03zu", i);
        const std::string ct = std::string(name) + "_ct.mhd", lab = std::string(name) + "_labels.mhd";
        write_volume(cases[i].phantom.ct, fs::path(synth_out) / ct, ElementType::Short);
        write_labels(cases[i].phantom.labels, fs::path(synth_out) / lab);
        rows.push_back({name, ct, lab, cases[i].validation ? "validation" : "train"});
      }
      write_manifest(synth_out, class_names(spec), rows);
      std::cout << cases.size() << " cases written to " << synth_out << '\n';
    } else if (bodym->parsed()) {
      const RunConfig cfg = config_or_default(bm_config);
      const CandidateRegion r = body_mask(read_volume(bm_ct), cfg.cascade);
      write_mask(r.mask, bm_out);
      std::printf("voxel_fraction\t%.6f\n", r.voxel_fraction);
    } else if (trn->parsed()) {
      RunConfig cfg = load_run_config(tr_config);
      if (seed) cfg.train.seed = *seed;
      if (tr_iters >= 0) cfg.train.iterations = tr_iters;
      const int stage = tr_stage ? tr_stage : cfg.train.stage;
      cfg.train.stage = stage;
      const Manifest m = read_manifest(tr_data);
      if (!m.classes.empty() && static_cast<int>(m.classes.size()) != cfg.network.num_classes)
        throw ConfigError("train: dataset has " + std::to_string(m.classes.size()) + " classes, config " +
                          std::to_string(cfg.network.num_classes));
      Dataset data = prepare_first_stage(m.cases, cfg.network.num_classes, cfg.cascade);
      if (stage == 2) {
        if (tr_stage1.empty() && !cfg.cascade.region_from_ground_truth)
          throw ConfigError("train: stage 2 needs --stage1 unless cascade.region_from_ground_truth is set");
        const UNet first = tr_stage1.empty() ? UNet::build(cfg.network, cfg.train.seed) : load_checkpoint(tr_stage1);
        data = prepare_second_stage(data, first, cfg.cascade);
      }
      const TrainResult r = train(UNet::build(cfg.network, cfg.train.seed), data, cfg.train, cfg.augment);
      save_checkpoint(r.net, tr_out);
      if (!tr_history.empty()) write_text(r.history.to_tsv(), tr_history);
      std::printf("best_iteration\t%ld\nbest_val_dice\t%.6f\n", r.history.best_iteration, r.history.best_val_dice);
    } else if (ft->parsed()) {
      RunConfig cfg = load_run_config(ft_config);
      if (seed) cfg.train.seed = *seed;
      if (ft_iters >= 0) cfg.train.iterations = ft_iters;
      const Manifest m = read_manifest(ft_data);
      const int k = ft_classes > 0 ? ft_classes : static_cast<int>(m.classes.size());
      if (k < 2) throw ConfigError("finetune: pass --classes or a manifest with class names");
      const Dataset data = prepare_first_stage(m.cases, k, cfg.cascade);
      const TrainResult r = finetune(fs::path(ft_ckpt), k, data, cfg.train, cfg.augment);
      save_checkpoint(r.net, ft_out);
      if (!ft_history.empty()) write_text(r.history.to_tsv(), ft_history);
      std::printf("best_iteration\t%ld\nbest_val_dice\t%.6f\n", r.history.best_iteration, r.history.best_val_dice);
    } else if (pred->parsed()) {
      const RunConfig cfg = config_or_default(pr_config);
      const UNet net = load_checkpoint(pr_ckpt);
      const Volume3 ct = read_volume(pr_ct);
      const Volume3 half = resample_down2(ct, Interp::Linear);
      const CandidateRegion body = body_mask(half, cfg.cascade);
      const Volume3 input = apply_window(half, cfg.cascade.window_low, cfg.cascade.window_high);
      const TilePlan plan = plan_tiles(half.dims(), net.config(), parse_overlap_mode(pr_overlap), &body.mask);
      const Prediction p = predict_volume(net, input, plan, &body.mask);
      std::vector<Volume3> probs;
      if (pr_probs)
        for (const Volume3& v : p.probabilities) probs.push_back(upsample(v, ct.dims(), Interp::Linear));
      write_prediction(pr_out, upsample(p.labels, ct.dims(), Interp::Nearest), pr_probs ? &probs : nullptr);
      std::printf("tiles\t%zu\n", plan.origins.size());
    } else if (casc->parsed()) {
      RunConfig cfg = config_or_default(ca_config);
      if (!ca_overlap.empty()) cfg.tiler.overlap = parse_overlap_mode(ca_overlap);
      const CascadeResult r =
          two_stage_predict(load_checkpoint(ca_s1), load_checkpoint(ca_s2), read_volume(ca_ct), cfg.two_stage());
      write_prediction(ca_out, r.labels, ca_probs ? &r.probabilities : nullptr);
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
      std::printf("body_fraction\t%.6f\ncandidate_fraction\t%.6f\n", r.body.voxel_fraction,
                  r.candidate.voxel_fraction);
      std::printf("seconds_stage1\t%.3f\nseconds_stage2\t%.3f\n", r.timings.stage1, r.timings.stage2);
    } else if (eval->parsed()) {
      if (ev_pred.size() != ev_gt.size()) throw ConfigError("evaluate: --pred and --gt counts differ");
      std::vector<LabelVolume> preds, gts;
      int max_label = 0;
      for (std::size_t i = 0; i < ev_pred.size(); ++i) {
        preds.push_back(read_labels(ev_pred[i]));
        gts.push_back(read_labels(ev_gt[i]));
        for (Label v : gts.back().data()) max_label = std::max<int>(max_label, v);
        for (Label v : preds.back().data()) max_label = std::max<int>(max_label, v);
      }
      const int k_count = ev_names.empty() ? max_label + 1 : static_cast<int>(ev_names.size());
      std::vector<ClassColumn> cols;
      for (int k = ev_first; k < k_count; ++k)
        cols.push_back({static_cast<Label>(k), ev_names.empty() ? "class" + std::to_string(k) : ev_names[k]});
      std::vector<EvalCase> cases;
      for (std::size_t i = 0; i < preds.size(); ++i) cases.push_back({&preds[i], &gts[i]});
      write_text(dice_table(cases, cols).to_tsv(), ev_out);
    } else if (curve->parsed()) {
      const LabelVolume p = read_labels(cu_pred), g = read_labels(cu_gt);
      std::set<int> present;
      for (Label v : g.data())
        if (v >= cu_min) present.insert(v);
      std::vector<Label> classes(present.begin(), present.end());
      write_text(radius_curve(p, g, cu_rmax, classes, static_cast<Label>(cu_min)).to_tsv(), cu_out);
    } else if (gc->parsed()) {
      std::vector<LayerKind> kinds;
      for (LayerKind k : all_layer_kinds())
        if (gc_all || layer_name(k) == gc_layer) kinds.push_back(k);
      if (kinds.empty()) throw ConfigError("gradcheck: unknown layer '" + gc_layer + "'");
      bool ok = true;
      std::printf("layer\tcases\tmax_rel_error\tresult\n");
      for (LayerKind k : kinds) {
        double worst = 0.0;
        for (int c = 0; c < gc_cases; ++c) {
          const std::uint64_t s = seed.value_or(0) * 1000003ULL + static_cast<std::uint64_t>(c);
          worst = std::max(worst, gradcheck(make_layer_case(k, s), s).max_rel_error);
        }
        const bool pass = worst < gc_tol;
        ok = ok && pass;
        std::printf("%s\t%d\t%.3e\t%s\n", layer_name(k).c_str(), gc_cases, worst, pass ? "pass" : "FAIL");
      }
      return ok ? 0 : 2;
    } else if (cp->parsed()) {
      const RunConfig cfg = load_run_config(cp_config);
      std::printf("%zu\n", param_count(UNet::build(cfg.network, seed.value_or(0))));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
