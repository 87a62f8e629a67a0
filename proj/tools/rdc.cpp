// Command-line front end: dataset generation, the two training stages,
// compression, decompression, evaluation, trade-off sweeps and diagnostics.
//
// Exit codes: 0 ok, 2 bad arguments, 3 model/version mismatch, 4 I/O
// failure, 5 corrupt stream.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "rdc/rdc.hpp"

namespace fs = std::filesystem;
using Scalar = float;

namespace {

struct SvgSeries {
  std::string label;
  std::vector<double> x, y;
};

// Minimal SVG line plot, one polyline per series.
void write_svg_plot(const std::string& path, const std::string& title,
                    const std::string& xlabel, const std::string& ylabel,
                    const std::vector<SvgSeries>& series) {
  const int W = 640, H = 480, ml = 70, mr = 30, mt = 40, mb = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (!(xmin < xmax)) xmax = xmin + 1;
  if (!(ymin < ymax)) ymax = ymin + 1;
  const double xpad = 0.05 * (xmax - xmin), ypad = 0.05 * (ymax - ymin);
  xmin -= xpad, xmax += xpad, ymin -= ypad, ymax += ypad;
  auto px = [&](double x) {
    return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr);
  };
  auto py = [&](double y) {
    return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb);
  };
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c",
                                 "#d62728", "#9467bd", "#8c564b"};
  std::ofstream f(path);
  if (!f) throw rdc::io_error("cannot write plot: " + path);
  f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W
    << "' height='" << H << "'>\n";
  f << "<rect width='100%' height='100%' fill='white'/>\n";
  f << "<text x='" << W / 2 << "' y='20' text-anchor='middle'>" << title
    << "</text>\n";
  f << "<text x='" << W / 2 << "' y='" << H - 10
    << "' text-anchor='middle'>" << xlabel << "</text>\n";
  f << "<text x='15' y='" << H / 2
    << "' text-anchor='middle' transform='rotate(-90 15 " << H / 2 << ")'>"
    << ylabel << "</text>\n";
  f << "<rect x='" << ml << "' y='" << mt << "' width='" << W - ml - mr
    << "' height='" << H - mt - mb << "' fill='none' stroke='black'/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 4;
    const double yv = ymin + (ymax - ymin) * i / 4;
    f << "<text x='" << px(xv) << "' y='" << H - mb + 18
      << "' text-anchor='middle' font-size='11'>" << std::setprecision(3)
      << xv << "</text>\n";
    f << "<text x='" << ml - 8 << "' y='" << py(yv) + 4
      << "' text-anchor='end' font-size='11'>" << std::setprecision(3) << yv
      << "</text>\n";
  }
  int ci = 0;
  for (const auto& s : series) {
    f << "<polyline fill='none' stroke='" << colors[ci % 6]
      << "' stroke-width='2' points='";
    for (size_t i = 0; i < s.x.size(); ++i)
      f << px(s.x[i]) << "," << py(s.y[i]) << " ";
    f << "'/>\n";
    for (size_t i = 0; i < s.x.size(); ++i)
      f << "<circle cx='" << px(s.x[i]) << "' cy='" << py(s.y[i])
        << "' r='3' fill='" << colors[ci % 6] << "'/>\n";
    f << "<text x='" << W - mr - 150 << "' y='" << mt + 16 + 16 * ci
      << "' font-size='12' fill='" << colors[ci % 6] << "'>" << s.label
      << "</text>\n";
    ++ci;
  }
  f << "</svg>\n";
}

rdc::Dataset<Scalar> load_split(const std::string& dataset_dir,
                                const std::string& split) {
  return rdc::Dataset<Scalar>::load_manifest(
      (fs::path(dataset_dir) / (split + ".txt")).string());
}

int cmd_make_dataset(const rdc::RunConfig& rc) {
  rdc::make_toy_dataset(rc.dataset, rc.n_train, rc.n_val, rc.n_test,
                        rc.seed);
  rc.echo_into(rc.dataset);
  std::cout << "dataset written to " << rc.dataset << " (train "
            << rc.n_train << ", val " << rc.n_val << ", test " << rc.n_test
            << ")\n";
  return 0;
}

int cmd_pretrain_proxy(const rdc::RunConfig& rc) {
  auto train = load_split(rc.dataset, "train");
  auto val = load_split(rc.dataset, "val");
  rdc::ProxyConfig pc;
  pc.embed_dim = rc.embed_dim;
  pc.queue = rc.queue;
  pc.tau = rc.tau;
  pc.ema = rc.ema;
  pc.init_seed = rc.seed;
  rdc::CognitionProxy<Scalar> proxy(pc);
  fs::create_directories(rc.out);
  rc.echo_into(rc.out);
  rdc::ProxyTrainConfig tc;
  tc.steps = rc.proxy_steps;
  tc.batch = rc.proxy_batch;
  tc.lr = rc.proxy_lr;
  tc.seed = rc.seed;
  rdc::train_proxy(proxy, train, tc,
                   (fs::path(rc.out) / "proxy_log.csv").string());
  proxy.freeze_encoder();
  std::vector<int> labels;
  auto emb = rdc::embed_dataset(proxy, train, &labels);
  rdc::ProbeTrainConfig pbc;
  pbc.steps = rc.probe_steps;
  pbc.lr = rc.probe_lr;
  pbc.seed = rc.seed;
  rdc::train_probe(proxy, emb, labels, pbc);
  const std::string path = (fs::path(rc.out) / "proxy.rdck").string();
  proxy.save(path);
  // Report accuracies on clean images.
  auto acc_on = [&](const rdc::Dataset<Scalar>& ds) {
    std::vector<rdc::Tensor<Scalar>> imgs;
    std::vector<int> lab;
    for (size_t i = 0; i < ds.size(); ++i) {
      imgs.push_back(ds.image(i));
      lab.push_back(ds.label(i));
    }
    return rdc::probe_accuracy(proxy, imgs, lab);
  };
  std::cout << "proxy saved to " << path << "\n";
  std::cout << "probe accuracy: train " << acc_on(train) << ", val "
            << acc_on(val) << "\n";
  return 0;
}

int cmd_train_stage1(const rdc::RunConfig& rc) {
  auto train = load_split(rc.dataset, "train");
  auto proxy = rdc::CognitionProxy<Scalar>::load(rc.proxy);
  rdc::CodecConfig cc;
  cc.init_seed = rc.seed;
  rdc::CodecModel<Scalar> model(cc);
  fs::create_directories(rc.out);
  rc.echo_into(rc.out);
  rdc::StageIConfig sc;
  sc.steps = rc.s1_steps;
  sc.batch = rc.s1_batch;
  sc.lr = rc.s1_lr;
  sc.lambda_local = rc.lambda_local;
  sc.contrast_scale = rc.contrast_scale;
  sc.seed = rc.seed;
  auto res = rdc::train_stage1(
      model, proxy, train, sc,
      (fs::path(rc.out) / "train_log.csv").string(),
      [](int64_t step, double loss) {
        if (step % 50 == 0)
          std::cout << "stage1 step " << step << " loss " << loss << "\n";
      });
  rdc::calibrate_alphabet(model, train);
  const std::string path = (fs::path(rc.out) / "stage1.rdck").string();
  rdc::save_codec(path, model);
  std::cout << "stage1 model saved to " << path << " (final loss "
            << res.final_loss << ")\n";
  return 0;
}

int cmd_train_stage2(const rdc::RunConfig& rc) {
  auto train = load_split(rc.dataset, "train");
  auto model = rdc::load_codec<Scalar>(rc.model);
  fs::create_directories(rc.out);
  rc.echo_into(rc.out);
  rdc::StageIIConfig sc;
  sc.steps = rc.s2_steps;
  sc.batch = rc.s2_batch;
  sc.lr = rc.s2_lr;
  sc.seed = rc.seed;
  sc.scalable_stream = rc.aux_mode != "direct";
  auto res = rdc::train_stage2(
      model, train, sc, (fs::path(rc.out) / "train_log.csv").string(),
      [](int64_t step, double loss) {
        if (step % 50 == 0)
          std::cout << "stage2 step " << step << " loss " << loss << "\n";
      });
  rdc::calibrate_alphabet(model, train);
  const std::string path = (fs::path(rc.out) / "stage2.rdck").string();
  rdc::save_codec(path, model);
  std::cout << "stage2 model saved to " << path << " (final loss "
            << res.final_loss << ")\n";
  return 0;
}

int cmd_compress(const std::string& input, const std::string& model_path,
                 double alpha, bool aux, double alpha_s,
                 const std::string& out) {
  auto model = rdc::load_codec<Scalar>(model_path);
  auto img = rdc::read_ppm<Scalar>(input);
  auto res = aux ? rdc::compress(model, img, alpha, alpha_s)
                 : rdc::compress(model, img, alpha);
  rdc::write_container(out, res);
  std::cout << "wrote " << out << ": " << res.bytes.size() << " bytes, bpp "
            << res.bpp() << "\n";
  std::cout << "substreams: header "
            << rdc::StreamHeader::kWireBytes << " B, z "
            << res.header.len_z << " B, y " << res.header.len_y << " B, s "
            << res.header.len_s << " B\n";
  std::cout << "estimated bits " << res.est_bits() << ", actual bits "
            << res.actual_bits() << "\n";
  return 0;
}

int cmd_decompress(const std::string& input, const std::string& model_path,
                   double beta, const std::string& out) {
  auto model = rdc::load_codec<Scalar>(model_path);
  auto bytes = rdc::read_container(input);
  auto res = rdc::decompress(model, bytes, beta);
  rdc::write_ppm(out, res.image);
  std::cout << "wrote " << out << " (" << res.header.orig_w << "x"
            << res.header.orig_h << ", beta " << beta << ")\n";
  return 0;
}

int cmd_eval(const rdc::RunConfig& rc, const std::string& split,
             double alpha, double beta, bool finetune) {
  auto ds = load_split(rc.dataset, split);
  auto model = rdc::load_codec<Scalar>(rc.model);
  auto proxy = rdc::CognitionProxy<Scalar>::load(rc.proxy);
  if (finetune) {
    auto train = load_split(rc.dataset, "train");
    rdc::ProbeTrainConfig pbc;
    pbc.steps = rc.probe_steps;
    pbc.lr = rc.probe_lr;
    pbc.seed = rc.seed;
    rdc::finetune_probe_beta1(proxy, model, train, alpha, pbc);
  }
  const bool aux = model.cfg().aux_mode == rdc::AuxMode::kScalable;
  double mean_bpp = 0, mean_psnr = 0;
  std::vector<rdc::Tensor<Scalar>> recon;
  std::vector<int> labels;
  for (size_t i = 0; i < ds.size(); ++i) {
    auto comp = aux ? rdc::compress(model, ds.image(i), alpha, rc.alpha_s)
                    : rdc::compress(model, ds.image(i), alpha);
    mean_bpp += comp.bpp();
    auto dec = rdc::decompress(model, comp.bytes, beta);
    const double p = rdc::psnr(ds.image(i), dec.image);
    mean_psnr += std::isinf(p) ? 99.0 : p;
    recon.push_back(std::move(dec.image));
    labels.push_back(ds.label(i));
  }
  mean_bpp /= ds.size();
  mean_psnr /= ds.size();
  const double acc = rdc::probe_accuracy(proxy, recon, labels);
  std::cout << "alpha=" << alpha << " beta=" << beta << " alpha_s="
            << rc.alpha_s << " bpp=" << mean_bpp << " psnr_db=" << mean_psnr
            << " probe_acc=" << acc << "\n";
  return 0;
}

int cmd_sweep(const rdc::RunConfig& rc, const std::string& split,
              const std::string& out_csv) {
  auto ds = load_split(rc.dataset, split);
  auto model = rdc::load_codec<Scalar>(rc.model);
  auto proxy = rdc::CognitionProxy<Scalar>::load(rc.proxy);
  rdc::SweepOptions opt;
  opt.alphas = rdc::parse_double_list(rc.alphas);
  opt.betas = rdc::parse_double_list(rc.betas);
  opt.alpha_s = rc.alpha_s;
  opt.jobs = rc.jobs;
  auto surf = rdc::sweep_surface(model, proxy, ds, opt);
  fs::create_directories(fs::path(out_csv).parent_path().empty()
                             ? "."
                             : fs::path(out_csv).parent_path().string());
  {
    std::ofstream f(out_csv);
    if (!f) throw rdc::io_error("cannot write " + out_csv);
    f << surf.csv();
  }
  // Rate-accuracy and rate-PSNR plots, one series per beta.
  std::vector<SvgSeries> acc_series, psnr_series;
  for (double beta : opt.betas) {
    SvgSeries sa, sp;
    sa.label = "beta=" + std::to_string(beta);
    sp.label = sa.label;
    for (double alpha : opt.alphas) {
      const rdc::RDCPoint* p = surf.at(alpha, beta);
      if (!p || !p->error.empty()) continue;
      sa.x.push_back(p->bpp);
      sa.y.push_back(p->probe_acc);
      sp.x.push_back(p->bpp);
      sp.y.push_back(p->psnr_db);
    }
    acc_series.push_back(std::move(sa));
    psnr_series.push_back(std::move(sp));
  }
  const std::string stem =
      (fs::path(out_csv).parent_path() / fs::path(out_csv).stem()).string();
  write_svg_plot(stem + "_rate_acc.svg", "rate vs probe accuracy", "bpp",
                 "top-1 accuracy", acc_series);
  write_svg_plot(stem + "_rate_psnr.svg", "rate vs PSNR", "bpp", "PSNR (dB)",
                 psnr_series);
  std::cout << "sweep written to " << out_csv << " ("
            << surf.points.size() << " cells"
            << (surf.complete() ? "" : ", with failures") << ")\n";
  if (!surf.complete()) return 1;
  // Corner ordering report (A/B/C/D per the alpha/beta extremes).
  const auto* A = surf.at(1.0, 1.0);
  const auto* B = surf.at(1.0, 0.0);
  if (A && B && A->error.empty() && B->error.empty()) {
    std::cout << "corner check: acc(A)=" << A->probe_acc
              << (A->probe_acc >= B->probe_acc ? " >= " : " <  ")
              << "acc(B)=" << B->probe_acc << " -> "
              << (A->probe_acc >= B->probe_acc ? "pass" : "fail") << "\n";
    std::cout << "corner check: psnr(B)=" << B->psnr_db
              << (B->psnr_db >= A->psnr_db ? " >= " : " <  ")
              << "psnr(A)=" << A->psnr_db << " -> "
              << (B->psnr_db >= A->psnr_db ? "pass" : "fail") << "\n";
  }
  return 0;
}

int cmd_diagnose(const std::string& input, const std::string& model_path,
                 double alpha, double alpha_s, const std::string& out_dir) {
  auto model = rdc::load_codec<Scalar>(model_path);
  auto img = rdc::read_ppm<Scalar>(input);
  auto res = model.cfg().aux_mode == rdc::AuxMode::kScalable
                 ? rdc::compress(model, img, alpha, alpha_s)
                 : rdc::compress(model, img, alpha);
  auto rep = rdc::diagnostics(model, img, res.bytes);
  rdc::write_diagnostics(out_dir, rep);
  std::cout << "diagnostics written to " << out_dir << "\n";
  std::cout << "hf ratio: x " << rep.hf_ratio_x << ", x1 " << rep.hf_ratio_x1
            << ", x2 " << rep.hf_ratio_x2 << "\n";
  std::cout << "x1 out-of-range fraction " << rep.oor_frac_x1 << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rate-distortion-cognition controllable image codec"};
  app.require_subcommand(1);

  rdc::RunConfig rc;
  std::string config_path;
  app.add_option("--config", config_path, "flat key=value config file");

  // Shared option plumbing: every subcommand may override config values.
  auto add_common = [&rc](CLI::App* sub) {
    sub->add_option("--dataset", rc.dataset, "dataset directory");
    sub->add_option("--out", rc.out, "output directory");
    sub->add_option("--seed", rc.seed, "run seed");
  };

  auto* mk = app.add_subcommand("make-dataset",
                                "generate the versioned toy shape dataset");
  add_common(mk);
  mk->add_option("--train", rc.n_train, "training images");
  mk->add_option("--val", rc.n_val, "validation images");
  mk->add_option("--test", rc.n_test, "test images");

  auto* pp = app.add_subcommand("pretrain-proxy",
                                "contrastive pretraining of the cognition "
                                "encoder plus its linear probe");
  add_common(pp);
  pp->add_option("--steps", rc.proxy_steps, "contrastive steps");
  pp->add_option("--batch", rc.proxy_batch, "batch size");
  pp->add_option("--lr", rc.proxy_lr, "learning rate");
  pp->add_option("--probe-steps", rc.probe_steps, "probe steps");
  pp->add_option("--tau", rc.tau, "InfoNCE temperature");
  pp->add_option("--queue", rc.queue, "negative queue capacity");
  pp->add_option("--ema", rc.ema, "momentum coefficient");

  auto* t1 = app.add_subcommand("train-stage1",
                                "train codec + gain units with the "
                                "cognition-oriented loss");
  add_common(t1);
  t1->add_option("--proxy", rc.proxy, "proxy checkpoint")->required();
  t1->add_option("--steps", rc.s1_steps, "steps");
  t1->add_option("--batch", rc.s1_batch, "batch size");
  t1->add_option("--lr", rc.s1_lr, "learning rate");
  t1->add_option("--lambda-local", rc.lambda_local,
                 "out-of-range penalty weight");
  t1->add_option("--contrast-scale", rc.contrast_scale,
                 "calibration multiplier on the contrastive term");

  auto* t2 = app.add_subcommand(
      "train-stage2", "freeze the primary branch, train the auxiliary one");
  add_common(t2);
  t2->add_option("--model", rc.model, "stage1 checkpoint")->required();
  t2->add_option("--steps", rc.s2_steps, "steps");
  t2->add_option("--batch", rc.s2_batch, "batch size");
  t2->add_option("--lr", rc.s2_lr, "learning rate");
  t2->add_option("--aux-mode", rc.aux_mode,
                 "scalable (error stream) or direct (ablation)");

  std::string in_path, out_path = "out.rdc";
  double alpha = 1.0, beta = 0.0, alpha_s_flag = 1.0;
  bool no_aux = false, finetune = false;
  std::string split = "val", out_csv = "sweep.csv";

  auto* cp = app.add_subcommand("compress", "image -> .rdc container");
  cp->add_option("input", in_path, "input image (binary PPM)")->required();
  cp->add_option("--model", rc.model, "codec checkpoint")->required();
  cp->add_option("--alpha", alpha, "rate point in [0,1]")
      ->default_val("1.0");
  cp->add_option("--alpha-s", alpha_s_flag, "auxiliary rate point")
      ->default_val("1.0");
  cp->add_flag("--no-aux", no_aux, "omit the auxiliary substream");
  cp->add_option("--out", out_path, "output .rdc path")
      ->default_val("out.rdc");

  auto* dc = app.add_subcommand("decompress", ".rdc container -> image");
  dc->add_option("input", in_path, "input .rdc")->required();
  dc->add_option("--model", rc.model, "codec checkpoint")->required();
  dc->add_option("--beta", beta,
                 "distortion-cognition mix in [0,1] (0 = lowest distortion)")
      ->default_val("0.0");
  dc->add_option("--out", out_path, "output image path")
      ->default_val("out.ppm");

  auto* ev = app.add_subcommand(
      "eval", "bpp / PSNR / probe accuracy at one (alpha, beta) point");
  add_common(ev);
  ev->add_option("--model", rc.model, "codec checkpoint")->required();
  ev->add_option("--proxy", rc.proxy, "proxy checkpoint")->required();
  ev->add_option("--split", split, "train|val|test")->default_val("val");
  ev->add_option("--alpha", alpha, "rate point")->default_val("1.0");
  ev->add_option("--beta", beta, "mix point")->default_val("0.0");
  ev->add_option("--alpha-s", rc.alpha_s, "auxiliary rate point");
  ev->add_flag("--finetune-probe", finetune,
               "refit the probe on beta=1 reconstructions first");

  auto* sw = app.add_subcommand(
      "sweep", "full alpha x beta trade-off surface -> CSV + plots");
  add_common(sw);
  sw->add_option("--model", rc.model, "codec checkpoint")->required();
  sw->add_option("--proxy", rc.proxy, "proxy checkpoint")->required();
  sw->add_option("--split", split, "train|val|test")->default_val("val");
  sw->add_option("--alphas", rc.alphas, "comma-separated alpha grid");
  sw->add_option("--betas", rc.betas, "comma-separated beta grid");
  sw->add_option("--alpha-s", rc.alpha_s, "auxiliary rate point");
  sw->add_option("--jobs", rc.jobs, "parallel cells");
  sw->add_option("--out-csv", out_csv, "output CSV path")
      ->default_val("sweep.csv");

  auto* dg = app.add_subcommand(
      "diagnose", "histograms, spectra and channel profiles for one image");
  dg->add_option("input", in_path, "input image (binary PPM)")->required();
  dg->add_option("--model", rc.model, "codec checkpoint")->required();
  dg->add_option("--alpha", alpha, "rate point")->default_val("1.0");
  dg->add_option("--alpha-s", alpha_s_flag, "auxiliary rate point")
      ->default_val("1.0");
  dg->add_option("--out", out_path, "output directory")
      ->default_val("diagnostics");

  try {
    app.parse(argc, argv);
    if (!config_path.empty()) {
      rdc::RunConfig file_rc;
      file_rc.apply(rdc::kv_load(config_path));
      // Flags already parsed win; anything left at its default takes the
      // config-file value.
      rdc::RunConfig defaults;
      auto keep = [&](auto& field, const auto& def, const auto& from_file) {
        if (field == def) field = from_file;
      };
      keep(rc.dataset, defaults.dataset, file_rc.dataset);
      keep(rc.out, defaults.out, file_rc.out);
      keep(rc.model, defaults.model, file_rc.model);
      keep(rc.proxy, defaults.proxy, file_rc.proxy);
      keep(rc.seed, defaults.seed, file_rc.seed);
      keep(rc.n_train, defaults.n_train, file_rc.n_train);
      keep(rc.n_val, defaults.n_val, file_rc.n_val);
      keep(rc.n_test, defaults.n_test, file_rc.n_test);
      keep(rc.proxy_steps, defaults.proxy_steps, file_rc.proxy_steps);
      keep(rc.proxy_batch, defaults.proxy_batch, file_rc.proxy_batch);
      keep(rc.proxy_lr, defaults.proxy_lr, file_rc.proxy_lr);
      keep(rc.probe_steps, defaults.probe_steps, file_rc.probe_steps);
      keep(rc.probe_lr, defaults.probe_lr, file_rc.probe_lr);
      keep(rc.tau, defaults.tau, file_rc.tau);
      keep(rc.queue, defaults.queue, file_rc.queue);
      keep(rc.ema, defaults.ema, file_rc.ema);
      keep(rc.embed_dim, defaults.embed_dim, file_rc.embed_dim);
      keep(rc.s1_steps, defaults.s1_steps, file_rc.s1_steps);
      keep(rc.s1_batch, defaults.s1_batch, file_rc.s1_batch);
      keep(rc.s1_lr, defaults.s1_lr, file_rc.s1_lr);
      keep(rc.lambda_local, defaults.lambda_local, file_rc.lambda_local);
      keep(rc.contrast_scale, defaults.contrast_scale,
           file_rc.contrast_scale);
      keep(rc.s2_steps, defaults.s2_steps, file_rc.s2_steps);
      keep(rc.s2_batch, defaults.s2_batch, file_rc.s2_batch);
      keep(rc.s2_lr, defaults.s2_lr, file_rc.s2_lr);
      keep(rc.aux_mode, defaults.aux_mode, file_rc.aux_mode);
      keep(rc.alphas, defaults.alphas, file_rc.alphas);
      keep(rc.betas, defaults.betas, file_rc.betas);
      keep(rc.alpha_s, defaults.alpha_s, file_rc.alpha_s);
      keep(rc.jobs, defaults.jobs, file_rc.jobs);
    }
    if (const char* env = std::getenv("RDC_SEED"))
      rc.seed = std::stoull(env);

    if (mk->parsed()) return cmd_make_dataset(rc);
    if (pp->parsed()) return cmd_pretrain_proxy(rc);
    if (t1->parsed()) return cmd_train_stage1(rc);
    if (t2->parsed()) return cmd_train_stage2(rc);
    if (cp->parsed())
      return cmd_compress(in_path, rc.model, alpha, !no_aux, alpha_s_flag,
                          out_path);
    if (dc->parsed()) return cmd_decompress(in_path, rc.model, beta, out_path);
    if (ev->parsed()) return cmd_eval(rc, split, alpha, beta, finetune);
    if (sw->parsed()) return cmd_sweep(rc, split, out_csv);
    if (dg->parsed())
      return cmd_diagnose(in_path, rc.model, alpha, alpha_s_flag, out_path);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const rdc::version_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const rdc::stream_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const rdc::io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const rdc::range_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const rdc::config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
