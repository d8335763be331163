#include "commands.hpp"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "quantart/checkpoint.hpp"
#include "quantart/dataset.hpp"
#include "quantart/hash.hpp"
#include "quantart/inference.hpp"
#include "quantart/metrics.hpp"
#include "quantart/service.hpp"
#include "quantart/train.hpp"

namespace quantart::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<double> parse_grid_axis(const std::string& text, const char* name) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (item.empty() || used != item.size()) throw ValueError(std::string(name) + ": not a number: '" + item + "'");
    if (!(v >= 0.0 && v <= 1.0)) throw ValueError(std::string(name) + ": " + item + " is outside [0, 1]");
    if (!out.empty() && v <= out.back())
      throw ValueError(std::string(name) + " must be strictly increasing (sorted, no duplicates)");
    out.push_back(v);
  }
  if (out.empty()) throw ValueError(std::string(name) + " is empty");
  return out;
}

namespace {

// Options shared by stylize, grid and eval.
struct InferenceArgs {
  std::string ckpt;
  bool fuse_outputs = false;
  std::size_t max_side = 256;

  void add(CLI::App* app) {
    app->add_option("--ckpt", ckpt, "Checkpoint (default: $QUANTART_CKPT)");
    app->add_flag("--fuse-outputs", fuse_outputs, "Blend decoder outputs instead of decoder parameters");
    app->add_option("--max-side", max_side, "Longest side content images are processed at")->check(CLI::PositiveNumber);
  }
  fs::path checkpoint() const {
    if (!ckpt.empty()) return ckpt;
    if (const char* env = std::getenv("QUANTART_CKPT"); env && *env) return env;
    throw ValueError("no checkpoint given: pass --ckpt or set QUANTART_CKPT");
  }
  InferenceOptions options() const {
    return {fuse_outputs ? DecoderFusion::outputs : DecoderFusion::parameters, max_side};
  }
};

ModelBundle<float> load_for_inference(const fs::path& path) {
  auto bundle = load_checkpoint<float>(path);
  if (bundle.stage < 2)
    throw ValueError(path.string() + " has completed stage " + std::to_string(bundle.stage) +
                     "; stylization needs a stage-2 checkpoint");
  return bundle;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValueError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  int stage = 1;
  std::string photos, arts, out, init, config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps, epochs, batch_size, image_size, code_size;
  std::optional<double> lr;
  int precision = 32;
  bool full_scale = false;
  bool no_quantization = false, no_sga_quantization = false, no_self_attn = false, no_resblock = false;
  bool shared_encoders = false, shared_autoencoders = false;
  std::string sga_mode;
  bool reseed_dead = false, no_adv_warmup = false, no_flip = false, quiet = false;

  bool model_flags() const {
    return full_scale || image_size || code_size || no_quantization || no_sga_quantization || no_self_attn ||
           no_resblock || shared_encoders || shared_autoencoders || !sga_mode.empty();
  }
};

void add_train_options(CLI::App* app, TrainArgs& a) {
  app->add_option("--stage", a.stage, "Training stage")->required()->check(CLI::IsMember({1, 2}));
  app->add_option("--photos", a.photos, "Directory of content photos")->required();
  app->add_option("--arts", a.arts, "Directory of artworks")->required();
  app->add_option("--out", a.out, "Output directory for checkpoints and logs")->required();
  app->add_option("--init,--ckpt", a.init, "Stage-1 checkpoint to start stage 2 from");
  app->add_option("--config", a.config, "JSON file with optional \"model\" and \"train\" objects");
  app->add_option("--seed", a.seed, "Seed for initialization, sampling and augmentation");
  app->add_option("--steps", a.steps, "Optimizer steps (overrides --epochs)");
  app->add_option("--epochs", a.epochs, "Epochs");
  app->add_option("--batch-size", a.batch_size)->check(CLI::PositiveNumber);
  app->add_option("--lr", a.lr, "Learning rate")->check(CLI::PositiveNumber);
  app->add_option("--precision", a.precision, "Training precision in bits")->check(CLI::IsMember({32, 64}));
  app->add_flag("--full-scale", a.full_scale, "Start from the full-scale model and training configuration");
  app->add_option("--image-size", a.image_size)->check(CLI::PositiveNumber);
  app->add_option("--code-size", a.code_size, "Latent grid side (sets encoder depth)")->check(CLI::PositiveNumber);
  app->add_flag("--no-quantization", a.no_quantization, "Drop the quantized pairs and the alpha path");
  app->add_flag("--no-sga-quantization", a.no_sga_quantization, "Do not re-quantize the quantized SGA output");
  app->add_flag("--no-self-attn", a.no_self_attn, "SGA modules without self-attention");
  app->add_flag("--no-resblock", a.no_resblock, "SGA modules without the residual block");
  app->add_option("--sga-mode", a.sga_mode, "cross or self_only")->check(CLI::IsMember({"cross", "self_only"}));
  app->add_flag("--shared-encoders", a.shared_encoders, "Continuous and quantized pairs share encoders");
  app->add_flag("--shared-autoencoders", a.shared_autoencoders, "Continuous and quantized pairs share encoder and decoder");
  app->add_flag("--reseed-dead", a.reseed_dead, "Reseed unused codebook entries at epoch ends");
  app->add_flag("--no-adv-warmup", a.no_adv_warmup, "Full adversarial weight from the first step");
  app->add_flag("--no-flip", a.no_flip, "Disable random horizontal flips");
  app->add_flag("-q,--quiet", a.quiet, "Do not echo epoch records");
}

template <class T>
void run_training(const TrainArgs& a, ModelBundle<T> bundle, const TrainConfig& tc) {
  fs::create_directories(a.out);
  const auto size = bundle.config.image_size;
  const auto photos = load_image_dir(a.photos, size);
  const auto arts = load_image_dir(a.arts, size);

  const fs::path log_path = fs::path(a.out) / ("stage" + std::to_string(a.stage) + "_log.jsonl");
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw IoError("cannot write " + log_path.string());
  const LogSink sink = [&](const json& rec) {
    log << rec.dump() << '\n';
    log.flush();
    if (!a.quiet) std::cout << rec.dump() << std::endl;
  };

  if (a.stage == 1)
    train_stage1(bundle, tc, photos, arts, sink);
  else
    train_stage2(bundle, tc, photos, arts, sink);
  if (!log) throw IoError("cannot write " + log_path.string());

  const fs::path ckpt = fs::path(a.out) / ("stage" + std::to_string(a.stage) + ".qart");
  save_checkpoint(bundle, ckpt);
  std::cout << json{{"checkpoint", ckpt.string()}, {"sha256", sha256_hex(read_file(ckpt))}}.dump() << std::endl;
}

template <class T>
void train_with(const TrainArgs& a, const ModelConfig& mc, TrainConfig tc) {
  if (a.stage == 1) {
    run_training(a, ModelBundle<T>(mc, tc.seed), tc);
    return;
  }
  fs::path init = a.init;
  if (init.empty()) {
    const char* env = std::getenv("QUANTART_CKPT");
    init = env && *env ? fs::path(env) : fs::path(a.out) / "stage1.qart";
  }
  run_training(a, load_checkpoint<T>(init), tc);
}

int cmd_train(const TrainArgs& a) {
  ModelConfig mc = a.full_scale ? full_scale_model_config() : ModelConfig{};
  TrainConfig tc = a.full_scale ? full_scale_train_config() : TrainConfig{};
  if (!a.config.empty()) {
    const auto j = read_json_file(a.config);
    if (!j.is_object()) throw ValueError(a.config + ": expected a JSON object");
    for (const auto& [k, v] : j.items())
      if (k != "model" && k != "train") throw ValueError(a.config + ": unknown key '" + k + "'");
    if (j.contains("model")) {
      json base = to_json(mc);
      base.merge_patch(j.at("model"));
      mc = model_config_from_json(base);
    }
    if (j.contains("train")) {
      json base = to_json(tc);
      base.merge_patch(j.at("train"));
      tc = train_config_from_json(base);
    }
  }
  if (a.stage == 2 && (a.model_flags() || (!a.config.empty() && read_json_file(a.config).contains("model"))))
    throw ValueError("model options only apply to stage 1; stage 2 uses the model stored in the checkpoint");

  // Encoder depth is kept, so the latent grid scales with the image.
  if (a.image_size) mc.image_size = *a.image_size;
  if (a.code_size) mc.set_code_size(*a.code_size);
  if (a.no_quantization) mc.quantization = false;
  if (a.no_sga_quantization) mc.sga_quantization = false;
  if (a.no_self_attn) mc.sga.self_attn = false;
  if (a.no_resblock) mc.sga.resblock = false;
  if (!a.sga_mode.empty()) mc.sga.mode = sga_mode_from_string(a.sga_mode);
  if (a.shared_encoders) mc.shared_encoders = true;
  if (a.shared_autoencoders) mc.shared_autoencoders = true;

  tc.stage = a.stage;
  if (a.seed) tc.seed = *a.seed;
  if (a.epochs) tc.epochs = *a.epochs, tc.steps = 0;
  if (a.steps) tc.steps = *a.steps;
  if (a.batch_size) tc.batch_size = *a.batch_size;
  if (a.lr) tc.learning_rate = *a.lr;
  if (a.reseed_dead) tc.reseed_dead = true;
  if (a.no_adv_warmup) tc.adv_warmup = false;
  if (a.no_flip) tc.flip = false;
  mc.validate();
  tc.validate();

  if (a.precision == 64)
    train_with<double>(a, mc, tc);
  else
    train_with<float>(a, mc, tc);
  return kOk;
}

// ---------------------------------------------------------------------------
// stylize / grid

struct StylizeArgs {
  InferenceArgs inf;
  std::string content, style, out;
  double alpha = 1.0, beta = 1.0;
};

int cmd_stylize(const StylizeArgs& a) {
  const FusionParams params{a.alpha, a.beta};
  params.validate();
  const auto bundle = load_for_inference(a.inf.checkpoint());
  const auto out = stylize_image(read_image(a.content), read_image(a.style), params, bundle, a.inf.options());
  write_png(a.out, out);
  return kOk;
}

struct GridArgs {
  InferenceArgs inf;
  std::string content, style, out, index, alphas = "0,0.5,1", betas = "0,0.5,1";
};

int cmd_grid(const GridArgs& a) {
  const auto alphas = parse_grid_axis(a.alphas, "--alphas");
  const auto betas = parse_grid_axis(a.betas, "--betas");
  const auto bundle = load_for_inference(a.inf.checkpoint());
  const auto content = read_image(a.content);
  const auto style = read_image(a.style);

  std::vector<Image> tiles;
  json cells = json::array();
  for (std::size_t r = 0; r < alphas.size(); ++r)
    for (std::size_t c = 0; c < betas.size(); ++c) {
      tiles.push_back(stylize_image(content, style, FusionParams{alphas[r], betas[c]}, bundle, a.inf.options()));
      cells.push_back({{"row", r},
                       {"col", c},
                       {"alpha", alphas[r]},
                       {"beta", betas[c]},
                       {"x", c * content.width},
                       {"y", r * content.height}});
    }
  write_png(a.out, mosaic(tiles, alphas.size(), betas.size()));

  const fs::path index = a.index.empty() ? fs::path(a.out).replace_extension(".json") : fs::path(a.index);
  const json j = {{"rows", alphas.size()},         {"cols", betas.size()},  {"alphas", alphas},
                  {"betas", betas},                {"tile_width", content.width},
                  {"tile_height", content.height}, {"mosaic", a.out},       {"cells", cells}};
  const auto text = j.dump(2) + "\n";
  write_file(index, std::vector<std::uint8_t>(text.begin(), text.end()));
  return kOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  InferenceArgs inf;
  std::string photos, arts, out;
  double alpha = 1.0, beta = 1.0;
  std::size_t batch = 8;
};

int cmd_eval(const EvalArgs& a) {
  const FusionParams params{a.alpha, a.beta};
  params.validate();
  const auto ckpt = a.inf.checkpoint();
  const auto bundle = load_for_inference(ckpt);
  const auto size = bundle.config.image_size;
  const auto photos = load_image_dir(a.photos, size);
  const auto arts = load_image_dir(a.arts, size);
  const auto backbone = backbone_from(bundle);

  // Photo i is stylized with artwork i mod |arts|.
  std::vector<Image> content, style, outputs;
  for (std::size_t i = 0; i < photos.size(); ++i) {
    content.push_back(photos.images[i]);
    style.push_back(arts.images[i % arts.size()]);
  }
  double gram = 0.0, lpips = 0.0;
  for (std::size_t i = 0; i < content.size(); i += a.batch) {
    const std::size_t n = std::min(a.batch, content.size() - i);
    const std::vector<Image> cb(content.begin() + i, content.begin() + i + n);
    const std::vector<Image> sb(style.begin() + i, style.begin() + i + n);
    const auto c = to_tensor<float>(cb), s = to_tensor<float>(sb);
    const auto y = stylize(c, s, params, bundle, a.inf.options().mode);
    gram += gram_loss(y, s, backbone) * static_cast<double>(n);
    lpips += perceptual_distance(y, c, backbone) * static_cast<double>(n);
    for (std::size_t b = 0; b < n; ++b) outputs.push_back(to_image(y, b));
  }
  gram /= static_cast<double>(content.size());
  lpips /= static_cast<double>(content.size());

  const auto fid = frechet_distance(feature_moments(to_tensor<float>(outputs), backbone),
                                    feature_moments(to_tensor<float>(arts.images), backbone));
  const auto& h = backbone.hash();
  const json report = {{"checkpoint", ckpt.string()},
                       {"alpha", a.alpha},
                       {"beta", a.beta},
                       {"metrics",
                        {metric_report("gram_loss", gram, content.size(), h),
                         metric_report("perceptual_distance", lpips, content.size(), h),
                         metric_report("frechet_distance", fid, outputs.size(), h),
                         metric_report("artfid", artfid(lpips, fid), outputs.size(), h)}}};
  std::cout << report.dump(2) << std::endl;
  if (!a.out.empty()) {
    const auto text = report.dump(2) + "\n";
    write_file(a.out, std::vector<std::uint8_t>(text.begin(), text.end()));
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// serve

struct ServeArgs {
  InferenceArgs inf;
  ServiceOptions opt;
};

int cmd_serve(ServeArgs a) {
  const auto ckpt = a.inf.checkpoint();
  a.opt.inference = a.inf.options();

  // Signals are taken synchronously by a dedicated thread.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  StylizeService service(a.opt);
  const int port = service.bind();
  std::cerr << "listening on " << a.opt.host << ":" << port << ", loading " << ckpt.string() << std::endl;
  service.load_async(ckpt);
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    service.stop();
  });
  service.listen();
  // listen() can also return on its own; wake the waiter.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return kOk;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string out;
  std::size_t count = 16, size = 32;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a) {
  for (auto [domain, dir] : {std::pair{Domain::photo, "photos"}, std::pair{Domain::art, "arts"}}) {
    const auto data = synthetic_textures(domain, a.count, a.size, a.seed);
    const fs::path d = fs::path(a.out) / dir;
    std::error_code ec;
    fs::create_directories(d, ec);
    if (ec) throw IoError("cannot create " + d.string() + ": " + ec.message());
    for (std::size_t i = 0; i < data.size(); ++i) write_png(d / data.names[i], data.images[i]);
  }
  return kOk;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"quantart: quantized style transfer with alpha/beta fidelity control"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "quantart 1.0");

  TrainArgs train;
  add_train_options(app.add_subcommand("train", "Train stage 1 or stage 2"), train);

  StylizeArgs sty;
  auto* s = app.add_subcommand("stylize", "Stylize one content image");
  sty.inf.add(s);
  s->add_option("--content", sty.content)->required();
  s->add_option("--style", sty.style)->required();
  s->add_option("--out", sty.out)->required();
  s->add_option("--alpha", sty.alpha, "Quantized (1) vs continuous (0) path");
  s->add_option("--beta", sty.beta, "Stylized (1) vs content (0) feature");

  GridArgs grid;
  auto* g = app.add_subcommand("grid", "Render an alpha x beta mosaic with a JSON index");
  grid.inf.add(g);
  g->add_option("--content", grid.content)->required();
  g->add_option("--style", grid.style)->required();
  g->add_option("--out", grid.out, "Mosaic PNG")->required();
  g->add_option("--index", grid.index, "JSON index (default: mosaic path with .json)");
  g->add_option("--alphas", grid.alphas, "Comma-separated, increasing, in [0, 1] (rows)");
  g->add_option("--betas", grid.betas, "Comma-separated, increasing, in [0, 1] (columns)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Style, content and Frechet metrics over image directories");
  ev.inf.add(e);
  e->add_option("--photos", ev.photos)->required();
  e->add_option("--arts", ev.arts)->required();
  e->add_option("--out", ev.out, "Also write the JSON report here");
  e->add_option("--alpha", ev.alpha);
  e->add_option("--beta", ev.beta);
  e->add_option("--batch", ev.batch)->check(CLI::PositiveNumber);

  ServeArgs srv;
  auto* v = app.add_subcommand("serve", "HTTP inference service");
  srv.inf.add(v);
  v->add_option("--host", srv.opt.host);
  v->add_option("--port", srv.opt.port, "0 picks a free port")->check(CLI::Range(0, 65535));
  v->add_option("--max-concurrent", srv.opt.max_concurrent)->check(CLI::PositiveNumber);
  v->add_option("--max-payload", srv.opt.max_payload, "Request size cap in bytes")->check(CLI::PositiveNumber);

  SynthArgs syn;
  auto* y = app.add_subcommand("synth", "Write seeded synthetic photo/art textures to OUT/photos and OUT/arts");
  y->add_option("--out", syn.out)->required();
  y->add_option("--count", syn.count)->check(CLI::PositiveNumber);
  y->add_option("--size", syn.size)->check(CLI::PositiveNumber);
  y->add_option("--seed", syn.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kBadArgs;
  }

  try {
    if (app.got_subcommand("train")) return cmd_train(train);
    if (app.got_subcommand("stylize")) return cmd_stylize(sty);
    if (app.got_subcommand("grid")) return cmd_grid(grid);
    if (app.got_subcommand("eval")) return cmd_eval(ev);
    if (app.got_subcommand("serve")) return cmd_serve(srv);
    if (app.got_subcommand("synth")) return cmd_synth(syn);
  } catch (const DivergenceError& err) {
    std::cerr << "error: training diverged: " << err.what() << std::endl;
    return kDiverged;
  } catch (const IoError& err) {
    std::cerr << "error: " << err.what() << std::endl;
    return kIoError;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "error: " << err.what() << std::endl;
    return kIoError;
  } catch (const std::invalid_argument& err) {
    // ValueError, ShapeError, config errors
    std::cerr << "error: " << err.what() << std::endl;
    return kBadArgs;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << std::endl;
    return kFailure;
  }
  return kBadArgs;
}

}  // namespace quantart::cli
