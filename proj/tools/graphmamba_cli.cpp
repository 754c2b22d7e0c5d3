#include "graphmamba/ad/checkpoint.hpp"
#include "graphmamba/core/bench.hpp"
#include "graphmamba/core/flops.hpp"
#include "graphmamba/core/gradcheck.hpp"
#include "graphmamba/core/train.hpp"
#include "graphmamba/errors.hpp"
#include "graphmamba/hsi/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
namespace gm = graphmamba;
using nlohmann::json;
using Index = Eigen::Index;

namespace {

struct ModelFlags {
  gm::core::ModelConfig cfg;
  bool no_mask = false;

  void attach(CLI::App* app) {
    app->add_option("--patch-size", cfg.patch_size, "odd patch side")->capture_default_str();
    app->add_option("--depth", cfg.depth, "encoder layers")->capture_default_str();
    app->add_option("--embed-dim", cfg.embed_dim, "token feature width")->capture_default_str();
    app->add_option("--state-dim", cfg.state_dim, "ssm state width")->capture_default_str();
    app->add_option("--hops", cfg.max_hop, "largest hop distance aggregated")->capture_default_str();
    app->add_option("--gamma", cfg.gamma, "adaptive filter sharpness")->capture_default_str();
    app->add_option("--scan-workers", cfg.scan_workers, "threads per prefix scan")->capture_default_str();
    app->add_flag("--no-global-mask", no_mask, "skip the spectral mask in every block");
  }
  gm::core::ModelConfig resolve(std::uint64_t seed) const {
    gm::core::ModelConfig c = cfg;
    c.seed = seed;
    c.global_mask = !no_mask;
    return c;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw gm::FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw gm::FormatError("write failed for " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw gm::FormatError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw gm::FormatError(path.string() + " is not valid JSON: " + e.what());
  }
}

gm::hsi::Splits obtain_splits(const gm::hsi::HsiCube& cube, const std::string& splits_file, const std::string& spec_file,
                              Index train, Index val, std::uint64_t seed) {
  if (!splits_file.empty()) return gm::hsi::splits_from_json(read_json(splits_file));
  const gm::hsi::SplitSpec spec =
      spec_file.empty() ? gm::hsi::SplitSpec::uniform(train, val, seed) : gm::hsi::load_split_spec(spec_file);
  return gm::hsi::make_splits(cube, spec);
}

std::vector<Index> parse_lengths(const std::string& text) {
  std::vector<Index> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v < 1) throw std::invalid_argument(item);
      out.push_back(static_cast<Index>(v));
    } catch (const std::exception&) {
      throw gm::UsageError("bad length '" + item + "' in --lengths");
    }
  }
  if (out.empty()) throw gm::UsageError("--lengths is empty");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graphmamba: hyperspectral patch classification with selective state spaces and graph aggregation"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "seed for every random choice")->capture_default_str();

  // synth
  gm::hsi::SynthSpec synth;
  std::string synth_out = "synthetic";
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic labeled cube");
  synth_cmd->add_option("--classes", synth.classes)->capture_default_str();
  synth_cmd->add_option("--height", synth.height)->capture_default_str();
  synth_cmd->add_option("--width", synth.width)->capture_default_str();
  synth_cmd->add_option("--bands", synth.bands)->capture_default_str();
  synth_cmd->add_option("--separation", synth.separation)->capture_default_str();
  synth_cmd->add_option("--noise", synth.noise_sigma)->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "output stem (<stem>.json, .raw, .labels.raw)")->capture_default_str();

  // split
  std::string cube_path, spec_file, splits_file, split_out = "splits.json";
  Index train_count = 30, val_count = 30;
  auto* split_cmd = app.add_subcommand("split", "draw fixed-count train/val/test splits");
  split_cmd->add_option("--cube", cube_path, "cube stem or header")->required();
  split_cmd->add_option("--spec", spec_file, "JSON split spec");
  split_cmd->add_option("--train", train_count, "train pixels per class without --spec")->capture_default_str();
  split_cmd->add_option("--val", val_count, "val pixels per class without --spec")->capture_default_str();
  split_cmd->add_option("--out", split_out)->capture_default_str();

  // train
  ModelFlags train_model;
  gm::core::TrainConfig tcfg;
  std::string out_dir = "run";
  auto* train_cmd = app.add_subcommand("train", "train a model and keep the best-val checkpoint");
  train_cmd->add_option("--cube", cube_path)->required();
  train_cmd->add_option("--splits", splits_file, "splits JSON from `split`");
  train_cmd->add_option("--spec", spec_file, "JSON split spec");
  train_cmd->add_option("--train", train_count)->capture_default_str();
  train_cmd->add_option("--val", val_count)->capture_default_str();
  train_model.attach(train_cmd);
  train_cmd->add_option("--lr", tcfg.lr)->capture_default_str();
  train_cmd->add_option("--epochs", tcfg.epochs)->capture_default_str();
  train_cmd->add_option("--batch", tcfg.batch)->capture_default_str();
  train_cmd->add_option("--dropout", tcfg.dropout)->capture_default_str();
  train_cmd->add_option("--beta1", tcfg.beta1)->capture_default_str();
  train_cmd->add_option("--beta2", tcfg.beta2)->capture_default_str();
  train_cmd->add_option("--adam-eps", tcfg.eps)->capture_default_str();
  train_cmd->add_option("--patience", tcfg.patience, "early stop after this many flat epochs, 0 = off")
      ->capture_default_str();
  train_cmd->add_option("--target-val-oa", tcfg.target_val_oa, "stop once val OA reaches this")->capture_default_str();
  train_cmd->add_option("--workers", tcfg.workers, "0 = all cores")->capture_default_str();
  train_cmd->add_option("--out-dir", out_dir)->capture_default_str();

  // eval
  std::string checkpoint;
  bool write_map = false;
  unsigned eval_workers = 0;
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on the test split");
  eval_cmd->add_option("--cube", cube_path)->required();
  eval_cmd->add_option("--checkpoint", checkpoint, "defaults to <out-dir>/checkpoint.gmckpt");
  eval_cmd->add_option("--splits", splits_file, "defaults to <out-dir>/splits.json");
  eval_cmd->add_option("--workers", eval_workers, "0 = all cores")->capture_default_str();
  eval_cmd->add_flag("--map", write_map, "also write predicted_labels.raw for every pixel");
  eval_cmd->add_option("--out-dir", out_dir)->capture_default_str();

  // bench-scan
  std::string lengths_text = "1024,2048,4096,8192,16384,32768";
  gm::core::BenchOptions bench;
  auto* bench_cmd = app.add_subcommand("bench-scan", "time the parallel prefix scan across lengths");
  bench_cmd->add_option("--lengths", lengths_text, "comma-separated")->capture_default_str();
  bench_cmd->add_option("--workers", bench.workers)->capture_default_str();
  bench_cmd->add_option("--repeats", bench.repeats)->capture_default_str();
  bench_cmd->add_option("--channels", bench.channels)->capture_default_str();
  bench_cmd->add_option("--state-dim", bench.state)->capture_default_str();
  bench_cmd->add_option("--out-dir", out_dir)->capture_default_str();

  // check-grad
  ModelFlags grad_model;
  gm::core::GradCheckOptions gopt;
  Index grad_bands = 4;
  int grad_classes = 3;
  auto* grad_cmd = app.add_subcommand("check-grad", "finite-difference audit of every parameter gradient");
  grad_model.attach(grad_cmd);
  grad_cmd->add_option("--bands", grad_bands)->capture_default_str();
  grad_cmd->add_option("--classes", grad_classes)->capture_default_str();
  grad_cmd->add_option("--step", gopt.h, "finite-difference step")->capture_default_str();
  grad_cmd->add_option("--tolerance", gopt.tolerance)->capture_default_str();

  // flops
  ModelFlags flop_model;
  Index seq_len = 1;
  auto* flops_cmd = app.add_subcommand("flops", "symbolic and measured per-component FLOPs");
  flop_model.attach(flops_cmd);
  flops_cmd->add_option("--seq-len", seq_len, "number of patch sequences")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*synth_cmd) {
      synth.seed = seed;
      gm::hsi::save_cube(gm::hsi::synth_cube(synth), synth_out);
      std::cout << "wrote " << synth_out << ".json\n";
      return 0;
    }

    if (*split_cmd) {
      const auto cube = gm::hsi::load_cube(cube_path);
      const auto splits = obtain_splits(cube, "", spec_file, train_count, val_count, seed);
      write_text(split_out, gm::hsi::to_json(splits).dump() + "\n");
      std::cout << "train " << splits.train.size() << " val " << splits.val.size() << " test " << splits.test.size()
                << '\n';
      return 0;
    }

    if (*train_cmd) {
      const auto cube = gm::hsi::load_cube(cube_path);
      const auto splits = obtain_splits(cube, splits_file, spec_file, train_count, val_count, seed);
      gm::core::ModelConfig cfg = train_model.resolve(seed);
      cfg.bands = cube.bands;
      cfg.class_count = cube.class_count;
      fs::create_directories(out_dir);
      write_text(fs::path(out_dir) / "splits.json", gm::hsi::to_json(splits).dump() + "\n");
      tcfg.seed = seed;
      tcfg.checkpoint_path = fs::path(out_dir) / "checkpoint.gmckpt";

      gm::core::Model model(cfg);
      const auto t0 = std::chrono::steady_clock::now();
      const auto result = gm::core::train(model, cube, splits, tcfg, [](const gm::core::EpochLog& e) {
        std::cerr << "epoch " << e.epoch << " loss " << e.train_loss << " val_oa " << e.val_oa << '\n';
      });
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::ostringstream log;
      gm::core::write_train_log_csv(log, result.log);
      write_text(fs::path(out_dir) / "train_log.csv", log.str());
      write_text(fs::path(out_dir) / "train_timing.json",
                 json{{"train_seconds", secs}, {"epochs_run", result.log.size()}}.dump(2) + "\n");
      std::cout << "best epoch " << result.best_epoch << " val_oa " << result.best_val_oa << '\n';
      return 0;
    }

    if (*eval_cmd) {
      const fs::path dir(out_dir);
      if (checkpoint.empty()) checkpoint = (dir / "checkpoint.gmckpt").string();
      if (splits_file.empty()) splits_file = (dir / "splits.json").string();
      const auto ckpt = gm::ad::load_checkpoint(checkpoint);
      if (!ckpt.meta.contains("model")) throw gm::FormatError(checkpoint + " carries no model config");
      gm::core::Model model(gm::core::model_config_from_json(ckpt.meta.at("model")));
      gm::ad::restore_parameters(ckpt, model.parameters());
      const auto cube = gm::hsi::load_cube(cube_path);
      if (cube.bands != model.config().bands || cube.class_count != model.config().class_count) {
        throw gm::ConfigError("cube shape does not match the checkpoint's model");
      }
      const auto splits = gm::hsi::splits_from_json(read_json(splits_file));
      const auto report = gm::core::evaluate(model, cube, splits.test, eval_workers);

      fs::create_directories(dir);
      write_text(dir / "eval_report.json", gm::core::to_json(report).dump(2) + "\n");
      std::ostringstream conf;
      gm::core::write_confusion_csv(conf, report.confusion);
      write_text(dir / "confusion.csv", conf.str());
      write_text(dir / "eval_timing.json", json{{"runtime_seconds", report.runtime_seconds}}.dump(2) + "\n");
      if (write_map) {
        std::vector<Index> all(static_cast<std::size_t>(cube.pixel_count()));
        for (Index i = 0; i < cube.pixel_count(); ++i) all[static_cast<std::size_t>(i)] = i;
        const auto pred = gm::core::predict_pixels(model, cube, all, eval_workers);
        std::string raw;
        for (int p : pred) {
          raw.push_back(static_cast<char>(p & 0xff));
          raw.push_back(static_cast<char>((p >> 8) & 0xff));
        }
        write_text(dir / "predicted_labels.raw", raw);
      }
      std::cout << "OA " << report.oa << " AA " << report.aa << " kappa " << report.kappa << '\n';
      return 0;
    }

    if (*bench_cmd) {
      bench.seed = seed;
      const auto lengths = parse_lengths(lengths_text);
      const auto rows = gm::core::bench_scan(lengths, bench);
      fs::create_directories(out_dir);
      std::ostringstream csv;
      gm::core::write_bench_csv(csv, rows);
      write_text(fs::path(out_dir) / "bench_scan.csv", csv.str());
      std::cout << csv.str();
      if (rows.size() >= 2) {
        std::vector<double> x, y;
        for (const auto& r : rows) {
          x.push_back(static_cast<double>(r.length));
          y.push_back(r.median_ns);
        }
        std::cout << "power-law exponent " << gm::core::fit_power_law(x, y) << '\n';
      }
      return 0;
    }

    if (*grad_cmd) {
      gm::core::ModelConfig cfg = grad_model.resolve(seed);
      cfg.bands = grad_bands;
      cfg.class_count = grad_classes;
      const auto report = gm::core::check_model_gradients(cfg, gopt);
      std::cout << "checked " << report.checked << " entries, max rel err " << report.max_rel_err << " ("
                << report.worst.param << '[' << report.worst.index << "]), " << report.shrunk
                << " probes retried with smaller h\n";
      for (const auto& f : report.failures) {
        std::cerr << "mismatch " << f.param << '[' << f.index << "]: analytic " << f.analytic << " numeric "
                  << f.numeric << " rel " << f.rel_err << '\n';
      }
      return report.passed() ? 0 : 1;
    }

    if (*flops_cmd) {
      gm::core::ModelConfig cfg = flop_model.resolve(seed);
      cfg.bands = 1;
      cfg.class_count = 1;
      std::cout << gm::core::to_json(gm::core::count_flops(cfg, seq_len)).dump(2) << '\n';
      return 0;
    }
  } catch (const gm::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
