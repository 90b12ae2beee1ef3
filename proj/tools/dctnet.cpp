// dctnet command-line tool: train, evaluate, simulate, generate, serve.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 runtime error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "dctnet/dctnet.hpp"
#include "dctnet/service.hpp"

namespace fs = std::filesystem;
using namespace dctnet;

namespace {

enum Exit { ok = 0, usage = 1, data = 2, runtime = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataSource {
  std::string folder;
  int synthetic = 0;
  int size = 64;
  std::uint64_t seed = 0;
};

void add_data_flags(CLI::App* cmd, DataSource& src) {
  auto* folder = cmd->add_option("--data", src.folder, "folder of <id>.png / <id>_mask.png pairs");
  auto* synth = cmd->add_option("--synthetic", src.synthetic, "generate N synthetic samples instead")->check(CLI::PositiveNumber);
  folder->excludes(synth);
  cmd->add_option("--size", src.size, "synthetic image size (multiple of 8)");
}

std::vector<Sample> load_samples(const DataSource& src, std::uint64_t seed) {
  if (src.folder.empty() == (src.synthetic == 0)) throw UsageError("give exactly one of --data or --synthetic");
  if (src.synthetic > 0) return generate_synthetic(src.synthetic, src.size, seed);
  FolderLoadResult r = load_folder(src.folder);
  for (const auto& e : r.errors) std::cerr << "warning: skipped " << e << '\n';
  if (r.samples.empty()) throw DataError("no usable samples in '" + src.folder + "'");
  std::vector<Sample> out;
  for (const auto& s : r.samples) out.push_back(pad_sample(s, kSizeMultiple));
  return out;
}

std::shared_ptr<const SegModel<float>> load_model(const std::string& path) {
  return std::make_shared<const SegModel<float>>(load_checkpoint(path).model);
}

nlohmann::json epoch_json(const EpochMetrics& m) {
  return {{"epoch", m.epoch},         {"lr", m.lr},
          {"loss", m.mean_loss},      {"bce", m.mean_bce},
          {"drag_error", m.mean_drag_error}, {"interactions", m.interactions},
          {"updates", m.updates},     {"seconds", m.seconds}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive segmentation with dynamic click transforms"};
  app.require_subcommand(1);

  // train
  DataSource train_src;
  TrainConfig tcfg;
  tcfg.lr = 1e-3;
  tcfg.epochs = 10;
  std::string train_out, loss_log;
  bool no_feature = false, no_spatial = false, deterministic = false;
  auto* train = app.add_subcommand("train", "train a model with simulated click-by-click interaction");
  add_data_flags(train, train_src);
  train->add_option("--epochs", tcfg.epochs)->check(CLI::NonNegativeNumber);
  train->add_option("--lr", tcfg.lr)->check(CLI::PositiveNumber);
  train->add_option("--batch", tcfg.batch_size)->check(CLI::PositiveNumber);
  train->add_option("--max-clicks", tcfg.max_clicks, "interactions (and updates) per sample")->check(CLI::PositiveNumber);
  train->add_option("--crop", tcfg.crop_size, "training crop size (multiple of 8)");
  train->add_option("--lr-step", tcfg.lr_step_epochs, "epochs between 10x learning-rate decays")->check(CLI::PositiveNumber);
  train->add_option("--seed", tcfg.seed);
  train->add_option("--out", train_out, "checkpoint path")->required();
  train->add_option("--log", loss_log, "write per-epoch metrics as JSON lines");
  train->add_flag("--no-feature-dct", no_feature, "disable click-feature conditioning");
  train->add_flag("--no-spatial-dct", no_spatial, "baseline Euclidean click maps, no auto-drag head");
  train->add_flag("--deterministic", deterministic, "bitwise reproducible run (the trainer is always single-threaded)");

  // evaluate
  DataSource eval_src;
  eval_src.seed = 1000;
  BenchmarkConfig bcfg;
  std::string eval_model, report_json, report_csv, curve_csv_path, drag = "user";
  bool oracle = false;
  auto* evaluate = app.add_subcommand("evaluate", "robot-user benchmark: NoC@threshold, mIoU curve, AuC");
  auto* model_opt = evaluate->add_option("--model", eval_model, "checkpoint");
  auto* oracle_opt = evaluate->add_flag("--oracle", oracle, "self-test with a predictor returning the ground truth");
  model_opt->excludes(oracle_opt);
  add_data_flags(evaluate, eval_src);
  evaluate->add_option("--seed", eval_src.seed, "synthetic data seed");
  evaluate->add_option("--threshold", bcfg.threshold);
  evaluate->add_option("--cap", bcfg.cap)->check(CLI::PositiveNumber);
  evaluate->add_option("--drag", drag, "radius source: user (robot drag) or auto (auto-drag head)")
      ->check(CLI::IsMember({"user", "auto"}));
  evaluate->add_option("--threads", bcfg.threads)->check(CLI::PositiveNumber);
  evaluate->add_option("--report", report_json, "JSON report with full traces");
  evaluate->add_option("--csv", report_csv, "per-sample CSV report");
  evaluate->add_option("--curve", curve_csv_path, "mIoU-vs-clicks CSV");

  // simulate
  std::string sim_model, sim_image, sim_mask, dump_dir, sim_drag = "user";
  int sim_clicks = 5;
  auto* simulate = app.add_subcommand("simulate", "dump per-click maps, masks and IoUs for one sample");
  simulate->add_option("--model", sim_model)->required();
  simulate->add_option("--image", sim_image)->required();
  simulate->add_option("--mask", sim_mask)->required();
  simulate->add_option("--max-clicks", sim_clicks)->check(CLI::PositiveNumber);
  simulate->add_option("--drag", sim_drag)->check(CLI::IsMember({"user", "auto"}));
  simulate->add_option("--dump-dir", dump_dir)->required();

  // generate
  int gen_count = 0, gen_size = 64;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  auto* generate = app.add_subcommand("generate", "write synthetic <id>.png / <id>_mask.png pairs");
  generate->add_option("--count", gen_count)->required()->check(CLI::PositiveNumber);
  generate->add_option("--size", gen_size);
  generate->add_option("--seed", gen_seed);
  generate->add_option("--out-dir", gen_out)->required();

  // serve
  std::vector<std::string> serve_models;
  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "HTTP session service");
  serve->add_option("--model", serve_models, "checkpoint, optionally as id=path (repeatable)")->required();
  serve->add_option("--host", host);
  serve->add_option("--port", port)->check(CLI::Range(0, 65535));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? Exit::ok : Exit::usage;
  }

  try {
    if (*train) {
      const std::vector<Sample> samples = load_samples(train_src, tcfg.seed);
      const ModelConfig mcfg = ablation_config(!no_spatial, !no_feature);
      SegModel<float> model(mcfg, tcfg.seed);
      std::ofstream log;
      if (!loss_log.empty()) {
        log.open(loss_log, std::ios::trunc);
        if (!log) throw DataError("cannot write '" + loss_log + "'");
      }
      auto result = train_interactive(model, samples, tcfg, [&](const EpochMetrics& m) {
        const std::string line = epoch_json(m).dump();
        std::cout << line << std::endl;
        if (log.is_open()) log << line << std::endl;
      });
      nlohmann::json meta{{"seed", tcfg.seed},        {"epochs", tcfg.epochs},
                          {"lr", tcfg.lr},            {"batch_size", tcfg.batch_size},
                          {"max_clicks", tcfg.max_clicks}, {"samples", samples.size()},
                          {"deterministic", deterministic}};
      save_checkpoint(train_out, model, &result.optimizer, meta);
      std::cerr << "wrote " << train_out << '\n';
      return Exit::ok;
    }

    if (*evaluate) {
      if (!oracle && eval_model.empty()) throw UsageError("give --model or --oracle");
      const std::vector<Sample> samples = load_samples(eval_src, eval_src.seed);
      bcfg.drag = drag_mode_from_string(drag);
      PredictorFactory factory;
      if (oracle) {
        factory = oracle_predictor();
        bcfg.model_id = "oracle";
        bcfg.encoding = "none";
      } else {
        auto model = load_model(eval_model);
        if (bcfg.drag == DragMode::auto_ && !model->config().auto_drag &&
            model->config().encoding == EncodingKind::dynamic_gaussian)
          throw UsageError("--drag auto needs a model with an auto-drag head");
        factory = model_predictor(model);
        bcfg.model_id = fs::path(eval_model).filename().string();
        bcfg.encoding = to_string(model->config().encoding);
      }
      const BenchmarkReport report = run_benchmark(factory, samples, bcfg);
      if (!report_json.empty()) emit_report(report, report_json, ReportFormat::json);
      if (!report_csv.empty()) emit_report(report, report_csv, ReportFormat::csv);
      if (!curve_csv_path.empty()) {
        std::ofstream out(curve_csv_path, std::ios::trunc);
        if (!out) throw DataError("cannot write '" + curve_csv_path + "'");
        out << curve_csv(report);
      }
      std::cout << nlohmann::json{{"samples", report.traces.size()},
                                  {"mnoc", report.mnoc},
                                  {"auc", report.auc},
                                  {"threshold", bcfg.threshold},
                                  {"cap", bcfg.cap},
                                  {"drag", drag}}
                       .dump()
                << '\n';
      return Exit::ok;
    }

    if (*simulate) {
      auto model = load_model(sim_model);
      Sample s;
      s.id = fs::path(sim_image).stem().string();
      s.image = png::decode_image(png::read_file(sim_image));
      decode_mask_values(png::decode_gray(png::read_file(sim_mask)), s.gt, s.ignore);
      validate_sample(s);
      s = pad_sample(s, kSizeMultiple);
      const auto steps = simulate_sample(model, s, sim_clicks, drag_mode_from_string(sim_drag));
      fs::create_directories(dump_dir);
      nlohmann::json clicks = nlohmann::json::array();
      for (std::size_t k = 0; k < steps.size(); ++k) {
        const auto& st = steps[k];
        const std::string stem = (fs::path(dump_dir) / ("click_" + std::to_string(k + 1))).string();
        png::write_file(stem + "_positive.png", png::encode_map(st.maps.positive));
        png::write_file(stem + "_negative.png", png::encode_map(st.maps.negative));
        png::write_file(stem + "_probability.png", png::encode_map(st.probability));
        png::write_file(stem + "_mask.png", png::encode_mask(st.mask));
        clicks.push_back({{"click", click_to_json(st.click)}, {"iou", st.iou}});
      }
      std::ofstream(fs::path(dump_dir) / "trace.json") << nlohmann::json{{"id", s.id}, {"records", clicks}}.dump(2) << '\n';
      for (std::size_t k = 0; k < steps.size(); ++k) std::cout << k + 1 << ' ' << steps[k].iou << '\n';
      return Exit::ok;
    }

    if (*generate) {
      const auto samples = generate_synthetic(gen_count, gen_size, gen_seed);
      fs::create_directories(gen_out);
      for (const auto& s : samples) {
        png::write_file((fs::path(gen_out) / (s.id + ".png")).string(), png::encode_image(s.image));
        png::write_file((fs::path(gen_out) / (s.id + "_mask.png")).string(), png::encode_mask(s.gt));
      }
      std::cerr << "wrote " << samples.size() << " samples to " << gen_out << '\n';
      return Exit::ok;
    }

    if (*serve) {
      SessionManager::ModelMap models;
      for (const auto& entry : serve_models) {
        const auto eq = entry.find('=');
        const std::string id = eq == std::string::npos ? fs::path(entry).stem().string() : entry.substr(0, eq);
        const std::string path = eq == std::string::npos ? entry : entry.substr(eq + 1);
        models[id] = load_model(path);
      }
      SessionManager manager(std::move(models));
      httplib::Server server;
      mount_routes(server, manager);
      const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
      if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
      std::cout << "listening on http://" << host << ':' << bound << std::endl;
      server.listen_after_bind();
      return Exit::ok;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return Exit::usage;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return Exit::data;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return Exit::data;
  } catch (const InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return Exit::usage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Exit::runtime;
  }
  return Exit::usage;
}
