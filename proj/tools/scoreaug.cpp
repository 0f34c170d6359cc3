#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "scoreaug/config.hpp"
#include "scoreaug/dataset.hpp"
#include "scoreaug/model.hpp"
#include "scoreaug/sampler.hpp"
#include "scoreaug/train.hpp"
#include "scoreaug/verify_suite.hpp"

namespace fs = std::filesystem;
using namespace scoreaug;

namespace {

void apply_env_seed(RunConfig& cfg) {
  if (const char* env = std::getenv("SCOREAUG_SEED")) {
    cfg.train.seed = std::strtoull(env, nullptr, 10);
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

int cmd_verify(const std::string& config_path, const std::string& filter,
               const std::string& out_path) {
  RunConfig cfg;
  if (!config_path.empty()) cfg = parse_config_file(config_path);
  const std::vector<CheckResult> results = run_verification_suite(filter, cfg);

  std::ostringstream csv;
  write_verification_csv(csv, results);
  if (out_path.empty()) {
    std::cout << csv.str();
  } else {
    write_text(out_path, csv.str());
  }

  int failures = 0;
  for (const CheckResult& r : results) {
    if (!r.pass) {
      ++failures;
      std::cerr << "FAIL " << r.id << (r.note.empty() ? "" : ": " + r.note) << "\n";
    }
  }
  std::cerr << results.size() - failures << "/" << results.size() << " checks passed\n";
  return failures == 0 ? 0 : 1;
}

int cmd_train(RunConfig cfg, bool force) {
  const fs::path out_dir = cfg.output_dir;
  if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force) {
    std::cerr << "output directory " << out_dir << " is not empty (use --force)\n";
    return 1;
  }
  fs::create_directories(out_dir);

  const EmpiricalDataset dataset = config_dataset(cfg);
  const auto heldout = config_heldout(cfg);
  const DiffusionSchedule schedule = config_schedule(cfg, dataset);

  write_text(out_dir / "config.txt", serialize_config(cfg));

  const TrainResult result = train_run(cfg.train, schedule, dataset,
                                       heldout ? &*heldout : nullptr, &out_dir);
  const MetricsRow& last = result.metrics.rows.back();
  std::cout << "variant=" << loss_variant_name(cfg.train.variant) << " steps=" << last.step
            << " train_loss=" << last.train_loss << " heldout_loss=" << last.heldout_loss
            << " gap=" << last.gap << " floor=" << last.oracle_loss_floor << "\n";
  if (result.diverged) {
    std::cerr << "training diverged after step " << result.last_good_step
              << "; last good checkpoint retained\n";
    return 1;
  }
  std::cout << "run artifacts in " << out_dir << "\n";
  return 0;
}

int cmd_sample(const std::string& run_dir_arg, std::string config_path, int count,
               const std::string& condition, bool sweep_rotations, std::string out_prefix) {
  const fs::path run_dir = run_dir_arg;
  if (config_path.empty()) config_path = (run_dir / "config.txt").string();
  RunConfig cfg = parse_config_file(config_path);
  apply_env_seed(cfg);

  const fs::path ckpt_path = run_dir / "checkpoint.bin";
  if (!fs::exists(ckpt_path)) {
    std::cerr << "missing checkpoint: " << ckpt_path << "\n";
    return 1;
  }
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  DenoiserNet net(ckpt.net, ckpt.sigma_data);
  net.params() = ckpt.ema;

  const EmpiricalDataset dataset = config_dataset(cfg);
  const DiffusionSchedule schedule = config_schedule(cfg, dataset);
  SamplerConfig sampler = cfg.train.sampler;
  if (!condition.empty()) parse_condition_spec(condition, &sampler);
  if (count > 0) cfg.sample_count = count;
  if (out_prefix.empty()) out_prefix = (run_dir / "samples").string();

  const auto emit = [&](const Eigen::MatrixXd& samples, const std::string& tag) {
    EmpiricalDataset out_ds = make_dataset(samples, dataset.shape, dataset.sigma_data);
    const fs::path txt = out_prefix + tag + ".txt";
    save_dataset(txt, out_ds);
    std::cout << "wrote " << txt << " (" << samples.cols() << " samples)\n";
    if (dataset.shape.height > 1 && dataset.shape.channels == 1) {
      for (int i = 0; i < samples.cols(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%03d.pgm", tag.c_str(), i);
        write_pgm(out_prefix + name, samples.col(i), dataset.shape);
      }
    }
  };

  Rng rng(derive_seed(cfg.train.seed, 0x5A17));
  const DenoiserFn denoiser = net_denoiser(net);
  if (sweep_rotations) {
    const std::vector<int> turns = dataset.shape.square() ? std::vector<int>{0, 1, 2, 3}
                                                          : std::vector<int>{0, 2};
    const auto groups = conditioned_generation_sweep(denoiser, sampler, schedule, rng,
                                                     cfg.sample_count, dataset.shape, turns);
    for (const auto& [k, samples] : groups) emit(samples, "_rot" + std::to_string(k));
  } else {
    const Eigen::MatrixXd samples =
        heun_sample(denoiser, sampler, schedule, rng, cfg.sample_count, dataset.shape);
    std::string tag;
    if (sampler.condition_mode == ConditionMode::params) {
      std::string spec = condition_spec_string(sampler);
      for (char& c : spec) {
        if (c == ':' || c == ',') c = '_';
      }
      tag = "_" + spec;
    }
    emit(samples, tag);
  }
  return 0;
}

struct ReportRow {
  std::string dir;
  std::string variant;
  int data_n = 0;
  int width = 0;
  MetricsRow last;
};

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_path) {
  std::vector<ReportRow> rows;
  for (const std::string& dir : run_dirs) {
    const fs::path run_dir = dir;
    const RunConfig cfg = parse_config_file(run_dir / "config.txt");
    std::ifstream metrics(run_dir / "metrics.csv");
    if (!metrics) {
      std::cerr << "missing metrics.csv in " << dir << "\n";
      return 1;
    }
    std::string line, last_line, header;
    std::getline(metrics, header);
    while (std::getline(metrics, line)) {
      if (!line.empty()) last_line = line;
    }
    if (last_line.empty()) {
      std::cerr << "empty metrics in " << dir << "\n";
      return 1;
    }
    ReportRow row;
    row.dir = dir;
    row.variant = loss_variant_name(cfg.train.variant);
    row.data_n = cfg.data_n;
    row.width = cfg.train.net.hidden.empty() ? 0 : cfg.train.net.hidden.front();
    std::stringstream ss(last_line);
    std::string cell;
    double vals[8] = {0};
    for (int i = 0; i < 8 && std::getline(ss, cell, ','); ++i) vals[i] = std::stod(cell);
    row.last.step = static_cast<long>(vals[0]);
    row.last.train_loss = vals[1];
    row.last.heldout_loss = vals[2];
    row.last.gap = vals[3];
    row.last.oracle_loss_floor = vals[4];
    row.last.nn_min = vals[5];
    row.last.nn_median = vals[6];
    row.last.nn_max = vals[7];
    rows.push_back(row);
  }
  std::sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
    if (a.variant != b.variant) return a.variant < b.variant;
    if (a.data_n != b.data_n) return a.data_n < b.data_n;
    return a.width < b.width;
  });

  std::ostringstream out;
  out << "variant\tdata_n\twidth\tstep\ttrain_loss\theldout_loss\tgap\toracle_floor\t"
         "nn_median\trun_dir\n";
  char buf[256];
  for (const ReportRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s\t%d\t%d\t%ld\t%.8g\t%.8g\t%.8g\t%.8g\t%.8g\t%s\n",
                  r.variant.c_str(), r.data_n, r.width, r.last.step, r.last.train_loss,
                  r.last.heldout_loss, r.last.gap, r.last.oracle_loss_floor,
                  r.last.nn_median, r.dir.c_str());
    out << buf;
  }
  if (out_path.empty()) {
    std::cout << out.str();
  } else {
    write_text(out_path, out.str());
    std::cout << "wrote " << out_path << " (" << rows.size() << " rows)\n";
  }
  return 0;
}

int cmd_gen_data(const std::string& generator, int n, std::uint64_t seed,
                 const std::string& out_path) {
  const EmpiricalDataset ds = generate_dataset(generator, n, seed);
  save_dataset(out_path, ds);
  std::cout << "wrote " << out_path << " (d=" << ds.dim() << ", N=" << ds.count() << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ScoreAug toy-scale diffusion lab: transforms, oracles, training, sampling"};
  app.require_subcommand(1);

  auto* verify = app.add_subcommand("verify", "run the score/theorem verification suite");
  std::string verify_config, verify_filter, verify_out;
  verify->add_option("--config", verify_config, "run configuration file");
  verify->add_option("--filter", verify_filter, "only run cases whose id contains this");
  verify->add_option("--out", verify_out, "write the CSV report here instead of stdout");

  auto* train = app.add_subcommand("train", "train a denoiser per the configuration");
  std::string train_config, train_out_dir, train_variant;
  std::int64_t train_seed = -1, train_steps = -1;
  bool train_force = false;
  train->add_option("--config", train_config, "run configuration file")->required();
  train->add_option("--seed", train_seed, "override the config seed");
  train->add_option("--out-dir", train_out_dir, "override the output directory");
  train->add_option("--variant", train_variant, "override the loss variant");
  train->add_option("--steps", train_steps, "override the step count");
  train->add_flag("--force", train_force, "allow writing into a non-empty directory");

  auto* sample = app.add_subcommand("sample", "draw PF-ODE samples from a checkpoint");
  std::string sample_run, sample_config, sample_condition, sample_out;
  int sample_count = 0;
  bool sweep_rotations = false;
  sample->add_option("--run", sample_run, "run directory with checkpoint.bin")->required();
  sample->add_option("--config", sample_config, "config file (default: run dir snapshot)");
  sample->add_option("--count", sample_count, "number of samples");
  sample->add_option("--condition", sample_condition,
                     "condition: zeros | identity | kind:args (e.g. rotation:2)");
  sample->add_flag("--sweep-rotations", sweep_rotations,
                   "emit one batch per rotation condition");
  sample->add_option("--out-prefix", sample_out, "output path prefix");

  auto* report = app.add_subcommand("report", "aggregate metrics across run directories");
  std::vector<std::string> report_dirs;
  std::string report_out;
  report->add_option("runs", report_dirs, "run directories")->required();
  report->add_option("--out", report_out, "write the TSV table here instead of stdout");

  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset file");
  std::string gen_generator = "gmm2d", gen_out;
  int gen_n = 64;
  std::uint64_t gen_seed = 1;
  gen->add_option("--generator", gen_generator, "gmm2d | glyphs8");
  gen->add_option("--n", gen_n, "number of points");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (verify->parsed()) return cmd_verify(verify_config, verify_filter, verify_out);
    if (train->parsed()) {
      RunConfig cfg = parse_config_file(train_config);
      apply_env_seed(cfg);
      if (train_seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(train_seed);
      if (train_steps >= 0) cfg.train.steps = static_cast<int>(train_steps);
      if (!train_variant.empty()) cfg.train.variant = loss_variant_from_name(train_variant);
      if (!train_out_dir.empty()) cfg.output_dir = train_out_dir;
      return cmd_train(cfg, train_force);
    }
    if (sample->parsed()) {
      return cmd_sample(sample_run, sample_config, sample_count, sample_condition,
                        sweep_rotations, sample_out);
    }
    if (report->parsed()) return cmd_report(report_dirs, report_out);
    if (gen->parsed()) return cmd_gen_data(gen_generator, gen_n, gen_seed, gen_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
