// adaneg: command-line front end for the streaming OOD detector.
//
//   adaneg synth    --out DIR [generator flags]
//   adaneg run      --manifest M.json [run flags] [--records R.csv] [--report R.json]
//   adaneg eval     --records R.csv [--report R.json]
//   adaneg sweep    --manifest M.json --grid "lambda=0,0.1;L=1,5,10" [run flags]
//   adaneg mixratio --manifest M.json --ratios 1:1,100:1 [run flags]
//   adaneg order    --manifest M.json --seeds 1,2,3 [run flags]
//   adaneg isor     --manifest M.json --ood-truth T.emb [--adaptive] [run flags]
//
// Any command taking --manifest also accepts --synthetic SEED, which
// generates the misaligned desk-scale benchmark in memory instead.

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "adaneg/embeddings.hpp"
#include "adaneg/error.hpp"
#include "adaneg/memory.hpp"
#include "adaneg/metrics.hpp"
#include "adaneg/pipeline.hpp"
#include "json.hpp"

namespace {

using namespace adaneg;

struct RunFlags {
  std::string config_path;
  double gamma = 0, gap = 0, beta = 0, lambda = 0, tau = 0;
  std::size_t mem_len = 0, queue_len = 0;
  std::string mode;
  bool adagap = false;
  std::uint64_t seed = 0;
  std::vector<CLI::Option*> opts;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    opts = {
        app->add_option("--gamma", gamma, "detection/caching threshold (0.5)"),
        app->add_option("--gap", gap, "caching gap g (0.5)"),
        app->add_option("--beta", beta, "sample-adaptive sharpness (5.5)"),
        app->add_option("--lambda", lambda, "fusion weight (0.1)"),
        app->add_option("--tau", tau, "softmax temperature (0.01)"),
        app->add_option("--mem-len", mem_len, "memory slots per class (10)"),
        app->add_option("--mode", mode, "nl | ta | sa | all (all)"),
        app->add_flag("--adagap", adagap, "adapt the caching gap to the estimated ID:OOD ratio"),
        app->add_option("--queue-len", queue_len, "mix-ratio window (10000)"),
        app->add_option("--seed", seed, "shuffle the stream with this seed"),
    };
  }

  bool given(std::size_t i) const { return opts[i]->count() > 0; }

  RunConfig resolve() const {
    RunConfig c;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      std::stringstream ss;
      ss << in.rdbuf();
      c = parse_run_config(ss.str());
    }
    if (given(0)) c.gamma = gamma;
    if (given(1)) c.gap = gap;
    if (given(2)) c.beta = beta;
    if (given(3)) c.lambda = lambda;
    if (given(4)) c.tau = tau;
    if (given(5)) c.mem_len = mem_len;
    if (given(6)) c.mode = parse_score_mode(mode);
    if (given(7)) c.adagap.enabled = adagap;
    if (given(8)) c.adagap.queue_len = queue_len;
    if (given(9)) c.seed = seed;
    c.validate();
    return c;
  }
};

struct DataFlags {
  std::string manifest;
  std::uint64_t synthetic_seed = 0;
  CLI::Option* synthetic = nullptr;

  void attach(CLI::App* app) {
    auto* m = app->add_option("--manifest", manifest, "dataset manifest JSON")->check(CLI::ExistingFile);
    synthetic = app->add_option("--synthetic", synthetic_seed, "use the misaligned synthetic benchmark with this seed");
    m->excludes(synthetic);
  }

  Dataset load() const {
    if (synthetic->count() > 0) return synthesize_dataset(misaligned_benchmark(synthetic_seed));
    if (manifest.empty()) throw Error(ErrorKind::ConfigInvalid, "either --manifest or --synthetic is required");
    return load_dataset(std::filesystem::path(manifest));
  }
};

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text << '\n';
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << text << '\n';
}

std::string null_report() { return "null"; }

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming OOD detection with adaptive negative proxies"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset as EMB1 files plus manifest.json");
  std::string synth_out;
  SyntheticSpec spec = misaligned_benchmark(0);
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--id-classes", spec.id_classes, "C");
  synth->add_option("--neg-classes", spec.neg_classes, "M");
  synth->add_option("--dim", spec.dim, "D");
  synth->add_option("--text-dim", spec.text_dim, "text proxies span the first text-dim coordinates (0 = all)");
  synth->add_option("--id-kappa", spec.id_concentration, "vMF concentration of ID samples");
  synth->add_option("--ood-clusters", spec.ood_clusters, "number of OOD clusters");
  synth->add_option("--ood-kappa", spec.ood_concentration, "vMF concentration of OOD samples");
  synth->add_option("--alignment", spec.alignment, "fraction of OOD clusters centred on negative proxies");
  synth->add_option("--modality-gap", spec.modality_gap, "weight of a shared image-only direction");
  synth->add_option("--n-id", spec.n_id, "ID sample count");
  synth->add_option("--n-ood", spec.n_ood, "OOD sample count");
  synth->add_option("--data-seed", spec.seed, "generator seed");

  // run
  auto* run = app.add_subcommand("run", "score a test stream");
  DataFlags run_data;
  RunFlags run_flags;
  std::string records_path, report_path = "-", dump_dir, warm_dir;
  run_data.attach(run);
  run_flags.attach(run);
  run->add_option("--records", records_path, "per-sample CSV output");
  run->add_option("--report", report_path, "metric report JSON output ('-' = stdout)");
  run->add_option("--dump-memory", dump_dir, "write a memory snapshot here after the run");
  run->add_option("--warm-start", warm_dir, "start from a memory snapshot")->check(CLI::ExistingDirectory);

  // eval
  auto* eval = app.add_subcommand("eval", "recompute metrics from a saved record file");
  std::string eval_records, eval_report = "-";
  eval->add_option("--records", eval_records, "record CSV")->required()->check(CLI::ExistingFile);
  eval->add_option("--report", eval_report, "metric report JSON output ('-' = stdout)");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "grid over gamma, gap, beta, lambda, L, mode");
  DataFlags sweep_data;
  RunFlags sweep_flags;
  std::string grid_text, sweep_out = "-";
  sweep_data.attach(sweep_cmd);
  sweep_flags.attach(sweep_cmd);
  sweep_cmd->add_option("--grid", grid_text, "e.g. \"lambda=0,0.1;L=1,5,10\"")->required();
  sweep_cmd->add_option("--out", sweep_out, "JSON table output");

  // mixratio
  auto* mix = app.add_subcommand("mixratio", "FPR95 with and without AdaGap across ID:OOD ratios");
  DataFlags mix_data;
  RunFlags mix_flags;
  std::string ratio_text = "1:1", mix_out = "-";
  mix_data.attach(mix);
  mix_flags.attach(mix);
  mix->add_option("--ratios", ratio_text, "comma-separated ID:OOD ratios");
  mix->add_option("--out", mix_out, "JSON output");

  // order
  auto* order = app.add_subcommand("order", "metric spread across stream shuffles");
  DataFlags order_data;
  RunFlags order_flags;
  std::string seed_text = "0,1,2", order_out = "-";
  order_data.attach(order);
  order_flags.attach(order);
  order->add_option("--seeds", seed_text, "comma-separated shuffle seeds");
  order->add_option("--out", order_out, "JSON output");

  // isor
  auto* isor_cmd = app.add_subcommand("isor", "alignment of negative proxies with ground-truth OOD labels");
  DataFlags isor_data;
  RunFlags isor_flags;
  std::string ood_truth_path, isor_out = "-";
  bool isor_adaptive = false;
  isor_data.attach(isor_cmd);
  isor_flags.attach(isor_cmd);
  isor_cmd->add_option("--ood-truth", ood_truth_path, "EMB1 file of ground-truth OOD label embeddings")
      ->required()
      ->check(CLI::ExistingFile);
  isor_cmd->add_flag("--adaptive", isor_adaptive, "also score the task-adaptive negative proxies after a run");
  isor_cmd->add_option("--out", isor_out, "JSON output");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      const Dataset ds = synthesize_dataset(spec);
      save_dataset(synth_out, ds);
      std::cerr << "wrote " << ds.stream.rows() << " samples to " << synth_out << "/manifest.json\n";
    } else if (run->parsed()) {
      const RunConfig config = run_flags.resolve();
      const Dataset ds = run_data.load();
      std::unique_ptr<StreamRunner> runner;
      if (!warm_dir.empty())
        runner = std::make_unique<StreamRunner>(config, ds.proxies, load_memory_snapshot(warm_dir));
      else
        runner = std::make_unique<StreamRunner>(config, ds.proxies);
      std::vector<SampleRecord> records;
      for (std::size_t i : stream_order(ds.stream.rows(), config.seed)) records.push_back(runner->step(i, ds.stream.row(i)));
      if (ds.ground_truth)
        for (auto& r : records) r.truth = (*ds.ground_truth)[r.index];
      if (!records_path.empty()) {
        std::ofstream out(records_path, std::ios::trunc);
        if (!out) throw Error(ErrorKind::Io, "cannot write " + records_path);
        write_records_csv(out, records);
      }
      if (!dump_dir.empty()) save_memory_snapshot(dump_dir, runner->memory());
      const auto metrics = records_metrics(records);
      write_text(report_path, metrics ? metrics->to_json() : null_report());
    } else if (eval->parsed()) {
      std::ifstream in(eval_records);
      const auto records = read_records_csv(in);
      const auto metrics = records_metrics(records);
      if (!metrics) throw Error(ErrorKind::EmptyPopulation, "record file lacks ground truth");
      write_text(eval_report, metrics->to_json());
    } else if (sweep_cmd->parsed()) {
      const RunConfig base = sweep_flags.resolve();
      const Dataset ds = sweep_data.load();
      const auto cells = sweep(base, parse_sweep_grid(grid_text), ds);
      write_text(sweep_out, sweep_to_json(cells));
    } else if (mix->parsed()) {
      const RunConfig base = mix_flags.resolve();
      const Dataset ds = mix_data.load();
      std::vector<MixtureRatio> ratios;
      for (const auto& r : split_list(ratio_text)) ratios.push_back(parse_mixture_ratio(r));
      write_text(mix_out, mixture_to_json(mixture_experiment(ratios, base, ds)));
    } else if (order->parsed()) {
      const RunConfig base = order_flags.resolve();
      const Dataset ds = order_data.load();
      std::vector<std::uint64_t> seeds;
      for (const auto& s : split_list(seed_text)) seeds.push_back(std::stoull(s));
      write_text(order_out, ordering_to_json(ordering_experiment(base, ds, seeds)));
    } else if (isor_cmd->parsed()) {
      const RunConfig config = isor_flags.resolve();
      const Dataset ds = isor_data.load();
      const EmbeddingMatrix ood_truth = EmbeddingMatrix::from_file(load_embedding_file(ood_truth_path));
      const auto& p = ds.proxies;
      EmbeddingMatrix id_rows(p.dim()), neg_rows(p.dim());
      for (std::size_t i = 0; i < p.id_count(); ++i) id_rows.push_back(p.row(i));
      for (std::size_t i = p.id_count(); i < p.size(); ++i) neg_rows.push_back(p.row(i));

      const auto summarize = [](const std::vector<double>& values) {
        double sum = 0.0;
        for (double v : values) sum += v;
        return nlohmann::ordered_json{{"mean", values.empty() ? 0.0 : sum / static_cast<double>(values.size())},
                                      {"values", values}};
      };
      nlohmann::ordered_json doc;
      doc["tau"] = config.tau;
      doc["text_negative"] = summarize(isor_rows(neg_rows, id_rows, ood_truth, config.tau));
      if (isor_adaptive) {
        RunConfig c = config;
        c.mode = ScoreMode::Ta;
        StreamRunner runner(c, ds.proxies);
        for (std::size_t i : stream_order(ds.stream.rows(), c.seed)) runner.step(i, ds.stream.row(i));
        EmbeddingMatrix adaptive_neg(p.dim());
        for (std::size_t i = p.id_count(); i < p.size(); ++i) adaptive_neg.push_back(runner.task_adaptive().row(i));
        doc["adaptive_negative"] = summarize(isor_rows(adaptive_neg, id_rows, ood_truth, c.tau));
      }
      write_text(isor_out, doc.dump(2));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
