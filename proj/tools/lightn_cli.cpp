// lightn: sampling, training, evaluation and cost reports from the command line.
//
//   lightn sample        --input a.xyz [--input b.xyz] --sampler fps --m 32
//   lightn train-task    [dataset flags]                 -> task.ckpt
//   lightn train-sampler --task task.ckpt --m 16         -> sampler.ckpt
//   lightn eval          --task task.ckpt [--sampler-checkpoint sampler.ckpt]
//   lightn flops         --m-list 16,32,64
//   lightn bench         --m-list 16,32
//
// Settings come from built-in defaults, then --config FILE (key = value), then
// flags. Files go to --output, else $LIGHTN_OUTPUT_DIR, else the working
// directory. Failures print a JSON error object on stderr and exit nonzero.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lightn/cost_model.hpp"
#include "lightn/io.hpp"
#include "lightn/losses.hpp"
#include "lightn/metrics.hpp"
#include "lightn/run_config.hpp"
#include "lightn/samplers.hpp"
#include "lightn/task_head.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace lightn;

namespace {

constexpr int kSchemaVersion = 1;

fs::path output_dir(const RunConfig& cfg) {
  fs::path dir = ".";
  if (!cfg.output.empty()) {
    dir = cfg.output;
  } else if (const char* env = std::getenv("LIGHTN_OUTPUT_DIR"); env && *env) {
    dir = env;
  }
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

Checkpoint read_checkpoint(const std::string& path) {
  if (path.empty()) throw ConfigError("a checkpoint path is required");
  return Checkpoint::load(path);
}

CloudFormat format_for(const std::string& path) {
  return fs::path(path).extension() == ".csv" ? CloudFormat::csv : CloudFormat::xyz;
}

std::vector<ShapeClass> shape_classes(const RunConfig& cfg) {
  std::vector<ShapeClass> out;
  for (const std::string& c : cfg.classes) out.push_back(parse_shape_class(c));
  return out;
}

Dataset train_set(const RunConfig& cfg) {
  return gen_synthetic(shape_classes(cfg), cfg.n, cfg.train_per_class, cfg.data_seed);
}

Dataset test_set(const RunConfig& cfg) {
  return gen_synthetic(shape_classes(cfg), cfg.n, cfg.test_per_class, cfg.data_seed + 1);
}

TrainConfig task_train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.batch_size = cfg.batch_size;
  t.learning_rate = cfg.task_learning_rate;
  t.epochs = cfg.task_epochs;
  t.seed = cfg.seed;
  return t;
}

TrainConfig sampler_train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.batch_size = cfg.batch_size;
  t.learning_rate = cfg.learning_rate;
  t.epochs = cfg.epochs;
  t.seed = cfg.seed + 1;
  return t;
}

LossConfig loss_config(const RunConfig& cfg) {
  LossConfig l;
  l.alpha = cfg.alpha;
  l.beta = cfg.beta;
  l.delta = cfg.delta;
  l.temperature_kind = parse_temperature_kind(cfg.temperature_fn);
  return l;
}

ProjectionConfig projection_config(const RunConfig& cfg) {
  ProjectionConfig p;
  p.k = cfg.proj_k;
  p.temperature_kind = parse_temperature_kind(cfg.temperature_fn);
  return p;
}

SamplerConfig sampler_config(const RunConfig& cfg, std::size_t m) {
  SamplerConfig s;
  s.num_samples = m;
  s.attention.variant = parse_attention_variant(cfg.variant);
  return s;
}

// Per-cloud random seeds derived from the run seed and the cloud position.
IndexSampler classic_sampler(const std::string& name, std::size_t m, std::uint64_t seed) {
  if (name == "fps") return [m](const PointCloud& p, std::size_t) { return fps(p, m, 0); };
  if (name == "random") return [m, seed](const PointCloud& p, std::size_t i) { return random_sample(p, m, seed * 1000003 + i); };
  if (name == "voxel") return [m](const PointCloud& p, std::size_t) { return voxel_sample_indices(p, m); };
  throw ConfigError("unknown classic sampler '" + name + "'");
}

json base_report(const std::string& schema, const RunConfig& cfg) {
  json j;
  j["schema"] = schema;
  j["version"] = kSchemaVersion;
  j["config"] = cfg.to_text();
  return j;
}

// ---------------------------------------------------------------------------

json cmd_sample(const RunConfig& cfg) {
  if (cfg.inputs.empty()) throw ConfigError("sample: at least one --input is required");
  const fs::path dir = output_dir(cfg);
  const CloudFormat out_fmt = parse_cloud_format(cfg.format);
  std::optional<SamplerParams> learned;
  if (cfg.sampler == "lightn") {
    learned = sampler_from_checkpoint(read_checkpoint(cfg.sampler_checkpoint));
    if (learned->config.num_samples != cfg.m) {
      throw ConfigError("sample: checkpoint generates " + std::to_string(learned->config.num_samples) +
                        " points but m = " + std::to_string(cfg.m));
    }
  }
  json report = base_report("lightn.sample.metrics", cfg);
  report["sampler"] = cfg.sampler;
  report["m"] = cfg.m;
  json clouds = json::array();
  std::vector<std::string> outputs;
  for (std::size_t i = 0; i < cfg.inputs.size(); ++i) {
    const std::string& in = cfg.inputs[i];
    const PointCloud p = load_pointcloud(in, format_for(in));
    PointCloud q;
    if (learned) {
      q = lightn_sample(p, *learned, cfg.mode == "soft" ? EvalMode::soft : EvalMode::matched, projection_config(cfg));
    } else {
      if (cfg.m > p.size()) {
        throw DomainError("sample: m = " + std::to_string(cfg.m) + " exceeds N = " + std::to_string(p.size()) +
                          " for '" + in + "'");
      }
      q = p.subset(classic_sampler(cfg.sampler, cfg.m, cfg.seed)(p, i));
    }
    const fs::path out = dir / (fs::path(in).stem().string() + ".sampled." + to_string(out_fmt));
    save_pointcloud(q, out.string(), out_fmt);
    outputs.push_back(out.string());
    json c;
    c["input"] = in;
    c["output"] = out.string();
    c["n"] = p.size();
    c["m"] = q.size();
    c["chamfer"] = chamfer(q, p);
    c["min_pairwise_distance"] = min_pairwise_distance(q);
    c["coverage_radius"] = coverage_radius(q, p);
    clouds.push_back(c);
  }
  report["clouds"] = clouds;
  const fs::path metrics = dir / "metrics.json";
  write_json(metrics, report);
  outputs.push_back(metrics.string());
  return {{"outputs", outputs}};
}

json cmd_train_task(const RunConfig& cfg) {
  const fs::path dir = output_dir(cfg);
  const Dataset train = train_set(cfg), test = test_set(cfg);
  const TaskTrainResult r = pretrain_task(train, test, cfg.classes.size(), task_train_config(cfg));
  const fs::path ckpt = dir / "task.ckpt", log = dir / "task_log.csv", summary = dir / "task_summary.json";
  to_checkpoint(r.params).save(ckpt.string());
  write_text(log, to_csv(r.log));
  json j = base_report("lightn.train_task", cfg);
  j["train_accuracy"] = r.train_accuracy;
  j["test_accuracy"] = r.test_accuracy;
  j["params"] = r.params.parameter_count();
  write_json(summary, j);
  return {{"outputs", std::vector<std::string>{ckpt.string(), log.string(), summary.string()}}, {"test_accuracy", r.test_accuracy}};
}

TaskParams load_or_default_task(const RunConfig& cfg, const fs::path& dir) {
  const std::string path = cfg.task_checkpoint.empty() ? (dir / "task.ckpt").string() : cfg.task_checkpoint;
  return task_from_checkpoint(read_checkpoint(path));
}

json cmd_train_sampler(const RunConfig& cfg) {
  const fs::path dir = output_dir(cfg);
  const TaskParams task = load_or_default_task(cfg, dir);
  const Dataset train = train_set(cfg), test = test_set(cfg);
  const SamplerTrainResult r = train_sampler(train, task, sampler_config(cfg, cfg.m), sampler_train_config(cfg),
                                             loss_config(cfg), projection_config(cfg));
  const fs::path ckpt = dir / "sampler.ckpt", log = dir / "sampler_log.csv", summary = dir / "sampler_summary.json";
  to_checkpoint(r.params).save(ckpt.string());
  write_text(log, to_csv(r.log));
  const EvalResult soft = evaluate(test, r.params, task, EvalMode::soft, projection_config(cfg));
  const EvalResult matched = evaluate(test, r.params, task, EvalMode::matched, projection_config(cfg));
  json j = base_report("lightn.train_sampler", cfg);
  j["temperature"] = r.params.t();
  j["test_accuracy_soft"] = soft.accuracy;
  j["test_accuracy_matched"] = matched.accuracy;
  j["subset_property"] = matched.subset_property;
  j["params"] = r.params.parameter_count();
  write_json(summary, j);
  return {{"outputs", std::vector<std::string>{ckpt.string(), log.string(), summary.string()}},
          {"test_accuracy_soft", soft.accuracy},
          {"test_accuracy_matched", matched.accuracy}};
}

json cmd_eval(const RunConfig& cfg) {
  const fs::path dir = output_dir(cfg);
  const TaskParams task = load_or_default_task(cfg, dir);
  const Dataset test = test_set(cfg);
  json j = base_report("lightn.eval", cfg);
  j["full_resolution_accuracy"] = accuracy(test, task);
  json rows = json::array();
  for (const char* name : {"fps", "random", "voxel"}) {
    const EvalResult r = evaluate(test, classic_sampler(name, cfg.m, cfg.seed), task);
    rows.push_back({{"sampler", name}, {"m", cfg.m}, {"accuracy_soft", r.accuracy}, {"accuracy_matched", r.accuracy}});
  }
  if (!cfg.sampler_checkpoint.empty()) {
    const SamplerParams s = sampler_from_checkpoint(read_checkpoint(cfg.sampler_checkpoint));
    const EvalResult soft = evaluate(test, s, task, EvalMode::soft, projection_config(cfg));
    const EvalResult matched = evaluate(test, s, task, EvalMode::matched, projection_config(cfg));
    rows.push_back({{"sampler", "lightn"},
                    {"m", s.config.num_samples},
                    {"accuracy_soft", soft.accuracy},
                    {"accuracy_matched", matched.accuracy},
                    {"subset_property", matched.subset_property}});
  }
  j["results"] = rows;
  const fs::path out = dir / "eval.json";
  write_json(out, j);
  return {{"outputs", std::vector<std::string>{out.string()}}};
}

json cost_json(const CostReport& r) {
  json stages = json::array();
  for (const CostStage& s : r.breakdown) {
    stages.push_back({{"name", s.name}, {"macs", s.macs}, {"extra_flops", s.extra_flops}, {"flops", s.flops()},
                      {"params", s.params}});
  }
  return {{"config", r.config}, {"N", r.n}, {"m", r.m},       {"macs", r.macs()},
          {"flops", r.flops()}, {"params", r.params()}, {"breakdown", stages}};
}

json cmd_flops(const RunConfig& cfg) {
  const fs::path dir = output_dir(cfg);
  const std::size_t n = cfg.flops_n;
  const AttentionVariant v = parse_attention_variant(cfg.variant);
  json j = base_report("lightn.cost", cfg);
  j["convention"] = kCostConvention;
  j["formulas_macs"] = {
      {"attention_qkv_full_single_head", attention_macs(n, 64, 1, 1, AttentionVariant::qkv_full)},
      {"self_correlation", attention_macs(n, 64, 1, 1, AttentionVariant::self_correlation)},
      {"self_correlation_symmetric", attention_macs(n, 64, 1, 1, AttentionVariant::self_correlation,
                                                    ScoreProduct::symmetric)},
      {"embedding_lightn", embedding_macs(n, 64, EmbeddingStyle::lightn)},
      {"embedding_reference_pct", embedding_macs(n, 64, EmbeddingStyle::reference_pct)},
      {"ffn_middle_layer_global", ffn_macs(n, 512, 2, FfnScope::global)},
      {"ffn_middle_layer_per_point", ffn_macs(n, 512, 2, FfnScope::per_point)}};

  const std::vector<std::size_t> widths{3, 32, 64, 128};
  const std::size_t classes = cfg.classes.size();
  const std::vector<std::pair<std::string, TaskCostFn>> tasks{
      {"pointnet_full", [](std::size_t k) { return pointnet_full_cost(k); }},
      {"task_head", [&](std::size_t k) { return task_head_cost(k, widths, classes); }}};

  std::string csv = cost_csv_header();
  json pipes = json::array();
  for (const auto& [tname, tfn] : tasks) {
    const CostReport ref = tfn(n);
    csv += ref.config + "," + std::to_string(n) + "," + std::to_string(n) + "," + std::to_string(ref.flops()) + "," +
           std::to_string(ref.params()) + ",0.0000,0.0000\n";
    for (std::size_t m : cfg.m_list) {
      SamplerConfig sc = sampler_config(cfg, m);
      sc.attention.variant = v;
      const PipelineCost p = pipeline_cost(sc, n, tfn);
      csv += cost_csv_row(p);
      pipes.push_back({{"task", tname},
                       {"sampler", cost_json(p.sampler)},
                       {"task_at_m", cost_json(p.task_at_m)},
                       {"task_at_n", cost_json(p.task_at_n)},
                       {"within_budget", p.budget.within},
                       {"flops_reduction", {{"num", p.budget.flops_reduction.num},
                                            {"den", p.budget.flops_reduction.den},
                                            {"pct", format_pct(p.budget.flops_reduction)}}},
                       {"params_increase", {{"num", p.budget.params_increase.num},
                                            {"den", p.budget.params_increase.den},
                                            {"pct", format_pct(p.budget.params_increase)}}}});
    }
  }
  j["pipelines"] = pipes;
  const fs::path jp = dir / "cost.json", cp = dir / "cost.csv";
  write_json(jp, j);
  write_text(cp, csv);
  return {{"outputs", std::vector<std::string>{jp.string(), cp.string()}}};
}

json cmd_bench(const RunConfig& cfg) {
  const fs::path dir = output_dir(cfg);
  const Dataset train = train_set(cfg), test = test_set(cfg);
  TaskParams task;
  double task_acc = 0.0;
  if (!cfg.task_checkpoint.empty()) {
    task = task_from_checkpoint(read_checkpoint(cfg.task_checkpoint));
    task_acc = accuracy(test, task);
  } else {
    const TaskTrainResult r = pretrain_task(train, test, cfg.classes.size(), task_train_config(cfg));
    task = r.params;
    task_acc = r.test_accuracy;
  }
  const std::uint64_t task_params = task.parameter_count();
  std::string csv = "sampler,m,accuracy_soft,accuracy_matched,flops,params\n";
  for (std::size_t m : cfg.m_list) {
    if (m > cfg.n) throw DomainError("bench: m = " + std::to_string(m) + " exceeds N = " + std::to_string(cfg.n));
    const std::uint64_t task_flops = task_head_cost(m, task.widths, task.num_classes).flops();
    for (const char* name : {"fps", "random", "voxel"}) {
      const EvalResult r = evaluate(test, classic_sampler(name, m, cfg.seed), task);
      csv += std::string(name) + "," + std::to_string(m) + "," + format_double(r.accuracy) + "," +
             format_double(r.accuracy) + "," + std::to_string(task_flops) + "," + std::to_string(task_params) + "\n";
    }
    const SamplerConfig sc = sampler_config(cfg, m);
    const SamplerTrainResult s =
        train_sampler(train, task, sc, sampler_train_config(cfg), loss_config(cfg), projection_config(cfg));
    const EvalResult soft = evaluate(test, s.params, task, EvalMode::soft, projection_config(cfg));
    const EvalResult matched = evaluate(test, s.params, task, EvalMode::matched, projection_config(cfg));
    const CostReport sc_cost = sampler_cost(sc, cfg.n);
    csv += "lightn," + std::to_string(m) + "," + format_double(soft.accuracy) + "," + format_double(matched.accuracy) +
           "," + std::to_string(sc_cost.flops() + task_flops) + "," + std::to_string(sc_cost.params() + task_params) +
           "\n";
  }
  const fs::path out = dir / "bench.csv", summary = dir / "bench_summary.json";
  write_text(out, csv);
  json j = base_report("lightn.bench", cfg);
  j["convention"] = kCostConvention;
  j["task_test_accuracy"] = task_acc;
  write_json(summary, j);
  return {{"outputs", std::vector<std::string>{out.string(), summary.string()}}};
}

json error_json(const std::string& type, const std::string& message) {
  return {{"status", "error"}, {"error", {{"type", type}, {"message", message}}}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LighTN point cloud downsampling toolkit"};
  app.require_subcommand(1, 1);

  std::string config_file;
  std::map<std::string, std::string> overrides;
  std::vector<std::string> inputs;
  std::vector<std::string> sets;

  struct Cmd {
    const char* name;
    const char* help;
    json (*run)(const RunConfig&);
  };
  const std::vector<Cmd> cmds{
      {"sample", "apply a sampler to point cloud files", cmd_sample},
      {"train-task", "train the task head on the synthetic dataset", cmd_train_task},
      {"train-sampler", "train LighTN against a frozen task head", cmd_train_sampler},
      {"eval", "evaluate samplers under a frozen task head", cmd_eval},
      {"flops", "write FLOPs and parameter reports", cmd_flops},
      {"bench", "sweep m over all samplers", cmd_bench},
  };

  // flag -> RunConfig key
  const std::vector<std::pair<std::string, std::string>> flags{
      {"--output", "output"},       {"--m", "m"},
      {"--seed", "seed"},           {"--sampler", "sampler"},
      {"--variant", "variant"},     {"--alpha", "alpha"},
      {"--beta", "beta"},           {"--delta", "delta"},
      {"--epochs", "epochs"},       {"--format", "format"},
      {"--mode", "mode"},           {"--task", "task_checkpoint"},
      {"--sampler-checkpoint", "sampler_checkpoint"},
      {"--m-list", "m_list"},       {"--n", "n"},
      {"--train-per-class", "train_per_class"},
      {"--test-per-class", "test_per_class"},
      {"--task-epochs", "task_epochs"},
      {"--lr", "learning_rate"},    {"--task-lr", "task_learning_rate"},
      {"--classes", "classes"},     {"--data-seed", "data_seed"},
      {"--temperature-fn", "temperature_fn"},
      {"--flops-n", "flops_n"},
  };

  std::vector<CLI::App*> subs;
  for (const Cmd& c : cmds) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_file, "key = value settings file");
    sub->add_option("--input", inputs, "input point cloud (repeatable)");
    sub->add_option("--set", sets, "override any setting as key=value (repeatable)");
    for (const auto& [flag, key] : flags) {
      sub->add_option_function<std::string>(
          flag, [&overrides, k = key](const std::string& v) { overrides[k] = v; }, "sets '" + key + "'");
    }
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << error_json("usage", e.what()).dump() << '\n';
    return 2;
  }

  std::size_t which = 0;
  while (!subs[which]->parsed()) ++which;

  try {
    RunConfig cfg;
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      if (!in) throw std::runtime_error("cannot open config file '" + config_file + "'");
      apply_config_text(cfg, in);
    }
    for (const auto& [k, v] : overrides) cfg.set(k, v);
    for (const std::string& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (!inputs.empty()) cfg.inputs = inputs;
    cfg.validate();
    json status = cmds[which].run(cfg);
    status["status"] = "ok";
    status["command"] = cmds[which].name;
    std::cout << status.dump() << '\n';
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << error_json("config", e.what()).dump() << '\n';
    return 2;
  } catch (const FormatError& e) {
    std::cerr << error_json("format", e.what()).dump() << '\n';
    return 3;
  } catch (const DomainError& e) {
    std::cerr << error_json("domain", e.what()).dump() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << error_json("runtime", e.what()).dump() << '\n';
    return 1;
  }
}
