// Command-line entry point: data generation, training, evaluation,
// verification, export, and gradient checking over the imsvd library.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "imsvd/data.hpp"
#include "imsvd/error.hpp"
#include "imsvd/eval.hpp"
#include "imsvd/matrix.hpp"
#include "imsvd/model.hpp"
#include "imsvd/trainer.hpp"

namespace {

constexpr const char* kVersion = "imsvd 0.1.0";

struct Cli {
  imsvd::TrainConfig config;
  size_t m = 4;
  size_t dm = 8;
  std::string variant = "full";
  std::string optimizer = "adam";
  std::string dataset = "synthetic";
  std::string out;
  std::string resume;
  std::string checkpoint;

  size_t k = 20;
  size_t attr = 0;
  bool raw = false;
  bool embeddings = false;
  uint64_t seed_eval = 0;
  imsvd::ProbeConfig probe;

  uint64_t gc_seed = 0;
  size_t gc_m = 3, gc_dm = 4, gc_n = 8, gc_input = 8, gc_proj = 12;
  std::vector<size_t> gc_hidden{16};
  double gc_h = 1e-5, gc_tol = 1e-5;
  std::string gc_variant = "full";

  imsvd::AttributeWorldSpec world;
  int exit_code = 0;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct DatasetChoice {
  enum class Kind { kSynthetic, kIdx, kCsv } kind = Kind::kSynthetic;
  std::vector<std::string> paths;
};

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  parts.push_back(cur);
  return parts;
}

DatasetChoice parse_dataset(const std::string& s) {
  DatasetChoice dc;
  if (s == "synthetic") return dc;
  if (s.rfind("idx:", 0) == 0) {
    dc.kind = DatasetChoice::Kind::kIdx;
    dc.paths = split_commas(s.substr(4));
    return dc;
  }
  if (s.rfind("csv:", 0) == 0) {
    dc.kind = DatasetChoice::Kind::kCsv;
    dc.paths = split_commas(s.substr(4));
    return dc;
  }
  imsvd::fail(imsvd::ErrorKind::kContract, "unrecognized dataset: " + s);
}

// CLI11 validator so a malformed --dataset string is a usage error.
std::string check_dataset(const std::string& s) {
  if (s == "synthetic") return {};
  if (s.rfind("idx:", 0) == 0) {
    size_t n = split_commas(s.substr(4)).size();
    if (n == 2 || n == 4) return {};
    return "idx dataset needs images,labels or "
           "train_images,train_labels,test_images,test_labels";
  }
  if (s.rfind("csv:", 0) == 0) {
    size_t n = split_commas(s.substr(4)).size();
    if (n == 1 || n == 2) return {};
    return "csv dataset needs train[,test] paths";
  }
  return "expected synthetic, idx:<paths>, or csv:<paths>";
}

imsvd::World synthetic_world(uint64_t seed) {
  imsvd::AttributeWorldSpec ws;
  ws.seed = seed;
  return imsvd::generate_world(ws);
}

imsvd::Dataset load_train_split(const std::string& spec, uint64_t seed_data) {
  DatasetChoice dc = parse_dataset(spec);
  switch (dc.kind) {
    case DatasetChoice::Kind::kSynthetic:
      return synthetic_world(seed_data).train;
    case DatasetChoice::Kind::kIdx:
      return imsvd::load_idx(dc.paths[0], dc.paths[1]);
    case DatasetChoice::Kind::kCsv:
      return imsvd::load_csv(dc.paths[0]);
  }
  imsvd::fail(imsvd::ErrorKind::kContract, "unreachable dataset kind");
}

std::pair<imsvd::Dataset, imsvd::Dataset> load_splits(
    const std::string& spec, uint64_t seed_data) {
  DatasetChoice dc = parse_dataset(spec);
  switch (dc.kind) {
    case DatasetChoice::Kind::kSynthetic: {
      imsvd::World w = synthetic_world(seed_data);
      return {std::move(w.train), std::move(w.test)};
    }
    case DatasetChoice::Kind::kIdx:
      if (dc.paths.size() != 4)
        imsvd::fail(imsvd::ErrorKind::kContract,
                    "this command needs a test split: "
                    "idx:train_images,train_labels,test_images,test_labels");
      return {imsvd::load_idx(dc.paths[0], dc.paths[1]),
              imsvd::load_idx(dc.paths[2], dc.paths[3])};
    case DatasetChoice::Kind::kCsv:
      if (dc.paths.size() != 2)
        imsvd::fail(imsvd::ErrorKind::kContract,
                    "this command needs a test split: csv:train,test");
      return {imsvd::load_csv(dc.paths[0]), imsvd::load_csv(dc.paths[1])};
  }
  imsvd::fail(imsvd::ErrorKind::kContract, "unreachable dataset kind");
}

void write_manifest(
    const std::string& dir,
    const std::vector<std::pair<std::string, std::string>>& entries) {
  std::filesystem::create_directories(dir);
  std::string path = dir + "/manifest.txt";
  std::ofstream out(path);
  if (!out) imsvd::fail(imsvd::ErrorKind::kIo, "cannot open for writing: " + path);
  out << "version=" << kVersion << "\n";
  for (const auto& [key, value] : entries) out << key << "=" << value << "\n";
  if (!out) imsvd::fail(imsvd::ErrorKind::kIo, "short write: " + path);
}

std::vector<std::pair<std::string, std::string>> config_entries(
    const Cli& cli) {
  const imsvd::TrainConfig& c = cli.config;
  std::string hidden;
  for (size_t i = 0; i < c.encoder_hidden.size(); ++i)
    hidden += (i ? "," : "") + std::to_string(c.encoder_hidden[i]);
  return {{"epochs", std::to_string(c.epochs)},
          {"batch_size", std::to_string(c.batch_size)},
          {"base_lr", fmt(c.base_lr)},
          {"warmup_epochs", std::to_string(c.warmup_epochs)},
          {"final_lr", fmt(c.final_lr)},
          {"weight_decay", fmt(c.weight_decay)},
          {"optimizer", cli.optimizer},
          {"adam_beta1", fmt(c.adam_beta1)},
          {"adam_beta2", fmt(c.adam_beta2)},
          {"adam_eps", fmt(c.adam_eps)},
          {"momentum", fmt(c.momentum)},
          {"variant", cli.variant},
          {"lambda", fmt(c.weights.lambda)},
          {"beta", fmt(c.weights.beta)},
          {"seed_model", std::to_string(c.seed_model)},
          {"seed_data", std::to_string(c.seed_data)},
          {"seed_shuffle", std::to_string(c.seed_shuffle)},
          {"m", std::to_string(cli.m)},
          {"dm", std::to_string(cli.dm)},
          {"encoder_hidden", hidden},
          {"projector_hidden", std::to_string(c.projector_hidden)},
          {"aug_noise", fmt(c.augment.noise_sigma)},
          {"aug_dropout", fmt(c.augment.dropout)},
          {"aug_scale", fmt(c.augment.scale)},
          {"checkpoint_every", std::to_string(c.checkpoint_every)},
          {"dataset", cli.dataset},
          {"out", cli.out}};
}

void emit_result(const nlohmann::json& j, const std::string& out_dir,
                 const Cli& cli, const char* command) {
  std::cout << j.dump() << "\n";
  if (out_dir.empty()) return;
  std::filesystem::create_directories(out_dir);
  std::string path = out_dir + "/result.json";
  std::ofstream out(path);
  if (!out) imsvd::fail(imsvd::ErrorKind::kIo, "cannot open for writing: " + path);
  out << j.dump() << "\n";
  auto entries = config_entries(cli);
  entries.emplace_back("command", command);
  entries.emplace_back("checkpoint", cli.checkpoint);
  write_manifest(out_dir, entries);
}

std::vector<int> label_column(const imsvd::Dataset& d, size_t attr) {
  if (attr >= d.label_width)
    imsvd::fail(imsvd::ErrorKind::kContract,
                "label attribute " + std::to_string(attr) +
                    " out of range (dataset has " +
                    std::to_string(d.label_width) + ")");
  std::vector<int> y(d.size());
  for (size_t i = 0; i < d.size(); ++i) y[i] = d.label(i, attr);
  return y;
}

void run_gen_data(Cli& cli) {
  imsvd::World w = imsvd::generate_world(cli.world);
  std::filesystem::create_directories(cli.out);
  std::string train_path = cli.out + "/train.csv";
  std::string test_path = cli.out + "/test.csv";
  imsvd::save_csv(w.train, train_path);
  imsvd::save_csv(w.test, test_path);
  write_manifest(cli.out,
                 {{"command", "gen-data"},
                  {"attributes", std::to_string(cli.world.attributes)},
                  {"values", std::to_string(cli.world.values)},
                  {"ambient_dim", std::to_string(cli.world.ambient_dim)},
                  {"noise_sigma", fmt(cli.world.noise_sigma)},
                  {"train_size", std::to_string(cli.world.train_size)},
                  {"test_size", std::to_string(cli.world.test_size)},
                  {"seed_data", std::to_string(cli.world.seed)}});
  std::cout << nlohmann::json{{"train", train_path}, {"test", test_path}}
                   .dump()
            << "\n";
}

void run_train(Cli& cli) {
  imsvd::TrainConfig c = cli.config;
  c.layout = imsvd::BlockLayout(cli.m, cli.dm);
  c.variant = imsvd::variant_from_name(cli.variant);
  c.optimizer = imsvd::optimizer_from_name(cli.optimizer);
  c.out_dir = cli.out;
  cli.config = c;  // so the manifest shows resolved values

  imsvd::Dataset train = load_train_split(cli.dataset, c.seed_data);
  imsvd::FitResult fr = imsvd::fit(c, train, cli.resume);
  auto entries = config_entries(cli);
  entries.emplace_back("command", "train");
  entries.emplace_back("resume", cli.resume);
  write_manifest(cli.out, entries);
  std::cout << nlohmann::json{{"checkpoint", fr.checkpoint_path},
                              {"metrics", fr.metrics_path}}
                   .dump()
            << "\n";
}

void run_eval_knn(Cli& cli) {
  imsvd::Checkpoint ck = imsvd::load_checkpoint(cli.checkpoint);
  auto [train, test] = load_splits(cli.dataset, cli.config.seed_data);
  imsvd::Matrix etr = cli.raw ? train.x : imsvd::encode(ck.params, train.x);
  imsvd::Matrix ete = cli.raw ? test.x : imsvd::encode(ck.params, test.x);
  double acc =
      imsvd::knn_accuracy(etr, label_column(train, cli.attr), ete,
                          label_column(test, cli.attr), cli.k);
  emit_result(nlohmann::json{{"knn_accuracy", acc},
                             {"k", cli.k},
                             {"attr", cli.attr},
                             {"raw_inputs", cli.raw}},
              cli.out, cli, "eval-knn");
}

void run_eval_probe(Cli& cli) {
  imsvd::Checkpoint ck = imsvd::load_checkpoint(cli.checkpoint);
  auto [train, test] = load_splits(cli.dataset, cli.config.seed_data);
  imsvd::Matrix etr = cli.raw ? train.x : imsvd::encode(ck.params, train.x);
  imsvd::Matrix ete = cli.raw ? test.x : imsvd::encode(ck.params, test.x);
  double acc =
      imsvd::linear_probe(etr, label_column(train, cli.attr), ete,
                          label_column(test, cli.attr), cli.probe);
  emit_result(nlohmann::json{{"probe_accuracy", acc},
                             {"iterations", cli.probe.iterations},
                             {"lr", cli.probe.lr},
                             {"attr", cli.attr},
                             {"raw_inputs", cli.raw}},
              cli.out, cli, "eval-probe");
}

void run_verify(Cli& cli) {
  imsvd::Checkpoint ck = imsvd::load_checkpoint(cli.checkpoint);
  auto [train, test] = load_splits(cli.dataset, cli.config.seed_data);
  (void)train;
  imsvd::FixedPointReport r = imsvd::fixed_point_report(
      ck.params, test, cli.config.augment, cli.seed_eval);
  emit_result(nlohmann::json::parse(imsvd::report_json(r)), cli.out, cli,
              "verify");
}

void run_export_joint(Cli& cli) {
  imsvd::Checkpoint ck = imsvd::load_checkpoint(cli.checkpoint);
  auto [train, test] = load_splits(cli.dataset, cli.config.seed_data);
  (void)train;
  std::filesystem::create_directories(cli.out);
  std::string joint_path = cli.out + "/joint.csv";
  imsvd::export_joint(ck.params, test, joint_path);
  nlohmann::json j{{"joint", joint_path},
                   {"marginals", cli.out + "/joint_marginals.csv"}};
  if (cli.embeddings) {
    std::string epath = cli.out + "/embeddings.csv";
    imsvd::export_embeddings(ck.params, test, epath);
    j["embeddings"] = epath;
  }
  auto entries = config_entries(cli);
  entries.emplace_back("command", "export-joint");
  entries.emplace_back("checkpoint", cli.checkpoint);
  write_manifest(cli.out, entries);
  std::cout << j.dump() << "\n";
}

void run_gradcheck(Cli& cli) {
  double err = imsvd::model_loss_grad_error(
      imsvd::BlockLayout(cli.gc_m, cli.gc_dm), cli.gc_n, cli.gc_input,
      cli.gc_hidden, cli.gc_proj, imsvd::variant_from_name(cli.gc_variant),
      imsvd::LossWeights{}, cli.gc_seed, cli.gc_h);
  bool pass = err < cli.gc_tol;
  std::cout << nlohmann::json{{"max_rel_error", err},
                              {"tolerance", cli.gc_tol},
                              {"pass", pass}}
                   .dump()
            << "\n";
  if (!pass) cli.exit_code = 1;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* threads = std::getenv("IMSVD_THREADS")) {
    char* end = nullptr;
    long n = std::strtol(threads, &end, 10);
    if (end == threads || *end != '\0' || n < 1) {
      std::cerr << "error: IMSVD_THREADS must be a positive integer\n";
      return 2;
    }
    imsvd::set_max_threads(static_cast<int>(n));
  }

  Cli cli;
  CLI::App app{"Information-maximized soft variable discretization"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  // Options unknown to a subcommand fall through to the app, so --config
  // may be given after the subcommand name. Config processing runs on the
  // top-level app only; subcommand keys live in sections like [train].
  app.fallthrough();
  app.set_config("--config", "",
                 "key=value file with a [<subcommand>] section, e.g. "
                 "[train]; explicit flags win over file values");

  auto add_dataset = [&](CLI::App* sub) {
    sub->add_option("--dataset", cli.dataset,
                    "synthetic | idx:<paths> | csv:<train>[,<test>]")
        ->check(CLI::Validator(check_dataset, "DATASET"))
        ->capture_default_str();
    sub->add_option("--seed-data,--seed_data", cli.config.seed_data,
                    "seed for the synthetic world")
        ->capture_default_str();
  };
  auto add_eval_common = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", cli.checkpoint, "trained model file")
        ->required();
    add_dataset(sub);
    sub->add_option("--out", cli.out,
                    "directory for result.json + manifest (optional)");
  };

  CLI::App* gen = app.add_subcommand(
      "gen-data", "Generate the synthetic attribute world as CSV");
  gen->add_option("--out", cli.out, "output directory")->default_val("data");
  gen->add_option("--attributes", cli.world.attributes,
                  "generative attribute count")
      ->capture_default_str();
  gen->add_option("--values", cli.world.values, "values per attribute")
      ->capture_default_str();
  gen->add_option("--ambient-dim,--ambient_dim", cli.world.ambient_dim,
                  "observation dimensionality")
      ->capture_default_str();
  gen->add_option("--noise-sigma,--noise_sigma", cli.world.noise_sigma,
                  "observation noise")
      ->capture_default_str();
  gen->add_option("--train-size,--train_size", cli.world.train_size,
                  "training rows")
      ->capture_default_str();
  gen->add_option("--test-size,--test_size", cli.world.test_size,
                  "test rows")
      ->capture_default_str();
  gen->add_option("--seed-data,--seed_data", cli.world.seed, "world seed")
      ->capture_default_str();
  gen->callback([&]() { run_gen_data(cli); });

  CLI::App* train = app.add_subcommand("train", "Train a model");
  train->add_option("--out", cli.out, "run directory")->default_val("run");
  train->add_option("--resume", cli.resume,
                    "checkpoint to continue from (expects <path>.opt beside "
                    "it)");
  add_dataset(train);
  train->add_option("--epochs", cli.config.epochs, "training epochs")
      ->capture_default_str();
  train->add_option("--batch-size,--batch_size", cli.config.batch_size,
                    "samples per step")
      ->capture_default_str();
  train->add_option("--base-lr,--base_lr", cli.config.base_lr,
                    "peak learning rate")
      ->capture_default_str();
  train->add_option("--warmup-epochs,--warmup_epochs",
                    cli.config.warmup_epochs, "linear warmup epochs")
      ->capture_default_str();
  train->add_option("--final-lr,--final_lr", cli.config.final_lr,
                    "cosine-decay floor")
      ->capture_default_str();
  train->add_option("--weight-decay,--weight_decay",
                    cli.config.weight_decay, "decoupled weight decay")
      ->capture_default_str();
  train->add_option("--optimizer", cli.optimizer, "adam | sgd_momentum")
      ->check(CLI::IsMember({"adam", "sgd_momentum"}))
      ->capture_default_str();
  train->add_option("--momentum", cli.config.momentum, "sgd momentum")
      ->capture_default_str();
  train->add_option("--adam-beta1,--adam_beta1", cli.config.adam_beta1,
                    "adam first-moment decay")
      ->capture_default_str();
  train->add_option("--adam-beta2,--adam_beta2", cli.config.adam_beta2,
                    "adam second-moment decay")
      ->capture_default_str();
  train->add_option("--adam-eps,--adam_eps", cli.config.adam_eps,
                    "adam denominator epsilon")
      ->capture_default_str();
  train->add_option("--variant", cli.variant,
                    "loss variant: de-oe | oe-ti | de-oe-tic | full")
      ->check(CLI::IsMember({"de-oe", "oe-ti", "de-oe-tic", "full"}))
      ->capture_default_str();
  train->add_option("--lambda", cli.config.weights.lambda,
                    "entropy-term weight (0 disables them)")
      ->capture_default_str();
  train->add_option("--beta", cli.config.weights.beta,
                    "objective-decomposition weight")
      ->capture_default_str();
  train->add_option("--seed-model,--seed_model", cli.config.seed_model,
                    "parameter-init seed")
      ->capture_default_str();
  train->add_option("--seed-shuffle,--seed_shuffle",
                    cli.config.seed_shuffle, "shuffle/augment seed")
      ->capture_default_str();
  train->add_option("--m", cli.m, "number of discrete variables")
      ->capture_default_str();
  train->add_option("--dm", cli.dm, "units per variable")
      ->capture_default_str();
  train->add_option("--encoder-hidden,--encoder_hidden",
                    cli.config.encoder_hidden, "encoder hidden widths")
      ->delimiter(',')
      ->capture_default_str();
  train->add_option("--projector-hidden,--projector_hidden",
                    cli.config.projector_hidden, "projector hidden width")
      ->capture_default_str();
  train->add_option("--aug-noise,--aug_noise",
                    cli.config.augment.noise_sigma,
                    "augmentation noise sigma")
      ->capture_default_str();
  train->add_option("--aug-dropout,--aug_dropout",
                    cli.config.augment.dropout,
                    "augmentation dropout fraction")
      ->capture_default_str();
  train->add_option("--aug-scale,--aug_scale", cli.config.augment.scale,
                    "augmentation scale half-range")
      ->capture_default_str();
  train->add_option("--checkpoint-every,--checkpoint_every",
                    cli.config.checkpoint_every, "epochs between snapshots")
      ->capture_default_str();
  train->callback([&]() { run_train(cli); });

  CLI::App* knn = app.add_subcommand(
      "eval-knn", "k-nearest-neighbor accuracy on encoder outputs");
  add_eval_common(knn);
  knn->add_option("--k", cli.k, "neighbor count")->capture_default_str();
  knn->add_option("--attr", cli.attr, "label column to predict")
      ->capture_default_str();
  knn->add_flag("--raw", cli.raw, "classify raw inputs instead");
  knn->callback([&]() { run_eval_knn(cli); });

  CLI::App* probe = app.add_subcommand(
      "eval-probe", "linear-probe accuracy on encoder outputs");
  add_eval_common(probe);
  probe->add_option("--attr", cli.attr, "label column to predict")
      ->capture_default_str();
  probe->add_option("--iterations", cli.probe.iterations,
                    "gradient-descent iterations")
      ->capture_default_str();
  probe->add_option("--lr", cli.probe.lr, "probe learning rate")
      ->capture_default_str();
  probe->add_flag("--raw", cli.raw, "probe raw inputs instead");
  probe->callback([&]() { run_eval_probe(cli); });

  CLI::App* verify = app.add_subcommand(
      "verify", "report one-hot/marginal/independence statistics of the "
                "codes against the loss's fixed point");
  add_eval_common(verify);
  verify->add_option("--seed-eval,--seed_eval", cli.seed_eval,
                     "seed for the paired evaluation views")
      ->capture_default_str();
  verify->add_option("--aug-noise,--aug_noise",
                     cli.config.augment.noise_sigma,
                     "augmentation noise sigma")
      ->capture_default_str();
  verify->add_option("--aug-dropout,--aug_dropout",
                     cli.config.augment.dropout,
                     "augmentation dropout fraction")
      ->capture_default_str();
  verify->add_option("--aug-scale,--aug_scale", cli.config.augment.scale,
                     "augmentation scale half-range")
      ->capture_default_str();
  verify->callback([&]() { run_verify(cli); });

  CLI::App* exp = app.add_subcommand(
      "export-joint", "write the cross-joint matrix and marginals as CSV");
  exp->add_option("--checkpoint", cli.checkpoint, "trained model file")
      ->required();
  add_dataset(exp);
  exp->add_option("--out", cli.out, "output directory")
      ->default_val("export");
  exp->add_flag("--embeddings", cli.embeddings,
                "also write encoder outputs with labels");
  exp->callback([&]() { run_export_joint(cli); });

  CLI::App* gc = app.add_subcommand(
      "gradcheck", "finite-difference check of the full loss gradient");
  gc->add_option("--seed", cli.gc_seed, "parameter/batch seed")
      ->capture_default_str();
  gc->add_option("--m", cli.gc_m, "number of discrete variables")
      ->capture_default_str();
  gc->add_option("--dm", cli.gc_dm, "units per variable")
      ->capture_default_str();
  gc->add_option("--n", cli.gc_n, "batch size")->capture_default_str();
  gc->add_option("--input-dim,--input_dim", cli.gc_input, "input width")
      ->capture_default_str();
  gc->add_option("--encoder-hidden,--encoder_hidden", cli.gc_hidden,
                 "encoder hidden widths")
      ->delimiter(',')
      ->capture_default_str();
  gc->add_option("--projector-hidden,--projector_hidden", cli.gc_proj,
                 "projector hidden width")
      ->capture_default_str();
  gc->add_option("--variant", cli.gc_variant,
                 "loss variant: de-oe | oe-ti | de-oe-tic | full")
      ->check(CLI::IsMember({"de-oe", "oe-ti", "de-oe-tic", "full"}))
      ->capture_default_str();
  gc->add_option("--step", cli.gc_h, "finite-difference step")
      ->capture_default_str();
  gc->add_option("--tol", cli.gc_tol, "pass threshold on max rel. error")
      ->capture_default_str();
  gc->callback([&]() { run_gradcheck(cli); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const imsvd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return cli.exit_code;
}
