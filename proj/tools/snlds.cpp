// SPDX-License-Identifier: Apache-2.0
//
// snlds: generate datasets, train and evaluate switching dynamical systems.
//
// Configuration files are INI/TOML documents whose [section] key = value
// entries map onto the --section.key options of a subcommand. Command-line
// flags override file values; keys without a matching option are rejected.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "snlds/data/generators.hpp"
#include "snlds/eval/metrics.hpp"
#include "snlds/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace snlds;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitDiverged = 2;
constexpr int kExitRuntime = 3;
constexpr int kGeneratorVersion = 1;

// Options ----------------------------------------------------------------

struct DataOptions {
  std::string generator = "bouncing_ball";
  int n = 1000;
  int T = 100;
  int eval_n = 200;
  std::optional<double> noise_std;
  std::string path;       // dataset file; overrides the generator
  std::string eval_path;
};

struct ModelOptions {
  std::string kind = "snlds";
  model::ModelConfig cfg;
  std::string transition_family = "mlp";
  std::string discrete_input = "prev_observation";
};

struct TrainOptions {
  train::TrainConfig cfg;
  std::string entropy = "analytic";
};

struct EvalOptions {
  std::string alignment = "permutation";
  std::vector<int> tolerances{0, 5};
  bool label_match = true;
};

void add_data_options(CLI::App* app, DataOptions& d) {
  app->add_option("--data.generator", d.generator, "bouncing_ball or dubins")->capture_default_str();
  app->add_option("--data.n", d.n, "training trajectories")->capture_default_str();
  app->add_option("--data.T", d.T, "steps per trajectory")->capture_default_str();
  app->add_option("--data.eval_n", d.eval_n, "held-out trajectories")->capture_default_str();
  app->add_option("--data.noise_std", d.noise_std, "observation noise (generator default if unset)");
  app->add_option("--data.path", d.path, "dataset file used instead of the generator");
  app->add_option("--data.eval_path", d.eval_path, "held-out dataset file");
}

void add_model_options(CLI::App* app, ModelOptions& m) {
  auto& c = m.cfg;
  app->add_option("--model.kind", m.kind, "snlds or gumbel")->capture_default_str();
  app->add_option("--model.K", c.K, "discrete states")->capture_default_str();
  app->add_option("--model.H", c.H, "continuous state width")->capture_default_str();
  app->add_option("--model.D", c.D, "observation width")->capture_default_str();
  app->add_option("--model.transition_family", m.transition_family, "linear, mlp or gru")
      ->capture_default_str();
  app->add_option("--model.discrete_input", m.discrete_input, "prev_observation or none")
      ->capture_default_str();
  app->add_option("--model.emission_hidden", c.emission_hidden, "emission MLP hidden widths")
      ->capture_default_str();
  app->add_option("--model.transition_hidden", c.transition_hidden, "transition MLP hidden widths")
      ->capture_default_str();
  app->add_option("--model.discrete_hidden", c.discrete_hidden, "discrete MLP hidden widths")
      ->capture_default_str();
  app->add_option("--model.encoder_dim", c.encoder_dim)->capture_default_str();
  app->add_option("--model.posterior_dim", c.posterior_dim)->capture_default_str();
  app->add_option("--model.gumbel_hidden", c.gumbel_hidden)->capture_default_str();
  app->add_option("--model.input_shift", c.input_shift, "subtracted from x before the networks")
      ->capture_default_str();
  app->add_option("--model.input_scale", c.input_scale, "divides x before the networks")
      ->capture_default_str();
}

void add_schedule_options(CLI::App* app, const std::string& name, train::AnnealSchedule& s) {
  const std::string p = "--train." + name + "_";
  app->add_option(p + "initial", s.initial)->capture_default_str();
  app->add_option(p + "rate", s.rate)->capture_default_str();
  app->add_option(p + "decay_steps", s.decay_steps)->capture_default_str();
  app->add_option(p + "start", s.start_step)->capture_default_str();
  app->add_option(p + "floor", s.floor)->capture_default_str();
}

void add_train_options(CLI::App* app, TrainOptions& t) {
  auto& c = t.cfg;
  app->add_option("--train.lr", c.lr.base, "peak learning rate")->capture_default_str();
  app->add_option("--train.lr_warmup_start", c.lr.warmup_start)->capture_default_str();
  app->add_option("--train.lr_warmup_steps", c.lr.warmup_steps)->capture_default_str();
  app->add_option("--train.lr_decay_steps", c.lr.decay_steps, "cosine decay length (0: constant)")
      ->capture_default_str();
  app->add_option("--train.lr_min", c.lr.minimum)->capture_default_str();
  app->add_option("--train.batch_size", c.batch_size)->capture_default_str();
  app->add_option("--train.steps", c.steps)->capture_default_str();
  add_schedule_options(app, "beta", c.beta);
  add_schedule_options(app, "tau", c.tau);
  app->add_option("--train.clip_norm", c.clip_norm)->capture_default_str();
  app->add_option("--train.num_samples", c.num_samples)->capture_default_str();
  app->add_option("--train.metrics_every", c.metrics_every)->capture_default_str();
  app->add_option("--train.checkpoint_every", c.checkpoint_every, "0 follows metrics_every")
      ->capture_default_str();
  app->add_option("--train.entropy", t.entropy, "analytic or sample")->capture_default_str();
}

void add_eval_options(CLI::App* app, EvalOptions& e) {
  app->add_option("--eval.alignment", e.alignment, "permutation, greedy or merging")
      ->capture_default_str();
  app->add_option("--eval.tolerances", e.tolerances, "switch-point tolerances")->capture_default_str();
  app->add_option("--eval.label_match", e.label_match, "require matching post-switch labels")
      ->capture_default_str();
}

model::ModelConfig resolve(ModelOptions& m) {
  m.cfg.transition_family = model::parse_transition_family(m.transition_family);
  m.cfg.discrete_input = model::parse_discrete_input(m.discrete_input);
  m.cfg.validate();
  return m.cfg;
}

// Config files -----------------------------------------------------------

// Finds the value of --config in argv, if any.
std::optional<std::string> config_path(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return std::string(argv[i + 1]);
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return std::nullopt;
}

// Sections each subcommand reads. A shared file may carry sections another
// subcommand needs; those are skipped, anything else goes to the parser.
const std::map<std::string, std::set<std::string>> kSections = {
    {"generate", {"data"}},
    {"train", {"data", "model", "train", "eval"}},
    {"evaluate", {"data", "model", "eval"}},
    {"segment", {"data", "model"}},
    {"report", {}},
};

// Turns file entries into "--section.key=value" arguments.
std::vector<std::string> config_arguments(const std::string& path, const std::string& command) {
  std::vector<std::string> out;
  CLI::ConfigINI parser;
  const auto used = kSections.find(command);
  for (const CLI::ConfigItem& item : parser.from_file(path)) {
    if (item.name == "++" || item.name == "--") continue;
    const std::string key = item.fullname();
    if (key == "seed") {
      throw CLI::ConversionError("seed is taken from the command line only, not from " + path);
    }
    const std::string section = item.parents.empty() ? "" : item.parents.front();
    if (used != kSections.end() && kSections.at("train").count(section) != 0 &&
        used->second.count(section) == 0) {
      continue;
    }
    if (item.inputs.empty()) {
      out.push_back("--" + key);
      continue;
    }
    for (const std::string& v : item.inputs) out.push_back("--" + key + "=" + v);
  }
  return out;
}

// Subcommand name first, then file-derived options, then the user's own
// arguments. File entries for options also given on the command line are
// dropped, so list-valued flags replace rather than extend the file value.
std::vector<std::string> expand_arguments(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 0; i < argc; ++i) args.emplace_back(argv[i]);
  const auto cfg = config_path(argc, argv);
  if (!cfg || argc < 2) return args;
  auto flag_of = [](const std::string& a) { return a.substr(0, a.find('=')); };
  std::set<std::string> given;
  for (std::size_t i = 2; i < args.size(); ++i) {
    if (args[i].rfind("--", 0) == 0) given.insert(flag_of(args[i]));
  }
  std::vector<std::string> extra;
  for (std::string& a : config_arguments(*cfg, args[1])) {
    if (given.count(flag_of(a)) == 0) extra.push_back(std::move(a));
  }
  args.insert(args.begin() + 2, extra.begin(), extra.end());
  return args;
}

void copy_config(int argc, char** argv, const fs::path& dir) {
  if (auto cfg = config_path(argc, argv)) {
    fs::copy_file(*cfg, dir / "config.ini", fs::copy_options::overwrite_existing);
  }
}

// Writes every --section.key option of `app` in the sectioned file format,
// so the result can be passed back through --config.
void write_resolved(std::ostream& out, const CLI::App& app) {
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
  for (const CLI::Option* opt : app.get_options()) {
    const std::string name = opt->get_single_name();
    const auto dot = name.find('.');
    if (dot == std::string::npos) continue;
    std::string value;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      if (res.size() == 1) {
        value = res.front();
      } else {
        value = "[" + CLI::detail::join(res, ",") + "]";
      }
    } else {
      value = opt->get_default_str();
    }
    if (value.empty()) continue;
    sections[name.substr(0, dot)].emplace_back(name.substr(dot + 1), value);
  }
  for (const auto& [section, entries] : sections) {
    out << '[' << section << "]\n";
    for (const auto& [k, v] : entries) out << k << " = " << v << '\n';
    out << '\n';
  }
}

// Data -------------------------------------------------------------------

std::vector<data::Trajectory> generate(const DataOptions& d, std::uint64_t seed, int n) {
  if (d.generator == "bouncing_ball") {
    data::BouncingBallOptions opt;
    if (d.noise_std) opt.noise_std = *d.noise_std;
    return data::gen_bouncing_ball(seed, d.T, n, opt);
  }
  if (d.generator == "dubins") {
    data::DubinsOptions opt;
    if (d.noise_std) opt.noise_std = *d.noise_std;
    return data::gen_dubins(seed, d.T, n, opt);
  }
  throw nn::ConfigurationError("unknown generator '" + d.generator + "' (bouncing_ball, dubins)");
}

// Held-out data uses a seed stream disjoint from the training stream.
std::uint64_t eval_seed(std::uint64_t seed) { return seed ^ 0xE7A1'5EEDULL; }

void write_sidecar(const fs::path& path, const DataOptions& d, std::uint64_t seed, int n) {
  nlohmann::json j;
  j["generator"] = d.generator;
  j["generator_version"] = kGeneratorVersion;
  j["format_version"] = data::kDatasetVersion;
  j["seed"] = seed;
  j["n"] = n;
  j["T"] = d.T;
  if (d.noise_std) j["noise_std"] = *d.noise_std;
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

std::vector<data::Trajectory> load_or_generate(const std::string& path, const DataOptions& d,
                                               std::uint64_t seed, int n) {
  if (!path.empty()) return data::load_dataset(path);
  return generate(d, seed, n);
}

void check_dims(const model::ModelConfig& cfg, const std::vector<data::Trajectory>& data) {
  for (const auto& tr : data) {
    if (tr.dim() != cfg.D) {
      throw nn::ConfigurationError("dataset has D = " + std::to_string(tr.dim()) +
                                   " but model.D = " + std::to_string(cfg.D));
    }
  }
}

std::unique_ptr<train::Learner> load_learner(ModelOptions& m, const std::string& ckpt_path) {
  model::ModelConfig cfg = resolve(m);
  auto learner = train::make_learner(m.kind, cfg, 0);
  nn::restore(nn::load_checkpoint(ckpt_path), learner->parameters());
  return learner;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Switching nonlinear dynamical systems: collapsed variational training and segmentation"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  std::uint64_t seed = 0;

  // generate
  DataOptions gen_data;
  std::string gen_out, gen_csv;
  auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
  gen->set_config("--config", "", "INI/TOML configuration file");
  gen->add_option("--seed", seed, "dataset seed")->required();
  gen->add_option("--out", gen_out, "dataset file")->required();
  gen->add_option("--csv", gen_csv, "also write a CSV export");
  add_data_options(gen, gen_data);

  // train
  DataOptions tr_data;
  ModelOptions tr_model;
  TrainOptions tr_train;
  EvalOptions tr_eval;
  std::string out_dir, resume;
  auto* trn = app.add_subcommand("train", "fit a model");
  trn->set_config("--config", "", "INI/TOML configuration file");
  trn->add_option("--seed", seed, "run seed")->required();
  trn->add_option("--out-dir", out_dir, "checkpoints and metrics.csv")->required();
  trn->add_option("--resume", resume, "checkpoint to continue from");
  add_data_options(trn, tr_data);
  add_model_options(trn, tr_model);
  add_train_options(trn, tr_train);
  add_eval_options(trn, tr_eval);

  // evaluate
  DataOptions ev_data;
  ModelOptions ev_model;
  EvalOptions ev_eval;
  std::string ev_ckpt, ev_posterior, ev_report, ev_gamma, ev_name = "snlds", ev_dataset_name;
  std::uint64_t ev_seed = 0;
  auto* evl = app.add_subcommand("evaluate", "score a checkpoint on labelled data");
  evl->set_config("--config", "", "INI/TOML configuration file");
  auto* ev_ckpt_opt = evl->add_option("--checkpoint", ev_ckpt)->check(CLI::ExistingFile);
  auto* ev_post_opt = evl->add_option("--posterior", ev_posterior, "score these marginals (sequence,t,k,gamma CSV) instead of a model")
                          ->check(CLI::ExistingFile);
  ev_ckpt_opt->excludes(ev_post_opt);
  evl->add_option("--dataset", ev_data.eval_path, "labelled dataset file")->required()->check(CLI::ExistingFile);
  evl->add_option("--report", ev_report, "append a CSV report row here (stdout if unset)");
  evl->add_option("--gamma", ev_gamma, "write posterior marginals as CSV");
  evl->add_option("--name", ev_name, "model column of the report")->capture_default_str();
  evl->add_option("--dataset-name", ev_dataset_name, "dataset column of the report");
  evl->add_option("--seed", ev_seed, "seed column of the report");
  add_data_options(evl, ev_data);
  add_model_options(evl, ev_model);
  add_eval_options(evl, ev_eval);

  // segment
  ModelOptions sg_model;
  DataOptions sg_data;
  std::string sg_ckpt, sg_dataset;
  int sg_index = 0;
  auto* seg = app.add_subcommand("segment", "decode one sequence to state labels");
  seg->set_config("--config", "", "INI/TOML configuration file");
  seg->add_option("--checkpoint", sg_ckpt)->required()->check(CLI::ExistingFile);
  seg->add_option("--dataset", sg_dataset)->required()->check(CLI::ExistingFile);
  seg->add_option("--index", sg_index, "sequence index")->capture_default_str();
  add_data_options(seg, sg_data);
  add_model_options(seg, sg_model);

  // report
  std::string rp_metrics, rp_out;
  auto* rep = app.add_subcommand("report", "log relative NLL curve from a metrics log");
  rep->add_option("--metrics", rp_metrics)->required()->check(CLI::ExistingFile);
  rep->add_option("--out", rp_out, "CSV destination (stdout if unset)");

  std::vector<std::string> args;
  try {
    args = expand_arguments(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  std::vector<char*> cargs;
  for (auto& a : args) cargs.push_back(a.data());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (gen->parsed()) {
      if (gen_data.n < 0) throw nn::ConfigurationError("data.n must be non-negative");
      auto trajectories = generate(gen_data, seed, gen_data.n);
      data::save_dataset(gen_out, trajectories);
      write_sidecar(gen_out + ".json", gen_data, seed, gen_data.n);
      if (!gen_csv.empty()) {
        std::ofstream csv(gen_csv);
        data::write_dataset_csv(csv, trajectories);
      }
      std::cerr << "wrote " << trajectories.size() << " trajectories to " << gen_out << '\n';
      return kExitOk;
    }

    if (trn->parsed()) {
      model::ModelConfig cfg = resolve(tr_model);
      train::TrainConfig tc = tr_train.cfg;
      tc.seed = seed;
      tc.eval_alignment = eval::parse_align_mode(tr_eval.alignment);
      tc.eval_tolerance = tr_eval.tolerances.empty() ? 0 : tr_eval.tolerances.front();
      tc.validate();
      auto train_set = load_or_generate(tr_data.path, tr_data, seed, tr_data.n);
      std::vector<data::Trajectory> eval_set;
      if (!tr_data.eval_path.empty()) {
        eval_set = data::load_dataset(tr_data.eval_path);
      } else if (tr_data.path.empty() && tr_data.eval_n > 0) {
        eval_set = generate(tr_data, eval_seed(seed), tr_data.eval_n);
      }
      check_dims(cfg, train_set);
      check_dims(cfg, eval_set);

      fs::create_directories(out_dir);
      copy_config(argc, argv, out_dir);
      {
        std::ofstream resolved(fs::path(out_dir) / "resolved.ini");
        write_resolved(resolved, *trn);
      }
      auto learner = train::make_learner(tr_model.kind, cfg, seed,
                                         train::parse_entropy_mode(tr_train.entropy));
      train::Trainer trainer(*learner, tc, train_set, eval_set);
      trainer.set_output_dir(out_dir);
      if (!resume.empty()) trainer.resume(nn::load_checkpoint(resume));
      train::TrainResult result = trainer.run();
      if (result.status == train::TrainStatus::diverged) {
        std::cerr << result.message << '\n';
        return kExitDiverged;
      }
      std::cerr << "finished at step " << result.step << '\n';
      return kExitOk;
    }

    if (evl->parsed()) {
      auto dataset = data::load_dataset(ev_data.eval_path);
      std::vector<nn::Matrix> gamma;
      std::vector<eval::Labels> pred;
      if (!ev_posterior.empty()) {
        std::ifstream in(ev_posterior);
        gamma = eval::read_gamma_csv(in);
        if (gamma.size() != dataset.size()) {
          throw nn::ConfigurationError("posterior has " + std::to_string(gamma.size()) + " sequences, dataset " +
                                       std::to_string(dataset.size()));
        }
        for (std::size_t i = 0; i < gamma.size(); ++i) {
          if (gamma[i].rows() != dataset[i].steps()) {
            throw nn::ConfigurationError("posterior sequence " + std::to_string(i) + " has the wrong length");
          }
          pred.push_back(eval::decode(gamma[i]));
        }
      } else {
        if (ev_ckpt.empty()) throw nn::ConfigurationError("evaluate needs --checkpoint or --posterior");
        auto learner = load_learner(ev_model, ev_ckpt);
        check_dims(learner->config(), dataset);
        pred = train::segment(*learner, dataset, &gamma);
      }
      std::vector<eval::Labels> truth;
      for (const auto& tr : dataset) {
        if (!tr.has_labels()) throw nn::ConfigurationError("evaluate needs a labelled dataset");
        truth.emplace_back(tr.s_true.begin(), tr.s_true.end());
      }
      eval::AlignMode mode = eval::parse_align_mode(ev_eval.alignment);
      std::vector<int> tols{0, 5};
      eval::DatasetScore score = eval::score_dataset(pred, truth, mode, tols, ev_eval.label_match);
      eval::ReportRow row;
      row.dataset = ev_dataset_name.empty() ? fs::path(ev_data.eval_path).stem().string() : ev_dataset_name;
      row.model = ev_name;
      row.seed = ev_seed;
      row.f1_frame = score.f1_frame;
      row.f1_switch_tol0 = score.f1_switch[0];
      row.f1_switch_tol5 = score.f1_switch[1];
      row.alignment = mode;
      if (ev_report.empty()) {
        eval::write_report_header(std::cout);
        eval::write_report_row(std::cout, row);
      } else {
        const bool fresh = !fs::exists(ev_report) || fs::file_size(ev_report) == 0;
        std::ofstream out(ev_report, std::ios::app);
        if (fresh) eval::write_report_header(out);
        eval::write_report_row(out, row);
      }
      if (!ev_gamma.empty()) {
        std::ofstream out(ev_gamma);
        eval::write_gamma_csv(out, gamma);
      }
      return kExitOk;
    }

    if (seg->parsed()) {
      auto learner = load_learner(sg_model, sg_ckpt);
      auto dataset = data::load_dataset(sg_dataset);
      if (sg_index < 0 || sg_index >= static_cast<int>(dataset.size())) {
        throw nn::ConfigurationError("index " + std::to_string(sg_index) + " outside dataset of " +
                                     std::to_string(dataset.size()));
      }
      check_dims(learner->config(), dataset);
      std::vector<data::Trajectory> one{dataset[static_cast<std::size_t>(sg_index)]};
      eval::Labels labels = train::segment(*learner, one).front();
      for (std::size_t t = 0; t < labels.size(); ++t) std::cout << (t ? "," : "") << labels[t];
      std::cout << '\n';
      return kExitOk;
    }

    if (rep->parsed()) {
      std::ifstream in(rp_metrics);
      auto rows = train::read_metrics(in);
      auto curve = train::log_relative_nll(rows);
      std::ofstream file;
      if (!rp_out.empty()) file.open(rp_out);
      std::ostream& out = rp_out.empty() ? std::cout : file;
      out << "step,nll,log_relative_nll,f1_frame\n";
      for (std::size_t i = 0; i < rows.size(); ++i) {
        out << rows[i].step << ',' << rows[i].nll << ',' << curve[i] << ',' << rows[i].f1_frame << '\n';
      }
      return kExitOk;
    }
  } catch (const nn::ConfigurationError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const nn::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
