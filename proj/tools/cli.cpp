#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "cdcl/checkpoint.hpp"
#include "cdcl/data.hpp"
#include "cdcl/error.hpp"
#include "cdcl/pseudolabel.hpp"
#include "cdcl/report.hpp"
#include "cdcl/textio.hpp"
#include "cdcl/trainer.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;

namespace cdcl::cli {
namespace {

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::vector<std::string> overrides;
};

struct AdaptOptions {
  std::string mode;
  std::string source;
  std::string target;
  std::string model;
  std::string labels;
};

struct EvalOptions {
  std::string model;
  std::string data;
  std::string labels;
  std::string domain;
  bool json = false;
};

RunConfig resolve(const GlobalOptions& g) {
  RunConfig cfg;
  if (!g.config_path.empty()) cfg.merge_file(g.config_path);
  for (const std::string& s : g.overrides) cfg.merge_assignment(s);
  if (g.seed) cfg.set("seed", std::to_string(*g.seed));
  return cfg;
}

fs::path output_dir(const GlobalOptions& g) {
  const fs::path dir(g.out_dir);
  if (!fs::is_directory(dir)) throw Error(ErrorCode::IoError, "output directory does not exist: " + dir.string());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

std::vector<int> read_truth(const std::string& path, const Dataset& ds) {
  std::size_t classes = 0;
  std::vector<int> labels = load_labels(path, &classes);
  if (labels.size() != ds.size()) {
    throw Error(ErrorCode::DimensionMismatch, path + " has " + std::to_string(labels.size()) + " labels for " +
                                                  std::to_string(ds.size()) + " samples");
  }
  return labels;
}

// id  domain  label  pseudo_label  confidence  z_1 ... z_d
void write_embeddings(const fs::path& path, const Model& model, const Dataset* source, const Dataset& target,
                      const std::vector<int>* target_truth, const PseudoLabelResult& pseudo) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "id\tdomain\tlabel\tpseudo_label\tconfidence";
  for (std::size_t k = 0; k < model.feature_dim(); ++k) out << "\tz_" << (k + 1);
  out << "\n";
  std::size_t id = 0;
  auto emit_row = [&](const char* domain, int label, int pl, const std::string& conf, std::span<const double> z) {
    out << id++ << '\t' << domain << '\t' << label << '\t' << pl << '\t' << conf;
    for (double v : z) out << '\t' << format_double(v);
    out << "\n";
  };
  if (source) {
    const FeatureBatch fb = encode(model, source->features(), Domain::Source);
    for (std::size_t i = 0; i < source->size(); ++i) {
      emit_row("source", source->labels()[i], kUnlabeled, "NA", fb.normalized.row(i));
    }
  }
  const FeatureBatch fb = encode(model, target.features(), Domain::Target);
  for (std::size_t i = 0; i < target.size(); ++i) {
    const int label = target_truth ? (*target_truth)[i] : target.labels()[i];
    emit_row("target", label, pseudo.labels[i], format_double(pseudo.confidences[i]), fb.normalized.row(i));
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

PseudoLabelResult final_pseudo_labels(const Model& model, const Dataset* source, const Dataset& target,
                                      const HyperParams& hyper) {
  if (model.source_free_ready()) {
    return generate_pseudo_labels(model, target.features(), AdaptationMode::SourceFree, nullptr, hyper.clustering());
  }
  if (!source) throw Error(ErrorCode::InvalidConfig, "source data required to label a standard model");
  return generate_pseudo_labels(model, target.features(), AdaptationMode::Standard, source, hyper.clustering());
}

int cmd_gen_data(const GlobalOptions& g, std::ostream& out) {
  RunConfig cfg = resolve(g);
  const ShiftConfig shift = cfg.shift();
  const fs::path dir = output_dir(g);
  const ShiftedPair pair = generate_shifted_pair(shift);
  save_dataset(pair.source, dir / "source.ds");
  save_dataset(pair.target, dir / "target.ds");
  save_labels(pair.target_truth, shift.classes, dir / "target.labels");
  cfg.write(dir / "config.resolved");
  out << "wrote " << (dir / "source.ds").string() << ", " << (dir / "target.ds").string() << ", "
      << (dir / "target.labels").string() << "\n";
  return kExitOk;
}

int cmd_pretrain(const GlobalOptions& g, const std::string& source_path, std::ostream& out) {
  RunConfig cfg = resolve(g);
  const EncoderConfig enc = cfg.encoder();
  const HyperParams hyper = cfg.hyper();
  const fs::path dir = output_dir(g);
  const Dataset source = load_dataset(source_path);
  const Dataset val = pretrain_split(source, hyper).second;
  const PretrainResult result = pretrain_source(source, enc, hyper);
  save_checkpoint(result.model, dir / "source_model.ckpt");
  save_dataset(val, dir / "source_val.ds");
  nlohmann::json report;
  report["val_accuracy"] = result.val_accuracy;
  report["best_epoch"] = result.best_epoch;
  report["val_history"] = result.val_history;
  report["seed"] = hyper.seed;
  report["config"] = cfg.values();
  write_text(dir / "pretrain_report.json", dump_json(report));
  cfg.write(dir / "config.resolved");
  out << "val_accuracy " << format_double(result.val_accuracy) << "\n";
  return kExitOk;
}

int cmd_adapt(const GlobalOptions& g, const AdaptOptions& a, std::ostream& out) {
  RunConfig cfg = resolve(g);
  if (!a.mode.empty()) cfg.set("mode", a.mode);
  const std::string mode = cfg.get("mode");
  const bool source_free = mode == "source-free";
  if (mode.rfind("ablation:", 0) == 0) {
    cfg.set("pair_mode", to_string(parse_pair_mode(mode.substr(9))));
  } else if (mode != "standard" && !source_free) {
    throw Error(ErrorCode::InvalidConfig, "unknown adaptation mode '" + mode + "'");
  }
  // Checked before any file is touched.
  if (source_free && !a.source.empty()) {
    throw Error(ErrorCode::InvalidConfig, "source data forbidden in source-free mode");
  }
  if (source_free && a.model.empty()) throw Error(ErrorCode::InvalidConfig, "source-free mode requires --model");
  if (!source_free && a.source.empty()) throw Error(ErrorCode::InvalidConfig, "standard mode requires --source");
  if (a.target.empty()) throw Error(ErrorCode::InvalidConfig, "--target is required");

  const HyperParams hyper = cfg.hyper();
  const fs::path dir = output_dir(g);
  const Dataset target = load_dataset(a.target).unlabeled_view();
  std::optional<std::vector<int>> truth;
  if (!a.labels.empty()) truth = read_truth(a.labels, target);
  const std::vector<int>* truth_ptr = truth ? &*truth : nullptr;

  std::optional<Dataset> source;
  if (!source_free) source = load_dataset(a.source);

  Model start;
  if (!a.model.empty()) {
    start = load_checkpoint(a.model);
  } else {
    start = pretrain_source(*source, cfg.encoder(), hyper).model;
  }

  auto [model, report] = source_free ? train_sdf(start, target, hyper, truth_ptr)
                                     : train_uda(start, *source, target, hyper, truth_ptr);
  report.config = cfg.values();

  save_checkpoint(model, dir / "adapted_model.ckpt");
  write_text(dir / "train_report.json", dump_json(to_json(report)));
  write_text(dir / "timing.json", dump_json(timing_json(report)));
  const Dataset* src = source ? &*source : nullptr;
  const PseudoLabelResult pseudo = final_pseudo_labels(model, src, target, hyper);
  write_embeddings(dir / "embeddings.tsv", model, src, target, truth_ptr, pseudo);
  cfg.write(dir / "config.resolved");
  if (report.target) out << "target_accuracy " << format_double(report.target->accuracy) << "\n";
  return kExitOk;
}

int cmd_eval(const GlobalOptions& g, const EvalOptions& e, std::ostream& out) {
  RunConfig cfg = resolve(g);
  const fs::path dir = output_dir(g);
  const Model model = load_checkpoint(e.model);
  Dataset data = load_dataset(e.data);
  if (!e.labels.empty()) data = data.with_labels(read_truth(e.labels, data));
  const Domain domain = e.domain.empty() ? data.domain() : parse_domain(e.domain);
  const EvalResult r = evaluate(model, data, domain);
  nlohmann::json j = to_json(r);
  j["domain"] = to_string(domain);
  j["samples"] = data.size();
  write_text(dir / "eval_report.json", dump_json(j));
  cfg.write(dir / "config.resolved");
  if (e.json) {
    out << dump_json(j);
  } else {
    out << "accuracy " << format_double(r.accuracy) << "\n";
    out << "mean_class_accuracy " << format_double(r.mean_class_accuracy) << "\n";
  }
  return kExitOk;
}

int cmd_export(const GlobalOptions& g, const AdaptOptions& a, std::ostream& out) {
  RunConfig cfg = resolve(g);
  const HyperParams hyper = cfg.hyper();
  const fs::path dir = output_dir(g);
  const Model model = load_checkpoint(a.model);
  const Dataset target = load_dataset(a.target);
  std::optional<std::vector<int>> truth;
  if (!a.labels.empty()) truth = read_truth(a.labels, target);
  std::optional<Dataset> source;
  if (!a.source.empty()) source = load_dataset(a.source);
  const Dataset* src = source ? &*source : nullptr;
  const Dataset unlabeled = target.unlabeled_view();
  const PseudoLabelResult pseudo = final_pseudo_labels(model, src, unlabeled, hyper);
  write_embeddings(dir / "embeddings.tsv", model, src, target, truth ? &*truth : nullptr, pseudo);
  cfg.write(dir / "config.resolved");
  out << "wrote " << (dir / "embeddings.tsv").string() << "\n";
  return kExitOk;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::IoError: return kExitIo;
    case ErrorCode::NumericalFailure: return kExitNumerical;
    default: return kExitUsage;
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-domain contrastive domain adaptation on synthetic benchmarks", "cdcl"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config_path, "key=value config file");
  app.add_option("--seed", g.seed, "random seed (overrides config)");
  app.add_option("--out", g.out_dir, "output directory (must exist)");
  app.add_option("--set", g.overrides, "config override key=value (repeatable)")->allow_extra_args(false);

  auto* gen = app.add_subcommand("gen-data", "write source.ds, target.ds and target.labels");

  std::string source_path;
  auto* pre = app.add_subcommand("pretrain", "train the source model");
  pre->add_option("--source", source_path, "labeled source dataset")->required();

  AdaptOptions adapt_opts;
  auto* adapt = app.add_subcommand("adapt", "adapt a model to the target domain");
  adapt->add_option("--mode", adapt_opts.mode, "standard | source-free | ablation:<pair-mode>");
  adapt->add_option("--source", adapt_opts.source, "labeled source dataset (standard mode only)");
  adapt->add_option("--target", adapt_opts.target, "target dataset")->required();
  adapt->add_option("--model", adapt_opts.model, "starting checkpoint");
  adapt->add_option("--labels", adapt_opts.labels, "target ground-truth sidecar, for reporting only");

  EvalOptions eval_opts;
  auto* ev = app.add_subcommand("eval", "accuracy of a checkpoint on a labeled dataset");
  ev->add_option("--model", eval_opts.model, "checkpoint")->required();
  ev->add_option("--data", eval_opts.data, "dataset")->required();
  ev->add_option("--labels", eval_opts.labels, "label sidecar replacing the dataset labels");
  ev->add_option("--domain", eval_opts.domain, "BN statistics to use: source | target");
  ev->add_flag("--json", eval_opts.json, "print the JSON report instead of text");

  AdaptOptions export_opts;
  auto* ex = app.add_subcommand("export-embeddings", "write unit features and pseudo-labels as TSV");
  ex->add_option("--model", export_opts.model, "checkpoint")->required();
  ex->add_option("--target", export_opts.target, "target dataset")->required();
  ex->add_option("--source", export_opts.source, "source dataset");
  ex->add_option("--labels", export_opts.labels, "target ground-truth sidecar");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_data(g, out);
    if (*pre) return cmd_pretrain(g, source_path, out);
    if (*adapt) return cmd_adapt(g, adapt_opts, out);
    if (*ev) return cmd_eval(g, eval_opts, out);
    if (*ex) return cmd_export(g, export_opts, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"cdcl"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace cdcl::cli
