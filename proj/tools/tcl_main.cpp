#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "tcl/data.hpp"
#include "tcl/engine.hpp"
#include "tcl/errors.hpp"

namespace {

using tcl::Index;

void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw tcl::DataError(path + ": cannot open for writing");
  out << text;
  if (!out) throw tcl::DataError(path + ": write failed");
}

tcl::Dataset load_dataset(const std::string& path, const std::string& format) {
  return tcl::load_vectors(path, tcl::parse_format(format));
}

void emit_report(const tcl::Report& report, const std::string& report_path) {
  std::string text = report.to_text();
  std::cout << text;
  if (!report_path.empty() && report_path != "-")
    write_text(report_path, text);
}

nlohmann::ordered_json assignment_record(std::int64_t id, int label,
                                         double confidence) {
  return {{"id", id}, {"label", label}, {"confidence", confidence}};
}

struct AssignArgs {
  std::string ckpt, input, format = "jsonl", out = "-";
};

void run_assign(const AssignArgs& args) {
  tcl::Model model = tcl::build_model(tcl::load_checkpoint(args.ckpt));
  std::ofstream file;
  if (args.out != "-") {
    file.open(args.out, std::ios::binary);
    if (!file) throw tcl::DataError(args.out + ": cannot open for writing");
  }
  std::ostream& out = args.out == "-" ? std::cout : file;

  if (args.input == "-") {
    if (tcl::parse_format(args.format) != tcl::VectorFormat::jsonl)
      throw tcl::ConfigError("assign: reading from stdin requires jsonl");
    std::string line;
    std::size_t line_no = 0;
    std::int64_t records = 0;
    while (std::getline(std::cin, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      tcl::VectorRecord rec = tcl::parse_jsonl_record(line, "stdin", line_no);
      std::int64_t id = rec.id ? *rec.id : records;
      auto [label, confidence] = tcl::assign_one(model, rec.x.transpose());
      out << assignment_record(id, label, confidence).dump() << "\n"
          << std::flush;
      ++records;
    }
  } else {
    tcl::Dataset ds = load_dataset(args.input, args.format);
    for (const tcl::Assignment& a : tcl::assign_all(model, ds))
      out << assignment_record(a.id, a.label, a.confidence).dump() << "\n";
  }
  if (args.out != "-" && !out) throw tcl::DataError(args.out + ": write failed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Twin contrastive clustering over dense feature vectors"};
  app.require_subcommand(1);
  bool dominance_failed = false;

  auto* gen = app.add_subcommand("gen-blobs",
                                 "Generate a labeled Gaussian blobs dataset");
  struct {
    int k = 0;
    Index n = 0, d = 0;
    double sep = 8.0;
    std::uint64_t seed = 1;
    std::string out, format = "csv";
  } gen_args;
  gen->add_option("--k", gen_args.k, "number of clusters")->required();
  gen->add_option("--n", gen_args.n, "number of rows")->required();
  gen->add_option("--d", gen_args.d, "feature dimension")->required();
  gen->add_option("--sep", gen_args.sep, "minimum center separation");
  gen->add_option("--seed", gen_args.seed, "generator seed");
  gen->add_option("--out", gen_args.out, "output path")->required();
  gen->add_option("--format", gen_args.format, "csv or jsonl")
      ->check(CLI::IsMember({"csv", "jsonl"}));
  gen->callback([&] {
    tcl::Dataset ds = tcl::generate_blobs(gen_args.k, gen_args.n, gen_args.d,
                                          gen_args.sep, gen_args.seed);
    tcl::save_vectors(ds, gen_args.out, tcl::parse_format(gen_args.format));
    std::cout << "wrote " << ds.n() << " rows x " << ds.dim() << " features ("
              << gen_args.k << " clusters) to " << gen_args.out << "\n";
  });

  auto* train = app.add_subcommand("train", "Twin contrastive training");
  struct {
    std::string config, data, format = "csv", out, report;
  } train_args;
  train->add_option("--config", train_args.config, "key=value config file")
      ->required();
  train->add_option("--data", train_args.data, "training vectors")->required();
  train->add_option("--format", train_args.format, "csv or jsonl")
      ->check(CLI::IsMember({"csv", "jsonl"}));
  train->add_option("--out", train_args.out, "checkpoint path")->required();
  train->add_option("--report", train_args.report, "also write the report here");
  train->callback([&] {
    tcl::RunConfig config = tcl::parse_run_config(train_args.config);
    tcl::Dataset ds = load_dataset(train_args.data, train_args.format);
    tcl::TrainResult result = tcl::run_training(config, ds);
    tcl::save_checkpoint(result.checkpoint, train_args.out);
    emit_report(result.report, train_args.report);
  });

  auto* boost =
      app.add_subcommand("boost", "Confidence-based boosting of a checkpoint");
  struct {
    std::string config, ckpt, data, format = "csv", out, report;
  } boost_args;
  boost->add_option("--config", boost_args.config, "key=value config file")
      ->required();
  boost->add_option("--ckpt", boost_args.ckpt, "input checkpoint")->required();
  boost->add_option("--data", boost_args.data, "training vectors")->required();
  boost->add_option("--format", boost_args.format, "csv or jsonl")
      ->check(CLI::IsMember({"csv", "jsonl"}));
  boost->add_option("--out", boost_args.out, "checkpoint path")->required();
  boost->add_option("--report", boost_args.report, "also write the report here");
  boost->callback([&] {
    tcl::RunConfig config = tcl::parse_run_config(boost_args.config);
    tcl::Checkpoint ck = tcl::load_checkpoint(boost_args.ckpt);
    tcl::Dataset ds = load_dataset(boost_args.data, boost_args.format);
    tcl::TrainResult result = tcl::run_boosting(config, ck, ds);
    tcl::save_checkpoint(result.checkpoint, boost_args.out);
    emit_report(result.report, boost_args.report);
  });

  auto* assign = app.add_subcommand(
      "assign", "Assign instances to clusters (file or stdin stream)");
  AssignArgs assign_args;
  assign->add_option("--ckpt", assign_args.ckpt, "checkpoint")->required();
  assign->add_option("--input", assign_args.input, "vector file, or - for stdin")
      ->required();
  assign->add_option("--format", assign_args.format, "csv or jsonl")
      ->check(CLI::IsMember({"csv", "jsonl"}));
  assign->add_option("--out", assign_args.out, "jsonl output, - for stdout");
  assign->callback([&] { run_assign(assign_args); });

  auto* eval =
      app.add_subcommand("eval", "Score a checkpoint against labeled data");
  struct {
    std::string ckpt, data, format = "csv", report = "-";
  } eval_args;
  eval->add_option("--ckpt", eval_args.ckpt, "checkpoint")->required();
  eval->add_option("--data", eval_args.data, "labeled vectors")->required();
  eval->add_option("--format", eval_args.format, "csv or jsonl")
      ->check(CLI::IsMember({"csv", "jsonl"}));
  eval->add_option("--report", eval_args.report, "report path, - for stdout");
  eval->callback([&] {
    tcl::Model model = tcl::build_model(tcl::load_checkpoint(eval_args.ckpt));
    tcl::Dataset ds = load_dataset(eval_args.data, eval_args.format);
    if (!ds.has_labels())
      throw tcl::DataError(eval_args.data + ": eval needs ground-truth labels");
    write_text(eval_args.report, tcl::evaluate(model, ds).to_text());
  });

  auto* ablate = app.add_subcommand("ablate", "Run an ablation comparison");
  struct {
    std::string config, data, format = "csv", mode, report = "-";
  } ablate_args;
  ablate->add_option("--config", ablate_args.config, "key=value config file")
      ->required();
  ablate->add_option("--data", ablate_args.data, "labeled vectors")->required();
  ablate->add_option("--format", ablate_args.format, "csv or jsonl")
      ->check(CLI::IsMember({"csv", "jsonl"}));
  ablate
      ->add_option("--mode", ablate_args.mode,
                   "augmentation, decoupling, overcluster, or boosting")
      ->required();
  ablate->add_option("--report", ablate_args.report, "report path, - for stdout");
  ablate->callback([&] {
    tcl::RunConfig config = tcl::parse_run_config(ablate_args.config);
    tcl::Dataset ds = load_dataset(ablate_args.data, ablate_args.format);
    tcl::AblationResult result =
        tcl::run_ablation(config, ds, ablate_args.mode);
    write_text(ablate_args.report, result.to_text());
    if (!result.dominance_ok) {
      std::cerr << "ablate: majority-vote accuracy fell below one-to-one "
                   "accuracy\n";
      dominance_failed = true;
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const tcl::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const tcl::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const tcl::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return dominance_failed ? 1 : 0;
}
