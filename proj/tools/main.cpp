#include <cstdint>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cycleform/commands.hpp"

int main(int argc, char** argv) {
  using cycleform::commands::GlobalOpts;

  CLI::App app{
      "cycleform: train and evaluate tiny translation models between natural"
      " language and a formal statement grammar, rewarding round-trip"
      " agreement"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  GlobalOpts g;
  std::string config_path, out_dir, profile, resume_path;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path,
                    "JSON run configuration (defaults apply when omitted)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "override the config's global seed");
    cmd->add_option("--out", out_dir,
                    "run directory (default: timestamped under out_dir)");
    cmd->add_option("--profile", profile,
                    "numeric profile: test-64bit or fast-32bit");
  };

  CLI::App* gen = app.add_subcommand(
      "gen-corpus", "generate the synthetic corpus JSONL");
  add_common(gen);

  CLI::App* prep = app.add_subcommand(
      "prep", "dedup, parse-filter, decontaminate, and split the corpus");
  add_common(prep);

  std::string direction, regime;
  CLI::App* tsft = app.add_subcommand(
      "train-sft", "supervised fine-tuning of one translation direction");
  add_common(tsft);
  tsft->add_option("direction", direction, "nl2formal or formal2nl")
      ->required();
  tsft->add_option("regime", regime, "curriculum or shuffled")->required();

  CLI::App* tgrpo = app.add_subcommand(
      "train-grpo", "reinforcement training of the forward translator");
  add_common(tgrpo);
  tgrpo->add_option("--resume", resume_path,
                    "continue from an interrupted-run checkpoint")
      ->check(CLI::ExistingFile);

  std::vector<std::string> checkpoints;
  CLI::App* ev = app.add_subcommand(
      "eval", "score checkpoints on the held-out split");
  add_common(ev);
  ev->add_option("checkpoints", checkpoints, "model checkpoint files")
      ->required()
      ->check(CLI::ExistingFile);

  CLI::App* rep = app.add_subcommand(
      "report", "render CSV and SVG artifacts from stored reports");
  add_common(rep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);  // prints the message (or requested help)
    return rc == 0 ? 0 : cycleform::commands::kExitUsage;
  }

  g.config_path = config_path;
  if (gen->count("--seed") || prep->count("--seed") || tsft->count("--seed") ||
      tgrpo->count("--seed") || ev->count("--seed") || rep->count("--seed"))
    g.seed = seed;
  if (!out_dir.empty()) g.out = out_dir;
  if (!profile.empty()) g.profile = profile;
  if (!resume_path.empty()) g.resume = resume_path;

  return cycleform::commands::run_guarded([&] {
    if (gen->parsed()) cycleform::commands::run_gen_corpus(g);
    if (prep->parsed()) cycleform::commands::run_prep(g);
    if (tsft->parsed()) cycleform::commands::run_train_sft(g, direction, regime);
    if (tgrpo->parsed()) cycleform::commands::run_train_grpo(g);
    if (ev->parsed()) cycleform::commands::run_eval(g, checkpoints);
    if (rep->parsed()) cycleform::commands::run_report(g);
  });
}
