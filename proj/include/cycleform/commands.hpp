#pragma once
// Pipeline stages behind the command-line interface. Each command reads one
// RunConfig, derives its stage seed from the global seed, writes durable
// artifacts to the configured paths, and records a manifest in a fresh run
// directory. Identical (config, seed, inputs) produce identical manifests.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cycleform::commands {

struct GlobalOpts {
  std::string config_path;  // empty: built-in defaults
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;      // fixed run directory instead of a timestamped one
  std::optional<std::string> profile;  // overrides config profile
  std::optional<std::string> resume;   // RL checkpoint to continue from
};

void run_gen_corpus(const GlobalOpts& g);
void run_prep(const GlobalOpts& g);
void run_train_sft(const GlobalOpts& g, const std::string& direction,
                   const std::string& regime);
void run_train_grpo(const GlobalOpts& g);
void run_eval(const GlobalOpts& g, const std::vector<std::string>& checkpoints);
void run_report(const GlobalOpts& g);

// Exit codes, one per error family so scripts can tell failures apart.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;   // malformed command line
inline constexpr int kExitConfig = 3;
inline constexpr int kExitData = 4;
inline constexpr int kExitIo = 5;
inline constexpr int kExitState = 6;
inline constexpr int kExitOther = 1;

// Runs `body`, mapping module exceptions onto the exit codes above and
// printing a family-prefixed diagnostic to stderr.
int run_guarded(const std::function<void()>& body);

}  // namespace cycleform::commands
