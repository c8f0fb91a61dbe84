#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace flowkit::cli {

// Exit codes shared by every command: 0 success, 1 domain failure, 2 usage/IO.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kUsage = 2;

struct ValidateOptions {
    std::string input_path;
    std::optional<std::string> round_path;  // enables steps 3-4
    std::string judge = "rule";
};

struct ConvertOptions {
    std::string input_path;
    std::string output_path;
    std::string app_name = "workflow";
    std::string app_description;
    bool import_check = false;
    std::optional<std::string> push_base_url;
    std::string platform_token;
};

struct RunOptions {
    std::string workflow_path;
    std::string inputs_path;
    std::optional<std::string> scripts_path;
    std::optional<std::string> trace_path;
    bool strict_scripts = false;
};

struct EvalOptions {
    std::string corpus_path;
    std::optional<std::string> responses_dir;
    std::vector<std::string> journals_dirs;  // one per run; averaged when several
    std::optional<std::string> out_dir;
    bool partial = false;
    std::string judge = "rule";
};

struct AgentOptions {
    std::string corpus_path;
    std::optional<std::string> provider_config_path;
    std::optional<std::string> scripted_responses_dir;
    std::string out_dir;
    std::string guidelines_path = "data/prompts/system_guidelines.md";
    int max_attempts = 5;
    std::string judge = "rule";
};

struct CatalogOptions {
    bool text = false;  // default: machine-readable JSON
};

struct RepairOptions {
    std::string input_path;
    std::optional<std::string> output_path;
    bool explain = false;
};

int cmd_validate(const ValidateOptions& options, std::ostream& out, std::ostream& err);
int cmd_convert(const ConvertOptions& options, std::ostream& out, std::ostream& err);
int cmd_run(const RunOptions& options, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err);
int cmd_agent(const AgentOptions& options, std::ostream& out, std::ostream& err);
int cmd_catalog(const CatalogOptions& options, std::ostream& out, std::ostream& err);
int cmd_repair(const RepairOptions& options, std::ostream& out, std::ostream& err);

}  // namespace flowkit::cli
