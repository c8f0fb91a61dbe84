#include <iostream>

#include <CLI11.hpp>

#include "flowkit/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"flowkit - validate, compile, execute, and score LLM-generated workflows"};
    app.require_subcommand(1);

    flowkit::cli::ValidateOptions validate_options;
    auto* validate = app.add_subcommand(
        "validate", "Run the staged checks on a response or workflow JSON file");
    validate->add_option("input", validate_options.input_path, "response or workflow file")
        ->required();
    std::string round_path;
    validate->add_option("--round", round_path,
                         "round context file enabling variable and key-node checks");

    flowkit::cli::ConvertOptions convert_options;
    auto* convert =
        app.add_subcommand("convert", "Compile a workflow JSON file to platform YAML");
    convert->add_option("input", convert_options.input_path, "workflow JSON file")->required();
    convert->add_option("-o,--output", convert_options.output_path, "output YAML path");
    convert->add_option("--name", convert_options.app_name, "app name");
    convert->add_option("--description", convert_options.app_description, "app description");
    convert->add_flag("--import-check", convert_options.import_check,
                      "re-import the emitted YAML and verify the round trip");
    std::string push_url;
    convert->add_option("--push", push_url, "POST the YAML to a platform base URL");
    convert->add_option("--token", convert_options.platform_token,
                        "platform API token for --push");

    flowkit::cli::RunOptions run_options;
    auto* run = app.add_subcommand("run", "Execute a workflow in the deterministic simulator");
    run->add_option("workflow", run_options.workflow_path, "workflow JSON file")->required();
    run->add_option("--inputs", run_options.inputs_path, "typed inputs JSON file")->required();
    std::string scripts_path, trace_path;
    run->add_option("--scripts", scripts_path, "scripted handler table JSON file");
    run->add_option("--trace", trace_path, "write the execution trace to this path");
    run->add_flag("--strict", run_options.strict_scripts,
                  "fail when a model-backed node has no script entry");

    flowkit::cli::EvalOptions eval_options;
    auto* eval =
        app.add_subcommand("eval", "Score responses against a corpus with both pipelines");
    eval->add_option("--corpus", eval_options.corpus_path, "corpus JSON file")->required();
    std::string responses_dir;
    eval->add_option("--responses", responses_dir,
                     "directory of <task>/round_<n>.txt response files");
    eval->add_option("--journals", eval_options.journals_dirs,
                     "session-journal directory (repeat for multi-run averaging)");
    std::string eval_out;
    eval->add_option("--out", eval_out, "directory for results.json and per_round.csv");
    eval->add_flag("--partial", eval_options.partial, "tolerate missing responses");
    eval->add_option("--judge", eval_options.judge, "judge backend: rule")
        ->check(CLI::IsMember({"rule"}));

    flowkit::cli::AgentOptions agent_options;
    auto* agent = app.add_subcommand(
        "agent", "Run the error-driven retry loop over a corpus and score the journals");
    agent->add_option("--corpus", agent_options.corpus_path, "corpus JSON file")->required();
    std::string provider_config, scripted_dir;
    agent->add_option("--provider", provider_config, "provider config JSON file");
    agent->add_option("--scripted", scripted_dir,
                      "directory of canned responses (offline mode)");
    agent->add_option("--out", agent_options.out_dir, "journal output directory")->required();
    agent->add_option("--guidelines", agent_options.guidelines_path,
                      "guideline template path");
    agent->add_option("--max-attempts", agent_options.max_attempts,
                      "verification attempts per round");

    flowkit::cli::CatalogOptions catalog_options;
    auto* catalog = app.add_subcommand("catalog", "Dump the node catalog");
    catalog->add_flag("--text", catalog_options.text,
                      "render the prompt knowledge base instead of JSON");

    flowkit::cli::RepairOptions repair_options;
    auto* repair = app.add_subcommand("repair", "Apply the auto-repair pipeline to a response");
    repair->add_option("input", repair_options.input_path, "response file")->required();
    std::string repair_out;
    repair->add_option("-o,--output", repair_out, "write the repaired response here");
    repair->add_flag("--explain", repair_options.explain,
                     "print the applied repairs and final stage");

    CLI11_PARSE(app, argc, argv);

    if (validate->parsed()) {
        if (!round_path.empty()) validate_options.round_path = round_path;
        return flowkit::cli::cmd_validate(validate_options, std::cout, std::cerr);
    }
    if (convert->parsed()) {
        if (!push_url.empty()) convert_options.push_base_url = push_url;
        return flowkit::cli::cmd_convert(convert_options, std::cout, std::cerr);
    }
    if (run->parsed()) {
        if (!scripts_path.empty()) run_options.scripts_path = scripts_path;
        if (!trace_path.empty()) run_options.trace_path = trace_path;
        return flowkit::cli::cmd_run(run_options, std::cout, std::cerr);
    }
    if (eval->parsed()) {
        if (!responses_dir.empty()) eval_options.responses_dir = responses_dir;
        if (!eval_out.empty()) eval_options.out_dir = eval_out;
        return flowkit::cli::cmd_eval(eval_options, std::cout, std::cerr);
    }
    if (agent->parsed()) {
        if (!provider_config.empty()) agent_options.provider_config_path = provider_config;
        if (!scripted_dir.empty()) agent_options.scripted_responses_dir = scripted_dir;
        return flowkit::cli::cmd_agent(agent_options, std::cout, std::cerr);
    }
    if (catalog->parsed()) return flowkit::cli::cmd_catalog(catalog_options, std::cout, std::cerr);
    if (repair->parsed()) {
        if (!repair_out.empty()) repair_options.output_path = repair_out;
        return flowkit::cli::cmd_repair(repair_options, std::cout, std::cerr);
    }
    return flowkit::cli::kUsage;
}
