#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "unlearn/cli/commands.hpp"
#include "unlearn/error.hpp"

namespace {

std::vector<double> parse_values(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            throw unlearn::ValidationError("sweep: bad value '" + item + "'");
        }
        if (used != item.size())
            throw unlearn::ValidationError("sweep: bad value '" + item + "'");
        out.push_back(v);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Corrective unlearning toolkit: train, corrupt, project, evaluate"};
    app.require_subcommand(1);

    std::string config_path, ckpt_path, out_str, values_str, param;
    std::uint64_t seed_val = 0;
    double xmin = -1.5, xmax = 1.5, ymin = -1.5, ymax = 1.5;
    std::size_t res = 200;
    std::string boundary_out = "boundary.csv";

    auto add_seed = [&](CLI::App* sub) { return sub->add_option("--seed", seed_val, "Seed override (beats UNLEARN_SEED and the config file)"); };

    CLI::App* run = app.add_subcommand("run", "Full corrupt/train/correct/evaluate pipeline");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required();
    CLI::Option* run_out = run->add_option("--out", out_str, "Output directory override");
    CLI::Option* run_seed = add_seed(run);

    CLI::App* sweep = app.add_subcommand("sweep", "Sweep alpha or n_trust against one vanilla model");
    sweep->add_option("--config", config_path, "Experiment config (JSON)")->required();
    sweep->add_option("--param", param, "Parameter to sweep: alpha | n_trust")->required();
    sweep->add_option("--values", values_str, "Comma-separated value list")->required();
    CLI::Option* sweep_out = sweep->add_option("--out", out_str, "Output directory override");
    CLI::Option* sweep_seed = add_seed(sweep);

    CLI::App* boundary = app.add_subcommand("boundary", "Export a decision-boundary grid as CSV");
    boundary->add_option("--ckpt", ckpt_path, "Model checkpoint")->required();
    boundary->add_option("--xmin", xmin, "Grid x minimum");
    boundary->add_option("--xmax", xmax, "Grid x maximum");
    boundary->add_option("--ymin", ymin, "Grid y minimum");
    boundary->add_option("--ymax", ymax, "Grid y maximum");
    boundary->add_option("--res", res, "Lattice points per axis");
    boundary->add_option("--out", boundary_out, "Output CSV path");

    CLI::App* ft = app.add_subcommand("finetune", "Finetune a checkpoint on a retain subset");
    ft->add_option("--ckpt", ckpt_path, "Model checkpoint")->required();
    ft->add_option("--config", config_path, "Experiment config (JSON)")->required();
    CLI::Option* ft_out = ft->add_option("--out", out_str, "Output directory override");
    CLI::Option* ft_seed = add_seed(ft);

    CLI::App* corrupt_cmd = app.add_subcommand("corrupt", "Corrupt the configured dataset and export CSV");
    corrupt_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
    CLI::Option* corrupt_out = corrupt_cmd->add_option("--out", out_str, "Output directory override");
    CLI::Option* corrupt_seed = add_seed(corrupt_cmd);

    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the configured splits");
    eval_cmd->add_option("--ckpt", ckpt_path, "Model checkpoint")->required();
    eval_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
    CLI::Option* eval_seed = add_seed(eval_cmd);

    CLI11_PARSE(app, argc, argv);

    auto opt_seed = [&](CLI::Option* o) -> std::optional<std::uint64_t> {
        if (o && o->count() > 0) return seed_val;
        return std::nullopt;
    };
    auto opt_out = [&](CLI::Option* o) -> std::optional<std::string> {
        if (o && o->count() > 0) return out_str;
        return std::nullopt;
    };

    try {
        if (run->parsed())
            return unlearn::cmd_run(config_path, opt_seed(run_seed), opt_out(run_out));
        if (sweep->parsed())
            return unlearn::cmd_sweep(config_path, param, parse_values(values_str),
                                      opt_seed(sweep_seed), opt_out(sweep_out));
        if (boundary->parsed())
            return unlearn::cmd_boundary(ckpt_path, xmin, xmax, ymin, ymax, res, boundary_out);
        if (ft->parsed())
            return unlearn::cmd_finetune(ckpt_path, config_path, opt_seed(ft_seed),
                                         opt_out(ft_out));
        if (corrupt_cmd->parsed())
            return unlearn::cmd_corrupt(config_path, opt_seed(corrupt_seed),
                                        opt_out(corrupt_out));
        if (eval_cmd->parsed())
            return unlearn::cmd_eval(ckpt_path, config_path, std::cout, opt_seed(eval_seed));
    } catch (const unlearn::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
