#include "qbench/bench.hpp"
#include "qbench/parallel.hpp"
#include "qbench/toymodel.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

namespace {

std::vector<int> default_thread_list() {
    const int hw = std::max(1u, std::thread::hardware_concurrency());
    std::vector<int> out;
    for (int t = 1; t < hw; t *= 2)
        out.push_back(t);
    out.push_back(hw);
    return out;
}

std::vector<qbench::NumaPolicy> parse_policies(const std::vector<std::string>& names) {
    std::vector<qbench::NumaPolicy> out;
    out.reserve(names.size());
    for (const std::string& n : names)
        out.push_back(qbench::parse_policy(n));
    return out;
}

std::uint64_t effective_seed(std::uint64_t cli_seed) {
    if (const char* env = std::getenv("QBENCH_SEED"))
        return std::strtoull(env, nullptr, 10);
    return cli_seed;
}

void print_records(const std::vector<qbench::BenchRecord>& records) {
    for (const qbench::BenchRecord& r : records) {
        std::cout << r.kernel << " m=" << r.m << " n=" << r.n << " batch=" << r.batch
                  << " threads=" << r.threads << " policy=" << r.policy
                  << " min=" << r.seconds_min << "s gops=" << r.gops;
        if (r.kernel == "prefill" || r.kernel == "generate")
            std::cout << " tok/s=" << static_cast<double>(r.batch) / r.seconds_min;
        std::cout << '\n';
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"qbench: quantized GEMV kernels and benchmark harness"};
    app.require_subcommand(1);

    // sweep
    auto* sweep = app.add_subcommand("sweep", "single-thread kernel size-scalability sweep");
    std::vector<std::int64_t> sizes = {256, 512, 1024, 2048, 4096};
    int sweep_reps = 10, sweep_warmup = 3;
    std::uint64_t sweep_seed = 42;
    std::string sweep_out = "sizes.csv";
    sweep->add_option("--sizes", sizes, "square sizes, multiples of 32")->delimiter(',');
    sweep->add_option("--reps", sweep_reps, "timed repetitions per point");
    sweep->add_option("--warmup", sweep_warmup, "untimed warmup runs per point");
    sweep->add_option("--seed", sweep_seed, "workload seed");
    sweep->add_option("--out", sweep_out, "output CSV path");

    // threads
    auto* threads = app.add_subcommand("threads", "toy-decoder thread/policy sweep");
    std::string preset = "toy";
    std::vector<int> thread_list = default_thread_list();
    std::vector<std::string> policy_names = {"interleave"};
    int prompt_len = 22, gen_tokens = 256;
    int thr_reps = 3, thr_warmup = 1;
    std::uint64_t thr_seed = 42;
    std::string thr_out = "threads.csv";
    threads->add_option("--preset", preset, "model preset: toy|llama8b-layer");
    threads->add_option("--threads", thread_list, "thread counts")->delimiter(',');
    threads->add_option("--policy", policy_names,
                        "placement policies: alloff|bind|interleave|balancing")
        ->delimiter(',');
    threads->add_option("--prompt", prompt_len, "prompt length in tokens");
    threads->add_option("--tokens", gen_tokens, "generated tokens per repetition");
    threads->add_option("--reps", thr_reps, "timed repetitions per point");
    threads->add_option("--warmup", thr_warmup, "untimed warmup runs per point");
    threads->add_option("--seed", thr_seed, "model/workload seed");
    threads->add_option("--out", thr_out, "output CSV path");

    // verify
    auto* verify_cmd = app.add_subcommand("verify", "run the oracle/property suite");
    std::string golden_path;
    verify_cmd->add_option("--golden", golden_path, "path to the checked-in golden .qmat");

    // export-model
    auto* export_cmd = app.add_subcommand("export-model", "write model weights as .qmat files");
    std::string export_preset = "toy";
    std::string export_dir = "./weights";
    std::uint64_t export_seed = 42;
    export_cmd->add_option("--preset", export_preset, "model preset: toy|llama8b-layer");
    export_cmd->add_option("--dir", export_dir, "output directory");
    export_cmd->add_option("--seed", export_seed, "model seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(sweep)) {
            qbench::SweepConfig cfg;
            cfg.sizes = sizes;
            cfg.reps = sweep_reps;
            cfg.warmup = sweep_warmup;
            cfg.seed = effective_seed(sweep_seed);
            const auto records = qbench::sweep_sizes(cfg);
            print_records(records);
            qbench::emit_csv(records, sweep_out,
                             {qbench::toolchain_description(),
                              "seed: " + std::to_string(cfg.seed)});
            std::cout << "wrote " << sweep_out << '\n';
        } else if (app.got_subcommand(threads)) {
            qbench::SweepConfig cfg;
            cfg.threads = thread_list;
            cfg.policies = parse_policies(policy_names);
            cfg.reps = thr_reps;
            cfg.warmup = thr_warmup;
            cfg.seed = effective_seed(thr_seed);
            const qbench::LayerShapes shapes = qbench::preset_shapes(preset);
            const auto records = qbench::sweep_threads(cfg, shapes, prompt_len, gen_tokens);
            print_records(records);
            qbench::emit_csv(records, thr_out,
                             {qbench::toolchain_description(), "preset: " + preset,
                              "seed: " + std::to_string(cfg.seed)});
            std::cout << "wrote " << thr_out << '\n';
        } else if (app.got_subcommand(verify_cmd)) {
            return qbench::verify(std::cout, golden_path);
        } else if (app.got_subcommand(export_cmd)) {
            const qbench::LayerShapes shapes = qbench::preset_shapes(export_preset);
            qbench::ToyDecoder model(shapes, effective_seed(export_seed), export_preset);
            model.export_weights(export_dir);
            std::cout << "wrote weights and manifest to " << export_dir << '\n';
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
