#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fracevol/cli.hpp"

namespace {

using namespace fracevol;

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<unsigned> threads;
    std::string suite;
};

Config resolve(const Flags& f) {
    Config c = f.config.empty() ? Config{} : Config::load(f.config);
    if (f.seed)
        c.set("seed", std::to_string(*f.seed));
    else if (!c.has("seed"))
        if (const char* env = std::getenv("FRACEVOL_SEED"); env && *env) c.set("seed", env);
    if (f.out) c.set("output.dir", *f.out);
    if (f.threads) c.set("threads", std::to_string(*f.threads));
    return c;
}

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "key = value config file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "master seed (else config seed, else FRACEVOL_SEED, else 42)");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--threads", f.threads, "worker cap, 0 = all cores");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Affine stochastic evolution equations driven by fractional Brownian motion"};
    app.require_subcommand(1);
    app.footer("Config keys (key = default):\n\n" + cli::help_text());
    Flags flags;
    struct Command {
        const char* name;
        const char* help;
        int (*run)(const Config&);
    };
    const Command commands[] = {
        {"sample", "sample fBm paths and check their covariance", cli::cmd_sample},
        {"solve", "solve an affine equation pathwise", cli::cmd_solve},
        {"spde", "solve the stochastic heat equation by sine modes", cli::cmd_spde},
        {"moments", "estimate moments and check the moment bounds", cli::cmd_moments},
        {"stability", "compare moment and pathwise Lyapunov exponents", cli::cmd_stability},
    };
    std::vector<std::pair<CLI::App*, int (*)(const Config&)>> subs;
    for (const auto& c : commands) {
        auto* sub = app.add_subcommand(c.name, c.help);
        add_common(sub, flags);
        subs.emplace_back(sub, c.run);
    }
    auto* verify = app.add_subcommand("verify", "run a verification suite (exit 0 pass, 1 fail, 2 inconclusive)");
    add_common(verify, flags);
    verify->add_option("--suite", flags.suite, "isometry | counterexample | composition | reduction")
        ->check(CLI::IsMember(cli::verify_suites()));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : cli::Exit::usage;
    }

    try {
        const Config config = resolve(flags);
        if (verify->parsed()) return cli::cmd_verify(config, flags.suite);
        for (const auto& [sub, run] : subs)
            if (sub->parsed()) return run(config);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return cli::Exit::usage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::Exit::runtime_error;
    }
    return cli::Exit::usage;
}
