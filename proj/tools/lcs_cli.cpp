// lcs: run verification manifests and inspect reports.
//
//   lcs run <manifest>            every task
//   lcs verify <manifest>         only "verify" tasks (likewise embed,
//                                 reduce-chain, cohomology)
//   lcs report <file>             pretty-print a report
//
// Exit codes: 0 green, 1 some check failed, 2 input or parse error.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lcs/manifest.hpp"

namespace {

namespace mf = lcs::manifest;

struct Globals {
    std::uint64_t seed = 0;
    double tol = 0.0;
    std::size_t samples = 0;
    unsigned threads = 0;
    bool fail_fast = false;
    bool quiet = false;
    std::string out;
};

int run_manifest(const std::string &path, const std::string &command, const std::string &only, const Globals &g,
                 const CLI::App &app)
{
    const auto M = mf::load_manifest(path);
    mf::RunOptions o;
    o.command = command;
    o.only = only;
    o.fail_fast = g.fail_fast;
    if (app.count("--seed") > 0) {
        o.seed = g.seed;
    }
    if (app.count("--tol") > 0) {
        o.tol = g.tol;
    }
    if (app.count("--samples") > 0) {
        o.samples = g.samples;
    }
    const auto rep = mf::run(M, o);
    const std::string out = g.out.empty() ? std::filesystem::path(path).stem().string() + ".report.json" : g.out;
    mf::write_atomic(out, mf::dump(rep));
    const bool green = rep.at("green").get<bool>();
    if (!g.quiet) {
        const auto &s = rep.at("summary");
        std::cout << (green ? "green" : "FAILED") << ": " << s.at("tasks") << " tasks, " << s.at("records")
                  << " records, " << s.at("failed_records") << " failed; report " << out << "\n";
        if (!green) {
            for (const auto &t : rep.at("tasks")) {
                for (const auto &r : t.at("records")) {
                    if (!r.at("passed").get<bool>()) {
                        std::cout << "  " << t.at("label").get<std::string>() << ": " << r.at("name").get<std::string>()
                                  << " residual " << r.at("residual") << " tol " << r.at("tolerance") << "\n";
                    }
                }
            }
        }
    }
    return green ? 0 : 1;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Locally conformal symplectic structures: manifest runner"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "override the manifest seed");
    app.add_option("--tol", g.tol, "override the default tolerance")->check(CLI::PositiveNumber);
    app.add_option("--samples", g.samples, "override the default sample count")->check(CLI::PositiveNumber);
    app.add_option("--threads", g.threads, "worker threads (1 = serial)")->check(CLI::PositiveNumber);
    app.add_flag("--fail-fast", g.fail_fast, "stop after the first failing task");
    app.add_option("-o,--out", g.out, "report path (default <manifest stem>.report.json)");
    app.add_flag("-q,--quiet", g.quiet, "no summary on stdout");

    std::string manifest, report;
    struct Sub {
        const char *name, *only, *help;
    };
    const Sub subs[] = {{"run", "", "run every task"},
                        {"verify", "verify", "run the verify tasks"},
                        {"embed", "embed", "run the embed tasks"},
                        {"reduce-chain", "reduce-chain", "run the reduce-chain tasks"},
                        {"cohomology", "cohomology", "run the cohomology tasks"}};
    std::vector<std::pair<CLI::App *, const Sub *>> runners;
    for (const auto &s : subs) {
        auto *c = app.add_subcommand(s.name, s.help);
        c->add_option("manifest", manifest, "manifest file")->required();
        c->fallthrough();
        runners.emplace_back(c, &s);
    }
    auto *rep = app.add_subcommand("report", "pretty-print a report");
    rep->add_option("file", report, "report file")->required();
    rep->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    if (g.threads > 0) {
        lcs::default_threads() = g.threads;
    }
    try {
        if (rep->parsed()) {
            const auto j = mf::parse_json(mf::read_file(report), report);
            std::cout << mf::pretty(j);
            return j.at("green").get<bool>() ? 0 : 1;
        }
        for (const auto &[c, s] : runners) {
            if (c->parsed()) {
                return run_manifest(manifest, s->name, s->only, g, app);
            }
        }
    } catch (const lcs::InputError &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const mf::json::exception &e) {
        std::cerr << "error: malformed report: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
