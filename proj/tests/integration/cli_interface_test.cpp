// External-interface checks for the CLI: seed resolution order, output
// formats, strict config handling, manifest and exit-code contracts.
//
// usage: cli_interface_test <path-to-l2r-cli> [work-dir]

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <cmath>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string g_cli;
fs::path g_work;
int g_failures = 0;

void expect(bool ok, const std::string& what) {
    std::printf("[%s] %s\n", ok ? "ok" : "FAILED", what.c_str());
    if (!ok) ++g_failures;
}

int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " \"" + g_cli + "\" " + args + " >> \"" +
                            (g_work / "cli.log").string() + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
}

json manifest(const fs::path& dir) { return json::parse(slurp(dir / "manifest.json")); }

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: cli_interface_test <l2r-cli> [work-dir]\n";
        return 64;
    }
    g_cli = argv[1];
    g_work = argc > 2 ? fs::path(argv[2]) : fs::path("cli_interface_work");
    fs::create_directories(g_work);

    // seed resolution: config < env < flag
    {
        write(g_work / "seed.cfg", "seed=7\nvariance.r_list=2\nvariance.n_samples=2000\n");
        const std::string cfg = "-c \"" + (g_work / "seed.cfg").string() + "\"";

        int rc = run("variance " + cfg + " -o \"" + (g_work / "s_cfg").string() + "\"");
        expect(rc == 0, "variance with config seed exits 0");
        expect(manifest(g_work / "s_cfg")["seed"] == 7, "config seed used when nothing overrides");

        run("variance " + cfg + " -o \"" + (g_work / "s_env").string() + "\"", "L2R_SEED=11");
        expect(manifest(g_work / "s_env")["seed"] == 11, "L2R_SEED overrides the config seed");

        run("variance " + cfg + " --seed 13 -o \"" + (g_work / "s_flag").string() + "\"",
            "L2R_SEED=11");
        expect(manifest(g_work / "s_flag")["seed"] == 13, "--seed beats L2R_SEED and config");

        // different seeds change the sampled data
        expect(slurp(g_work / "s_cfg" / "variance.csv") != slurp(g_work / "s_env" / "variance.csv"),
               "different seeds produce different samples");
    }

    // unknown keys are rejected with a nonzero exit and a manifest
    {
        write(g_work / "typo.cfg", "variance.r_lst=2\n");
        const int rc = run("variance -c \"" + (g_work / "typo.cfg").string() + "\" -o \"" +
                           (g_work / "typo_out").string() + "\"");
        expect(rc != 0, "unknown config key exits nonzero");
        json m = manifest(g_work / "typo_out");
        expect(m["pass"] == false, "failure manifest records pass=false");
    }

    // malformed config value
    {
        write(g_work / "bad.cfg", "variance.n_samples=soon\n");
        const int rc = run("variance -c \"" + (g_work / "bad.cfg").string() + "\" -o \"" +
                           (g_work / "bad_out").string() + "\"");
        expect(rc != 0, "malformed numeric value exits nonzero");
    }

    // json-lines format switches every data file
    {
        write(g_work / "fmt.cfg", "variance.r_list=2\nvariance.n_samples=2000\n");
        const int rc = run("variance -c \"" + (g_work / "fmt.cfg").string() +
                           "\" --format json-lines -o \"" + (g_work / "fmt_out").string() + "\"");
        expect(rc == 0, "json-lines run exits 0");
        expect(fs::exists(g_work / "fmt_out" / "variance.jsonl"), "json-lines file written");
        std::istringstream in(slurp(g_work / "fmt_out" / "variance.jsonl"));
        std::string line;
        bool all_json = true;
        int rows = 0;
        while (std::getline(in, line)) {
            try {
                const json parsed = json::parse(line);
                (void)parsed;
            } catch (...) {
                all_json = false;
            }
            ++rows;
        }
        expect(all_json && rows >= 2, "every json-lines row parses");
    }

    // manifest lists outputs with hashes; exit code mirrors checks
    {
        write(g_work / "ok.cfg", "variance.r_list=2,8\nvariance.n_samples=2000\n");
        const int rc = run("variance -c \"" + (g_work / "ok.cfg").string() + "\" -o \"" +
                           (g_work / "ok_out").string() + "\"");
        json m = manifest(g_work / "ok_out");
        expect(rc == 0 && m["pass"] == true, "exit 0 iff all checks pass");
        expect(m["outputs"].size() == 1 && m["outputs"][0]["file"] == "variance.csv",
               "manifest lists the data files");
        expect(m["outputs"][0].contains("fnv1a64"), "outputs carry content hashes");
        expect(m["resolved_config"].contains("variance.r_list"), "manifest embeds resolved config");
    }

    // config hash is stamped into data files and stable across reruns
    {
        write(g_work / "h.cfg", "variance.r_list=2\nvariance.n_samples=2000\nseed=5\n");
        run("variance -c \"" + (g_work / "h.cfg").string() + "\" -o \"" +
            (g_work / "h1").string() + "\"");
        run("variance -c \"" + (g_work / "h.cfg").string() + "\" -o \"" +
            (g_work / "h2").string() + "\"");
        const std::string a = slurp(g_work / "h1" / "variance.csv");
        expect(a.rfind("# config_hash: ", 0) == 0, "data files start with the config hash");
        expect(a == slurp(g_work / "h2" / "variance.csv"), "rerun data is byte-identical");
        expect(manifest(g_work / "h1")["config_hash"] == manifest(g_work / "h2")["config_hash"],
               "config hash stable across reruns");
    }

    // bounds and pca-export determinism (beyond the acceptance set)
    {
        write(g_work / "b.cfg", "bounds.n_samples=2000\n");
        run("bounds -c \"" + (g_work / "b.cfg").string() + "\" -o \"" + (g_work / "b1").string() +
            "\"");
        run("bounds -c \"" + (g_work / "b.cfg").string() + "\" -o \"" + (g_work / "b2").string() +
            "\"");
        expect(slurp(g_work / "b1" / "bounds.csv") == slurp(g_work / "b2" / "bounds.csv"),
               "bounds rerun is byte-identical");

        write(g_work / "p.cfg", "data.n_per_cluster=8\n");
        run("pca-export -c \"" + (g_work / "p.cfg").string() + "\" -o \"" +
            (g_work / "p1").string() + "\"");
        run("pca-export -c \"" + (g_work / "p.cfg").string() + "\" -o \"" +
            (g_work / "p2").string() + "\"");
        expect(slurp(g_work / "p1" / "pca_export.csv") == slurp(g_work / "p2" / "pca_export.csv"),
               "pca-export rerun is byte-identical");
    }

    // the running-norm style records the standardizer slope as l_norm
    {
        write(g_work / "rn.cfg",
              "bounds.n_samples=500\nrouter.norm_style=running_scalar_norm\n");
        const int rc = run("bounds -c \"" + (g_work / "rn.cfg").string() + "\" -o \"" +
                           (g_work / "rn_out").string() + "\"");
        expect(rc == 0, "bounds under running_scalar_norm exits 0");
        std::istringstream in(slurp(g_work / "rn_out" / "bounds.csv"));
        std::string line, sips_row;
        while (std::getline(in, line))
            if (line.rfind("l2r_sips,", 0) == 0) sips_row = line;
        // last column is l_norm = 1/sqrt(running_var + 1e-5) at init
        const double l_norm = std::stod(sips_row.substr(sips_row.rfind(',') + 1));
        expect(std::fabs(l_norm - 1.0 / std::sqrt(1.0 + 1e-5)) < 1e-12,
               "recorded l_norm equals the standardizer slope");
    }

    // train with steps=0 still succeeds and writes an empty-history run
    {
        write(g_work / "t0.cfg", "train.steps=0\ndata.n_per_cluster=4\n");
        const int rc = run("train -c \"" + (g_work / "t0.cfg").string() + "\" -o \"" +
                           (g_work / "t0_out").string() + "\"");
        expect(rc == 0, "train with steps=0 exits 0");
        std::istringstream losses(slurp(g_work / "t0_out" / "losses.csv"));
        int lines = 0;
        std::string l;
        while (std::getline(losses, l))
            if (!l.empty() && l[0] != '#') ++lines;
        expect(lines == 1, "steps=0 loss table holds only the header");
    }

    std::printf("\ncli interface checks: %s\n", g_failures == 0 ? "all passed" : "FAILURES");
    return g_failures == 0 ? 0 : 1;
}
