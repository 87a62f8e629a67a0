#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "rdc/common.hpp"

// End-to-end checks of the installed command-line surface. The binary path
// arrives via the RDC_CLI environment variable (set by CTest).

namespace fs = std::filesystem;

namespace {

std::string cli() {
  const char* p = std::getenv("RDC_CLI");
  REQUIRE(p != nullptr);
  return p;
}

struct Sandbox {
  fs::path dir;
  Sandbox() {
    dir = fs::temp_directory_path() /
          ("rdc_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Sandbox() { fs::remove_all(dir); }
  std::string p(const std::string& rel) const { return (dir / rel).string(); }
};

int run(const std::string& cmd) {
  const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WEXITSTATUS(status);
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::vector<char>((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
}

size_t line_count(const std::string& path) {
  std::ifstream f(path);
  size_t n = 0;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) ++n;
  return n;
}

}  // namespace

TEST_CASE("command line surface") {
  Sandbox sb;
  const std::string bin = cli();

  REQUIRE(run(bin + " --help") == 0);
  REQUIRE(run(bin + " compress --help") == 0);

  // Tiny but genuine pipeline.
  REQUIRE(run(bin + " make-dataset --dataset " + sb.p("data") +
              " --train 12 --val 6 --test 4 --seed 3") == 0);
  REQUIRE(fs::exists(sb.p("data/train.txt")));
  REQUIRE(fs::exists(sb.p("data/config.txt")));

  REQUIRE(run(bin + " pretrain-proxy --dataset " + sb.p("data") + " --out " +
              sb.p("proxy") + " --steps 2 --batch 4 --queue 32 --seed 3") ==
          0);
  REQUIRE(fs::exists(sb.p("proxy/proxy.rdck")));

  REQUIRE(run(bin + " train-stage1 --dataset " + sb.p("data") + " --proxy " +
              sb.p("proxy/proxy.rdck") + " --out " + sb.p("s1") +
              " --steps 2 --batch 2 --seed 3") == 0);
  REQUIRE(fs::exists(sb.p("s1/stage1.rdck")));
  REQUIRE(fs::exists(sb.p("s1/train_log.csv")));
  REQUIRE(fs::exists(sb.p("s1/config.txt")));

  REQUIRE(run(bin + " train-stage2 --dataset " + sb.p("data") + " --model " +
              sb.p("s1/stage1.rdck") + " --out " + sb.p("s2") +
              " --steps 2 --batch 2 --seed 3") == 0);
  const std::string model = sb.p("s2/stage2.rdck");
  REQUIRE(fs::exists(model));

  const std::string img = sb.p("data/images/val_0.ppm");

  SECTION("compress/decompress round trip and determinism") {
    REQUIRE(run(bin + " compress " + img + " --model " + model +
                " --alpha 0.5 --out " + sb.p("a.rdc")) == 0);
    REQUIRE(run(bin + " compress " + img + " --model " + model +
                " --alpha 0.5 --out " + sb.p("b.rdc")) == 0);
    REQUIRE(slurp(sb.p("a.rdc")) == slurp(sb.p("b.rdc")));

    REQUIRE(run(bin + " decompress " + sb.p("a.rdc") + " --model " + model +
                " --beta 1 --out " + sb.p("r1.ppm")) == 0);
    REQUIRE(run(bin + " decompress " + sb.p("a.rdc") + " --model " + model +
                " --beta 1 --out " + sb.p("r2.ppm")) == 0);
    REQUIRE(slurp(sb.p("r1.ppm")) == slurp(sb.p("r2.ppm")));

    // --no-aux drops the auxiliary substream.
    REQUIRE(run(bin + " compress " + img + " --model " + model +
                " --no-aux --out " + sb.p("na.rdc")) == 0);
    auto with_aux = slurp(sb.p("a.rdc"));
    auto without = slurp(sb.p("na.rdc"));
    REQUIRE(without.size() < with_aux.size());
    // len_s field (little endian at offset 22) must be zero.
    for (int i = 22; i < 26; ++i) REQUIRE(without[i] == 0);
  }

  SECTION("exit codes") {
    REQUIRE(run(bin + " compress " + img + " --out " + sb.p("x.rdc")) == 2);
    REQUIRE(run(bin + " nonsense") == 2);

    REQUIRE(run(bin + " compress " + img + " --model " + model +
                " --alpha 2.0 --out " + sb.p("x.rdc")) == 2);

    REQUIRE(run(bin + " compress " + sb.p("missing.ppm") + " --model " +
                model + " --out " + sb.p("x.rdc")) == 4);

    // Wrong checkpoint kind is a model/version mismatch.
    REQUIRE(run(bin + " compress " + img + " --model " +
                sb.p("proxy/proxy.rdck") + " --out " + sb.p("x.rdc")) == 3);

    REQUIRE(run(bin + " compress " + img + " --model " + model +
                " --out " + sb.p("c.rdc")) == 0);
    REQUIRE(run(bin + " decompress " + sb.p("c.rdc") + " --model " + model +
                " --beta 1.5 --out " + sb.p("x.ppm")) == 2);

    // Corrupt the magic: exit 5.
    auto bytes = slurp(sb.p("c.rdc"));
    bytes[1] = 'X';
    std::ofstream(sb.p("bad.rdc"), std::ios::binary)
        .write(bytes.data(), bytes.size());
    REQUIRE(run(bin + " decompress " + sb.p("bad.rdc") + " --model " +
                model + " --beta 0 --out " + sb.p("x.ppm")) == 5);

    // Truncated container: exit 5.
    std::ofstream(sb.p("cut.rdc"), std::ios::binary)
        .write(bytes.data(), bytes.size() / 2);
    REQUIRE(run(bin + " decompress " + sb.p("cut.rdc") + " --model " +
                model + " --beta 0 --out " + sb.p("x.ppm")) == 5);
  }

  SECTION("eval, sweep and diagnose") {
    REQUIRE(run(bin + " eval --dataset " + sb.p("data") + " --model " +
                model + " --proxy " + sb.p("proxy/proxy.rdck") +
                " --split val --alpha 0.5 --beta 0") == 0);

    const std::string csv = sb.p("sw/surface.csv");
    REQUIRE(run(bin + " sweep --dataset " + sb.p("data") + " --model " +
                model + " --proxy " + sb.p("proxy/proxy.rdck") +
                " --split val --alphas 0,1 --betas 0,1 --out-csv " + csv) ==
            0);
    REQUIRE(fs::exists(csv));
    REQUIRE(line_count(csv) == 5);  // header + 2x2 grid
    REQUIRE(fs::exists(sb.p("sw/surface_rate_acc.svg")));
    REQUIRE(fs::exists(sb.p("sw/surface_rate_psnr.svg")));
    auto first = slurp(csv);
    REQUIRE(run(bin + " sweep --dataset " + sb.p("data") + " --model " +
                model + " --proxy " + sb.p("proxy/proxy.rdck") +
                " --split val --alphas 0,1 --betas 0,1 --out-csv " + csv) ==
            0);
    REQUIRE(slurp(csv) == first);

    REQUIRE(run(bin + " diagnose " + img + " --model " + model + " --out " +
                sb.p("diag")) == 0);
    REQUIRE(fs::exists(sb.p("diag/summary.csv")));
    REQUIRE(fs::exists(sb.p("diag/spectrum_x2.pgm")));
  }

  SECTION("config file with unknown keys is rejected") {
    std::ofstream(sb.p("bad.cfg")) << "no_such_key=1\n";
    REQUIRE(run(bin + " --config " + sb.p("bad.cfg") + " eval --dataset " +
                sb.p("data") + " --model " + model + " --proxy " +
                sb.p("proxy/proxy.rdck")) == 2);
    std::ofstream(sb.p("ok.cfg")) << "alpha_s=0.5\nseed=9\n";
    REQUIRE(run(bin + " --config " + sb.p("ok.cfg") + " eval --dataset " +
                sb.p("data") + " --model " + model + " --proxy " +
                sb.p("proxy/proxy.rdck") + " --alpha 1 --beta 1") == 0);
  }
}
