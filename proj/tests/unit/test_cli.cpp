#include <sstream>

#include "doctest.h"
#include "flowmob/cli.hpp"
#include "flowmob/io.hpp"
#include "helpers.hpp"

using namespace flowmob;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "flowmob");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST_CASE("synth is reproducible") {
  const auto dir = testing::scratch_dir("cli_synth");
  const std::string a = (dir / "a.bin").string(), b = (dir / "b.bin").string();
  CHECK(run({"synth", "--seed", "7", "--out", a, "--sequences", "20"}).code == 0);
  CHECK(run({"synth", "--seed", "7", "--out", b, "--sequences", "20"}).code == 0);
  CHECK(read_file_bytes(a) == read_file_bytes(b));
}

TEST_CASE("bad invocations exit nonzero with a diagnostic") {
  const auto dir = testing::scratch_dir("cli_bad");
  Run r = run({"train", "--data", (dir / "missing.fmd").string(), "--out", "x"});
  CHECK(r.code != 0);
  CHECK_FALSE(r.err.empty());
  CHECK(run({"synth", "--bogus"}).code != 0);
  CHECK(run({}).code != 0);

  write_text_file(dir / "junk.ckpt", "junk");
  r = run({"synth", "--out", (dir / "d.fmd").string(), "--sequences", "5"});
  REQUIRE(r.code == 0);
  r = run({"eval", "--ckpt", (dir / "junk.ckpt").string(), "--data", (dir / "d.fmd").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("error") != std::string::npos);
}

TEST_CASE("train, eval and predict through the command line") {
  const auto dir = testing::scratch_dir("cli_pipeline");
  const std::string data = (dir / "d.fmd").string(), ckpt = (dir / "m.ckpt").string();
  REQUIRE(run({"synth", "--out", data, "--sequences", "40", "--categories", "4", "--min-length", "6",
               "--max-length", "10"})
              .code == 0);
  const Run t = run({"train", "--data", data, "--out", ckpt, "--epochs", "2", "--dims", "8",
                     "--report-dir", (dir / "rep").string(), "--seed", "3"});
  REQUIRE(t.code == 0);
  CHECK(t.err.find("version=") != std::string::npos);
  CHECK(t.err.find("\"seed\":3") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "rep" / "curve.csv"));
  CHECK(std::filesystem::exists(dir / "rep" / "run.json"));

  const Run e = run({"eval", "--ckpt", ckpt, "--data", data, "--report-dir", (dir / "ev").string()});
  REQUIRE(e.code == 0);
  CHECK(e.out.rfind("MPA=", 0) == 0);
  CHECK(std::filesystem::exists(dir / "ev" / "predictions.csv"));

  const Run p = run({"predict", "--ckpt", ckpt, "--data", data, "--sequence", "1"});
  CHECK(p.code == 0);
  CHECK(p.out.find("category=") != std::string::npos);

  const Run x = run({"transfer", "--origin-ckpt", ckpt, "--target", data, "--out",
                     (dir / "x.ckpt").string(), "--epochs", "1", "--dims", "8", "--freeze-phi"});
  CHECK(x.code == 0);
}

TEST_CASE("flags override the config file") {
  const auto dir = testing::scratch_dir("cli_config");
  const std::string data = (dir / "d.fmd").string();
  REQUIRE(run({"synth", "--out", data, "--sequences", "30", "--min-length", "5", "--max-length", "8"})
              .code == 0);
  write_text_file(dir / "cfg.json", R"({"learning_rate": 0.5, "embed_dim": 6, "hidden_dim": 6, "max_epochs": 1})");
  const Run r = run({"train", "--data", data, "--out", (dir / "m.ckpt").string(), "--config",
                     (dir / "cfg.json").string(), "--lr", "0.01"});
  REQUIRE(r.code == 0);
  CHECK(r.err.find("\"learning_rate\":0.01") != std::string::npos);
  CHECK(r.err.find("\"embed_dim\":6") != std::string::npos);

  write_text_file(dir / "typo.json", R"({"learning_rat": 0.5})");
  CHECK(run({"train", "--data", data, "--out", (dir / "n.ckpt").string(), "--config",
             (dir / "typo.json").string()})
            .code != 0);
}

TEST_CASE("gradcheck reports per tensor and passes") {
  const Run r = run({"gradcheck", "--dims", "4", "--step", "1e-5", "--step", "1e-3"});
  CHECK(r.code == 0);
  CHECK(r.out.find("rnn.G_s") != std::string::npos);
  CHECK(r.out.find("step=0.001") != std::string::npos);
  CHECK(r.out.find("PASS") != std::string::npos);
}

TEST_CASE("ingest from a delimited file") {
  const auto dir = testing::scratch_dir("cli_ingest");
  write_text_file(dir / "in.tsv", "u1\tbar\t10\t40.7\t-74.0\nu1\tcafe\t20\t40.71\t-74.0\n"
                                  "u1\tbar\t35\t40.7\t-74.01\nu2\tbar\t12\t40.6\t-73.9\n"
                                  "u2\tgym\t50\t40.6\t-73.95\nu3\tgym\t0\t999\t0\n");
  const Run r = run({"ingest", "--input", (dir / "in.tsv").string(), "--out",
                     (dir / "d.fmd").string(), "--delimiter", "\\t"});
  CHECK(r.code == 0);
  CHECK(r.out.find("accepted=5 rejected=1") != std::string::npos);
  CHECK(r.out.find("sequences=2") != std::string::npos);
}
