// autothink: command-line entry point.
//
//   parse       FILE [--lenient]
//   verify      --domain D --answer FILE --reference FILE [--config F]
//   synth       (--pool FILE | --synthetic-pool N) --n N --seed S [--out F] [--stats F] [--config F]
//   simulate    [--config F] [--corpus FILE] [--out F] [--seed S]
//   saturation  --manifest FILE (--fraction F | --threshold T) [--target-report F] [--verbose]
//   uld-check   --teacher CSV --student CSV
//
// Exit status: 0 ok, 1 infrastructure failure, 2 invalid input.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "autothink/coldstart.hpp"
#include "autothink/config.hpp"
#include "autothink/distill.hpp"
#include "autothink/format.hpp"
#include "autothink/sandbox.hpp"
#include "autothink/sim.hpp"
#include "autothink/upscale.hpp"
#include "autothink/verifier.hpp"

using namespace autothink;
using ojson = nlohmann::ordered_json;

namespace {

constexpr int kOk = 0;
constexpr int kInfra = 1;
constexpr int kInvalid = 2;

// Input problems the user can fix; everything else maps to exit 1.
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Writes to `path`, or stdout when empty.
template <typename Fn>
void emit(const std::string& path, Fn&& write) {
  if (path.empty()) {
    write(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  write(f);
  if (!f) throw std::runtime_error("write failed: " + path);
}

GlobalConfig config_or_default(const std::string& path) {
  return path.empty() ? GlobalConfig{} : load_config(path);
}

ojson response_json(const StructuredResponse& sr) {
  ojson j;
  j["judge_analysis"] = sr.judge_analysis;
  j["mode"] = mode_label(sr.mode);
  j["thinking"] = sr.thinking ? ojson(*sr.thinking) : ojson();
  j["answer"] = sr.answer;
  return j;
}

int cmd_parse(const std::string& file, bool lenient) {
  const std::string text = read_file(file);
  try {
    std::cout << response_json(parse_response(text, !lenient)).dump(2) << '\n';
    return kOk;
  } catch (const ParseError& e) {
    ojson j;
    j["error"] = to_string(e.kind());
    j["byte_offset"] = e.byte_offset();
    std::cout << j.dump(2) << '\n';
    std::cerr << "parse: " << e.what() << '\n';
    return kInvalid;
  }
}

int cmd_verify(const std::string& domain, const std::string& answer_file, const std::string& reference_file,
               const std::string& config_file) {
  const auto cfg = config_or_default(config_file);
  const Domain d = domain_from_label(domain);
  ReferenceSpec spec = reference_from_json(nlohmann::json::parse(read_file(reference_file)));
  if (auto* code = std::get_if<CodeTests>(&spec)) {
    // Config supplies defaults only where the reference left them unset.
    if (code->run_command_template.empty()) code->run_command_template = cfg.sandbox.run_command_template;
    if (code->compile_command_template.empty()) code->compile_command_template = cfg.sandbox.compile_command_template;
  }
  ProcessSandbox sandbox;
  const auto out = verify(d, read_file(answer_file), spec, sandbox);
  ojson j;
  j["reward"] = out.reward;
  j["detail"] = out.detail;
  std::cout << j.dump(2) << '\n';
  return kOk;
}

struct SynthArgs {
  std::string pool;
  std::size_t synthetic_pool = 0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string out, stats, config;
  std::optional<double> think_on_fraction;
};

int cmd_synth(const SynthArgs& a) {
  auto cfg = config_or_default(a.config);
  if (a.think_on_fraction) cfg.mix.think_on_fraction = *a.think_on_fraction;
  cfg.mix.validate();
  if (a.pool.empty() == (a.synthetic_pool == 0)) throw InputError("synth: give exactly one of --pool or --synthetic-pool");
  const auto pool = a.pool.empty() ? make_synthetic_pool(a.synthetic_pool, a.seed) : read_pool_jsonl(a.pool);
  auto backend = make_backend(cfg.backend, a.seed);
  const auto result = build_corpus(pool, cfg.mix, *backend, a.n, a.seed);
  emit(a.out, [&](std::ostream& os) { write_corpus_jsonl(os, result.examples); });
  const std::string stats = stats_to_json(result.stats).dump(2) + "\n";
  if (!a.stats.empty()) emit(a.stats, [&](std::ostream& os) { os << stats; });
  else if (!a.out.empty()) std::cout << stats;
  else std::cerr << stats;
  return kOk;
}

int cmd_simulate(const std::string& config, const std::string& corpus_file, const std::string& out,
                 std::optional<std::uint64_t> seed) {
  auto cfg = config_or_default(config);
  if (seed) cfg.train.seed = *seed;
  const auto corpus = corpus_file.empty() ? sim::default_sim_corpus(cfg.train.seed) : read_pool_jsonl(corpus_file);
  const auto result = sim::run_training(corpus, cfg.env, cfg.train, cfg.reward);
  emit(out, [&](std::ostream& os) { sim::write_metrics_csv(os, result.metrics); });
  const auto& first = result.metrics.rows.front();
  const auto& last = result.metrics.rows.back();
  std::cerr << "think_on_rate " << first.think_on_rate << " -> " << last.think_on_rate << ", mean_tokens "
            << first.mean_tokens << " -> " << last.mean_tokens << '\n';
  return kOk;
}

int cmd_saturation(const std::string& manifest, std::optional<double> fraction, std::optional<double> threshold,
                   const std::string& target, bool verbose) {
  if (fraction.has_value() == threshold.has_value())
    throw InputError("saturation: give exactly one of --fraction or --threshold");
  const auto m = upscale::load_manifest(manifest);
  const auto report = upscale::analyze_layers(m.layers);
  const upscale::SelectMode mode = fraction ? upscale::SelectMode{upscale::FractionSelect{*fraction}}
                                            : upscale::SelectMode{upscale::ThresholdSelect{*threshold}};
  const auto plan = upscale::build_upscale_plan(m.depth, upscale::select_saturated(report, mode));
  ojson j;
  j["report"] = upscale::to_json(report, verbose);
  j["plan"] = upscale::to_json(plan);
  emit(target, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  return kOk;
}

int cmd_uld_check(const std::string& teacher, const std::string& student) {
  const distill::LogitMatrix t(upscale::read_csv_matrix(teacher));
  const distill::LogitMatrix s(upscale::read_csv_matrix(student));
  const auto r = distill::uld_loss(t, s);
  ojson j;
  j["loss"] = r.loss;
  j["per_position"] = r.per_position;
  j["max_gradient_check_error"] = distill::max_gradient_check_error(t, s);
  std::cout << j.dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AutoThink toolkit: format, verifiers, corpus builder, simulator, distillation and upscaling math"};
  app.require_subcommand(1);

  std::string file, domain, answer, reference, config, corpus, out, manifest, target, teacher, student;
  bool lenient = false, verbose = false;
  std::optional<double> fraction, threshold;
  std::optional<std::uint64_t> sim_seed;
  SynthArgs synth;

  auto* parse = app.add_subcommand("parse", "Parse an AutoThink document and print it as JSON");
  parse->add_option("file", file, "Document to parse")->required()->check(CLI::ExistingFile);
  parse->add_flag("--lenient", lenient, "Recover from truncated or untidy documents");

  auto* ver = app.add_subcommand("verify", "Grade an answer against a reference");
  ver->add_option("--domain", domain, "math | code | science | general")->required();
  ver->add_option("--answer", answer, "File with the answer text")->required()->check(CLI::ExistingFile);
  ver->add_option("--reference", reference, "Reference spec JSON")->required()->check(CLI::ExistingFile);
  ver->add_option("--config", config, "Config JSON")->check(CLI::ExistingFile);

  auto* syn = app.add_subcommand("synth", "Build a cold-start corpus");
  auto* pool_opt = syn->add_option("--pool", synth.pool, "Query pool JSONL")->check(CLI::ExistingFile);
  syn->add_option("--synthetic-pool", synth.synthetic_pool, "Generate a synthetic pool of this size")->excludes(pool_opt);
  syn->add_option("--n", synth.n, "Corpus size")->required();
  syn->add_option("--seed", synth.seed, "Seed");
  syn->add_option("--out", synth.out, "Corpus JSONL (default stdout)");
  syn->add_option("--stats", synth.stats, "Stats JSON");
  syn->add_option("--think-on-fraction", synth.think_on_fraction, "Override mix.think_on_fraction");
  syn->add_option("--config", synth.config, "Config JSON")->check(CLI::ExistingFile);

  auto* sim_cmd = app.add_subcommand("simulate", "Train the toy gating policy and write metrics CSV");
  sim_cmd->add_option("--config", config, "Config JSON")->check(CLI::ExistingFile);
  sim_cmd->add_option("--corpus", corpus, "Query pool JSONL (default: built-in mixed corpus)")->check(CLI::ExistingFile);
  sim_cmd->add_option("--out", out, "Metrics CSV (default stdout)");
  sim_cmd->add_option("--seed", sim_seed, "Overrides train.seed");

  auto* sat = app.add_subcommand("saturation", "Score layer saturation and plan duplication");
  sat->add_option("--manifest", manifest, "Activation manifest JSON")->required()->check(CLI::ExistingFile);
  auto* frac_opt = sat->add_option("--fraction", fraction, "Duplicate the top fraction of layers");
  sat->add_option("--threshold", threshold, "Duplicate layers with score >= threshold")->excludes(frac_opt);
  sat->add_option("--target-report", target, "Output JSON (default stdout)");
  sat->add_flag("--verbose", verbose, "Include per-token cosines");

  auto* uld = app.add_subcommand("uld-check", "ULD loss and gradient check for two logit CSVs");
  uld->add_option("--teacher", teacher, "Teacher logits CSV")->required()->check(CLI::ExistingFile);
  uld->add_option("--student", student, "Student logits CSV")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kInvalid;
  }

  try {
    if (parse->parsed()) return cmd_parse(file, lenient);
    if (ver->parsed()) return cmd_verify(domain, answer, reference, config);
    if (syn->parsed()) return cmd_synth(synth);
    if (sim_cmd->parsed()) return cmd_simulate(config, corpus, out, sim_seed);
    if (sat->parsed()) return cmd_saturation(manifest, fraction, threshold, target, verbose);
    if (uld->parsed()) return cmd_uld_check(teacher, student);
  } catch (const SandboxUnavailable& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInfra;
  } catch (const BackendFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInfra;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const math::SyntaxError& e) {
    std::cerr << "error: reference expression: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInfra;
  }
  return kInvalid;
}
