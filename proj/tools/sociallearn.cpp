// sociallearn: landscape gen | baselines | train | eval | probe | report
//
// Exit codes: 0 ok, 2 configuration error, 3 runtime failure.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sociallearn/experiment.hpp"

namespace sl = sociallearn;

namespace {

struct Common {
  std::string config;
  std::string preset;
  std::string out;
  std::string checkpoint;
  std::vector<std::string> sets;
  long long seed = -1;
  int workers = 0;
};

sl::ExperimentConfig resolve(const Common& c) {
  sl::ExperimentConfig cfg;
  if (!c.config.empty()) {
    cfg = sl::load_config_file(c.config, c.preset);
  } else {
    cfg = sl::load_config("", "<defaults>", c.preset.empty() ? "default" : c.preset);
  }
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw sl::ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
    sl::set_key(cfg, sl::detail::trim(kv.substr(0, eq)), sl::detail::trim(kv.substr(eq + 1)));
  }
  if (c.seed >= 0) cfg.seed = static_cast<std::uint64_t>(c.seed);
  if (c.workers > 0) cfg.workers = c.workers;
  if (!c.checkpoint.empty()) cfg.checkpoint = c.checkpoint;
  sl::validate(cfg);
  return cfg;
}

void need_out(const Common& c) {
  if (c.out.empty()) throw sl::ConfigError("--out is required");
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Social-learning laboratory: NK landscapes, baseline strategies, policy training and probing"};
  app.require_subcommand(1);
  Common c;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", c.config, "key = value config file (schema 1)");
    sub->add_option("--preset", c.preset, "named config fragment: " + sl::preset_names());
    sub->add_option("--seed", c.seed, "master seed (overrides the config)");
    sub->add_option("--out", c.out, "output run directory");
    sub->add_option("--workers", c.workers, "simulation threads");
    sub->add_option("--set", c.sets, "KEY=VALUE override, repeatable");
  };

  auto* landscape = app.add_subcommand("landscape", "landscape tools");
  landscape->require_subcommand(1);
  auto* gen = landscape->add_subcommand("gen", "generate the batch landscapes");
  common(gen);

  auto* baselines = app.add_subcommand("baselines", "run the baseline strategy tournament");
  common(baselines);

  auto* train = app.add_subcommand("train", "train a policy");
  common(train);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint as a strategy");
  common(eval);
  eval->add_option("--checkpoint", c.checkpoint, "checkpoint file");

  std::string kind, p0, oracle;
  int stride = 0;
  auto* probe = app.add_subcommand("probe", "BI/CF template probes, voxel diagrams and region averages");
  common(probe);
  probe->add_option("--checkpoint", c.checkpoint, "checkpoint file");
  probe->add_option("--oracle", oracle, "probe an analytic baseline (e.g. BI-R) instead of a checkpoint");
  probe->add_option("--kind", kind, "bi | cf | both");
  probe->add_option("--p0", p0, "self payoff, or 'sweep'");
  probe->add_option("--stride", stride, "voxel stride");

  std::vector<std::string> inputs;
  auto* report = app.add_subcommand("report", "collect finished runs into one ranked table");
  common(report);
  report->add_option("--in", inputs, "run directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (!kind.empty()) c.sets.push_back("probe_kind=" + kind);
    if (!p0.empty()) c.sets.push_back("probe_p0=" + p0);
    if (stride > 0) c.sets.push_back("probe_stride=" + std::to_string(stride));
    const sl::ExperimentConfig cfg = resolve(c);
    need_out(c);
    if (gen->parsed()) {
      sl::cmd_landscape_gen(cfg, c.out);
    } else if (baselines->parsed()) {
      const auto rows = sl::cmd_baselines(cfg, c.out, [](const std::string& s) { log_line("baseline " + s); });
      std::cout << sl::summary_csv(rows);
    } else if (train->parsed()) {
      const int every = std::max(1, cfg.train.max_epochs / 50);
      sl::cmd_train(cfg, c.out, [&](const sl::EpochMetrics& m) {
        if (m.epoch % every == 0) {
          char buf[128];
          std::snprintf(buf, sizeof(buf), "epoch %d  K %d  payoff %.3f  entropy %.4f", m.epoch, m.k, m.avg_mean_payoff,
                        m.entropy);
          log_line(buf);
        }
      });
    } else if (eval->parsed()) {
      const auto st = sl::cmd_eval(cfg, c.out);
      std::cout << st.summary_json().dump(2) << '\n';
    } else if (probe->parsed()) {
      sl::cmd_probe(cfg, c.out, oracle);
    } else if (report->parsed()) {
      std::cout << sl::cmd_report(cfg, inputs, c.out);
    }
  } catch (const sl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
