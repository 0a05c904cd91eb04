// Licensed under the Apache License 2.0 (see LICENSE file).

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tsync/tsync.h"

namespace {

using ConfigPtr = std::unique_ptr<tsync_config, decltype(&tsync_config_free)>;

int fail(tsync_status status) {
  std::fprintf(stderr, "tsync: %s\n", tsync_last_error());
  return static_cast<int>(status);
}

int report(tsync_status status) {
  if (status == TSYNC_OK) return 0;
  if (status == TSYNC_NO_MATCH) {
    std::fprintf(stderr, "tsync: %s\n", tsync_last_error());
    return 1;
  }
  return fail(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal synchronisation of journeys along shared routes"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  bool quiet = false;
  app.add_option("-c,--config", config_path, "key=value config file")->check(CLI::ExistingFile);
  app.add_option("-s,--set", overrides, "override one config key (key=value), repeatable");
  app.add_flag("-q,--quiet", quiet, "suppress progress output");

  std::string out_dir, corpus_dir, model_path, report_dir, x_path, y_path, reference, alignment, gt, matrix_path,
      pgm_path;
  bool dump_matrix = false, pgm = false, coarse_only = false, swap = false, decorrelated = false;
  std::size_t tolerance = 4;

  auto* generate = app.add_subcommand("generate", "write a synthetic corpus");
  generate->add_option("-o,--out", out_dir, "corpus directory")->required();

  auto* train = app.add_subcommand("train", "run the self-labelling curriculum and save a checkpoint");
  train->add_option("--corpus", corpus_dir, "corpus directory")->required();
  train->add_option("-m,--model", model_path, "checkpoint to write")->required();
  train->add_option("--reports", report_dir, "directory for reports.jsonl and label files");

  auto* align = app.add_subcommand("align", "align two journey files");
  align->add_option("-m,--model", model_path, "checkpoint")->required();
  align->add_option("-x", x_path, "journey X (.tsrf)")->required();
  align->add_option("-y", y_path, "journey Y (.tsrf)")->required();
  align->add_option("-o,--out", out_dir, "output directory")->required();
  align->add_flag("--dump-matrix", dump_matrix, "also write the coarse cost matrix");
  align->add_flag("--pgm", pgm, "also write the coarse cost matrix as PGM");
  align->add_flag("--coarse-only", coarse_only, "stop after the coarse tour");

  auto* sync = app.add_subcommand("sync", "synchronise a corpus to one reference journey");
  sync->add_option("-m,--model", model_path, "checkpoint")->required();
  sync->add_option("--corpus", corpus_dir, "corpus directory")->required();
  sync->add_option("-r,--reference", reference, "reference journey id")->required();
  sync->add_option("-o,--out", out_dir, "output directory")->required();

  auto* evaluate = app.add_subcommand("eval", "score an alignment against ground truth");
  evaluate->add_option("-a,--alignment", alignment, "alignment CSV")->required();
  evaluate->add_option("-g,--gt", gt, "ground-truth CSV")->required();
  auto* tol_opt = evaluate->add_option("-t,--tolerance", tolerance, "hit tolerance in frames");
  evaluate->add_flag("--swap", swap, "alignment X is the ground truth's frame_b");

  auto* dump = app.add_subcommand("dump-matrix", "write the coarse cost matrix of two journeys");
  dump->add_option("-m,--model", model_path, "checkpoint")->required();
  dump->add_option("-x", x_path, "journey X (.tsrf)")->required();
  dump->add_option("-y", y_path, "journey Y (.tsrf)")->required();
  dump->add_option("-o,--out", matrix_path, "matrix file (.tscm)")->required();
  dump->add_option("--pgm", pgm_path, "optional PGM image");
  dump->add_flag("--decorrelated", decorrelated, "remove the low-rank component first");

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

  if (!quiet)
    tsync_set_log([](const char* line, void*) { std::printf("%s\n", line), std::fflush(stdout); }, nullptr);

  ConfigPtr cfg(tsync_config_new(), &tsync_config_free);
  if (!cfg) return fail(TSYNC_ERR_DATA);
  if (!config_path.empty())
    if (auto s = tsync_config_load(cfg.get(), config_path.c_str()); s != TSYNC_OK) return fail(s);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "tsync: --set expects key=value, got '%s'\n", kv.c_str());
      return 2;
    }
    if (auto s = tsync_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()); s != TSYNC_OK)
      return fail(s);
  }

  if (*generate) return report(tsync_generate(cfg.get(), out_dir.c_str()));
  if (*train)
    return report(tsync_train(cfg.get(), corpus_dir.c_str(), model_path.c_str(),
                              report_dir.empty() ? nullptr : report_dir.c_str()));
  if (*align) {
    unsigned flags = 0;
    if (dump_matrix) flags |= TSYNC_ALIGN_DUMP_MATRIX;
    if (pgm) flags |= TSYNC_ALIGN_PGM;
    if (coarse_only) flags |= TSYNC_ALIGN_COARSE_ONLY;
    return report(tsync_align(cfg.get(), model_path.c_str(), x_path.c_str(), y_path.c_str(), out_dir.c_str(), flags));
  }
  if (*sync) return report(tsync_sync(cfg.get(), model_path.c_str(), corpus_dir.c_str(), reference.c_str(), out_dir.c_str()));
  if (*evaluate) {
    if (tol_opt->count() == 0) {
      char buf[32];
      if (auto s = tsync_config_get(cfg.get(), "eval.tolerance", buf, sizeof buf); s != TSYNC_OK) return fail(s);
      tolerance = std::stoul(buf);
    }
    tsync_metrics m{};
    if (auto s = tsync_eval(alignment.c_str(), gt.c_str(), tolerance, swap ? 1 : 0, &m); s != TSYNC_OK)
      return fail(s);
    std::printf(
        "{\"tolerance\":%zu,\"coverage\":%.6f,\"hit_rate\":%.6f,\"mean_offset\":%.6f,\"median_offset\":%.6f,"
        "\"predicted\":%zu,\"comparable\":%zu}\n",
        tolerance, m.coverage, m.hit_rate, m.mean_offset, m.median_offset, m.predicted, m.comparable);
    return 0;
  }
  if (*dump)
    return report(tsync_dump_matrix(cfg.get(), model_path.c_str(), x_path.c_str(), y_path.c_str(), decorrelated ? 1 : 0,
                                    matrix_path.c_str(), pgm_path.empty() ? nullptr : pgm_path.c_str()));
  return 2;
}
