// Licensed under the Apache License 2.0 (see LICENSE file).

#include "tsync/tsync.h"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <new>
#include <string>

#include "json.hpp"
#include "tsync/config.hpp"
#include "tsync/csv.hpp"
#include "tsync/errors.hpp"
#include "tsync/parallel.hpp"
#include "tsync/rng.hpp"

struct tsync_config {
  tsync::Config cfg;
};

struct tsync_model {
  tsync::embed::EmbeddingModel model;
};

namespace {

namespace fs = std::filesystem;
using namespace tsync;

thread_local std::string g_last_error;

std::mutex g_log_mutex;
tsync_log_fn g_log_fn = nullptr;
void* g_log_user = nullptr;

void log_line(const std::string& line) {
  std::lock_guard lock(g_log_mutex);
  if (g_log_fn) g_log_fn(line.c_str(), g_log_user);
}

template <typename F>
tsync_status guarded(F&& body) {
  g_last_error.clear();
  try {
    return body();
  } catch (const NumericalError& e) {
    g_last_error = e.what();
    return TSYNC_ERR_NUMERIC;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return TSYNC_ERR_DATA;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return TSYNC_ERR_DATA;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw ArgumentError(std::string(what) + " must not be null");
}

Config config_of(const tsync_config* cfg) {
  Config c = cfg ? cfg->cfg : Config{};
  c.validate();
  return c;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create directory '" + dir + "'");
}

std::string stem(const char* path) { return fs::path(path).stem().string(); }

std::string in_dir(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

embed::EmbeddingModel load_model(const char* path) {
  require(path, "model path");
  return embed::read_checkpoint(path);
}

MatrixF load_journey(const char* path, const embed::EmbeddingModel& model) {
  require(path, "journey path");
  MatrixF frames = corpus::read_journey_file(path);
  if (frames.cols() != model.input_dim())
    throw DataError(std::string(path) + ": feature dimension " + std::to_string(frames.cols()) +
                    " does not match the model input " + std::to_string(model.input_dim()));
  return frames;
}

costmat::CostMatrix coarse_matrix(const embed::EmbeddingModel& model, const MatrixF& x, const MatrixF& y,
                                  std::size_t stride) {
  return costmat::build_cost_matrix(embed::embed_sequence(model, x, stride), embed::embed_sequence(model, y, stride));
}

}  // namespace

extern "C" {

const char* tsync_last_error(void) { return g_last_error.c_str(); }

const char* tsync_version(void) { return "1.0.0"; }

void tsync_set_log(tsync_log_fn fn, void* user) {
  std::lock_guard lock(g_log_mutex);
  g_log_fn = fn;
  g_log_user = user;
}

tsync_config* tsync_config_new(void) { return new (std::nothrow) tsync_config{}; }

void tsync_config_free(tsync_config* cfg) { delete cfg; }

tsync_status tsync_config_load(tsync_config* cfg, const char* path) {
  return guarded([&] {
    require(cfg, "config");
    require(path, "config path");
    cfg->cfg = load_config(path);
    return TSYNC_OK;
  });
}

tsync_status tsync_config_set(tsync_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require(cfg, "config");
    require(key, "key");
    require(value, "value");
    cfg->cfg.set(key, value);
    return TSYNC_OK;
  });
}

tsync_status tsync_config_get(const tsync_config* cfg, const char* key, char* buf, size_t len) {
  return guarded([&] {
    require(cfg, "config");
    require(key, "key");
    require(buf, "buffer");
    if (len == 0) throw ArgumentError("buffer length must be positive");
    const std::string v = cfg->cfg.get(key);
    const std::size_t n = std::min(v.size(), len - 1);
    std::memcpy(buf, v.data(), n);
    buf[n] = '\0';
    return TSYNC_OK;
  });
}

tsync_status tsync_config_write(const tsync_config* cfg, const char* path) {
  return guarded([&] {
    require(cfg, "config");
    require(path, "config path");
    io::write_text(path, cfg->cfg.to_text());
    return TSYNC_OK;
  });
}

tsync_status tsync_model_load(const char* path, tsync_model** out) {
  return guarded([&] {
    require(out, "output handle");
    *out = nullptr;
    auto m = std::make_unique<tsync_model>();
    m->model = load_model(path);
    *out = m.release();
    return TSYNC_OK;
  });
}

void tsync_model_free(tsync_model* model) { delete model; }

size_t tsync_model_input_dim(const tsync_model* model) { return model ? model->model.input_dim() : 0; }

size_t tsync_model_output_dim(const tsync_model* model) { return model ? model->model.output_dim() : 0; }

tsync_status tsync_model_embed(const tsync_model* model, const float* features, float* out) {
  return guarded([&] {
    require(model, "model");
    require(features, "features");
    require(out, "output");
    const auto v = embed::embed(model->model, std::span<const float>(features, model->model.input_dim()));
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
    return TSYNC_OK;
  });
}

tsync_status tsync_generate(const tsync_config* cfg, const char* out_dir) {
  return guarded([&] {
    require(out_dir, "output directory");
    const Config c = config_of(cfg);
    const auto synthetic = corpus::generate_corpus(c.corpus);
    const auto stored = corpus::to_stored(synthetic);
    corpus::write_corpus(stored, out_dir);
    log_line("routes=" + std::to_string(synthetic.routes.size()) +
             " journeys=" + std::to_string(stored.journeys.size()) +
             " frames_per_journey=" + std::to_string(c.corpus.frames_per_journey) +
             " ground_truth_pairs=" + std::to_string(stored.ground_truth.size()));
    return TSYNC_OK;
  });
}

tsync_status tsync_train(const tsync_config* cfg, const char* corpus_dir, const char* model_path,
                         const char* report_dir) {
  return guarded([&] {
    require(corpus_dir, "corpus directory");
    require(model_path, "model path");
    const Config c = config_of(cfg);
    const auto corpus = corpus::read_corpus(corpus_dir);

    std::string reports = report_dir ? report_dir : fs::path(model_path).parent_path().string();
    if (reports.empty()) reports = ".";
    ensure_dir(reports);
    const auto model_parent = fs::path(model_path).parent_path();
    if (!model_parent.empty()) ensure_dir(model_parent.string());

    const std::string report_path = in_dir(reports, "reports.jsonl");
    io::write_text(report_path, "");
    curriculum::CurriculumHooks hooks;
    hooks.on_labels = [&](std::size_t it, const std::vector<embed::TripletLabel>& labels) {
      curriculum::write_labels(labels, in_dir(reports, "labels_iter" + std::to_string(it) + ".csv"));
    };
    hooks.on_report = [&](const curriculum::IterationReport& r) {
      const std::string line = curriculum::report_to_json(r);
      std::ofstream out(report_path, std::ios::app | std::ios::binary);
      out << line << "\n";
      if (!out) throw DataError("write failed on '" + report_path + "'");
      log_line(line);
    };
    const auto result = curriculum::run_curriculum(corpus, c.curriculum_config(), hooks);
    embed::write_checkpoint(result.model, model_path);
    return TSYNC_OK;
  });
}

tsync_status tsync_align(const tsync_config* cfg, const char* model_path, const char* journey_x,
                         const char* journey_y, const char* out_dir, unsigned flags) {
  return guarded([&] {
    require(out_dir, "output directory");
    const Config c = config_of(cfg);
    const auto cc = c.curriculum_config();
    const auto model = load_model(model_path);
    const MatrixF fx = load_journey(journey_x, model);
    const MatrixF fy = load_journey(journey_y, model);
    ensure_dir(out_dir);
    const std::string tag = stem(journey_x) + "_" + stem(journey_y);

    const auto raw = coarse_matrix(model, fx, fy, c.stride);
    if (flags & TSYNC_ALIGN_DUMP_MATRIX) costmat::write_matrix(raw, in_dir(out_dir, "matrix_" + tag + ".tscm"));
    if (flags & TSYNC_ALIGN_PGM) costmat::write_pgm(raw, in_dir(out_dir, "matrix_" + tag + ".pgm"));

    auto tour = tour::find_tour(raw, cc.tour);
    tour::write_tour(tour, in_dir(out_dir, "tour_" + tag + ".csv"));
    log_line("tour pairs=" + std::to_string(tour.pairs.size()) + " gaps=" + std::to_string(tour.gaps.size()) +
             " coverage=" + io::format_fixed(tour.coverage(), 3));
    if (tour.empty()) {
      g_last_error = "no matching tour between '" + stem(journey_x) + "' and '" + stem(journey_y) + "'";
      return TSYNC_NO_MATCH;
    }
    if (!(flags & TSYNC_ALIGN_COARSE_ONLY)) {
      const auto dx = embed::embed_sequence(model, fx, 1), dy = embed::embed_sequence(model, fy, 1);
      const auto fine = refine::smooth_alignment(refine::refine_tour(tour, dx, dy, cc.chunk), cc.smooth);
      refine::write_alignment(fine, in_dir(out_dir, "align_" + tag + ".csv"));
      log_line("fine pairs=" + std::to_string(fine.pairs.size()));
    }
    return TSYNC_OK;
  });
}

tsync_status tsync_sync(const tsync_config* cfg, const char* model_path, const char* corpus_dir,
                        const char* reference, const char* out_dir) {
  return guarded([&] {
    require(corpus_dir, "corpus directory");
    require(reference, "reference id");
    require(out_dir, "output directory");
    const Config c = config_of(cfg);
    const auto cc = c.curriculum_config();
    const auto model = load_model(model_path);
    const auto corpus = corpus::read_corpus(corpus_dir);
    const std::string ref = reference;
    if (!corpus.find(ref)) throw DataError("reference journey '" + ref + "' is not in " + std::string(corpus_dir));

    const std::size_t n = corpus.journeys.size();
    std::vector<std::string> ids(n);
    std::vector<embed::DescriptorSeq> coarse(n);
    for (std::size_t j = 0; j < n; ++j) {
      ids[j] = corpus.journeys[j].id;
      if (corpus.journeys[j].frames.cols() != model.input_dim())
        throw DataError("journey '" + ids[j] + "' does not match the model input dimension");
    }
    parallel_for(n, [&](std::size_t j) { coarse[j] = embed::embed_sequence(model, corpus.journeys[j].frames, c.stride); });
    auto slot = [&](const std::string& id) {
      return static_cast<std::size_t>(std::find(ids.begin(), ids.end(), id) - ids.begin());
    };

    curriculum::CollectionIndex index(ids);
    std::size_t direct = 0;
    auto matcher = [&](const std::string& x, const std::string& y) {
      ++direct;
      auto tour = tour::find_tour(costmat::build_cost_matrix(coarse[slot(x)], coarse[slot(y)]), cc.tour);
      return index.update(x, y, std::move(tour), cc.min_coverage);
    };
    const std::size_t budget = curriculum::pair_budget(n, cc.budget);
    curriculum::plan_pairs(index, ids, budget, matcher, mix_seed(cc.seed, 77));

    ensure_dir(out_dir);
    nlohmann::ordered_json report;
    report["reference"] = ref;
    report["journeys"] = n;
    report["budget"] = budget;
    report["direct_alignments"] = direct;
    report["classes"] = index.classes();

    std::vector<std::string> aligned, unaligned;
    const auto full_ref = embed::embed_sequence(model, corpus.find(ref)->frames, 1);
    for (const auto& id : ids) {
      if (id == ref || !index.same_class(id, ref)) continue;
      const auto tour = curriculum::tour_via_index(index, ref, id, cc.tour.tolerance);
      if (!tour || tour->empty()) {
        unaligned.push_back(id);
        continue;
      }
      const auto full = embed::embed_sequence(model, corpus.find(id)->frames, 1);
      const auto fine = refine::smooth_alignment(refine::refine_tour(*tour, full_ref, full, cc.chunk), cc.smooth);
      tour::write_tour(*tour, in_dir(out_dir, "tour_" + ref + "_" + id + ".csv"));
      refine::write_alignment(fine, in_dir(out_dir, "align_" + ref + "_" + id + ".csv"));
      aligned.push_back(id);
    }
    report["aligned"] = aligned;
    report["composition_empty"] = unaligned;
    io::write_text(in_dir(out_dir, "sync_report.json"), report.dump(2) + "\n");
    log_line("direct alignments=" + std::to_string(direct) + " budget=" + std::to_string(budget) +
             " classes=" + std::to_string(index.class_count()) + " aligned=" + std::to_string(aligned.size()));
    if (aligned.empty()) {
      g_last_error = "reference '" + ref + "' matched no other journey";
      return TSYNC_NO_MATCH;
    }
    return TSYNC_OK;
  });
}

tsync_status tsync_eval(const char* alignment_csv, const char* ground_truth_csv, size_t tolerance, int swap,
                        tsync_metrics* out) {
  return guarded([&] {
    require(alignment_csv, "alignment path");
    require(ground_truth_csv, "ground truth path");
    require(out, "metrics output");
    const auto alignment = refine::read_alignment(alignment_csv);
    const auto gt = corpus::read_ground_truth(ground_truth_csv, "a", "b");
    std::vector<std::pair<std::size_t, std::size_t>> predicted = alignment.pairs;
    if (swap)
      for (auto& [x, y] : predicted) std::swap(x, y);
    const auto m = eval::evaluate(predicted, gt, tolerance);
    *out = {m.coverage, m.hit_rate, m.mean_offset, m.median_offset, m.predicted, m.comparable};
    return TSYNC_OK;
  });
}

tsync_status tsync_dump_matrix(const tsync_config* cfg, const char* model_path, const char* journey_x,
                               const char* journey_y, int decorrelated, const char* matrix_path,
                               const char* pgm_path) {
  return guarded([&] {
    require(matrix_path, "matrix path");
    const Config c = config_of(cfg);
    const auto model = load_model(model_path);
    auto m = coarse_matrix(model, load_journey(journey_x, model), load_journey(journey_y, model), c.stride);
    if (decorrelated) {
      const std::size_t small = std::min(m.rows(), m.cols());
      m = costmat::decorrelate(m, std::min(c.rank, small > 0 ? small - 1 : 0));
    }
    costmat::write_matrix(m, matrix_path);
    if (pgm_path) costmat::write_pgm(m, pgm_path);
    log_line("matrix " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
             (decorrelated ? " decorrelated" : " raw"));
    return TSYNC_OK;
  });
}

}  // extern "C"
