// Licensed under the Apache License 2.0 (see LICENSE file).

#include "tsync/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tsync/binary_io.hpp"
#include "tsync/csv.hpp"
#include "tsync/errors.hpp"
#include "tsync/rng.hpp"

namespace tsync::corpus {
namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kJourneyFormatVersion = 1;
constexpr const char* kGtHeader = "frame_a,frame_b";

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::string journey_filename(std::string_view id) { return std::string(id) + ".tsrf"; }

}  // namespace

Route generate_route(std::size_t length, std::size_t feature_dim, std::uint64_t seed,
                     double coherence, double max_step_fraction) {
  if (length < 2) throw ArgumentError("route length must be >= 2");
  if (feature_dim < 1) throw ArgumentError("feature_dim must be >= 1");
  if (!(coherence >= 0.0 && coherence < 1.0)) throw ArgumentError("coherence must be in [0, 1)");

  Rng rng(seed);
  Route route{"", MatrixD(length, feature_dim)};
  for (std::size_t c = 0; c < feature_dim; ++c) route.landmarks(0, c) = gaussian(rng);

  // Mean-reverting walk: the stationary distribution is N(0, I), so the
  // feature norm stays around sqrt(dim) however long the route is.
  const double innovation = std::sqrt(1.0 - coherence * coherence);
  std::vector<double> step(feature_dim);
  for (std::size_t i = 1; i < length; ++i) {
    auto prev = route.landmarks.row(i - 1);
    for (std::size_t c = 0; c < feature_dim; ++c)
      step[c] = (coherence - 1.0) * prev[c] + innovation * gaussian(rng);
    const double bound = max_step_fraction * std::max(norm(prev), 1e-12);
    const double n = norm(step);
    const double scale = n > bound ? bound / n : 1.0;
    auto cur = route.landmarks.row(i);
    for (std::size_t c = 0; c < feature_dim; ++c) cur[c] = prev[c] + scale * step[c];
  }
  return route;
}

std::vector<double> positions_from_profile(const SpeedProfile& profile, std::size_t n_frames) {
  std::vector<double> pos(n_frames);
  double p = profile.start_position;
  std::size_t seg = 0, used = 0;
  for (std::size_t t = 0; t < n_frames; ++t) {
    pos[t] = p;
    double speed = 0.0;
    if (!profile.segments.empty()) {
      while (seg + 1 < profile.segments.size() && used >= profile.segments[seg].frames) {
        ++seg;
        used = 0;
      }
      speed = profile.segments[seg].speed;
      ++used;
    }
    if (speed < 0.0) throw ArgumentError("speed profile must not reverse");
    p += speed;
  }
  return pos;
}

std::vector<double> interpolate_landmark(const Route& route, double position) {
  const std::size_t last = route.length() - 1;
  std::vector<double> out(route.feature_dim());
  if (position >= static_cast<double>(last)) {
    auto r = route.landmarks.row(last);
    std::copy(r.begin(), r.end(), out.begin());
    return out;
  }
  const auto i = static_cast<std::size_t>(std::floor(position));
  const double frac = position - static_cast<double>(i);
  auto a = route.landmarks.row(i);
  auto b = route.landmarks.row(i + 1);
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = a[c] + frac * (b[c] - a[c]);
  return out;
}

JourneyData generate_journey(const Route& route, std::string journey_id, std::size_t n_frames,
                             const SpeedProfile& profile, const Appearance& appearance,
                             std::uint64_t seed) {
  if (n_frames < 1) throw ArgumentError("journey needs at least one frame");
  const std::size_t k = route.feature_dim();
  if (!appearance.bias.empty() && appearance.bias.size() != k)
    throw ArgumentError("appearance bias has wrong dimension");
  if (appearance.noise_sigma < 0.0) throw ArgumentError("noise sigma must be >= 0");

  JourneyData out;
  out.journey.id = std::move(journey_id);
  out.journey.route_id = route.id;
  out.journey.appearance_seed = seed;
  out.journey.appearance = appearance;
  out.journey.position_of_frame = positions_from_profile(profile, n_frames);
  const double max_pos = static_cast<double>(route.length() - 1);
  for (double p : out.journey.position_of_frame)
    if (p < 0.0 || p > max_pos + 1e-9)
      throw ArgumentError("speed profile leaves the route bounds");

  Rng rng(seed);
  std::vector<double> drift_dir(k);
  for (double& v : drift_dir) v = gaussian(rng);
  const double phase = uniform_real(rng, 0.0, 2.0 * 3.14159265358979323846);

  std::vector<bool> replaced(n_frames, false);
  for (const auto& block : appearance.noise_blocks)
    for (std::size_t t = block.start; t < std::min(n_frames, block.start + block.length); ++t)
      replaced[t] = true;

  out.frames = MatrixF(n_frames, k);
  for (std::size_t t = 0; t < n_frames; ++t) {
    auto row = out.frames.row(t);
    if (replaced[t]) {
      for (std::size_t c = 0; c < k; ++c) row[c] = static_cast<float>(gaussian(rng));
      continue;
    }
    const auto base = interpolate_landmark(route, out.journey.position_of_frame[t]);
    const double drift = appearance.drift_amplitude *
                         std::sin(2.0 * 3.14159265358979323846 * static_cast<double>(t) /
                                      appearance.drift_period + phase);
    for (std::size_t c = 0; c < k; ++c) {
      double v = base[c];
      if (!appearance.bias.empty()) v += appearance.bias[c];
      if (appearance.drift_amplitude != 0.0) v += drift * drift_dir[c];
      if (appearance.noise_sigma > 0.0) v += appearance.noise_sigma * gaussian(rng);
      row[c] = static_cast<float>(v);
    }
  }
  return out;
}

std::optional<GroundTruthAlignment> ground_truth_alignment(const Journey& a, const Journey& b) {
  if (a.route_id != b.route_id) return std::nullopt;
  const auto& pa = a.position_of_frame;
  const auto& pb = b.position_of_frame;
  if (pa.empty() || pb.empty()) return std::nullopt;
  const double lo = pb.front(), hi = pb.back();
  if (pa.back() < lo || pa.front() > hi) return std::nullopt;

  GroundTruthAlignment gt{a.id, b.id, {}};
  for (std::size_t t = 0; t < pa.size(); ++t) {
    const double p = pa[t];
    if (p < lo || p > hi) continue;
    // First b-frame with position >= p; the nearest is it or its predecessor.
    auto it = std::lower_bound(pb.begin(), pb.end(), p);
    std::size_t best = static_cast<std::size_t>(it - pb.begin());
    if (best == pb.size()) best = pb.size() - 1;
    if (best > 0) {
      // Ties go to the lower index, and among equal positions lower_bound
      // already returned the first one.
      const std::size_t prev = best - 1;
      const double d_prev = std::abs(pb[prev] - p);
      if (d_prev <= std::abs(pb[best] - p)) {
        best = prev;
        while (best > 0 && pb[best - 1] == pb[best]) --best;
      }
    }
    if (std::abs(pb[best] - p) <= kPairingTolerance) gt.pairs.emplace_back(t, best);
  }
  if (gt.pairs.empty()) return std::nullopt;
  return gt;
}

// ---------------------------------------------------------------------------

SyntheticCorpus generate_corpus(const CorpusParams& p) {
  if (p.n_routes < 1 || p.journeys_per_route < 1)
    throw ArgumentError("corpus needs at least one route and one journey");
  if (p.frames_per_journey < 2) throw ArgumentError("journeys need at least two frames");

  SyntheticCorpus corpus;
  corpus.params = p;
  std::size_t journey_counter = 0;
  for (std::size_t r = 0; r < p.n_routes; ++r) {
    Route route = generate_route(p.route_length, p.feature_dim, mix_seed(p.seed, r),
                                 p.route_coherence);
    route.id = "r" + std::to_string(r);
    for (std::size_t j = 0; j < p.journeys_per_route; ++j, ++journey_counter) {
      Rng rng(mix_seed(p.seed, 1000 + journey_counter));
      const std::size_t n = p.frames_per_journey;

      SpeedProfile profile;
      std::size_t covered = 0;
      while (covered < n) {
        const std::size_t len = std::min<std::size_t>(uniform_index(rng, 300, 800), n - covered);
        profile.segments.push_back(
            {len, p.base_speed * uniform_real(rng, 1.0 - p.speed_jitter, 1.0 + p.speed_jitter)});
        covered += len;
      }
      if (p.plateau_frames > 0 && p.plateau_frames < n / 2) {
        // Split the segment containing the stop point and insert a stand-still.
        const std::size_t at = uniform_index(rng, n / 5, 4 * n / 5);
        std::vector<SpeedSegment> segs;
        std::size_t t0 = 0;
        for (const auto& s : profile.segments) {
          if (at >= t0 && at < t0 + s.frames) {
            if (at > t0) segs.push_back({at - t0, s.speed});
            segs.push_back({p.plateau_frames, 0.0});
            if (t0 + s.frames > at) segs.push_back({t0 + s.frames - at, s.speed});
          } else {
            segs.push_back(s);
          }
          t0 += s.frames;
        }
        profile.segments = std::move(segs);
      }
      const auto raw_pos = positions_from_profile(profile, n);
      const double travel = raw_pos.back() - raw_pos.front();
      const double room = static_cast<double>(p.route_length - 1);
      if (travel > room * 0.999) {
        const double scale = room * 0.999 / travel;
        for (auto& s : profile.segments) s.speed *= scale;
      }
      const double used = positions_from_profile(profile, n).back();
      profile.start_position = uniform_real(rng, 0.0, std::max(0.0, room - used));

      Appearance app;
      app.noise_sigma = p.noise_sigma;
      app.bias.resize(p.feature_dim);
      for (double& b : app.bias) b = p.bias_scale * gaussian(rng);
      app.drift_amplitude = p.drift_amplitude;
      app.drift_period = p.drift_period;
      const auto block_len = static_cast<std::size_t>(std::round(p.noise_block_fraction * n));
      if (block_len > 0 && block_len < n)
        app.noise_blocks.push_back({uniform_index(rng, 0, n - block_len), block_len});

      char id[16];
      std::snprintf(id, sizeof id, "j%02zu", journey_counter);
      corpus.journeys.push_back(
          generate_journey(route, id, n, profile, app, mix_seed(p.seed, 5000 + journey_counter)));
    }
    corpus.routes.push_back(std::move(route));
  }

  for (std::size_t a = 0; a < corpus.journeys.size(); ++a)
    for (std::size_t b = a + 1; b < corpus.journeys.size(); ++b)
      if (auto gt = ground_truth_alignment(corpus.journeys[a].journey, corpus.journeys[b].journey))
        corpus.ground_truth.push_back(std::move(*gt));
  return corpus;
}

// ---------------------------------------------------------------------------
// Persistence

const StoredJourney* StoredCorpus::find(std::string_view id) const {
  for (const auto& j : journeys)
    if (j.id == id) return &j;
  return nullptr;
}

StoredCorpus to_stored(const SyntheticCorpus& corpus) {
  StoredCorpus out;
  const auto& p = corpus.params;
  auto put = [&](const std::string& k, const auto& v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    out.meta[k] = ss.str();
  };
  put("format_version", kJourneyFormatVersion);
  put("seed", p.seed);
  put("n_routes", p.n_routes);
  put("journeys_per_route", p.journeys_per_route);
  put("route_length", p.route_length);
  put("feature_dim", p.feature_dim);
  put("frames_per_journey", p.frames_per_journey);
  put("base_speed", p.base_speed);
  put("speed_jitter", p.speed_jitter);
  put("plateau_frames", p.plateau_frames);
  put("route_coherence", p.route_coherence);
  put("noise_sigma", p.noise_sigma);
  put("bias_scale", p.bias_scale);
  put("drift_amplitude", p.drift_amplitude);
  put("drift_period", p.drift_period);
  put("noise_block_fraction", p.noise_block_fraction);
  for (const auto& j : corpus.journeys) {
    put("journey." + j.journey.id + ".route", j.journey.route_id);
    put("journey." + j.journey.id + ".appearance_seed", j.journey.appearance_seed);
    out.journeys.push_back({j.journey.id, j.frames});
  }
  std::sort(out.journeys.begin(), out.journeys.end(),
            [](const auto& x, const auto& y) { return x.id < y.id; });
  out.ground_truth = corpus.ground_truth;
  return out;
}

std::string ground_truth_filename(std::string_view a, std::string_view b) {
  return "gt_" + std::string(a) + "_" + std::string(b) + ".csv";
}

void write_journey_file(const MatrixF& frames, const std::string& path) {
  io::BinaryWriter w(path);
  w.magic("TSRF");
  w.u32(kJourneyFormatVersion);
  w.u32(static_cast<std::uint32_t>(frames.rows()));
  w.u32(static_cast<std::uint32_t>(frames.cols()));
  for (float v : frames.data()) w.f32(v);
  w.finish();
}

MatrixF read_journey_file(const std::string& path) {
  io::BinaryReader r(path);
  r.expect_magic("TSRF");
  if (const auto v = r.u32(); v != kJourneyFormatVersion)
    r.fail("unsupported version " + std::to_string(v));
  const std::uint32_t n = r.u32();
  const std::uint32_t k = r.u32();
  if (n == 0 || k == 0) r.fail("empty journey");
  MatrixF frames(n, k);
  for (float& v : frames.data()) {
    v = r.f32();
    if (!std::isfinite(v)) r.fail("non-finite feature");
  }
  r.expect_eof();
  return frames;
}

void write_ground_truth(const GroundTruthAlignment& gt, const std::string& path) {
  std::string text = std::string(kGtHeader) + "\n";
  for (const auto& [a, b] : gt.pairs) text += std::to_string(a) + "," + std::to_string(b) + "\n";
  io::write_text(path, text);
}

GroundTruthAlignment read_ground_truth(const std::string& path, std::string a, std::string b) {
  const auto table = io::read_csv(path, kGtHeader);
  GroundTruthAlignment gt{std::move(a), std::move(b), {}};
  gt.pairs.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto fa = table.as_int(i, 0), fb = table.as_int(i, 1);
    if (fa < 0 || fb < 0) throw DataError(path + ": negative frame index");
    gt.pairs.emplace_back(static_cast<std::size_t>(fa), static_cast<std::size_t>(fb));
  }
  return gt;
}

void write_corpus(const StoredCorpus& corpus, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create corpus directory '" + dir + "'");

  std::string meta;
  for (const auto& [k, v] : corpus.meta) meta += k + "=" + v + "\n";
  io::write_text((fs::path(dir) / "corpus.meta").string(), meta);
  for (const auto& j : corpus.journeys)
    write_journey_file(j.frames, (fs::path(dir) / journey_filename(j.id)).string());
  for (const auto& gt : corpus.ground_truth)
    write_ground_truth(gt, (fs::path(dir) / ground_truth_filename(gt.journey_a, gt.journey_b)).string());
}

StoredCorpus read_corpus(const std::string& dir) {
  const fs::path root(dir);
  const auto meta_path = root / "corpus.meta";
  std::ifstream in(meta_path);
  if (!in) throw DataError("missing '" + meta_path.string() + "'");

  StoredCorpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError(meta_path.string() + ": line " + std::to_string(line_no) + ": expected key=value");
    corpus.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }

  for (const auto& [key, value] : corpus.meta) {
    const std::string prefix = "journey.", suffix = ".route";
    if (key.starts_with(prefix) && key.ends_with(suffix)) {
      const std::string id = key.substr(prefix.size(), key.size() - prefix.size() - suffix.size());
      corpus.journeys.push_back({id, read_journey_file((root / journey_filename(id)).string())});
    }
  }
  if (corpus.journeys.empty()) throw DataError(meta_path.string() + ": no journeys listed");

  std::vector<fs::path> gt_files;
  for (const auto& entry : fs::directory_iterator(root)) {
    const auto name = entry.path().filename().string();
    if (name.starts_with("gt_") && name.ends_with(".csv")) gt_files.push_back(entry.path());
  }
  std::sort(gt_files.begin(), gt_files.end());
  for (const auto& path : gt_files) {
    const auto stem = path.stem().string().substr(3);
    // Journey ids never contain '_', so the split is unambiguous.
    const auto us = stem.find('_');
    if (us == std::string::npos) throw DataError(path.string() + ": cannot parse journey ids");
    corpus.ground_truth.push_back(
        read_ground_truth(path.string(), stem.substr(0, us), stem.substr(us + 1)));
  }
  std::sort(corpus.ground_truth.begin(), corpus.ground_truth.end(), [](const auto& x, const auto& y) {
    return std::tie(x.journey_a, x.journey_b) < std::tie(y.journey_a, y.journey_b);
  });
  return corpus;
}

}  // namespace tsync::corpus
