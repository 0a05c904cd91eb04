// Licensed under the Apache License 2.0 (see LICENSE file).

#include "tsync/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "tsync/errors.hpp"

namespace tsync {
namespace {

struct Field {
  std::string key;
  std::function<void(Config&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end)
    throw ArgumentError("config key '" + key + "': cannot parse '" + text + "'");
  if constexpr (std::is_floating_point_v<T>)
    if (!std::isfinite(value)) throw ArgumentError("config key '" + key + "': value must be finite");
  return value;
}

template <typename T>
std::string format_number(T value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

template <typename T, typename Proj>
Field field(std::string key, Proj proj) {
  return {key, [key, proj](Config& c, const std::string& v) { proj(c) = parse_number<T>(key, v); },
          [proj](const Config& c) { return format_number<T>(proj(c)); }};
}

#define TSYNC_FIELD(type, key, member) field<type>(key, [](auto& c) -> auto& { return c.member; })

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f{
        TSYNC_FIELD(std::uint64_t, "corpus.seed", corpus.seed),
        TSYNC_FIELD(std::size_t, "corpus.routes", corpus.n_routes),
        TSYNC_FIELD(std::size_t, "corpus.journeys_per_route", corpus.journeys_per_route),
        TSYNC_FIELD(std::size_t, "corpus.route_length", corpus.route_length),
        TSYNC_FIELD(std::size_t, "corpus.feature_dim", corpus.feature_dim),
        TSYNC_FIELD(std::size_t, "corpus.frames", corpus.frames_per_journey),
        TSYNC_FIELD(double, "corpus.base_speed", corpus.base_speed),
        TSYNC_FIELD(double, "corpus.speed_jitter", corpus.speed_jitter),
        TSYNC_FIELD(std::size_t, "corpus.plateau_frames", corpus.plateau_frames),
        TSYNC_FIELD(double, "corpus.route_coherence", corpus.route_coherence),
        TSYNC_FIELD(double, "corpus.noise_sigma", corpus.noise_sigma),
        TSYNC_FIELD(double, "corpus.bias_scale", corpus.bias_scale),
        TSYNC_FIELD(double, "corpus.drift_amplitude", corpus.drift_amplitude),
        TSYNC_FIELD(double, "corpus.drift_period", corpus.drift_period),
        TSYNC_FIELD(double, "corpus.noise_block_fraction", corpus.noise_block_fraction),
        TSYNC_FIELD(std::size_t, "embed.hidden_dim", hidden_dim),
        TSYNC_FIELD(std::size_t, "embed.dim", descriptor_dim),
        TSYNC_FIELD(double, "embed.margin", margin),
        TSYNC_FIELD(double, "embed.learning_rate", learning_rate),
        TSYNC_FIELD(std::size_t, "embed.batch_size", batch_size),
        TSYNC_FIELD(std::size_t, "embed.epochs", epochs),
        TSYNC_FIELD(double, "video.fps", fps),
        TSYNC_FIELD(std::size_t, "video.stride", stride),
        TSYNC_FIELD(double, "tour.stripe_seconds", stripe_seconds),
        TSYNC_FIELD(double, "tour.overlap_seconds", overlap_seconds),
        TSYNC_FIELD(double, "tour.tolerance_seconds", tolerance_seconds),
        TSYNC_FIELD(std::size_t, "tour.rank", rank),
        TSYNC_FIELD(double, "tour.ratio", ratio),
        TSYNC_FIELD(std::size_t, "tour.epsilon", epsilon),
        TSYNC_FIELD(double, "tour.accept_fraction", accept_fraction),
        TSYNC_FIELD(std::size_t, "curriculum.iterations", iterations),
        TSYNC_FIELD(std::size_t, "curriculum.intra_window", intra_window),
        TSYNC_FIELD(std::size_t, "curriculum.negative_gap", negative_gap),
        TSYNC_FIELD(std::size_t, "curriculum.intra_labels", intra_labels),
        TSYNC_FIELD(std::size_t, "curriculum.inter_labels", inter_labels),
        TSYNC_FIELD(std::size_t, "curriculum.off_path_margin", off_path_margin),
        TSYNC_FIELD(std::size_t, "curriculum.transitive_pairs", transitive_pairs),
        TSYNC_FIELD(double, "curriculum.min_coverage", min_coverage),
        TSYNC_FIELD(std::size_t, "curriculum.budget", budget),
        TSYNC_FIELD(std::size_t, "refine.chunk", chunk),
        TSYNC_FIELD(double, "smooth.q", kalman_q),
        TSYNC_FIELD(double, "smooth.r", kalman_r),
        TSYNC_FIELD(std::size_t, "eval.tolerance", eval_tolerance),
        TSYNC_FIELD(std::uint64_t, "seed", seed),
    };
    std::sort(f.begin(), f.end(), [](const Field& a, const Field& b) { return a.key < b.key; });
    return f;
  }();
  return table;
}

#undef TSYNC_FIELD

const Field& find_field(const std::string& key) {
  const auto& f = fields();
  auto it = std::lower_bound(f.begin(), f.end(), key, [](const Field& a, const std::string& k) { return a.key < k; });
  if (it == f.end() || it->key != key) throw ArgumentError("unknown config key '" + key + "'");
  return *it;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

void Config::set(const std::string& key, const std::string& value) { find_field(key).set(*this, trim(value)); }

std::string Config::get(const std::string& key) const { return find_field(key).get(*this); }

const std::vector<std::string>& Config::keys() {
  static const std::vector<std::string> out = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return out;
}

void Config::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ArgumentError("invalid config: " + what);
  };
  require(corpus.n_routes > 0 && corpus.journeys_per_route > 0, "corpus needs routes and journeys");
  require(corpus.route_length > 1 && corpus.feature_dim > 0 && corpus.frames_per_journey > 1,
          "corpus sizes must be positive");
  require(corpus.base_speed > 0 && corpus.speed_jitter >= 0 && corpus.speed_jitter < 1, "speed out of range");
  require(corpus.noise_sigma >= 0 && corpus.bias_scale >= 0 && corpus.drift_amplitude >= 0,
          "corruption must be non-negative");
  require(corpus.drift_period > 0, "drift period must be positive");
  require(corpus.noise_block_fraction >= 0 && corpus.noise_block_fraction < 1, "noise block fraction in [0, 1)");
  require(corpus.route_coherence >= 0 && corpus.route_coherence < 1, "route coherence in [0, 1)");
  require(hidden_dim > 0 && descriptor_dim > 0, "model sizes must be positive");
  require(margin > 0 && learning_rate > 0 && batch_size > 0, "training parameters must be positive");
  require(fps > 0 && stride > 0, "fps and stride must be positive");
  require(stripe_seconds > 0 && overlap_seconds > 0 && tolerance_seconds > 0, "durations must be positive");
  require(seconds_to_columns(overlap_seconds) < seconds_to_columns(stripe_seconds),
          "stripe overlap must be narrower than the stripe");
  require(rank > 0 && epsilon > 0, "rank and epsilon must be positive");
  require(ratio > 1, "plausibility ratio must exceed 1");
  require(accept_fraction >= 0 && accept_fraction <= 1, "accept fraction in [0, 1]");
  require(intra_window > 0 && intra_window < negative_gap, "intra window must be positive and below the negative gap");
  require(intra_labels > 0 && inter_labels > 0, "label counts must be positive");
  require(min_coverage >= 0 && min_coverage <= 1, "min coverage in [0, 1]");
  require(chunk > 0, "chunk must be positive");
  require(kalman_q > 0 && kalman_r > 0, "Kalman variances must be positive");
}

std::size_t Config::seconds_to_columns(double seconds) const {
  const double cols = std::round(seconds * fps / static_cast<double>(stride));
  return static_cast<std::size_t>(std::max(1.0, cols));
}

tour::TourConfig Config::tour_config() const {
  tour::TourConfig t;
  t.rank = rank;
  t.stripe_cols = seconds_to_columns(stripe_seconds);
  t.overlap_cols = seconds_to_columns(overlap_seconds);
  t.tolerance = seconds_to_columns(tolerance_seconds);
  t.epsilon = epsilon;
  t.ratio = ratio;
  t.accept_fraction = accept_fraction;
  return t;
}

curriculum::CurriculumConfig Config::curriculum_config() const {
  curriculum::CurriculumConfig c;
  c.hidden_dim = hidden_dim;
  c.descriptor_dim = descriptor_dim;
  c.stride = stride;
  c.iterations = iterations;
  c.intra_labels_per_journey = intra_labels;
  c.intra_window = intra_window;
  c.negative_gap = negative_gap;
  c.inter_labels_per_tour = inter_labels;
  c.tour = tour_config();
  c.off_path_margin = off_path_margin > 0 ? off_path_margin : 3 * c.tour.tolerance;
  c.transitive_pairs = transitive_pairs;
  c.min_coverage = min_coverage;
  c.budget = budget;
  c.chunk = chunk;
  c.eval_tolerance = eval_tolerance;
  c.train.margin = margin;
  c.train.learning_rate = learning_rate;
  c.train.batch_size = batch_size;
  c.train.epochs = epochs;
  c.smooth.process_variance = kalman_q;
  c.smooth.measurement_variance = kalman_r;
  c.seed = seed;
  return c;
}

std::string Config::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += f.key + "=" + f.get(*this) + "\n";
  return out;
}

Config parse_config(const std::string& text, const std::string& origin) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError(origin + ":" + std::to_string(lineno) + ": expected key=value");
    try {
      cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ArgumentError& e) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

Config load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

}  // namespace tsync
