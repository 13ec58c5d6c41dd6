#include "flowmob/seqdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>

#include "flowmob/io.hpp"

namespace flowmob {

namespace {

constexpr double kEarthRadiusKm = 6371.0;
constexpr std::size_t kMaxReportedErrors = 10;

double to_radians(double degrees) { return degrees * std::numbers::pi / 180.0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line, char delimiter) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delimiter, start);
    if (pos == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      break;
    }
    fields.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return fields;
}

bool parse_real(std::string_view text, double& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && end == text.data() + text.size() && std::isfinite(out);
}

bool is_index_token(std::string_view token) {
  return !token.empty() && token.size() < 10 &&
         std::all_of(token.begin(), token.end(), [](char c) { return c >= '0' && c <= '9'; });
}

void add_error(IngestReport* report, std::string message) {
  if (report && report->sample_errors.size() < kMaxReportedErrors) {
    report->sample_errors.push_back(std::move(message));
  }
}

}  // namespace

double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  const double lat1 = to_radians(a.latitude);
  const double lat2 = to_radians(b.latitude);
  const double dlat = lat2 - lat1;
  const double dlon = to_radians(b.longitude - a.longitude);
  const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1) * std::cos(lat2) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(std::clamp(h, 0.0, 1.0)));
}

std::vector<double> normalize_times(std::span<const double> raw_times, double t_min,
                                    double t_max) {
  if (!(t_min < t_max)) {
    throw Error("normalize_times: degenerate time bounds (t_min must be < t_max)");
  }
  const double span = t_max - t_min;
  std::vector<double> out;
  out.reserve(raw_times.size());
  for (double t : raw_times) out.push_back((t - t_min) / span);
  return out;
}

SplitView split_train_test(const Sequence& seq) {
  if (seq.events.size() < 2) {
    throw Error("split_train_test: sequence '" + seq.user_id + "' has fewer than 2 events");
  }
  const std::span<const Event> all(seq.events);
  return {all.first(seq.split_index), all.subspan(seq.split_index)};
}

void compute_deltas(Sequence& seq) {
  const std::size_t n = seq.events.size();
  seq.delta_t.assign(n, 0.0);
  seq.delta_d.assign(n, kDistanceFloorKm);
  if (n == 0) return;
  seq.delta_t[0] = seq.events[0].time;
  for (std::size_t k = 1; k < n; ++k) {
    seq.delta_t[k] = seq.events[k].time - seq.events[k - 1].time;
    seq.delta_d[k] =
        std::max(seq.events[k].cum_distance - seq.events[k - 1].cum_distance, kDistanceFloorKm);
  }
}

RegionDataset build_dataset(std::vector<RawSequence> raw, int num_categories,
                            std::vector<std::string> vocabulary, bool spatial_mode,
                            std::size_t min_length, std::size_t* dropped_short) {
  if (num_categories <= 0) throw Error("build_dataset: vocabulary is empty");
  std::size_t dropped = 0;
  std::erase_if(raw, [&](const RawSequence& s) {
    const bool short_seq = s.raw_times.size() < std::max<std::size_t>(min_length, 1);
    dropped += short_seq ? 1 : 0;
    return short_seq;
  });
  if (dropped_short) *dropped_short = dropped;
  if (raw.empty()) throw Error("build_dataset: no sequence meets the minimum length");

  std::stable_sort(raw.begin(), raw.end(),
                   [](const RawSequence& a, const RawSequence& b) { return a.user_id < b.user_id; });

  double t_min = std::numeric_limits<double>::infinity();
  double t_max = -std::numeric_limits<double>::infinity();
  for (const auto& s : raw) {
    const std::size_t split = split_index_for(s.raw_times.size());
    for (std::size_t k = 0; k < split; ++k) {
      t_min = std::min(t_min, s.raw_times[k]);
      t_max = std::max(t_max, s.raw_times[k]);
    }
  }
  if (!(t_min < t_max)) {
    throw Error("build_dataset: degenerate region, all training timestamps are equal");
  }

  RegionDataset ds;
  ds.num_categories = num_categories;
  ds.vocabulary = std::move(vocabulary);
  ds.t_min = t_min;
  ds.t_max = t_max;
  ds.spatial_mode = spatial_mode;
  ds.sequences.reserve(raw.size());
  for (auto& s : raw) {
    Sequence seq;
    seq.user_id = std::move(s.user_id);
    const auto times = normalize_times(s.raw_times, t_min, t_max);
    seq.events.resize(times.size());
    for (std::size_t k = 0; k < times.size(); ++k) {
      Event& e = seq.events[k];
      if (s.categories[k] < 0 || s.categories[k] >= num_categories) {
        throw Error("build_dataset: category out of range for user '" + seq.user_id + "'");
      }
      e.category = s.categories[k];
      e.time = times[k];
      if (k > 0 && e.time <= seq.events[k - 1].time) {
        e.time = seq.events[k - 1].time + kTimeTieEpsilon;
      }
      e.cum_distance = spatial_mode ? s.cum_distance[k] : 0.0;
    }
    seq.split_index = split_index_for(seq.events.size());
    compute_deltas(seq);
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

std::optional<RawCheckin> parse_checkin(const std::string& line, const IngestConfig& config,
                                        std::string* reason) {
  auto fail = [&](std::string why) -> std::optional<RawCheckin> {
    if (reason) *reason = std::move(why);
    return std::nullopt;
  };
  const auto fields = split_fields(line, config.delimiter);
  auto field = [&](int column) -> std::optional<std::string_view> {
    if (column < 0 || static_cast<std::size_t>(column) >= fields.size()) return std::nullopt;
    return fields[static_cast<std::size_t>(column)];
  };

  RawCheckin rec;
  const auto user = field(config.user_column);
  const auto category = field(config.category_column);
  const auto timestamp = field(config.timestamp_column);
  if (!user || user->empty()) return fail("missing user id");
  if (!category || category->empty()) return fail("missing category");
  if (!timestamp) return fail("missing timestamp");
  rec.user_id = std::string(*user);
  rec.category = std::string(*category);
  if (!parse_real(*timestamp, rec.timestamp) || rec.timestamp < 0.0) {
    return fail("invalid timestamp '" + std::string(*timestamp) + "'");
  }
  if (config.spatial) {
    const auto lat = field(config.latitude_column);
    const auto lon = field(config.longitude_column);
    if (!lat || !lon) return fail("missing coordinate");
    if (!parse_real(*lat, rec.location.latitude) || rec.location.latitude < -90.0 ||
        rec.location.latitude > 90.0) {
      return fail("latitude out of range '" + std::string(*lat) + "'");
    }
    if (!parse_real(*lon, rec.location.longitude) || rec.location.longitude < -180.0 ||
        rec.location.longitude > 180.0) {
      return fail("longitude out of range '" + std::string(*lon) + "'");
    }
  }
  return rec;
}

RegionDataset ingest(std::span<const RawCheckin> records, const IngestConfig& config,
                     IngestReport* report) {
  if (records.empty()) throw Error("ingest: no records");

  // Integer tokens are taken as vocabulary indices; anything else gets a
  // sorted string vocabulary.
  const bool index_vocabulary = std::all_of(records.begin(), records.end(), [](const auto& r) {
    return is_index_token(r.category);
  });
  std::vector<std::string> vocabulary;
  std::map<std::string, int> token_index;
  int num_categories = 0;
  if (index_vocabulary) {
    for (const auto& r : records) num_categories = std::max(num_categories, std::stoi(r.category) + 1);
    for (int c = 0; c < num_categories; ++c) vocabulary.push_back(std::to_string(c));
  } else {
    std::set<std::string> tokens;
    for (const auto& r : records) tokens.insert(r.category);
    vocabulary.assign(tokens.begin(), tokens.end());
    for (std::size_t i = 0; i < vocabulary.size(); ++i) {
      token_index.emplace(vocabulary[i], static_cast<int>(i));
    }
    num_categories = static_cast<int>(vocabulary.size());
  }

  std::map<std::string, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < records.size(); ++i) by_user[records[i].user_id].push_back(i);

  std::vector<RawSequence> raw;
  raw.reserve(by_user.size());
  for (auto& [user, idx] : by_user) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return records[a].timestamp < records[b].timestamp;
    });
    RawSequence seq;
    seq.user_id = user;
    double travelled = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const RawCheckin& r = records[idx[k]];
      if (k > 0 && config.spatial) {
        travelled += haversine_km(records[idx[k - 1]].location, r.location);
      }
      seq.categories.push_back(index_vocabulary ? std::stoi(r.category)
                                                : token_index.at(r.category));
      seq.raw_times.push_back(r.timestamp);
      seq.cum_distance.push_back(travelled);
    }
    raw.push_back(std::move(seq));
  }

  std::size_t dropped = 0;
  RegionDataset ds = build_dataset(std::move(raw), num_categories, std::move(vocabulary),
                                   config.spatial, config.min_length, &dropped);
  if (report) report->dropped_short_sequences = dropped;
  ds.provenance = {{"source", "ingest"},
                   {"delimiter", std::string(1, config.delimiter)},
                   {"has_header", config.has_header},
                   {"columns",
                    {config.user_column, config.category_column, config.timestamp_column,
                     config.latitude_column, config.longitude_column}},
                   {"min_length", config.min_length},
                   {"spatial", config.spatial}};
  return ds;
}

RegionDataset ingest(std::istream& in, const IngestConfig& config, IngestReport* report) {
  IngestReport local;
  IngestReport& rep = report ? *report : local;
  std::vector<RawCheckin> records;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first && config.has_header) {
      first = false;
      continue;
    }
    first = false;
    if (trim(line).empty()) continue;
    ++rep.lines;
    std::string reason;
    if (auto rec = parse_checkin(line, config, &reason)) {
      records.push_back(std::move(*rec));
      ++rep.accepted;
    } else {
      ++rep.rejected;
      add_error(&rep, "line " + std::to_string(rep.lines) + ": " + reason);
    }
  }
  if (records.empty()) {
    throw Error("ingest: all " + std::to_string(rep.rejected) + " records were rejected");
  }
  return ingest(records, config, &rep);
}

void validate(const RegionDataset& ds) {
  if (!(ds.t_min < ds.t_max)) throw Error("dataset: t_min must be < t_max");
  if (ds.num_categories <= 0) throw Error("dataset: empty vocabulary");
  if (ds.num_clusters > 0 &&
      ds.cluster_thresholds.size() != static_cast<std::size_t>(ds.num_clusters - 1)) {
    throw Error("dataset: threshold count does not match cluster count");
  }
  for (std::size_t i = 1; i < ds.cluster_thresholds.size(); ++i) {
    if (!(ds.cluster_thresholds[i - 1] < ds.cluster_thresholds[i])) {
      throw Error("dataset: cluster thresholds must be strictly increasing");
    }
  }
  for (const auto& seq : ds.sequences) {
    if (seq.delta_t.size() != seq.events.size() || seq.delta_d.size() != seq.events.size()) {
      throw Error("dataset: delta lengths differ from event count for '" + seq.user_id + "'");
    }
    if (seq.split_index != split_index_for(seq.events.size())) {
      throw Error("dataset: bad split index for '" + seq.user_id + "'");
    }
    for (std::size_t k = 0; k < seq.events.size(); ++k) {
      const Event& e = seq.events[k];
      if (e.category < 0 || e.category >= ds.num_categories) {
        throw Error("dataset: category out of range for '" + seq.user_id + "'");
      }
      if (!std::isfinite(e.time) || !std::isfinite(e.cum_distance)) {
        throw Error("dataset: non-finite event for '" + seq.user_id + "'");
      }
      if (k > 0 && !(e.time > seq.events[k - 1].time)) {
        throw Error("dataset: times not strictly increasing for '" + seq.user_id + "'");
      }
      if (k > 0 && e.cum_distance < seq.events[k - 1].cum_distance) {
        throw Error("dataset: cumulative distance decreases for '" + seq.user_id + "'");
      }
    }
    if (seq.cluster >= 0 && seq.cluster >= std::max(ds.num_clusters, 1)) {
      throw Error("dataset: cluster id out of range for '" + seq.user_id + "'");
    }
  }
}

RegionDataset without_distances(RegionDataset ds) {
  ds.spatial_mode = false;
  for (auto& seq : ds.sequences) {
    for (auto& e : seq.events) e.cum_distance = 0.0;
    compute_deltas(seq);
  }
  return ds;
}

nlohmann::json dataset_to_json(const RegionDataset& ds) {
  nlohmann::json seqs = nlohmann::json::array();
  for (const auto& s : ds.sequences) {
    std::vector<int> cats;
    std::vector<double> times, dists;
    for (const auto& e : s.events) {
      cats.push_back(e.category);
      times.push_back(e.time);
      dists.push_back(e.cum_distance);
    }
    seqs.push_back({{"user", s.user_id},
                    {"split", s.split_index},
                    {"cluster", s.cluster},
                    {"category", cats},
                    {"time", times},
                    {"cum_distance", dists}});
  }
  return {{"num_categories", ds.num_categories},
          {"vocabulary", ds.vocabulary},
          {"t_min", ds.t_min},
          {"t_max", ds.t_max},
          {"num_clusters", ds.num_clusters},
          {"cluster_thresholds", ds.cluster_thresholds},
          {"spatial_mode", ds.spatial_mode},
          {"provenance", ds.provenance},
          {"sequences", std::move(seqs)}};
}

RegionDataset dataset_from_json(const nlohmann::json& j) {
  RegionDataset ds;
  try {
    ds.num_categories = j.at("num_categories").get<int>();
    ds.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    ds.t_min = j.at("t_min").get<double>();
    ds.t_max = j.at("t_max").get<double>();
    ds.num_clusters = j.at("num_clusters").get<int>();
    ds.cluster_thresholds = j.at("cluster_thresholds").get<std::vector<double>>();
    ds.spatial_mode = j.at("spatial_mode").get<bool>();
    ds.provenance = j.at("provenance");
    for (const auto& js : j.at("sequences")) {
      Sequence s;
      s.user_id = js.at("user").get<std::string>();
      s.split_index = js.at("split").get<std::size_t>();
      s.cluster = js.at("cluster").get<int>();
      const auto cats = js.at("category").get<std::vector<int>>();
      const auto times = js.at("time").get<std::vector<double>>();
      const auto dists = js.at("cum_distance").get<std::vector<double>>();
      if (cats.size() != times.size() || cats.size() != dists.size()) {
        throw Error("dataset: ragged event arrays for '" + s.user_id + "'");
      }
      s.events.resize(cats.size());
      for (std::size_t k = 0; k < cats.size(); ++k) s.events[k] = {cats[k], times[k], dists[k]};
      compute_deltas(s);
      ds.sequences.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("dataset: malformed document: ") + e.what());
  }
  validate(ds);
  return ds;
}

void save_dataset(const RegionDataset& dataset, const std::filesystem::path& path) {
  write_file_bytes(path, encode_document("flowmob-dataset", kDatasetFormatVersion,
                                         dataset_to_json(dataset)));
}

RegionDataset load_dataset(const std::filesystem::path& path) {
  return dataset_from_json(
      decode_document(read_file_bytes(path), "flowmob-dataset", kDatasetFormatVersion, path));
}

}  // namespace flowmob
