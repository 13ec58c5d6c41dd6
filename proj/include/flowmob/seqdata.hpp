#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowmob/common.hpp"
#include "json.hpp"

namespace flowmob {

struct GeoPoint {
  double latitude = 0.0;   // degrees, [-90, 90]
  double longitude = 0.0;  // degrees, [-180, 180]
};

/// One raw check-in record as read from a region file.
struct RawCheckin {
  std::string user_id;
  std::string category;  // vocabulary token
  double timestamp = 0.0;  // seconds since epoch
  GeoPoint location;
};

struct Event {
  int category = 0;
  double time = 0.0;          // normalized
  double cum_distance = 0.0;  // km travelled since the first check-in
};

/// One user's ordered events with the precomputed inter-event deltas.
///
/// delta_t[0] is the first event's normalized time and delta_d[0] is the
/// distance floor; neither is ever a prediction target.
struct Sequence {
  std::string user_id;
  std::vector<Event> events;
  std::vector<double> delta_t;
  std::vector<double> delta_d;
  std::size_t split_index = 0;  // first test event
  int cluster = -1;             // -1 until clusters are assigned

  std::size_t size() const { return events.size(); }
};

struct RegionDataset {
  std::vector<Sequence> sequences;  // sorted by user_id
  int num_categories = 0;
  std::vector<std::string> vocabulary;
  double t_min = 0.0;
  double t_max = 1.0;
  int num_clusters = 0;                   // 0 until fitted
  std::vector<double> cluster_thresholds;  // num_clusters - 1 cut points
  bool spatial_mode = true;
  nlohmann::json provenance = nlohmann::json::object();
};

/// Great-circle distance in km on a sphere of radius 6371 km.
double haversine_km(const GeoPoint& a, const GeoPoint& b);

/// Affine map (t - t_min) / (t_max - t_min). Values outside the bounds are
/// extrapolated, not clamped.
std::vector<double> normalize_times(std::span<const double> raw_times, double t_min,
                                    double t_max);

/// ceil(0.8 * n).
constexpr std::size_t split_index_for(std::size_t n) { return (4 * n + 4) / 5; }

struct SplitView {
  std::span<const Event> train;
  std::span<const Event> test;
};

SplitView split_train_test(const Sequence& seq);

/// Recomputes delta_t / delta_d from events (floors included).
void compute_deltas(Sequence& seq);

/// A user's events before normalization; shared by ingestion and the
/// synthetic generator.
struct RawSequence {
  std::string user_id;
  std::vector<int> categories;
  std::vector<double> raw_times;     // sorted ascending
  std::vector<double> cum_distance;  // km, non-decreasing
};

/// Drops short sequences, derives training-prefix time bounds, normalizes,
/// breaks time ties and computes deltas. Output is sorted by user_id.
RegionDataset build_dataset(std::vector<RawSequence> raw, int num_categories,
                            std::vector<std::string> vocabulary, bool spatial_mode,
                            std::size_t min_length = 2,
                            std::size_t* dropped_short = nullptr);

struct IngestConfig {
  char delimiter = ',';
  bool has_header = false;
  int user_column = 0;
  int category_column = 1;
  int timestamp_column = 2;
  int latitude_column = 3;   // ignored when spatial is false
  int longitude_column = 4;  // ignored when spatial is false
  std::size_t min_length = 2;
  bool spatial = true;
};

struct IngestReport {
  std::size_t lines = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t dropped_short_sequences = 0;
  std::vector<std::string> sample_errors;  // first few rejection reasons
};

/// Parses one delimiter-separated line. Returns the reason on failure.
std::optional<RawCheckin> parse_checkin(const std::string& line, const IngestConfig& config,
                                        std::string* reason = nullptr);

RegionDataset ingest(std::span<const RawCheckin> records, const IngestConfig& config,
                     IngestReport* report = nullptr);
RegionDataset ingest(std::istream& in, const IngestConfig& config,
                     IngestReport* report = nullptr);

void validate(const RegionDataset& dataset);

/// Removes the distance channel (product-style data): distances become zero
/// and the dataset is marked non-spatial.
RegionDataset without_distances(RegionDataset dataset);

nlohmann::json dataset_to_json(const RegionDataset& dataset);
RegionDataset dataset_from_json(const nlohmann::json& j);

/// Processed datasets are stored as CBOR-encoded self-describing documents.
void save_dataset(const RegionDataset& dataset, const std::filesystem::path& path);
RegionDataset load_dataset(const std::filesystem::path& path);

inline constexpr int kDatasetFormatVersion = 1;

}  // namespace flowmob
