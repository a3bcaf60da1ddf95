#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <vector>

#include "ihp/clickmap.hpp"
#include "ihp/geometry.hpp"
#include "ihp/image.hpp"
#include "ihp/network.hpp"
#include "json.hpp"

namespace ihp {

struct ServiceConfig {
  std::filesystem::path store_dir = "sessions";
  std::filesystem::path checkpoint_dir = "checkpoints";  // {id}.ckpt files
  std::optional<std::vector<std::string>> catalog;       // required class names, when set
  int max_concurrent_inference = 2;
  int soft_stop_clicks = 10;
  double soft_stop_miou = 0.90;
};

struct PaletteEntry {
  int id = 0;
  std::string name;
  std::array<std::uint8_t, 3> color{};
};

struct SessionInfo {
  std::string id;
  std::string checkpoint;
  int width = 0;
  int height = 0;
  std::vector<PaletteEntry> palette;
  std::uint64_t mask_version = 0;
  std::size_t clicks = 0;
  int round = 0;
  std::int64_t created_ms = 0;
  std::int64_t updated_ms = 0;
};

struct MaskUpdate {
  std::uint64_t mask_version = 0;
  std::size_t clicks = 0;
  int round = 0;
  double latency_ms = 0.0;
  bool soft_stop = false;  // hint only
};

struct MaskSnapshot {
  std::vector<std::uint8_t> png;  // single channel, pixel = class id
  std::uint64_t mask_version = 0;
  bool stale = false;  // requested version was not current
};

nlohmann::json to_json(const SessionInfo& info);
nlohmann::json to_json(const MaskUpdate& update);
nlohmann::json legend_json(const std::vector<PaletteEntry>& palette);

/// In-process session store behind the HTTP API. Sessions live on disk
/// under store_dir/{id}/ (image.png, clicks.jsonl, session.json) and are
/// restored by replaying the click log on construction.
class SessionManager {
 public:
  explicit SessionManager(ServiceConfig cfg);

  SessionInfo create(std::span<const std::uint8_t> image_png, const std::string& checkpoint_id);
  MaskUpdate add_click(const std::string& id, int row, int col, int class_id,
                       std::optional<Phase> phase = std::nullopt);
  MaskUpdate undo(const std::string& id);
  MaskSnapshot mask(const std::string& id, std::optional<std::uint64_t> version = std::nullopt) const;
  LabelMask current_mask(const std::string& id) const;
  ClickSet clicks(const std::string& id) const;
  SessionInfo info(const std::string& id) const;
  std::vector<PaletteEntry> legend(const std::string& id) const;
  std::vector<std::string> session_ids() const;

  /// Soft-stop hint against a ground-truth mask, if one is known to the caller.
  bool soft_stop(const std::string& id, const LabelMask* ground_truth) const;

  const ServiceConfig& config() const { return cfg_; }

 private:
  struct Session {
    mutable std::mutex mu;
    std::string id;
    std::string checkpoint;
    std::shared_ptr<const Network> net;
    std::vector<std::string> class_names;
    RgbImage image;
    ClickSet clicks;
    LabelMask mask;
    std::vector<std::uint64_t> versions;  // versions.back() is current
    std::uint64_t next_version = 1;
    int round = 0;
    std::int64_t created_ms = 0;
    std::int64_t updated_ms = 0;
  };

  std::shared_ptr<Session> find(const std::string& id) const;
  std::shared_ptr<const Network> network(const std::string& checkpoint_id, std::vector<std::string>& names);
  LabelMask infer(const Session& s) const;
  void persist(const Session& s, bool rewrite_clicks) const;
  void restore();
  SessionInfo describe(const Session& s) const;
  MaskUpdate update_of(const Session& s, double latency_ms) const;

  ServiceConfig cfg_;
  mutable std::shared_mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex nets_mu_;
  std::map<std::string, std::pair<std::shared_ptr<const Network>, std::vector<std::string>>> nets_;
  mutable std::counting_semaphore<64> inference_slots_;
  std::mutex id_mu_;
  std::uint64_t id_state_;
};

/// HTTP front end: POST /sessions, POST /sessions/{id}/clicks,
/// POST /sessions/{id}/undo, GET /sessions/{id}, GET /sessions/{id}/mask,
/// GET /sessions/{id}/legend, GET /health.
class HttpService {
 public:
  explicit HttpService(SessionManager& manager);
  ~HttpService();

  /// Binds to host:port (port 0 picks a free port) and returns the port.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

int http_status(const Error& e);

}  // namespace ihp
