#include "ihp/service.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "httplib.h"
#include "ihp/eval.hpp"
#include "ihp/model.hpp"
#include "ihp/synthdata.hpp"

namespace ihp {

namespace {

namespace fs = std::filesystem;

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

bool valid_token(const std::string& s) {
  if (s.empty() || s.size() > 128 || s == "." || s == "..") return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
  });
}

std::vector<PaletteEntry> palette_of(const std::vector<std::string>& names) {
  std::vector<PaletteEntry> out;
  for (std::size_t i = 0; i < names.size(); ++i)
    out.push_back({static_cast<int>(i), names[i], class_color(static_cast<int>(i))});
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  const std::vector<std::uint8_t> bytes(text.begin(), text.end());
  write_file(path, bytes);
}

}  // namespace

nlohmann::json legend_json(const std::vector<PaletteEntry>& palette) {
  nlohmann::json out = nlohmann::json::array();
  for (const PaletteEntry& p : palette) out.push_back({{"id", p.id}, {"name", p.name}, {"color", p.color}});
  return out;
}

nlohmann::json to_json(const SessionInfo& s) {
  return {{"id", s.id},
          {"checkpoint", s.checkpoint},
          {"width", s.width},
          {"height", s.height},
          {"palette", legend_json(s.palette)},
          {"mask_version", s.mask_version},
          {"clicks", s.clicks},
          {"round", s.round},
          {"created_ms", s.created_ms},
          {"updated_ms", s.updated_ms}};
}

nlohmann::json to_json(const MaskUpdate& u) {
  return {{"mask_version", u.mask_version},
          {"clicks", u.clicks},
          {"round", u.round},
          {"latency_ms", u.latency_ms},
          {"soft_stop", u.soft_stop}};
}

SessionManager::SessionManager(ServiceConfig cfg)
    : cfg_(std::move(cfg)),
      inference_slots_(std::clamp(cfg_.max_concurrent_inference, 1, 64)),
      id_state_(std::random_device{}() ^ (static_cast<std::uint64_t>(now_ms()) << 20)) {
  fs::create_directories(cfg_.store_dir);
  restore();
}

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) const {
  std::shared_lock lock(sessions_mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) fail(ErrorKind::not_found, "unknown session");
  return it->second;
}

std::shared_ptr<const Network> SessionManager::network(const std::string& checkpoint_id,
                                                       std::vector<std::string>& names) {
  if (!valid_token(checkpoint_id)) fail(ErrorKind::not_found, "unknown checkpoint");
  std::lock_guard lock(nets_mu_);
  if (auto it = nets_.find(checkpoint_id); it != nets_.end()) {
    names = it->second.second;
    return it->second.first;
  }
  const fs::path path = cfg_.checkpoint_dir / (checkpoint_id + ".ckpt");
  if (!fs::is_regular_file(path)) fail(ErrorKind::not_found, "unknown checkpoint");
  Checkpoint ckpt = load_checkpoint(path);
  if (cfg_.catalog && *cfg_.catalog != ckpt.class_names)
    fail(ErrorKind::conflict, "checkpoint classes do not match the server catalog");
  auto net = std::make_shared<const Network>(std::move(ckpt.network));
  nets_.emplace(checkpoint_id, std::make_pair(net, ckpt.class_names));
  names = ckpt.class_names;
  return net;
}

LabelMask SessionManager::infer(const Session& s) const {
  inference_slots_.acquire();
  try {
    LabelMask out = predict(*s.net, s.image, s.clicks);
    inference_slots_.release();
    return out;
  } catch (...) {
    inference_slots_.release();
    throw;
  }
}

void SessionManager::persist(const Session& s, bool rewrite_clicks) const {
  const fs::path dir = cfg_.store_dir / s.id;
  const nlohmann::json meta = {{"id", s.id},
                               {"checkpoint", s.checkpoint},
                               {"created_ms", s.created_ms},
                               {"updated_ms", s.updated_ms},
                               {"versions", s.versions},
                               {"next_version", s.next_version}};
  if (rewrite_clicks) {
    std::string text;
    for (const Click& c : s.clicks) text += to_json(c).dump() + "\n";
    write_text(dir / "clicks.jsonl", text);
  } else {
    std::ofstream out(dir / "clicks.jsonl", std::ios::app | std::ios::binary);
    out << to_json(s.clicks.back()).dump() << "\n";
    if (!out) fail(ErrorKind::runtime, "cannot append click log");
  }
  write_text(dir / "session.json", meta.dump(2));
}

void SessionManager::restore() {
  for (const auto& entry : fs::directory_iterator(cfg_.store_dir)) {
    if (!entry.is_directory() || !fs::exists(entry.path() / "session.json")) continue;
    try {
      const auto bytes = read_file(entry.path() / "session.json");
      const auto meta = nlohmann::json::parse(bytes.begin(), bytes.end());
      auto s = std::make_shared<Session>();
      s->id = meta.at("id").get<std::string>();
      s->checkpoint = meta.at("checkpoint").get<std::string>();
      s->created_ms = meta.at("created_ms").get<std::int64_t>();
      s->updated_ms = meta.at("updated_ms").get<std::int64_t>();
      s->versions = meta.at("versions").get<std::vector<std::uint64_t>>();
      s->next_version = meta.at("next_version").get<std::uint64_t>();
      s->net = network(s->checkpoint, s->class_names);
      s->image = decode_rgb_png(read_file(entry.path() / "image.png"));
      std::ifstream log(entry.path() / "clicks.jsonl");
      for (std::string line; std::getline(log, line);)
        if (!line.empty()) s->clicks.add(click_from_json(nlohmann::json::parse(line)));
      if (s->versions.size() != s->clicks.size() + 1) fail(ErrorKind::corrupt_data, "version stack does not match log");
      s->mask = infer(*s);
      sessions_[s->id] = s;
    } catch (const std::exception& e) {
      std::cerr << "skipping stored session " << entry.path().filename().string() << ": " << e.what() << "\n";
    }
  }
}

SessionInfo SessionManager::describe(const Session& s) const {
  return {s.id,
          s.checkpoint,
          s.image.width,
          s.image.height,
          palette_of(s.class_names),
          s.versions.back(),
          s.clicks.size(),
          static_cast<int>(s.clicks.size()),
          s.created_ms,
          s.updated_ms};
}

MaskUpdate SessionManager::update_of(const Session& s, double latency_ms) const {
  return {s.versions.back(), s.clicks.size(), static_cast<int>(s.clicks.size()), latency_ms,
          static_cast<int>(s.clicks.size()) >= cfg_.soft_stop_clicks};
}

SessionInfo SessionManager::create(std::span<const std::uint8_t> image_png, const std::string& checkpoint_id) {
  auto s = std::make_shared<Session>();
  s->image = decode_rgb_png(image_png);
  s->checkpoint = checkpoint_id;
  s->net = network(checkpoint_id, s->class_names);
  {
    std::lock_guard lock(id_mu_);
    do {
      std::ostringstream os;
      os << std::hex;
      os.width(16);
      os.fill('0');
      os << Rng::mix(id_state_++);
      s->id = os.str();
    } while (fs::exists(cfg_.store_dir / s->id));
  }
  s->created_ms = s->updated_ms = now_ms();
  s->mask = infer(*s);
  s->versions = {s->next_version++};
  const fs::path dir = cfg_.store_dir / s->id;
  fs::create_directories(dir);
  write_file(dir / "image.png", encode_rgb_png(s->image));
  persist(*s, true);
  std::unique_lock lock(sessions_mu_);
  sessions_[s->id] = s;
  return describe(*s);
}

MaskUpdate SessionManager::add_click(const std::string& id, int row, int col, int class_id,
                                     std::optional<Phase> phase) {
  const auto s = find(id);
  std::lock_guard lock(s->mu);
  const auto start = std::chrono::steady_clock::now();
  if (row < 0 || col < 0 || row >= s->image.height || col >= s->image.width)
    fail(ErrorKind::invalid_argument, "click outside image");
  if (class_id < 0 || class_id >= static_cast<int>(s->class_names.size()))
    fail(ErrorKind::invalid_argument, "unknown class");
  s->clicks.add({row, col, class_id, phase.value_or(Phase::correction), static_cast<int>(s->clicks.size()) + 1});
  try {
    s->mask = infer(*s);
  } catch (...) {
    s->clicks.pop_back();
    throw;
  }
  s->versions.push_back(s->next_version++);
  s->updated_ms = now_ms();
  persist(*s, false);
  return update_of(*s, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
}

MaskUpdate SessionManager::undo(const std::string& id) {
  const auto s = find(id);
  std::lock_guard lock(s->mu);
  const auto start = std::chrono::steady_clock::now();
  if (s->clicks.empty()) fail(ErrorKind::conflict, "nothing to undo");
  const Click removed = s->clicks.back();
  s->clicks.pop_back();
  try {
    s->mask = infer(*s);
  } catch (...) {
    s->clicks.add(removed);
    throw;
  }
  s->versions.pop_back();
  s->updated_ms = now_ms();
  persist(*s, true);
  return update_of(*s, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
}

MaskSnapshot SessionManager::mask(const std::string& id, std::optional<std::uint64_t> version) const {
  const auto s = find(id);
  std::lock_guard lock(s->mu);
  return {encode_mask_png(s->mask), s->versions.back(), version && *version != s->versions.back()};
}

LabelMask SessionManager::current_mask(const std::string& id) const {
  const auto s = find(id);
  std::lock_guard lock(s->mu);
  return s->mask;
}

ClickSet SessionManager::clicks(const std::string& id) const {
  const auto s = find(id);
  std::lock_guard lock(s->mu);
  return s->clicks;
}

SessionInfo SessionManager::info(const std::string& id) const {
  const auto s = find(id);
  std::lock_guard lock(s->mu);
  return describe(*s);
}

std::vector<PaletteEntry> SessionManager::legend(const std::string& id) const {
  const auto s = find(id);
  std::lock_guard lock(s->mu);
  return palette_of(s->class_names);
}

std::vector<std::string> SessionManager::session_ids() const {
  std::shared_lock lock(sessions_mu_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

bool SessionManager::soft_stop(const std::string& id, const LabelMask* ground_truth) const {
  const auto s = find(id);
  std::lock_guard lock(s->mu);
  if (static_cast<int>(s->clicks.size()) >= cfg_.soft_stop_clicks) return true;
  return ground_truth && miou(s->mask, *ground_truth).mean >= cfg_.soft_stop_miou;
}

// ---------------------------------------------------------------------------
// HTTP

int http_status(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::invalid_argument: return 400;
    case ErrorKind::not_found: return 404;
    case ErrorKind::conflict: return 409;
    case ErrorKind::corrupt_data: return 422;
    case ErrorKind::runtime: return 500;
  }
  return 500;
}

struct HttpService::Impl {
  explicit Impl(SessionManager& m) : manager(m) {}
  SessionManager& manager;
  httplib::Server server;
};

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <class F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_json(res, http_status(e), {{"error", e.what()}});
    } catch (const nlohmann::json::exception&) {
      send_json(res, 400, {{"error", "malformed request body"}});
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error", e.what()}});
    }
  };
}

nlohmann::json parse_body(const httplib::Request& req) {
  const auto j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) fail(ErrorKind::invalid_argument, "malformed request body");
  return j;
}

int int_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number_integer())
    fail(ErrorKind::invalid_argument, std::string("missing integer field ") + key);
  return j.at(key).get<int>();
}

}  // namespace

HttpService::HttpService(SessionManager& manager) : impl_(std::make_unique<Impl>(manager)) {
  auto& srv = impl_->server;
  SessionManager& m = manager;

  srv.Get("/health", guarded([](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, {{"status", "ok"}});
          }));

  srv.Post("/sessions", guarded([&m](const httplib::Request& req, httplib::Response& res) {
             if (!req.is_multipart_form_data() || !req.has_file("image"))
               fail(ErrorKind::invalid_argument, "multipart field 'image' is required");
             if (!req.has_file("checkpoint")) fail(ErrorKind::invalid_argument, "field 'checkpoint' is required");
             const std::string& image = req.get_file_value("image").content;
             const std::vector<std::uint8_t> bytes(image.begin(), image.end());
             send_json(res, 201, to_json(m.create(bytes, req.get_file_value("checkpoint").content)));
           }));

  srv.Get(R"(/sessions/([0-9a-f]+))", guarded([&m](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, to_json(m.info(req.matches[1])));
          }));

  srv.Post(R"(/sessions/([0-9a-f]+)/clicks)", guarded([&m](const httplib::Request& req, httplib::Response& res) {
             const auto body = parse_body(req);
             std::optional<Phase> phase;
             if (body.contains("phase")) phase = phase_from_string(body.at("phase").get<std::string>());
             const MaskUpdate u = m.add_click(req.matches[1], int_field(body, "row"), int_field(body, "col"),
                                              int_field(body, "class_id"), phase);
             send_json(res, 200, to_json(u));
           }));

  srv.Post(R"(/sessions/([0-9a-f]+)/undo)", guarded([&m](const httplib::Request& req, httplib::Response& res) {
             send_json(res, 200, to_json(m.undo(req.matches[1])));
           }));

  srv.Get(R"(/sessions/([0-9a-f]+)/mask)", guarded([&m](const httplib::Request& req, httplib::Response& res) {
            std::optional<std::uint64_t> version;
            if (req.has_param("version")) {
              const std::string v = req.get_param_value("version");
              if (v.empty() || !std::all_of(v.begin(), v.end(), ::isdigit) || v.size() > 19)
                fail(ErrorKind::invalid_argument, "malformed version token");
              version = std::stoull(v);
            }
            const std::string id = req.matches[1];
            const MaskSnapshot snap = m.mask(id, version);
            res.status = 200;
            res.set_header("X-Mask-Version", std::to_string(snap.mask_version));
            res.set_header("X-Mask-Stale", snap.stale ? "true" : "false");
            res.set_header("X-Legend", "/sessions/" + id + "/legend");
            res.set_content(std::string(snap.png.begin(), snap.png.end()), "image/png");
          }));

  srv.Get(R"(/sessions/([0-9a-f]+)/legend)", guarded([&m](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, legend_json(m.legend(req.matches[1])));
          }));

  srv.Get(R"(/sessions/([0-9a-f]+)/clicks)", guarded([&m](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, to_json(m.clicks(req.matches[1])));
          }));
}

HttpService::~HttpService() { stop(); }

int HttpService::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    if (p < 0) fail(ErrorKind::runtime, "cannot bind " + host);
    return p;
  }
  if (!impl_->server.bind_to_port(host, port)) fail(ErrorKind::runtime, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpService::listen() { impl_->server.listen_after_bind(); }

void HttpService::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace ihp
