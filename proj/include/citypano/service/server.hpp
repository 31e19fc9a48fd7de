#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "citypano/raster/mask_io.hpp"
#include "citypano/service/session.hpp"

namespace citypano {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

struct HttpReply {
    http::status status = http::status::ok;
    std::string content_type = "text/plain";
    std::string body;
};

inline std::string content_type_for(const std::string& ext) {
    if (ext == "json") return "application/json";
    if (ext == "pgm") return "image/x-portable-graymap";
    if (ext == "png") return "image/png";
    if (ext == "jpg" || ext == "jpeg") return "image/jpeg";
    return "application/octet-stream";
}

/// GET routes: /scene.json, /pano/<street>/<frame>.<ext>, /overlay/<key>.pgm.
/// A missing .pgm panorama is synthesized as the frame's building mask.
inline HttpReply serve_asset(WalkService& service, const std::string& target) {
    const WalkWorld& w = service.world();
    auto not_found = [&] { return HttpReply{http::status::not_found, "text/plain", "not found: " + target}; };
    std::string path = target.substr(0, target.find('?'));
    if (path.find("..") != std::string::npos) return {http::status::bad_request, "text/plain", "bad path"};
    try {
        if (path == "/scene.json") return {http::status::ok, "application/json", serialize_scene(w.scene)};
        if (path.rfind("/overlay/", 0) == 0 && path.size() > 13 && path.substr(path.size() - 4) == ".pgm") {
            const std::string key = path.substr(9, path.size() - 13);
            return {http::status::ok, "image/x-portable-graymap", encode_pgm(*service.overlays().get(key))};
        }
        if (path.rfind("/pano/", 0) == 0) {
            const std::string rest = path.substr(6);
            const auto slash = rest.find('/');
            const auto dot = rest.rfind('.');
            if (slash == std::string::npos || dot == std::string::npos || dot < slash) return not_found();
            const std::string street = rest.substr(0, slash);
            const std::string frame = rest.substr(slash + 1, dot - slash - 1);
            const std::string ext = rest.substr(dot + 1);
            if (!w.assets_dir.empty()) {
                const auto file = std::filesystem::path(w.assets_dir) / street / (frame + "." + ext);
                if (std::filesystem::is_regular_file(file)) {
                    std::ifstream in(file, std::ios::binary);
                    std::ostringstream ss;
                    ss << in.rdbuf();
                    return {http::status::ok, content_type_for(ext), ss.str()};
                }
            }
            const auto k = w.street_index(street);
            if (ext != "pgm" || !k) return not_found();
            const GlobalTrajectory& t = w.trajectories[*k];
            for (std::size_t i = 0; i < t.size(); ++i) {
                if (std::to_string(t.frame_id(i)) != frame) continue;
                const PanoMask m = render_building_mask(w.mesh, w.index, t.frames[i], w.overlay_width,
                                                        w.overlay_height, {w.threads, true});
                return {http::status::ok, "image/x-portable-graymap", encode_pgm({m.width, m.height, m.labels})};
            }
            return not_found();
        }
    } catch (const Error& e) {
        return {http::status::bad_request, "application/json", error_message(e).dump()};
    }
    return not_found();
}

/// WebSocket + HTTP front end. One thread per connection; each WebSocket
/// connection owns one session and handles its messages in order.
class WalkServer {
public:
    WalkServer(std::shared_ptr<WalkService> service, const std::string& address, unsigned short port)
        : service_(std::move(service)), acceptor_(ioc_) {
        const tcp::endpoint ep{net::ip::make_address(address), port};
        acceptor_.open(ep.protocol());
        acceptor_.set_option(net::socket_base::reuse_address(true));
        acceptor_.bind(ep);
        acceptor_.listen();
    }

    ~WalkServer() { stop(); }

    unsigned short port() const { return acceptor_.local_endpoint().port(); }

    void start() {
        do_accept();
        runner_ = std::thread([this] { ioc_.run(); });
    }

    /// Blocks in the caller until stop() is called from elsewhere.
    void run() {
        do_accept();
        ioc_.run();
    }

    void stop() {
        if (stopped_.exchange(true)) return;
        net::post(ioc_, [this] {
            beast::error_code ec;
            acceptor_.close(ec);
        });
        ioc_.stop();
        if (runner_.joinable()) runner_.join();
        {
            std::lock_guard lock(mutex_);
            for (const auto& s : sockets_) {
                beast::error_code ec;
                s->shutdown(tcp::socket::shutdown_both, ec);
            }
        }
        for (std::thread& t : workers_) {
            if (t.joinable()) t.join();
        }
    }

private:
    void do_accept() {
        acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
            if (ec || stopped_) return;
            auto sock = std::make_shared<tcp::socket>(std::move(socket));
            {
                std::lock_guard lock(mutex_);
                sockets_.insert(sock);
                workers_.emplace_back([this, sock] {
                    serve_connection(*sock);
                    std::lock_guard inner(mutex_);
                    sockets_.erase(sock);
                });
            }
            do_accept();
        });
    }

    void serve_connection(tcp::socket& socket) {
        beast::error_code ec;
        beast::flat_buffer buffer;
        for (;;) {
            http::request<http::string_body> req;
            http::read(socket, buffer, req, ec);
            if (ec) return;
            if (websocket::is_upgrade(req)) {
                serve_websocket(socket, req);
                return;
            }
            http::response<http::string_body> res;
            if (req.method() != http::verb::get && req.method() != http::verb::head) {
                res.result(http::status::method_not_allowed);
                res.set(http::field::content_type, "text/plain");
                res.body() = "GET only";
            } else {
                const HttpReply r = serve_asset(*service_, std::string(req.target()));
                res.result(r.status);
                res.set(http::field::content_type, r.content_type);
                if (req.method() == http::verb::get) res.body() = r.body;
            }
            res.version(req.version());
            res.set(http::field::server, "citypano");
            res.set(http::field::access_control_allow_origin, "*");
            res.keep_alive(req.keep_alive());
            res.prepare_payload();
            http::write(socket, res, ec);
            if (ec || !req.keep_alive()) {
                socket.shutdown(tcp::socket::shutdown_send, ec);
                return;
            }
        }
    }

    void serve_websocket(tcp::socket& socket, const http::request<http::string_body>& req) {
        websocket::stream<tcp::socket&> ws(socket);
        beast::error_code ec;
        ws.accept(req, ec);
        if (ec) return;
        ws.text(true);
        std::string id;
        try {
            id = service_->create_session();
            ws.write(net::buffer(service_->hello(id).dump()), ec);
        } catch (const Error& e) {
            ws.write(net::buffer(error_message(e).dump()), ec);
            ws.close(websocket::close_code::try_again_later, ec);
            return;
        }
        beast::flat_buffer buffer;
        while (!ec) {
            buffer.clear();
            ws.read(buffer, ec);
            if (ec) break;
            const json reply = service_->handle(id, beast::buffers_to_string(buffer.data()));
            ws.write(net::buffer(reply.dump()), ec);
        }
        service_->close_session(id);
    }

    std::shared_ptr<WalkService> service_;
    net::io_context ioc_;
    tcp::acceptor acceptor_;
    std::thread runner_;
    std::atomic<bool> stopped_{false};
    std::mutex mutex_;
    std::set<std::shared_ptr<tcp::socket>> sockets_;
    std::vector<std::thread> workers_;
};

} // namespace citypano
